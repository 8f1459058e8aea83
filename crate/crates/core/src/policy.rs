//! The cutoff policies `τ_q`: regions, one-period splits, values, the optimal cutoff `q*`,
//! the optimality checks and the learning time.

use crate::envelopes::{Envelopes, SplitError};
use crate::problem::{lin, Problem};
use crate::scalar::{format_scalar, one, rat, zero, Scalar};
use crate::thresholds::{compute_ladder, Band, Interval, LadderConfig, LadderError, ThresholdLadder};
use num::{Signed, Zero};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("state ({0}, {1}) is outside the feasible set")]
    OutsideW(String, String),
    #[error("cutoff {0} outside Q1 = [{1}, {2}]")]
    InvalidCutoff(String, String, String),
    #[error("Q1 is empty: the target action can never be incentivized")]
    EmptyQ1,
    #[error("the target action is optimal at every belief")]
    Trivial,
    #[error("absorbed state: no further disclosure")]
    Absorbed,
    #[error("singular three-point split system")]
    DegenerateSystem,
    #[error("split failed: {0}")]
    Split(#[from] SplitError),
    #[error("ladder: {0}")]
    Ladder(LadderError),
    #[error("value recursion exceeded {0} steps")]
    ChainTooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StatePoint {
    pub p: Scalar,
    pub w: Scalar,
}

impl StatePoint {
    pub fn new(p: Scalar, w: Scalar) -> Self {
        StatePoint { p, w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    W1,
    W2,
    W3,
    W4,
    Absorbed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOutcome {
    pub prob: Scalar,
    pub posterior: Scalar,
    pub promised_w: Scalar,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyStep {
    pub outcomes: Vec<SplitOutcome>,
}

/// What a disclosure policy does at a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Split(PolicyStep),
    /// No further information; the agent plays `action` at the frozen belief forever.
    Stay { action: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// `P = [0, 1]`: recommend the target forever.
    Trivial,
    /// `Q¹ = ∅`: the target can never be induced; withholding is optimal.
    EmptyQ1,
    Regular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TDelta {
    Finite(u32),
    Unbounded,
}

const MAX_CHAIN: usize = 1_000_000;

/// All solution objects of one (normalized) instance.
pub struct Solver {
    /// As given (before relabeling).
    pub raw: Problem,
    pub problem: Problem,
    pub env: Envelopes,
    pub ladder: Option<ThresholdLadder>,
    pub status: Status,
    diag_memo: Mutex<HashMap<Scalar, Scalar>>,
    q_star: OnceLock<Scalar>,
}

impl Solver {
    pub fn new(raw: &Problem) -> Result<Solver, PolicyError> {
        Self::with_config(raw, &LadderConfig::default())
    }

    pub fn with_config(raw: &Problem, cfg: &LadderConfig) -> Result<Solver, PolicyError> {
        let problem = raw.normalize();
        let env = Envelopes::build(&problem);
        let (status, ladder) = if problem.is_trivial() {
            (Status::Trivial, None)
        } else {
            match compute_ladder(&env, cfg) {
                Ok(l) => (Status::Regular, Some(l)),
                Err(LadderError::EmptyQ1) => (Status::EmptyQ1, None),
                Err(e) => return Err(PolicyError::Ladder(e)),
            }
        };
        Ok(Solver {
            raw: raw.clone(),
            problem,
            env,
            ladder,
            status,
            diag_memo: Mutex::new(HashMap::new()),
            q_star: OnceLock::new(),
        })
    }

    fn require_ladder(&self) -> Result<&ThresholdLadder, PolicyError> {
        match self.status {
            Status::Trivial => Err(PolicyError::Trivial),
            Status::EmptyQ1 => Err(PolicyError::EmptyQ1),
            Status::Regular => Ok(self.ladder.as_ref().unwrap()),
        }
    }

    pub fn q1(&self) -> Option<&Interval> {
        self.ladder.as_ref().map(|l| l.q1())
    }

    fn q1_bounds(&self) -> Result<(&Scalar, &Scalar), PolicyError> {
        let (a, b) = self.require_ladder()?.q1();
        Ok((a, b))
    }

    fn check_cutoff(&self, q: &Scalar) -> Result<(), PolicyError> {
        let (lo, hi) = self.q1_bounds()?;
        if q < lo || q > hi {
            return Err(PolicyError::InvalidCutoff(format_scalar(q), format_scalar(lo), format_scalar(hi)));
        }
        Ok(())
    }

    fn check_state(&self, s: &StatePoint) -> Result<(), PolicyError> {
        let out = || PolicyError::OutsideW(format_scalar(&s.p), format_scalar(&s.w));
        if s.p.is_negative() || s.p > one() {
            return Err(out());
        }
        if s.w < self.env.m(&s.p) || s.w > self.env.big_m(&s.p) {
            return Err(out());
        }
        Ok(())
    }

    fn discount(&self) -> &Scalar {
        &self.problem.discount
    }

    /// Value of the absorbed state `(p, m(p))` with `p ∈ P ∪ {0, 1}`.
    fn absorbed_value(&self, p: &Scalar) -> Scalar {
        if self.env.in_p(p) { self.env.v_star(p) } else { zero() }
    }

    /// Action played forever at an absorbed belief.
    pub fn absorbed_action(&self, p: &Scalar) -> usize {
        if self.env.in_p(p) {
            self.problem.target
        } else if p.is_zero() {
            self.env.best_at_0
        } else if *p == one() {
            self.env.best_at_1
        } else {
            self.env.m.label_at(p).unwrap_or(self.env.best_at_0)
        }
    }

    pub fn classify(&self, q: &Scalar, s: &StatePoint) -> Result<Region, PolicyError> {
        self.check_cutoff(q)?;
        self.check_state(s)?;
        Ok(self.classify_unchecked(q, s))
    }

    fn classify_unchecked(&self, q: &Scalar, s: &StatePoint) -> Region {
        let (ql, _) = self.ladder.as_ref().unwrap().q1();
        let env = &self.env;
        let (p, w) = (&s.p, &s.w);
        let on_m = *w == env.m(p);
        if on_m && (p.is_zero() || *p == one() || env.in_p(p)) {
            return Region::Absorbed;
        }
        if p < ql && *w <= lin(&env.chord(&zero(), ql), p) {
            return Region::W1;
        }
        let below_low_chord = *w <= lin(&env.chord(ql, &one()), p);
        if p > q {
            if *w <= lin(&env.chord(q, &one()), p) {
                Region::W3
            } else if below_low_chord {
                Region::W2
            } else {
                Region::W4
            }
        } else if p >= ql && below_low_chord {
            Region::W2
        } else {
            Region::W4
        }
    }

    /// One period of `τ_q` at a non-absorbed state.
    pub fn step(&self, q: &Scalar, s: &StatePoint) -> Result<PolicyStep, PolicyError> {
        let region = self.classify(q, s)?;
        self.step_in(region, q, s)
    }

    fn step_in(&self, region: Region, q: &Scalar, s: &StatePoint) -> Result<PolicyStep, PolicyError> {
        let env = &self.env;
        let (ql, _) = self.ladder.as_ref().unwrap().q1();
        let (p, w) = (&s.p, &s.w);
        let target = self.problem.target;
        let at0 = |prob: Scalar| SplitOutcome {
            prob,
            posterior: zero(),
            promised_w: env.m_line[0].clone(),
            action: env.best_at_0,
        };
        let at1 = |prob: Scalar| SplitOutcome {
            prob,
            posterior: one(),
            promised_w: env.m_line[1].clone(),
            action: env.best_at_1,
        };
        let inner = |prob: Scalar, x: &Scalar| SplitOutcome {
            prob,
            posterior: x.clone(),
            promised_w: env.bold_w(x),
            action: target,
        };
        let outcomes = match region {
            Region::Absorbed => return Err(PolicyError::Absorbed),
            Region::W1 => vec![at0((ql - p) / ql), inner(p / ql, ql)],
            Region::W2 => {
                let sp = env.m.split(p, w)?;
                let rest = one() - &sp.lambda;
                vec![inner(sp.lambda, &sp.phi), at1(rest)]
            }
            Region::W3 => {
                let rest = (p - q) / (one() - q);
                vec![inner((one() - p) / (one() - q), q), at1(rest)]
            }
            Region::W4 => {
                let gap = env.big_m(ql) - env.m(ql);
                if gap.is_zero() {
                    return Err(PolicyError::DegenerateSystem);
                }
                let lam_l = (env.big_m(p) - w) / gap;
                let lam_1 = p - &lam_l * ql;
                let lam_0 = one() - p - &lam_l * (one() - ql);
                vec![at0(lam_0), inner(lam_l, ql), at1(lam_1)]
            }
        };
        Ok(PolicyStep { outcomes: outcomes.into_iter().filter(|o| !o.prob.is_zero()).collect() })
    }

    /// The decision of `τ_q` at `s`, covering the trivial and empty-`Q¹` instances too.
    pub fn decide(&self, q: Option<&Scalar>, s: &StatePoint) -> Result<Decision, PolicyError> {
        match self.status {
            Status::Trivial => return Ok(Decision::Stay { action: self.problem.target }),
            Status::EmptyQ1 => return Ok(Decision::Stay { action: self.absorbed_action(&s.p) }),
            Status::Regular => {}
        }
        let q = match q {
            Some(q) => q.clone(),
            None => self.q_star()?,
        };
        let region = self.classify(&q, s)?;
        if region == Region::Absorbed {
            return Ok(Decision::Stay { action: self.absorbed_action(&s.p) });
        }
        Ok(Decision::Split(self.step_in(region, &q, s)?))
    }

    /// `V_{q̄¹}(x, m(x))` for `x ∈ [q̲¹, q̄¹]`; equal to `V_q(x, m(x))` whenever `x ≤ q`.
    pub fn diag_value(&self, x: &Scalar) -> Result<Scalar, PolicyError> {
        let lad = self.require_ladder()?;
        let (_, qh) = lad.q1();
        if let Some(v) = self.diag_memo.lock().unwrap().get(x) {
            return Ok(v.clone());
        }
        let d = self.discount().clone();
        let keep = one() - &d;
        let mut trail: Vec<(Scalar, Scalar, Scalar)> = Vec::new();
        let mut acc = zero();
        let mut mult = one();
        let mut x = x.clone();
        let total = loop {
            if trail.len() > MAX_CHAIN {
                return Err(PolicyError::ChainTooLong(MAX_CHAIN));
            }
            if let Some(v) = self.diag_memo.lock().unwrap().get(&x) {
                break &acc + &mult * v;
            }
            if let Some(v) = self.q_inf_closed_form(&x) {
                break &acc + &mult * v;
            }
            trail.push((x.clone(), acc.clone(), mult.clone()));
            acc += &mult * &keep * self.env.v_star(&x);
            mult *= &d;
            let s = StatePoint::new(x.clone(), self.env.bold_w(&x));
            let region = self.classify_unchecked(qh, &s);
            let step = self.step_in(region, qh, &s)?;
            let mut next = None;
            for o in &step.outcomes {
                if o.action == self.problem.target && !o.posterior.is_zero() && o.posterior != one() {
                    next = Some(o);
                } else {
                    acc += &mult * &o.prob * self.absorbed_value(&o.posterior);
                }
            }
            match next {
                Some(o) => {
                    mult *= &o.prob;
                    x = o.posterior.clone();
                }
                None => break acc.clone(),
            }
        };
        let mut memo = self.diag_memo.lock().unwrap();
        for (xi, acc_i, mult_i) in trail {
            memo.insert(xi, (&total - acc_i) / mult_i);
        }
        Ok(total)
    }

    /// Closed form of `V(p, m(p))` on `Q^∞`.
    fn q_inf_closed_form(&self, p: &Scalar) -> Option<Scalar> {
        let (a, b) = self.ladder.as_ref()?.q_inf.as_ref()?;
        if p < a || p > b {
            return None;
        }
        let c = self.problem.costs();
        Some(self.env.v_star(p) - (self.env.m(p) - self.env.u_star(p)) / &c[1] * &self.problem.principal_payoff[1])
    }

    /// `V_q(s)`.
    pub fn value(&self, q: &Scalar, s: &StatePoint) -> Result<Scalar, PolicyError> {
        match self.status {
            Status::Trivial => {
                self.check_state(s)?;
                return Ok(self.env.v_star(&s.p));
            }
            Status::EmptyQ1 => {
                self.check_state(s)?;
                return Ok(zero());
            }
            Status::Regular => {}
        }
        let region = self.classify(q, s)?;
        if region == Region::Absorbed {
            return Ok(self.absorbed_value(&s.p));
        }
        let step = self.step_in(region, q, s)?;
        let mut v = zero();
        for o in &step.outcomes {
            if o.action == self.problem.target && !o.posterior.is_zero() && o.posterior != one() {
                v += &o.prob * self.diag_value(&o.posterior)?;
            } else {
                v += &o.prob * self.absorbed_value(&o.posterior);
            }
        }
        Ok(v)
    }

    /// `V_q(p, m(p))`.
    pub fn value_on_m(&self, q: &Scalar, p: &Scalar) -> Result<Scalar, PolicyError> {
        self.value(q, &StatePoint::new(p.clone(), self.env.m(p)))
    }

    /// Optimal value at the prior, `V_{q*}(p₀, m(p₀))`.
    pub fn optimal_value(&self) -> Result<Scalar, PolicyError> {
        let p0 = self.problem.prior.clone();
        match self.status {
            Status::Regular => self.value_on_m(&self.q_star()?, &p0),
            _ => self.value(&zero(), &StatePoint::new(p0.clone(), self.env.m(&p0))),
        }
    }

    /// `h(p) = V_{q̄¹}(p, m(p)) / (1 − p)`.
    fn slope_ratio(&self, p: &Scalar) -> Result<Scalar, PolicyError> {
        Ok(self.diag_value(p)? / (one() - p))
    }

    /// The optimal cutoff `q*`.
    ///
    /// Above `m(p)` the value factors as `V_{q̄¹}(p, w) = (1−p)/(1−φ)·V_{q̄¹}(φ, m(φ))`, with
    /// `φ` the left split point. For `p` left of the kink `κ` where the last piece of `m`
    /// starts, `φ` sweeps `[q̲¹, p)` as `w` rises, so "`w = m(p)` is best at `p`" reads
    /// `h(p) ≥ max h` over `[q̲¹, p]`. On the last piece `φ` jumps straight to `κ`, so the
    /// condition becomes `h(p) ≥ max h` over `[q̲¹, κ]`.
    pub fn q_star(&self) -> Result<Scalar, PolicyError> {
        if let Some(q) = self.q_star.get() {
            return Ok(q.clone());
        }
        let q = self.compute_q_star()?;
        Ok(self.q_star.get_or_init(|| q).clone())
    }

    /// Exact breakpoints of `h` worth snapping to.
    fn breakpoints(&self) -> Vec<Scalar> {
        let lad = self.ladder.as_ref().unwrap();
        let (ql, qh) = lad.q1();
        let mut pts: Vec<Scalar> = self.env.m.kinks().to_vec();
        for (a, b) in lad.levels.iter().take(256) {
            pts.push(a.clone());
            pts.push(b.clone());
        }
        if let Some((a, b)) = &self.env.p_interval {
            pts.push(a.clone());
            pts.push(b.clone());
        }
        if let Some((a, b)) = &lad.q_inf {
            pts.push(a.clone());
            pts.push(b.clone());
        }
        pts.retain(|x| x >= ql && x <= qh);
        pts.push(ql.clone());
        pts.push(qh.clone());
        pts.sort();
        pts.dedup();
        pts
    }

    /// Scan grid on `[a, b]`: 64 equal steps plus the breakpoints inside.
    fn scan_points(&self, a: &Scalar, b: &Scalar, snaps: &[Scalar]) -> Vec<Scalar> {
        const SCAN: i64 = 64;
        let mut pts: Vec<Scalar> = snaps.iter().filter(|x| *x >= a && *x <= b).cloned().collect();
        for i in 0..=SCAN {
            pts.push(a + (b - a) * rat(i, SCAN));
        }
        pts.sort();
        pts.dedup();
        pts
    }

    /// Largest maximizer of `h` on `[a, b]` and the maximum.
    fn rightmost_argmax(&self, a: &Scalar, b: &Scalar, snaps: &[Scalar]) -> Result<(Scalar, Scalar), PolicyError> {
        if a == b {
            return Ok((a.clone(), self.slope_ratio(a)?));
        }
        let pts = self.scan_points(a, b, snaps);
        let hs = pts.iter().map(|p| self.slope_ratio(p)).collect::<Result<Vec<_>, _>>()?;
        let best_h = hs.iter().max().unwrap().clone();
        let best = hs.iter().rposition(|h| *h == best_h).unwrap();
        let mut lo = pts[best.saturating_sub(1)].clone();
        let mut hi = pts[(best + 1).min(pts.len() - 1)].clone();
        let mut settled = Settled::default();
        for _ in 0..60 {
            if lo == hi || settled.update(&lo, &hi) {
                break;
            }
            let mid = (&lo + &hi) / Scalar::from_integer(2.into());
            let probe = (&hi - &lo) * rat(1, 1 << 10);
            let right = mid.clone() + &probe;
            if self.slope_ratio(&right)? >= self.slope_ratio(&mid)? {
                lo = mid;
            } else {
                hi = right;
            }
        }
        let mut cands: Vec<Scalar> = snaps.iter().filter(|x| **x >= lo && **x <= hi).cloned().collect();
        cands.push(crate::scalar::simplest_between(&lo, &hi));
        cands.push(lo);
        cands.push(hi);
        let mut q = pts[best].clone();
        let mut qv = best_h;
        for c in cands {
            let v = self.slope_ratio(&c)?;
            if v > qv || (v == qv && c > q) {
                q = c;
                qv = v;
            }
        }
        Ok((q, qv))
    }

    /// `sup {p ∈ [a, b] : h(p) ≥ level}`, or `None` when no scan point qualifies.
    fn last_at_least(&self, a: &Scalar, b: &Scalar, level: &Scalar, snaps: &[Scalar]) -> Result<Option<Scalar>, PolicyError> {
        let pts = self.scan_points(a, b, snaps);
        let mut found = None;
        for (i, p) in pts.iter().enumerate().rev() {
            if self.slope_ratio(p)? >= *level {
                found = Some(i);
                break;
            }
        }
        let Some(i) = found else { return Ok(None) };
        if i + 1 == pts.len() {
            return Ok(Some(pts[i].clone()));
        }
        let (mut lo, mut hi) = (pts[i].clone(), pts[i + 1].clone());
        let mut settled = Settled::default();
        for _ in 0..60 {
            if settled.update(&lo, &hi) {
                break;
            }
            let mid = (&lo + &hi) / Scalar::from_integer(2.into());
            if self.slope_ratio(&mid)? >= *level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut cands: Vec<Scalar> = snaps.iter().filter(|x| **x >= lo && **x <= hi).cloned().collect();
        cands.push(crate::scalar::simplest_between(&lo, &hi));
        let mut best = lo;
        for c in cands {
            if c > best && self.slope_ratio(&c)? >= *level {
                best = c;
            }
        }
        Ok(Some(best))
    }

    fn compute_q_star(&self) -> Result<Scalar, PolicyError> {
        let lad = self.require_ladder()?;
        let (ql, qh) = lad.q1().clone();
        // At p = 1 the feasible promise set is a single point, so the condition holds.
        if ql == qh || qh == one() {
            return Ok(qh);
        }
        let snaps = self.breakpoints();
        let xs = self.env.m.xs();
        let kappa = xs[xs.len() - 2].clone();
        let a_end = crate::scalar::max(&ql, &crate::scalar::min(&qh, &kappa));
        let (pa, h_max) = self.rightmost_argmax(&ql, &a_end, &snaps)?;
        if qh <= a_end {
            return Ok(pa);
        }
        let beyond = self.last_at_least(&a_end, &qh, &h_max, &snaps)?;
        Ok(match beyond {
            Some(b) if b > pa => b,
            _ => pa,
        })
    }

    /// Periods with a target recommendation along the longest path from `(p, m(p))` under `τ_{q*}`.
    pub fn t_delta(&self, p: &Scalar) -> Result<TDelta, PolicyError> {
        if p.is_zero() || *p == one() {
            return Ok(TDelta::Finite(0));
        }
        match self.status {
            Status::Regular => {}
            _ => return Ok(TDelta::Unbounded),
        }
        let lad = self.ladder.as_ref().unwrap();
        if lad.band(p) == Band::InQInf {
            return Ok(TDelta::Unbounded);
        }
        let q = self.q_star()?;
        let mut s = StatePoint::new(p.clone(), self.env.m(p));
        let mut count = 0u32;
        for _ in 0..MAX_CHAIN {
            let step = match self.decide(Some(&q), &s)? {
                Decision::Stay { .. } => {
                    return Ok(if s.p.is_zero() || s.p == one() { TDelta::Finite(count) } else { TDelta::Unbounded })
                }
                Decision::Split(step) => step,
            };
            let Some(o) = step.outcomes.iter().find(|o| o.action == self.problem.target && !o.posterior.is_zero() && o.posterior != one()) else {
                return Ok(TDelta::Finite(count));
            };
            count += 1;
            if lad.band(&o.posterior) == Band::InQInf {
                return Ok(TDelta::Unbounded);
            }
            s = StatePoint::new(o.posterior.clone(), o.promised_w.clone());
        }
        Err(PolicyError::ChainTooLong(MAX_CHAIN))
    }
}

/// Stops a bisection once the simplest rational inside the bracket has not changed for
/// a few halvings. Near a degenerate `Q^∞` every extra halving lengthens the target chain.
#[derive(Default)]
struct Settled {
    last: Option<Scalar>,
    runs: u32,
}

impl Settled {
    fn update(&mut self, lo: &Scalar, hi: &Scalar) -> bool {
        let c = crate::scalar::simplest_between(lo, hi);
        if self.last.as_ref() == Some(&c) {
            self.runs += 1;
        } else {
            self.last = Some(c);
            self.runs = 0;
        }
        self.runs >= 8
    }
}

/// Rational sampling grid used by [`Solver::verify_optimality`].
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub p_points: usize,
    pub w_points: usize,
    /// `(Δi, Δj)` grid offsets paired for the midpoint concavity test.
    pub offsets: Vec<(usize, isize)>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            p_points: 257,
            w_points: 65,
            offsets: vec![(0, 1), (1, 0), (1, 1), (1, -1), (16, 0), (16, 8), (64, 0), (64, -32)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub magnitude: Scalar,
    pub location: Vec<StatePoint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
    pub worst: Option<Violation>,
}

impl CheckOutcome {
    fn new(name: &'static str) -> Self {
        CheckOutcome { name, checked: 0, violations: 0, worst: None }
    }

    /// Records `lhs ≥ rhs` as a check.
    fn record(&mut self, lhs: &Scalar, rhs: &Scalar, location: impl FnOnce() -> Vec<StatePoint>) {
        self.checked += 1;
        if lhs < rhs {
            self.violations += 1;
            let magnitude = rhs - lhs;
            if self.worst.as_ref().is_none_or(|w| magnitude > w.magnitude) {
                self.worst = Some(Violation { magnitude, location: location() });
            }
        }
    }

    fn merge(mut self, other: CheckOutcome) -> CheckOutcome {
        self.checked += other.checked;
        self.violations += other.violations;
        if let Some(o) = other.worst {
            if self.worst.as_ref().is_none_or(|w| o.magnitude > w.magnitude) {
                self.worst = Some(o);
            }
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub q: Scalar,
    pub concavity: CheckOutcome,
    pub monotone_w: CheckOutcome,
    pub obedience: CheckOutcome,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.concavity.passed() && self.monotone_w.passed() && self.obedience.passed()
    }

    pub fn checks(&self) -> [&CheckOutcome; 3] {
        [&self.concavity, &self.monotone_w, &self.obedience]
    }
}

impl Solver {
    /// Grid checks of the sufficient optimality conditions for `V_q`: joint midpoint
    /// concavity, monotone decrease in `w`, and the obedience inequality on `Q¹`.
    pub fn verify_optimality(&self, q: &Scalar, cfg: &VerifyConfig) -> Result<VerifyReport, PolicyError> {
        self.check_cutoff(q)?;
        let (np, nw) = (cfg.p_points.max(2), cfg.w_points.max(2));
        let ps: Vec<Scalar> = (0..np).map(|i| rat(i as i64, (np - 1) as i64)).collect();
        let node = |i: usize, j: usize| {
            let p = &ps[i];
            let (m, big) = (self.env.m(p), self.env.big_m(p));
            let w = &m + (big - &m) * rat(j as i64, (nw - 1) as i64);
            StatePoint::new(p.clone(), w)
        };
        let grid: Vec<Vec<(StatePoint, Scalar)>> = (0..np)
            .into_par_iter()
            .map(|i| {
                (0..nw)
                    .map(|j| {
                        let s = node(i, j);
                        let v = self.value(q, &s)?;
                        Ok((s, v))
                    })
                    .collect::<Result<Vec<_>, PolicyError>>()
            })
            .collect::<Result<_, _>>()?;
        let two = Scalar::from_integer(2.into());

        let concavity = (0..np)
            .into_par_iter()
            .map(|i| {
                let mut out = CheckOutcome::new("midpoint concavity");
                for j in 0..nw {
                    for &(di, dj) in &cfg.offsets {
                        let (i2, j2) = (i + di, j as isize + dj);
                        if i2 >= np || j2 < 0 || j2 as usize >= nw {
                            continue;
                        }
                        let (a, va) = &grid[i][j];
                        let (b, vb) = &grid[i2][j2 as usize];
                        let mid = StatePoint::new((&a.p + &b.p) / &two, (&a.w + &b.w) / &two);
                        let vm = self.value(q, &mid)?;
                        out.record(&vm, &((va + vb) / &two), || vec![a.clone(), mid.clone(), b.clone()]);
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, PolicyError>>()?
            .into_iter()
            .fold(CheckOutcome::new("midpoint concavity"), CheckOutcome::merge);

        let mut monotone_w = CheckOutcome::new("decreasing in w");
        for col in &grid {
            for pair in col.windows(2) {
                let ((_, v0), (s1, v1)) = (&pair[0], &pair[1]);
                if pair[0].0 != pair[1].0 {
                    monotone_w.record(v0, v1, || vec![pair[0].0.clone(), s1.clone()]);
                }
            }
        }

        let (ql, qh) = self.q1_bounds()?;
        let d = self.discount();
        let obedience = ps
            .par_iter()
            .filter(|p| *p >= ql && *p <= qh)
            .map(|p| {
                let mut out = CheckOutcome::new("obedience inequality");
                let on_m = StatePoint::new(p.clone(), self.env.m(p));
                let promise = StatePoint::new(p.clone(), self.env.bold_w(p));
                let lhs = self.value(q, &on_m)?;
                let rhs = (one() - d) * self.env.v_star(p) + d * self.value(q, &promise)?;
                out.record(&lhs, &rhs, || vec![on_m.clone(), promise.clone()]);
                Ok(out)
            })
            .collect::<Result<Vec<_>, PolicyError>>()?
            .into_iter()
            .fold(CheckOutcome::new("obedience inequality"), CheckOutcome::merge);

        Ok(VerifyReport { q: q.clone(), concavity, monotone_w, obedience })
    }
}
