//! Play paths under a disclosure policy: trajectory sampling, Monte Carlo payoffs and
//! audits of incentive compatibility, promise keeping and the belief martingale.
//!
//! Decisions are taken in exact arithmetic on a reachable-state graph built once per run;
//! sampling then walks the graph in `f64`.

use crate::baselines;
use crate::policy::{Decision, PolicyError, PolicyStep, SplitOutcome, Solver, StatePoint, Status, TDelta};
use crate::problem::lin;
use crate::scalar::{one, to_f64, zero, Scalar};
use num::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("horizon {horizon} does not exceed the learning time {t_delta}")]
    HorizonTooSmall { horizon: u32, t_delta: u32 },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("at least one path is required")]
    NoPaths,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Baseline(#[from] baselines::BaselineError),
}

/// A disclosure policy queried in normalized coordinates.
pub trait DisclosurePolicy: Sync {
    fn name(&self) -> &'static str;
    fn solver(&self) -> &Solver;
    /// `(p₀, promised agent value)` at the start of play.
    fn initial(&self) -> StatePoint;
    /// Decisions depend on the period and not only on the state.
    fn period_dependent(&self) -> bool {
        false
    }
    /// `decide` for period `t` (0-based).
    fn decide(&self, t: u32, s: &StatePoint) -> Result<Decision, PolicyError>;
    /// Finite number of target periods before degenerate absorption, when known.
    fn learning_time(&self) -> Option<u32> {
        None
    }
}

fn stay_action(solver: &Solver, p: &Scalar) -> Decision {
    Decision::Stay { action: solver.absorbed_action(p) }
}

/// `τ_q`, by default at `q = q*`.
pub struct OptimalPolicy<'a> {
    solver: &'a Solver,
    q: Option<Scalar>,
    t_delta: Option<u32>,
}

impl<'a> OptimalPolicy<'a> {
    pub fn new(solver: &'a Solver) -> Result<Self, PolicyError> {
        let q = match solver.status {
            Status::Regular => Some(solver.q_star()?),
            _ => None,
        };
        Self::build(solver, q)
    }

    pub fn with_cutoff(solver: &'a Solver, q: Scalar) -> Result<Self, PolicyError> {
        Self::build(solver, Some(q))
    }

    fn build(solver: &'a Solver, q: Option<Scalar>) -> Result<Self, PolicyError> {
        let p0 = &solver.problem.prior;
        let t_delta = match (&q, solver.status) {
            (Some(_), Status::Regular) => match solver.t_delta(p0)? {
                TDelta::Finite(k) => Some(k),
                TDelta::Unbounded => None,
            },
            _ => None,
        };
        Ok(OptimalPolicy { solver, q, t_delta })
    }
}

impl DisclosurePolicy for OptimalPolicy<'_> {
    fn name(&self) -> &'static str {
        "optimal"
    }
    fn solver(&self) -> &Solver {
        self.solver
    }
    fn initial(&self) -> StatePoint {
        let p0 = self.solver.problem.prior.clone();
        let m0 = self.solver.env.m(&p0);
        StatePoint::new(p0, m0)
    }
    fn decide(&self, _t: u32, s: &StatePoint) -> Result<Decision, PolicyError> {
        self.solver.decide(self.q.as_ref(), s)
    }
    fn learning_time(&self) -> Option<u32> {
        self.t_delta
    }
}

/// One-shot disclosure at the first period, silence afterwards.
pub struct KgPolicy<'a> {
    solver: &'a Solver,
    split: Vec<(Scalar, Scalar)>,
    agent: Scalar,
}

impl<'a> KgPolicy<'a> {
    pub fn new(solver: &'a Solver) -> Self {
        let r = baselines::kg_value(&solver.raw);
        let baselines::BaselineParams::Kg { split } = r.params else { unreachable!() };
        KgPolicy { solver, split, agent: r.agent }
    }
}

impl DisclosurePolicy for KgPolicy<'_> {
    fn name(&self) -> &'static str {
        "kg"
    }
    fn solver(&self) -> &Solver {
        self.solver
    }
    fn initial(&self) -> StatePoint {
        StatePoint::new(self.solver.problem.prior.clone(), self.agent.clone())
    }
    fn period_dependent(&self) -> bool {
        true
    }
    fn decide(&self, t: u32, s: &StatePoint) -> Result<Decision, PolicyError> {
        let env = &self.solver.env;
        if t > 0 || self.split.len() < 2 {
            return Ok(stay_action(self.solver, &s.p));
        }
        let outcomes = self
            .split
            .iter()
            .map(|(l, x)| SplitOutcome {
                prob: l.clone(),
                posterior: x.clone(),
                promised_w: env.m(x),
                action: self.solver.absorbed_action(x),
            })
            .collect();
        Ok(Decision::Split(PolicyStep { outcomes }))
    }
}

/// Full disclosure with probability `α` after every obedient period.
pub struct RandomPolicy<'a> {
    solver: &'a Solver,
    alpha: Scalar,
}

impl<'a> RandomPolicy<'a> {
    pub fn new(solver: &'a Solver) -> Result<Self, SimError> {
        let r = baselines::random_disclosure(&solver.raw)?;
        let baselines::BaselineParams::Random { alpha } = r.params else { unreachable!() };
        Ok(RandomPolicy { solver, alpha })
    }
}

impl DisclosurePolicy for RandomPolicy<'_> {
    fn name(&self) -> &'static str {
        "random"
    }
    fn solver(&self) -> &Solver {
        self.solver
    }
    fn initial(&self) -> StatePoint {
        let p0 = self.solver.problem.prior.clone();
        let m0 = self.solver.env.m(&p0);
        StatePoint::new(p0, m0)
    }
    fn decide(&self, _t: u32, s: &StatePoint) -> Result<Decision, PolicyError> {
        let (env, target) = (&self.solver.env, self.solver.problem.target);
        let p = &s.p;
        if p.is_zero() || *p == one() || self.alpha.is_zero() {
            return Ok(stay_action(self.solver, p));
        }
        let bw = env.bold_w(p);
        let obey = |prob: Scalar| SplitOutcome { prob, posterior: p.clone(), promised_w: bw.clone(), action: target };
        if s.w == env.m(p) {
            return Ok(Decision::Split(PolicyStep { outcomes: vec![obey(one())] }));
        }
        let a = &self.alpha;
        let outcomes = vec![
            SplitOutcome { prob: a * (one() - p), posterior: zero(), promised_w: env.m_line[0].clone(), action: env.best_at_0 },
            obey(one() - a),
            SplitOutcome { prob: a * p, posterior: one(), promised_w: env.m_line[1].clone(), action: env.best_at_1 },
        ];
        Ok(Decision::Split(PolicyStep { outcomes }))
    }
}

/// Target for `T*` periods, then full disclosure.
pub struct DelayedPolicy<'a> {
    solver: &'a Solver,
    t_star: Option<u64>,
}

impl<'a> DelayedPolicy<'a> {
    pub fn new(solver: &'a Solver) -> Result<Self, SimError> {
        let r = baselines::delayed_disclosure(&solver.raw)?;
        let baselines::BaselineParams::Delayed { t_star } = r.params else { unreachable!() };
        Ok(DelayedPolicy { solver, t_star })
    }

    /// Agent value with `k` target periods left before disclosure.
    fn promise(&self, k: u64) -> Scalar {
        let env = &self.solver.env;
        let p = &self.solver.problem.prior;
        let dk = num::pow(self.solver.problem.discount.clone(), k as usize);
        (one() - &dk) * env.u_star(p) + dk * env.big_m(p)
    }
}

impl DisclosurePolicy for DelayedPolicy<'_> {
    fn name(&self) -> &'static str {
        "delayed"
    }
    fn solver(&self) -> &Solver {
        self.solver
    }
    fn initial(&self) -> StatePoint {
        let p0 = self.solver.problem.prior.clone();
        let w = match self.t_star {
            Some(t) => self.promise(t),
            None => self.solver.env.m(&p0),
        };
        StatePoint::new(p0, w)
    }
    fn period_dependent(&self) -> bool {
        true
    }
    fn decide(&self, t: u32, s: &StatePoint) -> Result<Decision, PolicyError> {
        let env = &self.solver.env;
        let p = &s.p;
        let Some(t_star) = self.t_star else {
            return Ok(Decision::Stay { action: self.solver.problem.target });
        };
        if p.is_zero() || *p == one() {
            return Ok(stay_action(self.solver, p));
        }
        let t = t as u64;
        if t < t_star {
            let outcomes = vec![SplitOutcome {
                prob: one(),
                posterior: p.clone(),
                promised_w: self.promise(t_star - t - 1),
                action: self.solver.problem.target,
            }];
            return Ok(Decision::Split(PolicyStep { outcomes }));
        }
        let outcomes = vec![
            SplitOutcome { prob: one() - p, posterior: zero(), promised_w: env.m_line[0].clone(), action: env.best_at_0 },
            SplitOutcome { prob: p.clone(), posterior: one(), promised_w: env.m_line[1].clone(), action: env.best_at_1 },
        ];
        Ok(Decision::Split(PolicyStep { outcomes }))
    }
    fn learning_time(&self) -> Option<u32> {
        self.t_star.map(|t| t as u32)
    }
}

/// Never discloses anything; the agent best-replies to the prior forever.
pub struct WithholdPolicy<'a> {
    pub solver: &'a Solver,
}

impl DisclosurePolicy for WithholdPolicy<'_> {
    fn name(&self) -> &'static str {
        "withhold"
    }
    fn solver(&self) -> &Solver {
        self.solver
    }
    fn initial(&self) -> StatePoint {
        let p0 = self.solver.problem.prior.clone();
        let m0 = self.solver.env.m(&p0);
        StatePoint::new(p0, m0)
    }
    fn decide(&self, _t: u32, s: &StatePoint) -> Result<Decision, PolicyError> {
        Ok(stay_action(self.solver, &s.p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Absorption {
    Degenerate0,
    Degenerate1,
    /// Target forever at a belief in `P`.
    PAbsorbed,
    /// No further information at an interior belief outside `P`.
    Withheld,
    HorizonTruncated,
}

impl Absorption {
    pub fn name(self) -> &'static str {
        match self {
            Absorption::Degenerate0 => "degenerate-0",
            Absorption::Degenerate1 => "degenerate-1",
            Absorption::PAbsorbed => "p-absorbed",
            Absorption::Withheld => "withheld",
            Absorption::HorizonTruncated => "horizon-truncated",
        }
    }
}

#[derive(Debug, Clone)]
struct Branch {
    given1: f64,
    given0: f64,
    posterior: f64,
    promised: f64,
    action: usize,
    child: usize,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Stay { action: usize, tag: Absorption },
    Split(Vec<Branch>),
    Unexpanded,
}

/// Exact reachable states of a policy, expanded to a depth.
pub struct StateGraph {
    states: Vec<(u32, StatePoint)>,
    decisions: Vec<Option<Decision>>,
    kinds: Vec<NodeKind>,
    depth: Vec<u32>,
}

impl StateGraph {
    /// Breadth-first expansion from the policy's initial state; nodes first reached at
    /// period `max_depth` stay unexpanded.
    pub fn build(policy: &dyn DisclosurePolicy, max_depth: u32) -> Result<StateGraph, PolicyError> {
        let solver = policy.solver();
        let keyed = policy.period_dependent();
        let mut index: HashMap<(u32, StatePoint), usize> = HashMap::new();
        let mut g = StateGraph { states: Vec::new(), decisions: Vec::new(), kinds: Vec::new(), depth: Vec::new() };
        let key = |t: u32, s: &StatePoint| (if keyed { t } else { 0 }, s.clone());
        let root = policy.initial();
        index.insert(key(0, &root), 0);
        g.states.push((0, root));
        g.decisions.push(None);
        g.kinds.push(NodeKind::Unexpanded);
        g.depth.push(0);
        let mut next = 0;
        while next < g.states.len() {
            let id = next;
            next += 1;
            let (t, s) = g.states[id].clone();
            if g.depth[id] >= max_depth {
                continue;
            }
            let dec = policy.decide(t, &s)?;
            let kind = match &dec {
                Decision::Stay { action } => {
                    let tag = if s.p.is_zero() {
                        Absorption::Degenerate0
                    } else if s.p == one() {
                        Absorption::Degenerate1
                    } else if *action == solver.problem.target {
                        Absorption::PAbsorbed
                    } else {
                        Absorption::Withheld
                    };
                    NodeKind::Stay { action: *action, tag }
                }
                Decision::Split(step) => {
                    let mut branches = Vec::with_capacity(step.outcomes.len());
                    for o in &step.outcomes {
                        let child_state = StatePoint::new(o.posterior.clone(), o.promised_w.clone());
                        let k = key(t + 1, &child_state);
                        let child = match index.get(&k) {
                            Some(&c) => c,
                            None => {
                                let c = g.states.len();
                                index.insert(k, c);
                                g.states.push((t + 1, child_state));
                                g.decisions.push(None);
                                g.kinds.push(NodeKind::Unexpanded);
                                g.depth.push(g.depth[id] + 1);
                                c
                            }
                        };
                        let (given1, given0) = conditional(&o.prob, &o.posterior, &s.p);
                        branches.push(Branch {
                            given1,
                            given0,
                            posterior: to_f64(&o.posterior),
                            promised: to_f64(&o.promised_w),
                            action: o.action,
                            child,
                        });
                    }
                    NodeKind::Split(branches)
                }
            };
            g.kinds[id] = kind;
            g.decisions[id] = Some(dec);
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Expanded nodes with their state and decision.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, u32, &StatePoint, &Decision)> + '_ {
        self.states
            .iter()
            .zip(&self.decisions)
            .enumerate()
            .filter_map(|(i, ((t, s), d))| d.as_ref().map(|d| (i, *t, s, d)))
    }
}

/// One node of the unrolled signal tree (beliefs in the input labels).
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRow {
    pub node: usize,
    pub parent: Option<usize>,
    pub period: u32,
    pub signal: Option<usize>,
    /// Probability of this signal at the parent.
    pub prob: Scalar,
    pub reach: Scalar,
    pub belief: Scalar,
    pub promised_w: Scalar,
    /// Action played in this period; `None` at the root.
    pub action: Option<usize>,
    /// `split`, `stay` or `open` (not expanded within the depth).
    pub next: &'static str,
}

impl StateGraph {
    /// The reachable tree without state deduplication, `depth` periods deep.
    pub fn tree_rows(&self, solver: &Solver, depth: u32) -> Vec<TreeRow> {
        let orig = |p: &Scalar| solver.problem.original_belief(p);
        let next_kind = |id: usize, period: u32| match &self.kinds[id] {
            _ if period >= depth => "open",
            NodeKind::Split(_) => "split",
            NodeKind::Stay { .. } => "stay",
            NodeKind::Unexpanded => "open",
        };
        let root = &self.states[0].1;
        let mut rows = vec![TreeRow {
            node: 0,
            parent: None,
            period: 0,
            signal: None,
            prob: one(),
            reach: one(),
            belief: orig(&root.p),
            promised_w: root.w.clone(),
            action: None,
            next: next_kind(0, 0),
        }];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((row, id)) = stack.pop() {
            let period = rows[row].period;
            if period >= depth {
                continue;
            }
            let Some(Decision::Split(step)) = &self.decisions[id] else { continue };
            let NodeKind::Split(branches) = &self.kinds[id] else { continue };
            for (k, (o, b)) in step.outcomes.iter().zip(branches).enumerate() {
                let r = rows.len();
                rows.push(TreeRow {
                    node: r,
                    parent: Some(row),
                    period: period + 1,
                    signal: Some(k),
                    prob: o.prob.clone(),
                    reach: &rows[row].reach * &o.prob,
                    belief: orig(&o.posterior),
                    promised_w: o.promised_w.clone(),
                    action: Some(o.action),
                    next: next_kind(b.child, period + 1),
                });
                stack.push((r, b.child));
            }
        }
        rows
    }
}

/// `(P(s | ω₁), P(s | ω₀))` for a branch of probability `λ` and posterior `x` at belief `p`.
fn conditional(prob: &Scalar, x: &Scalar, p: &Scalar) -> (f64, f64) {
    let g1 = if p.is_zero() { zero() } else { prob * x / p };
    let g0 = if *p == one() { zero() } else { prob * (one() - x) / (one() - p) };
    (to_f64(&g1), to_f64(&g0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    /// 1-based period.
    pub period: u32,
    pub belief_before: f64,
    pub signal: usize,
    pub belief_after: f64,
    pub promised_w: f64,
    pub action: usize,
    pub principal_flow: f64,
    pub agent_flow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `true` for ω₁ (original labels).
    pub state_high: bool,
    pub records: Vec<PeriodRecord>,
    pub principal_total: f64,
    pub agent_total: f64,
    pub absorption: Absorption,
    /// Period whose signal produced the absorbing belief (1 if play starts absorbed).
    pub absorbed_at: u32,
    /// Bound on the payoff missing from the totals after truncation.
    pub tail_bound: f64,
}

struct Payoffs {
    discount: f64,
    v: [f64; 2],
    u: Vec<[f64; 2]>,
    target: usize,
    relabeled: bool,
}

impl Payoffs {
    fn new(solver: &Solver) -> Payoffs {
        let pr = &solver.problem;
        Payoffs {
            discount: to_f64(&pr.discount),
            v: pr.principal_payoff.clone().map(|x| to_f64(&x)),
            u: pr.agent_payoff.iter().map(|r| r.clone().map(|x| to_f64(&x))).collect(),
            target: pr.target,
            relabeled: pr.relabeled,
        }
    }

    fn flows(&self, action: usize, high: bool) -> (f64, f64) {
        let w = high as usize;
        let v = if action == self.target { self.v[w] } else { 0.0 };
        (v, self.u[action][w])
    }

    fn orig(&self, p: f64) -> f64 {
        if self.relabeled { 1.0 - p } else { p }
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// A compiled policy ready for sampling.
pub struct Simulator {
    graph: StateGraph,
    pay: Payoffs,
    prior: f64,
    horizon: u32,
}

impl Simulator {
    pub fn new(policy: &dyn DisclosurePolicy, horizon: u32) -> Result<Simulator, SimError> {
        if horizon == 0 {
            return Err(SimError::ZeroHorizon);
        }
        if let Some(t) = policy.learning_time() {
            if horizon <= t {
                return Err(SimError::HorizonTooSmall { horizon, t_delta: t });
            }
        }
        let graph = StateGraph::build(policy, horizon)?;
        let solver = policy.solver();
        Ok(Simulator { graph, pay: Payoffs::new(solver), prior: to_f64(&solver.problem.prior), horizon })
    }

    pub fn graph(&self) -> &StateGraph {
        &self.graph
    }

    /// One path with the state drawn from the prior unless `state_high` is given (normalized labels).
    fn walk(&self, rng: &mut ChaCha8Rng, state_high: Option<bool>, mut on_period: impl FnMut(&PeriodRecord)) -> Trajectory {
        let high = state_high.unwrap_or_else(|| rng.gen::<f64>() < self.prior);
        let d = self.pay.discount;
        let mut node = 0usize;
        let mut weight = 1.0 - d;
        let mut disc = 1.0;
        let (mut vp, mut va) = (0.0, 0.0);
        let mut records = Vec::new();
        let mut belief = self.prior;
        for period in 1..=self.horizon + 1 {
            match &self.graph.kinds[node] {
                NodeKind::Stay { action, tag } => {
                    let (fv, fu) = self.pay.flows(*action, high);
                    vp += disc * fv;
                    va += disc * fu;
                    let rec = PeriodRecord {
                        period,
                        belief_before: self.pay.orig(belief),
                        signal: 0,
                        belief_after: self.pay.orig(belief),
                        promised_w: to_f64(&self.graph.states[node].1.w),
                        action: *action,
                        principal_flow: fv,
                        agent_flow: fu,
                    };
                    on_period(&rec);
                    records.push(rec);
                    return self.finish(high, records, vp, va, *tag, period.saturating_sub(1).max(1), 0.0);
                }
                NodeKind::Unexpanded => {
                    let bound = disc * self.pay.v[0].max(self.pay.v[1]);
                    return self.finish(high, records, vp, va, Absorption::HorizonTruncated, period, bound);
                }
                NodeKind::Split(branches) => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = branches.len() - 1;
                    for (k, b) in branches.iter().enumerate() {
                        acc += if high { b.given1 } else { b.given0 };
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    // Zero-probability branches under this state are never chosen as the fallback.
                    while (if high { branches[pick].given1 } else { branches[pick].given0 }) == 0.0 && pick > 0 {
                        pick -= 1;
                    }
                    let b = &branches[pick];
                    let (fv, fu) = self.pay.flows(b.action, high);
                    vp += weight * fv;
                    va += weight * fu;
                    let rec = PeriodRecord {
                        period,
                        belief_before: self.pay.orig(belief),
                        signal: pick,
                        belief_after: self.pay.orig(b.posterior),
                        promised_w: b.promised,
                        action: b.action,
                        principal_flow: fv,
                        agent_flow: fu,
                    };
                    on_period(&rec);
                    records.push(rec);
                    belief = b.posterior;
                    node = b.child;
                    disc *= d;
                    weight *= d;
                }
            }
        }
        let bound = disc * self.pay.v[0].max(self.pay.v[1]);
        self.finish(high, records, vp, va, Absorption::HorizonTruncated, self.horizon + 1, bound)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        high: bool,
        records: Vec<PeriodRecord>,
        principal_total: f64,
        agent_total: f64,
        absorption: Absorption,
        absorbed_at: u32,
        tail_bound: f64,
    ) -> Trajectory {
        let state_high = high != self.pay.relabeled;
        let absorption = match (absorption, self.pay.relabeled) {
            (Absorption::Degenerate0, true) => Absorption::Degenerate1,
            (Absorption::Degenerate1, true) => Absorption::Degenerate0,
            (a, _) => a,
        };
        Trajectory { state_high, records, principal_total, agent_total, absorption, absorbed_at, tail_bound }
    }

    /// Path number `path` of the run seeded with `seed`; `state_high` fixes ω in original labels.
    pub fn run_trajectory(&self, seed: u64, path: u64, state_high: Option<bool>) -> Trajectory {
        let mut rng = path_rng(seed, path);
        let normalized = state_high.map(|h| h != self.pay.relabeled);
        self.walk(&mut rng, normalized, |_| {})
    }

    pub fn monte_carlo(&self, n_paths: u64, seed: u64, belief_periods: u32) -> Result<MonteCarlo, SimError> {
        if n_paths == 0 {
            return Err(SimError::NoPaths);
        }
        const CHUNK: u64 = 4096;
        let chunks: Vec<u64> = (0..n_paths.div_ceil(CHUNK)).collect();
        let parts: Vec<Acc> = chunks
            .par_iter()
            .map(|&c| {
                let mut acc = Acc::new(belief_periods);
                for path in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                    let mut rng = path_rng(seed, path);
                    let mut beliefs = vec![f64::NAN; belief_periods as usize];
                    let tr = self.walk(&mut rng, None, |r| {
                        if r.period <= belief_periods {
                            beliefs[r.period as usize - 1] = r.belief_after;
                        }
                    });
                    acc.add(&tr, &mut beliefs);
                }
                acc
            })
            .collect();
        let total = parts.into_iter().reduce(Acc::merge).unwrap();
        Ok(total.summary(n_paths, seed))
    }
}

#[derive(Debug, Clone)]
struct Acc {
    sum_v: f64,
    sq_v: f64,
    sum_u: f64,
    sq_u: f64,
    max_absorbed_at: u32,
    truncated: u64,
    degenerate: u64,
    belief_sum: Vec<f64>,
    belief_sq: Vec<f64>,
}

impl Acc {
    fn new(periods: u32) -> Acc {
        Acc {
            sum_v: 0.0,
            sq_v: 0.0,
            sum_u: 0.0,
            sq_u: 0.0,
            max_absorbed_at: 0,
            truncated: 0,
            degenerate: 0,
            belief_sum: vec![0.0; periods as usize],
            belief_sq: vec![0.0; periods as usize],
        }
    }

    fn add(&mut self, tr: &Trajectory, beliefs: &mut [f64]) {
        self.sum_v += tr.principal_total;
        self.sq_v += tr.principal_total * tr.principal_total;
        self.sum_u += tr.agent_total;
        self.sq_u += tr.agent_total * tr.agent_total;
        match tr.absorption {
            Absorption::HorizonTruncated => self.truncated += 1,
            Absorption::Degenerate0 | Absorption::Degenerate1 => {
                self.degenerate += 1;
                self.max_absorbed_at = self.max_absorbed_at.max(tr.absorbed_at);
            }
            _ => self.max_absorbed_at = self.max_absorbed_at.max(tr.absorbed_at),
        }
        // Absorbed paths keep their last belief.
        let mut last = tr.records.first().map_or(f64::NAN, |r| r.belief_before);
        for (k, b) in beliefs.iter_mut().enumerate() {
            if b.is_nan() {
                *b = last;
            }
            last = *b;
            self.belief_sum[k] += *b;
            self.belief_sq[k] += *b * *b;
        }
    }

    fn merge(mut self, o: Acc) -> Acc {
        self.sum_v += o.sum_v;
        self.sq_v += o.sq_v;
        self.sum_u += o.sum_u;
        self.sq_u += o.sq_u;
        self.max_absorbed_at = self.max_absorbed_at.max(o.max_absorbed_at);
        self.truncated += o.truncated;
        self.degenerate += o.degenerate;
        for (a, b) in self.belief_sum.iter_mut().zip(o.belief_sum) {
            *a += b;
        }
        for (a, b) in self.belief_sq.iter_mut().zip(o.belief_sq) {
            *a += b;
        }
        self
    }

    fn summary(self, n: u64, seed: u64) -> MonteCarlo {
        let nf = n as f64;
        let stat = |s: f64, q: f64| {
            let mean = s / nf;
            let var = if n > 1 { ((q - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
            Estimate { mean, stderr: (var / nf).sqrt() }
        };
        MonteCarlo {
            paths: n,
            seed,
            principal: stat(self.sum_v, self.sq_v),
            agent: stat(self.sum_u, self.sq_u),
            max_absorbed_at: self.max_absorbed_at,
            truncated: self.truncated,
            degenerate: self.degenerate,
            belief_by_period: self.belief_sum.iter().zip(&self.belief_sq).map(|(&s, &q)| stat(s, q)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `|mean − target| ≤ k·stderr` (with a floor for zero-variance estimates).
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub paths: u64,
    pub seed: u64,
    pub principal: Estimate,
    pub agent: Estimate,
    /// Latest period at which any non-truncated path entered its absorbing state.
    pub max_absorbed_at: u32,
    pub truncated: u64,
    pub degenerate: u64,
    /// Mean belief (original labels) after the signal of periods `1..=k`.
    pub belief_by_period: Vec<Estimate>,
}

pub fn monte_carlo_value(
    policy: &dyn DisclosurePolicy,
    n_paths: u64,
    horizon: u32,
    seed: u64,
) -> Result<MonteCarlo, SimError> {
    Simulator::new(policy, horizon)?.monte_carlo(n_paths, seed, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuditKind {
    Simplex,
    Martingale,
    OutsideW,
    IncentiveCompatibility,
    PromiseKeeping,
    SeveralTargetBranches,
    Indifference,
    StayBelowPromise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditViolation {
    pub kind: AuditKind,
    pub period: u32,
    pub state: StatePoint,
    pub branch: Option<usize>,
    pub magnitude: Scalar,
}

#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub nodes: usize,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Distinct states with at least one violation.
    pub fn flagged_states(&self) -> Vec<StatePoint> {
        let mut out: Vec<StatePoint> = Vec::new();
        for v in &self.violations {
            if !out.contains(&v.state) {
                out.push(v.state.clone());
            }
        }
        out
    }
}

/// Checks every expanded node of `graph` exactly. With `indifference`, target branches
/// must make the agent exactly indifferent between obeying and deviating.
pub fn audit_ic(solver: &Solver, graph: &StateGraph, indifference: bool) -> AuditReport {
    let env = &solver.env;
    let pr = &solver.problem;
    let d = &pr.discount;
    let keep = one() - d;
    let mut rep = AuditReport::default();
    for (_, t, s, dec) in graph.nodes() {
        rep.nodes += 1;
        let mut flag = |kind, branch, magnitude: Scalar| {
            rep.violations.push(AuditViolation { kind, period: t + 1, state: s.clone(), branch, magnitude })
        };
        match dec {
            Decision::Stay { action } => {
                let u = lin(&pr.agent_payoff[*action], &s.p);
                if u < s.w {
                    flag(AuditKind::StayBelowPromise, None, &s.w - &u);
                }
                let m = env.m(&s.p);
                if u < m {
                    flag(AuditKind::IncentiveCompatibility, None, m - u);
                }
            }
            Decision::Split(step) => {
                let mut delivered = zero();
                let mut targets = 0;
                for (k, o) in step.outcomes.iter().enumerate() {
                    let m = env.m(&o.posterior);
                    if o.promised_w < m || o.promised_w > env.big_m(&o.posterior) {
                        flag(AuditKind::OutsideW, Some(k), (&o.promised_w - &m).abs());
                    }
                    let obey = &keep * lin(&pr.agent_payoff[o.action], &o.posterior) + d * &o.promised_w;
                    if obey < m {
                        flag(AuditKind::IncentiveCompatibility, Some(k), &m - &obey);
                    }
                    if o.action == pr.target {
                        targets += 1;
                        if indifference && obey != m {
                            flag(AuditKind::Indifference, Some(k), (&obey - &m).abs());
                        }
                    }
                    delivered += &o.prob * obey;
                }
                if delivered < s.w {
                    flag(AuditKind::PromiseKeeping, None, &s.w - &delivered);
                }
                if targets > 1 {
                    flag(AuditKind::SeveralTargetBranches, None, Scalar::from_integer((targets - 1).into()));
                }
                for v in martingale_violations(step, &s.p) {
                    flag(v.0, None, v.1);
                }
            }
        }
    }
    rep
}

fn martingale_violations(step: &PolicyStep, p: &Scalar) -> Vec<(AuditKind, Scalar)> {
    let mut out = Vec::new();
    let total = step.outcomes.iter().fold(zero(), |a, o| a + &o.prob);
    let negative = step.outcomes.iter().any(|o| o.prob <= zero());
    if total != one() || negative {
        out.push((AuditKind::Simplex, (total - one()).abs()));
    }
    let mean = step.outcomes.iter().fold(zero(), |a, o| a + &o.prob * &o.posterior);
    if mean != *p {
        out.push((AuditKind::Martingale, (mean - p).abs()));
    }
    out
}

/// Tree mode: exact `Σλ = 1` and `Σλ p_s = p` at every expanded node.
pub fn audit_martingale(graph: &StateGraph) -> AuditReport {
    let mut rep = AuditReport::default();
    for (_, t, s, dec) in graph.nodes() {
        rep.nodes += 1;
        if let Decision::Split(step) = dec {
            for (kind, magnitude) in martingale_violations(step, &s.p) {
                rep.violations.push(AuditViolation { kind, period: t + 1, state: s.clone(), branch: None, magnitude });
            }
        }
    }
    rep
}

/// Path mode: mean belief after each of the first `periods` periods against the prior.
pub fn audit_martingale_paths(sim: &Simulator, n_paths: u64, seed: u64, periods: u32) -> Result<Vec<(Estimate, bool)>, SimError> {
    let mc = sim.monte_carlo(n_paths, seed, periods)?;
    let p0 = sim.pay.orig(sim.prior);
    Ok(mc.belief_by_period.into_iter().map(|e| (e, e.within(p0, 3.0))).collect())
}

/// Exact expected discounted principal payoff over the first `periods` periods of play:
/// `(lower, upper)` where the lower value drops all payoff past that point (or past an
/// unexpanded node) and the upper adds `δ^t` times the largest flow on the missing mass.
pub fn tree_value(solver: &Solver, graph: &StateGraph, periods: u32) -> (Scalar, Scalar) {
    let pr = &solver.problem;
    let d = &pr.discount;
    let vmax = crate::scalar::max(&pr.principal_payoff[0], &pr.principal_payoff[1]);
    let mut frontier: HashMap<usize, Scalar> = HashMap::from([(0, one())]);
    let mut disc = one();
    let (mut lower, mut missing) = (zero(), zero());
    for _ in 0..periods {
        let mut next: HashMap<usize, Scalar> = HashMap::new();
        for (i, mass) in frontier {
            let s = &graph.states[i].1;
            match &graph.decisions[i] {
                None => missing += &mass * &disc,
                Some(Decision::Stay { action }) => lower += &mass * &disc * pr.v(*action, &s.p),
                Some(Decision::Split(step)) => {
                    let NodeKind::Split(branches) = &graph.kinds[i] else { unreachable!() };
                    for (o, b) in step.outcomes.iter().zip(branches) {
                        let r = &mass * &o.prob;
                        lower += &r * &disc * (one() - d) * pr.v(o.action, &o.posterior);
                        *next.entry(b.child).or_insert_with(zero) += r;
                    }
                }
            }
        }
        disc *= d;
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    missing += frontier.values().fold(zero(), |a, m| a + m) * &disc;
    let upper = &lower + missing * vmax;
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::examples::example1;
    use crate::scalar::rat;

    #[test]
    fn example1_tree_is_exact() {
        let solver = Solver::new(&example1()).unwrap();
        let pol = OptimalPolicy::new(&solver).unwrap();
        let g = StateGraph::build(&pol, 20).unwrap();
        let (lo, hi) = tree_value(&solver, &g, 200);
        assert_eq!(lo, rat(1285, 1536));
        assert_eq!(hi, lo);
        assert!(audit_ic(&solver, &g, true).passed());
        assert!(audit_martingale(&g).passed());
    }

    #[test]
    fn example1_monte_carlo() {
        let solver = Solver::new(&example1()).unwrap();
        let pol = OptimalPolicy::new(&solver).unwrap();
        let sim = Simulator::new(&pol, 60).unwrap();
        let mc = sim.monte_carlo(50_000, 7, 6).unwrap();
        assert!(mc.principal.within(1285.0 / 1536.0, 3.0), "{:?}", mc.principal);
        assert!(mc.agent.within(2.0 / 3.0, 3.0), "{:?}", mc.agent);
        assert_eq!(mc.truncated, 0);
        assert_eq!(mc.degenerate, mc.paths);
        assert_eq!(mc.max_absorbed_at, 5);
        assert!(mc.belief_by_period.iter().all(|e| e.within(1.0 / 3.0, 3.0)));
        let again = sim.monte_carlo(50_000, 7, 6).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn horizon_must_exceed_learning_time() {
        let solver = Solver::new(&example1()).unwrap();
        let pol = OptimalPolicy::new(&solver).unwrap();
        assert_eq!(Simulator::new(&pol, 4).err(), Some(SimError::HorizonTooSmall { horizon: 4, t_delta: 4 }));
        assert!(Simulator::new(&pol, 5).is_ok());
    }

    #[test]
    fn baseline_trees_match_closed_forms() {
        let solver = Solver::new(&example1()).unwrap();
        let random = RandomPolicy::new(&solver).unwrap();
        let g = StateGraph::build(&random, 200).unwrap();
        let (lo, hi) = tree_value(&solver, &g, 200);
        assert!(lo <= rat(4, 5) && rat(4, 5) <= hi);
        assert!(audit_ic(&solver, &g, false).passed());
        let delayed = DelayedPolicy::new(&solver).unwrap();
        let g = StateGraph::build(&delayed, 10).unwrap();
        assert_eq!(tree_value(&solver, &g, 20).0, rat(3, 4));
        assert!(audit_ic(&solver, &g, false).passed());
        let kg = KgPolicy::new(&solver);
        let g = StateGraph::build(&kg, 10).unwrap();
        assert_eq!(tree_value(&solver, &g, 20).0, zero());
        assert!(audit_ic(&solver, &g, false).passed());
    }

    struct Corrupted<'a> {
        inner: OptimalPolicy<'a>,
        at: StatePoint,
    }

    impl DisclosurePolicy for Corrupted<'_> {
        fn name(&self) -> &'static str {
            "corrupted"
        }
        fn solver(&self) -> &Solver {
            self.inner.solver()
        }
        fn initial(&self) -> StatePoint {
            self.inner.initial()
        }
        fn decide(&self, t: u32, s: &StatePoint) -> Result<Decision, PolicyError> {
            let mut d = self.inner.decide(t, s)?;
            if *s == self.at {
                if let Decision::Split(step) = &mut d {
                    let target = self.solver().problem.target;
                    for o in step.outcomes.iter_mut().filter(|o| o.action == target) {
                        o.promised_w -= rat(1, 1000);
                    }
                }
            }
            Ok(d)
        }
    }

    #[test]
    fn lowered_promise_is_flagged_at_its_node() {
        let solver = Solver::new(&example1()).unwrap();
        let at = StatePoint::new(rat(3, 11), rat(21, 22));
        let pol = Corrupted { inner: OptimalPolicy::new(&solver).unwrap(), at: at.clone() };
        let g = StateGraph::build(&pol, 20).unwrap();
        let rep = audit_ic(&solver, &g, true);
        assert_eq!(rep.flagged_states(), vec![at]);
        assert!(rep.violations.iter().any(|v| v.kind == AuditKind::IncentiveCompatibility));
    }
}
