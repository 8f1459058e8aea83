//! Comparison policies: one-shot disclosure (KG), random full disclosure, delayed full
//! disclosure, and the first-best relaxed problem.

use crate::envelopes::Envelopes;
use crate::problem::Problem;
use crate::scalar::{format_scalar, one, to_f64, zero, Scalar};
use crate::thresholds::compute_q1;
use num::Zero;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BaselineError {
    #[error("prior {0} is outside Q1; the policy cannot induce the target even once")]
    PriorOutsideQ1(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Kg,
    Random,
    Delayed,
    FirstBest,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Kg => "kg",
            BaselineKind::Random => "random",
            BaselineKind::Delayed => "delayed",
            BaselineKind::FirstBest => "first-best",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineParams {
    /// Posterior split `(probability, posterior)` at the initial period.
    Kg { split: Vec<(Scalar, Scalar)> },
    Random { alpha: Scalar },
    /// `None` when the prior lies in `P` and no compensation is ever needed.
    Delayed { t_star: Option<u64> },
    FirstBest { alpha0: Scalar, alpha1: Scalar },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineResult {
    pub kind: BaselineKind,
    pub principal: Scalar,
    pub agent: Scalar,
    pub params: BaselineParams,
}

struct Ctx {
    problem: Problem,
    env: Envelopes,
    p: Scalar,
}

impl Ctx {
    fn new(raw: &Problem) -> Ctx {
        let problem = raw.normalize();
        let env = Envelopes::build(&problem);
        let p = problem.prior.clone();
        Ctx { problem, env, p }
    }

    fn require_q1(&self) -> Result<(), BaselineError> {
        let inside = compute_q1(&self.env).is_some_and(|(a, b)| a <= self.p && self.p <= b);
        if inside {
            Ok(())
        } else {
            Err(BaselineError::PriorOutsideQ1(format_scalar(&self.problem.original_belief(&self.p))))
        }
    }

    fn target_optimal_at_0(&self) -> bool {
        self.env.in_p(&zero())
    }
}

/// Best one-shot disclosure: the concave hull at `p₀` of `v(a*, ·)·1[P]`.
pub fn kg_value(raw: &Problem) -> BaselineResult {
    let cx = Ctx::new(raw);
    let (env, p) = (&cx.env, &cx.p);
    let agent_of = |split: &[(Scalar, Scalar)]| split.iter().fold(zero(), |acc, (l, x)| acc + l * env.m(x));
    let done = |split: Vec<(Scalar, Scalar)>| {
        let principal = split
            .iter()
            .filter(|(_, x)| env.in_p(x))
            .fold(zero(), |acc, (l, x)| acc + l * env.v_star(x));
        let agent = agent_of(&split);
        BaselineResult { kind: BaselineKind::Kg, principal, agent, params: BaselineParams::Kg { split } }
    };
    let Some((lo, hi)) = env.p_interval.clone() else {
        return done(vec![(one(), p.clone())]);
    };
    // The hull of a function vanishing off the interval P and linear on it is spanned by
    // the points 0, p̲, p̄, 1; the optimal chord uses the nearest endpoint of P.
    let hull_points = [zero(), lo.clone(), hi.clone(), one()];
    let f = |x: &Scalar| if env.in_p(x) { env.v_star(x) } else { zero() };
    let mut best: Option<(Scalar, Vec<(Scalar, Scalar)>)> = None;
    let mut consider = |split: Vec<(Scalar, Scalar)>| {
        let val = split.iter().fold(zero(), |acc, (l, x)| acc + l * f(x));
        if best.as_ref().is_none_or(|(b, _)| val > *b) {
            best = Some((val, split));
        }
    };
    consider(vec![(one(), p.clone())]);
    for a in &hull_points {
        for b in &hull_points {
            if a < p && p < b {
                let wb = (p - a) / (b - a);
                consider(vec![(one() - &wb, a.clone()), (wb, b.clone())]);
            }
        }
    }
    let (_, split) = best.unwrap();
    done(split.into_iter().filter(|(l, _)| !l.is_zero()).collect())
}

/// Full disclosure with probability `α` after each obedient period.
pub fn random_disclosure(raw: &Problem) -> Result<BaselineResult, BaselineError> {
    let cx = Ctx::new(raw);
    cx.require_q1()?;
    let (env, p, d) = (&cx.env, &cx.p, &cx.problem.discount);
    let (m, big, us) = (env.m(p), env.big_m(p), env.u_star(p));
    let vs = env.v_star(p);
    if m == us {
        return Ok(BaselineResult {
            kind: BaselineKind::Random,
            principal: vs,
            agent: m,
            params: BaselineParams::Random { alpha: zero() },
        });
    }
    let alpha = (env.bold_w(p) - &m) / (&big - &m);
    let keep = one() - d;
    let mut flow = &keep * &vs;
    if cx.target_optimal_at_0() {
        // After disclosing ω₀ the target is played forever.
        flow += d * &alpha * (one() - p) * &cx.problem.principal_payoff[0];
    }
    let principal = flow / (&keep + d * &alpha);
    Ok(BaselineResult { kind: BaselineKind::Random, principal, agent: m, params: BaselineParams::Random { alpha } })
}

/// Largest `T` with `δ^T ≥ r` for `0 < r ≤ 1`, `0 < δ < 1`.
fn largest_power_at_least(d: &Scalar, r: &Scalar) -> u64 {
    let guess = (to_f64(r).ln() / to_f64(d).ln()).floor().max(0.0) as u64;
    let pow = |t: u64| num::pow(d.clone(), t as usize);
    let mut t = guess.saturating_sub(1);
    while pow(t + 1) >= *r {
        t += 1;
    }
    while t > 0 && pow(t) < *r {
        t -= 1;
    }
    t
}

/// Obedience for `T*` periods, then full disclosure; `T*` is the largest integer meeting
/// `(1−δ^T)u(a*,p₀) + δ^T M(p₀) ≥ m(p₀)`.
pub fn delayed_disclosure(raw: &Problem) -> Result<BaselineResult, BaselineError> {
    let cx = Ctx::new(raw);
    cx.require_q1()?;
    let (env, p, d) = (&cx.env, &cx.p, &cx.problem.discount);
    let (m, big, us) = (env.m(p), env.big_m(p), env.u_star(p));
    let vs = env.v_star(p);
    if m == us {
        return Ok(BaselineResult {
            kind: BaselineKind::Delayed,
            principal: vs,
            agent: m,
            params: BaselineParams::Delayed { t_star: None },
        });
    }
    let r = (&m - &us) / (&big - &us);
    let t = largest_power_at_least(d, &r);
    let dt = num::pow(d.clone(), t as usize);
    let mut principal = (one() - &dt) * &vs;
    // Beyond the plain formula: when the target is optimal at 0 it is still played after ω₀ is revealed.
    if cx.target_optimal_at_0() {
        principal += &dt * (one() - p) * &cx.problem.principal_payoff[0];
    }
    let agent = (one() - &dt) * &us + &dt * &big;
    Ok(BaselineResult { kind: BaselineKind::Delayed, principal, agent, params: BaselineParams::Delayed { t_star: Some(t) } })
}

/// The relaxed problem keeping only the ex-ante participation constraint. Full disclosure
/// creates the budget `M(p) − m(p)`, spent first on recommending the target at posterior 0,
/// where it is cheaper per unit of principal payoff after normalization.
pub fn first_best(raw: &Problem) -> BaselineResult {
    let cx = Ctx::new(raw);
    let (env, p) = (&cx.env, &cx.p);
    let c = cx.problem.costs();
    let v = &cx.problem.principal_payoff;
    let budget = env.big_m(p) - env.m(p);
    if cx.problem.is_trivial() {
        let params = BaselineParams::FirstBest { alpha0: one(), alpha1: one() };
        return BaselineResult { kind: BaselineKind::FirstBest, principal: env.v_star(p), agent: env.m(p), params };
    }
    // The prior is interior and the instance non-trivial, so `p·c₁ > 0`.
    let cost0 = (one() - p) * &c[0];
    let (alpha0, alpha1) = if !cost0.is_zero() && budget <= cost0 {
        (&budget / &cost0, zero())
    } else {
        let a1 = (&budget - &cost0) / (p * &c[1]);
        (one(), crate::scalar::min(&one(), &a1))
    };
    let principal = p * &alpha1 * &v[1] + (one() - p) * &alpha0 * &v[0];
    let agent = env.big_m(p) - p * &alpha1 * &c[1] - (one() - p) * &alpha0 * &c[0];
    BaselineResult { kind: BaselineKind::FirstBest, principal, agent, params: BaselineParams::FirstBest { alpha0, alpha1 } }
}

/// `v(a*,0)/v(a*,1) = (m(0)−u(a*,0))/(m(1)−u(a*,1))`.
pub fn symmetric_costs(raw: &Problem) -> bool {
    let c = raw.costs();
    let v = &raw.principal_payoff;
    &v[0] * &c[1] == &v[1] * &c[0]
}

/// All four baselines; policies gated on `Q¹` report their error instead.
pub fn all(raw: &Problem) -> Vec<(BaselineKind, Result<BaselineResult, BaselineError>)> {
    vec![
        (BaselineKind::Kg, Ok(kg_value(raw))),
        (BaselineKind::Random, random_disclosure(raw)),
        (BaselineKind::Delayed, delayed_disclosure(raw)),
        (BaselineKind::FirstBest, Ok(first_best(raw))),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::examples::*;
    use crate::scalar::{int, rat};

    #[test]
    fn example1_baselines() {
        let p = example1();
        let kg = kg_value(&p);
        assert_eq!(kg.principal, zero());
        assert_eq!(kg.agent, rat(2, 3));
        let r = random_disclosure(&p).unwrap();
        assert_eq!((r.principal.clone(), r.params.clone()), (rat(4, 5), BaselineParams::Random { alpha: rat(1, 4) }));
        let d = delayed_disclosure(&p).unwrap();
        assert_eq!((d.principal.clone(), d.params.clone()), (rat(3, 4), BaselineParams::Delayed { t_star: Some(2) }));
        assert!(d.agent >= rat(2, 3));
        let fb = first_best(&p);
        // Budget 2/3 exceeds (1−p)c₀ = 1/3: α₀ = 1 and α₁ = (2/3 − 1/3)/((1/3)(3/2)) = 2/3.
        assert_eq!(fb.params, BaselineParams::FirstBest { alpha0: one(), alpha1: rat(2, 3) });
        assert_eq!(fb.principal, rat(8, 9));
        assert_eq!(fb.agent, rat(2, 3));
    }

    #[test]
    fn example2_kg_split() {
        let kg = kg_value(&example2(rat(3, 5)));
        assert_eq!(kg.principal, rat(4, 5));
        assert_eq!(kg.params, BaselineParams::Kg { split: vec![(rat(4, 5), rat(1, 2)), (rat(1, 5), one())] });
        let inside = kg_value(&example2(rat(1, 4)));
        assert_eq!(inside.principal, one());
        assert_eq!(inside.params, BaselineParams::Kg { split: vec![(one(), rat(1, 4))] });
        let r = random_disclosure(&example2(rat(1, 4))).unwrap();
        assert_eq!((r.principal, r.params), (one(), BaselineParams::Random { alpha: zero() }));
        let d = delayed_disclosure(&example2(rat(1, 4))).unwrap();
        assert_eq!(d.params, BaselineParams::Delayed { t_star: None });
    }

    #[test]
    fn outside_q1_is_reported() {
        let p = example1().with_prior(rat(9, 10));
        assert!(matches!(random_disclosure(&p), Err(BaselineError::PriorOutsideQ1(_))));
        assert!(matches!(delayed_disclosure(&p), Err(BaselineError::PriorOutsideQ1(_))));
    }

    #[test]
    fn zero_cost_at_state_zero() {
        // Target optimal at 0: m(0) = u(a*, 0).
        let p = Problem::new(
            vec![("t", [int(1), int(0)]), ("r", [int(0), int(1)])],
            "t",
            [int(1), int(3)],
            rat(1, 2),
            rat(3, 5),
        )
        .unwrap();
        let fb = first_best(&p);
        let BaselineParams::FirstBest { alpha0, alpha1 } = fb.params.clone() else { unreachable!() };
        assert_eq!(alpha0, one());
        // (M − m)/(p c₁) with M(3/5) = 1, m(3/5) = 3/5, c₁ = 1.
        assert_eq!(alpha1, rat(2, 3));
    }

    /// Brute-force maximization of the relaxed problem over a 1000 × 1000 grid of
    /// recommendation probabilities.
    fn first_best_grid(raw: &Problem) -> f64 {
        let pr = raw.normalize();
        let env = Envelopes::build(&pr);
        let p = to_f64(&pr.prior);
        let c = pr.costs().map(|x| to_f64(&x));
        let v = pr.principal_payoff.clone().map(|x| to_f64(&x));
        let budget = to_f64(&(env.big_m(&pr.prior) - env.m(&pr.prior)));
        let mut best: f64 = 0.0;
        for i in 0..=1000 {
            let a0 = i as f64 / 1000.0;
            for j in 0..=1000 {
                let a1 = j as f64 / 1000.0;
                if p * a1 * c[1] + (1.0 - p) * a0 * c[0] <= budget + 1e-12 {
                    best = best.max(p * a1 * v[1] + (1.0 - p) * a0 * v[0]);
                }
            }
        }
        best
    }

    #[test]
    fn first_best_matches_brute_force() {
        for p in [example1(), example1().with_prior(rat(1, 5)), example1().with_prior(rat(9, 20))] {
            let exact = to_f64(&first_best(&p).principal);
            let grid = first_best_grid(&p);
            assert!(grid <= exact + 1e-12 && exact - grid < 5e-3, "{exact} vs {grid}");
        }
    }

    #[test]
    fn power_search() {
        assert_eq!(largest_power_at_least(&rat(1, 2), &rat(1, 5)), 2);
        assert_eq!(largest_power_at_least(&rat(1, 2), &rat(1, 4)), 2);
        assert_eq!(largest_power_at_least(&rat(1, 2), &one()), 0);
        assert_eq!(largest_power_at_least(&rat(99, 100), &rat(1, 2)), 68);
    }
}
