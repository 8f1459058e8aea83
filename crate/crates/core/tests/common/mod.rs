//! Random instances, state samplers and exact step-invariant checks shared by the
//! property and acceptance suites.
#![allow(dead_code)]

use persuade_core::policy::{PolicyStep, Status};
use persuade_core::problem::lin;
use persuade_core::scalar::{one, rat, zero};
use persuade_core::{Problem, Scalar, Solver, StatePoint};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const DISCOUNTS: [(i64, i64); 6] = [(1, 4), (1, 3), (1, 2), (3, 5), (2, 3), (3, 4)];

/// A random instance with 2 to 4 actions and small-denominator payoffs (not validated
/// beyond `Problem::new`; may be trivial or have empty `Q¹`).
pub fn random_problem(r: &mut ChaCha8Rng) -> Problem {
    let n = r.gen_range(2..=4);
    let names = ["a0", "a1", "a2", "a3"];
    let actions: Vec<(&str, [Scalar; 2])> = (0..n)
        .map(|i| (names[i], [rat(r.gen_range(0..=8), 4), rat(r.gen_range(0..=8), 4)]))
        .collect();
    let target = names[r.gen_range(0..n)];
    let v = [rat(r.gen_range(1..=8), 4), rat(r.gen_range(1..=8), 4)];
    let (dn, dd) = *DISCOUNTS.choose(r).unwrap();
    Problem::new(actions, target, v, rat(dn, dd), rat(1, 2)).unwrap()
}

/// Draws instances until one has a regular policy family, then puts the prior strictly
/// inside `Q¹` (on a grid of eighths of the interval).
pub fn regular_instance(r: &mut ChaCha8Rng) -> (Problem, Solver) {
    regular_instance_of(r, random_problem)
}

/// A random instance whose principal payoffs are proportional to the target's opportunity
/// costs, `v(a*, 0) / v(a*, 1) = (m(0) − u(a*, 0)) / (m(1) − u(a*, 1))`.
pub fn symmetric_problem(r: &mut ChaCha8Rng) -> Problem {
    loop {
        let mut p = random_problem(r);
        let c = p.costs();
        if c.iter().any(|x| *x <= zero()) {
            continue;
        }
        let k = rat(r.gen_range(1..=4), 2);
        p.principal_payoff = [&c[0] * &k, &c[1] * &k];
        return p;
    }
}

/// [`regular_instance`] over instances drawn by `draw`.
pub fn regular_instance_of(r: &mut ChaCha8Rng, draw: fn(&mut ChaCha8Rng) -> Problem) -> (Problem, Solver) {
    loop {
        let p = draw(r);
        let s = Solver::new(&p).unwrap();
        if s.status != Status::Regular {
            continue;
        }
        let (lo, hi) = s.q1().unwrap().clone();
        if lo.is_integer() && hi.is_integer() {
            continue;
        }
        let prior = &lo + (&hi - &lo) * rat(r.gen_range(1..=7), 8);
        if prior <= zero() || prior >= one() {
            continue;
        }
        // Q¹ is in normalized labels.
        let raw_prior = s.problem.original_belief(&prior);
        let p = p.with_prior(raw_prior);
        let s = Solver::new(&p).unwrap();
        return (p, s);
    }
}

/// A state of `W`: belief on a 1/64 grid or a 1/16 grid of `Q¹`; promise `m`, `𝐰` or a 1/16 grid of `[m, M]`.
pub fn random_state(s: &Solver, r: &mut ChaCha8Rng) -> StatePoint {
    let env = &s.env;
    let p = match r.gen_range(0..6) {
        0 => {
            let (lo, hi) = s.q1().unwrap();
            lo + (hi - lo) * rat(r.gen_range(0..=16), 16)
        }
        _ => rat(r.gen_range(1..64), 64),
    };
    let (m, big) = (env.m(&p), env.big_m(&p));
    let w = match r.gen_range(0..5) {
        0 => m.clone(),
        1 => env.bold_w(&p).clamp(m.clone(), big.clone()),
        _ => &m + (&big - &m) * rat(r.gen_range(0..=16), 16),
    };
    StatePoint::new(p, w)
}

/// A cutoff in `Q¹`: an endpoint, an interior grid point, or `q*`.
pub fn random_cutoff(s: &Solver, r: &mut ChaCha8Rng) -> Scalar {
    let (lo, hi) = s.q1().unwrap();
    match r.gen_range(0..4) {
        0 => hi.clone(),
        1 => s.q_star().unwrap(),
        2 => lo.clone(),
        _ => lo + (hi - lo) * rat(r.gen_range(0..=8), 8),
    }
}

/// Every exact invariant of one policy step at `s`; an empty list means none failed.
pub fn step_violations(solver: &Solver, s: &StatePoint, step: &PolicyStep) -> Vec<&'static str> {
    let env = &solver.env;
    let pr = &solver.problem;
    let d = &pr.discount;
    let keep = one() - d;
    let mut out = Vec::new();
    let total = step.outcomes.iter().fold(zero(), |a, o| a + &o.prob);
    if total != one() || step.outcomes.iter().any(|o| o.prob <= zero()) {
        out.push("simplex");
    }
    let mean = step.outcomes.iter().fold(zero(), |a, o| a + &o.prob * &o.posterior);
    if mean != s.p {
        out.push("martingale");
    }
    let mut delivered = zero();
    let mut targets = 0;
    for o in &step.outcomes {
        let x = &o.posterior;
        let m = env.m(x);
        if o.promised_w < m || o.promised_w > env.big_m(x) {
            out.push("promise outside W");
        }
        let obey = &keep * lin(&pr.agent_payoff[o.action], x) + d * &o.promised_w;
        if obey < m {
            out.push("incentive compatibility");
        }
        if o.action == pr.target {
            targets += 1;
            if obey != m {
                out.push("indifference");
            }
        }
        if *x < zero() || *x > one() {
            out.push("posterior outside [0, 1]");
        }
        delivered += &o.prob * obey;
    }
    if targets > 1 {
        out.push("several target branches");
    }
    if delivered < s.w {
        out.push("promise keeping");
    }
    out
}
