//! The belief thresholds: `Q¹`, the `Q^k` ladder and its limit `Q^∞`.

use crate::envelopes::{affine_through, Affine, Envelopes};
use crate::scalar::{one, rat, zero, Scalar};
use num::Signed;

pub type Interval = (Scalar, Scalar);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LadderError {
    #[error("Q1 is empty")]
    EmptyQ1,
    #[error("ladder did not terminate within {0} levels")]
    LadderDiverged(usize),
}

/// Why the ladder construction stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LadderEnd {
    /// `Q^{k*+1} = ∅`.
    Empty { k_star: usize },
    /// `Q^{k+1} = Q^k`.
    Fixed { k: usize },
    /// Successive levels moved by less than the step bound; `Q^∞` takes over.
    Converged { k: usize },
}

#[derive(Debug, Clone)]
pub struct ThresholdLadder {
    /// `levels[k-1] = Q^k`.
    pub levels: Vec<Interval>,
    /// `chords[k-1] = U^k`, the chord from `(q̲^k, m(q̲^k))` to `(1, m(1))`.
    pub chords: Vec<Affine>,
    pub end: LadderEnd,
    pub q_inf: Option<Interval>,
}

/// Where a belief sits on the ladder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Band {
    OutsideQ1,
    /// `p ∈ Q^k \ Q^{k+1}`.
    Level(usize),
    InQInf,
    /// In the last computed level of a converged ladder but outside `Q^∞`.
    BeyondComputed(usize),
}

fn obedience_line(env: &Envelopes, cont: &Affine) -> Affine {
    let d = &env.discount;
    let keep = one() - d;
    [&keep * &env.u_star[0] + d * &cont[0], &keep * &env.u_star[1] + d * &cont[1]]
}

/// `Q¹ = {p : (1−δ)u(a*,p) + δM(p) ≥ m(p)}`.
pub fn compute_q1(env: &Envelopes) -> Option<Interval> {
    env.m.superlevel(&obedience_line(env, &env.m_line), &zero(), &one())
}

/// `Q^∞ = [p̲, q̄^∞]` when `P ≠ ∅`.
pub fn compute_q_inf(env: &Envelopes) -> Option<Interval> {
    let (p_lo, _) = env.p_interval.as_ref()?;
    let chord = affine_through(p_lo, &env.m(p_lo), &one(), &env.m_line[1]);
    let (_, hi) = env.m.superlevel(&obedience_line(env, &chord), p_lo, &one())?;
    Some((p_lo.clone(), hi))
}

pub struct LadderConfig {
    pub max_levels: usize,
    /// Convergence threshold on `|Δq̲| + |Δq̄|` when `P ≠ ∅`.
    pub step_bound: Scalar,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig { max_levels: 10_000, step_bound: rat(1, 1 << 40) }
    }
}

pub fn compute_ladder(env: &Envelopes, cfg: &LadderConfig) -> Result<ThresholdLadder, LadderError> {
    let q1 = compute_q1(env).ok_or(LadderError::EmptyQ1)?;
    let q_inf = compute_q_inf(env);
    let mut levels = vec![q1];
    let mut chords = Vec::new();
    loop {
        let k = levels.len();
        if k > cfg.max_levels {
            return Err(LadderError::LadderDiverged(cfg.max_levels));
        }
        let (lo, hi) = levels[k - 1].clone();
        let u_k = if lo == one() {
            [env.m_line[1].clone(), env.m_line[1].clone()]
        } else {
            affine_through(&lo, &env.m(&lo), &one(), &env.m_line[1])
        };
        let next = env.m.superlevel(&obedience_line(env, &u_k), &lo, &hi);
        chords.push(u_k);
        let Some((nlo, nhi)) = next else {
            return Ok(ThresholdLadder { levels, chords, end: LadderEnd::Empty { k_star: k }, q_inf });
        };
        if nlo == lo && nhi == hi {
            return Ok(ThresholdLadder { levels, chords, end: LadderEnd::Fixed { k }, q_inf });
        }
        let moved = (&nlo - &lo).abs() + (&nhi - &hi).abs();
        levels.push((nlo, nhi));
        if env.p_interval.is_some() && moved < cfg.step_bound {
            return Ok(ThresholdLadder { levels, chords, end: LadderEnd::Converged { k: k + 1 }, q_inf });
        }
    }
}

impl ThresholdLadder {
    pub fn q1(&self) -> &Interval {
        &self.levels[0]
    }

    pub fn k_star(&self) -> Option<usize> {
        match self.end {
            LadderEnd::Empty { k_star } => Some(k_star),
            _ => None,
        }
    }

    pub fn band(&self, p: &Scalar) -> Band {
        if let Some((a, b)) = &self.q_inf {
            if a <= p && p <= b {
                return Band::InQInf;
            }
        }
        let inside = |(a, b): &Interval| a <= p && p <= b;
        if !inside(&self.levels[0]) {
            return Band::OutsideQ1;
        }
        let k = self.levels.iter().take_while(|l| inside(l)).count();
        if k < self.levels.len() {
            return Band::Level(k);
        }
        match self.end {
            LadderEnd::Empty { .. } => Band::Level(k),
            LadderEnd::Fixed { .. } => Band::InQInf,
            LadderEnd::Converged { .. } => Band::BeyondComputed(k),
        }
    }

    /// First level contained in `Q^∞` widened by `eps` on both sides.
    pub fn first_level_near_q_inf(&self, eps: &Scalar) -> Option<usize> {
        let (a, b) = self.q_inf.as_ref()?;
        self.levels
            .iter()
            .position(|(lo, hi)| *lo >= a - eps && *hi <= b + eps)
            .map(|i| i + 1)
    }
}
