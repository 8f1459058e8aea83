//! Piecewise-linear envelopes: the static best-reply payoff `m`, the full-information
//! line `M`, the static-optimality interval `P`, the indifference promise and `m̄_q`.

use crate::problem::{lin, Problem};
use crate::scalar::{one, zero, Scalar};
use num::{Signed, Zero};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("belief {0} outside [0, 1]")]
    OutOfDomain(String),
    #[error("cutoffs must satisfy 0 <= q_low <= q <= 1 (got {0}, {1})")]
    InvalidCutoffs(String, String),
    #[error("kinks are not strictly increasing or slopes decrease")]
    NotConvex,
}

/// An affine function of the belief, stored by its values at `p = 0` and `p = 1`.
pub type Affine = [Scalar; 2];

/// The affine function through `(a, fa)` and `(b, fb)`, `a != b`.
pub fn affine_through(a: &Scalar, fa: &Scalar, b: &Scalar, fb: &Scalar) -> Affine {
    let slope = (fb - fa) / (b - a);
    let at0 = fa - &slope * a;
    let at1 = &at0 + &slope;
    [at0, at1]
}

/// Convex piecewise-linear function on `[0, 1]` given by its kinks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiecewiseLinearConvex {
    xs: Vec<Scalar>,
    ys: Vec<Scalar>,
    /// Maximizing action per piece, when built as an upper envelope of action lines.
    labels: Vec<Option<usize>>,
}

impl PiecewiseLinearConvex {
    pub fn from_points(
        xs: Vec<Scalar>,
        ys: Vec<Scalar>,
        labels: Vec<Option<usize>>,
    ) -> Result<Self, EnvelopeError> {
        let n = xs.len();
        if n < 2 || ys.len() != n || labels.len() != n - 1 || !xs[0].is_zero() || xs[n - 1] != one() {
            return Err(EnvelopeError::NotConvex);
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EnvelopeError::NotConvex);
        }
        let f = PiecewiseLinearConvex { xs, ys, labels };
        if (1..n - 1).any(|i| f.slope(i - 1) > f.slope(i)) {
            return Err(EnvelopeError::NotConvex);
        }
        Ok(f)
    }

    /// Upper envelope of the lines `p ↦ l[0] + (l[1] − l[0]) p`; ties go to the lower index.
    pub fn upper_envelope(lines: &[Affine]) -> Self {
        assert!(!lines.is_empty());
        let mut cuts = vec![zero(), one()];
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let si = &lines[i][1] - &lines[i][0];
                let sj = &lines[j][1] - &lines[j][0];
                if si == sj {
                    continue;
                }
                let x = (&lines[j][0] - &lines[i][0]) / (&si - &sj);
                if x.is_positive() && x < one() {
                    cuts.push(x);
                }
            }
        }
        cuts.sort();
        cuts.dedup();
        let best_at = |p: &Scalar| {
            let mut best = 0;
            let mut val = lin(&lines[0], p);
            for (k, l) in lines.iter().enumerate().skip(1) {
                let v = lin(l, p);
                if v > val {
                    best = k;
                    val = v;
                }
            }
            best
        };
        let mut xs = vec![zero()];
        let mut labels: Vec<Option<usize>> = Vec::new();
        for w in cuts.windows(2) {
            let mid = (&w[0] + &w[1]) / Scalar::from_integer(2.into());
            let b = best_at(&mid);
            if labels.last() == Some(&Some(b)) {
                *xs.last_mut().unwrap() = w[1].clone();
            } else {
                labels.push(Some(b));
                xs.push(w[1].clone());
            }
        }
        let ys = (0..xs.len())
            .map(|i| {
                let piece = if i == 0 { 0 } else { i - 1 };
                lin(&lines[labels[piece].unwrap()], &xs[i])
            })
            .collect();
        PiecewiseLinearConvex { xs, ys, labels }
    }

    pub fn xs(&self) -> &[Scalar] {
        &self.xs
    }

    pub fn ys(&self) -> &[Scalar] {
        &self.ys
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn pieces(&self) -> usize {
        self.labels.len()
    }

    pub fn slope(&self, piece: usize) -> Scalar {
        (&self.ys[piece + 1] - &self.ys[piece]) / (&self.xs[piece + 1] - &self.xs[piece])
    }

    /// Interior breakpoints.
    pub fn kinks(&self) -> &[Scalar] {
        &self.xs[1..self.xs.len() - 1]
    }

    /// Index of the piece `[x_i, x_{i+1})` containing `p` (the last piece is closed).
    pub fn piece_at(&self, p: &Scalar) -> usize {
        let n = self.labels.len();
        match self.xs[1..n].binary_search(p) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
    }

    /// Index of the piece `(x_i, x_{i+1}]` containing `p > 0`.
    pub fn piece_left_of(&self, p: &Scalar) -> usize {
        match self.xs.binary_search(p) {
            Ok(i) => i.saturating_sub(1),
            Err(i) => i - 1,
        }
    }

    pub fn eval(&self, p: &Scalar) -> Result<Scalar, EnvelopeError> {
        if p.is_negative() || *p > one() {
            return Err(EnvelopeError::OutOfDomain(crate::scalar::format_scalar(p)));
        }
        Ok(self.at(p))
    }

    /// Evaluation without the domain check; callers guarantee `p ∈ [0, 1]`.
    pub fn at(&self, p: &Scalar) -> Scalar {
        let i = self.piece_at(p);
        if *p == self.xs[i] {
            return self.ys[i].clone();
        }
        &self.ys[i] + self.slope(i) * (p - &self.xs[i])
    }

    /// Label of the piece containing `p`.
    pub fn label_at(&self, p: &Scalar) -> Option<usize> {
        self.labels[self.piece_at(p)]
    }

    /// `{p ∈ [lo, hi] : line(p) ≥ self(p)}`, an interval since the difference is concave.
    pub fn superlevel(&self, line: &Affine, lo: &Scalar, hi: &Scalar) -> Option<(Scalar, Scalar)> {
        if lo > hi {
            return None;
        }
        let mut pts = vec![lo.clone()];
        pts.extend(self.kinks().iter().filter(|k| *k > lo && *k < hi).cloned());
        if hi > lo {
            pts.push(hi.clone());
        }
        let g: Vec<Scalar> = pts.iter().map(|x| lin(line, x) - self.at(x)).collect();
        let first = g.iter().position(|v| !v.is_negative())?;
        let last = g.iter().rposition(|v| !v.is_negative()).unwrap();
        let root = |a: usize, b: usize| {
            // g changes sign between pts[a] and pts[b]; g is linear there.
            let (xa, xb, ga, gb) = (&pts[a], &pts[b], &g[a], &g[b]);
            xa + (xb - xa) * (-ga) / (gb - ga)
        };
        let left = if first == 0 { pts[0].clone() } else { root(first - 1, first) };
        let right = if last == pts.len() - 1 { pts[last].clone() } else { root(last + 1, last) };
        Some((left, right))
    }
}

/// Splitting of `(p, w)` into `(φ, f(φ))` with weight `λ` and `(1, f(1))` with weight `1 − λ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub lambda: Scalar,
    pub phi: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("promise above the full-information line: no intersection")]
    NoIntersection,
    #[error("degenerate line at p = 1 with w > m(1)")]
    DegenerateLine,
    #[error("promise below the envelope")]
    BelowEnvelope,
}

impl PiecewiseLinearConvex {
    /// Intersects the line through `(p, w)` and `(1, f(1))` with the graph of `f` left of `p`.
    pub fn split(&self, p: &Scalar, w: &Scalar) -> Result<Split, SplitError> {
        let fp = self.at(p);
        if *w == fp {
            return Ok(Split { lambda: one(), phi: p.clone() });
        }
        if *w < fp {
            return Err(SplitError::BelowEnvelope);
        }
        if *p == one() {
            return Err(SplitError::DegenerateLine);
        }
        let f1 = self.ys.last().unwrap();
        let s = (f1 - w) / (one() - p);
        let d = |x: &Scalar, fx: &Scalar| fx - (f1 + &s * (x - one()));
        // d(p) < 0; scan kinks right to left for the first x with d(x) ≥ 0.
        let mut right_x = p.clone();
        let mut right_d = &fp - w;
        let start = self.piece_left_of(p);
        for i in (0..=start).rev() {
            let x = &self.xs[i];
            if *x >= *p {
                continue;
            }
            let dx = d(x, &self.ys[i]);
            if !dx.is_negative() {
                let phi = x + (&right_x - x) * &dx / (&dx - &right_d);
                let lambda = (one() - p) / (one() - &phi);
                return Ok(Split { lambda, phi });
            }
            right_x = x.clone();
            right_d = dx;
        }
        Err(SplitError::NoIntersection)
    }
}

/// The envelopes of a (normalized) problem.
#[derive(Debug, Clone)]
pub struct Envelopes {
    pub m: PiecewiseLinearConvex,
    /// `(m(0), m(1))`, i.e. the full-information line `M`.
    pub m_line: Affine,
    pub u_star: Affine,
    pub v_star: Affine,
    pub discount: Scalar,
    /// `[p̲, p̄]` where the target action is statically optimal.
    pub p_interval: Option<(Scalar, Scalar)>,
    /// Static best replies at the degenerate beliefs (the target when it is optimal there).
    pub best_at_0: usize,
    pub best_at_1: usize,
    pub target: usize,
}

impl Envelopes {
    pub fn build(problem: &Problem) -> Envelopes {
        let m = PiecewiseLinearConvex::upper_envelope(&problem.agent_payoff);
        let u_star = problem.agent_payoff[problem.target].clone();
        let zeros: Vec<&Scalar> = m
            .xs()
            .iter()
            .zip(m.ys())
            .filter(|(x, y)| lin(&u_star, x) == **y)
            .map(|(x, _)| x)
            .collect();
        let p_interval = match (zeros.first(), zeros.last()) {
            (Some(a), Some(b)) => Some(((*a).clone(), (*b).clone())),
            _ => None,
        };
        let best = |s: usize| {
            let top = problem.best_in_state(s);
            if problem.agent_payoff[problem.target][s] == top {
                problem.target
            } else {
                problem.agent_payoff.iter().position(|u| u[s] == top).unwrap()
            }
        };
        Envelopes {
            m_line: [m.ys()[0].clone(), m.ys().last().unwrap().clone()],
            m,
            u_star,
            v_star: problem.principal_payoff.clone(),
            discount: problem.discount.clone(),
            p_interval,
            best_at_0: best(0),
            best_at_1: best(1),
            target: problem.target,
        }
    }

    pub fn m(&self, p: &Scalar) -> Scalar {
        self.m.at(p)
    }

    pub fn big_m(&self, p: &Scalar) -> Scalar {
        lin(&self.m_line, p)
    }

    pub fn u_star(&self, p: &Scalar) -> Scalar {
        lin(&self.u_star, p)
    }

    pub fn v_star(&self, p: &Scalar) -> Scalar {
        lin(&self.v_star, p)
    }

    pub fn in_p(&self, p: &Scalar) -> bool {
        matches!(&self.p_interval, Some((a, b)) if a <= p && p <= b)
    }

    /// Promise `𝐰(p)` making the agent indifferent between `a*` now and best replies forever.
    pub fn bold_w(&self, p: &Scalar) -> Scalar {
        (self.m(p) - (one() - &self.discount) * self.u_star(p)) / &self.discount
    }

    /// Chord of `m` between beliefs `a < b`, as an affine function.
    pub fn chord(&self, a: &Scalar, b: &Scalar) -> Affine {
        affine_through(a, &self.m(a), b, &self.m(b))
    }

    /// `m̄_q`: the chord of `m` on `[0, q̲]`, `m` on `(q̲, q]`, the chord to `(1, m(1))` beyond `q`.
    pub fn m_bar(&self, q_low: &Scalar, q: &Scalar) -> Result<PiecewiseLinearConvex, EnvelopeError> {
        if q_low.is_negative() || q_low > q || *q > one() {
            return Err(EnvelopeError::InvalidCutoffs(
                crate::scalar::format_scalar(q_low),
                crate::scalar::format_scalar(q),
            ));
        }
        let mut xs = vec![zero()];
        let mut ys = vec![self.m_line[0].clone()];
        let mut labels = Vec::new();
        if q_low.is_positive() {
            xs.push(q_low.clone());
            ys.push(self.m(q_low));
            labels.push(None);
        }
        for (x, y) in self.m.xs().iter().zip(self.m.ys()) {
            if x > q_low && x < q {
                labels.push(self.m.label_at(&xs[xs.len() - 1]));
                xs.push(x.clone());
                ys.push(y.clone());
            }
        }
        if q > xs.last().unwrap() {
            labels.push(self.m.label_at(xs.last().unwrap()));
            xs.push(q.clone());
            ys.push(self.m(q));
        }
        if *q < one() {
            labels.push(None);
            xs.push(one());
            ys.push(self.m_line[1].clone());
        }
        PiecewiseLinearConvex::from_points(xs, ys, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::examples::*;
    use crate::scalar::{int, rat};

    #[test]
    fn example1_envelopes() {
        let e = Envelopes::build(&example1());
        assert_eq!(e.m.kinks(), &[rat(1, 3)]);
        assert_eq!(e.m.labels(), &[Some(0), Some(1)]);
        assert_eq!(e.m(&rat(1, 3)), rat(2, 3));
        assert_eq!(e.big_m(&rat(1, 6)), rat(7, 6));
        assert_eq!(e.big_m(&zero()), int(1));
        assert_eq!(e.p_interval, None);
        assert_eq!(e.bold_w(&rat(1, 3)), rat(5, 6));
        assert_eq!(e.bold_w(&rat(3, 11)), rat(21, 22));
        assert_eq!((e.best_at_0, e.best_at_1), (0, 1));
        assert!(e.m.eval(&rat(3, 2)).is_err());
    }

    #[test]
    fn example2_envelopes() {
        let e = Envelopes::build(&example2(rat(1, 3)));
        assert_eq!(e.m.kinks(), &[rat(1, 2)]);
        assert_eq!(e.p_interval, Some((zero(), rat(1, 2))));
        assert_eq!(e.bold_w(&rat(1, 4)), e.m(&rat(1, 4)));
        assert_eq!(e.best_at_0, 0);
    }

    #[test]
    fn dominant_action_envelope() {
        let f = PiecewiseLinearConvex::upper_envelope(&[[int(0), int(0)], [int(1), int(2)]]);
        assert_eq!(f.pieces(), 1);
        assert_eq!(f.labels(), &[Some(1)]);
    }

    #[test]
    fn tie_labels_lowest_index() {
        let f = PiecewiseLinearConvex::upper_envelope(&[[int(0), int(1)], [int(1), int(0)], [int(0), int(1)]]);
        assert_eq!(f.labels(), &[Some(1), Some(0)]);
    }

    #[test]
    fn splits_example1() {
        let e = Envelopes::build(&example1());
        let s = e.m.split(&rat(1, 3), &rat(5, 6)).unwrap();
        assert_eq!(s, Split { lambda: rat(22, 24), phi: rat(3, 11) });
        let s = e.m.split(&rat(3, 11), &rat(21, 22)).unwrap();
        assert_eq!(s, Split { lambda: rat(39, 44), phi: rat(7, 39) });
        let s = e.m.split(&rat(2, 5), &e.m(&rat(2, 5))).unwrap();
        assert_eq!(s, Split { lambda: one(), phi: rat(2, 5) });
        assert_eq!(e.m.split(&rat(1, 3), &int(2)), Err(SplitError::NoIntersection));
        assert_eq!(e.m.split(&one(), &int(3)), Err(SplitError::DegenerateLine));
        let s = e.m.split(&rat(1, 3), &rat(4, 3)).unwrap();
        assert_eq!(s.phi, zero());
    }

    #[test]
    fn m_bar_example1() {
        let e = Envelopes::build(&example1());
        let mb = e.m_bar(&rat(1, 6), &rat(1, 2)).unwrap();
        assert_eq!(mb.at(&rat(3, 4)), rat(3, 2));
        assert_eq!(mb.at(&rat(2, 5)), e.m(&rat(2, 5)));
        assert_eq!(mb.at(&zero()), int(1));
        assert_eq!(mb.at(&rat(1, 12)), (int(1) + rat(5, 6)) / int(2));
        assert!(e.m_bar(&rat(1, 2), &rat(1, 6)).is_err());
    }

    #[test]
    fn superlevel_sets() {
        let e = Envelopes::build(&example1());
        // (1-δ)u* + δM ≥ m  on Example 1 is [1/6, 1/2].
        let line = [
            rat(1, 2) * &e.u_star[0] + rat(1, 2) * &e.m_line[0],
            rat(1, 2) * &e.u_star[1] + rat(1, 2) * &e.m_line[1],
        ];
        assert_eq!(e.m.superlevel(&line, &zero(), &one()), Some((rat(1, 6), rat(1, 2))));
        assert_eq!(e.m.superlevel(&[int(0), int(0)], &zero(), &one()), None);
    }
}
