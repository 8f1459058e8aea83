//! Small dense linear programs over exact rationals or `f64`, and Carathéodory support
//! reduction for mixtures.

use crate::scalar::Scalar;
use num::{One, Zero};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed by the tableau code. `tol()` is zero for exact types.
pub trait LpNum:
    Clone
    + PartialOrd
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn tol() -> Self;

    fn gt_tol(&self) -> bool {
        *self > Self::tol()
    }

    fn lt_tol(&self) -> bool {
        *self < -Self::tol()
    }

    fn near_zero(&self) -> bool {
        !self.gt_tol() && !self.lt_tol()
    }
}

impl LpNum for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn tol() -> Self {
        1e-11
    }
}

impl LpNum for Scalar {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn tol() -> Self {
        Zero::zero()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
    #[error("dimension mismatch")]
    Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub value: T,
    /// Basic column per row; indices `≥ n` are artificial columns left at zero.
    pub basis: Vec<usize>,
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    width: usize,
}

impl<T: LpNum> Tableau<T> {
    fn pivot(&mut self, r: usize, col: usize) {
        let piv = self.rows[r][col].clone();
        for v in self.rows[r].iter_mut() {
            *v = v.clone() / piv.clone();
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col].clone();
            if is_exact_zero(&f) {
                continue;
            }
            for (v, p) in row.iter_mut().zip(&prow) {
                *v = v.clone() - f.clone() * p.clone();
            }
        }
        self.basis[r] = col;
    }

    /// Bland's rule on objective `cost` restricted to `allowed` columns.
    fn run(&mut self, cost: &[T], allowed: &dyn Fn(usize) -> bool, limit: usize) -> Result<(), LpError> {
        let m = self.rows.len();
        for _ in 0..limit {
            let mut entering = None;
            for j in 0..self.width {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j].clone();
                for i in 0..m {
                    rc = rc - cost[self.basis[i]].clone() * self.rows[i][j].clone();
                }
                if rc.gt_tol() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return Ok(()) };
            let mut best: Option<(usize, T)> = None;
            for i in 0..m {
                let a = &self.rows[i][j];
                if !a.gt_tol() {
                    continue;
                }
                let ratio = self.rows[i][self.width].clone() / a.clone();
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            let Some((r, _)) = best else { return Err(LpError::Unbounded) };
            self.pivot(r, j);
        }
        Err(LpError::IterationLimit(limit))
    }
}

fn is_exact_zero<T: LpNum>(x: &T) -> bool {
    *x == T::zero()
}

/// `max c·x` subject to `A x = b`, `x ≥ 0`, by two-phase simplex with Bland's rule.
pub fn maximize<T: LpNum>(a: &[Vec<T>], b: &[T], c: &[T]) -> Result<LpSolution<T>, LpError> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(LpError::Shape);
    }
    let width = n + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let flip = b[i].lt_tol();
        let sign = |v: T| if flip { -v } else { v };
        let mut row: Vec<T> = a[i].iter().cloned().map(sign).collect();
        for k in 0..m {
            row.push(if k == i { T::one() } else { T::zero() });
        }
        row.push(sign(b[i].clone()));
        rows.push(row);
    }
    let mut t = Tableau { rows, basis: (n..n + m).collect(), width };
    let limit = 50 * (width + 10);

    let phase1: Vec<T> = (0..width).map(|j| if j < n { T::zero() } else { -T::one() }).collect();
    t.run(&phase1, &|_| true, limit)?;
    let infeas = t
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &bj)| bj >= n)
        .fold(T::zero(), |acc, (i, _)| acc + t.rows[i][width].clone());
    if infeas.gt_tol() {
        return Err(LpError::Infeasible);
    }
    // Drive zero-level artificials out where a structural column can replace them.
    for i in 0..m {
        if t.basis[i] < n {
            continue;
        }
        if let Some(j) = (0..n).find(|&j| !t.basis.contains(&j) && !t.rows[i][j].near_zero()) {
            t.pivot(i, j);
        }
    }

    let mut cost: Vec<T> = c.to_vec();
    cost.extend((0..m).map(|_| T::zero()));
    t.run(&cost, &|j| j < n, limit)?;

    let mut x = vec![T::zero(); n];
    for (i, &bj) in t.basis.iter().enumerate() {
        if bj < n {
            x[bj] = t.rows[i][width].clone();
        }
    }
    let value = x.iter().zip(c).fold(T::zero(), |acc, (xi, ci)| acc + xi.clone() * ci.clone());
    Ok(LpSolution { x, value, basis: t.basis })
}

/// Solves the square system `M z = r` by Gaussian elimination; `None` if singular.
pub fn solve_square<T: LpNum>(mat: &[Vec<T>], rhs: &[T]) -> Option<Vec<T>> {
    let n = mat.len();
    let mut aug: Vec<Vec<T>> = mat
        .iter()
        .zip(rhs)
        .map(|(row, r)| {
            let mut v = row.clone();
            v.push(r.clone());
            v
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            abs(&aug[i][col]).partial_cmp(&abs(&aug[j][col])).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if abs(&aug[piv][col]) <= T::tol() {
            return None;
        }
        aug.swap(col, piv);
        let p = aug[col][col].clone();
        for v in aug[col].iter_mut() {
            *v = v.clone() / p.clone();
        }
        let prow = aug[col].clone();
        for (i, row) in aug.iter_mut().enumerate() {
            if i != col {
                let f = row[col].clone();
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v = v.clone() - f.clone() * pv.clone();
                }
            }
        }
    }
    Some(aug.into_iter().map(|r| r[n].clone()).collect())
}

fn abs<T: LpNum>(x: &T) -> T {
    if *x < T::zero() { -x.clone() } else { x.clone() }
}

/// A nonzero `d` with `M d = 0` for a wide matrix (`cols > rows`), by row reduction.
fn null_vector<T: LpNum>(mat: &[Vec<T>], cols: usize) -> Option<Vec<T>> {
    let mut a: Vec<Vec<T>> = mat.to_vec();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == a.len() {
            break;
        }
        let Some(pi) = (r..a.len()).find(|&i| !a[i][c].near_zero()) else { continue };
        a.swap(r, pi);
        let p = a[r][c].clone();
        for v in a[r].iter_mut() {
            *v = v.clone() / p.clone();
        }
        let prow = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != r {
                let f = row[c].clone();
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v = v.clone() - f.clone() * pv.clone();
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free = (0..cols).find(|c| !pivots.contains(c))?;
    let mut d = vec![T::zero(); cols];
    d[free] = T::one();
    for (row, &pc) in pivots.iter().enumerate() {
        d[pc] = -a[row][free].clone();
    }
    Some(d)
}

/// Reduces a mixture `weights` over points `rows[k]` (each row a constraint coordinate
/// vector, first coordinate the constant 1) to at most `rows.len()` positive weights while
/// keeping every constraint sum fixed and not lowering `Σ weights·gains`.
pub fn caratheodory_reduce<T: LpNum>(points: &[Vec<T>], gains: &[T], weights: &[T]) -> Vec<T> {
    let dims = points.first().map_or(0, |p| p.len());
    let mut w: Vec<T> = weights.to_vec();
    loop {
        let support: Vec<usize> = (0..w.len()).filter(|&k| w[k].gt_tol()).collect();
        for k in 0..w.len() {
            if !support.contains(&k) {
                w[k] = T::zero();
            }
        }
        if support.len() <= dims {
            return w;
        }
        let mat: Vec<Vec<T>> = (0..dims).map(|r| support.iter().map(|&k| points[k][r].clone()).collect()).collect();
        let Some(mut d) = null_vector(&mat, support.len()) else { return w };
        let slope = support.iter().zip(&d).fold(T::zero(), |acc, (&k, dk)| acc + gains[k].clone() * dk.clone());
        if slope.lt_tol() {
            d = d.into_iter().map(|x| -x).collect();
        }
        if !d.iter().any(|x| x.lt_tol()) {
            d = d.into_iter().map(|x| -x).collect();
        }
        let mut step: Option<T> = None;
        for (idx, &k) in support.iter().enumerate() {
            if d[idx].lt_tol() {
                let s = w[k].clone() / (-d[idx].clone());
                if step.as_ref().is_none_or(|b| s < *b) {
                    step = Some(s);
                }
            }
        }
        let Some(step) = step else { return w };
        for (idx, &k) in support.iter().enumerate() {
            w[k] = w[k].clone() + step.clone() * d[idx].clone();
            if w[k].near_zero() || w[k] < T::zero() {
                w[k] = T::zero();
            }
        }
        // Exact types land on zero; force the blocking weight out for inexact ones.
        if let Some(&k) = support.iter().min_by(|&&a, &&b| w[a].partial_cmp(&w[b]).unwrap_or(std::cmp::Ordering::Equal)) {
            if !w[k].gt_tol() {
                w[k] = T::zero();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat};

    #[test]
    fn exact_simplex_small() {
        // max x + y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = vec![vec![int(1), int(2), int(1), int(0)], vec![int(3), int(1), int(0), int(1)]];
        let sol = maximize(&a, &[int(4), int(6)], &[int(1), int(1), int(0), int(0)]).unwrap();
        assert_eq!(sol.value, rat(14, 5));
        assert_eq!(sol.x[0], rat(8, 5));
        assert_eq!(sol.x[1], rat(6, 5));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = vec![vec![int(1), int(1)]];
        assert_eq!(maximize(&a, &[int(-1)], &[int(1), int(0)]).unwrap_err(), LpError::Infeasible);
        let a = vec![vec![int(1), int(-1)]];
        assert_eq!(maximize(&a, &[int(1)], &[int(1), int(0)]).unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn float_matches_exact() {
        let a = vec![vec![1.0, 1.0, 1.0], vec![0.0, 0.5, 1.0]];
        let sol = maximize(&a, &[1.0, 0.3], &[0.0, 1.0, 0.4]).unwrap();
        assert!((sol.value - 0.6).abs() < 1e-12);
    }

    #[test]
    fn caratheodory_keeps_sums() {
        let pts: Vec<Vec<Scalar>> = [(0, 1), (1, 4), (1, 2), (3, 4), (1, 1)]
            .iter()
            .map(|&(n, d)| vec![int(1), rat(n, d)])
            .collect();
        let gains: Vec<Scalar> = pts.iter().map(|p| int(2) * &p[1] + int(1)).collect();
        let w = vec![rat(1, 5); 5];
        let red = caratheodory_reduce(&pts, &gains, &w);
        assert!(red.iter().filter(|x| !x.is_zero()).count() <= 2);
        let sum = |f: &dyn Fn(usize) -> Scalar, v: &[Scalar]| v.iter().enumerate().fold(int(0), |a, (k, x)| a + x * f(k));
        assert_eq!(sum(&|_| int(1), &red), int(1));
        assert_eq!(sum(&|k| pts[k][1].clone(), &red), sum(&|k| pts[k][1].clone(), &w));
        assert_eq!(sum(&|k| gains[k].clone(), &red), sum(&|k| gains[k].clone(), &w));
    }
}
