//! Brute-force value iteration of the Bellman operator on a `(p, w)` grid.
//!
//! Each grid state solves the three-row program
//! `max Σλ g  s.t.  Σλ = 1, Σλ p = p₀, Σλ e ≥ w` over candidate branches
//! `(posterior, promise, action)` with `e = (1−δ)u(a, posterior) + δ·promise` and
//! `g = (1−δ)v(a, posterior) + δ·V(posterior, promise)`. Mixing candidates inside one
//! posterior column is free, so only the upper concave hull of each column's `(e, g)`
//! points matters; pricing a column is then a binary search on hull slopes.

use crate::envelopes::Envelopes;
use crate::lp::{self, LpNum};
use crate::problem::Problem;
use crate::scalar::{from_f64, rat, to_f64, Scalar};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("no feasible split at grid state ({0}, {1})")]
    InfeasibleState(f64, f64),
    #[error("value iteration did not reach tolerance in {0} sweeps")]
    MaxItersExceeded(usize),
    #[error("grid sizes must be at least 8 (got {0} x {1})")]
    GridTooSmall(usize, usize),
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub n_p: usize,
    pub n_w: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_p: 120, n_w: 40, tol: 1e-6, max_iters: 500 }
    }
}

impl GridConfig {
    pub fn doubled(&self) -> GridConfig {
        GridConfig { n_p: 2 * self.n_p, n_w: 2 * self.n_w, ..self.clone() }
    }
}

/// Static data of one belief column `p_i = i / N_p`.
#[derive(Debug, Clone)]
struct Column {
    p: f64,
    ws: Vec<f64>,
    m: f64,
    u_star: f64,
    v_star: f64,
    /// The best reply is the target itself (`p_i ∈ P`).
    br_is_target: bool,
    /// First node index at which the target is incentive compatible.
    ic_from: usize,
    /// The indifference promise when it lies strictly between two nodes: `(w, lower node)`.
    bold_w: Option<(f64, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Promise {
    Node(usize),
    /// The indifference promise `𝐰(p_i)`, interpolated between nodes.
    Indifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tag {
    pub promise: Promise,
    pub target: bool,
}

#[derive(Debug, Clone, Default)]
struct Hull {
    e: Vec<f64>,
    g: Vec<f64>,
    slopes: Vec<f64>,
    tags: Vec<Tag>,
}

impl Hull {
    fn build(mut pts: Vec<(f64, f64, Tag)>) -> Hull {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let mut h: Vec<(f64, f64, Tag)> = Vec::with_capacity(pts.len());
        for pt in pts {
            if let Some(last) = h.last() {
                // Equal e up to rounding: keep the larger g.
                if pt.0 - last.0 <= 1e-15 {
                    if pt.1 <= last.1 {
                        continue;
                    }
                    h.pop();
                }
            }
            while h.len() >= 2 {
                let (a, b) = (&h[h.len() - 2], &h[h.len() - 1]);
                let cross = (b.0 - a.0) * (pt.1 - a.1) - (b.1 - a.1) * (pt.0 - a.0);
                if cross >= 0.0 {
                    h.pop();
                } else {
                    break;
                }
            }
            h.push(pt);
        }
        let slopes = h.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
        Hull {
            e: h.iter().map(|x| x.0).collect(),
            g: h.iter().map(|x| x.1).collect(),
            slopes,
            tags: h.iter().map(|x| x.2).collect(),
        }
    }

    /// Vertex maximizing `g − y·e`.
    fn argmax(&self, y: f64) -> usize {
        self.slopes.partition_point(|&s| s >= y)
    }

    fn max_e(&self) -> usize {
        self.e.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Cand(usize, usize),
    Surplus,
}

/// Optimal basis of one cell program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis([Var; 3]);

#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub weight: f64,
    pub p: f64,
    pub w: f64,
    pub target: bool,
    /// `V(p, w)` of the branch's continuation state.
    pub continuation: f64,
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    pub value: f64,
    pub basis: Basis,
    pub pivots: usize,
}

struct Model<'a> {
    cols: &'a [Column],
    hulls: &'a [Hull],
}

fn inv3(b: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    // b[k] is the k-th column.
    let m = |r: usize, c: usize| b[c][r];
    let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    if det.abs() < 1e-14 {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][c] = (m(r1, c1) * m(r2, c2) - m(r1, c2) * m(r2, c1)) / det;
        }
    }
    Some(inv)
}

impl Model<'_> {
    fn column(&self, v: Var) -> ([f64; 3], f64) {
        match v {
            Var::Surplus => ([0.0, 0.0, -1.0], 0.0),
            Var::Cand(i, k) => ([1.0, self.cols[i].p, self.hulls[i].e[k]], self.hulls[i].g[k]),
        }
    }

    fn cold_basis(&self) -> Basis {
        let last = self.cols.len() - 1;
        Basis([Var::Cand(0, self.hulls[0].max_e()), Var::Cand(last, self.hulls[last].max_e()), Var::Surplus])
    }

    fn primal(&self, basis: &Basis, b: &[f64; 3]) -> Option<([[f64; 3]; 3], [f64; 3])> {
        let cols = basis.0.map(|v| self.column(v).0);
        let inv = inv3(&cols)?;
        let x = [0, 1, 2].map(|r| inv[r][0] * b[0] + inv[r][1] * b[1] + inv[r][2] * b[2]);
        Some((inv, x))
    }

    fn solve(&self, p0: f64, w: f64, warm: Option<Basis>) -> Option<CellSolution> {
        let b = [1.0, p0, w];
        let feasible = |x: &[f64; 3]| x.iter().all(|&v| v >= -1e-10);
        let mut basis = self.cold_basis();
        let mut state = None;
        if let Some(wb) = warm {
            if let Some((inv, x)) = self.primal(&wb, &b) {
                if feasible(&x) {
                    basis = wb;
                    state = Some((inv, x));
                }
            }
        }
        let (mut inv, mut x) = match state {
            Some(s) => s,
            None => self.primal(&basis, &b)?,
        };
        if !feasible(&x) {
            return None;
        }
        const MAX_PIVOTS: usize = 200;
        let mut pivots = 0;
        loop {
            let cb = basis.0.map(|v| self.column(v).1);
            let y = [0, 1, 2].map(|c| cb[0] * inv[0][c] + cb[1] * inv[1][c] + cb[2] * inv[2][c]);
            let mut best = (y[2], Var::Surplus);
            for (i, (col, hull)) in self.cols.iter().zip(self.hulls).enumerate() {
                let k = hull.argmax(y[2]);
                let rc = hull.g[k] - y[2] * hull.e[k] - y[0] - y[1] * col.p;
                if rc > best.0 {
                    best = (rc, Var::Cand(i, k));
                }
            }
            let (rc, enter) = best;
            if rc <= 1e-12 || basis.0.contains(&enter) || pivots >= MAX_PIVOTS {
                let value = cb[0] * x[0] + cb[1] * x[1] + cb[2] * x[2];
                return Some(CellSolution { value, basis, pivots });
            }
            let a = self.column(enter).0;
            let d = [0, 1, 2].map(|r| inv[r][0] * a[0] + inv[r][1] * a[1] + inv[r][2] * a[2]);
            let mut leave = None;
            for r in 0..3 {
                if d[r] > 1e-12 {
                    let t = x[r].max(0.0) / d[r];
                    if leave.is_none_or(|(_, bt)| t < bt) {
                        leave = Some((r, t));
                    }
                }
            }
            let (r, _) = leave?;
            basis.0[r] = enter;
            pivots += 1;
            match self.primal(&basis, &b) {
                Some((ni, nx)) => {
                    inv = ni;
                    x = nx;
                }
                None => return None,
            }
        }
    }
}

/// Fixed point (or current iterate) of grid value iteration.
#[derive(Debug, Clone)]
pub struct Grid {
    pub n_p: usize,
    pub n_w: usize,
    cols: Vec<Column>,
    /// `values[i][j] = V(p_i, w_ij)`.
    pub values: Vec<Vec<f64>>,
    hulls: Vec<Hull>,
    bases: Vec<Vec<Basis>>,
    discount: f64,
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iterations: usize,
    /// Sup-norm change of each sweep.
    pub deltas: Vec<f64>,
    /// Largest ratio of successive sweep changes (the observed contraction modulus).
    pub modulus: Option<f64>,
    /// Smallest pointwise change `V⁽ⁿ⁺¹⁾ − V⁽ⁿ⁾` seen; non-negative from a zero start.
    pub min_increment: f64,
    /// `δ/(1−δ)` times the last change: a bound on the distance to the grid fixed point.
    pub error_bound: f64,
}

impl IterationReport {
    pub fn monotone(&self) -> bool {
        self.min_increment >= -1e-9
    }
}

impl Grid {
    /// Zero-initialized grid for `problem` (normalized internally).
    pub fn new(problem: &Problem, n_p: usize, n_w: usize) -> Result<Grid, OracleError> {
        if n_p < 8 || n_w < 8 {
            return Err(OracleError::GridTooSmall(n_p, n_w));
        }
        let problem = problem.normalize();
        let env = Envelopes::build(&problem);
        let d = &problem.discount;
        let cols: Vec<Column> = (0..=n_p)
            .map(|i| {
                let p = rat(i as i64, n_p as i64);
                let (m, big) = (env.m(&p), env.big_m(&p));
                let nodes: Vec<Scalar> = if m == big {
                    vec![m.clone()]
                } else {
                    (0..=n_w).map(|j| &m + (&big - &m) * rat(j as i64, n_w as i64)).collect()
                };
                let us = env.u_star(&p);
                let bw = env.bold_w(&p);
                let ic = |w: &Scalar| (Scalar::from_integer(1.into()) - d) * &us + d * w >= m;
                let ic_from = nodes.iter().position(ic).unwrap_or(nodes.len());
                let bold_w = if ic_from > 0 && ic_from < nodes.len() && nodes[ic_from] != bw && bw >= m {
                    Some((to_f64(&bw), ic_from - 1))
                } else {
                    None
                };
                Column {
                    p: to_f64(&p),
                    ws: nodes.iter().map(to_f64).collect(),
                    m: to_f64(&m),
                    u_star: to_f64(&us),
                    v_star: to_f64(&env.v_star(&p)),
                    br_is_target: env.in_p(&p),
                    ic_from,
                    bold_w,
                }
            })
            .collect();
        let values = cols.iter().map(|c| vec![0.0; c.ws.len()]).collect();
        let mut g = Grid { n_p, n_w, cols, values, hulls: Vec::new(), bases: Vec::new(), discount: to_f64(d) };
        g.rebuild_hulls();
        Ok(g)
    }

    /// All candidate branches `(e, g, tag)` of column `i` under the current values.
    fn column_points(&self, i: usize) -> Vec<(f64, f64, Tag)> {
        let d = self.discount;
        let (c, vals) = (&self.cols[i], &self.values[i]);
        let mut pts = Vec::with_capacity(2 * c.ws.len() + 1);
        let br_flow = if c.br_is_target { (1.0 - d) * c.v_star } else { 0.0 };
        for (j, (&w, &v)) in c.ws.iter().zip(vals).enumerate() {
            let tag = Tag { promise: Promise::Node(j), target: c.br_is_target };
            pts.push(((1.0 - d) * c.m + d * w, br_flow + d * v, tag));
            if j >= c.ic_from && !c.br_is_target {
                let tag = Tag { promise: Promise::Node(j), target: true };
                pts.push(((1.0 - d) * c.u_star + d * w, (1.0 - d) * c.v_star + d * v, tag));
            }
        }
        if let (Some((w, j)), false) = (c.bold_w, c.br_is_target) {
            let t = (w - c.ws[j]) / (c.ws[j + 1] - c.ws[j]);
            let v = vals[j] + t * (vals[j + 1] - vals[j]);
            let tag = Tag { promise: Promise::Indifference, target: true };
            pts.push(((1.0 - d) * c.u_star + d * w, (1.0 - d) * c.v_star + d * v, tag));
        }
        pts
    }

    fn rebuild_hulls(&mut self) {
        self.hulls = (0..self.cols.len()).map(|i| Hull::build(self.column_points(i))).collect();
    }

    fn model(&self) -> Model<'_> {
        Model { cols: &self.cols, hulls: &self.hulls }
    }

    pub fn p(&self, i: usize) -> f64 {
        self.cols[i].p
    }

    pub fn ws(&self, i: usize) -> &[f64] {
        &self.cols[i].ws
    }

    /// One application of the operator; returns the sup-norm change and the smallest increment.
    pub fn bellman_apply(&mut self) -> Result<(f64, f64), OracleError> {
        let model = self.model();
        let prev = &self.bases;
        let out: Vec<(Vec<f64>, Vec<Basis>)> = (0..self.cols.len())
            .into_par_iter()
            .map(|i| {
                let col = &self.cols[i];
                let mut vals = Vec::with_capacity(col.ws.len());
                let mut bases = Vec::with_capacity(col.ws.len());
                let mut warm = prev.get(i).and_then(|b| b.first().copied());
                for (j, &w) in col.ws.iter().enumerate() {
                    if let Some(b) = prev.get(i).and_then(|b| b.get(j)) {
                        warm = Some(*b);
                    }
                    let sol = model.solve(col.p, w, warm).ok_or(OracleError::InfeasibleState(col.p, w))?;
                    warm = Some(sol.basis);
                    vals.push(sol.value.max(0.0));
                    bases.push(sol.basis);
                }
                Ok((vals, bases))
            })
            .collect::<Result<_, OracleError>>()?;
        let mut delta: f64 = 0.0;
        let mut min_inc = f64::INFINITY;
        for (old, (new, _)) in self.values.iter().zip(&out) {
            for (a, b) in old.iter().zip(new) {
                delta = delta.max((b - a).abs());
                min_inc = min_inc.min(b - a);
            }
        }
        let (values, bases): (Vec<_>, Vec<_>) = out.into_iter().unzip();
        self.values = values;
        self.bases = bases;
        self.rebuild_hulls();
        Ok((delta, min_inc))
    }

    /// Iterates [`Grid::bellman_apply`] until the sup-norm change drops below `tol`.
    pub fn value_iterate(&mut self, tol: f64, max_iters: usize) -> Result<IterationReport, OracleError> {
        let upper = self.cols.iter().map(|c| c.v_star).fold(0.0, f64::max);
        let d = self.discount;
        let mut report = IterationReport {
            iterations: 0,
            deltas: Vec::new(),
            modulus: None,
            min_increment: 0.0,
            error_bound: upper,
        };
        // 0 ≤ V ≤ max v(a*, ·), so a tolerance above that bound is met by the start.
        if tol >= upper {
            return Ok(report);
        }
        let mut min_inc = f64::INFINITY;
        loop {
            if report.iterations >= max_iters {
                return Err(OracleError::MaxItersExceeded(max_iters));
            }
            let (delta, inc) = self.bellman_apply()?;
            report.iterations += 1;
            min_inc = min_inc.min(inc);
            if let Some(&last) = report.deltas.last() {
                if last > 1e-9 {
                    let r = delta / last;
                    report.modulus = Some(report.modulus.map_or(r, |m: f64| m.max(r)));
                }
            }
            report.deltas.push(delta);
            report.error_bound = d / (1.0 - d) * delta;
            report.min_increment = min_inc;
            if delta < tol {
                return Ok(report);
            }
        }
    }

    /// One Bellman application at an arbitrary state against the current grid.
    pub fn evaluate(&self, p: f64, w: f64) -> Result<CellSolution, OracleError> {
        self.model().solve(p, w, None).ok_or(OracleError::InfeasibleState(p, w))
    }

    /// Value at the grid state `(i/N_p, m(i/N_p))`.
    pub fn value_on_m(&self, i: usize) -> f64 {
        self.values[i][0]
    }

    /// Column index of `p` when `p` is a grid belief.
    pub fn column_of(&self, p: &Scalar) -> Option<usize> {
        let x = p * Scalar::from_integer((self.n_p as i64).into());
        if x.is_integer() {
            x.to_integer().try_into().ok()
        } else {
            None
        }
    }

    pub fn support(&self, sol: &CellSolution, p0: f64, w: f64) -> Vec<SupportPoint> {
        let model = self.model();
        let b = [1.0, p0, w];
        let Some((_, x)) = model.primal(&sol.basis, &b) else { return Vec::new() };
        let mut out = Vec::new();
        for (r, v) in sol.basis.0.iter().enumerate() {
            let Var::Cand(i, k) = *v else { continue };
            if x[r] <= 1e-12 {
                continue;
            }
            let c = &self.cols[i];
            let tag = self.hulls[i].tags[k];
            let (pw, cont) = match tag.promise {
                Promise::Node(j) => (c.ws[j], self.values[i][j]),
                Promise::Indifference => {
                    let (bw, j) = c.bold_w.unwrap();
                    let t = (bw - c.ws[j]) / (c.ws[j + 1] - c.ws[j]);
                    (bw, self.values[i][j] + t * (self.values[i][j + 1] - self.values[i][j]))
                }
            };
            out.push(SupportPoint { weight: x[r], p: c.p, w: pw, target: tag.target, continuation: cont });
        }
        out
    }

    /// Largest continuation value on a non-target branch of any optimal grid support.
    pub fn max_non_target_continuation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, c) in self.cols.iter().enumerate() {
            for (j, &w) in c.ws.iter().enumerate() {
                let Some(basis) = self.bases.get(i).and_then(|b| b.get(j)) else { continue };
                let sol = CellSolution { value: self.values[i][j], basis: *basis, pivots: 0 };
                for s in self.support(&sol, c.p, w) {
                    if !s.target {
                        worst = worst.max(s.continuation);
                    }
                }
            }
        }
        worst
    }

    /// Exact re-check of a cell's final basis against the `f64` data of its program:
    /// primal feasibility and non-positive reduced costs over every hull vertex.
    pub fn exact_recheck(&self, i: usize, j: usize) -> ExactCheck {
        let basis = self.bases[i][j];
        let ex = |x: f64| from_f64(x).unwrap_or_else(|| Scalar::from_integer(0.into()));
        let column = |v: Var| -> (Vec<Scalar>, Scalar) {
            match v {
                Var::Surplus => (vec![ex(0.0), ex(0.0), ex(-1.0)], ex(0.0)),
                Var::Cand(ci, k) => {
                    (vec![ex(1.0), ex(self.cols[ci].p), ex(self.hulls[ci].e[k])], ex(self.hulls[ci].g[k]))
                }
            }
        };
        let cols: Vec<(Vec<Scalar>, Scalar)> = basis.0.iter().map(|&v| column(v)).collect();
        let mat: Vec<Vec<Scalar>> = (0..3).map(|r| cols.iter().map(|c| c.0[r].clone()).collect()).collect();
        let b = vec![ex(1.0), ex(self.cols[i].p), ex(self.cols[i].ws[j])];
        let Some(x) = lp::solve_square(&mat, &b) else {
            return ExactCheck { primal_feasible: false, worst_reduced_cost: f64::INFINITY, value: f64::NAN };
        };
        let mat_t: Vec<Vec<Scalar>> = (0..3).map(|r| (0..3).map(|c| mat[c][r].clone()).collect()).collect();
        let cb: Vec<Scalar> = cols.iter().map(|c| c.1.clone()).collect();
        let y = lp::solve_square(&mat_t, &cb).unwrap();
        let mut worst = -y[2].clone();
        for (ci, hull) in self.hulls.iter().enumerate() {
            for k in 0..hull.e.len() {
                let (a, g) = column(Var::Cand(ci, k));
                let rc = g - &y[0] * &a[0] - &y[1] * &a[1] - &y[2] * &a[2];
                if rc > worst {
                    worst = rc;
                }
            }
        }
        let value = cb.iter().zip(&x).fold(Scalar::from_integer(0.into()), |acc, (c, xi)| acc + c * xi);
        ExactCheck {
            primal_feasible: x.iter().all(|v| !v.lt_tol()),
            worst_reduced_cost: to_f64(&worst),
            value: to_f64(&value),
        }
    }

    /// `(p, w, V)` rows of the current grid.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.cols
            .iter()
            .zip(&self.values)
            .flat_map(|(c, vals)| c.ws.iter().zip(vals).map(move |(&w, &v)| (c.p, w, v)))
    }

    /// Largest second difference along any `w`-column (`≤ 0` up to rounding if concave)
    /// and the largest increase along `w` (`≤ 0` if decreasing).
    pub fn column_shape(&self) -> (f64, f64) {
        let mut bend = f64::NEG_INFINITY;
        let mut rise = f64::NEG_INFINITY;
        for vals in &self.values {
            for w in vals.windows(3) {
                bend = bend.max(w[0] + w[2] - 2.0 * w[1]);
            }
            for w in vals.windows(2) {
                rise = rise.max(w[1] - w[0]);
            }
        }
        (bend, rise)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactCheck {
    pub primal_feasible: bool,
    /// Largest exact reduced cost over all columns; `≤ 0` certifies optimality.
    pub worst_reduced_cost: f64,
    pub value: f64,
}

/// Reduces a mixture of `(p, e, g)` candidates to at most three support points with the
/// same `Σλ`, `Σλp` and `Σλe`, without lowering `Σλg`.
pub fn caratheodory_support<T: LpNum>(points: &[(T, T, T)], weights: &[T]) -> Vec<T> {
    let rows: Vec<Vec<T>> = points.iter().map(|(p, e, _)| vec![T::one(), p.clone(), e.clone()]).collect();
    let gains: Vec<T> = points.iter().map(|(_, _, g)| g.clone()).collect();
    lp::caratheodory_reduce(&rows, &gains, weights)
}

/// Solves the grid problem for `problem` and reports iteration diagnostics.
pub fn solve_grid(problem: &Problem, cfg: &GridConfig) -> Result<(Grid, IterationReport), OracleError> {
    let mut g = Grid::new(problem, cfg.n_p, cfg.n_w)?;
    let rep = g.value_iterate(cfg.tol, cfg.max_iters)?;
    Ok((g, rep))
}

/// Coarse and doubled-resolution grid values at `(p₀, m(p₀))` with the error model
/// `C·(1/N_p + 1/N_w)` fitted from the two levels.
#[derive(Debug, Clone)]
pub struct Richardson {
    pub coarse: GridConfig,
    pub coarse_value: f64,
    pub fine_value: f64,
    pub coarse_report: IterationReport,
    pub fine_report: IterationReport,
    /// First-order extrapolation `2·V_fine − V_coarse`.
    pub extrapolated: f64,
    pub constant: f64,
}

impl Richardson {
    pub fn budget(&self, n_p: usize, n_w: usize) -> f64 {
        self.constant * (1.0 / n_p as f64 + 1.0 / n_w as f64)
    }
}

/// Grid value at `(p₀, m(p₀))`: the stored node when `p₀` is a grid belief, otherwise one
/// Bellman application at the off-grid state.
pub fn value_at_prior(grid: &Grid, p0: &Scalar, m0: &Scalar) -> Result<f64, OracleError> {
    match grid.column_of(p0) {
        Some(i) => Ok(grid.value_on_m(i)),
        None => Ok(grid.evaluate(to_f64(p0), to_f64(m0))?.value),
    }
}

pub fn richardson(problem: &Problem, cfg: &GridConfig) -> Result<Richardson, OracleError> {
    let norm = problem.normalize();
    let env = Envelopes::build(&norm);
    let p0 = norm.prior.clone();
    let m0 = env.m(&p0);
    let (g1, r1) = solve_grid(problem, cfg)?;
    let v1 = value_at_prior(&g1, &p0, &m0)?;
    drop(g1);
    let fine = cfg.doubled();
    let (g2, r2) = solve_grid(problem, &fine)?;
    let v2 = value_at_prior(&g2, &p0, &m0)?;
    let h = |c: &GridConfig| 1.0 / c.n_p as f64 + 1.0 / c.n_w as f64;
    let constant = (v2 - v1).abs() / (h(cfg) - h(&fine));
    Ok(Richardson {
        coarse: cfg.clone(),
        coarse_value: v1,
        fine_value: v2,
        coarse_report: r1,
        fine_report: r2,
        extrapolated: 2.0 * v2 - v1,
        constant,
    })
}
