//! Dense solvers for the sparse recovery programs: equality-constrained L1
//! minimisation (simplex on the split LP), the lasso form (monotone FISTA
//! with support polishing), and an exhaustive integer search used as a test
//! oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and iteration limits shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_pivots: usize,
    /// Pivot and feasibility tolerance inside the simplex.
    pub pivot_tol: f64,
    /// Phase-one objective above which the program is declared infeasible.
    pub infeasibility_tol: f64,
    /// Required `‖Mζ - g‖∞` of an equality-constrained solution.
    pub residual_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_streak: usize,
    pub lasso_max_iter: usize,
    /// Subgradient tolerance of the lasso optimality check.
    pub kkt_tol: f64,
    /// Iterations between lasso polishing/monitoring passes.
    pub check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_pivots: 100_000,
            pivot_tol: 1e-9,
            infeasibility_tol: 1e-7,
            residual_tol: 1e-7,
            degenerate_streak: 50,
            lasso_max_iter: 100_000,
            kkt_tol: 1e-6,
            check_every: 100,
        }
    }
}

/// Standard-form LP: minimise `c·x` subject to `A x = b`, `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LpProblem {
    pub fn new(c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.ncols() != c.len() || a.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, c has {}, b has {}",
                a.nrows(),
                a.ncols(),
                c.len(),
                b.len()
            )));
        }
        if b.iter().chain(c.iter()).chain(a.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("LP data must be finite".into()));
        }
        Ok(Self { c, a, b })
    }

    /// `min ‖ζ‖₁ s.t. Mζ = g` with `ζ = u - v`, `x = [u; v]`.
    pub fn l1_split(m: &DMatrix<f64>, g: &DVector<f64>) -> Result<Self> {
        let n = m.ncols();
        let mut a = DMatrix::zeros(m.nrows(), 2 * n);
        a.columns_mut(0, n).copy_from(m);
        a.columns_mut(n, n).copy_from(&(-m));
        Self::new(DVector::from_element(2 * n, 1.0), a, g.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Equality multipliers `y` with `Aᵀy ≤ c` (within tolerance).
    pub dual: DVector<f64>,
    /// `c·x - b·y`.
    pub gap: f64,
    pub pivots: usize,
}

/// Pivots between rebuilds of the tableau from the original data.
const REINVERT_EVERY: usize = 1000;

/// Relative shift applied to basic values during the phase-two pass.
const PERTURBATION: f64 = 1e-7;

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows` constraint rows then the objective row; last column is the rhs.
    data: Vec<f64>,
    /// Constraint rows as loaded, for rebuilding.
    orig: DMatrix<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.data[pr * w + pc];
        for c in 0..w {
            self.data[pr * w + c] /= p;
        }
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                let row = &mut self.data[r * w..(r + 1) * w];
                for (x, &pv) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * pv;
                }
                row[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Load the objective row for costs `cost` (reduced against the basis).
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let obj = self.rows * w;
        for c in 0..w {
            self.data[obj + c] = if c < cost.len() { cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for c in 0..w {
                    self.data[obj + c] -= cb * self.data[r * w + c];
                }
            }
        }
    }

    /// Recompute the constraint rows as `B⁻¹ [A | b]` for the current basis
    /// and reload `cost`, discarding accumulated rounding error. Leaves the
    /// tableau untouched if the basis matrix is numerically singular.
    fn reinvert(&mut self, cost: &[f64]) {
        let bmat = self.orig.select_columns(&self.basis);
        let Some(fresh) = bmat.lu().solve(&self.orig) else { return };
        let w = self.cols + 1;
        for r in 0..self.rows {
            for c in 0..w {
                self.data[r * w + c] = fresh[(r, c)];
            }
            // basic columns are exact unit vectors
            for (i, &b) in self.basis.iter().enumerate() {
                self.data[r * w + b] = if i == r { 1.0 } else { 0.0 };
            }
        }
        self.set_objective(cost);
    }

    /// Textbook minimum-ratio row; ties go to the lowest basic index.
    fn ratio_bland(&self, pc: usize, tol: f64) -> Option<(usize, f64)> {
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, pc);
            if a > tol {
                let ratio = self.rhs(r).max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        leave
    }

    /// Two-pass (Harris) ratio test: bound the step with a small
    /// feasibility slack, then take the largest pivot element among rows
    /// within that bound. Avoids pivoting on tiny entries at degenerate
    /// vertices.
    fn ratio_harris(&self, pc: usize, tol: f64) -> Option<(usize, f64)> {
        const SLACK: f64 = 1e-9;
        let mut bound = f64::INFINITY;
        for r in 0..self.rows {
            let a = self.at(r, pc);
            if a > tol {
                bound = bound.min((self.rhs(r).max(0.0) + SLACK) / a);
            }
        }
        if bound.is_infinite() {
            return None;
        }
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, pc);
            if a > tol {
                let ratio = self.rhs(r).max(0.0) / a;
                if ratio <= bound && leave.is_none_or(|(lr, _)| a > self.at(lr, pc)) {
                    leave = Some((r, ratio));
                }
            }
        }
        leave
    }

    /// Improving column with the largest `d_j² / (1 + ‖a_j‖²)`, i.e. the
    /// steepest descent per unit of edge length. Ties go to the lowest index.
    fn steepest_edge(&self, allowed: usize, tol: f64) -> Option<usize> {
        let w = self.cols + 1;
        let obj = &self.data[self.rows * w..self.rows * w + allowed];
        if obj.iter().all(|&d| d >= -tol) {
            return None;
        }
        let mut norms = vec![1.0; allowed];
        for r in 0..self.rows {
            let row = &self.data[r * w..r * w + allowed];
            for (n, &a) in norms.iter_mut().zip(row) {
                *n += a * a;
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for (c, (&d, &n)) in obj.iter().zip(&norms).enumerate() {
            if d < -tol {
                let score = d * d / n;
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((c, score));
                }
            }
        }
        best.map(|(c, _)| c)
    }

    /// Dual simplex pivots until every basic value is nonnegative. The
    /// tableau must be dual feasible (nonnegative reduced costs).
    fn dual_repair(&mut self, allowed: usize, cfg: &SolverConfig, pivots: &mut usize) -> Result<()> {
        loop {
            let leave = (0..self.rows)
                .filter(|&r| self.rhs(r) < -cfg.pivot_tol * (1.0 + self.rhs(r).abs()))
                .min_by(|&a, &b| self.rhs(a).total_cmp(&self.rhs(b)));
            let Some(pr) = leave else { return Ok(()) };
            let mut enter: Option<(usize, f64)> = None;
            for c in 0..allowed {
                let a = self.at(pr, c);
                if a < -cfg.pivot_tol {
                    let ratio = self.at(self.rows, c).max(0.0) / -a;
                    if enter.is_none_or(|(_, best)| ratio < best) {
                        enter = Some((c, ratio));
                    }
                }
            }
            let (pc, _) = enter.ok_or(Error::Infeasible)?;
            self.pivot(pr, pc);
            *pivots += 1;
            if *pivots > cfg.max_pivots {
                return Err(Error::IterationLimit(cfg.max_pivots));
            }
        }
    }

    /// Minimise `cost` (already loaded) over columns `< allowed`. Optimality
    /// and unboundedness are only declared on a freshly rebuilt tableau.
    fn optimise(&mut self, allowed: usize, cost: &[f64], cfg: &SolverConfig, pivots: &mut usize) -> Result<()> {
        let mut degenerate = 0usize;
        let mut since_rebuild = 0usize;
        loop {
            if since_rebuild >= REINVERT_EVERY {
                self.reinvert(cost);
                since_rebuild = 0;
            }
            let bland = degenerate >= cfg.degenerate_streak;
            let enter = if bland {
                (0..allowed).find(|&c| self.at(self.rows, c) < -cfg.pivot_tol)
            } else {
                self.steepest_edge(allowed, cfg.pivot_tol)
            };
            let Some(pc) = enter else {
                if since_rebuild == 0 {
                    return Ok(());
                }
                self.reinvert(cost);
                since_rebuild = 0;
                continue;
            };
            let leave = if bland { self.ratio_bland(pc, cfg.pivot_tol) } else { self.ratio_harris(pc, cfg.pivot_tol) };
            let Some((pr, ratio)) = leave else {
                // cannot happen in phase one or for the L1 split, whose
                // objectives are bounded below by zero, unless rounding
                // has corrupted the tableau
                if since_rebuild == 0 {
                    return Err(Error::SolverDiverged("unbounded LP direction".into()));
                }
                self.reinvert(cost);
                since_rebuild = 0;
                continue;
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc);
            *pivots += 1;
            since_rebuild += 1;
            if *pivots > cfg.max_pivots {
                return Err(Error::IterationLimit(cfg.max_pivots));
            }
        }
    }
}

/// Two-phase dense simplex. The returned point is recomputed from the final
/// basis by an LU solve, and duals come from the same basis.
pub fn solve_lp(lp: &LpProblem, cfg: &SolverConfig) -> Result<LpSolution> {
    let (m, n) = lp.a.shape();
    if m == 0 {
        let x = DVector::zeros(n);
        if lp.c.iter().any(|&c| c < 0.0) {
            return Err(Error::SolverDiverged("unbounded LP".into()));
        }
        return Ok(LpSolution {
            x,
            objective: 0.0,
            dual: DVector::zeros(0),
            gap: 0.0,
            pivots: 0,
        });
    }
    // flip rows so that b ≥ 0
    let sign: Vec<f64> = lp.b.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
    let cols = n + m;
    let mut data = vec![0.0; (m + 1) * (cols + 1)];
    for r in 0..m {
        for c in 0..n {
            data[r * (cols + 1) + c] = sign[r] * lp.a[(r, c)];
        }
        data[r * (cols + 1) + n + r] = 1.0;
        data[r * (cols + 1) + cols] = sign[r] * lp.b[r];
    }
    let orig = DMatrix::from_fn(m, cols + 1, |r, c| data[r * (cols + 1) + c]);
    let mut t = Tableau {
        rows: m,
        cols,
        data,
        orig,
        basis: (n..n + m).collect(),
    };
    let mut pivots = 0usize;

    let mut phase1 = vec![0.0; cols];
    for c in phase1.iter_mut().skip(n) {
        *c = 1.0;
    }
    t.set_objective(&phase1);
    t.optimise(cols, &phase1, cfg, &mut pivots)?;
    let scale = 1.0 + lp.b.amax();
    if -t.rhs(m) > cfg.infeasibility_tol * scale {
        return Err(Error::Infeasible);
    }

    // drive remaining artificials out of the basis; rows where that is
    // impossible are redundant
    let mut redundant = vec![false; m];
    for r in 0..m {
        if t.basis[r] >= n {
            let pc = (0..n)
                .filter(|&c| t.at(r, c).abs() > cfg.pivot_tol)
                .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
            match pc {
                Some(pc) => {
                    t.pivot(r, pc);
                    pivots += 1;
                }
                None => redundant[r] = true,
            }
        }
    }

    let mut phase2 = lp.c.iter().copied().collect::<Vec<_>>();
    phase2.resize(cols, 0.0);
    t.set_objective(&phase2);
    // shift basic values off zero so that degenerate vertices do not
    // stall the primal pass; the shift is undone by rebuilding from the
    // true rhs and repaired with dual simplex pivots
    for r in 0..m {
        if !redundant[r] {
            let w = t.cols + 1;
            let golden = (r as f64 * 0.618_033_988_749_895).fract();
            t.data[r * w + t.cols] += PERTURBATION * (1.0 + golden) * (1.0 + t.rhs(r).abs());
        }
    }
    t.optimise(n, &phase2, cfg, &mut pivots)?;
    t.reinvert(&phase2);
    t.dual_repair(n, cfg, &mut pivots)?;
    t.optimise(n, &phase2, cfg, &mut pivots)?;

    let kept: Vec<usize> = (0..m).filter(|&r| !redundant[r]).collect();
    let basic: Vec<usize> = kept.iter().map(|&r| t.basis[r]).collect();
    let mut x = DVector::zeros(n);
    let mut dual = DVector::zeros(m);
    let bmat = DMatrix::from_fn(kept.len(), basic.len(), |i, j| lp.a[(kept[i], basic[j])]);
    let bvec = DVector::from_iterator(kept.len(), kept.iter().map(|&r| lp.b[r]));
    let lu = bmat.clone().lu();
    match lu.solve(&bvec) {
        Some(xb) if xb.iter().all(|&v| v > -1e-9) => {
            for (j, &c) in basic.iter().enumerate() {
                x[c] = xb[j].max(0.0);
            }
        }
        _ => {
            for (r, &c) in kept.iter().zip(&basic) {
                x[c] = t.rhs(*r).max(0.0);
            }
        }
    }
    let cb = DVector::from_iterator(basic.len(), basic.iter().map(|&c| lp.c[c]));
    if let Some(y) = bmat.transpose().lu().solve(&cb) {
        for (i, &r) in kept.iter().enumerate() {
            dual[r] = y[i];
        }
    }
    let objective = lp.c.dot(&x);
    let gap = objective - lp.b.dot(&dual);
    Ok(LpSolution {
        x,
        objective,
        dual,
        gap,
        pivots,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Solution {
    pub zeta: DVector<f64>,
    pub objective: f64,
    pub dual: DVector<f64>,
    pub gap: f64,
    pub residual: f64,
}

/// `min ‖ζ‖₁ s.t. Mζ = g`.
pub fn solve_l1_eq(m: &DMatrix<f64>, g: &DVector<f64>, cfg: &SolverConfig) -> Result<L1Solution> {
    // scaling rows leaves the solution set unchanged
    let row_scale: Vec<f64> = m
        .row_iter()
        .map(|r| {
            let mx = r.amax();
            if mx > 0.0 { 1.0 / mx } else { 1.0 }
        })
        .collect();
    let scaled_m = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * row_scale[r]);
    let scaled_g = DVector::from_fn(g.len(), |r, _| g[r] * row_scale[r]);
    let lp = LpProblem::l1_split(&scaled_m, &scaled_g)?;
    let mut sol = solve_lp(&lp, cfg)?;
    for (y, s) in sol.dual.iter_mut().zip(&row_scale) {
        *y *= s;
    }
    let n = m.ncols();
    let zeta = sol.x.rows(0, n) - sol.x.rows(n, n);
    let residual = (m * &zeta - g).amax();
    let scale = 1.0 + g.amax();
    if residual > cfg.residual_tol * scale {
        return Err(Error::SolverDiverged(format!("equality residual {residual:e}")));
    }
    Ok(L1Solution {
        objective: zeta.lp_norm(1),
        zeta,
        dual: sol.dual,
        gap: sol.gap,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub zeta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest violation of the subgradient optimality condition.
    pub kkt_violation: f64,
}

/// `‖ζ‖₁ + α‖Mζ - g‖²`.
pub fn lasso_objective(m: &DMatrix<f64>, g: &DVector<f64>, alpha: f64, zeta: &DVector<f64>) -> f64 {
    zeta.lp_norm(1) + alpha * (m * zeta - g).norm_squared()
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn kkt_violation(m: &DMatrix<f64>, g: &DVector<f64>, alpha: f64, zeta: &DVector<f64>) -> f64 {
    let grad = m.transpose() * (m * zeta - g) * (2.0 * alpha);
    zeta.iter()
        .zip(grad.iter())
        .map(|(&z, &d)| {
            if z > 0.0 {
                (d + 1.0).abs()
            } else if z < 0.0 {
                (d - 1.0).abs()
            } else {
                (d.abs() - 1.0).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Stationary point of the objective restricted to the support and sign
/// pattern of `zeta`, if it keeps that sign pattern.
fn polish(m: &DMatrix<f64>, g: &DVector<f64>, alpha: f64, zeta: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..zeta.len()).filter(|&j| zeta[j] != 0.0).collect();
    if support.is_empty() || support.len() > m.nrows() {
        return None;
    }
    let ms = m.select_columns(&support);
    let s = DVector::from_iterator(support.len(), support.iter().map(|&j| zeta[j].signum()));
    let rhs = ms.transpose() * g - s.clone() / (2.0 * alpha);
    let sol = (ms.transpose() * &ms).cholesky()?.solve(&rhs);
    if sol.iter().zip(s.iter()).any(|(&v, &sg)| v * sg <= 0.0) {
        return None;
    }
    let mut out = DVector::zeros(zeta.len());
    for (i, &j) in support.iter().enumerate() {
        out[j] = sol[i];
    }
    Some(out)
}

/// Hard linear constraints tying variables to one "center" variable:
/// `ζ_member = h - ζ_center` for each listed member, and optionally
/// `ζ_center = fixed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub center: usize,
    pub fixed: Option<f64>,
    pub members: Vec<(usize, f64)>,
}

/// `min_t (1/2s) Σ (t - m_i)² + Σ |t - k_i|`; the minimiser is a breakpoint
/// or the stationary point of one of the linear pieces.
fn piecewise_quadratic_min(m: &[f64], k: &[f64], s: f64) -> f64 {
    let n = m.len() as f64;
    let mean = m.iter().sum::<f64>() / n;
    let f = |t: f64| {
        m.iter().map(|mi| (t - mi).powi(2)).sum::<f64>() / (2.0 * s) + k.iter().map(|ki| (t - ki).abs()).sum::<f64>()
    };
    let mut best = (f64::INFINITY, 0.0);
    let pieces = (0..=k.len()).map(|j| mean - s * (2.0 * j as f64 - k.len() as f64) / n);
    for t in pieces.chain(k.iter().copied()) {
        let v = f(t);
        if v < best.0 {
            best = (v, t);
        }
    }
    best.1
}

fn prox_linked(a: &DVector<f64>, step: f64, links: &[Link], linked: &[bool]) -> DVector<f64> {
    let mut out = DVector::from_iterator(
        a.len(),
        a.iter().enumerate().map(|(j, &v)| if linked[j] { 0.0 } else { soft_threshold(v, step) }),
    );
    for link in links {
        let t = link.fixed.unwrap_or_else(|| {
            let mut m = vec![a[link.center]];
            let mut k = vec![0.0];
            for &(v, h) in &link.members {
                m.push(h - a[v]);
                k.push(h);
            }
            piecewise_quadratic_min(&m, &k, step)
        });
        out[link.center] = t;
        for &(v, h) in &link.members {
            out[v] = h - t;
        }
    }
    out
}

fn validate_links(n: usize, links: &[Link]) -> Result<Vec<bool>> {
    let mut linked = vec![false; n];
    for link in links {
        for j in std::iter::once(link.center).chain(link.members.iter().map(|m| m.0)) {
            if j >= n {
                return Err(Error::DimensionMismatch(format!("linked variable {j} of {n}")));
            }
            if linked[j] {
                return Err(Error::InvalidArgument(format!("variable {j} appears in two links")));
            }
            linked[j] = true;
        }
    }
    Ok(linked)
}

/// `min ‖ζ‖₁ + α‖Mζ - g‖²` by monotone FISTA with fixed step
/// `1/(2α‖M‖₂²)`, polishing on the current support every `check_every`
/// iterations.
pub fn solve_lasso(m: &DMatrix<f64>, g: &DVector<f64>, alpha: f64, cfg: &SolverConfig) -> Result<LassoSolution> {
    solve_lasso_linked(m, g, alpha, &[], cfg)
}

/// [`solve_lasso`] subject to the hard constraints in `links`. Iterates stay
/// feasible because the proximal step solves each linked group exactly.
/// With links present, stationarity is measured by the gradient mapping and
/// support polishing is skipped.
pub fn solve_lasso_linked(
    m: &DMatrix<f64>,
    g: &DVector<f64>,
    alpha: f64,
    links: &[Link],
    cfg: &SolverConfig,
) -> Result<LassoSolution> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if m.nrows() != g.len() {
        return Err(Error::DimensionMismatch(format!("M has {} rows, g has {}", m.nrows(), g.len())));
    }
    let n = m.ncols();
    let linked = validate_links(n, links)?;
    let spectral = m.clone().singular_values().iter().copied().fold(0.0, f64::max);
    let lip = 2.0 * alpha * spectral * spectral;
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let prox = |v: &DVector<f64>| prox_linked(v, step, links, &linked);
    let mut x = prox(&DVector::zeros(n));
    if spectral == 0.0 {
        return Ok(LassoSolution {
            objective: lasso_objective(m, g, alpha, &x),
            zeta: x,
            iterations: 0,
            kkt_violation: 0.0,
        });
    }
    let mt = m.transpose();
    let grad_at = |v: &DVector<f64>| &mt * (m * v - g) * (2.0 * alpha);
    let stationarity = |v: &DVector<f64>| {
        if links.is_empty() {
            kkt_violation(m, g, alpha, v)
        } else {
            ((v - prox(&(v - grad_at(v) * step))) / step).amax()
        }
    };
    let mut yk = x.clone();
    let mut tk = 1.0f64;
    let mut fx = lasso_objective(m, g, alpha, &x);
    let mut last_checked = fx;
    for it in 1..=cfg.lasso_max_iter {
        let z = prox(&(&yk - grad_at(&yk) * step));
        let fz = lasso_objective(m, g, alpha, &z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let x_prev = x.clone();
        if fz <= fx {
            x = z.clone();
            fx = fz;
        }
        yk = &x + (&z - &x) * (tk / t_next) + (&x - &x_prev) * ((tk - 1.0) / t_next);
        tk = t_next;

        if it % cfg.check_every == 0 || it == 1 {
            if links.is_empty() {
                if let Some(p) = polish(m, g, alpha, &x) {
                    let fp = lasso_objective(m, g, alpha, &p);
                    if fp <= fx {
                        x = p;
                        fx = fp;
                        yk = x.clone();
                        tk = 1.0;
                    }
                }
            }
            if fx > last_checked * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::SolverDiverged(format!(
                    "lasso objective increased from {last_checked} to {fx}"
                )));
            }
            last_checked = fx;
            let viol = stationarity(&x);
            if viol <= cfg.kkt_tol {
                return Ok(LassoSolution {
                    zeta: x,
                    objective: fx,
                    iterations: it,
                    kkt_violation: viol,
                });
            }
        }
        if !fx.is_finite() {
            return Err(Error::SolverDiverged("non-finite lasso objective".into()));
        }
    }
    Err(Error::IterationLimit(cfg.lasso_max_iter))
}

/// Largest box the exhaustive integer search will enumerate.
pub const MAX_INTEGER_SEARCH: f64 = 1e7;

/// Minimum-‖ζ‖₁ integer vector in `[-box, box]^n` with `‖Mζ - g‖∞ < tol`.
/// Points are visited in lexicographic order from `(-box, ..., -box)` and
/// the first minimiser wins.
pub fn exhaustive_integer_l1(m: &DMatrix<f64>, g: &DVector<f64>, bound: i64, tol: f64) -> Result<Vec<i64>> {
    let n = m.ncols();
    if m.nrows() != g.len() {
        return Err(Error::DimensionMismatch(format!("M has {} rows, g has {}", m.nrows(), g.len())));
    }
    let size = ((2 * bound + 1) as f64).powi(n as i32);
    if size > MAX_INTEGER_SEARCH {
        return Err(Error::SearchSpaceTooLarge(size));
    }
    let mut z = vec![-bound; n];
    let mut best: Option<(i64, Vec<i64>)> = None;
    let mut r = DVector::zeros(m.nrows());
    loop {
        let l1: i64 = z.iter().map(|v| v.abs()).sum();
        if best.as_ref().is_none_or(|(b, _)| l1 < *b) {
            r.copy_from(g);
            for (j, &v) in z.iter().enumerate() {
                if v != 0 {
                    r.axpy(-(v as f64), &m.column(j), 1.0);
                }
            }
            if r.amax() < tol {
                best = Some((l1, z.clone()));
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                return best.map(|(_, z)| z).ok_or(Error::NoFeasiblePoint);
            }
            i -= 1;
            if z[i] < bound {
                z[i] += 1;
                break;
            }
            z[i] = -bound;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn identity_system() {
        let m = DMatrix::identity(3, 3);
        let g = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let s = solve_l1_eq(&m, &g, &cfg()).unwrap();
        assert!((s.zeta - &g).amax() < 1e-12);
        assert!(s.gap.abs() < 1e-9);
    }

    #[test]
    fn one_row_system() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let g = DVector::from_vec(vec![2.0]);
        let s = solve_l1_eq(&m, &g, &cfg()).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn negative_rhs_and_redundant_rows() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 1.0, -1.0]);
        let g = DVector::from_vec(vec![-2.0, -4.0, 1.0]);
        let s = solve_l1_eq(&m, &g, &cfg()).unwrap();
        assert!(s.residual < 1e-9);
        // feasible set is the line ζ1 = -2 - 2t, ζ2 = t, ζ3 = t - 1; scan t
        let best = (-400..=400)
            .map(|i| {
                let t = i as f64 / 100.0;
                (-2.0 - 2.0 * t).abs() + t.abs() + (t - 1.0).abs()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((s.objective - best).abs() < 1e-9, "{} vs {best}", s.objective);
        assert!(s.gap.abs() < 1e-6);
    }

    #[test]
    fn infeasible_lp() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(solve_l1_eq(&m, &g, &cfg()), Err(Error::Infeasible)));
    }

    #[test]
    fn lasso_scalar_closed_form() {
        let m = DMatrix::from_element(1, 1, 1.0);
        let g = DVector::from_element(1, 1.0);
        let s = solve_lasso(&m, &g, 1.0, &cfg()).unwrap();
        assert!((s.zeta[0] - 0.5).abs() < 1e-9);
        for alpha in [0.3, 2.0, 50.0] {
            let s = solve_lasso(&m, &g, alpha, &cfg()).unwrap();
            let want = (1.0 - 1.0 / (2.0 * alpha)).max(0.0);
            assert!((s.zeta[0] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn lasso_zero_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        for alpha in [0.1, 10.0, 1e4] {
            let s = solve_lasso(&m, &DVector::zeros(3), alpha, &cfg()).unwrap();
            assert_eq!(s.zeta, DVector::zeros(6));
        }
    }

    #[test]
    fn lasso_penalty_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
            let g = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let l1 = solve_l1_eq(&m, &g, &cfg()).unwrap();
            let la = solve_lasso(&m, &g, 1e6, &cfg()).unwrap();
            assert!((l1.zeta.clone() - &la.zeta).amax() < 1e-3, "{} vs {}", l1.zeta, la.zeta);
            assert!(la.kkt_violation <= 1e-6);
        }
    }

    #[test]
    fn piecewise_quadratic_matches_scan() {
        let cases: [(&[f64], &[f64], f64); 3] = [
            (&[0.3], &[0.0], 1.0),
            (&[2.0, -1.0, 0.5], &[0.0, 1.0, 1.0], 0.2),
            (&[5.0, 5.0], &[0.0, 3.0], 10.0),
        ];
        for (m, k, s) in cases {
            let f = |t: f64| {
                m.iter().map(|mi| (t - mi).powi(2)).sum::<f64>() / (2.0 * s) + k.iter().map(|ki| (t - ki).abs()).sum::<f64>()
            };
            let t = piecewise_quadratic_min(m, k, s);
            let scan = (-20000..=20000).map(|i| f(i as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
            assert!(f(t) <= scan + 1e-12);
        }
    }

    #[test]
    fn linked_lasso_respects_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let g = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let links = [
            Link { center: 0, fixed: None, members: vec![(3, 1.0)] },
            Link { center: 1, fixed: Some(-1.0), members: vec![(4, 0.0)] },
        ];
        let s = solve_lasso_linked(&m, &g, 5.0, &links, &cfg()).unwrap();
        assert!((s.zeta[0] + s.zeta[3] - 1.0).abs() < 1e-12);
        assert_eq!(s.zeta[1], -1.0);
        assert_eq!(s.zeta[4], 1.0);
        // no feasible perturbation along the free direction improves the objective
        for d in [1e-4, -1e-4] {
            let mut p = s.zeta.clone();
            p[0] += d;
            p[3] -= d;
            assert!(lasso_objective(&m, &g, 5.0, &p) >= s.objective - 1e-9);
            let mut q = s.zeta.clone();
            q[2] += d;
            assert!(lasso_objective(&m, &g, 5.0, &q) >= s.objective - 1e-9);
        }
    }

    #[test]
    fn exhaustive_examples() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert_eq!(exhaustive_integer_l1(&m, &DVector::zeros(1), 2, 1e-9).unwrap(), vec![0, 0]);
        assert_eq!(exhaustive_integer_l1(&m, &DVector::from_element(1, 1.0), 2, 1e-9).unwrap(), vec![0, 1]);
        assert!(matches!(
            exhaustive_integer_l1(&m, &DVector::from_element(1, 0.5), 2, 1e-9),
            Err(Error::NoFeasiblePoint)
        ));
        let big = DMatrix::zeros(1, 12);
        assert!(matches!(
            exhaustive_integer_l1(&big, &DVector::zeros(1), 2, 1e-9),
            Err(Error::SearchSpaceTooLarge(_))
        ));
    }

    #[test]
    fn relaxation_lower_bounds_integer_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let m = DMatrix::from_fn(2, 5, |_, _| rng.random_range(-2i32..=2) as f64);
            let z: Vec<i64> = (0..5).map(|_| rng.random_range(-1..=1)).collect();
            let g = &m * DVector::from_iterator(5, z.iter().map(|&v| v as f64));
            let int = exhaustive_integer_l1(&m, &g, 2, 1e-9).unwrap();
            let int_l1: i64 = int.iter().map(|v| v.abs()).sum();
            let real = solve_l1_eq(&m, &g, &cfg()).unwrap();
            assert!(real.objective <= int_l1 as f64 + 1e-9);
        }
    }
}
