//! Laplacian eigenbases, sampling-set selection, and the integer-relation
//! machinery behind the identifiability conditions for exact recovery.

use nalgebra::{DMatrix, DVector, RowDVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{laplacian, random_weighted_model, Laplacian, WeightDistribution, WeightedGraph};

/// Pivot magnitude below which a sampling submatrix is treated as singular.
pub const PIVOT_TOL: f64 = 1e-10;

/// Smallest singular value of the row-normalised `W_S` accepted by
/// [`SampleDesign`]. Below this, `W_{S'}W_S^{-1}` has entries beyond 1e6
/// and the recovery programs lose the resolution to separate foldings.
pub const MIN_DESIGN_SINGULAR: f64 = 1e-6;

/// Orthonormal Laplacian eigenvectors `w_1..w_K` (as columns) with their
/// eigenvalues in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl EigenBasis {
    /// Build a basis from explicit columns. Used for hand-constructed bases
    /// (e.g. the separable cosine basis of a lattice).
    pub fn from_parts(vectors: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        if vectors.ncols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} eigenvalues",
                vectors.ncols(),
                eigenvalues.len()
            )));
        }
        if vectors.ncols() == 0 || vectors.ncols() > vectors.nrows() {
            return Err(Error::KOutOfRange {
                k: vectors.ncols(),
                n: vectors.nrows(),
            });
        }
        Ok(Self {
            vectors,
            eigenvalues,
        })
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn k(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `W_v`, the row of the basis at vertex `v`.
    pub fn row(&self, v: usize) -> RowDVector<f64> {
        self.vectors.row(v).into_owned()
    }

    /// `W_S`: rows of the basis indexed by `rows`, in order.
    pub fn rows(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.k(), |i, j| self.vectors[(rows[i], j)])
    }

    /// Keep the first `k` columns.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::KOutOfRange { k, n: self.k() });
        }
        Ok(Self {
            vectors: self.vectors.columns(0, k).into_owned(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
        })
    }

    /// Select an arbitrary subset of columns (in the given order).
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.iter().any(|&c| c >= self.k()) {
            return Err(Error::KOutOfRange {
                k: cols.len(),
                n: self.k(),
            });
        }
        Ok(Self {
            vectors: self.vectors.select_columns(cols),
            eigenvalues: cols.iter().map(|&c| self.eigenvalues[c]).collect(),
        })
    }

    /// Largest deviation of `W^T W` from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let gram = self.vectors.transpose() * &self.vectors;
        (gram - DMatrix::identity(self.k(), self.k())).amax()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * m.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Flip `v` so that its largest-magnitude entry is positive. Near-ties
/// resolve to the lowest index.
fn fix_sign(mut v: DVector<f64>) -> DVector<f64> {
    let max = v.amax();
    if let Some(i) = v.iter().position(|x| x.abs() >= max * (1.0 - 1e-9)) {
        if v[i] < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// First `k` eigenvectors of `l` (ascending eigenvalue).
pub fn eigenbasis(l: &Laplacian, k: usize) -> Result<EigenBasis> {
    let n = l.n();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    check_symmetric(l.matrix())?;
    let eig = SymmetricEigen::new(l.matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the decomposition's order on exact ties
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // re-orthonormalise against earlier columns (modified Gram-Schmidt)
        for c in &columns {
            let proj = c.dot(&v);
            v.axpy(-proj, c, 1.0);
        }
        let norm = v.norm();
        v /= norm;
        columns.push(fix_sign(v));
    }
    let eigenvalues = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    EigenBasis::from_parts(DMatrix::from_columns(&columns), eigenvalues)
}

/// All `n` eigenvalues of `l`, ascending.
pub fn spectrum(l: &Laplacian) -> Result<Vec<f64>> {
    check_symmetric(l.matrix())?;
    let mut ev: Vec<f64> = l.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Greedy volume maximisation: repeatedly take the candidate whose basis row
/// has the largest component orthogonal to the rows already chosen (QR with
/// row pivoting). Ties go to the earliest candidate.
pub fn select_invertible_subset(basis: &EigenBasis, candidates: &[usize]) -> Result<Vec<usize>> {
    let k = basis.k();
    if candidates.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} candidates for K={k}",
            candidates.len()
        )));
    }
    if let Some(&v) = candidates.iter().find(|&&v| v >= basis.n()) {
        return Err(Error::VertexOutOfRange {
            vertex: v,
            n: basis.n(),
        });
    }
    // residual rows stored contiguously; squared norms are downdated and
    // recomputed once they lose more than half their digits
    let n_cand = candidates.len();
    let mut residual: Vec<f64> = candidates
        .iter()
        .flat_map(|&v| basis.vectors().row(v).iter().copied().collect::<Vec<_>>())
        .collect();
    let sq = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut norm2: Vec<f64> = residual.chunks_exact(k).map(sq).collect();
    let mut fresh = norm2.clone();
    let mut taken = vec![false; n_cand];
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n_cand {
            if taken[i] {
                continue;
            }
            if norm2[i] < 1e-8 * fresh[i] {
                norm2[i] = sq(&residual[i * k..(i + 1) * k]);
                fresh[i] = norm2[i];
            }
            if best.is_none_or(|(_, b)| norm2[i] > b) {
                best = Some((i, norm2[i]));
            }
        }
        let (pivot, _) = best.ok_or(Error::NoInvertibleSubset)?;
        let norm = sq(&residual[pivot * k..(pivot + 1) * k]).sqrt();
        if norm < PIVOT_TOL {
            return Err(Error::NoInvertibleSubset);
        }
        taken[pivot] = true;
        chosen.push(candidates[pivot]);
        let q: Vec<f64> = residual[pivot * k..(pivot + 1) * k].iter().map(|x| x / norm).collect();
        residual.par_chunks_mut(k).zip(norm2.par_iter_mut()).enumerate().for_each(|(i, (r, n2))| {
            if !taken[i] {
                let proj = dot(&q, r);
                for (x, &qv) in r.iter_mut().zip(&q) {
                    *x -= proj * qv;
                }
                *n2 = (*n2 - proj * proj).max(0.0);
            }
        });
    }
    Ok(chosen)
}

/// Dot product with independent partial sums so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

/// Smallest singular value of `m` after scaling every row to unit length.
/// Used as the invertibility test for sampling matrices, where a raw
/// determinant threshold would underflow for large K.
pub fn min_singular_value_normalized(m: &DMatrix<f64>) -> f64 {
    let mut scaled = m.clone();
    for mut row in scaled.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    scaled.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// `|det W_S|`.
pub fn abs_det_rows(basis: &EigenBasis, rows: &[usize]) -> f64 {
    basis.rows(rows).determinant().abs()
}

/// Sampling design for exact recovery: `S` carries folding rate `lambda`,
/// `S'` carries `lambda_prime`, and `u ∈ S'` is the vertex whose transfer
/// row must be free of small integer relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDesign {
    pub s: Vec<usize>,
    pub s_prime: Vec<usize>,
    pub u: usize,
    pub lambda: f64,
    pub lambda_prime: f64,
}

impl SampleDesign {
    pub fn new(
        basis: &EigenBasis,
        s: Vec<usize>,
        s_prime: Vec<usize>,
        u: usize,
        lambda: f64,
        lambda_prime: f64,
    ) -> Result<Self> {
        if s.len() != basis.k() {
            return Err(Error::DimensionMismatch(format!(
                "|S|={} but K={}",
                s.len(),
                basis.k()
            )));
        }
        if s_prime.is_empty() {
            return Err(Error::InvalidArgument("S' must be non-empty".into()));
        }
        if !s_prime.contains(&u) {
            return Err(Error::InvalidArgument(format!("u={u} is not in S'")));
        }
        if s_prime.iter().any(|v| s.contains(v)) {
            return Err(Error::InvalidArgument("S and S' overlap".into()));
        }
        for &v in s.iter().chain(&s_prime) {
            if v >= basis.n() {
                return Err(Error::VertexOutOfRange {
                    vertex: v,
                    n: basis.n(),
                });
            }
        }
        if !(lambda > 0.0 && lambda_prime > 0.0) {
            return Err(Error::InvalidArgument("folding rates must be positive".into()));
        }
        let design = Self {
            s,
            s_prime,
            u,
            lambda,
            lambda_prime,
        };
        if min_singular_value_normalized(&basis.rows(&design.s)) <= MIN_DESIGN_SINGULAR {
            return Err(Error::SingularWS);
        }
        Ok(design)
    }

    /// All sampled vertices, `S` first then `S'`.
    pub fn vertices(&self) -> Vec<usize> {
        self.s.iter().chain(&self.s_prime).copied().collect()
    }

    /// Folding rate at a sampled vertex.
    pub fn rate_of(&self, v: usize) -> f64 {
        if self.s.contains(&v) {
            self.lambda
        } else {
            self.lambda_prime
        }
    }

    /// `W_{S'} W_S^{-1}` (K' x K).
    pub fn transfer_matrix(&self, basis: &EigenBasis) -> Result<DMatrix<f64>> {
        let ws_t = basis.rows(&self.s).transpose();
        let lu = ws_t.lu();
        let rhs = basis.rows(&self.s_prime).transpose();
        let sol = lu.solve(&rhs).ok_or(Error::SingularWS)?;
        Ok(sol.transpose())
    }

    /// `W_u W_S^{-1}`.
    pub fn transfer_row(&self, basis: &EigenBasis) -> Result<Vec<f64>> {
        let ws_t = basis.rows(&self.s).transpose();
        let rhs = basis.row(self.u).transpose();
        let sol = ws_t.lu().solve(&rhs).ok_or(Error::SingularWS)?;
        Ok(sol.iter().copied().collect())
    }
}

/// `λ'` drawn uniformly from `(0.5 λ, λ)`.
pub fn draw_lambda_prime(lambda: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.random_range(0.5 * lambda..lambda)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationCheck {
    NoRelationFound,
    /// `Σ coefficients_j row_j + constant ≈ 0`; `constant` is present only
    /// when the search included the constant 1.
    Relation {
        coefficients: Vec<i64>,
        constant: Option<i64>,
    },
}

impl RelationCheck {
    pub fn is_independent(&self) -> bool {
        matches!(self, RelationCheck::NoRelationFound)
    }
}

/// Largest `(2Q+1)^K` the relation search will enumerate.
pub const MAX_RELATION_SEARCH: f64 = 1e8;

/// Bounded search for an integer relation among the entries of `row`
/// (optionally together with the constant 1). Coefficient vectors are
/// visited in lexicographic order starting from `(-Q, ..., -Q)`; the
/// constant coefficient is the last coordinate.
pub fn integer_relation_check(row: &[f64], include_one: bool, q: i64, tol: f64) -> Result<RelationCheck> {
    if q < 1 {
        return Err(Error::InvalidArgument(format!("Q must be >= 1, got {q}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let k = row.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty row".into()));
    }
    let size = ((2 * q + 1) as f64).powi(k as i32);
    if size > MAX_RELATION_SEARCH {
        return Err(Error::SearchSpaceTooLarge(size));
    }
    let mut coeffs = vec![-q; k];
    loop {
        if coeffs.iter().any(|&c| c != 0) {
            let s: f64 = coeffs.iter().zip(row).map(|(&c, &x)| c as f64 * x).sum();
            if include_one {
                let lo = ((-s - tol).ceil() as i64).max(-q);
                let hi = ((-s + tol).floor() as i64).min(q);
                for b in lo..=hi {
                    if (s + b as f64).abs() < tol {
                        return Ok(RelationCheck::Relation {
                            coefficients: coeffs,
                            constant: Some(b),
                        });
                    }
                }
            } else if s.abs() < tol {
                return Ok(RelationCheck::Relation {
                    coefficients: coeffs,
                    constant: None,
                });
            }
        }
        // odometer increment, last coordinate fastest
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(RelationCheck::NoRelationFound);
            }
            i -= 1;
            if coeffs[i] < q {
                coeffs[i] += 1;
                break;
            }
            coeffs[i] = -q;
        }
    }
}

/// Checkable generic properties of random weighted models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Property {
    /// Laplacian eigenvalues all distinct.
    P0,
    /// `W_S` invertible.
    P1,
    /// Entries of `W_u W_S^{-1}` independent over the integers.
    P2,
    /// `W_u W_S^{-1}` has an entry with no small rational relation.
    P3,
    /// `1` together with the entries of `W_u W_S^{-1}` independent over the integers.
    P4,
}

impl std::str::FromStr for Property {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P0" => Ok(Property::P0),
            "P1" => Ok(Property::P1),
            "P2" => Ok(Property::P2),
            "P3" => Ok(Property::P3),
            "P4" => Ok(Property::P4),
            other => Err(Error::Parse(format!("unknown property {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub k: usize,
    pub s: Vec<usize>,
    pub u: usize,
    pub trials: usize,
    pub seed: u64,
    pub q: i64,
    pub tol: f64,
    #[serde(default)]
    pub dist: WeightDistribution,
}

impl HarnessConfig {
    /// Defaults: `S = {0..K-1}`, `u = K`, `Q = 10`, `tol = 1e-9`.
    pub fn new(k: usize, trials: usize, seed: u64) -> Self {
        Self {
            k,
            s: (0..k).collect(),
            u: k,
            trials,
            seed,
            q: 10,
            tol: 1e-9,
            dist: WeightDistribution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub property: Property,
    pub trials: usize,
    pub fraction: f64,
    #[serde(rename = "Q")]
    pub q: i64,
    pub tol: f64,
    pub seed: u64,
}

/// Minimum gap between consecutive Laplacian eigenvalues.
pub fn min_eigen_gap(l: &Laplacian) -> Result<f64> {
    let ev = spectrum(l)?;
    Ok(ev.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
}

/// Evaluate one property on one weighted graph with basis `w`.
fn property_holds_for_basis(
    w: &EigenBasis,
    property: Property,
    s: &[usize],
    u: usize,
    q: i64,
    tol: f64,
) -> Result<bool> {
    let ws = w.rows(s);
    if ws.determinant().abs() <= PIVOT_TOL {
        return Ok(false);
    }
    if property == Property::P1 {
        return Ok(true);
    }
    let rhs = w.row(u).transpose();
    let x: Vec<f64> = match ws.transpose().lu().solve(&rhs) {
        Some(sol) => sol.iter().copied().collect(),
        None => return Ok(false),
    };
    Ok(match property {
        Property::P2 => integer_relation_check(&x, false, q, tol)?.is_independent(),
        Property::P3 => {
            let mut any = false;
            for &xj in &x {
                if integer_relation_check(&[xj], true, q, tol)?.is_independent() {
                    any = true;
                    break;
                }
            }
            any
        }
        Property::P4 => integer_relation_check(&x, true, q, tol)?.is_independent(),
        Property::P0 | Property::P1 => unreachable!(),
    })
}

/// Does `property` hold for this particular weighted graph?
pub fn property_holds(g: &WeightedGraph, property: Property, cfg: &HarnessConfig) -> Result<bool> {
    let l = laplacian(g);
    if property == Property::P0 {
        return Ok(min_eigen_gap(&l)? > 1e-8);
    }
    validate_s_u(g.n(), cfg)?;
    let w = eigenbasis(&l, cfg.k)?;
    property_holds_for_basis(&w, property, &cfg.s, cfg.u, cfg.q, cfg.tol)
}

fn validate_s_u(n: usize, cfg: &HarnessConfig) -> Result<()> {
    if cfg.s.len() != cfg.k {
        return Err(Error::DimensionMismatch(format!(
            "|S|={} but K={}",
            cfg.s.len(),
            cfg.k
        )));
    }
    for &v in cfg.s.iter().chain(std::iter::once(&cfg.u)) {
        if v >= n {
            return Err(Error::VertexOutOfRange { vertex: v, n });
        }
    }
    if cfg.s.contains(&cfg.u) {
        return Err(Error::InvalidArgument(format!("u={} lies in S", cfg.u)));
    }
    Ok(())
}

/// Fraction of random weighted models of `topology` on which `property`
/// holds. Trial `i` uses seed `cfg.seed + i`.
pub fn property_harness(topology: &WeightedGraph, property: Property, cfg: &HarnessConfig) -> Result<HarnessReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let outcomes: Vec<bool> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let g = random_weighted_model(topology, cfg.dist, cfg.seed.wrapping_add(t as u64))?;
            property_holds(&g, property, cfg)
        })
        .collect::<Result<_>>()?;
    let hits = outcomes.iter().filter(|&&b| b).count();
    Ok(HarnessReport {
        property,
        trials: cfg.trials,
        fraction: hits as f64 / cfg.trials as f64,
        q: cfg.q,
        tol: cfg.tol,
        seed: cfg.seed,
    })
}

/// Largest number of eigenvector subsets the Q-property enumeration visits.
pub const MAX_SUBSETS: usize = 500;

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Strong ("Q") form of P1..P4: fraction of all K-subsets of the full
/// eigenbasis for which the P-check passes. Requires `P0` on `g` and
/// `C(n, K) <= 500`.
pub fn subset_property_fraction(g: &WeightedGraph, property: Property, cfg: &HarnessConfig) -> Result<f64> {
    if property == Property::P0 {
        return Err(Error::InvalidArgument("P0 has no subset form".into()));
    }
    validate_s_u(g.n(), cfg)?;
    let n = g.n();
    let count = binomial(n, cfg.k);
    if count > MAX_SUBSETS {
        return Err(Error::SearchSpaceTooLarge(count as f64));
    }
    let full = eigenbasis(&laplacian(g), n)?;
    let mut idx: Vec<usize> = (0..cfg.k).collect();
    let mut hits = 0usize;
    let mut total = 0usize;
    loop {
        let sub = full.select_columns(&idx)?;
        if property_holds_for_basis(&sub, property, &cfg.s, cfg.u, cfg.q, cfg.tol)? {
            hits += 1;
        }
        total += 1;
        // next combination
        let mut i = cfg.k;
        loop {
            if i == 0 {
                return Ok(hits as f64 / total as f64);
            }
            i -= 1;
            if idx[i] < n - cfg.k + i {
                idx[i] += 1;
                for j in i + 1..cfg.k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
