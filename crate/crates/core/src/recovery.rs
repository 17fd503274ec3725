//! Recovery of folding numbers: exact integer search on a small design,
//! and the sparse pipeline (center substitution, the linear system in ζ,
//! L1 / lasso solves, time integration, and fusion across ε values).

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{admissible_partition, greedy_cover, Cover, Partition, PhiMatrix};
use crate::signal::{fold, FoldedObservation};
use crate::solver::{solve_l1_eq, solve_lasso_linked, Link, SolverConfig};
use crate::spectral::{min_singular_value_normalized, select_invertible_subset, EigenBasis, SampleDesign, MIN_DESIGN_SINGULAR};

/// Residual below which an exact-search candidate is accepted.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Default bound on folding numbers in the exact search.
pub const DEFAULT_Z_BOUND: i64 = 8;
/// Largest candidate box the exact search will enumerate.
pub const MAX_EXACT_SEARCH: f64 = 1e7;
/// Half-width around 0.5 within which a rounded ζ entry is flagged.
pub const LOW_CONFIDENCE_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactRecovery {
    /// Folding numbers at `S`, then at `S'`.
    pub z_s: Vec<i64>,
    pub z_s_prime: Vec<i64>,
    /// Reconstructed `x(·)` on every vertex.
    pub snapshot: DVector<f64>,
    pub residual: f64,
    pub second_residual: f64,
}

/// Distance from `value` to the nearest multiple of `rate`.
fn wrapped_distance(value: f64, rate: f64) -> f64 {
    let d = value / rate;
    rate * (d - d.round()).abs()
}

/// Search `z(S) ∈ [-z_bound, z_bound]^K` for the folding numbers that make
/// the folded values at `S'` consistent with `y(S') = W_{S'} W_S^{-1} y(S)`.
/// `p_s` and `p_s_prime` follow the order of `design.s` and `design.s_prime`.
pub fn exact_recover_values(
    p_s: &[f64],
    p_s_prime: &[f64],
    design: &SampleDesign,
    basis: &EigenBasis,
    z_bound: i64,
) -> Result<ExactRecovery> {
    let k = design.s.len();
    if p_s.len() != k || p_s_prime.len() != design.s_prime.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} + {} folded values for |S|={}, |S'|={}",
            p_s.len(),
            p_s_prime.len(),
            k,
            design.s_prime.len()
        )));
    }
    if z_bound < 0 {
        return Err(Error::InvalidArgument(format!("z_bound must be >= 0, got {z_bound}")));
    }
    let size = ((2 * z_bound + 1) as f64).powi(k as i32);
    if size > MAX_EXACT_SEARCH {
        return Err(Error::SearchSpaceTooLarge(size));
    }
    let a = design.transfer_matrix(basis)?;
    let (lambda, lambda_p) = (design.lambda, design.lambda_prime);
    let base = &a * DVector::from_column_slice(p_s);
    let steps = &a * lambda;

    let mut z = vec![-z_bound; k];
    let mut best: Option<(f64, Vec<i64>)> = None;
    let mut second = f64::INFINITY;
    loop {
        let zs = DVector::from_iterator(k, z.iter().map(|&v| v as f64));
        let y_sp = &base + &steps * zs;
        let residual = y_sp
            .iter()
            .zip(p_s_prime)
            .map(|(&y, &p)| wrapped_distance(y - p, lambda_p))
            .fold(0.0, f64::max);
        match &best {
            Some((b, _)) if residual >= *b => second = second.min(residual),
            Some((b, _)) => {
                second = *b;
                best = Some((residual, z.clone()));
            }
            None => best = Some((residual, z.clone())),
        }
        let mut i = k;
        loop {
            if i == 0 {
                let (res, z_s) = best.expect("at least one candidate");
                return finish_exact(res, second, z_s, p_s, p_s_prime, design, basis);
            }
            i -= 1;
            if z[i] < z_bound {
                z[i] += 1;
                break;
            }
            z[i] = -z_bound;
        }
    }
}

fn finish_exact(
    best: f64,
    second: f64,
    z_s: Vec<i64>,
    p_s: &[f64],
    p_s_prime: &[f64],
    design: &SampleDesign,
    basis: &EigenBasis,
) -> Result<ExactRecovery> {
    if best >= RESIDUAL_TOL {
        return Err(Error::NoCandidate { best });
    }
    if second < 10.0 * RESIDUAL_TOL {
        return Err(Error::AmbiguousRecovery { best, second });
    }
    let y_s = DVector::from_iterator(
        z_s.len(),
        z_s.iter().zip(p_s).map(|(&z, &p)| design.lambda * z as f64 + p),
    );
    let coeffs = basis
        .rows(&design.s)
        .lu()
        .solve(&y_s)
        .ok_or(Error::SingularWS)?;
    let snapshot = basis.vectors() * coeffs;
    let z_s_prime = design
        .s_prime
        .iter()
        .zip(p_s_prime)
        .map(|(&v, &p)| ((snapshot[v] - p) / design.lambda_prime).round() as i64)
        .collect();
    Ok(ExactRecovery {
        z_s,
        z_s_prime,
        snapshot,
        residual: best,
        second_residual: second,
    })
}

/// [`exact_recover_values`] reading column `step` of a folded observation
/// that contains every vertex of the design.
pub fn exact_recover(
    obs: &FoldedObservation,
    step: usize,
    design: &SampleDesign,
    basis: &EigenBasis,
    z_bound: i64,
) -> Result<ExactRecovery> {
    if step >= obs.steps() {
        return Err(Error::OutOfWindow(step as f64 * obs.t0));
    }
    let read = |vs: &[usize]| -> Result<Vec<f64>> { vs.iter().map(|&v| Ok(obs.p[(obs.row_of(v)?, step)])).collect() };
    exact_recover_values(&read(&design.s)?, &read(&design.s_prime)?, design, basis, z_bound)
}

/// `z̄(v) = ζ(center) + [v ≠ center] ζ(v) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstEntry {
    pub vertex: usize,
    pub center: usize,
    pub offset: i64,
}

/// Per-vertex substitution, aligned with the partition's `V'` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSubstitution {
    pub lambda: f64,
    pub entries: Vec<SubstEntry>,
}

impl AffineSubstitution {
    pub fn vertices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.vertex).collect()
    }

    pub fn position(&self, v: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.vertex == v)
    }

    fn center_positions(&self) -> Vec<usize> {
        let index: HashMap<usize, usize> = self.entries.iter().enumerate().map(|(i, e)| (e.vertex, i)).collect();
        self.entries.iter().map(|e| index[&e.center]).collect()
    }

    /// z̄ on V' from ζ on V'.
    pub fn zbar_from_zeta(&self, zeta: &[i64]) -> Vec<i64> {
        let centers = self.center_positions();
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let own = if e.vertex == e.center { 0 } else { zeta[i] };
                zeta[centers[i]] + own + e.offset
            })
            .collect()
    }

    /// The ζ that reproduces a given z̄.
    pub fn zeta_from_zbar(&self, zbar: &[i64]) -> Vec<i64> {
        let centers = self.center_positions();
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if e.vertex == e.center {
                    zbar[i]
                } else {
                    zbar[i] - zbar[centers[i]] - e.offset
                }
            })
            .collect()
    }
}

/// Offsets from the folded difference values: `-1` when `p̄(v) - p̄(c) ≥ λ/2`,
/// `+1` when `p̄(c) - p̄(v) ≥ λ/2`, else `0`. `p_bar` follows `partition.v_prime`.
pub fn substitute(p_bar: &[f64], partition: &Partition, lambda: f64) -> Result<AffineSubstitution> {
    if p_bar.len() != partition.v_prime.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} folded values for |V'|={}",
            p_bar.len(),
            partition.v_prime.len()
        )));
    }
    let pos: HashMap<usize, usize> = partition.v_prime.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let centers = partition.center_map();
    let entries = partition
        .v_prime
        .iter()
        .zip(&centers)
        .enumerate()
        .map(|(i, (&v, &c))| {
            let diff = p_bar[i] - p_bar[pos[&c]];
            let offset = if v == c {
                0
            } else if diff >= lambda / 2.0 {
                -1
            } else if -diff >= lambda / 2.0 {
                1
            } else {
                0
            };
            SubstEntry {
                vertex: v,
                center: c,
                offset,
            }
        })
        .collect();
    Ok(AffineSubstitution { lambda, entries })
}

/// `M ζ = g`: one row per vertex of `S'`, one column per vertex of `V'`
/// (substitution order).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub m: DMatrix<f64>,
    pub g: DVector<f64>,
    pub columns: Vec<usize>,
    pub rows: Vec<usize>,
}

/// Build `M ζ = g` from `W_{S'}W_S^{-1} p̄(S) - p̄(S') = D_{λ'} z̄(S') - W_{S'}W_S^{-1} D_λ z̄(S)`
/// after substituting z̄ by ζ. `p_bar` follows the substitution order.
pub fn assemble_system(
    design: &SampleDesign,
    basis: &EigenBasis,
    p_bar: &[f64],
    subst: &AffineSubstitution,
) -> Result<LinearSystem> {
    let columns = subst.vertices();
    let mut sampled = design.vertices();
    sampled.sort_unstable();
    let mut cols_sorted = columns.clone();
    cols_sorted.sort_unstable();
    if sampled != cols_sorted || p_bar.len() != columns.len() {
        return Err(Error::DimensionMismatch("S ∪ S' must equal the substitution's V'".into()));
    }
    let a = design.transfer_matrix(basis)?;
    let col_of: HashMap<usize, usize> = columns.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let p_s = DVector::from_iterator(design.s.len(), design.s.iter().map(|v| p_bar[col_of[v]]));
    let ap = &a * p_s;
    let kp = design.s_prime.len();
    let mut m = DMatrix::zeros(kp, columns.len());
    let mut g = DVector::zeros(kp);
    for (row, &sp) in design.s_prime.iter().enumerate() {
        g[row] = ap[row] - p_bar[col_of[&sp]];
        let mut add = |v: usize, coef: f64| {
            let e = &subst.entries[col_of[&v]];
            m[(row, col_of[&e.center])] += coef;
            if v != e.center {
                m[(row, col_of[&v])] += coef;
            }
            g[row] -= coef * e.offset as f64;
        };
        for (j, &s) in design.s.iter().enumerate() {
            add(s, -design.lambda * a[(row, j)]);
        }
        add(sp, design.lambda_prime);
    }
    Ok(LinearSystem {
        m,
        g,
        columns,
        rows: design.s_prime.clone(),
    })
}

/// Folding numbers z̄ observed directly at some sampled vertices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnownFoldings {
    pub entries: Vec<(usize, i64)>,
}

impl KnownFoldings {
    pub fn new(entries: Vec<(usize, i64)>) -> Self {
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSolution {
    pub zeta_real: Vec<f64>,
    pub zeta: Vec<i64>,
    /// z̄ on V' in substitution order.
    pub zbar: Vec<i64>,
    /// `‖Mζ - g‖∞` at the rounded ζ.
    pub residual: f64,
    /// Vertices whose relaxed ζ was close to a half-integer.
    pub low_confidence: Vec<usize>,
}

fn round_solution(zeta_real: Vec<f64>, sys: &LinearSystem, subst: &AffineSubstitution) -> SparseSolution {
    let zeta: Vec<i64> = zeta_real.iter().map(|x| x.round() as i64).collect();
    let low_confidence = zeta_real
        .iter()
        .zip(&sys.columns)
        .filter(|(x, _)| ((*x - x.floor()) - 0.5).abs() < LOW_CONFIDENCE_BAND)
        .map(|(_, &v)| v)
        .collect();
    let zi = DVector::from_iterator(zeta.len(), zeta.iter().map(|&z| z as f64));
    let residual = if sys.m.nrows() == 0 { 0.0 } else { (&sys.m * zi - &sys.g).amax() };
    SparseSolution {
        zbar: subst.zbar_from_zeta(&zeta),
        zeta,
        zeta_real,
        residual,
        low_confidence,
    }
}

fn known_position(subst: &AffineSubstitution, v: usize) -> Result<usize> {
    subst.position(v).ok_or_else(|| Error::InvalidArgument(format!("known folding at {v} outside V'")))
}

/// `min ‖ζ‖₁ s.t. Mζ = g` plus one equality row per known folding, then
/// rounding.
pub fn sparse_recover(
    sys: &LinearSystem,
    known: &KnownFoldings,
    subst: &AffineSubstitution,
    cfg: &SolverConfig,
) -> Result<SparseSolution> {
    let n = sys.columns.len();
    let extra = known.entries.len();
    let mut m = DMatrix::zeros(sys.m.nrows() + extra, n);
    m.rows_mut(0, sys.m.nrows()).copy_from(&sys.m);
    let mut g = DVector::zeros(sys.m.nrows() + extra);
    g.rows_mut(0, sys.g.len()).copy_from(&sys.g);
    for (i, &(v, z)) in known.entries.iter().enumerate() {
        let r = sys.m.nrows() + i;
        let e = &subst.entries[known_position(subst, v)?];
        m[(r, known_position(subst, e.center)?)] += 1.0;
        if v != e.center {
            m[(r, known_position(subst, v)?)] += 1.0;
        }
        g[r] = (z - e.offset) as f64;
    }
    let sol = solve_l1_eq(&m, &g, cfg)?;
    Ok(round_solution(sol.zeta.iter().copied().collect(), sys, subst))
}

/// `min ‖ζ‖₁ + α‖Mζ - g‖²` with known foldings as hard constraints, then
/// rounding.
pub fn sparse_recover_noisy(
    sys: &LinearSystem,
    alpha: f64,
    known: &KnownFoldings,
    subst: &AffineSubstitution,
    cfg: &SolverConfig,
) -> Result<SparseSolution> {
    let mut groups: BTreeMap<usize, Link> = BTreeMap::new();
    for &(v, z) in &known.entries {
        let pos = known_position(subst, v)?;
        let e = subst.entries[pos];
        let cpos = known_position(subst, e.center)?;
        let link = groups.entry(cpos).or_insert(Link {
            center: cpos,
            fixed: None,
            members: Vec::new(),
        });
        let h = (z - e.offset) as f64;
        if v == e.center {
            if link.fixed.is_some_and(|f| f != h) {
                return Err(Error::Infeasible);
            }
            link.fixed = Some(h);
        } else if let Some(&(_, old)) = link.members.iter().find(|m| m.0 == pos) {
            if old != h {
                return Err(Error::Infeasible);
            }
        } else {
            link.members.push((pos, h));
        }
    }
    let links: Vec<Link> = groups.into_values().collect();
    let sol = solve_lasso_linked(&sys.m, &sys.g, alpha, &links, cfg)?;
    Ok(round_solution(sol.zeta.iter().copied().collect(), sys, subst))
}

/// Default regulariser `100/λ²`.
pub fn default_alpha(lambda: f64) -> f64 {
    100.0 / (lambda * lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// The window starts and ends unfolded.
    ZeroEnds,
    /// Folding numbers at column `column` are known.
    Anchor { column: usize, z: Vec<i64> },
}

/// Integrate per-step folding-number differences (`vertices x steps`) into
/// folding numbers over `steps + 1` time points.
pub fn integrate_time(diffs: &DMatrix<i64>, boundary: &Boundary) -> Result<DMatrix<i64>> {
    let (rows, steps) = diffs.shape();
    let mut z = DMatrix::zeros(rows, steps + 1);
    match boundary {
        Boundary::ZeroEnds => {
            for r in 0..rows {
                for c in 0..steps {
                    z[(r, c + 1)] = z[(r, c)] + diffs[(r, c)];
                }
                if z[(r, steps)] != 0 {
                    return Err(Error::BoundaryViolated {
                        vertex: r,
                        step: steps as i64,
                    });
                }
            }
        }
        Boundary::Anchor { column, z: anchor } => {
            if *column > steps || anchor.len() != rows {
                return Err(Error::DimensionMismatch(format!(
                    "anchor column {column} with {} values for a {rows}x{} window",
                    anchor.len(),
                    steps + 1
                )));
            }
            for r in 0..rows {
                z[(r, *column)] = anchor[r];
                for c in *column..steps {
                    z[(r, c + 1)] = z[(r, c)] + diffs[(r, c)];
                }
                for c in (0..*column).rev() {
                    z[(r, c)] = z[(r, c + 1)] - diffs[(r, c)];
                }
            }
        }
    }
    Ok(z)
}

/// Check that simulated folding numbers vanish at both window edges.
pub fn check_zero_ends(z: &DMatrix<i64>) -> Result<()> {
    let last = z.ncols().saturating_sub(1);
    for r in 0..z.nrows() {
        for c in [0, last] {
            if z[(r, c)] != 0 {
                return Err(Error::BoundaryViolated {
                    vertex: r,
                    step: c as i64,
                });
            }
        }
    }
    Ok(())
}

/// Per-entry mode. Among tied values the one that appears in the earliest
/// candidate wins, so candidates should be ordered by ascending ε.
pub fn majority_vote(candidates: &[Vec<i64>]) -> Result<Vec<i64>> {
    let first = candidates.first().ok_or(Error::EmptyCandidates)?;
    if candidates.iter().any(|c| c.len() != first.len()) {
        return Err(Error::DimensionMismatch("candidates differ in length".into()));
    }
    Ok((0..first.len())
        .map(|i| {
            let mut counts: Vec<(i64, usize)> = Vec::new();
            for c in candidates {
                match counts.iter_mut().find(|(v, _)| *v == c[i]) {
                    Some(entry) => entry.1 += 1,
                    None => counts.push((c[i], 1)),
                }
            }
            // counts is in order of first appearance
            let top = counts.iter().map(|c| c.1).max().unwrap();
            counts.iter().find(|c| c.1 == top).unwrap().0
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonChoice {
    pub epsilon: f64,
    pub count: usize,
    pub evaluations: usize,
}

/// Maximum bisection steps of [`epsilon_search`].
pub const EPSILON_SEARCH_ITERS: usize = 30;

/// Bisection on `[eps1, eps2]` for the ε whose partition count is nearest
/// `target`, assuming the count is nonincreasing in ε. Ties keep the
/// smaller ε.
pub fn epsilon_search(
    mut count_at: impl FnMut(f64) -> Result<usize>,
    eps1: f64,
    eps2: f64,
    target: usize,
) -> Result<EpsilonChoice> {
    if !(eps1.is_finite() && eps2.is_finite() && eps1 < eps2) {
        return Err(Error::BadBracket { lo: eps1, hi: eps2 });
    }
    let dist = |c: usize| c.abs_diff(target);
    let mut evaluations = 2;
    let c1 = count_at(eps1)?;
    let c2 = count_at(eps2)?;
    let mut best = if dist(c2) < dist(c1) { (eps2, c2) } else { (eps1, c1) };
    let (mut lo, mut hi) = (eps1, eps2);
    for _ in 0..EPSILON_SEARCH_ITERS {
        if best.1 == target {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let c = count_at(mid)?;
        evaluations += 1;
        if dist(c) < dist(best.1) || (dist(c) == dist(best.1) && mid < best.0) {
            best = (mid, c);
        }
        if c > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EpsilonChoice {
        epsilon: best.0,
        count: best.1,
        evaluations,
    })
}

/// Sample set, partition and design for the sparse pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub cover: Cover,
    pub partition: Partition,
    pub design: SampleDesign,
}

/// Greedy cover of at least `K + K'` vertices at radius `r`. `S` is chosen
/// by pivoted volume selection among all covered vertices; when the covered
/// rows of the basis cannot give a well-conditioned `W_S`, the greedy cover
/// is extended (coverage target doubling its surplus) until they can. `S'`
/// holds the cover centers outside `S` followed by a seeded random choice of
/// the remaining covered vertices, so that `|V'| = K + K'` exactly. Vertices
/// of `V'` left without a center in `V'` become centers themselves. `u` is
/// the first vertex of `S'`.
pub fn plan_sampling(
    basis: &EigenBasis,
    phi: &PhiMatrix,
    r: f64,
    k_prime: usize,
    lambda: f64,
    lambda_prime: f64,
    seed: u64,
) -> Result<SamplingPlan> {
    let k = basis.k();
    let n = basis.n();
    let total = k + k_prime;
    if k_prime == 0 || total > n {
        return Err(Error::InvalidArgument(format!("K + K' = {total} must be in (K, {n}]")));
    }
    let mut target = total;
    let (cover, s) = loop {
        let cover = greedy_cover(phi, r, target)?;
        let attempt = select_invertible_subset(basis, &cover.v_prime).and_then(|s| {
            if min_singular_value_normalized(&basis.rows(&s)) > MIN_DESIGN_SINGULAR {
                Ok(s)
            } else {
                Err(Error::SingularWS)
            }
        });
        match attempt {
            Ok(s) => break (cover, s),
            Err(Error::NoInvertibleSubset | Error::SingularWS) if cover.v_prime.len() < n => {
                target = (total + 2 * (cover.v_prime.len() + 1 - total)).min(n);
            }
            Err(e) => return Err(e),
        }
    };
    let mut s_prime: Vec<usize> = cover.centers.iter().copied().filter(|c| !s.contains(c)).collect();
    let mut others: Vec<usize> = cover
        .v_prime
        .iter()
        .copied()
        .filter(|v| !s.contains(v) && !cover.centers.contains(v))
        .collect();
    others.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    s_prime.extend(others);
    s_prime.truncate(k_prime);
    let mut v_prime: Vec<usize> = s.iter().chain(&s_prime).copied().collect();
    v_prime.sort_unstable();
    let mut centers: Vec<usize> = cover.centers.iter().copied().filter(|c| v_prime.contains(c)).collect();
    for &v in &v_prime {
        if !centers.iter().any(|&c| phi.get(c, v) < r) {
            centers.push(v);
        }
    }
    let partition = admissible_partition(&v_prime, &centers, phi, r)?;
    let u = s_prime[0];
    let design = SampleDesign::new(basis, s, s_prime, u, lambda, lambda_prime)?;
    Ok(SamplingPlan {
        cover,
        partition,
        design,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RecoveryMethod {
    /// Equality-constrained L1.
    L1,
    /// L1 plus `α‖Mζ - g‖²`.
    Lasso { alpha: f64 },
}

/// Outcome of recovering one difference step (or one snapshot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Recovered change of folding numbers on V' (difference mode) or the
    /// folding numbers themselves (snapshot mode), in `V'` order.
    pub z: Vec<i64>,
    pub zbar: Vec<i64>,
    pub carry: Vec<i64>,
    pub residual: f64,
    pub low_confidence: Vec<usize>,
}

/// Runs the sparse pipeline for a fixed plan.
pub struct SparseRecoverer<'a> {
    pub basis: &'a EigenBasis,
    pub plan: &'a SamplingPlan,
    pub method: RecoveryMethod,
    pub solver: SolverConfig,
}

impl SparseRecoverer<'_> {
    pub fn v_prime(&self) -> &[usize] {
        &self.plan.partition.v_prime
    }

    fn solve(&self, p_bar: &[f64], known: &KnownFoldings) -> Result<(SparseSolution, AffineSubstitution)> {
        let subst = substitute(p_bar, &self.plan.partition, self.plan.design.lambda)?;
        let sys = assemble_system(&self.plan.design, self.basis, p_bar, &subst)?;
        let sol = match self.method {
            RecoveryMethod::L1 => sparse_recover(&sys, known, &subst, &self.solver)?,
            RecoveryMethod::Lasso { alpha } => sparse_recover_noisy(&sys, alpha, known, &subst, &self.solver)?,
        };
        Ok((sol, subst))
    }

    /// Recover the change in folding numbers between two consecutive folded
    /// snapshots on V' (`p_n`, `p_next` in `V'` order).
    pub fn recover_difference(&self, p_n: &[f64], p_next: &[f64], known: &KnownFoldings) -> Result<StepOutcome> {
        let vp = self.v_prime();
        if p_n.len() != vp.len() || p_next.len() != vp.len() {
            return Err(Error::DimensionMismatch(format!("snapshots must have |V'|={}", vp.len())));
        }
        let mut p_bar = Vec::with_capacity(vp.len());
        let mut carry = Vec::with_capacity(vp.len());
        for (i, &v) in vp.iter().enumerate() {
            // centered residual so that small differences carry z̄ = 0
            let rate = self.plan.design.rate_of(v);
            let (c, p) = fold(p_next[i] - p_n[i] + rate / 2.0, rate);
            p_bar.push(p - rate / 2.0);
            carry.push(c);
        }
        let (sol, _) = self.solve(&p_bar, known)?;
        Ok(StepOutcome {
            z: sol.zbar.iter().zip(&carry).map(|(zb, c)| zb - c).collect(),
            zbar: sol.zbar,
            carry,
            residual: sol.residual,
            low_confidence: sol.low_confidence,
        })
    }

    /// Recover the folding numbers of a single folded snapshot on V'.
    pub fn recover_snapshot(&self, p: &[f64], known: &KnownFoldings) -> Result<StepOutcome> {
        if p.len() != self.v_prime().len() {
            return Err(Error::DimensionMismatch(format!("snapshot must have |V'|={}", self.v_prime().len())));
        }
        let (sol, _) = self.solve(p, known)?;
        Ok(StepOutcome {
            z: sol.zbar.clone(),
            zbar: sol.zbar,
            carry: vec![0; p.len()],
            residual: sol.residual,
            low_confidence: sol.low_confidence,
        })
    }

    /// Recover every difference step of a folded observation (rows must
    /// include V'). Returns Δz as a `|V'| x (steps - 1)` matrix plus the
    /// per-step outcomes.
    pub fn recover_window(&self, obs: &FoldedObservation) -> Result<(DMatrix<i64>, Vec<StepOutcome>)> {
        let local = obs.restrict(self.v_prime())?;
        let steps = local.steps().saturating_sub(1);
        let mut diffs = DMatrix::zeros(local.vertices.len(), steps);
        let mut outcomes = Vec::with_capacity(steps);
        for n in 0..steps {
            let a: Vec<f64> = local.p.column(n).iter().copied().collect();
            let b: Vec<f64> = local.p.column(n + 1).iter().copied().collect();
            let out = self.recover_difference(&a, &b, &KnownFoldings::default())?;
            for (r, &dz) in out.z.iter().enumerate() {
                diffs[(r, n)] = dz;
            }
            outcomes.push(out);
        }
        Ok((diffs, outcomes))
    }
}

/// Recovery report for one run of the sparse pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub folding_error_count: usize,
    pub residual: f64,
    pub low_confidence_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport<C> {
    pub per_step: Vec<StepReport>,
    pub total_error: usize,
    pub config: C,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, random_weighted_model, standard_topology, Topology, WeightDistribution};
    use crate::partition::{four_vertex_fixture, Component};
    use crate::spectral::{draw_lambda_prime, eigenbasis};

    fn complete8(seed: u64, k: usize) -> EigenBasis {
        let g = standard_topology(Topology::Complete(8)).unwrap();
        let g = random_weighted_model(&g, WeightDistribution::default(), seed).unwrap();
        eigenbasis(&laplacian(&g), k).unwrap()
    }

    #[test]
    fn exact_unfolded_input() {
        let w = complete8(0, 3);
        let design = SampleDesign::new(&w, vec![0, 1, 2], vec![3], 3, 1.0, 0.8).unwrap();
        let coeffs = DVector::from_vec(vec![1.2, 0.1, -0.05]);
        let x = w.vectors() * &coeffs;
        assert!(x.iter().all(|&v| (0.0..0.8).contains(&v)));
        let p_s: Vec<f64> = design.s.iter().map(|&v| x[v]).collect();
        let p_sp = vec![x[3]];
        let rec = exact_recover_values(&p_s, &p_sp, &design, &w, 3).unwrap();
        assert_eq!(rec.z_s, vec![0, 0, 0]);
        assert_eq!(rec.z_s_prime, vec![0]);
        assert!((rec.snapshot - x).amax() < 1e-9);
    }

    #[test]
    fn exact_folded_random_signals() {
        for seed in 0..20 {
            let w = complete8(seed, 3);
            let lp = draw_lambda_prime(1.0, seed);
            let design = SampleDesign::new(&w, vec![0, 1, 2], vec![3], 3, 1.0, lp).unwrap();
            let coeffs = DVector::from_vec(vec![4.0, -2.5, 1.7]);
            let x = w.vectors() * coeffs;
            let fs: Vec<(i64, f64)> = design.s.iter().map(|&v| fold(x[v], 1.0)).collect();
            let (zu, pu) = fold(x[3], lp);
            let p_s: Vec<f64> = fs.iter().map(|f| f.1).collect();
            let rec = exact_recover_values(&p_s, &[pu], &design, &w, 3).unwrap();
            assert_eq!(rec.z_s, fs.iter().map(|f| f.0).collect::<Vec<_>>());
            assert_eq!(rec.z_s_prime, vec![zu]);
            assert!((rec.snapshot - &x).amax() < 1e-6);
        }
    }

    #[test]
    fn exact_ambiguous_with_rational_ratio() {
        // two vertices with identical basis entries: W_u W_S^{-1} = 1, and
        // the same folding rate everywhere leaves the shift undetermined
        let vectors = DMatrix::from_column_slice(3, 1, &[0.5, 0.5, 0.70710678]);
        let w = EigenBasis::from_parts(vectors, vec![0.0]).unwrap();
        let design = SampleDesign::new(&w, vec![0], vec![1], 1, 1.0, 1.0).unwrap();
        assert!(matches!(
            exact_recover_values(&[0.3], &[0.3], &design, &w, 2),
            Err(Error::AmbiguousRecovery { .. })
        ));
        assert!(matches!(
            exact_recover_values(&[0.3], &[0.6], &design, &w, 2),
            Err(Error::NoCandidate { .. })
        ));
        assert!(matches!(
            exact_recover_values(&[0.3], &[0.3], &design, &w, 5_000_000),
            Err(Error::SearchSpaceTooLarge(_))
        ));
    }

    fn fixture_partition() -> Partition {
        admissible_partition(&[0, 1, 2], &[0, 1], &four_vertex_fixture(), 2.0).unwrap()
    }

    #[test]
    fn substitution_cases() {
        let part = fixture_partition();
        let lambda = 1.0;
        // v2 (index 2) sits with center 0
        let s = substitute(&[0.1, 0.5, 0.9], &part, lambda).unwrap();
        assert_eq!(s.entries[0], SubstEntry { vertex: 0, center: 0, offset: 0 });
        assert_eq!(s.entries[1], SubstEntry { vertex: 1, center: 1, offset: 0 });
        assert_eq!(s.entries[2].offset, -1);
        let s = substitute(&[0.9, 0.5, 0.1], &part, lambda).unwrap();
        assert_eq!(s.entries[2].offset, 1);
        let s = substitute(&[0.4, 0.5, 0.6], &part, lambda).unwrap();
        assert_eq!(s.entries[2].offset, 0);

        let zbar = vec![3, -1, 2];
        let s = substitute(&[0.1, 0.5, 0.9], &part, lambda).unwrap();
        assert_eq!(s.zbar_from_zeta(&s.zeta_from_zbar(&zbar)), zbar);
    }

    #[test]
    fn system_matches_hand_expansion() {
        // K=2, K'=1 with a hand-built basis on 3 vertices
        let vectors = DMatrix::from_row_slice(3, 2, &[0.6, 0.8, 0.8, -0.6, 0.0, 0.0]);
        let mut vectors = vectors;
        vectors[(2, 0)] = 0.3;
        vectors[(2, 1)] = 0.2;
        let w = EigenBasis::from_parts(vectors, vec![0.0, 1.0]).unwrap();
        let (lam, lamp) = (1.0, 0.7);
        let design = SampleDesign::new(&w, vec![0, 1], vec![2], 2, lam, lamp).unwrap();
        // W_S is orthogonal, so W_S^{-1} = W_S^T and A = W_2 W_S^T
        let a0 = 0.3 * 0.6 + 0.2 * 0.8;
        let a1 = 0.3 * 0.8 + 0.2 * -0.6;
        let partition = Partition {
            r: 1.0,
            v_prime: vec![0, 1, 2],
            components: vec![
                Component { center: 0, members: vec![0, 2] },
                Component { center: 1, members: vec![1] },
            ],
        };
        let p_bar = [0.1, 0.4, 0.8];
        let subst = substitute(&p_bar, &partition, lam).unwrap();
        assert_eq!(subst.entries[2].offset, -1);
        let sys = assemble_system(&design, &w, &p_bar, &subst).unwrap();
        // z̄0 = ζ0, z̄1 = ζ1, z̄2 = ζ0 + ζ2 - 1
        // row: -λ a0 z̄0 - λ a1 z̄1 + λ' z̄2 = a0 p0 + a1 p1 - p2
        let expected_m = [-lam * a0 + lamp, -lam * a1, lamp];
        for (j, e) in expected_m.iter().enumerate() {
            assert!((sys.m[(0, j)] - e).abs() < 1e-12, "column {j}");
        }
        let expected_g = a0 * 0.1 + a1 * 0.4 - 0.8 + lamp;
        assert!((sys.g[0] - expected_g).abs() < 1e-12);
    }

    #[test]
    fn unfolded_difference_gives_zero_solution() {
        let w = complete8(1, 3);
        let design = SampleDesign::new(&w, vec![0, 1, 2], vec![3, 4], 3, 1.0, 1.0).unwrap();
        let coeffs = DVector::from_vec(vec![0.3, 0.05, 0.02]);
        let y = w.vectors() * coeffs;
        let partition = Partition {
            r: 1.0,
            v_prime: vec![0, 1, 2, 3, 4],
            components: vec![Component { center: 0, members: vec![0, 1, 2, 3, 4] }],
        };
        let p_bar: Vec<f64> = partition.v_prime.iter().map(|&v| y[v]).collect();
        let subst = substitute(&p_bar, &partition, 1.0).unwrap();
        assert!(subst.entries.iter().all(|e| e.offset == 0));
        let sys = assemble_system(&design, &w, &p_bar, &subst).unwrap();
        assert!(sys.g.amax() < 1e-9);
        let sol = sparse_recover(&sys, &KnownFoldings::default(), &subst, &SolverConfig::default()).unwrap();
        assert!(sol.zeta.iter().all(|&z| z == 0));
        let noisy = sparse_recover_noisy(&sys, 3.0, &KnownFoldings::default(), &subst, &SolverConfig::default()).unwrap();
        assert!(noisy.zeta.iter().all(|&z| z == 0));
    }

    #[test]
    fn contradicting_known_folding_is_infeasible() {
        let w = complete8(2, 3);
        let design = SampleDesign::new(&w, vec![0, 1, 2], vec![3, 4], 3, 1.0, 1.0).unwrap();
        let partition = Partition {
            r: 1.0,
            v_prime: vec![0, 1, 2, 3, 4],
            components: (0..5).map(|v| Component { center: v, members: vec![v] }).collect(),
        };
        let p_bar = [0.1, 0.2, 0.3, 0.4, 0.5];
        let subst = substitute(&p_bar, &partition, 1.0).unwrap();
        let sys = assemble_system(&design, &w, &p_bar, &subst).unwrap();
        let known = KnownFoldings::new(vec![(0, 1), (0, 2)]);
        assert!(matches!(
            sparse_recover(&sys, &known, &subst, &SolverConfig::default()),
            Err(Error::Infeasible)
        ));
        assert!(matches!(
            sparse_recover_noisy(&sys, 1.0, &known, &subst, &SolverConfig::default()),
            Err(Error::Infeasible)
        ));
    }

    #[test]
    fn integrate_examples() {
        let zero = DMatrix::zeros(3, 5);
        assert_eq!(integrate_time(&zero, &Boundary::ZeroEnds).unwrap(), DMatrix::zeros(3, 6));
        let mut d = DMatrix::zeros(1, 5);
        d[(0, 2)] = 1;
        let z = integrate_time(&d, &Boundary::Anchor { column: 0, z: vec![0] }).unwrap();
        assert_eq!(z.row(0).iter().copied().collect::<Vec<_>>(), vec![0, 0, 0, 1, 1, 1]);
        assert!(matches!(
            integrate_time(&d, &Boundary::ZeroEnds),
            Err(Error::BoundaryViolated { vertex: 0, step: 5 })
        ));
        let back = integrate_time(&d, &Boundary::Anchor { column: 5, z: vec![1] }).unwrap();
        assert_eq!(back, z);
    }

    #[test]
    fn vote_examples() {
        assert!(matches!(majority_vote(&[]), Err(Error::EmptyCandidates)));
        let c = vec![1, 2, 3];
        assert_eq!(majority_vote(&[c.clone(), c.clone()]).unwrap(), c);
        assert_eq!(majority_vote(&[vec![0], vec![0], vec![1]]).unwrap(), vec![0]);
        assert_eq!(majority_vote(&[vec![2], vec![1], vec![1], vec![2]]).unwrap(), vec![2]);
    }

    #[test]
    fn epsilon_search_extremes() {
        // count = ceil(10 / (1 + ε)), nonincreasing
        let count = |e: f64| Ok((10.0 / (1.0 + e)).ceil() as usize);
        let hi = epsilon_search(count, 0.0, 1e6, 1).unwrap();
        assert_eq!(hi.count, 1);
        assert!(hi.evaluations <= 32);
        let lo = epsilon_search(count, 1e-9, 100.0, 10).unwrap();
        assert_eq!(lo.count, 10);
        assert!(lo.epsilon < 1e-3);
        assert!(matches!(epsilon_search(count, 1.0, 1.0, 3), Err(Error::BadBracket { .. })));
    }
}
