//! The φ pseudo-metric on vertices, φ-balls, greedy sampling by submodular
//! cover, admissible partitions, partition complexity, and λ-sparsity.

use fixedbitset::FixedBitSet;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SpectralBounds;
use crate::spectral::EigenBasis;

/// Largest sample set for which exact complexity is computed.
pub const MAX_EXACT: usize = 20;

/// Symmetric, nonnegative, zero-diagonal matrix of vertex distances.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiMatrix(DMatrix<f64>);

impl PhiMatrix {
    /// Wrap explicit values. Only symmetry, the zero diagonal and
    /// nonnegativity are checked; hand-made fixtures need not be metrics.
    pub fn from_values(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!("{}x{} φ matrix", m.nrows(), m.ncols())));
        }
        let asym = (&m - m.transpose()).amax();
        if asym > 0.0 {
            return Err(Error::NotSymmetric(asym));
        }
        if m.diagonal().iter().any(|&d| d != 0.0) || m.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidArgument("φ must be nonnegative with zero diagonal".into()));
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.0[(u, v)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Largest `φ(u,w) - φ(u,v) - φ(v,w)` over all triples (≤ 0 for a
    /// pseudo-metric).
    pub fn max_triangle_violation(&self) -> f64 {
        let n = self.n();
        (0..n)
            .into_par_iter()
            .map(|u| {
                let mut worst = f64::NEG_INFINITY;
                for v in 0..n {
                    for w in 0..n {
                        worst = worst.max(self.get(u, w) - self.get(u, v) - self.get(v, w));
                    }
                }
                worst
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }

    /// Sorted vertices whose distance from `v` is strictly below `r`.
    pub fn ball(&self, v: usize, r: f64) -> Vec<usize> {
        (0..self.n()).filter(|&u| self.get(v, u) < r).collect()
    }

    fn ball_bits(&self, v: usize, r: f64) -> FixedBitSet {
        let mut bits = FixedBitSet::with_capacity(self.n());
        for u in 0..self.n() {
            if self.get(v, u) < r {
                bits.insert(u);
            }
        }
        bits
    }
}

/// `γ_i = √2 Σ_f ω_f a_{i,f} √(1 - cos(πf/B))` with trapezoid weights `ω_f`.
pub fn phi_coefficients(bounds: &SpectralBounds) -> Vec<f64> {
    let b = bounds.bandlimit();
    (0..bounds.k())
        .map(|i| {
            let s: f64 = (0..bounds.f_points())
                .map(|j| {
                    let f = bounds.frequency(j);
                    bounds.quad_weight(j) * bounds.a()[(i, j)] * (1.0 - (std::f64::consts::PI * f / b).cos()).max(0.0).sqrt()
                })
                .sum();
            std::f64::consts::SQRT_2 * s
        })
        .collect()
}

/// `φ(u,v) = Σ_i γ_i |w_i(u) - w_i(v)|`.
pub fn phi_from_coefficients(basis: &EigenBasis, gamma: &[f64]) -> Result<PhiMatrix> {
    if gamma.len() != basis.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} φ coefficients for K={}",
            gamma.len(),
            basis.k()
        )));
    }
    let n = basis.n();
    let k = basis.k();
    // row-major copy of γ_i w_i(v) for cache-friendly pair sums
    let scaled: Vec<f64> = (0..n)
        .flat_map(|v| (0..k).map(move |i| (v, i)))
        .map(|(v, i)| gamma[i] * basis.vectors()[(v, i)])
        .collect();
    // each pair is summed once and mirrored, so the matrix is exactly
    // symmetric
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let a = &scaled[u * k..(u + 1) * k];
            (u + 1..n).map(|v| l1_distance(a, &scaled[v * k..(v + 1) * k])).collect()
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (u, row) in upper.iter().enumerate() {
        for (i, &d) in row.iter().enumerate() {
            m[(u, u + 1 + i)] = d;
            m[(u + 1 + i, u)] = d;
        }
    }
    PhiMatrix::from_values(m)
}

/// `Σ |a_i - b_i|` with independent partial sums so the loop vectorises.
fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += (x[i] - y[i]).abs();
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y).abs()).sum();
    acc.iter().sum::<f64>() + tail
}

/// φ for signals with spectral bounds `bounds` on the basis.
pub fn phi_matrix(basis: &EigenBasis, bounds: &SpectralBounds) -> Result<PhiMatrix> {
    if bounds.k() != basis.k() {
        return Err(Error::DimensionMismatch(format!(
            "bounds K={} but basis K={}",
            bounds.k(),
            basis.k()
        )));
    }
    phi_from_coefficients(basis, &phi_coefficients(bounds))
}

/// φ for still images: no frequency integral, unit coefficients.
pub fn phi_matrix_image(basis: &EigenBasis) -> Result<PhiMatrix> {
    phi_from_coefficients(basis, &vec![1.0; basis.k()])
}

/// `B_{φ,r}(v)`.
pub fn ball(v: usize, r: f64, phi: &PhiMatrix) -> Vec<usize> {
    phi.ball(v, r)
}

/// Union of balls around a set of centers.
pub fn ball_union(centers: &[usize], r: f64, phi: &PhiMatrix) -> Vec<usize> {
    let mut bits = FixedBitSet::with_capacity(phi.n());
    for &c in centers {
        bits.union_with(&phi.ball_bits(c, r));
    }
    bits.ones().collect()
}

/// Output of the greedy cover: centers in selection order and the sample
/// set `V' = B_{φ,r}(centers)` (sorted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub centers: Vec<usize>,
    pub v_prime: Vec<usize>,
}

/// Add the center with the largest marginal ball coverage (lowest id on
/// ties) until at least `s` vertices are covered.
pub fn greedy_cover(phi: &PhiMatrix, r: f64, s: usize) -> Result<Cover> {
    let n = phi.n();
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!("coverage target {s} outside [1, {n}]")));
    }
    let balls: Vec<FixedBitSet> = (0..n).into_par_iter().map(|v| phi.ball_bits(v, r)).collect();
    Ok(greedy_over(&balls, n, s))
}

fn greedy_over(balls: &[FixedBitSet], universe: usize, s: usize) -> Cover {
    let mut covered = FixedBitSet::with_capacity(universe);
    let mut centers = Vec::new();
    let mut count = 0;
    while count < s {
        let mut best = (0usize, 0usize);
        for (v, b) in balls.iter().enumerate() {
            let gain = b.difference_count(&covered);
            if gain > best.1 {
                best = (v, gain);
            }
        }
        if best.1 == 0 {
            break;
        }
        covered.union_with(&balls[best.0]);
        count += best.1;
        centers.push(best.0);
    }
    Cover {
        centers,
        v_prime: covered.ones().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub center: usize,
    pub members: Vec<usize>,
}

/// Disjoint split of `V'` into components, each within `r` of its center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub r: f64,
    #[serde(skip)]
    pub v_prime: Vec<usize>,
    pub components: Vec<Component>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn centers(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.center).collect()
    }

    /// Center of the component containing `v`.
    pub fn center_of(&self, v: usize) -> Option<usize> {
        self.components
            .iter()
            .find(|c| c.members.contains(&v))
            .map(|c| c.center)
    }

    /// `center_of` for every vertex of `V'`, aligned with `v_prime`.
    pub fn center_map(&self) -> Vec<usize> {
        let mut map = std::collections::HashMap::new();
        for c in &self.components {
            for &m in &c.members {
                map.insert(m, c.center);
            }
        }
        self.v_prime.iter().map(|v| map[v]).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Assign each vertex of `V'` to its nearest center (lowest center position
/// on ties); centers belong to their own component.
pub fn admissible_partition(v_prime: &[usize], centers: &[usize], phi: &PhiMatrix, r: f64) -> Result<Partition> {
    for &c in centers {
        if !v_prime.contains(&c) {
            return Err(Error::InvalidArgument(format!("center {c} is not in V'")));
        }
    }
    for &v in v_prime.iter().chain(centers) {
        if v >= phi.n() {
            return Err(Error::VertexOutOfRange { vertex: v, n: phi.n() });
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for &v in v_prime {
        let slot = if let Some(i) = centers.iter().position(|&c| c == v) {
            i
        } else {
            let mut best: Option<(usize, f64)> = None;
            for (i, &c) in centers.iter().enumerate() {
                let d = phi.get(c, v);
                if d < r && best.is_none_or(|(_, b)| d < b) {
                    best = Some((i, d));
                }
            }
            best.ok_or(Error::Uncoverable(v))?.0
        };
        members[slot].push(v);
    }
    Ok(Partition {
        r,
        v_prime: v_prime.to_vec(),
        components: centers
            .iter()
            .zip(members)
            .map(|(&center, members)| Component { center, members })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityMode {
    Exact,
    Greedy,
}

/// Balls restricted to `V'` with centers in `V'`, as bitmasks over positions in `V'`.
fn restricted_masks(v_prime: &[usize], r: f64, phi: &PhiMatrix) -> Vec<u32> {
    v_prime
        .iter()
        .map(|&c| {
            v_prime
                .iter()
                .enumerate()
                .filter(|&(_, &v)| phi.get(c, v) < r)
                .fold(0u32, |m, (i, _)| m | (1 << i))
        })
        .collect()
}

/// Smallest set of centers in `V'` whose restricted balls cover `V'`; the
/// first such set in lexicographic order of positions.
pub fn exact_min_centers(v_prime: &[usize], r: f64, phi: &PhiMatrix) -> Result<Vec<usize>> {
    let m = v_prime.len();
    if m > MAX_EXACT {
        return Err(Error::TooLargeForExact(m));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let masks = restricted_masks(v_prime, r, phi);
    let full: u32 = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
    for k in 1..=m {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            if idx.iter().fold(0u32, |acc, &i| acc | masks[i]) == full {
                return Ok(idx.iter().map(|&i| v_prime[i]).collect());
            }
            let mut i = k;
            let mut advanced = false;
            while i > 0 {
                i -= 1;
                if idx[i] < m - k + i {
                    idx[i] += 1;
                    for j in i + 1..k {
                        idx[j] = idx[j - 1] + 1;
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }
    unreachable!("singleton balls always cover V'")
}

/// Greedy cover of `V'` by restricted balls; centers in selection order.
pub fn greedy_min_centers(v_prime: &[usize], r: f64, phi: &PhiMatrix) -> Vec<usize> {
    let m = v_prime.len();
    let balls: Vec<FixedBitSet> = v_prime
        .iter()
        .map(|&c| {
            let mut b = FixedBitSet::with_capacity(m);
            for (i, &v) in v_prime.iter().enumerate() {
                if phi.get(c, v) < r {
                    b.insert(i);
                }
            }
            b
        })
        .collect();
    greedy_over(&balls, m, m)
        .centers
        .into_iter()
        .map(|i| v_prime[i])
        .collect()
}

/// `c_{φ,r}(V')`: exact for small sets, otherwise the greedy upper bound.
pub fn complexity(v_prime: &[usize], r: f64, phi: &PhiMatrix, mode: ComplexityMode) -> Result<usize> {
    match mode {
        ComplexityMode::Exact => Ok(exact_min_centers(v_prime, r, phi)?.len()),
        ComplexityMode::Greedy => Ok(greedy_min_centers(v_prime, r, phi).len()),
    }
}

/// Number of connected components of the graph joining entries whose values
/// differ by less than `λ/2`. On the real line that is one plus the number
/// of sorted gaps of at least `λ/2`.
pub fn lambda_sparsity_oracle(values: &[f64], lambda: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    1 + sorted.windows(2).filter(|w| w[1] - w[0] >= lambda / 2.0).count()
}

/// The four-vertex example (vertices v1..v4 as 0..3).
pub fn four_vertex_fixture() -> PhiMatrix {
    let mut m = DMatrix::zeros(4, 4);
    for (u, v, x) in [
        (0, 1, 2.5),
        (0, 2, 1.5),
        (1, 2, 3.5),
        (2, 3, 1.0),
        (0, 3, 4.0),
        (1, 3, 5.0),
    ] {
        m[(u, v)] = x;
        m[(v, u)] = x;
    }
    PhiMatrix::from_values(m).expect("fixture is symmetric")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, random_weighted_model, standard_topology, Topology, WeightDistribution};
    use crate::spectral::eigenbasis;
    use proptest::prelude::*;

    fn grid_phi(seed: u64, k: usize) -> PhiMatrix {
        let g = standard_topology(Topology::Grid { rows: 5, cols: 4 }).unwrap();
        let g = random_weighted_model(&g, WeightDistribution::default(), seed).unwrap();
        let w = eigenbasis(&laplacian(&g), k).unwrap();
        phi_matrix(&w, &SpectralBounds::inverse_profile(k, 1.0, 65, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn phi_zero_diagonal_and_constant_mode() {
        let phi = grid_phi(1, 6);
        assert!((0..20).all(|u| phi.get(u, u) == 0.0));
        let g = standard_topology(Topology::Path(7)).unwrap();
        let w = eigenbasis(&laplacian(&g), 1).unwrap();
        let phi = phi_matrix(&w, &SpectralBounds::constant(1, 1.0, 65, 1.0).unwrap()).unwrap();
        assert!(phi.matrix().amax() < 1e-12);
    }

    #[test]
    fn phi_coefficient_closed_form() {
        // ∫_{-1}^{1} √2 √(1 - cos(πf)) df = ∫ 2|sin(πf/2)| df = 8/π
        let bounds = SpectralBounds::constant(1, 1.0, 257, 1.0).unwrap();
        let gamma = phi_coefficients(&bounds)[0];
        assert!((gamma - 8.0 / std::f64::consts::PI).abs() < 1e-3, "{gamma}");
    }

    #[test]
    fn phi_dimension_mismatch() {
        let g = standard_topology(Topology::Path(4)).unwrap();
        let w = eigenbasis(&laplacian(&g), 2).unwrap();
        let b = SpectralBounds::constant(3, 1.0, 9, 1.0).unwrap();
        assert!(matches!(phi_matrix(&w, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn ball_extremes() {
        let phi = grid_phi(2, 5);
        for v in 0..20 {
            let min_pos = (0..20).filter(|&u| u != v).map(|u| phi.get(v, u)).fold(f64::INFINITY, f64::min);
            let max = (0..20).map(|u| phi.get(v, u)).fold(0.0, f64::max);
            assert_eq!(ball(v, min_pos, &phi), vec![v]);
            assert_eq!(ball(v, max * 1.01, &phi), (0..20).collect::<Vec<_>>());
        }
    }

    #[test]
    fn greedy_extremes() {
        let phi = grid_phi(3, 5);
        let cover = greedy_cover(&phi, 1e9, 20).unwrap();
        assert_eq!(cover.centers, vec![0]);
        assert_eq!(cover.v_prime.len(), 20);
        let tiny = greedy_cover(&phi, 1e-12, 7).unwrap();
        assert_eq!(tiny.centers, (0..7).collect::<Vec<_>>());
        assert_eq!(tiny.v_prime, tiny.centers);
    }

    #[test]
    fn figure_claims() {
        let phi = four_vertex_fixture();
        assert_eq!(ball(2, 2.0, &phi), vec![0, 2, 3]);

        let cover = greedy_cover(&phi, 2.0, 3).unwrap();
        assert_eq!(cover.centers, vec![2]);
        assert_eq!(cover.v_prime, vec![0, 2, 3]);

        let part = admissible_partition(&[0, 1, 2], &[0, 1], &phi, 2.0).unwrap();
        assert_eq!(part.components[0].members, vec![0, 2]);
        assert_eq!(part.components[1].members, vec![1]);

        assert_eq!(complexity(&[0, 1, 2], 2.0, &phi, ComplexityMode::Exact).unwrap(), 2);
        assert_eq!(exact_min_centers(&[0, 1, 2], 3.0, &phi).unwrap(), vec![0]);
    }

    #[test]
    fn partition_edge_cases() {
        let phi = grid_phi(4, 5);
        let vp: Vec<usize> = (0..20).collect();
        let one = admissible_partition(&vp, &[5], &phi, 1e9).unwrap();
        assert_eq!(one.len(), 1);
        let all = admissible_partition(&vp, &vp, &phi, 1e-12).unwrap();
        assert!(all.components.iter().all(|c| c.members == vec![c.center]));
        assert!(matches!(
            admissible_partition(&vp, &[0], &phi, 1e-12),
            Err(Error::Uncoverable(1))
        ));
        let json = one.to_json().unwrap();
        assert!(json.contains("\"components\"") && json.contains("\"r\""));
    }

    #[test]
    fn complexity_limits() {
        let phi = grid_phi(5, 5);
        let vp: Vec<usize> = (0..20).collect();
        assert_eq!(complexity(&vp, 1e9, &phi, ComplexityMode::Exact).unwrap(), 1);
        let big = grid_phi(5, 5);
        let mut m = big.matrix().clone().resize(21, 21, 0.0);
        m[(20, 0)] = 0.0;
        let phi21 = PhiMatrix::from_values(m).unwrap();
        let vp21: Vec<usize> = (0..21).collect();
        assert!(matches!(
            complexity(&vp21, 1.0, &phi21, ComplexityMode::Exact),
            Err(Error::TooLargeForExact(21))
        ));
    }

    #[test]
    fn sparsity_oracle_examples() {
        assert_eq!(lambda_sparsity_oracle(&[0.3; 5], 1.0), 1);
        assert_eq!(lambda_sparsity_oracle(&[0.0, 10.0, 20.0], 1.0), 3);
        assert_eq!(lambda_sparsity_oracle(&[0.0, 0.4, 0.8, 1.2], 1.0), 1);
        assert_eq!(lambda_sparsity_oracle(&[0.0, 0.5], 1.0), 2);
    }

    /// Union-find over all pairs, as the definition states it.
    fn components_by_pairs(values: &[f64], lambda: f64) -> usize {
        let n = values.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for i in 0..n {
            for j in i + 1..n {
                if (values[i] - values[j]).abs() < lambda / 2.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }

    proptest! {
        #[test]
        fn sparsity_matches_pairwise_definition(values in prop::collection::vec(-5.0f64..5.0, 1..30), lambda in 0.1f64..3.0) {
            prop_assert_eq!(lambda_sparsity_oracle(&values, lambda), components_by_pairs(&values, lambda));
        }

        #[test]
        fn phi_is_pseudo_metric(seed in 0u64..1000, k in 1usize..8) {
            let phi = grid_phi(seed, k);
            prop_assert!(phi.max_triangle_violation() <= 1e-12);
        }

        #[test]
        fn balls_and_complexity_monotone_in_radius(seed in 0u64..1000, r1 in 0.0f64..2.0, dr in 0.0f64..2.0) {
            let phi = grid_phi(seed, 6);
            let r2 = r1 + dr;
            for v in 0..20 {
                let small = ball(v, r1, &phi);
                let large = ball(v, r2, &phi);
                prop_assert!(small.iter().all(|u| large.contains(u)));
            }
            let vp: Vec<usize> = (0..12).collect();
            let c1 = complexity(&vp, r1, &phi, ComplexityMode::Exact).unwrap();
            let c2 = complexity(&vp, r2, &phi, ComplexityMode::Exact).unwrap();
            prop_assert!(c1 >= c2);
        }

        #[test]
        fn greedy_within_log_factor(seed in 0u64..1000, r in 0.05f64..1.5) {
            let phi = grid_phi(seed, 6);
            let vp: Vec<usize> = (0..14).collect();
            let exact = complexity(&vp, r, &phi, ComplexityMode::Exact).unwrap() as f64;
            let greedy = complexity(&vp, r, &phi, ComplexityMode::Greedy).unwrap() as f64;
            prop_assert!(greedy >= exact);
            prop_assert!(greedy <= (1.0 + (vp.len() as f64).ln()) * exact);
        }
    }
}
