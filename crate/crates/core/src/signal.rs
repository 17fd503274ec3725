//! Bandlimited continuous-time graph signals: generation, sampling,
//! interpolation, folding, and noise.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::EigenBasis;

/// Default number of points on the frequency grid.
pub const DEFAULT_FREQ_POINTS: usize = 65;

/// Magnitude bounds `a_{k,f}` on a uniform frequency grid over `[-B, B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBounds {
    b: f64,
    a: DMatrix<f64>,
}

impl SpectralBounds {
    /// `a` is K x F; column `j` corresponds to frequency `-B + j * 2B/(F-1)`.
    pub fn new(b: f64, a: DMatrix<f64>) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandlimit must be positive, got {b}")));
        }
        if a.nrows() == 0 {
            return Err(Error::EmptyBounds);
        }
        if a.ncols() < 2 {
            return Err(Error::InvalidArgument("frequency grid needs at least 2 points".into()));
        }
        if a.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidArgument("bounds must be finite and nonnegative".into()));
        }
        Ok(Self { b, a })
    }

    /// `a_{k,f} = c / (k (1 + |f|))` with `k` counted from 1.
    pub fn inverse_profile(k: usize, b: f64, f_points: usize, c: f64) -> Result<Self> {
        let step = 2.0 * b / (f_points.max(2) - 1) as f64;
        let a = DMatrix::from_fn(k, f_points, |i, j| {
            let f = -b + j as f64 * step;
            c / ((i + 1) as f64 * (1.0 + f.abs()))
        });
        Self::new(b, a)
    }

    /// Same bound for every (k, f).
    pub fn constant(k: usize, b: f64, f_points: usize, value: f64) -> Result<Self> {
        Self::new(b, DMatrix::from_element(k, f_points, value))
    }

    pub fn bandlimit(&self) -> f64 {
        self.b
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn f_points(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn step(&self) -> f64 {
        2.0 * self.b / (self.f_points() - 1) as f64
    }

    pub fn frequency(&self, j: usize) -> f64 {
        -self.b + j as f64 * self.step()
    }

    /// Trapezoid weights on the grid.
    pub fn quad_weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.f_points() {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    /// Nyquist interval `1/(2B)`.
    pub fn t0(&self) -> f64 {
        0.5 / self.b
    }
}

/// A signal `x(v, t) = Σ_k w_k(v) ∫ d_{k,f} e^{i2πtf} df` with the integral
/// replaced by trapezoid quadrature on the bounds grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedSignal {
    basis: EigenBasis,
    bounds: SpectralBounds,
    d: DMatrix<Complex64>,
}

impl GeneralizedSignal {
    /// Coefficients must respect the bounds and be conjugate-symmetric in f.
    pub fn new(basis: EigenBasis, bounds: SpectralBounds, d: DMatrix<Complex64>) -> Result<Self> {
        if bounds.k() != basis.k() || d.nrows() != basis.k() || d.ncols() != bounds.f_points() {
            return Err(Error::DimensionMismatch(format!(
                "basis K={}, bounds {}x{}, coefficients {}x{}",
                basis.k(),
                bounds.k(),
                bounds.f_points(),
                d.nrows(),
                d.ncols()
            )));
        }
        let f = bounds.f_points();
        for k in 0..d.nrows() {
            for j in 0..f {
                let c = d[(k, j)];
                if c.norm() > bounds.a()[(k, j)] * (1.0 + 1e-12) + 1e-15 {
                    return Err(Error::InvalidArgument(format!(
                        "coefficient ({k}, {j}) exceeds its bound"
                    )));
                }
                if (c - d[(k, f - 1 - j)].conj()).norm() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "coefficients are not conjugate-symmetric at ({k}, {j})"
                    )));
                }
            }
        }
        Ok(Self { basis, bounds, d })
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    pub fn bounds(&self) -> &SpectralBounds {
        &self.bounds
    }

    pub fn coefficients(&self) -> &DMatrix<Complex64> {
        &self.d
    }

    pub fn t0(&self) -> f64 {
        self.bounds.t0()
    }

    /// Multiply every coefficient by `s` (which also scales the bounds when
    /// `s > 1`, so the result stays valid).
    pub fn scaled(&self, s: f64) -> Self {
        let mut bounds = self.bounds.clone();
        if s.abs() > 1.0 {
            bounds.a *= s.abs();
        }
        Self {
            basis: self.basis.clone(),
            bounds,
            d: self.d.map(|c| c * s),
        }
    }

    /// Complex eigen-coefficients `b_k(t)` before taking the real part.
    pub fn time_coefficients_complex(&self, t: f64) -> Vec<Complex64> {
        let phases: Vec<Complex64> = (0..self.bounds.f_points())
            .map(|j| {
                let f = self.bounds.frequency(j);
                Complex64::from_polar(self.bounds.quad_weight(j), 2.0 * PI * t * f)
            })
            .collect();
        (0..self.d.nrows())
            .map(|k| (0..phases.len()).map(|j| self.d[(k, j)] * phases[j]).sum())
            .collect()
    }

    /// Real eigen-coefficients `b_k(t)`.
    pub fn time_coefficients(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.d.nrows(),
            self.time_coefficients_complex(t).into_iter().map(|c| c.re),
        )
    }

    /// `x(·, t)` at every vertex.
    pub fn snapshot(&self, t: f64) -> DVector<f64> {
        self.basis.vectors() * self.time_coefficients(t)
    }

    /// Complex value at `(v, t)`; its imaginary part vanishes for valid signals.
    pub fn evaluate_complex(&self, v: usize, t: f64) -> Result<Complex64> {
        self.check_vertex(v)?;
        Ok(self
            .time_coefficients_complex(t)
            .iter()
            .enumerate()
            .map(|(k, c)| c * self.basis.vectors()[(v, k)])
            .sum())
    }

    pub fn evaluate(&self, v: usize, t: f64) -> Result<f64> {
        self.check_vertex(v)?;
        Ok(self.basis.row(v).dot(&self.time_coefficients(t).transpose()))
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.basis.n() {
            return Err(Error::VertexOutOfRange {
                vertex: v,
                n: self.basis.n(),
            });
        }
        Ok(())
    }
}

/// Random coefficients: `n_atoms` distinct (k, f ≥ 0) atoms get magnitude
/// uniform in `[0, a_{k,f}]` and uniform phase (a random sign at f = 0); the
/// negative-frequency half mirrors them by conjugation.
pub fn generate_signal(
    basis: &EigenBasis,
    bounds: &SpectralBounds,
    n_atoms: usize,
    seed: u64,
) -> Result<GeneralizedSignal> {
    if bounds.k() == 0 {
        return Err(Error::EmptyBounds);
    }
    if n_atoms == 0 {
        return Err(Error::InvalidArgument("n_atoms must be >= 1".into()));
    }
    let k = bounds.k();
    let f = bounds.f_points();
    // column indices with f >= 0; for even F the grid has no zero and the
    // two middle columns mirror each other
    let first = f / 2;
    let half: Vec<usize> = (first..f).collect();
    let total = k * half.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms: Vec<usize> = if n_atoms >= total {
        (0..total).collect()
    } else {
        let mut picked = sample(&mut rng, total, n_atoms).into_vec();
        picked.sort_unstable();
        picked
    };
    let mut d = DMatrix::from_element(k, f, Complex64::new(0.0, 0.0));
    for atom in atoms {
        let (row, j) = (atom / half.len(), half[atom % half.len()]);
        let mag = rng.random_range(0.0..=1.0) * bounds.a()[(row, j)];
        let mirror = f - 1 - j;
        let c = if mirror == j {
            if rng.random_bool(0.5) {
                Complex64::new(mag, 0.0)
            } else {
                Complex64::new(-mag, 0.0)
            }
        } else {
            Complex64::from_polar(mag, rng.random_range(0.0..2.0 * PI))
        };
        d[(row, j)] = c;
        d[(row, mirror)] = c.conj();
    }
    GeneralizedSignal::new(basis.clone(), bounds.clone(), d)
}

/// Samples `y(v, n)` for `n` in `n_min..n_min + steps`, one row per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSignal {
    pub vertices: Vec<usize>,
    pub n_min: i64,
    pub t0: f64,
    pub values: DMatrix<f64>,
}

impl DiscreteSignal {
    pub fn steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_max(&self) -> i64 {
        self.n_min + self.steps() as i64 - 1
    }

    fn row_of(&self, v: usize) -> Result<usize> {
        self.vertices.iter().position(|&x| x == v).ok_or(Error::VertexOutOfRange {
            vertex: v,
            n: self.vertices.len(),
        })
    }

    pub fn get(&self, v: usize, n: i64) -> Result<f64> {
        let r = self.row_of(v)?;
        if n < self.n_min || n > self.n_max() {
            return Err(Error::OutOfWindow(n as f64 * self.t0));
        }
        Ok(self.values[(r, (n - self.n_min) as usize)])
    }

    /// Rows for a subset of vertices, in the given order.
    pub fn restrict(&self, vertices: &[usize]) -> Result<Self> {
        let rows = vertices.iter().map(|&v| self.row_of(v)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vertices: vertices.to_vec(),
            n_min: self.n_min,
            t0: self.t0,
            values: self.values.select_rows(&rows),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,n,value\n");
        for (r, &v) in self.vertices.iter().enumerate() {
            for c in 0..self.steps() {
                let _ = writeln!(out, "{v},{},{}", self.n_min + c as i64, self.values[(r, c)]);
            }
        }
        out
    }

    pub fn from_csv(text: &str, t0: f64) -> Result<Self> {
        let rows = parse_csv(text, &["vertex", "n", "value"])?;
        let (vertices, n_min, steps) = layout(&rows)?;
        let mut values = DMatrix::zeros(vertices.len(), steps);
        for row in &rows {
            let r = vertices.iter().position(|&v| v == row.0).unwrap();
            values[(r, (row.1 - n_min) as usize)] = row.2[0];
        }
        Ok(Self {
            vertices,
            n_min,
            t0,
            values,
        })
    }
}

type CsvRow = (usize, i64, Vec<f64>);

fn parse_csv(text: &str, header: &[&str]) -> Result<Vec<CsvRow>> {
    // `#` lines carry artifact metadata
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let head = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    if cols != header {
        return Err(Error::Parse(format!("expected header {:?}, got {head:?}", header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(Error::Parse(format!("line {}: expected {} fields", i + 2, header.len())));
        }
        let bad = |f: &str| Error::Parse(format!("line {}: bad field {f:?}", i + 2));
        let v = fields[0].parse().map_err(|_| bad(fields[0]))?;
        let n = fields[1].parse().map_err(|_| bad(fields[1]))?;
        let rest = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(f)))
            .collect::<Result<Vec<_>>>()?;
        rows.push((v, n, rest));
    }
    Ok(rows)
}

/// Vertex order of first appearance, smallest n, and window length.
fn layout(rows: &[CsvRow]) -> Result<(Vec<usize>, i64, usize)> {
    if rows.is_empty() {
        return Err(Error::Parse("CSV has no data rows".into()));
    }
    let mut vertices = Vec::new();
    for row in rows {
        if !vertices.contains(&row.0) {
            vertices.push(row.0);
        }
    }
    let n_min = rows.iter().map(|r| r.1).min().unwrap();
    let n_max = rows.iter().map(|r| r.1).max().unwrap();
    let steps = (n_max - n_min + 1) as usize;
    if rows.len() != vertices.len() * steps {
        return Err(Error::Parse("CSV does not cover a full vertex x time window".into()));
    }
    Ok((vertices, n_min, steps))
}

/// `y(v, n) = x(v, n T0)` for `n ∈ [n_min, n_max]`, all vertices.
pub fn sample_time(x: &GeneralizedSignal, n_min: i64, n_max: i64) -> Result<DiscreteSignal> {
    if n_min > n_max {
        return Err(Error::InvalidArgument(format!("empty window [{n_min}, {n_max}]")));
    }
    let t0 = x.t0();
    let columns: Vec<DVector<f64>> = (n_min..=n_max).map(|n| x.snapshot(n as f64 * t0)).collect();
    Ok(DiscreteSignal {
        vertices: (0..x.basis().n()).collect(),
        n_min,
        t0,
        values: DMatrix::from_columns(&columns),
    })
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Truncated Whittaker-Shannon interpolation over the sampled window.
pub fn sinc_interpolate(y: &DiscreteSignal, v: usize, t: f64) -> Result<f64> {
    let r = y.row_of(v)?;
    let u = t / y.t0;
    let slack = 1e-9;
    if u < y.n_min as f64 - slack || u > y.n_max() as f64 + slack {
        return Err(Error::OutOfWindow(t));
    }
    let nearest = u.round();
    if (u - nearest).abs() < 1e-12 {
        return Ok(y.values[(r, (nearest as i64 - y.n_min) as usize)]);
    }
    Ok((0..y.steps())
        .map(|c| y.values[(r, c)] * sinc(u - (y.n_min + c as i64) as f64))
        .sum())
}

/// `x = λ z + p` with `z = floor(x / λ)` and `p ∈ [0, λ)`.
pub fn fold(value: f64, lambda: f64) -> (i64, f64) {
    let mut z = (value / lambda).floor();
    let mut p = value - lambda * z;
    if p < 0.0 {
        z -= 1.0;
        p += lambda;
    }
    if p >= lambda {
        z += 1.0;
        p -= lambda;
    }
    (z as i64, p.clamp(0.0, lambda * (1.0 - f64::EPSILON)))
}

/// `(value mod λ)` in `[0, λ)`.
pub fn wrap(value: f64, lambda: f64) -> f64 {
    fold(value, lambda).1
}

/// Folded samples: `p(v, n)` per vertex row, the folding rate of each row,
/// and (in simulation) the hidden folding numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedObservation {
    pub vertices: Vec<usize>,
    pub n_min: i64,
    pub t0: f64,
    pub lambda: Vec<f64>,
    pub p: DMatrix<f64>,
    pub z: Option<DMatrix<i64>>,
}

impl FoldedObservation {
    pub fn steps(&self) -> usize {
        self.p.ncols()
    }

    pub fn row_of(&self, v: usize) -> Result<usize> {
        self.vertices.iter().position(|&x| x == v).ok_or(Error::VertexOutOfRange {
            vertex: v,
            n: self.vertices.len(),
        })
    }

    /// `λ z + p`, available when the folding numbers are known.
    pub fn unfold(&self) -> Option<DiscreteSignal> {
        let z = self.z.as_ref()?;
        let values = DMatrix::from_fn(self.p.nrows(), self.p.ncols(), |r, c| {
            self.lambda[r] * z[(r, c)] as f64 + self.p[(r, c)]
        });
        Some(DiscreteSignal {
            vertices: self.vertices.clone(),
            n_min: self.n_min,
            t0: self.t0,
            values,
        })
    }

    pub fn restrict(&self, vertices: &[usize]) -> Result<Self> {
        let rows = vertices.iter().map(|&v| self.row_of(v)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vertices: vertices.to_vec(),
            n_min: self.n_min,
            t0: self.t0,
            lambda: rows.iter().map(|&r| self.lambda[r]).collect(),
            p: self.p.select_rows(&rows),
            z: self.z.as_ref().map(|z| z.select_rows(&rows)),
        })
    }

    /// Fraction of entries with a nonzero folding number.
    pub fn nonzero_fraction(&self) -> Option<f64> {
        let z = self.z.as_ref()?;
        Some(z.iter().filter(|&&x| x != 0).count() as f64 / z.len().max(1) as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,n,p,lambda\n");
        for (r, &v) in self.vertices.iter().enumerate() {
            for c in 0..self.steps() {
                let _ = writeln!(
                    out,
                    "{v},{},{},{}",
                    self.n_min + c as i64,
                    self.p[(r, c)],
                    self.lambda[r]
                );
            }
        }
        out
    }

    pub fn from_csv(text: &str, t0: f64) -> Result<Self> {
        let rows = parse_csv(text, &["vertex", "n", "p", "lambda"])?;
        let (vertices, n_min, steps) = layout(&rows)?;
        let mut p = DMatrix::zeros(vertices.len(), steps);
        let mut lambda = vec![f64::NAN; vertices.len()];
        for row in &rows {
            let r = vertices.iter().position(|&v| v == row.0).unwrap();
            let (pv, lv) = (row.2[0], row.2[1]);
            if !(lv > 0.0) || !(0.0..lv).contains(&pv) {
                return Err(Error::Parse(format!("vertex {}: p={pv} outside [0, {lv})", row.0)));
            }
            if !lambda[r].is_nan() && lambda[r] != lv {
                return Err(Error::Parse(format!("vertex {} has several folding rates", row.0)));
            }
            lambda[r] = lv;
            p[(r, (row.1 - n_min) as usize)] = pv;
        }
        Ok(Self {
            vertices,
            n_min,
            t0,
            lambda,
            p,
            z: None,
        })
    }
}

/// Elementwise fold; row `r` uses `lambda[r]`.
pub fn fold_signal(y: &DiscreteSignal, lambda: &[f64]) -> Result<FoldedObservation> {
    if lambda.len() != y.vertices.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} folding rates for {} vertices",
            lambda.len(),
            y.vertices.len()
        )));
    }
    if let Some(l) = lambda.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(format!("folding rate must be positive, got {l}")));
    }
    let (rows, cols) = y.values.shape();
    let mut p = DMatrix::zeros(rows, cols);
    let mut z = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let (zz, pp) = fold(y.values[(r, c)], lambda[r]);
            z[(r, c)] = zz;
            p[(r, c)] = pp;
        }
    }
    Ok(FoldedObservation {
        vertices: y.vertices.clone(),
        n_min: y.n_min,
        t0: y.t0,
        lambda: lambda.to_vec(),
        p,
        z: Some(z),
    })
}

/// Add white Gaussian noise to the folded values at the given SNR (dB,
/// relative to the mean square of `p`) and wrap back into `[0, λ)`. An
/// infinite SNR returns the observation unchanged; otherwise the folding
/// numbers are dropped.
pub fn add_noise_refold(obs: &FoldedObservation, snr_db: f64, seed: u64) -> Result<FoldedObservation> {
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("SNR is NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(obs.clone());
    }
    let power = obs.p.iter().map(|x| x * x).sum::<f64>() / obs.p.len().max(1) as f64;
    let std = (power * 10f64.powf(-snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = obs.p.clone();
    for r in 0..p.nrows() {
        for c in 0..p.ncols() {
            p[(r, c)] = wrap(p[(r, c)] + normal.sample(&mut rng), obs.lambda[r]);
        }
    }
    Ok(FoldedObservation {
        p,
        z: None,
        ..obs.clone()
    })
}

/// Metadata written next to signal CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMeta {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, random_weighted_model, standard_topology, Topology, WeightDistribution};
    use crate::spectral::eigenbasis;

    fn basis(k: usize) -> EigenBasis {
        let g = standard_topology(Topology::Grid { rows: 5, cols: 4 }).unwrap();
        let g = random_weighted_model(&g, WeightDistribution::default(), 3).unwrap();
        eigenbasis(&laplacian(&g), k).unwrap()
    }

    #[test]
    fn fold_examples() {
        let (z, p) = fold(1.7, 0.75);
        assert_eq!(z, 2);
        assert!((p - 0.2).abs() < 1e-12);
        assert_eq!(fold(0.5, 0.75), (0, 0.5));
        let (z, p) = fold(-0.1, 0.75);
        assert_eq!(z, -1);
        assert!((p - 0.65).abs() < 1e-12);
        assert_eq!(fold(1.5, 0.75), (2, 0.0));
        assert_eq!(fold(-1.5, 0.75), (-2, 0.0));
    }

    #[test]
    fn zero_bounds_give_zero_signal() {
        let bounds = SpectralBounds::constant(3, 1.0, 9, 0.0).unwrap();
        let x = generate_signal(&basis(3), &bounds, 100, 0).unwrap();
        for v in 0..20 {
            for t in [-1.3, 0.0, 2.7] {
                assert_eq!(x.evaluate(v, t).unwrap(), 0.0);
            }
        }
        let y = sample_time(&x, 0, 5).unwrap();
        assert_eq!(sinc_interpolate(&y, 2, 1.25).unwrap(), 0.0);
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let bounds = SpectralBounds::inverse_profile(5, 1.0, 65, 1.0).unwrap();
        let w = basis(5);
        let a = generate_signal(&w, &bounds, 40, 11).unwrap();
        let b = generate_signal(&w, &bounds, 40, 11).unwrap();
        assert_eq!(a.coefficients(), b.coefficients());
        for k in 0..5 {
            for j in 0..65 {
                assert!(a.coefficients()[(k, j)].norm() <= bounds.a()[(k, j)]);
            }
        }
        assert!(generate_signal(&w, &bounds, 0, 1).is_err());
    }

    #[test]
    fn point_mass_quadrature() {
        let w = basis(2);
        let bounds = SpectralBounds::constant(2, 1.0, 9, 1.0).unwrap();
        let mut d = DMatrix::from_element(2, 9, Complex64::new(0.0, 0.0));
        d[(0, 4)] = Complex64::new(0.7, 0.0);
        let x = GeneralizedSignal::new(w.clone(), bounds.clone(), d).unwrap();
        let df = bounds.quad_weight(4);
        assert!((df - 0.25).abs() < 1e-15);
        for v in 0..20 {
            for t in [0.0, 0.3, 5.0] {
                let want = 0.7 * df * w.vectors()[(v, 0)];
                assert!((x.evaluate(v, t).unwrap() - want).abs() < 1e-14);
            }
        }
        let y = sample_time(&x, -3, 3).unwrap();
        for c in 1..y.steps() {
            assert!((y.values[(5, c)] - y.values[(5, 0)]).abs() < 1e-14);
        }
    }

    #[test]
    fn real_valued_and_consistent_sampling() {
        let bounds = SpectralBounds::inverse_profile(5, 1.0, 65, 1.0).unwrap();
        let x = generate_signal(&basis(5), &bounds, 200, 4).unwrap();
        let y = sample_time(&x, -4, 4).unwrap();
        for v in 0..20 {
            for n in -4..=4 {
                let t = n as f64 * x.t0();
                assert!(x.evaluate_complex(v, t).unwrap().im.abs() < 1e-9);
                assert!((x.evaluate(v, t).unwrap() - y.get(v, n).unwrap()).abs() < 1e-12);
            }
        }
        let single = sample_time(&x, 0, 0).unwrap();
        assert!((single.values[(3, 0)] - x.evaluate(3, 0.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sinc_reproduces_grid_points() {
        let bounds = SpectralBounds::inverse_profile(4, 1.0, 65, 1.0).unwrap();
        let x = generate_signal(&basis(4), &bounds, 50, 8).unwrap();
        let y = sample_time(&x, 0, 20).unwrap();
        for n in 0..=20 {
            let got = sinc_interpolate(&y, 7, n as f64 * y.t0).unwrap();
            assert!((got - y.get(7, n).unwrap()).abs() < 1e-12);
        }
        assert!(matches!(sinc_interpolate(&y, 7, -0.6), Err(Error::OutOfWindow(_))));
        assert!(matches!(sinc_interpolate(&y, 7, 10.6), Err(Error::OutOfWindow(_))));
    }

    #[test]
    fn fold_signal_roundtrip_and_small_values() {
        let bounds = SpectralBounds::inverse_profile(5, 1.0, 65, 1.0).unwrap();
        let x = generate_signal(&basis(5), &bounds, 200, 2).unwrap();
        let y = sample_time(&x, 0, 63).unwrap();
        let lambda = vec![0.6 * y.max_abs(); 20];
        let obs = fold_signal(&y, &lambda).unwrap();
        assert!(obs.z.as_ref().unwrap().iter().any(|&z| z != 0));
        let back = obs.unfold().unwrap();
        assert!((back.values - &y.values).amax() < 1e-9);

        let small = DiscreteSignal {
            vertices: vec![0, 1],
            n_min: 0,
            t0: 0.5,
            values: DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.0, 0.3]),
        };
        let obs = fold_signal(&small, &[0.5, 0.4]).unwrap();
        assert!(obs.z.as_ref().unwrap().iter().all(|&z| z == 0));
        assert_eq!(obs.p, small.values);
    }

    #[test]
    fn noise_wraps_and_infinite_snr_is_identity() {
        let y = DiscreteSignal {
            vertices: (0..100).collect(),
            n_min: 0,
            t0: 0.5,
            values: DMatrix::from_fn(100, 100, |r, c| ((r * 31 + c * 17) % 97) as f64 / 40.0),
        };
        let obs = fold_signal(&y, &[0.75; 100]).unwrap();
        assert_eq!(add_noise_refold(&obs, f64::INFINITY, 1).unwrap(), obs);
        let noisy = add_noise_refold(&obs, 40.0, 1).unwrap();
        assert!(noisy.z.is_none());
        assert!(noisy.p.iter().all(|&p| (0.0..0.75).contains(&p)));

        // perturbation measured as the wrapped difference
        let rms = (obs.p.iter().map(|x| x * x).sum::<f64>() / 1e4).sqrt();
        let diffs: Vec<f64> = noisy
            .p
            .iter()
            .zip(obs.p.iter())
            .map(|(a, b)| {
                let d = wrap(a - b, 0.75);
                if d > 0.375 { d - 0.75 } else { d }
            })
            .collect();
        let std = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
        let ratio = std / (0.01 * rms);
        assert!((1.0 / 1.5..1.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn csv_roundtrip() {
        let y = DiscreteSignal {
            vertices: vec![3, 1],
            n_min: -2,
            t0: 0.5,
            values: DMatrix::from_row_slice(2, 3, &[0.1, -2.5, 1.0 / 3.0, 7.0, 0.0, 1e-17]),
        };
        assert_eq!(DiscreteSignal::from_csv(&y.to_csv(), 0.5).unwrap(), y);
        let tagged = format!("# {{\"seed\":1}}\n{}", y.to_csv());
        assert_eq!(DiscreteSignal::from_csv(&tagged, 0.5).unwrap(), y);
        let obs = fold_signal(&y, &[0.75, 0.5]).unwrap();
        let back = FoldedObservation::from_csv(&obs.to_csv(), 0.5).unwrap();
        assert_eq!(back.p, obs.p);
        assert_eq!(back.lambda, obs.lambda);
        assert!(DiscreteSignal::from_csv("a,b,c\n", 0.5).is_err());
    }
}
