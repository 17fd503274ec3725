//! Folded images on the pixel lattice: the separable cosine eigenbasis of
//! the grid Laplacian, per-channel folding, netpbm IO, and recovery with an
//! ε sweep fused by majority vote.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::phi_matrix_image;
use crate::recovery::{majority_vote, plan_sampling, KnownFoldings, RecoveryMethod, SparseRecoverer};
use crate::signal::fold;
use crate::solver::SolverConfig;
use crate::spectral::EigenBasis;

/// Multi-channel raster. Each plane is row-major with pixel `(r, c)` at
/// index `r * cols + c`, matching the grid topology's vertex ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    rows: usize,
    cols: usize,
    p_max: f64,
    planes: Vec<Vec<f64>>,
}

impl ImageRaster {
    pub fn new(rows: usize, cols: usize, p_max: f64, planes: Vec<Vec<f64>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::SizeZero);
        }
        if planes.len() != 1 && planes.len() != 3 {
            return Err(Error::InvalidArgument(format!("{} channels (expected 1 or 3)", planes.len())));
        }
        if planes.iter().any(|p| p.len() != rows * cols) {
            return Err(Error::DimensionMismatch(format!("plane size differs from {rows}x{cols}")));
        }
        if !(p_max > 0.0) {
            return Err(Error::InvalidArgument(format!("p_max = {p_max}")));
        }
        if let Some(&x) = planes.iter().flatten().find(|&&x| !(0.0..=p_max).contains(&x)) {
            return Err(Error::InvalidArgument(format!("pixel value {x} outside [0, {p_max}]")));
        }
        Ok(Self {
            rows,
            cols,
            p_max,
            planes,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        &self.planes[channel]
    }

    pub fn get(&self, channel: usize, r: usize, c: usize) -> f64 {
        self.planes[channel][r * self.cols + c]
    }
}

/// Integer folding numbers per pixel and channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZRaster {
    pub rows: usize,
    pub cols: usize,
    pub planes: Vec<Vec<i64>>,
}

impl ZRaster {
    /// Fraction of nonzero folding numbers in each channel.
    pub fn nonzero_fraction(&self) -> Vec<f64> {
        self.planes
            .iter()
            .map(|p| p.iter().filter(|&&z| z != 0).count() as f64 / p.len() as f64)
            .collect()
    }

    /// Number of entries that differ from `other`, per channel.
    pub fn mismatches(&self, other: &ZRaster) -> Result<Vec<usize>> {
        if self.rows != other.rows || self.cols != other.cols || self.planes.len() != other.planes.len() {
            return Err(Error::DimensionMismatch("z rasters differ in shape".into()));
        }
        Ok(self
            .planes
            .iter()
            .zip(&other.planes)
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
            .collect())
    }
}

fn cosine_mode(n: usize, i: usize) -> Vec<f64> {
    let norm = if i == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    (0..n)
        .map(|r| norm * (std::f64::consts::PI * i as f64 * (r as f64 + 0.5) / n as f64).cos())
        .collect()
}

fn path_eigenvalue(n: usize, i: usize) -> f64 {
    2.0 - 2.0 * (std::f64::consts::PI * i as f64 / n as f64).cos()
}

/// First `k` eigenvectors of the unweighted `rows x cols` grid Laplacian as
/// products of 1-D cosine modes, ordered by eigenvalue with ties broken by
/// `(i + j, i)`.
pub fn dct_grid_basis(rows: usize, cols: usize, k: usize) -> Result<EigenBasis> {
    let n = rows * cols;
    if rows == 0 || cols == 0 {
        return Err(Error::SizeZero);
    }
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut modes: Vec<(f64, usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| (path_eigenvalue(rows, i) + path_eigenvalue(cols, j), i, j))
        .collect();
    modes.sort_by_key(|&(ev, i, j)| ((ev * 1e9).round() as i64, i + j, i));
    modes.truncate(k);

    let row_modes: Vec<Vec<f64>> = (0..rows).map(|i| cosine_mode(rows, i)).collect();
    let col_modes: Vec<Vec<f64>> = (0..cols).map(|j| cosine_mode(cols, j)).collect();
    let vectors = DMatrix::from_fn(n, k, |v, m| {
        let (_, i, j) = modes[m];
        row_modes[i][v / cols] * col_modes[j][v % cols]
    });
    EigenBasis::from_parts(vectors, modes.iter().map(|m| m.0).collect())
}

/// Fold every pixel of every channel at rate `lambda`.
pub fn fold_image(img: &ImageRaster, lambda: f64) -> Result<(ImageRaster, ZRaster)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("λ = {lambda}")));
    }
    let mut planes = Vec::with_capacity(img.channels());
    let mut z = Vec::with_capacity(img.channels());
    for plane in &img.planes {
        let (zs, ps): (Vec<i64>, Vec<f64>) = plane.iter().map(|&x| fold(x, lambda)).unzip();
        planes.push(ps);
        z.push(zs);
    }
    let folded = ImageRaster {
        rows: img.rows,
        cols: img.cols,
        p_max: img.p_max,
        planes,
    };
    Ok((
        folded,
        ZRaster {
            rows: img.rows,
            cols: img.cols,
            planes: z,
        },
    ))
}

/// `λz + p` per pixel. The result's `p_max` grows to cover the largest
/// unfolded value.
pub fn unfold_image(folded: &ImageRaster, z: &ZRaster, lambda: f64) -> Result<ImageRaster> {
    if z.rows != folded.rows || z.cols != folded.cols || z.planes.len() != folded.channels() {
        return Err(Error::DimensionMismatch("z raster does not match image".into()));
    }
    let planes: Vec<Vec<f64>> = folded
        .planes
        .iter()
        .zip(&z.planes)
        .map(|(p, zs)| p.iter().zip(zs).map(|(&p, &z)| (lambda * z as f64 + p).max(0.0)).collect())
        .collect();
    let p_max = planes.iter().flatten().copied().fold(folded.p_max, f64::max);
    ImageRaster::new(folded.rows, folded.cols, p_max, planes)
}

/// How netpbm sample values map to pixel values on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelScale {
    /// Divide by maxval so pixels lie in [0, 1].
    #[default]
    Unit,
    /// Keep raw sample values; `p_max` is maxval.
    Raw,
}

struct Header {
    magic: u8,
    cols: usize,
    rows: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'2' | b'3' | b'5' | b'6') {
        let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::MalformedHeader(format!("unsupported magic {shown:?}")));
    }
    let magic = bytes[1] - b'0';
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::MalformedHeader("header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("bad header field at byte {start}")))?;
    }
    // exactly one whitespace byte separates the header from binary data
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::MalformedHeader("missing whitespace after maxval".into()));
    }
    let [cols, rows, maxval] = fields;
    if cols == 0 || rows == 0 {
        return Err(Error::MalformedHeader("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} outside [1, 65535]")));
    }
    Ok(Header {
        magic,
        cols: cols as usize,
        rows: rows as usize,
        maxval: maxval as u32,
        data_start: pos + 1,
    })
}

/// Decode a PGM/PPM (P2, P3, P5, P6) image.
pub fn decode_netpbm(bytes: &[u8], scale: PixelScale) -> Result<ImageRaster> {
    let h = parse_header(bytes)?;
    let channels = if matches!(h.magic, 3 | 6) { 3 } else { 1 };
    let count = h.rows * h.cols * channels;
    let data = &bytes[h.data_start.min(bytes.len())..];
    let samples: Vec<u32> = if matches!(h.magic, 2 | 3) {
        let text = std::str::from_utf8(data).map_err(|e| Error::Parse(e.to_string()))?;
        let mut out = Vec::with_capacity(count);
        for tok in text.split_ascii_whitespace().take(count) {
            out.push(tok.parse().map_err(|_| Error::Parse(format!("bad sample {tok:?}")))?);
        }
        out
    } else {
        let width = if h.maxval > 255 { 2 } else { 1 };
        if data.len() < count * width {
            return Err(Error::TruncatedData);
        }
        data[..count * width]
            .chunks_exact(width)
            .map(|b| if width == 2 { u32::from(u16::from_be_bytes([b[0], b[1]])) } else { u32::from(b[0]) })
            .collect()
    };
    if samples.len() < count {
        return Err(Error::TruncatedData);
    }
    if let Some(s) = samples.iter().find(|&&s| s > h.maxval) {
        return Err(Error::Parse(format!("sample {s} exceeds maxval {}", h.maxval)));
    }
    let (div, p_max) = match scale {
        PixelScale::Unit => (f64::from(h.maxval), 1.0),
        PixelScale::Raw => (1.0, f64::from(h.maxval)),
    };
    let planes = (0..channels)
        .map(|ch| samples.iter().skip(ch).step_by(channels).map(|&s| f64::from(s) / div).collect())
        .collect();
    ImageRaster::new(h.rows, h.cols, p_max, planes)
}

/// Encode as binary PGM (P5) or PPM (P6). Pixels are mapped to
/// `round(value / p_max * maxval)`.
pub fn encode_netpbm(img: &ImageRaster, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(Error::InvalidArgument("maxval 0".into()));
    }
    let magic = if img.channels() == 3 { 6 } else { 5 };
    let mut out = format!("P{magic}\n{} {}\n{maxval}\n", img.cols, img.rows).into_bytes();
    for i in 0..img.pixels() {
        for plane in &img.planes {
            let s = (plane[i] / img.p_max * f64::from(maxval)).round().clamp(0.0, f64::from(maxval)) as u16;
            if maxval > 255 {
                out.extend_from_slice(&s.to_be_bytes());
            } else {
                out.push(s as u8);
            }
        }
    }
    Ok(out)
}

pub fn read_ppm(path: &Path, scale: PixelScale) -> Result<ImageRaster> {
    decode_netpbm(&std::fs::read(path)?, scale)
}

pub fn write_ppm(path: &Path, img: &ImageRaster, maxval: u16) -> Result<()> {
    let bytes = encode_netpbm(img, maxval)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Settings for [`recover_image`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecoveryConfig {
    /// K as a fraction of the pixel count.
    pub k_fraction: f64,
    /// K' as a fraction of the pixel count.
    pub k_prime_fraction: f64,
    /// Unfolded (anchor) pixels as a fraction of the pixel count.
    pub anchor_fraction: f64,
    pub lambda: f64,
    /// Ball radius slack: each ε gives radius `λ/2 + ε`.
    pub epsilons: Vec<f64>,
    pub seed: u64,
    /// Equality-constrained L1 suits images in the span of the basis; the
    /// lasso tolerates images that are not.
    #[serde(default = "default_method")]
    pub method: RecoveryMethod,
}

fn default_method() -> RecoveryMethod {
    RecoveryMethod::L1
}

impl ImageRecoveryConfig {
    fn validate(&self, pixels: usize) -> Result<(usize, usize, usize)> {
        for (name, f) in [("k_fraction", self.k_fraction), ("k_prime_fraction", self.k_prime_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::ConfigInvalid(format!("{name} = {f} outside (0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.anchor_fraction) {
            return Err(Error::ConfigInvalid(format!("anchor_fraction = {} outside [0, 1]", self.anchor_fraction)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::ConfigInvalid(format!("λ = {}", self.lambda)));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::ConfigInvalid("ε list must be nonempty and nonnegative".into()));
        }
        let k = ((self.k_fraction * pixels as f64).round() as usize).max(1);
        let k_prime = ((self.k_prime_fraction * pixels as f64).round() as usize).max(1);
        if k + k_prime > pixels {
            return Err(Error::ConfigInvalid(format!("K + K' = {} exceeds {pixels} pixels", k + k_prime)));
        }
        let anchors = (self.anchor_fraction * pixels as f64).round() as usize;
        Ok((k, k_prime, anchors))
    }
}

/// Recovery at one ε.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRecovery {
    pub epsilon: f64,
    pub partition_count: usize,
    pub z: ZRaster,
    pub image: ImageRaster,
}

/// One line of the error report. `epsilon` is `None` for the fused result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub epsilon: Option<f64>,
    pub channel: usize,
    pub partition_count: Option<usize>,
    pub error_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecovery {
    pub per_epsilon: Vec<EpsilonRecovery>,
    /// ε values for which no sampling plan exists (no invertible `W_S`
    /// inside the cover), with the reason. They take no part in fusion.
    pub skipped: Vec<(f64, String)>,
    pub fused_z: ZRaster,
    pub fused: ImageRaster,
    pub report: Vec<ErrorRow>,
}

impl ImageRecovery {
    /// `epsilon,channel,partition_count,error_fraction`; the fused rows use
    /// `fused` as ε and leave the partition count empty. Missing error
    /// fractions (no ground truth) are empty.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("epsilon,channel,partition_count,error_fraction\n");
        for row in &self.report {
            let eps = row.epsilon.map_or_else(|| "fused".to_string(), |e| e.to_string());
            let count = row.partition_count.map(|c| c.to_string()).unwrap_or_default();
            let err = row.error_fraction.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{eps},{},{count},{err}", row.channel);
        }
        out
    }
}

/// Anchor pixels: a seeded shuffle of V' first, then of the remaining
/// pixels if more anchors are requested than V' holds.
fn choose_anchors(v_prime: &[usize], pixels: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = v_prime.to_vec();
    inside.shuffle(&mut rng);
    let mut chosen: Vec<usize> = inside.into_iter().take(count).collect();
    if chosen.len() < count {
        let mut outside: Vec<usize> = (0..pixels).filter(|v| v_prime.binary_search(v).is_err()).collect();
        outside.shuffle(&mut rng);
        chosen.extend(outside.into_iter().take(count - chosen.len()));
    }
    chosen
}

/// Least-squares fit of basis coefficients to values on `rows`.
struct Fitter {
    rows: Vec<usize>,
    solve: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
}

impl Fitter {
    fn new(basis: &EigenBasis, rows: &[usize]) -> Result<Self> {
        let w = basis.rows(rows);
        let wt = w.transpose();
        let normal = &wt * &w;
        let solve: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync> = match normal.clone().cholesky() {
            Some(ch) => Box::new(move |y| ch.solve(&(&wt * y))),
            None => {
                let pinv = w.pseudo_inverse(1e-12).map_err(|e| Error::SolverDiverged(e.to_string()))?;
                Box::new(move |y| &pinv * y)
            }
        };
        Ok(Self {
            rows: rows.to_vec(),
            solve,
        })
    }
}

fn recover_plane(
    recoverer: &SparseRecoverer,
    fitter: &Fitter,
    p: &[f64],
    lambda: f64,
    anchors: &[(usize, i64)],
) -> Result<Vec<i64>> {
    let basis = recoverer.basis;
    let vp = recoverer.v_prime();
    let known = KnownFoldings::new(anchors.iter().copied().filter(|(v, _)| vp.binary_search(v).is_ok()).collect());
    let z_local: Vec<i64> = if known.entries.len() == vp.len() {
        let mut z = vec![0; vp.len()];
        for &(v, zv) in &known.entries {
            z[vp.binary_search(&v).unwrap_or_default()] = zv;
        }
        z
    } else {
        let p_local: Vec<f64> = vp.iter().map(|&v| p[v]).collect();
        recoverer.recover_snapshot(&p_local, &known)?.z
    };

    let mut z = vec![0i64; p.len()];
    if vp.len() < p.len() {
        let y = DVector::from_iterator(
            fitter.rows.len(),
            vp.iter().zip(&z_local).map(|(&v, &zv)| lambda * zv as f64 + p[v]),
        );
        let coeffs = (fitter.solve)(&y);
        let full = basis.vectors() * coeffs;
        for (v, zv) in z.iter_mut().enumerate() {
            *zv = ((full[v] - p[v]) / lambda).round() as i64;
        }
    }
    for (&v, &zv) in vp.iter().zip(&z_local) {
        z[v] = zv;
    }
    for &(v, zv) in anchors {
        z[v] = zv;
    }
    Ok(z)
}

/// Recover the folding numbers of every channel of `folded` for each ε in
/// the config and fuse them by majority vote (ε ascending). Anchors read
/// their folding numbers from `truth`, which is required when the anchor
/// fraction is positive and is also used for the error report.
pub fn recover_image(
    folded: &ImageRaster,
    truth: Option<&ZRaster>,
    cfg: &ImageRecoveryConfig,
) -> Result<ImageRecovery> {
    let pixels = folded.pixels();
    let (k, k_prime, n_anchors) = cfg.validate(pixels)?;
    if let Some(t) = truth {
        if t.rows != folded.rows || t.cols != folded.cols || t.planes.len() != folded.channels() {
            return Err(Error::DimensionMismatch("ground truth does not match image".into()));
        }
    } else if n_anchors > 0 {
        return Err(Error::ConfigInvalid("anchors need ground-truth folding numbers".into()));
    }
    let basis = dct_grid_basis(folded.rows, folded.cols, k)?;
    let phi = phi_matrix_image(&basis)?;
    let solver = SolverConfig::default();
    let lambda = cfg.lambda;

    let mut eps: Vec<f64> = cfg.epsilons.clone();
    eps.sort_by(f64::total_cmp);
    let outcomes: Vec<Option<EpsilonRecovery>> = eps
        .par_iter()
        .map(|&e| -> Result<Option<EpsilonRecovery>> {
            let plan = match plan_sampling(&basis, &phi, lambda / 2.0 + e, k_prime, lambda, lambda, cfg.seed) {
                Ok(plan) => plan,
                Err(Error::NoInvertibleSubset | Error::SingularWS) => return Ok(None),
                Err(err) => return Err(err),
            };
            let vp = &plan.partition.v_prime;
            let fitter = Fitter::new(&basis, vp)?;
            let anchor_pixels = choose_anchors(vp, pixels, n_anchors, cfg.seed.wrapping_add(1));
            let recoverer = SparseRecoverer {
                basis: &basis,
                plan: &plan,
                method: cfg.method,
                solver,
            };
            let planes = (0..folded.channels())
                .into_par_iter()
                .map(|ch| {
                    let anchors: Vec<(usize, i64)> = match truth {
                        Some(t) => anchor_pixels.iter().map(|&v| (v, t.planes[ch][v])).collect(),
                        None => Vec::new(),
                    };
                    recover_plane(&recoverer, &fitter, folded.plane(ch), lambda, &anchors)
                })
                .collect::<Result<Vec<_>>>()?;
            let z = ZRaster {
                rows: folded.rows,
                cols: folded.cols,
                planes,
            };
            Ok(Some(EpsilonRecovery {
                epsilon: e,
                partition_count: plan.partition.len(),
                image: unfold_image(folded, &z, lambda)?,
                z,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped: Vec<(f64, String)> = eps
        .iter()
        .zip(&outcomes)
        .filter(|(_, o)| o.is_none())
        .map(|(&e, _)| (e, Error::NoInvertibleSubset.to_string()))
        .collect();
    let per_epsilon: Vec<EpsilonRecovery> = outcomes.into_iter().flatten().collect();
    if per_epsilon.is_empty() {
        return Err(Error::NoInvertibleSubset);
    }

    let fused_planes = (0..folded.channels())
        .map(|ch| {
            let candidates: Vec<Vec<i64>> = per_epsilon.iter().map(|r| r.z.planes[ch].clone()).collect();
            majority_vote(&candidates)
        })
        .collect::<Result<Vec<_>>>()?;
    let fused_z = ZRaster {
        rows: folded.rows,
        cols: folded.cols,
        planes: fused_planes,
    };

    let error_of = |z: &ZRaster| -> Result<Option<Vec<usize>>> { truth.map(|t| z.mismatches(t)).transpose() };
    let mut report = Vec::new();
    for r in &per_epsilon {
        let errors = error_of(&r.z)?;
        for ch in 0..folded.channels() {
            report.push(ErrorRow {
                epsilon: Some(r.epsilon),
                channel: ch,
                partition_count: Some(r.partition_count),
                error_fraction: errors.as_ref().map(|e| e[ch] as f64 / pixels as f64),
            });
        }
    }
    let fused_errors = error_of(&fused_z)?;
    for ch in 0..folded.channels() {
        report.push(ErrorRow {
            epsilon: None,
            channel: ch,
            partition_count: None,
            error_fraction: fused_errors.as_ref().map(|e| e[ch] as f64 / pixels as f64),
        });
    }
    Ok(ImageRecovery {
        fused: unfold_image(folded, &fused_z, lambda)?,
        fused_z,
        per_epsilon,
        skipped,
        report,
    })
}

/// Smooth grayscale test image lying exactly in the span of the first
/// `round(k_fraction * P)` cosine modes: a flat background with a
/// soft-edged plateau and a few narrow bright blobs, projected onto those
/// modes. An affine map (which stays in the span, the constant mode being
/// included) puts the median at 0.47 and the peak at 0.82, so the blobs
/// cross 0.75 while every pixel stays within 0.375 of the background.
pub fn toy_image(rows: usize, cols: usize, k_fraction: f64, seed: u64) -> Result<ImageRaster> {
    let pixels = rows * cols;
    let k = ((k_fraction * pixels as f64).round() as usize).max(1);
    let basis = dct_grid_basis(rows, cols, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (rows as f64, cols as f64);
    let gx: f64 = rng.random_range(-0.05..0.05);
    let gy: f64 = rng.random_range(-0.05..0.05);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.2..0.8) * h,
                rng.random_range(0.2..0.8) * w,
                rng.random_range(0.05..0.08) * h.min(w),
                rng.random_range(0.8..1.0),
            )
        })
        .collect();
    let (pr, pc) = (rng.random_range(0.3..0.7) * h, rng.random_range(0.3..0.7) * w);
    let half = 0.15 * h.min(w);
    let raw = DVector::from_fn(pixels, |v, _| {
        let (r, c) = ((v / cols) as f64, (v % cols) as f64);
        let mut x = gx * (r / h - 0.5) + gy * (c / w - 0.5);
        for &(br, bc, s, a) in &blobs {
            x += a * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * s * s)).exp();
        }
        let d = ((r - pr).abs().max((c - pc).abs()) - half) / 2.0;
        x + 0.2 / (1.0 + d.exp())
    });
    let w = basis.vectors();
    let x = w * (w.transpose() * raw);
    let mut sorted: Vec<f64> = x.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let (median, peak) = (sorted[pixels / 2], sorted[pixels - 1]);
    if peak - median <= 0.0 {
        return Err(Error::InvalidArgument("flat toy image".into()));
    }
    let scale = (0.82 - 0.47) / (peak - median);
    let plane: Vec<f64> = x.iter().map(|v| 0.47 + (v - median) * scale).collect();
    ImageRaster::new(rows, cols, 1.0, vec![plane])
}
