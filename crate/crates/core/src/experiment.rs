//! Reproducible simulation runs of the sparse difference-signal pipeline:
//! generate, sample, fold, add noise, recover at every (ε, SNR) pair, and
//! aggregate folding-number errors over seeded trials.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{laplacian, random_weighted_model, standard_topology, Topology, WeightDistribution, WeightedGraph};
use crate::partition::{phi_matrix, PhiMatrix};
use crate::recovery::{default_alpha, epsilon_search, plan_sampling, RecoveryMethod, SparseRecoverer};
use crate::signal::{add_noise_refold, FoldedObservation, fold_signal, generate_signal, sample_time, SpectralBounds, DEFAULT_FREQ_POINTS};
use crate::solver::SolverConfig;
use crate::spectral::{eigenbasis, EigenBasis};

/// Edge list of the bundled 47-vertex power-plant surrogate (unit weights).
/// It is synthetic, with a grid-like degree profile, not the real network.
pub const POWER_PLANT_SURROGATE: &str = include_str!("../data/power_plant_surrogate.edges");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    Standard { topology: Topology },
    PowerPlantSurrogate,
    EdgeList { path: PathBuf },
}

impl GraphSpec {
    pub fn build(&self) -> Result<WeightedGraph> {
        match self {
            GraphSpec::Standard { topology } => standard_topology(*topology),
            GraphSpec::PowerPlantSurrogate => WeightedGraph::parse_edge_list(POWER_PLANT_SURROGATE, Some(47)),
            GraphSpec::EdgeList { path } => WeightedGraph::parse_edge_list(&std::fs::read_to_string(path)?, None),
        }
    }
}

/// How the ε values of a sweep are chosen. List values are multiples of λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSpec {
    List { over_lambda: Vec<f64> },
    /// Bisection on `[lo, hi]` (multiples of λ) for the partition count
    /// nearest `target`, done per trial.
    Search { lo: f64, hi: f64, target: usize },
}

/// Regulariser choice for noisy runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodPolicy {
    /// L1 for noiseless runs, lasso with `α = 100/λ²` otherwise.
    Auto,
    L1,
    Lasso { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    /// Random edge weights per trial; `None` keeps the graph's weights.
    pub weights: Option<WeightDistribution>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "K_prime")]
    pub k_prime: usize,
    #[serde(rename = "B")]
    pub bandlimit: f64,
    pub freq_points: usize,
    /// Scale `c` of the bounds `a_{k,f} = c / (k (1 + |f|))`.
    pub bounds_scale: f64,
    /// Nonzero F-transform atoms per signal; `None` fills every atom.
    pub atoms: Option<usize>,
    /// Time samples per trial.
    pub steps: usize,
    /// λ as a fraction of `max |y|` in each trial, unless `lambda` is set.
    pub lambda_fraction: f64,
    pub lambda: Option<f64>,
    /// SNR levels in dB; `null` means noiseless.
    pub snr_db: Vec<Option<f64>>,
    pub epsilon: EpsilonSpec,
    pub method: MethodPolicy,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Standard setting for the power-plant surrogate: K = 20, K' = 10.
    pub fn power_plant() -> Self {
        Self {
            graph: GraphSpec::PowerPlantSurrogate,
            weights: None,
            k: 20,
            k_prime: 10,
            bandlimit: 1.0,
            freq_points: DEFAULT_FREQ_POINTS,
            bounds_scale: 1.0,
            atoms: None,
            steps: 16,
            lambda_fraction: 1.0,
            lambda: None,
            snr_db: vec![Some(15.0), Some(20.0), Some(40.0)],
            epsilon: EpsilonSpec::List {
                over_lambda: vec![0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0, 25.0],
            },
            method: MethodPolicy::Auto,
            trials: 20,
            seed: 0,
        }
    }

    /// Standard setting for a complete graph on 120 vertices with random
    /// weights: K = 50, K' = 20.
    pub fn complete_graph() -> Self {
        Self {
            graph: GraphSpec::Standard {
                topology: Topology::Complete(120),
            },
            weights: Some(WeightDistribution::default()),
            k: 50,
            k_prime: 20,
            ..Self::power_plant()
        }
    }

    /// Standard setting for the 25 x 20 lattice: K = 80, K' = 30.
    pub fn lattice() -> Self {
        Self {
            graph: GraphSpec::Standard {
                topology: Topology::Grid { rows: 25, cols: 20 },
            },
            k: 80,
            k_prime: 30,
            ..Self::power_plant()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.k == 0 || self.k_prime == 0 {
            return bad(format!("K = {} and K' = {} must be positive", self.k, self.k_prime));
        }
        if self.steps < 2 {
            return bad(format!("steps = {} leaves no difference signal", self.steps));
        }
        if !(self.bandlimit > 0.0) || !(self.bounds_scale > 0.0) || self.freq_points < 2 {
            return bad("bandlimit, bounds scale and frequency grid must be positive".into());
        }
        if !(self.lambda_fraction > 0.0) || self.lambda.is_some_and(|l| !(l > 0.0)) {
            return bad("λ must be positive".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().flatten().any(|s| !s.is_finite()) {
            return bad("SNR list must be nonempty and finite (null for noiseless)".into());
        }
        match &self.epsilon {
            EpsilonSpec::List { over_lambda } if over_lambda.is_empty() || over_lambda.iter().any(|e| !(*e >= 0.0)) => {
                bad("ε list must be nonempty and nonnegative".into())
            }
            EpsilonSpec::Search { lo, hi, .. } if !(0.0 <= *lo && lo < hi) => bad(format!("bad ε bracket [{lo}, {hi}]")),
            _ => Ok(()),
        }
    }
}

/// One (trial, ε, SNR) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub epsilon_over_lambda: f64,
    pub snr_db: Option<f64>,
    pub partition_count: usize,
    /// Wrong folding-number differences over V' and all steps.
    pub total_error: usize,
    /// `total_error / |V'|`.
    pub per_vertex_error: f64,
}

/// Mean over trials at one (ε, SNR) grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub epsilon_over_lambda: f64,
    pub snr_db: Option<f64>,
    pub trials: usize,
    /// Trials where no usable sampling design existed at this ε.
    pub skipped: usize,
    pub mean_total_error: f64,
    pub mean_per_vertex_error: f64,
    pub mean_partition_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub grid: Vec<GridPoint>,
}

struct TrialSetup {
    basis: EigenBasis,
    phi: PhiMatrix,
    lambda: f64,
    obs: FoldedObservation,
}

const NOISE_SALT: u64 = 0x5eed_0000_0000;

fn count_errors(dz: &DMatrix<i64>, obs: &FoldedObservation, vp: &[usize]) -> Result<usize> {
    let z = obs.z.as_ref().ok_or_else(|| Error::InvalidArgument("observation lacks ground truth".into()))?;
    let mut errors = 0;
    for (i, &v) in vp.iter().enumerate() {
        let row = obs.row_of(v)?;
        for n in 0..dz.ncols() {
            errors += usize::from(dz[(i, n)] != z[(row, n + 1)] - z[(row, n)]);
        }
    }
    Ok(errors)
}

fn trial_seed(cfg: &ExperimentConfig, trial: usize) -> u64 {
    cfg.seed.wrapping_add(trial as u64)
}

fn setup_trial(cfg: &ExperimentConfig, graph: &WeightedGraph, seed: u64) -> Result<TrialSetup> {
    let graph = match cfg.weights {
        Some(dist) => random_weighted_model(graph, dist, seed)?,
        None => graph.clone(),
    };
    if cfg.k + cfg.k_prime > graph.n() {
        return Err(Error::ConfigInvalid(format!("K + K' = {} exceeds n = {}", cfg.k + cfg.k_prime, graph.n())));
    }
    let basis = eigenbasis(&laplacian(&graph), cfg.k)?;
    let bounds = SpectralBounds::inverse_profile(cfg.k, cfg.bandlimit, cfg.freq_points, cfg.bounds_scale)?;
    let atoms = cfg.atoms.unwrap_or(cfg.k * cfg.freq_points);
    let signal = generate_signal(&basis, &bounds, atoms, seed)?;
    let y = sample_time(&signal, 0, cfg.steps as i64 - 1)?;
    let lambda = cfg.lambda.unwrap_or(cfg.lambda_fraction * y.max_abs());
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("signal is identically zero".into()));
    }
    let obs = fold_signal(&y, &vec![lambda; graph.n()])?;
    let phi = phi_matrix(&basis, &bounds)?;
    Ok(TrialSetup { basis, phi, lambda, obs })
}

fn method_for(cfg: &ExperimentConfig, snr: Option<f64>, lambda: f64) -> RecoveryMethod {
    match cfg.method {
        MethodPolicy::L1 => RecoveryMethod::L1,
        MethodPolicy::Lasso { alpha } => RecoveryMethod::Lasso { alpha },
        MethodPolicy::Auto if snr.is_none() => RecoveryMethod::L1,
        MethodPolicy::Auto => RecoveryMethod::Lasso {
            alpha: default_alpha(lambda),
        },
    }
}

/// Records for one trial, or `None` per ε where no design exists.
fn run_trial(cfg: &ExperimentConfig, graph: &WeightedGraph, trial: usize) -> Result<Vec<(f64, Option<Vec<TrialRecord>>)>> {
    let seed = trial_seed(cfg, trial);
    let setup = setup_trial(cfg, graph, seed)?;
    let lambda = setup.lambda;
    let plan_at = |eps_rel: f64| plan_sampling(&setup.basis, &setup.phi, lambda / 2.0 + eps_rel * lambda, cfg.k_prime, lambda, lambda, seed);
    let eps_list: Vec<f64> = match &cfg.epsilon {
        EpsilonSpec::List { over_lambda } => over_lambda.clone(),
        EpsilonSpec::Search { lo, hi, target } => {
            let choice = epsilon_search(|e| plan_at(e).map(|p| p.partition.len()), *lo, *hi, *target)?;
            vec![choice.epsilon]
        }
    };
    let noisy: Vec<_> = cfg
        .snr_db
        .iter()
        .map(|snr| match snr {
            Some(db) => add_noise_refold(&setup.obs, *db, seed ^ NOISE_SALT),
            None => Ok(setup.obs.clone()),
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(eps_list.len());
    for &eps in &eps_list {
        let plan = match plan_at(eps) {
            Ok(plan) => plan,
            Err(Error::NoInvertibleSubset | Error::SingularWS) => {
                out.push((eps, None));
                continue;
            }
            Err(e) => return Err(e),
        };
        let vp = plan.partition.v_prime.clone();
        let mut records = Vec::with_capacity(cfg.snr_db.len());
        for (snr, obs) in cfg.snr_db.iter().zip(&noisy) {
            let recoverer = SparseRecoverer {
                basis: &setup.basis,
                plan: &plan,
                method: method_for(cfg, *snr, lambda),
                solver: SolverConfig::default(),
            };
            let (dz, _) = recoverer.recover_window(obs)?;
            let total_error = count_errors(&dz, &setup.obs, &vp)?;
            records.push(TrialRecord {
                trial,
                seed,
                epsilon_over_lambda: eps,
                snr_db: *snr,
                partition_count: plan.partition.len(),
                total_error,
                per_vertex_error: total_error as f64 / vp.len() as f64,
            });
        }
        out.push((eps, Some(records)));
    }
    Ok(out)
}

/// Run every trial (in parallel; each is seeded by `seed + trial`) and
/// aggregate by (ε, SNR).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let graph = cfg.graph.build()?;
    let per_trial: Vec<Vec<(f64, Option<Vec<TrialRecord>>)>> =
        (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, &graph, t)).collect::<Result<_>>()?;

    let mut records: Vec<TrialRecord> = Vec::new();
    let mut grid = Vec::new();
    let eps_slots = per_trial.first().map_or(0, Vec::len);
    for (si, snr) in cfg.snr_db.iter().enumerate() {
        for slot in 0..eps_slots {
            let mut picked = Vec::new();
            let mut skipped = 0;
            for trial in &per_trial {
                match &trial[slot].1 {
                    Some(r) => picked.push(r[si].clone()),
                    None => skipped += 1,
                }
            }
            let n = picked.len() as f64;
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| if picked.is_empty() { f64::NAN } else { picked.iter().map(f).sum::<f64>() / n };
            // with a per-trial ε search the slot's ε is the trial mean
            let eps = match &cfg.epsilon {
                EpsilonSpec::List { over_lambda } => over_lambda[slot],
                EpsilonSpec::Search { .. } => {
                    per_trial.iter().map(|t| t[slot].0).sum::<f64>() / per_trial.len() as f64
                }
            };
            grid.push(GridPoint {
                epsilon_over_lambda: eps,
                snr_db: *snr,
                trials: picked.len(),
                skipped,
                mean_total_error: mean(&|r| r.total_error as f64),
                mean_per_vertex_error: mean(&|r| r.per_vertex_error),
                mean_partition_count: mean(&|r| r.partition_count as f64),
            });
            records.extend(picked);
        }
    }
    records.sort_by(|a, b| {
        (a.trial, a.epsilon_over_lambda, a.snr_db.unwrap_or(f64::INFINITY))
            .partial_cmp(&(b.trial, b.epsilon_over_lambda, b.snr_db.unwrap_or(f64::INFINITY)))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(ExperimentResult {
        config: cfg.clone(),
        records,
        grid,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.filter(|x| !x.is_nan()).map_or_else(String::new, |x| x.to_string())
}

impl ExperimentResult {
    fn header(&self) -> Result<String> {
        Ok(format!("# {}\n", serde_json::to_string(&self.config)?))
    }

    /// Grid means as CSV; the first line is `# <config json>`.
    pub fn aggregate_csv(&self) -> Result<String> {
        let mut s = self.header()?;
        s.push_str("epsilon_over_lambda,snr_db,trials_ok,skipped,mean_total_error,mean_per_vertex_error,mean_partition_count\n");
        for g in &self.grid {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                g.epsilon_over_lambda,
                fmt_opt(g.snr_db),
                g.trials,
                g.skipped,
                fmt_opt(Some(g.mean_total_error)),
                fmt_opt(Some(g.mean_per_vertex_error)),
                fmt_opt(Some(g.mean_partition_count))
            );
        }
        Ok(s)
    }

    /// Per-trial records as CSV; the first line is `# <config json>`.
    pub fn trials_csv(&self) -> Result<String> {
        let mut s = self.header()?;
        s.push_str("trial,seed,epsilon_over_lambda,snr_db,partition_count,total_error,per_vertex_error\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.trial,
                r.seed,
                r.epsilon_over_lambda,
                fmt_opt(r.snr_db),
                r.partition_count,
                r.total_error,
                r.per_vertex_error
            );
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Grid points of one SNR level, in ε order.
    pub fn curve(&self, snr_db: Option<f64>) -> Vec<&GridPoint> {
        let mut c: Vec<&GridPoint> = self.grid.iter().filter(|g| g.snr_db == snr_db).collect();
        c.sort_by(|a, b| a.epsilon_over_lambda.total_cmp(&b.epsilon_over_lambda));
        c
    }

    /// Mean total error of one trial at one SNR, over its ε values.
    pub fn trial_mean_error(&self, trial: usize, snr_db: Option<f64>) -> Option<f64> {
        let errs: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.trial == trial && r.snr_db == snr_db)
            .map(|r| r.total_error as f64)
            .collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }

    /// Trials whose mean error is ordered along `snr_levels` (each level no
    /// worse than the next), and the number of trials compared.
    pub fn paired_noise_order(&self, snr_levels: &[Option<f64>]) -> (usize, usize) {
        let mut ordered = 0;
        let mut compared = 0;
        for t in 0..self.config.trials {
            let Some(errs) = snr_levels.iter().map(|&s| self.trial_mean_error(t, s)).collect::<Option<Vec<_>>>() else {
                continue;
            };
            compared += 1;
            ordered += usize::from(errs.windows(2).all(|w| w[0] <= w[1]));
        }
        (ordered, compared)
    }
}

/// True when some interior point of the curve is strictly below both
/// endpoints.
pub fn has_interior_minimum(values: &[f64]) -> bool {
    if values.len() < 3 {
        return false;
    }
    let (first, last) = (values[0], values[values.len() - 1]);
    values[1..values.len() - 1].iter().any(|&v| v < first && v < last)
}

/// Number of places where the sequence increases.
pub fn increase_count(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            graph: GraphSpec::Standard {
                topology: Topology::Grid { rows: 5, cols: 4 },
            },
            k: 6,
            k_prime: 4,
            freq_points: 17,
            steps: 6,
            snr_db: vec![None, Some(40.0)],
            epsilon: EpsilonSpec::List {
                over_lambda: vec![0.0, 0.5, 1.0],
            },
            trials: 3,
            seed: 11,
            ..ExperimentConfig::power_plant()
        }
    }

    #[test]
    fn surrogate_graph_parses() {
        let g = GraphSpec::PowerPlantSurrogate.build().unwrap();
        assert_eq!(g.n(), 47);
        assert_eq!(g.num_edges(), 60);
        assert_eq!(g.num_components(), 1);
    }

    #[test]
    fn presets_validate() {
        for cfg in [ExperimentConfig::power_plant(), ExperimentConfig::complete_graph(), ExperimentConfig::lattice()] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = ExperimentConfig { trials: 0, ..small() };
        assert!(matches!(run_experiment(&cfg), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn oversized_sample_rejected() {
        let cfg = ExperimentConfig { k: 15, k_prime: 6, ..small() };
        assert!(matches!(run_experiment(&cfg), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn run_is_deterministic_and_complete() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.grid.len(), 6);
        for g in &a.grid {
            assert_eq!(g.trials + g.skipped, 3);
        }
        let csv = a.aggregate_csv().unwrap();
        assert!(csv.starts_with("# {"));
        let cfg_back: ExperimentConfig = serde_json::from_str(csv.lines().next().unwrap().trim_start_matches("# ")).unwrap();
        assert_eq!(cfg_back, cfg);
        assert_eq!(a.trials_csv().unwrap().lines().count(), 2 + a.records.len());
    }

    #[test]
    fn search_spec_runs() {
        let cfg = ExperimentConfig {
            epsilon: EpsilonSpec::Search { lo: 0.0, hi: 2.0, target: 2 },
            trials: 2,
            ..small()
        };
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.grid.len(), 2);
    }

    #[test]
    fn curve_shape_checks() {
        assert!(has_interior_minimum(&[3.0, 1.0, 2.0]));
        assert!(!has_interior_minimum(&[3.0, 2.0, 1.0]));
        assert!(!has_interior_minimum(&[1.0, 1.0, 1.0]));
        assert_eq!(increase_count(&[5.0, 4.0, 4.0, 3.0]), 0);
        assert_eq!(increase_count(&[5.0, 6.0, 4.0, 5.0]), 2);
    }
}
