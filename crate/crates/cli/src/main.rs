//! Command-line driver: signal generation, folding, recovery, experiment
//! sweeps and image runs. Every command prints a JSON summary on stdout;
//! failures print `{"error": kind, "message": ...}` on stderr and exit 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use foldgraph::experiment::{
    has_interior_minimum, increase_count, run_experiment, EpsilonSpec, ExperimentConfig, GraphSpec,
};
use foldgraph::graph::{laplacian, random_weighted_model, Topology, WeightDistribution};
use foldgraph::image::{
    decode_netpbm, encode_netpbm, fold_image, read_ppm, recover_image, toy_image, ImageRaster, ImageRecoveryConfig,
    PixelScale, ZRaster,
};
use foldgraph::recovery::{exact_recover_values, RecoveryMethod};
use foldgraph::signal::{fold, fold_signal, generate_signal, sample_time, DiscreteSignal, SpectralBounds, DEFAULT_FREQ_POINTS};
use foldgraph::spectral::{draw_lambda_prime, eigenbasis, property_harness, HarnessConfig, Property, SampleDesign};
use foldgraph::{Error, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "foldgraph", version, about = "Folded graph signal recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// ε / SNR sweep of the sparse recovery pipeline.
    Run {
        #[command(flatten)]
        common: Common,
        /// Built-in setting used when no config file is given.
        #[arg(long, default_value = "power-plant")]
        preset: String,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated SNR levels in dB; `inf` for noiseless.
        #[arg(long)]
        snr: Option<String>,
        /// ε values in units of λ: `a,b,c` or `start:stop:step`.
        #[arg(long)]
        eps: Option<String>,
        /// Absolute folding rate instead of a fraction of max |y|.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Fraction of random weighted models satisfying a generic property.
    Props {
        #[command(flatten)]
        common: Common,
        /// `path:N`, `complete:N`, `grid:RxC`, `power-plant` or `edges:FILE`.
        #[arg(long, default_value = "path:5")]
        graph: String,
        #[arg(long, default_value = "P0")]
        property: Property,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Generate a bandlimited signal and write its samples.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Fold a sampled signal CSV.
    Fold {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lambda: f64,
        /// Sampling interval when the input carries no metadata line.
        #[arg(long)]
        t0: Option<f64>,
    },
    /// Exact recovery of one snapshot on a generated small instance.
    Exact {
        #[command(flatten)]
        common: Common,
    },
    /// Fold an image (netpbm file or the built-in toy image).
    ImageFold {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Toy image size `RxC`, used when no input is given.
        #[arg(long, default_value = "64x64")]
        toy: String,
        #[arg(long, default_value_t = 0.75)]
        lambda: f64,
    },
    /// Recover a folded image over an ε sweep and fuse the results.
    ImageRecover {
        #[command(flatten)]
        common: Common,
        /// Folded image: `folded.json` from image-fold, or a netpbm file.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Ground-truth folding numbers (`z.json`), needed for anchors.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Toy image size `RxC`, folded internally when no input is given.
        #[arg(long, default_value = "64x64")]
        toy: String,
        /// ε values in units of λ: `a,b,c` or `start:stop:step`.
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<Value> {
    match command {
        Command::Run { common, preset, trials, snr, eps, lambda } => cmd_run(&common, &preset, trials, snr, eps, lambda),
        Command::Props { common, graph, property, k, trials } => cmd_props(&common, &graph, property, k, trials),
        Command::Gen { common, graph, k, steps } => cmd_gen(&common, graph, k, steps),
        Command::Fold { common, input, lambda, t0 } => cmd_fold(&common, &input, lambda, t0),
        Command::Exact { common } => cmd_exact(&common),
        Command::ImageFold { common, input, toy, lambda } => cmd_image_fold(&common, input, &toy, lambda),
        Command::ImageRecover { common, input, truth, toy, eps, lambda } => {
            cmd_image_recover(&common, input, truth, &toy, eps, lambda)
        }
    }
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("foldgraph-out"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>, artifacts: &mut Vec<String>) -> Result<()> {
    fs::write(path, contents)?;
    artifacts.push(path.display().to_string());
    Ok(())
}

fn tagged_csv(config: &impl Serialize, body: &str) -> Result<String> {
    Ok(format!("# {}\n{body}", serde_json::to_string(config)?))
}

/// Binary netpbm with the config as a header comment.
fn tagged_netpbm(config: &impl Serialize, img: &ImageRaster) -> Result<Vec<u8>> {
    let bytes = encode_netpbm(img, 65535)?;
    let mut out = bytes[..3].to_vec();
    out.extend_from_slice(format!("# {}\n", serde_json::to_string(config)?).as_bytes());
    out.extend_from_slice(&bytes[3..]);
    Ok(out)
}

fn parse_graph(spec: &str) -> Result<GraphSpec> {
    let bad = || Error::Parse(format!("unknown graph {spec:?}"));
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let size = |s: &str| s.parse::<usize>().map_err(|_| bad());
    Ok(match kind {
        "power-plant" => GraphSpec::PowerPlantSurrogate,
        "path" => GraphSpec::Standard { topology: Topology::Path(size(arg)?) },
        "complete" => GraphSpec::Standard { topology: Topology::Complete(size(arg)?) },
        "grid" => {
            let (r, c) = arg.split_once('x').ok_or_else(bad)?;
            GraphSpec::Standard {
                topology: Topology::Grid { rows: size(r)?, cols: size(c)? },
            }
        }
        "edges" => GraphSpec::EdgeList { path: PathBuf::from(arg) },
        _ => return Err(bad()),
    })
}

fn parse_size(spec: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("expected RxC, got {spec:?}"));
    let (r, c) = spec.split_once('x').ok_or_else(bad)?;
    Ok((r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?))
}

/// `a,b,c` or `start:stop:step` (inclusive, tolerant to rounding).
fn parse_list(spec: &str) -> Result<Vec<f64>> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(Error::Parse(format!("bad range {spec:?}")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| start + i as f64 * step).collect());
    }
    spec.split(',').map(num).collect()
}

fn parse_snr(spec: &str) -> Result<Vec<Option<f64>>> {
    spec.split(',')
        .map(|s| match s.trim() {
            "inf" | "none" => Ok(None),
            v => v.parse().map(Some).map_err(|_| Error::Parse(format!("bad SNR {v:?}"))),
        })
        .collect()
}

fn cmd_run(
    common: &Common,
    preset: &str,
    trials: Option<usize>,
    snr: Option<String>,
    eps: Option<String>,
    lambda: Option<f64>,
) -> Result<Value> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => match preset {
            "power-plant" => ExperimentConfig::power_plant(),
            "complete" => ExperimentConfig::complete_graph(),
            "lattice" => ExperimentConfig::lattice(),
            other => return Err(Error::ConfigInvalid(format!("unknown preset {other:?}"))),
        },
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = snr {
        cfg.snr_db = parse_snr(&s)?;
    }
    if let Some(e) = eps {
        cfg.epsilon = EpsilonSpec::List { over_lambda: parse_list(&e)? };
    }
    if lambda.is_some() {
        cfg.lambda = lambda;
    }
    cfg.validate()?;
    let result = run_experiment(&cfg)?;
    let dir = out_dir(common)?;
    let mut artifacts = Vec::new();
    write(&dir.join("aggregate.csv"), result.aggregate_csv()?, &mut artifacts)?;
    write(&dir.join("trials.csv"), result.trials_csv()?, &mut artifacts)?;
    write(&dir.join("result.json"), result.to_json()?, &mut artifacts)?;
    let curves: Vec<Value> = cfg
        .snr_db
        .iter()
        .map(|&snr| {
            let curve = result.curve(snr);
            let errors: Vec<f64> = curve.iter().map(|g| g.mean_per_vertex_error).collect();
            let counts: Vec<f64> = curve.iter().map(|g| g.mean_partition_count).collect();
            json!({
                "snr_db": snr,
                "epsilon_over_lambda": curve.iter().map(|g| g.epsilon_over_lambda).collect::<Vec<_>>(),
                "mean_per_vertex_error": errors,
                "mean_partition_count": counts,
                "skipped": curve.iter().map(|g| g.skipped).sum::<usize>(),
                "interior_minimum": has_interior_minimum(&errors),
                "partition_count_increases": increase_count(&counts),
            })
        })
        .collect();
    Ok(json!({ "command": "run", "seed": cfg.seed, "config": cfg, "curves": curves, "artifacts": artifacts }))
}

fn cmd_props(common: &Common, graph: &str, property: Property, k: usize, trials: Option<usize>) -> Result<Value> {
    let mut cfg: HarnessConfig = match &common.config {
        Some(path) => load_config(path)?,
        None => HarnessConfig::new(k, 100, 0),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let spec = parse_graph(graph)?;
    let report = property_harness(&spec.build()?, property, &cfg)?;
    let summary = json!({
        "command": "props",
        "graph": spec,
        "config": cfg,
        "property": report.property,
        "trials": report.trials,
        "fraction": report.fraction,
        "seed": report.seed,
    });
    let mut artifacts = Vec::new();
    if common.out.is_some() {
        write(&out_dir(common)?.join("props.json"), serde_json::to_string_pretty(&summary)?, &mut artifacts)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GenConfig {
    graph: GraphSpec,
    weights: Option<WeightDistribution>,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "B")]
    bandlimit: f64,
    freq_points: usize,
    bounds_scale: f64,
    steps: usize,
    seed: u64,
    /// Sampling interval `1 / (2B)`, recorded for downstream commands.
    #[serde(rename = "T0", default)]
    t0: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            graph: GraphSpec::Standard { topology: Topology::Complete(8) },
            weights: Some(WeightDistribution::default()),
            k: 3,
            bandlimit: 1.0,
            freq_points: DEFAULT_FREQ_POINTS,
            bounds_scale: 1.0,
            steps: 16,
            seed: 0,
            t0: 0.5,
        }
    }
}

fn cmd_gen(common: &Common, graph: Option<String>, k: Option<usize>, steps: Option<usize>) -> Result<Value> {
    let mut cfg: GenConfig = match &common.config {
        Some(path) => load_config(path)?,
        None => GenConfig::default(),
    };
    if let Some(g) = graph {
        cfg.graph = parse_graph(&g)?;
    }
    if let Some(k) = k {
        cfg.k = k;
    }
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if cfg.steps == 0 {
        return Err(Error::ConfigInvalid("steps must be positive".into()));
    }
    let topology = cfg.graph.build()?;
    let g = match cfg.weights {
        Some(dist) => random_weighted_model(&topology, dist, cfg.seed)?,
        None => topology,
    };
    let basis = eigenbasis(&laplacian(&g), cfg.k)?;
    let bounds = SpectralBounds::inverse_profile(cfg.k, cfg.bandlimit, cfg.freq_points, cfg.bounds_scale)?;
    let signal = generate_signal(&basis, &bounds, cfg.k * cfg.freq_points, cfg.seed)?;
    let y = sample_time(&signal, 0, cfg.steps as i64 - 1)?;
    cfg.t0 = y.t0;
    let mut artifacts = Vec::new();
    write(&out_dir(common)?.join("signal.csv"), tagged_csv(&cfg, &y.to_csv())?, &mut artifacts)?;
    Ok(json!({
        "command": "gen",
        "seed": cfg.seed,
        "config": cfg,
        "vertices": y.vertices.len(),
        "steps": y.steps(),
        "max_abs": y.max_abs(),
        "artifacts": artifacts,
    }))
}

/// Metadata JSON from a leading `# ...` line, if any.
fn csv_metadata(text: &str) -> Option<Value> {
    let first = text.lines().next()?;
    serde_json::from_str(first.strip_prefix('#')?.trim()).ok()
}

fn cmd_fold(common: &Common, input: &Path, lambda: f64, t0: Option<f64>) -> Result<Value> {
    let text = fs::read_to_string(input)?;
    let meta = csv_metadata(&text);
    let t0 = t0
        .or_else(|| meta.as_ref()?.get("T0")?.as_f64())
        .ok_or_else(|| Error::ConfigInvalid("sampling interval unknown: pass --t0".into()))?;
    if !(lambda > 0.0) {
        return Err(Error::ConfigInvalid(format!("λ = {lambda}")));
    }
    let y = DiscreteSignal::from_csv(&text, t0)?;
    let obs = fold_signal(&y, &vec![lambda; y.vertices.len()])?;
    let cfg = json!({ "input": input, "lambda": lambda, "T0": t0, "source": meta });
    let mut artifacts = Vec::new();
    write(&out_dir(common)?.join("folded.csv"), tagged_csv(&cfg, &obs.to_csv())?, &mut artifacts)?;
    Ok(json!({
        "command": "fold",
        "config": cfg,
        "nonzero_fraction": obs.nonzero_fraction(),
        "artifacts": artifacts,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExactConfig {
    /// Vertices of the random weighted complete graph.
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    lambda: f64,
    /// Largest |x| as a multiple of λ.
    amplitude: f64,
    z_bound: i64,
    seed: u64,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            n: 8,
            k: 3,
            lambda: 1.0,
            amplitude: 2.9,
            z_bound: 3,
            seed: 0,
        }
    }
}

fn cmd_exact(common: &Common) -> Result<Value> {
    let mut cfg: ExactConfig = match &common.config {
        Some(path) => load_config(path)?,
        None => ExactConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if cfg.k + 1 > cfg.n || !(cfg.lambda > 0.0) {
        return Err(Error::ConfigInvalid(format!("need K < n and λ > 0, got K={} n={} λ={}", cfg.k, cfg.n, cfg.lambda)));
    }
    let topology = GraphSpec::Standard { topology: Topology::Complete(cfg.n) }.build()?;
    let g = random_weighted_model(&topology, WeightDistribution::default(), cfg.seed)?;
    let basis = eigenbasis(&laplacian(&g), cfg.k)?;
    let lambda_prime = draw_lambda_prime(cfg.lambda, cfg.seed);
    let design = SampleDesign::new(&basis, (0..cfg.k).collect(), vec![cfg.k], cfg.k, cfg.lambda, lambda_prime)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let raw = basis.vectors() * DVector::from_fn(cfg.k, |_, _| rng.random_range(-1.0..1.0));
    let x = &raw * (cfg.amplitude * cfg.lambda / raw.amax());
    let p_s: Vec<f64> = design.s.iter().map(|&v| fold(x[v], cfg.lambda).1).collect();
    let p_u = fold(x[cfg.k], lambda_prime).1;
    let rec = exact_recover_values(&p_s, &[p_u], &design, &basis, cfg.z_bound)?;
    let max_error = (&rec.snapshot - &x).amax();
    let z_true: Vec<i64> = (0..cfg.k).map(|v| fold(x[v], cfg.lambda).0).collect();
    let summary = json!({
        "command": "exact",
        "seed": cfg.seed,
        "config": cfg,
        "lambda_prime": lambda_prime,
        "z_s": rec.z_s,
        "z_s_true": z_true,
        "z_s_prime": rec.z_s_prime,
        "residual": rec.residual,
        "second_residual": rec.second_residual,
        "max_error": max_error,
        "recovered": max_error < 1e-6,
    });
    if common.out.is_some() {
        fs::write(out_dir(common)?.join("exact.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(summary)
}

/// Lossless raster file written next to the netpbm preview.
#[derive(Serialize, Deserialize)]
struct RasterFile {
    config: Value,
    rows: usize,
    cols: usize,
    p_max: f64,
    planes: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ZFile {
    config: Value,
    z: ZRaster,
}

fn raster_file(config: &Value, img: &ImageRaster) -> RasterFile {
    RasterFile {
        config: config.clone(),
        rows: img.rows(),
        cols: img.cols(),
        p_max: img.p_max(),
        planes: (0..img.channels()).map(|c| img.plane(c).to_vec()).collect(),
    }
}

fn cmd_image_fold(common: &Common, input: Option<PathBuf>, toy: &str, lambda: f64) -> Result<Value> {
    let seed = common.seed.unwrap_or(1);
    let (img, source) = match &input {
        Some(path) => (read_ppm(path, PixelScale::Unit)?, json!({ "input": path })),
        None => {
            let (rows, cols) = parse_size(toy)?;
            (toy_image(rows, cols, 0.2, seed)?, json!({ "toy": [rows, cols], "k_fraction": 0.2, "seed": seed }))
        }
    };
    let (folded, z) = fold_image(&img, lambda)?;
    let cfg = json!({ "source": source, "lambda": lambda });
    let dir = out_dir(common)?;
    let mut artifacts = Vec::new();
    write(&dir.join("folded.pgm"), tagged_netpbm(&cfg, &folded)?, &mut artifacts)?;
    write(&dir.join("folded.json"), serde_json::to_string(&raster_file(&cfg, &folded))?, &mut artifacts)?;
    write(&dir.join("z.json"), serde_json::to_string(&ZFile { config: cfg.clone(), z: z.clone() })?, &mut artifacts)?;
    Ok(json!({
        "command": "image-fold",
        "config": cfg,
        "rows": img.rows(),
        "cols": img.cols(),
        "channels": img.channels(),
        "nonzero_fraction": z.nonzero_fraction(),
        "artifacts": artifacts,
    }))
}

fn read_folded(path: &Path) -> Result<ImageRaster> {
    if path.extension().is_some_and(|e| e == "json") {
        let f: RasterFile = load_config(path)?;
        ImageRaster::new(f.rows, f.cols, f.p_max, f.planes)
    } else {
        decode_netpbm(&fs::read(path)?, PixelScale::Unit)
    }
}

fn cmd_image_recover(
    common: &Common,
    input: Option<PathBuf>,
    truth: Option<PathBuf>,
    toy: &str,
    eps: Option<String>,
    lambda: Option<f64>,
) -> Result<Value> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ImageRecoveryConfig {
            k_fraction: 0.2,
            k_prime_fraction: 0.05,
            anchor_fraction: 0.05,
            lambda: 0.75,
            epsilons: Vec::new(),
            seed: 1,
            method: RecoveryMethod::L1,
        },
    };
    if let Some(l) = lambda {
        cfg.lambda = l;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(e) = eps {
        cfg.epsilons = parse_list(&e)?.into_iter().map(|x| x * cfg.lambda).collect();
    } else if cfg.epsilons.is_empty() {
        cfg.epsilons = (7..=15).map(|i| 2.0 * i as f64 * cfg.lambda).collect();
    }
    let (folded, z_truth, source) = match &input {
        Some(path) => {
            let z = truth.as_deref().map(load_config::<ZFile>).transpose()?.map(|f| f.z);
            (read_folded(path)?, z, json!({ "input": path, "truth": truth }))
        }
        None => {
            let (rows, cols) = parse_size(toy)?;
            let img = toy_image(rows, cols, cfg.k_fraction, cfg.seed)?;
            let (folded, z) = fold_image(&img, cfg.lambda)?;
            (folded, Some(z), json!({ "toy": [rows, cols], "seed": cfg.seed }))
        }
    };
    let result = recover_image(&folded, z_truth.as_ref(), &cfg)?;
    let tag = json!({ "source": source, "recovery": cfg });
    let dir = out_dir(common)?;
    let mut artifacts = Vec::new();
    for rec in &result.per_epsilon {
        let name = format!("recovered_eps_{}.pgm", rec.epsilon / cfg.lambda);
        let per = json!({ "source": source, "recovery": cfg, "epsilon": rec.epsilon });
        write(&dir.join(name), tagged_netpbm(&per, &rec.image)?, &mut artifacts)?;
    }
    write(&dir.join("fused.pgm"), tagged_netpbm(&tag, &result.fused)?, &mut artifacts)?;
    write(&dir.join("fused_z.json"), serde_json::to_string(&ZFile { config: tag.clone(), z: result.fused_z.clone() })?, &mut artifacts)?;
    write(&dir.join("report.csv"), tagged_csv(&tag, &result.report_csv())?, &mut artifacts)?;
    let fused_errors = match &z_truth {
        Some(t) => Some(result.fused_z.mismatches(t)?),
        None => None,
    };
    Ok(json!({
        "command": "image-recover",
        "config": tag,
        "per_epsilon": result.per_epsilon.iter().map(|r| json!({
            "epsilon_over_lambda": r.epsilon / cfg.lambda,
            "partition_count": r.partition_count,
        })).collect::<Vec<_>>(),
        "skipped": result.skipped.iter().map(|(e, why)| json!({ "epsilon_over_lambda": e / cfg.lambda, "reason": why })).collect::<Vec<_>>(),
        "fused_mismatches": fused_errors,
        "artifacts": artifacts,
    }))
}
