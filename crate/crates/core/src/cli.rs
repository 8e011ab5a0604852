//! Command-line front end: `gen`, `train`, `ablate`, `solverbench`, `gradcheck`.
//!
//! Values are resolved as flag, then config file, then `BOOMDA_SEED` (seed
//! only), then the built-in default. Exit codes: 0 success, 1 runtime
//! failure, 2 usage or configuration error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::balance::{
    assemble_gram, closed_form, solve_qp_exact_small, solve_qp_frankwolfe, GradientBlocks, SolverMode, DIAG_FLOOR,
    EXACT_MAX_DIM,
};
use crate::gradcheck::{self, GradcheckSettings};
use crate::numerics::{quad_form, seeded_rng, Matrix};
use crate::synthdata::{self, DatasetSpec};
use crate::trainer::{self, TrainConfig};

pub const SEED_ENV: &str = "BOOMDA_SEED";
pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Debug, Parser)]
#[command(name = "boomda", version, about = "Balanced multimodal domain adaptation on synthetic data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Train on a generated dataset and write report.csv and summary.json.
    Train(TrainArgs),
    /// Run the five-row ablation over several seeds.
    Ablate(AblateArgs),
    /// Time the γ solvers on random Gram matrices.
    Solverbench(BenchArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Config file; only its [data] section is used.
    #[arg(long, conflicts_with = "imbalanced")]
    pub spec: Option<PathBuf>,
    /// Use the built-in benchmark with one heavily shifted modality.
    #[arg(long)]
    pub imbalanced: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Sets the iteration count to ⌈N_source / batch⌉ × epochs.
    #[arg(long, conflicts_with = "iterations")]
    pub epochs: Option<usize>,
    /// Write 0 in every wall_ns cell.
    #[arg(long)]
    pub no_timing: bool,
    /// Do not read target-train labels for pseudo-label accuracy.
    #[arg(long)]
    pub no_pl_diagnostics: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Config file; only its [train] section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub solver: Option<SolverMode>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing ablation table.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated Gram matrix dimensions (M+1).
    #[arg(long, value_delimiter = ',', default_values_t = vec![3usize, 4, 5, 6])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Calls per timing measurement.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 50)]
    pub fw_max_iter: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub draws: usize,
    /// Also write the results as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// The parsed contents of a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub data: DatasetSpec,
    pub train: TrainConfig,
}

/// A failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Config file values plus which seeds it set explicitly.
struct LoadedConfig {
    file: RunConfigFile,
    data_seed_set: bool,
    train_seed_set: bool,
}

fn load_config(path: Option<&Path>) -> CliResult<LoadedConfig> {
    let Some(path) = path else {
        return Ok(LoadedConfig {
            file: RunConfigFile::default(),
            data_seed_set: false,
            train_seed_set: false,
        });
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::usage)?;
    parse_config(&text).map_err(|e| Failure::usage(e.context(format!("config {}", path.display()))))
}

fn parse_config(text: &str) -> anyhow::Result<LoadedConfig> {
    let table: toml::Table = toml::from_str(text)?;
    let has_seed = |section: &str| {
        table
            .get(section)
            .and_then(toml::Value::as_table)
            .is_some_and(|t| t.contains_key("seed"))
    };
    let (data_seed_set, train_seed_set) = (has_seed("data"), has_seed("train"));
    let file: RunConfigFile = toml::from_str(text)?;
    Ok(LoadedConfig {
        file,
        data_seed_set,
        train_seed_set,
    })
}

/// Parses a config file's text; errors name the offending key.
pub fn parse_config_text(text: &str) -> anyhow::Result<RunConfigFile> {
    Ok(parse_config(text)?.file)
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| Failure::usage(anyhow!("{SEED_ENV}={v:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, file: u64, file_set: bool) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if file_set {
        return Ok(file);
    }
    Ok(env_seed()?.unwrap_or(file))
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let loaded = load_config(args.spec.as_deref())?;
    let mut spec = if args.imbalanced {
        DatasetSpec::imbalanced_benchmark(0)
    } else {
        loaded.file.data
    };
    spec.seed = resolve_seed(args.seed, spec.seed, loaded.data_seed_set)?;
    spec.validate().map_err(Failure::usage)?;
    let ds = synthdata::generate(&spec).map_err(Failure::usage)?;
    synthdata::save(&ds, &args.out)
        .with_context(|| format!("writing dataset to {}", args.out.display()))
        .map_err(Failure::runtime)?;
    println!("wrote dataset (seed {}) to {}", spec.seed, args.out.display());
    Ok(())
}

fn load_dataset(dir: &Path) -> CliResult<synthdata::MultimodalDataset> {
    if !dir.is_dir() {
        return Err(Failure::usage(anyhow!("data directory {} does not exist", dir.display())));
    }
    synthdata::load(dir)
        .with_context(|| format!("loading dataset from {}", dir.display()))
        .map_err(Failure::usage)
}

fn train_config(
    path: Option<&Path>,
    solver: Option<SolverMode>,
    o: &TrainOverrides,
    ds: &synthdata::MultimodalDataset,
) -> CliResult<TrainConfig> {
    let loaded = load_config(path)?;
    let mut c = loaded.file.train;
    c.seed = resolve_seed(o.seed, c.seed, loaded.train_seed_set)?;
    if let Some(s) = solver {
        c.solver = s;
    }
    if let Some(k) = o.iterations {
        c.iterations = k;
    }
    if let Some(e) = o.epochs {
        c.iterations = ds.spec.n_source.div_ceil(c.batch_size.max(1)) * e;
    }
    if o.no_timing {
        c.record_timing = false;
    }
    if o.no_pl_diagnostics {
        c.pl_diagnostics = false;
    }
    c.check_dataset(ds).map_err(Failure::usage)?;
    Ok(c)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::runtime)
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let ds = load_dataset(&args.data)?;
    let config = train_config(args.config.as_deref(), args.solver, &args.overrides, &ds)?;
    let (_, report) = trainer::train(&ds, &config).map_err(Failure::runtime)?;
    create_dir(&args.out)?;
    trainer::write_report_csv(&report, &args.out.join("report.csv")).map_err(Failure::runtime)?;
    trainer::write_summary_json(&report, &args.out.join("summary.json")).map_err(Failure::runtime)?;
    let m = &report.final_metrics;
    println!(
        "solver={} iterations={} source_f1={:.4} target_f1={:.4}",
        config.solver,
        report.rows.len(),
        m.source_test.weighted_f1,
        m.target_test.weighted_f1
    );
    Ok(())
}

pub fn cmd_ablate(args: &AblateArgs) -> CliResult<()> {
    let table = args.out.join(ABLATION_FILE);
    if table.exists() && !args.force {
        return Err(Failure::usage(anyhow!(
            "{} already exists; pass --force to overwrite",
            table.display()
        )));
    }
    let ds = load_dataset(&args.data)?;
    let base = train_config(args.config.as_deref(), None, &args.overrides, &ds)?;
    let rows = trainer::ablation_suite(&ds, &base, &args.seeds).map_err(Failure::runtime)?;
    create_dir(&args.out)?;
    trainer::write_ablation_csv(&rows, &table).map_err(Failure::runtime)?;
    for r in &rows {
        println!("{:<18} {:.4} ± {:.4}", r.variant.name(), r.mean, r.std);
    }
    Ok(())
}

/// One solver call in the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: SolverMode,
    pub dim: usize,
    pub trial: usize,
    pub iters: usize,
    pub objective: f64,
    /// `|objective − exact objective|`; NaN when the exact oracle is out of range.
    pub objective_gap: f64,
    /// Mean wall time of one call.
    pub wall_ns: f64,
}

/// Random arrow-pattern Gram matrix of size `dim` built from gradient blocks
/// of heterogeneous scale.
pub fn bench_gram(dim: usize, rng: &mut impl Rng) -> Matrix {
    let len = 24;
    let modalities = dim - 1;
    let mut g = Vec::with_capacity(modalities);
    let mut g_mm = Vec::with_capacity(modalities);
    for _ in 0..modalities {
        let scale = rng.random_range(-2.0f64..2.0).exp();
        let own = Matrix::random_normal(1, len, rng).map(|v| v * scale).into_vec();
        let noise = Matrix::random_normal(1, len, rng).into_vec();
        g_mm.push(own.iter().zip(&noise).map(|(a, b)| 0.3 * a + 0.5 * b).collect());
        g.push(own);
    }
    let blocks = GradientBlocks::new(g, g_mm).expect("consistent blocks");
    assemble_gram(&blocks).expect("valid blocks").q
}

fn time_per_call<T>(reps: usize, mut f: impl FnMut() -> T) -> (T, f64) {
    let start = Instant::now();
    let mut out = f();
    for _ in 1..reps {
        out = std::hint::black_box(f());
    }
    (out, start.elapsed().as_nanos() as f64 / reps as f64)
}

/// Times closed form, Frank–Wolfe and (for `dim ≤ 5`) the exact oracle.
pub fn solverbench(dims: &[usize], trials: usize, seed: u64, reps: usize, fw_max_iter: usize) -> crate::Result<Vec<BenchRow>> {
    if let Some(&d) = dims.iter().find(|&&d| d < 2) {
        return Err(crate::Error::Validation(format!("dimension {d} is below 2")));
    }
    if reps == 0 || fw_max_iter == 0 {
        return Err(crate::Error::Validation("reps and fw_max_iter must be ≥ 1".into()));
    }
    let mut rows = Vec::new();
    for &dim in dims {
        let mut rng = seeded_rng(seed, 0x5B00 + dim as u64);
        for trial in 0..trials {
            let q = bench_gram(dim, &mut rng);
            let exact = if dim <= EXACT_MAX_DIM {
                let (sol, ns) = time_per_call(reps, || solve_qp_exact_small(&q));
                Some((sol?, ns))
            } else {
                None
            };
            let reference = exact.as_ref().map(|(s, _)| s.objective);
            let gap = |obj: f64| reference.map_or(f64::NAN, |r| (obj - r).abs());

            let diag = q.diag();
            let (w, ns) = time_per_call(reps, || closed_form(&diag, DIAG_FLOOR));
            let obj = quad_form(&q, &w.gamma);
            rows.push(BenchRow {
                method: SolverMode::ClosedForm,
                dim,
                trial,
                iters: 1,
                objective: obj,
                objective_gap: gap(obj),
                wall_ns: ns,
            });

            let (fw, ns) = time_per_call(reps, || solve_qp_frankwolfe(&q, fw_max_iter, 1e-8));
            let fw = fw?;
            rows.push(BenchRow {
                method: SolverMode::FrankWolfe,
                dim,
                trial,
                iters: fw.iterations,
                objective: fw.objective,
                objective_gap: gap(fw.objective),
                wall_ns: ns,
            });

            if let Some((sol, ns)) = exact {
                rows.push(BenchRow {
                    method: SolverMode::ExactOracle,
                    dim,
                    trial,
                    iters: sol.iterations,
                    objective: sol.objective,
                    objective_gap: 0.0,
                    wall_ns: ns,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> anyhow::Result<()> {
    let mut out = String::from("method,dim,trial,iters,objective,objective_gap,wall_ns\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method, r.dim, r.trial, r.iters, r.objective, r.objective_gap, r.wall_ns
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Median of the values; NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median per-call wall time of `method` at `dim`.
pub fn median_wall_ns(rows: &[BenchRow], method: SolverMode, dim: usize) -> f64 {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.dim == dim)
        .map(|r| r.wall_ns)
        .collect();
    median(&v)
}

pub fn cmd_solverbench(args: &BenchArgs) -> CliResult<()> {
    let seed = resolve_seed(args.seed, 0, false)?;
    let rows = solverbench(&args.dims, args.trials, seed, args.reps, args.fw_max_iter).map_err(Failure::usage)?;
    write_bench_csv(&rows, &args.out).map_err(Failure::runtime)?;
    for &dim in &args.dims {
        let line: Vec<String> = [SolverMode::ClosedForm, SolverMode::FrankWolfe, SolverMode::ExactOracle]
            .into_iter()
            .filter(|&m| m != SolverMode::ExactOracle || dim <= EXACT_MAX_DIM)
            .map(|m| format!("{m}={:.0}ns", median_wall_ns(&rows, m, dim)))
            .collect();
        println!("dim={dim} median {}", line.join(" "));
    }
    Ok(())
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult<()> {
    let settings = GradcheckSettings {
        seed: resolve_seed(args.seed, 0, false)?,
        draws: args.draws,
        inject_fault: args.inject_fault,
        ..GradcheckSettings::default()
    };
    let checks = gradcheck::run(&settings).map_err(Failure::runtime)?;
    let mut csv = String::from("loss,max_rel_err,max_abs_err,status\n");
    for c in &checks {
        let status = if c.passed { "pass" } else { "fail" };
        println!("{:<6} max_rel_err={:.3e} max_abs_err={:.3e} {status}", c.loss, c.max_rel_err, c.max_abs_err);
        csv.push_str(&format!("{},{},{},{status}\n", c.loss, c.max_rel_err, c.max_abs_err));
    }
    if let Some(path) = &args.out {
        fs::write(path, csv)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::runtime)?;
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.loss.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::runtime(anyhow!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Solverbench(a) => cmd_solverbench(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}
