//! `gasg` command-line harness: synthetic data, recovery, clustering and
//! evaluation.
//!
//! Exit codes: 0 success, 1 usage, 2 data or I/O, 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::RngCore;
use serde_json::json;

use crate::error::{Error, Result};
use crate::gasg21::{self, RecoveryConfig, Sampling, StepConfig, StepRule};
use crate::grassmann::{ObservedVector, Subspace};
use crate::io;
use crate::ksubspaces::{self, ClusterConfig};
use crate::metrics;
use crate::rng;
use crate::stepsize::StepParams;
use crate::synth::{self, SyntheticSpec, UnionSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gasg", version, about = "Robust subspace recovery and K-subspaces clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic problem with ground truth.
    Synth(SynthArgs),
    /// Recover one subspace from (incomplete, corrupted) columns.
    Recover(RecoverArgs),
    /// Recover a union of subspaces and cluster the columns.
    Cluster(ClusterArgs),
    /// Score saved bases and labels against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    LowRank,
    Union,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Adaptive,
    Diminishing,
    Constant,
    Grouse,
}

impl From<RuleArg> for StepRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Adaptive => StepRule::Adaptive,
            RuleArg::Diminishing => StepRule::Diminishing,
            RuleArg::Constant => StepRule::Constant,
            RuleArg::Grouse => StepRule::Grouse,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SamplingArg {
    Uniform,
    Cyclic,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "low-rank")]
    pub mode: Mode,
    /// Ambient dimension.
    #[arg(long)]
    pub n: usize,
    /// Number of columns (low-rank mode).
    #[arg(long)]
    pub m: Option<usize>,
    /// Rank of each subspace.
    #[arg(long, short = 'd')]
    pub d: usize,
    /// Number of subspaces (union mode).
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Inliers per subspace (union mode).
    #[arg(long)]
    pub per: Option<usize>,
    /// Fraction of columns that are outliers.
    #[arg(long, default_value_t = 0.0)]
    pub outliers: f64,
    /// Fraction of entries observed per column.
    #[arg(long, default_value_t = 1.0)]
    pub observe: f64,
    #[arg(long, default_value_t = 1.0)]
    pub smin: f64,
    #[arg(long, default_value_t = 1.0)]
    pub smax: f64,
    /// Standard deviation of outlier entries.
    #[arg(long, default_value_t = 1.0)]
    pub outlier_sigma: f64,
    /// Standard deviation of dense noise added to inliers (low-rank mode).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Dense matrix output.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Observed-entry triplets output.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Ground-truth basis output (bases side by side in union mode).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Per-column labels output, -1 for outliers.
    #[arg(long)]
    pub truth_labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StepArgs {
    #[arg(long, value_enum, default_value = "adaptive")]
    pub step_rule: RuleArg,
    #[arg(long, default_value_t = 1.0)]
    pub eta0: f64,
    #[arg(long, default_value_t = 15.0)]
    pub mu_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu_min: f64,
    #[arg(long, default_value_t = 0.5)]
    pub fmax: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub fmin: f64,
    #[arg(long, default_value_t = 0.1)]
    pub omega: f64,
    /// Scale `C` of the diminishing rule `C / (1 + j)`.
    #[arg(long, default_value_t = 1.0)]
    pub dim_scale: f64,
    /// Step of the constant and grouse rules.
    #[arg(long, default_value_t = 0.1)]
    pub const_eta: f64,
}

impl StepArgs {
    pub fn config(&self) -> StepConfig {
        StepConfig {
            rule: self.step_rule.into(),
            params: StepParams {
                f_max: self.fmax,
                f_min: self.fmin,
                omega: self.omega,
                mu_min: self.mu_min,
                mu_max: self.mu_max,
                eta0: self.eta0,
            },
            diminishing_scale: self.dim_scale,
            constant_eta: self.const_eta,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dense matrix, one comma-separated row per line.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Observed entries as `col row value` lines; takes precedence over --data.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Ground-truth basis (bases side by side for several subspaces).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Ground-truth labels, one per line, -1 for outliers.
    #[arg(long)]
    pub truth_labels: Option<PathBuf>,
    /// Ambient dimension when it cannot be read off the data or truth.
    #[arg(long)]
    pub ambient_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Iteration budget; overrides --passes.
    #[arg(long)]
    pub iters: Option<u64>,
    /// Budget in passes over the columns.
    #[arg(long)]
    pub passes: Option<u64>,
    /// Stop once the angle to the truth reaches this value.
    #[arg(long)]
    pub angle_tol: Option<f64>,
    #[arg(long = "rank", short = 'd')]
    pub rank: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub sampling: SamplingArg,
    /// Independent runs with derived seeds.
    #[arg(long, default_value_t = 1)]
    pub repeats: u32,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub step: StepArgs,
    #[arg(long, default_value = "basis.csv")]
    pub basis_out: PathBuf,
    #[arg(long, default_value = "trace.csv")]
    pub trace_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub step: StepArgs,
    #[arg(long)]
    pub k: usize,
    /// Candidate count as a multiple of K.
    #[arg(long, default_value_t = 10)]
    pub q_factor: usize,
    /// Neighbors fit with each seed (default rank + 3).
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// Refinement iterations (default 20 passes); overrides --iters and --passes.
    #[arg(long)]
    pub max_iter: Option<u64>,
    #[arg(long, default_value = "basis.csv")]
    pub basis_out: PathBuf,
    #[arg(long, default_value = "trace.csv")]
    pub trace_out: PathBuf,
    #[arg(long, default_value = "labels.txt")]
    pub labels_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth basis file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Recovered basis files (repeatable, or one file with bases side by side).
    #[arg(long)]
    pub basis: Vec<PathBuf>,
    /// Rank of each basis when files hold several side by side.
    #[arg(long = "rank", short = 'd')]
    pub rank: Option<usize>,
    #[arg(long)]
    pub truth_labels: Option<PathBuf>,
    /// Predicted labels, -1 for unassigned.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Dense data for the relative projection residual.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Print one JSON object instead of text lines.
    #[arg(long)]
    pub json: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Recover(a) => cmd_recover(&a),
        Command::Cluster(a) => cmd_cluster(&a),
        Command::Eval(a) => cmd_eval(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_) | Error::InvalidSpec(_) => EXIT_USAGE,
        Error::Io(_)
        | Error::Parse { .. }
        | Error::ShapeMismatch(_)
        | Error::InvalidShape(_)
        | Error::InvalidObservation(_)
        | Error::IndexOutOfRange { .. }
        | Error::TooFewColumns { .. }
        | Error::EmptyInliers => EXIT_DATA,
        Error::ZeroVector
        | Error::Underdetermined { .. }
        | Error::RankDeficient(_)
        | Error::DegenerateGradient
        | Error::AllColumnsUnusable
        | Error::ZeroDenominator => EXIT_NUMERICAL,
    }
}

fn out_path(explicit: &Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| dir.join(name))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let problem = match a.mode {
        Mode::LowRank => {
            let m = a.m.ok_or_else(|| Error::InvalidParams("--m is required in low-rank mode".into()))?;
            let mut spec = SyntheticSpec::new(a.n, m, a.d);
            spec.s_min = a.smin;
            spec.s_max = a.smax;
            spec.outlier_fraction = a.outliers;
            spec.observe_fraction = a.observe;
            spec.outlier_sigma = a.outlier_sigma;
            spec.inlier_noise_sigma = a.noise;
            spec.seed = a.seed;
            synth::gen_low_rank(&spec)?
        }
        Mode::Union => {
            let per = a.per.ok_or_else(|| Error::InvalidParams("--per is required in union mode".into()))?;
            let mut spec = UnionSpec::new(a.k, a.d, a.n, per);
            spec.outlier_fraction = a.outliers;
            spec.observe_fraction = a.observe;
            spec.outlier_sigma = a.outlier_sigma;
            spec.seed = a.seed;
            synth::gen_union(&spec)?
        }
    };
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io(format!("{}: {e}", a.out_dir.display())))?;
    let data = out_path(&a.data, &a.out_dir, "data.csv");
    let mask = out_path(&a.mask, &a.out_dir, "observations.txt");
    let truth = out_path(&a.truth, &a.out_dir, "truth.csv");
    let labels = out_path(&a.truth_labels, &a.out_dir, "labels.txt");
    io::write_string(&data, &io::format_dense(&problem.dense))?;
    io::write_string(&mask, &io::format_observations(&problem.columns))?;
    io::write_string(&truth, &io::format_dense(&io::concat_bases(&problem.truth.subspaces)?))?;
    io::write_string(&labels, &io::format_labels(&problem.truth.labels))?;
    println!(
        "columns={} rows={} outliers={} observed_entries={}",
        problem.columns.len(),
        problem.ambient_dim(),
        problem.truth.outlier_count(),
        problem.columns.iter().map(ObservedVector::len).sum::<usize>()
    );
    Ok(())
}

/// Columns, ambient dimension and optional ground truth read from disk.
pub struct LoadedInput {
    pub columns: Vec<ObservedVector>,
    pub ambient_dim: usize,
    pub dense: Option<DMatrix<f64>>,
    pub truth: Option<Vec<Subspace>>,
    pub truth_labels: Option<Vec<Option<usize>>>,
}

pub fn load_input(a: &InputArgs, rank: Option<usize>) -> Result<LoadedInput> {
    let dense = a.data.as_deref().map(|p| io::parse_matrix(&io::read_to_string(p)?)).transpose()?;
    let truth = a.truth.as_deref().map(|p| io::parse_bases(&io::read_to_string(p)?, rank)).transpose()?;
    let truth_labels = a.truth_labels.as_deref().map(|p| io::parse_labels(&io::read_to_string(p)?)).transpose()?;
    let (mut columns, min_rows) = match (&a.mask, &dense) {
        (Some(p), _) => {
            let obs = io::parse_observations(&io::read_to_string(p)?)?;
            (obs.columns, obs.min_rows)
        }
        (None, Some(x)) => (io::dense_to_columns(x), x.nrows()),
        (None, None) => return Err(Error::InvalidParams("one of --data or --mask is required".into())),
    };
    let ambient_dim = a
        .ambient_dim
        .or(dense.as_ref().map(|x| x.nrows()))
        .or(truth.as_ref().and_then(|t| t.first()).map(Subspace::ambient_dim))
        .unwrap_or(min_rows);
    if min_rows > ambient_dim {
        return Err(Error::IndexOutOfRange { index: min_rows - 1, dim: ambient_dim });
    }
    if let Some(x) = &dense {
        if x.nrows() != ambient_dim {
            return Err(Error::ShapeMismatch(format!("data has {} rows, expected {ambient_dim}", x.nrows())));
        }
        while columns.len() < x.ncols() {
            columns.push(ObservedVector::new(columns.len(), vec![], vec![])?);
        }
    }
    if let Some(t) = &truth {
        if t.iter().any(|s| s.ambient_dim() != ambient_dim) {
            return Err(Error::ShapeMismatch(format!("truth basis does not have {ambient_dim} rows")));
        }
    }
    if let Some(l) = &truth_labels {
        if l.len() != columns.len() {
            return Err(Error::ShapeMismatch(format!("{} truth labels for {} columns", l.len(), columns.len())));
        }
    }
    Ok(LoadedInput { columns, ambient_dim, dense, truth, truth_labels })
}

/// Seed of repeat `r`; repeat 0 uses the seed itself.
pub fn repeat_seed(seed: u64, r: u32) -> u64 {
    if r == 0 {
        seed
    } else {
        rng::derived(seed, u64::from(r)).next_u64()
    }
}

/// `dir/stem{suffix}.ext` for `path = dir/stem.ext`.
pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    if suffix.is_empty() {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn repeat_suffix(repeats: u32, r: u32) -> String {
    if repeats > 1 {
        format!("_r{r}")
    } else {
        String::new()
    }
}

fn budget(run: &RunArgs, m: usize, default_passes: u64) -> u64 {
    run.iters.unwrap_or_else(|| run.passes.unwrap_or(default_passes) * m as u64)
}

pub fn cmd_recover(a: &RecoverArgs) -> Result<()> {
    let input = load_input(&a.input, Some(a.run.rank))?;
    let truth = match input.truth.as_deref() {
        None => None,
        Some([t]) => Some(t.clone()),
        Some(ts) => return Err(Error::ShapeMismatch(format!("recover needs one truth basis, got {}", ts.len()))),
    };
    let mut cfg = RecoveryConfig::new(a.run.rank);
    cfg.step = a.step.config();
    cfg.max_iterations = budget(&a.run, input.columns.len(), 10);
    cfg.truth = truth;
    cfg.angle_tolerance = a.run.angle_tol;
    cfg.sampling = match a.run.sampling {
        SamplingArg::Uniform => Sampling::Uniform,
        SamplingArg::Cyclic => Sampling::CyclicShuffled,
    };
    for r in 0..a.run.repeats.max(1) {
        cfg.seed = repeat_seed(a.run.seed, r);
        let t0 = Instant::now();
        let (u, trace) = gasg21::run(&input.columns, input.ambient_dim, &cfg)?;
        let secs = t0.elapsed().as_secs_f64();
        let suffix = repeat_suffix(a.run.repeats, r);
        io::write_string(&suffixed(&a.basis_out, &suffix), &io::format_basis(&u))?;
        io::write_string(&suffixed(&a.trace_out, &suffix), &trace.to_csv())?;
        let mut line = String::new();
        if a.run.repeats > 1 {
            line.push_str(&format!("repeat={r} seed={} ", cfg.seed));
        }
        line.push_str(&format!("iterations={}", trace.len()));
        if let Some(angle) = trace.last_angle() {
            line.push_str(&format!(" final_angle={angle:.6e}"));
        }
        line.push_str(&format!(" wall_time_s={secs:.3}"));
        println!("{line}");
    }
    Ok(())
}

fn segmentation_line(truth: &[Option<usize>], predicted: &[Option<usize>]) -> Result<String> {
    let mask: Vec<bool> = truth.iter().map(Option::is_none).collect();
    let labels: Vec<usize> = truth.iter().map(|l| l.unwrap_or(0)).collect();
    let err = metrics::segmentation_error(&labels, predicted, &mask)?;
    Ok(format!("segmentation_error={err:.4}%"))
}

pub fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let input = load_input(&a.input, Some(a.run.rank))?;
    let m = input.columns.len() as u64;
    let mut cfg = ClusterConfig::new(a.k, a.run.rank, a.k * a.q_factor, 0);
    cfg.neighborhood_size = a.neighbors;
    cfg.max_iter = a.max_iter.unwrap_or_else(|| a.run.iters.unwrap_or(a.run.passes.unwrap_or(20) * m));
    cfg.step = a.step.config();
    if a.run.angle_tol.is_some() {
        return Err(Error::InvalidParams("--angle-tol is only supported by recover".into()));
    }
    for r in 0..a.run.repeats.max(1) {
        cfg.seed = repeat_seed(a.run.seed, r);
        let model = ksubspaces::cluster(&input.columns, input.ambient_dim, &cfg)?;
        let suffix = repeat_suffix(a.run.repeats, r);
        for (i, (s, t)) in model.subspaces.iter().zip(&model.traces).enumerate() {
            let idx = if a.k > 1 { format!("_{i}") } else { String::new() };
            io::write_string(&suffixed(&a.basis_out, &format!("{idx}{suffix}")), &io::format_basis(s))?;
            io::write_string(&suffixed(&a.trace_out, &format!("{idx}{suffix}")), &t.to_csv())?;
        }
        io::write_string(&suffixed(&a.labels_out, &suffix), &io::format_labels(&model.assignments))?;
        if a.run.repeats > 1 {
            println!("repeat={r} seed={}", cfg.seed);
        }
        let t = &model.timings;
        println!(
            "stage_seconds seeding={:.3} selection={:.3} refinement={:.3}",
            t.seeding.as_secs_f64(),
            t.selection.as_secs_f64(),
            t.refinement.as_secs_f64()
        );
        if let Some(truth) = &input.truth {
            println!("{}", metrics::match_and_angles(truth, &model.subspaces)?.summary_line());
        }
        if let Some(labels) = &input.truth_labels {
            println!("{}", segmentation_line(labels, &model.assignments)?);
        }
    }
    Ok(())
}

/// Relative projection residual of `x` against the nearest of `bases`,
/// restricted to inlier columns when labels are known.
fn eval_residual(x: &DMatrix<f64>, bases: &[Subspace], truth_labels: Option<&[Option<usize>]>) -> Result<f64> {
    let keep: Vec<usize> = match truth_labels {
        Some(l) if l.len() != x.ncols() => {
            return Err(Error::ShapeMismatch(format!("{} labels for {} columns", l.len(), x.ncols())))
        }
        Some(l) => (0..x.ncols()).filter(|&j| l[j].is_some()).collect(),
        None => (0..x.ncols()).collect(),
    };
    let sub = x.select_columns(&keep);
    let mut approx = DMatrix::zeros(sub.nrows(), sub.ncols());
    for j in 0..sub.ncols() {
        let col = sub.column(j).into_owned();
        let mut best: Option<(f64, nalgebra::DVector<f64>)> = None;
        for b in bases {
            let p = metrics::project_columns(b, &DMatrix::from_column_slice(col.len(), 1, col.as_slice()))?;
            let r = (&col - p.column(0)).norm();
            if best.as_ref().is_none_or(|(br, _)| r < *br) {
                best = Some((r, p.column(0).into_owned()));
            }
        }
        if let Some((_, p)) = best {
            approx.set_column(j, &p);
        }
    }
    metrics::relative_residual(&sub, &approx)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let mut recovered = Vec::new();
    for p in &a.basis {
        recovered.extend(io::parse_bases(&io::read_to_string(p)?, a.rank)?);
    }
    let truth = a.truth.as_deref().map(|p| io::parse_bases(&io::read_to_string(p)?, a.rank)).transpose()?;
    let truth_labels = a.truth_labels.as_deref().map(|p| io::parse_labels(&io::read_to_string(p)?)).transpose()?;
    let labels = a.labels.as_deref().map(|p| io::parse_labels(&io::read_to_string(p)?)).transpose()?;
    let mut report = serde_json::Map::new();
    let mut lines = Vec::new();
    if let Some(t) = &truth {
        if recovered.is_empty() {
            return Err(Error::InvalidParams("--truth needs at least one --basis".into()));
        }
        let r = metrics::match_and_angles(t, &recovered)?;
        lines.push(r.summary_line());
        report.insert(
            "angles".into(),
            json!({ "worst": r.worst, "median": r.median, "mean": r.mean, "per_subspace": r.angles, "matching": r.matching }),
        );
    }
    if let (Some(t), Some(p)) = (&truth_labels, &labels) {
        if t.len() != p.len() {
            return Err(Error::ShapeMismatch(format!("{} truth labels vs {} labels", t.len(), p.len())));
        }
        let line = segmentation_line(t, p)?;
        let mask: Vec<bool> = t.iter().map(Option::is_none).collect();
        let tl: Vec<usize> = t.iter().map(|l| l.unwrap_or(0)).collect();
        report.insert("segmentation_error_percent".into(), json!(metrics::segmentation_error(&tl, p, &mask)?));
        lines.push(line);
    }
    if let Some(p) = &a.data {
        if recovered.is_empty() {
            return Err(Error::InvalidParams("--data needs at least one --basis".into()));
        }
        let x = io::parse_matrix(&io::read_to_string(p)?)?;
        let res = eval_residual(&x, &recovered, truth_labels.as_deref())?;
        lines.push(format!("relative_residual={res:.6e}"));
        report.insert("relative_residual".into(), json!(res));
    }
    if lines.is_empty() {
        return Err(Error::InvalidParams("nothing to evaluate: give --truth, --labels or --data".into()));
    }
    if a.json {
        println!("{}", serde_json::Value::Object(report));
    } else {
        for l in lines {
            println!("{l}");
        }
    }
    Ok(())
}
