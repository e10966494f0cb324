//! Command-line surface. Every subcommand resolves its configuration as
//! built-in defaults, then `--config` (a previously echoed config), then
//! explicit flags, and writes the resolved config next to its outputs.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use evident_core::datagen::{generate_scene, HardRegionShape, SceneConfig};
use evident_core::evidential::{LossConfig, ReadoutMode};
use evident_core::exec::Executor;
use evident_core::predictor::{
    mix_seed, train, Architecture, BaselineMode, DensePredictor, HeadKind, TrainConfig, TrainHistory,
};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{EvidentError, Result};
use crate::gradcheck::{check_draw, run_gradcheck, GradDraw};
use crate::manifest::{load_dataset, read_json, write_dataset, write_json, Dataset, MANIFEST_FILE};
use crate::parallel::Rayon;
use crate::pipeline::{evaluate, ringcheck, select_sigma0, Align, EvalOptions, Method, ReportJson, UncertaintySource};
use crate::report::{sidecar, write_curves};

pub const TRAIN_LOG_SCHEMA: &str = "evident-trainlog-v1";

#[derive(Parser, Debug)]
#[command(name = "evident", version, about = "Evidential uncertainty for dense pointmaps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic train/val/test splits.
    Simulate(SimulateArgs),
    /// Train an uncertainty head on a dataset split.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a sampling baseline.
    Eval(EvalArgs),
    /// Compare analytic loss gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Boundary-ring AUROC of a model's uncertainty.
    Ringcheck(RingcheckArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Echoed simulate config to start from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub n_planes: Option<usize>,
    #[arg(long)]
    pub base_sigma: Option<f64>,
    #[arg(long)]
    pub hard_sigma: Option<f64>,
    #[arg(long)]
    pub hard_fraction: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// blob, band or object-with-boundary.
    #[arg(long)]
    pub shape: Option<HardRegionShape>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub scene: SceneConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            n_train: 64,
            n_val: 8,
            n_test: 16,
            seed: 0,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Split directory (or a simulate output, whose train/ split is used).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub head: Option<HeadKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate at batch size 10 (scaled linearly with the batch size).
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub lambda_evi: Option<f64>,
    #[arg(long)]
    pub lambda_uq: Option<f64>,
    #[arg(long)]
    pub tv_weight: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path; the log and config are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub data: PathBuf,
    pub arch: Architecture,
    pub train: TrainConfig,
}

#[derive(Serialize, Deserialize)]
pub struct TrainLog {
    pub schema: String,
    #[serde(flatten)]
    pub history: TrainHistory,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub baseline: Option<BaselineMode>,
    /// MC-dropout passes.
    #[arg(long = "T", alias = "t")]
    pub t: Option<usize>,
    /// Ensemble size; must match the number of --members.
    #[arg(long = "K", alias = "k")]
    pub k: Option<usize>,
    #[arg(long, num_args = 1..)]
    pub members: Vec<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation split for choosing the baseline variance floor.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub sigma0_sq: Option<f64>,
    #[arg(long)]
    pub align: Option<Align>,
    #[arg(long)]
    pub readout: Option<ReadoutMode>,
    /// predicted, oracle (u = e) or constant.
    #[arg(long)]
    pub uncertainty_source: Option<UncertaintySource>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub report: PathBuf,
    /// Prefix for the four curve CSVs.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRunConfig {
    pub model: Option<PathBuf>,
    pub baseline: Option<BaselineMode>,
    pub t: usize,
    pub members: Vec<PathBuf>,
    pub data: PathBuf,
    pub val: Option<PathBuf>,
    pub options: EvalOptions,
    pub curves: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "niw")]
    pub head: HeadKind,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub lambda_evi: Option<f64>,
    /// Where the worst draw is written on failure.
    #[arg(long, default_value = "gradcheck_failure.json")]
    pub failure_out: PathBuf,
    /// Re-check a serialized draw instead of sampling new ones.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RingcheckArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub radius: usize,
    #[arg(long)]
    pub readout: Option<ReadoutMode>,
    #[arg(long)]
    pub report: PathBuf,
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the plain-text summary.
pub fn run<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| EvidentError::Config(e.to_string()))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<String> {
    let exec = Rayon::from_env()?;
    match cli.command {
        Command::Simulate(a) => simulate(a, &exec),
        Command::Train(a) => train_cmd(a, &exec),
        Command::Eval(a) => eval_cmd(a, &exec),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Ringcheck(a) => ringcheck_cmd(a, &exec),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| EvidentError::io(dir, e))
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => ensure_dir(d),
        None => Ok(()),
    }
}

/// A split directory, or the `sub` split of a simulate output.
fn resolve_split(dir: &Path, sub: &str) -> PathBuf {
    if !dir.join(MANIFEST_FILE).exists() && dir.join(sub).join(MANIFEST_FILE).exists() {
        dir.join(sub)
    } else {
        dir.to_path_buf()
    }
}

fn simulate<E: Executor>(a: SimulateArgs, exec: &E) -> Result<String> {
    let mut cfg: SimulateConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SimulateConfig::default(),
    };
    macro_rules! set {
        ($($flag:expr => $field:expr),* $(,)?) => { $( if let Some(v) = $flag { $field = v; } )* };
    }
    set!(a.n_train => cfg.n_train, a.n_val => cfg.n_val, a.n_test => cfg.n_test, a.seed => cfg.seed,
         a.height => cfg.scene.height, a.width => cfg.scene.width, a.n_planes => cfg.scene.n_planes,
         a.base_sigma => cfg.scene.base_sigma, a.hard_sigma => cfg.scene.hard_region_sigma,
         a.hard_fraction => cfg.scene.hard_region_fraction, a.feature_dim => cfg.scene.feature_dim,
         a.shape => cfg.scene.hard_region_shape);
    cfg.scene.seed = cfg.seed;
    cfg.scene.validate()?;

    ensure_dir(&a.out)?;
    let mut summary = String::new();
    for (code, (split, n)) in [("train", cfg.n_train), ("val", cfg.n_val), ("test", cfg.n_test)]
        .into_iter()
        .enumerate()
    {
        let samples = exec.map(n, |i| {
            let scene = SceneConfig {
                seed: mix_seed(cfg.seed, ((code as u64) << 32) | i as u64),
                ..cfg.scene.clone()
            };
            generate_scene(&scene)
        });
        let samples = samples.into_iter().collect::<std::result::Result<Vec<_>, _>>()?;
        let ids: Vec<String> = (0..n).map(|i| format!("{split}_{i:05}")).collect();
        write_dataset(&a.out.join(split), &ids, &samples)?;
        let _ = writeln!(summary, "{split:<6} {n:>6} samples");
    }
    write_json(&a.out.join("config.json"), &cfg)?;
    let _ = writeln!(summary, "wrote {}", a.out.display());
    Ok(summary)
}

fn train_cmd<E: Executor>(a: TrainArgs, exec: &E) -> Result<String> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<TrainRunConfig>(p)?,
        None => TrainRunConfig {
            data: PathBuf::new(),
            arch: Architecture::default(),
            train: TrainConfig::default(),
        },
    };
    if let Some(d) = a.data {
        cfg.data = d;
    }
    if cfg.data.as_os_str().is_empty() {
        return Err(EvidentError::Config("--data is required".into()));
    }
    macro_rules! set {
        ($($flag:expr => $field:expr),* $(,)?) => { $( if let Some(v) = $flag { $field = v; } )* };
    }
    set!(a.head => cfg.arch.head, a.dropout => cfg.arch.dropout, a.hidden_width => cfg.arch.hidden_width,
         a.hidden_layers => cfg.arch.hidden_layers, a.epochs => cfg.train.epochs, a.lr => cfg.train.base_lr,
         a.weight_decay => cfg.train.weight_decay, a.lambda_evi => cfg.train.loss.lambda_evi,
         a.lambda_uq => cfg.train.loss.lambda_uq, a.tv_weight => cfg.train.tv_weight,
         a.batch_size => cfg.train.batch_size, a.seed => cfg.train.seed);

    let data = load_dataset(&resolve_split(&cfg.data, "train"))?;
    if data.is_empty() {
        return Err(EvidentError::Config(format!(
            "{}: no training samples",
            data.dir.display()
        )));
    }
    cfg.data = data.dir.clone();
    cfg.arch.feature_dim = data.samples[0].features.channels();
    cfg.arch.validate()?;
    cfg.train.validate()?;

    let init = DensePredictor::initialized_for(cfg.arch.clone(), &data.samples, cfg.train.seed)?;
    cfg.arch = init.arch().clone();
    let (model, history) = train(&init, &data.samples, &cfg.train, exec)?;

    parent_dir(&a.out)?;
    checkpoint::save(&a.out, &model)?;
    write_json(
        &sidecar(&a.out, "train_log.json"),
        &TrainLog {
            schema: TRAIN_LOG_SCHEMA.into(),
            history: history.clone(),
        },
    )?;
    write_json(&sidecar(&a.out, "config.json"), &cfg)?;

    let mut s = String::new();
    let _ = writeln!(s, "{:>5}  {:>14}  {:>12}", "epoch", "mean_loss", "lr");
    for r in &history.epochs {
        let _ = writeln!(s, "{:>5}  {:>14.6}  {:>12.4e}", r.epoch, r.mean_loss, r.lr);
    }
    let _ = writeln!(s, "wrote {}", a.out.display());
    Ok(s)
}

fn load_members(paths: &[PathBuf]) -> Result<Vec<DensePredictor>> {
    paths.iter().map(|p| checkpoint::load(p)).collect()
}

fn build_method(cfg: &EvalRunConfig) -> Result<Method> {
    match cfg.baseline {
        None => {
            let p = cfg
                .model
                .as_ref()
                .ok_or_else(|| EvidentError::Config("either --model or --baseline is required".into()))?;
            Ok(Method::Head(checkpoint::load(p)?))
        }
        Some(BaselineMode::McDropout) => {
            let p = cfg
                .model
                .as_ref()
                .ok_or_else(|| EvidentError::Config("MC dropout needs --model".into()))?;
            Ok(Method::McDropout {
                model: checkpoint::load(p)?,
                t: cfg.t,
            })
        }
        Some(BaselineMode::Ensemble) => {
            if cfg.members.is_empty() {
                return Err(EvidentError::Config("ensemble needs --members".into()));
            }
            Ok(Method::Ensemble {
                members: load_members(&cfg.members)?,
            })
        }
        Some(BaselineMode::Hetero) => Err(EvidentError::Config(
            "the Gaussian head is evaluated with --model <checkpoint>".into(),
        )),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

fn eval_cmd<E: Executor>(a: EvalArgs, exec: &E) -> Result<String> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<EvalRunConfig>(p)?,
        None => EvalRunConfig {
            model: None,
            baseline: None,
            t: 16,
            members: vec![],
            data: PathBuf::new(),
            val: None,
            options: EvalOptions::default(),
            curves: None,
        },
    };
    if a.model.is_some() {
        cfg.model = a.model;
    }
    if a.baseline.is_some() {
        cfg.baseline = a.baseline;
    }
    if !a.members.is_empty() {
        cfg.members = a.members;
    }
    if let Some(k) = a.k {
        if k != cfg.members.len() {
            return Err(EvidentError::Config(format!(
                "--K {k} but {} --members given",
                cfg.members.len()
            )));
        }
    }
    if let Some(d) = a.data {
        cfg.data = d;
    }
    if cfg.data.as_os_str().is_empty() {
        return Err(EvidentError::Config("--data is required".into()));
    }
    if a.val.is_some() {
        cfg.val = a.val;
    }
    if a.curves.is_some() {
        cfg.curves = a.curves;
    }
    if let Some(t) = a.t {
        cfg.t = t;
    }
    let o = &mut cfg.options;
    if let Some(v) = a.align {
        o.align = v;
    }
    if a.readout.is_some() {
        o.readout = a.readout;
    }
    if let Some(v) = a.uncertainty_source {
        o.source = v;
    }
    if let Some(v) = a.seed {
        o.seed = v;
    }
    if a.sigma0_sq.is_some() {
        o.sigma0_sq = a.sigma0_sq;
    }

    let method = build_method(&cfg)?;
    let data = load_dataset(&resolve_split(&cfg.data, "test"))?;
    cfg.data = data.dir.clone();
    if method.is_sampling() && cfg.options.sigma0_sq.is_none() {
        let val_dir = cfg.val.as_ref().ok_or_else(|| {
            EvidentError::Config("sampling baselines need --sigma0-sq or a --val split to select it".into())
        })?;
        let val: Dataset = load_dataset(&resolve_split(val_dir, "val"))?;
        cfg.options.sigma0_sq = Some(select_sigma0(&method, &val, cfg.options.seed, exec)?);
    }
    let out = evaluate(&method, &data, &cfg.options, exec)?;
    cfg.options.readout = Some(out.report.meta.readout);

    parent_dir(&a.report)?;
    write_json(&a.report, &out.report)?;
    if let Some(prefix) = &cfg.curves {
        write_curves(prefix, &out.curves)?;
    }
    write_json(&sidecar(&a.report, "config.json"), &cfg)?;
    Ok(eval_summary(&out.report))
}

pub fn eval_summary(r: &ReportJson) -> String {
    let d = &r.dataset;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "method {}  readout {}  align {}  images {}",
        r.meta.method,
        r.meta.readout.as_str(),
        r.meta.align.as_str(),
        d.n_images
    );
    let _ = writeln!(s, "{:<14} {:>12}", "metric", "value");
    for (k, v) in [
        ("mae", Some(d.mae)),
        ("rmse", Some(d.rmse)),
        ("spearman_rho", d.spearman_rho),
        ("aurc", Some(d.aurc)),
        ("ause", Some(d.ause)),
        ("nll", d.nll),
    ] {
        let _ = writeln!(s, "{k:<14} {:>12}", fmt_opt(v));
    }
    if let Some(pc) = &r.pointcloud {
        for (k, v) in [("chamfer", pc.chamfer), ("f1", pc.f1)] {
            let _ = writeln!(s, "{k:<14} {v:>12.6}");
        }
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<String> {
    let mut s = String::new();
    if let Some(p) = &a.replay {
        let d: GradDraw = read_json(p)?;
        let groups = check_draw(&d)?;
        let worst = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
        for g in &groups {
            let _ = writeln!(s, "{:<10} {:.3e}", g.group, g.max_rel_err);
        }
        if worst > a.tol {
            return Err(EvidentError::Gradcheck(format!(
                "replayed draw: max relative error {worst:.3e} > {:.3e}\n{s}",
                a.tol
            )));
        }
        return Ok(s);
    }
    let loss = LossConfig {
        lambda_evi: a.lambda_evi.unwrap_or(LossConfig::default().lambda_evi),
        ..LossConfig::default()
    };
    let sum = run_gradcheck(a.head, a.trials, a.eps, a.tol, a.seed, loss)?;
    let _ = writeln!(
        s,
        "head {}  trials {}  step {:e}  tol {:e}",
        a.head.as_str(),
        sum.trials,
        sum.step,
        sum.tol
    );
    for g in &sum.groups {
        let _ = writeln!(s, "{:<10} {:.3e}", g.group, g.max_rel_err);
    }
    if let Some(d) = &sum.worst_draw {
        parent_dir(&a.failure_out)?;
        write_json(&a.failure_out, d)?;
        return Err(EvidentError::Gradcheck(format!(
            "max relative error {:.3e} > {:.3e}; worst draw written to {}\n{s}",
            sum.worst_rel_err,
            a.tol,
            a.failure_out.display()
        )));
    }
    let _ = writeln!(s, "passed");
    Ok(s)
}

fn ringcheck_cmd<E: Executor>(a: RingcheckArgs, exec: &E) -> Result<String> {
    if a.radius == 0 {
        return Err(EvidentError::Config("--radius must be >= 1".into()));
    }
    let method = Method::Head(checkpoint::load(&a.model)?);
    let data = load_dataset(&resolve_split(&a.data, "test"))?;
    let r = ringcheck(&method, &data, a.radius, a.readout, &EvalOptions::default(), exec)?;
    parent_dir(&a.report)?;
    write_json(&a.report, &r)?;
    #[derive(Serialize)]
    struct Echo<'a> {
        data: &'a Path,
        model: &'a Path,
        radius: usize,
        readout: ReadoutMode,
    }
    write_json(
        &sidecar(&a.report, "config.json"),
        &Echo {
            data: &data.dir,
            model: &a.model,
            radius: a.radius,
            readout: r.readout,
        },
    )?;
    Ok(format!(
        "ring radius {}  readout {}\nauroc {:.6}  fpr@95tpr {:.6}  scored {}  skipped {}\n",
        a.radius,
        r.readout.as_str(),
        r.ring.auroc,
        r.ring.fpr_at_95tpr,
        r.ring.n_scored,
        r.ring.n_skipped
    ))
}
