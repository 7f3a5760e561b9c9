//! The `ttnc` command line: simulate → annotate → baseline/train →
//! predict/eval, plus the window sweep and the gradient check.
//!
//! Exit status is 0 on success, 1 for invalid arguments and 2 when the
//! work itself fails. Logs go to stderr; results only to files under
//! `--out`.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::annotate::{split_scenes, Dataset, Manifest, Split, MAX_WINDOW};
use crate::eval::{
    classification_metrics, compare_on_dataset, emit_report, interval_report, sweep_temporal_windows, Cell,
    ConfusionMatrix, ExperimentOptions, Method, Report, ReportFormat,
};
use crate::neural::{
    examples_for, grad_check, load_checkpoint, predict_samples, save_checkpoint, train, HeadKind, Hyperparams, Network,
    NetworkConfig, Output,
};
use crate::scenesim::{batch_configs, read_scene, simulate_batch, write_scene, MotionModel, SceneLog, SimConfig};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ttnc", version, about = "Time-to-near-collision forecasting pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output directory
    #[arg(long, global = true, default_value = "./out")]
    pub out: PathBuf,
    /// Report file format
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
    /// Worker threads
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Only log warnings and errors
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Number of scenes
    #[arg(long, default_value_t = 50)]
    pub scenes: usize,
    /// Pedestrians per scene
    #[arg(long, default_value_t = 3)]
    pub pedestrians: usize,
    /// Square image side in pixels
    #[arg(long, default_value_t = 64)]
    pub image_size: u32,
    /// Scene length in seconds
    #[arg(long, default_value_t = 12.0)]
    pub duration: f64,
    /// Platform speed in m/s
    #[arg(long, default_value_t = 1.0)]
    pub platform_speed: f64,
    #[arg(long, value_enum, default_value_t = MotionModel::ConstantVelocity)]
    pub motion: MotionModel,
}

impl SceneArgs {
    fn base(&self, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            n_pedestrians: self.pedestrians,
            duration_s: self.duration,
            platform_speed: self.platform_speed,
            image_size: [self.image_size, self.image_size],
            motion_model: self.motion,
            ..SimConfig::default()
        }
    }

    fn validate(&self, seed: u64) -> Result<()> {
        if self.scenes == 0 {
            return Err(Error::Config("--scenes must be at least 1".into()));
        }
        self.base(seed).validate()
    }
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    /// Near-collision radius in meters
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Forecast horizon in seconds
    #[arg(long, default_value_t = 6.0)]
    pub horizon: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 24)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ManifestArg {
    /// Dataset manifest written by `annotate` [default: <out>/manifest.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes into <out>/scene_<id>/
    Simulate {
        #[command(flatten)]
        scenes: SceneArgs,
    },
    /// Label scenes, split them and write <out>/manifest.json
    Annotate {
        /// Directory holding scene_* directories [default: <out>]
        #[arg(long)]
        data: Option<PathBuf>,
        /// Window length N
        #[arg(long, default_value_t = 6)]
        frames: usize,
        #[command(flatten)]
        labels: LabelArgs,
        /// Fraction of scenes held out for testing
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        /// Keep every k-th training window
        #[arg(long, default_value_t = 1)]
        train_stride: usize,
        /// Skip horizontal-flip augmentation
        #[arg(long)]
        no_augment: bool,
    },
    /// Score the analytic baselines on the test split
    Baseline {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Track position noise (m) for the constant-velocity baseline
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 6.0)]
        horizon: f64,
    },
    /// Train a network on the training split; writes model.ckpt
    Train {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Window length N; must match the manifest
        #[arg(long, default_value_t = 6)]
        frames: usize,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_enum, default_value_t = HeadKind::Regression)]
        head: HeadKind,
    },
    /// Write per-window predictions of a trained model on the test split
    Predict {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Checkpoint [default: <out>/model.ckpt]
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compare a trained model with the baselines on the test split
    Eval {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Checkpoint [default: <out>/model.ckpt]
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
    },
    /// Simulate, then train and score one network per window length
    Sweep {
        #[command(flatten)]
        scenes: SceneArgs,
        /// Window lengths, `a:b` inclusive or a single value
        #[arg(long, default_value = "1:9")]
        frames: String,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 1)]
        train_stride: usize,
        #[arg(long)]
        no_augment: bool,
        /// Record wall-clock training time in the report
        #[arg(long)]
        timing: bool,
    },
    /// Finite-difference check of the analytic gradients
    Gradcheck {
        /// Window length N
        #[arg(long, default_value_t = 2)]
        frames: usize,
        #[arg(long, default_value_t = 16)]
        image_size: usize,
        #[arg(long, value_enum, default_value_t = HeadKind::Regression)]
        head: HeadKind,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

/// A failure with its exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `a:b` (inclusive) or a single window length.
pub fn parse_frame_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("invalid --frames `{s}`; expected N or A:B"));
    let (a, b) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if a == 0 || a > b || b > MAX_WINDOW {
        return Err(Error::Config(format!("--frames `{s}` must lie within 1:{MAX_WINDOW}")));
    }
    Ok((a..=b).collect())
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.common.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).format_target(false).is_test(false).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn run(cli: &Cli) -> CliResult {
    let c = &cli.common;
    if c.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    match &cli.command {
        Command::Simulate { scenes } => simulate(c, scenes),
        Command::Annotate { data, frames, labels, test_fraction, train_stride, no_augment } => {
            let opts = ExperimentOptions {
                n_frames: *frames,
                radius: labels.radius,
                horizon_s: labels.horizon,
                augment: !no_augment,
                train_stride: *train_stride,
                ..ExperimentOptions::default()
            };
            validate_experiment(&opts, *test_fraction)?;
            annotate(c, data.as_deref().unwrap_or(&c.out), &opts, *test_fraction)
        }
        Command::Baseline { manifest, noise_std, horizon } => {
            let opts = ExperimentOptions { cv_noise_std: *noise_std, horizon_s: *horizon, ..seeded(c) };
            opts.validate().map_err(usage)?;
            baseline(c, &manifest_path(c, manifest), opts)
        }
        Command::Train { manifest, frames, train, head } => {
            let hyper = hyperparams(c, train)?;
            train_model(c, &manifest_path(c, manifest), *frames, hyper, *head)
        }
        Command::Predict { manifest, model } => predict(c, &manifest_path(c, manifest), &model_path(c, model)),
        Command::Eval { manifest, model, noise_std } => {
            let opts = ExperimentOptions { cv_noise_std: *noise_std, ..seeded(c) };
            opts.validate().map_err(usage)?;
            evaluate(c, &manifest_path(c, manifest), &model_path(c, model), opts)
        }
        Command::Sweep { scenes, frames, train, labels, test_fraction, train_stride, no_augment, timing } => {
            let ns = parse_frame_range(frames).map_err(usage)?;
            scenes.validate(c.seed).map_err(usage)?;
            let opts = ExperimentOptions {
                hyper: hyperparams(c, train)?,
                radius: labels.radius,
                horizon_s: labels.horizon,
                augment: !no_augment,
                train_stride: *train_stride,
                jobs: c.jobs,
                timing: *timing,
                ..ExperimentOptions::default()
            };
            validate_experiment(&opts, *test_fraction)?;
            sweep(c, scenes, &ns, &opts, *test_fraction)
        }
        Command::Gradcheck { frames, image_size, head, tolerance } => {
            let cfg = NetworkConfig::with_input(*frames, *image_size, *image_size, *head);
            cfg.validate().map_err(usage)?;
            if tolerance.is_nan() || *tolerance <= 0.0 {
                return Err(CliError::Usage("--tolerance must be positive".into()));
            }
            gradcheck(c, &cfg, *tolerance)
        }
    }
}

fn seeded(c: &Common) -> ExperimentOptions {
    ExperimentOptions {
        hyper: Hyperparams { seed: c.seed, ..Hyperparams::default() },
        jobs: c.jobs,
        ..ExperimentOptions::default()
    }
}

fn hyperparams(c: &Common, t: &TrainArgs) -> CliResult<Hyperparams> {
    let h = Hyperparams { batch_size: t.batch, learning_rate: t.lr, epochs: t.epochs, seed: c.seed };
    h.validate().map_err(usage)?;
    if t.lr.is_nan() || t.lr <= 0.0 || t.epochs == 0 {
        return Err(CliError::Usage("--lr must be positive and --epochs at least 1".into()));
    }
    Ok(h)
}

fn validate_experiment(opts: &ExperimentOptions, test_fraction: f64) -> CliResult {
    opts.validate().map_err(usage)?;
    if !(1..=MAX_WINDOW).contains(&opts.n_frames) {
        return Err(CliError::Usage(format!("--frames must lie in 1..={MAX_WINDOW}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CliError::Usage(format!("--test-fraction {test_fraction} outside (0, 1)")));
    }
    Ok(())
}

fn manifest_path(c: &Common, m: &ManifestArg) -> PathBuf {
    m.manifest.clone().unwrap_or_else(|| c.out.join("manifest.json"))
}

fn model_path(c: &Common, m: &Option<PathBuf>) -> PathBuf {
    m.clone().unwrap_or_else(|| c.out.join("model.ckpt"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_report(c: &Common, report: &Report, stem: &str) -> Result<PathBuf> {
    ensure_dir(&c.out)?;
    let ext = match c.format {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    };
    let path = c.out.join(format!("{stem}.{ext}"));
    emit_report(report, &path, c.format)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn simulate(c: &Common, args: &SceneArgs) -> CliResult {
    args.validate(c.seed).map_err(usage)?;
    let configs = batch_configs(&args.base(c.seed), args.scenes, c.seed, None);
    let scenes = simulate_batch(&configs, c.jobs)?;
    ensure_dir(&c.out)?;
    for scene in &scenes {
        write_scene(&c.out, scene)?;
    }
    log::info!("wrote {} scenes to {}", scenes.len(), c.out.display());
    Ok(())
}

fn scene_dirs(data: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(data)
        .map_err(|e| Error::io(data, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("scene_")))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!("no scene_* directories in {}", data.display())));
    }
    Ok(dirs)
}

fn annotate(c: &Common, data: &Path, opts: &ExperimentOptions, test_fraction: f64) -> CliResult {
    let mut scenes = Vec::new();
    let mut dir_of = HashMap::new();
    ensure_dir(&c.out)?;
    for dir in scene_dirs(data)? {
        let scene = read_scene(&dir)?;
        dir_of.insert(scene.id(), crate::annotate::relative_path(&dir, &c.out).to_string_lossy().into_owned());
        scenes.push(scene);
    }
    let ids: Vec<u64> = scenes.iter().map(SceneLog::id).collect();
    let (train_ids, test_ids) = split_scenes(&ids, test_fraction, c.seed);
    let pick = |wanted: &[u64]| scenes.iter().filter(|s| wanted.contains(&s.id())).collect::<Vec<_>>();
    let dsopts = opts.dataset_options(opts.n_frames);
    let ds = crate::annotate::build_dataset(&pick(&train_ids), &pick(&test_ids), &dsopts)?;
    log::info!(
        "{} train / {} test windows from {} / {} scenes",
        ds.train.len(),
        ds.test.len(),
        train_ids.len(),
        test_ids.len()
    );
    let manifest = Manifest::from_dataset(&ds, &dsopts, &dir_of)?;
    let path = c.out.join("manifest.json");
    manifest.save(&path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

struct Loaded {
    manifest: Manifest,
    scenes: HashMap<u64, SceneLog>,
    ds: Dataset,
}

impl Loaded {
    fn test_scenes(&self) -> Vec<&SceneLog> {
        self.ds.test_scenes.iter().map(|id| &self.scenes[id]).collect()
    }
}

fn load_dataset(path: &Path) -> Result<Loaded> {
    let manifest = Manifest::load(path)?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let scenes = manifest.load_scenes(base)?;
    let ids = |split| manifest.scenes.iter().filter(|s| s.split == split).map(|s| s.scene_id).collect();
    let ds = Dataset {
        train: manifest.materialize(&scenes, Split::Train)?,
        test: manifest.materialize(&scenes, Split::Test)?,
        train_scenes: ids(Split::Train),
        test_scenes: ids(Split::Test),
        train_stats: manifest.train_stats,
        test_stats: manifest.test_stats,
    };
    Ok(Loaded { manifest, scenes, ds })
}

fn with_manifest_labels(opts: ExperimentOptions, m: &Manifest) -> ExperimentOptions {
    ExperimentOptions { radius: m.radius, n_frames: m.n_frames, ..opts }
}

fn baseline(c: &Common, manifest: &Path, opts: ExperimentOptions) -> CliResult {
    let data = load_dataset(manifest)?;
    let opts = with_manifest_labels(opts, &data.manifest);
    let methods = [Method::Constant, Method::Cv, Method::Naive];
    let cmp = compare_on_dataset(&data.ds, &data.test_scenes(), &methods, None, &opts)?;
    write_report(c, &cmp.to_report(), "baseline")?;
    Ok(())
}

fn train_model(c: &Common, manifest: &Path, frames: usize, hyper: Hyperparams, head: HeadKind) -> CliResult {
    let data = load_dataset(manifest)?;
    if frames != data.manifest.n_frames {
        return Err(CliError::Usage(format!(
            "--frames {frames} does not match the manifest's window length {}",
            data.manifest.n_frames
        )));
    }
    let raster = &data.ds.train.first().ok_or_else(|| Error::Config("training split is empty".into()))?.frames[0];
    let cfg = NetworkConfig::with_input(frames, raster.height as usize, raster.width as usize, head);
    let mut net = Network::build(cfg, hyper.seed)?;
    let examples = examples_for(&data.ds.train, head);
    log::info!("training on {} windows, {} parameters", examples.len(), net.num_params());
    let report = train(&mut net, &examples, &hyper)?;
    ensure_dir(&c.out)?;
    let path = c.out.join("model.ckpt");
    save_checkpoint(&net, &path)?;
    log::info!("wrote {}", path.display());
    let mut curve = Report::new("loss_curve", &["epoch", "loss"]);
    for (i, l) in report.loss_curve.iter().enumerate() {
        curve.push(vec![Cell::int(i + 1), Cell::num(*l)])?;
    }
    write_report(c, &curve, "loss_curve")?;
    Ok(())
}

fn load_model_for(path: &Path, m: &Manifest) -> Result<Network> {
    let net = load_checkpoint(path)?;
    if net.config().n_frames != m.n_frames {
        return Err(Error::Config(format!(
            "model expects {} frames, manifest windows have {}",
            net.config().n_frames,
            m.n_frames
        )));
    }
    Ok(net)
}

fn predict(c: &Common, manifest: &Path, model: &Path) -> CliResult {
    let data = load_dataset(manifest)?;
    let net = load_model_for(model, &data.manifest)?;
    let outputs = predict_samples(&net, &data.ds.test)?;
    let mut report =
        Report::new("predictions", &["scene_id", "end_frame", "output_0", "output_1", "output_2", "output_3", "t_true"]);
    for (s, o) in data.ds.test.iter().zip(&outputs) {
        let values: Vec<f64> = match o {
            Output::Time(t) => vec![*t],
            Output::Binary(p) => p.to_vec(),
            Output::Multilabel(p) => p.to_vec(),
        };
        let mut row = vec![Cell::Int(s.source.scene_id as i64), Cell::int(s.source.end_frame)];
        row.extend((0..4).map(|i| Cell::opt(values.get(i).copied())));
        row.push(Cell::opt(s.t_true));
        report.push(row)?;
    }
    write_report(c, &report, "predictions")?;
    Ok(())
}

fn evaluate(c: &Common, manifest: &Path, model: &Path, opts: ExperimentOptions) -> CliResult {
    let data = load_dataset(manifest)?;
    let net = load_model_for(model, &data.manifest)?;
    let opts = with_manifest_labels(opts, &data.manifest);
    let test_scenes = data.test_scenes();
    match net.config().head {
        HeadKind::Regression => {
            let cmp = compare_on_dataset(&data.ds, &test_scenes, &Method::ALL, Some(&net), &opts)?;
            write_report(c, &cmp.to_report(), "eval")?;
            let (preds, truths) = crate::eval::evaluate_regressor(&net, &data.ds.test)?;
            let intervals = interval_report(&preds, &truths)?;
            if !intervals.monotone_difficulty() {
                log::info!("per-interval error is not monotone in time to collision");
            }
            write_report(c, &intervals.to_report(), "intervals")?;
        }
        head => {
            let mut preds = Vec::new();
            let mut truths = Vec::new();
            for (s, o) in data.ds.test.iter().zip(predict_samples(&net, &data.ds.test)?) {
                let Some(truth) = s.binary_target else { continue };
                preds.push(match o {
                    Output::Binary(p) => p[1] > p[0],
                    Output::Multilabel(p) => (1..4).all(|k| p[0] >= p[k]),
                    Output::Time(t) => t <= 1.0,
                });
                truths.push(truth);
            }
            let cm = ConfusionMatrix::from_predictions(&preds, &truths)?;
            let scores = classification_metrics(&cm);
            let mut r = Report::new("classification", &["head", "tp", "fn", "fp", "tn", "precision", "recall", "f1"]);
            r.push(vec![
                Cell::Text(format!("{head:?}").to_lowercase()),
                Cell::Int(cm.tp as i64),
                Cell::Int(cm.fn_ as i64),
                Cell::Int(cm.fp as i64),
                Cell::Int(cm.tn as i64),
                Cell::opt(scores.precision),
                Cell::opt(scores.recall),
                Cell::opt(scores.f1),
            ])?;
            write_report(c, &r, "eval")?;
        }
    }
    Ok(())
}

fn sweep(c: &Common, args: &SceneArgs, ns: &[usize], opts: &ExperimentOptions, test_fraction: f64) -> CliResult {
    let configs = batch_configs(&args.base(c.seed), args.scenes, c.seed, None);
    let scenes = simulate_batch(&configs, c.jobs)?;
    let ids: Vec<u64> = scenes.iter().map(SceneLog::id).collect();
    let (train_ids, test_ids) = split_scenes(&ids, test_fraction, c.seed);
    let pick = |wanted: &[u64]| scenes.iter().filter(|s| wanted.contains(&s.id())).collect::<Vec<_>>();
    let table = sweep_temporal_windows(&pick(&train_ids), &pick(&test_ids), ns, opts)?;
    log::info!("lowest test MAE at N = {}", table.best_n);
    write_report(c, &table.to_report(), "sweep")?;
    Ok(())
}

fn gradcheck(c: &Common, cfg: &NetworkConfig, tolerance: f64) -> CliResult {
    let report = grad_check(cfg, c.seed, tolerance)?;
    let mut r = Report::new("gradcheck", &["tensor", "compared", "excluded", "max_rel_error"]);
    for t in &report.tensors {
        r.push(vec![Cell::Text(t.name.clone()), Cell::int(t.compared), Cell::int(t.excluded), Cell::num(t.max_rel_error)])?;
    }
    r.note("passed", report.passed);
    write_report(c, &r, "gradcheck")?;
    for (layer, err) in report.per_layer() {
        log::info!("{layer}: max relative error {err:.3e}");
    }
    if !report.passed {
        return Err(CliError::Runtime(Error::Training {
            layer: "gradcheck".into(),
            message: format!("max relative error {:.3e} exceeds {tolerance:e}", report.max_error()),
        }));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_ranges() {
        assert_eq!(parse_frame_range("1:9").unwrap(), (1..=9).collect::<Vec<_>>());
        assert_eq!(parse_frame_range("6").unwrap(), vec![6]);
        assert!(parse_frame_range("0:3").is_err());
        assert!(parse_frame_range("4:2").is_err());
        assert!(parse_frame_range("1:10").is_err());
        assert!(parse_frame_range("x").is_err());
    }

    #[test]
    fn defaults_echo_training_setup() {
        let cli = Cli::try_parse_from(["ttnc", "train"]).unwrap();
        let Command::Train { frames, train, head, .. } = cli.command else { panic!() };
        assert_eq!((frames, train.batch, train.lr, train.epochs, head), (6, 24, 0.001, 30, HeadKind::Regression));
        assert_eq!(cli.common.seed, 42);
        assert_eq!(cli.common.out, PathBuf::from("./out"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(dispatch(["ttnc", "--help"]), 0);
        assert_eq!(dispatch(["ttnc", "simulate", "--bogus"]), 1);
        assert_eq!(dispatch(["ttnc", "sweep", "--frames", "0:3"]), 1);
        assert_eq!(dispatch(["ttnc", "simulate", "--pedestrians", "0"]), 1);
        assert_eq!(dispatch(["ttnc", "baseline", "--manifest", "/nonexistent/manifest.json"]), 2);
    }
}
