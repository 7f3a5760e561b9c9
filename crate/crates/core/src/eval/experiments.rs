//! Experiment harness: the temporal-window sweep and the method comparison.
//!
//! Every experiment windows its scenes starting at end frame
//! `MAX_WINDOW − 1`, so all window lengths and methods are scored on the
//! same test samples.

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    classification_metrics, interval_report, regression_metrics, Cell, ClassificationScores, ConfusionMatrix, IntervalReport,
    RegressionMetrics, Report,
};
use crate::annotate::{build_dataset, Dataset, DatasetOptions, WindowOptions, WindowSample, MAX_WINDOW, NEAR_RADIUS};
use crate::baselines::{
    cv_predict, naive_vertical_classify, tracks_at, ConstantBaseline, TtcPrediction, DEFAULT_HISTORY_FRAMES,
    NAIVE_FRACTION,
};
use crate::geometry::BBox;
use crate::neural::{
    examples_for, predict_samples, train, HeadKind, Hyperparams, Network, NetworkConfig, Output, TrainReport, MAX_TTC,
};
use crate::scenesim::SceneLog;
use crate::{Error, Result, FRAME_RATE};

const CV_NOISE_STREAM: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub hyper: Hyperparams,
    /// Window length for single-`N` experiments.
    pub n_frames: usize,
    pub radius: f64,
    pub horizon_s: f64,
    pub augment: bool,
    pub train_stride: usize,
    /// Track position noise for the constant-velocity baseline, meters.
    pub cv_noise_std: f64,
    pub cv_history: usize,
    pub jobs: usize,
    /// Record wall-clock training time; off by default so reports are
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            hyper: Hyperparams::default(),
            n_frames: 6,
            radius: NEAR_RADIUS,
            horizon_s: MAX_TTC,
            augment: true,
            train_stride: 1,
            cv_noise_std: 0.0,
            cv_history: DEFAULT_HISTORY_FRAMES,
            jobs: 1,
            timing: false,
        }
    }
}

impl ExperimentOptions {
    pub fn horizon_frames(&self) -> usize {
        (self.horizon_s * f64::from(FRAME_RATE)).round() as usize
    }

    pub fn dataset_options(&self, n_frames: usize) -> DatasetOptions {
        DatasetOptions {
            window: WindowOptions { n_frames, horizon: self.horizon_frames(), min_end_frame: MAX_WINDOW - 1 },
            radius: self.radius,
            augment: self.augment,
            train_stride: self.train_stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("radius {} must be positive", self.radius)));
        }
        if !(self.horizon_s > 0.0 && self.horizon_s <= MAX_TTC) {
            return Err(Error::Config(format!("horizon {} s outside (0, {MAX_TTC}]", self.horizon_s)));
        }
        if !(self.cv_noise_std >= 0.0 && self.cv_noise_std.is_finite()) {
            return Err(Error::Config(format!("noise std {} must be non-negative", self.cv_noise_std)));
        }
        if self.train_stride == 0 || self.jobs == 0 || self.cv_history < 2 {
            return Err(Error::Config("train_stride and jobs must be ≥ 1, cv_history ≥ 2".into()));
        }
        Ok(())
    }
}

fn image_shape(scenes: &[&SceneLog]) -> Result<(usize, usize)> {
    let frame = scenes
        .iter()
        .find_map(|s| s.frames.first())
        .ok_or_else(|| Error::Config("no frames to train on".into()))?;
    Ok((frame.image.height as usize, frame.image.width as usize))
}

fn regression_pairs(samples: &[WindowSample], preds: impl IntoIterator<Item = f64>) -> (Vec<f64>, Vec<f64>) {
    samples.iter().zip(preds).filter_map(|(s, p)| s.t_true.map(|t| (p, t))).unzip()
}

fn regression_test(samples: &[WindowSample]) -> Vec<WindowSample> {
    samples.iter().filter(|s| s.t_true.is_some()).cloned().collect()
}

pub fn build_experiment_dataset(
    train: &[&SceneLog],
    test: &[&SceneLog],
    n_frames: usize,
    opts: &ExperimentOptions,
) -> Result<Dataset> {
    build_dataset(train, test, &opts.dataset_options(n_frames))
}

/// Trains a fresh regression network seeded by `opts.hyper.seed`; returns
/// it with the loss curve and the training time (0 unless timing is on).
pub fn train_regressor(
    samples: &[WindowSample],
    n_frames: usize,
    (height, width): (usize, usize),
    opts: &ExperimentOptions,
) -> Result<(Network, TrainReport, f64)> {
    let cfg = NetworkConfig::with_input(n_frames, height, width, HeadKind::Regression);
    let mut net = Network::build(cfg, opts.hyper.seed)?;
    let examples = examples_for(samples, HeadKind::Regression);
    let start = Instant::now();
    let report = train(&mut net, &examples, &opts.hyper)?;
    let secs = if opts.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    Ok((net, report, secs))
}

/// Clamped regression predictions and truths on samples with a target.
pub fn evaluate_regressor(net: &Network, samples: &[WindowSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let test = regression_test(samples);
    let preds = predict_samples(net, &test)?.into_iter().map(|o| match o {
        Output::Time(t) => t,
        _ => f64::NAN,
    });
    Ok(regression_pairs(&test, preds))
}

/// Constant-velocity predictions on regression samples. No-collision
/// predictions are scored as 6 s; their count is returned.
pub fn evaluate_cv(
    scenes: &[&SceneLog],
    samples: &[WindowSample],
    opts: &ExperimentOptions,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let by_id: HashMap<u64, &SceneLog> = scenes.iter().map(|s| (s.id(), *s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.hyper.seed);
    rng.set_stream(CV_NOISE_STREAM);
    let mut substituted = 0;
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for s in samples.iter().filter(|s| s.t_true.is_some() && !s.source.flipped) {
        let scene = by_id
            .get(&s.source.scene_id)
            .ok_or_else(|| Error::Config(format!("sample from unknown scene {}", s.source.scene_id)))?;
        let history = tracks_at(scene, s.source.end_frame, opts.cv_history, opts.cv_noise_std, &mut rng);
        let pred = match cv_predict(&history, opts.radius, opts.horizon_s)? {
            TtcPrediction::Collision(t) => t,
            TtcPrediction::NoCollision => {
                substituted += 1;
                MAX_TTC
            }
        };
        preds.push(pred);
        truths.push(s.t_true.expect("filtered"));
    }
    Ok((preds, truths, substituted))
}

/// The foot-row rule on each classification sample's last frame.
pub fn evaluate_naive(scenes: &[&SceneLog], samples: &[WindowSample]) -> Result<ConfusionMatrix> {
    let by_id: HashMap<u64, &SceneLog> = scenes.iter().map(|s| (s.id(), *s)).collect();
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for s in samples.iter().filter(|s| !s.source.flipped) {
        let Some(truth) = s.binary_target else { continue };
        let scene = by_id
            .get(&s.source.scene_id)
            .ok_or_else(|| Error::Config(format!("sample from unknown scene {}", s.source.scene_id)))?;
        let frame = &scene.frames[s.source.end_frame];
        let boxes: Vec<BBox> = frame.boxes.iter().map(|(_, b)| *b).collect();
        preds.push(naive_vertical_classify(&boxes, f64::from(frame.image.height), NAIVE_FRACTION));
        truths.push(truth);
    }
    ConfusionMatrix::from_predictions(&preds, &truths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_frames: usize,
    pub metrics: RegressionMetrics,
    pub intervals: IntervalReport,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Window length with the lowest test MAE (first on ties).
    pub best_n: usize,
}

impl SweepTable {
    pub fn row(&self, n: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.n_frames == n)
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new("sweep", &["n_frames", "mae_s", "std_s", "n_test", "train_seconds"]);
        for row in &self.rows {
            r.push(vec![
                Cell::int(row.n_frames),
                Cell::num(row.metrics.mae),
                Cell::num(row.metrics.std_abs_err),
                Cell::int(row.metrics.n),
                Cell::num(row.train_seconds),
            ])
            .expect("five columns");
        }
        r.note("best_n", self.best_n);
        r
    }
}

fn sweep_cell(train: &[&SceneLog], test: &[&SceneLog], n: usize, opts: &ExperimentOptions) -> Result<SweepRow> {
    let annotate = |e: Error| match e {
        Error::Training { layer, message } => Error::Training { layer, message: format!("N = {n}: {message}") },
        other => other,
    };
    let ds = build_experiment_dataset(train, test, n, opts)?;
    let (net, report, secs) = train_regressor(&ds.train, n, image_shape(train)?, opts).map_err(annotate)?;
    let (preds, truths) = evaluate_regressor(&net, &ds.test)?;
    let metrics = regression_metrics(&preds, &truths)?;
    let intervals = interval_report(&preds, &truths)?;
    log::info!(
        "N = {n}: {} training windows, final loss {:.4}, test MAE {:.3} ± {:.3} s",
        report.n_examples,
        report.loss_curve.last().copied().unwrap_or(f64::NAN),
        metrics.mae,
        metrics.std_abs_err
    );
    Ok(SweepRow { n_frames: n, metrics, intervals, train_seconds: secs })
}

/// Trains and scores one fresh network per window length on a fixed split.
pub fn sweep_temporal_windows(
    train: &[&SceneLog],
    test: &[&SceneLog],
    ns: &[usize],
    opts: &ExperimentOptions,
) -> Result<SweepTable> {
    opts.validate()?;
    if ns.is_empty() {
        return Err(Error::Config("empty window range".into()));
    }
    let rows: Vec<SweepRow> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| ns.par_iter().map(|&n| sweep_cell(train, test, n, opts)).collect::<Result<_>>())?
    } else {
        ns.iter().map(|&n| sweep_cell(train, test, n, opts)).collect::<Result<_>>()?
    };
    let best_n = rows
        .iter()
        .min_by(|a, b| a.metrics.mae.total_cmp(&b.metrics.mae))
        .map(|r| r.n_frames)
        .expect("non-empty");
    Ok(SweepTable { rows, best_n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Constant,
    Cv,
    Naive,
    Multistream,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Constant, Method::Cv, Method::Naive, Method::Multistream];

    pub fn name(self) -> &'static str {
        match self {
            Method::Constant => "constant",
            Method::Cv => "cv",
            Method::Naive => "naive",
            Method::Multistream => "multistream",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    pub regression: Option<RegressionMetrics>,
    pub classification: Option<ClassificationScores>,
    /// Constant-velocity no-collision outputs scored as 6 s.
    pub substituted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<MethodRow>,
}

impl Comparison {
    pub fn row(&self, m: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == m)
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new("comparison", &["method", "task", "mae_s", "std_s", "n", "f1", "substituted"]);
        for row in &self.rows {
            let task = if row.regression.is_some() { "regression" } else { "binary" };
            r.push(vec![
                Cell::Text(row.method.name().into()),
                Cell::Text(task.into()),
                Cell::opt(row.regression.map(|m| m.mae)),
                Cell::opt(row.regression.map(|m| m.std_abs_err)),
                Cell::int(row.regression.map_or(0, |m| m.n)),
                Cell::opt(row.classification.and_then(|c| c.f1)),
                Cell::int(row.substituted),
            ])
            .expect("seven columns");
        }
        r
    }
}

/// Scores each method on the same held-out split, training the multistream
/// network from scratch.
pub fn compare_methods(
    train: &[&SceneLog],
    test: &[&SceneLog],
    methods: &[Method],
    opts: &ExperimentOptions,
) -> Result<Comparison> {
    opts.validate()?;
    let ds = build_experiment_dataset(train, test, opts.n_frames, opts)?;
    let model = if methods.contains(&Method::Multistream) {
        Some(train_regressor(&ds.train, opts.n_frames, image_shape(train)?, opts)?.0)
    } else {
        None
    };
    compare_on_dataset(&ds, test, methods, model.as_ref(), opts)
}

/// Scores methods on an existing dataset. `Multistream` needs `model`.
pub fn compare_on_dataset(
    ds: &Dataset,
    test: &[&SceneLog],
    methods: &[Method],
    model: Option<&Network>,
    opts: &ExperimentOptions,
) -> Result<Comparison> {
    let mut rows = Vec::new();
    for &method in methods {
        let row = match method {
            Method::Constant => {
                let targets: Vec<f64> = ds.train.iter().filter_map(|s| s.t_true).collect();
                let model = ConstantBaseline::fit(&targets)?;
                let test = regression_test(&ds.test);
                let (p, t) = regression_pairs(&test, std::iter::repeat(model.predict()));
                MethodRow { method, regression: Some(regression_metrics(&p, &t)?), classification: None, substituted: 0 }
            }
            Method::Cv => {
                let (p, t, substituted) = evaluate_cv(test, &ds.test, opts)?;
                MethodRow { method, regression: Some(regression_metrics(&p, &t)?), classification: None, substituted }
            }
            Method::Naive => {
                let cm = evaluate_naive(test, &ds.test)?;
                MethodRow { method, regression: None, classification: Some(classification_metrics(&cm)), substituted: 0 }
            }
            Method::Multistream => {
                let net = model.ok_or_else(|| Error::Config("multistream needs a trained model".into()))?;
                let (p, t) = evaluate_regressor(net, &ds.test)?;
                MethodRow { method, regression: Some(regression_metrics(&p, &t)?), classification: None, substituted: 0 }
            }
        };
        rows.push(row);
    }
    Ok(Comparison { rows })
}
