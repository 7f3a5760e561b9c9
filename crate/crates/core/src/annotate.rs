//! Near-collision labels, time-to-near-collision targets and window samples.
//!
//! A frame is positive when any pedestrian is within the radius (1 m,
//! inclusive). The target for a window ending at frame `n` is `T / 10` s,
//! where `T` is the 1-based position of the first positive among labels
//! `n+1 ..= n+60`.

use std::collections::{BTreeSet, HashMap};
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scenesim::{read_scene, Raster, SceneLog};
use crate::{Error, Result, FRAME_RATE};

pub const NEAR_RADIUS: f64 = 1.0;
pub const HORIZON_FRAMES: usize = 60;
pub const MAX_WINDOW: usize = 9;
/// Upper edges of the first three multilabel bins; the fourth is open.
pub const MULTILABEL_EDGES: [f64; 3] = [1.0, 2.0, 3.0];

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels {
    pub near_collision: Vec<bool>,
    pub nearest_range: Vec<f64>,
}

impl FrameLabels {
    /// Labels from per-frame nearest ranges (`∞` for empty frames).
    pub fn from_ranges(nearest_range: Vec<f64>, radius: f64) -> Self {
        let near_collision = nearest_range.iter().map(|&r| r <= radius).collect();
        Self { near_collision, nearest_range }
    }

    pub fn len(&self) -> usize {
        self.near_collision.len()
    }

    pub fn is_empty(&self) -> bool {
        self.near_collision.is_empty()
    }
}

pub fn label_frames(scene: &SceneLog, radius: f64) -> FrameLabels {
    let ranges = scene
        .frames
        .iter()
        .map(|f| f.pedestrians.iter().map(|p| p.range()).fold(f64::INFINITY, f64::min))
        .collect();
    FrameLabels::from_ranges(ranges, radius)
}

/// 1-based offset of the first positive label after frame `n`, looking at
/// most `horizon` frames ahead (fewer at the end of the log).
pub fn first_positive_offset(labels: &FrameLabels, n: usize, horizon: usize) -> Option<usize> {
    labels.near_collision.iter().skip(n + 1).take(horizon).position(|&x| x).map(|k| k + 1)
}

pub fn time_to_near_collision(labels: &FrameLabels, n: usize, horizon: usize) -> Option<f64> {
    first_positive_offset(labels, n, horizon).map(|t| t as f64 / f64::from(FRAME_RATE))
}

/// One-hot bin over `(0,1], (1,2], (2,3], (3,∞)`; no event counts as the last bin.
pub fn multilabel_target(t: Option<f64>) -> [bool; 4] {
    let bin = match t {
        Some(t) => MULTILABEL_EDGES.iter().position(|&edge| t <= edge).unwrap_or(3),
        None => 3,
    };
    let mut out = [false; 4];
    out[bin] = true;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleSource {
    pub scene_id: u64,
    pub end_frame: usize,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Oldest first.
    pub frames: Vec<Arc<Raster>>,
    pub t_true: Option<f64>,
    pub binary_target: Option<bool>,
    pub multilabel_target: Option<[bool; 4]>,
    pub source: SampleSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOptions {
    pub n_frames: usize,
    pub horizon: usize,
    /// Skip end frames below this index (used to align sweeps over `N`).
    pub min_end_frame: usize,
}

impl WindowOptions {
    pub fn new(n_frames: usize) -> Self {
        Self { n_frames, horizon: HORIZON_FRAMES, min_end_frame: 0 }
    }
}

/// Counts of what window extraction kept and dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowStats {
    pub regression: usize,
    pub classification: usize,
    /// End frames with no near-collision within the horizon.
    pub dropped_no_event: usize,
    /// End frames already inside the radius.
    pub dropped_in_collision: usize,
}

impl std::ops::AddAssign for WindowStats {
    fn add_assign(&mut self, o: Self) {
        self.regression += o.regression;
        self.classification += o.classification;
        self.dropped_no_event += o.dropped_no_event;
        self.dropped_in_collision += o.dropped_in_collision;
    }
}

pub fn extract_windows(scene: &SceneLog, labels: &FrameLabels, n_frames: usize) -> Result<Vec<WindowSample>> {
    Ok(extract_windows_with(scene, labels, &WindowOptions::new(n_frames))?.0)
}

pub fn extract_windows_with(
    scene: &SceneLog,
    labels: &FrameLabels,
    opts: &WindowOptions,
) -> Result<(Vec<WindowSample>, WindowStats)> {
    let n = opts.n_frames;
    if !(1..=MAX_WINDOW).contains(&n) {
        return Err(Error::Config(format!("window length {n} outside [1, {MAX_WINDOW}]")));
    }
    if scene.frames.len() < n {
        return Err(Error::Config(format!("scene {} has {} frames, fewer than N = {n}", scene.id(), scene.frames.len())));
    }
    if labels.len() != scene.frames.len() {
        return Err(Error::Shape(format!("{} labels for {} frames", labels.len(), scene.frames.len())));
    }
    let images: Vec<Arc<Raster>> = scene.frames.iter().map(|f| Arc::new(f.image.clone())).collect();
    let mut stats = WindowStats::default();
    let mut out = Vec::new();
    for end in (n - 1).max(opts.min_end_frame)..scene.frames.len() {
        let t = time_to_near_collision(labels, end, opts.horizon);
        let t_true = match (t, labels.near_collision[end]) {
            (_, true) => {
                stats.dropped_in_collision += 1;
                None
            }
            (None, false) => {
                stats.dropped_no_event += 1;
                None
            }
            (Some(t), false) => Some(t),
        };
        let full_lookahead = end + opts.horizon < scene.frames.len();
        let (binary_target, multilabel) = if full_lookahead {
            (Some(t.is_some_and(|t| t <= MULTILABEL_EDGES[0])), Some(multilabel_target(t)))
        } else {
            (None, None)
        };
        if t_true.is_none() && binary_target.is_none() {
            continue;
        }
        stats.regression += usize::from(t_true.is_some());
        stats.classification += usize::from(binary_target.is_some());
        out.push(WindowSample {
            frames: images[end + 1 - n..=end].to_vec(),
            t_true,
            binary_target,
            multilabel_target: multilabel,
            source: SampleSource { scene_id: scene.id(), end_frame: end, flipped: false },
        });
    }
    Ok((out, stats))
}

/// Appends a horizontally mirrored copy of every sample. Frames shared
/// between windows are mirrored once.
pub fn flip_augment(samples: Vec<WindowSample>) -> Vec<WindowSample> {
    let mut cache: HashMap<*const Raster, Arc<Raster>> = HashMap::new();
    let flipped: Vec<WindowSample> = samples
        .iter()
        .map(|s| WindowSample {
            frames: s
                .frames
                .iter()
                .map(|f| cache.entry(Arc::as_ptr(f)).or_insert_with(|| Arc::new(f.flip_horizontal())).clone())
                .collect(),
            source: SampleSource { flipped: !s.source.flipped, ..s.source },
            ..s.clone()
        })
        .collect();
    let mut out = samples;
    out.extend(flipped);
    out
}

/// With-replacement sampler weighting positives and negatives by class.
#[derive(Debug, Clone)]
pub struct WeightedSampler {
    index: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl WeightedSampler {
    pub fn new(targets: &[bool], positive_weight: f64, negative_weight: f64, seed: u64) -> Result<Self> {
        if !(positive_weight > 0.0 && negative_weight > 0.0) {
            return Err(Error::Config("sampler weights must be positive".into()));
        }
        let weights = targets.iter().map(|&y| if y { positive_weight } else { negative_weight });
        let index = WeightedIndex::new(weights).map_err(|e| Error::Config(format!("weighted sampler: {e}")))?;
        Ok(Self { index, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Default class weights 0.6 / 0.4.
    pub fn balanced(targets: &[bool], seed: u64) -> Result<Self> {
        Self::new(targets, 0.6, 0.4, seed)
    }
}

impl Iterator for WeightedSampler {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        Some(self.index.sample(&mut self.rng))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Seeded scene-level split; at least one scene lands in each part when
/// there are two or more scenes.
pub fn split_scenes(ids: &[u64], test_fraction: f64, seed: u64) -> (Vec<u64>, Vec<u64>) {
    let mut ids: Vec<u64> = ids.to_vec();
    ids.sort_unstable();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_test = (ids.len() as f64 * test_fraction).round() as usize;
    if ids.len() >= 2 {
        n_test = n_test.clamp(1, ids.len() - 1);
    }
    let test = ids.split_off(ids.len() - n_test.min(ids.len()));
    let mut train = ids;
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetOptions {
    pub window: WindowOptions,
    pub radius: f64,
    /// Mirror-augment the training split.
    pub augment: bool,
    /// Keep only training windows whose end frame is a multiple of this.
    pub train_stride: usize,
}

impl DatasetOptions {
    pub fn new(n_frames: usize) -> Self {
        Self { window: WindowOptions::new(n_frames), radius: NEAR_RADIUS, augment: true, train_stride: 1 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub train_scenes: Vec<u64>,
    pub test_scenes: Vec<u64>,
    pub train_stats: WindowStats,
    pub test_stats: WindowStats,
}

fn windows_for(scenes: &[&SceneLog], opts: &DatasetOptions) -> Result<(Vec<WindowSample>, WindowStats)> {
    let mut all = Vec::new();
    let mut stats = WindowStats::default();
    for scene in scenes {
        let labels = label_frames(scene, opts.radius);
        let (w, s) = extract_windows_with(scene, &labels, &opts.window)?;
        all.extend(w);
        stats += s;
    }
    Ok((all, stats))
}

/// Builds train and test windows; fails if a scene id appears in both.
pub fn build_dataset(train: &[&SceneLog], test: &[&SceneLog], opts: &DatasetOptions) -> Result<Dataset> {
    let train_ids: BTreeSet<u64> = train.iter().map(|s| s.id()).collect();
    let test_ids: BTreeSet<u64> = test.iter().map(|s| s.id()).collect();
    if let Some(id) = train_ids.intersection(&test_ids).next() {
        return Err(Error::Config(format!("scene {id} is in both the train and test split")));
    }
    if opts.train_stride == 0 {
        return Err(Error::Config("train_stride must be at least 1".into()));
    }
    let (mut train_samples, train_stats) = windows_for(train, opts)?;
    train_samples.retain(|s| s.source.end_frame % opts.train_stride == 0);
    if opts.augment {
        train_samples = flip_augment(train_samples);
    }
    let (test_samples, test_stats) = windows_for(test, opts)?;
    Ok(Dataset {
        train: train_samples,
        test: test_samples,
        train_scenes: train_ids.into_iter().collect(),
        test_scenes: test_ids.into_iter().collect(),
        train_stats,
        test_stats,
    })
}

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestScene {
    pub scene_id: u64,
    /// Scene directory, relative to the manifest's directory when possible.
    pub dir: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub scene_id: u64,
    pub end_frame: usize,
    pub flipped: bool,
    pub split: Split,
    pub t_true: Option<f64>,
    pub binary_target: Option<bool>,
    pub multilabel_target: Option<[bool; 4]>,
}

/// Dataset index. Pixels stay in each scene's `frames.bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub n_frames: usize,
    pub radius: f64,
    pub horizon_frames: usize,
    pub augmented: bool,
    pub train_stride: usize,
    pub scenes: Vec<ManifestScene>,
    pub train_stats: WindowStats,
    pub test_stats: WindowStats,
    pub samples: Vec<SampleRecord>,
}

fn record(s: &WindowSample, split: Split) -> SampleRecord {
    SampleRecord {
        scene_id: s.source.scene_id,
        end_frame: s.source.end_frame,
        flipped: s.source.flipped,
        split,
        t_true: s.t_true,
        binary_target: s.binary_target,
        multilabel_target: s.multilabel_target,
    }
}

impl Manifest {
    pub fn from_dataset(ds: &Dataset, opts: &DatasetOptions, scene_dirs: &HashMap<u64, String>) -> Result<Self> {
        let dir_of = |id: u64| {
            scene_dirs.get(&id).cloned().ok_or_else(|| Error::Config(format!("no directory recorded for scene {id}")))
        };
        let mut scenes = Vec::new();
        for &id in &ds.train_scenes {
            scenes.push(ManifestScene { scene_id: id, dir: dir_of(id)?, split: Split::Train });
        }
        for &id in &ds.test_scenes {
            scenes.push(ManifestScene { scene_id: id, dir: dir_of(id)?, split: Split::Test });
        }
        let samples = ds
            .train
            .iter()
            .map(|s| record(s, Split::Train))
            .chain(ds.test.iter().map(|s| record(s, Split::Test)))
            .collect();
        Ok(Self {
            schema_version: MANIFEST_VERSION,
            n_frames: opts.window.n_frames,
            radius: opts.radius,
            horizon_frames: opts.window.horizon,
            augmented: opts.augment,
            train_stride: opts.train_stride,
            scenes,
            train_stats: ds.train_stats,
            test_stats: ds.test_stats,
            samples,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if m.schema_version != MANIFEST_VERSION {
            return Err(Error::Format(format!("{}: unsupported manifest version {}", path.display(), m.schema_version)));
        }
        Ok(m)
    }

    /// Loads every referenced scene, resolving relative directories against
    /// `base` (normally the manifest's directory).
    pub fn load_scenes(&self, base: &Path) -> Result<HashMap<u64, SceneLog>> {
        self.scenes
            .iter()
            .map(|s| {
                let dir = base.join(&s.dir);
                let scene = read_scene(&dir)?;
                if scene.id() != s.scene_id {
                    return Err(Error::Format(format!("{} holds scene {}, expected {}", dir.display(), scene.id(), s.scene_id)));
                }
                Ok((s.scene_id, scene))
            })
            .collect()
    }

    /// Rebuilds the window samples of one split from loaded scenes.
    pub fn materialize(&self, scenes: &HashMap<u64, SceneLog>, split: Split) -> Result<Vec<WindowSample>> {
        let mut frames: HashMap<(u64, bool), Vec<Arc<Raster>>> = HashMap::new();
        self.samples
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                let images = match frames.get(&(r.scene_id, r.flipped)) {
                    Some(v) => v,
                    None => {
                        let scene = scenes
                            .get(&r.scene_id)
                            .ok_or_else(|| Error::Format(format!("sample references unknown scene {}", r.scene_id)))?;
                        let v = scene
                            .frames
                            .iter()
                            .map(|f| Arc::new(if r.flipped { f.image.flip_horizontal() } else { f.image.clone() }))
                            .collect();
                        frames.entry((r.scene_id, r.flipped)).or_insert(v)
                    }
                };
                if r.end_frame >= images.len() || r.end_frame + 1 < self.n_frames {
                    return Err(Error::Format(format!("sample end frame {} out of range", r.end_frame)));
                }
                Ok(WindowSample {
                    frames: images[r.end_frame + 1 - self.n_frames..=r.end_frame].to_vec(),
                    t_true: r.t_true,
                    binary_target: r.binary_target,
                    multilabel_target: r.multilabel_target,
                    source: SampleSource { scene_id: r.scene_id, end_frame: r.end_frame, flipped: r.flipped },
                })
            })
            .collect()
    }
}

/// `path` expressed relative to `base` when both are absolute (after
/// canonicalization), else `path` unchanged.
pub fn relative_path(path: &Path, base: &Path) -> PathBuf {
    let (Ok(p), Ok(b)) = (path.canonicalize(), base.canonicalize()) else {
        return path.to_path_buf();
    };
    let pc: Vec<Component> = p.components().collect();
    let bc: Vec<Component> = b.components().collect();
    let common = pc.iter().zip(&bc).take_while(|(a, b)| a == b).count();
    let mut out = PathBuf::new();
    for _ in common..bc.len() {
        out.push("..");
    }
    for c in &pc[common..] {
        out.push(c);
    }
    out
}
