//! Seeded generator of egocentric pedestrian-encounter scenes.
//!
//! Coordinates are platform-centric: the ground-plane position of a
//! pedestrian is `[lateral, forward]` in meters relative to the moving
//! platform, whose camera looks along +forward. Platform egomotion is folded
//! into the pedestrians' relative velocities, so the sensor frame of every
//! frame coincides with the platform.
//!
//! The sensor (LIDAR) frame uses x = right, y = down, z = forward with its
//! origin [`LIDAR_HEIGHT`] above the ground.

mod io;
mod lidar;
mod render;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, CameraModel, Point3};
use crate::{Error, Result, FRAME_RATE};

pub use io::{read_scene, scene_dir_name, write_scene, SceneMeta};
pub use lidar::sample_lidar;
pub use render::{render_frame, Raster};

/// Height of the LIDAR origin above the ground, meters.
pub const LIDAR_HEIGHT: f64 = 0.85;
/// Height of the camera center above the ground, meters.
pub const CAMERA_HEIGHT: f64 = 0.3;
/// Radius of the cylinder standing in for a pedestrian body, meters.
pub const BODY_RADIUS: f64 = 0.25;
pub const DEFAULT_PEDESTRIAN_HEIGHT: f64 = 1.7;

const SPAWN_RANGE: (f64, f64) = (3.0, 8.0);
const SPEED_LIMITS: (f64, f64) = (0.2, 1.5);
const STREAM_TRAJECTORIES: u64 = 1;
const STREAM_LIDAR: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    ConstantVelocity,
    PiecewiseTurn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n_pedestrians: usize,
    pub duration_s: f64,
    pub frame_rate: u32,
    pub platform_speed: f64,
    pub pedestrian_speed_range: [f64; 2],
    /// `[width, height]` in pixels.
    pub image_size: [u32; 2],
    pub lidar_points_per_pedestrian: usize,
    pub lidar_range_noise_std: f64,
    pub motion_model: MotionModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_pedestrians: 3,
            duration_s: 12.0,
            frame_rate: FRAME_RATE,
            platform_speed: 1.0,
            pedestrian_speed_range: [0.2, 1.5],
            image_size: [64, 64],
            lidar_points_per_pedestrian: 40,
            lidar_range_noise_std: 0.01,
            motion_model: MotionModel::ConstantVelocity,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(1..=8).contains(&self.n_pedestrians) {
            return fail(format!("n_pedestrians = {} outside [1, 8]", self.n_pedestrians));
        }
        if self.frame_rate != FRAME_RATE {
            return fail(format!("frame_rate = {} but must be {FRAME_RATE}", self.frame_rate));
        }
        if !(self.duration_s >= 7.0 && self.duration_s.is_finite()) {
            return fail(format!("duration_s = {} below 7", self.duration_s));
        }
        let frames = self.duration_s * f64::from(FRAME_RATE);
        if (frames - frames.round()).abs() > 1e-9 {
            return fail(format!("duration_s = {} is not a whole number of frames", self.duration_s));
        }
        let (lo, hi) = SPEED_LIMITS;
        if !(lo..=hi).contains(&self.platform_speed) {
            return fail(format!("platform_speed = {} outside [{lo}, {hi}]", self.platform_speed));
        }
        let [a, b] = self.pedestrian_speed_range;
        if !(lo <= a && a <= b && b <= hi) {
            return fail(format!("pedestrian_speed_range = [{a}, {b}] not within [{lo}, {hi}]"));
        }
        let [w, h] = self.image_size;
        if w < 8 || h < 8 {
            return fail(format!("image_size = {w}x{h} below 8x8"));
        }
        if self.lidar_points_per_pedestrian == 0 {
            return fail("lidar_points_per_pedestrian must be positive".into());
        }
        if !(self.lidar_range_noise_std >= 0.0 && self.lidar_range_noise_std.is_finite()) {
            return fail(format!("lidar_range_noise_std = {} negative", self.lidar_range_noise_std));
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        (self.duration_s * f64::from(self.frame_rate)).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianState {
    pub id: u32,
    /// `[lateral, forward]` relative to the platform, meters.
    pub position: [f64; 2],
    /// Velocity relative to the platform, m/s.
    pub velocity: [f64; 2],
    pub height: f64,
}

impl PedestrianState {
    /// Horizontal distance from the platform origin.
    pub fn range(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }
}

/// Sensor-frame point above ground-plane position `ground` at `elevation`.
pub fn ground_to_sensor(ground: [f64; 2], elevation: f64) -> Point3 {
    Point3::new(ground[0], LIDAR_HEIGHT - elevation, ground[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp: f64,
    pub pedestrians: Vec<PedestrianState>,
    pub cloud: Vec<Point3>,
    pub image: Raster,
    pub boxes: Vec<(u32, BBox)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneLog {
    pub config: SimConfig,
    pub camera: CameraModel,
    pub frames: Vec<Frame>,
}

impl SceneLog {
    /// Scenes are identified by their seed.
    pub fn id(&self) -> u64 {
        self.config.seed
    }
}

/// Rig camera for a given image size: square pixels, ~77° horizontal field
/// of view, mounted `LIDAR_HEIGHT − CAMERA_HEIGHT` below the LIDAR.
pub fn default_camera(width: u32, height: u32) -> Result<CameraModel> {
    let f = 0.625 * f64::from(width);
    CameraModel::new(
        f,
        f,
        f64::from(width) / 2.0,
        f64::from(height) / 2.0,
        0.0,
        Matrix3::identity(),
        Vector3::new(0.0, LIDAR_HEIGHT - CAMERA_HEIGHT, 0.0),
        width,
        height,
    )
}

/// One straight-line leg of a pedestrian's relative motion.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Leg {
    start_time: f64,
    velocity: [f64; 2],
}

/// Planned relative trajectory of one pedestrian.
#[derive(Debug, Clone, PartialEq)]
pub struct PedestrianPlan {
    pub id: u32,
    pub start: [f64; 2],
    legs: Vec<Leg>,
    pub height: f64,
}

impl PedestrianPlan {
    /// Constant relative velocity for the whole log.
    pub fn straight(id: u32, start: [f64; 2], velocity: [f64; 2]) -> Self {
        Self { id, start, legs: vec![Leg { start_time: 0.0, velocity }], height: DEFAULT_PEDESTRIAN_HEIGHT }
    }

    fn with_turns(mut self, turns: &[(f64, [f64; 2])]) -> Self {
        for &(start_time, velocity) in turns {
            self.legs.push(Leg { start_time, velocity });
        }
        self
    }

    pub fn state_at(&self, t: f64) -> PedestrianState {
        let mut pos = self.start;
        let mut vel = self.legs[0].velocity;
        for (k, leg) in self.legs.iter().enumerate() {
            if leg.start_time > t {
                break;
            }
            let end = self.legs.get(k + 1).map_or(t, |next| next.start_time.min(t));
            let dt = end - leg.start_time;
            pos = [pos[0] + leg.velocity[0] * dt, pos[1] + leg.velocity[1] * dt];
            vel = leg.velocity;
        }
        PedestrianState { id: self.id, position: pos, velocity: vel, height: self.height }
    }
}

/// Generates a scene. Identical configs yield identical logs.
pub fn simulate_scene(cfg: &SimConfig) -> Result<SceneLog> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, STREAM_TRAJECTORIES);
    let plans = plan_pedestrians(cfg, &mut rng);
    simulate_plans(cfg, &plans)
}

/// Renders a scene from explicit trajectories instead of sampled ones.
pub fn simulate_plans(cfg: &SimConfig, plans: &[PedestrianPlan]) -> Result<SceneLog> {
    cfg.validate()?;
    let [width, height] = cfg.image_size;
    let camera = default_camera(width, height)?;
    let mut lidar_rng = substream(cfg.seed, STREAM_LIDAR);
    let frames = (0..cfg.n_frames())
        .map(|index| {
            let timestamp = index as f64 / f64::from(FRAME_RATE);
            let pedestrians: Vec<PedestrianState> = plans.iter().map(|p| p.state_at(timestamp)).collect();
            let cloud = sample_lidar(&pedestrians, cfg, &mut lidar_rng);
            let (image, boxes) = render_frame(&pedestrians, &camera, width, height);
            Frame { index, timestamp, pedestrians, cloud, image, boxes }
        })
        .collect();
    Ok(SceneLog { config: cfg.clone(), camera, frames })
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn polar(range: f64, bearing: f64) -> [f64; 2] {
    [range * bearing.sin(), range * bearing.cos()]
}

fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Pedestrian 0 is aimed to pass within 0.7 m of the platform; the rest
/// wander with random headings.
fn plan_pedestrians(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<PedestrianPlan> {
    let vp = cfg.platform_speed;
    let [s_lo, s_hi] = cfg.pedestrian_speed_range;
    let duration = cfg.duration_s;
    let mut plans = Vec::with_capacity(cfg.n_pedestrians);

    let (approacher, pass_time) = plan_approacher(cfg, rng);
    plans.push(approacher);

    for id in 1..cfg.n_pedestrians as u32 {
        let start = polar(rng.random_range(SPAWN_RANGE.0..=SPAWN_RANGE.1), rng.random_range(-PI / 4.0..PI / 4.0));
        let heading = rng.random_range(0.0..2.0 * PI);
        let speed = rng.random_range(s_lo..=s_hi);
        let ground = [speed * heading.sin(), speed * heading.cos()];
        plans.push(PedestrianPlan::straight(id, start, [ground[0], ground[1] - vp]));
    }

    if cfg.motion_model == MotionModel::PiecewiseTurn {
        for (k, plan) in plans.iter_mut().enumerate() {
            // the approacher may only turn once it has passed the platform
            let earliest = if k == 0 { pass_time + 0.5 } else { 1.0 };
            let n_turns = rng.random_range(1..=2);
            let mut times: Vec<f64> = (0..n_turns).map(|_| rng.random_range(1.0..duration - 1.0)).collect();
            let angles: Vec<f64> = (0..n_turns).map(|_| rng.random_range(-PI / 3.0..PI / 3.0)).collect();
            times.sort_by(f64::total_cmp);
            let mut ground = plan.legs[0].velocity;
            ground[1] += vp;
            let mut turns = Vec::new();
            for (t, a) in times.into_iter().zip(angles) {
                ground = rotate(ground, a);
                if t >= earliest {
                    turns.push((t, [ground[0], ground[1] - vp]));
                }
            }
            *plan = plan.clone().with_turns(&turns);
        }
    }
    plans
}

/// Returns the approaching pedestrian and the time of its closest pass.
fn plan_approacher(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> (PedestrianPlan, f64) {
    let vp = cfg.platform_speed;
    let [s_lo, s_hi] = cfg.pedestrian_speed_range;
    let latest = cfg.duration_s - 0.5;
    for _ in 0..200 {
        let start = polar(rng.random_range(SPAWN_RANGE.0..=SPAWN_RANGE.1), rng.random_range(-0.6..0.6));
        let aim = [rng.random_range(-0.7..0.7), 0.0];
        let speed = rng.random_range(s_lo..=s_hi);
        let delta = [aim[0] - start[0], aim[1] - start[1]];
        let dist = delta[0].hypot(delta[1]);
        let dir = [delta[0] / dist, delta[1] / dist];
        // |closing·dir + (0, vp)| = speed, solved for the closing speed
        let disc = vp * vp * dir[1] * dir[1] - vp * vp + speed * speed;
        if disc < 0.0 {
            continue;
        }
        let closing = -vp * dir[1] + disc.sqrt();
        if closing < 0.1 {
            continue;
        }
        let pass_time = dist / closing;
        if (3.0..=latest).contains(&pass_time) {
            let velocity = [closing * dir[0], closing * dir[1]];
            return (PedestrianPlan::straight(0, start, velocity), pass_time);
        }
    }
    // head-on walker; always reaches the platform in time
    let closing = vp + s_lo;
    let forward = (closing * cfg.duration_s / 2.0).clamp(SPAWN_RANGE.0, SPAWN_RANGE.1);
    let forward = forward.min(closing * latest);
    (PedestrianPlan::straight(0, [0.0, forward], [0.0, -closing]), forward / closing)
}

/// Per-scene configs for a batch: each scene gets its own seed and a
/// platform speed drawn from `platform_speed_range`.
pub fn batch_configs(base: &SimConfig, count: usize, seed: u64, platform_speed_range: Option<[f64; 2]>) -> Vec<SimConfig> {
    let mut rng = substream(seed, 7);
    (0..count)
        .map(|_| {
            let scene_seed = rng.next_u64() >> 24;
            let speed = match platform_speed_range {
                Some([lo, hi]) if hi > lo => rng.random_range(lo..=hi),
                Some([lo, _]) => lo,
                None => base.platform_speed,
            };
            SimConfig { seed: scene_seed, platform_speed: speed, ..base.clone() }
        })
        .collect()
}

/// Simulates a batch of scenes on up to `jobs` threads; output order
/// follows `configs`.
pub fn simulate_batch(configs: &[SimConfig], jobs: usize) -> Result<Vec<SceneLog>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| configs.par_iter().map(simulate_scene).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_names_the_bound() {
        let bad = SimConfig { n_pedestrians: 9, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("n_pedestrians"));
        let bad = SimConfig { duration_s: 6.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("duration_s"));
        let bad = SimConfig { frame_rate: 30, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("frame_rate"));
        let bad = SimConfig { platform_speed: 2.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("platform_speed"));
        let bad = SimConfig { pedestrian_speed_range: [0.1, 1.0], ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(simulate_scene(&bad).is_err());
    }

    #[test]
    fn frame_count_and_timestamps() {
        let log = simulate_scene(&SimConfig { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(log.frames.len(), 120);
        for (i, f) in log.frames.iter().enumerate() {
            assert_eq!(f.index, i);
            assert_eq!(f.timestamp, i as f64 / 10.0);
            assert_eq!(f.image.width, 64);
            assert_eq!(f.image.data.len(), 64 * 64);
        }
    }

    #[test]
    fn head_on_walker_reaches_radius_at_four_seconds() {
        let cfg = SimConfig { n_pedestrians: 1, ..Default::default() };
        let plan = PedestrianPlan::straight(0, [0.0, 5.0], [0.0, -1.0]);
        let log = simulate_plans(&cfg, &[plan]).unwrap();
        let first = log.frames.iter().find(|f| f.pedestrians[0].range() <= 1.0).unwrap();
        assert_eq!(first.timestamp, 4.0);
    }

    #[test]
    fn lidar_point_count_does_not_move_pedestrians() {
        let a = simulate_scene(&SimConfig { seed: 9, ..Default::default() }).unwrap();
        let b = simulate_scene(&SimConfig { seed: 9, lidar_points_per_pedestrian: 7, ..Default::default() }).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.pedestrians, fb.pedestrians);
            assert_eq!(fb.cloud.len(), 7 * 3);
        }
    }

    #[test]
    fn piecewise_turns_change_heading() {
        let cfg = SimConfig { seed: 21, motion_model: MotionModel::PiecewiseTurn, n_pedestrians: 4, ..Default::default() };
        let log = simulate_scene(&cfg).unwrap();
        let turned = (1..4).any(|k| {
            let v0 = log.frames[0].pedestrians[k].velocity;
            let v1 = log.frames.last().unwrap().pedestrians[k].velocity;
            v0 != v1
        });
        assert!(turned);
        // positions stay continuous across a turn
        for w in log.frames.windows(2) {
            for (p, q) in w[0].pedestrians.iter().zip(&w[1].pedestrians) {
                let step = (q.position[0] - p.position[0]).hypot(q.position[1] - p.position[1]);
                assert!(step < 0.31, "jump of {step} m");
            }
        }
    }

    #[test]
    fn batch_configs_are_distinct_and_reproducible() {
        let base = SimConfig::default();
        let a = batch_configs(&base, 20, 7, Some([0.2, 1.5]));
        let b = batch_configs(&base, 20, 7, Some([0.2, 1.5]));
        assert_eq!(a, b);
        let mut seeds: Vec<u64> = a.iter().map(|c| c.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 20);
        assert!(a.iter().all(|c| (0.2..=1.5).contains(&c.platform_speed)));
    }
}
