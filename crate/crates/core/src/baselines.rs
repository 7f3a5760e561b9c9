//! Non-learned predictors: the training-mean constant, tracking followed by
//! constant-velocity extrapolation, and the foot-row threshold classifier.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::scenesim::SceneLog;
use crate::{Error, Result};

pub const DEFAULT_HISTORY_FRAMES: usize = 5;
pub const NAIVE_FRACTION: f64 = 0.625;
/// Foot-row thresholds for the `(0,1]`, `(1,2]` and `(2,3]` s classes, as
/// fractions of image height.
pub const NAIVE_MULTILABEL_FRACTIONS: [f64; 3] = [0.625, 0.560, 0.520];

/// Predicts the training-set mean for every input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantBaseline {
    pub mean: f64,
}

impl ConstantBaseline {
    pub fn fit(targets: &[f64]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Fit("constant baseline needs at least one target".into()));
        }
        Ok(Self { mean: targets.iter().sum::<f64>() / targets.len() as f64 })
    }

    pub fn predict(&self) -> f64 {
        self.mean
    }
}

/// `(timestamp s, [lateral, forward] m)`, oldest first.
pub type Track = Vec<(f64, [f64; 2])>;

/// Recent positions of each visible pedestrian, keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackHistory {
    pub tracks: BTreeMap<u32, Track>,
}

/// Per-axis least-squares line through the track. Returns the fitted
/// position at the latest timestamp and the slope.
pub fn fit_velocity(track: &[(f64, [f64; 2])]) -> Result<([f64; 2], [f64; 2])> {
    if track.len() < 2 {
        return Err(Error::InsufficientHistory(format!("{} point(s), need 2", track.len())));
    }
    if track.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InsufficientHistory("timestamps must be strictly increasing".into()));
    }
    let n = track.len() as f64;
    let t_mean = track.iter().map(|(t, _)| t).sum::<f64>() / n;
    let sxx: f64 = track.iter().map(|(t, _)| (t - t_mean).powi(2)).sum();
    let t_last = track[track.len() - 1].0;
    let mut p0 = [0.0; 2];
    let mut v = [0.0; 2];
    for axis in 0..2 {
        let mean = track.iter().map(|(_, p)| p[axis]).sum::<f64>() / n;
        let sxy: f64 = track.iter().map(|(t, p)| (t - t_mean) * (p[axis] - mean)).sum();
        v[axis] = sxy / sxx;
        p0[axis] = mean + v[axis] * (t_last - t_mean);
    }
    Ok((p0, v))
}

/// Earliest `t ∈ (0, horizon]` with `‖p0 + v·t‖ = radius`, or `0` when
/// already inside the radius.
pub fn time_to_radius(p0: [f64; 2], v: [f64; 2], radius: f64, horizon: f64) -> Option<f64> {
    let c = p0[0] * p0[0] + p0[1] * p0[1] - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let a = v[0] * v[0] + v[1] * v[1];
    let b = 2.0 * (p0[0] * v[0] + p0[1] * v[1]);
    let disc = b * b - 4.0 * a * c;
    // c > 0: both roots share a sign, positive only when moving inward
    if a == 0.0 || disc < 0.0 || b >= 0.0 {
        return None;
    }
    let q = 0.5 * (-b + disc.sqrt());
    let t = c / q;
    (t > 0.0 && t <= horizon).then_some(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtcPrediction {
    Collision(f64),
    NoCollision,
}

impl TtcPrediction {
    pub fn time(&self) -> Option<f64> {
        match self {
            TtcPrediction::Collision(t) => Some(*t),
            TtcPrediction::NoCollision => None,
        }
    }
}

/// Minimum predicted crossing time over all pedestrians with ≥ 2 points.
pub fn cv_predict(history: &TrackHistory, radius: f64, horizon: f64) -> Result<TtcPrediction> {
    let mut usable = 0;
    let mut best: Option<f64> = None;
    for track in history.tracks.values().filter(|t| t.len() >= 2) {
        usable += 1;
        let (p0, v) = fit_velocity(track)?;
        if let Some(t) = time_to_radius(p0, v, radius, horizon) {
            best = Some(best.map_or(t, |b| b.min(t)));
        }
    }
    if usable == 0 {
        return Err(Error::InsufficientHistory("no pedestrian has two or more tracked positions".into()));
    }
    Ok(best.map_or(TtcPrediction::NoCollision, TtcPrediction::Collision))
}

/// Tracks of every pedestrian over the `history_frames` frames ending at
/// `end_frame`, from simulator ground truth plus optional Gaussian
/// position noise (per axis, meters).
pub fn tracks_at<R: Rng>(
    scene: &SceneLog,
    end_frame: usize,
    history_frames: usize,
    noise_std: f64,
    rng: &mut R,
) -> TrackHistory {
    let start = (end_frame + 1).saturating_sub(history_frames.max(1));
    let mut out = TrackHistory::default();
    for frame in &scene.frames[start..=end_frame] {
        for ped in &frame.pedestrians {
            let mut pos = ped.position;
            if noise_std > 0.0 {
                for x in &mut pos {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += noise_std * z;
                }
            }
            out.tracks.entry(ped.id).or_default().push((frame.timestamp, pos));
        }
    }
    out
}

fn lowest_foot(boxes: &[BBox]) -> Option<f64> {
    boxes.iter().map(|b| b.v_max).reduce(f64::max)
}

/// Positive iff some box's foot row lies below `fraction · image_height`.
pub fn naive_vertical_classify(boxes: &[BBox], image_height: f64, fraction: f64) -> bool {
    lowest_foot(boxes).is_some_and(|v| v > fraction * image_height)
}

/// Foot-row classes as ordered bands; the nearest qualifying class wins and
/// class 4 ("after 3 s") takes everything at or above `0.520 · Y`.
pub fn naive_multilabel_classify(boxes: &[BBox], image_height: f64) -> [bool; 4] {
    let class = match lowest_foot(boxes) {
        Some(v) => NAIVE_MULTILABEL_FRACTIONS.iter().position(|f| v > f * image_height).unwrap_or(3),
        None => 3,
    };
    let mut out = [false; 4];
    out[class] = true;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn constant_baseline() {
        assert_eq!(ConstantBaseline::fit(&[1.0, 2.0, 3.0]).unwrap().predict(), 2.0);
        assert_eq!(ConstantBaseline::fit(&[0.4]).unwrap().predict(), 0.4);
        assert!(matches!(ConstantBaseline::fit(&[]), Err(Error::Fit(_))));
    }

    #[test]
    fn two_point_velocity() {
        let (p0, v) = fit_velocity(&[(0.0, [0.0, 4.0]), (0.1, [0.0, 3.9])]).unwrap();
        assert!((v[0]).abs() < 1e-12 && (v[1] + 1.0).abs() < 1e-12);
        assert!((p0[1] - 3.9).abs() < 1e-12);
        assert!(matches!(fit_velocity(&[(0.0, [0.0, 4.0])]), Err(Error::InsufficientHistory(_))));
        assert!(fit_velocity(&[(0.1, [0.0, 4.0]), (0.1, [0.0, 4.0])]).is_err());
    }

    #[test]
    fn noiseless_line_fits_exactly() {
        let track: Track = (0..10).map(|k| {
            let t = k as f64 / 10.0;
            (t, [0.3 - 0.7 * t, 5.0 - 1.2 * t])
        }).collect();
        let (p0, v) = fit_velocity(&track).unwrap();
        for (t, p) in &track {
            let dt = t - 0.9;
            assert!((p0[0] + v[0] * dt - p[0]).abs() < 1e-12);
            assert!((p0[1] + v[1] * dt - p[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_velocity_within_three_standard_errors() {
        use rand::SeedableRng;
        let sigma = 0.01;
        let n = 20;
        // OLS slope variance σ² / Σ(t − t̄)²
        let times: Vec<f64> = (0..n).map(|k| k as f64 / 10.0).collect();
        let t_mean = times.iter().sum::<f64>() / n as f64;
        let se = sigma / times.iter().map(|t| (t - t_mean).powi(2)).sum::<f64>().sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let trials = 400;
        let mut outside = 0;
        for _ in 0..trials {
            let track: Track = times
                .iter()
                .map(|&t| {
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    (t, [1.0 + 0.5 * t + sigma * nx, 6.0 - 1.1 * t + sigma * ny])
                })
                .collect();
            let (_, v) = fit_velocity(&track).unwrap();
            outside += usize::from((v[0] - 0.5).abs() > 3.0 * se);
            outside += usize::from((v[1] + 1.1).abs() > 3.0 * se);
        }
        // a 3σ band misses 0.27% of fits; allow a generous margin
        assert!(outside <= 8, "{outside} of {} fits outside 3 standard errors", 2 * trials);
    }

    #[test]
    fn crossing_times() {
        assert_eq!(time_to_radius([0.0, 3.0], [0.0, -1.0], 1.0, 6.0), Some(2.0));
        assert_eq!(time_to_radius([2.0, 2.0], [0.0, 0.0], 1.0, 6.0), None);
        assert_eq!(time_to_radius([0.0, 0.5], [0.0, 3.0], 1.0, 6.0), Some(0.0));
        assert_eq!(time_to_radius([0.0, 3.0], [0.0, 1.0], 1.0, 6.0), None);
        assert_eq!(time_to_radius([3.0, 3.0], [0.0, -1.0], 1.0, 6.0), None);
        assert_eq!(time_to_radius([0.0, 10.0], [0.0, -1.0], 1.0, 6.0), None);
    }

    #[test]
    fn cv_takes_minimum_over_pedestrians() {
        let mut h = TrackHistory::default();
        h.tracks.insert(1, vec![(0.0, [0.0, 3.1]), (0.1, [0.0, 3.0])]);
        h.tracks.insert(2, vec![(0.0, [4.6, 0.0]), (0.1, [4.5, 0.0])]);
        assert_eq!(cv_predict(&h, 1.0, 6.0).unwrap().time().map(|t| (t * 1e9).round() / 1e9), Some(2.0));
        let p = cv_predict(&h, 1.0, 6.0).unwrap().time().unwrap();
        assert!((p - 2.0).abs() < 1e-9);

        let mut receding = TrackHistory::default();
        receding.tracks.insert(1, vec![(0.0, [0.0, 3.0]), (0.1, [0.0, 3.1])]);
        assert_eq!(cv_predict(&receding, 1.0, 6.0).unwrap(), TtcPrediction::NoCollision);

        let mut short = TrackHistory::default();
        short.tracks.insert(1, vec![(0.0, [0.0, 3.0])]);
        assert!(matches!(cv_predict(&short, 1.0, 6.0), Err(Error::InsufficientHistory(_))));
    }

    fn foot(v: f64) -> BBox {
        BBox { u_min: 0.0, v_min: 0.0, u_max: 10.0, v_max: v }
    }

    #[test]
    fn naive_thresholds() {
        assert!(naive_vertical_classify(&[foot(460.0)], 720.0, NAIVE_FRACTION));
        assert!(!naive_vertical_classify(&[foot(450.0)], 720.0, NAIVE_FRACTION));
        assert!(!naive_vertical_classify(&[], 720.0, NAIVE_FRACTION));
        assert_eq!(naive_multilabel_classify(&[foot(400.0)], 720.0), [false, false, true, false]);
        assert_eq!(naive_multilabel_classify(&[foot(460.0)], 720.0), [true, false, false, false]);
        assert_eq!(naive_multilabel_classify(&[foot(404.0)], 720.0), [false, true, false, false]);
        assert_eq!(naive_multilabel_classify(&[foot(374.4)], 720.0), [false, false, false, true]);
        assert_eq!(naive_multilabel_classify(&[], 720.0), [false, false, false, true]);
    }

    proptest! {
        #[test]
        fn crossing_residual_is_tiny(px in -8.0f64..8.0, py in -8.0f64..8.0, vx in -3.0f64..3.0, vy in -3.0f64..3.0) {
            if let Some(t) = time_to_radius([px, py], [vx, vy], 1.0, 6.0) {
                prop_assert!((0.0..=6.0).contains(&t));
                if t == 0.0 {
                    prop_assert!(px.hypot(py) <= 1.0);
                } else {
                    let d = (px + vx * t).hypot(py + vy * t);
                    prop_assert!((d - 1.0).abs() < 1e-9, "residual {}", d - 1.0);
                }
            }
        }

        #[test]
        fn crossing_is_rotation_invariant(
            px in -8.0f64..8.0, py in -8.0f64..8.0, vx in -3.0f64..3.0, vy in -3.0f64..3.0, angle in 0.0f64..std::f64::consts::TAU
        ) {
            let (s, c) = angle.sin_cos();
            let rot = |p: [f64; 2]| [c * p[0] - s * p[1], s * p[0] + c * p[1]];
            let a = time_to_radius([px, py], [vx, vy], 1.0, 6.0);
            let b = time_to_radius(rot([px, py]), rot([vx, vy]), 1.0, 6.0);
            match (a, b) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-6),
                (None, None) => {}
                // grazing or horizon-edge cases may flip under rounding
                (x, y) => {
                    let t = x.or(y).unwrap();
                    let tangent = {
                        let v2 = vx * vx + vy * vy;
                        let b = 2.0 * (px * vx + py * vy);
                        let c = px * px + py * py - 1.0;
                        (b * b - 4.0 * v2 * c).abs() < 1e-6
                    };
                    prop_assert!(tangent || (t - 6.0).abs() < 1e-6, "{:?} vs {:?}", x, y);
                }
            }
        }

        #[test]
        fn naive_is_monotone_in_foot_row(v in 0.0f64..720.0, dv in 0.0f64..300.0) {
            if naive_vertical_classify(&[foot(v)], 720.0, NAIVE_FRACTION) {
                prop_assert!(naive_vertical_classify(&[foot(v + dv)], 720.0, NAIVE_FRACTION));
            }
        }

        #[test]
        fn cv_matches_bruteforce_minimum(
            peds in proptest::collection::vec((-6.0f64..6.0, 0.5f64..8.0, -2.0f64..2.0, -2.0f64..2.0), 1..5)
        ) {
            let mut h = TrackHistory::default();
            for (id, &(x, y, vx, vy)) in peds.iter().enumerate() {
                let track = (0..5).map(|k| {
                    let t = k as f64 / 10.0 - 0.4;
                    (t, [x + vx * t, y + vy * t])
                }).collect();
                h.tracks.insert(id as u32, track);
            }
            let expected = peds
                .iter()
                .filter_map(|&(x, y, vx, vy)| time_to_radius([x, y], [vx, vy], 1.0, 6.0))
                .reduce(f64::min);
            let got = cv_predict(&h, 1.0, 6.0).unwrap().time();
            match (expected, got) {
                (Some(e), Some(g)) => prop_assert!((e - g).abs() < 1e-6),
                (None, None) => {}
                (e, g) => prop_assert!(false, "{:?} vs {:?}", e, g),
            }
        }
    }
}
