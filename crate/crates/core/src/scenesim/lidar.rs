use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ground_to_sensor, PedestrianState, SimConfig, BODY_RADIUS};
use crate::geometry::Point3;

/// Samples LIDAR returns off each pedestrian's body cylinder.
///
/// Points lie on the half of the cylinder facing the sensor, at uniformly
/// random bearing and elevation, with the cylinder radius perturbed by
/// zero-mean Gaussian noise of `cfg.lidar_range_noise_std`. Every point draws
/// the same number of variates, so noise level never shifts later samples.
pub fn sample_lidar<R: Rng>(states: &[PedestrianState], cfg: &SimConfig, rng: &mut R) -> Vec<Point3> {
    let n = cfg.lidar_points_per_pedestrian;
    let mut cloud = Vec::with_capacity(states.len() * n);
    for ped in states {
        let [px, pz] = ped.position;
        let dist = px.hypot(pz);
        // unit vector from the pedestrian toward the sensor
        let toward = if dist > 0.0 { [-px / dist, -pz / dist] } else { [0.0, -1.0] };
        for _ in 0..n {
            let phi: f64 = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
            let elevation = rng.random_range(0.0..=ped.height);
            let z: f64 = rng.sample(StandardNormal);
            let radius = BODY_RADIUS + cfg.lidar_range_noise_std * z;
            let (s, c) = phi.sin_cos();
            let dir = [c * toward[0] - s * toward[1], s * toward[0] + c * toward[1]];
            let ground = [px + radius * dir[0], pz + radius * dir[1]];
            cloud.push(ground_to_sensor(ground, elevation));
        }
    }
    cloud
}
