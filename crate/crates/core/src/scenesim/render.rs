use serde::{Deserialize, Serialize};

use super::{ground_to_sensor, PedestrianState, BODY_RADIUS};
use crate::geometry::{BBox, CameraModel};

/// Grayscale image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0.0; width as usize * height as usize] }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width as usize + col]
    }

    /// Mirror about the vertical axis: `(r, c) ↦ (r, W − 1 − c)`.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.width as usize;
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(w) {
            row.reverse();
        }
        Self { width: self.width, height: self.height, data }
    }
}

/// Rasterizes pedestrians as filled rectangles shaded `1 / range`.
///
/// Each rectangle spans the projections of the body cylinder's silhouette
/// edges at foot and head height. Nearer pedestrians are drawn last. The
/// returned boxes are the filled pixel rectangles, so their bounds are whole
/// numbers. A pedestrian with any corner at or behind the camera plane, or
/// whose rectangle misses the image, gets no box.
pub fn render_frame(
    states: &[PedestrianState],
    cam: &CameraModel,
    width: u32,
    height: u32,
) -> (Raster, Vec<(u32, BBox)>) {
    let mut image = Raster::zeros(width, height);
    let mut order: Vec<&PedestrianState> = states.iter().collect();
    order.sort_by(|a, b| b.range().total_cmp(&a.range()).then(a.id.cmp(&b.id)));

    let mut boxes = Vec::new();
    for ped in order {
        let Some(bbox) = pixel_rect(ped, cam, width, height) else { continue };
        let shade = (1.0 / ped.range()).clamp(0.0, 1.0) as f32;
        for row in bbox.v_min as usize..bbox.v_max as usize {
            let start = row * width as usize;
            image.data[start + bbox.u_min as usize..start + bbox.u_max as usize].fill(shade);
        }
        boxes.push((ped.id, bbox));
    }
    boxes.sort_by_key(|(id, _)| *id);
    (image, boxes)
}

fn pixel_rect(ped: &PedestrianState, cam: &CameraModel, width: u32, height: u32) -> Option<BBox> {
    let [px, pz] = ped.position;
    let dist = px.hypot(pz);
    if dist == 0.0 {
        return None;
    }
    // silhouette edges lie perpendicular to the line of sight
    let side = [pz / dist * BODY_RADIUS, -px / dist * BODY_RADIUS];
    let mut u = (f64::INFINITY, f64::NEG_INFINITY);
    let mut v = (f64::INFINITY, f64::NEG_INFINITY);
    for sign in [-1.0, 1.0] {
        let edge = [px + sign * side[0], pz + sign * side[1]];
        for elevation in [0.0, ped.height] {
            let pr = cam.project_point(&ground_to_sensor(edge, elevation))?;
            u = (u.0.min(pr.u), u.1.max(pr.u));
            v = (v.0.min(pr.v), v.1.max(pr.v));
        }
    }
    let (w, h) = (f64::from(width), f64::from(height));
    let c0 = u.0.floor().clamp(0.0, w);
    let c1 = u.1.ceil().clamp(0.0, w);
    let r0 = v.0.floor().clamp(0.0, h);
    let r1 = v.1.ceil().clamp(0.0, h);
    (c0 < c1 && r0 < r1).then_some(BBox { u_min: c0, v_min: r0, u_max: c1, v_max: r1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::scenesim::default_camera;

    fn ped(id: u32, x: f64, z: f64) -> PedestrianState {
        PedestrianState { id, position: [x, z], velocity: [0.0, 0.0], height: 1.7 }
    }

    #[test]
    fn empty_scene_renders_black() {
        let cam = default_camera(64, 64).unwrap();
        let (img, boxes) = render_frame(&[], &cam, 64, 64);
        assert!(img.data.iter().all(|&x| x == 0.0));
        assert!(boxes.is_empty());
    }

    #[test]
    fn pedestrian_dead_ahead() {
        let cam = default_camera(64, 64).unwrap();
        let (img, boxes) = render_frame(&[ped(0, 0.0, 2.0)], &cam, 64, 64);
        let b = boxes[0].1;
        assert!((0.5 * (b.u_min + b.u_max) - cam.cx()).abs() <= 0.5);
        assert!(b.v_max > b.v_min);
        let mid_r = (0.5 * (b.v_min + b.v_max)) as usize;
        let mid_c = (0.5 * (b.u_min + b.u_max)) as usize;
        assert_eq!(img.get(mid_r, mid_c), 0.5);

        let (img4, boxes4) = render_frame(&[ped(0, 0.0, 4.0)], &cam, 64, 64);
        let b4 = boxes4[0].1;
        assert!(b4.v_min > b.v_min && b4.v_max < b.v_max);
        assert_eq!(img4.get((0.5 * (b4.v_min + b4.v_max)) as usize, mid_c), 0.25);

        // foot and head rows agree with direct projection of the body axis
        let foot = cam.project_point(&Point3::new(0.0, super::super::LIDAR_HEIGHT, 4.0)).unwrap();
        let head = cam.project_point(&Point3::new(0.0, super::super::LIDAR_HEIGHT - 1.7, 4.0)).unwrap();
        assert_eq!(b4.v_max, foot.v.ceil());
        assert_eq!(b4.v_min, head.v.floor());
    }

    #[test]
    fn nearer_pedestrian_is_drawn_on_top() {
        let cam = default_camera(64, 64).unwrap();
        let (img, boxes) = render_frame(&[ped(0, 0.0, 2.0), ped(1, 0.0, 5.0)], &cam, 64, 64);
        assert_eq!(boxes.len(), 2);
        assert_eq!(img.get(32, 32), 0.5);
    }

    #[test]
    fn out_of_view_pedestrians_have_no_box() {
        let cam = default_camera(64, 64).unwrap();
        let (img, boxes) = render_frame(&[ped(0, 0.0, -3.0), ped(1, 10.0, 1.0)], &cam, 64, 64);
        assert!(boxes.is_empty());
        assert!(img.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn flip_mirrors_columns() {
        let r = Raster { width: 2, height: 2, data: vec![1.0, 2.0, 3.0, 4.0] };
        assert_eq!(r.flip_horizontal().data, vec![2.0, 1.0, 4.0, 3.0]);
        assert_eq!(r.flip_horizontal().flip_horizontal(), r);
    }
}
