//! Pinhole projection of sensor-frame points and per-box range extraction.
//!
//! A sensor point `p` maps to homogeneous pixel coordinates through
//! `[u v w]ᵀ = K · [R | −Rᵀt] · [p 1]ᵀ`, i.e. the camera-frame point is
//! `R·p − Rᵀ·t`. The extrinsic block is applied exactly in that form.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Projections with homogeneous depth at or below this are discarded.
pub const MIN_DEPTH: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// A point in the sensor (LIDAR) frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Result of projecting one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRange {
    /// Continuous column coordinate `u / w`.
    pub u: f64,
    /// Continuous row coordinate `v / w`.
    pub v: f64,
    /// Homogeneous depth, camera frame.
    pub w: f64,
    /// Euclidean distance of the source point from the sensor origin.
    pub range: f64,
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BBox {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Result<Self> {
        let b = Self { u_min, v_min, u_max, v_max };
        if !(u_min >= 0.0 && u_min < u_max && v_min >= 0.0 && v_min < v_max) {
            return Err(Error::Config(format!("degenerate bounding box {b:?}")));
        }
        Ok(b)
    }

    /// Checks the box also fits inside a `width × height` image.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.u_max <= f64::from(width) && self.v_max <= f64::from(height)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        self.u_min <= u && u <= self.u_max && self.v_min <= v && v <= self.v_max
    }
}

/// Intrinsics `K` plus the LIDAR→camera rigid transform `(R, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationFile", into = "CalibrationFile")]
pub struct CameraModel {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    skew: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    width: u32,
    height: u32,
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        skew: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let finite = [fx, fy, cx, cy, skew].iter().all(|x| x.is_finite())
            && rotation.iter().all(|x| x.is_finite())
            && translation.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::Camera("non-finite parameter".into()));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Camera(format!("focal lengths must be positive (fx={fx}, fy={fy})")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Camera(format!("image size must be positive ({width}x{height})")));
        }
        let gram_err = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        if gram_err >= ORTHONORMAL_TOL {
            return Err(Error::Camera(format!(
                "rotation is not orthonormal: max |R·Rᵀ − I| = {gram_err:e}"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::Camera(format!("rotation determinant {det} is not +1")));
        }
        Ok(Self { fx, fy, cx, cy, skew, rotation, translation, width, height })
    }

    /// Camera with identity extrinsics.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        Self::new(fx, fy, cx, cy, 0.0, Matrix3::identity(), Vector3::zeros(), width, height)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn skew(&self) -> f64 {
        self.skew
    }
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Sensor frame → camera frame: `R·p − Rᵀ·t`.
    pub fn to_camera_frame(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p - self.rotation.transpose() * self.translation
    }

    /// Inverse of [`Self::to_camera_frame`].
    pub fn to_sensor_frame(&self, pc: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (pc + self.rotation.transpose() * self.translation)
    }

    /// Camera-frame point on the ray through `(u, v)` at homogeneous depth `w`.
    pub fn backproject(&self, u: f64, v: f64, w: f64) -> Vector3<f64> {
        let y = (v - self.cy) * w / self.fy;
        let x = ((u - self.cx) * w - self.skew * y) / self.fx;
        Vector3::new(x, y, w)
    }

    /// Projects a sensor-frame point; `None` when it lies at or behind the
    /// camera plane.
    pub fn project_point(&self, p: &Point3) -> Option<PixelRange> {
        let uvw = self.intrinsic_matrix() * self.to_camera_frame(&p.as_vector());
        let w = uvw.z;
        if w <= MIN_DEPTH {
            return None;
        }
        Some(PixelRange { u: uvw.x / w, v: uvw.y / w, w, range: p.norm() })
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        (0.0..f64::from(self.width)).contains(&u) && (0.0..f64::from(self.height)).contains(&v)
    }

    /// Projects a point cloud, keeping points in front of the camera and
    /// inside the image. Input order is preserved.
    pub fn project_cloud(&self, cloud: &[Point3]) -> Vec<(usize, PixelRange)> {
        cloud
            .iter()
            .enumerate()
            .filter_map(|(i, p)| self.project_point(p).map(|pr| (i, pr)))
            .filter(|(_, pr)| self.in_image(pr.u, pr.v))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("camera serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Median range of projected points falling inside `bbox` (edges inclusive).
pub fn bbox_median_range(projected: &[(usize, PixelRange)], bbox: &BBox) -> Option<f64> {
    let ranges: Vec<f64> = projected
        .iter()
        .filter(|(_, pr)| bbox.contains(pr.u, pr.v))
        .map(|(_, pr)| pr.range)
        .collect();
    median(ranges)
}

/// Median with the even-count convention of averaging the two central values.
pub fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        Some(values[mid])
    } else {
        Some(0.5 * (values[mid - 1] + values[mid]))
    }
}

/// On-disk calibration layout. `R` is row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CalibrationFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default)]
    skew: f64,
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
    width: u32,
    height: u32,
}

impl TryFrom<CalibrationFile> for CameraModel {
    type Error = Error;

    fn try_from(c: CalibrationFile) -> Result<Self> {
        CameraModel::new(
            c.fx,
            c.fy,
            c.cx,
            c.cy,
            c.skew,
            Matrix3::from_row_slice(&c.r),
            Vector3::from_column_slice(&c.t),
            c.width,
            c.height,
        )
    }
}

impl From<CameraModel> for CalibrationFile {
    fn from(c: CameraModel) -> Self {
        let mut r = [0.0; 9];
        for (i, row) in c.rotation.row_iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                r[3 * i + j] = *x;
            }
        }
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            skew: c.skew,
            r,
            t: [c.translation.x, c.translation.y, c.translation.z],
            width: c.width,
            height: c.height,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_cam() -> CameraModel {
        CameraModel::pinhole(100.0, 100.0, 32.0, 32.0, 64, 64).unwrap()
    }

    fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0));
        let angle = rng.random_range(-3.0..3.0);
        *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
    }

    #[test]
    fn identity_projection() {
        let pr = test_cam().project_point(&Point3::new(0.1, 0.2, 2.0)).unwrap();
        assert!((pr.u - 37.0).abs() < 1e-12);
        assert!((pr.v - 42.0).abs() < 1e-12);
        assert_eq!(pr.w, 2.0);
        assert!((pr.range - 4.05f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_dropped() {
        assert!(test_cam().project_point(&Point3::new(0.0, 0.0, -1.0)).is_none());
        assert!(test_cam().project_point(&Point3::new(1.0, 1.0, 0.0)).is_none());
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let r = random_rotation(&mut rng);
            let t = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let cam = CameraModel::new(80.0, 90.0, 31.0, 29.0, 0.0, r, t, 64, 64).unwrap();
            // invert the extrinsic map by hand: p = Rᵀ (pc + Rᵀ t)
            let pc = Vector3::new(0.0, 0.0, 3.0);
            let p = r.transpose() * (pc + r.transpose() * t);
            let pr = cam.project_point(&Point3::from_vector(&p)).unwrap();
            assert!((pr.u - 31.0).abs() < 1e-9 && (pr.v - 29.0).abs() < 1e-9);
            assert!((pr.w - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_cameras() {
        let bad_r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            CameraModel::new(1.0, 1.0, 0.0, 0.0, 0.0, bad_r, Vector3::zeros(), 4, 4),
            Err(Error::Camera(_))
        ));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(CameraModel::new(1.0, 1.0, 0.0, 0.0, 0.0, reflection, Vector3::zeros(), 4, 4).is_err());
        assert!(CameraModel::pinhole(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraModel::pinhole(1.0, 1.0, 0.0, 0.0, 0, 4).is_err());
    }

    #[test]
    fn cloud_projection_filters_and_keeps_order() {
        let cam = test_cam();
        let cloud = [Point3::new(0.1, 0.2, 2.0), Point3::new(0.0, 0.0, -1.0)];
        let out = cam.project_cloud(&cloud);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, 0);
        assert!(cam.project_cloud(&[]).is_empty());
        // off-image but in front
        assert!(cam.project_cloud(&[Point3::new(10.0, 0.0, 1.0)]).is_empty());
    }

    #[test]
    fn frustum_samples_all_survive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_rotation(&mut rng);
        let t = Vector3::new(0.3, -0.2, 0.5);
        let cam = CameraModel::new(50.0, 55.0, 32.0, 30.0, 0.5, r, t, 64, 60).unwrap();
        let cloud: Vec<Point3> = (0..1000)
            .map(|_| {
                let u = rng.random_range(0.0..64.0);
                let v = rng.random_range(0.0..60.0);
                let w = rng.random_range(0.1..20.0);
                Point3::from_vector(&cam.to_sensor_frame(&cam.backproject(u, v, w)))
            })
            .collect();
        let out = cam.project_cloud(&cloud);
        assert_eq!(out.len(), 1000);
        assert!(out.iter().enumerate().all(|(k, (i, _))| k == *i));
    }

    #[test]
    fn median_conventions() {
        let mk = |ranges: &[f64]| -> Vec<(usize, PixelRange)> {
            ranges
                .iter()
                .enumerate()
                .map(|(i, &r)| (i, PixelRange { u: 5.0, v: 5.0, w: r, range: r }))
                .collect()
        };
        let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(bbox_median_range(&mk(&[2.0, 2.1, 5.0]), &b), Some(2.1));
        assert_eq!(bbox_median_range(&mk(&[2.0, 4.0]), &b), Some(3.0));
        let off = BBox::new(20.0, 20.0, 30.0, 30.0).unwrap();
        assert_eq!(bbox_median_range(&mk(&[2.0, 4.0]), &off), None);
    }

    #[test]
    fn calibration_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cam = CameraModel::new(60.0, 61.0, 30.0, 31.0, 0.2, random_rotation(&mut rng), Vector3::new(0.1, 0.2, 0.3), 64, 48)
            .unwrap();
        let json = serde_json::to_string(&cam).unwrap();
        let back: CameraModel = serde_json::from_str(&json).unwrap();
        assert_eq!(cam, back);

        let bad = r#"{"fx":1,"fy":1,"cx":0,"cy":0,"skew":0,"R":[1,0,0,0,1,0,0,0,2],"t":[0,0,0],"width":4,"height":4}"#;
        let err = serde_json::from_str::<CameraModel>(bad).unwrap_err().to_string();
        assert!(err.contains("orthonormal"), "{err}");
    }

    proptest! {
        #[test]
        fn backprojection_round_trip(
            seed in 0u64..1000,
            x in -5.0f64..5.0, y in -5.0f64..5.0, z in 0.05f64..30.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_rotation(&mut rng);
            let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let cam = CameraModel::new(70.0, 75.0, 30.0, 33.0, 0.3, r, t, 64, 64).unwrap();
            let pc = Vector3::new(x, y, z);
            let p = Point3::from_vector(&cam.to_sensor_frame(&pc));
            let pr = cam.project_point(&p).unwrap();
            let back = cam.backproject(pr.u, pr.v, pr.w);
            prop_assert!((back - pc).amax() < 1e-9);
        }

        #[test]
        fn cloud_is_subset_of_pointwise(
            pts in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -2.0f64..8.0), 0..200)
        ) {
            let cam = test_cam();
            let cloud: Vec<Point3> = pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let kept = cam.project_cloud(&cloud);
            let brute: Vec<(usize, PixelRange)> = cloud
                .iter()
                .enumerate()
                .filter_map(|(i, p)| cam.project_point(p).map(|pr| (i, pr)))
                .filter(|(_, pr)| pr.u >= 0.0 && pr.u < 64.0 && pr.v >= 0.0 && pr.v < 64.0)
                .collect();
            prop_assert_eq!(kept, brute);
        }

        #[test]
        fn median_is_permutation_invariant(
            ranges in proptest::collection::vec(0.0f64..20.0, 1..50), seed in 0u64..100
        ) {
            use rand::seq::SliceRandom;
            let mut items: Vec<(usize, PixelRange)> = ranges
                .iter()
                .enumerate()
                .map(|(i, &r)| (i, PixelRange { u: 1.0, v: 1.0, w: 1.0, range: r }))
                .collect();
            let b = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
            let before = bbox_median_range(&items, &b);
            items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(before, bbox_median_range(&items, &b));
        }

        #[test]
        fn column_increases_with_x(x in -2.0f64..2.0, dx in 1e-6f64..1.0, y in -1.0f64..1.0, z in 0.1f64..10.0) {
            let cam = test_cam();
            let a = cam.project_point(&Point3::new(x, y, z)).unwrap();
            let b = cam.project_point(&Point3::new(x + dx, y, z)).unwrap();
            prop_assert!(b.u > a.u);
        }
    }
}
