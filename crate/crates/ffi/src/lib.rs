//! C ABI over the `ttnc` library.
//!
//! Every function returns a [`TtncStatus`]; results go through out-pointers.
//! On failure the message is available from [`ttnc_last_error`] on the same
//! thread. Handles are opaque, created by `*_new`/`*_load`/`*_simulate` and
//! released with the matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{Matrix3, Vector3};
use ttnc::annotate::{label_frames, time_to_near_collision, HORIZON_FRAMES};
use ttnc::baselines::time_to_radius;
use ttnc::eval::{classification_metrics, ConfusionMatrix};
use ttnc::geometry::{CameraModel, Point3};
use ttnc::neural::{load_checkpoint, Network, Output};
use ttnc::scenesim::{simulate_scene, SceneLog, SimConfig};
use ttnc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtncStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Training = 6,
    /// The call succeeded but there is no value (e.g. no collision).
    NoResult = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Calibrated pinhole camera.
pub struct TtncCamera(CameraModel);
/// Simulated scene with rendered frames.
pub struct TtncScene(SceneLog);
/// Trained forecaster loaded from a checkpoint.
pub struct TtncNetwork(Network);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("NULs removed"));
}

fn status_of(e: &Error) -> TtncStatus {
    match e {
        Error::Config(_) | Error::Camera(_) | Error::InsufficientHistory(_) | Error::Fit(_) => {
            TtncStatus::InvalidArgument
        }
        Error::Shape(_) => TtncStatus::Shape,
        Error::Training { .. } => TtncStatus::Training,
        Error::Format(_) => TtncStatus::Format,
        Error::Io { .. } => TtncStatus::Io,
    }
}

fn fail(status: TtncStatus, msg: impl Into<String>) -> TtncStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<TtncStatus, TtncStatus>) -> TtncStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) | Ok(Err(s)) => s,
        Err(_) => fail(TtncStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, TtncStatus>;
}

impl<T> OrStatus<T> for ttnc::Result<T> {
    fn or_status(self) -> Result<T, TtncStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, TtncStatus> {
    // SAFETY: the caller promises `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| fail(TtncStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, TtncStatus> {
    // SAFETY: the caller promises `p` is null or valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| fail(TtncStatus::NullPointer, format!("{what} is null")))
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ttnc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a camera. `rotation` is 9 row-major values, `translation` 3.
///
/// # Safety
/// `rotation` and `translation` must point to 9 and 3 readable doubles;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ttnc_camera_new(
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    skew: f64,
    rotation: *const f64,
    translation: *const f64,
    width: u32,
    height: u32,
    out: *mut *mut TtncCamera,
) -> TtncStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        if rotation.is_null() || translation.is_null() {
            return Err(fail(TtncStatus::NullPointer, "rotation or translation is null"));
        }
        // SAFETY: lengths are part of the documented contract.
        let (r, t) = unsafe { (std::slice::from_raw_parts(rotation, 9), std::slice::from_raw_parts(translation, 3)) };
        let cam = CameraModel::new(
            fx,
            fy,
            cx,
            cy,
            skew,
            Matrix3::from_row_slice(r),
            Vector3::from_column_slice(t),
            width,
            height,
        )
        .or_status()?;
        *out = Box::into_raw(Box::new(TtncCamera(cam)));
        Ok(TtncStatus::Ok)
    })
}

/// # Safety
/// `cam` must come from [`ttnc_camera_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ttnc_camera_free(cam: *mut TtncCamera) {
    if !cam.is_null() {
        // SAFETY: created by Box::into_raw in ttnc_camera_new.
        drop(unsafe { Box::from_raw(cam) });
    }
}

/// Projects a sensor-frame point. Returns `NoResult` for points at or
/// behind the image plane. `in_image` may be null.
///
/// # Safety
/// Pointers must be valid; `in_image` may be null.
#[no_mangle]
pub unsafe extern "C" fn ttnc_camera_project(
    cam: *const TtncCamera,
    x: f64,
    y: f64,
    z: f64,
    u: *mut f64,
    v: *mut f64,
    range: *mut f64,
    in_image: *mut bool,
) -> TtncStatus {
    guard(|| {
        let cam = &unsafe { deref(cam, "camera") }?.0;
        let (u, v, range) = unsafe { (out_ref(u, "u")?, out_ref(v, "v")?, out_ref(range, "range")?) };
        let Some(pr) = cam.project_point(&Point3 { x, y, z }) else {
            return Ok(TtncStatus::NoResult);
        };
        (*u, *v, *range) = (pr.u, pr.v, pr.range);
        if let Some(flag) = unsafe { in_image.as_mut() } {
            *flag = cam.in_image(pr.u, pr.v);
        }
        Ok(TtncStatus::Ok)
    })
}

/// Simulates one scene with default settings apart from the arguments.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ttnc_scene_simulate(
    seed: u64,
    n_pedestrians: u32,
    image_size: u32,
    out: *mut *mut TtncScene,
) -> TtncStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        let cfg = SimConfig {
            seed,
            n_pedestrians: n_pedestrians as usize,
            image_size: [image_size, image_size],
            ..SimConfig::default()
        };
        let scene = simulate_scene(&cfg).or_status()?;
        *out = Box::into_raw(Box::new(TtncScene(scene)));
        Ok(TtncStatus::Ok)
    })
}

/// # Safety
/// `scene` must come from [`ttnc_scene_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ttnc_scene_free(scene: *mut TtncScene) {
    if !scene.is_null() {
        // SAFETY: created by Box::into_raw in ttnc_scene_simulate.
        drop(unsafe { Box::from_raw(scene) });
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ttnc_scene_frame_count(scene: *const TtncScene, out: *mut usize) -> TtncStatus {
    guard(|| {
        let scene = &unsafe { deref(scene, "scene") }?.0;
        *unsafe { out_ref(out, "out") }? = scene.frames.len();
        Ok(TtncStatus::Ok)
    })
}

/// Copies frame `index` (row-major, `width·height` floats) into `buf`.
/// With a null `buf` only the dimensions are written.
///
/// # Safety
/// `buf` must be null or hold `len` writable floats; `width`/`height` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn ttnc_scene_image(
    scene: *const TtncScene,
    index: usize,
    buf: *mut f32,
    len: usize,
    width: *mut u32,
    height: *mut u32,
) -> TtncStatus {
    guard(|| {
        let scene = &unsafe { deref(scene, "scene") }?.0;
        let frame = scene
            .frames
            .get(index)
            .ok_or_else(|| fail(TtncStatus::InvalidArgument, format!("frame {index} out of range")))?;
        let img = &frame.image;
        unsafe {
            *out_ref(width, "width")? = img.width;
            *out_ref(height, "height")? = img.height;
        }
        if buf.is_null() {
            return Ok(TtncStatus::Ok);
        }
        if len < img.data.len() {
            return Err(fail(TtncStatus::BufferTooSmall, format!("need {} floats, got {len}", img.data.len())));
        }
        // SAFETY: `buf` holds at least `len ≥ data.len()` floats.
        unsafe { ptr::copy_nonoverlapping(img.data.as_ptr(), buf, img.data.len()) };
        Ok(TtncStatus::Ok)
    })
}

/// Writes one near-collision flag (0/1) per frame into `out`.
///
/// # Safety
/// `out` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ttnc_scene_labels(
    scene: *const TtncScene,
    radius: f64,
    out: *mut u8,
    len: usize,
) -> TtncStatus {
    guard(|| {
        let scene = &unsafe { deref(scene, "scene") }?.0;
        if out.is_null() {
            return Err(fail(TtncStatus::NullPointer, "out is null"));
        }
        if len < scene.frames.len() {
            return Err(fail(TtncStatus::BufferTooSmall, format!("need {} bytes, got {len}", scene.frames.len())));
        }
        let labels = label_frames(scene, radius);
        // SAFETY: `out` holds at least `len` bytes.
        let out = unsafe { std::slice::from_raw_parts_mut(out, labels.len()) };
        for (o, &l) in out.iter_mut().zip(&labels.near_collision) {
            *o = u8::from(l);
        }
        Ok(TtncStatus::Ok)
    })
}

/// Time to near-collision (seconds) after frame `index` within the 6 s
/// horizon; `NoResult` if none.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ttnc_scene_time_to_collision(
    scene: *const TtncScene,
    radius: f64,
    index: usize,
    out: *mut f64,
) -> TtncStatus {
    guard(|| {
        let scene = &unsafe { deref(scene, "scene") }?.0;
        let out = unsafe { out_ref(out, "out") }?;
        if index >= scene.frames.len() {
            return Err(fail(TtncStatus::InvalidArgument, format!("frame {index} out of range")));
        }
        match time_to_near_collision(&label_frames(scene, radius), index, HORIZON_FRAMES) {
            Some(t) => {
                *out = t;
                Ok(TtncStatus::Ok)
            }
            None => Ok(TtncStatus::NoResult),
        }
    })
}

/// First time a point at `(px, py)` moving with `(vx, vy)` comes within
/// `radius` of the origin, up to `horizon` seconds; `NoResult` if never.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ttnc_time_to_radius(
    px: f64,
    py: f64,
    vx: f64,
    vy: f64,
    radius: f64,
    horizon: f64,
    out: *mut f64,
) -> TtncStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        match time_to_radius([px, py], [vx, vy], radius, horizon) {
            Some(t) => {
                *out = t;
                Ok(TtncStatus::Ok)
            }
            None => Ok(TtncStatus::NoResult),
        }
    })
}

/// F1 score of a confusion matrix; `NoResult` when undefined.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ttnc_f1_score(tp: u64, fn_: u64, fp: u64, tn: u64, out: *mut f64) -> TtncStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        match classification_metrics(&ConfusionMatrix { tp, fn_, fp, tn }).f1 {
            Some(f1) => {
                *out = f1;
                Ok(TtncStatus::Ok)
            }
            None => Ok(TtncStatus::NoResult),
        }
    })
}

/// Loads a checkpoint written by `ttnc train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ttnc_network_load(path: *const c_char, out: *mut *mut TtncNetwork) -> TtncStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(fail(TtncStatus::NullPointer, "path is null"));
        }
        // SAFETY: NUL-terminated per contract.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| fail(TtncStatus::InvalidArgument, "path is not UTF-8"))?;
        let net = load_checkpoint(path).or_status()?;
        *out = Box::into_raw(Box::new(TtncNetwork(net)));
        Ok(TtncStatus::Ok)
    })
}

/// # Safety
/// `net` must come from [`ttnc_network_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ttnc_network_free(net: *mut TtncNetwork) {
    if !net.is_null() {
        // SAFETY: created by Box::into_raw in ttnc_network_load.
        drop(unsafe { Box::from_raw(net) });
    }
}

/// Window length, frame size and number of outputs.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ttnc_network_shape(
    net: *const TtncNetwork,
    n_frames: *mut usize,
    height: *mut usize,
    width: *mut usize,
    outputs: *mut usize,
) -> TtncStatus {
    guard(|| {
        let cfg = unsafe { deref(net, "network") }?.0.config();
        unsafe {
            *out_ref(n_frames, "n_frames")? = cfg.n_frames;
            *out_ref(height, "height")? = cfg.input[1];
            *out_ref(width, "width")? = cfg.input[2];
            *out_ref(outputs, "outputs")? = cfg.head.outputs();
        }
        Ok(TtncStatus::Ok)
    })
}

/// Runs the network on `n_frames` consecutive frames (oldest first) packed
/// in `frames`. Writes the clamped time, the two class probabilities or the
/// four sigmoid activations to `out`.
///
/// # Safety
/// `frames` must hold `frames_len` floats and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ttnc_network_predict(
    net: *const TtncNetwork,
    frames: *const f32,
    frames_len: usize,
    out: *mut f64,
    out_len: usize,
) -> TtncStatus {
    guard(|| {
        let net = &unsafe { deref(net, "network") }?.0;
        if frames.is_null() || out.is_null() {
            return Err(fail(TtncStatus::NullPointer, "frames or out is null"));
        }
        let cfg = net.config();
        let frame_len: usize = cfg.input.iter().product();
        if frames_len != frame_len * cfg.n_frames {
            return Err(fail(
                TtncStatus::Shape,
                format!("expected {} floats ({} frames), got {frames_len}", frame_len * cfg.n_frames, cfg.n_frames),
            ));
        }
        if out_len < cfg.head.outputs() {
            return Err(fail(TtncStatus::BufferTooSmall, format!("need {} outputs", cfg.head.outputs())));
        }
        // SAFETY: lengths checked against the documented contract.
        let data = unsafe { std::slice::from_raw_parts(frames, frames_len) };
        let window: Vec<&[f32]> = data.chunks_exact(frame_len).collect();
        let values: Vec<f64> = match net.forward(&window).or_status()? {
            Output::Time(t) => vec![t],
            Output::Binary(p) => p.to_vec(),
            Output::Multilabel(p) => p.to_vec(),
        };
        // SAFETY: `out` holds at least `out_len ≥ values.len()` doubles.
        unsafe { ptr::copy_nonoverlapping(values.as_ptr(), out, values.len()) };
        Ok(TtncStatus::Ok)
    })
}
