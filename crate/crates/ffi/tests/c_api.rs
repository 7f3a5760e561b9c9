use std::ffi::{CStr, CString};
use std::ptr;

use ttnc::neural::{save_checkpoint, HeadKind, Network, NetworkConfig};
use ttnc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ttnc_last_error()) }.to_string_lossy().into_owned()
}

const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

#[test]
fn camera_projection() {
    let mut cam = ptr::null_mut();
    let t = [0.0; 3];
    let s = unsafe { ttnc_camera_new(500.0, 500.0, 320.0, 240.0, 0.0, IDENTITY.as_ptr(), t.as_ptr(), 640, 480, &mut cam) };
    assert_eq!(s, TtncStatus::Ok);
    let (mut u, mut v, mut r, mut inside) = (0.0, 0.0, 0.0, false);
    let s = unsafe { ttnc_camera_project(cam, 0.0, 0.0, 5.0, &mut u, &mut v, &mut r, &mut inside) };
    assert_eq!(s, TtncStatus::Ok);
    assert_eq!((u, v, r, inside), (320.0, 240.0, 5.0, true));
    let s = unsafe { ttnc_camera_project(cam, 0.0, 0.0, -1.0, &mut u, &mut v, &mut r, ptr::null_mut()) };
    assert_eq!(s, TtncStatus::NoResult);
    unsafe { ttnc_camera_free(cam) };
}

#[test]
fn bad_camera_reports_error() {
    let mut cam = ptr::null_mut();
    let skewed = [1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let t = [0.0; 3];
    let s = unsafe { ttnc_camera_new(500.0, 500.0, 320.0, 240.0, 0.0, skewed.as_ptr(), t.as_ptr(), 640, 480, &mut cam) };
    assert_eq!(s, TtncStatus::InvalidArgument);
    assert!(cam.is_null());
    assert!(last_error().contains("orthonormal"), "{}", last_error());
    let s = unsafe { ttnc_camera_new(500.0, 500.0, 0.0, 0.0, 0.0, ptr::null(), t.as_ptr(), 1, 1, &mut cam) };
    assert_eq!(s, TtncStatus::NullPointer);
}

#[test]
fn scene_round_trip() {
    let mut scene = ptr::null_mut();
    assert_eq!(unsafe { ttnc_scene_simulate(7, 2, 32, &mut scene) }, TtncStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { ttnc_scene_frame_count(scene, &mut n) }, TtncStatus::Ok);
    assert_eq!(n, 120);
    let (mut w, mut h) = (0, 0);
    assert_eq!(unsafe { ttnc_scene_image(scene, 0, ptr::null_mut(), 0, &mut w, &mut h) }, TtncStatus::Ok);
    assert_eq!((w, h), (32, 32));
    let mut small = vec![0f32; 10];
    let s = unsafe { ttnc_scene_image(scene, 0, small.as_mut_ptr(), small.len(), &mut w, &mut h) };
    assert_eq!(s, TtncStatus::BufferTooSmall);
    let mut img = vec![0f32; 1024];
    assert_eq!(unsafe { ttnc_scene_image(scene, 3, img.as_mut_ptr(), img.len(), &mut w, &mut h) }, TtncStatus::Ok);
    assert!(img.iter().all(|x| (0.0..=1.0).contains(x)));
    assert_eq!(unsafe { ttnc_scene_image(scene, 500, img.as_mut_ptr(), img.len(), &mut w, &mut h) }, TtncStatus::InvalidArgument);

    let mut labels = vec![0u8; n];
    assert_eq!(unsafe { ttnc_scene_labels(scene, 1.0, labels.as_mut_ptr(), n) }, TtncStatus::Ok);
    // the time to collision agrees with the label scan
    for k in 0..n {
        let mut t = 0.0;
        let s = unsafe { ttnc_scene_time_to_collision(scene, 1.0, k, &mut t) };
        let next = labels.iter().skip(k + 1).take(60).position(|&l| l == 1);
        match next {
            Some(off) => {
                assert_eq!(s, TtncStatus::Ok);
                assert!((t - (off + 1) as f64 / 10.0).abs() < 1e-12);
            }
            None => assert_eq!(s, TtncStatus::NoResult),
        }
    }
    unsafe { ttnc_scene_free(scene) };
}

#[test]
fn scalar_helpers() {
    let mut t = 0.0;
    assert_eq!(unsafe { ttnc_time_to_radius(0.0, 5.0, 0.0, -1.0, 1.0, 6.0, &mut t) }, TtncStatus::Ok);
    assert!((t - 4.0).abs() < 1e-12);
    assert_eq!(unsafe { ttnc_time_to_radius(0.0, 5.0, 0.0, 1.0, 1.0, 6.0, &mut t) }, TtncStatus::NoResult);
    let mut f1 = 0.0;
    assert_eq!(unsafe { ttnc_f1_score(634, 36, 53, 2840, &mut f1) }, TtncStatus::Ok);
    assert!((f1 - 0.9344).abs() < 1e-4);
    assert_eq!(unsafe { ttnc_f1_score(0, 0, 0, 9, &mut f1) }, TtncStatus::NoResult);
    assert_eq!(unsafe { ttnc_f1_score(1, 1, 1, 1, ptr::null_mut()) }, TtncStatus::NullPointer);
}

#[test]
fn network_predicts_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let net = Network::build(NetworkConfig::with_input(2, 16, 16, HeadKind::Binary), 3).unwrap();
    save_checkpoint(&net, &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { ttnc_network_load(cpath.as_ptr(), &mut handle) }, TtncStatus::Ok);
    let (mut n, mut h, mut w, mut o) = (0, 0, 0, 0);
    assert_eq!(unsafe { ttnc_network_shape(handle, &mut n, &mut h, &mut w, &mut o) }, TtncStatus::Ok);
    assert_eq!((n, h, w, o), (2, 16, 16, 2));
    let frames: Vec<f32> = (0..512).map(|i| (i % 17) as f32 / 17.0).collect();
    let mut out = [0.0; 2];
    assert_eq!(unsafe { ttnc_network_predict(handle, frames.as_ptr(), frames.len(), out.as_mut_ptr(), 2) }, TtncStatus::Ok);
    let ttnc::neural::Output::Binary(p) = net.forward(&[&frames[..256], &frames[256..]]).unwrap() else { panic!() };
    assert_eq!(out, p);
    let s = unsafe { ttnc_network_predict(handle, frames.as_ptr(), 300, out.as_mut_ptr(), 2) };
    assert_eq!(s, TtncStatus::Shape);
    unsafe { ttnc_network_free(handle) };

    let missing = CString::new("/nonexistent/net.ckpt").unwrap();
    assert_eq!(unsafe { ttnc_network_load(missing.as_ptr(), &mut handle) }, TtncStatus::Io);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ttnc.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["ttnc_camera_new", "ttnc_network_predict", "ttnc_last_error", "TTNC_STATUS_NO_RESULT"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler available; skipped compiling the header");
        return;
    };
    assert!(status.success());
}
