//! Scene directories: `scene_<seed>/meta.json` plus `scene_<seed>/frames.bin`.
//!
//! `frames.bin` holds every frame's pixels as little-endian `f32`,
//! frame-major then row-major. `meta.json` carries everything else and the
//! SHA-256 of `frames.bin`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Frame, PedestrianState, Raster, SceneLog, SimConfig};
use crate::geometry::{BBox, CameraModel, Point3};
use crate::{Error, Result};

pub const SCENE_FORMAT_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const FRAMES_FILE: &str = "frames.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneMeta {
    pub format_version: u32,
    pub scene_id: u64,
    pub config: SimConfig,
    pub camera: CameraModel,
    pub n_frames: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub frames_sha256: String,
    pub frames: Vec<FrameMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMeta {
    pub index: usize,
    pub timestamp: f64,
    pub pedestrians: Vec<PedestrianState>,
    pub boxes: Vec<BoxRecord>,
    /// `x0, y0, z0, x1, ...` in meters.
    pub cloud: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxRecord {
    pub id: u32,
    pub u_min: i64,
    pub v_min: i64,
    pub u_max: i64,
    pub v_max: i64,
}

pub fn scene_dir_name(scene_id: u64) -> String {
    format!("scene_{scene_id}")
}

fn encode_frames(scene: &SceneLog) -> Vec<u8> {
    let mut bytes = Vec::new();
    for frame in &scene.frames {
        for px in &frame.image.data {
            bytes.extend_from_slice(&px.to_le_bytes());
        }
    }
    bytes
}

/// Writes `scene` under `root` and returns the scene directory.
pub fn write_scene(root: impl AsRef<Path>, scene: &SceneLog) -> Result<PathBuf> {
    let dir = root.as_ref().join(scene_dir_name(scene.id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let pixels = encode_frames(scene);
    let frames = scene
        .frames
        .iter()
        .map(|f| FrameMeta {
            index: f.index,
            timestamp: f.timestamp,
            pedestrians: f.pedestrians.clone(),
            boxes: f
                .boxes
                .iter()
                .map(|(id, b)| BoxRecord {
                    id: *id,
                    u_min: b.u_min as i64,
                    v_min: b.v_min as i64,
                    u_max: b.u_max as i64,
                    v_max: b.v_max as i64,
                })
                .collect(),
            cloud: f.cloud.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
        })
        .collect();
    let [image_width, image_height] = scene.config.image_size;
    let meta = SceneMeta {
        format_version: SCENE_FORMAT_VERSION,
        scene_id: scene.id(),
        config: scene.config.clone(),
        camera: scene.camera.clone(),
        n_frames: scene.frames.len(),
        image_width,
        image_height,
        frames_sha256: hex::encode(Sha256::digest(&pixels)),
        frames,
    };

    let frames_path = dir.join(FRAMES_FILE);
    std::fs::write(&frames_path, &pixels).map_err(|e| Error::io(&frames_path, e))?;
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_vec(&meta).expect("scene metadata serializes");
    std::fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    Ok(dir)
}

pub fn read_meta(dir: impl AsRef<Path>) -> Result<SceneMeta> {
    let path = dir.as_ref().join(META_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let meta: SceneMeta =
        serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if meta.format_version != SCENE_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported scene format version {}",
            path.display(),
            meta.format_version
        )));
    }
    Ok(meta)
}

/// Loads a scene directory, verifying the pixel payload's length and hash.
pub fn read_scene(dir: impl AsRef<Path>) -> Result<SceneLog> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    let frames_path = dir.join(FRAMES_FILE);
    let pixels = std::fs::read(&frames_path).map_err(|e| Error::io(&frames_path, e))?;
    let frame_len = meta.image_width as usize * meta.image_height as usize;
    if pixels.len() != meta.n_frames * frame_len * 4 || meta.frames.len() != meta.n_frames {
        return Err(Error::Format(format!(
            "{}: expected {} frames of {}x{} pixels",
            frames_path.display(),
            meta.n_frames,
            meta.image_width,
            meta.image_height
        )));
    }
    if hex::encode(Sha256::digest(&pixels)) != meta.frames_sha256 {
        return Err(Error::Format(format!("{}: content hash mismatch", frames_path.display())));
    }

    let frames = meta
        .frames
        .into_iter()
        .zip(pixels.chunks_exact(frame_len * 4))
        .map(|(fm, raw)| {
            if fm.cloud.len() % 3 != 0 {
                return Err(Error::Format(format!("frame {}: cloud length not a multiple of 3", fm.index)));
            }
            let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            Ok(Frame {
                index: fm.index,
                timestamp: fm.timestamp,
                pedestrians: fm.pedestrians,
                cloud: fm.cloud.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect(),
                image: Raster { width: meta.image_width, height: meta.image_height, data },
                boxes: fm
                    .boxes
                    .iter()
                    .map(|b| (b.id, BBox::new(b.u_min as f64, b.v_min as f64, b.u_max as f64, b.v_max as f64)))
                    .map(|(id, b)| b.map(|b| (id, b)))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if frames.iter().enumerate().any(|(i, f)| f.index != i) {
        return Err(Error::Format("frame indices are not consecutive from 0".into()));
    }
    Ok(SceneLog { config: meta.config, camera: meta.camera, frames })
}
