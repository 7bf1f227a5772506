//! Per-image feature files.
//!
//! JSON: `{"width", "height", "fx", "fy", "cx", "cy", "descriptor_dim",
//! "keypoints": [{"x", "y", "score", "descriptor": [...]}]}`.
//!
//! Binary (little-endian): magic `PGFEAT01`, `u32` keypoint count, `u32`
//! descriptor dimension, `u32` width, `u32` height, four `f64` intrinsics
//! (fx, fy, cx, cy), then per keypoint `f32` x, y, score and the descriptor.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ImageFeatures, MatchError};
use crate::geom::{CameraIntrinsics, Vec2};

const MAGIC: &[u8; 8] = b"PGFEAT01";

#[derive(Serialize, Deserialize)]
struct JsonKeypoint {
    x: f64,
    y: f64,
    score: f32,
    descriptor: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct JsonFeatures {
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    descriptor_dim: usize,
    keypoints: Vec<JsonKeypoint>,
}

pub fn write_features_json<W: Write>(features: &ImageFeatures, out: W) -> Result<(), MatchError> {
    let k = features.intrinsics;
    let doc = JsonFeatures {
        width: features.width,
        height: features.height,
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        descriptor_dim: features.descriptor_dim(),
        keypoints: (0..features.len())
            .map(|i| {
                let p = features.position(i);
                JsonKeypoint { x: p.x, y: p.y, score: features.score(i), descriptor: features.descriptor(i).to_vec() }
            })
            .collect(),
    };
    serde_json::to_writer(out, &doc).map_err(|e| MatchError::Format(e.to_string()))
}

pub fn read_features_json<R: Read>(input: R) -> Result<ImageFeatures, MatchError> {
    let doc: JsonFeatures = serde_json::from_reader(input).map_err(|e| MatchError::Format(e.to_string()))?;
    let k = CameraIntrinsics::new(doc.fx, doc.fy, doc.cx, doc.cy).map_err(|e| MatchError::Format(e.to_string()))?;
    let mut out = ImageFeatures::new(doc.width, doc.height, k, doc.descriptor_dim);
    for kp in doc.keypoints {
        out.push(Vec2::new(kp.x, kp.y), kp.score, &kp.descriptor)?;
    }
    Ok(out)
}

pub fn write_features_binary<W: Write>(features: &ImageFeatures, mut out: W) -> Result<(), MatchError> {
    out.write_all(MAGIC)?;
    for v in [features.len() as u32, features.descriptor_dim() as u32, features.width, features.height] {
        out.write_all(&v.to_le_bytes())?;
    }
    let k = features.intrinsics;
    for v in [k.fx, k.fy, k.cx, k.cy] {
        out.write_all(&v.to_le_bytes())?;
    }
    for i in 0..features.len() {
        let p = features.position(i);
        for v in [p.x as f32, p.y as f32, features.score(i)] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in features.descriptor(i) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, MatchError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32, MatchError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, MatchError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Positions are stored as `f32`, so they come back rounded to single precision.
pub fn read_features_binary<R: Read>(mut input: R) -> Result<ImageFeatures, MatchError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MatchError::Format("bad magic".into()));
    }
    let n = read_u32(&mut input)? as usize;
    let dim = read_u32(&mut input)? as usize;
    let width = read_u32(&mut input)?;
    let height = read_u32(&mut input)?;
    let (fx, fy, cx, cy) = (read_f64(&mut input)?, read_f64(&mut input)?, read_f64(&mut input)?, read_f64(&mut input)?);
    let k = CameraIntrinsics::new(fx, fy, cx, cy).map_err(|e| MatchError::Format(e.to_string()))?;
    let mut out = ImageFeatures::new(width, height, k, dim);
    let mut desc = vec![0.0f32; dim];
    for _ in 0..n {
        let x = read_f32(&mut input)?;
        let y = read_f32(&mut input)?;
        let score = read_f32(&mut input)?;
        for d in desc.iter_mut() {
            *d = read_f32(&mut input)?;
        }
        out.push(Vec2::new(f64::from(x), f64::from(y)), score, &desc)?;
    }
    Ok(out)
}
