//! Synthetic multi-view scenes with exact ground truth.
//!
//! Cameras sit on a horizontal ring (or arc) around a textured cylinder and
//! look at its axis. World `y` points down, matching the camera frame, and a
//! camera maps world points by `x_cam = R (X - C)`. A surface point is seen
//! when it is in the frustum and its outward normal is within
//! `max_view_angle_deg` of the direction to the camera; each such point is
//! detected with `detection_probability`. Every image also receives
//! distractor keypoints at random positions whose descriptors are noisy
//! copies of random scene points.

use std::collections::HashMap;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CameraIntrinsics, RelativePose, Rotation, Vec2, Vec3};
use crate::matcher::ImageFeatures;
use crate::posegraph::ViewId;
use crate::similarity::{similarity_from_visibility, SimilarityMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene configuration: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Ring,
    /// Cameras spread evenly over an arc of `span_deg` degrees, endpoints included.
    Arc { span_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    pub n_cameras: usize,
    pub n_points: usize,
    pub noise_px: f64,
    /// Fraction of distractor keypoints per image, and of spurious pairs in
    /// [`SyntheticScene::tentative_correspondences`].
    pub outlier_fraction: f64,
    pub descriptor_dim: usize,
    pub layout: Layout,
    pub ring_radius: f64,
    pub object_radius: f64,
    pub object_height: f64,
    /// Radial jitter of the surface points.
    pub surface_jitter: f64,
    pub max_view_angle_deg: f64,
    pub detection_probability: f64,
    /// Norm of the noise added to a point's descriptor at each observation.
    pub descriptor_noise: f64,
    /// Random offset of each camera's ring angle, as a fraction of the spacing.
    pub spacing_jitter: f64,
    pub focal_px: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_cameras: 30,
            n_points: 5500,
            noise_px: 1.0,
            outlier_fraction: 0.2,
            descriptor_dim: 64,
            layout: Layout::Ring,
            ring_radius: 10.0,
            object_radius: 4.0,
            object_height: 6.0,
            surface_jitter: 0.3,
            max_view_angle_deg: 85.0,
            detection_probability: 0.9,
            descriptor_noise: 0.3,
            spacing_jitter: 0.0,
            focal_px: 800.0,
            image_width: 1280,
            image_height: 960,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::ConfigInvalid(m.into()));
        if self.n_cameras < 2 || self.n_points == 0 || self.descriptor_dim == 0 {
            return bad("need at least two cameras, one point and a positive descriptor dimension");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must lie in [0, 1)");
        }
        if !(self.noise_px >= 0.0 && self.descriptor_noise >= 0.0 && self.surface_jitter >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.detection_probability) || !(0.0..1.0).contains(&self.spacing_jitter) {
            return bad("detection_probability must lie in [0, 1] and spacing_jitter in [0, 1)");
        }
        if !(self.object_radius > 0.0 && self.ring_radius > self.object_radius + self.surface_jitter) {
            return bad("cameras must sit outside the object");
        }
        if self.focal_px <= 0.0 || self.image_width == 0 || self.image_height == 0 {
            return bad("camera geometry must be positive");
        }
        if let Layout::Arc { span_deg } = self.layout {
            if !(span_deg > 0.0 && span_deg <= 360.0) {
                return bad("arc span must lie in (0, 360]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub rotation: Rotation,
    pub center: Vec3,
    pub intrinsics: CameraIntrinsics,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Camera at `center` looking horizontally at the vertical axis through `target`.
    fn looking_at(center: Vec3, target: Vec3, intrinsics: CameraIntrinsics, width: u32, height: u32) -> Self {
        let mut forward = target - center;
        forward.y = 0.0;
        let forward = forward.normalize();
        let down = Vec3::y();
        let right = down.cross(&forward);
        let m = crate::geom::Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self { rotation: Rotation::from_matrix_unchecked(m), center, intrinsics, width, height }
    }

    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation * (x - self.center)
    }

    /// Pixel of a world point if it is in front of the camera and inside the image.
    pub fn project(&self, x: &Vec3) -> Option<Vec2> {
        let p = self.intrinsics.project(&self.to_camera(x))?;
        self.in_image(&p).then_some(p)
    }

    pub fn in_image(&self, p: &Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < f64::from(self.width) && p.y < f64::from(self.height)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub cameras: Vec<Camera>,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub features: Vec<ImageFeatures>,
    /// Scene point behind each keypoint; `None` for distractors.
    pub point_of: Vec<Vec<Option<u32>>>,
    keypoint_of: Vec<HashMap<u32, u32>>,
}

fn unit_descriptor(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

fn observe_descriptor(rng: &mut ChaCha8Rng, base: &[f64], noise: f64) -> Vec<f32> {
    let s = noise / (base.len() as f64).sqrt();
    let v: Vec<f64> = base.iter().map(|b| b + s * rng.sample::<f64, _>(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| (x / n) as f32).collect()
}

/// Keypoint files store single-precision positions.
fn quantize(p: Vec2) -> Vec2 {
    p.map(|x| f64::from(x as f32))
}

/// Builds a scene; identical configurations give identical scenes.
pub fn generate(config: &SceneConfig) -> Result<SyntheticScene, SceneError> {
    config.validate()?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let k = CameraIntrinsics::new(c.focal_px, c.focal_px, f64::from(c.image_width) / 2.0, f64::from(c.image_height) / 2.0)
        .map_err(|e| SceneError::ConfigInvalid(e.to_string()))?;

    let (first, step) = match c.layout {
        Layout::Ring => (0.0, TAU / c.n_cameras as f64),
        Layout::Arc { span_deg } => (0.0, span_deg.to_radians() / (c.n_cameras - 1) as f64),
    };
    let cameras: Vec<Camera> = (0..c.n_cameras)
        .map(|i| {
            let jitter = if c.spacing_jitter > 0.0 { rng.gen_range(-1.0..1.0) * c.spacing_jitter * step } else { 0.0 };
            let phi = first + step * i as f64 + jitter;
            let center = Vec3::new(c.ring_radius * phi.cos(), 0.0, c.ring_radius * phi.sin());
            Camera::looking_at(center, Vec3::zeros(), k, c.image_width, c.image_height)
        })
        .collect();

    let mut points = Vec::with_capacity(c.n_points);
    let mut normals = Vec::with_capacity(c.n_points);
    for _ in 0..c.n_points {
        let psi = rng.gen_range(0.0..TAU);
        let r = c.object_radius + if c.surface_jitter > 0.0 { rng.gen_range(-c.surface_jitter..c.surface_jitter) } else { 0.0 };
        let y = rng.gen_range(-c.object_height / 2.0..c.object_height / 2.0);
        points.push(Vec3::new(r * psi.cos(), y, r * psi.sin()));
        normals.push(Vec3::new(psi.cos(), 0.0, psi.sin()));
    }
    let bases: Vec<Vec<f64>> = (0..c.n_points).map(|_| unit_descriptor(&mut rng, c.descriptor_dim)).collect();

    let cos_limit = c.max_view_angle_deg.to_radians().cos();
    let gauss = rand_distr::Normal::new(0.0, c.noise_px.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut features = Vec::with_capacity(c.n_cameras);
    let mut point_of = Vec::with_capacity(c.n_cameras);
    let mut keypoint_of = Vec::with_capacity(c.n_cameras);
    for cam in &cameras {
        let mut entries: Vec<(Vec2, Option<u32>, Vec<f32>)> = Vec::new();
        for (pid, (x, n)) in points.iter().zip(&normals).enumerate() {
            let to_cam = (cam.center - x).normalize();
            if n.dot(&to_cam) < cos_limit || cam.project(x).is_none() {
                continue;
            }
            if !rng.gen_bool(c.detection_probability) {
                continue;
            }
            let clean = cam.project(x).expect("checked above");
            let noisy = if c.noise_px > 0.0 { clean + Vec2::new(gauss.sample(&mut rng), gauss.sample(&mut rng)) } else { clean };
            if !cam.in_image(&noisy) {
                continue;
            }
            entries.push((quantize(noisy), Some(pid as u32), observe_descriptor(&mut rng, &bases[pid], c.descriptor_noise)));
        }
        let distractors = (c.outlier_fraction / (1.0 - c.outlier_fraction) * entries.len() as f64).round() as usize;
        for _ in 0..distractors {
            let pos = Vec2::new(rng.gen_range(0.0..f64::from(c.image_width)), rng.gen_range(0.0..f64::from(c.image_height)));
            let source = rng.gen_range(0..c.n_points);
            entries.push((quantize(pos), None, observe_descriptor(&mut rng, &bases[source], c.descriptor_noise)));
        }
        entries.shuffle(&mut rng);
        let mut feats = ImageFeatures::new(c.image_width, c.image_height, k, c.descriptor_dim);
        let mut owners = Vec::with_capacity(entries.len());
        let mut lookup = HashMap::new();
        for (pos, pid, desc) in entries {
            let kp = feats.push(pos, 1.0, &desc).expect("uniform dimension");
            if let Some(p) = pid {
                lookup.insert(p, kp);
            }
            owners.push(pid);
        }
        features.push(feats);
        point_of.push(owners);
        keypoint_of.push(lookup);
    }

    Ok(SyntheticScene { config: c.clone(), cameras, points, normals, features, point_of, keypoint_of })
}

impl SyntheticScene {
    pub fn view_count(&self) -> usize {
        self.cameras.len()
    }

    /// Exact relative pose from view `i` to view `j`, unit translation.
    pub fn ground_truth_pose(&self, i: ViewId, j: ViewId) -> RelativePose {
        if i == j {
            return RelativePose::identity();
        }
        let (a, b) = (&self.cameras[i.index()], &self.cameras[j.index()]);
        RelativePose::new(b.rotation * a.rotation.inverse(), b.rotation * (a.center - b.center))
    }

    /// Keypoint of view `v` observing scene point `point`.
    pub fn keypoint_of(&self, v: ViewId, point: u32) -> Option<u32> {
        self.keypoint_of[v.index()].get(&point).copied()
    }

    /// Keypoint pairs `(kp_i, kp_j)` observing the same scene point, ordered by `kp_i`.
    pub fn ground_truth_inliers(&self, i: ViewId, j: ViewId) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = self.point_of[i.index()]
            .iter()
            .enumerate()
            .filter_map(|(kp, p)| Some((kp as u32, self.keypoint_of(j, (*p)?)?)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_true_match(&self, i: ViewId, kp_i: u32, j: ViewId, kp_j: u32) -> bool {
        match (self.point_of[i.index()][kp_i as usize], self.point_of[j.index()][kp_j as usize]) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    /// Sorted ids of the points detected in each view.
    pub fn visible_points(&self) -> Vec<Vec<u32>> {
        self.point_of
            .iter()
            .map(|owners| {
                let mut v: Vec<u32> = owners.iter().flatten().copied().collect();
                v.sort_unstable();
                v
            })
            .collect()
    }

    /// Co-visibility similarity of the detected points.
    pub fn similarity(&self) -> SimilarityMatrix {
        similarity_from_visibility(&self.visible_points())
    }

    /// Unit-normalized visibility indicators, one per view; their inner
    /// products reproduce [`SyntheticScene::similarity`].
    pub fn global_descriptors(&self) -> Vec<Vec<f32>> {
        self.visible_points()
            .iter()
            .map(|pts| {
                let mut d = vec![0.0f32; self.points.len()];
                let w = if pts.is_empty() { 0.0 } else { 1.0 / (pts.len() as f64).sqrt() };
                for &p in pts {
                    d[p as usize] = w as f32;
                }
                d
            })
            .collect()
    }

    /// The ground-truth pairs of `(i, j)` mixed with uniformly random
    /// spurious pairs, so that `outlier_fraction` of the result is wrong.
    /// Returns the pairs and their inlier labels, shuffled.
    pub fn tentative_correspondences(&self, i: ViewId, j: ViewId, seed: u64) -> (Vec<(u32, u32)>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inliers = self.ground_truth_inliers(i, j);
        let f = self.config.outlier_fraction;
        let wanted = (f / (1.0 - f) * inliers.len() as f64).round() as usize;
        let (ni, nj) = (self.features[i.index()].len() as u32, self.features[j.index()].len() as u32);
        let mut all: Vec<((u32, u32), bool)> = inliers.into_iter().map(|p| (p, true)).collect();
        let mut added = 0;
        while added < wanted && ni > 0 && nj > 0 {
            let (a, b) = (rng.gen_range(0..ni), rng.gen_range(0..nj));
            if !self.is_true_match(i, a, j, b) {
                all.push(((a, b), false));
                added += 1;
            }
        }
        all.shuffle(&mut rng);
        all.into_iter().unzip()
    }

    /// Pixel positions of keypoint pairs.
    pub fn pixel_pairs(&self, i: ViewId, j: ViewId, pairs: &[(u32, u32)]) -> Vec<(Vec2, Vec2)> {
        let (a, b) = (&self.features[i.index()], &self.features[j.index()]);
        pairs.iter().map(|&(p, q)| (a.position(p as usize), b.position(q as usize))).collect()
    }
}
