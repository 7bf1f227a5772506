//! C ABI for posegraph-core.
//!
//! Objects are opaque handles created by `pg_*_new`, `pg_*_generate` or
//! `pg_*_load` and released by the matching `pg_*_free`. Every fallible call
//! returns a `PgStatus`; on failure `pg_last_error_message` describes the
//! error until the next failing call on the same thread.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use posegraph_core::geom::{CameraIntrinsics, RelativePose, Vec2};
use posegraph_core::pipeline::{run_pipeline, Dataset, FileFormat, PairMethod, PipelineConfig, PipelineOutput};
use posegraph_core::robust::{estimate_pose_ransac, RansacConfig};
use posegraph_core::scene::{generate, Layout, SceneConfig, SyntheticScene};
use posegraph_core::ViewId;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    NoModel = 5,
    OutOfRange = 6,
    Panic = 7,
}

struct Failure(PgStatus, String);

impl Failure {
    fn new(status: PgStatus, message: impl ToString) -> Self {
        Self(status, message.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PgStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&message);
            PgStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(PgStatus::NullPointer, format!("{name} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(PgStatus::NullPointer, format!("{name} is null")))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(PgStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure::new(PgStatus::InvalidArgument, format!("{name}: {e}")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(PgStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let out = deref_mut(out, "out")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null.
#[no_mangle]
pub extern "C" fn pg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Relative pose `X_j = R X_i + t`; `rotation` is row-major, `translation` unit-norm.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PgPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&RelativePose> for PgPose {
    fn from(p: &RelativePose) -> Self {
        let r = p.rotation().matrix();
        let t = p.translation();
        Self {
            rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            translation: [t.x, t.y, t.z],
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PgEdge {
    pub source: u32,
    pub destination: u32,
    pub pose: PgPose,
    pub quality: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PgIntrinsics {
    fn to_core(self) -> Result<CameraIntrinsics, Failure> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy).map_err(|e| Failure::new(PgStatus::InvalidArgument, e))
    }
}

/// Synthetic scene parameters; `arc_span_deg <= 0` places the cameras on a full ring.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgSceneParams {
    pub seed: u64,
    pub n_cameras: usize,
    pub n_points: usize,
    pub noise_px: f64,
    pub outlier_fraction: f64,
    pub arc_span_deg: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PgSummary {
    pub pairs: usize,
    pub walk: usize,
    pub ransac_fallback: usize,
    pub skipped: usize,
    pub edges: usize,
    pub tracks: usize,
    pub walk_success_rate: f64,
}

pub struct PgScene(SyntheticScene);
pub struct PgDataset(Dataset);
pub struct PgConfig(PipelineConfig);
pub struct PgResult(PipelineOutput);

#[no_mangle]
pub extern "C" fn pg_scene_params_default() -> PgSceneParams {
    let d = SceneConfig::default();
    PgSceneParams {
        seed: d.seed,
        n_cameras: d.n_cameras,
        n_points: d.n_points,
        noise_px: d.noise_px,
        outlier_fraction: d.outlier_fraction,
        arc_span_deg: 0.0,
    }
}

#[no_mangle]
pub unsafe extern "C" fn pg_scene_generate(params: *const PgSceneParams, out: *mut *mut PgScene) -> PgStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let cfg = SceneConfig {
            seed: p.seed,
            n_cameras: p.n_cameras,
            n_points: p.n_points,
            noise_px: p.noise_px,
            outlier_fraction: p.outlier_fraction,
            layout: if p.arc_span_deg > 0.0 { Layout::Arc { span_deg: p.arc_span_deg } } else { Layout::Ring },
            ..SceneConfig::default()
        };
        let scene = generate(&cfg).map_err(|e| Failure::new(PgStatus::InvalidArgument, e))?;
        store(out, PgScene(scene))
    })
}

#[no_mangle]
pub unsafe extern "C" fn pg_scene_view_count(scene: *const PgScene) -> usize {
    scene.as_ref().map_or(0, |s| s.0.view_count())
}

#[no_mangle]
pub unsafe extern "C" fn pg_scene_ground_truth_pose(scene: *const PgScene, i: u32, j: u32, out: *mut PgPose) -> PgStatus {
    guard(|| {
        let s = &deref(scene, "scene")?.0;
        let n = s.view_count();
        if i as usize >= n || j as usize >= n || i == j {
            return Err(Failure::new(PgStatus::OutOfRange, format!("pair ({i}, {j}) with {n} views")));
        }
        *deref_mut(out, "out")? = PgPose::from(&s.ground_truth_pose(ViewId(i), ViewId(j)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pg_scene_free(scene: *mut PgScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

#[no_mangle]
pub unsafe extern "C" fn pg_dataset_from_scene(scene: *const PgScene, out: *mut *mut PgDataset) -> PgStatus {
    guard(|| {
        let s = &deref(scene, "scene")?.0;
        store(out, PgDataset(Dataset::from_scene(s)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn pg_dataset_load(dir: *const c_char, out: *mut *mut PgDataset) -> PgStatus {
    guard(|| {
        let dir = PathBuf::from(string(dir, "dir")?);
        let ds = Dataset::load_dir(&dir).map_err(|e| Failure::new(PgStatus::Io, e))?;
        store(out, PgDataset(ds))
    })
}

/// Writes the dataset into `dir`, as JSON when `json` is true and binary otherwise.
#[no_mangle]
pub unsafe extern "C" fn pg_dataset_write(dataset: *const PgDataset, dir: *const c_char, json: bool) -> PgStatus {
    guard(|| {
        let ds = &deref(dataset, "dataset")?.0;
        let dir = PathBuf::from(string(dir, "dir")?);
        let format = if json { FileFormat::Json } else { FileFormat::Binary };
        ds.write_dir(&dir, format).map_err(|e| Failure::new(PgStatus::Io, e))
    })
}

#[no_mangle]
pub unsafe extern "C" fn pg_dataset_view_count(dataset: *const PgDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.view_count())
}

#[no_mangle]
pub unsafe extern "C" fn pg_dataset_free(dataset: *mut PgDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Default pipeline configuration.
#[no_mangle]
pub extern "C" fn pg_config_new() -> *mut PgConfig {
    Box::into_raw(Box::new(PgConfig(PipelineConfig::default())))
}

/// Sets one key of the plain-text configuration format, e.g. `lambda` to `0.7`.
/// The configuration is left unchanged when the result would be invalid.
#[no_mangle]
pub unsafe extern "C" fn pg_config_set(config: *mut PgConfig, key: *const c_char, value: *const c_char) -> PgStatus {
    guard(|| {
        let c = &mut deref_mut(config, "config")?.0;
        let (key, value) = (string(key, "key")?, string(value, "value")?);
        let mut next = c.clone();
        next.set(key, value).map_err(|e| Failure::new(PgStatus::Config, e))?;
        next.validate().map_err(|e| Failure::new(PgStatus::Config, e))?;
        *c = next;
        Ok(())
    })
}

/// Applies a whole configuration text of `key = value` lines.
#[no_mangle]
pub unsafe extern "C" fn pg_config_apply_text(config: *mut PgConfig, text: *const c_char) -> PgStatus {
    guard(|| {
        let c = &mut deref_mut(config, "config")?.0;
        let mut next = c.clone();
        next.apply_text(string(text, "text")?).map_err(|e| Failure::new(PgStatus::Config, e))?;
        next.validate().map_err(|e| Failure::new(PgStatus::Config, e))?;
        *c = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pg_config_free(config: *mut PgConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

#[no_mangle]
pub unsafe extern "C" fn pg_build(dataset: *const PgDataset, config: *const PgConfig, out: *mut *mut PgResult) -> PgStatus {
    guard(|| {
        let ds = &deref(dataset, "dataset")?.0;
        let cfg = &deref(config, "config")?.0;
        let result = run_pipeline(ds, cfg).map_err(|e| Failure::new(PgStatus::Config, e))?;
        store(out, PgResult(result))
    })
}

#[no_mangle]
pub unsafe extern "C" fn pg_result_summary(result: *const PgResult, out: *mut PgSummary) -> PgStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        let rep = &r.report;
        *deref_mut(out, "out")? = PgSummary {
            pairs: rep.records.len(),
            walk: rep.count(PairMethod::Walk),
            ransac_fallback: rep.count(PairMethod::RansacFallback),
            skipped: rep.count(PairMethod::Skipped),
            edges: r.graph.edge_count(),
            tracks: r.tracks.track_count(),
            walk_success_rate: rep.walk_success_rate(),
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pg_result_edge(result: *const PgResult, index: usize, out: *mut PgEdge) -> PgStatus {
    guard(|| {
        let edges = deref(result, "result")?.0.graph.edges();
        let e = edges
            .get(index)
            .ok_or_else(|| Failure::new(PgStatus::OutOfRange, format!("edge {index} of {}", edges.len())))?;
        *deref_mut(out, "out")? =
            PgEdge { source: e.source.0, destination: e.destination.0, pose: PgPose::from(&e.pose), quality: e.quality };
        Ok(())
    })
}

/// Writes the pose-graph, the tracks and the CSV reports into `dir`.
#[no_mangle]
pub unsafe extern "C" fn pg_result_write(result: *const PgResult, dir: *const c_char) -> PgStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        let dir = PathBuf::from(string(dir, "dir")?);
        r.write_dir(&dir).map_err(|e| Failure::new(PgStatus::Io, e))
    })
}

#[no_mangle]
pub unsafe extern "C" fn pg_result_free(result: *mut PgResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Robust relative pose from `n` pixel correspondences given as interleaved
/// `x, y` pairs, sampled in the given order. `inlier_count` may be null.
#[no_mangle]
pub unsafe extern "C" fn pg_estimate_pose(
    points1: *const f64,
    points2: *const f64,
    n: usize,
    k1: PgIntrinsics,
    k2: PgIntrinsics,
    threshold_px: f64,
    max_iterations: usize,
    seed: u64,
    out: *mut PgPose,
    inlier_count: *mut usize,
) -> PgStatus {
    guard(|| {
        let a = slice(points1, 2 * n, "points1")?;
        let b = slice(points2, 2 * n, "points2")?;
        let out = deref_mut(out, "out")?;
        if threshold_px.is_nan() || threshold_px <= 0.0 || max_iterations == 0 {
            return Err(Failure::new(PgStatus::InvalidArgument, "threshold_px and max_iterations must be positive"));
        }
        let points: Vec<(Vec2, Vec2)> =
            (0..n).map(|k| (Vec2::new(a[2 * k], a[2 * k + 1]), Vec2::new(b[2 * k], b[2 * k + 1]))).collect();
        let order: Vec<usize> = (0..n).collect();
        let cfg = RansacConfig { threshold_px, max_iterations, ..RansacConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = estimate_pose_ransac(&points, &order, &cfg, &k1.to_core()?, &k2.to_core()?, &mut rng)
            .map_err(|e| Failure::new(PgStatus::NoModel, e))?;
        *out = PgPose::from(&res.pose);
        if let Some(c) = inlier_count.as_mut() {
            *c = res.inliers.len();
        }
        Ok(())
    })
}
