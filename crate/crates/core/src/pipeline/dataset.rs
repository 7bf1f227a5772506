//! Pipeline inputs: per-view features, global descriptors, optional ground truth.
//!
//! On disk a dataset is a directory holding
//! `features/view_NNNNN.{pgf,json}` (one per view, binary or JSON),
//! `global.{pgd,json}` with one global descriptor per view, and optionally
//! `cameras.txt` with lines `CAMERA id qw qx qy qz cx cy cz` giving the
//! world-to-camera rotation and the camera center.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geom::{RelativePose, Rotation, Vec3};
use crate::matcher::{read_features_binary, read_features_json, write_features_binary, write_features_json, ImageFeatures, MatchError};
use crate::posegraph::ViewId;
use crate::scene::SyntheticScene;
use crate::similarity::{
    read_descriptors_binary, read_descriptors_json, similarity_from_descriptors, write_descriptors_binary,
    write_descriptors_json, SimilarityError, SimilarityMatrix,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("features: {0}")]
    Features(#[from] MatchError),
    #[error("global descriptors: {0}")]
    Similarity(#[from] SimilarityError),
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Inconsistent(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FileFormat {
    #[default]
    Binary,
    Json,
}

impl std::str::FromStr for FileFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" | "bin" => Ok(FileFormat::Binary),
            "json" => Ok(FileFormat::Json),
            other => Err(format!("unknown format '{other}' (expected binary or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthCamera {
    /// World to camera.
    pub rotation: Rotation,
    pub center: Vec3,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<ImageFeatures>,
    pub global_descriptors: Vec<Vec<f32>>,
    pub similarity: SimilarityMatrix,
    pub ground_truth: Option<Vec<GroundTruthCamera>>,
}

impl Dataset {
    pub fn new(
        features: Vec<ImageFeatures>,
        global_descriptors: Vec<Vec<f32>>,
        ground_truth: Option<Vec<GroundTruthCamera>>,
    ) -> Result<Self, DatasetError> {
        if global_descriptors.len() != features.len() {
            return Err(DatasetError::Inconsistent(format!(
                "{} feature files but {} global descriptors",
                features.len(),
                global_descriptors.len()
            )));
        }
        if ground_truth.as_ref().is_some_and(|g| g.len() != features.len()) {
            return Err(DatasetError::Inconsistent("camera count differs from view count".into()));
        }
        let similarity = similarity_from_descriptors(&global_descriptors)?;
        Ok(Self { features, global_descriptors, similarity, ground_truth })
    }

    pub fn from_scene(scene: &SyntheticScene) -> Self {
        let gt = scene.cameras.iter().map(|c| GroundTruthCamera { rotation: c.rotation, center: c.center }).collect();
        Self::new(scene.features.clone(), scene.global_descriptors(), Some(gt)).expect("scene views are consistent")
    }

    pub fn view_count(&self) -> usize {
        self.features.len()
    }

    pub fn ground_truth_pose(&self, i: ViewId, j: ViewId) -> Option<RelativePose> {
        let gt = self.ground_truth.as_ref()?;
        let (a, b) = (&gt[i.index()], &gt[j.index()]);
        Some(RelativePose::new(b.rotation * a.rotation.inverse(), b.rotation * (a.center - b.center)))
    }

    pub fn write_dir(&self, dir: &Path, format: FileFormat) -> Result<(), DatasetError> {
        let fdir = dir.join("features");
        fs::create_dir_all(&fdir).map_err(io_err(&fdir))?;
        for (v, feats) in self.features.iter().enumerate() {
            let ext = if format == FileFormat::Binary { "pgf" } else { "json" };
            let path = fdir.join(format!("view_{v:05}.{ext}"));
            let out = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            match format {
                FileFormat::Binary => write_features_binary(feats, out)?,
                FileFormat::Json => write_features_json(feats, out)?,
            }
        }
        let global = dir.join(if format == FileFormat::Binary { "global.pgd" } else { "global.json" });
        let out = BufWriter::new(File::create(&global).map_err(io_err(&global))?);
        match format {
            FileFormat::Binary => write_descriptors_binary(&self.global_descriptors, out)?,
            FileFormat::Json => write_descriptors_json(&self.global_descriptors, out)?,
        }
        if let Some(gt) = &self.ground_truth {
            let path = dir.join("cameras.txt");
            let mut out = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            for (v, c) in gt.iter().enumerate() {
                let q = nalgebra::UnitQuaternion::from_rotation_matrix(&c.rotation);
                let q = [q.w, q.i, q.j, q.k];
                writeln!(
                    out,
                    "CAMERA {v} {:e} {:e} {:e} {:e} {:e} {:e} {:e}",
                    q[0], q[1], q[2], q[3], c.center.x, c.center.y, c.center.z
                )
                .map_err(io_err(&path))?;
            }
            out.flush().map_err(io_err(&path))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self, DatasetError> {
        let fdir = dir.join("features");
        let mut files: Vec<PathBuf> = fs::read_dir(&fdir)
            .map_err(io_err(&fdir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "pgf" || e == "json"))
            .collect();
        files.sort();
        let mut features = Vec::with_capacity(files.len());
        for path in &files {
            let input = BufReader::new(File::open(path).map_err(io_err(path))?);
            features.push(if path.extension().is_some_and(|e| e == "pgf") {
                read_features_binary(input)?
            } else {
                read_features_json(input)?
            });
        }
        let (bin, json) = (dir.join("global.pgd"), dir.join("global.json"));
        let global = if bin.exists() {
            read_descriptors_binary(BufReader::new(File::open(&bin).map_err(io_err(&bin))?))?
        } else {
            read_descriptors_json(BufReader::new(File::open(&json).map_err(io_err(&json))?))?
        };
        let cams = dir.join("cameras.txt");
        let gt = if cams.exists() { Some(read_cameras(&cams)?) } else { None };
        Self::new(features, global, gt)
    }
}

fn read_cameras(path: &Path) -> Result<Vec<GroundTruthCamera>, DatasetError> {
    let input = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out: Vec<(usize, GroundTruthCamera)> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |message: String| DatasetError::Parse { path: path.to_path_buf(), line: n + 1, message };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 9 || tok[0] != "CAMERA" {
            return Err(perr(format!("expected 'CAMERA id qw qx qy qz cx cy cz', got '{line}'")));
        }
        let id: usize = tok[1].parse().map_err(|e| perr(format!("{e}")))?;
        let v: Vec<f64> = tok[2..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| perr(format!("'{t}': {e}"))))
            .collect::<Result<_, _>>()?;
        let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]));
        out.push((id, GroundTruthCamera { rotation: q.to_rotation_matrix(), center: Vec3::new(v[4], v[5], v[6]) }));
    }
    out.sort_by_key(|(id, _)| *id);
    if out.iter().enumerate().any(|(k, (id, _))| k != *id) {
        return Err(DatasetError::Inconsistent(format!("{}: camera ids must be 0..n without gaps", path.display())));
    }
    Ok(out.into_iter().map(|(_, c)| c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_error_deg;
    use crate::scene::{generate, SceneConfig};

    #[test]
    fn round_trip_both_formats() {
        let scene = generate(&SceneConfig { n_cameras: 4, n_points: 300, ..Default::default() }).unwrap();
        let ds = Dataset::from_scene(&scene);
        for fmt in [FileFormat::Binary, FileFormat::Json] {
            let dir = tempfile::tempdir().unwrap();
            ds.write_dir(dir.path(), fmt).unwrap();
            let back = Dataset::load_dir(dir.path()).unwrap();
            assert_eq!(back.features, ds.features);
            assert_eq!(back.global_descriptors, ds.global_descriptors);
            assert_eq!(back.similarity, ds.similarity);
            for (a, b) in back.ground_truth.unwrap().iter().zip(ds.ground_truth.as_ref().unwrap()) {
                assert!(rotation_error_deg(&a.rotation, &b.rotation) < 1e-9);
                assert!((a.center - b.center).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ground_truth_matches_scene() {
        let scene = generate(&SceneConfig { n_cameras: 5, n_points: 200, ..Default::default() }).unwrap();
        let ds = Dataset::from_scene(&scene);
        let a = ds.ground_truth_pose(ViewId(1), ViewId(3)).unwrap();
        assert_eq!(a, scene.ground_truth_pose(ViewId(1), ViewId(3)));
    }

    #[test]
    fn bad_camera_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cameras.txt");
        fs::write(&p, "CAMERA 0 1 0 0 0 1 2\n").unwrap();
        assert!(matches!(read_cameras(&p), Err(DatasetError::Parse { line: 1, .. })));
    }
}
