//! Pipeline configuration and its plain-text key-value file format.
//!
//! One `key = value` per line; blank lines and lines starting with `#` are
//! ignored. Keys are the field names, in snake_case or kebab-case. Booleans
//! are `true`/`false`, the traversal is `astar`, `bfs` or `none`.

use std::str::FromStr;

use thiserror::Error;

use crate::matcher::MatchConfig;
use crate::posegraph::{Traversal, TraversalConfig};
use crate::robust::RansacConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraversalMode {
    #[default]
    AStar,
    Bfs,
    /// Every pair goes straight to robust estimation.
    None,
}

impl TraversalMode {
    pub fn traversal(self) -> Option<Traversal> {
        match self {
            TraversalMode::AStar => Some(Traversal::AStar),
            TraversalMode::Bfs => Some(Traversal::BreadthFirst),
            TraversalMode::None => None,
        }
    }
}

impl FromStr for TraversalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "astar" | "a*" => Ok(TraversalMode::AStar),
            "bfs" => Ok(TraversalMode::Bfs),
            "none" => Ok(TraversalMode::None),
            other => Err(format!("unknown traversal '{other}' (expected astar, bfs or none)")),
        }
    }
}

impl std::fmt::Display for TraversalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TraversalMode::AStar => "astar",
            TraversalMode::Bfs => "bfs",
            TraversalMode::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub lambda: f64,
    pub max_depth: usize,
    pub bin_count: usize,
    pub min_similarity: f64,
    pub min_inliers: usize,
    pub ransac_max_iterations: usize,
    pub inlier_threshold_px: f64,
    pub snn_base: f64,
    pub thread_count: usize,
    pub traversal: TraversalMode,
    /// Densify walk poses with the epipolar hash; otherwise scan all pairs.
    pub enable_epipolar_hashing: bool,
    /// Order fallback correspondences by outlier scores; otherwise by ratio.
    pub enable_adaptive_ranking: bool,
    /// Estimate only the maximum-similarity spanning tree.
    pub spanning_tree_only: bool,
    pub seed: u64,
    /// Write measured times; when off every time is written as zero.
    pub record_timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            max_depth: 5,
            bin_count: 45,
            min_similarity: 0.4,
            min_inliers: 20,
            ransac_max_iterations: 5000,
            inlier_threshold_px: 2.0,
            snn_base: 0.9,
            thread_count: 1,
            traversal: TraversalMode::AStar,
            enable_epipolar_hashing: true,
            enable_adaptive_ranking: true,
            spanning_tree_only: false,
            seed: 0,
            record_timing: true,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Parse { line, message: format!("{key}: {e}") })
}

impl PipelineConfig {
    pub fn enable_astar(&self) -> bool {
        self.traversal != TraversalMode::None
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.traversal_config().validate().map_err(ConfigError::Invalid)?;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.bin_count == 0 {
            return bad("bin_count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.min_similarity) {
            return bad(format!("min_similarity {} outside [0, 1]", self.min_similarity));
        }
        if self.ransac_max_iterations == 0 || self.thread_count == 0 {
            return bad("ransac_max_iterations and thread_count must be positive".into());
        }
        if !(self.snn_base > 0.0 && self.snn_base <= 1.0) {
            return bad(format!("snn_base {} outside (0, 1]", self.snn_base));
        }
        Ok(())
    }

    pub fn traversal_config(&self) -> TraversalConfig {
        TraversalConfig {
            lambda: self.lambda,
            max_depth: self.max_depth,
            min_inliers: self.min_inliers,
            inlier_threshold_px: self.inlier_threshold_px,
        }
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            inlier_threshold_px: self.inlier_threshold_px,
            bin_count: self.bin_count,
            snn_base: self.snn_base,
            ..MatchConfig::default()
        }
    }

    pub fn ransac_config(&self) -> RansacConfig {
        RansacConfig {
            threshold_px: self.inlier_threshold_px,
            max_iterations: self.ransac_max_iterations,
            min_inliers: self.min_inliers,
            ..RansacConfig::default()
        }
    }

    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let err = |e: ConfigError| match e {
            ConfigError::Parse { message, .. } => message,
            ConfigError::Invalid(m) => m,
        };
        match key.as_str() {
            "lambda" => self.lambda = parse(0, &key, value).map_err(err)?,
            "max_depth" => self.max_depth = parse(0, &key, value).map_err(err)?,
            "bin_count" => self.bin_count = parse(0, &key, value).map_err(err)?,
            "min_similarity" => self.min_similarity = parse(0, &key, value).map_err(err)?,
            "min_inliers" => self.min_inliers = parse(0, &key, value).map_err(err)?,
            "ransac_max_iterations" => self.ransac_max_iterations = parse(0, &key, value).map_err(err)?,
            "inlier_threshold_px" => self.inlier_threshold_px = parse(0, &key, value).map_err(err)?,
            "snn_base" => self.snn_base = parse(0, &key, value).map_err(err)?,
            "thread_count" => self.thread_count = parse(0, &key, value).map_err(err)?,
            "traversal" => self.traversal = parse(0, &key, value).map_err(err)?,
            "enable_astar" => {
                let on: bool = parse(0, &key, value).map_err(err)?;
                if !on {
                    self.traversal = TraversalMode::None;
                } else if self.traversal == TraversalMode::None {
                    self.traversal = TraversalMode::AStar;
                }
            }
            "enable_epipolar_hashing" => self.enable_epipolar_hashing = parse(0, &key, value).map_err(err)?,
            "enable_adaptive_ranking" => self.enable_adaptive_ranking = parse(0, &key, value).map_err(err)?,
            "spanning_tree_only" => self.spanning_tree_only = parse(0, &key, value).map_err(err)?,
            "seed" => self.seed = parse(0, &key, value).map_err(err)?,
            "record_timing" => self.record_timing = parse(0, &key, value).map_err(err)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Applies a key-value file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Parse { line: n + 1, message: format!("expected key = value, got '{line}'") });
            };
            self.set(k, v).map_err(|message| ConfigError::Parse { line: n + 1, message })?;
        }
        Ok(())
    }

    /// Key-value text that [`PipelineConfig::apply_text`] reads back to `self`.
    pub fn to_text(&self) -> String {
        format!(
            "lambda = {}\nmax_depth = {}\nbin_count = {}\nmin_similarity = {}\nmin_inliers = {}\n\
             ransac_max_iterations = {}\ninlier_threshold_px = {}\nsnn_base = {}\nthread_count = {}\n\
             traversal = {}\nenable_epipolar_hashing = {}\nenable_adaptive_ranking = {}\n\
             spanning_tree_only = {}\nseed = {}\nrecord_timing = {}\n",
            self.lambda,
            self.max_depth,
            self.bin_count,
            self.min_similarity,
            self.min_inliers,
            self.ransac_max_iterations,
            self.inlier_threshold_px,
            self.snn_base,
            self.thread_count,
            self.traversal,
            self.enable_epipolar_hashing,
            self.enable_adaptive_ranking,
            self.spanning_tree_only,
            self.seed,
            self.record_timing,
        )
    }
}
