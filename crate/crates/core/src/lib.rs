//! Initial pose-graph generation for global structure-from-motion.
//!
//! Relative poses are recovered from walks in the partially built graph
//! whenever possible, tentative matches are then found by hashing keypoints on
//! their epipolar-line angle, and the robust estimator used as a fallback
//! samples correspondences in an order learnt from earlier pairs.

pub mod geom;
pub mod matcher;
pub mod pipeline;
pub mod posegraph;
pub mod robust;
pub mod scene;
pub mod similarity;
pub mod tracks;
pub mod unionfind;

pub use geom::{CameraIntrinsics, RelativePose};
pub use posegraph::{PoseGraph, ViewId};
