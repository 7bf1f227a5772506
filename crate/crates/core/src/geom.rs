//! Rigid-motion and two-view epipolar primitives.
//!
//! Conventions: a [`RelativePose`] from view `i` to view `j` maps camera-`i`
//! coordinates to camera-`j` coordinates, `X_j = R X_i + t`, with `t` stored as
//! a unit direction. The essential matrix is `E = [t]x R` so that
//! `x_jᵀ E x_i = 0` for normalized homogeneous points, and `F = K_j⁻ᵀ E K_i⁻¹`
//! for pixels.

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Rotation = Rotation3<f64>;

/// Translations with a norm below this are treated as degenerate.
pub const ZERO_TRANSLATION_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("composed translation vanished (norm below {ZERO_TRANSLATION_EPS})")]
    ZeroTranslation,
    #[error("sampson gradient is degenerate")]
    DegenerateGradient,
    #[error("no essential decomposition puts any point in front of both cameras")]
    NoCheiralitySupport,
    #[error("triangulation rays are parallel")]
    ParallelRays,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Pinhole intrinsics in pixels. No skew, no distortion.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeomError> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(GeomError::InvalidIntrinsics(format!(
                "fx={fx} fy={fy} cx={cx} cy={cy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn identity() -> Self {
        Self { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0 }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        Mat3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Pixel to normalized homogeneous coordinates (z = 1).
    pub fn normalize(&self, p: &Vec2) -> Vec3 {
        Vec3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point. Returns `None` for points on the image plane.
    pub fn project(&self, x: &Vec3) -> Option<Vec2> {
        if x.z.abs() < 1e-15 {
            return None;
        }
        Some(Vec2::new(
            self.fx * x.x / x.z + self.cx,
            self.fy * x.y / x.z + self.cy,
        ))
    }
}

/// Scale-free relative motion: rotation plus a unit translation direction.
///
/// The translation is either unit length or exactly zero; the zero case only
/// arises for the identity and for degenerate compositions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    rotation: Rotation,
    translation: Vec3,
}

impl RelativePose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        let norm = translation.norm();
        let translation = if norm < ZERO_TRANSLATION_EPS {
            Vec3::zeros()
        } else {
            translation / norm
        };
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self { rotation: Rotation::identity(), translation: Vec3::zeros() }
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn is_degenerate(&self) -> bool {
        self.translation == Vec3::zeros()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.inverse();
        Self::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: apply `other` first, then `self`. Never fails; the
    /// result may be degenerate (see [`compose`] for the checked variant).
    pub fn after(&self, other: &RelativePose) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    /// Unit quaternion `(w, x, y, z)` of the rotation, with `w >= 0`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&self.rotation);
        let mut c = [q.w, q.i, q.j, q.k];
        if c[0] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        c
    }

    pub fn from_quaternion_wxyz(q: [f64; 4], translation: Vec3) -> Self {
        let uq = Unit::new_normalize(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        Self::new(uq.to_rotation_matrix(), translation)
    }
}

/// Inverts a relative pose: `(Rᵀ, -Rᵀ t)`.
pub fn invert(pose: &RelativePose) -> RelativePose {
    pose.inverse()
}

/// Composition `a ∘ b` (apply `b`, then `a`) with the translation renormalized.
pub fn compose(a: &RelativePose, b: &RelativePose) -> Result<RelativePose, GeomError> {
    let raw = a.rotation * b.translation + a.translation;
    if raw.norm() < ZERO_TRANSLATION_EPS {
        return Err(GeomError::ZeroTranslation);
    }
    Ok(a.after(b))
}

/// Product of a chain of poses, the first applied first. Step translations
/// are chained unscaled and only the result is renormalized.
pub fn compose_chain<'a, I>(poses: I) -> Result<RelativePose, GeomError>
where
    I: IntoIterator<Item = &'a RelativePose>,
{
    let mut poses = poses.into_iter();
    let Some(first) = poses.next() else {
        return Ok(RelativePose::identity());
    };
    let (mut rotation, mut translation) = (first.rotation, first.translation);
    let mut steps = 1;
    for p in poses {
        rotation = p.rotation * rotation;
        translation = p.rotation * translation + p.translation;
        steps += 1;
    }
    if translation.norm() < ZERO_TRANSLATION_EPS {
        return Err(GeomError::ZeroTranslation);
    }
    if steps == 1 {
        return Ok(*first);
    }
    Ok(RelativePose::new(rotation, translation))
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(pub Mat3);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(pub Mat3);

impl EssentialMatrix {
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Scaled to unit Frobenius norm with a deterministic sign.
    pub fn normalized(&self) -> Mat3 {
        canonical_scale(&self.0)
    }
}

impl FundamentalMatrix {
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> FundamentalMatrix {
        FundamentalMatrix(self.0.transpose())
    }

    /// Unit Frobenius norm copy; Sampson distances are unchanged by the scale.
    pub fn normalized(&self) -> FundamentalMatrix {
        let n = self.0.norm();
        if n > 0.0 {
            FundamentalMatrix(self.0 / n)
        } else {
            *self
        }
    }

    /// Right null vector (`F e1 = 0`): the epipole in the first image, homogeneous.
    pub fn epipole_first(&self) -> Vec3 {
        null_vector(&self.0)
    }

    /// Left null vector (`Fᵀ e2 = 0`): the epipole in the second image, homogeneous.
    pub fn epipole_second(&self) -> Vec3 {
        null_vector(&self.0.transpose())
    }
}

fn canonical_scale(m: &Mat3) -> Mat3 {
    let n = m.norm();
    if n == 0.0 {
        return *m;
    }
    let mut out = m / n;
    let pivot = out.iter().copied().fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if pivot < 0.0 {
        out = -out;
    }
    out
}

fn null_vector(m: &Mat3) -> Vec3 {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    v_t.row(idx).transpose()
}

/// `E = [t]x R`.
pub fn essential_from_pose(pose: &RelativePose) -> EssentialMatrix {
    EssentialMatrix(skew(&pose.translation) * pose.rotation.matrix())
}

/// `F = K2⁻ᵀ E K1⁻¹`.
pub fn fundamental_from_essential(
    e: &EssentialMatrix,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> FundamentalMatrix {
    FundamentalMatrix(k2.inverse_matrix().transpose() * e.0 * k1.inverse_matrix())
}

pub fn fundamental_from_pose(
    pose: &RelativePose,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> FundamentalMatrix {
    fundamental_from_essential(&essential_from_pose(pose), k1, k2)
}

/// First-order (Sampson) approximation of the geometric distance of a pixel
/// correspondence to the epipolar constraint `p2ᵀ F p1 = 0`, in pixels.
pub fn sampson_distance(p1: &Vec2, p2: &Vec2, f: &FundamentalMatrix) -> Result<f64, GeomError> {
    let x1 = Vec3::new(p1.x, p1.y, 1.0);
    let x2 = Vec3::new(p2.x, p2.y, 1.0);
    let fx1 = f.0 * x1;
    let ftx2 = f.0.tr_mul(&x2);
    let num = x2.dot(&fx1);
    let den = fx1.x * fx1.x + fx1.y * fx1.y + ftx2.x * ftx2.x + ftx2.y * ftx2.y;
    let scale = f.0.norm_squared();
    if scale == 0.0 || den / scale < 1e-16 {
        return Err(GeomError::DegenerateGradient);
    }
    Ok((num * num / den).sqrt())
}

/// Sampson distance with degenerate gradients mapped to infinity (never an inlier).
pub fn sampson_or_inf(p1: &Vec2, p2: &Vec2, f: &FundamentalMatrix) -> f64 {
    sampson_distance(p1, p2, f).unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    /// Point in the first camera frame; the baseline has unit length.
    pub point: Vec3,
    pub depth1: f64,
    pub depth2: f64,
    /// Mean pixel reprojection error over both views.
    pub reprojection_error: f64,
}

/// Midpoint triangulation of a pixel correspondence under `pose` (view 1 -> view 2).
pub fn triangulate(
    p1: &Vec2,
    p2: &Vec2,
    pose: &RelativePose,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> Result<Triangulation, GeomError> {
    let d1 = k1.normalize(p1);
    let rt = pose.rotation.inverse();
    let d2 = rt * k2.normalize(p2);
    let c2 = -(rt * pose.translation);

    let angle = d1.cross(&d2).norm().atan2(d1.dot(&d2));
    if angle.abs() < 1e-6 {
        return Err(GeomError::ParallelRays);
    }
    let a = d1.dot(&d1);
    let b = d1.dot(&d2);
    let c = d2.dot(&d2);
    let e = d1.dot(&c2);
    let g = d2.dot(&c2);
    let det = b * b - a * c;
    if det.abs() < 1e-300 {
        return Err(GeomError::ParallelRays);
    }
    let l1 = (b * g - c * e) / det;
    let l2 = (a * g - b * e) / det;
    let point = 0.5 * (l1 * d1 + (c2 + l2 * d2));
    let in2 = pose.transform_point(&point);

    let err1 = k1.project(&point).map(|q| (q - p1).norm());
    let err2 = k2.project(&in2).map(|q| (q - p2).norm());
    let reprojection_error = match (err1, err2) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        _ => f64::INFINITY,
    };
    Ok(Triangulation { point, depth1: point.z, depth2: in2.z, reprojection_error })
}

/// Maximum number of correspondences used for cheirality voting.
pub const CHEIRALITY_SAMPLES: usize = 64;

/// Candidate `(R, t)` decompositions of an essential matrix.
pub fn essential_decompositions(e: &EssentialMatrix) -> [RelativePose; 4] {
    let svd = e.0.svd(true, true);
    let mut u = svd.u.expect("requested u");
    let mut v_t = svd.v_t.expect("requested v_t");
    // nalgebra does not sort singular values; put the smallest last.
    let s = svd.singular_values;
    let order = {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
        idx
    };
    let u_sorted = Mat3::from_columns(&[u.column(order[0]), u.column(order[1]), u.column(order[2])]);
    let vt_sorted = Mat3::from_rows(&[v_t.row(order[0]), v_t.row(order[1]), v_t.row(order[2])]);
    u = u_sorted;
    v_t = vt_sorted;
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = Rotation::from_matrix_unchecked(u * w * v_t);
    let r2 = Rotation::from_matrix_unchecked(u * w.transpose() * v_t);
    let t: Vec3 = u.column(2).into();
    [
        RelativePose::new(r1, t),
        RelativePose::new(r1, -t),
        RelativePose::new(r2, t),
        RelativePose::new(r2, -t),
    ]
}

/// Picks the decomposition of `e` with the most correspondences in front of
/// both cameras. Votes over at most [`CHEIRALITY_SAMPLES`] evenly strided points.
pub fn decompose_essential(
    e: &EssentialMatrix,
    correspondences: &[(Vec2, Vec2)],
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> Result<RelativePose, GeomError> {
    let n = correspondences.len();
    if n == 0 {
        return Err(GeomError::NoCheiralitySupport);
    }
    let stride = n.div_ceil(CHEIRALITY_SAMPLES).max(1);
    let mut best: Option<(usize, RelativePose)> = None;
    for cand in essential_decompositions(e) {
        let votes = correspondences
            .iter()
            .step_by(stride)
            .filter_map(|(p1, p2)| triangulate(p1, p2, &cand, k1, k2).ok())
            .filter(|t| t.depth1 > 0.0 && t.depth2 > 0.0)
            .count();
        if votes > 0 && best.as_ref().is_none_or(|(b, _)| votes > *b) {
            best = Some((votes, cand));
        }
    }
    best.map(|(_, p)| p).ok_or(GeomError::NoCheiralitySupport)
}

/// Angle of the relative rotation `aᵀ b`, in degrees.
pub fn rotation_error_deg(a: &Rotation, b: &Rotation) -> f64 {
    let r = a.inverse() * b;
    let m = r.matrix();
    let sin2 = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
    let cos2 = m.trace() - 1.0;
    sin2.atan2(cos2).to_degrees()
}

/// Angle between two translation directions, ignoring sign, in degrees.
pub fn translation_angle_error_deg(a: &Vec3, b: &Vec3) -> f64 {
    let cross = a.cross(b).norm();
    let dot = a.dot(b).abs();
    if cross == 0.0 && dot == 0.0 {
        return 0.0;
    }
    cross.atan2(dot).to_degrees()
}
