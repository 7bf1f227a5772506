//! Epipolar hashing: keypoints of the second image binned by the angle of
//! their epipolar line in the first image.
//!
//! Angles live on a circle of circumference π. The valid angles form an arc
//! `[start, start + width]`; bins split that arc evenly, and keypoints whose
//! angle falls outside it (numerically) go to the nearer boundary bin.
//!
//! A query for `p1` reads the bins within an angular slack of the line
//! through the first epipole and `p1`. The slack bounds the angle between
//! that line and the epipolar line of any keypoint with Sampson distance
//! below the threshold, so the candidates always contain every such keypoint.
//! Keypoints whose epipolar line is too short to bound this way are kept in
//! a wildcard list returned with every query.

use std::f64::consts::{FRAC_PI_2, PI};

use super::{ImageFeatures, MatchConfig, MatchError};
use crate::geom::{FundamentalMatrix, Mat3, Vec2, Vec3};

const MIN_LINE_NORM: f64 = 1e-14;
const AT_INFINITY: f64 = 1e-12;
/// Extra angular slack absorbing rounding in the angle computations.
const ANGLE_MARGIN: f64 = 1e-7;
/// Fraction of the median epipolar-line norm below which a keypoint is a wildcard.
const WILDCARD_FRACTION: f64 = 0.25;

/// Arc of line angles `[start, start + width]`, taken modulo π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleInterval {
    pub start: f64,
    pub width: f64,
}

impl AngleInterval {
    pub const FULL: AngleInterval = AngleInterval { start: 0.0, width: PI };

    pub fn end(&self) -> f64 {
        self.start + self.width
    }

    /// Whether `angle` lies on the arc, allowing `slack` radians either side.
    pub fn contains(&self, angle: f64, slack: f64) -> bool {
        let o = wrap_pi(angle - self.start);
        o <= self.width + slack || o >= PI - slack
    }
}

#[inline]
fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Angle in `[0, π)` of the line `a x + b y + c = 0`.
fn line_angle(l: &Vec3) -> Option<f64> {
    if l.x.hypot(l.y) < MIN_LINE_NORM {
        return None;
    }
    let (a, b) = if l.y < 0.0 || (l.y == 0.0 && l.x > 0.0) { (-l.x, -l.y) } else { (l.x, l.y) };
    let r = (-a).atan2(b);
    Some(if r < 0.0 { wrap_pi(r + PI) } else { r })
}

/// Angle in `[0, π)` of the epipolar line `Fᵀ x2` in the first image.
pub fn epipolar_angle(p2: &Vec2, f: &FundamentalMatrix) -> Result<f64, MatchError> {
    let l = f.matrix().tr_mul(&Vec3::new(p2.x, p2.y, 1.0));
    line_angle(&l).ok_or(MatchError::ZeroLine)
}

fn finite_point(h: &Vec3) -> Option<Vec2> {
    (h.z.abs() > AT_INFINITY * h.norm()).then(|| Vec2::new(h.x / h.z, h.y / h.z))
}

/// Arc of epipolar-line angles, in the first image, of the points of the
/// `width2 x height2` second image. The whole circle when the second epipole
/// lies inside that image.
pub fn valid_angle_interval(f: &FundamentalMatrix, width2: f64, height2: f64) -> Result<AngleInterval, MatchError> {
    let e2 = f.epipole_second();
    let e1 = f.epipole_first();
    let corners = [
        Vec2::new(0.0, 0.0),
        Vec2::new(width2, 0.0),
        Vec2::new(0.0, height2),
        Vec2::new(width2, height2),
    ];
    let center = Vec2::new(width2 / 2.0, height2 / 2.0);

    // Order the corners around the pencil of lines through e2.
    let keys: [f64; 4] = match finite_point(&e2) {
        Some(p) => {
            if (0.0..=width2).contains(&p.x) && (0.0..=height2).contains(&p.y) {
                return Ok(AngleInterval::FULL);
            }
            let dir = |q: &Vec2| wrap_pi((q.y - p.y).atan2(q.x - p.x));
            let reference = dir(&center);
            corners.map(|c| {
                let d = wrap_pi(dir(&c) - reference);
                if d >= FRAC_PI_2 {
                    d - PI
                } else {
                    d
                }
            })
        }
        None => {
            let n = Vec2::new(-e2.y, e2.x);
            corners.map(|c| n.dot(&c))
        }
    };
    let k_min = (0..4).min_by(|&a, &b| keys[a].total_cmp(&keys[b])).unwrap_or(0);
    let k_max = (0..4).max_by(|&a, &b| keys[a].total_cmp(&keys[b])).unwrap_or(0);

    let angle = |p: &Vec2| epipolar_angle(p, f).map_err(|_| MatchError::DegenerateF);
    let theta_c = angle(&center)?;
    if finite_point(&e1).is_none() {
        return Ok(AngleInterval { start: theta_c, width: 0.0 });
    }
    let a = angle(&corners[k_min])?;
    let b = angle(&corners[k_max])?;
    let u = wrap_pi(theta_c - a);
    let v = wrap_pi(b - a);
    Ok(if u <= v {
        AngleInterval { start: a, width: v }
    } else {
        AngleInterval { start: b, width: PI - v }
    })
}

/// Keypoints of the second image indexed by epipolar-line angle.
#[derive(Debug, Clone)]
pub struct EpipolarHashTable {
    interval: AngleInterval,
    bin_width: f64,
    /// Offset from `interval.start` of the middle of the invalid arc.
    cut: f64,
    bins: Vec<Vec<u32>>,
    wildcard: Vec<u32>,
    f: Mat3,
    epipole: Vec3,
    line_norm_floor: f64,
    threshold: f64,
    total: usize,
}

impl EpipolarHashTable {
    pub fn interval(&self) -> AngleInterval {
        self.interval
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[Vec<u32>] {
        &self.bins
    }

    /// Keypoints returned with every query.
    pub fn wildcard(&self) -> &[u32] {
        &self.wildcard
    }

    /// Bin of an angle: monotone along the circle cut at the middle of the invalid arc.
    pub fn bin_of(&self, angle: f64) -> usize {
        self.bin_of_offset(wrap_pi(angle - self.interval.start))
    }

    fn bin_of_offset(&self, o: f64) -> usize {
        let n = self.bins.len();
        if n == 1 {
            0
        } else if o <= self.interval.width {
            ((o / self.bin_width) as usize).min(n - 1)
        } else if o < self.cut {
            n - 1
        } else {
            0
        }
    }

    fn bin_of_unrolled(&self, u: f64) -> usize {
        self.bin_of_offset(wrap_pi(u + self.cut))
    }

    /// Candidate keypoints for a first-image point.
    pub fn candidates(&self, p1: &Vec2) -> Vec<u32> {
        let mut out = Vec::new();
        self.candidates_into(p1, &mut out);
        out
    }

    pub fn candidates_into(&self, p1: &Vec2, out: &mut Vec<u32>) {
        let Some(half) = self.query_half_width(p1) else {
            out.extend(0..self.total as u32);
            return;
        };
        let x1 = Vec3::new(p1.x, p1.y, 1.0);
        let Some(theta) = line_angle(&self.epipole.cross(&x1)) else {
            out.extend(0..self.total as u32);
            return;
        };
        let n = self.bins.len();
        let u = wrap_pi(wrap_pi(theta - self.interval.start) - self.cut);
        let (lo, hi) = (u - half, u + half);
        let mut hit = vec![false; n];
        let mut mark = |a: f64, b: f64| {
            for flag in &mut hit[self.bin_of_unrolled(a)..=self.bin_of_unrolled(b)] {
                *flag = true;
            }
        };
        let below = PI - f64::EPSILON * 4.0;
        if lo < 0.0 {
            mark(lo + PI, below);
            mark(0.0, hi);
        } else if hi >= PI {
            mark(lo, below);
            mark(0.0, hi - PI);
        } else {
            mark(lo, hi);
        }
        for (bin, _) in self.bins.iter().zip(&hit).filter(|(_, h)| **h) {
            out.extend_from_slice(bin);
        }
        out.extend_from_slice(&self.wildcard);
    }

    /// Angular half-width of the query, or `None` when every keypoint must be returned.
    fn query_half_width(&self, p1: &Vec2) -> Option<f64> {
        if self.bins.len() == 1 || self.line_norm_floor <= 0.0 {
            return None;
        }
        let r = match finite_point(&self.epipole) {
            Some(e) => (p1 - e).norm(),
            None => f64::INFINITY,
        };
        if r < 1e-9 {
            return None;
        }
        let fx1 = self.f * Vec3::new(p1.x, p1.y, 1.0);
        let g1 = fx1.x.hypot(fx1.y);
        let reach = self.threshold * (1.0 + (g1 / self.line_norm_floor).powi(2)).sqrt();
        let ratio = reach / r;
        if ratio >= 1.0 {
            return None;
        }
        let half = ratio.asin() + ANGLE_MARGIN;
        (half < FRAC_PI_2).then_some(half)
    }
}

/// Bins the keypoints of the second image.
pub fn build_hash(k2: &ImageFeatures, f: &FundamentalMatrix, cfg: &MatchConfig) -> Result<EpipolarHashTable, MatchError> {
    let f = f.normalized();
    let interval = valid_angle_interval(&f, f64::from(k2.width), f64::from(k2.height))?;
    let bin_count = if interval.width > 1e-9 { cfg.bin_count.max(1) } else { 1 };
    let lines: Vec<Vec3> = k2.positions().iter().map(|p| f.matrix().tr_mul(&Vec3::new(p.x, p.y, 1.0))).collect();
    let mut norms: Vec<f64> = lines.iter().map(|l| l.x.hypot(l.y)).collect();
    let floor = if norms.is_empty() {
        0.0
    } else {
        let mid = norms.len() / 2;
        *norms.select_nth_unstable_by(mid, f64::total_cmp).1 * WILDCARD_FRACTION
    };
    let mut table = EpipolarHashTable {
        interval,
        bin_width: interval.width / bin_count as f64,
        cut: interval.width + (PI - interval.width) / 2.0,
        bins: vec![Vec::new(); bin_count],
        wildcard: Vec::new(),
        f: *f.matrix(),
        epipole: f.epipole_first(),
        line_norm_floor: floor,
        threshold: cfg.inlier_threshold_px,
        total: k2.len(),
    };
    for (j, l) in lines.iter().enumerate() {
        match line_angle(l) {
            Some(theta) if l.x.hypot(l.y) >= floor => {
                let b = table.bin_of(theta);
                table.bins[b].push(j as u32);
            }
            _ => table.wildcard.push(j as u32),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{fundamental_from_pose, sampson_or_inf, CameraIntrinsics, RelativePose, Rotation};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(800.0, 800.0, 640.0, 480.0).unwrap()
    }

    fn f_of(axis_angle: Vec3, t: Vec3) -> FundamentalMatrix {
        let pose = RelativePose::new(Rotation::new(axis_angle), t);
        fundamental_from_pose(&pose, &k(), &k()).normalized()
    }

    #[test]
    fn line_angles() {
        assert_eq!(line_angle(&Vec3::new(0.0, 1.0, -3.0)), Some(0.0));
        assert_eq!(line_angle(&Vec3::new(0.0, -1.0, 3.0)), Some(0.0));
        assert!((line_angle(&Vec3::new(1.0, 0.0, 2.0)).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((line_angle(&Vec3::new(-1.0, 0.0, 2.0)).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(line_angle(&Vec3::new(0.0, 0.0, 1.0)), None);
    }

    #[test]
    fn forward_motion_covers_everything() {
        // Epipole at the principal point.
        let f = f_of(Vec3::zeros(), Vec3::z());
        assert_eq!(valid_angle_interval(&f, 1280.0, 960.0).unwrap(), AngleInterval::FULL);
    }

    #[test]
    fn lateral_motion_gives_narrow_interval() {
        let f = f_of(Vec3::new(0.0, 0.05, 0.0), Vec3::new(-1.0, 0.0, 0.15));
        let iv = valid_angle_interval(&f, 1280.0, 960.0).unwrap();
        assert!(iv.width < 1.0, "{iv:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = Vec2::new(rng.gen_range(0.0..1280.0), rng.gen_range(0.0..960.0));
            assert!(iv.contains(epipolar_angle(&p, &f).unwrap(), 1e-9));
        }
    }

    #[test]
    fn pure_sideways_motion_has_parallel_lines() {
        let f = f_of(Vec3::zeros(), Vec3::x());
        let iv = valid_angle_interval(&f, 1280.0, 960.0).unwrap();
        assert!(iv.width < 1e-9);
        let h = build_hash(&keypoints(&mut ChaCha8Rng::seed_from_u64(1), 50), &f, &MatchConfig::default()).unwrap();
        assert_eq!(h.bin_count(), 1);
    }

    fn keypoints(rng: &mut ChaCha8Rng, n: usize) -> ImageFeatures {
        let mut kp = ImageFeatures::new(1280, 960, k(), 1);
        for _ in 0..n {
            kp.push(Vec2::new(rng.gen_range(0.0..1280.0), rng.gen_range(0.0..960.0)), 1.0, &[0.0]).unwrap();
        }
        kp
    }

    #[test]
    fn single_keypoint_single_bin() {
        let f = f_of(Vec3::new(0.0, 0.1, 0.0), Vec3::new(-1.0, 0.1, 0.2));
        let kp = keypoints(&mut ChaCha8Rng::seed_from_u64(2), 1);
        let h = build_hash(&kp, &f, &MatchConfig::default()).unwrap();
        let occupied = h.bins().iter().filter(|b| !b.is_empty()).count() + usize::from(!h.wildcard().is_empty());
        assert_eq!(occupied, 1);
    }

    #[test]
    fn point_at_epipole_returns_everything() {
        let f = f_of(Vec3::zeros(), Vec3::new(0.3, 0.1, 1.0));
        let kp = keypoints(&mut ChaCha8Rng::seed_from_u64(3), 200);
        let h = build_hash(&kp, &f, &MatchConfig::default()).unwrap();
        let e = f.epipole_first();
        let mut all = h.candidates(&Vec2::new(e.x / e.z, e.y / e.z));
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<u32>>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn partition_and_superset(
            w in proptest::array::uniform3(-0.4f64..0.4),
            t in proptest::array::uniform3(-1.0f64..1.0),
            seed in 0u64..1000,
            bins in 1usize..80,
        ) {
            let t = Vec3::from(t);
            prop_assume!(t.norm() > 0.1);
            let f = f_of(Vec3::from(w), t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k2 = keypoints(&mut rng, 300);
            let cfg = MatchConfig { bin_count: bins, inlier_threshold_px: 3.0, ..Default::default() };
            let h = build_hash(&k2, &f, &cfg).unwrap();
            let mut seen: Vec<u32> = h.bins().iter().flatten().chain(h.wildcard()).copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..300).collect::<Vec<u32>>());
            for _ in 0..100 {
                let p1 = Vec2::new(rng.gen_range(-100.0..1380.0), rng.gen_range(-100.0..1060.0));
                let cand = h.candidates(&p1);
                for j in 0..300u32 {
                    if sampson_or_inf(&p1, &k2.position(j as usize), &f) < cfg.inlier_threshold_px {
                        prop_assert!(cand.contains(&j));
                    }
                }
            }
        }

        #[test]
        fn angle_in_range_and_sign_stable(x in -2000.0f64..2000.0, y in -2000.0f64..2000.0, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let p = Vec2::new(x, y);
            if let (Ok(a), Ok(b)) = (epipolar_angle(&p, &FundamentalMatrix(m)), epipolar_angle(&p, &FundamentalMatrix(-m))) {
                prop_assert!((0.0..PI).contains(&a));
                prop_assert_eq!(a, b);
            }
        }
    }
}
