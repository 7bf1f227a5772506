//! Five-point relative pose solver.
//!
//! The essential matrix is sought in the four-dimensional null space of the
//! epipolar constraints, `E = xX + yY + zZ + W`. The cubic constraints
//! `det E = 0` and `2 E Eᵀ E - tr(E Eᵀ) E = 0` give ten equations in twenty
//! monomials; eliminating the ten cubic monomials leaves an action matrix for
//! multiplication by `x` whose real eigenvectors carry the solutions.

#![allow(clippy::needless_range_loop)]

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, SMatrix};

use super::RobustError;
use crate::geom::{EssentialMatrix, Mat3, Vec3};

const MAX_SCHUR_ITERATIONS: usize = 500;

/// Polynomial in `x, y, z` of total degree at most 3, indexed by exponents.
#[derive(Clone, Copy)]
struct Poly([[[f64; 4]; 4]; 4]);

impl Poly {
    fn zero() -> Self {
        Poly([[[0.0; 4]; 4]; 4])
    }

    fn linear(cx: f64, cy: f64, cz: f64, c1: f64) -> Self {
        let mut p = Self::zero();
        p.0[1][0][0] = cx;
        p.0[0][1][0] = cy;
        p.0[0][0][1] = cz;
        p.0[0][0][0] = c1;
        p
    }

    fn mul(&self, o: &Poly) -> Poly {
        let mut out = Self::zero();
        for a in 0..4 {
            for b in 0..4 - a {
                for c in 0..4 - a - b {
                    let v = self.0[a][b][c];
                    if v == 0.0 {
                        continue;
                    }
                    for d in 0..4 - a - b - c {
                        for e in 0..4 - a - b - c - d {
                            for f in 0..4 - a - b - c - d - e {
                                out.0[a + d][b + e][c + f] += v * o.0[d][e][f];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn add(&self, o: &Poly) -> Poly {
        let mut out = *self;
        out.axpy(1.0, o);
        out
    }

    fn axpy(&mut self, s: f64, o: &Poly) {
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    self.0[a][b][c] += s * o.0[a][b][c];
                }
            }
        }
    }
}

/// Monomial order: the ten cubics first, then the quotient basis
/// `x², xy, xz, y², yz, z², x, y, z, 1`.
const MONOMIALS: [(usize, usize, usize); 20] = [
    (3, 0, 0),
    (2, 1, 0),
    (2, 0, 1),
    (1, 2, 0),
    (1, 1, 1),
    (1, 0, 2),
    (0, 3, 0),
    (0, 2, 1),
    (0, 1, 2),
    (0, 0, 3),
    (2, 0, 0),
    (1, 1, 0),
    (1, 0, 1),
    (0, 2, 0),
    (0, 1, 1),
    (0, 0, 2),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (0, 0, 0),
];

/// Essential matrices consistent with five normalized correspondences
/// `(x1, x2)`, with `x2ᵀ E x1 = 0`.
pub fn five_point(sample: &[(Vec3, Vec3); 5]) -> Result<Vec<EssentialMatrix>, RobustError> {
    let mut q = SMatrix::<f64, 9, 9>::zeros();
    for (r, (x1, x2)) in sample.iter().enumerate() {
        let (x1, x2) = (x1.normalize(), x2.normalize());
        for a in 0..3 {
            for b in 0..3 {
                q[(r, 3 * a + b)] = x2[a] * x1[b];
            }
        }
    }
    let svd = q.svd(false, true);
    let v_t = svd.v_t.ok_or(RobustError::DegenerateSample)?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let largest = svd.singular_values[order[0]];
    if largest <= 0.0 || svd.singular_values[order[4]] < 1e-10 * largest {
        return Err(RobustError::DegenerateSample);
    }
    let basis: Vec<Mat3> = order[5..]
        .iter()
        .map(|&i| Mat3::from_fn(|r, c| v_t[(i, 3 * r + c)]))
        .collect();

    let e: [[Poly; 3]; 3] = std::array::from_fn(|r| {
        std::array::from_fn(|c| Poly::linear(basis[0][(r, c)], basis[1][(r, c)], basis[2][(r, c)], basis[3][(r, c)]))
    });

    let mut rows: Vec<Poly> = Vec::with_capacity(10);
    let det = e[0][0].mul(&e[1][1].mul(&e[2][2]).add(&scaled(&e[1][2].mul(&e[2][1]), -1.0)))
        .add(&scaled(&e[0][1].mul(&e[1][0].mul(&e[2][2]).add(&scaled(&e[1][2].mul(&e[2][0]), -1.0))), -1.0))
        .add(&e[0][2].mul(&e[1][0].mul(&e[2][1]).add(&scaled(&e[1][1].mul(&e[2][0]), -1.0))));
    rows.push(det);

    let mut eet = [[Poly::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                eet[i][j] = eet[i][j].add(&e[i][k].mul(&e[j][k]));
            }
        }
    }
    let trace = eet[0][0].add(&eet[1][1]).add(&eet[2][2]);
    for i in 0..3 {
        for j in 0..3 {
            let mut p = Poly::zero();
            for k in 0..3 {
                p.axpy(2.0, &eet[i][k].mul(&e[k][j]));
            }
            p.axpy(-1.0, &trace.mul(&e[i][j]));
            rows.push(p);
        }
    }

    let m = DMatrix::from_fn(10, 20, |r, c| {
        let (a, b, d) = MONOMIALS[c];
        rows[r].0[a][b][d]
    });
    let lhs = m.columns(0, 10).into_owned();
    let rhs = m.columns(10, 10).into_owned();
    let lu = lhs.lu();
    let reduced = lu.solve(&rhs).ok_or(RobustError::DegenerateSample)?;
    if !reduced.iter().all(|v| v.is_finite()) {
        return Err(RobustError::DegenerateSample);
    }

    // Multiplication by x on the quotient basis.
    let mut action = SMatrix::<f64, 10, 10>::zeros();
    for r in 0..6 {
        for c in 0..10 {
            action[(r, c)] = -reduced[(r, c)];
        }
    }
    action[(6, 0)] = 1.0;
    action[(7, 1)] = 1.0;
    action[(8, 2)] = 1.0;
    action[(9, 6)] = 1.0;

    if !action.iter().all(|v| v.is_finite()) {
        return Err(RobustError::DegenerateSample);
    }
    let scale = action.norm().max(1.0);
    let eigenvalues = Schur::try_new(action, f64::EPSILON, MAX_SCHUR_ITERATIONS)
        .ok_or(RobustError::DegenerateSample)?
        .complex_eigenvalues();
    let mut out: Vec<EssentialMatrix> = Vec::new();
    for ev in eigenvalues.iter() {
        if ev.im.abs() > 1e-8 * scale.max(ev.re.abs()) {
            continue;
        }
        let shifted = action - SMatrix::<f64, 10, 10>::identity() * ev.re;
        let svd = shifted.svd(false, true);
        let Some(vt) = svd.v_t else { continue };
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let v = vt.row(idx);
        if v[9].abs() < 1e-12 {
            continue;
        }
        let (x, y, z) = (v[6] / v[9], v[7] / v[9], v[8] / v[9]);
        let em = basis[0] * x + basis[1] * y + basis[2] * z + basis[3];
        let n = em.norm();
        if !n.is_finite() || n == 0.0 {
            continue;
        }
        let cand = EssentialMatrix(em / n);
        if !out.iter().any(|o| (o.0 - cand.0).norm() < 1e-9 || (o.0 + cand.0).norm() < 1e-9) {
            out.push(cand);
        }
    }
    Ok(out)
}

fn scaled(p: &Poly, s: f64) -> Poly {
    let mut out = Poly::zero();
    out.axpy(s, p);
    out
}
