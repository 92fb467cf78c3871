//! Diagnostic reconstruction of a cellwise bicubic representative.
//!
//! Production code paths never evaluate the deformation space inside
//! cells; only vertex data and the biquadratic gradient field are used.
//! For diagnostics (norm comparisons between the elementwise gradient and
//! the discrete gradient) a concrete bicubic function matching the 12
//! vertex degrees of freedom and the edge-midpoint averaging rule is
//! still useful.
//!
//! The 16 conditions on the 16 bicubic coefficients are consistent but
//! rank-deficient: the bubble `s(1-s)(1-2s) · t(1-t)(1-2t)` satisfies all
//! of them homogeneously, so every vertex datum admits a one-parameter
//! family of representatives. The minimum-norm least-squares solution
//! picks one deterministically; the residual is checked to be at
//! round-off level.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::kirchhoff::local_component_dofs;
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Four-point Gauss rule on [0, 1]: exact for polynomials of degree 7.
pub const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_13, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_29, 0.173_927_422_568_726_93),
];

/// A bicubic polynomial on one cell, stored as coefficients of the scaled
/// monomials `s^i t^j` with `s = (x - x0)/w`, `t = (y - y0)/h`.
#[derive(Debug, Clone)]
pub struct Bicubic {
    width: f64,
    height: f64,
    /// Coefficient of `s^i t^j` at index `4*j + i`.
    coeffs: [f64; 16],
}

impl Bicubic {
    /// Reconstructs the representative of one scalar component of a
    /// deformation on one cell from its vertex degrees of freedom.
    pub fn reconstruct(mesh: &Mesh, dofs: &[f64], cell: usize, component: usize) -> Result<Self> {
        let (w, h) = mesh.cell_extent(cell);
        let local = local_component_dofs(mesh, dofs, cell, component);

        let mut a = DMatrix::<f64>::zeros(16, 16);
        let mut b = DVector::<f64>::zeros(16);

        // Monomial helpers on the reference square.
        let val = |s: f64, t: f64, i: usize, j: usize| s.powi(i as i32) * t.powi(j as i32);
        let ds = |s: f64, t: f64, i: usize, j: usize| {
            if i == 0 { 0.0 } else { i as f64 * s.powi(i as i32 - 1) * t.powi(j as i32) }
        };
        let dt = |s: f64, t: f64, i: usize, j: usize| {
            if j == 0 { 0.0 } else { j as f64 * s.powi(i as i32) * t.powi(j as i32 - 1) }
        };

        // 12 vertex conditions (tensor corner order).
        let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
        for (c, &(s, t)) in corners.iter().enumerate() {
            for j in 0..4 {
                for i in 0..4 {
                    let m = 4 * j + i;
                    a[(3 * c, m)] = val(s, t, i, j);
                    a[(3 * c + 1, m)] = ds(s, t, i, j);
                    a[(3 * c + 2, m)] = dt(s, t, i, j);
                }
            }
            b[3 * c] = local[3 * c];
            b[3 * c + 1] = w * local[3 * c + 1];
            b[3 * c + 2] = h * local[3 * c + 2];
        }

        // 4 homogeneous averaging conditions: the normal derivative at an
        // edge midpoint equals the mean of the endpoint normal derivatives.
        let edges = [
            (0.5, 0.0, (0.0, 0.0), (1.0, 0.0), false), // bottom, normal = t
            (0.5, 1.0, (0.0, 1.0), (1.0, 1.0), false), // top
            (0.0, 0.5, (0.0, 0.0), (0.0, 1.0), true),  // left, normal = s
            (1.0, 0.5, (1.0, 0.0), (1.0, 1.0), true),  // right
        ];
        for (row, &(ms, mt, e1, e2, normal_is_s)) in edges.iter().enumerate() {
            for j in 0..4 {
                for i in 0..4 {
                    let m = 4 * j + i;
                    let d = |s: f64, t: f64| if normal_is_s { ds(s, t, i, j) } else { dt(s, t, i, j) };
                    a[(12 + row, m)] = d(ms, mt) - 0.5 * (d(e1.0, e1.1) + d(e2.0, e2.1));
                }
            }
        }

        let svd = a.clone().svd(true, true);
        let eps = svd.singular_values[0] * 1e-12;
        let coeffs = svd
            .solve(&b, eps)
            .map_err(|e| Error::Data(format!("bicubic reconstruction failed: {e}")))?;
        let residual = (&a * &coeffs - &b).norm();
        let scale = b.norm().max(1.0);
        if residual > 1e-9 * scale {
            return Err(Error::Data(format!(
                "bicubic reconstruction inconsistent: residual {residual:.3e}"
            )));
        }
        let mut out = [0.0; 16];
        out.copy_from_slice(coeffs.as_slice());
        let mut bicubic = Self { width: w, height: h, coeffs: out };

        // Canonicalize within the one-parameter family by minimizing the
        // Hessian seminorm. The bubble has zero mean Hessian, so exact
        // quadratics are reproduced verbatim.
        let bubble = Self::bubble(w, h);
        let cross = hessian_inner(&bicubic, &bubble);
        let norm = hessian_inner(&bubble, &bubble);
        let shift = -cross / norm;
        for m in 0..16 {
            bicubic.coeffs[m] += shift * bubble.coeffs[m];
        }
        Ok(bicubic)
    }

    /// The checkerboard bubble `φ(s) φ(t)` with `φ(t) = t - 3t² + 2t³`:
    /// all 16 element conditions vanish on it.
    fn bubble(width: f64, height: f64) -> Self {
        let phi = [0.0, 1.0, -3.0, 2.0];
        let mut coeffs = [0.0; 16];
        for j in 0..4 {
            for i in 0..4 {
                coeffs[4 * j + i] = phi[i] * phi[j];
            }
        }
        Self { width, height, coeffs }
    }

    /// Physical gradient at local coordinates `(x, y)` in `[0,w] x [0,h]`.
    pub fn gradient(&self, x: f64, y: f64) -> Vector2<f64> {
        let s = x / self.width;
        let t = y / self.height;
        let mut gs = 0.0;
        let mut gt = 0.0;
        for j in 0..4usize {
            for i in 0..4usize {
                let c = self.coeffs[4 * j + i];
                if i > 0 {
                    gs += c * i as f64 * s.powi(i as i32 - 1) * t.powi(j as i32);
                }
                if j > 0 {
                    gt += c * j as f64 * s.powi(i as i32) * t.powi(j as i32 - 1);
                }
            }
        }
        Vector2::new(gs / self.width, gt / self.height)
    }

    /// Physical Hessian at local coordinates `(x, y)`.
    pub fn hessian(&self, x: f64, y: f64) -> Matrix2<f64> {
        let s = x / self.width;
        let t = y / self.height;
        let (mut ss, mut st, mut tt) = (0.0, 0.0, 0.0);
        for j in 0..4usize {
            for i in 0..4usize {
                let c = self.coeffs[4 * j + i];
                if i > 1 {
                    ss += c * (i * (i - 1)) as f64 * s.powi(i as i32 - 2) * t.powi(j as i32);
                }
                if i > 0 && j > 0 {
                    st += c * (i * j) as f64 * s.powi(i as i32 - 1) * t.powi(j as i32 - 1);
                }
                if j > 1 {
                    tt += c * (j * (j - 1)) as f64 * s.powi(i as i32) * t.powi(j as i32 - 2);
                }
            }
        }
        let (w, h) = (self.width, self.height);
        Matrix2::new(ss / (w * w), st / (w * h), st / (w * h), tt / (h * h))
    }

    /// `∫_T |∇w|²` over the cell, via a 4x4 Gauss rule (exact here).
    pub fn gradient_norm_sq(&self) -> f64 {
        self.integrate(|x, y| self.gradient(x, y).norm_squared())
    }

    /// `∫_T |D²w|²` over the cell, via a 4x4 Gauss rule (exact here).
    pub fn hessian_norm_sq(&self) -> f64 {
        self.integrate(|x, y| self.hessian(x, y).norm_squared())
    }

    fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for &(sx, wx) in &GAUSS4 {
            for &(sy, wy) in &GAUSS4 {
                acc += wx * wy * f(sx * self.width, sy * self.height);
            }
        }
        acc * self.width * self.height
    }
}

/// `∫_T D²a : D²b` of two bicubics on the same cell.
fn hessian_inner(a: &Bicubic, b: &Bicubic) -> f64 {
    let mut acc = 0.0;
    for &(sx, wx) in &GAUSS4 {
        for &(sy, wy) in &GAUSS4 {
            let (x, y) = (sx * a.width, sy * a.height);
            acc += wx * wy * a.hessian(x, y).dot(&b.hessian(x, y));
        }
    }
    acc * a.width * a.height
}

/// `∫_ω |∇y|²` of the reconstructed representative, summed over components.
pub fn gradient_norm_sq(mesh: &Mesh, dofs: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for cell in 0..mesh.cell_count() {
        for c in 0..3 {
            acc += Bicubic::reconstruct(mesh, dofs, cell, c)?.gradient_norm_sq();
        }
    }
    Ok(acc)
}

/// `∫_ω |D²y|²` of the reconstructed representative, summed over components.
pub fn hessian_norm_sq(mesh: &Mesh, dofs: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for cell in 0..mesh.cell_count() {
        for c in 0..3 {
            acc += Bicubic::reconstruct(mesh, dofs, cell, c)?.hessian_norm_sq();
        }
    }
    Ok(acc)
}

/// Per-cell `∫_T |∇w − Φ|²` between the reconstructed representative of
/// one component and the matching column pair of a gradient-field cell,
/// with the field values supplied as an evaluator.
pub fn gradient_mismatch_sq(
    bicubic: &Bicubic,
    field_grad: impl Fn(f64, f64) -> Vector2<f64>,
) -> f64 {
    bicubic.integrate(|x, y| (bicubic.gradient(x, y) - field_grad(x, y)).norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kirchhoff::DeformationField;
    use crate::mesh::{build_mesh, BoundarySelector, DomainSpec, Shape};
    use nalgebra::{Matrix3x2, Vector3};
    use std::sync::Arc;

    #[test]
    fn gauss4_integrates_degree_seven() {
        for deg in 0..=7 {
            let quad: f64 = GAUSS4.iter().map(|&(s, w)| w * s.powi(deg)).sum();
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((quad - exact).abs() < 1e-14, "degree {deg}: {quad} vs {exact}");
        }
    }

    #[test]
    fn reconstruction_reproduces_quadratics() {
        let mesh = Arc::new(
            build_mesh(&DomainSpec {
                shape: Shape::Rectangle { x0: -1.0, x1: 1.0, y0: 0.0, y1: 1.0 },
                refinements: 1,
                dirichlet: BoundarySelector::Left,
            })
            .unwrap(),
        );
        // w(x) = x₁² + 2 x₁ x₂ − x₂²  (quadratic ⊂ bicubic, and the
        // averaging rule holds for it because its gradient is affine).
        let f = |p: [f64; 2]| p[0] * p[0] + 2.0 * p[0] * p[1] - p[1] * p[1];
        let grad = |p: [f64; 2]| Vector2::new(2.0 * p[0] + 2.0 * p[1], 2.0 * p[0] - 2.0 * p[1]);
        let y = DeformationField::interpolate(
            mesh.clone(),
            |p| Vector3::new(f(p), 0.0, 0.0),
            |p| {
                let g = grad(p);
                Matrix3x2::new(g[0], g[1], 0.0, 0.0, 0.0, 0.0)
            },
        )
        .unwrap();
        for cell in 0..mesh.cell_count() {
            let bc = Bicubic::reconstruct(&mesh, y.dofs(), cell, 0).unwrap();
            let o = mesh.cell_origin(cell);
            let (w, h) = mesh.cell_extent(cell);
            for &(lx, ly) in &[(0.3 * w, 0.7 * h), (0.85 * w, 0.2 * h)] {
                let p = [o[0] + lx, o[1] + ly];
                assert!((bc.gradient(lx, ly) - grad(p)).norm() < 1e-9);
                let hess = bc.hessian(lx, ly);
                let exact = Matrix2::new(2.0, 2.0, 2.0, -2.0);
                assert!((hess - exact).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn reconstruction_accepts_generic_vertex_data() {
        // Arbitrary (non-smooth) vertex data is still consistent because
        // the averaging conditions have a one-dimensional redundancy.
        let mesh = Arc::new(
            build_mesh(&DomainSpec {
                shape: Shape::Rectangle { x0: 0.0, x1: 1.0, y0: 0.0, y1: 2.0 },
                refinements: 0,
                dirichlet: BoundarySelector::Left,
            })
            .unwrap(),
        );
        let mut y = DeformationField::zeros(mesh.clone());
        let data = [0.7, -0.3, 1.9, 0.4, -1.2, 0.8, 2.2, -0.6, 0.1, 1.4, -0.9, 0.5];
        for (k, &d) in data.iter().enumerate() {
            y.dofs_mut()[crate::kirchhoff::dof_index(k / 3, 0, k % 3)] = d;
        }
        let bc = Bicubic::reconstruct(&mesh, y.dofs(), 0, 0).unwrap();
        // The representative honors the vertex gradient DOFs exactly.
        assert!((bc.gradient(0.0, 0.0) - Vector2::new(data[1], data[2])).norm() < 1e-9);
        assert!((bc.gradient(1.0, 0.0) - Vector2::new(data[4], data[5])).norm() < 1e-9);
    }
}
