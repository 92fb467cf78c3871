//! Kirchhoff quadrilaterals: deformation fields with value and gradient
//! degrees of freedom at the vertices, and the discrete gradient operator
//! mapping them into a globally continuous biquadratic vector field.
//!
//! The deformation space stores 9 scalars per vertex (3 components, each
//! with a value and a two-dimensional gradient). Its functions are never
//! evaluated in cell interiors: every algorithm works on vertex data, the
//! per-cell discrete-gradient matrix, and evaluations of the biquadratic
//! gradient field. The remaining bicubic degrees of freedom (the normal
//! derivatives at edge midpoints) are eliminated by averaging the values
//! at the edge endpoints, which is what the rows of the local matrix
//! encode.

pub mod q2;
pub mod q3;

use std::sync::Arc;

use nalgebra::{Matrix2, Matrix3x2, SMatrix, Vector2, Vector3};

use crate::mesh::Mesh;
use crate::{Error, Result};

/// Number of scalar degrees of freedom per vertex (3 components x
/// (value, d1, d2)).
pub const DOFS_PER_VERTEX: usize = 9;

/// Global index of a scalar degree of freedom.
#[inline]
pub fn dof_index(vertex: usize, component: usize, slot: usize) -> usize {
    DOFS_PER_VERTEX * vertex + 3 * component + slot
}

/// A discrete deformation: value in ℝ³ and gradient in ℝ^{3x2} at every
/// mesh vertex.
#[derive(Debug, Clone)]
pub struct DeformationField {
    mesh: Arc<Mesh>,
    dofs: Vec<f64>,
}

impl DeformationField {
    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = DOFS_PER_VERTEX * mesh.vertex_count();
        Self { mesh, dofs: vec![0.0; n] }
    }

    /// The flat reference configuration `y(x) = (x₁, x₂, 0)`.
    pub fn flat(mesh: Arc<Mesh>) -> Self {
        let mut field = Self::zeros(mesh);
        for v in 0..field.mesh.vertex_count() {
            let p = field.mesh.vertex(v);
            field.set_value(v, Vector3::new(p[0], p[1], 0.0));
            field.set_gradient(v, Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0));
        }
        field
    }

    /// Nodal interpolation: copies values and gradients of a smooth map at
    /// every vertex. (The implicit edge-midpoint normal derivatives follow
    /// from the averaging rule of the element.)
    pub fn interpolate(
        mesh: Arc<Mesh>,
        value_fn: impl Fn([f64; 2]) -> Vector3<f64>,
        gradient_fn: impl Fn([f64; 2]) -> Matrix3x2<f64>,
    ) -> Result<Self> {
        let mut field = Self::zeros(mesh);
        for v in 0..field.mesh.vertex_count() {
            let p = field.mesh.vertex(v);
            let val = value_fn(p);
            let grad = gradient_fn(p);
            if !(val.iter().all(|x| x.is_finite()) && grad.iter().all(|x| x.is_finite())) {
                return Err(Error::Data(format!(
                    "non-finite interpolation data at vertex {v} ({}, {})",
                    p[0], p[1]
                )));
            }
            field.set_value(v, val);
            field.set_gradient(v, grad);
        }
        Ok(field)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dofs(&self) -> &[f64] {
        &self.dofs
    }

    pub fn dofs_mut(&mut self) -> &mut [f64] {
        &mut self.dofs
    }

    pub fn value(&self, v: usize) -> Vector3<f64> {
        Vector3::new(
            self.dofs[dof_index(v, 0, 0)],
            self.dofs[dof_index(v, 1, 0)],
            self.dofs[dof_index(v, 2, 0)],
        )
    }

    pub fn gradient(&self, v: usize) -> Matrix3x2<f64> {
        let d = |c, s| self.dofs[dof_index(v, c, s)];
        Matrix3x2::new(d(0, 1), d(0, 2), d(1, 1), d(1, 2), d(2, 1), d(2, 2))
    }

    pub fn set_value(&mut self, v: usize, value: Vector3<f64>) {
        for c in 0..3 {
            self.dofs[dof_index(v, c, 0)] = value[c];
        }
    }

    pub fn set_gradient(&mut self, v: usize, grad: Matrix3x2<f64>) {
        for c in 0..3 {
            self.dofs[dof_index(v, c, 1)] = grad[(c, 0)];
            self.dofs[dof_index(v, c, 2)] = grad[(c, 1)];
        }
    }

    /// Nodal metric `[∇y(z)]ᵀ ∇y(z)` at a vertex.
    pub fn vertex_metric(&self, v: usize) -> Matrix2<f64> {
        let g = self.gradient(v);
        g.transpose() * g
    }
}

/// A member of the biquadratic gradient space: per cell, matrices in
/// ℝ^{3x2} at the 9 tensor Lagrange points (4 corners, 4 edge midpoints,
/// center). Values at shared corners and shared edge midpoints coincide
/// across neighboring cells, so the field is globally continuous.
///
/// Point index `p = 3*iy + ix` with local coordinates
/// `(ix * w/2, iy * h/2)` relative to the cell origin.
#[derive(Debug, Clone)]
pub struct GradientField {
    mesh: Arc<Mesh>,
    values: Vec<[Matrix3x2<f64>; 9]>,
}

impl GradientField {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn cell_values(&self, cell: usize) -> &[Matrix3x2<f64>; 9] {
        &self.values[cell]
    }

    /// Interpolates a pointwise matrix field: values are copied at the
    /// corners and edge midpoints; the center value is the arithmetic mean
    /// of the four corner values, not the field value at the center.
    pub fn interpolate(
        mesh: Arc<Mesh>,
        field: impl Fn([f64; 2]) -> Matrix3x2<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(mesh.cell_count());
        for cell in 0..mesh.cell_count() {
            let o = mesh.cell_origin(cell);
            let (w, h) = mesh.cell_extent(cell);
            let mut vals = [Matrix3x2::zeros(); 9];
            for p in 0..9 {
                if p == 4 {
                    continue;
                }
                let (ix, iy) = (p % 3, p / 3);
                let x = [o[0] + 0.5 * w * ix as f64, o[1] + 0.5 * h * iy as f64];
                let m = field(x);
                if !m.iter().all(|v| v.is_finite()) {
                    return Err(Error::Data(format!(
                        "non-finite field sample in cell {cell} at ({}, {})",
                        x[0], x[1]
                    )));
                }
                vals[p] = m;
            }
            vals[4] = (vals[0] + vals[2] + vals[6] + vals[8]) * 0.25;
            values.push(vals);
        }
        Ok(Self { mesh, values })
    }

    /// Evaluates the biquadratic interpolant at a point inside a cell.
    pub fn eval(&self, cell: usize, point: [f64; 2]) -> Result<Matrix3x2<f64>> {
        let (s, t) = local_coords(&self.mesh, cell, point)?;
        let (px, py) = (q2::shape1(s), q2::shape1(t));
        let mut m = Matrix3x2::zeros();
        for p in 0..9 {
            m += self.values[cell][p] * (px[p % 3] * py[p / 3]);
        }
        Ok(m)
    }

    /// Exact derivative of the biquadratic interpolant at a point inside a
    /// cell; returns `(∂₁Φ, ∂₂Φ)`.
    pub fn eval_gradient(
        &self,
        cell: usize,
        point: [f64; 2],
    ) -> Result<(Matrix3x2<f64>, Matrix3x2<f64>)> {
        let (s, t) = local_coords(&self.mesh, cell, point)?;
        let (w, h) = self.mesh.cell_extent(cell);
        let (px, dpx) = (q2::shape1(s), q2::dshape1(s));
        let (py, dpy) = (q2::shape1(t), q2::dshape1(t));
        let mut d1 = Matrix3x2::zeros();
        let mut d2 = Matrix3x2::zeros();
        for p in 0..9 {
            let (ix, iy) = (p % 3, p / 3);
            d1 += self.values[cell][p] * (dpx[ix] / w * py[iy]);
            d2 += self.values[cell][p] * (px[ix] * dpy[iy] / h);
        }
        Ok((d1, d2))
    }
}

fn local_coords(mesh: &Mesh, cell: usize, point: [f64; 2]) -> Result<(f64, f64)> {
    let o = mesh.cell_origin(cell);
    let (w, h) = mesh.cell_extent(cell);
    let s = (point[0] - o[0]) / w;
    let t = (point[1] - o[1]) / h;
    let eps = 1e-12;
    if !(-eps..=1.0 + eps).contains(&s) || !(-eps..=1.0 + eps).contains(&t) {
        return Err(Error::OutsideCell { cell, x: point[0], y: point[1] });
    }
    Ok((s, t))
}

/// The per-cell matrix realization of the discrete gradient for one scalar
/// component: maps the 12 vertex degrees of freedom (value, d1, d2 at the
/// four corners in tensor order SW, SE, NW, NE) to the two derivative
/// values at each of the 9 biquadratic Lagrange points.
///
/// Rows at corner points copy the corner gradient degrees of freedom.
/// Edge midpoints take the tangential derivative of the cubic edge trace
/// (determined by the endpoint values and tangential derivatives) and the
/// average of the endpoint normal derivatives. The center value is the
/// mean of the four corner gradients.
#[derive(Debug, Clone)]
pub struct LocalDiscreteGradient {
    pub width: f64,
    pub height: f64,
    d1: SMatrix<f64, 9, 12>,
    d2: SMatrix<f64, 9, 12>,
}

/// Local scalar DOF index for corner `c` (tensor order) and slot
/// `t ∈ {value, d1, d2}`.
#[inline]
fn ldof(corner: usize, slot: usize) -> usize {
    3 * corner + slot
}

/// Builds the local discrete-gradient matrix for a `w x h` cell.
pub fn local_discrete_gradient(extent: (f64, f64)) -> Result<LocalDiscreteGradient> {
    let (w, h) = extent;
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(Error::DegenerateCell { width: w, height: h });
    }
    let mut d1 = SMatrix::<f64, 9, 12>::zeros();
    let mut d2 = SMatrix::<f64, 9, 12>::zeros();

    // Corners: tensor order c0=(0,0), c1=(w,0), c2=(0,h), c3=(w,h);
    // Lagrange point p = 3*iy + ix.
    let corner_points = [(0usize, 0usize), (2, 1), (6, 2), (8, 3)];
    for &(p, c) in &corner_points {
        d1[(p, ldof(c, 1))] = 1.0;
        d2[(p, ldof(c, 2))] = 1.0;
    }

    // Midpoint of the cubic Hermite trace along an edge of length `len`
    // with endpoint values (va, vb) and tangential derivatives (da, db):
    // p'(mid) = 3(vb - va)/(2 len) - (da + db)/4.
    let hermite = |m: &mut SMatrix<f64, 9, 12>, p: usize, a: usize, b: usize, slot: usize, len: f64| {
        m[(p, ldof(a, 0))] = -1.5 / len;
        m[(p, ldof(b, 0))] = 1.5 / len;
        m[(p, ldof(a, slot))] = -0.25;
        m[(p, ldof(b, slot))] = -0.25;
    };
    let average = |m: &mut SMatrix<f64, 9, 12>, p: usize, a: usize, b: usize, slot: usize| {
        m[(p, ldof(a, slot))] = 0.5;
        m[(p, ldof(b, slot))] = 0.5;
    };

    // Horizontal edges: d1 tangential (Hermite), d2 normal (average).
    hermite(&mut d1, 1, 0, 1, 1, w); // bottom
    hermite(&mut d1, 7, 2, 3, 1, w); // top
    average(&mut d2, 1, 0, 1, 2);
    average(&mut d2, 7, 2, 3, 2);

    // Vertical edges: d2 tangential (Hermite), d1 normal (average).
    hermite(&mut d2, 3, 0, 2, 2, h); // left
    hermite(&mut d2, 5, 1, 3, 2, h); // right
    average(&mut d1, 3, 0, 2, 1);
    average(&mut d1, 5, 1, 3, 1);

    // Center: mean of the four corner gradients.
    for c in 0..4 {
        d1[(4, ldof(c, 1))] = 0.25;
        d2[(4, ldof(c, 2))] = 0.25;
    }

    Ok(LocalDiscreteGradient { width: w, height: h, d1, d2 })
}

impl LocalDiscreteGradient {
    /// Applies the map to the 12 local scalar DOFs of one component;
    /// returns the (d1, d2) values at the 9 Lagrange points.
    pub fn apply(&self, local: &SMatrix<f64, 12, 1>) -> ([f64; 9], [f64; 9]) {
        let a = self.d1 * local;
        let b = self.d2 * local;
        (a.data.0[0], b.data.0[0])
    }

    /// Derivative-component maps as 9x12 matrices.
    pub fn parts(&self) -> (&SMatrix<f64, 9, 12>, &SMatrix<f64, 9, 12>) {
        (&self.d1, &self.d2)
    }

    /// The full 18x12 matrix with rows `2*point + derivative`.
    pub fn matrix(&self) -> SMatrix<f64, 18, 12> {
        let mut m = SMatrix::<f64, 18, 12>::zeros();
        for p in 0..9 {
            for j in 0..12 {
                m[(2 * p, j)] = self.d1[(p, j)];
                m[(2 * p + 1, j)] = self.d2[(p, j)];
            }
        }
        m
    }
}

/// Gathers the 12 local scalar DOFs of one component on a cell.
pub fn local_component_dofs(
    mesh: &Mesh,
    dofs: &[f64],
    cell: usize,
    component: usize,
) -> SMatrix<f64, 12, 1> {
    let corners = mesh.cell_corners(cell);
    let mut local = SMatrix::<f64, 12, 1>::zeros();
    for (c, &v) in corners.iter().enumerate() {
        for slot in 0..3 {
            local[ldof(c, slot)] = dofs[dof_index(v, component, slot)];
        }
    }
    local
}

/// Gradient values of a deformation at the 9 Lagrange points of one cell.
pub fn cell_gradient_values(y: &DeformationField, cell: usize) -> [Matrix3x2<f64>; 9] {
    let mesh = y.mesh();
    let local_map = local_discrete_gradient(mesh.cell_extent(cell))
        .expect("mesh cells have positive extent");
    let mut vals = [Matrix3x2::zeros(); 9];
    for c in 0..3 {
        let local = local_component_dofs(mesh, y.dofs(), cell, c);
        let (d1, d2) = local_map.apply(&local);
        for p in 0..9 {
            vals[p][(c, 0)] = d1[p];
            vals[p][(c, 1)] = d2[p];
        }
    }
    vals
}

/// The discrete gradient: interpolates the elementwise gradient of a
/// deformation into the globally continuous biquadratic field.
pub fn discrete_gradient(y: &DeformationField) -> GradientField {
    let mesh = y.mesh().clone();
    let values = (0..mesh.cell_count())
        .map(|cell| cell_gradient_values(y, cell))
        .collect();
    GradientField { mesh, values }
}

/// A bilinear interpolant on a single cell, determined by the values at
/// the four corners in tensor order (SW, SE, NW, NE).
#[derive(Debug, Clone, Copy)]
pub struct BilinearCell {
    pub width: f64,
    pub height: f64,
    pub corners: [f64; 4],
}

impl BilinearCell {
    /// Value at local coordinates `(x, y)` in `[0, w] x [0, h]`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let s = x / self.width;
        let t = y / self.height;
        let [v00, v10, v01, v11] = self.corners;
        v00 * (1.0 - s) * (1.0 - t) + v10 * s * (1.0 - t) + v01 * (1.0 - s) * t + v11 * s * t
    }

    /// Gradient at local coordinates `(x, y)`.
    pub fn gradient(&self, x: f64, y: f64) -> Vector2<f64> {
        let s = x / self.width;
        let t = y / self.height;
        let [v00, v10, v01, v11] = self.corners;
        Vector2::new(
            ((v10 - v00) * (1.0 - t) + (v11 - v01) * t) / self.width,
            ((v01 - v00) * (1.0 - s) + (v11 - v10) * s) / self.height,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, BoundarySelector, DomainSpec, Shape};
    use nalgebra::Matrix4;

    fn unit_mesh(refinements: u32) -> Arc<Mesh> {
        Arc::new(
            build_mesh(&DomainSpec {
                shape: Shape::Rectangle { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 },
                refinements,
                dirichlet: BoundarySelector::Left,
            })
            .unwrap(),
        )
    }

    #[test]
    fn constant_function_has_zero_discrete_gradient() {
        let map = local_discrete_gradient((0.625, 0.25)).unwrap();
        let mut local = SMatrix::<f64, 12, 1>::zeros();
        for c in 0..4 {
            local[ldof(c, 0)] = 1.0;
        }
        let (d1, d2) = map.apply(&local);
        for p in 0..9 {
            assert!(d1[p].abs() < 1e-15 && d2[p].abs() < 1e-15);
        }
    }

    #[test]
    fn linear_function_is_reproduced() {
        // w(x) = x₁ on an arbitrary cell: all d1 outputs 1, all d2 outputs 0.
        let (w, h) = (0.7, 0.3);
        let map = local_discrete_gradient((w, h)).unwrap();
        let xs = [0.0, w, 0.0, w];
        let mut local = SMatrix::<f64, 12, 1>::zeros();
        for c in 0..4 {
            local[ldof(c, 0)] = xs[c];
            local[ldof(c, 1)] = 1.0;
        }
        let (d1, d2) = map.apply(&local);
        for p in 0..9 {
            assert!((d1[p] - 1.0).abs() < 1e-14);
            assert!(d2[p].abs() < 1e-14);
        }
    }

    #[test]
    fn bilinear_functions_are_reproduced_at_all_points() {
        // The interpolation is exact on Q1: check against the analytic
        // gradient of a + b x + c y + d x y at all 9 points.
        let (w, h) = (1.25, 0.5);
        let map = local_discrete_gradient((w, h)).unwrap();
        let (a, b, c, d) = (0.3, -1.7, 0.9, 2.1);
        let f = |x: f64, y: f64| a + b * x + c * y + d * x * y;
        let corners = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)];
        let mut local = SMatrix::<f64, 12, 1>::zeros();
        for (i, &(x, y)) in corners.iter().enumerate() {
            local[ldof(i, 0)] = f(x, y);
            local[ldof(i, 1)] = b + d * y;
            local[ldof(i, 2)] = c + d * x;
        }
        let (d1, d2) = map.apply(&local);
        for p in 0..9 {
            let (ix, iy) = (p % 3, p / 3);
            let (x, y) = (0.5 * w * ix as f64, 0.5 * h * iy as f64);
            assert!((d1[p] - (b + d * y)).abs() < 1e-13);
            assert!((d2[p] - (c + d * x)).abs() < 1e-13);
        }
    }

    #[test]
    fn hermite_midpoint_derivative_matches_direct_solve() {
        // Independent oracle: solve the 4x4 cubic Hermite system on the
        // edge and differentiate at the midpoint.
        let len = 1.0;
        let (va, vb, da, db) = (0.0, 1.0, 0.0, 0.0);
        let vander = Matrix4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            1.0, len, len * len, len * len * len,
            0.0, 1.0, 2.0 * len, 3.0 * len * len,
        );
        let rhs = nalgebra::Vector4::new(va, da, vb, db);
        let coef = vander.lu().solve(&rhs).unwrap();
        let m = 0.5 * len;
        let oracle: f64 = coef[1] + 2.0 * coef[2] * m + 3.0 * coef[3] * m * m;
        assert!((oracle - 1.5).abs() < 1e-14);

        let map = local_discrete_gradient((len, 1.0)).unwrap();
        let mut local = SMatrix::<f64, 12, 1>::zeros();
        local[ldof(1, 0)] = 1.0; // value 1 at (len, 0)
        let (d1, _) = map.apply(&local);
        assert!((d1[1] - oracle).abs() < 1e-14);
    }

    #[test]
    fn flat_deformation_has_identity_gradient_field() {
        let mesh = unit_mesh(2);
        let y = DeformationField::flat(mesh);
        let phi = discrete_gradient(&y);
        let id = Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        for cell in 0..phi.mesh().cell_count() {
            for p in 0..9 {
                assert!((phi.cell_values(cell)[p] - id).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_gradient_dofs_give_zero_vertex_rows() {
        let mesh = unit_mesh(1);
        let mut y = DeformationField::zeros(mesh);
        for v in 0..y.mesh().vertex_count() {
            y.set_value(v, Vector3::new(2.5, -1.0, 0.5));
        }
        let phi = discrete_gradient(&y);
        for cell in 0..y.mesh().cell_count() {
            for &p in &[0, 2, 6, 8] {
                assert!(phi.cell_values(cell)[p].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn gradient_field_is_continuous_at_shared_points() {
        let mesh = unit_mesh(2);
        let mut y = DeformationField::zeros(mesh.clone());
        // Arbitrary smooth data; continuity must hold by construction.
        for v in 0..mesh.vertex_count() {
            let p = mesh.vertex(v);
            y.set_value(v, Vector3::new(p[0] * p[0], p[0] * p[1], p[1].sin()));
            y.set_gradient(
                v,
                Matrix3x2::new(2.0 * p[0], 0.0, p[1], p[0], 0.0, p[1].cos()),
            );
        }
        let phi = discrete_gradient(&y);
        // Compare values on matching points of horizontally adjacent cells.
        for e in mesh.edges() {
            if let (c0, Some(c1)) = e.cells {
                let m = mesh.edge_midpoint(e);
                let a = phi.eval(c0, m).unwrap();
                let b = phi.eval(c1, m).unwrap();
                assert!((a - b).norm() < 1e-12);
                for &v in &[e.vertices.0, e.vertices.1] {
                    let p = mesh.vertex(v);
                    let a = phi.eval(c0, p).unwrap();
                    let b = phi.eval(c1, p).unwrap();
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn interpolated_gradient_center_is_corner_average() {
        let mesh = unit_mesh(0);
        // field x ↦ x₁² in every entry: corner values 0, 1, 0, 1 along the
        // bottom/top, so the center value must be 1/2, not (1/2)² = 1/4.
        let phi = GradientField::interpolate(mesh, |x| {
            Matrix3x2::from_element(x[0] * x[0])
        })
        .unwrap();
        let center = phi.cell_values(0)[4];
        assert!((center[(0, 0)] - 0.5).abs() < 1e-15);
        let mid_bottom = phi.cell_values(0)[1];
        assert!((mid_bottom[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_matrix_field_is_preserved() {
        let mesh = unit_mesh(1);
        let m = Matrix3x2::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let phi = GradientField::interpolate(mesh.clone(), |_| m).unwrap();
        for cell in 0..mesh.cell_count() {
            for p in 0..9 {
                assert!((phi.cell_values(cell)[p] - m).norm() < 1e-15);
            }
            let (d1, d2) = phi
                .eval_gradient(cell, mesh.cell_midpoint(cell))
                .unwrap();
            assert!(d1.norm() < 1e-13 && d2.norm() < 1e-13);
        }
    }

    #[test]
    fn q2_gradient_of_quadratic_samples_is_exact() {
        // Values of ψ(x) = x₁² at the 9 points of the unit cell: the
        // interpolant reproduces ψ, so ∂₁ψ at the center is 1.
        let mesh = unit_mesh(0);
        let mut values = [Matrix3x2::zeros(); 9];
        for p in 0..9 {
            let x = 0.5 * (p % 3) as f64;
            values[p] = Matrix3x2::from_element(x * x);
        }
        let phi = GradientField { mesh, values: vec![values] };
        let (d1, d2) = phi.eval_gradient(0, [0.5, 0.5]).unwrap();
        assert!((d1[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(d2.norm() < 1e-14);
        assert!(matches!(
            phi.eval_gradient(0, [1.5, 0.5]),
            Err(Error::OutsideCell { .. })
        ));
    }

    #[test]
    fn bilinear_cell_matches_spec_examples() {
        let cell = BilinearCell { width: 1.0, height: 1.0, corners: [0.0, 1.0, 0.0, 0.0] };
        let g = cell.gradient(0.0, 0.0);
        assert!((g[0] - 1.0).abs() < 1e-15 && g[1].abs() < 1e-15);
        let zero = BilinearCell { width: 2.0, height: 3.0, corners: [0.0; 4] };
        assert_eq!(zero.eval(1.0, 1.5), 0.0);
        assert_eq!(zero.gradient(1.0, 1.5), Vector2::zeros());
    }

    #[test]
    fn degenerate_extent_is_rejected() {
        assert!(matches!(
            local_discrete_gradient((0.0, 1.0)),
            Err(Error::DegenerateCell { .. })
        ));
    }
}
