//! The discrete bending energy and its building blocks.
//!
//! The energy of a deformation `y` with discrete gradient `Φ = ∇_h y` is
//!
//! ```text
//!   E[y] = ½ ∫ |∇Φ|²
//!        + Σ_ij ( ∂_i I¹[Φ_j] · [Φ̂₁ × Φ̂₂], Z_ij )_h
//!        + ½ (Z, Z)_h  -  (f, y)_h
//! ```
//!
//! where `I¹` is cellwise bilinear interpolation, `Φ̂_j` are the
//! normalized columns of the discrete gradient, and `(·,·)_h` is the
//! cell-corner quadrature. The first term is integrated exactly with a
//! 3x3 Gauss rule (the integrand is a squared biquadratic gradient); the
//! remaining terms use the corner quadrature, so everything is evaluated
//! from vertex degrees of freedom alone.
//!
//! Admissible states keep the nodal metric `[∇y(z)]ᵀ∇y(z)` at or above
//! the identity, which makes the column normalizations safe. A violation
//! beyond [`METRIC_TOLERANCE`] signals a broken invariant upstream and is
//! reported as a hard error.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, SMatrix, Vector3};

use crate::kirchhoff::{
    cell_gradient_values, dof_index, local_discrete_gradient, q2, DeformationField,
    GradientField, DOFS_PER_VERTEX,
};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Slack allowed on the nodal metric bound `[∇y]ᵀ∇y ≥ I₂`. Violations
/// beyond this indicate a solver or assembly bug, not a modeling regime.
pub const METRIC_TOLERANCE: f64 = 1e-9;

/// A field that is constant on the whole plate or constant per cell.
#[derive(Debug, Clone)]
pub enum CellField<T> {
    Constant(T),
    PerCell(Vec<T>),
}

impl<T: Copy> CellField<T> {
    pub fn at(&self, cell: usize) -> T {
        match self {
            CellField::Constant(v) => *v,
            CellField::PerCell(v) => v[cell],
        }
    }
}

/// Dirichlet data: deformation and gradient prescribed on the clamped
/// boundary. The gradient must be an isometry there.
pub struct BoundaryData {
    pub value: Box<dyn Fn([f64; 2]) -> Vector3<f64> + Send + Sync>,
    pub gradient: Box<dyn Fn([f64; 2]) -> Matrix3x2<f64> + Send + Sync>,
}

impl BoundaryData {
    /// Clamps the plate to its reference position: `y_D(x) = (x₁, x₂, 0)`
    /// with the flat isometric gradient.
    pub fn reference() -> Self {
        BoundaryData {
            value: Box::new(|x| Vector3::new(x[0], x[1], 0.0)),
            gradient: Box::new(|_| Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)),
        }
    }
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BoundaryData { .. }")
    }
}

/// Spontaneous curvature, load and boundary data of one experiment.
#[derive(Debug)]
pub struct ProblemData {
    pub spontaneous_curvature: CellField<Matrix2<f64>>,
    pub load: CellField<Vector3<f64>>,
    pub boundary: BoundaryData,
}

impl ProblemData {
    /// Constant data with the plate clamped to its reference position.
    pub fn new(z: Matrix2<f64>, f: Vector3<f64>) -> Result<Self> {
        Self::with_fields(CellField::Constant(z), CellField::Constant(f))
    }

    pub fn with_fields(
        z: CellField<Matrix2<f64>>,
        f: CellField<Vector3<f64>>,
    ) -> Result<Self> {
        let check = |m: &Matrix2<f64>| -> Result<()> {
            if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 * (1.0 + m.norm()) {
                return Err(Error::Data(
                    "spontaneous curvature must be symmetric".into(),
                ));
            }
            Ok(())
        };
        match &z {
            CellField::Constant(m) => check(m)?,
            CellField::PerCell(v) => {
                for m in v {
                    check(m)?;
                }
            }
        }
        Ok(ProblemData {
            spontaneous_curvature: z,
            load: f,
            boundary: BoundaryData::reference(),
        })
    }

    pub fn with_boundary(mut self, boundary: BoundaryData) -> Self {
        self.boundary = boundary;
        self
    }
}

/// The additive pieces of the discrete energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// `½ ∫ |∇∇_h y|²`
    pub bending: f64,
    /// Curvature coupling `Σ_ij (∂_i I¹[∂_j^h y] · [Φ̂₁ × Φ̂₂], Z_ij)_h`
    pub coupling: f64,
    /// `½ (Z, Z)_h`
    pub constant: f64,
    /// `(f, y)_h`
    pub load: f64,
    /// `bending + coupling + constant - load`
    pub total: f64,
}

/// Derivative of the normalization map `a ↦ a/|a|`, i.e.
/// `(I₃ - â âᵀ)/|a|`. Bounded by one whenever `|a| ≥ 1`.
pub fn unit_vector_jacobian(a: &Vector3<f64>) -> Matrix3<f64> {
    let norm = a.norm();
    let unit = a / norm;
    (Matrix3::identity() - unit * unit.transpose()) / norm
}

/// Checks the nodal admissibility bound `[∇y(z)]ᵀ∇y(z) ≥ I₂ - tol`.
pub fn check_admissible(y: &DeformationField) -> Result<()> {
    let worst = metric_min_eigenvalue(y);
    if worst.0 < -METRIC_TOLERANCE {
        return Err(Error::InadmissibleState(format!(
            "nodal metric falls {:.3e} below the identity at vertex {}",
            -worst.0, worst.1
        )));
    }
    Ok(())
}

/// Smallest eigenvalue of `[∇y(z)]ᵀ∇y(z) - I₂` over all vertices,
/// together with the vertex where it is attained.
pub fn metric_min_eigenvalue(y: &DeformationField) -> (f64, usize) {
    let mut worst = (f64::INFINITY, 0);
    for v in 0..y.mesh().vertex_count() {
        let m = y.vertex_metric(v);
        let (a, b, c) = (m[(0, 0)] - 1.0, m[(0, 1)], m[(1, 1)] - 1.0);
        let lambda = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
        if lambda < worst.0 {
            worst = (lambda, v);
        }
    }
    worst
}

/// Evaluates the discrete energy of an admissible deformation.
pub fn discrete_energy(y: &DeformationField, data: &ProblemData) -> Result<EnergyBreakdown> {
    check_admissible(y)?;
    let mesh = y.mesh().clone();

    let mut bending = 0.0;
    let mut coupling = 0.0;
    let mut constant = 0.0;
    let mut load = 0.0;

    for cell in 0..mesh.cell_count() {
        let (w, h) = mesh.cell_extent(cell);
        let quarter = 0.25 * w * h;
        let z = data.spontaneous_curvature.at(cell);
        let f = data.load.at(cell);

        bending += 0.5 * cell_bending_integral(y, cell);

        let corners = mesh.cell_corners(cell);
        if z != Matrix2::zeros() {
            let grads = [
                y.gradient(corners[0]),
                y.gradient(corners[1]),
                y.gradient(corners[2]),
                y.gradient(corners[3]),
            ];
            let a = bilinear_corner_derivatives(&grads, w, h);
            for corner in 0..4 {
                let nrm = normalized_cross(&grads[corner], cell, corners[corner])?;
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s += z[(i, j)] * a[corner][i][j].dot(&nrm);
                    }
                }
                coupling += quarter * s;
            }
        }
        constant += 0.5 * (4.0 * quarter) * z.norm_squared();
        if f != Vector3::zeros() {
            for &v in &corners {
                load += quarter * f.dot(&y.value(v));
            }
        }
    }

    let total = bending + coupling + constant - load;
    Ok(EnergyBreakdown { bending, coupling, constant, load, total })
}

/// `∫_T |∇∇_h y|²` on one cell, via the 3x3 Gauss rule (exact).
pub fn cell_bending_integral(y: &DeformationField, cell: usize) -> f64 {
    let mesh = y.mesh();
    let (w, h) = mesh.cell_extent(cell);
    let vals = cell_gradient_values(y, cell);
    let mut acc = 0.0;
    for &(sx, wx) in &q2::GAUSS3 {
        let (px, dpx) = (q2::shape1(sx), q2::dshape1(sx));
        for &(sy, wy) in &q2::GAUSS3 {
            let (py, dpy) = (q2::shape1(sy), q2::dshape1(sy));
            let mut d1 = Matrix3x2::zeros();
            let mut d2 = Matrix3x2::zeros();
            for p in 0..9 {
                let (ix, iy) = (p % 3, p / 3);
                d1 += vals[p] * (dpx[ix] / w * py[iy]);
                d2 += vals[p] * (px[ix] * dpy[iy] / h);
            }
            acc += wx * wy * (d1.norm_squared() + d2.norm_squared());
        }
    }
    acc * w * h
}

/// Corner derivatives `∂_i I¹[Φ_j]` of the bilinear interpolant of the
/// gradient columns: `out[corner][i][j]` with corners in tensor order.
fn bilinear_corner_derivatives(
    grads: &[Matrix3x2<f64>; 4],
    w: f64,
    h: f64,
) -> [[[Vector3<f64>; 2]; 2]; 4] {
    let col = |c: usize, j: usize| grads[c].column(j).into_owned();
    let mut out = [[[Vector3::zeros(); 2]; 2]; 4];
    for j in 0..2 {
        let d1_bottom = (col(1, j) - col(0, j)) / w;
        let d1_top = (col(3, j) - col(2, j)) / w;
        let d2_left = (col(2, j) - col(0, j)) / h;
        let d2_right = (col(3, j) - col(1, j)) / h;
        out[0][0][j] = d1_bottom;
        out[1][0][j] = d1_bottom;
        out[2][0][j] = d1_top;
        out[3][0][j] = d1_top;
        out[0][1][j] = d2_left;
        out[2][1][j] = d2_left;
        out[1][1][j] = d2_right;
        out[3][1][j] = d2_right;
    }
    out
}

/// `Φ̂₁ × Φ̂₂` from a nodal gradient, guarding the normalizations.
fn normalized_cross(g: &Matrix3x2<f64>, cell: usize, vertex: usize) -> Result<Vector3<f64>> {
    let c1 = g.column(0);
    let c2 = g.column(1);
    let (n1, n2) = (c1.norm(), c2.norm());
    if n1 * n1 < 1.0 - METRIC_TOLERANCE || n2 * n2 < 1.0 - METRIC_TOLERANCE {
        return Err(Error::InadmissibleState(format!(
            "gradient column shorter than one at vertex {vertex} (cell {cell})"
        )));
    }
    Ok((c1 / n1).cross(&(c2 / n2)))
}

/// Energy computed from the assembled curvature tensor
/// `H_ij = (Φ₁ × Φ₂) · ∂_i Φ_j` (columns unnormalized), evaluated at the
/// 3x3 Gauss points of every cell: returns `½ ∫ |H + Z|²`.
///
/// This is the quantity reported for equilibrium states; it agrees with
/// [`discrete_energy`] up to the isometry defect.
pub fn reporting_energy(y: &DeformationField, z: &CellField<Matrix2<f64>>) -> f64 {
    let mesh = y.mesh();
    let mut acc = 0.0;
    for cell in 0..mesh.cell_count() {
        let (w, h) = mesh.cell_extent(cell);
        let vals = cell_gradient_values(y, cell);
        let z_cell = z.at(cell);
        let mut cell_acc = 0.0;
        for &(sx, wx) in &q2::GAUSS3 {
            let (px, dpx) = (q2::shape1(sx), q2::dshape1(sx));
            for &(sy, wy) in &q2::GAUSS3 {
                let (py, dpy) = (q2::shape1(sy), q2::dshape1(sy));
                let mut phi = Matrix3x2::zeros();
                let mut d1 = Matrix3x2::zeros();
                let mut d2 = Matrix3x2::zeros();
                for p in 0..9 {
                    let (ix, iy) = (p % 3, p / 3);
                    phi += vals[p] * (px[ix] * py[iy]);
                    d1 += vals[p] * (dpx[ix] / w * py[iy]);
                    d2 += vals[p] * (px[ix] * dpy[iy] / h);
                }
                let normal = phi.column(0).cross(&phi.column(1));
                let mut hh = Matrix2::zeros();
                hh[(0, 0)] = normal.dot(&d1.column(0));
                hh[(0, 1)] = normal.dot(&d1.column(1));
                hh[(1, 0)] = normal.dot(&d2.column(0));
                hh[(1, 1)] = normal.dot(&d2.column(1));
                cell_acc += wx * wy * (hh + z_cell).norm_squared();
            }
        }
        acc += cell_acc * w * h;
    }
    0.5 * acc
}

/// Curvature tensor `H` of the deformed surface at one point of a cell,
/// from the biquadratic gradient field (columns unnormalized).
pub fn curvature_tensor(
    phi: &GradientField,
    cell: usize,
    point: [f64; 2],
) -> Result<Matrix2<f64>> {
    let value = phi.eval(cell, point)?;
    let (d1, d2) = phi.eval_gradient(cell, point)?;
    let normal = value.column(0).cross(&value.column(1));
    Ok(Matrix2::new(
        normal.dot(&d1.column(0)),
        normal.dot(&d1.column(1)),
        normal.dot(&d2.column(0)),
        normal.dot(&d2.column(1)),
    ))
}

/// Area-normalized discrete L¹ norm of the nodal metric defect
/// `[∇_h y]ᵀ[∇_h y] - I₂`, measured in the Frobenius matrix norm.
/// Zero exactly on nodal isometries.
pub fn isometry_defect(y: &DeformationField) -> f64 {
    let mesh = y.mesh();
    let mut acc = 0.0;
    for cell in 0..mesh.cell_count() {
        let quarter = 0.25 * mesh.cell_area(cell);
        for &v in &mesh.cell_corners(cell) {
            let m = y.vertex_metric(v);
            let (a, b, c) = (m[(0, 0)] - 1.0, m[(0, 1)], m[(1, 1)] - 1.0);
            acc += quarter * (a * a + 2.0 * b * b + c * c).sqrt();
        }
    }
    acc / mesh.area()
}

/// Cell-corner quadrature `(φ, ψ)_h = Σ_T |T|/4 Σ_corners φψ` for fields
/// evaluated from within each cell.
pub fn discrete_inner_product(
    mesh: &Mesh,
    phi: impl Fn(usize, [f64; 2]) -> f64,
    psi: impl Fn(usize, [f64; 2]) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for cell in 0..mesh.cell_count() {
        let quarter = 0.25 * mesh.cell_area(cell);
        for &v in &mesh.cell_corners(cell) {
            let x = mesh.vertex(v);
            acc += quarter * phi(cell, x) * psi(cell, x);
        }
    }
    acc
}

/// Discrete `L^p` norm built on the cell-corner quadrature.
pub fn discrete_lp_norm(mesh: &Mesh, phi: impl Fn(usize, [f64; 2]) -> f64, p: f64) -> f64 {
    let mut acc = 0.0;
    for cell in 0..mesh.cell_count() {
        let quarter = 0.25 * mesh.cell_area(cell);
        for &v in &mesh.cell_corners(cell) {
            acc += quarter * phi(cell, mesh.vertex(v)).abs().powf(p);
        }
    }
    acc.powf(1.0 / p)
}

/// Deformation and gradient errors against a reference map, measured
/// with a one-point Gauss rule per cell. The discrete deformation is
/// represented by its vertex values (bilinear proxy at the cell center)
/// and the discrete gradient by its center value, the mean of the four
/// corner gradients. Returns the unscaled `(L², H¹-seminorm)` pair.
pub fn one_point_errors(
    y: &DeformationField,
    exact_value: impl Fn([f64; 2]) -> Vector3<f64>,
    exact_gradient: impl Fn([f64; 2]) -> Matrix3x2<f64>,
) -> (f64, f64) {
    let mesh = y.mesh();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for cell in 0..mesh.cell_count() {
        let area = mesh.cell_area(cell);
        let center = mesh.cell_midpoint(cell);
        let corners = mesh.cell_corners(cell);
        let mut value = Vector3::zeros();
        let mut grad = Matrix3x2::zeros();
        for &v in &corners {
            value += y.value(v) * 0.25;
            grad += y.gradient(v) * 0.25;
        }
        l2 += area * (value - exact_value(center)).norm_squared();
        h1 += area * (grad - exact_gradient(center)).norm_squared();
    }
    (l2.sqrt(), h1.sqrt())
}

/// Symmetric stiffness of the squared discrete Hessian: the matrix `K`
/// with `xᵀ K x = ∫ |∇∇_h y|²` for the DOF vector `x` of `y`.
///
/// Stored as one 3x3 block per pair of neighboring vertices acting on the
/// slots (value, d1, d2); the three deformation components couple through
/// identical blocks, which keeps the storage at one ninth of the scalar
/// CSR form.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    vertex_count: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    blocks: Vec<SMatrix<f64, 3, 3>>,
}

impl StiffnessMatrix {
    /// Number of scalar rows (9 per vertex).
    pub fn dim(&self) -> usize {
        DOFS_PER_VERTEX * self.vertex_count
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Neighbor vertices of `v` (including `v`), with their slot blocks.
    pub fn row(&self, v: usize) -> (&[usize], &[SMatrix<f64, 3, 3>]) {
        let r = self.row_ptr[v]..self.row_ptr[v + 1];
        (&self.col_idx[r.clone()], &self.blocks[r])
    }

    /// `out = K x` over full DOF vectors.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        out.fill(0.0);
        for v in 0..self.vertex_count {
            let (cols, blocks) = self.row(v);
            for (b, &w) in blocks.iter().zip(cols) {
                for c in 0..3 {
                    let xo = DOFS_PER_VERTEX * w + 3 * c;
                    let yo = DOFS_PER_VERTEX * v + 3 * c;
                    for t in 0..3 {
                        out[yo + t] +=
                            b[(t, 0)] * x[xo] + b[(t, 1)] * x[xo + 1] + b[(t, 2)] * x[xo + 2];
                    }
                }
            }
        }
    }

    /// `xᵀ K x`: the squared seminorm `∫ |∇∇_h y|²` of the deformation
    /// with DOF vector `x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for v in 0..self.vertex_count {
            let (cols, blocks) = self.row(v);
            for (b, &w) in blocks.iter().zip(cols) {
                for c in 0..3 {
                    let xo = DOFS_PER_VERTEX * w + 3 * c;
                    let yo = DOFS_PER_VERTEX * v + 3 * c;
                    for t in 0..3 {
                        acc += x[yo + t]
                            * (b[(t, 0)] * x[xo] + b[(t, 1)] * x[xo + 1] + b[(t, 2)] * x[xo + 2]);
                    }
                }
            }
        }
        acc
    }

    /// Seminorm `‖∇∇_h y‖` of a DOF vector.
    pub fn seminorm(&self, x: &[f64]) -> f64 {
        self.quadratic_form(x).max(0.0).sqrt()
    }

    /// Expands the block structure into scalar triplets.
    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for v in 0..self.vertex_count {
            let (cols, blocks) = self.row(v);
            for (b, &w) in blocks.iter().zip(cols) {
                for c in 0..3 {
                    for s in 0..3 {
                        for s2 in 0..3 {
                            let val = b[(s, s2)];
                            if val != 0.0 {
                                t.push((dof_index(v, c, s), dof_index(w, c, s2), val));
                            }
                        }
                    }
                }
            }
        }
        t
    }
}

/// Assembles the stiffness matrix of `∫ ∇(∇_h ·) : ∇(∇_h ·)` on a mesh.
///
/// Deterministic two-phase scheme: local element matrices are computed
/// cell by cell and scattered serially, so repeated assemblies produce
/// bitwise identical values.
pub fn assemble_stiffness(mesh: &Mesh) -> StiffnessMatrix {
    let nv = mesh.vertex_count();
    let mut neighbor_sets: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for v in 0..nv {
        let mut set = vec![v];
        for &cell in mesh.vertex_cells(v) {
            set.extend_from_slice(&mesh.cell_corners(cell));
        }
        set.sort_unstable();
        set.dedup();
        neighbor_sets[v] = set;
    }
    let mut row_ptr = Vec::with_capacity(nv + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    for set in &neighbor_sets {
        col_idx.extend_from_slice(set);
        row_ptr.push(col_idx.len());
    }
    let mut blocks = vec![SMatrix::<f64, 3, 3>::zeros(); col_idx.len()];

    for cell in 0..mesh.cell_count() {
        let local = local_element_stiffness(mesh.cell_extent(cell));
        let corners = mesh.cell_corners(cell);
        for (a, &va) in corners.iter().enumerate() {
            let row = &col_idx[row_ptr[va]..row_ptr[va + 1]];
            for (b, &vb) in corners.iter().enumerate() {
                let k = row.binary_search(&vb).expect("neighbor present");
                let block = &mut blocks[row_ptr[va] + k];
                for t in 0..3 {
                    for t2 in 0..3 {
                        block[(t, t2)] += local[(3 * a + t, 3 * b + t2)];
                    }
                }
            }
        }
    }

    StiffnessMatrix { vertex_count: nv, row_ptr, col_idx, blocks }
}

/// 12x12 element matrix of `∫_T ∇(∇_h w) : ∇(∇_h w)` for one scalar
/// component (value, d1, d2 at the four corners in tensor order).
pub fn local_element_stiffness(extent: (f64, f64)) -> SMatrix<f64, 12, 12> {
    let map = local_discrete_gradient(extent).expect("cells have positive extent");
    let k9 = q2::q2_stiffness(extent.0, extent.1);
    let (d1, d2) = map.parts();
    d1.transpose() * k9 * d1 + d2.transpose() * k9 * d2
}

/// Assembles the right-hand side of one inner iteration of the flow.
///
/// The unknown of the linear solve is the update `u = y_next - y_k`,
/// which satisfies homogeneous boundary conditions and the linearized
/// nodal constraint, so the constraint rows carry zero right-hand side
/// and the bending history term enters here:
///
/// ```text
///   rhs(w) = -(∇∇_h y_k, ∇∇_h w) - Z-coupling(Φ; w) + (f, w)_h
/// ```
///
/// with the coupling terms linearized at the current inner iterate `Φ`.
/// The returned vector is indexed over all scalar DOFs; restriction to
/// the free ones happens when the saddle system is solved.
pub fn assemble_flow_rhs(
    y_k: &DeformationField,
    phi: &GradientField,
    data: &ProblemData,
    stiffness: &StiffnessMatrix,
) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; stiffness.dim()];
    stiffness.matvec(y_k.dofs(), &mut rhs);
    for r in rhs.iter_mut() {
        *r = -*r;
    }
    add_load_rhs(y_k.mesh(), data, &mut rhs);
    add_coupling_rhs_from(
        y_k.mesh(),
        |cell, corner| phi.cell_values(cell)[corner_point(corner)],
        data,
        &mut rhs,
    )?;
    Ok(rhs)
}

/// Lagrange point index of a tensor-order corner.
#[inline]
fn corner_point(corner: usize) -> usize {
    [0, 2, 6, 8][corner]
}

/// Adds `(f, w)_h` to the value slots of the right-hand side.
pub(crate) fn add_load_rhs(mesh: &Mesh, data: &ProblemData, rhs: &mut [f64]) {
    for cell in 0..mesh.cell_count() {
        let f = data.load.at(cell);
        if f == Vector3::zeros() {
            continue;
        }
        let quarter = 0.25 * mesh.cell_area(cell);
        for &v in &mesh.cell_corners(cell) {
            for c in 0..3 {
                rhs[dof_index(v, c, 0)] += quarter * f[c];
            }
        }
    }
}

/// Adds the negated derivative of the curvature coupling, linearized at
/// the gradient values supplied by `phi_at` (cell, tensor corner).
pub(crate) fn add_coupling_rhs_from(
    mesh: &Mesh,
    phi_at: impl Fn(usize, usize) -> Matrix3x2<f64>,
    data: &ProblemData,
    rhs: &mut [f64],
) -> Result<()> {
    for cell in 0..mesh.cell_count() {
        let z = data.spontaneous_curvature.at(cell);
        if z == Matrix2::zeros() {
            continue;
        }
        let (w, h) = mesh.cell_extent(cell);
        let quarter = 0.25 * w * h;
        let corners = mesh.cell_corners(cell);
        let grads = [phi_at(cell, 0), phi_at(cell, 1), phi_at(cell, 2), phi_at(cell, 3)];
        let a = bilinear_corner_derivatives(&grads, w, h);

        for corner in 0..4 {
            let g = &grads[corner];
            let c1 = g.column(0).into_owned();
            let c2 = g.column(1).into_owned();
            let (n1, n2) = (c1.norm(), c2.norm());
            if n1 * n1 < 1.0 - METRIC_TOLERANCE || n2 * n2 < 1.0 - METRIC_TOLERANCE {
                return Err(Error::InadmissibleState(format!(
                    "gradient column shorter than one at vertex {} (cell {cell})",
                    corners[corner]
                )));
            }
            let u1 = c1 / n1;
            let u2 = c2 / n2;
            let nrm = u1.cross(&u2);

            // Term linear in the test gradient through I¹:
            // Σ_ij Z_ij (∂_i I¹[Ψ_j]) · n̂ pairs each corner with its x- or
            // y-neighbor exactly as in `bilinear_corner_derivatives`.
            let mut scatter = |vertex: usize, j: usize, coeff: Vector3<f64>| {
                for c in 0..3 {
                    rhs[dof_index(vertex, c, 1 + j)] -= quarter * coeff[c];
                }
            };
            for j in 0..2 {
                let (lo, hi) = if corner < 2 {
                    (corners[0], corners[1])
                } else {
                    (corners[2], corners[3])
                };
                let coeff = nrm * (z[(0, j)] / w);
                scatter(hi, j, coeff);
                scatter(lo, j, -coeff);

                let (lo, hi) = if corner % 2 == 0 {
                    (corners[0], corners[2])
                } else {
                    (corners[1], corners[3])
                };
                let coeff = nrm * (z[(1, j)] / h);
                scatter(hi, j, coeff);
                scatter(lo, j, -coeff);
            }

            // Term from the variation of the normalized cross product:
            // Σ_ij Z_ij a_ij · [P(Φ₁)Ψ₁ × Φ̂₂ + Φ̂₁ × P(Φ₂)Ψ₂]
            //   = (P(Φ₁) g₁) · Ψ₁ + (P(Φ₂) g₂) · Ψ₂
            // with g₁ = Σ Z_ij Φ̂₂ × a_ij and g₂ = Σ Z_ij a_ij × Φ̂₁.
            let mut g1 = Vector3::zeros();
            let mut g2 = Vector3::zeros();
            for i in 0..2 {
                for j in 0..2 {
                    g1 += u2.cross(&a[corner][i][j]) * z[(i, j)];
                    g2 += a[corner][i][j].cross(&u1) * z[(i, j)];
                }
            }
            let p1 = unit_vector_jacobian(&c1) * g1;
            let p2 = unit_vector_jacobian(&c2) * g2;
            for c in 0..3 {
                rhs[dof_index(corners[corner], c, 1)] -= quarter * p1[c];
                rhs[dof_index(corners[corner], c, 2)] -= quarter * p2[c];
            }
        }
    }
    Ok(())
}

/// The Z-dependent and load parts of the flow right-hand side alone
/// (no bending term), linearized at the gradients of `y` itself. This is
/// the negated variational derivative of `coupling + constant - load`,
/// which finite differences of the energy can verify directly.
pub fn coupling_and_load_rhs(y: &DeformationField, data: &ProblemData) -> Result<Vec<f64>> {
    let mesh = y.mesh();
    let mut rhs = vec![0.0; DOFS_PER_VERTEX * mesh.vertex_count()];
    add_load_rhs(mesh, data, &mut rhs);
    add_coupling_rhs_from(
        mesh,
        |cell, corner| {
            let v = mesh.cell_corners(cell)[corner];
            y.gradient(v)
        },
        data,
        &mut rhs,
    )?;
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, BoundarySelector, DomainSpec, Shape};
    use std::sync::Arc;

    fn benchmark_mesh(refinements: u32) -> Arc<Mesh> {
        Arc::new(
            build_mesh(&DomainSpec {
                shape: Shape::Rectangle { x0: -5.0, x1: 5.0, y0: -2.0, y1: 2.0 },
                refinements,
                dirichlet: BoundarySelector::Left,
            })
            .unwrap(),
        )
    }

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
    fn flat_state_energy_is_constant_term() {
        let mesh = benchmark_mesh(2);
        let y = DeformationField::flat(mesh);
        let data = ProblemData::new(-Matrix2::identity(), Vector3::zeros()).unwrap();
        let e = discrete_energy(&y, &data).unwrap();
        assert!(e.bending.abs() < 1e-12);
        assert!(e.coupling.abs() < 1e-12);
        assert!((e.constant - 40.0).abs() < 1e-12 * 40.0);
        assert_eq!(e.load, 0.0);
        assert!((e.total - 40.0).abs() < 1e-12 * 40.0);

        let reported = reporting_energy(&y, &data.spontaneous_curvature);
        assert!((reported - 40.0).abs() < 1e-12 * 40.0);
        assert_eq!(isometry_defect(&y), 0.0);
    }

    #[test]
    fn breakdown_total_is_sum_of_parts() {
        let mesh = unit_mesh(2);
        let y = DeformationField::flat(mesh);
        let data = ProblemData::new(
            Matrix2::new(-1.0, 0.5, 0.5, -2.0),
            Vector3::new(0.3, -0.1, 0.02),
        )
        .unwrap();
        let e = discrete_energy(&y, &data).unwrap();
        let sum = e.bending + e.coupling + e.constant - e.load;
        assert!((e.total - sum).abs() <= 1e-12 * e.total.abs().max(1.0));
        // (f, y)_h with flat y on the unit square: f₁/2 + f₂/2.
        assert!((e.load - (0.3 - 0.1) * 0.5).abs() < 1e-14);
    }

    #[test]
    fn vertex_quadrature_examples() {
        let mesh = benchmark_mesh(3);
        let one = |_: usize, _: [f64; 2]| 1.0;
        assert!((discrete_inner_product(&mesh, one, one) - 40.0).abs() < 1e-12 * 40.0);
        let c = |_: usize, _: [f64; 2]| -2.5f64;
        assert!((discrete_lp_norm(&mesh, c, 1.0) - 2.5 * 40.0).abs() < 1e-12 * 100.0);

        let unit = unit_mesh(0);
        let x1 = |_: usize, x: [f64; 2]| x[0];
        assert!((discrete_inner_product(&unit, x1, one) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn vertex_quadrature_is_exact_for_bilinear_products() {
        // (φ, ψ)_h equals ∫ φψ when the product is cellwise at most
        // bilinear: check on monomials over a shifted rectangle.
        let mesh = Arc::new(
            build_mesh(&DomainSpec {
                shape: Shape::Rectangle { x0: 1.0, x1: 3.0, y0: -1.0, y1: 2.0 },
                refinements: 2,
                dirichlet: BoundarySelector::Left,
            })
            .unwrap(),
        );
        let cases: [(fn(usize, [f64; 2]) -> f64, fn(usize, [f64; 2]) -> f64, f64); 3] = [
            (|_, x| x[0], |_, _| 1.0, 12.0), // ∫ x over (1,3)x(-1,2)
            (|_, x| x[0], |_, x| x[1], 6.0), // ∫ xy
            (|_, x| x[1], |_, _| 1.0, 3.0),  // ∫ y
        ];
        for (phi, psi, exact) in cases {
            let got = discrete_inner_product(&mesh, phi, psi);
            assert!(
                (got - exact).abs() < 1e-12 * exact.abs().max(1.0),
                "{got} vs {exact}"
            );
        }
    }

    #[test]
    fn stiffness_is_symmetric_and_kills_affine_maps() {
        let mesh = benchmark_mesh(1);
        let k = assemble_stiffness(&mesh);
        assert_eq!(k.dim(), 81);

        let mut dense = vec![vec![0.0; k.dim()]; k.dim()];
        for (i, j, v) in k.to_triplets() {
            dense[i][j] += v;
        }
        let mut max = 0.0f64;
        let mut asym = 0.0f64;
        for i in 0..k.dim() {
            for j in 0..k.dim() {
                max = max.max(dense[i][j].abs());
                asym = asym.max((dense[i][j] - dense[j][i]).abs());
            }
        }
        assert!(asym <= 1e-12 * max);

        // Affine deformation: constant gradient, zero discrete Hessian.
        let a = Matrix3x2::new(0.3, -0.7, 1.1, 0.2, -0.4, 0.9);
        let b = Vector3::new(0.5, -2.0, 3.0);
        let mut y = DeformationField::zeros(mesh);
        for v in 0..y.mesh().vertex_count() {
            let p = y.mesh().vertex(v);
            y.set_value(v, a * nalgebra::Vector2::new(p[0], p[1]) + b);
            y.set_gradient(v, a);
        }
        let mut out = vec![0.0; k.dim()];
        k.matvec(y.dofs(), &mut out);
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-10, "K * affine = {norm}");
        assert!(k.quadratic_form(y.dofs()).abs() < 1e-12);
    }

    #[test]
    fn assembly_is_deterministic() {
        let mesh = benchmark_mesh(2);
        let k1 = assemble_stiffness(&mesh);
        let k2 = assemble_stiffness(&mesh);
        assert_eq!(k1.to_triplets(), k2.to_triplets());
    }

    #[test]
    fn bending_gauss_matches_element_quadratic_form() {
        // Dual route: 3x3 Gauss integration of |∇Φ|² against the
        // assembled quadratic form.
        let mesh = unit_mesh(2);
        let mut y = DeformationField::zeros(mesh.clone());
        for v in 0..mesh.vertex_count() {
            let p = mesh.vertex(v);
            y.set_value(
                v,
                Vector3::new(p[0] + 0.1 * (p[1] * 2.1).sin(), p[1], 0.2 * p[0] * p[0]),
            );
            y.set_gradient(
                v,
                Matrix3x2::new(1.0, 0.21 * (p[1] * 2.1).cos(), 0.0, 1.0, 0.4 * p[0], 0.0),
            );
        }
        let k = assemble_stiffness(&mesh);
        let via_k = k.quadratic_form(y.dofs());
        let via_gauss: f64 = (0..mesh.cell_count())
            .map(|cell| cell_bending_integral(&y, cell))
            .sum();
        assert!((via_k - via_gauss).abs() <= 1e-12 * via_k.max(1.0));
    }

    #[test]
    fn unit_vector_jacobian_closed_forms() {
        let p = unit_vector_jacobian(&Vector3::new(1.0, 0.0, 0.0));
        let expected = Matrix3::from_diagonal(&Vector3::new(0.0, 1.0, 1.0));
        assert!((p - expected).norm() < 1e-15);
        let p = unit_vector_jacobian(&Vector3::new(2.0, 0.0, 0.0));
        let expected = Matrix3::from_diagonal(&Vector3::new(0.0, 0.5, 0.5));
        assert!((p - expected).norm() < 1e-15);
    }

    #[test]
    fn inadmissible_state_is_rejected() {
        let mesh = unit_mesh(1);
        let mut y = DeformationField::flat(mesh);
        let mut g = y.gradient(0);
        g[(0, 0)] = 0.5;
        y.set_gradient(0, g);
        let data = ProblemData::new(-Matrix2::identity(), Vector3::zeros()).unwrap();
        assert!(matches!(
            discrete_energy(&y, &data),
            Err(Error::InadmissibleState(_))
        ));
    }

    #[test]
    fn nonsymmetric_curvature_is_rejected() {
        let z = Matrix2::new(-1.0, 0.3, -0.3, -1.0);
        assert!(ProblemData::new(z, Vector3::zeros()).is_err());
    }

    #[test]
    fn pure_bending_energy_is_nonnegative_for_admissible_states() {
        // Random nodal isometries: gradient = R * I₃ₓ₂ with R a rotation.
        let mesh = unit_mesh(2);
        let data = ProblemData::new(Matrix2::zeros(), Vector3::zeros()).unwrap();
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..5 {
            let mut y = DeformationField::zeros(mesh.clone());
            for v in 0..mesh.vertex_count() {
                let axis = Vector3::new(next(), next(), next());
                let angle = next();
                let r = nalgebra::Rotation3::from_scaled_axis(axis.normalize() * angle);
                let g = r.matrix() * Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0);
                y.set_value(v, Vector3::new(next(), next(), next()));
                y.set_gradient(v, g);
            }
            let e = discrete_energy(&y, &data).unwrap();
            assert!(e.total >= 0.0);
            assert_eq!(e.total, e.bending);
        }
    }
}
