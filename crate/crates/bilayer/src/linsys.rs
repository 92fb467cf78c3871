//! Sparse symmetric storage and the direct solver for the constrained
//! systems of the gradient flow.
//!
//! Every inner iteration solves
//!
//! ```text
//!   [ (1/τ + 1) K   Cᵀ ] [ u ]   [ b ]
//!   [      C        0  ] [ λ ] = [ 0 ]
//! ```
//!
//! where `K` is the discrete-Hessian stiffness restricted to the free
//! vertices and `C` stacks one 3x6 block per free vertex acting on that
//! vertex's gradient slots only. Because the constraints are node-local
//! and of full rank, the system is reduced exactly: each vertex carries an
//! orthonormal basis `N_z` of the nullspace of its block, the reduced
//! matrix `Nᵀ A N` is symmetric positive definite, and a banded Cholesky
//! factorization (vertices are numbered row by row) solves it directly.
//! Multipliers are recovered per vertex from the 3x3 normal equations of
//! the residual, so the constraint rows are satisfied to round-off.
//!
//! The factorization is built once per outer step of the flow (only the
//! constraint blocks change between steps) and reused across all inner
//! iterations.

use std::sync::Arc;

use nalgebra::{SMatrix, SVector, Vector3};

use crate::energy::StiffnessMatrix;
use crate::kirchhoff::DOFS_PER_VERTEX;
use crate::{Error, Result};

/// Accepted relative residual of a direct solve.
pub const SOLVE_TOLERANCE: f64 = 1e-9;

/// General sparse matrix in compressed-row form, assembled from triplets
/// with duplicate entries summed and explicit zeros dropped.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn from_triplets(
        dim: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        symmetric: bool,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        // Drop entries that summed to exactly zero.
        let mut out_col = Vec::with_capacity(col_idx.len());
        let mut out_val = Vec::with_capacity(values.len());
        let mut out_ptr = vec![0usize; dim + 1];
        let mut k = 0;
        for i in 0..dim {
            let count = row_ptr[i + 1];
            for _ in 0..count {
                if values[k] != 0.0 {
                    out_col.push(col_idx[k]);
                    out_val.push(values[k]);
                    out_ptr[i + 1] += 1;
                }
                k += 1;
            }
        }
        for i in 0..dim {
            out_ptr[i + 1] += out_ptr[i];
        }
        SparseMatrix { dim, row_ptr: out_ptr, col_idx: out_col, values: out_val, symmetric }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out[i] = acc;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }
}

/// The linearized nodal constraints: one 3x6 block per free vertex acting
/// on that vertex's gradient slots `(component, derivative)`, flattened
/// as `2*component + derivative`.
#[derive(Debug, Clone)]
pub struct NodalConstraints {
    /// Sorted by vertex index; clamped vertices carry no block.
    pub blocks: Vec<(usize, SMatrix<f64, 3, 6>)>,
}

impl NodalConstraints {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total number of constraint rows.
    pub fn rows(&self) -> usize {
        3 * self.blocks.len()
    }
}

/// Dot product with four independent accumulators so the factorization
/// inner loop vectorizes.
#[inline]
fn band_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Banded Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
struct BandCholesky {
    n: usize,
    bw: usize,
    /// Row-major band storage: entry `(i, j)` with `i - bw <= j <= i`
    /// lives at `i * (bw + 1) + (j + bw - i)`.
    data: Vec<f64>,
}

impl BandCholesky {
    fn zeros(n: usize, bw: usize) -> Self {
        BandCholesky { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.pos(i, j);
        self.data[p] += v;
    }

    /// In-place factorization. Fails on a non-positive pivot.
    fn factor(&mut self) -> Result<()> {
        let stride = self.bw + 1;
        for i in 0..self.n {
            let lo_i = i.saturating_sub(self.bw);
            let (head, row_i) = self.data.split_at_mut(i * stride);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(self.bw));
                let len = j - lo;
                let off_i = lo + self.bw - i;
                let s = if j < i {
                    let row_j = &head[j * stride..(j + 1) * stride];
                    let dot = band_dot(
                        &row_i[off_i..off_i + len],
                        &row_j[lo + self.bw - j..lo + self.bw - j + len],
                    );
                    (row_i[j + self.bw - i] - dot) / row_j[self.bw]
                } else {
                    let dot = band_dot(&row_i[off_i..off_i + len], &row_i[off_i..off_i + len]);
                    let s = row_i[self.bw] - dot;
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::InadmissibleState(format!(
                            "system composition is numerically singular at pivot {i} (value {s:.3e})"
                        )));
                    }
                    s.sqrt()
                };
                row_i[j + self.bw - i] = s;
            }
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b` in place.
    fn solve(&self, b: &mut [f64]) {
        let stride = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let off = i * stride + (lo + self.bw - i);
            let mut acc = b[i];
            for (k, idx) in (lo..i).enumerate() {
                acc -= self.data[off + k] * b[idx];
            }
            b[i] = acc / self.data[i * stride + self.bw];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut acc = b[i];
            for k in i + 1..=hi {
                acc -= self.data[k * stride + (i + self.bw - k)] * b[k];
            }
            b[i] = acc / self.data[i * stride + self.bw];
        }
    }
}

/// Solution of one saddle solve: the update over all scalar DOFs (zero at
/// clamped vertices) and one multiplier triple per free vertex.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub update: Vec<f64>,
    pub multipliers: Vec<Vector3<f64>>,
}

/// Factored saddle-point system for one outer step of the flow.
pub struct SaddleSystem {
    stiffness: Arc<StiffnessMatrix>,
    scale: f64,
    free_vertices: Vec<usize>,
    free_index: Vec<Option<usize>>,
    constraints: Vec<SMatrix<f64, 3, 6>>,
    null_bases: Vec<SMatrix<f64, 6, 3>>,
    band: BandCholesky,
}

/// Composes `(1/τ + 1) K` with the constraint blocks and factors the
/// reduced system. The factorization is valid for repeated solves and is
/// reused until the constraints change.
pub fn compose_and_factor(
    stiffness: &Arc<StiffnessMatrix>,
    constraints: &NodalConstraints,
    tau: f64,
) -> Result<SaddleSystem> {
    if !(tau > 0.0) {
        return Err(Error::InadmissibleState(format!(
            "pseudo-timestep {tau} must be positive"
        )));
    }
    let nv = stiffness.vertex_count();
    let mut free_index = vec![None; nv];
    let mut free_vertices = Vec::with_capacity(constraints.len());
    let mut blocks = Vec::with_capacity(constraints.len());
    for (k, &(v, b)) in constraints.blocks.iter().enumerate() {
        if v >= nv {
            return Err(Error::InadmissibleState(format!(
                "constraint block attached to vertex {v} outside the mesh"
            )));
        }
        if free_index[v].is_some() {
            return Err(Error::InadmissibleState(format!(
                "duplicate constraint block at vertex {v}"
            )));
        }
        free_index[v] = Some(k);
        free_vertices.push(v);
        blocks.push(b);
    }

    let mut null_bases = Vec::with_capacity(blocks.len());
    for (&v, b) in free_vertices.iter().zip(&blocks) {
        null_bases.push(constraint_null_basis(b).map_err(|_| {
            Error::InadmissibleState(format!("constraint block at vertex {v} is rank deficient"))
        })?);
    }

    let scale = 1.0 / tau + 1.0;
    let n = 6 * free_vertices.len();

    // Exact bandwidth of the reduced matrix under the free ordering.
    let mut bw = 5usize;
    for (fi, &v) in free_vertices.iter().enumerate() {
        let (cols, _) = stiffness.row(v);
        for &w in cols {
            if let Some(fj) = free_index[w] {
                if fj <= fi {
                    bw = bw.max(6 * (fi - fj) + 5);
                }
            }
        }
    }

    let mut band = BandCholesky::zeros(n, bw);
    fill_reduced(&mut band, stiffness, scale, &free_vertices, &free_index, &null_bases);
    band.factor()?;

    Ok(SaddleSystem {
        stiffness: stiffness.clone(),
        scale,
        free_vertices,
        free_index,
        constraints: blocks,
        null_bases,
        band,
    })
}

/// Writes the lower triangle of `Nᵀ (scale · K) N` into the band storage.
fn fill_reduced(
    band: &mut BandCholesky,
    stiffness: &StiffnessMatrix,
    scale: f64,
    free_vertices: &[usize],
    free_index: &[Option<usize>],
    null_bases: &[SMatrix<f64, 6, 3>],
) {
    for (fi, &v) in free_vertices.iter().enumerate() {
        let nv_basis = &null_bases[fi];
        let (cols, blocks) = stiffness.row(v);
        for (s, &w) in blocks.iter().zip(cols) {
            let Some(fj) = free_index[w] else { continue };
            if fj > fi {
                continue;
            }
            let nw_basis = &null_bases[fj];
            let s = s * scale;

            // Value-value: diagonal in the component index.
            for c in 0..3 {
                let (i, j) = (6 * fi + c, 6 * fj + c);
                if i >= j {
                    band.add(i, j, s[(0, 0)]);
                }
            }
            // Value(v) x null(w).
            for c in 0..3 {
                for k in 0..3 {
                    let m = s[(0, 1)] * nw_basis[(2 * c, k)] + s[(0, 2)] * nw_basis[(2 * c + 1, k)];
                    let (i, j) = (6 * fi + c, 6 * fj + 3 + k);
                    if i >= j {
                        band.add(i, j, m);
                    }
                }
            }
            // Null(v) x value(w).
            for k in 0..3 {
                for c in 0..3 {
                    let m = nv_basis[(2 * c, k)] * s[(1, 0)] + nv_basis[(2 * c + 1, k)] * s[(2, 0)];
                    let (i, j) = (6 * fi + 3 + k, 6 * fj + c);
                    if i >= j {
                        band.add(i, j, m);
                    }
                }
            }
            // Null(v) x null(w).
            for k in 0..3 {
                for l in 0..3 {
                    let mut m = 0.0;
                    for c in 0..3 {
                        for a in 0..2 {
                            for b2 in 0..2 {
                                m += nv_basis[(2 * c + a, k)]
                                    * s[(1 + a, 1 + b2)]
                                    * nw_basis[(2 * c + b2, l)];
                            }
                        }
                    }
                    let (i, j) = (6 * fi + 3 + k, 6 * fj + 3 + l);
                    if i >= j {
                        band.add(i, j, m);
                    }
                }
            }
        }
    }
}

/// Orthonormal basis of the nullspace of a full-rank 3x6 block, via
/// Householder QR of its transpose.
fn constraint_null_basis(b: &SMatrix<f64, 3, 6>) -> std::result::Result<SMatrix<f64, 6, 3>, ()> {
    let mut r = b.transpose(); // 6x3
    let mut hh: [SVector<f64, 6>; 3] = [SVector::zeros(); 3];
    let scale = b.norm().max(1.0);
    for k in 0..3 {
        let mut v = SVector::<f64, 6>::zeros();
        let mut norm_sq = 0.0;
        for i in k..6 {
            v[i] = r[(i, k)];
            norm_sq += v[i] * v[i];
        }
        let norm = norm_sq.sqrt();
        if norm < 1e-10 * scale {
            return Err(()); // rank deficient
        }
        let alpha = if v[k] >= 0.0 { -norm } else { norm };
        v[k] -= alpha;
        let vnorm = v.norm();
        if vnorm >= 1e-14 * scale {
            v /= vnorm;
            hh[k] = v;
            for col in k..3 {
                let mut dot = 0.0;
                for i in 0..6 {
                    dot += v[i] * r[(i, col)];
                }
                for i in 0..6 {
                    r[(i, col)] -= 2.0 * dot * v[i];
                }
            }
        } else {
            hh[k] = SVector::zeros();
        }
        if r[(k, k)].abs() < 1e-10 * scale {
            return Err(());
        }
    }
    // Null basis: columns 3..6 of Q = H₀ H₁ H₂, i.e. H₀(H₁(H₂ e_j)).
    let mut basis = SMatrix::<f64, 6, 3>::zeros();
    for j in 0..3 {
        let mut e = SVector::<f64, 6>::zeros();
        e[3 + j] = 1.0;
        for k in (0..3).rev() {
            let v = &hh[k];
            let dot = v.dot(&e);
            e -= v * (2.0 * dot);
        }
        for i in 0..6 {
            basis[(i, j)] = e[i];
        }
    }
    Ok(basis)
}

impl SaddleSystem {
    pub fn free_vertex_count(&self) -> usize {
        self.free_vertices.len()
    }

    pub fn constraint_rows(&self) -> usize {
        3 * self.free_vertices.len()
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free_vertices
    }

    /// Solves for the update and the constraint multipliers. `rhs` is
    /// indexed over all scalar DOFs; rows of clamped vertices are ignored
    /// (test functions vanish there) and the constraint right-hand side
    /// is zero by construction.
    pub fn solve(&self, rhs: &[f64]) -> Result<SaddleSolution> {
        let nv = self.stiffness.vertex_count();
        assert_eq!(rhs.len(), DOFS_PER_VERTEX * nv);

        // Reduce: values pass through, gradient slots project onto the
        // constraint nullspace.
        let mut reduced = vec![0.0; 6 * self.free_vertices.len()];
        for (fi, &v) in self.free_vertices.iter().enumerate() {
            let base = DOFS_PER_VERTEX * v;
            let nb = &self.null_bases[fi];
            for c in 0..3 {
                reduced[6 * fi + c] = rhs[base + 3 * c];
            }
            for k in 0..3 {
                let mut acc = 0.0;
                for c in 0..3 {
                    acc += nb[(2 * c, k)] * rhs[base + 3 * c + 1]
                        + nb[(2 * c + 1, k)] * rhs[base + 3 * c + 2];
                }
                reduced[6 * fi + 3 + k] = acc;
            }
        }

        self.band.solve(&mut reduced);

        // Expand to the full DOF vector.
        let mut update = vec![0.0; DOFS_PER_VERTEX * nv];
        for (fi, &v) in self.free_vertices.iter().enumerate() {
            let base = DOFS_PER_VERTEX * v;
            let nb = &self.null_bases[fi];
            for c in 0..3 {
                update[base + 3 * c] = reduced[6 * fi + c];
            }
            for c in 0..3 {
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for k in 0..3 {
                    d1 += nb[(2 * c, k)] * reduced[6 * fi + 3 + k];
                    d2 += nb[(2 * c + 1, k)] * reduced[6 * fi + 3 + k];
                }
                update[base + 3 * c + 1] = d1;
                update[base + 3 * c + 2] = d2;
            }
        }

        // Multipliers from the gradient-slot residual: Cᵀλ = b - A u on
        // the free rows; each vertex solves its own 3x3 normal equations.
        let mut au = vec![0.0; update.len()];
        self.stiffness.matvec(&update, &mut au);
        let mut multipliers = Vec::with_capacity(self.free_vertices.len());
        for (fi, &v) in self.free_vertices.iter().enumerate() {
            let base = DOFS_PER_VERTEX * v;
            let mut res = SVector::<f64, 6>::zeros();
            for c in 0..3 {
                res[2 * c] = rhs[base + 3 * c + 1] - self.scale * au[base + 3 * c + 1];
                res[2 * c + 1] = rhs[base + 3 * c + 2] - self.scale * au[base + 3 * c + 2];
            }
            let b = &self.constraints[fi];
            let normal = b * b.transpose();
            let lambda = normal
                .cholesky()
                .ok_or_else(|| {
                    Error::InadmissibleState(format!(
                        "constraint normal equations singular at vertex {v}"
                    ))
                })?
                .solve(&(b * res));
            multipliers.push(lambda);
        }

        let solution = SaddleSolution { update, multipliers };
        #[cfg(debug_assertions)]
        {
            let r = self.residual(rhs, &solution);
            if r > SOLVE_TOLERANCE {
                return Err(Error::SolverFailure { residual: r });
            }
        }
        Ok(solution)
    }

    /// Relative residual over the free rows of `A u + Cᵀλ = b` together
    /// with the constraint rows `C u = 0`.
    pub fn residual(&self, rhs: &[f64], solution: &SaddleSolution) -> f64 {
        let mut au = vec![0.0; solution.update.len()];
        self.stiffness.matvec(&solution.update, &mut au);
        let mut num = 0.0;
        let mut den = 0.0;
        for (fi, &v) in self.free_vertices.iter().enumerate() {
            let base = DOFS_PER_VERTEX * v;
            let b = &self.constraints[fi];
            let ct_lambda = b.transpose() * solution.multipliers[fi];
            for c in 0..3 {
                for t in 0..3 {
                    let idx = base + 3 * c + t;
                    let mut lhs = self.scale * au[idx];
                    if t > 0 {
                        lhs += ct_lambda[2 * c + (t - 1)];
                    }
                    num += (lhs - rhs[idx]) * (lhs - rhs[idx]);
                    den += rhs[idx] * rhs[idx];
                }
            }
            let mut g = SVector::<f64, 6>::zeros();
            for c in 0..3 {
                g[2 * c] = solution.update[base + 3 * c + 1];
                g[2 * c + 1] = solution.update[base + 3 * c + 2];
            }
            num += (b * g).norm_squared();
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// Largest constraint violation `max_z |B_z ∇u(z)|_∞` of an update.
    pub fn constraint_violation(&self, update: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (fi, &v) in self.free_vertices.iter().enumerate() {
            let base = DOFS_PER_VERTEX * v;
            let mut g = SVector::<f64, 6>::zeros();
            for c in 0..3 {
                g[2 * c] = update[base + 3 * c + 1];
                g[2 * c + 1] = update[base + 3 * c + 2];
            }
            let r = self.constraints[fi] * g;
            worst = worst.max(r.amax());
        }
        worst
    }
}
