//! The constrained gradient flow that relaxes a plate to equilibrium.
//!
//! Starting from a nodal isometry, each pseudo-time step minimizes
//! `E[y] + ‖∇∇_h(y - y_k)‖²/(2τ)` over the affine space `y_k + F[y_k]`,
//! where `F[y_k]` carries homogeneous boundary data and the linearized
//! nodal isometry constraint `sym([∇w(z)]ᵀ∇y_k(z)) = 0`. Under that
//! constraint the nodal metric can only grow, so all iterates stay
//! admissible and the violation of the exact isometry constraint stays
//! proportional to the step size.
//!
//! The step equation is nonlinear through the normalized cross products
//! in the energy derivative; it is solved by a fixed-point iteration that
//! freezes those factors at the previous inner iterate. One factorization
//! per outer step is shared by all inner iterations. The iteration
//! contracts for step sizes below a data-dependent threshold; exceeding
//! the threshold surfaces as a non-convergence error, never as silent
//! damage.
//!
//! Runtime invariants checked on every accepted step:
//!
//! * energy decrease including the implicit penalty term,
//! * nodal metric at or above the identity,
//! * constraint residual at solver tolerance.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Matrix2, Matrix3x2, SMatrix, Vector3};

use crate::energy::{
    add_coupling_rhs_from, add_load_rhs, assemble_stiffness, check_admissible, discrete_energy,
    isometry_defect, metric_min_eigenvalue, reporting_energy, CellField, EnergyBreakdown,
    ProblemData, StiffnessMatrix,
};
use crate::kirchhoff::{cell_gradient_values, q2, DeformationField};
use crate::linsys::{compose_and_factor, NodalConstraints, SaddleSystem, SOLVE_TOLERANCE};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Relative slack on the per-step energy-decrease inequality.
pub const ENERGY_DECREASE_TOLERANCE: f64 = 1e-10;

/// Slack on the nodal metric monotonicity bound.
pub const METRIC_MONOTONICITY_TOLERANCE: f64 = 1e-10;

/// Admissibility tolerance for initial states.
pub const INITIAL_ISOMETRY_TOLERANCE: f64 = 1e-12;

/// Parameters of the outer flow and the inner fixed-point iteration.
#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    /// Pseudo-timestep of the implicit descent.
    pub tau: f64,
    /// Inner stopping tolerance on `‖∇∇_h(y^{l+1} - y^l)‖`.
    pub delta_stop: f64,
    /// Outer stationarity threshold on `|E_next - E| / τ`.
    pub stop_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Emit a trace record every this many accepted steps.
    pub trace_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            tau: 0.005,
            delta_stop: 1e-4,
            stop_tol: 1e-6,
            max_outer: 2_000_000,
            max_inner: 50,
            trace_every: 1000,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.delta_stop > 0.0 && self.stop_tol > 0.0) {
            return Err(Error::InvalidSpec(
                "tau, delta_stop and stop_tol must be positive".into(),
            ));
        }
        if self.max_inner == 0 || self.max_outer == 0 || self.trace_every == 0 {
            return Err(Error::InvalidSpec(
                "iteration caps and trace stride must be nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the pseudo-time trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    pub energy: EnergyBreakdown,
    pub reporting_energy: f64,
    pub defect: f64,
    pub inner_iters: usize,
    pub wall_ms: f64,
}

/// Why the outer loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `|E_next - E| / τ` dropped below the configured threshold.
    Stationary,
    /// The outer iteration cap was reached first.
    OuterCap,
}

/// Aggregated health counters of one run.
#[derive(Debug, Clone, Copy)]
pub struct FlowDiagnostics {
    /// Largest constraint violation of any accepted update.
    pub max_constraint_violation: f64,
    /// Smallest nodal metric eigenvalue gap seen (negative = below I₂).
    pub min_metric_eigenvalue: f64,
    /// Largest inner iteration count of any step.
    pub max_inner_iters: usize,
    /// Largest measured inner contraction ratio (below one = contraction).
    pub max_contraction_ratio: f64,
    /// Whether the bending term ever exceeded the coercivity budget
    /// `2 (E[y⁰] + |ω| (‖Z‖∞² + ‖f‖∞²))`; logged, not fatal.
    pub coercivity_budget_exceeded: bool,
}

impl Default for FlowDiagnostics {
    fn default() -> Self {
        FlowDiagnostics {
            max_constraint_violation: 0.0,
            min_metric_eigenvalue: f64::INFINITY,
            max_inner_iters: 0,
            max_contraction_ratio: 0.0,
            coercivity_budget_exceeded: false,
        }
    }
}

/// Final state of a run.
#[derive(Debug)]
pub struct FlowState {
    pub step: usize,
    /// Elapsed pseudo-time `step · τ`.
    pub time: f64,
    pub y: DeformationField,
    pub energy: EnergyBreakdown,
    pub defect: f64,
    pub inner_counts: Vec<usize>,
    pub stop: StopReason,
    pub diagnostics: FlowDiagnostics,
}

/// The default initial state: the flat reference configuration with the
/// Dirichlet degrees of freedom overwritten by the interpolated boundary
/// data. The result must be an exact nodal isometry.
pub fn initial_state(mesh: &Arc<Mesh>, data: &ProblemData) -> Result<DeformationField> {
    admit_initial_state(DeformationField::flat(mesh.clone()), data)
}

/// Validates a caller-supplied initial state: applies the boundary data
/// and rejects anything that is not a nodal isometry to round-off.
pub fn admit_initial_state(
    mut y: DeformationField,
    data: &ProblemData,
) -> Result<DeformationField> {
    let mesh = y.mesh().clone();
    for v in 0..mesh.vertex_count() {
        if mesh.is_dirichlet_vertex(v) {
            let x = mesh.vertex(v);
            let grad = (data.boundary.gradient)(x);
            let gram = grad.transpose() * grad;
            if (gram - Matrix2::identity()).amax() > INITIAL_ISOMETRY_TOLERANCE {
                return Err(Error::InadmissibleState(format!(
                    "boundary gradient data is not an isometry at vertex {v}"
                )));
            }
            y.set_value(v, (data.boundary.value)(x));
            y.set_gradient(v, grad);
        }
    }
    for v in 0..mesh.vertex_count() {
        let gram = y.vertex_metric(v);
        if (gram - Matrix2::identity()).amax() > INITIAL_ISOMETRY_TOLERANCE {
            return Err(Error::InadmissibleState(format!(
                "initial state is not a nodal isometry at vertex {v}"
            )));
        }
    }
    Ok(y)
}

/// Builds the linearized nodal constraint blocks at the current state:
/// for every free vertex, the three independent entries of
/// `sym([∇w(z)]ᵀ ∇y(z))` as rows over the six gradient slots.
pub fn build_constraints(y: &DeformationField) -> Result<NodalConstraints> {
    check_admissible(y)?;
    let mesh = y.mesh();
    let mut blocks = Vec::new();
    for v in 0..mesh.vertex_count() {
        if mesh.is_dirichlet_vertex(v) {
            continue;
        }
        let g = y.gradient(v);
        let mut b = SMatrix::<f64, 3, 6>::zeros();
        for c in 0..3 {
            b[(0, 2 * c)] = g[(c, 0)];
            b[(1, 2 * c + 1)] = g[(c, 1)];
            b[(2, 2 * c)] = 0.5 * g[(c, 1)];
            b[(2, 2 * c + 1)] = 0.5 * g[(c, 0)];
        }
        blocks.push((v, b));
    }
    if blocks.is_empty() {
        return Err(Error::EmptyDirichlet);
    }
    Ok(NodalConstraints { blocks })
}

/// Result of one accepted outer step.
#[derive(Debug)]
pub struct StepResult {
    pub y_next: DeformationField,
    pub inner_iters: usize,
    /// Ratios of consecutive inner increments (measured contraction).
    pub contraction_ratios: Vec<f64>,
    /// Constraint violation of the accepted update.
    pub constraint_violation: f64,
}

/// Solves one implicit step with the fixed-point iteration, starting at
/// the current state (warm start). `sys` must be the factored system
/// composed from the constraints of `y_k` with the step size of `cfg`.
pub fn fixed_point_step(
    y_k: &DeformationField,
    sys: &SaddleSystem,
    data: &ProblemData,
    cfg: &FlowConfig,
    stiffness: &StiffnessMatrix,
    outer_step: usize,
) -> Result<StepResult> {
    let mesh = y_k.mesh().clone();
    let dim = stiffness.dim();

    // Fixed part of the right-hand side: -(∇∇_h y_k, ∇∇_h ·) + (f, ·)_h.
    let mut rhs_fixed = vec![0.0; dim];
    stiffness.matvec(y_k.dofs(), &mut rhs_fixed);
    for r in rhs_fixed.iter_mut() {
        *r = -*r;
    }
    add_load_rhs(&mesh, data, &mut rhs_fixed);

    let mut y_prev = y_k.clone();
    let mut prev_update = vec![0.0; dim];
    let mut prev_diff: Option<f64> = None;
    let mut ratios = Vec::new();
    let mut diff = vec![0.0; dim];
    let mut rhs = vec![0.0; dim];

    for l in 1..=cfg.max_inner {
        rhs.copy_from_slice(&rhs_fixed);
        add_coupling_rhs_from(
            &mesh,
            |cell, corner| y_prev.gradient(mesh.cell_corners(cell)[corner]),
            data,
            &mut rhs,
        )?;
        let sol = sys.solve(&rhs)?;

        for ((d, &new), &old) in diff.iter_mut().zip(&sol.update).zip(&prev_update) {
            *d = new - old;
        }
        let increment = stiffness.seminorm(&diff);
        if let Some(prev) = prev_diff {
            if prev > 0.0 {
                ratios.push(increment / prev);
            }
        }

        let mut y_next = y_k.clone();
        for (dof, &u) in y_next.dofs_mut().iter_mut().zip(&sol.update) {
            *dof += u;
        }
        y_prev = y_next;
        prev_update = sol.update;

        if increment <= cfg.delta_stop {
            let constraint_violation = sys.constraint_violation(&prev_update);
            return Ok(StepResult {
                y_next: y_prev,
                inner_iters: l,
                contraction_ratios: ratios,
                constraint_violation,
            });
        }
        prev_diff = Some(increment);
    }
    Err(Error::NoConvergence { outer_step, inner_iters: cfg.max_inner })
}

/// Runs the flow from the flat initial state until stationarity or the
/// outer cap, tracing energy, curvature energy and isometry defect.
pub fn run_flow(
    mesh: &Arc<Mesh>,
    data: &ProblemData,
    cfg: &FlowConfig,
) -> Result<(FlowState, Vec<TraceRecord>)> {
    let y0 = initial_state(mesh, data)?;
    run_flow_from(y0, data, cfg)
}

/// Runs the flow from a supplied initial state (validated first).
pub fn run_flow_from(
    y0: DeformationField,
    data: &ProblemData,
    cfg: &FlowConfig,
) -> Result<(FlowState, Vec<TraceRecord>)> {
    run_flow_observed(y0, data, cfg, |_, _| {})
}

/// Like [`run_flow_from`], invoking `observer` with every accepted state
/// (step index starts at 0 for the initial state). Snapshot writers hook
/// in here.
pub fn run_flow_observed(
    y0: DeformationField,
    data: &ProblemData,
    cfg: &FlowConfig,
    mut observer: impl FnMut(usize, &DeformationField),
) -> Result<(FlowState, Vec<TraceRecord>)> {
    cfg.validate()?;
    let y0 = admit_initial_state(y0, data)?;
    let mesh = y0.mesh().clone();
    let stiffness = Arc::new(assemble_stiffness(&mesh));
    let started = Instant::now();

    let mut y = y0;
    let mut energy = discrete_energy(&y, data)?;
    let mut defect = isometry_defect(&y);
    let mut diagnostics = FlowDiagnostics::default();
    let mut inner_counts: Vec<usize> = Vec::new();
    let mut trace = Vec::new();

    let coercivity_budget = {
        let z_sup = match &data.spontaneous_curvature {
            CellField::Constant(z) => z.norm(),
            CellField::PerCell(v) => v.iter().map(|z| z.norm()).fold(0.0, f64::max),
        };
        let f_sup = match &data.load {
            CellField::Constant(f) => f.norm(),
            CellField::PerCell(v) => v.iter().map(|f| f.norm()).fold(0.0, f64::max),
        };
        2.0 * (energy.total.max(0.0) + mesh.area() * (z_sup * z_sup + f_sup * f_sup))
    };

    let push_record = |trace: &mut Vec<TraceRecord>,
                       step: usize,
                       energy: EnergyBreakdown,
                       defect: f64,
                       inner: usize,
                       y: &DeformationField,
                       started: &Instant| {
        trace.push(TraceRecord {
            step,
            time: step as f64 * cfg.tau,
            energy,
            reporting_energy: reporting_energy(y, &data.spontaneous_curvature),
            defect,
            inner_iters: inner,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    };
    push_record(&mut trace, 0, energy, defect, 0, &y, &started);
    observer(0, &y);

    let mut step = 0usize;
    let mut stop = StopReason::OuterCap;
    let mut step_diff = vec![0.0; stiffness.dim()];

    while step < cfg.max_outer {
        let constraints = build_constraints(&y)?;
        let sys = compose_and_factor(&stiffness, &constraints, cfg.tau)?;
        let result = fixed_point_step(&y, &sys, data, cfg, &stiffness, step)?;

        for ((d, &new), &old) in step_diff
            .iter_mut()
            .zip(result.y_next.dofs())
            .zip(y.dofs())
        {
            *d = new - old;
        }
        let penalty = stiffness.quadratic_form(&step_diff) / (2.0 * cfg.tau);
        let e_next = discrete_energy(&result.y_next, data)?;

        // Relative slack with a floor of 1e-16 absolute so that runs whose
        // energy is pure round-off (e.g. unforced flat states) still pass.
        let decrease_slack = ENERGY_DECREASE_TOLERANCE * energy.total.abs().max(1e-6);
        if e_next.total + penalty > energy.total + decrease_slack {
            return Err(Error::InvariantViolation {
                outer_step: step,
                detail: format!(
                    "energy increased: {:.12e} + {:.3e} > {:.12e}",
                    e_next.total, penalty, energy.total
                ),
            });
        }
        let (metric_min, metric_vertex) = metric_min_eigenvalue(&result.y_next);
        if metric_min < -METRIC_MONOTONICITY_TOLERANCE {
            return Err(Error::InvariantViolation {
                outer_step: step,
                detail: format!(
                    "nodal metric fell {metric_min:.3e} below the identity at vertex {metric_vertex}"
                ),
            });
        }
        if result.constraint_violation > SOLVE_TOLERANCE {
            return Err(Error::InvariantViolation {
                outer_step: step,
                detail: format!(
                    "constraint residual {:.3e} above solver tolerance",
                    result.constraint_violation
                ),
            });
        }

        diagnostics.max_constraint_violation = diagnostics
            .max_constraint_violation
            .max(result.constraint_violation);
        diagnostics.min_metric_eigenvalue = diagnostics.min_metric_eigenvalue.min(metric_min);
        diagnostics.max_inner_iters = diagnostics.max_inner_iters.max(result.inner_iters);
        for r in &result.contraction_ratios {
            diagnostics.max_contraction_ratio = diagnostics.max_contraction_ratio.max(*r);
        }
        if e_next.bending > coercivity_budget {
            diagnostics.coercivity_budget_exceeded = true;
        }
        inner_counts.push(result.inner_iters);

        let delta = (e_next.total - energy.total).abs() / cfg.tau;
        step += 1;
        y = result.y_next;
        energy = e_next;
        defect = isometry_defect(&y);
        observer(step, &y);

        let stationary = delta <= cfg.stop_tol;
        if stationary || step == cfg.max_outer || step % cfg.trace_every == 0 {
            push_record(&mut trace, step, energy, defect, result.inner_iters, &y, &started);
        }
        if stationary {
            stop = StopReason::Stationary;
            break;
        }
    }

    Ok((
        FlowState {
            step,
            time: step as f64 * cfg.tau,
            y,
            energy,
            defect,
            inner_counts,
            stop,
            diagnostics,
        },
        trace,
    ))
}

/// Shape classification of a stationary state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Cylinder,
    Other,
}

impl std::fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapeClass::Cylinder => f.write_str("cylinder"),
            ShapeClass::Other => f.write_str("other"),
        }
    }
}

/// A state counts as a cylinder when the dominant curvature diagonal is
/// uniform over the free region and the other curvature entries stay
/// small relative to it. Folded cylinders of the clamped-plate family
/// show a relative spread well below these bounds, while warped states
/// scatter far above them.
pub const CYLINDER_REL_STD: f64 = 0.2;
pub const CYLINDER_OFFDIAG_RATIO: f64 = 0.15;
pub const CYLINDER_CURVATURE_FLOOR: f64 = 0.05;

/// Geometric summary used to classify equilibrium shapes.
#[derive(Debug, Clone, Copy)]
pub struct ShapeSummary {
    pub class: ShapeClass,
    /// Axis-aligned bounds of the deformed vertices: `[min, max]`.
    pub bounding_box: [[f64; 3]; 2],
    /// Largest mean-curvature magnitude `|tr H| / 2` over sample points.
    pub max_mean_curvature: f64,
    /// Mean absolute value of the dominant curvature diagonal.
    pub principal_mean: f64,
    /// Relative standard deviation of the dominant diagonal.
    pub principal_rel_std: f64,
    /// Mean |secondary diagonal| over mean |principal|.
    pub secondary_ratio: f64,
    /// Mean |off-diagonal| over mean |principal|.
    pub shear_ratio: f64,
}

/// Classifies a (stationary) state from the curvature tensor sampled at
/// cell centers away from the clamped boundary.
pub fn classify_shape(y: &DeformationField) -> ShapeSummary {
    let mesh = y.mesh();

    let mut h11 = Vec::new();
    let mut h22 = Vec::new();
    let mut h12 = Vec::new();
    let mut max_mean_curvature = 0.0f64;

    let mut sample_cells: Vec<usize> = (0..mesh.cell_count())
        .filter(|&cell| {
            mesh.cell_corners(cell)
                .iter()
                .all(|&v| !mesh.is_dirichlet_vertex(v))
        })
        .collect();
    if sample_cells.is_empty() {
        sample_cells = (0..mesh.cell_count()).collect();
    }

    for &cell in &sample_cells {
        let (w, hgt) = mesh.cell_extent(cell);
        let vals = cell_gradient_values(y, cell);
        let (px, dpx) = (q2::shape1(0.5), q2::dshape1(0.5));
        let mut phi = Matrix3x2::zeros();
        let mut d1 = Matrix3x2::zeros();
        let mut d2 = Matrix3x2::zeros();
        for p in 0..9 {
            let (ix, iy) = (p % 3, p / 3);
            phi += vals[p] * (px[ix] * px[iy]);
            d1 += vals[p] * (dpx[ix] / w * px[iy]);
            d2 += vals[p] * (px[ix] * dpx[iy] / hgt);
        }
        let normal: Vector3<f64> = phi.column(0).cross(&phi.column(1));
        let e11 = normal.dot(&d1.column(0));
        let e22 = normal.dot(&d2.column(1));
        let e12 = 0.5 * (normal.dot(&d1.column(1)) + normal.dot(&d2.column(0)));
        h11.push(e11);
        h22.push(e22);
        h12.push(e12);
        max_mean_curvature = max_mean_curvature.max(0.5 * (e11 + e22).abs());
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_abs = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;

    let (principal, secondary) = if mean_abs(&h11) >= mean_abs(&h22) {
        (&h11, &h22)
    } else {
        (&h22, &h11)
    };
    let p_mean = mean(principal);
    let p_mean_abs = mean_abs(principal);
    let p_std = (principal
        .iter()
        .map(|x| (x - p_mean) * (x - p_mean))
        .sum::<f64>()
        / principal.len() as f64)
        .sqrt();
    let denom = p_mean_abs.max(f64::MIN_POSITIVE);
    let principal_rel_std = p_std / denom;
    let secondary_ratio = mean_abs(secondary) / denom;
    let shear_ratio = mean_abs(&h12) / denom;

    let class = if p_mean_abs > CYLINDER_CURVATURE_FLOOR
        && principal_rel_std < CYLINDER_REL_STD
        && secondary_ratio < CYLINDER_OFFDIAG_RATIO
        && shear_ratio < CYLINDER_OFFDIAG_RATIO
    {
        ShapeClass::Cylinder
    } else {
        ShapeClass::Other
    };

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in 0..mesh.vertex_count() {
        let p = y.value(v);
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }

    ShapeSummary {
        class,
        bounding_box: [lo, hi],
        max_mean_curvature,
        principal_mean: p_mean_abs,
        principal_rel_std,
        secondary_ratio,
        shear_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, BoundarySelector, DomainSpec, Shape};

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

    fn cylinder_field(mesh: &Arc<Mesh>) -> DeformationField {
        DeformationField::interpolate(
            mesh.clone(),
            |x| Vector3::new(x[0].sin(), x[1], 1.0 - x[0].cos()),
            |x| Matrix3x2::new(x[0].cos(), 0.0, 0.0, 1.0, x[0].sin(), 0.0),
        )
        .unwrap()
    }

    #[test]
    fn flat_initial_state_on_benchmark() {
        let mesh = benchmark_mesh(2);
        let data = ProblemData::new(-Matrix2::identity(), Vector3::zeros()).unwrap();
        let y = initial_state(&mesh, &data).unwrap();
        assert_eq!(isometry_defect(&y), 0.0);
        let e = discrete_energy(&y, &data).unwrap();
        assert!((e.total - 40.0).abs() < 1e-12 * 40.0);
    }

    #[test]
    fn interpolated_cylinder_is_admissible_initial_state() {
        let mesh = Arc::new(
            build_mesh(&DomainSpec {
                shape: Shape::Rectangle {
                    x0: 0.0,
                    x1: 2.0 * std::f64::consts::PI,
                    y0: 0.0,
                    y1: 2.0 * std::f64::consts::PI,
                },
                refinements: 2,
                dirichlet: BoundarySelector::Left,
            })
            .unwrap(),
        );
        let data =
            ProblemData::new(Matrix2::new(-1.0, 0.0, 0.0, -0.5), Vector3::zeros()).unwrap();
        let y = cylinder_field(&mesh);
        assert!(admit_initial_state(y, &data).is_ok());
    }

    #[test]
    fn non_isometric_initial_state_is_rejected() {
        let mesh = benchmark_mesh(1);
        let data = ProblemData::new(-Matrix2::identity(), Vector3::zeros()).unwrap();
        let mut y = DeformationField::flat(mesh);
        let mut g = y.gradient(8);
        g[(0, 0)] = 1.1;
        y.set_gradient(8, g);
        assert!(matches!(
            admit_initial_state(y, &data),
            Err(Error::InadmissibleState(_))
        ));
    }

    #[test]
    fn flat_constraints_have_the_expected_pattern() {
        let mesh = benchmark_mesh(1);
        let y = DeformationField::flat(mesh.clone());
        let c = build_constraints(&y).unwrap();
        assert_eq!(c.len(), mesh.vertex_count() - mesh.dirichlet_vertex_count());
        for (v, b) in &c.blocks {
            assert!(!mesh.is_dirichlet_vertex(*v));
            // Rows: ∂₁w₁ = 0, ∂₂w₂ = 0, ½(∂₂w₁ + ∂₁w₂) = 0.
            let mut expected = SMatrix::<f64, 3, 6>::zeros();
            expected[(0, 0)] = 1.0;
            expected[(1, 3)] = 1.0;
            expected[(2, 1)] = 0.5;
            expected[(2, 2)] = 0.5;
            assert_eq!(*b, expected);
        }
    }

    #[test]
    fn constraint_blocks_have_rank_three_at_random_admissible_states() {
        let mesh = benchmark_mesh(2);
        let mut seed = 11u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut y = DeformationField::flat(mesh.clone());
        for v in 0..mesh.vertex_count() {
            if mesh.is_dirichlet_vertex(v) {
                continue;
            }
            let axis = Vector3::new(next(), next(), next()).normalize();
            let r = nalgebra::Rotation3::from_scaled_axis(axis * next());
            y.set_gradient(v, r.matrix() * Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0));
        }
        let c = build_constraints(&y).unwrap();
        for (_, b) in &c.blocks {
            let svd = nalgebra::SVD::new(*b, false, false);
            let smin = svd.singular_values[2];
            assert!(smin > 1e-8, "constraint block nearly rank deficient: {smin}");
        }
    }

    #[test]
    fn unforced_flow_is_stationary_at_flat_state() {
        let mesh = benchmark_mesh(2);
        let data = ProblemData::new(Matrix2::zeros(), Vector3::zeros()).unwrap();
        let cfg = FlowConfig { tau: 0.01, max_outer: 3, ..Default::default() };
        let y = initial_state(&mesh, &data).unwrap();
        let stiffness = Arc::new(assemble_stiffness(&mesh));
        let constraints = build_constraints(&y).unwrap();
        let sys = compose_and_factor(&stiffness, &constraints, cfg.tau).unwrap();
        let step = fixed_point_step(&y, &sys, &data, &cfg, &stiffness, 0).unwrap();
        assert_eq!(step.inner_iters, 1);
        let drift = step
            .y_next
            .dofs()
            .iter()
            .zip(y.dofs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(drift <= 1e-12, "unforced step moved the state by {drift}");

        let (state, _) = run_flow(&mesh, &data, &cfg).unwrap();
        assert_eq!(state.stop, StopReason::Stationary);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn tiny_inner_budget_reports_non_convergence() {
        let mesh = benchmark_mesh(1);
        let data = ProblemData::new(-Matrix2::identity(), Vector3::zeros()).unwrap();
        let cfg = FlowConfig {
            tau: 0.01,
            delta_stop: 1e-300,
            max_inner: 1,
            max_outer: 10,
            ..Default::default()
        };
        assert!(matches!(
            run_flow(&mesh, &data, &cfg),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn short_benchmark_run_preserves_invariants() {
        let mesh = benchmark_mesh(2);
        let data = ProblemData::new(-Matrix2::identity(), Vector3::zeros()).unwrap();
        let cfg = FlowConfig {
            tau: 0.01,
            delta_stop: 1e-3,
            stop_tol: 1e-6,
            max_outer: 40,
            trace_every: 10,
            ..Default::default()
        };
        let (state, trace) = run_flow(&mesh, &data, &cfg).unwrap();
        assert_eq!(state.step, 40);
        assert!(state.energy.total < 40.0);
        for pair in trace.windows(2) {
            assert!(pair[1].energy.total <= pair[0].energy.total + 1e-10 * 40.0);
        }
        assert!(state.diagnostics.min_metric_eigenvalue > -METRIC_MONOTONICITY_TOLERANCE);
        assert!(state.diagnostics.max_constraint_violation <= SOLVE_TOLERANCE);
        assert!(state.defect > 0.0);
        assert!(state.diagnostics.max_inner_iters <= 10);
    }

    #[test]
    fn metric_growth_telescopes_exactly() {
        // The nodal metric identity: metric(y_k) - I₂ accumulates exactly
        // the outer products of the gradient increments.
        let mesh = benchmark_mesh(2);
        let data = ProblemData::new(-Matrix2::identity(), Vector3::zeros()).unwrap();
        let cfg = FlowConfig { tau: 0.01, delta_stop: 1e-4, max_outer: 25, ..Default::default() };
        let stiffness = Arc::new(assemble_stiffness(&mesh));
        let mut y = initial_state(&mesh, &data).unwrap();
        let nv = mesh.vertex_count();
        let mut accumulated = vec![Matrix2::<f64>::zeros(); nv];
        for step in 0..cfg.max_outer {
            let constraints = build_constraints(&y).unwrap();
            let sys = compose_and_factor(&stiffness, &constraints, cfg.tau).unwrap();
            let result = fixed_point_step(&y, &sys, &data, &cfg, &stiffness, step).unwrap();
            for v in 0..nv {
                let dg = result.y_next.gradient(v) - y.gradient(v);
                accumulated[v] += dg.transpose() * dg;
            }
            y = result.y_next;
        }
        for v in 0..nv {
            let direct = y.vertex_metric(v) - Matrix2::identity();
            assert!(
                (direct - accumulated[v]).amax() < 1e-10,
                "telescoping identity broken at vertex {v}"
            );
        }
    }

    #[test]
    fn classify_flat_and_cylinder() {
        let mesh = benchmark_mesh(3);
        let flat = DeformationField::flat(mesh.clone());
        assert_eq!(classify_shape(&flat).class, ShapeClass::Other);

        let mesh2pi = Arc::new(
            build_mesh(&DomainSpec {
                shape: Shape::Rectangle {
                    x0: 0.0,
                    x1: 2.0 * std::f64::consts::PI,
                    y0: 0.0,
                    y1: 2.0 * std::f64::consts::PI,
                },
                refinements: 4,
                dirichlet: BoundarySelector::Left,
            })
            .unwrap(),
        );
        let cyl = cylinder_field(&mesh2pi);
        let summary = classify_shape(&cyl);
        assert_eq!(summary.class, ShapeClass::Cylinder);
        assert!((summary.principal_mean - 1.0).abs() < 0.05);
    }
}
