//! Trace and summary artifacts of a run.

use std::io::Write;
use std::path::Path;

use bilayer::flow::{FlowDiagnostics, ShapeSummary, TraceRecord};
use serde::Serialize;

/// Writes the pseudo-time trace with the canonical header.
pub fn write_trace_csv(trace: &[TraceRecord], path: &Path) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "k,time,energy,bending,coupling,constant,load,reporting_energy,defect,inner_iters,wall_ms"
    )?;
    for r in trace {
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.3}",
            r.step,
            r.time,
            r.energy.total,
            r.energy.bending,
            r.energy.coupling,
            r.energy.constant,
            r.energy.load,
            r.reporting_energy,
            r.defect,
            r.inner_iters,
            r.wall_ms,
        )?;
    }
    out.flush()
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunOutcome {
    Stationary,
    OuterCap,
    NoConvergence,
}

#[derive(Debug, Serialize)]
pub struct MeshSummary {
    pub cells: usize,
    pub vertices: usize,
    pub area: f64,
    pub shape_regularity: f64,
}

#[derive(Debug, Serialize)]
pub struct EnergySummary {
    pub total: f64,
    pub bending: f64,
    pub coupling: f64,
    pub constant: f64,
    pub load: f64,
}

#[derive(Debug, Serialize)]
pub struct ShapeReport {
    pub class: String,
    pub principal_mean: f64,
    pub principal_rel_std: f64,
    pub secondary_ratio: f64,
    pub shear_ratio: f64,
    pub max_mean_curvature: f64,
    pub bounding_box: [[f64; 3]; 2],
}

impl From<&ShapeSummary> for ShapeReport {
    fn from(s: &ShapeSummary) -> Self {
        ShapeReport {
            class: s.class.to_string(),
            principal_mean: s.principal_mean,
            principal_rel_std: s.principal_rel_std,
            secondary_ratio: s.secondary_ratio,
            shear_ratio: s.shear_ratio,
            max_mean_curvature: s.max_mean_curvature,
            bounding_box: s.bounding_box,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsReport {
    pub max_constraint_violation: f64,
    pub min_metric_eigenvalue: f64,
    pub max_inner_iters: usize,
    pub max_contraction_ratio: f64,
    pub coercivity_budget_exceeded: bool,
}

impl From<&FlowDiagnostics> for DiagnosticsReport {
    fn from(d: &FlowDiagnostics) -> Self {
        DiagnosticsReport {
            max_constraint_violation: d.max_constraint_violation,
            min_metric_eigenvalue: d.min_metric_eigenvalue,
            max_inner_iters: d.max_inner_iters,
            max_contraction_ratio: d.max_contraction_ratio,
            coercivity_budget_exceeded: d.coercivity_budget_exceeded,
        }
    }
}

/// Scaled errors against a reference solution (one-point rule per cell).
#[derive(Debug, Serialize)]
pub struct ReferenceErrors {
    pub scaled_l2: f64,
    pub scaled_h1: f64,
}

/// Per-run summary written as `summary.json`.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub run: String,
    pub outcome: RunOutcome,
    pub steps: usize,
    pub pseudo_time: f64,
    pub tau: f64,
    pub delta_stop: f64,
    pub stop_tol: f64,
    pub refinements: u32,
    pub mesh: MeshSummary,
    pub energy: Option<EnergySummary>,
    pub reporting_energy: Option<f64>,
    pub isometry_defect: Option<f64>,
    pub shape: Option<ShapeReport>,
    pub total_inner_iters: usize,
    pub diagnostics: Option<DiagnosticsReport>,
    pub reference_errors: Option<ReferenceErrors>,
    pub wall_seconds: f64,
    /// Set when the run ended in non-convergence.
    pub error: Option<String>,
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}
