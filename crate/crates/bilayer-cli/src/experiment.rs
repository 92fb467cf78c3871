//! Drives configured experiments: mesh construction, the flow, and all
//! on-disk artifacts (trace, snapshots, summary).

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use bilayer::energy::{one_point_errors, ProblemData};
use bilayer::flow::{
    classify_shape, initial_state, run_flow_observed, FlowConfig, StopReason,
};
use bilayer::mesh::build_mesh;
use bilayer::Error as FlowError;
use nalgebra::{Matrix2, Matrix3x2, Vector3};

use crate::config::{ExperimentConfig, Reference, ResolvedRun};
use crate::report::{
    write_summary, write_trace_csv, EnergySummary, MeshSummary, ReferenceErrors, RunOutcome,
    RunSummary,
};
use crate::vtk::export_vtk;

/// Process exit codes of the experiment runner.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

/// Runs every resolved run of the experiment, writing artifacts under
/// `<out_root>/<output.dir>/<run label>/`. Returns the process exit code:
/// non-convergence of any run yields 3 (after finishing the remaining
/// runs), an invariant violation aborts with 4.
pub fn run_experiment(config: &ExperimentConfig, out_root: &Path) -> anyhow::Result<i32> {
    config.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut exit = EXIT_OK;
    for run in config.resolved_runs() {
        let dir = out_root.join(&config.output_dir).join(&run.label);
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        println!(
            "[{}/{}] tau={} refinements={} -> {}",
            config.name,
            run.label,
            run.flow.tau,
            run.domain.refinements,
            dir.display()
        );
        match run_one(config, &run, &dir)? {
            RunOutcome::Stationary | RunOutcome::OuterCap => {}
            RunOutcome::NoConvergence => exit = EXIT_NO_CONVERGENCE,
        }
    }
    Ok(exit)
}

fn run_one(
    config: &ExperimentConfig,
    run: &ResolvedRun,
    dir: &PathBuf,
) -> anyhow::Result<RunOutcome> {
    let started = Instant::now();
    let mesh = Arc::new(
        build_mesh(&ExperimentConfig::domain_spec(&run.domain))
            .map_err(|e| anyhow::anyhow!("mesh construction failed: {e}"))?,
    );
    let z = Matrix2::new(run.z[0][0], run.z[0][1], run.z[1][0], run.z[1][1]);
    let f = Vector3::new(run.load[0], run.load[1], run.load[2]);
    let data = ProblemData::new(z, f).map_err(|e| anyhow::anyhow!("{e}"))?;
    let cfg = FlowConfig {
        tau: run.flow.tau,
        delta_stop: run.flow.delta_stop,
        stop_tol: run.flow.stop_tol,
        max_outer: run.flow.max_outer,
        max_inner: run.flow.max_inner,
        trace_every: run.flow.trace_every,
    };

    let mesh_summary = MeshSummary {
        cells: mesh.cell_count(),
        vertices: mesh.vertex_count(),
        area: mesh.area(),
        shape_regularity: mesh.shape_regularity(),
    };
    let mut summary = RunSummary {
        experiment: config.name.clone(),
        run: run.label.clone(),
        outcome: RunOutcome::NoConvergence,
        steps: 0,
        pseudo_time: 0.0,
        tau: run.flow.tau,
        delta_stop: run.flow.delta_stop,
        stop_tol: run.flow.stop_tol,
        refinements: run.domain.refinements,
        mesh: mesh_summary,
        energy: None,
        reporting_energy: None,
        isometry_defect: None,
        shape: None,
        total_inner_iters: 0,
        diagnostics: None,
        reference_errors: None,
        wall_seconds: 0.0,
        error: None,
    };

    let y0 = initial_state(&mesh, &data).map_err(|e| anyhow::anyhow!("{e}"))?;
    let snapshot_every = config.snapshot_every;
    let snap_dir = dir.clone();
    let result = run_flow_observed(y0, &data, &cfg, |step, y| {
        if step % snapshot_every == 0 {
            let path = snap_dir.join(format!("state_{step:08}.vtk"));
            if let Err(e) = export_vtk(y, &path) {
                eprintln!("warning: snapshot {} failed: {e}", path.display());
            }
        }
    });

    match result {
        Ok((state, trace)) => {
            write_trace_csv(&trace, &dir.join("trace.csv"))?;
            export_vtk(&state.y, &dir.join("state_final.vtk"))?;
            let shape = classify_shape(&state.y);
            summary.outcome = match state.stop {
                StopReason::Stationary => RunOutcome::Stationary,
                StopReason::OuterCap => RunOutcome::OuterCap,
            };
            summary.steps = state.step;
            summary.pseudo_time = state.time;
            summary.energy = Some(EnergySummary {
                total: state.energy.total,
                bending: state.energy.bending,
                coupling: state.energy.coupling,
                constant: state.energy.constant,
                load: state.energy.load,
            });
            summary.reporting_energy = trace.last().map(|r| r.reporting_energy);
            summary.isometry_defect = Some(state.defect);
            summary.shape = Some((&shape).into());
            summary.total_inner_iters = state.inner_counts.iter().sum();
            summary.diagnostics = Some((&state.diagnostics).into());
            if config.reference == Reference::RolledCylinder {
                let (l2, h1) = one_point_errors(
                    &state.y,
                    |x| Vector3::new(x[0].sin(), x[1], 1.0 - x[0].cos()),
                    |x| Matrix3x2::new(x[0].cos(), 0.0, 0.0, 1.0, x[0].sin(), 0.0),
                );
                let scale = mesh.area().sqrt();
                summary.reference_errors =
                    Some(ReferenceErrors { scaled_l2: l2 / scale, scaled_h1: h1 / scale });
            }
            summary.wall_seconds = started.elapsed().as_secs_f64();
            write_summary(&summary, &dir.join("summary.json"))?;
            println!(
                "  {} after {} steps (t = {:.3}): energy {:.4}, defect {:.5}, shape {}",
                match state.stop {
                    StopReason::Stationary => "stationary",
                    StopReason::OuterCap => "outer cap reached",
                },
                state.step,
                state.time,
                state.energy.total,
                state.defect,
                shape.class,
            );
            Ok(summary.outcome)
        }
        Err(e @ FlowError::NoConvergence { .. }) => {
            summary.error = Some(e.to_string());
            summary.wall_seconds = started.elapsed().as_secs_f64();
            write_summary(&summary, &dir.join("summary.json"))?;
            println!("  no convergence: {e}");
            Ok(RunOutcome::NoConvergence)
        }
        Err(e) => Err(anyhow::Error::new(e)),
    }
}

/// Maps a flow error to the documented exit code.
pub fn exit_code_for(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<FlowError>() {
        Some(FlowError::NoConvergence { .. }) => EXIT_NO_CONVERGENCE,
        Some(FlowError::InvariantViolation { .. }) => EXIT_INVARIANT,
        _ => 1,
    }
}
