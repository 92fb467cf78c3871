use bilayer::energy::ProblemData;
use bilayer::flow::{run_flow, FlowConfig};
use bilayer::mesh::{build_mesh, BoundarySelector, DomainSpec, Shape};
use nalgebra::{Matrix2, Vector3};
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let refinements: u32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(4);
    let tau: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.02);
    let stop: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-5);
    let max_outer: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2_000_000);
    let mesh = Arc::new(
        build_mesh(&DomainSpec {
            shape: Shape::Rectangle { x0: -5.0, x1: 5.0, y0: -2.0, y1: 2.0 },
            refinements,
            dirichlet: BoundarySelector::Left,
        })
        .unwrap(),
    );
    let data = ProblemData::new(-Matrix2::identity(), Vector3::zeros()).unwrap();
    let cfg = FlowConfig {
        tau,
        delta_stop: 1e-3,
        stop_tol: stop,
        max_outer,
        trace_every: 2000,
        ..Default::default()
    };
    let t0 = Instant::now();
    match run_flow(&mesh, &data, &cfg) {
        Ok((state, trace)) => {
            let dt = t0.elapsed().as_secs_f64();
            println!(
                "mesh#{refinements} tau={tau} stop={stop}: steps={} T={:.2} E={:.4} defect={:.5} wall={:.1}s per-step={:.3}ms inner_max={} stop={:?}",
                state.step,
                state.time,
                state.energy.total,
                state.defect,
                dt,
                1e3 * dt / state.step.max(1) as f64,
                state.diagnostics.max_inner_iters,
                state.stop
            );
            for r in trace.iter().take(4).chain(trace.iter().rev().take(2)) {
                println!(
                    "  k={} E={:.6} rep={:.6} defect={:.6} inner={}",
                    r.step, r.energy.total, r.reporting_energy, r.defect, r.inner_iters
                );
            }
        }
        Err(e) => println!("error: {e}"),
    }
}
