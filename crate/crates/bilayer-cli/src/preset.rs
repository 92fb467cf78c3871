//! Built-in experiment presets.
//!
//! Each preset reproduces one of the standard experiments of this solver
//! family: the clamped benchmark plate, the step-size and refinement
//! sweeps, the convergence test against the rolled cylinder, aspect-ratio
//! and boundary-condition studies, the I- and O-shaped plates, and the
//! anisotropic curvature family including the corkscrew.

use crate::config::{
    DirichletConfig, DomainConfig, ExperimentConfig, FlowParams, Reference, RunOverride,
    ShapeConfig,
};

pub const PRESET_NAMES: &[&str] = &[
    "benchmark",
    "table1",
    "table2",
    "table3-convergence",
    "aspect-ratio",
    "corner-clamp",
    "ishape",
    "oshape",
    "aniso-dominant",
    "aniso-opposite",
    "corkscrew",
];

fn base(
    name: &str,
    shape: ShapeConfig,
    refinements: u32,
    dirichlet: DirichletConfig,
    z: [[f64; 2]; 2],
    tau: f64,
    delta_stop: f64,
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        domain: DomainConfig { shape, refinements, dirichlet },
        z,
        load: [0.0; 3],
        flow: FlowParams {
            tau,
            delta_stop,
            stop_tol: 1e-6,
            max_outer: 2_000_000,
            max_inner: 50,
            trace_every: 1000,
        },
        output_dir: name.to_string(),
        snapshot_every: 1000,
        reference: Reference::None,
        runs: Vec::new(),
    }
}

fn benchmark_rect() -> ShapeConfig {
    ShapeConfig::Rectangle { x0: -5.0, x1: 5.0, y0: -2.0, y1: 2.0 }
}

fn minus_identity(r: f64) -> [[f64; 2]; 2] {
    [[-r, 0.0], [0.0, -r]]
}

/// Returns the named preset, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let tau_sweep = [0.02, 0.01, 0.005, 0.0025];
    let tau_label = |t: f64| format!("t{:04}", (t * 1e5).round() as u64);
    match name {
        "benchmark" => Some(base(
            name,
            benchmark_rect(),
            5,
            DirichletConfig::Left,
            minus_identity(1.0),
            0.005,
            1e-4,
        )),
        "table1" => {
            let mut c = base(
                name,
                benchmark_rect(),
                4,
                DirichletConfig::Left,
                minus_identity(1.0),
                0.005,
                1e-3,
            );
            for r in [1.0, 5.0] {
                for &t in &tau_sweep {
                    c.runs.push(RunOverride {
                        label: format!("z{}-{}", r as u64, tau_label(t)),
                        tau: Some(t),
                        z: Some(minus_identity(r)),
                        ..Default::default()
                    });
                }
            }
            Some(c)
        }
        "table2" => {
            let mut c = base(
                name,
                benchmark_rect(),
                4,
                DirichletConfig::Left,
                minus_identity(1.0),
                0.005,
                1e-3,
            );
            for &t in &tau_sweep {
                c.runs.push(RunOverride {
                    label: tau_label(t),
                    tau: Some(t),
                    ..Default::default()
                });
            }
            Some(c)
        }
        "table3-convergence" => {
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut c = base(
                name,
                ShapeConfig::Rectangle { x0: 0.0, x1: two_pi, y0: 0.0, y1: two_pi },
                3,
                DirichletConfig::Left,
                [[-1.0, 0.0], [0.0, -0.5]],
                0.005,
                1e-4,
            );
            c.reference = Reference::RolledCylinder;
            for level in 3..=6u32 {
                c.runs.push(RunOverride {
                    label: format!("mesh{level}"),
                    refinements: Some(level),
                    tau: Some(0.04 / (1 << level) as f64), // 2^-level / 25
                    ..Default::default()
                });
            }
            Some(c)
        }
        "aspect-ratio" => {
            let mut c = base(
                name,
                benchmark_rect(),
                5,
                DirichletConfig::Left,
                minus_identity(1.0),
                0.005,
                1e-4,
            );
            for half_length in [5.0, 3.0, 2.0, 1.0] {
                for r in [1.0, 3.0, 5.0] {
                    c.runs.push(RunOverride {
                        label: format!("len{}-z{}", half_length as u64, r as u64),
                        z: Some(minus_identity(r)),
                        rectangle: Some((-half_length, half_length, -2.0, 2.0)),
                        ..Default::default()
                    });
                }
            }
            Some(c)
        }
        "corner-clamp" => Some(base(
            name,
            ShapeConfig::Rectangle { x0: -3.0, x1: 3.0, y0: -2.0, y1: 2.0 },
            5,
            DirichletConfig::CornerBottomLeft { x_to: 0.0, y_to: 0.0 },
            minus_identity(1.0),
            0.005,
            1e-4,
        )),
        "ishape" => Some(base(
            name,
            ShapeConfig::IShape,
            5,
            DirichletConfig::Left,
            minus_identity(5.0),
            0.005,
            1e-3,
        )),
        "oshape" => Some(base(
            name,
            ShapeConfig::OShape,
            5,
            DirichletConfig::Left,
            minus_identity(5.0),
            0.005,
            1e-3,
        )),
        "aniso-dominant" => Some(base(
            name,
            ShapeConfig::Rectangle { x0: -2.0, x1: 2.0, y0: -3.0, y1: 3.0 },
            5,
            DirichletConfig::Left,
            [[-5.0, 0.0], [0.0, -1.0]],
            0.005,
            1e-3,
        )),
        "aniso-opposite" => Some(base(
            name,
            ShapeConfig::Rectangle { x0: -2.0, x1: 2.0, y0: -3.0, y1: 3.0 },
            5,
            DirichletConfig::Left,
            [[-5.0, 0.0], [0.0, 5.0]],
            0.005,
            1e-3,
        )),
        "corkscrew" => Some(base(
            name,
            ShapeConfig::Rectangle { x0: -2.0, x1: 2.0, y0: -3.0, y1: 3.0 },
            5,
            DirichletConfig::Left,
            [[-3.0, 2.0], [2.0, -3.0]],
            0.005,
            1e-3,
        )),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    #[test]
    fn all_presets_parse_back_identically() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            let text = p.to_text();
            let parsed = ExperimentConfig::parse(&text)
                .unwrap_or_else(|e| panic!("preset {name}: {e}"));
            assert_eq!(p, parsed, "round trip failed for {name}");
        }
    }

    #[test]
    fn unknown_preset_is_none() {
        assert!(preset("not-a-preset").is_none());
    }

    #[test]
    fn benchmark_parameters() {
        let p = preset("benchmark").unwrap();
        assert_eq!(p.domain.refinements, 5);
        assert_eq!(p.z, [[-1.0, 0.0], [0.0, -1.0]]);
        assert_eq!(p.flow.tau, 0.005);
        assert_eq!(p.flow.delta_stop, 1e-4);
        assert_eq!(p.flow.stop_tol, 1e-6);
        assert!(matches!(
            p.domain.shape,
            ShapeConfig::Rectangle { x0: -5.0, x1: 5.0, y0: -2.0, y1: 2.0 }
        ));
    }

    #[test]
    fn corkscrew_parameters() {
        let p = preset("corkscrew").unwrap();
        assert_eq!(p.z, [[-3.0, 2.0], [2.0, -3.0]]);
        assert!(matches!(
            p.domain.shape,
            ShapeConfig::Rectangle { x0: -2.0, x1: 2.0, y0: -3.0, y1: 3.0 }
        ));
        assert_eq!(p.flow.delta_stop, 1e-3);
    }

    #[test]
    fn convergence_sweep_ties_step_to_mesh() {
        let p = preset("table3-convergence").unwrap();
        let runs = p.resolved_runs();
        assert_eq!(runs.len(), 4);
        for (run, level) in runs.iter().zip(3u32..) {
            assert_eq!(run.domain.refinements, level);
            let expected = 0.04 / (1u64 << level) as f64;
            assert_eq!(run.flow.tau, expected);
        }
        assert_eq!(runs[0].flow.tau, 0.005);
        assert_eq!(p.reference, Reference::RolledCylinder);
    }
}
