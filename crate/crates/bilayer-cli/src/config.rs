//! Flat key-value experiment configuration.
//!
//! The format is line oriented and diffable: one `key = value` pair per
//! line, `#` comments, dotted keys for sections. Unknown keys are
//! rejected with the offending line number. A configuration describes one
//! experiment, optionally expanded into several runs by `run.<label>.*`
//! overrides (step-size sweeps, refinement sweeps, per-run curvature).
//!
//! ```text
//! name = benchmark
//! domain.shape = rectangle
//! domain.x0 = -5
//! domain.x1 = 5
//! domain.y0 = -2
//! domain.y1 = 2
//! domain.refinements = 5
//! domain.dirichlet = left
//! z.a11 = -1
//! z.a12 = 0
//! z.a21 = 0
//! z.a22 = -1
//! load.f1 = 0
//! load.f2 = 0
//! load.f3 = 0
//! flow.tau = 0.005
//! flow.delta_stop = 1e-4
//! flow.stop_tol = 1e-6
//! flow.max_outer = 2000000
//! flow.max_inner = 50
//! flow.trace_every = 1000
//! output.dir = benchmark
//! output.snapshot_every = 1000
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use bilayer::mesh::{BoundarySelector, DomainSpec, Shape};

/// Configuration error with the line it came from, when known.
#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

/// Domain description as written in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub shape: ShapeConfig,
    pub refinements: u32,
    pub dirichlet: DirichletConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeConfig {
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    IShape,
    OShape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirichletConfig {
    Left,
    Right,
    Bottom,
    Top,
    CornerBottomLeft { x_to: f64, y_to: f64 },
}

impl DirichletConfig {
    pub fn to_selector(self) -> BoundarySelector {
        match self {
            DirichletConfig::Left => BoundarySelector::Left,
            DirichletConfig::Right => BoundarySelector::Right,
            DirichletConfig::Bottom => BoundarySelector::Bottom,
            DirichletConfig::Top => BoundarySelector::Top,
            DirichletConfig::CornerBottomLeft { x_to, y_to } => {
                BoundarySelector::CornerBottomLeft { x_to, y_to }
            }
        }
    }
}

/// Flow parameters as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub tau: f64,
    pub delta_stop: f64,
    pub stop_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub trace_every: usize,
}

/// Per-run overrides of a sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOverride {
    pub label: String,
    pub tau: Option<f64>,
    pub refinements: Option<u32>,
    pub z: Option<[[f64; 2]; 2]>,
    pub delta_stop: Option<f64>,
    pub rectangle: Option<(f64, f64, f64, f64)>,
}

/// Which reference solution (if any) the final state is compared to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    None,
    /// `y(x) = (sin x₁, x₂, 1 - cos x₁)`: the unit cylinder rolled along
    /// the first axis.
    RolledCylinder,
}

/// A full experiment: one parameter set plus optional run overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub domain: DomainConfig,
    pub z: [[f64; 2]; 2],
    pub load: [f64; 3],
    pub flow: FlowParams,
    pub output_dir: String,
    pub snapshot_every: usize,
    pub reference: Reference,
    pub runs: Vec<RunOverride>,
}

/// A single resolved run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub label: String,
    pub domain: DomainConfig,
    pub z: [[f64; 2]; 2],
    pub load: [f64; 3],
    pub flow: FlowParams,
}

impl ExperimentConfig {
    /// Expands the configuration into its runs (a single unlabeled run
    /// when no overrides are present).
    pub fn resolved_runs(&self) -> Vec<ResolvedRun> {
        if self.runs.is_empty() {
            return vec![ResolvedRun {
                label: "run".to_string(),
                domain: self.domain.clone(),
                z: self.z,
                load: self.load,
                flow: self.flow,
            }];
        }
        self.runs
            .iter()
            .map(|o| {
                let mut domain = self.domain.clone();
                if let Some(r) = o.refinements {
                    domain.refinements = r;
                }
                if let Some((x0, x1, y0, y1)) = o.rectangle {
                    domain.shape = ShapeConfig::Rectangle { x0, x1, y0, y1 };
                }
                let mut flow = self.flow;
                if let Some(t) = o.tau {
                    flow.tau = t;
                }
                if let Some(d) = o.delta_stop {
                    flow.delta_stop = d;
                }
                ResolvedRun {
                    label: o.label.clone(),
                    domain,
                    z: o.z.unwrap_or(self.z),
                    load: self.load,
                    flow,
                }
            })
            .collect()
    }

    /// Structural validation beyond what parsing enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check_z = |z: &[[f64; 2]; 2], what: &str| -> Result<(), ConfigError> {
            if (z[0][1] - z[1][0]).abs() > 1e-12 * (1.0 + z.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)) {
                return Err(err(None, format!("{what}: spontaneous curvature must be symmetric (a12 != a21)")));
            }
            Ok(())
        };
        check_z(&self.z, "z")?;
        for run in &self.runs {
            if let Some(z) = &run.z {
                check_z(z, &format!("run.{}", run.label))?;
            }
            if let Some(t) = run.tau {
                if !(t > 0.0) {
                    return Err(err(None, format!("run.{}: tau must be positive", run.label)));
                }
            }
        }
        if let ShapeConfig::Rectangle { x0, x1, y0, y1 } = self.domain.shape {
            if !(x1 > x0 && y1 > y0) {
                return Err(err(None, "domain: rectangle extents must be positive"));
            }
        }
        if !(self.flow.tau > 0.0 && self.flow.delta_stop > 0.0 && self.flow.stop_tol > 0.0) {
            return Err(err(None, "flow: tau, delta_stop and stop_tol must be positive"));
        }
        if self.flow.max_inner == 0 || self.flow.max_outer == 0 || self.flow.trace_every == 0 {
            return Err(err(None, "flow: iteration caps and trace stride must be nonzero"));
        }
        if self.snapshot_every == 0 {
            return Err(err(None, "output: snapshot_every must be nonzero"));
        }
        Ok(())
    }

    pub fn domain_spec(domain: &DomainConfig) -> DomainSpec {
        DomainSpec {
            shape: match domain.shape {
                ShapeConfig::Rectangle { x0, x1, y0, y1 } => Shape::Rectangle { x0, x1, y0, y1 },
                ShapeConfig::IShape => Shape::IShape,
                ShapeConfig::OShape => Shape::OShape,
            },
            refinements: domain.refinements,
            dirichlet: domain.dirichlet.to_selector(),
        }
    }

    /// Serializes to the canonical text form; `parse` round-trips it.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        match self.domain.shape {
            ShapeConfig::Rectangle { x0, x1, y0, y1 } => {
                let _ = writeln!(s, "domain.shape = rectangle");
                let _ = writeln!(s, "domain.x0 = {x0}");
                let _ = writeln!(s, "domain.x1 = {x1}");
                let _ = writeln!(s, "domain.y0 = {y0}");
                let _ = writeln!(s, "domain.y1 = {y1}");
            }
            ShapeConfig::IShape => {
                let _ = writeln!(s, "domain.shape = ishape");
            }
            ShapeConfig::OShape => {
                let _ = writeln!(s, "domain.shape = oshape");
            }
        }
        let _ = writeln!(s, "domain.refinements = {}", self.domain.refinements);
        match self.domain.dirichlet {
            DirichletConfig::Left => {
                let _ = writeln!(s, "domain.dirichlet = left");
            }
            DirichletConfig::Right => {
                let _ = writeln!(s, "domain.dirichlet = right");
            }
            DirichletConfig::Bottom => {
                let _ = writeln!(s, "domain.dirichlet = bottom");
            }
            DirichletConfig::Top => {
                let _ = writeln!(s, "domain.dirichlet = top");
            }
            DirichletConfig::CornerBottomLeft { x_to, y_to } => {
                let _ = writeln!(s, "domain.dirichlet = corner-bl {x_to} {y_to}");
            }
        }
        let _ = writeln!(s, "z.a11 = {}", self.z[0][0]);
        let _ = writeln!(s, "z.a12 = {}", self.z[0][1]);
        let _ = writeln!(s, "z.a21 = {}", self.z[1][0]);
        let _ = writeln!(s, "z.a22 = {}", self.z[1][1]);
        let _ = writeln!(s, "load.f1 = {}", self.load[0]);
        let _ = writeln!(s, "load.f2 = {}", self.load[1]);
        let _ = writeln!(s, "load.f3 = {}", self.load[2]);
        let _ = writeln!(s, "flow.tau = {}", self.flow.tau);
        let _ = writeln!(s, "flow.delta_stop = {}", self.flow.delta_stop);
        let _ = writeln!(s, "flow.stop_tol = {}", self.flow.stop_tol);
        let _ = writeln!(s, "flow.max_outer = {}", self.flow.max_outer);
        let _ = writeln!(s, "flow.max_inner = {}", self.flow.max_inner);
        let _ = writeln!(s, "flow.trace_every = {}", self.flow.trace_every);
        let _ = writeln!(s, "output.dir = {}", self.output_dir);
        let _ = writeln!(s, "output.snapshot_every = {}", self.snapshot_every);
        if self.reference == Reference::RolledCylinder {
            let _ = writeln!(s, "reference = rolled-cylinder");
        }
        for run in &self.runs {
            let l = &run.label;
            if let Some(t) = run.tau {
                let _ = writeln!(s, "run.{l}.tau = {t}");
            }
            if let Some(r) = run.refinements {
                let _ = writeln!(s, "run.{l}.refinements = {r}");
            }
            if let Some(d) = run.delta_stop {
                let _ = writeln!(s, "run.{l}.delta_stop = {d}");
            }
            if let Some(z) = run.z {
                let _ = writeln!(s, "run.{l}.z.a11 = {}", z[0][0]);
                let _ = writeln!(s, "run.{l}.z.a12 = {}", z[0][1]);
                let _ = writeln!(s, "run.{l}.z.a21 = {}", z[1][0]);
                let _ = writeln!(s, "run.{l}.z.a22 = {}", z[1][1]);
            }
            if let Some((x0, x1, y0, y1)) = run.rectangle {
                let _ = writeln!(s, "run.{l}.x0 = {x0}");
                let _ = writeln!(s, "run.{l}.x1 = {x1}");
                let _ = writeln!(s, "run.{l}.y0 = {y0}");
                let _ = writeln!(s, "run.{l}.y1 = {y1}");
            }
        }
        s
    }

    /// Parses the canonical text form.
    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut keys: Vec<(usize, String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(err(Some(line), format!("expected 'key = value', found {stripped:?}")));
            };
            keys.push((line, key.trim().to_string(), value.trim().to_string()));
        }

        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut run_labels: Vec<String> = Vec::new();
        for (line, key, value) in &keys {
            if map.insert(key.clone(), (*line, value.clone())).is_some() {
                return Err(err(Some(*line), format!("duplicate key {key}")));
            }
            if let Some(rest) = key.strip_prefix("run.") {
                let label = rest.split('.').next().unwrap_or("").to_string();
                if label.is_empty() {
                    return Err(err(Some(*line), "run override needs a label"));
                }
                if !run_labels.contains(&label) {
                    run_labels.push(label);
                }
            }
        }

        let mut used: std::collections::HashSet<String> = std::collections::HashSet::new();
        let mut take = |key: &str| -> Option<(usize, String)> {
            used.insert(key.to_string());
            map.get(key).cloned()
        };
        let parse_f64 = |key: &str, entry: Option<(usize, String)>| -> Result<Option<f64>, ConfigError> {
            match entry {
                None => Ok(None),
                Some((line, v)) => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| err(Some(line), format!("{key}: invalid number {v:?}"))),
            }
        };
        let parse_usize = |key: &str, entry: Option<(usize, String)>| -> Result<Option<usize>, ConfigError> {
            match entry {
                None => Ok(None),
                Some((line, v)) => v
                    .parse::<usize>()
                    .map(Some)
                    .map_err(|_| err(Some(line), format!("{key}: invalid integer {v:?}"))),
            }
        };
        let require = |key: &str, v: Option<f64>| -> Result<f64, ConfigError> {
            v.ok_or_else(|| err(None, format!("missing key {key}")))
        };

        let name = take("name")
            .map(|(_, v)| v)
            .ok_or_else(|| err(None, "missing key name"))?;

        let shape = match take("domain.shape") {
            None => return Err(err(None, "missing key domain.shape")),
            Some((line, v)) => match v.as_str() {
                "rectangle" => {
                    let x0 = require("domain.x0", parse_f64("domain.x0", take("domain.x0"))?)?;
                    let x1 = require("domain.x1", parse_f64("domain.x1", take("domain.x1"))?)?;
                    let y0 = require("domain.y0", parse_f64("domain.y0", take("domain.y0"))?)?;
                    let y1 = require("domain.y1", parse_f64("domain.y1", take("domain.y1"))?)?;
                    ShapeConfig::Rectangle { x0, x1, y0, y1 }
                }
                "ishape" => ShapeConfig::IShape,
                "oshape" => ShapeConfig::OShape,
                other => return Err(err(Some(line), format!("unknown shape {other:?}"))),
            },
        };
        let refinements = parse_usize("domain.refinements", take("domain.refinements"))?
            .ok_or_else(|| err(None, "missing key domain.refinements"))? as u32;
        let dirichlet = match take("domain.dirichlet") {
            None => return Err(err(None, "missing key domain.dirichlet")),
            Some((line, v)) => {
                let mut parts = v.split_whitespace();
                match parts.next() {
                    Some("left") => DirichletConfig::Left,
                    Some("right") => DirichletConfig::Right,
                    Some("bottom") => DirichletConfig::Bottom,
                    Some("top") => DirichletConfig::Top,
                    Some("corner-bl") => {
                        let x_to = parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| err(Some(line), "corner-bl needs x_to y_to"))?;
                        let y_to = parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| err(Some(line), "corner-bl needs x_to y_to"))?;
                        DirichletConfig::CornerBottomLeft { x_to, y_to }
                    }
                    other => {
                        return Err(err(Some(line), format!("unknown dirichlet selector {other:?}")))
                    }
                }
            }
        };

        let mut z = [[0.0; 2]; 2];
        for (key, slot) in [
            ("z.a11", (0, 0)),
            ("z.a12", (0, 1)),
            ("z.a21", (1, 0)),
            ("z.a22", (1, 1)),
        ] {
            z[slot.0][slot.1] = require(key, parse_f64(key, take(key))?)?;
        }
        let mut load = [0.0; 3];
        for (key, slot) in [("load.f1", 0), ("load.f2", 1), ("load.f3", 2)] {
            load[slot] = require(key, parse_f64(key, take(key))?)?;
        }

        let flow = FlowParams {
            tau: require("flow.tau", parse_f64("flow.tau", take("flow.tau"))?)?,
            delta_stop: require(
                "flow.delta_stop",
                parse_f64("flow.delta_stop", take("flow.delta_stop"))?,
            )?,
            stop_tol: require("flow.stop_tol", parse_f64("flow.stop_tol", take("flow.stop_tol"))?)?,
            max_outer: parse_usize("flow.max_outer", take("flow.max_outer"))?
                .ok_or_else(|| err(None, "missing key flow.max_outer"))?,
            max_inner: parse_usize("flow.max_inner", take("flow.max_inner"))?
                .ok_or_else(|| err(None, "missing key flow.max_inner"))?,
            trace_every: parse_usize("flow.trace_every", take("flow.trace_every"))?
                .ok_or_else(|| err(None, "missing key flow.trace_every"))?,
        };

        let output_dir = take("output.dir")
            .map(|(_, v)| v)
            .ok_or_else(|| err(None, "missing key output.dir"))?;
        let snapshot_every = parse_usize("output.snapshot_every", take("output.snapshot_every"))?
            .ok_or_else(|| err(None, "missing key output.snapshot_every"))?;

        let reference = match take("reference") {
            None => Reference::None,
            Some((line, v)) => match v.as_str() {
                "rolled-cylinder" => Reference::RolledCylinder,
                other => return Err(err(Some(line), format!("unknown reference {other:?}"))),
            },
        };

        let mut runs = Vec::new();
        for label in &run_labels {
            let prefix = format!("run.{label}.");
            let mut over = RunOverride { label: label.clone(), ..Default::default() };
            over.tau = parse_f64("tau", take(&format!("{prefix}tau")))?;
            over.refinements =
                parse_usize("refinements", take(&format!("{prefix}refinements")))?.map(|v| v as u32);
            over.delta_stop = parse_f64("delta_stop", take(&format!("{prefix}delta_stop")))?;
            let zs = [
                parse_f64("z.a11", take(&format!("{prefix}z.a11")))?,
                parse_f64("z.a12", take(&format!("{prefix}z.a12")))?,
                parse_f64("z.a21", take(&format!("{prefix}z.a21")))?,
                parse_f64("z.a22", take(&format!("{prefix}z.a22")))?,
            ];
            if zs.iter().any(|v| v.is_some()) {
                if zs.iter().any(|v| v.is_none()) {
                    return Err(err(None, format!("run.{label}: partial z override")));
                }
                over.z = Some([[zs[0].unwrap(), zs[1].unwrap()], [zs[2].unwrap(), zs[3].unwrap()]]);
            }
            let rect = [
                parse_f64("x0", take(&format!("{prefix}x0")))?,
                parse_f64("x1", take(&format!("{prefix}x1")))?,
                parse_f64("y0", take(&format!("{prefix}y0")))?,
                parse_f64("y1", take(&format!("{prefix}y1")))?,
            ];
            if rect.iter().any(|v| v.is_some()) {
                if rect.iter().any(|v| v.is_none()) {
                    return Err(err(None, format!("run.{label}: partial rectangle override")));
                }
                over.rectangle = Some((
                    rect[0].unwrap(),
                    rect[1].unwrap(),
                    rect[2].unwrap(),
                    rect[3].unwrap(),
                ));
            }
            runs.push(over);
        }

        // Reject unknown keys.
        for (line, key, _) in &keys {
            if !used.contains(key) {
                return Err(err(Some(*line), format!("unknown key {key}")));
            }
        }

        let config = ExperimentConfig {
            name,
            domain: DomainConfig { shape, refinements, dirichlet },
            z,
            load,
            flow,
            output_dir,
            snapshot_every,
            reference,
            runs,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            name: "sample".into(),
            domain: DomainConfig {
                shape: ShapeConfig::Rectangle { x0: -5.0, x1: 5.0, y0: -2.0, y1: 2.0 },
                refinements: 3,
                dirichlet: DirichletConfig::Left,
            },
            z: [[-1.0, 0.0], [0.0, -1.0]],
            load: [0.0, 0.0, 0.0],
            flow: FlowParams {
                tau: 0.005,
                delta_stop: 1e-4,
                stop_tol: 1e-6,
                max_outer: 1000,
                max_inner: 50,
                trace_every: 100,
            },
            output_dir: "sample".into(),
            snapshot_every: 500,
            reference: Reference::None,
            runs: vec![
                RunOverride { label: "t20".into(), tau: Some(0.02), ..Default::default() },
                RunOverride {
                    label: "t10".into(),
                    tau: Some(0.01),
                    z: Some([[-5.0, 0.0], [0.0, -5.0]]),
                    ..Default::default()
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let config = sample();
        let text = config.to_text();
        let parsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(config, parsed);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let mut text = sample().to_text();
        text.push_str("bogus.key = 12\n");
        let e = ExperimentConfig::parse(&text).unwrap_err();
        assert!(e.to_string().contains("unknown key"));
        assert!(e.line.is_some());
    }

    #[test]
    fn nonsymmetric_curvature_is_rejected() {
        let mut config = sample();
        config.z = [[-1.0, 0.5], [-0.5, -1.0]];
        let text = config.to_text();
        let e = ExperimentConfig::parse(&text).unwrap_err();
        assert!(e.to_string().contains("symmetric"));
    }

    #[test]
    fn sweep_resolution_applies_overrides() {
        let config = sample();
        let runs = config.resolved_runs();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].flow.tau, 0.02);
        assert_eq!(runs[0].z, [[-1.0, 0.0], [0.0, -1.0]]);
        assert_eq!(runs[1].flow.tau, 0.01);
        assert_eq!(runs[1].z, [[-5.0, 0.0], [0.0, -5.0]]);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# a comment\n\n{}", sample().to_text());
        assert!(ExperimentConfig::parse(&text).is_ok());
    }
}
