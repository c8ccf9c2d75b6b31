//! Experiment configuration files and sweep expansion.

use std::fmt;

use mmflows_core::crystal::{DegeneratePolicy, RectangleState};
use mmflows_core::lattice::LatticeFlowConfig;
use mmflows_core::potential::Potential;
use mmflows_core::scheme::TiePolicy;
use mmflows_core::wiggly::WigglyConfig;
use mmflows_core::Schedule;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub run: RunOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

/// Exactly one module block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Experiment {
    Lattice(LatticeFlowConfig),
    Wiggly(WigglyConfig),
    Crystal(CrystalConfig),
    Diagnostics(DiagnosticsConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Lattice(_) => "lattice",
            Experiment::Wiggly(_) => "wiggly",
            Experiment::Crystal(_) => "crystal",
            Experiment::Diagnostics(_) => "diagnostics",
        }
    }

    fn violations(&self) -> Vec<(String, String)> {
        let own = |v: Vec<(&'static str, String)>| {
            v.into_iter().map(|(f, r)| (f.to_string(), r)).collect()
        };
        match self {
            Experiment::Lattice(c) => own(c.violations()),
            Experiment::Wiggly(c) => own(c.violations()),
            Experiment::Crystal(c) => c.violations(),
            Experiment::Diagnostics(c) => c.violations(),
        }
    }
}

/// Settings of the individual commands, all optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Rescaled steps for `wiggly run`; velocity steps for `wiggly velocity`.
    pub steps: Option<usize>,
    pub t_max: f64,
    pub tol: f64,
    /// Sample count for sampled curves.
    pub samples: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            steps: None,
            t_max: 4.0,
            tol: 1e-4,
            samples: 200,
        }
    }
}

impl RunOptions {
    fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.steps == Some(0) {
            out.push(("run.steps".into(), "must be positive".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            out.push(("run.t_max".into(), "must be positive and finite".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            out.push(("run.tol".into(), "must be positive and finite".into()));
        }
        if self.samples < 2 {
            out.push(("run.samples".into(), "need at least 2".into()));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrystalMode {
    /// The discrete side-length recursion at step `τ`.
    #[default]
    Recursion,
    /// The event-driven limit system.
    Ode,
}

fn default_tau() -> f64 {
    1e-3
}

fn default_horizon() -> f64 {
    1.0
}

fn positive(out: &mut Vec<(String, String)>, field: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        out.push((field.to_string(), format!("must be positive and finite, got {v}")));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalConfig {
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    pub gamma: f64,
    pub schedule: Schedule,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub mode: CrystalMode,
    #[serde(default)]
    pub policy: DegeneratePolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
}

impl CrystalConfig {
    pub fn state(&self) -> mmflows_core::Result<RectangleState> {
        RectangleState::new(self.l1, self.l2)
    }

    fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        positive(&mut out, "L1", self.l1);
        positive(&mut out, "L2", self.l2);
        positive(&mut out, "gamma", self.gamma);
        positive(&mut out, "tau", self.tau);
        positive(&mut out, "horizon", self.horizon);
        if let Some(o) = &self.oracle {
            out.extend(o.violations());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub cells_w: i64,
    pub cells_h: i64,
    pub eps: f64,
    pub a: f64,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_radius: Option<i64>,
}

impl OracleConfig {
    pub fn input(&self) -> mmflows_core::crystal::OracleInput {
        mmflows_core::crystal::OracleInput {
            cells_w: self.cells_w,
            cells_h: self.cells_h,
            eps: self.eps,
            a: self.a,
            tau: self.tau,
            search_radius: self
                .search_radius
                .unwrap_or_else(|| self.cells_w.min(self.cells_h).min(8)),
        }
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (f, n) in [("oracle.cells_w", self.cells_w), ("oracle.cells_h", self.cells_h)] {
            if n < 1 || n % 2 == 0 {
                out.push((f.to_string(), format!("must be a positive odd count, got {n}")));
            }
        }
        positive(&mut out, "oracle.eps", self.eps);
        positive(&mut out, "oracle.a", self.a);
        positive(&mut out, "oracle.tau", self.tau);
        if let Some(k) = self.search_radius {
            if k < 0 || k > self.cells_w.min(self.cells_h) {
                out.push((
                    "oracle.search_radius".into(),
                    "must lie in 0..=min(cells_w, cells_h)".into(),
                ));
            }
        }
        out
    }
}

/// Energy for the generic driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnergySpec {
    Quadratic {
        stiffness: f64,
        #[serde(default)]
        center: f64,
    },
    Wiggly {
        eps: f64,
        #[serde(rename = "T", alias = "tilt")]
        tilt: f64,
        #[serde(default)]
        potential: Potential,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub energy: EnergySpec,
    pub schedule: Schedule,
    #[serde(default)]
    pub u0: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_nodes")]
    pub quadrature_points: usize,
    #[serde(default)]
    pub tie_policy: TiePolicy,
}

fn default_nodes() -> usize {
    64
}

impl DiagnosticsConfig {
    fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        positive(&mut out, "tau", self.tau);
        positive(&mut out, "horizon", self.horizon);
        if !self.u0.is_finite() {
            out.push(("u0".into(), "must be finite".into()));
        }
        if self.quadrature_points == 0 {
            out.push(("quadrature_points".into(), "must be positive".into()));
        }
        match &self.energy {
            EnergySpec::Quadratic { stiffness, center } => {
                positive(&mut out, "energy.stiffness", *stiffness);
                if !center.is_finite() {
                    out.push(("energy.center".into(), "must be finite".into()));
                }
            }
            EnergySpec::Wiggly { eps, tilt, .. } => {
                positive(&mut out, "energy.eps", *eps);
                if !tilt.is_finite() {
                    out.push(("energy.T".into(), "must be finite".into()));
                }
            }
        }
        out
    }
}

/// One parameter varied over a grid; each value yields one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Grid {
    Linspace { start: f64, stop: f64, num: usize },
    Logspace { start: f64, stop: f64, num: usize },
    Values { values: Vec<f64> },
}

impl Grid {
    /// Grid points in order; `logspace` takes its endpoints as values, not
    /// exponents.
    pub fn points(&self) -> Vec<f64> {
        match *self {
            Grid::Linspace { start, stop, num } => spaced(start, stop, num, |x| x),
            Grid::Logspace { start, stop, num } => {
                let mut v = spaced(start.ln(), stop.ln(), num, f64::exp);
                if let Some(first) = v.first_mut() {
                    *first = start;
                }
                if num > 1 {
                    v[num - 1] = stop;
                }
                v
            }
            Grid::Values { ref values } => values.clone(),
        }
    }

    fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        match *self {
            Grid::Linspace { start, stop, num } | Grid::Logspace { start, stop, num } => {
                if num == 0 {
                    out.push(("sweep.grid.num".into(), "must be positive".into()));
                }
                if !(start.is_finite() && stop.is_finite()) {
                    out.push(("sweep.grid".into(), "endpoints must be finite".into()));
                }
                if matches!(self, Grid::Logspace { .. }) && !(start > 0.0 && stop > 0.0) {
                    out.push(("sweep.grid".into(), "logspace endpoints must be positive".into()));
                }
            }
            Grid::Values { ref values } => {
                if values.is_empty() {
                    out.push(("sweep.grid.values".into(), "must not be empty".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    out.push(("sweep.grid.values".into(), "must be finite".into()));
                }
            }
        }
        out
    }
}

fn spaced(a: f64, b: f64, num: usize, map: impl Fn(f64) -> f64) -> Vec<f64> {
    match num {
        0 => Vec::new(),
        1 => vec![map(a)],
        _ => {
            let last = num - 1;
            (0..num)
                .map(|k| {
                    // pin the endpoints exactly
                    let x = if k == last {
                        b
                    } else {
                        a + (b - a) * k as f64 / last as f64
                    };
                    map(x)
                })
                .collect()
        }
    }
}

/// Every problem found in a configuration, in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub errors: Vec<(String, String)>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .errors
            .iter()
            .map(|(field, reason)| {
                if field.is_empty() {
                    reason.clone()
                } else {
                    format!("{field}: {reason}")
                }
            })
            .collect();
        write!(f, "invalid configuration: {}", parts.join("; "))
    }
}

impl std::error::Error for ConfigError {}

fn single(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        errors: vec![(field.to_string(), reason.into())],
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| single("", e.to_string()))?;
    let errors = cfg.violations();
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { errors })
    }
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            run: RunOptions::default(),
            output: None,
            format: None,
            sweep: None,
        }
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = self.experiment.violations();
        out.extend(self.run.violations());
        if let Some(s) = &self.sweep {
            out.extend(s.grid.violations());
            if self.block_value().get(&s.parameter).is_none() {
                out.push((
                    "sweep.parameter".into(),
                    format!(
                        "'{}' is not a field of the {} block",
                        s.parameter,
                        self.experiment.kind()
                    ),
                ));
            }
        }
        out
    }

    /// Canonical JSON of the module block, with defaults filled in.
    fn block_value(&self) -> Value {
        let v = serde_json::to_value(&self.experiment).expect("config serializes");
        v.get(self.experiment.kind()).cloned().unwrap_or(Value::Null)
    }

    /// Canonical JSON of the whole configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// One configuration per grid point, in grid order, with the sweep
    /// block removed. Without a sweep the configuration itself is returned
    /// with no parameter value.
    pub fn expand(&self) -> Result<Vec<(Option<f64>, ExperimentConfig)>, ConfigError> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![(None, self.clone())]);
        };
        let kind = self.experiment.kind();
        let block = self.block_value();
        sweep
            .grid
            .points()
            .into_iter()
            .map(|x| {
                let mut b = block.clone();
                b[&sweep.parameter] = serde_json::json!(x);
                let mut wrapped = serde_json::Map::new();
                wrapped.insert(kind.to_string(), b);
                let experiment: Experiment = serde_json::from_value(Value::Object(wrapped))
                    .map_err(|e| single("sweep.parameter", e.to_string()))?;
                let cfg = ExperimentConfig {
                    experiment,
                    sweep: None,
                    ..self.clone()
                };
                let errors = cfg.violations();
                if !errors.is_empty() {
                    return Err(ConfigError { errors });
                }
                Ok((Some(x), cfg))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_lattice_gets_defaults() {
        let cfg = parse_config(
            r#"{"experiment": {"lattice": {"gamma": 0.9,
                "schedule": {"kind": "periodic", "values": [1, 3]}}}}"#,
        )
        .unwrap();
        let Experiment::Lattice(l) = &cfg.experiment else {
            panic!("wrong kind");
        };
        assert_eq!(l.tau, 1e-3);
        assert_eq!(l.horizon, 1.0);
        assert_eq!(cfg.expand().unwrap().len(), 1);
    }

    #[test]
    fn negative_gamma_names_field() {
        let err = parse_config(
            r#"{"experiment": {"lattice": {"gamma": -1, "tau": -2,
                "schedule": {"kind": "constant", "value": 1}}}}"#,
        )
        .unwrap_err();
        let fields: Vec<&str> = err.errors.iter().map(|e| e.0.as_str()).collect();
        assert_eq!(fields, ["gamma", "tau"]);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            r#"{"experiment": {"lattice": {"gamma": 1, "gama": 2,
                "schedule": {"kind": "constant", "value": 1}}}}"#,
            r#"{"experiment": {"lattice": {"gamma": 1,
                "schedule": {"kind": "constant", "value": 1}}}, "extra": 1}"#,
            r#"{"experiment": {"lattice": {"gamma": 1,
                "schedule": {"kind": "constant", "value": 1}},
                "wiggly": {"T": 1, "gamma": 1, "schedule": {"kind": "constant", "value": 1}}}}"#,
        ] {
            assert!(parse_config(text).is_err(), "{text}");
        }
    }

    #[test]
    fn logspace_sweep_expands() {
        let cfg = parse_config(
            r#"{"experiment": {"lattice": {"gamma": 1,
                "schedule": {"kind": "periodic", "values": [1, 3]}}},
                "sweep": {"parameter": "gamma",
                          "grid": {"kind": "logspace", "start": 0.001, "stop": 2.5, "num": 100}}}"#,
        )
        .unwrap();
        let runs = cfg.expand().unwrap();
        assert_eq!(runs.len(), 100);
        assert_eq!(runs[0].0, Some(0.001));
        assert_eq!(runs[99].0, Some(2.5));
        let ratio = runs[1].0.unwrap() / runs[0].0.unwrap();
        let ratio2 = runs[51].0.unwrap() / runs[50].0.unwrap();
        assert!((ratio - ratio2).abs() < 1e-12);
        let Experiment::Lattice(l) = &runs[42].1.experiment else {
            panic!("wrong kind");
        };
        assert_eq!(Some(l.gamma), runs[42].0);
        assert!(runs.iter().all(|r| r.1.sweep.is_none()));
    }

    #[test]
    fn sweep_over_missing_field_rejected() {
        let err = parse_config(
            r#"{"experiment": {"lattice": {"gamma": 1,
                "schedule": {"kind": "constant", "value": 1}}},
                "sweep": {"parameter": "T", "grid": {"kind": "values", "values": [1]}}}"#,
        )
        .unwrap_err();
        assert_eq!(err.errors[0].0, "sweep.parameter");
        // defaulted fields can be swept
        parse_config(
            r#"{"experiment": {"lattice": {"gamma": 1,
                "schedule": {"kind": "constant", "value": 1}}},
                "sweep": {"parameter": "tau", "grid": {"kind": "values", "values": [1e-3]}}}"#,
        )
        .unwrap();
    }

    #[test]
    fn crystal_and_diagnostics_blocks() {
        let cfg = parse_config(
            r#"{"experiment": {"crystal": {"L1": 3, "L2": 3, "gamma": 1,
                "schedule": {"kind": "constant", "value": 1},
                "oracle": {"cells_w": 4, "cells_h": 5, "eps": 0.1, "a": 1, "tau": 1}}}}"#,
        )
        .unwrap_err();
        assert_eq!(err_fields(&cfg), ["oracle.cells_w"]);
        let cfg = parse_config(
            r#"{"experiment": {"diagnostics": {"energy": {"kind": "quadratic", "stiffness": -1},
                "schedule": {"kind": "constant", "value": 1}, "tau": 0}}}"#,
        )
        .unwrap_err();
        assert_eq!(err_fields(&cfg), ["tau", "energy.stiffness"]);
    }

    fn err_fields(e: &ConfigError) -> Vec<&str> {
        e.errors.iter().map(|x| x.0.as_str()).collect()
    }
}
