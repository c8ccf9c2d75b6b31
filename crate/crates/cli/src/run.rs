//! Command dispatch, sweep execution and result rendering.

use std::fmt;

use log::{debug, info};
use mmflows_core::crystal::{
    classify_regime, flat_flow, integrate_limit_ode, rectangle_oracle, run_rectangle, Regime,
};
use mmflows_core::lattice::{run_lattice, staircase_sweep, staircase_table};
use mmflows_core::output::{num, Table};
use mmflows_core::scheme::{energy_balance, run_scheme, Energy, QuadraticEnergy, WigglyEnergy};
use mmflows_core::wiggly::{homogenized_velocity, pinning_threshold, run_rescaled, ThresholdResult};
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, CrystalMode, EnergySpec, Experiment, ExperimentConfig, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    LatticeRun,
    LatticeSweepGamma,
    WigglyRun,
    WigglyVelocity,
    WigglyThreshold,
    CrystalRun,
    CrystalOracle,
    CrystalFlatflow,
    DiagEnergyBalance,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::LatticeRun => "lattice run",
            Command::LatticeSweepGamma => "lattice sweep-gamma",
            Command::WigglyRun => "wiggly run",
            Command::WigglyVelocity => "wiggly velocity",
            Command::WigglyThreshold => "wiggly threshold",
            Command::CrystalRun => "crystal run",
            Command::CrystalOracle => "crystal oracle",
            Command::CrystalFlatflow => "crystal flatflow",
            Command::DiagEnergyBalance => "diag energy-balance",
        }
    }

    /// Configuration block the command reads.
    pub fn kind(&self) -> &'static str {
        match self {
            Command::LatticeRun | Command::LatticeSweepGamma => "lattice",
            Command::WigglyRun | Command::WigglyVelocity | Command::WigglyThreshold => "wiggly",
            Command::CrystalRun | Command::CrystalOracle | Command::CrystalFlatflow => "crystal",
            Command::DiagEnergyBalance => "diagnostics",
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Usage(String),
    Config(ConfigError),
    Module(mmflows_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Usage(m) => write!(f, "usage: {m}"),
            RunError::Config(e) => e.fmt(f),
            RunError::Module(e) => e.fmt(f),
            RunError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<mmflows_core::Error> for RunError {
    fn from(e: mmflows_core::Error) -> Self {
        RunError::Module(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl RunError {
    /// 2 for numerical and mathematical failures, 1 for everything the user
    /// can fix by changing the invocation.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Module(_) => 2,
            RunError::Usage(_) | RunError::Config(_) | RunError::Io(_) => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, fields) = match self {
            RunError::Usage(_) => ("usage".to_string(), Vec::new()),
            RunError::Config(e) => (
                "config".to_string(),
                e.errors
                    .iter()
                    .map(|(f, r)| json!({"field": f, "reason": r}))
                    .collect(),
            ),
            RunError::Module(e) => (e.kind().to_string(), Vec::new()),
            RunError::Io(_) => ("io".to_string(), Vec::new()),
        };
        let mut v = json!({
            "error": kind,
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if !fields.is_empty() {
            v["fields"] = Value::Array(fields);
        }
        if let RunError::Module(e) = self {
            v["degenerate"] = json!(e.is_degenerate());
        }
        v
    }
}

/// Run `cmd`, expanding a sweep block into one run per grid point.
///
/// Sweep cells run on a pool of `jobs` threads; rows are assembled in grid
/// order with the swept value as a leading column.
pub fn run_experiment(cmd: Command, cfg: &ExperimentConfig, jobs: usize) -> Result<Table, RunError> {
    if cfg.experiment.kind() != cmd.kind() {
        return Err(RunError::Usage(format!(
            "`{}` needs a {} configuration, got {}",
            cmd.name(),
            cmd.kind(),
            cfg.experiment.kind()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::Usage(format!("thread pool: {e}")))?;

    if cmd == Command::LatticeSweepGamma {
        return pool.install(|| lattice_sweep_gamma(cfg));
    }
    let runs = cfg.expand()?;
    info!("{}: {} run(s) on {} thread(s)", cmd.name(), runs.len(), jobs.max(1));
    let tables: Vec<Result<Table, RunError>> = pool.install(|| {
        runs.par_iter()
            .map(|(x, c)| {
                debug!("{} at {:?}", cmd.name(), x);
                run_single(cmd, c)
            })
            .collect()
    });
    let Some(sweep) = &cfg.sweep else {
        return tables.into_iter().next().expect("one run");
    };
    let mut out: Option<Table> = None;
    for ((x, _), t) in runs.iter().zip(tables) {
        let t = t?;
        let merged = out.get_or_insert_with(|| {
            let mut cols = vec![sweep.parameter.clone()];
            cols.extend(t.columns.iter().cloned());
            Table::new(cols)
        });
        let value = num(x.expect("sweep value"));
        for row in t.rows {
            let mut r = Vec::with_capacity(row.len() + 1);
            r.push(value.clone());
            r.extend(row);
            merged.push(r);
        }
    }
    Ok(out.expect("non-empty sweep"))
}

fn lattice_sweep_gamma(cfg: &ExperimentConfig) -> Result<Table, RunError> {
    let Experiment::Lattice(l) = &cfg.experiment else {
        unreachable!("kind checked by the caller");
    };
    let grid = match &cfg.sweep {
        Some(s) if s.parameter == "gamma" => s.grid.points(),
        Some(s) => {
            return Err(RunError::Usage(format!(
                "sweep-gamma sweeps gamma, not '{}'",
                s.parameter
            )))
        }
        None => return Err(RunError::Usage("sweep-gamma needs a sweep block over gamma".into())),
    };
    let rows: Vec<_> = grid
        .par_iter()
        .map(|&g| staircase_sweep(&l.schedule, &[g]))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(staircase_table(&rows))
}

/// One run without sweep handling.
pub fn run_single(cmd: Command, cfg: &ExperimentConfig) -> Result<Table, RunError> {
    let opts = &cfg.run;
    match (&cfg.experiment, cmd) {
        (Experiment::Lattice(l), Command::LatticeRun) => Ok(run_lattice(l)?.table()),
        (Experiment::Lattice(_), Command::LatticeSweepGamma) => lattice_sweep_gamma(cfg),
        (Experiment::Wiggly(w), Command::WigglyRun) => {
            let n = w.schedule.period().unwrap_or(1);
            let steps = opts.steps.unwrap_or(1000 * n);
            let eps = w.gamma * w.tau;
            let ys = run_rescaled(w, steps)?;
            let mut t = Table::new(["n", "t", "y", "u"]);
            for (k, y) in ys.iter().enumerate() {
                t.push(vec![k.to_string(), num(k as f64 * w.tau), num(*y), num(eps * y)]);
            }
            Ok(t)
        }
        (Experiment::Wiggly(w), Command::WigglyVelocity) => {
            let v = homogenized_velocity(w, opts.steps)?;
            let mut t = Table::new(["T", "gamma", "velocity", "bound", "burn_in", "steps"]);
            t.push(vec![
                num(w.tilt),
                num(w.gamma),
                num(v.value),
                num(v.bound),
                v.burn_in.to_string(),
                v.steps.to_string(),
            ]);
            Ok(t)
        }
        (Experiment::Wiggly(w), Command::WigglyThreshold) => {
            let r = pinning_threshold(w, opts.t_max, opts.tol)?;
            Ok(ThresholdResult::table(&[r]))
        }
        (Experiment::Crystal(c), Command::CrystalRun) => {
            let state = c.state()?;
            let regime = match classify_regime(state, &c.schedule, c.gamma) {
                Ok(r) => Some(r),
                Err(e) if e.is_degenerate() => None,
                Err(e) => return Err(e.into()),
            };
            match c.mode {
                CrystalMode::Recursion => {
                    let traj =
                        run_rectangle(state, &c.schedule, c.gamma, c.tau, c.horizon, c.policy)?;
                    Ok(with_regime(traj.table(None), regime))
                }
                CrystalMode::Ode => {
                    let sol = integrate_limit_ode(state, &c.schedule, c.gamma, c.horizon)?;
                    let times: Vec<f64> = (0..opts.samples)
                        .map(|k| c.horizon * k as f64 / (opts.samples - 1) as f64)
                        .collect();
                    Ok(with_regime(sol.table(&times), regime))
                }
            }
        }
        (Experiment::Crystal(c), Command::CrystalOracle) => {
            let o = c.oracle.as_ref().ok_or_else(|| {
                RunError::Usage("crystal oracle needs an oracle block or --cells-w/--cells-h/--eps/--a/--tau".into())
            })?;
            Ok(rectangle_oracle(&o.input())?.table())
        }
        (Experiment::Crystal(c), Command::CrystalFlatflow) => {
            let a_star = c.schedule.harmonic_limit()?;
            let f = flat_flow(c.state()?, a_star, c.horizon, opts.samples - 1)?;
            Ok(f.table())
        }
        (Experiment::Diagnostics(d), Command::DiagEnergyBalance) => {
            let energy: Box<dyn Energy> = match &d.energy {
                EnergySpec::Quadratic { stiffness, center } => Box::new(QuadraticEnergy {
                    stiffness: *stiffness,
                    center: *center,
                }),
                EnergySpec::Wiggly {
                    eps,
                    tilt,
                    potential,
                } => Box::new(WigglyEnergy {
                    eps: *eps,
                    tilt: *tilt,
                    potential: potential.clone(),
                }),
            };
            let traj = run_scheme(energy.as_ref(), d.u0, &d.schedule, d.tau, d.horizon, d.tie_policy)?;
            let b = energy_balance(energy.as_ref(), &traj, d.quadrature_points)?;
            let mut t = Table::new(["steps", "kinetic", "slope", "lhs", "rhs", "residual"]);
            t.push(vec![
                traj.steps().to_string(),
                num(b.kinetic),
                num(b.slope),
                num(b.lhs),
                num(b.rhs),
                num(b.residual),
            ]);
            Ok(t)
        }
        (e, c) => Err(RunError::Usage(format!(
            "`{}` cannot run a {} configuration",
            c.name(),
            e.kind()
        ))),
    }
}

fn with_regime(mut t: Table, regime: Option<Regime>) -> Table {
    let label = regime.map(|r| r.label()).unwrap_or("degenerate");
    if !t.columns.iter().any(|c| c == "regime") {
        t.columns.push("regime".into());
        for r in &mut t.rows {
            r.push(String::new());
        }
    }
    let col = t.columns.iter().position(|c| c == "regime").expect("present");
    for r in &mut t.rows {
        r[col] = label.to_string();
    }
    t
}

/// Hex SHA-256 of the canonical configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_json().as_bytes()))
}

/// Serialize a result table; JSON output carries a metadata header.
pub fn render(table: &Table, format: Format, cmd: Command, cfg: &ExperimentConfig) -> String {
    match format {
        Format::Csv => table.to_csv_string(),
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|r| Value::Array(r.iter().map(|c| cell(c)).collect()))
                .collect();
            let doc = json!({
                "metadata": {
                    "command": cmd.name(),
                    "config_sha256": config_hash(cfg),
                    "versions": {
                        "mmflows-core": mmflows_core::VERSION,
                        "mmflows-cli": env!("CARGO_PKG_VERSION"),
                    },
                },
                "columns": table.columns,
                "rows": rows,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("json serializes");
            s.push('\n');
            s
        }
    }
}

/// Integers and finite floats become JSON numbers, anything else a string.
fn cell(c: &str) -> Value {
    if let Ok(i) = c.parse::<i64>() {
        return json!(i);
    }
    match c.parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => json!(c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg(text: &str) -> ExperimentConfig {
        parse_config(text).unwrap()
    }

    #[test]
    fn sweep_rows_in_grid_order_for_any_job_count() {
        let c = cfg(r#"{"experiment": {"wiggly": {"T": 0.5, "gamma": 1,
                "schedule": {"kind": "constant", "value": 1}}},
                "run": {"steps": 2000},
                "sweep": {"parameter": "T", "grid": {"kind": "linspace", "start": 1.1, "stop": 2.0, "num": 7}}}"#);
        let one = run_experiment(Command::WigglyVelocity, &c, 1).unwrap();
        let four = run_experiment(Command::WigglyVelocity, &c, 4).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.rows.len(), 7);
        assert_eq!(one.columns[0], "T");
    }

    #[test]
    fn total_pinning_gives_flat_curves() {
        let c = cfg(r#"{"experiment": {"crystal": {"L1": 3.3, "L2": 3.1, "gamma": 1,
                "schedule": {"kind": "constant", "value": 1}, "horizon": 0.05}}}"#);
        let t = run_experiment(Command::CrystalRun, &c, 1).unwrap();
        assert_eq!(t.columns, ["t", "L1", "L2", "regime"]);
        assert!(t.rows.iter().all(|r| r[1] == t.rows[0][1] && r[2] == t.rows[0][2]));
        assert!(t.rows.iter().all(|r| r[3] == "total_pinning"));
    }

    #[test]
    fn kind_mismatch_is_usage_error() {
        let c = cfg(r#"{"experiment": {"lattice": {"gamma": 1,
                "schedule": {"kind": "constant", "value": 1}}}}"#);
        let e = run_experiment(Command::WigglyRun, &c, 1).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn bifurcation_maps_to_exit_two() {
        // 1/(aγ) + 1/2 = 1 exactly
        let c = cfg(r#"{"experiment": {"lattice": {"gamma": 2, "tau": 0.01,
                "schedule": {"kind": "constant", "value": 1}}}}"#);
        let e = run_experiment(Command::LatticeRun, &c, 1).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(e.to_json()["degenerate"], json!(true));
    }

    #[test]
    fn json_has_metadata() {
        let c = cfg(r#"{"experiment": {"lattice": {"gamma": 0.9, "horizon": 0.01,
                "schedule": {"kind": "periodic", "values": [1, 3]}}}}"#);
        let t = run_experiment(Command::LatticeRun, &c, 1).unwrap();
        let s = render(&t, Format::Json, Command::LatticeRun, &c);
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["metadata"]["config_sha256"].as_str().unwrap().len(), 64);
        assert_eq!(v["metadata"]["versions"]["mmflows-core"], mmflows_core::VERSION);
        assert_eq!(v["rows"].as_array().unwrap().len(), t.rows.len());
        assert_eq!(s, render(&t, Format::Json, Command::LatticeRun, &c));
    }
}
