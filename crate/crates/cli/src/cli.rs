//! Argument parsing and the top-level driver.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Map, Value};

use crate::config::{parse_config, ConfigError, ExperimentConfig, Format};
use crate::run::{render, run_experiment, Command, RunError};

#[derive(Debug, Parser)]
#[command(name = "mmflows", version, about = "Perturbed minimizing-movement experiments")]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; inferred from the output extension by default.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Concurrent sweep cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    group: Group,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Group {
    /// Descent on (sub)lattices.
    Lattice {
        #[command(subcommand)]
        action: LatticeAction,
    },
    /// Wiggly energies: orbits, velocities and pinning thresholds.
    Wiggly {
        #[command(subcommand)]
        action: WigglyAction,
    },
    /// Crystalline motion of coordinate rectangles.
    Crystal {
        #[command(subcommand)]
        action: CrystalAction,
    },
    /// Diagnostics of the generic scheme.
    Diag {
        #[command(subcommand)]
        action: DiagAction,
    },
}

#[derive(Debug, Subcommand)]
enum LatticeAction {
    /// Trajectory `n,t,u,increment,a_n`.
    Run,
    /// Staircase `γ ↦ 1/a_γ` over the sweep grid.
    SweepGamma,
}

#[derive(Debug, Subcommand)]
enum WigglyAction {
    /// Rescaled orbit.
    Run,
    /// Homogenized velocity estimate.
    Velocity,
    /// Pinning threshold by bisection.
    Threshold,
}

#[derive(Debug, Subcommand)]
enum CrystalAction {
    /// Side lengths `t,L1,L2,regime`.
    Run(RectFlags),
    /// Exhaustive minimization over concentric rectangles.
    Oracle(OracleFlags),
    /// Flat flow with the harmonic mean of the schedule.
    Flatflow(FlatFlags),
}

#[derive(Debug, Subcommand)]
enum DiagAction {
    /// Discrete energy identity along a trajectory.
    EnergyBalance,
}

#[derive(Debug, Args)]
struct RectFlags {
    #[arg(long = "L1")]
    l1: Option<f64>,
    #[arg(long = "L2")]
    l2: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// `1,3` for a periodic list, `2` for a constant, or a JSON object.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// `recursion` or `ode`.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Debug, Args)]
struct OracleFlags {
    #[arg(long)]
    cells_w: Option<i64>,
    #[arg(long)]
    cells_h: Option<i64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    search_radius: Option<i64>,
}

#[derive(Debug, Args)]
struct FlatFlags {
    #[arg(long = "L1")]
    l1: Option<f64>,
    #[arg(long = "L2")]
    l2: Option<f64>,
    /// Harmonic mean `a*`; replaces the schedule by the constant `a*`.
    #[arg(long)]
    a_star: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

/// Parse `args`, run, write the result and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match drive(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

#[derive(Default)]
struct Overrides {
    block: Map<String, Value>,
    run: Map<String, Value>,
}

impl Overrides {
    fn set(&mut self, key: &str, v: Option<impl Into<Value>>) {
        if let Some(v) = v {
            self.block.insert(key.to_string(), v.into());
        }
    }
}

fn drive(cli: Cli) -> Result<(), RunError> {
    let mut ov = Overrides::default();
    let cmd = match cli.group {
        Group::Lattice { action } => match action {
            LatticeAction::Run => Command::LatticeRun,
            LatticeAction::SweepGamma => Command::LatticeSweepGamma,
        },
        Group::Wiggly { action } => match action {
            WigglyAction::Run => Command::WigglyRun,
            WigglyAction::Velocity => Command::WigglyVelocity,
            WigglyAction::Threshold => Command::WigglyThreshold,
        },
        Group::Crystal { action } => match action {
            CrystalAction::Run(f) => {
                ov.set("L1", f.l1);
                ov.set("L2", f.l2);
                ov.set("gamma", f.gamma);
                ov.set("horizon", f.horizon);
                ov.set("tau", f.tau);
                ov.set("mode", f.mode);
                if let Some(s) = f.schedule {
                    ov.block.insert("schedule".into(), parse_schedule_flag(&s)?);
                }
                Command::CrystalRun
            }
            CrystalAction::Oracle(f) => {
                let mut o = Map::new();
                for (k, v) in [
                    ("cells_w", f.cells_w.map(Value::from)),
                    ("cells_h", f.cells_h.map(Value::from)),
                    ("eps", f.eps.map(Value::from)),
                    ("a", f.a.map(Value::from)),
                    ("tau", f.tau.map(Value::from)),
                    ("search_radius", f.search_radius.map(Value::from)),
                ] {
                    if let Some(v) = v {
                        o.insert(k.into(), v);
                    }
                }
                // the rectangle block describes the same set
                if let (Some(w), Some(h), Some(eps), Some(a), Some(tau)) =
                    (f.cells_w, f.cells_h, f.eps, f.a, f.tau)
                {
                    ov.set("L1", Some(w as f64 * eps));
                    ov.set("L2", Some(h as f64 * eps));
                    ov.set("gamma", Some(eps / tau));
                    ov.set("tau", Some(tau));
                    ov.block
                        .insert("schedule".into(), json!({"kind": "constant", "value": a}));
                }
                if !o.is_empty() {
                    ov.block.insert("oracle".into(), Value::Object(o));
                }
                Command::CrystalOracle
            }
            CrystalAction::Flatflow(f) => {
                ov.set("L1", f.l1);
                ov.set("L2", f.l2);
                ov.set("horizon", f.horizon);
                if let Some(a) = f.a_star {
                    ov.block
                        .insert("schedule".into(), json!({"kind": "constant", "value": a}));
                }
                if let Some(n) = f.samples {
                    ov.run.insert("samples".into(), json!(n));
                }
                Command::CrystalFlatflow
            }
        },
        Group::Diag { action } => match action {
            DiagAction::EnergyBalance => Command::DiagEnergyBalance,
        },
    };

    let text = match &cli.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| {
            RunError::Usage(format!("cannot read config {}: {e}", p.display()))
        })?),
        None => None,
    };
    if cmd == Command::CrystalFlatflow && text.is_none() {
        // the flat flow does not depend on γ
        ov.block.entry("gamma").or_insert(json!(1.0));
    }
    let cfg = assemble(cmd.kind(), text.as_deref(), ov)?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(RunError::Usage("--jobs must be positive".into()));
    }
    info!("{} with config {}", cmd.name(), crate::run::config_hash(&cfg));
    let table = run_experiment(cmd, &cfg, jobs)?;

    let out: Option<PathBuf> = cli.out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    let format = match (cli.format, cfg.format) {
        (Some(FormatArg::Csv), _) => Format::Csv,
        (Some(FormatArg::Json), _) => Format::Json,
        (None, Some(f)) => f,
        (None, None) => match out.as_deref().and_then(Path::extension) {
            Some(e) if e == "json" => Format::Json,
            _ => Format::Csv,
        },
    };
    let body = render(&table, format, cmd, &cfg);
    match out {
        Some(p) => fs::write(&p, body)?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn parse_schedule_flag(s: &str) -> Result<Value, RunError> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s)
            .map_err(|e| RunError::Usage(format!("--schedule: {e}")));
    }
    let values = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RunError::Usage(format!("--schedule: {e}")))?;
    Ok(match values.as_slice() {
        [v] => json!({"kind": "constant", "value": v}),
        _ => json!({"kind": "periodic", "values": values}),
    })
}

/// Merge flag overrides into the configuration document and validate it.
fn assemble(kind: &str, text: Option<&str>, ov: Overrides) -> Result<ExperimentConfig, RunError> {
    let mut doc = match text {
        Some(t) => serde_json::from_str::<Value>(t).map_err(|e| {
            RunError::Config(ConfigError {
                errors: vec![(String::new(), e.to_string())],
            })
        })?,
        None => json!({"experiment": {kind: {}}}),
    };
    if let Some(exp) = doc.get("experiment").and_then(Value::as_object) {
        if exp.len() == 1 && !exp.contains_key(kind) {
            let found = exp.keys().next().expect("one key");
            return Err(RunError::Usage(format!(
                "this command needs a {kind} configuration, got {found}"
            )));
        }
    }
    if let Some(block) = doc
        .get_mut("experiment")
        .and_then(|e| e.get_mut(kind))
        .and_then(Value::as_object_mut)
    {
        block.extend(ov.block);
    }
    if !ov.run.is_empty() {
        if let Some(obj) = doc.as_object_mut() {
            let run = obj.entry("run").or_insert_with(|| json!({}));
            if let Some(r) = run.as_object_mut() {
                r.extend(ov.run);
            }
        }
    }
    Ok(parse_config(&doc.to_string())?)
}
