//! Scenario files, the experiment runner, CSV and snapshot output, and the
//! catalog of canned scenarios.
//!
//! A scenario is a small TOML document:
//!
//! ```toml
//! name = "two-mode"
//! experiment = "trajectories"
//!
//! [grid]
//! npoints = [128]
//! lo = [0.0]
//! hi = [3.141592653589793]
//!
//! [state]
//! kind = "box-modes"
//! quanta = [1, 2]
//! ```
//!
//! Sections are `grid`, `state`, `potential`, `dynamics`, `ensemble` and
//! `coupling`; any key not listed in [`Scenario`]'s sections is rejected.

mod build;
mod experiments;
mod output;
mod scenario;

pub use build::{coefficients, evolution, modes, packet_state};
pub use output::{
    read_snapshot, snapshot_header_len, write_ensemble_csv, write_h_series, write_measurements, write_paths_csv,
    write_snapshot, write_table, write_trajectory_csv, SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
};
pub use scenario::{
    load_scenario, parse_scenario, CouplingParams, Dynamics, EngineChoice, EnsembleSpec, Experiment, GridSpec,
    Observable, Phases, Preparation, Scenario, StateKind, StateSpec, DEFAULT_CELLS, DEFAULT_CHECKPOINTS, DEFAULT_N,
    DEFAULT_PROBES, DEFAULT_REPETITIONS, DEFAULT_SAMPLES, DEFAULT_STARTS, DEFAULT_TOL, DEFAULT_T_FINAL,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "PILOTWAVE_OUT";

/// Command-line overrides for a run.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub quiet: bool,
}

/// A built-in check: `value relation limit`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub value: f64,
    pub relation: &'static str,
    pub limit: f64,
    pub passed: bool,
}

impl Assertion {
    pub fn new(name: impl Into<String>, value: f64, relation: &'static str, limit: f64) -> Self {
        let passed = match relation {
            "<" => value < limit,
            "<=" => value <= limit,
            ">" => value > limit,
            ">=" => value >= limit,
            "==" => value == limit,
            _ => false,
        };
        Assertion {
            name: name.into(),
            value,
            relation,
            limit,
            passed,
        }
    }
}

/// Compact number formatting for console lines.
fn short(v: f64) -> String {
    if v != 0.0 && v.is_finite() && !(1e-3..1e6).contains(&v.abs()) {
        format!("{v:.4e}")
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

impl std::fmt::Display for Assertion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {} {} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            short(self.value),
            self.relation,
            short(self.limit)
        )
    }
}

/// Summary of a finished run, also written as `manifest.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub description: String,
    pub experiment: &'static str,
    pub seed: u64,
    pub engine: String,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub parameters: toml::Table,
    pub results: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub timings: BTreeMap<&'static str, f64>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunReport {
    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn result(&self, key: &str) -> Option<f64> {
        self.results.get(key).copied()
    }

    /// Process exit status: 0 when every assertion passed.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// `--out`, then `$PILOTWAVE_OUT/<name>`, then the scenario's `output`, then `out/<name>`.
pub fn output_dir(s: &Scenario, opts: &RunOptions) -> PathBuf {
    if let Some(out) = &opts.out {
        return out.clone();
    }
    if let Some(root) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return Path::new(&root).join(&s.name);
    }
    s.output.clone().unwrap_or_else(|| Path::new("out").join(&s.name))
}

/// Run a scenario, write its outputs and manifest, and report the results.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let go = || run_inner(s, opts).map_err(|e| Error::Scenario {
        scenario: s.name.clone(),
        source: Box::new(e),
    });
    match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Scenario {
                scenario: s.name.clone(),
                source: Box::new(Error::Io(std::io::Error::other(e))),
            })?
            .install(go),
        None => go(),
    }
}

fn run_inner(s: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let dir = output_dir(s, opts);
    std::fs::create_dir_all(&dir)?;
    let mut run = experiments::Run {
        s,
        seed: opts.seed.unwrap_or(s.seed),
        dir: dir.clone(),
        quiet: opts.quiet,
        engine: s.dynamics.engine.name().to_string(),
        outputs: Vec::new(),
        assertions: Vec::new(),
        results: BTreeMap::new(),
        warnings: Vec::new(),
    };
    experiments::run(&mut run)?;
    let mut report = RunReport {
        scenario: s.name.clone(),
        description: s.description.clone(),
        experiment: s.experiment.name(),
        seed: run.seed,
        engine: run.engine,
        versions: BTreeMap::from([("pilotwave", env!("CARGO_PKG_VERSION"))]),
        parameters: s.source.clone(),
        results: run.results,
        passed: run.assertions.iter().all(|a| a.passed),
        assertions: run.assertions,
        outputs: run.outputs,
        warnings: run.warnings,
        timings: BTreeMap::new(),
        out_dir: dir.clone(),
    };
    report.outputs.push("manifest.json".into());
    report.timings.insert("total_seconds", start.elapsed().as_secs_f64());
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// A scenario shipped with the crate.
#[derive(Clone, Copy, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! canned {
    ($($name:literal),* $(,)?) => {
        &[$(CatalogEntry {
            name: $name,
            text: include_str!(concat!("../../../../scenarios/", $name, ".toml")),
        }),*]
    };
}

static CATALOG: &[CatalogEntry] = canned!(
    "evolve",
    "evolve-splitstep",
    "trajectories",
    "equivariance",
    "relax",
    "born-branches",
    "born-nonequilibrium",
    "momentum-split",
    "kinetic-energy-pointer",
    "double-slit",
    "two-packet",
    "subquantum-track",
    "occupancy",
);

pub fn catalog() -> &'static [CatalogEntry] {
    CATALOG
}

/// Parse the canned scenario called `name`.
pub fn catalog_scenario(name: &str) -> Option<Result<Scenario>> {
    CATALOG.iter().find(|e| e.name == name).map(|e| parse_scenario(e.text))
}
