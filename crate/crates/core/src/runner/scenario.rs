use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::qstate::{Axis, Boundary, Grid, PotentialSpec};

/// Keys accepted in each section; the empty section is the top level.
const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["name", "description", "experiment", "seed", "output"]),
    ("grid", &["npoints", "lo", "hi", "boundary", "masses"]),
    (
        "state",
        &["kind", "quanta", "amplitudes", "phases", "observable", "eigenvalues", "centres", "widths", "momenta"],
    ),
    ("potential", &["kind", "params"]),
    ("dynamics", &["engine", "dt", "tol", "t_final", "checkpoints", "samples", "snapshots"]),
    ("ensemble", &["n", "cells", "preparation", "branch", "starts"]),
    ("coupling", &["a", "tau", "pointer_sigma", "pointer", "width", "probes", "repetitions"]),
];

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_T_FINAL: f64 = 1.0;
pub const DEFAULT_CHECKPOINTS: usize = 10;
pub const DEFAULT_SAMPLES: usize = 201;
pub const DEFAULT_N: usize = 10_000;
pub const DEFAULT_STARTS: usize = 1000;
pub const DEFAULT_CELLS: usize = 32;
pub const DEFAULT_PROBES: usize = 10;
pub const DEFAULT_REPETITIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    Evolve,
    Trajectories,
    Relax,
    BornBranches,
    MomentumSplit,
    KineticEnergyPointer,
    DoubleSlit,
    TwoPacket,
    SubquantumTrack,
    Occupancy,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Evolve,
        Experiment::Trajectories,
        Experiment::Relax,
        Experiment::BornBranches,
        Experiment::MomentumSplit,
        Experiment::KineticEnergyPointer,
        Experiment::DoubleSlit,
        Experiment::TwoPacket,
        Experiment::SubquantumTrack,
        Experiment::Occupancy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Evolve => "evolve",
            Experiment::Trajectories => "trajectories",
            Experiment::Relax => "relax",
            Experiment::BornBranches => "born-branches",
            Experiment::MomentumSplit => "momentum-split",
            Experiment::KineticEnergyPointer => "kinetic-energy-pointer",
            Experiment::DoubleSlit => "double-slit",
            Experiment::TwoPacket => "two-packet",
            Experiment::SubquantumTrack => "subquantum-track",
            Experiment::Occupancy => "occupancy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == name)
    }

    /// Pointer-branching experiments driven by a [`QuantumMeasurement`](crate::measurement::QuantumMeasurement).
    pub fn is_branching(self) -> bool {
        matches!(
            self,
            Experiment::BornBranches | Experiment::MomentumSplit | Experiment::KineticEnergyPointer
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub npoints: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub boundary: Vec<Boundary>,
    pub masses: Vec<f64>,
}

impl GridSpec {
    pub fn ndim(&self) -> usize {
        self.npoints.len()
    }

    pub fn grid(&self) -> Result<Grid> {
        let axes = (0..self.ndim())
            .map(|k| Axis::new(self.npoints[k], self.lo[k], self.hi[k], self.boundary[k]))
            .collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }

    pub fn all(&self, b: Boundary) -> bool {
        self.boundary.iter().all(|&x| x == b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    /// Box eigenmodes listed by quantum numbers.
    BoxModes,
    /// Plane waves `exp(2πi m x / L)` listed by `m`.
    PlaneWaves,
    /// Analytic superposition of separable Gaussian packets.
    Packets,
    /// Disjoint Gaussian packets tabulated on the grid and used as
    /// orthonormal modes of a measured observable (one-dimensional).
    PacketModes,
}

impl StateKind {
    fn from_name(s: &str) -> Option<Self> {
        match s {
            "box-modes" => Some(StateKind::BoxModes),
            "plane-waves" => Some(StateKind::PlaneWaves),
            "packets" => Some(StateKind::Packets),
            "packet-modes" => Some(StateKind::PacketModes),
            _ => None,
        }
    }

    pub fn is_modal(self) -> bool {
        !matches!(self, StateKind::Packets)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Phases {
    Given(Vec<f64>),
    /// Uniform on `[0, 2π)`, drawn from the scenario seed.
    Random,
}

/// Eigenvalues the measured observable assigns to the modes.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Energy,
    /// Plane-wave momenta `2π m / L`.
    Momentum,
    Given(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpec {
    pub kind: StateKind,
    /// Quantum numbers, one row per mode (modal kinds).
    pub quanta: Vec<Vec<i64>>,
    /// Packet centres, widths and momenta: one row per term, one entry per axis.
    pub centres: Vec<Vec<f64>>,
    pub widths: Vec<Vec<f64>>,
    pub momenta: Vec<Vec<f64>>,
    pub amplitudes: Vec<f64>,
    pub phases: Phases,
    pub observable: Observable,
}

impl StateSpec {
    pub fn terms(&self) -> usize {
        self.amplitudes.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EngineChoice {
    Eigenmode,
    Packets,
    SplitStep { dt: f64 },
}

impl EngineChoice {
    pub fn name(self) -> &'static str {
        match self {
            EngineChoice::Eigenmode => "eigenmode",
            EngineChoice::Packets => "packets",
            EngineChoice::SplitStep { .. } => "splitstep",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dynamics {
    pub engine: EngineChoice,
    pub tol: f64,
    pub t_final: f64,
    pub checkpoints: usize,
    /// Recorded samples per trajectory.
    pub samples: usize,
    /// Times at which field snapshots are written.
    pub snapshots: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preparation {
    /// `|Ψ₀|²`.
    Equilibrium,
    /// Density of the lowest box mode while the wave is the full superposition.
    GroundMode,
    /// `|φ|²` of one measurement branch times the pointer density.
    Branch(usize),
    /// `|Ψ₀|²` restricted to positive values of the last coordinate.
    UpperHalf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub n: usize,
    pub cells: Vec<usize>,
    pub preparation: Preparation,
    pub starts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingParams {
    pub a: f64,
    pub tau: f64,
    pub pointer_sigma: f64,
    pub narrow: bool,
    pub width: Option<f64>,
    pub probes: usize,
    pub repetitions: usize,
}

/// A validated experiment description.
///
/// Documented defaults: `seed = 0`, `tol = 1e-8`, `t_final = 1`,
/// `checkpoints = 10`, `samples = 201`, `n = 10000`, `starts = 1000`,
/// 32 coarse cells per axis, `probes = 10`, `repetitions = 100`, unit masses,
/// box walls on every axis, an engine matching the state kind and the free
/// (periodic) or box-wall potential.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub grid: GridSpec,
    pub state: StateSpec,
    pub potential: PotentialSpec,
    pub dynamics: Dynamics,
    pub ensemble: EnsembleSpec,
    pub coupling: Option<CouplingParams>,
    /// The document as parsed, for the run manifest.
    pub source: Table,
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let table: Table = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    check_keys(&table)?;
    let s = Reader { table: &table }.scenario()?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn check_keys(table: &Table) -> Result<()> {
    let allowed = |section: &str| SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k);
    let top = allowed("").unwrap();
    for (key, value) in table {
        match value {
            Value::Table(inner) => {
                let keys = allowed(key)
                    .filter(|_| !key.is_empty())
                    .ok_or_else(|| Error::validation(key, "unknown section"))?;
                for (k, v) in inner {
                    if !keys.contains(&k.as_str()) {
                        return Err(Error::validation(format!("{key}.{k}"), "unknown key"));
                    }
                    if v.is_table() {
                        return Err(Error::validation(format!("{key}.{k}"), "nested tables are not allowed"));
                    }
                }
            }
            _ if top.contains(&key.as_str()) => {}
            _ => return Err(Error::validation(key, "unknown key")),
        }
    }
    Ok(())
}

struct Reader<'a> {
    table: &'a Table,
}

fn full(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

impl Reader<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&Value> {
        if section.is_empty() {
            self.table.get(key)
        } else {
            self.table.get(section)?.as_table()?.get(key)
        }
    }

    fn has_section(&self, section: &str) -> bool {
        self.table.get(section).is_some()
    }

    fn real(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(Value::Float(x)) if x.is_finite() => Ok(Some(*x)),
            Some(_) => Err(Error::validation(full(section, key), "expected a finite real number")),
        }
    }

    fn int(&self, section: &str, key: &str) -> Result<Option<i64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(_) => Err(Error::validation(full(section, key), "expected an integer")),
        }
    }

    fn count(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.int(section, key)? {
            None => Ok(default),
            Some(i) if i > 0 => Ok(i as usize),
            Some(i) => Err(Error::validation(full(section, key), format!("must be positive, got {i}"))),
        }
    }

    fn string(&self, section: &str, key: &str) -> Result<Option<&str>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(Error::validation(full(section, key), "expected a string")),
        }
    }

    /// A bracketed list of numbers; a bare number counts as a list of one.
    fn reals(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        let bad = || Error::validation(full(section, key), "expected a list of real numbers");
        match self.get(section, key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) => Ok(*i as f64),
                    Value::Float(x) if x.is_finite() => Ok(*x),
                    _ => Err(bad()),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(Value::Integer(i)) => Ok(Some(vec![*i as f64])),
            Some(Value::Float(x)) if x.is_finite() => Ok(Some(vec![*x])),
            Some(_) => Err(bad()),
        }
    }

    fn ints(&self, section: &str, key: &str) -> Result<Option<Vec<i64>>> {
        let bad = || Error::validation(full(section, key), "expected a list of integers");
        match self.get(section, key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_integer().ok_or_else(bad))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(Value::Integer(i)) => Ok(Some(vec![*i])),
            Some(_) => Err(bad()),
        }
    }

    fn required<T>(&self, section: &str, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| Error::validation(full(section, key), "missing"))
    }

    fn scenario(&self) -> Result<Scenario> {
        let name = self.required("", "name", self.string("", "name")?)?.to_string();
        let exp_name = self.required("", "experiment", self.string("", "experiment")?)?;
        let experiment = Experiment::from_name(exp_name)
            .ok_or_else(|| Error::validation("experiment", format!("unknown experiment `{exp_name}`")))?;
        let seed = match self.int("", "seed")? {
            None => 0,
            Some(s) if s >= 0 => s as u64,
            Some(s) => return Err(Error::validation("seed", format!("must be non-negative, got {s}"))),
        };
        let grid = self.grid()?;
        let state = self.state(&grid)?;
        let potential = self.potential(&grid)?;
        let dynamics = self.dynamics(&grid, &state)?;
        let ensemble = self.ensemble(&grid)?;
        let coupling = if self.has_section("coupling") {
            Some(self.coupling()?)
        } else {
            None
        };
        Ok(Scenario {
            name,
            description: self.string("", "description")?.unwrap_or_default().to_string(),
            experiment,
            seed,
            output: self.string("", "output")?.map(PathBuf::from),
            grid,
            state,
            potential,
            dynamics,
            ensemble,
            coupling,
            source: self.table.clone(),
        })
    }

    fn grid(&self) -> Result<GridSpec> {
        let s = "grid";
        let npoints = self.required(s, "npoints", self.ints(s, "npoints")?)?;
        let ndim = npoints.len();
        if ndim == 0 || ndim > 3 {
            return Err(Error::validation("grid.npoints", "one to three axes required"));
        }
        let npoints = npoints
            .iter()
            .map(|&n| {
                usize::try_from(n).map_err(|_| Error::validation("grid.npoints", format!("negative point count {n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let per_axis = |key: &str, v: Option<Vec<f64>>, default: Option<f64>| -> Result<Vec<f64>> {
            match (v, default) {
                (Some(v), _) if v.len() == ndim => Ok(v),
                (Some(v), _) => Err(Error::validation(
                    full(s, key),
                    format!("{} values for {ndim} axes", v.len()),
                )),
                (None, Some(d)) => Ok(vec![d; ndim]),
                (None, None) => Err(Error::validation(full(s, key), "missing")),
            }
        };
        let lo = per_axis("lo", self.reals(s, "lo")?, None)?;
        let hi = per_axis("hi", self.reals(s, "hi")?, None)?;
        let masses = per_axis("masses", self.reals(s, "masses")?, Some(1.0))?;
        if masses.iter().any(|&m| m <= 0.0) {
            return Err(Error::validation("grid.masses", "masses must be positive"));
        }
        let names: Vec<&str> = match self.string(s, "boundary")? {
            None => vec!["box"],
            Some(b) => b.split(',').map(str::trim).collect(),
        };
        if names.len() != 1 && names.len() != ndim {
            return Err(Error::validation("grid.boundary", "give one boundary or one per axis"));
        }
        let boundary = (0..ndim)
            .map(|k| match names[k.min(names.len() - 1)] {
                "box" => Ok(Boundary::Box),
                "periodic" => Ok(Boundary::Periodic),
                other => Err(Error::validation("grid.boundary", format!("unknown boundary `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = GridSpec {
            npoints,
            lo,
            hi,
            boundary,
            masses,
        };
        spec.grid()
            .map_err(|e| Error::validation("grid.npoints", e.to_string()))?;
        Ok(spec)
    }

    fn state(&self, grid: &GridSpec) -> Result<StateSpec> {
        let s = "state";
        let kind_name = self.required(s, "kind", self.string(s, "kind")?)?;
        let kind = StateKind::from_name(kind_name)
            .ok_or_else(|| Error::validation("state.kind", format!("unknown state kind `{kind_name}`")))?;
        let ndim = grid.ndim();
        let mut spec = StateSpec {
            kind,
            quanta: Vec::new(),
            centres: Vec::new(),
            widths: Vec::new(),
            momenta: Vec::new(),
            amplitudes: Vec::new(),
            phases: Phases::Given(Vec::new()),
            observable: Observable::Energy,
        };
        let terms = match kind {
            StateKind::BoxModes | StateKind::PlaneWaves => {
                let q = self.required(s, "quanta", self.ints(s, "quanta")?)?;
                if q.is_empty() || q.len() % ndim != 0 {
                    return Err(Error::validation(
                        "state.quanta",
                        format!("{} quantum numbers do not split into {ndim} per mode", q.len()),
                    ));
                }
                spec.quanta = q.chunks(ndim).map(<[i64]>::to_vec).collect();
                spec.quanta.len()
            }
            StateKind::Packets | StateKind::PacketModes => {
                if kind == StateKind::PacketModes && ndim != 1 {
                    return Err(Error::validation("state.kind", "packet modes are one-dimensional"));
                }
                let c = self.required(s, "centres", self.reals(s, "centres")?)?;
                if c.is_empty() || c.len() % ndim != 0 {
                    return Err(Error::validation("state.centres", format!("need {ndim} centres per packet")));
                }
                let t = c.len() / ndim;
                let rows = |key: &str, v: Option<Vec<f64>>, default: f64| -> Result<Vec<Vec<f64>>> {
                    let v = v.unwrap_or_else(|| vec![default]);
                    let expand = |i: usize| -> Vec<f64> {
                        match v.len() {
                            1 => vec![v[0]; ndim],
                            n if n == t => vec![v[i]; ndim],
                            _ => v[i * ndim..(i + 1) * ndim].to_vec(),
                        }
                    };
                    if v.len() != 1 && v.len() != t && v.len() != t * ndim {
                        return Err(Error::validation(
                            full(s, key),
                            format!("give 1, {t} or {} values", t * ndim),
                        ));
                    }
                    Ok((0..t).map(expand).collect())
                };
                spec.centres = c.chunks(ndim).map(<[f64]>::to_vec).collect();
                spec.widths = rows("widths", self.reals(s, "widths")?, f64::NAN)?;
                if spec.widths.iter().flatten().any(|w| !(*w > 0.0)) {
                    return Err(Error::validation("state.widths", "packet widths are required and must be positive"));
                }
                spec.momenta = rows("momenta", self.reals(s, "momenta")?, 0.0)?;
                t
            }
        };
        spec.amplitudes = self.reals(s, "amplitudes")?.unwrap_or_else(|| vec![1.0; terms]);
        if spec.amplitudes.len() != terms {
            return Err(Error::validation(
                "state.amplitudes",
                format!("{} amplitudes for {terms} terms", spec.amplitudes.len()),
            ));
        }
        spec.phases = match self.get(s, "phases") {
            Some(Value::String(p)) if p == "random" => Phases::Random,
            Some(Value::String(p)) => {
                return Err(Error::validation("state.phases", format!("expected a list or \"random\", got `{p}`")))
            }
            _ => {
                let p = self.reals(s, "phases")?.unwrap_or_else(|| vec![0.0; terms]);
                if p.len() != terms {
                    return Err(Error::validation("state.phases", format!("{} phases for {terms} terms", p.len())));
                }
                Phases::Given(p)
            }
        };
        let eigenvalues = self.reals(s, "eigenvalues")?;
        spec.observable = match (self.string(s, "observable")?, eigenvalues) {
            (None | Some("energy"), None) => Observable::Energy,
            (Some("momentum"), None) => Observable::Momentum,
            (None | Some("given"), Some(w)) => {
                if w.len() != terms {
                    return Err(Error::validation(
                        "state.eigenvalues",
                        format!("{} eigenvalues for {terms} modes", w.len()),
                    ));
                }
                Observable::Given(w)
            }
            (Some("given"), None) => return Err(Error::validation("state.eigenvalues", "missing")),
            (Some(o @ ("energy" | "momentum")), Some(_)) => {
                return Err(Error::validation(
                    "state.eigenvalues",
                    format!("eigenvalues conflict with observable `{o}`"),
                ))
            }
            (Some(o), _) => return Err(Error::validation("state.observable", format!("unknown observable `{o}`"))),
        };
        if kind == StateKind::PacketModes && !matches!(spec.observable, Observable::Given(_)) {
            return Err(Error::validation("state.eigenvalues", "packet modes need explicit eigenvalues"));
        }
        if spec.observable == Observable::Momentum && (kind != StateKind::PlaneWaves || ndim != 1) {
            return Err(Error::validation(
                "state.observable",
                "momentum eigenvalues need a one-dimensional plane-wave basis",
            ));
        }
        match kind {
            StateKind::BoxModes if !grid.all(Boundary::Box) => {
                Err(Error::validation("grid.boundary", "box modes need box axes"))
            }
            StateKind::PlaneWaves if !grid.all(Boundary::Periodic) => {
                Err(Error::validation("grid.boundary", "plane waves need periodic axes"))
            }
            _ => Ok(spec),
        }
    }

    fn potential(&self, grid: &GridSpec) -> Result<PotentialSpec> {
        let kind = match self.string("potential", "kind")? {
            Some(k) => k,
            None if grid.all(Boundary::Box) => "box-wall",
            None => "free",
        };
        let params = self.reals("potential", "params")?.unwrap_or_default();
        let spec = PotentialSpec::from_params(kind, &params)
            .map_err(|e| Error::validation("potential.kind", e.to_string()))?;
        spec.validate(&grid.grid()?)
            .map_err(|e| Error::validation("potential.params", e.to_string()))?;
        Ok(spec)
    }

    fn dynamics(&self, grid: &GridSpec, state: &StateSpec) -> Result<Dynamics> {
        let s = "dynamics";
        let positive = |key: &str, v: Option<f64>, default: f64| -> Result<f64> {
            let v = v.unwrap_or(default);
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::validation(full(s, key), format!("must be positive, got {v}")))
            }
        };
        let tol = positive("tol", self.real(s, "tol")?, DEFAULT_TOL)?;
        let t_final = positive("t_final", self.real(s, "t_final")?, DEFAULT_T_FINAL)?;
        let engine = match self.string(s, "engine")? {
            None if state.kind == StateKind::Packets => EngineChoice::Packets,
            None | Some("eigenmode") => EngineChoice::Eigenmode,
            Some("packets") => EngineChoice::Packets,
            Some("splitstep") => {
                let dt = positive("dt", Some(self.required(s, "dt", self.real(s, "dt")?)?), 0.0)?;
                let steps = (t_final / dt).round();
                if (steps * dt - t_final).abs() > 1e-9 * t_final {
                    return Err(Error::validation("dynamics.dt", "t_final must be a whole number of steps"));
                }
                if !grid.all(Boundary::Periodic) {
                    return Err(Error::validation("grid.boundary", "split-step propagation needs periodic axes"));
                }
                EngineChoice::SplitStep { dt }
            }
            Some(e) => return Err(Error::validation("dynamics.engine", format!("unknown engine `{e}`"))),
        };
        match (engine, state.kind.is_modal()) {
            (EngineChoice::Eigenmode, false) => {
                return Err(Error::validation("dynamics.engine", "the eigenmode engine needs a modal state"))
            }
            (EngineChoice::Packets, true) => {
                return Err(Error::validation("dynamics.engine", "the packets engine needs a packet state"))
            }
            _ => {}
        }
        let snapshots = self.reals(s, "snapshots")?.unwrap_or_default();
        if snapshots.iter().any(|&t| !(0.0..=t_final).contains(&t)) {
            return Err(Error::validation("dynamics.snapshots", "snapshot times must lie in [0, t_final]"));
        }
        Ok(Dynamics {
            engine,
            tol,
            t_final,
            checkpoints: self.count(s, "checkpoints", DEFAULT_CHECKPOINTS)?,
            samples: self.count(s, "samples", DEFAULT_SAMPLES)?.max(2),
            snapshots,
        })
    }

    fn ensemble(&self, grid: &GridSpec) -> Result<EnsembleSpec> {
        let s = "ensemble";
        let cells = match self.ints(s, "cells")? {
            None => vec![DEFAULT_CELLS; grid.ndim()],
            Some(c) if c.iter().all(|&x| x > 0) => c.iter().map(|&x| x as usize).collect(),
            Some(_) => return Err(Error::validation("ensemble.cells", "cell counts must be positive")),
        };
        let preparation = match self.string(s, "preparation")? {
            None | Some("equilibrium") => Preparation::Equilibrium,
            Some("ground-mode") => Preparation::GroundMode,
            Some("upper-half") => Preparation::UpperHalf,
            Some("branch") => match self.int(s, "branch")? {
                Some(b) if b >= 0 => Preparation::Branch(b as usize),
                Some(b) => return Err(Error::validation("ensemble.branch", format!("negative branch {b}"))),
                None => return Err(Error::validation("ensemble.branch", "missing")),
            },
            Some(p) => return Err(Error::validation("ensemble.preparation", format!("unknown preparation `{p}`"))),
        };
        Ok(EnsembleSpec {
            n: self.count(s, "n", DEFAULT_N)?,
            cells,
            preparation,
            starts: self.count(s, "starts", DEFAULT_STARTS)?,
        })
    }

    fn coupling(&self) -> Result<CouplingParams> {
        let s = "coupling";
        let positive = |key: &str| -> Result<f64> {
            match self.real(s, key)? {
                Some(v) if v > 0.0 => Ok(v),
                Some(v) => Err(Error::validation(full(s, key), format!("must be positive, got {v}"))),
                None => Err(Error::validation(full(s, key), "missing")),
            }
        };
        let narrow = match self.string(s, "pointer")? {
            None | Some("equilibrium") => false,
            Some("narrow") => true,
            Some(p) => return Err(Error::validation("coupling.pointer", format!("unknown pointer `{p}`"))),
        };
        let width = self.real(s, "width")?;
        if width.is_some() && !narrow {
            return Err(Error::validation("coupling.width", "only a narrow pointer has a width"));
        }
        Ok(CouplingParams {
            a: positive("a")?,
            tau: positive("tau")?,
            pointer_sigma: positive("pointer_sigma")?,
            narrow,
            width,
            probes: self.count(s, "probes", DEFAULT_PROBES)?,
            repetitions: self.count(s, "repetitions", DEFAULT_REPETITIONS)?,
        })
    }
}

impl Scenario {
    /// Experiment-specific requirements.
    pub fn validate(&self) -> Result<()> {
        let ndim = self.grid.ndim();
        let kind = self.state.kind;
        let e = self.experiment;
        let need = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(key, format!("{msg} for experiment `{}`", e.name())))
            }
        };
        if self.ensemble.cells.len() != ndim && !matches!(e, Experiment::DoubleSlit) {
            return Err(Error::validation("ensemble.cells", format!("need one cell count per axis ({ndim})")));
        }
        match self.ensemble.preparation {
            Preparation::Equilibrium => {}
            Preparation::GroundMode => need(
                e == Experiment::Relax && kind == StateKind::BoxModes,
                "ensemble.preparation",
                "`ground-mode` needs a box-mode state and is only available",
            )?,
            Preparation::Branch(_) => need(
                e.is_branching(),
                "ensemble.preparation",
                "`branch` is only available",
            )?,
            Preparation::UpperHalf => need(
                e == Experiment::DoubleSlit,
                "ensemble.preparation",
                "`upper-half` is only available",
            )?,
        }
        let coupling = self.coupling.as_ref();
        match e {
            Experiment::Evolve | Experiment::Trajectories | Experiment::Relax => Ok(()),
            Experiment::BornBranches | Experiment::MomentumSplit | Experiment::KineticEnergyPointer => {
                need(ndim == 1, "grid.npoints", "a one-dimensional system is required")?;
                need(kind.is_modal(), "state.kind", "a modal state is required")?;
                need(
                    self.dynamics.engine == EngineChoice::Eigenmode,
                    "dynamics.engine",
                    "the eigenmode engine is required",
                )?;
                need(
                    coupling.is_some_and(|c| !c.narrow),
                    "coupling",
                    "an equilibrium pointer coupling is required",
                )?;
                if e == Experiment::MomentumSplit {
                    need(
                        self.state.observable == Observable::Momentum,
                        "state.observable",
                        "momentum eigenvalues are required",
                    )?;
                }
                Ok(())
            }
            Experiment::DoubleSlit => {
                need(ndim == 2 && kind == StateKind::Packets, "state.kind", "a two-dimensional packet state is required")?;
                need(
                    self.state.centres.iter().all(|c| c[0] == self.state.centres[0][0])
                        && self.state.widths.iter().all(|w| w[0] == self.state.widths[0][0])
                        && self.state.momenta.iter().all(|p| p[0] == self.state.momenta[0][0]),
                    "state.centres",
                    "all terms must share the packet along the first axis",
                )?;
                need(self.ensemble.cells.len() == 1, "ensemble.cells", "one transverse cell count is required")
            }
            Experiment::TwoPacket => need(
                ndim == 1 && kind == StateKind::Packets && self.state.terms() == 2,
                "state.kind",
                "a one-dimensional two-packet state is required",
            ),
            Experiment::SubquantumTrack => {
                need(ndim == 1, "grid.npoints", "a one-dimensional system is required")?;
                need(coupling.is_some_and(|c| c.narrow), "coupling", "a narrow pointer coupling is required")
            }
            Experiment::Occupancy => {
                need(ndim == 1 && self.state.terms() >= 2, "state.kind", "a one-dimensional two-packet state is required")?;
                need(coupling.is_some_and(|c| !c.narrow), "coupling", "an equilibrium pointer coupling is required")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"
experiment = "evolve"

[grid]
npoints = [64]
lo = [0.0]
hi = [3.0]

[state]
kind = "box-modes"
quanta = [1, 2]
"#;

    #[test]
    fn minimal_scenario_takes_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.experiment, Experiment::Evolve);
        assert_eq!(s.seed, 0);
        assert_eq!(s.dynamics.tol, DEFAULT_TOL);
        assert_eq!(s.dynamics.t_final, DEFAULT_T_FINAL);
        assert_eq!(s.dynamics.engine, EngineChoice::Eigenmode);
        assert_eq!(s.potential, PotentialSpec::BoxWall);
        assert_eq!(s.grid.boundary, vec![Boundary::Box]);
        assert_eq!(s.grid.masses, vec![1.0]);
        assert_eq!(s.state.amplitudes, vec![1.0, 1.0]);
        assert_eq!(s.state.phases, Phases::Given(vec![0.0, 0.0]));
        assert_eq!(s.ensemble.n, DEFAULT_N);
        assert_eq!(s.ensemble.cells, vec![DEFAULT_CELLS]);
        assert!(s.coupling.is_none());
    }

    #[test]
    fn misspelled_key_is_named() {
        let text = format!("{MINIMAL}\n[dynamics]\ntolerence = 1e-6\n");
        match parse_scenario(&text) {
            Err(Error::Validation { key, .. }) => assert_eq!(key, "dynamics.tolerence"),
            other => panic!("expected a validation error, got {other:?}"),
        }
        match parse_scenario(&format!("sede = 3\n{MINIMAL}")) {
            Err(Error::Validation { key, .. }) => assert_eq!(key, "sede"),
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "name = \"x\"\nexperiment = \"evolve\"\n[grid]\nnpoints = [64\n";
        match parse_scenario(text) {
            Err(Error::Parse { line, .. }) => assert!((4..=5).contains(&line), "line {line}"),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_section_and_bad_types_rejected() {
        let e = parse_scenario(&format!("{MINIMAL}\n[solver]\nx = 1\n")).unwrap_err();
        assert!(matches!(e, Error::Validation { ref key, .. } if key == "solver"), "{e}");
        let e = parse_scenario(&MINIMAL.replace("hi = [3.0]", "hi = \"three\"")).unwrap_err();
        assert!(matches!(e, Error::Validation { ref key, .. } if key == "grid.hi"), "{e}");
        let e = parse_scenario(&MINIMAL.replace("evolve", "evolution")).unwrap_err();
        assert!(matches!(e, Error::Validation { ref key, .. } if key == "experiment"), "{e}");
    }

    #[test]
    fn experiment_requirements_are_checked() {
        let text = MINIMAL.replace("\"evolve\"", "\"born-branches\"");
        let e = parse_scenario(&text).unwrap_err();
        assert!(matches!(e, Error::Validation { ref key, .. } if key == "coupling"), "{e}");
        let text = format!("{MINIMAL}\n[ensemble]\npreparation = \"branch\"\nbranch = 0\n");
        let e = parse_scenario(&text).unwrap_err();
        assert!(matches!(e, Error::Validation { ref key, .. } if key == "ensemble.preparation"), "{e}");
        let text = MINIMAL.replace("kind = \"box-modes\"", "kind = \"plane-waves\"");
        let e = parse_scenario(&text).unwrap_err();
        assert!(matches!(e, Error::Validation { ref key, .. } if key == "grid.boundary"), "{e}");
    }

    #[test]
    fn packet_rows_broadcast() {
        let text = r#"
name = "slits"
experiment = "double-slit"
[grid]
npoints = [32, 256]
lo = [-8.0, -40.0]
hi = [8.0, 40.0]
boundary = "periodic"
[state]
kind = "packets"
centres = [0.0, 2.0, 0.0, -2.0]
widths = [1.0, 0.2, 1.0, 0.2]
[ensemble]
cells = [64]
"#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.state.terms(), 2);
        assert_eq!(s.state.centres, vec![vec![0.0, 2.0], vec![0.0, -2.0]]);
        assert_eq!(s.state.momenta, vec![vec![0.0, 0.0]; 2]);
        assert_eq!(s.dynamics.engine, EngineChoice::Packets);
        assert_eq!(s.potential, PotentialSpec::Free);
        let bad = text.replace("widths = [1.0, 0.2, 1.0, 0.2]", "widths = [1.0, 0.2, 0.5, 0.2]");
        assert!(parse_scenario(&bad).is_err());
    }
}
