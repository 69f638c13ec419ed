use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::ensemble::{
    evolve_checkpoints, evolve_ensemble, h_function, marginal_cdf, member_rng, outcome_fractions, sample,
    total_variation, Cells, CoarseGrain, EnsembleState,
};
use crate::error::{Error, Result};
use crate::guidance::{integrate_at, newton_residual, uniform_times, velocity, IntegratorOptions, Trajectory};
use crate::measurement::{
    occupancy_probe, split_packets, track_trajectory, CouplingSpec, MeasurementRecord, Occupancy, QuantumMeasurement,
};
use crate::propagate::{cfl_exceeded, EvolutionHandle};
use crate::qstate::{density, synthesize, Boundary, Config, Grid, JetOrder, ModeExpansion, PacketState};
use crate::C64;

use super::build;
use super::output::{
    write_ensemble_csv, write_h_series, write_measurements, write_paths_csv, write_snapshot, write_table,
    write_trajectory_csv,
};
use super::scenario::{EngineChoice, Experiment, Preparation, Scenario};
use super::Assertion;

/// Mutable state of one run: where files go and what has been found.
pub(crate) struct Run<'a> {
    pub s: &'a Scenario,
    pub seed: u64,
    pub dir: PathBuf,
    pub quiet: bool,
    pub engine: String,
    pub outputs: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub results: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Run<'_> {
    fn file(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", self.s.name, msg.as_ref());
        }
    }

    fn result(&mut self, key: impl Into<String>, v: f64) {
        self.results.insert(key.into(), v);
    }

    fn check(&mut self, name: impl Into<String>, value: f64, relation: &'static str, limit: f64) {
        let a = Assertion::new(name, value, relation, limit);
        self.note(a.to_string());
        self.assertions.push(a);
    }

    fn snapshots(&mut self, ev: &EvolutionHandle) -> Result<()> {
        for (k, &t) in self.s.dynamics.snapshots.clone().iter().enumerate() {
            let field = ev.field_at(on_lattice(ev, t))?;
            let path = self.file(&format!("snapshot_{k:03}.pwf"));
            write_snapshot(&field, &path)?;
        }
        Ok(())
    }

    fn use_engine(&mut self, ev: &EvolutionHandle) {
        self.engine = ev.engine_name().to_string();
        if let EngineChoice::SplitStep { dt } = self.s.dynamics.engine {
            if cfl_exceeded(ev.grid(), &ev.masses(), dt) {
                self.warnings
                    .push(format!("time step {dt} exceeds the kinetic phase limit at the Nyquist wavenumber"));
            }
        }
    }
}

pub(crate) fn run(r: &mut Run) -> Result<()> {
    match r.s.experiment {
        Experiment::Evolve => evolve(r),
        Experiment::Trajectories => trajectories(r),
        Experiment::Relax => relax(r),
        Experiment::BornBranches | Experiment::MomentumSplit | Experiment::KineticEnergyPointer => branching(r),
        Experiment::DoubleSlit => double_slit(r),
        Experiment::TwoPacket => two_packet(r),
        Experiment::SubquantumTrack => subquantum_track(r),
        Experiment::Occupancy => occupancy(r),
    }
}

/// Snap `t` to the split-step lattice when there is one.
fn on_lattice(ev: &EvolutionHandle, t: f64) -> f64 {
    match ev.time_step() {
        Some(dt) => (t / dt).round() * dt,
        None => t,
    }
}

/// `count` increasing times ending at `t_final`, excluding 0.
fn checkpoint_times(ev: &EvolutionHandle, t_final: f64, count: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (1..=count)
        .map(|k| on_lattice(ev, t_final * k as f64 / count as f64))
        .collect();
    t.dedup();
    t
}

/// `samples` times from 0 to `t_final` (on the lattice for split-step).
fn sample_times(ev: &EvolutionHandle, t_final: f64, samples: usize) -> Vec<f64> {
    match ev.time_step() {
        Some(dt) => {
            let steps = (t_final / dt).round() as usize;
            let n = samples.min(steps + 1).max(2);
            (0..n).map(|i| (i * steps / (n - 1)) as f64 * dt).collect()
        }
        None => uniform_times(0.0, t_final, samples),
    }
}

/// Density renormalized to unit integral on its grid.
fn normalized(mut p: Vec<f64>, grid: &Grid) -> Result<Vec<f64>> {
    let total: f64 = p.iter().sum::<f64>() * grid.cell_volume();
    if !(total > 0.0) {
        return Err(Error::BadDensity("total mass is zero".into()));
    }
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

fn reference_density(ev: &EvolutionHandle, t: f64) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |q: &[f64]| ev.jet(q, t, JetOrder::Value).map_or(0.0, |j| j.density())
}

/// Binomial z-score of an observed fraction against probability `p`.
fn z_score(fraction: f64, p: f64, n: usize) -> f64 {
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    if sigma > 0.0 {
        (fraction - p).abs() / sigma
    } else if fraction == p {
        0.0
    } else {
        f64::INFINITY
    }
}

fn evolve(r: &mut Run) -> Result<()> {
    let s = r.s;
    let ev = build::evolution(s, r.seed)?;
    r.use_engine(&ev);
    let mut times = vec![0.0];
    times.extend(checkpoint_times(&ev, s.dynamics.t_final, s.dynamics.checkpoints));
    let rows = times
        .iter()
        .map(|&t| Ok(vec![t, ev.field_at(t)?.norm_sqr()]))
        .collect::<Result<Vec<_>>>()?;
    let path = r.file("norms.csv");
    write_table(&path, &["t", "norm"], &rows)?;
    let drift = rows.iter().map(|x| (x[1] - rows[0][1]).abs()).fold(0.0, f64::max);
    r.result("norm_drift", drift);
    if !matches!(s.dynamics.engine, EngineChoice::Packets) {
        r.check("norm-drift", drift, "<", 1e-8);
    }
    r.snapshots(&ev)
}

/// Starts at the quantiles `(i + ½)/n` of the initial density along axis 0.
fn ordered_starts(p0: &[f64], grid: &Grid, n: usize) -> Vec<Config> {
    let cdf = marginal_cdf(p0, grid, 0);
    let ax = grid.axis(0);
    (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / n as f64;
            let (mut lo, mut hi) = (ax.lo(), ax.hi());
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Config::from(0.5 * (lo + hi))
        })
        .collect()
}

/// Order violations among 1-D paths sorted by their starts. Periodic paths
/// are unwrapped and compared cyclically.
fn crossings(paths: &[Trajectory], grid: &Grid) -> usize {
    let ax = grid.axis(0);
    let unwrapped: Vec<Vec<f64>> = paths
        .iter()
        .map(|tr| {
            let mut u = vec![tr.points[0][0]];
            for w in tr.points.windows(2) {
                let last = *u.last().unwrap();
                u.push(last + ax.displacement(w[0][0], w[1][0]));
            }
            u
        })
        .collect();
    let samples = unwrapped.first().map_or(0, Vec::len);
    let mut bad = 0;
    for j in 0..samples {
        for w in unwrapped.windows(2) {
            if !(w[0][j] < w[1][j]) {
                bad += 1;
            }
        }
        if ax.boundary() == Boundary::Periodic
            && unwrapped.len() > 1
            && !(unwrapped[unwrapped.len() - 1][j] < unwrapped[0][j] + ax.length())
        {
            bad += 1;
        }
    }
    bad
}

fn trajectories(r: &mut Run) -> Result<()> {
    let s = r.s;
    let ev = build::evolution(s, r.seed)?;
    r.use_engine(&ev);
    let grid = ev.grid().clone();
    let p0 = normalized(density(&ev.field_at(0.0)?), &grid)?;
    let starts = if grid.ndim() == 1 {
        ordered_starts(&p0, &grid, s.ensemble.starts)
    } else {
        sample(&p0, &grid, s.ensemble.starts, r.seed)?.points
    };
    let times = sample_times(&ev, s.dynamics.t_final, s.dynamics.samples);
    let opts = IntegratorOptions::new(s.dynamics.tol);
    r.note(format!("integrating {} trajectories", starts.len()));
    let paths = starts
        .par_iter()
        .map(|q| integrate_at(&ev, q, &times, &opts))
        .collect::<Result<Vec<_>>>()?;
    let flagged = paths.iter().filter(|p| p.flagged()).count();
    r.result("trajectories", paths.len() as f64);
    r.result("flagged", flagged as f64);
    let path = r.file("trajectory.csv");
    write_trajectory_csv(&path, &paths[0])?;
    let path = r.file("trajectories.csv");
    write_paths_csv(&path, &paths)?;
    if grid.ndim() == 1 {
        let bad = crossings(&paths, &grid);
        r.check("non-crossing", bad as f64, "==", 0.0);
    }
    if ev.is_standard() {
        let mid = &paths[paths.len() / 2];
        let res = newton_residual(mid, &ev, &s.potential)?;
        r.result("newton_excluded", res.excluded as f64);
        r.check("newton-residual", res.max_relative(), "<", 1e-3);
    }
    r.snapshots(&ev)
}

fn relax(r: &mut Run) -> Result<()> {
    let s = r.s;
    let ev = build::evolution(s, r.seed)?;
    r.use_engine(&ev);
    let grid = ev.grid().clone();
    let p0 = match s.ensemble.preparation {
        Preparation::GroundMode => {
            let ground = ModeExpansion::box_sine(
                grid.clone(),
                s.grid.masses.clone(),
                vec![vec![1; grid.ndim()]],
                vec![C64::new(1.0, 0.0)],
            )?;
            density(&synthesize(&ground, 0.0)?)
        }
        _ => density(&ev.field_at(0.0)?),
    };
    let ens0 = sample(&normalized(p0, &grid)?, &grid, s.ensemble.n, r.seed)?;
    let times = checkpoint_times(&ev, s.dynamics.t_final, s.dynamics.checkpoints);
    r.note(format!("evolving {} members through {} checkpoints", ens0.len(), times.len()));
    let snaps = evolve_checkpoints(&ens0, &ev, &times, s.dynamics.tol)?;
    let cells = Cells::uniform(&grid, &s.ensemble.cells)?;
    let mut rows = Vec::new();
    let mut tv_max: f64 = 0.0;
    for st in std::iter::once(&ens0).chain(&snaps) {
        let cg = CoarseGrain::new(&cells, st, reference_density(&ev, st.time))?;
        let h = h_function(&cg)?;
        tv_max = tv_max.max(total_variation(&cg));
        r.note(format!("t = {:.4}: H = {h:.5}", st.time));
        rows.push((st.time, h, cg.n_effective));
    }
    let path = r.file("h_series.csv");
    write_h_series(&path, &rows)?;
    let last = snaps.last().unwrap();
    let path = r.file("ensemble_initial.csv");
    write_ensemble_csv(&path, &[&ens0], false)?;
    let path = r.file("ensemble_final.csv");
    write_ensemble_csv(&path, &[last], false)?;
    let h0 = rows[0].1;
    let hf = rows.last().unwrap().1;
    r.result("H_initial", h0);
    r.result("H_final", hf);
    r.result("tv_max", tv_max);
    r.result("stuck", last.flags.iter().filter(|f| f.stuck).count() as f64);
    if s.ensemble.preparation == Preparation::Equilibrium {
        r.check("equivariance-tv", tv_max, "<", 0.05);
    } else {
        // Largest rise above the running minimum, relative to H(0).
        let mut low = f64::INFINITY;
        let mut rise: f64 = 0.0;
        for &(_, h, _) in &rows {
            rise = rise.max(h - low);
            low = low.min(h);
        }
        r.check("h-trend", rise / h0, "<=", 0.1);
        r.check("h-halved", hf / h0, "<=", 0.5);
    }
    r.snapshots(&ev)
}

/// `|φ_b(x)|² g(y)`: branch `b` of the system times the pointer density.
fn branch_density(qm: &QuantumMeasurement, b: usize, grid: &Grid, joint: &[f64]) -> Result<Vec<f64>> {
    let modes = &qm.branches()[b].modes;
    let rho = density(&synthesize(&qm.system().restrict(modes)?, 0.0)?);
    let (nx, ny) = (grid.axis(0).npoints(), grid.axis(1).npoints());
    let dx = grid.axis(0).spacing();
    let g: Vec<f64> = (0..ny).map(|j| (0..nx).map(|i| joint[i * ny + j]).sum::<f64>() * dx).collect();
    Ok((0..nx * ny).map(|f| rho[f / ny] * g[f % ny]).collect())
}

fn branching(r: &mut Run) -> Result<()> {
    let s = r.s;
    let c = s.coupling.expect("validated");
    let system = build::modes(s, r.seed)?;
    let spec = CouplingSpec::equilibrium(c.a, c.tau, c.pointer_sigma)?;
    let qm = QuantumMeasurement::new(system.clone(), spec)?;
    r.engine = qm.evolution().engine_name().to_string();
    let branches = qm.branches().to_vec();
    let (grid, joint) = qm.joint_density()?;
    let p0 = match s.ensemble.preparation {
        Preparation::Branch(b) if b >= branches.len() => {
            return Err(Error::validation(
                "ensemble.branch",
                format!("branch {b} does not exist ({} branches)", branches.len()),
            ))
        }
        Preparation::Branch(b) => branch_density(&qm, b, &grid, &joint)?,
        _ => joint,
    };
    let ens = sample(&normalized(p0, &grid)?, &grid, s.ensemble.n, r.seed)?;
    r.note(format!("{} runs over {} branches", ens.len(), branches.len()));
    let fin = evolve_ensemble(&ens, qm.evolution(), c.tau, qm.tol)?;
    let fr = outcome_fractions(&fin, &qm.windows())?;
    let records: Vec<MeasurementRecord> = ens
        .points
        .iter()
        .zip(&fin.points)
        .map(|(q0, q)| {
            let outcome = qm.classify(q[1]);
            let (inferred, disturbance) = match outcome {
                Some(b) => (branches[b].value, (1.0 - branches[b].weight).clamp(0.0, 1.0)),
                None => (q[1] / spec.a_tau(), 1.0),
            };
            MeasurementRecord {
                outcome_index: outcome,
                pointer_start: q0[1],
                pointer_reading: q[1],
                inferred_value: inferred,
                wave_disturbance: disturbance,
                trajectory_estimate: None,
                final_config: *q,
                flags: Default::default(),
            }
        })
        .collect();
    let path = r.file("measurements.csv");
    write_measurements(&path, &records, false)?;
    let path = r.file("ensemble_initial.csv");
    write_ensemble_csv(&path, &[&ens], true)?;
    let path = r.file("ensemble_final.csv");
    write_ensemble_csv(&path, &[&fin], true)?;
    for (k, b) in branches.iter().enumerate() {
        r.result(format!("fraction_{k}"), fr.fractions[k]);
        r.result(format!("weight_{k}"), b.weight);
        r.result(format!("value_{k}"), b.value);
    }
    r.result("unassigned", fr.unassigned_fraction());
    let n = fr.total;
    match s.ensemble.preparation {
        Preparation::Branch(b) => {
            r.check("branch-fraction", fr.fractions[b], ">=", 0.99);
            r.check("born-violation-z", z_score(fr.fractions[b], branches[b].weight, n), ">", 3.0);
        }
        _ if branches.len() > 1 => {
            for (k, b) in branches.iter().enumerate() {
                r.check(format!("born-fraction-{k}-z"), z_score(fr.fractions[k], b.weight, n), "<=", 3.0);
            }
        }
        _ => {}
    }
    match s.experiment {
        Experiment::KineticEnergyPointer => kinetic_checks(r, &qm, &ens, &fin)?,
        Experiment::MomentumSplit => slope_checks(r, &qm, &fin)?,
        _ => {}
    }
    r.snapshots(&EvolutionHandle::eigenmode(system))
}

fn kinetic_checks(r: &mut Run, qm: &QuantumMeasurement, ens: &EnsembleState, fin: &EnsembleState) -> Result<()> {
    let at = qm.coupling().a_tau();
    let ax = *qm.evolution().grid().axis(0);
    let mut pointer_err: f64 = 0.0;
    let mut particle: f64 = 0.0;
    let mut shift_sum = 0.0;
    let mut counted = 0;
    for (q0, q) in ens.points.iter().zip(&fin.points) {
        particle = particle.max(ax.displacement(q0[0], q[0]).abs());
        let Some(b) = qm.classify(q[1]) else {
            pointer_err = f64::INFINITY;
            continue;
        };
        let expect = at * qm.branches()[b].value;
        let shift = q[1] - q0[1];
        pointer_err = pointer_err.max(((shift - expect) / expect).abs());
        shift_sum += shift;
        counted += 1;
    }
    r.result("pointer_shift_mean", shift_sum / counted.max(1) as f64);
    r.result("expected_shift", at * qm.branches()[0].value);
    r.check("pointer-displacement", pointer_err, "<=", 0.01);
    r.check("particle-displacement", particle, "<", 1e-6);

    // The particle itself never moves: sample the free velocity field.
    let system = EvolutionHandle::eigenmode(qm.system().clone());
    let s = r.s;
    let (lo, len) = (ax.lo(), ax.length());
    let mut vmax: f64 = 0.0;
    let mut sampled = 0;
    for &t in &uniform_times(0.0, s.dynamics.t_final, 11) {
        for i in 0..1000 {
            let x = lo + (i as f64 + 0.5) * len / 1000.0;
            match velocity(&system, &[x], t) {
                Ok(v) => {
                    vmax = vmax.max(v[0].abs());
                    sampled += 1;
                }
                Err(Error::NodeProximity { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let m = system.masses()[0];
    r.result("rest_samples", sampled as f64);
    r.result("max_kinetic_energy", 0.5 * m * vmax * vmax);
    r.check("rest-velocity", vmax, "<", 1e-8);
    Ok(())
}

/// Integrate past the end of the coupling and compare the particle's slope
/// with `p/m` of the branch its pointer landed in.
fn slope_checks(r: &mut Run, qm: &QuantumMeasurement, fin: &EnsembleState) -> Result<()> {
    let tau = qm.coupling().tau;
    let span = r.s.dynamics.t_final;
    let m = qm.system().masses()[0];
    let ax = *qm.evolution().grid().axis(0);
    let opts = IntegratorOptions::new(qm.tol);
    let picked: Vec<(Config, usize)> = fin
        .points
        .iter()
        .filter_map(|q| qm.classify(q[1]).map(|b| (*q, b)))
        .take(200)
        .collect();
    let errs = picked
        .par_iter()
        .map(|(q, b)| {
            let tr = integrate_at(qm.evolution(), q, &[tau, tau + span], &opts)?;
            let slope = ax.displacement(q[0], tr.last()[0]) / span;
            let expect = qm.branches()[*b].value / m;
            Ok(((slope - expect) / expect).abs() + if slope * expect > 0.0 { 0.0 } else { f64::INFINITY })
        })
        .collect::<Result<Vec<f64>>>()?;
    r.result("slope_runs", errs.len() as f64);
    r.check("post-slope", errs.iter().cloned().fold(0.0, f64::max), "<=", 1e-3);
    Ok(())
}

fn double_slit(r: &mut Run) -> Result<()> {
    let s = r.s;
    let st = build::packet_state(s, r.seed)?;
    let grid = s.grid.grid()?;
    let ev = EvolutionHandle::packets(st.clone(), grid.clone())?;
    r.use_engine(&ev);
    let transverse = PacketState::new(st.weights.clone(), st.packets.iter().map(|row| vec![row[1]]).collect())?;
    let t_final = s.dynamics.t_final;
    let p0 = normalized(density(&st.tabulate(&grid, 0.0)?), &grid)?;

    // Members started above the symmetry axis must stay there.
    let upper: Vec<f64> = (0..grid.len())
        .map(|f| if grid.point(f)[1] > 0.0 { p0[f] } else { 0.0 })
        .collect();
    let starts = sample(&normalized(upper, &grid)?, &grid, s.ensemble.starts, r.seed.wrapping_add(1))?;
    let times = uniform_times(0.0, t_final, s.dynamics.samples);
    let opts = IntegratorOptions::new(s.dynamics.tol);
    r.note(format!("integrating {} upper-slit trajectories", starts.len()));
    let paths = starts
        .points
        .par_iter()
        .map(|q| integrate_at(&ev, q, &times, &opts))
        .collect::<Result<Vec<_>>>()?;
    let crossed = paths.iter().filter(|p| p.points.iter().any(|q| !(q[1] > 0.0))).count();
    let path = r.file("trajectories.csv");
    write_paths_csv(&path, &paths)?;
    r.check("upper-half", crossed as f64, "==", 0.0);

    // Far-field histogram of an equilibrium ensemble against |ψ(y, T)|².
    let ens = sample(&p0, &grid, s.ensemble.n, r.seed)?;
    r.note(format!("evolving {} members to t = {t_final}", ens.len()));
    let fin = evolve_ensemble(&ens, &ev, t_final, s.dynamics.tol)?;
    let ay = grid.axis(1);
    let cells = Cells::new(vec![ay.lo()], vec![ay.hi()], vec![s.ensemble.cells[0]])?;
    let mut counts = vec![0usize; cells.len()];
    for q in fin.active() {
        if let Some(c) = cells.index(&[q[1]]) {
            counts[c] += 1;
        }
    }
    let inside: usize = counts.iter().sum();
    let w = cells.width(0);
    let p_bar: Vec<f64> = counts.iter().map(|&c| c as f64 / (inside as f64 * w)).collect();
    let d_bar = cells.average(|q| transverse.jet(q, t_final, JetOrder::Value).density());
    let cg = CoarseGrain::from_densities(cells.clone(), p_bar, d_bar)?;
    let tv = total_variation(&cg);
    let fringes = (1..cg.d_bar.len() - 1)
        .filter(|&i| cg.d_bar[i] > cg.d_bar[i - 1] && cg.d_bar[i] >= cg.d_bar[i + 1])
        .count();
    let rows: Vec<Vec<f64>> = (0..cells.len())
        .map(|i| vec![cells.corner(i)[0] + 0.5 * w, cg.p_bar[i], cg.d_bar[i]])
        .collect();
    let path = r.file("profile.csv");
    write_table(&path, &["y", "p_bar", "d_bar"], &rows)?;
    let path = r.file("ensemble_final.csv");
    write_ensemble_csv(&path, &[&fin], false)?;
    r.result("outside_window", 1.0 - inside as f64 / fin.len() as f64);
    r.result("fringe_maxima", fringes as f64);
    r.check("far-field-tv", tv, "<", 0.08);
    r.snapshots(&ev)
}

fn two_packet(r: &mut Run) -> Result<()> {
    let s = r.s;
    let ev = build::evolution(s, r.seed)?;
    r.use_engine(&ev);
    let grid = ev.grid().clone();
    let st = build::packet_state(s, r.seed)?;
    let m = s.grid.masses[0];
    // The lobes are split halfway between the packet centres.
    let split = |t: f64| {
        let c: Vec<f64> = st.packets.iter().map(|p| p[0].center + p[0].momentum * t / m).collect();
        0.5 * (c[0] + c[1])
    };
    let right = if st.packets[1][0].center > st.packets[0][0].center { 1 } else { 0 };
    let weight_right = st.weights[right].norm_sqr();
    let ens = sample(&normalized(density(&ev.field_at(0.0)?), &grid)?, &grid, s.ensemble.n, r.seed)?;
    let times = checkpoint_times(&ev, s.dynamics.t_final, s.dynamics.checkpoints);
    r.note(format!("evolving {} members through {} checkpoints", ens.len(), times.len()));
    let snaps = evolve_checkpoints(&ens, &ev, &times, s.dynamics.tol)?;
    let side0: Vec<bool> = ens.points.iter().map(|q| q[0] > split(0.0)).collect();
    let mut switched = 0;
    for snap in &snaps {
        let cut = split(snap.time);
        switched += snap.points.iter().zip(&side0).filter(|(q, &s0)| (q[0] > cut) != s0).count();
    }
    let f_right = side0.iter().filter(|&&b| b).count() as f64 / ens.len() as f64;
    let last = snaps.last().unwrap();
    let path = r.file("ensemble_initial.csv");
    write_ensemble_csv(&path, &[&ens], false)?;
    let path = r.file("ensemble_final.csv");
    write_ensemble_csv(&path, &[last], false)?;
    r.result("fraction_right", f_right);
    r.result("weight_right", weight_right);
    r.check("lobe-fraction-z", z_score(f_right, weight_right, ens.len()), "<=", 3.0);
    r.check("lobe-switches", switched as f64, "==", 0.0);
    r.snapshots(&ev)
}

fn subquantum_track(r: &mut Run) -> Result<()> {
    let s = r.s;
    let c = s.coupling.expect("validated");
    let ev = build::evolution(s, r.seed)?;
    r.use_engine(&ev);
    let grid = ev.grid().clone();
    let dx = grid.axis(0).spacing();
    let width = c.width.unwrap_or(c.a * c.tau * dx);
    let spec = CouplingSpec::narrow(c.a, c.tau, c.pointer_sigma, Some(width))?;
    let q0 = sample(&normalized(density(&ev.field_at(0.0)?), &grid)?, &grid, 1, r.seed)?.points[0][0];
    let probes: Vec<f64> = uniform_times(0.0, s.dynamics.t_final, c.probes.max(2))
        .iter()
        .map(|&t| on_lattice(&ev, t))
        .collect();
    let probes = if c.probes == 1 { vec![0.0] } else { probes };
    r.note(format!("tracking with {} probes", probes.len()));
    let tracked = track_trajectory(&ev, q0, &probes, &spec, r.seed)?;
    let path = r.file("measurements.csv");
    write_measurements(&path, &tracked.records, true)?;
    let reference = integrate_at(
        &ev,
        &Config::from(q0),
        &sample_times(&ev, s.dynamics.t_final, s.dynamics.samples),
        &IntegratorOptions::new(s.dynamics.tol),
    )?;
    let path = r.file("trajectory.csv");
    write_trajectory_csv(&path, &reference)?;
    let fidelity = tracked
        .records
        .iter()
        .map(|rec| 1.0 - rec.wave_disturbance)
        .fold(1.0, f64::min);
    r.result("dx", dx);
    r.result("pointer_width", width);
    r.check("estimate-error", tracked.max_error() / dx, "<=", 2.0);
    r.check("wave-fidelity", fidelity, ">=", 0.999);
    r.check("tracking-rms", tracked.rms_error() / dx, "<", 5.0);
    r.snapshots(&ev)
}

fn occupancy(r: &mut Run) -> Result<()> {
    let s = r.s;
    let c = s.coupling.expect("validated");
    let ev = build::evolution(s, r.seed)?;
    r.use_engine(&ev);
    let grid = ev.grid().clone();
    let t = on_lattice(&ev, s.dynamics.t_final);
    let field = ev.field_at(t)?;
    let packets = split_packets(&field)?;
    let spec = CouplingSpec::equilibrium(c.a, c.tau, c.pointer_sigma)?;
    let reps = c.repetitions;
    let actual = sample(&normalized(density(&field), &grid)?, &grid, reps, r.seed)?;
    let home = |x: f64| {
        let d = |k: usize| grid.axis(0).displacement(packets[k].centre, x).abs();
        usize::from(d(1) < d(0))
    };
    r.note(format!("{reps} repetitions of the occupied and empty probes"));
    let pairs = (0..reps)
        .into_par_iter()
        .map(|i| {
            let x = actual.points[i][0];
            let k = home(x);
            let y_full = spec.draw_pointer(&mut member_rng(r.seed, reps + 2 * i));
            let y_empty = spec.draw_pointer(&mut member_rng(r.seed, reps + 2 * i + 1));
            let full = occupancy_probe(&field, k, x, &spec, y_full)?;
            let empty = occupancy_probe(&field, 1 - k, x, &spec, y_empty)?;
            Ok((k, full, empty))
        })
        .collect::<Result<Vec<_>>>()?;
    let occupied_ok = pairs.iter().filter(|p| p.1 .0 == Occupancy::Occupied).count();
    let empty_ok = pairs.iter().filter(|p| p.2 .0 == Occupancy::Unoccupied).count();
    let in_right = pairs.iter().filter(|p| p.0 == 1).count();
    let records: Vec<MeasurementRecord> = pairs.iter().flat_map(|p| [p.1 .1.clone(), p.2 .1.clone()]).collect();
    let path = r.file("measurements.csv");
    write_measurements(&path, &records, false)?;

    // Same inputs, same verdict and reading.
    let x = actual.points[0][0];
    let y = spec.draw_pointer(&mut member_rng(r.seed, reps));
    let again = occupancy_probe(&field, home(x), x, &spec, y)?;
    let repeatable = again.0 == pairs[0].1 .0 && again.1.pointer_reading.to_bits() == pairs[0].1 .1.pointer_reading.to_bits();

    r.result("actual_in_right_packet", in_right as f64);
    r.check("occupied-agreement", occupied_ok as f64 / reps as f64, ">=", 1.0);
    r.check("empty-agreement", empty_ok as f64 / reps as f64, ">=", 1.0);
    r.check("repeatable", f64::from(u8::from(!repeatable)), "==", 0.0);
    r.snapshots(&ev)
}
