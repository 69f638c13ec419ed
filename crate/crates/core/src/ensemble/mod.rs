//! Ensembles of configurations: sampling from gridded densities, evolution
//! under the guidance flow, coarse-grained statistics, outcome fractions and
//! the pure-state Wigner transform.

mod coarse;
mod wigner;

pub use coarse::{gauss_legendre, h_function, total_variation, Cells, CoarseGrain};
pub use wigner::{momentum_density, wigner, WignerMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::guidance::{integrate_at, IntegratorOptions, SampleFlags};
use crate::propagate::EvolutionHandle;
use crate::qstate::{Boundary, Config, Grid};

/// Diagnostic state of one ensemble member.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MemberFlags {
    pub node_grazed: bool,
    pub step_clamped: bool,
    /// The integrator gave up at a node; the member keeps its last position
    /// and is excluded from statistics.
    pub stuck: bool,
}

impl MemberFlags {
    pub fn is_clear(&self) -> bool {
        !(self.node_grazed || self.step_clamped || self.stuck)
    }

    pub fn label(&self) -> String {
        let parts: Vec<&str> = [
            (self.node_grazed, "node-grazed"),
            (self.step_clamped, "step-clamped"),
            (self.stuck, "stuck"),
        ]
        .iter()
        .filter(|p| p.0)
        .map(|p| p.1)
        .collect();
        if parts.is_empty() {
            "ok".into()
        } else {
            parts.join("+")
        }
    }

    fn absorb(&mut self, f: SampleFlags) {
        self.node_grazed |= f.node_grazed;
        self.step_clamped |= f.step_clamped;
    }
}

/// An empirical measure over configuration space.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    pub points: Vec<Config>,
    pub flags: Vec<MemberFlags>,
    pub time: f64,
    pub seed: u64,
    /// How the members were drawn.
    pub provenance: String,
}

impl EnsembleState {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Members that count towards statistics.
    pub fn active(&self) -> impl Iterator<Item = &Config> + '_ {
        self.points.iter().zip(&self.flags).filter(|(_, f)| !f.stuck).map(|(p, _)| p)
    }

    pub fn n_effective(&self) -> usize {
        self.flags.iter().filter(|f| !f.stuck).count()
    }

    /// Coordinate `axis` of every active member.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        self.active().map(|p| p[axis]).collect()
    }
}

/// Random stream for member `index` of an ensemble seeded with `seed`.
pub fn member_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_density(density: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    if density.len() != grid.len() {
        return Err(Error::BadDensity(format!(
            "{} values for {} grid points",
            density.len(),
            grid.len()
        )));
    }
    if let Some(j) = density.iter().position(|&d| !(d >= 0.0) || !d.is_finite()) {
        return Err(Error::BadDensity(format!("value {} at grid point {j}", density[j])));
    }
    let dv = grid.cell_volume();
    let mut cdf = Vec::with_capacity(density.len());
    let mut acc = 0.0;
    for &d in density {
        acc += d * dv;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::BadDensity("total mass is zero".into()));
    }
    if (acc - 1.0).abs() > 1e-6 {
        return Err(Error::BadDensity(format!("integrates to {acc}, not 1")));
    }
    Ok(cdf)
}

/// Draw `n` members from a gridded density by inverse CDF over the flattened
/// cells, then uniformly within the chosen cell. Member `i` uses its own
/// counter-based stream, so the result does not depend on scheduling.
pub fn sample(density: &[f64], grid: &Grid, n: usize, seed: u64) -> Result<EnsembleState> {
    let cdf = check_density(density, grid)?;
    let total = *cdf.last().unwrap();
    let points = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(seed, i);
            let u: f64 = rng.random::<f64>() * total;
            let flat = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let idx = grid.unravel(flat);
            let mut q = Config::zeros(grid.ndim());
            for (k, ax) in grid.axes().iter().enumerate() {
                let x = ax.cell_lo(idx[k]) + rng.random::<f64>() * ax.spacing();
                q[k] = match ax.boundary() {
                    Boundary::Periodic => ax.wrap(x),
                    Boundary::Box => x.clamp(ax.lo(), ax.hi()),
                };
            }
            q
        })
        .collect();
    Ok(EnsembleState {
        points,
        flags: vec![MemberFlags::default(); n],
        time: 0.0,
        seed,
        provenance: format!("inverse-cdf over {} cells, uniform jitter", grid.len()),
    })
}

/// Advance every member to `t1` along the guidance flow.
pub fn evolve_ensemble(ens: &EnsembleState, ev: &EvolutionHandle, t1: f64, tol: f64) -> Result<EnsembleState> {
    Ok(evolve_checkpoints(ens, ev, &[t1], tol)?.pop().unwrap())
}

/// Step budget of one member integration. A member that needs more is orbiting
/// a moving node so tightly that following it costs more than the rest of the
/// ensemble; it is treated like a member stuck at the node.
pub const MEMBER_STEP_BUDGET: usize = 20_000;

/// Advance every member through `times` (increasing, after `ens.time`),
/// returning the ensemble at each checkpoint. Members keep their order; a
/// member that gets stuck at a node is retained at its last checkpoint and
/// flagged.
pub fn evolve_checkpoints(
    ens: &EnsembleState,
    ev: &EvolutionHandle,
    times: &[f64],
    tol: f64,
) -> Result<Vec<EnsembleState>> {
    let mut schedule = vec![ens.time];
    schedule.extend_from_slice(times);
    if times.is_empty() || schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTrajectory("checkpoint times must increase from the ensemble time".into()));
    }
    let opts = IntegratorOptions {
        max_steps: MEMBER_STEP_BUDGET,
        ..IntegratorOptions::new(tol)
    };
    let members: Vec<Result<(Vec<Config>, Vec<MemberFlags>)>> = ens
        .points
        .par_iter()
        .zip(&ens.flags)
        .map(|(q0, f0)| {
            if f0.stuck {
                return Ok((vec![*q0; times.len()], vec![*f0; times.len()]));
            }
            match integrate_at(ev, q0, &schedule, &opts) {
                Ok(tr) => {
                    let mut f = *f0;
                    let mut flags = Vec::with_capacity(times.len());
                    for s in &tr.flags[1..] {
                        f.absorb(*s);
                        flags.push(f);
                    }
                    Ok((tr.points[1..].to_vec(), flags))
                }
                Err(Error::StuckAtNode { .. } | Error::StepBudget { .. }) => {
                    // Redo checkpoint by checkpoint to keep the last position reached.
                    let (mut q, mut f) = (*q0, *f0);
                    let mut pts = Vec::with_capacity(times.len());
                    let mut flags = Vec::with_capacity(times.len());
                    for w in schedule.windows(2) {
                        if !f.stuck {
                            match integrate_at(ev, &q, w, &opts) {
                                Ok(tr) => {
                                    q = tr.points[1];
                                    f.absorb(tr.flags[1]);
                                }
                                Err(Error::StuckAtNode { .. } | Error::StepBudget { .. }) => f.stuck = true,
                                Err(e) => return Err(e),
                            }
                        }
                        pts.push(q);
                        flags.push(f);
                    }
                    Ok((pts, flags))
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut out: Vec<EnsembleState> = times
        .iter()
        .map(|&t| EnsembleState {
            points: Vec::with_capacity(ens.len()),
            flags: Vec::with_capacity(ens.len()),
            time: t,
            seed: ens.seed,
            provenance: ens.provenance.clone(),
        })
        .collect();
    for m in members {
        let (pts, flags) = m?;
        for (k, s) in out.iter_mut().enumerate() {
            s.points.push(pts[k]);
            s.flags.push(flags[k]);
        }
    }
    Ok(out)
}

/// Fractions of members per branch window of the pointer (last) coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeFractions {
    pub fractions: Vec<f64>,
    pub counts: Vec<usize>,
    /// Active members outside every window.
    pub unassigned: usize,
    /// Active members counted (stuck members are excluded).
    pub total: usize,
}

impl OutcomeFractions {
    pub fn unassigned_fraction(&self) -> f64 {
        self.unassigned as f64 / self.total.max(1) as f64
    }
}

/// Assign each active member to the branch window containing its pointer
/// coordinate. Members outside all windows are reported, never redistributed.
pub fn outcome_fractions(joint: &EnsembleState, windows: &[(f64, f64)]) -> Result<OutcomeFractions> {
    for (i, a) in windows.iter().enumerate() {
        if !(a.1 > a.0) {
            return Err(Error::InvalidCoupling(format!("branch window {i} is empty")));
        }
        for (j, b) in windows.iter().enumerate().skip(i + 1) {
            if a.0 < b.1 && b.0 < a.1 {
                return Err(Error::OverlapError(i, j));
            }
        }
    }
    let mut counts = vec![0usize; windows.len()];
    let mut unassigned = 0;
    let mut total = 0;
    for q in joint.active() {
        total += 1;
        let y = q[q.dim() - 1];
        match windows.iter().position(|w| y >= w.0 && y < w.1) {
            Some(k) => counts[k] += 1,
            None => unassigned += 1,
        }
    }
    let fractions = counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect();
    Ok(OutcomeFractions {
        fractions,
        counts,
        unassigned,
        total,
    })
}

/// CDF of the marginal along `axis` of a gridded density, linear within cells
/// (the law of [`sample`]'s jittered draws).
pub fn marginal_cdf(density: &[f64], grid: &Grid, axis: usize) -> impl Fn(f64) -> f64 {
    let ax = *grid.axis(axis);
    let n = ax.npoints();
    let mut mass = vec![0.0; n];
    for (flat, &d) in density.iter().enumerate() {
        mass[grid.unravel(flat)[axis]] += d * grid.cell_volume();
    }
    let total: f64 = mass.iter().sum();
    let mut cum = vec![0.0; n + 1];
    for j in 0..n {
        cum[j + 1] = cum[j] + mass[j] / total;
    }
    let start = ax.cell_lo(0);
    let g = move |x: f64| {
        let u = ((x - start) / ax.spacing()).clamp(0.0, n as f64);
        let j = (u.floor() as usize).min(n - 1);
        cum[j] + (u - j as f64) * (cum[j + 1] - cum[j])
    };
    let (lo, len, periodic) = (grid.axis(axis).lo(), grid.axis(axis).length(), grid.axis(axis).boundary() == Boundary::Periodic);
    move |x: f64| {
        if !periodic {
            return g(x);
        }
        // Cell 0 straddles `lo`; its upper half sits below `lo`, its lower
        // half wraps to just under `hi`.
        let base = g(lo);
        if x >= start + len {
            1.0 - base + g(x - len)
        } else {
            g(x) - base
        }
    }
}

/// Kolmogorov–Smirnov distance between samples and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{density, normalize_coefficients, Axis, GaussianPacket, ModeExpansion, PacketState};
    use crate::C64;
    use std::f64::consts::PI;

    fn gaussian_pair(grid: &Grid, which: Option<usize>) -> Vec<f64> {
        let packets = [GaussianPacket::new(-4.0, 0.0, 0.5, 1.0), GaussianPacket::new(4.0, 0.0, 0.5, 1.0)];
        let (w, p): (Vec<C64>, Vec<Vec<GaussianPacket>>) = match which {
            Some(k) => (vec![C64::new(1.0, 0.0)], vec![vec![packets[k]]]),
            None => (
                vec![C64::new(1.0, 0.0); 2],
                packets.iter().map(|p| vec![*p]).collect(),
            ),
        };
        let st = PacketState::new(w, p).unwrap();
        density(&st.tabulate(grid, 0.0).unwrap())
    }

    #[test]
    fn uniform_density_cell_counts() {
        let grid = Grid::line(Axis::walled(16, 0.0, 2.0).unwrap());
        let rho = vec![0.5; 16];
        let n = 100_000;
        let ens = sample(&rho, &grid, n, 3).unwrap();
        let mut counts = [0usize; 16];
        for p in &ens.points {
            counts[grid.locate(p).unwrap()] += 1;
        }
        let mean = n as f64 / 16.0;
        for c in counts {
            assert!((c as f64 - mean).abs() < 4.0 * mean.sqrt(), "{c}");
        }
    }

    #[test]
    fn two_lobes_and_single_branch() {
        let grid = Grid::line(Axis::periodic(256, -10.0, 10.0).unwrap());
        let n = 10_000;
        let ens = sample(&gaussian_pair(&grid, None), &grid, n, 11).unwrap();
        let right = ens.points.iter().filter(|p| p[0] > 0.0).count() as f64 / n as f64;
        assert!((right - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
        let one = sample(&gaussian_pair(&grid, Some(0)), &grid, n, 11).unwrap();
        assert!(one.points.iter().all(|p| p[0] < 0.0));
    }

    #[test]
    fn ks_bound_on_marginals() {
        let grid = Grid::new(vec![Axis::walled(32, 0.0, PI).unwrap(), Axis::periodic(32, -PI, PI).unwrap()]).unwrap();
        let rho: Vec<f64> = (0..grid.len())
            .map(|f| {
                let q = grid.point(f);
                q[0].sin().powi(2) * (1.0 + 0.5 * q[1].cos()) * (2.0 / PI) / (2.0 * PI)
            })
            .collect();
        let n = 20_000;
        let ens = sample(&rho, &grid, n, 5).unwrap();
        for axis in 0..2 {
            let d = ks_distance(&ens.marginal(axis), marginal_cdf(&rho, &grid, axis));
            assert!(d <= 1.63 / (n as f64).sqrt(), "axis {axis}: {d}");
        }
    }

    #[test]
    fn sampling_is_reproducible_and_validated() {
        let grid = Grid::line(Axis::walled(32, 0.0, 1.0).unwrap());
        let rho = vec![1.0; 32];
        assert_eq!(sample(&rho, &grid, 100, 9).unwrap(), sample(&rho, &grid, 100, 9).unwrap());
        assert_ne!(sample(&rho, &grid, 100, 9).unwrap().points, sample(&rho, &grid, 100, 10).unwrap().points);
        let mut bad = rho.clone();
        bad[3] = -0.1;
        assert!(matches!(sample(&bad, &grid, 10, 0), Err(Error::BadDensity(_))));
        assert!(matches!(sample(&[0.0; 32], &grid, 10, 0), Err(Error::BadDensity(_))));
    }

    #[test]
    fn stationary_ensemble_is_unmoved() {
        let grid = Grid::line(Axis::walled(64, 0.0, PI).unwrap());
        let m = ModeExpansion::box_sine(grid.clone(), vec![1.0], vec![vec![2]], vec![C64::new(1.0, 0.0)]).unwrap();
        let ev = EvolutionHandle::eigenmode(m.clone());
        let rho = density(&crate::qstate::synthesize(&m, 0.0).unwrap());
        let ens = sample(&rho, &grid, 200, 1).unwrap();
        let later = evolve_ensemble(&ens, &ev, 3.0, 1e-8).unwrap();
        assert_eq!(later.time, 3.0);
        for (a, b) in ens.points.iter().zip(&later.points) {
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn equivariance_and_nonequilibrium_distance() {
        let grid = Grid::line(Axis::walled(64, 0.0, PI).unwrap());
        let c = normalize_coefficients(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let m = ModeExpansion::box_sine(grid.clone(), vec![1.0], vec![vec![1], vec![2]], c).unwrap();
        let ev = EvolutionHandle::eigenmode(m.clone());
        let rho = density(&crate::qstate::synthesize(&m, 0.0).unwrap());
        let n = 5_000;
        let ens = sample(&rho, &grid, n, 21).unwrap();
        let cells = Cells::uniform(&grid, &[16]).unwrap();
        let snaps = evolve_checkpoints(&ens, &ev, &[0.7, 1.9], 1e-7).unwrap();
        for s in &snaps {
            let cg = CoarseGrain::new(&cells, s, |q| ev.jet(q, s.time, crate::qstate::JetOrder::Value).unwrap().density()).unwrap();
            assert!(total_variation(&cg) < 2.0 * (16.0 / n as f64).sqrt(), "{}", total_variation(&cg));
        }
        // Everything piled into the right half: far from |Ψ|².
        let left: Vec<f64> = grid.axis(0).points().iter().map(|&x| if x > PI / 2.0 { 2.0 / PI } else { 0.0 }).collect();
        let neq = sample(&left, &grid, n, 21).unwrap();
        let cg = CoarseGrain::new(&cells, &neq, |q| ev.jet(q, 0.0, crate::qstate::JetOrder::Value).unwrap().density()).unwrap();
        assert!(total_variation(&cg) >= 0.3);
    }

    #[test]
    fn evolution_is_schedule_independent() {
        let grid = Grid::line(Axis::walled(64, 0.0, PI).unwrap());
        let c = normalize_coefficients(&[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let m = ModeExpansion::box_sine(grid.clone(), vec![1.0], vec![vec![1], vec![3]], c).unwrap();
        let ev = EvolutionHandle::eigenmode(m.clone());
        let rho = density(&crate::qstate::synthesize(&m, 0.0).unwrap());
        let ens = sample(&rho, &grid, 300, 4).unwrap();
        let par = evolve_ensemble(&ens, &ev, 2.0, 1e-8).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool.install(|| evolve_ensemble(&ens, &ev, 2.0, 1e-8).unwrap());
        assert_eq!(par, seq);
    }

    #[test]
    fn outcome_fraction_bookkeeping() {
        let pts: Vec<Config> = [-3.0, -2.5, 0.0, 2.0, 2.2, 9.0].iter().map(|&y| Config::new(&[0.0, y])).collect();
        let mut flags = vec![MemberFlags::default(); 6];
        flags[4].stuck = true;
        let ens = EnsembleState {
            points: pts,
            flags,
            time: 1.0,
            seed: 0,
            provenance: String::new(),
        };
        let r = outcome_fractions(&ens, &[(-4.0, -1.0), (1.0, 4.0)]).unwrap();
        assert_eq!(r.counts, vec![2, 1]);
        assert_eq!((r.unassigned, r.total), (2, 5));
        assert!(r.fractions.iter().sum::<f64>() <= 1.0);
        assert!(matches!(outcome_fractions(&ens, &[(-4.0, 1.5), (1.0, 4.0)]), Err(Error::OverlapError(0, 1))));
        assert_eq!(MemberFlags { stuck: true, node_grazed: true, step_clamped: false }.label(), "node-grazed+stuck");
    }
}
