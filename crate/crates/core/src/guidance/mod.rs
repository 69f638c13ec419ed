//! De Broglie velocity field, trajectory integration, the quantum potential
//! and the second-order (Newton-form) consistency residual.

mod trajectory;

pub use trajectory::{
    integrate_at, integrate_trajectory, uniform_times, IntegratorOptions, IntegratorStats, SampleFlags, Trajectory,
    NODE_EPS,
};

use crate::error::{Error, Result};
use crate::propagate::EvolutionHandle;
use crate::qstate::{Config, JetOrder, PotentialSpec, MAX_DIM};

fn node_check(ev: &EvolutionHandle, density: f64) -> Result<()> {
    let threshold = NODE_EPS * ev.density_ceiling();
    if !(density >= threshold) {
        return Err(Error::NodeProximity { density, threshold });
    }
    Ok(())
}

/// Velocity `j/|Ψ|²` at an off-grid configuration.
pub fn velocity(ev: &EvolutionHandle, q: &[f64], t: f64) -> Result<[f64; MAX_DIM]> {
    let f = ev.flow(q, t)?;
    node_check(ev, f.density)?;
    Ok(f.velocity)
}

/// Quantum potential `Q = -Σᵢ (1/2mᵢ) ∇ᵢ²|Ψ| / |Ψ|`.
pub fn quantum_potential(ev: &EvolutionHandle, q: &[f64], t: f64) -> Result<f64> {
    if !ev.is_standard() {
        return Err(Error::Unsupported("quantum potential needs a kinetic-plus-potential Hamiltonian"));
    }
    let jet = ev.jet(q, t, JetOrder::Hessian)?;
    node_check(ev, jet.density())?;
    Ok(jet.quantum_potential(&ev.masses()))
}

/// `∇Q`, from derivatives of Ψ up to third order.
pub fn quantum_potential_gradient(ev: &EvolutionHandle, q: &[f64], t: f64) -> Result<[f64; MAX_DIM]> {
    if !ev.is_standard() {
        return Err(Error::Unsupported("quantum potential needs a kinetic-plus-potential Hamiltonian"));
    }
    let jet = ev.jet(q, t, JetOrder::Third)?;
    node_check(ev, jet.density())?;
    Ok(jet.quantum_potential_gradient(&ev.masses()))
}

/// Residual of Bohm's second-order law along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonResidual {
    /// Resample times at which the residual was evaluated.
    pub times: Vec<f64>,
    /// `|m q̈ + ∇(V+Q)|`; `None` where excluded.
    pub residual: Vec<Option<f64>>,
    /// `max |∇(V+Q)|` over the evaluated samples.
    pub scale: f64,
    /// Samples skipped because a node safeguard fired nearby.
    pub excluded: usize,
}

impl NewtonResidual {
    /// `max |m q̈ + ∇(V+Q)| / max |∇(V+Q)|` over evaluated samples.
    pub fn max_relative(&self) -> f64 {
        let m = self.residual.iter().flatten().cloned().fold(0.0, f64::max);
        if self.scale > 0.0 {
            m / self.scale
        } else {
            m
        }
    }
}

/// Samples used by [`newton_residual`] when resampling.
pub const RESIDUAL_SAMPLES: usize = 801;

/// Evaluate `m q̈ + ∇(V+Q)` along the path of `traj`.
///
/// The trajectory is re-integrated from its first sample at the same
/// tolerance on a uniform time grid; `q̈` comes from fourth-order central
/// differences and `∇Q` from the spectral jet. Samples whose stencil touches
/// a node-flagged step are excluded.
pub fn newton_residual(traj: &Trajectory, ev: &EvolutionHandle, potential: &PotentialSpec) -> Result<NewtonResidual> {
    newton_residual_with(traj, ev, potential, RESIDUAL_SAMPLES)
}

pub fn newton_residual_with(
    traj: &Trajectory,
    ev: &EvolutionHandle,
    potential: &PotentialSpec,
    samples: usize,
) -> Result<NewtonResidual> {
    if traj.len() < 2 {
        return Err(Error::InvalidTrajectory("need at least two samples".into()));
    }
    let (t0, t1) = (traj.times[0], *traj.times.last().unwrap());
    let times = match ev.time_step() {
        Some(dt) => {
            let n = ((t1 - t0) / dt).round() as usize;
            let stride = (n / samples.max(5)).max(1);
            (0..=n / stride).map(|i| t0 + (i * stride) as f64 * dt).collect()
        }
        None => uniform_times(t0, t1, samples.max(5)),
    };
    if times.len() < 5 {
        return Err(Error::InvalidTrajectory("trajectory too short for a residual stencil".into()));
    }
    let dense = integrate_at(ev, &traj.points[0], &times, &IntegratorOptions::new(traj.tol))?;
    let grid = ev.grid();
    let masses = ev.masses();
    let dim = ev.dim();
    let h = times[1] - times[0];
    let mut residual = vec![None; times.len()];
    let mut scale: f64 = 0.0;
    let mut excluded = 0;
    let mut evaluated = Vec::new();
    for i in 2..times.len() - 2 {
        if dense.flags[i - 1..=i + 2].iter().any(|f| !f.is_clear()) {
            excluded += 1;
            continue;
        }
        let c = dense.points[i];
        let off = |j: usize, k: usize| grid.axis(k).displacement(c[k], dense.points[j][k]);
        let q = Config::new(&c);
        let gq = match quantum_potential_gradient(ev, &q, times[i]) {
            Ok(g) => g,
            Err(Error::NodeProximity { .. }) => {
                excluded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let gv = potential.gradient(&q, &masses, grid);
        let mut force = 0.0;
        let mut r = 0.0;
        for k in 0..dim {
            let acc = (-off(i + 2, k) + 16.0 * off(i + 1, k) + 16.0 * off(i - 1, k) - off(i - 2, k)) / (12.0 * h * h);
            let f = gv[k] + gq[k];
            force += f * f;
            let rk = masses[k] * acc + f;
            r += rk * rk;
        }
        scale = scale.max(force.sqrt());
        evaluated.push((i, r.sqrt()));
    }
    for (i, r) in evaluated {
        residual[i] = Some(r);
    }
    Ok(NewtonResidual {
        times,
        residual,
        scale,
        excluded,
    })
}
