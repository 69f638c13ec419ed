use crate::error::{Error, Result};
use crate::guidance::{integrate_at, IntegratorOptions};
use crate::propagate::{CouplingCurrent, CouplingEvolution, EvolutionHandle};
use crate::qstate::{density, BasisKind, Config, Grid, ModeExpansion, MAX_DIM};

use super::{CouplingSpec, MeasurementRecord, MEASUREMENT_TOL};

/// Modes sharing one eigenvalue, and the pointer window that reports it.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub value: f64,
    pub modes: Vec<usize>,
    /// `Σ |cₙ|²` over the branch.
    pub weight: f64,
    /// Half-open pointer interval `[lo, hi)`.
    pub window: (f64, f64),
}

/// A prepared pointer-branching measurement of the observable whose
/// eigenbasis is `system`.
#[derive(Clone, Debug)]
pub struct QuantumMeasurement {
    coupling: CouplingSpec,
    system: ModeExpansion,
    evolution: EvolutionHandle,
    branches: Vec<Branch>,
    current: CouplingCurrent,
    pub tol: f64,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn momentum_basis(system: &ModeExpansion) -> bool {
    let len = system.grid().axis(0).length();
    system.basis_kind() == BasisKind::PlaneWave
        && system
            .quanta()
            .unwrap()
            .iter()
            .zip(system.eigenvalues())
            .all(|(q, &w)| same(2.0 * std::f64::consts::PI * q[0] as f64 / len, w))
}

impl QuantumMeasurement {
    /// Uses the local momentum current when the basis is a momentum basis,
    /// otherwise the spectral current.
    pub fn new(system: ModeExpansion, coupling: CouplingSpec) -> Result<Self> {
        let current = if system.grid().ndim() == 1 && momentum_basis(&system) {
            CouplingCurrent::Momentum
        } else {
            CouplingCurrent::Spectral
        };
        Self::with_current(system, coupling, current)
    }

    pub fn with_current(system: ModeExpansion, coupling: CouplingSpec, current: CouplingCurrent) -> Result<Self> {
        coupling.validate()?;
        let mut values: Vec<f64> = Vec::new();
        for &w in system.eigenvalues() {
            if !values.iter().any(|&v| same(v, w)) {
                values.push(w);
            }
        }
        values.sort_by(f64::total_cmp);
        let at = coupling.a_tau();
        let sep = values.windows(2).map(|w| at * (w[1] - w[0])).fold(f64::INFINITY, f64::min);
        let required = 6.0 * coupling.pointer_sigma;
        if sep.is_finite() && sep <= required {
            return Err(Error::BranchOverlap {
                separation: sep,
                required,
            });
        }
        let half = if sep.is_finite() { 0.5 * sep } else { 10.0 * coupling.pointer_sigma };
        let branches = values
            .iter()
            .map(|&v| {
                let modes: Vec<usize> = (0..system.len()).filter(|&n| same(system.eigenvalues()[n], v)).collect();
                Branch {
                    value: v,
                    weight: modes.iter().map(|&n| system.coefficients()[n].norm_sqr()).sum(),
                    modes,
                    window: (at * v - half, at * v + half),
                }
            })
            .collect();
        let shifts = || system.eigenvalues().iter().map(|w| at * w);
        let lo = shifts().fold(f64::INFINITY, f64::min);
        let hi = shifts().fold(f64::NEG_INFINITY, f64::max);
        let pointer = coupling.pointer_field(lo, hi)?;
        let ev = CouplingEvolution::new(system.clone(), &pointer, coupling.a, coupling.tau, current)?;
        Ok(QuantumMeasurement {
            coupling,
            system,
            evolution: EvolutionHandle::coupling(ev),
            branches,
            current,
            tol: MEASUREMENT_TOL,
        })
    }

    pub fn coupling(&self) -> &CouplingSpec {
        &self.coupling
    }

    pub fn system(&self) -> &ModeExpansion {
        &self.system
    }

    /// Joint evolution on the system × pointer grid.
    pub fn evolution(&self) -> &EvolutionHandle {
        &self.evolution
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn windows(&self) -> Vec<(f64, f64)> {
        self.branches.iter().map(|b| b.window).collect()
    }

    /// Branch whose window holds pointer position `y`.
    pub fn classify(&self, y: f64) -> Option<usize> {
        self.branches.iter().position(|b| y >= b.window.0 && y < b.window.1)
    }

    /// Joint grid and `|Ψ(x, y, 0)|²`, the equilibrium density of a run.
    pub fn joint_density(&self) -> Result<(Grid, Vec<f64>)> {
        let f = self.evolution.field_at(0.0)?;
        Ok((f.grid().clone(), density(&f)))
    }

    /// The same coupling applied to branch `b` alone: the effective state
    /// guiding a configuration that ended in that branch.
    pub fn branch_evolution(&self, b: usize) -> Result<EvolutionHandle> {
        let reduced = self.system.restrict(&self.branches[b].modes)?;
        let shifts = || self.system.eigenvalues().iter().map(|w| self.coupling.a_tau() * w);
        let pointer = self.coupling.pointer_field(
            shifts().fold(f64::INFINITY, f64::min),
            shifts().fold(f64::NEG_INFINITY, f64::max),
        )?;
        let ev = CouplingEvolution::new(reduced, &pointer, self.coupling.a, self.coupling.tau, self.current)?;
        Ok(EvolutionHandle::coupling(ev))
    }

    /// Couple a system starting at `x0` to a pointer starting at `y0` and read
    /// the pointer at the end of the coupling.
    pub fn run(&self, x0: f64, y0: f64) -> Result<MeasurementRecord> {
        let tau = self.coupling.tau;
        let opts = IntegratorOptions::new(self.tol);
        let tr = integrate_at(&self.evolution, &Config::new(&[x0, y0]), &[0.0, tau], &opts)?;
        let q = *tr.last();
        let y = q[1];
        let outcome = self.classify(y);
        let (inferred, disturbance) = match outcome {
            Some(b) => (self.branches[b].value, (1.0 - self.branches[b].weight).clamp(0.0, 1.0)),
            None => (y / self.coupling.a_tau(), 1.0),
        };
        Ok(MeasurementRecord {
            outcome_index: outcome,
            pointer_start: y0,
            pointer_reading: y,
            inferred_value: inferred,
            wave_disturbance: disturbance,
            trajectory_estimate: None,
            final_config: q,
            flags: tr.flags[1],
        })
    }

    /// Joint velocity just after the coupling has ended.
    pub fn post_velocity(&self, q: &Config) -> Result<[f64; MAX_DIM]> {
        let tau = self.coupling.tau;
        let f = self.evolution.flow_in_regime(q, tau, 2.0 * tau)?;
        Ok(f.velocity)
    }
}

/// One run of a pointer-branching measurement.
pub fn run_quantum_measurement(
    system: &ModeExpansion,
    coupling: &CouplingSpec,
    x0: f64,
    pointer_y0: f64,
) -> Result<MeasurementRecord> {
    QuantumMeasurement::new(system.clone(), *coupling)?.run(x0, pointer_y0)
}
