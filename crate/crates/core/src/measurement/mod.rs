//! Measurement experiments: pointer-branching "quantum measurements" of an
//! observable, ideal subquantum position measurements read with a narrow
//! nonequilibrium pointer, trajectory tracking built from them, and the
//! occupancy probe for empty packets.

mod quantum;
mod subquantum;

pub use quantum::{run_quantum_measurement, Branch, QuantumMeasurement};
pub use subquantum::{
    occupancy_probe, run_subquantum_measurement, split_packets, track_trajectory, Occupancy, PacketInfo,
    TrackingResult,
};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::guidance::SampleFlags;
use crate::qstate::{normalize, Axis, Config, GaussianPacket, Grid, PacketState, WaveField};

/// Tolerance of the joint trajectories integrated by the measurement runs.
pub const MEASUREMENT_TOL: f64 = 1e-10;

/// How the pointer's initial position is distributed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointerDistribution {
    /// `|g₀|²`, the quantum-equilibrium pointer.
    Equilibrium,
    /// Uniform on `[-width/2, width/2]`, far narrower than `g₀`.
    Narrow { width: f64 },
}

/// Parameters of a coupling `Ĥ = a ω̂ p̂ᵧ` switched on for a time `tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingSpec {
    pub a: f64,
    pub tau: f64,
    /// Position spread of the pointer packet `g₀` (standard deviation of `|g₀|²`).
    pub pointer_sigma: f64,
    pub pointer: PointerDistribution,
}

impl CouplingSpec {
    pub fn equilibrium(a: f64, tau: f64, pointer_sigma: f64) -> Result<Self> {
        let c = CouplingSpec {
            a,
            tau,
            pointer_sigma,
            pointer: PointerDistribution::Equilibrium,
        };
        c.validate()?;
        Ok(c)
    }

    /// Narrow pointer; the width defaults to `pointer_sigma / 1000`.
    pub fn narrow(a: f64, tau: f64, pointer_sigma: f64, width: Option<f64>) -> Result<Self> {
        let c = CouplingSpec {
            a,
            tau,
            pointer_sigma,
            pointer: PointerDistribution::Narrow {
                width: width.unwrap_or(pointer_sigma / 1000.0),
            },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.a) && pos(self.tau) && pos(self.pointer_sigma)) {
            return Err(Error::InvalidCoupling(format!(
                "a, tau and pointer_sigma must be positive (a = {}, tau = {}, sigma = {})",
                self.a, self.tau, self.pointer_sigma
            )));
        }
        if let PointerDistribution::Narrow { width } = self.pointer {
            if !(width > 0.0 && width <= self.pointer_sigma / 100.0) {
                return Err(Error::InvalidCoupling(format!(
                    "narrow pointer width {width} must lie in (0, pointer_sigma/100]"
                )));
            }
        }
        Ok(())
    }

    /// `a τ`, the pointer displacement per unit of the observable.
    pub fn a_tau(&self) -> f64 {
        self.a * self.tau
    }

    pub fn narrow_width(&self) -> Option<f64> {
        match self.pointer {
            PointerDistribution::Narrow { width } => Some(width),
            PointerDistribution::Equilibrium => None,
        }
    }

    /// Draw an initial pointer position from the pointer distribution.
    pub fn draw_pointer(&self, rng: &mut impl Rng) -> f64 {
        match self.pointer {
            PointerDistribution::Equilibrium => Normal::new(0.0, self.pointer_sigma).unwrap().sample(rng),
            PointerDistribution::Narrow { width } => (rng.random::<f64>() - 0.5) * width,
        }
    }

    /// Gaussian `g₀` centred at 0 on a periodic pointer grid wide enough for
    /// every shift in `[shift_lo, shift_hi]`.
    pub fn pointer_field(&self, shift_lo: f64, shift_hi: f64) -> Result<WaveField> {
        let s = self.pointer_sigma;
        let lo = shift_lo.min(0.0) - 10.0 * s;
        let hi = shift_hi.max(0.0) + 10.0 * s;
        let n = (((hi - lo) / (s / 6.0)).ceil() as usize).next_power_of_two().max(64);
        let grid = Grid::line(Axis::periodic(n, lo, hi)?);
        let g = PacketState::single(vec![GaussianPacket::new(0.0, 0.0, s, 1.0)])?;
        normalize(&g.tabulate(&grid, 0.0)?)
    }

    /// `⟨g₀ | g₀(· - s)⟩` for the Gaussian pointer.
    pub fn pointer_overlap(&self, shift: f64) -> f64 {
        (-shift * shift / (8.0 * self.pointer_sigma * self.pointer_sigma)).exp()
    }
}

/// Outcome of one measurement run.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    /// Branch containing the final pointer position; `None` if unassigned.
    pub outcome_index: Option<usize>,
    pub pointer_start: f64,
    pub pointer_reading: f64,
    /// Value of the observable read off the pointer.
    pub inferred_value: f64,
    /// `1 - |overlap|²` between the system wave before and after, compensated
    /// for the branch that is kept.
    pub wave_disturbance: f64,
    /// Position estimate (subquantum measurements only).
    pub trajectory_estimate: Option<f64>,
    /// Joint configuration `(x, y)` at the end of the coupling.
    pub final_config: Config,
    pub flags: SampleFlags,
}
