//! Time evolution engines. Every engine can evaluate Ψ and its derivatives
//! at off-grid configurations inside its validity window; they are wrapped
//! by [`EvolutionHandle`], which is what trajectories and ensembles consume.

mod coupling;
mod eigenmode;
mod splitstep;

pub use coupling::{evolve_coupling, pointer_support, CouplingCurrent, CouplingEvolution, PositionCoupling, ProbeFunction};
pub use eigenmode::{evolve_modes, EigenmodeEvolution};
pub use splitstep::{cfl_exceeded, evolve_splitstep, nyquist_phase, SplitStepEvolution, CFL_PHASE};

use crate::error::{Error, Result};
use crate::qstate::{BasisKind, Grid, Jet, JetOrder, ModeExpansion, PacketState, PotentialSpec, WaveField, MAX_DIM};

/// Free evolution of a Gaussian-packet superposition in closed form.
/// `grid` only fixes the domain and the tabulation points.
#[derive(Clone, Debug)]
pub struct PacketEvolution {
    state: PacketState,
    grid: Grid,
}

impl PacketEvolution {
    pub fn new(state: PacketState, grid: Grid) -> Result<Self> {
        if state.dim() != grid.ndim() {
            return Err(Error::BasisMismatch(format!(
                "{}-axis packets on a {}-axis grid",
                state.dim(),
                grid.ndim()
            )));
        }
        Ok(PacketEvolution { state, grid })
    }

    pub fn state(&self) -> &PacketState {
        &self.state
    }
}

/// Density and de Broglie velocity at one configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flow {
    pub density: f64,
    pub velocity: [f64; MAX_DIM],
}

#[derive(Clone, Debug)]
pub enum Engine {
    Eigenmode(EigenmodeEvolution),
    Packets(PacketEvolution),
    SplitStep(SplitStepEvolution),
    Coupling(CouplingEvolution),
    PositionCoupling(PositionCoupling),
}

/// A pilot wave that can be evaluated at any configuration and at any time
/// inside the engine's validity window. Cheap to clone and safe to share.
#[derive(Clone, Debug)]
pub struct EvolutionHandle {
    engine: Engine,
    potential: PotentialSpec,
    masses: Vec<f64>,
}

impl EvolutionHandle {
    /// Exact eigenmode rotation. Box modes carry the box-wall potential,
    /// other bases are free unless [`with_potential`](Self::with_potential) says otherwise.
    pub fn eigenmode(modes: ModeExpansion) -> Self {
        let potential = match modes.basis_kind() {
            BasisKind::BoxSine => PotentialSpec::BoxWall,
            _ => PotentialSpec::Free,
        };
        Self::wrap(Engine::Eigenmode(EigenmodeEvolution::new(modes)), potential)
    }

    pub fn packets(state: PacketState, grid: Grid) -> Result<Self> {
        Ok(Self::wrap(Engine::Packets(PacketEvolution::new(state, grid)?), PotentialSpec::Free))
    }

    pub fn splitstep(field: &WaveField, potential: PotentialSpec, dt: f64, steps: usize) -> Result<Self> {
        let ev = SplitStepEvolution::new(field, potential.clone(), dt, steps)?;
        Ok(Self::wrap(Engine::SplitStep(ev), potential))
    }

    pub fn coupling(ev: CouplingEvolution) -> Self {
        Self::wrap(Engine::Coupling(ev), PotentialSpec::Free)
    }

    pub fn position_coupling(ev: PositionCoupling) -> Self {
        Self::wrap(Engine::PositionCoupling(ev), PotentialSpec::Free)
    }

    fn wrap(engine: Engine, potential: PotentialSpec) -> Self {
        let masses = match &engine {
            Engine::Eigenmode(e) => e.modes().masses().to_vec(),
            Engine::Packets(e) => e.state.masses(),
            Engine::SplitStep(e) => e.masses().to_vec(),
            Engine::Coupling(e) => e.masses().to_vec(),
            Engine::PositionCoupling(e) => e.masses().to_vec(),
        };
        EvolutionHandle {
            engine,
            potential,
            masses,
        }
    }

    /// Declare the potential the eigenbasis diagonalizes (used by the
    /// second-order residual only).
    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = potential;
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_name(&self) -> &'static str {
        match self.engine {
            Engine::Eigenmode(_) => "eigenmode",
            Engine::Packets(_) => "packets",
            Engine::SplitStep(_) => "splitstep",
            Engine::Coupling(_) | Engine::PositionCoupling(_) => "coupling",
        }
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn grid(&self) -> &Grid {
        match &self.engine {
            Engine::Eigenmode(e) => e.modes().grid(),
            Engine::Packets(e) => &e.grid,
            Engine::SplitStep(e) => e.grid(),
            Engine::Coupling(e) => e.grid(),
            Engine::PositionCoupling(e) => e.grid(),
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        self.masses.clone()
    }

    pub fn dim(&self) -> usize {
        self.grid().ndim()
    }

    /// Upper bound on |Ψ|², the scale for the node threshold.
    pub fn density_ceiling(&self) -> f64 {
        match &self.engine {
            Engine::Eigenmode(e) => e.density_ceiling(),
            Engine::Packets(e) => e.state.density_ceiling(),
            Engine::SplitStep(e) => e.density_ceiling(),
            Engine::Coupling(e) => e.density_ceiling(),
            Engine::PositionCoupling(e) => e.density_ceiling(),
        }
    }

    /// Closed time interval on which the engine is valid.
    pub fn window(&self) -> (f64, f64) {
        match &self.engine {
            Engine::Eigenmode(_) | Engine::Packets(_) => (f64::NEG_INFINITY, f64::INFINITY),
            Engine::SplitStep(e) => (e.start(), e.end()),
            Engine::Coupling(_) => (0.0, f64::INFINITY),
            Engine::PositionCoupling(e) => (0.0, e.duration()),
        }
    }

    /// Step of the time lattice trajectories must follow, if any.
    pub fn time_step(&self) -> Option<f64> {
        match &self.engine {
            Engine::SplitStep(e) => Some(e.dt()),
            _ => None,
        }
    }

    /// Times at which the velocity field changes form (end of a coupling).
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.engine {
            Engine::Coupling(e) => vec![e.duration()],
            _ => Vec::new(),
        }
    }

    /// Whether the velocity is the standard `Im(∇Ψ/Ψ)/m` of a kinetic-plus-potential
    /// Hamiltonian on every axis (so that the quantum potential applies).
    pub fn is_standard(&self) -> bool {
        !matches!(self.engine, Engine::Coupling(_) | Engine::PositionCoupling(_))
    }

    pub fn jet(&self, q: &[f64], t: f64, order: JetOrder) -> Result<Jet> {
        match &self.engine {
            Engine::Eigenmode(e) => Ok(e.jet(q, t, order)),
            Engine::Packets(e) => Ok(e.state.jet(q, t, order)),
            Engine::SplitStep(e) => e.jet(q, t, order),
            Engine::Coupling(e) => e.jet(q, t, order),
            Engine::PositionCoupling(e) => e.jet(q, t, order),
        }
    }

    /// Density and velocity `j/|Ψ|²`. At an exact node the velocity is not finite;
    /// callers should compare the density with the node threshold first.
    pub fn flow(&self, q: &[f64], t: f64) -> Result<Flow> {
        let (density, velocity) = match &self.engine {
            Engine::Coupling(e) => e.flow(q, t)?,
            Engine::PositionCoupling(e) => e.flow(q, t)?,
            _ => {
                let jet = self.jet(q, t, JetOrder::Gradient)?;
                (jet.density(), jet.velocity(&self.masses))
            }
        };
        Ok(Flow { density, velocity })
    }

    /// As [`flow`](Self::flow), but where the velocity field is piecewise in time
    /// the piece is chosen by `regime` (any time inside the intended piece)
    /// rather than by `t`. A NaN `regime` means `t`.
    pub fn flow_in_regime(&self, q: &[f64], t: f64, regime: f64) -> Result<Flow> {
        match &self.engine {
            Engine::Coupling(e) if !regime.is_nan() => {
                let (density, velocity) = e.flow_in_regime(q, t, regime < e.duration())?;
                Ok(Flow { density, velocity })
            }
            _ => self.flow(q, t),
        }
    }

    /// Ψ tabulated on the engine grid at time `t`.
    pub fn field_at(&self, t: f64) -> Result<WaveField> {
        match &self.engine {
            Engine::Eigenmode(e) => crate::qstate::synthesize(&evolve_modes(e.modes(), 0.0), t),
            Engine::Packets(e) => e.state.tabulate(&e.grid, t),
            Engine::SplitStep(e) => e.field_at(t),
            Engine::Coupling(e) => e.field_at(t),
            Engine::PositionCoupling(e) => e.field_at(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{normalize_coefficients, synthesize, synthesize_on, Axis, GaussianPacket};
    use crate::C64;
    use std::f64::consts::PI;

    #[test]
    fn free_gaussian_splitstep_matches_closed_form() {
        let g = Grid::line(Axis::periodic(512, -20.0, 20.0).unwrap());
        let p = PacketState::single(vec![GaussianPacket::new(-2.0, 1.0, 1.0, 1.0)]).unwrap();
        let f0 = p.tabulate(&g, 0.0).unwrap();
        let f1 = evolve_splitstep(&f0, &PotentialSpec::Free, 1e-3, 1000).unwrap();
        let exact = p.tabulate(&g, 1.0).unwrap();
        assert!(f1.distance(&exact) < 1e-6, "{}", f1.distance(&exact));
    }

    #[test]
    fn coherent_state_returns_after_one_period() {
        let omega: f64 = 2.0;
        let sigma = (1.0 / (2.0 * omega)).sqrt();
        let g = Grid::line(Axis::periodic(256, -8.0, 8.0).unwrap());
        let p = PacketState::single(vec![GaussianPacket::new(1.5, 0.0, sigma, 1.0)]).unwrap();
        let f0 = p.tabulate(&g, 0.0).unwrap();
        let steps = 2000;
        let dt = 2.0 * PI / omega / steps as f64;
        let v = PotentialSpec::Harmonic { omega, center: vec![0.0] };
        let f1 = evolve_splitstep(&f0, &v, dt, steps).unwrap();
        assert!((f1.mean_position(0) - 1.5).abs() < 1e-5);
        let half = evolve_splitstep(&f0, &v, dt, steps / 2).unwrap();
        assert!((half.mean_position(0) + 1.5).abs() < 1e-4);
        assert!((f1.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eigenmode_engine_is_resolution_independent() {
        let coarse = Grid::line(Axis::walled(64, 0.0, PI).unwrap());
        let fine = Grid::line(Axis::walled(128, 0.0, PI).unwrap());
        let c = normalize_coefficients(&[C64::new(1.0, 0.0), C64::new(0.2, 0.7), C64::new(0.0, -0.4)]);
        let m = ModeExpansion::box_sine(coarse, vec![1.0], vec![vec![1], vec![2], vec![5]], c).unwrap();
        let a = synthesize_on(&m, 0.8, &fine).unwrap();
        let ev = EvolutionHandle::eigenmode(m.clone());
        let b = WaveField::from_fn(fine.clone(), vec![1.0], 0.8, |q| ev.jet(q, 0.8, JetOrder::Value).unwrap().value).unwrap();
        assert!(a.distance(&b) < 1e-10);
        let own = ev.field_at(0.8).unwrap();
        assert!(own.distance(&synthesize(&m, 0.8).unwrap()) < 1e-14);
    }

    #[test]
    fn continuity_for_eigenmode_evolution() {
        let g = Grid::new(vec![Axis::walled(32, 0.0, PI).unwrap(), Axis::walled(32, 0.0, PI).unwrap()]).unwrap();
        let quanta = vec![vec![1, 1], vec![2, 1], vec![1, 2], vec![3, 2]];
        let c = normalize_coefficients(&[C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.7, 0.1), C64::new(-0.3, 0.5)]);
        let m = ModeExpansion::box_sine(g.clone(), vec![1.0, 1.0], quanta, c).unwrap();
        let dt = 1e-4;
        let t = 0.6;
        let before = crate::qstate::density(&synthesize(&m, t - dt).unwrap());
        let after = crate::qstate::density(&synthesize(&m, t + dt).unwrap());
        let now = synthesize(&m, t).unwrap();
        let div = crate::qstate::divergence(&g, &crate::qstate::current(&now));
        let mut num = 0.0;
        for i in 0..g.len() {
            let r = (after[i] - before[i]) / (2.0 * dt) + div[i];
            num += r * r * g.cell_volume();
        }
        assert!(num.sqrt() < 1e-4, "{}", num.sqrt());
    }

    #[test]
    fn windows_and_lattice() {
        let g = Grid::line(Axis::periodic(64, -8.0, 8.0).unwrap());
        let p = PacketState::single(vec![GaussianPacket::new(0.0, 0.0, 1.0, 1.0)]).unwrap();
        let f = p.tabulate(&g, 0.0).unwrap();
        let h = EvolutionHandle::splitstep(&f, PotentialSpec::Free, 0.05, 4).unwrap();
        assert_eq!(h.window(), (0.0, 0.2));
        assert_eq!(h.time_step(), Some(0.05));
        assert!(h.flow(&[0.0], 0.075).is_ok());
        let e = EvolutionHandle::packets(p, g).unwrap();
        assert!(e.time_step().is_none());
        assert!(e.is_standard());
    }
}
