use std::f64::consts::PI;

use rand::Rng;

use crate::ensemble::member_rng;
use crate::error::{Error, Result};
use crate::propagate::EvolutionHandle;
use crate::qstate::{
    normalize_coefficients, synthesize, GaussianPacket, Grid, ModeExpansion, PacketState, WaveField,
};
use crate::C64;

use super::scenario::{EngineChoice, Observable, Phases, Scenario, StateKind};

/// RNG stream reserved for drawing random phases (members use the low streams).
const PHASE_STREAM: usize = 1 << 40;

/// Normalized complex coefficients from the amplitudes and phases.
pub fn coefficients(s: &Scenario, seed: u64) -> Vec<C64> {
    let phases: Vec<f64> = match &s.state.phases {
        Phases::Given(p) => p.clone(),
        Phases::Random => {
            let mut rng = member_rng(seed, PHASE_STREAM);
            (0..s.state.terms()).map(|_| 2.0 * PI * rng.random::<f64>()).collect()
        }
    };
    let c: Vec<C64> = s
        .state
        .amplitudes
        .iter()
        .zip(&phases)
        .map(|(&a, &p)| C64::from_polar(a, p))
        .collect();
    normalize_coefficients(&c)
}

/// Mode expansion of a modal state, with the observable's eigenvalues.
pub fn modes(s: &Scenario, seed: u64) -> Result<ModeExpansion> {
    let grid = s.grid.grid()?;
    let masses = s.grid.masses.clone();
    let c = coefficients(s, seed);
    let m = match s.state.kind {
        StateKind::BoxModes => ModeExpansion::box_sine(grid, masses, s.state.quanta.clone(), c)?,
        StateKind::PlaneWaves => ModeExpansion::plane_wave(grid, masses, s.state.quanta.clone(), c)?,
        StateKind::PacketModes => {
            let energies = vec![0.0; c.len()];
            let tab = (0..c.len())
                .map(|i| {
                    let p = packet_row(s, i)?;
                    let f = PacketState::single(p)?.tabulate(&grid, 0.0)?;
                    Ok(crate::qstate::normalize(&f)?.into_amplitudes())
                })
                .collect::<Result<Vec<_>>>()?;
            ModeExpansion::tabulated(grid, masses, tab, energies, c)?
        }
        StateKind::Packets => return Err(Error::InvalidState("a packet state has no mode expansion".into())),
    };
    match &s.state.observable {
        Observable::Energy => Ok(m),
        Observable::Momentum => {
            let len = m.grid().axis(0).length();
            let k = m
                .quanta()
                .expect("plane waves carry quanta")
                .iter()
                .map(|q| 2.0 * PI * q[0] as f64 / len)
                .collect();
            m.with_eigenvalues(k)
        }
        Observable::Given(w) => m.with_eigenvalues(w.clone()),
    }
}

fn packet_row(s: &Scenario, i: usize) -> Result<Vec<GaussianPacket>> {
    Ok((0..s.grid.ndim())
        .map(|k| {
            GaussianPacket::new(
                s.state.centres[i][k],
                s.state.momenta[i][k],
                s.state.widths[i][k],
                s.grid.masses[k],
            )
        })
        .collect())
}

pub fn packet_state(s: &Scenario, seed: u64) -> Result<PacketState> {
    let rows = (0..s.state.terms()).map(|i| packet_row(s, i)).collect::<Result<Vec<_>>>()?;
    PacketState::new(coefficients(s, seed), rows)
}

/// Evolution of the scenario's state with its chosen engine.
pub fn evolution(s: &Scenario, seed: u64) -> Result<EvolutionHandle> {
    let grid = s.grid.grid()?;
    let ev = match s.dynamics.engine {
        EngineChoice::Eigenmode => EvolutionHandle::eigenmode(modes(s, seed)?),
        EngineChoice::Packets => EvolutionHandle::packets(packet_state(s, seed)?, grid)?,
        EngineChoice::SplitStep { dt } => {
            let field = initial_field(s, seed, &grid)?;
            let steps = (s.dynamics.t_final / dt).round() as usize;
            return EvolutionHandle::splitstep(&field, s.potential.clone(), dt, steps);
        }
    };
    Ok(ev.with_potential(s.potential.clone()))
}

fn initial_field(s: &Scenario, seed: u64, grid: &Grid) -> Result<WaveField> {
    if s.state.kind.is_modal() {
        synthesize(&modes(s, seed)?, 0.0)
    } else {
        packet_state(s, seed)?.tabulate(grid, 0.0)
    }
}
