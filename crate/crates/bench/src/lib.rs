//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use pilotwave::ensemble::member_rng;
use pilotwave::propagate::EvolutionHandle;
use pilotwave::qstate::{normalize_coefficients, GaussianPacket, PacketState};
use pilotwave::{Axis, Grid, ModeExpansion, WaveField, C64};
use rand::Rng;

/// Equal-weight ground and first excited modes of the unit box `[0, π]`.
pub fn two_mode_box() -> EvolutionHandle {
    let grid = Grid::line(Axis::walled(128, 0.0, PI).unwrap());
    let c = normalize_coefficients(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
    EvolutionHandle::eigenmode(ModeExpansion::box_sine(grid, vec![1.0], vec![vec![1], vec![2]], c).unwrap())
}

/// Sixteen modes of the square box with random phases, as in the relaxation scenario.
pub fn planar_box(seed: u64) -> EvolutionHandle {
    let grid = Grid::new(vec![Axis::walled(64, 0.0, PI).unwrap(), Axis::walled(64, 0.0, PI).unwrap()]).unwrap();
    let mut rng = member_rng(seed, 0);
    let mut quanta = Vec::new();
    let mut c = Vec::new();
    for i in 1..=4 {
        for j in 1..=4 {
            quanta.push(vec![i, j]);
            c.push(C64::from_polar(1.0, 2.0 * PI * rng.random::<f64>()));
        }
    }
    let modes = ModeExpansion::box_sine(grid, vec![1.0, 1.0], quanta, normalize_coefficients(&c)).unwrap();
    EvolutionHandle::eigenmode(modes)
}

/// A unit-width packet on an `n`-point periodic line `[-20, 20]`.
pub fn packet_field(n: usize) -> WaveField {
    let grid = Grid::line(Axis::periodic(n, -20.0, 20.0).unwrap());
    PacketState::single(vec![GaussianPacket::new(-2.0, 1.5, 1.0, 1.0)])
        .unwrap()
        .tabulate(&grid, 0.0)
        .unwrap()
}
