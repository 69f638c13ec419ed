//! Representation layer: grids, wavefields, densities, currents and eigenmode
//! synthesis. Every value here is immutable once built.

mod field;
pub mod gaussian;
mod grid;
mod jet;
mod modes;
mod potential;
pub mod spectral;

use std::collections::HashMap;

pub use field::{current, density, divergence, normalize, WaveField};
pub use gaussian::{GaussianPacket, PacketState};
pub use grid::{Axis, Boundary, Config, Grid, MAX_DIM};
pub use jet::{Factor, Jet, JetOrder};
pub use modes::{normalize_coefficients, BasisKind, ModeExpansion};
pub(crate) use modes::{analytic_factor, wavenumber};
pub use potential::PotentialSpec;

use crate::error::{Error, Result};
use crate::C64;

/// Tabulate `Ψ(q,t) = Σₙ cₙ e^{-iEₙt} φₙ(q)` on the expansion's own grid.
pub fn synthesize(modes: &ModeExpansion, t: f64) -> Result<WaveField> {
    synthesize_on(modes, t, modes.grid())
}

/// Tabulate the expansion on another grid covering the same domain
/// (e.g. a refined one).
pub fn synthesize_on(modes: &ModeExpansion, t: f64, grid: &Grid) -> Result<WaveField> {
    let own = modes.grid();
    if grid.ndim() != own.ndim() {
        return Err(Error::BasisMismatch(format!(
            "{}-axis expansion on a {}-axis grid",
            own.ndim(),
            grid.ndim()
        )));
    }
    for (k, (a, b)) in own.axes().iter().zip(grid.axes()).enumerate() {
        if a.boundary() != b.boundary() || a.lo() != b.lo() || a.hi() != b.hi() {
            return Err(Error::BasisMismatch(format!("axis {k} covers a different domain")));
        }
    }
    let phases: Vec<C64> = modes
        .coefficients()
        .iter()
        .zip(modes.energies())
        .map(|(c, e)| c * C64::from_polar(1.0, -e * t))
        .collect();
    let mut amps = vec![C64::new(0.0, 0.0); grid.len()];
    match modes.quanta() {
        Some(quanta) => {
            // Per-axis tables of each distinct 1-D factor.
            let dim = grid.ndim();
            let mut tables: Vec<HashMap<i64, Vec<C64>>> = vec![HashMap::new(); dim];
            for (n, q) in quanta.iter().enumerate() {
                for k in 0..dim {
                    tables[k].entry(q[k]).or_insert_with(|| {
                        grid.axis(k)
                            .points()
                            .iter()
                            .map(|&x| modes.axis_factor(n, k, x)[0])
                            .collect()
                    });
                }
            }
            for (n, q) in quanta.iter().enumerate() {
                for (i, a) in amps.iter_mut().enumerate() {
                    let idx = grid.unravel(i);
                    let mut v = phases[n];
                    for k in 0..dim {
                        v *= tables[k][&q[k]][idx[k]];
                    }
                    *a += v;
                }
            }
        }
        None if grid == own => {
            for (n, p) in phases.iter().enumerate() {
                for (a, phi) in amps.iter_mut().zip(modes.mode_samples(n)) {
                    *a += p * phi;
                }
            }
        }
        None => {
            for (i, a) in amps.iter_mut().enumerate() {
                let q = grid.point(i);
                for (n, p) in phases.iter().enumerate() {
                    *a += p * modes.mode_jet(n, &q, JetOrder::Value).value;
                }
            }
        }
    }
    WaveField::new(grid.clone(), amps, modes.masses().to_vec(), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two_box_modes(n: usize) -> ModeExpansion {
        let g = Grid::line(Axis::walled(n, 0.0, PI).unwrap());
        ModeExpansion::box_sine(
            g,
            vec![1.0],
            vec![vec![1], vec![2]],
            normalize_coefficients(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]),
        )
        .unwrap()
    }

    #[test]
    fn single_mode_modulus_is_stationary() {
        let g = Grid::line(Axis::walled(64, 0.0, 1.0).unwrap());
        let m = ModeExpansion::box_sine(g, vec![1.0], vec![vec![3]], vec![C64::new(1.0, 0.0)]).unwrap();
        let a = synthesize(&m, 0.0).unwrap();
        let b = synthesize(&m, 7.3).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x.norm() - y.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn recurrence_after_beat_period() {
        let m = two_box_modes(128);
        let period = 2.0 * PI / (m.energies()[1] - m.energies()[0]);
        let a = synthesize(&m, 0.0).unwrap();
        let b = synthesize(&m, period).unwrap();
        assert!((a.inner(&b).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn first_box_mode_density() {
        let l = 2.0;
        let g = Grid::line(Axis::walled(64, 0.0, l).unwrap());
        let m = ModeExpansion::box_sine(g, vec![1.0], vec![vec![1]], vec![C64::new(1.0, 0.0)]).unwrap();
        let f = synthesize(&m, 0.3).unwrap();
        for (x, rho) in f.grid().axis(0).points().iter().zip(density(&f)) {
            assert!((rho - 2.0 / l * (PI * x / l).sin().powi(2)).abs() < 1e-14);
        }
        let total: f64 = density(&f).iter().sum::<f64>() * f.grid().cell_volume();
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn refined_grid_must_cover_same_domain() {
        let m = two_box_modes(64);
        let other = Grid::line(Axis::walled(128, 0.0, 3.0).unwrap());
        assert!(matches!(synthesize_on(&m, 0.0, &other), Err(Error::BasisMismatch(_))));
    }
}
