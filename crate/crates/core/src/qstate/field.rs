use crate::error::{Error, Result};
use crate::qstate::grid::{Grid, MAX_DIM};
use crate::qstate::spectral;
use crate::C64;

/// Complex pilot wave sampled on a grid, row-major, with per-axis masses.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveField {
    grid: Grid,
    amplitudes: Vec<C64>,
    masses: Vec<f64>,
    time: f64,
}

impl WaveField {
    pub fn new(grid: Grid, amplitudes: Vec<C64>, masses: Vec<f64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::InvalidState(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.len()
            )));
        }
        if masses.len() != grid.ndim() || masses.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidState(format!(
                "need {} positive masses, got {masses:?}",
                grid.ndim()
            )));
        }
        Ok(WaveField {
            grid,
            amplitudes,
            masses,
            time,
        })
    }

    /// Tabulate `f` at every grid point.
    pub fn from_fn(
        grid: Grid,
        masses: Vec<f64>,
        time: f64,
        f: impl Fn(&[f64]) -> C64,
    ) -> Result<Self> {
        let amps = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        WaveField::new(grid, amps, masses, time)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub(crate) fn replace_amplitudes(&self, amplitudes: Vec<C64>, time: f64) -> WaveField {
        debug_assert_eq!(amplitudes.len(), self.amplitudes.len());
        WaveField {
            grid: self.grid.clone(),
            amplitudes,
            masses: self.masses.clone(),
            time,
        }
    }

    /// Squared L² norm with cell-volume weight.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete inner product ⟨self|other⟩.
    pub fn inner(&self, other: &WaveField) -> C64 {
        assert_eq!(self.grid, other.grid, "inner product across different grids");
        let s: C64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn distance(&self, other: &WaveField) -> f64 {
        assert_eq!(self.grid, other.grid);
        let s: f64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// Expectation of coordinate `axis` under |Ψ|².
    pub fn mean_position(&self, axis: usize) -> f64 {
        let dv = self.grid.cell_volume();
        (0..self.grid.len())
            .map(|i| self.grid.point(i)[axis] * self.amplitudes[i].norm_sqr() * dv)
            .sum::<f64>()
            / self.norm_sqr()
    }
}

/// Rescale to unit L² norm.
pub fn normalize(field: &WaveField) -> Result<WaveField> {
    let n2 = field.norm_sqr();
    if !(n2.sqrt() >= 1e-300) {
        return Err(Error::ZeroNorm(n2.sqrt()));
    }
    let s = 1.0 / n2.sqrt();
    let amps = field.amplitudes.iter().map(|a| a * s).collect();
    Ok(field.replace_amplitudes(amps, field.time))
}

/// Pointwise |Ψ|².
pub fn density(field: &WaveField) -> Vec<f64> {
    field.amplitudes.iter().map(|a| a.norm_sqr()).collect()
}

/// Probability current `jₖ = Im(Ψ* ∂ₖΨ)/mₖ` with spectral derivatives.
pub fn current(field: &WaveField) -> Vec<[f64; MAX_DIM]> {
    let grid = field.grid();
    let mut j = vec![[0.0; MAX_DIM]; grid.len()];
    for k in 0..grid.ndim() {
        let d = spectral::derivative(grid, &field.amplitudes, k, 1);
        let m = field.masses[k];
        for (i, (psi, dpsi)) in field.amplitudes.iter().zip(&d).enumerate() {
            j[i][k] = (psi.conj() * dpsi).im / m;
        }
    }
    j
}

/// Discrete divergence of a current field, spectral along each axis.
pub fn divergence(grid: &Grid, j: &[[f64; MAX_DIM]]) -> Vec<f64> {
    let mut div = vec![0.0; grid.len()];
    for k in 0..grid.ndim() {
        let comp: Vec<C64> = j.iter().map(|v| C64::new(v[k], 0.0)).collect();
        // Ψ is odd about box walls, so j is odd too and the sine extension applies.
        let d = spectral::derivative(grid, &comp, k, 1);
        for (acc, v) in div.iter_mut().zip(&d) {
            *acc += v.re;
        }
    }
    div
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::grid::Axis;
    use std::f64::consts::PI;

    fn box_line(n: usize, l: f64) -> Grid {
        Grid::line(Axis::walled(n, 0.0, l).unwrap())
    }

    #[test]
    fn normalize_recovers_box_mode_prefactor() {
        let l = 2.5;
        let g = box_line(128, l);
        let f = WaveField::from_fn(g, vec![1.0], 0.0, |x| C64::new((PI * x[0] / l).sin(), 0.0)).unwrap();
        let n = normalize(&f).unwrap();
        let x = n.grid().axis(0).point(17);
        let ratio = n.amplitudes()[17].re / (PI * x / l).sin();
        assert!((ratio - (2.0 / l).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_projective_and_idempotent() {
        let g = box_line(64, 1.0);
        let f = WaveField::from_fn(g, vec![1.0], 0.0, |x| {
            C64::new((PI * x[0]).sin(), 0.2 * (2.0 * PI * x[0]).sin())
        })
        .unwrap();
        let a = normalize(&f).unwrap();
        let b = normalize(&a).unwrap();
        assert!(a.distance(&b) < 1e-12);
        let tripled = f.replace_amplitudes(f.amplitudes().iter().map(|z| z * 3.0).collect(), 0.0);
        let c = normalize(&tripled).unwrap();
        assert!(a.distance(&c) < 1e-12);
    }

    #[test]
    fn zero_field_is_rejected() {
        let g = box_line(16, 1.0);
        let f = WaveField::new(g, vec![C64::new(0.0, 0.0); 16], vec![1.0], 0.0).unwrap();
        assert!(matches!(normalize(&f), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn plane_wave_density_and_current() {
        let l = 4.0;
        let g = Grid::line(Axis::periodic(64, 0.0, l).unwrap());
        let p = 2.0 * PI * 3.0 / l;
        let m = 1.7;
        let f = WaveField::from_fn(g, vec![m], 0.0, |x| C64::from_polar(1.0 / l.sqrt(), p * x[0])).unwrap();
        for rho in density(&f) {
            assert!((rho - 1.0 / l).abs() < 1e-14);
        }
        for j in current(&f) {
            assert!((j[0] - p / (m * l)).abs() < 1e-12);
        }
    }

    #[test]
    fn real_field_carries_no_current() {
        let g = box_line(64, 1.0);
        let f = WaveField::from_fn(g, vec![1.0], 0.0, |x| C64::new((PI * x[0]).sin() - 0.5 * (3.0 * PI * x[0]).sin(), 0.0)).unwrap();
        assert!(current(&f).iter().all(|j| j[0].abs() < 1e-13));
    }
}
