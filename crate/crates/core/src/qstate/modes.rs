use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::qstate::grid::{Boundary, Grid, MAX_DIM};
use crate::qstate::jet::{Factor, Jet, JetOrder};
use crate::qstate::spectral::TrigSeries;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// Products of `√(2/L) sin(mπ(x-lo)/L)`, `m ≥ 1`, on box axes.
    BoxSine,
    /// Products of `exp(i 2πm(x-lo)/L)/√L` on periodic axes.
    PlaneWave,
    /// Arbitrary orthonormal functions given by their grid samples.
    CustomTabulated,
}

#[derive(Clone, Debug)]
enum Basis {
    Analytic {
        kind: BasisKind,
        quanta: Vec<[i64; MAX_DIM]>,
    },
    Tabulated {
        samples: Arc<Vec<Vec<C64>>>,
        series: Arc<Vec<TrigSeries>>,
    },
}

/// Coefficients over an orthonormal eigenbasis, with eigenvalues of the
/// measured observable and energies for exact time evolution.
#[derive(Clone, Debug)]
pub struct ModeExpansion {
    basis: Basis,
    grid: Grid,
    masses: Vec<f64>,
    coefficients: Vec<C64>,
    eigenvalues: Vec<f64>,
    energies: Vec<f64>,
}

/// Rescale coefficients to unit Σ|cₙ|².
pub fn normalize_coefficients(c: &[C64]) -> Vec<C64> {
    let n = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    c.iter().map(|z| z / n).collect()
}

fn check_coefficients(c: &[C64]) -> Result<()> {
    let s: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    if c.is_empty() || (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidState(format!(
            "mode coefficients must satisfy Σ|c|² = 1 (got {s})"
        )));
    }
    Ok(())
}

impl ModeExpansion {
    fn analytic(
        kind: BasisKind,
        grid: Grid,
        masses: Vec<f64>,
        quanta: Vec<Vec<i64>>,
        coefficients: Vec<C64>,
    ) -> Result<Self> {
        let dim = grid.ndim();
        let want = match kind {
            BasisKind::BoxSine => Boundary::Box,
            _ => Boundary::Periodic,
        };
        if let Some(k) = grid.axes().iter().position(|a| a.boundary() != want) {
            return Err(Error::BasisMismatch(format!(
                "{kind:?} basis needs {want:?} axes, axis {k} is {:?}",
                grid.axis(k).boundary()
            )));
        }
        if masses.len() != dim || masses.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidState("one positive mass per axis required".into()));
        }
        if quanta.len() != coefficients.len() {
            return Err(Error::InvalidState("one coefficient per mode required".into()));
        }
        check_coefficients(&coefficients)?;
        let mut q = Vec::with_capacity(quanta.len());
        for mode in &quanta {
            if mode.len() != dim {
                return Err(Error::BasisMismatch(format!(
                    "mode {mode:?} has {} quantum numbers on a {dim}-axis grid",
                    mode.len()
                )));
            }
            let mut arr = [0i64; MAX_DIM];
            for (k, &m) in mode.iter().enumerate() {
                let n = grid.axis(k).npoints() as i64;
                let resolvable = match kind {
                    BasisKind::BoxSine => m >= 1 && m < n,
                    _ => 2 * m.abs() < n,
                };
                if !resolvable {
                    return Err(Error::BasisMismatch(format!(
                        "quantum number {m} is not resolvable on axis {k} with {n} points"
                    )));
                }
                arr[k] = m;
            }
            q.push(arr);
        }
        let energies = q
            .iter()
            .map(|m| {
                (0..dim)
                    .map(|k| {
                        let kk = wavenumber(kind, m[k], grid.axis(k).length());
                        kk * kk / (2.0 * masses[k])
                    })
                    .sum()
            })
            .collect::<Vec<f64>>();
        Ok(ModeExpansion {
            basis: Basis::Analytic { kind, quanta: q },
            grid,
            masses,
            coefficients,
            eigenvalues: energies.clone(),
            energies,
        })
    }

    /// Box eigenmodes; `quanta[n]` lists one quantum number per axis.
    /// Eigenvalues default to the energies.
    pub fn box_sine(grid: Grid, masses: Vec<f64>, quanta: Vec<Vec<i64>>, coefficients: Vec<C64>) -> Result<Self> {
        Self::analytic(BasisKind::BoxSine, grid, masses, quanta, coefficients)
    }

    /// Plane waves with wavenumbers `2π m / L`. Eigenvalues default to the energies.
    pub fn plane_wave(grid: Grid, masses: Vec<f64>, quanta: Vec<Vec<i64>>, coefficients: Vec<C64>) -> Result<Self> {
        Self::analytic(BasisKind::PlaneWave, grid, masses, quanta, coefficients)
    }

    /// Tabulated orthonormal modes with given energies (eigenvalues default to them).
    pub fn tabulated(
        grid: Grid,
        masses: Vec<f64>,
        modes: Vec<Vec<C64>>,
        energies: Vec<f64>,
        coefficients: Vec<C64>,
    ) -> Result<Self> {
        if modes.len() != coefficients.len() || modes.len() != energies.len() {
            return Err(Error::InvalidState("modes, energies and coefficients differ in length".into()));
        }
        if masses.len() != grid.ndim() {
            return Err(Error::InvalidState("one mass per axis required".into()));
        }
        check_coefficients(&coefficients)?;
        let dv = grid.cell_volume();
        for (a, ma) in modes.iter().enumerate() {
            if ma.len() != grid.len() {
                return Err(Error::BasisMismatch(format!(
                    "mode {a} has {} samples for {} grid points",
                    ma.len(),
                    grid.len()
                )));
            }
            for (b, mb) in modes.iter().enumerate().skip(a) {
                let ip: C64 = ma.iter().zip(mb).map(|(x, y)| x.conj() * y).sum::<C64>() * dv;
                let target = if a == b { 1.0 } else { 0.0 };
                if (ip - target).norm() > 1e-8 {
                    return Err(Error::InvalidState(format!(
                        "tabulated modes {a},{b} are not orthonormal (⟨a|b⟩ = {ip})"
                    )));
                }
            }
        }
        let series = modes
            .iter()
            .map(|m| TrigSeries::from_samples(&grid, m, 1e-15))
            .collect();
        Ok(ModeExpansion {
            basis: Basis::Tabulated {
                samples: Arc::new(modes),
                series: Arc::new(series),
            },
            grid,
            masses,
            coefficients,
            eigenvalues: energies.clone(),
            energies,
        })
    }

    /// Replace the observable eigenvalues ωₙ.
    pub fn with_eigenvalues(mut self, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() != self.coefficients.len() {
            return Err(Error::InvalidState("one eigenvalue per mode required".into()));
        }
        self.eigenvalues = eigenvalues;
        Ok(self)
    }

    pub(crate) fn with_coefficients_unchecked(&self, coefficients: Vec<C64>) -> Self {
        let mut out = self.clone();
        out.coefficients = coefficients;
        out
    }

    pub fn basis_kind(&self) -> BasisKind {
        match &self.basis {
            Basis::Analytic { kind, .. } => *kind,
            Basis::Tabulated { .. } => BasisKind::CustomTabulated,
        }
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
    pub fn coefficients(&self) -> &[C64] {
        &self.coefficients
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }
    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Per-axis quantum numbers of analytic modes.
    pub fn quanta(&self) -> Option<&[[i64; MAX_DIM]]> {
        match &self.basis {
            Basis::Analytic { quanta, .. } => Some(quanta),
            Basis::Tabulated { .. } => None,
        }
    }

    /// Grid samples of mode `n` (unit-normalized).
    pub fn mode_samples(&self, n: usize) -> Vec<C64> {
        match &self.basis {
            Basis::Tabulated { samples, .. } => samples[n].clone(),
            Basis::Analytic { .. } => (0..self.grid.len())
                .map(|i| self.mode_jet(n, &self.grid.point(i), JetOrder::Value).value)
                .collect(),
        }
    }

    /// Derivative stack of the one-dimensional factor of analytic mode `n` along `axis`.
    pub fn axis_factor(&self, n: usize, axis: usize, x: f64) -> Factor {
        match &self.basis {
            Basis::Analytic { kind, quanta } => {
                let ax = self.grid.axis(axis);
                analytic_factor(*kind, quanta[n][axis], ax.lo(), ax.length(), x)
            }
            Basis::Tabulated { .. } => panic!("tabulated modes are not separable"),
        }
    }

    /// φₙ and its derivatives at an off-grid point.
    pub fn mode_jet(&self, n: usize, q: &[f64], order: JetOrder) -> Jet {
        match &self.basis {
            Basis::Analytic { .. } => {
                let dim = self.grid.ndim();
                let mut f = [[C64::new(0.0, 0.0); 4]; MAX_DIM];
                for (k, slot) in f.iter_mut().enumerate().take(dim) {
                    *slot = self.axis_factor(n, k, q[k]);
                }
                let mut jet = Jet::zero(dim, order);
                jet.add_separable(C64::new(1.0, 0.0), &f[..dim]);
                jet
            }
            Basis::Tabulated { series, .. } => series[n].eval(q, order),
        }
    }

    /// Sup norm bound of |φₙ|.
    pub fn mode_sup(&self, n: usize) -> f64 {
        match &self.basis {
            Basis::Analytic { kind, .. } => self
                .grid
                .axes()
                .iter()
                .map(|a| match kind {
                    BasisKind::BoxSine => (2.0 / a.length()).sqrt(),
                    _ => 1.0 / a.length().sqrt(),
                })
                .product(),
            Basis::Tabulated { samples, .. } => samples[n].iter().map(|z| z.norm()).fold(0.0, f64::max),
        }
    }

    /// The state projected onto the modes listed in `keep`, renormalized.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() || keep.iter().any(|&n| n >= self.len()) {
            return Err(Error::InvalidState(format!("cannot restrict {} modes to {keep:?}", self.len())));
        }
        let c: Vec<C64> = keep.iter().map(|&n| self.coefficients[n]).collect();
        if c.iter().all(|z| z.norm_sqr() == 0.0) {
            return Err(Error::ZeroNorm(0.0));
        }
        let pick = |v: &[f64]| keep.iter().map(|&n| v[n]).collect::<Vec<f64>>();
        let basis = match &self.basis {
            Basis::Analytic { kind, quanta } => Basis::Analytic {
                kind: *kind,
                quanta: keep.iter().map(|&n| quanta[n]).collect(),
            },
            Basis::Tabulated { samples, series } => Basis::Tabulated {
                samples: Arc::new(keep.iter().map(|&n| samples[n].clone()).collect()),
                series: Arc::new(keep.iter().map(|&n| series[n].clone()).collect()),
            },
        };
        Ok(ModeExpansion {
            basis,
            grid: self.grid.clone(),
            masses: self.masses.clone(),
            coefficients: normalize_coefficients(&c),
            eigenvalues: pick(&self.eigenvalues),
            energies: pick(&self.energies),
        })
    }
}

pub(crate) fn wavenumber(kind: BasisKind, m: i64, length: f64) -> f64 {
    match kind {
        BasisKind::BoxSine => m as f64 * PI / length,
        _ => 2.0 * PI * m as f64 / length,
    }
}

pub(crate) fn analytic_factor(kind: BasisKind, m: i64, lo: f64, length: f64, x: f64) -> Factor {
    let k = wavenumber(kind, m, length);
    let (s, c) = (k * (x - lo)).sin_cos();
    match kind {
        BasisKind::BoxSine => {
            let n = (2.0 / length).sqrt();
            [
                C64::new(n * s, 0.0),
                C64::new(n * k * c, 0.0),
                C64::new(-n * k * k * s, 0.0),
                C64::new(-n * k * k * k * c, 0.0),
            ]
        }
        _ => {
            let e = C64::new(c, s) / length.sqrt();
            let ik = C64::new(0.0, k);
            [e, e * ik, e * ik * ik, e * ik * ik * ik]
        }
    }
}
