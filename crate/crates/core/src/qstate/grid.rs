use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of configuration axes (system plus pointer).
pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Points at `lo + j*dx`; the axis wraps around.
    Periodic,
    /// Hard walls at `lo` and `hi`; points at cell centres `lo + (j + 1/2)*dx`.
    Box,
}

impl Boundary {
    pub fn code(self) -> u8 {
        match self {
            Boundary::Periodic => 0,
            Boundary::Box => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Boundary::Periodic),
            1 => Some(Boundary::Box),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    npoints: usize,
    lo: f64,
    hi: f64,
    boundary: Boundary,
    spacing: f64,
}

impl Axis {
    pub fn new(npoints: usize, lo: f64, hi: f64, boundary: Boundary) -> Result<Self> {
        if npoints < 8 || !npoints.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "npoints must be a power of two >= 8, got {npoints}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidGrid(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Axis {
            npoints,
            lo,
            hi,
            boundary,
            spacing: (hi - lo) / npoints as f64,
        })
    }

    pub fn periodic(npoints: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(npoints, lo, hi, Boundary::Periodic)
    }

    pub fn walled(npoints: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(npoints, lo, hi, Boundary::Box)
    }

    pub fn npoints(&self) -> usize {
        self.npoints
    }
    pub fn lo(&self) -> f64 {
        self.lo
    }
    pub fn hi(&self) -> f64 {
        self.hi
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Offset of the first sample from `lo`.
    pub fn sample_offset(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => 0.0,
            Boundary::Box => 0.5 * self.spacing,
        }
    }

    pub fn point(&self, j: usize) -> f64 {
        self.lo + self.sample_offset() + j as f64 * self.spacing
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.npoints).map(|j| self.point(j)).collect()
    }

    /// Lower edge of the cell represented by sample `j` (cells are centred on samples).
    pub fn cell_lo(&self, j: usize) -> f64 {
        self.point(j) - 0.5 * self.spacing
    }

    /// Map a coordinate into `[lo, hi)` on periodic axes; box axes are left as is.
    pub fn wrap(&self, x: f64) -> f64 {
        match self.boundary {
            Boundary::Periodic => {
                let l = self.length();
                let mut y = (x - self.lo).rem_euclid(l) + self.lo;
                if y >= self.hi {
                    y = self.lo;
                }
                y
            }
            Boundary::Box => x,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Signed separation `b - a`, using the minimum image on periodic axes.
    pub fn displacement(&self, a: f64, b: f64) -> f64 {
        let d = b - a;
        match self.boundary {
            Boundary::Periodic => {
                let l = self.length();
                d - l * (d / l).round()
            }
            Boundary::Box => d,
        }
    }
}

/// Rectangular grid over configuration space, row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "grid needs 1..={MAX_DIM} axes, got {}",
                axes.len()
            )));
        }
        Ok(Grid { axes })
    }

    pub fn line(axis: Axis) -> Self {
        Grid { axes: vec![axis] }
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::npoints).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::npoints).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(Axis::length).product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(f64::INFINITY, f64::min)
    }

    /// Cartesian product `self ⊗ other` (other's axes appended).
    pub fn product(&self, other: &Grid) -> Result<Grid> {
        let mut axes = self.axes.clone();
        axes.extend_from_slice(&other.axes);
        Grid::new(axes)
    }

    pub fn strides(&self) -> [usize; MAX_DIM] {
        let mut strides = [0; MAX_DIM];
        let mut s = 1;
        for k in (0..self.ndim()).rev() {
            strides[k] = s;
            s *= self.axes[k].npoints();
        }
        strides
    }

    pub fn unravel(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for k in (0..self.ndim()).rev() {
            let n = self.axes[k].npoints();
            idx[k] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Config {
        let idx = self.unravel(flat);
        let mut c = Config::zeros(self.ndim());
        for (k, axis) in self.axes.iter().enumerate() {
            c[k] = axis.point(idx[k]);
        }
        c
    }

    pub fn wrap(&self, q: &mut Config) {
        for (k, axis) in self.axes.iter().enumerate() {
            q[k] = axis.wrap(q[k]);
        }
    }

    pub fn contains(&self, q: &Config) -> bool {
        q.dim() == self.ndim() && self.axes.iter().zip(q.iter()).all(|(a, &x)| a.contains(x))
    }

    /// Flat index of the cell containing `q`, if any.
    pub fn locate(&self, q: &Config) -> Option<usize> {
        let mut flat = 0;
        for (k, axis) in self.axes.iter().enumerate() {
            let u = (axis.wrap(q[k]) - axis.lo()) / axis.spacing();
            let j = match axis.boundary() {
                Boundary::Box => u.floor(),
                Boundary::Periodic => (u + 0.5).floor(),
            };
            let n = axis.npoints() as f64;
            let j = match axis.boundary() {
                Boundary::Periodic => j.rem_euclid(n),
                Boundary::Box if (0.0..n).contains(&j) => j,
                Boundary::Box => return None,
            };
            flat = flat * axis.npoints() + j as usize;
        }
        Some(flat)
    }
}

/// A point in configuration space with up to [`MAX_DIM`] coordinates.
#[derive(Clone, Copy, PartialEq)]
pub struct Config {
    coords: [f64; MAX_DIM],
    dim: usize,
}

impl Config {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "configuration dimension must be 1..={MAX_DIM}"
        );
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Config {
            coords: c,
            dim: coords.len(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Config {
            coords: [0.0; MAX_DIM],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `self + h * v`
    pub fn axpy(&self, h: f64, v: &Config) -> Config {
        let mut out = *self;
        for k in 0..self.dim {
            out.coords[k] += h * v.coords[k];
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Append a coordinate (e.g. a pointer position).
    pub fn extend(&self, x: f64) -> Config {
        let mut out = Config::zeros(self.dim + 1);
        out.coords[..self.dim].copy_from_slice(&self.coords[..self.dim]);
        out.coords[self.dim] = x;
        out
    }
}

impl Deref for Config {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords[..self.dim]
    }
}

impl DerefMut for Config {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.coords[..self.dim]
    }
}

impl std::fmt::Debug for Config {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

impl From<f64> for Config {
    fn from(x: f64) -> Self {
        Config::new(&[x])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_axes() {
        assert!(Axis::periodic(12, 0.0, 1.0).is_err());
        assert!(Axis::periodic(4, 0.0, 1.0).is_err());
        assert!(Axis::walled(16, 1.0, 1.0).is_err());
        assert!(Axis::walled(16, 0.0, 2.0).is_ok());
    }

    #[test]
    fn box_points_are_cell_centred() {
        let a = Axis::walled(8, 0.0, 8.0).unwrap();
        assert_eq!(a.point(0), 0.5);
        assert_eq!(a.point(7), 7.5);
        assert_eq!(a.cell_lo(0), 0.0);
    }

    #[test]
    fn periodic_wrap_and_displacement() {
        let a = Axis::periodic(16, -1.0, 1.0).unwrap();
        assert!((a.wrap(1.25) + 0.75).abs() < 1e-15);
        assert!((a.wrap(-1.5) - 0.5).abs() < 1e-15);
        assert!((a.displacement(0.9, -0.9) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn locate_inverts_point() {
        let g = Grid::new(vec![
            Axis::walled(8, 0.0, 1.0).unwrap(),
            Axis::periodic(16, -2.0, 2.0).unwrap(),
        ])
        .unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.locate(&g.point(flat)), Some(flat));
        }
        assert_eq!(g.locate(&Config::new(&[1.5, 0.0])), None);
    }
}
