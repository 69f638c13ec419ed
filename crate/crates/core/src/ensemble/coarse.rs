use crate::error::{Error, Result};
use crate::qstate::{Config, Grid, MAX_DIM};

use super::EnsembleState;

/// Points per axis of the Gauss–Legendre rule used for cell averages of `|Ψ|²`.
const CELL_QUADRATURE: usize = 8;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Uniform rectangular cells over a box in configuration space.
#[derive(Clone, Debug, PartialEq)]
pub struct Cells {
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<usize>,
}

impl Cells {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let ok = !lo.is_empty()
            && lo.len() <= MAX_DIM
            && lo.len() == hi.len()
            && lo.len() == counts.len()
            && lo.iter().zip(&hi).all(|(a, b)| b > a)
            && counts.iter().all(|&c| c > 0);
        if !ok {
            return Err(Error::InvalidGrid("cells need hi > lo and a positive count on every axis".into()));
        }
        Ok(Cells { lo, hi, counts })
    }

    /// `counts[k]` equal cells across the full extent of each grid axis.
    pub fn uniform(grid: &Grid, counts: &[usize]) -> Result<Self> {
        if counts.len() != grid.ndim() {
            return Err(Error::InvalidGrid(format!(
                "{} cell counts for a {}-axis grid",
                counts.len(),
                grid.ndim()
            )));
        }
        Cells::new(
            grid.axes().iter().map(|a| a.lo()).collect(),
            grid.axes().iter().map(|a| a.hi()).collect(),
            counts.to_vec(),
        )
    }

    pub fn ndim(&self) -> usize {
        self.lo.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.counts[axis] as f64
    }

    pub fn volume(&self) -> f64 {
        (0..self.ndim()).map(|k| self.width(k)).product()
    }

    /// Flat (row-major) index of the cell holding `q`; the upper faces belong
    /// to the last cell.
    pub fn index(&self, q: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for k in 0..self.ndim() {
            if !(q[k] >= self.lo[k] && q[k] <= self.hi[k]) {
                return None;
            }
            let j = (((q[k] - self.lo[k]) / self.width(k)) as usize).min(self.counts[k] - 1);
            flat = flat * self.counts[k] + j;
        }
        Some(flat)
    }

    /// Lower corner of cell `flat`.
    pub fn corner(&self, flat: usize) -> Config {
        let mut c = Config::zeros(self.ndim());
        let mut rest = flat;
        for k in (0..self.ndim()).rev() {
            let j = rest % self.counts[k];
            rest /= self.counts[k];
            c[k] = self.lo[k] + j as f64 * self.width(k);
        }
        c
    }

    /// Cell averages of `f`, by tensor-product Gauss–Legendre quadrature.
    pub fn average(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        use rayon::prelude::*;
        let (x, w) = gauss_legendre(CELL_QUADRATURE);
        let d = self.ndim();
        let nq = CELL_QUADRATURE.pow(d as u32);
        (0..self.len())
            .into_par_iter()
            .map(|cell| {
                let c = self.corner(cell);
                let mut s = 0.0;
                for node in 0..nq {
                    let mut q = Config::zeros(d);
                    let mut wt = 1.0;
                    let mut r = node;
                    for k in 0..d {
                        let i = r % CELL_QUADRATURE;
                        r /= CELL_QUADRATURE;
                        q[k] = c[k] + 0.5 * (x[i] + 1.0) * self.width(k);
                        wt *= 0.5 * w[i];
                    }
                    s += wt * f(&q);
                }
                s
            })
            .collect()
    }
}

/// Coarse-grained ensemble density `P̄` and reference density `D̄` on the same cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseGrain {
    pub cells: Cells,
    pub p_bar: Vec<f64>,
    pub d_bar: Vec<f64>,
    /// Members counted into `P̄`.
    pub n_effective: usize,
}

impl CoarseGrain {
    /// `P̄` from the active members of `ens`, `D̄` as cell averages of `reference`.
    pub fn new(cells: &Cells, ens: &EnsembleState, reference: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let mut counts = vec![0usize; cells.len()];
        let mut n = 0;
        for q in ens.active() {
            if let Some(c) = cells.index(q) {
                counts[c] += 1;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::BadDensity("no active members inside the cells".into()));
        }
        let dv = cells.volume();
        let p_bar = counts.iter().map(|&c| c as f64 / (n as f64 * dv)).collect();
        let mut cg = Self::from_densities(cells.clone(), p_bar, cells.average(reference))?;
        cg.n_effective = n;
        Ok(cg)
    }

    /// Wrap precomputed cell densities, checking normalization and signs.
    pub fn from_densities(cells: Cells, p_bar: Vec<f64>, d_bar: Vec<f64>) -> Result<Self> {
        if p_bar.len() != cells.len() || d_bar.len() != cells.len() {
            return Err(Error::BadDensity("one value per cell required".into()));
        }
        if p_bar.iter().chain(&d_bar).any(|&v| !(v >= 0.0)) {
            return Err(Error::BadDensity("cell densities must be non-negative".into()));
        }
        let mass: f64 = p_bar.iter().sum::<f64>() * cells.volume();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::BadDensity(format!("coarse-grained P integrates to {mass}")));
        }
        Ok(CoarseGrain {
            cells,
            p_bar,
            d_bar,
            n_effective: 0,
        })
    }
}

/// `H̄ = Σ P̄ ln(P̄/D̄) ΔV`; empty cells contribute nothing.
pub fn h_function(cg: &CoarseGrain) -> Result<f64> {
    let mut h = 0.0;
    for (cell, (&p, &d)) in cg.p_bar.iter().zip(&cg.d_bar).enumerate() {
        if p > 0.0 {
            if !(d > 0.0) {
                return Err(Error::SupportMismatch { cell });
            }
            h += p * (p / d).ln();
        }
    }
    Ok((h * cg.cells.volume()).max(0.0))
}

/// `½ Σ |P̄ - D̄| ΔV`.
pub fn total_variation(cg: &CoarseGrain) -> f64 {
    0.5 * cg.p_bar.iter().zip(&cg.d_bar).map(|(p, d)| (p - d).abs()).sum::<f64>() * cg.cells.volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        for n in 1..=10 {
            let (x, w) = gauss_legendre(n);
            for p in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn cells_index_and_corners() {
        let c = Cells::new(vec![0.0, -1.0], vec![2.0, 1.0], vec![4, 2]).unwrap();
        assert_eq!(c.len(), 8);
        assert_eq!(c.index(&[0.6, 0.5]), Some(3));
        assert_eq!(c.index(&[2.0, 1.0]), Some(7));
        assert_eq!(c.index(&[2.1, 0.0]), None);
        assert_eq!(c.corner(3)[0], 0.5);
        assert_eq!(c.corner(3)[1], 0.0);
    }

    // Uniform P̄ against the coarse-grained box ground state on 32 cells;
    // reference value from a 50-digit quadrature.
    #[test]
    fn h_of_uniform_against_ground_state() {
        let cells = Cells::new(vec![0.0], vec![PI], vec![32]).unwrap();
        let d = cells.average(|q| 2.0 / PI * q[0].sin().powi(2));
        let cg = CoarseGrain::from_densities(cells, vec![1.0 / PI; 32], d).unwrap();
        let h = h_function(&cg).unwrap();
        assert!((h - H_UNIFORM_VS_GROUND).abs() < 1e-8, "{h}");
    }
    const H_UNIFORM_VS_GROUND: f64 = 0.628_615_880_915_967_9;

    #[test]
    fn h_vanishes_at_equality_and_flags_support() {
        let cells = Cells::new(vec![0.0], vec![1.0], vec![4]).unwrap();
        let p = vec![0.5, 1.5, 2.0, 0.0];
        let cg = CoarseGrain::from_densities(cells.clone(), p.clone(), p.clone()).unwrap();
        assert_eq!(h_function(&cg).unwrap(), 0.0);
        assert_eq!(total_variation(&cg), 0.0);
        let cg = CoarseGrain::from_densities(cells, p, vec![1.0, 1.0, 2.0, 0.0]).unwrap();
        assert!(h_function(&cg).unwrap() > 0.0);
        let bad = CoarseGrain {
            d_bar: vec![0.0, 1.0, 2.0, 1.0],
            ..cg
        };
        assert!(matches!(h_function(&bad), Err(Error::SupportMismatch { cell: 0 })));
    }

    proptest! {
        #[test]
        fn h_is_non_negative(p in prop::collection::vec(0.0f64..1.0, 8), d in prop::collection::vec(0.01f64..1.0, 8)) {
            let cells = Cells::new(vec![0.0], vec![2.0], vec![8]).unwrap();
            let norm = |v: &[f64]| { let s: f64 = v.iter().sum::<f64>() * 0.25; v.iter().map(|x| x / s).collect::<Vec<_>>() };
            prop_assume!(p.iter().sum::<f64>() > 1e-3);
            let cg = CoarseGrain::from_densities(cells, norm(&p), norm(&d)).unwrap();
            prop_assert!(h_function(&cg).unwrap() >= 0.0);
            let tv = total_variation(&cg);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        }
    }
}
