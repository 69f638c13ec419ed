//! FFT-based differentiation and band-limited interpolation on grids.
//!
//! Periodic axes use the plain Fourier series of the samples. Box axes are
//! extended to twice their length by odd reflection about the walls, which
//! turns the Fourier series into a sine series vanishing at both walls.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::qstate::grid::{Axis, Boundary, Grid, MAX_DIM};
use crate::qstate::jet::{Factor, Jet, JetOrder};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Apply `op` to every 1-D line of `data` along `axis`.
pub(crate) fn for_each_line(
    shape: &[usize],
    data: &mut [C64],
    axis: usize,
    mut op: impl FnMut(&mut Vec<C64>),
) {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut line = Vec::with_capacity(2 * n);
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            line.clear();
            line.extend((0..n).map(|j| data[base + j * stride]));
            op(&mut line);
            for j in 0..n {
                data[base + j * stride] = line[j];
            }
        }
    }
}

/// Signed frequency index for FFT bin `k` of a length-`m` transform.
pub(crate) fn signed_index(k: usize, m: usize) -> i64 {
    if k <= m / 2 {
        k as i64
    } else {
        k as i64 - m as i64
    }
}

/// Length of the periodic extension used for an axis.
fn extended_len(axis: &Axis) -> usize {
    match axis.boundary() {
        Boundary::Periodic => axis.npoints(),
        Boundary::Box => 2 * axis.npoints(),
    }
}

fn extend_line(line: &mut Vec<C64>, boundary: Boundary) {
    if boundary == Boundary::Box {
        let n = line.len();
        for j in (0..n).rev() {
            let v = -line[j];
            line.push(v);
        }
    }
}

/// Derivative of order `order` along `axis`, evaluated at the grid samples.
pub fn derivative(grid: &Grid, values: &[C64], axis: usize, order: u32) -> Vec<C64> {
    let ax = grid.axis(axis);
    let m = extended_len(ax);
    let n = ax.npoints();
    let base_k = 2.0 * PI / (m as f64 * ax.spacing());
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut out = values.to_vec();
    let shape = grid.shape();
    for_each_line(&shape, &mut out, axis, |line| {
        extend_line(line, ax.boundary());
        fwd.process(line);
        for (k, c) in line.iter_mut().enumerate() {
            let s = signed_index(k, m);
            if order % 2 == 1 && 2 * k == m {
                *c = ZERO;
                continue;
            }
            let factor = C64::new(0.0, base_k * s as f64).powu(order);
            *c *= factor / m as f64;
        }
        inv.process(line);
        line.truncate(n);
    });
    out
}

/// Sparse band-limited interpolant of gridded samples, evaluable off-grid
/// together with derivatives up to third order.
#[derive(Clone, Debug)]
pub struct TrigSeries {
    dim: usize,
    origin: [f64; MAX_DIM],
    base_k: [f64; MAX_DIM],
    max_index: [i64; MAX_DIM],
    period: [f64; MAX_DIM],
    terms: Vec<(C64, [i64; MAX_DIM])>,
}

impl TrigSeries {
    /// Build the interpolant, dropping coefficients below `rel_cutoff * max|c|`.
    pub fn from_samples(grid: &Grid, values: &[C64], rel_cutoff: f64) -> Self {
        assert_eq!(values.len(), grid.len());
        let dim = grid.ndim();
        let ext_shape: Vec<usize> = grid.axes().iter().map(extended_len).collect();
        // Spread samples into the extended array one axis at a time.
        let mut data = values.to_vec();
        let mut shape = grid.shape();
        for k in 0..dim {
            let ax = grid.axis(k);
            if ax.boundary() == Boundary::Box {
                let mut new_shape = shape.clone();
                new_shape[k] *= 2;
                let total: usize = new_shape.iter().product();
                let mut ext = vec![ZERO; total];
                let stride: usize = shape[k + 1..].iter().product();
                let outer: usize = shape[..k].iter().product();
                let n = shape[k];
                for o in 0..outer {
                    for s in 0..stride {
                        for j in 0..n {
                            let v = data[o * n * stride + j * stride + s];
                            ext[o * 2 * n * stride + j * stride + s] = v;
                            ext[o * 2 * n * stride + (2 * n - 1 - j) * stride + s] = -v;
                        }
                    }
                }
                data = ext;
                shape = new_shape;
            }
        }
        let mut planner = FftPlanner::new();
        for k in 0..dim {
            let fft: Arc<dyn Fft<f64>> = planner.plan_fft_forward(shape[k]);
            for_each_line(&shape, &mut data, k, |line| fft.process(line));
        }
        let total_norm: f64 = ext_shape.iter().map(|&m| m as f64).product();
        let maxc = data.iter().map(|c| c.norm()).fold(0.0, f64::max) / total_norm;
        let cutoff = rel_cutoff * maxc;

        let mut origin = [0.0; MAX_DIM];
        let mut base_k = [0.0; MAX_DIM];
        let mut period = [0.0; MAX_DIM];
        for k in 0..dim {
            let ax = grid.axis(k);
            origin[k] = ax.lo() + ax.sample_offset();
            period[k] = ext_shape[k] as f64 * ax.spacing();
            base_k[k] = 2.0 * PI / period[k];
        }
        let mut terms = Vec::new();
        let mut max_index = [0i64; MAX_DIM];
        let g = Grid::new(
            ext_shape
                .iter()
                .map(|&m| Axis::periodic(m, 0.0, m as f64).expect("extended axis"))
                .collect(),
        )
        .expect("extended grid");
        for (flat, c) in data.iter().enumerate() {
            let c = *c / total_norm;
            if c.norm() <= cutoff || c.norm() == 0.0 {
                continue;
            }
            let idx = g.unravel(flat);
            // Nyquist bins are split evenly between +m/2 and -m/2.
            let mut variants: Vec<([i64; MAX_DIM], f64)> = vec![([0; MAX_DIM], 1.0)];
            for k in 0..dim {
                let m = ext_shape[k];
                let s = signed_index(idx[k], m);
                let mut next = Vec::with_capacity(variants.len() * 2);
                for (v, w) in variants {
                    if 2 * idx[k] == m {
                        let mut a = v;
                        a[k] = s;
                        let mut b = v;
                        b[k] = -s;
                        next.push((a, 0.5 * w));
                        next.push((b, 0.5 * w));
                    } else {
                        let mut a = v;
                        a[k] = s;
                        next.push((a, w));
                    }
                }
                variants = next;
            }
            for (v, w) in variants {
                for k in 0..dim {
                    max_index[k] = max_index[k].max(v[k].abs());
                }
                terms.push((c * w, v));
            }
        }
        TrigSeries {
            dim,
            origin,
            base_k,
            max_index,
            period,
            terms,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Coefficients as `(amplitude, wavenumbers)` pairs; the series is
    /// `Σ c·exp(i k·(x - origin))`.
    pub fn terms(&self) -> impl Iterator<Item = (C64, [f64; MAX_DIM])> + '_ {
        self.terms.iter().map(move |(c, idx)| {
            let mut k = [0.0; MAX_DIM];
            for a in 0..self.dim {
                k[a] = idx[a] as f64 * self.base_k[a];
            }
            (*c, k)
        })
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn eval(&self, q: &[f64], order: JetOrder) -> Jet {
        let dim = self.dim;
        let mut powers: [Vec<C64>; MAX_DIM] = Default::default();
        for a in 0..dim {
            let kmax = self.max_index[a];
            let x = (q[a] - self.origin[a]).rem_euclid(self.period[a]);
            let mut pw = vec![ZERO; (2 * kmax + 1) as usize];
            pw[kmax as usize] = C64::new(1.0, 0.0);
            let step = C64::from_polar(1.0, self.base_k[a] * x);
            let mut cur = C64::new(1.0, 0.0);
            for j in 1..=kmax {
                cur = if j % 32 == 0 {
                    C64::from_polar(1.0, self.base_k[a] * x * j as f64)
                } else {
                    cur * step
                };
                pw[(kmax + j) as usize] = cur;
                pw[(kmax - j) as usize] = cur.conj();
            }
            powers[a] = pw;
        }
        let mut jet = Jet::zero(dim, order);
        let mut factors = [[ZERO; 4]; MAX_DIM];
        for (c, idx) in &self.terms {
            for a in 0..dim {
                let e = powers[a][(idx[a] + self.max_index[a]) as usize];
                let ik = C64::new(0.0, idx[a] as f64 * self.base_k[a]);
                factors[a] = derivative_stack(e, ik);
            }
            jet.add_separable(*c, &factors[..dim]);
        }
        jet
    }
}

fn derivative_stack(e: C64, ik: C64) -> Factor {
    let e1 = e * ik;
    let e2 = e1 * ik;
    [e, e1, e2, e2 * ik]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, lo: f64, hi: f64, b: Boundary) -> Grid {
        Grid::line(Axis::new(n, lo, hi, b).unwrap())
    }

    #[test]
    fn periodic_derivative_of_plane_wave() {
        let g = line(64, 0.0, 2.0 * PI, Boundary::Periodic);
        let vals: Vec<C64> = g
            .axis(0)
            .points()
            .iter()
            .map(|&x| C64::from_polar(1.0, 3.0 * x))
            .collect();
        let d = derivative(&g, &vals, 0, 1);
        for (v, dv) in vals.iter().zip(&d) {
            assert!((dv - C64::new(0.0, 3.0) * v).norm() < 1e-12);
        }
    }

    #[test]
    fn box_derivative_of_sine_mode() {
        let l = 3.0;
        let g = line(64, 0.0, l, Boundary::Box);
        let k = 2.0 * PI / l;
        let xs = g.axis(0).points();
        let vals: Vec<C64> = xs.iter().map(|&x| C64::new((k * x).sin(), 0.0)).collect();
        let d = derivative(&g, &vals, 0, 1);
        for (x, dv) in xs.iter().zip(&d) {
            assert!((dv.re - k * (k * x).cos()).abs() < 1e-11, "{x}");
        }
        let d2 = derivative(&g, &vals, 0, 2);
        for (x, dv) in xs.iter().zip(&d2) {
            assert!((dv.re + k * k * (k * x).sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolant_reproduces_off_grid_values() {
        let l = 2.0;
        let g = line(32, 0.0, l, Boundary::Box);
        let f = |x: f64| (PI * x / l).sin() + 0.3 * (3.0 * PI * x / l).sin();
        let vals: Vec<C64> = g.axis(0).points().iter().map(|&x| C64::new(f(x), 0.0)).collect();
        let s = TrigSeries::from_samples(&g, &vals, 0.0);
        for &x in &[0.0, 0.137, 0.9, 1.77, 2.0] {
            let j = s.eval(&[x], JetOrder::Gradient);
            assert!((j.value.re - f(x)).abs() < 1e-12, "{x}");
            let df = PI / l * (PI * x / l).cos() + 0.9 * PI / l * (3.0 * PI * x / l).cos();
            assert!((j.grad[0].re - df).abs() < 1e-11);
        }
    }

    #[test]
    fn interpolant_two_dimensional_periodic() {
        let g = Grid::new(vec![
            Axis::periodic(16, 0.0, 2.0 * PI).unwrap(),
            Axis::periodic(8, -PI, PI).unwrap(),
        ])
        .unwrap();
        let f = |x: f64, y: f64| C64::from_polar(1.0, 2.0 * x - y) + C64::new(x.cos() * (2.0 * y).sin(), 0.0);
        let vals: Vec<C64> = (0..g.len())
            .map(|i| {
                let p = g.point(i);
                f(p[0], p[1])
            })
            .collect();
        let s = TrigSeries::from_samples(&g, &vals, 1e-14);
        let j = s.eval(&[0.4, 1.1], JetOrder::Hessian);
        assert!((j.value - f(0.4, 1.1)).norm() < 1e-12);
        let dy = C64::new(0.0, -1.0) * C64::from_polar(1.0, 0.8 - 1.1) + C64::new(0.4f64.cos() * 2.0 * 2.2f64.cos(), 0.0);
        assert!((j.grad[1] - dy).norm() < 1e-12);
    }
}
