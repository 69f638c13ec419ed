use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::qstate::{Boundary, WaveField};
use crate::C64;

/// `W(q, p)` sampled on the field's position grid and the momenta `2πl/L`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerMap {
    pub q: Vec<f64>,
    /// Ascending, `l = -N/2 .. N/2 - 1`.
    pub p: Vec<f64>,
    /// Row-major over `(q, p)`.
    pub values: Vec<f64>,
}

impl WignerMap {
    pub fn at(&self, iq: usize, ip: usize) -> f64 {
        self.values[iq * self.p.len() + ip]
    }

    pub fn dq(&self) -> f64 {
        self.q[1] - self.q[0]
    }

    pub fn dp(&self) -> f64 {
        self.p[1] - self.p[0]
    }

    /// `∫ W dp` at each grid position.
    pub fn position_marginal(&self) -> Vec<f64> {
        let np = self.p.len();
        self.values.chunks(np).map(|row| row.iter().sum::<f64>() * self.dp()).collect()
    }

    /// `∫ W dq` at each momentum.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let np = self.p.len();
        let mut m = vec![0.0; np];
        for row in self.values.chunks(np) {
            for (a, w) in m.iter_mut().zip(row) {
                *a += w * self.dq();
            }
        }
        m
    }
}

fn check_line(field: &WaveField) -> Result<()> {
    if field.grid().ndim() != 1 || field.grid().axis(0).boundary() != Boundary::Periodic {
        return Err(Error::InvalidGrid("the Wigner transform needs a 1-D periodic field".into()));
    }
    Ok(())
}

/// Momentum density `|ψ̃(p)|²` at `p = 2πl/L`, `l = -N/2 .. N/2 - 1`, with
/// `ψ̃(p) = (2π)^{-1/2} ∫ ψ(x) e^{-ipx} dx`.
pub fn momentum_density(field: &WaveField) -> Result<(Vec<f64>, Vec<f64>)> {
    check_line(field)?;
    let ax = field.grid().axis(0);
    let n = ax.npoints();
    let mut buf = field.amplitudes().to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = ax.spacing().powi(2) / (2.0 * PI);
    let mut p = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for s in 0..n {
        let l = s as i64 - (n / 2) as i64;
        p.push(2.0 * PI * l as f64 / ax.length());
        d.push(buf[l.rem_euclid(n as i64) as usize].norm_sqr() * scale);
    }
    Ok((p, d))
}

/// Pure-state Wigner function `W(q,p) = (1/2π) ∫ dz e^{ipz} ψ(q - z/2) ψ*(q + z/2)`.
///
/// The `z` integral runs over `N` steps of the grid spacing, which needs `ψ`
/// on the half-shifted grid; those values come from the band-limited
/// interpolant. The position marginal is exact.
pub fn wigner(field: &WaveField) -> Result<WignerMap> {
    check_line(field)?;
    let ax = field.grid().axis(0);
    let n = ax.npoints();
    let psi = field.amplitudes();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut half = psi.to_vec();
    fwd.process(&mut half);
    for (s, c) in half.iter_mut().enumerate() {
        let shift = if 2 * s == n {
            // Nyquist: split evenly between ±π/Δ, whose half-step phases cancel.
            C64::new(0.0, 0.0)
        } else {
            let m = if 2 * s < n { s as f64 } else { s as f64 - n as f64 };
            C64::from_polar(1.0, PI * m / n as f64)
        };
        *c *= shift / n as f64;
    }
    inv.process(&mut half);
    // Samples at lo + (m/2)Δ, m = 0 .. 2N - 1.
    let fine: Vec<C64> = (0..2 * n).map(|m| if m % 2 == 0 { psi[m / 2] } else { half[m / 2] }).collect();

    let mut values = Vec::with_capacity(n * n);
    let mut row = vec![C64::new(0.0, 0.0); n];
    let scale = ax.spacing() / (2.0 * PI);
    for j in 0..n {
        for (s, r) in row.iter_mut().enumerate() {
            // z = kΔ with k = s for s < N/2 and s - N otherwise.
            let k = if 2 * s < n { s as i64 } else { s as i64 - n as i64 };
            let a = fine[(2 * j as i64 - k).rem_euclid(2 * n as i64) as usize];
            let b = fine[(2 * j as i64 + k).rem_euclid(2 * n as i64) as usize];
            *r = a * b.conj();
        }
        inv.process(&mut row);
        for s in 0..n {
            let l = s as i64 - (n / 2) as i64;
            values.push(row[l.rem_euclid(n as i64) as usize].re * scale);
        }
    }
    Ok(WignerMap {
        q: ax.points(),
        p: (0..n).map(|s| 2.0 * PI * (s as f64 - (n / 2) as f64) / ax.length()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{density, Axis, GaussianPacket, Grid, PacketState};

    fn cat(d: f64, sigma: f64) -> WaveField {
        let g = Grid::line(Axis::periodic(256, -16.0, 16.0).unwrap());
        let pk = |x| vec![GaussianPacket::new(x, 0.0, sigma, 1.0)];
        let st = PacketState::new(vec![C64::new(1.0, 0.0); 2], vec![pk(-d / 2.0), pk(d / 2.0)]).unwrap();
        st.tabulate(&g, 0.0).unwrap()
    }

    fn w_gauss(q: f64, p: f64, sigma: f64) -> f64 {
        (-q * q / (2.0 * sigma * sigma) - 2.0 * sigma * sigma * p * p).exp() / PI
    }

    #[test]
    fn gaussian_peak_and_shape() {
        let sigma = 0.7;
        let g = Grid::line(Axis::periodic(128, -12.0, 12.0).unwrap());
        let f = PacketState::single(vec![GaussianPacket::new(0.0, 0.0, sigma, 1.0)]).unwrap().tabulate(&g, 0.0).unwrap();
        let w = wigner(&f).unwrap();
        let (iq, ip) = (64, 64);
        assert_eq!((w.q[iq], w.p[ip]), (0.0, 0.0));
        assert!((w.at(iq, ip) - 1.0 / PI).abs() < 1e-6);
        assert!(w.values.iter().all(|&v| v > -1e-10));
        for &(i, l) in &[(70, 64), (60, 66), (64, 61)] {
            assert!((w.at(i, l) - w_gauss(w.q[i], w.p[l], sigma)).abs() < 1e-6);
        }
    }

    #[test]
    fn marginals() {
        let f = cat(5.0, 0.6);
        let w = wigner(&f).unwrap();
        let rho = density(&f);
        for (a, b) in w.position_marginal().iter().zip(&rho) {
            assert!((a - b).abs() < 1e-6);
        }
        let (_, mom) = momentum_density(&f).unwrap();
        for (a, b) in w.momentum_marginal().iter().zip(&mom) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cat_state_fringes() {
        let (d, sigma) = (5.0, 0.6);
        let w = wigner(&cat(d, sigma)).unwrap();
        let iq = w.q.iter().position(|&q| q == 0.0).unwrap();
        let n2 = 1.0 / (2.0 * (1.0 + (-d * d / (8.0 * sigma * sigma)).exp()));
        for (ip, &p) in w.p.iter().enumerate() {
            let exact = n2 * (2.0 * w_gauss(d / 2.0, p, sigma) + 2.0 * w_gauss(0.0, p, sigma) * (p * d).cos());
            assert!((w.at(iq, ip) - exact).abs() < 1e-6);
        }
        // Adjacent extrema of cos(pd) have opposite sign.
        let period = 2.0 * PI / d;
        let near = |p: f64| w.p.iter().position(|&x| (x - p).abs() < 0.5 * w.dp()).unwrap();
        let v0 = w.at(iq, near(0.0));
        let v1 = w.at(iq, near(0.5 * period));
        let v2 = w.at(iq, near(period));
        assert!(v0 > 0.0 && v1 < 0.0 && v2 > 0.0, "{v0} {v1} {v2}");
    }
}
