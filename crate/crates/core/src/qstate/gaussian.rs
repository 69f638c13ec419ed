use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::grid::{Grid, MAX_DIM};
use crate::qstate::jet::{Factor, Jet, JetOrder};
use crate::qstate::WaveField;
use crate::C64;

/// One-dimensional Gaussian packet under free evolution.
///
/// At `t = 0` the density is normal with mean `center` and standard deviation
/// `sigma`; `momentum` sets the carrier wave.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub center: f64,
    pub momentum: f64,
    pub sigma: f64,
    pub mass: f64,
}

impl GaussianPacket {
    pub fn new(center: f64, momentum: f64, sigma: f64, mass: f64) -> Self {
        GaussianPacket {
            center,
            momentum,
            sigma,
            mass,
        }
    }

    /// Value and first three x-derivatives at time `t`.
    pub fn factor(&self, x: f64, t: f64) -> Factor {
        let s2 = self.sigma * self.sigma;
        let spread = C64::new(1.0, t / (2.0 * self.mass * s2));
        let v = self.momentum / self.mass;
        let xi = x - self.center - v * t;
        let h = -1.0 / (2.0 * s2 * spread);
        let g = h * xi + C64::new(0.0, self.momentum);
        let carrier = self.momentum * (x - self.center)
            - self.momentum * self.momentum * t / (2.0 * self.mass);
        let exponent = h * 0.5 * xi * xi + C64::new(0.0, carrier);
        let amp = (2.0 * PI * s2).powf(-0.25) / spread.sqrt();
        let f = amp * exponent.exp();
        let f1 = f * g;
        let f2 = f * (g * g + h);
        let f3 = f * (g * g * g + 3.0 * g * h);
        [f, f1, f2, f3]
    }

    /// Position spread σ(t) of the density.
    pub fn width_at(&self, t: f64) -> f64 {
        let tau = t / (2.0 * self.mass * self.sigma * self.sigma);
        self.sigma * (1.0 + tau * tau).sqrt()
    }

    /// ⟨self|other⟩ at equal times.
    pub fn overlap(&self, other: &GaussianPacket) -> C64 {
        let (sa, sb) = (self.sigma * self.sigma, other.sigma * other.sigma);
        let a = 1.0 / (4.0 * sa) + 1.0 / (4.0 * sb);
        let b = C64::new(
            self.center / (2.0 * sa) + other.center / (2.0 * sb),
            other.momentum - self.momentum,
        );
        let c = C64::new(
            -self.center * self.center / (4.0 * sa) - other.center * other.center / (4.0 * sb),
            self.momentum * self.center - other.momentum * other.center,
        );
        let pref = (2.0 * PI * sa).powf(-0.25) * (2.0 * PI * sb).powf(-0.25);
        pref * (PI / a).sqrt() * (b * b / (4.0 * a) + c).exp()
    }
}

/// Superposition `Σⱼ wⱼ Πₖ Gⱼₖ(qₖ, t)` of separable Gaussian packets.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketState {
    pub weights: Vec<C64>,
    pub packets: Vec<Vec<GaussianPacket>>,
}

impl PacketState {
    /// Build and normalize; every term must have one packet per axis.
    pub fn new(weights: Vec<C64>, packets: Vec<Vec<GaussianPacket>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != packets.len() {
            return Err(Error::InvalidState("one weight per packet term required".into()));
        }
        let dim = packets[0].len();
        if dim == 0 || dim > MAX_DIM || packets.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidState("packet terms must share 1..=3 axes".into()));
        }
        for p in packets.iter().flatten() {
            if !(p.sigma > 0.0 && p.mass > 0.0) {
                return Err(Error::InvalidState("packet width and mass must be positive".into()));
            }
        }
        let mut state = PacketState { weights, packets };
        let n = state.norm_sqr();
        if !(n > 1e-300) {
            return Err(Error::ZeroNorm(n.sqrt()));
        }
        let s = 1.0 / n.sqrt();
        for w in &mut state.weights {
            *w *= s;
        }
        Ok(state)
    }

    pub fn single(packets: Vec<GaussianPacket>) -> Result<Self> {
        PacketState::new(vec![C64::new(1.0, 0.0)], vec![packets])
    }

    pub fn dim(&self) -> usize {
        self.packets[0].len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.packets[0].iter().map(|p| p.mass).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut s = C64::new(0.0, 0.0);
        for (wa, pa) in self.weights.iter().zip(&self.packets) {
            for (wb, pb) in self.weights.iter().zip(&self.packets) {
                let ov: C64 = pa.iter().zip(pb).map(|(a, b)| a.overlap(b)).product();
                s += wa.conj() * wb * ov;
            }
        }
        s.re
    }

    pub fn jet(&self, q: &[f64], t: f64, order: JetOrder) -> Jet {
        let dim = self.dim();
        let mut jet = Jet::zero(dim, order);
        let mut factors = [[C64::new(0.0, 0.0); 4]; MAX_DIM];
        for (w, term) in self.weights.iter().zip(&self.packets) {
            for (k, p) in term.iter().enumerate() {
                factors[k] = p.factor(q[k], t);
            }
            jet.add_separable(*w, &factors[..dim]);
        }
        jet
    }

    /// Upper bound on |Ψ|² over all space and time.
    pub fn density_ceiling(&self) -> f64 {
        let s: f64 = self
            .weights
            .iter()
            .zip(&self.packets)
            .map(|(w, term)| {
                w.norm()
                    * term
                        .iter()
                        .map(|p| (2.0 * PI * p.sigma * p.sigma).powf(-0.25))
                        .product::<f64>()
            })
            .sum();
        s * s
    }

    pub fn tabulate(&self, grid: &Grid, t: f64) -> Result<WaveField> {
        if grid.ndim() != self.dim() {
            return Err(Error::BasisMismatch(format!(
                "{}-axis packets on a {}-axis grid",
                self.dim(),
                grid.ndim()
            )));
        }
        WaveField::from_fn(grid.clone(), self.masses(), t, |q| {
            self.jet(q, t, JetOrder::Value).value
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packet_derivatives_match_finite_differences() {
        let p = GaussianPacket::new(0.3, 1.2, 0.7, 1.3);
        let (x, t, h) = (0.9, 0.8, 1e-4);
        let f = |x: f64| p.factor(x, t);
        for d in 0..3 {
            let fd = (f(x + h)[d] - f(x - h)[d]) / (2.0 * h);
            assert!((fd - f(x)[d + 1]).norm() < 1e-6 * (1.0 + f(x)[d + 1].norm()), "order {d}");
        }
    }

    #[test]
    fn packet_is_normalized_and_spreads() {
        let p = GaussianPacket::new(0.0, 0.5, 0.4, 1.0);
        assert!((p.overlap(&p).re - 1.0).abs() < 1e-14);
        let t = 2.0;
        let dx = 1e-3;
        let n: f64 = (-20000..20000)
            .map(|i| p.factor(i as f64 * dx, t)[0].norm_sqr() * dx)
            .sum();
        assert!((n - 1.0).abs() < 1e-10);
        let mean: f64 = (-20000..20000)
            .map(|i| {
                let x = i as f64 * dx;
                x * p.factor(x, t)[0].norm_sqr() * dx
            })
            .sum();
        assert!((mean - 0.5 * t).abs() < 1e-9);
    }

    #[test]
    fn satisfies_free_schrodinger_equation() {
        let p = GaussianPacket::new(-0.2, 0.9, 0.5, 2.0);
        let (x, t, h) = (0.4, 0.6, 1e-5);
        let dt = (p.factor(x, t + h)[0] - p.factor(x, t - h)[0]) / (2.0 * h);
        let rhs = -p.factor(x, t)[2] / (2.0 * p.mass);
        assert!((C64::new(0.0, 1.0) * dt - rhs).norm() < 1e-7);
    }

    #[test]
    fn superposition_is_normalized() {
        let a = GaussianPacket::new(-3.0, 0.0, 0.5, 1.0);
        let b = GaussianPacket::new(0.5, 0.0, 0.5, 1.0);
        let s = PacketState::new(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)], vec![vec![a], vec![b]]).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-14);
    }
}
