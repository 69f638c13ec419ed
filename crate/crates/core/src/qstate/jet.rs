use crate::qstate::grid::MAX_DIM;
use crate::C64;

/// How many derivatives a [`Jet`] evaluation should carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum JetOrder {
    Value = 0,
    Gradient = 1,
    Hessian = 2,
    Third = 3,
}

/// Local Taylor data of the wave at one configuration.
///
/// `third[i][j]` holds ∂ᵢ∂ᵢ∂ⱼΨ, which is all the quantum-potential gradient needs.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub dim: usize,
    pub order: JetOrder,
    pub value: C64,
    pub grad: [C64; MAX_DIM],
    pub hess: [[C64; MAX_DIM]; MAX_DIM],
    pub third: [[C64; MAX_DIM]; MAX_DIM],
}

/// Per-axis derivative stack `[f, f', f'', f''']` of a one-dimensional factor.
pub type Factor = [C64; 4];

impl Jet {
    pub fn zero(dim: usize, order: JetOrder) -> Self {
        let z = C64::new(0.0, 0.0);
        Jet {
            dim,
            order,
            value: z,
            grad: [z; MAX_DIM],
            hess: [[z; MAX_DIM]; MAX_DIM],
            third: [[z; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn density(&self) -> f64 {
        self.value.norm_sqr()
    }

    /// Accumulate `coef * Π_a factors[a]` together with its derivatives.
    pub fn add_separable(&mut self, coef: C64, factors: &[Factor]) {
        let d = self.dim;
        debug_assert_eq!(factors.len(), d);
        let prod = |orders: [usize; MAX_DIM]| -> C64 {
            let mut p = coef;
            for a in 0..d {
                p *= factors[a][orders[a]];
            }
            p
        };
        self.value += prod([0; MAX_DIM]);
        if self.order >= JetOrder::Gradient {
            for i in 0..d {
                let mut o = [0; MAX_DIM];
                o[i] = 1;
                self.grad[i] += prod(o);
            }
        }
        if self.order >= JetOrder::Hessian {
            for i in 0..d {
                for j in 0..d {
                    let mut o = [0; MAX_DIM];
                    if i == j {
                        o[i] = 2;
                    } else {
                        o[i] = 1;
                        o[j] = 1;
                    }
                    self.hess[i][j] += prod(o);
                }
            }
        }
        if self.order >= JetOrder::Third {
            for i in 0..d {
                for j in 0..d {
                    let mut o = [0; MAX_DIM];
                    if i == j {
                        o[i] = 3;
                    } else {
                        o[i] = 2;
                        o[j] = 1;
                    }
                    self.third[i][j] += prod(o);
                }
            }
        }
    }

    pub fn scale(&mut self, s: C64) {
        self.value *= s;
        for i in 0..self.dim {
            self.grad[i] *= s;
            for j in 0..self.dim {
                self.hess[i][j] *= s;
                self.third[i][j] *= s;
            }
        }
    }

    /// Standard de Broglie velocity `Im(∂ₖΨ/Ψ)/mₖ`.
    pub fn velocity(&self, masses: &[f64]) -> [f64; MAX_DIM] {
        let mut v = [0.0; MAX_DIM];
        let rho = self.density();
        for k in 0..self.dim {
            v[k] = (self.value.conj() * self.grad[k]).im / (rho * masses[k]);
        }
        v
    }

    /// Quantum potential `Q = -Σᵢ (1/2mᵢ) ∇ᵢ²|Ψ| / |Ψ|`.
    pub fn quantum_potential(&self, masses: &[f64]) -> f64 {
        let inv = 1.0 / self.value;
        let mut q = 0.0;
        for i in 0..self.dim {
            let u = self.grad[i] * inv;
            let w = self.hess[i][i] * inv;
            q -= (w.re + u.im * u.im) / (2.0 * masses[i]);
        }
        q
    }

    /// Gradient of the quantum potential, from derivatives up to third order.
    pub fn quantum_potential_gradient(&self, masses: &[f64]) -> [f64; MAX_DIM] {
        debug_assert!(self.order >= JetOrder::Third);
        let inv = 1.0 / self.value;
        let d = self.dim;
        let mut u = [C64::new(0.0, 0.0); MAX_DIM];
        for i in 0..d {
            u[i] = self.grad[i] * inv;
        }
        let mut g = [0.0; MAX_DIM];
        for j in 0..d {
            let mut acc = 0.0;
            for i in 0..d {
                // ∇²R/R along i is Re(wᵢᵢ) + (Im uᵢ)²; differentiate along j.
                let w_ii = self.hess[i][i] * inv;
                let w_ij = self.hess[i][j] * inv;
                let z_iij = self.third[i][j] * inv;
                let dw_ii = z_iij - w_ii * u[j];
                let du_i = w_ij - u[i] * u[j];
                acc += (dw_ii.re + 2.0 * u[i].im * du_i.im) / (2.0 * masses[i]);
            }
            g[j] = -acc;
        }
        g
    }
}
