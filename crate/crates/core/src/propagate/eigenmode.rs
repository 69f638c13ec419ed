use crate::qstate::{BasisKind, Jet, JetOrder, ModeExpansion, MAX_DIM};
use crate::C64;

/// Exact solution `cₙ(t) = cₙ(0) e^{-iEₙt}`.
pub fn evolve_modes(modes: &ModeExpansion, t: f64) -> ModeExpansion {
    let rotated = modes
        .coefficients()
        .iter()
        .zip(modes.energies())
        .map(|(c, e)| c * C64::from_polar(1.0, -e * t))
        .collect();
    modes.with_coefficients_unchecked(rotated)
}

/// Off-grid evaluator for a mode expansion. Each distinct one-dimensional
/// factor is evaluated once per call.
#[derive(Clone, Debug)]
pub struct EigenmodeEvolution {
    modes: ModeExpansion,
    distinct: Vec<Vec<i64>>,
    /// Energy carried by each distinct quantum number on its axis; analytic
    /// mode energies are the sums of these.
    axis_energy: Vec<Vec<f64>>,
    slots: Vec<[usize; MAX_DIM]>,
    ceiling: f64,
}

/// Factor tables up to this size live on the stack.
const INLINE_FACTORS: usize = 32;

impl EigenmodeEvolution {
    pub fn new(modes: ModeExpansion) -> Self {
        let dim = modes.grid().ndim();
        let mut distinct: Vec<Vec<i64>> = vec![Vec::new(); dim];
        let mut slots = Vec::new();
        if let Some(quanta) = modes.quanta() {
            for q in quanta {
                let mut slot = [0; MAX_DIM];
                for k in 0..dim {
                    slot[k] = match distinct[k].iter().position(|&m| m == q[k]) {
                        Some(i) => i,
                        None => {
                            distinct[k].push(q[k]);
                            distinct[k].len() - 1
                        }
                    };
                }
                slots.push(slot);
            }
        }
        let axis_energy = (0..dim)
            .map(|k| {
                let len = modes.grid().axis(k).length();
                distinct[k]
                    .iter()
                    .map(|&m| {
                        let kk = crate::qstate::wavenumber(modes.basis_kind(), m, len);
                        kk * kk / (2.0 * modes.masses()[k])
                    })
                    .collect()
            })
            .collect();
        let bound: f64 = (0..modes.len())
            .map(|n| modes.coefficients()[n].norm() * modes.mode_sup(n))
            .sum();
        EigenmodeEvolution {
            modes,
            distinct,
            axis_energy,
            slots,
            ceiling: bound * bound,
        }
    }

    pub fn modes(&self) -> &ModeExpansion {
        &self.modes
    }

    pub fn density_ceiling(&self) -> f64 {
        self.ceiling
    }

    pub fn jet(&self, q: &[f64], t: f64, order: JetOrder) -> Jet {
        let modes = &self.modes;
        let dim = modes.grid().ndim();
        let mut jet = Jet::zero(dim, order);
        match modes.basis_kind() {
            BasisKind::CustomTabulated => {
                for n in 0..modes.len() {
                    let mut j = modes.mode_jet(n, q, order);
                    j.scale(modes.coefficients()[n] * C64::from_polar(1.0, -modes.energies()[n] * t));
                    add_jet(&mut jet, &j);
                }
            }
            kind => {
                // One table per axis, each factor already carrying its share
                // of the phase e^{-iEt}.
                let total: usize = self.distinct.iter().map(Vec::len).sum();
                let mut inline = [[C64::new(0.0, 0.0); 4]; INLINE_FACTORS];
                let mut heap = Vec::new();
                let table: &mut [[C64; 4]] = if total <= INLINE_FACTORS {
                    &mut inline[..total]
                } else {
                    heap.resize(total, [C64::new(0.0, 0.0); 4]);
                    &mut heap
                };
                let mut offset = [0usize; MAX_DIM];
                let mut at = 0;
                for k in 0..dim {
                    offset[k] = at;
                    let ax = modes.grid().axis(k);
                    for (i, &m) in self.distinct[k].iter().enumerate() {
                        let phase = C64::from_polar(1.0, -self.axis_energy[k][i] * t);
                        let f = crate::qstate::analytic_factor(kind, m, ax.lo(), ax.length(), q[k]);
                        table[at] = f.map(|v| v * phase);
                        at += 1;
                    }
                }
                let mut f = [[C64::new(0.0, 0.0); 4]; MAX_DIM];
                for (n, slot) in self.slots.iter().enumerate() {
                    for k in 0..dim {
                        f[k] = table[offset[k] + slot[k]];
                    }
                    jet.add_separable(modes.coefficients()[n], &f[..dim]);
                }
            }
        }
        jet
    }
}

pub(crate) fn add_jet(acc: &mut Jet, j: &Jet) {
    acc.value += j.value;
    for a in 0..acc.dim {
        acc.grad[a] += j.grad[a];
        for b in 0..acc.dim {
            acc.hess[a][b] += j.hess[a][b];
            acc.third[a][b] += j.third[a][b];
        }
    }
}
