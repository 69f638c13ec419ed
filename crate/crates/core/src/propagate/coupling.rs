use std::sync::Arc;

use crate::error::{Error, Result};
use crate::qstate::spectral::TrigSeries;
use crate::qstate::{analytic_factor, BasisKind, Factor, Grid, Jet, JetOrder, ModeExpansion, WaveField, MAX_DIM};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Pointer samples below this fraction of the peak density count as empty.
const SUPPORT_FLOOR: f64 = 1e-14;

/// Which current closes the continuity equation along the system axis
/// while the coupling is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingCurrent {
    /// Current built from the spectral decomposition of the observable; valid
    /// for any discrete eigenbasis.
    Spectral,
    /// `jₓ = a Im(Ψ*∂ᵧΨ)`, the local current of `a p̂ₓ p̂ᵧ`. Requires plane-wave
    /// modes whose eigenvalues are their momenta.
    Momentum,
}

/// `[lo, hi]` interval where the pointer density exceeds the support floor.
pub fn pointer_support(pointer: &WaveField) -> (f64, f64) {
    let rho: Vec<f64> = pointer.amplitudes().iter().map(|z| z.norm_sqr()).collect();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let ax = pointer.grid().axis(0);
    let inside: Vec<usize> = (0..rho.len()).filter(|&j| rho[j] > SUPPORT_FLOOR * peak).collect();
    let h = 0.5 * ax.spacing();
    (ax.point(inside[0]) - h, ax.point(*inside.last().unwrap()) + h)
}

fn check_pointer(pointer: &WaveField) -> Result<()> {
    if pointer.grid().ndim() != 1 {
        return Err(Error::InvalidCoupling("pointer must be one-dimensional".into()));
    }
    if (pointer.norm_sqr() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidCoupling(format!(
            "pointer packet is not normalized (norm² = {})",
            pointer.norm_sqr()
        )));
    }
    Ok(())
}

fn check_shifts(pointer: &WaveField, shifts: impl Iterator<Item = f64>) -> Result<()> {
    let (lo, hi) = pointer_support(pointer);
    let ax = pointer.grid().axis(0);
    for (branch, s) in shifts.enumerate() {
        if lo + s < ax.lo() || hi + s > ax.hi() {
            return Err(Error::PointerOverflow { branch });
        }
    }
    Ok(())
}

fn check_system(system: &ModeExpansion) -> Result<()> {
    if system.grid().ndim() != 1 {
        return Err(Error::InvalidCoupling("the measured system must be one-dimensional".into()));
    }
    Ok(())
}

fn series_factor(s: &TrigSeries, x: f64, order: JetOrder) -> Factor {
    let j = s.eval(&[x], order);
    [j.value, j.grad[0], j.hess[0][0], j.third[0][0]]
}

/// Joint field `Σₙ cₙ φₙ(x) g₀(y - aωₙt)` after an impulsive coupling
/// `Ĥ = a ω̂ p̂ᵧ` of duration `t`, on the product of the system and pointer grids.
pub fn evolve_coupling(system: &ModeExpansion, pointer: &WaveField, a: f64, t: f64) -> Result<WaveField> {
    check_system(system)?;
    check_pointer(pointer)?;
    check_shifts(pointer, system.eigenvalues().iter().map(|w| a * w * t))?;
    let g = TrigSeries::from_samples(pointer.grid(), pointer.amplitudes(), 0.0);
    let ys = pointer.grid().axis(0).points();
    let ny = ys.len();
    let grid = system.grid().product(pointer.grid())?;
    let mut amps = vec![ZERO; grid.len()];
    for n in 0..system.len() {
        let phi = system.mode_samples(n);
        let shift = a * system.eigenvalues()[n] * t;
        let gn: Vec<C64> = ys.iter().map(|&y| g.eval(&[y - shift], JetOrder::Value).value).collect();
        let c = system.coefficients()[n];
        for (ix, p) in phi.iter().enumerate() {
            let cp = c * p;
            for (iy, gv) in gn.iter().enumerate() {
                amps[ix * ny + iy] += cp * gv;
            }
        }
    }
    let masses = vec![system.masses()[0], pointer.masses()[0]];
    WaveField::new(grid, amps, masses, t)
}

/// `Φₙₘ(x) = ∫_lo^x φ̄ₙ φₘ` for one pair of tabulated modes, as a sum of
/// integrated exponentials.
#[derive(Clone, Debug)]
struct PairIntegral {
    n: usize,
    m: usize,
    origin: f64,
    terms: Vec<(C64, f64)>,
}

impl PairIntegral {
    fn eval(&self, lo: f64, x: f64) -> C64 {
        let mut s = ZERO;
        for &(c, k) in &self.terms {
            if k == 0.0 {
                s += c * (x - lo);
            } else {
                let e = C64::from_polar(1.0, k * (x - self.origin)) - C64::from_polar(1.0, k * (lo - self.origin));
                s += c * e / C64::new(0.0, k);
            }
        }
        s
    }
}

/// Joint system-pointer evolution under an impulsive coupling of duration
/// `tau`, followed by free evolution of the system with the pointer frozen.
#[derive(Clone, Debug)]
pub struct CouplingEvolution {
    system: ModeExpansion,
    pointer: Arc<TrigSeries>,
    grid: Grid,
    masses: Vec<f64>,
    a: f64,
    tau: f64,
    current: CouplingCurrent,
    pairs: Arc<Vec<PairIntegral>>,
    ceiling: f64,
}

impl CouplingEvolution {
    pub fn new(system: ModeExpansion, pointer: &WaveField, a: f64, tau: f64, current: CouplingCurrent) -> Result<Self> {
        check_system(&system)?;
        check_pointer(pointer)?;
        if !(a.is_finite() && a != 0.0 && tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidCoupling(format!("need a != 0 and tau > 0 (a = {a}, tau = {tau})")));
        }
        check_shifts(pointer, system.eigenvalues().iter().map(|w| a * w * tau))?;
        if current == CouplingCurrent::Momentum {
            let len = system.grid().axis(0).length();
            let ok = system.basis_kind() == BasisKind::PlaneWave
                && system.quanta().unwrap().iter().zip(system.eigenvalues()).all(|(q, w)| {
                    (crate::qstate::wavenumber(BasisKind::PlaneWave, q[0], len) - w).abs() < 1e-9 * (1.0 + w.abs())
                });
            if !ok {
                return Err(Error::InvalidCoupling(
                    "the momentum current needs plane-wave modes with eigenvalues equal to their momenta".into(),
                ));
            }
        }
        let mut pairs = Vec::new();
        if system.basis_kind() == BasisKind::CustomTabulated && current == CouplingCurrent::Spectral {
            let samples: Vec<Vec<C64>> = (0..system.len()).map(|n| system.mode_samples(n)).collect();
            for n in 0..system.len() {
                for m in 0..system.len() {
                    if n == m || system.eigenvalues()[n] == system.eigenvalues()[m] {
                        continue;
                    }
                    let prod: Vec<C64> = samples[n].iter().zip(&samples[m]).map(|(p, q)| p.conj() * q).collect();
                    let s = TrigSeries::from_samples(system.grid(), &prod, 1e-15);
                    pairs.push(PairIntegral {
                        n,
                        m,
                        origin: s.origin()[0],
                        terms: s.terms().map(|(c, k)| (c, k[0])).collect(),
                    });
                }
            }
        }
        let gs = TrigSeries::from_samples(pointer.grid(), pointer.amplitudes(), 0.0);
        let gmax = pointer.amplitudes().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let bound: f64 = (0..system.len())
            .map(|n| system.coefficients()[n].norm() * system.mode_sup(n))
            .sum();
        let grid = system.grid().product(pointer.grid())?;
        Ok(CouplingEvolution {
            masses: vec![system.masses()[0], pointer.masses()[0]],
            system,
            pointer: Arc::new(gs),
            grid,
            a,
            tau,
            current,
            pairs: Arc::new(pairs),
            ceiling: (1.1 * bound * gmax).powi(2),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
    pub fn system(&self) -> &ModeExpansion {
        &self.system
    }
    pub fn strength(&self) -> f64 {
        self.a
    }
    pub fn duration(&self) -> f64 {
        self.tau
    }
    pub fn density_ceiling(&self) -> f64 {
        self.ceiling
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < 0.0 {
            return Err(Error::OutsideWindow {
                t,
                reason: "the coupling starts at t = 0",
            });
        }
        Ok(())
    }

    fn mode_factor(&self, n: usize, x: f64, order: JetOrder) -> Factor {
        match self.system.basis_kind() {
            BasisKind::CustomTabulated => {
                let j = self.system.mode_jet(n, &[x], order);
                [j.value, j.grad[0], j.hess[0][0], j.third[0][0]]
            }
            kind => {
                let ax = self.system.grid().axis(0);
                analytic_factor(kind, self.system.quanta().unwrap()[n][0], ax.lo(), ax.length(), x)
            }
        }
    }

    /// Time-dependent weight of mode `n`: the free phase accrued after the coupling.
    fn weight(&self, n: usize, t: f64) -> C64 {
        let free = (t - self.tau).max(0.0);
        self.system.coefficients()[n] * C64::from_polar(1.0, -self.system.energies()[n] * free)
    }

    fn shift(&self, n: usize, t: f64) -> f64 {
        self.a * self.system.eigenvalues()[n] * t.min(self.tau)
    }

    pub fn jet(&self, q: &[f64], t: f64, order: JetOrder) -> Result<Jet> {
        self.check_time(t)?;
        let mut jet = Jet::zero(2, order);
        for n in 0..self.system.len() {
            let f = [
                self.mode_factor(n, q[0], order),
                series_factor(&self.pointer, q[1] - self.shift(n, t), order),
            ];
            jet.add_separable(self.weight(n, t), &f);
        }
        Ok(jet)
    }

    fn phi_integral(&self, n: usize, m: usize, pair: Option<&PairIntegral>, x: f64) -> C64 {
        let ax = self.system.grid().axis(0);
        let (lo, len) = (ax.lo(), ax.length());
        let xi = x - lo;
        match self.system.basis_kind() {
            BasisKind::BoxSine => {
                let q = self.system.quanta().unwrap();
                let kn = crate::qstate::wavenumber(BasisKind::BoxSine, q[n][0], len);
                let km = crate::qstate::wavenumber(BasisKind::BoxSine, q[m][0], len);
                let v = ((kn - km) * xi).sin() / (kn - km) - ((kn + km) * xi).sin() / (kn + km);
                C64::new(v / len, 0.0)
            }
            BasisKind::PlaneWave => {
                let q = self.system.quanta().unwrap();
                let d = crate::qstate::wavenumber(BasisKind::PlaneWave, q[m][0] - q[n][0], len);
                if d == 0.0 {
                    C64::new(xi / len, 0.0)
                } else {
                    (C64::from_polar(1.0, d * xi) - 1.0) / C64::new(0.0, d * len)
                }
            }
            BasisKind::CustomTabulated => pair.map_or(ZERO, |p| p.eval(lo, x)),
        }
    }

    /// Density and velocity at a joint configuration `(x, y)`.
    pub fn flow(&self, q: &[f64], t: f64) -> Result<(f64, [f64; MAX_DIM])> {
        self.flow_in_regime(q, t, t < self.tau)
    }

    /// As [`flow`](Self::flow), with the coupling explicitly on or off. At
    /// `t = tau` both regimes are defined (the pointer shift is continuous).
    pub fn flow_in_regime(&self, q: &[f64], t: f64, active: bool) -> Result<(f64, [f64; MAX_DIM])> {
        self.check_time(t)?;
        let nm = self.system.len();
        let mut psi = ZERO;
        let mut psi_x = ZERO;
        let mut psi_y = ZERO;
        let mut psi_w = ZERO;
        let mut g = Vec::with_capacity(nm);
        for n in 0..nm {
            let f = self.mode_factor(n, q[0], JetOrder::Gradient);
            let gf = series_factor(&self.pointer, q[1] - self.shift(n, t), JetOrder::Gradient);
            let w = self.weight(n, t);
            let term = w * f[0] * gf[0];
            psi += term;
            psi_x += w * f[1] * gf[0];
            psi_y += w * f[0] * gf[1];
            psi_w += self.system.eigenvalues()[n] * term;
            g.push((gf[0], gf[1]));
        }
        let rho = psi.norm_sqr();
        let mut v = [0.0; MAX_DIM];
        if !active {
            v[0] = (psi.conj() * psi_x).im / (self.masses[0] * rho);
            return Ok((rho, v));
        }
        let a = self.a;
        v[1] = a * (psi.conj() * psi_w).re / rho;
        v[0] = match self.current {
            CouplingCurrent::Momentum => a * (psi.conj() * psi_y).im / rho,
            CouplingCurrent::Spectral => {
                let c = self.system.coefficients();
                let w = self.system.eigenvalues();
                let mut jx = ZERO;
                let mut accumulate = |n: usize, m: usize, pair: Option<&PairIntegral>| {
                    let (gn, dgn) = g[n];
                    let (gm, dgm) = g[m];
                    let cross = gn.conj() * dgm - dgn.conj() * gm;
                    jx += c[n].conj() * c[m] * (w[m] - w[n]) * self.phi_integral(n, m, pair, q[0]) * cross;
                };
                if self.system.basis_kind() == BasisKind::CustomTabulated {
                    for p in self.pairs.iter() {
                        accumulate(p.n, p.m, Some(p));
                    }
                } else {
                    for n in 0..nm {
                        for m in 0..nm {
                            if n != m && w[n] != w[m] {
                                accumulate(n, m, None);
                            }
                        }
                    }
                }
                0.5 * a * jx.re / rho
            }
        };
        Ok((rho, v))
    }

    /// Tabulated joint field at time `t`.
    pub fn field_at(&self, t: f64) -> Result<WaveField> {
        self.check_time(t)?;
        WaveField::from_fn(self.grid.clone(), self.masses.clone(), t, |q| {
            self.jet(q, t, JetOrder::Value).map(|j| j.value).unwrap_or(ZERO)
        })
    }
}

/// Function of the system coordinate read out by a position-type coupling
/// `Ĥ = a f(x̂) p̂ᵧ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeFunction {
    /// `f(x) = x`.
    Coordinate,
    /// Smoothed indicator of `[lo, hi]` with tanh edges of the given width.
    SmoothIndicator { lo: f64, hi: f64, width: f64 },
}

impl ProbeFunction {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ProbeFunction::Coordinate => x,
            ProbeFunction::SmoothIndicator { lo, hi, width } => {
                0.5 * (((x - lo) / width).tanh() - ((x - hi) / width).tanh())
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ProbeFunction::Coordinate => 1.0,
            ProbeFunction::SmoothIndicator { lo, hi, width } => {
                let s = |u: f64| 1.0 / u.cosh().powi(2);
                0.5 * (s((x - lo) / width) - s((x - hi) / width)) / width
            }
        }
    }
}

/// Joint evolution `ψ(x) g₀(y - a f(x) t)` of an impulsive position-type
/// coupling. Valid on `[0, tau]`.
#[derive(Clone, Debug)]
pub struct PositionCoupling {
    system: Arc<TrigSeries>,
    pointer: Arc<TrigSeries>,
    grid: Grid,
    masses: Vec<f64>,
    a: f64,
    tau: f64,
    probe: ProbeFunction,
    ceiling: f64,
}

impl PositionCoupling {
    pub fn new(system: &WaveField, pointer: &WaveField, a: f64, tau: f64, probe: ProbeFunction) -> Result<Self> {
        if system.grid().ndim() != 1 {
            return Err(Error::InvalidCoupling("the measured system must be one-dimensional".into()));
        }
        check_pointer(pointer)?;
        if !(a.is_finite() && a != 0.0 && tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidCoupling(format!("need a != 0 and tau > 0 (a = {a}, tau = {tau})")));
        }
        let sys_ax = system.grid().axis(0);
        let fr: Vec<f64> = sys_ax.points().iter().map(|&x| probe.value(x)).collect();
        let (fmin, fmax) = fr.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &f| (lo.min(f), hi.max(f)));
        check_shifts(pointer, [a * tau * fmin, a * tau * fmax].into_iter())?;
        let smax = system.amplitudes().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let gmax = pointer.amplitudes().iter().map(|z| z.norm()).fold(0.0, f64::max);
        Ok(PositionCoupling {
            system: Arc::new(TrigSeries::from_samples(system.grid(), system.amplitudes(), 0.0)),
            pointer: Arc::new(TrigSeries::from_samples(pointer.grid(), pointer.amplitudes(), 0.0)),
            grid: system.grid().product(pointer.grid())?,
            masses: vec![system.masses()[0], pointer.masses()[0]],
            a,
            tau,
            probe,
            ceiling: (1.1 * smax * gmax).powi(2),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
    pub fn duration(&self) -> f64 {
        self.tau
    }
    pub fn strength(&self) -> f64 {
        self.a
    }
    pub fn probe(&self) -> ProbeFunction {
        self.probe
    }
    pub fn density_ceiling(&self) -> f64 {
        self.ceiling
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.tau).contains(&t) {
            return Err(Error::OutsideWindow {
                t,
                reason: "position coupling is only defined during the coupling window",
            });
        }
        Ok(())
    }

    /// Value and gradient of the joint field. Higher orders are not provided.
    pub fn jet(&self, q: &[f64], t: f64, order: JetOrder) -> Result<Jet> {
        self.check_time(t)?;
        if order > JetOrder::Gradient {
            return Err(Error::Unsupported("position coupling provides value and gradient only"));
        }
        let s = self.system.eval(&q[..1], JetOrder::Gradient);
        let shift = self.a * self.probe.value(q[0]) * t;
        let g = self.pointer.eval(&[q[1] - shift], JetOrder::Gradient);
        let mut jet = Jet::zero(2, order);
        jet.value = s.value * g.value;
        if order >= JetOrder::Gradient {
            let ds = -self.a * self.probe.derivative(q[0]) * t;
            jet.grad[0] = s.grad[0] * g.value + s.value * g.grad[0] * ds;
            jet.grad[1] = s.value * g.grad[0];
        }
        Ok(jet)
    }

    /// `ẋ = 0`, `ẏ = a f(x)` wherever the joint density is nonzero.
    pub fn flow(&self, q: &[f64], t: f64) -> Result<(f64, [f64; MAX_DIM])> {
        let rho = self.jet(q, t, JetOrder::Value)?.density();
        let mut v = [0.0; MAX_DIM];
        v[1] = self.a * self.probe.value(q[0]);
        Ok((rho, v))
    }

    pub fn field_at(&self, t: f64) -> Result<WaveField> {
        self.check_time(t)?;
        WaveField::from_fn(self.grid.clone(), self.masses.clone(), t, |q| {
            self.jet(q, t, JetOrder::Value).map(|j| j.value).unwrap_or(ZERO)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{normalize_coefficients, Axis, GaussianPacket, PacketState};
    use std::f64::consts::PI;

    fn pointer(sigma: f64, lo: f64, hi: f64, n: usize) -> WaveField {
        let g = Grid::line(Axis::periodic(n, lo, hi).unwrap());
        PacketState::single(vec![GaussianPacket::new(0.0, 0.0, sigma, 1.0)])
            .unwrap()
            .tabulate(&g, 0.0)
            .unwrap()
    }

    fn momentum_pair(p: i64, eig: Option<f64>) -> ModeExpansion {
        let g = Grid::line(Axis::periodic(32, 0.0, 2.0 * PI).unwrap());
        let c = normalize_coefficients(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let m = ModeExpansion::plane_wave(g, vec![1.0], vec![vec![p], vec![-p]], c).unwrap();
        let w = match eig {
            Some(e) => vec![e, e],
            None => vec![p as f64, -(p as f64)],
        };
        m.with_eigenvalues(w).unwrap()
    }

    #[test]
    fn zero_time_is_product_state() {
        let sys = momentum_pair(2, None);
        let ptr = pointer(0.5, -8.0, 8.0, 64);
        let joint = evolve_coupling(&sys, &ptr, 1.0, 0.0).unwrap();
        let psi = crate::qstate::synthesize(&sys, 0.0).unwrap();
        for ix in 0..32 {
            for iy in 0..64 {
                let want = psi.amplitudes()[ix] * ptr.amplitudes()[iy];
                assert!((joint.amplitudes()[ix * 64 + iy] - want).norm() < 1e-13);
            }
        }
        assert!((joint.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn overflow_is_detected() {
        let sys = momentum_pair(2, None);
        let ptr = pointer(0.5, -8.0, 8.0, 64);
        assert!(matches!(evolve_coupling(&sys, &ptr, 1.0, 3.0), Err(Error::PointerOverflow { .. })));
    }

    #[test]
    fn branches_separate_and_preserve_system_marginal() {
        let sys = momentum_pair(2, None);
        let ptr = pointer(0.3, -10.0, 10.0, 256);
        let t = 1.5;
        let joint = evolve_coupling(&sys, &ptr, 1.0, t).unwrap();
        assert!((joint.norm_sqr() - 1.0).abs() < 1e-10);
        // Once the branches are disjoint the interference term between the
        // two momentum components drops out of the system marginal.
        let dy = ptr.grid().axis(0).spacing();
        let phi: Vec<Vec<C64>> = (0..2).map(|n| sys.mode_samples(n)).collect();
        for ix in 0..32 {
            let marg: f64 = (0..256).map(|iy| joint.amplitudes()[ix * 256 + iy].norm_sqr()).sum::<f64>() * dy;
            let incoherent: f64 = (0..2).map(|n| (sys.coefficients()[n] * phi[n][ix]).norm_sqr()).sum();
            assert!((marg - incoherent).abs() < 1e-10);
        }
        let ev = CouplingEvolution::new(sys, &ptr, 1.0, t, CouplingCurrent::Momentum).unwrap();
        let rho_center = ev.jet(&[0.4, 0.0], t, JetOrder::Value).unwrap().density();
        let rho_lobe = ev.jet(&[0.4, 3.0], t, JetOrder::Value).unwrap().density();
        assert!(rho_center < 1e-20 && rho_lobe > 1e-3);
    }

    #[test]
    fn degenerate_pointer_moves_rigidly_and_system_rests() {
        let e = 2.0;
        let sys = momentum_pair(2, Some(e));
        let ptr = pointer(0.3, -4.0, 12.0, 128);
        let ev = CouplingEvolution::new(sys, &ptr, 1.5, 2.0, CouplingCurrent::Spectral).unwrap();
        for &(x, y, t) in &[(0.3, 0.1, 0.5), (1.1, 3.0, 1.0), (2.0, 6.2, 1.9)] {
            let (_, v) = ev.flow(&[x, y], t).unwrap();
            assert!(v[0].abs() < 1e-12);
            assert!((v[1] - 1.5 * e).abs() < 1e-12);
        }
    }

    fn continuity_residual(ev: &CouplingEvolution, q: [f64; 2], t: f64) -> (f64, f64) {
        // ∂ₜρ + ∂ₓjₓ + ∂ᵧjᵧ by central differences.
        let h = 1e-4;
        let rho = |q: [f64; 2], t: f64| ev.flow(&q, t).unwrap().0;
        let j = |q: [f64; 2], k: usize| {
            let (r, v) = ev.flow(&q, t).unwrap();
            r * v[k]
        };
        let dt = (rho(q, t + h) - rho(q, t - h)) / (2.0 * h);
        let dx = (j([q[0] + h, q[1]], 0) - j([q[0] - h, q[1]], 0)) / (2.0 * h);
        let dy = (j([q[0], q[1] + h], 1) - j([q[0], q[1] - h], 1)) / (2.0 * h);
        (dt + dx + dy, dt.abs())
    }

    #[test]
    fn spectral_current_satisfies_continuity() {
        let g = Grid::line(Axis::walled(32, 0.0, PI).unwrap());
        let c = normalize_coefficients(&[C64::new(1.0, 0.0), C64::new(0.3, 0.8), C64::new(-0.5, 0.2)]);
        let sys = ModeExpansion::box_sine(g, vec![1.0], vec![vec![1], vec![2], vec![3]], c)
            .unwrap()
            .with_eigenvalues(vec![-1.0, 0.5, 2.0])
            .unwrap();
        let ptr = pointer(0.5, -12.0, 12.0, 128);
        let ev = CouplingEvolution::new(sys, &ptr, 1.0, 2.0, CouplingCurrent::Spectral).unwrap();
        for &(x, y, t) in &[(0.7, 0.2, 0.3), (1.9, -0.4, 0.8), (2.5, 1.0, 1.2)] {
            let (res, scale) = continuity_residual(&ev, [x, y], t);
            assert!(res.abs() < 1e-6 * (1.0 + scale), "{res} {scale}");
        }
    }

    #[test]
    fn tabulated_spectral_current_satisfies_continuity() {
        let g = Grid::line(Axis::walled(64, 0.0, PI).unwrap());
        let xs = g.axis(0).points();
        let mode = |m: f64| -> Vec<C64> {
            xs.iter().map(|&x| C64::new((2.0 / PI).sqrt() * (m * x).sin(), 0.0)).collect()
        };
        let c = normalize_coefficients(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let sys = ModeExpansion::tabulated(g, vec![1.0], vec![mode(1.0), mode(2.0)], vec![0.5, 2.0], c)
            .unwrap()
            .with_eigenvalues(vec![1.0, 2.0])
            .unwrap();
        let ptr = pointer(0.5, -12.0, 12.0, 128);
        let ev = CouplingEvolution::new(sys, &ptr, 1.0, 2.0, CouplingCurrent::Spectral).unwrap();
        for &(x, y, t) in &[(0.7, 0.2, 0.3), (1.9, 0.9, 0.8)] {
            let (res, scale) = continuity_residual(&ev, [x, y], t);
            assert!(res.abs() < 1e-6 * (1.0 + scale), "{res} {scale}");
        }
    }

    #[test]
    fn position_coupling_shifts_pointer_by_coordinate() {
        let g = Grid::line(Axis::periodic(64, -6.0, 6.0).unwrap());
        let sys = PacketState::single(vec![GaussianPacket::new(1.0, 0.0, 0.5, 1.0)])
            .unwrap()
            .tabulate(&g, 0.0)
            .unwrap();
        let ptr = pointer(1.0, -16.0, 16.0, 256);
        let ev = PositionCoupling::new(&sys, &ptr, 0.5, 1.0, ProbeFunction::Coordinate).unwrap();
        let (_, v) = ev.flow(&[1.3, 0.2], 0.4).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.65).abs() < 1e-15);
        assert!(ev.flow(&[1.3, 0.2], 1.5).is_err());
        let ind = ProbeFunction::SmoothIndicator { lo: 0.0, hi: 2.0, width: 0.02 };
        assert!((ind.value(1.0) - 1.0).abs() < 1e-12 && ind.value(-1.0).abs() < 1e-12);
        let h = 1e-6;
        let fd = (ind.value(0.01 + h) - ind.value(0.01 - h)) / (2.0 * h);
        assert!((fd - ind.derivative(0.01)).abs() < 1e-4);
    }
}
