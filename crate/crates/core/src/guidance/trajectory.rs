use crate::error::{Error, Result};
use crate::propagate::EvolutionHandle;
use crate::qstate::{Boundary, Config, MAX_DIM};

/// Relative density threshold below which a configuration counts as nodal.
pub const NODE_EPS: f64 = 1e-12;

/// Per-sample diagnostics, accumulated over the interval since the previous sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SampleFlags {
    pub node_grazed: bool,
    pub step_clamped: bool,
}

impl SampleFlags {
    pub fn is_clear(&self) -> bool {
        !self.node_grazed && !self.step_clamped
    }

    pub fn label(&self) -> &'static str {
        match (self.node_grazed, self.step_clamped) {
            (false, false) => "ok",
            (true, false) => "node-grazed",
            (false, true) => "step-clamped",
            (true, true) => "node-grazed+step-clamped",
        }
    }

    fn merge(&mut self, other: SampleFlags) {
        self.node_grazed |= other.node_grazed;
        self.step_clamped |= other.step_clamped;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub node_hits: usize,
    pub clamped: usize,
    pub evaluations: usize,
}

/// Time-stamped configuration path with diagnostics. Periodic coordinates are
/// wrapped into the grid domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Config>,
    pub flags: Vec<SampleFlags>,
    pub stats: IntegratorStats,
    pub tol: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &Config {
        self.points.last().expect("trajectory has at least one sample")
    }

    /// Whether any sample carries a safeguard flag.
    pub fn flagged(&self) -> bool {
        self.flags.iter().any(|f| !f.is_clear())
    }
}

/// Integration controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorOptions {
    /// Absolute local error bound per step (position units).
    pub tol: f64,
    /// Smallest step before the safeguard takes a clamped Euler step.
    pub dt_min: f64,
    /// Consecutive safeguard triggers tolerated before giving up.
    pub max_node_hits: usize,
    /// Hard limit on attempted steps per trajectory.
    pub max_steps: usize,
}

impl IntegratorOptions {
    pub fn new(tol: f64) -> Self {
        IntegratorOptions {
            tol,
            dt_min: 1e-9,
            max_node_hits: 200,
            max_steps: 10_000_000,
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

// PI step control.
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

type Vel = [f64; MAX_DIM];

struct Integrator<'a> {
    ev: &'a EvolutionHandle,
    opts: IntegratorOptions,
    threshold: f64,
    dim: usize,
    v_cap: f64,
    stats: IntegratorStats,
    hits: usize,
    pending: SampleFlags,
    /// Any time strictly inside the current segment; selects the regime of
    /// piecewise-defined velocity fields at segment ends.
    regime: f64,
}

impl<'a> Integrator<'a> {
    fn new(ev: &'a EvolutionHandle, opts: IntegratorOptions, dt_min: f64) -> Self {
        Integrator {
            ev,
            opts,
            threshold: NODE_EPS * ev.density_ceiling(),
            dim: ev.dim(),
            v_cap: ev.grid().min_spacing() / dt_min,
            stats: IntegratorStats::default(),
            hits: 0,
            pending: SampleFlags::default(),
            regime: f64::NAN,
        }
    }

    /// Velocity at `(q, t)`, or `None` when `q` is nodal or outside a box wall.
    fn eval(&mut self, q: &Config, t: f64) -> Result<Option<Vel>> {
        self.stats.evaluations += 1;
        let grid = self.ev.grid();
        for (k, ax) in grid.axes().iter().enumerate() {
            if ax.boundary() == Boundary::Box && !(q[k] > ax.lo() && q[k] < ax.hi()) {
                return Ok(None);
            }
        }
        let f = self.ev.flow_in_regime(q, t, self.regime)?;
        if !(f.density >= self.threshold) || f.velocity[..self.dim].iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        Ok(Some(f.velocity))
    }

    fn node_hit(&mut self, t: f64) -> Result<()> {
        self.stats.node_hits += 1;
        self.hits += 1;
        self.pending.node_grazed = true;
        if self.hits > self.opts.max_node_hits {
            return Err(Error::StuckAtNode { t, count: self.hits });
        }
        Ok(())
    }

    /// Euler step of length `h` with the speed capped at `v_cap`.
    fn clamped_step(&mut self, y: &Config, t: f64, h: f64) -> Result<Config> {
        self.stats.clamped += 1;
        self.pending.step_clamped = true;
        let raw = self.ev.flow_in_regime(y, t, self.regime)?.velocity;
        let mut v = Config::zeros(self.dim);
        for k in 0..self.dim {
            v[k] = if raw[k].is_finite() { raw[k] } else { 0.0 };
        }
        let speed = v.norm();
        if speed > self.v_cap {
            let s = self.v_cap / speed;
            for k in 0..self.dim {
                v[k] *= s;
            }
        }
        let mut next = y.axpy(h, &v);
        // Never step through a box wall.
        let grid = self.ev.grid();
        for (k, ax) in grid.axes().iter().enumerate() {
            if ax.boundary() == Boundary::Box {
                let eps = 1e-9 * ax.spacing();
                next[k] = next[k].clamp(ax.lo() + eps, ax.hi() - eps);
            }
        }
        Ok(next)
    }

    /// Adaptive Dormand–Prince advance of `y` from `t` to exactly `t_end`.
    fn dopri(&mut self, y: &mut Config, t: &mut f64, t_end: f64, h: &mut f64, err_prev: &mut f64) -> Result<()> {
        let span = (t_end - *t).abs().max(1e-300);
        self.regime = 0.5 * (*t + t_end);
        let mut k = [[0.0; MAX_DIM]; 7];
        // First-same-as-last: the last stage of an accepted step is the next first stage.
        let mut first: Option<Vel> = None;
        while *t < t_end {
            if self.stats.accepted + self.stats.rejected + self.stats.clamped > self.opts.max_steps {
                return Err(Error::StepBudget {
                    t: *t,
                    steps: self.opts.max_steps,
                });
            }
            let remaining = t_end - *t;
            if *h >= remaining || remaining - *h < 1e-12 * span {
                *h = remaining;
            }
            let h_now = *h;
            let mut nodal = false;
            match first.take().map_or_else(|| self.eval(y, *t), |v| Ok(Some(v)))? {
                Some(v) => k[0] = v,
                None => nodal = true,
            }
            if !nodal {
                for s in 1..7 {
                    let mut q = *y;
                    for d in 0..self.dim {
                        let mut acc = 0.0;
                        for (j, a) in A[s][..s].iter().enumerate() {
                            acc += a * k[j][d];
                        }
                        q[d] += h_now * acc;
                    }
                    match self.eval(&q, *t + C[s] * h_now)? {
                        Some(v) => k[s] = v,
                        None => {
                            nodal = true;
                            break;
                        }
                    }
                }
            }
            if nodal {
                self.node_hit(*t)?;
                let half = 0.5 * h_now;
                if half >= self.opts.dt_min.min(remaining) && half > 0.0 {
                    *h = half;
                    continue;
                }
                let step = self.opts.dt_min.min(remaining);
                *y = self.clamped_step(y, *t, step)?;
                *t = if step == remaining { t_end } else { *t + step };
                *h = 2.0 * self.opts.dt_min;
                continue;
            }
            let mut err: f64 = 0.0;
            let mut next = *y;
            for d in 0..self.dim {
                let mut hi = 0.0;
                let mut e = 0.0;
                for s in 0..7 {
                    hi += A[6].get(s).copied().unwrap_or(0.0) * k[s][d];
                    e += E[s] * k[s][d];
                }
                next[d] += h_now * hi;
                err = err.max((h_now * e).abs());
            }
            let err = err / self.opts.tol;
            if err <= 1.0 {
                self.stats.accepted += 1;
                self.hits = 0;
                *y = next;
                *t = if h_now == remaining { t_end } else { *t + h_now };
                first = Some(k[6]);
                let fac = SAFETY * err.max(1e-10).powf(-ALPHA) * err_prev.powf(BETA);
                *h = h_now * fac.clamp(MIN_FACTOR, MAX_FACTOR);
                *err_prev = err.max(1e-4);
            } else {
                self.stats.rejected += 1;
                let fac = SAFETY * err.powf(-ALPHA);
                *h = h_now * fac.clamp(MIN_FACTOR, 1.0);
                first = Some(k[0]);
            }
        }
        Ok(())
    }

    /// Classical RK4 step of size `h` on a time lattice.
    fn rk4(&mut self, y: &Config, t: f64, h: f64) -> Result<Config> {
        self.regime = t + 0.5 * h;
        let stages = [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
        let mut k = [[0.0; MAX_DIM]; 4];
        for s in 0..4 {
            let mut q = *y;
            if s > 0 {
                for d in 0..self.dim {
                    q[d] += stages[s].1 * h * k[s - 1][d];
                }
            }
            match self.eval(&q, t + stages[s].0 * h)? {
                Some(v) => k[s] = v,
                None => {
                    self.node_hit(t)?;
                    return self.clamped_step(y, t, h);
                }
            }
        }
        self.stats.accepted += 1;
        self.hits = 0;
        let mut next = *y;
        for d in 0..self.dim {
            next[d] += h / 6.0 * (k[0][d] + 2.0 * k[1][d] + 2.0 * k[2][d] + k[3][d]);
        }
        Ok(next)
    }
}

fn check_request(ev: &EvolutionHandle, q0: &Config, times: &[f64], tol: f64) -> Result<()> {
    if q0.dim() != ev.dim() {
        return Err(Error::InvalidTrajectory(format!(
            "{}-dimensional start on a {}-dimensional evolution",
            q0.dim(),
            ev.dim()
        )));
    }
    if !ev.grid().contains(q0) {
        return Err(Error::InvalidTrajectory(format!("start {q0:?} is outside the domain")));
    }
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTrajectory("sample times must be strictly increasing (at least two)".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidTrajectory(format!("tolerance must be positive, got {tol}")));
    }
    let (lo, hi) = ev.window();
    let (a, b) = (times[0], *times.last().unwrap());
    if a < lo - 1e-12 || b > hi + 1e-12 * hi.abs().max(1.0) {
        return Err(Error::OutsideWindow {
            t: if a < lo { a } else { b },
            reason: "trajectory interval exceeds the evolution's validity window",
        });
    }
    Ok(())
}

/// `n` uniform sample times from `t0` to `t1` inclusive.
pub fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| if i == n - 1 { t1 } else { t0 + (t1 - t0) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Integrate `q̇ = v(q, t)` from `q0` at `t0` to `t1`, sampled at 101 uniform times.
pub fn integrate_trajectory(ev: &EvolutionHandle, q0: &Config, t0: f64, t1: f64, tol: f64) -> Result<Trajectory> {
    integrate_at(ev, q0, &uniform_times(t0, t1, 101), &IntegratorOptions::new(tol))
}

/// Integrate from `q0` at `times[0]`, recording the configuration at each of `times`.
///
/// Adaptive Dormand–Prince 5(4) with PI control; on split-step evolutions,
/// classical RK4 with the field step on the half-step lattice. Steps are
/// clipped to hit every sample time and every breakpoint of the evolution
/// exactly.
pub fn integrate_at(ev: &EvolutionHandle, q0: &Config, times: &[f64], opts: &IntegratorOptions) -> Result<Trajectory> {
    check_request(ev, q0, times, opts.tol)?;
    let grid = ev.grid();
    let mut y = *q0;
    let mut t = times[0];
    let record = |y: &Config| {
        let mut w = *y;
        grid.wrap(&mut w);
        w
    };
    let mut out = Trajectory {
        times: vec![t],
        points: vec![record(&y)],
        flags: vec![SampleFlags::default()],
        stats: IntegratorStats::default(),
        tol: opts.tol,
    };
    match ev.time_step() {
        Some(dt) => {
            let mut it = Integrator::new(ev, *opts, dt);
            let t_start = ev.window().0;
            for &target in &times[1..] {
                let steps = (target - t_start) / dt;
                if (steps - steps.round()).abs() > 1e-6 {
                    return Err(Error::InvalidTrajectory(format!(
                        "sample time {target} is not a multiple of the field step {dt}"
                    )));
                }
                let n = ((target - t) / dt).round() as usize;
                for i in 0..n {
                    y = it.rk4(&y, t, dt)?;
                    t = if i + 1 == n { target } else { t + dt };
                }
                out.times.push(target);
                out.points.push(record(&y));
                out.flags.push(std::mem::take(&mut it.pending));
            }
            out.stats = it.stats;
        }
        None => {
            let mut it = Integrator::new(ev, *opts, opts.dt_min);
            let span = times.last().unwrap() - times[0];
            let v0 = it.eval(&y, t)?.map_or(0.0, |v| v.iter().map(|x| x * x).sum::<f64>().sqrt());
            let mut h = (0.01 * span).min(0.1 * grid.min_spacing() / (v0 + 1e-300)).max(opts.dt_min);
            let mut err_prev = 1e-4;
            let breaks = ev.breakpoints();
            for &target in &times[1..] {
                let inner: Vec<f64> = breaks.iter().cloned().filter(|&b| b > t && b < target).collect();
                for b in inner {
                    it.dopri(&mut y, &mut t, b, &mut h, &mut err_prev)?;
                }
                it.dopri(&mut y, &mut t, target, &mut h, &mut err_prev)?;
                out.times.push(target);
                out.points.push(record(&y));
                let mut f = SampleFlags::default();
                f.merge(std::mem::take(&mut it.pending));
                out.flags.push(f);
            }
            out.stats = it.stats;
        }
    }
    Ok(out)
}
