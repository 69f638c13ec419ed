use crate::ensemble::member_rng;
use crate::error::{Error, Result};
use crate::guidance::{integrate_at, IntegratorOptions};
use crate::propagate::{EvolutionHandle, PositionCoupling, ProbeFunction};
use crate::qstate::{density, Config, WaveField};

use super::{CouplingSpec, MeasurementRecord, MEASUREMENT_TOL};

fn check_line(field: &WaveField) -> Result<()> {
    if field.grid().ndim() != 1 {
        return Err(Error::InvalidCoupling("the measured system must be one-dimensional".into()));
    }
    Ok(())
}

/// Couple `x̂` to the pointer, read it, and integrate the joint
/// trajectory from `(x_actual, y0)`.
fn probe(
    field: &WaveField,
    x_actual: f64,
    coupling: &CouplingSpec,
    y0: f64,
    f: ProbeFunction,
) -> Result<(f64, Config, crate::guidance::SampleFlags)> {
    let xs = field.grid().axis(0).points();
    let (fmin, fmax) = xs
        .iter()
        .map(|&x| f.value(x))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let at = coupling.a_tau();
    let pointer = coupling.pointer_field(at * fmin, at * fmax)?;
    let ev = EvolutionHandle::position_coupling(PositionCoupling::new(field, &pointer, coupling.a, coupling.tau, f)?);
    let tr = integrate_at(
        &ev,
        &Config::new(&[x_actual, y0]),
        &[0.0, coupling.tau],
        &IntegratorOptions::new(MEASUREMENT_TOL),
    )?;
    let q = *tr.last();
    Ok((q[1], q, tr.flags[1]))
}

/// Ideal subquantum position measurement: `Ĥ = a x̂ p̂ᵧ` for a time `τ`, read
/// with a pointer started at `y0` (drawn from the narrow distribution).
///
/// The pointer width must resolve one grid cell: `w ≤ aτΔx`. The position
/// estimate is `reading / aτ`; the disturbance is exact for the Gaussian
/// pointer, `1 - |∫ |ψ₀|² ⟨g₀|g₀(· - aτx)⟩ dx|²`.
pub fn run_subquantum_measurement(
    system: &WaveField,
    x_actual: f64,
    coupling: &CouplingSpec,
    y0: f64,
) -> Result<MeasurementRecord> {
    check_line(system)?;
    coupling.validate()?;
    let w = coupling
        .narrow_width()
        .ok_or_else(|| Error::InvalidCoupling("a subquantum measurement needs a narrow pointer".into()))?;
    let dx = system.grid().axis(0).spacing();
    let at = coupling.a_tau();
    if w > at * dx * (1.0 + 1e-12) {
        return Err(Error::ResolutionTooCoarse {
            width: w,
            resolution: dx,
            a_tau: at,
        });
    }
    let (reading, q, flags) = probe(system, x_actual, coupling, y0, ProbeFunction::Coordinate)?;
    let xs = system.grid().axis(0).points();
    let overlap: f64 = density(system)
        .iter()
        .zip(&xs)
        .map(|(r, &x)| r * coupling.pointer_overlap(at * x))
        .sum::<f64>()
        * dx;
    let estimate = reading / at;
    Ok(MeasurementRecord {
        outcome_index: None,
        pointer_start: y0,
        pointer_reading: reading,
        inferred_value: estimate,
        wave_disturbance: (1.0 - overlap * overlap).clamp(0.0, 1.0),
        trajectory_estimate: Some(estimate),
        final_config: q,
        flags,
    })
}

/// Estimated and reference paths from repeated subquantum measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingResult {
    pub times: Vec<f64>,
    pub estimates: Vec<f64>,
    /// The actual trajectory at the probe times.
    pub reference: Vec<f64>,
    pub records: Vec<MeasurementRecord>,
}

impl TrackingResult {
    pub fn errors(&self) -> Vec<f64> {
        self.estimates.iter().zip(&self.reference).map(|(e, r)| e - r).collect()
    }

    pub fn rms_error(&self) -> f64 {
        let e = self.errors();
        (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt()
    }

    pub fn max_error(&self) -> f64 {
        self.errors().iter().fold(0.0, |m, e| m.max(e.abs()))
    }
}

/// Reconstruct a trajectory by subquantum measurements at `probe_times`,
/// each with a fresh pointer drawn from stream `k` of `seed`. The particle
/// starts at `q0` at `probe_times[0]` and moves with the undisturbed wave
/// between probes.
pub fn track_trajectory(
    ev: &EvolutionHandle,
    q0: f64,
    probe_times: &[f64],
    coupling: &CouplingSpec,
    seed: u64,
) -> Result<TrackingResult> {
    if ev.dim() != 1 {
        return Err(Error::InvalidCoupling("tracking needs a one-dimensional system".into()));
    }
    if probe_times.is_empty() {
        return Err(Error::InvalidTrajectory("no probe times".into()));
    }
    let reference: Vec<f64> = if probe_times.len() == 1 {
        vec![q0]
    } else {
        integrate_at(ev, &Config::from(q0), probe_times, &IntegratorOptions::new(MEASUREMENT_TOL))?
            .points
            .iter()
            .map(|p| p[0])
            .collect()
    };
    let mut records = Vec::with_capacity(probe_times.len());
    for (k, (&t, &x)) in probe_times.iter().zip(&reference).enumerate() {
        let field = ev.field_at(t)?;
        let y0 = coupling.draw_pointer(&mut member_rng(seed, k));
        records.push(run_subquantum_measurement(&field, x, coupling, y0)?);
    }
    Ok(TrackingResult {
        times: probe_times.to_vec(),
        estimates: records.iter().map(|r| r.trajectory_estimate.unwrap()).collect(),
        reference,
        records,
    })
}

/// Location and spread of one of the two packets of a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketInfo {
    pub centre: f64,
    pub sigma: f64,
    pub weight: f64,
    /// Probe interval: centred on the packet, reaching the split point.
    pub interval: (f64, f64),
}

/// Split a two-packet 1-D field into its left (0) and right (1) packets by
/// weighted two-means clustering of `|ψ|²`; the packets must be separated by
/// more than six times the larger spread.
pub fn split_packets(field: &WaveField) -> Result<[PacketInfo; 2]> {
    check_line(field)?;
    let xs = field.grid().axis(0).points();
    let rho = density(field);
    let mut split = xs.iter().zip(&rho).map(|(x, r)| x * r).sum::<f64>() / rho.iter().sum::<f64>();
    let moments = |split: f64| {
        let mut m = [[0.0; 3]; 2];
        for (&x, &r) in xs.iter().zip(&rho) {
            let k = usize::from(x >= split);
            m[k][0] += r;
            m[k][1] += r * x;
            m[k][2] += r * x * x;
        }
        m
    };
    for _ in 0..100 {
        let m = moments(split);
        if m[0][0] == 0.0 || m[1][0] == 0.0 {
            return Err(Error::PacketOverlap {
                separation: 0.0,
                required: 0.0,
            });
        }
        let next = 0.5 * (m[0][1] / m[0][0] + m[1][1] / m[1][0]);
        if (next - split).abs() < 1e-14 * (1.0 + split.abs()) {
            break;
        }
        split = next;
    }
    let m = moments(split);
    let dx = field.grid().axis(0).spacing();
    let info = |k: usize| {
        let c = m[k][1] / m[k][0];
        let h = (split - c).abs();
        PacketInfo {
            centre: c,
            sigma: (m[k][2] / m[k][0] - c * c).max(0.0).sqrt(),
            weight: m[k][0] * dx,
            interval: (c - h, c + h),
        }
    };
    let p = [info(0), info(1)];
    let separation = p[1].centre - p[0].centre;
    let required = 6.0 * p[0].sigma.max(p[1].sigma);
    if !(separation > required) {
        return Err(Error::PacketOverlap { separation, required });
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Occupancy {
    Occupied,
    Unoccupied,
}

impl Occupancy {
    pub fn label(self) -> &'static str {
        match self {
            Occupancy::Occupied => "occupied",
            Occupancy::Unoccupied => "unoccupied",
        }
    }
}

/// Ask whether packet `target` (0 = left, 1 = right) holds the particle at
/// `q_actual`, by coupling the pointer to a smoothed indicator of that
/// packet. The pointer reads "occupied" when it moved by more than `aτ/2`.
pub fn occupancy_probe(
    field: &WaveField,
    target: usize,
    q_actual: f64,
    coupling: &CouplingSpec,
    y0: f64,
) -> Result<(Occupancy, MeasurementRecord)> {
    coupling.validate()?;
    if target > 1 {
        return Err(Error::InvalidCoupling(format!("packet label {target} is not 0 or 1")));
    }
    let at = coupling.a_tau();
    if at <= 6.0 * coupling.pointer_sigma {
        return Err(Error::BranchOverlap {
            separation: at,
            required: 6.0 * coupling.pointer_sigma,
        });
    }
    let packets = split_packets(field)?;
    let p = packets[target];
    let width = 2.0 * field.grid().axis(0).spacing();
    let f = ProbeFunction::SmoothIndicator {
        lo: p.interval.0,
        hi: p.interval.1,
        width,
    };
    let (reading, q, flags) = probe(field, q_actual, coupling, y0, f)?;
    let verdict = if reading - y0 > 0.5 * at {
        Occupancy::Occupied
    } else {
        Occupancy::Unoccupied
    };
    let inside: f64 = density(field)
        .iter()
        .zip(field.grid().axis(0).points())
        .map(|(r, x)| r * f.value(x))
        .sum::<f64>()
        * field.grid().axis(0).spacing();
    let kept = match verdict {
        Occupancy::Occupied => inside,
        Occupancy::Unoccupied => 1.0 - inside,
    };
    let record = MeasurementRecord {
        outcome_index: Some(usize::from(verdict == Occupancy::Occupied)),
        pointer_start: y0,
        pointer_reading: reading,
        inferred_value: reading / at,
        wave_disturbance: (1.0 - kept).clamp(0.0, 1.0),
        trajectory_estimate: None,
        final_config: q,
        flags,
    };
    Ok((verdict, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{normalize_coefficients, Axis, GaussianPacket, Grid, ModeExpansion, PacketState};
    use crate::C64;
    use std::f64::consts::PI;

    fn packets(centres: &[f64], sigma: f64) -> WaveField {
        let g = Grid::line(Axis::periodic(256, -10.0, 10.0).unwrap());
        let st = PacketState::new(
            vec![C64::new(1.0, 0.0); centres.len()],
            centres.iter().map(|&c| vec![GaussianPacket::new(c, 0.0, sigma, 1.0)]).collect(),
        )
        .unwrap();
        crate::qstate::normalize(&st.tabulate(&g, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn single_packet_estimate_and_pointer_velocity() {
        let f = packets(&[1.3], 0.5);
        let dx = f.grid().axis(0).spacing();
        let c = CouplingSpec::narrow(1e-3, 1.0, 1.0, Some(1e-3 * dx)).unwrap();
        let r = run_subquantum_measurement(&f, 1.3, &c, 0.0).unwrap();
        assert!((r.trajectory_estimate.unwrap() - 1.3).abs() < 1e-9);
        assert!((r.pointer_reading - 1e-3 * 1.3).abs() < 1e-12);
        assert!((r.final_config[0] - 1.3).abs() < 1e-14);
        let r = run_subquantum_measurement(&f, 1.3, &c, 0.4 * 1e-3 * dx).unwrap();
        assert!((r.trajectory_estimate.unwrap() - 1.3).abs() <= 0.5 * dx);
        assert!(r.wave_disturbance < 1e-6);
    }

    #[test]
    fn resolution_precondition() {
        let f = packets(&[0.0], 0.5);
        let dx = f.grid().axis(0).spacing();
        let c = CouplingSpec::narrow(1e-3, 1.0, 1.0, Some(2e-3 * dx)).unwrap();
        assert!(matches!(run_subquantum_measurement(&f, 0.0, &c, 0.0), Err(Error::ResolutionTooCoarse { .. })));
        let eq = CouplingSpec::equilibrium(1e-3, 1.0, 1.0).unwrap();
        assert!(run_subquantum_measurement(&f, 0.0, &eq, 0.0).is_err());
        assert!(CouplingSpec::narrow(1.0, 1.0, 1.0, Some(0.02)).is_err());
    }

    #[test]
    fn disturbance_vanishes_with_coupling() {
        let (mu, s) = (2.0, 0.5);
        let f = packets(&[mu], s);
        let dx = f.grid().axis(0).spacing();
        let d: Vec<f64> = [1e-3, 1e-2, 1e-1]
            .iter()
            .map(|&at| {
                let c = CouplingSpec::narrow(at, 1.0, 1.0, Some(at * dx)).unwrap();
                let got = run_subquantum_measurement(&f, mu, &c, 0.0).unwrap().wave_disturbance;
                // E[exp(-k x²)] for x ~ N(mu, s²), k = (aτ)²/(8σ²).
                let k = at * at / 8.0;
                let o = (-k * mu * mu / (1.0 + 2.0 * k * s * s)).exp() / (1.0 + 2.0 * k * s * s).sqrt();
                assert!((got - (1.0 - o * o)).abs() < 1e-6 * (1.0 - o * o), "{got}");
                got
            })
            .collect();
        for w in d.windows(2) {
            assert!(w[1] > 10.0 * w[0], "{d:?}");
        }
    }

    #[test]
    fn two_packet_estimate_lands_in_the_right_packet() {
        let f = packets(&[-2.0, 2.0], 0.4);
        let dx = f.grid().axis(0).spacing();
        let c = CouplingSpec::narrow(1e-3, 1.0, 2.0, Some(1e-3 * dx)).unwrap();
        let r = run_subquantum_measurement(&f, 2.3, &c, -0.3e-3 * dx).unwrap();
        let e = r.trajectory_estimate.unwrap();
        assert!(e > 2.0 - 3.0 * 0.4 && e < 2.0 + 3.0 * 0.4);
        assert!(1.0 - r.wave_disturbance >= 1.0 - 1e-6);
    }

    #[test]
    fn tracking_a_stationary_and_a_moving_state() {
        let g = Grid::line(Axis::walled(64, 0.0, PI).unwrap());
        let dx = g.axis(0).spacing();
        let c = CouplingSpec::narrow(1e-3, 1e-3, 1.0, Some(1e-6 * dx)).unwrap();
        let ground = ModeExpansion::box_sine(g.clone(), vec![1.0], vec![vec![1]], vec![C64::new(1.0, 0.0)]).unwrap();
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.4).collect();
        let t = track_trajectory(&EvolutionHandle::eigenmode(ground), 1.1, &times, &c, 3).unwrap();
        assert!(t.estimates.iter().all(|e| (e - 1.1).abs() <= 0.5 * dx));
        let cc = normalize_coefficients(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let two = ModeExpansion::box_sine(g, vec![1.0], vec![vec![1], vec![2]], cc).unwrap();
        let period = 2.0 * PI / (two.energies()[1] - two.energies()[0]);
        let times: Vec<f64> = (0..10).map(|k| k as f64 * period / 9.0).collect();
        let t = track_trajectory(&EvolutionHandle::eigenmode(two), 1.0, &times, &c, 3).unwrap();
        assert!(t.rms_error() < 5.0 * dx && t.max_error() <= 0.5 * dx + 1e-9);
        let moved = t.reference.iter().fold(0.0f64, |m, x| m.max((x - 1.0).abs()));
        assert!(moved > 10.0 * dx);
    }

    #[test]
    fn occupancy_verdicts() {
        let f = packets(&[-4.0, 4.0], 0.5);
        let p = split_packets(&f).unwrap();
        assert!((p[0].centre + 4.0).abs() < 1e-9 && (p[1].sigma - 0.5).abs() < 1e-6);
        assert!((p[0].weight - 0.5).abs() < 1e-9);
        let c = CouplingSpec::equilibrium(20.0, 1.0, 1.0).unwrap();
        for y0 in [-1.5, 0.0, 2.0] {
            assert_eq!(occupancy_probe(&f, 0, 4.2, &c, y0).unwrap().0, Occupancy::Unoccupied);
            assert_eq!(occupancy_probe(&f, 1, 4.2, &c, y0).unwrap().0, Occupancy::Occupied);
            assert_eq!(occupancy_probe(&f, 0, -3.7, &c, y0).unwrap().0, Occupancy::Occupied);
            assert_eq!(occupancy_probe(&f, 1, -3.7, &c, y0).unwrap().0, Occupancy::Unoccupied);
        }
        assert!(matches!(split_packets(&packets(&[-1.0, 1.0], 0.5)), Err(Error::PacketOverlap { .. })));
    }
}
