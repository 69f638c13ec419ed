use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::grid::{Grid, MAX_DIM};
use crate::qstate::jet::JetOrder;
use crate::qstate::spectral::TrigSeries;
use crate::C64;

/// External potential V(q).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    Free,
    /// `V = Σₖ ½ mₖ ω² (qₖ - cₖ)²`
    Harmonic { omega: f64, center: Vec<f64> },
    /// Zero inside the grid, infinite at the walls; only meaningful on box axes.
    BoxWall,
    /// Wall of `height` across axis 0 at `position` with `thickness`, pierced by
    /// two slits of `slit_width` centred at `±slit_separation/2` on axis 1.
    BarrierWithSlits {
        position: f64,
        thickness: f64,
        height: f64,
        slit_separation: f64,
        slit_width: f64,
    },
    /// Values on the row-major grid the potential is used with.
    Tabulated { values: Vec<f64> },
}

impl PotentialSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PotentialSpec::Free => "free",
            PotentialSpec::Harmonic { .. } => "harmonic",
            PotentialSpec::BoxWall => "box-wall",
            PotentialSpec::BarrierWithSlits { .. } => "barrier-with-slits",
            PotentialSpec::Tabulated { .. } => "tabulated",
        }
    }

    /// Build from a kind name and its flat parameter list.
    ///
    /// * `free`, `box-wall`: no parameters
    /// * `harmonic`: `[omega, c1, c2, ...]` (centres default to 0)
    /// * `barrier-with-slits`: `[position, thickness, height, slit_separation, slit_width]`
    /// * `tabulated`: the grid values themselves
    pub fn from_params(kind: &str, params: &[f64]) -> Result<Self> {
        let spec = match kind {
            "free" => PotentialSpec::Free,
            "box-wall" => PotentialSpec::BoxWall,
            "harmonic" => {
                let (&omega, center) = params
                    .split_first()
                    .ok_or_else(|| Error::InvalidPotential("harmonic needs a frequency".into()))?;
                PotentialSpec::Harmonic {
                    omega,
                    center: center.to_vec(),
                }
            }
            "barrier-with-slits" => match *params {
                [position, thickness, height, slit_separation, slit_width] => {
                    PotentialSpec::BarrierWithSlits {
                        position,
                        thickness,
                        height,
                        slit_separation,
                        slit_width,
                    }
                }
                _ => {
                    return Err(Error::InvalidPotential(
                        "barrier-with-slits needs 5 parameters".into(),
                    ))
                }
            },
            "tabulated" => PotentialSpec::Tabulated {
                values: params.to_vec(),
            },
            other => return Err(Error::InvalidPotential(format!("unknown kind `{other}`"))),
        };
        Ok(spec)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match self {
            PotentialSpec::Free | PotentialSpec::BoxWall => Ok(()),
            PotentialSpec::Harmonic { omega, center } => {
                if !(*omega > 0.0) {
                    return Err(Error::InvalidPotential(format!("harmonic frequency {omega} <= 0")));
                }
                if center.len() > grid.ndim() {
                    return Err(Error::InvalidPotential("more centres than axes".into()));
                }
                Ok(())
            }
            PotentialSpec::BarrierWithSlits {
                thickness,
                height,
                slit_separation,
                slit_width,
                ..
            } => {
                if grid.ndim() < 2 {
                    return Err(Error::InvalidPotential("slit barrier needs two axes".into()));
                }
                let extent = grid.axis(1).length();
                if !(*thickness > 0.0 && *height >= 0.0 && *slit_width > 0.0) {
                    return Err(Error::InvalidPotential("non-positive barrier dimension".into()));
                }
                if !(slit_width < slit_separation && slit_separation + slit_width < extent) {
                    return Err(Error::InvalidPotential(format!(
                        "slits (width {slit_width}, separation {slit_separation}) do not fit a barrier of extent {extent}"
                    )));
                }
                Ok(())
            }
            PotentialSpec::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(Error::InvalidPotential(format!(
                        "{} tabulated values for {} grid points",
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(())
            }
        }
    }

    /// V at a configuration. Off-grid tabulated values use the band-limited interpolant.
    pub fn value(&self, q: &[f64], masses: &[f64], grid: &Grid) -> f64 {
        match self {
            PotentialSpec::Free | PotentialSpec::BoxWall => 0.0,
            PotentialSpec::Harmonic { omega, center } => q
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let c = center.get(k).copied().unwrap_or(0.0);
                    0.5 * masses[k] * omega * omega * (x - c) * (x - c)
                })
                .sum(),
            PotentialSpec::BarrierWithSlits {
                position,
                thickness,
                height,
                slit_separation,
                slit_width,
            } => {
                let in_wall = (q[0] - position).abs() < 0.5 * thickness;
                let in_slit = (q[1] - 0.5 * slit_separation).abs() < 0.5 * slit_width
                    || (q[1] + 0.5 * slit_separation).abs() < 0.5 * slit_width;
                if in_wall && !in_slit {
                    *height
                } else {
                    0.0
                }
            }
            PotentialSpec::Tabulated { values } => self.series(grid, values).eval(q, JetOrder::Value).value.re,
        }
    }

    /// ∇V at a configuration.
    pub fn gradient(&self, q: &[f64], masses: &[f64], grid: &Grid) -> [f64; MAX_DIM] {
        let mut g = [0.0; MAX_DIM];
        match self {
            PotentialSpec::Harmonic { omega, center } => {
                for (k, &x) in q.iter().enumerate() {
                    let c = center.get(k).copied().unwrap_or(0.0);
                    g[k] = masses[k] * omega * omega * (x - c);
                }
            }
            PotentialSpec::Tabulated { values } => {
                let jet = self.series(grid, values).eval(q, JetOrder::Gradient);
                for k in 0..q.len() {
                    g[k] = jet.grad[k].re;
                }
            }
            // Piecewise-constant walls have no finite gradient away from their edges.
            PotentialSpec::Free | PotentialSpec::BoxWall | PotentialSpec::BarrierWithSlits { .. } => {}
        }
        g
    }

    fn series(&self, grid: &Grid, values: &[f64]) -> TrigSeries {
        let c: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        TrigSeries::from_samples(grid, &c, 0.0)
    }

    /// V on every grid point.
    pub fn tabulate(&self, grid: &Grid, masses: &[f64]) -> Vec<f64> {
        match self {
            PotentialSpec::Tabulated { values } => values.clone(),
            _ => (0..grid.len())
                .map(|i| self.value(&grid.point(i), masses, grid))
                .collect(),
        }
    }
}
