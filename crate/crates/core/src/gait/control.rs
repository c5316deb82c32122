use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ControlInputs, ReconstructOptions, Subgait, SubgaitSpec, TwoBeatGaitSpec};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::se2::SE2;
use crate::shapefield::grid_axis;

/// Rotations below this magnitude count as straight-line motion.
pub const STRAIGHT_THRESHOLD: f64 = 1e-9;

/// Signed radius of the circle traced by repeating a displacement.
/// Serialized as a number, or `null` when straight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub enum TurningRadius {
    Straight,
    Radius(f64),
}

impl TurningRadius {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Straight => None,
            Self::Radius(r) => Some(r),
        }
    }
}

impl From<Option<f64>> for TurningRadius {
    fn from(r: Option<f64>) -> Self {
        r.map_or(Self::Straight, Self::Radius)
    }
}

impl From<TurningRadius> for Option<f64> {
    fn from(r: TurningRadius) -> Self {
        r.value()
    }
}

/// `r = ‖(zˣ, zʸ)‖ / (2 sin(z^θ/2))` with `z^θ` wrapped to `(−π, π]`.
pub fn turning_radius(z: &SE2) -> TurningRadius {
    let theta = z.wrapped_theta();
    if theta.abs() < STRAIGHT_THRESHOLD {
        return TurningRadius::Straight;
    }
    TurningRadius::Radius(z.x.hypot(z.y) / (2.0 * (0.5 * theta).sin()))
}

/// `n` scaling-input pairs `a·(cos δ, sin δ)` at uniform `δ ∈ [0, 2π)`.
pub fn direction_gain_circle(a: f64, n: usize) -> Result<Vec<[f64; 2]>> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("gain radius must be positive, got {a}")));
    }
    Ok((0..n)
        .map(|k| {
            let delta = TAU * k as f64 / n as f64;
            [a * delta.cos(), a * delta.sin()]
        })
        .collect())
}

/// Which input of both subgaits a displacement field varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputPlane {
    Scaling,
    Sliding,
}

impl InputPlane {
    fn apply(self, base: ControlInputs, value: f64) -> ControlInputs {
        match self {
            Self::Scaling => ControlInputs::new(value, base.u2),
            Self::Sliding => ControlInputs::new(base.u1, value),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementCell {
    pub u13: f64,
    pub u24: f64,
    /// Per-cycle displacement; `None` when a flow hit a singularity.
    pub z: Option<SE2>,
    pub out_of_bounds: bool,
}

/// Per-cycle displacement over an `n × n` grid of one input plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementField {
    pub plane: InputPlane,
    pub axis: Vec<f64>,
    /// Row-major with the first subgait's input outermost.
    pub cells: Vec<DisplacementCell>,
}

impl DisplacementField {
    pub fn n(&self) -> usize {
        self.axis.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &DisplacementCell {
        &self.cells[i * self.axis.len() + j]
    }

    /// Largest `|component|` over defined cells; 0 = x, 1 = y, 2 = θ.
    pub fn max_abs(&self, component: usize) -> f64 {
        self.cells
            .iter()
            .filter_map(|c| c.z)
            .map(|z| z.to_array()[component].abs())
            .fold(0.0, f64::max)
    }
}

/// Sweeps both subgaits' scaling or sliding input over `[−1, 1]²`, keeping
/// the other input at the template's value.
///
/// A cycle's displacement is the group product of its two subgait
/// displacements, so each distinct subgait is integrated once.
pub fn displacement_field(
    model: &ModelSpec,
    template: &TwoBeatGaitSpec,
    plane: InputPlane,
    n: usize,
    opts: &ReconstructOptions,
) -> Result<DisplacementField> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("displacement grid must be at least 2, got {n}")));
    }
    opts.validate()?;
    template.validate()?;
    let axis = grid_axis([-1.0, 1.0], n);
    let sweep = |spec: &SubgaitSpec| -> Result<Vec<(Option<SE2>, bool)>> {
        axis.par_iter()
            .map(|&v| {
                let spec = spec.clone().with_inputs(plane.apply(spec.inputs, v));
                let subgait = match Subgait::new(model, &spec, opts.flow_step) {
                    Ok(s) => s,
                    Err(Error::SingularShape { .. }) => return Ok((None, true)),
                    Err(e) => return Err(e),
                };
                match subgait.displacement(opts.step) {
                    Ok(z) => Ok((Some(z), subgait.out_of_bounds())),
                    Err(Error::SingularShape { .. }) => Ok((None, true)),
                    Err(e) => Err(e),
                }
            })
            .collect()
    };
    let first = sweep(&template.first)?;
    let second = sweep(&template.second)?;

    let mut cells = Vec::with_capacity(n * n);
    for (i, (za, oa)) in first.iter().enumerate() {
        for (j, (zb, ob)) in second.iter().enumerate() {
            cells.push(DisplacementCell {
                u13: axis[i],
                u24: axis[j],
                z: za.zip(*zb).map(|(a, b)| a.compose(&b)),
                out_of_bounds: *oa || *ob,
            });
        }
    }
    Ok(DisplacementField { plane, axis, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn half_turn_radius() {
        assert_eq!(turning_radius(&SE2::new(0.0, 1.0, PI)), TurningRadius::Radius(0.5));
        assert_eq!(turning_radius(&SE2::new(0.0, 3.0, 0.0)), TurningRadius::Straight);
        assert_eq!(turning_radius(&SE2::new(0.0, 3.0, TAU)), TurningRadius::Straight);
    }

    #[test]
    fn radius_sign_follows_rotation() {
        let r = turning_radius(&SE2::new(0.1, 0.2, -0.3)).value().unwrap();
        assert!(r < 0.0);
        let r = turning_radius(&SE2::new(0.1, 0.2, 0.3)).value().unwrap();
        assert!(r > 0.0);
    }

    #[test]
    fn radius_matches_repeated_arc() {
        // a displacement sampled from a circle of radius 2 through the origin
        let arc = SE2::exp(&crate::se2::SE2Velocity::new(0.0, 2.0 * 0.4, 0.4));
        let r = turning_radius(&arc).value().unwrap();
        assert!((r.abs() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn radius_serializes_as_nullable_number() {
        assert_eq!(serde_json::to_string(&TurningRadius::Straight).unwrap(), "null");
        assert_eq!(serde_json::to_string(&TurningRadius::Radius(1.5)).unwrap(), "1.5");
    }

    #[test]
    fn gain_circle() {
        for a in [0.1, 0.4, 0.7] {
            let pts = direction_gain_circle(a, 12).unwrap();
            assert_eq!(pts.len(), 12);
            assert_eq!(pts[0], [a, 0.0]);
            for p in pts {
                assert!((p[0].hypot(p[1]) - a).abs() < 1e-15);
            }
        }
        assert!(direction_gain_circle(0.0, 4).is_err());
    }
}
