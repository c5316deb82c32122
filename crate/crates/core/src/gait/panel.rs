use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::subgait::stance_velocity;
use super::{Subgait, TwoBeatGaitSpec};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::shapefield::{grid_axis, ReducedShapeSubspace, ShapeField};

/// Direction of the stance path the panel values refer to. `Positive`
/// follows `Δα_F`; `Negative` runs against it and negates every value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelOrientation {
    #[default]
    Positive,
    Negative,
}

impl PanelOrientation {
    pub fn sign(self) -> f64 {
        match self {
            Self::Positive => 1.0,
            Self::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::Positive => Self::Negative,
            Self::Negative => Self::Positive,
        }
    }
}

/// `dz = −A(α)·Δα_F(α)`, the body velocity of an infinitesimal stance–swing
/// cycle at `α` per unit path length.
pub fn panel_value(model: &ModelSpec, subspace: &ReducedShapeSubspace, point: &Vector2<f64>) -> Result<[f64; 3]> {
    let field = ShapeField::new(model, subspace.clone());
    panel_at(&field, point)
}

fn panel_at(field: &ShapeField<'_>, point: &Vector2<f64>) -> Result<[f64; 3]> {
    let model = field.model();
    let subspace = field.subspace();
    let n = model.leg_count();
    let dir = field.nonslip(point)?;
    let xi = stance_velocity(model, &subspace.embed(n, point), &subspace.stance(n), subspace.legs(), &dir)?;
    Ok([xi.vx, xi.vy, xi.omega])
}

/// Panel sampled on an `n × n` grid; `None` marks singular cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratifiedPanelGrid {
    pub subspace: ReducedShapeSubspace,
    pub n: usize,
    /// Sample coordinates along the first and second pair angle.
    pub axes: [Vec<f64>; 2],
    /// Row-major, first axis outermost.
    pub values: Vec<Option<[f64; 3]>>,
    pub orientation: PanelOrientation,
}

impl StratifiedPanelGrid {
    pub const MIN_GRID: usize = 32;

    pub fn get(&self, i: usize, j: usize) -> Option<[f64; 3]> {
        self.values[i * self.n + j]
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.axes[0][i], self.axes[1][j]]
    }

    pub fn singular_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Values for the opposite path orientation.
    pub fn negated(&self) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|v| v.map(|[x, y, t]| [-x, -y, -t]))
                .collect(),
            orientation: self.orientation.flipped(),
            ..self.clone()
        }
    }
}

pub fn stratified_panel(
    model: &ModelSpec,
    subspace: &ReducedShapeSubspace,
    grid_n: usize,
) -> Result<StratifiedPanelGrid> {
    if grid_n < StratifiedPanelGrid::MIN_GRID {
        return Err(Error::InvalidParameter(format!(
            "panel grid must be at least {}, got {grid_n}",
            StratifiedPanelGrid::MIN_GRID
        )));
    }
    let field = ShapeField::new(model, subspace.clone());
    let values = subspace
        .grid(grid_n)
        .par_iter()
        .map(|p| match panel_at(&field, p) {
            Ok(v) if v.iter().all(|c| c.is_finite()) => Ok(Some(v)),
            Ok(_) | Err(Error::SingularShape { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StratifiedPanelGrid {
        subspace: subspace.clone(),
        n: grid_n,
        axes: [grid_axis(subspace.bounds[0], grid_n), grid_axis(subspace.bounds[1], grid_n)],
        values,
        orientation: PanelOrientation::Positive,
    })
}

/// One phase slice of the two-beat panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoBeatPanelSample {
    pub tau: f64,
    /// First-pair shape at `τ`.
    pub first_point: [f64; 2],
    /// Second-pair shape at `−τ`.
    pub second_point: [f64; 2],
    /// Paced subpanel values `dz·k̇`.
    pub first: [f64; 3],
    pub second: [f64; 3],
    pub total: [f64; 3],
}

/// Sum of the paced subpanels at phases `τ` and `−τ` for `n` phases
/// spanning `[0, π]`.
pub fn two_beat_panel(
    model: &ModelSpec,
    gait: &TwoBeatGaitSpec,
    n: usize,
    flow_step: f64,
) -> Result<Vec<TwoBeatPanelSample>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("two-beat panel needs at least 2 phases, got {n}")));
    }
    gait.validate()?;
    let a = Subgait::new(model, &gait.first, flow_step)?;
    let b = Subgait::new(model, &gait.second, flow_step)?;
    let paced = |s: &Subgait<'_>, tau: f64| -> Result<([f64; 2], [f64; 3])> {
        let p = s.shape_at(tau);
        let k = s.pacing();
        let v = if k == 0.0 { [0.0; 3] } else { panel_at(s.field(), &p)?.map(|c| c * k) };
        Ok(([p[0], p[1]], v))
    };
    grid_axis([0.0, PI], n)
        .into_iter()
        .map(|tau| {
            let (first_point, first) = paced(&a, tau)?;
            let (second_point, second) = paced(&b, TAU - tau)?;
            Ok(TwoBeatPanelSample {
                tau,
                first_point,
                second_point,
                first,
                second,
                total: [0, 1, 2].map(|k| first[k] + second[k]),
            })
        })
        .collect()
}

/// `∫₀^π` of the two-beat panel total, by Simpson's rule when the sample
/// count is odd and the trapezoid rule otherwise.
pub fn integrate_two_beat_panel(samples: &[TwoBeatPanelSample]) -> [f64; 3] {
    let n = samples.len();
    if n < 2 {
        return [0.0; 3];
    }
    let h = (samples[n - 1].tau - samples[0].tau) / (n - 1) as f64;
    let weights: Vec<f64> = if n % 2 == 1 {
        (0..n)
            .map(|k| match k {
                0 => 1.0,
                k if k == n - 1 => 1.0,
                k if k % 2 == 1 => 4.0,
                _ => 2.0,
            } * h / 3.0)
            .collect()
    } else {
        (0..n).map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h }).collect()
    };
    let mut sum = [0.0; 3];
    for (s, w) in samples.iter().zip(weights) {
        for k in 0..3 {
            sum[k] += w * s.total[k];
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::local_connection;
    use crate::shapefield::SINGULAR_TOL;

    fn fourbar() -> (ModelSpec, ReducedShapeSubspace) {
        let model = ModelSpec::fourbar();
        let sub = ReducedShapeSubspace::new(&model, 0, 1).unwrap();
        (model, sub)
    }

    #[test]
    fn value_is_connection_times_direction() {
        let (model, sub) = fourbar();
        let p = Vector2::new(0.3, -0.9);
        let conn = local_connection(&model, &sub.embed(2, &p), &sub.stance(2)).unwrap();
        let dir = ShapeField::new(&model, sub.clone()).nonslip(&p).unwrap();
        let expected = -(&conn.a * nalgebra::DVector::from_column_slice(dir.as_slice()));
        let v = panel_value(&model, &sub, &p).unwrap();
        for k in 0..3 {
            assert!((v[k] - expected[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn small_grid_is_rejected() {
        let (model, sub) = fourbar();
        assert!(stratified_panel(&model, &sub, 31).is_err());
    }

    #[test]
    fn theta_vanishes_on_diagonal() {
        let (model, sub) = fourbar();
        let sub = sub.with_bounds(&model, [[-1.5, 1.5], [-1.5, 1.5]]).unwrap();
        let grid = stratified_panel(&model, &sub, 33).unwrap();
        for i in 0..33 {
            if let Some(v) = grid.get(i, i) {
                assert!(v[2].abs() < 1e-10, "theta {} at {:?}", v[2], grid.point(i, i));
            }
        }
    }

    #[test]
    fn singular_cells_are_flagged() {
        let (model, sub) = fourbar();
        let sub = sub.with_bounds(&model, [[-1.0, 1.0], [-1.0, 1.0]]).unwrap();
        let grid = stratified_panel(&model, &sub, 33).unwrap();
        // the grid passes through the maximum of F at the origin
        assert_eq!(grid.singular_count(), 1);
        assert!(grid.get(16, 16).is_none());
        let field = ShapeField::new(&model, sub);
        assert!(field.gradient(&Vector2::zeros()).norm() <= SINGULAR_TOL);
    }

    #[test]
    fn negation_flips_values_and_orientation() {
        let (model, sub) = fourbar();
        let sub = sub.with_bounds(&model, [[0.1, 1.0], [-1.0, -0.1]]).unwrap();
        let grid = stratified_panel(&model, &sub, 32).unwrap();
        let neg = grid.negated();
        assert_eq!(neg.orientation, PanelOrientation::Negative);
        let (a, b) = (grid.get(3, 7).unwrap(), neg.get(3, 7).unwrap());
        assert_eq!(a.map(|c| -c), b);
    }

    #[test]
    fn simpson_integrates_cubic_exactly() {
        let samples: Vec<TwoBeatPanelSample> = grid_axis([0.0, PI], 11)
            .into_iter()
            .map(|tau| TwoBeatPanelSample {
                tau,
                first_point: [0.0; 2],
                second_point: [0.0; 2],
                first: [0.0; 3],
                second: [0.0; 3],
                total: [tau * tau * tau, 1.0, 0.0],
            })
            .collect();
        let i = integrate_two_beat_panel(&samples);
        assert!((i[0] - PI.powi(4) / 4.0).abs() < 1e-12);
        assert!((i[1] - PI).abs() < 1e-12);
    }
}
