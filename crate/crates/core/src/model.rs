//! Planar multi-leg system description, foot Jacobians, stacked Pfaffian
//! constraints and the local connection.

use std::fs;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se2::{SE2Velocity, SE2};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MIN_LEGS: usize = 2;
pub const MAX_LEGS: usize = 8;

/// Relative cutoff on singular values of the body-velocity block.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

const FOURBAR_JSON: &str = include_str!("../models/fourbar.json");
const QUAD_JSON: &str = include_str!("../models/quad.json");

/// One leg: a hip frame on the body, a rigid limb of length `length`
/// rotating about the hip, and its swing range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegModule {
    #[serde(rename = "hip")]
    pub hip_offset: SE2,
    #[serde(rename = "length")]
    pub leg_length: f64,
    /// `[swing_min, swing_max]`
    pub swing: [f64; 2],
}

impl LegModule {
    pub fn new(hip_offset: SE2, leg_length: f64, swing_min: f64, swing_max: f64) -> Self {
        Self {
            hip_offset,
            leg_length,
            swing: [swing_min, swing_max],
        }
    }

    pub fn swing_min(&self) -> f64 {
        self.swing[0]
    }

    pub fn swing_max(&self) -> f64 {
        self.swing[1]
    }

    pub fn within_swing(&self, alpha: f64) -> bool {
        alpha >= self.swing[0] && alpha <= self.swing[1]
    }

    /// Foot frame relative to the body frame: hip, then limb rotation, then
    /// translation along the rotated limb axis.
    pub fn foot_pose(&self, alpha: f64) -> SE2 {
        self.hip_offset
            .compose(&SE2::rotation(alpha))
            .compose(&SE2::translation_by(self.leg_length, 0.0))
    }

    /// Foot position in the body frame.
    pub fn foot_position(&self, alpha: f64) -> Vector2<f64> {
        let a = self.hip_offset.theta + alpha;
        Vector2::new(
            self.hip_offset.x + self.leg_length * a.cos(),
            self.hip_offset.y + self.leg_length * a.sin(),
        )
    }

    /// `∂p/∂α` of the foot position in the body frame.
    pub fn foot_position_rate(&self, alpha: f64) -> Vector2<f64> {
        let a = self.hip_offset.theta + alpha;
        Vector2::new(-self.leg_length * a.sin(), self.leg_length * a.cos())
    }

    /// `∂²p/∂α²` of the foot position in the body frame.
    pub fn foot_position_curvature(&self, alpha: f64) -> Vector2<f64> {
        let a = self.hip_offset.theta + alpha;
        Vector2::new(-self.leg_length * a.cos(), -self.leg_length * a.sin())
    }
}

/// Geometry of a planar legged system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    pub name: String,
    pub legs: Vec<LegModule>,
    /// Informational; geometry is fully determined by the legs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_length: Option<f64>,
}

fn default_version() -> u32 {
    MODEL_FORMAT_VERSION
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, legs: Vec<LegModule>) -> Result<Self> {
        let model = Self {
            version: MODEL_FORMAT_VERSION,
            name: name.into(),
            legs,
            body_length: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Two-legged four-bar: body of length 2, unit limbs, swing `[-π/2, π]`.
    pub fn fourbar() -> Self {
        Self::from_json(FOURBAR_JSON).expect("bundled four-bar model is valid")
    }

    /// Sprawled quadruped with hips at `(±1, ±1)` and unit limbs.
    ///
    /// Legs are numbered rear-left, rear-right, front-right, front-left
    /// (front is `+y`), so `{1, 3}` and `{2, 4}` are the diagonal pairs.
    pub fn quadruped() -> Self {
        Self::from_json(QUAD_JSON).expect("bundled quadruped model is valid")
    }

    pub fn bundled_json(name: &str) -> Option<&'static str> {
        match name {
            "fourbar" | "fourbar.json" => Some(FOURBAR_JSON),
            "quad" | "quad.json" => Some(QUAD_JSON),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ModelSpec = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    /// Loads a model file. The names `fourbar.json` and `quad.json` fall back
    /// to the bundled definitions when no such file exists on disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(err) if err.kind() == std::io::ErrorKind::NotFound => {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                match Self::bundled_json(name) {
                    Some(text) if path.components().count() == 1 => Self::from_json(text),
                    _ => Err(err.into()),
                }
            }
            Err(err) => Err(err.into()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.legs.len();
        if !(MIN_LEGS..=MAX_LEGS).contains(&n) {
            return Err(Error::InvalidModel(format!(
                "leg count {n} outside [{MIN_LEGS}, {MAX_LEGS}]"
            )));
        }
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported model version {}",
                self.version
            )));
        }
        for (i, leg) in self.legs.iter().enumerate() {
            if !leg.hip_offset.is_finite() {
                return Err(Error::InvalidModel(format!("leg {}: non-finite hip offset", i + 1)));
            }
            if !(leg.leg_length > 0.0) || !leg.leg_length.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "leg {}: length must be positive, got {}",
                    i + 1,
                    leg.leg_length
                )));
            }
            if !(leg.swing[0] < leg.swing[1]) {
                return Err(Error::InvalidModel(format!(
                    "leg {}: swing_min must be below swing_max",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn leg_count(&self) -> usize {
        self.legs.len()
    }

    pub fn leg(&self, index: usize) -> Result<&LegModule> {
        self.legs.get(index).ok_or(Error::InvalidLeg {
            index,
            count: self.legs.len(),
        })
    }

    fn check_shape(&self, alpha: &ShapePoint) -> Result<()> {
        if alpha.len() != self.legs.len() {
            return Err(Error::ShapeArity {
                expected: self.legs.len(),
                got: alpha.len(),
            });
        }
        Ok(())
    }

    fn check_contact(&self, beta: &ContactState) -> Result<()> {
        if beta.len() != self.legs.len() {
            return Err(Error::ShapeArity {
                expected: self.legs.len(),
                got: beta.len(),
            });
        }
        Ok(())
    }

    /// Soft limit check: true when every angle lies in its swing range.
    pub fn within_limits(&self, alpha: &ShapePoint) -> bool {
        self.legs
            .iter()
            .zip(alpha.iter())
            .all(|(leg, &a)| leg.within_swing(a))
    }

    /// Foot frame of `leg` in the body frame.
    pub fn foot_pose(&self, alpha: &ShapePoint, leg: usize) -> Result<SE2> {
        self.check_shape(alpha)?;
        Ok(self.leg(leg)?.foot_pose(alpha[leg]))
    }
}

/// Limb angles, one per leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapePoint(pub Vec<f64>);

impl ShapePoint {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }
}

impl From<Vec<f64>> for ShapePoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for ShapePoint {
    type Target = Vec<f64>;

    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for ShapePoint {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

/// Per-leg contact flags; `true` means the foot is pinned.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContactState(pub Vec<bool>);

impl ContactState {
    pub fn none(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn from_legs(n: usize, stance: &[usize]) -> Self {
        let mut beta = vec![false; n];
        for &i in stance {
            if i < n {
                beta[i] = true;
            }
        }
        Self(beta)
    }

    pub fn stance_legs(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn stance_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl Deref for ContactState {
    type Target = Vec<bool>;

    fn deref(&self) -> &Vec<bool> {
        &self.0
    }
}

/// Jacobian mapping `(body velocity; shape velocities)` to the foot-frame
/// velocity of `leg`. The result is `3 × (3 + n)`.
pub fn foot_jacobian(model: &ModelSpec, alpha: &ShapePoint, leg: usize) -> Result<DMatrix<f64>> {
    let foot = model.foot_pose(alpha, leg)?;
    let n = model.leg_count();
    let mut j = DMatrix::zeros(3, 3 + n);
    j.view_mut((0, 0), (3, 3))
        .copy_from(&foot.inverse().adjoint());
    // Hip rotation seen from the foot: Ad of the inverse limb translation
    // applied to a unit rotation rate.
    let l = model.legs[leg].leg_length;
    j[(0, 3 + leg)] = 0.0;
    j[(1, 3 + leg)] = l;
    j[(2, 3 + leg)] = 1.0;
    Ok(j)
}

/// Stacked translational no-slip constraints `C_xy·J_i` over stance legs.
pub fn pfaffian(model: &ModelSpec, alpha: &ShapePoint, stance: &ContactState) -> Result<DMatrix<f64>> {
    model.check_contact(stance)?;
    let legs = stance.stance_legs();
    if legs.is_empty() {
        return Err(Error::EmptyStance);
    }
    let n = model.leg_count();
    let mut omega = DMatrix::zeros(2 * legs.len(), 3 + n);
    for (row, &leg) in legs.iter().enumerate() {
        let j = foot_jacobian(model, alpha, leg)?;
        omega.view_mut((2 * row, 0), (2, 3 + n)).copy_from(&j.rows(0, 2));
    }
    Ok(omega)
}

/// Linear map from stance-leg shape velocities to body velocity,
/// `ġ_b = −A·α̇`, at one shape.
#[derive(Clone, Debug)]
pub struct LocalConnection {
    /// `3 × k`; rows are body `x, y, θ`, columns follow `stance_legs`.
    pub a: DMatrix<f64>,
    pub stance_legs: Vec<usize>,
    pub shape_point: ShapePoint,
    pub stance: ContactState,
    /// Smallest singular value of the constraint part that the body
    /// velocity cannot absorb; zero when an admissible shape velocity exists.
    pub residual: f64,
    /// Effective rank of the body-velocity block.
    pub rank: usize,
}

impl LocalConnection {
    pub fn is_full_rank(&self) -> bool {
        self.rank == 3
    }

    /// `3 × n` matrix with zero columns for swing legs.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let n = self.stance.len();
        let mut full = DMatrix::zeros(3, n);
        for (col, &leg) in self.stance_legs.iter().enumerate() {
            full.set_column(leg, &self.a.column(col));
        }
        full
    }

    /// Body velocity `−A·α̇` for stance-leg shape velocities (ordered as
    /// `stance_legs`).
    pub fn body_velocity(&self, stance_rates: &[f64]) -> SE2Velocity {
        assert_eq!(stance_rates.len(), self.stance_legs.len());
        let v = -(&self.a * DVector::from_column_slice(stance_rates));
        SE2Velocity::new(v[0], v[1], v[2])
    }
}

/// Computes the local connection by splitting the Pfaffian into its body and
/// stance-shape blocks and applying an SVD pseudoinverse.
pub fn local_connection(model: &ModelSpec, alpha: &ShapePoint, stance: &ContactState) -> Result<LocalConnection> {
    model.check_shape(alpha)?;
    model.check_contact(stance)?;
    let legs = stance.stance_legs();
    if legs.len() > 2 {
        return Err(Error::TooManyStanceLegs { count: legs.len() });
    }
    if legs.is_empty() {
        return Ok(LocalConnection {
            a: DMatrix::zeros(3, 0),
            stance_legs: legs,
            shape_point: alpha.clone(),
            stance: stance.clone(),
            residual: 0.0,
            rank: 0,
        });
    }
    let omega = pfaffian(model, alpha, stance)?;
    let rows = omega.nrows();
    let omega_g = omega.columns(0, 3).into_owned();
    let mut omega_a = DMatrix::zeros(rows, legs.len());
    for (col, &leg) in legs.iter().enumerate() {
        omega_a.set_column(col, &omega.column(3 + leg));
    }

    let (pinv, rank) = pseudo_inverse(&omega_g);
    let a = &pinv * &omega_a;

    // Part of the shape block outside the range of ω_g; an admissible
    // shape velocity lies in its null space.
    let projected = &omega_a - &omega_g * &a;
    let residual = projected
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    Ok(LocalConnection {
        a,
        stance_legs: legs,
        shape_point: alpha.clone(),
        stance: stance.clone(),
        residual: if residual.is_finite() { residual } else { 0.0 },
        rank,
    })
}

/// Moore–Penrose pseudoinverse with singular values below
/// `PINV_RELATIVE_CUTOFF·σ_max` treated as zero. Returns the effective rank.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_RELATIVE_CUTOFF * sigma_max;
    let mut rank = 0;
    let mut inv = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            inv += (v_t.row(k).transpose() * u.column(k).transpose()) / s;
        }
    }
    (inv, rank)
}
