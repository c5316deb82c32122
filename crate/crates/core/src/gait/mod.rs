//! Stance–swing subgaits, body reconstruction, stratified panels, two-beat
//! composition and per-cycle control.

mod control;
mod panel;
mod subgait;
mod twobeat;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContactState, ModelSpec, ShapePoint};
use crate::se2::SE2;
use crate::shapefield::{ReducedShapeSubspace, DEFAULT_FLOW_STEP};

pub use control::{
    direction_gain_circle, displacement_field, turning_radius, DisplacementCell, DisplacementField, InputPlane,
    TurningRadius, STRAIGHT_THRESHOLD,
};
pub use panel::{
    integrate_two_beat_panel, panel_value, stratified_panel, two_beat_panel, PanelOrientation, StratifiedPanelGrid, TwoBeatPanelSample,
};
pub use subgait::{reconstruct_body_trajectory, stance_endpoints, subgait_shape_trajectory, Subgait};
pub use twobeat::{compose_two_beat, run_schedule, HalfCycle};

/// Recommended magnitude bound on either input.
pub const INPUT_RANGE: f64 = 1.0;

/// Scaling (`u1`) and sliding (`u2`) flow inputs of one subgait.
///
/// Serialized as `[u1, u2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct ControlInputs {
    pub u1: f64,
    pub u2: f64,
}

impl ControlInputs {
    pub const fn new(u1: f64, u2: f64) -> Self {
        Self { u1, u2 }
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite() && self.u2.is_finite()
    }

    /// Inputs outside `[-1, 1]` still execute but are flagged.
    pub fn out_of_range(&self) -> bool {
        self.u1.abs() > INPUT_RANGE || self.u2.abs() > INPUT_RANGE
    }
}

impl Default for ControlInputs {
    fn default() -> Self {
        Self::new(1.0, 0.0)
    }
}

impl From<[f64; 2]> for ControlInputs {
    fn from([u1, u2]: [f64; 2]) -> Self {
        Self::new(u1, u2)
    }
}

impl From<ControlInputs> for [f64; 2] {
    fn from(u: ControlInputs) -> Self {
        [u.u1, u.u2]
    }
}

/// A stance–swing subgait of one leg pair about a reference shape.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgaitSpec {
    pub subspace: ReducedShapeSubspace,
    pub alpha_star: [f64; 2],
    /// Signed flow time from the reference to the stance start (before scaling).
    pub t0: f64,
    /// Signed flow time from the reference to the stance end, negated.
    pub t_pi: f64,
    pub inputs: ControlInputs,
}

impl SubgaitSpec {
    pub fn new(subspace: ReducedShapeSubspace, alpha_star: [f64; 2], t0: f64, t_pi: f64) -> Self {
        Self {
            subspace,
            alpha_star,
            t0,
            t_pi,
            inputs: ControlInputs::default(),
        }
    }

    pub fn with_inputs(mut self, inputs: ControlInputs) -> Self {
        self.inputs = inputs;
        self
    }

    /// Signed flow times `(a, b)` from the reference point to the stance
    /// start and end: `a = u1·t0 + u2`, `b = −u1·tπ + u2`.
    pub fn flow_times(&self) -> (f64, f64) {
        let ControlInputs { u1, u2 } = self.inputs;
        (u1 * self.t0 + u2, -u1 * self.t_pi + u2)
    }

    /// Signed stance path length.
    pub fn stance_length(&self) -> f64 {
        let (a, b) = self.flow_times();
        b - a
    }

    fn validate(&self) -> Result<()> {
        let finite = self.alpha_star.iter().all(|a| a.is_finite())
            && self.t0.is_finite()
            && self.t_pi.is_finite()
            && self.inputs.is_finite();
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidParameter("subgait parameters must be finite".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    Trot,
    Bound,
    Pace,
}

/// Two alternating stance pairs; `first` stances on `τ ∈ [0, π]`,
/// `second` on `τ ∈ [π, 2π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoBeatGaitSpec {
    pub first: SubgaitSpec,
    pub second: SubgaitSpec,
    pub pairing: Pairing,
}

impl TwoBeatGaitSpec {
    pub fn new(first: SubgaitSpec, second: SubgaitSpec, pairing: Pairing) -> Result<Self> {
        let gait = Self { first, second, pairing };
        gait.validate()?;
        Ok(gait)
    }

    pub fn validate(&self) -> Result<()> {
        self.first.validate()?;
        self.second.validate()?;
        let a = self.first.subspace.legs();
        if let Some(&leg) = self.second.subspace.legs().iter().find(|l| a.contains(l)) {
            return Err(Error::StanceOverlap { leg });
        }
        Ok(())
    }

    /// Forward trot of the bundled quadruped: reference at the origin of
    /// both diagonal subspaces, `(t0, tπ) = (−0.8, −0.8)`.
    pub fn fiducial_trot(model: &ModelSpec) -> Result<Self> {
        let b13 = ReducedShapeSubspace::new(model, 0, 2)?;
        let b24 = ReducedShapeSubspace::new(model, 1, 3)?;
        Self::new(
            SubgaitSpec::new(b13, [0.0, 0.0], -0.8, -0.8),
            SubgaitSpec::new(b24, [0.0, 0.0], -0.8, -0.8),
            Pairing::Trot,
        )
    }

    pub fn with_inputs(&self, inputs: CycleInputs) -> Self {
        let mut gait = self.clone();
        gait.first.inputs = inputs.first;
        gait.second.inputs = inputs.second;
        gait
    }

    pub fn inputs(&self) -> CycleInputs {
        CycleInputs {
            first: self.first.inputs,
            second: self.second.inputs,
        }
    }
}

/// Inputs for both subgaits of one gait cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleInputs {
    pub first: ControlInputs,
    pub second: ControlInputs,
}

impl CycleInputs {
    pub const fn new(first: ControlInputs, second: ControlInputs) -> Self {
        Self { first, second }
    }

    pub fn out_of_range(&self) -> bool {
        self.first.out_of_range() || self.second.out_of_range()
    }
}

/// Numerical resolution of reconstructed trajectories.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructOptions {
    /// Upper bound on the RK4 phase step.
    pub step: f64,
    /// Recorded samples per half cycle (per stance phase).
    pub samples_per_phase: usize,
    /// Arc-length step of the shape flows.
    pub flow_step: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            step: PI / 2000.0,
            samples_per_phase: 64,
            flow_step: DEFAULT_FLOW_STEP,
        }
    }
}

impl ReconstructOptions {
    pub const MIN_SAMPLES_PER_PHASE: usize = 16;

    pub fn with_samples(mut self, samples_per_phase: usize) -> Self {
        self.samples_per_phase = samples_per_phase;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_phase < Self::MIN_SAMPLES_PER_PHASE {
            return Err(Error::InvalidParameter(format!(
                "samples_per_phase must be at least {}, got {}",
                Self::MIN_SAMPLES_PER_PHASE,
                self.samples_per_phase
            )));
        }
        if !(self.step > 0.0) || !(self.flow_step > 0.0) {
            return Err(Error::InvalidParameter("steps must be positive".into()));
        }
        Ok(())
    }

    /// Phase spacing of recorded samples.
    pub fn sample_spacing(&self) -> f64 {
        PI / self.samples_per_phase as f64
    }

    /// Phase of the `k`-th recorded sample; multiples of `π` are exact.
    pub fn phase(&self, k: usize) -> f64 {
        let m = self.samples_per_phase;
        if k % m == 0 {
            (k / m) as f64 * PI
        } else {
            PI * k as f64 / m as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    /// Unwrapped gait phase.
    pub tau: f64,
    pub pose: SE2,
    pub shape: ShapePoint,
    pub contact: ContactState,
}

/// Body trajectory over one or more gait cycles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// `g0⁻¹ ∘ g_end`
    pub net_displacement: SE2,
    /// Body-frame displacement of each cycle.
    pub per_cycle: Vec<SE2>,
    /// Component-wise sum of the two subgait displacements of each cycle
    /// (two-beat runs only).
    pub per_cycle_sum: Vec<SE2>,
    /// Set when any flow left the swing limits.
    pub out_of_bounds: bool,
    /// Set when any input left `[-1, 1]`.
    pub inputs_out_of_range: bool,
}

impl Trajectory {
    pub fn start_pose(&self) -> Option<SE2> {
        self.samples.first().map(|s| s.pose)
    }

    pub fn end_pose(&self) -> Option<SE2> {
        self.samples.last().map(|s| s.pose)
    }
}
