use std::cell::RefCell;
use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;

use super::{ReconstructOptions, SubgaitSpec, Trajectory, TrajectorySample};
use crate::error::{Error, Result};
use crate::model::{local_connection, ContactState, ModelSpec, ShapePoint};
use crate::se2::{integrate_body_velocity, SE2Velocity, SE2};
use crate::shapefield::{FlowPath, ShapeField};

/// A subgait with its stance path resolved.
///
/// The stance runs forward along the nonslip field from `α₀` to `α_π` over
/// `τ ∈ [0, π]` with pacing `k̇ = L/π`; the swing retraces it backwards.
#[derive(Clone, Debug)]
pub struct Subgait<'a> {
    field: ShapeField<'a>,
    spec: SubgaitSpec,
    alpha0: Vector2<f64>,
    alpha_pi: Vector2<f64>,
    stance: FlowPath,
}

impl<'a> Subgait<'a> {
    pub fn new(model: &'a ModelSpec, spec: &SubgaitSpec, flow_step: f64) -> Result<Self> {
        spec.validate()?;
        let field = ShapeField::new(model, spec.subspace.clone());
        let star = Vector2::new(spec.alpha_star[0], spec.alpha_star[1]);
        let (a, b) = spec.flow_times();
        let alpha0 = field.flow_to(&star, a, flow_step)?;
        let alpha_pi = field.flow_to(&star, b, flow_step)?;
        let stance = field.flow(&alpha0, b - a, flow_step)?;
        Ok(Self {
            field,
            spec: spec.clone(),
            alpha0,
            alpha_pi,
            stance,
        })
    }

    pub fn spec(&self) -> &SubgaitSpec {
        &self.spec
    }

    pub fn field(&self) -> &ShapeField<'a> {
        &self.field
    }

    pub fn model(&self) -> &'a ModelSpec {
        self.field.model()
    }

    pub fn legs(&self) -> [usize; 2] {
        self.spec.subspace.legs()
    }

    pub fn endpoints(&self) -> (Vector2<f64>, Vector2<f64>) {
        (self.alpha0, self.alpha_pi)
    }

    pub fn stance_path(&self) -> &FlowPath {
        &self.stance
    }

    /// Signed stance path length `L`.
    pub fn stance_length(&self) -> f64 {
        self.stance.length
    }

    /// `k̇ = L/π`
    pub fn pacing(&self) -> f64 {
        self.stance.length / PI
    }

    /// True when either flow left the swing limits.
    pub fn out_of_bounds(&self) -> bool {
        self.stance.out_of_bounds
            || !self.spec.subspace.contains(&self.alpha0)
            || !self.spec.subspace.contains(&self.alpha_pi)
    }

    /// `τ ∈ [0, π]` (closed) is stance; the phase is taken mod 2π.
    pub fn in_stance(tau: f64) -> bool {
        tau.rem_euclid(TAU) <= PI
    }

    /// Flow time along the stance path at phase `τ`, folding the swing back
    /// onto it. `τ = 2π` maps to the start of the path.
    fn path_time(&self, tau: f64) -> f64 {
        let t = if (0.0..=TAU).contains(&tau) { tau } else { tau.rem_euclid(TAU) };
        let s = if t <= PI { t } else { TAU - t };
        self.stance.length * s / PI
    }

    /// Pair shape at phase `τ`.
    pub fn shape_at(&self, tau: f64) -> Vector2<f64> {
        if self.stance.length == 0.0 {
            return self.alpha0;
        }
        self.stance.at(self.path_time(tau))
    }

    /// `dα/dτ` at phase `τ`: `+Δα_F·k̇` in stance, `−Δα_F·k̇` in swing.
    pub fn shape_rate(&self, tau: f64) -> Result<Vector2<f64>> {
        let pacing = self.pacing();
        if pacing == 0.0 {
            return Ok(Vector2::zeros());
        }
        let dir = self.field.nonslip(&self.shape_at(tau))?;
        let sign = if Self::in_stance(tau) { 1.0 } else { -1.0 };
        Ok(dir * (sign * pacing))
    }

    /// `(α, β)` for the pair at phase `τ`.
    pub fn shape_and_contact(&self, tau: f64) -> (Vector2<f64>, [bool; 2]) {
        let stance = Self::in_stance(tau);
        (self.shape_at(tau), [stance, stance])
    }

    /// Body velocity during stance, other legs at zero; zero in swing.
    pub fn body_velocity(&self, tau: f64) -> Result<SE2Velocity> {
        if !Self::in_stance(tau) || self.pacing() == 0.0 {
            return Ok(SE2Velocity::ZERO);
        }
        let n = self.model().leg_count();
        let alpha = self.spec.subspace.embed(n, &self.shape_at(tau));
        let contact = self.spec.subspace.stance(n);
        stance_velocity(self.model(), &alpha, &contact, self.legs(), &self.shape_rate(tau)?)
    }

    /// Body-frame displacement over one cycle, `g(0)⁻¹ ∘ g(2π)`.
    pub fn displacement(&self, step: f64) -> Result<SE2> {
        integrate_checked(SE2::IDENTITY, |t| self.body_velocity(t), (0.0, PI), step)
    }
}

/// `−A·α̇` for the two stance legs `legs`, with `rates` ordered like `legs`.
pub(crate) fn stance_velocity(
    model: &ModelSpec,
    alpha: &ShapePoint,
    contact: &ContactState,
    legs: [usize; 2],
    rates: &Vector2<f64>,
) -> Result<SE2Velocity> {
    let conn = local_connection(model, alpha, contact)?;
    let ordered: Vec<f64> = conn
        .stance_legs
        .iter()
        .map(|&leg| if leg == legs[0] { rates[0] } else { rates[1] })
        .collect();
    Ok(conn.body_velocity(&ordered))
}

/// Integrates a fallible body velocity; the first error raised by `xi`
/// is returned instead of a generic non-finite failure.
pub(crate) fn integrate_checked<F>(g0: SE2, xi: F, span: (f64, f64), step: f64) -> Result<SE2>
where
    F: Fn(f64) -> Result<SE2Velocity>,
{
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let result = integrate_body_velocity(
        g0,
        |t| match xi(t) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                SE2Velocity::new(f64::NAN, f64::NAN, f64::NAN)
            }
        },
        span,
        step,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => result,
    }
}

/// `(α₀, α_π)` reached from `α*` by flowing `u₁t₀ + u₂` and `−u₁t_π + u₂`.
pub fn stance_endpoints(
    model: &ModelSpec,
    spec: &SubgaitSpec,
    flow_step: f64,
) -> Result<(Vector2<f64>, Vector2<f64>)> {
    spec.validate()?;
    let field = ShapeField::new(model, spec.subspace.clone());
    let star = Vector2::new(spec.alpha_star[0], spec.alpha_star[1]);
    let (a, b) = spec.flow_times();
    Ok((field.flow_to(&star, a, flow_step)?, field.flow_to(&star, b, flow_step)?))
}

/// Pair shape and contact at phase `τ`.
pub fn subgait_shape_trajectory(
    model: &ModelSpec,
    spec: &SubgaitSpec,
    tau: f64,
    flow_step: f64,
) -> Result<(Vector2<f64>, [bool; 2])> {
    Ok(Subgait::new(model, spec, flow_step)?.shape_and_contact(tau))
}

/// One stance–swing cycle of a single subgait; other legs stay at zero.
pub fn reconstruct_body_trajectory(
    model: &ModelSpec,
    spec: &SubgaitSpec,
    g0: SE2,
    opts: &ReconstructOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    let subgait = Subgait::new(model, spec, opts.flow_step)?;
    let n = model.leg_count();
    let m = opts.samples_per_phase;
    let sample = |tau: f64, pose: SE2| {
        let (p, [stance, _]) = subgait.shape_and_contact(tau);
        TrajectorySample {
            tau,
            pose,
            shape: spec.subspace.embed(n, &p),
            contact: if stance { spec.subspace.stance(n) } else { ContactState::none(n) },
        }
    };

    let mut samples = Vec::with_capacity(2 * m + 1);
    samples.push(sample(0.0, g0));
    let mut g = g0;
    for k in 1..=2 * m {
        let (t0, t1) = (opts.phase(k - 1), opts.phase(k));
        if k <= m {
            g = integrate_checked(g, |t| subgait.body_velocity(t), (t0, t1), opts.step)?;
        }
        samples.push(sample(t1, g));
    }
    let net = g0.inverse().compose(&g);
    Ok(Trajectory {
        samples,
        net_displacement: net,
        per_cycle: vec![net],
        per_cycle_sum: Vec::new(),
        out_of_bounds: subgait.out_of_bounds(),
        inputs_out_of_range: spec.inputs.out_of_range(),
    })
}
