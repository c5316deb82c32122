use std::f64::consts::{PI, TAU};

use super::subgait::{integrate_checked, stance_velocity};
use super::{CycleInputs, ReconstructOptions, Subgait, Trajectory, TrajectorySample, TwoBeatGaitSpec};
use crate::error::Result;
use crate::model::{ContactState, ModelSpec, ShapePoint};
use crate::se2::{SE2Velocity, SE2};

/// One half of a two-beat cycle: `stance` runs its stance phase while
/// `swing` returns along its reversed flow.
///
/// Phases passed to the methods are local, `τ' ∈ [0, π]`. The swing pair is
/// at its own phase `π + τ'`.
#[derive(Clone, Copy, Debug)]
pub struct HalfCycle<'s, 'a> {
    pub stance: &'s Subgait<'a>,
    pub swing: &'s Subgait<'a>,
}

impl<'s, 'a> HalfCycle<'s, 'a> {
    pub fn new(stance: &'s Subgait<'a>, swing: &'s Subgait<'a>) -> Self {
        Self { stance, swing }
    }

    fn model(&self) -> &'a ModelSpec {
        self.stance.model()
    }

    /// Full shape vector at local phase `τ'`.
    pub fn shape(&self, tau: f64) -> ShapePoint {
        let mut alpha = ShapePoint::zeros(self.model().leg_count());
        for (subgait, phase) in [(self.stance, tau), (self.swing, PI + tau)] {
            let p = subgait.shape_at(phase);
            let [i, j] = subgait.legs();
            alpha[i] = p[0];
            alpha[j] = p[1];
        }
        alpha
    }

    pub fn contact(&self) -> ContactState {
        self.stance.spec().subspace.stance(self.model().leg_count())
    }

    /// `−A(α)·α̇` from the full shape and contact state.
    pub fn body_velocity(&self, tau: f64) -> Result<SE2Velocity> {
        if self.stance.pacing() == 0.0 {
            return Ok(SE2Velocity::ZERO);
        }
        stance_velocity(
            self.model(),
            &self.shape(tau),
            &self.contact(),
            self.stance.legs(),
            &self.stance.shape_rate(tau)?,
        )
    }

    /// Integrates the pose from local phase `from` to `to`.
    pub fn advance(&self, g: SE2, from: f64, to: f64, step: f64) -> Result<SE2> {
        integrate_checked(g, |t| self.body_velocity(t), (from, to), step)
    }

    pub fn sample(&self, tau_offset: f64, tau: f64, pose: SE2) -> TrajectorySample {
        TrajectorySample {
            tau: tau_offset + tau,
            pose,
            shape: self.shape(tau),
            contact: self.contact(),
        }
    }

    /// Samples at local phases `π·k/m`, `k = 1..=m`, and the end pose.
    pub fn run(&self, g0: SE2, tau_offset: f64, opts: &ReconstructOptions) -> Result<(Vec<TrajectorySample>, SE2)> {
        let m = opts.samples_per_phase;
        let mut samples = Vec::with_capacity(m);
        let mut g = g0;
        for k in 1..=m {
            let (t0, t1) = (opts.phase(k - 1), opts.phase(k));
            g = self.advance(g, t0, t1, opts.step)?;
            samples.push(self.sample(tau_offset, t1, g));
        }
        Ok((samples, g))
    }
}

/// Runs consecutive two-beat cycles, latching `schedule[c]` at the start of
/// cycle `c`. The first half of cycle 0 swings the second pair along the
/// path of its cycle-0 subgait.
pub fn run_schedule(
    model: &ModelSpec,
    gait: &TwoBeatGaitSpec,
    schedule: &[CycleInputs],
    g0: SE2,
    opts: &ReconstructOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    gait.validate()?;
    let build = |inputs: CycleInputs| -> Result<(Subgait<'_>, Subgait<'_>)> {
        let spec = gait.with_inputs(inputs);
        Ok((
            Subgait::new(model, &spec.first, opts.flow_step)?,
            Subgait::new(model, &spec.second, opts.flow_step)?,
        ))
    };

    let initial = schedule.first().copied().unwrap_or_else(|| gait.inputs());
    let (a0, mut swing) = build(initial)?;
    let mut traj = Trajectory {
        samples: vec![HalfCycle::new(&a0, &swing).sample(0.0, 0.0, g0)],
        ..Trajectory::default()
    };
    let mut g = g0;
    for (c, &inputs) in schedule.iter().enumerate() {
        let (a, b) = build(inputs)?;
        let offset = TAU * c as f64;
        let (first, g_mid) = HalfCycle::new(&a, &swing).run(g, offset, opts)?;
        let (second, g_end) = HalfCycle::new(&b, &a).run(g_mid, offset + PI, opts)?;
        traj.samples.extend(first);
        traj.samples.extend(second);

        let za = g.inverse().compose(&g_mid);
        let zb = g_mid.inverse().compose(&g_end);
        traj.per_cycle.push(g.inverse().compose(&g_end));
        traj.per_cycle_sum
            .push(SE2::new(za.x + zb.x, za.y + zb.y, za.theta + zb.theta));
        traj.out_of_bounds |= a.out_of_bounds() || b.out_of_bounds();
        traj.inputs_out_of_range |= inputs.out_of_range();
        g = g_end;
        swing = b;
    }
    traj.net_displacement = g0.inverse().compose(&g);
    Ok(traj)
}

/// One cycle of a two-beat gait with its own inputs.
pub fn compose_two_beat(model: &ModelSpec, gait: &TwoBeatGaitSpec, g0: SE2, opts: &ReconstructOptions) -> Result<Trajectory> {
    run_schedule(model, gait, &[gait.inputs()], g0, opts)
}
