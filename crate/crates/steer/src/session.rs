use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use strata_core::gait::{
    turning_radius, CycleInputs, HalfCycle, ReconstructOptions, Subgait, SubgaitSpec, TurningRadius,
    TwoBeatGaitSpec,
};
use strata_core::{ModelSpec, Result, ShapePoint, SE2};

use crate::protocol::{ClientMessage, InputPair, LogEntry, ServerMessage, StateMessage};

pub const DEFAULT_HISTORY: usize = 256;
pub const DEFAULT_RATE: f64 = PI;

/// Per-cycle record kept in the history ring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleEntry {
    pub cycle: usize,
    pub inputs: InputPair,
    pub z: [f64; 3],
    pub z_sum: [f64; 3],
    pub turning_radius: TurningRadius,
    /// World pose at the end of the cycle.
    pub pose: [f64; 3],
}

/// Half cycle in progress, fixed at its onset.
#[derive(Clone, Debug)]
struct ActiveHalf {
    second: bool,
    start_tau: f64,
    stance: SubgaitSpec,
    swing: SubgaitSpec,
    /// Poses at the recorded local phases, starting with the onset pose.
    poses: Vec<SE2>,
}

/// A live gait run that advances in phase and latches inputs at stance onsets.
#[derive(Clone, Debug)]
pub struct Session {
    model: Arc<ModelSpec>,
    template: TwoBeatGaitSpec,
    opts: ReconstructOptions,
    pose: SE2,
    tau: f64,
    pending: CycleInputs,
    latched: CycleInputs,
    cycle: usize,
    rate: f64,
    history: VecDeque<CycleEntry>,
    capacity: usize,
    active: Option<ActiveHalf>,
    /// Second subgait of the previous cycle, swinging during the next first half.
    previous_second: Option<SubgaitSpec>,
    cycle_start: SE2,
    mid_pose: SE2,
    diagnostic: Option<String>,
    last_shape: Option<(ShapePoint, Vec<bool>)>,
}

impl Session {
    pub fn new(model: Arc<ModelSpec>, template: TwoBeatGaitSpec) -> Self {
        let inputs = template.inputs();
        Self {
            model,
            template,
            opts: ReconstructOptions::default(),
            pose: SE2::IDENTITY,
            tau: 0.0,
            pending: inputs,
            latched: inputs,
            cycle: 0,
            rate: DEFAULT_RATE,
            history: VecDeque::new(),
            capacity: DEFAULT_HISTORY,
            active: None,
            previous_second: None,
            cycle_start: SE2::IDENTITY,
            mid_pose: SE2::IDENTITY,
            diagnostic: None,
            last_shape: None,
        }
    }

    pub fn with_options(mut self, opts: ReconstructOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn with_history_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity.max(1);
        self
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn pose(&self) -> SE2 {
        self.pose
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn pending(&self) -> CycleInputs {
        self.pending
    }

    pub fn latched(&self) -> CycleInputs {
        self.latched
    }

    pub fn history(&self) -> impl Iterator<Item = &CycleEntry> {
        self.history.iter()
    }

    pub fn diagnostic(&self) -> Option<&str> {
        self.diagnostic.as_deref()
    }

    pub fn set_inputs(&mut self, inputs: CycleInputs) {
        self.pending = inputs;
    }

    pub fn reset(&mut self) {
        let fresh = Session::new(self.model.clone(), self.template.clone())
            .with_options(self.opts)
            .with_history_capacity(self.capacity);
        let (pending, rate) = (self.pending, self.rate);
        *self = fresh;
        self.pending = pending;
        self.latched = pending;
        self.rate = rate;
    }

    fn spec(&self, second: bool, inputs: CycleInputs) -> SubgaitSpec {
        let gait = self.template.with_inputs(inputs);
        if second {
            gait.second
        } else {
            gait.first
        }
    }

    fn build<'m>(&self, spec: &SubgaitSpec, model: &'m ModelSpec) -> Result<Subgait<'m>> {
        Subgait::new(model, spec, self.opts.flow_step)
    }

    /// Latches the pending inputs for the half starting at the current phase
    /// and integrates it through with the batch half-cycle routine.
    fn latch(&mut self) -> Result<()> {
        let second = self.tau_in_second_half();
        let (stance, swing) = if second {
            self.latched.second = self.pending.second;
            let first = self.spec(false, self.latched);
            (self.spec(true, self.latched), first)
        } else {
            self.latched.first = self.pending.first;
            let swing = match &self.previous_second {
                Some(s) => s.clone(),
                None => {
                    self.latched.second = self.pending.second;
                    self.spec(true, self.pending)
                }
            };
            (self.spec(false, self.latched), swing)
        };
        let model = self.model.clone();
        let (a, b) = (self.build(&stance, &model)?, self.build(&swing, &model)?);
        let (samples, _) = HalfCycle::new(&a, &b).run(self.pose, self.tau, &self.opts)?;
        let mut poses = Vec::with_capacity(samples.len() + 1);
        poses.push(self.pose);
        poses.extend(samples.iter().map(|s| s.pose));
        if !second {
            self.cycle_start = self.pose;
        }
        self.active = Some(ActiveHalf {
            second,
            start_tau: self.tau,
            stance,
            swing,
            poses,
        });
        Ok(())
    }

    fn tau_in_second_half(&self) -> bool {
        (self.tau / PI).round() as i64 % 2 == 1
    }

    /// Advances the phase by `dtau`. A failure pauses the session and is
    /// reported through the state's diagnostic.
    pub fn step(&mut self, dtau: f64) -> Result<()> {
        if self.diagnostic.is_some() || !(dtau > 0.0) {
            return Ok(());
        }
        let result = self.advance(self.tau + dtau);
        if let Err(e) = &result {
            log::warn!("session paused at tau {}: {e}", self.tau);
            self.diagnostic = Some(e.to_string());
        }
        result
    }

    fn advance(&mut self, target: f64) -> Result<()> {
        while self.tau < target {
            if self.active.is_none() {
                self.latch()?;
            }
            let half = self.active.as_ref().expect("latched above");
            let end_tau = half.start_tau + PI;
            if target >= end_tau {
                let end_pose = *half.poses.last().expect("half has samples");
                let second = half.second;
                self.remember_shape(PI)?;
                self.pose = end_pose;
                self.tau = end_tau;
                if second {
                    self.finish_cycle();
                } else {
                    self.mid_pose = end_pose;
                }
                self.active = None;
            } else {
                let local = target - half.start_tau;
                self.pose = self.pose_within(local)?;
                self.tau = target;
            }
        }
        Ok(())
    }

    fn finish_cycle(&mut self) {
        let z = self.cycle_start.inverse().compose(&self.pose);
        let za = self.cycle_start.inverse().compose(&self.mid_pose);
        let zb = self.mid_pose.inverse().compose(&self.pose);
        let entry = CycleEntry {
            cycle: self.cycle,
            inputs: self.latched.into(),
            z: z.to_array(),
            z_sum: [za.x + zb.x, za.y + zb.y, za.theta + zb.theta],
            turning_radius: turning_radius(&z),
            pose: self.pose.to_array(),
        };
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(entry);
        self.previous_second = Some(self.spec(true, self.latched));
        self.cycle += 1;
    }

    fn with_half<T>(&self, f: impl FnOnce(HalfCycle<'_, '_>) -> Result<T>) -> Result<T> {
        let half = self.active.as_ref().expect("active half");
        let a = self.build(&half.stance, &self.model)?;
        let b = self.build(&half.swing, &self.model)?;
        f(HalfCycle::new(&a, &b))
    }

    /// Pose at local phase `local`, integrated from the nearest recorded
    /// sample at or before it.
    fn pose_within(&self, local: f64) -> Result<SE2> {
        let half = self.active.as_ref().expect("active half");
        let m = self.opts.samples_per_phase;
        let k = ((local / PI * m as f64).floor() as usize).min(m);
        let from = self.opts.phase(k);
        let g = half.poses[k];
        if from >= local {
            return Ok(g);
        }
        self.with_half(|h| h.advance(g, from, local, self.opts.step))
    }

    fn remember_shape(&mut self, local: f64) -> Result<()> {
        let shape = self.with_half(|h| Ok((h.shape(local), h.contact().0)))?;
        self.last_shape = Some(shape);
        Ok(())
    }

    /// Shape and contact at the current phase.
    fn current_shape(&self) -> Result<(ShapePoint, Vec<bool>)> {
        if let Some(half) = &self.active {
            return self.with_half(|h| Ok((h.shape(self.tau - half.start_tau), h.contact().0)));
        }
        if let Some(shape) = &self.last_shape {
            return Ok(shape.clone());
        }
        let model = self.model.clone();
        let a = self.build(&self.spec(false, self.pending), &model)?;
        let b = self.build(&self.spec(true, self.pending), &model)?;
        let h = HalfCycle::new(&a, &b);
        Ok((h.shape(0.0), h.contact().0))
    }

    pub fn state(&self) -> StateMessage {
        let (alpha, beta) = self
            .current_shape()
            .unwrap_or_else(|_| (ShapePoint::zeros(self.model.leg_count()), vec![false; self.model.leg_count()]));
        let last = self.history.back();
        StateMessage {
            tau: self.tau,
            pose: self.pose.to_array(),
            alpha: alpha.0,
            beta: beta.into_iter().map(u8::from).collect(),
            latched: self.latched.into(),
            pending: self.pending.into(),
            cycle: self.cycle,
            last_z: last.map(|e| e.z),
            turning_radius: last.map_or(TurningRadius::Straight, |e| e.turning_radius),
            phase_per_sec: self.rate,
            diagnostic: self.diagnostic.clone(),
        }
    }

    /// Applies one client message. Returns the reply for the sender, if any.
    pub fn handle_message(&mut self, msg: &ClientMessage) -> Option<ServerMessage> {
        match msg {
            ClientMessage::SetInputs { u13, u24 } => {
                if !(u13.is_finite() && u24.is_finite()) {
                    return Some(ServerMessage::error("inputs must be finite"));
                }
                self.set_inputs(CycleInputs::new(*u13, *u24));
                None
            }
            ClientMessage::SetRate { phase_per_sec } => {
                if !phase_per_sec.is_finite() || *phase_per_sec < 0.0 {
                    return Some(ServerMessage::error("phase_per_sec must be finite and non-negative"));
                }
                self.rate = *phase_per_sec;
                None
            }
            ClientMessage::Reset {} => {
                self.reset();
                None
            }
            ClientMessage::Snapshot {} => Some(ServerMessage::State(self.state())),
            ClientMessage::Step { dtau } => {
                if !dtau.is_finite() || *dtau < 0.0 {
                    return Some(ServerMessage::error("dtau must be finite and non-negative"));
                }
                let _ = self.step(*dtau);
                None
            }
        }
    }

    /// Replays a phase-stamped message log, stepping to each stamp before
    /// applying its message, then runs on to `until`.
    pub fn replay(&mut self, log: &[LogEntry], until: f64) {
        for entry in log {
            if entry.tau > self.tau {
                let _ = self.step(entry.tau - self.tau);
            }
            self.handle_message(&entry.message);
        }
        if until > self.tau {
            let _ = self.step(until - self.tau);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use strata_core::gait::{run_schedule, ControlInputs};

    fn session() -> Session {
        let model = Arc::new(ModelSpec::quadruped());
        let gait = TwoBeatGaitSpec::fiducial_trot(&model).unwrap();
        Session::new(model, gait).with_options(ReconstructOptions::default().with_samples(16))
    }

    #[test]
    fn advances_forward_without_input() {
        let mut s = session();
        s.step(2.0 * PI).unwrap();
        assert_eq!(s.cycle(), 1);
        assert!(s.pose().y > 1.0);
        assert!(s.pose().x.abs() < 1e-9);
        s.step(2.0 * PI).unwrap();
        assert!(s.pose().y > 3.0);
        assert_eq!(s.history().count(), 2);
    }

    #[test]
    fn inputs_latch_only_at_onsets() {
        let mut s = session();
        s.step(0.5).unwrap();
        let steer = CycleInputs::new(ControlInputs::new(1.0, 0.5), ControlInputs::new(1.0, -0.5));
        s.handle_message(&ClientMessage::SetInputs {
            u13: steer.first,
            u24: steer.second,
        });
        let snap = s.state();
        assert_eq!(CycleInputs::from(snap.pending), steer);
        assert_eq!(CycleInputs::from(snap.latched), CycleInputs::default());
        s.step(PI).unwrap();
        // the second stance started at π with the new second input
        assert_eq!(s.latched().second, steer.second);
        assert_eq!(s.latched().first, ControlInputs::default());
        s.step(PI).unwrap();
        assert_eq!(s.latched(), steer);
    }

    #[test]
    fn steering_sign_follows_input() {
        let mut turns = Vec::new();
        for c in [0.5, -0.5] {
            let mut s = session();
            s.set_inputs(CycleInputs::new(ControlInputs::new(1.0, c), ControlInputs::new(1.0, -c)));
            s.step(2.0 * PI).unwrap();
            turns.push(s.history().last().unwrap().z[2]);
        }
        assert!(turns[0].abs() > 1e-3);
        assert!((turns[0] + turns[1]).abs() < 1e-9);
    }

    #[test]
    fn reset_clears_state() {
        let mut s = session();
        s.step(7.0).unwrap();
        s.handle_message(&ClientMessage::Reset {});
        assert_eq!(s.pose(), SE2::IDENTITY);
        assert_eq!(s.tau(), 0.0);
        assert_eq!(s.cycle(), 0);
        assert_eq!(s.history().count(), 0);
    }

    #[test]
    fn history_is_bounded() {
        let mut s = session().with_history_capacity(3);
        s.step(5.0 * 2.0 * PI).unwrap();
        let cycles: Vec<usize> = s.history().map(|e| e.cycle).collect();
        assert_eq!(cycles, vec![2, 3, 4]);
    }

    #[test]
    fn matches_batch_schedule() {
        let mut s = session();
        let schedule = [
            CycleInputs::default(),
            CycleInputs::new(ControlInputs::new(0.5, 0.2), ControlInputs::new(0.7, -0.1)),
            CycleInputs::new(ControlInputs::new(1.0, -0.3), ControlInputs::new(1.0, 0.3)),
        ];
        for (c, inputs) in schedule.iter().enumerate() {
            s.set_inputs(*inputs);
            // uneven steps that straddle both onsets
            for _ in 0..6 {
                s.step(2.0 * PI / 7.0).unwrap();
            }
            let target = 2.0 * PI * (c + 1) as f64;
            s.step(target - s.tau()).unwrap();
        }
        let batch = run_schedule(&s.model, &s.template, &schedule, SE2::IDENTITY, &s.opts).unwrap();
        let end = batch.end_pose().unwrap();
        assert!(s.pose().approx_eq(&end, 1e-9), "{:?} vs {:?}", s.pose(), end);
        for (e, z) in s.history().zip(&batch.per_cycle) {
            assert!(SE2::new(e.z[0], e.z[1], e.z[2]).approx_eq(z, 1e-9));
        }
    }

    #[test]
    fn intermediate_pose_is_continuous() {
        let mut s = session();
        let mut last = s.pose();
        for _ in 0..200 {
            s.step(0.05).unwrap();
            let p = s.pose();
            assert!((p.x - last.x).hypot(p.y - last.y) < 0.1);
            last = p;
        }
    }

    #[test]
    fn flow_failure_pauses() {
        let model = Arc::new(ModelSpec::quadruped());
        let mut gait = TwoBeatGaitSpec::fiducial_trot(&model).unwrap();
        // reference placed on the maximum of F, where no nonslip direction exists
        gait.first.alpha_star = [PI / 4.0, PI / 4.0];
        let mut s = Session::new(model, gait);
        assert!(s.step(1.0).is_err());
        assert!(s.state().diagnostic.unwrap().contains("singular"));
        let tau = s.tau();
        s.step(1.0).unwrap();
        assert_eq!(s.tau(), tau);
        s.reset();
        assert!(s.diagnostic().is_none());
    }

    #[test]
    fn replay_is_deterministic() {
        let log = vec![
            LogEntry {
                tau: 0.0,
                message: ClientMessage::SetInputs {
                    u13: ControlInputs::new(0.8, 0.1),
                    u24: ControlInputs::new(0.9, -0.1),
                },
            },
            LogEntry {
                tau: 4.0,
                message: ClientMessage::SetInputs {
                    u13: ControlInputs::new(1.0, 0.4),
                    u24: ControlInputs::new(1.0, -0.4),
                },
            },
        ];
        let mut a = session();
        let mut b = session();
        a.replay(&log, 4.0 * PI);
        b.replay(&log, 4.0 * PI);
        assert_eq!(a.pose(), b.pose());
        assert_eq!(a.state(), b.state());
    }
}
