use proptest::prelude::*;
use strata_core::gait::{reconstruct_body_trajectory, ReconstructOptions, SubgaitSpec, TwoBeatGaitSpec};
use strata_core::se2::wrap_angle;
use strata_core::{ModelSpec, ReducedShapeSubspace, SE2Velocity, SE2};

fn pose() -> impl Strategy<Value = SE2> {
    (-5.0..5.0f64, -5.0..5.0f64, -3.1..3.1f64).prop_map(|(x, y, t)| SE2::new(x, y, t))
}

proptest! {
    #[test]
    fn associative(a in pose(), b in pose(), c in pose()) {
        prop_assert!(((a * b) * c).approx_eq(&(a * (b * c)), 1e-9));
    }

    #[test]
    fn inverse_cancels(a in pose()) {
        prop_assert!((a * a.inverse()).approx_eq(&SE2::IDENTITY, 1e-12));
        prop_assert!((a.inverse() * a).approx_eq(&SE2::IDENTITY, 1e-12));
    }

    #[test]
    fn exp_log_roundtrip(a in pose()) {
        prop_assert!(SE2::exp(&a.log()).approx_eq(&a, 1e-9));
    }

    #[test]
    fn exp_is_one_parameter_subgroup(vx in -2.0..2.0f64, vy in -2.0..2.0f64, w in -2.0..2.0f64, s in 0.0..1.0f64) {
        let xi = SE2Velocity { vx, vy, omega: w };
        let sum = SE2::exp(&(xi * s)) * SE2::exp(&(xi * (1.0 - s)));
        prop_assert!(sum.approx_eq(&SE2::exp(&xi), 1e-9));
    }

    #[test]
    fn wrap_stays_in_range(t in -100.0..100.0f64) {
        let w = wrap_angle(t);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        prop_assert!(((t - w) / std::f64::consts::TAU - ((t - w) / std::f64::consts::TAU).round()).abs() < 1e-9);
    }
}

fn fourbar_subgait(u1: f64) -> SubgaitSpec {
    let model = ModelSpec::fourbar();
    let sub = ReducedShapeSubspace::new(&model, 0, 1).unwrap();
    SubgaitSpec::new(sub, [0.4, 0.4], -0.6, -0.6).with_inputs(strata_core::gait::ControlInputs::new(u1, 0.0))
}

#[test]
fn subgait_returns_to_start_shape() {
    let model = ModelSpec::fourbar();
    let traj = reconstruct_body_trajectory(&model, &fourbar_subgait(0.0), SE2::IDENTITY, &ReconstructOptions::default()).unwrap();
    let (first, last) = (&traj.samples[0], traj.samples.last().unwrap());
    for k in 0..2 {
        assert!((first.shape[k] - last.shape[k]).abs() < 1e-9);
    }
    assert!(traj.net_displacement.is_finite());
}

#[test]
fn fiducial_trot_has_no_net_rotation() {
    let model = ModelSpec::quadruped();
    let gait = TwoBeatGaitSpec::fiducial_trot(&model).unwrap();
    let traj = strata_core::gait::compose_two_beat(&model, &gait, SE2::IDENTITY, &ReconstructOptions::default()).unwrap();
    let z = traj.net_displacement;
    assert!(z.theta.abs() < 1e-6, "theta {}", z.theta);
    assert!(z.x.abs() < 1e-6, "x {}", z.x);
    assert!(z.y.abs() > 1.0);
}
