//! Planar rigid transforms and body-frame velocity integration.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this |ω·h| the exponential map uses its Taylor series.
const EXP_SERIES_THRESHOLD: f64 = 1e-6;

/// Element of SE(2): translation `(x, y)` followed by a rotation `theta`.
///
/// `theta` is kept unwrapped so that net rotation accumulated over many
/// gait cycles stays meaningful. Use [`SE2::wrapped_theta`] for display.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SE2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Left-trivialized (body-frame) velocity, an element of se(2).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SE2Velocity {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl SE2 {
    pub const IDENTITY: SE2 = SE2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// Pure rotation about the origin.
    pub const fn rotation(theta: f64) -> Self {
        Self::new(0.0, 0.0, theta)
    }

    /// Pure translation.
    pub const fn translation_by(x: f64, y: f64) -> Self {
        Self::new(x, y, 0.0)
    }

    /// Group product `self ∘ other`.
    pub fn compose(&self, other: &SE2) -> SE2 {
        let (s, c) = self.theta.sin_cos();
        SE2 {
            x: self.x + c * other.x - s * other.y,
            y: self.y + s * other.x + c * other.y,
            theta: self.theta + other.theta,
        }
    }

    pub fn inverse(&self) -> SE2 {
        let (s, c) = self.theta.sin_cos();
        SE2 {
            x: -(c * self.x + s * self.y),
            y: -(-s * self.x + c * self.y),
            theta: -self.theta,
        }
    }

    /// Action on a point of the plane.
    pub fn act(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Adjoint matrix acting on `(vx, vy, omega)` column vectors.
    pub fn adjoint(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.y, s, c, -self.x, 0.0, 0.0, 1.0)
    }

    /// Closed-form exponential of a twist.
    pub fn exp(xi: &SE2Velocity) -> SE2 {
        let w = xi.omega;
        let (a, b) = if w.abs() < EXP_SERIES_THRESHOLD {
            // sin(w)/w and (1 - cos(w))/w
            let w2 = w * w;
            (1.0 - w2 / 6.0 + w2 * w2 / 120.0, w / 2.0 - w * w2 / 24.0)
        } else {
            (w.sin() / w, (1.0 - w.cos()) / w)
        };
        SE2 {
            x: a * xi.vx - b * xi.vy,
            y: b * xi.vx + a * xi.vy,
            theta: w,
        }
    }

    /// Principal logarithm (rotation wrapped into `(-π, π]`).
    pub fn log(&self) -> SE2Velocity {
        let w = wrap_angle(self.theta);
        let half = 0.5 * w;
        let k = if w.abs() < EXP_SERIES_THRESHOLD {
            1.0 - w * w / 12.0
        } else {
            half * half.cos() / half.sin()
        };
        SE2Velocity {
            vx: k * self.x + half * self.y,
            vy: -half * self.x + k * self.y,
            omega: w,
        }
    }

    pub fn wrapped_theta(&self) -> f64 {
        wrap_angle(self.theta)
    }

    /// Component-wise comparison with rotation compared modulo 2π.
    pub fn approx_eq(&self, other: &SE2, tol: f64) -> bool {
        (self.x - other.x).abs() <= tol
            && (self.y - other.y).abs() <= tol
            && wrap_angle(self.theta - other.theta).abs() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

impl Mul for SE2 {
    type Output = SE2;

    fn mul(self, rhs: SE2) -> SE2 {
        self.compose(&rhs)
    }
}

impl SE2Velocity {
    pub const ZERO: SE2Velocity = SE2Velocity {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };

    pub const fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.omega)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }

    /// Lie bracket `[self, other]` in se(2).
    pub fn bracket(&self, other: &SE2Velocity) -> SE2Velocity {
        // ω₁·J·v₂ − ω₂·J·v₁ with J the quarter-turn
        SE2Velocity {
            vx: -self.omega * other.vy + other.omega * self.vy,
            vy: self.omega * other.vx - other.omega * self.vx,
            omega: 0.0,
        }
    }
}

impl Add for SE2Velocity {
    type Output = SE2Velocity;

    fn add(self, rhs: SE2Velocity) -> SE2Velocity {
        SE2Velocity::new(self.vx + rhs.vx, self.vy + rhs.vy, self.omega + rhs.omega)
    }
}

impl Sub for SE2Velocity {
    type Output = SE2Velocity;

    fn sub(self, rhs: SE2Velocity) -> SE2Velocity {
        SE2Velocity::new(self.vx - rhs.vx, self.vy - rhs.vy, self.omega - rhs.omega)
    }
}

impl Neg for SE2Velocity {
    type Output = SE2Velocity;

    fn neg(self) -> SE2Velocity {
        SE2Velocity::new(-self.vx, -self.vy, -self.omega)
    }
}

impl Mul<f64> for SE2Velocity {
    type Output = SE2Velocity;

    fn mul(self, k: f64) -> SE2Velocity {
        SE2Velocity::new(self.vx * k, self.vy * k, self.omega * k)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// `dexp⁻¹` for the right-multiplied equation `ġ = g·ξ`, truncated after the
/// double commutator (enough for fourth order).
fn dexp_inv(omega: &SE2Velocity, xi: &SE2Velocity) -> SE2Velocity {
    let b1 = omega.bracket(xi);
    let b2 = omega.bracket(&b1);
    *xi + b1 * 0.5 + b2 * (1.0 / 12.0)
}

/// Solves `ġ = g·ξ(τ)` over `span` with fixed-step Runge–Kutta–Munthe-Kaas
/// of order four and returns the terminal pose.
///
/// Each step lifts the RK4 stages to the Lie algebra and advances with the
/// closed-form exponential, so constant `ξ` is integrated exactly. A reversed
/// span (`span.1 < span.0`) integrates backwards in phase.
pub fn integrate_body_velocity<F>(g0: SE2, mut xi: F, span: (f64, f64), step: f64) -> Result<SE2>
where
    F: FnMut(f64) -> SE2Velocity,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "integration step must be positive, got {step}"
        )));
    }
    let length = span.1 - span.0;
    if length == 0.0 {
        return Ok(g0);
    }
    let n = (length.abs() / step).ceil().max(1.0) as usize;
    let h = length / n as f64;
    let mut sample = |tau: f64| -> Result<SE2Velocity> {
        let v = xi(tau);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteVelocity { tau })
        }
    };

    let mut g = g0;
    let mut next = sample(span.0)?;
    for k in 0..n {
        let t = span.0 + h * k as f64;
        let a1 = next;
        let a2 = sample(t + 0.5 * h)?;
        let a4 = sample(if k + 1 == n { span.1 } else { t + h })?;

        let k1 = a1 * h;
        let k2 = dexp_inv(&(k1 * 0.5), &a2) * h;
        let k3 = dexp_inv(&(k2 * 0.5), &a2) * h;
        let k4 = dexp_inv(&k3, &a4) * h;
        let omega = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (1.0 / 6.0);
        g = g.compose(&SE2::exp(&omega));
        next = a4;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn pose() -> impl Strategy<Value = SE2> {
        (-10.0..10.0f64, -10.0..10.0f64, -7.0..7.0f64).prop_map(|(x, y, t)| SE2::new(x, y, t))
    }

    fn close(a: &SE2, b: &SE2, tol: f64) {
        assert!(a.approx_eq(b, tol), "{a:?} vs {b:?}");
    }

    #[test]
    fn compose_examples() {
        close(
            &SE2::new(1.0, 0.0, 0.0).compose(&SE2::new(0.0, 1.0, 0.0)),
            &SE2::new(1.0, 1.0, 0.0),
            1e-15,
        );
        close(
            &SE2::new(0.0, 0.0, FRAC_PI_2).compose(&SE2::new(1.0, 0.0, 0.0)),
            &SE2::new(0.0, 1.0, FRAC_PI_2),
            1e-15,
        );
    }

    #[test]
    fn inverse_examples() {
        close(&SE2::IDENTITY.inverse(), &SE2::IDENTITY, 0.0);
        close(
            &SE2::new(1.0, 0.0, FRAC_PI_2).inverse(),
            &SE2::new(0.0, 1.0, -FRAC_PI_2),
            1e-15,
        );
    }

    #[test]
    fn exp_log_roundtrip() {
        let xi = SE2Velocity::new(0.3, -1.2, 0.7);
        let back = SE2::exp(&xi).log();
        assert_abs_diff_eq!(back.to_vector(), xi.to_vector(), epsilon = 1e-14);
        let tiny = SE2Velocity::new(0.3, -1.2, 1e-9);
        assert_abs_diff_eq!(SE2::exp(&tiny).log().to_vector(), tiny.to_vector(), epsilon = 1e-14);
    }

    #[test]
    fn straight_line_flow() {
        let g = integrate_body_velocity(SE2::IDENTITY, |_| SE2Velocity::new(1.0, 0.0, 0.0), (0.0, 1.0), 0.1)
            .unwrap();
        close(&g, &SE2::new(1.0, 0.0, 0.0), 1e-15);
    }

    #[test]
    fn pure_rotation_flow() {
        let g = integrate_body_velocity(SE2::IDENTITY, |_| SE2Velocity::new(0.0, 0.0, 0.8), (0.0, 2.5), 0.01)
            .unwrap();
        assert_abs_diff_eq!(g.theta, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.x, 0.0);
    }

    #[test]
    fn constant_twist_traces_circular_arc() {
        // Closed-form arc: centre at (0, v/ω), radius v/ω.
        let (v, w, t) = (1.3, 0.9, 2.7);
        for step in [1e-3, 0.05, 1.0, 10.0] {
            let g = integrate_body_velocity(SE2::IDENTITY, |_| SE2Velocity::new(v, 0.0, w), (0.0, t), step)
                .unwrap();
            let r = v / w;
            assert_abs_diff_eq!(g.x, r * (w * t).sin(), epsilon = 1e-9);
            assert_abs_diff_eq!(g.y, r * (1.0 - (w * t).cos()), epsilon = 1e-9);
            assert_abs_diff_eq!(g.theta, w * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_finite_velocity_reports_phase() {
        let err = integrate_body_velocity(
            SE2::IDENTITY,
            |tau| if tau > 0.5 { SE2Velocity::new(f64::NAN, 0.0, 0.0) } else { SE2Velocity::ZERO },
            (0.0, 1.0),
            0.25,
        )
        .unwrap_err();
        match err {
            Error::NonFiniteVelocity { tau } => assert!(tau > 0.5 && tau <= 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn time_reversed_flow_returns_to_start() {
        let xi = |t: f64| SE2Velocity::new(t.cos(), 0.5 * (2.0 * t).sin(), 0.7 * t.sin() + 0.2);
        let g0 = SE2::new(0.4, -1.0, 0.3);
        let total = 3.0;
        let g1 = integrate_body_velocity(g0, xi, (0.0, total), 1e-3).unwrap();
        let back = integrate_body_velocity(g1, |t| -xi(total - t), (0.0, total), 1e-3).unwrap();
        close(&back, &g0, 1e-9);
    }

    #[test]
    fn rkmk_is_fourth_order() {
        let xi = |t: f64| SE2Velocity::new(1.0 + 0.5 * t.sin(), 0.3 * t, (1.5 * t).cos());
        let reference = integrate_body_velocity(SE2::IDENTITY, xi, (0.0, 2.0), 1e-4).unwrap();
        let coarse = integrate_body_velocity(SE2::IDENTITY, xi, (0.0, 2.0), 0.1).unwrap();
        let fine = integrate_body_velocity(SE2::IDENTITY, xi, (0.0, 2.0), 0.05).unwrap();
        let err = |g: &SE2| (g.to_vector() - reference.to_vector()).norm();
        let order = (err(&coarse) / err(&fine)).log2();
        assert!(order > 3.5, "observed order {order}");
    }

    proptest! {
        #[test]
        fn identity_law(g in pose()) {
            close(&g.compose(&SE2::IDENTITY), &g, 0.0);
            close(&SE2::IDENTITY.compose(&g), &g, 0.0);
        }

        #[test]
        fn inverse_cancels(g in pose()) {
            close(&g.compose(&g.inverse()), &SE2::IDENTITY, 1e-12);
            close(&g.inverse().inverse(), &g, 1e-12);
        }

        #[test]
        fn associativity(a in pose(), b in pose(), c in pose()) {
            close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-12);
        }

        #[test]
        fn action_is_isometric(g in pose(), px in -5.0..5.0f64, py in -5.0..5.0f64, qx in -5.0..5.0f64, qy in -5.0..5.0f64) {
            let p = Vector2::new(px, py);
            let q = Vector2::new(qx, qy);
            let d0 = (p - q).norm();
            let d1 = (g.act(&p) - g.act(&q)).norm();
            prop_assert!((d0 - d1).abs() < 1e-12);
        }

        #[test]
        fn adjoint_matches_conjugation(g in pose(), vx in -2.0..2.0f64, vy in -2.0..2.0f64, w in -2.0..2.0f64) {
            // g·exp(εξ)·g⁻¹ = exp(ε·Ad_g ξ)
            let xi = SE2Velocity::new(vx, vy, w);
            let eps = 1e-7;
            let conj = g.compose(&SE2::exp(&(xi * eps))).compose(&g.inverse());
            let ad = g.adjoint() * xi.to_vector() * eps;
            let lhs = conj.log().to_vector();
            prop_assert!((lhs - ad).norm() < 1e-12);
        }
    }
}
