//! Bounded 4D Dubins car: state, control, discrete step and rollout.
//!
//! The step applies the forward-Euler update first and enforces bounds
//! afterwards: `v` is clamped to `[0, v_max]` and `theta` wrapped into
//! `(-pi, pi]`. The position update uses the pre-step velocity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Scalar};

/// Planar pose plus forward speed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState<S> {
    pub px: S,
    pub py: S,
    pub theta: S,
    pub v: S,
}

impl<S: Scalar> RobotState<S> {
    pub fn new(px: S, py: S, theta: S, v: S) -> Self {
        Self { px, py, theta, v }
    }

    pub fn position(&self) -> (S, S) {
        (self.px, self.py)
    }
}

/// Angular velocity and linear acceleration command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control<S> {
    pub omega: S,
    pub accel: S,
}

impl<S: Scalar> Control<S> {
    pub fn new(omega: S, accel: S) -> Self {
        Self { omega, accel }
    }

    pub fn zero() -> Self {
        Self { omega: S::zero(), accel: S::zero() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams<S> {
    /// Integration step in seconds.
    pub dt: S,
    pub v_max: S,
    pub omega_max: S,
    pub accel_max: S,
}

impl<S: Scalar> Default for DynamicsParams<S> {
    fn default() -> Self {
        Self { dt: S::lit(0.05), v_max: S::lit(1.5), omega_max: S::lit(1.0), accel_max: S::lit(3.0) }
    }
}

impl<S: Scalar> DynamicsParams<S> {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.dt, self.v_max, self.omega_max, self.accel_max].iter().all(|v| v.is_finite() && *v > S::zero());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams("dynamics bounds must be strictly positive".into()))
        }
    }

    /// Number of full-brake steps needed to stop from `v_max`.
    pub fn brake_steps(&self) -> usize {
        let steps = (self.v_max / (self.accel_max * self.dt)).ceil();
        steps.to_usize().unwrap_or(usize::MAX)
    }
}

/// Saturates each control axis to its bound independently.
pub fn clamp_control<S: Scalar>(u: Control<S>, p: &DynamicsParams<S>) -> Control<S> {
    Control { omega: u.omega.max(-p.omega_max).min(p.omega_max), accel: u.accel.max(-p.accel_max).min(p.accel_max) }
}

pub fn step<S: Scalar>(x: &RobotState<S>, u: Control<S>, p: &DynamicsParams<S>) -> RobotState<S> {
    let u = clamp_control(u, p);
    let (sin, cos) = x.theta.sin_cos();
    let px = x.px + x.v * cos * p.dt;
    let py = x.py + x.v * sin * p.dt;
    let theta = wrap_angle(x.theta + u.omega * p.dt);
    let v = (x.v + u.accel * p.dt).max(S::zero()).min(p.v_max);
    RobotState { px, py, theta, v }
}

/// Rolls `seq` forward from `x0`; the result has `seq.len() + 1` states and
/// starts with `x0`.
pub fn rollout<S: Scalar>(x0: &RobotState<S>, seq: &[Control<S>], p: &DynamicsParams<S>) -> Result<Vec<RobotState<S>>> {
    if seq.is_empty() {
        return Err(Error::EmptyHorizon);
    }
    let mut states = Vec::with_capacity(seq.len() + 1);
    states.push(*x0);
    let mut x = *x0;
    for u in seq {
        x = step(&x, *u, p);
        states.push(x);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn bounds13() -> DynamicsParams<f64> {
        DynamicsParams { dt: 0.05, v_max: 1.5, omega_max: 1.0, accel_max: 3.0 }
    }

    #[test]
    fn clamp_examples() {
        let p = bounds13();
        assert_eq!(clamp_control(Control::new(0.0, 0.0), &p), Control::new(0.0, 0.0));
        assert_eq!(clamp_control(Control::new(2.5, -4.0), &p), Control::new(1.0, -3.0));
        assert_eq!(clamp_control(Control::new(-1.0, 3.0), &p), Control::new(-1.0, 3.0));
    }

    #[test]
    fn step_examples() {
        let p = bounds13();
        let x = step(&RobotState::new(0.0, 0.0, 0.0, 1.0), Control::zero(), &p);
        assert_eq!(x, RobotState::new(0.05, 0.0, 0.0, 1.0));

        let p = DynamicsParams { dt: 0.1, ..bounds13() };
        let x = step(&RobotState::new(0.0, 0.0, FRAC_PI_2, 1.0), Control::zero(), &p);
        assert!(x.px.abs() < 1e-15);
        assert!((x.py - 0.1).abs() < 1e-15);
        assert_eq!(x.theta, FRAC_PI_2);

        let x = step(&RobotState::new(1.0, 2.0, 0.0, 1.4), Control::new(1.0, 3.0), &p);
        assert!((x.px - 1.14).abs() < 1e-12);
        assert_eq!(x.py, 2.0);
        assert!((x.theta - 0.1).abs() < 1e-15);
        assert_eq!(x.v, 1.5);
    }

    #[test]
    fn rollout_examples() {
        let p = bounds13();
        let x0 = RobotState::new(0.0, 0.0, 0.0, 0.0);
        let states = rollout(&x0, &[Control::zero(); 5], &p).unwrap();
        assert_eq!(states.len(), 6);
        assert!(states.iter().all(|s| *s == x0));

        let states = rollout(&RobotState::new(0.0, 0.0, 0.0, 1.0), &[Control::zero(); 3], &p).unwrap();
        let xs: Vec<f64> = states.iter().map(|s| s.px).collect();
        for (got, want) in xs.iter().zip([0.0, 0.05, 0.10, 0.15]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }

        let brake = [Control::new(0.0, -3.0); 12];
        let states = rollout(&RobotState::new(0.0, 0.0, 0.0, 1.5), &brake, &p).unwrap();
        assert!(states[9].v > 0.0);
        assert!(states[10].v.abs() < 1e-12);
        assert!(states[10..].iter().all(|s| s.v.abs() < 1e-12));
    }

    #[test]
    fn empty_horizon_is_an_error() {
        let err = rollout(&RobotState::<f64>::default(), &[], &bounds13()).unwrap_err();
        assert_eq!(err.to_string(), "empty horizon");
    }

    #[test]
    fn f32_step_matches_f64() {
        let p32 = DynamicsParams::<f32>::default();
        let x = step(&RobotState::new(1.0f32, 2.0, 0.0, 1.4), Control::new(1.0, 3.0), &p32);
        assert!((x.px - 1.07).abs() < 1e-6);
        assert_eq!(x.v, 1.5);
    }

    #[test]
    fn default_brake_steps() {
        assert_eq!(DynamicsParams::<f64>::default().brake_steps(), 10);
    }

    proptest! {
        #[test]
        fn bounds_hold_along_any_rollout(
            v0 in 0.0f64..1.5,
            th in -PI..PI,
            seq in prop::collection::vec((-5.0f64..5.0, -10.0f64..10.0), 1..40),
        ) {
            let p = bounds13();
            let seq: Vec<_> = seq.into_iter().map(|(w, a)| Control::new(w, a)).collect();
            let states = rollout(&RobotState::new(0.0, 0.0, th, v0), &seq, &p).unwrap();
            for s in &states[1..] {
                prop_assert!(s.v >= 0.0 && s.v <= p.v_max);
                prop_assert!(s.theta > -PI && s.theta <= PI);
            }
            let again = rollout(&RobotState::new(0.0, 0.0, th, v0), &seq, &p).unwrap();
            prop_assert_eq!(states, again);
        }

        #[test]
        fn full_brake_stops_within_bound(v0 in 0.0f64..=1.5, th in -PI..PI) {
            let p = bounds13();
            let n = p.brake_steps();
            let states = rollout(&RobotState::new(0.0, 0.0, th, v0), &vec![Control::new(0.0, -3.0); n], &p).unwrap();
            let last = states.last().unwrap();
            prop_assert!(last.v.abs() < 1e-12);
            let travelled = (last.px.powi(2) + last.py.powi(2)).sqrt();
            let bound = p.v_max * p.v_max / (2.0 * p.accel_max) + p.v_max * p.dt;
            prop_assert!(travelled <= bound + 1e-12);
        }
    }
}
