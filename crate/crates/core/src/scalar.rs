//! Scalar abstraction shared by the dynamics and safety-score math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the dynamics, rollout and SB-MPC code.
///
/// Implemented for `f32` and `f64`. Grids, worlds and the harness are
/// concrete in `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for literals and sampled noise.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<S: Scalar>(theta: S) -> S {
    let two_pi = S::TAU();
    let mut t = theta % two_pi;
    if t <= -S::PI() {
        t = t + two_pi;
    } else if t > S::PI() {
        t = t - two_pi;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_keeps_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5 + 4.0 * PI) + 0.5).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25_f32), 0.25_f32);
    }
}
