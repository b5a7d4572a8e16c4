//! Scalar abstraction shared by every numerical module.
//!
//! All geometry, expression evaluation and time stepping is written against
//! [`Real`], so the same code runs in `f64` (the default used by the CLI and
//! reports) and in `f32`. The structural tolerances scale with the precision
//! of the type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Slack allowed on unit-norm checks of normals.
    const NORM_TOL: f64;
    /// Slack for "lies on the boundary" and supporting-property checks.
    const BOUNDARY_TOL: f64;
    /// Equality slack for tie-breaking and membership.
    const TIE_TOL: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const NORM_TOL: f64 = 1e-12;
    const BOUNDARY_TOL: f64 = 1e-9;
    const TIE_TOL: f64 = 1e-12;
}

impl Real for f32 {
    const NORM_TOL: f64 = 1e-5;
    const BOUNDARY_TOL: f64 = 1e-4;
    const TIE_TOL: f64 = 1e-6;
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn to_f64_vec<T: Real>(a: &[T]) -> Vec<f64> {
    a.iter().map(|x| x.as_f64()).collect()
}

pub fn from_f64_vec<T: Real>(a: &[f64]) -> Vec<T> {
    a.iter().map(|&x| T::lit(x)).collect()
}

/// Lexicographic comparison where components closer than `slack` count as equal.
pub fn lex_cmp<T: Real>(a: &[T], b: &[T], slack: T) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    for (&x, &y) in a.iter().zip(b) {
        if (x - y).abs() > slack {
            return if x < y { Ordering::Less } else { Ordering::Greater };
        }
    }
    Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cmp::Ordering;

    #[test]
    fn lex_cmp_uses_slack() {
        assert_eq!(lex_cmp(&[0.0, 1.0], &[1e-14, 0.5], 1e-12), Ordering::Greater);
        assert_eq!(lex_cmp(&[0.0, 0.5], &[1e-3, 0.0], 1e-12), Ordering::Less);
        assert_eq!(lex_cmp(&[1.0f32], &[1.0f32], 0.0), Ordering::Equal);
    }

    #[test]
    fn norms() {
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
        assert_eq!(norm(&[3.0f32, 4.0]), 5.0);
    }
}
