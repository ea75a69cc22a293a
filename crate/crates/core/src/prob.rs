//! Numeric backends for probabilities and expectations.
//!
//! Every exact computation in the crate is generic over [`Prob`], so the same
//! code runs in double precision or in exact rational arithmetic. Matching
//! sizes are integers, which makes every expectation over an enumerable model
//! an exact rational in the second mode.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, ToPrimitive, Zero};

use crate::model::{Timestep, VertexSpec};

pub type Rational = BigRational;

/// Absolute tolerance used by every floating point equality check.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

pub trait Prob: Clone + Debug + Display + PartialOrd + Num + Send + Sync {
    /// Death mass `P_v(t)`; zero outside `[a_v, b_v]`.
    fn death_mass(spec: &VertexSpec, t: Timestep) -> Self;

    fn from_count(k: usize) -> Self;

    fn to_f64(&self) -> f64;

    /// Strictly greater, with float noise below [`TIE_EPSILON`] treated as a tie.
    fn exceeds(&self, other: &Self) -> bool;

    /// `Pr[d_v >= t]`.
    fn survival(spec: &VertexSpec, t: Timestep) -> Self {
        let mut acc = Self::zero();
        for tau in t.max(spec.arrival)..=spec.deadline {
            acc = acc + Self::death_mass(spec, tau);
        }
        acc
    }

    /// Conditional death hazard `P_v(t) / Pr[d_v >= t]`. Returns one when the
    /// tail is empty so that impossible vertices are always removed.
    fn hazard(spec: &VertexSpec, t: Timestep) -> Self {
        if t >= spec.deadline {
            return Self::one();
        }
        let tail = Self::survival(spec, t);
        if tail.is_zero() {
            Self::one()
        } else {
            Self::death_mass(spec, t) / tail
        }
    }
}

/// Ties closer than this are broken by enumeration order in float mode.
pub const TIE_EPSILON: f64 = 1e-12;

impl Prob for f64 {
    fn death_mass(spec: &VertexSpec, t: Timestep) -> Self {
        spec.mass(t)
    }

    fn from_count(k: usize) -> Self {
        k as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn exceeds(&self, other: &Self) -> bool {
        *self > *other + TIE_EPSILON
    }
}

impl Prob for Rational {
    fn death_mass(spec: &VertexSpec, t: Timestep) -> Self {
        spec.exact_mass(t)
    }

    fn from_count(k: usize) -> Self {
        Rational::from_integer(BigInt::from(k))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn exceeds(&self, other: &Self) -> bool {
        self > other
    }
}

/// Exact rational for a finite float (binary expansion, not decimal).
pub fn rational_from_f64(x: f64) -> Rational {
    Rational::from_float(x).unwrap_or_else(Rational::zero)
}

/// Parses `"p/q"` or an integer into a rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    match text.split_once('/') {
        Some((num, den)) => {
            let num: BigInt = num.trim().parse().ok()?;
            let den: BigInt = den.trim().parse().ok()?;
            if den.is_zero() {
                return None;
            }
            Some(Rational::new(num, den))
        }
        None => text.parse::<BigInt>().ok().map(Rational::from_integer),
    }
}

pub fn rational_one() -> Rational {
    Rational::one()
}
