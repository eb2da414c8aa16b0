//! Unit-interval scalars and binary outcomes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack absorbed when interior arithmetic drifts just outside `[0, 1]`.
pub const ROUNDOFF_TOLERANCE: f64 = 1e-12;

/// A probability in `[0, 1]`.
///
/// Values are checked when they enter the system (configuration, public
/// operations). Interior arithmetic works on raw `f64` and comes back
/// through [`Probability::from_interior`], which tolerates roundoff.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const HALF: Probability = Probability(0.5);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::ProbabilityOutOfRange(value))
        }
    }

    /// Accepts values within [`ROUNDOFF_TOLERANCE`] of the unit interval and
    /// clamps them into it.
    pub fn from_interior(value: f64) -> Result<Self> {
        if (-ROUNDOFF_TOLERANCE..=1.0 + ROUNDOFF_TOLERANCE).contains(&value) {
            Ok(Probability(value.clamp(0.0, 1.0)))
        } else {
            Err(Error::ProbabilityOutOfRange(value))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn complement(self) -> Probability {
        Probability(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A binary outcome `y ∈ {0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Zero, Outcome::One];

    #[inline]
    pub fn from_bool(b: bool) -> Self {
        if b {
            Outcome::One
        } else {
            Outcome::Zero
        }
    }

    #[inline]
    pub fn is_one(self) -> bool {
        matches!(self, Outcome::One)
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        match self {
            Outcome::Zero => 0.0,
            Outcome::One => 1.0,
        }
    }

    #[inline]
    pub fn flip(self) -> Outcome {
        match self {
            Outcome::Zero => Outcome::One,
            Outcome::One => Outcome::Zero,
        }
    }

    /// Probability of this outcome under `P(y = 1) = p`.
    #[inline]
    pub fn likelihood(self, p: f64) -> f64 {
        match self {
            Outcome::Zero => 1.0 - p,
            Outcome::One => p,
        }
    }
}

impl TryFrom<u8> for Outcome {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Outcome::Zero),
            1 => Ok(Outcome::One),
            other => Err(Error::input(format!("outcome must be 0 or 1, got {other}"))),
        }
    }
}

impl From<Outcome> for u8 {
    fn from(o: Outcome) -> u8 {
        match o {
            Outcome::Zero => 0,
            Outcome::One => 1,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(Probability::new(-0.1).is_err());
        assert!(Probability::new(1.000001).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert_eq!(Probability::new(0.25).unwrap().value(), 0.25);
    }

    #[test]
    fn interior_clamps_roundoff_only() {
        assert_eq!(
            Probability::from_interior(1.0 + 1e-13).unwrap().value(),
            1.0
        );
        assert_eq!(Probability::from_interior(-1e-13).unwrap().value(), 0.0);
        assert!(Probability::from_interior(1.0 + 1e-9).is_err());
    }

    #[test]
    fn serde_validates() {
        let ok: Probability = serde_json::from_str("0.3").unwrap();
        assert_eq!(ok.value(), 0.3);
        assert!(serde_json::from_str::<Probability>("1.5").is_err());
        assert!(serde_json::from_str::<Outcome>("2").is_err());
    }

    #[test]
    fn outcome_helpers() {
        assert_eq!(Outcome::One.flip(), Outcome::Zero);
        assert_eq!(Outcome::Zero.likelihood(0.3), 0.7);
        assert_eq!(Outcome::from_bool(true).as_f64(), 1.0);
    }
}
