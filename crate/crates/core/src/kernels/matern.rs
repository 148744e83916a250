use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Half-integer Matérn smoothness with a closed-form correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "f64", into = "f64")]
pub enum Smoothness {
    Half,
    #[default]
    ThreeHalves,
    FiveHalves,
}

impl Smoothness {
    pub fn value(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }
}

impl TryFrom<f64> for Smoothness {
    type Error = Error;

    fn try_from(nu: f64) -> Result<Self, Error> {
        if nu == 0.5 {
            Ok(Smoothness::Half)
        } else if nu == 1.5 {
            Ok(Smoothness::ThreeHalves)
        } else if nu == 2.5 {
            Ok(Smoothness::FiveHalves)
        } else {
            Err(Error::UnsupportedSmoothness(nu))
        }
    }
}

impl From<Smoothness> for f64 {
    fn from(nu: Smoothness) -> f64 {
        nu.value()
    }
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Matérn correlation at scaled distance `t >= 0`.
pub fn matern_correlation(nu: Smoothness, t: f64) -> f64 {
    match nu {
        Smoothness::Half => (-t).exp(),
        Smoothness::ThreeHalves => {
            let u = 3f64.sqrt() * t;
            (1.0 + u) * (-u).exp()
        }
        Smoothness::FiveHalves => {
            let u = 5f64.sqrt() * t;
            (1.0 + u + 5.0 * t * t / 3.0) * (-u).exp()
        }
    }
}
