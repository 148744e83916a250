use serde::{Deserialize, Serialize};

use super::squared_distance;

/// A smooth bump `a * exp{b [1 - (1 - |x-h|^2 / r^2)^-1]}` supported on the
/// open ball of radius `r` around `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpFunction {
    pub centroid: Vec<f64>,
    pub amplitude: f64,
    #[serde(default = "unit_shape")]
    pub shape: f64,
    pub radius: f64,
}

fn unit_shape() -> f64 {
    1.0
}

impl BumpFunction {
    pub fn new(centroid: Vec<f64>, amplitude: f64, shape: f64, radius: f64) -> Self {
        Self {
            centroid,
            amplitude,
            shape,
            radius,
        }
    }

    /// Binary-amplitude bump with unit shape, the form used during inference.
    pub fn switch(centroid: Vec<f64>, on: bool, radius: f64) -> Self {
        Self::new(centroid, if on { 1.0 } else { 0.0 }, 1.0, radius)
    }

    pub fn is_active(&self) -> bool {
        self.amplitude > 0.0
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.radius > 0.0
            && self.radius.is_finite()
            && self.shape > 0.0
            && self.shape.is_finite()
            && self.amplitude >= 0.0
            && self.amplitude.is_finite()
            && self.centroid.iter().all(|c| c.is_finite());
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidParameter(format!(
                "bump requires radius > 0, shape > 0, amplitude >= 0 and finite centroid, got {self:?}"
            )))
        }
    }

    /// Evaluates the bump at `x`. Exactly zero outside the open support ball.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let d2 = squared_distance(x, &self.centroid);
        let r2 = self.radius * self.radius;
        if d2 >= r2 {
            return 0.0;
        }
        let u = 1.0 - d2 / r2;
        self.amplitude * (self.shape * (1.0 - 1.0 / u)).exp()
    }
}

/// Free-function form of [`BumpFunction::eval`].
pub fn bump_eval(bump: &BumpFunction, x: &[f64]) -> f64 {
    bump.eval(x)
}
