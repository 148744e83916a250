use serde::{Deserialize, Serialize};

use super::squared_distance;

/// Support radius of the Wendland component: a single radius, or one radius
/// per coordinate for the anisotropic variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WendlandSupport {
    Isotropic(f64),
    Anisotropic(Vec<f64>),
}

impl WendlandSupport {
    /// Scaled separation `t`; the kernel vanishes for `t >= 1`.
    pub fn scaled_distance(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self {
            WendlandSupport::Isotropic(r0) => squared_distance(x, x2).sqrt() / r0,
            WendlandSupport::Anisotropic(radii) => x
                .iter()
                .zip(x2)
                .zip(radii)
                .map(|((a, b), r)| {
                    let u = (a - b) / r;
                    u * u
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> f64 {
        wendland_profile(self.scaled_distance(x, x2))
    }

    /// Largest radius; the isotropic radius in the common case.
    pub fn max_radius(&self) -> f64 {
        match self {
            WendlandSupport::Isotropic(r0) => *r0,
            WendlandSupport::Anisotropic(radii) => radii.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        match self {
            WendlandSupport::Isotropic(r0) => vec![*r0],
            WendlandSupport::Anisotropic(radii) => radii.clone(),
        }
    }

    pub fn radii_mut(&mut self) -> Vec<&mut f64> {
        match self {
            WendlandSupport::Isotropic(r0) => vec![r0],
            WendlandSupport::Anisotropic(radii) => radii.iter_mut().collect(),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let radii = self.radii();
        if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(crate::Error::InvalidParameter(format!(
                "Wendland radius must be positive and finite, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `(1-t)^8 (35 t^3 + 25 t^2 + 8 t + 1)` for `t < 1`, else exactly zero.
pub fn wendland_profile(t: f64) -> f64 {
    if !(t < 1.0) {
        return 0.0;
    }
    let s = 1.0 - t;
    let s2 = s * s;
    let s4 = s2 * s2;
    s4 * s4 * (((35.0 * t + 25.0) * t + 8.0) * t + 1.0)
}

/// Isotropic Wendland kernel with support radius `r0`.
pub fn wendland_eval(r0: f64, x: &[f64], x2: &[f64]) -> f64 {
    wendland_profile(squared_distance(x, x2).sqrt() / r0)
}
