use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::ModeMoments;
use crate::spectral::{SpectralField, SpectrumSpec};

/// Test functional applied to the slow component at the final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FunctionalSpec {
    /// `offset + <h, x>`.
    Linear {
        h: SpectralField,
        #[serde(default)]
        offset: f64,
    },
    /// `|x|^2`. Unbounded, kept because its Gaussian expectation is exact.
    NormSquared,
    /// `exp(-|x|^2)`: smooth with bounded derivatives of every order.
    BoundedExp,
}

impl FunctionalSpec {
    pub fn linear(h: SpectralField) -> Self {
        FunctionalSpec::Linear { h, offset: 0.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionalSpec::Linear { .. } => "LINEAR",
            FunctionalSpec::NormSquared => "NORM_SQUARED",
            FunctionalSpec::BoundedExp => "BOUNDED_EXP",
        }
    }

    /// Label attached to reported rates.
    pub fn label(&self) -> &'static str {
        match self {
            FunctionalSpec::NormSquared => "oracle functional",
            _ => "test functional",
        }
    }

    pub fn check(&self, spec: &SpectrumSpec) -> Result<()> {
        if let FunctionalSpec::Linear { h, offset } = self {
            spec.check(h)?;
            if !offset.is_finite() || h.coeffs().iter().any(|v| !v.is_finite()) {
                return Err(Error::param("phi", "linear functional must be finite"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FunctionalSpec::Linear { h, offset } => {
                offset + h.coeffs().iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }
            FunctionalSpec::NormSquared => x.iter().map(|v| v * v).sum(),
            FunctionalSpec::BoundedExp => (-x.iter().map(|v| v * v).sum::<f64>()).exp(),
        }
    }

    /// `E phi(X)` for `X` with independent Gaussian coefficients.
    pub fn gaussian_expectation(&self, means: &[f64], vars: &[f64]) -> f64 {
        match self {
            FunctionalSpec::Linear { h, offset } => {
                offset + h.coeffs().iter().zip(means).map(|(a, b)| a * b).sum::<f64>()
            }
            FunctionalSpec::NormSquared => means.iter().zip(vars).map(|(m, v)| m * m + v).sum(),
            FunctionalSpec::BoundedExp => means
                .iter()
                .zip(vars)
                .map(|(m, v)| (-m * m / (1.0 + 2.0 * v)).exp() / (1.0 + 2.0 * v).sqrt())
                .product(),
        }
    }

    pub fn moment_expectation(&self, moments: &[ModeMoments]) -> f64 {
        let means: Vec<f64> = moments.iter().map(|m| m.mean_x).collect();
        let vars: Vec<f64> = moments.iter().map(|m| m.var_x).collect();
        self.gaussian_expectation(&means, &vars)
    }
}
