use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which parts of the transform are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Scale + translation on the rigid axis, kernel displacement field on the other.
    #[default]
    Hybrid,
    /// Scale + translation on the rigid axis, pure translation on the other.
    Rigid,
    /// Kernel displacement fields on both axes.
    Nonrigid,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(Mode::Hybrid),
            "rigid" => Ok(Mode::Rigid),
            "nonrigid" | "non-rigid" => Ok(Mode::Nonrigid),
            _ => Err(Error::InvalidParameter(format!("unknown mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Hybrid => "hybrid",
            Mode::Rigid => "rigid",
            Mode::Nonrigid => "nonrigid",
        })
    }
}

/// Shape of the Gaussian kernel between basis points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelForm {
    /// `exp(-|a - b| / (2 beta))`, Euclidean distance not squared.
    #[default]
    AsPrinted,
    /// `exp(-|a - b|^2 / (2 beta^2))`.
    Squared,
}

impl std::str::FromStr for KernelForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(KernelForm::AsPrinted),
            "squared" => Ok(KernelForm::Squared),
            _ => Err(Error::InvalidParameter(format!(
                "unknown kernel form {s:?}"
            ))),
        }
    }
}

impl std::fmt::Display for KernelForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelForm::AsPrinted => "as-printed",
            KernelForm::Squared => "squared",
        })
    }
}

/// EM registration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default, deny_unknown_fields)]
pub struct RegistrationConfig<T: Scalar> {
    /// Weight of the uniform noise component, in `[0, 1)`.
    pub w: T,
    /// Kernel width.
    pub beta: T,
    /// Smoothness penalty weight.
    pub lambda: T,
    pub mode: Mode,
    pub kernel: KernelForm,
    pub max_iter: usize,
    /// Stop when `|sigma2_new - sigma2| < sigma_tol`. `None`: `1e-10 * range^2`.
    pub sigma_tol: Option<T>,
    /// Lower bound on `sigma2`. `None`: `1e-8 * range^2`.
    pub sigma_floor: Option<T>,
    /// Put the similarity on axis 2 and the displacement field on axis 1.
    pub swap_axes: bool,
    /// Run EM on clouds centred on their joint centroid and divided by their
    /// joint RMS radius. `w`, `beta` and `lambda` then refer to normalised
    /// coordinates; the returned transform is in the original units.
    pub normalize: bool,
}

impl<T: Scalar> Default for RegistrationConfig<T> {
    fn default() -> Self {
        RegistrationConfig {
            w: T::lit(0.1),
            beta: T::lit(2.0),
            lambda: T::lit(2.0),
            mode: Mode::Hybrid,
            kernel: KernelForm::AsPrinted,
            max_iter: 150,
            sigma_tol: None,
            sigma_floor: None,
            swap_axes: false,
            normalize: true,
        }
    }
}

impl<T: Scalar> RegistrationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.w >= T::zero() && self.w < T::one()) {
            return bad(format!("w must lie in [0, 1), got {}", self.w));
        }
        if !(self.beta > T::zero() && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.lambda >= T::zero() && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        for (name, v) in [
            ("sigma_tol", self.sigma_tol),
            ("sigma_floor", self.sigma_floor),
        ] {
            if let Some(v) = v {
                if !(v > T::zero() && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        Ok(())
    }

    /// Index of the axis carrying the similarity (scale + translation).
    pub fn rigid_axis(&self) -> usize {
        usize::from(self.swap_axes)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_w(mut self, w: T) -> Self {
        self.w = w;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RegistrationConfig::<f64>::default();
        c.validate().unwrap();
        assert_eq!((c.beta, c.lambda, c.max_iter), (2.0, 2.0, 150));
    }

    #[test]
    fn invalid_fields_rejected() {
        let base = RegistrationConfig::<f64>::default();
        for c in [
            base.with_w(1.0),
            base.with_w(-0.1),
            RegistrationConfig { beta: 0.0, ..base },
            RegistrationConfig {
                lambda: -1.0,
                ..base
            },
            RegistrationConfig {
                max_iter: 0,
                ..base
            },
            RegistrationConfig {
                sigma_floor: Some(0.0),
                ..base
            },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn names_parse() {
        assert_eq!("rigid".parse::<Mode>().unwrap(), Mode::Rigid);
        assert_eq!(
            "squared".parse::<KernelForm>().unwrap(),
            KernelForm::Squared
        );
        assert!("affine".parse::<Mode>().is_err());
        assert_eq!(Mode::Nonrigid.to_string(), "nonrigid");
    }
}
