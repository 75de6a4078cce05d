//! Investor utility families with first and second derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "parameter", rename_all = "lowercase")]
pub enum UtilitySpec {
    /// `u = c`.
    Linear,
    /// `u = ln c`, `c > 0`.
    Log,
    /// `u = c^(1-γ) / (1-γ)`, `c > 0`, `γ > 0`, `γ ≠ 1`.
    Power(f64),
    /// `u = -exp(-αc) / α`, `α > 0`.
    Exponential(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    Value,
    First,
    Second,
}

impl Derivative {
    pub fn from_order(order: u8) -> Result<Self> {
        match order {
            0 => Ok(Derivative::Value),
            1 => Ok(Derivative::First),
            2 => Ok(Derivative::Second),
            _ => Err(Error::invalid(format!(
                "derivative order must be 0, 1 or 2, got {order}"
            ))),
        }
    }
}

impl UtilitySpec {
    /// Validated constructor from a family name and its parameter.
    pub fn from_family(family: &str, parameter: Option<f64>) -> Result<Self> {
        let need = |name: &str| {
            parameter.ok_or_else(|| Error::invalid(format!("{name} utility requires a parameter")))
        };
        let spec = match family.trim().to_ascii_lowercase().as_str() {
            "linear" => UtilitySpec::Linear,
            "log" => UtilitySpec::Log,
            "power" => UtilitySpec::Power(need("power")?),
            "exponential" => UtilitySpec::Exponential(need("exponential")?),
            other => return Err(Error::invalid(format!("unknown utility family `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            UtilitySpec::Power(gamma) => {
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(Error::invalid(format!(
                        "power utility needs γ > 0, got {gamma}"
                    )));
                }
                if gamma == 1.0 {
                    return Err(Error::invalid(
                        "power utility with γ = 1 is the log family; select `log` explicitly",
                    ));
                }
            }
            UtilitySpec::Exponential(alpha) => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(Error::invalid(format!(
                        "exponential utility needs α > 0, got {alpha}"
                    )));
                }
            }
            UtilitySpec::Linear | UtilitySpec::Log => {}
        }
        Ok(())
    }

    pub fn family(&self) -> &'static str {
        match self {
            UtilitySpec::Linear => "linear",
            UtilitySpec::Log => "log",
            UtilitySpec::Power(_) => "power",
            UtilitySpec::Exponential(_) => "exponential",
        }
    }

    pub fn parameter(&self) -> Option<f64> {
        match *self {
            UtilitySpec::Power(p) | UtilitySpec::Exponential(p) => Some(p),
            _ => None,
        }
    }

    /// Whether `c` lies in the domain of the family.
    pub fn admits(&self, c: f64) -> bool {
        match self {
            UtilitySpec::Log | UtilitySpec::Power(_) => c.is_finite() && c > 0.0,
            UtilitySpec::Linear | UtilitySpec::Exponential(_) => c.is_finite(),
        }
    }

    /// Whether consumption must stay positive.
    pub fn requires_positive_consumption(&self) -> bool {
        matches!(self, UtilitySpec::Log | UtilitySpec::Power(_))
    }

    pub(crate) fn check(&self, c: f64) -> Result<()> {
        if self.admits(c) {
            Ok(())
        } else {
            Err(Error::InadmissibleConsumption {
                consumption: c,
                family: self.family(),
                trial_price: None,
            })
        }
    }

    pub fn eval(&self, c: f64, derivative: Derivative) -> Result<f64> {
        self.validate()?;
        self.check(c)?;
        Ok(self.eval_unchecked(c, derivative))
    }

    pub fn value(&self, c: f64) -> Result<f64> {
        self.eval(c, Derivative::Value)
    }

    pub fn marginal(&self, c: f64) -> Result<f64> {
        self.eval(c, Derivative::First)
    }

    pub fn curvature(&self, c: f64) -> Result<f64> {
        self.eval(c, Derivative::Second)
    }

    pub(crate) fn eval_unchecked(&self, c: f64, derivative: Derivative) -> f64 {
        use Derivative::*;
        match (*self, derivative) {
            (UtilitySpec::Linear, Value) => c,
            (UtilitySpec::Linear, First) => 1.0,
            (UtilitySpec::Linear, Second) => 0.0,
            (UtilitySpec::Log, Value) => c.ln(),
            (UtilitySpec::Log, First) => 1.0 / c,
            (UtilitySpec::Log, Second) => -1.0 / (c * c),
            (UtilitySpec::Power(g), Value) => c.powf(1.0 - g) / (1.0 - g),
            (UtilitySpec::Power(g), First) => c.powf(-g),
            (UtilitySpec::Power(g), Second) => -g * c.powf(-g - 1.0),
            (UtilitySpec::Exponential(a), Value) => -(-a * c).exp() / a,
            (UtilitySpec::Exponential(a), First) => (-a * c).exp(),
            (UtilitySpec::Exponential(a), Second) => -a * (-a * c).exp(),
        }
    }
}

/// `u`, `u'` or `u''` at consumption `c` (order 0, 1 or 2).
pub fn eval_utility(spec: &UtilitySpec, c: f64, order: u8) -> Result<f64> {
    spec.eval(c, Derivative::from_order(order)?)
}
