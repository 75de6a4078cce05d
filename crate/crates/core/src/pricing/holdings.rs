use serde::{Deserialize, Serialize};

use super::PricingScenario;
use crate::error::{Error, Result};
use crate::utility::{Derivative, UtilitySpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldingsOptimum {
    pub holdings: f64,
    /// The maximum sits on a bound rather than in the interior.
    pub at_boundary: bool,
    /// Basic-equation residual at `holdings`.
    pub residual: f64,
    /// Magnitude of the two sides of the basic equation, at least 1.
    pub scale: f64,
    pub objective: f64,
}

struct SampleObjective<'a> {
    utility: UtilitySpec,
    beta: f64,
    endowment_t: f64,
    endowment_terminal: f64,
    prices: &'a [f64],
    payoffs: &'a [f64],
}

impl<'a> SampleObjective<'a> {
    fn new(scenario: &PricingScenario, prices: &'a [f64], payoffs: &'a [f64]) -> Result<Self> {
        scenario.validate()?;
        if prices.is_empty() || payoffs.is_empty() {
            return Err(Error::invalid("price and payoff samples must be non-empty"));
        }
        if prices.iter().chain(payoffs).any(|v| !v.is_finite()) {
            return Err(Error::invalid("samples must be finite"));
        }
        Ok(Self {
            utility: scenario.utility,
            beta: scenario.beta,
            endowment_t: scenario.endowment_t,
            endowment_terminal: scenario.endowment_terminal,
            prices,
            payoffs,
        })
    }

    fn check(&self, xi: f64) -> Result<()> {
        for &p in self.prices {
            self.utility.check(self.endowment_t - p * xi)?;
        }
        for &x in self.payoffs {
            self.utility.check(self.endowment_terminal + x * xi)?;
        }
        Ok(())
    }

    fn mean_over(samples: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        samples.iter().map(|&s| f(s)).sum::<f64>() / samples.len() as f64
    }

    /// `mean u(e_t - pξ) + β mean u(e_T + xξ)`.
    fn value(&self, xi: f64) -> Result<f64> {
        self.check(xi)?;
        let u = |c| self.utility.eval_unchecked(c, Derivative::Value);
        Ok(
            Self::mean_over(self.prices, |p| u(self.endowment_t - p * xi))
                + self.beta
                    * Self::mean_over(self.payoffs, |x| u(self.endowment_terminal + x * xi)),
        )
    }

    /// Both sides of the basic equation, `(mean u'(c_t) p, β mean u'(c_T) x)`.
    fn sides(&self, xi: f64) -> Result<(f64, f64)> {
        self.check(xi)?;
        let du = |c| self.utility.eval_unchecked(c, Derivative::First);
        let lhs = Self::mean_over(self.prices, |p| du(self.endowment_t - p * xi) * p);
        let rhs =
            self.beta * Self::mean_over(self.payoffs, |x| du(self.endowment_terminal + x * xi) * x);
        Ok((lhs, rhs))
    }

    fn residual(&self, xi: f64) -> Result<f64> {
        let (lhs, rhs) = self.sides(xi)?;
        Ok(lhs - rhs)
    }

    /// Derivative of the objective in ξ; the negated residual.
    fn slope(&self, xi: f64) -> Result<f64> {
        Ok(-self.residual(xi)?)
    }

    fn scale(&self, xi: f64) -> Result<f64> {
        let (lhs, rhs) = self.sides(xi)?;
        Ok(lhs.abs().max(rhs.abs()).max(1.0))
    }
}

/// Sample-average basic-equation residual
/// `mean[u'(e_t - pξ) p] - β mean[u'(e_T + xξ) x]`.
pub fn residual_basic_eq(
    scenario: &PricingScenario,
    price_samples: &[f64],
    payoff_samples: &[f64],
    holdings: f64,
) -> Result<f64> {
    SampleObjective::new(scenario, price_samples, payoff_samples)?.residual(holdings)
}

const CONCAVITY_PROBES: usize = 65;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Holdings maximizing `mean u(e_t - pξ) + β mean u(e_T + xξ)` over `bounds`.
///
/// Golden-section search narrows the bracket, then bisection on the objective's
/// derivative pins the first-order condition.
pub fn optimize_holdings(
    scenario: &PricingScenario,
    price_samples: &[f64],
    payoff_samples: &[f64],
    bounds: (f64, f64),
) -> Result<HoldingsOptimum> {
    let objective = SampleObjective::new(scenario, price_samples, payoff_samples)?;
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(format!(
            "invalid holdings bounds ({lo}, {hi})"
        )));
    }
    // Consumption is affine in ξ, so admissibility at both ends covers the interval.
    objective.check(lo)?;
    objective.check(hi)?;

    let slopes: Vec<f64> = (0..CONCAVITY_PROBES)
        .map(|i| objective.slope(lo + (hi - lo) * i as f64 / (CONCAVITY_PROBES - 1) as f64))
        .collect::<Result<_>>()?;
    let slack = 1e-9 * slopes.iter().fold(1.0_f64, |m, s| m.max(s.abs()));
    if slopes.windows(2).any(|w| w[1] > w[0] + slack) {
        return Err(Error::NonConcave { lo, hi });
    }

    let finish = |xi: f64, at_boundary: bool| -> Result<HoldingsOptimum> {
        Ok(HoldingsOptimum {
            holdings: xi,
            at_boundary,
            residual: objective.residual(xi)?,
            scale: objective.scale(xi)?,
            objective: objective.value(xi)?,
        })
    };
    let (slope_lo, slope_hi) = (slopes[0], slopes[CONCAVITY_PROBES - 1]);
    if slope_lo <= 0.0 {
        return finish(lo, true);
    }
    if slope_hi >= 0.0 {
        return finish(hi, true);
    }

    // Golden-section on the objective.
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = objective.value(x1)?;
    let mut f2 = objective.value(x2)?;
    while b - a > 1e-3 * (hi - lo) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = objective.value(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = objective.value(x1)?;
        }
    }
    if !(objective.slope(a)? >= 0.0 && objective.slope(b)? <= 0.0) {
        a = lo;
        b = hi;
    }

    // Bisection on the slope.
    let tolerance = 1e-12 * objective.scale(0.5 * (a + b))?;
    for _ in 0..400 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let s = objective.slope(mid)?;
        if s.abs() <= tolerance {
            return finish(mid, false);
        }
        if s > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (sa, sb) = (objective.slope(a)?.abs(), objective.slope(b)?.abs());
    finish(if sa <= sb { a } else { b }, false)
}
