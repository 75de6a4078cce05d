//! Consumption-based pricing under a linear Taylor expansion of marginal utility.
//!
//! The mean price `p0` enters each pricing equation through current
//! consumption `e_t - p0 * ξ`, so every equation is implicit in `p0` and is
//! solved numerically (see [`solver`]). Holdings can be optimized against the
//! exact sample-average utility objective (see [`holdings`]).

mod holdings;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utility::{Derivative, UtilitySpec};

pub use holdings::{optimize_holdings, residual_basic_eq, HoldingsOptimum};
pub use solver::{
    solve_price_first_purchase, solve_price_first_purchase_with, solve_price_second_purchase,
    solve_price_second_purchase_with, solve_price_single, solve_price_single_with,
    solve_price_two_sales, solve_price_two_sales_with, PriceEquation, PriceSolution, SolveMethod,
    SolverOptions,
};

/// Single purchase at `t`, single sale at `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingScenario {
    pub utility: UtilitySpec,
    /// Subjective discount factor β in (0, 1].
    pub beta: f64,
    pub endowment_t: f64,
    pub endowment_terminal: f64,
    /// Units bought, ξ.
    pub holdings: f64,
    /// Mean payoff x0 at the sale date (expected price plus dividend).
    pub payoff_mean: f64,
    pub payoff_variance: f64,
    pub price_variance: f64,
    /// Dividend part of the payoff; informational.
    #[serde(default)]
    pub dividend_mean: f64,
}

impl PricingScenario {
    pub fn validate(&self) -> Result<()> {
        self.utility.validate()?;
        let finite = [
            self.beta,
            self.endowment_t,
            self.endowment_terminal,
            self.holdings,
            self.payoff_mean,
            self.payoff_variance,
            self.price_variance,
            self.dividend_mean,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scenario fields must be finite"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if self.payoff_variance < 0.0 || self.price_variance < 0.0 {
            return Err(Error::invalid("variances must be non-negative"));
        }
        if self.holdings < 0.0 {
            return Err(Error::invalid("holdings must be non-negative"));
        }
        Ok(())
    }
}

/// Event times of a two-trade scenario, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeTimes {
    pub first_purchase: f64,
    pub second_purchase: f64,
    /// Sale date `T` (one sale) or `T1` (two sales).
    pub first_sale: f64,
    /// `T2`, present only with two sales.
    pub second_sale: Option<f64>,
}

/// Two purchases at `t1 < t2`, sold either together at `T` or at `T1 <= T2`.
///
/// `first` carries the first-trade fields: holdings ξ(t1), payoff mean and
/// variance forecast at t1, and σ_p²(t1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTradeScenario {
    pub first: PricingScenario,
    pub holdings2: f64,
    pub payoff_mean2: f64,
    pub payoff_variance2: f64,
    pub price_variance2: f64,
    /// B_p(t1, t2).
    pub price_autocorr: f64,
    /// B_x(T1, T2); present for the two-sale case.
    pub payoff_autocorr: Option<f64>,
    /// Mean payoff at T1 forecast at t2; defaults to `payoff_mean2`.
    pub payoff_mean12: Option<f64>,
    pub times: TradeTimes,
}

impl TwoTradeScenario {
    pub fn has_two_sales(&self) -> bool {
        self.payoff_autocorr.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        self.first.validate()?;
        let fields = [
            self.holdings2,
            self.payoff_mean2,
            self.payoff_variance2,
            self.price_variance2,
            self.price_autocorr,
            self.payoff_autocorr.unwrap_or(0.0),
            self.payoff_mean12.unwrap_or(0.0),
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scenario fields must be finite"));
        }
        if self.holdings2 < 0.0 {
            return Err(Error::invalid("holdings must be non-negative"));
        }
        if self.payoff_variance2 < 0.0 || self.price_variance2 < 0.0 {
            return Err(Error::invalid("variances must be non-negative"));
        }
        check_cauchy_schwarz(
            "price autocorrelation",
            self.price_autocorr,
            self.first.price_variance,
            self.price_variance2,
        )?;
        if let Some(bx) = self.payoff_autocorr {
            check_cauchy_schwarz(
                "payoff autocorrelation",
                bx,
                self.first.payoff_variance,
                self.payoff_variance2,
            )?;
        }

        let t = &self.times;
        let ordered = match (self.has_two_sales(), t.second_sale) {
            (true, Some(t2_sale)) => {
                t.first_purchase < t.second_purchase
                    && t.second_purchase <= t.first_sale
                    && t.first_sale <= t2_sale
            }
            (true, None) => {
                return Err(Error::invalid("two-sale scenario needs a second sale time"));
            }
            (false, _) => t.first_purchase < t.second_purchase && t.second_purchase < t.first_sale,
        };
        if !ordered {
            return Err(Error::invalid(format!(
                "trade times are out of order: {t:?}"
            )));
        }
        Ok(())
    }

    /// Mean payoff at T1 forecast at t2.
    pub fn payoff_mean12(&self) -> f64 {
        self.payoff_mean12.unwrap_or(self.payoff_mean2)
    }
}

fn check_cauchy_schwarz(what: &str, cov: f64, var1: f64, var2: f64) -> Result<()> {
    let bound = (var1 * var2).sqrt();
    if cov.abs() > bound * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "{what} {cov} exceeds the Cauchy-Schwarz bound {bound}"
        )));
    }
    Ok(())
}

/// Stochastic discount factor `β u'(c_T) / u'(c_t)`.
pub fn sdf(utility: &UtilitySpec, beta: f64, c_t: f64, c_terminal: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }
    let now = utility.marginal(c_t)?;
    let later = utility.marginal(c_terminal)?;
    Ok(beta * later / now)
}

/// Linearized `E[u'(c_t) p] ≈ u'(c0) p0 - ξ u''(c0) σ_p²`.
pub fn linearized_marginal_expectation(
    utility: &UtilitySpec,
    mean_c: f64,
    mean_p: f64,
    variance_p: f64,
    holdings: f64,
) -> Result<f64> {
    let u1 = utility.eval(mean_c, Derivative::First)?;
    let u2 = utility.eval(mean_c, Derivative::Second)?;
    Ok(u1 * mean_p - holdings * u2 * variance_p)
}
