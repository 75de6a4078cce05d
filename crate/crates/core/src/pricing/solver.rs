use serde::{Deserialize, Serialize};

use super::{PricingScenario, TwoTradeScenario};
use crate::error::{Error, Result};
use crate::utility::{Derivative, UtilitySpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Weight of the new iterate in the damped fixed-point update.
    pub damping: f64,
    /// Residual tolerance relative to `max(1, |p0|)`.
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            damping: 0.5,
            tolerance: 1e-10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FixedPoint,
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceSolution {
    pub mean_price: f64,
    /// Right side minus left side of the pricing equation at `mean_price`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: SolveMethod,
}

/// One of the implicit mean-price equations, `p0 = rhs(p0)`.
#[derive(Debug, Clone, Copy)]
pub enum PriceEquation<'a> {
    /// Single purchase and sale; also the first of two purchases.
    Single(&'a PricingScenario),
    /// Second purchase, both lots sold at the same date.
    SecondPurchase {
        scenario: &'a TwoTradeScenario,
        first_price: f64,
    },
    /// Second purchase with two successive sales.
    TwoSales {
        scenario: &'a TwoTradeScenario,
        first_price: f64,
    },
}

impl PriceEquation<'_> {
    fn utility(&self) -> UtilitySpec {
        match self {
            PriceEquation::Single(s) => s.utility,
            PriceEquation::SecondPurchase { scenario, .. }
            | PriceEquation::TwoSales { scenario, .. } => scenario.first.utility,
        }
    }

    fn beta(&self) -> f64 {
        match self {
            PriceEquation::Single(s) => s.beta,
            PriceEquation::SecondPurchase { scenario, .. }
            | PriceEquation::TwoSales { scenario, .. } => scenario.first.beta,
        }
    }

    /// Consumption left at the purchase date before paying for the traded lot,
    /// and the size of that lot.
    fn wealth_and_lot(&self) -> (f64, f64) {
        match *self {
            PriceEquation::Single(s) => (s.endowment_t, s.holdings),
            PriceEquation::SecondPurchase {
                scenario,
                first_price,
            }
            | PriceEquation::TwoSales {
                scenario,
                first_price,
            } => (
                scenario.first.endowment_t - first_price * scenario.first.holdings,
                scenario.holdings2,
            ),
        }
    }

    /// Mean current and terminal consumption at trial price `p`.
    pub fn consumption(&self, p: f64) -> (f64, f64) {
        let (wealth, lot) = self.wealth_and_lot();
        let now = wealth - p * lot;
        let terminal = match *self {
            PriceEquation::Single(s) => s.endowment_terminal + s.payoff_mean * s.holdings,
            PriceEquation::SecondPurchase { scenario, .. } => {
                scenario.first.endowment_terminal
                    + scenario.payoff_mean2 * (scenario.first.holdings + scenario.holdings2)
            }
            PriceEquation::TwoSales { scenario, .. } => {
                scenario.first.endowment_terminal
                    + scenario.payoff_mean12() * scenario.first.holdings
                    + scenario.payoff_mean2 * scenario.holdings2
            }
        };
        (now, terminal)
    }

    /// Initial guess: discounted leading payoff mean.
    pub fn seed(&self) -> f64 {
        let payoff = match self {
            PriceEquation::Single(s) => s.payoff_mean,
            PriceEquation::SecondPurchase { scenario, .. }
            | PriceEquation::TwoSales { scenario, .. } => scenario.payoff_mean2,
        };
        self.beta() * payoff
    }

    /// Right side of the equation at trial price `p`.
    pub fn rhs(&self, p: f64) -> Result<f64> {
        let utility = self.utility();
        let beta = self.beta();
        let (c_now, c_terminal) = self.consumption(p);
        for c in [c_now, c_terminal] {
            if !utility.admits(c) {
                return Err(Error::InadmissibleConsumption {
                    consumption: c,
                    family: utility.family(),
                    trial_price: Some(p),
                });
            }
        }
        let u1_now = utility.eval_unchecked(c_now, Derivative::First);
        let u2_now = utility.eval_unchecked(c_now, Derivative::Second);
        let u1_term = utility.eval_unchecked(c_terminal, Derivative::First);
        let u2_term = utility.eval_unchecked(c_terminal, Derivative::Second);

        let value = match *self {
            PriceEquation::Single(s) => {
                beta * (u1_term / u1_now) * s.payoff_mean
                    + beta * s.holdings * (u2_term / u1_now) * s.payoff_variance
                    + s.holdings * (u2_now / u1_now) * s.price_variance
            }
            PriceEquation::SecondPurchase { scenario: s, .. } => {
                let (xi1, xi2) = (s.first.holdings, s.holdings2);
                beta * (u1_term / u1_now) * s.payoff_mean2
                    + beta * (u2_term / u1_now) * ((xi1 + xi2) * s.payoff_variance2)
                    + (u2_now / u1_now) * (xi1 * s.price_autocorr + xi2 * s.price_variance2)
            }
            PriceEquation::TwoSales { scenario: s, .. } => {
                let (xi1, xi2) = (s.first.holdings, s.holdings2);
                let payoff_autocorr = s.payoff_autocorr.unwrap_or(0.0);
                beta * (u1_term / u1_now) * s.payoff_mean2
                    + beta * (u2_term / u1_now) * (xi1 * payoff_autocorr + xi2 * s.payoff_variance2)
                    + (u2_now / u1_now) * (xi1 * s.price_autocorr + xi2 * s.price_variance2)
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "pricing equation at trial price {p}"
            )));
        }
        Ok(value)
    }

    /// `rhs(p) - p`.
    pub fn residual(&self, p: f64) -> Result<f64> {
        Ok(self.rhs(p)? - p)
    }

    /// Highest admissible trial price: `wealth / lot` when consumption must
    /// stay positive, unbounded otherwise.
    fn ceiling(&self) -> f64 {
        let (wealth, lot) = self.wealth_and_lot();
        if lot > 0.0 && self.utility().requires_positive_consumption() {
            wealth / lot
        } else {
            f64::INFINITY
        }
    }

    /// Damped fixed-point iteration seeded at the discounted payoff mean,
    /// falling back to bisection on `(0, ceiling)` when it stalls or leaves
    /// the utility domain.
    pub fn solve(&self, options: &SolverOptions) -> Result<PriceSolution> {
        options.validate()?;
        let ceiling = self.ceiling();

        let mut p = self.seed();
        let mut accepted: Option<PriceSolution> = None;
        let mut best = f64::INFINITY;
        let mut since_improvement = 0;
        let mut iterations = 0;
        while iterations < options.max_iterations && p > 0.0 && p < ceiling {
            let r = match self.rhs(p) {
                Ok(r) => r,
                Err(_) => break,
            };
            let residual = r - p;
            let candidate = PriceSolution {
                mean_price: p,
                residual,
                iterations,
                converged: true,
                method: SolveMethod::FixedPoint,
            };
            if residual.abs() <= polish_tolerance(options, p) {
                return Ok(candidate);
            }
            if residual.abs() <= options.tolerance * p.abs().max(1.0)
                && accepted.is_none_or(|a| residual.abs() < a.residual.abs())
            {
                accepted = Some(candidate);
            }
            if residual.abs() < 0.9 * best {
                best = residual.abs();
                since_improvement = 0;
            } else {
                since_improvement += 1;
                if since_improvement >= 20 {
                    break;
                }
            }
            p = (1.0 - options.damping) * p + options.damping * r;
            iterations += 1;
        }
        match accepted {
            Some(solution) => Ok(solution),
            None => self.bisect(options, iterations),
        }
    }

    fn bisect(&self, options: &SolverOptions, spent: usize) -> Result<PriceSolution> {
        let mut lo = 0.0;
        let g_lo = self.residual(lo)?;
        if g_lo.abs() <= options.tolerance {
            return Ok(PriceSolution {
                mean_price: lo,
                residual: g_lo,
                iterations: spent,
                converged: true,
                method: SolveMethod::Bisection,
            });
        }
        if g_lo < 0.0 {
            return Err(Error::NonConvergence {
                price: lo,
                residual: g_lo,
                iterations: spent,
            });
        }
        let mut hi = self.ceiling();
        if hi.is_finite() {
            if hi.is_nan() || hi <= lo {
                return Err(Error::InadmissibleConsumption {
                    consumption: self.wealth_and_lot().0,
                    family: self.utility().family(),
                    trial_price: Some(lo),
                });
            }
            // Inadmissible trial prices sit above the root (consumption exhausted).
            if let Ok(g) = self.residual(hi) {
                if g > 0.0 {
                    return Err(Error::NonConvergence {
                        price: hi,
                        residual: g,
                        iterations: spent,
                    });
                }
            }
        } else {
            // Grow the bracket from the seed until the residual changes sign.
            hi = 2.0 * self.seed().abs().max(1.0);
            let mut g_hi = self.residual(hi)?;
            let mut doublings = 0;
            while g_hi > 0.0 {
                if doublings == 64 {
                    return Err(Error::NonConvergence {
                        price: hi,
                        residual: g_hi,
                        iterations: spent,
                    });
                }
                lo = hi;
                hi *= 2.0;
                g_hi = self.residual(hi)?;
                doublings += 1;
            }
        }

        let mut best: Option<PriceSolution> = None;
        let mut last = (lo, g_lo);
        let mut used = 0;
        for i in 0..options.max_iterations {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            used = i + 1;
            match self.residual(mid) {
                Ok(g) => {
                    last = (mid, g);
                    let candidate = PriceSolution {
                        mean_price: mid,
                        residual: g,
                        iterations: spent + used,
                        converged: true,
                        method: SolveMethod::Bisection,
                    };
                    if g.abs() <= polish_tolerance(options, mid) {
                        return Ok(candidate);
                    }
                    if g.abs() <= options.tolerance * mid.abs().max(1.0)
                        && best.is_none_or(|b| g.abs() < b.residual.abs())
                    {
                        best = Some(candidate);
                    }
                    if g > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Err(Error::InadmissibleConsumption { .. }) => hi = mid,
                Err(e) => return Err(e),
            }
        }
        best.ok_or(Error::NonConvergence {
            price: last.0,
            residual: last.1,
            iterations: spent + used,
        })
    }
}

/// Iteration continues past the contract tolerance down to this level, so
/// that returned prices are accurate well beyond the residual bound.
fn polish_tolerance(options: &SolverOptions, p: f64) -> f64 {
    let scale = p.abs().max(1.0);
    (1e-3 * options.tolerance * scale).max(8.0 * f64::EPSILON * scale)
}

/// Mean price for a single purchase and sale.
pub fn solve_price_single(scenario: &PricingScenario) -> Result<PriceSolution> {
    solve_price_single_with(scenario, &SolverOptions::default())
}

pub fn solve_price_single_with(
    scenario: &PricingScenario,
    options: &SolverOptions,
) -> Result<PriceSolution> {
    scenario.validate()?;
    PriceEquation::Single(scenario).solve(options)
}

/// Mean price of the first of two purchases; same equation as the single case.
pub fn solve_price_first_purchase(scenario: &TwoTradeScenario) -> Result<PriceSolution> {
    solve_price_first_purchase_with(scenario, &SolverOptions::default())
}

pub fn solve_price_first_purchase_with(
    scenario: &TwoTradeScenario,
    options: &SolverOptions,
) -> Result<PriceSolution> {
    scenario.validate()?;
    solve_price_single_with(&scenario.first, options)
}

/// Mean price of the second purchase given the solved first price, including
/// the price-autocorrelation term.
pub fn solve_price_second_purchase(
    scenario: &TwoTradeScenario,
    first_price: f64,
) -> Result<PriceSolution> {
    solve_price_second_purchase_with(scenario, first_price, &SolverOptions::default())
}

pub fn solve_price_second_purchase_with(
    scenario: &TwoTradeScenario,
    first_price: f64,
    options: &SolverOptions,
) -> Result<PriceSolution> {
    scenario.validate()?;
    check_first_price(first_price)?;
    PriceEquation::SecondPurchase {
        scenario,
        first_price,
    }
    .solve(options)
}

/// Mean price of the second purchase when the lots are sold at `T1` and `T2`,
/// including both the price- and payoff-autocorrelation terms.
pub fn solve_price_two_sales(
    scenario: &TwoTradeScenario,
    first_price: f64,
) -> Result<PriceSolution> {
    solve_price_two_sales_with(scenario, first_price, &SolverOptions::default())
}

pub fn solve_price_two_sales_with(
    scenario: &TwoTradeScenario,
    first_price: f64,
    options: &SolverOptions,
) -> Result<PriceSolution> {
    scenario.validate()?;
    if !scenario.has_two_sales() {
        return Err(Error::invalid(
            "two-sale solve needs a payoff autocorrelation",
        ));
    }
    check_first_price(first_price)?;
    PriceEquation::TwoSales {
        scenario,
        first_price,
    }
    .solve(options)
}

fn check_first_price(p: f64) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::invalid(format!(
            "first purchase price must be finite, got {p}"
        )));
    }
    Ok(())
}
