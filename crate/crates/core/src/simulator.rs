//! Deterministic synthetic trades and payoff-deviation samples.
//!
//! Random numbers come from xoshiro256** seeded through SplitMix64
//! (`seed_from_u64`). The price stream uses the seeded generator; the volume
//! stream is a copy advanced by one `jump()` (2^128 steps). Standard normals
//! are drawn by Box–Muller, one variate per pair of uniforms:
//!
//! ```text
//! u1 = ((next >> 11) + 1) * 2^-53      in (0, 1]
//! u2 =  (next >> 11)      * 2^-53      in [0, 1)
//! z  = sqrt(-2 ln u1) * cos(2π u2)
//! ```
//!
//! Transcendental functions go through `libm` so output is identical across
//! platforms.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trade_series::{TickSeries, TradeTick};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum PriceModel {
    Constant {
        base: f64,
    },
    /// Log-price AR(1) about `ln base`.
    Ar1 {
        base: f64,
        persistence: f64,
        sigma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum VolumeModel {
    Constant { median: f64 },
    LogNormal { median: f64, log_sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub length: usize,
    pub seed: u64,
    pub price_model: PriceModel,
    pub volume_model: VolumeModel,
    /// Correlation between log-price and log-volume innovations.
    pub pv_correlation: f64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 1 {
            return Err(Error::invalid("simulation length must be at least 1"));
        }
        if !(self.pv_correlation.is_finite() && self.pv_correlation.abs() <= 1.0) {
            return Err(Error::invalid(format!(
                "price-volume correlation must lie in [-1, 1], got {}",
                self.pv_correlation
            )));
        }
        match self.price_model {
            PriceModel::Constant { base } => check_positive("base price", base)?,
            PriceModel::Ar1 {
                base,
                persistence,
                sigma,
            } => {
                check_positive("base price", base)?;
                if !(0.0..1.0).contains(&persistence) {
                    return Err(Error::invalid(format!(
                        "persistence must lie in [0, 1), got {persistence}"
                    )));
                }
                check_non_negative("price sigma", sigma)?;
            }
        }
        match self.volume_model {
            VolumeModel::Constant { median } => check_positive("median volume", median)?,
            VolumeModel::LogNormal { median, log_sigma } => {
                check_positive("median volume", median)?;
                check_non_negative("volume log-sigma", log_sigma)?;
            }
        }
        Ok(())
    }
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be positive, got {v}")))
    }
}

fn check_non_negative(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what} must be non-negative, got {v}"
        )))
    }
}

/// A pair of independent standard-normal streams.
struct NormalStreams {
    first: Xoshiro256StarStar,
    second: Xoshiro256StarStar,
}

impl NormalStreams {
    fn new(seed: u64) -> Self {
        let first = Xoshiro256StarStar::seed_from_u64(seed);
        let mut second = first.clone();
        second.jump();
        Self { first, second }
    }

    fn next_pair(&mut self) -> (f64, f64) {
        (
            standard_normal(&mut self.first),
            standard_normal(&mut self.second),
        )
    }
}

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

fn standard_normal(rng: &mut Xoshiro256StarStar) -> f64 {
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG_53;
    let u2 = (rng.next_u64() >> 11) as f64 * TWO_POW_NEG_53;
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
}

/// Generates `spec.length` ticks at integer times `0, 1, 2, ...`.
pub fn gen_trades(spec: &SimSpec) -> Result<TickSeries> {
    spec.validate()?;
    let mut streams = NormalStreams::new(spec.seed);
    let rho = spec.pv_correlation;
    let rho_perp = libm::sqrt(1.0 - rho * rho);
    let mut log_deviation = 0.0;
    let mut ticks = Vec::with_capacity(spec.length);
    for i in 0..spec.length {
        let (z_price, z_volume) = streams.next_pair();
        let volume_innovation = rho * z_price + rho_perp * z_volume;
        let price = match spec.price_model {
            PriceModel::Constant { base } => base,
            PriceModel::Ar1 {
                base,
                persistence,
                sigma,
            } => {
                log_deviation = persistence * log_deviation + sigma * z_price;
                base * libm::exp(log_deviation)
            }
        };
        let volume = match spec.volume_model {
            VolumeModel::Constant { median } => median,
            VolumeModel::LogNormal { median, log_sigma } => {
                median * libm::exp(log_sigma * volume_innovation)
            }
        };
        if !(price > 0.0 && price.is_finite() && volume > 0.0 && volume.is_finite()) {
            return Err(Error::NonFinite(format!(
                "simulated tick {i}: price {price}, volume {volume}"
            )));
        }
        ticks.push(TradeTick::new(i as f64, price, volume)?);
    }
    TickSeries::new(ticks)
}

/// Centered payoff deviations `(δx12, δx2)` with common variance and the
/// requested covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffSamples {
    pub mean: f64,
    pub pairs: Vec<(f64, f64)>,
}

impl PayoffSamples {
    /// Payoff levels `(mean + δx12, mean + δx2)`.
    pub fn levels(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pairs
            .iter()
            .map(move |(a, b)| (self.mean + a, self.mean + b))
    }
}

/// Jointly Gaussian pairs with `Var = variance` and `Cov = autocorr`, each
/// component re-centered on its sample mean.
pub fn gen_payoff_samples(
    mean: f64,
    variance: f64,
    autocorr: f64,
    count: usize,
    seed: u64,
) -> Result<PayoffSamples> {
    if !(mean.is_finite() && variance.is_finite() && autocorr.is_finite()) {
        return Err(Error::invalid("payoff parameters must be finite"));
    }
    if variance < 0.0 {
        return Err(Error::invalid(format!(
            "variance must be non-negative, got {variance}"
        )));
    }
    if autocorr.abs() > variance {
        return Err(Error::invalid(format!(
            "autocorrelation {autocorr} exceeds the Cauchy-Schwarz bound {variance}"
        )));
    }
    if count < 2 {
        return Err(Error::invalid("need at least 2 payoff samples"));
    }
    if variance == 0.0 {
        return Ok(PayoffSamples {
            mean,
            pairs: vec![(0.0, 0.0); count],
        });
    }
    let sd = libm::sqrt(variance);
    let rho = autocorr / variance;
    let rho_perp = libm::sqrt(1.0 - rho * rho);
    let mut streams = NormalStreams::new(seed);
    let mut pairs: Vec<(f64, f64)> = (0..count)
        .map(|_| {
            let (z1, z2) = streams.next_pair();
            let later = sd * z1;
            let earlier = rho * later + sd * rho_perp * z2;
            (earlier, later)
        })
        .collect();
    let n = count as f64;
    let m1 = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let m2 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    for p in &mut pairs {
        p.0 -= m1;
        p.1 -= m2;
    }
    Ok(PayoffSamples { mean, pairs })
}
