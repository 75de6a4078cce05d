//! Frequency-based and market-based price moments over tick windows.
//!
//! The frequency moment of order `n` is the plain average of `p^n` over the
//! window. The market moment is the ratio of the `n`-th moments of trade value
//! and trade volume, `C(t;n) / U(t;n)`, i.e. an average of `p^n` weighted by
//! `U^n`. Both coincide when volumes are constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trade_series::Window;

/// Default threshold on |correlation| between `p^n` and `U^n` above which a
/// window is flagged.
pub const DEFAULT_DECORRELATION_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceMethod {
    Frequency,
    Market,
}

impl std::str::FromStr for PriceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frequency" => Ok(PriceMethod::Frequency),
            "market" => Ok(PriceMethod::Market),
            other => Err(Error::invalid(format!("unknown moment method `{other}`"))),
        }
    }
}

impl std::fmt::Display for PriceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PriceMethod::Frequency => "frequency",
            PriceMethod::Market => "market",
        })
    }
}

/// Sample correlation between `p^n` and `U^n` within one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDiagnostic {
    pub order: u32,
    /// Pearson coefficient; 0 when `undefined`.
    pub coefficient: f64,
    /// One of the two series is constant.
    pub undefined: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentFlags {
    pub negative_variance: bool,
    /// Order-2 price/volume correlation, market method only.
    pub decorrelation: Option<CorrelationDiagnostic>,
}

impl MomentFlags {
    pub fn any(&self) -> bool {
        self.negative_variance || self.decorrelation.is_some_and(|d| d.flagged)
    }
}

/// Raw price moments `p(t;1)..p(t;k)` of one window plus derived mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub method: PriceMethod,
    pub order: u32,
    pub center_time: f64,
    pub raw_moments: Vec<f64>,
    pub value_moments: Option<Vec<f64>>,
    pub volume_moments: Option<Vec<f64>>,
    pub mean: f64,
    pub variance: f64,
    pub flags: MomentFlags,
}

impl MomentSet {
    /// A moment set from raw moments alone (no trade data behind it).
    /// Variance is `raw[2] - raw[1]^2`; a single moment gives zero variance.
    pub fn from_raw(method: PriceMethod, raw_moments: Vec<f64>) -> Result<Self> {
        if raw_moments.is_empty() {
            return Err(Error::invalid("moment set needs at least one moment"));
        }
        if raw_moments.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("raw moment".into()));
        }
        let mean = raw_moments[0];
        let variance = raw_moments.get(1).map_or(0.0, |m2| m2 - mean * mean);
        Ok(Self {
            method,
            order: raw_moments.len() as u32,
            center_time: 0.0,
            raw_moments,
            value_moments: None,
            volume_moments: None,
            mean,
            variance,
            flags: MomentFlags {
                negative_variance: variance < 0.0,
                decorrelation: None,
            },
        })
    }

    /// Raw moment of order `n` (1-based).
    pub fn raw(&self, n: u32) -> Option<f64> {
        (n >= 1)
            .then(|| self.raw_moments.get(n as usize - 1).copied())
            .flatten()
    }

    pub fn std_dev(&self) -> Option<f64> {
        (self.variance >= 0.0).then(|| self.variance.sqrt())
    }
}

fn check_order(n: u32) -> Result<()> {
    if n < 1 {
        return Err(Error::invalid("moment order must be at least 1"));
    }
    Ok(())
}

#[inline]
fn pow_n(x: f64, n: u32) -> f64 {
    x.powi(n as i32)
}

/// Frequency moment `(1/N) Σ p_i^n`.
pub fn freq_moment(window: &Window<'_>, n: u32) -> Result<f64> {
    check_order(n)?;
    let sum: f64 = window.ticks().iter().map(|t| pow_n(t.price, n)).sum();
    Ok(sum / window.count() as f64)
}

/// Trade value and volume moments `(C(t;n), U(t;n))`.
pub fn trade_moments(window: &Window<'_>, n: u32) -> Result<(f64, f64)> {
    check_order(n)?;
    let (c, u) = window.ticks().iter().fold((0.0, 0.0), |(c, u), t| {
        (c + pow_n(t.value, n), u + pow_n(t.volume, n))
    });
    let count = window.count() as f64;
    Ok((c / count, u / count))
}

/// Market-based price moment `C(t;n) / U(t;n)`.
pub fn market_price_moment(window: &Window<'_>, n: u32) -> Result<f64> {
    let (c, u) = trade_moments(window, n)?;
    Ok(c / u)
}

/// Volume-weighted average price; the market moment of order one.
pub fn vwap(window: &Window<'_>) -> f64 {
    market_price_moment(window, 1).expect("order 1 is valid")
}

/// Raw moments `1..=k` with mean and variance under the given method.
///
/// Market variance may come out negative when prices and volumes are
/// correlated inside the window; it is reported and flagged, never clamped.
pub fn compute_moment_set(window: &Window<'_>, k: u32, method: PriceMethod) -> Result<MomentSet> {
    compute_moment_set_with(window, k, method, DEFAULT_DECORRELATION_THRESHOLD)
}

pub fn compute_moment_set_with(
    window: &Window<'_>,
    k: u32,
    method: PriceMethod,
    threshold: f64,
) -> Result<MomentSet> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "moment order k must be at least 2, got {k}"
        )));
    }
    match method {
        PriceMethod::Frequency => {
            let raw_moments = (1..=k)
                .map(|n| freq_moment(window, n))
                .collect::<Result<Vec<_>>>()?;
            let mean = raw_moments[0];
            let variance = frequency_covariance(window, window, mean, mean);
            Ok(MomentSet {
                method,
                order: k,
                center_time: window.center_time(),
                raw_moments,
                value_moments: None,
                volume_moments: None,
                mean,
                variance,
                flags: MomentFlags {
                    negative_variance: variance < 0.0,
                    decorrelation: None,
                },
            })
        }
        PriceMethod::Market => {
            let mut raw_moments = Vec::with_capacity(k as usize);
            let mut value_moments = Vec::with_capacity(k as usize);
            let mut volume_moments = Vec::with_capacity(k as usize);
            for n in 1..=k {
                let (c, u) = trade_moments(window, n)?;
                value_moments.push(c);
                volume_moments.push(u);
                raw_moments.push(c / u);
            }
            let mean = raw_moments[0];
            let variance = raw_moments[1] - mean * mean;
            let decorrelation = if window.count() >= 2 {
                Some(decorrelation_diagnostic_with(window, 2, threshold)?)
            } else {
                None
            };
            Ok(MomentSet {
                method,
                order: k,
                center_time: window.center_time(),
                raw_moments,
                value_moments: Some(value_moments),
                volume_moments: Some(volume_moments),
                mean,
                variance,
                flags: MomentFlags {
                    negative_variance: variance < 0.0,
                    decorrelation,
                },
            })
        }
    }
}

pub fn decorrelation_diagnostic(window: &Window<'_>, n: u32) -> Result<CorrelationDiagnostic> {
    decorrelation_diagnostic_with(window, n, DEFAULT_DECORRELATION_THRESHOLD)
}

/// Pearson correlation between `{p_i^n}` and `{U_i^n}` over the window.
pub fn decorrelation_diagnostic_with(
    window: &Window<'_>,
    n: u32,
    threshold: f64,
) -> Result<CorrelationDiagnostic> {
    check_order(n)?;
    if window.count() < 2 {
        return Err(Error::invalid(
            "decorrelation diagnostic needs at least 2 ticks",
        ));
    }
    let xs: Vec<f64> = window.ticks().iter().map(|t| pow_n(t.price, n)).collect();
    let ys: Vec<f64> = window.ticks().iter().map(|t| pow_n(t.volume, n)).collect();
    let coefficient = pearson(&xs, &ys);
    Ok(match coefficient {
        Some(r) => CorrelationDiagnostic {
            order: n,
            coefficient: r,
            undefined: false,
            flagged: r.abs() > threshold,
        },
        None => CorrelationDiagnostic {
            order: n,
            coefficient: 0.0,
            undefined: true,
            flagged: false,
        },
    })
}

/// `None` when either series is (numerically) constant.
fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if is_constant(xs) || is_constant(ys) {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn is_constant(xs: &[f64]) -> bool {
    let first = xs[0];
    let scale = xs.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    xs.iter().all(|x| (x - first).abs() <= 1e-14 * scale)
}

fn frequency_covariance(w1: &Window<'_>, w2: &Window<'_>, mean1: f64, mean2: f64) -> f64 {
    let sum: f64 = w1
        .ticks()
        .iter()
        .zip(w2.ticks())
        .map(|(a, b)| (a.price - mean1) * (b.price - mean2))
        .sum();
    sum / w1.count() as f64
}

/// Price autocorrelation `B_p(t1, t2) = E[δp1 δp2]` between two equally sized
/// windows, ticks paired by position.
///
/// The market method uses `E[C1 C2] / E[U1 U2] - vwap1 * vwap2`; for identical
/// windows this is exactly the market variance.
pub fn price_autocorrelation(
    window1: &Window<'_>,
    window2: &Window<'_>,
    method: PriceMethod,
) -> Result<f64> {
    if window1.count() != window2.count() {
        return Err(Error::invalid(format!(
            "windows differ in length ({} vs {})",
            window1.count(),
            window2.count()
        )));
    }
    if window1.count() < 2 {
        return Err(Error::invalid(
            "autocorrelation needs windows of at least 2 ticks",
        ));
    }
    match method {
        PriceMethod::Frequency => {
            let m1 = freq_moment(window1, 1)?;
            let m2 = freq_moment(window2, 1)?;
            Ok(frequency_covariance(window1, window2, m1, m2))
        }
        PriceMethod::Market => {
            let count = window1.count() as f64;
            let (c, u) = window1
                .ticks()
                .iter()
                .zip(window2.ticks())
                .fold((0.0, 0.0), |(c, u), (a, b)| {
                    (c + a.value * b.value, u + a.volume * b.volume)
                });
            let joint = (c / count) / (u / count);
            Ok(joint - vwap(window1) * vwap(window2))
        }
    }
}

/// Payoff autocorrelation `B_x = (1/N) Σ δx12_i δx2_i` over centered pairs.
pub fn payoff_autocorrelation(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::invalid(
            "payoff autocorrelation needs at least 2 pairs",
        ));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::NonFinite("payoff deviation".into()));
    }
    let n = pairs.len() as f64;
    let rms =
        |f: fn(&(f64, f64)) -> f64| (pairs.iter().map(|p| f(p).powi(2)).sum::<f64>() / n).sqrt();
    let scale = rms(|p| p.0).max(rms(|p| p.1));
    let mean1 = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean2 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    if mean1.abs() > 1e-9 * scale || mean2.abs() > 1e-9 * scale {
        return Err(Error::invalid(format!(
            "payoff deviations are not centered (means {mean1}, {mean2})"
        )));
    }
    Ok(pairs.iter().map(|(a, b)| a * b).sum::<f64>() / n)
}
