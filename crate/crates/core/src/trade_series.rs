//! Trade tick ingestion and count-based windowing.
//!
//! A tick carries time, price, volume and trade value, with the identity
//! `value = price * volume` enforced on construction. Windows are built from a
//! fixed number of consecutive ticks and borrow from the owning series.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the trade identity `value = price * volume`.
pub const VALUE_IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeTick {
    pub time: f64,
    pub price: f64,
    pub volume: f64,
    pub value: f64,
}

impl TradeTick {
    /// Builds a tick with `value = price * volume`.
    pub fn new(time: f64, price: f64, volume: f64) -> Result<Self> {
        check_fields(time, price, volume)?;
        Ok(Self {
            time,
            price,
            volume,
            value: price * volume,
        })
    }

    /// Builds a tick with an explicit trade value, checked against `price * volume`.
    pub fn with_value(time: f64, price: f64, volume: f64, value: f64) -> Result<Self> {
        check_fields(time, price, volume)?;
        let expected = price * volume;
        if !value.is_finite() || !identity_holds(value, expected) {
            return Err(Error::ValueMismatch {
                row: 0,
                value,
                expected,
            });
        }
        Ok(Self {
            time,
            price,
            volume,
            value,
        })
    }
}

fn identity_holds(value: f64, expected: f64) -> bool {
    (value - expected).abs() <= VALUE_IDENTITY_TOLERANCE * expected.abs()
}

fn check_fields(time: f64, price: f64, volume: f64) -> Result<()> {
    if !time.is_finite() || time < 0.0 {
        return Err(Error::invalid(format!(
            "time must be finite and non-negative, got {time}"
        )));
    }
    if !price.is_finite() || price <= 0.0 {
        return Err(Error::invalid(format!(
            "price must be positive, got {price}"
        )));
    }
    if !volume.is_finite() || volume <= 0.0 {
        return Err(Error::invalid(format!(
            "volume must be positive, got {volume}"
        )));
    }
    Ok(())
}

/// An ordered sequence of ticks with non-decreasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    ticks: Vec<TradeTick>,
    tick_spacing: Option<f64>,
}

impl TickSeries {
    /// Wraps ticks, checking time order. The tick spacing is inferred as the
    /// smallest positive gap between consecutive times.
    pub fn new(ticks: Vec<TradeTick>) -> Result<Self> {
        for (i, pair) in ticks.windows(2).enumerate() {
            if pair[1].time < pair[0].time {
                return Err(Error::DecreasingTime {
                    row: i + 2,
                    time: pair[1].time,
                    previous: pair[0].time,
                });
            }
        }
        let tick_spacing = infer_spacing(&ticks);
        Ok(Self {
            ticks,
            tick_spacing,
        })
    }

    /// Overrides the inferred spacing with a declared one.
    pub fn with_tick_spacing(mut self, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(format!(
                "tick spacing must be positive, got {spacing}"
            )));
        }
        self.tick_spacing = Some(spacing);
        Ok(self)
    }

    pub fn ticks(&self) -> &[TradeTick] {
        &self.ticks
    }

    pub fn tick_spacing(&self) -> Option<f64> {
        self.tick_spacing
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Window over `ticks[start..start + len]`.
    pub fn window(&self, start: usize, len: usize) -> Result<Window<'_>> {
        let end = start
            .checked_add(len)
            .filter(|&end| end <= self.ticks.len())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "window [{start}, {start}+{len}) exceeds series length {}",
                    self.ticks.len()
                ))
            })?;
        Window::new(&self.ticks[start..end])
    }
}

fn infer_spacing(ticks: &[TradeTick]) -> Option<f64> {
    ticks
        .windows(2)
        .map(|p| p[1].time - p[0].time)
        .filter(|d| *d > 0.0)
        .min_by(f64::total_cmp)
}

/// A contiguous run of ticks forming one averaging interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<'a> {
    center_time: f64,
    ticks: &'a [TradeTick],
}

impl<'a> Window<'a> {
    /// Non-empty, time-ordered slice; the center is the median tick time.
    pub fn new(ticks: &'a [TradeTick]) -> Result<Self> {
        if ticks.is_empty() {
            return Err(Error::invalid("window must contain at least one tick"));
        }
        let n = ticks.len();
        let center_time = if n % 2 == 1 {
            ticks[n / 2].time
        } else {
            0.5 * (ticks[n / 2 - 1].time + ticks[n / 2].time)
        };
        Ok(Self { center_time, ticks })
    }

    pub fn center_time(&self) -> f64 {
        self.center_time
    }

    pub fn ticks(&self) -> &'a [TradeTick] {
        self.ticks
    }

    pub fn count(&self) -> usize {
        self.ticks.len()
    }

    /// Smallest symmetric interval length about the center that holds every tick.
    pub fn span(&self) -> f64 {
        let first = self.ticks[0].time;
        let last = self.ticks[self.ticks.len() - 1].time;
        2.0 * (self.center_time - first).max(last - self.center_time)
    }

    pub fn prices(&self) -> impl Iterator<Item = f64> + 'a {
        self.ticks.iter().map(|t| t.price)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Disjoint,
    Sliding,
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "disjoint" => Ok(WindowMode::Disjoint),
            "sliding" => Ok(WindowMode::Sliding),
            other => Err(Error::invalid(format!("unknown window mode `{other}`"))),
        }
    }
}

/// Splits the series into windows of `window_len` ticks.
///
/// Disjoint mode gives `len / window_len` consecutive windows (a trailing
/// remainder is dropped); sliding mode gives `len - window_len + 1` windows
/// stepping by one tick.
pub fn partition_windows(
    series: &TickSeries,
    window_len: usize,
    mode: WindowMode,
) -> Result<Vec<Window<'_>>> {
    if window_len == 0 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    if series.is_empty() {
        return Err(Error::invalid("cannot window an empty series"));
    }
    if window_len > series.len() {
        return Err(Error::invalid(format!(
            "window length {window_len} exceeds series length {}",
            series.len()
        )));
    }
    let ticks = series.ticks();
    match mode {
        WindowMode::Disjoint => ticks.chunks_exact(window_len).map(Window::new).collect(),
        WindowMode::Sliding => ticks.windows(window_len).map(Window::new).collect(),
    }
}

/// Parses tick-CSV: header `time,price,volume` or `time,price,volume,value`.
///
/// Row numbers in errors are 1-based file lines (the header is line 1).
pub fn parse_ticks(text: &str) -> Result<TickSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_value = match names.as_slice() {
        ["time", "price", "volume"] => false,
        ["time", "price", "volume", "value"] => true,
        _ => {
            return Err(Error::MalformedRow {
                row: 1,
                message: format!(
                    "expected header `time,price,volume[,value]`, found `{}`",
                    names.join(",")
                ),
            })
        }
    };

    let mut ticks = Vec::new();
    let mut previous: Option<f64> = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedRow {
            row: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = record.get(i).ok_or_else(|| Error::MalformedRow {
                row,
                message: format!("missing `{name}` field"),
            })?;
            raw.parse::<f64>().map_err(|_| Error::MalformedRow {
                row,
                message: format!("`{name}` is not a number: `{raw}`"),
            })
        };
        let time = field(0, "time")?;
        let price = field(1, "price")?;
        let volume = field(2, "volume")?;
        let tick = if has_value {
            let value = field(3, "value")?;
            TradeTick::with_value(time, price, volume, value)
        } else {
            TradeTick::new(time, price, volume)
        }
        .map_err(|e| match e {
            Error::ValueMismatch {
                value, expected, ..
            } => Error::ValueMismatch {
                row,
                value,
                expected,
            },
            Error::InvalidInput(message) => Error::MalformedRow { row, message },
            other => other,
        })?;
        if let Some(prev) = previous {
            if tick.time < prev {
                return Err(Error::DecreasingTime {
                    row,
                    time: tick.time,
                    previous: prev,
                });
            }
        }
        previous = Some(tick.time);
        ticks.push(tick);
    }
    TickSeries::new(ticks)
}

/// Renders a series as tick-CSV with a `value` column, 15 significant digits.
pub fn render_ticks(series: &TickSeries) -> String {
    let mut out = String::with_capacity(32 * (series.len() + 1));
    out.push_str("time,price,volume,value\n");
    for t in series.ticks() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_sig15(t.time),
            format_sig15(t.price),
            format_sig15(t.volume),
            format_sig15(t.value)
        );
    }
    out
}

/// Formats a finite number with 15 significant digits, trailing zeros removed.
pub fn format_sig15(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.14e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-6..15).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut body = if exp >= 0 {
        let int_len = exp as usize + 1;
        format!("{}.{}", &digits[..int_len], &digits[int_len..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    body = trim_fraction(&body).to_string();
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
