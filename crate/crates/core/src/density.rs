//! Truncated characteristic functions built from price moments and the
//! approximate price densities recovered from them.
//!
//! The truncated series `F_k(x) = 1 + Σ (ix)^n p(t;n) / n!` is a polynomial,
//! so its plain Fourier inverse is not a function. Two well-posed
//! realizations are offered:
//!
//! * a Gram–Charlier A-series about the Gaussian with the same mean and
//!   variance, carrying skewness and excess kurtosis when available;
//! * a Gaussian-damped numerical inversion of the truncated series, expanded
//!   about the mean so that the damping kernel sits where the mass is.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentSet;
use crate::trade_series::format_sig15;

/// Truncated characteristic function of order `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharFnApprox {
    moments: Vec<f64>,
}

impl CharFnApprox {
    pub fn new(moments: Vec<f64>) -> Result<Self> {
        if moments.is_empty() {
            return Err(Error::invalid(
                "characteristic function needs at least one moment",
            ));
        }
        if moments.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("moment".into()));
        }
        Ok(Self { moments })
    }

    pub fn from_moment_set(set: &MomentSet) -> Result<Self> {
        Self::new(set.raw_moments.clone())
    }

    pub fn order(&self) -> u32 {
        self.moments.len() as u32
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// `F_k(x)`.
    pub fn eval(&self, x: f64) -> Complex64 {
        Complex64::new(1.0, 0.0) + self.eval_deviation(x)
    }

    /// `F_k(x) - 1`, summed without the leading constant so that small
    /// arguments keep full relative precision.
    pub fn eval_deviation(&self, x: f64) -> Complex64 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for (idx, m) in self.moments.iter().enumerate() {
            let n = (idx + 1) as f64;
            term *= Complex64::new(0.0, x / n);
            sum += term * *m;
        }
        sum
    }
}

/// Evaluates the truncated characteristic function of a moment set.
pub fn charfn_eval(moments: &MomentSet, x: f64) -> Result<Complex64> {
    Ok(CharFnApprox::from_moment_set(moments)?.eval(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveredMoment {
    pub value: f64,
    /// `n` exceeds the truncation order; the value is an exact zero.
    pub truncated: bool,
}

/// `n`-th derivative of `F_k` at zero divided by `i^n`, by central finite
/// differences with one Richardson extrapolation step.
///
/// The step is `h = 1e-3 / max(1, |p(t;1)|)`.
pub fn recover_moment(charfn: &CharFnApprox, n: u32) -> Result<RecoveredMoment> {
    if n == 0 {
        return Err(Error::invalid("moment order must be at least 1"));
    }
    if n > charfn.order() {
        return Ok(RecoveredMoment {
            value: 0.0,
            truncated: true,
        });
    }
    let scale = charfn.moments[0].abs().max(1.0);
    let h = 1e-3 / scale;
    let coarse = central_difference(charfn, n, h);
    let fine = central_difference(charfn, n, 0.5 * h);
    let derivative = (4.0 * fine - coarse) / 3.0;
    let value = (derivative / i_pow(n)).re;
    Ok(RecoveredMoment {
        value,
        truncated: false,
    })
}

fn i_pow(n: u32) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `δ_h^n f(0) / h^n` with samples at `(n/2 - j) h`, `j = 0..=n`.
fn central_difference(charfn: &CharFnApprox, n: u32, h: f64) -> Complex64 {
    let mut binom = 1.0;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..=n {
        let offset = (0.5 * n as f64 - j as f64) * h;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += charfn.eval_deviation(offset) * (sign * binom);
        binom = binom * (n - j) as f64 / (j + 1) as f64;
    }
    acc / h.powi(n as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        let g = Self { lo, hi, points };
        g.validate()?;
        Ok(g)
    }

    /// Symmetric grid of half-width `half_width` about `center`.
    pub fn centered(center: f64, half_width: f64, points: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, points)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::invalid(format!(
                "invalid grid [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.points < 3 {
            return Err(Error::invalid("grid needs at least 3 points"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    GramCharlier,
    DampedInversion,
}

impl std::str::FromStr for DensityMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gram_charlier" => Ok(DensityMethod::GramCharlier),
            "damped_inversion" | "damped" => Ok(DensityMethod::DampedInversion),
            other => Err(Error::invalid(format!("unknown density method `{other}`"))),
        }
    }
}

/// Tabulated approximate price density with quadrature diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityApprox {
    pub method: DensityMethod,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Trapezoid mass of `values` (after normalization).
    pub total_mass: f64,
    /// Trapezoid mass before normalization.
    pub raw_mass: f64,
    pub recovered_mean: f64,
    pub recovered_variance: f64,
    /// Share of absolute mass carried by negative density values.
    pub negative_mass_fraction: f64,
}

impl DensityApprox {
    fn from_values(method: DensityMethod, grid: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density value".into()));
        }
        let raw_mass = trapezoid(&grid, &values);
        if raw_mass.is_nan() || raw_mass <= 0.0 {
            return Err(Error::NonFinite(format!(
                "density normalization mass is {raw_mass}"
            )));
        }
        values.iter_mut().for_each(|v| *v /= raw_mass);
        let total_mass = trapezoid(&grid, &values);
        let weighted: Vec<f64> = grid.iter().zip(&values).map(|(p, f)| p * f).collect();
        let recovered_mean = trapezoid(&grid, &weighted) / total_mass;
        let centered: Vec<f64> = grid
            .iter()
            .zip(&values)
            .map(|(p, f)| (p - recovered_mean).powi(2) * f)
            .collect();
        let recovered_variance = trapezoid(&grid, &centered) / total_mass;
        let negative: Vec<f64> = values.iter().map(|v| (-v).max(0.0)).collect();
        let absolute: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        let negative_mass_fraction = trapezoid(&grid, &negative) / trapezoid(&grid, &absolute);
        Ok(Self {
            method,
            grid,
            values,
            total_mass,
            raw_mass,
            recovered_mean,
            recovered_variance,
            negative_mass_fraction,
        })
    }

    /// `price,density` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("price,density\n");
        for (p, f) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{}", format_sig15(*p), format_sig15(*f));
        }
        out
    }
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Central moments `μ_2..μ_k` from raw moments (`μ_1 = 0` omitted).
pub(crate) fn central_moments(raw: &[f64]) -> Vec<f64> {
    let mean = raw[0];
    let moment = |j: usize| if j == 0 { 1.0 } else { raw[j - 1] };
    (2..=raw.len())
        .map(|n| {
            let mut binom = 1.0;
            let mut acc = 0.0;
            for j in 0..=n {
                acc += binom * moment(j) * (-mean).powi((n - j) as i32);
                binom = binom * (n - j) as f64 / (j + 1) as f64;
            }
            acc
        })
        .collect()
}

fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Gram–Charlier A-series density matching the set's moments up to order
/// `min(k, 4)`.
///
/// The grid must cover `mean ± 6σ` with spacing no coarser than `σ / 2`.
pub fn density_gram_charlier(moments: &MomentSet, grid: &GridSpec) -> Result<DensityApprox> {
    grid.validate()?;
    if moments.order < 2 || moments.raw_moments.len() < 2 {
        return Err(Error::invalid(
            "Gram-Charlier density needs moments up to order 2",
        ));
    }
    if moments.flags.negative_variance || moments.variance.is_nan() || moments.variance <= 0.0 {
        return Err(Error::invalid(format!(
            "Gram-Charlier density needs a positive variance, got {}",
            moments.variance
        )));
    }
    let mean = moments.mean;
    let sigma = moments.variance.sqrt();
    if grid.lo > mean - 6.0 * sigma || grid.hi < mean + 6.0 * sigma {
        return Err(Error::invalid(format!(
            "grid [{}, {}] does not cover mean ± 6σ = [{}, {}]",
            grid.lo,
            grid.hi,
            mean - 6.0 * sigma,
            mean + 6.0 * sigma
        )));
    }
    if grid.step() > 0.5 * sigma {
        return Err(Error::invalid(format!(
            "grid spacing {} is coarser than σ/2 = {}",
            grid.step(),
            0.5 * sigma
        )));
    }

    let order = moments.raw_moments.len().min(4);
    let central = central_moments(&moments.raw_moments[..order]);
    let skew = central.get(1).map_or(0.0, |m3| m3 / sigma.powi(3));
    let excess = central.get(2).map_or(0.0, |m4| m4 / sigma.powi(4) - 3.0);

    let nodes = grid.nodes();
    let values = nodes
        .iter()
        .map(|&p| {
            let z = (p - mean) / sigma;
            let he3 = z * z * z - 3.0 * z;
            let he4 = z * z * z * z - 6.0 * z * z + 3.0;
            standard_normal_pdf(z) / sigma * (1.0 + skew / 6.0 * he3 + excess / 24.0 * he4)
        })
        .collect();
    DensityApprox::from_values(DensityMethod::GramCharlier, nodes, values)
}

const DAMPED_CUTOFF: f64 = 8.0;

/// Numerical inversion of the truncated characteristic function under a
/// Gaussian damping factor `exp(-x² / (2 s²))`, integrated over `|x| <= 8 s`.
///
/// The series is expanded about the mean, `F_k(x) = e^{ixμ} G_k(x)` with
/// `G_k` built from central moments; both share the same first `k`
/// derivatives at zero. In price space the damping acts as convolution with a
/// Gaussian of standard deviation `1 / s`.
pub fn density_damped_inversion(
    moments: &MomentSet,
    damping_sigma: f64,
    grid: &GridSpec,
) -> Result<DensityApprox> {
    grid.validate()?;
    if !(damping_sigma.is_finite() && damping_sigma > 0.0) {
        return Err(Error::invalid(format!(
            "damping sigma must be positive, got {damping_sigma}"
        )));
    }
    if moments.raw_moments.len() < 2 {
        return Err(Error::invalid(
            "damped inversion needs moments up to order 2",
        ));
    }
    if moments.raw_moments.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("moment".into()));
    }
    let mean = moments.mean;
    let central = central_moments(&moments.raw_moments);
    // Coefficients of (ix)^n for n = 2..=k.
    let mut factorial = 1.0;
    let coefficients: Vec<(i32, f64)> = central
        .iter()
        .enumerate()
        .map(|(idx, mu)| {
            let n = idx + 2;
            factorial *= n as f64;
            (n as i32, mu / factorial)
        })
        .collect();

    let nodes = grid.nodes();
    let reach = nodes
        .iter()
        .fold(0.0_f64, |m, p| m.max((p - mean).abs()))
        .max(1.0 / damping_sigma);
    let cutoff = DAMPED_CUTOFF * damping_sigma;
    let intervals = {
        let by_oscillation = (cutoff * reach / 0.2).ceil() as usize;
        let n = by_oscillation.clamp(2000, 400_000);
        n + n % 2
    };
    let dx = cutoff / intervals as f64;

    // Tabulate G_k(x) * damping on the Simpson nodes once.
    let weights: Vec<Complex64> = (0..=intervals)
        .map(|j| {
            let x = dx * j as f64;
            let mut g = Complex64::new(1.0, 0.0);
            for &(n, c) in &coefficients {
                g += i_pow(n as u32) * (c * x.powi(n));
            }
            let simpson = if j == 0 || j == intervals {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            g * ((-0.5 * (x / damping_sigma).powi(2)).exp() * simpson)
        })
        .collect();
    if weights
        .iter()
        .any(|w| !w.re.is_finite() || !w.im.is_finite())
    {
        return Err(Error::NonFinite("damped inversion integrand".into()));
    }

    let values: Vec<f64> = nodes
        .iter()
        .map(|&p| {
            let y = p - mean;
            let (s, c) = (y * dx).sin_cos();
            let step = Complex64::new(c, -s);
            let mut phase = Complex64::new(1.0, 0.0);
            let mut acc = 0.0;
            for (j, w) in weights.iter().enumerate() {
                // Re-anchor the rotation periodically to bound drift.
                if j % 256 == 0 {
                    let (s, c) = (y * dx * j as f64).sin_cos();
                    phase = Complex64::new(c, -s);
                }
                acc += (w * phase).re;
                phase *= step;
            }
            acc * dx / 3.0 / PI
        })
        .collect();
    DensityApprox::from_values(DensityMethod::DampedInversion, nodes, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::PriceMethod;

    fn set(raw: &[f64]) -> MomentSet {
        MomentSet::from_raw(PriceMethod::Market, raw.to_vec()).unwrap()
    }

    #[test]
    fn charfn_basic_values() {
        let f = CharFnApprox::new(vec![17.5]).unwrap();
        assert_eq!(f.eval(0.0), Complex64::new(1.0, 0.0));
        let v = f.eval(0.01);
        assert!((v.re - 1.0).abs() < 1e-15 && (v.im - 0.175).abs() < 1e-15);
        let zero = CharFnApprox::new(vec![0.0; 4]).unwrap();
        for x in [-3.0, 0.5, 10.0] {
            assert_eq!(zero.eval(x), Complex64::new(1.0, 0.0));
        }
        assert!(charfn_eval(&set(&[2.0, 5.0]), 0.0).unwrap() == Complex64::new(1.0, 0.0));
    }

    #[test]
    fn charfn_conjugate_symmetry() {
        let f = CharFnApprox::new(vec![1.3, 2.1, 3.7, 9.2]).unwrap();
        for x in [0.1, 0.7, 2.0] {
            assert_eq!(f.eval(-x), f.eval(x).conj());
        }
    }

    #[test]
    fn recover_two_moments() {
        let f = CharFnApprox::new(vec![17.5, 370.0]).unwrap();
        let m1 = recover_moment(&f, 1).unwrap();
        let m2 = recover_moment(&f, 2).unwrap();
        assert!(!m1.truncated);
        assert!((m1.value - 17.5).abs() <= 1e-6 * 17.5);
        assert!((m2.value - 370.0).abs() <= 1e-6 * 370.0);
        let beyond = recover_moment(&f, 3).unwrap();
        assert!(beyond.truncated);
        assert_eq!(beyond.value, 0.0);
        assert!(recover_moment(&f, 0).is_err());
        let zero = CharFnApprox::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(recover_moment(&zero, 2).unwrap().value, 0.0);
    }

    #[test]
    fn central_moments_of_known_set() {
        // Two-point distribution {1, 3} with equal weights: mean 2, μ2 = 1, μ3 = 0, μ4 = 1.
        let raw = [2.0, 5.0, 14.0, 41.0];
        let c = central_moments(&raw);
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!(c[1].abs() < 1e-12);
        assert!((c[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_charlier_k2_is_gaussian() {
        let m = set(&[17.5, 370.0]);
        let sigma = 63.75_f64.sqrt();
        let grid = GridSpec::centered(17.5, 8.0 * sigma, 801).unwrap();
        let d = density_gram_charlier(&m, &grid).unwrap();
        assert!((d.total_mass - 1.0).abs() <= 1e-6);
        for (p, f) in d.grid.iter().zip(&d.values) {
            let z = (p - 17.5) / sigma;
            if z.abs() <= 4.0 {
                let exact = (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt());
                assert!((f - exact).abs() <= 1e-8 * exact, "p={p}");
            }
        }
        assert!((d.recovered_mean - 17.5).abs() <= 1e-4 * 17.5);
        assert!((d.recovered_variance - 63.75).abs() <= 1e-4 * 63.75);
        assert_eq!(d.negative_mass_fraction, 0.0);
    }

    #[test]
    fn gram_charlier_rejects_bad_inputs() {
        let neg = set(&[1.8181818181818181, 1.9801980198019802]);
        assert!(neg.flags.negative_variance);
        let grid = GridSpec::new(-100.0, 100.0, 1001).unwrap();
        assert!(density_gram_charlier(&neg, &grid).is_err());
        let narrow = GridSpec::new(0.0, 30.0, 301).unwrap();
        assert!(density_gram_charlier(&set(&[17.5, 370.0]), &narrow).is_err());
        let coarse = GridSpec::new(-200.0, 200.0, 5).unwrap();
        assert!(density_gram_charlier(&set(&[17.5, 370.0]), &coarse).is_err());
        assert!(GridSpec::new(1.0, 1.0, 10).is_err());
    }

    #[test]
    fn damped_inversion_of_degenerate_set_concentrates() {
        let m = set(&[5.0, 25.0]);
        let mut widths = Vec::new();
        for s in [1.0, 4.0, 16.0] {
            let grid = GridSpec::centered(5.0, 8.0 / s, 201).unwrap();
            let d = density_damped_inversion(&m, s, &grid).unwrap();
            assert!((d.total_mass - 1.0).abs() <= 1e-6);
            assert!((d.recovered_mean - 5.0).abs() < 1e-6);
            widths.push(d.recovered_variance.sqrt());
        }
        assert!(widths[0] > widths[1] && widths[1] > widths[2]);
        assert!((widths[2] - 1.0 / 16.0).abs() < 1e-3);
    }

    #[test]
    fn damped_inversion_errors() {
        let m = set(&[5.0, 26.0]);
        let grid = GridSpec::centered(5.0, 10.0, 101).unwrap();
        assert!(density_damped_inversion(&m, 0.0, &grid).is_err());
        assert!(density_damped_inversion(&set(&[5.0]), 1.0, &grid).is_err());
    }

    #[test]
    fn csv_output_has_header_and_rows() {
        let m = set(&[0.0, 1.0]);
        let d = density_gram_charlier(&m, &GridSpec::new(-6.0, 6.0, 25).unwrap()).unwrap();
        let csv = d.to_csv();
        assert!(csv.starts_with("price,density\n"));
        assert_eq!(csv.lines().count(), 26);
    }
}
