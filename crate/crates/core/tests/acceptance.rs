//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed in a normal
//! `cargo test` run. Exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use mbm_core::density::{density_gram_charlier, recover_moment, CharFnApprox, GridSpec};
use mbm_core::moments::{
    compute_moment_set, freq_moment, market_price_moment, price_autocorrelation, vwap, MomentSet,
    PriceMethod,
};
use mbm_core::pricing::{
    optimize_holdings, residual_basic_eq, solve_price_first_purchase, solve_price_second_purchase,
    solve_price_single, solve_price_two_sales, PriceSolution, PricingScenario, TradeTimes,
    TwoTradeScenario,
};
use mbm_core::simulator::{gen_trades, PriceModel, SimSpec, VolumeModel};
use mbm_core::trade_series::{partition_windows, TradeTick, Window, WindowMode};
use mbm_core::utility::UtilitySpec;
use mbm_core::ErrorKind;

const COLLISION_TOL: f64 = 1e-12;
const SELF_AUTOCORR_TOL: f64 = 1e-12;
const RECOVERY_TOL: f64 = 1e-6;
const GAUSSIAN_POINTWISE_TOL: f64 = 1e-8;
const MASS_TOL: f64 = 1e-6;
const QUADRATURE_MOMENT_TOL: f64 = 1e-4;
const LIMIT_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-10;
const FOC_TOL: f64 = 1e-8;
const SLOPE_TARGET: f64 = -0.5;
const SLOPE_BAND: f64 = 0.2;
/// Rounding slack for the vwap range check; `(p U) / U` need not round back
/// to `p` exactly.
const VWAP_RANGE_ULPS: f64 = 2.0;
/// Rounding slack for the convexity bound, in units of machine epsilon per
/// power of the price.
const CONVEXITY_ULPS_PER_POWER: f64 = 4.0;
/// Rounding allowance for the risk-neutral anchor, in ulps of β·x0.
const ANCHOR_ULPS: f64 = 2.0;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 14] = [
        ("1 frequency/market collision", c01_collision),
        ("2 vwap identity", c02_vwap_identity),
        ("3 convexity bound", c03_convexity),
        ("4 assumption-violation detection", c04_violation),
        (
            "5 autocorrelation self-consistency",
            c05_self_autocorrelation,
        ),
        ("6 moment recovery", c06_moment_recovery),
        ("7 density sanity", c07_density),
        ("8 risk-neutral anchor", c08_risk_neutral),
        ("9 volatility monotonicity", c09_monotonicity),
        ("10 limit consistency", c10_limit),
        ("11 solver residual contract", c11_residual_contract),
        ("12 first-order condition", c12_first_order),
        ("13 statistical convergence", c13_convergence),
        ("14 full-run determinism", c14_determinism),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{elapsed:.2}s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail} [{elapsed:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 14 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

fn ensure(condition: bool, message: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if condition {
        Ok(())
    } else {
        Err(message())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> std::result::Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn log_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn random_ticks(rng: &mut StdRng, max_len: usize) -> Vec<TradeTick> {
    let len = rng.random_range(1..=max_len);
    (0..len)
        .map(|i| {
            let price = log_uniform(rng, 0.1, 1000.0);
            let volume = log_uniform(rng, 0.01, 1e4);
            TradeTick::new(i as f64, price, volume).unwrap()
        })
        .collect()
}

fn sim_spec(seed: u64, length: usize, volume_model: VolumeModel) -> SimSpec {
    SimSpec {
        length,
        seed,
        price_model: PriceModel::Ar1 {
            base: 100.0,
            persistence: 0.5,
            sigma: 0.01,
        },
        volume_model,
        pv_correlation: 0.0,
    }
}

fn c01_collision() -> Outcome {
    let start = Instant::now();
    let spec = sim_spec(11, 10_000, VolumeModel::Constant { median: 7.5 });
    let series = gen_trades(&spec).map_err(|e| e.to_string())?;
    let windows =
        partition_windows(&series, 100, WindowMode::Disjoint).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for w in &windows {
        let f = compute_moment_set(w, 4, PriceMethod::Frequency).map_err(|e| e.to_string())?;
        let m = compute_moment_set(w, 4, PriceMethod::Market).map_err(|e| e.to_string())?;
        for (a, b) in f.raw_moments.iter().zip(&m.raw_moments) {
            worst = worst.max(rel_diff(*a, *b));
        }
    }
    within(start.elapsed(), 1.0)?;
    ensure(windows.len() == 100, || {
        format!("{} windows", windows.len())
    })?;
    ensure(worst <= COLLISION_TOL, || {
        format!("max relative difference {worst:e}")
    })?;
    Ok(format!("100 windows, max relative difference {worst:e}"))
}

fn c02_vwap_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut outside = 0;
    for _ in 0..10_000 {
        let ticks = random_ticks(&mut rng, 64);
        let w = Window::new(&ticks).unwrap();
        let v = vwap(&w);
        let m1 = market_price_moment(&w, 1).unwrap();
        if v.to_bits() != m1.to_bits() {
            mismatches += 1;
        }
        let lo = ticks.iter().map(|t| t.price).fold(f64::INFINITY, f64::min);
        let hi = ticks
            .iter()
            .map(|t| t.price)
            .fold(f64::NEG_INFINITY, f64::max);
        let slack = VWAP_RANGE_ULPS * f64::EPSILON;
        if !(lo * (1.0 - slack) <= v && v <= hi * (1.0 + slack)) {
            outside += 1;
        }
    }
    within(start.elapsed(), 1.0)?;
    ensure(mismatches == 0 && outside == 0, || {
        format!("{mismatches} bit mismatches, {outside} outside [min p, max p]")
    })?;
    Ok("10000 windows, bit-identical and bracketed".into())
}

fn c03_convexity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..10_000 {
        let ticks = random_ticks(&mut rng, 64);
        let w = Window::new(&ticks).unwrap();
        for n in 1..=6u32 {
            let powers = ticks.iter().map(|t| t.price.powi(n as i32));
            let lo = powers.clone().fold(f64::INFINITY, f64::min);
            let hi = powers.fold(f64::NEG_INFINITY, f64::max);
            let slack = CONVEXITY_ULPS_PER_POWER * n as f64 * f64::EPSILON;
            let m = market_price_moment(&w, n).unwrap();
            if !(lo * (1.0 - slack) <= m && m <= hi * (1.0 + slack)) {
                violations += 1;
            }
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok("10000 windows, orders 1..=6, zero violations".into())
}

fn c04_violation() -> Outcome {
    let ticks = [
        TradeTick::new(0.0, 10.0, 1.0).unwrap(),
        TradeTick::new(1.0, 1.0, 10.0).unwrap(),
    ];
    let w = Window::new(&ticks).unwrap();
    let set = compute_moment_set(&w, 2, PriceMethod::Market).map_err(|e| e.to_string())?;
    let diag = set
        .flags
        .decorrelation
        .ok_or("no decorrelation diagnostic")?;
    ensure(set.variance < 0.0 && set.flags.negative_variance, || {
        format!("variance {} not flagged negative", set.variance)
    })?;
    ensure(diag.flagged && diag.order == 2, || {
        format!("diagnostic {diag:?}")
    })?;
    ensure((diag.coefficient + 1.0).abs() <= 1e-12, || {
        format!("coefficient {}", diag.coefficient)
    })?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("ticks.csv");
    std::fs::write(&input, "time,price,volume\n0,10,1\n1,1,10\n").map_err(|e| e.to_string())?;
    let output = Command::new(env!("CARGO_BIN_EXE_mbm"))
        .args([
            "moments", "--window", "2", "--order", "2", "--method", "market", "--strict",
        ])
        .arg("--input")
        .arg(&input)
        .output()
        .map_err(|e| e.to_string())?;
    let stderr = String::from_utf8_lossy(&output.stderr);
    ensure(output.status.code() == Some(3), || {
        format!("exit {:?}", output.status.code())
    })?;
    ensure(stderr.contains("window 0"), || format!("stderr `{stderr}`"))?;
    Ok(format!(
        "variance {:.6}, coefficient {}, strict exit 3",
        set.variance, diag.coefficient
    ))
}

fn c05_self_autocorrelation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let mut ticks = random_ticks(&mut rng, 64);
        if ticks.len() < 2 {
            ticks.push(TradeTick::new(ticks.len() as f64, 3.0, 2.0).unwrap());
        }
        let w = Window::new(&ticks).unwrap();
        for method in [PriceMethod::Frequency, PriceMethod::Market] {
            let b = price_autocorrelation(&w, &w, method).unwrap();
            let v = compute_moment_set(&w, 2, method).unwrap().variance;
            worst = worst.max((b - v).abs() / v.abs().max(1.0));
        }
    }
    ensure(worst <= SELF_AUTOCORR_TOL, || {
        format!("max difference {worst:e}")
    })?;
    Ok(format!(
        "1000 windows, both methods, max difference {worst:e}"
    ))
}

/// Raw moments of a random discrete distribution with atoms in `[s/2, 3s/2]`.
fn random_raw_moments(rng: &mut StdRng, k: usize) -> Vec<f64> {
    let scale = log_uniform(rng, 1.0, 1000.0);
    let atoms = rng.random_range(1..=8);
    let points: Vec<(f64, f64)> = (0..atoms)
        .map(|_| {
            (
                rng.random_range(0.5..1.5) * scale,
                rng.random_range(0.1..1.0),
            )
        })
        .collect();
    let total: f64 = points.iter().map(|p| p.1).sum();
    (1..=k as i32)
        .map(|n| points.iter().map(|(x, w)| w * x.powi(n)).sum::<f64>() / total)
        .collect()
}

fn c06_moment_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let k = rng.random_range(1..=4);
        let raw = random_raw_moments(&mut rng, k);
        let set = MomentSet::from_raw(PriceMethod::Market, raw.clone()).unwrap();
        let charfn = CharFnApprox::from_moment_set(&set).unwrap();
        for n in 1..=k {
            let r = recover_moment(&charfn, n as u32).unwrap();
            worst = worst.max(rel_diff(r.value, raw[n - 1]));
        }
    }
    within(start.elapsed(), 5.0)?;
    ensure(worst <= RECOVERY_TOL, || {
        format!("max relative error {worst:e}")
    })?;
    Ok(format!("1000 sets, max relative error {worst:e}"))
}

fn c07_density() -> Outcome {
    let cases = [(0.0, 1.0), (100.0, 2.0), (5.0, 0.3), (1000.0, 25.0)];
    let mut worst_point: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    let mut worst_moment: f64 = 0.0;
    for (mu, sigma) in cases {
        let set =
            MomentSet::from_raw(PriceMethod::Frequency, vec![mu, sigma * sigma + mu * mu]).unwrap();
        let grid = GridSpec::new(mu - 8.0 * sigma, mu + 8.0 * sigma, 4001).unwrap();
        let d = density_gram_charlier(&set, &grid).map_err(|e| e.to_string())?;
        for (p, f) in d.grid.iter().zip(&d.values) {
            if (p - mu).abs() <= 4.0 * sigma {
                let z = (p - mu) / sigma;
                let gauss = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                worst_point = worst_point.max((f - gauss).abs());
            }
        }
        worst_mass = worst_mass.max((d.total_mass - 1.0).abs());
        worst_moment = worst_moment
            .max((d.recovered_mean - mu).abs() / mu.abs().max(sigma))
            .max((d.recovered_variance - sigma * sigma).abs() / (sigma * sigma));
    }
    ensure(worst_point <= GAUSSIAN_POINTWISE_TOL, || {
        format!("pointwise {worst_point:e}")
    })?;
    ensure(worst_mass <= MASS_TOL, || {
        format!("mass error {worst_mass:e}")
    })?;
    ensure(worst_moment <= QUADRATURE_MOMENT_TOL, || {
        format!("moment error {worst_moment:e}")
    })?;
    Ok(format!(
        "pointwise {worst_point:e}, mass {worst_mass:e}, moments {worst_moment:e}"
    ))
}

fn base_scenario(utility: UtilitySpec) -> PricingScenario {
    PricingScenario {
        utility,
        beta: 0.95,
        endowment_t: 10.0,
        endowment_terminal: 10.0,
        holdings: 1.0,
        payoff_mean: 5.0,
        payoff_variance: 0.0,
        price_variance: 0.0,
        dividend_mean: 0.0,
    }
}

fn two_trade(first: PricingScenario, two_sales: bool) -> TwoTradeScenario {
    TwoTradeScenario {
        first,
        holdings2: first.holdings,
        payoff_mean2: first.payoff_mean,
        payoff_variance2: first.payoff_variance,
        price_variance2: first.price_variance,
        price_autocorr: 0.0,
        payoff_autocorr: two_sales.then_some(0.0),
        payoff_mean12: None,
        times: TradeTimes {
            first_purchase: 0.0,
            second_purchase: 1.0,
            first_sale: 2.0,
            second_sale: two_sales.then_some(3.0),
        },
    }
}

fn ulps_apart(a: f64, b: f64) -> f64 {
    (a - b).abs() / (f64::EPSILON * b.abs())
}

fn c08_risk_neutral() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let first = PricingScenario {
            utility: UtilitySpec::Linear,
            beta: rng.random_range(0.5..=1.0),
            endowment_t: rng.random_range(1.0..100.0),
            endowment_terminal: rng.random_range(1.0..100.0),
            holdings: rng.random_range(0.0..5.0),
            payoff_mean: rng.random_range(0.1..50.0),
            payoff_variance: rng.random_range(0.0..10.0),
            price_variance: rng.random_range(0.0..10.0),
            dividend_mean: 0.0,
        };
        let mut s = two_trade(first, true);
        s.holdings2 = rng.random_range(0.0..5.0);
        s.payoff_mean2 = rng.random_range(0.1..50.0);
        s.payoff_variance2 = rng.random_range(0.0..10.0);
        s.price_variance2 = rng.random_range(0.0..10.0);
        let bp = (first.price_variance * s.price_variance2).sqrt();
        let bx = (first.payoff_variance * s.payoff_variance2).sqrt();
        s.price_autocorr = rng.random_range(-1.0..=1.0) * bp;
        s.payoff_autocorr = Some(rng.random_range(-1.0..=1.0) * bx);

        let p1 = solve_price_first_purchase(&s).map_err(|e| e.to_string())?;
        let p2 = solve_price_second_purchase(&s, p1.mean_price).map_err(|e| e.to_string())?;
        let p3 = solve_price_two_sales(&s, p1.mean_price).map_err(|e| e.to_string())?;
        worst = worst
            .max(ulps_apart(p1.mean_price, first.beta * first.payoff_mean))
            .max(ulps_apart(p2.mean_price, first.beta * s.payoff_mean2))
            .max(ulps_apart(p3.mean_price, first.beta * s.payoff_mean2));
    }
    ensure(worst <= ANCHOR_ULPS, || {
        format!("max deviation {worst} ulp")
    })?;
    Ok(format!(
        "1000 scenarios x 3 solvers, max deviation {worst} ulp"
    ))
}

#[derive(Clone, Copy)]
enum Axis {
    PriceVariance,
    PayoffVariance,
    PriceAutocorr,
    PayoffAutocorr,
}

fn solve_on_axis(utility: UtilitySpec, axis: Axis, v: f64) -> mbm_core::Result<f64> {
    let mut first = base_scenario(utility);
    match axis {
        Axis::PriceVariance => {
            first.price_variance = v;
            solve_price_single(&first).map(|s| s.mean_price)
        }
        Axis::PayoffVariance => {
            first.payoff_variance = v;
            solve_price_single(&first).map(|s| s.mean_price)
        }
        Axis::PriceAutocorr => {
            first.price_variance = 1.0;
            let mut s = two_trade(first, false);
            s.price_autocorr = v;
            let p1 = solve_price_first_purchase(&s)?.mean_price;
            solve_price_second_purchase(&s, p1).map(|s| s.mean_price)
        }
        Axis::PayoffAutocorr => {
            first.payoff_variance = 1.0;
            let mut s = two_trade(first, true);
            s.payoff_autocorr = Some(v);
            let p1 = solve_price_first_purchase(&s)?.mean_price;
            solve_price_two_sales(&s, p1).map(|s| s.mean_price)
        }
    }
}

fn c09_monotonicity() -> Outcome {
    const STEPS: usize = 50;
    let utilities = [UtilitySpec::Log, UtilitySpec::Power(2.0)];
    let axes = [
        Axis::PriceVariance,
        Axis::PayoffVariance,
        Axis::PriceAutocorr,
        Axis::PayoffAutocorr,
    ];
    let mut pairs = 0;
    let mut ordered = 0;
    for utility in utilities {
        for axis in axes {
            let prices = (0..=STEPS)
                .map(|i| solve_on_axis(utility, axis, i as f64 / STEPS as f64))
                .collect::<mbm_core::Result<Vec<_>>>()
                .map_err(|e| e.to_string())?;
            for w in prices.windows(2) {
                pairs += 1;
                if w[1] < w[0] {
                    ordered += 1;
                }
            }
        }
    }
    ensure(pairs == 400 && ordered == pairs, || {
        format!("{ordered}/{pairs} ordered")
    })?;
    Ok(format!(
        "{ordered}/{pairs} paired solves strictly decreasing"
    ))
}

fn c10_limit() -> Outcome {
    let mut worst: f64 = 0.0;
    for utility in [
        UtilitySpec::Log,
        UtilitySpec::Power(2.0),
        UtilitySpec::Exponential(0.3),
    ] {
        let mut first = base_scenario(utility);
        first.price_variance = 0.7;
        first.payoff_variance = 1.3;
        let mut s = two_trade(first, false);
        s.holdings2 = 1e-12;
        s.price_autocorr = first.price_variance;
        let p1 = solve_price_first_purchase(&s).map_err(|e| e.to_string())?;
        let p2 = solve_price_second_purchase(&s, p1.mean_price).map_err(|e| e.to_string())?;
        worst = worst.max((p2.mean_price - p1.mean_price).abs());
    }
    ensure(worst <= LIMIT_TOL, || {
        format!("max |p(t2) - p(t1)| = {worst:e}")
    })?;
    Ok(format!("3 utilities, max |p(t2) - p(t1)| = {worst:e}"))
}

/// `(u', u'')` written out per family.
fn derivatives(u: UtilitySpec, c: f64) -> (f64, f64) {
    match u {
        UtilitySpec::Linear => (1.0, 0.0),
        UtilitySpec::Log => (1.0 / c, -1.0 / (c * c)),
        UtilitySpec::Power(g) => (c.powf(-g), -g * c.powf(-g - 1.0)),
        UtilitySpec::Exponential(a) => ((-a * c).exp(), -a * (-a * c).exp()),
    }
}

/// Right side minus mean price for each equation, evaluated from scratch.
fn independent_residual(s: &TwoTradeScenario, p1: f64, equation: usize, p: f64) -> f64 {
    let f = &s.first;
    let u = f.utility;
    let rhs = match equation {
        0 => {
            let (u1_now, u2_now) = derivatives(u, f.endowment_t - p * f.holdings);
            let (u1_sale, u2_sale) =
                derivatives(u, f.endowment_terminal + f.payoff_mean * f.holdings);
            f.beta * u1_sale / u1_now * f.payoff_mean
                + f.beta * f.holdings * u2_sale / u1_now * f.payoff_variance
                + f.holdings * u2_now / u1_now * f.price_variance
        }
        1 => {
            let (x1, x2) = (f.holdings, s.holdings2);
            let (u1_now, u2_now) = derivatives(u, f.endowment_t - p1 * x1 - p * x2);
            let (u1_sale, u2_sale) =
                derivatives(u, f.endowment_terminal + s.payoff_mean2 * (x1 + x2));
            f.beta * u1_sale / u1_now * s.payoff_mean2
                + f.beta * u2_sale / u1_now * (x1 + x2) * s.payoff_variance2
                + u2_now / u1_now * (x1 * s.price_autocorr + x2 * s.price_variance2)
        }
        _ => {
            let (x1, x2) = (f.holdings, s.holdings2);
            let bx = s.payoff_autocorr.unwrap();
            let (u1_now, u2_now) = derivatives(u, f.endowment_t - p1 * x1 - p * x2);
            let (u1_sale, u2_sale) = derivatives(
                u,
                f.endowment_terminal + s.payoff_mean12() * x1 + s.payoff_mean2 * x2,
            );
            f.beta * u1_sale / u1_now * s.payoff_mean2
                + f.beta * u2_sale / u1_now * (x1 * bx + x2 * s.payoff_variance2)
                + u2_now / u1_now * (x1 * s.price_autocorr + x2 * s.price_variance2)
        }
    };
    rhs - p
}

fn random_utility(rng: &mut StdRng) -> UtilitySpec {
    match rng.random_range(0..4) {
        0 => UtilitySpec::Linear,
        1 => UtilitySpec::Log,
        2 => {
            let g = rng.random_range(0.3..4.0);
            UtilitySpec::Power(if (g - 1.0_f64).abs() < 0.05 { 2.0 } else { g })
        }
        _ => UtilitySpec::Exponential(rng.random_range(0.02..1.0)),
    }
}

fn c11_residual_contract() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let (mut converged, mut reported, mut silent, mut broken) = (0, 0, 0, 0);
    let mut check =
        |result: mbm_core::Result<PriceSolution>, residual: &dyn Fn(f64) -> f64| match result {
            Ok(sol) => {
                let bound = RESIDUAL_TOL * sol.mean_price.abs().max(1.0);
                if !sol.converged {
                    silent += 1;
                } else if residual(sol.mean_price).abs() > bound || sol.residual.abs() > bound {
                    broken += 1;
                } else {
                    converged += 1;
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::Numerical | ErrorKind::Input) => reported += 1,
            Err(_) => silent += 1,
        };
    for _ in 0..500 {
        let first = PricingScenario {
            utility: random_utility(&mut rng),
            beta: rng.random_range(0.7..=1.0),
            endowment_t: rng.random_range(5.0..50.0),
            endowment_terminal: rng.random_range(5.0..50.0),
            holdings: rng.random_range(0.0..2.0),
            payoff_mean: rng.random_range(0.5..10.0),
            payoff_variance: rng.random_range(0.0..4.0),
            price_variance: rng.random_range(0.0..4.0),
            dividend_mean: 0.0,
        };
        let mut s = two_trade(first, true);
        s.holdings2 = rng.random_range(0.0..2.0);
        s.payoff_mean2 = rng.random_range(0.5..10.0);
        s.payoff_variance2 = rng.random_range(0.0..4.0);
        s.price_variance2 = rng.random_range(0.0..4.0);
        s.price_autocorr =
            rng.random_range(-1.0..=1.0) * (first.price_variance * s.price_variance2).sqrt();
        s.payoff_autocorr = Some(
            rng.random_range(-1.0..=1.0) * (first.payoff_variance * s.payoff_variance2).sqrt(),
        );
        s.payoff_mean12 = Some(rng.random_range(0.5..10.0));

        let first_result = solve_price_first_purchase(&s);
        let p1 = first_result.as_ref().map(|sol| sol.mean_price).ok();
        check(first_result, &|p| independent_residual(&s, 0.0, 0, p));
        if let Some(p1) = p1 {
            check(solve_price_second_purchase(&s, p1), &|p| {
                independent_residual(&s, p1, 1, p)
            });
            check(solve_price_two_sales(&s, p1), &|p| {
                independent_residual(&s, p1, 2, p)
            });
        }
    }
    let mut impossible = base_scenario(UtilitySpec::Log);
    impossible.price_variance = 1e6;
    let forced = solve_price_single(&impossible);
    let forced_reported = matches!(&forced, Err(e) if e.kind() == ErrorKind::Numerical);
    if !forced_reported {
        silent += 1;
    }
    ensure(silent == 0 && broken == 0, || {
        format!("{broken} converged outside contract, {silent} silent failures")
    })?;
    ensure(converged > 0, || "no converged solutions".into())?;
    Ok(format!(
        "{converged} converged within contract, {reported} reported failures, 0 silent"
    ))
}

fn c12_first_order() -> Outcome {
    const GRID: usize = 10_000;
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(12);
    let mut interior = 0;
    let mut worst_foc: f64 = 0.0;
    let mut worst_cells: f64 = 0.0;
    for _ in 0..50 {
        let beta = rng.random_range(0.85..0.99);
        let endowment_t = rng.random_range(8.0..20.0);
        let endowment_terminal = rng.random_range(8.0..20.0);
        let price_level = rng.random_range(2.0..5.0);
        let payoff_level = price_level / beta * rng.random_range(1.02..1.2);
        let prices: Vec<f64> = (0..25)
            .map(|_| price_level * rng.random_range(0.9..1.1))
            .collect();
        let payoffs: Vec<f64> = (0..25)
            .map(|_| payoff_level * rng.random_range(0.4..1.6))
            .collect();
        let scenario = PricingScenario {
            utility: UtilitySpec::Log,
            beta,
            endowment_t,
            endowment_terminal,
            holdings: 0.0,
            payoff_mean: payoff_level,
            payoff_variance: 0.0,
            price_variance: 0.0,
            dividend_mean: 0.0,
        };
        let max_price = prices.iter().cloned().fold(0.0, f64::max);
        let (lo, hi) = (0.0, 0.9 * endowment_t / max_price);
        let opt =
            optimize_holdings(&scenario, &prices, &payoffs, (lo, hi)).map_err(|e| e.to_string())?;

        if !opt.at_boundary {
            interior += 1;
            let r = residual_basic_eq(&scenario, &prices, &payoffs, opt.holdings)
                .map_err(|e| e.to_string())?;
            worst_foc = worst_foc.max(r.abs() / opt.scale);
        }

        let objective = |xi: f64| {
            prices
                .iter()
                .map(|p| (endowment_t - p * xi).ln())
                .sum::<f64>()
                / prices.len() as f64
                + beta
                    * payoffs
                        .iter()
                        .map(|x| (endowment_terminal + x * xi).ln())
                        .sum::<f64>()
                    / payoffs.len() as f64
        };
        let cell = (hi - lo) / (GRID - 1) as f64;
        let best = (0..GRID)
            .map(|i| lo + cell * i as f64)
            .max_by(|a, b| objective(*a).total_cmp(&objective(*b)))
            .unwrap();
        worst_cells = worst_cells.max((best - opt.holdings).abs() / cell);
    }
    within(start.elapsed(), 30.0)?;
    ensure(interior > 0, || "no interior optima".into())?;
    ensure(worst_foc <= FOC_TOL, || {
        format!("max |residual|/scale {worst_foc:e}")
    })?;
    ensure(worst_cells <= 1.0, || {
        format!("grid oracle {worst_cells:.3} cells away")
    })?;
    Ok(format!(
        "50 scenarios ({interior} interior), max |residual|/scale {worst_foc:e}, \
         max grid distance {worst_cells:.3} cells"
    ))
}

fn c13_convergence() -> Outcome {
    let sizes = [100usize, 1_000, 10_000, 100_000];
    let seeds = 20;
    let mut mean_error = [0.0; 4];
    for seed in 0..seeds {
        let spec = sim_spec(
            1_000 + seed,
            100_000,
            VolumeModel::LogNormal {
                median: 10.0,
                log_sigma: 0.5,
            },
        );
        let series = gen_trades(&spec).map_err(|e| e.to_string())?;
        for (slot, &n) in sizes.iter().enumerate() {
            let w = series.window(0, n).map_err(|e| e.to_string())?;
            let market = vwap(&w);
            let frequency = freq_moment(&w, 1).map_err(|e| e.to_string())?;
            mean_error[slot] += (market - frequency).abs() / seeds as f64;
        }
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = mean_error.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    ensure((slope - SLOPE_TARGET).abs() <= SLOPE_BAND, || {
        format!("slope {slope:.3}")
    })?;
    Ok(format!("slope {slope:.3} over N = 1e2..1e5, 20 seeds"))
}

fn c14_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.ini");
    std::fs::write(
        &config,
        "seed = 42\nwindow = 250\norder = 4\nmethod = market\n\n\
         [simulate]\nlength = 5000\npersistence = 0.3\nprice_sigma = 0.02\n\
         volume_log_sigma = 0.7\npv_correlation = 0.25\n",
    )
    .map_err(|e| e.to_string())?;
    let run = |tag: &str| -> std::result::Result<Vec<Vec<u8>>, String> {
        let ticks = dir.path().join(format!("ticks_{tag}.csv"));
        let moments = dir.path().join(format!("moments_{tag}.json"));
        let mut captured = Vec::new();
        for (command, output, input) in [
            ("simulate", &ticks, None),
            ("moments", &moments, Some(&ticks)),
        ] {
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_mbm"));
            cmd.arg(command)
                .arg("--config")
                .arg(&config)
                .arg("--output")
                .arg(output);
            if let Some(input) = input {
                cmd.arg("--input").arg(input);
            }
            let out = cmd.output().map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!(
                    "{command} exited {:?}: {}",
                    out.status.code(),
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
            captured.push(out.stdout);
            captured.push(std::fs::read(output).map_err(|e| e.to_string())?);
        }
        Ok(captured)
    };
    let first = run("a")?;
    let second = run("b")?;
    ensure(first == second, || "outputs differ between runs".into())?;
    let bytes: usize = first.iter().map(Vec::len).sum();
    Ok(format!(
        "simulate + moments, {bytes} bytes identical across runs"
    ))
}
