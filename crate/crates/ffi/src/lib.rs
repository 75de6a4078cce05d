//! C ABI over `mbm-core`.
//!
//! Every function returns an [`MbmStatus`]. On failure the message is kept per
//! thread and read with [`mbm_last_error_message`]. Handles are opaque and
//! released with their `_free` function; strings returned through out
//! parameters are released with [`mbm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mbm_core::moments::{compute_moment_set, vwap, MomentSet, PriceMethod};
use mbm_core::pricing::{sdf, solve_price_single, PricingScenario};
use mbm_core::simulator::{gen_trades, PriceModel, SimSpec, VolumeModel};
use mbm_core::trade_series::{parse_ticks, TickSeries};
use mbm_core::utility::UtilitySpec;
use mbm_core::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbmStatus {
    Ok = 0,
    Input = 1,
    Numerical = 2,
    Assumption = 3,
    NullPointer = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbmPriceMethod {
    Frequency = 0,
    Market = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbmUtilityFamily {
    Linear = 0,
    Log = 1,
    Power = 2,
    Exponential = 3,
}

/// `parameter` is γ for power and α for exponential utility; ignored otherwise.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MbmUtility {
    pub family: MbmUtilityFamily,
    pub parameter: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MbmScenario {
    pub utility: MbmUtility,
    pub beta: f64,
    pub endowment_t: f64,
    pub endowment_terminal: f64,
    pub holdings: f64,
    pub payoff_mean: f64,
    pub payoff_variance: f64,
    pub price_variance: f64,
    pub dividend_mean: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MbmPriceSolution {
    pub mean_price: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// AR(1) log-price and log-normal volume simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MbmSimSpec {
    pub length: usize,
    pub seed: u64,
    pub base_price: f64,
    pub persistence: f64,
    pub price_sigma: f64,
    pub median_volume: f64,
    pub volume_log_sigma: f64,
    pub pv_correlation: f64,
}

/// Opaque trade series.
pub struct MbmTickSeries(TickSeries);

/// Opaque moment set.
pub struct MbmMomentSet(MomentSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

enum Failure {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn status_of(kind: ErrorKind) -> MbmStatus {
    match kind {
        ErrorKind::Input => MbmStatus::Input,
        ErrorKind::Numerical => MbmStatus::Numerical,
        ErrorKind::Assumption => MbmStatus::Assumption,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MbmStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(e.kind())
        }
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("null pointer: {name}"));
            MbmStatus::NullPointer
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            MbmStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn write<T>(p: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    p.write(value);
    Ok(())
}

fn utility_spec(u: MbmUtility) -> UtilitySpec {
    match u.family {
        MbmUtilityFamily::Linear => UtilitySpec::Linear,
        MbmUtilityFamily::Log => UtilitySpec::Log,
        MbmUtilityFamily::Power => UtilitySpec::Power(u.parameter),
        MbmUtilityFamily::Exponential => UtilitySpec::Exponential(u.parameter),
    }
}

fn price_method(m: MbmPriceMethod) -> PriceMethod {
    match m {
        MbmPriceMethod::Frequency => PriceMethod::Frequency,
        MbmPriceMethod::Market => PriceMethod::Market,
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mbm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses tick CSV text (`time,price,volume[,value]`).
///
/// # Safety
/// `csv` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_series_parse(
    csv: *const c_char,
    out: *mut *mut MbmTickSeries,
) -> MbmStatus {
    guard(|| {
        if csv.is_null() {
            return Err(Failure::Null("csv"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let text = CStr::from_ptr(csv)
            .to_str()
            .map_err(|e| Error::InvalidInput(format!("input is not UTF-8: {e}")))?;
        let series = parse_ticks(text)?;
        write(out, Box::into_raw(Box::new(MbmTickSeries(series))), "out")
    })
}

/// # Safety
/// `series` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_series_len(
    series: *const MbmTickSeries,
    out: *mut usize,
) -> MbmStatus {
    guard(|| {
        let series = as_ref(series, "series")?;
        write(out, series.0.len(), "out")
    })
}

/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mbm_series_free(series: *mut MbmTickSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Moment set of orders `1..=order` for ticks `start..start+len`.
///
/// # Safety
/// `series` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_moment_set_compute(
    series: *const MbmTickSeries,
    start: usize,
    len: usize,
    order: u32,
    method: MbmPriceMethod,
    out: *mut *mut MbmMomentSet,
) -> MbmStatus {
    guard(|| {
        let series = as_ref(series, "series")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let window = series.0.window(start, len)?;
        let set = compute_moment_set(&window, order, price_method(method))?;
        write(out, Box::into_raw(Box::new(MbmMomentSet(set))), "out")
    })
}

/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_moment_set_mean(set: *const MbmMomentSet, out: *mut f64) -> MbmStatus {
    guard(|| write(out, as_ref(set, "set")?.0.mean, "out"))
}

/// May be negative for the market method.
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_moment_set_variance(
    set: *const MbmMomentSet,
    out: *mut f64,
) -> MbmStatus {
    guard(|| write(out, as_ref(set, "set")?.0.variance, "out"))
}

/// Raw moment of order `n`, `1 <= n <= order`.
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_moment_set_raw(
    set: *const MbmMomentSet,
    n: u32,
    out: *mut f64,
) -> MbmStatus {
    guard(|| {
        let set = &as_ref(set, "set")?.0;
        let value = set.raw(n).ok_or_else(|| {
            Error::InvalidInput(format!("moment order {n} outside 1..={}", set.order))
        })?;
        write(out, value, "out")
    })
}

/// Negative-variance and decorrelation flags.
///
/// # Safety
/// `set` must be a live handle; both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_moment_set_flags(
    set: *const MbmMomentSet,
    negative_variance: *mut bool,
    decorrelation_flagged: *mut bool,
) -> MbmStatus {
    guard(|| {
        let flags = &as_ref(set, "set")?.0.flags;
        write(
            negative_variance,
            flags.negative_variance,
            "negative_variance",
        )?;
        write(
            decorrelation_flagged,
            flags.decorrelation.is_some_and(|d| d.flagged),
            "decorrelation_flagged",
        )
    })
}

/// JSON form of the set; release with [`mbm_string_free`].
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_moment_set_to_json(
    set: *const MbmMomentSet,
    out: *mut *mut c_char,
) -> MbmStatus {
    guard(|| {
        let set = as_ref(set, "set")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let json = serde_json::to_string(&set.0)
            .map_err(|e| Error::NonFinite(format!("serialization failed: {e}")))?;
        let json = CString::new(json).map_err(|e| Error::InvalidInput(e.to_string()))?;
        write(out, json.into_raw(), "out")
    })
}

/// # Safety
/// `set` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mbm_moment_set_free(set: *mut MbmMomentSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Volume weighted average price of ticks `start..start+len`.
///
/// # Safety
/// `series` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_vwap(
    series: *const MbmTickSeries,
    start: usize,
    len: usize,
    out: *mut f64,
) -> MbmStatus {
    guard(|| {
        let series = as_ref(series, "series")?;
        let window = series.0.window(start, len)?;
        write(out, vwap(&window), "out")
    })
}

/// Stochastic discount factor `β u'(c_terminal) / u'(c_t)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_sdf(
    utility: MbmUtility,
    beta: f64,
    c_t: f64,
    c_terminal: f64,
    out: *mut f64,
) -> MbmStatus {
    guard(|| {
        write(
            out,
            sdf(&utility_spec(utility), beta, c_t, c_terminal)?,
            "out",
        )
    })
}

/// Mean price for a single purchase and sale.
///
/// # Safety
/// `scenario` must point to a valid struct; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_solve_price_single(
    scenario: *const MbmScenario,
    out: *mut MbmPriceSolution,
) -> MbmStatus {
    guard(|| {
        let s = as_ref(scenario, "scenario")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let scenario = PricingScenario {
            utility: utility_spec(s.utility),
            beta: s.beta,
            endowment_t: s.endowment_t,
            endowment_terminal: s.endowment_terminal,
            holdings: s.holdings,
            payoff_mean: s.payoff_mean,
            payoff_variance: s.payoff_variance,
            price_variance: s.price_variance,
            dividend_mean: s.dividend_mean,
        };
        let solution = solve_price_single(&scenario)?;
        write(
            out,
            MbmPriceSolution {
                mean_price: solution.mean_price,
                residual: solution.residual,
                iterations: solution.iterations,
                converged: solution.converged,
            },
            "out",
        )
    })
}

/// Synthetic trade series.
///
/// # Safety
/// `spec` must point to a valid struct; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbm_simulate(
    spec: *const MbmSimSpec,
    out: *mut *mut MbmTickSeries,
) -> MbmStatus {
    guard(|| {
        let s = as_ref(spec, "spec")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let spec = SimSpec {
            length: s.length,
            seed: s.seed,
            price_model: PriceModel::Ar1 {
                base: s.base_price,
                persistence: s.persistence,
                sigma: s.price_sigma,
            },
            volume_model: VolumeModel::LogNormal {
                median: s.median_volume,
                log_sigma: s.volume_log_sigma,
            },
            pv_correlation: s.pv_correlation,
        };
        let series = gen_trades(&spec)?;
        write(out, Box::into_raw(Box::new(MbmTickSeries(series))), "out")
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mbm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
