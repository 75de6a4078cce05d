//! `mbm` command-line front end.
//!
//! Every flag has a config-file key. Values come from the config file, then
//! `MBM_*` environment variables, then flags; later sources win.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{Config, ScenarioKind};
use crate::density::{density_damped_inversion, density_gram_charlier, DensityMethod, GridSpec};
use crate::error::{Error, Result};
use crate::moments::{
    compute_moment_set_with, price_autocorrelation, vwap, MomentSet, PriceMethod,
    DEFAULT_DECORRELATION_THRESHOLD,
};
use crate::pricing::{
    optimize_holdings, solve_price_first_purchase_with, solve_price_second_purchase_with,
    solve_price_single_with, solve_price_two_sales_with, PriceSolution,
};
use crate::simulator::gen_trades;
use crate::trade_series::{
    format_sig15, parse_ticks, partition_windows, render_ticks, TickSeries, Window, WindowMode,
};

const DEFAULT_ORDER: u32 = 4;
const DEFAULT_GRID_POINTS: usize = 401;
const DEFAULT_GRID_HALF_WIDTH: f64 = 8.0;

#[derive(Debug, Parser)]
#[command(
    name = "mbm",
    version,
    about = "Market-based price moments, densities and pricing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file with `key = value` lines and `[section]` headers.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Tick CSV (`time,price,volume[,value]`), or `price,payoff` samples for `optimize`.
    #[arg(long, global = true)]
    pub input: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<String>,
    /// Ticks per window.
    #[arg(long, global = true)]
    pub window: Option<String>,
    /// Highest moment order.
    #[arg(long, global = true)]
    pub order: Option<String>,
    /// `frequency` or `market`.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// `disjoint` or `sliding` windows.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Fail on negative market variance or flagged decorrelation.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Seed for `simulate`
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Decorrelation flag threshold on |correlation|.
    #[arg(long, global = true)]
    pub threshold: Option<String>,
    /// Window lag for `autocorr`.
    #[arg(long, global = true)]
    pub lag: Option<String>,
    /// Window used by `density`.
    #[arg(long, global = true)]
    pub window_index: Option<String>,
    /// `gram_charlier` or `damped_inversion`.
    #[arg(long, global = true)]
    pub density_method: Option<String>,
    /// Damping scale `s` for `damped_inversion`.
    #[arg(long, global = true)]
    pub damping: Option<String>,
    /// Density grid points
    #[arg(long, global = true)]
    pub points: Option<String>,
    /// Density grid lower end
    #[arg(long, global = true)]
    pub grid_lo: Option<String>,
    /// Density grid upper end
    #[arg(long, global = true)]
    pub grid_hi: Option<String>,
    /// JSON file for density quadrature diagnostics.
    #[arg(long, global = true)]
    pub diagnostics: Option<String>,
    /// Same as `[scenario] holdings_lo`.
    #[arg(long, global = true)]
    pub lo: Option<String>,
    /// Same as `[scenario] holdings_hi`.
    #[arg(long, global = true)]
    pub hi: Option<String>,
    /// Same as `[simulate] length`.
    #[arg(long, global = true)]
    pub length: Option<String>,
    /// Sets any sectioned key, e.g. `--set scenario.beta=0.95`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Parse and check a tick file.
    Validate,
    /// Moment sets per window.
    Moments,
    /// Volume weighted average price per window.
    Vwap,
    /// Price autocorrelation between windows `lag` apart.
    Autocorr,
    /// Approximate price density on a grid for one window.
    Density,
    /// Solve the mean-price equation for the configured scenario.
    Price,
    /// Optimal holdings for `price,payoff` samples.
    Optimize,
    /// Synthetic trade series.
    Simulate,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli, std::env::vars()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind().exit_code()
        }
    }
}

/// Runs a parsed command with the given environment.
pub fn execute<E>(cli: &Cli, env: E) -> Result<()>
where
    E: IntoIterator<Item = (String, String)>,
{
    let config = resolve_config(cli, env)?;
    let mut out = Output::new(config.top("output").map(PathBuf::from));
    match cli.command {
        Command::Validate => cmd_validate(&config, &mut out)?,
        Command::Moments => cmd_moments(&config, &mut out)?,
        Command::Vwap => cmd_vwap(&config, &mut out)?,
        Command::Autocorr => cmd_autocorr(&config, &mut out)?,
        Command::Density => cmd_density(&config, &mut out)?,
        Command::Price => cmd_price(&config, &mut out)?,
        Command::Optimize => cmd_optimize(&config, &mut out)?,
        Command::Simulate => cmd_simulate(&config, &mut out)?,
    }
    out.finish()
}

fn resolve_config<E>(cli: &Cli, env: E) -> Result<Config>
where
    E: IntoIterator<Item = (String, String)>,
{
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    config.apply_env(env)?;
    let top = [
        ("input", &cli.input),
        ("output", &cli.output),
        ("window", &cli.window),
        ("order", &cli.order),
        ("method", &cli.method),
        ("mode", &cli.mode),
        ("seed", &cli.seed),
        ("threshold", &cli.threshold),
        ("lag", &cli.lag),
        ("window_index", &cli.window_index),
        ("density_method", &cli.density_method),
        ("damping", &cli.damping),
        ("points", &cli.points),
        ("grid_lo", &cli.grid_lo),
        ("grid_hi", &cli.grid_hi),
        ("diagnostics", &cli.diagnostics),
    ];
    for (key, value) in top {
        if let Some(value) = value {
            config.set("", key, value)?;
        }
    }
    if cli.strict {
        config.set("", "strict", "true")?;
    }
    let sectioned = [
        ("scenario", "holdings_lo", &cli.lo),
        ("scenario", "holdings_hi", &cli.hi),
        ("simulate", "length", &cli.length),
    ];
    for (section, key, value) in sectioned {
        if let Some(value) = value {
            config.set(section, key, value)?;
        }
    }
    for assignment in &cli.set {
        let (path, value) = assignment.split_once('=').ok_or_else(|| {
            Error::Config(format!("`--set {assignment}` needs SECTION.KEY=VALUE"))
        })?;
        let (section, key) = path.split_once('.').ok_or_else(|| {
            Error::Config(format!("`--set {assignment}` needs SECTION.KEY=VALUE"))
        })?;
        config.set(section.trim(), key, value)?;
    }
    Ok(config)
}

/// Main output plus per-window summary lines. Summaries go to standard output,
/// or to standard error when the main output itself is standard output.
struct Output {
    path: Option<PathBuf>,
    body: String,
    summaries: Vec<String>,
}

impl Output {
    fn new(path: Option<PathBuf>) -> Self {
        Self {
            path,
            body: String::new(),
            summaries: Vec::new(),
        }
    }

    fn summary(&mut self, line: String) {
        self.summaries.push(line);
    }

    fn json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        self.body = serde_json::to_string_pretty(value)
            .map_err(|e| Error::NonFinite(format!("serialization failed: {e}")))?;
        self.body.push('\n');
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match &self.path {
            Some(path) => {
                write_file(path, &self.body)?;
                let mut stdout = std::io::stdout().lock();
                for line in &self.summaries {
                    writeln!(stdout, "{line}")?;
                }
            }
            None => {
                let mut stderr = std::io::stderr().lock();
                for line in &self.summaries {
                    writeln!(stderr, "{line}")?;
                }
                std::io::stdout().lock().write_all(self.body.as_bytes())?;
            }
        }
        Ok(())
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

fn load_series(config: &Config) -> Result<TickSeries> {
    let text = read_input(config)?;
    parse_ticks(&text)
}

fn read_input(config: &Config) -> Result<String> {
    let path = config
        .top("input")
        .ok_or_else(|| Error::Config("missing `input`".into()))?;
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {path}: {e}")))
}

struct WindowSettings {
    len: usize,
    mode: WindowMode,
    order: u32,
    method: PriceMethod,
    threshold: f64,
    strict: bool,
}

impl WindowSettings {
    fn from_config(config: &Config) -> Result<Self> {
        let len: usize = config
            .parsed("", "window")?
            .ok_or_else(|| Error::Config("missing `window`".into()))?;
        Ok(Self {
            len,
            mode: config.parsed("", "mode")?.unwrap_or(WindowMode::Disjoint),
            order: config.parsed("", "order")?.unwrap_or(DEFAULT_ORDER),
            method: config.parsed("", "method")?.unwrap_or(PriceMethod::Market),
            threshold: config
                .parsed("", "threshold")?
                .unwrap_or(DEFAULT_DECORRELATION_THRESHOLD),
            strict: config.flag("", "strict")?.unwrap_or(false),
        })
    }

    fn windows<'a>(&self, series: &'a TickSeries) -> Result<Vec<Window<'a>>> {
        partition_windows(series, self.len, self.mode)
    }
}

fn check_strict(index: usize, set: &MomentSet) -> Result<()> {
    if set.flags.negative_variance {
        return Err(Error::AssumptionViolation(format!(
            "window {index} (center time {}) has negative market variance {}",
            format_sig15(set.center_time),
            format_sig15(set.variance)
        )));
    }
    if let Some(d) = set.flags.decorrelation.filter(|d| d.flagged) {
        return Err(Error::AssumptionViolation(format!(
            "window {index} (center time {}) has order-{} price/volume correlation {}",
            format_sig15(set.center_time),
            d.order,
            format_sig15(d.coefficient)
        )));
    }
    Ok(())
}

fn flag_text(set: &MomentSet) -> String {
    let mut flags = Vec::new();
    if set.flags.negative_variance {
        flags.push("negative_variance".to_string());
    }
    if let Some(d) = set.flags.decorrelation.filter(|d| d.flagged) {
        flags.push(format!("decorrelation({})", format_sig15(d.coefficient)));
    }
    if flags.is_empty() {
        "none".into()
    } else {
        flags.join(",")
    }
}

fn cmd_validate(config: &Config, out: &mut Output) -> Result<()> {
    #[derive(Serialize)]
    struct Report {
        ticks: usize,
        first_time: f64,
        last_time: f64,
        tick_spacing: Option<f64>,
    }
    let series = load_series(config)?;
    let ticks = series.ticks();
    let report = Report {
        ticks: ticks.len(),
        first_time: ticks.first().map_or(0.0, |t| t.time),
        last_time: ticks.last().map_or(0.0, |t| t.time),
        tick_spacing: series.tick_spacing(),
    };
    out.summary(format!(
        "valid: {} ticks, time {} to {}",
        report.ticks,
        format_sig15(report.first_time),
        format_sig15(report.last_time)
    ));
    out.json(&report)
}

fn cmd_moments(config: &Config, out: &mut Output) -> Result<()> {
    let settings = WindowSettings::from_config(config)?;
    let series = load_series(config)?;
    let sets = settings
        .windows(&series)?
        .iter()
        .map(|w| compute_moment_set_with(w, settings.order, settings.method, settings.threshold))
        .collect::<Result<Vec<_>>>()?;
    for (i, set) in sets.iter().enumerate() {
        if settings.strict {
            check_strict(i, set)?;
        }
        out.summary(format!(
            "window {i}: t={} mean={} variance={} flags={}",
            format_sig15(set.center_time),
            format_sig15(set.mean),
            format_sig15(set.variance),
            flag_text(set)
        ));
    }
    out.json(&sets)
}

fn cmd_vwap(config: &Config, out: &mut Output) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        window: usize,
        center_time: f64,
        vwap: f64,
    }
    let settings = WindowSettings::from_config(config)?;
    let series = load_series(config)?;
    let rows: Vec<Row> = settings
        .windows(&series)?
        .iter()
        .enumerate()
        .map(|(i, w)| Row {
            window: i,
            center_time: w.center_time(),
            vwap: vwap(w),
        })
        .collect();
    for row in &rows {
        out.summary(format!(
            "window {}: t={} vwap={}",
            row.window,
            format_sig15(row.center_time),
            format_sig15(row.vwap)
        ));
    }
    out.json(&rows)
}

fn cmd_autocorr(config: &Config, out: &mut Output) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        window: usize,
        lag: usize,
        center_time1: f64,
        center_time2: f64,
        autocorrelation: f64,
    }
    let settings = WindowSettings::from_config(config)?;
    let lag: usize = config.parsed("", "lag")?.unwrap_or(1);
    let series = load_series(config)?;
    let windows = settings.windows(&series)?;
    if lag >= windows.len() {
        return Err(Error::invalid(format!(
            "lag {lag} needs more than {} windows",
            windows.len()
        )));
    }
    let rows = windows
        .iter()
        .zip(&windows[lag..])
        .enumerate()
        .map(|(i, (w1, w2))| {
            Ok(Row {
                window: i,
                lag,
                center_time1: w1.center_time(),
                center_time2: w2.center_time(),
                autocorrelation: price_autocorrelation(w1, w2, settings.method)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for row in &rows {
        out.summary(format!(
            "window {} lag {}: B_p={}",
            row.window,
            row.lag,
            format_sig15(row.autocorrelation)
        ));
    }
    out.json(&rows)
}

fn cmd_density(config: &Config, out: &mut Output) -> Result<()> {
    let settings = WindowSettings::from_config(config)?;
    let index: usize = config.parsed("", "window_index")?.unwrap_or(0);
    let method: DensityMethod = config
        .parsed("", "density_method")?
        .unwrap_or(DensityMethod::GramCharlier);
    let series = load_series(config)?;
    let windows = settings.windows(&series)?;
    let window = windows.get(index).ok_or_else(|| {
        Error::invalid(format!(
            "window index {index} out of range ({} windows)",
            windows.len()
        ))
    })?;
    let set = compute_moment_set_with(window, settings.order, settings.method, settings.threshold)?;
    if settings.strict {
        check_strict(index, &set)?;
    }

    let damping: Option<f64> = config.parsed("", "damping")?;
    let spread = match method {
        DensityMethod::GramCharlier if set.variance.is_nan() || set.variance <= 0.0 => {
            return Err(Error::invalid(format!(
                "window {index} has variance {}; Gram-Charlier needs a positive variance",
                format_sig15(set.variance)
            )));
        }
        DensityMethod::GramCharlier => set.variance,
        DensityMethod::DampedInversion => {
            let s = damping_scale(damping, &set)?;
            set.variance.max(0.0) + 1.0 / (s * s)
        }
    };
    let half_width = DEFAULT_GRID_HALF_WIDTH * spread.max(0.0).sqrt();
    let lo = config
        .parsed("", "grid_lo")?
        .unwrap_or(set.mean - half_width);
    let hi = config
        .parsed("", "grid_hi")?
        .unwrap_or(set.mean + half_width);
    let points = config.parsed("", "points")?.unwrap_or(DEFAULT_GRID_POINTS);
    let grid = GridSpec::new(lo, hi, points)?;

    let density = match method {
        DensityMethod::GramCharlier => density_gram_charlier(&set, &grid)?,
        DensityMethod::DampedInversion => {
            density_damped_inversion(&set, damping_scale(damping, &set)?, &grid)?
        }
    };
    out.summary(format!(
        "window {index}: mass={} mean={} variance={} negative_mass={}",
        format_sig15(density.total_mass),
        format_sig15(density.recovered_mean),
        format_sig15(density.recovered_variance),
        format_sig15(density.negative_mass_fraction)
    ));
    if let Some(path) = config.top("diagnostics") {
        let mut diag = serde_json::json!({
            "method": density.method,
            "window": index,
            "total_mass": density.total_mass,
            "raw_mass": density.raw_mass,
            "recovered_mean": density.recovered_mean,
            "recovered_variance": density.recovered_variance,
            "negative_mass_fraction": density.negative_mass_fraction,
        })
        .to_string();
        diag.push('\n');
        write_file(Path::new(path), &diag)?;
    }
    out.body = density.to_csv();
    Ok(())
}

/// Explicit damping, or `1 / σ` so the added spread equals the window variance.
fn damping_scale(explicit: Option<f64>, set: &MomentSet) -> Result<f64> {
    match explicit {
        Some(s) => Ok(s),
        None if set.variance > 0.0 => Ok(1.0 / set.variance.sqrt()),
        None => Err(Error::Config(
            "`damping` is required when the window variance is not positive".into(),
        )),
    }
}

fn cmd_price(config: &Config, out: &mut Output) -> Result<()> {
    #[derive(Serialize)]
    struct Report {
        kind: &'static str,
        first: PriceSolution,
        #[serde(skip_serializing_if = "Option::is_none")]
        second: Option<PriceSolution>,
    }
    let options = config.solver_options()?;
    let given_first: Option<f64> = config.parsed("scenario", "first_price")?;
    let report = match config.scenario_kind()? {
        ScenarioKind::Single => Report {
            kind: "single",
            first: solve_price_single_with(&config.pricing_scenario()?, &options)?,
            second: None,
        },
        ScenarioKind::FirstPurchase => Report {
            kind: "first_purchase",
            first: solve_price_first_purchase_with(&config.two_trade_scenario()?, &options)?,
            second: None,
        },
        kind @ (ScenarioKind::SecondPurchase | ScenarioKind::TwoSales) => {
            let scenario = config.two_trade_scenario()?;
            let first = solve_price_first_purchase_with(&scenario, &options)?;
            let p1 = given_first.unwrap_or(first.mean_price);
            let (name, second) = if kind == ScenarioKind::SecondPurchase {
                (
                    "second_purchase",
                    solve_price_second_purchase_with(&scenario, p1, &options)?,
                )
            } else {
                (
                    "two_sales",
                    solve_price_two_sales_with(&scenario, p1, &options)?,
                )
            };
            Report {
                kind: name,
                first,
                second: Some(second),
            }
        }
    };
    let mut line = format!(
        "{}: p0={} residual={} iterations={}",
        report.kind,
        format_sig15(report.first.mean_price),
        format_sig15(report.first.residual),
        report.first.iterations
    );
    if let Some(second) = &report.second {
        line.push_str(&format!(
            " second_p0={} residual={} iterations={}",
            format_sig15(second.mean_price),
            format_sig15(second.residual),
            second.iterations
        ));
    }
    out.summary(line);
    out.json(&report)
}

fn parse_samples(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::MalformedRow {
        row: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["price", "payoff"] {
        return Err(Error::MalformedRow {
            row: 1,
            message: "header must be `price,payoff`".into(),
        });
    }
    let (mut prices, mut payoffs) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let field = |j: usize| -> Result<f64> {
            let raw = record.get(j).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedRow {
                    row,
                    message: format!("`{raw}` is not a finite number"),
                })
        };
        prices.push(field(0)?);
        payoffs.push(field(1)?);
    }
    Ok((prices, payoffs))
}

fn cmd_optimize(config: &Config, out: &mut Output) -> Result<()> {
    let scenario = config.pricing_scenario()?;
    let bounds = config.holdings_bounds()?;
    let (prices, payoffs) = parse_samples(&read_input(config)?)?;
    let optimum = optimize_holdings(&scenario, &prices, &payoffs, bounds)?;
    out.summary(format!(
        "holdings={} boundary={} residual={}",
        format_sig15(optimum.holdings),
        optimum.at_boundary,
        format_sig15(optimum.residual)
    ));
    out.json(&optimum)
}

fn cmd_simulate(config: &Config, out: &mut Output) -> Result<()> {
    let spec = config.sim_spec()?;
    let series = gen_trades(&spec)?;
    out.summary(format!(
        "simulated {} ticks, seed {}",
        series.len(),
        spec.seed
    ));
    out.body = render_ticks(&series);
    Ok(())
}
