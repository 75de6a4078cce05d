//! Plain-text run configuration: `key = value` lines under optional
//! `[section]` headers.
//!
//! Keys before the first header are top-level run settings (`input`,
//! `window`, `method`, ...). Sections `[scenario]`, `[utility]`, `[solver]` and
//! `[simulate]` hold pricing and simulation parameters. Environment variables
//! `MBM_<KEY>` override top-level keys; command-line flags override both.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pricing::{PricingScenario, SolverOptions, TradeTimes, TwoTradeScenario};
use crate::simulator::{PriceModel, SimSpec, VolumeModel};
use crate::utility::UtilitySpec;

pub const ENV_PREFIX: &str = "MBM_";

pub const TOP_LEVEL_KEYS: &[&str] = &[
    "input",
    "output",
    "window",
    "order",
    "method",
    "mode",
    "strict",
    "seed",
    "threshold",
    "lag",
    "window_index",
    "density_method",
    "damping",
    "points",
    "grid_lo",
    "grid_hi",
    "diagnostics",
];

const SCENARIO_KEYS: &[&str] = &[
    "kind",
    "beta",
    "endowment_t",
    "endowment_terminal",
    "holdings",
    "payoff_mean",
    "payoff_variance",
    "price_variance",
    "dividend_mean",
    "holdings2",
    "payoff_mean2",
    "payoff_variance2",
    "price_variance2",
    "price_autocorr",
    "payoff_autocorr",
    "payoff_mean12",
    "first_price",
    "t1",
    "t2",
    "sale1",
    "sale2",
    "holdings_lo",
    "holdings_hi",
];
const UTILITY_KEYS: &[&str] = &["family", "parameter"];
const SOLVER_KEYS: &[&str] = &["max_iterations", "damping", "tolerance"];
const SIMULATE_KEYS: &[&str] = &[
    "length",
    "seed",
    "price_model",
    "base_price",
    "persistence",
    "price_sigma",
    "volume_model",
    "median_volume",
    "volume_log_sigma",
    "pv_correlation",
];

fn allowed_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "" => Some(TOP_LEVEL_KEYS),
        "scenario" => Some(SCENARIO_KEYS),
        "utility" => Some(UTILITY_KEYS),
        "solver" => Some(SOLVER_KEYS),
        "simulate" => Some(SIMULATE_KEYS),
        _ => None,
    }
}

/// Parsed configuration; the top level is stored under the empty section name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let ini =
            ini::Ini::load_from_str_noescape(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut config = Config::default();
        for (section, props) in ini.iter() {
            let name = section.unwrap_or("").trim().to_ascii_lowercase();
            for (key, value) in props.iter() {
                config.set(&name, key, value)?;
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets `section.key`; the empty section is the top level.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        let allowed = allowed_keys(section)
            .ok_or_else(|| Error::Config(format!("unknown section [{section}]")))?;
        if !allowed.contains(&key.as_str()) {
            let location = if section.is_empty() {
                "top level".to_string()
            } else {
                format!("[{section}]")
            };
            return Err(Error::Config(format!("unknown key `{key}` at {location}")));
        }
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key, value.trim().to_string());
        Ok(())
    }

    /// Applies `MBM_<KEY>` variables to top-level keys.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if TOP_LEVEL_KEYS.contains(&key.as_str()) {
                self.set("", &key, &value)?;
            }
        }
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn top(&self, key: &str) -> Option<&str> {
        self.get("", key)
    }

    pub fn parsed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse `{key}` value `{raw}`"))),
        }
    }

    pub fn flag(&self, section: &str, key: &str) -> Result<Option<bool>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => match raw.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(Some(true)),
                "false" | "no" | "0" | "off" => Ok(Some(false)),
                _ => Err(Error::Config(format!(
                    "`{key}` must be a boolean, got `{raw}`"
                ))),
            },
        }
    }

    fn required<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.parsed(section, key)?
            .ok_or_else(|| Error::Config(format!("missing `{key}` in [{section}]")))
    }

    pub fn utility(&self) -> Result<UtilitySpec> {
        let family = self
            .get("utility", "family")
            .ok_or_else(|| Error::Config("missing `family` in [utility]".into()))?;
        UtilitySpec::from_family(family, self.parsed("utility", "parameter")?)
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        let defaults = SolverOptions::default();
        let options = SolverOptions {
            max_iterations: self
                .parsed("solver", "max_iterations")?
                .unwrap_or(defaults.max_iterations),
            damping: self
                .parsed("solver", "damping")?
                .unwrap_or(defaults.damping),
            tolerance: self
                .parsed("solver", "tolerance")?
                .unwrap_or(defaults.tolerance),
        };
        options.validate()?;
        Ok(options)
    }

    pub fn scenario_kind(&self) -> Result<ScenarioKind> {
        match self.get("scenario", "kind").unwrap_or("single") {
            "single" => Ok(ScenarioKind::Single),
            "first_purchase" => Ok(ScenarioKind::FirstPurchase),
            "second_purchase" => Ok(ScenarioKind::SecondPurchase),
            "two_sales" => Ok(ScenarioKind::TwoSales),
            other => Err(Error::Config(format!("unknown scenario kind `{other}`"))),
        }
    }

    pub fn pricing_scenario(&self) -> Result<PricingScenario> {
        let s = "scenario";
        let scenario = PricingScenario {
            utility: self.utility()?,
            beta: self.required(s, "beta")?,
            endowment_t: self.required(s, "endowment_t")?,
            endowment_terminal: self.required(s, "endowment_terminal")?,
            holdings: self.parsed(s, "holdings")?.unwrap_or(0.0),
            payoff_mean: self.parsed(s, "payoff_mean")?.unwrap_or(0.0),
            payoff_variance: self.parsed(s, "payoff_variance")?.unwrap_or(0.0),
            price_variance: self.parsed(s, "price_variance")?.unwrap_or(0.0),
            dividend_mean: self.parsed(s, "dividend_mean")?.unwrap_or(0.0),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn two_trade_scenario(&self) -> Result<TwoTradeScenario> {
        let s = "scenario";
        let first = self.pricing_scenario()?;
        let payoff_autocorr: Option<f64> = self.parsed(s, "payoff_autocorr")?;
        let scenario = TwoTradeScenario {
            first,
            holdings2: self.required(s, "holdings2")?,
            payoff_mean2: self.parsed(s, "payoff_mean2")?.unwrap_or(first.payoff_mean),
            payoff_variance2: self
                .parsed(s, "payoff_variance2")?
                .unwrap_or(first.payoff_variance),
            price_variance2: self
                .parsed(s, "price_variance2")?
                .unwrap_or(first.price_variance),
            price_autocorr: self.parsed(s, "price_autocorr")?.unwrap_or(0.0),
            payoff_autocorr,
            payoff_mean12: self.parsed(s, "payoff_mean12")?,
            times: TradeTimes {
                first_purchase: self.parsed(s, "t1")?.unwrap_or(0.0),
                second_purchase: self.parsed(s, "t2")?.unwrap_or(1.0),
                first_sale: self.parsed(s, "sale1")?.unwrap_or(2.0),
                second_sale: match self.parsed(s, "sale2")? {
                    Some(t) => Some(t),
                    None => payoff_autocorr.map(|_| 3.0),
                },
            },
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn holdings_bounds(&self) -> Result<(f64, f64)> {
        let lo = self.parsed("scenario", "holdings_lo")?.unwrap_or(0.0);
        let hi = self
            .parsed("scenario", "holdings_hi")?
            .ok_or_else(|| Error::Config("missing `holdings_hi` in [scenario]".into()))?;
        Ok((lo, hi))
    }

    pub fn sim_spec(&self) -> Result<SimSpec> {
        let s = "simulate";
        let base: f64 = self.parsed(s, "base_price")?.unwrap_or(100.0);
        let price_model = match self.get(s, "price_model").unwrap_or("ar1") {
            "constant" => PriceModel::Constant { base },
            "ar1" => PriceModel::Ar1 {
                base,
                persistence: self.parsed(s, "persistence")?.unwrap_or(0.0),
                sigma: self.parsed(s, "price_sigma")?.unwrap_or(0.01),
            },
            other => return Err(Error::Config(format!("unknown price model `{other}`"))),
        };
        let median: f64 = self.parsed(s, "median_volume")?.unwrap_or(1.0);
        let volume_model = match self.get(s, "volume_model").unwrap_or("lognormal") {
            "constant" => VolumeModel::Constant { median },
            "lognormal" => VolumeModel::LogNormal {
                median,
                log_sigma: self.parsed(s, "volume_log_sigma")?.unwrap_or(0.5),
            },
            other => return Err(Error::Config(format!("unknown volume model `{other}`"))),
        };
        let seed = match self.parsed(s, "seed")? {
            Some(seed) => seed,
            None => self.parsed("", "seed")?.unwrap_or(0),
        };
        let spec = SimSpec {
            length: self.required(s, "length")?,
            seed,
            price_model,
            volume_model,
            pv_correlation: self.parsed(s, "pv_correlation")?.unwrap_or(0.0),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Single,
    FirstPurchase,
    SecondPurchase,
    TwoSales,
}
