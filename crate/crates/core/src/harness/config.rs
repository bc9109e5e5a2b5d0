//! Flat `key = value` experiment configuration.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::forecast::{ForecastConfig, TrainConfig};
use crate::temperature::{HeatThresholds, TemperatureParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Policy {
    TsCabinet,
    NoForecast,
    Title,
    Lru,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::TsCabinet, Policy::NoForecast, Policy::Title, Policy::Lru];

    pub fn name(self) -> &'static str {
        match self {
            Policy::TsCabinet => "TSCABINET",
            Policy::NoForecast => "TSCABINET_NO_FORECAST",
            Policy::Title => "TITLE",
            Policy::Lru => "LRU",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "TSCABINET" => Ok(Policy::TsCabinet),
            "TSCABINET_NO_FORECAST" | "NO_FORECAST" => Ok(Policy::NoForecast),
            "TITLE" => Ok(Policy::Title),
            "LRU" => Ok(Policy::Lru),
            _ => Err(Error::Config(format!("unknown policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    /// Every template follows a daily cycle with one peak at a
    /// template-specific hour.
    Cycles,
    /// Templates draw uniformly from cycles, stability, spike and chaos.
    Mixed,
}

impl FromStr for WorkloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cycles" => Ok(WorkloadKind::Cycles),
            "mixed" => Ok(WorkloadKind::Mixed),
            _ => Err(Error::Config(format!("unknown workload `{s}` (cycles | mixed)"))),
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkloadKind::Cycles => "cycles",
            WorkloadKind::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// CSV to ingest; `None` generates the synthetic dataset.
    pub dataset: Option<PathBuf>,
    pub dataset_series: u32,
    pub dataset_points: u32,
    pub dataset_days: u32,
    pub dataset_start: i64,
    pub seed: u64,
    pub policy: Policy,
    /// Total CLOUD + EDGE points; `None` uses `capacity_fraction` of the data.
    pub capacity: Option<u64>,
    pub capacity_fraction: f64,
    /// Points copied per planning round; `None` means equal to the capacity.
    pub preheat_budget: Option<u64>,
    pub temperature: TemperatureParams,
    pub thresholds: HeatThresholds,
    /// Heat per access for the constant-heating baseline; `None` calibrates
    /// it to the interval-aware model at the nominal window.
    pub title_per_access: Option<f64>,
    pub workload: WorkloadKind,
    pub templates_per_kind: usize,
    pub peak_rate: f64,
    pub peak_width: i64,
    pub base_rate: f64,
    /// Candidate query range lengths in seconds.
    pub durations: Vec<i64>,
    pub sim_days: u32,
    pub warmup_days: u32,
    pub forecast: ForecastConfig,
    pub train_days: u32,
    pub retrain_every: usize,
    pub plan_horizon: usize,
    pub eval_stride: usize,
    pub dtw_window: usize,
    pub cluster_rho: f64,
    pub cluster_timeout: i64,
    pub record_capacity: usize,
    pub frequent_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let temperature = TemperatureParams::default();
        ExperimentConfig {
            dataset: None,
            dataset_series: 20,
            dataset_points: 10_000,
            dataset_days: 90,
            dataset_start: 1_406_851_200,
            seed: 7,
            policy: Policy::TsCabinet,
            capacity: None,
            capacity_fraction: 0.1,
            preheat_budget: None,
            temperature,
            thresholds: HeatThresholds {
                hot: 1e-3,
                overcooled: 0.0,
            },
            title_per_access: None,
            workload: WorkloadKind::Cycles,
            templates_per_kind: 2,
            peak_rate: 2.0,
            peak_width: 2 * 3600,
            base_rate: 0.0,
            durations: vec![3600, 6 * 3600, 86_400, 7 * 86_400],
            sim_days: 10,
            warmup_days: 3,
            forecast: ForecastConfig {
                lag: 288,
                train: TrainConfig {
                    epochs: 5,
                    ..TrainConfig::default()
                },
                ..ForecastConfig::default()
            },
            train_days: 7,
            retrain_every: 288,
            plan_horizon: 12,
            eval_stride: 12,
            dtw_window: 576,
            cluster_rho: 10.0,
            cluster_timeout: 86_400,
            record_capacity: 64,
            frequent_k: 4096,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|x| parse(key, x.trim())).collect()
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn show<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("auto".into(), |v| v.to_string())
}

impl ExperimentConfig {
    /// Every key, in documentation order.
    pub const KEYS: [&'static str; 40] = [
        "dataset",
        "dataset_series",
        "dataset_points",
        "dataset_days",
        "dataset_start",
        "seed",
        "policy",
        "capacity",
        "capacity_fraction",
        "preheat_budget",
        "cooling_rate",
        "heating_rate",
        "heat_source",
        "window",
        "theta_hot",
        "theta_overcooled",
        "title_per_access",
        "workload",
        "templates_per_kind",
        "peak_rate",
        "peak_width",
        "base_rate",
        "durations",
        "sim_days",
        "warmup_days",
        "lag",
        "hidden",
        "lstm_epochs",
        "learning_rate",
        "validation_fraction",
        "horizons",
        "train_days",
        "retrain_every",
        "plan_horizon",
        "eval_stride",
        "dtw_window",
        "cluster_rho",
        "cluster_timeout",
        "record_capacity",
        "frequent_k",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = (!v.is_empty() && v != "auto").then(|| PathBuf::from(v)),
            "dataset_series" => self.dataset_series = parse(key, v)?,
            "dataset_points" => self.dataset_points = parse(key, v)?,
            "dataset_days" => self.dataset_days = parse(key, v)?,
            "dataset_start" => self.dataset_start = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "policy" => self.policy = v.parse()?,
            "capacity" => self.capacity = optional(key, v)?,
            "capacity_fraction" => self.capacity_fraction = parse(key, v)?,
            "preheat_budget" => self.preheat_budget = optional(key, v)?,
            "cooling_rate" => self.temperature.cooling_rate = parse(key, v)?,
            "heating_rate" => self.temperature.heating_rate = parse(key, v)?,
            "heat_source" => self.temperature.heat_source = parse(key, v)?,
            "window" => self.temperature.window = parse(key, v)?,
            "theta_hot" => self.thresholds.hot = parse(key, v)?,
            "theta_overcooled" => self.thresholds.overcooled = parse(key, v)?,
            "title_per_access" => self.title_per_access = optional(key, v)?,
            "workload" => self.workload = v.parse()?,
            "templates_per_kind" => self.templates_per_kind = parse(key, v)?,
            "peak_rate" => self.peak_rate = parse(key, v)?,
            "peak_width" => self.peak_width = parse(key, v)?,
            "base_rate" => self.base_rate = parse(key, v)?,
            "durations" => self.durations = parse_list(key, v)?,
            "sim_days" => self.sim_days = parse(key, v)?,
            "warmup_days" => self.warmup_days = parse(key, v)?,
            "lag" => self.forecast.lag = parse(key, v)?,
            "hidden" => self.forecast.hidden = parse(key, v)?,
            "lstm_epochs" => self.forecast.train.epochs = parse(key, v)?,
            "learning_rate" => self.forecast.train.learning_rate = parse(key, v)?,
            "validation_fraction" => self.forecast.validation_fraction = parse(key, v)?,
            "horizons" => self.forecast.horizons = parse_list(key, v)?,
            "train_days" => self.train_days = parse(key, v)?,
            "retrain_every" => self.retrain_every = parse(key, v)?,
            "plan_horizon" => self.plan_horizon = parse(key, v)?,
            "eval_stride" => self.eval_stride = parse(key, v)?,
            "dtw_window" => self.dtw_window = parse(key, v)?,
            "cluster_rho" => self.cluster_rho = parse(key, v)?,
            "cluster_timeout" => self.cluster_timeout = parse(key, v)?,
            "record_capacity" => self.record_capacity = parse(key, v)?,
            "frequent_k" => self.frequent_k = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let f = &self.forecast;
        Some(match key {
            "dataset" => self.dataset.as_ref().map_or("auto".into(), |p| p.display().to_string()),
            "dataset_series" => self.dataset_series.to_string(),
            "dataset_points" => self.dataset_points.to_string(),
            "dataset_days" => self.dataset_days.to_string(),
            "dataset_start" => self.dataset_start.to_string(),
            "seed" => self.seed.to_string(),
            "policy" => self.policy.to_string(),
            "capacity" => show(&self.capacity),
            "capacity_fraction" => self.capacity_fraction.to_string(),
            "preheat_budget" => show(&self.preheat_budget),
            "cooling_rate" => self.temperature.cooling_rate.to_string(),
            "heating_rate" => self.temperature.heating_rate.to_string(),
            "heat_source" => self.temperature.heat_source.to_string(),
            "window" => self.temperature.window.to_string(),
            "theta_hot" => self.thresholds.hot.to_string(),
            "theta_overcooled" => self.thresholds.overcooled.to_string(),
            "title_per_access" => show(&self.title_per_access),
            "workload" => self.workload.to_string(),
            "templates_per_kind" => self.templates_per_kind.to_string(),
            "peak_rate" => self.peak_rate.to_string(),
            "peak_width" => self.peak_width.to_string(),
            "base_rate" => self.base_rate.to_string(),
            "durations" => join(&self.durations),
            "sim_days" => self.sim_days.to_string(),
            "warmup_days" => self.warmup_days.to_string(),
            "lag" => f.lag.to_string(),
            "hidden" => f.hidden.to_string(),
            "lstm_epochs" => f.train.epochs.to_string(),
            "learning_rate" => f.train.learning_rate.to_string(),
            "validation_fraction" => f.validation_fraction.to_string(),
            "horizons" => join(&f.horizons),
            "train_days" => self.train_days.to_string(),
            "retrain_every" => self.retrain_every.to_string(),
            "plan_horizon" => self.plan_horizon.to_string(),
            "eval_stride" => self.eval_stride.to_string(),
            "dtw_window" => self.dtw_window.to_string(),
            "cluster_rho" => self.cluster_rho.to_string(),
            "cluster_timeout" => self.cluster_timeout.to_string(),
            "record_capacity" => self.record_capacity.to_string(),
            "frequent_k" => self.frequent_k.to_string(),
            _ => return None,
        })
    }

    /// The effective configuration in the file format; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in Self::KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed key"));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        self.temperature.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.thresholds.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.forecast.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(p) = &self.dataset {
            if !p.exists() {
                return Err(Error::Config(format!("dataset {} does not exist", p.display())));
            }
        }
        if self.dataset_series == 0 || self.dataset_points == 0 || self.dataset_days == 0 {
            return fail("dataset_series, dataset_points and dataset_days must be > 0");
        }
        if !(0.0..=1.0).contains(&self.capacity_fraction) {
            return fail("capacity_fraction must be in [0, 1]");
        }
        if self.preheat_budget == Some(0) {
            return fail("preheat_budget must be > 0");
        }
        if self.title_per_access.is_some_and(|v| !(v > 0.0)) {
            return fail("title_per_access must be > 0");
        }
        if self.templates_per_kind == 0 || self.peak_width <= 0 || !(self.peak_rate >= 0.0) || !(self.base_rate >= 0.0)
        {
            return fail("templates_per_kind and peak_width must be > 0, rates >= 0");
        }
        if self.durations.is_empty() || self.durations.iter().any(|&d| d < 0) {
            return fail("durations must be a non-empty list of lengths >= 0");
        }
        if self.sim_days == 0 || self.warmup_days >= self.sim_days || self.sim_days > self.dataset_days {
            return fail("need 0 <= warmup_days < sim_days <= dataset_days");
        }
        if self.train_days == 0 || self.retrain_every == 0 || self.plan_horizon == 0 || self.eval_stride == 0 {
            return fail("train_days, retrain_every, plan_horizon and eval_stride must be > 0");
        }
        if self.dtw_window == 0 || !(self.cluster_rho > 0.0) || self.cluster_timeout <= 0 {
            return fail("dtw_window, cluster_rho and cluster_timeout must be > 0");
        }
        if self.record_capacity == 0 || self.frequent_k < 2 {
            return fail("record_capacity must be > 0 and frequent_k >= 2");
        }
        if self.forecast.interval != self.temperature.window {
            return fail("the forecast interval must equal the temperature window");
        }
        Ok(())
    }

    pub fn horizons(&self) -> &[usize] {
        &self.forecast.horizons
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = c.to_text();
        assert_eq!(ExperimentConfig::from_text(&text).unwrap(), c);
        for k in ExperimentConfig::KEYS {
            assert!(text.contains(&format!("{k} = ")), "{k}");
        }
    }

    #[test]
    fn overrides_and_comments() {
        let c = ExperimentConfig::from_text(
            "# comment\nseed = 11\npolicy = title # inline\ncapacity = 500\nhorizons = 1, 6, 12\n",
        )
        .unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.policy, Policy::Title);
        assert_eq!(c.capacity, Some(500));
        assert_eq!(c.forecast.horizons, vec![1, 6, 12]);
    }

    #[test]
    fn errors_are_config_errors() {
        for bad in [
            "nonsense = 1",
            "seed = x",
            "seed",
            "policy = fifo",
            "horizons = 3,2",
            "warmup_days = 10",
            "dataset = /no/such/file.csv",
        ] {
            let e = ExperimentConfig::from_text(bad).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{bad}: {e}");
            assert!(e.is_config());
        }
    }

    #[test]
    fn policy_names() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        assert_eq!("no-forecast".parse::<Policy>().unwrap(), Policy::NoForecast);
    }
}
