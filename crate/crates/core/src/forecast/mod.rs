//! Per-cluster arrival-rate forecasting.

pub mod ensemble;
pub mod linear;
pub mod lstm;
pub mod metrics;

pub use ensemble::{combine, compute_weights, ensemble_predict, fit_ensemble, EnsembleModel, LstmForecaster};
pub use linear::{fit_linear, LinearModel, RIDGE_FALLBACK};
pub use lstm::{train_lstm, LstmModel, LstmState, TrainConfig};
pub use metrics::{evaluate_horizons, metrics, naive_forecast, write_metrics_csv, HorizonMetrics, Metrics, MetricsRow};

use crate::{Error, Result};

/// Evaluation horizons in intervals: 5 minutes up to 12 hours.
pub const DEFAULT_HORIZONS: [usize; 8] = [1, 2, 3, 6, 12, 36, 72, 144];

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    /// Seconds per interval.
    pub interval: i64,
    pub horizons: Vec<usize>,
    /// Linear model lag in intervals.
    pub lag: usize,
    pub hidden: usize,
    pub train: TrainConfig,
    /// Fraction of the history held out to weight the ensemble.
    pub validation_fraction: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            interval: 300,
            horizons: DEFAULT_HORIZONS.to_vec(),
            lag: 12,
            hidden: 8,
            train: TrainConfig::default(),
            validation_fraction: 0.2,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval <= 0 {
            return Err(Error::invalid("forecast interval must be > 0"));
        }
        if self.horizons.is_empty() || self.horizons[0] == 0 || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "horizons must be non-empty, positive and strictly increasing",
            ));
        }
        if self.lag == 0 || self.hidden == 0 {
            return Err(Error::invalid("lag and hidden size must be >= 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation fraction must be in (0, 1)"));
        }
        Ok(())
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.last().copied().unwrap_or(0)
    }
}
