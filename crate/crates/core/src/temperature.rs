//! Data temperature: Newton-style exponential cooling plus an access-driven
//! heating term that is inversely proportional to the update interval.
//!
//! Temperatures are updated lazily. An access only bumps a pending counter and
//! the temperature itself is recomputed once per window:
//!
//! ```text
//! T(t_n) = T(t_{n-1}) * exp(-k * w) + gamma * T_heat^4 * s / w
//! ```
//!
//! where `w = t_n - t_{n-1}` is the window and `s` the number of accesses seen
//! during it.

use crate::{Error, Result, Timestamp};

/// Size in bytes of an encoded [`TemperatureRecord`].
pub const ENCODED_RECORD_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureParams {
    /// Cooling rate `k`, per second.
    pub cooling_rate: f64,
    /// Heating rate `gamma` (dimensionless).
    pub heating_rate: f64,
    /// Heat-source temperature `T_heat`; also the temperature of fresh data.
    pub heat_source: f64,
    /// Update window `w` in seconds.
    pub window: i64,
}

impl Default for TemperatureParams {
    /// `k * w = 0.1`, `gamma = 1`, `T_heat = 2`, `w = 300 s`.
    fn default() -> Self {
        TemperatureParams {
            cooling_rate: 0.1 / 300.0,
            heating_rate: 1.0,
            heat_source: 2.0,
            window: 300,
        }
    }
}

impl TemperatureParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.cooling_rate) {
            return Err(Error::invalid(format!(
                "cooling rate must be > 0, got {}",
                self.cooling_rate
            )));
        }
        if !positive(self.heating_rate) {
            return Err(Error::invalid(format!(
                "heating rate must be > 0, got {}",
                self.heating_rate
            )));
        }
        if !positive(self.heat_source) {
            return Err(Error::invalid(format!(
                "heat-source temperature must be > 0, got {}",
                self.heat_source
            )));
        }
        if self.window <= 0 {
            return Err(Error::invalid(format!("window must be > 0, got {}", self.window)));
        }
        Ok(())
    }

    /// Per-window decay factor `exp(-k * w)`.
    pub fn window_decay(&self) -> f64 {
        (-self.cooling_rate * self.window as f64).exp()
    }
}

/// Per-segment temperature state.
///
/// An untracked record is one that was dropped after over-cooling; it carries
/// no timestamp or temperature until it is re-initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureRecord {
    pub last_query_ts: Timestamp,
    pub temperature: f64,
    pub pending_accesses: u32,
    pub tracked: bool,
}

impl TemperatureRecord {
    pub const UNTRACKED: TemperatureRecord = TemperatureRecord {
        last_query_ts: 0,
        temperature: 0.0,
        pending_accesses: 0,
        tracked: false,
    };

    /// Stops maintaining this record.
    pub fn drop_tracking(&mut self) {
        *self = TemperatureRecord::UNTRACKED;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeatClass {
    Hot,
    Cold,
    Overcooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatThresholds {
    pub hot: f64,
    pub overcooled: f64,
}

impl HeatThresholds {
    /// Hot at or above a fresh insert's temperature, over-cooled below 5 % of it.
    pub fn for_params(params: &TemperatureParams) -> Self {
        HeatThresholds {
            hot: params.heat_source,
            overcooled: 0.05 * params.heat_source,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.overcooled >= 0.0) || !(self.hot > self.overcooled) || !self.hot.is_finite() {
            return Err(Error::invalid(format!(
                "thresholds must satisfy hot > overcooled >= 0, got hot={} overcooled={}",
                self.hot, self.overcooled
            )));
        }
        Ok(())
    }
}

impl Default for HeatThresholds {
    fn default() -> Self {
        HeatThresholds::for_params(&TemperatureParams::default())
    }
}

/// Cooling over `delta` seconds: `temperature * exp(-k * delta)`.
pub fn decay(temperature: f64, delta: f64, cooling_rate: f64) -> Result<f64> {
    if delta < 0.0 || delta.is_nan() {
        return Err(Error::invalid(format!("elapsed time must be >= 0, got {delta}")));
    }
    Ok(temperature * (-cooling_rate * delta).exp())
}

/// Heating contributed by `accesses` accesses within an interval of `delta`
/// seconds: `gamma * T_heat^4 * s / delta`.
pub fn heat_increment(heat_source: f64, accesses: u32, delta: f64, heating_rate: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("heating interval must be > 0, got {delta}")));
    }
    Ok(heating_rate * heat_source.powi(4) * f64::from(accesses) / delta)
}

/// Fresh record for data inserted (or re-admitted) at `now`.
pub fn init_record(now: Timestamp, params: &TemperatureParams) -> TemperatureRecord {
    TemperatureRecord {
        last_query_ts: now,
        temperature: params.heat_source,
        pending_accesses: 0,
        tracked: true,
    }
}

/// Counts one access; the temperature is left alone until the window closes.
pub fn record_access(record: &TemperatureRecord) -> TemperatureRecord {
    debug_assert!(record.tracked, "access recorded on an untracked record");
    TemperatureRecord {
        pending_accesses: record.pending_accesses.saturating_add(1),
        ..*record
    }
}

/// Closes the window ending at `now`.
pub fn update_temperature(
    record: &TemperatureRecord,
    now: Timestamp,
    params: &TemperatureParams,
) -> Result<TemperatureRecord> {
    if !record.tracked {
        return Err(Error::Contract("update of an untracked record".into()));
    }
    let elapsed = now - record.last_query_ts;
    if elapsed != params.window {
        return Err(Error::Contract(format!(
            "update at {now} is {elapsed} s after the last update, expected the {} s window",
            params.window
        )));
    }
    let window = params.window as f64;
    let cooled = decay(record.temperature, window, params.cooling_rate)?;
    let heated = heat_increment(params.heat_source, record.pending_accesses, window, params.heating_rate)?;
    Ok(TemperatureRecord {
        last_query_ts: now,
        temperature: cooled + heated,
        pending_accesses: 0,
        tracked: true,
    })
}

/// Updates every tracked record at the window boundary `now`; untracked
/// records are skipped.
pub fn window_tick(records: &mut [TemperatureRecord], now: Timestamp, params: &TemperatureParams) -> Result<()> {
    for record in records.iter_mut().filter(|r| r.tracked) {
        *record = update_temperature(record, now, params)?;
    }
    Ok(())
}

pub fn classify(temperature: f64, thresholds: &HeatThresholds) -> Result<HeatClass> {
    thresholds.validate()?;
    Ok(if temperature >= thresholds.hot {
        HeatClass::Hot
    } else if temperature < thresholds.overcooled {
        HeatClass::Overcooled
    } else {
        HeatClass::Cold
    })
}

/// How accesses heat a record. The interval-aware model divides the heating by
/// the update interval; the constant model adds a fixed amount per access
/// regardless of spacing (the baseline the interval-aware model improves on).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatingModel {
    IntervalAware,
    Constant { per_access: f64 },
}

impl HeatingModel {
    /// Constant model calibrated so that one access per nominal window heats
    /// exactly as much as the interval-aware model would.
    pub fn constant_for(params: &TemperatureParams) -> Self {
        HeatingModel::Constant {
            per_access: params.heating_rate * params.heat_source.powi(4) / params.window as f64,
        }
    }

    /// One window of the recurrence with `accesses` accesses.
    pub fn step(&self, temperature: f64, accesses: f64, params: &TemperatureParams) -> f64 {
        let cooled = temperature * params.window_decay();
        match *self {
            HeatingModel::IntervalAware => {
                cooled + params.heating_rate * params.heat_source.powi(4) * accesses / params.window as f64
            }
            HeatingModel::Constant { per_access } => cooled + per_access * accesses,
        }
    }

    pub fn update(
        &self,
        record: &TemperatureRecord,
        now: Timestamp,
        params: &TemperatureParams,
    ) -> Result<TemperatureRecord> {
        match self {
            HeatingModel::IntervalAware => update_temperature(record, now, params),
            HeatingModel::Constant { .. } => {
                if !record.tracked {
                    return Err(Error::Contract("update of an untracked record".into()));
                }
                if now - record.last_query_ts != params.window {
                    return Err(Error::Contract(format!(
                        "update at {now} is off the {} s window boundary",
                        params.window
                    )));
                }
                Ok(TemperatureRecord {
                    last_query_ts: now,
                    temperature: self.step(record.temperature, f64::from(record.pending_accesses), params),
                    pending_accesses: 0,
                    tracked: true,
                })
            }
        }
    }
}

/// Big-endian `u32` seconds followed by the temperature as big-endian
/// IEEE-754 binary32.
pub fn encode_record(record: &TemperatureRecord) -> Result<[u8; ENCODED_RECORD_LEN]> {
    if !record.tracked {
        return Err(Error::Encoding("untracked records have no payload".into()));
    }
    let ts = u32::try_from(record.last_query_ts)
        .map_err(|_| Error::Encoding(format!("timestamp {} does not fit in 32 bits", record.last_query_ts)))?;
    let mut out = [0u8; ENCODED_RECORD_LEN];
    out[..4].copy_from_slice(&ts.to_be_bytes());
    out[4..].copy_from_slice(&(record.temperature as f32).to_be_bytes());
    Ok(out)
}

pub fn decode_record(bytes: &[u8]) -> Result<TemperatureRecord> {
    let bytes: &[u8; ENCODED_RECORD_LEN] = bytes
        .try_into()
        .map_err(|_| Error::Encoding(format!("expected {ENCODED_RECORD_LEN} bytes, got {}", bytes.len())))?;
    let ts = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let temperature = f32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    Ok(TemperatureRecord {
        last_query_ts: Timestamp::from(ts),
        temperature: f64::from(temperature),
        pending_accesses: 0,
        tracked: true,
    })
}
