//! C ABI over the `thermotier` library.
//!
//! Every fallible function returns a [`TtStatus`]; on failure the message is
//! available from [`tt_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_new`/`*_fit` and released with `*_free`.
//! Panics never cross the boundary; they surface as `TT_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use thermotier::cluster::dtw_distance;
use thermotier::forecast::{ensemble_predict, fit_ensemble, EnsembleModel, ForecastConfig, TrainConfig};
use thermotier::frequent::CounterTable;
use thermotier::harness::{ExperimentConfig, Policy, Prepared};
use thermotier::temperature::{
    decode_record, encode_record, heat_increment, init_record, record_access, update_temperature, TemperatureParams,
    TemperatureRecord, ENCODED_RECORD_LEN,
};
use thermotier::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Contract = 3,
    Encoding = 4,
    Config = 5,
    Training = 6,
    Planning = 7,
    Conflict = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

impl From<&Error> for TtStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Schema(_) => TtStatus::InvalidArgument,
            Error::Contract(_) => TtStatus::Contract,
            Error::Encoding(_) => TtStatus::Encoding,
            Error::Config(_) | Error::Parse { .. } => TtStatus::Config,
            Error::Training(_) => TtStatus::Training,
            Error::Planning(_) => TtStatus::Planning,
            Error::Conflict { .. } => TtStatus::Conflict,
            Error::Ingest(_) | Error::Io(_) => TtStatus::Io,
            Error::AtTick { source, .. } => TtStatus::from(source.as_ref()),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(TtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(TtStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TtStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TtStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// A null pointer is accepted for an empty slice.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    let s = deref(p, what)?;
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(TtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failure on the calling thread, or null if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn tt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Temperature

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtTemperatureParams {
    /// Per second.
    pub cooling_rate: f64,
    pub heating_rate: f64,
    pub heat_source: f64,
    /// Seconds.
    pub window: i64,
}

impl From<TtTemperatureParams> for TemperatureParams {
    fn from(p: TtTemperatureParams) -> Self {
        TemperatureParams {
            cooling_rate: p.cooling_rate,
            heating_rate: p.heating_rate,
            heat_source: p.heat_source,
            window: p.window,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtTemperatureRecord {
    pub last_query_ts: i64,
    pub temperature: f64,
    pub pending_accesses: u32,
    pub tracked: bool,
}

impl From<TemperatureRecord> for TtTemperatureRecord {
    fn from(r: TemperatureRecord) -> Self {
        TtTemperatureRecord {
            last_query_ts: r.last_query_ts,
            temperature: r.temperature,
            pending_accesses: r.pending_accesses,
            tracked: r.tracked,
        }
    }
}

impl From<TtTemperatureRecord> for TemperatureRecord {
    fn from(r: TtTemperatureRecord) -> Self {
        TemperatureRecord {
            last_query_ts: r.last_query_ts,
            temperature: r.temperature,
            pending_accesses: r.pending_accesses,
            tracked: r.tracked,
        }
    }
}

unsafe fn params(p: *const TtTemperatureParams) -> Result<TemperatureParams, Failure> {
    let p = TemperatureParams::from(*deref(p, "params")?);
    p.validate()?;
    Ok(p)
}

#[no_mangle]
pub extern "C" fn tt_temperature_params_default() -> TtTemperatureParams {
    let p = TemperatureParams::default();
    TtTemperatureParams {
        cooling_rate: p.cooling_rate,
        heating_rate: p.heating_rate,
        heat_source: p.heat_source,
        window: p.window,
    }
}

/// Fresh record for data inserted at `now`.
#[no_mangle]
pub unsafe extern "C" fn tt_record_init(
    now: i64,
    params_: *const TtTemperatureParams,
    out: *mut TtTemperatureRecord,
) -> TtStatus {
    guard(|| {
        let p = params(params_)?;
        *deref_mut(out, "out")? = init_record(now, &p).into();
        Ok(())
    })
}

/// Counts one access in place.
#[no_mangle]
pub unsafe extern "C" fn tt_record_access(record: *mut TtTemperatureRecord) -> TtStatus {
    guard(|| {
        let r = deref_mut(record, "record")?;
        if !r.tracked {
            return Err(Error::Contract("access on an untracked record".into()).into());
        }
        *r = record_access(&(*r).into()).into();
        Ok(())
    })
}

/// Closes the window ending at `now` in place; the record is unchanged on
/// failure.
#[no_mangle]
pub unsafe extern "C" fn tt_record_update(
    record: *mut TtTemperatureRecord,
    now: i64,
    params_: *const TtTemperatureParams,
) -> TtStatus {
    guard(|| {
        let p = params(params_)?;
        let r = deref_mut(record, "record")?;
        *r = update_temperature(&(*r).into(), now, &p)?.into();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_heat_increment(
    heat_source: f64,
    accesses: u32,
    delta: f64,
    heating_rate: f64,
    out: *mut f64,
) -> TtStatus {
    guard(|| {
        *deref_mut(out, "out")? = heat_increment(heat_source, accesses, delta, heating_rate)?;
        Ok(())
    })
}

/// Size of an encoded record in bytes.
#[no_mangle]
pub extern "C" fn tt_record_encoded_len() -> usize {
    ENCODED_RECORD_LEN
}

/// Writes the 8-byte big-endian encoding to `out`, which must hold
/// `tt_record_encoded_len()` bytes.
#[no_mangle]
pub unsafe extern "C" fn tt_record_encode(
    record: *const TtTemperatureRecord,
    out: *mut u8,
    out_len: usize,
) -> TtStatus {
    guard(|| {
        let r = deref(record, "record")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < ENCODED_RECORD_LEN {
            return Err(Failure(
                TtStatus::BufferTooSmall,
                format!("need {ENCODED_RECORD_LEN} bytes"),
            ));
        }
        let bytes = encode_record(&(*r).into())?;
        ptr::copy_nonoverlapping(bytes.as_ptr(), out, ENCODED_RECORD_LEN);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_record_decode(bytes: *const u8, len: usize, out: *mut TtTemperatureRecord) -> TtStatus {
    guard(|| {
        let b = slice(bytes, len, "bytes")?;
        *deref_mut(out, "out")? = decode_record(b)?.into();
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// DTW

/// Unconstrained DTW distance with absolute-difference cost.
#[no_mangle]
pub unsafe extern "C" fn tt_dtw_distance(
    a: *const f64,
    a_len: usize,
    b: *const f64,
    b_len: usize,
    out: *mut f64,
) -> TtStatus {
    guard(|| {
        let d = dtw_distance(slice(a, a_len, "a")?, slice(b, b_len, "b")?)?;
        *deref_mut(out, "out")? = d;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Misra-Gries

/// Frequent-bucket counter table.
pub struct TtCounterTable {
    inner: CounterTable,
}

/// New table holding at most `capacity - 1` counters.
#[no_mangle]
pub unsafe extern "C" fn tt_counter_table_new(capacity: usize, out: *mut *mut TtCounterTable) -> TtStatus {
    guard(|| {
        let slot = deref_mut(out, "out")?;
        let inner = CounterTable::new(capacity)?;
        *slot = Box::into_raw(Box::new(TtCounterTable { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_counter_table_free(table: *mut TtCounterTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tt_counter_table_process(table: *mut TtCounterTable, element: i64) -> TtStatus {
    guard(|| {
        deref_mut(table, "table")?.inner.process(element);
        Ok(())
    })
}

/// Counter of `bucket`, zero when it holds none.
#[no_mangle]
pub unsafe extern "C" fn tt_counter_table_counter(
    table: *const TtCounterTable,
    bucket: i64,
    out: *mut u64,
) -> TtStatus {
    guard(|| {
        let c = deref(table, "table")?.inner.counter(bucket);
        *deref_mut(out, "out")? = c;
        Ok(())
    })
}

/// Number of live counters; 0 for a null table.
#[no_mangle]
pub unsafe extern "C" fn tt_counter_table_len(table: *const TtCounterTable) -> usize {
    table.as_ref().map_or(0, |t| t.inner.len())
}

/// Elements processed so far; 0 for a null table.
#[no_mangle]
pub unsafe extern "C" fn tt_counter_table_processed(table: *const TtCounterTable) -> u64 {
    table.as_ref().map_or(0, |t| t.inner.processed())
}

// ---------------------------------------------------------------------------
// Forecasting

/// Fitted linear + LSTM ensemble.
pub struct TtForecaster {
    model: EnsembleModel,
}

/// Fits an ensemble on `history`. `epochs` of 0 selects the default.
#[no_mangle]
pub unsafe extern "C" fn tt_forecaster_fit(
    history: *const f64,
    len: usize,
    lag: usize,
    hidden: usize,
    epochs: usize,
    seed: u64,
    out: *mut *mut TtForecaster,
) -> TtStatus {
    guard(|| {
        let slot = deref_mut(out, "out")?;
        let defaults = TrainConfig::default();
        let config = ForecastConfig {
            lag,
            hidden,
            train: TrainConfig {
                epochs: if epochs == 0 { defaults.epochs } else { epochs },
                seed,
                ..defaults
            },
            ..ForecastConfig::default()
        };
        let model = fit_ensemble(slice(history, len, "history")?, &config)?;
        *slot = Box::into_raw(Box::new(TtForecaster { model }));
        Ok(())
    })
}

/// Restores a forecaster from [`tt_forecaster_snapshot`] text.
#[no_mangle]
pub unsafe extern "C" fn tt_forecaster_from_snapshot(text: *const c_char, out: *mut *mut TtForecaster) -> TtStatus {
    guard(|| {
        let slot = deref_mut(out, "out")?;
        let model = EnsembleModel::from_snapshot(string(text, "text")?)?;
        *slot = Box::into_raw(Box::new(TtForecaster { model }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_forecaster_free(forecaster: *mut TtForecaster) {
    if !forecaster.is_null() {
        drop(Box::from_raw(forecaster));
    }
}

/// Writes `steps` predictions following `history` to `out`.
#[no_mangle]
pub unsafe extern "C" fn tt_forecaster_predict(
    forecaster: *const TtForecaster,
    history: *const f64,
    len: usize,
    steps: usize,
    out: *mut f64,
    out_len: usize,
) -> TtStatus {
    guard(|| {
        let f = deref(forecaster, "forecaster")?;
        let history = slice(history, len, "history")?;
        if steps == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < steps {
            return Err(Failure(TtStatus::BufferTooSmall, format!("need {steps} values")));
        }
        if history.is_empty() {
            return Err(Error::InvalidArgument("empty history".into()).into());
        }
        let p = ensemble_predict(&f.model, history, steps);
        ptr::copy_nonoverlapping(p.as_ptr(), out, steps);
        Ok(())
    })
}

/// Member weights `(linear, lstm)`.
#[no_mangle]
pub unsafe extern "C" fn tt_forecaster_weights(
    forecaster: *const TtForecaster,
    w_linear: *mut f64,
    w_lstm: *mut f64,
) -> TtStatus {
    guard(|| {
        let (a, b) = deref(forecaster, "forecaster")?.model.weights;
        *deref_mut(w_linear, "w_linear")? = a;
        *deref_mut(w_lstm, "w_lstm")? = b;
        Ok(())
    })
}

/// Copies the NUL-terminated snapshot text into `buf`. `required` receives
/// the buffer size needed, NUL included; with a short buffer the call returns
/// `TT_STATUS_BUFFER_TOO_SMALL` and writes nothing else.
#[no_mangle]
pub unsafe extern "C" fn tt_forecaster_snapshot(
    forecaster: *const TtForecaster,
    buf: *mut c_char,
    buf_len: usize,
    required: *mut usize,
) -> TtStatus {
    guard(|| {
        let text = deref(forecaster, "forecaster")?.model.to_snapshot();
        let need = text.len() + 1;
        *deref_mut(required, "required")? = need;
        if buf.is_null() || buf_len < need {
            return Err(Failure(TtStatus::BufferTooSmall, format!("need {need} bytes")));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Experiments

/// Dataset and workload prepared from one configuration.
pub struct TtExperiment {
    prepared: Prepared,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TtRunSummary {
    pub capacity: u64,
    pub queries: u64,
    pub hits: u64,
    pub misses: u64,
    pub preheat_actions: u64,
    pub demote_actions: u64,
    pub summarize_actions: u64,
    pub forecast_calls: u64,
    pub frequent_calls: u64,
    pub hit_rate: f64,
}

/// Builds the dataset and workload from `key = value` configuration text;
/// null text selects the defaults.
#[no_mangle]
pub unsafe extern "C" fn tt_experiment_new(config_text: *const c_char, out: *mut *mut TtExperiment) -> TtStatus {
    guard(|| {
        let slot = deref_mut(out, "out")?;
        let config = if config_text.is_null() {
            ExperimentConfig::default()
        } else {
            ExperimentConfig::from_text(string(config_text, "config_text")?)?
        };
        let prepared = Prepared::new(&config)?;
        *slot = Box::into_raw(Box::new(TtExperiment { prepared }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_experiment_free(experiment: *mut TtExperiment) {
    if !experiment.is_null() {
        drop(Box::from_raw(experiment));
    }
}

/// Points in the experiment's dataset; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tt_experiment_dataset_points(experiment: *const TtExperiment) -> u64 {
    experiment.as_ref().map_or(0, |e| e.prepared.dataset_points)
}

/// Simulates `policy` (TSCABINET, TSCABINET_NO_FORECAST, TITLE or LRU) with
/// `capacity` points across both tiers; a capacity of 0 selects the
/// configured default.
#[no_mangle]
pub unsafe extern "C" fn tt_experiment_run(
    experiment: *const TtExperiment,
    policy: *const c_char,
    capacity: u64,
    out: *mut TtRunSummary,
) -> TtStatus {
    guard(|| {
        let e = deref(experiment, "experiment")?;
        let policy: Policy = string(policy, "policy")?.parse()?;
        let out = deref_mut(out, "out")?;
        let capacity = if capacity == 0 {
            e.prepared.default_capacity()
        } else {
            capacity
        };
        let r = e.prepared.run(policy, capacity, None)?;
        *out = TtRunSummary {
            capacity: r.capacity,
            queries: r.queries,
            hits: r.hits,
            misses: r.misses,
            preheat_actions: r.preheat_actions,
            demote_actions: r.demote_actions,
            summarize_actions: r.summarize_actions,
            forecast_calls: r.forecast_calls,
            frequent_calls: r.frequent_calls,
            hit_rate: r.hit_rate(),
        };
        Ok(())
    })
}
