//! C ABI over the `devperf` scoring library.
//!
//! Every fallible function returns a [`DpStatus`]. On failure a message is
//! kept per thread and can be read with [`dp_last_error`]. Handles are
//! opaque and must be released with their `_free` function. Matrices are
//! row-major `f64` arrays with columns in schema order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use devperf::engine::{map_tier, Engine, Event, TierThresholds, TriggerConfig};
use devperf::evaluate::{evaluate_multilevel, evaluate_snapshot};
use devperf::forecast::{self, ArimaOrder, Criterion};
use devperf::schema::{builtin_schema, parse_schema};
use devperf::smooth::{self, SmoothParams};
use devperf::{DecisionMatrix, FeatureSchema};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Compute = 4,
    Panic = 5,
}

/// Smoother selector for [`dp_smooth`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpSmoother {
    Sma = 0,
    Wma = 1,
    WmaCorrected = 2,
    Hma = 3,
}

/// Opaque feature schema.
pub struct DpSchema(FeatureSchema);

/// Opaque scoring engine.
pub struct DpEngine(Engine);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type Failure = (DpStatus, String);

fn fail(status: DpStatus, e: impl ToString) -> Failure {
    (status, e.to_string())
}

/// Runs `f`, recording its error message and converting panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    fail(DpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(DpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_slice<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

fn matrix(schema: &FeatureSchema, data: &[f64], nrows: usize) -> Result<DecisionMatrix, Failure> {
    let m = schema.len();
    if data.len() != nrows * m {
        return Err(fail(DpStatus::InvalidArgument, format!("expected {nrows} x {m} values")));
    }
    let rows = data.chunks(m.max(1)).map(<[f64]>::to_vec).collect();
    DecisionMatrix::from_unnamed_rows(schema.names().map(String::from).collect(), rows)
        .map_err(|e| fail(DpStatus::InvalidArgument, e))
}

/// Message of the most recent failure on this thread, or null. Successful
/// calls clear it. The pointer is valid until the next call into this
/// library on the same thread.
#[no_mangle]
pub extern "C" fn dp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads the built-in 22-indicator schema.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_schema_builtin(out: *mut *mut DpSchema) -> DpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(DpSchema(builtin_schema())));
        Ok(())
    })
}

/// Parses a TOML schema document.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_schema_parse(text: *const c_char, out: *mut *mut DpSchema) -> DpStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = parse_schema(text).map_err(|e| fail(DpStatus::Parse, e))?;
        *out = Box::into_raw(Box::new(DpSchema(s)));
        Ok(())
    })
}

/// Number of indicators in the schema, 0 for a null handle.
///
/// # Safety
/// `schema` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_schema_len(schema: *const DpSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.0.len())
}

/// Releases a schema. Null is ignored.
///
/// # Safety
/// `schema` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_schema_free(schema: *mut DpSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Scores `nrows` snapshots (row-major, schema column order) and writes the
/// scaled scores in `[0, 100]` to `out_scaled`. `multilevel` selects the
/// two-stage evaluation.
///
/// # Safety
/// `data` must hold `nrows * dp_schema_len(schema)` values and `out_scaled`
/// room for `nrows`.
#[no_mangle]
pub unsafe extern "C" fn dp_score_snapshot(
    schema: *const DpSchema,
    data: *const f64,
    nrows: usize,
    multilevel: bool,
    out_scaled: *mut f64,
) -> DpStatus {
    guard(|| {
        let schema = &schema.as_ref().ok_or_else(|| null("schema"))?.0;
        let data = slice_arg(data, nrows * schema.len(), "data")?;
        let out = out_slice(out_scaled, nrows, "out_scaled")?;
        let x = matrix(schema, data, nrows)?;
        let scores = if multilevel { evaluate_multilevel(&x, schema) } else { evaluate_snapshot(&x, schema) }
            .map_err(|e| fail(DpStatus::Compute, e))?;
        out.copy_from_slice(&scores.scaled);
        Ok(())
    })
}

/// Smooths `n` values with the selected moving average into `out`.
///
/// # Safety
/// `xs` and `out` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn dp_smooth(
    kind: DpSmoother,
    xs: *const f64,
    n: usize,
    lookback: usize,
    out: *mut f64,
) -> DpStatus {
    guard(|| {
        let xs = slice_arg(xs, n, "xs")?;
        let out = out_slice(out, n, "out")?;
        let p = SmoothParams::new(lookback).map_err(|e| fail(DpStatus::InvalidArgument, e))?;
        let v = match kind {
            DpSmoother::Sma => smooth::sma(xs, p),
            DpSmoother::Wma => smooth::wma(xs, p),
            DpSmoother::WmaCorrected => smooth::wma_corrected(xs, p),
            DpSmoother::Hma => smooth::hma(xs, p),
        };
        out.copy_from_slice(&v);
        Ok(())
    })
}

/// Fits ARIMA(`p`,`d`,`q`), or selects the order by BIC within those bounds
/// when `auto_order` is set, and writes an `h`-step forecast clamped to
/// `[0, 100]`. Interval pointers may be null.
///
/// # Safety
/// `xs` must hold `n` values; each non-null output must hold `h` values.
#[no_mangle]
pub unsafe extern "C" fn dp_forecast(
    xs: *const f64,
    n: usize,
    p: usize,
    d: usize,
    q: usize,
    auto_order: bool,
    h: usize,
    out_point: *mut f64,
    out_lo80: *mut f64,
    out_hi80: *mut f64,
) -> DpStatus {
    guard(|| {
        let xs = slice_arg(xs, n, "xs")?;
        let point = out_slice(out_point, h, "out_point")?;
        let order = ArimaOrder::new(p, d, q);
        let model =
            if auto_order { forecast::auto_order(xs, order, Criterion::Bic) } else { forecast::fit_arima(xs, order) }
                .map_err(|e| fail(DpStatus::Compute, e))?;
        let f = forecast::forecast(&model, xs, h).map_err(|e| fail(DpStatus::Compute, e))?;
        point.copy_from_slice(&f.point);
        if !out_lo80.is_null() {
            out_slice(out_lo80, h, "out_lo80")?.iter_mut().zip(&f.interval_80).for_each(|(o, i)| *o = i.0);
        }
        if !out_hi80.is_null() {
            out_slice(out_hi80, h, "out_hi80")?.iter_mut().zip(&f.interval_80).for_each(|(o, i)| *o = i.1);
        }
        Ok(())
    })
}

/// Tier of `score`: 0 low, 1 mid, 2 high; -1 when the thresholds are invalid.
#[no_mangle]
pub extern "C" fn dp_map_tier(score: f64, low_max: f64, mid_max: f64) -> i32 {
    match TierThresholds::new(low_max, mid_max) {
        Ok(t) => map_tier(score, &t) as i32,
        Err(e) => {
            set_error(e.to_string());
            -1
        }
    }
}

/// Creates an engine. `config_toml` may be null for the default trigger
/// config. The reference population is `nrows` rows in schema order.
///
/// # Safety
/// `schema` must be live, `reference` must hold `nrows * dp_schema_len`
/// values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dp_engine_new(
    schema: *const DpSchema,
    config_toml: *const c_char,
    reference: *const f64,
    nrows: usize,
    out: *mut *mut DpEngine,
) -> DpStatus {
    guard(|| {
        let schema = &schema.as_ref().ok_or_else(|| null("schema"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if config_toml.is_null() {
            TriggerConfig::default()
        } else {
            TriggerConfig::parse(str_arg(config_toml, "config_toml")?).map_err(|e| fail(DpStatus::Parse, e))?
        };
        let data = slice_arg(reference, nrows * schema.len(), "reference")?;
        let x = matrix(schema, data, nrows)?;
        let engine = Engine::new(schema.clone(), cfg, &x).map_err(|e| fail(DpStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(DpEngine(engine)));
        Ok(())
    })
}

/// Registers a custom event name.
///
/// # Safety
/// `engine` must be live and `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dp_engine_register_event(engine: *mut DpEngine, name: *const c_char) -> DpStatus {
    guard(|| {
        let engine = &mut engine.as_mut().ok_or_else(|| null("engine"))?.0;
        let name = str_arg(name, "name")?;
        engine.register_event(name).map_err(|e| fail(DpStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Dispatches one JSON event `{name, device_id, ts_ms, params}`. When the
/// event emits a score record, `*out_record` receives it as JSON (free with
/// [`dp_string_free`]); otherwise it is set to null.
///
/// # Safety
/// `engine` must be live, `event_json` NUL-terminated, `out_record` valid.
#[no_mangle]
pub unsafe extern "C" fn dp_engine_dispatch_json(
    engine: *mut DpEngine,
    event_json: *const c_char,
    out_record: *mut *mut c_char,
) -> DpStatus {
    guard(|| {
        let engine = &mut engine.as_mut().ok_or_else(|| null("engine"))?.0;
        let text = str_arg(event_json, "event_json")?;
        if out_record.is_null() {
            return Err(null("out_record"));
        }
        *out_record = ptr::null_mut();
        let ev: Event = serde_json::from_str(text).map_err(|e| fail(DpStatus::Parse, e))?;
        let rec = engine.dispatch(&ev).map_err(|e| fail(DpStatus::Compute, e))?;
        if let Some(r) = rec {
            let json = serde_json::to_string(&r).map_err(|e| fail(DpStatus::Compute, e))?;
            *out_record = CString::new(json).map_err(|e| fail(DpStatus::Compute, e))?.into_raw();
        }
        Ok(())
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_engine_free(engine: *mut DpEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
