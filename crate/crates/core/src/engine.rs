//! Event-driven scoring engine.
//!
//! Events are routed to collectors, which merge event parameters into each
//! device's latest feature values. Scoring events rank the device snapshot
//! against a reference population, then update the short-term (Hull) and
//! long-term (ARIMA) views and the tier. Every scoring event emits one
//! [`ScoreRecord`].
//!
//! Trigger configuration is TOML:
//!
//! ```toml
//! events = ["seek"]                # custom events; startup/playback are built in
//! scoring_events = ["playback"]
//! lookback = 9
//! forecast_horizon = 5             # 0 disables forecasting
//! forecast_window = 300
//! criterion = "bic"
//! order_bounds = [5, 2, 5]
//!
//! [tiers]
//! low_max = 28.67
//! mid_max = 56.82
//!
//! [collectors.system]
//! events = ["startup", "playback"]
//! categories = ["CPU", "Memory"]   # or `features = [...]`; neither means all
//! ```
//!
//! Without a `[collectors]` table a single collector listens to every
//! registered event and accepts every schema feature.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{evaluate_multilevel, EvaluateError};
use crate::forecast::{auto_order, forecast, ArimaOrder, Criterion, Forecast};
use crate::matrix::{DecisionMatrix, MatrixError};
use crate::schema::FeatureSchema;
use crate::smooth::{hma, ScoreSeries, SmoothError, SmoothParams};

pub const BUILTIN_EVENTS: [&str; 2] = ["startup", "playback"];
pub const LOG_FORMAT: &str = "devperf-score-log";
pub const LOG_VERSION: u32 = 1;
/// Minimum score-series length before forecasts are produced.
pub const FORECAST_MIN_POINTS: usize = 50;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("event name must be nonempty")]
    EmptyEventName,
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("invalid trigger config: {0}")]
    Config(String),
    #[error("invalid tier thresholds: {0}")]
    Thresholds(String),
    #[error("need at least 100 scores, got {0}")]
    SampleTooSmall(usize),
    #[error("degenerate score sample: {0}")]
    Degenerate(String),
    #[error("scoring event for `{device}` at {ts} is not after the previous score")]
    OutOfOrder { device: String, ts: u64 },
    #[error("reference matrix: {0}")]
    Reference(#[from] MatrixError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error("score log: {0}")]
    Log(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Event parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Bool(bool),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub name: String,
    pub device_id: String,
    pub ts_ms: u64,
    #[serde(default)]
    pub params: BTreeMap<String, Scalar>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Low,
    Mid,
    High,
}

/// Upper bounds of the low and mid tiers: low is `(0, low_max]`, mid is
/// `(low_max, mid_max]`, high is `(mid_max, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierThresholds {
    pub low_max: f64,
    pub mid_max: f64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        TierThresholds { low_max: 28.67, mid_max: 56.82 }
    }
}

impl TierThresholds {
    pub fn new(low_max: f64, mid_max: f64) -> Result<Self, EngineError> {
        let t = TierThresholds { low_max, mid_max };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), EngineError> {
        if !(self.low_max > 0.0 && self.low_max < self.mid_max && self.mid_max < 100.0) {
            return Err(EngineError::Thresholds(format!(
                "need 0 < low_max < mid_max < 100, got {} and {}",
                self.low_max, self.mid_max
            )));
        }
        Ok(())
    }
}

/// Interval membership with right-closed tiers. Scores at or below 0 fall in
/// the low tier, scores above 100 in the high tier.
pub fn map_tier(score: f64, t: &TierThresholds) -> Tier {
    if score <= t.low_max {
        Tier::Low
    } else if score <= t.mid_max {
        Tier::Mid
    } else {
        Tier::High
    }
}

/// Thresholds at the empirical quantiles `p1` and `p1 + p2` of `scores`, so
/// that the low tier holds `round(p1 n)` of the sample and the high tier
/// `n - round((p1 + p2) n)`.
pub fn derive_thresholds(scores: &[f64], proportions: [f64; 3]) -> Result<TierThresholds, EngineError> {
    let n = scores.len();
    if n < 100 {
        return Err(EngineError::SampleTooSmall(n));
    }
    if proportions.iter().any(|p| !(*p > 0.0)) || (proportions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(EngineError::Thresholds(format!("proportions must be positive and sum to 1, got {proportions:?}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EngineError::Degenerate("non-finite score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Err(EngineError::Degenerate("all scores equal".into()));
    }
    let k1 = ((proportions[0] * n as f64).round() as usize).clamp(1, n - 2);
    let k2 = (((proportions[0] + proportions[1]) * n as f64).round() as usize).clamp(k1 + 1, n - 1);
    let t = TierThresholds { low_max: sorted[k1 - 1], mid_max: sorted[k2 - 1] };
    t.validate().map_err(|e| EngineError::Degenerate(e.to_string()))?;
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectorConfig {
    pub events: BTreeSet<String>,
    #[serde(default)]
    pub features: Option<BTreeSet<String>>,
    #[serde(default)]
    pub categories: Option<BTreeSet<String>>,
}

impl CollectorConfig {
    fn accepts(&self, schema: &FeatureSchema, feature: &str) -> bool {
        let Some(spec) = schema.get(feature) else {
            return false;
        };
        match (&self.features, &self.categories) {
            (None, None) => true,
            (f, c) => {
                f.as_ref().is_some_and(|f| f.contains(feature))
                    || c.as_ref().is_some_and(|c| c.contains(&spec.category))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    #[serde(default, rename = "events")]
    registered: BTreeSet<String>,
    pub scoring_events: BTreeSet<String>,
    #[serde(default)]
    pub collectors: BTreeMap<String, CollectorConfig>,
    #[serde(default = "default_lookback")]
    pub lookback: usize,
    #[serde(default = "default_horizon")]
    pub forecast_horizon: usize,
    #[serde(default = "default_window")]
    pub forecast_window: usize,
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default = "default_bounds")]
    pub order_bounds: [usize; 3],
    #[serde(default)]
    pub tiers: TierThresholds,
}

fn default_lookback() -> usize {
    9
}
fn default_horizon() -> usize {
    5
}
fn default_window() -> usize {
    300
}
fn default_bounds() -> [usize; 3] {
    let b = ArimaOrder::DEFAULT_BOUNDS;
    [b.p, b.d, b.q]
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            registered: BUILTIN_EVENTS.iter().map(|s| s.to_string()).collect(),
            scoring_events: ["playback".to_string()].into(),
            collectors: BTreeMap::new(),
            lookback: default_lookback(),
            forecast_horizon: default_horizon(),
            forecast_window: default_window(),
            criterion: Criterion::default(),
            order_bounds: default_bounds(),
            tiers: TierThresholds::default(),
        }
    }
}

impl TriggerConfig {
    pub fn parse(text: &str) -> Result<Self, EngineError> {
        let mut cfg: TriggerConfig = toml::from_str(text).map_err(|e| EngineError::Config(e.message().to_string()))?;
        for e in BUILTIN_EVENTS {
            cfg.registered.insert(e.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.registered.iter().any(|e| e.is_empty()) {
            return Err(EngineError::EmptyEventName);
        }
        if self.scoring_events.is_empty() {
            return Err(EngineError::Config("scoring_events is empty".into()));
        }
        let check = |e: &String, what: &str| {
            if self.registered.contains(e) {
                Ok(())
            } else {
                Err(EngineError::Config(format!("{what} names unregistered event `{e}`")))
            }
        };
        for e in &self.scoring_events {
            check(e, "scoring_events")?;
        }
        for (name, c) in &self.collectors {
            for e in &c.events {
                check(e, &format!("collector `{name}`"))?;
            }
        }
        if self.lookback == 0 {
            return Err(EngineError::Config("lookback must be at least 1".into()));
        }
        if self.forecast_horizon > 0 && self.forecast_window < FORECAST_MIN_POINTS {
            return Err(EngineError::Config(format!("forecast_window must be at least {FORECAST_MIN_POINTS}")));
        }
        self.tiers.validate()
    }

    /// Makes `name` routable. Returns `false` if it was already registered.
    pub fn register_event(&mut self, name: &str) -> Result<bool, EngineError> {
        if name.is_empty() {
            return Err(EngineError::EmptyEventName);
        }
        Ok(self.registered.insert(name.to_string()))
    }

    pub fn is_registered(&self, name: &str) -> bool {
        self.registered.contains(name)
    }

    pub fn registered_events(&self) -> impl Iterator<Item = &str> {
        self.registered.iter().map(String::as_str)
    }

    pub fn smoothing(&self) -> SmoothParams {
        SmoothParams { lookback: self.lookback.max(1) }
    }

    pub fn bounds(&self) -> ArimaOrder {
        let [p, d, q] = self.order_bounds;
        ArimaOrder::new(p, d, q)
    }

    /// Features of `ev` accepted by the collectors listening to it.
    fn collected<'a>(&self, schema: &FeatureSchema, ev: &'a Event) -> Vec<(&'a str, f64)> {
        let numeric = ev.params.iter().filter_map(|(k, v)| match v {
            Scalar::Num(x) => Some((k.as_str(), *x)),
            _ => None,
        });
        if self.collectors.is_empty() {
            return numeric.filter(|(k, _)| schema.get(k).is_some()).collect();
        }
        let listening: Vec<&CollectorConfig> =
            self.collectors.values().filter(|c| c.events.contains(&ev.name)).collect();
        numeric.filter(|(k, _)| listening.iter().any(|c| c.accepts(schema, k))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "insufficient-features")]
    InsufficientFeatures,
}

/// One persisted line of the score log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub device_id: String,
    pub ts_ms: u64,
    pub realtime: Option<f64>,
    pub short_term: Option<f64>,
    pub forecast_next: Option<f64>,
    pub tier: Option<Tier>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub device_id: String,
    /// Latest accepted value and its timestamp per indicator.
    pub latest_features: BTreeMap<String, (f64, u64)>,
    pub score_series: ScoreSeries,
    pub short_term: Option<f64>,
    pub forecast: Option<Forecast>,
    pub tier: Option<Tier>,
}

impl DeviceState {
    pub fn new(device_id: impl Into<String>) -> Self {
        let device_id = device_id.into();
        DeviceState {
            score_series: ScoreSeries::new(device_id.clone(), Vec::new()).expect("empty series"),
            device_id,
            latest_features: BTreeMap::new(),
            short_term: None,
            forecast: None,
            tier: None,
        }
    }

    /// Snapshot row in schema order, or the missing indicator names.
    pub fn snapshot(&self, schema: &FeatureSchema) -> Result<Vec<f64>, Vec<String>> {
        let mut row = Vec::with_capacity(schema.len());
        let mut missing = Vec::new();
        for name in schema.names() {
            match self.latest_features.get(name) {
                Some(&(v, _)) => row.push(v),
                None => missing.push(name.to_string()),
            }
        }
        if missing.is_empty() {
            Ok(row)
        } else {
            Err(missing)
        }
    }
}

/// Realtime score of `row` ranked against `reference` (columns in schema
/// order): the scaled score of the appended row.
pub fn score_against(row: &[f64], reference: &DecisionMatrix, schema: &FeatureSchema) -> Result<f64, EngineError> {
    let mut x = reference.clone();
    x.push_row("__snapshot__", row)?;
    let scores = evaluate_multilevel(&x, schema)?;
    Ok(*scores.scaled.last().expect("nonempty"))
}

/// Applies one event to one device's state. `reference` must already be
/// conformed to the schema. Returns the record to persist, if any.
pub fn dispatch(
    state: &mut DeviceState,
    ev: &Event,
    cfg: &TriggerConfig,
    schema: &FeatureSchema,
    reference: &DecisionMatrix,
) -> Result<Option<ScoreRecord>, EngineError> {
    if ev.name.is_empty() {
        return Err(EngineError::EmptyEventName);
    }
    if !cfg.is_registered(&ev.name) {
        return Err(EngineError::UnknownEvent(ev.name.clone()));
    }
    for (name, v) in cfg.collected(schema, ev) {
        let spec = schema.get(name).expect("collector filtered");
        if !v.is_finite() || !spec.valid_range.contains(v) {
            continue;
        }
        let fresh = state.latest_features.get(name).is_none_or(|&(_, ts)| ev.ts_ms >= ts);
        if fresh {
            state.latest_features.insert(name.to_string(), (v, ev.ts_ms));
        }
    }
    if !cfg.scoring_events.contains(&ev.name) {
        return Ok(None);
    }

    let row = match state.snapshot(schema) {
        Ok(row) => row,
        Err(_) => {
            return Ok(Some(ScoreRecord {
                device_id: state.device_id.clone(),
                ts_ms: ev.ts_ms,
                realtime: None,
                short_term: None,
                forecast_next: None,
                tier: None,
                status: Status::InsufficientFeatures,
            }))
        }
    };
    if state.score_series.last_ts().is_some_and(|t| ev.ts_ms <= t) {
        return Err(EngineError::OutOfOrder { device: state.device_id.clone(), ts: ev.ts_ms });
    }
    let realtime = score_against(&row, reference, schema)?;
    state.score_series.push(ev.ts_ms, realtime)?;
    let values = state.score_series.values();
    state.short_term = hma(&values, cfg.smoothing()).last().copied();
    state.tier = Some(map_tier(realtime, &cfg.tiers));
    if cfg.forecast_horizon > 0 && values.len() >= FORECAST_MIN_POINTS {
        let tail = &values[values.len().saturating_sub(cfg.forecast_window)..];
        state.forecast = match auto_order(tail, cfg.bounds(), cfg.criterion)
            .and_then(|m| forecast(&m, tail, cfg.forecast_horizon))
        {
            Ok(f) => Some(f),
            Err(e) => {
                warn!("forecast for `{}` failed: {e}", state.device_id);
                None
            }
        };
    }
    Ok(Some(ScoreRecord {
        device_id: state.device_id.clone(),
        ts_ms: ev.ts_ms,
        realtime: Some(realtime),
        short_term: state.short_term,
        forecast_next: state.forecast.as_ref().map(|f| f.point[0]),
        tier: state.tier,
        status: Status::Ok,
    }))
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    format: String,
    version: u32,
}

/// Append-only newline-delimited score log with a header line. Each record
/// is flushed as soon as it is written.
pub struct ScoreLog<W: Write> {
    out: W,
}

impl<W: Write> ScoreLog<W> {
    /// Writes the header to a fresh sink.
    pub fn create(mut out: W) -> Result<Self, EngineError> {
        let header = LogHeader { format: LOG_FORMAT.into(), version: LOG_VERSION };
        writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        out.flush()?;
        Ok(ScoreLog { out })
    }

    /// Wraps a sink that already holds a header, e.g. a file opened for append.
    pub fn resume(out: W) -> Self {
        ScoreLog { out }
    }

    pub fn append(&mut self, rec: &ScoreRecord) -> Result<(), EngineError> {
        let line = serde_json::to_string(rec).map_err(|e| EngineError::Log(e.to_string()))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Result of reading a score log back.
#[derive(Debug, Clone, PartialEq)]
pub struct ReloadedLog {
    pub records: Vec<ScoreRecord>,
    /// Whether a torn final line was skipped.
    pub torn_tail: bool,
}

/// Reads a score log. An unparseable final line is treated as a torn write
/// and skipped with a warning; an unparseable earlier line is an error.
pub fn reload_log<R: BufRead>(reader: R) -> Result<ReloadedLog, EngineError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| EngineError::Log("empty log".into()))??;
    let header: LogHeader = serde_json::from_str(&header).map_err(|e| EngineError::Log(format!("bad header: {e}")))?;
    if header.format != LOG_FORMAT || header.version != LOG_VERSION {
        return Err(EngineError::Log(format!("unsupported log {} v{}", header.format, header.version)));
    }
    let lines: Vec<String> = lines.collect::<Result<_, _>>()?;
    let mut records = Vec::with_capacity(lines.len());
    let mut torn_tail = false;
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<ScoreRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if i + 1 == lines.len() => {
                warn!("skipping torn final record on line {}", i + 2);
                torn_tail = true;
            }
            Err(e) => return Err(EngineError::Log(format!("line {}: {e}", i + 2))),
        }
    }
    Ok(ReloadedLog { records, torn_tail })
}

/// Owns the configuration, the reference population and every device's
/// state, and optionally persists emitted records.
pub struct Engine {
    schema: FeatureSchema,
    cfg: TriggerConfig,
    reference: DecisionMatrix,
    devices: BTreeMap<String, DeviceState>,
    log: Option<ScoreLog<Box<dyn Write + Send>>>,
}

impl Engine {
    pub fn new(schema: FeatureSchema, cfg: TriggerConfig, reference: &DecisionMatrix) -> Result<Self, EngineError> {
        cfg.validate()?;
        let reference = reference.conform_to(&schema)?;
        Ok(Engine { schema, cfg, reference, devices: BTreeMap::new(), log: None })
    }

    pub fn with_log(mut self, log: ScoreLog<Box<dyn Write + Send>>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn config(&self) -> &TriggerConfig {
        &self.cfg
    }

    pub fn register_event(&mut self, name: &str) -> Result<bool, EngineError> {
        self.cfg.register_event(name)
    }

    pub fn device(&self, id: &str) -> Option<&DeviceState> {
        self.devices.get(id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceState> {
        self.devices.values()
    }

    pub fn dispatch(&mut self, ev: &Event) -> Result<Option<ScoreRecord>, EngineError> {
        let state = self.devices.entry(ev.device_id.clone()).or_insert_with(|| DeviceState::new(ev.device_id.clone()));
        let rec = dispatch(state, ev, &self.cfg, &self.schema, &self.reference)?;
        if let (Some(log), Some(r)) = (self.log.as_mut(), rec.as_ref()) {
            log.append(r)?;
        }
        Ok(rec)
    }

    /// Dispatches events in order, collecting the emitted records.
    pub fn replay<'a>(&mut self, events: impl IntoIterator<Item = &'a Event>) -> Result<Vec<ScoreRecord>, EngineError> {
        let mut out = Vec::new();
        for ev in events {
            out.extend(self.dispatch(ev)?);
        }
        Ok(out)
    }
}
