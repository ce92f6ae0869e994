//! Synthetic-fleet AB experiment.
//!
//! Each synthetic device has a static model score in `(0, 12]` and a daily
//! health trajectory
//!
//! ```text
//! h(t) = clamp(model/12 - wear - drift t - amp (1 + sin(2 pi t / period + phase)) / 2 + noise z_t, 0.02, 1)
//! ```
//!
//! Telemetry for every schema indicator is a deterministic function of
//! `h(t)` plus per-feature jitter. The experiment scores the fleet through
//! the [`Engine`](crate::engine::Engine) for an assignment period, splits a
//! static low-end control group from a dynamic low-tier experimental group,
//! then simulates a power-reduction strategy on both.
//!
//! Device metrics at stress `s = 1 - h`, with `z` standard normal:
//!
//! | metric              | untreated                  |
//! |---------------------|----------------------------|
//! | ANR penetration (%) | `2 + 20 s^2 + z`           |
//! | smoothness (ms)     | `16.7 + 25 s + 2 z`        |
//! | first swipe (ms)    | `250 + 800 s + 40 z`       |
//! | resource occupancy  | `0.3 + 0.5 s + 0.03 z`     |
//!
//! The strategy scales each metric by `1 - effect * s`, so it helps stressed
//! devices most. Treated and untreated runs share their noise draws.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::engine::{derive_thresholds, Engine, EngineError, Event, Scalar, Tier, TierThresholds, TriggerConfig};
use crate::matrix::{DecisionMatrix, MatrixError};
use crate::schema::{Direction, FeatureSchema};

pub const MODEL_SCORE_MEAN: f64 = 7.8;
pub const MODEL_SCORE_SD: f64 = 1.3;
const DAY_MS: u64 = 86_400_000;

#[derive(Debug, Error)]
pub enum AbError {
    #[error("fleet needs at least 10 devices, got {0}")]
    FleetTooSmall(usize),
    #[error("{0} group is empty")]
    EmptyGroup(&'static str),
    #[error("assignment period must be at least one day")]
    NoAssignmentDays,
    #[error("config names no scoring event")]
    NoScoringEvent,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Degradation {
    /// Health lost before day 0 (battery and storage aging).
    pub wear: f64,
    /// Health lost per day.
    pub drift: f64,
    pub memory_amplitude: f64,
    pub memory_period_days: f64,
    pub memory_phase: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticDevice {
    pub device_id: String,
    pub model_score: f64,
    pub degradation: Degradation,
}

impl SyntheticDevice {
    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.degradation.seed);
        r.set_stream(id);
        r
    }

    /// Daily health in `[0.02, 1]` for days `0..days`.
    pub fn health_path(&self, days: usize) -> Vec<f64> {
        let g = &self.degradation;
        let mut r = self.stream(1);
        (0..days)
            .map(|t| {
                let t = t as f64;
                let z: f64 = StandardNormal.sample(&mut r);
                let memory = g.memory_amplitude
                    * (1.0 + (std::f64::consts::TAU * t / g.memory_period_days + g.memory_phase).sin())
                    / 2.0;
                (self.model_score / 12.0 - g.wear - g.drift * t - memory + g.noise_sigma * z).clamp(0.02, 1.0)
            })
            .collect()
    }

    /// One telemetry row per day, columns in schema order.
    pub fn telemetry(&self, schema: &FeatureSchema, days: usize) -> Vec<Vec<f64>> {
        let mut r = self.stream(2);
        self.health_path(days)
            .into_iter()
            .map(|h| {
                schema
                    .indicators()
                    .iter()
                    .map(|spec| feature_value(spec.direction, spec.valid_range.lo, spec.valid_range.hi, h, &mut r))
                    .collect()
            })
            .collect()
    }
}

/// Maps health to a plausible in-range value for one indicator, with 2%
/// of the span as jitter.
fn feature_value(direction: Direction, lo: f64, hi: f64, h: f64, r: &mut ChaCha8Rng) -> f64 {
    let span = hi - lo;
    let bad = 1.0 - h;
    let base = match direction {
        Direction::Maximal => lo + span * (0.1 + 0.6 * h),
        Direction::Minimal => lo + span * (0.1 + 0.6 * bad),
        Direction::Interval { a, b } => (a + b) / 2.0 + bad * (hi - (a + b) / 2.0) * 0.8,
        Direction::Intermediate { best } => best + bad * (hi - best) * 0.5,
    };
    let z: f64 = StandardNormal.sample(r);
    (base + 0.02 * span * z).clamp(lo, hi)
}

/// Builds `n` devices. Model scores follow a normal distribution around
/// 7.8 (sd 1.3) truncated to `(0, 12]`; degradation parameters are uniform:
/// wear in `[0, 0.3)`, drift in `[0, 0.005)` per day, memory amplitude in `[0, 0.3)`, period in
/// `[3, 10)` days, noise sigma in `[0.01, 0.05)`.
pub fn generate_fleet(n: usize, seed: u64) -> Result<Vec<SyntheticDevice>, AbError> {
    if n < 10 {
        return Err(AbError::FleetTooSmall(n));
    }
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(MODEL_SCORE_MEAN, MODEL_SCORE_SD).expect("valid normal");
    let width = n.to_string().len();
    Ok((0..n)
        .map(|i| {
            let model_score = loop {
                let v = normal.sample(&mut r);
                if v > 0.0 && v <= 12.0 {
                    break v;
                }
            };
            let degradation = Degradation {
                wear: r.random_range(0.0..0.3),
                drift: r.random_range(0.0..0.005),
                memory_amplitude: r.random_range(0.0..0.3),
                memory_period_days: r.random_range(3.0..10.0),
                memory_phase: r.random_range(0.0..std::f64::consts::TAU),
                noise_sigma: r.random_range(0.01..0.05),
                seed: r.random(),
            };
            SyntheticDevice { device_id: format!("dev-{i:0width$}"), model_score, degradation }
        })
        .collect())
}

/// Per-metric multiplicative effect at full stress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyEffect {
    pub anr: f64,
    pub smoothness: f64,
    pub first_swipe: f64,
    pub occupancy: f64,
}

impl StrategyEffect {
    pub const NULL: StrategyEffect = StrategyEffect { anr: 0.0, smoothness: 0.0, first_swipe: 0.0, occupancy: 0.0 };
}

impl Default for StrategyEffect {
    fn default() -> Self {
        StrategyEffect { anr: 0.25, smoothness: 0.3, first_swipe: 0.1, occupancy: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Days scored through the engine before groups are assigned.
    pub assign_days: usize,
    /// Simulated strategy days after assignment.
    pub duration_days: usize,
    /// Static low-end cut on the model scale: `(0, static_cut]`.
    pub static_cut: f64,
    pub strategy: StrategyEffect,
    /// When set, tier thresholds are derived from the reference population
    /// with these proportions instead of taken from the trigger config.
    pub tier_proportions: Option<[f64; 3]>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            assign_days: 7,
            duration_days: 30,
            static_cut: 7.0,
            strategy: StrategyEffect::default(),
            tier_proportions: None,
        }
    }
}

pub const METRIC_NAMES: [&str; 4] = ["anr_penetration", "smoothness_ms", "first_swipe_ms", "resource_occupancy"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub anr_penetration: f64,
    pub smoothness_ms: f64,
    pub first_swipe_ms: f64,
    pub resource_occupancy: f64,
}

impl Metrics {
    pub fn to_array(self) -> [f64; 4] {
        [self.anr_penetration, self.smoothness_ms, self.first_swipe_ms, self.resource_occupancy]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Metrics { anr_penetration: a[0], smoothness_ms: a[1], first_swipe_ms: a[2], resource_occupancy: a[3] }
    }

    fn zip(self, other: Metrics, f: impl Fn(f64, f64) -> f64) -> Metrics {
        let (a, b) = (self.to_array(), other.to_array());
        Metrics::from_array(std::array::from_fn(|i| f(a[i], b[i])))
    }

    /// `(treated - baseline) / baseline` per metric.
    pub fn relative_change(baseline: Metrics, treated: Metrics) -> Metrics {
        treated.zip(baseline, |t, b| (t - b) / b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub size: usize,
    pub mean_model_score: f64,
    pub mean_stress: f64,
    pub baseline: Metrics,
    pub treated: Metrics,
    pub relative_change: Metrics,
    pub device_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub thresholds: TierThresholds,
    pub control: GroupReport,
    pub experimental: GroupReport,
    /// Experimental minus control strategy effect in metric units.
    pub delta_absolute: Metrics,
    /// Experimental minus control relative change.
    pub delta_relative: Metrics,
}

impl ExperimentReport {
    /// One row per metric.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AbError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "metric",
            "control_baseline",
            "control_treated",
            "control_change",
            "experimental_baseline",
            "experimental_treated",
            "experimental_change",
            "delta_absolute",
            "delta_relative",
        ])?;
        let cols = [
            self.control.baseline,
            self.control.treated,
            self.control.relative_change,
            self.experimental.baseline,
            self.experimental.treated,
            self.experimental.relative_change,
            self.delta_absolute,
            self.delta_relative,
        ]
        .map(Metrics::to_array);
        for (i, name) in METRIC_NAMES.iter().enumerate() {
            let mut row = vec![name.to_string()];
            row.extend(cols.iter().map(|c| c[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "control: {} devices (mean model score {:.2})\nexperimental: {} devices (mean model score {:.2})\n\n",
            self.control.size,
            self.control.mean_model_score,
            self.experimental.size,
            self.experimental.mean_model_score
        );
        s.push_str(&format!(
            "{:<20}{:>14}{:>14}{:>12}{:>12}\n",
            "metric", "control", "experimental", "delta", "delta %"
        ));
        let (c, e) = (self.control.treated.to_array(), self.experimental.treated.to_array());
        let (da, dr) = (self.delta_absolute.to_array(), self.delta_relative.to_array());
        for (i, name) in METRIC_NAMES.iter().enumerate() {
            s.push_str(&format!("{:<20}{:>14.4}{:>14.4}{:>12.4}{:>11.3}%\n", name, c[i], e[i], da[i], 100.0 * dr[i]));
        }
        s
    }
}

/// Untreated and treated metrics of one device-day, sharing noise draws.
fn device_day(s: f64, effect: &StrategyEffect, r: &mut ChaCha8Rng) -> (Metrics, Metrics) {
    let mut z = || -> f64 { StandardNormal.sample(&mut *r) };
    let base = Metrics {
        anr_penetration: (2.0 + 20.0 * s * s + z()).max(0.0),
        smoothness_ms: (16.7 + 25.0 * s + 2.0 * z()).max(0.0),
        first_swipe_ms: (250.0 + 800.0 * s + 40.0 * z()).max(0.0),
        resource_occupancy: (0.3 + 0.5 * s + 0.03 * z()).clamp(0.0, 1.0),
    };
    let treated = Metrics {
        anr_penetration: base.anr_penetration * (1.0 - effect.anr * s),
        smoothness_ms: base.smoothness_ms * (1.0 - effect.smoothness * s),
        first_swipe_ms: base.first_swipe_ms * (1.0 - effect.first_swipe * s),
        resource_occupancy: base.resource_occupancy * (1.0 - effect.occupancy * s),
    };
    (base, treated)
}

fn simulate_group(members: &[&SyntheticDevice], exp: &ExperimentConfig) -> GroupReport {
    let total_days = exp.assign_days + exp.duration_days;
    let mut base = [0.0; 4];
    let mut treated = [0.0; 4];
    let mut stress = 0.0;
    let mut count = 0usize;
    for dev in members {
        let path = dev.health_path(total_days);
        let mut r = dev.stream(3);
        for h in &path[exp.assign_days..] {
            let s = 1.0 - h;
            let (b, t) = device_day(s, &exp.strategy, &mut r);
            for i in 0..4 {
                base[i] += b.to_array()[i];
                treated[i] += t.to_array()[i];
            }
            stress += s;
            count += 1;
        }
    }
    let n = count.max(1) as f64;
    let baseline = Metrics::from_array(base.map(|v| v / n));
    let treated = Metrics::from_array(treated.map(|v| v / n));
    GroupReport {
        size: members.len(),
        mean_model_score: members.iter().map(|d| d.model_score).sum::<f64>() / members.len() as f64,
        mean_stress: stress / n,
        baseline,
        treated,
        relative_change: Metrics::relative_change(baseline, treated),
        device_ids: members.iter().map(|d| d.device_id.clone()).collect(),
    }
}

/// Day-`day` telemetry of every device as a matrix with one row per device.
pub fn fleet_snapshot(
    fleet: &[SyntheticDevice],
    schema: &FeatureSchema,
    day: usize,
) -> Result<DecisionMatrix, AbError> {
    Ok(DecisionMatrix::from_rows(
        fleet.iter().map(|d| d.device_id.clone()).collect(),
        schema.names().map(String::from).collect(),
        fleet.iter().map(|d| d.telemetry(schema, day + 1).swap_remove(day)).collect(),
    )?)
}

/// One `event` per device per day carrying that day's full telemetry,
/// ordered by day, then fleet order.
pub fn fleet_events(fleet: &[SyntheticDevice], schema: &FeatureSchema, days: usize, event: &str) -> Vec<Event> {
    let names: Vec<String> = schema.names().map(String::from).collect();
    let telemetry: Vec<Vec<Vec<f64>>> = fleet.iter().map(|d| d.telemetry(schema, days)).collect();
    let mut out = Vec::with_capacity(fleet.len() * days);
    for day in 0..days {
        for (dev, rows) in fleet.iter().zip(&telemetry) {
            out.push(Event {
                name: event.to_string(),
                device_id: dev.device_id.clone(),
                ts_ms: day as u64 * DAY_MS,
                params: names.iter().cloned().zip(rows[day].iter().map(|v| Scalar::Num(*v))).collect(),
            });
        }
    }
    out
}

/// Realtime score and tier of every device after the assignment period, in
/// fleet order.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub thresholds: TierThresholds,
    pub scores: Vec<(String, f64, Tier)>,
}

/// Scores the fleet through the engine for `exp.assign_days` days against
/// the day-0 fleet snapshot as reference population.
pub fn assign(
    fleet: &[SyntheticDevice],
    schema: &FeatureSchema,
    cfg: &TriggerConfig,
    exp: &ExperimentConfig,
) -> Result<Assignment, AbError> {
    if exp.assign_days == 0 {
        return Err(AbError::NoAssignmentDays);
    }
    let scoring = cfg.scoring_events.iter().next().ok_or(AbError::NoScoringEvent)?.clone();
    let reference = fleet_snapshot(fleet, schema, 0)?;
    let mut cfg = cfg.clone();
    if let Some(p) = exp.tier_proportions {
        let population = crate::evaluate::evaluate_multilevel(&reference, schema).map_err(EngineError::from)?;
        cfg.tiers = derive_thresholds(&population.scaled, p)?;
    }
    let mut engine = Engine::new(schema.clone(), cfg.clone(), &reference)?;
    for ev in fleet_events(fleet, schema, exp.assign_days, &scoring) {
        engine.dispatch(&ev)?;
    }
    let scores = fleet
        .iter()
        .map(|d| {
            let st = engine.device(&d.device_id).expect("device scored");
            let &(_, score) = st.score_series.points().last().expect("complete telemetry scores");
            (d.device_id.clone(), score, st.tier.expect("tier set with score"))
        })
        .collect();
    Ok(Assignment { thresholds: cfg.tiers, scores })
}

/// Runs the experiment. Each device is randomized into bucket A or B by a
/// coin flip from its own seed. The control group holds bucket-A static
/// low-end devices (`model_score <= static_cut`), the experimental group
/// bucket-B dynamic low-tier devices. The larger group is cut to the size of
/// the smaller one, keeping its lowest-scoring members by its own criterion.
pub fn run_experiment(
    fleet: &[SyntheticDevice],
    schema: &FeatureSchema,
    cfg: &TriggerConfig,
    exp: &ExperimentConfig,
) -> Result<ExperimentReport, AbError> {
    let assignment = assign(fleet, schema, cfg, exp)?;
    let in_b = |d: &SyntheticDevice| d.stream(4).random_bool(0.5);

    let mut control: Vec<&SyntheticDevice> =
        fleet.iter().filter(|d| !in_b(d) && d.model_score > 0.0 && d.model_score <= exp.static_cut).collect();
    control.sort_by(|a, b| a.model_score.total_cmp(&b.model_score).then_with(|| a.device_id.cmp(&b.device_id)));
    let mut experimental: Vec<(&SyntheticDevice, f64)> = fleet
        .iter()
        .zip(&assignment.scores)
        .filter(|(d, (_, _, tier))| in_b(d) && *tier == Tier::Low)
        .map(|(d, (_, score, _))| (d, *score))
        .collect();
    experimental.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.device_id.cmp(&b.0.device_id)));

    if control.is_empty() {
        return Err(AbError::EmptyGroup("control"));
    }
    if experimental.is_empty() {
        return Err(AbError::EmptyGroup("experimental"));
    }
    let m = control.len().min(experimental.len());
    control.truncate(m);
    experimental.truncate(m);
    let experimental: Vec<&SyntheticDevice> = experimental.into_iter().map(|(d, _)| d).collect();

    let a = simulate_group(&control, exp);
    let b = simulate_group(&experimental, exp);
    let effect = |g: &GroupReport| g.treated.zip(g.baseline, |t, b| t - b);
    let delta_absolute = effect(&b).zip(effect(&a), |x, y| x - y);
    let delta_relative = b.relative_change.zip(a.relative_change, |x, y| x - y);
    Ok(ExperimentReport {
        thresholds: assignment.thresholds,
        control: a,
        experimental: b,
        delta_absolute,
        delta_relative,
    })
}
