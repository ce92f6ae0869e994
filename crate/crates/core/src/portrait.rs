//! Descriptive time-series portraits: daily categorical labels from feature
//! thresholds, a trailing-window portrait fitted from label history, and
//! precision/recall evaluation of fitted portraits.
//!
//! Tags: 0 = unpredictable (no data), 1 = good, 2 = ordinary, 3 = poor.
//!
//! Label rules are TOML, one `[[tag]]` block per tag:
//!
//! ```toml
//! [[tag]]
//! id = 1
//! when = ["4g_speed > 3000", "ffd_avg <= 140", "block_pct > 0 and <= 0.01"]
//!
//! [[tag]]
//! id = 0
//! when = ["4g_speed unpredictable"]
//! ```

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PortraitError {
    #[error("malformed rule document: {0}")]
    Malformed(String),
    #[error("cannot parse condition `{0}`")]
    BadCondition(String),
    #[error("rule set lacks tag {0}")]
    MissingTag(u8),
    #[error("tag {0} outside 0..=3")]
    BadTag(u8),
    #[error("duplicate day {day} for device `{device}`")]
    DuplicateDay { device: String, day: NaiveDate },
    #[error("empty population")]
    EmptyPopulation,
    #[error("window must be at least one day")]
    ZeroWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Gt,
    Ge,
    Lt,
    Le,
    /// Holds when the feature is missing.
    Unpredictable,
}

impl Comparator {
    fn parse(tok: &str) -> Option<Self> {
        Some(match tok {
            ">" => Comparator::Gt,
            ">=" => Comparator::Ge,
            "<" => Comparator::Lt,
            "<=" => Comparator::Le,
            "unpredictable" => Comparator::Unpredictable,
            _ => return None,
        })
    }

    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
            Comparator::Unpredictable => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub cmp: Comparator,
    pub threshold: f64,
    /// Optional conjunct on the same feature, e.g. `> 1600 and <= 3000`.
    pub and: Option<(Comparator, f64)>,
}

impl Condition {
    /// Parses `feature <cmp> <threshold> [and <cmp> <threshold>]` or
    /// `feature unpredictable`.
    pub fn parse(text: &str) -> Result<Self, PortraitError> {
        let bad = || PortraitError::BadCondition(text.to_string());
        let toks: Vec<&str> = text.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
        match toks[..] {
            [f, "unpredictable"] => {
                Ok(Condition { feature: f.into(), cmp: Comparator::Unpredictable, threshold: 0.0, and: None })
            }
            [f, c, t] => Ok(Condition {
                feature: f.into(),
                cmp: Comparator::parse(c).filter(|c| *c != Comparator::Unpredictable).ok_or_else(bad)?,
                threshold: num(t).ok_or_else(bad)?,
                and: None,
            }),
            [f, c, t, "and", c2, t2] => Ok(Condition {
                feature: f.into(),
                cmp: Comparator::parse(c).filter(|c| *c != Comparator::Unpredictable).ok_or_else(bad)?,
                threshold: num(t).ok_or_else(bad)?,
                and: Some((
                    Comparator::parse(c2).filter(|c| *c != Comparator::Unpredictable).ok_or_else(bad)?,
                    num(t2).ok_or_else(bad)?,
                )),
            }),
            _ => Err(bad()),
        }
    }

    fn holds(&self, value: f64) -> bool {
        self.cmp.holds(value, self.threshold) && self.and.is_none_or(|(c, t)| c.holds(value, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRule {
    pub tag: u8,
    pub conditions: Vec<Condition>,
}

/// Validated rule set covering tags 0..=3. Tag 2 is always the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRuleSet {
    rules: BTreeMap<u8, LabelRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRules {
    tag: Vec<RawTag>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTag {
    id: u8,
    #[serde(default)]
    when: Vec<String>,
}

impl LabelRuleSet {
    pub fn new(rules: Vec<LabelRule>) -> Result<Self, PortraitError> {
        let mut map = BTreeMap::new();
        for r in rules {
            if r.tag > 3 {
                return Err(PortraitError::BadTag(r.tag));
            }
            map.insert(r.tag, r);
        }
        for t in 0..=3 {
            if !map.contains_key(&t) {
                return Err(PortraitError::MissingTag(t));
            }
        }
        Ok(LabelRuleSet { rules: map })
    }

    pub fn parse(text: &str) -> Result<Self, PortraitError> {
        let raw: RawRules = toml::from_str(text).map_err(|e| PortraitError::Malformed(e.message().to_string()))?;
        let rules = raw
            .tag
            .into_iter()
            .map(|t| {
                Ok(LabelRule {
                    tag: t.id,
                    conditions: t.when.iter().map(|c| Condition::parse(c)).collect::<Result<_, _>>()?,
                })
            })
            .collect::<Result<Vec<_>, PortraitError>>()?;
        Self::new(rules)
    }

    /// Network-quality label definition (4G speed, Wi-Fi speed, average
    /// first-frame duration, block percentage).
    pub fn network_quality() -> Self {
        Self::parse(include_str!("../data/network_quality_rules.toml")).expect("shipped rules parse")
    }

    pub fn rule(&self, tag: u8) -> Option<&LabelRule> {
        self.rules.get(&tag)
    }
}

/// Labels one day's features.
///
/// * tag 0 when every feature named by the tag-0 rule is missing (or, if
///   that rule names none, when no feature used by tags 1/3 is available);
/// * tag 1 when every tag-1 condition holds on the available features;
/// * tag 3 likewise;
/// * tag 2 otherwise.
///
/// Conditions on missing features are skipped. Non-finite values count as
/// missing.
pub fn daily_label(rules: &LabelRuleSet, day_features: &HashMap<String, Option<f64>>) -> u8 {
    let value = |f: &str| day_features.get(f).copied().flatten().filter(|v| v.is_finite());
    let zero = &rules.rules[&0];
    let watched: Vec<&str> = if zero.conditions.is_empty() {
        [1u8, 3].iter().flat_map(|t| rules.rules[t].conditions.iter().map(|c| c.feature.as_str())).collect()
    } else {
        zero.conditions.iter().map(|c| c.feature.as_str()).collect()
    };
    if watched.iter().all(|f| value(f).is_none()) {
        return 0;
    }
    let matches = |tag: u8| {
        let conds = &rules.rules[&tag].conditions;
        let mut any = false;
        for c in conds {
            if let Some(v) = value(&c.feature) {
                any = true;
                if !c.holds(v) {
                    return false;
                }
            }
        }
        any
    };
    if matches(1) {
        1
    } else if matches(3) {
        3
    } else {
        2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyLabelHistory {
    pub device_id: String,
    days: Vec<(NaiveDate, u8)>,
}

impl DailyLabelHistory {
    /// Sorts by date; rejects duplicate days and tags outside 0..=3.
    pub fn new(device_id: impl Into<String>, mut days: Vec<(NaiveDate, u8)>) -> Result<Self, PortraitError> {
        let device_id = device_id.into();
        days.sort_by_key(|d| d.0);
        for w in days.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(PortraitError::DuplicateDay { device: device_id, day: w[0].0 });
            }
        }
        if let Some(&(_, t)) = days.iter().find(|d| d.1 > 3) {
            return Err(PortraitError::BadTag(t));
        }
        Ok(DailyLabelHistory { device_id, days })
    }

    pub fn days(&self) -> &[(NaiveDate, u8)] {
        &self.days
    }

    pub fn last_day(&self) -> Option<NaiveDate> {
        self.days.last().map(|d| d.0)
    }

    /// Days with `from <= date <= to`.
    pub fn between(&self, from: NaiveDate, to: NaiveDate) -> DailyLabelHistory {
        DailyLabelHistory {
            device_id: self.device_id.clone(),
            days: self.days.iter().copied().filter(|(d, _)| *d >= from && *d <= to).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitLabel {
    pub device_id: String,
    pub tag: u8,
    pub as_of: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub window_days: u32,
    pub threshold: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams { window_days: 15, threshold: 0.70 }
    }
}

/// Portrait as of `as_of`, using the `window_days` days ending on `as_of`.
///
/// * 0 when the window holds no labelled day, or only tag-0 days;
/// * 1 when the latest labelled day is tag 1 and at least `threshold` of the
///   labelled days in the window are tag 1 (tag-0 days count in the
///   denominator);
/// * 3 symmetric;
/// * 2 otherwise.
pub fn fit_portrait(
    history: &DailyLabelHistory,
    as_of: NaiveDate,
    params: FitParams,
) -> Result<PortraitLabel, PortraitError> {
    if params.window_days == 0 {
        return Err(PortraitError::ZeroWindow);
    }
    let start = as_of - chrono::Days::new(u64::from(params.window_days) - 1);
    let window: Vec<u8> = history.days.iter().filter(|(d, _)| *d >= start && *d <= as_of).map(|d| d.1).collect();
    let label = |tag| PortraitLabel { device_id: history.device_id.clone(), tag, as_of };
    if window.iter().all(|&t| t == 0) {
        return Ok(label(0));
    }
    let total = window.len() as f64;
    let last = *window.last().unwrap();
    for c in [1u8, 3] {
        let share = window.iter().filter(|&&t| t == c).count() as f64 / total;
        if last == c && share >= params.threshold {
            return Ok(label(c));
        }
    }
    Ok(label(2))
}

/// Splits a history at 4/5 of its date span: the earlier part trains, the
/// later part tests. Returns `(train, test)`.
pub fn split_time_domain(history: &DailyLabelHistory) -> (DailyLabelHistory, DailyLabelHistory) {
    let (Some(first), Some(last)) = (history.days.first(), history.days.last()) else {
        return (history.clone(), history.clone());
    };
    let span = (last.0 - first.0).num_days();
    let cut = first.0 + chrono::Days::new((span * 4 / 5) as u64);
    let mut train = history.clone();
    let mut test = history.clone();
    train.days.retain(|(d, _)| *d <= cut);
    test.days.retain(|(d, _)| *d > cut);
    (train, test)
}

/// Per-category fit quality. Rates are `None` when their denominator is 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryFit {
    pub category: u8,
    pub predicted: usize,
    pub actual: usize,
    pub hits: usize,
    pub prediction_proportion: f64,
    pub accuracy: Option<f64>,
    pub recall_proportion: f64,
    pub recall_rate: Option<f64>,
    pub stability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub population: usize,
    pub categories: Vec<CategoryFit>,
}

impl FitReport {
    pub fn category(&self, c: u8) -> Option<&CategoryFit> {
        self.categories.iter().find(|f| f.category == c)
    }
}

/// Scores predicted portraits against the test-period label histories.
///
/// For each device the actual portrait is fitted on its test history as of
/// the last test day. A predicted-`c` device is *stable* when the rolling
/// portrait, refitted at every labelled test day, equals `c` throughout.
/// Devices without a test history are skipped.
pub fn evaluate_fit(
    predicted: &[PortraitLabel],
    test: &[DailyLabelHistory],
    params: FitParams,
) -> Result<FitReport, PortraitError> {
    let by_device: HashMap<&str, &DailyLabelHistory> = test.iter().map(|h| (h.device_id.as_str(), h)).collect();
    struct Outcome {
        predicted: u8,
        actual: u8,
        stable: bool,
    }
    let mut outcomes = Vec::with_capacity(predicted.len());
    for p in predicted {
        let Some(h) = by_device.get(p.device_id.as_str()) else {
            continue;
        };
        let Some(end) = h.last_day() else {
            continue;
        };
        let actual = fit_portrait(h, end, params)?.tag;
        let mut stable = true;
        for &(day, _) in &h.days {
            if fit_portrait(h, day, params)?.tag != p.tag {
                stable = false;
                break;
            }
        }
        outcomes.push(Outcome { predicted: p.tag, actual, stable });
    }
    if outcomes.is_empty() {
        return Err(PortraitError::EmptyPopulation);
    }
    let n = outcomes.len();
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let categories = [1u8, 3]
        .into_iter()
        .map(|c| {
            let predicted = outcomes.iter().filter(|o| o.predicted == c).count();
            let actual = outcomes.iter().filter(|o| o.actual == c).count();
            let hits = outcomes.iter().filter(|o| o.predicted == c && o.actual == c).count();
            let stable = outcomes.iter().filter(|o| o.predicted == c && o.stable).count();
            CategoryFit {
                category: c,
                predicted,
                actual,
                hits,
                prediction_proportion: predicted as f64 / n as f64,
                accuracy: ratio(hits, predicted),
                recall_proportion: actual as f64 / n as f64,
                recall_rate: ratio(hits, actual),
                stability: ratio(stable, predicted),
            }
        })
        .collect();
    Ok(FitReport { population: n, categories })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(pairs: &[(&str, Option<f64>)]) -> HashMap<String, Option<f64>> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn day(n: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 7, 1).unwrap() + chrono::Days::new(u64::from(n))
    }

    fn history(tags: &[u8]) -> DailyLabelHistory {
        DailyLabelHistory::new("d", tags.iter().enumerate().map(|(i, &t)| (day(i as u32), t)).collect()).unwrap()
    }

    #[test]
    fn good_network_is_tag_one() {
        let r = LabelRuleSet::network_quality();
        let f = feats(&[
            ("4g_speed", Some(3500.0)),
            ("wifi_speed", Some(4000.0)),
            ("ffd_avg", Some(120.0)),
            ("block_pct", Some(0.0)),
        ]);
        assert_eq!(daily_label(&r, &f), 1);
    }

    #[test]
    fn all_missing_is_tag_zero() {
        let r = LabelRuleSet::network_quality();
        assert_eq!(daily_label(&r, &HashMap::new()), 0);
        let f = feats(&[("4g_speed", None), ("wifi_speed", Some(f64::NAN))]);
        assert_eq!(daily_label(&r, &f), 0);
    }

    #[test]
    fn poor_network_is_tag_three() {
        let r = LabelRuleSet::network_quality();
        let f = feats(&[
            ("4g_speed", Some(1500.0)),
            ("wifi_speed", Some(1500.0)),
            ("ffd_avg", Some(400.0)),
            ("block_pct", Some(0.02)),
        ]);
        assert_eq!(daily_label(&r, &f), 3);
    }

    #[test]
    fn mixed_network_is_tag_two_and_300ms_is_not_poor() {
        let r = LabelRuleSet::network_quality();
        let f = feats(&[
            ("4g_speed", Some(1500.0)),
            ("wifi_speed", Some(1500.0)),
            ("ffd_avg", Some(300.0)),
            ("block_pct", Some(0.02)),
        ]);
        assert_eq!(daily_label(&r, &f), 2);
    }

    #[test]
    fn condition_parsing() {
        let c = Condition::parse("4g_speed > 1600 and <= 3000").unwrap();
        assert!(c.holds(3000.0) && !c.holds(1600.0));
        assert!(Condition::parse("x >> 3").is_err());
        assert!(Condition::parse("x > abc").is_err());
        assert!(matches!(LabelRuleSet::parse("[[tag]]\nid = 1\nwhen = []\n"), Err(PortraitError::MissingTag(0))));
    }

    #[test]
    fn seventy_percent_rule() {
        let p = FitParams::default();
        let mut tags = vec![1u8; 12];
        tags.extend([2, 2, 1]);
        assert_eq!(fit_portrait(&history(&tags), day(14), p).unwrap().tag, 1);
        let mut tags = vec![1u8; 12];
        tags.extend([2, 2, 3]);
        assert_eq!(fit_portrait(&history(&tags), day(14), p).unwrap().tag, 2);
        let empty = DailyLabelHistory::new("d", vec![]).unwrap();
        assert_eq!(fit_portrait(&empty, day(14), p).unwrap().tag, 0);
        // 10 of 15 is below 70%
        let mut tags = vec![3u8; 9];
        tags.extend([0, 0, 0, 0, 0, 3]);
        assert_eq!(fit_portrait(&history(&tags[..]), day(14), p).unwrap().tag, 2);
        assert_eq!(fit_portrait(&history(&[0, 0]), day(1), p).unwrap().tag, 0);
    }

    #[test]
    fn only_window_days_matter() {
        let p = FitParams::default();
        let mut tags = vec![3u8; 30];
        tags[15..].fill(1);
        assert_eq!(fit_portrait(&history(&tags), day(29), p).unwrap().tag, 1);
    }

    #[test]
    fn history_validation() {
        assert!(DailyLabelHistory::new("d", vec![(day(0), 1), (day(0), 2)]).is_err());
        assert!(DailyLabelHistory::new("d", vec![(day(0), 4)]).is_err());
        assert_eq!(
            fit_portrait(&history(&[1]), day(0), FitParams { window_days: 0, threshold: 0.7 }).unwrap_err(),
            PortraitError::ZeroWindow
        );
    }

    #[test]
    fn time_split_is_four_to_one() {
        let h = history(&[1; 51]);
        let (train, test) = split_time_domain(&h);
        assert_eq!(train.days().len(), 41);
        assert_eq!(test.days().len(), 10);
    }

    #[test]
    fn perfect_and_disjoint_predictors() {
        let p = FitParams::default();
        let tests: Vec<DailyLabelHistory> = (0..4)
            .map(|i| {
                let t = if i < 2 { 1 } else { 3 };
                DailyLabelHistory::new(format!("d{i}"), (0..15).map(|k| (day(k), t)).collect()).unwrap()
            })
            .collect();
        let perfect: Vec<PortraitLabel> = (0..4)
            .map(|i| PortraitLabel { device_id: format!("d{i}"), tag: if i < 2 { 1 } else { 3 }, as_of: day(0) })
            .collect();
        let r = evaluate_fit(&perfect, &tests, p).unwrap();
        for c in [1, 3] {
            assert_eq!(r.category(c).unwrap().accuracy, Some(1.0));
            assert_eq!(r.category(c).unwrap().recall_rate, Some(1.0));
            assert_eq!(r.category(c).unwrap().stability, Some(1.0));
        }
        let swapped: Vec<PortraitLabel> =
            perfect.iter().map(|l| PortraitLabel { tag: 4 - l.tag, ..l.clone() }).collect();
        let r = evaluate_fit(&swapped, &tests, p).unwrap();
        assert_eq!(r.category(1).unwrap().accuracy, Some(0.0));
        assert_eq!(evaluate_fit(&[], &tests, p).unwrap_err(), PortraitError::EmptyPopulation);
    }

    #[test]
    fn recall_unavailable_without_actual_members() {
        let p = FitParams::default();
        let tests = vec![history(&[2; 15])];
        let pred = vec![PortraitLabel { device_id: "d".into(), tag: 1, as_of: day(0) }];
        let r = evaluate_fit(&pred, &tests, p).unwrap();
        assert_eq!(r.category(1).unwrap().recall_rate, None);
        assert_eq!(r.category(1).unwrap().accuracy, Some(0.0));
        assert_eq!(r.category(3).unwrap().accuracy, None);
    }
}
