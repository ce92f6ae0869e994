//! Feature universe: indicator declarations, directions, valid ranges and
//! the category hierarchy.
//!
//! A schema is written as TOML. Each indicator is one `[[indicator]]` block:
//!
//! ```toml
//! categories = ["CPU"]          # optional; defaults to first-appearance order
//!
//! [[indicator]]
//! name = "cpu_usage_ratio"
//! category = "CPU"
//! unit = "%"
//! direction = "minimal"         # maximal | minimal | intermediate best=<x> | interval a=<x> b=<y>
//! range = [0, 100]
//! ```
//!
//! Declaration order is the canonical column order of every matrix built
//! from the schema.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{arg_f64, split_head_args};

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Malformed(String),
    #[error("empty schema")]
    Empty,
    #[error("duplicate indicator name `{0}`")]
    DuplicateIndicator(String),
    #[error("indicator `{name}`: {reason}")]
    InvalidIndicator { name: String, reason: String },
    #[error("indicator `{indicator}` references undeclared category `{category}`")]
    UnknownCategory { indicator: String, category: String },
    #[error("empty category `{0}`")]
    EmptyCategory(String),
    #[error("record for device `{device}` carries unknown indicator `{indicator}`")]
    UnknownIndicator { device: String, indicator: String },
}

/// How an indicator relates to "better".
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Direction {
    /// Larger is better.
    Maximal,
    /// Smaller is better.
    Minimal,
    /// Closest to `best` is better.
    Intermediate { best: f64 },
    /// Anything inside `[a, b]` is best.
    Interval { a: f64, b: f64 },
}

impl Direction {
    pub fn parse(text: &str) -> Option<Direction> {
        let (head, args) = split_head_args(text);
        match head {
            "maximal" if args.is_empty() => Some(Direction::Maximal),
            "minimal" if args.is_empty() => Some(Direction::Minimal),
            "intermediate" => arg_f64(&args, "best").map(|best| Direction::Intermediate { best }),
            "interval" => Some(Direction::Interval { a: arg_f64(&args, "a")?, b: arg_f64(&args, "b")? }),
            _ => None,
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Maximal => write!(f, "maximal"),
            Direction::Minimal => write!(f, "minimal"),
            Direction::Intermediate { best } => write!(f, "intermediate best={best}"),
            Direction::Interval { a, b } => write!(f, "interval a={a} b={b}"),
        }
    }
}

/// Closed interval of admissible raw values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValidRange {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorSpec {
    pub name: String,
    pub category: String,
    pub unit: String,
    pub direction: Direction,
    pub valid_range: ValidRange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSchema {
    indicators: Vec<IndicatorSpec>,
    categories: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    categories: Option<Vec<String>>,
    #[serde(default)]
    indicator: Vec<RawIndicator>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIndicator {
    name: String,
    category: String,
    #[serde(default)]
    unit: String,
    direction: String,
    range: [f64; 2],
}

/// Parses and validates a schema document.
pub fn parse_schema(text: &str) -> Result<FeatureSchema, SchemaError> {
    let raw: RawSchema = toml::from_str(text).map_err(|e| SchemaError::Malformed(e.message().to_string()))?;
    let indicators = raw
        .indicator
        .into_iter()
        .map(|ri| {
            let direction = Direction::parse(&ri.direction).ok_or_else(|| SchemaError::InvalidIndicator {
                name: ri.name.clone(),
                reason: format!("unrecognised direction `{}`", ri.direction),
            })?;
            Ok(IndicatorSpec {
                name: ri.name,
                category: ri.category,
                unit: ri.unit,
                direction,
                valid_range: ValidRange { lo: ri.range[0], hi: ri.range[1] },
            })
        })
        .collect::<Result<Vec<_>, SchemaError>>()?;
    FeatureSchema::new(indicators, raw.categories)
}

/// The 22-indicator device feature schema shipped with the crate.
pub fn builtin_schema() -> FeatureSchema {
    parse_schema(include_str!("../data/device_schema.toml")).expect("shipped schema parses")
}

impl FeatureSchema {
    /// Builds a schema, checking every declaration invariant. When
    /// `categories` is `None` the category list is taken from the
    /// indicators in order of first appearance.
    pub fn new(indicators: Vec<IndicatorSpec>, categories: Option<Vec<String>>) -> Result<Self, SchemaError> {
        if indicators.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen = HashSet::new();
        for spec in &indicators {
            if spec.name.trim().is_empty() {
                return Err(SchemaError::InvalidIndicator { name: spec.name.clone(), reason: "empty name".into() });
            }
            if !seen.insert(spec.name.as_str()) {
                return Err(SchemaError::DuplicateIndicator(spec.name.clone()));
            }
            validate_indicator(spec)?;
        }

        let categories = match categories {
            Some(listed) => {
                let mut uniq = HashSet::new();
                for c in &listed {
                    if c.trim().is_empty() {
                        return Err(SchemaError::EmptyCategory(c.clone()));
                    }
                    if !uniq.insert(c.as_str()) {
                        return Err(SchemaError::Malformed(format!("category `{c}` listed twice")));
                    }
                }
                for spec in &indicators {
                    if !uniq.contains(spec.category.as_str()) {
                        return Err(SchemaError::UnknownCategory {
                            indicator: spec.name.clone(),
                            category: spec.category.clone(),
                        });
                    }
                }
                if let Some(empty) = listed.iter().find(|c| !indicators.iter().any(|s| &s.category == *c)) {
                    return Err(SchemaError::EmptyCategory(empty.clone()));
                }
                listed
            }
            None => {
                let mut out: Vec<String> = Vec::new();
                for spec in &indicators {
                    if spec.category.trim().is_empty() {
                        return Err(SchemaError::EmptyCategory(spec.category.clone()));
                    }
                    if !out.contains(&spec.category) {
                        out.push(spec.category.clone());
                    }
                }
                out
            }
        };

        Ok(FeatureSchema { indicators, categories })
    }

    pub fn indicators(&self) -> &[IndicatorSpec] {
        &self.indicators
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.indicators.iter().map(|s| s.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&IndicatorSpec> {
        self.indicators.iter().find(|s| s.name == name)
    }

    pub fn column_of(&self, name: &str) -> Option<usize> {
        self.indicators.iter().position(|s| s.name == name)
    }

    /// Column indices (schema order) belonging to `category`.
    pub fn category_columns(&self, category: &str) -> Vec<usize> {
        self.indicators.iter().enumerate().filter(|(_, s)| s.category == category).map(|(i, _)| i).collect()
    }

    /// Schema of maximal indicators in `[0, 100]`, one per name. Used for
    /// the second stage of hierarchical scoring.
    pub fn all_maximal<I, S>(names: I) -> Result<FeatureSchema, SchemaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let indicators = names
            .into_iter()
            .map(|n| IndicatorSpec {
                name: n.into(),
                category: "score".into(),
                unit: String::new(),
                direction: Direction::Maximal,
                valid_range: ValidRange { lo: 0.0, hi: 100.0 },
            })
            .collect();
        FeatureSchema::new(indicators, None)
    }
}

fn validate_indicator(spec: &IndicatorSpec) -> Result<(), SchemaError> {
    let bad = |reason: String| SchemaError::InvalidIndicator { name: spec.name.clone(), reason };
    let ValidRange { lo, hi } = spec.valid_range;
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(bad(format!("range [{lo}, {hi}] must satisfy lo < hi")));
    }
    match spec.direction {
        Direction::Interval { a, b } => {
            if a > b {
                return Err(bad(format!("interval with a > b ({a} > {b})")));
            }
            if a < lo || b > hi {
                return Err(bad(format!("interval [{a}, {b}] not inside range [{lo}, {hi}]")));
            }
        }
        Direction::Intermediate { best } if !best.is_finite() => {
            return Err(bad("non-finite best value".into()));
        }
        _ => {}
    }
    Ok(())
}

/// One telemetry sample. Absent keys are missing values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub device_id: String,
    pub model_id: String,
    pub ts_ms: u64,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
}

/// Drops every value outside its indicator's closed valid range.
/// Non-finite values are treated as out of range.
pub fn validate_record(schema: &FeatureSchema, rec: &FeatureRecord) -> Result<FeatureRecord, SchemaError> {
    let mut values = BTreeMap::new();
    for (name, &v) in &rec.values {
        let spec = schema
            .get(name)
            .ok_or_else(|| SchemaError::UnknownIndicator { device: rec.device_id.clone(), indicator: name.clone() })?;
        if v.is_finite() && spec.valid_range.contains(v) {
            values.insert(name.clone(), v);
        }
    }
    Ok(FeatureRecord { values, ..rec.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CPU: &str = r#"
[[indicator]]
name = "cpu_usage_ratio"
category = "CPU"
unit = "%"
direction = "minimal"
range = [0, 100]

[[indicator]]
name = "cpu_speed"
category = "CPU"
unit = "GHz"
direction = "maximal"
range = [0, 10]
"#;

    fn record(pairs: &[(&str, f64)]) -> FeatureRecord {
        FeatureRecord {
            device_id: "d1".into(),
            model_id: "m1".into(),
            ts_ms: 0,
            values: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn two_cpu_indicators_one_category() {
        let s = parse_schema(CPU).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.categories(), ["CPU".to_string()]);
        assert_eq!(s.names().collect::<Vec<_>>(), ["cpu_usage_ratio", "cpu_speed"]);
        assert_eq!(s.indicators()[0].direction, Direction::Minimal);
    }

    #[test]
    fn zero_indicators_is_empty_schema() {
        let err = parse_schema("").unwrap_err();
        assert_eq!(err, SchemaError::Empty);
        assert_eq!(err.to_string(), "empty schema");
    }

    #[test]
    fn interval_inside_range_accepted() {
        let s = parse_schema(
            r#"
[[indicator]]
name = "battery_temprature"
category = "Energy"
direction = "interval a=20 b=35"
range = [-20, 80]
"#,
        )
        .unwrap();
        assert_eq!(s.indicators()[0].direction, Direction::Interval { a: 20.0, b: 35.0 });
    }

    #[test]
    fn rejects_bad_declarations() {
        let block = |name: &str, dir: &str, range: &str| {
            format!("[[indicator]]\nname = \"{name}\"\ncategory = \"C\"\ndirection = \"{dir}\"\nrange = {range}\n")
        };
        let dup = format!("{}{}", block("x", "maximal", "[0, 1]"), block("x", "minimal", "[0, 1]"));
        assert_eq!(parse_schema(&dup).unwrap_err(), SchemaError::DuplicateIndicator("x".into()));
        assert!(matches!(
            parse_schema(&block("x", "interval a=5 b=2", "[0, 10]")),
            Err(SchemaError::InvalidIndicator { .. })
        ));
        assert!(matches!(
            parse_schema(&block("x", "interval a=5 b=20", "[0, 10]")),
            Err(SchemaError::InvalidIndicator { .. })
        ));
        assert!(matches!(parse_schema(&block("x", "maximal", "[3, 3]")), Err(SchemaError::InvalidIndicator { .. })));
        assert!(matches!(parse_schema(&block("x", "sideways", "[0, 1]")), Err(SchemaError::InvalidIndicator { .. })));
        assert!(matches!(parse_schema("[[indicator]]\nname = 3"), Err(SchemaError::Malformed(_))));
    }

    #[test]
    fn listed_categories_must_be_populated() {
        let text = format!("categories = [\"CPU\", \"Memory\"]\n{CPU}");
        assert_eq!(parse_schema(&text).unwrap_err(), SchemaError::EmptyCategory("Memory".into()));
        let text = format!("categories = [\"Memory\"]\n{CPU}");
        assert!(matches!(parse_schema(&text), Err(SchemaError::UnknownCategory { .. })));
    }

    #[test]
    fn out_of_range_value_becomes_missing() {
        let s = parse_schema(CPU).unwrap();
        let out = validate_record(&s, &record(&[("cpu_usage_ratio", 150.0), ("cpu_speed", 2.0)])).unwrap();
        assert!(!out.values.contains_key("cpu_usage_ratio"));
        assert_eq!(out.values["cpu_speed"], 2.0);
    }

    #[test]
    fn in_range_and_boundary_values_kept() {
        let s = parse_schema(CPU).unwrap();
        let rec = record(&[("cpu_usage_ratio", 100.0), ("cpu_speed", 0.0)]);
        assert_eq!(validate_record(&s, &rec).unwrap(), rec);
    }

    #[test]
    fn unknown_indicator_rejected() {
        let s = parse_schema(CPU).unwrap();
        assert!(matches!(validate_record(&s, &record(&[("gpu", 1.0)])), Err(SchemaError::UnknownIndicator { .. })));
    }

    #[test]
    fn shipped_schema_parses() {
        let s = parse_schema(include_str!("../data/device_schema.toml")).unwrap();
        assert_eq!(s.len(), 22);
        assert_eq!(s.categories().len(), 8);
        assert_eq!(s.get("bytebench").unwrap().direction, Direction::Maximal);
    }
}
