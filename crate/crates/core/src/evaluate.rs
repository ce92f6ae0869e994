//! Entropy-weighted TOPSIS scoring.
//!
//! Pipeline for one snapshot matrix:
//!
//! 1. [`positivize`] turns every indicator into a larger-is-better column;
//! 2. [`entropy_weights`] derives objective weights from the positivized
//!    matrix (min-max to `[0, 100]`, contribution shares, Shannon entropy);
//! 3. [`normalize`] divides each column by its Euclidean norm;
//! 4. [`ideal_targets`] takes column maxima/minima as ideal/anti-ideal;
//! 5. [`topsis_scores`] computes weighted distances and closeness
//!    `S = D- / (D+ + D-)`, scaled to `[0, 100]`.
//!
//! Weights enter the distances per coordinate:
//! `D±_i = sqrt(sum_j w_j (Z±_j - z_ij)^2)`.
//!
//! Degenerate data has fixed conventions: a constant column positivizes to
//! ones, gets entropy weight 0, and a matrix whose rows are all identical
//! scores 0.5 everywhere.

use serde::Serialize;
use thiserror::Error;

use crate::matrix::{DecisionMatrix, MatrixError};
use crate::schema::{Direction, FeatureSchema, SchemaError};

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("need at least 2 evaluation objects, got {0}")]
    TooFewRows(usize),
    #[error("matrix has no indicator columns")]
    NoColumns,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("category `{0}` has no columns in the matrix")]
    EmptyCategory(String),
}

/// Column-normalized matrix `Z`. Columns that were entirely zero stay zero
/// and are listed in `zero_columns`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix {
    pub matrix: DecisionMatrix,
    pub zero_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdealTargets {
    pub best: Vec<f64>,
    pub worst: Vec<f64>,
}

/// Entropy report and final weights. `p[j][i]` is row `i`'s share of column `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub indicators: Vec<String>,
    pub w: Vec<f64>,
    pub e: Vec<f64>,
    pub g: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

impl WeightVector {
    /// Explicit weights without an entropy report, e.g. for hand-set weighting.
    pub fn from_weights(indicators: Vec<String>, w: Vec<f64>) -> Self {
        let m = w.len();
        WeightVector { indicators, w, e: vec![f64::NAN; m], g: vec![f64::NAN; m], p: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub row_ids: Vec<String>,
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    pub d_plus: Vec<f64>,
    pub d_minus: Vec<f64>,
}

fn check_shape(x: &DecisionMatrix) -> Result<(), EvaluateError> {
    if x.ncols() == 0 {
        return Err(EvaluateError::NoColumns);
    }
    if x.nrows() < 2 {
        return Err(EvaluateError::TooFewRows(x.nrows()));
    }
    Ok(())
}

fn min_max(col: &[f64]) -> (f64, f64) {
    col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Positivizes one column given its direction.
pub fn positivize_column(col: &[f64], direction: Direction) -> Vec<f64> {
    let (lo, hi) = min_max(col);
    match direction {
        Direction::Maximal => col.to_vec(),
        Direction::Minimal => col.iter().map(|&x| hi - x).collect(),
        Direction::Intermediate { best } => {
            let m = col.iter().map(|&x| (x - best).abs()).fold(0.0, f64::max);
            if m == 0.0 {
                return vec![1.0; col.len()];
            }
            col.iter().map(|&x| 1.0 - (x - best).abs() / m).collect()
        }
        Direction::Interval { a, b } => {
            let m = (a - lo).max(hi - b);
            if m <= 0.0 {
                return vec![1.0; col.len()];
            }
            col.iter()
                .map(|&x| {
                    if x < a {
                        1.0 - (a - x) / m
                    } else if x <= b {
                        1.0
                    } else {
                        1.0 - (x - b) / m
                    }
                })
                .collect()
        }
    }
}

/// Maps every column to larger-is-better using the schema's directions.
/// Columns are matched to indicators by name.
pub fn positivize(x: &DecisionMatrix, schema: &FeatureSchema) -> Result<DecisionMatrix, EvaluateError> {
    let cols = x
        .columns()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let spec = schema.get(name).ok_or_else(|| MatrixError::UnknownColumn(name.clone()))?;
            Ok(positivize_column(&x.column(j), spec.direction))
        })
        .collect::<Result<Vec<_>, EvaluateError>>()?;
    Ok(DecisionMatrix::from_columns(x.row_ids().to_vec(), x.columns().to_vec(), &cols))
}

/// `z_ij = x_ij / ||x_.j||`. All-zero columns stay zero and are reported.
pub fn normalize(x_pos: &DecisionMatrix) -> NormalizedMatrix {
    let mut zero_columns = Vec::new();
    let cols: Vec<Vec<f64>> = (0..x_pos.ncols())
        .map(|j| {
            let col = x_pos.column(j);
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                log::warn!("indicator `{}` is all zero after positivization", x_pos.columns()[j]);
                zero_columns.push(x_pos.columns()[j].clone());
                col
            } else {
                col.iter().map(|v| v / norm).collect()
            }
        })
        .collect();
    NormalizedMatrix {
        matrix: DecisionMatrix::from_columns(x_pos.row_ids().to_vec(), x_pos.columns().to_vec(), &cols),
        zero_columns,
    }
}

pub fn ideal_targets(z: &NormalizedMatrix) -> IdealTargets {
    let (worst, best) = (0..z.matrix.ncols()).map(|j| min_max(&z.matrix.column(j))).unzip();
    IdealTargets { best, worst }
}

pub fn topsis_scores(
    z: &NormalizedMatrix,
    targets: &IdealTargets,
    weights: &WeightVector,
) -> Result<ScoreVector, EvaluateError> {
    let m = z.matrix.ncols();
    if targets.best.len() != m || targets.worst.len() != m || weights.w.len() != m {
        return Err(EvaluateError::DimensionMismatch(format!(
            "{m} columns, {} / {} targets, {} weights",
            targets.best.len(),
            targets.worst.len(),
            weights.w.len()
        )));
    }
    let n = z.matrix.nrows();
    let mut out = ScoreVector {
        row_ids: z.matrix.row_ids().to_vec(),
        raw: Vec::with_capacity(n),
        scaled: Vec::with_capacity(n),
        d_plus: Vec::with_capacity(n),
        d_minus: Vec::with_capacity(n),
    };
    for row in z.matrix.rows() {
        let mut sp = 0.0;
        let mut sm = 0.0;
        for j in 0..m {
            let w = weights.w[j];
            sp += w * (targets.best[j] - row[j]).powi(2);
            sm += w * (targets.worst[j] - row[j]).powi(2);
        }
        let (dp, dm) = (sp.sqrt(), sm.sqrt());
        let raw = if dp + dm > 0.0 { dm / (dp + dm) } else { 0.5 };
        out.d_plus.push(dp);
        out.d_minus.push(dm);
        out.raw.push(raw);
        out.scaled.push(100.0 * raw);
    }
    Ok(out)
}

/// Contribution shares `p_ij` after min-max standardization to `[0, 100]`.
/// A constant column yields uniform shares (entropy 1).
fn contribution_shares(col: &[f64]) -> Vec<f64> {
    let n = col.len();
    let (lo, hi) = min_max(col);
    if hi - lo <= 0.0 {
        return vec![1.0 / n as f64; n];
    }
    let std: Vec<f64> = col.iter().map(|&x| (x - lo) / (hi - lo) * 100.0).collect();
    let total: f64 = std.iter().sum();
    std.iter().map(|v| v / total).collect()
}

/// Objective weights from the positivized matrix.
pub fn entropy_weights(x_pos: &DecisionMatrix) -> Result<WeightVector, EvaluateError> {
    check_shape(x_pos)?;
    let n = x_pos.nrows();
    let k = 1.0 / (n as f64).ln();
    let p: Vec<Vec<f64>> = (0..x_pos.ncols()).map(|j| contribution_shares(&x_pos.column(j))).collect();
    let e: Vec<f64> = (0..x_pos.ncols())
        .map(|j| {
            let (lo, hi) = min_max(&x_pos.column(j));
            if hi - lo <= 0.0 {
                return 1.0;
            }
            // 0 ln 0 = 0
            let h: f64 = p[j].iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum();
            (-k * h).clamp(0.0, 1.0)
        })
        .collect();
    let g: Vec<f64> = e.iter().map(|e| 1.0 - e).collect();
    let total: f64 = g.iter().sum();
    let w = if total > 0.0 { g.iter().map(|v| v / total).collect() } else { vec![1.0 / g.len() as f64; g.len()] };
    Ok(WeightVector { indicators: x_pos.columns().to_vec(), w, e, g, p })
}

/// Linear entropy score `s_i = sum_j w_j p_ij`; a diagnostic alongside the
/// TOPSIS closeness.
pub fn entropy_linear_score(weights: &WeightVector) -> Vec<f64> {
    let n = weights.p.first().map_or(0, Vec::len);
    (0..n).map(|i| weights.w.iter().zip(&weights.p).map(|(w, col)| w * col[i]).sum()).collect()
}

/// Every intermediate of a single-level evaluation.
#[derive(Debug, Clone)]
pub struct SnapshotEvaluation {
    pub positive: DecisionMatrix,
    pub normalized: NormalizedMatrix,
    pub weights: WeightVector,
    pub targets: IdealTargets,
    pub scores: ScoreVector,
}

pub fn evaluate_snapshot_detailed(
    x: &DecisionMatrix,
    schema: &FeatureSchema,
) -> Result<SnapshotEvaluation, EvaluateError> {
    check_shape(x)?;
    let positive = positivize(x, schema)?;
    let weights = entropy_weights(&positive)?;
    let normalized = normalize(&positive);
    let targets = ideal_targets(&normalized);
    let scores = topsis_scores(&normalized, &targets, &weights)?;
    Ok(SnapshotEvaluation { positive, normalized, weights, targets, scores })
}

pub fn evaluate_snapshot(x: &DecisionMatrix, schema: &FeatureSchema) -> Result<ScoreVector, EvaluateError> {
    evaluate_snapshot_detailed(x, schema).map(|ev| ev.scores)
}

/// Two-stage evaluation: per-category scores, then a global score over the
/// category scores.
#[derive(Debug, Clone)]
pub struct MultilevelEvaluation {
    pub per_category: Vec<(String, SnapshotEvaluation)>,
    /// Stage-2 input: one maximal column of scaled scores per category.
    pub category_scores: DecisionMatrix,
    pub stage2: Option<SnapshotEvaluation>,
    pub scores: ScoreVector,
}

pub fn evaluate_multilevel_detailed(
    x: &DecisionMatrix,
    schema: &FeatureSchema,
) -> Result<MultilevelEvaluation, EvaluateError> {
    check_shape(x)?;
    for c in x.columns() {
        if schema.get(c).is_none() {
            return Err(MatrixError::UnknownColumn(c.clone()).into());
        }
    }
    let mut per_category = Vec::with_capacity(schema.categories().len());
    for cat in schema.categories() {
        let idx: Vec<usize> = x
            .columns()
            .iter()
            .enumerate()
            .filter(|(_, name)| schema.get(name).is_some_and(|s| &s.category == cat))
            .map(|(j, _)| j)
            .collect();
        if idx.is_empty() {
            return Err(EvaluateError::EmptyCategory(cat.clone()));
        }
        per_category.push((cat.clone(), evaluate_snapshot_detailed(&x.select_columns(&idx), schema)?));
    }

    let cat_cols: Vec<Vec<f64>> = per_category.iter().map(|(_, ev)| ev.scores.scaled.clone()).collect();
    let cat_names: Vec<String> = per_category.iter().map(|(c, _)| c.clone()).collect();
    let category_scores = DecisionMatrix::from_columns(x.row_ids().to_vec(), cat_names.clone(), &cat_cols);

    if per_category.len() == 1 {
        let scores = per_category[0].1.scores.clone();
        return Ok(MultilevelEvaluation { per_category, category_scores, stage2: None, scores });
    }
    let stage_schema = FeatureSchema::all_maximal(cat_names)?;
    let stage2 = evaluate_snapshot_detailed(&category_scores, &stage_schema)?;
    let scores = stage2.scores.clone();
    Ok(MultilevelEvaluation { per_category, category_scores, stage2: Some(stage2), scores })
}

pub fn evaluate_multilevel(x: &DecisionMatrix, schema: &FeatureSchema) -> Result<ScoreVector, EvaluateError> {
    evaluate_multilevel_detailed(x, schema).map(|ev| ev.scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{IndicatorSpec, ValidRange};

    fn spec(name: &str, cat: &str, direction: Direction) -> IndicatorSpec {
        IndicatorSpec {
            name: name.into(),
            category: cat.into(),
            unit: String::new(),
            direction,
            valid_range: ValidRange { lo: -1e12, hi: 1e12 },
        }
    }

    fn matrix(cols: &[&str], rows: Vec<Vec<f64>>) -> DecisionMatrix {
        DecisionMatrix::from_unnamed_rows(cols.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    fn col(values: &[f64]) -> DecisionMatrix {
        matrix(&["x"], values.iter().map(|&v| vec![v]).collect())
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn positivize_forced_cases() {
        assert_eq!(positivize_column(&[1.0, 2.0, 5.0], Direction::Minimal), [4.0, 3.0, 0.0]);
        assert_eq!(positivize_column(&[3.0, 5.0, 7.0], Direction::Intermediate { best: 5.0 }), [0.0, 1.0, 0.0]);
        assert_eq!(positivize_column(&[1.0, 3.0, 6.0], Direction::Interval { a: 2.0, b: 4.0 }), [0.5, 1.0, 0.0]);
        assert_eq!(positivize_column(&[2.0, 9.0], Direction::Maximal), [2.0, 9.0]);
    }

    #[test]
    fn positivize_degenerate_is_all_ones() {
        assert_eq!(positivize_column(&[5.0, 5.0], Direction::Intermediate { best: 5.0 }), [1.0, 1.0]);
        assert_eq!(positivize_column(&[2.5, 3.0], Direction::Interval { a: 2.0, b: 4.0 }), [1.0, 1.0]);
    }

    #[test]
    fn normalize_cases() {
        let z = normalize(&col(&[3.0, 4.0]));
        assert!(close(&z.matrix.column(0), &[0.6, 0.8], 1e-15));
        let z = normalize(&col(&[5.0, 5.0]));
        let h = 1.0 / 2f64.sqrt();
        assert!(close(&z.matrix.column(0), &[h, h], 1e-15));
        let z = normalize(&col(&[0.0, 0.0]));
        assert_eq!(z.matrix.column(0), [0.0, 0.0]);
        assert_eq!(z.zero_columns, ["x".to_string()]);
    }

    #[test]
    fn targets_cases() {
        let t = ideal_targets(&normalize(&col(&[3.0, 4.0])));
        assert!(close(&t.best, &[0.8], 1e-15) && close(&t.worst, &[0.6], 1e-15));
        let t = ideal_targets(&normalize(&col(&[2.0, 2.0])));
        assert_eq!(t.best, t.worst);
    }

    #[test]
    fn targets_match_exhaustive_scan() {
        let x = matrix(&["a", "b"], vec![vec![0.3, 0.9], vec![0.7, 0.1], vec![0.5, 0.4]]);
        let z = normalize(&x);
        let t = ideal_targets(&z);
        for j in 0..2 {
            let mut best = f64::MIN;
            let mut worst = f64::MAX;
            for i in 0..3 {
                let v = z.matrix.get(i, j);
                if v > best {
                    best = v;
                }
                if v < worst {
                    worst = v;
                }
            }
            assert_eq!(t.best[j], best);
            assert_eq!(t.worst[j], worst);
        }
    }

    #[test]
    fn topsis_poles_and_degenerate() {
        let z = normalize(&col(&[3.0, 4.0]));
        let t = ideal_targets(&z);
        let w = WeightVector::from_weights(vec!["x".into()], vec![1.0]);
        let s = topsis_scores(&z, &t, &w).unwrap();
        assert_eq!(s.raw, [0.0, 1.0]);
        assert_eq!(s.scaled, [0.0, 100.0]);

        let x = matrix(&["a", "b"], vec![vec![1.0, 2.0]; 3]);
        let z = normalize(&x);
        let w = WeightVector::from_weights(vec!["a".into(), "b".into()], vec![0.5, 0.5]);
        let s = topsis_scores(&z, &ideal_targets(&z), &w).unwrap();
        assert_eq!(s.raw, [0.5, 0.5, 0.5]);
    }

    #[test]
    fn topsis_dimension_mismatch() {
        let z = normalize(&col(&[3.0, 4.0]));
        let t = ideal_targets(&z);
        let w = WeightVector::from_weights(vec!["x".into(), "y".into()], vec![0.5, 0.5]);
        assert!(matches!(topsis_scores(&z, &t, &w), Err(EvaluateError::DimensionMismatch(_))));
    }

    #[test]
    fn entropy_of_one_two_three() {
        let w = entropy_weights(&matrix(&["x", "c"], vec![vec![1.0, 7.0], vec![2.0, 7.0], vec![3.0, 7.0]])).unwrap();
        // e = -(1/ln 3) * ((1/3) ln(1/3) + (2/3) ln(2/3))
        let expected = -((1.0f64 / 3.0) * (1.0f64 / 3.0).ln() + (2.0f64 / 3.0) * (2.0f64 / 3.0).ln()) / 3f64.ln();
        assert!((w.e[0] - expected).abs() < 1e-12);
        assert!((w.e[0] - 0.5793).abs() < 1e-4);
        assert!((w.g[0] - 0.4207).abs() < 1e-4);
        assert_eq!(w.w, [1.0, 0.0]);
        assert_eq!(w.e[1], 1.0);
    }

    #[test]
    fn entropy_uniform_when_symmetric_or_constant() {
        let w = entropy_weights(&matrix(&["a", "b"], vec![vec![1.0, 10.0], vec![4.0, 40.0], vec![2.0, 20.0]])).unwrap();
        assert!(close(&w.w, &[0.5, 0.5], 1e-12));
        let w = entropy_weights(&matrix(&["a", "b"], vec![vec![1.0, 3.0], vec![1.0, 3.0]])).unwrap();
        assert_eq!(w.w, [0.5, 0.5]);
    }

    #[test]
    fn entropy_needs_two_rows() {
        assert!(matches!(entropy_weights(&col(&[1.0])), Err(EvaluateError::TooFewRows(1))));
    }

    #[test]
    fn spike_column_outweighs_linear_column() {
        let x = matrix(&["lin", "spike"], vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0], vec![4.0, 9.0]]);
        let w = entropy_weights(&x).unwrap();
        assert!(w.g[1] > w.g[0]);
        assert_eq!(w.e[1], 0.0);
    }

    #[test]
    fn linear_score_sums_weighted_shares() {
        let x = matrix(&["a", "b"], vec![vec![1.0, 5.0], vec![3.0, 1.0], vec![2.0, 2.0]]);
        let w = entropy_weights(&x).unwrap();
        let s = entropy_linear_score(&w);
        assert_eq!(s.len(), 3);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snapshot_single_indicator_and_duplicates() {
        let schema = FeatureSchema::new(vec![spec("x", "A", Direction::Maximal)], None).unwrap();
        let s = evaluate_snapshot(&col(&[3.0, 4.0]), &schema).unwrap();
        assert_eq!(s.scaled, [0.0, 100.0]);

        let schema =
            FeatureSchema::new(vec![spec("a", "A", Direction::Maximal), spec("b", "A", Direction::Minimal)], None)
                .unwrap();
        let x = matrix(&["a", "b"], vec![vec![1.0, 5.0], vec![3.0, 1.0], vec![2.0, 2.0], vec![3.0, 1.0]]);
        let s = evaluate_snapshot(&x, &schema).unwrap();
        assert_eq!(s.raw[1], s.raw[3]);
    }

    #[test]
    fn multilevel_collapses_and_zeroes_constant_category() {
        let one =
            FeatureSchema::new(vec![spec("a", "A", Direction::Maximal), spec("b", "A", Direction::Minimal)], None)
                .unwrap();
        let x = matrix(&["a", "b"], vec![vec![1.0, 5.0], vec![3.0, 1.0], vec![2.0, 4.0]]);
        assert_eq!(evaluate_multilevel(&x, &one).unwrap(), evaluate_snapshot(&x, &one).unwrap());

        let two = FeatureSchema::new(
            vec![
                spec("a", "A", Direction::Maximal),
                spec("b", "A", Direction::Minimal),
                spec("c", "B", Direction::Maximal),
            ],
            None,
        )
        .unwrap();
        let x = matrix(&["a", "b", "c"], vec![vec![1.0, 5.0, 2.0], vec![3.0, 1.0, 2.0], vec![2.0, 4.0, 2.0]]);
        let ev = evaluate_multilevel_detailed(&x, &two).unwrap();
        let stage2 = ev.stage2.unwrap();
        assert_eq!(stage2.weights.w, [1.0, 0.0]);
    }

    #[test]
    fn multilevel_rejects_missing_category() {
        let two =
            FeatureSchema::new(vec![spec("a", "A", Direction::Maximal), spec("c", "B", Direction::Maximal)], None)
                .unwrap();
        let x = matrix(&["a"], vec![vec![1.0], vec![2.0]]);
        assert!(matches!(evaluate_multilevel(&x, &two), Err(EvaluateError::EmptyCategory(c)) if c == "B"));
    }
}
