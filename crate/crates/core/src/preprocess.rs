//! Time-series gap filling and offline feature-reduction helpers
//! (Pearson correlation, PCA on the correlation matrix).

use thiserror::Error;

use crate::matrix::DecisionMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("series has no observed values")]
    AllMissing,
    #[error("timestamps and values differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("timestamps must be strictly ascending (index {0})")]
    NotAscending(usize),
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("need more rows than columns for PCA (n = {n}, m = {m})")]
    TooFewRows { n: usize, m: usize },
    #[error("variance target must be in (0, 1], got {0}")]
    BadTarget(f64),
}

/// A per-device feature series where `None` marks a missing sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesWithGaps {
    timestamps: Vec<u64>,
    values: Vec<Option<f64>>,
}

impl SeriesWithGaps {
    pub fn new(timestamps: Vec<u64>, values: Vec<Option<f64>>) -> Result<Self, PreprocessError> {
        if timestamps.len() != values.len() {
            return Err(PreprocessError::LengthMismatch(timestamps.len(), values.len()));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(PreprocessError::NotAscending(i + 1));
        }
        // Non-finite samples count as missing.
        let values = values.into_iter().map(|v| v.filter(|x| x.is_finite())).collect();
        Ok(SeriesWithGaps { timestamps, values })
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }
}

/// Fills interior gaps linearly in timestamp space and edge gaps with the
/// nearest observation.
pub fn interpolate_linear(s: &SeriesWithGaps) -> Result<SeriesWithGaps, PreprocessError> {
    let observed: Vec<usize> = (0..s.values.len()).filter(|&i| s.values[i].is_some()).collect();
    let (&first, &last) = match (observed.first(), observed.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(PreprocessError::AllMissing),
    };
    let mut out = s.values.clone();
    let first_v = s.values[first].unwrap();
    let last_v = s.values[last].unwrap();
    out[..first].iter_mut().for_each(|v| *v = Some(first_v));
    out[last + 1..].iter_mut().for_each(|v| *v = Some(last_v));
    for pair in observed.windows(2) {
        let (l, r) = (pair[0], pair[1]);
        let (tl, tr) = (s.timestamps[l] as f64, s.timestamps[r] as f64);
        let (vl, vr) = (s.values[l].unwrap(), s.values[r].unwrap());
        for k in l + 1..r {
            let frac = (s.timestamps[k] as f64 - tl) / (tr - tl);
            out[k] = Some(vl + frac * (vr - vl));
        }
    }
    Ok(SeriesWithGaps { timestamps: s.timestamps.clone(), values: out })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Columns centred and scaled to unit sample variance.
pub fn standardize(x: &DecisionMatrix) -> Result<Vec<Vec<f64>>, PreprocessError> {
    let n = x.nrows();
    (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let mu = mean(&col);
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            // Relative guard: constant columns may pick up rounding noise.
            let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            if n < 2 || !(var.sqrt() > 1e-12 * scale) {
                return Err(PreprocessError::ZeroVariance(x.columns()[j].clone()));
            }
            let sd = var.sqrt();
            Ok(col.iter().map(|v| (v - mu) / sd).collect())
        })
        .collect()
}

fn correlation_of_standardized(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = cols.len();
    let n = cols.first().map_or(0, Vec::len);
    let mut r = vec![vec![0.0; m]; m];
    for a in 0..m {
        r[a][a] = 1.0;
        for b in a + 1..m {
            let s: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
            let v = (s / (n as f64 - 1.0)).clamp(-1.0, 1.0);
            r[a][b] = v;
            r[b][a] = v;
        }
    }
    r
}

/// Pearson correlation matrix of the columns of `x`.
pub fn correlation_matrix(x: &DecisionMatrix) -> Result<Vec<Vec<f64>>, PreprocessError> {
    if x.nrows() < 2 {
        return Err(PreprocessError::TooFewRows { n: x.nrows(), m: x.ncols() });
    }
    Ok(correlation_of_standardized(&standardize(x)?))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and eigenvectors (as columns `vectors[.][k]`),
/// unsorted.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    const TOL: f64 = 1e-10;
    const MAX_SWEEPS: usize = 100;
    let m = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; m]; m];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let off = |a: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..MAX_SWEEPS {
        if off(&a) < TOL {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                if a[p][q].abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..m).map(|i| a[i][i]).collect(), v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// Unit eigenvectors of the correlation matrix, by decreasing eigenvalue.
    /// The largest-magnitude entry of each is positive.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub selected_count: usize,
}

impl PcaResult {
    /// Projects standardized rows onto the first `k` components.
    pub fn project(&self, standardized_cols: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
        let n = standardized_cols.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| {
                self.components[..k]
                    .iter()
                    .map(|c| c.iter().zip(standardized_cols).map(|(w, col)| w * col[i]).sum())
                    .collect()
            })
            .collect()
    }
}

pub fn pca(x: &DecisionMatrix, variance_target: f64) -> Result<PcaResult, PreprocessError> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(PreprocessError::BadTarget(variance_target));
    }
    let (n, m) = (x.nrows(), x.ncols());
    if m == 0 || n <= m {
        return Err(PreprocessError::TooFewRows { n, m });
    }
    let corr = correlation_of_standardized(&standardize(x)?);
    let (values, vectors) = jacobi_eigen(&corr);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| values[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained_variance_ratio: Vec<f64> = eigenvalues.iter().map(|v| v / total).collect();
    let components = order
        .iter()
        .map(|&k| {
            let mut c: Vec<f64> = (0..m).map(|i| vectors[i][k]).collect();
            let lead = c.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            if lead < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            c
        })
        .collect();

    let mut cum = 0.0;
    let mut selected_count = m;
    for (k, r) in explained_variance_ratio.iter().enumerate() {
        cum += r;
        // Small slack so a target of exactly 1.0 is reachable under rounding.
        if cum >= variance_target - 1e-12 {
            selected_count = k + 1;
            break;
        }
    }
    Ok(PcaResult { components, eigenvalues, explained_variance_ratio, selected_count })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(ts: &[u64], vals: &[Option<f64>]) -> SeriesWithGaps {
        SeriesWithGaps::new(ts.to_vec(), vals.to_vec()).unwrap()
    }

    fn matrix(cols: Vec<Vec<f64>>) -> DecisionMatrix {
        let names = (0..cols.len()).map(|j| format!("c{j}")).collect();
        let n = cols[0].len();
        let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        DecisionMatrix::from_unnamed_rows(names, rows).unwrap()
    }

    #[test]
    fn interpolation_cases() {
        let out = interpolate_linear(&series(&[0, 10, 20], &[Some(1.0), None, Some(3.0)])).unwrap();
        assert_eq!(out.values(), &[Some(1.0), Some(2.0), Some(3.0)]);
        let out = interpolate_linear(&series(&[0, 10, 20], &[None, Some(5.0), None])).unwrap();
        assert_eq!(out.values(), &[Some(5.0); 3]);
        let out = interpolate_linear(&series(&[0, 5, 20], &[Some(0.0), None, Some(4.0)])).unwrap();
        assert_eq!(out.values(), &[Some(0.0), Some(1.0), Some(4.0)]);
    }

    #[test]
    fn interpolation_errors() {
        assert_eq!(interpolate_linear(&series(&[0, 1], &[None, None])).unwrap_err(), PreprocessError::AllMissing);
        assert!(SeriesWithGaps::new(vec![0, 0], vec![None, None]).is_err());
        assert!(SeriesWithGaps::new(vec![0], vec![None, None]).is_err());
    }

    #[test]
    fn correlation_cases() {
        let r =
            correlation_matrix(&matrix(vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![6.0, 4.0, 2.0]])).unwrap();
        assert_eq!(r[0][0], 1.0);
        assert!((r[0][1] - 1.0).abs() < 1e-12);
        assert!((r[0][2] + 1.0).abs() < 1e-12);
        assert_eq!(r[1][2], r[2][1]);
    }

    #[test]
    fn zero_variance_column_named() {
        let err = correlation_matrix(&matrix(vec![vec![1.0, 2.0], vec![3.0, 3.0]])).unwrap_err();
        assert_eq!(err, PreprocessError::ZeroVariance("c1".into()));
    }

    #[test]
    fn pca_rank_one() {
        let a: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v - 1.0).collect();
        let r = pca(&matrix(vec![a, b]), 0.9).unwrap();
        assert_eq!(r.selected_count, 1);
        assert!((r.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_isotropic_needs_all() {
        // Orthogonal +-1 patterns: exactly uncorrelated columns.
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let c = vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let r = pca(&matrix(vec![a, b, c]), 1.0).unwrap();
        assert_eq!(r.selected_count, 3);
        for v in &r.explained_variance_ratio {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pca_preconditions() {
        assert!(matches!(
            pca(&matrix(vec![vec![1.0, 2.0], vec![2.0, 1.0]]), 0.5),
            Err(PreprocessError::TooFewRows { .. })
        ));
        assert!(matches!(pca(&matrix(vec![vec![1.0, 2.0, 3.0]]), 0.0), Err(PreprocessError::BadTarget(_))));
    }
}
