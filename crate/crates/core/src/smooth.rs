//! Moving averages over score series and lag/roughness diagnostics.
//!
//! Every smoother returns one value per input point. During warm-up
//! (fewer than `lookback` points available) the window is truncated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SmoothError {
    #[error("lookback must be at least 1")]
    ZeroLookback,
    #[error("timestamps must be strictly ascending (index {0})")]
    NotAscending(usize),
    #[error("score {value} at index {index} outside [0, 100]")]
    OutOfDomain { index: usize, value: f64 },
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 8 points, got {0}")]
    TooShort(usize),
}

/// Timestamped score sequence for one device.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub device_id: String,
    points: Vec<(u64, f64)>,
}

impl ScoreSeries {
    pub fn new(device_id: impl Into<String>, points: Vec<(u64, f64)>) -> Result<Self, SmoothError> {
        let mut s = ScoreSeries { device_id: device_id.into(), points: Vec::with_capacity(points.len()) };
        for (ts, v) in points {
            s.push(ts, v)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, ts: u64, score: f64) -> Result<(), SmoothError> {
        if !(0.0..=100.0).contains(&score) {
            return Err(SmoothError::OutOfDomain { index: self.points.len(), value: score });
        }
        if self.points.last().is_some_and(|&(last, _)| ts <= last) {
            return Err(SmoothError::NotAscending(self.points.len()));
        }
        self.points.push((ts, score));
        Ok(())
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn timestamps(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last_ts(&self) -> Option<u64> {
        self.points.last().map(|p| p.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothParams {
    pub lookback: usize,
}

impl SmoothParams {
    pub fn new(lookback: usize) -> Result<Self, SmoothError> {
        if lookback == 0 {
            return Err(SmoothError::ZeroLookback);
        }
        Ok(SmoothParams { lookback })
    }
}

/// Simple moving average.
pub fn sma(xs: &[f64], p: SmoothParams) -> Vec<f64> {
    (0..xs.len())
        .map(|t| {
            let k = (t + 1).min(p.lookback);
            xs[t + 1 - k..=t].iter().sum::<f64>() / k as f64
        })
        .collect()
}

/// Linearly weighted moving average: weights `1..=k`, most recent heaviest,
/// where `k = min(t + 1, lookback)`.
pub fn wma(xs: &[f64], p: SmoothParams) -> Vec<f64> {
    (0..xs.len())
        .map(|t| {
            let k = (t + 1).min(p.lookback);
            let num: f64 = xs[t + 1 - k..=t].iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
            num / (k * (k + 1) / 2) as f64
        })
        .collect()
}

/// Weighted moving average that keeps the full-window weight profile during
/// warm-up: the `k` available points get weights `n-k+1..=n` and the divisor
/// is the sum of those weights. Identical to [`wma`] once the window is full.
pub fn wma_corrected(xs: &[f64], p: SmoothParams) -> Vec<f64> {
    let n = p.lookback;
    (0..xs.len())
        .map(|t| {
            let k = (t + 1).min(n);
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, x) in xs[t + 1 - k..=t].iter().enumerate() {
                let w = (n - k + 1 + i) as f64;
                num += w * x;
                den += w;
            }
            num / den
        })
        .collect()
}

/// Window lengths used by the Hull average: `(floor(n/2), n, round(sqrt(n)))`,
/// each clamped to at least 1.
pub fn hma_windows(lookback: usize) -> (usize, usize, usize) {
    let half = (lookback / 2).max(1);
    let root = ((lookback as f64).sqrt().round() as usize).max(1);
    (half, lookback.max(1), root)
}

/// Hull moving average: `WMA(round(sqrt n))` of `2 WMA(n/2) - WMA(n)`.
pub fn hma(xs: &[f64], p: SmoothParams) -> Vec<f64> {
    let (half, full, root) = hma_windows(p.lookback);
    let wh = wma(xs, SmoothParams { lookback: half });
    let wf = wma(xs, SmoothParams { lookback: full });
    let raw: Vec<f64> = wh.iter().zip(&wf).map(|(h, f)| 2.0 * h - f).collect();
    wma(&raw, SmoothParams { lookback: root })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagSmoothness {
    /// Shift in samples maximizing the correlation between the original and
    /// the delayed smoothed series.
    pub lag: usize,
    /// Standard deviation of the smoothed series' first differences.
    pub roughness: f64,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if saa == sbb { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

/// Sample standard deviation of first differences.
pub fn roughness(xs: &[f64]) -> f64 {
    let d: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    if d.len() < 2 {
        return 0.0;
    }
    let m = d.iter().sum::<f64>() / d.len() as f64;
    (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt()
}

/// Lag by cross-correlation argmax over shifts `0..=N/4` (ties go to the
/// smaller shift), and roughness of the smoothed series.
pub fn lag_and_smoothness(original: &[f64], smoothed: &[f64]) -> Result<LagSmoothness, SmoothError> {
    if original.len() != smoothed.len() {
        return Err(SmoothError::LengthMismatch(original.len(), smoothed.len()));
    }
    let n = original.len();
    if n < 8 {
        return Err(SmoothError::TooShort(n));
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..=n / 4 {
        let c = pearson(&original[..n - k], &smoothed[k..]);
        if c > best.1 {
            best = (k, c);
        }
    }
    Ok(LagSmoothness { lag: best.0, roughness: roughness(smoothed) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: usize) -> SmoothParams {
        SmoothParams::new(n).unwrap()
    }

    #[test]
    fn sma_cases() {
        assert_eq!(sma(&[1.0, 2.0, 3.0, 4.0], p(2)), [1.0, 1.5, 2.5, 3.5]);
        assert_eq!(sma(&[7.0; 5], p(3)), [7.0; 5]);
        let ramp: Vec<f64> = (0..40).map(f64::from).collect();
        let out = sma(&ramp, p(9));
        for t in 9..40 {
            assert!((out[t] - (t as f64 - 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn wma_cases() {
        assert!((wma(&[1.0, 2.0, 3.0], p(3))[2] - 14.0 / 6.0).abs() < 1e-15);
        assert_eq!(wma(&[4.0; 6], p(4)), [4.0; 6]);
        let ramp: Vec<f64> = (0..40).map(f64::from).collect();
        let out = wma(&ramp, p(7));
        for t in 7..40 {
            assert!((out[t] - (t as f64 - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn corrected_wma_cases() {
        let xs = [10.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let out = wma_corrected(&xs, p(4));
        // direct summation with weights n-k+1..=n over the available points
        let expected = [10.0, 3.0 * 10.0 / 7.0, 2.0 * 10.0 / 9.0, 10.0 / 10.0, 0.0, 0.0];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(wma_corrected(&[3.0; 5], p(4)), [3.0; 5]);
        let ys = [1.0, 5.0, 2.0, 8.0, 3.0, 9.0];
        assert_eq!(wma_corrected(&ys, p(3))[3..], wma(&ys, p(3))[3..]);
    }

    #[test]
    fn hma_identity_and_constant() {
        let xs = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        assert_eq!(hma(&xs, p(1)), xs);
        for n in 1..20 {
            assert!(hma(&[42.0; 30], p(n)).iter().all(|v| (v - 42.0).abs() < 1e-12));
        }
    }

    #[test]
    fn hma_windows_policy() {
        assert_eq!(hma_windows(1), (1, 1, 1));
        assert_eq!(hma_windows(9), (4, 9, 3));
        assert_eq!(hma_windows(16), (8, 16, 4));
        assert_eq!(hma_windows(7), (3, 7, 3));
        assert_eq!(hma_windows(2), (1, 2, 1));
    }

    #[test]
    fn lag_cases() {
        let xs: Vec<f64> = (0..64).map(|t| (t as f64 * 0.3).sin() * 10.0 + (t % 7) as f64).collect();
        assert_eq!(lag_and_smoothness(&xs, &xs).unwrap().lag, 0);
        let mut delayed = vec![xs[0]; 3];
        delayed.extend_from_slice(&xs[..61]);
        assert_eq!(lag_and_smoothness(&xs, &delayed).unwrap().lag, 3);
        assert_eq!(lag_and_smoothness(&xs[..5], &xs[..5]).unwrap_err(), SmoothError::TooShort(5));
    }

    #[test]
    fn series_invariants() {
        assert!(ScoreSeries::new("d", vec![(1, 10.0), (1, 20.0)]).is_err());
        assert!(ScoreSeries::new("d", vec![(1, 101.0)]).is_err());
        assert_eq!(SmoothParams::new(0).unwrap_err(), SmoothError::ZeroLookback);
    }
}
