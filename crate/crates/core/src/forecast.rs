//! Non-seasonal ARIMA(p, d, q) for score series.
//!
//! Model on the `d`-times differenced series `w`:
//!
//! ```text
//! w_t - mu = sum_i phi_i (w_{t-i} - mu) + e_t - sum_j theta_j e_{t-j}
//! ```
//!
//! `mu` is the sample mean when `d == 0` and fixed at 0 otherwise (no drift).
//! Pure AR models use Yule-Walker estimates; models with an MA part minimize
//! the conditional sum of squares (first `p` observations condition the
//! recursion, pre-sample innovations are zero) with a derivative-free
//! coordinate search started from the Yule-Walker AR estimate and zero MA
//! terms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two-sided 80% normal quantile.
pub const Z80: f64 = 1.2816;

const STATIONARITY_TOL: f64 = 1e-6;
const STEP_TOL: f64 = 1e-7;
const CSS_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("series too short: need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("series shorter than 50")]
    TooShortForAuto,
    #[error("singular autocovariance system")]
    Singular,
    #[error("CSS optimization did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("fitted AR part is not stationary")]
    NonStationary,
    #[error("fitted MA part is not invertible")]
    NonInvertible,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("horizon {h} exceeds 10x the history length {len}")]
    HorizonTooLong { h: usize, len: usize },
    #[error("no candidate order converged")]
    NoCandidate,
    #[error("invalid order: {0}")]
    BadOrder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        ArimaOrder { p, d, q }
    }

    /// Default search bounds: `p, q <= 5`, `d <= 2`.
    pub const DEFAULT_BOUNDS: ArimaOrder = ArimaOrder::new(5, 2, 5);
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

impl std::str::FromStr for ArimaOrder {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim_matches(|c| c == '(' || c == ')').split(',').collect();
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ForecastError::BadOrder(s.to_string()))?;
        match nums[..] {
            [p, d, q] => Ok(ArimaOrder::new(p, d, q)),
            _ => Err(ForecastError::BadOrder(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Aicc,
    #[default]
    Bic,
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "aicc" => Ok(Criterion::Aicc),
            "bic" => Ok(Criterion::Bic),
            other => Err(format!("unknown criterion `{other}` (aic, aicc, bic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub intercept: f64,
    pub mean: f64,
    pub sigma2: f64,
    pub residuals: Vec<f64>,
    pub aic: f64,
    pub aicc: f64,
    pub bic: f64,
}

impl ArimaModel {
    pub fn criterion(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Aic => self.aic,
            Criterion::Aicc => self.aicc,
            Criterion::Bic => self.bic,
        }
    }

    /// Recomputes conditional residuals of `series` under this model.
    pub fn residuals_for(&self, series: &[f64]) -> Result<Vec<f64>, ForecastError> {
        let w = difference(series, self.order.d)?;
        let wc: Vec<f64> = w.iter().map(|v| v - self.mean).collect();
        Ok(css_residuals(&wc, &self.phi, &self.theta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forecast {
    pub horizon: usize,
    pub point: Vec<f64>,
    pub interval_80: Vec<(f64, f64)>,
    /// Forecast-error variance per step.
    pub variance: Vec<f64>,
}

/// `d`-fold first difference.
pub fn difference(s: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    Ok(difference_with_heads(s, d)?.0)
}

/// Differences `d` times and also returns the first value of every
/// intermediate level (`heads[k]` starts the `k`-times differenced series),
/// which is what [`integrate`] needs to undo it.
pub fn difference_with_heads(s: &[f64], d: usize) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
    if s.len() <= d {
        return Err(ForecastError::TooShort { need: d + 1, got: s.len() });
    }
    let mut cur = s.to_vec();
    let mut heads = Vec::with_capacity(d);
    for _ in 0..d {
        heads.push(cur[0]);
        cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok((cur, heads))
}

/// Inverse of [`difference_with_heads`].
pub fn integrate(diffed: &[f64], heads: &[f64]) -> Vec<f64> {
    let mut cur = diffed.to_vec();
    for &h in heads.iter().rev() {
        let mut out = Vec::with_capacity(cur.len() + 1);
        out.push(h);
        for v in &cur {
            let next = out.last().unwrap() + v;
            out.push(next);
        }
        cur = out;
    }
    cur
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Biased (divide by `n`) autocovariance of an already centred series.
fn autocov_centered(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if lag >= n {
        return 0.0;
    }
    xs[..n - lag].iter().zip(&xs[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
}

/// Sample autocovariance at `lag` about the sample mean.
pub fn autocovariance(xs: &[f64], lag: usize) -> f64 {
    let m = mean(xs);
    let c: Vec<f64> = xs.iter().map(|v| v - m).collect();
    autocov_centered(&c, lag)
}

fn variance(xs: &[f64]) -> f64 {
    autocovariance(xs, 0)
}

/// Differencing heuristic: a series needs differencing when its lag-1
/// autocorrelation exceeds 0.95 or differencing it shrinks the variance
/// below half.
pub fn needs_differencing(xs: &[f64]) -> bool {
    let v = variance(xs);
    if v == 0.0 || xs.len() < 3 {
        return false;
    }
    let acf1 = autocovariance(xs, 1) / v;
    let dv = variance(&difference(xs, 1).expect("len >= 3"));
    acf1 > 0.95 || dv < 0.5 * v
}

/// Smallest `d <= d_max` whose differenced series passes the heuristic.
pub fn select_d(s: &[f64], d_max: usize) -> Result<usize, ForecastError> {
    if s.len() < 20 {
        return Err(ForecastError::TooShort { need: 20, got: s.len() });
    }
    for d in 0..=d_max {
        if !needs_differencing(&difference(s, d)?) {
            return Ok(d);
        }
    }
    log::warn!("no differencing order up to {d_max} looks stationary; using d = {d_max}");
    Ok(d_max)
}

/// Yule-Walker via Levinson-Durbin on a centred series.
fn yule_walker_centered(xs: &[f64], p: usize) -> Result<(Vec<f64>, f64), ForecastError> {
    let gamma: Vec<f64> = (0..=p).map(|k| autocov_centered(xs, k)).collect();
    if !(gamma[0] > 0.0) {
        return Err(ForecastError::Singular);
    }
    let mut phi: Vec<f64> = Vec::with_capacity(p);
    let mut err = gamma[0];
    for k in 0..p {
        let acc: f64 = gamma[k + 1] - (0..k).map(|j| phi[j] * gamma[k - j]).sum::<f64>();
        let kappa = acc / err;
        if !kappa.is_finite() || kappa.abs() >= 1.0 {
            return Err(ForecastError::Singular);
        }
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - kappa * prev[k - 1 - j];
        }
        phi.push(kappa);
        err *= 1.0 - kappa * kappa;
        if !(err > 0.0) {
            return Err(ForecastError::Singular);
        }
    }
    Ok((phi, err))
}

/// True when `1 - sum_i c_i z^i` has every root strictly outside the unit
/// circle (step-down recursion on the reflection coefficients).
pub fn is_stable(coeffs: &[f64]) -> bool {
    let mut a = coeffs.to_vec();
    while let Some(&kappa) = a.last() {
        if !kappa.is_finite() || kappa.abs() >= 1.0 - STATIONARITY_TOL {
            return false;
        }
        let k = a.len();
        let denom = 1.0 - kappa * kappa;
        a = (0..k - 1).map(|i| (a[i] + kappa * a[k - 2 - i]) / denom).collect();
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArFit {
    pub phi: Vec<f64>,
    pub intercept: f64,
    pub mean: f64,
    pub sigma2: f64,
}

/// Yule-Walker AR(p) fit; `intercept = mean * (1 - sum phi)`.
pub fn fit_ar(s: &[f64], p: usize) -> Result<ArFit, ForecastError> {
    let need = 10 * p.max(1);
    if s.len() < need {
        return Err(ForecastError::TooShort { need, got: s.len() });
    }
    let mu = mean(s);
    let c: Vec<f64> = s.iter().map(|v| v - mu).collect();
    let (phi, sigma2) = yule_walker_centered(&c, p)?;
    let intercept = mu * (1.0 - phi.iter().sum::<f64>());
    Ok(ArFit { phi, intercept, mean: mu, sigma2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaFit {
    pub theta: Vec<f64>,
    pub mean: f64,
    pub sigma2: f64,
    pub iterations: usize,
}

/// MA(q) by conditional sum of squares around the sample mean.
pub fn fit_ma(s: &[f64], q: usize) -> Result<MaFit, ForecastError> {
    fit_ma_with(s, q, DEFAULT_MAX_ITER)
}

pub fn fit_ma_with(s: &[f64], q: usize, max_iter: usize) -> Result<MaFit, ForecastError> {
    let need = 10 * q.max(1);
    if s.len() < need {
        return Err(ForecastError::TooShort { need, got: s.len() });
    }
    let mu = mean(s);
    let c: Vec<f64> = s.iter().map(|v| v - mu).collect();
    let fit = css_search(&c, &[], &vec![0.0; q], max_iter)?;
    let res = css_residuals(&c, &[], &fit.theta);
    Ok(MaFit { theta: fit.theta, mean: mu, sigma2: sum_sq(&res) / res.len() as f64, iterations: fit.iterations })
}

/// Conditional residuals for `t = p..n` of a centred series.
pub fn css_residuals(w: &[f64], phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let p = phi.len();
    let n = w.len();
    let mut e = vec![0.0; n];
    for t in p..n {
        let mut v = w[t];
        for (i, f) in phi.iter().enumerate() {
            v -= f * w[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                v += th * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e.split_off(p.min(n))
}

fn sum_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|v| v * v).sum()
}

struct CssFit {
    phi: Vec<f64>,
    theta: Vec<f64>,
    iterations: usize,
}

/// Derivative-free coordinate search on the CSS. Each coordinate keeps its
/// own step, doubled after an accepted move and halved after a failed one;
/// the search stops once every step is below `STEP_TOL`. Moves must keep the
/// AR part stationary and the MA part invertible and must lower the CSS by
/// more than `CSS_TOL` relative.
fn css_search(w: &[f64], phi0: &[f64], theta0: &[f64], max_iter: usize) -> Result<CssFit, ForecastError> {
    let p = phi0.len();
    let mut x: Vec<f64> = phi0.iter().chain(theta0).copied().collect();
    let objective = |x: &[f64]| -> f64 {
        let (phi, theta) = x.split_at(p);
        if !is_stable(phi) || !is_stable(theta) {
            return f64::INFINITY;
        }
        sum_sq(&css_residuals(w, phi, theta))
    };
    let mut best = objective(&x);
    if !best.is_finite() {
        return Err(ForecastError::NonStationary);
    }
    if x.is_empty() {
        return Ok(CssFit { phi: vec![], theta: vec![], iterations: 0 });
    }
    let mut steps = vec![0.1; x.len()];
    for iter in 1..=max_iter {
        for k in 0..x.len() {
            let mut moved = false;
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[k] += dir * steps[k];
                let f = objective(&cand);
                if f < best - CSS_TOL * best.abs() {
                    x = cand;
                    best = f;
                    moved = true;
                    break;
                }
            }
            steps[k] = if moved { (steps[k] * 2.0).min(0.5) } else { steps[k] * 0.5 };
        }
        if steps.iter().all(|&s| s < STEP_TOL) {
            let theta = x.split_off(p);
            return Ok(CssFit { phi: x, theta, iterations: iter });
        }
    }
    Err(ForecastError::NonConvergence(max_iter))
}

/// Information criteria for `n` usable residuals and `k` parameters.
pub fn information_criteria(sigma2: f64, n: usize, k: usize) -> (f64, f64, f64) {
    let nf = n as f64;
    let kf = k as f64;
    let aic = nf * sigma2.ln() + 2.0 * kf;
    let aicc = if n > k + 1 { aic + 2.0 * kf * (kf + 1.0) / (nf - kf - 1.0) } else { f64::INFINITY };
    let bic = nf * sigma2.ln() + kf * nf.ln();
    (aic, aicc, bic)
}

pub fn fit_arima(s: &[f64], order: ArimaOrder) -> Result<ArimaModel, ForecastError> {
    fit_arima_with(s, order, DEFAULT_MAX_ITER)
}

pub fn fit_arima_with(s: &[f64], order: ArimaOrder, max_iter: usize) -> Result<ArimaModel, ForecastError> {
    let ArimaOrder { p, d, q } = order;
    let w = difference(s, d)?;
    let need = 10 * p.max(q).max(1);
    if w.len() < need {
        return Err(ForecastError::TooShort { need: need + d, got: s.len() });
    }
    let mu = if d == 0 { mean(&w) } else { 0.0 };
    let wc: Vec<f64> = w.iter().map(|v| v - mu).collect();
    let (phi_yw, _) = yule_walker_centered(&wc, p)?;
    let (phi, theta) = if q == 0 {
        (phi_yw, Vec::new())
    } else {
        let fit = css_search(&wc, &phi_yw, &vec![0.0; q], max_iter)?;
        (fit.phi, fit.theta)
    };
    if !is_stable(&phi) {
        return Err(ForecastError::NonStationary);
    }
    if !is_stable(&theta) {
        return Err(ForecastError::NonInvertible);
    }
    let residuals = css_residuals(&wc, &phi, &theta);
    let n = residuals.len();
    let sigma2 = sum_sq(&residuals) / n as f64;
    let k = p + q + 1;
    let (aic, aicc, bic) = information_criteria(sigma2, n, k);
    Ok(ArimaModel {
        order,
        intercept: mu * (1.0 - phi.iter().sum::<f64>()),
        phi,
        theta,
        mean: mu,
        sigma2,
        residuals,
        aic,
        aicc,
        bic,
    })
}

/// Grid search over `p <= bounds.p`, `q <= bounds.q` at the `d` chosen by
/// [`select_d`]. Minimal criterion wins; ties go to smaller `p + q`, then
/// smaller `p`. Candidates that fail to fit are skipped.
pub fn auto_order(s: &[f64], bounds: ArimaOrder, criterion: Criterion) -> Result<ArimaModel, ForecastError> {
    if s.len() < 50 {
        return Err(ForecastError::TooShortForAuto);
    }
    let d = select_d(s, bounds.d)?;
    let mut best: Option<(f64, ArimaModel)> = None;
    for p in 0..=bounds.p {
        for q in 0..=bounds.q {
            let Ok(model) = fit_arima(s, ArimaOrder::new(p, d, q)) else {
                continue;
            };
            let score = model.criterion(criterion);
            if !score.is_finite() {
                continue;
            }
            // Grid order already visits smaller p first; only p + q needs care.
            let better = match &best {
                None => true,
                Some((b, m)) => score < *b || (score == *b && p + q < m.order.p + m.order.q),
            };
            if better {
                best = Some((score, model));
            }
        }
    }
    best.map(|(_, m)| m).ok_or(ForecastError::NoCandidate)
}

/// psi-weights of the integrated model, `psi[0] = 1`.
pub fn psi_weights(model: &ArimaModel, h: usize) -> Vec<f64> {
    // AR polynomial of the integrated model: (1 - sum phi B^i)(1 - B)^d.
    let mut poly = vec![1.0];
    poly.extend(model.phi.iter().map(|f| -f));
    for _ in 0..model.order.d {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c;
        }
        poly = next;
    }
    let big_phi: Vec<f64> = poly[1..].iter().map(|c| -c).collect();
    let mut psi = vec![1.0];
    for j in 1..h {
        let mut v: f64 = (1..=j.min(big_phi.len())).map(|i| big_phi[i - 1] * psi[j - i]).sum();
        if j <= model.theta.len() {
            v -= model.theta[j - 1];
        }
        psi.push(v);
    }
    psi
}

/// `h`-step forecast without clamping.
pub fn forecast_unclamped(model: &ArimaModel, history: &[f64], h: usize) -> Result<Forecast, ForecastError> {
    if h == 0 {
        return Err(ForecastError::ZeroHorizon);
    }
    if h > 10 * history.len() {
        return Err(ForecastError::HorizonTooLong { h, len: history.len() });
    }
    let ArimaOrder { p, d, q: _ } = model.order;
    if history.len() <= d + p {
        return Err(ForecastError::TooShort { need: d + p + 1, got: history.len() });
    }
    // Last value of every differencing level, level 0 = history itself.
    let mut levels_last = Vec::with_capacity(d);
    let mut cur = history.to_vec();
    for _ in 0..d {
        levels_last.push(*cur.last().unwrap());
        cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let mut w: Vec<f64> = cur.iter().map(|v| v - model.mean).collect();
    let mut e = vec![0.0; p];
    e.extend(css_residuals(&w, &model.phi, &model.theta));

    let n = w.len();
    for t in n..n + h {
        let mut v = 0.0;
        for (i, f) in model.phi.iter().enumerate() {
            v += f * w[t - 1 - i];
        }
        for (j, th) in model.theta.iter().enumerate() {
            if t > j {
                v -= th * e[t - 1 - j];
            }
        }
        w.push(v);
        e.push(0.0);
    }
    let mut point: Vec<f64> = w[n..].iter().map(|v| v + model.mean).collect();
    for &last in levels_last.iter().rev() {
        let mut acc = last;
        for v in point.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }

    let psi = psi_weights(model, h);
    let mut variance = Vec::with_capacity(h);
    let mut acc = 0.0;
    for v in &psi {
        acc += v * v;
        variance.push(model.sigma2 * acc);
    }
    let interval_80 = point
        .iter()
        .zip(&variance)
        .map(|(pt, var)| {
            let half = Z80 * var.sqrt();
            (pt - half, pt + half)
        })
        .collect();
    Ok(Forecast { horizon: h, point, interval_80, variance })
}

/// `h`-step forecast in the score domain: intervals are built on the
/// unclamped scale, then point and bounds are clamped to `[0, 100]`.
pub fn forecast(model: &ArimaModel, history: &[f64], h: usize) -> Result<Forecast, ForecastError> {
    let mut f = forecast_unclamped(model, history, h)?;
    let clamp = |v: f64| v.clamp(0.0, 100.0);
    f.point.iter_mut().for_each(|v| *v = clamp(*v));
    f.interval_80.iter_mut().for_each(|(lo, hi)| {
        *lo = clamp(*lo);
        *hi = clamp(*hi);
    });
    Ok(f)
}
