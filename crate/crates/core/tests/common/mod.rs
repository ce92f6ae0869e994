//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use devperf::schema::ValidRange;
use devperf::{DecisionMatrix, Direction, FeatureSchema, IndicatorSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn white_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            sigma * z
        })
        .collect::<Vec<f64>>()
}

/// ARMA(p, q) with `x_t = sum phi_i x_{t-i} + e_t - sum theta_j e_{t-j}`,
/// after a 200-sample burn-in.
pub fn arma(phi: &[f64], theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let burn = 200;
    let e = white_noise(n + burn, 1.0, seed);
    let mut x = vec![0.0; n + burn];
    for t in 0..n + burn {
        let mut v = e[t];
        for (i, f) in phi.iter().enumerate() {
            if t > i {
                v += f * x[t - 1 - i];
            }
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                v -= th * e[t - 1 - j];
            }
        }
        x[t] = v;
    }
    x.split_off(burn)
}

pub fn cumsum(xs: &[f64], start: f64) -> Vec<f64> {
    let mut acc = start;
    xs.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    r.random_range(lo..hi)
}

// ---------------------------------------------------------------------------
// TOPSIS / entropy transcription, written column by column without any of the
// library's helpers.

pub fn oracle_positivize(col: &[f64], dir: Direction) -> Vec<f64> {
    let mut mx = col[0];
    let mut mn = col[0];
    for &x in col {
        if x > mx {
            mx = x;
        }
        if x < mn {
            mn = x;
        }
    }
    let mut out = Vec::new();
    match dir {
        Direction::Maximal => out.extend_from_slice(col),
        Direction::Minimal => {
            for &x in col {
                out.push(mx - x);
            }
        }
        Direction::Intermediate { best } => {
            let mut big_m = 0.0f64;
            for &x in col {
                if (x - best).abs() > big_m {
                    big_m = (x - best).abs();
                }
            }
            for &x in col {
                out.push(if big_m == 0.0 { 1.0 } else { 1.0 - (x - best).abs() / big_m });
            }
        }
        Direction::Interval { a, b } => {
            let big_m = if a - mn > mx - b { a - mn } else { mx - b };
            for &x in col {
                let v = if big_m <= 0.0 {
                    1.0
                } else if x < a {
                    1.0 - (a - x) / big_m
                } else if x > b {
                    1.0 - (x - b) / big_m
                } else {
                    1.0
                };
                out.push(v);
            }
        }
    }
    out
}

/// Entropy weights of already positivized columns.
pub fn oracle_weights(cols: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = cols.len();
    let n = cols[0].len();
    let k = 1.0 / (n as f64).ln();
    let mut e = vec![0.0; m];
    for j in 0..m {
        let mut mx = f64::MIN;
        let mut mn = f64::MAX;
        for i in 0..n {
            mx = mx.max(cols[j][i]);
            mn = mn.min(cols[j][i]);
        }
        if mx == mn {
            e[j] = 1.0;
            continue;
        }
        let std: Vec<f64> = (0..n).map(|i| (cols[j][i] - mn) / (mx - mn) * 100.0).collect();
        let total: f64 = std.iter().sum();
        let mut acc = 0.0;
        for v in std {
            let p = v / total;
            if p > 0.0 {
                acc += p * p.ln();
            }
        }
        e[j] = -k * acc;
    }
    let g: Vec<f64> = e.iter().map(|v| 1.0 - v).collect();
    let gs: f64 = g.iter().sum();
    let w = if gs <= 0.0 { vec![1.0 / m as f64; m] } else { g.iter().map(|v| v / gs).collect() };
    (e, w)
}

/// Raw closeness of every row. `rows[i][j]`, directions per column.
pub fn oracle_topsis(rows: &[Vec<f64>], dirs: &[Direction]) -> Vec<f64> {
    let n = rows.len();
    let m = dirs.len();
    let mut cols = Vec::new();
    for j in 0..m {
        let raw: Vec<f64> = (0..n).map(|i| rows[i][j]).collect();
        cols.push(oracle_positivize(&raw, dirs[j]));
    }
    let (_, w) = oracle_weights(&cols);
    let mut z = vec![vec![0.0; n]; m];
    for j in 0..m {
        let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..n {
            z[j][i] = if norm == 0.0 { 0.0 } else { cols[j][i] / norm };
        }
    }
    let best: Vec<f64> = z.iter().map(|c| c.iter().cloned().fold(f64::MIN, f64::max)).collect();
    let worst: Vec<f64> = z.iter().map(|c| c.iter().cloned().fold(f64::MAX, f64::min)).collect();
    let mut out = Vec::new();
    for i in 0..n {
        let mut dp = 0.0;
        let mut dm = 0.0;
        for j in 0..m {
            dp += w[j] * (best[j] - z[j][i]) * (best[j] - z[j][i]);
            dm += w[j] * (worst[j] - z[j][i]) * (worst[j] - z[j][i]);
        }
        let (dp, dm) = (dp.sqrt(), dm.sqrt());
        out.push(if dp + dm == 0.0 { 0.5 } else { dm / (dp + dm) });
    }
    out
}

/// Two stages: per-category raw closeness scaled to 0..100, then a second
/// all-maximal pass over those category columns.
pub fn oracle_multilevel(rows: &[Vec<f64>], dirs: &[Direction], cats: &[usize]) -> Vec<f64> {
    let mut groups: Vec<usize> = Vec::new();
    for &c in cats {
        if !groups.contains(&c) {
            groups.push(c);
        }
    }
    let mut stage: Vec<Vec<f64>> = vec![Vec::new(); rows.len()];
    for &g in &groups {
        let idx: Vec<usize> = (0..dirs.len()).filter(|&j| cats[j] == g).collect();
        let sub: Vec<Vec<f64>> = rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect();
        let d: Vec<Direction> = idx.iter().map(|&j| dirs[j]).collect();
        for (i, s) in oracle_topsis(&sub, &d).into_iter().enumerate() {
            stage[i].push(100.0 * s);
        }
    }
    if groups.len() == 1 {
        return stage.iter().map(|r| r[0] / 100.0).collect();
    }
    oracle_topsis(&stage, &vec![Direction::Maximal; groups.len()])
}

// ---------------------------------------------------------------------------
// Smoothing.

/// Plain linearly weighted average with a truncated warm-up window.
pub fn oracle_wma(xs: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    for t in 0..xs.len() {
        let k = if t + 1 < n { t + 1 } else { n };
        let mut num = 0.0;
        let mut w = 1.0;
        for s in (t + 1 - k)..=t {
            num += w * xs[s];
            w += 1.0;
        }
        out.push(num / (k * (k + 1) / 2) as f64);
    }
    out
}

pub fn oracle_hma(xs: &[f64], n: usize) -> Vec<f64> {
    let half = std::cmp::max(n / 2, 1);
    let root = std::cmp::max((n as f64).sqrt().round() as usize, 1);
    let a = oracle_wma(xs, half);
    let b = oracle_wma(xs, n);
    let diff: Vec<f64> = (0..xs.len()).map(|t| 2.0 * a[t] - b[t]).collect();
    oracle_wma(&diff, root)
}

// ---------------------------------------------------------------------------
// Portraits.

/// 70% rule over the tags of one window, oldest first.
pub fn oracle_portrait(window: &[u8], threshold: f64) -> u8 {
    if window.iter().all(|&t| t == 0) {
        return 0;
    }
    let last = window[window.len() - 1];
    let ones = window.iter().filter(|&&t| t == 1).count();
    let threes = window.iter().filter(|&&t| t == 3).count();
    if last == 1 && ones as f64 >= threshold * window.len() as f64 {
        1
    } else if last == 3 && threes as f64 >= threshold * window.len() as f64 {
        3
    } else {
        2
    }
}

// ---------------------------------------------------------------------------
// Eigen-decomposition by classic Jacobi: always annihilate the largest
// off-diagonal entry.

pub fn oracle_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = a.len();
    let mut a = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..10_000 {
        let (mut p, mut q, mut big) = (0, 1, 0.0);
        for i in 0..m {
            for j in i + 1..m {
                if a[i][j].abs() > big {
                    big = a[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big < 1e-14 {
            break;
        }
        let theta = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
        let (s, c) = theta.sin_cos();
        for k in 0..m {
            let (akp, akq) = (a[k][p], a[k][q]);
            a[k][p] = c * akp - s * akq;
            a[k][q] = s * akp + c * akq;
        }
        for k in 0..m {
            let (apk, aqk) = (a[p][k], a[q][k]);
            a[p][k] = c * apk - s * aqk;
            a[q][k] = s * apk + c * aqk;
        }
        for row in v.iter_mut() {
            let (vp, vq) = (row[p], row[q]);
            row[p] = c * vp - s * vq;
            row[q] = s * vp + c * vq;
        }
    }
    ((0..m).map(|i| a[i][i]).collect(), v)
}

// ---------------------------------------------------------------------------
// Random decision problems.

pub struct Problem {
    pub rows: Vec<Vec<f64>>,
    pub dirs: Vec<Direction>,
    pub cats: Vec<usize>,
    pub schema: FeatureSchema,
    pub matrix: DecisionMatrix,
}

pub fn random_direction(r: &mut ChaCha8Rng) -> Direction {
    use rand::Rng;
    match r.random_range(0..4) {
        0 => Direction::Maximal,
        1 => Direction::Minimal,
        2 => Direction::Intermediate { best: uniform(r, 0.0, 100.0) },
        _ => {
            let a = uniform(r, 0.0, 60.0);
            Direction::Interval { a, b: a + uniform(r, 0.0, 40.0) }
        }
    }
}

pub fn problem(rows: Vec<Vec<f64>>, dirs: Vec<Direction>, cats: Vec<usize>) -> Problem {
    let specs = dirs
        .iter()
        .zip(&cats)
        .enumerate()
        .map(|(j, (d, c))| IndicatorSpec {
            name: format!("x{j}"),
            category: format!("c{c}"),
            unit: String::new(),
            direction: *d,
            valid_range: ValidRange { lo: -1000.0, hi: 1000.0 },
        })
        .collect();
    let schema = FeatureSchema::new(specs, None).unwrap();
    let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
    let names = (0..dirs.len()).map(|j| format!("x{j}")).collect();
    let matrix = DecisionMatrix::from_rows(ids, names, rows.clone()).unwrap();
    Problem { rows, dirs, cats, schema, matrix }
}

/// `n x m` matrix of values in `[0, 100)` with random directions and
/// `n_cats` categories assigned round-robin.
pub fn random_problem(r: &mut ChaCha8Rng, n: usize, m: usize, n_cats: usize) -> Problem {
    let rows = (0..n).map(|_| (0..m).map(|_| uniform(r, 0.0, 100.0)).collect()).collect();
    let dirs = (0..m).map(|_| random_direction(r)).collect();
    let cats = (0..m).map(|j| j % n_cats).collect();
    problem(rows, dirs, cats)
}
