use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use devperf::engine::{map_tier, TierThresholds};
use devperf::evaluate::evaluate_multilevel;
use devperf::schema::builtin_schema;
use devperf::smooth::{hma, sma, wma, wma_corrected, SmoothParams};
use devperf::DecisionMatrix;

fn devperf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_devperf")).args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn help_matches_snapshot() {
    let o = devperf(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), include_str!("snapshots/help.txt"));
}

#[test]
fn usage_errors_exit_one() {
    let o = devperf(&["score", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    let o = devperf(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_input_exits_one() {
    let o = devperf(&["score", "--matrix", "/nonexistent/matrix.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn short_series_auto_forecast_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let body: String = std::iter::once("ts,score\n".to_string())
        .chain((0..40).map(|i| format!("{i},{}\n", 50.0 + (i % 7) as f64)))
        .collect();
    std::fs::write(&path, body).unwrap();
    let o = devperf(&["forecast", "--in", path.to_str().unwrap(), "--order", "auto"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("series shorter than 50"));
}

#[test]
fn score_output_matches_library() {
    let path = fixture("reference.csv");
    let o = devperf(&["score", "--matrix", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let x = DecisionMatrix::read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    let s = evaluate_multilevel(&x, &builtin_schema()).unwrap();
    let t = TierThresholds::default();
    let mut want = String::from("row_id,raw,scaled,tier\n");
    for i in 0..s.raw.len() {
        let tier = serde_json::to_value(map_tier(s.scaled[i], &t)).unwrap();
        want += &format!("{},{},{},{}\n", s.row_ids[i], s.raw[i], s.scaled[i], tier.as_str().unwrap());
    }
    assert_eq!(stdout(&o), want);
}

#[test]
fn smooth_output_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let xs: Vec<f64> = (0..80).map(|i| 40.0 + 10.0 * (i as f64 / 7.0).sin() + (i % 3) as f64 * 0.37).collect();
    let mut body = String::from("ts,score\n");
    for (i, x) in xs.iter().enumerate() {
        body += &format!("{},{x}\n", 1000 * i);
    }
    std::fs::write(&path, body).unwrap();
    let o = devperf(&["smooth", "--in", path.to_str().unwrap(), "--lookback", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let p = SmoothParams::new(9).unwrap();
    let cols = [sma(&xs, p), wma(&xs, p), wma_corrected(&xs, p), hma(&xs, p)];
    let mut want = String::from("ts,raw,sma,wma,wma_corr,hma\n");
    for (i, x) in xs.iter().enumerate() {
        want += &format!("{},{x},{},{},{},{}\n", 1000 * i, cols[0][i], cols[1][i], cols[2][i], cols[3][i]);
    }
    assert_eq!(stdout(&o), want);
}

#[test]
fn thresholds_reports_requested_split() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    let body: String =
        std::iter::once("score\n".to_string()).chain((0..1000).map(|i| format!("{}\n", i as f64 / 10.0))).collect();
    std::fs::write(&path, body).unwrap();
    let o = devperf(&["thresholds", "--in", path.to_str().unwrap(), "--proportions", "0.2,0.3,0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "low_max,mid_max\n19.9,49.9\n");
}

#[test]
fn generate_is_seeded() {
    let a = devperf(&["generate", "--devices", "20", "--seed", "3"]);
    let b = devperf(&["generate", "--devices", "20", "--seed", "3"]);
    let c = devperf(&["generate", "--devices", "20", "--seed", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}
