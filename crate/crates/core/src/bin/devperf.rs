use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use devperf::abharness::{self, ExperimentConfig, StrategyEffect};
use devperf::engine::{self, map_tier, Engine, Event, ScoreLog, TierThresholds, TriggerConfig};
use devperf::evaluate::{self, SnapshotEvaluation};
use devperf::forecast::{self, ArimaOrder, Criterion};
use devperf::portrait::{self, DailyLabelHistory, FitParams, LabelRuleSet, PortraitLabel};
use devperf::preprocess;
use devperf::schema::{builtin_schema, parse_schema, validate_record};
use devperf::smooth::{self, SmoothParams};
use devperf::{DecisionMatrix, FeatureRecord, FeatureSchema};

/// Real-time device performance scoring toolkit.
#[derive(Parser, Debug)]
#[command(name = "devperf", version)]
struct Cli {
    /// Seed for every stochastic path.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a schema and, optionally, telemetry records against it.
    Validate(ValidateArgs),
    /// Score every row of a decision matrix.
    Score(ScoreArgs),
    /// Report entropy weights per category and for the global stage.
    Weights(MatrixArgs),
    /// Smooth a score series with SMA, WMA, corrected WMA and HMA.
    Smooth(SmoothArgs),
    /// Fit an ARIMA model to a score series and forecast it.
    Forecast(ForecastArgs),
    /// Label days, fit portraits and evaluate portrait fits.
    #[command(subcommand)]
    Portrait(PortraitCmd),
    /// Derive tier thresholds from a score sample.
    Thresholds(ThresholdArgs),
    /// Replay an event log through the scoring engine.
    Replay(ReplayArgs),
    /// Run the synthetic-fleet AB experiment.
    SimulateAb(SimulateArgs),
    /// Write synthetic fleet telemetry as a matrix or an event log.
    Generate(GenerateArgs),
    /// Principal component analysis of a matrix.
    Pca(PcaArgs),
    /// Pearson correlation matrix of a matrix's columns.
    Correlate(MatrixArgs),
}

#[derive(Args, Debug)]
struct SchemaArg {
    /// Schema file; the built-in 22-indicator schema when omitted.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    schema: SchemaArg,
    /// Newline-delimited telemetry records to check.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MatrixArgs {
    #[command(flatten)]
    schema: SchemaArg,
    /// Decision matrix CSV; first column holds row ids.
    #[arg(long)]
    matrix: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[command(flatten)]
    m: MatrixArgs,
    /// Score all indicators in one stage instead of per category first.
    #[arg(long)]
    single_level: bool,
    /// Tier thresholds as `low_max,mid_max`.
    #[arg(long, default_value = "28.67,56.82")]
    tiers: String,
}

#[derive(Args, Debug)]
struct SmoothArgs {
    /// Series CSV with header; columns `ts,score` (or one score column).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 9)]
    lookback: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print lag and roughness per smoother on stderr.
    #[arg(long)]
    stats: bool,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// `auto` or `p,d,q`.
    #[arg(long, default_value = "auto")]
    order: String,
    #[arg(long, default_value_t = 10)]
    horizon: usize,
    /// Criterion for `--order auto`: aic, aicc or bic.
    #[arg(long, default_value = "bic")]
    criterion: String,
    /// Upper bounds `p,d,q` for `--order auto`.
    #[arg(long, default_value = "5,2,5")]
    bounds: String,
    /// Do not clamp forecasts to [0, 100].
    #[arg(long)]
    unclamped: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum PortraitCmd {
    /// Label days from features: CSV `device_id,date,<features>` to CSV `device_id,date,tag`.
    Label {
        /// Rule file; the built-in network-quality rules when omitted.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit portraits from CSV `device_id,date,tag`; writes newline-delimited JSON.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        /// Fit as of this date (YYYY-MM-DD); each device's last day when omitted.
        #[arg(long)]
        as_of: Option<NaiveDate>,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split each history 4:1 by date, fit on the first part, score on the second.
    Evaluate {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, default_value_t = 15)]
    window: u32,
    #[arg(long, default_value_t = 0.70)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    /// CSV holding a `scaled` column, or a single score column.
    #[arg(long = "in")]
    input: PathBuf,
    /// Low, mid and high proportions.
    #[arg(long, default_value = "0.1345,0.3966,0.4689")]
    proportions: String,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[command(flatten)]
    schema: SchemaArg,
    /// Trigger config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reference population matrix CSV.
    #[arg(long)]
    reference: PathBuf,
    /// Newline-delimited events `{name, device_id, ts_ms, params}`.
    #[arg(long)]
    events: PathBuf,
    /// Score log to create; records go to stdout when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    schema: SchemaArg,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    devices: usize,
    #[arg(long, default_value_t = 7)]
    assign_days: usize,
    #[arg(long, default_value_t = 30)]
    days: usize,
    #[arg(long, default_value_t = 7.0)]
    static_cut: f64,
    /// Run with a zero-effect strategy.
    #[arg(long)]
    null: bool,
    /// Derive tiers from the fleet with these proportions instead of the config.
    #[arg(long)]
    derive_tiers: Option<String>,
    /// Also write the report as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the full report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    schema: SchemaArg,
    #[arg(long, default_value_t = 200)]
    devices: usize,
    /// `matrix` (day-0 snapshot) or `events`.
    #[arg(long, default_value = "matrix")]
    kind: String,
    #[arg(long, default_value_t = 1)]
    days: usize,
    #[arg(long, default_value = "playback")]
    event: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PcaArgs {
    #[command(flatten)]
    m: MatrixArgs,
    /// Cumulative explained-variance target.
    #[arg(long, default_value_t = 0.85)]
    variance: f64,
}

/// Marks failures that are not the caller's fault.
#[derive(Debug)]
struct Internal(anyhow::Error);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Internal {}

fn internal(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(Internal(e.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Internal>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
        Err(_) => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Validate(a) => validate(a),
        Command::Score(a) => score(a),
        Command::Weights(a) => weights(a),
        Command::Smooth(a) => smooth_cmd(a),
        Command::Forecast(a) => forecast_cmd(a),
        Command::Portrait(c) => portrait_cmd(c),
        Command::Thresholds(a) => thresholds(a),
        Command::Replay(a) => replay(a),
        Command::SimulateAb(a) => simulate(a, cli.seed),
        Command::Generate(a) => generate(a, cli.seed),
        Command::Pca(a) => pca(a),
        Command::Correlate(a) => correlate(a),
    }
}

fn open(path: &Path) -> Result<Box<dyn Read>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin()));
    }
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(f))
}

fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(s)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display())).map_err(internal)?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn load_schema(a: &SchemaArg) -> Result<FeatureSchema> {
    match &a.schema {
        Some(p) => parse_schema(&read_text(p)?).with_context(|| format!("schema {}", p.display())),
        None => Ok(builtin_schema()),
    }
}

fn load_matrix(path: &Path) -> Result<DecisionMatrix> {
    DecisionMatrix::read_csv(open(path)?).with_context(|| format!("matrix {}", path.display()))
}

fn load_config(path: &Option<PathBuf>) -> Result<TriggerConfig> {
    match path {
        Some(p) => TriggerConfig::parse(&read_text(p)?).with_context(|| format!("config {}", p.display())),
        None => Ok(TriggerConfig::default()),
    }
}

fn parse_reals<const N: usize>(text: &str, flag: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!("--{flag}: expected {N} comma-separated numbers, got `{text}`"))?;
    v.try_into().map_err(|_| anyhow!("--{flag}: expected {N} comma-separated numbers, got `{text}`"))
}

fn csv_writer(out: Box<dyn Write>) -> csv::Writer<Box<dyn Write>> {
    csv::Writer::from_writer(out)
}

fn finish(mut w: csv::Writer<Box<dyn Write>>) -> Result<()> {
    w.flush().map_err(internal)
}

fn validate(a: ValidateArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    eprintln!("schema ok: {} indicators in {} categories", schema.len(), schema.categories().len());
    let Some(path) = a.records else {
        return Ok(());
    };
    let (mut n, mut dropped) = (0usize, 0usize);
    for (i, line) in BufReader::new(open(&path)?).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FeatureRecord =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        let clean = validate_record(&schema, &rec).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        for name in rec.values.keys().filter(|k| !clean.values.contains_key(*k)) {
            eprintln!("line {}: device {}: `{name}` out of range, dropped", i + 1, rec.device_id);
            dropped += 1;
        }
        n += 1;
    }
    eprintln!("{n} records checked, {dropped} values dropped");
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let schema = load_schema(&a.m.schema)?;
    let x = load_matrix(&a.m.matrix)?;
    let [low, mid] = parse_reals::<2>(&a.tiers, "tiers")?;
    let tiers = TierThresholds::new(low, mid)?;
    let scores = if a.single_level {
        evaluate::evaluate_snapshot(&x, &schema)?
    } else {
        evaluate::evaluate_multilevel(&x, &schema)?
    };
    let mut w = csv_writer(output(&a.m.out)?);
    w.write_record(["row_id", "raw", "scaled", "tier"]).map_err(internal)?;
    for i in 0..scores.row_ids.len() {
        let tier = serde_json::to_value(map_tier(scores.scaled[i], &tiers)).map_err(internal)?;
        w.write_record([
            scores.row_ids[i].clone(),
            scores.raw[i].to_string(),
            scores.scaled[i].to_string(),
            tier.as_str().unwrap_or_default().to_string(),
        ])
        .map_err(internal)?;
    }
    finish(w)
}

fn weights(a: MatrixArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let x = load_matrix(&a.matrix)?;
    let ev = evaluate::evaluate_multilevel_detailed(&x, &schema)?;
    let mut w = csv_writer(output(&a.out)?);
    w.write_record(["level", "indicator", "p_min", "p_max", "entropy", "divergence", "weight"]).map_err(internal)?;
    let mut emit = |level: &str, s: &SnapshotEvaluation| -> Result<()> {
        let wv = &s.weights;
        for j in 0..wv.indicators.len() {
            let p = &wv.p[j];
            w.write_record([
                level.to_string(),
                wv.indicators[j].clone(),
                p.iter().copied().fold(f64::INFINITY, f64::min).to_string(),
                p.iter().copied().fold(f64::NEG_INFINITY, f64::max).to_string(),
                wv.e[j].to_string(),
                wv.g[j].to_string(),
                wv.w[j].to_string(),
            ])
            .map_err(internal)?;
        }
        Ok(())
    };
    for (cat, s) in &ev.per_category {
        emit(cat, s)?;
    }
    if let Some(s) = &ev.stage2 {
        emit("global", s)?;
    }
    finish(w)
}

/// Reads `ts,score` (or a single score column, indexed from 0).
fn read_series(path: &Path) -> Result<(Vec<u64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let width = rdr.headers().with_context(|| format!("series {}", path.display()))?.len();
    let (mut ts, mut xs) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("series {}", path.display()))?;
        let bad = |v: &str| anyhow!("{} line {}: cannot parse `{v}`", path.display(), i + 2);
        if width >= 2 {
            ts.push(rec[0].parse::<u64>().map_err(|_| bad(&rec[0]))?);
            xs.push(rec[1].parse::<f64>().map_err(|_| bad(&rec[1]))?);
        } else {
            ts.push(i as u64);
            xs.push(rec[0].parse::<f64>().map_err(|_| bad(&rec[0]))?);
        }
    }
    Ok((ts, xs))
}

fn smooth_cmd(a: SmoothArgs) -> Result<()> {
    let (ts, xs) = read_series(&a.input)?;
    let series = smooth::ScoreSeries::new("input", ts.iter().copied().zip(xs.iter().copied()).collect())?;
    let p = SmoothParams::new(a.lookback)?;
    let xs = series.values();
    let outs = [smooth::sma(&xs, p), smooth::wma(&xs, p), smooth::wma_corrected(&xs, p), smooth::hma(&xs, p)];
    let mut w = csv_writer(output(&a.out)?);
    w.write_record(["ts", "raw", "sma", "wma", "wma_corr", "hma"]).map_err(internal)?;
    for (i, t) in series.timestamps().iter().enumerate() {
        let mut row = vec![t.to_string(), xs[i].to_string()];
        row.extend(outs.iter().map(|o| o[i].to_string()));
        w.write_record(&row).map_err(internal)?;
    }
    finish(w)?;
    if a.stats {
        eprintln!("raw roughness {}", smooth::roughness(&xs));
        for (name, o) in ["sma", "wma", "wma_corr", "hma"].iter().zip(&outs) {
            let ls = smooth::lag_and_smoothness(&xs, o)?;
            eprintln!("{name}: lag {} roughness {}", ls.lag, ls.roughness);
        }
    }
    Ok(())
}

fn forecast_cmd(a: ForecastArgs) -> Result<()> {
    let (_, xs) = read_series(&a.input)?;
    let model = if a.order.trim().eq_ignore_ascii_case("auto") {
        let criterion: Criterion = a.criterion.parse().map_err(|e: String| anyhow!("--criterion: {e}"))?;
        let bounds: ArimaOrder = a.bounds.parse().map_err(|e| anyhow!("--bounds: {e}"))?;
        forecast::auto_order(&xs, bounds, criterion)?
    } else {
        let order: ArimaOrder = a.order.parse().map_err(|e| anyhow!("--order: {e}"))?;
        forecast::fit_arima(&xs, order)?
    };
    let f = if a.unclamped {
        forecast::forecast_unclamped(&model, &xs, a.horizon)?
    } else {
        forecast::forecast(&model, &xs, a.horizon)?
    };
    eprintln!(
        "ARIMA{} phi={:?} theta={:?} mean={} sigma2={} aic={} aicc={} bic={}",
        model.order, model.phi, model.theta, model.mean, model.sigma2, model.aic, model.aicc, model.bic
    );
    let mut w = csv_writer(output(&a.out)?);
    w.write_record(["step", "point", "lo80", "hi80", "variance"]).map_err(internal)?;
    for h in 0..f.horizon {
        w.write_record([
            (h + 1).to_string(),
            f.point[h].to_string(),
            f.interval_80[h].0.to_string(),
            f.interval_80[h].1.to_string(),
            f.variance[h].to_string(),
        ])
        .map_err(internal)?;
    }
    finish(w)
}

fn fit_params(f: &FitArgs) -> Result<FitParams> {
    if f.window == 0 {
        bail!("--window must be at least 1");
    }
    if !(0.0..=1.0).contains(&f.threshold) {
        bail!("--threshold must lie in [0, 1]");
    }
    Ok(FitParams { window_days: f.window, threshold: f.threshold })
}

fn read_histories(path: &Path) -> Result<Vec<DailyLabelHistory>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let mut days: BTreeMap<String, Vec<(NaiveDate, u8)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("labels {}", path.display()))?;
        let line = i + 2;
        if rec.len() < 3 {
            bail!("{} line {line}: expected device_id,date,tag", path.display());
        }
        let date: NaiveDate =
            rec[1].parse().map_err(|_| anyhow!("{} line {line}: bad date `{}`", path.display(), &rec[1]))?;
        let tag: u8 = rec[2].parse().map_err(|_| anyhow!("{} line {line}: bad tag `{}`", path.display(), &rec[2]))?;
        days.entry(rec[0].to_string()).or_default().push((date, tag));
    }
    days.into_iter().map(|(id, d)| DailyLabelHistory::new(id, d).map_err(Into::into)).collect()
}

fn write_ndjson<T: serde::Serialize>(out: &mut dyn Write, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut *out, it).map_err(internal)?;
        out.write_all(b"\n").map_err(internal)?;
    }
    out.flush().map_err(internal)
}

fn portrait_cmd(c: PortraitCmd) -> Result<()> {
    match c {
        PortraitCmd::Label { rules, input, out } => {
            let rules = match rules {
                Some(p) => LabelRuleSet::parse(&read_text(&p)?).with_context(|| format!("rules {}", p.display()))?,
                None => LabelRuleSet::network_quality(),
            };
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(&input)?);
            let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
            if header.len() < 2 {
                bail!("{}: expected device_id,date,<features>", input.display());
            }
            let mut w = csv_writer(output(&out)?);
            w.write_record(["device_id", "date", "tag"]).map_err(internal)?;
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let mut feats = HashMap::new();
                for (name, v) in header.iter().zip(rec.iter()).skip(2) {
                    let v = if v.is_empty() {
                        None
                    } else {
                        Some(v.parse::<f64>().map_err(|_| {
                            anyhow!("{} line {}: `{name}` = `{v}` is not a number", input.display(), i + 2)
                        })?)
                    };
                    feats.insert(name.clone(), v);
                }
                let tag = portrait::daily_label(&rules, &feats);
                w.write_record([&rec[0], &rec[1], &tag.to_string()]).map_err(internal)?;
            }
            finish(w)
        }
        PortraitCmd::Fit { input, as_of, fit, out } => {
            let params = fit_params(&fit)?;
            let mut labels = Vec::new();
            for h in read_histories(&input)? {
                let Some(day) = as_of.or(h.last_day()) else { continue };
                labels.push(portrait::fit_portrait(&h, day, params)?);
            }
            write_ndjson(&mut *output(&out)?, &labels)
        }
        PortraitCmd::Evaluate { input, fit, out } => {
            let params = fit_params(&fit)?;
            let mut predicted: Vec<PortraitLabel> = Vec::new();
            let mut tests = Vec::new();
            for h in read_histories(&input)? {
                let (train, test) = portrait::split_time_domain(&h);
                if let Some(day) = train.last_day() {
                    predicted.push(portrait::fit_portrait(&train, day, params)?);
                    tests.push(test);
                }
            }
            let report = portrait::evaluate_fit(&predicted, &tests, params)?;
            let mut o = output(&out)?;
            serde_json::to_writer_pretty(&mut o, &report).map_err(internal)?;
            o.write_all(b"\n").map_err(internal)?;
            o.flush().map_err(internal)
        }
    }
}

fn thresholds(a: ThresholdArgs) -> Result<()> {
    let props = parse_reals::<3>(&a.proportions, "proportions")?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(&a.input)?);
    let header = rdr.headers()?.clone();
    let col = match header.iter().position(|h| h == "scaled") {
        Some(j) => j,
        None if header.len() == 1 => 0,
        None => bail!("{}: no `scaled` column", a.input.display()),
    };
    let mut scores = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        scores.push(
            rec[col]
                .parse::<f64>()
                .map_err(|_| anyhow!("{} line {}: cannot parse `{}`", a.input.display(), i + 2, &rec[col]))?,
        );
    }
    let t = engine::derive_thresholds(&scores, props)?;
    println!("low_max,mid_max\n{},{}", t.low_max, t.mid_max);
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let cfg = load_config(&a.config)?;
    let reference = load_matrix(&a.reference)?;
    let mut engine = Engine::new(schema, cfg, &reference)?;
    let events = BufReader::new(open(&a.events)?);
    let sink: Box<dyn Write + Send> = match &a.log {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display())).map_err(internal)?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    };
    engine = engine.with_log(ScoreLog::create(sink).map_err(internal)?);
    let mut n = 0usize;
    for (i, line) in events.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: Event =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", a.events.display(), i + 1))?;
        engine.dispatch(&ev).with_context(|| format!("{} line {}", a.events.display(), i + 1))?;
        n += 1;
    }
    eprintln!("{n} events replayed");
    Ok(())
}

fn simulate(a: SimulateArgs, seed: u64) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let cfg = load_config(&a.config)?;
    let fleet = abharness::generate_fleet(a.devices, seed)?;
    let exp = ExperimentConfig {
        assign_days: a.assign_days,
        duration_days: a.days,
        static_cut: a.static_cut,
        strategy: if a.null { StrategyEffect::NULL } else { StrategyEffect::default() },
        tier_proportions: a.derive_tiers.as_deref().map(|t| parse_reals::<3>(t, "derive-tiers")).transpose()?,
    };
    let report = abharness::run_experiment(&fleet, &schema, &cfg, &exp)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.csv {
        report.write_csv(output(&Some(p.clone()))?)?;
    }
    if let Some(p) = &a.json {
        let mut o = output(&Some(p.clone()))?;
        serde_json::to_writer_pretty(&mut o, &report).map_err(internal)?;
        o.flush().map_err(internal)?;
    }
    Ok(())
}

fn generate(a: GenerateArgs, seed: u64) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let fleet = abharness::generate_fleet(a.devices, seed)?;
    let mut out = output(&a.out)?;
    match a.kind.as_str() {
        "matrix" => abharness::fleet_snapshot(&fleet, &schema, 0)?.write_csv(&mut out).map_err(internal)?,
        "events" => write_ndjson(&mut *out, &abharness::fleet_events(&fleet, &schema, a.days, &a.event))?,
        other => bail!("--kind: expected `matrix` or `events`, got `{other}`"),
    }
    out.flush().map_err(internal)
}

fn pca(a: PcaArgs) -> Result<()> {
    let x = load_matrix(&a.m.matrix)?;
    let r = preprocess::pca(&x, a.variance)?;
    eprintln!("{} components reach {} of the variance", r.selected_count, a.variance);
    let mut w = csv_writer(output(&a.m.out)?);
    let mut header = vec!["component".to_string(), "eigenvalue".into(), "explained".into()];
    header.extend(x.columns().iter().cloned());
    w.write_record(&header).map_err(internal)?;
    for k in 0..r.eigenvalues.len() {
        let mut row =
            vec![(k + 1).to_string(), r.eigenvalues[k].to_string(), r.explained_variance_ratio[k].to_string()];
        row.extend(r.components[k].iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(internal)?;
    }
    finish(w)
}

fn correlate(a: MatrixArgs) -> Result<()> {
    let x = load_matrix(&a.matrix)?;
    let c = preprocess::correlation_matrix(&x)?;
    let mut w = csv_writer(output(&a.out)?);
    let mut header = vec!["indicator".to_string()];
    header.extend(x.columns().iter().cloned());
    w.write_record(&header).map_err(internal)?;
    for (name, row) in x.columns().iter().zip(&c) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(internal)?;
    }
    finish(w)
}
