//! Command-line front end: scoring, biometry, leaderboards, stability,
//! cohort analysis, synthetic data and report assembly.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::Value;

use psfh_eval::biometry::{read_biometry_csv, write_biometry_csv, BiometryRow};
use psfh_eval::cohorts::{challenge_attribute_table, read_attribute_table, AttributeTable, StratumKey};
use psfh_eval::ingest::{read_manifest, save_mask, write_manifest, ManifestEntry, Palette};
use psfh_eval::metrics::{read_records_csv, write_records_csv, MetricOptions, MetricRecord};
use psfh_eval::pipeline::{discover_teams, evaluate_dataset, EvaluateOptions, Evaluation};
use psfh_eval::ranking::{bootstrap_rankings, BootstrapOptions, MetricTable, Scheme, SignificanceOptions};
use psfh_eval::report::{
    emit_report, groups_json, json_bytes, leaderboard_json, significance_json, stability_json, strata_json,
    write_output, ReportOptions,
};
use psfh_eval::synth::{mock_challenge, MockOptions};

const DEFAULT_OUT_DIR: &str = "out";
const DEFAULT_SAMPLES: usize = 1000;

#[derive(Parser, Debug)]
#[command(name = "psfh-eval", version, about = "Evaluate PS/FH segmentations and rank submissions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML file with defaults for any flag; flags given on the command line win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Hausdorff distance between boundaries instead of full regions
    #[arg(long, global = true)]
    hd_on_surface: bool,
    /// Significance level of the pairwise tests
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Ranking scheme
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// Output directory [default: out]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Exit with status 3 when any statistic is undefined
    #[arg(long, global = true)]
    fail_on_undefined: bool,
    /// More log output (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score predictions against a manifest; writes metrics.csv and biometry.csv
    Evaluate(ScoreArgs),
    /// Angle of progression only; writes biometry.csv
    Biometry(ScoreArgs),
    /// Per-task and overall leaderboards from metrics.csv
    Rank(MetricsArg),
    /// Bootstrap ranking stability from metrics.csv
    Bootstrap {
        #[command(flatten)]
        input: MetricsArg,
        #[command(flatten)]
        boot: BootArgs,
    },
    /// Stratified and design-attribute comparisons from metrics.csv
    Cohort {
        #[command(flatten)]
        input: MetricsArg,
        #[command(flatten)]
        cohort: CohortArgs,
    },
    /// Generate synthetic masks, a manifest and optional mock submissions
    Synth(SynthArgs),
    /// Every table and figure from metrics.csv (and biometry.csv)
    Report {
        #[command(flatten)]
        input: MetricsArg,
        /// Per-case biometry CSV
        #[arg(long)]
        biometry: Option<PathBuf>,
        #[command(flatten)]
        boot: BootArgs,
        /// Skip the bootstrap analysis
        #[arg(long)]
        no_bootstrap: bool,
        #[command(flatten)]
        cohort: CohortArgs,
    },
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Case manifest CSV
    #[arg(long)]
    manifest: PathBuf,
    /// Directory with one subdirectory of masks per team
    #[arg(long)]
    predictions: PathBuf,
    /// Teams to score (default: every subdirectory)
    #[arg(long, value_delimiter = ',')]
    teams: Vec<String>,
    /// Per-channel color tolerance when decoding RGB masks
    #[arg(long)]
    palette_tolerance: Option<u8>,
}

#[derive(Args, Debug)]
struct MetricsArg {
    /// Per-case metrics CSV
    #[arg(long)]
    metrics: PathBuf,
}

#[derive(Args, Debug)]
struct BootArgs {
    /// Bootstrap samples [default: 1000]
    #[arg(long)]
    samples: Option<usize>,
    /// Resampling seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CohortArgs {
    /// Stratify by split, institution, scanner, aop_stratum or a manifest tag
    #[arg(long = "by")]
    by: Vec<String>,
    /// Team design-attribute CSV (default: the challenge teams)
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// Attribute to group teams by
    #[arg(long)]
    group_by: Vec<String>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of cases
    #[arg(long, default_value_t = 20)]
    cases: usize,
    /// Generator seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Mock teams whose predictions are written alongside
    #[arg(long, default_value_t = 0)]
    teams: usize,
    /// Image side in pixels
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Lowest target AoP in degrees
    #[arg(long, default_value_t = 70.0)]
    aop_min: f64,
    /// Highest target AoP in degrees
    #[arg(long, default_value_t = 150.0)]
    aop_max: f64,
}

/// Config file keys, spelled like the flags.
#[derive(Deserialize, Debug, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct Config {
    hd_on_surface: Option<bool>,
    alpha: Option<f64>,
    scheme: Option<String>,
    out_dir: Option<PathBuf>,
    jobs: Option<usize>,
    fail_on_undefined: Option<bool>,
    teams: Option<Vec<String>>,
    palette_tolerance: Option<u8>,
    samples: Option<usize>,
    seed: Option<u64>,
    no_bootstrap: Option<bool>,
    by: Option<Vec<String>>,
    attributes: Option<PathBuf>,
    group_by: Option<Vec<String>>,
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Undefined(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Undefined(_) => 3,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

/// Global settings after merging the config file under the flags.
struct Settings {
    metrics: MetricOptions,
    significance: SignificanceOptions,
    scheme: Scheme,
    out_dir: PathBuf,
    jobs: usize,
    fail_on_undefined: bool,
    config: Config,
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config `{}`", path.display()))
        .map_err(usage)?;
    toml::from_str(&text)
        .with_context(|| format!("invalid config `{}`", path.display()))
        .map_err(usage)
}

fn settings(g: &Global) -> Result<Settings, Failure> {
    let config = load_config(g.config.as_deref())?;
    let scheme = match (g.scheme, &config.scheme) {
        (Some(s), _) => s,
        (None, Some(s)) => s.parse().map_err(|e: String| usage(anyhow!(e)))?,
        (None, None) => Scheme::default(),
    };
    let alpha = g.alpha.or(config.alpha).unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(anyhow!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(Settings {
        metrics: MetricOptions {
            hd_on_surface: g.hd_on_surface || config.hd_on_surface.unwrap_or(false),
            ..MetricOptions::default()
        },
        significance: SignificanceOptions {
            alpha,
            ..SignificanceOptions::default()
        },
        scheme,
        out_dir: g
            .out_dir
            .clone()
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
        jobs: g.jobs.or(config.jobs).unwrap_or(0),
        fail_on_undefined: g.fail_on_undefined || config.fail_on_undefined.unwrap_or(false),
        config,
    })
}

fn or_config<T: Clone>(flag: Vec<T>, config: &Option<Vec<T>>) -> Vec<T> {
    if flag.is_empty() {
        config.clone().unwrap_or_default()
    } else {
        flag
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_output(path, bytes).map_err(data)?;
    println!("{}", path.display());
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<MetricRecord>, Failure> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot open `{}`", path.display()))
        .map_err(data)?;
    let records = read_records_csv(file)
        .with_context(|| format!("`{}`", path.display()))
        .map_err(data)?;
    if records.is_empty() {
        return Err(data(anyhow!("`{}` holds no records", path.display())));
    }
    Ok(records)
}

fn load_biometry(path: &Path) -> Result<Vec<BiometryRow>, Failure> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot open `{}`", path.display()))
        .map_err(data)?;
    read_biometry_csv(file)
        .with_context(|| format!("`{}`", path.display()))
        .map_err(data)
}

fn load_attributes(path: Option<&Path>) -> Result<AttributeTable, Failure> {
    let Some(path) = path else {
        return Ok(challenge_attribute_table());
    };
    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot open `{}`", path.display()))
        .map_err(data)?;
    read_attribute_table(file)
        .with_context(|| format!("`{}`", path.display()))
        .map_err(data)
}

fn parse_keys(keys: &[String]) -> Result<Vec<StratumKey>, Failure> {
    keys.iter()
        .map(|k| k.parse().map_err(|e: String| usage(anyhow!(e))))
        .collect()
}

/// Undefined statistics flagged inside a result table: nonempty
/// `undefined` arrays count their entries, `undefined` strings count once.
fn count_undefined(v: &Value) -> usize {
    match v {
        Value::Object(map) => map
            .iter()
            .map(|(k, x)| match (k.as_str(), x) {
                ("undefined", Value::Array(items)) => items.len(),
                ("undefined", Value::String(_)) => 1,
                _ => count_undefined(x),
            })
            .sum(),
        Value::Array(items) => items.iter().map(count_undefined).sum(),
        _ => 0,
    }
}

fn undefined_biometry(rows: &[BiometryRow]) -> usize {
    rows.iter().filter(|r| r.delta_aop.is_none()).count()
}

fn check_undefined(s: &Settings, what: &str, n: usize) -> Result<(), Failure> {
    if n == 0 {
        return Ok(());
    }
    let msg = format!("{n} undefined {what}");
    if s.fail_on_undefined {
        return Err(Failure::Undefined(msg));
    }
    log::warn!("{msg}");
    Ok(())
}

fn score(s: &Settings, args: &ScoreArgs, biometry_only: bool) -> Result<Evaluation, Failure> {
    let entries: Vec<ManifestEntry> = read_manifest(&args.manifest).map_err(data)?;
    let mut teams = or_config(args.teams.clone(), &s.config.teams);
    if teams.is_empty() {
        teams = discover_teams(&args.predictions).map_err(data)?;
    }
    let tolerance = args.palette_tolerance.or(s.config.palette_tolerance).unwrap_or(0);
    let opts = EvaluateOptions {
        metrics: s.metrics,
        palette: Palette::default().with_tolerance(tolerance),
        jobs: s.jobs,
        biometry: true,
    };
    log::info!("scoring {} cases for {} teams", entries.len(), teams.len());
    let eval = evaluate_dataset(&entries, &args.predictions, &teams, &opts).map_err(data)?;
    if eval.missing_predictions > 0 {
        log::warn!("{} missing predictions scored as empty masks", eval.missing_predictions);
    }
    if !biometry_only {
        let mut csv = Vec::new();
        write_records_csv(&mut csv, &eval.records).map_err(data)?;
        write(&s.out_dir.join("metrics.csv"), &csv)?;
    }
    let mut csv = Vec::new();
    write_biometry_csv(&mut csv, &eval.biometry).map_err(data)?;
    write(&s.out_dir.join("biometry.csv"), &csv)?;
    if let Some(first) = eval.failures.first() {
        for f in &eval.failures {
            log::error!("{} {}: {}", f.case_id, f.team.as_deref().unwrap_or("ground truth"), f.message);
        }
        return Err(data(anyhow!(
            "{} case(s) could not be scored, first: {}: {}",
            eval.failures.len(),
            first.case_id,
            first.message
        )));
    }
    Ok(eval)
}

fn bootstrap_options(s: &Settings, b: &BootArgs) -> BootstrapOptions {
    BootstrapOptions {
        scheme: s.scheme,
        samples: b.samples.or(s.config.samples).unwrap_or(DEFAULT_SAMPLES),
        seed: b.seed.or(s.config.seed).unwrap_or(0),
        jobs: s.jobs,
        significance: s.significance,
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let s = settings(&cli.global)?;
    match cli.command {
        Command::Evaluate(args) => {
            let eval = score(&s, &args, false)?;
            check_undefined(&s, "AoP differences", undefined_biometry(&eval.biometry))
        }
        Command::Biometry(args) => {
            let eval = score(&s, &args, true)?;
            check_undefined(&s, "AoP differences", undefined_biometry(&eval.biometry))
        }
        Command::Rank(input) => {
            let table = MetricTable::from_records(&load_records(&input.metrics)?).map_err(data)?;
            let board = leaderboard_json(&table, s.scheme, &s.significance).map_err(data)?;
            let sig = significance_json(&table, &s.significance).map_err(data)?;
            write(&s.out_dir.join("leaderboard.json"), &json_bytes(&board))?;
            write(&s.out_dir.join("significance.json"), &json_bytes(&sig))?;
            check_undefined(&s, "pairwise tests", count_undefined(&sig))
        }
        Command::Bootstrap { input, boot } => {
            let table = MetricTable::from_records(&load_records(&input.metrics)?).map_err(data)?;
            let opts = bootstrap_options(&s, &boot);
            if opts.samples == 0 {
                return Err(usage(anyhow!("--samples must be positive")));
            }
            let report = bootstrap_rankings(&table, &opts)
                .and_then(|run| run.summary(table.teams()))
                .map_err(data)?;
            write(&s.out_dir.join("stability.json"), &json_bytes(&stability_json(&report, opts.seed)))
        }
        Command::Cohort { input, cohort } => {
            let records = load_records(&input.metrics)?;
            let keys = parse_keys(&or_config(cohort.by, &s.config.by))?;
            let attrs = or_config(cohort.group_by, &s.config.group_by);
            if keys.is_empty() && attrs.is_empty() {
                return Err(usage(anyhow!("give at least one --by key or --group-by attribute")));
            }
            let tasks = MetricTable::from_records(&records).map_err(data)?.tasks().to_vec();
            let mut undefined = 0;
            for key in &keys {
                let v = strata_json(&records, key, &tasks).map_err(data)?;
                write(&s.out_dir.join(format!("strata_{}.json", file_label(&key.to_string()))), &json_bytes(&v))?;
            }
            if !attrs.is_empty() {
                let path = cohort.attributes.or_else(|| s.config.attributes.clone());
                let table = load_attributes(path.as_deref())?;
                for a in &attrs {
                    let v = groups_json(&records, &table, a, &tasks).map_err(data)?;
                    undefined += count_undefined(&v);
                    write(&s.out_dir.join(format!("groups_{}.json", file_label(a))), &json_bytes(&v))?;
                }
            }
            check_undefined(&s, "group comparisons", undefined)
        }
        Command::Synth(args) => synth(&s, &args),
        Command::Report {
            input,
            biometry,
            boot,
            no_bootstrap,
            cohort,
        } => {
            let records = load_records(&input.metrics)?;
            let rows = match biometry {
                Some(p) => load_biometry(&p)?,
                None => Vec::new(),
            };
            let keys = or_config(cohort.by, &s.config.by);
            let attrs = or_config(cohort.group_by, &s.config.group_by);
            let defaults = ReportOptions::default();
            let opts = ReportOptions {
                scheme: s.scheme,
                significance: s.significance,
                bootstrap: (!(no_bootstrap || s.config.no_bootstrap.unwrap_or(false)))
                    .then(|| bootstrap_options(&s, &boot)),
                strata: if keys.is_empty() { defaults.strata } else { parse_keys(&keys)? },
                attributes: if attrs.is_empty() {
                    None
                } else {
                    let path = cohort.attributes.or_else(|| s.config.attributes.clone());
                    Some((load_attributes(path.as_deref())?, attrs))
                },
            };
            let files = emit_report(&records, &rows, &opts, &s.out_dir).map_err(data)?;
            let mut undefined = 0;
            for f in &files {
                println!("{}", f.display());
                let top_level_json = f.parent() == Some(s.out_dir.as_path()) && f.extension().is_some_and(|e| e == "json");
                if top_level_json {
                    let text = std::fs::read(f).map_err(data)?;
                    undefined += count_undefined(&serde_json::from_slice(&text).map_err(data)?);
                }
            }
            check_undefined(&s, "statistics", undefined + undefined_biometry(&rows))
        }
    }
}

/// File-name-safe form of a label.
fn file_label(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn synth(s: &Settings, args: &SynthArgs) -> Result<(), Failure> {
    if !(args.aop_min < args.aop_max) {
        return Err(usage(anyhow!("--aop-min must be below --aop-max")));
    }
    if args.cases == 0 {
        return Err(usage(anyhow!("--cases must be positive")));
    }
    let opts = MockOptions {
        size: args.size,
        aop_range: (args.aop_min, args.aop_max),
        ..MockOptions::new(args.seed.or(s.config.seed).unwrap_or(0), args.teams, args.cases)
    };
    let challenge = mock_challenge(&opts).map_err(data)?;
    let palette = Palette::default();
    let mut entries = Vec::with_capacity(challenge.cases.len());
    let mut aops = Vec::with_capacity(challenge.cases.len());
    for case in &challenge.cases {
        let rel = PathBuf::from("gt").join(format!("{}.png", case.meta.case_id));
        save_mask(&case.gt, s.out_dir.join(&rel), &palette).map_err(data)?;
        for (team, pred) in challenge.teams.iter().zip(&case.predictions) {
            let path = s.out_dir.join("predictions").join(team).join(format!("{}.png", case.meta.case_id));
            save_mask(pred, &path, &palette).map_err(data)?;
        }
        entries.push(ManifestEntry {
            meta: case.meta.clone(),
            gt_path: rel,
        });
        aops.push(format!("{:.6}", case.aop));
    }
    let mut csv = Vec::new();
    write_manifest(&mut csv, &entries, &[("aop_analytic", aops)]).map_err(data)?;
    write(&s.out_dir.join("manifest.csv"), &csv)?;
    log::info!("{} cases, {} mock teams", challenge.cases.len(), challenge.teams.len());
    Ok(())
}

/// The error chain joined by `: `, skipping causes the outer messages
/// already quote.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) | Failure::Data(e) => eprintln!("error: {}", describe(e)),
                Failure::Undefined(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
