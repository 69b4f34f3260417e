use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use review_alpha::features::{compute_features, write_catalog_json, WindowGrid};
use review_alpha::ingest::{
    filter_firms, read_prices_file, read_reviews_file, read_sectors_file, write_reviews_jsonl,
    MalformedPolicy,
};
use review_alpha::market::{
    bars_by_firm, indicator_series, weekly_bars, write_indicators_csv, write_targets_csv,
};
use review_alpha::panel::build_weekly_aggregates;
use review_alpha::pipeline::{self, ExperimentConfig, FileDigest, Inputs, Prepared, RunManifest};
use review_alpha::synth::{generate, SynthSpec};
use review_alpha::{Error, Result};

/// Long-horizon stock direction prediction from aggregated product reviews.
#[derive(Debug, Parser)]
#[command(name = "review-alpha", version)]
struct Cli {
    /// Worker threads; results do not depend on the count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and deduplicate reviews, apply the firm filter, and dump
    /// the weekly panel.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with planted signal.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the feature matrix and its catalog sidecar.
    Features(FeatureArgs),
    /// Export forward returns, labels, and technical indicators.
    Targets(TargetArgs),
    /// Per-firm significance screening over the training period.
    Correlate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Overrides the configured significance level.
        #[arg(long)]
        alpha: Option<f64>,
        /// Overrides the configured largest lag.
        #[arg(long)]
        shifts: Option<u8>,
    },
    /// List the features whose passing rate reaches a borderline.
    SelectFeatures {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        borderline: f64,
    },
    /// Cross-validated comparison of the configured learners.
    Tournament(StepArgs),
    /// Hold-out evaluation of review features against the indicators.
    Holdout(StepArgs),
    /// Cross-validated accuracy over the borderline grid.
    SweepBorderline(ExperimentArgs),
    /// Hold-out accuracy over training window lengths.
    SweepWindow(StepArgs),
    /// Hold-out accuracy after dropping small returns.
    SweepTau(StepArgs),
    /// Per-firm accuracy with sector rankings and reviewer levels.
    Report(StepArgs),
    /// The whole protocol.
    Run(ExperimentArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    reviews: PathBuf,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    min_reviews: usize,
    #[arg(long, default_value_t = 0)]
    min_span_months: u32,
    #[arg(long, default_value = "skip")]
    on_malformed: MalformedPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    #[arg(long)]
    reviews: PathBuf,
    /// `default` or e.g. `n=1,2,4;m=8,12`.
    #[arg(long, default_value = "default")]
    windows: String,
    #[arg(long, default_value = "skip")]
    on_malformed: MalformedPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TargetArgs {
    #[arg(long)]
    prices: PathBuf,
    #[arg(long, default_value_t = 8)]
    horizon: u8,
    #[arg(long, default_value_t = 0.0)]
    cutoff: f64,
    #[arg(long, default_value_t = 10)]
    indicator_period: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reviews: PathBuf,
    #[arg(long)]
    prices: PathBuf,
    /// CSV `firm_id,sector`; needed by `report` and `run`.
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long, default_value = "skip")]
    on_malformed: MalformedPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Use this borderline instead of running the borderline sweep.
    #[arg(long)]
    borderline: Option<f64>,
}

/// Output directory plus the manifest that travels with it.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    manifest: RunManifest,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl Outputs {
    fn new(dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            manifest: RunManifest {
                tool_version: pipeline::TOOL_VERSION.to_string(),
                command: command.to_string(),
                config_hash: None,
                seed: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_at: now(),
                finished_at: String::new(),
            },
        })
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.manifest.inputs.push(FileDigest {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: pipeline::file_digest(path)?,
        });
        Ok(())
    }

    fn config(&mut self, config: &ExperimentConfig) {
        self.manifest.config_hash = Some(config.hash());
        self.manifest.seed = Some(config.seed);
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        let path = self.dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finished_at = now();
        self.manifest.write(&self.dir, &self.files)
    }
}

fn write_json(out: &mut Outputs, name: &str, value: &serde_json::Value) -> Result<()> {
    let mut w = out.create(name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(name, e))
}

fn load_experiment(args: &ExperimentArgs, command: &str, need_sectors: bool) -> Result<(Prepared, Outputs)> {
    let config_path = args.config.as_ref().ok_or_else(|| {
        Error::Argument(format!("{command} needs --config FILE"))
    })?;
    let config = ExperimentConfig::read(config_path)?;
    let mut out = Outputs::new(&args.out, command)?;
    out.input("config", config_path)?;
    out.input("reviews", &args.reviews)?;
    out.input("prices", &args.prices)?;
    out.config(&config);
    let load = read_reviews_file(&args.reviews, args.on_malformed)?;
    let prices = read_prices_file(&args.prices)?;
    let sectors = match &args.sectors {
        Some(p) => {
            out.input("sectors", p)?;
            read_sectors_file(p)?
        }
        None if need_sectors => {
            return Err(Error::Argument(format!("{command} needs --sectors FILE")));
        }
        None => BTreeMap::new(),
    };
    let inputs = Inputs { reviews: load.reviews, prices, sectors };
    Ok((Prepared::new(inputs, config)?, out))
}

/// Features for a step: the given borderline, or the sweep's best.
fn step_features(p: &Prepared, borderline: Option<f64>) -> Result<Vec<String>> {
    let b = match borderline {
        Some(b) => b,
        None => p.borderline_sweep()?.best.ok_or_else(|| {
            Error::InsufficientData("no borderline produced a cross-validated accuracy".into())
        })?,
    };
    p.selected_features(b)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => {
            let mut out = Outputs::new(&a.out, "ingest")?;
            out.input("reviews", &a.reviews)?;
            let load = read_reviews_file(&a.reviews, a.on_malformed)?;
            let kept = filter_firms(&load.reviews, a.min_reviews, a.min_span_months);
            write_reviews_jsonl(&kept.reviews, out.create("reviews.jsonl")?)?;
            build_weekly_aggregates(&kept.reviews).write_csv(out.create("panel.csv")?)?;
            let mut summary = serde_json::json!({
                "reviews_loaded": load.reviews.len(),
                "malformed_skipped": load.skipped,
                "duplicates_removed": load.duplicates,
                "eligible_firms": kept.eligible,
                "reviews_kept": kept.reviews.len(),
            });
            if let Some(p) = &a.prices {
                out.input("prices", p)?;
                let bars = weekly_bars(&read_prices_file(p)?);
                summary["weekly_bars"] = bars.len().into();
            }
            write_json(&mut out, "ingest_summary.json", &summary)?;
            out.finish()
        }
        Command::Synth { spec, out: dir } => {
            let s = SynthSpec::read(&spec)?;
            let corpus = generate(&s)?;
            corpus.write(&dir)?;
            let mut out = Outputs::new(&dir, "synth")?;
            out.input("spec", &spec)?;
            out.manifest.seed = Some(s.seed);
            out.files = ["reviews.jsonl", "prices.csv", "sectors.csv", "manifest.json"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            out.finish()
        }
        Command::Features(a) => {
            let grid = WindowGrid::parse(&a.windows)?;
            let mut out = Outputs::new(&a.out, "features")?;
            out.input("reviews", &a.reviews)?;
            let load = read_reviews_file(&a.reviews, a.on_malformed)?;
            let panel = build_weekly_aggregates(&load.reviews);
            let catalog = review_alpha::features::enumerate_catalog(&grid);
            let matrix = compute_features(&panel, &catalog)?;
            matrix.write_csv(out.create("features.csv")?)?;
            write_catalog_json(matrix.keys(), out.create("catalog.json")?)?;
            out.finish()
        }
        Command::Targets(a) => {
            let mut out = Outputs::new(&a.out, "targets")?;
            out.input("prices", &a.prices)?;
            let series = bars_by_firm(&weekly_bars(&read_prices_file(&a.prices)?));
            write_targets_csv(&series, a.horizon, a.cutoff, out.create("targets.csv")?)?;
            let mut rows = Vec::new();
            for bars in series.values() {
                for (b, v) in bars.iter().zip(indicator_series(bars, a.indicator_period)?) {
                    rows.push((b, v));
                }
            }
            write_indicators_csv(&rows, out.create("indicators.csv")?)?;
            out.finish()
        }
        Command::Correlate { mut exp, alpha, shifts } => {
            if alpha.is_some() || shifts.is_some() {
                exp.config = Some(override_screening(&exp, alpha, shifts)?);
            }
            let (p, mut out) = load_experiment(&exp, "correlate", false)?;
            p.significance.write_csv(out.create("significance.csv")?)?;
            pipeline::write_targets_summary(&p.target, out.create("targets.csv")?)?;
            out.finish()
        }
        Command::SelectFeatures { exp, borderline } => {
            let (p, mut out) = load_experiment(&exp, "select-features", false)?;
            let names = p.selected_features(borderline)?;
            let mut w = out.create("selected_features.csv")?;
            writeln!(w, "feature").map_err(|e| Error::io("selected_features.csv", e))?;
            for n in names {
                writeln!(w, "{n}").map_err(|e| Error::io("selected_features.csv", e))?;
            }
            drop(w);
            out.finish()
        }
        Command::Tournament(a) => {
            let (p, mut out) = load_experiment(&a.exp, "tournament", false)?;
            let rows = p.tournament(&step_features(&p, a.borderline)?)?;
            pipeline::write_tournament_csv(&rows, out.create("tournament.csv")?)?;
            out.finish()
        }
        Command::Holdout(a) => {
            let (p, mut out) = load_experiment(&a.exp, "holdout", false)?;
            let h = p.holdout(&step_features(&p, a.borderline)?)?;
            pipeline::write_holdout_csv(&[&h.reviews, &h.indicators], out.create("holdout.csv")?)?;
            out.finish()
        }
        Command::SweepBorderline(exp) => {
            let (p, mut out) = load_experiment(&exp, "sweep-borderline", false)?;
            let sweep = p.borderline_sweep()?;
            pipeline::write_borderline_csv(&sweep, out.create("borderline_sweep.csv")?)?;
            out.finish()
        }
        Command::SweepWindow(a) => {
            let (p, mut out) = load_experiment(&a.exp, "sweep-window", false)?;
            let pts = p.window_sweep(&step_features(&p, a.borderline)?)?;
            pipeline::write_window_csv(&pts, out.create("window_sweep.csv")?)?;
            out.finish()
        }
        Command::SweepTau(a) => {
            let (p, mut out) = load_experiment(&a.exp, "sweep-tau", false)?;
            let pts = p.tau_sweep(&step_features(&p, a.borderline)?)?;
            pipeline::write_tau_csv(&pts, out.create("tau_sweep.csv")?)?;
            out.finish()
        }
        Command::Report(a) => {
            let (p, mut out) = load_experiment(&a.exp, "report", true)?;
            let h = p.holdout(&step_features(&p, a.borderline)?)?;
            let r = p.firm_report(&h)?;
            pipeline::write_firm_csv(&r, out.create("firm_accuracy.csv")?)?;
            pipeline::write_sector_ranks_csv(&r, out.create("sector_ranks.csv")?)?;
            pipeline::write_user_levels_csv(&r, out.create("user_levels.csv")?)?;
            out.finish()
        }
        Command::Run(exp) => {
            let (p, mut out) = load_experiment(&exp, "run", true)?;
            let report = p.run()?;
            out.files = report.write(&out.dir)?;
            out.finish()
        }
    }
}

/// Writes a copy of the config with screening overrides next to the
/// outputs and returns its path.
fn override_screening(exp: &ExperimentArgs, alpha: Option<f64>, shifts: Option<u8>) -> Result<PathBuf> {
    let path = exp
        .config
        .as_ref()
        .ok_or_else(|| Error::Argument("correlate needs --config FILE".into()))?;
    let mut config = ExperimentConfig::read(path)?;
    if let Some(a) = alpha {
        config.screening.alpha = a;
    }
    if let Some(s) = shifts {
        config.screening.max_shift = s;
    }
    config.validate()?;
    fs::create_dir_all(&exp.out).map_err(|e| Error::io(&exp.out, e))?;
    let copy = exp.out.join("config.effective.toml");
    let text = toml::to_string(&config).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&copy, text).map_err(|e| Error::io(&copy, e))?;
    Ok(copy)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REVIEW_ALPHA_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
