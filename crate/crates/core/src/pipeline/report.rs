//! Report files. Every table is written with a fixed column order and
//! shortest round-trip float formatting, so equal results give equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::dataset::LeakageAudit;
use super::experiments::{BorderlineSweep, HoldoutResult, TauPoint, TournamentRow, WindowPoint};
use super::firm_report::FirmSectorReport;
use crate::error::{Error, Result};
use crate::gbm::{EvalMetrics, MeanMetrics};
use crate::stats::{SignificanceTable, TargetSelection};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A published figure from the original study on its proprietary corpus.
/// Recorded for comparison; synthetic runs are not expected to match it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceValue {
    pub name: &'static str,
    pub value: f64,
    pub context: &'static str,
}

pub const REFERENCE_VALUES: [ReferenceValue; 10] = [
    ReferenceValue { name: "cv_accuracy_gbm", value: 0.5965, context: "5-fold CV accuracy of the boosted trees" },
    ReferenceValue { name: "sweep_peak_accuracy", value: 0.5922, context: "best CV accuracy over borderlines" },
    ReferenceValue { name: "sweep_peak_borderline", value: 0.2, context: "borderline of the sweep peak" },
    ReferenceValue { name: "sweep_peak_features", value: 6246.0, context: "features kept at the sweep peak" },
    ReferenceValue { name: "holdout_accuracy_reviews", value: 0.6102, context: "hold-out accuracy, review features" },
    ReferenceValue { name: "holdout_accuracy_indicators", value: 0.4708, context: "hold-out accuracy, ten indicators" },
    ReferenceValue { name: "holdout_majority_share", value: 0.5159, context: "hold-out majority share" },
    ReferenceValue { name: "holdout_precision_up", value: 0.6605, context: "hold-out precision of the up class" },
    ReferenceValue { name: "tau_min_accuracy", value: 0.5986, context: "lowest tau-sweep accuracy, tau 0.02, n 14506" },
    ReferenceValue { name: "tau_max_accuracy", value: 0.6875, context: "highest tau-sweep accuracy, tau 0.086, n 9070" },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportHeader {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl ReportHeader {
    pub fn new(config_hash: String, seed: u64) -> Self {
        ReportHeader { config_hash, seed, tool_version: TOOL_VERSION.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub n_firms: usize,
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_positive_share: f64,
    pub test_positive_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldoutComparison {
    pub reviews: HoldoutResult,
    pub indicators: HoldoutResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub header: ReportHeader,
    pub dataset: DatasetSummary,
    pub audit: LeakageAudit,
    pub target: TargetSelection,
    #[serde(skip)]
    pub significance: SignificanceTable,
    pub borderline_sweep: BorderlineSweep,
    pub selected_borderline: f64,
    pub selected_features: Vec<String>,
    pub tournament: Vec<TournamentRow>,
    pub holdout: HoldoutComparison,
    pub window_sweep: Vec<WindowPoint>,
    pub tau_sweep: Vec<TauPoint>,
    pub firms: FirmSectorReport,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn mean_fields(m: Option<MeanMetrics>) -> Vec<String> {
    vec![
        m.map_or_else(String::new, |m| m.folds_used.to_string()),
        opt(m.and_then(|m| m.accuracy)),
        opt(m.and_then(|m| m.precision)),
        opt(m.and_then(|m| m.recall)),
        opt(m.and_then(|m| m.f_measure)),
        opt(m.and_then(|m| m.majority_share)),
    ]
}

const MEAN_HEADER: [&str; 6] =
    ["folds_used", "accuracy", "precision", "recall", "f_measure", "majority_share"];

fn metric_fields(m: Option<&EvalMetrics>) -> Vec<String> {
    m.map_or_else(|| vec![String::new(); EvalMetrics::CSV_HEADER.len()], |m| m.csv_fields())
}

fn write_table<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io("<csv table>", e))?;
    Ok(())
}

fn header_with<'a>(lead: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    lead.iter().chain(tail).copied().collect()
}

pub fn write_targets_summary<W: Write>(sel: &TargetSelection, out: W) -> Result<()> {
    let rows = sel.distributions.iter().map(|d| {
        let rank = sel.ranking.iter().position(|&t| t == d.target).map_or(0, |p| p + 1);
        let c = d.counts;
        vec![
            format!("RW_{}", d.target),
            opt(c.map(|c| c.min)),
            opt(c.map(|c| c.q1)),
            opt(c.map(|c| c.median)),
            opt(c.map(|c| c.q3)),
            opt(c.map(|c| c.max)),
            d.mean.to_string(),
            rank.to_string(),
            u8::from(d.target == sel.selected).to_string(),
        ]
    });
    write_table(out, &["target", "min", "q1", "median", "q3", "max", "mean", "rank", "selected"], rows)
}

pub fn write_borderline_csv<W: Write>(sweep: &BorderlineSweep, out: W) -> Result<()> {
    let rows = sweep.points.iter().map(|p| {
        let mut r = vec![p.borderline.to_string(), p.n_features.to_string()];
        r.extend(mean_fields(p.cv));
        r
    });
    write_table(out, &header_with(&["borderline", "n_features"], &MEAN_HEADER), rows)
}

pub fn write_tournament_csv<W: Write>(rows: &[TournamentRow], out: W) -> Result<()> {
    let table = rows.iter().map(|t| {
        let mut r = vec![t.rank.to_string(), t.name.clone()];
        r.extend(mean_fields(t.mean));
        r.push(t.failure.clone().unwrap_or_default());
        r
    });
    let header = header_with(&header_with(&["rank", "learner"], &MEAN_HEADER), &["failure"]);
    write_table(out, &header, table)
}

pub fn write_holdout_csv<W: Write>(results: &[&HoldoutResult], out: W) -> Result<()> {
    let rows = results.iter().map(|h| {
        let mut r = vec![
            h.feature_set.clone(),
            h.learner.name().to_string(),
            h.n_features.to_string(),
            h.n_train.to_string(),
        ];
        r.extend(h.metrics.csv_fields());
        r.push(h.majority_share.to_string());
        r.push(h.positive_share.to_string());
        r
    });
    let header = header_with(
        &header_with(&["feature_set", "learner", "n_features", "n_train"], &EvalMetrics::CSV_HEADER),
        &["majority_share", "positive_share"],
    );
    write_table(out, &header, rows)
}

pub fn write_window_csv<W: Write>(points: &[WindowPoint], out: W) -> Result<()> {
    let rows = points.iter().map(|p| {
        vec![
            p.period.clone(),
            p.years.to_string(),
            p.weeks.to_string(),
            p.n_train.to_string(),
            p.n_test.to_string(),
            opt(p.accuracy),
            opt(p.majority_share),
            opt(p.relative_accuracy),
            p.note.clone().unwrap_or_default(),
        ]
    });
    write_table(
        out,
        &["period", "years", "weeks", "n_train", "n_test", "accuracy", "majority_share", "relative_accuracy", "note"],
        rows,
    )
}

pub fn write_tau_csv<W: Write>(points: &[TauPoint], out: W) -> Result<()> {
    let rows = points.iter().map(|p| {
        let mut r = vec![p.tau.to_string(), p.n_train.to_string(), p.n_test.to_string()];
        r.extend(metric_fields(p.metrics.as_ref()));
        r.push(opt(p.majority_share));
        r
    });
    let header = header_with(
        &header_with(&["tau", "n_train", "n_test"], &EvalMetrics::CSV_HEADER),
        &["majority_share"],
    );
    write_table(out, &header, rows)
}

pub fn write_firm_csv<W: Write>(r: &FirmSectorReport, out: W) -> Result<()> {
    let rows = r.firms.iter().map(|f| {
        vec![f.rank.to_string(), f.firm_id.clone(), f.sector.clone(), f.n.to_string(), f.accuracy.to_string()]
    });
    write_table(out, &["rank", "firm_id", "sector", "n", "accuracy"], rows)
}

pub fn write_sector_ranks_csv<W: Write>(r: &FirmSectorReport, out: W) -> Result<()> {
    let rows = r.sectors.iter().map(|s| {
        let k = s.ranks;
        vec![
            s.sector.clone(),
            s.n_firms.to_string(),
            k.min.to_string(),
            k.q1.to_string(),
            k.median.to_string(),
            k.q3.to_string(),
            k.max.to_string(),
        ]
    });
    write_table(out, &["sector", "n_firms", "min", "q1", "median", "q3", "max"], rows)
}

pub fn write_user_levels_csv<W: Write>(r: &FirmSectorReport, out: W) -> Result<()> {
    let rows = r.user_levels.iter().flat_map(|s| {
        s.levels.iter().map(move |(level, count, share)| {
            vec![s.sector.clone(), level.name().to_string(), count.to_string(), share.to_string()]
        })
    });
    write_table(out, &["sector", "user_level", "count", "share"], rows)
}

/// Long-format plot data: one (series, x, y) triple per line.
fn write_plot<W: Write>(points: impl IntoIterator<Item = (String, f64, Option<f64>)>, out: W) -> Result<()> {
    write_table(
        out,
        &["series", "x", "y"],
        points.into_iter().map(|(s, x, y)| vec![s, x.to_string(), opt(y)]),
    )
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    let path = dir.join(name);
    fs::File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn percent(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

impl ExperimentReport {
    /// Plain-text digest with the traceability header.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let h = &self.header;
        let _ = writeln!(s, "review-alpha experiment report");
        let _ = writeln!(s, "config_hash: {}", h.config_hash);
        let _ = writeln!(s, "seed: {}", h.seed);
        let _ = writeln!(s, "tool_version: {}", h.tool_version);
        let d = &self.dataset;
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "firms: {}  catalog features: {}", d.n_firms, d.n_features);
        let _ = writeln!(
            s,
            "train rows: {} (up share {})  test rows: {} (up share {})",
            d.n_train,
            percent(d.train_positive_share),
            d.n_test,
            percent(d.test_positive_share)
        );
        let a = &self.audit;
        let _ = writeln!(
            s,
            "leakage audit: {} violations over {} training rows",
            a.violations.len(),
            a.train_rows
        );
        let _ = writeln!(s, "\n[target]");
        let _ = writeln!(s, "modelled target: RW_{}", self.target.selected);
        let ranking: Vec<String> = self.target.ranking.iter().map(|t| format!("RW_{t}")).collect();
        let _ = writeln!(s, "ranking by median significance count: {}", ranking.join(" "));
        if let Some(e) = &self.target.exemplar {
            let _ = writeln!(s, "most widely significant feature: {} ({} of {} firms)", e.feature, e.count, e.n_firms);
        }
        let _ = writeln!(s, "\n[feature selection]");
        let _ = writeln!(
            s,
            "selected borderline: {}  features kept: {}",
            self.selected_borderline,
            self.selected_features.len()
        );
        if let Some(acc) = self.borderline_sweep.best_point().and_then(|p| p.cv?.accuracy) {
            let _ = writeln!(s, "peak CV accuracy: {}", percent(acc));
        }
        let _ = writeln!(s, "\n[tournament]");
        for t in &self.tournament {
            let acc = t.mean.and_then(|m| m.accuracy).map_or_else(|| "failed".to_string(), percent);
            let _ = writeln!(s, "{}. {}: {}", t.rank, t.name, acc);
        }
        let _ = writeln!(s, "\n[hold-out]");
        for r in [&self.holdout.reviews, &self.holdout.indicators] {
            let _ = writeln!(
                s,
                "{} ({}, {} features): accuracy {}  precision {}  majority share {}  n {}",
                r.feature_set,
                r.learner,
                r.n_features,
                percent(r.metrics.accuracy),
                r.metrics.precision.map_or_else(|| "undefined".into(), percent),
                percent(r.majority_share),
                r.metrics.n
            );
        }
        let _ = writeln!(s, "\n[window sweep]");
        for p in &self.window_sweep {
            let rel = p.relative_accuracy.map_or_else(
                || format!("undefined ({})", p.note.as_deref().unwrap_or("")),
                |v| format!("{:+.2} points", v * 100.0),
            );
            let _ = writeln!(s, "{} {}y: {}", p.period, p.years, rel);
        }
        let _ = writeln!(s, "\n[tau sweep]");
        let defined: Vec<(f64, f64, usize)> = self
            .tau_sweep
            .iter()
            .filter_map(|p| Some((p.tau, p.metrics?.accuracy, p.n_train + p.n_test)))
            .collect();
        let extreme = |better: fn(f64, f64) -> bool| {
            defined.iter().copied().reduce(|a, b| if better(b.1, a.1) { b } else { a })
        };
        if let (Some(lo), Some(hi)) = (extreme(|a, b| a < b), extreme(|a, b| a > b)) {
            let _ = writeln!(s, "minimum accuracy {} at tau {} (n {})", percent(lo.1), lo.0, lo.2);
            let _ = writeln!(s, "maximum accuracy {} at tau {} (n {})", percent(hi.1), hi.0, hi.2);
        }
        let _ = writeln!(s, "\n[sectors]");
        for sec in &self.firms.sectors {
            let _ = writeln!(s, "{}: {} firms, median rank {}", sec.sector, sec.n_firms, sec.ranks.median);
        }
        let _ = writeln!(s, "\n[reference values, proprietary corpus, not reproducible here]");
        for r in REFERENCE_VALUES {
            let _ = writeln!(s, "{}: {} ({})", r.name, r.value, r.context);
        }
        s
    }

    /// Writes every report file into `dir` and returns their names.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut names = Vec::new();
        let mut file = |name: &str| -> Result<BufWriter<fs::File>> {
            names.push(name.to_string());
            create(dir, name)
        };
        file("summary.txt")?
            .write_all(self.summary().as_bytes())
            .map_err(|e| Error::io(dir.join("summary.txt"), e))?;
        self.significance.write_csv(file("significance.csv")?)?;
        write_targets_summary(&self.target, file("targets.csv")?)?;
        write_borderline_csv(&self.borderline_sweep, file("borderline_sweep.csv")?)?;
        write_table(
            file("selected_features.csv")?,
            &["feature"],
            self.selected_features.iter().map(|f| vec![f.clone()]),
        )?;
        write_tournament_csv(&self.tournament, file("tournament.csv")?)?;
        write_holdout_csv(&[&self.holdout.reviews, &self.holdout.indicators], file("holdout.csv")?)?;
        write_window_csv(&self.window_sweep, file("window_sweep.csv")?)?;
        write_tau_csv(&self.tau_sweep, file("tau_sweep.csv")?)?;
        write_firm_csv(&self.firms, file("firm_accuracy.csv")?)?;
        write_sector_ranks_csv(&self.firms, file("sector_ranks.csv")?)?;
        write_user_levels_csv(&self.firms, file("user_levels.csv")?)?;
        write_table(
            file("leakage_audit.csv")?,
            &["violation"],
            self.audit.violations.iter().map(|v| vec![v.clone()]),
        )?;
        write_plot(
            self.borderline_sweep.points.iter().flat_map(|p| {
                [
                    ("cv_accuracy".to_string(), p.borderline, p.cv.and_then(|m| m.accuracy)),
                    ("n_features".to_string(), p.borderline, Some(p.n_features as f64)),
                ]
            }),
            file("plot_borderline.csv")?,
        )?;
        write_plot(
            self.window_sweep.iter().map(|p| (p.period.clone(), p.years, p.relative_accuracy)),
            file("plot_window.csv")?,
        )?;
        write_plot(
            self.tau_sweep.iter().flat_map(|p| {
                [
                    ("accuracy".to_string(), p.tau, p.metrics.map(|m| m.accuracy)),
                    ("n".to_string(), p.tau, Some((p.n_train + p.n_test) as f64)),
                ]
            }),
            file("plot_tau.csv")?,
        )?;
        Ok(names)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a file's contents, read in chunks.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Written beside every output directory's files. The outputs' digests
/// depend only on the config hash, seed, tool version, and input digests;
/// the timestamps are informational.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

pub const MANIFEST_FILE: &str = "run_manifest.json";

impl RunManifest {
    /// Digests the listed output files of `dir` and writes the manifest.
    pub fn write(&mut self, dir: &Path, outputs: &[String]) -> Result<()> {
        self.outputs = outputs
            .iter()
            .map(|name| {
                Ok(FileDigest {
                    role: "output".into(),
                    path: name.clone(),
                    sha256: file_digest(&dir.join(name))?,
                })
            })
            .collect::<Result<_>>()?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
