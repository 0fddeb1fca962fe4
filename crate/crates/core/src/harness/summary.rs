use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunOutput;
use crate::error::{ensure, Error, Result};
use crate::kge::{EmbeddingTable, KgeMethod};
use crate::ledger::{derive_metrics, Attainment, DerivedMetrics, Direction, RunLog};

/// `summary.json`. The `P@…` fields hold absolute cumulative parameter
/// counts (the run measured against itself); [`compare_runs`] turns them
/// into ratios against a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub dataset_fingerprint: String,
    pub kge_method: KgeMethod,
    pub dim: usize,
    pub trained_dim: usize,
    pub rounds_run: usize,
    #[serde(rename = "MRR@CG")]
    pub mrr_cg: f64,
    #[serde(rename = "Hits@10@CG")]
    pub hits10_cg: f64,
    #[serde(rename = "R@CG")]
    pub r_cg: usize,
    pub total_params_up: u64,
    pub total_params_down: u64,
    #[serde(rename = "P@CG")]
    pub p_cg: u64,
    #[serde(rename = "P@99")]
    pub p_99: Attainment,
    #[serde(rename = "P@98")]
    pub p_98: Attainment,
}

impl RunOutput {
    pub fn summary(&self) -> Result<RunSummary> {
        let best = self
            .runlog
            .best()
            .ok_or_else(|| Error::Empty(format!("no evaluation happened in {} rounds", self.rounds_run)))?;
        let absolute = |fraction: f64| {
            self.runlog
                .first_reaching(fraction * best.test_mrr)
                .map_or(Attainment::NotAttained, |r| Attainment::Value(r.cumulative_params as f64))
        };
        Ok(RunSummary {
            strategy: self.config.strategy.to_string(),
            seed: self.config.seed,
            config: self.config.entries().into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            dataset_fingerprint: self.fingerprint.clone(),
            kge_method: self.config.kge_method,
            dim: self.config.dim,
            trained_dim: self.trained_dim,
            rounds_run: self.rounds_run,
            mrr_cg: best.test_mrr,
            hits10_cg: best.test_hits10,
            r_cg: best.round,
            total_params_up: self.ledger.total_in(Direction::Up),
            total_params_down: self.ledger.total_in(Direction::Down),
            p_cg: best.cumulative_params,
            p_99: absolute(0.99),
            p_98: absolute(0.98),
        })
    }
}

fn write_tables(path: &Path, tables: &[EmbeddingTable]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for table in tables {
        let m = &table.entities;
        let mut buf = Vec::with_capacity(8 + 4 * m.as_slice().len());
        buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `best_embeddings.bin` back as one `(rows, cols, values)` per client.
pub fn read_tables(path: impl AsRef<Path>) -> Result<Vec<(usize, usize, Vec<f32>)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut at = 0;
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| Error::Shape(format!("{} truncated at byte {at}", path.display())))
    };
    while at < bytes.len() {
        let (rows, cols) = (word(at)? as usize, word(at + 4)? as usize);
        at += 8;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            values.push(f32::from_bits(word(at)?));
            at += 4;
        }
        out.push((rows, cols, values));
    }
    Ok(out)
}

/// Writes `config.cfg`, `runlog.csv`, `ledger.csv`, `summary.json` and
/// `best_embeddings.bin` under `dir`.
pub fn write_run_dir(dir: impl AsRef<Path>, output: &RunOutput) -> Result<RunSummary> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = output.summary()?;
    let cfg_path = dir.join("config.cfg");
    // An absolute dataset path keeps the saved config runnable from anywhere.
    let mut config = output.config.clone();
    if let Ok(abs) = fs::canonicalize(&config.dataset) {
        config.dataset = abs;
    }
    fs::write(&cfg_path, config.to_cfg()).map_err(|e| Error::io(&cfg_path, e))?;
    output.runlog.write_csv(dir.join("runlog.csv"))?;
    output.ledger.write_csv(dir.join("ledger.csv"))?;
    let json_path = dir.join("summary.json");
    fs::write(&json_path, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| Error::io(&json_path, e))?;
    write_tables(&dir.join("best_embeddings.bin"), &output.best_tables)?;
    Ok(summary)
}

/// A finished run as read back from disk.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub runlog: RunLog,
}

impl RunRecord {
    /// Accepts a run directory or the path of its `summary.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let dir: PathBuf = if path.is_dir() {
            path.to_path_buf()
        } else {
            path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf()
        };
        let summary_path = if path.is_dir() { dir.join("summary.json") } else { path.to_path_buf() };
        let text = fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
        Ok(Self {
            summary: serde_json::from_str(&text)?,
            runlog: RunLog::read_csv(dir.join("runlog.csv"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub run: String,
    pub baseline: String,
    pub metrics: DerivedMetrics,
    pub baseline_metrics: DerivedMetrics,
}

fn fmt_ratio(a: Attainment) -> String {
    match a {
        Attainment::Value(v) => format!("{v:.2}x"),
        Attainment::NotAttained => "not attained".into(),
    }
}

impl Comparison {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Plain-text table: one row per metric, run and baseline side by side.
    pub fn render(&self) -> String {
        let (r, b) = (&self.metrics, &self.baseline_metrics);
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>14} {:>14}", "metric", self.run, self.baseline);
        let _ = writeln!(out, "{:<12} {:>14.4} {:>14.4}", "MRR@CG", r.mrr_cg, b.mrr_cg);
        let _ = writeln!(out, "{:<12} {:>14.4} {:>14.4}", "Hits@10@CG", r.hits10_cg, b.hits10_cg);
        let _ = writeln!(out, "{:<12} {:>14} {:>14}", "R@CG", r.r_cg, b.r_cg);
        let _ = writeln!(out, "{:<12} {:>14} {:>14}", "P@CG", format!("{:.2}x", r.p_cg), "1.00x");
        let _ = writeln!(out, "{:<12} {:>14} {:>14}", "P@99", fmt_ratio(r.p_99), fmt_ratio(b.p_99));
        let _ = writeln!(out, "{:<12} {:>14} {:>14}", "P@98", fmt_ratio(r.p_98), fmt_ratio(b.p_98));
        out
    }
}

/// Metrics of `run` relative to `baseline`. Both must come from the same
/// dataset, KGE method and configured dimension.
pub fn compare_runs(run: &RunRecord, baseline: &RunRecord) -> Result<Comparison> {
    let (a, b) = (&run.summary, &baseline.summary);
    ensure!(
        a.dataset_fingerprint == b.dataset_fingerprint,
        InvalidArgument,
        "runs used different datasets ({} vs {})",
        a.dataset_fingerprint,
        b.dataset_fingerprint
    );
    ensure!(a.kge_method == b.kge_method, InvalidArgument, "runs used different methods ({} vs {})", a.kge_method, b.kge_method);
    ensure!(a.dim == b.dim, InvalidArgument, "runs used different dimensions ({} vs {})", a.dim, b.dim);
    Ok(Comparison {
        run: a.strategy.clone(),
        baseline: b.strategy.clone(),
        metrics: derive_metrics(&run.runlog, &baseline.runlog)?,
        baseline_metrics: derive_metrics(&baseline.runlog, &baseline.runlog)?,
    })
}
