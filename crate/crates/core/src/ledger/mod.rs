//! Communication accounting and the metrics derived from it.

mod metrics;
mod runlog;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{DownloadMessage, Exchange, SyncSchedule, UploadMessage};

pub use metrics::{derive_metrics, Attainment, DerivedMetrics};
pub use runlog::{RunLog, RunLogRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// How sign-vector entries are priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// One parameter per sign entry, the same data type as the embeddings.
    #[default]
    WorstCase,
    /// One bit per entry, 32 entries per parameter.
    Packed,
}

impl std::str::FromStr for CountingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "worst_case" | "worst-case" => Ok(CountingMode::WorstCase),
            "packed" => Ok(CountingMode::Packed),
            other => Err(Error::Config(format!("unknown counting_mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for CountingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CountingMode::WorstCase => "worst_case",
            CountingMode::Packed => "packed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub round: usize,
    pub client_id: usize,
    pub direction: Direction,
    pub embedding_params: u64,
    pub sign_bits: u64,
    pub priority_params: u64,
}

impl LedgerRecord {
    pub fn params(&self, mode: CountingMode) -> u64 {
        let sign = match mode {
            CountingMode::WorstCase => self.sign_bits,
            CountingMode::Packed => self.sign_bits.div_ceil(32),
        };
        self.embedding_params + sign + self.priority_params
    }
}

/// Append-only log of every transmission.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    pub mode: CountingMode,
    pub records: Vec<LedgerRecord>,
}

impl CommLedger {
    pub fn new(mode: CountingMode) -> Self {
        Self {
            mode,
            records: Vec::new(),
        }
    }

    pub fn record(&mut self, record: LedgerRecord) {
        self.records.push(record);
    }

    pub fn record_upload(&mut self, message: &UploadMessage) {
        let sparse = message.exchange == Exchange::Sparse;
        self.record(LedgerRecord {
            round: message.round,
            client_id: message.client_id,
            direction: Direction::Up,
            embedding_params: (message.payload.rows() * message.payload.cols()) as u64,
            sign_bits: if sparse { message.num_shared() as u64 } else { 0 },
            priority_params: 0,
        });
    }

    pub fn record_download(&mut self, message: &DownloadMessage) {
        let sparse = message.exchange == Exchange::Sparse;
        self.record(LedgerRecord {
            round: message.round,
            client_id: message.client_id,
            direction: Direction::Down,
            embedding_params: (message.payload.rows() * message.payload.cols()) as u64,
            sign_bits: if sparse { message.num_shared() as u64 } else { 0 },
            priority_params: if sparse { message.priority.len() as u64 } else { 0 },
        });
    }

    /// A dense transfer of `params` parameters (full-exchange baselines).
    pub fn record_dense(&mut self, round: usize, client_id: usize, direction: Direction, params: u64) {
        self.record(LedgerRecord {
            round,
            client_id,
            direction,
            embedding_params: params,
            sign_bits: 0,
            priority_params: 0,
        });
    }

    pub fn total(&self) -> u64 {
        self.records.iter().map(|r| r.params(self.mode)).sum()
    }

    pub fn total_in(&self, direction: Direction) -> u64 {
        self.records
            .iter()
            .filter(|r| r.direction == direction)
            .map(|r| r.params(self.mode))
            .sum()
    }

    /// Parameters sent in rounds `<= round`.
    pub fn total_through(&self, round: usize) -> u64 {
        self.records
            .iter()
            .filter(|r| r.round <= round)
            .map(|r| r.params(self.mode))
            .sum()
    }

    pub fn client_round(&self, client_id: usize, round: usize, direction: Direction) -> u64 {
        self.records
            .iter()
            .filter(|r| r.client_id == client_id && r.round == round && r.direction == direction)
            .map(|r| r.params(self.mode))
            .sum()
    }

    /// One past the last round with a record.
    pub fn rounds(&self) -> usize {
        self.records.iter().map(|r| r.round + 1).max().unwrap_or(0)
    }

    /// Per complete cycle, the client's traffic divided by what full exchange
    /// would cost over the same cycle, `2·N_c·D_e·(s+1)`.
    pub fn cycle_ratios(&self, client_id: usize, num_shared: usize, entity_width: usize, schedule: SyncSchedule) -> Vec<f64> {
        let len = schedule.cycle_len();
        let cycles = self.rounds() / len;
        let full = (2 * num_shared * entity_width * len) as f64;
        let mut sums = vec![0u64; cycles];
        for r in self.records.iter().filter(|r| r.client_id == client_id) {
            let cycle = r.round / len;
            if cycle < cycles {
                sums[cycle] += r.params(self.mode);
            }
        }
        sums.into_iter().map(|s| s as f64 / full).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Expected FedS traffic over one cycle relative to full exchange, assuming
/// every sparsified message carries exactly `N_c·p` embeddings and sign
/// entries cost one parameter each:
/// `(p·s + 1 + (2 + p)·s / (2D)) / (s + 1)`.
pub fn theoretical_ratio(p: f64, s: usize, dim: usize) -> f64 {
    // Same expression over the common denominator 2D(s+1); the integer
    // parts are exact, leaving one multiply-add and one division.
    let (s, d) = (s as f64, dim as f64);
    (p * (2.0 * d * s + s) + 2.0 * d + 2.0 * s) / (2.0 * d * (s + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn ratio_values() {
        assert!((theoretical_ratio(0.7, 4, 256) - 0.7642).abs() <= 5e-5);
        assert!((theoretical_ratio(0.4, 4, 256) - 0.52375).abs() < 1e-12);
        assert!((theoretical_ratio(1.0, 4, 256) - (1.0 + 12.0 / 2560.0)).abs() < 1e-12);
    }

    fn upload(n: usize, k: usize, width: usize, exchange: Exchange) -> UploadMessage {
        let mut sign = vec![false; n];
        sign[..k].fill(true);
        UploadMessage {
            client_id: 0,
            round: 1,
            exchange,
            sign,
            payload: Matrix::zeros(k, width),
        }
    }

    #[test]
    fn sparse_and_sync_uploads() {
        let mut ledger = CommLedger::new(CountingMode::WorstCase);
        ledger.record_upload(&upload(100, 40, 256, Exchange::Sparse));
        assert_eq!(ledger.records[0].embedding_params, 10240);
        assert_eq!(ledger.records[0].sign_bits, 100);
        ledger.record_upload(&upload(100, 100, 256, Exchange::Sync));
        assert_eq!(ledger.records[1].embedding_params, 25600);
        assert_eq!(ledger.records[1].sign_bits, 0);
        assert_eq!(ledger.total(), 10240 + 100 + 25600);
        ledger.mode = CountingMode::Packed;
        assert_eq!(ledger.total(), 10240 + 4 + 25600);
    }

    #[test]
    fn short_download() {
        let mut sign = vec![false; 100];
        sign[3] = true;
        sign[50] = true;
        let msg = DownloadMessage {
            client_id: 2,
            round: 3,
            exchange: Exchange::Sparse,
            sign,
            priority: vec![1, 2],
            payload: Matrix::zeros(2, 256),
        };
        let mut ledger = CommLedger::default();
        ledger.record_download(&msg);
        let r = ledger.records[0];
        assert_eq!((r.embedding_params, r.priority_params, r.sign_bits), (512, 2, 100));
    }
}
