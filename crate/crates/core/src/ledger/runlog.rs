use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// One evaluation point. `mrr`/`hits10` are weighted validation metrics;
/// the test metrics are measured at the same round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLogRow {
    pub round: usize,
    pub mrr: f64,
    pub hits10: f64,
    pub test_mrr: f64,
    pub test_hits10: f64,
    pub cumulative_params: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<RunLogRow>,
}

impl RunLog {
    pub fn push(&mut self, row: RunLogRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            ensure!(row.round > last.round, InvalidArgument, "round {} after round {}", row.round, last.round);
        }
        self.rows.push(row);
        Ok(())
    }

    /// Row with the highest validation MRR, earliest on ties.
    pub fn best(&self) -> Option<&RunLogRow> {
        self.rows
            .iter()
            .fold(None, |best: Option<&RunLogRow>, row| match best {
                Some(b) if b.mrr >= row.mrr => Some(b),
                _ => Some(row),
            })
    }

    /// First row whose test MRR reaches `threshold`.
    pub fn first_reaching(&self, threshold: f64) -> Option<&RunLogRow> {
        self.rows.iter().find(|r| r.test_mrr >= threshold)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut log = RunLog::default();
        for row in r.deserialize() {
            let row: RunLogRow = row.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            log.push(row)?;
        }
        Ok(log)
    }
}
