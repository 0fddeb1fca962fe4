//! Entity-wise Top-K sparsified exchange between clients and the server.
//!
//! A round either synchronizes (every owner uploads and receives the full
//! owner mean of each shared entity) or is sparsified: each client uploads
//! the `K` shared embeddings that drifted most from what it last sent, and
//! the server returns to each client up to `K` aggregates of *other*
//! clients' uploads, ranked by how many clients contributed them.

mod message;
mod server;
mod upstream;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::kg::floor_fraction;

pub use message::{DownloadMessage, Exchange, UploadMessage};
pub use server::{
    apply_sync, client_merge, full_sync_exchange, server_aggregate_personalized,
    server_select_topk_download, Aggregate, Aggregates,
};
pub use upstream::{build_upload, compute_change_scores, select_topk_upload};

/// A full synchronization every `interval + 1` rounds, starting at round 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSchedule {
    pub interval: usize,
}

impl SyncSchedule {
    pub fn new(interval: usize) -> Result<Self> {
        ensure!(interval >= 1, InvalidArgument, "synchronization interval must be >= 1");
        Ok(Self { interval })
    }

    pub fn cycle_len(&self) -> usize {
        self.interval + 1
    }

    pub fn is_sync_round(&self, round: usize) -> bool {
        is_sync_round(round, *self)
    }
}

pub fn is_sync_round(round: usize, schedule: SyncSchedule) -> bool {
    round % schedule.cycle_len() == 0
}

/// `K = max(1, floor(N_c · p))`, or 0 when there is nothing to share.
pub fn topk_count(num_shared: usize, p: f64) -> usize {
    if num_shared == 0 {
        0
    } else {
        floor_fraction(num_shared, p).clamp(1, num_shared)
    }
}

pub(crate) fn check_ratio(p: f64) -> Result<()> {
    ensure!(p > 0.0 && p <= 1.0, InvalidArgument, "sparsity ratio must lie in (0, 1], got {p}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_every_five() {
        let s = SyncSchedule::new(4).unwrap();
        let syncs: Vec<usize> = (0..16).filter(|&t| s.is_sync_round(t)).collect();
        assert_eq!(syncs, vec![0, 5, 10, 15]);
        assert!(!s.is_sync_round(3));
    }

    #[test]
    fn schedule_alternates_at_one() {
        let s = SyncSchedule::new(1).unwrap();
        let pattern: Vec<bool> = (0..6).map(|t| s.is_sync_round(t)).collect();
        assert_eq!(pattern, vec![true, false, true, false, true, false]);
        assert!(SyncSchedule::new(0).is_err());
    }

    #[test]
    fn k_rule() {
        assert_eq!(topk_count(10, 0.4), 4);
        assert_eq!(topk_count(10, 1.0), 10);
        assert_eq!(topk_count(3, 0.1), 1);
        assert_eq!(topk_count(0, 0.5), 0);
        assert_eq!(topk_count(100, 0.7), 70);
    }
}
