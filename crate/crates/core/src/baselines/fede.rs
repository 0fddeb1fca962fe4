use crate::error::{ensure, Result};
use crate::kg::FederationSpec;
use crate::kge::EmbeddingTable;
use crate::ledger::theoretical_ratio;
use crate::protocol::{apply_sync, full_sync_exchange, DownloadMessage, Exchange, UploadMessage};

/// Every shared row of every client, as full-exchange uploads.
pub fn full_uploads(tables: &[EmbeddingTable], round: usize) -> Vec<UploadMessage> {
    tables
        .iter()
        .enumerate()
        .map(|(client_id, table)| UploadMessage {
            client_id,
            round,
            exchange: Exchange::Sync,
            sign: vec![true; table.num_shared()],
            payload: table.shared_rows(),
        })
        .collect()
}

/// One FedE exchange: every owner of a shared entity ends up holding the
/// owner mean. Returns the messages for accounting.
pub fn fede_round(
    tables: &mut [EmbeddingTable],
    spec: &FederationSpec,
    round: usize,
) -> Result<(Vec<UploadMessage>, Vec<DownloadMessage>)> {
    let uploads = full_uploads(tables, round);
    let downloads = full_sync_exchange(&uploads, spec)?;
    for (table, message) in tables.iter_mut().zip(&downloads) {
        apply_sync(table, message)?;
    }
    Ok((uploads, downloads))
}

/// Embedding dimension at which full exchange costs as much per cycle as the
/// sparsified protocol: `ceil(D · R(p, s, D))`.
pub fn fedepl_dimension(p: f64, s: usize, dim: usize) -> Result<usize> {
    ensure!(p > 0.0 && p < 1.0, InvalidArgument, "FedEPL needs 0 < p < 1, got {p}");
    ensure!(s >= 1 && dim >= 2, InvalidArgument, "FedEPL needs s >= 1 and D >= 2");
    let exact = dim as f64 * theoretical_ratio(p, s, dim);
    Ok((exact - 1e-9).ceil() as usize)
}
