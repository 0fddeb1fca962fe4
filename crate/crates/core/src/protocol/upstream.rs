use super::{check_ratio, topk_count, Exchange, SyncSchedule, UploadMessage};
use crate::error::{ensure, Result};
use crate::kge::EmbeddingTable;
use crate::matrix::Matrix;

/// `M_i = 1 − cos(E^t_i, E^h_i)` per row, clamped to `[0, 2]`. A zero-norm
/// row on either side scores 0.
pub fn compute_change_scores(current: &Matrix, history: &Matrix) -> Result<Vec<f64>> {
    ensure!(
        current.rows() == history.rows() && current.cols() == history.cols(),
        Shape,
        "current {}x{} vs history {}x{}",
        current.rows(),
        current.cols(),
        history.rows(),
        history.cols()
    );
    Ok((0..current.rows())
        .map(|i| {
            let (a, b) = (current.row(i), history.row(i));
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum();
            let nb: f64 = b.iter().map(|x| x * x).sum();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                (1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0)
            }
        })
        .collect())
}

/// Indices of the `K = max(1, ⌊N_c·p⌋)` largest change scores, ties going to
/// the smaller index. Returned ascending, together with `K`.
pub fn select_topk_upload(changes: &[f64], p: f64) -> Result<(Vec<usize>, usize)> {
    check_ratio(p)?;
    let k = topk_count(changes.len(), p);
    let mut order: Vec<usize> = (0..changes.len()).collect();
    order.sort_by(|&a, &b| changes[b].total_cmp(&changes[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok((order, k))
}

/// Builds the client's upload for `round` and refreshes `E^h` with every row
/// it sends.
pub fn build_upload(
    client_id: usize,
    table: &mut EmbeddingTable,
    round: usize,
    schedule: SyncSchedule,
    p: f64,
) -> Result<UploadMessage> {
    let n = table.num_shared();
    let current = table.shared_rows();
    let (exchange, selected) = if schedule.is_sync_round(round) {
        (Exchange::Sync, (0..n).collect::<Vec<_>>())
    } else {
        let changes = compute_change_scores(&current, &table.history)?;
        (Exchange::Sparse, select_topk_upload(&changes, p)?.0)
    };

    let mut sign = vec![false; n];
    let mut payload = Matrix::zeros(selected.len(), table.entity_width());
    for (row, &i) in selected.iter().enumerate() {
        sign[i] = true;
        payload.row_mut(row).copy_from_slice(current.row(i));
        table.set_history_row(i, current.row(i));
    }
    Ok(UploadMessage {
        client_id,
        round,
        exchange,
        sign,
        payload,
    })
}
