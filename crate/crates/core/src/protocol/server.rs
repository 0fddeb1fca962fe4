use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;

use super::{check_ratio, topk_count, DownloadMessage, Exchange, UploadMessage};
use crate::error::{ensure, Error, Result};
use crate::kg::{ClientShard, FederationSpec};
use crate::kge::EmbeddingTable;
use crate::matrix::Matrix;

/// Sum of the embeddings other clients uploaded for one entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub sum: Vec<f64>,
    pub count: u32,
}

/// Keyed by global entity id.
pub type Aggregates = BTreeMap<usize, Aggregate>;

/// Uploads sorted by client id, rejecting duplicates and unknown clients.
fn ordered<'a>(uploads: &'a [UploadMessage], spec: &FederationSpec) -> Result<Vec<&'a UploadMessage>> {
    let mut sorted: Vec<&UploadMessage> = uploads.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    for pair in sorted.windows(2) {
        ensure!(pair[0].client_id != pair[1].client_id, Protocol, "client {} uploaded twice", pair[0].client_id);
    }
    for u in &sorted {
        let shard = spec
            .clients
            .get(u.client_id)
            .ok_or_else(|| Error::Protocol(format!("upload from unknown client {}", u.client_id)))?;
        ensure!(
            u.num_shared() == shard.num_shared(),
            Protocol,
            "client {} sign vector has {} entries, expected {}",
            u.client_id,
            u.num_shared(),
            shard.num_shared()
        );
        u.validate()?;
    }
    Ok(sorted)
}

/// Sums, for every entity `target` owns, the rows other clients uploaded.
/// `target`'s own upload never contributes; entities nobody else sent are
/// absent. Summation runs in ascending client id.
pub fn server_aggregate_personalized(
    uploads: &[UploadMessage],
    target: usize,
    spec: &FederationSpec,
) -> Result<Aggregates> {
    let sorted = ordered(uploads, spec)?;
    let target_shard = spec
        .clients
        .get(target)
        .ok_or_else(|| Error::Protocol(format!("unknown target client {target}")))?;
    let mut out = Aggregates::new();
    for upload in sorted.into_iter().filter(|u| u.client_id != target) {
        let sender = &spec.clients[upload.client_id];
        for (row, shared_index) in upload.flagged().enumerate() {
            let global = sender.shared_global(shared_index);
            if target_shard.shared_index_of_global(global).is_none() {
                continue;
            }
            let value = upload.payload.row(row);
            let agg = out.entry(global).or_insert_with(|| Aggregate {
                sum: vec![0.0; value.len()],
                count: 0,
            });
            for (s, v) in agg.sum.iter_mut().zip(value) {
                *s += v;
            }
            agg.count += 1;
        }
    }
    Ok(out)
}

/// Picks up to `K` aggregates by descending contributor count. Entities tied
/// at the cut-off are drawn uniformly with `rng`; when fewer than `K` are
/// available all of them are sent.
pub fn server_select_topk_download(
    aggregates: &Aggregates,
    target: &ClientShard,
    p: f64,
    round: usize,
    rng: &mut impl Rng,
) -> Result<DownloadMessage> {
    check_ratio(p)?;
    let n = target.num_shared();
    let k = topk_count(n, p);
    let mut available: Vec<(usize, &Aggregate)> = Vec::with_capacity(aggregates.len());
    for (&global, agg) in aggregates {
        let idx = target
            .shared_index_of_global(global)
            .ok_or_else(|| Error::Protocol(format!("aggregate for entity {global} not shared by client {}", target.client_id)))?;
        available.push((idx, agg));
    }

    let chosen: Vec<(usize, &Aggregate)> = if available.len() <= k {
        available
    } else {
        let mut by_priority = available.clone();
        by_priority.sort_by(|a, b| b.1.count.cmp(&a.1.count).then(a.0.cmp(&b.0)));
        let cutoff = by_priority[k - 1].1.count;
        let mut chosen: Vec<(usize, &Aggregate)> =
            by_priority.iter().copied().filter(|(_, a)| a.count > cutoff).collect();
        let tied: Vec<(usize, &Aggregate)> =
            by_priority.iter().copied().filter(|(_, a)| a.count == cutoff).collect();
        let need = k - chosen.len();
        chosen.extend(sample(rng, tied.len(), need).into_iter().map(|i| tied[i]));
        chosen.sort_by_key(|(idx, _)| *idx);
        chosen
    };

    let mut sign = vec![false; n];
    let mut priority = Vec::with_capacity(chosen.len());
    let mut payload = Matrix::zeros(0, 0);
    for (idx, agg) in chosen {
        sign[idx] = true;
        priority.push(agg.count);
        payload.push_row(&agg.sum)?;
    }
    Ok(DownloadMessage {
        client_id: target.client_id,
        round,
        exchange: Exchange::Sparse,
        sign,
        priority,
        payload,
    })
}

/// `E ← (A + E) / (1 + P)` for every flagged entity. `E^h` is untouched.
pub fn client_merge(table: &mut EmbeddingTable, message: &DownloadMessage, round: usize) -> Result<()> {
    ensure!(message.round == round, Protocol, "message for round {} applied at round {round}", message.round);
    ensure!(
        message.num_shared() == table.num_shared(),
        Protocol,
        "sign vector of {} entries for {} shared entities",
        message.num_shared(),
        table.num_shared()
    );
    message.validate()?;
    if message.payload.rows() > 0 {
        ensure!(message.payload.cols() == table.entity_width(), Shape, "payload width {}", message.payload.cols());
    }
    for (row, shared_index) in message.flagged().enumerate() {
        let local = table.shared[shared_index];
        let denom = 1.0 + message.priority[row] as f64;
        let agg = message.payload.row(row);
        for (e, a) in table.entities.row_mut(local).iter_mut().zip(agg) {
            *e = (a + *e) / denom;
        }
    }
    Ok(())
}

/// Owner mean of every shared entity, sent in full to each owner. Every
/// upload must be complete.
pub fn full_sync_exchange(uploads: &[UploadMessage], spec: &FederationSpec) -> Result<Vec<DownloadMessage>> {
    let sorted = ordered(uploads, spec)?;
    ensure!(
        sorted.len() == spec.clients.len(),
        Protocol,
        "{} uploads for {} clients",
        sorted.len(),
        spec.clients.len()
    );
    let mut sums: BTreeMap<usize, (Vec<f64>, u32)> = BTreeMap::new();
    for upload in &sorted {
        ensure!(
            upload.selected() == upload.num_shared(),
            Protocol,
            "client {} sent {} of {} embeddings in a full exchange",
            upload.client_id,
            upload.selected(),
            upload.num_shared()
        );
        let sender = &spec.clients[upload.client_id];
        for i in 0..upload.num_shared() {
            let value = upload.payload.row(i);
            let entry = sums
                .entry(sender.shared_global(i))
                .or_insert_with(|| (vec![0.0; value.len()], 0));
            for (s, v) in entry.0.iter_mut().zip(value) {
                *s += v;
            }
            entry.1 += 1;
        }
    }
    let means: BTreeMap<usize, (Vec<f64>, u32)> = sums
        .into_iter()
        .map(|(g, (sum, count))| (g, (sum.into_iter().map(|v| v / count as f64).collect(), count)))
        .collect();

    let round = sorted.first().map_or(0, |u| u.round);
    spec.clients
        .iter()
        .map(|shard| {
            let n = shard.num_shared();
            let mut payload = Matrix::zeros(0, 0);
            let mut priority = Vec::with_capacity(n);
            for i in 0..n {
                let (mean, count) = &means[&shard.shared_global(i)];
                payload.push_row(mean)?;
                priority.push(count - 1);
            }
            Ok(DownloadMessage {
                client_id: shard.client_id,
                round,
                exchange: Exchange::Sync,
                sign: vec![true; n],
                priority,
                payload,
            })
        })
        .collect()
}

/// Overwrites shared rows and `E^h` with the synchronized values.
pub fn apply_sync(table: &mut EmbeddingTable, message: &DownloadMessage) -> Result<()> {
    ensure!(
        message.selected() == table.num_shared() && message.num_shared() == table.num_shared(),
        Protocol,
        "sync message carries {} of {} shared entities",
        message.selected(),
        table.num_shared()
    );
    message.validate()?;
    for i in 0..table.num_shared() {
        let local = table.shared[i];
        let value = message.payload.row(i);
        table.entities.row_mut(local).copy_from_slice(value);
        table.set_history_row(i, value);
    }
    Ok(())
}
