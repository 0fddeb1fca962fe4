use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use super::{relation_repr, score_repr, EmbeddingTable};
use crate::error::{ensure, Error, Result};
use crate::kg::Triple;

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub mrr: f64,
    pub hits_at_10: f64,
    /// Two ranks per query: tail prediction, then head prediction. Tied
    /// blocks share their mean rank, so half-integers occur.
    pub ranks: Vec<f64>,
}

impl RankingResult {
    pub fn from_ranks(ranks: Vec<f64>) -> Self {
        let n = ranks.len() as f64;
        let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n;
        let hits_at_10 = ranks.iter().filter(|&&r| r <= 10.0).count() as f64 / n;
        Self { mrr, hits_at_10, ranks }
    }
}

struct FilterIndex {
    tails: HashMap<(usize, usize), Vec<usize>>,
    heads: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    fn new(filter: &HashSet<Triple>) -> Self {
        let mut tails: HashMap<_, Vec<usize>> = HashMap::new();
        let mut heads: HashMap<_, Vec<usize>> = HashMap::new();
        for t in filter {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
            heads.entry((t.relation, t.tail)).or_default().push(t.head);
        }
        Self { tails, heads }
    }
}

/// Rank of `answer` among candidate scores, skipping filtered candidates.
/// Ties share the mean rank of their block.
fn filtered_rank(scores: &[f64], answer: usize, filtered: &[usize], mask: &mut [bool]) -> f64 {
    for &f in filtered {
        mask[f] = true;
    }
    let target = scores[answer];
    let mut greater = 0usize;
    let mut ties = 0usize;
    for (e, &s) in scores.iter().enumerate() {
        if e == answer || mask[e] {
            continue;
        }
        if s > target {
            greater += 1;
        } else if s == target {
            ties += 1;
        }
    }
    for &f in filtered {
        mask[f] = false;
    }
    1.0 + greater as f64 + ties as f64 / 2.0
}

/// Filtered link prediction over the table's local entities, in both
/// directions for every query.
pub fn evaluate_ranking(table: &EmbeddingTable, queries: &[Triple], filter: &HashSet<Triple>) -> Result<RankingResult> {
    ensure!(!queries.is_empty(), InvalidArgument, "no queries to rank");
    let n = table.entities.rows();
    for q in queries {
        if q.head >= n || q.tail >= n || q.relation >= table.relations.rows() {
            return Err(Error::Shape(format!("query {q:?} outside table bounds")));
        }
    }
    let index = FilterIndex::new(filter);
    let empty: Vec<usize> = Vec::new();
    let method = table.method;
    let ranks: Vec<Result<[f64; 2]>> = queries
        .par_iter()
        .map_init(
            || (vec![0.0; n], vec![false; n]),
            |(scores, mask), q| {
                let rel = relation_repr(method, table.relations.row(q.relation));

                let head = table.entities.row(q.head);
                for (e, s) in scores.iter_mut().enumerate() {
                    *s = score_repr(method, head, &rel, table.entities.row(e));
                }
                if scores.iter().any(|s| !s.is_finite()) {
                    return Err(Error::NonFinite("candidate score".into()));
                }
                let filtered = index.tails.get(&(q.head, q.relation)).unwrap_or(&empty);
                let tail_rank = filtered_rank(scores, q.tail, filtered, mask);

                let tail = table.entities.row(q.tail);
                for (e, s) in scores.iter_mut().enumerate() {
                    *s = score_repr(method, table.entities.row(e), &rel, tail);
                }
                if scores.iter().any(|s| !s.is_finite()) {
                    return Err(Error::NonFinite("candidate score".into()));
                }
                let filtered = index.heads.get(&(q.relation, q.tail)).unwrap_or(&empty);
                let head_rank = filtered_rank(scores, q.head, filtered, mask);
                Ok([tail_rank, head_rank])
            },
        )
        .collect();
    let mut flat = Vec::with_capacity(2 * queries.len());
    for r in ranks {
        flat.extend_from_slice(&r?);
    }
    Ok(RankingResult::from_ranks(flat))
}

/// Weighted mean of per-client MRR and Hits@10.
pub fn weighted_metrics(results: &[RankingResult], weights: &[usize]) -> Result<(f64, f64)> {
    ensure!(
        results.len() == weights.len() && !results.is_empty(),
        InvalidArgument,
        "{} results for {} weights",
        results.len(),
        weights.len()
    );
    let total: usize = weights.iter().sum();
    ensure!(total > 0, InvalidArgument, "weights sum to zero");
    let total = total as f64;
    let mut mrr = 0.0;
    let mut hits = 0.0;
    for (r, &w) in results.iter().zip(weights) {
        let w = w as f64 / total;
        mrr += w * r.mrr;
        hits += w * r.hits_at_10;
    }
    Ok((mrr, hits))
}
