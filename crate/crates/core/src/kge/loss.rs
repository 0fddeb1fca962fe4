use rand::Rng;

use super::score::{relation_param_grad, relation_repr, score_repr, score_repr_grad};
use super::{EmbeddingTable, Hyperparams};
use crate::error::{ensure, Error, Result};
use crate::kg::Triple;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    Head,
    Tail,
}

/// A positive triple and the entities substituted into it to form negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub positive: Triple,
    pub corruption: Corruption,
    pub negatives: Vec<usize>,
}

impl Sample {
    pub fn negative_triple(&self, i: usize) -> Triple {
        let mut t = self.positive;
        match self.corruption {
            Corruption::Head => t.head = self.negatives[i],
            Corruption::Tail => t.tail = self.negatives[i],
        }
        t
    }
}

/// Corrupts head or tail (fair coin per positive) with entities drawn
/// uniformly from `0..num_entities`.
pub fn sample_batch(
    positives: &[Triple],
    num_entities: usize,
    negatives: usize,
    rng: &mut impl Rng,
) -> Vec<Sample> {
    positives
        .iter()
        .map(|&positive| {
            let corruption = if rng.gen_bool(0.5) {
                Corruption::Head
            } else {
                Corruption::Tail
            };
            let negatives = (0..negatives).map(|_| rng.gen_range(0..num_entities)).collect();
            Sample {
                positive,
                corruption,
                negatives,
            }
        })
        .collect()
}

/// Sparse gradient accumulator shaped like an [`EmbeddingTable`]. Relation
/// gradients are collected in representation space and mapped onto the
/// stored parameters by [`Gradients::finalize`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub entities: Matrix,
    pub relations: Matrix,
    relation_repr: Matrix,
    entity_seen: Vec<bool>,
    relation_seen: Vec<bool>,
    entity_rows: Vec<usize>,
    relation_rows: Vec<usize>,
}

impl Gradients {
    pub fn for_table(table: &EmbeddingTable) -> Self {
        let repr_width = match table.method {
            super::KgeMethod::RotatE => 2 * table.relations.cols(),
            _ => table.relations.cols(),
        };
        Self {
            entities: Matrix::zeros(table.entities.rows(), table.entities.cols()),
            relations: Matrix::zeros(table.relations.rows(), table.relations.cols()),
            relation_repr: Matrix::zeros(table.relations.rows(), repr_width),
            entity_seen: vec![false; table.entities.rows()],
            relation_seen: vec![false; table.relations.rows()],
            entity_rows: Vec::new(),
            relation_rows: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        for &i in &self.entity_rows {
            self.entities.row_mut(i).fill(0.0);
            self.entity_seen[i] = false;
        }
        for &i in &self.relation_rows {
            self.relations.row_mut(i).fill(0.0);
            self.relation_repr.row_mut(i).fill(0.0);
            self.relation_seen[i] = false;
        }
        self.entity_rows.clear();
        self.relation_rows.clear();
    }

    pub fn entity_mut(&mut self, i: usize) -> &mut [f64] {
        if !self.entity_seen[i] {
            self.entity_seen[i] = true;
            self.entity_rows.push(i);
        }
        self.entities.row_mut(i)
    }

    fn relation_repr_mut(&mut self, i: usize) -> &mut [f64] {
        if !self.relation_seen[i] {
            self.relation_seen[i] = true;
            self.relation_rows.push(i);
        }
        self.relation_repr.row_mut(i)
    }

    /// Entity rows that received a gradient, in first-touch order.
    pub fn touched_entities(&self) -> &[usize] {
        &self.entity_rows
    }

    pub fn touched_relations(&self) -> &[usize] {
        &self.relation_rows
    }

    pub fn scale(&mut self, factor: f64) {
        for &i in &self.entity_rows {
            self.entities.row_mut(i).iter_mut().for_each(|g| *g *= factor);
        }
        for &i in &self.relation_rows {
            self.relation_repr.row_mut(i).iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn finalize(&mut self, table: &EmbeddingTable) {
        for &i in &self.relation_rows {
            let out = self.relations.row_mut(i);
            out.fill(0.0);
            relation_param_grad(table.method, table.relations.row(i), self.relation_repr.row(i), out);
        }
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone)]
pub struct SampleScores {
    pub positive: f64,
    pub negatives: Vec<f64>,
}

impl SampleScores {
    /// `[positive, negatives...]`.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.negatives.len());
        v.push(self.positive);
        v.extend_from_slice(&self.negatives);
        v
    }
}

pub fn check_sample(table: &EmbeddingTable, sample: &Sample) -> Result<()> {
    ensure!(!sample.negatives.is_empty(), InvalidArgument, "positive {:?} has no negatives", sample.positive);
    let n = table.entities.rows();
    let p = sample.positive;
    if p.head >= n || p.tail >= n || p.relation >= table.relations.rows() || sample.negatives.iter().any(|&e| e >= n) {
        return Err(Error::Shape(format!("sample {p:?} outside table bounds")));
    }
    Ok(())
}

pub fn forward(table: &EmbeddingTable, sample: &Sample, rel: &[f64]) -> SampleScores {
    let m = table.method;
    let e = |i: usize| table.entities.row(i);
    let p = sample.positive;
    let positive = score_repr(m, e(p.head), rel, e(p.tail));
    let negatives = (0..sample.negatives.len())
        .map(|i| {
            let t = sample.negative_triple(i);
            score_repr(m, e(t.head), rel, e(t.tail))
        })
        .collect();
    SampleScores { positive, negatives }
}

/// Pushes `d_positive` and `d_negatives` (∂loss/∂score) down to embeddings.
pub fn backward(
    table: &EmbeddingTable,
    sample: &Sample,
    rel: &[f64],
    d_positive: f64,
    d_negatives: &[f64],
    grads: &mut Gradients,
) {
    let ew = table.entity_width();
    let mut gh = vec![0.0; ew];
    let mut gt = vec![0.0; ew];
    let mut gr = vec![0.0; rel.len()];
    let triples = std::iter::once((sample.positive, d_positive))
        .chain((0..sample.negatives.len()).map(|i| (sample.negative_triple(i), d_negatives[i])));
    for (t, upstream) in triples {
        if upstream == 0.0 {
            continue;
        }
        gh.fill(0.0);
        gt.fill(0.0);
        score_repr_grad(
            table.method,
            table.entities.row(t.head),
            rel,
            table.entities.row(t.tail),
            upstream,
            &mut gh,
            &mut gr,
            &mut gt,
        );
        add(grads.entity_mut(t.head), &gh);
        add(grads.entity_mut(t.tail), &gt);
    }
    add(grads.relation_repr_mut(sample.positive.relation), &gr);
}

fn add(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Per-sample self-adversarial loss and its derivatives with respect to the
/// scores. Negative weights are a softmax of `α·score` and are treated as
/// constants.
pub fn sample_loss(scores: &SampleScores, hp: &Hyperparams) -> (f64, f64, Vec<f64>) {
    let scaled: Vec<f64> = scores.negatives.iter().map(|s| hp.adv_temperature * s).collect();
    let weights = softmax(&scaled);
    let mut loss = -log_sigmoid(hp.gamma + scores.positive);
    let d_positive = -sigmoid(-(hp.gamma + scores.positive));
    let mut d_negatives = Vec::with_capacity(weights.len());
    for (w, s) in weights.iter().zip(&scores.negatives) {
        loss -= w * log_sigmoid(-s - hp.gamma);
        d_negatives.push(w * sigmoid(s + hp.gamma));
    }
    (loss, d_positive, d_negatives)
}

/// Mean self-adversarial loss over `samples`; gradients are written into
/// `grads` after clearing it.
pub fn self_adversarial_loss_into(
    table: &EmbeddingTable,
    samples: &[Sample],
    hp: &Hyperparams,
    grads: &mut Gradients,
) -> Result<f64> {
    ensure!(!samples.is_empty(), InvalidArgument, "empty batch");
    grads.clear();
    let inv = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    for sample in samples {
        check_sample(table, sample)?;
        let rel = relation_repr(table.method, table.relations.row(sample.positive.relation));
        let scores = forward(table, sample, &rel);
        let (loss, d_pos, mut d_negs) = sample_loss(&scores, hp);
        total += loss;
        d_negs.iter_mut().for_each(|d| *d *= inv);
        backward(table, sample, &rel, d_pos * inv, &d_negs, grads);
    }
    grads.finalize(table);
    let loss = total * inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss}")));
    }
    Ok(loss)
}

pub fn self_adversarial_loss(table: &EmbeddingTable, samples: &[Sample], hp: &Hyperparams) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::for_table(table);
    let loss = self_adversarial_loss_into(table, samples, hp, &mut grads)?;
    Ok((loss, grads))
}
