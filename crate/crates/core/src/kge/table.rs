use std::f64::consts::PI;

use rand::Rng;

use super::{Hyperparams, KgeMethod};
use crate::error::{ensure, Result};
use crate::kg::ClientShard;
use crate::matrix::Matrix;
use crate::seed::{self, tags};

/// One client's embeddings plus the history copy `E^h` of its shared
/// entities as last sent upstream.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub method: KgeMethod,
    pub dim: usize,
    pub entities: Matrix,
    pub relations: Matrix,
    /// Row `i` tracks local entity `shared[i]`.
    pub history: Matrix,
    pub shared: Vec<usize>,
}

impl EmbeddingTable {
    pub fn entity_width(&self) -> usize {
        self.entities.cols()
    }

    pub fn num_shared(&self) -> usize {
        self.shared.len()
    }

    /// Current embeddings of the shared entities, in shared order (`E^t`).
    pub fn shared_rows(&self) -> Matrix {
        let mut out = Matrix::zeros(self.shared.len(), self.entity_width());
        for (i, &local) in self.shared.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.entities.row(local));
        }
        out
    }

    pub fn set_history_row(&mut self, shared_index: usize, value: &[f64]) {
        self.history.row_mut(shared_index).copy_from_slice(value);
    }

    pub fn is_finite(&self) -> bool {
        self.entities.is_finite() && self.relations.is_finite() && self.history.is_finite()
    }
}

/// Initializes a client table. Each entity and relation row is drawn from a
/// stream keyed by its *global* id, so every owner of a shared entity starts
/// from the same vector. Entries are uniform in `±(γ+ε)/D`; RotatE phases
/// are uniform in `[-π, π]`.
pub fn init_embeddings(
    shard: &ClientShard,
    hp: &Hyperparams,
    method: KgeMethod,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    ensure!(dim > 0, InvalidArgument, "embedding dimension must be positive");
    let bound = hp.init_bound(dim);
    let ew = method.entity_width(dim);
    let rw = method.relation_width(dim);

    let mut entities = Matrix::zeros(shard.num_entities(), ew);
    for (local, &global) in shard.local_to_global.iter().enumerate() {
        let mut rng = seed::rng(seed, tags::ENTITY_INIT, global as u64);
        for v in entities.row_mut(local) {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    let mut relations = Matrix::zeros(shard.num_relations(), rw);
    for (local, &global) in shard.relation_to_global.iter().enumerate() {
        let mut rng = seed::rng(seed, tags::RELATION_INIT, global as u64);
        for v in relations.row_mut(local) {
            *v = match method {
                KgeMethod::RotatE => rng.gen_range(-PI..=PI),
                KgeMethod::TransE | KgeMethod::ComplEx => rng.gen_range(-bound..=bound),
            };
        }
    }

    let mut table = EmbeddingTable {
        method,
        dim,
        entities,
        relations,
        history: Matrix::zeros(0, 0),
        shared: shard.shared_entities.clone(),
    };
    table.history = table.shared_rows();
    Ok(table)
}
