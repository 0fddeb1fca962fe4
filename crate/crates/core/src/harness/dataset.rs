use std::path::Path;

use sha2::{Digest, Sha256};

use super::ExperimentConfig;
use crate::error::Result;
use crate::kg::{load_federation, load_triples, partition_by_relation, split_shard, FederationSpec, SplitRatios, TripleStore};

/// A partitioned and split dataset plus a digest of its exact contents.
#[derive(Debug, Clone)]
pub struct Federation {
    pub store: TripleStore,
    pub spec: FederationSpec,
    pub fingerprint: String,
}

impl Federation {
    /// Relation-partitions `store` into `num_clients` shards and splits each.
    pub fn from_store(store: TripleStore, num_clients: usize, seed: u64) -> Result<Self> {
        let mut spec = partition_by_relation(&store, num_clients, seed)?;
        spec.clients = spec
            .clients
            .iter()
            .map(|shard| split_shard(shard, SplitRatios::default(), seed))
            .collect::<Result<_>>()?;
        Ok(Self::new(store, spec))
    }

    pub fn new(store: TripleStore, spec: FederationSpec) -> Self {
        let fingerprint = fingerprint(&store, &spec);
        Self {
            store,
            spec,
            fingerprint,
        }
    }

    /// A directory is read as a saved federation; anything else as a triple
    /// file to partition with the config's client count and partition seed.
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        Self::open(&config.dataset, config.num_clients, config.partition_seed)
    }

    pub fn open(path: &Path, num_clients: usize, seed: u64) -> Result<Self> {
        if path.is_dir() {
            let (store, spec) = load_federation(path)?;
            Ok(Self::new(store, spec))
        } else {
            Self::from_store(load_triples(path)?, num_clients, seed)
        }
    }
}

/// SHA-256 over every client's splits written with global names.
pub fn fingerprint(store: &TripleStore, spec: &FederationSpec) -> String {
    let mut hasher = Sha256::new();
    for shard in &spec.clients {
        for (name, split) in [("train", &shard.train), ("valid", &shard.valid), ("test", &shard.test)] {
            hasher.update(format!("client {} {name}\n", shard.client_id).as_bytes());
            for t in split {
                let h = store.entities.name(shard.local_to_global[t.head]);
                let r = store.relations.name(shard.relation_to_global[t.relation]);
                let tl = store.entities.name(shard.local_to_global[t.tail]);
                hasher.update(format!("{h}\t{r}\t{tl}\n").as_bytes());
            }
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
