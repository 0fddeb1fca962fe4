//! Triple ingestion, relation-partitioned federations, splits and
//! shared-entity bookkeeping.

mod federation;
mod persist;
pub mod synthetic;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use federation::{
    compute_shared_entities, partition_by_relation, split_shard, ClientShard, FederationSpec,
    SplitRatios,
};
pub use persist::{load_federation, write_federation, write_triples};

/// A triple of dense indices. Inside a [`TripleStore`] the indices are
/// global; inside a [`ClientShard`] they are local to the shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Name ↔ dense index bijection, indices assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleStore {
    pub triples: Vec<Triple>,
    pub entities: Vocab,
    pub relations: Vocab,
}

impl TripleStore {
    pub fn push(&mut self, head: &str, relation: &str, tail: &str) {
        let h = self.entities.intern(head);
        let r = self.relations.intern(relation);
        let t = self.entities.intern(tail);
        self.triples.push(Triple::new(h, r, t));
    }

    /// Parses tab-separated `head relation tail` lines. Blank lines are
    /// skipped; duplicates are kept.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut store = TripleStore::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            store.push(fields[0], fields[1], fields[2]);
        }
        if store.triples.is_empty() {
            return Err(Error::Empty(format!("{} contains no triples", origin.display())));
        }
        Ok(store)
    }

    /// SHA-256 over the triple list in name form; identifies a dataset across runs.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for t in &self.triples {
            hasher.update(self.entities.name(t.head).as_bytes());
            hasher.update(b"\t");
            hasher.update(self.relations.name(t.relation).as_bytes());
            hasher.update(b"\t");
            hasher.update(self.entities.name(t.tail).as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<TripleStore> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TripleStore::parse(&text, path)
}

/// `floor(n * ratio)` tolerant of products like `0.1 * 30 = 2.9999…`.
pub fn floor_fraction(n: usize, ratio: f64) -> usize {
    (n as f64 * ratio + 1e-9).floor() as usize
}
