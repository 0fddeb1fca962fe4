//! Small clustered knowledge graphs for desk-scale experiments.
//!
//! Entities get latent positions around cluster centers. Each relation maps
//! a source cluster onto a target cluster by a latent translation, and a
//! triple `(h, r, t)` picks `t` among the target-cluster entities closest to
//! `pos(h) + shift(r)`. Relations owned by different clients therefore
//! constrain the same entity geometry.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TripleStore;
use crate::error::{ensure, Result};
use crate::seed::{self, tags};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticKg {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub clusters: usize,
    pub latent_dim: usize,
    /// Spread of entities around their cluster center.
    pub spread: f64,
    /// Candidate tails are drawn from this many nearest target entities.
    pub tail_choices: usize,
    pub seed: u64,
}

impl Default for SyntheticKg {
    fn default() -> Self {
        Self {
            entities: 1500,
            relations: 30,
            triples: 8000,
            clusters: 12,
            latent_dim: 8,
            spread: 0.6,
            tail_choices: 3,
            seed: 0,
        }
    }
}

fn normal_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

impl SyntheticKg {
    pub fn generate(&self) -> Result<TripleStore> {
        ensure!(self.clusters >= 1 && self.entities >= self.clusters, InvalidArgument, "need entities >= clusters >= 1");
        ensure!(self.relations >= 1 && self.latent_dim >= 1, InvalidArgument, "need relations and latent_dim >= 1");
        ensure!(self.tail_choices >= 1, InvalidArgument, "tail_choices must be >= 1");
        let mut rng = seed::rng(self.seed, tags::SYNTHETIC, 0);

        let centers: Vec<Vec<f64>> = (0..self.clusters)
            .map(|_| normal_vec(&mut rng, self.latent_dim, 3.0))
            .collect();
        let cluster_of = |e: usize| e % self.clusters;
        let positions: Vec<Vec<f64>> = (0..self.entities)
            .map(|e| {
                let noise = normal_vec(&mut rng, self.latent_dim, self.spread);
                centers[cluster_of(e)].iter().zip(noise).map(|(c, n)| c + n).collect()
            })
            .collect();
        let members: Vec<Vec<usize>> = (0..self.clusters)
            .map(|k| (0..self.entities).filter(|&e| cluster_of(e) == k).collect())
            .collect();

        struct Relation {
            source: usize,
            target: usize,
            shift: Vec<f64>,
        }
        let relations: Vec<Relation> = (0..self.relations)
            .map(|_| {
                let source = rng.gen_range(0..self.clusters);
                let target = rng.gen_range(0..self.clusters);
                let jitter = normal_vec(&mut rng, self.latent_dim, 0.3 * self.spread);
                let shift = centers[target]
                    .iter()
                    .zip(&centers[source])
                    .zip(jitter)
                    .map(|((t, s), j)| t - s + j)
                    .collect();
                Relation { source, target, shift }
            })
            .collect();

        let mut store = TripleStore::default();
        // Intern every entity and relation up front so ids follow e<i>/r<j>.
        for e in 0..self.entities {
            store.entities.intern(&format!("e{e}"));
        }
        for r in 0..self.relations {
            store.relations.intern(&format!("r{r}"));
        }

        let mut seen = HashSet::new();
        let max_attempts = self.triples * 50;
        let mut attempts = 0;
        let mut ranked: Vec<(f64, usize)> = Vec::new();
        while store.triples.len() < self.triples && attempts < max_attempts {
            attempts += 1;
            let r = store.triples.len() % self.relations;
            let rel = &relations[r];
            let heads = &members[rel.source];
            let h = heads[rng.gen_range(0..heads.len())];
            let target: Vec<f64> = positions[h].iter().zip(&rel.shift).map(|(p, s)| p + s).collect();
            ranked.clear();
            ranked.extend(members[rel.target].iter().filter(|&&t| t != h).map(|&t| {
                let d: f64 = positions[t].iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, t)
            }));
            if ranked.is_empty() {
                continue;
            }
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let pick = rng.gen_range(0..self.tail_choices.min(ranked.len()));
            let t = ranked[pick].1;
            if seen.insert((h, r, t)) {
                store.push(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"));
            }
        }
        ensure!(
            store.triples.len() == self.triples,
            InvalidArgument,
            "could only generate {} distinct triples out of {}",
            store.triples.len(),
            self.triples
        );
        // Drop entities that never appear so the vocabulary matches the triples.
        Ok(compact(store))
    }
}

fn compact(store: TripleStore) -> TripleStore {
    let mut out = TripleStore::default();
    for t in &store.triples {
        out.push(
            store.entities.name(t.head),
            store.relations.name(t.relation),
            store.entities.name(t.tail),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let cfg = SyntheticKg {
            entities: 200,
            relations: 9,
            triples: 600,
            clusters: 4,
            ..SyntheticKg::default()
        };
        let a = cfg.generate().unwrap();
        let b = cfg.generate().unwrap();
        let crowded = SyntheticKg { clusters: 12, ..cfg.clone() };
        assert!(crowded.generate().is_err());
        assert_eq!(a, b);
        assert_eq!(a.triples.len(), 600);
        assert_eq!(a.relations.len(), 9);
        let distinct: HashSet<_> = a.triples.iter().collect();
        assert_eq!(distinct.len(), 600);
    }
}
