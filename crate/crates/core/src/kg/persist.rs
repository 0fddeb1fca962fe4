//! On-disk federation layout: `client_<c>/{train,valid,test}.tsv` holding
//! name triples, plus `entities.tsv` and `relations.tsv` mapping
//! `global_id<TAB>name` for the client's vocabulary.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{compute_shared_entities, ClientShard, FederationSpec, Triple, TripleStore};
use crate::error::{Error, Result};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_triples(path: impl AsRef<Path>, store: &TripleStore) -> Result<()> {
    let mut out = String::new();
    for t in &store.triples {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            store.entities.name(t.head),
            store.relations.name(t.relation),
            store.entities.name(t.tail)
        );
    }
    write_file(path.as_ref(), &out)
}

fn client_dir(root: &Path, client_id: usize) -> PathBuf {
    root.join(format!("client_{client_id}"))
}

pub fn write_federation(root: impl AsRef<Path>, store: &TripleStore, spec: &FederationSpec) -> Result<()> {
    let root = root.as_ref();
    for shard in &spec.clients {
        let dir = client_dir(root, shard.client_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let entity = |l: usize| store.entities.name(shard.local_to_global[l]);
        let relation = |l: usize| store.relations.name(shard.relation_to_global[l]);
        for (name, triples) in [("train", &shard.train), ("valid", &shard.valid), ("test", &shard.test)] {
            let mut out = String::new();
            for t in triples {
                let _ = writeln!(out, "{}\t{}\t{}", entity(t.head), relation(t.relation), entity(t.tail));
            }
            write_file(&dir.join(format!("{name}.tsv")), &out)?;
        }
        let mut out = String::new();
        for &g in &shard.local_to_global {
            let _ = writeln!(out, "{g}\t{}", store.entities.name(g));
        }
        write_file(&dir.join("entities.tsv"), &out)?;
        let mut out = String::new();
        for &g in &shard.relation_to_global {
            let _ = writeln!(out, "{g}\t{}", store.relations.name(g));
        }
        write_file(&dir.join("relations.tsv"), &out)?;
    }
    Ok(())
}

fn read_mapping(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = read_file(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (id, name) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected global_id<TAB>name".into()))?;
        let id = id
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad global id: {e}")))?;
        rows.push((id, name.to_owned()));
    }
    rows.sort_by_key(|(id, _)| *id);
    Ok(rows)
}

fn fill_names(slots: &mut Vec<Option<String>>, rows: &[(usize, String)], path: &Path) -> Result<()> {
    for (id, name) in rows {
        if slots.len() <= *id {
            slots.resize(id + 1, None);
        }
        match &slots[*id] {
            Some(existing) if existing != name => {
                return Err(Error::Config(format!(
                    "{}: global id {id} named both {existing:?} and {name:?}",
                    path.display()
                )))
            }
            _ => slots[*id] = Some(name.clone()),
        }
    }
    Ok(())
}

/// Reads a directory produced by [`write_federation`]. The returned store
/// lists every client's triples (train, valid, test) in client order.
pub fn load_federation(root: impl AsRef<Path>) -> Result<(TripleStore, FederationSpec)> {
    let root = root.as_ref();
    let mut entity_names: Vec<Option<String>> = Vec::new();
    let mut relation_names: Vec<Option<String>> = Vec::new();
    let mut raw = Vec::new();

    for client_id in 0.. {
        let dir = client_dir(root, client_id);
        if !dir.is_dir() {
            break;
        }
        let entities = read_mapping(&dir.join("entities.tsv"))?;
        let relations = read_mapping(&dir.join("relations.tsv"))?;
        fill_names(&mut entity_names, &entities, &dir)?;
        fill_names(&mut relation_names, &relations, &dir)?;
        let mut splits = Vec::new();
        for name in ["train", "valid", "test"] {
            let path = dir.join(format!("{name}.tsv"));
            let text = read_file(&path)?;
            let part = if text.trim().is_empty() {
                TripleStore::default()
            } else {
                TripleStore::parse(&text, &path)?
            };
            splits.push((path, part));
        }
        raw.push((client_id, entities, relations, splits));
    }
    if raw.is_empty() {
        return Err(Error::Empty(format!("no client_<c> directories under {}", root.display())));
    }

    let mut store = TripleStore::default();
    for (kind, slots) in [("entity", &entity_names), ("relation", &relation_names)] {
        for (id, slot) in slots.iter().enumerate() {
            let name = slot
                .as_deref()
                .ok_or_else(|| Error::Config(format!("{kind} global id {id} is unmapped")))?;
            let vocab = if kind == "entity" { &mut store.entities } else { &mut store.relations };
            vocab.intern(name);
        }
    }

    let mut clients = Vec::new();
    for (client_id, entities, relations, splits) in raw {
        let local_to_global: Vec<usize> = entities.iter().map(|(g, _)| *g).collect();
        let relation_to_global: Vec<usize> = relations.iter().map(|(g, _)| *g).collect();
        let entity_local: HashMap<&str, usize> =
            entities.iter().enumerate().map(|(l, (_, n))| (n.as_str(), l)).collect();
        let relation_local: HashMap<&str, usize> =
            relations.iter().enumerate().map(|(l, (_, n))| (n.as_str(), l)).collect();

        let mut parts = Vec::new();
        for (path, part) in &splits {
            let mut local = Vec::with_capacity(part.triples.len());
            for t in &part.triples {
                let lookup = |map: &HashMap<&str, usize>, name: &str| {
                    map.get(name).copied().ok_or_else(|| {
                        Error::Config(format!("{}: {name:?} missing from client mapping", path.display()))
                    })
                };
                let h = lookup(&entity_local, part.entities.name(t.head))?;
                let r = lookup(&relation_local, part.relations.name(t.relation))?;
                let tl = lookup(&entity_local, part.entities.name(t.tail))?;
                local.push(Triple::new(h, r, tl));
                store.triples.push(Triple::new(local_to_global[h], relation_to_global[r], local_to_global[tl]));
            }
            parts.push(local);
        }
        let test = parts.pop().unwrap_or_default();
        let valid = parts.pop().unwrap_or_default();
        let train = parts.pop().unwrap_or_default();
        clients.push(ClientShard {
            client_id,
            train,
            valid,
            test,
            local_to_global,
            relation_to_global,
            shared_entities: Vec::new(),
        });
    }

    let mut spec = FederationSpec {
        clients,
        existence: Vec::new(),
        num_relations: store.relations.len(),
    };
    spec.rebuild_existence(store.entities.len());
    Ok((store, compute_shared_entities(spec)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{partition_by_relation, split_shard, SplitRatios};

    #[test]
    fn federation_round_trip() {
        let mut store = TripleStore::default();
        for i in 0..60 {
            store.push(&format!("e{}", i % 13), &format!("r{}", i % 4), &format!("e{}", (i * 5 + 1) % 13));
        }
        let mut spec = partition_by_relation(&store, 2, 3).unwrap();
        for shard in &mut spec.clients {
            *shard = split_shard(shard, SplitRatios::default(), 3).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        write_federation(dir.path(), &store, &spec).unwrap();
        let (loaded_store, loaded) = load_federation(dir.path()).unwrap();
        assert_eq!(loaded, spec);
        assert_eq!(loaded_store.entities, store.entities);
        assert!(load_federation(dir.path().join("nope")).is_err());
    }
}
