//! Loading and saving alignment datasets in the DBP15K directory layout.
//!
//! A dataset directory holds:
//!   - `triples_1`, `triples_2`: tab-separated integer `head\trel\ttail`
//!   - `ent_ids_1`, `ent_ids_2`: `id\turi`
//!   - `ref_ent_ids`: `id1\tid2` reference alignment
//!   - `training_attrs_1`, `training_attrs_2` (optional): `entity_uri\tattr_uri\tvalue`
//!   - `ent_emb_1`, `ent_emb_2` (optional): first line `|E| d`, then one row
//!     of `d` whitespace-separated reals per entity in id order
//!
//! Ids are re-indexed densely per side (sorted by original id); original
//! ids and URIs stay available through the name tables.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{KnowledgeGraph, PairSet, SeedPairs};
use crate::error::{EchoError, Result};

fn read_to_string(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(EchoError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| EchoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> EchoError {
    EchoError::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// `id\turi` lines -> (sorted original ids, names in dense order, original id -> dense).
fn load_ent_ids(path: &Path) -> Result<(Vec<String>, HashMap<i64, usize>, HashMap<String, usize>)> {
    let text = read_to_string(path)?;
    let mut rows: Vec<(i64, String)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.splitn(2, '\t');
        let id_str = it.next().unwrap_or("");
        let id: i64 = id_str
            .trim()
            .parse()
            .map_err(|_| parse_err(path, ln + 1, format!("invalid entity id {id_str:?}")))?;
        let uri = it
            .next()
            .ok_or_else(|| parse_err(path, ln + 1, "expected `id\\turi`"))?
            .to_string();
        rows.push((id, uri));
    }
    rows.sort_by_key(|&(id, _)| id);
    let mut by_id = HashMap::new();
    let mut by_uri = HashMap::new();
    let mut names = Vec::with_capacity(rows.len());
    for (dense, (id, uri)) in rows.into_iter().enumerate() {
        if by_id.insert(id, dense).is_some() {
            return Err(EchoError::Integrity(format!(
                "duplicate entity id {id} in {}",
                path.display()
            )));
        }
        by_uri.insert(uri.clone(), dense);
        names.push(uri);
    }
    Ok((names, by_id, by_uri))
}

fn load_triples(
    path: &Path,
    ent_by_id: &HashMap<i64, usize>,
) -> Result<(Vec<(usize, i64, usize)>, Vec<i64>)> {
    let text = read_to_string(path)?;
    let mut raw = Vec::new();
    let mut rel_ids = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                ln + 1,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        let nums: Vec<i64> = fields
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<i64>()
                    .map_err(|_| parse_err(path, ln + 1, format!("invalid integer {f:?}")))
            })
            .collect::<Result<_>>()?;
        let (h, r, t) = (nums[0], nums[1], nums[2]);
        let hd = *ent_by_id.get(&h).ok_or_else(|| {
            EchoError::Integrity(format!("triple head {h} not in entity table ({})", path.display()))
        })?;
        let td = *ent_by_id.get(&t).ok_or_else(|| {
            EchoError::Integrity(format!("triple tail {t} not in entity table ({})", path.display()))
        })?;
        raw.push((hd, r, td));
        rel_ids.push(r);
    }
    rel_ids.sort_unstable();
    rel_ids.dedup();
    Ok((raw, rel_ids))
}

/// `entity_uri\tattr_uri\tvalue`; values may contain further tabs.
/// Lines whose entity URI is not in the entity table are skipped.
fn load_attrs(path: &Path, ent_by_uri: &HashMap<String, usize>) -> Result<Vec<(usize, String, String)>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                ln + 1,
                format!("expected `entity\\tattr\\tvalue`, got {} fields", fields.len()),
            ));
        }
        if let Some(&e) = ent_by_uri.get(fields[0]) {
            out.push((e, fields[1].to_string(), fields[2].to_string()));
        }
    }
    Ok(out)
}

fn build_side(
    dir: &Path,
    ent_file: &str,
    triple_file: &str,
    attr_file: &str,
) -> Result<(KnowledgeGraph, HashMap<i64, usize>)> {
    let (entity_names, by_id, by_uri) = load_ent_ids(&dir.join(ent_file))?;
    let (raw_triples, rel_ids) = load_triples(&dir.join(triple_file), &by_id)?;
    let rel_index: HashMap<i64, usize> = rel_ids.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let rel_triples: Vec<(usize, usize, usize)> = raw_triples
        .into_iter()
        .map(|(h, r, t)| (h, rel_index[&r], t))
        .collect();

    let attr_path = dir.join(attr_file);
    let raw_attrs = if attr_path.is_file() {
        load_attrs(&attr_path, &by_uri)?
    } else {
        Vec::new()
    };
    let mut attr_names: Vec<String> = raw_attrs.iter().map(|(_, a, _)| a.clone()).collect();
    attr_names.sort_unstable();
    attr_names.dedup();
    let mut values: Vec<String> = raw_attrs.iter().map(|(_, _, v)| v.clone()).collect();
    values.sort_unstable();
    values.dedup();
    let attr_index: HashMap<&str, usize> =
        attr_names.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let value_index: HashMap<&str, usize> =
        values.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let attr_triples = raw_attrs
        .iter()
        .map(|(e, a, v)| (*e, attr_index[a.as_str()], value_index[v.as_str()]))
        .collect();

    let mut kg = KnowledgeGraph {
        entity_names,
        relation_names: rel_ids.iter().map(|r| r.to_string()).collect(),
        attribute_names: attr_names,
        values,
        rel_triples,
        attr_triples,
    };
    kg.normalize_triples();
    kg.validate()?;
    Ok((kg, by_id))
}

/// Loads both KG sides and the reference alignment from `dir`.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(KnowledgeGraph, KnowledgeGraph, SeedPairs)> {
    let dir = dir.as_ref();
    let (kg1, ids1) = build_side(dir, "ent_ids_1", "triples_1", "training_attrs_1")?;
    let (kg2, ids2) = build_side(dir, "ent_ids_2", "triples_2", "training_attrs_2")?;

    let ref_path = dir.join("ref_ent_ids");
    let text = read_to_string(&ref_path)?;
    let mut pairs = PairSet::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(&ref_path, ln + 1, "expected `id1\\tid2`"));
        }
        let a: i64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(&ref_path, ln + 1, format!("invalid id {:?}", fields[0])))?;
        let b: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(&ref_path, ln + 1, format!("invalid id {:?}", fields[1])))?;
        let da = *ids1
            .get(&a)
            .ok_or_else(|| EchoError::Integrity(format!("reference pair left id {a} unknown")))?;
        let db = *ids2
            .get(&b)
            .ok_or_else(|| EchoError::Integrity(format!("reference pair right id {b} unknown")))?;
        pairs.insert((da, db));
    }
    let seeds = SeedPairs::new(pairs)?;
    Ok((kg1, kg2, seeds))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|source| EchoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    f.write_all(content.as_bytes()).map_err(|source| EchoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn side_files(kg: &KnowledgeGraph, idx: usize, dir: &Path) -> Result<()> {
    let mut ents = String::new();
    for (i, name) in kg.entity_names.iter().enumerate() {
        ents.push_str(&format!("{i}\t{name}\n"));
    }
    write_file(&dir.join(format!("ent_ids_{idx}")), &ents)?;

    // relation names carry the original integer ids so a reload re-derives
    // the same dense indexing
    let mut triples = String::new();
    for &(h, r, t) in &kg.rel_triples {
        triples.push_str(&format!("{h}\t{}\t{t}\n", kg.relation_names[r]));
    }
    write_file(&dir.join(format!("triples_{idx}")), &triples)?;

    if !kg.attr_triples.is_empty() {
        let mut attrs = String::new();
        for &(e, a, v) in &kg.attr_triples {
            attrs.push_str(&format!(
                "{}\t{}\t{}\n",
                kg.entity_names[e], kg.attribute_names[a], kg.values[v]
            ));
        }
        write_file(&dir.join(format!("training_attrs_{idx}")), &attrs)?;
    }
    Ok(())
}

/// Writes `kg1`, `kg2` and `seeds` back out in the directory layout that
/// [`load_dataset`] reads. Dense ids are used as the on-disk ids, so a
/// load/save/load cycle is the identity.
pub fn save_dataset(
    dir: impl AsRef<Path>,
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    seeds: &SeedPairs,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| EchoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    side_files(kg1, 1, dir)?;
    side_files(kg2, 2, dir)?;
    let mut refs = String::new();
    for &(a, b) in &seeds.pairs {
        refs.push_str(&format!("{a}\t{b}\n"));
    }
    write_file(&dir.join("ref_ent_ids"), &refs)
}

/// Reads an embedding file: header `|E| d`, then one row per entity.
pub fn load_embeddings(path: impl AsRef<Path>, expected_rows: Option<usize>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty embedding file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|f| {
            f.parse::<usize>()
                .map_err(|_| parse_err(path, 1, format!("invalid header field {f:?}")))
        })
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(parse_err(path, 1, "header must be `|E| d`"));
    }
    let (n, d) = (dims[0], dims[1]);
    if let Some(exp) = expected_rows {
        if n != exp {
            return Err(EchoError::Integrity(format!(
                "embedding file {} declares {n} rows, dataset has {exp} entities",
                path.display()
            )));
        }
    }
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0usize;
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, ln + 1, format!("invalid real {f:?}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != d {
            return Err(parse_err(
                path,
                ln + 1,
                format!("expected {d} values, got {}", row.len()),
            ));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(EchoError::Integrity(format!(
            "embedding file {} declares {n} rows but contains {rows}",
            path.display()
        )));
    }
    Array2::from_shape_vec((n, d), data)
        .map_err(|e| EchoError::Numeric(format!("embedding shape: {e}")))
}

/// Writes an embedding matrix in the format [`load_embeddings`] reads.
pub fn save_embeddings(path: impl AsRef<Path>, emb: &Array2<f64>) -> Result<()> {
    let path: &Path = path.as_ref();
    let mut out = format!("{} {}\n", emb.nrows(), emb.ncols());
    for row in emb.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    write_file(path, &out)
}
