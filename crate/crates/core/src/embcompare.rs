//! Comparison of independently trained regional word embeddings.
//!
//! Vectors from separate training runs live in unrelated coordinate systems,
//! so regions are compared through their neighborhoods instead: each region
//! gets a k-nearest-neighbor graph over a shared token set, the graph becomes
//! a sparse vector indexed by `(token, neighbor)` pairs, and those vectors are
//! compared by cosine distance.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{check_unique, AffinityMatrix, AffinityOutcome};
use crate::ingest::open_input;
use crate::{Error, RegionCode, Result};

pub const DEFAULT_K: usize = 33;
pub const DEFAULT_MIN_REGIONS: usize = 5;

/// Token vectors of one region, kept in lexicographic token order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    region: RegionCode,
    dim: usize,
    tokens: Vec<String>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    /// Rejects ragged rows, duplicates, non-finite values and zero vectors.
    pub fn from_rows(
        region: RegionCode,
        dim: usize,
        mut rows: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        rows.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Config(format!(
                "{region}: token {:?} appears twice",
                w[0].0
            )));
        }
        let mut tokens = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (token, vector) in rows {
            if vector.len() != dim {
                return Err(Error::Config(format!(
                    "{region}: {token:?} has {} values, expected {dim}",
                    vector.len()
                )));
            }
            let norm = squared_norm(&vector);
            if !norm.is_finite() {
                return Err(Error::Domain(format!(
                    "{region}: {token:?} has a non-finite norm"
                )));
            }
            if norm == 0.0 {
                return Err(Error::Domain(format!(
                    "{region}: {token:?} is a zero vector"
                )));
            }
            tokens.push(token);
            data.extend(vector);
        }
        Ok(EmbeddingTable {
            region,
            dim,
            tokens,
            data,
        })
    }

    pub fn region(&self) -> RegionCode {
        self.region
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.position(token).map(|i| self.vector(i))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.position(token).is_some()
    }

    fn position(&self, token: &str) -> Option<usize> {
        self.tokens.binary_search_by(|t| t.as_str().cmp(token)).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), self.vector(i)))
    }

    /// Text vector format; floats use the shortest representation that
    /// parses back to the same bits.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (token, vector) in self.iter() {
            write!(out, "{token}")?;
            for v in vector {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn parse_error(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    }
}

/// Reads a `count dim` header followed by `token v1 … v_dim` rows.
///
/// Zero vectors carry no direction and are skipped with a warning.
pub fn load_embeddings(path: impl AsRef<Path>, region: RegionCode) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let mut lines = BufReader::with_capacity(1 << 16, open_input(path)?).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_error(path, 1, "empty file".into())),
    };
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    let (count, dim) = match fields[..] {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(parse_error(path, 1, format!("bad header {header:?}"))),
        },
        _ => {
            return Err(parse_error(
                path,
                1,
                format!("expected \"count dim\", got {header:?}"),
            ))
        }
    };

    let mut rows = Vec::with_capacity(count.min(1 << 20));
    let mut seen = 0usize;
    let mut zero = 0usize;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_ascii_whitespace();
        let token = parts.next().unwrap_or_default().to_string();
        let vector = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_error(path, lineno, format!("{token:?}: {e}")))?;
        if vector.len() != dim {
            return Err(parse_error(
                path,
                lineno,
                format!("{token:?} has {} values, header says {dim}", vector.len()),
            ));
        }
        seen += 1;
        if squared_norm(&vector) == 0.0 {
            zero += 1;
            continue;
        }
        rows.push((token, vector));
    }
    if seen != count {
        return Err(parse_error(
            path,
            1,
            format!("header declares {count} rows, found {seen}"),
        ));
    }
    if zero > 0 {
        warn!("{}: skipped {zero} zero vectors", path.display());
    }
    EmbeddingTable::from_rows(region, dim, rows).map_err(|e| parse_error(path, 0, e.to_string()))
}

pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    table.write_text(&mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Tokens shared by enough regions; the position of a token here is its id
/// in every graph and signature built from this set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonTokenSet {
    pub tokens: Vec<String>,
    pub min_regions: usize,
}

impl CommonTokenSet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.tokens
            .binary_search_by(|t| t.as_str().cmp(token))
            .ok()
            .map(|i| i as u32)
    }
}

pub fn common_tokens(tables: &[EmbeddingTable], min_regions: usize) -> Result<CommonTokenSet> {
    if min_regions == 0 || min_regions > tables.len() {
        return Err(Error::Config(format!(
            "min_regions must be in 1..={}, got {min_regions}",
            tables.len()
        )));
    }
    let mut membership: BTreeMap<&str, usize> = BTreeMap::new();
    for table in tables {
        for token in table.tokens() {
            *membership.entry(token).or_insert(0) += 1;
        }
    }
    let tokens: Vec<String> = membership
        .into_iter()
        .filter(|&(_, n)| n >= min_regions)
        .map(|(t, _)| t.to_string())
        .collect();
    if tokens.is_empty() {
        return Err(Error::Degenerate(format!(
            "no token occurs in {min_regions} or more tables"
        )));
    }
    if u32::try_from(tokens.len()).is_err() {
        return Err(Error::Config("common token set exceeds u32 ids".into()));
    }
    Ok(CommonTokenSet {
        tokens,
        min_regions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnGraph {
    pub region: RegionCode,
    pub k: usize,
    /// Size of the common token set the ids refer to.
    pub universe: usize,
    /// Common-set ids of the tokens present in the table, ascending.
    pub queries: Vec<u32>,
    /// For each query, `k` neighbors as `(id, distance)` by ascending
    /// distance, ties by id.
    pub neighbors: Vec<Vec<(u32, f64)>>,
}

impl KnnGraph {
    pub fn neighbors_of(&self, id: u32) -> Option<&[(u32, f64)]> {
        self.queries
            .binary_search(&id)
            .ok()
            .map(|i| self.neighbors[i].as_slice())
    }
}

/// The rows of `table` restricted to the common set, with precomputed norms.
struct Restricted<'a> {
    ids: Vec<u32>,
    rows: Vec<&'a [f64]>,
    norms: Vec<f64>,
}

impl<'a> Restricted<'a> {
    fn new(table: &'a EmbeddingTable, common: &CommonTokenSet) -> Self {
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (id, token) in common.tokens.iter().enumerate() {
            if let Some(v) = table.get(token) {
                ids.push(id as u32);
                rows.push(v);
            }
        }
        let norms = rows.iter().map(|v| squared_norm(v)).collect();
        Restricted { ids, rows, norms }
    }

    /// Shared by every search path so they agree to the bit.
    fn distance(&self, a: usize, b: usize) -> f64 {
        let dot: f64 = self.rows[a]
            .iter()
            .zip(self.rows[b])
            .map(|(x, y)| x * y)
            .sum();
        (1.0 - dot / (self.norms[a] * self.norms[b]).sqrt()).clamp(0.0, 2.0)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    distance: f64,
    pos: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.pos.cmp(&other.pos))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const QUERY_BLOCK: usize = 32;
const CANDIDATE_BLOCK: usize = 512;

fn prepare<'a>(
    table: &'a EmbeddingTable,
    common: &CommonTokenSet,
    k: usize,
) -> Result<Restricted<'a>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let restricted = Restricted::new(table, common);
    if restricted.ids.len() <= k {
        return Err(Error::Degenerate(format!(
            "{}: {} common tokens present, need more than k={k}",
            table.region(),
            restricted.ids.len()
        )));
    }
    Ok(restricted)
}

fn assemble(
    table: &EmbeddingTable,
    common: &CommonTokenSet,
    k: usize,
    r: &Restricted,
    lists: Vec<Vec<Candidate>>,
) -> KnnGraph {
    let neighbors = lists
        .into_iter()
        .map(|list| {
            list.into_iter()
                .map(|c| (r.ids[c.pos], c.distance))
                .collect()
        })
        .collect();
    KnnGraph {
        region: table.region(),
        k,
        universe: common.len(),
        queries: r.ids.clone(),
        neighbors,
    }
}

/// Exact k-nearest-neighbor graph over the common tokens present in `table`,
/// computed with a blocked parallel scan.
pub fn knn_graph(table: &EmbeddingTable, common: &CommonTokenSet, k: usize) -> Result<KnnGraph> {
    let r = prepare(table, common, k)?;
    let n = r.ids.len();
    let positions: Vec<usize> = (0..n).collect();
    let lists: Vec<Vec<Candidate>> = positions
        .par_chunks(QUERY_BLOCK)
        .flat_map_iter(|block| {
            let mut heaps: Vec<BinaryHeap<Candidate>> = block
                .iter()
                .map(|_| BinaryHeap::with_capacity(k + 1))
                .collect();
            for start in (0..n).step_by(CANDIDATE_BLOCK) {
                let end = (start + CANDIDATE_BLOCK).min(n);
                for (heap, &q) in heaps.iter_mut().zip(block) {
                    for c in start..end {
                        if c == q {
                            continue;
                        }
                        let cand = Candidate {
                            distance: r.distance(q, c),
                            pos: c,
                        };
                        if heap.len() < k {
                            heap.push(cand);
                        } else if cand < *heap.peek().expect("heap holds k items") {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
            }
            heaps.into_iter().map(BinaryHeap::into_sorted_vec)
        })
        .collect();
    Ok(assemble(table, common, k, &r, lists))
}

/// Reference implementation: sorts every candidate for every query.
pub fn knn_graph_exhaustive(
    table: &EmbeddingTable,
    common: &CommonTokenSet,
    k: usize,
) -> Result<KnnGraph> {
    let r = prepare(table, common, k)?;
    let n = r.ids.len();
    let lists = (0..n)
        .map(|q| {
            let mut all: Vec<Candidate> = (0..n)
                .filter(|&c| c != q)
                .map(|c| Candidate {
                    distance: r.distance(q, c),
                    pos: c,
                })
                .collect();
            all.sort_unstable();
            all.truncate(k);
            all
        })
        .collect();
    Ok(assemble(table, common, k, &r, lists))
}

/// Weight of a neighbor at cosine distance `d`: 1.5 at 0, 1 at 1, 5/6 at 2.
pub fn neighbor_weight(d: f64) -> f64 {
    0.5 + 1.0 / (1.0 + d)
}

/// Sparse vector over `(token id, neighbor id)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSignature {
    pub region: RegionCode,
    pub universe: usize,
    /// Sorted by key.
    pub entries: Vec<((u32, u32), f64)>,
}

impl RegionSignature {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `token<TAB>neighbor<TAB>weight` rows in key order.
    pub fn write_tsv<W: Write>(&self, common: &CommonTokenSet, mut out: W) -> std::io::Result<()> {
        for &((a, b), w) in &self.entries {
            writeln!(out, "{}\t{}\t{w}", common.token(a), common.token(b))?;
        }
        Ok(())
    }
}

pub fn signature(graph: &KnnGraph) -> RegionSignature {
    let mut entries: Vec<((u32, u32), f64)> = graph
        .queries
        .iter()
        .zip(&graph.neighbors)
        .flat_map(|(&q, list)| {
            list.iter()
                .map(move |&(nb, d)| ((q, nb), neighbor_weight(d)))
        })
        .collect();
    entries.sort_unstable_by_key(|&(key, _)| key);
    RegionSignature {
        region: graph.region,
        universe: graph.universe,
        entries,
    }
}

fn signature_distance(a: &RegionSignature, b: &RegionSignature) -> f64 {
    let norm = |s: &RegionSignature| -> f64 { s.entries.iter().map(|(_, w)| w * w).sum() };
    let (mut i, mut j) = (0, 0);
    let mut dot = 0.0;
    while i < a.entries.len() && j < b.entries.len() {
        match a.entries[i].0.cmp(&b.entries[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                dot += a.entries[i].1 * b.entries[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    (1.0 - dot / (norm(a) * norm(b)).sqrt()).clamp(0.0, 1.0)
}

/// Pairwise cosine distances between signatures built over one common set.
/// Empty signatures are excluded with a warning.
pub fn semantic_affinity(signatures: &[RegionSignature]) -> Result<AffinityOutcome> {
    let labels: Vec<RegionCode> = signatures.iter().map(|s| s.region).collect();
    check_unique(&labels)?;
    if let Some(s) = signatures
        .iter()
        .find(|s| s.universe != signatures[0].universe)
    {
        return Err(Error::Config(format!(
            "{} was built over a different common token set",
            s.region
        )));
    }
    let (kept, empty): (Vec<&RegionSignature>, Vec<&RegionSignature>) =
        signatures.iter().partition(|s| !s.is_empty());
    let excluded: Vec<RegionCode> = empty.iter().map(|s| s.region).collect();
    for region in &excluded {
        warn!("{region}: empty signature, excluded from the semantic affinity matrix");
    }
    if kept.len() < 2 {
        return Err(Error::Degenerate(format!(
            "semantic affinity needs at least 2 non-empty signatures, got {}",
            kept.len()
        )));
    }
    let matrix = AffinityMatrix::from_pairwise(kept.iter().map(|s| s.region).collect(), |i, j| {
        Ok(signature_distance(kept[i], kept[j]))
    })?;
    Ok(AffinityOutcome { matrix, excluded })
}

/// Output of [`semantic_pipeline`].
#[derive(Debug, Clone)]
pub struct SemanticRun {
    pub common: CommonTokenSet,
    pub signatures: Vec<RegionSignature>,
    pub outcome: AffinityOutcome,
}

/// Common tokens, graphs, signatures and the affinity matrix in one pass.
///
/// A table holding `k` or fewer common tokens cannot form a graph; its
/// signature is left empty so the region is excluded rather than aborting.
pub fn semantic_pipeline(
    tables: &[EmbeddingTable],
    min_regions: usize,
    k: usize,
) -> Result<SemanticRun> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let common = common_tokens(tables, min_regions)?;
    let signatures = tables
        .iter()
        .map(|table| match knn_graph(table, &common, k) {
            Ok(graph) => Ok(signature(&graph)),
            Err(Error::Degenerate(why)) => {
                warn!("{why}");
                Ok(RegionSignature {
                    region: table.region(),
                    universe: common.len(),
                    entries: Vec::new(),
                })
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = semantic_affinity(&signatures)?;
    Ok(SemanticRun {
        common,
        signatures,
        outcome,
    })
}
