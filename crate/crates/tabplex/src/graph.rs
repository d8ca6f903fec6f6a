//! Relation extraction over table rows and assembly of the multiplex graph:
//! one shared node set, one directed edge set per relation.

use crate::error::{Error, Result};
use crate::schema::ColumnKind;
use crate::table::{Dataset, Table};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RelationRule {
    /// Connect rows sharing the same id in one categorical-like column.
    SameValue { column: String },
    /// Connect rows equal on the tuple of listed categorical-like columns.
    ProductSameValue { columns: Vec<String> },
    /// Connect rows whose raw (pre-normalization) values differ by at most
    /// `threshold` in one numerical column.
    NumericDifference { column: String, threshold: f64 },
    /// Connect each row to its `k` most similar rows over the listed
    /// numerical columns.
    TopKSimilarity {
        columns: Vec<String>,
        k: usize,
        #[serde(default)]
        metric: SimilarityMetric,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMetric {
    #[default]
    Cosine,
    Euclidean,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: String,
    #[serde(flatten)]
    pub rule: RelationRule,
}

/// Configuration document listing relations in layer order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelationsFile {
    pub relations: Vec<RelationSpec>,
}

impl RelationsFile {
    pub fn load(path: &Path) -> Result<RelationsFile> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Validation(format!("cannot read relations file {}: {e}", path.display()))
        })?;
        let file: RelationsFile = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        if file.relations.is_empty() {
            return Err(Error::Validation("relations file lists no relations".into()));
        }
        let mut seen = HashSet::new();
        for r in &file.relations {
            if !seen.insert(r.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate relation name {:?}",
                    r.name
                )));
            }
        }
        Ok(file)
    }
}

/// One relation's edges. Pairs are stored sorted and deduplicated; undirected
/// sets keep the canonical (min, max) form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSet {
    pub relation: String,
    pub pairs: Vec<(u32, u32)>,
    pub directed: bool,
    /// Number of equality groups that exceeded the group-size limit and were
    /// sampled instead of fully enumerated.
    pub truncated_groups: usize,
}

impl EdgeSet {
    pub fn new(relation: impl Into<String>, mut pairs: Vec<(u32, u32)>, directed: bool) -> EdgeSet {
        pairs.sort_unstable();
        pairs.dedup();
        EdgeSet {
            relation: relation.into(),
            pairs,
            directed,
            truncated_groups: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Knobs for extraction; defaults suit desk-scale data.
#[derive(Clone, Copy, Debug)]
pub struct ExtractOptions {
    /// Equality groups larger than this are sampled rather than enumerated
    /// (a group of size g would otherwise yield g(g−1)/2 pairs).
    pub group_size_limit: usize,
    /// Per-node neighbor budget used when sampling oversized groups.
    pub sample_cap: usize,
    pub seed: u64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            group_size_limit: 10_000,
            sample_cap: 50,
            seed: 0,
        }
    }
}

fn cat_ids_for<'t>(table: &'t Table, name: &str) -> Result<&'t [u32]> {
    let schema_col = table
        .schema
        .column(name)
        .ok_or_else(|| Error::Validation(format!("relation references unknown column {name:?}")))?;
    match schema_col.kind {
        ColumnKind::Target | ColumnKind::Timestamp => {
            return Err(Error::Validation(format!(
                "relations may not reference the {:?} column {name:?}",
                schema_col.kind
            )))
        }
        k if k.is_categorical_like() => {}
        other => {
            return Err(Error::Validation(format!(
                "column {name:?} has kind {other:?}, expected a categorical-like column"
            )))
        }
    }
    if !schema_col.usable_for_relations {
        return Err(Error::Validation(format!(
            "column {name:?} is not flagged usable_for_relations"
        )));
    }
    let col = table
        .cat_column(name)
        .ok_or_else(|| Error::Validation(format!("column {name:?} missing from table")))?;
    let ids = col
        .ids
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("column {name:?} has no encoded ids; run ingestion first")))?;
    Ok(ids)
}

/// Extract the undirected edge set induced by one relation rule.
///
/// Equality rules never connect rows grouped under the reserved missing or
/// unseen ids, and numeric-difference rules skip originally-missing cells.
pub fn extract_edges(ds: &Dataset, spec: &RelationSpec, opts: &ExtractOptions) -> Result<EdgeSet> {
    let table = &ds.table;
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut truncated = 0usize;
    match &spec.rule {
        RelationRule::SameValue { column } => {
            let ids = cat_ids_for(table, column)?;
            let vocab = ds
                .vocab
                .column(column)
                .ok_or_else(|| Error::Validation(format!("no vocabulary for column {column:?}")))?;
            let excluded = [vocab.missing_id, vocab.unseen_id];
            group_pairs(
                ids.iter().enumerate().filter_map(|(row, &id)| {
                    if excluded.contains(&id) {
                        None
                    } else {
                        Some((id, row as u32))
                    }
                }),
                table.timestamps(),
                opts,
                &mut pairs,
                &mut truncated,
            );
        }
        RelationRule::ProductSameValue { columns } => {
            if columns.is_empty() {
                return Err(Error::Validation(
                    "product_same_value needs at least one column".into(),
                ));
            }
            let mut all_ids = Vec::new();
            let mut excluded = Vec::new();
            for c in columns {
                all_ids.push(cat_ids_for(table, c)?);
                let vocab = ds
                    .vocab
                    .column(c)
                    .ok_or_else(|| Error::Validation(format!("no vocabulary for column {c:?}")))?;
                excluded.push([vocab.missing_id, vocab.unseen_id]);
            }
            let n = table.n_rows;
            let keyed = (0..n).filter_map(|row| {
                let mut key = Vec::with_capacity(all_ids.len());
                for (ids, excl) in all_ids.iter().zip(&excluded) {
                    let id = ids[row];
                    if excl.contains(&id) {
                        return None;
                    }
                    key.push(id);
                }
                Some((key, row as u32))
            });
            group_pairs(keyed, table.timestamps(), opts, &mut pairs, &mut truncated);
        }
        RelationRule::NumericDifference { column, threshold } => {
            if *threshold < 0.0 {
                return Err(Error::Validation("numeric_difference threshold must be ≥ 0".into()));
            }
            let schema_col = table
                .schema
                .column(column)
                .ok_or_else(|| Error::Validation(format!("relation references unknown column {column:?}")))?;
            if schema_col.kind != ColumnKind::Numerical {
                return Err(Error::Validation(format!(
                    "numeric_difference needs a numerical column, {column:?} is {:?}",
                    schema_col.kind
                )));
            }
            let col = table
                .num_column(column)
                .ok_or_else(|| Error::Validation(format!("column {column:?} missing from table")))?;
            // raw pre-normalization values; originally-missing cells excluded
            let mut order: Vec<u32> = (0..table.n_rows as u32)
                .filter(|&r| !col.missing[r as usize])
                .collect();
            order.sort_by(|&a, &b| {
                col.raw[a as usize]
                    .partial_cmp(&col.raw[b as usize])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let vals: Vec<f64> = order.iter().map(|&r| col.raw[r as usize]).collect();
            let mut lo = 0usize;
            for hi in 0..order.len() {
                while vals[hi] - vals[lo] > *threshold {
                    lo += 1;
                }
                for j in lo..hi {
                    let (a, b) = (order[j], order[hi]);
                    pairs.push((a.min(b), a.max(b)));
                }
            }
        }
        RelationRule::TopKSimilarity { columns, k, metric } => {
            if *k < 1 {
                return Err(Error::Validation("top_k_similarity needs k ≥ 1".into()));
            }
            let mut cols = Vec::new();
            for c in columns {
                let schema_col = table
                    .schema
                    .column(c)
                    .ok_or_else(|| Error::Validation(format!("relation references unknown column {c:?}")))?;
                if schema_col.kind != ColumnKind::Numerical {
                    return Err(Error::Validation(format!(
                        "top_k_similarity needs numerical columns, {c:?} is {:?}",
                        schema_col.kind
                    )));
                }
                cols.push(
                    table
                        .num_column(c)
                        .ok_or_else(|| Error::Validation(format!("column {c:?} missing from table")))?,
                );
            }
            let n = table.n_rows;
            let vecs: Vec<Vec<f64>> = (0..n)
                .map(|row| cols.iter().map(|c| c.raw[row]).collect())
                .collect();
            for x in 0..n {
                let mut scored: Vec<(f64, u32)> = (0..n)
                    .filter(|&u| u != x)
                    .map(|u| (similarity(&vecs[x], &vecs[u], *metric), u as u32))
                    .collect();
                scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                for &(_, u) in scored.iter().take(*k) {
                    let (a, b) = (x as u32, u);
                    pairs.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    let mut set = EdgeSet::new(&spec.name, pairs, false);
    set.truncated_groups = truncated;
    Ok(set)
}

fn similarity(a: &[f64], b: &[f64], metric: SimilarityMetric) -> f64 {
    match metric {
        SimilarityMetric::Cosine => {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for i in 0..a.len() {
                dot += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na.sqrt() * nb.sqrt())
            }
        }
        SimilarityMetric::Euclidean => {
            let mut d2 = 0.0;
            for i in 0..a.len() {
                d2 += (a[i] - b[i]) * (a[i] - b[i]);
            }
            -d2.sqrt()
        }
    }
}

/// Enumerate pairs within equality groups, sampling per-node predecessors
/// when a group exceeds the size limit.
fn group_pairs<K: std::hash::Hash + Eq + Ord + Clone>(
    keyed_rows: impl Iterator<Item = (K, u32)>,
    timestamps: Option<&[f64]>,
    opts: &ExtractOptions,
    pairs: &mut Vec<(u32, u32)>,
    truncated: &mut usize,
) {
    let mut groups: HashMap<K, Vec<u32>> = HashMap::new();
    for (key, row) in keyed_rows {
        groups.entry(key).or_default().push(row);
    }
    let mut keys: Vec<&K> = groups.keys().collect();
    keys.sort();
    for key in keys {
        let members = &groups[key];
        if members.len() <= opts.group_size_limit {
            for i in 0..members.len() {
                for j in (i + 1)..members.len() {
                    let (a, b) = (members[i], members[j]);
                    pairs.push((a.min(b), a.max(b)));
                }
            }
        } else {
            *truncated += 1;
            sample_group(members, timestamps, opts, pairs);
        }
    }
}

/// For oversized groups: give each member up to `sample_cap` partners
/// instead of the quadratic full enumeration. With timestamps, take the
/// most recent predecessors; otherwise a seed-deterministic sample.
fn sample_group(
    members: &[u32],
    timestamps: Option<&[f64]>,
    opts: &ExtractOptions,
    pairs: &mut Vec<(u32, u32)>,
) {
    match timestamps {
        Some(ts) => {
            let mut by_time: Vec<u32> = members.to_vec();
            by_time.sort_by(|&a, &b| {
                ts[a as usize]
                    .partial_cmp(&ts[b as usize])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            for (pos, &x) in by_time.iter().enumerate() {
                let start = pos.saturating_sub(opts.sample_cap);
                for &u in &by_time[start..pos] {
                    pairs.push((u.min(x), u.max(x)));
                }
            }
        }
        None => {
            for (pos, &x) in members.iter().enumerate() {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(opts.seed ^ (x as u64).wrapping_mul(0x9E3779B97F4A7C15));
                let take = opts.sample_cap.min(members.len() - 1);
                for idx in sample(&mut rng, members.len() - 1, take) {
                    // index into members with x itself skipped
                    let u = if idx < pos { members[idx] } else { members[idx + 1] };
                    pairs.push((u.min(x), u.max(x)));
                }
            }
        }
    }
}

/// Direct each undirected pair from the earlier row to the later one.
/// Equal timestamps keep both directions: neither sample lies in the
/// other's future.
pub fn orient_temporal(edges: EdgeSet, timestamps: &[f64]) -> Result<EdgeSet> {
    if edges.directed {
        return Err(Error::Graph(format!(
            "edge set {:?} is already directed",
            edges.relation
        )));
    }
    let mut pairs = Vec::with_capacity(edges.pairs.len());
    for &(u, v) in &edges.pairs {
        let (tu, tv) = (timestamps[u as usize], timestamps[v as usize]);
        if tu < tv {
            pairs.push((u, v));
        } else if tv < tu {
            pairs.push((v, u));
        } else {
            pairs.push((u, v));
            pairs.push((v, u));
        }
    }
    let mut out = EdgeSet::new(&edges.relation, pairs, true);
    out.truncated_groups = edges.truncated_groups;
    Ok(out)
}

/// Materialize an undirected edge set as explicit arcs in both directions.
/// Used on datasets without timestamps, where orientation does not apply.
pub fn both_directions(edges: EdgeSet) -> EdgeSet {
    if edges.directed {
        return edges;
    }
    let mut pairs = Vec::with_capacity(edges.pairs.len() * 2);
    for &(u, v) in &edges.pairs {
        pairs.push((u, v));
        pairs.push((v, u));
    }
    let mut out = EdgeSet::new(&edges.relation, pairs, true);
    out.truncated_groups = edges.truncated_groups;
    out
}

/// Bound each node's in-degree. With timestamps the most recent predecessors
/// are kept; otherwise a seed-deterministic uniform sample. Undirected input
/// is first materialized into arcs.
pub fn cap_in_degree(
    edges: EdgeSet,
    cap: usize,
    timestamps: Option<&[f64]>,
    seed: u64,
) -> Result<EdgeSet> {
    if cap < 1 {
        return Err(Error::Validation("in-degree cap must be ≥ 1".into()));
    }
    let edges = both_directions(edges);
    let mut incoming: HashMap<u32, Vec<u32>> = HashMap::new();
    for &(src, dst) in &edges.pairs {
        incoming.entry(dst).or_default().push(src);
    }
    let mut dsts: Vec<u32> = incoming.keys().copied().collect();
    dsts.sort_unstable();
    let mut pairs = Vec::with_capacity(edges.pairs.len());
    for dst in dsts {
        let srcs = incoming.get_mut(&dst).unwrap();
        if srcs.len() <= cap {
            for &s in srcs.iter() {
                pairs.push((s, dst));
            }
            continue;
        }
        match timestamps {
            Some(ts) => {
                srcs.sort_by(|&a, &b| {
                    ts[b as usize]
                        .partial_cmp(&ts[a as usize])
                        .unwrap()
                        .then(a.cmp(&b))
                });
                for &s in srcs.iter().take(cap) {
                    pairs.push((s, dst));
                }
            }
            None => {
                srcs.sort_unstable();
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (dst as u64).wrapping_mul(0xD1B54A32D192ED03),
                );
                for idx in sample(&mut rng, srcs.len(), cap) {
                    pairs.push((srcs[idx], dst));
                }
            }
        }
    }
    let mut out = EdgeSet::new(&edges.relation, pairs, true);
    out.truncated_groups = edges.truncated_groups;
    Ok(out)
}

/// Compressed incoming-adjacency for one relation layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerIndex {
    pub name: String,
    /// `offsets[x]..offsets[x+1]` indexes `sources` with x's incoming neighbors.
    pub offsets: Vec<usize>,
    pub sources: Vec<u32>,
}

impl LayerIndex {
    pub fn incoming(&self, node: usize) -> &[u32] {
        &self.sources[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn n_edges(&self) -> usize {
        self.sources.len()
    }
}

/// Node set plus one edge set per relation, with incoming-adjacency indexes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiplexGraph {
    pub n_nodes: usize,
    pub directed: bool,
    pub layers: Vec<LayerIndex>,
}

impl MultiplexGraph {
    pub fn n_relations(&self) -> usize {
        self.layers.len()
    }

    /// Reconstruct a layer's arc list, sorted by (src, dst).
    pub fn layer_edges(&self, r: usize) -> Vec<(u32, u32)> {
        let layer = &self.layers[r];
        let mut out = Vec::with_capacity(layer.n_edges());
        for dst in 0..self.n_nodes {
            for &src in layer.incoming(dst) {
                out.push((src, dst as u32));
            }
        }
        out.sort_unstable();
        out
    }

    /// Keep only the named layers, in the given order.
    pub fn select_layers(&self, names: &[String]) -> Result<MultiplexGraph> {
        let mut layers = Vec::new();
        for name in names {
            let layer = self
                .layers
                .iter()
                .find(|l| &l.name == name)
                .ok_or_else(|| Error::Validation(format!("graph has no layer named {name:?}")))?;
            layers.push(layer.clone());
        }
        if layers.is_empty() {
            return Err(Error::Validation("layer selection is empty".into()));
        }
        Ok(MultiplexGraph {
            n_nodes: self.n_nodes,
            directed: self.directed,
            layers,
        })
    }

    /// Union all layers into a single deduplicated layer (multi-edges between
    /// the same pair collapse to one).
    pub fn merge_layers(&self) -> MultiplexGraph {
        let mut arcs: Vec<(u32, u32)> = self
            .layers
            .iter()
            .enumerate()
            .flat_map(|(r, _)| self.layer_edges(r))
            .collect();
        arcs.sort_unstable();
        arcs.dedup();
        let set = EdgeSet {
            relation: "merged".into(),
            pairs: arcs,
            directed: true,
            truncated_groups: 0,
        };
        assemble(self.n_nodes, vec![set]).expect("merged layer endpoints already validated")
    }
}

/// Build the multiplex graph from edge sets, preserving layer order.
/// Undirected sets contribute both arc directions to the adjacency index.
pub fn assemble(n_nodes: usize, edge_sets: Vec<EdgeSet>) -> Result<MultiplexGraph> {
    if edge_sets.is_empty() {
        return Err(Error::Graph("cannot assemble a graph from zero edge sets".into()));
    }
    let directed = edge_sets[0].directed;
    if edge_sets.iter().any(|e| e.directed != directed) {
        return Err(Error::Graph("edge sets mix directed and undirected layers".into()));
    }
    let mut layers = Vec::with_capacity(edge_sets.len());
    for set in &edge_sets {
        let mut seen = HashSet::with_capacity(set.pairs.len());
        for &(u, v) in &set.pairs {
            if u as usize >= n_nodes || v as usize >= n_nodes {
                return Err(Error::Graph(format!(
                    "edge ({u}, {v}) in layer {:?} exceeds node count {n_nodes}",
                    set.relation
                )));
            }
            if u == v {
                return Err(Error::Graph(format!(
                    "self-loop on node {u} in layer {:?}; self-inclusion is implicit",
                    set.relation
                )));
            }
            // undirected pairs are duplicates regardless of endpoint order
            let key = if directed { (u, v) } else { (u.min(v), u.max(v)) };
            if !seen.insert(key) {
                return Err(Error::Graph(format!(
                    "duplicate pair ({u}, {v}) in layer {:?}",
                    set.relation
                )));
            }
        }
        let mut arcs: Vec<(u32, u32)> = if directed {
            set.pairs.clone()
        } else {
            set.pairs
                .iter()
                .flat_map(|&(u, v)| [(u, v), (v, u)])
                .collect()
        };
        arcs.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut offsets = vec![0usize; n_nodes + 1];
        for &(_, dst) in &arcs {
            offsets[dst as usize + 1] += 1;
        }
        for i in 0..n_nodes {
            offsets[i + 1] += offsets[i];
        }
        let sources = arcs.iter().map(|&(src, _)| src).collect();
        layers.push(LayerIndex {
            name: set.relation.clone(),
            offsets,
            sources,
        });
    }
    Ok(MultiplexGraph {
        n_nodes,
        directed,
        layers,
    })
}

#[derive(Serialize, Deserialize)]
struct GraphManifest {
    n_nodes: usize,
    directed: bool,
    layers: Vec<String>,
    files: Vec<String>,
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Write the graph as one `src<TAB>dst` edge-list file per layer plus a JSON
/// manifest recording the node count, layer order, and directedness.
pub fn save_graph(graph: &MultiplexGraph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (r, layer) in graph.layers.iter().enumerate() {
        let file_name = format!("layer_{r:02}_{}.edges", sanitize(&layer.name));
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(&file_name))?);
        for (src, dst) in graph.layer_edges(r) {
            // undirected layers store each pair once, in canonical order
            if graph.directed || src < dst {
                writeln!(f, "{src}\t{dst}")?;
            }
        }
        files.push(file_name);
    }
    let manifest = GraphManifest {
        n_nodes: graph.n_nodes,
        directed: graph.directed,
        layers: graph.layers.iter().map(|l| l.name.clone()).collect(),
        files,
    };
    std::fs::write(
        dir.join("graph.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_graph(dir: &Path) -> Result<MultiplexGraph> {
    let manifest_path = dir.join("graph.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        Error::Validation(format!(
            "cannot read graph manifest {}: {e}",
            manifest_path.display()
        ))
    })?;
    let manifest: GraphManifest = serde_json::from_str(&text)?;
    let mut sets = Vec::new();
    for (name, file) in manifest.layers.iter().zip(&manifest.files) {
        let f = std::fs::File::open(dir.join(file)).map_err(|e| {
            Error::Validation(format!("cannot open graph layer file {file}: {e}"))
        })?;
        let mut pairs = Vec::new();
        for line in std::io::BufReader::new(f).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split('\t');
            let src: u32 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Graph(format!("bad edge line in {file}: {line:?}")))?;
            let dst: u32 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Graph(format!("bad edge line in {file}: {line:?}")))?;
            pairs.push((src, dst));
        }
        sets.push(EdgeSet::new(name.clone(), pairs, manifest.directed));
    }
    assemble(manifest.n_nodes, sets)
}

/// The standard construction pipeline: extract each relation, orient along
/// timestamps when present (otherwise keep both directions), cap in-degrees,
/// and assemble layers in file order.
pub fn build_graph(
    ds: &Dataset,
    relations: &RelationsFile,
    cap: usize,
    opts: &ExtractOptions,
) -> Result<MultiplexGraph> {
    let ts = ds.table.timestamps().map(|s| s.to_vec());
    let mut sets = Vec::new();
    for spec in &relations.relations {
        let undirected = extract_edges(ds, spec, opts)?;
        let directed = match &ts {
            Some(ts) => orient_temporal(undirected, ts)?,
            None => both_directions(undirected),
        };
        sets.push(cap_in_degree(directed, cap, ts.as_deref(), opts.seed)?);
    }
    assemble(ds.table.n_rows, sets)
}
