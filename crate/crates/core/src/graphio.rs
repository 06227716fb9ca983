//! Graph datasets: the on-disk text format, validation, the symmetric
//! normalized adjacency, and a planted multi-factor generator.
//!
//! A dataset directory holds four files:
//!
//! * `features.tsv`: one line per node, tab-separated floats; line index is the node id.
//! * `edges.tsv`: one `u<TAB>v` pair per line, 0-based ids, order-insensitive.
//! * `labels.tsv`: one integer per line, `-1` for unlabeled nodes.
//! * `splits.json`: `{"train": [ids], "val": [ids], "test": [ids]}`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const FEATURES_FILE: &str = "features.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLITS_FILE: &str = "splits.json";

/// Train/validation/test node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// An attributed undirected graph with semi-supervised splits.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted, without
/// self-loops. Unlabeled nodes have label `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    features: Matrix,
    edges: Vec<(usize, usize)>,
    labels: Vec<Option<usize>>,
    num_classes: usize,
    splits: Splits,
    neighbors: Vec<Vec<usize>>,
    edge_lines: usize,
}

/// Counts reported for a loaded graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    /// Unique undirected edges after canonicalization.
    pub edges: usize,
    /// Non-empty lines in the edge source, before deduplication.
    pub edge_lines: usize,
    pub features: usize,
    pub classes: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Graph {
    /// Validates and canonicalizes a graph. Self-loops are dropped and
    /// duplicate or reversed pairs collapse into one edge.
    pub fn new(
        features: Matrix,
        edges: &[(usize, usize)],
        labels: Vec<Option<usize>>,
        num_classes: usize,
        splits: Splits,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::Validation(format!(
                "{} feature rows but {} labels",
                n,
                labels.len()
            )));
        }
        if let Some((u, v)) = edges.iter().find(|&&(u, v)| u >= n || v >= n) {
            return Err(Error::Validation(format!(
                "edge ({u}, {v}) references a node outside 0..{n}"
            )));
        }
        if let Some((i, c)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&c| c >= num_classes).map(|c| (i, c)))
        {
            return Err(Error::Validation(format!(
                "node {i} has label {c} but there are only {num_classes} classes"
            )));
        }
        validate_splits(&splits, n)?;

        let canonical: BTreeSet<(usize, usize)> = edges
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        let edges: Vec<(usize, usize)> = canonical.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Graph {
            features,
            edges,
            labels,
            num_classes,
            splits,
            neighbors,
            edge_lines: 0,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> Option<usize> {
        self.labels[node]
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    /// Sorted neighbor ids of a node, excluding the node itself.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    /// Every ordered `(center, neighbor)` pair, sorted by center then
    /// neighbor. Each undirected edge appears twice.
    pub fn directed_pairs(&self) -> (Vec<usize>, Vec<usize>) {
        let total = 2 * self.edges.len();
        let mut centers = Vec::with_capacity(total);
        let mut others = Vec::with_capacity(total);
        for (u, list) in self.neighbors.iter().enumerate() {
            for &v in list {
                centers.push(u);
                others.push(v);
            }
        }
        (centers, others)
    }

    /// Ids of all labeled nodes in increasing order.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.labels[i].is_some()).collect()
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            nodes: self.num_nodes(),
            edges: self.num_edges(),
            edge_lines: self.edge_lines,
            features: self.num_features(),
            classes: self.num_classes,
            train: self.splits.train.len(),
            val: self.splits.val.len(),
            test: self.splits.test.len(),
        }
    }

    /// Writes the graph in the directory format read by [`load_graph`].
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut features = String::new();
        for i in 0..self.num_nodes() {
            let row: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            features.push_str(&row.join("\t"));
            features.push('\n');
        }
        write_file(&dir.join(FEATURES_FILE), &features)?;

        let edges: String = self.edges.iter().map(|(u, v)| format!("{u}\t{v}\n")).collect();
        write_file(&dir.join(EDGES_FILE), &edges)?;

        let labels: String = self
            .labels
            .iter()
            .map(|l| match l {
                Some(c) => format!("{c}\n"),
                None => "-1\n".to_string(),
            })
            .collect();
        write_file(&dir.join(LABELS_FILE), &labels)?;

        let splits = serde_json::to_string(&self.splits)
            .map_err(|e| Error::Validation(format!("cannot encode splits: {e}")))?;
        write_file(&dir.join(SPLITS_FILE), &(splits + "\n"))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn validate_splits(splits: &Splits, n: usize) -> Result<()> {
    let mut owner = vec![None; n];
    for (name, ids) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        for &id in ids.iter() {
            if id >= n {
                return Err(Error::Validation(format!(
                    "{name} split contains node {id}, but the graph has {n} nodes"
                )));
            }
            match owner[id] {
                Some(prev) if prev == name => {
                    return Err(Error::Validation(format!("node {id} listed twice in {name} split")))
                }
                Some(prev) => {
                    return Err(Error::Validation(format!(
                        "node {id} appears in both {prev} and {name} splits"
                    )))
                }
                None => owner[id] = Some(name),
            }
        }
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Loads a dataset directory in the documented text format.
pub fn load_graph(dir: &Path) -> Result<Graph> {
    let features_text = read_file(&dir.join(FEATURES_FILE))?;
    let edges_text = read_file(&dir.join(EDGES_FILE))?;
    let labels_text = read_file(&dir.join(LABELS_FILE))?;
    let splits_text = read_file(&dir.join(SPLITS_FILE))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in features_text.lines().enumerate() {
        let row = line
            .split('\t')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| parse_err(FEATURES_FILE, i + 1, format!("bad float: {e}")))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    FEATURES_FILE,
                    i + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(FEATURES_FILE, i + 1, "non-finite feature value"));
        }
        rows.push(row);
    }
    let n = rows.len();
    let features = Matrix::from_rows(&rows)?;

    let mut labels = Vec::with_capacity(n);
    for (i, line) in labels_text.lines().enumerate() {
        let value: i64 = line
            .trim()
            .parse()
            .map_err(|e| parse_err(LABELS_FILE, i + 1, format!("bad label: {e}")))?;
        labels.push(match value {
            -1 => None,
            c if c >= 0 => Some(c as usize),
            c => return Err(parse_err(LABELS_FILE, i + 1, format!("label {c} is below -1"))),
        });
    }
    if labels.len() != n {
        return Err(Error::Validation(format!(
            "{FEATURES_FILE} has {n} rows but {LABELS_FILE} has {} lines",
            labels.len()
        )));
    }
    let num_classes = labels.iter().flatten().max().map_or(0, |&c| c + 1);

    let mut edges = Vec::new();
    let mut edge_lines = 0;
    for (i, line) in edges_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        edge_lines += 1;
        let ids: Vec<&str> = line.split('\t').collect();
        if ids.len() != 2 {
            return Err(parse_err(EDGES_FILE, i + 1, "expected two tab-separated node ids"));
        }
        let parse_id = |tok: &str| -> Result<usize> {
            let id: usize = tok
                .trim()
                .parse()
                .map_err(|e| parse_err(EDGES_FILE, i + 1, format!("bad node id: {e}")))?;
            if id >= n {
                return Err(parse_err(
                    EDGES_FILE,
                    i + 1,
                    format!("node id {id} is unknown (graph has {n} nodes)"),
                ));
            }
            Ok(id)
        };
        edges.push((parse_id(ids[0])?, parse_id(ids[1])?));
    }

    let splits: Splits = serde_json::from_str(&splits_text)
        .map_err(|e| parse_err(SPLITS_FILE, e.line(), e.to_string()))?;
    for (name, ids) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if let Some(&id) = ids.iter().find(|&&id| id < n && labels[id].is_none()) {
            return Err(Error::Validation(format!("{name} split contains unlabeled node {id}")));
        }
    }

    let mut graph = Graph::new(features, &edges, labels, num_classes, splits)?;
    graph.edge_lines = edge_lines;
    Ok(graph)
}

/// Dense `D̃^{-1/2} (A + I) D̃^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(Matrix);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Symmetric normalized adjacency with self-loops. Entry `(i, j)` is
/// `1/√(d̃ᵢ d̃ⱼ)` for every edge and for `i = j`, where `d̃` counts self-loops.
pub fn normalized_adjacency(graph: &Graph) -> NormalizedAdjacency {
    let n = graph.num_nodes();
    let degree: Vec<f64> = (0..n).map(|i| graph.neighbors(i).len() as f64 + 1.0).collect();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, 1.0 / degree[i]);
    }
    for &(u, v) in graph.edges() {
        let w = 1.0 / (degree[u] * degree[v]).sqrt();
        m.set(u, v, w);
        m.set(v, u, w);
    }
    NormalizedAdjacency(m)
}

/// Parameters of the planted multi-factor generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorGraphSpec {
    pub nodes: usize,
    /// Number of independent latent factors, each a planted partition.
    pub factors: usize,
    pub communities_per_factor: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Standard deviation of Gaussian noise added to the one-hot features.
    pub feature_noise: f64,
    pub train_per_class: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl FactorGraphSpec {
    /// Defaults to 20 training nodes per class, a fifth of the nodes for
    /// validation, and up to half for testing.
    pub fn new(nodes: usize, factors: usize, communities: usize, p_in: f64, p_out: f64, seed: u64) -> Self {
        FactorGraphSpec {
            nodes,
            factors,
            communities_per_factor: communities,
            p_in,
            p_out,
            feature_noise: 1.0,
            train_per_class: 20,
            val_size: nodes / 5,
            test_size: nodes / 2,
            seed,
        }
    }
}

/// Community assignment of each node under each factor: `factors[m][node]`.
pub type FactorAssignments = Vec<Vec<usize>>;

/// Union of independent planted-partition graphs, one per factor.
///
/// Each factor splits the nodes into equal communities by an independent
/// random permutation; a pair is linked in that factor with probability
/// `p_in` inside a community and `p_out` across. The stored graph is the
/// union over factors. Features concatenate a noisy one-hot community
/// indicator per factor; labels are the first factor's communities.
pub fn synth_factor_graph(spec: &FactorGraphSpec) -> Result<(Graph, FactorAssignments)> {
    for (name, p) in [("p_in", spec.p_in), ("p_out", spec.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    if !(spec.feature_noise >= 0.0 && spec.feature_noise.is_finite()) {
        return Err(Error::Config(format!(
            "feature_noise must be finite and >= 0, got {}",
            spec.feature_noise
        )));
    }
    let (n, k) = (spec.nodes, spec.communities_per_factor);
    if spec.factors == 0 || k == 0 || n == 0 || n % k != 0 {
        return Err(Error::Config(format!(
            "need factors >= 1 and a node count divisible by the community count, got n={n}, factors={}, communities={k}",
            spec.factors
        )));
    }
    let size = n / k;
    if spec.train_per_class * k + spec.val_size > n {
        return Err(Error::Config(format!(
            "splits need {} nodes but the graph has {n}",
            spec.train_per_class * k + spec.val_size
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut factors = Vec::with_capacity(spec.factors);
    for _ in 0..spec.factors {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut assignment = vec![0; n];
        for (pos, &node) in order.iter().enumerate() {
            assignment[node] = pos / size;
        }
        factors.push(assignment);
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let mut linked = false;
            for f in &factors {
                let p = if f[u] == f[v] { spec.p_in } else { spec.p_out };
                // Draw for every factor so the stream does not depend on earlier hits.
                linked |= rng.random::<f64>() < p;
            }
            if linked {
                edges.push((u, v));
            }
        }
    }

    let noise = Normal::new(0.0, spec.feature_noise)
        .map_err(|e| Error::Config(format!("feature noise: {e}")))?;
    let width = spec.factors * k;
    let mut features = Matrix::zeros(n, width);
    for u in 0..n {
        for (m, f) in factors.iter().enumerate() {
            for c in 0..k {
                let hot = if f[u] == c { 1.0 } else { 0.0 };
                features.set(u, m * k + c, hot + noise.sample(&mut rng));
            }
        }
    }

    let labels: Vec<Option<usize>> = factors[0].iter().map(|&c| Some(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut per_class = vec![0; k];
    let mut splits = Splits::default();
    let mut rest = Vec::new();
    for &node in &order {
        let c = factors[0][node];
        if per_class[c] < spec.train_per_class {
            per_class[c] += 1;
            splits.train.push(node);
        } else {
            rest.push(node);
        }
    }
    splits.val = rest[..spec.val_size].to_vec();
    let test_end = (spec.val_size + spec.test_size).min(rest.len());
    splits.test = rest[spec.val_size..test_end].to_vec();
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();

    let graph = Graph::new(features, &edges, labels, k, splits)?;
    Ok((graph, factors))
}
