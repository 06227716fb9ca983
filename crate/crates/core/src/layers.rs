//! Model building blocks: the GCN propagation layer, per-channel projection,
//! and neighborhood routing over channels.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graphio::Graph;
use crate::tensor::{dot, l2_norm, Matrix, Tape, Tensor, NORM_EPS};

/// Weights and biases of all channels of one disentangle layer.
///
/// Channel `m` owns columns `m·w .. (m+1)·w` of `weight` and `bias`, where
/// `w = out_width / channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisentangleLayerParams {
    channels: usize,
    pub weight: Matrix,
    pub bias: Matrix,
}

impl DisentangleLayerParams {
    pub fn new(channels: usize, weight: Matrix, bias: Matrix) -> Result<Self> {
        let out = weight.cols();
        if channels == 0 || !out.is_multiple_of(channels) {
            return Err(Error::Config(format!(
                "{channels} channels do not divide layer width {out}"
            )));
        }
        if bias.shape() != (1, out) {
            return Err(Error::shape("DisentangleLayerParams", weight.shape(), bias.shape()));
        }
        Ok(DisentangleLayerParams {
            channels,
            weight,
            bias,
        })
    }

    pub fn zeros(channels: usize, in_width: usize, channel_width: usize) -> Self {
        let out = channels * channel_width;
        DisentangleLayerParams {
            channels,
            weight: Matrix::zeros(in_width, out),
            bias: Matrix::zeros(1, out),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn channel_width(&self) -> usize {
        self.weight.cols() / self.channels
    }

    pub fn in_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_width(&self) -> usize {
        self.weight.cols()
    }

    /// `W_m` as its own `in_width × channel_width` matrix.
    pub fn channel_weight(&self, m: usize) -> Matrix {
        let w = self.channel_width();
        let mut out = Matrix::zeros(self.in_width(), w);
        for i in 0..self.in_width() {
            out.row_mut(i).copy_from_slice(&self.weight.row(i)[m * w..(m + 1) * w]);
        }
        out
    }

    pub fn channel_bias(&self, m: usize) -> &[f64] {
        let w = self.channel_width();
        &self.bias.data()[m * w..(m + 1) * w]
    }
}

/// `normalize(relu(W_mᵀ x + b_m))` for a single feature vector. A
/// (near-)zero pre-normalization vector stays zero.
pub fn channel_project(x: &[f64], params: &DisentangleLayerParams, m: usize) -> Result<Vec<f64>> {
    if m >= params.channels() {
        return Err(Error::Validation(format!(
            "channel {m} out of range for {} channels",
            params.channels()
        )));
    }
    if x.len() != params.in_width() {
        return Err(Error::shape(
            "channel_project",
            (1, x.len()),
            (params.in_width(), params.out_width()),
        ));
    }
    let w = params.channel_width();
    let mut z: Vec<f64> = params.channel_bias(m).to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (zj, wj) in z.iter_mut().zip(&params.weight.row(i)[m * w..(m + 1) * w]) {
            *zj += xi * wj;
        }
    }
    z.iter_mut().for_each(|v| *v = v.max(0.0));
    normalize_in_place(&mut z);
    Ok(z)
}

fn normalize_in_place(v: &mut [f64]) {
    let denom = l2_norm(v).max(NORM_EPS);
    v.iter_mut().for_each(|x| *x /= denom);
}

/// Result of routing one node's neighbors into channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingState {
    /// Final channel anchors `e_1..e_M`.
    pub anchors: Vec<Vec<f64>>,
    /// `probs[t][v][m]`: probability that neighbor `v` is routed to channel
    /// `m` in iteration `t` (0-based), in the caller's neighbor order.
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl RoutingState {
    pub fn final_probs(&self) -> &[Vec<f64>] {
        self.probs.last().map_or(&[], |p| p.as_slice())
    }
}

/// Iteratively assigns neighbors to channels for one node.
///
/// Anchors start at the node's own projections. Each iteration computes, for
/// every neighbor, a softmax over channels of `⟨z_{v,m}, e_m⟩` using the
/// current anchors, then rebuilds each anchor as the normalized sum of the
/// node's projection and the probability-weighted neighbor projections.
///
/// Neighbors are summed in a canonical order (lexicographic on their
/// projections), so the anchors do not depend on the order of
/// `z_neighbors` at all, not even in the last bit.
pub fn neighborhood_routing(
    z_u: &[Vec<f64>],
    z_neighbors: &[Vec<Vec<f64>>],
    iterations: usize,
) -> Result<RoutingState> {
    if iterations == 0 {
        return Err(Error::Config("routing needs at least one iteration".into()));
    }
    let channels = z_u.len();
    let width = z_u.first().map_or(0, Vec::len);
    let bad_shape = |z: &[Vec<f64>]| z.len() != channels || z.iter().any(|c| c.len() != width);
    if bad_shape(z_u) || z_neighbors.iter().any(|z| bad_shape(z)) {
        return Err(Error::Validation(format!(
            "routing inputs must all be {channels} channels of width {width}"
        )));
    }

    let mut order: Vec<usize> = (0..z_neighbors.len()).collect();
    order.sort_by(|&a, &b| {
        let (za, zb) = (&z_neighbors[a], &z_neighbors[b]);
        za.iter()
            .flatten()
            .zip(zb.iter().flatten())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut anchors: Vec<Vec<f64>> = z_u.to_vec();
    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let probs: Vec<Vec<f64>> = z_neighbors
            .iter()
            .map(|zv| {
                let logits: Vec<f64> = (0..channels).map(|m| dot(&zv[m], &anchors[m])).collect();
                softmax(&logits)
            })
            .collect();
        for (m, anchor) in anchors.iter_mut().enumerate() {
            let mut acc = z_u[m].clone();
            for &v in &order {
                let p = probs[v][m];
                for (a, z) in acc.iter_mut().zip(&z_neighbors[v][m]) {
                    *a += p * z;
                }
            }
            normalize_in_place(&mut acc);
            *anchor = acc;
        }
        history.push(probs);
    }
    Ok(RoutingState {
        anchors,
        probs: history,
    })
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `ρ(Â · H · W)` with `ρ` = ReLU when `activation` is set.
pub fn gcn_layer(tape: &mut Tape, h: Tensor, adjacency: Tensor, w: Tensor, activation: bool) -> Result<Tensor> {
    let hw = tape.matmul(h, w)?;
    let out = tape.matmul(adjacency, hw)?;
    Ok(if activation { tape.relu(out) } else { out })
}

/// Directed `(center, neighbor)` index lists used by the routing layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingGraph {
    pub nodes: usize,
    pub centers: Vec<usize>,
    pub neighbors: Vec<usize>,
}

impl RoutingGraph {
    pub fn from_graph(graph: &Graph) -> Self {
        let (centers, neighbors) = graph.directed_pairs();
        RoutingGraph {
            nodes: graph.num_nodes(),
            centers,
            neighbors,
        }
    }
}

/// Tape handles produced by one disentangle layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerOutput {
    /// Concatenated channel anchors before dropout.
    pub representation: Tensor,
    /// `representation` after dropout; identical handle in eval mode.
    pub output: Tensor,
}

/// Hyper-parameters of a disentangle layer invocation.
#[derive(Debug, Clone, Copy)]
pub struct RoutingSettings {
    pub channels: usize,
    pub iterations: usize,
    pub dropout: f64,
    pub training: bool,
}

/// One disentangle layer over the whole graph.
///
/// Projects every node into channels (`weight` is `in × channels·w`,
/// `bias` is `1 × channels·w`), routes each node's neighbors for the
/// configured number of iterations, concatenates the anchors and applies
/// dropout. Every step is recorded, so gradients flow through all routing
/// iterations.
pub fn disentangle_layer<R: Rng + ?Sized>(
    tape: &mut Tape,
    h: Tensor,
    graph: &RoutingGraph,
    weight: Tensor,
    bias: Tensor,
    settings: RoutingSettings,
    rng: &mut R,
) -> Result<LayerOutput> {
    let RoutingSettings {
        channels,
        iterations,
        dropout,
        training,
    } = settings;
    if iterations == 0 {
        return Err(Error::Config("routing needs at least one iteration".into()));
    }
    let width = tape.shape(weight).1;
    if channels == 0 || !width.is_multiple_of(channels) {
        return Err(Error::Config(format!(
            "{channels} channels do not divide layer width {width}"
        )));
    }
    if tape.shape(h).0 != graph.nodes {
        return Err(Error::shape("disentangle_layer", tape.shape(h), (graph.nodes, width)));
    }
    let channel_width = width / channels;

    let projected = tape.matmul(h, weight)?;
    let projected = tape.add_row(projected, bias)?;
    let projected = tape.relu(projected);
    let z = tape.block_l2_normalize(projected, channel_width, NORM_EPS)?;

    let mut anchors = z;
    if !graph.centers.is_empty() {
        for _ in 0..iterations {
            let logits = tape.block_dots(z, &graph.neighbors, anchors, &graph.centers, channels)?;
            let probs = tape.row_softmax(logits);
            let pulled =
                tape.block_weighted_scatter(z, &graph.neighbors, probs, &graph.centers, graph.nodes, channels)?;
            let summed = tape.add(z, pulled)?;
            anchors = tape.block_l2_normalize(summed, channel_width, NORM_EPS)?;
        }
    }
    let output = tape.dropout(anchors, dropout, training, rng)?;
    Ok(LayerOutput {
        representation: anchors,
        output,
    })
}
