//! The full network, its loss, and training.

mod adam;
pub mod checkpoint;
mod config;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::Adam;
pub use config::{HsicScope, ModelConfig, ModelKind};
pub use train::{train, EpochRecord, TrainTrace};

use crate::error::{Error, Result};
use crate::graphio::{normalized_adjacency, Graph};
use crate::hsic::independence_loss;
use crate::layers::{disentangle_layer, gcn_layer, DisentangleLayerParams, RoutingGraph, RoutingSettings};
use crate::tensor::{Matrix, Tape, Tensor};

/// A named trainable matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
}

impl Parameter {
    fn new(name: impl Into<String>, value: Matrix) -> Self {
        Parameter {
            name: name.into(),
            value,
        }
    }

    /// Weight matrices are penalized by weight decay; biases are not.
    pub fn is_weight(&self) -> bool {
        self.name.ends_with(".weight")
    }
}

/// Stacked propagation layers followed by a fully-connected head.
///
/// Parameters are kept in a fixed order: for each layer `l`,
/// `layer{l}.weight` (and `layer{l}.bias` for disentangle layers), then
/// `head.weight` (`f_L × C`) and `head.bias` (`1 × C`).
#[derive(Debug, Clone, PartialEq)]
pub struct IpgdnModel {
    kind: ModelKind,
    channels: usize,
    layers: usize,
    params: Vec<Parameter>,
}

impl IpgdnModel {
    /// Uniform initialization in `±√(6/(fan_in + fan_out))`, zero biases.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, num_features: usize, num_classes: usize, rng: &mut R) -> Self {
        let hidden = cfg.hidden_width();
        let mut params = Vec::new();
        let mut fan_in = num_features;
        for l in 0..cfg.layers {
            params.push(Parameter::new(format!("layer{l}.weight"), glorot(fan_in, hidden, rng)));
            if cfg.model_kind == ModelKind::Ipgdn {
                params.push(Parameter::new(format!("layer{l}.bias"), Matrix::zeros(1, hidden)));
            }
            fan_in = hidden;
        }
        params.push(Parameter::new("head.weight", glorot(hidden, num_classes, rng)));
        params.push(Parameter::new("head.bias", Matrix::zeros(1, num_classes)));
        IpgdnModel {
            kind: cfg.model_kind,
            channels: cfg.channels,
            layers: cfg.layers,
            params,
        }
    }

    /// Rebuilds a model from parameters in the canonical order, checking
    /// names and shapes.
    pub fn from_parameters(kind: ModelKind, channels: usize, layers: usize, params: Vec<Parameter>) -> Result<Self> {
        let per_layer = if kind == ModelKind::Ipgdn { 2 } else { 1 };
        if params.len() != layers * per_layer + 2 {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters for {layers} {kind} layers, found {}",
                layers * per_layer + 2,
                params.len()
            )));
        }
        let mut expected = Vec::new();
        for l in 0..layers {
            expected.push(format!("layer{l}.weight"));
            if kind == ModelKind::Ipgdn {
                expected.push(format!("layer{l}.bias"));
            }
        }
        expected.push("head.weight".into());
        expected.push("head.bias".into());
        for (p, name) in params.iter().zip(&expected) {
            if &p.name != name {
                return Err(Error::Checkpoint(format!("expected parameter {name}, found {}", p.name)));
            }
        }
        let model = IpgdnModel {
            kind,
            channels,
            layers,
            params,
        };
        let mut width = model.params[0].value.rows();
        for l in 0..layers {
            let w = &model.weight(l).value;
            if w.rows() != width {
                return Err(Error::Checkpoint(format!("layer{l}.weight has {} rows, expected {width}", w.rows())));
            }
            width = w.cols();
            if kind == ModelKind::Ipgdn {
                DisentangleLayerParams::new(channels, w.clone(), model.params[2 * l + 1].value.clone())
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
            }
        }
        let head = &model.params[model.params.len() - 2].value;
        let bias = &model.params[model.params.len() - 1].value;
        if head.rows() != width || bias.shape() != (1, head.cols()) {
            return Err(Error::Checkpoint("head shapes do not match the last layer".into()));
        }
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_layers(&self) -> usize {
        self.layers
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn num_features(&self) -> usize {
        self.params[0].value.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.params[self.params.len() - 1].value.cols()
    }

    /// Width of the final hidden representation.
    pub fn representation_width(&self) -> usize {
        self.params[self.params.len() - 2].value.rows()
    }

    fn weight(&self, layer: usize) -> &Parameter {
        let per_layer = if self.kind == ModelKind::Ipgdn { 2 } else { 1 };
        &self.params[layer * per_layer]
    }

    /// Channel parameters of disentangle layer `l`; `None` for GCN layers.
    pub fn layer_params(&self, layer: usize) -> Option<DisentangleLayerParams> {
        if self.kind != ModelKind::Ipgdn || layer >= self.layers {
            return None;
        }
        DisentangleLayerParams::new(
            self.channels,
            self.params[2 * layer].value.clone(),
            self.params[2 * layer + 1].value.clone(),
        )
        .ok()
    }

    /// Records every parameter on the tape as a gradient-tracking leaf.
    pub fn register(&self, tape: &mut Tape) -> Vec<Tensor> {
        self.params.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    /// Eval-mode forward pass returning plain logits and the final
    /// representation.
    pub fn predict(&self, ctx: &GraphContext<'_>, cfg: &ModelConfig) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let handles: Vec<Tensor> = self.params.iter().map(|p| tape.constant(p.value.clone())).collect();
        // Eval mode draws nothing from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&mut tape, self, &handles, ctx, cfg, false, &mut rng)?;
        Ok((tape.value(out.logits).clone(), tape.value(out.representation).clone()))
    }
}

fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("length matches shape")
}

/// Graph-derived inputs shared by every forward pass of one run.
#[derive(Debug, Clone)]
pub struct GraphContext<'g> {
    pub graph: &'g Graph,
    pub routing: RoutingGraph,
    /// Dense normalized adjacency; only built for the GCN baseline.
    pub adjacency: Option<Matrix>,
}

impl<'g> GraphContext<'g> {
    pub fn new(graph: &'g Graph, kind: ModelKind) -> Self {
        GraphContext {
            graph,
            routing: RoutingGraph::from_graph(graph),
            adjacency: (kind == ModelKind::GcnBaseline).then(|| normalized_adjacency(graph).into_matrix()),
        }
    }

    /// Nodes the independence penalty sums over.
    pub fn hsic_nodes(&self, scope: HsicScope) -> Vec<usize> {
        match scope {
            HsicScope::Labeled => self.graph.splits().train.clone(),
            HsicScope::All => (0..self.graph.num_nodes()).collect(),
        }
    }
}

/// Tape handles produced by [`forward`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// Pre-softmax class scores, `n × C`.
    pub logits: Tensor,
    /// Final hidden representation before its dropout, `n × f_L`.
    pub representation: Tensor,
}

/// Runs all layers and the head. `params` are the tape handles of
/// `model.params()` in order.
pub fn forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    model: &IpgdnModel,
    params: &[Tensor],
    ctx: &GraphContext<'_>,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Result<ForwardOutput> {
    if params.len() != model.params.len() {
        return Err(Error::Validation(format!(
            "expected {} parameter handles, got {}",
            model.params.len(),
            params.len()
        )));
    }
    let graph = ctx.graph;
    if graph.num_features() != model.num_features() {
        return Err(Error::shape(
            "forward",
            graph.features().shape(),
            (model.num_features(), model.representation_width()),
        ));
    }
    let mut h = tape.constant(graph.features().clone());
    let mut representation = h;
    match model.kind {
        ModelKind::Ipgdn => {
            let settings = RoutingSettings {
                channels: model.channels,
                iterations: cfg.iterations,
                dropout: cfg.dropout,
                training,
            };
            for l in 0..model.layers {
                let out = disentangle_layer(tape, h, &ctx.routing, params[2 * l], params[2 * l + 1], settings, rng)?;
                representation = out.representation;
                h = out.output;
            }
        }
        ModelKind::GcnBaseline => {
            let adjacency = ctx
                .adjacency
                .as_ref()
                .ok_or_else(|| Error::Validation("GCN baseline needs the normalized adjacency".into()))?;
            let a = tape.constant(adjacency.clone());
            for &w in &params[..model.layers] {
                let out = gcn_layer(tape, h, a, w, true)?;
                representation = out;
                h = tape.dropout(out, cfg.dropout, training, rng)?;
            }
        }
    }
    let n = params.len();
    let logits = tape.matmul(h, params[n - 2])?;
    let logits = tape.add_row(logits, params[n - 1])?;
    Ok(ForwardOutput {
        logits,
        representation,
    })
}

/// `−Σ_{v ∈ mask} log softmax(logits)_{v, y_v}`.
pub fn cross_entropy(tape: &mut Tape, logits: Tensor, labels: &[Option<usize>], mask: &[usize]) -> Result<Tensor> {
    let mut coords = Vec::with_capacity(mask.len());
    for &v in mask {
        match labels.get(v) {
            Some(Some(c)) => coords.push((v, *c)),
            Some(None) => return Err(Error::Validation(format!("node {v} in the loss mask is unlabeled"))),
            None => return Err(Error::Validation(format!("node {v} in the loss mask does not exist"))),
        }
    }
    let log_probs = tape.log_softmax(logits);
    let picked = tape.pick(log_probs, &coords)?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0))
}

/// Scalar pieces of the joint objective.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Tensor,
    pub cross_entropy: Tensor,
    pub independence: Tensor,
}

/// Cross-entropy over the training nodes, plus `λ` times the independence
/// penalty, plus `weight_decay · Σ‖W‖²` over weight matrices.
pub fn total_loss(
    tape: &mut Tape,
    out: &ForwardOutput,
    model: &IpgdnModel,
    params: &[Tensor],
    ctx: &GraphContext<'_>,
    cfg: &ModelConfig,
) -> Result<LossParts> {
    let graph = ctx.graph;
    let ce = cross_entropy(tape, out.logits, graph.labels(), &graph.splits().train)?;
    let nodes = ctx.hsic_nodes(cfg.hsic_scope);
    let hsic = independence_loss(tape, out.representation, model.channels, &nodes)?;
    let mut total = ce;
    if cfg.lambda != 0.0 {
        let weighted = tape.scale(hsic, cfg.lambda);
        total = tape.add(total, weighted)?;
    }
    if cfg.weight_decay != 0.0 {
        for (p, &t) in model.params.iter().zip(params) {
            if p.is_weight() {
                let sq = tape.mul(t, t)?;
                let s = tape.sum(sq);
                let s = tape.scale(s, cfg.weight_decay);
                total = tape.add(total, s)?;
            }
        }
    }
    Ok(LossParts {
        total,
        cross_entropy: ce,
        independence: hsic,
    })
}

#[cfg(test)]
mod tests;
