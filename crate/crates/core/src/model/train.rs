use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{forward, total_loss, Adam, GraphContext, IpgdnModel, ModelConfig};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::graphio::Graph;
use crate::tensor::{Matrix, Tape};

/// Losses and validation accuracy of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total_loss: f64,
    pub cross_entropy: f64,
    pub hsic: f64,
    pub val_acc: f64,
}

/// Per-epoch history of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Full-batch training with Adam and early stopping on validation accuracy.
///
/// Each epoch runs a training-mode forward pass, the joint loss, one
/// backward sweep and one Adam step, then scores the validation nodes in
/// eval mode. Training stops after `cfg.epochs` or when `cfg.patience`
/// epochs pass without a strictly better validation accuracy; the best
/// parameters are restored. With an empty validation split the last
/// parameters are kept.
pub fn train(graph: &Graph, cfg: &ModelConfig) -> Result<(IpgdnModel, TrainTrace)> {
    cfg.validate()?;
    if graph.splits().train.is_empty() {
        return Err(Error::Validation("the training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = IpgdnModel::init(cfg, graph.num_features(), graph.num_classes(), &mut rng);
    let ctx = GraphContext::new(graph, cfg.model_kind);
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|p| p.value.shape()).collect();
    let mut adam = Adam::new(cfg.lr, &shapes);

    let val = &graph.splits().val;
    let val_truth: Vec<usize> = val.iter().map(|&v| graph.label(v).expect("split nodes are labeled")).collect();
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, usize, Vec<Matrix>)> = None;

    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let handles = model.register(&mut tape);
        let out = forward(&mut tape, &model, &handles, &ctx, cfg, true, &mut rng)?;
        let loss = total_loss(&mut tape, &out, &model, &handles, &ctx, cfg)?;
        let total = tape.value(loss.total).get(0, 0);
        if !total.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("loss is {total}"),
            });
        }
        tape.backward(loss.total)?;
        let grads: Vec<Matrix> = handles
            .iter()
            .zip(model.params())
            .map(|(&h, p)| {
                tape.grad(h)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(p.value.rows(), p.value.cols()))
            })
            .collect();
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training {
                epoch,
                msg: "non-finite gradient".into(),
            });
        }
        let ce = tape.value(loss.cross_entropy).get(0, 0);
        let hsic = tape.value(loss.independence).get(0, 0);
        drop(tape);

        let mut values: Vec<&mut Matrix> = model.params_mut().iter_mut().map(|p| &mut p.value).collect();
        adam.step(&mut values, &grads);

        let val_acc = if val.is_empty() {
            0.0
        } else {
            let (logits, _) = model.predict(&ctx, cfg)?;
            let pred = logits.select_rows(val).argmax_rows();
            accuracy(&pred, &val_truth)?
        };
        trace.epochs.push(EpochRecord {
            epoch,
            total_loss: total,
            cross_entropy: ce,
            hsic,
            val_acc,
        });

        if val.is_empty() {
            continue;
        }
        let improved = best.as_ref().is_none_or(|(acc, _, _)| val_acc > *acc);
        if improved {
            let snapshot = model.params().iter().map(|p| p.value.clone()).collect();
            best = Some((val_acc, epoch, snapshot));
        } else if let Some((_, best_epoch, _)) = &best {
            if epoch - best_epoch >= cfg.patience {
                break;
            }
        }
    }

    match best {
        Some((acc, epoch, snapshot)) => {
            for (p, v) in model.params_mut().iter_mut().zip(snapshot) {
                p.value = v;
            }
            trace.best_epoch = epoch;
            trace.best_val_acc = acc;
        }
        None => {
            trace.best_epoch = trace.epochs.len();
            trace.best_val_acc = trace.epochs.last().map_or(0.0, |r| r.val_acc);
        }
    }
    Ok((model, trace))
}
