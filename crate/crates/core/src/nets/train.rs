use serde::{Deserialize, Serialize};

use super::FactoredNetwork;
use crate::error::{Error, Result};
use crate::numcore::rng::streams;
use crate::numcore::{grad, Matrix, RngStream};
use crate::worlds::{LabeledDataset, TargetKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Stop once full-pass train accuracy reaches this value.
    #[serde(default)]
    pub early_stop_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            weight_decay: 0.0,
            early_stop_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(format!("train config: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be >= 0");
        }
        if let Some(a) = self.early_stop_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return bad("early_stop_accuracy must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Train accuracy for classification outputs.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
    pub stopped_early: bool,
}

impl TrainTrace {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.accuracy)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Minibatch SGD with a fixed learning rate and decoupled weight decay.
///
/// Classification outputs use softmax cross-entropy against the one-hot
/// targets; regression outputs use squared error.
pub fn train(net: &mut FactoredNetwork, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    if !net.is_trainable() {
        return Err(Error::InvalidSpec("planted networks are not trainable".into()));
    }
    if data.inputs.cols() != net.input_dim() || data.targets.cols() != net.output_kind().dim() {
        return Err(Error::shape(format!(
            "dataset {}→{} does not fit network {}→{}",
            data.inputs.cols(),
            data.targets.cols(),
            net.input_dim(),
            net.output_kind().dim()
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidSpec("cannot train on an empty dataset".into()));
    }
    let labels: Option<Vec<usize>> = match net.output_kind() {
        TargetKind::Classes(_) => Some(
            (0..data.targets.rows())
                .map(|r| data.targets.argmax_row(r))
                .collect(),
        ),
        TargetKind::Values(_) => None,
    };
    let mut rng = RngStream::new(cfg.seed, streams::SHUFFLE);
    let mut trace = TrainTrace::default();
    let n = data.len();
    let n_layers = net.n_layers();

    for epoch in 0..cfg.epochs {
        let order = rng.permutation(n);
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.inputs.select_rows(chunk);
            let batch = chunk.len();
            let arch_net = &*net;
            let step = grad(arch_net.params(), |tape, p| {
                let mut h = tape.constant(x.clone());
                for l in 1..=n_layers {
                    h = arch_net.layer_step(tape, p, l, h, batch)?;
                }
                match &labels {
                    Some(all) => {
                        let y: Vec<usize> = chunk.iter().map(|&i| all[i]).collect();
                        tape.cross_entropy(h, &y)
                    }
                    None => tape.squared_error(h, &data.targets.select_rows(chunk)),
                }
            });
            let grads = match step {
                Ok((loss, g)) if loss.is_finite() => g,
                Ok(_) | Err(Error::NumericOverflow { .. }) => {
                    return Err(Error::TrainingDiverged { epoch })
                }
                Err(e) => return Err(e),
            };
            for (p, g) in net.params_mut().iter_mut().zip(&grads) {
                if cfg.weight_decay > 0.0 {
                    let decay = p.scale(cfg.weight_decay);
                    p.add_assign_scaled(&decay, -cfg.learning_rate);
                }
                p.add_assign_scaled(g, -cfg.learning_rate);
            }
        }
        let stats = evaluate(net, data, labels.as_deref(), epoch)?;
        let done = matches!((cfg.early_stop_accuracy, stats.accuracy), (Some(t), Some(a)) if a >= t);
        trace.epochs.push(stats);
        if done {
            trace.stopped_early = true;
            break;
        }
    }
    Ok(trace)
}

fn evaluate(
    net: &FactoredNetwork,
    data: &LabeledDataset,
    labels: Option<&[usize]>,
    epoch: usize,
) -> Result<EpochStats> {
    let out = match net.forward(&data.inputs) {
        Ok(o) => o,
        Err(Error::NumericOverflow { .. }) => return Err(Error::TrainingDiverged { epoch }),
        Err(e) => return Err(e),
    };
    let n = data.len() as f64;
    let (loss, accuracy) = match labels {
        Some(labels) => {
            let probs = crate::numcore::tape::softmax_rows(&out);
            let loss = labels
                .iter()
                .enumerate()
                .map(|(r, &l)| -probs[(r, l)].max(f64::MIN_POSITIVE).ln())
                .sum::<f64>()
                / n;
            let correct = labels
                .iter()
                .enumerate()
                .filter(|(r, &l)| out.argmax_row(*r) == l)
                .count();
            (loss, Some(correct as f64 / n))
        }
        None => (mean_sq_rows(&out, &data.targets)?, None),
    };
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch });
    }
    Ok(EpochStats {
        epoch,
        loss,
        accuracy,
    })
}

fn mean_sq_rows(a: &Matrix, b: &Matrix) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_sq() / a.rows().max(1) as f64)
}
