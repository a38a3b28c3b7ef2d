//! Mini-batch SGD loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Gradients, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Indexed supply of `(image, 0-based label)` pairs.
pub trait ExampleSource: Sync {
    fn len(&self) -> usize;
    fn get(&self, index: usize) -> Result<(Tensor, usize)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ExampleSource for [(Tensor, usize)] {
    fn len(&self) -> usize {
        <[(Tensor, usize)]>::len(self)
    }

    fn get(&self, index: usize) -> Result<(Tensor, usize)> {
        Ok(self[index].clone())
    }
}

impl ExampleSource for Vec<(Tensor, usize)> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, index: usize) -> Result<(Tensor, usize)> {
        Ok(self[index].clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f32,
    /// Multiplies the base rate after every epoch.
    pub lr_decay: f32,
    pub seed: u64,
    /// Worker threads for per-example gradients. Results do not depend on it:
    /// gradients are reduced in example order.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            base_lr: 0.01,
            lr_decay: 1.0,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub learning_rate: f32,
}

fn example_gradient(
    net: &Network,
    data: &(impl ExampleSource + ?Sized),
    index: usize,
    seed: u64,
    step: u64,
) -> Result<(f64, bool, Gradients)> {
    let (image, label) = data.get(index)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d20b);
    rng.set_stream(step.wrapping_mul(1 << 20).wrapping_add(index as u64));
    let trace = net.forward_train(&image, &mut rng)?;
    let correct = trace.predicted_class() == label;
    let (loss, grads) = net.backward(&trace, label)?;
    Ok((loss, correct, grads))
}

/// Trains `net` in place. `on_epoch` runs after every epoch and may stop
/// training early by returning `false`.
pub fn train(
    net: &mut Network,
    data: &(impl ExampleSource + ?Sized),
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&Network, &EpochStats) -> Result<bool>,
) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if config.batch_size == 0 || config.threads == 0 {
        return Err(Error::invalid("batch size and thread count must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut lr = config.base_lr;
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let frozen: &Network = net;
            let results: Vec<Result<(f64, bool, Gradients)>> = if config.threads == 1 {
                batch
                    .iter()
                    .map(|&i| example_gradient(frozen, data, i, config.seed, step))
                    .collect()
            } else {
                pool.install(|| {
                    batch
                        .par_iter()
                        .map(|&i| example_gradient(frozen, data, i, config.seed, step))
                        .collect()
                })
            };
            let mut total: Option<Gradients> = None;
            for r in results {
                let (loss, ok, g) = r?;
                loss_sum += loss;
                correct += ok as usize;
                match total.as_mut() {
                    None => total = Some(g),
                    Some(t) => t.add_assign(&g)?,
                }
            }
            let mut total = total.expect("non-empty batch");
            total.scale(1.0 / batch.len() as f32);
            net.sgd_step(&total, lr)?;
            step += 1;
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            learning_rate: lr,
        };
        log::info!(
            "epoch {} loss {:.4} train acc {:.3} lr {}",
            stats.epoch,
            stats.mean_loss,
            stats.train_accuracy,
            stats.learning_rate
        );
        history.push(stats);
        if !on_epoch(net, history.last().expect("just pushed"))? {
            break;
        }
        lr *= config.lr_decay;
    }
    Ok(history)
}
