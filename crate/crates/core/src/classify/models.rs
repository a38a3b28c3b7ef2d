//! Classifiers over feature vectors: one-vs-rest linear SVM, a one-hidden-layer
//! MLP built from the network layers, and 1-nearest-neighbour.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureSet;
use crate::error::{Error, Result};
use crate::network::{build_mlp, train, Network, TrainConfig};
use crate::tensor::Tensor;

pub trait Classifier {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn class_count(&self) -> usize;
    /// One score per class; the prediction is the highest, ties to the lowest class.
    fn scores(&self, x: &[f32]) -> Result<Vec<f64>>;

    fn predict(&self, x: &[f32]) -> Result<usize> {
        let s = self.scores(x)?;
        let mut best = 0;
        for (i, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

fn check_dim(x: &[f32], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::shape(format!(
            "feature width {} does not match model width {dim}",
            x.len()
        )));
    }
    Ok(())
}

fn distinct_classes(fs: &FeatureSet) -> usize {
    let mut seen = vec![false; fs.class_count];
    for &l in &fs.labels {
        seen[l] = true;
    }
    seen.iter().filter(|&&s| s).count()
}

fn require_two_classes(fs: &FeatureSet) -> Result<()> {
    fs.validate()?;
    if distinct_classes(fs) < 2 {
        return Err(Error::invalid("training features cover fewer than 2 classes"));
    }
    Ok(())
}

/// One-vs-rest linear SVMs. `weights[c]` holds the class-`c` weight vector
/// followed by its bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub c: f64,
    pub weights: Vec<Vec<f64>>,
}

impl Classifier for LinearSvm {
    fn name(&self) -> &'static str {
        "SVM (linear)"
    }

    fn dim(&self) -> usize {
        self.weights[0].len() - 1
    }

    fn class_count(&self) -> usize {
        self.weights.len()
    }

    fn scores(&self, x: &[f32]) -> Result<Vec<f64>> {
        check_dim(x, self.dim())?;
        Ok(self
            .weights
            .iter()
            .map(|w| w[..x.len()].iter().zip(x).map(|(a, &b)| a * b as f64).sum::<f64>() + w[x.len()])
            .collect())
    }
}

/// Minimises `0.5 |w|^2 + C * mean(hinge)` per class by stochastic
/// subgradient steps of size `1/t`, one seeded pass order per epoch. The bias
/// is an extra constant-1 feature. The returned weights average the iterates
/// of the second half of training.
pub fn train_linear_svm(fs: &FeatureSet, c: f64, epochs: usize, seed: u64) -> Result<LinearSvm> {
    require_two_classes(fs)?;
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("SVM C must be finite and >= 0, got {c}")));
    }
    if epochs == 0 {
        return Err(Error::invalid("SVM needs at least one epoch"));
    }
    let (k, d) = (fs.class_count, fs.dim());
    let mut w = vec![vec![0.0f64; d + 1]; k];
    let mut avg = vec![vec![0.0f64; d + 1]; k];
    let mut averaged = 0u64;
    let mut order: Vec<usize> = (0..fs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0f64; d + 1];
    x[d] = 1.0;
    let mut t = 0u64;
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / t as f64;
            for (xv, &f) in x.iter_mut().zip(&fs.rows[i]) {
                *xv = f as f64;
            }
            for (class, wc) in w.iter_mut().enumerate() {
                let y = if fs.labels[i] == class { 1.0 } else { -1.0 };
                let margin = y * wc.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                let shrink = 1.0 - eta;
                if margin < 1.0 {
                    let step = eta * c * y;
                    for (a, b) in wc.iter_mut().zip(&x) {
                        *a = shrink * *a + step * b;
                    }
                } else {
                    for a in wc.iter_mut() {
                        *a *= shrink;
                    }
                }
            }
            if 2 * epoch >= epochs.saturating_sub(1) {
                averaged += 1;
                let f = 1.0 / averaged as f64;
                for (ac, wc) in avg.iter_mut().zip(&w) {
                    for (a, b) in ac.iter_mut().zip(wc) {
                        *a += (b - *a) * f;
                    }
                }
            }
        }
    }
    Ok(LinearSvm { c, weights: avg })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_width: usize,
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_width: 256,
            epochs: 50,
            lr: 0.1,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub net: Network,
    pub final_loss: f64,
}

impl Classifier for Mlp {
    fn name(&self) -> &'static str {
        "MLP"
    }

    fn dim(&self) -> usize {
        self.net.spec.input.channels
    }

    fn class_count(&self) -> usize {
        self.net.spec.class_count
    }

    fn scores(&self, x: &[f32]) -> Result<Vec<f64>> {
        check_dim(x, self.dim())?;
        let t = Tensor::new(vec![x.len(), 1, 1], x.to_vec())?;
        Ok(self
            .net
            .forward(&t)?
            .probabilities()
            .iter()
            .map(|&p| p as f64)
            .collect())
    }
}

fn as_examples(fs: &FeatureSet) -> Result<Vec<(Tensor, usize)>> {
    fs.rows
        .iter()
        .zip(&fs.labels)
        .map(|(r, &l)| Ok((Tensor::new(vec![r.len(), 1, 1], r.clone())?, l)))
        .collect()
}

/// `features -> hidden ReLU -> softmax`, trained by minibatch SGD.
pub fn train_mlp(fs: &FeatureSet, config: &MlpConfig) -> Result<Mlp> {
    fs.validate()?;
    if config.hidden_width == 0 {
        return Err(Error::invalid("MLP hidden width must be at least 1"));
    }
    let spec = build_mlp(fs.dim(), config.hidden_width, fs.class_count);
    let mut net = Network::init(spec, config.seed)?;
    let data = as_examples(fs)?;
    let history = train(
        &mut net,
        &data,
        &TrainConfig {
            epochs: config.epochs,
            batch_size: config.batch_size,
            base_lr: config.lr,
            lr_decay: 1.0,
            seed: config.seed,
            threads: 1,
        },
        |_, _| Ok(true),
    )?;
    Ok(Mlp {
        net,
        final_loss: history.last().map_or(f64::NAN, |h| h.mean_loss),
    })
}

/// Euclidean 1-nearest-neighbour over the stored training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct NearestNeighbour {
    rows: Vec<Vec<f32>>,
    labels: Vec<usize>,
    class_count: usize,
}

pub fn train_nearest_neighbour(fs: &FeatureSet) -> Result<NearestNeighbour> {
    fs.validate()?;
    if fs.is_empty() {
        return Err(Error::invalid("nearest neighbour needs at least one training row"));
    }
    Ok(NearestNeighbour {
        rows: fs.rows.clone(),
        labels: fs.labels.clone(),
        class_count: fs.class_count,
    })
}

impl Classifier for NearestNeighbour {
    fn name(&self) -> &'static str {
        "NN (1-nearest)"
    }

    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    /// Negated distance to the closest training row of each class.
    fn scores(&self, x: &[f32]) -> Result<Vec<f64>> {
        check_dim(x, self.dim())?;
        let mut best = vec![f64::NEG_INFINITY; self.class_count];
        for (r, &l) in self.rows.iter().zip(&self.labels) {
            let d2: f64 = r.iter().zip(x).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            best[l] = best[l].max(-d2.sqrt());
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn set(rows: Vec<Vec<f32>>, labels: Vec<usize>, classes: usize) -> FeatureSet {
        FeatureSet {
            layer: "toy".into(),
            manifest_digest: String::new(),
            l2_normalized: false,
            class_count: classes,
            ids: (0..rows.len()).map(|i| i.to_string()).collect(),
            labels,
            rows,
        }
    }

    fn separable(n: usize, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        while rows.len() < n {
            let (x, y): (f32, f32) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let s = x + 0.5 * y - 0.1;
            if s.abs() < 0.15 {
                continue;
            }
            rows.push(vec![x, y]);
            labels.push((s > 0.0) as usize);
        }
        set(rows, labels, 2)
    }

    fn train_accuracy(model: &dyn Classifier, fs: &FeatureSet) -> f64 {
        let ok = fs
            .rows
            .iter()
            .zip(&fs.labels)
            .filter(|(r, &l)| model.predict(r).unwrap() == l)
            .count();
        ok as f64 / fs.len() as f64
    }

    #[test]
    fn svm_separates_toy_set() {
        let fs = separable(200, 1);
        let svm = train_linear_svm(&fs, 100.0, 100, 4).unwrap();
        assert_eq!(train_accuracy(&svm, &fs), 1.0);
    }

    #[test]
    fn svm_duplicated_data_same_direction() {
        let fs = separable(60, 2);
        let mut dup = fs.clone();
        dup.rows.extend(fs.rows.clone());
        dup.labels.extend(fs.labels.clone());
        dup.ids = (0..dup.rows.len()).map(|i| i.to_string()).collect();
        let a = train_linear_svm(&fs, 1.0, 400, 5).unwrap();
        let b = train_linear_svm(&dup, 1.0, 200, 6).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            let dot: f64 = wa.iter().zip(wb).map(|(x, y)| x * y).sum();
            let na: f64 = wa.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = wb.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(1.0 - dot / (na * nb) < 1e-3, "cosine {}", dot / (na * nb));
        }
    }

    #[test]
    fn svm_zero_c_gives_zero_weights() {
        let fs = separable(20, 3);
        let svm = train_linear_svm(&fs, 0.0, 5, 0).unwrap();
        assert!(svm.weights.iter().flatten().all(|&w| w == 0.0));
    }

    #[test]
    fn svm_rejects_single_class_and_is_deterministic() {
        let fs = set(vec![vec![1.0], vec![2.0]], vec![0, 0], 2);
        assert!(train_linear_svm(&fs, 1.0, 3, 0).is_err());
        let fs = separable(30, 9);
        assert_eq!(
            train_linear_svm(&fs, 1.0, 5, 3).unwrap(),
            train_linear_svm(&fs, 1.0, 5, 3).unwrap()
        );
    }

    #[test]
    fn svm_prediction_invariant_to_score_scaling() {
        let fs = separable(40, 4);
        let svm = train_linear_svm(&fs, 1.0, 10, 1).unwrap();
        let mut scaled = svm.clone();
        for w in scaled.weights.iter_mut().flatten() {
            *w *= 3.7;
        }
        for r in &fs.rows {
            assert_eq!(svm.predict(r).unwrap(), scaled.predict(r).unwrap());
        }
    }

    #[test]
    fn mlp_learns_xor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let (a, b) = ((i % 2) as f32, ((i / 2) % 2) as f32);
            rows.push(vec![a + rng.random_range(-0.1..0.1), b + rng.random_range(-0.1..0.1)]);
            labels.push(((i % 2) ^ ((i / 2) % 2)) as usize);
        }
        let fs = set(rows, labels, 2);
        let cfg = MlpConfig {
            hidden_width: 8,
            epochs: 2000,
            lr: 0.1,
            batch_size: 8,
            seed: 3,
        };
        let mlp = train_mlp(&fs, &cfg).unwrap();
        assert!(train_accuracy(&mlp, &fs) >= 0.95);
        let again = train_mlp(&fs, &cfg).unwrap();
        assert_eq!(mlp.net.params, again.net.params);
    }

    #[test]
    fn mlp_memorises_single_example() {
        let single = set(vec![vec![0.3, -0.7, 0.1]], vec![1], 2);
        let mlp = train_mlp(
            &single,
            &MlpConfig {
                hidden_width: 4,
                epochs: 500,
                lr: 0.5,
                batch_size: 1,
                seed: 0,
            },
        )
        .unwrap();
        let x = Tensor::new(vec![3, 1, 1], single.rows[0].clone()).unwrap();
        let loss = mlp.net.loss(&mlp.net.forward(&x).unwrap(), 1).unwrap();
        assert!(loss < 1e-3, "loss {loss}");
        assert!(train_mlp(
            &single,
            &MlpConfig {
                hidden_width: 0,
                ..MlpConfig::default()
            }
        )
        .is_err());
    }

    #[test]
    fn nearest_neighbour_recalls_training_rows() {
        let fs = separable(50, 8);
        let nn = train_nearest_neighbour(&fs).unwrap();
        assert_eq!(train_accuracy(&nn, &fs), 1.0);
        assert!(nn.scores(&[1.0]).is_err());
    }
}
