//! Layer composition, forward passes with cached activations, backprop, SGD
//! with per-layer learning-rate multipliers, and checkpoints.

mod checkpoint;
mod presets;
mod spec;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use presets::{
    build_desk_network, build_desk_network_with_widths, build_mlp, build_paper_network,
    build_paper_network_with_classes, DESK_INPUT_SIDE, PAPER_CLASS_COUNT, PAPER_INPUT_SIDE,
};
pub use spec::{InputExtent, LayerKind, LayerSpec, NetworkSpec, DEFAULT_INIT_STD};
pub use train::{train, EpochStats, ExampleSource, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_bias_grad, conv2d_forward, conv2d_transpose, conv2d_weight_grad, fc_forward, fc_transpose, fc_weight_grad,
    log_softmax, maxpool_forward, relu, relu_backward, softmax, unpool, SwitchMap, Tensor,
};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Parameters (or gradients) for every layer; `None` for layers without any.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub layers: Vec<Option<LayerParams>>,
}

pub type Gradients = Params;

fn init_layer(layer: &LayerSpec, input: &[usize], seed: u64, index: usize) -> Result<Option<LayerParams>> {
    let Some((w_shape, b_len)) = spec::param_shapes(layer, input) else {
        return Ok(None);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let std = layer.init_std;
    let weights = if std > 0.0 {
        let normal = Normal::new(0.0f32, std)
            .map_err(|e| Error::invalid(format!("layer {}: init std {std}: {e}", layer.name)))?;
        Tensor::from_fn(&w_shape, |_| normal.sample(&mut rng))
    } else {
        Tensor::zeros(&w_shape)
    };
    Ok(Some(LayerParams {
        weights,
        bias: Tensor::zeros(&[b_len]),
    }))
}

impl Params {
    /// Seeded zero-mean Gaussian weights (per-layer std) and zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Params> {
        let shapes = spec.output_shapes()?;
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| init_layer(layer, &spec.input_shape_of(i, &shapes), seed, i))
            .collect::<Result<_>>()?;
        Ok(Params { layers })
    }

    pub fn zeros(spec: &NetworkSpec) -> Result<Params> {
        let mut p = Params::init(spec, 0)?;
        p.scale(0.0);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Params {
        let mut p = self.clone();
        p.scale(0.0);
        p
    }

    pub fn scale(&mut self, alpha: f32) {
        for lp in self.layers.iter_mut().flatten() {
            lp.weights.scale(alpha);
            lp.bias.scale(alpha);
        }
    }

    pub fn add_assign(&mut self, other: &Params) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("parameter sets of different depth"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    a.weights.axpy(1.0, &b.weights)?;
                    a.bias.axpy(1.0, &b.bias)?;
                }
                (None, None) => {}
                _ => return Err(Error::shape("parameter sets with different trainable layers")),
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|lp| lp.weights.is_finite() && lp.bias.is_finite())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flatten().flat_map(|lp| [&lp.weights, &lp.bias])
    }

    pub fn len(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.output_shapes()?;
        if self.layers.len() != spec.layers.len() {
            return Err(Error::shape(format!(
                "{} parameter slots for {} layers",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (layer, lp)) in spec.layers.iter().zip(&self.layers).enumerate() {
            let expected = spec::param_shapes(layer, &spec.input_shape_of(i, &shapes));
            match (expected, lp) {
                (None, None) => {}
                (Some((w, b)), Some(lp)) if lp.weights.shape() == w.as_slice() && lp.bias.shape() == [b] => {}
                (expected, got) => {
                    return Err(Error::shape(format!(
                        "layer {}: expected parameters {:?}, got {:?}",
                        layer.name,
                        expected,
                        got.as_ref().map(|g| (g.weights.shape().to_vec(), g.bias.len()))
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Cached activations of one forward pass.
///
/// `outputs[l]` is the output of layer `l`; `switches[l]` is set for pooling
/// layers and `dropout_masks[l]` for dropout layers run in training mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Tensor,
    pub outputs: Vec<Tensor>,
    pub switches: Vec<Option<SwitchMap>>,
    pub dropout_masks: Vec<Option<Tensor>>,
}

impl ForwardTrace {
    /// Input of layer `index`.
    pub fn layer_input(&self, index: usize) -> &Tensor {
        if index == 0 {
            &self.input
        } else {
            &self.outputs[index - 1]
        }
    }

    pub fn probabilities(&self) -> &[f32] {
        self.outputs.last().expect("non-empty trace").data()
    }

    pub fn predicted_class(&self) -> usize {
        argmax(self.probabilities())
    }
}

pub(crate) fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Params,
}

impl Network {
    pub fn new(spec: NetworkSpec, params: Params) -> Result<Network> {
        params.check_against(&spec)?;
        Ok(Network { spec, params })
    }

    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Network> {
        let params = Params::init(&spec, seed)?;
        Ok(Network { spec, params })
    }

    pub fn forward(&self, image: &Tensor) -> Result<ForwardTrace> {
        self.forward_impl(image, None)
    }

    /// Forward pass with dropout active, masks drawn from `rng`.
    pub fn forward_train(&self, image: &Tensor, rng: &mut ChaCha8Rng) -> Result<ForwardTrace> {
        self.forward_impl(image, Some(rng))
    }

    fn forward_impl(&self, image: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<ForwardTrace> {
        let input_shape = self.spec.input.shape();
        if image.shape() != input_shape {
            return Err(Error::shape(format!(
                "image {:?} does not match network input {:?}",
                image.shape(),
                input_shape
            )));
        }
        let n = self.spec.layers.len();
        let mut outputs: Vec<Tensor> = Vec::with_capacity(n);
        let mut switches = vec![None; n];
        let mut dropout_masks = vec![None; n];
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let x = if i == 0 { image } else { &outputs[i - 1] };
            let y = match layer.kind {
                LayerKind::Conv { .. } => {
                    let lp = self.params.layers[i].as_ref().expect("conv params");
                    conv2d_forward(
                        x,
                        &lp.weights,
                        Some(lp.bias.data()),
                        layer.conv_geometry().expect("conv"),
                    )?
                }
                LayerKind::Relu => relu(x),
                LayerKind::MaxPool { window, stride } => {
                    let (p, s) = maxpool_forward(x, window, stride)?;
                    switches[i] = Some(s);
                    p
                }
                LayerKind::Fc { .. } => {
                    let lp = self.params.layers[i].as_ref().expect("fc params");
                    Tensor::vector(fc_forward(x.data(), &lp.weights, lp.bias.data())?)
                }
                LayerKind::Dropout { rate } => match rng.as_deref_mut() {
                    Some(rng) if rate > 0.0 => {
                        let keep = 1.0 / (1.0 - rate);
                        let mask = Tensor::from_fn(x.shape(), |_| if rng.random::<f32>() < rate { 0.0 } else { keep });
                        let y = Tensor::new(
                            x.shape().to_vec(),
                            x.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect(),
                        )?;
                        dropout_masks[i] = Some(mask);
                        y
                    }
                    _ => x.clone(),
                },
                LayerKind::Softmax => Tensor::vector(softmax(x.data())),
            };
            outputs.push(y);
        }
        Ok(ForwardTrace {
            input: image.clone(),
            outputs,
            switches,
            dropout_masks,
        })
    }

    /// Softmax cross-entropy loss of a trace against `label` (0-based).
    pub fn loss(&self, trace: &ForwardTrace, label: usize) -> Result<f64> {
        self.check_label(label)?;
        let logits = trace.layer_input(self.spec.layers.len() - 1);
        Ok(-log_softmax(logits.data())[label])
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.spec.class_count {
            return Err(Error::invalid(format!(
                "label {label} outside 0..{}",
                self.spec.class_count
            )));
        }
        Ok(())
    }

    /// Cross-entropy loss and its gradient with respect to every parameter.
    pub fn backward(&self, trace: &ForwardTrace, label: usize) -> Result<(f64, Gradients)> {
        self.check_label(label)?;
        let n = self.spec.layers.len();
        if trace.outputs.len() != n {
            return Err(Error::shape(format!(
                "trace has {} entries for {n} layers",
                trace.outputs.len()
            )));
        }
        let loss = self.loss(trace, label)?;
        let mut grads = Params { layers: vec![None; n] };
        // d loss / d logits = p - onehot.
        let mut g = trace.outputs[n - 1].clone();
        g.data_mut()[label] -= 1.0;
        for i in (0..n - 1).rev() {
            let layer = &self.spec.layers[i];
            let x = trace.layer_input(i);
            g = match layer.kind {
                LayerKind::Conv { .. } => {
                    let lp = self.params.layers[i].as_ref().expect("conv params");
                    let geom = layer.conv_geometry().expect("conv");
                    let (_, h, w) = x.dims3()?;
                    grads.layers[i] = Some(LayerParams {
                        weights: conv2d_weight_grad(x, &g, lp.weights.shape(), geom)?,
                        bias: Tensor::vector(conv2d_bias_grad(&g)?),
                    });
                    if i == 0 {
                        break;
                    }
                    conv2d_transpose(&g, &lp.weights, (h, w), geom)?
                }
                LayerKind::Relu => relu_backward(x, &g)?,
                LayerKind::MaxPool { .. } => {
                    let s = trace.switches[i]
                        .as_ref()
                        .ok_or_else(|| Error::invalid(format!("trace lacks switches for {}", layer.name)))?;
                    unpool(&g, s, x.shape())?
                }
                LayerKind::Fc { .. } => {
                    let lp = self.params.layers[i].as_ref().expect("fc params");
                    grads.layers[i] = Some(LayerParams {
                        weights: fc_weight_grad(x.data(), g.data()),
                        bias: g.clone(),
                    });
                    if i == 0 {
                        break;
                    }
                    Tensor::new(x.shape().to_vec(), fc_transpose(g.data(), &lp.weights)?)?
                }
                LayerKind::Dropout { .. } => match &trace.dropout_masks[i] {
                    Some(mask) => Tensor::new(
                        g.shape().to_vec(),
                        g.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect(),
                    )?,
                    None => g,
                },
                LayerKind::Softmax => unreachable!("softmax is validated to be last"),
            };
        }
        for (i, layer) in self.spec.layers.iter().enumerate() {
            if grads.layers[i].is_none() && layer.kind.is_trainable() {
                grads.layers[i] = self.params.layers[i].as_ref().map(|lp| LayerParams {
                    weights: Tensor::zeros(lp.weights.shape()),
                    bias: Tensor::zeros(lp.bias.shape()),
                });
            }
        }
        Ok((loss, grads))
    }

    /// One SGD update: `w -= base_lr * lr_mult_weights * grad` and likewise
    /// for biases. A non-finite gradient aborts before anything is changed.
    pub fn sgd_step(&mut self, grads: &Gradients, base_lr: f32) -> Result<()> {
        if grads.layers.len() != self.params.layers.len() {
            return Err(Error::shape("gradient depth does not match network"));
        }
        for (layer, g) in self.spec.layers.iter().zip(&grads.layers) {
            if let Some(g) = g {
                if !g.weights.is_finite() || !g.bias.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "gradient of layer {} contains NaN or infinity; step aborted",
                        layer.name
                    )));
                }
            }
        }
        for ((layer, p), g) in self
            .spec
            .layers
            .iter()
            .zip(self.params.layers.iter_mut())
            .zip(&grads.layers)
        {
            match (p, g) {
                (Some(p), Some(g)) => {
                    p.weights.axpy(-base_lr * layer.lr_mult_weights, &g.weights)?;
                    p.bias.axpy(-base_lr * layer.lr_mult_bias, &g.bias)?;
                }
                (None, None) => {}
                _ => {
                    return Err(Error::shape(format!(
                        "layer {}: gradient presence does not match parameters",
                        layer.name
                    )))
                }
            }
        }
        Ok(())
    }

    /// Replaces the final fc layer with a freshly initialised one of
    /// `new_class_count` units. Every other parameter is kept bit-exactly.
    pub fn replace_head(&mut self, new_class_count: usize, seed: u64) -> Result<()> {
        if new_class_count < 2 {
            return Err(Error::invalid(format!(
                "new class count {new_class_count} must be at least 2"
            )));
        }
        let n = self.spec.layers.len();
        let head = n.checked_sub(2).filter(|&i| {
            matches!(self.spec.layers[i].kind, LayerKind::Fc { .. })
                && matches!(self.spec.layers[n - 1].kind, LayerKind::Softmax)
        });
        let Some(head) = head else {
            return Err(Error::invalid("network does not end in fc + softmax"));
        };
        let mut spec = self.spec.clone();
        spec.layers[head].kind = LayerKind::Fc { units: new_class_count };
        spec.class_count = new_class_count;
        let shapes = spec.output_shapes()?;
        let fresh = init_layer(&spec.layers[head], &spec.input_shape_of(head, &shapes), seed, head)?;
        self.spec = spec;
        self.params.layers[head] = fresh;
        Ok(())
    }

    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        self.spec.output_shapes()
    }

    /// Sorted probabilities are not needed; prediction is the argmax class.
    pub fn predict(&self, image: &Tensor) -> Result<usize> {
        Ok(self.forward(image)?.predicted_class())
    }
}
