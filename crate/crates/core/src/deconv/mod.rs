//! Deconvnet projection of a layer's activations back to pixel space.
//!
//! A layer's activations are masked to the `S` entries of largest absolute
//! value and pushed down the network: every conv layer applies the transpose
//! of its own kernels (no bias), every pooling layer unpools through the
//! switches recorded on the way up, and every ReLU rectifies the descending
//! signal.

mod render;

pub use render::{normalize_to_rgb8, render_visualisation, sidecar_lines, RenderedVisualisation, VisRequest};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::{ForwardTrace, LayerKind, Network, NetworkSpec};
use crate::tensor::{conv2d_transpose, relu, relu_backward, unpool, Tensor};

/// How many activations survive the mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SMode {
    Count(usize),
    All,
}

impl fmt::Display for SMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SMode::Count(s) => write!(f, "{s}"),
            SMode::All => f.write_str("all"),
        }
    }
}

impl FromStr for SMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<SMode> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(SMode::All);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(Error::invalid(format!(
                "S must be a positive integer or `all`, got `{s}`"
            ))),
            Ok(n) => Ok(SMode::Count(n)),
        }
    }
}

/// Whether `S` ranks activations over the whole layer or within each map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MaskScope {
    #[default]
    AcrossMaps,
    PerMap,
}

/// Treatment of ReLU layers on the way down.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReluRule {
    /// Rectify the descending signal itself.
    #[default]
    Descending,
    /// Gate the descending signal by the forward activation's sign.
    ForwardGate,
}

impl fmt::Display for ReluRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReluRule::Descending => "descending",
            ReluRule::ForwardGate => "forward-gate",
        })
    }
}

impl fmt::Display for MaskScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskScope::AcrossMaps => "across-maps",
            MaskScope::PerMap => "per-map",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeptActivation {
    pub flat: usize,
    pub channel: usize,
    pub row: usize,
    pub col: usize,
    pub value: f32,
}

/// Coordinates kept at one layer, ordered by descending absolute activation.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMask {
    pub layer: usize,
    pub shape: Vec<usize>,
    pub mode: SMode,
    pub scope: MaskScope,
    pub kept: Vec<KeptActivation>,
}

impl ActivationMask {
    pub fn contains(&self, flat: usize) -> bool {
        self.kept.iter().any(|k| k.flat == flat)
    }

    /// The layer's activations with everything outside the mask zeroed.
    pub fn apply(&self, activations: &Tensor) -> Result<Tensor> {
        if activations.shape() != self.shape.as_slice() {
            return Err(Error::shape(format!(
                "mask for {:?} applied to {:?}",
                self.shape,
                activations.shape()
            )));
        }
        let mut out = Tensor::zeros(&self.shape);
        for k in &self.kept {
            out.data_mut()[k.flat] = activations.data()[k.flat];
        }
        Ok(out)
    }

    /// Empty mask over the same layer.
    pub fn empty_like(&self) -> ActivationMask {
        ActivationMask {
            kept: Vec::new(),
            mode: SMode::Count(0),
            ..self.clone()
        }
    }
}

fn check_vis_layer(spec: &NetworkSpec, layer: usize) -> Result<()> {
    match spec.layers.get(layer).map(|l| &l.kind) {
        Some(LayerKind::Conv { .. } | LayerKind::MaxPool { .. }) => Ok(()),
        Some(k) => Err(Error::invalid(format!(
            "layer {} is a {} layer; visualisation needs a conv or pooling layer",
            spec.layers[layer].name,
            k.tag()
        ))),
        None => Err(Error::invalid(format!(
            "layer index {layer} out of range 0..{}",
            spec.layers.len()
        ))),
    }
}

/// Indices of `values` ordered by descending magnitude; ties keep the lower index first.
fn rank_by_magnitude(values: &[f32], offset: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    idx.into_iter().map(|i| i + offset).collect()
}

/// Keeps the `S` activations of layer `layer` with the largest absolute value.
pub fn top_s_mask(trace: &ForwardTrace, spec: &NetworkSpec, layer: usize, mode: SMode) -> Result<ActivationMask> {
    top_s_mask_scoped(trace, spec, layer, mode, MaskScope::AcrossMaps)
}

pub fn top_s_mask_scoped(
    trace: &ForwardTrace,
    spec: &NetworkSpec,
    layer: usize,
    mode: SMode,
    scope: MaskScope,
) -> Result<ActivationMask> {
    check_vis_layer(spec, layer)?;
    let act = trace
        .outputs
        .get(layer)
        .ok_or_else(|| Error::invalid(format!("trace has no layer {layer}")))?;
    let (c, h, w) = act.dims3()?;
    let plane = h * w;
    let per_group = match scope {
        MaskScope::AcrossMaps => act.len(),
        MaskScope::PerMap => plane,
    };
    let mode = match mode {
        SMode::Count(0) => return Err(Error::invalid("S must be at least 1")),
        SMode::Count(s) if s >= per_group => {
            if s > per_group {
                log::warn!(
                    "S = {s} exceeds the {per_group} activations available at layer {}; using all",
                    spec.layers[layer].name
                );
            }
            SMode::All
        }
        m => m,
    };
    let take = match mode {
        SMode::Count(s) => s,
        SMode::All => per_group,
    };
    let data = act.data();
    let mut order = Vec::new();
    match scope {
        MaskScope::AcrossMaps => order.extend(rank_by_magnitude(data, 0).into_iter().take(take)),
        MaskScope::PerMap => {
            for ch in 0..c {
                let ranked = rank_by_magnitude(&data[ch * plane..(ch + 1) * plane], ch * plane);
                order.extend(ranked.into_iter().take(take));
            }
            order.sort_by(|&a, &b| data[b].abs().total_cmp(&data[a].abs()).then(a.cmp(&b)));
        }
    }
    let kept = order
        .into_iter()
        .map(|flat| KeptActivation {
            flat,
            channel: flat / plane,
            row: (flat % plane) / w,
            col: flat % w,
            value: data[flat],
        })
        .collect();
    Ok(ActivationMask {
        layer,
        shape: act.shape().to_vec(),
        mode,
        scope,
        kept,
    })
}

/// Projects the masked activations of `mask.layer` down to input space.
pub fn project(net: &Network, trace: &ForwardTrace, mask: &ActivationMask, rule: ReluRule) -> Result<Tensor> {
    check_vis_layer(&net.spec, mask.layer)?;
    let act = trace
        .outputs
        .get(mask.layer)
        .ok_or_else(|| Error::invalid(format!("trace has no layer {}", mask.layer)))?;
    if trace.outputs.len() != net.spec.layers.len() || act.shape() != mask.shape.as_slice() {
        return Err(Error::shape(format!(
            "mask over {:?} does not match layer {} of the trace",
            mask.shape, mask.layer
        )));
    }
    let masked = mask.apply(act)?;
    project_maps(net, trace, mask.layer, masked, rule)
}

/// Projects an arbitrary signal living in layer `layer`'s output space.
pub fn project_maps(net: &Network, trace: &ForwardTrace, layer: usize, maps: Tensor, rule: ReluRule) -> Result<Tensor> {
    let mut signal = maps;
    for i in (0..=layer).rev() {
        let spec = &net.spec.layers[i];
        let below = trace.layer_input(i);
        signal = match spec.kind {
            LayerKind::Conv { .. } => {
                let lp = net.params.layers[i].as_ref().expect("conv params");
                let (_, h, w) = below.dims3()?;
                conv2d_transpose(&signal, &lp.weights, (h, w), spec.conv_geometry().expect("conv"))?
            }
            LayerKind::MaxPool { .. } => {
                let s = trace.switches[i]
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("trace lacks switches for {}", spec.name)))?;
                unpool(&signal, s, below.shape())?
            }
            LayerKind::Relu => match rule {
                ReluRule::Descending => relu(&signal),
                ReluRule::ForwardGate => relu_backward(below, &signal)?,
            },
            LayerKind::Dropout { .. } => signal,
            LayerKind::Fc { .. } | LayerKind::Softmax => {
                return Err(Error::invalid(format!(
                    "cannot project through {} layer {}",
                    spec.kind.tag(),
                    spec.name
                )))
            }
        };
    }
    Ok(signal)
}

/// Inclusive input-pixel box that can influence position `(row, col)` of
/// layer `layer`'s output, clipped to the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReceptiveField {
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl ReceptiveField {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.rows.0..=self.rows.1).contains(&row) && (self.cols.0..=self.cols.1).contains(&col)
    }
}

pub fn receptive_field(spec: &NetworkSpec, layer: usize, row: usize, col: usize) -> Result<ReceptiveField> {
    let shapes = spec.output_shapes()?;
    if layer >= spec.layers.len() {
        return Err(Error::invalid(format!("layer index {layer} out of range")));
    }
    let (mut r0, mut r1, mut c0, mut c1) = (row as isize, row as isize, col as isize, col as isize);
    for i in (0..=layer).rev() {
        let input = spec.input_shape_of(i, &shapes);
        let (k, s, p) = match spec.layers[i].kind {
            LayerKind::Conv {
                kernel, stride, pad, ..
            } => (kernel, stride, pad),
            LayerKind::MaxPool { window, stride } => (window, stride, 0),
            LayerKind::Relu | LayerKind::Dropout { .. } => continue,
            LayerKind::Fc { .. } | LayerKind::Softmax => {
                return Err(Error::invalid("receptive field through an fc layer is the whole image"))
            }
        };
        let (k, s, p) = (k as isize, s as isize, p as isize);
        let clip = |v: isize, hi: usize| v.clamp(0, hi as isize - 1);
        r0 = clip(r0 * s - p, input[1]);
        r1 = clip(r1 * s - p + k - 1, input[1]);
        c0 = clip(c0 * s - p, input[2]);
        c1 = clip(c1 * s - p + k - 1, input[2]);
    }
    Ok(ReceptiveField {
        rows: (r0 as usize, r1 as usize),
        cols: (c0 as usize, c1 as usize),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{InputExtent, LayerSpec, Params};

    fn one_conv_net(seed: u64) -> Network {
        let spec = NetworkSpec {
            input: InputExtent::new(1, 5, 5),
            class_count: 2,
            layers: vec![
                LayerSpec::conv("conv1", 2, 3, 1, 0, 1).with_init_std(0.5),
                LayerSpec::relu("relu1"),
                LayerSpec::fc("fc", 2),
                LayerSpec::softmax("prob"),
            ],
        };
        Network::init(spec, seed).unwrap()
    }

    fn trace_with_conv_output(values: Vec<f32>, shape: &[usize]) -> (NetworkSpec, ForwardTrace) {
        let spec = NetworkSpec {
            input: InputExtent::new(shape[0], shape[1] + 2, shape[2] + 2),
            class_count: 2,
            layers: vec![
                LayerSpec::conv("conv1", shape[0], 3, 1, 0, 1),
                LayerSpec::fc("fc", 2),
                LayerSpec::softmax("prob"),
            ],
        };
        let act = Tensor::new(shape.to_vec(), values).unwrap();
        let trace = ForwardTrace {
            input: Tensor::zeros(&spec.input.shape()),
            outputs: vec![act, Tensor::zeros(&[2]), Tensor::zeros(&[2])],
            switches: vec![None; 3],
            dropout_masks: vec![None; 3],
        };
        (spec, trace)
    }

    #[test]
    fn keeps_largest_absolute_value() {
        let (spec, trace) = trace_with_conv_output(vec![5.0, -7.0, 2.0], &[1, 1, 3]);
        let m = top_s_mask(&trace, &spec, 0, SMode::Count(1)).unwrap();
        assert_eq!(m.kept.len(), 1);
        assert_eq!(m.kept[0].flat, 1);
        assert_eq!(m.kept[0].value, -7.0);
    }

    #[test]
    fn all_mode_and_clamp() {
        let (spec, trace) = trace_with_conv_output(vec![1.0, 2.0, 3.0, 4.0], &[1, 2, 2]);
        let all = top_s_mask(&trace, &spec, 0, SMode::All).unwrap();
        assert_eq!(all.kept.len(), 4);
        let clamped = top_s_mask(&trace, &spec, 0, SMode::Count(10)).unwrap();
        assert_eq!(clamped.mode, SMode::All);
        assert_eq!(clamped.kept, all.kept);
        assert!(top_s_mask(&trace, &spec, 0, SMode::Count(0)).is_err());
    }

    #[test]
    fn ties_prefer_lowest_index() {
        let (spec, trace) = trace_with_conv_output(vec![1.0, -3.0, 3.0, 3.0], &[1, 2, 2]);
        let m = top_s_mask(&trace, &spec, 0, SMode::Count(2)).unwrap();
        assert_eq!(m.kept.iter().map(|k| k.flat).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn per_map_scope_takes_s_from_each_map() {
        let (spec, trace) = trace_with_conv_output(vec![1.0, 9.0, 8.0, 7.0, 0.5, 0.1, 0.2, 0.3], &[2, 2, 2]);
        let m = top_s_mask_scoped(&trace, &spec, 0, SMode::Count(1), MaskScope::PerMap).unwrap();
        assert_eq!(m.kept.iter().map(|k| k.flat).collect::<Vec<_>>(), vec![1, 4]);
    }

    #[test]
    fn rejects_non_conv_layers() {
        let net = one_conv_net(1);
        let trace = net.forward(&Tensor::zeros(&[1, 5, 5])).unwrap();
        assert!(top_s_mask(&trace, &net.spec, 1, SMode::All).is_err());
        assert!(top_s_mask(&trace, &net.spec, 2, SMode::All).is_err());
        assert!(top_s_mask(&trace, &net.spec, 9, SMode::All).is_err());
    }

    #[test]
    fn empty_mask_projects_to_zero() {
        let net = one_conv_net(2);
        let img = Tensor::from_fn(&[1, 5, 5], |i| (i as f32).cos());
        let trace = net.forward(&img).unwrap();
        let m = top_s_mask(&trace, &net.spec, 0, SMode::All).unwrap().empty_like();
        let r = project(&net, &trace, &m, ReluRule::Descending).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_conv_all_equals_transpose() {
        let net = one_conv_net(3);
        let img = Tensor::from_fn(&[1, 5, 5], |i| (i as f32 * 0.3).sin());
        let trace = net.forward(&img).unwrap();
        let m = top_s_mask(&trace, &net.spec, 0, SMode::All).unwrap();
        let r = project(&net, &trace, &m, ReluRule::Descending).unwrap();
        let lp = net.params.layers[0].as_ref().unwrap();
        let direct = conv2d_transpose(
            &trace.outputs[0],
            &lp.weights,
            (5, 5),
            net.spec.layers[0].conv_geometry().unwrap(),
        )
        .unwrap();
        assert_eq!(r, direct);
    }

    #[test]
    fn projection_is_additive_on_disjoint_masks() {
        let net = one_conv_net(4);
        let img = Tensor::from_fn(&[1, 5, 5], |i| (i as f32 * 0.7).sin());
        let trace = net.forward(&img).unwrap();
        let all = top_s_mask(&trace, &net.spec, 0, SMode::All).unwrap();
        let (a, b) = all.kept.split_at(7);
        let part = |k: &[KeptActivation]| ActivationMask {
            kept: k.to_vec(),
            ..all.clone()
        };
        let ra = project(&net, &trace, &part(a), ReluRule::Descending).unwrap();
        let rb = project(&net, &trace, &part(b), ReluRule::Descending).unwrap();
        let rab = project(&net, &trace, &all, ReluRule::Descending).unwrap();
        for ((x, y), z) in ra.data().iter().zip(rb.data()).zip(rab.data()) {
            assert!((x + y - z).abs() <= 1e-6 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn receptive_field_arithmetic() {
        let spec = crate::network::build_paper_network();
        let conv1 = receptive_field(&spec, 0, 0, 0).unwrap();
        assert_eq!(
            conv1,
            ReceptiveField {
                rows: (0, 10),
                cols: (0, 10)
            }
        );
        let conv1 = receptive_field(&spec, 0, 54, 1).unwrap();
        assert_eq!(
            conv1,
            ReceptiveField {
                rows: (216, 226),
                cols: (4, 14)
            }
        );
        // pool1 (0,0): conv1 rows 0..2 -> pixels 0..18.
        let pool1 = receptive_field(&spec, 2, 0, 0).unwrap();
        assert_eq!(
            pool1,
            ReceptiveField {
                rows: (0, 18),
                cols: (0, 18)
            }
        );
    }

    #[test]
    fn zero_params_project_to_zero() {
        let spec = one_conv_net(0).spec;
        let net = Network::new(spec.clone(), Params::zeros(&spec).unwrap()).unwrap();
        let trace = net.forward(&Tensor::filled(&[1, 5, 5], 1.0)).unwrap();
        let m = top_s_mask(&trace, &spec, 0, SMode::All).unwrap();
        assert_eq!(project(&net, &trace, &m, ReluRule::Descending).unwrap().max_abs(), 0.0);
    }
}
