//! Independent double-precision reference forward pass and finite-difference
//! gradient checking, shared by the integration and acceptance tests.

#![allow(dead_code)]

use leafcnn::network::{build_mlp, InputExtent, LayerKind, LayerSpec, Network, NetworkSpec};
use leafcnn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Parameters as f64: per layer `(weights, bias)`.
pub type RefParams = Vec<Option<(Vec<f64>, Vec<f64>)>>;

pub fn to_ref_params(net: &Network) -> RefParams {
    net.params
        .layers
        .iter()
        .map(|l| {
            l.as_ref().map(|p| {
                (
                    p.weights.data().iter().map(|&v| v as f64).collect(),
                    p.bias.data().iter().map(|&v| v as f64).collect(),
                )
            })
        })
        .collect()
}

/// Straight six-loop grouped cross-correlation.
pub fn ref_conv(
    x: &[f64],
    (c, h, w): (usize, usize, usize),
    weights: &[f64],
    bias: &[f64],
    (filters, k, stride, pad, groups): (usize, usize, usize, usize, usize),
) -> (Vec<f64>, (usize, usize, usize)) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let cg = c / groups;
    let fg = filters / groups;
    let mut out = vec![0.0; filters * oh * ow];
    for f in 0..filters {
        let g = f / fg;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[f];
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += weights[((f * cg + ci) * k + ky) * k + kx]
                                * x[(ch * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(f * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (out, (filters, oh, ow))
}

pub fn ref_pool(
    x: &[f64],
    (c, h, w): (usize, usize, usize),
    window: usize,
    stride: usize,
) -> (Vec<f64>, (usize, usize, usize)) {
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for ky in 0..window {
                    for kx in 0..window {
                        m = m.max(x[(ch * h + oy * stride + ky) * w + ox * stride + kx]);
                    }
                }
                out[(ch * oh + oy) * ow + ox] = m;
            }
        }
    }
    (out, (c, oh, ow))
}

/// Logits (input of the final softmax) for `input`, applying the given
/// dropout masks where the trace recorded them.
pub fn ref_logits(spec: &NetworkSpec, params: &RefParams, input: &[f64], dropout: &[Option<Vec<f64>>]) -> Vec<f64> {
    let mut x = input.to_vec();
    let mut dims = (spec.input.channels, spec.input.height, spec.input.width);
    let last = spec.layers.len() - 1;
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer.kind {
            LayerKind::Conv {
                filters,
                kernel,
                stride,
                pad,
                groups,
            } => {
                let (w, b) = params[i].as_ref().expect("conv params");
                let (y, d) = ref_conv(&x, dims, w, b, (filters, kernel, stride, pad, groups));
                x = y;
                dims = d;
            }
            LayerKind::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            LayerKind::MaxPool { window, stride } => {
                let (y, d) = ref_pool(&x, dims, window, stride);
                x = y;
                dims = d;
            }
            LayerKind::Fc { units } => {
                let (w, b) = params[i].as_ref().expect("fc params");
                let n = x.len();
                x = (0..units)
                    .map(|o| b[o] + (0..n).map(|j| w[o * n + j] * x[j]).sum::<f64>())
                    .collect();
                dims = (units, 1, 1);
            }
            LayerKind::Dropout { .. } => {
                if let Some(m) = &dropout[i] {
                    x.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
                }
            }
            LayerKind::Softmax => {
                assert_eq!(i, last);
            }
        }
    }
    x
}

pub fn ref_loss(
    spec: &NetworkSpec,
    params: &RefParams,
    input: &[f64],
    dropout: &[Option<Vec<f64>>],
    label: usize,
) -> f64 {
    let z = ref_logits(spec, params, input, dropout);
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[label]
}

pub fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
    pub skipped_kinks: usize,
    pub worst_rel_err: f64,
    pub failures: Vec<String>,
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares `net.backward` against central differences of the reference
/// loss at up to `per_layer` sampled coordinates of every parameter tensor.
/// Coordinates where one-sided differences disagree sit on a ReLU or
/// max-pool kink and are resampled.
pub fn check_network(
    net: &Network,
    input: &Tensor,
    label: usize,
    dropout_seed: Option<u64>,
    per_layer: usize,
    tol: f64,
) -> GradCheck {
    let trace = match dropout_seed {
        Some(s) => net.forward_train(input, &mut ChaCha8Rng::seed_from_u64(s)).unwrap(),
        None => net.forward(input).unwrap(),
    };
    let (_, grads) = net.backward(&trace, label).unwrap();
    let dropout: Vec<Option<Vec<f64>>> = trace
        .dropout_masks
        .iter()
        .map(|m| m.as_ref().map(|t| t.data().iter().map(|&v| v as f64).collect()))
        .collect();
    let x: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let base = to_ref_params(net);
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut out = GradCheck::default();
    for (li, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        for (which, analytic) in [(0usize, g.weights.data()), (1, g.bias.data())] {
            let n = analytic.len();
            let mut coords: Vec<usize> = if n <= per_layer {
                (0..n).collect()
            } else {
                (0..per_layer).map(|_| rng.random_range(0..n)).collect()
            };
            let mut attempts = 0;
            while let Some(j) = coords.pop() {
                let eval = |delta: f64| {
                    let mut p = base.clone();
                    let t = p[li].as_mut().unwrap();
                    if which == 0 {
                        t.0[j] += delta;
                    } else {
                        t.1[j] += delta;
                    }
                    ref_loss(&net.spec, &p, &x, &dropout, label)
                };
                let (fp, f0, fm) = (eval(h), eval(0.0), eval(-h));
                let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
                if rel_err(fwd, bwd) > tol && (fwd - bwd).abs() > 1e-4 {
                    out.skipped_kinks += 1;
                    attempts += 1;
                    if n > per_layer && attempts < 10 * per_layer {
                        coords.push(rng.random_range(0..n));
                    }
                    continue;
                }
                let numeric = (fp - fm) / (2.0 * h);
                let a = analytic[j] as f64;
                let e = rel_err(a, numeric);
                out.checked += 1;
                out.worst_rel_err = out.worst_rel_err.max(e);
                if e <= tol {
                    out.passed += 1;
                } else {
                    out.failures.push(format!(
                        "{}.{}[{j}]: analytic {a:e} numeric {numeric:e} rel {e:e}",
                        net.spec.layers[li].name,
                        if which == 0 { "w" } else { "b" }
                    ));
                }
            }
        }
    }
    out
}

/// Small networks that between them use every layer kind.
pub fn gradcheck_networks() -> Vec<(&'static str, NetworkSpec, Option<u64>)> {
    let conv_pool = NetworkSpec {
        input: InputExtent::new(3, 9, 9),
        class_count: 5,
        layers: vec![
            LayerSpec::conv("c1", 4, 3, 1, 1, 1).with_init_std(0.3),
            LayerSpec::relu("r1"),
            LayerSpec::maxpool("p1", 2, 2),
            LayerSpec::fc("f1", 5).with_init_std(0.3),
            LayerSpec::softmax("prob"),
        ],
    };
    let grouped = NetworkSpec {
        input: InputExtent::new(4, 11, 11),
        class_count: 3,
        layers: vec![
            LayerSpec::conv("c1", 6, 3, 2, 1, 2).with_init_std(0.3),
            LayerSpec::relu("r1"),
            LayerSpec::conv("c2", 4, 3, 1, 0, 2).with_init_std(0.3),
            LayerSpec::maxpool("p2", 3, 1),
            LayerSpec::fc("f1", 8).with_init_std(0.3),
            LayerSpec::relu("r2"),
            LayerSpec::dropout("d2", 0.5),
            LayerSpec::fc("f2", 3).with_init_std(0.3),
            LayerSpec::softmax("prob"),
        ],
    };
    let wide_stride = NetworkSpec {
        input: InputExtent::new(3, 27, 27),
        class_count: 4,
        layers: vec![
            LayerSpec::conv("c1", 8, 11, 4, 0, 1).with_init_std(0.05),
            LayerSpec::relu("r1"),
            LayerSpec::maxpool("p1", 3, 2),
            LayerSpec::fc("f1", 4).with_init_std(0.3),
            LayerSpec::softmax("prob"),
        ],
    };
    vec![
        ("conv-relu-pool-fc", conv_pool, None),
        ("grouped-strided-dropout", grouped, Some(5)),
        ("stride4-kernel11", wide_stride, None),
        ("mlp", build_mlp(6, 5, 3), None),
    ]
}
