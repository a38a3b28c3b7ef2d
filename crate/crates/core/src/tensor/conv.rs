//! Grouped 2-D cross-correlation and its exact adjoint.
//!
//! Both directions go through the same im2col layout, so the transpose is the
//! literal matrix transpose of the forward map. Kernel layout is
//! `[C_out, C_in / groups, kh, kw]`.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl ConvGeometry {
    pub fn new(stride: usize, pad: usize, groups: usize) -> Self {
        ConvGeometry { stride, pad, groups }
    }
}

impl Default for ConvGeometry {
    fn default() -> Self {
        ConvGeometry::new(1, 0, 1)
    }
}

/// Output extent of one spatial axis, or `None` if the kernel does not fit.
pub fn conv2d_output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * pad < kernel {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Plan {
    h: usize,
    w: usize,
    c_out: usize,
    cin_g: usize,
    cout_g: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
    groups: usize,
}

impl Plan {
    fn new(input: (usize, usize, usize), kernels: &Tensor, geom: ConvGeometry) -> Result<Plan> {
        let (c_in, h, w) = input;
        let (c_out, cin_g, kh, kw) = match kernels.shape()[..] {
            [a, b, c, d] => (a, b, c, d),
            _ => {
                return Err(Error::shape(format!(
                    "kernels must be rank 4 [C_out, C_in/g, kh, kw], got {:?}",
                    kernels.shape()
                )))
            }
        };
        if geom.groups == 0 || geom.stride == 0 {
            return Err(Error::invalid(format!(
                "stride and groups must be positive, got {geom:?}"
            )));
        }
        if c_in % geom.groups != 0 || c_out % geom.groups != 0 {
            return Err(Error::shape(format!(
                "input {c_in}x{h}x{w} and kernels {:?} are not divisible into {} groups",
                kernels.shape(),
                geom.groups
            )));
        }
        if c_in / geom.groups != cin_g {
            return Err(Error::shape(format!(
                "kernels {:?} expect {} input channels per group but input {c_in}x{h}x{w} \
                 with {} groups provides {}",
                kernels.shape(),
                cin_g,
                geom.groups,
                c_in / geom.groups
            )));
        }
        let oh = conv2d_output_extent(h, kh, geom.stride, geom.pad);
        let ow = conv2d_output_extent(w, kw, geom.stride, geom.pad);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::shape(format!(
                "kernels {:?} do not fit input {c_in}x{h}x{w} with pad {}",
                kernels.shape(),
                geom.pad
            )));
        };
        Ok(Plan {
            h,
            w,
            c_out,
            cin_g,
            cout_g: c_out / geom.groups,
            kh,
            kw,
            oh,
            ow,
            stride: geom.stride,
            pad: geom.pad,
            groups: geom.groups,
        })
    }

    fn patch_len(&self) -> usize {
        self.cin_g * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Input coordinate for kernel tap `k` at output index `o` along one axis.
    #[inline]
    fn source(&self, o: usize, k: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        if pos < 0 {
            None
        } else {
            Some(pos as usize)
        }
    }

    /// Unrolls group `g` of `input` into a `[patch_len, positions]` matrix.
    fn im2col(&self, input: &[f32], g: usize, cols: &mut [f32]) {
        let p_count = self.positions();
        let mut row = 0;
        for ci in 0..self.cin_g {
            let plane = &input[(g * self.cin_g + ci) * self.h * self.w..][..self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let dst = &mut cols[row * p_count..(row + 1) * p_count];
                    for oy in 0..self.oh {
                        let src_y = self.source(oy, ky).filter(|&y| y < self.h);
                        for ox in 0..self.ow {
                            let v = match (src_y, self.source(ox, kx).filter(|&x| x < self.w)) {
                                (Some(y), Some(x)) => plane[y * self.w + x],
                                _ => 0.0,
                            };
                            dst[oy * self.ow + ox] = v;
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Scatter-adds a `[patch_len, positions]` matrix back into group `g`.
    fn col2im(&self, cols: &[f64], g: usize, out: &mut [f64]) {
        let p_count = self.positions();
        let mut row = 0;
        for ci in 0..self.cin_g {
            let plane = &mut out[(g * self.cin_g + ci) * self.h * self.w..][..self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let src = &cols[row * p_count..(row + 1) * p_count];
                    for oy in 0..self.oh {
                        let Some(y) = self.source(oy, ky).filter(|&y| y < self.h) else {
                            continue;
                        };
                        for ox in 0..self.ow {
                            if let Some(x) = self.source(ox, kx).filter(|&x| x < self.w) {
                                plane[y * self.w + x] += src[oy * self.ow + ox];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Grouped cross-correlation with zero padding.
///
/// `input` is `[C_in, H, W]`; the result is `[C_out, H', W']` with
/// `H' = (H + 2 pad - kh) / stride + 1`.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: Option<&[f32]>, geom: ConvGeometry) -> Result<Tensor> {
    let plan = Plan::new(input.dims3()?, kernels, geom)?;
    if let Some(b) = bias {
        if b.len() != plan.c_out {
            return Err(Error::shape(format!(
                "bias has {} entries for {} output channels",
                b.len(),
                plan.c_out
            )));
        }
    }
    let k_len = plan.patch_len();
    let p_count = plan.positions();
    let mut cols = vec![0.0f32; k_len * p_count];
    let mut acc = vec![0.0f64; p_count];
    let mut out = vec![0.0f32; plan.c_out * p_count];
    let w = kernels.data();
    for g in 0..plan.groups {
        plan.im2col(input.data(), g, &mut cols);
        for co in g * plan.cout_g..(g + 1) * plan.cout_g {
            acc.fill(bias.map_or(0.0, |b| b[co] as f64));
            let w_row = &w[co * k_len..(co + 1) * k_len];
            for (k, &wk) in w_row.iter().enumerate() {
                if wk == 0.0 {
                    continue;
                }
                let wk = wk as f64;
                let col = &cols[k * p_count..(k + 1) * p_count];
                for (a, &c) in acc.iter_mut().zip(col) {
                    *a += wk * c as f64;
                }
            }
            for (o, &a) in out[co * p_count..(co + 1) * p_count].iter_mut().zip(&acc) {
                *o = a as f32;
            }
        }
    }
    Tensor::new(vec![plan.c_out, plan.oh, plan.ow], out)
}

/// Exact linear adjoint of [`conv2d_forward`] with the bias omitted.
///
/// `input_hw` names the spatial extent of the forward input; several extents
/// can map onto the same output under a strided floor, so it cannot be
/// inferred.
pub fn conv2d_transpose(
    maps: &Tensor,
    kernels: &Tensor,
    input_hw: (usize, usize),
    geom: ConvGeometry,
) -> Result<Tensor> {
    let (c_out, oh, ow) = maps.dims3()?;
    let cin_g = kernels.shape().get(1).copied().unwrap_or(0);
    let c_in = cin_g * geom.groups;
    let plan = Plan::new((c_in, input_hw.0, input_hw.1), kernels, geom)?;
    if plan.c_out != c_out || plan.oh != oh || plan.ow != ow {
        return Err(Error::shape(format!(
            "maps {:?} cannot come from a {c_in}x{}x{} input through kernels {:?} \
             (stride {}, pad {}): forward output would be {}x{}x{}",
            maps.shape(),
            input_hw.0,
            input_hw.1,
            kernels.shape(),
            geom.stride,
            geom.pad,
            plan.c_out,
            plan.oh,
            plan.ow
        )));
    }
    let k_len = plan.patch_len();
    let p_count = plan.positions();
    let w = kernels.data();
    let y = maps.data();
    let mut dcols = vec![0.0f64; k_len * p_count];
    let mut out = vec![0.0f64; c_in * plan.h * plan.w];
    for g in 0..plan.groups {
        dcols.fill(0.0);
        for co in g * plan.cout_g..(g + 1) * plan.cout_g {
            let y_row = &y[co * p_count..(co + 1) * p_count];
            let w_row = &w[co * k_len..(co + 1) * k_len];
            for (k, &wk) in w_row.iter().enumerate() {
                if wk == 0.0 {
                    continue;
                }
                let wk = wk as f64;
                let d = &mut dcols[k * p_count..(k + 1) * p_count];
                for (dv, &yv) in d.iter_mut().zip(y_row) {
                    *dv += wk * yv as f64;
                }
            }
        }
        plan.col2im(&dcols, g, &mut out);
    }
    Tensor::new(vec![c_in, plan.h, plan.w], out.into_iter().map(|v| v as f32).collect())
}

/// Gradient of `<conv2d_forward(input, K), grad_out>` with respect to `K`.
pub fn conv2d_weight_grad(
    input: &Tensor,
    grad_out: &Tensor,
    kernel_shape: &[usize],
    geom: ConvGeometry,
) -> Result<Tensor> {
    let probe = Tensor::zeros(kernel_shape);
    let plan = Plan::new(input.dims3()?, &probe, geom)?;
    if grad_out.shape() != [plan.c_out, plan.oh, plan.ow] {
        return Err(Error::shape(format!(
            "gradient {:?} does not match conv output {}x{}x{}",
            grad_out.shape(),
            plan.c_out,
            plan.oh,
            plan.ow
        )));
    }
    let k_len = plan.patch_len();
    let p_count = plan.positions();
    let mut cols = vec![0.0f32; k_len * p_count];
    let mut grad = vec![0.0f32; plan.c_out * k_len];
    let y = grad_out.data();
    for g in 0..plan.groups {
        plan.im2col(input.data(), g, &mut cols);
        for co in g * plan.cout_g..(g + 1) * plan.cout_g {
            let y_row = &y[co * p_count..(co + 1) * p_count];
            for k in 0..k_len {
                let col = &cols[k * p_count..(k + 1) * p_count];
                let s: f64 = col.iter().zip(y_row).map(|(&c, &yv)| c as f64 * yv as f64).sum();
                grad[co * k_len + k] = s as f32;
            }
        }
    }
    Tensor::new(kernel_shape.to_vec(), grad)
}

/// Gradient with respect to the per-channel bias: spatial sums of `grad_out`.
pub fn conv2d_bias_grad(grad_out: &Tensor) -> Result<Vec<f32>> {
    let (c, h, w) = grad_out.dims3()?;
    Ok((0..c)
        .map(|ch| {
            grad_out.data()[ch * h * w..(ch + 1) * h * w]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>() as f32
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0f32..1.0))
    }

    /// Direct six-loop cross-correlation, independent of the im2col path.
    fn naive_conv(x: &Tensor, k: &Tensor, geom: ConvGeometry) -> Tensor {
        let (c_in, h, w) = x.dims3().unwrap();
        let s = k.shape();
        let (c_out, cin_g, kh, kw) = (s[0], s[1], s[2], s[3]);
        let oh = (h + 2 * geom.pad - kh) / geom.stride + 1;
        let ow = (w + 2 * geom.pad - kw) / geom.stride + 1;
        let cout_g = c_out / geom.groups;
        let mut out = Tensor::zeros(&[c_out, oh, ow]);
        for co in 0..c_out {
            let g = co / cout_g;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f64;
                    for ci in 0..cin_g {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let y = (oy * geom.stride + ky) as isize - geom.pad as isize;
                                let xx = (ox * geom.stride + kx) as isize - geom.pad as isize;
                                if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                    continue;
                                }
                                let xv = x.data()[((g * cin_g + ci) * h + y as usize) * w + xx as usize];
                                let kv = k.data()[((co * cin_g + ci) * kh + ky) * kw + kx];
                                acc += xv as f64 * kv as f64;
                            }
                        }
                    }
                    out.data_mut()[(co * oh + oy) * ow + ox] = acc as f32;
                }
            }
        }
        let _ = c_in;
        out
    }

    #[test]
    fn alexnet_conv1_shape() {
        let x = Tensor::zeros(&[3, 227, 227]);
        let k = Tensor::zeros(&[96, 3, 11, 11]);
        let y = conv2d_forward(&x, &k, None, ConvGeometry::new(4, 0, 1)).unwrap();
        assert_eq!(y.shape(), &[96, 55, 55]);
    }

    #[test]
    fn identity_kernel_passes_value() {
        let x = Tensor::new(vec![1, 1, 1], vec![7.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let y = conv2d_forward(&x, &k, Some(&[0.0]), ConvGeometry::default()).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn ones_kernel_sums_window() {
        let x = Tensor::filled(&[1, 3, 3], 1.0);
        let k = Tensor::filled(&[1, 1, 2, 2], 1.0);
        let y = conv2d_forward(&x, &k, Some(&[0.0]), ConvGeometry::default()).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[4.0; 4]);
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let x = Tensor::zeros(&[4, 5, 5]);
        let k = Tensor::zeros(&[2, 3, 3, 3]);
        let err = conv2d_forward(&x, &k, None, ConvGeometry::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("[2, 3, 3, 3]") && err.contains("4x5x5"), "{err}");
    }

    #[test]
    fn transpose_of_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let y = Tensor::zeros(&[3, 3, 3]);
        let x = conv2d_transpose(&y, &k, (5, 5), ConvGeometry::default()).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transpose_single_tap() {
        let k = Tensor::new(vec![1, 1, 1, 1], vec![2.5]).unwrap();
        let y = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let x = conv2d_transpose(&y, &k, (1, 1), ConvGeometry::default()).unwrap();
        assert_eq!(x.data(), &[7.5]);
    }

    #[test]
    fn transpose_rejects_inconsistent_extent() {
        let k = Tensor::zeros(&[1, 1, 3, 3]);
        let y = Tensor::zeros(&[1, 4, 4]);
        assert!(conv2d_transpose(&y, &k, (5, 5), ConvGeometry::default()).is_err());
        // 63 and 64 both map to 31 under k=3, s=2, p=0.
        let y = Tensor::zeros(&[1, 31, 31]);
        assert!(conv2d_transpose(&y, &k, (63, 63), ConvGeometry::new(2, 0, 1)).is_ok());
        assert!(conv2d_transpose(&y, &k, (64, 64), ConvGeometry::new(2, 0, 1)).is_ok());
    }

    #[test]
    fn adjoint_random_2x5x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 5, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let geom = ConvGeometry::default();
        let y = random(&[3, 3, 3], &mut rng);
        let lhs = conv2d_forward(&x, &k, None, geom).unwrap().dot(&y);
        let rhs = x.dot(&conv2d_transpose(&y, &k, (5, 5), geom).unwrap());
        assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(rhs.abs()).max(1e-12));
    }

    #[test]
    fn weight_grad_matches_inner_product() {
        // <conv(x, K), y> is linear in K with gradient conv2d_weight_grad.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let geom = ConvGeometry::new(2, 1, 2);
        let x = random(&[4, 7, 6], &mut rng);
        let k = random(&[6, 2, 3, 3], &mut rng);
        let y0 = conv2d_forward(&x, &k, None, geom).unwrap();
        let y = random(y0.shape(), &mut rng);
        let g = conv2d_weight_grad(&x, &y, k.shape(), geom).unwrap();
        let direct = y0.dot(&y);
        assert!((g.dot(&k) - direct).abs() < 1e-4 * direct.abs().max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn im2col_matches_naive(
            seed in 0u64..1000,
            groups in 1usize..3,
            cin_g in 1usize..3,
            cout_g in 1usize..3,
            k in 1usize..4,
            stride in 1usize..3,
            pad in 0usize..2,
            h in 4usize..8,
            w in 4usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let geom = ConvGeometry::new(stride, pad, groups);
            let x = random(&[cin_g * groups, h, w], &mut rng);
            let kern = random(&[cout_g * groups, cin_g, k, k], &mut rng);
            let fast = conv2d_forward(&x, &kern, None, geom).unwrap();
            let slow = naive_conv(&x, &kern, geom);
            prop_assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                prop_assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn forward_is_linear(seed in 0u64..1000, alpha in -2.0f32..2.0, beta in -2.0f32..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let geom = ConvGeometry::new(1, 1, 1);
            let x = random(&[2, 6, 6], &mut rng);
            let y = random(&[2, 6, 6], &mut rng);
            let kern = random(&[3, 2, 3, 3], &mut rng);
            let mut mix = x.clone();
            mix.scale(alpha);
            mix.axpy(beta, &y).unwrap();
            let lhs = conv2d_forward(&mix, &kern, None, geom).unwrap();
            let mut rhs = conv2d_forward(&x, &kern, None, geom).unwrap();
            rhs.scale(alpha);
            rhs.axpy(beta, &conv2d_forward(&y, &kern, None, geom).unwrap()).unwrap();
            let scale = lhs.norm().max(rhs.norm()).max(1e-6);
            let mut diff = lhs.clone();
            diff.axpy(-1.0, &rhs).unwrap();
            prop_assert!(diff.norm() <= 1e-6 * scale * (lhs.len() as f64).sqrt());
        }

        #[test]
        fn grouped_equals_sliced(seed in 0u64..1000, groups in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[2 * groups, 6, 5], &mut rng);
            let kern = random(&[3 * groups, 2, 3, 2], &mut rng);
            let geom = ConvGeometry::new(1, 1, groups);
            let whole = conv2d_forward(&x, &kern, None, geom).unwrap();
            let mut parts = Vec::new();
            for g in 0..groups {
                let xs = x.channel_slice(2 * g, 2).unwrap();
                let klen = 2 * 3 * 2;
                let ks = Tensor::new(
                    vec![3, 2, 3, 2],
                    kern.data()[3 * g * klen..3 * (g + 1) * klen].to_vec(),
                ).unwrap();
                parts.push(conv2d_forward(&xs, &ks, None, ConvGeometry::new(1, 1, 1)).unwrap());
            }
            prop_assert_eq!(whole, Tensor::concat_channels(&parts).unwrap());
        }
    }
}
