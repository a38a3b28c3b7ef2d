//! Max pooling with recorded switches, and switch-driven unpooling.

use super::Tensor;
use crate::error::{Error, Result};

/// Argmax locations of a max-pooling pass.
///
/// `indices[o]` is the flat `[C, H, W]` offset in the pre-pooling tensor that
/// produced pooled element `o`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwitchMap {
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub indices: Vec<usize>,
}

pub fn pool_output_extent(input: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || window > input {
        return None;
    }
    Some((input - window) / stride + 1)
}

/// Per-channel max pooling without padding. Ties go to the lowest flat index.
pub fn maxpool_forward(input: &Tensor, window: usize, stride: usize) -> Result<(Tensor, SwitchMap)> {
    let (c, h, w) = input.dims3()?;
    if window == 0 || stride == 0 {
        return Err(Error::invalid(format!(
            "pooling window ({window}) and stride ({stride}) must be positive"
        )));
    }
    let (Some(oh), Some(ow)) = (
        pool_output_extent(h, window, stride),
        pool_output_extent(w, window, stride),
    ) else {
        return Err(Error::shape(format!(
            "pooling window {window} larger than input {c}x{h}x{w}"
        )));
    };
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut indices = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                let mut best_v = x[best];
                // Row-major scan with strict `>` keeps the lowest flat index on ties.
                for ky in 0..window {
                    let row = base + (oy * stride + ky) * w + ox * stride;
                    for kx in 0..window {
                        let v = x[row + kx];
                        if v > best_v {
                            best_v = v;
                            best = row + kx;
                        }
                    }
                }
                out.push(best_v);
                indices.push(best);
            }
        }
    }
    let pooled = Tensor::new(vec![c, oh, ow], out)?;
    let switches = SwitchMap {
        input_shape: vec![c, h, w],
        output_shape: vec![c, oh, ow],
        indices,
    };
    Ok((pooled, switches))
}

/// Writes each pooled value at its switch location in a zero tensor of
/// `target_shape`. Colliding switches (overlapping windows) sum, which makes
/// this the adjoint of max pooling with the switches held fixed.
pub fn unpool(pooled: &Tensor, switches: &SwitchMap, target_shape: &[usize]) -> Result<Tensor> {
    if pooled.shape() != switches.output_shape.as_slice() {
        return Err(Error::shape(format!(
            "pooled tensor {:?} does not match switch map output {:?}",
            pooled.shape(),
            switches.output_shape
        )));
    }
    if switches.indices.len() != pooled.len() {
        return Err(Error::shape(format!(
            "switch map has {} indices for {} pooled values",
            switches.indices.len(),
            pooled.len()
        )));
    }
    let mut acc = vec![0.0f64; target_shape.iter().product()];
    for (&v, &idx) in pooled.data().iter().zip(&switches.indices) {
        let slot = acc.get_mut(idx).ok_or_else(|| {
            Error::shape(format!(
                "switch index {idx} out of bounds for target shape {target_shape:?}"
            ))
        })?;
        *slot += v as f64;
    }
    Tensor::new(target_shape.to_vec(), acc.into_iter().map(|v| v as f32).collect())
}
