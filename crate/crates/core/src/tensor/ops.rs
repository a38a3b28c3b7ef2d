use super::Tensor;
use crate::error::{Error, Result};

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Gates `grad` by the sign of the forward input.
pub fn relu_backward(forward_input: &Tensor, grad: &Tensor) -> Result<Tensor> {
    if forward_input.shape() != grad.shape() {
        return Err(Error::shape(format!(
            "relu gradient {:?} vs input {:?}",
            grad.shape(),
            forward_input.shape()
        )));
    }
    let data = forward_input
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(grad.shape().to_vec(), data)
}

fn check_fc(input_len: usize, weights: &Tensor) -> Result<(usize, usize)> {
    let (out, inp) = match weights.shape()[..] {
        [o, i] => (o, i),
        _ => {
            return Err(Error::shape(format!(
                "fc weights must be [out, in], got {:?}",
                weights.shape()
            )))
        }
    };
    if inp != input_len {
        return Err(Error::shape(format!(
            "fc weights {:?} applied to an input of {input_len} values",
            weights.shape()
        )));
    }
    Ok((out, inp))
}

/// `W x + b` with `W` stored `[out, in]`; the input is flattened.
pub fn fc_forward(input: &[f32], weights: &Tensor, bias: &[f32]) -> Result<Vec<f32>> {
    let (out, inp) = check_fc(input.len(), weights)?;
    if bias.len() != out {
        return Err(Error::shape(format!(
            "fc bias has {} entries for {out} outputs",
            bias.len()
        )));
    }
    let w = weights.data();
    Ok((0..out)
        .map(|o| {
            let row = &w[o * inp..(o + 1) * inp];
            let s: f64 = row.iter().zip(input).map(|(&a, &b)| a as f64 * b as f64).sum();
            (s + bias[o] as f64) as f32
        })
        .collect())
}

/// `W^T y`, the adjoint of [`fc_forward`] without bias.
pub fn fc_transpose(grad_out: &[f32], weights: &Tensor) -> Result<Vec<f32>> {
    let (out, inp) = match weights.shape()[..] {
        [o, i] => (o, i),
        _ => return Err(Error::shape(format!("fc weights {:?}", weights.shape()))),
    };
    if grad_out.len() != out {
        return Err(Error::shape(format!(
            "fc adjoint: {} values for weights {:?}",
            grad_out.len(),
            weights.shape()
        )));
    }
    let w = weights.data();
    let mut acc = vec![0.0f64; inp];
    for (o, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let g = g as f64;
        for (a, &wv) in acc.iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
            *a += g * wv as f64;
        }
    }
    Ok(acc.into_iter().map(|v| v as f32).collect())
}

/// Outer product `grad_out ⊗ input`, shaped like the weights.
pub fn fc_weight_grad(input: &[f32], grad_out: &[f32]) -> Tensor {
    let mut data = Vec::with_capacity(grad_out.len() * input.len());
    for &g in grad_out {
        data.extend(input.iter().map(|&x| (g as f64 * x as f64) as f32));
    }
    Tensor::new(vec![grad_out.len().max(1), input.len().max(1)], data).expect("outer product of non-empty vectors")
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let m = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&v| ((v - m) as f64).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| (e / z) as f32).collect()
}

pub fn log_softmax(logits: &[f32]) -> Vec<f64> {
    let m = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let lse = m + logits.iter().map(|&v| (v as f64 - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v as f64 - lse).collect()
}
