//! Tape-free forward kernels.
//!
//! The tape records these same functions, so inference paths that skip the
//! tape produce bit-identical values to the training forward pass.

use super::{KernelError, Tensor};

fn dims3(x: &Tensor, what: &str) -> Result<(usize, usize, usize), KernelError> {
    match *x.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(KernelError::ShapeMismatch(format!(
            "{what}: expected C×H×W input, got {s:?}"
        ))),
    }
}

/// `out[k,h,w] = Σ_c weight[k,c]·input[c,h,w] + bias[k]`.
pub fn pointwise_conv(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, KernelError> {
    let (c, h, w) = dims3(input, "pointwise_conv")?;
    let k = match *weight.shape() {
        [k, wc] if wc == c => k,
        ref s => {
            return Err(KernelError::ShapeMismatch(format!(
                "pointwise_conv: weight {s:?} does not match {c} input channels"
            )))
        }
    };
    if bias.shape() != [k] {
        return Err(KernelError::ShapeMismatch(format!(
            "pointwise_conv: bias {:?}, expected [{k}]",
            bias.shape()
        )));
    }
    let plane = h * w;
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![0.0; k * plane];
    for (ki, out_plane) in out.chunks_exact_mut(plane).enumerate() {
        let b = bias.data()[ki];
        out_plane.iter_mut().for_each(|v| *v = b);
        for ci in 0..c {
            let wv = wt[ki * c + ci];
            let in_plane = &x[ci * plane..(ci + 1) * plane];
            for (o, &i) in out_plane.iter_mut().zip(in_plane) {
                *o += wv * i;
            }
        }
    }
    Tensor::new(vec![k, h, w], out)
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Mean over the spatial plane of each channel.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor, KernelError> {
    let (c, h, w) = dims3(x, "global_avg_pool")?;
    let plane = h * w;
    let inv = 1.0 / plane as f64;
    let data = x
        .data()
        .chunks_exact(plane)
        .map(|p| p.iter().sum::<f64>() * inv)
        .collect::<Vec<_>>();
    debug_assert_eq!(data.len(), c);
    Ok(Tensor::vector(data))
}

/// Affine map `weight·x + bias` for `x` of length N and `weight` M×N.
pub fn dense(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, KernelError> {
    let n = match *x.shape() {
        [n] => n,
        ref s => {
            return Err(KernelError::ShapeMismatch(format!(
                "dense: expected vector input, got {s:?}"
            )))
        }
    };
    let m = match *weight.shape() {
        [m, wn] if wn == n => m,
        ref s => {
            return Err(KernelError::ShapeMismatch(format!(
                "dense: weight {s:?} does not match input length {n}"
            )))
        }
    };
    if bias.shape() != [m] {
        return Err(KernelError::ShapeMismatch(format!(
            "dense: bias {:?}, expected [{m}]",
            bias.shape()
        )));
    }
    let data = weight
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, b)| row.iter().zip(x.data()).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect();
    Ok(Tensor::vector(data))
}
