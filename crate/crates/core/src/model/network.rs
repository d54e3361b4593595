//! Forward and reverse passes over the layer program, generic in the scalar.
//!
//! Activations are stored channel-major: `a[c * width + t]`.
//!
//! Parameter ordering (the checkpoint contract): layers in order; within a
//! convolution all weights `w[out][in][k]` then biases `b[out]`; within a
//! dense layer weights `w[out][in]` (inputs flattened channel-major) then
//! biases `b[out]`.

use super::config::{LayerOp, ModelConfig};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Intermediate values kept by the forward pass for the reverse pass.
pub(crate) struct Tape<S> {
    ops: Vec<LayerOp>,
    /// Input to each op together with its (channels, width).
    inputs: Vec<(Vec<S>, usize, usize)>,
}

pub(crate) fn forward<S: Scalar>(cfg: &ModelConfig, theta: &[S], x: &[f64]) -> Result<(Vec<S>, Tape<S>)> {
    let ops = cfg.layers(x.len())?;
    let expected = cfg.param_count_for(x.len())?;
    if theta.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "parameter vector has length {}, model needs {expected}",
            theta.len()
        )));
    }
    let s = if cfg.scale_inputs { (x.len() as f64).sqrt() } else { 1.0 };
    let mut act: Vec<S> = x.iter().map(|&v| S::from_f64(v * s)).collect();
    let (mut ch, mut width) = (1usize, x.len());
    let mut inputs = Vec::with_capacity(ops.len());

    for op in &ops {
        let (out, och, owidth) = match *op {
            LayerOp::Conv { in_ch, out_ch, kernel, stride, offset } => {
                debug_assert_eq!(in_ch, ch);
                let ow = (width - kernel) / stride + 1;
                let w = &theta[offset..offset + out_ch * in_ch * kernel];
                let b = &theta[offset + out_ch * in_ch * kernel..offset + out_ch * in_ch * kernel + out_ch];
                let mut out = vec![S::zero(); out_ch * ow];
                for o in 0..out_ch {
                    let row = &mut out[o * ow..(o + 1) * ow];
                    for v in row.iter_mut() {
                        *v = b[o];
                    }
                    for i in 0..in_ch {
                        let wk = &w[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
                        let a = &act[i * width..(i + 1) * width];
                        for (t, r) in row.iter_mut().enumerate() {
                            let seg = &a[t * stride..t * stride + kernel];
                            let mut acc = S::zero();
                            for k in 0..kernel {
                                acc += wk[k] * seg[k];
                            }
                            *r += acc;
                        }
                    }
                }
                (out, out_ch, ow)
            }
            LayerOp::Softplus => (act.iter().map(|v| v.softplus()).collect(), ch, width),
            LayerOp::GlobalAvgPool => {
                let inv = 1.0 / width as f64;
                let out = (0..ch)
                    .map(|c| {
                        let mut acc = S::zero();
                        for v in &act[c * width..(c + 1) * width] {
                            acc += *v;
                        }
                        acc.scale(inv)
                    })
                    .collect();
                (out, ch, 1)
            }
            LayerOp::Dense { inputs: n_in, outputs, offset } => {
                debug_assert_eq!(n_in, ch * width);
                let w = &theta[offset..offset + outputs * n_in];
                let b = &theta[offset + outputs * n_in..offset + outputs * n_in + outputs];
                let out = (0..outputs)
                    .map(|o| {
                        let mut acc = b[o];
                        for (wi, ai) in w[o * n_in..(o + 1) * n_in].iter().zip(&act) {
                            acc += *wi * *ai;
                        }
                        acc
                    })
                    .collect();
                (out, outputs, 1)
            }
        };
        inputs.push((std::mem::replace(&mut act, out), ch, width));
        ch = och;
        width = owidth;
    }
    Ok((act, Tape { ops, inputs }))
}

/// Reverse pass: given `d loss / d logits`, accumulate `d loss / d theta`
/// into `grad` (same length as theta).
pub(crate) fn backward<S: Scalar>(theta: &[S], tape: &Tape<S>, dlogits: Vec<S>, grad: &mut [S]) {
    let mut delta = dlogits;
    for (idx, op) in tape.ops.iter().enumerate().rev() {
        let (input, ch, width) = (&tape.inputs[idx].0, tape.inputs[idx].1, tape.inputs[idx].2);
        let need_input_grad = idx > 0;
        delta = match *op {
            LayerOp::Conv { in_ch, out_ch, kernel, stride, offset } => {
                let ow = (width - kernel) / stride + 1;
                let nw = out_ch * in_ch * kernel;
                let mut din = if need_input_grad { vec![S::zero(); ch * width] } else { Vec::new() };
                for o in 0..out_ch {
                    let d = &delta[o * ow..(o + 1) * ow];
                    let mut db = S::zero();
                    for v in d {
                        db += *v;
                    }
                    grad[offset + nw + o] += db;
                    for i in 0..in_ch {
                        let wbase = offset + (o * in_ch + i) * kernel;
                        let a = &input[i * width..(i + 1) * width];
                        for k in 0..kernel {
                            let mut acc = S::zero();
                            for (t, dv) in d.iter().enumerate() {
                                acc += *dv * a[t * stride + k];
                            }
                            grad[wbase + k] += acc;
                        }
                        if need_input_grad {
                            let wk = &theta[wbase..wbase + kernel];
                            let di = &mut din[i * width..(i + 1) * width];
                            for (t, dv) in d.iter().enumerate() {
                                let seg = &mut di[t * stride..t * stride + kernel];
                                for k in 0..kernel {
                                    seg[k] += *dv * wk[k];
                                }
                            }
                        }
                    }
                }
                din
            }
            LayerOp::Softplus => input.iter().zip(&delta).map(|(x, d)| *d * x.sigmoid()).collect(),
            LayerOp::GlobalAvgPool => {
                let inv = 1.0 / width as f64;
                let mut din = Vec::with_capacity(ch * width);
                for d in delta.iter().take(ch) {
                    let v = d.scale(inv);
                    din.extend(std::iter::repeat(v).take(width));
                }
                din
            }
            LayerOp::Dense { inputs: n_in, outputs, offset } => {
                let nw = outputs * n_in;
                let mut din = if need_input_grad { vec![S::zero(); n_in] } else { Vec::new() };
                for o in 0..outputs {
                    let d = delta[o];
                    grad[offset + nw + o] += d;
                    let gw = &mut grad[offset + o * n_in..offset + (o + 1) * n_in];
                    for (g, a) in gw.iter_mut().zip(input) {
                        *g += d * *a;
                    }
                    if need_input_grad {
                        let w = &theta[offset + o * n_in..offset + (o + 1) * n_in];
                        for (di, wi) in din.iter_mut().zip(w) {
                            *di += d * *wi;
                        }
                    }
                }
                din
            }
        };
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy of `logits` against class `y` and its gradient
/// with respect to the logits.
pub(crate) fn cross_entropy<S: Scalar>(logits: &[S], y: usize) -> (S, Vec<S>) {
    let m = logits.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<S> = logits.iter().map(|&v| v - S::from_f64(m)).collect();
    let exps: Vec<S> = shifted.iter().map(|v| v.exp()).collect();
    let mut z = S::zero();
    for e in &exps {
        z += *e;
    }
    let loss = z.ln() - shifted[y];
    let mut grad: Vec<S> = exps.iter().map(|&e| e / z).collect();
    grad[y] += S::from_f64(-1.0);
    (loss, grad)
}
