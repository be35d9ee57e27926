use super::Array2;
use crate::{Error, Result};

/// Temporal padding policy for 1-D convolution.
///
/// `Same` pads so the output has ceil(T / stride) frames (zeros split evenly,
/// extra zero on the right); `Valid` uses no padding and requires T >= K.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Convolution weights for kernel width `k`, laid out as a (k * cin) x cout
/// matrix so row `k * cin + ci` holds the output-channel weights for tap `k`
/// of input channel `ci`.
#[derive(Debug, Clone, Copy)]
pub struct Conv1dKernel<'a> {
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    pub weights: &'a Array2,
}

impl<'a> Conv1dKernel<'a> {
    pub fn new(k: usize, cin: usize, cout: usize, weights: &'a Array2) -> Result<Self> {
        if weights.shape() != (k * cin, cout) {
            return Err(Error::ShapeMismatch {
                op: "Conv1dKernel::new",
                expected: format!("{}x{}", k * cin, cout),
                got: format!("{}x{}", weights.rows(), weights.cols()),
            });
        }
        Ok(Self {
            k,
            cin,
            cout,
            weights,
        })
    }
}

/// Output length for a conv over `t` frames.
pub fn conv1d_output_len(t: usize, k: usize, stride: usize, padding: Padding) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Config("conv1d stride must be >= 1".into()));
    }
    match padding {
        Padding::Same => Ok(t.div_ceil(stride)),
        Padding::Valid => {
            if t < k {
                Err(Error::InputTooShort {
                    op: "conv1d",
                    needed: k,
                    got: t,
                })
            } else {
                Ok((t - k) / stride + 1)
            }
        }
    }
}

fn pad_left(t: usize, k: usize, stride: usize, out_len: usize, padding: Padding) -> usize {
    match padding {
        Padding::Valid => 0,
        Padding::Same => {
            let span = (out_len - 1) * stride + k;
            span.saturating_sub(t) / 2
        }
    }
}

pub fn conv1d_forward(
    input: &Array2,
    kernel: &Conv1dKernel,
    stride: usize,
    bias: &[f64],
    padding: Padding,
) -> Result<Array2> {
    let (t, cin) = input.shape();
    if cin != kernel.cin {
        return Err(Error::ShapeMismatch {
            op: "conv1d_forward",
            expected: format!("{} input channels", kernel.cin),
            got: format!("{cin}"),
        });
    }
    if bias.len() != kernel.cout {
        return Err(Error::ShapeMismatch {
            op: "conv1d_forward",
            expected: format!("bias of length {}", kernel.cout),
            got: format!("{}", bias.len()),
        });
    }
    let out_len = conv1d_output_len(t, kernel.k, stride, padding)?;
    let lead = pad_left(t, kernel.k, stride, out_len, padding);

    let mut out = Array2::zeros(out_len, kernel.cout);
    for tp in 0..out_len {
        let out_row = out.row_mut(tp);
        out_row.copy_from_slice(bias);
        let start = (tp * stride) as isize - lead as isize;
        for k in 0..kernel.k {
            let ti = start + k as isize;
            if ti < 0 || ti >= t as isize {
                continue;
            }
            let in_row = input.row(ti as usize);
            for (ci, &a) in in_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let w_row = kernel.weights.row(k * kernel.cin + ci);
                for (o, &w) in out_row.iter_mut().zip(w_row.iter()) {
                    *o += a * w;
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass matching [`conv1d_forward`]; returns gradients for the
/// input, the kernel weights, and the bias.
pub fn conv1d_backward(
    input: &Array2,
    kernel: &Conv1dKernel,
    stride: usize,
    padding: Padding,
    grad_out: &Array2,
) -> Result<(Array2, Array2, Vec<f64>)> {
    let (t, cin) = input.shape();
    let out_len = conv1d_output_len(t, kernel.k, stride, padding)?;
    if grad_out.shape() != (out_len, kernel.cout) {
        return Err(Error::ShapeMismatch {
            op: "conv1d_backward",
            expected: format!("{out_len}x{}", kernel.cout),
            got: format!("{}x{}", grad_out.rows(), grad_out.cols()),
        });
    }
    let lead = pad_left(t, kernel.k, stride, out_len, padding);

    let mut grad_in = Array2::zeros(t, cin);
    let mut grad_w = Array2::zeros(kernel.k * cin, kernel.cout);
    let mut grad_b = vec![0.0; kernel.cout];

    for tp in 0..out_len {
        let g_row = grad_out.row(tp);
        for (b, &g) in grad_b.iter_mut().zip(g_row.iter()) {
            *b += g;
        }
        let start = (tp * stride) as isize - lead as isize;
        for k in 0..kernel.k {
            let ti = start + k as isize;
            if ti < 0 || ti >= t as isize {
                continue;
            }
            let ti = ti as usize;
            let in_row = input.row(ti);
            let gi_row = grad_in.row_mut(ti);
            for ci in 0..cin {
                let w_row = kernel.weights.row(k * cin + ci);
                let gw_row = grad_w.row_mut(k * cin + ci);
                let a = in_row[ci];
                let mut acc = 0.0;
                for ((&w, gw), &g) in w_row.iter().zip(gw_row.iter_mut()).zip(g_row.iter()) {
                    acc += w * g;
                    *gw += a * g;
                }
                gi_row[ci] += acc;
            }
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

pub fn linear_forward(input: &Array2, weights: &Array2, bias: &[f64]) -> Result<Array2> {
    let (t, din) = input.shape();
    let (wr, dout) = weights.shape();
    if din != wr || bias.len() != dout {
        return Err(Error::ShapeMismatch {
            op: "linear_forward",
            expected: format!("weights {din}xN, bias of length N"),
            got: format!("weights {wr}x{dout}, bias {}", bias.len()),
        });
    }
    let mut out = Array2::zeros(t, dout);
    for ti in 0..t {
        let out_row = out.row_mut(ti);
        out_row.copy_from_slice(bias);
        let in_row = input.row(ti);
        for (ci, &a) in in_row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let w_row = weights.row(ci);
            for (o, &w) in out_row.iter_mut().zip(w_row.iter()) {
                *o += a * w;
            }
        }
    }
    Ok(out)
}

/// Backward pass matching [`linear_forward`]; returns gradients for the
/// input, the weights, and the bias.
pub fn linear_backward(
    input: &Array2,
    weights: &Array2,
    grad_out: &Array2,
) -> Result<(Array2, Array2, Vec<f64>)> {
    let (t, din) = input.shape();
    let (_, dout) = weights.shape();
    if grad_out.shape() != (t, dout) {
        return Err(Error::ShapeMismatch {
            op: "linear_backward",
            expected: format!("{t}x{dout}"),
            got: format!("{}x{}", grad_out.rows(), grad_out.cols()),
        });
    }
    let mut grad_in = Array2::zeros(t, din);
    let mut grad_w = Array2::zeros(din, dout);
    let mut grad_b = vec![0.0; dout];

    for ti in 0..t {
        let g_row = grad_out.row(ti);
        for (b, &g) in grad_b.iter_mut().zip(g_row.iter()) {
            *b += g;
        }
        let in_row = input.row(ti);
        let gi_row = grad_in.row_mut(ti);
        for ci in 0..din {
            let w_row = weights.row(ci);
            let gw_row = grad_w.row_mut(ci);
            let a = in_row[ci];
            let mut acc = 0.0;
            for ((&w, gw), &g) in w_row.iter().zip(gw_row.iter_mut()).zip(g_row.iter()) {
                acc += w * g;
                *gw += a * g;
            }
            gi_row[ci] += acc;
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

pub fn relu(input: &Array2) -> Array2 {
    input.map(|v| v.max(0.0))
}

/// Backward of ReLU given the forward *input*.
pub fn relu_backward(input: &Array2, grad_out: &Array2) -> Array2 {
    debug_assert!(input.same_shape(grad_out));
    let mut grad_in = grad_out.clone();
    for (g, &x) in grad_in.as_mut_slice().iter_mut().zip(input.as_slice()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    grad_in
}

/// Row-wise log-softmax with max subtraction for stability.
pub fn log_softmax(input: &Array2) -> Array2 {
    let mut out = input.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter() {
            sum += (v - max).exp();
        }
        let log_z = max + sum.ln();
        for v in row.iter_mut() {
            *v -= log_z;
        }
    }
    out
}

/// Backward of log-softmax: grad_in = grad_out - softmax(x) * sum(grad_out).
/// Takes the forward *output* (the log-probabilities).
pub fn log_softmax_backward(log_probs: &Array2, grad_out: &Array2) -> Array2 {
    debug_assert!(log_probs.same_shape(grad_out));
    let mut grad_in = grad_out.clone();
    for r in 0..grad_in.rows() {
        let g_sum: f64 = grad_out.row(r).iter().sum();
        let lp = log_probs.row(r);
        for (g, &l) in grad_in.row_mut(r).iter_mut().zip(lp.iter()) {
            *g -= l.exp() * g_sum;
        }
    }
    grad_in
}

/// Softmax of a single row of values.
pub fn softmax_row(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = values.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}
