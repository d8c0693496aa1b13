//! Forward and backward passes for a single example.
//!
//! Convolutions are lowered to matrix products (im2col) so the heavy lifting
//! happens inside a blocked GEMM kernel. Everything is `f64`.

use rand::Rng;

use super::arch::{ArchitectureSpec, InputKind, LayerKind, LayerParams, ParamLayout};
use super::Input;

/// Scratch buffers and cached activations for one example.
#[derive(Debug, Default, Clone)]
pub(crate) struct Trace {
    pub input: Vec<f64>,
    pub convs: Vec<ConvTrace>,
    /// Hidden activations after ReLU, before dropout.
    pub hidden_act: Vec<f64>,
    /// Per-unit dropout multiplier (0 or 1/keep); empty in inference.
    pub dropout: Vec<f64>,
    pub hidden_out: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    // backward scratch
    d_hidden: Vec<f64>,
    d_flat: Vec<f64>,
    d_act: Vec<f64>,
    d_col: Vec<f64>,
    d_x: Vec<f64>,
}

#[derive(Debug, Default, Clone)]
pub(crate) struct ConvTrace {
    pub side: usize,
    pub channels: usize,
    pub col: Vec<f64>,
    /// Post-ReLU activations, `[filters][side * side]`.
    pub act: Vec<f64>,
    /// Pooled output, `[filters][out_side * out_side]`.
    pub out: Vec<f64>,
    pub out_side: usize,
    /// Index into `act` of the maximum of each pooling window.
    pub argmax: Vec<usize>,
}

impl Trace {
    /// Output of the last feature stage (input to the dense layers).
    pub fn flat(&self) -> &[f64] {
        match self.convs.last() {
            Some(c) => &c.out,
            None => &self.input,
        }
    }
}

/// Writes the network input for one example, returning false on a shape mismatch.
pub(crate) fn load_input(arch: &ArchitectureSpec, input: &Input<'_>, dst: &mut Vec<f64>) -> bool {
    match (arch.input, input) {
        (InputKind::Image { size, channels }, Input::Pixels { size: s, data }) => {
            if *s != size || data.len() != size * size * channels {
                return false;
            }
            let plane = size * size;
            dst.clear();
            dst.resize(channels * plane, 0.0);
            // HWC bytes to CHW floats centered on zero
            for (p, px) in data.chunks_exact(channels).enumerate() {
                for (c, &v) in px.iter().enumerate() {
                    dst[c * plane + p] = v as f64 / 255.0 - 0.5;
                }
            }
            true
        }
        (InputKind::Vector { dim }, Input::Vector(v)) => {
            if v.len() != dim {
                return false;
            }
            dst.clear();
            dst.extend_from_slice(v);
            true
        }
        _ => false,
    }
}

/// `c = a · b (+ beta · c)` with explicit strides for `a` and `b`; `c` is
/// row-major `m × n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() > (m - 1) * a_strides.0 + (k - 1) * a_strides.1);
    assert!(b.len() > (k - 1) * b_strides.0 + (n - 1) * b_strides.1);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f64], channels: usize, side: usize, k: usize, col: &mut Vec<f64>) {
    let plane = side * side;
    let pad = (k / 2) as isize;
    col.clear();
    col.resize(channels * k * k * plane, 0.0);
    for c in 0..channels {
        let src = &x[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * plane..(row + 1) * plane];
                let dx = kx as isize - pad;
                let (x0, x1) = (dx.max(0) as usize, (side as isize + dx.min(0)) as usize);
                for y in 0..side {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= side as isize {
                        continue;
                    }
                    let s_row = &src[sy as usize * side..(sy as usize + 1) * side];
                    let d_row = &mut dst[y * side..(y + 1) * side];
                    // d_row[xx] = s_row[xx + dx] wherever both are in range
                    let d_start = (-dx).max(0) as usize;
                    let len = x1 - x0;
                    d_row[d_start..d_start + len].copy_from_slice(&s_row[x0..x1]);
                }
            }
        }
    }
}

fn col2im(dcol: &[f64], channels: usize, side: usize, k: usize, dx_out: &mut Vec<f64>) {
    let plane = side * side;
    let pad = (k / 2) as isize;
    dx_out.clear();
    dx_out.resize(channels * plane, 0.0);
    for c in 0..channels {
        let dst = &mut dx_out[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &dcol[row * plane..(row + 1) * plane];
                let dx = kx as isize - pad;
                let (x0, x1) = (dx.max(0) as usize, (side as isize + dx.min(0)) as usize);
                let s_start = (-dx).max(0) as usize;
                let len = x1 - x0;
                for y in 0..side {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= side as isize {
                        continue;
                    }
                    let d_row = &mut dst[sy as usize * side + x0..sy as usize * side + x1];
                    let s_row = &src[y * side + s_start..y * side + s_start + len];
                    for (d, s) in d_row.iter_mut().zip(s_row) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn dense_forward(params: &[f64], layer: &LayerParams, x: &[f64], y: &mut Vec<f64>) {
    let w = &params[layer.weights()];
    let b = &params[layer.biases()];
    y.clear();
    y.extend(
        w.chunks_exact(layer.fan_in)
            .zip(b)
            .map(|(row, bias)| bias + dot(row, x)),
    );
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(logits: &[f64], probs: &mut Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    probs.clear();
    probs.extend(logits.iter().map(|z| (z - m).exp()));
    let s: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= s);
}

/// Cross-entropy of `label` under `logits`, computed as log-sum-exp minus
/// the label logit.
pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Runs the network on the input already loaded into `trace.input`.
/// A generator turns on training-mode dropout.
pub(crate) fn forward<R: Rng>(
    arch: &ArchitectureSpec,
    layout: &ParamLayout,
    params: &[f64],
    trace: &mut Trace,
    dropout_rng: Option<&mut R>,
) {
    let mut layers = layout.layers.iter();
    if let InputKind::Image { size, channels } = arch.input {
        trace
            .convs
            .resize_with(arch.conv_blocks.len(), ConvTrace::default);
        let (mut side, mut ch) = (size, channels);
        for i in 0..arch.conv_blocks.len() {
            let layer = layers.next().expect("conv layer");
            let LayerKind::Conv(block) = layer.kind else {
                unreachable!("conv layers come first")
            };
            let (before, rest) = trace.convs.split_at_mut(i);
            let ct = &mut rest[0];
            let x: &[f64] = if i == 0 { &trace.input } else { &before[i - 1].out };
            let plane = side * side;
            ct.side = side;
            ct.channels = ch;
            im2col(x, ch, side, block.kernel, &mut ct.col);
            ct.act.clear();
            ct.act.resize(block.filters * plane, 0.0);
            gemm(
                block.filters,
                layer.fan_in,
                plane,
                &params[layer.weights()],
                (layer.fan_in, 1),
                &ct.col,
                (plane, 1),
                0.0,
                &mut ct.act,
            );
            let bias = &params[layer.biases()];
            for (f, row) in ct.act.chunks_exact_mut(plane).enumerate() {
                for v in row.iter_mut() {
                    *v = (*v + bias[f]).max(0.0);
                }
            }
            // max pool
            let p = block.pool;
            let out_side = side / p;
            ct.out_side = out_side;
            ct.out.clear();
            ct.argmax.clear();
            for f in 0..block.filters {
                let base = f * plane;
                for oy in 0..out_side {
                    for ox in 0..out_side {
                        let mut best = base + oy * p * side + ox * p;
                        for dy in 0..p {
                            for dx in 0..p {
                                let j = base + (oy * p + dy) * side + ox * p + dx;
                                if ct.act[j] > ct.act[best] {
                                    best = j;
                                }
                            }
                        }
                        ct.out.push(ct.act[best]);
                        ct.argmax.push(best);
                    }
                }
            }
            side = out_side;
            ch = block.filters;
        }
    }

    let mut hidden_in = std::mem::take(&mut trace.hidden_out);
    if arch.hidden_units > 0 {
        let layer = layers.next().expect("hidden layer");
        let flat = match trace.convs.last() {
            Some(c) => &c.out,
            None => &trace.input,
        };
        dense_forward(params, layer, flat, &mut trace.hidden_act);
        trace.hidden_act.iter_mut().for_each(|v| *v = v.max(0.0));
        trace.dropout.clear();
        hidden_in.clear();
        match dropout_rng {
            Some(rng) if arch.dropout_rate > 0.0 => {
                let keep = 1.0 - arch.dropout_rate;
                for &a in &trace.hidden_act {
                    let m = if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    };
                    trace.dropout.push(m);
                    hidden_in.push(a * m);
                }
            }
            _ => hidden_in.extend_from_slice(&trace.hidden_act),
        }
    } else {
        hidden_in.clear();
        hidden_in.extend_from_slice(trace.flat());
    }
    trace.hidden_out = hidden_in;
    let out_layer = layers.next().expect("output layer");
    dense_forward(params, out_layer, &trace.hidden_out, &mut trace.logits);
    softmax(&trace.logits, &mut trace.probs);
}

/// Accumulates into `grad` the gradient of `weight * cross_entropy(label)`
/// for the example whose forward pass is stored in `trace`.
pub(crate) fn backward(
    arch: &ArchitectureSpec,
    layout: &ParamLayout,
    params: &[f64],
    trace: &mut Trace,
    label: usize,
    weight: f64,
    grad: &mut [f64],
) {
    let n_layers = layout.layers.len();
    let out_layer = &layout.layers[n_layers - 1];
    let d_logits: Vec<f64> = trace
        .probs
        .iter()
        .enumerate()
        .map(|(c, p)| weight * (p - if c == label { 1.0 } else { 0.0 }))
        .collect();

    let needs_flat_grad = !arch.conv_blocks.is_empty() || arch.hidden_units > 0;
    dense_backward(
        params,
        out_layer,
        &trace.hidden_out,
        &d_logits,
        grad,
        needs_flat_grad.then_some(&mut trace.d_hidden),
    );

    if arch.hidden_units > 0 {
        let hidden = &layout.layers[n_layers - 2];
        for (j, d) in trace.d_hidden.iter_mut().enumerate() {
            let mask = trace.dropout.get(j).copied().unwrap_or(1.0);
            if trace.hidden_act[j] <= 0.0 {
                *d = 0.0;
            } else {
                *d *= mask;
            }
        }
        let d_hidden = std::mem::take(&mut trace.d_hidden);
        let want = !arch.conv_blocks.is_empty();
        let x = match trace.convs.last() {
            Some(c) => &c.out,
            None => &trace.input,
        };
        dense_backward(
            params,
            hidden,
            x,
            &d_hidden,
            grad,
            want.then_some(&mut trace.d_flat),
        );
        trace.d_hidden = d_hidden;
    } else if !arch.conv_blocks.is_empty() {
        std::mem::swap(&mut trace.d_flat, &mut trace.d_hidden);
    }

    // conv layers, last to first; trace.d_flat holds d(pooled output)
    for i in (0..arch.conv_blocks.len()).rev() {
        let layer = &layout.layers[i];
        let ct = &trace.convs[i];
        let plane = ct.side * ct.side;
        let filters = layer.fan_out;
        trace.d_act.clear();
        trace.d_act.resize(filters * plane, 0.0);
        for (&j, &d) in ct.argmax.iter().zip(&trace.d_flat) {
            // a zero activation passed no gradient through its ReLU
            if ct.act[j] > 0.0 {
                trace.d_act[j] += d;
            }
        }
        let (gw, gb) = {
            let (w, b) = (layer.weights(), layer.biases());
            let (head, tail) = grad.split_at_mut(b.start);
            (&mut head[w], &mut tail[..b.len()])
        };
        gemm(
            filters,
            plane,
            layer.fan_in,
            &trace.d_act,
            (plane, 1),
            &ct.col,
            (1, plane),
            1.0,
            gw,
        );
        for (f, row) in trace.d_act.chunks_exact(plane).enumerate() {
            gb[f] += row.iter().sum::<f64>();
        }
        if i > 0 {
            trace.d_col.clear();
            trace.d_col.resize(layer.fan_in * plane, 0.0);
            gemm(
                layer.fan_in,
                filters,
                plane,
                &params[layer.weights()],
                (1, layer.fan_in),
                &trace.d_act,
                (plane, 1),
                0.0,
                &mut trace.d_col,
            );
            let kernel = match layer.kind {
                LayerKind::Conv(b) => b.kernel,
                LayerKind::Dense => unreachable!(),
            };
            col2im(&trace.d_col, ct.channels, ct.side, kernel, &mut trace.d_x);
            std::mem::swap(&mut trace.d_flat, &mut trace.d_x);
        }
    }
}

fn dense_backward(
    params: &[f64],
    layer: &LayerParams,
    x: &[f64],
    dy: &[f64],
    grad: &mut [f64],
    dx: Option<&mut Vec<f64>>,
) {
    let gw = &mut grad[layer.weights()];
    for (row, &d) in gw.chunks_exact_mut(layer.fan_in).zip(dy) {
        if d != 0.0 {
            for (g, xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
    }
    for (g, &d) in grad[layer.biases()].iter_mut().zip(dy) {
        *g += d;
    }
    if let Some(dx) = dx {
        dx.clear();
        dx.resize(layer.fan_in, 0.0);
        let w = &params[layer.weights()];
        for (row, &d) in w.chunks_exact(layer.fan_in).zip(dy) {
            if d != 0.0 {
                for (o, wi) in dx.iter_mut().zip(row) {
                    *o += d * wi;
                }
            }
        }
    }
}
