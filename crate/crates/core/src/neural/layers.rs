//! Forward and backward kernels. Activations are `(channels, height, width)`
//! row-major; convolutions are stride 1 with zero "same" padding and run as
//! im2col followed by a matrix product.

use matrixmultiply::dgemm;

/// `C (m×n) = alpha · A (m×k) · B (k×n) + beta · C`, each operand given by
/// its row and column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: every stride/extent pair addresses inside the given slices,
    // checked by the callers' shape bookkeeping (and debug asserts above).
    unsafe {
        dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    fn rows(&self) -> usize {
        self.in_c * self.k * self.k
    }
    fn pixels(&self) -> usize {
        self.h * self.w
    }
}

/// Patch matrix of shape `(in_c·k·k) × (h·w)`.
pub fn im2col(input: &[f64], s: &ConvShape) -> Vec<f64> {
    let (h, w, k) = (s.h, s.w, s.k);
    let pad = (k / 2) as isize;
    let mut col = vec![0.0; s.rows() * s.pixels()];
    for c in 0..s.in_c {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut col[row * h * w..(row + 1) * h * w];
                let dy = ki as isize - pad;
                let dx = kj as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst_row = &mut dst[y * w..(y + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    if x0 < x1 {
                        let s0 = (x0 as isize + dx) as usize;
                        dst_row[x0..x1].copy_from_slice(&src_row[s0..s0 + (x1 - x0)]);
                    }
                }
            }
        }
    }
    col
}

/// Scatter-adds a patch-matrix gradient back onto the input gradient.
fn col2im(col: &[f64], s: &ConvShape, out: &mut [f64]) {
    let (h, w, k) = (s.h, s.w, s.k);
    let pad = (k / 2) as isize;
    for c in 0..s.in_c {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &col[row * h * w..(row + 1) * h * w];
                let dy = ki as isize - pad;
                let dx = kj as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src_row = &src[y * w..(y + 1) * w];
                    for x in x0..x1 {
                        dst_row[(x as isize + dx) as usize] += src_row[x];
                    }
                }
            }
        }
    }
}

/// Returns the output and the patch matrix needed by the backward pass.
pub fn conv_forward(input: &[f64], weight: &[f64], bias: &[f64], s: &ConvShape) -> (Vec<f64>, Vec<f64>) {
    let col = im2col(input, s);
    let (rows, px) = (s.rows(), s.pixels());
    let mut out = vec![0.0; s.out_c * px];
    for (o, chunk) in out.chunks_exact_mut(px).enumerate() {
        chunk.fill(bias[o]);
    }
    gemm(s.out_c, rows, px, weight, (rows as isize, 1), &col, (px as isize, 1), 1.0, &mut out);
    (out, col)
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `need_input` is set.
pub fn conv_backward(
    d_out: &[f64],
    col: &[f64],
    weight: &[f64],
    s: &ConvShape,
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    need_input: bool,
) -> Option<Vec<f64>> {
    let (rows, px) = (s.rows(), s.pixels());
    // dW += dOut · colᵀ
    gemm(s.out_c, px, rows, d_out, (px as isize, 1), col, (1, px as isize), 1.0, d_weight);
    for (o, chunk) in d_out.chunks_exact(px).enumerate() {
        d_bias[o] += chunk.iter().sum::<f64>();
    }
    if !need_input {
        return None;
    }
    // dCol = Wᵀ · dOut
    let mut d_col = vec![0.0; rows * px];
    gemm(rows, s.out_c, px, weight, (1, rows as isize), d_out, (px as isize, 1), 0.0, &mut d_col);
    let mut d_in = vec![0.0; s.in_c * px];
    col2im(&d_col, s, &mut d_in);
    Some(d_in)
}

/// Non-overlapping max pooling with window and stride `size`; trailing
/// rows/columns that do not fill a window are dropped. Ties go to the first
/// maximum in scan order.
pub fn maxpool_forward(input: &[f64], c: usize, h: usize, w: usize, size: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / size, w / size);
    let mut out = vec![0.0; c * oh * ow];
    let mut arg = vec![0u32; c * oh * ow];
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * size + dy) * w + ox * size + dx;
                        if input[i] > best {
                            best = input[i];
                            best_i = i;
                        }
                    }
                }
                let o = (ch * oh + oy) * ow + ox;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward(d_out: &[f64], arg: &[u32], in_len: usize) -> Vec<f64> {
    let mut d_in = vec![0.0; in_len];
    for (g, &i) in d_out.iter().zip(arg) {
        d_in[i as usize] += g;
    }
    d_in
}

pub fn relu_forward(input: &mut [f64]) -> Vec<bool> {
    input
        .iter_mut()
        .map(|x| {
            let on = *x > 0.0;
            if !on {
                *x = 0.0;
            }
            on
        })
        .collect()
}

pub fn relu_backward(d_out: &mut [f64], mask: &[bool]) {
    for (g, &on) in d_out.iter_mut().zip(mask) {
        if !on {
            *g = 0.0;
        }
    }
}

/// `y = W·x + b` with `W` stored `(out × in)`.
pub fn dense_forward(x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    weight
        .chunks_exact(n_in)
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

pub fn dense_backward(
    d_out: &[f64],
    x: &[f64],
    weight: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    need_input: bool,
) -> Option<Vec<f64>> {
    let n_in = x.len();
    for ((g_row, &g), db) in d_weight.chunks_exact_mut(n_in).zip(d_out).zip(d_bias.iter_mut()) {
        *db += g;
        if g != 0.0 {
            for (gw, xi) in g_row.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
    }
    need_input.then(|| {
        let mut d_in = vec![0.0; n_in];
        for (row, &g) in weight.chunks_exact(n_in).zip(d_out) {
            if g != 0.0 {
                for (d, w) in d_in.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
        d_in
    })
}
