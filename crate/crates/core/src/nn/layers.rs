//! Batched layer kernels. Activations are flat `f64` buffers, sample-major,
//! and each sample is `C x H x W` row-major for spatial layers.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rayon::prelude::*;

/// Samples per parallel work item. Fixed so that reductions happen in the
/// same order whatever the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.height - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width - self.kernel) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    fn in_size(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn out_size(&self) -> usize {
        self.filters * self.positions()
    }
}

fn view(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("buffer matches view shape")
}

fn view_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("buffer matches view shape")
}

pub fn dense_forward(x: &[f64], n: usize, inputs: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let units = b.len();
    let mut y = Array2::from_shape_fn((n, units), |(_, j)| b[j]);
    general_mat_mul(1.0, &view(x, n, inputs), &view(w, units, inputs).t(), 1.0, &mut y);
    y.into_raw_vec_and_offset().0
}

/// Accumulates into `dw`/`db` and returns the input gradient.
pub fn dense_backward(
    x: &[f64],
    dy: &[f64],
    n: usize,
    inputs: usize,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let units = db.len();
    let dyv = view(dy, n, units);
    general_mat_mul(1.0, &dyv.t(), &view(x, n, inputs), 1.0, &mut view_mut(dw, units, inputs));
    for row in dy.chunks_exact(units) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let mut dx = vec![0.0; n * inputs];
    general_mat_mul(1.0, &dyv, &view(w, units, inputs), 0.0, &mut view_mut(&mut dx, n, inputs));
    dx
}

/// Unfolds one sample into a `(C k k) x (OH OW)` patch matrix.
fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let (oh, ow, k, s) = (g.out_h(), g.out_w(), g.kernel, g.stride);
    let p = oh * ow;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let src = &plane[(oy * s + ki) * g.width + kj..];
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        line.copy_from_slice(&src[..ow]);
                    } else {
                        for (ox, v) in line.iter_mut().enumerate() {
                            *v = src[ox * s];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (oh, ow, k, s) = (g.out_h(), g.out_w(), g.kernel, g.stride);
    let p = oh * ow;
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let base = (oy * s + ki) * g.width + kj;
                    for ox in 0..ow {
                        plane[base + ox * s] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

pub fn conv_forward(x: &[f64], n: usize, g: &ConvGeom, w: &[f64], b: &[f64]) -> Vec<f64> {
    let (in_size, out_size, patch, p) = (g.in_size(), g.out_size(), g.patch(), g.positions());
    let mut y = vec![0.0; n * out_size];
    y.par_chunks_mut(out_size)
        .zip(x.par_chunks(in_size))
        .for_each_init(
            || vec![0.0; patch * p],
            |cols, (ys, xs)| {
                im2col(xs, g, cols);
                for (f, row) in ys.chunks_exact_mut(p).enumerate() {
                    row.fill(b[f]);
                }
                general_mat_mul(
                    1.0,
                    &view(w, g.filters, patch),
                    &view(cols, patch, p),
                    1.0,
                    &mut view_mut(ys, g.filters, p),
                );
            },
        );
    y
}

/// Accumulates into `dw`/`db` and returns the input gradient.
pub fn conv_backward(
    x: &[f64],
    dy: &[f64],
    n: usize,
    g: &ConvGeom,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let (in_size, out_size, patch, p) = (g.in_size(), g.out_size(), g.patch(), g.positions());
    let _ = n;
    let partials: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = x
        .par_chunks(in_size * CHUNK)
        .zip(dy.par_chunks(out_size * CHUNK))
        .map(|(xc, dyc)| {
            let mut cols = vec![0.0; patch * p];
            let mut dcols = vec![0.0; patch * p];
            let mut dw_part = vec![0.0; dw.len()];
            let mut db_part = vec![0.0; db.len()];
            let mut dx = vec![0.0; xc.len()];
            for ((xs, dys), dxs) in xc
                .chunks_exact(in_size)
                .zip(dyc.chunks_exact(out_size))
                .zip(dx.chunks_exact_mut(in_size))
            {
                im2col(xs, g, &mut cols);
                let dyv = view(dys, g.filters, p);
                general_mat_mul(
                    1.0,
                    &dyv,
                    &view(&cols, patch, p).t(),
                    1.0,
                    &mut view_mut(&mut dw_part, g.filters, patch),
                );
                for (f, row) in dys.chunks_exact(p).enumerate() {
                    db_part[f] += row.iter().sum::<f64>();
                }
                general_mat_mul(
                    1.0,
                    &view(w, g.filters, patch).t(),
                    &dyv,
                    0.0,
                    &mut view_mut(&mut dcols, patch, p),
                );
                col2im(&dcols, g, dxs);
            }
            (dx, dw_part, db_part)
        })
        .collect();

    let mut dx = Vec::with_capacity(x.len());
    for (dx_part, dw_part, db_part) in partials {
        dx.extend_from_slice(&dx_part);
        for (a, v) in dw.iter_mut().zip(&dw_part) {
            *a += v;
        }
        for (a, v) in db.iter_mut().zip(&db_part) {
            *a += v;
        }
    }
    dx
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub size: usize,
    pub stride: usize,
}

impl PoolGeom {
    pub fn out_h(&self) -> usize {
        (self.height - self.size) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width - self.size) / self.stride + 1
    }
}

/// Returns pooled values and, per output, the flat input index of the
/// window maximum (first occurrence wins).
pub fn maxpool_forward(x: &[f64], n: usize, g: &PoolGeom) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let out_len = n * g.channels * oh * ow;
    let mut y = Vec::with_capacity(out_len);
    let mut arg = Vec::with_capacity(out_len);
    for plane in 0..n * g.channels {
        let base = plane * g.height * g.width;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..g.size {
                    let row = base + (oy * g.stride + dy) * g.width + ox * g.stride;
                    for dx in 0..g.size {
                        let v = x[row + dx];
                        if v > best {
                            best = v;
                            best_i = row + dx;
                        }
                    }
                }
                y.push(best);
                arg.push(best_i as u32);
            }
        }
    }
    (y, arg)
}

pub fn maxpool_backward(input_len: usize, argmax: &[u32], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&i, &g) in argmax.iter().zip(dy) {
        dx[i as usize] += g;
    }
    dx
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let n = labels.len();
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for ((row, g), &label) in logits
        .chunks_exact(classes)
        .zip(grad.chunks_exact_mut(classes))
        .zip(labels)
    {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - max).exp();
            sum += *gi;
        }
        loss += sum.ln() - (row[label] - max);
        for gi in g.iter_mut() {
            *gi /= sum * n as f64;
        }
        g[label] -= 1.0 / n as f64;
    }
    (loss / n as f64, grad)
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, o) in logits.chunks_exact(classes).zip(out.chunks_exact_mut(classes)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (oi, &z) in o.iter_mut().zip(row) {
            *oi = (z - max).exp();
            sum += *oi;
        }
        for oi in o.iter_mut() {
            *oi /= sum;
        }
    }
    out
}
