//! Dense f32 kernels. Row-parallel work is split into fixed 64-row chunks, so
//! every output element is reduced in the same order whatever the thread
//! count.

use rayon::prelude::*;

const ROW_CHUNK: usize = 64;

/// `c[m×n] = a[m×k] · b[n×k]ᵀ`.
pub fn matmul_bt(a: &[f32], m: usize, k: usize, b: &[f32], n: usize) -> Vec<f32> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = vec![0.0f32; m * n];
    if m == 0 || n == 0 {
        return c;
    }
    c.par_chunks_mut(ROW_CHUNK * n)
        .zip(a.par_chunks(ROW_CHUNK * k))
        .for_each(|(c, a)| {
            let rows = a.len() / k.max(1);
            // SAFETY: slices cover rows×k, n×k and rows×n with the strides given.
            unsafe {
                matrixmultiply::sgemm(
                    rows,
                    k,
                    n,
                    1.0,
                    a.as_ptr(),
                    k as isize,
                    1,
                    b.as_ptr(),
                    1,
                    k as isize,
                    0.0,
                    c.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
    c
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn forward(&self, x: &[f32], rows: usize) -> Vec<f32> {
        let mut y = matmul_bt(x, rows, self.in_dim, &self.weight, self.out_dim);
        if let Some(b) = &self.bias {
            for row in y.chunks_exact_mut(self.out_dim) {
                for (v, &b) in row.iter_mut().zip(b) {
                    *v += b;
                }
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

pub const LN_EPS: f32 = 1e-5;

impl LayerNorm {
    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let w = self.gamma.len();
        let mut out = vec![0.0; x.len()];
        for (row, o) in x.chunks_exact(w).zip(out.chunks_exact_mut(w)) {
            let mean = row.iter().sum::<f32>() / w as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / w as f32;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for i in 0..w {
                o[i] = (row[i] - mean) * inv * self.gamma[i] + self.beta[i];
            }
        }
        out
    }
}

pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

pub fn gelu_inplace(x: &mut [f32]) {
    x.iter_mut().for_each(|v| *v = gelu(*v));
}

pub fn add_inplace(x: &mut [f32], y: &[f32]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

/// 1-D convolution over time, kernel 3, one frame of zero padding each side.
/// `x` is `[t × c_in]`; `weight` is `[c_out, c_in, 3]`.
pub fn conv1d_k3(x: &[f32], t: usize, c_in: usize, lin: &Linear, stride: usize) -> (Vec<f32>, usize) {
    debug_assert_eq!(lin.in_dim, c_in * 3);
    let t_out = if t == 0 { 0 } else { (t - 1) / stride + 1 };
    let mut cols = vec![0.0f32; t_out * c_in * 3];
    for (to, col) in cols.chunks_exact_mut(c_in * 3).enumerate() {
        for k in 0..3 {
            let ti = (to * stride + k) as isize - 1;
            if ti < 0 || ti as usize >= t {
                continue;
            }
            let src = &x[ti as usize * c_in..(ti as usize + 1) * c_in];
            for c in 0..c_in {
                col[c * 3 + k] = src[c];
            }
        }
    }
    (lin.forward(&cols, t_out), t_out)
}

/// Multi-head scaled dot-product attention on `[rows × width]` matrices.
/// With `causal_offset = Some(o)`, query `i` sees keys `0..=o + i`; masked
/// keys get exactly zero weight.
#[allow(clippy::too_many_arguments)]
pub fn attention(
    q: &[f32],
    m: usize,
    k: &[f32],
    v: &[f32],
    n: usize,
    width: usize,
    heads: usize,
    causal_offset: Option<usize>,
) -> Vec<f32> {
    let d = width / heads;
    let scale = 1.0 / (d as f32).sqrt();
    let mut out = vec![0.0f32; m * width];
    out.par_chunks_mut(ROW_CHUNK * width)
        .enumerate()
        .for_each(|(chunk, out)| {
            let r0 = chunk * ROW_CHUNK;
            let rows = out.len() / width;
            let mut p = vec![0.0f32; rows * n];
            for h in 0..heads {
                // SAFETY: q/k/v rows have stride `width`; head h occupies
                // columns h*d..(h+1)*d; p is rows×n; out is rows×width.
                unsafe {
                    matrixmultiply::sgemm(
                        rows,
                        d,
                        n,
                        scale,
                        q.as_ptr().add(r0 * width + h * d),
                        width as isize,
                        1,
                        k.as_ptr().add(h * d),
                        1,
                        width as isize,
                        0.0,
                        p.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
                for (i, row) in p.chunks_exact_mut(n).enumerate() {
                    let visible = causal_offset.map_or(n, |o| (o + r0 + i + 1).min(n));
                    let max = row[..visible].iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
                    let mut sum = 0.0;
                    for s in &mut row[..visible] {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    let inv = 1.0 / sum;
                    row[..visible].iter_mut().for_each(|s| *s *= inv);
                    row[visible..].iter_mut().for_each(|s| *s = 0.0);
                }
                unsafe {
                    matrixmultiply::sgemm(
                        rows,
                        n,
                        d,
                        1.0,
                        p.as_ptr(),
                        n as isize,
                        1,
                        v.as_ptr().add(h * d),
                        width as isize,
                        1,
                        0.0,
                        out.as_mut_ptr().add(h * d),
                        width as isize,
                        1,
                    );
                }
            }
        });
    out
}

/// Fixed sinusoidal position table `[length × channels]`: sines in the first
/// half of the channels, cosines in the second.
pub fn sinusoids(length: usize, channels: usize) -> Vec<f32> {
    let half = channels / 2;
    let inc = (10_000f64).ln() / (half.max(2) - 1) as f64;
    let mut out = vec![0.0f32; length * channels];
    for t in 0..length {
        for i in 0..half {
            let a = t as f64 * (-inc * i as f64).exp();
            out[t * channels + i] = a.sin() as f32;
            out[t * channels + half + i] = a.cos() as f32;
        }
    }
    out
}
