//! Forward and backward passes of the building blocks.
//!
//! Every `*_backward` accumulates parameter gradients into its `grad`
//! argument and returns the gradient with respect to its input.

use super::params::{Block, Linear, Norm};
use crate::tensor::{gemm, matmul, Matrix, Real, View, ViewMut};

pub const NORM_EPS: f64 = 1e-5;
pub const ELU_ALPHA: f64 = 1.0;

pub fn linear<T: Real>(x: &Matrix<T>, l: &Linear<T>) -> Matrix<T> {
    let mut y = Matrix::zeros(x.rows(), l.weight.cols());
    for r in 0..y.rows() {
        y.row_mut(r).copy_from_slice(l.bias.as_slice());
    }
    gemm(T::one(), x.view(), l.weight.view(), T::one(), y.view_mut());
    y
}

pub fn linear_backward<T: Real>(x: &Matrix<T>, dy: &Matrix<T>, l: &Linear<T>, grad: &mut Linear<T>) -> Matrix<T> {
    add_column_sums(dy, &mut grad.bias);
    weight_backward(x, dy, &l.weight, &mut grad.weight)
}

/// Backward of `y = x @ w` without bias.
pub fn weight_backward<T: Real>(x: &Matrix<T>, dy: &Matrix<T>, w: &Matrix<T>, grad: &mut Matrix<T>) -> Matrix<T> {
    gemm(T::one(), x.view().t(), dy.view(), T::one(), grad.view_mut());
    matmul(dy.view(), w.view().t())
}

fn add_column_sums<T: Real>(dy: &Matrix<T>, acc: &mut Matrix<T>) {
    let acc = acc.as_mut_slice();
    for r in 0..dy.rows() {
        for (a, &d) in acc.iter_mut().zip(dy.row(r)) {
            *a = *a + d;
        }
    }
}

pub struct NormCache<T> {
    xhat: Matrix<T>,
    rstd: Vec<T>,
}

pub fn layer_norm<T: Real>(x: &Matrix<T>, n: &Norm<T>) -> (Matrix<T>, NormCache<T>) {
    let cols = x.cols();
    let inv_n = T::one() / T::of(cols as f64);
    let eps = T::of(NORM_EPS);
    let mut xhat = Matrix::zeros(x.rows(), cols);
    let mut y = Matrix::zeros(x.rows(), cols);
    let mut rstd = Vec::with_capacity(x.rows());
    let (gain, bias) = (n.gain.as_slice(), n.bias.as_slice());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() * inv_n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
        let rs = T::one() / (var + eps).sqrt();
        rstd.push(rs);
        let xh = xhat.row_mut(r);
        for (o, &v) in xh.iter_mut().zip(row) {
            *o = (v - mean) * rs;
        }
        let yr = y.row_mut(r);
        for c in 0..cols {
            yr[c] = xhat.get(r, c) * gain[c] + bias[c];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub fn layer_norm_backward<T: Real>(
    dy: &Matrix<T>,
    cache: &NormCache<T>,
    n: &Norm<T>,
    grad: &mut Norm<T>,
) -> Matrix<T> {
    let cols = dy.cols();
    let inv_n = T::one() / T::of(cols as f64);
    let gain = n.gain.as_slice();
    let mut dx = Matrix::zeros(dy.rows(), cols);
    let mut dxhat = vec![T::zero(); cols];
    for r in 0..dy.rows() {
        let (dyr, xh) = (dy.row(r), cache.xhat.row(r));
        {
            let gg = grad.gain.as_mut_slice();
            for c in 0..cols {
                gg[c] = gg[c] + dyr[c] * xh[c];
            }
        }
        {
            let gb = grad.bias.as_mut_slice();
            for c in 0..cols {
                gb[c] = gb[c] + dyr[c];
            }
        }
        for c in 0..cols {
            dxhat[c] = dyr[c] * gain[c];
        }
        let mean_d = dxhat.iter().copied().sum::<T>() * inv_n;
        let mean_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() * inv_n;
        let rs = cache.rstd[r];
        let out = dx.row_mut(r);
        for c in 0..cols {
            out[c] = rs * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.044715;

/// `tanh` through one `exp`; several times cheaper than the libm call and saturates cleanly.
fn fast_tanh<T: Real>(u: T) -> T {
    let two = T::of(2.0);
    T::one() - two / ((two * u).exp() + T::one())
}

fn gelu_scalar<T: Real>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + fast_tanh(k * (x + T::of(GELU_C) * x * x * x)))
}

fn gelu_grad_scalar<T: Real>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    let c = T::of(GELU_C);
    let t = fast_tanh(k * (x + c * x * x * x));
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::of(3.0) * c * x * x)
}

/// Tanh-approximated GELU.
pub fn gelu<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    Matrix::from_vec(
        x.rows(),
        x.cols(),
        x.as_slice().iter().map(|&v| gelu_scalar(v)).collect(),
    )
}

pub fn gelu_backward<T: Real>(x: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
    let data = x
        .as_slice()
        .iter()
        .zip(dy.as_slice())
        .map(|(&v, &d)| d * gelu_grad_scalar(v))
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

#[cfg(test)]
thread_local! {
    /// Mutation switch for checking that the gradient oracle catches a wrong derivative.
    pub(crate) static BREAK_ELU_GRAD: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

fn elu_grad_scalar<T: Real>(x: T) -> T {
    if x > T::zero() {
        return T::one();
    }
    #[cfg(test)]
    if BREAK_ELU_GRAD.with(|b| b.get()) {
        return T::one();
    }
    T::of(ELU_ALPHA) * x.exp()
}

pub fn elu<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let alpha = T::of(ELU_ALPHA);
    let data = x
        .as_slice()
        .iter()
        .map(|&v| if v > T::zero() { v } else { alpha * (v.exp() - T::one()) })
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

pub fn elu_backward<T: Real>(x: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
    let data = x
        .as_slice()
        .iter()
        .zip(dy.as_slice())
        .map(|(&v, &d)| d * elu_grad_scalar(v))
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

/// Rows of the attention input are `n_seq` independent sequences of `seq_len` rows each.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionLayout {
    pub seq_len: usize,
    pub causal: bool,
}

/// Scaled dot-product attention for one head of one sequence.
///
/// With `causal_offset = Some(o)`, query row `i` sees key rows `0..=o+i`.
/// `probs` receives the `m x n` attention matrix (zeros where masked).
pub fn attend_head<T: Real>(
    q: View<'_, T>,
    k: View<'_, T>,
    v: View<'_, T>,
    causal_offset: Option<usize>,
    probs: &mut [T],
    out: ViewMut<'_, T>,
) {
    let (m, n) = (q.rows(), k.rows());
    let scale = T::one() / T::of(q.cols() as f64).sqrt();
    gemm(scale, q, k.t(), T::zero(), ViewMut::block(probs, 0, m, n, n));
    for i in 0..m {
        let row = &mut probs[i * n..(i + 1) * n];
        let lim = causal_offset.map_or(n, |o| (o + i + 1).min(n));
        let max = row[..lim].iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in &mut row[..lim] {
            *x = (*x - max).exp();
            sum = sum + *x;
        }
        for x in &mut row[..lim] {
            *x = *x / sum;
        }
        for x in &mut row[lim..] {
            *x = T::zero();
        }
    }
    gemm(T::one(), View::block(probs, 0, m, n, n), v, T::zero(), out);
}

/// Multi-head attention over a fused `rows x 3d` qkv matrix.
pub fn attention<T: Real>(qkv: &Matrix<T>, n_heads: usize, layout: AttentionLayout) -> (Matrix<T>, Vec<T>) {
    let d = qkv.cols() / 3;
    let dh = d / n_heads;
    let m = layout.seq_len;
    let n_seq = qkv.rows() / m;
    let mut out = Matrix::zeros(qkv.rows(), d);
    let mut probs = vec![T::zero(); n_seq * n_heads * m * m];
    let qkv_data = qkv.as_slice();
    let causal = layout.causal.then_some(0);
    for s in 0..n_seq {
        let base = s * m * 3 * d;
        for h in 0..n_heads {
            let q = View::block(qkv_data, base + h * dh, m, dh, 3 * d);
            let k = View::block(qkv_data, base + d + h * dh, m, dh, 3 * d);
            let v = View::block(qkv_data, base + 2 * d + h * dh, m, dh, 3 * d);
            let p = &mut probs[(s * n_heads + h) * m * m..(s * n_heads + h + 1) * m * m];
            let o = ViewMut::block(out.as_mut_slice(), s * m * d + h * dh, m, dh, d);
            attend_head(q, k, v, causal, p, o);
        }
    }
    (out, probs)
}

pub fn attention_backward<T: Real>(
    qkv: &Matrix<T>,
    probs: &[T],
    dout: &Matrix<T>,
    n_heads: usize,
    layout: AttentionLayout,
) -> Matrix<T> {
    let d = qkv.cols() / 3;
    let dh = d / n_heads;
    let m = layout.seq_len;
    let n_seq = qkv.rows() / m;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut dqkv = Matrix::zeros(qkv.rows(), 3 * d);
    let mut dp = vec![T::zero(); m * m];
    let (qkv_data, dout_data) = (qkv.as_slice(), dout.as_slice());
    for s in 0..n_seq {
        let base = s * m * 3 * d;
        for h in 0..n_heads {
            let p = &probs[(s * n_heads + h) * m * m..(s * n_heads + h + 1) * m * m];
            let p_view = View::block(p, 0, m, m, m);
            let q = View::block(qkv_data, base + h * dh, m, dh, 3 * d);
            let k = View::block(qkv_data, base + d + h * dh, m, dh, 3 * d);
            let v = View::block(qkv_data, base + 2 * d + h * dh, m, dh, 3 * d);
            let d_o = View::block(dout_data, s * m * d + h * dh, m, dh, d);

            let dv = ViewMut::block(dqkv.as_mut_slice(), base + 2 * d + h * dh, m, dh, 3 * d);
            gemm(T::one(), p_view.t(), d_o, T::zero(), dv);

            gemm(T::one(), d_o, v.t(), T::zero(), ViewMut::block(&mut dp, 0, m, m, m));
            for i in 0..m {
                let pr = &p[i * m..(i + 1) * m];
                let dr = &mut dp[i * m..(i + 1) * m];
                let dot = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum::<T>();
                for (x, &pv) in dr.iter_mut().zip(pr) {
                    *x = pv * (*x - dot);
                }
            }
            let ds = View::block(&dp, 0, m, m, m);
            let dq = ViewMut::block(dqkv.as_mut_slice(), base + h * dh, m, dh, 3 * d);
            gemm(scale, ds, k, T::zero(), dq);
            let dk = ViewMut::block(dqkv.as_mut_slice(), base + d + h * dh, m, dh, 3 * d);
            gemm(scale, ds.t(), q, T::zero(), dk);
        }
    }
    dqkv
}

pub struct BlockCache<T> {
    n1: NormCache<T>,
    h1: Matrix<T>,
    qkv: Matrix<T>,
    probs: Vec<T>,
    attn: Matrix<T>,
    n2: NormCache<T>,
    h2: Matrix<T>,
    pre_act: Matrix<T>,
    act: Matrix<T>,
}

impl<T: Real> BlockCache<T> {
    /// Attention weights, `n_seq * n_heads` row-major `seq_len x seq_len` blocks.
    pub fn attention_probs(&self) -> &[T] {
        &self.probs
    }
}

pub fn block_forward<T: Real>(
    x: &Matrix<T>,
    b: &Block<T>,
    n_heads: usize,
    layout: AttentionLayout,
) -> (Matrix<T>, BlockCache<T>) {
    let (h1, n1) = layer_norm(x, &b.norm1);
    let qkv = matmul(h1.view(), b.qkv.view());
    let (attn, probs) = attention(&qkv, n_heads, layout);
    let mut x2 = linear(&attn, &b.attn_out);
    x2.add_assign(x);
    let (h2, n2) = layer_norm(&x2, &b.norm2);
    let pre_act = linear(&h2, &b.fc1);
    let act = gelu(&pre_act);
    let mut y = linear(&act, &b.fc2);
    y.add_assign(&x2);
    let cache = BlockCache {
        n1,
        h1,
        qkv,
        probs,
        attn,
        n2,
        h2,
        pre_act,
        act,
    };
    (y, cache)
}

pub fn block_backward<T: Real>(
    dy: &Matrix<T>,
    cache: &BlockCache<T>,
    b: &Block<T>,
    grad: &mut Block<T>,
    n_heads: usize,
    layout: AttentionLayout,
) -> Matrix<T> {
    let d_act = linear_backward(&cache.act, dy, &b.fc2, &mut grad.fc2);
    let d_pre = gelu_backward(&cache.pre_act, &d_act);
    let d_h2 = linear_backward(&cache.h2, &d_pre, &b.fc1, &mut grad.fc1);
    let mut dx2 = layer_norm_backward(&d_h2, &cache.n2, &b.norm2, &mut grad.norm2);
    dx2.add_assign(dy);

    let d_attn = linear_backward(&cache.attn, &dx2, &b.attn_out, &mut grad.attn_out);
    let d_qkv = attention_backward(&cache.qkv, &cache.probs, &d_attn, n_heads, layout);
    let d_h1 = weight_backward(&cache.h1, &d_qkv, &b.qkv, &mut grad.qkv);
    let mut dx = layer_norm_backward(&d_h1, &cache.n1, &b.norm1, &mut grad.norm1);
    dx.add_assign(&dx2);
    dx
}
