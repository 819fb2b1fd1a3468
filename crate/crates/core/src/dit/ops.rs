//! Forward and backward kernels. Backward functions accumulate parameter
//! gradients in place and return the gradient with respect to their input.

use crate::tensor::{gemm, matmul, Mat, Scalar, View, ViewMut};

const LN_EPS: f64 = 1e-5;

/// `y = x w + b` with `w: in x out` and `b: 1 x out`.
pub fn linear<T: Scalar>(x: &Mat<T>, w: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let mut y = Mat::zeros(x.rows, w.cols);
    for r in 0..y.rows {
        y.row_mut(r).copy_from_slice(&b.data);
    }
    gemm(T::one(), x.view(), w.view(), T::one(), y.view_mut());
    y
}

pub fn linear_backward<T: Scalar>(
    x: &Mat<T>,
    w: &Mat<T>,
    dy: &Mat<T>,
    dw: &mut Mat<T>,
    db: &mut Mat<T>,
) -> Mat<T> {
    gemm(T::one(), x.view().t(), dy.view(), T::one(), dw.view_mut());
    for r in 0..dy.rows {
        for (g, v) in db.data.iter_mut().zip(dy.row(r)) {
            *g += *v;
        }
    }
    matmul(dy.view(), w.view().t())
}

/// Row-wise layer normalization with affine parameters.
pub struct LayerNormCache<T> {
    pub xhat: Mat<T>,
    pub rstd: Vec<T>,
}

pub fn layer_norm<T: Scalar>(x: &Mat<T>, g: &Mat<T>, b: &Mat<T>) -> (Mat<T>, LayerNormCache<T>) {
    let d = x.cols;
    let inv_d = T::from_f64(1.0 / d as f64);
    let eps = T::from_f64(LN_EPS);
    let mut y = Mat::zeros(x.rows, d);
    let mut xhat = Mat::zeros(x.rows, d);
    let mut rstd = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd.push(rs);
        let xh = xhat.row_mut(r);
        for (o, v) in xh.iter_mut().zip(row) {
            *o = (*v - mean) * rs;
        }
        let yr = y.row_mut(r);
        for j in 0..d {
            yr[j] = xhat.data[r * d + j] * g.data[j] + b.data[j];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    g: &Mat<T>,
    dy: &Mat<T>,
    dg: &mut Mat<T>,
    db: &mut Mat<T>,
) -> Mat<T> {
    let d = dy.cols;
    let inv_d = T::from_f64(1.0 / d as f64);
    let mut dx = Mat::zeros(dy.rows, d);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..dy.rows {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            dg.data[j] += dyr[j] * xh[j];
            db.data[j] += dyr[j];
            dxhat[j] = dyr[j] * g.data[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let rs = cache.rstd[r];
        let out = dx.row_mut(r);
        for j in 0..d {
            out[j] = rs * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    let c = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let inner = c * (x + k * x * x * x);
    let th = inner.tanh();
    let y = half * x * (T::one() + th);
    let dinner = c * (T::one() + T::from_f64(3.0) * k * x * x);
    let dy = half * (T::one() + th) + half * x * (T::one() - th * th) * dinner;
    (y, dy)
}

/// Tanh-approximated GELU.
pub fn gelu<T: Scalar>(x: &Mat<T>) -> Mat<T> {
    x.map(|v| gelu_parts(v).0)
}

pub fn gelu_backward<T: Scalar>(x: &Mat<T>, dy: &Mat<T>) -> Mat<T> {
    Mat::from_vec(
        x.rows,
        x.cols,
        x.data
            .iter()
            .zip(&dy.data)
            .map(|(v, g)| gelu_parts(*v).1 * *g)
            .collect(),
    )
}

pub fn silu<T: Scalar>(x: &Mat<T>) -> Mat<T> {
    x.map(|v| v / (T::one() + (-v).exp()))
}

pub fn silu_backward<T: Scalar>(x: &Mat<T>, dy: &Mat<T>) -> Mat<T> {
    Mat::from_vec(
        x.rows,
        x.cols,
        x.data
            .iter()
            .zip(&dy.data)
            .map(|(v, g)| {
                let s = T::one() / (T::one() + (-*v).exp());
                *g * (s + *v * s * (T::one() - s))
            })
            .collect(),
    )
}

/// Row-wise softmax in place.
pub fn softmax_rows<T: Scalar>(s: &mut Mat<T>) {
    for r in 0..s.rows {
        let row = s.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = if *v == T::neg_infinity() {
                T::zero()
            } else {
                (*v - max).exp()
            };
            sum += *v;
        }
        let inv = T::one() / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Scaled dot-product attention for one head and one block of queries.
/// Writes `softmax(scale * q k^T) v` into `out` and returns the probabilities.
pub fn attention<T: Scalar>(
    q: View<'_, T>,
    k: View<'_, T>,
    v: View<'_, T>,
    scale: T,
    out: ViewMut<'_, T>,
) -> Mat<T> {
    let mut p = Mat::zeros(q.rows, k.rows);
    gemm(scale, q, k.t(), T::zero(), p.view_mut());
    softmax_rows(&mut p);
    gemm(T::one(), p.view(), v, T::zero(), out);
    p
}

/// Gradients of [`attention`]; accumulates into `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Scalar>(
    q: View<'_, T>,
    k: View<'_, T>,
    v: View<'_, T>,
    p: &Mat<T>,
    dout: View<'_, T>,
    scale: T,
    dq: ViewMut<'_, T>,
    dk: ViewMut<'_, T>,
    dv: ViewMut<'_, T>,
) {
    gemm(T::one(), p.view().t(), dout, T::one(), dv);
    let mut ds = Mat::zeros(p.rows, p.cols);
    gemm(T::one(), dout, v.t(), T::zero(), ds.view_mut());
    for r in 0..p.rows {
        let pr = p.row(r);
        let dr = ds.row_mut(r);
        let dot: T = pr.iter().zip(dr.iter()).map(|(a, b)| *a * *b).sum();
        for (d, pv) in dr.iter_mut().zip(pr) {
            *d = *pv * (*d - dot);
        }
    }
    gemm(scale, ds.view(), k, T::one(), dq);
    gemm(scale, ds.view().t(), q, T::one(), dk);
}

/// Sinusoidal features of a diffusion time in `[0, 1]`.
pub fn time_features<T: Scalar>(t: T, n: usize) -> Mat<T> {
    let half = n / 2;
    let t = t.as_f64() * 1000.0;
    Mat::from_fn(1, n, |_, j| {
        let band = (j % half) as f64;
        let freq = (-(10000f64).ln() * band / half as f64).exp();
        let a = t * freq;
        T::from_f64(if j < half { a.sin() } else { a.cos() })
    })
}
