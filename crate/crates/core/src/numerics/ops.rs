use super::{Scalar, Tensor};
use crate::error::{Result, TsamError};

/// Default epsilon of [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Negative slope used by the node-level attention logits.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

/// Standard matrix product `a · b`.
pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(TsamError::dim("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![S::zero(); m * n];
    gemm_nn(a.data(), b.data(), &mut out, m, k, n);
    Tensor::matrix(m, n, out)
}

/// `out += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == S::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// `out += a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            out[i * n + j] += acc;
        }
    }
}

/// `out += a[k×m]ᵀ · b[k×n]`
pub(crate) fn gemm_tn<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == S::zero() {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += api * bv;
            }
        }
    }
}

/// Softmax restricted to the positions where `allowed` is true.
///
/// Disallowed outputs are exactly zero. Logits are shifted by the maximum
/// allowed logit before exponentiation.
pub fn softmax_masked<S: Scalar>(logits: &[S], allowed: &[bool]) -> Result<Vec<S>> {
    if logits.len() != allowed.len() {
        return Err(TsamError::dim("softmax_masked", &[logits.len()], &[allowed.len()]));
    }
    let mut out = vec![S::zero(); logits.len()];
    softmax_masked_into(logits, allowed, &mut out)?;
    Ok(out)
}

pub(crate) fn softmax_masked_into<S: Scalar>(logits: &[S], allowed: &[bool], out: &mut [S]) -> Result<()> {
    let max = logits
        .iter()
        .zip(allowed)
        .filter(|(_, &ok)| ok)
        .map(|(&x, _)| x)
        .fold(None, |m: Option<S>, x| Some(m.map_or(x, |m| m.max(x))))
        .ok_or(TsamError::EmptySupport)?;
    let mut total = S::zero();
    for ((o, &x), &ok) in out.iter_mut().zip(logits).zip(allowed) {
        *o = if ok { (x - max).exp() } else { S::zero() };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// `(x - mean) / sqrt(var + eps)` over the whole slice, population variance,
/// no learnable gain or bias.
pub fn layer_norm<S: Scalar>(x: &[S], eps: S) -> Vec<S> {
    let n = S::of(x.len() as f64);
    let mean = x.iter().copied().sum::<S>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
    let inv = (var + eps).sqrt().recip();
    x.iter().map(|&v| (v - mean) * inv).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Elu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Elu => elu(x),
            Activation::LeakyRelu(alpha) => leaky_relu(x, S::of(alpha)),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => relu(x),
        }
    }

    /// Derivative given the input `x` and the output `y = apply(x)`.
    pub fn derivative<S: Scalar>(self, x: S, y: S) -> S {
        match self {
            Activation::Elu => {
                if x >= S::zero() {
                    S::one()
                } else {
                    y + S::one()
                }
            }
            Activation::LeakyRelu(alpha) => {
                if x >= S::zero() {
                    S::one()
                } else {
                    S::of(alpha)
                }
            }
            Activation::Sigmoid => y * (S::one() - y),
            Activation::Tanh => S::one() - y * y,
            Activation::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
        }
    }

    pub fn on<S: Scalar>(self, t: &Tensor<S>) -> Tensor<S> {
        t.map(|x| self.apply(x))
    }
}

pub fn elu<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        x
    } else {
        x.exp_m1()
    }
}

pub fn leaky_relu<S: Scalar>(x: S, alpha: S) -> S {
    if x >= S::zero() {
        x
    } else {
        alpha * x
    }
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub fn relu<S: Scalar>(x: S) -> S {
    x.max(S::zero())
}
