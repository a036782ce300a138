//! The encoder and decoder layers.
//!
//! Each layer is written once against a [`Tape`]; the free functions at the
//! bottom evaluate a single layer on plain tensors.

use super::params::{AttnHead, DecoderParams, GatHead, GruParams};
use crate::error::{Result, TsamError};
use crate::graph::DirectedSnapshot;
use crate::motif::TransformedMatrix;
use crate::numerics::ops::{LAYER_NORM_EPS, LEAKY_RELU_SLOPE};
use crate::numerics::{Activation, Scalar, Tape, Tensor, Var};

/// Row `i` allows column `j` iff `j → i`. A node without incoming links
/// attends to itself.
pub fn in_neighbor_mask(a: &DirectedSnapshot) -> Vec<bool> {
    let n = a.n();
    let mut mask = vec![false; n * n];
    for i in 0..n {
        let row = &mut mask[i * n..(i + 1) * n];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = a.has_edge(j, i);
        }
        if !row.iter().any(|&b| b) {
            row[i] = true;
        }
    }
    mask
}

/// Row `i` allows positions `j ≤ i`.
pub fn causal_mask(len: usize) -> Vec<bool> {
    (0..len * len).map(|k| k % len <= k / len).collect()
}

/// `D̂^{-1/2} (C + I) D̂^{-1/2}` with `D̂` the row sums of `C + I`.
pub fn propagation_matrix<S: Scalar>(c: &TransformedMatrix) -> Tensor<S> {
    let n = c.n();
    let inv_sqrt: Vec<S> = (0..n)
        .map(|u| {
            let deg: u64 = (0..n).map(|v| c.at(u, v) as u64).sum::<u64>() + 1;
            S::of(deg as f64).sqrt().recip()
        })
        .collect();
    Tensor::from_fn(n, n, |u, v| {
        let chat = c.at(u, v) + u32::from(u == v);
        inv_sqrt[u] * S::of(chat as f64) * inv_sqrt[v]
    })
}

/// Multi-head masked graph attention; returns the layer output and the
/// attention coefficients of every head.
pub fn gat<S: Scalar>(tape: &mut Tape<S>, x: Var, mask: &[bool], heads: &[GatHead<Var>]) -> Result<(Var, Vec<Var>)> {
    let mut outs = Vec::with_capacity(heads.len());
    let mut alphas = Vec::with_capacity(heads.len());
    for head in heads {
        let f_struct = tape.shape(head.weight)[0];
        let h = tape.matmul_nt(x, head.weight)?;
        let a = tape.reshape(head.attn, 2, f_struct)?;
        let scores = tape.matmul_nt(a, h)?;
        let src = tape.row(scores, 0);
        let n = tape.shape(src)[1];
        let src = tape.reshape(src, n, 1)?;
        let dst = tape.row(scores, 1);
        let logits = tape.outer_sum(src, dst)?;
        let logits = tape.act(logits, Activation::LeakyRelu(LEAKY_RELU_SLOPE));
        let alpha = tape.softmax_rows(logits, mask)?;
        outs.push(tape.matmul(alpha, h)?);
        alphas.push(alpha);
    }
    let total = tape.sum_all(&outs)?;
    let mean = tape.scale(total, S::of(1.0 / heads.len() as f64));
    Ok((tape.act(mean, Activation::Elu), alphas))
}

/// Graph convolution over a precomputed `propagation · X` product.
pub fn gcl<S: Scalar>(tape: &mut Tape<S>, propagated_x: Var, weight: Var) -> Result<Var> {
    let y = tape.matmul(propagated_x, weight)?;
    Ok(tape.act(y, Activation::Elu))
}

/// Element-wise sum, per-row layer normalization, row-major flatten.
pub fn fuse<S: Scalar>(tape: &mut Tape<S>, parts: &[Var]) -> Result<Var> {
    let total = tape.sum_all(parts)?;
    let [n, f] = tape.shape(total);
    let normed = tape.layer_norm_rows(total, S::of(LAYER_NORM_EPS));
    tape.reshape(normed, 1, n * f)
}

/// One GRU update from already projected inputs `W·y` for the three gates.
pub fn gru_cell<S: Scalar>(
    tape: &mut Tape<S>,
    proj: [Var; 3],
    h_prev: Var,
    p: &GruParams<Var>,
) -> Result<Var> {
    let [wz_y, wr_y, wn_y] = proj;
    let uz = tape.matmul_nt(h_prev, p.u_z)?;
    let z = tape.sum_all(&[wz_y, uz, p.b_z])?;
    let z = tape.act(z, Activation::Sigmoid);
    let ur = tape.matmul_nt(h_prev, p.u_r)?;
    let r = tape.sum_all(&[wr_y, ur, p.b_r])?;
    let r = tape.act(r, Activation::Sigmoid);
    let un = tape.matmul_nt(h_prev, p.u_n)?;
    let gated = tape.mul(r, un)?;
    let cand = tape.sum_all(&[wn_y, gated, p.b_n])?;
    let cand = tape.act(cand, Activation::Tanh);
    let delta = tape.sub(cand, h_prev)?;
    let step = tape.mul(z, delta)?;
    tape.add(h_prev, step)
}

pub fn gru_step<S: Scalar>(tape: &mut Tape<S>, y: Var, h_prev: Var, p: &GruParams<Var>) -> Result<Var> {
    let proj = [
        tape.matmul_nt(y, p.w_z)?,
        tape.matmul_nt(y, p.w_r)?,
        tape.matmul_nt(y, p.w_n)?,
    ];
    gru_cell(tape, proj, h_prev, p)
}

/// Runs the GRU over `ys` from a zero state; returns the `T × H_R` states.
pub fn gru_sequence<S: Scalar>(tape: &mut Tape<S>, ys: &[Var], p: &GruParams<Var>) -> Result<Var> {
    let stacked = tape.stack_rows(ys)?;
    let pz = tape.matmul_nt(stacked, p.w_z)?;
    let pr = tape.matmul_nt(stacked, p.w_r)?;
    let pn = tape.matmul_nt(stacked, p.w_n)?;
    let hidden = tape.shape(p.u_z)[0];
    let mut h = tape.constant(Tensor::zeros(&[1, hidden]));
    let mut states = Vec::with_capacity(ys.len());
    for t in 0..ys.len() {
        let proj = [tape.row(pz, t), tape.row(pr, t), tape.row(pn, t)];
        h = gru_cell(tape, proj, h, p)?;
        states.push(h);
    }
    tape.stack_rows(&states)
}

/// Causally masked multi-head scaled dot-product attention over the rows of
/// `h_seq`; returns the concatenated outputs and each head's weights.
pub fn temporal_attention<S: Scalar>(
    tape: &mut Tape<S>,
    h_seq: Var,
    heads: &[AttnHead<Var>],
) -> Result<(Var, Vec<Var>)> {
    let len = tape.shape(h_seq)[0];
    let mask = causal_mask(len);
    let mut outs = Vec::with_capacity(heads.len());
    let mut betas = Vec::with_capacity(heads.len());
    for head in heads {
        let f_attn = tape.shape(head.w_q)[1];
        let q = tape.matmul(h_seq, head.w_q)?;
        let k = tape.matmul(h_seq, head.w_k)?;
        let v = tape.matmul(h_seq, head.w_v)?;
        let e = tape.matmul_nt(q, k)?;
        let e = tape.scale(e, S::of(1.0 / (f_attn as f64).sqrt()));
        let beta = tape.softmax_rows(e, &mask)?;
        outs.push(tape.matmul(beta, v)?);
        betas.push(beta);
    }
    Ok((tape.concat_cols(&outs)?, betas))
}

/// Two ReLU layers, output reshaped to `N × N`.
pub fn decoder<S: Scalar>(tape: &mut Tape<S>, z: Var, p: &DecoderParams<Var>) -> Result<Var> {
    let h = tape.matmul(z, p.w_h)?;
    let h = tape.add_row(h, p.b_h)?;
    let h = tape.act(h, Activation::Relu);
    let o = tape.matmul(h, p.w_o)?;
    let o = tape.add_row(o, p.b_o)?;
    let o = tape.act(o, Activation::Relu);
    let width = tape.shape(o)[1];
    let n = (width as f64).sqrt().round() as usize;
    if n * n != width {
        return Err(TsamError::dim("decoder output", &[1, width], &[n, n]));
    }
    tape.reshape(o, n, n)
}

fn bind_gat<S: Scalar>(tape: &mut Tape<S>, heads: &[GatHead<Tensor<S>>]) -> Vec<GatHead<Var>> {
    heads
        .iter()
        .map(|h| GatHead {
            weight: tape.param(h.weight.clone()),
            attn: tape.param(h.attn.clone()),
        })
        .collect()
}

fn bind_gru<S: Scalar>(tape: &mut Tape<S>, p: &GruParams<Tensor<S>>) -> GruParams<Var> {
    GruParams {
        w_z: tape.param(p.w_z.clone()),
        w_r: tape.param(p.w_r.clone()),
        w_n: tape.param(p.w_n.clone()),
        u_z: tape.param(p.u_z.clone()),
        u_r: tape.param(p.u_r.clone()),
        u_n: tape.param(p.u_n.clone()),
        b_z: tape.param(p.b_z.clone()),
        b_r: tape.param(p.b_r.clone()),
        b_n: tape.param(p.b_n.clone()),
    }
}

/// Graph attention layer on plain tensors (`x` is `N × F`).
pub fn gat_forward<S: Scalar>(x: &Tensor<S>, a: &DirectedSnapshot, heads: &[GatHead<Tensor<S>>]) -> Result<Tensor<S>> {
    Ok(gat_forward_with_attention(x, a, heads)?.0)
}

/// Like [`gat_forward`], also returning each head's `N × N` coefficients.
pub fn gat_forward_with_attention<S: Scalar>(
    x: &Tensor<S>,
    a: &DirectedSnapshot,
    heads: &[GatHead<Tensor<S>>],
) -> Result<(Tensor<S>, Vec<Tensor<S>>)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let hv = bind_gat(&mut tape, heads);
    let (out, alphas) = gat(&mut tape, xv, &in_neighbor_mask(a), &hv)?;
    Ok((
        tape.value(out).clone(),
        alphas.iter().map(|&v| tape.value(v).clone()).collect(),
    ))
}

pub fn gcl_forward<S: Scalar>(x: &Tensor<S>, c: &TransformedMatrix, weight: &Tensor<S>) -> Result<Tensor<S>> {
    let px = crate::numerics::matmul(&propagation_matrix(c), x)?;
    let mut tape = Tape::new();
    let pv = tape.constant(px);
    let wv = tape.constant(weight.clone());
    let out = gcl(&mut tape, pv, wv)?;
    Ok(tape.value(out).clone())
}

pub fn fuse_forward<S: Scalar>(gat_out: &Tensor<S>, gcl_outs: &[Tensor<S>]) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let mut parts = vec![tape.constant(gat_out.clone())];
    parts.extend(gcl_outs.iter().map(|t| tape.constant(t.clone())));
    let out = fuse(&mut tape, &parts)?;
    Ok(tape.value(out).clone())
}

pub fn gru_step_forward<S: Scalar>(y: &Tensor<S>, h_prev: &Tensor<S>, p: &GruParams<Tensor<S>>) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let yv = tape.constant(y.clone());
    let hv = tape.constant(h_prev.clone());
    let pv = bind_gru(&mut tape, p);
    let out = gru_step(&mut tape, yv, hv, &pv)?;
    Ok(tape.value(out).clone())
}

/// Returns the `T × (K_T·F″)` outputs and each head's `T × T` weights.
pub fn temporal_attention_forward<S: Scalar>(
    h_seq: &Tensor<S>,
    heads: &[AttnHead<Tensor<S>>],
) -> Result<(Tensor<S>, Vec<Tensor<S>>)> {
    let mut tape = Tape::new();
    let hv = tape.constant(h_seq.clone());
    let bound: Vec<_> = heads
        .iter()
        .map(|h| AttnHead {
            w_q: tape.param(h.w_q.clone()),
            w_k: tape.param(h.w_k.clone()),
            w_v: tape.param(h.w_v.clone()),
        })
        .collect();
    let (z, betas) = temporal_attention(&mut tape, hv, &bound)?;
    Ok((tape.value(z).clone(), betas.iter().map(|&b| tape.value(b).clone()).collect()))
}

pub fn decode_forward<S: Scalar>(z: &Tensor<S>, p: &DecoderParams<Tensor<S>>) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let pv = DecoderParams {
        w_h: tape.param(p.w_h.clone()),
        b_h: tape.param(p.b_h.clone()),
        w_o: tape.param(p.w_o.clone()),
        b_o: tape.param(p.b_o.clone()),
    };
    let out = decoder(&mut tape, zv, &pv)?;
    Ok(tape.value(out).clone())
}
