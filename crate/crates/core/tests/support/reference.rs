//! Plain nested-loop implementations of every layer, written directly from
//! the layer equations with no shared code from the library.

use tsam::graph::DirectedSnapshot;
use tsam::model::{AttnHead, DecoderParams, GatHead, GruParams, ModelParams};
use tsam::{ModelConfig, Tensor, TransformKind};

pub type M = Vec<Vec<f64>>;

pub fn m(t: &Tensor<f64>) -> M {
    (0..t.rows()).map(|i| (0..t.cols()).map(|j| t.at(i, j)).collect()).collect()
}

pub fn max_diff(a: &M, b: &Tensor<f64>) -> f64 {
    let mut worst = 0.0f64;
    assert_eq!(a.len(), b.rows());
    for (i, row) in a.iter().enumerate() {
        assert_eq!(row.len(), b.cols());
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b.at(i, j)).abs());
        }
    }
    worst
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y[r] = Σ_c w[r][c] x[c]`
fn apply(w: &M, x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| dot(row, x)).collect()
}

/// `y[c] = Σ_r x[r] w[r][c]`
fn apply_t(x: &[f64], w: &M) -> Vec<f64> {
    let cols = w[0].len();
    (0..cols).map(|c| (0..x.len()).map(|r| x[r] * w[r][c]).sum()).collect()
}

fn softmax_over(logits: &[f64], allowed: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(allowed)
        .filter(|(_, &ok)| ok)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .zip(allowed)
        .map(|(v, &ok)| if ok { (v - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Attention coefficients of one head: row `i` over `j` with `j → i`, or
/// `{i}` when `i` has no incoming link.
pub fn gat_alpha(x: &M, a: &DirectedSnapshot, head: &GatHead<Tensor<f64>>) -> M {
    let n = x.len();
    let w = m(&head.weight);
    let attn = head.attn.data().to_vec();
    let fp = w.len();
    let h: M = x.iter().map(|xi| apply(&w, xi)).collect();
    (0..n)
        .map(|i| {
            let mut allowed: Vec<bool> = (0..n).map(|j| a.has_edge(j, i)).collect();
            if !allowed.iter().any(|&b| b) {
                allowed[i] = true;
            }
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    let e = dot(&attn[..fp], &h[i]) + dot(&attn[fp..], &h[j]);
                    if e > 0.0 {
                        e
                    } else {
                        0.2 * e
                    }
                })
                .collect();
            softmax_over(&logits, &allowed)
        })
        .collect()
}

/// `ELU(mean_k Σ_j α^k_ij W^k x_j)`
pub fn gat(x: &M, a: &DirectedSnapshot, heads: &[GatHead<Tensor<f64>>]) -> M {
    let n = x.len();
    let fp = heads[0].weight.rows();
    let mut acc = vec![vec![0.0; fp]; n];
    for head in heads {
        let w = m(&head.weight);
        let h: M = x.iter().map(|xi| apply(&w, xi)).collect();
        let alpha = gat_alpha(x, a, head);
        for i in 0..n {
            for j in 0..n {
                for f in 0..fp {
                    acc[i][f] += alpha[i][j] * h[j][f];
                }
            }
        }
    }
    let k = heads.len() as f64;
    acc.iter().map(|r| r.iter().map(|v| elu(v / k)).collect()).collect()
}

/// Motif matrix by direct enumeration of intermediate nodes.
pub fn motif_counts(a: &DirectedSnapshot, kind: TransformKind) -> Vec<Vec<u32>> {
    let n = a.n();
    let e = |u: usize, v: usize| a.has_edge(u, v);
    (0..n)
        .map(|u| {
            (0..n)
                .map(|v| {
                    (0..n)
                        .filter(|&t| match kind {
                            TransformKind::M1 => e(u, t) && e(t, v),
                            TransformKind::M2 => e(t, u) && e(t, v),
                            TransformKind::M3 => e(u, t) && e(v, t),
                            TransformKind::M4 => e(v, t) && e(t, u),
                        })
                        .count() as u32
                })
                .collect()
        })
        .collect()
}

/// `ELU(D̂^{-1/2} (C + I) D̂^{-1/2} X W)`
pub fn gcl(x: &M, c: &[Vec<u32>], w: &Tensor<f64>) -> M {
    let n = x.len();
    let w = m(w);
    let chat = |u: usize, v: usize| c[u][v] as f64 + if u == v { 1.0 } else { 0.0 };
    let deg: Vec<f64> = (0..n).map(|u| (0..n).map(|v| chat(u, v)).sum()).collect();
    (0..n)
        .map(|u| {
            let mut px = vec![0.0; x[0].len()];
            for v in 0..n {
                let coef = chat(u, v) / (deg[u].sqrt() * deg[v].sqrt());
                for (p, xv) in px.iter_mut().zip(&x[v]) {
                    *p += coef * xv;
                }
            }
            apply_t(&px, &w).into_iter().map(elu).collect()
        })
        .collect()
}

/// Sum, normalize each row to zero mean and unit variance, flatten.
pub fn fuse(parts: &[M]) -> Vec<f64> {
    let (n, f) = (parts[0].len(), parts[0][0].len());
    let mut out = Vec::with_capacity(n * f);
    for i in 0..n {
        let row: Vec<f64> = (0..f).map(|c| parts.iter().map(|p| p[i][c]).sum()).collect();
        let mean = row.iter().sum::<f64>() / f as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / f as f64;
        out.extend(row.iter().map(|v| (v - mean) / (var + 1e-5).sqrt()));
    }
    out
}

pub fn gru_step(y: &[f64], h: &[f64], p: &GruParams<Tensor<f64>>) -> Vec<f64> {
    let lin = |w: &Tensor<f64>, u: &Tensor<f64>, b: &Tensor<f64>, hh: &[f64]| -> Vec<f64> {
        let wy = apply(&m(w), y);
        let uh = apply(&m(u), hh);
        (0..wy.len()).map(|k| wy[k] + uh[k] + b.data()[k]).collect()
    };
    let z: Vec<f64> = lin(&p.w_z, &p.u_z, &p.b_z, h).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = lin(&p.w_r, &p.u_r, &p.b_r, h).into_iter().map(sigmoid).collect();
    let wy = apply(&m(&p.w_n), y);
    let uh = apply(&m(&p.u_n), h);
    (0..h.len())
        .map(|k| {
            let cand = (wy[k] + r[k] * uh[k] + p.b_n.data()[k]).tanh();
            (1.0 - z[k]) * h[k] + z[k] * cand
        })
        .collect()
}

/// Weights of one head; row `i` covers positions `j ≤ i`.
pub fn attention_weights(hs: &M, head: &AttnHead<Tensor<f64>>) -> M {
    let len = hs.len();
    let q: M = hs.iter().map(|h| apply_t(h, &m(&head.w_q))).collect();
    let k: M = hs.iter().map(|h| apply_t(h, &m(&head.w_k))).collect();
    let scale = (q[0].len() as f64).sqrt();
    (0..len)
        .map(|i| {
            let logits: Vec<f64> = (0..len).map(|j| dot(&q[i], &k[j]) / scale).collect();
            let allowed: Vec<bool> = (0..len).map(|j| j <= i).collect();
            softmax_over(&logits, &allowed)
        })
        .collect()
}

/// Head outputs concatenated along columns.
pub fn temporal_attention(hs: &M, heads: &[AttnHead<Tensor<f64>>]) -> M {
    let len = hs.len();
    let mut out = vec![Vec::new(); len];
    for head in heads {
        let v: M = hs.iter().map(|h| apply_t(h, &m(&head.w_v))).collect();
        let beta = attention_weights(hs, head);
        for i in 0..len {
            let fv = v[0].len();
            for c in 0..fv {
                out[i].push((0..len).map(|j| beta[i][j] * v[j][c]).sum());
            }
        }
    }
    out
}

pub fn decode(z: &[f64], p: &DecoderParams<Tensor<f64>>) -> M {
    let relu = |v: f64| v.max(0.0);
    let h: Vec<f64> = apply_t(z, &m(&p.w_h))
        .iter()
        .zip(p.b_h.data())
        .map(|(a, b)| relu(a + b))
        .collect();
    let o: Vec<f64> = apply_t(&h, &m(&p.w_o))
        .iter()
        .zip(p.b_o.data())
        .map(|(a, b)| relu(a + b))
        .collect();
    let n = (o.len() as f64).sqrt() as usize;
    o.chunks(n).map(<[f64]>::to_vec).collect()
}

/// Whole encoder-decoder on a window of snapshots.
pub fn forward(cfg: &ModelConfig, params: &ModelParams<Tensor<f64>>, x: &Tensor<f64>, window: &[DirectedSnapshot]) -> M {
    let xm = m(x);
    let mut h = vec![0.0; cfg.h_rnn];
    let mut states = Vec::with_capacity(window.len());
    for a in window {
        let mut parts = vec![gat(&xm, a, &params.gat.heads)];
        for (kind, w) in &params.gcl.weights {
            parts.push(gcl(&xm, &motif_counts(a, *kind), w));
        }
        let y = fuse(&parts);
        h = gru_step(&y, &h, &params.gru);
        states.push(h.clone());
    }
    let z = temporal_attention(&states, &params.attn.heads);
    decode(z.last().unwrap(), &params.dec)
}

/// `Σ ((S − A) B)² + (λ/2) Σ θ²`
pub fn loss(cfg: &ModelConfig, params: &ModelParams<Tensor<f64>>, scores: &M, target: &DirectedSnapshot) -> f64 {
    let mut total = 0.0;
    for (i, row) in scores.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            let (a, b) = if target.has_edge(i, j) { (1.0, cfg.penalty_beta) } else { (0.0, 1.0) };
            total += ((s - a) * b).powi(2);
        }
    }
    let theta: f64 = params.slots().iter().map(|t| t.data().iter().map(|v| v * v).sum::<f64>()).sum();
    total + cfg.l2 / 2.0 * theta
}

/// Mann-Whitney statistic from midranks of the pooled sample.
pub fn rank_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut pooled: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * pooled[i..j].iter().filter(|p| p.1).count() as f64;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Precision-recall area from every distinct threshold, each evaluated by
/// counting from scratch, joined by straight segments from (0, 1).
pub fn threshold_prauc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut points = vec![(0.0, 1.0)];
    for th in thresholds {
        let tp = pos.iter().filter(|&&s| s >= th).count() as f64;
        let fp = neg.iter().filter(|&&s| s >= th).count() as f64;
        points.push((tp / pos.len() as f64, tp / (tp + fp)));
    }
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}
