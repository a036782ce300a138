//! Trainable parameter groups.
//!
//! Every group is generic over its slot type `P`: `Tensor<S>` for stored
//! values, [`Var`](crate::numerics::Var) once bound to a tape, or anything
//! else a caller maps to (gradients, optimizer moments).

use rand::Rng;

use super::ModelConfig;
use crate::motif::TransformKind;
use crate::numerics::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GatHead<P> {
    /// `F′ × F`
    pub weight: P,
    /// `1 × 2F′`, source half first.
    pub attn: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatParams<P> {
    pub heads: Vec<GatHead<P>>,
}

/// One `F × F′` weight per active transform, in config order.
#[derive(Clone, Debug, PartialEq)]
pub struct GclParams<P> {
    pub weights: Vec<(TransformKind, P)>,
}

/// Input weights are `H_R × (N·F′)`, recurrent weights `H_R × H_R`, biases
/// `1 × H_R`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams<P> {
    pub w_z: P,
    pub w_r: P,
    pub w_n: P,
    pub u_z: P,
    pub u_r: P,
    pub u_n: P,
    pub b_z: P,
    pub b_r: P,
    pub b_n: P,
}

/// Per-head `H_R × F″` projections.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnHead<P> {
    pub w_q: P,
    pub w_k: P,
    pub w_v: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalAttnParams<P> {
    pub heads: Vec<AttnHead<P>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams<P> {
    /// `(K_T·F″) × H_D`
    pub w_h: P,
    pub b_h: P,
    /// `H_D × N²`
    pub w_o: P,
    pub b_o: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<P> {
    pub gat: GatParams<P>,
    pub gcl: GclParams<P>,
    pub gru: GruParams<P>,
    pub attn: TemporalAttnParams<P>,
    pub dec: DecoderParams<P>,
}

impl<P> ModelParams<P> {
    /// Maps every slot in a fixed canonical order, passing its name.
    pub fn map_named<Q>(&self, f: &mut impl FnMut(&str, &P) -> Q) -> ModelParams<Q> {
        let gat = GatParams {
            heads: self
                .gat
                .heads
                .iter()
                .enumerate()
                .map(|(k, h)| GatHead {
                    weight: f(&format!("gat.{k}.weight"), &h.weight),
                    attn: f(&format!("gat.{k}.attn"), &h.attn),
                })
                .collect(),
        };
        let gcl = GclParams {
            weights: self
                .gcl
                .weights
                .iter()
                .map(|(kind, w)| (*kind, f(&format!("gcl.{kind}.weight"), w)))
                .collect(),
        };
        let g = &self.gru;
        let gru = GruParams {
            w_z: f("gru.w_z", &g.w_z),
            w_r: f("gru.w_r", &g.w_r),
            w_n: f("gru.w_n", &g.w_n),
            u_z: f("gru.u_z", &g.u_z),
            u_r: f("gru.u_r", &g.u_r),
            u_n: f("gru.u_n", &g.u_n),
            b_z: f("gru.b_z", &g.b_z),
            b_r: f("gru.b_r", &g.b_r),
            b_n: f("gru.b_n", &g.b_n),
        };
        let attn = TemporalAttnParams {
            heads: self
                .attn
                .heads
                .iter()
                .enumerate()
                .map(|(l, h)| AttnHead {
                    w_q: f(&format!("attn.{l}.w_q"), &h.w_q),
                    w_k: f(&format!("attn.{l}.w_k"), &h.w_k),
                    w_v: f(&format!("attn.{l}.w_v"), &h.w_v),
                })
                .collect(),
        };
        let d = &self.dec;
        let dec = DecoderParams {
            w_h: f("dec.w_h", &d.w_h),
            b_h: f("dec.b_h", &d.b_h),
            w_o: f("dec.w_o", &d.w_o),
            b_o: f("dec.b_o", &d.b_o),
        };
        ModelParams { gat, gcl, gru, attn, dec }
    }

    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> ModelParams<Q> {
        self.map_named(&mut |_, p| f(p))
    }

    /// Slots in canonical order with their names.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut names = Vec::new();
        self.map_named(&mut |name, _| names.push(name.to_string()));
        names.into_iter().zip(self.slots()).collect()
    }

    /// Slots in canonical order.
    pub fn slots(&self) -> Vec<&P> {
        let mut out: Vec<&P> = Vec::new();
        for h in &self.gat.heads {
            out.push(&h.weight);
            out.push(&h.attn);
        }
        out.extend(self.gcl.weights.iter().map(|(_, w)| w));
        let g = &self.gru;
        out.extend([&g.w_z, &g.w_r, &g.w_n, &g.u_z, &g.u_r, &g.u_n, &g.b_z, &g.b_r, &g.b_n]);
        for h in &self.attn.heads {
            out.extend([&h.w_q, &h.w_k, &h.w_v]);
        }
        let d = &self.dec;
        out.extend([&d.w_h, &d.b_h, &d.w_o, &d.b_o]);
        out
    }

    /// Mutable slots in the same order as [`slots`](Self::slots).
    pub fn slots_mut(&mut self) -> Vec<&mut P> {
        let mut out: Vec<&mut P> = Vec::new();
        for h in &mut self.gat.heads {
            out.push(&mut h.weight);
            out.push(&mut h.attn);
        }
        out.extend(self.gcl.weights.iter_mut().map(|(_, w)| w));
        let g = &mut self.gru;
        out.extend([
            &mut g.w_z, &mut g.w_r, &mut g.w_n, &mut g.u_z, &mut g.u_r, &mut g.u_n, &mut g.b_z, &mut g.b_r,
            &mut g.b_n,
        ]);
        for h in &mut self.attn.heads {
            out.extend([&mut h.w_q, &mut h.w_k, &mut h.w_v]);
        }
        let d = &mut self.dec;
        out.extend([&mut d.w_h, &mut d.b_h, &mut d.w_o, &mut d.b_o]);
        out
    }
}

/// Expected `(rows, cols)` of every slot for `cfg`, in canonical order.
pub fn param_shapes(cfg: &ModelConfig) -> ModelParams<[usize; 2]> {
    let nf = cfg.n * cfg.f_struct;
    let gat = GatParams {
        heads: (0..cfg.k_node)
            .map(|_| GatHead {
                weight: [cfg.f_struct, cfg.f_in],
                attn: [1, 2 * cfg.f_struct],
            })
            .collect(),
    };
    let gcl = GclParams {
        weights: cfg.transforms.iter().map(|&k| (k, [cfg.f_in, cfg.f_struct])).collect(),
    };
    let (w_in, u, b) = ([cfg.h_rnn, nf], [cfg.h_rnn, cfg.h_rnn], [1, cfg.h_rnn]);
    let gru = GruParams {
        w_z: w_in,
        w_r: w_in,
        w_n: w_in,
        u_z: u,
        u_r: u,
        u_n: u,
        b_z: b,
        b_r: b,
        b_n: b,
    };
    let proj = [cfg.h_rnn, cfg.f_attn];
    let attn = TemporalAttnParams {
        heads: (0..cfg.k_time)
            .map(|_| AttnHead {
                w_q: proj,
                w_k: proj,
                w_v: proj,
            })
            .collect(),
    };
    let dec = DecoderParams {
        w_h: [cfg.k_time * cfg.f_attn, cfg.h_dec],
        b_h: [1, cfg.h_dec],
        w_o: [cfg.h_dec, cfg.n * cfg.n],
        b_o: [1, cfg.n * cfg.n],
    };
    ModelParams { gat, gcl, gru, attn, dec }
}

impl<S: Scalar> ModelParams<Tensor<S>> {
    /// Glorot-uniform weights, zero biases except the decoder output bias,
    /// which starts at `cfg.output_bias_init`.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        param_shapes(cfg).map_named(&mut |name, &[rows, cols]| {
            if name == "dec.b_o" {
                Tensor::filled(&[rows, cols], S::of(cfg.output_bias_init))
            } else if name.contains(".b_") {
                Tensor::zeros(&[rows, cols])
            } else {
                glorot(rows, cols, rng)
            }
        })
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        param_shapes(cfg).map(|&[r, c]| Tensor::zeros(&[r, c]))
    }

    pub fn count(&self) -> usize {
        self.slots().iter().map(|t| t.len()).sum()
    }

    /// `Σθ²` over every trainable value.
    pub fn sum_squares(&self) -> S {
        self.slots().iter().map(|t| t.sum_squares()).sum()
    }

    pub fn matches(&self, cfg: &ModelConfig) -> bool {
        let shapes = param_shapes(cfg);
        let expected = shapes.slots();
        let actual = self.slots();
        expected.len() == actual.len()
            && expected
                .iter()
                .zip(&actual)
                .all(|(&&[r, c], t)| t.rows() == r && t.cols() == c)
    }
}

pub fn glorot<S: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| S::of(rng.random_range(-limit..limit)))
}
