//! The encoder–decoder: per-snapshot graph attention and motif convolutions,
//! fused and fed through a GRU and causal temporal attention, then a dense
//! decoder producing next-snapshot scores.

pub mod checkpoint;
mod config;
pub mod layers;
pub mod params;

use rand::Rng;

pub use config::{ModelConfig, Preset, DEFAULT_OUTPUT_BIAS, MAX_NODES};
pub use params::{
    param_shapes, AttnHead, DecoderParams, GatHead, GatParams, GclParams, GruParams, ModelParams, TemporalAttnParams,
};

use crate::error::{Result, TsamError};
use crate::graph::{DirectedSnapshot, WindowSample};
use crate::motif::{transform, TransformKind};
use crate::numerics::{matmul, Scalar, Tape, Tensor, Var};

/// Node features shared by every snapshot, `N × F`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeatures<S> {
    pub x: Tensor<S>,
}

impl<S: Scalar> NodeFeatures<S> {
    /// One-hot node ids (`F = N`).
    pub fn one_hot(n: usize) -> Self {
        NodeFeatures { x: Tensor::identity(n) }
    }

    pub fn new(x: Tensor<S>) -> Self {
        NodeFeatures { x }
    }
}

/// Non-negative `N × N` link scores for the next snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix<S> {
    pub scores: Tensor<S>,
}

impl<S: Scalar> ScoreMatrix<S> {
    pub fn n(&self) -> usize {
        self.scores.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.scores.at(i, j)
    }

    /// Scores clamped to at most one.
    pub fn probabilities(&self) -> Tensor<S> {
        self.scores.map(|v| v.min(S::one()))
    }
}

/// Everything about a snapshot the encoder needs that does not depend on
/// trainable parameters.
#[derive(Clone, Debug)]
pub struct PreparedSnapshot<S> {
    pub mask: Vec<bool>,
    /// `D̂^{-1/2} Ĉ D̂^{-1/2} X` per active transform.
    pub propagated: Vec<(TransformKind, Tensor<S>)>,
}

impl<S: Scalar> PreparedSnapshot<S> {
    pub fn new(a: &DirectedSnapshot, x: &Tensor<S>, kinds: &[TransformKind]) -> Result<Self> {
        let propagated = kinds
            .iter()
            .map(|&k| Ok((k, matmul(&layers::propagation_matrix(&transform(a, k)), x)?)))
            .collect::<Result<_>>()?;
        Ok(PreparedSnapshot {
            mask: layers::in_neighbor_mask(a),
            propagated,
        })
    }
}

/// Tape handles of one forward pass.
pub struct ForwardTrace {
    pub scores: Var,
    /// Fused per-snapshot row vectors.
    pub fused: Vec<Var>,
    /// GRU states, `T × H_R`.
    pub hidden: Var,
    /// Temporal attention output, `T × (K_T·F″)`.
    pub z: Var,
    /// Per snapshot, per head.
    pub node_attention: Vec<Vec<Var>>,
    /// Per head.
    pub time_attention: Vec<Var>,
}

/// Records the full model on `tape`.
pub fn forward_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    params: &ModelParams<Var>,
    x: Var,
    window: &[&PreparedSnapshot<S>],
) -> Result<ForwardTrace> {
    if window.is_empty() {
        return Err(TsamError::Parameter("empty input window".into()));
    }
    let mut fused = Vec::with_capacity(window.len());
    let mut node_attention = Vec::with_capacity(window.len());
    for snap in window {
        let (gat_out, alphas) = layers::gat(tape, x, &snap.mask, &params.gat.heads)?;
        let mut parts = vec![gat_out];
        for (kind, w) in &params.gcl.weights {
            let (_, px) = snap
                .propagated
                .iter()
                .find(|(k, _)| k == kind)
                .ok_or_else(|| TsamError::Parameter(format!("snapshot was not prepared for {kind}")))?;
            let pv = tape.constant(px.clone());
            parts.push(layers::gcl(tape, pv, *w)?);
        }
        fused.push(layers::fuse(tape, &parts)?);
        node_attention.push(alphas);
    }
    let hidden = layers::gru_sequence(tape, &fused, &params.gru)?;
    let (z, time_attention) = layers::temporal_attention(tape, hidden, &params.attn.heads)?;
    let last = tape.row(z, window.len() - 1);
    let scores = layers::decoder(tape, last, &params.dec)?;
    Ok(ForwardTrace {
        scores,
        fused,
        hidden,
        z,
        node_attention,
        time_attention,
    })
}

/// Configuration, trainable parameters, and node features.
#[derive(Clone, Debug)]
pub struct TsamModel<S> {
    pub cfg: ModelConfig,
    pub params: ModelParams<Tensor<S>>,
    pub features: NodeFeatures<S>,
}

impl<S: Scalar> TsamModel<S> {
    /// Fresh Glorot-initialized model with one-hot features.
    pub fn init(cfg: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let features = NodeFeatures::one_hot(cfg.n);
        Self::init_with_features(cfg, features, rng)
    }

    pub fn init_with_features(cfg: ModelConfig, features: NodeFeatures<S>, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let params = ModelParams::init(&cfg, rng);
        Self::from_parts(cfg, params, features)
    }

    pub fn from_parts(cfg: ModelConfig, params: ModelParams<Tensor<S>>, features: NodeFeatures<S>) -> Result<Self> {
        cfg.validate()?;
        if features.x.rows() != cfg.n || features.x.cols() != cfg.f_in {
            return Err(TsamError::dim("node features", features.x.shape(), &[cfg.n, cfg.f_in]));
        }
        if !params.matches(&cfg) {
            return Err(TsamError::Parameter("parameter shapes do not match the config".into()));
        }
        Ok(TsamModel { cfg, params, features })
    }

    pub fn prepare(&self, a: &DirectedSnapshot) -> Result<PreparedSnapshot<S>> {
        if a.n() != self.cfg.n {
            return Err(TsamError::dim("snapshot", &[a.n()], &[self.cfg.n]));
        }
        PreparedSnapshot::new(a, &self.features.x, &self.cfg.transforms)
    }

    pub fn check_sample(&self, sample: &WindowSample) -> Result<()> {
        if sample.window() != self.cfg.window {
            return Err(TsamError::dim("window", &[sample.window()], &[self.cfg.window]));
        }
        if sample.target.n() != self.cfg.n {
            return Err(TsamError::dim("snapshot", &[sample.target.n()], &[self.cfg.n]));
        }
        Ok(())
    }

    /// Binds the parameters and features to `tape`.
    pub fn bind(&self, tape: &mut Tape<S>) -> (ModelParams<Var>, Var) {
        let vars = self.params.map(|t| tape.param(t.clone()));
        let x = tape.constant(self.features.x.clone());
        (vars, x)
    }

    pub fn forward(&self, sample: &WindowSample) -> Result<ScoreMatrix<S>> {
        self.check_sample(sample)?;
        let prepared = sample
            .inputs
            .iter()
            .map(|s| self.prepare(s))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&PreparedSnapshot<S>> = prepared.iter().collect();
        self.forward_prepared(&refs)
    }

    pub fn forward_prepared(&self, window: &[&PreparedSnapshot<S>]) -> Result<ScoreMatrix<S>> {
        if window.len() != self.cfg.window {
            return Err(TsamError::dim("window", &[window.len()], &[self.cfg.window]));
        }
        let mut tape = Tape::new();
        let (vars, x) = self.bind(&mut tape);
        let trace = forward_on_tape(&mut tape, &vars, x, window)?;
        Ok(ScoreMatrix {
            scores: tape.value(trace.scores).clone(),
        })
    }
}
