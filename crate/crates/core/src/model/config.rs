use serde::{Deserialize, Serialize};

use crate::error::{Result, TsamError};
use crate::motif::TransformKind;

/// Largest node count accepted; the decoder head alone holds `h_dec · n²`
/// weights.
pub const MAX_NODES: usize = 1200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Node count `N`.
    pub n: usize,
    /// Input feature width `F`.
    pub f_in: usize,
    /// Structural feature width `F′`.
    pub f_struct: usize,
    /// GRU hidden width.
    pub h_rnn: usize,
    /// Per-head output width of the temporal attention.
    pub f_attn: usize,
    pub k_node: usize,
    pub k_time: usize,
    /// Decoder hidden width.
    pub h_dec: usize,
    /// Input snapshots per sample.
    pub window: usize,
    pub transforms: Vec<TransformKind>,
    pub lr: f64,
    /// L2 weight `λ`.
    pub l2: f64,
    /// Loss weight `β` on observed links.
    pub penalty_beta: f64,
    /// Initial value of the decoder output bias. Output units that start
    /// below zero for every input never receive gradient through the ReLU.
    #[serde(default = "default_output_bias")]
    pub output_bias_init: f64,
}

pub const DEFAULT_OUTPUT_BIAS: f64 = 0.5;

fn default_output_bias() -> f64 {
    DEFAULT_OUTPUT_BIAS
}

/// Per-dataset hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Man,
    Eec,
    Uci,
    Lem,
}

impl std::str::FromStr for Preset {
    type Err = TsamError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "man" => Ok(Preset::Man),
            "eec" => Ok(Preset::Eec),
            "uci" => Ok(Preset::Uci),
            "lem" => Ok(Preset::Lem),
            other => Err(TsamError::Parameter(format!("unknown preset `{other}`"))),
        }
    }
}

impl ModelConfig {
    /// A small configuration for desk-scale graphs with one-hot features.
    pub fn small(n: usize, window: usize) -> Self {
        ModelConfig {
            n,
            f_in: n,
            f_struct: 8,
            h_rnn: 16,
            f_attn: 8,
            k_node: 2,
            k_time: 2,
            h_dec: 16,
            window,
            transforms: TransformKind::ALL.to_vec(),
            lr: 0.003,
            l2: 0.0,
            penalty_beta: 5.0,
            output_bias_init: DEFAULT_OUTPUT_BIAS,
        }
    }

    pub fn preset(p: Preset) -> Self {
        let (n, f_struct, h_rnn, f_attn, k_node, k_time, h_dec, lr, l2, window) = match p {
            Preset::Man => (167, 32, 1024, 256, 4, 8, 128, 0.001, 0.0, 8),
            Preset::Eec => (964, 64, 4096, 1024, 2, 4, 512, 0.001, 1e-5, 8),
            Preset::Uci => (889, 64, 4096, 1024, 2, 4, 512, 0.001, 1e-5, 5),
            Preset::Lem => (485, 32, 2048, 512, 4, 8, 256, 0.005, 0.0, 8),
        };
        ModelConfig {
            n,
            f_in: n,
            f_struct,
            h_rnn,
            f_attn,
            k_node,
            k_time,
            h_dec,
            window,
            transforms: TransformKind::ALL.to_vec(),
            lr,
            l2,
            penalty_beta: 5.0,
            output_bias_init: DEFAULT_OUTPUT_BIAS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n", self.n),
            ("f_in", self.f_in),
            ("f_struct", self.f_struct),
            ("h_rnn", self.h_rnn),
            ("f_attn", self.f_attn),
            ("k_node", self.k_node),
            ("k_time", self.k_time),
            ("h_dec", self.h_dec),
            ("window", self.window),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(TsamError::Parameter(format!("{name} must be at least 1")));
        }
        if self.n > MAX_NODES {
            return Err(TsamError::Resource(format!(
                "{} nodes exceeds the supported maximum of {MAX_NODES}",
                self.n
            )));
        }
        if !(self.penalty_beta >= 1.0) {
            return Err(TsamError::Parameter("penalty_beta must be at least 1".into()));
        }
        if !self.output_bias_init.is_finite() {
            return Err(TsamError::Parameter("output_bias_init must be finite".into()));
        }
        if !(self.l2 >= 0.0) || !(self.lr >= 0.0) {
            return Err(TsamError::Parameter("lr and l2 must be non-negative".into()));
        }
        let mut t = self.transforms.clone();
        t.sort();
        t.dedup();
        if t.len() != self.transforms.len() {
            return Err(TsamError::Parameter("duplicate transform in config".into()));
        }
        Ok(())
    }
}
