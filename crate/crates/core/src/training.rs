//! Penalized reconstruction loss, Adam, and the per-anchor training protocol.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TsamError};
use crate::graph::{DirectedSnapshot, SnapshotSequence};
use crate::model::{forward_on_tape, ModelConfig, ModelParams, PreparedSnapshot, ScoreMatrix, TsamModel};
use crate::numerics::{Scalar, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub penalty_beta: f64,
    pub l2_lambda: f64,
}

impl LossConfig {
    pub fn from_model(cfg: &ModelConfig) -> Self {
        LossConfig {
            penalty_beta: cfg.penalty_beta,
            l2_lambda: cfg.l2,
        }
    }
}

/// `beta` where the target has a link, one elsewhere.
pub fn penalty_matrix<S: Scalar>(target: &DirectedSnapshot, beta: f64) -> Tensor<S> {
    let b = S::of(beta);
    let n = target.n();
    Tensor::from_fn(n, n, |i, j| if target.has_edge(i, j) { b } else { S::one() })
}

/// `‖(S − A) ⊙ B‖²_F + (λ/2)‖θ‖²`
pub fn loss<S: Scalar>(
    s: &ScoreMatrix<S>,
    target: &DirectedSnapshot,
    cfg: &LossConfig,
    params: &ModelParams<Tensor<S>>,
) -> Result<S> {
    let a = target.to_tensor::<S>();
    if s.scores.shape() != a.shape() {
        return Err(TsamError::dim("loss", s.scores.shape(), a.shape()));
    }
    let b = penalty_matrix::<S>(target, cfg.penalty_beta);
    let fit: S = s
        .scores
        .data()
        .iter()
        .zip(a.data())
        .zip(b.data())
        .map(|((&sv, &av), &bv)| {
            let d = (sv - av) * bv;
            d * d
        })
        .sum();
    Ok(fit + S::of(cfg.l2_lambda / 2.0) * params.sum_squares())
}

/// Records the loss on `tape` given the score node and the bound parameters.
pub fn loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    scores: Var,
    target: &DirectedSnapshot,
    cfg: &LossConfig,
    params: &ModelParams<Var>,
) -> Result<Var> {
    let a = tape.constant(target.to_tensor());
    let b = tape.constant(penalty_matrix(target, cfg.penalty_beta));
    let diff = tape.sub(scores, a)?;
    let weighted = tape.mul(diff, b)?;
    let fit = tape.sum_squares(weighted);
    if cfg.l2_lambda == 0.0 {
        return Ok(fit);
    }
    let squares: Vec<Var> = params.slots().into_iter().map(|&v| tape.sum_squares(v)).collect();
    let total = tape.sum_all(&squares)?;
    let reg = tape.scale(total, S::of(cfg.l2_lambda / 2.0));
    tape.add(fit, reg)
}

/// Loss value and its gradient with respect to every parameter.
pub fn loss_and_gradients<S: Scalar>(
    model: &TsamModel<S>,
    window: &[&PreparedSnapshot<S>],
    target: &DirectedSnapshot,
) -> Result<(S, ModelParams<Tensor<S>>)> {
    let mut tape = Tape::new();
    let (vars, x) = model.bind(&mut tape);
    let trace = forward_on_tape(&mut tape, &vars, x, window)?;
    let out = loss_on_tape(&mut tape, trace.scores, target, &LossConfig::from_model(&model.cfg), &vars)?;
    let value = tape.value(out).data()[0];
    let mut grads = tape.backward(out);
    let g = vars.map_named(&mut |_, &v| grads.take(v).unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())));
    Ok((value, g))
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: ModelParams<Tensor<S>>,
    v: ModelParams<Tensor<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: &ModelConfig, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ModelParams::zeros(cfg),
            v: ModelParams::zeros(cfg),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut ModelParams<Tensor<S>>, grads: &ModelParams<Tensor<S>>) {
        self.step += 1;
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let one = S::one();
        let c1 = one - b1.powi(self.step);
        let c2 = one - b2.powi(self.step);
        let (lr, eps) = (S::of(self.lr), S::of(self.eps));
        let slots = params
            .slots_mut()
            .into_iter()
            .zip(grads.slots())
            .zip(self.m.slots_mut().into_iter().zip(self.v.slots_mut()));
        for ((p, g), (m, v)) in slots {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// One Adam update on a single sample; returns the pre-update loss.
pub fn train_step<S: Scalar>(
    model: &mut TsamModel<S>,
    opt: &mut Adam<S>,
    window: &[&PreparedSnapshot<S>],
    target: &DirectedSnapshot,
    epoch: usize,
) -> Result<S> {
    let (value, grads) = loss_and_gradients(model, window, target)?;
    if !value.is_finite() {
        return Err(TsamError::Divergence {
            epoch,
            msg: format!("loss is {value}"),
        });
    }
    if !grads.slots().iter().all(|g| g.all_finite()) {
        return Err(TsamError::Divergence {
            epoch,
            msg: "non-finite gradient".into(),
        });
    }
    opt.update(&mut model.params, &grads);
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            patience: 20,
            min_delta: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub early_stop: Option<EarlyStop>,
}

impl TrainRun {
    pub fn new(epochs: usize, seed: u64, lr: f64) -> Self {
        TrainRun {
            epochs,
            seed,
            lr,
            early_stop: Some(EarlyStop::default()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult<S> {
    pub model: TsamModel<S>,
    /// Mean training loss per completed epoch.
    pub history: Vec<f64>,
}

/// Trains a fresh model on every window whose target index is at most
/// `anchor`. Evaluation on `anchor + 1` is left to the caller.
pub fn fit_timestep<S: Scalar>(
    seq: &SnapshotSequence,
    anchor: usize,
    cfg: &ModelConfig,
    run: &TrainRun,
) -> Result<FitResult<S>> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(run.seed);
    let model = TsamModel::init(cfg.clone(), &mut init_rng)?;
    fit_from(model, seq, anchor, run)
}

/// Like [`fit_timestep`] but continuing from `model`.
pub fn fit_from<S: Scalar>(
    mut model: TsamModel<S>,
    seq: &SnapshotSequence,
    anchor: usize,
    run: &TrainRun,
) -> Result<FitResult<S>> {
    let window = model.cfg.window;
    if anchor < window || anchor + 1 >= seq.len() {
        return Err(TsamError::Protocol(format!(
            "anchor {anchor} needs window {window} of history and a following snapshot (sequence length {})",
            seq.len()
        )));
    }
    let prepared = seq.snapshots()[..=anchor]
        .iter()
        .map(|s| model.prepare(s))
        .collect::<Result<Vec<_>>>()?;
    // sample k: inputs k..k+window, target k+window <= anchor
    let mut order: Vec<usize> = (0..=anchor - window).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(run.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut opt = Adam::new(&model.cfg, run.lr);
    let mut history = Vec::with_capacity(run.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..run.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for &k in &order {
            let inputs: Vec<&PreparedSnapshot<S>> = prepared[k..k + window].iter().collect();
            let target = &seq.snapshots()[k + window];
            total += train_step(&mut model, &mut opt, &inputs, target, epoch + 1)?.as_f64();
        }
        let mean = total / order.len() as f64;
        history.push(mean);
        if let Some(stop) = run.early_stop {
            if mean < best - stop.min_delta {
                best = mean;
                stale = 0;
            } else {
                stale += 1;
                if stale >= stop.patience {
                    break;
                }
            }
        }
    }
    Ok(FitResult { model, history })
}
