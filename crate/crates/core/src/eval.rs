//! Rank-based link prediction metrics: AUC, PRAUC and GMAUC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TsamError};
use crate::graph::DirectedSnapshot;
use crate::model::ScoreMatrix;
use crate::numerics::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AucMode {
    /// Every positive/negative pair.
    Exact,
    /// `n` independently drawn pairs.
    Sampled { n: usize, seed: u64 },
}

/// `(wins + ties / 2) / comparisons` between positive and negative scores.
pub fn auc(pos: &[f64], neg: &[f64], mode: AucMode) -> Result<f64> {
    if pos.is_empty() {
        return Err(TsamError::UndefinedMetric("positive"));
    }
    if neg.is_empty() {
        return Err(TsamError::UndefinedMetric("negative"));
    }
    match mode {
        AucMode::Exact => {
            let mut sorted = neg.to_vec();
            sorted.sort_by(f64::total_cmp);
            let (mut wins, mut ties) = (0u64, 0u64);
            for &p in pos {
                let below = sorted.partition_point(|&x| x < p);
                let not_above = sorted.partition_point(|&x| x <= p);
                wins += below as u64;
                ties += (not_above - below) as u64;
            }
            let n = pos.len() as u64 * neg.len() as u64;
            Ok((wins as f64 + 0.5 * ties as f64) / n as f64)
        }
        AucMode::Sampled { n, seed } => {
            if n == 0 {
                return Err(TsamError::Parameter("sampled AUC needs at least one draw".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut wins, mut ties) = (0u64, 0u64);
            for _ in 0..n {
                let p = pos[rng.random_range(0..pos.len())];
                let q = neg[rng.random_range(0..neg.len())];
                if p > q {
                    wins += 1;
                } else if p == q {
                    ties += 1;
                }
            }
            Ok((wins as f64 + 0.5 * ties as f64) / n as f64)
        }
    }
}

/// Area under the precision-recall curve from a descending-score sweep.
///
/// Equal scores form one threshold step. The curve starts at recall 0 with
/// precision 1 and is integrated with the trapezoidal rule in recall.
pub fn prauc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() {
        return Err(TsamError::UndefinedMetric("positive"));
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total_pos = pos.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_recall, mut prev_precision) = (0.0, 1.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let score = all[i].0;
        while i < all.len() && all[i].0 == score {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * (precision + prev_precision) / 2.0;
        prev_recall = recall;
        prev_precision = precision;
    }
    Ok(area)
}

/// Partition of all off-diagonal ordered pairs by their state in two
/// consecutive snapshots.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSplit {
    pub persisted: Vec<(usize, usize)>,
    pub removed: Vec<(usize, usize)>,
    pub added: Vec<(usize, usize)>,
    pub never: Vec<(usize, usize)>,
}

impl CandidateSplit {
    pub fn added_count(&self) -> usize {
        self.added.len()
    }

    pub fn removed_count(&self) -> usize {
        self.removed.len()
    }
}

pub fn split_candidates(a_t: &DirectedSnapshot, a_next: &DirectedSnapshot) -> Result<CandidateSplit> {
    if a_t.n() != a_next.n() {
        return Err(TsamError::dim("split_candidates", &[a_t.n()], &[a_next.n()]));
    }
    let n = a_t.n();
    let mut split = CandidateSplit::default();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let bucket = match (a_t.has_edge(i, j), a_next.has_edge(i, j)) {
                (true, true) => &mut split.persisted,
                (true, false) => &mut split.removed,
                (false, true) => &mut split.added,
                (false, false) => &mut split.never,
            };
            bucket.push((i, j));
        }
    }
    Ok(split)
}

fn gather<S: Scalar>(scores: &ScoreMatrix<S>, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs.iter().map(|&(i, j)| scores.get(i, j).as_f64()).collect()
}

/// Combines a PRAUC over changed pairs and an AUC over previously existing
/// pairs, each rescaled so a random predictor scores zero.
pub fn gmauc_from_parts(prauc_changed: f64, auc_existing: f64, added: usize, removed: usize) -> f64 {
    let base = added as f64 / (added + removed) as f64;
    let pr_term = ((prauc_changed - base) / (1.0 - base)).max(0.0);
    let auc_term = (2.0 * (auc_existing - 0.5)).max(0.0);
    (pr_term * auc_term).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gmauc {
    pub gmauc: f64,
    /// PRAUC with added links positive and removed links negative.
    pub prauc_changed: f64,
    /// AUC with persisted links positive and removed links negative.
    pub auc_existing: f64,
    pub added: usize,
    pub removed: usize,
}

pub fn gmauc<S: Scalar>(scores: &ScoreMatrix<S>, a_t: &DirectedSnapshot, a_next: &DirectedSnapshot) -> Result<Gmauc> {
    let split = split_candidates(a_t, a_next)?;
    if split.added.is_empty() {
        return Err(TsamError::UndefinedMetric("added"));
    }
    if split.removed.is_empty() {
        return Err(TsamError::UndefinedMetric("removed"));
    }
    if split.persisted.is_empty() {
        return Err(TsamError::UndefinedMetric("persisted"));
    }
    let removed = gather(scores, &split.removed);
    let prauc_changed = prauc(&gather(scores, &split.added), &removed)?;
    let auc_existing = auc(&gather(scores, &split.persisted), &removed, AucMode::Exact)?;
    Ok(Gmauc {
        gmauc: gmauc_from_parts(prauc_changed, auc_existing, split.added.len(), split.removed.len()),
        prauc_changed,
        auc_existing,
        added: split.added.len(),
        removed: split.removed.len(),
    })
}

/// Scores of links (positives) and non-links (negatives) of `target`,
/// diagonal excluded.
pub fn link_scores<S: Scalar>(scores: &ScoreMatrix<S>, target: &DirectedSnapshot) -> (Vec<f64>, Vec<f64>) {
    let n = target.n();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let s = scores.get(i, j).as_f64();
            if target.has_edge(i, j) {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
    }
    (pos, neg)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub positives: usize,
    pub negatives: usize,
    pub persisted: usize,
    pub removed: usize,
    pub added: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub anchor_t: usize,
    pub auc: Option<f64>,
    pub prauc: Option<f64>,
    pub gmauc: Option<f64>,
    pub sample_counts: SampleCounts,
    pub seed: u64,
    /// Why a metric is missing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Scores the prediction for `a_next` made from a window ending at `a_t`.
pub fn evaluate<S: Scalar>(
    scores: &ScoreMatrix<S>,
    a_t: &DirectedSnapshot,
    a_next: &DirectedSnapshot,
    anchor_t: usize,
    seed: u64,
) -> Result<EvalReport> {
    let (pos, neg) = link_scores(scores, a_next);
    let split = split_candidates(a_t, a_next)?;
    let mut notes = Vec::new();
    let mut keep = |r: Result<f64>, what: &str| match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{what}: {e}"));
            None
        }
    };
    let auc_v = keep(auc(&pos, &neg, AucMode::Exact), "auc");
    let prauc_v = keep(prauc(&pos, &neg), "prauc");
    let gmauc_v = keep(gmauc(scores, a_t, a_next).map(|g| g.gmauc), "gmauc");
    Ok(EvalReport {
        anchor_t,
        auc: auc_v,
        prauc: prauc_v,
        gmauc: gmauc_v,
        sample_counts: SampleCounts {
            positives: pos.len(),
            negatives: neg.len(),
            persisted: split.persisted.len(),
            removed: split.removed.len(),
            added: split.added.len(),
        },
        seed,
        notes,
    })
}
