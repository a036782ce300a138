//! Two-hop directed motif counts as products of the adjacency matrix and its
//! transpose.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TsamError;
use crate::graph::DirectedSnapshot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransformKind {
    /// `A·A`: paths `u → t → v`.
    M1,
    /// `Aᵀ·A`: common sources `t → u`, `t → v`.
    M2,
    /// `A·Aᵀ`: common targets `u → t`, `v → t`.
    M3,
    /// `Aᵀ·Aᵀ`: paths `v → t → u`.
    M4,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [TransformKind::M1, TransformKind::M2, TransformKind::M3, TransformKind::M4];

    /// Whether the left and right factors are transposed.
    fn transposes(self) -> (bool, bool) {
        match self {
            TransformKind::M1 => (false, false),
            TransformKind::M2 => (true, false),
            TransformKind::M3 => (false, true),
            TransformKind::M4 => (true, true),
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TransformKind::M1 => "M1",
            TransformKind::M2 => "M2",
            TransformKind::M3 => "M3",
            TransformKind::M4 => "M4",
        };
        f.write_str(s)
    }
}

impl FromStr for TransformKind {
    type Err = TsamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M1" => Ok(TransformKind::M1),
            "M2" => Ok(TransformKind::M2),
            "M3" => Ok(TransformKind::M3),
            "M4" => Ok(TransformKind::M4),
            other => Err(TsamError::Parameter(format!("unknown transform `{other}`"))),
        }
    }
}

/// Exact motif-count matrix produced by one transform.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformedMatrix {
    pub kind: TransformKind,
    n: usize,
    values: Vec<u32>,
}

impl TransformedMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, u: usize, v: usize) -> u32 {
        self.values[u * self.n + v]
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|u| (0..u).all(|v| self.at(u, v) == self.at(v, u)))
    }

    pub fn transpose(&self) -> Vec<u32> {
        (0..self.n * self.n)
            .map(|k| self.at(k % self.n, k / self.n))
            .collect()
    }
}

pub fn transform(a: &DirectedSnapshot, kind: TransformKind) -> TransformedMatrix {
    let n = a.n();
    let (lt, rt) = kind.transposes();
    let entry = |transposed: bool, i: usize, j: usize| -> u32 {
        let (r, c) = if transposed { (j, i) } else { (i, j) };
        a.has_edge(r, c) as u32
    };
    let left: Vec<u32> = (0..n * n).map(|k| entry(lt, k / n, k % n)).collect();
    let right: Vec<u32> = (0..n * n).map(|k| entry(rt, k / n, k % n)).collect();

    let mut values = vec![0u32; n * n];
    for i in 0..n {
        for p in 0..n {
            let l = left[i * n + p];
            if l == 0 {
                continue;
            }
            for j in 0..n {
                values[i * n + j] += l * right[p * n + j];
            }
        }
    }
    TransformedMatrix { kind, n, values }
}

pub fn transform_all(a: &DirectedSnapshot, kinds: &[TransformKind]) -> Vec<TransformedMatrix> {
    kinds.iter().map(|&k| transform(a, k)).collect()
}

/// Counts intermediate nodes of the motif named by `kind` between `u` and `v`
/// by direct enumeration.
pub fn motif_count_oracle(a: &DirectedSnapshot, kind: TransformKind, u: usize, v: usize) -> u32 {
    (0..a.n())
        .filter(|&t| match kind {
            TransformKind::M1 => a.has_edge(u, t) && a.has_edge(t, v),
            TransformKind::M2 => a.has_edge(t, u) && a.has_edge(t, v),
            TransformKind::M3 => a.has_edge(u, t) && a.has_edge(v, t),
            TransformKind::M4 => a.has_edge(t, u) && a.has_edge(v, t),
        })
        .count() as u32
}
