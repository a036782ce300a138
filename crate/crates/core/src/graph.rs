//! Temporal directed-graph data model: binary snapshots over a shared node
//! set, sliding windows, and summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsamError};
use crate::numerics::{Scalar, Tensor};

/// One binary directed adjacency matrix, `adj[i * n + j] == 1` iff `i → j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedSnapshot {
    n: usize,
    adj: Vec<u8>,
    time_index: usize,
}

impl DirectedSnapshot {
    pub fn empty(n: usize, time_index: usize) -> Self {
        DirectedSnapshot {
            n,
            adj: vec![0; n * n],
            time_index,
        }
    }

    /// Builds the snapshot from `(src, dst)` pairs. Duplicates collapse.
    pub fn build_adjacency(edges: &[(usize, usize)], n: usize) -> Result<Self> {
        let mut s = Self::empty(n, 0);
        for &(src, dst) in edges {
            s.insert(src, dst)?;
        }
        Ok(s)
    }

    pub fn insert(&mut self, src: usize, dst: usize) -> Result<()> {
        if src >= self.n || dst >= self.n {
            return Err(TsamError::NodeIndex { src, dst, n: self.n });
        }
        self.adj[src * self.n + dst] = 1;
        Ok(())
    }

    pub fn with_time_index(mut self, t: usize) -> Self {
        self.time_index = t;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] != 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.adj
    }

    pub fn link_count(&self) -> usize {
        self.adj.iter().filter(|&&a| a != 0).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.has_edge(i, j))
            .collect()
    }

    /// Sources `j` of links `j → i`.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(j, i)).collect()
    }

    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        Tensor::from_fn(self.n, self.n, |i, j| if self.has_edge(i, j) { S::one() } else { S::zero() })
    }

    /// Same links, relabelled so that node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::empty(self.n, self.time_index);
        for (i, j) in self.edges() {
            out.adj[perm[i] * self.n + perm[j]] = 1;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotSequence {
    n: usize,
    snapshots: Vec<DirectedSnapshot>,
}

impl SnapshotSequence {
    /// Re-indexes the snapshots `0..len` and checks they share one node count.
    pub fn new(snapshots: Vec<DirectedSnapshot>) -> Result<Self> {
        let n = snapshots.first().map_or(0, DirectedSnapshot::n);
        if let Some(bad) = snapshots.iter().find(|s| s.n != n) {
            return Err(TsamError::dim("snapshot sequence", &[n], &[bad.n]));
        }
        let snapshots = snapshots
            .into_iter()
            .enumerate()
            .map(|(t, s)| s.with_time_index(t))
            .collect();
        Ok(SnapshotSequence { n, snapshots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&DirectedSnapshot> {
        self.snapshots.get(t)
    }

    pub fn snapshots(&self) -> &[DirectedSnapshot] {
        &self.snapshots
    }

    /// Every window of `window` consecutive inputs followed by its target.
    /// Sample `k` covers inputs `k..k + window` and target `k + window`.
    pub fn make_windows(&self, window: usize) -> Result<Vec<WindowSample>> {
        if window == 0 {
            return Err(TsamError::Parameter("window size must be at least 1".into()));
        }
        let count = self.len().saturating_sub(window);
        Ok((0..count).map(|k| self.window_ending_at(k + window - 1, window)).collect())
    }

    /// The sample whose last input is `anchor` (predicting `anchor + 1`).
    ///
    /// Panics if the window does not fit inside the sequence.
    pub fn window_ending_at(&self, anchor: usize, window: usize) -> WindowSample {
        let start = anchor + 1 - window;
        WindowSample {
            inputs: self.snapshots[start..=anchor].to_vec(),
            target: self.snapshots[anchor + 1].clone(),
            anchor_t: anchor,
        }
    }
}

/// `window` consecutive input snapshots plus the snapshot that follows them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowSample {
    pub inputs: Vec<DirectedSnapshot>,
    pub target: DirectedSnapshot,
    /// Time index of the last input.
    pub anchor_t: usize,
}

impl WindowSample {
    pub fn window(&self) -> usize {
        self.inputs.len()
    }

    pub fn last_input(&self) -> &DirectedSnapshot {
        self.inputs.last().expect("window holds at least one snapshot")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub node_count: usize,
    pub link_count: usize,
    pub average_degree: f64,
    pub snapshot_count: usize,
}

impl NetworkStats {
    /// `link_count` is the number of timestamped events kept after slicing,
    /// counted with multiplicity.
    pub fn compute(node_count: usize, link_count: usize, snapshot_count: usize) -> Result<Self> {
        if node_count == 0 {
            return Err(TsamError::Degenerate("network has no nodes".into()));
        }
        Ok(NetworkStats {
            node_count,
            link_count,
            average_degree: 2.0 * link_count as f64 / node_count as f64,
            snapshot_count,
        })
    }
}

pub fn network_stats(seq: &SnapshotSequence, raw_link_count: usize) -> Result<NetworkStats> {
    NetworkStats::compute(seq.n(), raw_link_count, seq.len())
}
