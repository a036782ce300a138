//! Timestamped edge lists and their slicing into fixed-duration snapshots.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsamError};
use crate::graph::{DirectedSnapshot, SnapshotSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalEdge {
    pub src: usize,
    pub dst: usize,
    pub timestamp: i64,
}

/// Parsed edges with node ids remapped to `0..node_count` in order of first
/// appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeList {
    pub edges: Vec<TemporalEdge>,
    /// Original label of each remapped node id.
    pub node_labels: Vec<String>,
}

impl EdgeList {
    pub fn node_count(&self) -> usize {
        self.node_labels.len()
    }
}

/// Reads whitespace-separated `src dst timestamp [weight]` lines. Lines
/// starting with `%` or `#` and blank lines are skipped.
pub fn parse_edge_list(reader: impl BufRead) -> Result<EdgeList> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut out = EdgeList::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| TsamError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(TsamError::Parse {
                line: lineno,
                msg: format!("expected `src dst timestamp`, found {} field(s)", fields.len()),
            });
        }
        let timestamp = parse_timestamp(fields[2]).ok_or_else(|| TsamError::Parse {
            line: lineno,
            msg: format!("invalid timestamp `{}`", fields[2]),
        })?;
        let mut id_of = |label: &str| {
            let next = ids.len();
            *ids.entry(label.to_string()).or_insert_with(|| {
                out.node_labels.push(label.to_string());
                next
            })
        };
        let src = id_of(fields[0]);
        let dst = id_of(fields[1]);
        out.edges.push(TemporalEdge { src, dst, timestamp });
    }
    Ok(out)
}

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    let v = s.parse::<f64>().ok()?;
    (v.is_finite() && v.fract() == 0.0).then_some(v as i64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    /// Start of snapshot 0; defaults to the earliest timestamp.
    pub origin: Option<i64>,
    pub snapshot_duration: i64,
    /// Number of snapshots; `None` covers the whole span after `origin`.
    pub snapshot_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlicedSequence {
    pub sequence: SnapshotSequence,
    /// Events (with multiplicity) that landed in each snapshot.
    pub events_per_snapshot: Vec<usize>,
    pub dropped: usize,
}

impl SlicedSequence {
    pub fn kept_events(&self) -> usize {
        self.events_per_snapshot.iter().sum()
    }
}

/// Assigns every edge to snapshot `floor((ts - origin) / duration)` over
/// half-open intervals. Edges outside the covered span are dropped.
pub fn slice_snapshots(edges: &[TemporalEdge], node_count: usize, cfg: &SliceConfig) -> Result<SlicedSequence> {
    if cfg.snapshot_duration <= 0 {
        return Err(TsamError::Parameter("snapshot duration must be positive".into()));
    }
    if cfg.snapshot_count == Some(0) {
        return Err(TsamError::Parameter("snapshot count must be positive".into()));
    }
    let Some(min_ts) = edges.iter().map(|e| e.timestamp).min() else {
        return Err(TsamError::EmptySlice { dropped: 0 });
    };
    let max_ts = edges.iter().map(|e| e.timestamp).max().unwrap_or(min_ts);
    let origin = cfg.origin.unwrap_or(min_ts);
    let count = match cfg.snapshot_count {
        Some(c) => c,
        None if max_ts < origin => 0,
        None => ((max_ts - origin) / cfg.snapshot_duration) as usize + 1,
    };

    let mut snaps: Vec<DirectedSnapshot> = (0..count).map(|t| DirectedSnapshot::empty(node_count, t)).collect();
    let mut events = vec![0usize; count];
    let mut dropped = 0;
    for e in edges {
        let offset = e.timestamp - origin;
        if offset < 0 {
            dropped += 1;
            continue;
        }
        let idx = (offset / cfg.snapshot_duration) as usize;
        if idx >= count {
            dropped += 1;
            continue;
        }
        snaps[idx].insert(e.src, e.dst)?;
        events[idx] += 1;
    }
    if dropped == edges.len() {
        return Err(TsamError::EmptySlice { dropped });
    }
    Ok(SlicedSequence {
        sequence: SnapshotSequence::new(snaps)?,
        events_per_snapshot: events,
        dropped,
    })
}
