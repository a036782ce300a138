//! Command-line driver: `ingest`, `train-eval`, `ablate` and `stats`.
//!
//! Runs are driven by a flat TOML config. Paths inside it are relative to the
//! config file; `--out` and the other flags override the matching keys.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TsamError};
use crate::eval::{evaluate, EvalReport};
use crate::graph::{DirectedSnapshot, NetworkStats, SnapshotSequence};
use crate::ingest::{parse_edge_list, slice_snapshots, SliceConfig};
use crate::model::{checkpoint, ModelConfig, Preset, TsamModel};
use crate::motif::TransformKind;
use crate::numerics::Scalar;
use crate::training::{fit_from, fit_timestep, EarlyStop, TrainRun};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;

/// Head counts accepted by the ablation axes.
pub const HEAD_CHOICES: [usize; 5] = [1, 2, 4, 8, 16];

#[derive(Parser, Debug)]
#[command(name = "tsam", version, about = "Temporal link prediction on directed snapshot sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true, value_parser = ["32", "64"])]
    pub precision: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and slice the dataset into a snapshot cache plus stats.
    Ingest,
    /// Train per anchor, evaluate on the following snapshot, aggregate.
    TrainEval,
    /// Repeat train-eval over values of one axis.
    Ablate {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Transform sets such as `none`, `M1`, `M1,M2,M3,M4`, or head counts.
        #[arg(required = true)]
        values: Vec<String>,
    },
    /// Print network statistics as JSON.
    Stats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Transforms,
    #[value(name = "node_heads", alias = "node-heads")]
    NodeHeads,
    #[value(name = "time_heads", alias = "time-heads")]
    TimeHeads,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Transforms => "transforms",
            Axis::NodeHeads => "node_heads",
            Axis::TimeHeads => "time_heads",
        }
    }
}

/// Every key is optional; model keys fall back to the preset, or to a small
/// desk-scale model when no preset is named.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub dataset: Option<PathBuf>,
    /// Snapshot cache; defaults to `<out>/snapshots.json`.
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,

    pub origin: Option<i64>,
    pub snapshot_duration: Option<i64>,
    pub snapshot_count: Option<usize>,

    pub f_struct: Option<usize>,
    pub h_rnn: Option<usize>,
    pub f_attn: Option<usize>,
    pub k_node: Option<usize>,
    pub k_time: Option<usize>,
    pub h_dec: Option<usize>,
    pub window: Option<usize>,
    pub transforms: Option<Vec<TransformKind>>,
    pub lr: Option<f64>,
    pub l2: Option<f64>,
    pub penalty_beta: Option<f64>,
    pub output_bias_init: Option<f64>,

    pub epochs: Option<usize>,
    pub early_stop: Option<bool>,
    pub patience: Option<usize>,
    pub min_delta: Option<f64>,
    /// Continue each anchor from the previous anchor's model.
    pub warm_start: bool,
    pub seed: u64,
    pub repetitions: Option<usize>,
    /// First and last anchor, inclusive.
    pub anchor_start: Option<usize>,
    pub anchor_end: Option<usize>,

    pub precision: Option<u32>,
    pub deterministic: bool,
}

pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_REPETITIONS: usize = 5;
const DEFAULT_WINDOW: usize = 3;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TsamError::Parameter(format!("config: {e}")))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| TsamError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.dataset, &mut cfg.cache, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| TsamError::Parameter("no output directory (set `out` or pass --out)".into()))
    }

    pub fn cache_path(&self) -> Result<PathBuf> {
        match &self.cache {
            Some(p) => Ok(p.clone()),
            None => Ok(self.out_dir()?.join("snapshots.json")),
        }
    }

    pub fn precision(&self) -> u32 {
        self.precision.unwrap_or(64)
    }

    pub fn model_config(&self, n: usize) -> Result<ModelConfig> {
        let mut m = match self.preset {
            Some(p) => ModelConfig::preset(p),
            None => ModelConfig::small(n, self.window.unwrap_or(DEFAULT_WINDOW)),
        };
        m.n = n;
        m.f_in = n;
        let dims = [
            (&mut m.f_struct, self.f_struct),
            (&mut m.h_rnn, self.h_rnn),
            (&mut m.f_attn, self.f_attn),
            (&mut m.k_node, self.k_node),
            (&mut m.k_time, self.k_time),
            (&mut m.h_dec, self.h_dec),
            (&mut m.window, self.window),
        ];
        for (slot, v) in dims {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(t) = &self.transforms {
            m.transforms = t.clone();
        }
        m.lr = self.lr.unwrap_or(m.lr);
        m.l2 = self.l2.unwrap_or(m.l2);
        m.penalty_beta = self.penalty_beta.unwrap_or(m.penalty_beta);
        m.output_bias_init = self.output_bias_init.unwrap_or(m.output_bias_init);
        m.validate()?;
        Ok(m)
    }

    pub fn train_run(&self, model: &ModelConfig) -> TrainRun {
        let early_stop = self.early_stop.unwrap_or(true).then(|| {
            let d = EarlyStop::default();
            EarlyStop {
                patience: self.patience.unwrap_or(d.patience),
                min_delta: self.min_delta.unwrap_or(d.min_delta),
            }
        });
        TrainRun {
            epochs: self.epochs.unwrap_or(DEFAULT_EPOCHS),
            seed: self.seed,
            lr: model.lr,
            early_stop,
        }
    }

    /// Inclusive anchor range, defaulting to every anchor with a full window
    /// and a following snapshot.
    pub fn anchors(&self, window: usize, len: usize) -> Result<(usize, usize)> {
        if len < window + 2 {
            return Err(TsamError::Protocol(format!(
                "{len} snapshots cannot hold a window of {window} plus training and test targets"
            )));
        }
        let (lo, hi) = (window, len - 2);
        let start = self.anchor_start.unwrap_or(lo);
        let end = self.anchor_end.unwrap_or(hi);
        if start < lo || end > hi || start > end {
            return Err(TsamError::Parameter(format!(
                "anchor range [{start}, {end}] must lie within [{lo}, {hi}]"
            )));
        }
        Ok((start, end))
    }

    /// SHA-256 of the config with its output location removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Sliced snapshots stored as per-snapshot edge lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCache {
    pub source: PathBuf,
    pub source_sha256: String,
    pub node_labels: Vec<String>,
    pub edges: Vec<Vec<(usize, usize)>>,
    pub events_per_snapshot: Vec<usize>,
    pub dropped: usize,
}

impl SnapshotCache {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let path = cfg
            .dataset
            .as_deref()
            .ok_or_else(|| TsamError::Parameter("no dataset path in config".into()))?;
        let bytes = fs::read(path).map_err(|e| TsamError::io(path, e))?;
        let list = parse_edge_list(&bytes[..]).map_err(|e| match e {
            TsamError::Parse { line, msg } => TsamError::Parse {
                line,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        })?;
        let slice = SliceConfig {
            origin: cfg.origin,
            snapshot_duration: cfg
                .snapshot_duration
                .ok_or_else(|| TsamError::Parameter("snapshot_duration is required".into()))?,
            snapshot_count: cfg.snapshot_count,
        };
        let sliced = slice_snapshots(&list.edges, list.node_count(), &slice)?;
        Ok(SnapshotCache {
            source: path.to_path_buf(),
            source_sha256: hex::encode(Sha256::digest(&bytes)),
            node_labels: list.node_labels,
            edges: sliced.sequence.snapshots().iter().map(DirectedSnapshot::edges).collect(),
            dropped: sliced.dropped,
            events_per_snapshot: sliced.events_per_snapshot,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| TsamError::io(path, e))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| TsamError::Format(format!("{}: {e}", path.display())))
    }

    pub fn sequence(&self) -> Result<SnapshotSequence> {
        let n = self.node_labels.len();
        let snaps = self
            .edges
            .iter()
            .enumerate()
            .map(|(t, e)| Ok(DirectedSnapshot::build_adjacency(e, n)?.with_time_index(t)))
            .collect::<Result<Vec<_>>>()?;
        SnapshotSequence::new(snaps)
    }

    pub fn stats(&self) -> Result<NetworkStats> {
        NetworkStats::compute(
            self.node_labels.len(),
            self.events_per_snapshot.iter().sum(),
            self.edges.len(),
        )
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| TsamError::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| TsamError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| TsamError::io(path, e))
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<NetworkStats> {
    let cache = SnapshotCache::build(cfg)?;
    let out = cfg.out_dir()?;
    create_dir(out)?;
    let cache_path = cfg.cache_path()?;
    if let Some(dir) = cache_path.parent() {
        create_dir(dir)?;
    }
    write_json(&cache_path, &cache)?;
    let stats = cache.stats()?;
    write_json(&out.join("stats.json"), &stats)?;
    Ok(stats)
}

/// Stats from the cache when present, otherwise straight from the dataset.
pub fn cmd_stats(cfg: &RunConfig) -> Result<NetworkStats> {
    let cached = cfg.cache_path().ok().filter(|p| p.exists());
    match cached {
        Some(p) => SnapshotCache::load(&p)?.stats(),
        None => SnapshotCache::build(cfg)?.stats(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub cache_sha256: String,
    pub seed: u64,
    pub precision: u32,
    pub deterministic: bool,
    pub config: RunConfig,
    pub model: ModelConfig,
    pub train: TrainRun,
}

/// One (repetition, anchor) run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub repetition: usize,
    pub precision: u32,
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    pub diverged: bool,
    #[serde(flatten)]
    pub eval: EvalReport,
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// Mean and sample standard deviation of each metric. `anchor` is `all` on
/// the row pooling every anchor and repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub anchor: String,
    pub runs: usize,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub prauc_mean: Option<f64>,
    pub prauc_std: Option<f64>,
    pub gmauc_mean: Option<f64>,
    pub gmauc_std: Option<f64>,
    pub gmauc_runs: usize,
    pub diverged: usize,
}

#[derive(Clone, Debug)]
pub struct TrainEvalSummary {
    pub reports: Vec<RunReport>,
    pub aggregate: Vec<AggregateRow>,
}

impl TrainEvalSummary {
    pub fn diverged(&self) -> usize {
        self.reports.iter().filter(|r| r.diverged).count()
    }

    pub fn overall(&self) -> &AggregateRow {
        self.aggregate.last().expect("aggregate holds the pooled row")
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

fn aggregate_row(anchor: String, reports: &[&RunReport]) -> AggregateRow {
    let pick = |f: fn(&EvalReport) -> Option<f64>| -> Vec<f64> { reports.iter().filter_map(|r| f(&r.eval)).collect() };
    let (auc_mean, auc_std) = mean_std(&pick(|e| e.auc));
    let (prauc_mean, prauc_std) = mean_std(&pick(|e| e.prauc));
    let gm = pick(|e| e.gmauc);
    let (gmauc_mean, gmauc_std) = mean_std(&gm);
    AggregateRow {
        anchor,
        runs: reports.len(),
        auc_mean,
        auc_std,
        prauc_mean,
        prauc_std,
        gmauc_mean,
        gmauc_std,
        gmauc_runs: gm.len(),
        diverged: reports.iter().filter(|r| r.diverged).count(),
    }
}

pub fn aggregate(reports: &[RunReport]) -> Vec<AggregateRow> {
    let mut anchors: Vec<usize> = reports.iter().map(|r| r.eval.anchor_t).collect();
    anchors.sort_unstable();
    anchors.dedup();
    let mut rows: Vec<AggregateRow> = anchors
        .iter()
        .map(|&t| {
            let at: Vec<&RunReport> = reports.iter().filter(|r| r.eval.anchor_t == t).collect();
            aggregate_row(t.to_string(), &at)
        })
        .collect();
    rows.push(aggregate_row("all".into(), &reports.iter().collect::<Vec<_>>()));
    rows
}

/// Seed for one (repetition, anchor) job.
pub fn job_seed(seed: u64, repetition: usize, anchor: usize) -> u64 {
    let mut z = seed
        .wrapping_add((repetition as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((anchor as u64).wrapping_mul(0xd1b5_4a32_d192_ed03));
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Job<'a> {
    seq: &'a SnapshotSequence,
    model: &'a ModelConfig,
    run: &'a TrainRun,
    precision: u32,
    checkpoints: &'a Path,
}

impl Job<'_> {
    fn run<S: Scalar>(&self, rep: usize, anchor: usize, prev: Option<TsamModel<S>>) -> Result<(RunReport, Option<TsamModel<S>>)> {
        let seed = job_seed(self.run.seed, rep, anchor);
        let run = TrainRun { seed, ..self.run.clone() };
        let fitted = match prev {
            Some(m) => fit_from(m, self.seq, anchor, &run),
            None => fit_timestep(self.seq, anchor, self.model, &run),
        };
        let fit = match fitted {
            Ok(fit) => fit,
            Err(e @ TsamError::Divergence { .. }) => {
                let report = RunReport {
                    repetition: rep,
                    precision: self.precision,
                    epochs_run: 0,
                    final_loss: None,
                    diverged: true,
                    eval: EvalReport {
                        anchor_t: anchor,
                        auc: None,
                        prauc: None,
                        gmauc: None,
                        sample_counts: Default::default(),
                        seed,
                        notes: vec![e.to_string()],
                    },
                    history: Vec::new(),
                };
                return Ok((report, None));
            }
            Err(e) => return Err(e),
        };
        let sample = self.seq.window_ending_at(anchor, self.model.window);
        let scores = fit.model.forward(&sample)?;
        let eval = evaluate(&scores, sample.last_input(), &sample.target, anchor, seed)?;
        if rep == 0 {
            checkpoint::save(&fit.model, &self.checkpoints.join(format!("t{anchor:04}.ckpt")))?;
        }
        let report = RunReport {
            repetition: rep,
            precision: self.precision,
            epochs_run: fit.history.len(),
            final_loss: fit.history.last().copied(),
            diverged: false,
            eval,
            history: fit.history,
        };
        Ok((report, Some(fit.model)))
    }

    fn run_all<S: Scalar>(&self, reps: usize, anchors: &[usize], warm_start: bool, parallel: bool) -> Result<Vec<RunReport>> {
        let nested: Vec<Vec<RunReport>> = if warm_start {
            let chain = |rep: usize| -> Result<Vec<RunReport>> {
                let mut prev: Option<TsamModel<S>> = None;
                let mut out = Vec::with_capacity(anchors.len());
                for &t in anchors {
                    let (report, model) = self.run(rep, t, prev.take())?;
                    prev = model;
                    out.push(report);
                }
                Ok(out)
            };
            if parallel {
                (0..reps).into_par_iter().map(chain).collect::<Result<_>>()?
            } else {
                (0..reps).map(chain).collect::<Result<_>>()?
            }
        } else {
            let jobs: Vec<(usize, usize)> = (0..reps).flat_map(|r| anchors.iter().map(move |&t| (r, t))).collect();
            let one = |&(r, t): &(usize, usize)| self.run::<S>(r, t, None).map(|(report, _)| vec![report]);
            if parallel {
                jobs.par_iter().map(one).collect::<Result<_>>()?
            } else {
                jobs.iter().map(one).collect::<Result<_>>()?
            }
        };
        Ok(nested.into_iter().flatten().collect())
    }
}

pub fn cmd_train_eval(cfg: &RunConfig) -> Result<TrainEvalSummary> {
    let cache_path = cfg.cache_path()?;
    if !cache_path.exists() {
        return Err(TsamError::io(
            &cache_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "snapshot cache missing; run `ingest` first"),
        ));
    }
    let cache_bytes = fs::read(&cache_path).map_err(|e| TsamError::io(&cache_path, e))?;
    let cache: SnapshotCache =
        serde_json::from_slice(&cache_bytes).map_err(|e| TsamError::Format(format!("{}: {e}", cache_path.display())))?;
    let seq = cache.sequence()?;
    let model = cfg.model_config(seq.n())?;
    let run = cfg.train_run(&model);
    let (start, end) = cfg.anchors(model.window, seq.len())?;
    let anchors: Vec<usize> = (start..=end).collect();
    let reps = cfg.repetitions.unwrap_or(DEFAULT_REPETITIONS);
    if reps == 0 {
        return Err(TsamError::Parameter("repetitions must be at least 1".into()));
    }
    let precision = cfg.precision();

    let out = cfg.out_dir()?;
    let (reports_dir, history_dir, ckpt_dir) = (out.join("reports"), out.join("history"), out.join("checkpoints"));
    for d in [&reports_dir, &history_dir, &ckpt_dir] {
        create_dir(d)?;
    }
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            command: "train-eval".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: cfg.hash(),
            cache_sha256: hex::encode(Sha256::digest(&cache_bytes)),
            seed: cfg.seed,
            precision,
            deterministic: cfg.deterministic,
            config: cfg.clone(),
            model: model.clone(),
            train: run.clone(),
        },
    )?;

    let job = Job {
        seq: &seq,
        model: &model,
        run: &run,
        precision,
        checkpoints: &ckpt_dir,
    };
    let parallel = !cfg.deterministic;
    let mut reports = match precision {
        32 => job.run_all::<f32>(reps, &anchors, cfg.warm_start, parallel)?,
        64 => job.run_all::<f64>(reps, &anchors, cfg.warm_start, parallel)?,
        p => return Err(TsamError::Parameter(format!("precision must be 32 or 64, got {p}"))),
    };
    reports.sort_by_key(|r| (r.repetition, r.eval.anchor_t));

    for r in &reports {
        let stem = format!("rep{:02}_t{:04}", r.repetition, r.eval.anchor_t);
        write_json(&reports_dir.join(format!("{stem}.json")), r)?;
        let path = history_dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(["epoch", "loss"]).map_err(|e| csv_error(&path, e))?;
        for (i, loss) in r.history.iter().enumerate() {
            w.write_record([(i + 1).to_string(), loss.to_string()])
                .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| TsamError::io(&path, e))?;
    }
    let rows = aggregate(&reports);
    write_csv(&out.join("aggregate.csv"), &rows)?;
    Ok(TrainEvalSummary {
        reports,
        aggregate: rows,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> TsamError {
    TsamError::Format(format!("{}: {e}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| TsamError::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub gmauc_mean: Option<f64>,
    pub gmauc_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
enum AxisValue {
    Transforms(Vec<TransformKind>),
    Heads(usize),
}

fn parse_axis_value(axis: Axis, raw: &str) -> Result<AxisValue> {
    match axis {
        Axis::Transforms => {
            let s = raw.trim();
            if s.is_empty() || s.eq_ignore_ascii_case("none") || s == "∅" {
                return Ok(AxisValue::Transforms(Vec::new()));
            }
            let kinds = s
                .trim_matches(|c| c == '{' || c == '}')
                .split(',')
                .map(str::parse)
                .collect::<Result<Vec<TransformKind>>>()?;
            Ok(AxisValue::Transforms(kinds))
        }
        Axis::NodeHeads | Axis::TimeHeads => {
            let k: usize = raw
                .trim()
                .parse()
                .map_err(|_| TsamError::Parameter(format!("head count `{raw}` is not an integer")))?;
            if !HEAD_CHOICES.contains(&k) {
                return Err(TsamError::Parameter(format!("head count {k} not in {HEAD_CHOICES:?}")));
            }
            Ok(AxisValue::Heads(k))
        }
    }
}

fn axis_label(axis: Axis, value: &AxisValue) -> String {
    match value {
        AxisValue::Transforms(k) if k.is_empty() => "No feature".into(),
        AxisValue::Transforms(k) => {
            let names: Vec<String> = k.iter().map(ToString::to_string).collect();
            format!("{{{}}}", names.join(","))
        }
        AxisValue::Heads(h) => format!("{}={h}", axis.name()),
    }
}

/// Runs train-eval once per value into `<out>/ablate/<axis>/<index>/` and
/// writes `<out>/ablation_<axis>.csv`.
pub fn cmd_ablate(cfg: &RunConfig, axis: Axis, values: &[String]) -> Result<Vec<AblationRow>> {
    let parsed = values
        .iter()
        .map(|v| parse_axis_value(axis, v))
        .collect::<Result<Vec<_>>>()?;
    let out = cfg.out_dir()?.to_path_buf();
    let cache = cfg.cache_path()?;
    let mut rows = Vec::with_capacity(parsed.len());
    for (i, value) in parsed.iter().enumerate() {
        let mut variant = cfg.clone();
        variant.cache = Some(cache.clone());
        variant.out = Some(out.join("ablate").join(axis.name()).join(format!("{i:02}")));
        match value {
            AxisValue::Transforms(k) => variant.transforms = Some(k.clone()),
            AxisValue::Heads(h) if axis == Axis::NodeHeads => variant.k_node = Some(*h),
            AxisValue::Heads(h) => variant.k_time = Some(*h),
        }
        let summary = cmd_train_eval(&variant)?;
        let all = summary.overall();
        rows.push(AblationRow {
            label: axis_label(axis, value),
            auc_mean: all.auc_mean,
            auc_std: all.auc_std,
            gmauc_mean: all.gmauc_mean,
            gmauc_std: all.gmauc_std,
        });
    }
    write_csv(&out.join(format!("ablation_{}.csv", axis.name())), &rows)?;
    Ok(rows)
}

pub fn exit_code(e: &TsamError) -> u8 {
    match e {
        TsamError::Parameter(_) | TsamError::Protocol(_) => EXIT_USAGE,
        TsamError::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_DATA,
    }
}

/// Applies flag overrides on top of the config file.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| TsamError::Parameter("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if cli.deterministic {
        cfg.deterministic = true;
    }
    if let Some(p) = &cli.precision {
        cfg.precision = Some(p.parse().expect("validated by clap"));
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Ingest => {
            let stats = cmd_ingest(&cfg)?;
            println!("{}", serde_json::to_string(&stats).expect("stats serialize"));
        }
        Command::Stats => {
            let stats = cmd_stats(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
        }
        Command::TrainEval => {
            let summary = cmd_train_eval(&cfg)?;
            let all = summary.overall();
            println!(
                "runs={} auc_mean={} gmauc_mean={}",
                all.runs,
                fmt_opt(all.auc_mean),
                fmt_opt(all.gmauc_mean)
            );
            if summary.diverged() > 0 {
                eprintln!("warning: {} run(s) diverged", summary.diverged());
                return Ok(EXIT_DIVERGENCE);
            }
        }
        Command::Ablate { axis, values } => {
            for row in cmd_ablate(&cfg, *axis, values)? {
                println!("{}: auc_mean={} gmauc_mean={}", row.label, fmt_opt(row.auc_mean), fmt_opt(row.gmauc_mean));
            }
        }
    }
    Ok(0)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.deterministic {
        // A one-thread pool keeps every reduction in a fixed order.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
