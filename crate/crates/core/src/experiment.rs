//! Pipeline assembly, repeated splits, ablations and parameter sweeps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{MultiViewDataset, Role, SplitSpec};
use crate::fusion::{self, FusedGraph};
use crate::renode::{self, NodeWeightTable};
use crate::trainer::{self, RunResult, StageTimings, TrainConfig};
use crate::view_graph::{self, ViewGraphResult};
use crate::{Error, Result};

/// Everything the full model needs before training.
#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub view_graphs: Vec<ViewGraphResult>,
    pub fused: FusedGraph,
    /// Raw smoothness trace per view.
    pub traces: Vec<f64>,
    pub weights: NodeWeightTable,
    pub timings: StageTimings,
}

fn tag_view(v: usize, e: Error) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("view {v}: {m}")),
        Error::Data(m) => Error::Data(format!("view {v}: {m}")),
        Error::Dimension(m) => Error::Dimension(format!("view {v}: {m}")),
        other => other,
    }
}

/// Solves every view graph, fuses them and computes the node weights. The
/// dataset must carry a split and should already be column-normalized.
pub fn build_artifacts(dataset: &MultiViewDataset, config: &TrainConfig) -> Result<PipelineArtifacts> {
    config.solver.validate()?;
    config.renode.validate()?;
    let split = dataset.split()?;
    let labeled = split.mask(Role::Train);
    let train = split.indices(Role::Train);
    let y = dataset.one_hot();

    let t0 = Instant::now();
    let view_graphs = dataset
        .views
        .par_iter()
        .enumerate()
        .map(|(v, x)| view_graph::solve_view_graph(x, &y, &labeled, &config.solver).map_err(|e| tag_view(v, e)))
        .collect::<Result<Vec<_>>>()?;
    let graph_solve = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let xs: Vec<_> = dataset.views.iter().collect();
    let ss: Vec<_> = view_graphs.iter().map(|g| &g.s).collect();
    let (fused, traces) = fusion::fuse_views(&xs, &ss)?;
    let fusion_time = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let weights = renode::node_weights(
        &fused.ops.a_hat,
        &dataset.labels,
        &train,
        dataset.num_classes,
        &config.renode,
    )?;
    let pagerank = t2.elapsed().as_secs_f64();

    Ok(PipelineArtifacts {
        view_graphs,
        fused,
        traces,
        weights,
        timings: StageTimings {
            graph_solve,
            fusion: fusion_time,
            pagerank,
            training: 0.0,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "rsgslm")]
    Rsgslm,
    #[serde(rename = "gcn-xstar")]
    GcnXstar,
    #[serde(rename = "gcn-multi")]
    GcnMulti,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rsgslm, Method::GcnXstar, Method::GcnMulti];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rsgslm => "rsgslm",
            Method::GcnXstar => "gcn-xstar",
            Method::GcnMulti => "gcn-multi",
        }
    }

    /// Whether the method consumes per-view graphs.
    pub fn needs_view_graphs(self) -> bool {
        !matches!(self, Method::GcnXstar)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}; expected rsgslm, gcn-xstar or gcn-multi")))
    }
}

fn missing_artifacts(method: Method) -> Error {
    Error::Data(format!("method {method} needs the per-view graphs; build them first"))
}

/// Trains one method on a split dataset.
pub fn run_method(
    dataset: &MultiViewDataset,
    artifacts: Option<&PipelineArtifacts>,
    method: Method,
    config: &TrainConfig,
) -> Result<RunResult> {
    match method {
        Method::Rsgslm => {
            let a = artifacts.ok_or_else(|| missing_artifacts(method))?;
            let mut r = trainer::train_rsgslm(dataset, &a.fused, &a.view_graphs, &a.weights, config)?;
            r.timings = StageTimings {
                training: r.timings.training,
                ..a.timings
            };
            Ok(r)
        }
        Method::GcnXstar => trainer::train_baseline_xstar(dataset, config),
        Method::GcnMulti => {
            let a = artifacts.ok_or_else(|| missing_artifacts(method))?;
            let mut r = trainer::train_baseline_multi(dataset, &a.view_graphs, config)?;
            r.timings.graph_solve = a.timings.graph_solve;
            Ok(r)
        }
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let count = values.len();
        if count == 0 {
            return Summary {
                mean: f64::NAN,
                std: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Summary {
            mean,
            std: var.sqrt(),
            count,
        }
    }

    /// `mean±std` of accuracies in percent, two decimals.
    pub fn percent(&self) -> String {
        format!("{:.2}±{:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Per-method accuracies over repeated splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRuns {
    pub method: Method,
    pub split_seeds: Vec<u64>,
    pub val_accuracies: Vec<f64>,
    pub test_accuracies: Vec<f64>,
    pub epochs_ran: Vec<usize>,
    pub summary: Summary,
}

/// Seeds `spec.seed + k` for `k < runs`.
pub fn split_seeds(spec: &SplitSpec, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|k| spec.seed.wrapping_add(k)).collect()
}

/// One column-normalized, split dataset per repeat.
pub fn repeated_splits(dataset: &MultiViewDataset, spec: &SplitSpec, runs: usize) -> Result<Vec<MultiViewDataset>> {
    split_seeds(spec, runs)
        .into_iter()
        .map(|seed| dataset.make_split(&SplitSpec { seed, ..*spec }))
        .collect()
}

/// Trains every method on the same sequence of splits. `dataset` should be
/// column-normalized; its own split (if any) is ignored.
pub fn run_repeated(
    dataset: &MultiViewDataset,
    spec: &SplitSpec,
    config: &TrainConfig,
    runs: usize,
    methods: &[Method],
) -> Result<Vec<MethodRuns>> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let seeds = split_seeds(spec, runs);
    let splits = repeated_splits(dataset, spec, runs)?;
    let need_graphs = methods.iter().any(|m| m.needs_view_graphs());
    let per_split: Vec<Vec<RunResult>> = splits
        .par_iter()
        .map(|ds| {
            let artifacts = if need_graphs {
                Some(build_artifacts(ds, config)?)
            } else {
                None
            };
            methods
                .iter()
                .map(|&m| run_method(ds, artifacts.as_ref(), m, config))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let test: Vec<f64> = per_split.iter().map(|r| r[i].test_accuracy).collect();
            MethodRuns {
                method,
                split_seeds: seeds.clone(),
                val_accuracies: per_split.iter().map(|r| r[i].best_val_accuracy).collect(),
                epochs_ran: per_split.iter().map(|r| r[i].epochs_ran).collect(),
                summary: Summary::of(&test),
                test_accuracies: test,
            }
        })
        .collect())
}

/// Loss-term switches of one ablation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub smooth: bool,
    pub pseudo: bool,
    pub renode: bool,
    pub oracle: bool,
}

impl AblationFlags {
    pub fn apply(&self, config: &TrainConfig) -> TrainConfig {
        let mut loss = trainer::with_flags(&config.loss, self.smooth, self.pseudo, self.renode);
        loss.oracle_pseudo = self.oracle;
        TrainConfig { loss, ..*config }
    }

    pub fn is_full(&self) -> bool {
        self.smooth && self.pseudo && self.renode && !self.oracle
    }
}

/// The eight on/off combinations followed by the ground-truth pseudo row.
pub fn ablation_rows() -> Vec<AblationFlags> {
    let mut rows: Vec<AblationFlags> = trainer::ablation_flags()
        .into_iter()
        .map(|(smooth, pseudo, renode)| AblationFlags {
            smooth,
            pseudo,
            renode,
            oracle: false,
        })
        .collect();
    rows.push(AblationFlags {
        smooth: true,
        pseudo: true,
        renode: true,
        oracle: true,
    });
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub flags: AblationFlags,
    pub seed: u64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_ran: usize,
}

/// Runs the 8 + 1 ablation rows on one split.
pub fn run_ablation_suite(
    dataset: &MultiViewDataset,
    artifacts: &PipelineArtifacts,
    config: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    ablation_rows()
        .into_par_iter()
        .map(|flags| {
            let cfg = flags.apply(config);
            let r = run_method(dataset, Some(artifacts), Method::Rsgslm, &cfg)?;
            Ok(AblationRow {
                flags,
                seed: cfg.seed,
                val_accuracy: r.best_val_accuracy,
                test_accuracy: r.test_accuracy,
                epochs_ran: r.epochs_ran,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub flags: AblationFlags,
    pub test_accuracies: Vec<f64>,
    pub summary: Summary,
}

/// Ablation rows and both baselines over repeated splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub split_seeds: Vec<u64>,
    pub ablation: Vec<AblationSummary>,
    pub xstar: Vec<f64>,
    pub multi: Vec<f64>,
}

impl BenchmarkReport {
    pub fn full(&self) -> &AblationSummary {
        self.ablation
            .iter()
            .find(|r| r.flags.is_full())
            .expect("ablation rows include the full model")
    }

    pub fn oracle(&self) -> Option<&AblationSummary> {
        self.ablation.iter().find(|r| r.flags.oracle)
    }

    /// 1-based rank of the full model among the eight non-oracle rows by
    /// mean test accuracy; ties share the better rank.
    pub fn full_rank(&self) -> usize {
        let full = self.full().summary.mean;
        1 + self
            .ablation
            .iter()
            .filter(|r| !r.flags.oracle && r.summary.mean > full)
            .count()
    }
}

/// The full ablation table plus both baselines on each of `runs` splits.
pub fn run_benchmark(
    dataset: &MultiViewDataset,
    spec: &SplitSpec,
    config: &TrainConfig,
    runs: usize,
    with_baselines: bool,
) -> Result<BenchmarkReport> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let splits = repeated_splits(dataset, spec, runs)?;
    let per_split: Vec<(Vec<AblationRow>, f64, f64)> = splits
        .par_iter()
        .map(|ds| {
            let artifacts = build_artifacts(ds, config)?;
            let rows = run_ablation_suite(ds, &artifacts, config)?;
            let (xs, mu) = if with_baselines {
                (
                    run_method(ds, None, Method::GcnXstar, config)?.test_accuracy,
                    run_method(ds, Some(&artifacts), Method::GcnMulti, config)?.test_accuracy,
                )
            } else {
                (f64::NAN, f64::NAN)
            };
            Ok((rows, xs, mu))
        })
        .collect::<Result<Vec<_>>>()?;

    let ablation = ablation_rows()
        .into_iter()
        .enumerate()
        .map(|(i, flags)| {
            let acc: Vec<f64> = per_split.iter().map(|p| p.0[i].test_accuracy).collect();
            AblationSummary {
                flags,
                summary: Summary::of(&acc),
                test_accuracies: acc,
            }
        })
        .collect();
    let (xstar, multi) = if with_baselines {
        (
            per_split.iter().map(|p| p.1).collect(),
            per_split.iter().map(|p| p.2).collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(BenchmarkReport {
        split_seeds: split_seeds(spec, runs),
        ablation,
        xstar,
        multi,
    })
}

/// Values tried for both λ₁ and λ₂.
pub const LAMBDA_GRID: [f64; 13] = [
    1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0,
];

/// Values tried for `w_max − w_min`.
pub const W_RANGE_GRID: [f64; 15] = [
    0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0, 3.0, 4.0, 5.0, 10.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub lambda1: f64,
    pub lambda2: f64,
    pub w_range: f64,
    pub seed: u64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

fn cell(cfg: &TrainConfig, r: &RunResult) -> SweepCell {
    SweepCell {
        lambda1: cfg.loss.lambda1,
        lambda2: cfg.loss.lambda2,
        w_range: cfg.renode.w_max - cfg.renode.w_min,
        seed: cfg.seed,
        val_accuracy: r.best_val_accuracy,
        test_accuracy: r.test_accuracy,
    }
}

/// Full model over the λ₁ × λ₂ grid (λ₁ outer, λ₂ inner).
pub fn sweep_lambdas(
    dataset: &MultiViewDataset,
    artifacts: &PipelineArtifacts,
    config: &TrainConfig,
    grid: &[f64],
) -> Result<Vec<SweepCell>> {
    let pairs: Vec<(f64, f64)> = grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect();
    pairs
        .into_par_iter()
        .map(|(l1, l2)| {
            let mut cfg = *config;
            cfg.loss.lambda1 = l1;
            cfg.loss.lambda2 = l2;
            let r = run_method(dataset, Some(artifacts), Method::Rsgslm, &cfg)?;
            Ok(cell(&cfg, &r))
        })
        .collect()
}

/// Full model over `w_max = w_min + range`. Only the cosine mapping depends on
/// the range, so the conflict scores are reused.
pub fn sweep_w_range(
    dataset: &MultiViewDataset,
    artifacts: &PipelineArtifacts,
    config: &TrainConfig,
    grid: &[f64],
) -> Result<Vec<SweepCell>> {
    grid.par_iter()
        .map(|&range| {
            let mut cfg = *config;
            cfg.renode.w_max = cfg.renode.w_min + range;
            cfg.renode.validate()?;
            let (rank, weight) = renode::cosine_weights(&artifacts.weights.totoro, cfg.renode.w_min, cfg.renode.w_max);
            let weights = NodeWeightTable {
                rank,
                weight,
                ..artifacts.weights.clone()
            };
            let mut r = trainer::train_rsgslm(dataset, &artifacts.fused, &artifacts.view_graphs, &weights, &cfg)?;
            r.timings.graph_solve = artifacts.timings.graph_solve;
            Ok(cell(&cfg, &r))
        })
        .collect()
}
