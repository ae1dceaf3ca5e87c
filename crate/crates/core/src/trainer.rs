//! Full-batch transductive training with early stopping on validation
//! accuracy, the two GCN baselines, and a finite-difference gradient check.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{MultiViewDataset, Role, Split};
use crate::fusion::{self, FusedGraph};
use crate::gcn::{self, GcnDims, GcnGrads, GcnParams};
use crate::objective::{self, LossBreakdown, LossConfig, LossContext, PseudoPool};
use crate::optim::{Optimizer, OptimizerKind};
use crate::renode::{NodeWeightTable, ReNodeConfig};
use crate::view_graph::{self, SolverConfig, ViewGraphResult};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub hidden_dim: usize,
    pub weight_decay: f64,
    pub add_self_loops: bool,
    pub loss: LossConfig,
    pub renode: ReNodeConfig,
    pub solver: SolverConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            max_epochs: 2000,
            patience: 100,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            hidden_dim: 28,
            weight_decay: 0.0,
            add_self_loops: true,
            loss: LossConfig::default(),
            renode: ReNodeConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "train.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("train.max_epochs must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "train.patience ({}) exceeds train.max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("train.hidden_dim must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("train.weight_decay must be >= 0".into()));
        }
        if self.loss.max_epochs < self.max_epochs {
            return Err(Error::Config(format!(
                "loss.max_epochs ({}) is smaller than train.max_epochs ({}); the pseudo-label schedule would run past its end",
                self.loss.max_epochs, self.max_epochs
            )));
        }
        self.loss.validate()?;
        self.renode.validate()?;
        self.solver.validate()
    }

    /// Same configuration with a plain averaged cross-entropy loss.
    pub fn plain_ce(&self) -> Self {
        TrainConfig {
            loss: self.loss.plain_ce(),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// GCN index within an ensemble; 0 for single-network methods.
    pub member: usize,
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub graph_solve: f64,
    pub fusion: f64,
    pub pagerank: f64,
    pub training: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// One entry per trained network (several for the per-view ensemble).
    pub best_params: Vec<GcnParams>,
    pub best_epoch: usize,
    pub epochs_ran: usize,
    pub best_val_accuracy: f64,
    /// Test accuracy of the best-validation checkpoint.
    pub test_accuracy: f64,
    pub epoch_records: Vec<EpochRecord>,
    /// Prediction `Z` of the best checkpoint.
    pub predictions: DMatrix<f64>,
    pub timings: StageTimings,
}

/// Node sets derived from a split.
#[derive(Debug, Clone)]
pub struct NodeSets {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl NodeSets {
    pub fn from_split(split: &Split) -> Self {
        NodeSets {
            train: split.indices(Role::Train),
            val: split.indices(Role::Val),
            test: split.indices(Role::Test),
        }
    }

    pub fn pseudo_pool(&self, pool: PseudoPool) -> Vec<usize> {
        match pool {
            PseudoPool::TestOnly => self.test.clone(),
            PseudoPool::NonTrain => {
                let mut nodes: Vec<usize> = self.val.iter().chain(&self.test).copied().collect();
                nodes.sort_unstable();
                nodes
            }
        }
    }

    /// Early stopping watches validation nodes, or training nodes when there
    /// are none.
    fn monitor(&self) -> &[usize] {
        if self.val.is_empty() {
            &self.train
        } else {
            &self.val
        }
    }
}

/// Inputs of one GCN fit.
pub struct GcnProblem<'a> {
    pub features: &'a DMatrix<f64>,
    pub operator: &'a DMatrix<f64>,
    pub laplacian: &'a DMatrix<f64>,
    pub labels: &'a [usize],
    pub y: &'a DMatrix<f64>,
    pub nodes: &'a NodeSets,
    /// ReNode weight per training node (same order as `nodes.train`).
    pub train_weights: &'a [f64],
}

pub struct GcnFit {
    pub params: GcnParams,
    pub best_epoch: usize,
    pub epochs_ran: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    pub predictions: DMatrix<f64>,
    pub records: Vec<EpochRecord>,
}

/// Loss and parameter gradients for one forward/backward pass.
pub fn loss_and_grads(
    params: &GcnParams,
    operator: &DMatrix<f64>,
    features: &DMatrix<f64>,
    ctx: &LossContext<'_>,
    y_prev: &DMatrix<f64>,
    epoch: usize,
    loss: &LossConfig,
) -> Result<(LossBreakdown, GcnGrads, DMatrix<f64>)> {
    let trace = gcn::forward(params, operator, features)?;
    let (breakdown, dz) = objective::total_loss_with_grad(&trace.z, ctx, y_prev, epoch, loss)?;
    let grads = gcn::backward(params, operator, &trace, &dz);
    Ok((breakdown, grads, trace.z))
}

/// Trains one GCN from a fresh initialization.
pub fn fit_gcn(problem: &GcnProblem<'_>, config: &TrainConfig, member: usize) -> Result<GcnFit> {
    config.validate()?;
    let n = problem.features.nrows();
    let c = problem.y.ncols();
    let dims = GcnDims {
        input: problem.features.ncols(),
        hidden: config.hidden_dim,
        output: c,
    };
    let mut params = gcn::init_params(config.seed, dims);
    let mut optimizer = Optimizer::new(
        config.optimizer,
        config.learning_rate,
        config.weight_decay,
        &params,
    );
    let pseudo_nodes = problem.nodes.pseudo_pool(config.loss.pseudo_pool);
    let ctx = LossContext {
        y: problem.y,
        train_nodes: &problem.nodes.train,
        train_weights: problem.train_weights,
        pseudo_nodes: &pseudo_nodes,
        laplacian: problem.laplacian,
    };
    let monitor = problem.nodes.monitor();

    // w_p is 0 at epoch 1, so the initial targets never contribute.
    let mut y_prev = DMatrix::from_element(n, c, 1.0 / c as f64);
    let mut records = Vec::new();
    let mut best: Option<(usize, f64, f64, GcnParams, DMatrix<f64>)> = None;

    for epoch in 1..=config.max_epochs {
        let step = loss_and_grads(
            &params,
            problem.operator,
            problem.features,
            &ctx,
            &y_prev,
            epoch,
            &config.loss,
        );
        let (breakdown, grads, z) = match step {
            Ok(v) => v,
            Err(e) if e.is_numeric() => {
                return Err(Error::Diverged {
                    epoch,
                    message: e.to_string(),
                    last_good: best.map(|b| Box::new(b.3)),
                })
            }
            Err(e) => return Err(e),
        };
        let record = EpochRecord {
            member,
            epoch,
            loss: breakdown,
            train_accuracy: gcn::accuracy(&z, problem.labels, &problem.nodes.train),
            val_accuracy: gcn::accuracy(&z, problem.labels, &problem.nodes.val),
            test_accuracy: gcn::accuracy(&z, problem.labels, &problem.nodes.test),
        };
        records.push(record);
        let monitored = gcn::accuracy(&z, problem.labels, monitor);
        if best.as_ref().is_none_or(|b| monitored > b.1) {
            best = Some((epoch, monitored, record.test_accuracy, params.clone(), z.clone()));
        }

        optimizer.step(&mut params, &grads);
        y_prev = z;

        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }

    let epochs_ran = records.len();
    let (best_epoch, _, test_accuracy, params, predictions) = best.expect("at least one epoch ran");
    let best_val_accuracy = gcn::accuracy(&predictions, problem.labels, &problem.nodes.val);
    Ok(GcnFit {
        params,
        best_epoch,
        epochs_ran,
        best_val_accuracy,
        test_accuracy,
        predictions,
        records,
    })
}

fn single_graph(s: &DMatrix<f64>) -> Result<FusedGraph> {
    fusion::fuse(&[s], &[1.0])
}

/// Trains the full model on the concatenated projected features.
pub fn train_rsgslm(
    dataset: &MultiViewDataset,
    fused: &FusedGraph,
    view_graphs: &[ViewGraphResult],
    weights: &NodeWeightTable,
    config: &TrainConfig,
) -> Result<RunResult> {
    let start = Instant::now();
    let split = dataset.split()?;
    let nodes = NodeSets::from_split(split);
    if weights.nodes != nodes.train {
        return Err(Error::Data(
            "node weight table does not match the training nodes of the split".into(),
        ));
    }
    let features = gcn::concat_features(view_graphs)?;
    let operator = gcn::propagation_operator(fused, config.add_self_loops);
    let y = dataset.one_hot();
    let problem = GcnProblem {
        features: &features,
        operator: &operator,
        laplacian: &fused.ops.l_norm,
        labels: &dataset.labels,
        y: &y,
        nodes: &nodes,
        train_weights: &weights.weight,
    };
    let fit = fit_gcn(&problem, config, 0)?;
    Ok(run_result(vec![fit], start.elapsed().as_secs_f64()))
}

fn run_result(mut fits: Vec<GcnFit>, training: f64) -> RunResult {
    let first = fits.remove(0);
    let mut records = first.records;
    let mut params = vec![first.params];
    for f in fits {
        records.extend(f.records);
        params.push(f.params);
    }
    RunResult {
        best_params: params,
        best_epoch: first.best_epoch,
        epochs_ran: first.epochs_ran,
        best_val_accuracy: first.best_val_accuracy,
        test_accuracy: first.test_accuracy,
        epoch_records: records,
        predictions: first.predictions,
        timings: StageTimings {
            training,
            ..StageTimings::default()
        },
    }
}

/// Baseline: one graph learned on the concatenated (column-normalized) views,
/// then a plain-CE GCN on those raw features.
pub fn train_baseline_xstar(dataset: &MultiViewDataset, config: &TrainConfig) -> Result<RunResult> {
    let split = dataset.split()?;
    let nodes = NodeSets::from_split(split);
    let y = dataset.one_hot();
    let x_star = dataset.concat_views();

    let t0 = Instant::now();
    let labeled = split.mask(Role::Train);
    let graph = view_graph::solve_view_graph(&x_star, &y, &labeled, &config.solver)?;
    let graph_solve = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let fused = single_graph(&graph.s)?;
    let fusion_time = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let operator = gcn::propagation_operator(&fused, config.add_self_loops);
    let ones = vec![1.0; nodes.train.len()];
    let problem = GcnProblem {
        features: &x_star,
        operator: &operator,
        laplacian: &fused.ops.l_norm,
        labels: &dataset.labels,
        y: &y,
        nodes: &nodes,
        train_weights: &ones,
    };
    let fit = fit_gcn(&problem, &config.plain_ce(), 0)?;
    let mut result = run_result(vec![fit], t2.elapsed().as_secs_f64());
    result.timings.graph_solve = graph_solve;
    result.timings.fusion = fusion_time;
    Ok(result)
}

/// Baseline: one plain-CE GCN per view on `(Xᵥ, Sᵥ)`; predictions averaged.
pub fn train_baseline_multi(
    dataset: &MultiViewDataset,
    view_graphs: &[ViewGraphResult],
    config: &TrainConfig,
) -> Result<RunResult> {
    if view_graphs.len() != dataset.num_views() {
        return Err(Error::Dimension(format!(
            "{} view graphs for {} views",
            view_graphs.len(),
            dataset.num_views()
        )));
    }
    let start = Instant::now();
    let split = dataset.split()?;
    let nodes = NodeSets::from_split(split);
    let y = dataset.one_hot();
    let ones = vec![1.0; nodes.train.len()];
    let plain = config.plain_ce();

    let mut fits = Vec::with_capacity(view_graphs.len());
    for (v, (x, graph)) in dataset.views.iter().zip(view_graphs).enumerate() {
        let fused = single_graph(&graph.s)?;
        let operator = gcn::propagation_operator(&fused, config.add_self_loops);
        let problem = GcnProblem {
            features: x,
            operator: &operator,
            laplacian: &fused.ops.l_norm,
            labels: &dataset.labels,
            y: &y,
            nodes: &nodes,
            train_weights: &ones,
        };
        fits.push(fit_gcn(&problem, &plain, v)?);
    }

    let mut z = DMatrix::zeros(dataset.n(), dataset.num_classes);
    for f in &fits {
        z += &f.predictions;
    }
    z /= fits.len() as f64;
    let mut result = run_result(fits, start.elapsed().as_secs_f64());
    result.best_val_accuracy = gcn::accuracy(&z, &dataset.labels, &nodes.val);
    result.test_accuracy = gcn::accuracy(&z, &dataset.labels, &nodes.test);
    result.predictions = z;
    Ok(result)
}

/// Size and seed of the random gradient-check instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSpec {
    pub n: usize,
    pub views: usize,
    pub classes: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Central-difference step.
    pub step: f64,
    /// Lower bound on the relative-error denominator.
    pub rel_floor: f64,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        GradCheckSpec {
            n: 20,
            views: 2,
            classes: 3,
            hidden: 8,
            seed: 0,
            step: 1e-5,
            rel_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub entries: usize,
    pub loss: f64,
    /// Absolute error per weight entry, `W0` row-major then `W1`.
    pub abs_errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// A random instance for gradient checking: features, graph operators,
/// labels, weights and pseudo targets.
pub struct GradCheckInstance {
    pub features: DMatrix<f64>,
    pub operator: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub train: Vec<usize>,
    pub weights: Vec<f64>,
    pub pseudo: Vec<usize>,
    pub y_prev: DMatrix<f64>,
    pub params: GcnParams,
}

impl GradCheckInstance {
    pub fn random(spec: &GradCheckSpec) -> Result<Self> {
        let GradCheckSpec {
            n, views, classes, hidden, seed, ..
        } = *spec;
        if n < 2 * classes || classes < 2 || views == 0 || hidden == 0 {
            return Err(Error::Config(format!(
                "gradient check needs n >= 2c, c >= 2, V >= 1 (got n={n}, c={classes}, V={views})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = classes * views;
        let features = DMatrix::from_fn(n, width, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let mut s = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random::<f64>().powi(3) });
        for mut row in s.row_iter_mut() {
            let sum = row.sum();
            row /= sum;
        }
        let fused = single_graph(&s)?;
        let operator = gcn::propagation_operator(&fused, true);
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let y = crate::dataset::one_hot(&labels, classes);
        let train: Vec<usize> = (0..2 * classes).collect();
        let weights: Vec<f64> = train.iter().map(|_| rng.random_range(0.5..1.5)).collect();
        let pseudo: Vec<usize> = (2 * classes..n).collect();
        let mut y_prev = DMatrix::from_fn(n, classes, |_, _| rng.random::<f64>() + 0.05);
        for mut row in y_prev.row_iter_mut() {
            let sum = row.sum();
            row /= sum;
        }
        let params = gcn::init_params(
            seed.wrapping_add(1),
            GcnDims {
                input: width,
                hidden,
                output: classes,
            },
        );
        Ok(GradCheckInstance {
            features,
            operator,
            laplacian: fused.ops.l_norm,
            y,
            train,
            weights,
            pseudo,
            y_prev,
            params,
        })
    }

    fn ctx(&self) -> LossContext<'_> {
        LossContext {
            y: &self.y,
            train_nodes: &self.train,
            train_weights: &self.weights,
            pseudo_nodes: &self.pseudo,
            laplacian: &self.laplacian,
        }
    }

    pub fn loss(&self, params: &GcnParams, epoch: usize, loss: &LossConfig) -> Result<f64> {
        let z = gcn::forward(params, &self.operator, &self.features)?.z;
        Ok(objective::total_loss(&z, &self.ctx(), &self.y_prev, epoch, loss)?.total)
    }

    pub fn grads(&self, params: &GcnParams, epoch: usize, loss: &LossConfig) -> Result<(f64, GcnGrads)> {
        let (b, g, _) = loss_and_grads(params, &self.operator, &self.features, &self.ctx(), &self.y_prev, epoch, loss)?;
        Ok((b.total, g))
    }
}

/// Compares analytic gradients of the total loss with central differences
/// for every weight entry. The epoch is chosen mid-schedule so `w_p > 0`.
pub fn gradient_check(loss: &LossConfig, spec: &GradCheckSpec) -> Result<GradCheckReport> {
    let inst = GradCheckInstance::random(spec)?;
    let epoch = loss.max_epochs / 2 + 1;
    let (value, analytic) = inst.grads(&inst.params, epoch, loss)?;
    let h = spec.step;
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut abs_errors = Vec::new();
    for layer in 0..2 {
        let (rows, cols) = if layer == 0 {
            inst.params.w0.shape()
        } else {
            inst.params.w1.shape()
        };
        for i in 0..rows {
            for j in 0..cols {
                let perturbed = |delta: f64| -> Result<f64> {
                    let mut p = inst.params.clone();
                    let w = if layer == 0 { &mut p.w0 } else { &mut p.w1 };
                    w[(i, j)] += delta;
                    inst.loss(&p, epoch, loss)
                };
                let numeric = (perturbed(h)? - perturbed(-h)?) / (2.0 * h);
                let exact = if layer == 0 {
                    analytic.w0[(i, j)]
                } else {
                    analytic.w1[(i, j)]
                };
                let abs = (numeric - exact).abs();
                let rel = abs / numeric.abs().max(exact.abs()).max(spec.rel_floor);
                max_abs = max_abs.max(abs);
                max_rel = max_rel.max(rel);
                abs_errors.push(abs);
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        entries: abs_errors.len(),
        loss: value,
        abs_errors,
    })
}

/// The eight on/off combinations of (smooth, pseudo, renode) in table order,
/// starting from everything off and ending with everything on.
pub fn ablation_flags() -> [(bool, bool, bool); 8] {
    [
        (false, false, false),
        (false, false, true),
        (false, true, false),
        (true, false, false),
        (false, true, true),
        (true, false, true),
        (true, true, false),
        (true, true, true),
    ]
}

pub fn with_flags(loss: &LossConfig, smooth: bool, pseudo: bool, renode: bool) -> LossConfig {
    LossConfig {
        use_smooth: smooth,
        use_pseudo: pseudo,
        use_renode_weights: renode,
        ..*loss
    }
}
