//! Loss terms and the pseudo-label weight schedules.
//!
//! The training loss is
//!
//! ```text
//! L = L_ce + λ₁·L_pseudo + λ₂·L_smooth
//! L_ce     = −(1/|L|) Σ_{i∈L} wᵢ ln Z_{i,yᵢ}
//! L_pseudo = −w_p Σ_{i∈U} Σⱼ Y^p_{ij} ln Z_{ij}
//! L_smooth = Tr(Zᵀ L_norm Z)
//! ```
//!
//! where `Y^p` is the previous epoch's prediction, treated as a constant.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Clamp inside every logarithm.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Linear,
    Exponential,
    Sqrt,
    Square,
}

impl Schedule {
    pub const ALL: [Schedule; 4] = [
        Schedule::Linear,
        Schedule::Exponential,
        Schedule::Sqrt,
        Schedule::Square,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Schedule::Linear => "linear",
            Schedule::Exponential => "exponential",
            Schedule::Sqrt => "sqrt",
            Schedule::Square => "square",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Schedule::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown schedule {s:?}")))
    }
}

/// Nodes that receive pseudo-label supervision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoPool {
    /// Validation and test nodes.
    NonTrain,
    TestOnly,
}

impl PseudoPool {
    pub fn as_str(self) -> &'static str {
        match self {
            PseudoPool::NonTrain => "non_train",
            PseudoPool::TestOnly => "test_only",
        }
    }
}

impl FromStr for PseudoPool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non_train" => Ok(PseudoPool::NonTrain),
            "test_only" => Ok(PseudoPool::TestOnly),
            other => Err(Error::Config(format!("unknown pseudo pool {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub schedule: Schedule,
    /// `Max` in the schedule formulas.
    pub max_epochs: usize,
    pub use_renode_weights: bool,
    pub use_pseudo: bool,
    pub use_smooth: bool,
    /// Replace the pseudo targets with ground truth (upper-bound experiment).
    pub oracle_pseudo: bool,
    pub pseudo_pool: PseudoPool,
    /// Divide the pseudo term by the number of pseudo-labeled nodes.
    pub normalize_pseudo: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            schedule: Schedule::Linear,
            max_epochs: 2000,
            use_renode_weights: true,
            use_pseudo: true,
            use_smooth: true,
            oracle_pseudo: false,
            pseudo_pool: PseudoPool::NonTrain,
            normalize_pseudo: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::Config(format!("loss.lambda1 must be >= 0, got {}", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::Config(format!("loss.lambda2 must be >= 0, got {}", self.lambda2)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("loss.max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Plain averaged cross-entropy: every extra term and the re-weighting off.
    pub fn plain_ce(self) -> Self {
        LossConfig {
            use_renode_weights: false,
            use_pseudo: false,
            use_smooth: false,
            oracle_pseudo: false,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce_renode: f64,
    pub pseudo: f64,
    pub smooth: f64,
    pub total: f64,
    pub w_p: f64,
}

/// `−Σ_{i∈nodes} Σⱼ Yᵢⱼ ln(Zᵢⱼ + ε)`.
pub fn cross_entropy(z: &DMatrix<f64>, y: &DMatrix<f64>, nodes: &[usize]) -> f64 {
    nodes
        .iter()
        .map(|&i| {
            (0..z.ncols())
                .filter(|&j| y[(i, j)] != 0.0)
                .map(|j| -y[(i, j)] * (z[(i, j)] + LOG_EPS).ln())
                .sum::<f64>()
        })
        .sum()
}

/// `−(1/|L|) Σ_{i∈L} wᵢ Σⱼ Yᵢⱼ ln(Zᵢⱼ + ε)`; `weights[k]` belongs to `nodes[k]`.
pub fn reweighted_ce(z: &DMatrix<f64>, y: &DMatrix<f64>, nodes: &[usize], weights: &[f64]) -> Result<f64> {
    if weights.len() != nodes.len() {
        return Err(Error::Dimension(format!(
            "{} labeled nodes but {} weights",
            nodes.len(),
            weights.len()
        )));
    }
    if nodes.is_empty() {
        return Err(Error::Data("no labeled nodes".into()));
    }
    let sum: f64 = nodes
        .iter()
        .zip(weights)
        .map(|(&i, &w)| w * cross_entropy(z, y, &[i]))
        .sum();
    Ok(sum / nodes.len() as f64)
}

/// Pseudo-label weight at a 1-based epoch.
pub fn schedule_wp(epoch: usize, max_epochs: usize, kind: Schedule) -> Result<f64> {
    if epoch == 0 || epoch > max_epochs {
        return Err(Error::Config(format!(
            "epoch {epoch} outside 1..={max_epochs}"
        )));
    }
    let t = (epoch - 1) as f64 / max_epochs as f64;
    Ok(match kind {
        Schedule::Linear => t,
        Schedule::Exponential => t.exp() - 1.0,
        Schedule::Sqrt => t.sqrt(),
        Schedule::Square => t * t,
    })
}

/// `−w_p Σ_{i∈nodes} Σⱼ Y^p_{ij} ln(Zᵢⱼ + ε)`; rows of `y_prev` must be
/// probability vectors.
pub fn pseudo_label_ce(z: &DMatrix<f64>, y_prev: &DMatrix<f64>, nodes: &[usize], w_p: f64) -> Result<f64> {
    check_probability_rows(y_prev, nodes)?;
    if w_p == 0.0 {
        return Ok(0.0);
    }
    Ok(w_p * cross_entropy(z, y_prev, nodes))
}

fn check_probability_rows(y: &DMatrix<f64>, nodes: &[usize]) -> Result<()> {
    for &i in nodes {
        let row = y.row(i);
        let sum = row.sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&v| v < -1e-6 || !v.is_finite()) {
            return Err(Error::Data(format!(
                "pseudo target row {i} is not a probability vector (sum {sum})"
            )));
        }
    }
    Ok(())
}

/// `Tr(Zᵀ L Z)`.
pub fn smoothness(z: &DMatrix<f64>, laplacian: &DMatrix<f64>) -> f64 {
    crate::linalg::trace_quadratic(z, laplacian)
}

/// Everything the loss needs besides the prediction and the epoch.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    /// `n × c` one-hot ground truth.
    pub y: &'a DMatrix<f64>,
    /// Labeled (train) nodes, ascending.
    pub train_nodes: &'a [usize],
    /// ReNode weight per entry of `train_nodes`.
    pub train_weights: &'a [f64],
    /// Nodes receiving pseudo-label supervision.
    pub pseudo_nodes: &'a [usize],
    /// Normalized Laplacian of the fused graph.
    pub laplacian: &'a DMatrix<f64>,
}

/// Value of the total loss.
pub fn total_loss(
    z: &DMatrix<f64>,
    ctx: &LossContext<'_>,
    y_prev: &DMatrix<f64>,
    epoch: usize,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    evaluate(z, ctx, y_prev, epoch, config, false).map(|(b, _)| b)
}

/// Total loss and `∂L/∂Z`. `y_prev` is a constant: no gradient flows into it.
pub fn total_loss_with_grad(
    z: &DMatrix<f64>,
    ctx: &LossContext<'_>,
    y_prev: &DMatrix<f64>,
    epoch: usize,
    config: &LossConfig,
) -> Result<(LossBreakdown, DMatrix<f64>)> {
    evaluate(z, ctx, y_prev, epoch, config, true).map(|(b, g)| (b, g.expect("gradient requested")))
}

fn evaluate(
    z: &DMatrix<f64>,
    ctx: &LossContext<'_>,
    y_prev: &DMatrix<f64>,
    epoch: usize,
    config: &LossConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<DMatrix<f64>>)> {
    let (n, c) = z.shape();
    if ctx.y.shape() != (n, c) || y_prev.shape() != (n, c) {
        return Err(Error::Dimension(format!(
            "prediction is {n}×{c}, targets are {}×{} and {}×{}",
            ctx.y.nrows(),
            ctx.y.ncols(),
            y_prev.nrows(),
            y_prev.ncols()
        )));
    }
    let w_p = schedule_wp(epoch, config.max_epochs, config.schedule)?;
    let mut grad = want_grad.then(|| DMatrix::zeros(n, c));

    // Re-weighted cross-entropy on labeled nodes.
    if ctx.train_weights.len() != ctx.train_nodes.len() {
        return Err(Error::Dimension(format!(
            "{} labeled nodes but {} weights",
            ctx.train_nodes.len(),
            ctx.train_weights.len()
        )));
    }
    let ones;
    let weights = if config.use_renode_weights {
        ctx.train_weights
    } else {
        ones = vec![1.0; ctx.train_nodes.len()];
        &ones
    };
    let ce_renode = reweighted_ce(z, ctx.y, ctx.train_nodes, weights)?;
    if let Some(g) = grad.as_mut() {
        let scale = 1.0 / ctx.train_nodes.len() as f64;
        for (&i, &w) in ctx.train_nodes.iter().zip(weights) {
            for j in 0..c {
                let t = ctx.y[(i, j)];
                if t != 0.0 {
                    g[(i, j)] -= scale * w * t / (z[(i, j)] + LOG_EPS);
                }
            }
        }
    }

    // Pseudo-label cross-entropy.
    let mut pseudo = 0.0;
    if config.use_pseudo {
        let targets = if config.oracle_pseudo { ctx.y } else { y_prev };
        let norm = if config.normalize_pseudo && !ctx.pseudo_nodes.is_empty() {
            1.0 / ctx.pseudo_nodes.len() as f64
        } else {
            1.0
        };
        pseudo = norm * pseudo_label_ce(z, targets, ctx.pseudo_nodes, w_p)?;
        if let Some(g) = grad.as_mut() {
            let scale = config.lambda1 * w_p * norm;
            if scale != 0.0 {
                for &i in ctx.pseudo_nodes {
                    for j in 0..c {
                        let t = targets[(i, j)];
                        if t != 0.0 {
                            g[(i, j)] -= scale * t / (z[(i, j)] + LOG_EPS);
                        }
                    }
                }
            }
        }
    }

    // Laplacian smoothness of the predictions.
    let mut smooth = 0.0;
    if config.use_smooth {
        if ctx.laplacian.shape() != (n, n) {
            return Err(Error::Dimension("Laplacian does not match the prediction".into()));
        }
        let lz = ctx.laplacian * z;
        smooth = z.component_mul(&lz).sum();
        if let Some(g) = grad.as_mut() {
            if config.lambda2 != 0.0 {
                let ltz = ctx.laplacian.transpose() * z;
                *g += (lz + ltz) * config.lambda2;
            }
        }
    }

    let total = ce_renode + config.lambda1 * pseudo + config.lambda2 * smooth;
    if !total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss (ce {ce_renode}, pseudo {pseudo}, smooth {smooth})"
        )));
    }
    Ok((
        LossBreakdown {
            ce_renode,
            pseudo,
            smooth,
            total,
            w_p,
        },
        grad,
    ))
}
