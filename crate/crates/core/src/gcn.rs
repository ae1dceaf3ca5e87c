//! Two-layer graph convolutional network, `Z = softmax(Â ReLU(Â X W₀) W₁)`,
//! with a hand-written backward pass.
//!
//! Products are evaluated left to right (`(Â X) W₀`), so the cost of a pass
//! grows with the input width as `n²·d`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::{self, FusedGraph};
use crate::io;
use crate::linalg;
use crate::view_graph::ViewGraphResult;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// `d_in × d_h`
    pub w0: DMatrix<f64>,
    /// `d_h × c`
    pub w1: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl GcnParams {
    pub fn dims(&self) -> GcnDims {
        GcnDims {
            input: self.w0.nrows(),
            hidden: self.w0.ncols(),
            output: self.w1.ncols(),
        }
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.w0) && linalg::all_finite(&self.w1)
    }

    pub fn num_params(&self) -> usize {
        self.w0.len() + self.w1.len()
    }

    /// Writes `W0.csv` and `W1.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let w0 = dir.join("W0.csv");
        let w1 = dir.join("W1.csv");
        io::write_matrix(&w0, &self.w0)?;
        io::write_matrix(&w1, &self.w1)?;
        Ok(vec![w0, w1])
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let w0 = io::read_matrix(&dir.join("W0.csv"))?;
        let w1 = io::read_matrix(&dir.join("W1.csv"))?;
        if w0.ncols() != w1.nrows() {
            return Err(Error::Dimension(format!(
                "checkpoint W0 is {}×{} but W1 is {}×{}",
                w0.nrows(),
                w0.ncols(),
                w1.nrows(),
                w1.ncols()
            )));
        }
        Ok(GcnParams { w0, w1 })
    }
}

/// Gradients with the same shapes as [`GcnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GcnGrads {
    pub w0: DMatrix<f64>,
    pub w1: DMatrix<f64>,
}

/// Intermediates of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GcnForwardTrace {
    /// `Â X`
    pub ax: DMatrix<f64>,
    pub h1_pre: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    /// `Â H₁`
    pub ah1: DMatrix<f64>,
    pub z_pre: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

/// Glorot-uniform initialization; each layer draws from its own ChaCha
/// stream of the given seed.
pub fn init_params(seed: u64, dims: GcnDims) -> GcnParams {
    let layer = |stream: u64, rows: usize, cols: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..=limit))
    };
    GcnParams {
        w0: layer(0, dims.input, dims.hidden),
        w1: layer(1, dims.hidden, dims.output),
    }
}

/// `F* = [F¹ | … | Fⱽ]`.
pub fn concat_features(view_graphs: &[ViewGraphResult]) -> Result<DMatrix<f64>> {
    let Some(first) = view_graphs.first() else {
        return Err(Error::Dimension("no views to concatenate".into()));
    };
    let c = first.f.ncols();
    if let Some(bad) = view_graphs.iter().position(|g| g.f.ncols() != c) {
        return Err(Error::Dimension(format!(
            "view {bad} has {} label columns, expected {c}",
            view_graphs[bad].f.ncols()
        )));
    }
    let blocks: Vec<&DMatrix<f64>> = view_graphs.iter().map(|g| &g.f).collect();
    linalg::hconcat(&blocks)
}

/// The propagation matrix `Â` used by both layers. With self-loops the
/// symmetrized fused graph gets `+I` before degree normalization.
pub fn propagation_operator(fused: &FusedGraph, add_self_loops: bool) -> DMatrix<f64> {
    if !add_self_loops {
        return fused.ops.a_hat.clone();
    }
    let mut a = fused.ops.a_sym.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += 1.0;
    }
    fusion::operators_of_symmetric(a).a_hat
}

pub fn forward(params: &GcnParams, operator: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<GcnForwardTrace> {
    let n = operator.nrows();
    if operator.ncols() != n || x.nrows() != n {
        return Err(Error::Dimension(format!(
            "operator is {}×{}, features have {} rows",
            operator.nrows(),
            operator.ncols(),
            x.nrows()
        )));
    }
    if x.ncols() != params.w0.nrows() {
        return Err(Error::Dimension(format!(
            "features have width {}, W0 expects {}",
            x.ncols(),
            params.w0.nrows()
        )));
    }
    let ax = operator * x;
    let h1_pre = &ax * &params.w0;
    let h1 = h1_pre.map(|v| v.max(0.0));
    let ah1 = operator * &h1;
    let z_pre = &ah1 * &params.w1;
    if !linalg::all_finite(&z_pre) {
        return Err(Error::Numeric("non-finite logits in GCN forward pass".into()));
    }
    let z = linalg::row_softmax(&z_pre);
    Ok(GcnForwardTrace {
        ax,
        h1_pre,
        h1,
        ah1,
        z_pre,
        z,
    })
}

/// Back-propagates `∂L/∂Z` through the softmax and both layers.
pub fn backward(
    params: &GcnParams,
    operator: &DMatrix<f64>,
    trace: &GcnForwardTrace,
    dz: &DMatrix<f64>,
) -> GcnGrads {
    let d_logits = softmax_backward(&trace.z, dz);
    let w1 = trace.ah1.transpose() * &d_logits;
    let d_ah1 = &d_logits * params.w1.transpose();
    let d_h1 = operator.transpose() * d_ah1;
    let d_h1_pre = d_h1.zip_map(&trace.h1_pre, |g, pre| if pre > 0.0 { g } else { 0.0 });
    let w0 = trace.ax.transpose() * d_h1_pre;
    GcnGrads { w0, w1 }
}

/// Row-wise softmax Jacobian-vector product: `zᵢ ⊙ (gᵢ − ⟨gᵢ, zᵢ⟩)`.
pub fn softmax_backward(z: &DMatrix<f64>, dz: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = dz.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let inner: f64 = row.iter().zip(z.row(i).iter()).map(|(g, p)| g * p).sum();
        for (j, v) in row.iter_mut().enumerate() {
            *v = z[(i, j)] * (*v - inner);
        }
    }
    out
}

/// Index of the largest entry in each row.
pub fn argmax_rows(z: &DMatrix<f64>) -> Vec<usize> {
    z.row_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}

/// Fraction of `nodes` whose arg-max prediction matches the label.
pub fn accuracy(z: &DMatrix<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let pred = argmax_rows(z);
    let correct = nodes.iter().filter(|&&i| pred[i] == labels[i]).count();
    correct as f64 / nodes.len() as f64
}
