//! Smoothness-weighted fusion of per-view graphs and the symmetric
//! normalized operators derived from a graph.

use nalgebra::DMatrix;

use crate::linalg;
use crate::{Error, Result};

/// Weight assigned to a view whose smoothness trace vanishes.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Operators of the symmetrized graph `A = (S + Sᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphOperators {
    pub a_sym: DMatrix<f64>,
    /// Row sums of `a_sym`.
    pub degrees: Vec<f64>,
    /// `D^{-1/2} A D^{-1/2}`, with `D^{-1/2}` taken as 0 on isolated nodes.
    pub a_hat: DMatrix<f64>,
    /// `I − A_hat` on non-isolated nodes; isolated nodes get a zero row.
    pub l_norm: DMatrix<f64>,
}

pub fn normalized_operators(s: &DMatrix<f64>) -> GraphOperators {
    operators_of_symmetric(linalg::symmetrize(s))
}

pub(crate) fn operators_of_symmetric(a_sym: DMatrix<f64>) -> GraphOperators {
    let n = a_sym.nrows();
    let degrees: Vec<f64> = a_sym.row_iter().map(|r| r.sum()).collect();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let a_hat = DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * a_sym[(i, j)] * inv_sqrt[j]);
    let mut l_norm = -&a_hat;
    for i in 0..n {
        if degrees[i] > 0.0 {
            l_norm[(i, i)] += 1.0;
        }
    }
    GraphOperators {
        a_sym,
        degrees,
        a_hat,
        l_norm,
    }
}

/// `Tr(Xᵀ L X)` with `L` the normalized Laplacian of the symmetrized `S`.
pub fn smoothness_trace(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() != s.nrows() || s.nrows() != s.ncols() {
        return Err(Error::Dimension(format!(
            "X is {}×{}, S is {}×{}",
            x.nrows(),
            x.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    let ops = normalized_operators(s);
    let trace = linalg::trace_quadratic(x, &ops.l_norm);
    if trace < -1e-8 {
        return Err(Error::Numeric(format!(
            "negative smoothness trace {trace}; the Laplacian is not positive semidefinite"
        )));
    }
    Ok(trace)
}

/// `√Tr(XᵀLX)`, floored at [`WEIGHT_FLOOR`] when the trace is ≤ 1e-12.
pub fn view_weight(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    Ok(weight_from_trace(smoothness_trace(x, s)?))
}

pub fn weight_from_trace(trace: f64) -> f64 {
    if trace <= 1e-12 {
        WEIGHT_FLOOR
    } else {
        trace.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedGraph {
    /// Row-stochastic convex combination of the view graphs.
    pub s: DMatrix<f64>,
    /// Raw (unnormalized) view weights.
    pub alphas: Vec<f64>,
    pub ops: GraphOperators,
}

impl FusedGraph {
    pub fn n(&self) -> usize {
        self.s.nrows()
    }
}

/// `S = Σ αᵥ Sᵥ / Σ αᵥ`.
pub fn fuse(graphs: &[&DMatrix<f64>], weights: &[f64]) -> Result<FusedGraph> {
    let Some(first) = graphs.first() else {
        return Err(Error::Dimension("no graphs to fuse".into()));
    };
    if graphs.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} graphs but {} weights",
            graphs.len(),
            weights.len()
        )));
    }
    let n = first.nrows();
    for (v, g) in graphs.iter().enumerate() {
        if g.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "graph {v} is {}×{}, expected {n}×{n}",
                g.nrows(),
                g.ncols()
            )));
        }
    }
    if let Some(bad) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Data(format!("view weight {bad} is not positive")));
    }
    let total: f64 = weights.iter().sum();
    let mut s = DMatrix::zeros(n, n);
    for (g, w) in graphs.iter().zip(weights) {
        s += *g * (w / total);
    }
    let ops = normalized_operators(&s);
    Ok(FusedGraph {
        s,
        alphas: weights.to_vec(),
        ops,
    })
}

/// Computes the view weights from `(Xᵥ, Sᵥ)` pairs and fuses. Also returns the
/// raw smoothness traces.
pub fn fuse_views(views: &[&DMatrix<f64>], graphs: &[&DMatrix<f64>]) -> Result<(FusedGraph, Vec<f64>)> {
    if views.len() != graphs.len() {
        return Err(Error::Dimension(format!(
            "{} views but {} graphs",
            views.len(),
            graphs.len()
        )));
    }
    let traces = views
        .iter()
        .zip(graphs)
        .map(|(x, s)| smoothness_trace(x, s))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = traces.iter().map(|&t| weight_from_trace(t)).collect();
    Ok((fuse(graphs, &weights)?, traces))
}
