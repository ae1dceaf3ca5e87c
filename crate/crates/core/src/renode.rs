//! Topology-aware re-weighting of labeled nodes.
//!
//! A labeled node whose personalized-PageRank influence overlaps strongly with
//! the influence of other classes sits near a class boundary. Nodes are ranked
//! by that overlap (the conflict score) and mapped onto `[w_min, w_max]` with
//! a half cosine, so the least conflicted node gets `w_max`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::io;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReNodeConfig {
    /// Restart probability in `(0, 1]`.
    pub xi: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for ReNodeConfig {
    fn default() -> Self {
        ReNodeConfig {
            xi: 0.15,
            w_min: 0.5,
            w_max: 1.0,
        }
    }
}

impl ReNodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::Config(format!("renode.xi must lie in (0, 1], got {}", self.xi)));
        }
        if !(self.w_min > 0.0 && self.w_max >= self.w_min && self.w_max.is_finite()) {
            return Err(Error::Config(format!(
                "renode weights need 0 < w_min <= w_max, got [{}, {}]",
                self.w_min, self.w_max
            )));
        }
        Ok(())
    }
}

/// Per-labeled-node scores, ranks and weights, ordered by node index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeWeightTable {
    pub nodes: Vec<usize>,
    pub totoro: Vec<f64>,
    pub rank: Vec<usize>,
    pub weight: Vec<f64>,
}

impl NodeWeightTable {
    /// Weights expanded to all `n` nodes, 1.0 for unlabeled ones.
    pub fn dense_weights(&self, n: usize) -> Vec<f64> {
        let mut w = vec![1.0; n];
        for (&i, &wi) in self.nodes.iter().zip(&self.weight) {
            w[i] = wi;
        }
        w
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = (0..self.nodes.len())
            .map(|k| {
                vec![
                    self.nodes[k].to_string(),
                    io::fmt_f64(self.totoro[k]),
                    self.rank[k].to_string(),
                    io::fmt_f64(self.weight[k]),
                ]
            })
            .collect();
        io::write_table(path, &["node_index", "totoro", "rank", "weight"], &rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut table = NodeWeightTable {
            nodes: Vec::new(),
            totoro: Vec::new(),
            rank: Vec::new(),
            weight: Vec::new(),
        };
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let bad = |what: &str| Error::Parse {
                path: path.into(),
                line: line + 2,
                message: format!("bad {what}"),
            };
            if record.len() != 4 {
                return Err(bad("row width"));
            }
            table.nodes.push(record[0].parse().map_err(|_| bad("node_index"))?);
            table.totoro.push(record[1].parse().map_err(|_| bad("totoro"))?);
            table.rank.push(record[2].parse().map_err(|_| bad("rank"))?);
            table.weight.push(record[3].parse().map_err(|_| bad("weight"))?);
        }
        Ok(table)
    }
}

/// `P = ξ (I − (1−ξ) Â)⁻¹` by a dense solve.
pub fn personalized_pagerank(a_hat: &DMatrix<f64>, xi: f64) -> Result<DMatrix<f64>> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::Config(format!("restart probability {xi} outside (0, 1]")));
    }
    let n = a_hat.nrows();
    if a_hat.ncols() != n {
        return Err(Error::Dimension("PageRank operator must be square".into()));
    }
    let mut m = a_hat * -(1.0 - xi);
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    let rhs = DMatrix::identity(n, n) * xi;
    // Symmetric and positive definite whenever the spectral radius of Â is ≤ 1.
    let p = match m.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => m.lu().solve(&rhs).ok_or_else(|| {
            Error::Numeric("PageRank system is singular; the graph operator is corrupt".into())
        })?,
    };
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("PageRank matrix has non-finite entries".into()));
    }
    Ok(p)
}

/// Conflict score of every labeled node:
/// `Tᵢ = Σ_{j ≠ yᵢ} ⟨Pᵢ, m_j⟩` where `m_j` is the mean PageRank row over the
/// labeled nodes of class `j`.
///
/// `labeled_nodes` must be ascending; the result follows the same order.
pub fn totoro_scores(
    p: &DMatrix<f64>,
    labels: &[usize],
    labeled_nodes: &[usize],
    num_classes: usize,
) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut class_sum = DMatrix::<f64>::zeros(num_classes, n);
    let mut class_count = vec![0usize; num_classes];
    for &k in labeled_nodes {
        let y = labels[k];
        if y >= num_classes {
            return Err(Error::Data(format!("label {y} outside 0..{num_classes}")));
        }
        class_count[y] += 1;
        let mut row = class_sum.row_mut(y);
        row += p.row(k);
    }
    if let Some(empty) = class_count.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!("class {empty} has no labeled node")));
    }
    for (j, &count) in class_count.iter().enumerate() {
        let mut row = class_sum.row_mut(j);
        row /= count as f64;
    }
    // overlap[i, j] = ⟨P_i, m_j⟩
    let scores = labeled_nodes
        .iter()
        .map(|&i| {
            let pi = p.row(i);
            (0..num_classes)
                .filter(|&j| j != labels[i])
                .map(|j| pi.dot(&class_sum.row(j)))
                .sum()
        })
        .collect();
    Ok(scores)
}

/// Ascending 0-based rank (ties by position) and the cosine weight mapping.
pub fn cosine_weights(totoro: &[f64], w_min: f64, w_max: f64) -> (Vec<usize>, Vec<f64>) {
    let m = totoro.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| totoro[a].total_cmp(&totoro[b]));
    let mut rank = vec![0; m];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r;
    }
    let span = w_max - w_min;
    let weight = rank
        .iter()
        .map(|&r| {
            w_min + 0.5 * span * (1.0 + (r as f64 * std::f64::consts::PI / m as f64).cos())
        })
        .collect();
    (rank, weight)
}

/// Full re-weighting from the fused graph operator.
pub fn node_weights(
    a_hat: &DMatrix<f64>,
    labels: &[usize],
    labeled_nodes: &[usize],
    num_classes: usize,
    config: &ReNodeConfig,
) -> Result<NodeWeightTable> {
    config.validate()?;
    let p = personalized_pagerank(a_hat, config.xi)?;
    let totoro = totoro_scores(&p, labels, labeled_nodes, num_classes)?;
    let (rank, weight) = cosine_weights(&totoro, config.w_min, config.w_max);
    Ok(NodeWeightTable {
        nodes: labeled_nodes.to_vec(),
        totoro,
        rank,
        weight,
    })
}
