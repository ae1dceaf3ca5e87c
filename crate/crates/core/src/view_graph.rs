//! Joint learning of a per-view affinity graph `S`, soft labels `F` and a
//! linear projection `(Q, b)` of the view onto the label space.
//!
//! The solver alternates three exact block minimizations of the surrogate
//!
//! ```text
//! J(S,F,Q,b) = Σᵢⱼ Sᵢⱼ (½‖xᵢ−xⱼ‖² + η/2 ‖fᵢ−fⱼ‖²) + Tr((F−Y)ᵀU(F−Y))
//!            + γ‖S‖² + μ(‖Q‖² + α‖XQ + 𝟙bᵀ − F‖²)
//! ```
//!
//! subject to every row of `S` lying on the probability simplex with a zero
//! diagonal. The graph step decouples into one simplex projection per row.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::fusion;
use crate::linalg;
use crate::{Error, Result};

/// Which Laplacian the label step smooths with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelLaplacian {
    /// `D − A` of the symmetrized graph. This is the exact `F` block of the
    /// pairwise surrogate, so the objective trace is monotone.
    Pairwise,
    /// `I − D^{-1/2} A D^{-1/2}`. Not the surrogate's block minimizer; the
    /// objective trace may rise.
    Normalized,
}

/// What the first graph step sees of the labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphInit {
    /// The first graph step uses feature distances only; later steps see the
    /// propagated labels.
    Features,
    /// The first graph step already sees `F₀` (`Y` on labeled rows, 0
    /// elsewhere). Labeled nodes then tend to be cut off from unlabeled ones,
    /// since `‖f_i − f_j‖²` is large across that boundary.
    Labels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Label smoothness weight.
    pub eta: f64,
    /// `‖S‖²` regularizer; larger values spread each row over more neighbors.
    pub gamma: f64,
    /// Projection regularizer.
    pub mu: f64,
    /// Projection fit weight (relative to `‖Q‖²`).
    pub alpha: f64,
    /// Diagonal of `U` on labeled nodes.
    pub u_label: f64,
    /// Number of graph / projection / label sweeps. Each sweep after the
    /// first lets the label term pull the graph further toward one where
    /// labeled nodes only connect to each other, so the default is a single
    /// sweep.
    pub outer_iters: usize,
    pub rel_tol: f64,
    pub label_laplacian: LabelLaplacian,
    pub init: GraphInit,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eta: 5.0,
            gamma: 0.003,
            mu: 100.0,
            alpha: 0.003,
            u_label: 1.0,
            outer_iters: 1,
            rel_tol: 1e-5,
            label_laplacian: LabelLaplacian::Pairwise,
            init: GraphInit::Features,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("u_label", self.u_label),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if self.outer_iters == 0 {
            return Err(Error::Config("solver.outer_iters must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::Config("solver.rel_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraphResult {
    /// `n × n` row-stochastic affinities with zero diagonal.
    pub s: DMatrix<f64>,
    /// `n × c` soft labels.
    pub f: DMatrix<f64>,
    /// `d × c` projection.
    pub q: DMatrix<f64>,
    /// Length-`c` bias.
    pub b: Vec<f64>,
    /// Surrogate objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub seconds: f64,
}

/// Euclidean projection onto `{s ≥ 0, Σ s = 1}` (sort-based).
pub fn simplex_project(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Data("cannot project an empty vector onto the simplex".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite entry in simplex projection input".into()));
    }
    let theta = simplex_threshold(v);
    Ok(v.iter().map(|x| (x - theta).max(0.0)).collect())
}

fn simplex_threshold(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    theta
}

/// Graph block: for each row `i`, `Sᵢ = Π_simplex(−pᵢ / 2γ)` over `j ≠ i` with
/// `pᵢⱼ = ½‖xᵢ−xⱼ‖² + η/2 ‖fᵢ−fⱼ‖²`.
pub fn step_graph(x: &DMatrix<f64>, f: &DMatrix<f64>, config: &SolverConfig) -> Result<DMatrix<f64>> {
    let dx = linalg::pairwise_sq_dists(x);
    step_graph_with_dists(&dx, f, config)
}

fn step_graph_with_dists(dx: &DMatrix<f64>, f: &DMatrix<f64>, config: &SolverConfig) -> Result<DMatrix<f64>> {
    let n = dx.nrows();
    if n < 2 {
        return Err(Error::Data("graph learning needs at least 2 samples".into()));
    }
    let df = linalg::pairwise_sq_dists_direct(f);
    let mut s = DMatrix::zeros(n, n);
    let mut v = Vec::with_capacity(n - 1);
    for i in 0..n {
        v.clear();
        for j in (0..n).filter(|&j| j != i) {
            let p = 0.5 * dx[(i, j)] + 0.5 * config.eta * df[(i, j)];
            v.push(-p / (2.0 * config.gamma));
        }
        let row = simplex_project(&v)?;
        for (j, w) in (0..n).filter(|&j| j != i).zip(row) {
            s[(i, j)] = w;
        }
    }
    Ok(s)
}

/// Ridge solve for the projection block, with the factorization of the
/// centered Gram matrix cached because `X` is fixed across iterations.
pub struct Projector {
    x_centered: DMatrix<f64>,
    x_means: Vec<f64>,
    /// Primal (`d ≤ n`, factor of `XcᵀXc + I/α`) or dual (factor of `XcXcᵀ + I/α`).
    factor: Cholesky<f64, Dyn>,
    dual: bool,
}

impl Projector {
    pub fn new(x: &DMatrix<f64>, alpha: f64) -> Result<Self> {
        let (n, d) = x.shape();
        let x_means = linalg::column_means(x);
        let x_centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - x_means[j]);
        let dual = d > n;
        let mut gram = if dual {
            &x_centered * x_centered.transpose()
        } else {
            x_centered.transpose() * &x_centered
        };
        for k in 0..gram.nrows() {
            gram[(k, k)] += 1.0 / alpha;
        }
        let factor = gram
            .cholesky()
            .ok_or_else(|| Error::Numeric("projection system is not positive definite".into()))?;
        Ok(Projector {
            x_centered,
            x_means,
            factor,
            dual,
        })
    }

    pub fn solve(&self, f: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
        let (n, c) = f.shape();
        let f_means = linalg::column_means(f);
        let f_centered = DMatrix::from_fn(n, c, |i, j| f[(i, j)] - f_means[j]);
        let q = if self.dual {
            self.x_centered.transpose() * self.factor.solve(&f_centered)
        } else {
            self.factor.solve(&(self.x_centered.transpose() * f_centered))
        };
        let b = (0..c)
            .map(|k| {
                let shift: f64 = (0..q.nrows()).map(|j| q[(j, k)] * self.x_means[j]).sum();
                f_means[k] - shift
            })
            .collect();
        (q, b)
    }
}

/// Exact minimizer of `μ‖Q‖² + μα‖XQ + 𝟙bᵀ − F‖²`.
pub fn step_projection(x: &DMatrix<f64>, f: &DMatrix<f64>, config: &SolverConfig) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if x.nrows() != f.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} rows, F has {}",
            x.nrows(),
            f.nrows()
        )));
    }
    Ok(Projector::new(x, config.alpha)?.solve(f))
}

/// `XQ + 𝟙bᵀ`.
pub fn project(x: &DMatrix<f64>, q: &DMatrix<f64>, b: &[f64]) -> DMatrix<f64> {
    let mut p = x * q;
    for mut row in p.row_iter_mut() {
        for (v, bk) in row.iter_mut().zip(b) {
            *v += bk;
        }
    }
    p
}

/// The Laplacian used by the label block.
pub fn label_laplacian(s: &DMatrix<f64>, kind: LabelLaplacian) -> DMatrix<f64> {
    match kind {
        LabelLaplacian::Pairwise => {
            let a = linalg::symmetrize(s);
            let mut l = -&a;
            for i in 0..a.nrows() {
                l[(i, i)] += a.row(i).sum();
            }
            l
        }
        LabelLaplacian::Normalized => fusion::normalized_operators(s).l_norm,
    }
}

/// Label block: solves `(ηL + U + μαI) F = UY + μα(XQ + 𝟙bᵀ)`.
#[allow(clippy::too_many_arguments)]
pub fn step_labels(
    x: &DMatrix<f64>,
    s: &DMatrix<f64>,
    q: &DMatrix<f64>,
    b: &[f64],
    y: &DMatrix<f64>,
    u_diag: &[f64],
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    let laplacian = label_laplacian(s, config.label_laplacian);
    step_labels_with_laplacian(x, &laplacian, q, b, y, u_diag, config)
}

fn step_labels_with_laplacian(
    x: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    q: &DMatrix<f64>,
    b: &[f64],
    y: &DMatrix<f64>,
    u_diag: &[f64],
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let ma = config.mu * config.alpha;
    let mut system = laplacian * config.eta;
    for i in 0..n {
        system[(i, i)] += u_diag[i] + ma;
    }
    let mut rhs = project(x, q, b) * ma;
    for i in 0..n {
        if u_diag[i] != 0.0 {
            for k in 0..y.ncols() {
                rhs[(i, k)] += u_diag[i] * y[(i, k)];
            }
        }
    }
    linalg::solve_spd(system, &rhs, "label step")
}

/// Evaluates the surrogate objective.
#[allow(clippy::too_many_arguments)]
pub fn surrogate_objective(
    x: &DMatrix<f64>,
    s: &DMatrix<f64>,
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
    b: &[f64],
    y: &DMatrix<f64>,
    u_diag: &[f64],
    config: &SolverConfig,
) -> f64 {
    let dx = linalg::pairwise_sq_dists(x);
    surrogate_with_dists(&dx, x, s, f, q, b, y, u_diag, config)
}

#[allow(clippy::too_many_arguments)]
fn surrogate_with_dists(
    dx: &DMatrix<f64>,
    x: &DMatrix<f64>,
    s: &DMatrix<f64>,
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
    b: &[f64],
    y: &DMatrix<f64>,
    u_diag: &[f64],
    config: &SolverConfig,
) -> f64 {
    let n = x.nrows();
    let df = linalg::pairwise_sq_dists_direct(f);
    let mut graph_term = 0.0;
    for i in 0..n {
        for j in 0..n {
            let sij = s[(i, j)];
            if sij != 0.0 {
                graph_term += sij * (0.5 * dx[(i, j)] + 0.5 * config.eta * df[(i, j)]);
            }
        }
    }
    let mut label_fit = 0.0;
    for i in 0..n {
        if u_diag[i] != 0.0 {
            let r: f64 = (0..f.ncols()).map(|k| (f[(i, k)] - y[(i, k)]).powi(2)).sum();
            label_fit += u_diag[i] * r;
        }
    }
    let residual = project(x, q, b) - f;
    graph_term
        + label_fit
        + config.gamma * s.norm_squared()
        + config.mu * (q.norm_squared() + config.alpha * residual.norm_squared())
}

/// Runs the alternating solver for one view.
///
/// `x` should already be column-normalized. `labeled[i]` marks nodes whose
/// rows of `y` (one-hot) anchor `F`.
pub fn solve_view_graph(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    labeled: &[bool],
    config: &SolverConfig,
) -> Result<ViewGraphResult> {
    config.validate()?;
    let start = Instant::now();
    let (n, c) = y.shape();
    if x.nrows() != n || labeled.len() != n {
        return Err(Error::Dimension(format!(
            "X has {} rows, Y {n}, mask {}",
            x.nrows(),
            labeled.len()
        )));
    }
    if !labeled.iter().any(|&l| l) {
        return Err(Error::Data("graph learning needs at least one labeled node".into()));
    }
    if !linalg::all_finite(x) {
        return Err(Error::Data("non-finite feature value".into()));
    }

    let u_diag: Vec<f64> = labeled
        .iter()
        .map(|&l| if l { config.u_label } else { 0.0 })
        .collect();
    let mut f = DMatrix::from_fn(n, c, |i, k| if labeled[i] { y[(i, k)] } else { 0.0 });
    let mut q = DMatrix::zeros(x.ncols(), c);
    let mut b = vec![0.0; c];
    let mut s = DMatrix::zeros(n, n);

    let dx = linalg::pairwise_sq_dists(x);
    let projector = Projector::new(x, config.alpha)?;
    let mut trace: Vec<f64> = Vec::with_capacity(config.outer_iters);

    for iter in 0..config.outer_iters {
        s = if iter == 0 && config.init == GraphInit::Features {
            step_graph_with_dists(&dx, &DMatrix::zeros(n, c), config)?
        } else {
            step_graph_with_dists(&dx, &f, config)?
        };
        (q, b) = projector.solve(&f);
        let laplacian = label_laplacian(&s, config.label_laplacian);
        f = step_labels_with_laplacian(x, &laplacian, &q, &b, y, &u_diag, config)?;

        let objective = surrogate_with_dists(&dx, x, &s, &f, &q, &b, y, &u_diag, config);
        if !objective.is_finite() {
            return Err(Error::Numeric("graph solver objective became non-finite".into()));
        }
        let previous = trace.last().copied();
        trace.push(objective);
        if let Some(prev) = previous {
            let decrease = (prev - objective) / prev.abs().max(f64::MIN_POSITIVE);
            if decrease < config.rel_tol {
                break;
            }
        }
    }

    Ok(ViewGraphResult {
        s,
        f,
        q,
        b,
        objective_trace: trace,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn projection_of_simplex_point_is_identity() {
        assert_close(&simplex_project(&[0.5, 0.5]).unwrap(), &[0.5, 0.5], 1e-15);
    }

    #[test]
    fn projection_forced_vertex() {
        assert_close(&simplex_project(&[10.0, 0.0]).unwrap(), &[1.0, 0.0], 1e-15);
    }

    #[test]
    fn projection_uniform_shift() {
        let third = 1.0 / 3.0;
        assert_close(&simplex_project(&[0.2, 0.2, 0.2]).unwrap(), &[third; 3], 1e-15);
    }

    #[test]
    fn projection_rejects_nan() {
        assert!(simplex_project(&[0.1, f64::NAN]).is_err());
        assert!(simplex_project(&[f64::INFINITY]).is_err());
    }

    fn two_clusters(n_per: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * n_per;
        let labels: Vec<usize> = (0..n).map(|i| i / n_per).collect();
        let mut x = DMatrix::from_fn(n, 3, |i, j| {
            let center = if labels[i] == 0 { [1.0, 0.0, 0.2] } else { [0.0, 1.0, 0.2] };
            center[j] + 0.05 * (rng.random::<f64>() - 0.5)
        });
        crate::dataset::normalize_columns_in_place(&mut x);
        (x, labels)
    }

    #[test]
    fn well_separated_clusters_keep_mass_within_cluster() {
        let (x, labels) = two_clusters(10, 3);
        let y = crate::dataset::one_hot(&labels, 2);
        let mut labeled = vec![false; 20];
        labeled[0] = true;
        labeled[10] = true;
        let res = solve_view_graph(&x, &y, &labeled, &SolverConfig::default()).unwrap();
        for i in 0..20 {
            let same: f64 = (0..20).filter(|&j| labels[j] == labels[i]).map(|j| res.s[(i, j)]).sum();
            assert!(same >= 0.95, "row {i} keeps only {same}");
        }
    }

    #[test]
    fn huge_gamma_gives_uniform_rows() {
        let (x, _) = two_clusters(4, 1);
        let f = DMatrix::zeros(8, 2);
        let cfg = SolverConfig {
            gamma: 1e6,
            ..SolverConfig::default()
        };
        let s = step_graph(&x, &f, &cfg).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j { 0.0 } else { 1.0 / 7.0 };
                assert!((s[(i, j)] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn duplicate_rows_attract_most_mass() {
        let x = DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 5.0, 5.0, 5.0]);
        let f = DMatrix::zeros(5, 1);
        let s = step_graph(&x, &f, &SolverConfig::default()).unwrap();
        let row0: Vec<f64> = s.row(0).iter().cloned().collect();
        let max = row0.iter().cloned().fold(0.0, f64::max);
        assert_eq!(row0[1], max);
        assert!((row0[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_zero_target_gives_zero() {
        let x = DMatrix::from_fn(6, 3, |i, j| (i * j) as f64 * 0.1 + i as f64);
        let f = DMatrix::zeros(6, 2);
        let (q, b) = step_projection(&x, &f, &SolverConfig::default()).unwrap();
        assert!(q.amax() == 0.0);
        assert!(b.iter().all(|v| *v == 0.0));
    }

    fn projection_objective(x: &DMatrix<f64>, f: &DMatrix<f64>, q: &DMatrix<f64>, b: &[f64], alpha: f64) -> f64 {
        q.norm_squared() + alpha * (project(x, q, b) - f).norm_squared()
    }

    #[test]
    fn projection_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (n, d) in [(10, 3), (4, 9)] {
            let x = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() - 0.5);
            let f = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
            let alpha = 2.5;
            let (q, b) = Projector::new(&x, alpha).unwrap().solve(&f);
            let h = 1e-6;
            let mut grad_sq = 0.0;
            for j in 0..d {
                for k in 0..2 {
                    let mut qp = q.clone();
                    qp[(j, k)] += h;
                    let mut qm = q.clone();
                    qm[(j, k)] -= h;
                    let g = (projection_objective(&x, &f, &qp, &b, alpha)
                        - projection_objective(&x, &f, &qm, &b, alpha))
                        / (2.0 * h);
                    grad_sq += g * g;
                }
            }
            for k in 0..2 {
                let mut bp = b.clone();
                bp[k] += h;
                let mut bm = b.clone();
                bm[k] -= h;
                let g = (projection_objective(&x, &f, &q, &bp, alpha)
                    - projection_objective(&x, &f, &q, &bm, alpha))
                    / (2.0 * h);
                grad_sq += g * g;
            }
            assert!(grad_sq.sqrt() < 1e-8, "gradient norm {} for n={n} d={d}", grad_sq.sqrt());
        }
    }

    #[test]
    fn projection_recovers_exact_affine_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(12, 3, |_, _| rng.random::<f64>() - 0.5);
        let q0 = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let b0 = [0.3, -0.7];
        let f = project(&x, &q0, &b0);
        let cfg = SolverConfig {
            alpha: 1e12,
            ..SolverConfig::default()
        };
        let (q, b) = step_projection(&x, &f, &cfg).unwrap();
        assert!((q - q0).amax() <= 1e-6);
        assert_close(&b, &b0, 1e-6);
    }

    fn label_fixture(n: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>());
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let y = crate::dataset::one_hot(&labels, 2);
        let s = step_graph(&x, &DMatrix::zeros(n, 2), &SolverConfig::default()).unwrap();
        let q = DMatrix::from_fn(3, 2, |_, _| rng.random::<f64>());
        let b = vec![0.1, -0.2];
        (x, y, s, q, b)
    }

    #[test]
    fn label_step_residual_is_tiny() {
        let (x, y, s, q, b) = label_fixture(12);
        let u: Vec<f64> = (0..12).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let cfg = SolverConfig::default();
        let f = step_labels(&x, &s, &q, &b, &y, &u, &cfg).unwrap();
        let l = label_laplacian(&s, cfg.label_laplacian);
        let ma = cfg.mu * cfg.alpha;
        let mut sys = l * cfg.eta;
        for i in 0..12 {
            sys[(i, i)] += u[i] + ma;
        }
        let mut rhs = project(&x, &q, &b) * ma;
        for i in 0..12 {
            for k in 0..2 {
                rhs[(i, k)] += u[i] * y[(i, k)];
            }
        }
        assert!((sys * &f - rhs).norm() < 1e-8);
    }

    #[test]
    fn large_anchor_pins_labeled_rows() {
        let (x, y, s, q, b) = label_fixture(12);
        let mut previous = f64::INFINITY;
        for u_label in [1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6] {
            let u: Vec<f64> = (0..12).map(|i| if i < 4 { u_label } else { 0.0 }).collect();
            let f = step_labels(&x, &s, &q, &b, &y, &u, &SolverConfig::default()).unwrap();
            let err: f64 = (0..4)
                .flat_map(|i| (0..2).map(move |k| (i, k)))
                .map(|(i, k)| (f[(i, k)] - y[(i, k)]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err <= previous + 1e-12, "anchor error grew at u={u_label}");
            previous = err;
            if u_label == 1e6 {
                for i in 0..4 {
                    for k in 0..2 {
                        assert!((f[(i, k)] - y[(i, k)]).abs() < 1e-3);
                    }
                }
            }
        }
    }

    #[test]
    fn labels_dominate_without_smoothing() {
        let (x, y, s, q, b) = label_fixture(8);
        let cfg = SolverConfig {
            eta: 1e-300,
            mu: 1e-9,
            alpha: 1e-9,
            ..SolverConfig::default()
        };
        let f = step_labels(&x, &s, &q, &b, &y, &[1.0; 8], &cfg).unwrap();
        assert!((f - y).amax() < 1e-9);
    }

    #[test]
    fn strong_smoothing_flattens_rows() {
        let n = 8;
        let s = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 / (n - 1) as f64 });
        let x = DMatrix::from_fn(n, 2, |i, j| (i + j) as f64 * 0.1);
        let q = DMatrix::zeros(2, 2);
        let b = vec![0.0, 0.0];
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let y = crate::dataset::one_hot(&labels, 2);
        let u: Vec<f64> = (0..n).map(|i| if i < 2 { 1.0 } else { 0.0 }).collect();
        let mut prev = f64::INFINITY;
        for eta in [1.0, 10.0, 100.0, 1000.0] {
            let cfg = SolverConfig {
                eta,
                ..SolverConfig::default()
            };
            let f = step_labels(&x, &s, &q, &b, &y, &u, &cfg).unwrap();
            let mean = linalg::column_means(&f);
            let dev = (0..n)
                .flat_map(|i| (0..2).map(move |k| (i, k)))
                .map(|(i, k)| (f[(i, k)] - mean[k]).abs())
                .fold(0.0, f64::max);
            assert!(dev < prev, "deviation {dev} did not shrink at eta={eta}");
            prev = dev;
        }
    }

    #[test]
    fn solver_rejects_unlabeled_input() {
        let (x, _) = two_clusters(3, 0);
        let y = DMatrix::zeros(6, 2);
        assert!(solve_view_graph(&x, &y, &[false; 6], &SolverConfig::default()).is_err());
    }

    #[test]
    fn config_rejects_nonpositive_factors() {
        let cfg = SolverConfig {
            mu: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
