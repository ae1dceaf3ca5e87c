//! Acceptance suite. Prints one `PASS`/`FAIL`/`SKIP` line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Every check compares the library against an independent oracle written
//! here (brute-force enumerations, literal sums, power series), or against
//! the fixed values quoted in each criterion.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rsgslm::dataset::{
    generate_synthetic, load_dataset, normalize_columns_in_place, SplitSpec, SynthSpec, SynthView,
};
use rsgslm::experiment::{self, Method, Summary};
use rsgslm::fusion::normalized_operators;
use rsgslm::gcn;
use rsgslm::objective::{schedule_wp, LossConfig, Schedule};
use rsgslm::renode::{cosine_weights, personalized_pagerank, totoro_scores};
use rsgslm::trainer::{self, fit_gcn, GcnProblem, GradCheckSpec, NodeSets, TrainConfig};
use rsgslm::view_graph::{solve_view_graph, step_graph, GraphInit, SolverConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Labels with every class present and a labeled subset containing every class.
fn random_labels(rng: &mut ChaCha8Rng, n: usize, c: usize) -> (Vec<usize>, Vec<bool>) {
    let mut labels: Vec<usize> = (0..n).map(|i| if i < c { i } else { rng.random_range(0..c) }).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    let mut labeled: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    for class in 0..c {
        if !(0..n).any(|i| labeled[i] && labels[i] == class) {
            let i = labels.iter().position(|&l| l == class).unwrap();
            labeled[i] = true;
        }
    }
    (labels, labeled)
}

fn one_hot(labels: &[usize], c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), c, |i, k| if labels[i] == k { 1.0 } else { 0.0 })
}

fn criterion_1() -> Outcome {
    let expected = [(1, 0.0), (2, 0.0005), (1001, 0.5), (2000, 0.9995)];
    let mut worst: f64 = 0.0;
    for (epoch, want) in expected {
        let got = schedule_wp(epoch, 2000, Schedule::Linear).unwrap();
        worst = worst.max((got - want).abs());
    }
    outcome(worst <= 1e-12, format!("max |w_p - expected| = {worst:.1e}"))
}

fn criterion_2() -> Outcome {
    let spec = GradCheckSpec {
        n: 20,
        views: 2,
        classes: 3,
        ..GradCheckSpec::default()
    };
    let mut worst: f64 = 0.0;
    for (smooth, pseudo, renode) in trainer::ablation_flags() {
        let loss = trainer::with_flags(&LossConfig::default(), smooth, pseudo, renode);
        let report = trainer::gradient_check(&loss, &spec).unwrap();
        worst = worst.max(report.max_rel_error);
    }
    outcome(worst < 1e-4, format!("8 flag combinations, max relative error {worst:.2e}"))
}

/// The pairwise surrogate written out term by term.
#[allow(clippy::too_many_arguments)]
fn surrogate(
    x: &DMatrix<f64>,
    s: &DMatrix<f64>,
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
    b: &[f64],
    y: &DMatrix<f64>,
    labeled: &[bool],
    cfg: &SolverConfig,
) -> f64 {
    let n = x.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dx = (x.row(i) - x.row(j)).norm_squared();
            let df = (f.row(i) - f.row(j)).norm_squared();
            total += s[(i, j)] * (0.5 * dx + 0.5 * cfg.eta * df);
        }
        if labeled[i] {
            total += cfg.u_label * (f.row(i) - y.row(i)).norm_squared();
        }
    }
    total += cfg.gamma * s.norm_squared();
    let mut fit = x * q;
    for mut row in fit.row_iter_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            *v += b[k];
        }
    }
    total + cfg.mu * (q.norm_squared() + cfg.alpha * (fit - f).norm_squared())
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_rise: f64 = f64::NEG_INFINITY;
    let mut worst_row: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    let mut failures = Vec::new();
    for trial in 0..100 {
        let n = rng.random_range(6..=50);
        let d = rng.random_range(2..=10);
        let c = rng.random_range(2..=4);
        let mut x = gaussian(&mut rng, n, d);
        normalize_columns_in_place(&mut x);
        let (labels, labeled) = random_labels(&mut rng, n, c);
        let y = one_hot(&labels, c);
        let cfg = SolverConfig {
            outer_iters: 20,
            rel_tol: 0.0,
            gamma: [0.003, 0.03, 0.3][trial % 3],
            eta: [0.5, 5.0][trial % 2],
            init: if trial % 2 == 0 { GraphInit::Features } else { GraphInit::Labels },
            ..SolverConfig::default()
        };
        let r = solve_view_graph(&x, &y, &labeled, &cfg).unwrap();
        for w in r.objective_trace.windows(2) {
            let rise = (w[1] - w[0]) / w[0].abs();
            worst_rise = worst_rise.max(rise);
            if rise > 1e-9 {
                failures.push(format!("trial {trial}: objective rose by {rise:.2e}"));
            }
        }
        let last = *r.objective_trace.last().unwrap();
        let direct = surrogate(&x, &r.s, &r.f, &r.q, &r.b, &y, &labeled, &cfg);
        worst_trace = worst_trace.max((direct - last).abs() / last.abs());
        for i in 0..n {
            let row = r.s.row(i);
            let dev = (row.sum() - 1.0).abs();
            let neg = row.iter().fold(0.0f64, |m, &v| m.max(-v));
            worst_row = worst_row.max(dev).max(neg);
            if r.s[(i, i)] != 0.0 {
                failures.push(format!("trial {trial}: nonzero diagonal at {i}"));
            }
        }
    }
    let pass = failures.is_empty() && worst_row <= 1e-8 && worst_trace <= 1e-9;
    let mut detail = format!(
        "100 instances x 20 iterations: max relative rise {worst_rise:.1e}, max row error {worst_row:.1e}, trace vs direct {worst_trace:.1e}"
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first failure: {f}"));
    }
    outcome(pass, detail)
}

/// Exact minimizer of `Σ sⱼ pⱼ + γ Σ sⱼ²` over the simplex by enumerating
/// every support set and keeping the KKT point with the lowest objective.
fn simplex_qp_oracle(p: &[f64], gamma: f64) -> Vec<f64> {
    let m = p.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
        let sum_p: f64 = support.iter().map(|&j| p[j]).sum();
        let lambda = -(2.0 * gamma + sum_p) / support.len() as f64;
        let mut s = vec![0.0; m];
        let mut feasible = true;
        for &j in &support {
            s[j] = -(p[j] + lambda) / (2.0 * gamma);
            feasible &= s[j] >= -1e-15;
        }
        if !feasible {
            continue;
        }
        let value: f64 = (0..m).map(|j| s[j] * p[j] + gamma * s[j] * s[j]).sum();
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, s));
        }
    }
    best.unwrap().1
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(1..=5);
        let c = rng.random_range(2..=3);
        let x = gaussian(&mut rng, n, d);
        let f = gaussian(&mut rng, n, c) * 0.5;
        let cfg = SolverConfig {
            gamma: 10f64.powf(rng.random_range(-3.0..0.0)),
            eta: rng.random_range(0.1..5.0),
            ..SolverConfig::default()
        };
        let s = step_graph(&x, &f, &cfg).unwrap();
        for i in 0..n {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let p: Vec<f64> = others
                .iter()
                .map(|&j| {
                    let dx: f64 = (0..d).map(|k| (x[(i, k)] - x[(j, k)]).powi(2)).sum();
                    let df: f64 = (0..c).map(|k| (f[(i, k)] - f[(j, k)]).powi(2)).sum();
                    0.5 * dx + 0.5 * cfg.eta * df
                })
                .collect();
            let want = simplex_qp_oracle(&p, cfg.gamma);
            for (k, &j) in others.iter().enumerate() {
                worst = worst.max((s[(i, j)] - want[k]).abs());
            }
            worst = worst.max(s[(i, i)].abs());
        }
    }
    outcome(worst <= 1e-10, format!("1000 trials, max |S - oracle| = {worst:.1e}"))
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::from_fn(n, n, |i, j| if i != j && rng.random_bool(0.4) { rng.random::<f64>() } else { 0.0 });
    for i in 0..n {
        let total = s.row(i).sum();
        if total > 0.0 {
            let mut row = s.row_mut(i);
            row /= total;
        }
    }
    s
}

fn criterion_5() -> Outcome {
    let xi = 0.15;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(1..=25);
        let a_hat = normalized_operators(&random_graph(&mut rng, n)).a_hat;
        let p = personalized_pagerank(&a_hat, xi).unwrap();
        let mut term = DMatrix::<f64>::identity(n, n) * xi;
        let mut series = term.clone();
        for _ in 0..200 {
            term = &term * &a_hat * (1.0 - xi);
            series += &term;
        }
        worst = worst.max((p - series).abs().max());
    }
    let a2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let p2 = personalized_pagerank(&a2, xi).unwrap();
    let want = [[0.5405, 0.4595], [0.4595, 0.5405]];
    let closed = (0..2).all(|i| (0..2).all(|j| (p2[(i, j)] - want[i][j]).abs() < 5e-5));
    outcome(
        worst <= 1e-8 && closed,
        format!(
            "max |P - Neumann(200)| = {worst:.1e}; 2-node P = [[{:.4}, {:.4}], [{:.4}, {:.4}]]",
            p2[(0, 0)],
            p2[(0, 1)],
            p2[(1, 0)],
            p2[(1, 1)]
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(4..=30);
        let c = rng.random_range(2..=4.min(n));
        let p = personalized_pagerank(&normalized_operators(&random_graph(&mut rng, n)).a_hat, 0.15).unwrap();
        let (labels, labeled) = random_labels(&mut rng, n, c);
        let nodes: Vec<usize> = (0..n).filter(|&i| labeled[i]).collect();
        let got = totoro_scores(&p, &labels, &nodes, c).unwrap();
        for (k, &i) in nodes.iter().enumerate() {
            let mut t = 0.0;
            for x in 0..n {
                let mut inner = 0.0;
                for j in (0..c).filter(|&j| j != labels[i]) {
                    let members: Vec<usize> = nodes.iter().copied().filter(|&m| labels[m] == j).collect();
                    let mean: f64 = members.iter().map(|&m| p[(m, x)]).sum::<f64>() / members.len() as f64;
                    inner += mean;
                }
                t += p[(i, x)] * inner;
            }
            worst = worst.max((got[k] - t).abs());
        }
    }
    outcome(worst <= 1e-10, format!("50 instances, max |T - triple sum| = {worst:.1e}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ok = true;
    for _ in 0..200 {
        let m = rng.random_range(1..=60);
        let w_min = rng.random_range(0.05..1.0);
        let w_max = w_min + rng.random_range(0.0..3.0);
        let totoro: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let (rank, weight) = cosine_weights(&totoro, w_min, w_max);
        let mut sorted_rank = rank.clone();
        sorted_rank.sort_unstable();
        ok &= sorted_rank == (0..m).collect::<Vec<_>>();
        ok &= weight.iter().all(|&w| w >= w_min - 1e-12 && w <= w_max + 1e-12);
        let mut by_rank = vec![0.0; m];
        for k in 0..m {
            by_rank[rank[k]] = weight[k];
        }
        ok &= by_rank.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        for a in 0..m {
            for b in 0..m {
                if totoro[a] < totoro[b] {
                    ok &= rank[a] < rank[b];
                }
            }
        }
    }
    let (_, pair) = cosine_weights(&[0.1, 0.2], 0.5, 0.9);
    let pair_ok = (pair[0] - 0.9).abs() < 1e-12 && (pair[1] - 0.7).abs() < 1e-12;
    outcome(
        ok && pair_ok,
        format!("bounds and monotonicity on 200 draws; |L|=2 gives ({:.4}, {:.4})", pair[0], pair[1]),
    )
}

/// The pinned benchmark dataset and loss weights.
fn benchmark_setup() -> (SynthSpec, TrainConfig) {
    let view = |dim, noise| SynthView { dim, noise, spread: 1.0 };
    let spec = SynthSpec {
        n: 300,
        num_classes: 3,
        latent_dim: 3,
        views: vec![view(10, 0.4), view(80, 1.5), view(80, 1.5)],
        seed: 0,
    };
    let mut cfg = TrainConfig::default();
    cfg.loss.lambda1 = 0.001;
    cfg.loss.lambda2 = 0.1;
    (spec, cfg)
}

fn criteria_8_9() -> (Outcome, Outcome) {
    let (spec, cfg) = benchmark_setup();
    let ds = generate_synthetic(&spec).unwrap().normalize_columns();
    let split = SplitSpec {
        train_per_class: 5,
        val_per_class: 5,
        seed: 0,
    };
    let start = Instant::now();
    let report = experiment::run_benchmark(&ds, &split, &cfg, 10, true).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let full = report.full().summary.mean;
    let xs = Summary::of(&report.xstar);
    let mu = Summary::of(&report.multi);
    let rank = report.full_rank();
    let rows: Vec<String> = report
        .ablation
        .iter()
        .filter(|r| !r.flags.oracle)
        .map(|r| format!("{:.2}", 100.0 * r.summary.mean))
        .collect();
    let a = full >= xs.mean && full >= mu.mean - 0.005;
    let b = rank <= 2;
    let eight = outcome(
        a && b,
        format!(
            "RSGSLM {} vs GCN-X* {} and GCN-multi {}; full row rank {rank} of 8 (rows {}); {secs:.0}s",
            report.full().summary.percent(),
            xs.percent(),
            mu.percent(),
            rows.join(" ")
        ),
    );
    let oracle = report.oracle().unwrap().summary.mean;
    let gap = 100.0 * (oracle - full);
    let nine = outcome(
        gap <= 1.5,
        format!(
            "oracle pseudo {} vs learned {}: gap {gap:.2} points",
            report.oracle().unwrap().summary.percent(),
            report.full().summary.percent()
        ),
    );
    (eight, nine)
}

/// Seconds per epoch of the same GCN on `F_*` and on `X_*`.
fn epoch_times(spec: &SynthSpec) -> (f64, f64, usize, usize) {
    let ds = generate_synthetic(spec)
        .unwrap()
        .normalize_columns()
        .make_split(&SplitSpec::default())
        .unwrap();
    let mut cfg = TrainConfig {
        max_epochs: 100,
        patience: 100,
        ..TrainConfig::default()
    };
    cfg.loss.max_epochs = 100;
    let artifacts = experiment::build_artifacts(&ds, &cfg).unwrap();
    let f_star = gcn::concat_features(&artifacts.view_graphs).unwrap();
    let x_star = ds.concat_views();
    let operator = gcn::propagation_operator(&artifacts.fused, cfg.add_self_loops);
    let nodes = NodeSets::from_split(ds.split().unwrap());
    let y = ds.one_hot();
    let per_epoch = |features: &DMatrix<f64>| -> f64 {
        let problem = GcnProblem {
            features,
            operator: &operator,
            laplacian: &artifacts.fused.ops.l_norm,
            labels: &ds.labels,
            y: &y,
            nodes: &nodes,
            train_weights: &artifacts.weights.weight,
        };
        (0..3)
            .map(|_| {
                let t = Instant::now();
                let fit = fit_gcn(&problem, &cfg, 0).unwrap();
                t.elapsed().as_secs_f64() / fit.epochs_ran as f64
            })
            .fold(f64::INFINITY, f64::min)
    };
    (per_epoch(&f_star), per_epoch(&x_star), f_star.ncols(), x_star.ncols())
}

fn criterion_10() -> Outcome {
    // Scene-shaped: c = 8, V = 4, hidden width 28, Σ d_v = 40·c·V.
    let scene = SynthSpec::uniform(320, 8, &[512, 432, 288, 48], 0.5, 10);
    let (t_f, t_x, wf, wx) = epoch_times(&scene);
    let ratio = t_x / t_f;
    // Reported only: with c·V = 9 the hidden layer dominates the F_* epoch.
    let small = SynthSpec::uniform(300, 3, &[150, 150, 150], 0.5, 10);
    let (s_f, s_x, _, _) = epoch_times(&small);
    outcome(
        ratio >= 5.0,
        format!(
            "per epoch: F_* (width {wf}) {:.3} ms, X_* (width {wx}) {:.3} ms, speed-up {ratio:.1}x \
             [c=3, V=3, widths 9 vs 450: {:.1}x]",
            1e3 * t_f,
            1e3 * t_x,
            s_x / s_f
        ),
    )
}

const HANDWRITTEN_ENV: &str = "RSGSLM_HANDWRITTEN_DIR";

fn criterion_11() -> Option<Outcome> {
    let dir = std::env::var_os(HANDWRITTEN_ENV)?;
    let ds = match load_dataset(std::path::Path::new(&dir)) {
        Ok(ds) => ds.normalize_columns(),
        Err(e) => return Some(outcome(false, format!("could not load {}: {e}", dir.to_string_lossy()))),
    };
    let mut cfg = TrainConfig {
        hidden_dim: 34,
        learning_rate: 0.001,
        ..TrainConfig::default()
    };
    cfg.loss.lambda1 = 1e-9;
    cfg.loss.lambda2 = 1.0;
    cfg.renode.w_max = cfg.renode.w_min + 0.5;
    let split = SplitSpec {
        train_per_class: 5,
        val_per_class: 3,
        seed: 0,
    };
    let runs = experiment::run_repeated(&ds, &split, &cfg, 10, &[Method::Rsgslm]).unwrap();
    let s = runs[0].summary;
    Some(outcome(
        (100.0 * s.mean - 97.73).abs() <= 2.0,
        format!("Handwritten, 10 splits: {} (reference 97.73)", s.percent()),
    ))
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--nocapture`; listing and
    // filtering are not supported by this runner.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    let mut report = |id: &str, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} criterion {id}: {name}: {}", o.detail);
    };
    report("1", "schedule exactness", criterion_1());
    report("2", "gradient oracle", criterion_2());
    report("3", "solver monotonicity and feasibility", criterion_3());
    report("4", "per-row QP oracle", criterion_4());
    report("5", "PageRank oracle", criterion_5());
    report("6", "Totoro oracle", criterion_6());
    report("7", "ReNode mapping", criterion_7());
    let (eight, nine) = criteria_8_9();
    report("8", "end-to-end synthetic benchmark", eight);
    report("9", "oracle-pseudo gap", nine);
    report("10", "projected-feature speed-up", criterion_10());
    match criterion_11() {
        Some(o) => report("11", "Handwritten reference accuracy", o),
        None => println!("SKIP criterion 11: Handwritten reference accuracy: set {HANDWRITTEN_ENV} to run"),
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
