//! Property tests for structural invariants across modules.

use nalgebra::DMatrix;
use proptest::prelude::*;

use rsgslm::dataset::{normalize_columns_in_place, stratified_split, Role, SplitSpec};
use rsgslm::fusion::normalized_operators;
use rsgslm::gcn::{self, GcnDims};
use rsgslm::linalg::row_softmax;
use rsgslm::objective::{schedule_wp, Schedule};
use rsgslm::renode::personalized_pagerank;
use rsgslm::view_graph::{step_graph, SolverConfig};

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

/// Nonnegative `n × n` matrix with a zero diagonal; some entries are exactly 0.
fn graph(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], n * n).prop_map(move |v| {
        let mut s = DMatrix::from_vec(n, n, v);
        s.fill_diagonal(0.0);
        s
    })
}

fn sized_graph() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..12).prop_flat_map(graph)
}

fn labels_with_counts() -> impl Strategy<Value = (Vec<usize>, usize, usize, usize, u64)> {
    (2usize..5, 1usize..4, 0usize..3, 0usize..4, any::<u64>()).prop_flat_map(|(c, tr, va, extra, seed)| {
        let per_class = tr + va + extra;
        prop::collection::vec(0..extra + 1, c).prop_map(move |more| {
            let mut labels = Vec::new();
            for (class, m) in more.iter().enumerate() {
                labels.extend(std::iter::repeat_n(class, per_class - extra + m));
            }
            (labels, c, tr, va, seed)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_stratified_partition((labels, c, tr, va, seed) in labels_with_counts()) {
        let spec = SplitSpec { train_per_class: tr, val_per_class: va, seed };
        let split = stratified_split(&labels, c, &spec).unwrap();
        prop_assert_eq!(split.len(), labels.len());
        let train = split.indices(Role::Train);
        let val = split.indices(Role::Val);
        let test = split.indices(Role::Test);
        prop_assert_eq!(train.len() + val.len() + test.len(), labels.len());
        for class in 0..c {
            prop_assert_eq!(train.iter().filter(|&&i| labels[i] == class).count(), tr);
            prop_assert_eq!(val.iter().filter(|&&i| labels[i] == class).count(), va);
        }
        let again = stratified_split(&labels, c, &spec).unwrap();
        prop_assert_eq!(split, again);
    }

    #[test]
    fn column_normalization_is_idempotent(x in (1usize..8, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c, -5.0, 5.0))) {
        let mut once = x.clone();
        normalize_columns_in_place(&mut once);
        let mut twice = once.clone();
        normalize_columns_in_place(&mut twice);
        for (a, b) in once.iter().zip(twice.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        for col in once.column_iter() {
            let norm = col.norm();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn graph_rows_lie_on_the_simplex(
        (x, f, gamma, eta) in (2usize..10).prop_flat_map(|n| (matrix(n, 3, -2.0, 2.0), matrix(n, 2, 0.0, 1.0), 1e-3..1.0f64, 0.0..10.0f64))
    ) {
        let cfg = SolverConfig { gamma, eta, ..SolverConfig::default() };
        let s = step_graph(&x, &f, &cfg).unwrap();
        for i in 0..s.nrows() {
            prop_assert_eq!(s[(i, i)], 0.0);
            prop_assert!((s.row(i).sum() - 1.0).abs() <= 1e-10);
            prop_assert!(s.row(i).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn normalized_adjacency_spectrum_is_in_unit_interval(s in sized_graph()) {
        let ops = normalized_operators(&s);
        let eig = ops.a_hat.clone().symmetric_eigen();
        for &lambda in eig.eigenvalues.iter() {
            prop_assert!((-1.0 - 1e-10..=1.0 + 1e-10).contains(&lambda), "eigenvalue {lambda}");
        }
        let l_eig = ops.l_norm.clone().symmetric_eigen();
        for &lambda in l_eig.eigenvalues.iter() {
            prop_assert!((-1e-10..=2.0 + 1e-10).contains(&lambda), "Laplacian eigenvalue {lambda}");
        }
    }

    #[test]
    fn pagerank_fixes_the_square_root_degree_vector((s, xi) in (sized_graph(), 0.05..0.95f64)) {
        let ops = normalized_operators(&s);
        let p = personalized_pagerank(&ops.a_hat, xi).unwrap();
        let v = DMatrix::from_iterator(ops.degrees.len(), 1, ops.degrees.iter().map(|d| d.sqrt()));
        let pv = &p * &v;
        for (a, b) in pv.iter().zip(v.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        prop_assert!(p.iter().all(|&x| x >= -1e-12));
        prop_assert!((&p - p.transpose()).amax() <= 1e-10);
    }

    #[test]
    fn softmax_ignores_row_shifts(
        (x, shifts) in (1usize..6, 2usize..5).prop_flat_map(|(r, c)| (matrix(r, c, -20.0, 20.0), prop::collection::vec(-50.0..50.0f64, r)))
    ) {
        let mut shifted = x.clone();
        for (i, mut row) in shifted.row_iter_mut().enumerate() {
            row.add_scalar_mut(shifts[i]);
        }
        let a = row_softmax(&x);
        let b = row_softmax(&shifted);
        prop_assert!((&a - &b).amax() <= 1e-12);
        for row in a.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn gcn_is_permutation_equivariant(
        (s, x, perm_seed, seed) in (3usize..9).prop_flat_map(|n| (graph(n), matrix(n, 4, -1.0, 1.0), any::<u64>(), any::<u64>()))
    ) {
        let n = s.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = perm_seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let operator = normalized_operators(&s).a_hat;
        let permuted_op = DMatrix::from_fn(n, n, |i, j| operator[(perm[i], perm[j])]);
        let permuted_x = DMatrix::from_fn(n, 4, |i, k| x[(perm[i], k)]);
        let params = gcn::init_params(seed, GcnDims { input: 4, hidden: 5, output: 3 });
        let z = gcn::forward(&params, &operator, &x).unwrap().z;
        let zp = gcn::forward(&params, &permuted_op, &permuted_x).unwrap().z;
        for i in 0..n {
            for k in 0..3 {
                prop_assert!((zp[(i, k)] - z[(perm[i], k)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pseudo_label_schedules_are_monotone(max_epochs in 1usize..3000) {
        for kind in Schedule::ALL {
            let cap = if kind == Schedule::Exponential { std::f64::consts::E - 1.0 } else { 1.0 };
            let mut prev = schedule_wp(1, max_epochs, kind).unwrap();
            prop_assert_eq!(prev, 0.0);
            for epoch in 2..=max_epochs {
                let w = schedule_wp(epoch, max_epochs, kind).unwrap();
                prop_assert!(w >= prev && w < cap, "{kind:?} at {epoch}: {prev} -> {w}");
                prev = w;
            }
        }
    }
}
