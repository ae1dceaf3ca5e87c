//! Small dense helpers shared by the solver, the fusion step and the GCN.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// `(S + Sᵀ) / 2`.
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// Squared Euclidean distances between all rows, via the Gram matrix.
pub fn pairwise_sq_dists(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let gram = x * x.transpose();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0)
        }
    })
}

/// Squared distances computed row by row; exact up to summation order.
/// Cheaper than the Gram route when the row width is small.
pub fn pairwise_sq_dists_direct(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for k in 0..x.ncols() {
                let d = x[(i, k)] - x[(j, k)];
                acc += d * d;
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

/// Mean of each column, as a length-`ncols` vector.
pub fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows().max(1) as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}

/// `Tr(Xᵀ L X)` without forming the `d × d` product.
pub fn trace_quadratic(x: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    let lx = l * x;
    x.component_mul(&lx).sum()
}

/// Row-wise softmax with max subtraction.
pub fn row_softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = logits.clone();
    for mut row in z.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    z
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numeric(format!("{what}: system matrix is not positive definite")))?;
    Ok(chol.solve(b))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Concatenates matrices with equal row counts side by side.
pub fn hconcat(blocks: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let Some(first) = blocks.first() else {
        return Err(Error::Dimension("nothing to concatenate".into()));
    };
    let n = first.nrows();
    if let Some(bad) = blocks.iter().position(|b| b.nrows() != n) {
        return Err(Error::Dimension(format!(
            "block {bad} has {} rows, expected {n}",
            blocks[bad].nrows()
        )));
    }
    let width: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, width);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((0, offset), (n, b.ncols())).copy_from(*b);
        offset += b.ncols();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_and_direct_distances_agree() {
        let x = DMatrix::from_fn(7, 4, |i, j| ((i * 3 + j * 5) % 11) as f64 / 7.0 - 0.4);
        let a = pairwise_sq_dists(&x);
        let b = pairwise_sq_dists_direct(&x);
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_are_shift_invariant() {
        let logits = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -700.0, 0.0, 700.0]);
        let z = row_softmax(&logits);
        for row in z.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let shifted = row_softmax(&logits.map(|v| v + 42.0));
        assert!((z - shifted).amax() < 1e-12);
    }

    #[test]
    fn hconcat_layout() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 5.0, 6.0]);
        let c = hconcat(&[&a, &b]).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 3, &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]));
        let bad = DMatrix::<f64>::zeros(3, 1);
        assert!(hconcat(&[&a, &bad]).is_err());
    }
}
