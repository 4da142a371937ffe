//! Dense singular values.

use ndarray::{Array2, ArrayView2};

use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;

/// Singular values of `matrix`, sorted in descending order.
///
/// One-sided (Hestenes) Jacobi orthogonalisation of the columns of the
/// taller orientation; returns `min(rows, cols)` values. Relative accuracy
/// is close to machine precision even for small singular values, which the
/// Gram-matrix route would lose.
pub fn singular_values<S: Scalar>(matrix: ArrayView2<'_, S>) -> Vec<S> {
    let (rows, cols) = matrix.dim();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    // columns stored contiguously: one Vec per column of the tall orientation
    let tall: Array2<S> = if rows >= cols {
        matrix.to_owned()
    } else {
        matrix.t().to_owned()
    };
    let (m, n) = tall.dim();
    let mut columns: Vec<Vec<S>> = (0..n).map(|j| tall.column(j).to_vec()).collect();
    let tol = S::epsilon() * S::lit(m as f64).sqrt();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&columns[p], &columns[q]);
                    let mut a = S::zero();
                    let mut b = S::zero();
                    let mut g = S::zero();
                    for i in 0..m {
                        a += cp[i] * cp[i];
                        b += cq[i] * cq[i];
                        g += cp[i] * cq[i];
                    }
                    (a, b, g)
                };
                if gamma == S::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = S::lit(2.0);
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (S::one() + zeta * zeta).sqrt());
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = c * t;
                let (left, right) = columns.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for i in 0..m {
                    let x = cp[i];
                    let y = cq[i];
                    cp[i] = c * x - s * y;
                    cq[i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut values: Vec<S> = columns
        .iter()
        .map(|col| col.iter().map(|&x| x * x).sum::<S>().sqrt())
        .collect();
    values.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    values
}

/// Sum of singular values.
pub fn nuclear_norm<S: Scalar>(matrix: ArrayView2<'_, S>) -> S {
    singular_values(matrix).into_iter().sum()
}
