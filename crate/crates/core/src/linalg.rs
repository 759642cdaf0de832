//! Small dense linear-algebra helpers shared by `echelon` and `decomp`.
//!
//! Column sets are kept as `Vec<Vec<S>>` where the hot loops are column
//! oriented (elimination, Gram-Schmidt); nalgebra handles factorizations.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

pub(crate) fn norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt()
}

pub(crate) fn max_abs<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, &x| acc.max(x.abs()))
}

fn axpy<S: Scalar>(y: &mut [S], a: S, x: &[S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Columns whose
/// residual falls below `rel_tol` times their original norm are dropped.
pub(crate) fn orthonormalize<S: Scalar>(cols: &[Vec<S>], rel_tol: f64) -> Vec<Vec<S>> {
    let tol = S::lit(rel_tol);
    let mut out: Vec<Vec<S>> = Vec::with_capacity(cols.len());
    for c in cols {
        let original = norm(c);
        if original == S::zero() {
            continue;
        }
        let mut v = c.clone();
        for _ in 0..2 {
            for q in &out {
                let proj = crate::tensor::dot(q, &v);
                axpy(&mut v, -proj, q);
            }
        }
        let residual = norm(&v);
        if residual > tol * original {
            v.iter_mut().for_each(|x| *x /= residual);
            out.push(v);
        }
    }
    out
}

/// Spanning set of `{x ∈ span(cols) : x_r = 0 for r ∈ rows}` by elimination:
/// each constrained row is cleared using its largest remaining entry as
/// pivot, and the pivot column is dropped. Constrained rows are exact zeros
/// in the output. Rows that are already (numerically) zero cost nothing.
pub(crate) fn restrict_zero_rows<S: Scalar>(cols: &[Vec<S>], rows: &[usize]) -> Vec<Vec<S>> {
    let mut cols: Vec<Vec<S>> = cols.to_vec();
    let scale = cols
        .iter()
        .map(|c| max_abs(c))
        .fold(S::zero(), |a, b| a.max(b));
    let tol = S::lit(S::RANK_TOL) * scale;
    for &r in rows {
        let pivot = cols
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c[r].abs()))
            .fold(None, |best: Option<(usize, S)>, (j, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((j, v)),
            });
        match pivot {
            Some((j, v)) if v > tol => {
                let p = cols.swap_remove(j);
                for c in cols.iter_mut() {
                    let f = c[r] / p[r];
                    if f != S::zero() {
                        axpy(c, -f, &p);
                    }
                    c[r] = S::zero();
                }
            }
            _ => {
                for c in cols.iter_mut() {
                    c[r] = S::zero();
                }
            }
        }
    }
    cols
}

pub(crate) fn to_matrix<S: Scalar>(rows: usize, cols: &[Vec<S>]) -> DMatrix<S> {
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Singular values in decreasing order.
pub(crate) fn singular_values<S: Scalar>(m: &DMatrix<S>) -> Vec<S> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    // Tall matrices go through R of a QR first; the SVD then runs on a square
    // matrix of the column dimension.
    let sv = if m.nrows() > m.ncols() {
        m.clone().qr().r().singular_values()
    } else {
        m.singular_values()
    };
    let mut sv: Vec<S> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Leading `k` left singular vectors of a `rows × cols` matrix.
pub(crate) fn leading_left_singular_vectors<S: Scalar>(m: &DMatrix<S>, k: usize) -> DMatrix<S> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, order[j])])
}

/// Moore-Penrose pseudoinverse, truncating singular values below
/// `rel_tol · σ_max`.
pub(crate) fn pinv<S: Scalar>(m: &DMatrix<S>, rel_tol: f64) -> DMatrix<S> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(S::zero(), |a, &b| a.max(b));
    let cut = S::lit(rel_tol) * smax;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > S::zero() {
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

/// Unit vector minimizing `‖M v‖` (right singular vector of the smallest
/// singular value) and that singular value.
pub(crate) fn null_vector<S: Scalar>(m: &DMatrix<S>) -> (DVector<S>, S) {
    let n = m.ncols();
    // Pad to square so the SVD returns a full Vᵀ.
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested Vᵀ");
    let (k, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, S::max_value().unwrap()), |(bk, bs), (k, &s)| {
            if s < bs {
                (k, s)
            } else {
                (bk, bs)
            }
        });
    (vt.row(k).transpose(), s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormalize_drops_dependent_columns() {
        let cols: Vec<Vec<f64>> = vec![vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 1.0, 1.0]];
        let q = orthonormalize(&cols, 1e-10);
        assert_eq!(q.len(), 2);
        assert!(crate::tensor::dot(&q[0], &q[1]).abs() < 1e-14);
    }

    #[test]
    fn restriction_zeroes_rows() {
        let cols: Vec<Vec<f64>> = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]];
        let r = restrict_zero_rows(&cols, &[0, 1]);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0][0], 0.0);
        assert_eq!(r[0][1], 0.0);
        assert!(r[0][2].abs() > 0.5);
    }

    #[test]
    fn pinv_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let p = pinv(&m, 1e-12);
        let back = &m * &p * &m;
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn null_vector_of_singular_matrix() {
        let m = DMatrix::<f64>::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let (v, s) = null_vector(&m);
        assert!(s < 1e-14);
        assert!((v[2].abs() - 1.0).abs() < 1e-12);
    }
}
