//! Rank-one decomposition of order-3 tensors by simultaneous diagonalization,
//! grouping of higher-order tensors into order 3, and conditioning
//! diagnostics for factor matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::perturb::rng_from_seed;
use crate::scalar::Scalar;
use crate::tensor::{split_coordinates, ModePartition, Tensor, TensorError};

/// Default relative tolerance for eigenvalue collisions and imaginary parts.
pub const EIGEN_TOL: f64 = 1e-8;

/// Fresh probe pairs tried before a collision is reported.
const MAX_ATTEMPTS: usize = 5;

const HOPM_MAX_ITER: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("expected an order-{expected} tensor, found order {found}")]
    Order { expected: usize, found: usize },
    #[error("rank {m} exceeds capacity {capacity}")]
    RankOverflow { m: usize, capacity: usize },
    #[error("eigenvalues collide (relative gap {gap:.3e}) after {attempts} probe pairs")]
    Degenerate { gap: f64, attempts: usize },
    #[error("eigenvalue with relative imaginary part {0:.3e}")]
    ComplexEigenvalue(f64),
    #[error("eigen-solver did not converge")]
    NoConvergence,
    #[error("zero tensor has no rank-one factorization")]
    ZeroTensor,
    #[error("recovered term {term} is not rank-one within tolerance (residual {residual:.3e})")]
    NotRankOne { term: usize, residual: f64 },
    #[error("column {0} is zero")]
    ZeroColumn(usize),
    #[error("factor matrix: {0}")]
    Matrix(String),
}

pub type Result<T> = std::result::Result<T, DecompError>;

/// One term `a ⊗ b ⊗ c` with `‖a‖ = ‖b‖ = 1`; the magnitude lives on `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Term3<S> {
    pub a: Vec<S>,
    pub b: Vec<S>,
    pub c: Vec<S>,
    /// `‖(P − λI) a′‖` for the eigenpair this term came from.
    pub residual: S,
}

impl<S: Scalar> Term3<S> {
    pub fn to_tensor(&self) -> Tensor<S> {
        Tensor::outer(&[&self.a, &self.b, &self.c]).expect("nonempty factors")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DecompositionResult<S> {
    pub terms: Vec<Term3<S>>,
    /// `‖T − Σ terms‖_F`.
    pub residual: S,
}

fn gaussian_unit<S: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<S> {
    loop {
        let v: Vec<S> = (0..n).map(|_| S::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        let nv = linalg::norm(&v);
        if nv > S::zero() {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

/// Unit norm with the first coordinate above roundoff made positive.
fn canonicalize<S: Scalar>(v: &mut [S]) -> S {
    let nv = linalg::norm(v);
    if nv == S::zero() {
        return nv;
    }
    let cut = S::lit(1e-12) * linalg::max_abs(v);
    let sign = match v.iter().find(|x| x.abs() > cut) {
        Some(&x) if x < S::zero() => -S::one(),
        _ => S::one(),
    };
    v.iter_mut().for_each(|x| *x *= sign / nv);
    sign * nv
}

fn unfolding_matrix<S: Scalar>(t: &Tensor<S>, mode: usize) -> Result<DMatrix<S>> {
    let (rows, cols, data) = t.unfold(mode)?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn slice_matrix<S: Scalar>(t: &Tensor<S>, probe: &[S]) -> Result<DMatrix<S>> {
    let m = t.partial_apply(&[(2, probe)])?;
    let d = m.dims();
    Ok(DMatrix::from_row_slice(d[0], d[1], m.entries()))
}

/// Real eigenvalues of `p`, failing on non-negligible imaginary parts.
fn real_eigenvalues<S: Scalar>(p: &DMatrix<S>, tol: f64) -> Result<Vec<S>> {
    let schur = nalgebra::linalg::Schur::try_new(p.clone(), S::default_epsilon(), 10_000)
        .ok_or(DecompError::NoConvergence)?;
    let eig = schur.complex_eigenvalues();
    let scale = eig.iter().fold(S::zero(), |a, z| a.max(z.re.abs().max(z.im.abs())));
    let mut out = Vec::with_capacity(eig.len());
    for z in eig.iter() {
        let rel = if scale > S::zero() { z.im.abs() / scale } else { S::zero() };
        if rel > S::lit(tol) {
            return Err(DecompError::ComplexEigenvalue(rel.as_f64()));
        }
        out.push(z.re);
    }
    Ok(out)
}

fn relative_gap<S: Scalar>(values: &[S]) -> S {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let scale = sorted.iter().fold(S::zero(), |a, &b| a.max(b.abs()));
    if sorted.len() < 2 || scale == S::zero() {
        return if sorted.len() < 2 { S::one() } else { S::zero() };
    }
    sorted
        .windows(2)
        .map(|w| (w[1] - w[0]) / scale)
        .fold(S::max_value().unwrap(), |a, b| a.min(b))
}

/// Order-3 rank-`m` decomposition by simultaneous diagonalization.
///
/// Both leading modes are compressed to their top-`m` singular subspaces; the
/// slice ratio `M_x M_y⁺` of two random probe contractions of the third mode
/// then has the compressed `a`-factors as eigenvectors, and `M_xᵀ (M_yᵀ)⁺`
/// has the `b`-factors, with matching eigenvalues `⟨c, x⟩ / ⟨c, y⟩`. The
/// `c`-factors are fit by least squares. `tol` bounds relative eigenvalue gaps
/// and imaginary parts.
///
/// Several probe pairs are drawn and the candidate with the smallest residual
/// is kept, since eigenvector error grows as the eigenvalue gap shrinks.
pub fn jennrich<S: Scalar>(t3: &Tensor<S>, m: usize, seed: u64, tol: f64) -> Result<DecompositionResult<S>> {
    if t3.order() != 3 {
        return Err(DecompError::Order {
            expected: 3,
            found: t3.order(),
        });
    }
    let dims = t3.dims().to_vec();
    let (n1, n2, n3) = (dims[0], dims[1], dims[2]);
    let capacity = n1.min(n2);
    if m > capacity {
        return Err(DecompError::RankOverflow { m, capacity });
    }
    if m == 0 {
        return Ok(DecompositionResult {
            terms: Vec::new(),
            residual: t3.frobenius(),
        });
    }
    let ua = linalg::leading_left_singular_vectors(&unfolding_matrix(t3, 0)?, m);
    let ub = linalg::leading_left_singular_vectors(&unfolding_matrix(t3, 1)?, m);
    let mut rng = rng_from_seed(seed);

    let mut last_gap = S::zero();
    let mut best: Option<DecompositionResult<S>> = None;
    for _ in 0..MAX_ATTEMPTS {
        let x: Vec<S> = gaussian_unit(n3, &mut rng);
        let y: Vec<S> = gaussian_unit(n3, &mut rng);
        let mx = ua.transpose() * slice_matrix(t3, &x)? * &ub;
        let my = ua.transpose() * slice_matrix(t3, &y)? * &ub;
        let p = &mx * linalg::pinv(&my, S::PINV_TOL);
        let q = mx.transpose() * linalg::pinv(&my.transpose(), S::PINV_TOL);
        let lambdas = match real_eigenvalues(&p, tol) {
            Ok(l) => l,
            Err(_) if best.is_some() => continue,
            Err(e) => return Err(e),
        };
        last_gap = relative_gap(&lambdas);
        if last_gap < S::lit(tol) {
            continue;
        }

        let eye = DMatrix::<S>::identity(m, m);
        let mut a_cols = Vec::with_capacity(m);
        let mut b_cols = Vec::with_capacity(m);
        let mut eig_res = Vec::with_capacity(m);
        for &lambda in &lambdas {
            let (va, ra) = linalg::null_vector(&(&p - &eye * lambda));
            let (vb, _) = linalg::null_vector(&(&q - &eye * lambda));
            let mut a: Vec<S> = (&ua * va).iter().copied().collect();
            let mut b: Vec<S> = (&ub * vb).iter().copied().collect();
            canonicalize(&mut a);
            canonicalize(&mut b);
            a_cols.push(a);
            b_cols.push(b);
            eig_res.push(ra);
        }

        // c from the (n1·n2) × n3 unfolding against the Khatri-Rao product.
        let kr = DMatrix::from_fn(n1 * n2, m, |r, u| a_cols[u][r / n2] * b_cols[u][r % n2]);
        let t12 = DMatrix::from_row_slice(n1 * n2, n3, t3.entries());
        let ct = linalg::pinv(&kr, S::PINV_TOL) * t12;

        let mut recon = Tensor::zeros(dims.clone())?;
        let mut terms = Vec::with_capacity(m);
        for u in 0..m {
            let c: Vec<S> = ct.row(u).iter().copied().collect();
            let term = Term3 {
                a: a_cols[u].clone(),
                b: b_cols[u].clone(),
                c,
                residual: eig_res[u],
            };
            recon = recon.add_scaled(&term.to_tensor(), S::one())?;
            terms.push(term);
        }
        let residual = t3.add_scaled(&recon, -S::one())?.frobenius();
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(DecompositionResult { terms, residual });
        }
    }
    best.ok_or(DecompError::Degenerate {
        gap: last_gap.as_f64(),
        attempts: MAX_ATTEMPTS,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingScheme {
    /// `⌈(ℓ−1)/2⌉` modes, `⌊(ℓ−1)/2⌋` modes, then the last mode.
    Halves,
    /// Three contiguous groups whose sizes differ by at most one.
    EqualThirds,
}

/// Group sizes used by `scheme` for an order-`order` tensor.
pub fn grouping_sizes(order: usize, scheme: GroupingScheme) -> Result<Vec<usize>> {
    if order < 3 {
        return Err(DecompError::Order {
            expected: 3,
            found: order,
        });
    }
    Ok(match scheme {
        GroupingScheme::Halves => vec![order / 2, (order - 1) / 2, 1],
        GroupingScheme::EqualThirds => split_coordinates(order, 3)?.iter().map(Vec::len).collect(),
    })
}

pub fn group_for_jennrich<S: Scalar>(t: &Tensor<S>, scheme: GroupingScheme) -> Result<Tensor<S>> {
    let sizes = grouping_sizes(t.order(), scheme)?;
    Ok(t.group(&ModePartition::from_sizes(&sizes)?)?)
}

/// Best rank-one approximation `scale · v_1 ⊗ … ⊗ v_k` with unit factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RankOneFit<S> {
    pub factors: Vec<Vec<S>>,
    pub scale: S,
    /// `‖R − scale·⊗v‖_F / ‖R‖_F`.
    pub residual: S,
}

/// Higher-order power iteration started from the dominant singular vectors
/// of each unfolding, run until the scale changes by less than `tol`
/// (relative). Factors are unit vectors with their first significant
/// coordinate positive; the sign goes on the scale.
pub fn factor_rank_one<S: Scalar>(r: &Tensor<S>, tol: f64) -> Result<RankOneFit<S>> {
    let norm = r.frobenius();
    if norm == S::zero() {
        return Err(DecompError::ZeroTensor);
    }
    let order = r.order();
    let mut factors: Vec<Vec<S>> = (0..order)
        .map(|k| {
            let u = linalg::leading_left_singular_vectors(&unfolding_matrix(r, k)?, 1);
            Ok(u.column(0).iter().copied().collect())
        })
        .collect::<Result<_>>()?;

    let mut scale = r.multilinear_eval(&factors)?;
    if order > 1 {
        for _ in 0..HOPM_MAX_ITER {
            for k in 0..order {
                let assignments: Vec<(usize, &[S])> = (0..order)
                    .filter(|&j| j != k)
                    .map(|j| (j, factors[j].as_slice()))
                    .collect();
                let v = r.partial_apply(&assignments)?.into_entries();
                let nv = linalg::norm(&v);
                if nv == S::zero() {
                    break;
                }
                factors[k] = v.into_iter().map(|x| x / nv).collect();
            }
            let next = r.multilinear_eval(&factors)?;
            let converged = (next.abs() - scale.abs()).abs() <= S::lit(tol) * norm;
            scale = next;
            if converged {
                break;
            }
        }
    }
    for f in factors.iter_mut() {
        let s = canonicalize(f);
        scale *= s.signum();
    }
    let fit = Tensor::outer(&factors)?.scaled(scale);
    let residual = r.add_scaled(&fit, -S::one())?.frobenius() / norm;
    Ok(RankOneFit {
        factors,
        scale,
        residual,
    })
}

/// Rank-one order-`ℓ` term `weight · v_1 ⊗ … ⊗ v_ℓ` with unit factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RankOneTerm<S> {
    pub factors: Vec<Vec<S>>,
    pub weight: S,
}

impl<S: Scalar> RankOneTerm<S> {
    pub fn to_tensor(&self) -> Tensor<S> {
        Tensor::outer(&self.factors)
            .expect("nonempty factors")
            .scaled(self.weight)
    }
}

/// Groups `t` into order 3, decomposes with [`jennrich`], and splits each
/// grouped factor back into its modes. A grouped factor whose rank-one fit
/// has relative residual above `tol` is an error.
pub fn recover_rank_one_terms<S: Scalar>(
    t: &Tensor<S>,
    m: usize,
    scheme: GroupingScheme,
    seed: u64,
    tol: f64,
) -> Result<Vec<RankOneTerm<S>>> {
    let sizes = grouping_sizes(t.order(), scheme)?;
    let grouped = group_for_jennrich(t, scheme)?;
    let result = jennrich(&grouped, m, seed, EIGEN_TOL)?;
    let mut group_dims = Vec::with_capacity(3);
    let mut start = 0;
    for &s in &sizes {
        group_dims.push(t.dims()[start..start + s].to_vec());
        start += s;
    }
    result
        .terms
        .into_iter()
        .enumerate()
        .map(|(u, term)| {
            let mut factors = Vec::with_capacity(t.order());
            let mut weight = S::one();
            for (part, dims) in [term.a, term.b, term.c].into_iter().zip(&group_dims) {
                if dims.len() == 1 {
                    let mut v = part;
                    let s = canonicalize(&mut v);
                    if s == S::zero() {
                        return Ok(RankOneTerm {
                            factors: group_dims.iter().flatten().map(|&n| vec![S::zero(); n]).collect(),
                            weight: S::zero(),
                        });
                    }
                    weight *= s;
                    factors.push(v);
                    continue;
                }
                let piece = Tensor::new(dims.clone(), part)?;
                let fit = factor_rank_one(&piece, S::RANK_TOL)?;
                if fit.residual > S::lit(tol) {
                    return Err(DecompError::NotRankOne {
                        term: u,
                        residual: fit.residual.as_f64(),
                    });
                }
                weight *= fit.scale;
                factors.extend(fit.factors);
            }
            Ok(RankOneTerm { factors, weight })
        })
        .collect()
}

/// Matrix given by its columns, e.g. flattened rank-one factors `a(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FactorMatrix<S> {
    pub rows: usize,
    pub columns: Vec<Vec<S>>,
}

impl<S: Scalar> FactorMatrix<S> {
    pub fn new(rows: usize, columns: Vec<Vec<S>>) -> Result<Self> {
        if columns.is_empty() || rows == 0 {
            return Err(DecompError::Matrix("matrix is empty".into()));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != rows) {
            return Err(DecompError::Matrix(format!(
                "column of length {} in a matrix with {rows} rows",
                c.len()
            )));
        }
        if columns.iter().flatten().any(|x| !x.is_finite()) {
            return Err(DecompError::Matrix("non-finite entry".into()));
        }
        Ok(FactorMatrix { rows, columns })
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn to_matrix(&self) -> DMatrix<S> {
        linalg::to_matrix(self.rows, &self.columns)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `σ_max / σ_min`; infinite when `σ_min = 0`.
    pub kappa: f64,
    pub leave_one_out: f64,
    /// Smallest distance between normalized `c`-columns, when supplied.
    pub tau: Option<f64>,
    /// Largest Euclidean column norm.
    pub c_max: f64,
}

/// Singular values, leave-one-out distance and related diagnostics.
///
/// With `A = QR`, the distance from column `j` to the span of the others is
/// `1 / ‖row_j(R⁻¹)‖`, so one triangular inverse gives every column's
/// distance. Matrices with more columns than rows, or a numerically singular
/// `R`, have leave-one-out distance 0.
pub fn condition_report<S: Scalar>(a: &FactorMatrix<S>, c_cols: Option<&FactorMatrix<S>>) -> Result<ConditionReport> {
    if let Some(j) = a.columns.iter().position(|c| c.iter().all(|&x| x == S::zero())) {
        return Err(DecompError::ZeroColumn(j));
    }
    let m = a.m();
    let mat = a.to_matrix();
    let c_max = a
        .columns
        .iter()
        .map(|c| linalg::norm(c))
        .fold(S::zero(), |x, y| x.max(y));

    let (sv, loo) = if a.rows >= m {
        let r = mat.qr().r();
        let sv = linalg::singular_values(&r);
        let smin = *sv.last().expect("nonempty");
        let loo = if smin > S::lit(S::RANK_TOL) * sv[0] {
            let eye = DMatrix::<S>::identity(m, m);
            match r.solve_upper_triangular(&eye) {
                Some(rinv) => (0..m)
                    .map(|j| S::one() / rinv.row(j).norm())
                    .fold(S::max_value().unwrap(), |x, y| x.min(y)),
                None => S::zero(),
            }
        } else {
            S::zero()
        };
        (sv, loo)
    } else {
        let mut sv = linalg::singular_values(&mat);
        sv.resize(m, S::zero());
        (sv, S::zero())
    };
    let sigma_max = sv[0].as_f64();
    let sigma_min = sv[m - 1].as_f64();

    let tau = match c_cols {
        None => None,
        Some(c) => {
            if let Some(j) = c.columns.iter().position(|v| v.iter().all(|&x| x == S::zero())) {
                return Err(DecompError::ZeroColumn(j));
            }
            let unit: Vec<DVector<S>> = c
                .columns
                .iter()
                .map(|v| DVector::from_column_slice(v).normalize())
                .collect();
            let mut best: Option<f64> = None;
            for i in 0..unit.len() {
                for j in i + 1..unit.len() {
                    let d = (&unit[i] - &unit[j]).norm().as_f64();
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
            best
        }
    };

    Ok(ConditionReport {
        sigma_min,
        sigma_max,
        kappa: if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY },
        leave_one_out: loo.as_f64(),
        tau,
        c_max: c_max.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::rng_from_seed;

    fn e(n: usize, i: usize) -> Vec<f64> {
        crate::tensor::basis_vector(n, i)
    }

    fn gaussian(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn diagonal_tensor() {
        let t = Tensor::outer(&[e(3, 0), e(3, 0), e(3, 0)])
            .unwrap()
            .add_scaled(&Tensor::outer(&[e(3, 1), e(3, 1), e(3, 1)]).unwrap(), 2.0)
            .unwrap();
        let r = jennrich(&t, 2, 7, EIGEN_TOL).unwrap();
        assert!(r.residual < 1e-12);
        let mut weights: Vec<(usize, f64)> = r
            .terms
            .iter()
            .map(|term| {
                let i = term.a.iter().position(|x| x.abs() > 0.5).unwrap();
                assert!((term.a[i] - 1.0).abs() < 1e-12);
                assert!((term.b[i] - 1.0).abs() < 1e-12);
                (i, term.c[i])
            })
            .collect();
        weights.sort_by_key(|w| w.0);
        assert!((weights[0].1 - 1.0).abs() < 1e-12 && (weights[1].1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_roundtrip() {
        let mut rng = rng_from_seed(1);
        let (u, v, w) = (gaussian(4, &mut rng), gaussian(5, &mut rng), gaussian(3, &mut rng));
        let t = Tensor::outer(&[&u, &v, &w]).unwrap();
        let r = jennrich(&t, 1, 0, EIGEN_TOL).unwrap();
        assert!(r.residual <= 1e-8);
        let cos = crate::tensor::dot(&r.terms[0].a, &u) / linalg::norm(&u);
        assert!((cos.abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rank_overflow_and_order() {
        let t = Tensor::<f64>::zeros(vec![2, 3, 4]).unwrap();
        assert_eq!(
            jennrich(&t, 3, 0, EIGEN_TOL),
            Err(DecompError::RankOverflow { m: 3, capacity: 2 })
        );
        let t2 = Tensor::<f64>::zeros(vec![2, 3]).unwrap();
        assert!(matches!(jennrich(&t2, 1, 0, EIGEN_TOL), Err(DecompError::Order { .. })));
    }

    #[test]
    fn repeated_eigenvalues_are_degenerate() {
        // Parallel c-columns make every eigenvalue ratio equal.
        let c = vec![1.0, 2.0];
        let t = Tensor::outer(&[e(2, 0), e(2, 0), c.clone()])
            .unwrap()
            .add_scaled(&Tensor::outer(&[e(2, 1), e(2, 1), c]).unwrap(), 1.0)
            .unwrap();
        assert!(matches!(jennrich(&t, 2, 0, EIGEN_TOL), Err(DecompError::Degenerate { .. })));
    }

    #[test]
    fn scaling_c_scales_recovered_c() {
        let mut rng = rng_from_seed(3);
        let fac: Vec<[Vec<f64>; 3]> = (0..3)
            .map(|_| [gaussian(5, &mut rng), gaussian(5, &mut rng), gaussian(5, &mut rng)])
            .collect();
        let build = |s: f64| {
            let mut t = Tensor::zeros(vec![5, 5, 5]).unwrap();
            for (k, f) in fac.iter().enumerate() {
                let w = if k == 0 { s } else { 1.0 };
                t = t.add_scaled(&Tensor::outer(f).unwrap(), w).unwrap();
            }
            t
        };
        let r1 = jennrich(&build(1.0), 3, 11, EIGEN_TOL).unwrap();
        let r2 = jennrich(&build(3.0), 3, 11, EIGEN_TOL).unwrap();
        let find = |r: &DecompositionResult<f64>| {
            r.terms
                .iter()
                .max_by(|x, y| {
                    let cx = crate::tensor::dot(&x.a, &fac[0][0]).abs();
                    let cy = crate::tensor::dot(&y.a, &fac[0][0]).abs();
                    cx.partial_cmp(&cy).unwrap()
                })
                .unwrap()
                .clone()
        };
        let (t1, t2) = (find(&r1), find(&r2));
        for (x, y) in t1.a.iter().zip(&t2.a) {
            assert!((x - y).abs() < 1e-8);
        }
        for (x, y) in t1.c.iter().zip(&t2.c) {
            assert!((3.0 * x - y).abs() < 1e-8 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn grouping_schemes() {
        assert_eq!(grouping_sizes(3, GroupingScheme::Halves).unwrap(), vec![1, 1, 1]);
        assert_eq!(grouping_sizes(4, GroupingScheme::Halves).unwrap(), vec![2, 1, 1]);
        assert_eq!(grouping_sizes(5, GroupingScheme::Halves).unwrap(), vec![2, 2, 1]);
        assert_eq!(grouping_sizes(6, GroupingScheme::EqualThirds).unwrap(), vec![2, 2, 2]);
        assert!(grouping_sizes(2, GroupingScheme::Halves).is_err());
        let t = Tensor::<f64>::zeros(vec![2; 5]).unwrap();
        assert_eq!(group_for_jennrich(&t, GroupingScheme::Halves).unwrap().dims(), &[4, 4, 2]);
    }

    #[test]
    fn rank_one_fit_examples() {
        let mut rng = rng_from_seed(4);
        let (u, v, w) = (gaussian(3, &mut rng), gaussian(4, &mut rng), gaussian(2, &mut rng));
        let fit = factor_rank_one(&Tensor::outer(&[&u, &v, &w]).unwrap(), 1e-12).unwrap();
        assert!(fit.residual <= 1e-10);
        let cos = crate::tensor::dot(&fit.factors[1], &v) / linalg::norm(&v);
        assert!((cos.abs() - 1.0).abs() < 1e-10);

        let id = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let fit = factor_rank_one(&id, 1e-12).unwrap();
        assert!((fit.residual - 0.5f64.sqrt()).abs() < 1e-10);
        assert!((fit.scale - 1.0).abs() < 1e-10);

        let zero = Tensor::<f64>::zeros(vec![2, 2]).unwrap();
        assert_eq!(factor_rank_one(&zero, 1e-12), Err(DecompError::ZeroTensor));
    }

    #[test]
    fn order4_binary_recovery() {
        let mut rng = rng_from_seed(12);
        let n = 4;
        let truth: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect())
            .filter(|v: &Vec<f64>| v.iter().any(|&x| x > 0.0))
            .collect();
        let mut t = Tensor::zeros(vec![n; 4]).unwrap();
        for chi in &truth {
            t = t.add_scaled(&Tensor::outer(&[chi, chi, chi, chi]).unwrap(), 1.0).unwrap();
        }
        let terms = recover_rank_one_terms(&t, truth.len(), GroupingScheme::Halves, 5, 1e-8).unwrap();
        let mut recon = Tensor::zeros(vec![n; 4]).unwrap();
        for term in &terms {
            recon = recon.add_scaled(&term.to_tensor(), 1.0).unwrap();
        }
        assert!(t.add_scaled(&recon, -1.0).unwrap().frobenius() < 1e-8);
    }

    #[test]
    fn recovery_over_capacity_is_an_error() {
        let t = Tensor::<f64>::zeros(vec![3, 3, 3]).unwrap();
        assert!(matches!(
            recover_rank_one_terms(&t, 4, GroupingScheme::Halves, 0, 1e-8),
            Err(DecompError::RankOverflow { .. })
        ));
    }

    #[test]
    fn condition_examples() {
        let id = FactorMatrix::new(3, (0..3).map(|i| e(3, i)).collect()).unwrap();
        let r = condition_report(&id, None).unwrap();
        for v in [r.sigma_min, r.sigma_max, r.leave_one_out, r.kappa] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let eps = 1e-3;
        let a = FactorMatrix::new(2, vec![vec![1.0, 1.0], vec![0.0, eps]]).unwrap();
        let r = condition_report(&a, None).unwrap();
        assert!((r.leave_one_out - eps / 2f64.sqrt()).abs() < 1e-12);

        let z = FactorMatrix::new(2, vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(condition_report(&z, None), Err(DecompError::ZeroColumn(1)));

        let c = FactorMatrix::new(2, vec![vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let r = condition_report(&id, Some(&c)).unwrap();
        assert!((r.tau.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wide_matrix_has_zero_leave_one_out() {
        let a = FactorMatrix::new(2, vec![e(2, 0), e(2, 1), vec![1.0, 1.0]]).unwrap();
        let r = condition_report(&a, None).unwrap();
        assert_eq!(r.leave_one_out, 0.0);
        assert_eq!(r.sigma_min, 0.0);
    }
}
