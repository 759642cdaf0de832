//! Dense tensors over `ℝ^{n_1} ⊗ … ⊗ ℝ^{n_ℓ}` stored in row-major order.
//!
//! A tensor doubles as a multilinear map: `T(v_1, …, v_ℓ) = ⟨T, v_1 ⊗ … ⊗ v_ℓ⟩`.
//! Mode grouping fuses adjacent modes with row-major index fusion, so a grouped
//! tensor shares its entry buffer with the original.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("empty list of factor vectors")]
    EmptyFactorList,
    #[error("factor {0} is empty")]
    EmptyFactor(usize),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("expected {expected} vectors, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("mode {mode} has dimension {expected}, vector has length {found}")]
    DimensionMismatch { mode: usize, expected: usize, found: usize },
    #[error("mode {0} is out of range")]
    ModeOutOfRange(usize),
    #[error("mode {0} assigned twice")]
    DuplicateMode(usize),
    #[error("every mode is assigned; use multilinear_eval")]
    AllModesAssigned,
    #[error("invalid mode partition: {0}")]
    InvalidPartition(String),
    #[error("coordinate {index} out of range for mode {mode} of size {size}")]
    CoordinateOutOfRange { mode: usize, index: usize, size: usize },
    #[error("index set for mode {0} is empty")]
    EmptyIndexSet(usize),
    #[error("tensor entries must be finite")]
    NonFinite,
    #[error("cannot split {n} coordinates into {parts} nonempty parts")]
    TooFewCoordinates { n: usize, parts: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Mode sizes `(n_1, …, n_ℓ)`; at least one mode, every size positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(TensorError::InvalidShape("order must be at least 1".into()));
        }
        if let Some(mode) = dims.iter().position(|&d| d == 0) {
            return Err(TensorError::InvalidShape(format!("mode {mode} has size 0")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorError::InvalidShape("entry count overflows usize".into()))?;
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// Total number of entries.
    pub fn size(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides (last index fastest).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for k in (0..self.0.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.0[k + 1];
        }
        strides
    }

    /// Flat offset of a full multi-index (0-based).
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.0.len());
        index
            .iter()
            .zip(&self.0)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Inverse of [`Shape::offset`].
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.0.len()];
        for k in (0..self.0.len()).rev() {
            index[k] = flat % self.0[k];
            flat /= self.0[k];
        }
        index
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = TensorError;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(shape: Shape) -> Self {
        shape.0
    }
}

/// Ordered, contiguous, covering runs of mode positions (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModePartition {
    groups: Vec<Range<usize>>,
}

impl ModePartition {
    /// Builds a partition from explicit groups of mode positions. Each group
    /// must be a run of consecutive modes and the runs must cover `0..order`
    /// in order.
    pub fn new(order: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let mut next = 0;
        let mut runs = Vec::with_capacity(groups.len());
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(TensorError::InvalidPartition(format!("group {g} is empty")));
            }
            for (k, &mode) in group.iter().enumerate() {
                if mode != next + k {
                    return Err(TensorError::InvalidPartition(format!(
                        "group {g} is not the contiguous run starting at mode {next}"
                    )));
                }
            }
            runs.push(next..next + group.len());
            next += group.len();
        }
        if next != order {
            return Err(TensorError::InvalidPartition(format!(
                "groups cover {next} of {order} modes"
            )));
        }
        Ok(ModePartition { groups: runs })
    }

    /// Consecutive groups with the given sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let mut groups = Vec::with_capacity(sizes.len());
        for (g, &s) in sizes.iter().enumerate() {
            if s == 0 {
                return Err(TensorError::InvalidPartition(format!("group {g} is empty")));
            }
            groups.push(start..start + s);
            start += s;
        }
        if groups.is_empty() {
            return Err(TensorError::InvalidPartition("no groups".into()));
        }
        Ok(ModePartition { groups })
    }

    pub fn singletons(order: usize) -> Self {
        ModePartition {
            groups: (0..order).map(|k| k..k + 1).collect(),
        }
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn order(&self) -> usize {
        self.groups.last().map_or(0, |g| g.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Frobenius,
    MaxAbs,
}

/// Dense real tensor. Immutable once built; all operations return new values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "TensorRepr<S>",
    into = "TensorRepr<S>",
    bound = "S: Scalar"
)]
pub struct Tensor<S> {
    shape: Shape,
    entries: Vec<S>,
}

/// On-disk form: `{"dims": [...], "entries": [... row-major ...]}`.
#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct TensorRepr<S> {
    dims: Vec<usize>,
    entries: Vec<S>,
}

impl<S: Scalar> TryFrom<TensorRepr<S>> for Tensor<S> {
    type Error = TensorError;
    fn try_from(repr: TensorRepr<S>) -> Result<Self> {
        Tensor::new(repr.dims, repr.entries)
    }
}

impl<S: Scalar> From<Tensor<S>> for TensorRepr<S> {
    fn from(t: Tensor<S>) -> Self {
        TensorRepr {
            dims: t.shape.into(),
            entries: t.entries,
        }
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn new(dims: Vec<usize>, entries: Vec<S>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if entries.len() != shape.size() {
            return Err(TensorError::InvalidShape(format!(
                "{} entries for shape {:?}",
                entries.len(),
                shape.dims()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite);
        }
        Ok(Tensor { shape, entries })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let entries = vec![S::zero(); shape.size()];
        Ok(Tensor { shape, entries })
    }

    /// Builds a tensor by evaluating `f` at every 0-based multi-index.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> S) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let entries = (0..shape.size()).map(|k| f(&shape.unravel(k))).collect();
        Tensor::new(shape.into(), entries)
    }

    pub(crate) fn from_parts_unchecked(shape: Shape, entries: Vec<S>) -> Self {
        debug_assert_eq!(shape.size(), entries.len());
        Tensor { shape, entries }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[S] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<S> {
        self.entries
    }

    /// Entry `T(e_I)` at a 0-based multi-index.
    pub fn get(&self, index: &[usize]) -> S {
        self.entries[self.shape.offset(index)]
    }

    /// `v_1 ⊗ … ⊗ v_k`.
    pub fn outer<V: AsRef<[S]>>(vectors: &[V]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(TensorError::EmptyFactorList);
        }
        let dims: Vec<usize> = vectors.iter().map(|v| v.as_ref().len()).collect();
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(TensorError::EmptyFactor(k));
        }
        let shape = Shape::new(dims)?;
        let mut entries = vec![S::one()];
        for v in vectors {
            let v = v.as_ref();
            let mut next = Vec::with_capacity(entries.len() * v.len());
            for &a in &entries {
                next.extend(v.iter().map(|&b| a * b));
            }
            entries = next;
        }
        Tensor::new(shape.into(), entries)
    }

    /// Reinterprets the entry buffer under another shape of equal size.
    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.size() != self.len() {
            return Err(TensorError::InvalidShape(format!(
                "cannot reshape {:?} into {:?}",
                self.dims(),
                shape.dims()
            )));
        }
        Ok(Tensor {
            shape,
            entries: self.entries.clone(),
        })
    }

    fn check_vector(&self, mode: usize, v: &[S]) -> Result<()> {
        let expected = self.dims()[mode];
        if v.len() != expected {
            return Err(TensorError::DimensionMismatch {
                mode,
                expected,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `T(v_1, …, v_ℓ)`.
    pub fn multilinear_eval<V: AsRef<[S]>>(&self, vectors: &[V]) -> Result<S> {
        if vectors.len() != self.order() {
            return Err(TensorError::ArityMismatch {
                expected: self.order(),
                found: vectors.len(),
            });
        }
        for (mode, v) in vectors.iter().enumerate() {
            self.check_vector(mode, v.as_ref())?;
        }
        let mut dims = self.dims().to_vec();
        let mut data = self.entries.clone();
        for mode in (0..vectors.len()).rev() {
            data = contract_mode(&dims, &data, mode, vectors[mode].as_ref());
            dims.pop();
        }
        Ok(data[0])
    }

    /// `T(…, v_k, …)` with the listed modes filled in; the remaining modes keep
    /// their original order.
    pub fn partial_apply(&self, assignments: &[(usize, &[S])]) -> Result<Self> {
        let mut assigned = vec![None; self.order()];
        for &(mode, v) in assignments {
            if mode >= self.order() {
                return Err(TensorError::ModeOutOfRange(mode));
            }
            if assigned[mode].is_some() {
                return Err(TensorError::DuplicateMode(mode));
            }
            self.check_vector(mode, v)?;
            assigned[mode] = Some(v);
        }
        if assigned.iter().all(Option::is_some) {
            return Err(TensorError::AllModesAssigned);
        }
        let mut dims = self.dims().to_vec();
        let mut data = self.entries.clone();
        // Contract from the highest mode down so lower positions stay valid.
        for mode in (0..self.order()).rev() {
            if let Some(v) = assigned[mode] {
                data = contract_mode(&dims, &data, mode, v);
                dims.remove(mode);
            }
        }
        Ok(Tensor::from_parts_unchecked(Shape(dims), data))
    }

    /// Fuses each group of adjacent modes into one mode. No arithmetic is
    /// performed; row-major order makes the entry buffer identical.
    pub fn group(&self, partition: &ModePartition) -> Result<Self> {
        if partition.order() != self.order() {
            return Err(TensorError::InvalidPartition(format!(
                "partition covers {} modes, tensor has {}",
                partition.order(),
                self.order()
            )));
        }
        let dims = partition
            .groups()
            .iter()
            .map(|g| self.dims()[g.clone()].iter().product())
            .collect();
        Ok(Tensor::from_parts_unchecked(Shape(dims), self.entries.clone()))
    }

    /// Subtensor over `I_1 × … × I_ℓ`, preserving the order within each set.
    pub fn extract_subtensor(&self, index_sets: &[Vec<usize>]) -> Result<Self> {
        if index_sets.len() != self.order() {
            return Err(TensorError::ArityMismatch {
                expected: self.order(),
                found: index_sets.len(),
            });
        }
        for (mode, set) in index_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(TensorError::EmptyIndexSet(mode));
            }
            let size = self.dims()[mode];
            if let Some(&index) = set.iter().find(|&&i| i >= size) {
                return Err(TensorError::CoordinateOutOfRange { mode, index, size });
            }
        }
        let shape = Shape(index_sets.iter().map(Vec::len).collect());
        let strides = self.shape.strides();
        let mut entries = Vec::with_capacity(shape.size());
        let mut index = vec![0usize; shape.order()];
        'outer: loop {
            let offset: usize = index
                .iter()
                .enumerate()
                .map(|(k, &i)| index_sets[k][i] * strides[k])
                .sum();
            entries.push(self.entries[offset]);
            for k in (0..index.len()).rev() {
                index[k] += 1;
                if index[k] < shape.dims()[k] {
                    continue 'outer;
                }
                index[k] = 0;
            }
            break;
        }
        Ok(Tensor::from_parts_unchecked(shape, entries))
    }

    pub fn norm(&self, kind: NormKind) -> S {
        match kind {
            NormKind::Frobenius => self
                .entries
                .iter()
                .fold(S::zero(), |acc, &x| acc + x * x)
                .sqrt(),
            NormKind::MaxAbs => self
                .entries
                .iter()
                .fold(S::zero(), |acc, &x| acc.max(x.abs())),
        }
    }

    pub fn frobenius(&self) -> S {
        self.norm(NormKind::Frobenius)
    }

    pub fn max_abs(&self) -> S {
        self.norm(NormKind::MaxAbs)
    }

    pub fn scaled(&self, s: S) -> Self {
        Tensor::from_parts_unchecked(
            self.shape.clone(),
            self.entries.iter().map(|&x| x * s).collect(),
        )
    }

    /// `self + s · other`; shapes must agree.
    pub fn add_scaled(&self, other: &Tensor<S>, s: S) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(TensorError::InvalidShape(format!(
                "shape {:?} does not match {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| a + s * b)
            .collect();
        Ok(Tensor::from_parts_unchecked(self.shape.clone(), entries))
    }

    pub fn inner(&self, other: &Tensor<S>) -> Result<S> {
        if self.len() != other.len() {
            return Err(TensorError::InvalidShape(format!(
                "shape {:?} does not match {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .fold(S::zero(), |acc, (&a, &b)| acc + a * b))
    }

    /// Mode-`k` unfolding as a row-major `n_k × (Π_{j≠k} n_j)` buffer.
    pub fn unfold(&self, mode: usize) -> Result<(usize, usize, Vec<S>)> {
        if mode >= self.order() {
            return Err(TensorError::ModeOutOfRange(mode));
        }
        let dims = self.dims();
        let rows = dims[mode];
        let cols = self.len() / rows;
        let outer: usize = dims[..mode].iter().product();
        let inner: usize = dims[mode + 1..].iter().product();
        let mut out = vec![S::zero(); self.len()];
        for o in 0..outer {
            for r in 0..rows {
                for i in 0..inner {
                    out[r * cols + o * inner + i] = self.entries[(o * rows + r) * inner + i];
                }
            }
        }
        Ok((rows, cols, out))
    }
}

/// Contracts mode `mode` of a row-major buffer with `v`.
fn contract_mode<S: Scalar>(dims: &[usize], data: &[S], mode: usize, v: &[S]) -> Vec<S> {
    let n = dims[mode];
    let outer: usize = dims[..mode].iter().product();
    let inner: usize = dims[mode + 1..].iter().product();
    let mut out = vec![S::zero(); outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for (j, &vj) in v.iter().enumerate() {
            if vj == S::zero() {
                continue;
            }
            let src = &data[(o * n + j) * inner..(o * n + j + 1) * inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += vj * s;
            }
        }
    }
    out
}

/// Splits `[n]` into `parts` contiguous blocks whose sizes differ by at most
/// one, larger blocks first. Coordinates are 0-based.
pub fn split_coordinates(n: usize, parts: usize) -> Result<Vec<Vec<usize>>> {
    if parts == 0 || n < parts {
        return Err(TensorError::TooFewCoordinates { n, parts });
    }
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    Ok((0..parts)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let block = (start..start + len).collect();
            start += len;
            block
        })
        .collect())
}

/// Standard basis vector `e_i` of length `n` (0-based `i`).
pub fn basis_vector<S: Scalar>(n: usize, i: usize) -> Vec<S> {
    let mut e = vec![S::zero(); n];
    e[i] = S::one();
    e
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}
