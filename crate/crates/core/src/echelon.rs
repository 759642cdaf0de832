//! Index trees and echelon trees: Gaussian elimination generalized to tensor
//! spaces.
//!
//! An echelon tree for a subspace `W ⊆ ℝ^{n_1×…×n_ℓ}` is an ordered tree of
//! partial indices whose leaves `I` carry tensors `T_I ∈ W` with a nonzero
//! pivot `T_I(e_I)` and vanishing sub-arrays `T_I(e_J, ·, …, ·) = 0` for every
//! node `J` that precedes `I` in post-order. Post-order is the relation `≺`:
//! descendants precede ancestors and earlier siblings' subtrees precede later
//! ones.
//!
//! [`build_echelon_tree`] grows a tree with a requested fractional branching
//! by flattening the first two modes, recursing, and pigeonholing the
//! resulting level-1 pivots by their first coordinate. Reducing a tree against
//! a sampled vector in the last mode ([`reduce_tree`]) and iterating yields a
//! certified lower bound on the distance from a rank-one tensor to `W^⊥`
//! ([`certify_distance`]).
//!
//! Labels are 0-based in memory and 1-based in the JSON form.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor, TensorError};

/// Slack for comparisons between branching products and dimension ratios,
/// which are often equal in exact arithmetic.
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EchelonError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("basis is not orthonormal: {given} vectors with effective rank {effective_rank}")]
    RankDeficient { given: usize, effective_rank: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("subspace is empty after restriction")]
    EmptySubspace,
    #[error("infeasible branching: {0}")]
    Infeasible(String),
    #[error("pivot collapse: needed {needed} pivots, found {found}")]
    PivotCollapse { needed: usize, found: usize },
    #[error("level {level} cannot be collapsed in a tree of height {height}")]
    InvalidLevel { level: usize, height: usize },
    #[error("height-1 trees cannot be reduced")]
    HeightOne,
    #[error("tree has no leaves")]
    EmptyTree,
}

pub type Result<T> = std::result::Result<T, EchelonError>;

// ---------------------------------------------------------------------------
// Subspaces
// ---------------------------------------------------------------------------

/// Orthonormal basis of a subspace of the flattened tensor space of `dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis<S> {
    dims: Vec<usize>,
    vectors: Vec<Vec<S>>,
}

impl<S: Scalar> SubspaceBasis<S> {
    /// Orthonormalizes an arbitrary spanning set; dependent vectors are dropped.
    pub fn from_spanning(dims: Vec<usize>, spanning: &[Vec<S>]) -> Result<Self> {
        let size = Shape::new(dims.clone())?.size();
        if let Some(v) = spanning.iter().find(|v| v.len() != size) {
            return Err(EchelonError::ShapeMismatch(format!(
                "vector of length {} in ambient space of size {size}",
                v.len()
            )));
        }
        let vectors = linalg::orthonormalize(spanning, S::RANK_TOL);
        Ok(SubspaceBasis { dims, vectors })
    }

    /// Wraps vectors that are already orthonormal (checked to 1e-10).
    pub fn from_orthonormal(dims: Vec<usize>, vectors: Vec<Vec<S>>) -> Result<Self> {
        let size = Shape::new(dims.clone())?.size();
        if vectors.iter().any(|v| v.len() != size) {
            return Err(EchelonError::ShapeMismatch(format!(
                "basis vectors must have length {size}"
            )));
        }
        let basis = SubspaceBasis { dims, vectors };
        basis.check_orthonormal()?;
        Ok(basis)
    }

    pub fn full(dims: Vec<usize>) -> Result<Self> {
        let size = Shape::new(dims.clone())?.size();
        let vectors = (0..size)
            .map(|i| crate::tensor::basis_vector(size, i))
            .collect();
        Ok(SubspaceBasis { dims, vectors })
    }

    pub fn zero(dims: Vec<usize>) -> Result<Self> {
        Shape::new(dims.clone())?;
        Ok(SubspaceBasis {
            dims,
            vectors: Vec::new(),
        })
    }

    /// Span of `dim` independent standard Gaussian vectors.
    pub fn random<R: Rng + ?Sized>(dims: Vec<usize>, dim: usize, rng: &mut R) -> Result<Self> {
        let size = Shape::new(dims.clone())?.size();
        if dim > size {
            return Err(EchelonError::ShapeMismatch(format!(
                "dimension {dim} exceeds ambient size {size}"
            )));
        }
        let spanning: Vec<Vec<S>> = (0..dim)
            .map(|_| {
                (0..size)
                    .map(|_| S::lit(rng.sample::<f64, _>(StandardNormal)))
                    .collect()
            })
            .collect();
        Self::from_spanning(dims, &spanning)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn ambient_size(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn vectors(&self) -> &[Vec<S>] {
        &self.vectors
    }

    /// Euclidean distance from `x` to the subspace, by orthogonal projection.
    pub fn distance(&self, x: &[S]) -> S {
        let mut r = x.to_vec();
        for q in &self.vectors {
            let c = crate::tensor::dot(q, &r);
            for (ri, &qi) in r.iter_mut().zip(q) {
                *ri -= c * qi;
            }
        }
        linalg::norm(&r)
    }

    fn check_orthonormal(&self) -> Result<()> {
        let tol = S::lit(S::RANK_TOL);
        let k = self.vectors.len();
        for i in 0..k {
            for j in i..k {
                let g = crate::tensor::dot(&self.vectors[i], &self.vectors[j]);
                let target = if i == j { S::one() } else { S::zero() };
                if (g - target).abs() > tol {
                    let m = linalg::to_matrix(self.ambient_size(), &self.vectors);
                    let sv = linalg::singular_values(&m);
                    let smax = sv.first().copied().unwrap_or(S::zero());
                    let effective_rank = sv.iter().filter(|&&s| s > tol * smax).count();
                    return Err(EchelonError::RankDeficient {
                        given: k,
                        effective_rank,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Orthonormal basis of `W = V^⊥`, the tensors vanishing on `V`.
pub fn orthogonal_complement<S: Scalar>(v: &SubspaceBasis<S>) -> Result<SubspaceBasis<S>> {
    v.check_orthonormal()?;
    let size = v.ambient_size();
    let k = v.dim();
    if k == size {
        return SubspaceBasis::zero(v.dims.clone());
    }
    // Householder QR of [V | I] has a square Q whose trailing columns span the
    // complement of the (independent) leading block.
    let mut stacked = DMatrix::<S>::zeros(size, k + size);
    for (j, col) in v.vectors.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            stacked[(i, j)] = x;
        }
    }
    for i in 0..size {
        stacked[(i, k + i)] = S::one();
    }
    let q = stacked.qr().q();
    let vectors = (k..size)
        .map(|j| q.column(j).iter().copied().collect())
        .collect();
    Ok(SubspaceBasis {
        dims: v.dims.clone(),
        vectors,
    })
}

/// Pivoted vectors from complete-pivoting elimination of a spanning set.
/// Each vector has its pivot scaled to exactly `1`, `‖·‖∞ = 1`, and exact zeros
/// at all earlier pivots.
fn eliminate_columns<S: Scalar>(mut cols: Vec<Vec<S>>) -> Vec<(usize, Vec<S>)> {
    let scale = cols
        .iter()
        .map(|c| linalg::max_abs(c))
        .fold(S::zero(), |a, b| a.max(b));
    let tol = S::lit(S::RANK_TOL) * scale;
    let mut out = Vec::with_capacity(cols.len());
    let mut pivots: Vec<usize> = Vec::new();
    while !cols.is_empty() {
        // Largest remaining entry; ties go to the smallest coordinate, then
        // the earliest column.
        let mut best: Option<(usize, usize, S)> = None;
        for (j, c) in cols.iter().enumerate() {
            for (i, &x) in c.iter().enumerate() {
                let a = x.abs();
                let better = match best {
                    None => true,
                    Some((bi, bj, bv)) => a > bv || (a == bv && (i, j) < (bi, bj)),
                };
                if better {
                    best = Some((i, j, a));
                }
            }
        }
        let Some((row, col, value)) = best else { break };
        if value <= tol {
            break;
        }
        let mut p = cols.swap_remove(col);
        let pv = p[row];
        p.iter_mut().for_each(|x| *x /= pv);
        p[row] = S::one();
        for &earlier in &pivots {
            p[earlier] = S::zero();
        }
        for c in cols.iter_mut() {
            let f = c[row];
            if f != S::zero() {
                for (ci, &pi) in c.iter_mut().zip(&p) {
                    *ci -= f * pi;
                }
            }
            c[row] = S::zero();
        }
        pivots.push(row);
        out.push((row, p));
    }
    out
}

/// Echelon basis of `{T ∈ W : T_f = 0 for f ∈ forbidden}` over the flattened
/// coordinates of `w`: an ordered list of `(pivot, vector)` where each vector
/// vanishes at every earlier pivot and at the forbidden coordinates.
pub fn eliminate_height1<S: Scalar>(
    w: &SubspaceBasis<S>,
    forbidden: &[usize],
) -> Result<Vec<(usize, Vec<S>)>> {
    let size = w.ambient_size();
    if let Some(&f) = forbidden.iter().find(|&&f| f >= size) {
        return Err(EchelonError::ShapeMismatch(format!(
            "forbidden coordinate {f} outside ambient size {size}"
        )));
    }
    let restricted = linalg::restrict_zero_rows(&w.vectors, forbidden);
    let out = eliminate_columns(restricted);
    if out.is_empty() {
        return Err(EchelonError::EmptySubspace);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

/// Node of an index tree: a partial index and its ordered children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexNode {
    pub label: Vec<usize>,
    pub children: Vec<IndexNode>,
}

impl IndexNode {
    pub fn leaf(label: Vec<usize>) -> Self {
        IndexNode {
            label,
            children: Vec::new(),
        }
    }

    pub fn new(label: Vec<usize>, children: Vec<IndexNode>) -> Self {
        IndexNode { label, children }
    }

    fn post_order<'a>(&'a self, out: &mut Vec<&'a IndexNode>) {
        for c in &self.children {
            c.post_order(out);
        }
        out.push(self);
    }
}

/// Ordered tree of partial indices for `ℝ^{n_1×…×n_ℓ}`; the root is unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexTree {
    dims: Vec<usize>,
    root: IndexNode,
}

impl IndexTree {
    pub fn new(dims: Vec<usize>, root: IndexNode) -> Result<Self> {
        Shape::new(dims.clone())?;
        Ok(IndexTree { dims, root })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn height(&self) -> usize {
        self.dims.len()
    }

    pub fn root(&self) -> &IndexNode {
        &self.root
    }

    /// Nodes in post-order, i.e. sorted by `≺`. The root comes last.
    pub fn post_order(&self) -> Vec<&IndexNode> {
        let mut out = Vec::new();
        self.root.post_order(&mut out);
        out
    }

    pub fn leaves(&self) -> Vec<&IndexNode> {
        self.post_order()
            .into_iter()
            .filter(|n| n.children.is_empty() && !n.label.is_empty())
            .collect()
    }

    /// Number of nodes at each level `0..=ℓ`.
    pub fn level_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.height() + 1];
        for n in self.post_order() {
            if n.label.len() < counts.len() {
                counts[n.label.len()] += 1;
            }
        }
        counts
    }

    /// Smallest child count over all internal nodes at level `level - 1`.
    pub fn min_children(&self, level: usize) -> usize {
        self.post_order()
            .into_iter()
            .filter(|n| n.label.len() + 1 == level)
            .map(|n| n.children.len())
            .min()
            .unwrap_or(0)
    }

    fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        if !self.root.label.is_empty() {
            out.push(Violation::BadLabel {
                label: self.root.label.clone(),
                reason: "root label must be empty".into(),
            });
        }
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if !seen.insert(node.label.clone()) {
                out.push(Violation::DuplicateLabel(node.label.clone()));
            }
            for (k, &i) in node.label.iter().enumerate() {
                if k >= self.dims.len() || i >= self.dims[k] {
                    out.push(Violation::BadLabel {
                        label: node.label.clone(),
                        reason: format!("coordinate {k} out of range"),
                    });
                    break;
                }
            }
            if node.children.is_empty() && node.label.len() != self.height() {
                out.push(Violation::LeafDepth(node.label.clone()));
            }
            for c in &node.children {
                if c.label.len() != node.label.len() + 1 || !c.label.starts_with(&node.label) {
                    out.push(Violation::BadLabel {
                        label: c.label.clone(),
                        reason: format!("does not extend parent {:?}", node.label),
                    });
                }
                stack.push(c);
            }
        }
        out
    }
}

/// Index tree with a tensor `T_I` attached to every leaf `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchelonTree<S> {
    tree: IndexTree,
    leaf_tensors: BTreeMap<Vec<usize>, Tensor<S>>,
}

impl<S: Scalar> EchelonTree<S> {
    /// Assembles a tree; structural and echelon conditions are checked by
    /// [`verify_echelon`], not here.
    pub fn new(tree: IndexTree, leaf_tensors: BTreeMap<Vec<usize>, Tensor<S>>) -> Self {
        EchelonTree { tree, leaf_tensors }
    }

    pub fn tree(&self) -> &IndexTree {
        &self.tree
    }

    pub fn dims(&self) -> &[usize] {
        self.tree.dims()
    }

    pub fn height(&self) -> usize {
        self.tree.height()
    }

    pub fn leaf_tensors(&self) -> &BTreeMap<Vec<usize>, Tensor<S>> {
        &self.leaf_tensors
    }

    pub fn leaf_tensor(&self, label: &[usize]) -> Option<&Tensor<S>> {
        self.leaf_tensors.get(label)
    }

    pub fn num_leaves(&self) -> usize {
        self.tree.leaves().len()
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// Requested fractional branching `(α_1, …, α_ℓ)`: every level-`(i−1)` node
/// gets at least `⌈α_i n_i⌉` children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingSpec {
    pub alphas: Vec<f64>,
}

impl BranchingSpec {
    pub fn new(alphas: Vec<f64>) -> Self {
        BranchingSpec { alphas }
    }

    pub fn uniform(alpha: f64, order: usize) -> Self {
        BranchingSpec {
            alphas: vec![alpha; order],
        }
    }

    /// `Π(1 − α_i) ≥ 1 − dim / size`.
    pub fn is_feasible(&self, dim: usize, size: usize) -> bool {
        let lhs: f64 = self.alphas.iter().map(|a| 1.0 - a).product();
        lhs >= 1.0 - dim as f64 / size as f64 - FEASIBILITY_SLACK
    }
}

/// One growth step of the construction at some recursion depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 0 for the top-level call, increasing as the first two modes are merged.
    pub depth: usize,
    /// Fraction of first-mode coordinates already extracted.
    pub gamma: f64,
    /// Branching used for the merged level in the recursive call.
    pub beta: f64,
    /// Dimension of the subspace still available.
    pub dim: usize,
}

/// Steps in the order they were attempted; the last attempt at a level may
/// be one that did not yield a node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildTrace {
    pub steps: Vec<TraceStep>,
}

struct Built<S> {
    label: Vec<usize>,
    children: Vec<Built<S>>,
    tensor: Option<Vec<S>>,
}

impl<S> Built<S> {
    /// Splits the first coordinate `f ∈ [n1·n2]` into `(f / n2, f % n2)` for
    /// every node of this subtree.
    fn unmerge_first(mut self, n2: usize) -> Self {
        let f = self.label[0];
        let mut label = Vec::with_capacity(self.label.len() + 1);
        label.push(f / n2);
        label.push(f % n2);
        label.extend_from_slice(&self.label[1..]);
        self.label = label;
        self.children = self
            .children
            .into_iter()
            .map(|c| c.unmerge_first(n2))
            .collect();
        self
    }

    fn into_parts(self, tensors: &mut BTreeMap<Vec<usize>, Vec<S>>) -> IndexNode {
        if let Some(t) = self.tensor {
            tensors.insert(self.label.clone(), t);
        }
        IndexNode {
            label: self.label,
            children: self
                .children
                .into_iter()
                .map(|c| c.into_parts(tensors))
                .collect(),
        }
    }
}

fn required_children(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64 - FEASIBILITY_SLACK).ceil().max(1.0)) as usize
}

/// Grows the level-1 subtrees of an echelon tree for the span of `basis`,
/// which must already vanish on the first-mode slices marked in `forbidden`.
/// At least `need1` level-1 nodes are required; `alphas` covers levels
/// `2..=ℓ`. Growth continues as long as another level-1 node can be added.
fn grow<S: Scalar>(
    basis: Vec<Vec<S>>,
    dims: &[usize],
    forbidden: &[bool],
    need1: usize,
    alphas: &[f64],
    depth: usize,
    trace: &mut BuildTrace,
) -> Result<Vec<Built<S>>> {
    let n1 = dims[0];

    if dims.len() == 1 {
        let pivots = eliminate_columns(basis);
        if pivots.len() < need1 {
            return Err(EchelonError::PivotCollapse {
                needed: need1,
                found: pivots.len(),
            });
        }
        return Ok(pivots
            .into_iter()
            .map(|(p, v)| Built {
                label: vec![p],
                children: Vec::new(),
                tensor: Some(v),
            })
            .collect());
    }

    let n2 = dims[1];
    let inner: usize = dims[1..].iter().product();
    let need2 = required_children(alphas[0], n2);
    // Leaves below one level-2 node; the leaf tensors are independent, so a
    // subspace of smaller dimension cannot host them.
    let leaves_below: usize = alphas[1..]
        .iter()
        .zip(&dims[2..])
        .map(|(&a, &n)| required_children(a, n))
        .product();
    let mut flat_dims = Vec::with_capacity(dims.len() - 1);
    flat_dims.push(n1 * n2);
    flat_dims.extend_from_slice(&dims[2..]);

    let mut forbidden = forbidden.to_vec();
    let mut basis = basis;
    let mut children = Vec::new();
    while forbidden.iter().any(|&f| !f) && need2 <= n2 {
        let free = forbidden.iter().filter(|&&f| !f).count();
        let dim = basis.len();
        // Pigeonhole: (need2 − 1)·free + 1 merged nodes put at least need2 of
        // them under one first coordinate.
        let need_merged = (need2 - 1) * free + 1;
        if need_merged * leaves_below > dim {
            break;
        }
        trace.steps.push(TraceStep {
            depth,
            gamma: children.len() as f64 / n1 as f64,
            beta: need_merged as f64 / (free * n2) as f64,
            dim,
        });

        let flat_forbidden: Vec<bool> = forbidden
            .iter()
            .flat_map(|&f| std::iter::repeat_n(f, n2))
            .collect();
        let sub = match grow(
            basis.clone(),
            &flat_dims,
            &flat_forbidden,
            need_merged,
            &alphas[1..],
            depth + 1,
            trace,
        ) {
            Ok(sub) => sub,
            Err(EchelonError::PivotCollapse { .. }) => break,
            Err(e) => return Err(e),
        };

        let mut counts = vec![0usize; n1];
        for b in &sub {
            counts[b.label[0] / n2] += 1;
        }
        let Some(first) = (0..n1).find(|&i| !forbidden[i] && counts[i] >= need2) else {
            break;
        };
        let grandchildren = sub
            .into_iter()
            .filter(|b| b.label[0] / n2 == first)
            .map(|b| b.unmerge_first(n2))
            .collect();
        children.push(Built {
            label: vec![first],
            children: grandchildren,
            tensor: None,
        });

        forbidden[first] = true;
        let rows: Vec<usize> = (first * inner..(first + 1) * inner).collect();
        let restricted = linalg::restrict_zero_rows(&basis, &rows);
        basis = linalg::orthonormalize(&restricted, S::RANK_TOL);
        // Orthonormalization reintroduces roundoff on the cleared slices.
        for slice in (0..n1).filter(|&i| forbidden[i]) {
            for v in basis.iter_mut() {
                v[slice * inner..(slice + 1) * inner]
                    .iter_mut()
                    .for_each(|x| *x = S::zero());
            }
        }
    }

    if children.len() < need1 {
        return Err(EchelonError::PivotCollapse {
            needed: need1,
            found: children.len(),
        });
    }
    Ok(children)
}

/// Builds an echelon tree for `w` with at least the requested fractional
/// branching. Every leaf satisfies `‖T_I‖∞ = 1` and `T_I(e_I) = 1`.
///
/// Growth at each level continues past `⌈α_i n_i⌉` children for as long as
/// the dimension count allows, which only strengthens distance certificates.
pub fn build_echelon_tree<S: Scalar>(
    w: &SubspaceBasis<S>,
    spec: &BranchingSpec,
) -> Result<(EchelonTree<S>, BuildTrace)> {
    let dims = w.dims().to_vec();
    if spec.alphas.len() != dims.len() {
        return Err(EchelonError::Infeasible(format!(
            "{} branching factors for a tensor of order {}",
            spec.alphas.len(),
            dims.len()
        )));
    }
    if let Some(a) = spec.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(EchelonError::Infeasible(format!("branching factor {a} outside [0, 1]")));
    }
    if w.dim() == 0 {
        return Err(EchelonError::Infeasible("subspace is {0}".into()));
    }
    if !spec.is_feasible(w.dim(), w.ambient_size()) {
        return Err(EchelonError::Infeasible(format!(
            "Π(1 − α_i) < 1 − {}/{}",
            w.dim(),
            w.ambient_size()
        )));
    }
    let mut trace = BuildTrace::default();
    let forbidden = vec![false; dims[0]];
    let children = grow(
        w.vectors.clone(),
        &dims,
        &forbidden,
        required_children(spec.alphas[0], dims[0]),
        &spec.alphas[1..],
        0,
        &mut trace,
    )?;
    let root = Built {
        label: Vec::new(),
        children,
        tensor: None,
    };
    let mut flat = BTreeMap::new();
    let root = root.into_parts(&mut flat);
    let shape = Shape::new(dims.clone())?;
    let leaf_tensors = flat
        .into_iter()
        .map(|(label, entries)| (label, Tensor::from_parts_unchecked(shape.clone(), entries)))
        .collect();
    let tree = IndexTree::new(dims, root)?;
    Ok((EchelonTree { tree, leaf_tensors }, trace))
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateLabel(Vec<usize>),
    BadLabel { label: Vec<usize>, reason: String },
    LeafDepth(Vec<usize>),
    MissingTensor(Vec<usize>),
    TensorShape(Vec<usize>),
    /// `|T_I(e_I)|` at or below tolerance.
    SmallPivot { leaf: Vec<usize>, value: f64 },
    /// `T_I(e_J, ·, …)` not zero for some `J ≺ I`.
    NonzeroBlock {
        leaf: Vec<usize>,
        before: Vec<usize>,
        max_abs: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Checks the index-tree structure, the pivots, and every zero block required
/// by the post-order relation.
pub fn verify_echelon<S: Scalar>(t: &EchelonTree<S>, tolerance: f64) -> VerifyReport {
    let mut violations = t.tree.structural_violations();
    let tol = S::lit(tolerance);
    let dims = t.dims();
    let order = t.tree.post_order();
    for (pos, node) in order.iter().enumerate() {
        if !node.children.is_empty() || node.label.len() != dims.len() {
            continue;
        }
        let leaf = &node.label;
        let Some(tensor) = t.leaf_tensors.get(leaf) else {
            violations.push(Violation::MissingTensor(leaf.clone()));
            continue;
        };
        if tensor.dims() != dims {
            violations.push(Violation::TensorShape(leaf.clone()));
            continue;
        }
        let pivot = tensor.get(leaf).abs();
        if pivot.partial_cmp(&tol) != Some(std::cmp::Ordering::Greater) {
            violations.push(Violation::SmallPivot {
                leaf: leaf.clone(),
                value: pivot.as_f64(),
            });
        }
        for before in &order[..pos] {
            let j = &before.label;
            if j.is_empty() || j.len() > dims.len() || j.iter().zip(dims).any(|(&i, &n)| i >= n) {
                continue;
            }
            let block = block_of(dims, tensor.entries(), j);
            let m = block.iter().fold(S::zero(), |acc, &x| acc.max(x.abs()));
            if m > tol {
                violations.push(Violation::NonzeroBlock {
                    leaf: leaf.clone(),
                    before: j.clone(),
                    max_abs: m.as_f64(),
                });
            }
        }
    }
    VerifyReport {
        ok: violations.is_empty(),
        violations,
    }
}

/// Entries of `T(e_J, ·, …, ·)` for a partial index `J`; contiguous in
/// row-major storage.
fn block_of<'a, S>(dims: &[usize], entries: &'a [S], prefix: &[usize]) -> &'a [S] {
    let inner: usize = dims[prefix.len()..].iter().product();
    let start = prefix
        .iter()
        .zip(dims)
        .fold(0, |acc, (&i, &n)| acc * n + i)
        * inner;
    &entries[start..start + inner]
}

/// Smallest pivot magnitude `min_I |T_I(e_I)|`.
pub fn largeness<S: Scalar>(t: &EchelonTree<S>) -> Result<S> {
    let leaves = t.tree.leaves();
    if leaves.is_empty() {
        return Err(EchelonError::EmptyTree);
    }
    let mut min: Option<S> = None;
    for leaf in leaves {
        let tensor = t
            .leaf_tensors
            .get(&leaf.label)
            .ok_or(EchelonError::EmptyTree)?;
        let v = tensor.get(&leaf.label).abs();
        min = Some(min.map_or(v, |m: S| m.min(v)));
    }
    Ok(min.expect("nonempty"))
}

// ---------------------------------------------------------------------------
// Collapse and reduction
// ---------------------------------------------------------------------------

/// Removes level `level` (1-based) and reattaches its children to their
/// grandparents, merging coordinates `level` and `level + 1` into one index in
/// `[n_level · n_{level+1}]` with row-major fusion. Leaf tensors are grouped
/// the same way.
pub fn collapse<S: Scalar>(t: &EchelonTree<S>, level: usize) -> Result<EchelonTree<S>> {
    let height = t.height();
    if level == 0 || level >= height {
        return Err(EchelonError::InvalidLevel { level, height });
    }
    let k = level - 1;
    let dims = t.dims();
    let next = dims[level];
    let mut new_dims = dims.to_vec();
    new_dims[k] = dims[k] * next;
    new_dims.remove(level);

    let relabel = |label: &[usize]| -> Vec<usize> {
        if label.len() <= level {
            return label.to_vec();
        }
        let mut out = label[..k].to_vec();
        out.push(label[k] * next + label[level]);
        out.extend_from_slice(&label[level + 1..]);
        out
    };

    fn rebuild(node: &IndexNode, k: usize, relabel: &dyn Fn(&[usize]) -> Vec<usize>) -> IndexNode {
        let children = if node.label.len() == k {
            node.children
                .iter()
                .flat_map(|c| c.children.iter())
                .map(|g| rebuild(g, k, relabel))
                .collect()
        } else {
            node.children.iter().map(|c| rebuild(c, k, relabel)).collect()
        };
        IndexNode {
            label: relabel(&node.label),
            children,
        }
    }

    let root = rebuild(&t.tree.root, k, &relabel);
    let shape = Shape::new(new_dims.clone())?;
    let leaf_tensors = t
        .leaf_tensors
        .iter()
        .map(|(label, tensor)| {
            let grouped = Tensor::from_parts_unchecked(shape.clone(), tensor.entries().to_vec());
            (relabel(label), grouped)
        })
        .collect();
    Ok(EchelonTree {
        tree: IndexTree {
            dims: new_dims,
            root,
        },
        leaf_tensors,
    })
}

/// Collapses repeatedly down to a height-1 tree.
pub fn collapse_fully<S: Scalar>(t: &EchelonTree<S>) -> Result<EchelonTree<S>> {
    let mut current = t.clone();
    while current.height() > 1 {
        current = collapse(&current, 1)?;
    }
    Ok(current)
}

/// Tracks, for every leaf of a reduced tree, the leaf of the original tree
/// whose tensor it was contracted from.
type Origins = BTreeMap<Vec<usize>, Vec<usize>>;

fn reduce_tracked<S: Scalar>(
    t: &EchelonTree<S>,
    chi: &[S],
    origins: &Origins,
) -> Result<(EchelonTree<S>, Origins)> {
    let height = t.height();
    if height < 2 {
        return Err(EchelonError::HeightOne);
    }
    let last = height - 1;
    if chi.len() != t.dims()[last] {
        return Err(EchelonError::ShapeMismatch(format!(
            "vector of length {} for mode of size {}",
            chi.len(),
            t.dims()[last]
        )));
    }
    let mut tensors = BTreeMap::new();
    let mut new_origins = Origins::new();

    fn walk<S: Scalar>(
        node: &IndexNode,
        last: usize,
        chi: &[S],
        t: &EchelonTree<S>,
        origins: &Origins,
        tensors: &mut BTreeMap<Vec<usize>, Tensor<S>>,
        new_origins: &mut Origins,
    ) -> Result<IndexNode> {
        if node.label.len() < last {
            let children = node
                .children
                .iter()
                .map(|c| walk(c, last, chi, t, origins, tensors, new_origins))
                .collect::<Result<_>>()?;
            return Ok(IndexNode::new(node.label.clone(), children));
        }
        // Level ℓ−1: pick the child whose contracted tensor has the largest
        // value at e_J; ties keep the earliest child.
        let mut best: Option<(S, Tensor<S>, Vec<usize>)> = None;
        for child in &node.children {
            let Some(tensor) = t.leaf_tensors.get(&child.label) else {
                continue;
            };
            let candidate = tensor.partial_apply(&[(last, chi)])?;
            let value = candidate.get(&node.label).abs();
            let origin = origins
                .get(&child.label)
                .cloned()
                .unwrap_or_else(|| child.label.clone());
            if best.as_ref().is_none_or(|(v, _, _)| value > *v) {
                best = Some((value, candidate, origin));
            }
        }
        if let Some((_, tensor, origin)) = best {
            tensors.insert(node.label.clone(), tensor);
            new_origins.insert(node.label.clone(), origin);
        }
        Ok(IndexNode::leaf(node.label.clone()))
    }

    let root = walk(
        &t.tree.root,
        last,
        chi,
        t,
        origins,
        &mut tensors,
        &mut new_origins,
    )?;
    let mut dims = t.dims().to_vec();
    dims.pop();
    Ok((
        EchelonTree {
            tree: IndexTree { dims, root },
            leaf_tensors: tensors,
        },
        new_origins,
    ))
}

/// Fixes the last mode to `chi` and drops the bottom level. Each level-(ℓ−1)
/// node `J` becomes a leaf holding the contracted child tensor with the
/// largest `|T(e_J)|`. An all-zero candidate set yields a tree of largeness 0.
pub fn reduce_tree<S: Scalar>(t: &EchelonTree<S>, chi: &[S]) -> Result<EchelonTree<S>> {
    reduce_tracked(t, chi, &Origins::new()).map(|(tree, _)| tree)
}

/// Lower bound on `dist(χ^{(1)} ⊗ … ⊗ χ^{(ℓ)}, V)` for a tree built on
/// `W = V^⊥`: the largest `|T_I(χ^{(1)}, …, χ^{(ℓ)})| / ‖T_I‖_F` over the leaf
/// chains selected by successive reductions.
pub fn certify_distance<S: Scalar, V: AsRef<[S]>>(t: &EchelonTree<S>, chis: &[V]) -> Result<S> {
    let height = t.height();
    if chis.len() != height {
        return Err(EchelonError::ShapeMismatch(format!(
            "{} vectors for a tree of height {height}",
            chis.len()
        )));
    }
    for (k, chi) in chis.iter().enumerate() {
        if chi.as_ref().len() != t.dims()[k] {
            return Err(EchelonError::ShapeMismatch(format!(
                "vector {k} has length {}, mode has size {}",
                chi.as_ref().len(),
                t.dims()[k]
            )));
        }
    }
    let norms: BTreeMap<&Vec<usize>, S> = t
        .leaf_tensors
        .iter()
        .map(|(label, tensor)| (label, tensor.frobenius()))
        .collect();
    let mut current = t.clone();
    let mut origins = Origins::new();
    for k in (1..height).rev() {
        let (next, next_origins) = reduce_tracked(&current, chis[k].as_ref(), &origins)?;
        current = next;
        origins = next_origins;
    }
    let first = chis[0].as_ref();
    let mut best = S::zero();
    for (label, vector) in &current.leaf_tensors {
        let origin = origins.get(label).unwrap_or(label);
        let Some(&norm) = norms.get(origin) else {
            continue;
        };
        if norm == S::zero() {
            continue;
        }
        let value = crate::tensor::dot(vector.entries(), first).abs() / norm;
        best = best.max(value);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// JSON form
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct NodeRepr<S> {
    label: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<NodeRepr<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tensor: Option<Tensor<S>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct TreeRepr<S> {
    dims: Vec<usize>,
    root: NodeRepr<S>,
}

impl<S: Scalar> Serialize for EchelonTree<S> {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        fn to_repr<S: Scalar>(node: &IndexNode, tensors: &BTreeMap<Vec<usize>, Tensor<S>>) -> NodeRepr<S> {
            NodeRepr {
                label: node.label.iter().map(|i| i + 1).collect(),
                children: node.children.iter().map(|c| to_repr(c, tensors)).collect(),
                tensor: tensors.get(&node.label).cloned(),
            }
        }
        TreeRepr {
            dims: self.dims().to_vec(),
            root: to_repr(&self.tree.root, &self.leaf_tensors),
        }
        .serialize(serializer)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for EchelonTree<S> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        fn from_repr<S: Scalar>(
            node: NodeRepr<S>,
            tensors: &mut BTreeMap<Vec<usize>, Tensor<S>>,
        ) -> std::result::Result<IndexNode, String> {
            let label = node
                .label
                .iter()
                .map(|&i| i.checked_sub(1).ok_or("labels are 1-based"))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if let Some(t) = node.tensor {
                tensors.insert(label.clone(), t);
            }
            let children = node
                .children
                .into_iter()
                .map(|c| from_repr(c, tensors))
                .collect::<std::result::Result<_, _>>()?;
            Ok(IndexNode { label, children })
        }
        let repr = TreeRepr::<S>::deserialize(deserializer)?;
        let mut tensors = BTreeMap::new();
        let root = from_repr(repr.root, &mut tensors).map_err(serde::de::Error::custom)?;
        let tree = IndexTree::new(repr.dims, root).map_err(serde::de::Error::custom)?;
        Ok(EchelonTree {
            tree,
            leaf_tensors: tensors,
        })
    }
}
