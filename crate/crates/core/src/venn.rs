//! Venn diagrams of set families and their reconstruction from ℓ-wise
//! intersection measurements.
//!
//! A diagram over sets `S_1…S_n` is a list of regions, each with a membership
//! pattern `χ(u) ∈ {0,1}^n` and a weight `w(u) ≥ 0`. Its order-`ℓ`
//! measurement tensor is `Σ_u w(u) χ(u)^{⊗ℓ}`, whose entry at
//! `(i_1,…,i_ℓ)` is the total weight inside `S_{i_1} ∩ … ∩ S_{i_ℓ}`.
//!
//! [`reconstruct`] decomposes a (noisy) measurement tensor into rank-one
//! terms, rounds each factor to a 0/1 pattern, and refits the weights by
//! nonnegative least squares.

use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomp::{self, DecompError, GroupingScheme};
use crate::perturb::{rng_from_seed, MembershipMatrix};
use crate::tensor::{split_coordinates, ModePartition, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VennError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Decomposition(#[from] DecompError),
    #[error("region {region}: {reason}")]
    InvalidRegion { region: usize, reason: String },
    #[error("membership pattern of region {0} repeats an earlier region")]
    DuplicatePattern(usize),
    #[error("diagrams over {0} and {1} sets cannot be compared")]
    SetCountMismatch(usize, usize),
    #[error("measurement tensor must be cubical of order at least {min_order}, found dims {dims:?}")]
    MeasurementShape { dims: Vec<usize>, min_order: usize },
    #[error("noise bound {0} must be finite and nonnegative")]
    InvalidNoise(f64),
    #[error("term {term} coordinate {coordinate} = {value:.6} is too close to 1/2 to round")]
    AmbiguousRounding {
        term: usize,
        coordinate: usize,
        value: f64,
    },
    #[error("least-squares weight {weight:.3e} for a recovered region is negative")]
    NegativeWeight { weight: f64 },
    #[error("recovered diagram misses the measurements by {residual:.3e} (allowed {allowed:.3e}); m_max may be too small")]
    Misfit { residual: f64, allowed: f64 },
}

pub type Result<T> = std::result::Result<T, VennError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub chi: Vec<u8>,
    pub w: f64,
}

impl Region {
    pub fn chi_f64(&self) -> Vec<f64> {
        self.chi.iter().map(|&b| b as f64).collect()
    }
}

/// Regions with distinct membership patterns over `n` sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiagramRepr")]
pub struct VennDiagram {
    n: usize,
    regions: Vec<Region>,
}

#[derive(Deserialize)]
struct DiagramRepr {
    n: usize,
    regions: Vec<Region>,
}

impl TryFrom<DiagramRepr> for VennDiagram {
    type Error = VennError;

    fn try_from(r: DiagramRepr) -> Result<Self> {
        VennDiagram::new(r.n, r.regions)
    }
}

impl VennDiagram {
    pub fn new(n: usize, regions: Vec<Region>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for (k, r) in regions.iter().enumerate() {
            Self::check_region(n, k, r)?;
            if !seen.insert(&r.chi) {
                return Err(VennError::DuplicatePattern(k));
            }
        }
        Ok(VennDiagram { n, regions })
    }

    /// Like [`VennDiagram::new`] but sums the weights of repeated patterns.
    /// Regions keep the order of first appearance.
    pub fn merged(n: usize, regions: Vec<Region>) -> Result<Self> {
        let mut out: Vec<Region> = Vec::with_capacity(regions.len());
        let mut index: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for (k, r) in regions.into_iter().enumerate() {
            Self::check_region(n, k, &r)?;
            match index.get(&r.chi) {
                Some(&i) => out[i].w += r.w,
                None => {
                    index.insert(r.chi.clone(), out.len());
                    out.push(r);
                }
            }
        }
        Ok(VennDiagram { n, regions: out })
    }

    /// One region per column of a 0/1 membership matrix.
    pub fn from_memberships(x: &MembershipMatrix, weights: &[f64]) -> Result<Self> {
        if weights.len() != x.m() {
            return Err(VennError::InvalidRegion {
                region: weights.len().min(x.m()),
                reason: format!("{} weights for {} columns", weights.len(), x.m()),
            });
        }
        let regions = x
            .columns()
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(k, (c, &w))| {
                let chi = c
                    .iter()
                    .map(|&v| match v {
                        0.0 => Ok(0),
                        1.0 => Ok(1),
                        _ => Err(VennError::InvalidRegion {
                            region: k,
                            reason: format!("membership entry {v} is not 0 or 1"),
                        }),
                    })
                    .collect::<Result<_>>()?;
                Ok(Region { chi, w })
            })
            .collect::<Result<_>>()?;
        Self::merged(x.n(), regions)
    }

    fn check_region(n: usize, k: usize, r: &Region) -> Result<()> {
        if r.chi.len() != n {
            return Err(VennError::InvalidRegion {
                region: k,
                reason: format!("pattern of length {} for {n} sets", r.chi.len()),
            });
        }
        if r.chi.iter().any(|&b| b > 1) {
            return Err(VennError::InvalidRegion {
                region: k,
                reason: "pattern entries must be 0 or 1".into(),
            });
        }
        if !(r.w >= 0.0 && r.w.is_finite()) {
            return Err(VennError::InvalidRegion {
                region: k,
                reason: format!("weight {} must be finite and nonnegative", r.w),
            });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn m(&self) -> usize {
        self.regions.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.regions.iter().map(|r| r.w).sum()
    }
}

/// Symmetric order-`ℓ` tensor of intersection weights, with the entrywise
/// bound of any noise added so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasurementRepr", into = "MeasurementRepr")]
pub struct MeasurementTensor {
    pub tensor: Tensor<f64>,
    pub epsilon_inf: f64,
}

#[derive(Serialize, Deserialize)]
struct MeasurementRepr {
    dims: Vec<usize>,
    entries: Vec<f64>,
    #[serde(default)]
    epsilon_inf: f64,
}

impl TryFrom<MeasurementRepr> for MeasurementTensor {
    type Error = VennError;

    fn try_from(r: MeasurementRepr) -> Result<Self> {
        if !(r.epsilon_inf >= 0.0 && r.epsilon_inf.is_finite()) {
            return Err(VennError::InvalidNoise(r.epsilon_inf));
        }
        MeasurementTensor::new(Tensor::new(r.dims, r.entries)?, r.epsilon_inf)
    }
}

impl From<MeasurementTensor> for MeasurementRepr {
    fn from(m: MeasurementTensor) -> Self {
        MeasurementRepr {
            dims: m.tensor.dims().to_vec(),
            epsilon_inf: m.epsilon_inf,
            entries: m.tensor.into_entries(),
        }
    }
}

impl MeasurementTensor {
    pub fn new(tensor: Tensor<f64>, epsilon_inf: f64) -> Result<Self> {
        let dims = tensor.dims();
        if dims.iter().any(|&d| d != dims[0]) {
            return Err(VennError::MeasurementShape {
                dims: dims.to_vec(),
                min_order: 1,
            });
        }
        Ok(MeasurementTensor { tensor, epsilon_inf })
    }

    pub fn n(&self) -> usize {
        self.tensor.dims()[0]
    }

    pub fn order(&self) -> usize {
        self.tensor.order()
    }
}

/// `Σ_u w(u) χ(u)^{⊗ℓ}`.
pub fn intersection_tensor(v: &VennDiagram, order: usize) -> Result<MeasurementTensor> {
    if order == 0 {
        return Err(VennError::MeasurementShape {
            dims: Vec::new(),
            min_order: 1,
        });
    }
    let mut t = Tensor::zeros(vec![v.n; order])?;
    for r in &v.regions {
        let chi = r.chi_f64();
        let term = Tensor::outer(&vec![chi; order])?;
        t = t.add_scaled(&term, r.w)?;
    }
    MeasurementTensor::new(t, 0.0)
}

/// Averages `t` over all permutations of its modes.
fn symmetrize(t: &Tensor<f64>) -> Tensor<f64> {
    let order = t.order();
    let shape = t.shape().clone();
    let perms: Vec<Vec<usize>> = (0..order).permutations(order).collect();
    let scale = 1.0 / perms.len() as f64;
    let mut index = vec![0; order];
    let entries = (0..t.len())
        .map(|flat| {
            let idx = shape.unravel(flat);
            perms
                .iter()
                .map(|p| {
                    for (slot, &src) in index.iter_mut().zip(p) {
                        *slot = idx[src];
                    }
                    t.get(&index)
                })
                .sum::<f64>()
                * scale
        })
        .collect();
    Tensor::new(shape.dims().to_vec(), entries).expect("same shape")
}

/// Adds i.i.d. uniform noise in `[−ε, ε]` to every entry, then averages the
/// noise over mode permutations so the tensor stays symmetric.
pub fn add_measurement_noise(t: &MeasurementTensor, epsilon: f64, seed: u64) -> Result<MeasurementTensor> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(VennError::InvalidNoise(epsilon));
    }
    if epsilon == 0.0 {
        return Ok(t.clone());
    }
    let mut rng = rng_from_seed(seed);
    let raw: Vec<f64> = (0..t.tensor.len())
        .map(|_| rng.random_range(-epsilon..=epsilon))
        .collect();
    let noise = symmetrize(&Tensor::new(t.tensor.dims().to_vec(), raw)?);
    Ok(MeasurementTensor {
        tensor: t.tensor.add_scaled(&noise, 1.0)?,
        epsilon_inf: t.epsilon_inf + epsilon,
    })
}

/// Number of singular values of the mode-1 unfolding above `tol·σ_max`,
/// capped at `m_max`.
pub fn rank_detect(t3: &Tensor<f64>, m_max: usize, tol: f64) -> Result<usize> {
    let (rows, cols, data) = t3.unfold(0)?;
    let sv = crate::linalg::singular_values(&DMatrix::from_row_slice(rows, cols, &data));
    let Some(&smax) = sv.first() else { return Ok(0) };
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol * smax).count().min(m_max))
}

/// Which tensor the decomposition runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// The subtensor over `I_1 × … × I_ℓ` for a split of `[n]` into `ℓ`
    /// disjoint blocks.
    Disjoint,
    /// The whole measurement tensor.
    Full,
    /// `Disjoint` when `m_max` fits its rank capacity, else `Full`.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    /// Largest number of regions to look for; `None` uses
    /// `⌊(n/ℓ)^{⌊(ℓ−1)/2⌋} / 2⌋` (at least 1).
    pub m_max: Option<usize>,
    pub split: SplitMode,
    /// Relative singular-value cutoff for rank detection.
    pub rank_tol: f64,
    /// Coordinates within this distance of 1/2 are ambiguous.
    pub round_tol: f64,
    /// Largest relative residual when splitting a grouped factor.
    pub factor_tol: f64,
    /// Weights at or below `weight_tol · max(1, max weight)` are dropped;
    /// least-squares weights below the negative of that are errors.
    pub weight_tol: f64,
    /// Largest entrywise misfit beyond twice the noise bound, relative to
    /// `max(1, ‖T_obs‖∞)`.
    pub misfit_tol: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            m_max: None,
            split: SplitMode::Auto,
            rank_tol: 1e-6,
            round_tol: 0.05,
            factor_tol: 1e-3,
            weight_tol: 1e-9,
            misfit_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub diagram: VennDiagram,
    pub rank: usize,
    pub split: SplitMode,
    /// `‖T_obs − T(diagram)‖∞`.
    pub residual: f64,
}

pub fn default_m_max(n: usize, order: usize) -> usize {
    let base = (n / order.max(1)) as f64;
    let cap = base.powi(((order.saturating_sub(1)) / 2) as i32) / 2.0;
    (cap.floor() as usize).max(1)
}

/// Rank capacity of the order-3 grouping of a tensor with these dims.
fn capacity(dims: &[usize]) -> Result<usize> {
    let sizes = decomp::grouping_sizes(dims.len(), GroupingScheme::Halves)?;
    let first: usize = dims[..sizes[0]].iter().product();
    let second: usize = dims[sizes[0]..sizes[0] + sizes[1]].iter().product();
    Ok(first.min(second))
}

/// Recovers a diagram from its order-`ℓ` measurement tensor (`ℓ ≥ 3`).
///
/// Each recovered rank-one term has its factors scaled to max-abs `+1` and
/// rounded at `1/2`; repeated and all-zero patterns are merged away and the
/// weights are refit by nonnegative least squares against the full tensor.
/// Under [`SplitMode::Auto`] a failed disjoint attempt is retried on the
/// full tensor.
pub fn reconstruct(t_obs: &MeasurementTensor, opts: &ReconstructOptions, seed: u64) -> Result<Reconstruction> {
    let order = t_obs.order();
    let n = t_obs.n();
    if order < 3 {
        return Err(VennError::MeasurementShape {
            dims: t_obs.tensor.dims().to_vec(),
            min_order: 3,
        });
    }
    let m_max = opts.m_max.unwrap_or_else(|| default_m_max(n, order));
    let parts = if n >= order {
        Some(split_coordinates(n, order)?)
    } else {
        None
    };
    let split = match (opts.split, &parts) {
        (SplitMode::Auto, Some(p)) => {
            let dims: Vec<usize> = p.iter().map(Vec::len).collect();
            if m_max <= capacity(&dims)? {
                SplitMode::Disjoint
            } else {
                SplitMode::Full
            }
        }
        (SplitMode::Auto, None) => SplitMode::Full,
        (SplitMode::Disjoint, None) => {
            return Err(TensorError::TooFewCoordinates { n, parts: order }.into());
        }
        (mode, _) => mode,
    };
    let attempt = reconstruct_with(t_obs, opts, m_max, split, parts.as_deref(), seed);
    match (opts.split, attempt) {
        // A region pattern repeated on one block, or too few coordinates per
        // block, can defeat the disjoint split while the full tensor is fine.
        (SplitMode::Auto, Err(_)) if split == SplitMode::Disjoint => {
            reconstruct_with(t_obs, opts, m_max, SplitMode::Full, None, seed)
        }
        (_, r) => r,
    }
}

fn reconstruct_with(
    t_obs: &MeasurementTensor,
    opts: &ReconstructOptions,
    m_max: usize,
    split: SplitMode,
    parts: Option<&[Vec<usize>]>,
    seed: u64,
) -> Result<Reconstruction> {
    let order = t_obs.order();
    let n = t_obs.n();
    let empty = |split| Reconstruction {
        diagram: VennDiagram {
            n,
            regions: Vec::new(),
        },
        rank: 0,
        split,
        residual: t_obs.tensor.max_abs(),
    };
    if t_obs.tensor.max_abs() == 0.0 {
        return Ok(empty(split));
    }
    let work = match split {
        SplitMode::Disjoint => t_obs
            .tensor
            .extract_subtensor(parts.expect("disjoint split has parts"))?,
        _ => t_obs.tensor.clone(),
    };
    let sizes = decomp::grouping_sizes(order, GroupingScheme::Halves)?;
    let grouped = work.group(&ModePartition::from_sizes(&sizes)?)?;
    let rank = rank_detect(&grouped, m_max, opts.rank_tol)?;
    if rank == 0 {
        return Ok(empty(split));
    }
    let terms = decomp::recover_rank_one_terms(&work, rank, GroupingScheme::Halves, seed, opts.factor_tol)?;

    let mut patterns: Vec<Vec<u8>> = Vec::with_capacity(terms.len());
    for (k, term) in terms.iter().enumerate() {
        let scaled: Vec<Vec<f64>> = term
            .factors
            .iter()
            .map(|f| {
                let peak = f.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
                if peak == 0.0 {
                    f.clone()
                } else {
                    f.iter().map(|x| x / peak).collect()
                }
            })
            .collect();
        let estimate: Vec<f64> = match split {
            SplitMode::Disjoint => scaled.concat(),
            _ => (0..n)
                .map(|i| scaled.iter().map(|f| f[i]).sum::<f64>() / order as f64)
                .collect(),
        };
        let mut chi = Vec::with_capacity(n);
        for (i, &x) in estimate.iter().enumerate() {
            if (x - 0.5).abs() < opts.round_tol {
                return Err(VennError::AmbiguousRounding {
                    term: k,
                    coordinate: i,
                    value: x,
                });
            }
            chi.push(u8::from(x > 0.5));
        }
        if chi.contains(&1) && !patterns.contains(&chi) {
            patterns.push(chi);
        }
    }
    let weights = fit_weights(&t_obs.tensor, &patterns, opts.weight_tol)?;
    let cut = opts.weight_tol * weights.iter().copied().fold(1.0f64, f64::max);
    let regions = patterns
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > cut)
        .map(|(chi, w)| Region { chi, w })
        .collect();
    let diagram = VennDiagram::merged(n, regions)?;
    let residual = intersection_tensor(&diagram, order)?
        .tensor
        .add_scaled(&t_obs.tensor, -1.0)?
        .max_abs();
    let allowed = 2.0 * t_obs.epsilon_inf + opts.misfit_tol * t_obs.tensor.max_abs().max(1.0);
    if residual > allowed {
        return Err(VennError::Misfit { residual, allowed });
    }
    Ok(Reconstruction {
        diagram,
        rank,
        split,
        residual,
    })
}

/// Nonnegative weights minimizing `‖Σ w_u χ_u^{⊗ℓ} − T‖_F`, via the normal
/// equations `G_uv = ⟨χ_u, χ_v⟩^ℓ`, `h_u = T(χ_u, …, χ_u)`.
fn fit_weights(t: &Tensor<f64>, patterns: &[Vec<u8>], tol: f64) -> Result<Vec<f64>> {
    let k = patterns.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let order = t.order() as i32;
    let chis: Vec<Vec<f64>> = patterns
        .iter()
        .map(|p| p.iter().map(|&b| b as f64).collect())
        .collect();
    let g = DMatrix::from_fn(k, k, |u, v| crate::tensor::dot(&chis[u], &chis[v]).powi(order));
    let h = chis
        .iter()
        .map(|c| t.multilinear_eval(&vec![c.as_slice(); order as usize]))
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    let h = DVector::from_vec(h);

    let unconstrained = crate::linalg::pinv(&g, 1e-12) * &h;
    let scale = unconstrained.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
    if let Some(&w) = unconstrained.iter().find(|&&w| w < -tol * scale) {
        return Err(VennError::NegativeWeight { weight: w });
    }
    Ok(nnls_normal(&g, &h).iter().copied().collect())
}

/// Lawson-Hanson active-set NNLS on normal equations `G w = h`.
fn nnls_normal(g: &DMatrix<f64>, h: &DVector<f64>) -> DVector<f64> {
    let k = h.len();
    let tol = 1e-12 * h.amax().max(1.0);
    let mut w = DVector::<f64>::zeros(k);
    let mut passive = vec![false; k];
    for _ in 0..3 * k.max(1) {
        let grad = h - g * &w;
        let next = (0..k)
            .filter(|&j| !passive[j] && grad[j] > tol)
            .max_by(|&a, &b| grad[a].partial_cmp(&grad[b]).unwrap_or(std::cmp::Ordering::Equal));
        let Some(j) = next else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let gp = DMatrix::from_fn(idx.len(), idx.len(), |a, b| g[(idx[a], idx[b])]);
            let hp = DVector::from_fn(idx.len(), |a, _| h[idx[a]]);
            let zp = crate::linalg::pinv(&gp, 1e-14) * hp;
            if zp.iter().all(|&z| z > 0.0) {
                w.fill(0.0);
                for (a, &i) in idx.iter().enumerate() {
                    w[i] = zp[a];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (a, &i) in idx.iter().enumerate() {
                if zp[a] <= 0.0 {
                    alpha = alpha.min(w[i] / (w[i] - zp[a]));
                }
            }
            for (a, &i) in idx.iter().enumerate() {
                w[i] += alpha * (zp[a] - w[i]);
                if w[i] <= tol {
                    w[i] = 0.0;
                    passive[i] = false;
                }
            }
            if idx.iter().all(|&i| !passive[i]) {
                break;
            }
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramDiff {
    /// Same patterns and `weight_l1 ≤ 1e-6 · max(1, total weight)`.
    pub exact_match: bool,
    pub patterns_match: bool,
    pub weight_l1: f64,
    pub only_in_first: Vec<Vec<u8>>,
    pub only_in_second: Vec<Vec<u8>>,
}

/// Relative weight tolerance for [`DiagramDiff::exact_match`].
pub const WEIGHT_MATCH_TOL: f64 = 1e-6;

/// Matches regions by pattern; a pattern missing from one side counts with
/// weight 0 there.
pub fn diagram_diff(v1: &VennDiagram, v2: &VennDiagram) -> Result<DiagramDiff> {
    if v1.n != v2.n {
        return Err(VennError::SetCountMismatch(v1.n, v2.n));
    }
    let a: BTreeMap<&Vec<u8>, f64> = v1.regions.iter().map(|r| (&r.chi, r.w)).collect();
    let b: BTreeMap<&Vec<u8>, f64> = v2.regions.iter().map(|r| (&r.chi, r.w)).collect();
    let mut weight_l1 = 0.0;
    let mut only_in_first = Vec::new();
    let mut only_in_second = Vec::new();
    for (chi, &wa) in &a {
        match b.get(chi) {
            Some(&wb) => weight_l1 += (wa - wb).abs(),
            None => {
                weight_l1 += wa;
                only_in_first.push((*chi).clone());
            }
        }
    }
    for (chi, &wb) in &b {
        if !a.contains_key(chi) {
            weight_l1 += wb;
            only_in_second.push((*chi).clone());
        }
    }
    let patterns_match = only_in_first.is_empty() && only_in_second.is_empty();
    let total = v1.total_weight().max(v2.total_weight()).max(1.0);
    Ok(DiagramDiff {
        exact_match: patterns_match && weight_l1 <= WEIGHT_MATCH_TOL * total,
        patterns_match,
        weight_l1,
        only_in_first,
        only_in_second,
    })
}
