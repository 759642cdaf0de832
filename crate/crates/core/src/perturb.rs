//! (δ, p)-nondeterministic perturbation models.
//!
//! A distribution on vectors is `(δ, p)`-nondeterministic when every
//! coordinate, conditioned on all the others, falls in any open interval of
//! width `2δ` with probability at most `p`. Two models are provided: flipping
//! each bit of a 0/1 vector independently, and adding Gaussian noise.
//!
//! Randomness comes from ChaCha8 seeded with a `u64`; independent streams are
//! derived from one seed with [`derive_seed`], so results are reproducible
//! across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("flip probability {0} outside [0, 1]")]
    InvalidFlipProbability(f64),
    #[error("noise level rho = {0} must be positive and finite")]
    InvalidRho(f64),
    #[error("the Gaussian model needs an interval half-width delta")]
    MissingDelta,
    #[error("interval half-width {0} must be positive")]
    InvalidDelta(f64),
    #[error("bit-flip perturbation needs a 0/1 matrix; found {value} at row {row}, column {col}")]
    NonBinary { row: usize, col: usize, value: f64 },
    #[error("empirical check needs at least {min} trials, got {got}")]
    InsufficientTrials { min: usize, got: usize },
    #[error("membership matrix: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, PerturbError>;

/// Generator used for every random draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for sub-stream `stream` of `seed` (one SplitMix64 step over their
/// combination). Distinct streams give unrelated generators.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum PerturbationModel {
    /// Each bit flips independently with probability `q`.
    #[serde(rename = "bitflip")]
    BitFlip { q: f64 },
    /// Gaussian noise of total variance `rho²` per length-`n` column, i.e.
    /// variance `rho²/n` per coordinate.
    Gaussian { rho: f64 },
}

impl PerturbationModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbationModel::BitFlip { q } if !(0.0..=1.0).contains(&q) => {
                Err(PerturbError::InvalidFlipProbability(q))
            }
            PerturbationModel::Gaussian { rho } if !(rho > 0.0 && rho.is_finite()) => {
                Err(PerturbError::InvalidRho(rho))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondetParams {
    pub delta: f64,
    pub p: f64,
}

/// `(δ, p)` guaranteed by a model on vectors of length `n`.
///
/// Bit flips give `(1/2, max(q, 1−q))`. Gaussian noise with per-coordinate
/// standard deviation `ρ/√n` gives `(δ, erf(√n·δ/ρ))` for the requested `δ`.
pub fn nondet_params(model: &PerturbationModel, n: usize, delta: Option<f64>) -> Result<NondetParams> {
    model.validate()?;
    match *model {
        PerturbationModel::BitFlip { q } => Ok(NondetParams {
            delta: 0.5,
            p: q.max(1.0 - q),
        }),
        PerturbationModel::Gaussian { rho } => {
            let delta = delta.ok_or(PerturbError::MissingDelta)?;
            if delta.is_nan() || delta <= 0.0 {
                return Err(PerturbError::InvalidDelta(delta));
            }
            Ok(NondetParams {
                delta,
                p: libm::erf((n as f64).sqrt() * delta / rho),
            })
        }
    }
}

/// `n × m` real matrix stored by columns; column `u` is `χ(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MembershipRepr")]
pub struct MembershipMatrix {
    n: usize,
    m: usize,
    columns: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct MembershipRepr {
    n: usize,
    m: usize,
    columns: Vec<Vec<f64>>,
}

impl TryFrom<MembershipRepr> for MembershipMatrix {
    type Error = PerturbError;

    fn try_from(r: MembershipRepr) -> Result<Self> {
        let x = MembershipMatrix::from_columns(r.n, r.columns)?;
        if x.m != r.m {
            return Err(PerturbError::Shape(format!(
                "declared m = {} but {} columns given",
                r.m, x.m
            )));
        }
        Ok(x)
    }
}

impl MembershipMatrix {
    pub fn from_columns(n: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(PerturbError::Shape(format!(
                "column of length {} in a matrix with n = {n}",
                c.len()
            )));
        }
        if columns.iter().flatten().any(|x| !x.is_finite()) {
            return Err(PerturbError::Shape("non-finite entry".into()));
        }
        Ok(MembershipMatrix {
            n,
            m: columns.len(),
            columns,
        })
    }

    /// `n × m` matrix with every entry equal to `value`.
    pub fn constant(n: usize, m: usize, value: f64) -> Self {
        MembershipMatrix {
            n,
            m,
            columns: vec![vec![value; n]; m],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Vec<f64>> {
        self.columns
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn is_binary(&self) -> bool {
        self.columns.iter().flatten().all(|&x| x == 0.0 || x == 1.0)
    }
}

/// Applies the model entrywise using a generator seeded with `seed`. Entries
/// are visited column by column.
pub fn perturb_memberships(
    x0: &MembershipMatrix,
    model: &PerturbationModel,
    seed: u64,
) -> Result<MembershipMatrix> {
    let mut rng = rng_from_seed(seed);
    perturb_with(x0, model, &mut rng)
}

pub fn perturb_with<R: Rng + ?Sized>(
    x0: &MembershipMatrix,
    model: &PerturbationModel,
    rng: &mut R,
) -> Result<MembershipMatrix> {
    model.validate()?;
    let columns = match *model {
        PerturbationModel::BitFlip { q } => {
            for (col, c) in x0.columns.iter().enumerate() {
                if let Some((row, &value)) = c.iter().enumerate().find(|(_, &x)| x != 0.0 && x != 1.0) {
                    return Err(PerturbError::NonBinary { row, col, value });
                }
            }
            x0.columns
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|&x| if rng.random_bool(q) { 1.0 - x } else { x })
                        .collect()
                })
                .collect()
        }
        PerturbationModel::Gaussian { rho } => {
            let sd = rho / (x0.n.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, sd).map_err(|_| PerturbError::InvalidRho(rho))?;
            x0.columns
                .iter()
                .map(|c| c.iter().map(|&x| x + normal.sample(rng)).collect())
                .collect()
        }
    };
    Ok(MembershipMatrix {
        n: x0.n,
        m: x0.m,
        columns,
    })
}

/// Source of random membership matrices for [`empirical_nondet_check`].
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    /// `x0` perturbed by `model`, fresh seed per trial.
    Model {
        model: PerturbationModel,
        x0: MembershipMatrix,
    },
    /// Always returns `x0`.
    Constant(MembershipMatrix),
}

impl Sampler {
    fn sample(&self, seed: u64) -> Result<MembershipMatrix> {
        match self {
            Sampler::Model { model, x0 } => perturb_memberships(x0, model, seed),
            Sampler::Constant(x0) => Ok(x0.clone()),
        }
    }

    fn base(&self) -> &MembershipMatrix {
        match self {
            Sampler::Model { x0, .. } | Sampler::Constant(x0) => x0,
        }
    }

    /// `E[X_rc]`, which for these independent models equals the conditional
    /// mean given all other entries.
    fn mean(&self, row: usize, col: usize) -> f64 {
        let x = self.base().get(row, col);
        match self {
            Sampler::Model {
                model: PerturbationModel::BitFlip { q },
                ..
            } => x * (1.0 - q) + (1.0 - x) * q,
            _ => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub row: usize,
    pub col: usize,
    pub center: f64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondetReport {
    pub delta: f64,
    pub p: f64,
    pub trials: usize,
    pub slack: f64,
    pub max_hit_rate: f64,
    pub pass: bool,
    pub estimates: Vec<IntervalEstimate>,
}

pub const MIN_CHECK_TRIALS: usize = 1000;

/// Coordinates probed by the empirical check: up to this many, evenly spread.
const CHECK_GRID: usize = 8;

/// Estimates `Pr[X_i ∈ (t−δ, t+δ)]` for a grid of coordinates and centers
/// `t ∈ {0, 1, E[X_i]}` and compares the largest rate against `p` with a
/// three-sigma binomial slack.
///
/// Both built-in models perturb entries independently, so conditioning on the
/// other coordinates does not change these probabilities.
pub fn empirical_nondet_check(
    sampler: &Sampler,
    delta: f64,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<NondetReport> {
    if trials < MIN_CHECK_TRIALS {
        return Err(PerturbError::InsufficientTrials {
            min: MIN_CHECK_TRIALS,
            got: trials,
        });
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(PerturbError::InvalidDelta(delta));
    }
    let base = sampler.base();
    let total = base.n * base.m;
    if total == 0 {
        return Err(PerturbError::Shape("empty matrix".into()));
    }
    let probes = CHECK_GRID.min(total);
    let coords: Vec<(usize, usize)> = (0..probes)
        .map(|k| {
            let flat = k * total / probes;
            (flat % base.n, flat / base.n)
        })
        .collect();
    let mut estimates: Vec<IntervalEstimate> = coords
        .iter()
        .flat_map(|&(row, col)| {
            [0.0, 1.0, sampler.mean(row, col)]
                .into_iter()
                .map(move |center| IntervalEstimate {
                    row,
                    col,
                    center,
                    hit_rate: 0.0,
                })
        })
        .collect();
    for trial in 0..trials {
        let x = sampler.sample(derive_seed(seed, trial as u64))?;
        for e in estimates.iter_mut() {
            if (x.get(e.row, e.col) - e.center).abs() < delta {
                e.hit_rate += 1.0;
            }
        }
    }
    estimates.iter_mut().for_each(|e| e.hit_rate /= trials as f64);
    let max_hit_rate = estimates.iter().fold(0.0f64, |a, e| a.max(e.hit_rate));
    let slack = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    Ok(NondetReport {
        delta,
        p,
        trials,
        slack,
        max_hit_rate,
        pass: max_hit_rate <= p + slack,
        estimates,
    })
}
