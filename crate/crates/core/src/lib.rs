//! Smoothed recovery of weighted Venn diagrams from intersection-size
//! measurements, with echelon-tree certificates and assembly-calculus
//! graph representations.
//!
//! The numerical core ([`tensor`], [`echelon`], [`decomp`]) is generic over
//! [`Scalar`] (`f32` or `f64`); the data-facing modules work in `f64`.

pub mod assemblies;
pub mod decomp;
pub mod echelon;
pub mod experiment;
mod linalg;
pub mod perturb;
pub mod scalar;
pub mod tensor;
pub mod venn;

pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type SubspaceBasis64 = echelon::SubspaceBasis<f64>;
pub type SubspaceBasis32 = echelon::SubspaceBasis<f32>;
pub type EchelonTree64 = echelon::EchelonTree<f64>;
pub type EchelonTree32 = echelon::EchelonTree<f32>;
pub type FactorMatrix64 = decomp::FactorMatrix<f64>;
pub type FactorMatrix32 = decomp::FactorMatrix<f32>;
pub type Decomposition64 = decomp::DecompositionResult<f64>;
pub type Decomposition32 = decomp::DecompositionResult<f32>;
pub type RankOneTerm64 = decomp::RankOneTerm<f64>;
pub type RankOneTerm32 = decomp::RankOneTerm<f32>;
