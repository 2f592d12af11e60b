//! Tensor-network compression of small neural networks.
//!
//! The crate is split the way the workflow runs: [`tensor`] holds the dense
//! carrier type and spectral primitives, [`tn`] fits weight tensors in
//! fully connected tensor-network format under a storage budget, [`layers`]
//! evaluates convolution and fully connected layers either densely or
//! directly from TN factors, and [`admm`] trains a toy network with a
//! nuclear-norm regularizer so its weights compress well afterwards.
//! [`oracles`] holds brute-force references used by the test suites.

pub mod admm;
pub mod error;
pub mod layers;
pub mod oracles;
pub mod tensor;
pub mod tn;

pub use error::{Error, Result};
pub use tensor::{svd, DenseTensor, Matrix, SvdResult};
pub use tn::{
    als_fit, contract_network, determine_ranks, kappa_for_budget, AlsConfig, AlsFit,
    RankProfile, RankSelection, TnFactorSet, TnTopology,
};
