//! Generalized tensor networks: topology, contraction, adaptive ranks and ALS.

mod als;
mod contract;
mod ranks;
mod topology;

pub use als::{als_fit, AlsConfig, AlsFit, GRAM_CUTOFF};
pub use contract::{contract_network, contract_network_squeezed};
pub(crate) use contract::{Leg, Node};
pub use ranks::{
    determine_ranks, kappa_for_budget, search_kappa, KappaSearch, PairSpectrum, RankProfile,
    RankSelection, KAPPA_FLOOR, KAPPA_RESOLUTION,
};
pub use topology::{prune_rank_one_edges, tn_param_count, TnFactorSet, TnTopology};
