//! Alternating least squares fitting of a TN factor set to a dense tensor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{pseudo_inverse, DenseTensor, Matrix};

use super::contract::{complement_matrix, contract_flat};
use super::topology::{TnFactorSet, TnTopology};

#[derive(Debug, Clone, PartialEq)]
pub struct AlsConfig {
    pub max_sweeps: usize,
    /// Stop once the relative error, or its change over a sweep, falls to
    /// this level.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 300,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl AlsConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Cutoff, relative to the largest singular value, in the Gram pseudo-inverse.
pub const GRAM_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AlsFit {
    pub factors: TnFactorSet,
    /// `‖ℜ(Z) − t‖_F / ‖t‖_F` of the returned (32-bit) factors.
    pub rse: f64,
    /// Relative error before the first sweep and after each sweep, computed
    /// on the 64-bit working factors.
    pub history: Vec<f64>,
    pub sweeps: usize,
}

pub fn als_fit(t: &DenseTensor, topology: &TnTopology, cfg: &AlsConfig) -> Result<AlsFit> {
    if t.dims() != topology.dims() {
        return Err(Error::Topology(format!(
            "tensor dims {:?} differ from topology dims {:?}",
            t.dims(),
            topology.dims()
        )));
    }
    if cfg.max_sweeps == 0 || !(cfg.tolerance > 0.0) {
        return Err(Error::Argument(
            "ALS needs at least one sweep and a positive tolerance".into(),
        ));
    }
    let order = topology.order();
    let target = t.to_f64();
    let target_norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unfoldings: Vec<Matrix> = (0..order)
        .map(|n| t.k_unfold(n))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = TnFactorSet::random(topology.clone(), &mut rng);
    let mut factors: Vec<Vec<f64>> = init.factors().iter().map(DenseTensor::to_f64).collect();

    let rse_of = |factors: &[Vec<f64>]| -> f64 {
        let approx = contract_flat(topology, factors, false);
        let diff = approx
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if target_norm > 0.0 {
            diff / target_norm
        } else {
            diff
        }
    };

    let mut history = vec![rse_of(&factors)];
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        for n in 0..order {
            factors[n] = solve_block(topology, &factors, n, &unfoldings[n])?;
        }
        sweeps += 1;
        let rse = rse_of(&factors);
        if !rse.is_finite() {
            return Err(Error::Numeric(format!("ALS error became {rse} at sweep {sweeps}")));
        }
        let prev = *history.last().unwrap();
        history.push(rse);
        if rse <= cfg.tolerance || (prev - rse).abs() <= cfg.tolerance {
            break;
        }
    }

    let tensors = factors
        .iter()
        .enumerate()
        .map(|(k, data)| DenseTensor::from_f64(topology.factor_shape(k), data))
        .collect();
    let set = TnFactorSet::new(topology.clone(), tensors)?;
    let rse = super::contract::contract_network(&set).relative_error(t)?;
    Ok(AlsFit {
        factors: set,
        rse,
        history,
        sweeps,
    })
}

/// Least-squares update `Z_n ← X_(n) Z_≠n (Z_≠nᵀ Z_≠n)†`, returned in factor
/// layout.
fn solve_block(
    topology: &TnTopology,
    factors: &[Vec<f64>],
    n: usize,
    unfolding: &Matrix,
) -> Result<Vec<f64>> {
    let zc = complement_matrix(topology, factors, n);
    // Zc (ZcᵀZc)† equals (Zc†)ᵀ; factoring Zc itself avoids squaring its
    // condition number. A Gram eigenvalue cutoff c is a singular value
    // cutoff √c.
    let solved = unfolding * pseudo_inverse(&zc, GRAM_CUTOFF.sqrt())?.transpose();
    if solved.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite ALS update for factor {n}")));
    }
    // `solved` is I_n × bonds (column-major == I_n fastest). Move the physical
    // axis behind the bonds to lower modes.
    let mut dims = vec![topology.dims()[n]];
    dims.extend((0..topology.order()).filter(|&j| j != n).map(|j| topology.rank(j, n)));
    let perm: Vec<usize> = (0..topology.order())
        .map(|j| match j.cmp(&n) {
            std::cmp::Ordering::Less => j + 1,
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Greater => j,
        })
        .collect();
    Ok(crate::tensor::permute_flat(solved.as_slice(), &dims, &perm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tn::contract::contract_network;

    #[test]
    fn full_rank_matrix_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = DenseTensor::random_normal(vec![5, 4], 1.0, &mut rng).unwrap();
        let topo = TnTopology::uniform(vec![5, 4], 4).unwrap();
        let fit = als_fit(&t, &topo, &AlsConfig::default()).unwrap();
        assert!(fit.rse <= 1e-5, "rse {}", fit.rse);
    }

    #[test]
    fn planted_rank_one_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let topo = TnTopology::uniform(vec![4, 5, 6], 1).unwrap();
        let t = contract_network(&TnFactorSet::random(topo.clone(), &mut rng));
        let fit = als_fit(&t, &topo, &AlsConfig::with_seed(5)).unwrap();
        assert!(fit.rse <= 1e-4, "rse {}", fit.rse);
    }

    #[test]
    fn error_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let topo = TnTopology::uniform(vec![4, 4, 4], 2).unwrap();
        let t = contract_network(&TnFactorSet::random(topo.clone(), &mut rng));
        for seed in 0..4 {
            let fit = als_fit(&t, &topo, &AlsConfig::with_seed(seed)).unwrap();
            assert!(fit.history.windows(2).all(|w| w[1] <= w[0] + 1e-7));
            assert!(fit.sweeps <= 300 && fit.history.len() == fit.sweeps + 1);
        }
    }

    #[test]
    fn mismatched_topology_is_rejected() {
        let t = DenseTensor::zeros(vec![3, 3]).unwrap();
        let topo = TnTopology::uniform(vec![3, 4], 1).unwrap();
        assert!(matches!(
            als_fit(&t, &topo, &AlsConfig::default()),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t = DenseTensor::random_normal(vec![3, 4, 3], 1.0, &mut rng).unwrap();
        let topo = TnTopology::uniform(vec![3, 4, 3], 2).unwrap();
        let a = als_fit(&t, &topo, &AlsConfig::with_seed(9)).unwrap();
        let b = als_fit(&t, &topo, &AlsConfig::with_seed(9)).unwrap();
        assert_eq!(a.factors, b.factors);
        assert_eq!(a.history, b.history);
    }
}
