use rand::Rng;

use crate::error::{arg_err, Error, Result};
use crate::tensor::DenseTensor;

/// Fully connected tensor-network topology: one physical mode per node and a
/// bond of rank `R_{m,n} ≥ 1` between every pair of nodes. Rank-1 bonds are
/// equivalent to absent edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TnTopology {
    dims: Vec<usize>,
    /// Upper triangle in the order (0,1), (0,2), .., (0,N-1), (1,2), ...
    ranks: Vec<usize>,
}

impl TnTopology {
    pub fn new(dims: Vec<usize>, ranks: Vec<usize>) -> Result<Self> {
        let n = dims.len();
        if n < 2 {
            return arg_err(format!("topology needs at least two modes, got {n}"));
        }
        if dims.contains(&0) {
            return arg_err(format!("zero-sized mode in {dims:?}"));
        }
        if ranks.len() != n * (n - 1) / 2 {
            return arg_err(format!(
                "order {n} needs {} ranks, got {}",
                n * (n - 1) / 2,
                ranks.len()
            ));
        }
        if ranks.contains(&0) {
            return arg_err("ranks must be positive");
        }
        Ok(Self { dims, ranks })
    }

    pub fn uniform(dims: Vec<usize>, rank: usize) -> Result<Self> {
        let n = dims.len();
        Self::new(dims, vec![rank; n * n.saturating_sub(1) / 2])
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Ranks in upper-triangle order.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    fn pair_index(&self, m: usize, n: usize) -> usize {
        let (a, b) = if m < n { (m, n) } else { (n, m) };
        let order = self.order();
        debug_assert!(a != b && b < order);
        a * (2 * order - a - 1) / 2 + (b - a - 1)
    }

    /// Bond rank between two distinct modes, in either argument order.
    pub fn rank(&self, m: usize, n: usize) -> usize {
        self.ranks[self.pair_index(m, n)]
    }

    pub fn set_rank(&mut self, m: usize, n: usize, rank: usize) -> Result<()> {
        if m == n || m >= self.order() || n >= self.order() {
            return arg_err(format!("no edge ({m},{n}) in order {}", self.order()));
        }
        if rank == 0 {
            return arg_err("ranks must be positive");
        }
        let idx = self.pair_index(m, n);
        self.ranks[idx] = rank;
        Ok(())
    }

    /// All mode pairs `(m, n)` with `m < n`, in rank-vector order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.order();
        (0..n).flat_map(move |m| (m + 1..n).map(move |k| (m, k)))
    }

    /// Shape of factor `k`: bonds to lower modes, the physical mode, then
    /// bonds to higher modes.
    pub fn factor_shape(&self, k: usize) -> Vec<usize> {
        let mut shape = Vec::with_capacity(self.order());
        for j in 0..self.order() {
            if j == k {
                shape.push(self.dims[k]);
            } else {
                shape.push(self.rank(j, k));
            }
        }
        shape
    }

    /// Product of the bond ranks attached to mode `k`.
    pub fn bond_volume(&self, k: usize) -> usize {
        (0..self.order())
            .filter(|&j| j != k)
            .map(|j| self.rank(j, k))
            .product()
    }

    /// Storage of the factor set: `Σ_k I_k ∏_{j≠k} R_{j,k}`.
    pub fn param_count(&self) -> usize {
        (0..self.order())
            .map(|k| self.dims[k] * self.bond_volume(k))
            .sum()
    }

    /// Edges whose rank is 1; these carry no information and may be dropped.
    pub fn rank_one_edges(&self) -> Vec<(usize, usize)> {
        self.edges().filter(|&(m, n)| self.rank(m, n) == 1).collect()
    }

    /// Whether every rank is within `min(I_m, I_n)`.
    pub fn is_bounded(&self) -> bool {
        self.edges()
            .all(|(m, n)| self.rank(m, n) <= self.dims[m].min(self.dims[n]))
    }
}

pub fn tn_param_count(topology: &TnTopology) -> usize {
    topology.param_count()
}

pub fn prune_rank_one_edges(topology: &TnTopology) -> Vec<(usize, usize)> {
    topology.rank_one_edges()
}

/// A tensor in TN format: a topology and one factor per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TnFactorSet {
    topology: TnTopology,
    factors: Vec<DenseTensor>,
}

impl TnFactorSet {
    pub fn new(topology: TnTopology, factors: Vec<DenseTensor>) -> Result<Self> {
        if factors.len() != topology.order() {
            return Err(Error::Topology(format!(
                "order {} topology given {} factors",
                topology.order(),
                factors.len()
            )));
        }
        for (k, f) in factors.iter().enumerate() {
            let want = topology.factor_shape(k);
            if f.dims() != want.as_slice() {
                return Err(Error::Topology(format!(
                    "factor {k} has shape {:?}, topology requires {:?}",
                    f.dims(),
                    want
                )));
            }
        }
        Ok(Self { topology, factors })
    }

    /// Gaussian factors scaled by `(∏ ranks of k)^(-1/2)`.
    pub fn random<R: Rng + ?Sized>(topology: TnTopology, rng: &mut R) -> Self {
        let factors = (0..topology.order())
            .map(|k| {
                let scale = 1.0 / (topology.bond_volume(k) as f64).sqrt();
                DenseTensor::random_normal(topology.factor_shape(k), scale, rng)
                    .expect("topology shapes are valid")
            })
            .collect();
        Self { topology, factors }
    }

    pub fn topology(&self) -> &TnTopology {
        &self.topology
    }

    pub fn factors(&self) -> &[DenseTensor] {
        &self.factors
    }

    pub fn factor(&self, k: usize) -> &DenseTensor {
        &self.factors[k]
    }

    pub fn into_parts(self) -> (TnTopology, Vec<DenseTensor>) {
        (self.topology, self.factors)
    }

    pub fn param_count(&self) -> usize {
        self.factors.iter().map(DenseTensor::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_vector_order() {
        let t = TnTopology::new(vec![2, 3, 4, 5], vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(t.rank(0, 1), 1);
        assert_eq!(t.rank(0, 3), 3);
        assert_eq!(t.rank(1, 2), 4);
        assert_eq!(t.rank(3, 2), 6);
        assert_eq!(t.factor_shape(2), vec![2, 4, 4, 6]);
        assert_eq!(t.factor_shape(0), vec![2, 1, 2, 3]);
    }

    #[test]
    fn param_count_closed_forms() {
        // (2K + S + T) R^3 for a conv kernel (K, K, S, T).
        let t = TnTopology::uniform(vec![3, 3, 16, 32], 2).unwrap();
        assert_eq!(tn_param_count(&t), 432);
        let ones = TnTopology::uniform(vec![3, 5, 7], 1).unwrap();
        assert_eq!(ones.param_count(), 15);
        let pair = TnTopology::uniform(vec![6, 9], 4).unwrap();
        assert_eq!(pair.param_count(), 4 * 15);
    }

    #[test]
    fn param_count_matches_factor_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = TnTopology::new(vec![2, 3, 4, 2], vec![1, 2, 3, 2, 1, 2]).unwrap();
        let f = TnFactorSet::random(t.clone(), &mut rng);
        assert_eq!(f.param_count(), t.param_count());
    }

    #[test]
    fn pruned_edges() {
        let all_one = TnTopology::uniform(vec![2, 2, 2, 2], 1).unwrap();
        assert_eq!(prune_rank_one_edges(&all_one).len(), 6);
        let mut tt = all_one.clone();
        tt.set_rank(0, 1, 2).unwrap();
        tt.set_rank(1, 2, 2).unwrap();
        tt.set_rank(2, 3, 2).unwrap();
        assert_eq!(prune_rank_one_edges(&tt), vec![(0, 2), (0, 3), (1, 3)]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TnTopology::new(vec![3], vec![]).is_err());
        assert!(TnTopology::new(vec![3, 3], vec![1, 1]).is_err());
        assert!(TnTopology::new(vec![3, 3], vec![0]).is_err());
        let t = TnTopology::uniform(vec![3, 3], 2).unwrap();
        let bad = vec![
            DenseTensor::zeros(vec![3, 2]).unwrap(),
            DenseTensor::zeros(vec![3, 2]).unwrap(),
        ];
        assert!(matches!(TnFactorSet::new(t, bad), Err(Error::Topology(_))));
    }
}
