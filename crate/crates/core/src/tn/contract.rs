//! Pairwise contraction of labelled tensors, and the sequential network
//! contraction built on it.
//!
//! Networks are merged left to right: the running result absorbs factor 1,
//! then factor 2, and so on, summing each bond as soon as both endpoints are
//! present. Intermediates are 64-bit.

use crate::tensor::{permute_flat, DenseTensor, Matrix};

use super::topology::{TnFactorSet, TnTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Leg {
    Mode(usize),
    /// Bond between modes `a < b`.
    Bond(usize, usize),
}

impl Leg {
    pub(crate) fn bond(a: usize, b: usize) -> Self {
        if a < b {
            Self::Bond(a, b)
        } else {
            Self::Bond(b, a)
        }
    }
}

/// A first-index-fastest tensor whose axes carry leg labels.
#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub legs: Vec<Leg>,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Node {
    /// Factor `k` of a topology, axes labelled in factor-shape order.
    pub fn factor(topology: &TnTopology, k: usize, data: Vec<f64>) -> Self {
        let legs = (0..topology.order())
            .map(|j| if j == k { Leg::Mode(k) } else { Leg::bond(j, k) })
            .collect();
        let dims = topology.factor_shape(k);
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { legs, dims, data }
    }

    /// Drops size-1 axes; the flat data is unchanged.
    pub fn squeeze(mut self) -> Self {
        let keep: Vec<bool> = self.dims.iter().map(|&d| d != 1).collect();
        let mut k = keep.iter();
        self.legs.retain(|_| *k.next().unwrap());
        self.dims.retain(|&d| d != 1);
        self
    }

    fn position(&self, leg: Leg) -> Option<usize> {
        self.legs.iter().position(|&l| l == leg)
    }

    /// Reorders axes to the given leg order, which must name every leg once.
    pub fn permute_to(&self, order: &[Leg]) -> Self {
        let perm: Vec<usize> = order
            .iter()
            .map(|&l| self.position(l).expect("leg present"))
            .collect();
        let data = permute_flat(&self.data, &self.dims, &perm);
        Self {
            legs: order.to_vec(),
            dims: perm.iter().map(|&p| self.dims[p]).collect(),
            data,
        }
    }

    /// Sums over every leg shared with `other`. The result's legs are this
    /// node's free legs followed by `other`'s free legs. Adds the number of
    /// multiply-accumulates to `macs`.
    pub fn contract(&self, other: &Node, macs: &mut u64) -> Node {
        let shared: Vec<Leg> = self
            .legs
            .iter()
            .copied()
            .filter(|l| other.legs.contains(l))
            .collect();
        let free_a: Vec<Leg> = self
            .legs
            .iter()
            .copied()
            .filter(|l| !shared.contains(l))
            .collect();
        let free_b: Vec<Leg> = other
            .legs
            .iter()
            .copied()
            .filter(|l| !shared.contains(l))
            .collect();

        let a_order: Vec<Leg> = free_a.iter().chain(&shared).copied().collect();
        let b_order: Vec<Leg> = shared.iter().chain(&free_b).copied().collect();
        let a = self.permute_to(&a_order);
        let b = other.permute_to(&b_order);

        let fa: usize = a.dims[..free_a.len()].iter().product();
        let s: usize = a.dims[free_a.len()..].iter().product();
        let fb: usize = b.dims[shared.len()..].iter().product();

        let mut out = vec![0.0f64; fa * fb];
        for j in 0..fb {
            let col = &mut out[j * fa..(j + 1) * fa];
            for k in 0..s {
                let bv = b.data[k + s * j];
                let a_col = &a.data[k * fa..(k + 1) * fa];
                for (o, &av) in col.iter_mut().zip(a_col) {
                    *o += av * bv;
                }
            }
        }
        *macs += (fa * s * fb) as u64;

        let mut dims: Vec<usize> = a.dims[..free_a.len()].to_vec();
        dims.extend_from_slice(&b.dims[shared.len()..]);
        let mut legs = free_a;
        legs.extend(free_b);
        Node { legs, dims, data: out }
    }
}

pub(crate) fn factor_nodes(topology: &TnTopology, factors: &[Vec<f64>], squeeze: bool) -> Vec<Node> {
    factors
        .iter()
        .enumerate()
        .map(|(k, data)| {
            let node = Node::factor(topology, k, data.clone());
            if squeeze {
                node.squeeze()
            } else {
                node
            }
        })
        .collect()
}

/// Merges the given nodes left to right.
pub(crate) fn merge_sequential<'a>(nodes: impl IntoIterator<Item = &'a Node>, macs: &mut u64) -> Node {
    let mut it = nodes.into_iter();
    let first = it.next().expect("at least one node").clone();
    it.fold(first, |acc, node| acc.contract(node, macs))
}

/// Full contraction as a flat first-index-fastest buffer over all modes.
pub(crate) fn contract_flat(topology: &TnTopology, factors: &[Vec<f64>], squeeze: bool) -> Vec<f64> {
    let nodes = factor_nodes(topology, factors, squeeze);
    let mut macs = 0;
    let merged = merge_sequential(&nodes, &mut macs);
    let order: Vec<Leg> = (0..topology.order())
        .map(Leg::Mode)
        .filter(|l| merged.legs.contains(l))
        .collect();
    // Squeezed size-1 physical modes never appear; their position does not
    // affect the flat layout.
    merged.permute_to(&order).data
}

/// Contraction of every factor except `n`, reshaped to
/// `∏_{i≠n} I_i × ∏_{j≠n} R_{j,n}`. Rows are little-endian over the other
/// physical modes in ascending order, columns over the bonds of `n` ordered
/// by their far endpoint.
pub(crate) fn complement_matrix(topology: &TnTopology, factors: &[Vec<f64>], n: usize) -> Matrix {
    let nodes = factor_nodes(topology, factors, false);
    let mut macs = 0;
    let merged = merge_sequential(
        nodes.iter().enumerate().filter(|(k, _)| *k != n).map(|(_, v)| v),
        &mut macs,
    );
    let others: Vec<usize> = (0..topology.order()).filter(|&i| i != n).collect();
    let mut order: Vec<Leg> = others.iter().map(|&i| Leg::Mode(i)).collect();
    order.extend(others.iter().map(|&j| Leg::bond(j, n)));
    let permuted = merged.permute_to(&order);
    let rows: usize = others.iter().map(|&i| topology.dims()[i]).product();
    let cols = topology.bond_volume(n);
    Matrix::from_vec(rows, cols, permuted.data)
}

pub(crate) fn factors_f64(set: &TnFactorSet) -> Vec<Vec<f64>> {
    set.factors().iter().map(DenseTensor::to_f64).collect()
}

/// Contracts a factor set into the full tensor `I_1 × … × I_N`.
pub fn contract_network(set: &TnFactorSet) -> DenseTensor {
    let topo = set.topology();
    let flat = contract_flat(topo, &factors_f64(set), false);
    DenseTensor::from_f64(topo.dims().to_vec(), &flat)
}

/// Same contraction with every size-1 axis removed from the factors first.
/// Rank-1 bonds then never appear; the result is bit-identical to
/// [`contract_network`].
pub fn contract_network_squeezed(set: &TnFactorSet) -> DenseTensor {
    let topo = set.topology();
    let flat = contract_flat(topo, &factors_f64(set), true);
    DenseTensor::from_f64(topo.dims().to_vec(), &flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_factor_network_is_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let topo = TnTopology::uniform(vec![4, 5], 3).unwrap();
        let f = TnFactorSet::random(topo, &mut rng);
        // Factor 0 is (I_1, r), factor 1 is (r, I_2).
        let a = f.factor(0).k_unfold(0).unwrap();
        let b = f.factor(1).k_unfold(0).unwrap();
        let expect = a * b;
        let got = contract_network(&f).k_unfold(0).unwrap();
        assert!((got - expect).norm() < 1e-5);
    }

    #[test]
    fn rank_one_network_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let topo = TnTopology::uniform(vec![2, 3, 4], 1).unwrap();
        let f = TnFactorSet::random(topo, &mut rng);
        let out = contract_network(&f);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    let want = f64::from(f.factor(0).data()[i])
                        * f64::from(f.factor(1).data()[j])
                        * f64::from(f.factor(2).data()[k]);
                    assert!((f64::from(out.get(&[i, j, k])) - want).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn squeezed_contraction_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let topo = TnTopology::new(vec![3, 2, 4, 3], vec![2, 1, 1, 2, 1, 3]).unwrap();
        let f = TnFactorSet::random(topo, &mut rng);
        assert_eq!(contract_network(&f).data(), contract_network_squeezed(&f).data());
    }

    #[test]
    fn complement_reproduces_full_unfolding() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let topo = TnTopology::new(vec![3, 2, 4], vec![2, 3, 2]).unwrap();
        let f = TnFactorSet::random(topo.clone(), &mut rng);
        let fs = factors_f64(&f);
        let full = contract_network(&f);
        for n in 0..3 {
            let zc = complement_matrix(&topo, &fs, n);
            // Factor n as I_n × bonds, bonds ordered by far endpoint.
            let shape = topo.factor_shape(n);
            let mut perm = vec![n];
            perm.extend((0..3).filter(|&j| j != n));
            let zn = f.factor(n).permute(&perm).unwrap();
            let zn = Matrix::from_iterator(shape[n], topo.bond_volume(n), zn.data().iter().map(|&v| f64::from(v)));
            let rebuilt = zn * zc.transpose();
            let unfolded = full.k_unfold(n).unwrap();
            assert!((rebuilt - unfolded).norm() < 1e-5);
        }
    }
}
