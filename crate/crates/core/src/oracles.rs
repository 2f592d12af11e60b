//! Brute-force references and rank-bound checks, kept independent of the
//! contraction engine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, Error, Result};
use crate::tensor::{svd, DenseTensor, Matrix};
use crate::tn::{TnFactorSet, TnTopology};

/// Default cap on the number of products [`brute_force_contract`] may sum.
pub const BRUTE_FORCE_LIMIT: u128 = 100_000_000;

/// Full contraction by the literal nested sum: every output entry sums, over
/// every joint assignment of bond indices, the product of one entry from
/// each factor.
pub fn brute_force_contract(f: &TnFactorSet) -> Result<DenseTensor> {
    brute_force_contract_limited(f, BRUTE_FORCE_LIMIT)
}

pub fn brute_force_contract_limited(f: &TnFactorSet, limit: u128) -> Result<DenseTensor> {
    let topo = f.topology();
    let order = topo.order();
    let edges: Vec<(usize, usize)> = topo.edges().collect();
    let ranks: Vec<usize> = edges.iter().map(|&(m, n)| topo.rank(m, n)).collect();
    let entries: u128 = topo.dims().iter().map(|&d| d as u128).product();
    let assignments: u128 = ranks.iter().map(|&r| r as u128).product();
    let terms = entries * assignments;
    if terms > limit {
        return Err(Error::Size { terms, limit });
    }

    let factors: Vec<Vec<f64>> = f.factors().iter().map(DenseTensor::to_f64).collect();
    let shapes: Vec<Vec<usize>> = (0..order).map(|k| topo.factor_shape(k)).collect();
    let edge_index = |a: usize, b: usize| {
        edges
            .iter()
            .position(|&(m, n)| (m, n) == (a.min(b), a.max(b)))
            .expect("edge exists")
    };
    // For factor k, which bond (edge slot) each of its axes reads; None marks
    // the physical axis.
    let axes: Vec<Vec<Option<usize>>> = (0..order)
        .map(|k| {
            (0..order)
                .map(|j| if j == k { None } else { Some(edge_index(j, k)) })
                .collect()
        })
        .collect();

    let dims = topo.dims().to_vec();
    let mut out = Vec::with_capacity(entries as usize);
    let mut idx = vec![0usize; order];
    for _ in 0..entries {
        let mut total = 0.0f64;
        let mut bonds = vec![0usize; edges.len()];
        for _ in 0..assignments {
            let mut prod = 1.0f64;
            for k in 0..order {
                let mut offset = 0;
                let mut stride = 1;
                for (axis, slot) in axes[k].iter().enumerate() {
                    let i = match slot {
                        None => idx[k],
                        Some(e) => bonds[*e],
                    };
                    offset += i * stride;
                    stride *= shapes[k][axis];
                }
                prod *= factors[k][offset];
            }
            total += prod;
            odometer(&mut bonds, &ranks);
        }
        out.push(total);
        odometer(&mut idx, &dims);
    }
    let data = out.into_iter().map(|v| v as f32).collect();
    DenseTensor::new(dims, data)
}

fn odometer(idx: &mut [usize], dims: &[usize]) {
    for (i, &d) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < d {
            return;
        }
        *i = 0;
    }
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand::Rng;
    (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}

/// Sum of `rank` random Gaussian outer products.
pub fn generate_cp(dims: &[usize], rank: usize, seed: u64) -> Result<DenseTensor> {
    if rank == 0 || dims.is_empty() || dims.contains(&0) {
        return arg_err(format!("bad CP generator: dims {dims:?}, rank {rank}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Factor k is I_k × rank, column-major.
    let factors: Vec<Vec<f64>> = dims.iter().map(|&d| normal_matrix(d, rank, &mut rng)).collect();
    DenseTensor::from_fn(dims.to_vec(), |i| {
        let mut acc = 0.0f64;
        for r in 0..rank {
            let mut p = 1.0;
            for (k, &ik) in i.iter().enumerate() {
                p *= factors[k][ik + dims[k] * r];
            }
            acc += p;
        }
        acc as f32
    })
}

/// A random core of shape `ranks` multiplied along each mode by a random
/// `I_k × r_k` matrix.
pub fn generate_tucker(dims: &[usize], ranks: &[usize], seed: u64) -> Result<DenseTensor> {
    if dims.len() != ranks.len() || dims.is_empty() || dims.contains(&0) || ranks.contains(&0) {
        return arg_err(format!("bad Tucker generator: dims {dims:?}, ranks {ranks:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core_len: usize = ranks.iter().product();
    let core = normal_matrix(core_len, 1, &mut rng);
    let factors: Vec<Vec<f64>> = dims
        .iter()
        .zip(ranks)
        .map(|(&d, &r)| normal_matrix(d, r, &mut rng))
        .collect();
    let mut current = core;
    let mut shape = ranks.to_vec();
    // Mode products one at a time: mode k goes from r_k to I_k.
    for k in 0..dims.len() {
        let before: usize = shape[..k].iter().product();
        let after: usize = shape[k + 1..].iter().product();
        let (r, d) = (shape[k], dims[k]);
        let mut next = vec![0.0f64; before * d * after];
        for a in 0..after {
            for j in 0..r {
                for i in 0..d {
                    let u = factors[k][i + d * j];
                    for b in 0..before {
                        next[b + before * (i + d * a)] += u * current[b + before * (j + r * a)];
                    }
                }
            }
        }
        current = next;
        shape[k] = d;
    }
    DenseTensor::new(dims.to_vec(), current.into_iter().map(|v| v as f32).collect())
}

/// Count of singular values above `rel · σ_max`.
pub fn numerical_rank(mat: &Matrix, rel: f64) -> Result<usize> {
    let s = svd(mat)?;
    let top = s.singular_values.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.singular_values.iter().filter(|&&v| v > rel * top).count())
}

/// Threshold, relative to `σ_max`, for counting a singular value as nonzero.
pub const RANK_TOLERANCE: f64 = 1e-6;

/// The smallest `x` with `‖σ_{1:x}‖² / ‖σ‖² ≥ κ`; 0 for a zero matrix.
pub fn effective_rank(mat: &Matrix, kappa: f64) -> Result<usize> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return arg_err(format!("kappa must lie in (0, 1], got {kappa}"));
    }
    let s = svd(mat)?;
    let total: f64 = s.singular_values.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (i, v) in s.singular_values.iter().enumerate() {
        acc += v * v;
        if acc / total >= kappa {
            return Ok(i + 1);
        }
    }
    Ok(s.singular_values.len())
}

/// How a tensor under test was built.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// CP rank, with a TN rank table when one is known.
    Cp {
        rank: usize,
        tn: Option<TnTopology>,
    },
    Tucker {
        ranks: Vec<usize>,
    },
}

impl Generator {
    pub fn tag(&self) -> String {
        match self {
            Self::Cp { rank, .. } => format!("cp({rank})"),
            Self::Tucker { ranks } => format!(
                "tucker({})",
                ranks.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartitionCheck {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub observed: usize,
    pub bound: usize,
    /// Product of the TN ranks cut by the bipartition; `None` when no rank
    /// table was given.
    pub tn_bound: Option<usize>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankBoundReport {
    pub generator: String,
    pub checks: Vec<BipartitionCheck>,
}

impl RankBoundReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn violations(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }
}

/// Checks every generalized unfolding `X_[A;B]` (mode 0 in `A`) against the
/// rank bound implied by the generator.
pub fn check_theorem1(t: &DenseTensor, generator: &Generator) -> Result<RankBoundReport> {
    let n = t.order();
    if n < 2 {
        return arg_err("rank bounds need order >= 2");
    }
    match generator {
        Generator::Tucker { ranks } if ranks.len() != n => {
            return arg_err(format!("{} Tucker ranks for order {n}", ranks.len()));
        }
        Generator::Cp { tn: Some(topo), .. } if topo.dims() != t.dims() => {
            return Err(Error::Topology(format!(
                "rank table over {:?} for tensor {:?}",
                topo.dims(),
                t.dims()
            )));
        }
        _ => {}
    }
    let mut checks = Vec::new();
    for mask in 0u32..(1 << (n - 1)) - 1 {
        // Mode 0 always sits in the row set; the remaining modes follow the mask.
        let rows: Vec<usize> = std::iter::once(0)
            .chain((1..n).filter(|&k| mask >> (k - 1) & 1 == 1))
            .collect();
        let cols: Vec<usize> = (0..n).filter(|k| !rows.contains(k)).collect();
        let observed = numerical_rank(&t.matricize(&rows, &cols)?, RANK_TOLERANCE)?;
        let (bound, tn_bound) = match generator {
            Generator::Cp { rank, tn } => {
                let cut = tn.as_ref().map(|topo| {
                    rows.iter()
                        .flat_map(|&a| cols.iter().map(move |&b| topo.rank(a, b)))
                        .product::<usize>()
                });
                (cut.map_or(*rank, |c| c.min(*rank)), cut)
            }
            Generator::Tucker { ranks } => {
                let p = |m: &[usize]| m.iter().map(|&k| ranks[k]).product::<usize>();
                (p(&rows).min(p(&cols)), None)
            }
        };
        checks.push(BipartitionCheck {
            pass: observed <= bound,
            rows,
            cols,
            observed,
            bound,
            tn_bound,
        });
    }
    Ok(RankBoundReport {
        generator: generator.tag(),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tn::contract_network;

    #[test]
    fn brute_force_matches_engine() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let topo = TnTopology::new(vec![3, 2, 4, 2], vec![2, 1, 2, 2, 1, 2]).unwrap();
        let f = TnFactorSet::random(topo, &mut rng);
        let a = brute_force_contract(&f).unwrap();
        assert!(a.relative_error(&contract_network(&f)).unwrap() < 1e-6);
    }

    #[test]
    fn term_budget_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = TnFactorSet::random(TnTopology::uniform(vec![4, 4, 4], 3).unwrap(), &mut rng);
        assert!(matches!(
            brute_force_contract_limited(&f, 1000),
            Err(Error::Size { terms: 1728, limit: 1000 })
        ));
    }

    #[test]
    fn effective_rank_examples() {
        assert_eq!(effective_rank(&Matrix::identity(4, 4), 0.5).unwrap(), 2);
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 0.0]));
        assert_eq!(effective_rank(&d, 0.9).unwrap(), 1);
        assert_eq!(effective_rank(&Matrix::zeros(3, 2), 0.5).unwrap(), 0);
        assert!(effective_rank(&d, 0.0).is_err());
    }

    #[test]
    fn generators_have_expected_ranks() {
        let cp = generate_cp(&[3, 3, 3], 1, 4).unwrap();
        let r = check_theorem1(&cp, &Generator::Cp { rank: 1, tn: None }).unwrap();
        assert!(r.passed() && r.checks.iter().all(|c| c.observed == 1));
        assert_eq!(r.checks.len(), 3);

        let cp2 = generate_cp(&[3, 3, 3], 2, 5).unwrap();
        let r = check_theorem1(&cp2, &Generator::Cp { rank: 2, tn: None }).unwrap();
        assert!(r.checks.iter().all(|c| c.observed == 2));

        let tk = generate_tucker(&[4, 5, 4], &[2, 3, 2], 6).unwrap();
        let r = check_theorem1(&tk, &Generator::Tucker { ranks: vec![2, 3, 2] }).unwrap();
        assert!(r.passed());
        let single = r.checks.iter().find(|c| c.rows == vec![0]).unwrap();
        assert_eq!((single.bound, single.observed), (2, 2));

        let ones = generate_tucker(&[3, 4, 2], &[1, 1, 1], 7).unwrap();
        let r = check_theorem1(&ones, &Generator::Tucker { ranks: vec![1, 1, 1] }).unwrap();
        assert!(r.checks.iter().all(|c| c.observed == 1));
    }
}
