//! Adaptive TN-rank selection from mode-pair spectra, and the κ search that
//! fits a storage budget.

use crate::error::{arg_err, Error, Result};
use crate::tensor::{svd, DenseTensor};

use super::topology::TnTopology;

/// Spectral summary of one mode pair `(m, n)`.
///
/// `summed` is the element-wise sum, over every frontal slice of the
/// `(m,n)`-unfolding, of the slice's singular values (aligned by sorted
/// position, zero padded to `min(I_m, I_n)`). `retention[x-1]` is
/// `‖summed[..x]‖² / ‖summed‖²`; this curve drives rank selection.
/// `energy_retention` is the alternative that sums squared singular values
/// before accumulating; it is kept for reporting only.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpectrum {
    pub modes: (usize, usize),
    pub summed: Vec<f64>,
    pub retention: Vec<f64>,
    pub energy_retention: Vec<f64>,
}

impl PairSpectrum {
    fn from_tensor(t: &DenseTensor, m: usize, n: usize) -> Result<Self> {
        let stack = t.mn_unfold(m, n)?;
        let len = t.dims()[m].min(t.dims()[n]);
        let mut summed = vec![0.0f64; len];
        let mut squared = vec![0.0f64; len];
        for c in 0..stack.dims()[2] {
            let s = svd(&stack.frontal_slice(c)?)?;
            // Entries are 32-bit, so anything below their rounding level is
            // noise rather than spectrum.
            let floor = s.singular_values.first().copied().unwrap_or(0.0)
                * f64::from(f32::EPSILON)
                * t.dims()[m].max(t.dims()[n]) as f64;
            for (i, &v) in s.singular_values.iter().enumerate().filter(|(_, &v)| v > floor) {
                summed[i] += v;
                squared[i] += v * v;
            }
        }
        Ok(Self {
            modes: (m, n),
            retention: cumulative_ratio(summed.iter().map(|v| v * v)),
            energy_retention: cumulative_ratio(squared.iter().copied()),
            summed,
        })
    }

    /// Smallest `x` with `retention[x-1] ≥ κ`; 1 for an all-zero spectrum.
    pub fn rank_at(&self, kappa: f64) -> usize {
        self.retention
            .iter()
            .position(|&r| r >= kappa)
            .map_or(1, |p| p + 1)
    }
}

fn cumulative_ratio(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let cum: Vec<f64> = values
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    // The last partial sum is the total, so the curve ends at exactly 1.
    let total = acc;
    if total > 0.0 {
        cum.into_iter().map(|c| c / total).collect()
    } else {
        vec![0.0; cum.len()]
    }
}

/// κ-independent spectra of every mode pair of a tensor. Ranks for any κ
/// are read off without further decompositions.
#[derive(Debug, Clone, PartialEq)]
pub struct RankProfile {
    dims: Vec<usize>,
    spectra: Vec<PairSpectrum>,
}

impl RankProfile {
    pub fn new(t: &DenseTensor) -> Result<Self> {
        let order = t.order();
        if order < 2 {
            return arg_err("rank selection needs order >= 2");
        }
        let mut spectra = Vec::with_capacity(order * (order - 1) / 2);
        for m in 0..order {
            for n in m + 1..order {
                spectra.push(PairSpectrum::from_tensor(t, m, n)?);
            }
        }
        Ok(Self {
            dims: t.dims().to_vec(),
            spectra,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spectra(&self) -> &[PairSpectrum] {
        &self.spectra
    }

    pub fn topology_at(&self, kappa: f64) -> Result<TnTopology> {
        check_kappa(kappa)?;
        let ranks = self.spectra.iter().map(|s| s.rank_at(kappa)).collect();
        TnTopology::new(self.dims.clone(), ranks)
    }

    pub fn select(&self, kappa: f64) -> Result<RankSelection> {
        Ok(RankSelection {
            kappa,
            topology: self.topology_at(kappa)?,
            spectra: self.spectra.clone(),
        })
    }

    /// Parameter count of the topology selected at κ.
    pub fn params_at(&self, kappa: f64) -> Result<usize> {
        Ok(self.topology_at(kappa)?.param_count())
    }
}

/// Ranks chosen for a given information-retention level κ.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSelection {
    pub kappa: f64,
    pub topology: TnTopology,
    pub spectra: Vec<PairSpectrum>,
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return arg_err(format!("kappa must lie in (0, 1], got {kappa}"));
    }
    Ok(())
}

pub fn determine_ranks(t: &DenseTensor, kappa: f64) -> Result<RankSelection> {
    check_kappa(kappa)?;
    RankProfile::new(t)?.select(kappa)
}

/// Smallest κ ever probed. Ranks there are all 1 unless a pair's leading
/// singular direction carries less than this share of its spectrum.
pub const KAPPA_FLOOR: f64 = 1.0 / (1u64 << 32) as f64;
/// The bisection stops once the bracket is this narrow.
pub const KAPPA_RESOLUTION: f64 = 1.0 / 1024.0;
const MAX_PROBES: usize = 32;

/// Outcome of a κ search against a parameter budget.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaSearch {
    pub kappa: f64,
    pub params: usize,
    pub dense_params: usize,
    pub probes: usize,
}

impl KappaSearch {
    pub fn achieved_ratio(&self) -> f64 {
        self.dense_params as f64 / self.params as f64
    }
}

/// Largest κ whose parameter count satisfies `dense / target_ratio`.
///
/// `cost` must be non-decreasing in κ. κ = 1 is tried first; otherwise the
/// search bisects `[0, 1]`, so every probe is a dyadic rational and the
/// answer after the bracket shrinks to [`KAPPA_RESOLUTION`] is the largest
/// feasible multiple of it. If no such multiple is feasible, bisection
/// continues toward [`KAPPA_FLOOR`] within the probe limit.
pub fn search_kappa(
    dense_params: usize,
    target_ratio: f64,
    mut cost: impl FnMut(f64) -> Result<usize>,
) -> Result<KappaSearch> {
    if !(target_ratio > 1.0) || !target_ratio.is_finite() {
        return arg_err(format!("target ratio must exceed 1, got {target_ratio}"));
    }
    let budget = dense_params as f64 / target_ratio;
    let floor_params = cost(KAPPA_FLOOR)?;
    if floor_params as f64 > budget {
        return Err(Error::Budget {
            max_params: budget,
            min_params: floor_params,
            min_ratio: dense_params as f64 / floor_params as f64,
        });
    }
    let mut probes = 1;
    let top = cost(1.0)?;
    probes += 1;
    if top as f64 <= budget {
        return Ok(KappaSearch {
            kappa: 1.0,
            params: top,
            dense_params,
            probes,
        });
    }

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best: Option<(f64, usize)> = None;
    while probes < MAX_PROBES && (hi - lo > KAPPA_RESOLUTION || best.is_none()) {
        let mid = 0.5 * (lo + hi);
        if mid <= KAPPA_FLOOR {
            break;
        }
        let p = cost(mid)?;
        probes += 1;
        if p as f64 <= budget {
            lo = mid;
            best = Some((mid, p));
        } else {
            hi = mid;
        }
    }
    let (kappa, params) = best.unwrap_or((KAPPA_FLOOR, floor_params));
    Ok(KappaSearch {
        kappa,
        params,
        dense_params,
        probes,
    })
}

/// κ and ranks for a single tensor under a compression target
/// `dense / TN ≥ target_ratio`.
pub fn kappa_for_budget(t: &DenseTensor, target_ratio: f64) -> Result<(KappaSearch, RankSelection)> {
    let profile = RankProfile::new(t)?;
    let search = search_kappa(t.len(), target_ratio, |k| profile.params_at(k))?;
    let selection = profile.select(search.kappa)?;
    Ok((search, selection))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rank_one(dims: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vecs: Vec<Vec<f32>> = dims
            .iter()
            .map(|&d| (0..d).map(|_| rand::Rng::random_range(&mut rng, 0.5f32..1.5)).collect())
            .collect();
        DenseTensor::from_fn(dims.to_vec(), |i| {
            i.iter().enumerate().map(|(k, &ik)| vecs[k][ik]).product()
        })
        .unwrap()
    }

    #[test]
    fn rank_one_tensor_gives_unit_ranks() {
        let t = rank_one(&[4, 4, 4], 1);
        for kappa in [0.1, 0.5, 0.99, 1.0] {
            let sel = determine_ranks(&t, kappa).unwrap();
            assert!(sel.topology.ranks().iter().all(|&r| r == 1), "kappa {kappa}");
        }
    }

    #[test]
    fn full_retention_reaches_last_nonzero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = DenseTensor::random_normal(vec![3, 4, 5], 1.0, &mut rng).unwrap();
        let sel = determine_ranks(&t, 1.0).unwrap();
        for (spec, &r) in sel.spectra.iter().zip(sel.topology.ranks()) {
            let last_nonzero = spec.summed.iter().rposition(|&v| v > 0.0).unwrap() + 1;
            assert_eq!(r, last_nonzero);
            let (m, n) = spec.modes;
            assert_eq!(r, t.dims()[m].min(t.dims()[n]));
        }
    }

    #[test]
    fn retention_curves_are_monotone_and_end_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = DenseTensor::random_normal(vec![4, 3, 5, 2], 1.0, &mut rng).unwrap();
        let profile = RankProfile::new(&t).unwrap();
        for s in profile.spectra() {
            assert!(s.retention.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*s.retention.last().unwrap(), 1.0);
            assert_eq!(*s.energy_retention.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn kappa_outside_range_is_rejected() {
        let t = DenseTensor::zeros(vec![2, 2]).unwrap();
        assert!(determine_ranks(&t, 0.0).is_err());
        assert!(determine_ranks(&t, 1.5).is_err());
        assert!(determine_ranks(&DenseTensor::zeros(vec![4]).unwrap(), 0.5).is_err());
    }

    #[test]
    fn zero_tensor_gets_unit_ranks() {
        let t = DenseTensor::zeros(vec![3, 3, 3]).unwrap();
        let sel = determine_ranks(&t, 0.9).unwrap();
        assert!(sel.topology.ranks().iter().all(|&r| r == 1));
    }

    #[test]
    fn budget_on_rank_one_tensor() {
        let t = rank_one(&[4, 5, 6], 4);
        let (search, sel) = kappa_for_budget(&t, 4.0).unwrap();
        assert!(sel.topology.ranks().iter().all(|&r| r == 1));
        assert!((search.achieved_ratio() - 120.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn unattainable_budget_reports_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = DenseTensor::random_normal(vec![3, 3, 3], 1.0, &mut rng).unwrap();
        match kappa_for_budget(&t, 100.0) {
            Err(Error::Budget { min_params, .. }) => assert_eq!(min_params, 9),
            other => panic!("expected budget error, got {other:?}"),
        }
        assert!(kappa_for_budget(&t, 1.0).is_err());
    }
}
