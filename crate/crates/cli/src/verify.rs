//! Self-checks run by `stn verify`: the contraction engine against
//! exhaustive summation, and unfolding-rank bounds on generated tensors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stn_core::oracles::{brute_force_contract, check_theorem1, generate_cp, generate_tucker, Generator};
use stn_core::tn::contract_network_squeezed;
use stn_core::{contract_network, TnFactorSet, TnTopology};

use crate::error::Result;

pub const CONTRACTION_CASES: usize = 200;
pub const CONTRACTION_TOLERANCE: f64 = 1e-5;
pub const BOUND_CASES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Oracle,
    Theorem1,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(Self::All),
            "oracle" => Some(Self::Oracle),
            "theorem1" => Some(Self::Theorem1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub detail: String,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {} {}/{} ({})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.cases - self.failures,
            self.cases,
            self.detail
        )
    }
}

/// Random factor set of order 2..=4 with dims ≤ 6 and ranks ≤ 3.
pub fn random_factor_set<R: Rng>(rng: &mut R) -> TnFactorSet {
    let order = rng.random_range(2..=4);
    let dims: Vec<usize> = (0..order).map(|_| rng.random_range(1..=6)).collect();
    let ranks = (0..order * (order - 1) / 2).map(|_| rng.random_range(1..=3)).collect();
    let topo = TnTopology::new(dims, ranks).expect("positive dims and ranks");
    TnFactorSet::random(topo, rng)
}

pub fn oracle_suite(seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..CONTRACTION_CASES {
        let f = random_factor_set(&mut rng);
        let fast = contract_network(&f);
        let err = brute_force_contract(&f)?.relative_error(&fast)?;
        worst = worst.max(err);
        let squeezed = contract_network_squeezed(&f);
        if !(err <= CONTRACTION_TOLERANCE) || squeezed.data() != fast.data() {
            failures += 1;
        }
    }
    Ok(SuiteOutcome {
        name: "oracle",
        cases: CONTRACTION_CASES,
        failures,
        detail: format!("max relative error {worst:.3e}, tolerance {CONTRACTION_TOLERANCE:e}"),
    })
}

pub fn theorem1_suite(seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut failures, mut checks) = (0, 0);
    for case in 0..2 * BOUND_CASES {
        let dims: Vec<usize> = (0..4).map(|_| rng.random_range(1..=6)).collect();
        let case_seed = seed.wrapping_mul(1000).wrapping_add(case as u64);
        let (t, generator) = if case < BOUND_CASES {
            let rank = rng.random_range(1..=3);
            (generate_cp(&dims, rank, case_seed)?, Generator::Cp { rank, tn: None })
        } else {
            let ranks: Vec<usize> = (0..4).map(|_| rng.random_range(1..=3)).collect();
            (generate_tucker(&dims, &ranks, case_seed)?, Generator::Tucker { ranks })
        };
        let report = check_theorem1(&t, &generator)?;
        checks += report.checks.len();
        failures += usize::from(!report.passed());
    }
    Ok(SuiteOutcome {
        name: "theorem1",
        cases: 2 * BOUND_CASES,
        failures,
        detail: format!("{BOUND_CASES} CP + {BOUND_CASES} Tucker tensors, {checks} bipartitions"),
    })
}

pub fn run_verify(suite: Suite, seed: u64) -> Result<Vec<SuiteOutcome>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::All | Suite::Oracle) {
        out.push(oracle_suite(seed)?);
    }
    if matches!(suite, Suite::All | Suite::Theorem1) {
        out.push(theorem1_suite(seed)?);
    }
    Ok(out)
}
