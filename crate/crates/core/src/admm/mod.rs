//! Structure-aware training: SGD with periodic ADMM rounds that pull each
//! weight toward a tensor whose balanced unfolding is low rank.

mod data;
mod net;

use std::fmt::Write as _;

pub use data::{blobs, stripes, Batch, BatchSchedule, Dataset, DatasetKind, TEST_SAMPLES, TRAIN_SAMPLES};
pub use net::{toy_backward, toy_loss_f64, Architecture, Gradients, ToyNet};

use crate::error::{arg_err, Error, Result};
use crate::oracles::effective_rank;
use crate::tensor::{svd, DenseTensor, Matrix};

/// Row/column split of a tensor's modes used to matricize it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BipartitionPlan {
    pub dims: Vec<usize>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl BipartitionPlan {
    pub fn shape(&self) -> (usize, usize) {
        let p = |m: &[usize]| m.iter().map(|&k| self.dims[k]).product();
        (p(&self.rows), p(&self.cols))
    }

    pub fn unfold(&self, t: &DenseTensor) -> Result<Matrix> {
        if t.dims() != self.dims.as_slice() {
            return arg_err(format!("plan is for {:?}, tensor is {:?}", self.dims, t.dims()));
        }
        t.matricize(&self.rows, &self.cols)
    }

    pub fn fold(&self, mat: &Matrix) -> Result<DenseTensor> {
        DenseTensor::fold_matricized(mat, &self.rows, &self.cols, &self.dims)
    }
}

/// Most balanced bipartition of the modes of `dims`: the row set minimizing
/// `max(P_A, P_B) / min(P_A, P_B)`, ties broken by the lexicographically
/// smallest sorted row set.
pub fn balanced_plan(dims: &[usize]) -> Result<BipartitionPlan> {
    let n = dims.len();
    if n < 2 {
        return arg_err(format!("balanced unfolding needs order >= 2, got {n}"));
    }
    if n > 20 {
        return arg_err(format!("order {n} is too large to search bipartitions"));
    }
    let total: u128 = dims.iter().map(|&d| d as u128).product();
    // (big, small) of the best split so far, compared by cross-multiplying.
    let mut best: Option<(u128, u128, Vec<usize>)> = None;
    for mask in 1u32..(1 << n) - 1 {
        let rows: Vec<usize> = (0..n).filter(|&k| mask >> k & 1 == 1).collect();
        let a: u128 = rows.iter().map(|&k| dims[k] as u128).product();
        let b = total / a;
        let (big, small) = if a >= b { (a, b) } else { (b, a) };
        let better = match &best {
            None => true,
            Some((bb, bs, brows)) => {
                let lhs = big * bs;
                let rhs = *bb * small;
                lhs < rhs || (lhs == rhs && rows < *brows)
            }
        };
        if better {
            best = Some((big, small, rows));
        }
    }
    let rows = best.expect("order >= 2 has a bipartition").2;
    let cols = (0..n).filter(|k| !rows.contains(k)).collect();
    Ok(BipartitionPlan {
        dims: dims.to_vec(),
        rows,
        cols,
    })
}

pub fn balanced_unfold(t: &DenseTensor) -> Result<(Matrix, BipartitionPlan)> {
    let plan = balanced_plan(t.dims())?;
    Ok((plan.unfold(t)?, plan))
}

/// Singular value thresholding `U diag(max(σ − τ, 0)) Vᵀ`: the proximal map
/// of `τ‖·‖_*`.
pub fn svt(mat: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau > 0.0) || !tau.is_finite() {
        return arg_err(format!("threshold must be positive, got {tau}"));
    }
    let s = svd(mat)?;
    let mut out = Matrix::zeros(mat.nrows(), mat.ncols());
    for (i, &sigma) in s.singular_values.iter().enumerate() {
        let shrunk = sigma - tau;
        if shrunk > 0.0 {
            out += s.u.column(i) * s.v.column(i).transpose() * shrunk;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    pub lambda: f64,
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    /// Every `period`-th step is an ADMM round.
    pub period: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Seeds the minibatch order.
    pub seed: u64,
    /// Log every this many steps (and always the last one).
    pub log_every: usize,
    /// Retention level for the logged effective ranks.
    pub rank_kappa: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            lambda: 0.005,
            mu0: 1.0,
            rho: 1.001,
            mu_max: 10.0,
            period: 100,
            learning_rate: 0.05,
            batch_size: 32,
            max_steps: 20_000,
            seed: 0,
            log_every: 1,
            rank_kappa: 0.9,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0
            && self.lambda.is_finite()
            && self.rho > 1.0
            && self.mu0 > 0.0
            && self.mu_max >= self.mu0
            && self.mu_max.is_finite()
            && self.period >= 1
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.batch_size >= 1
            && self.log_every >= 1
            && self.rank_kappa > 0.0
            && self.rank_kappa <= 1.0;
        if ok {
            Ok(())
        } else {
            arg_err(format!("invalid ADMM configuration {self:?}"))
        }
    }
}

/// Weights, auxiliary tensors and multipliers of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w: Vec<DenseTensor>,
    pub z: Vec<DenseTensor>,
    pub y: Vec<DenseTensor>,
    pub mu: f64,
    pub step: usize,
}

impl AdmmState {
    /// `Z = W`, `Y = 0`, `μ = μ₀`.
    pub fn new(weights: Vec<DenseTensor>, cfg: &AdmmConfig) -> Self {
        let y = weights
            .iter()
            .map(|w| DenseTensor::zeros(w.dims().to_vec()).expect("valid dims"))
            .collect();
        Self {
            z: weights.clone(),
            w: weights,
            y,
            mu: cfg.mu0,
            step: 0,
        }
    }

    /// `‖Z_l − W_l‖_F` per layer.
    pub fn gaps(&self) -> Vec<f64> {
        self.z
            .iter()
            .zip(&self.w)
            .map(|(z, w)| {
                z.data()
                    .iter()
                    .zip(w.data())
                    .map(|(&a, &b)| {
                        let d = f64::from(a) - f64::from(b);
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

fn check_grads(w: &[DenseTensor], grads: &[Vec<f64>]) -> Result<()> {
    if w.len() != grads.len() || w.iter().zip(grads).any(|(a, g)| a.len() != g.len()) {
        return arg_err("gradients do not match the weights");
    }
    Ok(())
}

/// `W ← W − η g`.
pub fn sgd_step(w: &mut [DenseTensor], grads: &[Vec<f64>], eta: f64) -> Result<()> {
    check_grads(w, grads)?;
    for (layer, g) in w.iter_mut().zip(grads) {
        for (v, &gv) in layer.data_mut().iter_mut().zip(g) {
            *v = (f64::from(*v) - eta * gv) as f32;
        }
    }
    Ok(())
}

/// `W ← W − η(∂ℓ/∂W + λμ(W − Z − Y/μ))`, the gradient step on the augmented
/// Lagrangian. With `λ = 0` this is exactly [`sgd_step`].
pub fn admm_w_update(state: &mut AdmmState, grads: &[Vec<f64>], cfg: &AdmmConfig) -> Result<()> {
    if cfg.lambda == 0.0 {
        return sgd_step(&mut state.w, grads, cfg.learning_rate);
    }
    check_grads(&state.w, grads)?;
    let (eta, lm, mu) = (cfg.learning_rate, cfg.lambda * state.mu, state.mu);
    for l in 0..state.w.len() {
        let (z, y) = (state.z[l].data(), state.y[l].data());
        for (i, v) in state.w[l].data_mut().iter_mut().enumerate() {
            let w = f64::from(*v);
            let pull = w - f64::from(z[i]) - f64::from(y[i]) / mu;
            *v = (w - eta * (grads[l][i] + lm * pull)) as f32;
        }
    }
    Ok(())
}

/// `Z ← fold(svt(unfold(W − Y/μ), 1/μ))` on each layer's balanced unfolding.
pub fn admm_z_update(state: &mut AdmmState) -> Result<()> {
    let mu = state.mu;
    for l in 0..state.w.len() {
        let shifted = DenseTensor::new(
            state.w[l].dims().to_vec(),
            state.w[l]
                .data()
                .iter()
                .zip(state.y[l].data())
                .map(|(&w, &y)| (f64::from(w) - f64::from(y) / mu) as f32)
                .collect(),
        )?;
        let (mat, plan) = balanced_unfold_any(&shifted)?;
        state.z[l] = plan.fold(&svt(&mat, 1.0 / mu)?)?;
    }
    Ok(())
}

/// `Y ← Y + μ(Z − W)`, then `μ ← min(ρμ, μ_max)`.
pub fn admm_y_update(state: &mut AdmmState, cfg: &AdmmConfig) {
    let mu = state.mu;
    for l in 0..state.w.len() {
        let (z, w) = (state.z[l].data().to_vec(), state.w[l].data());
        for (i, y) in state.y[l].data_mut().iter_mut().enumerate() {
            *y = (f64::from(*y) + mu * (f64::from(z[i]) - f64::from(w[i]))) as f32;
        }
    }
    state.mu = (cfg.rho * state.mu).min(cfg.mu_max);
}

/// Balanced unfolding, treating an order-1 tensor as a column.
fn balanced_unfold_any(t: &DenseTensor) -> Result<(Matrix, BipartitionPlan)> {
    if t.order() == 1 {
        let plan = BipartitionPlan {
            dims: t.dims().to_vec(),
            rows: vec![0],
            cols: Vec::new(),
        };
        return Ok((plan.unfold(t)?, plan));
    }
    balanced_unfold(t)
}

/// Effective rank of each weight's balanced unfolding.
pub fn layer_ranks(weights: &[DenseTensor], kappa: f64) -> Result<Vec<usize>> {
    weights
        .iter()
        .map(|w| effective_rank(&balanced_unfold_any(w)?.0, kappa))
        .collect()
}

/// One logged training step. `loss` and `accuracy` are over that step's
/// minibatch, measured before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub mu: f64,
    pub gaps: Vec<f64>,
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let layers = self.rows.first().map_or(0, |r| r.gaps.len());
        let mut out = String::from("step,loss,accuracy,mu");
        for l in 0..layers {
            write!(out, ",gap_{l}").unwrap();
        }
        for l in 0..layers {
            write!(out, ",rank_{l}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{},{:.6e},{:.6},{:.6}", r.step, r.loss, r.accuracy, r.mu).unwrap();
            for g in &r.gaps {
                write!(out, ",{g:.6e}").unwrap();
            }
            for k in &r.ranks {
                write!(out, ",{k}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn checked_backward(net: &ToyNet, batch: &Batch, step: usize) -> Result<Gradients> {
    let g = toy_backward(net, batch)?;
    if !g.loss.is_finite() || g.layers.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Training { step, loss: g.loss });
    }
    Ok(g)
}

/// Structure-aware training: plain SGD steps, with every `period`-th step
/// replaced by an ADMM round.
pub fn train_stn(net: &ToyNet, data: &Dataset, cfg: &AdmmConfig) -> Result<(ToyNet, TrainingLog)> {
    train_stn_state(net, data, cfg).map(|(n, log, _)| (n, log))
}

/// [`train_stn`] that also returns the final ADMM state.
pub fn train_stn_state(
    net: &ToyNet,
    data: &Dataset,
    cfg: &AdmmConfig,
) -> Result<(ToyNet, TrainingLog, AdmmState)> {
    cfg.validate()?;
    if data.is_empty() {
        return arg_err("empty dataset");
    }
    let mut schedule = BatchSchedule::new(data.len(), cfg.batch_size, cfg.seed)?;
    let mut model = net.clone();
    let mut state = AdmmState::new(model.weights().to_vec(), cfg);
    let mut log = TrainingLog::default();
    for s in 1..=cfg.max_steps {
        let batch = data.batch(schedule.next_indices());
        let g = checked_backward(&model, &batch, s)?;
        if s % cfg.period != 0 {
            sgd_step(&mut state.w, &g.layers, cfg.learning_rate)?;
        } else {
            admm_w_update(&mut state, &g.layers, cfg)?;
            admm_z_update(&mut state)?;
            admm_y_update(&mut state, cfg);
        }
        state.step = s;
        model.weights_mut().clone_from_slice(&state.w);
        if s % cfg.log_every == 0 || s == cfg.max_steps {
            log.rows.push(LogRow {
                step: s,
                loss: g.loss,
                accuracy: g.accuracy,
                mu: state.mu,
                gaps: state.gaps(),
                ranks: layer_ranks(&state.w, cfg.rank_kappa)?,
            });
        }
    }
    Ok((model, log, state))
}

/// Plain minibatch SGD with the same batch order as [`train_stn`].
pub fn train_sgd(net: &ToyNet, data: &Dataset, cfg: &AdmmConfig) -> Result<ToyNet> {
    cfg.validate()?;
    let mut schedule = BatchSchedule::new(data.len(), cfg.batch_size, cfg.seed)?;
    let mut model = net.clone();
    for s in 1..=cfg.max_steps {
        let batch = data.batch(schedule.next_indices());
        let g = checked_backward(&model, &batch, s)?;
        sgd_step(model.weights_mut(), &g.layers, cfg.learning_rate)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn balanced_plans() {
        let p = balanced_plan(&[5, 7]).unwrap();
        assert_eq!((p.rows.clone(), p.cols.clone()), (vec![0], vec![1]));
        let p = balanced_plan(&[3, 3, 16, 32]).unwrap();
        assert_eq!((p.rows.clone(), p.shape()), (vec![0, 2], (48, 96)));
        assert!(balanced_plan(&[4]).is_err());
    }

    #[test]
    fn unfold_fold_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = DenseTensor::random_normal(vec![2, 3, 4, 5], 1.0, &mut rng).unwrap();
        let (m, plan) = balanced_unfold(&t).unwrap();
        assert_eq!(plan.fold(&m).unwrap(), t);
    }

    #[test]
    fn svt_small_cases() {
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        let out = svt(&d, 1.0).unwrap();
        assert!((out[(0, 0)] - 2.0).abs() < 1e-12 && out[(1, 1)].abs() < 1e-12);
        assert!(svt(&d, 5.0).unwrap().iter().all(|&v| v == 0.0));
        assert!(svt(&d, 0.0).is_err());
    }

    #[test]
    fn mu_schedule() {
        let cfg = AdmmConfig::default();
        let mut state = AdmmState::new(vec![DenseTensor::zeros(vec![2, 2]).unwrap()], &cfg);
        for k in 1..=3000 {
            admm_y_update(&mut state, &cfg);
            let want = 1.001f64.powi(k).min(10.0);
            assert!((state.mu - want).abs() <= 1e-9 * want, "step {k}");
        }
        assert_eq!(state.mu, 10.0);
    }

    #[test]
    fn w_update_fixed_point() {
        let cfg = AdmmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = DenseTensor::random_normal(vec![3, 4], 1.0, &mut rng).unwrap();
        let mut state = AdmmState::new(vec![w.clone()], &cfg);
        admm_w_update(&mut state, &[vec![0.0; 12]], &cfg).unwrap();
        assert_eq!(state.w[0], w);
    }

    #[test]
    fn zero_lambda_matches_sgd() {
        let (train, _) = blobs(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ToyNet::init(Architecture::Mlp, &mut rng);
        let cfg = AdmmConfig {
            lambda: 0.0,
            max_steps: 450,
            seed: 9,
            log_every: 50,
            ..AdmmConfig::default()
        };
        let (stn, log) = train_stn(&net, &train, &cfg).unwrap();
        let sgd = train_sgd(&net, &train, &cfg).unwrap();
        assert_eq!(stn, sgd);
        assert_eq!(log.rows.len(), 9);
        assert!(log.to_csv().starts_with("step,loss,accuracy,mu,gap_0,gap_1,rank_0,rank_1\n"));
    }
}
