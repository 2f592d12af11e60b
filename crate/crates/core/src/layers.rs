//! Convolution and fully connected layers evaluated densely or straight from
//! TN factors, tensorization plans, and parameter/FLOP accounting.

use crate::error::{arg_err, Error, Result};
use crate::tensor::{DenseTensor, Matrix};
use crate::tn::{contract_network, Leg, Node, TnFactorSet, TnTopology};

/// Valid, stride-1 convolution of a `W×H×S` input with a `K×K×S×T` kernel.
pub fn conv2d_dense(x: &DenseTensor, kernel: &DenseTensor) -> Result<DenseTensor> {
    let (w, h, s) = image_dims(x)?;
    let kd = kernel.dims();
    if kd.len() != 4 || kd[0] != kd[1] {
        return arg_err(format!("conv kernel must be K×K×S×T, got {kd:?}"));
    }
    let (k, t) = (kd[0], kd[3]);
    if kd[2] != s {
        return arg_err(format!("kernel expects {} input channels, input has {s}", kd[2]));
    }
    let (wo, ho) = output_size(w, h, k)?;
    let xd = x.data();
    let kdat = kernel.data();
    let mut out = vec![0.0f64; wo * ho * t];
    for tt in 0..t {
        for ss in 0..s {
            for k2 in 0..k {
                for k1 in 0..k {
                    let kv = f64::from(kdat[k1 + k * (k2 + k * (ss + s * tt))]);
                    for hh in 0..ho {
                        let xrow = &xd[w * (hh + k2 + h * ss)..];
                        let orow = &mut out[wo * (hh + ho * tt)..wo * (hh + 1 + ho * tt)];
                        for (ww, o) in orow.iter_mut().enumerate() {
                            *o += kv * f64::from(xrow[ww + k1]);
                        }
                    }
                }
            }
        }
    }
    Ok(DenseTensor::from_f64(vec![wo, ho, t], &out))
}

fn image_dims(x: &DenseTensor) -> Result<(usize, usize, usize)> {
    match *x.dims() {
        [w, h, s] => Ok((w, h, s)),
        ref d => arg_err(format!("conv input must be W×H×S, got {d:?}")),
    }
}

fn output_size(w: usize, h: usize, k: usize) -> Result<(usize, usize)> {
    if w < k || h < k {
        return arg_err(format!("input {w}×{h} is smaller than the {k}×{k} kernel"));
    }
    Ok((w - k + 1, h - k + 1))
}

/// Multiply-accumulate counts of the four stages of a TN convolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConvFlops {
    /// Input channels against factor 3.
    pub channel: u64,
    /// Factors 1 and 2 merged over their shared bond.
    pub kernel_merge: u64,
    /// Spatial sweep of the merged kernel.
    pub spatial: u64,
    /// Output channels from factor 4.
    pub output: u64,
}

impl ConvFlops {
    pub fn total(&self) -> u64 {
        self.channel + self.kernel_merge + self.spatial + self.output
    }
}

/// Convolution with a kernel held as an order-4 factor set over `(K,K,S,T)`.
pub fn conv2d_tn(x: &DenseTensor, f: &TnFactorSet) -> Result<DenseTensor> {
    conv2d_tn_counted(x, f).map(|(y, _)| y)
}

/// [`conv2d_tn`] that also reports the multiply-accumulates of each stage.
pub fn conv2d_tn_counted(x: &DenseTensor, f: &TnFactorSet) -> Result<(DenseTensor, ConvFlops)> {
    let topo = f.topology();
    let d = topo.dims();
    if d.len() != 4 || d[0] != d[1] {
        return Err(Error::Topology(format!(
            "conv factors must span (K,K,S,T), got dims {d:?}"
        )));
    }
    let (w, h, s) = image_dims(x)?;
    let (k, t) = (d[0], d[3]);
    if d[2] != s {
        return Err(Error::Topology(format!(
            "factors expect {} input channels, input has {s}",
            d[2]
        )));
    }
    let (wo, ho) = output_size(w, h, k)?;
    let r = |a, b| topo.rank(a, b);
    let (r12, r13, r14, r23, r24, r34) = (r(0, 1), r(0, 2), r(0, 3), r(1, 2), r(1, 3), r(2, 3));
    let z: Vec<Vec<f64>> = f.factors().iter().map(DenseTensor::to_f64).collect();
    let (z1, z2, z3, z4) = (&z[0], &z[1], &z[2], &z[3]);
    let xd = x.to_f64();
    let mut flops = ConvFlops::default();

    // P(w, h, a13, a23, c34) = Σ_s X(w, h, s) Z3(a13, a23, s, c34)
    let wh = w * h;
    let pr = r13 * r23 * r34;
    let mut p = vec![0.0f64; wh * pr];
    for c in 0..r34 {
        for b in 0..r23 {
            for a in 0..r13 {
                let pcol = a + r13 * (b + r23 * c);
                let dst = &mut p[wh * pcol..wh * (pcol + 1)];
                for ss in 0..s {
                    let zv = z3[a + r13 * (b + r23 * (ss + s * c))];
                    for (o, &xv) in dst.iter_mut().zip(&xd[wh * ss..wh * (ss + 1)]) {
                        *o += xv * zv;
                    }
                }
            }
        }
    }
    flops.channel = (wh * s * pr) as u64;

    // M(k1, k2, a13, a14, a23, a24) = Σ_e Z1(k1, e, a13, a14) Z2(e, k2, a23, a24)
    let mut m = vec![0.0f64; k * k * r13 * r14 * r23 * r24];
    let m_at = |k1: usize, k2: usize, a13: usize, a14: usize, a23: usize, a24: usize| {
        k1 + k * (k2 + k * (a13 + r13 * (a14 + r14 * (a23 + r23 * a24))))
    };
    for a24 in 0..r24 {
        for a23 in 0..r23 {
            for a14 in 0..r14 {
                for a13 in 0..r13 {
                    for k2 in 0..k {
                        for k1 in 0..k {
                            let mut acc = 0.0;
                            for e in 0..r12 {
                                acc += z1[k1 + k * (e + r12 * (a13 + r13 * a14))]
                                    * z2[e + r12 * (k2 + k * (a23 + r23 * a24))];
                            }
                            m[m_at(k1, k2, a13, a14, a23, a24)] = acc;
                        }
                    }
                }
            }
        }
    }
    flops.kernel_merge = (k * k * r12 * r13 * r14 * r23 * r24) as u64;

    // Q(w', h', a14, a24, c34) = Σ P(w'+k1, h'+k2, a13, a23, c34) M(k1, k2, a13, a14, a23, a24)
    let who = wo * ho;
    let qr = r14 * r24 * r34;
    let mut q = vec![0.0f64; who * qr];
    for c in 0..r34 {
        for a24 in 0..r24 {
            for a14 in 0..r14 {
                let qcol = a14 + r14 * (a24 + r24 * c);
                let dst = &mut q[who * qcol..who * (qcol + 1)];
                for a23 in 0..r23 {
                    for a13 in 0..r13 {
                        let src = &p[wh * (a13 + r13 * (a23 + r23 * c))..];
                        for k2 in 0..k {
                            for k1 in 0..k {
                                let mv = m[m_at(k1, k2, a13, a14, a23, a24)];
                                for hh in 0..ho {
                                    let row = &src[w * (hh + k2) + k1..];
                                    for (o, &pv) in dst[wo * hh..wo * (hh + 1)].iter_mut().zip(row) {
                                        *o += pv * mv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    flops.spatial = (who * k * k * r13 * r23 * qr) as u64;

    // Y(w', h', t) = Σ Q(w', h', a14, a24, c34) Z4(a14, a24, c34, t)
    let mut y = vec![0.0f64; who * t];
    for tt in 0..t {
        let dst = &mut y[who * tt..who * (tt + 1)];
        for col in 0..qr {
            let zv = z4[col + qr * tt];
            for (o, &qv) in dst.iter_mut().zip(&q[who * col..who * (col + 1)]) {
                *o += qv * zv;
            }
        }
    }
    flops.output = (who * qr * t) as u64;

    Ok((DenseTensor::from_f64(vec![wo, ho, t], &y), flops))
}

/// Factorizations of an `M×N` weight into `I_1..I_m` (rows) and `J_1..J_n`
/// (columns). The TN weight's modes are `(I_1..I_m, J_1..J_n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorizationPlan {
    pub output: Vec<usize>,
    pub input: Vec<usize>,
    /// Set when a side had fewer prime factors than the requested order and
    /// was padded with leading 1s.
    pub padded: bool,
}

impl TensorizationPlan {
    pub fn new(output: Vec<usize>, input: Vec<usize>) -> Result<Self> {
        if output.is_empty() || input.is_empty() || output.contains(&0) || input.contains(&0) {
            return arg_err(format!("bad tensorization {output:?} × {input:?}"));
        }
        let padded = output.contains(&1) || input.contains(&1);
        Ok(Self {
            output,
            input,
            padded,
        })
    }

    pub fn rows(&self) -> usize {
        self.output.iter().product()
    }

    pub fn cols(&self) -> usize {
        self.input.iter().product()
    }

    /// Mode sizes of the tensorized weight.
    pub fn dims(&self) -> Vec<usize> {
        self.output.iter().chain(&self.input).copied().collect()
    }
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Ascending factorizations of `n` into exactly `parts` factors ≥ `min`.
fn factorizations(n: usize, parts: usize, min: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        if n >= min {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
        }
        return;
    }
    let mut d = min;
    while d.pow(parts as u32) <= n {
        if n.is_multiple_of(d) {
            prefix.push(d);
            factorizations(n / d, parts - 1, d, prefix, out);
            prefix.pop();
        }
        d += 1;
    }
}

fn log_variance(f: &[usize]) -> f64 {
    let logs: Vec<f64> = f.iter().map(|&v| (v as f64).ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / logs.len() as f64
}

/// Splits `n` into `order` ascending factors with the least variance of
/// their logarithms.
fn split_dimension(n: usize, order: usize) -> (Vec<usize>, bool) {
    if order == 1 {
        return (vec![n], false);
    }
    let primes = prime_factors(n);
    if primes.len() < order {
        let mut f = vec![1; order - primes.len()];
        f.extend(primes);
        return (f, true);
    }
    let mut all = Vec::new();
    factorizations(n, order, 2, &mut Vec::new(), &mut all);
    // Candidates arrive in lexicographic order, so the first minimum wins ties.
    let best = all
        .into_iter()
        .map(|f| (log_variance(&f), f))
        .fold(None::<(f64, Vec<usize>)>, |best, (v, f)| match best {
            Some((bv, _)) if bv <= v + 1e-12 => best,
            _ => Some((v, f)),
        })
        .map(|(_, f)| f)
        .expect("a feasible order has a factorization");
    (best, false)
}

/// Tensorization of an `M×N` weight with `order` factors per side.
pub fn plan_tensorization(rows: usize, cols: usize, order: usize) -> Result<TensorizationPlan> {
    if rows == 0 || cols == 0 || order == 0 {
        return arg_err(format!(
            "cannot tensorize {rows}×{cols} with order {order}"
        ));
    }
    let (output, po) = split_dimension(rows, order);
    let (input, pi) = split_dimension(cols, order);
    Ok(TensorizationPlan {
        output,
        input,
        padded: po || pi,
    })
}

fn check_fc(f: &TnFactorSet, plan: &TensorizationPlan) -> Result<()> {
    if f.topology().dims() != plan.dims().as_slice() {
        return arg_err(format!(
            "factor dims {:?} do not match tensorization {:?} × {:?}",
            f.topology().dims(),
            plan.output,
            plan.input
        ));
    }
    Ok(())
}

/// `y = W x` with `W` held as factors over `(I_1..I_m, J_1..J_n)`.
pub fn fc_tn(x: &[f32], f: &TnFactorSet, plan: &TensorizationPlan) -> Result<Vec<f32>> {
    fc_tn_counted(x, f, plan).map(|(y, _)| y)
}

/// [`fc_tn`] that also reports its multiply-accumulates.
pub fn fc_tn_counted(x: &[f32], f: &TnFactorSet, plan: &TensorizationPlan) -> Result<(Vec<f32>, u64)> {
    check_fc(f, plan)?;
    if x.len() != plan.cols() {
        return arg_err(format!("input has length {}, weight expects {}", x.len(), plan.cols()));
    }
    let topo = f.topology();
    let m = plan.output.len();
    let order = topo.order();
    let mut node = Node {
        legs: (m..order).map(Leg::Mode).collect(),
        dims: plan.input.clone(),
        data: x.iter().map(|&v| f64::from(v)).collect(),
    };
    let mut macs = 0;
    let factor_node = |k: usize| Node::factor(topo, k, f.factor(k).to_f64());
    for k in (m..order).chain(0..m) {
        node = node.contract(&factor_node(k), &mut macs);
    }
    let out_order: Vec<Leg> = (0..m).map(Leg::Mode).collect();
    let y = node.permute_to(&out_order).data;
    Ok((y.into_iter().map(|v| v as f32).collect(), macs))
}

/// The `M×N` matrix a factor set represents under a plan, rows and columns
/// flattened first-index-fastest.
pub fn detensorize(f: &TnFactorSet, plan: &TensorizationPlan) -> Result<Matrix> {
    check_fc(f, plan)?;
    let full = contract_network(f);
    Ok(Matrix::from_iterator(
        plan.rows(),
        plan.cols(),
        full.data().iter().map(|&v| f64::from(v)),
    ))
}

/// `y = W x` for a dense `M×N` weight.
pub fn fc_dense(x: &[f32], weight: &DenseTensor) -> Result<Vec<f32>> {
    let (rows, cols) = match *weight.dims() {
        [r, c] => (r, c),
        ref d => return arg_err(format!("FC weight must be M×N, got {d:?}")),
    };
    if x.len() != cols {
        return arg_err(format!("input has length {}, weight expects {cols}", x.len()));
    }
    let wd = weight.data();
    let mut y = vec![0.0f64; rows];
    for (j, &xv) in x.iter().enumerate() {
        let xv = f64::from(xv);
        for (i, o) in y.iter_mut().enumerate() {
            *o += f64::from(wd[i + rows * j]) * xv;
        }
    }
    Ok(y.into_iter().map(|v| v as f32).collect())
}

/// Parameter and FLOP counts of a convolution in dense and uniform-rank TN
/// form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvComplexity {
    pub dense_params: u64,
    pub tn_params: u64,
    /// `K²STWH`.
    pub dense_flops: u64,
    /// `WH(S+T)R³ + WHK²R⁵ + K²R⁵`.
    pub tn_flops: u64,
    pub p_conv: f64,
    pub c_conv: f64,
}

pub fn complexity_conv(k: u64, s: u64, t: u64, w: u64, h: u64, r: u64) -> ConvComplexity {
    let dense_params = k * k * s * t;
    let tn_params = (2 * k + s + t) * r.pow(3);
    let dense_flops = dense_params * w * h;
    let tn_flops = w * h * (s + t) * r.pow(3) + w * h * k * k * r.pow(5) + k * k * r.pow(5);
    ConvComplexity {
        dense_params,
        tn_params,
        dense_flops,
        tn_flops,
        p_conv: dense_params as f64 / tn_params as f64,
        c_conv: dense_flops as f64 / tn_flops as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcComplexity {
    pub dense_params: u64,
    pub params: u64,
    /// `MNC` for a batch of `C` inputs.
    pub dense_flops: u64,
    /// `(I_1I_2 + J_1J_2) R³ (C + R²)`; only defined for two factors per side.
    pub flops: Option<u64>,
}

pub fn complexity_fc(plan: &TensorizationPlan, r: usize, batch: u64) -> Result<FcComplexity> {
    if r == 0 {
        return arg_err("rank must be positive");
    }
    let topo = TnTopology::uniform(plan.dims(), r)?;
    let (m, n) = (plan.rows() as u64, plan.cols() as u64);
    let r = r as u64;
    let flops = (plan.output.len() == 2 && plan.input.len() == 2)
        .then(|| (m + n) * r.pow(3) * (batch + r * r));
    Ok(FcComplexity {
        dense_params: m * n,
        params: topo.param_count() as u64,
        dense_flops: m * n * batch,
        flops,
    })
}

/// What a layer computes.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
    },
    Fc {
        rows: usize,
        cols: usize,
        plan: Option<TensorizationPlan>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    Dense(DenseTensor),
    Tn(TnFactorSet),
}

/// A conv or FC layer with its weights in either format.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    kind: LayerKind,
    weights: LayerWeights,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, weights: LayerWeights) -> Result<Self> {
        let want: Vec<usize> = match (&kind, &weights) {
            (LayerKind::Conv { kernel, in_channels, out_channels }, _) => {
                vec![*kernel, *kernel, *in_channels, *out_channels]
            }
            (LayerKind::Fc { rows, cols, .. }, LayerWeights::Dense(_)) => vec![*rows, *cols],
            (LayerKind::Fc { rows, cols, plan }, LayerWeights::Tn(_)) => {
                let plan = plan
                    .as_ref()
                    .ok_or_else(|| Error::Argument("TN FC weights need a tensorization plan".into()))?;
                if plan.rows() != *rows || plan.cols() != *cols {
                    return arg_err(format!(
                        "plan is {}×{}, layer is {rows}×{cols}",
                        plan.rows(),
                        plan.cols()
                    ));
                }
                plan.dims()
            }
        };
        let have = match &weights {
            LayerWeights::Dense(t) => t.dims(),
            LayerWeights::Tn(f) => f.topology().dims(),
        };
        if have != want.as_slice() {
            return Err(Error::Topology(format!(
                "layer weights have dims {have:?}, expected {want:?}"
            )));
        }
        Ok(Self { kind, weights })
    }

    pub fn kind(&self) -> &LayerKind {
        &self.kind
    }

    pub fn weights(&self) -> &LayerWeights {
        &self.weights
    }

    pub fn param_count(&self) -> usize {
        match &self.weights {
            LayerWeights::Dense(t) => t.len(),
            LayerWeights::Tn(f) => f.param_count(),
        }
    }

    /// Applies the layer: a `W×H×S` image for conv, a length-`N` vector
    /// (as an order-1 tensor) for FC.
    pub fn forward(&self, x: &DenseTensor) -> Result<DenseTensor> {
        match (&self.kind, &self.weights) {
            (LayerKind::Conv { .. }, LayerWeights::Dense(k)) => conv2d_dense(x, k),
            (LayerKind::Conv { .. }, LayerWeights::Tn(f)) => conv2d_tn(x, f),
            (LayerKind::Fc { rows, .. }, weights) => {
                let y = match weights {
                    LayerWeights::Dense(w) => fc_dense(x.data(), w)?,
                    LayerWeights::Tn(f) => {
                        let plan = match &self.kind {
                            LayerKind::Fc { plan: Some(p), .. } => p,
                            _ => unreachable!("checked at construction"),
                        };
                        fc_tn(x.data(), f, plan)?
                    }
                };
                DenseTensor::new(vec![*rows], y)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(x: &DenseTensor, k: &DenseTensor) -> DenseTensor {
        let (w, h, s) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        let (kk, t) = (k.dims()[0], k.dims()[3]);
        let (wo, ho) = (w - kk + 1, h - kk + 1);
        DenseTensor::from_fn(vec![wo, ho, t], |i| {
            let mut acc = 0.0f64;
            for k1 in 0..kk {
                for k2 in 0..kk {
                    for ss in 0..s {
                        acc += f64::from(x.get(&[i[0] + k1, i[1] + k2, ss]))
                            * f64::from(k.get(&[k1, k2, ss, i[2]]));
                    }
                }
            }
            acc as f32
        })
        .unwrap()
    }

    #[test]
    fn dense_conv_small_cases() {
        let x = DenseTensor::from_fn(vec![4, 4, 1], |_| 1.0).unwrap();
        let k = DenseTensor::from_fn(vec![3, 3, 1, 1], |_| 1.0).unwrap();
        let y = conv2d_dense(&x, &k).unwrap();
        assert_eq!(y.dims(), &[2, 2, 1]);
        assert!(y.data().iter().all(|&v| v == 9.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DenseTensor::random_normal(vec![5, 3, 1], 1.0, &mut rng).unwrap();
        let c = DenseTensor::new(vec![1, 1, 1, 1], vec![2.5]).unwrap();
        let y = conv2d_dense(&x, &c).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, 2.5 * b);
        }
    }

    #[test]
    fn dense_conv_matches_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DenseTensor::random_normal(vec![8, 7, 4], 1.0, &mut rng).unwrap();
        let k = DenseTensor::random_normal(vec![3, 3, 4, 6], 1.0, &mut rng).unwrap();
        assert_eq!(conv2d_dense(&x, &k).unwrap(), naive_conv(&x, &k));
    }

    #[test]
    fn conv_rejects_small_input() {
        let x = DenseTensor::zeros(vec![2, 4, 1]).unwrap();
        let k = DenseTensor::zeros(vec![3, 3, 1, 1]).unwrap();
        assert!(matches!(conv2d_dense(&x, &k), Err(Error::Argument(_))));
    }

    #[test]
    fn tn_conv_matches_reconstructed_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let topo = TnTopology::new(vec![3, 3, 4, 5], vec![2, 1, 3, 2, 2, 3]).unwrap();
        let f = TnFactorSet::random(topo, &mut rng);
        let x = DenseTensor::random_normal(vec![7, 6, 4], 1.0, &mut rng).unwrap();
        let want = conv2d_dense(&x, &contract_network(&f)).unwrap();
        let got = conv2d_tn(&x, &f).unwrap();
        assert_eq!(got.dims(), &[5, 4, 5]);
        assert!(got.relative_error(&want).unwrap() < 1e-5);
    }

    #[test]
    fn tn_conv_flops_uniform_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (k, s, t, w, h, r) = (3usize, 4, 6, 8, 9, 2);
        let f = TnFactorSet::random(TnTopology::uniform(vec![k, k, s, t], r).unwrap(), &mut rng);
        let x = DenseTensor::random_normal(vec![w, h, s], 1.0, &mut rng).unwrap();
        let (_, fl) = conv2d_tn_counted(&x, &f).unwrap();
        let (wo, ho) = (w - k + 1, h - k + 1);
        assert_eq!(fl.channel, (w * h * s * r.pow(3)) as u64);
        assert_eq!(fl.kernel_merge, (k * k * r.pow(5)) as u64);
        assert_eq!(fl.spatial, (wo * ho * k * k * r.pow(5)) as u64);
        assert_eq!(fl.output, (wo * ho * t * r.pow(3)) as u64);
    }

    #[test]
    fn plans() {
        let p = plan_tensorization(16, 12, 2).unwrap();
        assert_eq!((p.output.clone(), p.input.clone(), p.padded), (vec![4, 4], vec![3, 4], false));
        let p = plan_tensorization(7, 8, 2).unwrap();
        assert_eq!((p.output.clone(), p.input.clone(), p.padded), (vec![1, 7], vec![2, 4], true));
        let p = plan_tensorization(64, 30, 3).unwrap();
        assert_eq!((p.output, p.input), (vec![4, 4, 4], vec![2, 3, 5]));
        let p = plan_tensorization(1, 12, 1).unwrap();
        assert_eq!((p.output, p.input, p.padded), (vec![1], vec![12], false));
    }

    #[test]
    fn fc_matrix_case_is_low_rank_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let plan = TensorizationPlan::new(vec![5], vec![6]).unwrap();
        let f = TnFactorSet::random(TnTopology::uniform(plan.dims(), 2).unwrap(), &mut rng);
        let x: Vec<f32> = (0..6).map(|i| i as f32 - 2.0).collect();
        let a = f.factor(0).k_unfold(0).unwrap();
        let b = f.factor(1).k_unfold(0).unwrap();
        let xv = nalgebra::DVector::from_iterator(6, x.iter().map(|&v| f64::from(v)));
        let want = a * b * xv;
        let got = fc_tn(&x, &f, &plan).unwrap();
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((f64::from(*g) - w).abs() < 1e-5);
        }
    }

    #[test]
    fn fc_tn_matches_detensorized_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let plan = plan_tensorization(12, 16, 2).unwrap();
        let topo = TnTopology::new(plan.dims(), vec![2, 3, 1, 2, 2, 3]).unwrap();
        let f = TnFactorSet::random(topo, &mut rng);
        let x: Vec<f32> = (0..16).map(|i| ((i * 7) % 5) as f32 - 2.0).collect();
        let w = detensorize(&f, &plan).unwrap();
        let dense = DenseTensor::from_f64(vec![12, 16], w.as_slice());
        let want = fc_dense(&x, &dense).unwrap();
        let got = fc_tn(&x, &f, &plan).unwrap();
        let err: f32 = got.iter().zip(&want).map(|(a, b)| (a - b) * (a - b)).sum::<f32>().sqrt();
        let norm: f32 = want.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!(err / norm < 1e-5);
    }

    #[test]
    fn complexity_examples() {
        let c = complexity_conv(3, 16, 16, 8, 8, 2);
        assert_eq!(c.dense_params, 2304);
        assert_eq!(c.tn_params, 304);
        assert!((c.p_conv - 2304.0 / 304.0).abs() < 1e-12);
        assert_eq!(complexity_conv(3, 4, 6, 8, 8, 1).dense_params, 216);
        let plan = plan_tensorization(16, 16, 2).unwrap();
        let fc = complexity_fc(&plan, 2, 1).unwrap();
        assert_eq!((fc.params, fc.dense_params), (128, 256));
        assert_eq!(complexity_fc(&plan, 1, 1).unwrap().params, 16);
        assert_eq!(fc.flops, Some(32 * 8 * 5));
    }

    #[test]
    fn layer_spec_validates_dims() {
        let kind = LayerKind::Conv {
            kernel: 3,
            in_channels: 2,
            out_channels: 4,
        };
        let bad = LayerWeights::Dense(DenseTensor::zeros(vec![3, 3, 2, 5]).unwrap());
        assert!(LayerSpec::new(kind.clone(), bad).is_err());
        let ok = LayerWeights::Dense(DenseTensor::zeros(vec![3, 3, 2, 4]).unwrap());
        let layer = LayerSpec::new(kind, ok).unwrap();
        let y = layer.forward(&DenseTensor::zeros(vec![5, 5, 2]).unwrap()).unwrap();
        assert_eq!(y.dims(), &[3, 3, 4]);
        let fc = LayerKind::Fc {
            rows: 4,
            cols: 6,
            plan: None,
        };
        let topo = TnTopology::uniform(vec![2, 2, 2, 3], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tn = LayerWeights::Tn(TnFactorSet::random(topo, &mut rng));
        assert!(LayerSpec::new(fc, tn).is_err());
    }
}
