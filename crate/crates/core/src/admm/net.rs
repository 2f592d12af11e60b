//! The two toy networks, with hand-written backpropagation.

use rand::Rng;

use crate::error::{arg_err, Error, Result};
use crate::tensor::DenseTensor;

use super::data::{Batch, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// 8 → 32 (ReLU) → 2, no biases.
    Mlp,
    /// 8×8×1 → 3×3 conv to 4 channels (ReLU) → flatten 144 → 2.
    TinyCnn,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mlp => "mlp",
            Self::TinyCnn => "tinycnn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mlp" => Some(Self::Mlp),
            "tinycnn" => Some(Self::TinyCnn),
            _ => None,
        }
    }

    /// Weight shapes, first layer first.
    pub fn shapes(self) -> Vec<Vec<usize>> {
        match self {
            Self::Mlp => vec![vec![HIDDEN, 8], vec![CLASSES, HIDDEN]],
            Self::TinyCnn => vec![vec![3, 3, 1, CHANNELS], vec![CLASSES, CONV_OUT]],
        }
    }

    pub fn input_len(self) -> usize {
        match self {
            Self::Mlp => 8,
            Self::TinyCnn => IMAGE * IMAGE,
        }
    }

    fn fan_in(self, layer: usize) -> usize {
        match (self, layer) {
            (Self::Mlp, 0) => 8,
            (Self::Mlp, _) => HIDDEN,
            (Self::TinyCnn, 0) => 9,
            (Self::TinyCnn, _) => CONV_OUT,
        }
    }
}

const HIDDEN: usize = 32;
const CLASSES: usize = 2;
const IMAGE: usize = 8;
const CHANNELS: usize = 4;
const CONV_SIDE: usize = IMAGE - 2;
const CONV_OUT: usize = CONV_SIDE * CONV_SIDE * CHANNELS;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    arch: Architecture,
    weights: Vec<DenseTensor>,
}

/// Mean cross-entropy, accuracy and per-layer gradients (flat, in weight
/// layout) over one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub accuracy: f64,
    pub layers: Vec<Vec<f64>>,
}

impl ToyNet {
    /// He-normal initialization.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let weights = arch
            .shapes()
            .into_iter()
            .enumerate()
            .map(|(l, shape)| {
                let scale = (2.0 / arch.fan_in(l) as f64).sqrt();
                DenseTensor::random_normal(shape, scale, rng).expect("fixed shapes")
            })
            .collect();
        Self { arch, weights }
    }

    pub fn from_weights(arch: Architecture, weights: Vec<DenseTensor>) -> Result<Self> {
        let shapes = arch.shapes();
        if weights.len() != shapes.len()
            || weights.iter().zip(&shapes).any(|(w, s)| w.dims() != s.as_slice())
        {
            return arg_err(format!(
                "{} expects weights {:?}, got {:?}",
                arch.name(),
                shapes,
                weights.iter().map(|w| w.dims().to_vec()).collect::<Vec<_>>()
            ));
        }
        Ok(Self { arch, weights })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn weights(&self) -> &[DenseTensor] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DenseTensor] {
        &mut self.weights
    }

    pub fn into_weights(self) -> Vec<DenseTensor> {
        self.weights
    }

    pub fn logits(&self, x: &[f32]) -> Result<[f64; 2]> {
        let w = self.weights_f64();
        self.check_input(x.len())?;
        let x: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        Ok(forward(self.arch, &w, &x).logits)
    }

    /// Mean loss and accuracy over a dataset.
    pub fn evaluate(&self, data: &Dataset) -> Result<(f64, f64)> {
        let g = batch_stats(self.arch, &self.weights_f64(), &data.all(), false)?;
        Ok((g.loss, g.accuracy))
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.arch.input_len() {
            return arg_err(format!(
                "{} takes {} inputs, got {len}",
                self.arch.name(),
                self.arch.input_len()
            ));
        }
        Ok(())
    }

    pub(crate) fn weights_f64(&self) -> Vec<Vec<f64>> {
        self.weights.iter().map(DenseTensor::to_f64).collect()
    }
}

/// Exact gradients of the mean cross-entropy over `batch`.
pub fn toy_backward(net: &ToyNet, batch: &Batch) -> Result<Gradients> {
    batch_stats(net.arch, &net.weights_f64(), batch, true)
}

/// Mean loss over a batch for arbitrary 64-bit weights; the reference for
/// finite-difference checks.
pub fn toy_loss_f64(arch: Architecture, weights: &[Vec<f64>], batch: &Batch) -> Result<f64> {
    Ok(batch_stats(arch, weights, batch, false)?.loss)
}

struct Forward {
    /// Pre-activations of the hidden layer.
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: [f64; 2],
}

fn forward(arch: Architecture, w: &[Vec<f64>], x: &[f64]) -> Forward {
    let pre = match arch {
        Architecture::Mlp => matvec(&w[0], HIDDEN, x),
        Architecture::TinyCnn => conv_forward(&w[0], x),
    };
    let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let out = matvec(&w[1], CLASSES, &hidden);
    Forward {
        pre,
        hidden,
        logits: [out[0], out[1]],
    }
}

/// `y = W x` for column-major `W` with `rows` rows.
fn matvec(w: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; rows];
    for (j, &xv) in x.iter().enumerate() {
        for (o, &wv) in y.iter_mut().zip(&w[rows * j..rows * (j + 1)]) {
            *o += wv * xv;
        }
    }
    y
}

fn conv_forward(k: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; CONV_OUT];
    for t in 0..CHANNELS {
        for h in 0..CONV_SIDE {
            for w in 0..CONV_SIDE {
                let mut acc = 0.0;
                for k2 in 0..3 {
                    for k1 in 0..3 {
                        acc += k[k1 + 3 * (k2 + 3 * t)] * x[(w + k1) + IMAGE * (h + k2)];
                    }
                }
                out[w + CONV_SIDE * (h + CONV_SIDE * t)] = acc;
            }
        }
    }
    out
}

fn batch_stats(arch: Architecture, w: &[Vec<f64>], batch: &Batch, grads: bool) -> Result<Gradients> {
    if batch.is_empty() {
        return arg_err("empty batch");
    }
    if batch.features != arch.input_len() {
        return arg_err(format!(
            "{} takes {} inputs, batch has {}",
            arch.name(),
            arch.input_len(),
            batch.features
        ));
    }
    if let Some(&bad) = batch.labels.iter().find(|&&l| l >= CLASSES) {
        return arg_err(format!("label {bad} out of range"));
    }
    let shapes = arch.shapes();
    if w.len() != shapes.len()
        || w.iter().zip(&shapes).any(|(v, s)| v.len() != s.iter().product::<usize>())
    {
        return Err(Error::Argument("weight sizes do not match the architecture".into()));
    }
    let n = batch.len() as f64;
    let mut layers: Vec<Vec<f64>> = if grads {
        w.iter().map(|v| vec![0.0; v.len()]).collect()
    } else {
        Vec::new()
    };
    let (mut loss, mut correct) = (0.0, 0usize);
    for i in 0..batch.len() {
        let x: Vec<f64> = batch.sample(i).iter().map(|&v| f64::from(v)).collect();
        let label = batch.labels[i];
        let f = forward(arch, w, &x);
        let [a, b] = f.logits;
        let top = a.max(b);
        let lse = top + ((a - top).exp() + (b - top).exp()).ln();
        loss += lse - f.logits[label];
        let predicted = usize::from(b > a);
        correct += usize::from(predicted == label);
        if !grads {
            continue;
        }
        // dL/dlogit = softmax − one-hot, averaged over the batch.
        let mut dlogit = [(a - lse).exp(), (b - lse).exp()];
        dlogit[label] -= 1.0;
        let dlogit = dlogit.map(|v| v / n);
        let hidden_len = f.hidden.len();
        for j in 0..hidden_len {
            for c in 0..CLASSES {
                layers[1][c + CLASSES * j] += dlogit[c] * f.hidden[j];
            }
        }
        let dpre: Vec<f64> = (0..hidden_len)
            .map(|j| {
                if f.pre[j] > 0.0 {
                    dlogit[0] * w[1][CLASSES * j] + dlogit[1] * w[1][1 + CLASSES * j]
                } else {
                    0.0
                }
            })
            .collect();
        match arch {
            Architecture::Mlp => {
                for (j, &xv) in x.iter().enumerate() {
                    for (r, &d) in dpre.iter().enumerate() {
                        layers[0][r + HIDDEN * j] += d * xv;
                    }
                }
            }
            Architecture::TinyCnn => {
                for t in 0..CHANNELS {
                    for k2 in 0..3 {
                        for k1 in 0..3 {
                            let mut acc = 0.0;
                            for h in 0..CONV_SIDE {
                                for ww in 0..CONV_SIDE {
                                    acc += dpre[ww + CONV_SIDE * (h + CONV_SIDE * t)]
                                        * x[(ww + k1) + IMAGE * (h + k2)];
                                }
                            }
                            layers[0][k1 + 3 * (k2 + 3 * t)] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(Gradients {
        loss: loss / n,
        accuracy: correct as f64 / n,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admm::data::{blobs, stripes};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_ln2() {
        let net = ToyNet::from_weights(
            Architecture::Mlp,
            Architecture::Mlp
                .shapes()
                .into_iter()
                .map(|s| DenseTensor::zeros(s).unwrap())
                .collect(),
        )
        .unwrap();
        let (train, _) = blobs(0);
        let g = toy_backward(&net, &train.batch(&[0, 1, 2, 3])).unwrap();
        assert!((g.loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ToyNet::init(Architecture::TinyCnn, &mut rng);
        let (train, _) = stripes(1);
        let a = toy_backward(&net, &train.batch(&[0, 1, 2, 3, 4])).unwrap();
        let b = toy_backward(&net, &train.batch(&[0, 1, 2, 3, 4, 0, 1, 2, 3, 4])).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            for (x, y) in la.iter().zip(lb) {
                assert!((x - y).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn rejects_wrong_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = ToyNet::init(Architecture::Mlp, &mut rng);
        let (train, _) = stripes(0);
        assert!(toy_backward(&net, &train.batch(&[0])).is_err());
        assert!(net.logits(&[0.0; 3]).is_err());
    }
}
