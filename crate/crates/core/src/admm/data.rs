//! Small synthetic two-class datasets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{arg_err, Result};

/// Samples stored row by row; each row holds `features` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: usize,
    x: Vec<f32>,
    labels: Vec<usize>,
}

/// A minibatch copied out of a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: usize,
    pub x: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.x[i * self.features..(i + 1) * self.features]
    }
}

impl Dataset {
    pub fn new(features: usize, x: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if features == 0 || x.len() != features * labels.len() {
            return arg_err(format!(
                "{} values do not form {} samples of {features} features",
                x.len(),
                labels.len()
            ));
        }
        Ok(Self { features, x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.x[i * self.features..(i + 1) * self.features]
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut x = Vec::with_capacity(indices.len() * self.features);
        for &i in indices {
            x.extend_from_slice(self.sample(i));
        }
        Batch {
            features: self.features,
            x,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn all(&self) -> Batch {
        Batch {
            features: self.features,
            x: self.x.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// Deterministic minibatch order: each epoch is a fresh shuffle, cut into
/// full batches (a short tail is dropped).
pub struct BatchSchedule {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl BatchSchedule {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > len {
            return arg_err(format!("batch size {batch_size} invalid for {len} samples"));
        }
        let mut s = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..len).collect(),
            batch_size,
            cursor: len,
        };
        s.cursor = s.order.len();
        Ok(s)
    }

    pub fn next_indices(&mut self) -> &[usize] {
        if self.cursor + self.batch_size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor += self.batch_size;
        &self.order[start..self.cursor]
    }
}

/// Which synthetic problem to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    /// Two unit-variance Gaussian clusters in 8 dimensions at `±1.5·e₁`.
    Blobs,
    /// 8×8 single-channel images with one bright row (class 0) or column
    /// (class 1) under Gaussian noise.
    Stripes,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Blobs => "blobs",
            Self::Stripes => "stripes",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "blobs" => Some(Self::Blobs),
            "stripes" => Some(Self::Stripes),
            _ => None,
        }
    }

    /// `(train, test)` with 512 and 256 samples.
    pub fn generate(self, seed: u64) -> (Dataset, Dataset) {
        match self {
            Self::Blobs => blobs(seed),
            Self::Stripes => stripes(seed),
        }
    }
}

pub const TRAIN_SAMPLES: usize = 512;
pub const TEST_SAMPLES: usize = 256;

fn generate(seed: u64, features: usize, mut sample: impl FnMut(&mut ChaCha8Rng, usize, &mut Vec<f32>)) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |n: usize, rng: &mut ChaCha8Rng| {
        let mut x = Vec::with_capacity(n * features);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        for &label in &labels {
            sample(rng, label, &mut x);
        }
        Dataset { features, x, labels }
    };
    let train = make(TRAIN_SAMPLES, &mut rng);
    let test = make(TEST_SAMPLES, &mut rng);
    (train, test)
}

pub fn blobs(seed: u64) -> (Dataset, Dataset) {
    generate(seed, 8, |rng, label, out| {
        let centre = if label == 0 { -1.5 } else { 1.5 };
        for d in 0..8 {
            let z: f64 = rng.sample(StandardNormal);
            out.push((z + if d == 0 { centre } else { 0.0 }) as f32);
        }
    })
}

pub fn stripes(seed: u64) -> (Dataset, Dataset) {
    generate(seed, 64, |rng, label, out| {
        let line = rng.random_range(0..8usize);
        // Pixel (w, h) sits at w + 8h.
        for h in 0..8 {
            for w in 0..8 {
                let on = if label == 0 { h == line } else { w == line };
                let z: f64 = rng.sample(StandardNormal);
                out.push((0.5 * z + if on { 1.0 } else { 0.0 }) as f32);
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_shape_and_balance() {
        let (train, test) = blobs(1);
        assert_eq!((train.len(), test.len(), train.features()), (512, 256, 8));
        assert_eq!(train.labels().iter().filter(|&&l| l == 1).count(), 256);
        let mean0: f32 = (0..train.len()).map(|i| train.sample(i)[0] * if train.labels()[i] == 1 { 1.0 } else { -1.0 }).sum::<f32>() / 512.0;
        assert!((mean0 - 1.5).abs() < 0.2);
        assert_eq!(blobs(1), (train, test));
    }

    #[test]
    fn schedule_covers_each_epoch() {
        let mut s = BatchSchedule::new(10, 3, 4).unwrap();
        let mut seen: Vec<usize> = Vec::new();
        for _ in 0..3 {
            seen.extend_from_slice(s.next_indices());
        }
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9);
        assert!(BatchSchedule::new(2, 3, 0).is_err());
    }
}
