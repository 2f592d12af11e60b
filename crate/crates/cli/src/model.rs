//! A toy network as a list of layers, dense or TN, and its mapping to and
//! from a [`ModelContainer`].

use std::path::Path;

use stn_core::admm::{Architecture, Batch, Dataset, DatasetKind, ToyNet};
use stn_core::layers::{LayerKind, LayerSpec, LayerWeights, TensorizationPlan};
use stn_core::{DenseTensor, TnFactorSet, TnTopology};

use crate::container::{Manifest, ModelContainer};
use crate::error::{CliError, Result};

pub const FORMAT: &str = "stn-model";

/// Image side of the TinyCNN input.
const IMAGE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub dataset: DatasetKind,
    pub data_seed: u64,
    /// Free-form `provenance.*` manifest entries, without the prefix.
    pub provenance: Vec<(String, String)>,
    pub layers: Vec<LayerSpec>,
}

/// Loss and accuracy of a model on one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub samples: usize,
}

fn kinds(arch: Architecture) -> Vec<LayerKind> {
    arch.shapes()
        .into_iter()
        .map(|s| match s.as_slice() {
            &[k, _, s, t] => LayerKind::Conv {
                kernel: k,
                in_channels: s,
                out_channels: t,
            },
            &[rows, cols] => LayerKind::Fc { rows, cols, plan: None },
            other => unreachable!("toy layer shape {other:?}"),
        })
        .collect()
}

impl Model {
    pub fn from_net(net: &ToyNet, dataset: DatasetKind, data_seed: u64) -> Result<Self> {
        let arch = net.architecture();
        let layers = kinds(arch)
            .into_iter()
            .zip(net.weights())
            .map(|(kind, w)| LayerSpec::new(kind, LayerWeights::Dense(w.clone())))
            .collect::<stn_core::Result<Vec<_>>>()?;
        Ok(Self {
            arch,
            dataset,
            data_seed,
            provenance: Vec::new(),
            layers,
        })
    }

    pub fn is_dense(&self) -> bool {
        self.layers
            .iter()
            .all(|l| matches!(l.weights(), LayerWeights::Dense(_)))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// The equivalent dense network; TN layers are contracted back.
    pub fn to_dense_net(&self) -> Result<ToyNet> {
        let weights = self
            .layers
            .iter()
            .map(dense_weight)
            .collect::<Result<Vec<_>>>()?;
        Ok(ToyNet::from_weights(self.arch, weights)?)
    }

    /// Class scores for one sample, running each layer in its stored format.
    pub fn logits(&self, x: &[f32]) -> Result<[f32; 2]> {
        let mut h = match self.arch {
            Architecture::Mlp => DenseTensor::new(vec![x.len()], x.to_vec())?,
            Architecture::TinyCnn => DenseTensor::new(vec![IMAGE, IMAGE, 1], x.to_vec())?,
        };
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                let flat: Vec<f32> = h.data().iter().map(|v| v.max(0.0)).collect();
                h = DenseTensor::new(vec![flat.len()], flat)?;
            }
            h = layer.forward(&h)?;
        }
        match h.data() {
            &[a, b] => Ok([a, b]),
            d => Err(CliError::Format {
                path: Default::default(),
                msg: format!("network produced {} outputs, expected 2", d.len()),
            }),
        }
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<Evaluation> {
        self.evaluate_batch(&data.all())
    }

    pub fn evaluate_batch(&self, batch: &Batch) -> Result<Evaluation> {
        let (mut loss, mut correct) = (0.0f64, 0usize);
        for i in 0..batch.len() {
            let [a, b] = self.logits(batch.sample(i))?.map(f64::from);
            let top = a.max(b);
            let lse = top + ((a - top).exp() + (b - top).exp()).ln();
            let label = batch.labels[i];
            loss += lse - [a, b][label];
            correct += usize::from(usize::from(b > a) == label);
        }
        let n = batch.len().max(1) as f64;
        Ok(Evaluation {
            accuracy: correct as f64 / n,
            loss: loss / n,
            samples: batch.len(),
        })
    }

    pub fn to_container(&self) -> ModelContainer {
        let mut m = Manifest::new();
        m.set("format", FORMAT);
        m.set("arch", self.arch.name());
        m.set("dataset", self.dataset.name());
        m.set("data_seed", self.data_seed);
        for (k, v) in &self.provenance {
            m.set(format!("provenance.{k}"), v);
        }
        m.set("layers", self.layers.len());
        let mut tensors = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let key = |s: &str| format!("layer.{l}.{s}");
            match layer.kind() {
                LayerKind::Conv { kernel, in_channels, out_channels } => {
                    m.set(key("kind"), "conv");
                    m.set(key("shape"), join(&[*kernel, *kernel, *in_channels, *out_channels], "x"));
                }
                LayerKind::Fc { rows, cols, plan } => {
                    m.set(key("kind"), "fc");
                    m.set(key("shape"), join(&[*rows, *cols], "x"));
                    if let Some(p) = plan {
                        m.set(key("plan.output"), join(&p.output, ","));
                        m.set(key("plan.input"), join(&p.input, ","));
                        m.set(key("plan.padded"), p.padded);
                    }
                }
            }
            let names: Vec<String> = match layer.weights() {
                LayerWeights::Dense(w) => {
                    m.set(key("format"), "dense");
                    tensors.push((key("weight"), w.clone()));
                    vec![key("weight")]
                }
                LayerWeights::Tn(f) => {
                    m.set(key("format"), "tn");
                    m.set(key("dims"), join(f.topology().dims(), ","));
                    m.set(key("ranks"), join(f.topology().ranks(), ","));
                    let pruned: Vec<String> = f
                        .topology()
                        .rank_one_edges()
                        .iter()
                        .map(|(a, b)| format!("{a}-{b}"))
                        .collect();
                    m.set(key("pruned"), pruned.join(";"));
                    f.factors()
                        .iter()
                        .enumerate()
                        .map(|(k, z)| {
                            let name = key(&format!("factor.{k}"));
                            tensors.push((name.clone(), z.clone()));
                            name
                        })
                        .collect()
                }
            };
            m.set(key("tensors"), names.join(","));
        }
        ModelContainer { manifest: m, tensors }
    }

    pub fn from_container(c: &ModelContainer, path: &Path) -> Result<Self> {
        let bad = |msg: String| CliError::Format {
            path: path.to_path_buf(),
            msg,
        };
        let m = &c.manifest;
        let get = |k: &str| m.get(k).ok_or_else(|| bad(format!("manifest lacks `{k}`")));
        if get("format")? != FORMAT {
            return Err(bad(format!("manifest format is `{}`, expected `{FORMAT}`", get("format")?)));
        }
        let arch = Architecture::parse(get("arch")?).ok_or_else(|| bad("unknown architecture".into()))?;
        let dataset = DatasetKind::parse(get("dataset")?).ok_or_else(|| bad("unknown dataset".into()))?;
        let data_seed = get("data_seed")?
            .parse()
            .map_err(|_| bad("bad data_seed".into()))?;
        let count: usize = get("layers")?.parse().map_err(|_| bad("bad layer count".into()))?;
        let expected = kinds(arch);
        if count != expected.len() {
            return Err(bad(format!("{} has {} layers, manifest lists {count}", arch.name(), expected.len())));
        }
        let mut used: Vec<&str> = Vec::new();
        let mut layers = Vec::with_capacity(count);
        for (l, base) in expected.into_iter().enumerate() {
            let key = |s: &str| format!("layer.{l}.{s}");
            let names: Vec<&str> = get(&key("tensors"))?.split(',').filter(|s| !s.is_empty()).collect();
            let fetch = |name: &str| -> Result<DenseTensor> {
                let t = c
                    .tensor(name)
                    .ok_or_else(|| bad(format!("tensor `{name}` listed in the manifest is missing")))?;
                Ok(t.clone())
            };
            let kind_tag = get(&key("kind"))?;
            let kind = match (base, kind_tag) {
                (k @ LayerKind::Conv { .. }, "conv") => k,
                (LayerKind::Fc { rows, cols, .. }, "fc") => {
                    let plan = match (m.get(&key("plan.output")), m.get(&key("plan.input"))) {
                        (Some(o), Some(i)) => Some(
                            TensorizationPlan::new(
                                parse_list(o).map_err(&bad)?,
                                parse_list(i).map_err(&bad)?,
                            )
                            .map_err(|e| bad(format!("layer {l}: {e}")))?,
                        ),
                        (None, None) => None,
                        _ => return Err(bad(format!("layer {l} has half a tensorization plan"))),
                    };
                    LayerKind::Fc { rows, cols, plan }
                }
                (_, tag) => return Err(bad(format!("layer {l} has kind `{tag}`, not what {} needs", arch.name()))),
            };
            let weights = match get(&key("format"))? {
                "dense" => match names.as_slice() {
                    [n] => LayerWeights::Dense(fetch(n)?),
                    _ => return Err(bad(format!("dense layer {l} must list one tensor"))),
                },
                "tn" => {
                    let dims = parse_list(get(&key("dims"))?).map_err(&bad)?;
                    let ranks = parse_list(get(&key("ranks"))?).map_err(&bad)?;
                    let topo = TnTopology::new(dims, ranks).map_err(|e| bad(format!("layer {l}: {e}")))?;
                    let factors = names.iter().map(|n| fetch(n)).collect::<Result<Vec<_>>>()?;
                    LayerWeights::Tn(TnFactorSet::new(topo, factors).map_err(|e| bad(format!("layer {l}: {e}")))?)
                }
                other => return Err(bad(format!("layer {l} has format `{other}`"))),
            };
            used.extend(&names);
            layers.push(LayerSpec::new(kind, weights).map_err(|e| bad(format!("layer {l}: {e}")))?);
        }
        if let Some((extra, _)) = c.tensors.iter().find(|(n, _)| !used.contains(&n.as_str())) {
            return Err(bad(format!("tensor `{extra}` is not referenced by any layer")));
        }
        let provenance = m
            .entries()
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("provenance.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(Self {
            arch,
            dataset,
            data_seed,
            provenance,
            layers,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&crate::container::load_model(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::container::save_model(path, &self.to_container())
    }
}

/// A layer's weight as a dense tensor in the network's own layout.
pub fn dense_weight(layer: &LayerSpec) -> Result<DenseTensor> {
    Ok(match (layer.kind(), layer.weights()) {
        (_, LayerWeights::Dense(w)) => w.clone(),
        (LayerKind::Conv { .. }, LayerWeights::Tn(f)) => stn_core::contract_network(f),
        (LayerKind::Fc { rows, cols, .. }, LayerWeights::Tn(f)) => {
            stn_core::contract_network(f).reshape(vec![*rows, *cols])?
        }
    })
}

pub(crate) fn join<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

fn parse_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad integer list `{s}`")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_model_matches_toy_net() {
        for arch in [Architecture::Mlp, Architecture::TinyCnn] {
            let net = ToyNet::init(arch, &mut ChaCha8Rng::seed_from_u64(5));
            let kind = if arch == Architecture::Mlp { DatasetKind::Blobs } else { DatasetKind::Stripes };
            let (_, test) = kind.generate(1);
            let model = Model::from_net(&net, kind, 1).unwrap();
            for i in 0..20 {
                let a = model.logits(test.sample(i)).unwrap();
                let b = net.logits(test.sample(i)).unwrap();
                for (x, y) in a.iter().zip(b) {
                    assert!((f64::from(*x) - y).abs() <= 1e-5 * (1.0 + y.abs()));
                }
            }
            let (_, acc) = net.evaluate(&test).unwrap();
            assert_eq!(model.evaluate(&test).unwrap().accuracy, acc);
        }
    }

    #[test]
    fn container_round_trip() {
        let net = ToyNet::init(Architecture::TinyCnn, &mut ChaCha8Rng::seed_from_u64(2));
        let mut model = Model::from_net(&net, DatasetKind::Stripes, 9).unwrap();
        model.provenance.push(("config_hash".into(), "abc".into()));
        let c = model.to_container();
        let back = Model::from_container(&c, Path::new("m")).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_dense_net().unwrap(), net);
    }

    #[test]
    fn unreferenced_or_missing_tensors_are_rejected() {
        let net = ToyNet::init(Architecture::Mlp, &mut ChaCha8Rng::seed_from_u64(2));
        let mut c = Model::from_net(&net, DatasetKind::Blobs, 0).unwrap().to_container();
        c.tensors.push(("stray".into(), DenseTensor::zeros(vec![1]).unwrap()));
        assert!(matches!(Model::from_container(&c, Path::new("m")), Err(CliError::Format { .. })));
        c.tensors.truncate(1);
        assert!(matches!(Model::from_container(&c, Path::new("m")), Err(CliError::Format { .. })));
    }
}
