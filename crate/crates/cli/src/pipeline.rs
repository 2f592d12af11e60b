//! train → compress → eval, plus the trade-off sweep and model summaries.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use stn_core::admm::{train_sgd, train_stn, TrainingLog, ToyNet};
use stn_core::layers::{
    conv2d_tn_counted, fc_tn_counted, plan_tensorization, LayerKind, LayerSpec, LayerWeights,
};
use stn_core::tn::search_kappa;
use stn_core::{als_fit, AlsConfig, DenseTensor, RankProfile, TnTopology};

use crate::config::{DataConfig, Optimizer, Split, TrainConfig};
use crate::error::{CliError, Result};
use crate::model::{dense_weight, join, Evaluation, Model};

/// Spatial size the conv FLOP counts are taken at.
pub const CONV_INPUT: usize = 8;

/// Trains the configured network and returns the dense model with its log.
pub fn train_model(cfg: &TrainConfig) -> Result<(Model, TrainingLog)> {
    let (train, _) = cfg.dataset.generate(cfg.data_seed);
    let net = ToyNet::init(cfg.arch, &mut ChaCha8Rng::seed_from_u64(cfg.init_seed));
    let (trained, log) = match cfg.optimizer {
        Optimizer::Stn => train_stn(&net, &train, &cfg.admm)?,
        Optimizer::Sgd => (train_sgd(&net, &train, &cfg.admm)?, TrainingLog::default()),
    };
    let mut model = Model::from_net(&trained, cfg.dataset, cfg.data_seed)?;
    let optimizer = match cfg.optimizer {
        Optimizer::Stn => "stn",
        Optimizer::Sgd => "sgd",
    };
    model.provenance = vec![
        ("config_hash".into(), cfg.hash.clone()),
        ("optimizer".into(), optimizer.into()),
        ("init_seed".into(), cfg.init_seed.to_string()),
        ("batch_seed".into(), cfg.admm.seed.to_string()),
        ("lambda".into(), cfg.admm.lambda.to_string()),
        ("steps".into(), cfg.admm.max_steps.to_string()),
    ];
    Ok((model, log))
}

pub fn run_train(config: &Path, out: &Path, log: Option<&Path>) -> Result<TrainingLog> {
    let cfg = TrainConfig::load(config)?;
    let (model, training) = train_model(&cfg)?;
    model.save(out)?;
    if let Some(p) = log {
        write_text(p, &training.to_csv())?;
    }
    Ok(training)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Target `dense / TN` over all layers.
    Ratio(f64),
    Kappa(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub index: usize,
    pub kind: &'static str,
    /// False when the layer was kept dense because its TN form was larger.
    pub compressed: bool,
    pub dense_params: usize,
    pub params: usize,
    pub rse: f64,
    /// Ranks selected at κ, upper-triangle order, over `dims`.
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub pruned: Vec<(usize, usize)>,
    pub dense_flops: u64,
    pub flops: u64,
}

impl LayerReport {
    pub fn ratio(&self) -> f64 {
        self.dense_params as f64 / self.params as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub kappa: f64,
    pub target_ratio: Option<f64>,
    pub layers: Vec<LayerReport>,
}

impl CompressionReport {
    pub fn dense_params(&self) -> usize {
        self.layers.iter().map(|l| l.dense_params).sum()
    }

    pub fn params(&self) -> usize {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn total_ratio(&self) -> f64 {
        self.dense_params() as f64 / self.params() as f64
    }

    pub fn dense_flops(&self) -> u64 {
        self.layers.iter().map(|l| l.dense_flops).sum()
    }

    pub fn flops(&self) -> u64 {
        self.layers.iter().map(|l| l.flops).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "layer,kind,format,kappa,dense_params,params,ratio,rse,dims,ranks,pruned_edges,dense_flops,flops\n",
        );
        for l in &self.layers {
            let pruned: Vec<String> = l.pruned.iter().map(|(a, b)| format!("{a}-{b}")).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6e},{},{},{},{},{}",
                l.index,
                l.kind,
                if l.compressed { "tn" } else { "keep-dense" },
                self.kappa,
                l.dense_params,
                l.params,
                l.ratio(),
                l.rse,
                join(&l.dims, ";"),
                join(&l.ranks, ";"),
                pruned.join(";"),
                l.dense_flops,
                l.flops
            )
            .unwrap();
        }
        writeln!(
            out,
            "total,,,{},{},{},{:.6},,,,,{},{}",
            self.kappa,
            self.dense_params(),
            self.params(),
            self.total_ratio(),
            self.dense_flops(),
            self.flops()
        )
        .unwrap();
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        match self.target_ratio {
            Some(r) => writeln!(out, "kappa = {} (target ratio {r})", self.kappa),
            None => writeln!(out, "kappa = {}", self.kappa),
        }
        .unwrap();
        for l in &self.layers {
            writeln!(
                out,
                "layer {} {}: {} -> {} params (x{:.3}), rse {:.3e}, ranks [{}]{}",
                l.index,
                l.kind,
                l.dense_params,
                l.params,
                l.ratio(),
                l.rse,
                join(&l.ranks, ","),
                if l.compressed { "" } else { ", kept dense" }
            )
            .unwrap();
        }
        writeln!(
            out,
            "total: {} -> {} params (x{:.3}), {} -> {} MACs",
            self.dense_params(),
            self.params(),
            self.total_ratio(),
            self.dense_flops(),
            self.flops()
        )
        .unwrap();
        out
    }
}

/// The dense tensor a layer is decomposed as: the kernel itself for conv,
/// the tensorized matrix for FC.
fn target(layer: &LayerSpec) -> Result<(DenseTensor, LayerKind)> {
    let w = dense_weight(layer)?;
    Ok(match *layer.kind() {
        LayerKind::Conv { .. } => (w, layer.kind().clone()),
        LayerKind::Fc { rows, cols, .. } => {
            let plan = plan_tensorization(rows, cols, 2)?;
            let t = w.reshape(plan.dims())?;
            (t, LayerKind::Fc { rows, cols, plan: Some(plan) })
        }
    })
}

fn dense_flops(kind: &LayerKind) -> u64 {
    match *kind {
        LayerKind::Conv { kernel, in_channels, out_channels } => {
            let side = (CONV_INPUT - kernel + 1) as u64;
            side * side * (kernel * kernel * in_channels * out_channels) as u64
        }
        LayerKind::Fc { rows, cols, .. } => (rows * cols) as u64,
    }
}

fn counted_flops(layer: &LayerSpec) -> Result<u64> {
    Ok(match (layer.kind(), layer.weights()) {
        (kind, LayerWeights::Dense(_)) => dense_flops(kind),
        (LayerKind::Conv { in_channels, .. }, LayerWeights::Tn(f)) => {
            let x = DenseTensor::zeros(vec![CONV_INPUT, CONV_INPUT, *in_channels])?;
            conv2d_tn_counted(&x, f)?.1.total()
        }
        (LayerKind::Fc { cols, plan: Some(plan), .. }, LayerWeights::Tn(f)) => {
            fc_tn_counted(&vec![0.0; *cols], f, plan)?.1
        }
        (LayerKind::Fc { .. }, LayerWeights::Tn(_)) => unreachable!("validated by LayerSpec"),
    })
}

/// Decomposes every layer at one global κ. Nothing is retrained.
pub fn compress_model(model: &Model, budget: Budget, seed: u64) -> Result<(Model, CompressionReport)> {
    let targets = model.layers.iter().map(target).collect::<Result<Vec<_>>>()?;
    let profiles = targets
        .iter()
        .map(|(t, _)| RankProfile::new(t))
        .collect::<stn_core::Result<Vec<_>>>()?;
    let dense: Vec<usize> = targets.iter().map(|(t, _)| t.len()).collect();
    let (kappa, target_ratio) = match budget {
        Budget::Kappa(k) => (k, None),
        Budget::Ratio(r) => {
            let found = search_kappa(dense.iter().sum(), r, |k| {
                profiles
                    .iter()
                    .zip(&dense)
                    .map(|(p, &d)| p.params_at(k).map(|n| n.min(d)))
                    .sum()
            })?;
            (found.kappa, Some(r))
        }
    };

    let mut layers = Vec::with_capacity(targets.len());
    let mut reports = Vec::with_capacity(targets.len());
    for (l, ((t, kind), profile)) in targets.into_iter().zip(&profiles).enumerate() {
        let topo: TnTopology = profile.topology_at(kappa)?;
        let keep_dense = topo.param_count() > t.len();
        let (spec, rse) = if keep_dense {
            (model.layers[l].clone(), 0.0)
        } else {
            let fit = als_fit(&t, &topo, &AlsConfig::with_seed(seed.wrapping_add(l as u64)))?;
            (LayerSpec::new(kind.clone(), LayerWeights::Tn(fit.factors))?, fit.rse)
        };
        reports.push(LayerReport {
            index: l,
            kind: match kind {
                LayerKind::Conv { .. } => "conv",
                LayerKind::Fc { .. } => "fc",
            },
            compressed: !keep_dense,
            dense_params: t.len(),
            params: spec.param_count(),
            rse,
            dims: topo.dims().to_vec(),
            ranks: topo.ranks().to_vec(),
            pruned: topo.rank_one_edges(),
            dense_flops: dense_flops(&kind),
            flops: counted_flops(&spec)?,
        });
        layers.push(spec);
    }

    let mut provenance = model.provenance.clone();
    provenance.retain(|(k, _)| !k.starts_with("compress_"));
    provenance.push(("compress_source".into(), container_hash(model)));
    provenance.push(("compress_kappa".into(), kappa.to_string()));
    if let Some(r) = target_ratio {
        provenance.push(("compress_target_ratio".into(), r.to_string()));
    }
    provenance.push(("compress_seed".into(), seed.to_string()));
    let compressed = Model {
        provenance,
        layers,
        ..model.clone()
    };
    Ok((
        compressed,
        CompressionReport {
            kappa,
            target_ratio,
            layers: reports,
        },
    ))
}

fn container_hash(model: &Model) -> String {
    Sha256::digest(model.to_container().to_bytes())[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn run_compress(
    model: &Path,
    budget: Budget,
    out: &Path,
    report: Option<&Path>,
    seed: u64,
) -> Result<CompressionReport> {
    let m = Model::load(model)?;
    let (compressed, rep) = compress_model(&m, budget, seed)?;
    compressed.save(out)?;
    if let Some(p) = report {
        write_text(p, &rep.to_csv())?;
    }
    Ok(rep)
}

/// Evaluates on a split described by a data config.
pub fn evaluate_on(model: &Model, data: &DataConfig, data_path: &Path) -> Result<Evaluation> {
    let (train, test) = data.dataset.generate(data.data_seed);
    let set = match data.split {
        Split::Train => train,
        Split::Test => test,
    };
    if set.features() != model.arch.input_len() {
        return Err(CliError::Data {
            path: data_path.to_path_buf(),
            msg: format!(
                "{} samples have {} features, {} takes {}",
                data.dataset.name(),
                set.features(),
                model.arch.name(),
                model.arch.input_len()
            ),
        });
    }
    model.evaluate(&set)
}

pub fn run_eval(model: &Path, data: &Path) -> Result<Evaluation> {
    let m = Model::load(model)?;
    evaluate_on(&m, &DataConfig::load(data)?, data)
}

/// Compression ratio and test accuracy at each κ.
pub fn tradeoff_csv(model: &Model, kappas: &[f64], seed: u64) -> Result<String> {
    let (_, test) = model.dataset.generate(model.data_seed);
    let mut out = String::from("kappa,total_ratio");
    for l in 0..model.layers.len() {
        write!(out, ",ratio_{l}").unwrap();
    }
    out.push_str(",accuracy\n");
    for &k in kappas {
        let (compressed, rep) = compress_model(model, Budget::Kappa(k), seed)?;
        let acc = compressed.evaluate(&test)?.accuracy;
        write!(out, "{k},{:.6}", rep.total_ratio()).unwrap();
        for l in &rep.layers {
            write!(out, ",{:.6}", l.ratio()).unwrap();
        }
        writeln!(out, ",{acc:.6}").unwrap();
    }
    Ok(out)
}

pub fn emit_tradeoff(model: &Path, kappas: &[f64], out: &Path, seed: u64) -> Result<String> {
    let csv = tradeoff_csv(&Model::load(model)?, kappas, seed)?;
    write_text(out, &csv)?;
    Ok(csv)
}

/// Human-readable listing of a model file.
pub fn describe(model: &Model) -> Result<String> {
    let mut out = String::new();
    writeln!(
        out,
        "{} on {} (data seed {}), {} parameters",
        model.arch.name(),
        model.dataset.name(),
        model.data_seed,
        model.param_count()
    )
    .unwrap();
    for (k, v) in &model.provenance {
        writeln!(out, "  {k} = {v}").unwrap();
    }
    for (l, layer) in model.layers.iter().enumerate() {
        let kind = match layer.kind() {
            LayerKind::Conv { kernel, in_channels, out_channels } => {
                format!("conv {kernel}x{kernel}x{in_channels}x{out_channels}")
            }
            LayerKind::Fc { rows, cols, .. } => format!("fc {rows}x{cols}"),
        };
        let (weights, dense) = match layer.weights() {
            LayerWeights::Dense(w) => ("dense".to_string(), w.len()),
            LayerWeights::Tn(f) => {
                let t = f.topology();
                let pruned: Vec<String> = t.rank_one_edges().iter().map(|(a, b)| format!("{a}-{b}")).collect();
                (
                    format!(
                        "tn over [{}], ranks [{}], pruned edges [{}]",
                        join(t.dims(), ","),
                        join(t.ranks(), ","),
                        pruned.join(" ")
                    ),
                    t.dims().iter().product(),
                )
            }
        };
        writeln!(
            out,
            "layer {l}: {kind}, {weights}, {} params ({dense} dense), {} MACs",
            layer.param_count(),
            counted_flops(layer)?
        )
        .unwrap();
    }
    Ok(out)
}

pub fn run_report(model: &Path) -> Result<String> {
    describe(&Model::load(model)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
