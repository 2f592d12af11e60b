//! `key = value` configuration files. Blank lines and text after `#` are
//! ignored.

use std::path::Path;

use sha2::{Digest, Sha256};
use stn_core::admm::{AdmmConfig, Architecture, DatasetKind};

use crate::error::{CliError, Result};

/// Parsed pairs in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", n + 1)));
        }
        if out.iter().any(|(key, _)| key == k) {
            return Err(CliError::Config(format!("key `{k}` given twice")));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::Config(format!("key `{key}`: cannot parse `{v}`")))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Short, stable fingerprint of a config text.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// SGD with periodic ADMM rounds.
    Stn,
    /// Plain SGD with the same batch order.
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub dataset: DatasetKind,
    pub data_seed: u64,
    pub init_seed: u64,
    pub optimizer: Optimizer,
    pub admm: AdmmConfig,
    /// Hash of the source text.
    pub hash: String,
}

pub const TRAIN_KEYS: &[&str] = &[
    "arch",
    "dataset",
    "data_seed",
    "init_seed",
    "optimizer",
    "lambda",
    "mu0",
    "rho",
    "mu_max",
    "period",
    "learning_rate",
    "batch_size",
    "steps",
    "batch_seed",
    "log_every",
    "rank_kappa",
];

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut arch = Architecture::Mlp;
        let mut dataset = None;
        let mut data_seed = None;
        let mut init_seed = None;
        let mut optimizer = Optimizer::Stn;
        let mut admm = AdmmConfig::default();
        let mut batch_seed = None;
        for (k, v) in &pairs {
            match k.as_str() {
                "arch" => {
                    arch = Architecture::parse(v)
                        .ok_or_else(|| CliError::Config(format!("key `arch`: unknown architecture `{v}`")))?
                }
                "dataset" => {
                    dataset = Some(
                        DatasetKind::parse(v)
                            .ok_or_else(|| CliError::Config(format!("key `dataset`: unknown dataset `{v}`")))?,
                    )
                }
                "data_seed" => data_seed = Some(value(k, v)?),
                "init_seed" => init_seed = Some(value(k, v)?),
                "optimizer" => {
                    optimizer = match v.as_str() {
                        "stn" => Optimizer::Stn,
                        "sgd" => Optimizer::Sgd,
                        _ => return Err(CliError::Config(format!("key `optimizer`: unknown optimizer `{v}`"))),
                    }
                }
                "lambda" => admm.lambda = value(k, v)?,
                "mu0" => admm.mu0 = value(k, v)?,
                "rho" => admm.rho = value(k, v)?,
                "mu_max" => admm.mu_max = value(k, v)?,
                "period" => admm.period = value(k, v)?,
                "learning_rate" => admm.learning_rate = value(k, v)?,
                "batch_size" => admm.batch_size = value(k, v)?,
                "steps" => admm.max_steps = value(k, v)?,
                "batch_seed" => batch_seed = Some(value(k, v)?),
                "log_every" => admm.log_every = value(k, v)?,
                "rank_kappa" => admm.rank_kappa = value(k, v)?,
                other => return Err(CliError::Config(format!("unknown key `{other}`"))),
            }
        }
        let data_seed: u64 = data_seed.ok_or_else(|| CliError::Config("missing key `data_seed`".into()))?;
        admm.seed = batch_seed.unwrap_or(data_seed);
        admm.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let dataset = dataset.unwrap_or(match arch {
            Architecture::Mlp => DatasetKind::Blobs,
            Architecture::TinyCnn => DatasetKind::Stripes,
        });
        Ok(Self {
            arch,
            dataset,
            data_seed,
            init_seed: init_seed.unwrap_or(data_seed),
            optimizer,
            admm,
            hash: config_hash(text),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Which data an evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataConfig {
    pub dataset: DatasetKind,
    pub data_seed: u64,
    pub split: Split,
}

impl DataConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dataset = None;
        let mut data_seed = None;
        let mut split = Split::Test;
        for (k, v) in parse_pairs(text)? {
            match k.as_str() {
                "dataset" => {
                    dataset = Some(
                        DatasetKind::parse(&v)
                            .ok_or_else(|| CliError::Config(format!("key `dataset`: unknown dataset `{v}`")))?,
                    )
                }
                "data_seed" => data_seed = Some(value(&k, &v)?),
                "split" => {
                    split = match v.as_str() {
                        "train" => Split::Train,
                        "test" => Split::Test,
                        _ => return Err(CliError::Config(format!("key `split`: expected train or test, got `{v}`"))),
                    }
                }
                other => return Err(CliError::Config(format!("unknown key `{other}`"))),
            }
        }
        Ok(Self {
            dataset: dataset.ok_or_else(|| CliError::Config("missing key `dataset`".into()))?,
            data_seed: data_seed.ok_or_else(|| CliError::Config("missing key `data_seed`".into()))?,
            split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults_and_comments() {
        let c = TrainConfig::parse("# toy run\ndata_seed = 3\nlambda=0.01 # stronger\n\n").unwrap();
        assert_eq!((c.data_seed, c.init_seed, c.admm.seed), (3, 3, 3));
        assert_eq!(c.admm.lambda, 0.01);
        assert_eq!(c.admm.period, 100);
        assert_eq!(c.dataset, DatasetKind::Blobs);
    }

    #[test]
    fn config_errors_name_the_key() {
        let e = TrainConfig::parse("data_seed = 1\nlambada = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("lambada"));
        let e = TrainConfig::parse("lambda = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("data_seed"));
        assert!(TrainConfig::parse("data_seed = x\n").is_err());
        assert!(TrainConfig::parse("data_seed = 1\nrho = 0.5\n").is_err());
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn data_config() {
        let d = DataConfig::parse("dataset = stripes\ndata_seed = 4\nsplit = train\n").unwrap();
        assert_eq!((d.dataset, d.data_seed, d.split), (DatasetKind::Stripes, 4, Split::Train));
        assert!(DataConfig::parse("dataset = blobs\n").is_err());
    }
}
