//! Run configuration: defaults, then a TOML file, then command-line flags.
//!
//! Resolution works on TOML tables. The defaults are serialized to a table,
//! the file's keys are laid over it, then the flags' keys, and the result is
//! deserialized with unknown keys rejected. The echo printed before a run is
//! the serialized resolved config, so feeding it back reproduces the run.

use std::path::{Path, PathBuf};

use dml_s2r_core::dml::{NegativeWeighting, SelectionScore};
use dml_s2r_core::trainer::{EpochSemantics, OptimizerSharing, Plateau};
use dml_s2r_core::{RllConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::bench::{ExperimentConfig, Method, NormFit};
use crate::error::{AppError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Prepare,
    Train,
    Bench,
}

/// Pair mini-batch size, or the whole pair set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BatchRepr", into = "BatchRepr")]
pub enum BatchSize {
    Full,
    Pairs(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BatchRepr {
    Num(i64),
    Word(String),
}

impl TryFrom<BatchRepr> for BatchSize {
    type Error = String;

    fn try_from(r: BatchRepr) -> std::result::Result<Self, String> {
        match r {
            BatchRepr::Num(n) if n >= 1 => Ok(BatchSize::Pairs(n as usize)),
            BatchRepr::Word(w) if w == "full" => Ok(BatchSize::Full),
            BatchRepr::Num(n) => Err(format!("batch_size must be >= 1, got {n}")),
            BatchRepr::Word(w) => Err(format!("batch_size must be a positive integer or \"full\", got \"{w}\"")),
        }
    }
}

impl From<BatchSize> for BatchRepr {
    fn from(b: BatchSize) -> Self {
        match b {
            BatchSize::Full => BatchRepr::Word("full".into()),
            BatchSize::Pairs(n) => BatchRepr::Num(n as i64),
        }
    }
}

impl BatchSize {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let repr = match s.parse::<i64>() {
            Ok(n) => BatchRepr::Num(n),
            Err(_) => BatchRepr::Word(s.to_string()),
        };
        BatchSize::try_from(repr)
    }

    fn as_option(self) -> Option<usize> {
        match self {
            BatchSize::Full => None,
            BatchSize::Pairs(n) => Some(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Raw CSV (read with `schema`) or a prepared `.json` dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    pub out: PathBuf,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub method: Vec<Method>,
    /// Adds step1-only rows and |S| = 100 to a benchmark.
    pub ablation: bool,
    pub cycles: usize,
    pub lr: f64,
    pub batch_size: BatchSize,
    pub k: usize,
    pub tau: f64,
    pub alpha: f64,
    pub margin: f64,
    pub signed_selection: bool,
    pub rll_neg_weight: NegativeWeighting,
    pub normalize_embeddings: bool,
    pub epoch_semantics: EpochSemantics,
    pub optimizer: OptimizerSharing,
    /// Stop early when both losses plateau (window 5, relative change 1e-4).
    pub plateau: bool,
    pub hidden: Vec<usize>,
    /// Unlabeled set size; taken from the dataset schema when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled: Option<usize>,
    pub norm_fit: NormFit,
    pub knn_k: usize,
    pub record_timing: bool,
    pub dump_dml: bool,
    /// Reference values shown beside measured ones in benchmark tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

impl RunConfig {
    pub fn defaults(cmd: Command) -> Self {
        let t = TrainConfig::default();
        let bench = cmd == Command::Bench;
        RunConfig {
            data: None,
            schema: None,
            out: PathBuf::from("out"),
            sizes: if bench { vec![10, 20, 50] } else { vec![10] },
            seeds: if bench { (0..5).collect() } else { vec![0] },
            method: if bench {
                vec![Method::DmlS2r, Method::KnnRaw]
            } else {
                vec![Method::DmlS2r]
            },
            ablation: false,
            cycles: t.cycles,
            lr: t.learning_rate,
            batch_size: t.batch_size.map_or(BatchSize::Full, BatchSize::Pairs),
            k: t.rll.k,
            tau: t.rll.tau,
            alpha: t.rll.alpha,
            margin: t.rll.margin,
            signed_selection: t.rll.selection == SelectionScore::Signed,
            rll_neg_weight: t.rll.negative_weighting,
            normalize_embeddings: t.rll.normalize_embeddings,
            epoch_semantics: t.epoch_semantics,
            optimizer: t.optimizer,
            plateau: false,
            hidden: t.hidden,
            unlabeled: None,
            norm_fit: NormFit::All,
            knn_k: 3,
            record_timing: false,
            dump_dml: false,
            reference: None,
        }
    }

    /// Lays `file` and then `flags` over the defaults for `cmd`.
    pub fn resolve(cmd: Command, file: Option<&Table>, flags: &Table) -> Result<Self> {
        let mut merged = Table::try_from(Self::defaults(cmd)).map_err(|e| AppError::Runtime(e.to_string()))?;
        for layer in file.into_iter().chain([flags]) {
            for (k, v) in layer {
                merged.insert(k.clone(), v.clone());
            }
        }
        let mut cfg: RunConfig = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| AppError::Usage(format!("invalid configuration: {}", e.message())))?;
        if cfg.ablation {
            if cmd == Command::Train {
                cfg.method = vec![Method::Step1Only];
            } else {
                if !cfg.method.contains(&Method::Step1Only) {
                    cfg.method.push(Method::Step1Only);
                }
                if !cfg.sizes.contains(&100) {
                    cfg.sizes.push(100);
                }
            }
        }
        cfg.validate(cmd)?;
        Ok(cfg)
    }

    pub fn load_file(path: &Path) -> Result<Table> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        text.parse::<Table>()
            .map_err(|e| AppError::Usage(format!("{}: {}", path.display(), e.message())))
    }

    pub fn validate(&self, cmd: Command) -> Result<()> {
        let usage = |m: String| Err(AppError::Usage(m));
        if self.seeds.is_empty() {
            return usage("at least one seed is required".into());
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return usage("sizes must be a non-empty list of positive counts".into());
        }
        if self.method.is_empty() {
            return usage("at least one method is required".into());
        }
        if cmd == Command::Train && (self.sizes.len() != 1 || self.seeds.len() != 1 || self.method.len() != 1) {
            return usage(format!(
                "train runs one size, one seed and one method; got {} sizes, {} seeds, {} methods",
                self.sizes.len(),
                self.seeds.len(),
                self.method.len()
            ));
        }
        if self.knn_k == 0 {
            return usage("knn_k must be >= 1".into());
        }
        self.train_config().validate()?;
        self.rll_config().validate()?;
        Ok(())
    }

    pub fn rll_config(&self) -> RllConfig {
        RllConfig {
            tau: self.tau,
            alpha: self.alpha,
            margin: self.margin,
            k: self.k,
            negative_weighting: self.rll_neg_weight,
            selection: if self.signed_selection {
                SelectionScore::Signed
            } else {
                SelectionScore::Absolute
            },
            normalize_embeddings: self.normalize_embeddings,
        }
    }

    /// Training settings; the seed is filled per run.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            cycles: self.cycles,
            batch_size: self.batch_size.as_option(),
            learning_rate: self.lr,
            rll: self.rll_config(),
            seed: 0,
            plateau: self.plateau.then(Plateau::default),
            epoch_semantics: self.epoch_semantics,
            optimizer: self.optimizer,
            mode: Default::default(),
            hidden: self.hidden.clone(),
        }
    }

    pub fn experiment_config(&self, n_unlabeled: usize, norm_fit: NormFit) -> ExperimentConfig {
        ExperimentConfig {
            train: self.train_config(),
            n_unlabeled,
            knn_k: self.knn_k,
            norm_fit,
            record_timing: self.record_timing,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| AppError::Runtime(e.to_string()))
    }
}

/// Parses a seed argument: a single count `n` means seeds `0..n` for
/// benchmarks and the one seed `n` for training; a comma list is explicit.
pub fn parse_seeds(cmd: Command, s: &str) -> std::result::Result<Vec<u64>, String> {
    let items = parse_list::<u64>(s)?;
    Ok(match (cmd, items.as_slice()) {
        (Command::Bench, [n]) if !s.contains(',') => (0..*n).collect(),
        _ => items,
    })
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| format!("'{p}': {e}")))
        .collect()
}
