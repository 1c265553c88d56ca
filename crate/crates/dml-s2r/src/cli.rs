//! `prepare`, `train` and `bench` subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dml_s2r_core::Dataset;
use toml::{Table, Value};

use crate::bench::{self, Method, NormFit, ReferenceValues, RunHooks, TableSpec};
use crate::config::{self, BatchSize, Command, RunConfig};
use crate::dataio::{self, PreparedDataset};
use crate::error::{AppError, Result};
use crate::formats;
use crate::schema::Schema;

/// Environment variable naming the directory that holds dataset files.
pub const DATA_DIR_ENV: &str = "DML_S2R_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "dml-s2r", version, about = "Semi-supervised regression with Siamese difference models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Load a CSV, drop sentinel rows, min-max normalize, write a prepared dataset.
    Prepare(RunArgs),
    /// Train one model on one (dataset, |S|, seed) and write checkpoint and report.
    Train(RunArgs),
    /// Run every (method, |S|, seed) and write per-run reports plus table.csv/table.json.
    Bench(RunArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the keys below (flags win over the file).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Raw CSV file, or a prepared .json dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset schema (TOML).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Labeled set sizes, comma separated.
    #[arg(long)]
    pub sizes: Option<String>,
    /// bench: a count n (seeds 0..n) or a comma list; train: the seed.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Positive and negative set size per anchor.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Pairs per optimizer step, or "full".
    #[arg(long = "batch-size")]
    pub batch_size: Option<String>,
    /// dml-s2r, step1-only or knn-raw (comma list for bench).
    #[arg(long)]
    pub method: Option<String>,
    /// bench: add step1-only rows and |S| = 100; train: run step1-only.
    #[arg(long)]
    pub ablation: bool,
    /// Rank unlabeled samples by signed rather than absolute difference.
    #[arg(long = "signed-selection")]
    pub signed_selection: bool,
    #[arg(long = "rll-neg-weight", value_parser = ["paper", "rll"])]
    pub rll_neg_weight: Option<String>,
    #[arg(long = "epoch-semantics", value_parser = ["cycles", "total"])]
    pub epoch_semantics: Option<String>,
    /// Unlabeled set size (defaults to the schema's value).
    #[arg(long)]
    pub unlabeled: Option<usize>,
    /// train: continue from <out>/state.json.
    #[arg(long)]
    pub resume: bool,
    /// train: write per-epoch selection and weight diagnostics.
    #[arg(long = "dump-dml")]
    pub dump_dml: bool,
}

fn parse_err(flag: &str, msg: impl std::fmt::Display) -> AppError {
    AppError::Usage(format!("--{flag}: {msg}"))
}

impl RunArgs {
    /// The flags that were given, as config keys.
    pub fn to_table(&self, cmd: Command) -> Result<Table> {
        let mut t = Table::new();
        let path = |p: &Path| Value::String(p.to_string_lossy().into_owned());
        if let Some(p) = &self.data {
            t.insert("data".into(), path(p));
        }
        if let Some(p) = &self.schema {
            t.insert("schema".into(), path(p));
        }
        if let Some(p) = &self.out {
            t.insert("out".into(), path(p));
        }
        if let Some(s) = &self.sizes {
            let v = config::parse_list::<usize>(s).map_err(|e| parse_err("sizes", e))?;
            t.insert("sizes".into(), Value::Array(v.into_iter().map(|x| Value::Integer(x as i64)).collect()));
        }
        if let Some(s) = &self.seeds {
            let v = config::parse_seeds(cmd, s).map_err(|e| parse_err("seeds", e))?;
            let v = v
                .into_iter()
                .map(|x| i64::try_from(x).map(Value::Integer).map_err(|_| parse_err("seeds", "seed too large")))
                .collect::<Result<Vec<_>>>()?;
            t.insert("seeds".into(), Value::Array(v));
        }
        if let Some(s) = &self.method {
            let v = config::parse_list::<Method>(s).map_err(|e| parse_err("method", e))?;
            t.insert("method".into(), Value::Array(v.into_iter().map(|m| Value::String(m.tag().into())).collect()));
        }
        if let Some(s) = &self.batch_size {
            let b = BatchSize::parse(s).map_err(|e| parse_err("batch-size", e))?;
            t.insert("batch_size".into(), Value::try_from(b).map_err(|e| parse_err("batch-size", e))?);
        }
        let int = |v: usize| Value::Integer(v as i64);
        for (key, v) in [("cycles", self.cycles), ("k", self.k), ("unlabeled", self.unlabeled)] {
            if let Some(v) = v {
                t.insert(key.into(), int(v));
            }
        }
        for (key, v) in [("lr", self.lr), ("tau", self.tau), ("alpha", self.alpha), ("margin", self.margin)] {
            if let Some(v) = v {
                t.insert(key.into(), Value::Float(v));
            }
        }
        for (key, v) in [("rll_neg_weight", &self.rll_neg_weight), ("epoch_semantics", &self.epoch_semantics)] {
            if let Some(v) = v {
                t.insert(key.into(), Value::String(v.clone()));
            }
        }
        for (key, on) in [
            ("ablation", self.ablation),
            ("signed_selection", self.signed_selection),
            ("dump_dml", self.dump_dml),
        ] {
            if on {
                t.insert(key.into(), Value::Boolean(true));
            }
        }
        Ok(t)
    }

    pub fn resolve(&self, cmd: Command) -> Result<RunConfig> {
        let file = self.config.as_deref().map(RunConfig::load_file).transpose()?;
        RunConfig::resolve(cmd, file.as_ref(), &self.to_table(cmd)?)
    }
}

/// A dataset ready for experiments, with its default unlabeled count.
#[derive(Debug)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub norm_fit: NormFit,
    pub unlabeled: usize,
    pub raw_rows: usize,
}

pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

fn csv_path(cfg: &RunConfig, schema: &Schema) -> Result<PathBuf> {
    let p = match &cfg.data {
        Some(p) => p.clone(),
        None => schema.data_file(&default_data_dir())?,
    };
    if !p.exists() {
        return Err(AppError::DatasetNotFound(format!("{} (schema '{}')", p.display(), schema.name)));
    }
    Ok(p)
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    let is_prepared = cfg
        .data
        .as_deref()
        .is_some_and(|p| p.extension().is_some_and(|e| e == "json"));
    if is_prepared {
        if cfg.norm_fit == NormFit::Train {
            return Err(AppError::Usage(
                "norm_fit = \"train\" needs the raw CSV and schema, not a prepared dataset".into(),
            ));
        }
        let p = PreparedDataset::load(cfg.data.as_deref().expect("checked above"))?;
        return Ok(LoadedData {
            dataset: p.dataset,
            norm_fit: NormFit::Prenormalized,
            unlabeled: cfg.unlabeled.unwrap_or(p.unlabeled),
            raw_rows: p.raw_rows,
        });
    }
    let Some(schema_path) = &cfg.schema else {
        return Err(AppError::Usage("--schema is required unless --data is a prepared .json dataset".into()));
    };
    let schema = Schema::load(schema_path)?;
    let (dataset, raw_rows) = dataio::load_clean(&csv_path(cfg, &schema)?, &schema)?;
    Ok(LoadedData {
        dataset,
        norm_fit: cfg.norm_fit,
        unlabeled: cfg.unlabeled.unwrap_or(schema.unlabeled),
        raw_rows,
    })
}

fn echo(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let text = cfg.to_toml()?;
    writeln!(out, "# resolved configuration\n{text}").map_err(|e| AppError::Runtime(e.to_string()))
}

pub fn cmd_prepare(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.resolve(Command::Prepare)?;
    echo(&cfg, out)?;
    let Some(schema_path) = &cfg.schema else {
        return Err(AppError::Usage("prepare needs --schema".into()));
    };
    let schema = Schema::load(schema_path)?;
    let prepared = PreparedDataset::build(&csv_path(&cfg, &schema)?, &schema)?;
    let base = cfg.out.join(&schema.name);
    formats::write_json(&base.with_extension("prepared.json"), &prepared)?;
    formats::write_json(&base.with_extension("norm.json"), &prepared.norm)?;
    let constant = prepared.norm.constant_features().len();
    writeln!(
        out,
        "{}: {} raw rows, {} after cleaning, {} features ({} constant)",
        prepared.name,
        prepared.raw_rows,
        prepared.rows,
        prepared.dataset.n_features(),
        constant
    )
    .map_err(|e| AppError::Runtime(e.to_string()))
}

pub fn cmd_train(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.resolve(Command::Train)?;
    echo(&cfg, out)?;
    let data = load_data(&cfg)?;
    let exp = cfg.experiment_config(data.unlabeled, data.norm_fit);
    let (size, seed, method) = (cfg.sizes[0], cfg.seeds[0], cfg.method[0]);
    bench::check_experiment(&data.dataset, size, method, &exp)?;

    let state_path = cfg.out.join("state.json");
    let resume = if args.resume {
        Some(formats::load_trainer(&state_path)?)
    } else {
        None
    };
    let hooks = RunHooks {
        dump_dml: cfg.dump_dml,
        state_path: (method != Method::KnnRaw).then_some(state_path.as_path()),
        resume,
    };
    let outcome = bench::run_experiment_with(&data.dataset, size, seed, method, &exp, hooks)?;
    formats::save_split(&cfg.out.join("split.json"), &outcome.split)?;
    if let Some(m) = outcome.model() {
        formats::save_model(&cfg.out.join("checkpoint.json"), m)?;
    }
    if cfg.dump_dml {
        formats::write_json(&cfg.out.join("dml_dump.json"), &outcome.dml_dump)?;
    }
    formats::write_json(&cfg.out.join("report.json"), &outcome.report)?;
    writeln!(
        out,
        "{} {} |S|={} seed={}: test MAE {:.4} over {} samples ({} rows after cleaning, {} raw)",
        data.dataset.name, method, size, seed, outcome.report.mae, outcome.report.n_test, data.dataset.n_samples(), data.raw_rows
    )
    .map_err(|e| AppError::Runtime(e.to_string()))
}

pub fn cmd_bench(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.resolve(Command::Bench)?;
    echo(&cfg, out)?;
    let data = load_data(&cfg)?;
    let exp = cfg.experiment_config(data.unlabeled, data.norm_fit);
    let reference = match &cfg.reference {
        Some(p) => Some(ReferenceValues::load(p)?),
        None => None,
    };
    let spec = TableSpec {
        sizes: &cfg.sizes,
        seeds: &cfg.seeds,
        methods: &cfg.method,
        config: &exp,
        reference: reference.as_ref(),
        out: Some(&cfg.out),
    };
    let table = bench::run_table(&data.dataset, &spec)?;
    table.write(&cfg.out)?;
    write!(out, "{}", table.to_csv()).map_err(|e| AppError::Runtime(e.to_string()))?;
    for w in &table.warnings {
        writeln!(out, "warning: {w}").map_err(|e| AppError::Runtime(e.to_string()))?;
    }
    match table.failed_cells() {
        0 => Ok(()),
        n => {
            let first = table
                .rows
                .iter()
                .flat_map(|r| &r.cells)
                .flat_map(|c| &c.per_seed)
                .find_map(|s| s.error.clone())
                .unwrap_or_default();
            Err(AppError::Runtime(format!("{n} table cell(s) failed; first error: {first}")))
        }
    }
}

/// Parses `argv` and runs the subcommand, returning the process exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Sub::Prepare(a) => cmd_prepare(a, out),
        Sub::Train(a) => cmd_train(a, out),
        Sub::Bench(a) => cmd_bench(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_become_config_keys() {
        let a = RunArgs {
            sizes: Some("10,20".into()),
            seeds: Some("3".into()),
            batch_size: Some("full".into()),
            rll_neg_weight: Some("paper".into()),
            ablation: true,
            lr: Some(0.01),
            ..RunArgs::default()
        };
        let t = a.to_table(Command::Bench).unwrap();
        assert_eq!(t["seeds"].as_array().unwrap().len(), 3);
        assert_eq!(t["batch_size"].as_str(), Some("full"));
        assert_eq!(t["ablation"].as_bool(), Some(true));
        assert!(!t.contains_key("signed_selection"));
        let c = RunConfig::resolve(Command::Bench, None, &t).unwrap();
        assert_eq!(c.sizes, vec![10, 20, 100]);
    }

    #[test]
    fn bad_flag_values_exit_2() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(["dml-s2r", "bench", "--sizes", "ten"], &mut out, &mut err);
        assert_eq!(code, 2);
        let code = run(["dml-s2r", "train", "--rll-neg-weight", "both"], &mut out, &mut err);
        assert_eq!(code, 2);
        let code = run(["dml-s2r", "bench", "--seeds", "0"], &mut out, &mut err);
        assert_eq!(code, 2);
        assert!(String::from_utf8_lossy(&err).contains("seed"));
    }

    #[test]
    fn missing_schema_is_usage_error() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["dml-s2r", "train"], &mut out, &mut err), 2);
        assert!(String::from_utf8_lossy(&out).starts_with("# resolved configuration"));
    }
}
