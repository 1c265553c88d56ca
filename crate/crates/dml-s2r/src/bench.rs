//! Experiment runner: one run per (method, |S|, seed), aggregated into tables.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use dml_s2r_core::data::{apply_minmax, fit_minmax, fit_minmax_rows, make_split};
use dml_s2r_core::dml::DmlEpochStats;
use dml_s2r_core::metrics::{knn_regress, mae, median};
use dml_s2r_core::trainer::{predict_batch, TrainMode, TrainObserver};
use dml_s2r_core::{Dataset, ExperimentSplit, SiameseModel, TrainConfig, TrainHistory, Trainer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::formats;

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dml-s2r")]
    DmlS2r,
    #[serde(rename = "step1-only")]
    Step1Only,
    #[serde(rename = "knn-raw")]
    KnnRaw,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DmlS2r, Method::Step1Only, Method::KnnRaw];

    pub fn tag(self) -> &'static str {
        match self {
            Method::DmlS2r => "dml-s2r",
            Method::Step1Only => "step1-only",
            Method::KnnRaw => "knn-raw",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected dml-s2r, step1-only or knn-raw)"))
    }
}

/// Where min-max parameters come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormFit {
    /// Features were normalized when the dataset was prepared.
    Prenormalized,
    /// Fit on every sample of the dataset.
    #[default]
    All,
    /// Fit on the labeled and unlabeled rows of each split only.
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub n_unlabeled: usize,
    /// Neighbour count of the knn-raw baseline.
    pub knn_k: usize,
    pub norm_fit: NormFit,
    /// Fill per-unit wall-clock times in the history (makes reports
    /// run-dependent).
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(train: TrainConfig, n_unlabeled: usize) -> Self {
        ExperimentConfig {
            train,
            n_unlabeled,
            knn_k: 3,
            norm_fit: NormFit::All,
            record_timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub package: String,
    pub report_format: u32,
    pub checkpoint_format: u32,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            package: env!("CARGO_PKG_VERSION").to_string(),
            report_format: REPORT_VERSION,
            checkpoint_format: formats::CHECKPOINT_VERSION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    /// Rows after cleaning, before splitting.
    pub dataset_rows: usize,
    pub method: Method,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub mae: f64,
    pub per_seed_mae: Vec<f64>,
    pub history: Option<TrainHistory>,
    pub config: ExperimentConfig,
    pub versions: Versions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmlEpochDump {
    pub unit: usize,
    #[serde(flatten)]
    pub stats: DmlEpochStats,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub split: ExperimentSplit,
    /// The trained state; `None` for knn-raw.
    pub trainer: Option<Trainer>,
    pub dml_dump: Vec<DmlEpochDump>,
}

impl RunOutcome {
    pub fn model(&self) -> Option<&SiameseModel> {
        self.trainer.as_ref().map(Trainer::model)
    }
}

struct RunObserver {
    start: Instant,
    timing: bool,
    dump: Option<Vec<DmlEpochDump>>,
}

impl TrainObserver for RunObserver {
    fn on_dml_epoch(&mut self, unit: usize, stats: &DmlEpochStats) {
        if let Some(d) = &mut self.dump {
            d.push(DmlEpochDump {
                unit,
                stats: stats.clone(),
            });
        }
    }

    fn now(&mut self) -> f64 {
        if self.timing {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}

fn normalized(d: &Dataset, split: &ExperimentSplit, fit: NormFit) -> Result<Dataset> {
    Ok(match fit {
        NormFit::Prenormalized => d.clone(),
        NormFit::All => apply_minmax(d, &fit_minmax(d)?)?,
        NormFit::Train => {
            let rows: Vec<usize> = split.labeled_idx.iter().chain(&split.unlabeled_idx).copied().collect();
            apply_minmax(d, &fit_minmax_rows(d, &rows)?)?
        }
    })
}

fn mode_for(method: Method) -> TrainMode {
    match method {
        Method::Step1Only => TrainMode::PsmOnly,
        _ => TrainMode::Full,
    }
}

/// Checks everything that can be rejected before training starts.
pub fn check_experiment(d: &Dataset, n_labeled: usize, method: Method, cfg: &ExperimentConfig) -> Result<()> {
    cfg.train.validate()?;
    cfg.train.rll.validate()?;
    if n_labeled < 2 && method != Method::KnnRaw {
        return Err(AppError::Usage(format!("|S| = {n_labeled}: pair training needs at least 2 labeled samples")));
    }
    if cfg.knn_k == 0 {
        return Err(AppError::Usage("knn_k must be >= 1".into()));
    }
    if method == Method::DmlS2r {
        cfg.train.rll.check_unlabeled(cfg.n_unlabeled)?;
    }
    if n_labeled + cfg.n_unlabeled > d.n_samples() || n_labeled >= cfg.n_unlabeled {
        make_split(d, n_labeled, cfg.n_unlabeled, 0)?;
    }
    Ok(())
}

/// Optional extras for a single run.
#[derive(Debug, Default)]
pub struct RunHooks<'a> {
    /// Collect per-epoch selection and weight diagnostics.
    pub dump_dml: bool,
    /// Trainer state is written here after every unit.
    pub state_path: Option<&'a Path>,
    /// Continue from a saved trainer instead of a fresh one.
    pub resume: Option<Trainer>,
}

/// Splits, trains (or fits the baseline) and scores the full test partition.
pub fn run_experiment(
    d: &Dataset,
    n_labeled: usize,
    seed: u64,
    method: Method,
    cfg: &ExperimentConfig,
    dump_dml: bool,
) -> Result<RunOutcome> {
    let hooks = RunHooks {
        dump_dml,
        ..RunHooks::default()
    };
    run_experiment_with(d, n_labeled, seed, method, cfg, hooks)
}

pub fn run_experiment_with(
    d: &Dataset,
    n_labeled: usize,
    seed: u64,
    method: Method,
    cfg: &ExperimentConfig,
    hooks: RunHooks<'_>,
) -> Result<RunOutcome> {
    check_experiment(d, n_labeled, method, cfg)?;
    let split = make_split(d, n_labeled, cfg.n_unlabeled, seed)?;
    let data = split.materialize(&normalized(d, &split, cfg.norm_fit)?)?;
    let mut observer = RunObserver {
        start: Instant::now(),
        timing: cfg.record_timing,
        dump: hooks.dump_dml.then(Vec::new),
    };
    let (predictions, trainer) = match method {
        Method::KnnRaw => (
            knn_regress(&data.labeled.features, &data.labeled.targets, &data.test.features, cfg.knn_k)?,
            None,
        ),
        Method::DmlS2r | Method::Step1Only => {
            let mut tc = cfg.train.clone();
            tc.seed = seed;
            tc.mode = mode_for(method);
            let mut t = match hooks.resume {
                Some(t) if t.config() != &tc || t.model().input_dim() != d.n_features() => {
                    return Err(AppError::Usage(
                        "saved trainer state was produced with a different configuration or dataset".into(),
                    ));
                }
                Some(t) => t,
                None => Trainer::new(tc, d.n_features())?,
            };
            while !t.is_finished() {
                t.run_units(data.training(), 1, &mut observer)?;
                if let Some(p) = hooks.state_path {
                    formats::save_trainer(p, &t)?;
                }
            }
            let p = predict_batch(t.model(), &data.test.features, &data.labeled.features, &data.labeled.targets)?;
            (p, Some(t))
        }
    };
    let err = mae(&predictions, &data.test.targets)?;
    let mut config = cfg.clone();
    config.train.seed = seed;
    config.train.mode = mode_for(method);
    let report = RunReport {
        dataset: d.name.clone(),
        dataset_rows: d.n_samples(),
        method,
        n_labeled,
        n_unlabeled: cfg.n_unlabeled,
        n_test: split.test_idx.len(),
        seeds: vec![seed],
        mae: err,
        per_seed_mae: vec![err],
        history: trainer.as_ref().map(|t| t.history().clone()),
        config,
        versions: Versions::current(),
    };
    Ok(RunOutcome {
        report,
        split,
        trainer,
        dml_dump: observer.dump.unwrap_or_default(),
    })
}

/// `reports/<dataset>/<method>/<|S|>/<seed>.json` under `out`.
pub fn report_path(out: &Path, dataset: &str, method: Method, n_labeled: usize, seed: u64) -> PathBuf {
    out.join("reports")
        .join(dataset)
        .join(method.tag())
        .join(n_labeled.to_string())
        .join(format!("{seed}.json"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub mae: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub size: usize,
    /// Median over the seeds that succeeded; `None` if any seed failed.
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub per_seed: Vec<SeedResult>,
}

impl Cell {
    fn from_results(size: usize, per_seed: Vec<SeedResult>) -> Self {
        let vals: Vec<f64> = per_seed.iter().filter_map(|r| r.mae).collect();
        let complete = vals.len() == per_seed.len() && !vals.is_empty();
        let pick = |f: fn(f64, f64) -> f64| vals.iter().copied().reduce(f).filter(|_| complete);
        Cell {
            size,
            median: if complete { median(&vals).ok() } else { None },
            min: pick(f64::min),
            max: pick(f64::max),
            per_seed,
        }
    }

    pub fn failed(&self) -> bool {
        self.per_seed.iter().any(|r| r.error.is_some())
    }

    /// Half the min-max range.
    pub fn spread(&self) -> Option<f64> {
        Some((self.max? - self.min?) / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: Method,
    pub cells: Vec<Cell>,
}

impl TableRow {
    pub fn medians(&self) -> Vec<Option<f64>> {
        self.cells.iter().map(|c| c.median).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub method: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub dataset: String,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub rows: Vec<TableRow>,
    pub reference: Vec<ReferenceRow>,
    pub warnings: Vec<String>,
}

impl Table {
    pub fn row(&self, method: Method) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn failed_cells(&self) -> usize {
        self.rows.iter().flat_map(|r| &r.cells).filter(|c| c.failed()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,source");
        for s in &self.sizes {
            out.push_str(&format!(",median_{s},spread_{s}"));
        }
        out.push('\n');
        let num = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!("{},measured", r.method));
            for c in &r.cells {
                out.push_str(&format!(",{},{}", num(c.median), num(c.spread())));
            }
            out.push('\n');
        }
        for r in &self.reference {
            out.push_str(&format!("{},reference", r.method));
            for v in &r.values {
                out.push_str(&format!(",{},", num(*v)));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        formats::write_json(&out.join("table.json"), self)?;
        let p = out.join("table.csv");
        std::fs::write(&p, self.to_csv()).map_err(|e| AppError::io(p, e))
    }
}

/// Positions `i` where `medians[i + 1] > medians[i]`; missing cells are skipped.
pub fn inversions(medians: &[Option<f64>]) -> Vec<usize> {
    medians
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| match (w[0], w[1]) {
            (Some(a), Some(b)) if b > a => Some(i),
            _ => None,
        })
        .collect()
}

/// Reference values, keyed by dataset, method and |S|.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub format_version: u32,
    #[serde(default)]
    pub entry: Vec<ReferenceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub dataset: String,
    pub method: String,
    pub sizes: Vec<usize>,
    pub mae: Vec<f64>,
}

impl ReferenceValues {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let r: ReferenceValues = toml::from_str(&text).map_err(|e| AppError::parse(path, e))?;
        if let Some(e) = r.entry.iter().find(|e| e.sizes.len() != e.mae.len()) {
            return Err(AppError::parse(path, format!("{}/{}: sizes and mae differ in length", e.dataset, e.method)));
        }
        Ok(r)
    }

    pub fn lookup(&self, dataset: &str, method: &str, size: usize) -> Option<f64> {
        self.entry
            .iter()
            .filter(|e| e.dataset == dataset && e.method == method)
            .find_map(|e| e.sizes.iter().position(|&s| s == size).map(|i| e.mae[i]))
    }

    pub fn rows(&self, dataset: &str, sizes: &[usize]) -> Vec<ReferenceRow> {
        let mut methods: Vec<&str> = self
            .entry
            .iter()
            .filter(|e| e.dataset == dataset)
            .map(|e| e.method.as_str())
            .collect();
        methods.dedup();
        methods
            .into_iter()
            .map(|m| ReferenceRow {
                method: m.to_string(),
                values: sizes.iter().map(|&s| self.lookup(dataset, m, s)).collect(),
            })
            .collect()
    }
}

pub struct TableSpec<'a> {
    pub sizes: &'a [usize],
    pub seeds: &'a [u64],
    pub methods: &'a [Method],
    pub config: &'a ExperimentConfig,
    pub reference: Option<&'a ReferenceValues>,
    /// Directory for per-run reports; nothing is written when `None`.
    pub out: Option<&'a Path>,
}

/// Runs every (method, size, seed) combination in parallel and aggregates
/// medians. Per-run failures are recorded in their cell.
pub fn run_table(d: &Dataset, spec: &TableSpec<'_>) -> Result<Table> {
    if spec.seeds.is_empty() {
        return Err(AppError::Usage("at least one seed is required".into()));
    }
    if spec.sizes.is_empty() || spec.methods.is_empty() {
        return Err(AppError::Usage("at least one size and one method are required".into()));
    }
    let jobs: Vec<(Method, usize, u64)> = spec
        .methods
        .iter()
        .flat_map(|&m| spec.sizes.iter().flat_map(move |&s| spec.seeds.iter().map(move |&seed| (m, s, seed))))
        .collect();
    let results: Vec<SeedResult> = jobs
        .par_iter()
        .map(|&(method, size, seed)| {
            let r = run_experiment(d, size, seed, method, spec.config, false).and_then(|o| {
                if let Some(out) = spec.out {
                    formats::write_json(&report_path(out, &d.name, method, size, seed), &o.report)?;
                }
                Ok(o.report.mae)
            });
            match r {
                Ok(mae) => SeedResult {
                    seed,
                    mae: Some(mae),
                    error: None,
                },
                Err(e) => SeedResult {
                    seed,
                    mae: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut it = results.into_iter();
    let rows: Vec<TableRow> = spec
        .methods
        .iter()
        .map(|&method| TableRow {
            method,
            cells: spec
                .sizes
                .iter()
                .map(|&size| Cell::from_results(size, it.by_ref().take(spec.seeds.len()).collect()))
                .collect(),
        })
        .collect();
    let mut warnings = Vec::new();
    for r in rows.iter().filter(|r| r.method != Method::KnnRaw) {
        for i in inversions(&r.medians()) {
            warnings.push(format!(
                "{}: median MAE rises from |S| = {} to |S| = {}",
                r.method,
                spec.sizes[i],
                spec.sizes[i + 1]
            ));
        }
    }
    Ok(Table {
        dataset: d.name.clone(),
        sizes: spec.sizes.to_vec(),
        seeds: spec.seeds.to_vec(),
        rows,
        reference: spec.reference.map(|r| r.rows(&d.name, spec.sizes)).unwrap_or_default(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dml_s2r_core::Matrix;

    fn toy(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n * 3).map(|i| ((i * 7919 + 13) % 1009) as f64 / 100.9).collect();
        let y: Vec<f64> = x.chunks(3).map(|r| 2.0 * r[0] - r[1] + 0.5 * r[2]).collect();
        Dataset::new("toy", Matrix::from_vec(n, 3, x).unwrap(), y, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    fn small_cfg() -> ExperimentConfig {
        let train = TrainConfig {
            cycles: 3,
            hidden: vec![8, 8],
            ..TrainConfig::default()
        };
        ExperimentConfig::new(train, 20)
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.tag()));
        }
        assert!("coreg".parse::<Method>().is_err());
    }

    #[test]
    fn experiment_report_fields() {
        let d = toy(60);
        let o = run_experiment(&d, 5, 1, Method::DmlS2r, &small_cfg(), true).unwrap();
        assert_eq!(o.report.n_test, 35);
        assert_eq!(o.report.per_seed_mae, vec![o.report.mae]);
        assert!(o.report.mae >= 0.0);
        assert_eq!(o.report.history.as_ref().unwrap().len(), 3);
        assert_eq!(o.dml_dump.len(), 3);
        assert_eq!(o.report.config.train.seed, 1);
        assert!(o.report.history.unwrap().cycle_seconds.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn experiment_is_reproducible() {
        let d = toy(60);
        let a = run_experiment(&d, 5, 9, Method::Step1Only, &small_cfg(), false).unwrap();
        let b = run_experiment(&d, 5, 9, Method::Step1Only, &small_cfg(), false).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.model(), b.model());
        assert!(a.report.history.unwrap().rll_loss.iter().all(Option::is_none));
    }

    #[test]
    fn resumed_run_matches_uninterrupted_run() {
        let d = toy(60);
        let cfg = small_cfg();
        let full = run_experiment(&d, 5, 4, Method::DmlS2r, &cfg, false).unwrap();

        let split = make_split(&d, 5, 20, 4).unwrap();
        let data = split.materialize(&normalized(&d, &split, NormFit::All).unwrap()).unwrap();
        let mut tc = cfg.train.clone();
        tc.seed = 4;
        let mut partial = Trainer::new(tc, 3).unwrap();
        partial.run_units(data.training(), 1, &mut ()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let state = dir.path().join("state.json");
        formats::save_trainer(&state, &partial).unwrap();
        let hooks = RunHooks {
            resume: Some(formats::load_trainer(&state).unwrap()),
            state_path: Some(&state),
            ..RunHooks::default()
        };
        let resumed = run_experiment_with(&d, 5, 4, Method::DmlS2r, &cfg, hooks).unwrap();
        assert_eq!(resumed.report, full.report);
        assert_eq!(resumed.model(), full.model());
        assert_eq!(&formats::load_trainer(&state).unwrap(), full.trainer.as_ref().unwrap());

        let mut other = cfg.clone();
        other.train.cycles = 4;
        let hooks = RunHooks {
            resume: Some(partial),
            ..RunHooks::default()
        };
        assert_eq!(run_experiment_with(&d, 5, 4, Method::DmlS2r, &other, hooks).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn knn_k1_on_duplicated_labeled_point_is_exact() {
        let mut d = toy(60);
        let split = make_split(&d, 5, 20, 3).unwrap();
        // make one test row a copy of a labeled row
        let (src, dst) = (split.labeled_idx[0], split.test_idx[0]);
        let row = d.features.row(src).to_vec();
        d.features.row_mut(dst).copy_from_slice(&row);
        d.targets[dst] = d.targets[src];
        let mut cfg = small_cfg();
        cfg.knn_k = 1;
        let data = split.materialize(&normalized(&d, &split, NormFit::All).unwrap()).unwrap();
        let p = knn_regress(&data.labeled.features, &data.labeled.targets, &data.test.features, 1).unwrap();
        assert_eq!(p[0], data.test.targets[0]);
    }

    #[test]
    fn precondition_failures_are_usage_errors() {
        let d = toy(60);
        let mut cfg = small_cfg();
        cfg.train.rll.k = 11;
        let e = run_experiment(&d, 5, 0, Method::DmlS2r, &cfg, false).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("M >= 2k"), "{e}");
        // the ablation never selects sets, so the same k is fine there
        assert!(run_experiment(&d, 5, 0, Method::Step1Only, &cfg, false).is_ok());
        let e = run_experiment(&d, 50, 0, Method::KnnRaw, &small_cfg(), false).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn single_cell_table_equals_the_run() {
        let d = toy(60);
        let cfg = small_cfg();
        let spec = TableSpec {
            sizes: &[5],
            seeds: &[2],
            methods: &[Method::DmlS2r],
            config: &cfg,
            reference: None,
            out: None,
        };
        let t = run_table(&d, &spec).unwrap();
        let run = run_experiment(&d, 5, 2, Method::DmlS2r, &cfg, false).unwrap();
        assert_eq!(t.rows[0].cells[0].median, Some(run.report.mae));
        assert_eq!(t.rows[0].cells[0].spread(), Some(0.0));
    }

    #[test]
    fn medians_ignore_seed_order() {
        let d = toy(60);
        let cfg = small_cfg();
        let table = |seeds: &[u64]| {
            let spec = TableSpec {
                sizes: &[4, 6],
                seeds,
                methods: &[Method::KnnRaw, Method::Step1Only],
                config: &cfg,
                reference: None,
                out: None,
            };
            run_table(&d, &spec).unwrap()
        };
        let a = table(&[0, 1, 2, 3, 4]);
        let b = table(&[4, 2, 0, 3, 1]);
        for m in [Method::KnnRaw, Method::Step1Only] {
            assert_eq!(a.row(m).unwrap().medians(), b.row(m).unwrap().medians());
        }
    }

    #[test]
    fn failed_cells_are_recorded() {
        let d = toy(60);
        let cfg = small_cfg();
        let spec = TableSpec {
            sizes: &[5, 45],
            seeds: &[0, 1],
            methods: &[Method::KnnRaw],
            config: &cfg,
            reference: None,
            out: None,
        };
        let t = run_table(&d, &spec).unwrap();
        assert_eq!(t.failed_cells(), 1);
        assert!(t.rows[0].cells[0].median.is_some());
        assert!(t.rows[0].cells[1].median.is_none());
        assert!(t.to_csv().starts_with("method,source,median_5,spread_5,median_45,spread_45\n"));
    }

    #[test]
    fn zero_seeds_rejected() {
        let d = toy(60);
        let cfg = small_cfg();
        let spec = TableSpec {
            sizes: &[5],
            seeds: &[],
            methods: &[Method::KnnRaw],
            config: &cfg,
            reference: None,
            out: None,
        };
        assert_eq!(run_table(&d, &spec).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn inversion_detection() {
        assert!(inversions(&[Some(3.0), Some(2.0), Some(1.0)]).is_empty());
        assert_eq!(inversions(&[Some(3.0), Some(4.0), Some(1.0)]), vec![0]);
        assert_eq!(inversions(&[Some(1.0), None, Some(2.0)]), Vec::<usize>::new());
    }

    #[test]
    fn reference_lookup() {
        let text = "format_version = 1\n[[entry]]\ndataset = \"d\"\nmethod = \"dml-s2r\"\nsizes = [10, 50]\nmae = [6.0, 4.0]\n";
        let r: ReferenceValues = toml::from_str(text).unwrap();
        assert_eq!(r.lookup("d", "dml-s2r", 50), Some(4.0));
        assert_eq!(r.lookup("d", "dml-s2r", 20), None);
        let rows = r.rows("d", &[10, 20]);
        assert_eq!(rows[0].values, vec![Some(6.0), None]);
    }
}
