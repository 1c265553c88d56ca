//! Alternating training and symmetrized prediction.
//!
//! A training unit is normally one cycle: one epoch of pairwise difference
//! regression followed by one epoch of ranked-list metric learning, both on
//! the same model and (by default) the same Adam state. All randomness derives
//! from the master seed and the unit index, so a [`Trainer`] restored from its
//! serialized form continues exactly where it stopped.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::dml::{self, DmlEpochStats, RllConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::psm::{self, PairBatch};
use crate::seed;
use crate::siamese::{DifferenceModel, SiameseModel, DEFAULT_HIDDEN};

/// What the configured epoch budget counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochSemantics {
    /// Each unit is a full cycle (difference epoch + metric epoch).
    #[default]
    Cycles,
    /// Each unit is a single epoch; units alternate, difference step first.
    Total,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Both steps, alternating.
    #[default]
    Full,
    /// Difference regression only (the ablation baseline).
    PsmOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerSharing {
    #[default]
    Shared,
    PerStep,
}

/// Stop once every tracked loss has changed by less than `rel_tol`
/// (relative) over each of the last `window` units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub window: usize,
    pub rel_tol: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Plateau {
            window: 5,
            rel_tol: 1e-4,
        }
    }
}

fn default_batch_size() -> Option<usize> {
    Some(64)
}

fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub cycles: usize,
    /// Pair mini-batch size; `None` means full batch.
    #[serde(default = "default_batch_size")]
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub rll: RllConfig,
    pub seed: u64,
    #[serde(default)]
    pub plateau: Option<Plateau>,
    #[serde(default)]
    pub epoch_semantics: EpochSemantics,
    #[serde(default)]
    pub optimizer: OptimizerSharing,
    #[serde(default)]
    pub mode: TrainMode,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            cycles: 30,
            batch_size: default_batch_size(),
            learning_rate: 1e-3,
            rll: RllConfig::default(),
            seed: 0,
            plateau: None,
            epoch_semantics: EpochSemantics::Cycles,
            optimizer: OptimizerSharing::Shared,
            mode: TrainMode::Full,
            hidden: default_hidden(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::InvalidConfig("cycles must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer sizes must be non-empty and positive".into()));
        }
        if let Some(p) = self.plateau {
            if p.window == 0 || !(p.rel_tol > 0.0) {
                return Err(Error::InvalidConfig("plateau needs window >= 1 and rel_tol > 0".into()));
            }
        }
        self.rll.validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.learning_rate)
    }
}

/// One entry per completed unit. A loss is `None` when its step did not run
/// in that unit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub psm_loss: Vec<Option<f64>>,
    pub rll_loss: Vec<Option<f64>>,
    /// Wall-clock seconds per unit as reported by the observer's clock.
    pub cycle_seconds: Vec<f64>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.psm_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psm_loss.is_empty()
    }

    fn plateaued(series: &[Option<f64>], p: &Plateau) -> bool {
        let vals: Vec<f64> = series.iter().flatten().copied().collect();
        if vals.len() < p.window + 1 {
            return false;
        }
        vals[vals.len() - p.window - 1..].windows(2).all(|w| {
            let denom = w[0].abs().max(f64::MIN_POSITIVE);
            (w[1] - w[0]).abs() / denom < p.rel_tol
        })
    }
}

/// Hooks into the training loop. Both methods have no-op defaults.
pub trait TrainObserver {
    fn on_dml_epoch(&mut self, _unit: usize, _stats: &DmlEpochStats) {}

    /// Seconds on some monotonic clock; used only for timing history.
    fn now(&mut self) -> f64 {
        0.0
    }
}

impl TrainObserver for () {}

/// Views into one experiment's data. Rows of `labeled_x` pair with `labeled_y`.
#[derive(Clone, Copy, Debug)]
pub struct TrainingData<'a> {
    pub labeled_x: &'a Matrix,
    pub labeled_y: &'a [f64],
    pub unlabeled_x: &'a Matrix,
}

impl TrainingData<'_> {
    fn validate(&self, cfg: &TrainConfig) -> Result<()> {
        if self.labeled_x.rows() != self.labeled_y.len() {
            return Err(Error::shape("labeled targets", self.labeled_x.rows(), self.labeled_y.len()));
        }
        if self.unlabeled_x.cols() != self.labeled_x.cols() && self.unlabeled_x.rows() > 0 {
            return Err(Error::shape("unlabeled width", self.labeled_x.cols(), self.unlabeled_x.cols()));
        }
        if cfg.mode == TrainMode::Full {
            cfg.rll.check_unlabeled(self.unlabeled_x.rows())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizers {
    Shared(AdamState),
    PerStep { psm: AdamState, dml: AdamState },
}

impl Optimizers {
    fn psm(&mut self) -> &mut AdamState {
        match self {
            Optimizers::Shared(s) => s,
            Optimizers::PerStep { psm, .. } => psm,
        }
    }

    fn dml(&mut self) -> &mut AdamState {
        match self {
            Optimizers::Shared(s) => s,
            Optimizers::PerStep { dml, .. } => dml,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    Psm,
    Dml,
}

/// Resumable training state: model, optimizer(s), units completed and history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    config: TrainConfig,
    model: SiameseModel,
    optimizers: Optimizers,
    completed: usize,
    history: TrainHistory,
}

impl Trainer {
    pub fn new(config: TrainConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let model = SiameseModel::init(input_dim, &config.hidden, seed::derive_seed(config.seed, 0))?;
        let adam = config.adam();
        let optimizers = match config.optimizer {
            OptimizerSharing::Shared => Optimizers::Shared(AdamState::for_params(&model, adam)),
            OptimizerSharing::PerStep => Optimizers::PerStep {
                psm: AdamState::for_params(&model, adam),
                dml: AdamState::for_params(&model, adam),
            },
        };
        Ok(Trainer {
            config,
            model,
            optimizers,
            completed: 0,
            history: TrainHistory::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &SiameseModel {
        &self.model
    }

    pub fn optimizers(&self) -> &Optimizers {
        &self.optimizers
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    /// Units completed so far; also the cursor of the per-unit seed streams.
    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn into_parts(self) -> (SiameseModel, TrainHistory) {
        (self.model, self.history)
    }

    /// True once the unit budget is spent or the plateau criterion fired.
    pub fn is_finished(&self) -> bool {
        self.completed >= self.config.cycles || self.plateaued()
    }

    fn plateaued(&self) -> bool {
        let Some(p) = self.config.plateau else {
            return false;
        };
        let psm_done = TrainHistory::plateaued(&self.history.psm_loss, &p);
        match self.config.mode {
            TrainMode::PsmOnly => psm_done,
            TrainMode::Full => psm_done && TrainHistory::plateaued(&self.history.rll_loss, &p),
        }
    }

    fn steps_for_unit(&self, unit: usize) -> &'static [Step] {
        match (self.config.mode, self.config.epoch_semantics) {
            (TrainMode::PsmOnly, _) => &[Step::Psm],
            (TrainMode::Full, EpochSemantics::Cycles) => &[Step::Psm, Step::Dml],
            (TrainMode::Full, EpochSemantics::Total) => {
                if unit % 2 == 0 {
                    &[Step::Psm]
                } else {
                    &[Step::Dml]
                }
            }
        }
    }

    /// Runs at most `units` more units, stopping early if [`Self::is_finished`].
    pub fn run_units(&mut self, data: TrainingData<'_>, units: usize, observer: &mut dyn TrainObserver) -> Result<()> {
        data.validate(&self.config)?;
        let pairs = psm::build_pairs(data.labeled_y)?;
        for _ in 0..units {
            if self.is_finished() {
                break;
            }
            self.unit(data, &pairs, observer)?;
        }
        Ok(())
    }

    /// Runs until finished.
    pub fn run(&mut self, data: TrainingData<'_>, observer: &mut dyn TrainObserver) -> Result<()> {
        let remaining = self.config.cycles.saturating_sub(self.completed);
        self.run_units(data, remaining, observer)
    }

    fn unit(&mut self, data: TrainingData<'_>, pairs: &PairBatch, observer: &mut dyn TrainObserver) -> Result<()> {
        let u = self.completed;
        let start = observer.now();
        let mut psm_loss = None;
        let mut rll_loss = None;
        for &step in self.steps_for_unit(u) {
            match step {
                Step::Psm => {
                    let batch = self.config.batch_size.unwrap_or(pairs.len()).max(1);
                    let shuffle = seed::derive_seed(self.config.seed, 1 + u as u64);
                    let loss = psm::psm_epoch(
                        &mut self.model,
                        pairs,
                        data.labeled_x,
                        self.optimizers.psm(),
                        batch,
                        shuffle,
                    )?;
                    psm_loss = Some(loss);
                }
                Step::Dml => {
                    let stats = dml::dml_epoch(
                        &mut self.model,
                        data.labeled_x,
                        data.unlabeled_x,
                        &self.config.rll,
                        self.optimizers.dml(),
                    )?;
                    observer.on_dml_epoch(u, &stats);
                    rll_loss = Some(stats.loss);
                }
            }
        }
        let end = observer.now();
        self.history.psm_loss.push(psm_loss);
        self.history.rll_loss.push(rll_loss);
        self.history.cycle_seconds.push(end - start);
        self.completed += 1;
        Ok(())
    }
}

/// Trains a fresh model for the configured budget.
pub fn alternate_train(data: TrainingData<'_>, cfg: &TrainConfig) -> Result<(SiameseModel, TrainHistory)> {
    alternate_train_observed(data, cfg, &mut ())
}

pub fn alternate_train_observed(
    data: TrainingData<'_>,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(SiameseModel, TrainHistory)> {
    let mut t = Trainer::new(cfg.clone(), data.labeled_x.cols())?;
    t.run(data, observer)?;
    Ok(t.into_parts())
}

/// Symmetrized estimate for each row of `x`:
/// `mean_i [ (f(x, s_i) − f(s_i, x)) / 2 + y_i ]`.
///
/// The per-sample terms are sorted before summation, so the result does not
/// depend on the order of the labeled set.
pub fn predict_batch<M: DifferenceModel + ?Sized>(
    model: &M,
    x: &Matrix,
    labeled_x: &Matrix,
    labeled_y: &[f64],
) -> Result<Vec<f64>> {
    let n = labeled_y.len();
    if n == 0 || labeled_x.rows() == 0 {
        return Err(Error::Precondition("labeled set is empty".into()));
    }
    if labeled_x.rows() != n {
        return Err(Error::shape("labeled targets", labeled_x.rows(), n));
    }
    let forward = model.difference_matrix(x, labeled_x)?;
    let backward = model.difference_matrix(labeled_x, x)?;
    let mut terms = alloc::vec![0.0; n];
    let mut out = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        for (i, t) in terms.iter_mut().enumerate() {
            *t = (forward.get(r, i) - backward.get(i, r)) / 2.0 + labeled_y[i];
        }
        terms.sort_by(f64::total_cmp);
        out.push(terms.iter().sum::<f64>() / n as f64);
    }
    Ok(out)
}

pub fn predict<M: DifferenceModel + ?Sized>(
    model: &M,
    x_star: &[f64],
    labeled_x: &Matrix,
    labeled_y: &[f64],
) -> Result<f64> {
    let x = Matrix::from_rows(&[x_star])?;
    Ok(predict_batch(model, &x, labeled_x, labeled_y)?[0])
}
