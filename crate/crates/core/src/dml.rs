//! Ranked-list metric learning on unlabeled data.
//!
//! Each labeled sample acts as an anchor. The model's difference head scores
//! every unlabeled sample against the anchor; the `k` lowest scores form the
//! positive set and the `k` highest the negative set. The ranked list loss then
//! pulls positives within `α − m` of the anchor in embedding space and pushes
//! negatives beyond `α`, with per-element weights softmax-normalized inside
//! each set.
//!
//! Selection is a hard ranking and carries no gradient; the loss gradient is
//! exact for fixed sets, including the dependence of the normalized weights on
//! the distances.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::linalg::{euclidean, Matrix};
use crate::nn::ForwardRecord;
use crate::siamese::{DifferenceModel, SiameseGrads, SiameseModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

/// How negative-set elements are weighted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeWeighting {
    /// `exp(τ·(d − (α − m)))`, the same expression as the positive set.
    Paper,
    /// `exp(τ·(α − d))`: closer (harder) negatives weigh more.
    #[default]
    Rll,
}

/// Which quantity is ranked when selecting sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScore {
    /// `|f(anchor, u)|`
    #[default]
    Absolute,
    /// `f(anchor, u)`
    Signed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RllConfig {
    /// Temperature τ.
    pub tau: f64,
    /// Negative boundary α.
    pub alpha: f64,
    /// Margin m, `0 < m < α`; positives are pulled within `α − m`.
    pub margin: f64,
    /// Size of each positive and negative set.
    pub k: usize,
    #[serde(default)]
    pub negative_weighting: NegativeWeighting,
    #[serde(default)]
    pub selection: SelectionScore,
    /// L2-normalize embeddings before measuring distances.
    #[serde(default)]
    pub normalize_embeddings: bool,
}

impl Default for RllConfig {
    fn default() -> Self {
        RllConfig {
            tau: 10.0,
            alpha: 1.0,
            margin: 0.4,
            k: 5,
            negative_weighting: NegativeWeighting::Rll,
            selection: SelectionScore::Absolute,
            normalize_embeddings: false,
        }
    }
}

impl RllConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.margin > 0.0 && self.margin < self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "margin must satisfy 0 < margin < alpha, got margin {} with alpha {}",
                self.margin, self.alpha
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        Ok(())
    }

    /// `α − m`, the radius positives are pulled into.
    pub fn positive_boundary(&self) -> f64 {
        self.alpha - self.margin
    }

    /// Precondition `M ≥ 2k` for an unlabeled set of size `m`.
    pub fn check_unlabeled(&self, m: usize) -> Result<()> {
        check_set_size(m, self.k)
    }
}

/// Exponent of the unnormalized weight.
pub fn log_weight(dist: f64, cfg: &RllConfig, polarity: Polarity) -> f64 {
    match (polarity, cfg.negative_weighting) {
        (Polarity::Positive, _) | (Polarity::Negative, NegativeWeighting::Paper) => {
            cfg.tau * (dist - cfg.positive_boundary())
        }
        (Polarity::Negative, NegativeWeighting::Rll) => cfg.tau * (cfg.alpha - dist),
    }
}

fn dlog_weight(cfg: &RllConfig, polarity: Polarity) -> f64 {
    match (polarity, cfg.negative_weighting) {
        (Polarity::Positive, _) | (Polarity::Negative, NegativeWeighting::Paper) => cfg.tau,
        (Polarity::Negative, NegativeWeighting::Rll) => -cfg.tau,
    }
}

/// Unnormalized weight. May overflow for large distances; losses use
/// [`normalized_weights`] instead.
pub fn rll_weight(dist: f64, cfg: &RllConfig, polarity: Polarity) -> f64 {
    libm::exp(log_weight(dist, cfg, polarity))
}

/// Weights of a set divided by their sum, computed with a max shift.
pub fn normalized_weights(dists: &[f64], cfg: &RllConfig, polarity: Polarity) -> Vec<f64> {
    let logs: Vec<f64> = dists.iter().map(|&d| log_weight(d, cfg, polarity)).collect();
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|&l| libm::exp(l - mx)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Hinge: positives `max(0, d − (α − m))`, negatives `max(0, α − d)`.
pub fn margin_loss(dist: f64, cfg: &RllConfig, polarity: Polarity) -> f64 {
    match polarity {
        Polarity::Positive => (dist - cfg.positive_boundary()).max(0.0),
        Polarity::Negative => (cfg.alpha - dist).max(0.0),
    }
}

fn dmargin(dist: f64, cfg: &RllConfig, polarity: Polarity) -> f64 {
    match polarity {
        Polarity::Positive if dist > cfg.positive_boundary() => 1.0,
        Polarity::Negative if dist < cfg.alpha => -1.0,
        _ => 0.0,
    }
}

/// Weighted set loss from anchor–element distances. Returns the loss, its
/// derivative with respect to each distance, and the normalized weights.
pub fn set_loss_from_distances(
    dists: &[f64],
    cfg: &RllConfig,
    polarity: Polarity,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if dists.is_empty() {
        return Err(Error::Precondition("set must be non-empty".into()));
    }
    let w = normalized_weights(dists, cfg, polarity);
    let h: Vec<f64> = dists.iter().map(|&d| margin_loss(d, cfg, polarity)).collect();
    let loss: f64 = w.iter().zip(&h).map(|(a, b)| a * b).sum();
    let ds = dlog_weight(cfg, polarity);
    let grad = dists
        .iter()
        .zip(w.iter().zip(&h))
        .map(|(&d, (&wj, &hj))| wj * dmargin(d, cfg, polarity) + wj * (hj - loss) * ds)
        .collect();
    Ok((loss, grad, w))
}

/// Set loss for one anchor sample against the rows of `set`.
pub fn set_loss(
    model: &SiameseModel,
    anchor: &[f64],
    set: &Matrix,
    cfg: &RllConfig,
    polarity: Polarity,
) -> Result<f64> {
    if set.rows() == 0 {
        return Err(Error::Precondition("set must be non-empty".into()));
    }
    let a = metric_embed(model, &Matrix::from_rows(&[anchor])?, cfg.normalize_embeddings)?.metric;
    let s = metric_embed(model, set, cfg.normalize_embeddings)?.metric;
    let d: Vec<f64> = s.iter_rows().map(|r| euclidean(a.row(0), r)).collect();
    Ok(set_loss_from_distances(&d, cfg, polarity)?.0)
}

/// Positive and negative sets for one anchor. Indices point into the
/// unlabeled set; `anchor` indexes the labeled set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSets {
    pub anchor: usize,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

fn check_set_size(m: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Precondition("k must be >= 1".into()));
    }
    if m < 2 * k {
        return Err(Error::Precondition(format!(
            "k = {k} exceeds half the unlabeled set size (M = {m}); need M >= 2k"
        )));
    }
    Ok(())
}

/// Picks the `k` smallest scores as positives and the `k` largest as
/// negatives. Ties break by ascending index; positives are filled first and
/// are never re-picked as negatives.
pub fn select_from_scores(scores: &[f64], k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let m = scores.len();
    check_set_size(m, k)?;
    if let Some(index) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            context: "selection scores",
            index,
        });
    }
    let mut asc: Vec<usize> = (0..m).collect();
    asc.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let positive: Vec<usize> = asc[..k].to_vec();

    let mut desc: Vec<usize> = (0..m).collect();
    desc.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let negative: Vec<usize> = desc
        .into_iter()
        .filter(|i| !positive.contains(i))
        .take(k)
        .collect();
    Ok((positive, negative))
}

fn scores_from_differences(diff: &[f64], mode: SelectionScore) -> Vec<f64> {
    match mode {
        SelectionScore::Absolute => diff.iter().map(|d| d.abs()).collect(),
        SelectionScore::Signed => diff.to_vec(),
    }
}

/// Selection for a single anchor sample (reported as anchor 0).
pub fn select_sets(
    model: &SiameseModel,
    anchor: &[f64],
    unlabeled: &Matrix,
    k: usize,
    mode: SelectionScore,
) -> Result<TripletSets> {
    check_set_size(unlabeled.rows(), k)?;
    let d = model.difference_matrix(&Matrix::from_rows(&[anchor])?, unlabeled)?;
    let scores = scores_from_differences(d.row(0), mode);
    let (positive, negative) = select_from_scores(&scores, k)?;
    Ok(TripletSets {
        anchor: 0,
        positive,
        negative,
    })
}

/// Selection for every labeled sample, sharing one embedding pass. Also
/// returns each anchor's score vector.
pub fn select_all(
    model: &SiameseModel,
    labeled_x: &Matrix,
    unlabeled_x: &Matrix,
    cfg: &RllConfig,
) -> Result<(Vec<TripletSets>, Matrix)> {
    cfg.check_unlabeled(unlabeled_x.rows())?;
    let d = model.difference_matrix(labeled_x, unlabeled_x)?;
    let mut scores = Matrix::zeros(d.rows(), d.cols());
    let mut sets = Vec::with_capacity(d.rows());
    for a in 0..d.rows() {
        let s = scores_from_differences(d.row(a), cfg.selection);
        let (positive, negative) = select_from_scores(&s, cfg.k)?;
        scores.row_mut(a).copy_from_slice(&s);
        sets.push(TripletSets {
            anchor: a,
            positive,
            negative,
        });
    }
    Ok((sets, scores))
}

struct MetricEmbedding {
    record: ForwardRecord,
    metric: Matrix,
    norms: Vec<f64>,
}

fn metric_embed(model: &SiameseModel, x: &Matrix, normalize: bool) -> Result<MetricEmbedding> {
    let record = model.subnet.forward(x)?;
    let emb = record.output();
    let mut metric = emb.clone();
    let mut norms = Vec::new();
    if normalize {
        norms.reserve(emb.rows());
        for r in 0..emb.rows() {
            let n = libm::sqrt(emb.row(r).iter().map(|v| v * v).sum::<f64>());
            norms.push(n);
            let row = metric.row_mut(r);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
    Ok(MetricEmbedding { record, metric, norms })
}

/// Maps `∂L/∂(metric embedding)` back to `∂L/∂(raw embedding)`.
fn metric_backward(me: &MetricEmbedding, mut grad: Matrix) -> Matrix {
    if me.norms.is_empty() {
        return grad;
    }
    for r in 0..grad.rows() {
        let n = me.norms[r];
        let u = me.metric.row(r);
        let g = grad.row_mut(r);
        if n > 0.0 {
            let proj: f64 = g.iter().zip(u).map(|(a, b)| a * b).sum();
            for (gv, &uv) in g.iter_mut().zip(u) {
                *gv = (*gv - uv * proj) / n;
            }
        } else {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    grad
}

/// Per-anchor audit record from one loss evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorDiagnostics {
    pub anchor: usize,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub positive_distances: Vec<f64>,
    pub negative_distances: Vec<f64>,
    pub positive_weights: Vec<f64>,
    pub negative_weights: Vec<f64>,
    pub positive_loss: f64,
    pub negative_loss: f64,
}

/// Loss, gradient and per-anchor diagnostics for frozen sets.
pub fn rll_loss_and_grad(
    model: &SiameseModel,
    labeled_x: &Matrix,
    unlabeled_x: &Matrix,
    sets: &[TripletSets],
    cfg: &RllConfig,
) -> Result<(f64, SiameseGrads, Vec<AnchorDiagnostics>)> {
    if sets.is_empty() {
        return Err(Error::Precondition("no anchors".into()));
    }
    let m = unlabeled_x.rows();
    let mut used: Vec<usize> = sets
        .iter()
        .flat_map(|s| s.positive.iter().chain(&s.negative).copied())
        .collect();
    used.sort_unstable();
    used.dedup();
    if let Some(&bad) = used.iter().find(|&&u| u >= m) {
        return Err(Error::Precondition(format!("unlabeled index {bad} out of range (M = {m})")));
    }
    if let Some(s) = sets.iter().find(|s| s.anchor >= labeled_x.rows()) {
        return Err(Error::Precondition(format!("anchor index {} out of range", s.anchor)));
    }
    let pos_of = |u: usize| used.binary_search(&u).expect("collected above");

    let anchors = metric_embed(model, labeled_x, cfg.normalize_embeddings)?;
    let others = metric_embed(model, &unlabeled_x.select_rows(&used), cfg.normalize_embeddings)?;
    let e = anchors.metric.cols();
    let mut d_anchor = Matrix::zeros(labeled_x.rows(), e);
    let mut d_other = Matrix::zeros(used.len(), e);
    let scale = 1.0 / (2.0 * sets.len() as f64);

    let mut total = 0.0;
    let mut diags = Vec::with_capacity(sets.len());
    for s in sets {
        let ea = anchors.metric.row(s.anchor);
        let mut part = |members: &[usize], polarity: Polarity| -> Result<(f64, Vec<f64>, Vec<f64>)> {
            let dists: Vec<f64> = members.iter().map(|&u| euclidean(ea, others.metric.row(pos_of(u)))).collect();
            let (loss, dl, w) = set_loss_from_distances(&dists, cfg, polarity)?;
            for ((&u, &d), &g) in members.iter().zip(&dists).zip(&dl) {
                if d == 0.0 || g == 0.0 {
                    continue;
                }
                let coef = scale * g / d;
                let row = pos_of(u);
                for k in 0..e {
                    let diff = coef * (ea[k] - others.metric.get(row, k));
                    d_anchor.row_mut(s.anchor)[k] += diff;
                    d_other.row_mut(row)[k] -= diff;
                }
            }
            Ok((loss, dists, w))
        };
        let (lp, pd, pw) = part(&s.positive, Polarity::Positive)?;
        let (ln, nd, nw) = part(&s.negative, Polarity::Negative)?;
        total += lp + ln;
        diags.push(AnchorDiagnostics {
            anchor: s.anchor,
            positive: s.positive.clone(),
            negative: s.negative.clone(),
            positive_distances: pd,
            negative_distances: nd,
            positive_weights: pw,
            negative_weights: nw,
            positive_loss: lp,
            negative_loss: ln,
        });
    }

    let d_anchor = metric_backward(&anchors, d_anchor);
    let d_other = metric_backward(&others, d_other);
    let (ga, _) = model.subnet.backward(&anchors.record, &d_anchor)?;
    let (go, _) = model.subnet.backward(&others.record, &d_other)?;
    let mut grads = SiameseGrads::zeros_like(model);
    grads.subnet = ga;
    grads.subnet.accumulate(&go);
    Ok((total * scale, grads, diags))
}

/// `(1/2N) Σ_anchors [L_P + L_N]` for frozen sets.
pub fn rll_loss(
    model: &SiameseModel,
    labeled_x: &Matrix,
    unlabeled_x: &Matrix,
    sets: &[TripletSets],
    cfg: &RllConfig,
) -> Result<f64> {
    Ok(rll_loss_and_grad(model, labeled_x, unlabeled_x, sets, cfg)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmlEpochStats {
    /// Loss before the optimizer step.
    pub loss: f64,
    pub anchors: Vec<AnchorDiagnostics>,
    /// Per anchor: smallest negative-set score minus largest positive-set score.
    pub score_margins: Vec<f64>,
}

/// Reselects every anchor's sets with the current model, then takes one
/// full-batch optimizer step on the ranked list loss.
pub fn dml_epoch(
    model: &mut SiameseModel,
    labeled_x: &Matrix,
    unlabeled_x: &Matrix,
    cfg: &RllConfig,
    opt: &mut AdamState,
) -> Result<DmlEpochStats> {
    cfg.validate()?;
    let (sets, scores) = select_all(model, labeled_x, unlabeled_x, cfg)?;
    let score_margins = sets
        .iter()
        .map(|s| {
            let row = scores.row(s.anchor);
            let hi_pos = s.positive.iter().map(|&u| row[u]).fold(f64::NEG_INFINITY, f64::max);
            let lo_neg = s.negative.iter().map(|&u| row[u]).fold(f64::INFINITY, f64::min);
            lo_neg - hi_pos
        })
        .collect();
    let (loss, grads, anchors) = rll_loss_and_grad(model, labeled_x, unlabeled_x, &sets, cfg)?;
    opt.step(model, &grads)?;
    Ok(DmlEpochStats {
        loss,
        anchors,
        score_margins,
    })
}
