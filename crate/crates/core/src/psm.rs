//! Pairwise difference regression on the labeled set.
//!
//! Every ordered pair `(i, j)`, `i ≠ j`, of labeled samples becomes one
//! regression example with target `z_ij = y_i − y_j`. The loss is the mean
//! squared error between `z_ij` and the model's estimate over all `N(N−1)`
//! pairs.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;
use crate::siamese::{SiameseGrads, SiameseModel};

/// All ordered labeled pairs, enumerated i-major, j-minor, skipping `i == j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBatch {
    pub n_samples: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub z: Vec<f64>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Position of pair `(i, j)` in the enumeration.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        if i == j || i >= self.n_samples || j >= self.n_samples {
            return None;
        }
        Some(i * (self.n_samples - 1) + if j < i { j } else { j - 1 })
    }
}

pub fn build_pairs(targets: &[f64]) -> Result<PairBatch> {
    let n = targets.len();
    if n < 2 {
        return Err(Error::Precondition(alloc::format!(
            "pair construction needs at least 2 labeled samples, got {n}"
        )));
    }
    let cap = n * (n - 1);
    let mut pb = PairBatch {
        n_samples: n,
        left: Vec::with_capacity(cap),
        right: Vec::with_capacity(cap),
        z: Vec::with_capacity(cap),
    };
    for (i, &yi) in targets.iter().enumerate() {
        for (j, &yj) in targets.iter().enumerate() {
            if i != j {
                pb.left.push(i);
                pb.right.push(j);
                pb.z.push(yi - yj);
            }
        }
    }
    Ok(pb)
}

fn check_inputs(pb: &PairBatch, labeled_x: &Matrix) -> Result<()> {
    if labeled_x.rows() != pb.n_samples {
        return Err(Error::shape("pair batch labeled rows", pb.n_samples, labeled_x.rows()));
    }
    Ok(())
}

/// Mean squared difference error over the pairs listed in `pair_ids`, with its
/// gradient. All labeled samples are embedded once and pair contributions are
/// accumulated per sample before a single backward pass, which is the same
/// gradient as running two towers per pair.
pub fn psm_batch_loss_and_grad(
    model: &SiameseModel,
    pb: &PairBatch,
    labeled_x: &Matrix,
    pair_ids: &[usize],
) -> Result<(f64, SiameseGrads)> {
    check_inputs(pb, labeled_x)?;
    if pair_ids.is_empty() {
        return Err(Error::Precondition("empty pair mini-batch".into()));
    }
    let rec = model.subnet.forward(labeled_x)?;
    let emb = rec.output();
    let e = model.embedding_dim();
    let (wl, wr) = (model.head.left_weight(), model.head.right_weight());
    let scale = 1.0 / pair_ids.len() as f64;

    let mut grads = SiameseGrads::zeros_like(model);
    let mut d_emb = Matrix::zeros(labeled_x.rows(), e);
    let mut loss = 0.0;
    for &p in pair_ids {
        let (i, j) = (pb.left[p], pb.right[p]);
        let (ei, ej) = (emb.row(i), emb.row(j));
        let resid = pb.z[p] - model.head.apply(ei, ej);
        loss += resid * resid;
        let g = -2.0 * resid * scale;
        grads.head_bias += g;
        for k in 0..e {
            grads.head_weight[k] += g * ei[k];
            grads.head_weight[e + k] += g * ej[k];
        }
        for (d, &w) in d_emb.row_mut(i).iter_mut().zip(wl) {
            *d += g * w;
        }
        for (d, &w) in d_emb.row_mut(j).iter_mut().zip(wr) {
            *d += g * w;
        }
    }
    let (gsub, _) = model.subnet.backward(&rec, &d_emb)?;
    grads.subnet = gsub;
    Ok((loss * scale, grads))
}

/// Full-batch loss over every pair.
pub fn psm_loss(model: &SiameseModel, pb: &PairBatch, labeled_x: &Matrix) -> Result<f64> {
    check_inputs(pb, labeled_x)?;
    let emb = model.embed(labeled_x)?;
    let mut loss = 0.0;
    for p in 0..pb.len() {
        let r = pb.z[p] - model.head.apply(emb.row(pb.left[p]), emb.row(pb.right[p]));
        loss += r * r;
    }
    Ok(loss / pb.len() as f64)
}

pub fn psm_loss_and_grad(model: &SiameseModel, pb: &PairBatch, labeled_x: &Matrix) -> Result<(f64, SiameseGrads)> {
    let ids: Vec<usize> = (0..pb.len()).collect();
    psm_batch_loss_and_grad(model, pb, labeled_x, &ids)
}

/// One pass over all pairs in seeded shuffled order, one optimizer step per
/// mini-batch. Returns the mean of the per-batch losses.
pub fn psm_epoch(
    model: &mut SiameseModel,
    pb: &PairBatch,
    labeled_x: &Matrix,
    opt: &mut AdamState,
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::Precondition("batch_size must be >= 1".into()));
    }
    check_inputs(pb, labeled_x)?;
    let mut order: Vec<usize> = (0..pb.len()).collect();
    order.shuffle(&mut seed::rng(shuffle_seed));
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size) {
        let (loss, grads) = psm_batch_loss_and_grad(model, pb, labeled_x, chunk)?;
        opt.step(model, &grads)?;
        total += loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adam::AdamConfig;
    use crate::gradcheck::grad_check;
    use crate::nn::Parameters;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_rows(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seed::rng(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn pairs_of_three_targets() {
        let pb = build_pairs(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(pb.len(), 6);
        assert_eq!(pb.z, vec![-1.0, -3.0, 1.0, -2.0, 3.0, 2.0]);
        assert_eq!(pb.left, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(pb.right, vec![1, 2, 0, 2, 0, 1]);
    }

    #[test]
    fn pairs_of_equal_targets() {
        let pb = build_pairs(&[5.0, 5.0]).unwrap();
        assert_eq!((pb.left.clone(), pb.right.clone()), (vec![0, 1], vec![1, 0]));
        assert_eq!(pb.z, vec![0.0, 0.0]);
    }

    #[test]
    fn ten_targets_give_ninety_pairs() {
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(build_pairs(&y).unwrap().len(), 90);
    }

    #[test]
    fn single_target_is_rejected() {
        assert!(matches!(build_pairs(&[1.0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn position_inverts_enumeration() {
        let pb = build_pairs(&[0.0; 5]).unwrap();
        for p in 0..pb.len() {
            assert_eq!(pb.position(pb.left[p], pb.right[p]), Some(p));
        }
        assert_eq!(pb.position(2, 2), None);
    }

    proptest! {
        #[test]
        fn pair_targets_are_antisymmetric(y in proptest::collection::vec(-1e3f64..1e3, 2..12)) {
            let pb = build_pairs(&y).unwrap();
            prop_assert_eq!(pb.len(), y.len() * (y.len() - 1));
            for p in 0..pb.len() {
                let q = pb.position(pb.right[p], pb.left[p]).unwrap();
                prop_assert_eq!(pb.z[q], -pb.z[p]);
            }
        }
    }

    fn zero_model(input_dim: usize) -> SiameseModel {
        let mut m = SiameseModel::init(input_dim, &[4, 3], 0).unwrap();
        let n = m.num_params();
        m.load_flat(&vec![0.0; n]).unwrap();
        m
    }

    #[test]
    fn constant_zero_model_closed_form() {
        let m = zero_model(2);
        let pb = build_pairs(&[0.0, 1.0]).unwrap();
        let x = random_rows(2, 2, 1);
        assert_eq!(psm_loss(&m, &pb, &x).unwrap(), 1.0);
    }

    #[test]
    fn exact_model_has_zero_loss() {
        // Embedding layer that passes a single feature through, head (1, -1).
        let mut m = zero_model(1);
        let sizes = m.subnet.layer_sizes();
        assert_eq!(sizes, vec![1, 4, 3]);
        m.subnet.layers_mut()[0].weight.set(0, 0, 1.0);
        m.subnet.layers_mut()[1].weight.set(0, 0, 1.0);
        m.head.weight[0] = 1.0;
        m.head.weight[3] = -1.0;
        let x = Matrix::from_rows(&[[0.5], [2.0], [1.25]]).unwrap();
        let pb = build_pairs(&[0.5, 2.0, 1.25]).unwrap();
        assert_eq!(psm_loss(&m, &pb, &x).unwrap(), 0.0);
    }

    /// Independent double loop over (i, j) using one pair evaluation per term.
    fn oracle_loss(m: &SiameseModel, x: &Matrix, y: &[f64]) -> f64 {
        let n = y.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let f = m.pair_forward(&x.select_rows(&[i]), &x.select_rows(&[j])).unwrap()[0];
                s += (y[i] - y[j] - f).powi(2);
            }
        }
        s / (n * (n - 1)) as f64
    }

    #[test]
    fn loss_matches_double_loop_oracle() {
        let m = SiameseModel::init(5, &[8, 6], 3).unwrap();
        let x = random_rows(7, 5, 4);
        let y = [3.0, -1.0, 2.5, 0.0, 10.0, 4.2, -7.5];
        let pb = build_pairs(&y).unwrap();
        let got = psm_loss(&m, &pb, &x).unwrap();
        let want = oracle_loss(&m, &x, &y);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
        let (lg, _) = psm_loss_and_grad(&m, &pb, &x).unwrap();
        assert!((lg - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn loss_is_invariant_to_pair_order() {
        let m = SiameseModel::init(3, &[5, 4], 9).unwrap();
        let x = random_rows(5, 3, 4);
        let pb = build_pairs(&[1.0, 2.0, 3.0, 5.0, 8.0]).unwrap();
        let ids: Vec<usize> = (0..pb.len()).collect();
        let mut rev = ids.clone();
        rev.reverse();
        let (a, _) = psm_batch_loss_and_grad(&m, &pb, &x, &ids).unwrap();
        let (b, _) = psm_batch_loss_and_grad(&m, &pb, &x, &rev).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
        assert!(a >= 0.0);
    }

    #[test]
    fn gradient_passes_finite_difference_check() {
        let m = SiameseModel::init(4, &[6, 5], 12).unwrap();
        let x = random_rows(3, 4, 13);
        let pb = build_pairs(&[0.3, 1.7, -0.4]).unwrap();
        let dev = grad_check(|p: &SiameseModel| {
            let (l, g) = psm_loss_and_grad(p, &pb, &x)?;
            Ok((l, g.to_flat()))
        }, &m, 1e-4, None)
        .unwrap();
        assert!(dev < 1e-4, "deviation {dev}");
    }

    #[test]
    fn large_batch_takes_one_step() {
        let mut m = SiameseModel::init(2, &[4, 4], 1).unwrap();
        let x = random_rows(4, 2, 2);
        let pb = build_pairs(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut opt = AdamState::for_params(&m, AdamConfig::default());
        psm_epoch(&mut m, &pb, &x, &mut opt, 12, 0).unwrap();
        assert_eq!(opt.step_count(), 1);
        psm_epoch(&mut m, &pb, &x, &mut opt, 5, 0).unwrap();
        assert_eq!(opt.step_count(), 1 + 3);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut m = SiameseModel::init(2, &[4, 4], 1).unwrap();
        let before = m.clone();
        let x = random_rows(4, 2, 2);
        let pb = build_pairs(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut opt = AdamState::for_params(&m, AdamConfig::with_learning_rate(0.0));
        let l1 = psm_epoch(&mut m, &pb, &x, &mut opt, 4, 5).unwrap();
        let l2 = psm_epoch(&mut m, &pb, &x, &mut opt, 4, 5).unwrap();
        assert_eq!(m, before);
        assert_eq!(l1, l2);
    }

    #[test]
    fn two_epochs_reduce_loss_on_linear_toy() {
        // targets linear in the first feature
        let x = random_rows(8, 3, 40);
        let y: Vec<f64> = x.iter_rows().map(|r| 4.0 * r[0]).collect();
        let pb = build_pairs(&y).unwrap();
        let mut m = SiameseModel::init(3, &[16, 16], 41).unwrap();
        let mut opt = AdamState::for_params(&m, AdamConfig::with_learning_rate(0.01));
        psm_epoch(&mut m, &pb, &x, &mut opt, 8, 1).unwrap();
        let l1 = psm_loss(&m, &pb, &x).unwrap();
        psm_epoch(&mut m, &pb, &x, &mut opt, 8, 2).unwrap();
        let l2 = psm_loss(&m, &pb, &x).unwrap();
        assert!(l2 < l1, "{l2} !< {l1}");
    }

    #[test]
    fn zero_batch_size_is_rejected() {
        let mut m = SiameseModel::init(2, &[4], 1).unwrap();
        let pb = build_pairs(&[1.0, 2.0]).unwrap();
        let mut opt = AdamState::for_params(&m, AdamConfig::default());
        assert!(psm_epoch(&mut m, &pb, &random_rows(2, 2, 1), &mut opt, 0, 0).is_err());
    }
}
