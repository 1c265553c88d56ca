//! Siamese difference model.
//!
//! One sub-network maps a sample to an embedding. Two copies of it (the same
//! parameter store, not a copy) embed the left and right sample of a pair, and
//! a linear head on the concatenation `[e_left, e_right]` estimates
//! `y_left − y_right`. The embedding also defines the metric used by the
//! ranked list loss.

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, euclidean, Matrix};
use crate::nn::{Activation, ForwardRecord, Gradients, Mlp, Parameters};
use crate::seed;

pub const EMBEDDING_DIM: usize = 100;
pub const DEFAULT_HIDDEN: [usize; 2] = [EMBEDDING_DIM, EMBEDDING_DIM];

/// Anything that can estimate target differences for every pair of rows.
///
/// `difference_matrix(a, b)[r][c]` is the estimate of `y(a_r) − y(b_c)`.
pub trait DifferenceModel {
    fn difference_matrix(&self, a: &Matrix, b: &Matrix) -> Result<Matrix>;
}

/// Linear unit on `[e_left, e_right]`. The first half of `weight` multiplies
/// the left embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairHead {
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl PairHead {
    pub fn embedding_dim(&self) -> usize {
        self.weight.len() / 2
    }

    pub fn left_weight(&self) -> &[f64] {
        &self.weight[..self.embedding_dim()]
    }

    pub fn right_weight(&self) -> &[f64] {
        &self.weight[self.embedding_dim()..]
    }

    #[inline]
    pub fn apply(&self, left: &[f64], right: &[f64]) -> f64 {
        dot(self.left_weight(), left) + dot(self.right_weight(), right) + self.bias
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiameseModel {
    pub subnet: Mlp,
    pub head: PairHead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiameseGrads {
    pub subnet: Gradients,
    pub head_weight: Vec<f64>,
    pub head_bias: f64,
}

impl SiameseGrads {
    pub fn zeros_like(model: &SiameseModel) -> Self {
        SiameseGrads {
            subnet: Gradients::zeros_like(&model.subnet),
            head_weight: alloc::vec![0.0; model.head.weight.len()],
            head_bias: 0.0,
        }
    }

    pub fn accumulate(&mut self, other: &SiameseGrads) {
        self.subnet.accumulate(&other.subnet);
        for (a, b) in self.head_weight.iter_mut().zip(&other.head_weight) {
            *a += b;
        }
        self.head_bias += other.head_bias;
    }
}

/// Cached towers of a pair evaluation, for [`SiameseModel::pair_backward`].
#[derive(Clone, Debug)]
pub struct PairForward {
    left: ForwardRecord,
    right: ForwardRecord,
    output: Vec<f64>,
}

impl PairForward {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl SiameseModel {
    /// Sub-network `input_dim → 100 → 100`, both layers rectified.
    pub fn new(input_dim: usize, seed: u64) -> Result<Self> {
        Self::init(input_dim, &DEFAULT_HIDDEN, seed)
    }

    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::InvalidLayerSizes("siamese sub-network needs a hidden layer".into()));
        }
        let mut sizes = Vec::with_capacity(hidden.len() + 1);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        let acts = alloc::vec![Activation::Relu; hidden.len()];
        let subnet = Mlp::init_with_activations(&sizes, &acts, seed::derive_seed(seed, 0))?;
        let e = subnet.output_dim();
        let bound = 1.0 / libm::sqrt((2 * e) as f64);
        let mut rng = seed::rng(seed::derive_seed(seed, 1));
        let weight = (0..2 * e).map(|_| rng.random_range(-bound..=bound)).collect();
        Ok(SiameseModel {
            subnet,
            head: PairHead { weight, bias: 0.0 },
        })
    }

    pub fn from_parts(subnet: Mlp, head: PairHead) -> Result<Self> {
        let e = subnet.output_dim();
        if head.weight.len() != 2 * e {
            return Err(Error::shape("SiameseModel head width", 2 * e, head.weight.len()));
        }
        if !head.bias.is_finite() || head.weight.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite {
                context: "SiameseModel head",
                index: 0,
            });
        }
        Ok(SiameseModel { subnet, head })
    }

    pub fn input_dim(&self) -> usize {
        self.subnet.input_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.subnet.output_dim()
    }

    /// Sub-network output (last hidden layer after activation), unnormalized.
    pub fn embed(&self, batch: &Matrix) -> Result<Matrix> {
        self.subnet.predict(batch)
    }

    pub fn pair_forward(&self, xi: &Matrix, xj: &Matrix) -> Result<Vec<f64>> {
        Ok(self.pair_forward_cached(xi, xj)?.output)
    }

    pub fn pair_forward_cached(&self, xi: &Matrix, xj: &Matrix) -> Result<PairForward> {
        if xi.rows() != xj.rows() {
            return Err(Error::shape("pair_forward batch size", xi.rows(), xj.rows()));
        }
        let left = self.subnet.forward(xi)?;
        let right = self.subnet.forward(xj)?;
        let output = left
            .output()
            .iter_rows()
            .zip(right.output().iter_rows())
            .map(|(a, b)| self.head.apply(a, b))
            .collect();
        Ok(PairForward { left, right, output })
    }

    /// Backpropagates `∂L/∂f` for each pair. The sub-network gradient is the
    /// sum of both towers' contributions. Also returns `∂L/∂x_left` and
    /// `∂L/∂x_right`.
    pub fn pair_backward(&self, fwd: &PairForward, out_grad: &[f64]) -> Result<(SiameseGrads, Matrix, Matrix)> {
        let b = fwd.output.len();
        if out_grad.len() != b {
            return Err(Error::shape("pair_backward output grad", b, out_grad.len()));
        }
        let e = self.embedding_dim();
        let mut g = SiameseGrads::zeros_like(self);
        let mut d_left = Matrix::zeros(b, e);
        let mut d_right = Matrix::zeros(b, e);
        let (wl, wr) = (self.head.left_weight(), self.head.right_weight());
        for r in 0..b {
            let go = out_grad[r];
            g.head_bias += go;
            let (el, er) = (fwd.left.output().row(r), fwd.right.output().row(r));
            for k in 0..e {
                g.head_weight[k] += go * el[k];
                g.head_weight[e + k] += go * er[k];
            }
            for (d, &w) in d_left.row_mut(r).iter_mut().zip(wl) {
                *d = go * w;
            }
            for (d, &w) in d_right.row_mut(r).iter_mut().zip(wr) {
                *d = go * w;
            }
        }
        let (gl, xl) = self.subnet.backward(&fwd.left, &d_left)?;
        let (gr, xr) = self.subnet.backward(&fwd.right, &d_right)?;
        g.subnet = gl;
        g.subnet.accumulate(&gr);
        Ok((g, xl, xr))
    }

    /// Euclidean distance between the embeddings of two samples.
    pub fn embed_distance(&self, xa: &[f64], xb: &[f64]) -> Result<f64> {
        if xa.len() != xb.len() {
            return Err(Error::shape("embed_distance sample width", xa.len(), xb.len()));
        }
        let batch = Matrix::from_rows(&[xa, xb])?;
        let e = self.embed(&batch)?;
        Ok(euclidean(e.row(0), e.row(1)))
    }

    /// Head evaluated on every (left, right) embedding combination.
    pub fn head_matrix(&self, left: &Matrix, right: &Matrix) -> Matrix {
        let pl: Vec<f64> = left.iter_rows().map(|r| dot(self.head.left_weight(), r)).collect();
        let pr: Vec<f64> = right.iter_rows().map(|r| dot(self.head.right_weight(), r)).collect();
        let mut out = Matrix::zeros(left.rows(), right.rows());
        for (i, &a) in pl.iter().enumerate() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&pr) {
                *o = a + b + self.head.bias;
            }
        }
        out
    }
}

impl DifferenceModel for SiameseModel {
    fn difference_matrix(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        let ea = self.embed(a)?;
        let eb = self.embed(b)?;
        Ok(self.head_matrix(&ea, &eb))
    }
}

impl Parameters for SiameseModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.subnet.param_slices();
        v.push(&self.head.weight);
        v.push(core::slice::from_ref(&self.head.bias));
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.subnet.param_slices_mut();
        v.push(&mut self.head.weight);
        v.push(core::slice::from_mut(&mut self.head.bias));
        v
    }
}

impl Parameters for SiameseGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.subnet.param_slices();
        v.push(&self.head_weight);
        v.push(core::slice::from_ref(&self.head_bias));
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.subnet.param_slices_mut();
        v.push(&mut self.head_weight);
        v.push(core::slice::from_mut(&mut self.head_bias));
        v
    }
}
