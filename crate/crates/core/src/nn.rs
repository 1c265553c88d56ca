//! Multilayer perceptron with explicit reverse-mode gradients.
//!
//! Each layer computes `act(x Wᵀ + b)` with `W` stored `[fan_out × fan_in]`.
//! Batches are row-major `[b × fan_in]`. Gradients are accumulated over rows in
//! ascending order, so results are bitwise reproducible.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `max(0, x)`; the derivative at exactly 0 is taken as 0.
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }
}

/// Flat access to trainable arrays, in a fixed order.
///
/// Implemented by parameter stores and by their gradients, so optimizers and
/// the gradient checker can walk both in lockstep.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for s in self.param_slices() {
            out.extend_from_slice(s);
        }
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::shape("Parameters::load_flat", n, flat.len()));
        }
        let mut off = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer pre- and post-activations kept by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardRecord {
    input: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl ForwardRecord {
    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }

    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap_or(&self.input)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients of a scalar with respect to every array of an [`Mlp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Gradients {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.fan_out(), l.fan_in()),
                    bias: alloc::vec![0.0; l.fan_out()],
                })
                .collect(),
        }
    }

    /// Elementwise `self += other`. Shapes must agree.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

impl Parameters for Gradients {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            v.push(l.weight.as_slice());
            v.push(l.bias.as_slice());
        }
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            v.push(l.weight.as_mut_slice());
            v.push(l.bias.as_mut_slice());
        }
        v
    }
}

impl Parameters for Mlp {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            v.push(l.weight.as_slice());
            v.push(l.bias.as_slice());
        }
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            v.push(l.weight.as_mut_slice());
            v.push(l.bias.as_mut_slice());
        }
        v
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidLayerSizes(format!(
            "need at least 2 sizes, got {}",
            sizes.len()
        )));
    }
    if let Some(pos) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidLayerSizes(format!("size at position {pos} is zero")));
    }
    Ok(())
}

impl Mlp {
    /// Rectifier on hidden layers, identity on the output layer.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let n = sizes.len() - 1;
        let acts: Vec<Activation> = (0..n)
            .map(|i| {
                if i + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                }
            })
            .collect();
        Self::init_with_activations(sizes, &acts, seed)
    }

    /// Weights uniform in `[-1/√fan_in, 1/√fan_in]`, biases zero.
    pub fn init_with_activations(
        sizes: &[usize],
        activations: &[Activation],
        seed: u64,
    ) -> Result<Self> {
        check_sizes(sizes)?;
        if activations.len() != sizes.len() - 1 {
            return Err(Error::shape(
                "Mlp activations",
                sizes.len() - 1,
                activations.len(),
            ));
        }
        let mut rng = seed::rng(seed);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Layer {
                    weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized above"),
                    bias: alloc::vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// Assembles a network from explicit layers, checking that adjacent
    /// dimensions agree and every entry is finite.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidLayerSizes("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.fan_in() == 0 || l.fan_out() == 0 {
                return Err(Error::InvalidLayerSizes(format!("layer {i} has a zero dimension")));
            }
            if l.bias.len() != l.fan_out() {
                return Err(Error::shape("Mlp layer bias", l.fan_out(), l.bias.len()));
            }
            if i > 0 && layers[i - 1].fan_out() != l.fan_in() {
                return Err(Error::shape("Mlp adjacent layers", layers[i - 1].fan_out(), l.fan_in()));
            }
            if let Some(index) = l
                .weight
                .as_slice()
                .iter()
                .chain(&l.bias)
                .position(|v| !v.is_finite())
            {
                return Err(Error::NonFinite {
                    context: "Mlp parameters",
                    index,
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.layers.len() + 1);
        s.push(self.input_dim());
        s.extend(self.layers.iter().map(Layer::fan_out));
        s
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardRecord> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape("Mlp::forward input width", self.input_dim(), batch.cols()));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().unwrap_or(batch);
            let mut z = Matrix::zeros(x.rows(), layer.fan_out());
            let mut a = Matrix::zeros(x.rows(), layer.fan_out());
            for r in 0..x.rows() {
                let xr = x.row(r);
                let zr = z.row_mut(r);
                for (o, zo) in zr.iter_mut().enumerate() {
                    *zo = layer.bias[o] + dot(layer.weight.row(o), xr);
                }
                for (ao, &zo) in a.row_mut(r).iter_mut().zip(z.row(r)) {
                    *ao = layer.activation.apply(zo);
                }
            }
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardRecord {
            input: batch.clone(),
            pre,
            post,
        })
    }

    /// Convenience wrapper returning only the network output.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        let mut rec = self.forward(batch)?;
        Ok(rec.post.pop().unwrap_or_else(|| batch.clone()))
    }

    /// Reverse pass. `output_grad` is `∂L/∂output` for the batch in `acts`.
    /// Returns parameter gradients and `∂L/∂input`.
    pub fn backward(&self, acts: &ForwardRecord, output_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        if acts.pre.len() != self.layers.len() {
            return Err(Error::shape("Mlp::backward record depth", self.layers.len(), acts.pre.len()));
        }
        let b = acts.input.rows();
        if output_grad.rows() != b || output_grad.cols() != self.output_dim() {
            return Err(Error::shape(
                "Mlp::backward output_grad",
                b * self.output_dim(),
                output_grad.rows() * output_grad.cols(),
            ));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut upstream = output_grad.clone();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let x = if li == 0 { &acts.input } else { &acts.post[li - 1] };
            let z = &acts.pre[li];
            let mut delta = upstream;
            for (d, &zv) in delta.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *d *= layer.activation.derivative(zv);
            }
            let g = &mut grads.layers[li];
            let mut down = Matrix::zeros(b, layer.fan_in());
            for r in 0..b {
                let dr = delta.row(r);
                let xr = x.row(r);
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    for (gw, &xv) in g.weight.row_mut(o).iter_mut().zip(xr) {
                        *gw += d * xv;
                    }
                    for (dx, &w) in down.row_mut(r).iter_mut().zip(layer.weight.row(o)) {
                        *dx += d * w;
                    }
                }
            }
            upstream = down;
        }
        Ok((grads, upstream))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use alloc::vec;

    #[test]
    fn init_shapes_and_zero_bias() {
        let m = Mlp::init(&[13, 100, 100], 7).unwrap();
        assert_eq!(m.layers().len(), 2);
        assert_eq!((m.layers()[0].weight.rows(), m.layers()[0].weight.cols()), (100, 13));
        assert_eq!((m.layers()[1].weight.rows(), m.layers()[1].weight.cols()), (100, 100));
        assert!(m.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let bound = 1.0 / libm::sqrt(13.0);
        assert!(m.layers()[0].weight.as_slice().iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::init(&[4, 8, 2], 11).unwrap();
        let b = Mlp::init(&[4, 8, 2], 11).unwrap();
        let c = Mlp::init(&[4, 8, 2], 12).unwrap();
        assert_eq!(a.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_degenerate_sizes() {
        assert!(matches!(Mlp::init(&[5], 0), Err(Error::InvalidLayerSizes(_))));
        assert!(Mlp::init(&[5, 0, 1], 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut m = Mlp::init(&[3, 4, 2], 1).unwrap();
        let n = m.num_params();
        m.load_flat(&vec![0.0; n]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 9.0]]).unwrap();
        assert!(m.predict(&x).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let m = Mlp::from_layers(vec![Layer {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.5]]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), x);
    }

    #[test]
    fn output_shape_matches_batch() {
        let m = Mlp::init(&[5, 7, 6, 3], 2).unwrap();
        let x = Matrix::zeros(4, 5);
        let y = m.predict(&x).unwrap();
        assert_eq!((y.rows(), y.cols()), (4, 3));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = Mlp::init(&[5, 3], 2).unwrap();
        assert!(matches!(m.forward(&Matrix::zeros(2, 4)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn from_layers_rejects_incompatible_dims() {
        let l1 = Layer { weight: Matrix::zeros(3, 2), bias: vec![0.0; 3], activation: Activation::Relu };
        let l2 = Layer { weight: Matrix::zeros(1, 4), bias: vec![0.0; 1], activation: Activation::Identity };
        assert!(Mlp::from_layers(vec![l1, l2]).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let m = Mlp::init(&[3, 5, 2], 3).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]]).unwrap();
        let rec = m.forward(&x).unwrap();
        let (g, dx) = m.backward(&rec, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.is_zero());
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_grad_is_outer_product_sum() {
        let m = Mlp::init(&[2, 2], 4).unwrap();
        let m = Mlp::from_layers(vec![Layer { activation: Activation::Identity, ..m.layers()[0].clone() }]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let g = Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25]]).unwrap();
        let rec = m.forward(&x).unwrap();
        let (grads, _) = m.backward(&rec, &g).unwrap();
        // dW[o][i] = sum_r g[r][o] * x[r][i]
        let expected = [0.5 * 1.0 + 2.0 * 3.0, 0.5 * 2.0 + 2.0 * -1.0, -1.0 * 1.0 + 0.25 * 3.0, -1.0 * 2.0 + 0.25 * -1.0];
        assert_eq!(grads.layers[0].weight.as_slice(), &expected);
        assert_eq!(grads.layers[0].bias, vec![2.5, -0.75]);
    }

    #[test]
    fn relu_blocks_gradient_where_pre_activation_nonpositive() {
        let m = Mlp::from_layers(vec![Layer {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
            activation: Activation::Relu,
        }])
        .unwrap();
        let x = Matrix::from_rows(&[[-1.0, 0.0, 2.0]]).unwrap();
        let rec = m.forward(&x).unwrap();
        let (_, dx) = m.backward(&rec, &Matrix::from_rows(&[[1.0, 1.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(dx.as_slice(), &[0.0, 0.0, 1.0]);
    }

    /// Scalar loss `0.5 * sum(out ⊙ c)` style probe: L = Σ c ⊙ output.
    fn probe_loss(m: &Mlp, x: &Matrix, c: &Matrix) -> (f64, Vec<f64>) {
        let rec = m.forward(x).unwrap();
        let out = rec.output();
        let l: f64 = out.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum();
        let (g, _) = m.backward(&rec, c).unwrap();
        (l, g.to_flat())
    }

    #[test]
    fn backward_matches_central_differences() {
        let m = Mlp::init(&[4, 6, 5, 2], 21).unwrap();
        let mut rng = seed::rng(5);
        let x = Matrix::from_vec(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let c = Matrix::from_vec(3, 2, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let dev = grad_check(|p: &Mlp| Ok(probe_loss(p, &x, &c)), &m, 1e-4, None).unwrap();
        assert!(dev < 1e-4, "deviation {dev}");
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let m = Mlp::init(&[3, 5, 1], 8).unwrap();
        let x = [0.3, -0.7, 0.9];
        let rec = m.forward(&Matrix::from_rows(&[x]).unwrap()).unwrap();
        let (_, dx) = m.backward(&rec, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fp = m.predict(&Matrix::from_rows(&[xp]).unwrap()).unwrap().get(0, 0);
            let fm = m.predict(&Matrix::from_rows(&[xm]).unwrap()).unwrap().get(0, 0);
            let num = (fp - fm) / (2.0 * h);
            assert!((num - dx.get(0, i)).abs() < 1e-7, "coord {i}: {num} vs {}", dx.get(0, i));
        }
    }
}
