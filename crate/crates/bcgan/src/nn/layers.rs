use crate::error::{Error, Result};
use crate::rng::Rng;

use super::Tensor;

pub const LEAKY_SLOPE: f32 = 0.2;

/// Elementwise activation. The gradient is taken at the cached pre-activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    LeakyRelu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    /// f64 twin of [`Activation::apply`], for finite-difference reference
    /// evaluations where f32 rounding would drown the difference signal.
    #[inline]
    pub fn apply_f64(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE as f64 * x
                }
            }
        }
    }

    /// Derivative at pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f32) -> f32 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

/// Fully connected layer: y = W x + b, W is (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Cache for the backward pass of one dense application.
pub struct DenseCache {
    /// Layer input, batch x in.
    pub input: Vec<f32>,
    pub batch: usize,
}

impl Dense {
    /// Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)].
    pub fn init(input_dim: usize, output_dim: usize, rng: &mut Rng) -> Self {
        let bound = (1.0 / input_dim as f64).sqrt();
        let w = (0..input_dim * output_dim)
            .map(|_| ((rng.next_f64() * 2.0 - 1.0) * bound) as f32)
            .collect();
        Dense {
            weights: Tensor::new(vec![output_dim, input_dim], w).unwrap(),
            bias: Tensor::zeros(vec![output_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    /// Forward over a batch: input is batch x in, output batch x out.
    pub fn forward(&self, input: &[f32], batch: usize) -> Result<Vec<f32>> {
        let (out_dim, in_dim) = (self.output_dim(), self.input_dim());
        if input.len() != batch * in_dim {
            return Err(Error::ShapeMismatch(format!(
                "dense forward: input has {} values, expected {} (batch {batch} x {in_dim})",
                input.len(),
                batch * in_dim
            )));
        }
        let w = self.weights.data();
        let b = self.bias.data();
        let mut out = vec![0.0f32; batch * out_dim];
        for bi in 0..batch {
            let x = &input[bi * in_dim..(bi + 1) * in_dim];
            let y = &mut out[bi * out_dim..(bi + 1) * out_dim];
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                let mut acc = 0.0f32;
                for (wi, xi) in row.iter().zip(x) {
                    acc += wi * xi;
                }
                *yo = acc + b[o];
            }
        }
        Ok(out)
    }

    /// Single-sample forward accumulated in f64. Parameters stay f32; only
    /// the arithmetic is widened, so this is a smooth function of the stored
    /// weights and suits finite-difference gradient references.
    pub fn forward_f64(&self, input: &[f64]) -> Result<Vec<f64>> {
        let (out_dim, in_dim) = (self.output_dim(), self.input_dim());
        if input.len() != in_dim {
            return Err(Error::ShapeMismatch("dense forward_f64".into()));
        }
        let w = self.weights.data();
        let b = self.bias.data();
        let mut out = vec![0.0f64; out_dim];
        for (o, yo) in out.iter_mut().enumerate() {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = 0.0f64;
            for (wi, xi) in row.iter().zip(input) {
                acc += *wi as f64 * xi;
            }
            *yo = acc + b[o] as f64;
        }
        Ok(out)
    }

    /// Backward over a batch; returns (d_input, d_weights, d_bias).
    pub fn backward(
        &self,
        input: &[f32],
        upstream: &[f32],
        batch: usize,
    ) -> Result<(Vec<f32>, Tensor, Tensor)> {
        let (out_dim, in_dim) = (self.output_dim(), self.input_dim());
        if input.len() != batch * in_dim || upstream.len() != batch * out_dim {
            return Err(Error::ShapeMismatch("dense backward".into()));
        }
        let w = self.weights.data();
        let mut d_input = vec![0.0f32; batch * in_dim];
        let mut dw = Tensor::zeros(vec![out_dim, in_dim]);
        let mut db = Tensor::zeros(vec![out_dim]);
        {
            let dw = dw.data_mut();
            let db = db.data_mut();
            for bi in 0..batch {
                let x = &input[bi * in_dim..(bi + 1) * in_dim];
                let dy = &upstream[bi * out_dim..(bi + 1) * out_dim];
                let dx = &mut d_input[bi * in_dim..(bi + 1) * in_dim];
                for (o, &g) in dy.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let wrow = &w[o * in_dim..(o + 1) * in_dim];
                    let dwrow = &mut dw[o * in_dim..(o + 1) * in_dim];
                    for i in 0..in_dim {
                        dx[i] += g * wrow[i];
                        dwrow[i] += g * x[i];
                    }
                    db[o] += g;
                }
            }
        }
        Ok((d_input, dw, db))
    }
}

/// A stack of dense layers with optional per-layer activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activations: Vec<Option<Activation>>,
}

/// Per-layer inputs and pre-activations from a forward pass.
pub struct MlpCache {
    pub inputs: Vec<Vec<f32>>,
    pub pre_activations: Vec<Vec<f32>>,
    pub batch: usize,
}

impl Mlp {
    /// Build from (in, out, activation) layer specs.
    pub fn init(specs: &[(usize, usize, Option<Activation>)], rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(specs.len());
        let mut activations = Vec::with_capacity(specs.len());
        for &(i, o, act) in specs {
            layers.push(Dense::init(i, o, rng));
            activations.push(act);
        }
        Mlp {
            layers,
            activations,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn forward(&self, input: &[f32], batch: usize) -> Result<(Vec<f32>, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
            batch,
        };
        let mut cur = input.to_vec();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let pre = layer.forward(&cur, batch)?;
            cache.inputs.push(cur);
            let post = match act {
                Some(a) => pre.iter().map(|&x| a.apply(x)).collect(),
                None => pre.clone(),
            };
            cache.pre_activations.push(pre);
            cur = post;
        }
        Ok((cur, cache))
    }

    /// Single-sample forward in f64, without caches; see
    /// [`Dense::forward_f64`].
    pub fn forward_f64(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cur = input.to_vec();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            cur = layer.forward_f64(&cur)?;
            if let Some(a) = act {
                for x in &mut cur {
                    *x = a.apply_f64(*x);
                }
            }
        }
        Ok(cur)
    }

    /// Backward; returns (d_input, per-layer (d_weights, d_bias)).
    pub fn backward(
        &self,
        cache: &MlpCache,
        upstream: &[f32],
    ) -> Result<(Vec<f32>, Vec<(Tensor, Tensor)>)> {
        let mut grads = vec![None; self.layers.len()];
        let mut dy = upstream.to_vec();
        for li in (0..self.layers.len()).rev() {
            if let Some(a) = self.activations[li] {
                for (g, &pre) in dy.iter_mut().zip(&cache.pre_activations[li]) {
                    *g *= a.derivative(pre);
                }
            }
            let (dx, dw, db) =
                self.layers[li].backward(&cache.inputs[li], &dy, cache.batch)?;
            grads[li] = Some((dw, db));
            dy = dx;
        }
        Ok((dy, grads.into_iter().map(|g| g.unwrap()).collect()))
    }

    pub fn param_tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }
}

/// Learnable embedding table, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    pub rows: Tensor,
}

impl LookupTable {
    /// Rows initialized from normal(0, 0.02).
    pub fn init(num_entries: usize, dim: usize, rng: &mut Rng) -> Self {
        assert!(num_entries >= 1);
        let data = (0..num_entries * dim)
            .map(|_| (rng.next_normal() * 0.02) as f32)
            .collect();
        LookupTable {
            rows: Tensor::new(vec![num_entries, dim], data).unwrap(),
        }
    }

    pub fn num_entries(&self) -> usize {
        self.rows.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn embed(&self, index: usize) -> Result<Vec<f32>> {
        if index >= self.num_entries() {
            return Err(Error::LookupOutOfRange {
                index,
                len: self.num_entries(),
            });
        }
        let d = self.dim();
        Ok(self.rows.data()[index * d..(index + 1) * d].to_vec())
    }

    /// Accumulate the upstream gradient into the selected row only.
    pub fn accumulate_grad(
        &self,
        grad: &mut Tensor,
        index: usize,
        upstream: &[f32],
    ) -> Result<()> {
        if index >= self.num_entries() {
            return Err(Error::LookupOutOfRange {
                index,
                len: self.num_entries(),
            });
        }
        let d = self.dim();
        if upstream.len() != d || grad.shape() != self.rows.shape() {
            return Err(Error::ShapeMismatch("lookup backward".into()));
        }
        for (g, &u) in grad.data_mut()[index * d..(index + 1) * d]
            .iter_mut()
            .zip(upstream)
        {
            *g += u;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passthrough() {
        let mut w = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let layer = Dense {
            weights: w,
            bias: Tensor::zeros(vec![3]),
        };
        let x = vec![0.5, -1.0, 2.0];
        assert_eq!(layer.forward(&x, 1).unwrap(), x);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let layer = Dense {
            weights: Tensor::zeros(vec![2, 3]),
            bias: Tensor::new(vec![2], vec![4.0, -1.5]).unwrap(),
        };
        assert_eq!(
            layer.forward(&[1.0, 2.0, 3.0], 1).unwrap(),
            vec![4.0, -1.5]
        );
    }

    #[test]
    fn forward_shape_mismatch() {
        let layer = Dense {
            weights: Tensor::zeros(vec![2, 3]),
            bias: Tensor::zeros(vec![2]),
        };
        assert!(layer.forward(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        for x in [-3.0f32, -0.1, 0.0, 0.1, 5.0] {
            let y = Activation::Tanh.apply(x);
            assert!(y > -1.0 && y < 1.0);
        }
        assert!((Activation::LeakyRelu.apply(-1.0) + 0.2).abs() < 1e-7);
        assert_eq!(Activation::LeakyRelu.apply(2.0), 2.0);
    }

    #[test]
    fn lookup_basics() {
        let mut rows = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            rows.data_mut()[i * 3 + i] = 1.0;
        }
        let table = LookupTable { rows };
        assert_eq!(table.embed(2).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(table.embed(3).is_err());

        let mut grad = Tensor::zeros(vec![3, 3]);
        table
            .accumulate_grad(&mut grad, 1, &[1.0, 2.0, 3.0])
            .unwrap();
        assert_eq!(&grad.data()[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&grad.data()[3..6], &[1.0, 2.0, 3.0]);
        assert_eq!(&grad.data()[6..9], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn deterministic_init() {
        let mut r1 = Rng::seed_from_u64(9);
        let mut r2 = Rng::seed_from_u64(9);
        let a = Mlp::init(&[(4, 8, Some(Activation::Tanh)), (8, 2, None)], &mut r1);
        let b = Mlp::init(&[(4, 8, Some(Activation::Tanh)), (8, 2, None)], &mut r2);
        assert_eq!(a, b);
    }
}
