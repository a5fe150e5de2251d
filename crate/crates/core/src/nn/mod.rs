//! Multilayer perceptrons with analytic gradients.
//!
//! Architecture: a stack of dense layers, LeakyReLU after every hidden layer,
//! linear output. Forward passes cache per-layer inputs and pre-activations;
//! [`Mlp::backward`] replays them to produce exact gradients for every weight
//! and bias plus the gradient with respect to the input batch. Optimizer state
//! and the gradient checker live in [`adam`] and [`gradcheck`].

pub mod adam;
pub mod gradcheck;

pub use adam::{AdamHyper, AdamState};
pub use gradcheck::{finite_diff_gradcheck, FlatParams, GradCheckReport};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Shape and activation description of an MLP.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    /// Layer widths from input to output; `dims.len() - 1` dense layers.
    pub dims: Vec<usize>,
    /// Negative-side slope of the LeakyReLU on hidden layers.
    pub leaky_slope: f64,
}

impl MlpSpec {
    pub fn new(dims: Vec<usize>, leaky_slope: f64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "MLP needs at least input and output dims, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "MLP layer widths must be positive, got {dims:?}"
            )));
        }
        if !(leaky_slope.is_finite() && (0.0..1.0).contains(&leaky_slope)) {
            return Err(Error::InvalidArgument(format!(
                "LeakyReLU slope must lie in [0, 1), got {leaky_slope}"
            )));
        }
        Ok(MlpSpec { dims, leaky_slope })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }
}

/// One dense layer: `output = input * w + b`, with `w` shaped `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// All trainable parameters of an MLP. The same container doubles as the
/// gradient type: gradients returned by [`Mlp::backward`] mirror these shapes
/// block for block.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// Glorot-uniform initialization: weights drawn from
    /// `U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))`, biases zero.
    pub fn init(spec: &MlpSpec, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(spec.n_layers());
        for l in 0..spec.n_layers() {
            let (fan_in, fan_out) = (spec.dims[l], spec.dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_range(-bound, bound));
            layers.push(DenseLayer {
                w,
                b: vec![0.0; fan_out],
            });
        }
        MlpParams { layers }
    }

    /// Same shapes, all zeros — the starting point for gradient accumulation
    /// and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    w: Matrix::zeros(l.w.rows(), l.w.cols()),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.rows() * l.w.cols() + l.b.len())
            .sum()
    }

    /// Errors (naming the block) if any parameter is non-finite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            layer
                .w
                .check_finite(&format!("{what} layer {i} weights"))?;
            if layer.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("{what} layer {i} bias"),
                });
            }
        }
        Ok(())
    }
}

/// Cached intermediates from a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the batch itself for layer 0, then activations).
    layer_inputs: Vec<Matrix>,
    /// Pre-activation values `z = input * w + b` per layer.
    pre_acts: Vec<Matrix>,
}

/// An MLP bundled with its shape spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Mlp {
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Self {
        let params = MlpParams::init(&spec, rng);
        Mlp { spec, params }
    }

    /// Forward pass returning the output batch and the cache needed for
    /// [`Mlp::backward`]. `x` is `[batch, input_dim]`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(x)?;
        let n_layers = self.spec.n_layers();
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut pre_acts = Vec::with_capacity(n_layers);
        let mut h = x.clone();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.w);
            z.add_row_vector(&layer.b);
            layer_inputs.push(h);
            let is_hidden = l + 1 < n_layers;
            h = if is_hidden {
                let mut a = z.clone();
                let slope = self.spec.leaky_slope;
                a.map_inplace(|v| if v > 0.0 { v } else { slope * v });
                a
            } else {
                z.clone()
            };
            pre_acts.push(z);
        }
        Ok((
            h,
            ForwardCache {
                layer_inputs,
                pre_acts,
            },
        ))
    }

    /// Forward pass without caching, for inference-only callers.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let n_layers = self.spec.n_layers();
        let mut h = x.clone();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.w);
            z.add_row_vector(&layer.b);
            if l + 1 < n_layers {
                let slope = self.spec.leaky_slope;
                z.map_inplace(|v| if v > 0.0 { v } else { slope * v });
            }
            h = z;
        }
        Ok(h)
    }

    /// Backpropagation. `upstream` is `dLoss/dOutput` for the batch the cache
    /// was produced from; returns parameter gradients (shaped like
    /// [`MlpParams`]) and `dLoss/dInput`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(MlpParams, Matrix)> {
        let n_layers = self.spec.n_layers();
        let out = self.spec.output_dim();
        if upstream.cols() != out || upstream.rows() != cache.pre_acts[0].rows() {
            return Err(Error::shape(
                "Mlp::backward upstream",
                format!("{}x{}", cache.pre_acts[0].rows(), out),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let mut grads = self.params.zeros_like();
        let mut g = upstream.clone();
        for l in (0..n_layers).rev() {
            // g arrives as dL/d(post-activation of layer l); fold in the
            // LeakyReLU derivative on hidden layers to get dL/dz.
            if l + 1 < n_layers {
                let z = &cache.pre_acts[l];
                let slope = self.spec.leaky_slope;
                for r in 0..g.rows() {
                    let zr = z.row(r);
                    for (gv, &zv) in g.row_mut(r).iter_mut().zip(zr) {
                        if zv <= 0.0 {
                            *gv *= slope;
                        }
                    }
                }
            }
            grads.layers[l].w = cache.layer_inputs[l].matmul_tn(&g);
            grads.layers[l].b = g.col_sums();
            // For l = 0 this yields dL/dInput, returned to the caller.
            g = g.matmul_nt(&self.params.layers[l].w);
        }
        Ok((grads, g))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.input_dim() {
            return Err(Error::shape(
                "Mlp input",
                format!("batch x {}", self.spec.input_dim()),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        Ok(())
    }
}
