//! Dense multilayer perceptrons over [`ParamsView`] slices.
//!
//! Parameters for a network with prefix `p` live in tensors `p.w0`, `p.b0`,
//! `p.w1`, ... Forward passes cache layer inputs and pre-activations so the
//! backward pass can accumulate exact reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::{GradBuf, ParamsView, TensorShape};
use crate::nn::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width; at least two entries.
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden: Activation, output: OutputActivation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(
                "an MLP needs at least input and output sizes".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        Ok(MlpSpec {
            layer_sizes,
            hidden_activation: hidden,
            output_activation: output,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Shape-table entries for this network under a name prefix.
    pub fn shape_entries(&self, prefix: &str) -> Vec<TensorShape> {
        let mut entries = Vec::new();
        for (i, w) in self.layer_sizes.windows(2).enumerate() {
            entries.push(TensorShape {
                name: format!("{prefix}.w{i}"),
                dims: vec![w[0], w[1]],
            });
            entries.push(TensorShape {
                name: format!("{prefix}.b{i}"),
                dims: vec![w[1]],
            });
        }
        entries
    }
}

fn apply_hidden<T: Real>(act: Activation, z: &Array2<T>) -> Array2<T> {
    match act {
        Activation::Relu => z.mapv(|v| v.relu()),
        Activation::Tanh => z.mapv(|v| v.tanh()),
    }
}

fn hidden_grad_inplace<T: Real>(act: Activation, z: &Array2<T>, delta: &mut Array2<T>) {
    match act {
        Activation::Relu => delta.zip_mut_with(z, |d, &zv| *d = *d * zv.relu_grad()),
        Activation::Tanh => delta.zip_mut_with(z, |d, &zv| {
            let t = zv.tanh();
            *d = *d * (T::one() - t * t);
        }),
    }
}

/// Forward activations cached for the backward pass.
pub struct MlpCache<T> {
    /// Input to each affine layer (length = n_layers).
    layer_inputs: Vec<Array2<T>>,
    /// Pre-activation output of each affine layer.
    preacts: Vec<Array2<T>>,
}

/// Forward pass up to (but not including) the output activation.
pub fn forward_logits_cached<T: Real>(
    spec: &MlpSpec,
    params: ParamsView<'_, T>,
    prefix: &str,
    input: ArrayView2<'_, T>,
) -> (Array2<T>, MlpCache<T>) {
    let n = spec.n_layers();
    let mut layer_inputs = Vec::with_capacity(n);
    let mut preacts = Vec::with_capacity(n);
    let mut a = input.to_owned();
    for i in 0..n {
        let w = params.matrix(&format!("{prefix}.w{i}"));
        let b = params.vector(&format!("{prefix}.b{i}"));
        let mut z = a.dot(&w);
        for mut row in z.rows_mut() {
            row.zip_mut_with(&b, |zv, &bv| *zv = *zv + bv);
        }
        layer_inputs.push(a);
        preacts.push(z.clone());
        a = if i + 1 < n {
            apply_hidden(spec.hidden_activation, &z)
        } else {
            z
        };
    }
    (a, MlpCache { layer_inputs, preacts })
}

/// Full forward pass including the output activation.
pub fn forward<T: Real>(
    spec: &MlpSpec,
    params: ParamsView<'_, T>,
    prefix: &str,
    input: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    if input.ncols() != spec.input_width() {
        return Err(Error::DimensionMismatch(format!(
            "input width {} != first layer size {}",
            input.ncols(),
            spec.input_width()
        )));
    }
    let (logits, _) = forward_logits_cached(spec, params, prefix, input);
    Ok(match spec.output_activation {
        OutputActivation::Identity => logits,
        OutputActivation::Sigmoid => logits.mapv(|v| v.sigmoid()),
    })
}

/// Backward pass from a gradient w.r.t. the logits (pre-output-activation).
///
/// Accumulates weight/bias gradients into `grads` and returns the gradient
/// w.r.t. the network input.
pub fn backward_from_logits<T: Real>(
    spec: &MlpSpec,
    params: ParamsView<'_, T>,
    prefix: &str,
    cache: &MlpCache<T>,
    grad_logits: Array2<T>,
    grads: &mut GradBuf<T>,
) -> Array2<T> {
    let n = spec.n_layers();
    let mut delta = grad_logits;
    for i in (0..n).rev() {
        if i + 1 < n {
            hidden_grad_inplace(spec.hidden_activation, &cache.preacts[i], &mut delta);
        }
        let dw = cache.layer_inputs[i].t().dot(&delta);
        {
            let mut gw = grads.matrix_mut(&format!("{prefix}.w{i}"));
            gw.zip_mut_with(&dw, |g, &d| *g = *g + d);
        }
        let db: Array1<T> = delta.sum_axis(Axis(0));
        {
            let mut gb = grads.vector_mut(&format!("{prefix}.b{i}"));
            gb.zip_mut_with(&db, |g, &d| *g = *g + d);
        }
        let w = params.matrix(&format!("{prefix}.w{i}"));
        delta = delta.dot(&w.t());
    }
    delta
}
