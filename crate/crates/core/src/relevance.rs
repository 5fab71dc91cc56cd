//! Relevance weighting of the learned spectrogram.
//!
//! Every time-frequency bin `(i, t)` is scored by a small shared two-layer
//! network looking at the 51 frames before and the 51 frames after `t` in
//! sub-band `i` (the bin itself is excluded). The sigmoid of the score is the
//! mask `M[i, t]`, and the weighted representation is `J = I ⊗ M`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Dense, Parameters};
use crate::rng::Rng;

/// Frames of context on each side of the scored bin.
pub const CONTEXT_SIDE: usize = 51;
pub const CONTEXT_DIM: usize = 2 * CONTEXT_SIDE;
pub const DEFAULT_HIDDEN: usize = 51;

/// Shared bin scorer: `sigmoid(W2ᵀ tanh(W1ᵀ ctx + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceNet {
    pub hidden: Dense,
    pub out: Dense,
}

impl RelevanceNet {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden: Dense::zeros(CONTEXT_DIM, hidden),
            out: Dense::zeros(hidden, 1),
        }
    }

    pub fn random(hidden: usize, rng: &mut Rng) -> Self {
        Self {
            hidden: Dense::random(CONTEXT_DIM, hidden, rng),
            out: Dense::random(hidden, 1, rng),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden.n_out()
    }

    fn check(&self) -> Result<()> {
        if self.hidden.n_in() != CONTEXT_DIM
            || self.out.n_in() != self.hidden.n_out()
            || self.out.n_out() != 1
        {
            return Err(Error::Shape(format!(
                "relevance net must be {CONTEXT_DIM}→H→1, got {}→{} / {}→{}",
                self.hidden.n_in(),
                self.hidden.n_out(),
                self.out.n_in(),
                self.out.n_out()
            )));
        }
        Ok(())
    }
}

impl Parameters for RelevanceNet {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.hidden.params();
        v.extend(self.out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.hidden.params_mut();
        v.extend(self.out.params_mut());
        v
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.hidden_size())
    }
}

/// `F × T` mask with entries in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMask {
    pub values: Array2<f64>,
}

/// `J = I ⊗ M`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSpectrogram {
    pub values: Array2<f64>,
}

#[inline]
fn context_index(t: usize, k: usize, n_t: usize) -> usize {
    let tau = if k < CONTEXT_SIDE {
        t as isize - (CONTEXT_SIDE - k) as isize
    } else {
        t as isize + (k - CONTEXT_SIDE + 1) as isize
    };
    tau.clamp(0, n_t as isize - 1) as usize
}

/// `[I[i, t−51..t−1], I[i, t+1..t+51]]` with edge replication.
pub fn extract_context(spec: ArrayView2<f64>, t: usize, i: usize) -> Array1<f64> {
    let n_t = spec.ncols();
    let row = spec.row(i);
    Array1::from_shape_fn(CONTEXT_DIM, |k| row[context_index(t, k, n_t)])
}

fn context_matrix(spec: ArrayView2<f64>, i: usize) -> Array2<f64> {
    let n_t = spec.ncols();
    let row = spec.row(i);
    Array2::from_shape_fn((n_t, CONTEXT_DIM), |(t, k)| row[context_index(t, k, n_t)])
}

#[derive(Debug, Clone)]
pub struct RelevanceCache {
    net: RelevanceNet,
    input: Array2<f64>,
    mask: Array2<f64>,
    /// Per filter: context rows and hidden activations.
    contexts: Vec<Array2<f64>>,
    activations: Vec<Array2<f64>>,
}

pub fn relevance_forward(spec: ArrayView2<f64>, net: &RelevanceNet) -> Result<(RelevanceMask, RelevanceCache)> {
    net.check()?;
    let (n_f, n_t) = spec.dim();
    let mut mask = Array2::zeros((n_f, n_t));
    let mut contexts = Vec::with_capacity(n_f);
    let mut activations = Vec::with_capacity(n_f);
    for i in 0..n_f {
        let ctx = context_matrix(spec, i);
        let act = net.hidden.forward_rows(ctx.view())?.mapv(f64::tanh);
        let score = net.out.forward_rows(act.view())?;
        for t in 0..n_t {
            mask[[i, t]] = sigmoid(score[[t, 0]]);
        }
        contexts.push(ctx);
        activations.push(act);
    }
    Ok((
        RelevanceMask {
            values: mask.clone(),
        },
        RelevanceCache {
            net: net.clone(),
            input: spec.to_owned(),
            mask,
            contexts,
            activations,
        },
    ))
}

pub fn apply_mask(spec: ArrayView2<f64>, mask: &RelevanceMask) -> Result<WeightedSpectrogram> {
    if spec.dim() != mask.values.dim() {
        return Err(Error::Shape(format!(
            "spectrogram {:?} vs mask {:?}",
            spec.dim(),
            mask.values.dim()
        )));
    }
    Ok(WeightedSpectrogram {
        values: &spec * &mask.values,
    })
}

/// Gradients through `J = I ⊗ M(I)`: returns `∂loss/∂I` (direct term plus
/// the path through the context windows) and the network gradients.
pub fn relevance_backward(grad_j: ArrayView2<f64>, cache: &RelevanceCache) -> Result<(Array2<f64>, RelevanceNet)> {
    let (n_f, n_t) = cache.input.dim();
    if grad_j.dim() != (n_f, n_t) {
        return Err(Error::Shape(format!(
            "grad_J is {:?}, expected {:?}",
            grad_j.dim(),
            (n_f, n_t)
        )));
    }
    let net = &cache.net;
    let mut grads = net.zeros_like();
    // direct path
    let mut grad_i = &grad_j * &cache.mask;
    for i in 0..n_f {
        // ∂loss/∂score = grad_J · I · m (1 − m)
        let dscore = Array2::from_shape_fn((n_t, 1), |(t, _)| {
            let m = cache.mask[[i, t]];
            grad_j[[i, t]] * cache.input[[i, t]] * m * (1.0 - m)
        });
        let act = &cache.activations[i];
        let dact = net.out.backward_rows(act.view(), dscore.view(), &mut grads.out)?;
        let dpre = dact * &act.mapv(|a| 1.0 - a * a);
        let dctx = net
            .hidden
            .backward_rows(cache.contexts[i].view(), dpre.view(), &mut grads.hidden)?;
        let mut row = grad_i.row_mut(i);
        for t in 0..n_t {
            for k in 0..CONTEXT_DIM {
                row[context_index(t, k, n_t)] += dctx[[t, k]];
            }
        }
    }
    Ok((grad_i, grads))
}

/// Mean of the mask per filter; handy for summaries.
pub fn mean_relevance(mask: &RelevanceMask) -> Array1<f64> {
    mask.values.mean_axis(Axis(1)).unwrap_or_else(|| Array1::zeros(0))
}
