//! Small hand-differentiated neural toolkit: dense layers, (bi)LSTMs with
//! backpropagation through time, losses, Adam and a finite-difference
//! gradient checker. Everything is `f64`.

mod adam;
mod dense;
mod gradcheck;
mod loss;
mod lstm;

pub use adam::{AdamConfig, AdamState};
pub use dense::Dense;
pub use gradcheck::{grad_check, grad_check_subset};
pub use loss::{bce_loss, bce_with_logit, info_nce_loss, sigmoid, softplus};
pub use lstm::{BiLstm, BiLstmCache, LstmCell, LstmSeqCache, LstmStep};

use crate::rng::{self, Rng};

/// A bundle of trainable arrays, exposed as flat slices in a fixed order.
///
/// Gradients for a layer are stored in a value of the same type (see
/// [`Parameters::zeros_like`]), so optimizer code can zip the two slice lists.
pub trait Parameters: Sized {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.params().concat()
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter vector has the wrong length");
    }

    /// `self += other`, slice by slice.
    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, k: f64) {
        for p in self.params_mut() {
            for x in p.iter_mut() {
                *x *= k;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn uniform_fill(rng: &mut Rng, data: &mut [f64], bound: f64) {
    for v in data {
        *v = rng::uniform(rng, -bound, bound);
    }
}
