use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{uniform_fill, Parameters};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Affine layer `y = Wᵀx + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: Array2::zeros((n_in, n_out)),
            b: Array1::zeros(n_out),
        }
    }

    /// Uniform(±1/√n_in) weights and biases.
    pub fn random(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let mut d = Self::zeros(n_in, n_out);
        let bound = 1.0 / (n_in as f64).sqrt();
        uniform_fill(rng, d.w.as_slice_mut().unwrap(), bound);
        uniform_fill(rng, d.b.as_slice_mut().unwrap(), bound);
        d
    }

    pub fn n_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.n_in() {
            return Err(Error::Shape(format!(
                "dense input has {} entries, layer expects {}",
                x.len(),
                self.n_in()
            )));
        }
        Ok(x.dot(&self.w) + &self.b)
    }

    /// Accumulates parameter gradients into `grads` and returns `∂/∂x`.
    pub fn backward(&self, x: ArrayView1<f64>, grad_y: ArrayView1<f64>, grads: &mut Dense) -> Result<Array1<f64>> {
        if x.len() != self.n_in() || grad_y.len() != self.n_out() {
            return Err(Error::Shape(format!(
                "dense backward got x[{}], dy[{}] for a {}→{} layer",
                x.len(),
                grad_y.len(),
                self.n_in(),
                self.n_out()
            )));
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                grads.w.row_mut(i).scaled_add(xi, &grad_y);
            }
        }
        grads.b += &grad_y;
        Ok(self.w.dot(&grad_y))
    }

    /// Row-wise forward over a batch `X` (`rows × in`).
    pub fn forward_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_in() {
            return Err(Error::Shape(format!(
                "dense input has {} columns, layer expects {}",
                x.ncols(),
                self.n_in()
            )));
        }
        Ok(x.dot(&self.w) + &self.b)
    }

    /// Batched backward matching [`Dense::forward_rows`].
    pub fn backward_rows(&self, x: ArrayView2<f64>, grad_y: ArrayView2<f64>, grads: &mut Dense) -> Result<Array2<f64>> {
        if x.ncols() != self.n_in() || grad_y.ncols() != self.n_out() || x.nrows() != grad_y.nrows() {
            return Err(Error::Shape("dense batched backward shape mismatch".into()));
        }
        grads.w += &x.t().dot(&grad_y);
        grads.b += &grad_y.sum_axis(Axis(0));
        Ok(grad_y.dot(&self.w.t()))
    }
}

impl Parameters for Dense {
    fn params(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice().unwrap(), self.b.as_slice().unwrap()]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_slice_mut().unwrap(), self.b.as_slice_mut().unwrap()]
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.n_in(), self.n_out())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn zero_and_identity_layers() {
        let x = array![0.3, -1.2, 2.0];
        let z = Dense::zeros(3, 2);
        assert_eq!(z.forward(x.view()).unwrap(), array![0.0, 0.0]);
        let id = Dense {
            w: Array2::eye(3),
            b: Array1::zeros(3),
        };
        assert_eq!(id.forward(x.view()).unwrap(), x);
        assert!(id.forward(array![1.0].view()).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::seeded(11);
        let layer = Dense::random(5, 3, &mut r);
        let x = array![0.2, -0.4, 0.9, 0.1, -1.3];
        let up = array![0.7, -0.2, 1.1];
        let loss = |d: &Dense, x: &Array1<f64>| d.forward(x.view()).unwrap().dot(&up);

        let mut grads = layer.zeros_like();
        let gx = layer.backward(x.view(), up.view(), &mut grads).unwrap();

        let flat = layer.flatten();
        let err = grad_check(
            |p| {
                let mut d = layer.clone();
                d.assign_flat(p);
                loss(&d, &x)
            },
            &flat,
            &grads.flatten(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "param rel err {err}");

        let err = grad_check(
            |p| loss(&layer, &Array1::from(p.to_vec())),
            x.as_slice().unwrap(),
            gx.as_slice().unwrap(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "input rel err {err}");
    }

    #[test]
    fn batched_matches_rowwise() {
        let mut r = rng::seeded(5);
        let layer = Dense::random(4, 2, &mut r);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.1 - 0.5);
        let gy = Array2::from_shape_fn((3, 2), |(i, j)| (i + 2 * j) as f64 * 0.3 - 0.4);
        let y = layer.forward_rows(x.view()).unwrap();
        let mut g1 = layer.zeros_like();
        let gx = layer.backward_rows(x.view(), gy.view(), &mut g1).unwrap();
        let mut g2 = layer.zeros_like();
        for t in 0..3 {
            let yt = layer.forward(x.row(t)).unwrap();
            for (a, b) in yt.iter().zip(y.row(t)) {
                assert!((a - b).abs() < 1e-12);
            }
            let gxt = layer.backward(x.row(t), gy.row(t), &mut g2).unwrap();
            for (a, b) in gxt.iter().zip(gx.row(t)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
