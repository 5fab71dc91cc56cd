use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{sigmoid, uniform_fill, Parameters};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// LSTM cell. Gate pre-activations are laid out `[input | forget | output | candidate]`
/// along the `4·H` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `D × 4H`
    pub w_x: Array2<f64>,
    /// `H × 4H`
    pub w_h: Array2<f64>,
    /// `4H`
    pub b: Array1<f64>,
}

/// Activations of one time step, kept for BPTT.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub o: Array1<f64>,
    pub g: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmSeqCache {
    x: Array2<f64>,
    /// `T × H` hidden states.
    pub hidden: Array2<f64>,
    steps: Vec<LstmStep>,
}

impl LstmCell {
    pub fn zeros(n_in: usize, hidden: usize) -> Self {
        Self {
            w_x: Array2::zeros((n_in, 4 * hidden)),
            w_h: Array2::zeros((hidden, 4 * hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    /// Uniform(±1/√fan_in) weights with fan_in = D + H; forget-gate bias 1.
    pub fn random(n_in: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut c = Self::zeros(n_in, hidden);
        let bound = 1.0 / ((n_in + hidden) as f64).sqrt();
        uniform_fill(rng, c.w_x.as_slice_mut().unwrap(), bound);
        uniform_fill(rng, c.w_h.as_slice_mut().unwrap(), bound);
        uniform_fill(rng, c.b.as_slice_mut().unwrap(), bound);
        c.b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        c
    }

    pub fn n_in(&self) -> usize {
        self.w_x.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w_h.nrows()
    }

    fn activate(&self, pre: Array1<f64>, c_prev: ArrayView1<f64>) -> LstmStep {
        let hd = self.hidden();
        let i = pre.slice(s![0..hd]).mapv(sigmoid);
        let f = pre.slice(s![hd..2 * hd]).mapv(sigmoid);
        let o = pre.slice(s![2 * hd..3 * hd]).mapv(sigmoid);
        let g = pre.slice(s![3 * hd..4 * hd]).mapv(f64::tanh);
        let c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        LstmStep {
            i,
            f,
            o,
            g,
            c,
            tanh_c,
            h,
        }
    }

    /// One step: returns `(h_t, c_t)` plus the gate activations.
    pub fn step(&self, x: ArrayView1<f64>, h_prev: ArrayView1<f64>, c_prev: ArrayView1<f64>) -> Result<LstmStep> {
        if x.len() != self.n_in() || h_prev.len() != self.hidden() || c_prev.len() != self.hidden() {
            return Err(Error::Shape(format!(
                "lstm step got x[{}], h[{}], c[{}] for D={}, H={}",
                x.len(),
                h_prev.len(),
                c_prev.len(),
                self.n_in(),
                self.hidden()
            )));
        }
        let pre = x.dot(&self.w_x) + h_prev.dot(&self.w_h) + &self.b;
        Ok(self.activate(pre, c_prev))
    }

    /// Runs the cell over `x` (`T × D`) from zero state.
    pub fn forward_seq(&self, x: ArrayView2<f64>) -> Result<LstmSeqCache> {
        let (n_t, d) = x.dim();
        if n_t == 0 {
            return Err(Error::Argument("empty sequence".into()));
        }
        if d != self.n_in() {
            return Err(Error::Shape(format!(
                "sequence has {d} features, cell expects {}",
                self.n_in()
            )));
        }
        let hd = self.hidden();
        let xw = x.dot(&self.w_x) + &self.b;
        let mut hidden = Array2::zeros((n_t, hd));
        let mut steps = Vec::with_capacity(n_t);
        let mut h = Array1::zeros(hd);
        let mut c = Array1::zeros(hd);
        for t in 0..n_t {
            let pre = &xw.row(t) + &h.dot(&self.w_h);
            let st = self.activate(pre, c.view());
            h = st.h.clone();
            c = st.c.clone();
            hidden.row_mut(t).assign(&h);
            steps.push(st);
        }
        Ok(LstmSeqCache {
            x: x.to_owned(),
            hidden,
            steps,
        })
    }

    /// BPTT given `∂loss/∂h_t` for every step. Accumulates into `grads` and
    /// returns `∂loss/∂x` (`T × D`).
    pub fn backward_seq(&self, cache: &LstmSeqCache, grad_h: ArrayView2<f64>, grads: &mut LstmCell) -> Result<Array2<f64>> {
        let n_t = cache.steps.len();
        let hd = self.hidden();
        if grad_h.dim() != (n_t, hd) {
            return Err(Error::Shape(format!(
                "grad_h is {:?}, expected {:?}",
                grad_h.dim(),
                (n_t, hd)
            )));
        }
        let mut dpre = Array2::zeros((n_t, 4 * hd));
        let mut dh_next = Array1::<f64>::zeros(hd);
        let mut dc_next = Array1::<f64>::zeros(hd);
        let zero = Array1::<f64>::zeros(hd);
        for t in (0..n_t).rev() {
            let st = &cache.steps[t];
            let c_prev = if t > 0 { cache.steps[t - 1].c.view() } else { zero.view() };
            let dh = &grad_h.row(t) + &dh_next;
            let d_o = &dh * &st.tanh_c;
            let dc = &dc_next + &(&dh * &st.o * &st.tanh_c.mapv(|v| 1.0 - v * v));
            let d_i = &dc * &st.g;
            let d_g = &dc * &st.i;
            let d_f = &dc * &c_prev;
            dc_next = &dc * &st.f;

            let mut row = dpre.row_mut(t);
            row.slice_mut(s![0..hd]).assign(&(&d_i * &st.i.mapv(|v| v * (1.0 - v))));
            row.slice_mut(s![hd..2 * hd]).assign(&(&d_f * &st.f.mapv(|v| v * (1.0 - v))));
            row.slice_mut(s![2 * hd..3 * hd]).assign(&(&d_o * &st.o.mapv(|v| v * (1.0 - v))));
            row.slice_mut(s![3 * hd..4 * hd]).assign(&(&d_g * &st.g.mapv(|v| 1.0 - v * v)));
            dh_next = self.w_h.dot(&dpre.row(t));
        }
        // h_{t-1} for every step, zero at t = 0
        let mut h_prev = Array2::zeros((n_t, hd));
        if n_t > 1 {
            h_prev.slice_mut(s![1.., ..]).assign(&cache.hidden.slice(s![..n_t - 1, ..]));
        }
        grads.w_x += &cache.x.t().dot(&dpre);
        grads.w_h += &h_prev.t().dot(&dpre);
        grads.b += &dpre.sum_axis(Axis(0));
        Ok(dpre.dot(&self.w_x.t()))
    }
}

impl Parameters for LstmCell {
    fn params(&self) -> Vec<&[f64]> {
        vec![
            self.w_x.as_slice().unwrap(),
            self.w_h.as_slice().unwrap(),
            self.b.as_slice().unwrap(),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_x.as_slice_mut().unwrap(),
            self.w_h.as_slice_mut().unwrap(),
            self.b.as_slice_mut().unwrap(),
        ]
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.n_in(), self.hidden())
    }
}

/// Bidirectional layer: output row `t` is `[h_fwd(t) ; h_bwd(t)]` where the
/// backward cell reads the sequence from the end.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmSeqCache,
    bwd: LstmSeqCache,
}

fn reversed(x: ArrayView2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

impl BiLstm {
    pub fn zeros(n_in: usize, hidden: usize) -> Self {
        Self {
            fwd: LstmCell::zeros(n_in, hidden),
            bwd: LstmCell::zeros(n_in, hidden),
        }
    }

    pub fn random(n_in: usize, hidden: usize, rng: &mut Rng) -> Self {
        let fwd = LstmCell::random(n_in, hidden, rng);
        let bwd = LstmCell::random(n_in, hidden, rng);
        Self { fwd, bwd }
    }

    pub fn n_in(&self) -> usize {
        self.fwd.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.fwd.hidden() + self.bwd.hidden()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, BiLstmCache)> {
        let f = self.fwd.forward_seq(x)?;
        let b = self.bwd.forward_seq(reversed(x).view())?;
        let hf = self.fwd.hidden();
        let n_t = x.nrows();
        let mut out = Array2::zeros((n_t, self.n_out()));
        out.slice_mut(s![.., ..hf]).assign(&f.hidden);
        out.slice_mut(s![.., hf..]).assign(&b.hidden.slice(s![..;-1, ..]));
        Ok((out, BiLstmCache { fwd: f, bwd: b }))
    }

    pub fn backward(&self, cache: &BiLstmCache, grad_out: ArrayView2<f64>, grads: &mut BiLstm) -> Result<Array2<f64>> {
        let hf = self.fwd.hidden();
        if grad_out.ncols() != self.n_out() {
            return Err(Error::Shape(format!(
                "bilstm grad has {} columns, expected {}",
                grad_out.ncols(),
                self.n_out()
            )));
        }
        let gx_f = self
            .fwd
            .backward_seq(&cache.fwd, grad_out.slice(s![.., ..hf]), &mut grads.fwd)?;
        let gb = reversed(grad_out.slice(s![.., hf..]));
        let gx_b = self.bwd.backward_seq(&cache.bwd, gb.view(), &mut grads.bwd)?;
        Ok(gx_f + gx_b.slice(s![..;-1, ..]))
    }
}

impl Parameters for BiLstm {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.fwd.params();
        v.extend(self.bwd.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.fwd.params_mut();
        v.extend(self.bwd.params_mut());
        v
    }

    fn zeros_like(&self) -> Self {
        Self {
            fwd: self.fwd.zeros_like(),
            bwd: self.bwd.zeros_like(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::rng;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn seq(t: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        Array2::from_shape_fn((t, d), |_| rng::uniform(&mut r, -1.0, 1.0))
    }

    #[test]
    fn zero_parameter_step_algebra() {
        let cell = LstmCell::zeros(3, 2);
        let x = array![0.4, -2.0, 1.0];
        let c_prev = array![0.8, -0.6];
        let st = cell.step(x.view(), array![0.3, 0.1].view(), c_prev.view()).unwrap();
        assert!(st.i.iter().chain(&st.f).chain(&st.o).all(|&v| v == 0.5));
        assert!(st.g.iter().all(|&v| v == 0.0));
        for k in 0..2 {
            assert_eq!(st.c[k], 0.5 * c_prev[k]);
            assert_relative_eq!(st.h[k], 0.5 * (0.5 * c_prev[k]).tanh(), epsilon = 1e-15);
        }
        let st = cell.step(x.view(), array![0.3, 0.1].view(), array![0.0, 0.0].view()).unwrap();
        assert!(st.h.iter().chain(&st.c).all(|&v| v == 0.0));
        assert!(cell.step(array![1.0].view(), st.h.view(), st.c.view()).is_err());
    }

    #[test]
    fn sequence_matches_stepwise() {
        let mut r = rng::seeded(2);
        let cell = LstmCell::random(3, 4, &mut r);
        let x = seq(6, 3, 9);
        let cache = cell.forward_seq(x.view()).unwrap();
        let mut h = Array1::zeros(4);
        let mut c = Array1::zeros(4);
        for t in 0..6 {
            let st = cell.step(x.row(t), h.view(), c.view()).unwrap();
            h = st.h;
            c = st.c;
            for k in 0..4 {
                assert_relative_eq!(h[k], cache.hidden[[t, k]], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut r = rng::seeded(3);
        let cell = LstmCell::random(3, 4, &mut r);
        let x = seq(5, 3, 4);
        let up = seq(5, 4, 5);
        let loss = |c: &LstmCell, x: &Array2<f64>| (&c.forward_seq(x.view()).unwrap().hidden * &up).sum();

        let cache = cell.forward_seq(x.view()).unwrap();
        let mut grads = cell.zeros_like();
        let gx = cell.backward_seq(&cache, up.view(), &mut grads).unwrap();

        let err = grad_check(
            |p| {
                let mut c = cell.clone();
                c.assign_flat(p);
                loss(&c, &x)
            },
            &cell.flatten(),
            &grads.flatten(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "param rel err {err}");

        let err = grad_check(
            |p| loss(&cell, &Array2::from_shape_vec((5, 3), p.to_vec()).unwrap()),
            x.as_slice().unwrap(),
            gx.as_slice().unwrap(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "input rel err {err}");
    }

    #[test]
    fn bilstm_single_step_is_two_cells() {
        let mut r = rng::seeded(6);
        let bi = BiLstm::random(3, 2, &mut r);
        let x = seq(1, 3, 1);
        let (out, _) = bi.forward(x.view()).unwrap();
        let z = Array1::zeros(2);
        let f = bi.fwd.step(x.row(0), z.view(), z.view()).unwrap();
        let b = bi.bwd.step(x.row(0), z.view(), z.view()).unwrap();
        let expect: Vec<f64> = f.h.iter().chain(&b.h).copied().collect();
        for (a, e) in out.row(0).iter().zip(&expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn bilstm_reversal_swaps_directions() {
        let mut r = rng::seeded(8);
        let bi = BiLstm::random(3, 2, &mut r);
        let swapped = BiLstm {
            fwd: bi.bwd.clone(),
            bwd: bi.fwd.clone(),
        };
        let x = seq(7, 3, 2);
        let (out, _) = bi.forward(x.view()).unwrap();
        let (out_rev, _) = swapped.forward(reversed(x.view()).view()).unwrap();
        // out_rev[t] = [bwd-cell state ; fwd-cell state] at original time T-1-t
        for t in 0..7 {
            let a = out.row(6 - t);
            let b = out_rev.row(t);
            for k in 0..2 {
                assert_relative_eq!(a[k], b[2 + k], epsilon = 1e-14);
                assert_relative_eq!(a[2 + k], b[k], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn bilstm_zero_cells_output_zero_and_empty_rejected() {
        let bi = BiLstm::zeros(3, 2);
        let (out, _) = bi.forward(seq(4, 3, 1).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(bi.forward(Array2::zeros((0, 3)).view()).is_err());
    }

    #[test]
    fn bilstm_gradients_match_finite_differences() {
        let mut r = rng::seeded(12);
        let bi = BiLstm::random(3, 2, &mut r);
        let x = seq(5, 3, 13);
        let up = seq(5, 4, 14);
        let loss = |b: &BiLstm, x: &Array2<f64>| (&b.forward(x.view()).unwrap().0 * &up).sum();
        let (_, cache) = bi.forward(x.view()).unwrap();
        let mut grads = bi.zeros_like();
        let gx = bi.backward(&cache, up.view(), &mut grads).unwrap();
        let err = grad_check(
            |p| {
                let mut b = bi.clone();
                b.assign_flat(p);
                loss(&b, &x)
            },
            &bi.flatten(),
            &grads.flatten(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
        let err = grad_check(
            |p| loss(&bi, &Array2::from_shape_vec((5, 3), p.to_vec()).unwrap()),
            x.as_slice().unwrap(),
            gx.as_slice().unwrap(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
