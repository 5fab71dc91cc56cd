//! Cosine-modulated Gaussian filterbank.
//!
//! Filter `i` has the time-domain kernel
//!
//! ```text
//! g_i(n) = cos(2π μ_i n) · exp(−n² μ_i² / 2),   |n| ≤ (L − 1) / 2
//! ```
//!
//! with `μ_i` in cycles/sample. The Gaussian envelope width is `1/μ_i`, so
//! the passband width grows linearly with the center frequency (constant Q).
//! The center frequencies are the only trainable parameters.
//!
//! A frame is convolved (valid mode) with every kernel, squared, averaged
//! and log-compressed into one column of the learned spectrogram `I`.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::FrameSequence;
use crate::error::{Error, Result};

pub const DEFAULT_FILTERS: usize = 64;
pub const DEFAULT_KERNEL_LEN: usize = 257;
pub const DEFAULT_MU_MIN: f64 = 0.004;
pub const DEFAULT_MU_MAX: f64 = 0.45;
pub const DEFAULT_EPS: f64 = 1e-10;

/// Learnable center frequencies plus the fixed structure of the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterbankParams {
    /// Normalized center frequencies, cycles/sample.
    pub mu: Vec<f64>,
    /// Odd kernel length `L`.
    pub kernel_len: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Floor added inside the log.
    pub eps: f64,
}

impl FilterbankParams {
    pub fn new(mu: Vec<f64>, kernel_len: usize, mu_min: f64, mu_max: f64, eps: f64) -> Result<Self> {
        let p = Self {
            mu,
            kernel_len,
            mu_min,
            mu_max,
            eps,
        };
        p.validate()?;
        Ok(p)
    }

    /// Mel-spaced bank between `f_min` and `f_max` Hz with default clamps.
    pub fn mel(n_filters: usize, f_min: f64, f_max: f64, sample_rate: f64) -> Result<Self> {
        let mu = init_mel_centers(n_filters, f_min, f_max, sample_rate)?;
        Self::new(mu, DEFAULT_KERNEL_LEN, DEFAULT_MU_MIN, DEFAULT_MU_MAX, DEFAULT_EPS)
    }

    pub fn n_filters(&self) -> usize {
        self.mu.len()
    }

    pub fn half_len(&self) -> usize {
        (self.kernel_len - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.is_empty() {
            return Err(Error::Config("filterbank needs at least one filter".into()));
        }
        if self.kernel_len % 2 == 0 || self.kernel_len == 0 {
            return Err(Error::Config(format!(
                "kernel length must be odd, got {}",
                self.kernel_len
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.mu_min > 0.0 && self.mu_min <= self.mu_max && self.mu_max < 0.5) {
            return Err(Error::Config(format!(
                "clamps must satisfy 0 < mu_min ≤ mu_max < 0.5, got [{}, {}]",
                self.mu_min, self.mu_max
            )));
        }
        for (i, &m) in self.mu.iter().enumerate() {
            if !(m >= self.mu_min && m <= self.mu_max) {
                return Err(Error::Config(format!(
                    "mu[{i}] = {m} outside [{}, {}]",
                    self.mu_min, self.mu_max
                )));
            }
        }
        Ok(())
    }

    /// Projects every center frequency back into `[mu_min, mu_max]`.
    pub fn clamp(&mut self) {
        for m in &mut self.mu {
            *m = m.clamp(self.mu_min, self.mu_max);
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// `n_filters` centers equally spaced in mel between `f_min` and `f_max`
/// (both included), normalized by `sample_rate`.
pub fn init_mel_centers(n_filters: usize, f_min: f64, f_max: f64, sample_rate: f64) -> Result<Vec<f64>> {
    if n_filters == 0 {
        return Err(Error::Argument("filter count must be ≥ 1".into()));
    }
    if !(f_min > 0.0 && f_min < f_max && f_max <= sample_rate / 2.0) {
        return Err(Error::Argument(format!(
            "need 0 < f_min < f_max ≤ sample_rate/2, got f_min={f_min}, f_max={f_max}, sample_rate={sample_rate}"
        )));
    }
    if n_filters == 1 {
        return Ok(vec![f_min / sample_rate]);
    }
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let step = (hi - lo) / (n_filters - 1) as f64;
    Ok((0..n_filters)
        .map(|i| {
            let f = if i == 0 {
                f_min
            } else if i == n_filters - 1 {
                f_max
            } else {
                mel_to_hz(lo + step * i as f64)
            };
            f / sample_rate
        })
        .collect())
}

/// Kernel value at integer lag `n`.
#[inline]
pub fn cosgauss(mu: f64, n: f64) -> f64 {
    (2.0 * PI * mu * n).cos() * (-0.5 * n * n * mu * mu).exp()
}

/// ∂g(n)/∂μ.
#[inline]
pub fn cosgauss_dmu(mu: f64, n: f64) -> f64 {
    let arg = 2.0 * PI * mu * n;
    (-2.0 * PI * n * arg.sin() - n * n * mu * arg.cos()) * (-0.5 * n * n * mu * mu).exp()
}

/// `F × L` matrix; column `j` holds lag `n = j − (L − 1)/2`.
pub fn build_kernels(p: &FilterbankParams) -> Array2<f64> {
    let h = p.half_len() as isize;
    Array2::from_shape_fn((p.n_filters(), p.kernel_len), |(i, j)| {
        cosgauss(p.mu[i], (j as isize - h) as f64)
    })
}

/// `F × L` matrix of ∂g_i(n)/∂μ_i, same layout as [`build_kernels`].
pub fn kernel_grad_mu(p: &FilterbankParams) -> Array2<f64> {
    let h = p.half_len() as isize;
    Array2::from_shape_fn((p.n_filters(), p.kernel_len), |(i, j)| {
        cosgauss_dmu(p.mu[i], (j as isize - h) as f64)
    })
}

/// Log-energy filterbank output `I`, one row per filter and one column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedSpectrogram {
    pub values: Array2<f64>,
    pub frame_len: usize,
    pub hop: usize,
}

impl LearnedSpectrogram {
    pub fn n_filters(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Everything [`fb_backward`] needs from the forward pass.
///
/// Frames are stored as one signal plus per-frame offsets. Overlapping frames
/// cut from a common signal share it, so each filter output sample is
/// computed once however many frames contain it.
#[derive(Debug, Clone)]
pub struct FbCache {
    params: FilterbankParams,
    signal: Vec<f64>,
    offsets: Vec<usize>,
    /// Outputs per conv position (`P = s − L + 1` per frame), `i * n_pos + u`.
    outputs: Vec<f64>,
    n_pos: usize,
    n_out: usize,
    /// Mean energy per filter and frame.
    energy: Array2<f64>,
}

impl FbCache {
    pub fn params(&self) -> &FilterbankParams {
        &self.params
    }
}

/// Lays the frames out as one signal. Consecutive frames that overlap
/// consistently by `s − hop` samples are merged when `hop ≤ P`; otherwise the
/// frames are simply concatenated.
fn frames_to_signal(frames: &FrameSequence, n_out: usize) -> (Vec<f64>, Vec<usize>) {
    let (n_t, s) = frames.frames.dim();
    let hop = frames.hop;
    let fr = frames.frames.as_standard_layout();
    let overlapping = hop >= 1
        && hop <= n_out
        && (1..n_t).all(|t| (0..s - hop).all(|c| fr[[t, c]] == fr[[t - 1, c + hop]]));
    if overlapping && n_t > 0 {
        let mut signal: Vec<f64> = fr.row(0).to_vec();
        for t in 1..n_t {
            signal.extend(fr.row(t).iter().skip(s - hop));
        }
        (signal, (0..n_t).map(|t| t * hop).collect())
    } else {
        (fr.iter().copied().collect(), (0..n_t).map(|t| t * s).collect())
    }
}

/// Frame-by-frame conv → square → mean → log.
pub fn fb_forward(frames: &FrameSequence, p: &FilterbankParams) -> Result<(LearnedSpectrogram, FbCache)> {
    let s = frames.frame_len;
    let l = p.kernel_len;
    if s < l {
        return Err(Error::Config(format!(
            "frame length {s} shorter than kernel length {l}"
        )));
    }
    let n_f = p.n_filters();
    let n_t = frames.n_frames();
    let n_out = s - l + 1;
    let h = p.half_len();
    let kernels = build_kernels(p);
    let (signal, offsets) = frames_to_signal(frames, n_out);
    let n_pos = offsets.last().map_or(0, |o| o + n_out);

    let mut outputs = vec![0.0; n_f * n_pos];
    let mut energy = Array2::zeros((n_f, n_t));
    let mut values = Array2::zeros((n_f, n_t));
    for i in 0..n_f {
        let g = kernels.row(i);
        let g = g.as_slice().expect("kernel rows are contiguous");
        let y = &mut outputs[i * n_pos..(i + 1) * n_pos];
        convolve_symmetric(&signal[..n_pos + l - 1], g, h, y);
        for (t, &o) in offsets.iter().enumerate() {
            let e = y[o..o + n_out].iter().map(|v| v * v).sum::<f64>() / n_out as f64;
            energy[[i, t]] = e;
            values[[i, t]] = (e + p.eps).ln();
        }
    }
    Ok((
        LearnedSpectrogram {
            values,
            frame_len: s,
            hop: frames.hop,
        },
        FbCache {
            params: p.clone(),
            signal,
            offsets,
            outputs,
            n_pos,
            n_out,
            energy,
        },
    ))
}

/// Valid-mode convolution with an even kernel `g` of half-length `h`,
/// folding the two mirrored taps together. Outputs are computed in blocks
/// held in registers; each output still sums its taps in order `n = 1..h`.
fn convolve_symmetric(x: &[f64], g: &[f64], h: usize, y: &mut [f64]) {
    const B: usize = 8;
    let n_out = y.len();
    let g0 = g[h];
    let full = n_out / B * B;
    for c0 in (0..full).step_by(B) {
        let mut acc = [0.0f64; B];
        for k in 0..B {
            acc[k] = g0 * x[c0 + h + k];
        }
        for n in 1..=h {
            let gn = g[h + n];
            let right = &x[c0 + h + n..c0 + h + n + B];
            let left = &x[c0 + h - n..c0 + h - n + B];
            for k in 0..B {
                acc[k] += gn * (right[k] + left[k]);
            }
        }
        y[c0..c0 + B].copy_from_slice(&acc);
    }
    for c in full..n_out {
        let mut acc = g0 * x[c + h];
        for n in 1..=h {
            acc += g[h + n] * (x[c + h + n] + x[c + h - n]);
        }
        y[c] = acc;
    }
}

/// `r[m] = Σ_u w(u) · x(u + m)` for `m = 0..r.len()`, four lags at a time
/// with four lanes each; lanes and the tail are combined in a fixed order.
fn correlate(w: &[f64], x: &[f64], r: &mut [f64]) {
    const LAGS: usize = 4;
    let n = w.len();
    let body = n / 4 * 4;
    let mut m0 = 0;
    while m0 < r.len() {
        let nl = LAGS.min(r.len() - m0);
        let mut acc = [[0.0f64; 4]; LAGS];
        for u in (0..body).step_by(4) {
            let wv = &w[u..u + 4];
            for (j, a) in acc.iter_mut().enumerate().take(nl) {
                let xv = &x[u + m0 + j..u + m0 + j + 4];
                for q in 0..4 {
                    a[q] += wv[q] * xv[q];
                }
            }
        }
        for j in 0..nl {
            let mut tail = 0.0;
            for u in body..n {
                tail += w[u] * x[u + m0 + j];
            }
            let a = acc[j];
            r[m0 + j] = (a[0] + a[1]) + (a[2] + a[3]) + tail;
        }
        m0 += nl;
    }
}

/// Gradient of the loss w.r.t. every `μ_i`, given `∂loss/∂I`.
pub fn fb_backward(grad_i: &Array2<f64>, cache: &FbCache) -> Result<Vec<f64>> {
    let p = &cache.params;
    let (n_f, n_t) = cache.energy.dim();
    if grad_i.dim() != (n_f, n_t) {
        return Err(Error::Shape(format!(
            "grad_I is {:?}, forward produced {:?}",
            grad_i.dim(),
            (n_f, n_t)
        )));
    }
    let h = p.half_len();
    let (n_pos, n_out) = (cache.n_pos, cache.n_out);
    let x = &cache.signal;
    let dkernels = kernel_grad_mu(p);
    let mut grad_mu = vec![0.0; n_f];
    let mut w = vec![0.0; n_pos];
    let mut r = vec![0.0; 2 * h + 1];

    for i in 0..n_f {
        if (0..n_t).all(|t| grad_i[[i, t]] == 0.0) {
            continue;
        }
        // w(u) = ∂loss/∂y(u), summed over every frame containing position u
        w.iter_mut().for_each(|v| *v = 0.0);
        for (t, &o) in cache.offsets.iter().enumerate() {
            let scale = grad_i[[i, t]] / (cache.energy[[i, t]] + p.eps) * 2.0 / n_out as f64;
            w[o..o + n_out].iter_mut().for_each(|v| *v += scale);
        }
        let y = &cache.outputs[i * n_pos..(i + 1) * n_pos];
        for (wu, yu) in w.iter_mut().zip(y) {
            *wu *= yu;
        }
        // r(h+m) = Σ_u w(u) · x(u+h+m); the symmetric kernel sees r(h+n) + r(h−n).
        // ∂g(0)/∂μ vanishes.
        correlate(&w, &x[..n_pos + 2 * h], &mut r);
        grad_mu[i] = (1..=h).map(|n| dkernels[[i, h + n]] * (r[h + n] + r[h - n])).sum();
    }
    Ok(grad_mu)
}

/// One-sided magnitude spectrum (`n_fft/2 + 1` bins) of a zero-padded kernel.
pub fn frequency_response(kernel: ArrayView1<f64>, n_fft: usize) -> Result<Vec<f64>> {
    if n_fft < kernel.len() || n_fft == 0 {
        return Err(Error::Argument(format!(
            "n_fft {n_fft} smaller than kernel length {}",
            kernel.len()
        )));
    }
    let mut buf: Vec<Complex<f64>> = kernel
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    Ok(buf[..n_fft / 2 + 1].iter().map(|c| c.norm()).collect())
}

/// Width (in bins) of the region around the peak where the magnitude stays
/// at or above `peak/√2`, with linear interpolation at both crossings.
/// Returns `None` if the response does not drop below the threshold on
/// both sides of the peak.
pub fn bandwidth_3db(mag: &[f64]) -> Option<f64> {
    let (peak_bin, &peak) = mag
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let thr = peak / std::f64::consts::SQRT_2;
    let crossing = |a: usize, b: usize| {
        // position between bins a and b where the magnitude equals thr
        let (ma, mb) = (mag[a], mag[b]);
        a as f64 + (b as f64 - a as f64) * (ma - thr) / (ma - mb)
    };
    let mut lo = None;
    for k in (0..peak_bin).rev() {
        if mag[k] < thr {
            lo = Some(crossing(k + 1, k));
            break;
        }
    }
    let mut hi = None;
    for k in peak_bin + 1..mag.len() {
        if mag[k] < thr {
            hi = Some(crossing(k - 1, k));
            break;
        }
    }
    Some(hi? - lo?)
}

/// Per-filter summary used by `filters-dump`: center (normalized), center in
/// Hz, and −3 dB bandwidth in Hz (NaN if it cannot be resolved).
pub fn describe_filters(p: &FilterbankParams, sample_rate: f64, n_fft: usize) -> Result<Vec<(f64, f64, f64)>> {
    let kernels = build_kernels(p);
    p.mu
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            let mag = frequency_response(kernels.row(i), n_fft)?;
            let bw = bandwidth_3db(&mag)
                .map(|b| b / n_fft as f64 * sample_rate)
                .unwrap_or(f64::NAN);
            Ok((mu, mu * sample_rate, bw))
        })
        .collect()
}
