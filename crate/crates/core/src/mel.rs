//! Fixed log-mel front-end used as the comparison feature mode.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::FrameSequence;
use crate::error::{Error, Result};
use crate::filterbank::{hz_to_mel, mel_to_hz};

/// Triangular mel weights over the one-sided spectrum (`n_mels × (n_fft/2+1)`).
pub fn mel_weights(n_mels: usize, n_fft: usize, sample_rate: f64, f_min: f64, f_max: f64) -> Result<Array2<f64>> {
    if n_mels == 0 || !(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0) {
        return Err(Error::Argument(format!(
            "bad mel layout: {n_mels} bands over [{f_min}, {f_max}] Hz at {sample_rate} Hz"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|k| mel_to_hz(lo + (hi - lo) * k as f64 / (n_mels + 1) as f64))
        .collect();
    Ok(Array2::from_shape_fn((n_mels, n_bins), |(m, b)| {
        let f = b as f64 * sample_rate / n_fft as f64;
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        if f <= l || f >= r {
            0.0
        } else if f <= c {
            (f - l) / (c - l)
        } else {
            (r - f) / (r - c)
        }
    }))
}

/// Hann-windowed power spectrum per frame → mel weights → `ln(· + eps)`.
/// Returns `n_mels × T`.
pub fn log_mel(frames: &FrameSequence, n_mels: usize, f_min: f64, f_max: f64, eps: f64) -> Result<Array2<f64>> {
    let s = frames.frame_len;
    let n_fft = s.next_power_of_two();
    let sr = frames.sample_rate as f64;
    let weights = mel_weights(n_mels, n_fft, sr, f_min, f_max)?;
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let window: Vec<f64> = (0..s)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / s as f64).cos())
        .collect();
    let n_t = frames.n_frames();
    let n_bins = n_fft / 2 + 1;
    let mut out = Array2::zeros((n_mels, n_t));
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut power = ndarray::Array1::zeros(n_bins);
    for t in 0..n_t {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = if k < s {
                Complex::new(frames.frames[[t, k]] * window[k], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            power[k] = buf[k].norm_sqr() / s as f64;
        }
        let e = weights.dot(&power);
        for m in 0..n_mels {
            out[[m, t]] = (e[m] + eps).ln();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{frame_signal, Waveform};

    #[test]
    fn weights_are_triangles_peaking_at_one() {
        let w = mel_weights(10, 512, 16000.0, 0.0, 8000.0).unwrap();
        for m in 0..10 {
            let row = w.row(m);
            let peak = row.iter().cloned().fold(0.0, f64::max);
            assert!(peak > 0.8 && peak <= 1.0, "band {m} peak {peak}");
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn tone_lands_in_matching_band() {
        let sr = 16000.0;
        let f0 = 2000.0;
        let x: Vec<f64> = (0..2000)
            .map(|n| (2.0 * std::f64::consts::PI * f0 * n as f64 / sr).sin())
            .collect();
        let fr = frame_signal(&Waveform::new(x, 16000).unwrap(), 640, 160).unwrap();
        let lm = log_mel(&fr, 40, 0.0, 8000.0, 1e-10).unwrap();
        let col = lm.column(0);
        let best = (0..40).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
        let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(8000.0));
        let center = mel_to_hz(lo + (hi - lo) * (best + 1) as f64 / 41.0);
        assert!((center - f0).abs() < 250.0, "band center {center}");
    }
}
