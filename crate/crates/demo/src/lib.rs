//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Build with `wasm-pack build --target web --out-dir www/pkg`.

use wasm_bindgen::prelude::*;

use cosgauss::audio::{frame_signal, synth_waveform, SynthSpec};
use cosgauss::filterbank::{
    bandwidth_3db, build_kernels, fb_forward, frequency_response, init_mel_centers, FilterbankParams, DEFAULT_EPS,
    DEFAULT_MU_MAX, DEFAULT_MU_MIN,
};
use cosgauss::relevance::{relevance_forward, RelevanceNet, DEFAULT_HIDDEN};
use cosgauss::rng;

const SAMPLE_RATE: u32 = 16_000;
const FRAME_LEN: usize = 640;
const HOP: usize = 160;

fn single(mu: f64, kernel_len: usize) -> cosgauss::Result<FilterbankParams> {
    FilterbankParams::new(vec![mu], kernel_len, DEFAULT_MU_MIN, DEFAULT_MU_MAX, DEFAULT_EPS)
}

pub fn kernel_taps(mu: f64, kernel_len: usize) -> cosgauss::Result<Vec<f64>> {
    Ok(build_kernels(&single(mu, kernel_len)?).row(0).to_vec())
}

/// Magnitude response in dB relative to its peak, `n_fft/2 + 1` bins.
pub fn response_db(mu: f64, kernel_len: usize, n_fft: usize) -> cosgauss::Result<Vec<f64>> {
    let k = build_kernels(&single(mu, kernel_len)?);
    let mag = frequency_response(k.row(0), n_fft)?;
    let peak = mag.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    Ok(mag.iter().map(|m| 20.0 * (m.max(1e-12) / peak).log10()).collect())
}

/// −3 dB bandwidth in Hz, `NaN` when the passband touches a band edge.
pub fn bandwidth(mu: f64, kernel_len: usize, n_fft: usize) -> cosgauss::Result<f64> {
    let k = build_kernels(&single(mu, kernel_len)?);
    let mag = frequency_response(k.row(0), n_fft)?;
    Ok(bandwidth_3db(&mag).map_or(f64::NAN, |b| b * SAMPLE_RATE as f64 / n_fft as f64))
}

pub fn mel_layout(n_filters: usize, f_min: f64, f_max: f64) -> cosgauss::Result<Vec<f64>> {
    Ok(init_mel_centers(n_filters, f_min, f_max, SAMPLE_RATE as f64)?
        .iter()
        .map(|mu| mu * SAMPLE_RATE as f64)
        .collect())
}

/// Learned spectrogram and relevance mask of one synthetic clip, both
/// `n_filters × n_frames`, row-major.
#[wasm_bindgen]
pub struct Analysis {
    n_filters: usize,
    n_frames: usize,
    spectrogram: Vec<f64>,
    mask: Vec<f64>,
}

#[wasm_bindgen]
impl Analysis {
    #[wasm_bindgen(getter)]
    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    #[wasm_bindgen(getter)]
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[wasm_bindgen(getter)]
    pub fn spectrogram(&self) -> Vec<f64> {
        self.spectrogram.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mask(&self) -> Vec<f64> {
        self.mask.clone()
    }
}

pub fn analyze_clip(label: u8, snr_db: f64, n_filters: usize, seed: u64) -> cosgauss::Result<Analysis> {
    let spec = SynthSpec {
        snr_db,
        seed,
        duration_s: 1.0,
        ..SynthSpec::default()
    };
    spec.validate()?;
    if label > 1 {
        return Err(cosgauss::Error::Argument(format!("label must be 0 or 1, got {label}")));
    }
    let w = synth_waveform(&spec, label, 0);
    let frames = frame_signal(&w, FRAME_LEN, HOP)?;
    let fb = FilterbankParams::mel(n_filters, 64.0, 7200.0, SAMPLE_RATE as f64)?;
    let (i, _) = fb_forward(&frames, &fb)?;
    let net = RelevanceNet::random(DEFAULT_HIDDEN, &mut rng::seeded(seed));
    let (m, _) = relevance_forward(i.values.view(), &net)?;
    Ok(Analysis {
        n_filters,
        n_frames: i.n_frames(),
        spectrogram: i.values.iter().copied().collect(),
        mask: m.values.iter().copied().collect(),
    })
}

fn js(e: cosgauss::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn kernel(mu: f64, kernel_len: usize) -> Result<Vec<f64>, JsError> {
    kernel_taps(mu, kernel_len).map_err(js)
}

#[wasm_bindgen]
pub fn response(mu: f64, kernel_len: usize, n_fft: usize) -> Result<Vec<f64>, JsError> {
    response_db(mu, kernel_len, n_fft).map_err(js)
}

#[wasm_bindgen]
pub fn bandwidth_hz(mu: f64, kernel_len: usize, n_fft: usize) -> Result<f64, JsError> {
    bandwidth(mu, kernel_len, n_fft).map_err(js)
}

#[wasm_bindgen]
pub fn mel_centers(n_filters: usize, f_min: f64, f_max: f64) -> Result<Vec<f64>, JsError> {
    mel_layout(n_filters, f_min, f_max).map_err(js)
}

#[wasm_bindgen]
pub fn analyze(label: u8, snr_db: f64, n_filters: usize, seed: u32) -> Result<Analysis, JsError> {
    analyze_clip(label, snr_db, n_filters, seed as u64).map_err(js)
}
