//! Waveform I/O, resampling, framing and the synthetic two-class corpus.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng;

/// Internal processing rate; every input is resampled to this on ingest.
pub const CANONICAL_RATE: u32 = 16_000;
pub const DEFAULT_FRAME_LEN: usize = 640;
pub const DEFAULT_HOP: usize = 160;

/// Mono audio with amplitudes nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Argument("sample_rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Rectangular short-time frames, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Array2<f64>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl FrameSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

/// Number of full frames of length `s` at hop `hop` in `len` samples.
pub fn frame_count(len: usize, s: usize, hop: usize) -> usize {
    if len < s {
        0
    } else {
        (len - s) / hop + 1
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            msg: format!("{} channels, only mono is supported", spec.channels),
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            msg: format!(
                "{}-bit {:?} samples, only 16-bit PCM is supported",
                spec.bits_per_sample, spec.sample_format
            ),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM mono; amplitudes are rounded to the nearest step of
/// 1/32768 and clipped to the representable range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &w.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Format {
                path: path.into(),
                msg: "unexpected end of file".into(),
            }
        }
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::Format {
            path: path.into(),
            msg: msg.into(),
        },
        hound::Error::UnfinishedSample => Error::Format {
            path: path.into(),
            msg: "data chunk ends mid-sample".into(),
        },
        other => Error::UnsupportedFormat {
            path: path.into(),
            msg: other.to_string(),
        },
    }
}

/// Linear interpolation onto a uniform grid at `target_rate`.
pub fn resample_linear(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::Argument("target_rate must be positive".into()));
    }
    if target_rate == w.sample_rate || w.samples.is_empty() {
        return Ok(Waveform {
            samples: w.samples.clone(),
            sample_rate: target_rate,
        });
    }
    let len = w.samples.len();
    let out_len = (len as f64 * target_rate as f64 / w.sample_rate as f64).round() as usize;
    let last = len - 1;
    let samples = (0..out_len)
        .map(|k| {
            // exact integer arithmetic for the grid position keeps
            // commensurate rates free of drift
            let num = k as u64 * w.sample_rate as u64;
            let i = (num / target_rate as u64) as usize;
            let frac = (num % target_rate as u64) as f64 / target_rate as f64;
            if i >= last {
                w.samples[last]
            } else if frac == 0.0 {
                w.samples[i]
            } else {
                w.samples[i] * (1.0 - frac) + w.samples[i + 1] * frac
            }
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: target_rate,
    })
}

/// Cuts `w` into frames of `s` samples every `hop` samples, dropping the
/// trailing partial frame.
pub fn frame_signal(w: &Waveform, s: usize, hop: usize) -> Result<FrameSequence> {
    if s == 0 || hop == 0 {
        return Err(Error::Argument("frame length and hop must be ≥ 1".into()));
    }
    let t = frame_count(w.samples.len(), s, hop);
    if t == 0 {
        return Err(Error::TooShort {
            len: w.samples.len(),
            needed: s,
        });
    }
    let frames = Array2::from_shape_fn((t, s), |(r, c)| w.samples[r * hop + c]);
    Ok(FrameSequence {
        frames,
        frame_len: s,
        hop,
        sample_rate: w.sample_rate,
    })
}

/// Reads a WAV file and brings it to `rate`.
pub fn load_audio(path: impl AsRef<Path>, rate: u32) -> Result<Waveform> {
    let w = read_wav(path)?;
    resample_linear(&w, rate)
}

/// One manifest row. The label column is optional for unlabeled corpora.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Option<u8>,
}

/// Reads a `path,label` CSV (no header). Relative paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.splitn(2, ',');
        let file = cols.next().unwrap_or_default().trim();
        if file.is_empty() {
            return Err(Error::Manifest(format!(
                "{}:{}: empty path",
                path.display(),
                lineno + 1
            )));
        }
        let label = match cols.next().map(str::trim) {
            None | Some("") => None,
            Some("0") => Some(0),
            Some("1") => Some(1),
            Some(other) => {
                return Err(Error::Manifest(format!(
                    "{}:{}: label must be 0 or 1, got {other:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        };
        let p = PathBuf::from(file);
        let p = if p.is_absolute() { p } else { base.join(p) };
        out.push(ManifestEntry { path: p, label });
    }
    Ok(out)
}

/// Writes a manifest; paths under `relative_to` are written relative to it.
pub fn write_manifest(
    path: impl AsRef<Path>,
    entries: &[ManifestEntry],
    relative_to: Option<&Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for e in entries {
        let p = match relative_to {
            Some(base) => e.path.strip_prefix(base).unwrap_or(&e.path),
            None => &e.path,
        };
        text.push_str(&p.to_string_lossy());
        if let Some(l) = e.label {
            text.push(',');
            text.push_str(&l.to_string());
        }
        text.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parameters of the synthetic two-class corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub duration_s: f64,
    pub class0_band: (f64, f64),
    pub class1_band: (f64, f64),
    pub snr_db: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_per_class: 50,
            duration_s: 0.5,
            class0_band: (500.0, 1500.0),
            class1_band: (3000.0, 4000.0),
            snr_db: 0.0,
            seed: 1234,
            sample_rate: CANONICAL_RATE,
        }
    }
}

/// Standard deviation of the white background noise.
pub const SYNTH_NOISE_STD: f64 = 0.05;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::Argument("synth.n_per_class must be ≥ 1".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Argument("synth sample_rate must be positive".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Argument("synth.duration_s must be positive".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Argument("synth.snr_db must be finite".into()));
        }
        let nyq = self.sample_rate as f64 / 2.0;
        for (name, (lo, hi)) in [("class0_band", self.class0_band), ("class1_band", self.class1_band)]
        {
            if !(lo > 0.0 && lo < hi && hi < nyq) {
                return Err(Error::Argument(format!(
                    "synth.{name} = ({lo}, {hi}) must satisfy 0 < low < high < {nyq}"
                )));
            }
        }
        Ok(())
    }

    fn band(&self, label: u8) -> (f64, f64) {
        if label == 0 {
            self.class0_band
        } else {
            self.class1_band
        }
    }
}

/// Generates one corpus file: white noise plus a Hann-enveloped tone burst
/// whose frequency lies inside the class band. `index` selects an
/// independent random stream so files can be produced in any order.
pub fn synth_waveform(spec: &SynthSpec, label: u8, index: usize) -> Waveform {
    let sr = spec.sample_rate as f64;
    let n = (spec.duration_s * sr).round() as usize;
    let stream = 2 * index as u64 + label as u64;
    let mut r = rng::seeded(rng::derive_seed(spec.seed, stream + 1));

    let (lo, hi) = spec.band(label);
    let margin = 0.1 * (hi - lo);
    let freq = rng::uniform(&mut r, lo + margin, hi - margin);
    let phase = rng::uniform(&mut r, 0.0, 2.0 * std::f64::consts::PI);
    let burst_frac = rng::uniform(&mut r, 0.3, 0.6);
    let burst_len = ((n as f64 * burst_frac).round() as usize).max(1).min(n);
    let onset = rng::index(&mut r, n - burst_len + 1);
    // SNR relates the peak-envelope tone power A²/2 to the noise variance
    let amp = (2.0 * SYNTH_NOISE_STD.powi(2) * 10f64.powf(spec.snr_db / 10.0)).sqrt();

    let samples = (0..n)
        .map(|k| {
            let mut x = SYNTH_NOISE_STD * rng::normal(&mut r);
            if k >= onset && k < onset + burst_len {
                let u = (k - onset) as f64 / burst_len as f64;
                let env = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * u).cos();
                x += amp * env * (2.0 * std::f64::consts::PI * freq * k as f64 / sr + phase).sin();
            }
            x.clamp(-1.0, 1.0)
        })
        .collect();
    Waveform {
        samples,
        sample_rate: spec.sample_rate,
    }
}

/// Writes `2 * n_per_class` WAV files plus `manifest.csv` into `out_dir`
/// and returns the manifest rows (class 0 files first).
pub fn synth_corpus(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(2 * spec.n_per_class);
    for label in [0u8, 1] {
        for i in 0..spec.n_per_class {
            let w = synth_waveform(spec, label, i);
            let path = out_dir.join(format!("c{label}_{i:03}.wav"));
            write_wav(&path, &w)?;
            entries.push(ManifestEntry {
                path,
                label: Some(label),
            });
        }
    }
    write_manifest(out_dir.join("manifest.csv"), &entries, Some(out_dir))?;
    Ok(entries)
}
