//! Supervised detection back-end and the end-to-end training loop.
//!
//! Pipeline per recording:
//! frames → filterbank `I` → relevance mask `M` → `J = I ⊗ M` → `[J; Δ; ΔΔ]`
//! → per-row z-score → BiLSTM → BiLSTM → mean over time → dense → sigmoid.

use std::path::Path;

use log::{debug, info};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::audio::{self, frame_signal, ManifestEntry, Waveform};
use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::filterbank::{self, FbCache, FilterbankParams};
use crate::mel;
use crate::nn::{bce_with_logit, sigmoid, AdamConfig, AdamState, BiLstm, BiLstmCache, Dense, Parameters};
use crate::relevance::{self, RelevanceCache, RelevanceNet};
use crate::rng::{self, Rng};

pub const DEFAULT_LSTM_HIDDEN: usize = 64;
pub const DEFAULT_DELTA_WINDOW: usize = 2;
/// Floor on the per-row standard deviation in [`normalize_features`].
pub const STD_FLOOR: f64 = 1e-8;

/// Regression deltas with window `w` and edge replication, stacked as
/// `[x; Δx; ΔΔx]` (`3F × T`).
pub fn delta_features(x: ArrayView2<f64>, w: usize) -> Array2<f64> {
    let (n_f, n_t) = x.dim();
    let d1 = delta(x, w);
    let d2 = delta(d1.view(), w);
    let mut out = Array2::zeros((3 * n_f, n_t));
    out.slice_mut(ndarray::s![..n_f, ..]).assign(&x);
    out.slice_mut(ndarray::s![n_f..2 * n_f, ..]).assign(&d1);
    out.slice_mut(ndarray::s![2 * n_f.., ..]).assign(&d2);
    out
}

fn delta_denominator(w: usize) -> f64 {
    2.0 * (1..=w).map(|k| (k * k) as f64).sum::<f64>()
}

fn clamp_index(t: isize, n_t: usize) -> usize {
    t.clamp(0, n_t as isize - 1) as usize
}

fn delta(x: ArrayView2<f64>, w: usize) -> Array2<f64> {
    let (n_f, n_t) = x.dim();
    if w == 0 {
        return Array2::zeros((n_f, n_t));
    }
    let den = delta_denominator(w);
    Array2::from_shape_fn((n_f, n_t), |(i, t)| {
        let t = t as isize;
        (1..=w)
            .map(|k| {
                let k = k as isize;
                k as f64 * (x[[i, clamp_index(t + k, n_t)]] - x[[i, clamp_index(t - k, n_t)]])
            })
            .sum::<f64>()
            / den
    })
}

/// Transpose of [`delta`].
fn delta_backward(g: ArrayView2<f64>, w: usize) -> Array2<f64> {
    let (n_f, n_t) = g.dim();
    let mut out = Array2::zeros((n_f, n_t));
    if w == 0 {
        return out;
    }
    let den = delta_denominator(w);
    for i in 0..n_f {
        for t in 0..n_t {
            let gt = g[[i, t]] / den;
            for k in 1..=w as isize {
                let ti = t as isize;
                out[[i, clamp_index(ti + k, n_t)]] += k as f64 * gt;
                out[[i, clamp_index(ti - k, n_t)]] -= k as f64 * gt;
            }
        }
    }
    out
}

fn delta_features_backward(g: ArrayView2<f64>, w: usize) -> Array2<f64> {
    let n_f = g.nrows() / 3;
    let g0 = g.slice(ndarray::s![..n_f, ..]);
    let g1 = g.slice(ndarray::s![n_f..2 * n_f, ..]);
    let g2 = g.slice(ndarray::s![2 * n_f.., ..]);
    // x → d1 → d2, with d1 feeding both the output and d2
    let gd1 = &g1 + &delta_backward(g2, w);
    &g0 + &delta_backward(gd1.view(), w)
}

#[derive(Debug, Clone)]
pub struct NormCache {
    output: Array2<f64>,
    std: Array1<f64>,
    constant: Vec<bool>,
}

/// Per-row z-score (population std, floored at [`STD_FLOOR`]). Rows that are
/// exactly constant map to zero.
pub fn normalize_features(x: ArrayView2<f64>) -> (Array2<f64>, NormCache) {
    let (n_r, n_t) = x.dim();
    let mut out = Array2::zeros((n_r, n_t));
    let mut std = Array1::zeros(n_r);
    let mut constant = vec![false; n_r];
    for r in 0..n_r {
        let row = x.row(r);
        let first = row[0];
        if row.iter().all(|&v| v == first) {
            constant[r] = true;
            std[r] = STD_FLOOR;
            continue;
        }
        let mean = row.sum() / n_t as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_t as f64;
        let sd = var.sqrt().max(STD_FLOOR);
        std[r] = sd;
        for t in 0..n_t {
            out[[r, t]] = (row[t] - mean) / sd;
        }
    }
    (
        out.clone(),
        NormCache {
            output: out,
            std,
            constant,
        },
    )
}

fn normalize_backward(g: ArrayView2<f64>, cache: &NormCache) -> Array2<f64> {
    let (n_r, n_t) = g.dim();
    let mut out = Array2::zeros((n_r, n_t));
    for r in 0..n_r {
        if cache.constant[r] {
            continue;
        }
        let gr = g.row(r);
        let yr = cache.output.row(r);
        let sd = cache.std[r];
        let mean_g = gr.sum() / n_t as f64;
        // the floored branch treats σ as a constant
        let mean_gy = if sd > STD_FLOOR {
            gr.dot(&yr) / n_t as f64
        } else {
            0.0
        };
        for t in 0..n_t {
            out[[r, t]] = (gr[t] - mean_g - yr[t] * mean_gy) / sd;
        }
    }
    out
}

/// Which time-frequency representation feeds the recurrent back-end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Learnable cosine-Gaussian filterbank with relevance weighting.
    Relevance,
    /// Learnable cosine-Gaussian filterbank, no mask.
    Plain,
    /// Fixed log-mel spectrogram (no learnable front-end).
    Mel,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Relevance => "cosgauss-relev",
            FeatureMode::Plain => "cosgauss",
            FeatureMode::Mel => "mel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cosgauss-relev" => Some(Self::Relevance),
            "cosgauss" => Some(Self::Plain),
            "mel" => Some(Self::Mel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    /// Mel range used to initialize the filters (and by [`FeatureMode::Mel`]).
    pub f_min: f64,
    pub f_max: f64,
    pub relevance_hidden: usize,
    pub lstm_hidden: usize,
    pub delta_window: usize,
    pub normalize: bool,
    pub features: FeatureMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sample_rate: audio::CANONICAL_RATE,
            frame_len: audio::DEFAULT_FRAME_LEN,
            hop: audio::DEFAULT_HOP,
            f_min: 64.0,
            f_max: 7200.0,
            relevance_hidden: relevance::DEFAULT_HIDDEN,
            lstm_hidden: DEFAULT_LSTM_HIDDEN,
            delta_window: DEFAULT_DELTA_WINDOW,
            normalize: true,
            features: FeatureMode::Relevance,
        }
    }
}

/// Filterbank + relevance net + two BiLSTM layers + scalar head.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendModel {
    pub config: ModelConfig,
    pub filterbank: FilterbankParams,
    pub relevance: RelevanceNet,
    pub blstm1: BiLstm,
    pub blstm2: BiLstm,
    pub head: Dense,
}

/// Gradients of every parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub mu: Vec<f64>,
    pub relevance: RelevanceNet,
    pub blstm1: BiLstm,
    pub blstm2: BiLstm,
    pub head: Dense,
}

impl ModelGrads {
    fn accumulate(&mut self, other: &ModelGrads) {
        for (a, b) in self.mu.iter_mut().zip(&other.mu) {
            *a += b;
        }
        self.relevance.accumulate(&other.relevance);
        self.blstm1.accumulate(&other.blstm1);
        self.blstm2.accumulate(&other.blstm2);
        self.head.accumulate(&other.head);
    }

    fn scale(&mut self, k: f64) {
        self.mu.iter_mut().for_each(|g| *g *= k);
        self.relevance.scale(k);
        self.blstm1.scale(k);
        self.blstm2.scale(k);
        self.head.scale(k);
    }
}

impl BackendModel {
    /// Randomly initialized back-end around the given filterbank.
    pub fn new(config: ModelConfig, filterbank: FilterbankParams, rng: &mut Rng) -> Result<Self> {
        filterbank.validate()?;
        let n_f = filterbank.n_filters();
        let hc = config.lstm_hidden;
        let relevance = RelevanceNet::random(config.relevance_hidden, rng);
        let blstm1 = BiLstm::random(3 * n_f, hc, rng);
        let blstm2 = BiLstm::random(2 * hc, hc, rng);
        let head = Dense::random(2 * hc, 1, rng);
        let m = Self {
            config,
            filterbank,
            relevance,
            blstm1,
            blstm2,
            head,
        };
        m.validate()?;
        Ok(m)
    }

    /// Mel-initialized filters from `config`, random back-end.
    pub fn with_mel_filters(
        config: ModelConfig,
        n_filters: usize,
        kernel_len: usize,
        mu_min: f64,
        mu_max: f64,
        eps: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mu = filterbank::init_mel_centers(n_filters, config.f_min, config.f_max, config.sample_rate as f64)?;
        let fb = FilterbankParams::new(mu, kernel_len, mu_min, mu_max, eps)?;
        Self::new(config, fb, rng)
    }

    /// Same shapes with every back-end weight zero (relevance net, BiLSTMs, head).
    pub fn zero_backend(&self) -> Self {
        Self {
            config: self.config.clone(),
            filterbank: self.filterbank.clone(),
            relevance: self.relevance.zeros_like(),
            blstm1: self.blstm1.zeros_like(),
            blstm2: self.blstm2.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filterbank.validate()?;
        let n_f = self.filterbank.n_filters();
        if self.config.frame_len < self.filterbank.kernel_len {
            return Err(Error::Config(format!(
                "frame length {} shorter than kernel length {}",
                self.config.frame_len, self.filterbank.kernel_len
            )));
        }
        if self.config.hop == 0 {
            return Err(Error::Config("hop must be ≥ 1".into()));
        }
        let chain_ok = self.blstm1.n_in() == 3 * n_f
            && self.blstm2.n_in() == self.blstm1.n_out()
            && self.head.n_in() == self.blstm2.n_out()
            && self.head.n_out() == 1;
        if !chain_ok {
            return Err(Error::Shape(format!(
                "layer chain 3F={} → {}→{} → {}→{} → {}→{} is inconsistent",
                3 * n_f,
                self.blstm1.n_in(),
                self.blstm1.n_out(),
                self.blstm2.n_in(),
                self.blstm2.n_out(),
                self.head.n_in(),
                self.head.n_out()
            )));
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            mu: vec![0.0; self.filterbank.n_filters()],
            relevance: self.relevance.zeros_like(),
            blstm1: self.blstm1.zeros_like(),
            blstm2: self.blstm2.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    /// Learned spectrogram `I` for a waveform (or log-mel in mel mode).
    pub fn spectrogram(&self, w: &Waveform) -> Result<Array2<f64>> {
        Ok(self.frontend(w)?.0)
    }

    fn frontend(&self, w: &Waveform) -> Result<(Array2<f64>, Option<FbCache>)> {
        let frames = frame_signal(w, self.config.frame_len, self.config.hop)?;
        match self.config.features {
            FeatureMode::Mel => {
                let m = mel::log_mel(
                    &frames,
                    self.filterbank.n_filters(),
                    self.config.f_min,
                    self.config.f_max,
                    self.filterbank.eps,
                )?;
                Ok((m, None))
            }
            _ => {
                let (spec, cache) = filterbank::fb_forward(&frames, &self.filterbank)?;
                Ok((spec.values, Some(cache)))
            }
        }
    }
}

/// Everything needed to build a fresh mel-initialized model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: ModelConfig,
    pub n_filters: usize,
    pub kernel_len: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    pub eps: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            n_filters: filterbank::DEFAULT_FILTERS,
            kernel_len: filterbank::DEFAULT_KERNEL_LEN,
            mu_min: filterbank::DEFAULT_MU_MIN,
            mu_max: filterbank::DEFAULT_MU_MAX,
            eps: filterbank::DEFAULT_EPS,
        }
    }
}

impl ModelSpec {
    pub fn build(&self, rng: &mut Rng) -> Result<BackendModel> {
        BackendModel::with_mel_filters(
            self.model.clone(),
            self.n_filters,
            self.kernel_len,
            self.mu_min,
            self.mu_max,
            self.eps,
            rng,
        )
    }
}

/// Intermediate results of [`model_forward`], consumed by [`model_backward`].
#[derive(Debug, Clone)]
pub struct ModelCache {
    fb: Option<FbCache>,
    /// `I`, `M` and `J` (M is `None` without relevance weighting).
    pub spectrogram: Array2<f64>,
    pub mask: Option<Array2<f64>>,
    pub weighted: Array2<f64>,
    relevance: Option<RelevanceCache>,
    norm: Option<NormCache>,
    l1: BiLstmCache,
    l2: BiLstmCache,
    pooled: Array1<f64>,
    n_frames: usize,
    pub logit: f64,
}

/// Probability that the recording belongs to class 1.
pub fn model_forward(w: &Waveform, m: &BackendModel) -> Result<(f64, ModelCache)> {
    let (spec, fb) = m.frontend(w)?;
    let (mask, weighted, rel_cache) = if m.config.features == FeatureMode::Relevance {
        let (mask, cache) = relevance::relevance_forward(spec.view(), &m.relevance)?;
        let j = relevance::apply_mask(spec.view(), &mask)?;
        (Some(mask.values), j.values, Some(cache))
    } else {
        (None, spec.clone(), None)
    };
    let stacked = delta_features(weighted.view(), m.config.delta_window);
    let (feats, norm) = if m.config.normalize {
        let (y, c) = normalize_features(stacked.view());
        (y, Some(c))
    } else {
        (stacked, None)
    };
    let seq = feats.t().as_standard_layout().into_owned();
    let (h1, l1) = m.blstm1.forward(seq.view())?;
    let (h2, l2) = m.blstm2.forward(h1.view())?;
    let n_t = h2.nrows();
    let pooled = h2.mean_axis(Axis(0)).expect("at least one frame");
    let logit = m.head.forward(pooled.view())?[0];
    Ok((
        sigmoid(logit),
        ModelCache {
            fb,
            spectrogram: spec,
            mask,
            weighted,
            relevance: rel_cache,
            norm,
            l1,
            l2,
            pooled,
            n_frames: n_t,
            logit,
        },
    ))
}

/// Gradients of a loss w.r.t. every parameter group, given `∂loss/∂logit`.
pub fn model_backward(m: &BackendModel, cache: &ModelCache, grad_logit: f64) -> Result<ModelGrads> {
    let mut g = m.zero_grads();
    let dpooled = m
        .head
        .backward(cache.pooled.view(), Array1::from_elem(1, grad_logit).view(), &mut g.head)?;
    let n_t = cache.n_frames;
    let dh2 = Array2::from_shape_fn((n_t, dpooled.len()), |(_, k)| dpooled[k] / n_t as f64);
    let dh1 = m.blstm2.backward(&cache.l2, dh2.view(), &mut g.blstm2)?;
    let dseq = m.blstm1.backward(&cache.l1, dh1.view(), &mut g.blstm1)?;
    let dfeats = dseq.t().to_owned();
    let dstacked = match &cache.norm {
        Some(nc) => normalize_backward(dfeats.view(), nc),
        None => dfeats,
    };
    let dweighted = delta_features_backward(dstacked.view(), m.config.delta_window);
    let dspec = match &cache.relevance {
        Some(rc) => {
            let (dspec, dnet) = relevance::relevance_backward(dweighted.view(), rc)?;
            g.relevance = dnet;
            dspec
        }
        None => dweighted,
    };
    if let Some(fc) = &cache.fb {
        g.mu = filterbank::fb_backward(&dspec, fc)?;
    }
    Ok(g)
}

/// BCE loss and gradients for one labeled recording.
pub fn recording_loss(w: &Waveform, label: u8, m: &BackendModel) -> Result<(f64, ModelGrads)> {
    let (_, cache) = model_forward(w, m)?;
    let (loss, dlogit) = bce_with_logit(cache.logit, label as f64);
    let grads = model_backward(m, &cache, dlogit)?;
    Ok((loss, grads))
}

/// Reads, resamples and scores one file.
pub fn predict_file(m: &BackendModel, path: impl AsRef<Path>) -> Result<f64> {
    let w = audio::load_audio(path, m.config.sample_rate)?;
    Ok(model_forward(&w, m)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub freeze_filters: bool,
    pub freeze_relevance: bool,
    /// Worker threads for per-recording gradients; results are reduced in a
    /// fixed order so the thread count never changes the numbers.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            batch_size: 4,
            seed: 0,
            freeze_filters: false,
            freeze_relevance: false,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be ≥ 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("train.lr must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be ≥ 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Labeled, decoded and resampled recordings.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub items: Vec<(Waveform, u8)>,
}

impl LabeledSet {
    pub fn load(entries: &[ManifestEntry], sample_rate: u32) -> Result<Self> {
        let items = entries
            .iter()
            .map(|e| {
                let label = e.label.ok_or_else(|| {
                    Error::Manifest(format!("{} has no label", e.path.display()))
                })?;
                Ok((audio::load_audio(&e.path, sample_rate)?, label))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.items.iter().filter(|(_, l)| *l == 1).count();
        (self.items.len() - pos, pos)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: Option<f64>,
}

/// First epoch (1-based) whose validation AUC reaches `target`.
pub fn epochs_to_reach(history: &[EpochRecord], target: f64) -> Option<usize> {
    history
        .iter()
        .find(|r| r.val_auc.is_some_and(|a| a >= target))
        .map(|r| r.epoch)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Scores every recording of `set` with `m`.
pub fn score_set(m: &BackendModel, set: &LabeledSet, jobs: usize) -> Result<Vec<(f64, u8)>> {
    use rayon::prelude::*;
    let score = |(w, l): &(Waveform, u8)| model_forward(w, m).map(|(p, _)| (p, *l));
    if jobs <= 1 {
        set.items.iter().map(score).collect()
    } else {
        thread_pool(jobs)?.install(|| set.items.par_iter().map(score).collect())
    }
}

/// Adam on mean BCE over mini-batches. Frozen groups are never touched; μ is
/// projected into its clamps after every step.
pub fn train_supervised(
    mut model: BackendModel,
    train: &LabeledSet,
    val: Option<&LabeledSet>,
    cfg: &TrainConfig,
) -> Result<(BackendModel, Vec<EpochRecord>)> {
    use rayon::prelude::*;
    cfg.validate()?;
    model.validate()?;
    if train.is_empty() {
        return Err(Error::Manifest("training set is empty".into()));
    }
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Manifest(format!(
            "training set needs both classes, got {neg} negative and {pos} positive"
        )));
    }
    let pool = if cfg.jobs > 1 { Some(thread_pool(cfg.jobs)?) } else { None };
    let learn_filters = !cfg.freeze_filters && model.config.features != FeatureMode::Mel;
    let learn_relevance = !cfg.freeze_relevance && model.config.features == FeatureMode::Relevance;

    let adam = AdamConfig::with_lr(cfg.lr);
    let mut opt_mu = AdamState::new(adam);
    let mut opt_rel = AdamState::new(adam);
    let mut opt_back = AdamState::new(adam);
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, 101));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        rng::shuffle(&mut r, &mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let run = |&k: &usize| {
                let (w, l) = &train.items[k];
                recording_loss(w, *l, &model)
            };
            let results: Vec<(f64, ModelGrads)> = match &pool {
                Some(p) => p.install(|| batch.par_iter().map(run).collect::<Result<_>>())?,
                None => batch.iter().map(run).collect::<Result<_>>()?,
            };
            let mut grads = model.zero_grads();
            for (loss, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
                }
                total += loss;
                grads.accumulate(g);
            }
            grads.scale(1.0 / batch.len() as f64);

            if learn_filters {
                opt_mu.update(vec![&mut model.filterbank.mu], vec![&grads.mu])?;
                model.filterbank.clamp();
            }
            if learn_relevance {
                opt_rel.update(model.relevance.params_mut(), grads.relevance.params())?;
            }
            let mut back = model.blstm1.params_mut();
            back.extend(model.blstm2.params_mut());
            back.extend(model.head.params_mut());
            let mut gback = grads.blstm1.params();
            gback.extend(grads.blstm2.params());
            gback.extend(grads.head.params());
            opt_back.update(back, gback)?;
        }
        let train_loss = total / train.len() as f64;
        let val_auc = match val {
            Some(v) if !v.is_empty() => Some(roc_auc(&score_set(&model, v, cfg.jobs)?)?),
            _ => None,
        };
        info!(
            "epoch {epoch}: train_loss={train_loss:.5} val_auc={}",
            val_auc.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
        debug!("mu = {:?}", model.filterbank.mu);
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_auc,
        });
    }
    Ok((model, history))
}

/// `epoch,train_loss,val_auc` CSV (empty AUC field when there is no
/// validation set).
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_auc\n");
    for r in history {
        s.push_str(&format!(
            "{},{:.16e},{}\n",
            r.epoch,
            r.train_loss,
            r.val_auc.map_or(String::new(), |a| format!("{a:.16e}"))
        ));
    }
    s
}
