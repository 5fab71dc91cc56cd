//! Contrastive predictive coding on learned-spectrogram frames.
//!
//! The encoder is the filterbank itself (`z_t` is column `t` of `I`), the
//! context network is a single LSTM and each horizon `k` has its own affine
//! head. Negatives are other frame positions of the same mini-batch.

use log::{info, warn};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::audio::{frame_signal, Waveform};
use crate::checkpoint::{filterbank_from, push_dense, push_filterbank, push_lstm, read_dense, read_lstm, Checkpoint, CheckpointKind};
use crate::error::{Error, Result};
use crate::filterbank::{fb_backward, fb_forward, FbCache, FilterbankParams};
use crate::nn::{info_nce_loss, AdamConfig, AdamState, Dense, LstmCell, LstmSeqCache, Parameters};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct CpcConfig {
    /// Prediction horizon `K`.
    pub k: usize,
    /// Negatives per positive `N`.
    pub negatives: usize,
    /// Context dimension `C`.
    pub context_dim: usize,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    pub batch_files: usize,
    pub anchors_per_file: usize,
}

impl Default for CpcConfig {
    fn default() -> Self {
        Self {
            k: 4,
            negatives: 10,
            context_dim: 64,
            lr: 1e-3,
            steps: 200,
            seed: 0,
            batch_files: 8,
            anchors_per_file: 8,
        }
    }
}

impl CpcConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.k >= 1, "cpc.K must be ≥ 1"),
            (self.negatives >= 1, "cpc.N must be ≥ 1"),
            (self.context_dim >= 1, "cpc.context_dim must be ≥ 1"),
            (self.lr > 0.0 && self.lr.is_finite(), "cpc.lr must be > 0"),
            (self.batch_files >= 1, "cpc.batch_files must be ≥ 1"),
            (self.anchors_per_file >= 1, "cpc.anchors_per_file must be ≥ 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config(msg.to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpcModel {
    pub filterbank: FilterbankParams,
    pub g_ar: LstmCell,
    /// `heads[k-1]` predicts `z_{t+k}` from `c_t`.
    pub heads: Vec<Dense>,
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
}

impl CpcModel {
    pub fn new(
        filterbank: FilterbankParams,
        cfg: &CpcConfig,
        sample_rate: u32,
        frame_len: usize,
        hop: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let n_f = filterbank.n_filters();
        let g_ar = LstmCell::random(n_f, cfg.context_dim, rng);
        let heads = (0..cfg.k).map(|_| Dense::random(cfg.context_dim, n_f, rng)).collect();
        let m = Self {
            filterbank,
            g_ar,
            heads,
            sample_rate,
            frame_len,
            hop,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn horizon(&self) -> usize {
        self.heads.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.filterbank.validate()?;
        let n_f = self.filterbank.n_filters();
        let c = self.g_ar.hidden();
        if self.heads.is_empty() {
            return Err(Error::Shape("CPC model needs at least one head".into()));
        }
        if self.g_ar.n_in() != n_f || self.heads.iter().any(|h| h.n_in() != c || h.n_out() != n_f) {
            return Err(Error::Shape(format!("CPC chain must be F={n_f} → C={c} → F")));
        }
        if self.frame_len < self.filterbank.kernel_len || self.hop == 0 {
            return Err(Error::Config(format!(
                "frame length {} / hop {} incompatible with kernel length {}",
                self.frame_len, self.hop, self.filterbank.kernel_len
            )));
        }
        Ok(())
    }

    fn zero_grads(&self) -> CpcGrads {
        CpcGrads {
            mu: vec![0.0; self.filterbank.n_filters()],
            g_ar: self.g_ar.zeros_like(),
            heads: self.heads.iter().map(Dense::zeros_like).collect(),
        }
    }
}

/// Gradients of the mean InfoNCE loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CpcGrads {
    pub mu: Vec<f64>,
    pub g_ar: LstmCell,
    pub heads: Vec<Dense>,
}

fn encode_with_cache(w: &Waveform, m: &CpcModel) -> Result<(Array2<f64>, FbCache)> {
    let frames = frame_signal(w, m.frame_len, m.hop)?;
    let (spec, cache) = fb_forward(&frames, &m.filterbank)?;
    Ok((spec.values.t().as_standard_layout().into_owned(), cache))
}

fn n_frames(w: &Waveform, m: &CpcModel) -> usize {
    crate::audio::frame_count(w.len(), m.frame_len, m.hop)
}

/// Frame encodings `z_1..z_T` as the rows of a `T × F` matrix.
pub fn encode_frames(w: &Waveform, m: &CpcModel) -> Result<Array2<f64>> {
    let need = m.horizon() + 1;
    let have = n_frames(w, m);
    if have < need {
        return Err(Error::TooShort { len: have, needed: need });
    }
    Ok(encode_with_cache(w, m)?.0)
}

/// `c_t` after consuming all rows of `z` from zero state.
pub fn context_forward(z: ArrayView2<f64>, g_ar: &LstmCell) -> Result<Array1<f64>> {
    let cache = g_ar.forward_seq(z)?;
    Ok(cache.hidden.row(cache.hidden.nrows() - 1).to_owned())
}

/// `⟨head(c_t), z_j⟩` for every candidate row.
pub fn cpc_scores(c_t: ArrayView1<f64>, candidates: ArrayView2<f64>, head: &Dense) -> Result<Array1<f64>> {
    if candidates.ncols() != head.n_out() {
        return Err(Error::Shape(format!(
            "candidates have {} dims, head predicts {}",
            candidates.ncols(),
            head.n_out()
        )));
    }
    let pred = head.forward(c_t)?;
    Ok(candidates.dot(&pred))
}

/// One prediction: from `c_t` of `file`, pick `z_{t+k}` out of the negatives.
/// Positions are `(file, frame)` within the batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub file: usize,
    pub t: usize,
    pub k: usize,
    pub negatives: Vec<(usize, usize)>,
}

/// Random anchors for a batch whose files have `lengths` frames. Every anchor
/// yields one [`Prediction`] per horizon; negatives are uniform over all other
/// batch positions (with replacement).
pub fn sample_predictions(lengths: &[usize], horizon: usize, negatives: usize, anchors_per_file: usize, rng: &mut Rng) -> Result<Vec<Prediction>> {
    let total: usize = lengths.iter().sum();
    if total < 2 {
        return Err(Error::Argument("batch needs at least two frame positions".into()));
    }
    let offsets: Vec<usize> = lengths
        .iter()
        .scan(0, |acc, &n| {
            let o = *acc;
            *acc += n;
            Some(o)
        })
        .collect();
    let locate = |flat: usize| {
        let b = offsets.partition_point(|&o| o <= flat) - 1;
        (b, flat - offsets[b])
    };
    let mut out = Vec::new();
    for (b, &n_t) in lengths.iter().enumerate() {
        if n_t < horizon + 1 {
            return Err(Error::TooShort { len: n_t, needed: horizon + 1 });
        }
        for _ in 0..anchors_per_file {
            let t = rng::index(rng, n_t - horizon);
            for k in 1..=horizon {
                let pos = offsets[b] + t + k;
                let negs = (0..negatives)
                    .map(|_| {
                        let j = rng::index(rng, total - 1);
                        locate(if j >= pos { j + 1 } else { j })
                    })
                    .collect();
                out.push(Prediction { file: b, t, k, negatives: negs });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpcStats {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: usize,
}

/// Mean InfoNCE over `preds` and, when `with_grads`, its gradients.
pub fn cpc_batch(m: &CpcModel, batch: &[&Waveform], preds: &[Prediction], with_grads: bool) -> Result<(CpcStats, Option<CpcGrads>)> {
    if preds.is_empty() {
        return Err(Error::Argument("no predictions to score".into()));
    }
    let mut zs = Vec::with_capacity(batch.len());
    let mut fbs = Vec::with_capacity(batch.len());
    let mut ctx: Vec<LstmSeqCache> = Vec::with_capacity(batch.len());
    for w in batch {
        let (z, fb) = encode_with_cache(w, m)?;
        ctx.push(m.g_ar.forward_seq(z.view())?);
        zs.push(z);
        fbs.push(fb);
    }
    let mut grads = with_grads.then(|| m.zero_grads());
    let mut dz: Vec<Array2<f64>> = zs.iter().map(|z| Array2::zeros(z.dim())).collect();
    let mut dc: Vec<Array2<f64>> = ctx.iter().map(|c| Array2::zeros(c.hidden.dim())).collect();
    let scale = 1.0 / preds.len() as f64;
    let (mut loss, mut correct) = (0.0, 0usize);

    for p in preds {
        let head = &m.heads[p.k - 1];
        let c_t = ctx[p.file].hidden.row(p.t);
        let pred = head.forward(c_t)?;
        let z_pos = zs[p.file].row(p.t + p.k);
        let pos = pred.dot(&z_pos);
        let negs: Vec<f64> = p.negatives.iter().map(|&(b, s)| pred.dot(&zs[b].row(s))).collect();
        let (l, gp, gn) = info_nce_loss(pos, &negs);
        loss += l;
        if negs.iter().all(|&s| pos > s) {
            correct += 1;
        }
        if let Some(g) = grads.as_mut() {
            let mut dpred = &z_pos * (scale * gp);
            dz[p.file].row_mut(p.t + p.k).scaled_add(scale * gp, &pred);
            for (&(b, s), &gj) in p.negatives.iter().zip(&gn) {
                dpred.scaled_add(scale * gj, &zs[b].row(s));
                dz[b].row_mut(s).scaled_add(scale * gj, &pred);
            }
            let dct = head.backward(c_t, dpred.view(), &mut g.heads[p.k - 1])?;
            dc[p.file].row_mut(p.t).scaled_add(1.0, &dct);
        }
    }
    if let Some(g) = grads.as_mut() {
        for b in 0..batch.len() {
            let dz_ctx = m.g_ar.backward_seq(&ctx[b], dc[b].view(), &mut g.g_ar)?;
            dz[b] += &dz_ctx;
            let dmu = fb_backward(&dz[b].t().to_owned(), &fbs[b])?;
            for (a, d) in g.mu.iter_mut().zip(dmu) {
                *a += d;
            }
        }
    }
    let stats = CpcStats {
        loss: loss * scale,
        accuracy: correct as f64 * scale,
        predictions: preds.len(),
    };
    Ok((stats, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpcRecord {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// `step,loss,contrastive_accuracy` CSV.
pub fn cpc_history_csv(history: &[CpcRecord]) -> String {
    let mut s = String::from("step,loss,contrastive_accuracy\n");
    for r in history {
        s.push_str(&format!("{},{:.16e},{:.16e}\n", r.step, r.loss, r.accuracy));
    }
    s
}

fn usable<'a>(m: &CpcModel, set: &'a [Waveform]) -> Result<Vec<&'a Waveform>> {
    let need = m.horizon() + 1;
    let kept: Vec<&Waveform> = set
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            let n = n_frames(w, m);
            if n < need {
                warn!("skipping recording {i}: {n} frames, CPC needs {need}");
                None
            } else {
                Some(w)
            }
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::TooShort { len: 0, needed: need });
    }
    Ok(kept)
}

/// Cycles through a shuffled file order, reshuffling after each pass.
struct BatchCycler {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCycler {
    fn new(n: usize) -> Self {
        Self { order: (0..n).collect(), pos: n }
    }

    fn next(&mut self, size: usize, rng: &mut Rng) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                rng::shuffle(rng, &mut self.order);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Loss and contrastive accuracy of a frozen model over at least
/// `min_predictions` sampled predictions.
pub fn evaluate_cpc(m: &CpcModel, set: &[Waveform], cfg: &CpcConfig, min_predictions: usize) -> Result<CpcStats> {
    cfg.validate()?;
    let files = usable(m, set)?;
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, 202));
    let mut cycler = BatchCycler::new(files.len());
    let (mut loss, mut correct, mut count) = (0.0, 0.0, 0usize);
    while count < min_predictions {
        let idx = cycler.next(cfg.batch_files, &mut r);
        let batch: Vec<&Waveform> = idx.iter().map(|&i| files[i]).collect();
        let lengths: Vec<usize> = batch.iter().map(|w| n_frames(w, m)).collect();
        let preds = sample_predictions(&lengths, m.horizon(), cfg.negatives, cfg.anchors_per_file, &mut r)?;
        let (s, _) = cpc_batch(m, &batch, &preds, false)?;
        loss += s.loss * s.predictions as f64;
        correct += s.accuracy * s.predictions as f64;
        count += s.predictions;
    }
    Ok(CpcStats {
        loss: loss / count as f64,
        accuracy: correct / count as f64,
        predictions: count,
    })
}

/// Self-supervised training of filters, context network and heads. Only the
/// waveforms are used. μ is projected into its clamps after every step.
pub fn pretrain_cpc(mut m: CpcModel, set: &[Waveform], cfg: &CpcConfig) -> Result<(CpcModel, Vec<CpcRecord>)> {
    cfg.validate()?;
    m.validate()?;
    if m.horizon() != cfg.k || m.g_ar.hidden() != cfg.context_dim {
        return Err(Error::Config(format!(
            "model has K={}, C={}; config asks for K={}, C={}",
            m.horizon(),
            m.g_ar.hidden(),
            cfg.k,
            cfg.context_dim
        )));
    }
    let files = usable(&m, set)?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut opt_mu = AdamState::new(adam);
    let mut opt_net = AdamState::new(adam);
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, 201));
    let mut cycler = BatchCycler::new(files.len());
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let idx = cycler.next(cfg.batch_files, &mut r);
        let batch: Vec<&Waveform> = idx.iter().map(|&i| files[i]).collect();
        let lengths: Vec<usize> = batch.iter().map(|w| n_frames(w, &m)).collect();
        let preds = sample_predictions(&lengths, m.horizon(), cfg.negatives, cfg.anchors_per_file, &mut r)?;
        let (stats, grads) = cpc_batch(&m, &batch, &preds, true)?;
        let g = grads.expect("gradients requested");
        if !stats.loss.is_finite() {
            return Err(Error::NonFinite(format!("CPC loss at step {step}")));
        }
        opt_mu.update(vec![&mut m.filterbank.mu], vec![&g.mu])?;
        m.filterbank.clamp();
        let mut params = m.g_ar.params_mut();
        let mut gs = g.g_ar.params();
        for (h, gh) in m.heads.iter_mut().zip(&g.heads) {
            params.extend(h.params_mut());
            gs.extend(gh.params());
        }
        opt_net.update(params, gs)?;
        if step % 10 == 0 || step == cfg.steps {
            info!("cpc step {step}: loss={:.5} acc={:.3}", stats.loss, stats.accuracy);
        }
        history.push(CpcRecord {
            step,
            loss: stats.loss,
            accuracy: stats.accuracy,
        });
    }
    Ok((m, history))
}

pub fn cpc_checkpoint(m: &CpcModel, provenance: &str) -> Checkpoint {
    let mut ck = Checkpoint::new(CheckpointKind::Cpc, provenance);
    push_filterbank(&mut ck, &m.filterbank);
    push_lstm(&mut ck, "g_ar", &m.g_ar);
    for (k, h) in m.heads.iter().enumerate() {
        push_dense(&mut ck, &format!("heads.{}", k + 1), h);
    }
    ck.set_int("K", m.heads.len() as i64);
    ck.set_int("C", m.g_ar.hidden() as i64);
    ck.set_int("sample_rate", m.sample_rate as i64);
    ck.set_int("frame_len", m.frame_len as i64);
    ck.set_int("hop", m.hop as i64);
    ck
}

pub fn cpc_from(ck: &Checkpoint) -> Result<CpcModel> {
    if ck.kind != CheckpointKind::Cpc {
        return Err(Error::Incompatible(format!("expected a cpc checkpoint, got {}", ck.kind.as_str())));
    }
    let filterbank = filterbank_from(ck)?;
    let n_f = filterbank.n_filters();
    let c = ck.int("C")? as usize;
    let k = ck.int("K")? as usize;
    let m = CpcModel {
        g_ar: read_lstm(ck, "g_ar", n_f, c)?,
        heads: (1..=k)
            .map(|i| read_dense(ck, &format!("heads.{i}"), c, n_f))
            .collect::<Result<_>>()?,
        sample_rate: ck.int("sample_rate")? as u32,
        frame_len: ck.int("frame_len")? as usize,
        hop: ck.int("hop")? as usize,
        filterbank,
    };
    m.validate()?;
    Ok(m)
}
