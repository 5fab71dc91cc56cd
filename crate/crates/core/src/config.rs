//! Flat `key = value` run configuration shared by every subcommand.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! filters.F = 32
//! synth.class1_band = 3000,4000
//! ```
//!
//! Missing keys keep their defaults; unknown keys are errors.

use std::fs;
use std::path::Path;

use crate::audio::SynthSpec;
use crate::classifier::{FeatureMode, ModelSpec, TrainConfig};
use crate::cpc::CpcConfig;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub cpc: CpcConfig,
    pub synth: SynthSpec,
    pub folds: usize,
    pub transfer_relevance: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            cpc: CpcConfig::default(),
            synth: SynthSpec::default(),
            folds: 5,
            transfer_relevance: false,
        }
    }
}

/// Fixed offsets for per-module seeds.
const SEED_SYNTH: u64 = 1;
const SEED_INIT: u64 = 2;
const SEED_TRAIN: u64 = 3;
const SEED_CPC: u64 = 4;
const SEED_FOLDS: u64 = 5;

impl RunConfig {
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            seed: derive_seed(self.seed, SEED_SYNTH),
            sample_rate: self.model.model.sample_rate,
            ..self.synth.clone()
        }
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_INIT)
    }

    pub fn fold_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_FOLDS)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, SEED_TRAIN),
            jobs: self.jobs,
            ..self.train.clone()
        }
    }

    pub fn cpc_config(&self) -> CpcConfig {
        CpcConfig {
            seed: derive_seed(self.seed, SEED_CPC),
            ..self.cpc.clone()
        }
    }

    /// Checks every module precondition that can be known before any work.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let mc = &m.model;
        let sr = mc.sample_rate as f64;
        let fail = |msg: String| Err(Error::Config(msg));
        if self.jobs == 0 {
            return fail("jobs must be ≥ 1".into());
        }
        if m.n_filters == 0 {
            return fail("filters.F must be ≥ 1".into());
        }
        if m.kernel_len == 0 || m.kernel_len % 2 == 0 {
            return fail(format!("filters.L must be odd and ≥ 1, got {}", m.kernel_len));
        }
        if !(m.mu_min > 0.0 && m.mu_min < m.mu_max && m.mu_max < 0.5) {
            return fail(format!(
                "need 0 < filters.mu_min < filters.mu_max < 0.5, got {} and {}",
                m.mu_min, m.mu_max
            ));
        }
        if !(m.eps > 0.0) {
            return fail("filters.eps must be > 0".into());
        }
        if mc.sample_rate == 0 {
            return fail("audio.sample_rate must be > 0".into());
        }
        if mc.frame_len < m.kernel_len {
            return fail(format!(
                "audio.frame_len ({}) must be ≥ filters.L ({})",
                mc.frame_len, m.kernel_len
            ));
        }
        if mc.hop == 0 {
            return fail("audio.hop must be ≥ 1".into());
        }
        if !(mc.f_min > 0.0 && mc.f_min < mc.f_max && mc.f_max < sr / 2.0) {
            return fail(format!(
                "need 0 < filters.f_min < filters.f_max < sample_rate/2, got {} and {}",
                mc.f_min, mc.f_max
            ));
        }
        if mc.f_min / sr < m.mu_min || mc.f_max / sr > m.mu_max {
            return fail(format!(
                "mel init range [{}, {}] Hz falls outside the μ clamps [{}, {}]",
                mc.f_min, mc.f_max, m.mu_min, m.mu_max
            ));
        }
        if mc.relevance_hidden == 0 || mc.lstm_hidden == 0 {
            return fail("relevance.hidden and model.lstm_hidden must be ≥ 1".into());
        }
        if mc.delta_window == 0 {
            return fail("model.delta_window must be ≥ 1".into());
        }
        if self.folds < 2 {
            return fail("eval.folds must be ≥ 2".into());
        }
        self.train.validate()?;
        self.cpc.validate()?;
        self.synth_spec().validate()
    }

    /// Every key with its resolved value, one `key = value` line each.
    /// Parsing the output yields the same configuration.
    pub fn render(&self) -> String {
        let m = &self.model;
        let mc = &m.model;
        let t = &self.train;
        let c = &self.cpc;
        let s = &self.synth;
        let lines = [
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
            ("audio.sample_rate", mc.sample_rate.to_string()),
            ("audio.frame_len", mc.frame_len.to_string()),
            ("audio.hop", mc.hop.to_string()),
            ("filters.F", m.n_filters.to_string()),
            ("filters.L", m.kernel_len.to_string()),
            ("filters.mu_min", fmt_f(m.mu_min)),
            ("filters.mu_max", fmt_f(m.mu_max)),
            ("filters.eps", fmt_f(m.eps)),
            ("filters.f_min", fmt_f(mc.f_min)),
            ("filters.f_max", fmt_f(mc.f_max)),
            ("relevance.hidden", mc.relevance_hidden.to_string()),
            ("model.features", mc.features.as_str().to_string()),
            ("model.lstm_hidden", mc.lstm_hidden.to_string()),
            ("model.delta_window", mc.delta_window.to_string()),
            ("model.normalize", mc.normalize.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.lr", fmt_f(t.lr)),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.freeze_filters", t.freeze_filters.to_string()),
            ("train.freeze_relevance", t.freeze_relevance.to_string()),
            ("transfer.include_relevance", self.transfer_relevance.to_string()),
            ("cpc.K", c.k.to_string()),
            ("cpc.N", c.negatives.to_string()),
            ("cpc.context_dim", c.context_dim.to_string()),
            ("cpc.lr", fmt_f(c.lr)),
            ("cpc.steps", c.steps.to_string()),
            ("cpc.batch_files", c.batch_files.to_string()),
            ("cpc.anchors_per_file", c.anchors_per_file.to_string()),
            ("synth.n_per_class", s.n_per_class.to_string()),
            ("synth.duration_s", fmt_f(s.duration_s)),
            ("synth.class0_band", format!("{},{}", fmt_f(s.class0_band.0), fmt_f(s.class0_band.1))),
            ("synth.class1_band", format!("{},{}", fmt_f(s.class1_band.0), fmt_f(s.class1_band.1))),
            ("synth.snr_db", fmt_f(s.snr_db)),
            ("eval.folds", self.folds.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn fmt_f(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v:?}")
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_band(key: &str, v: &str) -> Result<(f64, f64)> {
    match v.split(',').map(str::trim).collect::<Vec<_>>()[..] {
        [a, b] => Ok((parse_num(key, a)?, parse_num(key, b)?)),
        _ => Err(Error::Config(format!("{key}: expected lo,hi in Hz, got {v:?}"))),
    }
}

fn apply(cfg: &mut RunConfig, key: &str, v: &str) -> Result<()> {
    let m = &mut cfg.model;
    let mc = &mut m.model;
    match key {
        "seed" => cfg.seed = parse_num(key, v)?,
        "jobs" => cfg.jobs = parse_num(key, v)?,
        "audio.sample_rate" => mc.sample_rate = parse_num(key, v)?,
        "audio.frame_len" => mc.frame_len = parse_num(key, v)?,
        "audio.hop" => mc.hop = parse_num(key, v)?,
        "filters.F" => m.n_filters = parse_num(key, v)?,
        "filters.L" => m.kernel_len = parse_num(key, v)?,
        "filters.mu_min" => m.mu_min = parse_num(key, v)?,
        "filters.mu_max" => m.mu_max = parse_num(key, v)?,
        "filters.eps" => m.eps = parse_num(key, v)?,
        "filters.f_min" => mc.f_min = parse_num(key, v)?,
        "filters.f_max" => mc.f_max = parse_num(key, v)?,
        "relevance.hidden" => mc.relevance_hidden = parse_num(key, v)?,
        "model.features" => {
            mc.features = FeatureMode::parse(v).ok_or_else(|| {
                Error::Config(format!("{key}: expected cosgauss-relev, cosgauss or mel, got {v:?}"))
            })?
        }
        "model.lstm_hidden" => mc.lstm_hidden = parse_num(key, v)?,
        "model.delta_window" => mc.delta_window = parse_num(key, v)?,
        "model.normalize" => mc.normalize = parse_bool(key, v)?,
        "train.epochs" => cfg.train.epochs = parse_num(key, v)?,
        "train.lr" => cfg.train.lr = parse_num(key, v)?,
        "train.batch_size" => cfg.train.batch_size = parse_num(key, v)?,
        "train.freeze_filters" => cfg.train.freeze_filters = parse_bool(key, v)?,
        "train.freeze_relevance" => cfg.train.freeze_relevance = parse_bool(key, v)?,
        "transfer.include_relevance" => cfg.transfer_relevance = parse_bool(key, v)?,
        "cpc.K" => cfg.cpc.k = parse_num(key, v)?,
        "cpc.N" => cfg.cpc.negatives = parse_num(key, v)?,
        "cpc.context_dim" => cfg.cpc.context_dim = parse_num(key, v)?,
        "cpc.lr" => cfg.cpc.lr = parse_num(key, v)?,
        "cpc.steps" => cfg.cpc.steps = parse_num(key, v)?,
        "cpc.batch_files" => cfg.cpc.batch_files = parse_num(key, v)?,
        "cpc.anchors_per_file" => cfg.cpc.anchors_per_file = parse_num(key, v)?,
        "synth.n_per_class" => cfg.synth.n_per_class = parse_num(key, v)?,
        "synth.duration_s" => cfg.synth.duration_s = parse_num(key, v)?,
        "synth.class0_band" => cfg.synth.class0_band = parse_band(key, v)?,
        "synth.class1_band" => cfg.synth.class1_band = parse_band(key, v)?,
        "synth.snr_db" => cfg.synth.snr_db = parse_num(key, v)?,
        "eval.folds" => cfg.folds = parse_num(key, v)?,
        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
    }
    Ok(())
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        apply(&mut cfg, key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(parse_config_str("").unwrap(), RunConfig::default());
        assert_eq!(parse_config_str("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn single_override() {
        let c = parse_config_str("filters.F = 32\n").unwrap();
        let mut want = RunConfig::default();
        want.model.n_filters = 32;
        assert_eq!(c, want);
    }

    #[test]
    fn violations_are_named() {
        let e = parse_config_str("filters.mu_max = 0.6").unwrap_err().to_string();
        assert!(e.contains("mu_max"), "{e}");
        let e = parse_config_str("filters.bogus = 1").unwrap_err().to_string();
        assert!(e.contains("filters.bogus"), "{e}");
        let e = parse_config_str("train.epochs = many").unwrap_err().to_string();
        assert!(e.contains("train.epochs"), "{e}");
        assert!(parse_config_str("filters.L = 256").is_err());
        assert!(parse_config_str("seed 4").is_err());
    }

    #[test]
    fn render_roundtrips() {
        let text = "seed = 9\nfilters.F = 16\nsynth.class0_band = 400,1200\nmodel.features = mel\ntrain.lr = 0.003\n";
        let c = parse_config_str(text).unwrap();
        assert_eq!(parse_config_str(&c.render()).unwrap(), c);
        assert_eq!(parse_config_str(&RunConfig::default().render()).unwrap(), RunConfig::default());
    }

    #[test]
    fn module_seeds_differ() {
        let c = RunConfig::default();
        let seeds = [c.synth_spec().seed, c.init_seed(), c.train_config().seed, c.cpc_config().seed, c.fold_seed()];
        let set: std::collections::BTreeSet<_> = seeds.iter().collect();
        assert_eq!(set.len(), seeds.len());
    }
}
