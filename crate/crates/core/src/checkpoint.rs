//! Versioned JSON checkpoints and filter transfer between models.
//!
//! A checkpoint is one UTF-8 JSON document:
//!
//! ```json
//! {
//! "arrays":[
//! {"name":"mu","shape":[2],"values":[3.7500000000000000e-2,2.5000000000000000e-1]}
//! ],
//! "config":{"F":2,"L":257,"eps":1.0000000000000000e-10,"mu_max":4.5000000000000001e-1,"mu_min":4.0000000000000001e-3},
//! "format_version":1,
//! "kind":"filterbank",
//! "provenance":"mel init"
//! }
//! ```
//!
//! Keys are sorted at every level, arrays are sorted by name and every float
//! is written with 17 significant digits, so equal parameters always produce
//! byte-identical files and reloading is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::Value;

use crate::classifier::{BackendModel, FeatureMode, ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::filterbank::FilterbankParams;
use crate::nn::{BiLstm, Dense, LstmCell};
use crate::relevance::RelevanceNet;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Filterbank,
    Cpc,
    Backend,
}

impl CheckpointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Filterbank => "filterbank",
            Self::Cpc => "cpc",
            Self::Backend => "backend",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "filterbank" => Some(Self::Filterbank),
            "cpc" => Some(Self::Cpc),
            "backend" => Some(Self::Backend),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u64,
    pub kind: CheckpointKind,
    pub arrays: Vec<NamedArray>,
    pub config: BTreeMap<String, ConfigValue>,
    pub provenance: String,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

impl Checkpoint {
    pub fn new(kind: CheckpointKind, provenance: impl Into<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind,
            arrays: Vec::new(),
            config: BTreeMap::new(),
            provenance: provenance.into(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: &[f64]) {
        self.arrays.push(NamedArray {
            name: name.into(),
            shape,
            values: values.to_vec(),
        });
    }

    pub fn push_matrix(&mut self, name: &str, m: &Array2<f64>) {
        let v: Vec<f64> = m.iter().copied().collect();
        self.push(name, vec![m.nrows(), m.ncols()], &v);
    }

    pub fn push_vector(&mut self, name: &str, v: &Array1<f64>) {
        let data: Vec<f64> = v.iter().copied().collect();
        self.push(name, vec![v.len()], &data);
    }

    pub fn set_int(&mut self, key: &str, v: i64) {
        self.config.insert(key.into(), ConfigValue::Int(v));
    }

    pub fn set_float(&mut self, key: &str, v: f64) {
        self.config.insert(key.into(), ConfigValue::Float(v));
    }

    pub fn set_text(&mut self, key: &str, v: &str) {
        self.config.insert(key.into(), ConfigValue::Text(v.into()));
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::CheckpointParse(format!("missing array {name:?}")))
    }

    pub fn has_array(&self, name: &str) -> bool {
        self.arrays.iter().any(|a| a.name == name)
    }

    pub fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let a = self.array(name)?;
        if a.shape != [rows, cols] {
            return Err(Error::Incompatible(format!(
                "array {name} has shape {:?}, expected [{rows}, {cols}]",
                a.shape
            )));
        }
        Ok(Array2::from_shape_vec((rows, cols), a.values.clone()).expect("validated on load"))
    }

    pub fn vector(&self, name: &str, len: usize) -> Result<Array1<f64>> {
        let a = self.array(name)?;
        if a.shape != [len] {
            return Err(Error::Incompatible(format!(
                "array {name} has shape {:?}, expected [{len}]",
                a.shape
            )));
        }
        Ok(Array1::from(a.values.clone()))
    }

    pub fn int(&self, key: &str) -> Result<i64> {
        match self.config.get(key) {
            Some(ConfigValue::Int(v)) => Ok(*v),
            _ => Err(Error::CheckpointParse(format!("config.{key} missing or not an integer"))),
        }
    }

    pub fn float(&self, key: &str) -> Result<f64> {
        match self.config.get(key) {
            Some(ConfigValue::Float(v)) => Ok(*v),
            Some(ConfigValue::Int(v)) => Ok(*v as f64),
            _ => Err(Error::CheckpointParse(format!("config.{key} missing or not a number"))),
        }
    }

    pub fn text(&self, key: &str) -> Result<&str> {
        match self.config.get(key) {
            Some(ConfigValue::Text(v)) => Ok(v),
            _ => Err(Error::CheckpointParse(format!("config.{key} missing or not a string"))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let mut names = std::collections::BTreeSet::new();
        for a in &self.arrays {
            let n: usize = a.shape.iter().product();
            if n != a.values.len() {
                return Err(Error::Shape(format!(
                    "array {} declares shape {:?} ({n} values) but holds {}",
                    a.name,
                    a.shape,
                    a.values.len()
                )));
            }
            if let Some(v) = a.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("array {} contains {v}", a.name)));
            }
            if !names.insert(a.name.as_str()) {
                return Err(Error::CheckpointParse(format!("duplicate array {}", a.name)));
            }
        }
        Ok(())
    }

    /// Canonical text form.
    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut arrays: Vec<&NamedArray> = self.arrays.iter().collect();
        arrays.sort_by(|a, b| a.name.cmp(&b.name));
        let mut s = String::from("{\n\"arrays\":[\n");
        for (k, a) in arrays.iter().enumerate() {
            let shape: Vec<String> = a.shape.iter().map(|d| d.to_string()).collect();
            let values: Vec<String> = a.values.iter().map(|&v| fmt_f64(v)).collect();
            s.push_str(&format!(
                "{{\"name\":{},\"shape\":[{}],\"values\":[{}]}}",
                json_str(&a.name),
                shape.join(","),
                values.join(",")
            ));
            s.push_str(if k + 1 < arrays.len() { ",\n" } else { "\n" });
        }
        s.push_str("],\n\"config\":{");
        let cfg: Vec<String> = self
            .config
            .iter()
            .map(|(k, v)| {
                let v = match v {
                    ConfigValue::Int(i) => i.to_string(),
                    ConfigValue::Float(f) => {
                        if !f.is_finite() {
                            return Err(Error::NonFinite(format!("config.{k}")));
                        }
                        fmt_f64(*f)
                    }
                    ConfigValue::Text(t) => json_str(t),
                };
                Ok(format!("{}:{}", json_str(k), v))
            })
            .collect::<Result<_>>()?;
        s.push_str(&cfg.join(","));
        s.push_str("},\n");
        s.push_str(&format!("\"format_version\":{},\n", self.format_version));
        s.push_str(&format!("\"kind\":{},\n", json_str(self.kind.as_str())));
        s.push_str(&format!("\"provenance\":{}\n}}\n", json_str(&self.provenance)));
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::CheckpointParse(e.to_string()))?;
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::CheckpointParse("top level is not an object".into()))?;
        let perr = |m: &str| Error::CheckpointParse(m.to_string());

        let version = obj
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| perr("format_version missing or not an unsigned integer"))?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let kind_s = obj.get("kind").and_then(Value::as_str).ok_or_else(|| perr("kind missing"))?;
        let kind = CheckpointKind::parse(kind_s)
            .ok_or_else(|| Error::CheckpointParse(format!("unknown checkpoint kind {kind_s:?}")))?;
        let provenance = obj
            .get("provenance")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();

        let mut arrays = Vec::new();
        for a in obj
            .get("arrays")
            .and_then(Value::as_array)
            .ok_or_else(|| perr("arrays missing"))?
        {
            let name = a
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| perr("array without name"))?
                .to_string();
            let shape = a
                .get("shape")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::CheckpointParse(format!("array {name} has no shape")))?
                .iter()
                .map(|d| d.as_u64().map(|d| d as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::CheckpointParse(format!("array {name} has a bad shape")))?;
            let values = a
                .get("values")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::CheckpointParse(format!("array {name} has no values")))?
                .iter()
                .map(Value::as_f64)
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::CheckpointParse(format!("array {name} has non-numeric values")))?;
            arrays.push(NamedArray { name, shape, values });
        }

        let mut config = BTreeMap::new();
        for (k, v) in obj
            .get("config")
            .and_then(Value::as_object)
            .ok_or_else(|| perr("config missing"))?
        {
            let cv = match v {
                Value::Number(n) if n.is_i64() => ConfigValue::Int(n.as_i64().unwrap()),
                Value::Number(n) => ConfigValue::Float(n.as_f64().ok_or_else(|| perr("bad number"))?),
                Value::String(s) => ConfigValue::Text(s.clone()),
                Value::Bool(b) => ConfigValue::Int(*b as i64),
                _ => return Err(Error::CheckpointParse(format!("config.{k} has an unsupported type"))),
            };
            config.insert(k.clone(), cv);
        }
        let ck = Self {
            format_version: version,
            kind,
            arrays,
            config,
            provenance,
        };
        ck.validate()?;
        Ok(ck)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = ck.to_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

pub(crate) fn push_filterbank(ck: &mut Checkpoint, p: &FilterbankParams) {
    ck.push("mu", vec![p.mu.len()], &p.mu);
    ck.set_int("F", p.mu.len() as i64);
    ck.set_int("L", p.kernel_len as i64);
    ck.set_float("mu_min", p.mu_min);
    ck.set_float("mu_max", p.mu_max);
    ck.set_float("eps", p.eps);
}

/// Filterbank parameters stored in any checkpoint kind.
pub fn filterbank_from(ck: &Checkpoint) -> Result<FilterbankParams> {
    let f = ck.int("F")? as usize;
    let l = ck.int("L")? as usize;
    let mu = ck.vector("mu", f)?.to_vec();
    FilterbankParams::new(mu, l, ck.float("mu_min")?, ck.float("mu_max")?, ck.float("eps")?)
}

pub fn filterbank_checkpoint(p: &FilterbankParams, provenance: &str) -> Checkpoint {
    let mut ck = Checkpoint::new(CheckpointKind::Filterbank, provenance);
    push_filterbank(&mut ck, p);
    ck
}

pub(crate) fn push_dense(ck: &mut Checkpoint, prefix: &str, d: &Dense) {
    ck.push_matrix(&format!("{prefix}.w"), &d.w);
    ck.push_vector(&format!("{prefix}.b"), &d.b);
}

pub(crate) fn read_dense(ck: &Checkpoint, prefix: &str, n_in: usize, n_out: usize) -> Result<Dense> {
    Ok(Dense {
        w: ck.matrix(&format!("{prefix}.w"), n_in, n_out)?,
        b: ck.vector(&format!("{prefix}.b"), n_out)?,
    })
}

pub(crate) fn push_lstm(ck: &mut Checkpoint, prefix: &str, c: &LstmCell) {
    ck.push_matrix(&format!("{prefix}.w_x"), &c.w_x);
    ck.push_matrix(&format!("{prefix}.w_h"), &c.w_h);
    ck.push_vector(&format!("{prefix}.b"), &c.b);
}

pub(crate) fn read_lstm(ck: &Checkpoint, prefix: &str, n_in: usize, hidden: usize) -> Result<LstmCell> {
    Ok(LstmCell {
        w_x: ck.matrix(&format!("{prefix}.w_x"), n_in, 4 * hidden)?,
        w_h: ck.matrix(&format!("{prefix}.w_h"), hidden, 4 * hidden)?,
        b: ck.vector(&format!("{prefix}.b"), 4 * hidden)?,
    })
}

fn push_relevance(ck: &mut Checkpoint, r: &RelevanceNet) {
    push_dense(ck, "relevance.hidden", &r.hidden);
    push_dense(ck, "relevance.out", &r.out);
}

fn read_relevance(ck: &Checkpoint, hidden: usize) -> Result<RelevanceNet> {
    Ok(RelevanceNet {
        hidden: read_dense(ck, "relevance.hidden", crate::relevance::CONTEXT_DIM, hidden)?,
        out: read_dense(ck, "relevance.out", hidden, 1)?,
    })
}

pub fn backend_checkpoint(m: &BackendModel, provenance: &str) -> Checkpoint {
    let mut ck = Checkpoint::new(CheckpointKind::Backend, provenance);
    push_filterbank(&mut ck, &m.filterbank);
    push_relevance(&mut ck, &m.relevance);
    push_lstm(&mut ck, "blstm1.fwd", &m.blstm1.fwd);
    push_lstm(&mut ck, "blstm1.bwd", &m.blstm1.bwd);
    push_lstm(&mut ck, "blstm2.fwd", &m.blstm2.fwd);
    push_lstm(&mut ck, "blstm2.bwd", &m.blstm2.bwd);
    push_dense(&mut ck, "head", &m.head);
    let c = &m.config;
    ck.set_int("sample_rate", c.sample_rate as i64);
    ck.set_int("frame_len", c.frame_len as i64);
    ck.set_int("hop", c.hop as i64);
    ck.set_float("f_min", c.f_min);
    ck.set_float("f_max", c.f_max);
    ck.set_int("relevance_hidden", c.relevance_hidden as i64);
    ck.set_int("lstm_hidden", c.lstm_hidden as i64);
    ck.set_int("delta_window", c.delta_window as i64);
    ck.set_int("normalize", c.normalize as i64);
    ck.set_text("features", c.features.as_str());
    ck
}

pub fn backend_from(ck: &Checkpoint) -> Result<BackendModel> {
    if ck.kind != CheckpointKind::Backend {
        return Err(Error::Incompatible(format!(
            "expected a backend checkpoint, got {}",
            ck.kind.as_str()
        )));
    }
    let filterbank = filterbank_from(ck)?;
    let features = ck.text("features")?;
    let config = ModelConfig {
        sample_rate: ck.int("sample_rate")? as u32,
        frame_len: ck.int("frame_len")? as usize,
        hop: ck.int("hop")? as usize,
        f_min: ck.float("f_min")?,
        f_max: ck.float("f_max")?,
        relevance_hidden: ck.int("relevance_hidden")? as usize,
        lstm_hidden: ck.int("lstm_hidden")? as usize,
        delta_window: ck.int("delta_window")? as usize,
        normalize: ck.int("normalize")? != 0,
        features: FeatureMode::parse(features)
            .ok_or_else(|| Error::CheckpointParse(format!("unknown feature mode {features:?}")))?,
    };
    let n_f = filterbank.n_filters();
    let hc = config.lstm_hidden;
    let m = BackendModel {
        relevance: read_relevance(ck, config.relevance_hidden)?,
        blstm1: BiLstm {
            fwd: read_lstm(ck, "blstm1.fwd", 3 * n_f, hc)?,
            bwd: read_lstm(ck, "blstm1.bwd", 3 * n_f, hc)?,
        },
        blstm2: BiLstm {
            fwd: read_lstm(ck, "blstm2.fwd", 2 * hc, hc)?,
            bwd: read_lstm(ck, "blstm2.bwd", 2 * hc, hc)?,
        },
        head: read_dense(ck, "head", 2 * hc, 1)?,
        config,
        filterbank,
    };
    m.validate()?;
    Ok(m)
}

/// Copies pretrained filters (and optionally the relevance net) into
/// `target`, and records the freeze decision in `cfg`. Back-end recurrent
/// weights are never transferred.
pub fn transfer_filters(
    ck: &Checkpoint,
    mut target: BackendModel,
    freeze: bool,
    include_relevance: bool,
    cfg: &mut TrainConfig,
) -> Result<BackendModel> {
    let src = filterbank_from(ck)?;
    let (tf, tl) = (target.filterbank.n_filters(), target.filterbank.kernel_len);
    if src.n_filters() != tf || src.kernel_len != tl {
        return Err(Error::Incompatible(format!(
            "checkpoint has F={}, L={}; target model has F={tf}, L={tl}",
            src.n_filters(),
            src.kernel_len
        )));
    }
    target.filterbank.mu = src.mu.clone();
    target.filterbank.clamp();
    if include_relevance {
        if ck.has_array("relevance.hidden.w") {
            target.relevance = read_relevance(ck, target.config.relevance_hidden)?;
        } else {
            return Err(Error::Incompatible(format!(
                "{} checkpoint carries no relevance network",
                ck.kind.as_str()
            )));
        }
        cfg.freeze_relevance = freeze;
    }
    cfg.freeze_filters = freeze;
    Ok(target)
}
