//! ROC-AUC and the k-fold experiment harness.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::audio::{read_manifest, write_manifest, ManifestEntry};
use crate::checkpoint::{transfer_filters, Checkpoint};
use crate::classifier::{score_set, train_supervised, EpochRecord, LabeledSet, ModelSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Area under the ROC curve in the Mann–Whitney form: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// `O(n log n)` via one sort.
pub fn roc_auc(scored: &[(f64, u8)]) -> Result<f64> {
    if let Some((s, _)) = scored.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let n_pos = scored.iter().filter(|(_, l)| *l == 1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    let mut sorted: Vec<(f64, u8)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the Mann–Whitney U statistic, kept in integers
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut k = 0;
    while k < sorted.len() {
        let score = sorted[k].0;
        let (mut pos, mut neg) = (0u128, 0u128);
        while k < sorted.len() && sorted[k].0 == score {
            if sorted[k].1 == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            k += 1;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
    }
    Ok(twice_u as f64 / (2 * n_pos as u128 * n_neg as u128) as f64)
}

/// One train/validation split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSpec {
    pub id: String,
    pub train: PathBuf,
    pub val: PathBuf,
}

/// Reads a `fold,train_manifest,val_manifest` CSV (no header). Relative
/// manifest paths resolve against the fold list's directory.
pub fn read_fold_list(path: impl AsRef<Path>) -> Result<Vec<FoldSpec>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut folds = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 || cols.iter().any(|c| c.is_empty()) {
            return Err(Error::Manifest(format!(
                "{}:{}: expected fold,train_manifest,val_manifest",
                path.display(),
                n + 1
            )));
        }
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        folds.push(FoldSpec {
            id: cols[0].to_string(),
            train: resolve(cols[1]),
            val: resolve(cols[2]),
        });
    }
    Ok(folds)
}

/// Stratified `k`-way split: each class is shuffled and dealt round-robin
/// into folds; fold `j` validates on its share and trains on the rest.
pub fn make_folds(entries: &[ManifestEntry], k: usize, seed: u64) -> Result<Vec<(Vec<ManifestEntry>, Vec<ManifestEntry>)>> {
    if k < 2 {
        return Err(Error::Argument("need at least 2 folds".into()));
    }
    let mut r = rng::seeded(seed);
    let mut assignment = vec![0usize; entries.len()];
    for label in [0u8, 1] {
        let mut idx: Vec<usize> = (0..entries.len())
            .filter(|&i| entries[i].label == Some(label))
            .collect();
        rng::shuffle(&mut r, &mut idx);
        for (pos, &i) in idx.iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    if entries.iter().any(|e| e.label.is_none()) {
        return Err(Error::Manifest("fold splitting needs labels on every row".into()));
    }
    Ok((0..k)
        .map(|j| {
            let (val, train): (Vec<_>, Vec<_>) = entries
                .iter()
                .cloned()
                .zip(&assignment)
                .partition(|(_, &a)| a == j);
            (
                train.into_iter().map(|(e, _)| e).collect(),
                val.into_iter().map(|(e, _)| e).collect(),
            )
        })
        .collect())
}

/// Writes `fold{j}_train.csv`, `fold{j}_val.csv` and `folds.csv` into `dir`.
pub fn write_folds(entries: &[ManifestEntry], k: usize, seed: u64, dir: impl AsRef<Path>) -> Result<Vec<FoldSpec>> {
    let dir = dir.as_ref();
    let mut specs = Vec::new();
    let mut list = String::new();
    for (j, (train, val)) in make_folds(entries, k, seed)?.into_iter().enumerate() {
        let id = format!("{}", j + 1);
        let tn = format!("fold{id}_train.csv");
        let vn = format!("fold{id}_val.csv");
        write_manifest(dir.join(&tn), &train, Some(dir))?;
        write_manifest(dir.join(&vn), &val, Some(dir))?;
        list.push_str(&format!("{id},{tn},{vn}\n"));
        specs.push(FoldSpec {
            id,
            train: dir.join(tn),
            val: dir.join(vn),
        });
    }
    let p = dir.join("folds.csv");
    fs::write(&p, list).map_err(|e| Error::io(&p, e))?;
    Ok(specs)
}

/// Optional pretrained initialization for every fold.
#[derive(Debug, Clone)]
pub struct Pretrain {
    pub checkpoint: Checkpoint,
    pub freeze: bool,
    pub include_relevance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub id: String,
    pub auc: f64,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub folds: Vec<FoldResult>,
    pub mean_auc: f64,
}

impl FoldReport {
    /// `fold,auc` rows in percent with one decimal, then an `avg` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,auc\n");
        for f in &self.folds {
            s.push_str(&format!("{},{:.1}\n", f.id, 100.0 * f.auc));
        }
        s.push_str(&format!("avg,{:.1}\n", 100.0 * self.mean_auc));
        s
    }
}

fn run_one_fold(
    index: usize,
    fold: &FoldSpec,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    pretrain: Option<&Pretrain>,
) -> Result<FoldResult> {
    let train = LabeledSet::load(&read_manifest(&fold.train)?, spec.model.sample_rate)?;
    let val = LabeledSet::load(&read_manifest(&fold.val)?, spec.model.sample_rate)?;
    let fold_seed = rng::derive_seed(cfg.seed, index as u64 + 1);
    let mut fold_cfg = TrainConfig {
        seed: fold_seed,
        ..cfg.clone()
    };
    let mut init_rng = rng::seeded(rng::derive_seed(fold_seed, 7));
    let mut model = spec.build(&mut init_rng)?;
    if let Some(p) = pretrain {
        model = transfer_filters(&p.checkpoint, model, p.freeze, p.include_relevance, &mut fold_cfg)?;
    }
    let (model, history) = train_supervised(model, &train, None, &fold_cfg)?;
    let auc = crate::eval::roc_auc(&score_set(&model, &val, 1)?)?;
    info!("fold {}: AUC {:.4}", fold.id, auc);
    Ok(FoldResult {
        id: fold.id.clone(),
        auc,
        history,
    })
}

/// Trains and scores every fold; the report's mean is the unweighted
/// arithmetic mean of the per-fold AUCs. Folds run concurrently when
/// `cfg.jobs > 1` (each fold itself then trains single-threaded).
pub fn run_folds(folds: &[FoldSpec], spec: &ModelSpec, cfg: &TrainConfig, pretrain: Option<&Pretrain>) -> Result<FoldReport> {
    use rayon::prelude::*;
    if folds.is_empty() {
        return Err(Error::Argument("no folds given".into()));
    }
    let wrap = |(i, f): (usize, &FoldSpec)| {
        let inner = TrainConfig { jobs: 1, ..cfg.clone() };
        run_one_fold(i, f, spec, &inner, pretrain).map_err(|e| Error::Fold {
            fold: f.id.clone(),
            source: Box::new(e),
        })
    };
    let results: Vec<FoldResult> = if cfg.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| folds.par_iter().enumerate().map(wrap).collect::<Result<_>>())?
    } else {
        folds.iter().enumerate().map(wrap).collect::<Result<_>>()?
    };
    let mean_auc = results.iter().map(|f| f.auc).sum::<f64>() / results.len() as f64;
    Ok(FoldReport {
        folds: results,
        mean_auc,
    })
}
