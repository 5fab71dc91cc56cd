use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use cosgauss::audio::{self, read_manifest, write_manifest, Waveform};
use cosgauss::checkpoint::{
    backend_checkpoint, backend_from, filterbank_from, load_checkpoint, save_checkpoint, transfer_filters, CheckpointKind,
};
use cosgauss::classifier::{
    history_csv, score_set, train_supervised, BackendModel, FeatureMode, LabeledSet, TrainConfig,
};
use cosgauss::config::{parse_config, RunConfig};
use cosgauss::cpc::{cpc_checkpoint, cpc_history_csv, pretrain_cpc, CpcModel};
use cosgauss::eval::{read_fold_list, roc_auc, run_folds, write_folds, Pretrain};
use cosgauss::filterbank::{build_kernels, describe_filters, frequency_response, FilterbankParams};
use cosgauss::relevance::{apply_mask, relevance_forward};
use cosgauss::{rng, Error, Result};

#[derive(Parser)]
#[command(name = "cosgauss", version, about = "Learnable cosine-Gaussian filterbank experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic two-class corpus, its manifest and fold lists.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Self-supervised CPC pretraining of the filters on a manifest (labels ignored).
    PretrainCpc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Supervised training on a source corpus, producing a transferable checkpoint.
    PretrainSupervised {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the classifier, optionally starting from pretrained filters.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Manifest scored after every epoch.
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        init: InitFrom,
    },
    /// k-fold training and AUC report.
    EvalFolds {
        #[command(flatten)]
        common: Common,
        /// CSV of `fold,train_manifest,val_manifest`.
        #[arg(long)]
        folds: PathBuf,
        #[command(flatten)]
        init: InitFrom,
    },
    /// Dump I, M and J for audio files as CSV.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Backend checkpoint; a fresh mel-initialized model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Center frequencies, bandwidths and frequency responses of a filterbank.
    FiltersDump {
        #[command(flatten)]
        common: Common,
        /// Any checkpoint kind; mel initialization when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also write the time-domain kernels.
        #[arg(long)]
        kernels: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; nothing is written elsewhere.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InitFrom {
    /// Checkpoint whose filters initialize the model.
    #[arg(long)]
    init_from: Option<PathBuf>,
    #[arg(long, requires = "init_from", conflicts_with = "fine_tune")]
    freeze_filters: bool,
    /// Keep training the transferred filters (the default with --init-from).
    #[arg(long, requires = "init_from")]
    fine_tune: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let cfg = match &self.config {
            Some(p) => parse_config(p)?,
            None => RunConfig::default(),
        };
        info!("resolved config:\n{}", cfg.render());
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        write(&self.out.join("config.cfg"), &cfg.render())?;
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_set(manifest: &Path, cfg: &RunConfig) -> Result<LabeledSet> {
    LabeledSet::load(&read_manifest(manifest)?, cfg.model.model.sample_rate)
}

fn fresh_model(cfg: &RunConfig) -> Result<BackendModel> {
    cfg.model.build(&mut rng::seeded(cfg.init_seed()))
}

fn pretrain_of(init: &InitFrom, cfg: &RunConfig) -> Result<Option<Pretrain>> {
    match &init.init_from {
        Some(p) => Ok(Some(Pretrain {
            checkpoint: load_checkpoint(p)?,
            freeze: init.freeze_filters,
            include_relevance: cfg.transfer_relevance,
        })),
        None => Ok(None),
    }
}

fn synth(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let spec = cfg.synth_spec();
    let entries = audio::synth_corpus(&spec, &common.out)?;
    write_manifest(common.out.join("manifest.csv"), &entries, Some(&common.out))?;
    let folds = write_folds(&entries, cfg.folds, cfg.fold_seed(), &common.out)?;
    println!(
        "wrote {} recordings and {} folds to {}",
        entries.len(),
        folds.len(),
        common.out.display()
    );
    Ok(())
}

fn pretrain_cpc_cmd(common: &Common, manifest: &Path) -> Result<()> {
    let cfg = common.load()?;
    let mc = &cfg.model.model;
    // labels are deliberately dropped here
    let waves: Vec<Waveform> = read_manifest(manifest)?
        .iter()
        .map(|e| audio::load_audio(&e.path, mc.sample_rate))
        .collect::<Result<_>>()?;
    let cpc_cfg = cfg.cpc_config();
    let init = fresh_model(&cfg)?;
    let model = CpcModel::new(
        init.filterbank,
        &cpc_cfg,
        mc.sample_rate,
        mc.frame_len,
        mc.hop,
        &mut rng::seeded(rng::derive_seed(cpc_cfg.seed, 1)),
    )?;
    let (model, history) = pretrain_cpc(model, &waves, &cpc_cfg)?;
    save_checkpoint(&cpc_checkpoint(&model, "cpc pretraining"), common.out.join("cpc.json"))?;
    write(&common.out.join("cpc_history.csv"), &cpc_history_csv(&history))?;
    if let Some(last) = history.last() {
        println!("step {}: loss {:.4}, contrastive accuracy {:.3}", last.step, last.loss, last.accuracy);
    }
    Ok(())
}

fn train_and_save(
    cfg: &RunConfig,
    out: &Path,
    manifest: &Path,
    val: Option<&Path>,
    pretrain: Option<&Pretrain>,
    name: &str,
) -> Result<()> {
    let train = load_set(manifest, cfg)?;
    let val = val.map(|v| load_set(v, cfg)).transpose()?;
    let mut tcfg: TrainConfig = cfg.train_config();
    let mut model = fresh_model(cfg)?;
    if let Some(p) = pretrain {
        model = transfer_filters(&p.checkpoint, model, p.freeze, p.include_relevance, &mut tcfg)?;
    }
    let (model, history) = train_supervised(model, &train, val.as_ref(), &tcfg)?;
    save_checkpoint(&backend_checkpoint(&model, name), out.join(format!("{name}.json")))?;
    write(&out.join("history.csv"), &history_csv(&history))?;
    if let Some(v) = &val {
        let auc = roc_auc(&score_set(&model, v, cfg.jobs)?)?;
        println!("validation AUC {:.1}%", 100.0 * auc);
    }
    Ok(())
}

fn eval_folds_cmd(common: &Common, folds: &Path, init: &InitFrom) -> Result<()> {
    let cfg = common.load()?;
    let folds = read_fold_list(folds)?;
    let pretrain = pretrain_of(init, &cfg)?;
    let report = run_folds(&folds, &cfg.model, &cfg.train_config(), pretrain.as_ref())?;
    let csv = report.to_csv();
    write(&common.out.join("report.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn matrix_csv(m: &ndarray::Array2<f64>) -> String {
    let mut s = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn extract(common: &Common, model: Option<&Path>, inputs: &[PathBuf]) -> Result<()> {
    let cfg = common.load()?;
    let m = match model {
        Some(p) => backend_from(&load_checkpoint(p)?)?,
        None => fresh_model(&cfg)?,
    };
    for input in inputs {
        let w = audio::load_audio(input, m.config.sample_rate)?;
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into());
        let spec = m.spectrogram(&w)?;
        write(&common.out.join(format!("{stem}_I.csv")), &matrix_csv(&spec))?;
        if m.config.features == FeatureMode::Relevance {
            let (mask, _) = relevance_forward(spec.view(), &m.relevance)?;
            let j = apply_mask(spec.view(), &mask)?;
            write(&common.out.join(format!("{stem}_M.csv")), &matrix_csv(&mask.values))?;
            write(&common.out.join(format!("{stem}_J.csv")), &matrix_csv(&j.values))?;
        }
        println!("{}: {} filters × {} frames", input.display(), spec.nrows(), spec.ncols());
    }
    Ok(())
}

const DUMP_FFT: usize = 4096;
const RESPONSE_FFT: usize = 512;

fn filters_dump(common: &Common, model: Option<&Path>, kernels: bool) -> Result<()> {
    let cfg = common.load()?;
    let (fb, sr): (FilterbankParams, f64) = match model {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            let sr = match ck.kind {
                CheckpointKind::Filterbank => cfg.model.model.sample_rate as f64,
                _ => ck.int("sample_rate")? as f64,
            };
            (filterbank_from(&ck)?, sr)
        }
        None => (fresh_model(&cfg)?.filterbank, cfg.model.model.sample_rate as f64),
    };
    let mut s = String::from("filter,mu,center_hz,bandwidth_3db_hz\n");
    for (i, (mu, hz, bw)) in describe_filters(&fb, sr, DUMP_FFT)?.into_iter().enumerate() {
        s.push_str(&format!("{i},{mu},{hz},{bw}\n"));
    }
    write(&common.out.join("filters.csv"), &s)?;

    let k = build_kernels(&fb);
    let mut r = String::from("filter,freq_hz,magnitude\n");
    for (i, row) in k.rows().into_iter().enumerate() {
        for (b, mag) in frequency_response(row, RESPONSE_FFT)?.iter().enumerate() {
            r.push_str(&format!("{i},{},{mag}\n", b as f64 * sr / RESPONSE_FFT as f64));
        }
    }
    write(&common.out.join("responses.csv"), &r)?;
    if kernels {
        write(&common.out.join("kernels.csv"), &matrix_csv(&k))?;
    }
    println!("{} filters written to {}", fb.n_filters(), common.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => synth(&common),
        Command::PretrainCpc { common, manifest } => pretrain_cpc_cmd(&common, &manifest),
        Command::PretrainSupervised { common, manifest } => {
            let cfg = common.load()?;
            train_and_save(&cfg, &common.out, &manifest, None, None, "pretrained")
        }
        Command::Train {
            common,
            manifest,
            val,
            init,
        } => {
            let cfg = common.load()?;
            let pretrain = pretrain_of(&init, &cfg)?;
            train_and_save(&cfg, &common.out, &manifest, val.as_deref(), pretrain.as_ref(), "model")
        }
        Command::EvalFolds { common, folds, init } => eval_folds_cmd(&common, &folds, &init),
        Command::Extract { common, model, inputs } => extract(&common, model.as_deref(), &inputs),
        Command::FiltersDump { common, model, kernels } => filters_dump(&common, model.as_deref(), kernels),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
