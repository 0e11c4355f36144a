//! The `stan` command line: synth, train, predict, eval and crossval.
//!
//! Settings resolve as defaults, then `--config` file, then `--set`
//! assignments, then the named flags. Every artifact gets the resolved
//! config next to it (`<file>.cfg`) or inside it (JSON `run_config`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::data_io::{dataset_manifest, load_image, resize_nearest, save_mask, synth_generate, write_dataset};
use crate::error::{Error, Result};
use crate::metrics::{binarize, evaluate, MetricsReport};
use crate::model::{load_weights, save_weights, Arch, Model};
use crate::training::{cross_validate, train_with, CrossValReport, TrainHistory};

#[derive(Parser, Debug)]
#[command(name = "stan", version, about = "Tumor segmentation networks for breast ultrasound")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a phantom dataset of `<id>.pgm` / `<id>_mask.pgm` pairs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Train on a dataset directory and write a weight file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Segment a single image.
    Predict {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Score a trained model on a dataset directory (JSON + CSV report).
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// k-fold cross-validation from scratch.
    Crossval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
}

#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` assignment; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub arch: Option<Arch>,
    #[arg(long)]
    pub input_size: Option<usize>,
    #[arg(long)]
    pub base_filters: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub small_axis: Option<f64>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        if let Some(a) = self.arch {
            cfg.model.arch = a;
        }
        if let Some(n) = self.input_size {
            cfg.model.input_size = n;
        }
        if let Some(n) = self.base_filters {
            cfg.model.base_filters = n;
        }
        if let Some(n) = self.epochs {
            cfg.train.epochs = n;
        }
        if let Some(n) = self.batch_size {
            cfg.train.batch_size = n;
        }
        if let Some(x) = self.lr {
            cfg.train.adam.learning_rate = x;
        }
        if let Some(x) = self.threshold {
            cfg.eval.threshold = x;
        }
        if let Some(x) = self.small_axis {
            cfg.eval.small_axis = x;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `model.stw` -> `model.stw.cfg`
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn progress(quiet: bool) -> impl FnMut(Option<usize>, &crate::training::EpochStats) {
    move |fold, s| {
        if !quiet {
            let fold = fold.map(|f| format!("fold {f} ")).unwrap_or_default();
            eprintln!("{fold}epoch {:>4}  loss {:.6}  {:.2}s", s.epoch + 1, s.mean_loss, s.seconds);
        }
    }
}

/// The model's own settings take precedence over the run config when a
/// weight file is involved.
fn adopt_model(cfg: &mut RunConfig, model: &Model) {
    cfg.model = *model.config();
}

fn stamp(report: &mut MetricsReport, cfg: &RunConfig, extra: &[(&str, String)]) {
    report.provenance.extend(cfg.to_map());
    for (k, v) in extra {
        report.provenance.insert((*k).to_string(), v.clone());
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let data = synth_generate(&cfg.synth)?;
    write_dataset(&data, out)?;
    cfg.save(out.join("run.cfg"))?;
    Ok(data.len())
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    run_config: BTreeMap<String, String>,
    history: &'a TrainHistory,
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, quiet: bool) -> Result<TrainHistory> {
    let samples = dataset_manifest(data, Some(cfg.model.input_size))?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument(format!("no samples in {}", data.display())));
    }
    let model = Model::build(cfg.model)?;
    let mut log = progress(quiet);
    let (model, history) = train_with(model, &samples, &cfg.train, |s| log(None, s))?;
    save_weights(&model, out)?;
    cfg.save(sidecar(out, ".cfg"))?;
    write_json(&HistoryFile { run_config: cfg.to_map(), history: &history }, &sidecar(out, ".history.json"))?;
    Ok(history)
}

/// Writes a binary mask at the image's native size.
pub fn cmd_predict(cfg: &RunConfig, weights: &Path, image: &Path, out: &Path) -> Result<usize> {
    let model = load_weights(weights)?;
    let mut cfg = cfg.clone();
    adopt_model(&mut cfg, &model);
    let size = cfg.model.input_size;
    let (img, (nw, nh)) = load_image(image, Some(size))?;
    let p = model.forward(&img.to_tensor())?;
    let mask = binarize(p.data(), size, size, cfg.eval.threshold)?;
    let mask = if (nw, nh) == (size, size) { mask } else { resize_nearest(&mask, nw, nh) };
    save_mask(&mask, out)?;
    cfg.save(sidecar(out, ".cfg"))?;
    Ok(mask.count())
}

pub fn cmd_eval(cfg: &RunConfig, weights: &Path, data: &Path, out: &Path) -> Result<MetricsReport> {
    let model = load_weights(weights)?;
    let mut cfg = cfg.clone();
    adopt_model(&mut cfg, &model);
    let samples = dataset_manifest(data, Some(cfg.model.input_size))?;
    let mut report = evaluate(&model, &samples, cfg.eval)?;
    stamp(&mut report, &cfg, &[("weights", file_name(weights))]);
    report.write(out)?;
    Ok(report)
}

#[derive(Serialize)]
struct CrossValFile<'a> {
    run_config: BTreeMap<String, String>,
    #[serde(flatten)]
    report: &'a CrossValReport,
}

pub fn cmd_crossval(cfg: &RunConfig, data: &Path, out: &Path, quiet: bool) -> Result<CrossValReport> {
    let samples = dataset_manifest(data, Some(cfg.model.input_size))?;
    let mut log = progress(quiet);
    let mut report = cross_validate(cfg.model, &samples, &cfg.train, cfg.eval, |f, s| log(Some(f), s))?;
    for fold in &mut report.folds {
        stamp(&mut fold.report, cfg, &[]);
    }
    stamp(&mut report.aggregate, cfg, &[]);
    write_json(&CrossValFile { run_config: cfg.to_map(), report: &report }, out)?;
    let csv = out.with_extension("csv");
    fs::write(&csv, report.aggregate.to_csv()).map_err(|e| Error::io(&csv, e))?;
    Ok(report)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, opts } => {
            let cfg = opts.resolve()?;
            let n = cmd_synth(&cfg, &out)?;
            println!("wrote {n} samples to {}", out.display());
        }
        Command::Train { data, out, opts } => {
            let cfg = opts.resolve()?;
            let h = cmd_train(&cfg, &data, &out, opts.quiet)?;
            match h.epoch_loss.last() {
                Some(l) => println!("trained {} epochs, final loss {l:.6}; wrote {}", h.epoch_loss.len(), out.display()),
                None => println!("no training steps; wrote {}", out.display()),
            }
        }
        Command::Predict { weights, image, out, opts } => {
            let cfg = opts.resolve()?;
            let n = cmd_predict(&cfg, &weights, &image, &out)?;
            println!("{n} foreground pixels; wrote {}", out.display());
        }
        Command::Eval { weights, data, out, opts } => {
            let cfg = opts.resolve()?;
            let report = cmd_eval(&cfg, &weights, &data, &out)?;
            print!("{}", report.to_table());
        }
        Command::Crossval { data, out, opts } => {
            let cfg = opts.resolve()?;
            let report = cmd_crossval(&cfg, &data, &out, opts.quiet)?;
            print!("{}", report.aggregate.to_table());
        }
    }
    Ok(())
}

/// One machine-parsable line: `error[<kind>]: <message>`.
pub fn error_line(e: &Error) -> String {
    format!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_flags_win_over_set_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cfg");
        fs::write(&path, "epochs = 3\nseed = 4\n").unwrap();
        let o = Overrides {
            config: Some(path),
            set: vec!["epochs=5".into(), "folds=3".into()],
            seed: Some(11),
            ..Default::default()
        };
        let cfg = o.resolve().unwrap();
        assert_eq!((cfg.train.epochs, cfg.train.folds, cfg.seed()), (5, 3, 11));
    }

    #[test]
    fn invalid_settings_fail_resolution() {
        let o = Overrides { input_size: Some(60), ..Default::default() };
        assert!(matches!(o.resolve(), Err(Error::Config(_))));
        let o = Overrides { set: vec!["nonsense".into()], ..Default::default() };
        assert!(matches!(o.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn sidecar_appends() {
        assert_eq!(sidecar(Path::new("out/m.stw"), ".cfg"), PathBuf::from("out/m.stw.cfg"));
    }

    #[test]
    fn error_line_is_single_line() {
        let line = error_line(&Error::Config("a\nb".into()));
        assert_eq!(line, "error[config]: invalid config: a b");
    }
}
