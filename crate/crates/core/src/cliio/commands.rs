use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::{DatasetSource, ExperimentConfig};
use super::csv::{ablation_csv, eval_csv, history_csv};
use super::ingest::{read_cifar_bin, read_idx};
use super::resize::fit_to_encoder;
use super::synthetic::gen_synthetic;
use crate::encoder::{load_checkpoint, save_checkpoint};
use crate::error::{Error, Result};
use crate::evalproto::{
    aggregate, build_split, eval_split, run_ablation, score_split, train_split, AblationResult, Dataset,
    EvalReport, LabeledImages, PoolFeatures, Protocol, SplitFeatures, SplitSpec,
};
use crate::gradsuite::{run_suite, SuiteReport};
use crate::heads::HeadKind;
use crate::numcore::Tensor;
use crate::oneclass::{OneClassModel, TrainHistory};
use crate::par::Exec;

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub protocol: Option<Protocol>,
    pub head: Option<HeadKind>,
    pub depth: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(p) = self.protocol {
            cfg.protocol = p;
        }
        if let Some(h) = self.head {
            cfg.run.head = h;
        }
        if let Some(d) = self.depth {
            cfg.run.head_depth = d;
        }
        cfg.run.validate()
    }
}

/// Output locations under the run directory.
pub mod layout {
    use std::path::{Path, PathBuf};

    pub fn checkpoint(out: &Path, class: usize, seed: u64) -> PathBuf {
        out.join("checkpoints").join(format!("class{class}_seed{seed}.ckpt"))
    }

    pub fn history(out: &Path, class: usize, seed: u64) -> PathBuf {
        out.join("history").join(format!("class{class}_seed{seed}.csv"))
    }

    pub fn eval_report(out: &Path, head: &str) -> PathBuf {
        out.join("reports").join(format!("eval_{head}.csv"))
    }

    pub fn ablation_report(out: &Path) -> PathBuf {
        out.join("reports").join("ablation.csv")
    }

    pub fn ablation_failures(out: &Path) -> PathBuf {
        out.join("reports").join("ablation_failures.txt")
    }

    pub fn config_snapshot(out: &Path) -> PathBuf {
        out.join("reports").join("config.txt")
    }

    /// The only file that carries wall-clock timestamps.
    pub fn log(out: &Path) -> PathBuf {
        out.join("run.log")
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn log(cfg: &ExperimentConfig, line: &str) -> Result<()> {
    let path = layout::log(&cfg.out);
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{ts} {line}").map_err(|e| Error::io(&path, e))
}

fn fit_all(images: Vec<Tensor>, cfg: &ExperimentConfig) -> Result<Vec<Tensor>> {
    let e = &cfg.run.encoder;
    images
        .iter()
        .map(|im| fit_to_encoder(im, e.channels, e.image_size))
        .collect()
}

/// Reads (or generates) the configured dataset, resized and channel-matched
/// to the encoder input.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let (name, train, test) = match &cfg.dataset {
        DatasetSource::Synthetic(spec) => {
            let d = gen_synthetic(spec)?;
            (d.name, d.train, d.test)
        }
        DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let (a, b) = read_idx(train_images, train_labels)?;
            let (c, d) = read_idx(test_images, test_labels)?;
            ("idx".to_string(), LabeledImages::new(a, b)?, LabeledImages::new(c, d)?)
        }
        DatasetSource::CifarBin {
            train_files,
            test_files,
            variant,
        } => {
            let read_all = |files: &[PathBuf]| -> Result<LabeledImages> {
                let mut out = LabeledImages::default();
                for f in files {
                    let (imgs, labels) = read_cifar_bin(f, *variant)?;
                    out.images.extend(imgs);
                    out.labels.extend(labels);
                }
                Ok(out)
            };
            ("cifar".to_string(), read_all(train_files)?, read_all(test_files)?)
        }
    };
    Ok(Dataset {
        name,
        train: LabeledImages::new(fit_all(train.images, cfg)?, train.labels)?,
        test: LabeledImages::new(fit_all(test.images, cfg)?, test.labels)?,
    })
}

/// Splits for the configured classes (all classes by default).
pub fn splits_for(cfg: &ExperimentConfig, data: &Dataset) -> Result<Vec<SplitSpec>> {
    let classes = match &cfg.classes {
        Some(c) => c.clone(),
        None => data.classes(),
    };
    if classes.is_empty() {
        return Err(Error::Usage("no classes to evaluate".into()));
    }
    classes
        .iter()
        .map(|&c| build_split(data, c, cfg.protocol, cfg.base_seed))
        .collect()
}

/// Trained model and history for one (class, seed).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedRun {
    pub class: usize,
    pub seed: u64,
    pub model: OneClassModel,
    pub history: TrainHistory,
}

/// Trains every configured class under every seed; writes checkpoints and
/// history CSVs.
pub fn cmd_train(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<TrainedRun>> {
    log(cfg, "train start")?;
    let data = load_dataset(cfg)?;
    let splits = splits_for(cfg, &data)?;
    let mut runs = Vec::new();
    for seed in cfg.seeds() {
        let pool = PoolFeatures::compute(&data, &cfg.run.encoder, seed, exec)?;
        let trained = exec.map(&splits, |split| -> Result<TrainedRun> {
            let feats = pool.for_split(split)?;
            let (model, history) = train_split(&cfg.run, &feats, seed)?;
            Ok(TrainedRun {
                class: split.normal_class,
                seed,
                model,
                history,
            })
        });
        for run in trained {
            let run = run?;
            let ckpt = layout::checkpoint(&cfg.out, run.class, seed);
            if let Some(dir) = ckpt.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            save_checkpoint(&run.model.params, &ckpt)?;
            write_file(&layout::history(&cfg.out, run.class, seed), history_csv(&run.history).as_bytes())?;
            runs.push(run);
        }
    }
    write_file(&layout::config_snapshot(&cfg.out), cfg.snapshot().as_bytes())?;
    log(cfg, "train done")?;
    Ok(runs)
}

/// Rebuilds the model saved by `cmd_train` for one (class, seed).
pub fn load_model(cfg: &ExperimentConfig, class: usize, seed: u64) -> Result<OneClassModel> {
    let path = layout::checkpoint(&cfg.out, class, seed);
    if !path.is_file() {
        return Err(Error::Usage(format!(
            "checkpoint {} not found; run `train` first",
            path.display()
        )));
    }
    let params = load_checkpoint(&path)?;
    OneClassModel::from_params(cfg.run.encoder.clone(), cfg.run.head_depth, params)
}

/// Scores the saved models with the configured head and writes the
/// `class,seed,auc` report.
pub fn cmd_eval(cfg: &ExperimentConfig, exec: Exec) -> Result<EvalReport> {
    log(cfg, "eval start")?;
    let data = load_dataset(cfg)?;
    let splits = splits_for(cfg, &data)?;
    let seeds = cfg.seeds();
    let mut per_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &seed in &seeds {
        let pool = PoolFeatures::compute(&data, &cfg.run.encoder, seed, exec)?;
        let aucs = exec.map(&splits, |split| -> Result<f64> {
            let model = load_model(cfg, split.normal_class, seed)?;
            let feats = pool.for_split(split)?;
            eval_split(&model, &cfg.run, split, &feats, seed)
        });
        for (split, auc) in splits.iter().zip(aucs) {
            per_class.entry(split.normal_class).or_default().push(auc?);
        }
    }
    let mut report = aggregate(per_class)?;
    report.seeds = seeds;
    report.config = cfg.snapshot();
    write_file(
        &layout::eval_report(&cfg.out, cfg.run.head.as_str()),
        eval_csv(&report).as_bytes(),
    )?;
    log(cfg, "eval done")?;
    Ok(report)
}

/// Runs the configured ablation grid and writes the ablation CSV. Failed
/// points are listed in a separate text file.
pub fn cmd_ablate(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<AblationResult>> {
    log(cfg, "ablate start")?;
    let data = load_dataset(cfg)?;
    let splits = splits_for(cfg, &data)?;
    let results = run_ablation(&data, &splits, &cfg.ablation, &cfg.run, &cfg.seeds(), exec)?;
    write_file(&layout::ablation_report(&cfg.out), ablation_csv(&results).as_bytes())?;
    let failures: String = results
        .iter()
        .filter_map(|r| {
            r.outcome.as_ref().err().map(|e| {
                let p = r.point;
                format!("{},{},{},{}: {e}\n", p.batch_size, p.latent_dim, p.depth, p.head)
            })
        })
        .collect();
    let fail_path = layout::ablation_failures(&cfg.out);
    if failures.is_empty() {
        if fail_path.exists() {
            fs::remove_file(&fail_path).map_err(|e| Error::io(&fail_path, e))?;
        }
    } else {
        write_file(&fail_path, failures.as_bytes())?;
    }
    log(cfg, "ablate done")?;
    Ok(results)
}

/// Decodes an image file into a `C×H×W` tensor in `[0, 1]` for the encoder.
pub fn read_image(path: &Path, cfg: &ExperimentConfig) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = if cfg.run.encoder.channels == 1 {
        (1, img.to_luma8().into_raw())
    } else {
        (3, img.to_rgb8().into_raw())
    };
    // interleaved HWC → planar CHW
    let mut data = vec![0.0; channels * h * w];
    for (i, &b) in raw.iter().enumerate() {
        let (px, ch) = (i / channels, i % channels);
        data[ch * h * w + px] = f64::from(b) / 255.0;
    }
    let t = Tensor::new(vec![channels, h, w], data)?;
    if h != w {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            msg: format!("image is {w}×{h}; only square images are supported"),
        });
    }
    fit_to_encoder(&t, cfg.run.encoder.channels, cfg.run.encoder.image_size)
}

/// Scores image files with the saved model for the first configured class
/// and the base seed; writes `path,score` lines to `sink`.
pub fn cmd_score(cfg: &ExperimentConfig, paths: &[PathBuf], sink: &mut dyn Write, exec: Exec) -> Result<Vec<f64>> {
    if paths.is_empty() {
        return Err(Error::Usage("no image paths given".into()));
    }
    let class = cfg.classes.as_ref().and_then(|c| c.first().copied()).unwrap_or(0);
    let seed = cfg.base_seed;
    let model = load_model(cfg, class, seed)?;
    let images = paths.iter().map(|p| read_image(p, cfg)).collect::<Result<Vec<_>>>()?;
    let test = model.backbone_features(&images, exec)?;
    let train = match cfg.run.head {
        HeadKind::Mlp => Tensor::zeros(&[0, test.cols()]),
        HeadKind::Kde | HeadKind::Svm => {
            let data = load_dataset(cfg)?;
            let split = build_split(&data, class, cfg.protocol, cfg.base_seed)?;
            model.backbone_features(&data.train.select(&split.train), exec)?
        }
    };
    let scores = score_split(&model, &cfg.run, &SplitFeatures { train, test }, seed)?;
    for (p, s) in paths.iter().zip(&scores) {
        writeln!(sink, "{},{s}", p.display()).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(scores)
}

/// Runs the gradient suite, printing one line per check. Fails when any
/// check exceeds its tolerance.
pub fn cmd_gradcheck(seed: u64, sink: &mut dyn Write) -> Result<SuiteReport> {
    let report = run_suite(seed)?;
    for c in &report.checks {
        writeln!(
            sink,
            "{} {}: max rel err {:.3e} over {} entries (tol {:e})",
            if c.passed() { "ok  " } else { "FAIL" },
            c.name,
            c.max_rel_err,
            c.checked,
            c.rel_tol
        )
        .map_err(|e| Error::io("<stdout>", e))?;
    }
    if !report.passed() {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name.as_str()).collect();
        return Err(Error::GradCheck(names.join(", ")));
    }
    Ok(report)
}
