use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::ingest::CifarVariant;
use super::synthetic::SyntheticSpec;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::evalproto::{AblationGrid, Protocol, RunConfig};
use crate::heads::HeadKind;
use crate::oneclass::NoiseConfig;

/// Where images come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    CifarBin {
        train_files: Vec<PathBuf>,
        test_files: Vec<PathBuf>,
        variant: CifarVariant,
    },
    Synthetic(SyntheticSpec),
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub protocol: Protocol,
    pub dataset: DatasetSource,
    pub base_seed: u64,
    pub seed_count: usize,
    /// Normal classes to evaluate; `None` means every class.
    pub classes: Option<Vec<usize>>,
    pub ablation: AblationGrid,
    pub out: PathBuf,
}

/// Recognised keys. Everything else is rejected.
const KEYS: &[&str] = &[
    "encoder.preset",
    "encoder.image_size",
    "encoder.channels",
    "encoder.patch_size",
    "encoder.embed_dim",
    "encoder.depth",
    "encoder.heads",
    "encoder.mlp_ratio",
    "encoder.latent_dim",
    "encoder.ln_eps",
    "encoder.in_eps",
    "train.batch_size",
    "train.epochs",
    "train.lr",
    "train.weight_decay",
    "noise.mu",
    "noise.sigma2",
    "head.kind",
    "head.depth",
    "head.svm_c",
    "head.svm_max_iter",
    "protocol",
    "seed",
    "seed_count",
    "out",
    "eval.classes",
    "dataset.source",
    "dataset.train_images",
    "dataset.train_labels",
    "dataset.test_images",
    "dataset.test_labels",
    "dataset.train_files",
    "dataset.test_files",
    "dataset.cifar_variant",
    "synthetic.image_size",
    "synthetic.channels",
    "synthetic.square",
    "synthetic.inlier_row",
    "synthetic.inlier_col",
    "synthetic.outlier_row",
    "synthetic.outlier_col",
    "synthetic.sigma_px",
    "synthetic.train_count",
    "synthetic.test_inliers",
    "synthetic.test_outliers",
    "synthetic.seed",
    "ablation.batch_sizes",
    "ablation.latent_dims",
    "ablation.depths",
    "ablation.heads",
];

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

/// Parsed `key = value` lines with `#` comments and blank lines skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    map: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {line_no}: expected key=value, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(usage(format!("line {line_no}: unknown key `{k}`")));
            }
            if map.insert(k.to_string(), (line_no, v.to_string())).is_some() {
                return Err(usage(format!("line {line_no}: duplicate key `{k}`")));
            }
        }
        Ok(Self { map })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("line {line}: invalid value `{v}` for `{key}`"))),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| usage(format!("missing required key `{key}`")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some((line, v)) = self.map.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| usage(format!("line {line}: invalid list item `{}` for `{key}`", s.trim())))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

fn existing(base: &Path, raw: &str, key: &str) -> Result<PathBuf> {
    let p = base.join(raw);
    if !p.is_file() {
        return Err(usage(format!("`{key}` points to missing file {}", p.display())));
    }
    Ok(p)
}

fn encoder_from(kv: &KeyValues) -> Result<EncoderConfig> {
    let channels = kv.get_or("encoder.channels", 1)?;
    let mut e = match kv.raw("encoder.preset").unwrap_or("vit-tiny-test") {
        "vit-tiny-test" => EncoderConfig::vit_tiny_test(channels),
        "vit-base" => EncoderConfig::vit_base(),
        "vit-large" => EncoderConfig::vit_large(),
        other => return Err(usage(format!("unknown encoder preset `{other}`"))),
    };
    e.image_size = kv.get_or("encoder.image_size", e.image_size)?;
    e.channels = kv.get_or("encoder.channels", e.channels)?;
    e.patch_size = kv.get_or("encoder.patch_size", e.patch_size)?;
    e.embed_dim = kv.get_or("encoder.embed_dim", e.embed_dim)?;
    e.depth = kv.get_or("encoder.depth", e.depth)?;
    e.heads = kv.get_or("encoder.heads", e.heads)?;
    e.mlp_ratio = kv.get_or("encoder.mlp_ratio", e.mlp_ratio)?;
    e.latent_dim = kv.get_or("encoder.latent_dim", e.latent_dim)?;
    e.ln_eps = kv.get_or("encoder.ln_eps", e.ln_eps)?;
    e.in_eps = kv.get_or("encoder.in_eps", e.in_eps)?;
    e.validate()?;
    Ok(e)
}

fn dataset_from(kv: &KeyValues, base: &Path) -> Result<DatasetSource> {
    match kv.require("dataset.source")? {
        "idx" => Ok(DatasetSource::Idx {
            train_images: existing(base, kv.require("dataset.train_images")?, "dataset.train_images")?,
            train_labels: existing(base, kv.require("dataset.train_labels")?, "dataset.train_labels")?,
            test_images: existing(base, kv.require("dataset.test_images")?, "dataset.test_images")?,
            test_labels: existing(base, kv.require("dataset.test_labels")?, "dataset.test_labels")?,
        }),
        "cifar-bin" => {
            let files = |key: &str| -> Result<Vec<PathBuf>> {
                kv.require(key)?
                    .split(',')
                    .map(|s| existing(base, s.trim(), key))
                    .collect()
            };
            let variant = match kv.raw("dataset.cifar_variant").unwrap_or("cifar10") {
                "cifar10" => CifarVariant::Cifar10,
                "cifar100" => CifarVariant::Cifar100,
                other => return Err(usage(format!("unknown cifar variant `{other}`"))),
            };
            Ok(DatasetSource::CifarBin {
                train_files: files("dataset.train_files")?,
                test_files: files("dataset.test_files")?,
                variant,
            })
        }
        "synthetic" => {
            let d = SyntheticSpec::default();
            let spec = SyntheticSpec {
                image_size: kv.get_or("synthetic.image_size", d.image_size)?,
                channels: kv.get_or("synthetic.channels", d.channels)?,
                square: kv.get_or("synthetic.square", d.square)?,
                inlier_pos: (
                    kv.get_or("synthetic.inlier_row", d.inlier_pos.0)?,
                    kv.get_or("synthetic.inlier_col", d.inlier_pos.1)?,
                ),
                outlier_pos: (
                    kv.get_or("synthetic.outlier_row", d.outlier_pos.0)?,
                    kv.get_or("synthetic.outlier_col", d.outlier_pos.1)?,
                ),
                sigma_px: kv.get_or("synthetic.sigma_px", d.sigma_px)?,
                train_count: kv.get_or("synthetic.train_count", d.train_count)?,
                test_inliers: kv.get_or("synthetic.test_inliers", d.test_inliers)?,
                test_outliers: kv.get_or("synthetic.test_outliers", d.test_outliers)?,
                seed: kv.get_or("synthetic.seed", d.seed)?,
            };
            spec.validate()?;
            Ok(DatasetSource::Synthetic(spec))
        }
        other => Err(usage(format!(
            "unknown dataset.source `{other}` (expected idx, cifar-bin or synthetic)"
        ))),
    }
}

impl ExperimentConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let encoder = encoder_from(&kv)?;
        let mut run = RunConfig::new(encoder.clone());
        run.train.batch_size = kv.get_or("train.batch_size", run.train.batch_size)?;
        run.train.epochs = kv.get_or("train.epochs", run.train.epochs)?;
        run.train.lr = kv.get_or("train.lr", run.train.lr)?;
        run.train.weight_decay = kv.get_or("train.weight_decay", run.train.weight_decay)?;
        run.train.noise = NoiseConfig {
            mu: kv.get_or("noise.mu", 0.0)?,
            sigma2: kv.get_or("noise.sigma2", 0.01)?,
            dim: encoder.latent_dim,
        };
        run.head = match kv.raw("head.kind") {
            Some(s) => s.parse::<HeadKind>().map_err(|e| usage(e.to_string()))?,
            None => HeadKind::Mlp,
        };
        run.head_depth = kv.get_or("head.depth", 1)?;
        run.svm_c = kv.get_or("head.svm_c", run.svm_c)?;
        run.svm.max_iter = kv.get_or("head.svm_max_iter", run.svm.max_iter)?;
        run.validate()?;

        let protocol = match kv.raw("protocol") {
            Some(s) => s.parse::<Protocol>().map_err(|e| usage(e.to_string()))?,
            None => Protocol::default(),
        };
        let seed_count: usize = kv.get_or("seed_count", 5)?;
        if seed_count == 0 {
            return Err(usage("seed_count must be at least 1"));
        }
        let dataset = dataset_from(&kv, base)?;
        let mut classes = kv.list("eval.classes")?;
        if classes.is_none() && matches!(dataset, DatasetSource::Synthetic(_)) {
            classes = Some(vec![super::synthetic::INLIER]);
        }

        let mut ablation = AblationGrid::around(&run);
        if let Some(v) = kv.list("ablation.batch_sizes")? {
            ablation.batch_sizes = v;
        }
        if let Some(v) = kv.list("ablation.latent_dims")? {
            ablation.latent_dims = v;
        }
        if let Some(v) = kv.list("ablation.depths")? {
            ablation.depths = v;
        }
        if let Some(v) = kv.list::<String>("ablation.heads")? {
            ablation.heads = v
                .iter()
                .map(|s| s.parse::<HeadKind>().map_err(|e| usage(e.to_string())))
                .collect::<Result<_>>()?;
        }
        ablation.validate()?;

        Ok(Self {
            run,
            protocol,
            dataset,
            base_seed: kv.get_or("seed", 0)?,
            seed_count,
            classes,
            ablation,
            out: base.join(kv.raw("out").unwrap_or("out")),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.seed_count as u64).map(|k| self.base_seed + k).collect()
    }

    /// Canonical `key=value` rendering of the resolved settings.
    pub fn snapshot(&self) -> String {
        let e = &self.run.encoder;
        let t = &self.run.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("encoder.image_size", e.image_size.to_string());
        kv("encoder.channels", e.channels.to_string());
        kv("encoder.patch_size", e.patch_size.to_string());
        kv("encoder.embed_dim", e.embed_dim.to_string());
        kv("encoder.depth", e.depth.to_string());
        kv("encoder.heads", e.heads.to_string());
        kv("encoder.mlp_ratio", e.mlp_ratio.to_string());
        kv("encoder.latent_dim", e.latent_dim.to_string());
        kv("encoder.ln_eps", e.ln_eps.to_string());
        kv("encoder.in_eps", e.in_eps.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.epochs", t.epochs.to_string());
        kv("train.lr", t.lr.to_string());
        kv("train.weight_decay", t.weight_decay.to_string());
        kv("noise.mu", t.noise.mu.to_string());
        kv("noise.sigma2", t.noise.sigma2.to_string());
        kv("head.kind", self.run.head.to_string());
        kv("head.depth", self.run.head_depth.to_string());
        kv("head.svm_c", self.run.svm_c.to_string());
        kv("protocol", self.protocol.to_string());
        kv("seed", self.base_seed.to_string());
        kv("seed_count", self.seed_count.to_string());
        s
    }
}
