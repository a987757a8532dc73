use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};

/// Images with integer class labels, index-aligned.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledImages {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl LabeledImages {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} images with {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Vec<Tensor> {
        idx.iter().map(|&i| self.images[i].clone()).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub train: LabeledImages,
    pub test: LabeledImages,
}

impl Dataset {
    /// Sorted distinct labels over both pools.
    pub fn classes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .train
            .labels
            .iter()
            .chain(&self.test.labels)
            .copied()
            .collect();
        set.into_iter().collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Test set = the whole test pool; anomaly = any other class.
    #[default]
    NormalVsRest,
    /// Non-normal test images subsampled (seeded) to the normal test count.
    PaperLiteral,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::NormalVsRest => "normal-vs-rest",
            Protocol::PaperLiteral => "paper-literal",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal-vs-rest" => Ok(Protocol::NormalVsRest),
            "paper-literal" => Ok(Protocol::PaperLiteral),
            other => Err(Error::config(format!(
                "unknown protocol `{other}` (expected normal-vs-rest or paper-literal)"
            ))),
        }
    }
}

/// One one-vs-all task. Indices refer to the dataset's train and test pools;
/// `test_labels[k]` is 1 when `test[k]` is not of `normal_class`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub normal_class: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub test_labels: Vec<u8>,
}

impl SplitSpec {
    pub fn normal_count(&self) -> usize {
        self.test_labels.iter().filter(|&&y| y == 0).count()
    }

    pub fn anomaly_count(&self) -> usize {
        self.test_labels.len() - self.normal_count()
    }
}

/// Split for a single normal class. `seed` only affects the paper-literal
/// subsample.
pub fn build_split(data: &Dataset, normal_class: usize, protocol: Protocol, seed: u64) -> Result<SplitSpec> {
    let train: Vec<usize> = (0..data.train.len())
        .filter(|&i| data.train.labels[i] == normal_class)
        .collect();
    if train.is_empty() {
        return Err(Error::config(format!(
            "class {normal_class} has no training images"
        )));
    }
    let (normal, other): (Vec<usize>, Vec<usize>) =
        (0..data.test.len()).partition(|&i| data.test.labels[i] == normal_class);
    let other = match protocol {
        Protocol::NormalVsRest => other,
        Protocol::PaperLiteral => {
            let mut rng = Rng::new(seed).split(normal_class as u64);
            let keep = normal.len().min(other.len());
            let mut picked: Vec<usize> = rng.permutation(other.len())[..keep]
                .iter()
                .map(|&k| other[k])
                .collect();
            picked.sort_unstable();
            picked
        }
    };
    if normal.is_empty() || other.is_empty() {
        return Err(Error::config(format!(
            "class {normal_class}: test set needs both normal ({}) and anomalous ({}) images",
            normal.len(),
            other.len()
        )));
    }
    let mut test: Vec<usize> = normal.iter().chain(&other).copied().collect();
    test.sort_unstable();
    let test_labels = test
        .iter()
        .map(|&i| u8::from(data.test.labels[i] != normal_class))
        .collect();
    Ok(SplitSpec {
        normal_class,
        train,
        test,
        test_labels,
    })
}

/// One split per class present in the dataset.
pub fn build_splits(data: &Dataset, protocol: Protocol, seed: u64) -> Result<Vec<SplitSpec>> {
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::config(format!(
            "dataset `{}` has {} class(es); one-vs-all needs at least 2",
            data.name,
            classes.len()
        )));
    }
    classes
        .into_iter()
        .map(|c| build_split(data, c, protocol, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy(classes: usize, per_class: usize) -> Dataset {
        let mk = |offset: usize| {
            let mut images = Vec::new();
            let mut labels = Vec::new();
            for c in 0..classes {
                for k in 0..per_class {
                    images.push(Tensor::filled(&[1, 1, 1], (c * 100 + k + offset) as f64));
                    labels.push(c);
                }
            }
            LabeledImages::new(images, labels).unwrap()
        };
        Dataset {
            name: "toy".into(),
            train: mk(0),
            test: mk(50),
        }
    }

    #[test]
    fn ten_classes_ten_splits() {
        let d = toy(10, 3);
        let s = build_splits(&d, Protocol::NormalVsRest, 0).unwrap();
        assert_eq!(s.len(), 10);
        for sp in &s {
            assert!(sp.train.iter().all(|&i| d.train.labels[i] == sp.normal_class));
            assert_eq!(sp.train.len(), 3);
            assert_eq!(sp.test.len(), 30);
            assert_eq!(sp.normal_count(), 3);
        }
    }

    #[test]
    fn two_class_train_is_normal_only() {
        let d = toy(2, 4);
        let s = build_split(&d, 0, Protocol::NormalVsRest, 0).unwrap();
        assert!(s.train.iter().all(|&i| d.train.labels[i] == 0));
        assert_eq!(s.anomaly_count(), 4);
    }

    #[test]
    fn paper_literal_balanced_and_seeded() {
        let d = toy(5, 6);
        let a = build_split(&d, 2, Protocol::PaperLiteral, 9).unwrap();
        let b = build_split(&d, 2, Protocol::PaperLiteral, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.normal_count(), 6);
        assert_eq!(a.anomaly_count(), 6);
        let c = build_split(&d, 2, Protocol::PaperLiteral, 10).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn unknown_protocol_and_single_class() {
        assert!(matches!("bogus".parse::<Protocol>(), Err(Error::Config(_))));
        assert!(build_splits(&toy(1, 3), Protocol::NormalVsRest, 0).is_err());
    }
}
