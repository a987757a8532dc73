use crate::error::{Error, Result};
use crate::evalproto::{Dataset, LabeledImages};
use crate::numcore::{Rng, Tensor};

/// Bright-square pattern corpus. Inliers carry the square at `inlier_pos`,
/// outliers at `outlier_pos`; every pixel gets `N(0, sigma_px²)` noise and is
/// clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub image_size: usize,
    pub channels: usize,
    pub square: usize,
    /// Top-left corner `(row, col)`.
    pub inlier_pos: (usize, usize),
    pub outlier_pos: (usize, usize),
    pub sigma_px: f64,
    pub train_count: usize,
    pub test_inliers: usize,
    pub test_outliers: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            image_size: 32,
            channels: 1,
            square: 6,
            inlier_pos: (4, 4),
            outlier_pos: (18, 18),
            sigma_px: 0.05,
            train_count: 500,
            test_inliers: 200,
            test_outliers: 200,
            seed: 0,
        }
    }
}

/// Label of inlier images.
pub const INLIER: usize = 0;
/// Label of outlier images.
pub const OUTLIER: usize = 1;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fits = |(r, c): (usize, usize)| r + self.square <= self.image_size && c + self.square <= self.image_size;
        if self.square == 0 || !fits(self.inlier_pos) || !fits(self.outlier_pos) {
            return Err(Error::config(format!(
                "square of size {} at {:?} / {:?} does not fit a {}px image",
                self.square, self.inlier_pos, self.outlier_pos, self.image_size
            )));
        }
        if self.inlier_pos == self.outlier_pos {
            return Err(Error::config("inlier and outlier positions must differ"));
        }
        if self.channels == 0 || !(self.sigma_px >= 0.0) {
            return Err(Error::config("synthetic images need channels ≥ 1 and sigma_px ≥ 0"));
        }
        Ok(())
    }

    fn render(&self, pos: (usize, usize), rng: &mut Rng) -> Tensor {
        let s = self.image_size;
        let mut data = vec![0.0; self.channels * s * s];
        for ch in 0..self.channels {
            for r in 0..s {
                for c in 0..s {
                    let inside = (pos.0..pos.0 + self.square).contains(&r) && (pos.1..pos.1 + self.square).contains(&c);
                    let base = if inside { 1.0 } else { 0.0 };
                    let noise = if self.sigma_px > 0.0 {
                        rng.gaussian(0.0, self.sigma_px)
                    } else {
                        0.0
                    };
                    data[(ch * s + r) * s + c] = f64::clamp(base + noise, 0.0, 1.0);
                }
            }
        }
        Tensor::new(vec![self.channels, s, s], data).expect("sized")
    }
}

/// Train pool: inliers only. Test pool: inliers then outliers, labelled
/// [`INLIER`] / [`OUTLIER`].
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let mut train_rng = root.split(0);
    let mut test_rng = root.split(1);
    let train: Vec<Tensor> = (0..spec.train_count)
        .map(|_| spec.render(spec.inlier_pos, &mut train_rng))
        .collect();
    let mut test = Vec::with_capacity(spec.test_inliers + spec.test_outliers);
    let mut labels = Vec::with_capacity(test.capacity());
    for _ in 0..spec.test_inliers {
        test.push(spec.render(spec.inlier_pos, &mut test_rng));
        labels.push(INLIER);
    }
    for _ in 0..spec.test_outliers {
        test.push(spec.render(spec.outlier_pos, &mut test_rng));
        labels.push(OUTLIER);
    }
    Ok(Dataset {
        name: "synthetic".into(),
        train: LabeledImages::new(train, vec![INLIER; spec.train_count])?,
        test: LabeledImages::new(test, labels)?,
    })
}
