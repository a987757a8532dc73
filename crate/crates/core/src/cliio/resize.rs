use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Nearest-neighbour resample of a `C×H×W` image to `C×size×size`; output
/// pixel `(i, j)` reads source `(⌊i·H/size⌋, ⌊j·W/size⌋)`.
pub fn resize_nearest(image: &Tensor, size: usize) -> Result<Tensor> {
    let [c, h, w] = image.shape() else {
        return Err(Error::dim(format!("expected a C×H×W image, got {:?}", image.shape())));
    };
    let (c, h, w) = (*c, *h, *w);
    if size == 0 {
        return Err(Error::config("resize target must be at least 1"));
    }
    if h == size && w == size {
        return Ok(image.clone());
    }
    let src = image.data();
    let mut data = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for i in 0..size {
            let si = i * h / size;
            for j in 0..size {
                let sj = j * w / size;
                data.push(src[(ch * h + si) * w + sj]);
            }
        }
    }
    Tensor::new(vec![c, size, size], data)
}

/// Repeats a single-channel image across `channels`.
pub fn replicate_channels(image: &Tensor, channels: usize) -> Result<Tensor> {
    let shape = image.shape();
    if shape.len() != 3 {
        return Err(Error::dim(format!("expected a C×H×W image, got {shape:?}")));
    }
    if shape[0] == channels {
        return Ok(image.clone());
    }
    if shape[0] != 1 {
        return Err(Error::dim(format!(
            "cannot map {} channels onto {channels}",
            shape[0]
        )));
    }
    let data = image.data().repeat(channels);
    Tensor::new(vec![channels, shape[1], shape[2]], data)
}

/// Resizes and channel-adapts an image to the encoder's input.
pub fn fit_to_encoder(image: &Tensor, channels: usize, size: usize) -> Result<Tensor> {
    replicate_channels(&resize_nearest(image, size)?, channels)
}
