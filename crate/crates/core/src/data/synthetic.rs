use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

/// Shape and noise level of a synthetic classification task.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub sigma: f64,
}

const BOX: usize = 4;

/// One template per class: uniform noise averaged over 4×4 windows. The
/// noise field is `(H+3)×(W+3)` per channel so every window is complete.
fn template(rng: &mut Rng, c: usize, h: usize, w: usize) -> Vec<f64> {
    let (nh, nw) = (h + BOX - 1, w + BOX - 1);
    let mut out = Vec::with_capacity(c * h * w);
    for _ in 0..c {
        let noise: Vec<f64> = (0..nh * nw).map(|_| rng.uniform()).collect();
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in 0..BOX {
                    for dx in 0..BOX {
                        s += noise[(y + dy) * nw + x + dx];
                    }
                }
                out.push(s / (BOX * BOX) as f64);
            }
        }
    }
    out
}

/// Class-major synthetic dataset: sample `n` has label `n / per_class` and
/// equals its class template plus N(0, sigma²) pixel noise, clamped to [0, 1].
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let SyntheticSpec {
        classes,
        per_class,
        channels,
        height,
        width,
        sigma,
    } = *spec;
    if classes < 2 || per_class < 2 || channels == 0 {
        return Err(Error::Config(format!(
            "synthetic data needs ≥2 classes, ≥2 samples per class and ≥1 channel \
             (got {classes}, {per_class}, {channels})"
        )));
    }
    if height == 0 || width == 0 || height % 4 != 0 || width % 4 != 0 {
        return Err(Error::dim(format!(
            "synthetic image size {height}x{width} must be a positive multiple of 4"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be finite and ≥ 0, got {sigma}")));
    }
    let mut trng = Rng::new(derive_seed(seed, "templates"));
    let mut nrng = Rng::new(derive_seed(seed, "noise"));
    let len = channels * height * width;
    let mut data = Vec::with_capacity(classes * per_class * len);
    let mut labels = Vec::with_capacity(classes * per_class);
    for k in 0..classes {
        let t = template(&mut trng, channels, height, width);
        for _ in 0..per_class {
            for &base in &t {
                let v = if sigma > 0.0 {
                    base + sigma * nrng.gaussian()
                } else {
                    base
                };
                data.push(v.clamp(0.0, 1.0) as f32);
            }
            labels.push(k);
        }
    }
    let images = Tensor::new(&[classes * per_class, channels, height, width], data)?;
    Dataset::new(images, labels, Dataset::numbered_classes(classes))
}
