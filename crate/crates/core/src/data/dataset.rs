use std::path::Path;

use crate::data::tns::{self, TensorMap};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Images `[N, C, H, W]` with values in [0, 1] and one class index each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor<f32>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let s = images.shape();
        if s.len() != 4 {
            return Err(Error::dim(format!("dataset images must be [N, C, H, W], got {s:?}")));
        }
        if s[0] != labels.len() {
            return Err(Error::dim(format!(
                "{} images but {} labels",
                s[0],
                labels.len()
            )));
        }
        let k = class_names.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Config(format!("label {bad} out of range for {k} classes")));
        }
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Config(format!("class {c} ({}) has no samples", class_names[c])));
        }
        if images.data().iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::Config("image values must be finite and within [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            class_names,
        })
    }

    /// Default class names `"0"`, `"1"`, ...
    pub fn numbered_classes(k: usize) -> Vec<String> {
        (0..k).map(|i| i.to_string()).collect()
    }

    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// `[C, H, W]` of one image.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }

    /// Indices of class `k` in dataset order.
    pub fn class_indices(&self, k: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == k).collect()
    }

    /// The samples at `indices`, in that order. Every class must remain
    /// represented.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let images = self.images.select_batch(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(images, labels, self.class_names.clone())
    }

    pub fn to_tensor_map(&self) -> TensorMap {
        let mut m = TensorMap::new();
        m.insert("images".into(), self.images.clone());
        m.insert(
            "labels".into(),
            Tensor::from_parts(vec![self.len()], self.labels.iter().map(|&l| l as f32).collect()),
        );
        m
    }

    /// Rebuild from a map holding `images` and `labels`. Labels are stored
    /// as exact small integers.
    pub fn from_tensor_map(map: &TensorMap) -> Result<Self> {
        let images = map
            .get("images")
            .ok_or_else(|| Error::parse("images", "entry missing"))?
            .clone();
        let raw = map
            .get("labels")
            .ok_or_else(|| Error::parse("labels", "entry missing"))?;
        let mut labels = Vec::with_capacity(raw.len());
        for &v in raw.data() {
            if v < 0.0 || v.fract() != 0.0 || v > 1e7 {
                return Err(Error::parse("labels", format!("{v} is not a class index")));
            }
            labels.push(v as usize);
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(images, labels, Self::numbered_classes(k))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        tns::save_tns(path, &self.to_tensor_map())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_map(&tns::load_tns(path)?)
    }
}
