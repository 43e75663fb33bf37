use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::one_hot;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// How to cut a dataset into train and test parts.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    /// Per-class share of samples that go to training, in (0, 1).
    pub train_fraction: f64,
    pub seed: u64,
    /// Training samples dropped per class after the split (at least one is
    /// always kept).
    pub reduce_per_class: usize,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            reduce_per_class: 0,
        }
    }
}

/// Disjoint train/test index sets, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn apply(&self, ds: &Dataset) -> Result<(Dataset, Dataset)> {
        Ok((ds.subset(&self.train)?, ds.subset(&self.test)?))
    }
}

/// Shuffle each class with one seeded stream (classes in index order) and
/// send the first `round(fraction · n_k)` of each to training.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = Rng::new(spec.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for k in 0..ds.classes() {
        let mut idx = ds.class_indices(k);
        let n = idx.len();
        let n_train = (spec.train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::Config(format!(
                "class {k} has {n} samples, too few to split with fraction {}",
                spec.train_fraction
            )));
        }
        rng.shuffle(&mut idx);
        let keep = n_train.saturating_sub(spec.reduce_per_class).max(1);
        train.extend_from_slice(&idx[..keep]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// One fixed representative sample per class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrototypeSet {
    /// `indices[j]` is a sample of class `j`.
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl PrototypeSet {
    /// Prototype images stacked as `[K, C, H, W]`.
    pub fn images(&self, ds: &Dataset) -> Result<Tensor<f32>> {
        ds.images().select_batch(&self.indices)
    }
}

/// Pick one sample uniformly from each class, classes in index order.
pub fn select_prototypes(train: &Dataset, seed: u64) -> Result<PrototypeSet> {
    let mut rng = Rng::new(seed);
    let mut indices = Vec::with_capacity(train.classes());
    for k in 0..train.classes() {
        let members = train.class_indices(k);
        if members.is_empty() {
            return Err(Error::Config(format!("class {k} has no training samples")));
        }
        indices.push(members[rng.below(members.len())]);
    }
    Ok(PrototypeSet { indices, seed })
}

/// A mini-batch: dataset indices, their images and one-hot targets.
#[derive(Clone, Debug)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub images: Tensor<f32>,
    pub targets: Tensor<f32>,
    pub labels: Vec<usize>,
}

/// One epoch of mini-batches in seeded shuffled order. The last batch keeps
/// the remainder.
pub fn batches(ds: &Dataset, batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let order = Rng::new(seed).permutation(ds.len());
    order
        .chunks(batch_size)
        .map(|chunk| {
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.labels()[i]).collect();
            Ok(Batch {
                indices: chunk.to_vec(),
                images: ds.images().select_batch(chunk)?,
                targets: one_hot(&labels, ds.classes()),
                labels,
            })
        })
        .collect()
}
