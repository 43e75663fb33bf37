//! One end-to-end run: split, prototype choice, initialization and
//! training, all derived from a single seed.

use crate::data::{select_prototypes, stratified_split, Dataset, PrototypeSet, SplitSpec};
use crate::error::Result;
use crate::model::{BranchOutputs, ModelConfig, ReMarNet};
use crate::rng::derive_seed;
use crate::tensor::Tensor;
use crate::train::{fit_with, Checkpoint, MetricsRecord, TrainConfig, TrainMode};

/// Seeds of the independent random choices made in one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSeeds {
    pub split: u64,
    pub prototypes: u64,
    pub init: u64,
    pub batches: u64,
}

impl RunSeeds {
    /// Named child streams of `seed`.
    pub fn derive(seed: u64) -> Self {
        Self {
            split: derive_seed(seed, "split"),
            prototypes: derive_seed(seed, "prototypes"),
            init: derive_seed(seed, "init"),
            batches: derive_seed(seed, "batches"),
        }
    }
}

/// A dataset plus everything needed to train on it.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub dataset: Dataset,
    pub train_fraction: f64,
    pub reduce_per_class: usize,
    /// Layer widths; input geometry and class count are taken from the dataset.
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// The train/test split and prototypes of one run.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub prototypes: PrototypeSet,
    pub prototype_images: Tensor<f32>,
}

/// A finished run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub net: ReMarNet<f32>,
    pub metrics: Vec<MetricsRecord>,
    pub prepared: Prepared,
}

impl RunOutcome {
    /// Eval-mode branch outputs on the test split.
    pub fn test_outputs(&self, chunk: usize) -> Result<BranchOutputs<f32>> {
        self.net
            .infer(self.prepared.test.images(), &self.prepared.prototype_images, chunk)
    }

    pub fn checkpoint(&self, run_config: String) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            prototypes: self.prepared.prototype_images.clone(),
            run_config,
        }
    }
}

impl Experiment {
    /// The model configuration with geometry filled in from the dataset.
    pub fn model_config(&self) -> ModelConfig {
        let [c, h, w] = self.dataset.image_shape();
        ModelConfig {
            in_channels: c,
            height: h,
            width: w,
            classes: self.dataset.classes(),
            ..self.model.clone()
        }
    }

    pub fn prepare(&self, seeds: &RunSeeds) -> Result<Prepared> {
        let spec = SplitSpec {
            train_fraction: self.train_fraction,
            seed: seeds.split,
            reduce_per_class: self.reduce_per_class,
        };
        let (train, test) = stratified_split(&self.dataset, &spec)?.apply(&self.dataset)?;
        let prototypes = select_prototypes(&train, seeds.prototypes)?;
        let prototype_images = prototypes.images(&train)?;
        Ok(Prepared {
            train,
            test,
            prototypes,
            prototype_images,
        })
    }

    /// Train a fresh network in `mode`.
    pub fn run(
        &self,
        seeds: &RunSeeds,
        mode: TrainMode,
        on_epoch: impl FnMut(&MetricsRecord),
    ) -> Result<RunOutcome> {
        let prepared = self.prepare(seeds)?;
        let mut net = ReMarNet::new(self.model_config(), mode.branches(), seeds.init)?;
        let cfg = TrainConfig {
            mode,
            seed: seeds.batches,
            ..self.train.clone()
        };
        let metrics = fit_with(
            &mut net,
            &prepared.train,
            &prepared.prototype_images,
            &prepared.test,
            &cfg,
            on_epoch,
        )?;
        Ok(RunOutcome {
            net,
            metrics,
            prepared,
        })
    }
}
