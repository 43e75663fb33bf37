//! The two-branch classifier: a shared convolutional embedding, a relation
//! module scoring (sample, prototype) feature pairs, and a fully connected
//! softmax branch. Predictions sum both branches' per-class outputs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{self, Graph, Group, NodeId, NormMode, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

/// Whether batch norm uses batch statistics or running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// Filters per convolution, shared by both modules.
    pub channels: usize,
    /// Convolutional blocks in the embedding. The first two are pooled.
    pub embed_blocks: usize,
    pub rm_hidden: usize,
    pub fc_hidden: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            height: 32,
            width: 32,
            classes: 4,
            channels: 64,
            embed_blocks: 4,
            rm_hidden: 32,
            fc_hidden: 32,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl ModelConfig {
    fn pooled_blocks(&self) -> usize {
        self.embed_blocks.min(2)
    }

    /// `[channels, h, w]` of an embedded image.
    pub fn feature_shape(&self) -> [usize; 3] {
        let f = 1 << self.pooled_blocks();
        [self.channels, self.height / f, self.width / f]
    }

    pub fn feature_len(&self) -> usize {
        self.feature_shape().iter().product()
    }

    /// Input width of the relation module's first dense layer.
    pub fn relation_flat_len(&self) -> usize {
        let [c, h, w] = self.feature_shape();
        c * (h / 4) * (w / 4)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("channels", self.channels),
            ("embed_blocks", self.embed_blocks),
            ("rm_hidden", self.rm_hidden),
            ("fc_hidden", self.fc_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if self.classes < 2 {
            return Err(Error::Config("model needs at least 2 classes".into()));
        }
        // Two embedding pools followed by two relation-module pools.
        let f = (1 << self.pooled_blocks()) * 4;
        if self.height == 0 || self.width == 0 || self.height % f != 0 || self.width % f != 0 {
            return Err(Error::dim(format!(
                "image size {}x{} must be a positive multiple of {f}",
                self.height, self.width
            )));
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("invalid batch-norm eps or momentum".into()));
        }
        Ok(())
    }
}

/// Which classification branches take part in training and prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Branches {
    pub rm: bool,
    pub fc: bool,
}

impl Branches {
    pub const BOTH: Branches = Branches { rm: true, fc: true };
    pub const RM_ONLY: Branches = Branches { rm: true, fc: false };
    pub const FC_ONLY: Branches = Branches { rm: false, fc: true };

    pub fn validate(self) -> Result<()> {
        if !self.rm && !self.fc {
            return Err(Error::Config("at least one branch must be enabled".into()));
        }
        Ok(())
    }

    pub fn includes(self, group: Group) -> bool {
        match group {
            Group::Embedding => true,
            Group::Rm => self.rm,
            Group::Fc => self.fc,
        }
    }
}

/// Running mean and variance of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub name: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

#[derive(Clone, Debug)]
struct ConvBlock {
    weight: ParamId,
    bias: ParamId,
    gamma: ParamId,
    beta: ParamId,
    norm: usize,
    pool: bool,
}

#[derive(Clone, Debug)]
struct Dense {
    weight: ParamId,
    bias: ParamId,
}

/// Output of one forward pass over a labelled batch.
#[derive(Clone, Copy, Debug)]
pub struct StepNodes {
    pub scores: Option<NodeId>,
    pub probs: Option<NodeId>,
    pub loss_rm: Option<NodeId>,
    pub loss_ce: Option<NodeId>,
    pub loss: NodeId,
}

/// Per-class outputs of both branches for a set of images.
#[derive(Clone, Debug)]
pub struct BranchOutputs<T> {
    pub scores: Option<Tensor<T>>,
    pub probs: Option<Tensor<T>>,
}

impl<T: Element> BranchOutputs<T> {
    pub fn predict(&self) -> Result<Vec<usize>> {
        predict(self.scores.as_ref(), self.probs.as_ref())
    }
}

#[derive(Clone, Debug)]
pub struct ReMarNet<T = f32> {
    config: ModelConfig,
    branches: Branches,
    params: ParamStore<T>,
    running: Vec<RunningStats<T>>,
    embedding: Vec<ConvBlock>,
    relation: Vec<ConvBlock>,
    rm_hidden: Dense,
    rm_out: Dense,
    fc_hidden: Dense,
    fc_out: Dense,
}

struct Builder<'a, T> {
    params: ParamStore<T>,
    running: Vec<RunningStats<T>>,
    rng: &'a mut Rng,
}

impl<T: Element> Builder<'_, T> {
    fn uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let bound = (6.0 / fan_in as f64).sqrt();
        Tensor::from_fn(shape, |_| T::from_f64_lossy(self.rng.uniform_range(-bound, bound)))
    }

    fn conv_block(&mut self, name: &str, group: Group, cin: usize, cout: usize, pool: bool) -> ConvBlock {
        let w = self.uniform(&[cout, cin, 3, 3], cin * 9);
        let block = ConvBlock {
            weight: self.params.add(format!("{name}.conv.weight"), group, w),
            bias: self.params.add(format!("{name}.conv.bias"), group, Tensor::zeros(&[cout])),
            gamma: self.params.add(format!("{name}.bn.gamma"), group, Tensor::full(&[cout], T::one())),
            beta: self.params.add(format!("{name}.bn.beta"), group, Tensor::zeros(&[cout])),
            norm: self.running.len(),
            pool,
        };
        self.running.push(RunningStats {
            name: format!("{name}.bn"),
            mean: vec![T::zero(); cout],
            var: vec![T::one(); cout],
        });
        block
    }

    fn dense(&mut self, name: &str, group: Group, fan_in: usize, fan_out: usize) -> Dense {
        let w = self.uniform(&[fan_in, fan_out], fan_in);
        Dense {
            weight: self.params.add(format!("{name}.weight"), group, w),
            bias: self.params.add(format!("{name}.bias"), group, Tensor::zeros(&[fan_out])),
        }
    }
}

impl<T: Element> ReMarNet<T> {
    /// Fresh network with fan-in uniform weights drawn from `seed`.
    pub fn new(config: ModelConfig, branches: Branches, seed: u64) -> Result<Self> {
        config.validate()?;
        branches.validate()?;
        let mut rng = Rng::new(seed);
        let mut b = Builder {
            params: ParamStore::new(),
            running: Vec::new(),
            rng: &mut rng,
        };
        let c = config.channels;
        let embedding = (0..config.embed_blocks)
            .map(|i| {
                let cin = if i == 0 { config.in_channels } else { c };
                b.conv_block(&format!("embedding.block{i}"), Group::Embedding, cin, c, i < 2)
            })
            .collect();
        let relation = vec![
            b.conv_block("rm.block0", Group::Rm, 2 * c, c, true),
            b.conv_block("rm.block1", Group::Rm, c, c, true),
        ];
        let rm_hidden = b.dense("rm.fc1", Group::Rm, config.relation_flat_len(), config.rm_hidden);
        let rm_out = b.dense("rm.fc2", Group::Rm, config.rm_hidden, 1);
        let fc_hidden = b.dense("fc.hidden", Group::Fc, config.feature_len(), config.fc_hidden);
        let fc_out = b.dense("fc.out", Group::Fc, config.fc_hidden, config.classes);
        let (params, running) = (b.params, b.running);
        Ok(Self {
            config,
            branches,
            params,
            running,
            embedding,
            relation,
            rm_hidden,
            rm_out,
            fc_hidden,
            fc_out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn branches(&self) -> Branches {
        self.branches
    }

    pub fn set_branches(&mut self, branches: Branches) -> Result<()> {
        branches.validate()?;
        self.branches = branches;
        Ok(())
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.running
    }

    /// Same network in another element type.
    pub fn cast<U: Element>(&self) -> ReMarNet<U> {
        ReMarNet {
            config: self.config.clone(),
            branches: self.branches,
            params: self.params.cast(),
            running: self
                .running
                .iter()
                .map(|r| RunningStats {
                    name: r.name.clone(),
                    mean: r.mean.iter().map(|&v| U::from_f64_lossy(v.as_f64())).collect(),
                    var: r.var.iter().map(|&v| U::from_f64_lossy(v.as_f64())).collect(),
                })
                .collect(),
            embedding: self.embedding.clone(),
            relation: self.relation.clone(),
            rm_hidden: self.rm_hidden.clone(),
            rm_out: self.rm_out.clone(),
            fc_hidden: self.fc_hidden.clone(),
            fc_out: self.fc_out.clone(),
        }
    }

    fn block(&self, g: &mut Graph<T>, x: NodeId, blk: &ConvBlock, mode: Mode) -> Result<NodeId> {
        let w = g.param(&self.params, blk.weight);
        let b = g.param(&self.params, blk.bias);
        let y = g.conv2d(x, w, b, 1, 1)?;
        let gamma = g.param(&self.params, blk.gamma);
        let beta = g.param(&self.params, blk.beta);
        let eps = T::from_f64_lossy(self.config.bn_eps);
        let stats = &self.running[blk.norm];
        let norm_mode = match mode {
            Mode::Train => NormMode::Train { layer: blk.norm },
            Mode::Eval => NormMode::Eval {
                mean: &stats.mean,
                var: &stats.var,
            },
        };
        let y = g.batchnorm2d(y, gamma, beta, eps, norm_mode)?;
        let y = g.relu(y);
        if blk.pool {
            g.maxpool2x2(y)
        } else {
            Ok(y)
        }
    }

    fn dense(&self, g: &mut Graph<T>, x: NodeId, d: &Dense) -> Result<NodeId> {
        let w = g.param(&self.params, d.weight);
        let b = g.param(&self.params, d.bias);
        g.linear(x, w, b)
    }

    fn check_images(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        if shape.len() != 4 || shape[1..] != [c.in_channels, c.height, c.width] {
            return Err(Error::dim(format!(
                "images {shape:?} do not match the configured [B, {}, {}, {}]",
                c.in_channels, c.height, c.width
            )));
        }
        Ok(())
    }

    /// Embedding feature maps `[B, channels, H/4, W/4]`.
    pub fn embed(&self, g: &mut Graph<T>, images: NodeId, mode: Mode) -> Result<NodeId> {
        self.check_images(g.value(images).shape())?;
        let mut x = images;
        for blk in &self.embedding {
            x = self.block(g, x, blk, mode)?;
        }
        Ok(x)
    }

    /// Relation scores `[B, K]`; entry `(i, j)` scores the channel
    /// concatenation of sample `i`'s and prototype `j`'s feature maps.
    pub fn relation_scores(
        &self,
        g: &mut Graph<T>,
        samples: NodeId,
        prototypes: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let (ss, ps) = (g.value(samples).shape().to_vec(), g.value(prototypes).shape().to_vec());
        let expect = self.config.feature_shape();
        if ss.len() != 4 || ps.len() != 4 || ss[1..] != expect || ps[1..] != expect {
            return Err(Error::dim(format!(
                "relation inputs {ss:?} and {ps:?} must both have feature shape {expect:?}"
            )));
        }
        let (b, k) = (ss[0], ps[0]);
        let left: Vec<usize> = (0..b * k).map(|p| p / k).collect();
        let right: Vec<usize> = (0..b * k).map(|p| p % k).collect();
        let xs = g.select_batch(samples, &left)?;
        let os = g.select_batch(prototypes, &right)?;
        let mut x = g.concat_channels(xs, os)?;
        for blk in &self.relation {
            x = self.block(g, x, blk, mode)?;
        }
        let x = g.reshape(x, &[b * k, self.config.relation_flat_len()])?;
        let h = self.dense(g, x, &self.rm_hidden)?;
        let h = g.relu(h);
        let s = self.dense(g, h, &self.rm_out)?;
        let s = g.sigmoid(s);
        g.reshape(s, &[b, k])
    }

    /// Class probabilities `[B, K]` from the fully connected branch.
    pub fn fc_probs(&self, g: &mut Graph<T>, samples: NodeId) -> Result<NodeId> {
        if !self.branches.fc {
            return Err(Error::Usage("the FC branch is disabled".into()));
        }
        let s = g.value(samples).shape().to_vec();
        if s.len() != 4 || s[1..] != self.config.feature_shape() {
            return Err(Error::dim(format!("fc branch input {s:?}")));
        }
        let x = g.reshape(samples, &[s[0], self.config.feature_len()])?;
        let h = self.dense(g, x, &self.fc_hidden)?;
        let h = g.relu(h);
        let z = self.dense(g, h, &self.fc_out)?;
        g.softmax_rows(z)
    }

    /// One forward pass over a labelled batch, building the weighted loss
    /// `a · L_RM + b · L_CE` over the enabled branches.
    ///
    /// Samples and prototypes are embedded together in a single batch, so
    /// in train mode they share batch-norm statistics.
    pub fn forward_batch(
        &self,
        g: &mut Graph<T>,
        images: &Tensor<T>,
        prototypes: &Tensor<T>,
        targets: &Tensor<T>,
        weights: (f64, f64),
        mode: Mode,
    ) -> Result<StepNodes> {
        let n = images.shape()[0];
        let k = self.config.classes;
        if targets.shape() != [n, k] {
            return Err(Error::dim(format!(
                "targets {:?}, expected [{n}, {k}]",
                targets.shape()
            )));
        }
        let x = g.input(images.clone());
        let (samples, protos) = if self.branches.rm {
            if prototypes.shape().first() != Some(&k) {
                return Err(Error::dim(format!(
                    "need {k} prototypes, got shape {:?}",
                    prototypes.shape()
                )));
            }
            let o = g.input(prototypes.clone());
            let both = g.concat_batch(&[x, o])?;
            let f = self.embed(g, both, mode)?;
            (g.narrow_batch(f, 0, n)?, Some(g.narrow_batch(f, n, k)?))
        } else {
            (self.embed(g, x, mode)?, None)
        };
        let (a, b) = (T::from_f64_lossy(weights.0), T::from_f64_lossy(weights.1));
        let mut terms = Vec::new();
        let (mut scores, mut probs, mut loss_rm, mut loss_ce) = (None, None, None, None);
        if let Some(o) = protos {
            let r = self.relation_scores(g, samples, o, mode)?;
            let l = g.squared_error(r, targets)?;
            terms.push((l, a));
            scores = Some(r);
            loss_rm = Some(l);
        }
        if self.branches.fc {
            let p = self.fc_probs(g, samples)?;
            let l = g.cross_entropy(p, targets)?;
            terms.push((l, b));
            probs = Some(p);
            loss_ce = Some(l);
        }
        let loss = g.weighted_sum(&terms)?;
        Ok(StepNodes {
            scores,
            probs,
            loss_rm,
            loss_ce,
            loss,
        })
    }

    /// Fold the batch statistics recorded in `g` into the running statistics.
    pub fn commit_norm_updates(&mut self, g: &Graph<T>) {
        let m = T::from_f64_lossy(self.config.bn_momentum);
        let keep = T::one() - m;
        for u in g.norm_updates() {
            let rs = &mut self.running[u.layer];
            for (r, &v) in rs.mean.iter_mut().zip(&u.mean) {
                *r = keep * *r + m * v;
            }
            for (r, &v) in rs.var.iter_mut().zip(&u.var) {
                *r = keep * *r + m * v;
            }
        }
    }

    /// Eval-mode embedding of a stack of images, `chunk` images at a time.
    pub fn embed_images(&self, images: &Tensor<T>, chunk: usize) -> Result<Tensor<T>> {
        self.check_images(images.shape())?;
        let n = images.shape()[0];
        let mut parts = Vec::new();
        for start in (0..n).step_by(chunk.max(1)) {
            let len = chunk.max(1).min(n - start);
            let mut g = Graph::new();
            let x = g.input(images.narrow_batch(start, len)?);
            let f = self.embed(&mut g, x, Mode::Eval)?;
            parts.push(g.value(f).clone());
        }
        let refs: Vec<&Tensor<T>> = parts.iter().collect();
        Tensor::cat_batch(&refs)
    }

    /// Eval-mode relation scores of embedded samples against embedded prototypes.
    pub fn score_features(&self, samples: &Tensor<T>, prototypes: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let s = g.input(samples.clone());
        let o = g.input(prototypes.clone());
        let r = self.relation_scores(&mut g, s, o, Mode::Eval)?;
        Ok(g.value(r).clone())
    }

    /// Eval-mode class probabilities of embedded samples.
    pub fn probs_features(&self, samples: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let s = g.input(samples.clone());
        let p = self.fc_probs(&mut g, s)?;
        Ok(g.value(p).clone())
    }

    /// Eval-mode outputs of the enabled branches for `images`.
    pub fn infer(&self, images: &Tensor<T>, prototypes: &Tensor<T>, chunk: usize) -> Result<BranchOutputs<T>> {
        let proto_feats = if self.branches.rm {
            Some(self.embed_images(prototypes, chunk)?)
        } else {
            None
        };
        let n = images.shape()[0];
        let (mut scores, mut probs) = (Vec::new(), Vec::new());
        for start in (0..n).step_by(chunk.max(1)) {
            let len = chunk.max(1).min(n - start);
            let feats = self.embed_images(&images.narrow_batch(start, len)?, chunk)?;
            if let Some(o) = &proto_feats {
                scores.push(self.score_features(&feats, o)?);
            }
            if self.branches.fc {
                probs.push(self.probs_features(&feats)?);
            }
        }
        let cat = |v: Vec<Tensor<T>>| -> Result<Option<Tensor<T>>> {
            if v.is_empty() {
                return Ok(None);
            }
            let refs: Vec<&Tensor<T>> = v.iter().collect();
            Tensor::cat_batch(&refs).map(Some)
        };
        Ok(BranchOutputs {
            scores: cat(scores)?,
            probs: cat(probs)?,
        })
    }

    /// Every parameter and running statistic, keyed by stable path.
    pub fn state_map(&self) -> BTreeMap<String, Tensor<T>> {
        let mut map = BTreeMap::new();
        for p in self.params.iter() {
            map.insert(p.name().to_string(), p.value().clone());
        }
        for r in &self.running {
            let n = r.mean.len();
            map.insert(
                format!("{}.running_mean", r.name),
                Tensor::from_parts(vec![n], r.mean.clone()),
            );
            map.insert(
                format!("{}.running_var", r.name),
                Tensor::from_parts(vec![n], r.var.clone()),
            );
        }
        map
    }

    /// Overwrite parameters and running statistics from a state map. Every
    /// entry of [`Self::state_map`] must be present with a matching shape.
    pub fn load_state_map(&mut self, map: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        let fetch = |key: &str| {
            map.get(key)
                .ok_or_else(|| Error::parse(key, "missing from checkpoint"))
        };
        let ids: Vec<ParamId> = self.params.ids().collect();
        for id in ids {
            let name = self.params.get(id).name().to_string();
            self.params
                .set_value(id, fetch(&name)?.clone())
                .map_err(|e| Error::parse(&name, e.to_string()))?;
        }
        for r in &mut self.running {
            for (suffix, dst) in [("running_mean", &mut r.mean), ("running_var", &mut r.var)] {
                let key = format!("{}.{suffix}", r.name);
                let t = fetch(&key)?;
                if t.len() != dst.len() {
                    return Err(Error::parse(key, "wrong length"));
                }
                dst.copy_from_slice(t.data());
            }
        }
        Ok(())
    }
}

/// One-hot rows for `labels` over `classes` classes.
pub fn one_hot<T: Element>(labels: &[usize], classes: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[labels.len().max(1), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * classes + l] = T::one();
    }
    t
}

/// Relation loss `(1/B) Σ_i Σ_j (r_ij − y_ij)²`.
pub fn loss_rm<T: Element>(scores: &Tensor<T>, targets: &Tensor<T>) -> Result<T> {
    graph::squared_error(scores, targets)
}

/// Cross-entropy loss `−(1/B) Σ_i y_iᵀ log p_i` with the log clamped at 1e-12.
pub fn loss_ce<T: Element>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<T> {
    graph::cross_entropy(probs, targets)
}

/// Weighted total loss `a · l_rm + b · l_ce`.
pub fn loss_total<T: Element>(l_rm: T, l_ce: T, a: f64, b: f64) -> Result<T> {
    validate_loss_weights(a, b)?;
    Ok(T::from_f64_lossy(a) * l_rm + T::from_f64_lossy(b) * l_ce)
}

pub fn validate_loss_weights(a: f64, b: f64) -> Result<()> {
    if !(a >= 0.0) || !(b >= 0.0) || a + b <= 0.0 {
        return Err(Error::Config(format!(
            "loss weights must be non-negative with a positive sum, got a={a} b={b}"
        )));
    }
    Ok(())
}

/// Ensemble prediction: per row, the class maximizing `r + p`, with an
/// absent branch counting as zeros and ties going to the lowest index.
///
/// Rows where both branches pick the same class return that class without
/// looking at the sum: in exact arithmetic the sum must agree, but a rounded
/// sum can tie two classes whose scores differ only below its precision.
pub fn predict<T: Element>(scores: Option<&Tensor<T>>, probs: Option<&Tensor<T>>) -> Result<Vec<usize>> {
    match (scores, probs) {
        (None, None) => Err(Error::Usage("prediction needs at least one branch output".into())),
        (Some(r), None) => Ok(r.argmax_rows()),
        (None, Some(p)) => Ok(p.argmax_rows()),
        (Some(r), Some(p)) => {
            if r.shape() != p.shape() || r.ndim() != 2 {
                return Err(Error::dim(format!(
                    "branch outputs {:?} and {:?} differ",
                    r.shape(),
                    p.shape()
                )));
            }
            let sum = Tensor::from_parts(
                r.shape().to_vec(),
                r.data().iter().zip(p.data()).map(|(&a, &b)| a + b).collect(),
            );
            let (ar, ap) = (r.argmax_rows(), p.argmax_rows());
            Ok(sum
                .argmax_rows()
                .into_iter()
                .zip(ar.into_iter().zip(ap))
                .map(|(s, (a, b))| if a == b { a } else { s })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        ModelConfig {
            height: 16,
            width: 16,
            classes: 3,
            channels: 4,
            ..ModelConfig::default()
        }
    }

    fn t(shape: &[usize], v: &[f32]) -> Tensor<f32> {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn embedding_geometry() {
        let net = ReMarNet::<f32>::new(
            ModelConfig {
                channels: 64,
                ..ModelConfig::default()
            },
            Branches::BOTH,
            1,
        )
        .unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::from_fn(&[2, 1, 32, 32], |i| (i % 13) as f32 / 13.0));
        let f = net.embed(&mut g, x, Mode::Train).unwrap();
        assert_eq!(g.value(f).shape(), &[2, 64, 8, 8]);

        let net = ReMarNet::<f32>::new(small_config(), Branches::BOTH, 1).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[3, 1, 16, 16]));
        let f = net.embed(&mut g, x, Mode::Eval).unwrap();
        assert_eq!(g.value(f).shape(), &[3, 4, 4, 4]);
    }

    #[test]
    fn identical_inputs_embed_identically() {
        let net = ReMarNet::<f32>::new(small_config(), Branches::BOTH, 2).unwrap();
        let one = Tensor::from_fn(&[1, 1, 16, 16], |i| (i % 7) as f32 / 7.0);
        let two = Tensor::cat_batch(&[&one, &one]).unwrap();
        let f = net.embed_images(&two, 8).unwrap();
        let (a, b) = f.data().split_at(f.len() / 2);
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_geometry_is_rejected() {
        let net = ReMarNet::<f32>::new(small_config(), Branches::BOTH, 3).unwrap();
        assert!(matches!(
            net.embed_images(&Tensor::zeros(&[1, 1, 12, 16]), 4),
            Err(Error::Dimension(_))
        ));
        let bad = ModelConfig {
            height: 20,
            ..small_config()
        };
        assert!(ReMarNet::<f32>::new(bad, Branches::BOTH, 0).is_err());
    }

    #[test]
    fn zero_relation_weights_give_half() {
        let mut net = ReMarNet::<f32>::new(small_config(), Branches::BOTH, 4).unwrap();
        let ids: Vec<ParamId> = net.params().ids().collect();
        for id in ids {
            let p = net.params().get(id);
            if p.group() == Group::Rm && !p.name().contains("gamma") {
                let z = Tensor::zeros(p.value().shape());
                net.params_mut().set_value(id, z).unwrap();
            }
        }
        let feats = Tensor::from_fn(&[3, 4, 4, 4], |i| (i % 5) as f32);
        let protos = Tensor::from_fn(&[8, 4, 4, 4], |i| (i % 3) as f32);
        let r = net.score_features(&feats, &protos).unwrap();
        assert_eq!(r.shape(), &[3, 8]);
        assert!(r.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn fc_branch_probabilities() {
        let mut net = ReMarNet::<f32>::new(
            ModelConfig {
                classes: 10,
                ..small_config()
            },
            Branches::BOTH,
            5,
        )
        .unwrap();
        let feats = Tensor::from_fn(&[5, 4, 4, 4], |i| ((i * 31) % 17) as f32 / 17.0);
        let p = net.probs_features(&feats).unwrap();
        assert_eq!(p.shape(), &[5, 10]);
        for row in p.data().chunks(10) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
        for name in ["fc.out.weight", "fc.out.bias"] {
            let id = net.params().find(name).unwrap();
            let z = Tensor::zeros(net.params().get(id).value().shape());
            net.params_mut().set_value(id, z).unwrap();
        }
        let p = net.probs_features(&feats).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.1).abs() < 1e-7));

        net.set_branches(Branches::RM_ONLY).unwrap();
        assert!(matches!(net.probs_features(&feats), Err(Error::Usage(_))));
    }

    #[test]
    fn loss_examples() {
        let y = t(&[1, 2], &[1.0, 0.0]);
        assert_eq!(loss_rm(&y, &y).unwrap(), 0.0);
        assert_eq!(loss_rm(&t(&[1, 2], &[0.5, 0.5]), &y).unwrap(), 0.5);
        let y8 = one_hot::<f32>(&[3], 8);
        assert_eq!(loss_rm(&Tensor::full(&[1, 8], 0.5), &y8).unwrap(), 2.0);

        assert_eq!(loss_ce(&y, &y).unwrap(), 0.0);
        let u = Tensor::<f64>::full(&[2, 4], 0.25);
        let y4 = one_hot::<f64>(&[0, 3], 4);
        assert!((loss_ce(&u, &y4).unwrap() - 4f64.ln()).abs() < 1e-12);
        let ce = loss_ce(&Tensor::<f64>::new(&[1, 2], vec![0.9, 0.1]).unwrap(), &one_hot(&[1], 2)).unwrap();
        assert!((ce - 2.302585).abs() < 1e-5);
        assert!(loss_rm(&y, &t(&[2, 1], &[1.0, 0.0])).is_err());
    }

    #[test]
    fn ce_clamps_zero_probability() {
        let p = Tensor::<f64>::new(&[1, 2], vec![1.0, 0.0]).unwrap();
        let ce = loss_ce(&p, &one_hot(&[1], 2)).unwrap();
        assert!((ce - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn total_loss_weights() {
        assert_eq!(loss_total(0.5f32, 1.0, 1.0, 1.0).unwrap(), 1.5);
        assert_eq!(loss_total(0.5f32, 1.0, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(loss_total(0.5f32, 1.0, 1.0, 0.0).unwrap(), 0.5);
        assert!(matches!(loss_total(0.5f32, 1.0, 0.0, 0.0), Err(Error::Config(_))));
        assert!(loss_total(0.5f32, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn prediction_examples() {
        let r = t(&[1, 2], &[0.9, 0.2]);
        let p = t(&[1, 2], &[0.3, 0.7]);
        assert_eq!(predict(Some(&r), Some(&p)).unwrap(), vec![0]);
        let r = t(&[1, 3], &[0.1, 0.2, 0.9]);
        let p = t(&[1, 3], &[0.2, 0.1, 0.7]);
        assert_eq!(predict(Some(&r), Some(&p)).unwrap(), vec![2]);
        let r = t(&[1, 2], &[0.5, 0.5]);
        let p = t(&[1, 2], &[0.5, 0.5]);
        assert_eq!(predict(Some(&r), Some(&p)).unwrap(), vec![0]);
        assert_eq!(predict(None, Some(&p)).unwrap(), vec![0]);
        assert!(matches!(predict::<f32>(None, None), Err(Error::Usage(_))));
    }

    #[test]
    fn parameters_partition_into_groups() {
        let net = ReMarNet::<f32>::new(small_config(), Branches::BOTH, 6).unwrap();
        for p in net.params().iter() {
            let prefix = p.name().split('.').next().unwrap();
            assert_eq!(prefix, p.group().name(), "{}", p.name());
        }
        let groups: std::collections::BTreeSet<Group> = net.params().iter().map(|p| p.group()).collect();
        assert_eq!(groups.len(), 3);
    }

    #[test]
    fn state_map_round_trip() {
        let a = ReMarNet::<f32>::new(small_config(), Branches::BOTH, 7).unwrap();
        let mut b = ReMarNet::<f32>::new(small_config(), Branches::BOTH, 8).unwrap();
        b.load_state_map(&a.state_map()).unwrap();
        assert_eq!(a.state_map(), b.state_map());
        let mut m = a.state_map();
        m.remove("fc.out.bias");
        assert!(matches!(b.load_state_map(&m), Err(Error::Parse { .. })));
    }
}
