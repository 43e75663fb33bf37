//! RMSprop with per-group learning rates, the training loop, and checkpoints.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::data::{batches, tns, Dataset, TensorMap};
use crate::error::{Error, Result};
use crate::graph::{Graph, Group, Parameter};
use crate::model::{predict, validate_loss_weights, Branches, Mode, ModelConfig, ReMarNet};
use crate::rng::derive_indexed;
use crate::tensor::{Element, Tensor};

/// Which branches are trained (and therefore which predictions exist).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainMode {
    Joint,
    SingleRm,
    SingleFc,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [TrainMode::SingleRm, TrainMode::SingleFc, TrainMode::Joint];

    pub fn branches(self) -> Branches {
        match self {
            TrainMode::Joint => Branches::BOTH,
            TrainMode::SingleRm => Branches::RM_ONLY,
            TrainMode::SingleFc => Branches::FC_ONLY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Joint => "joint",
            TrainMode::SingleRm => "single-rm",
            TrainMode::SingleFc => "single-fc",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(TrainMode::Joint),
            "single-rm" => Ok(TrainMode::SingleRm),
            "single-fc" => Ok(TrainMode::SingleFc),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?} (expected joint, single-rm or single-fc)"
            ))),
        }
    }
}

/// Optimizer and loop settings for one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the relation (squared-error) loss.
    pub a: f64,
    /// Weight of the cross-entropy loss.
    pub b: f64,
    pub lr_embedding: f64,
    pub lr_fc: f64,
    pub lr_rm: f64,
    pub rho: f64,
    pub eps: f64,
    pub seed: u64,
    pub mode: TrainMode,
    /// Images per forward pass when evaluating.
    pub eval_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            a: 1.0,
            b: 1.0,
            lr_embedding: 1e-5,
            lr_fc: 1e-4,
            lr_rm: 1e-3,
            rho: 0.9,
            eps: 1e-8,
            seed: 0,
            mode: TrainMode::Joint,
            eval_chunk: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        validate_loss_weights(self.a, self.b)?;
        for (name, lr) in [
            ("lr_embedding", self.lr_embedding),
            ("lr_fc", self.lr_fc),
            ("lr_rm", self.lr_rm),
        ] {
            // Zero freezes a group; anything else must be a positive step.
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite rate >= 0, got {lr}")));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.batch_size == 0 || self.eval_chunk == 0 {
            return Err(Error::Config("batch size and eval chunk must be at least 1".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, group: Group) -> f64 {
        match group {
            Group::Embedding => self.lr_embedding,
            Group::Rm => self.lr_rm,
            Group::Fc => self.lr_fc,
        }
    }
}

/// Running mean of squared gradients, one cache per parameter.
#[derive(Clone, Debug)]
pub struct RmsPropState<T = f32> {
    caches: Vec<Vec<T>>,
}

impl<T: Element> RmsPropState<T> {
    pub fn new<'a>(params: impl Iterator<Item = &'a Parameter<T>>) -> Self {
        Self {
            caches: params.map(|p| vec![T::zero(); p.value().len()]).collect(),
        }
    }

    pub fn cache(&self, index: usize) -> &[T] {
        &self.caches[index]
    }
}

/// `cache ← ρ·cache + (1−ρ)·g²; value ← value − lr·g/(√cache + eps)`, then
/// the gradient is cleared.
pub fn rmsprop_step<T: Element>(param: &mut Parameter<T>, cache: &mut [T], lr: f64, rho: f64, eps: f64) {
    let (lr, rho, eps) = (T::from_f64_lossy(lr), T::from_f64_lossy(rho), T::from_f64_lossy(eps));
    let decay = T::one() - rho;
    let (value, grad) = param.parts_mut();
    for ((w, g), c) in value.iter_mut().zip(grad.iter_mut()).zip(cache.iter_mut()) {
        *c = rho * *c + decay * *g * *g;
        *w = *w - lr * *g / (c.sqrt() + eps);
        *g = T::zero();
    }
}

/// Apply one RMSprop step to every parameter of the enabled branches.
pub fn optimizer_step<T: Element>(net: &mut ReMarNet<T>, state: &mut RmsPropState<T>, cfg: &TrainConfig) {
    let branches = net.branches();
    for (p, cache) in net.params_mut().iter_mut().zip(state.caches.iter_mut()) {
        if branches.includes(p.group()) {
            let lr = cfg.learning_rate(p.group());
            rmsprop_step(p, cache, lr, cfg.rho, cfg.eps);
        } else {
            p.zero_grad();
        }
    }
}

/// Losses and accuracies after one epoch. Fields of a branch that the run
/// does not train are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub l_rm: Option<f64>,
    pub l_ce: Option<f64>,
    pub l_total: f64,
    pub train_acc_rm: Option<f64>,
    pub train_acc_fc: Option<f64>,
    pub train_acc_ens: f64,
    pub test_acc_rm: Option<f64>,
    pub test_acc_fc: Option<f64>,
    pub test_acc_ens: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,l_rm,l_ce,l_total,train_acc_rm,train_acc_fc,train_acc_ens,test_acc_rm,test_acc_fc,test_acc_ens";

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            cell(self.l_rm),
            cell(self.l_ce),
            self.l_total,
            cell(self.train_acc_rm),
            cell(self.train_acc_fc),
            self.train_acc_ens,
            cell(self.test_acc_rm),
            cell(self.test_acc_fc),
            self.test_acc_ens,
        )
    }
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(metrics_csv(records).as_bytes())?;
    Ok(())
}

fn matches(pred: &[usize], truth: &[usize]) -> usize {
    pred.iter().zip(truth).filter(|(p, t)| p == t).count()
}

/// Test-set accuracies of each available prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Accuracies {
    pub rm: Option<f64>,
    pub fc: Option<f64>,
    pub ensemble: f64,
}

/// Eval-mode accuracies of `net` on `ds`.
pub fn evaluate(net: &ReMarNet<f32>, ds: &Dataset, prototypes: &Tensor<f32>, chunk: usize) -> Result<Accuracies> {
    let out = net.infer(ds.images(), prototypes, chunk)?;
    let n = ds.len() as f64;
    let acc = |pred: Vec<usize>| matches(&pred, ds.labels()) as f64 / n;
    Ok(Accuracies {
        rm: out.scores.as_ref().map(|r| acc(r.argmax_rows())),
        fc: out.probs.as_ref().map(|p| acc(p.argmax_rows())),
        ensemble: acc(out.predict()?),
    })
}

/// Train `net` on `train` for `cfg.epochs` epochs, evaluating on `test`
/// after each one.
///
/// Every batch is paired with all prototypes. Batch order is reshuffled
/// each epoch from a stream derived from `cfg.seed`; the run is a pure
/// function of the initial network, the data and `cfg`.
pub fn fit(
    net: &mut ReMarNet<f32>,
    train: &Dataset,
    prototypes: &Tensor<f32>,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<MetricsRecord>> {
    fit_with(net, train, prototypes, test, cfg, |_| {})
}

/// [`fit`] with a callback invoked after every epoch.
pub fn fit_with(
    net: &mut ReMarNet<f32>,
    train: &Dataset,
    prototypes: &Tensor<f32>,
    test: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&MetricsRecord),
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let branches = cfg.mode.branches();
    if net.branches() != branches {
        return Err(Error::Config(format!(
            "mode {} needs branches rm={} fc={}, but the network has rm={} fc={}",
            cfg.mode,
            branches.rm,
            branches.fc,
            net.branches().rm,
            net.branches().fc
        )));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("train and test sets must be non-empty".into()));
    }
    let mut state = RmsPropState::new(net.params().iter());
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let order_seed = derive_indexed(cfg.seed, "batches", epoch as u64);
        let (mut sum_rm, mut sum_ce) = (0.0f64, 0.0f64);
        let (mut hit_rm, mut hit_fc, mut hit_ens) = (0usize, 0usize, 0usize);
        for (bi, batch) in batches(train, cfg.batch_size, order_seed)?.into_iter().enumerate() {
            let mut g = Graph::new();
            let nodes = net.forward_batch(
                &mut g,
                &batch.images,
                prototypes,
                &batch.targets,
                (cfg.a, cfg.b),
                Mode::Train,
            )?;
            let loss = g.value(nodes.loss).item();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss is {loss} at epoch {epoch}, batch {}",
                    bi + 1
                )));
            }
            let n = batch.labels.len() as f64;
            let scores = nodes.scores.map(|id| g.value(id));
            let probs = nodes.probs.map(|id| g.value(id));
            if let Some(l) = nodes.loss_rm {
                sum_rm += g.value(l).item() as f64 * n;
            }
            if let Some(l) = nodes.loss_ce {
                sum_ce += g.value(l).item() as f64 * n;
            }
            if let Some(r) = scores {
                hit_rm += matches(&r.argmax_rows(), &batch.labels);
            }
            if let Some(p) = probs {
                hit_fc += matches(&p.argmax_rows(), &batch.labels);
            }
            hit_ens += matches(&predict(scores, probs)?, &batch.labels);
            g.backward(nodes.loss, net.params_mut())?;
            net.commit_norm_updates(&g);
            optimizer_step(net, &mut state, cfg);
        }
        let n = train.len() as f64;
        let l_rm = branches.rm.then_some(sum_rm / n);
        let l_ce = branches.fc.then_some(sum_ce / n);
        let l_total = cfg.a * l_rm.unwrap_or(0.0) + cfg.b * l_ce.unwrap_or(0.0);
        let test_acc = evaluate(net, test, prototypes, cfg.eval_chunk)?;
        let record = MetricsRecord {
            epoch,
            l_rm,
            l_ce,
            l_total,
            train_acc_rm: branches.rm.then_some(hit_rm as f64 / n),
            train_acc_fc: branches.fc.then_some(hit_fc as f64 / n),
            train_acc_ens: hit_ens as f64 / n,
            test_acc_rm: test_acc.rm,
            test_acc_fc: test_acc.fc,
            test_acc_ens: test_acc.ensemble,
        };
        on_epoch(&record);
        records.push(record);
    }
    Ok(records)
}

const META_MODEL: &str = "meta.model";
const META_RUN: &str = "meta.run";
const PROTOTYPES: &str = "prototypes";

fn text_tensor(text: &str) -> Tensor<f32> {
    let bytes: Vec<f32> = text.bytes().map(f32::from).collect();
    let n = bytes.len().max(1);
    let mut data = bytes;
    data.resize(n, f32::from(b'\n'));
    Tensor::new(&[n], data).expect("length matches")
}

fn tensor_text(key: &str, t: &Tensor<f32>) -> Result<String> {
    let bytes = t
        .data()
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && (0.0..256.0).contains(&v) {
                Ok(v as u8)
            } else {
                Err(Error::parse(key, "not a byte string"))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    String::from_utf8(bytes).map_err(|_| Error::parse(key, "not UTF-8"))
}

fn model_text(config: &ModelConfig, branches: Branches) -> String {
    format!(
        "in_channels = {}\nheight = {}\nwidth = {}\nclasses = {}\nchannels = {}\n\
         embed_blocks = {}\nrm_hidden = {}\nfc_hidden = {}\nbn_eps = {}\nbn_momentum = {}\n\
         rm = {}\nfc = {}\n",
        config.in_channels,
        config.height,
        config.width,
        config.classes,
        config.channels,
        config.embed_blocks,
        config.rm_hidden,
        config.fc_hidden,
        config.bn_eps,
        config.bn_momentum,
        branches.rm,
        branches.fc,
    )
}

fn parse_model_text(text: &str) -> Result<(ModelConfig, Branches)> {
    fn field<V: FromStr>(key: &str, v: &str) -> Result<V> {
        v.parse()
            .map_err(|_| Error::parse(format!("{META_MODEL}.{key}"), format!("bad value {v:?}")))
    }
    let mut c = ModelConfig::default();
    let mut b = Branches::BOTH;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(META_MODEL, format!("bad line {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "in_channels" => c.in_channels = field(k, v)?,
            "height" => c.height = field(k, v)?,
            "width" => c.width = field(k, v)?,
            "classes" => c.classes = field(k, v)?,
            "channels" => c.channels = field(k, v)?,
            "embed_blocks" => c.embed_blocks = field(k, v)?,
            "rm_hidden" => c.rm_hidden = field(k, v)?,
            "fc_hidden" => c.fc_hidden = field(k, v)?,
            "bn_eps" => c.bn_eps = field(k, v)?,
            "bn_momentum" => c.bn_momentum = field(k, v)?,
            "rm" => b.rm = field(k, v)?,
            "fc" => b.fc = field(k, v)?,
            _ => return Err(Error::parse(format!("{META_MODEL}.{k}"), "unknown key")),
        }
    }
    Ok((c, b))
}

/// A trained network, the prototypes it was trained with, and the run
/// configuration that produced it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub net: ReMarNet<f32>,
    pub prototypes: Tensor<f32>,
    /// Free-form run description (the resolved configuration file).
    pub run_config: String,
}

impl Checkpoint {
    /// Parameters and running statistics under their own names, the
    /// prototypes, and the two text blobs stored one byte per element.
    pub fn to_tensor_map(&self) -> TensorMap {
        let mut map = self.net.state_map();
        map.insert(PROTOTYPES.into(), self.prototypes.clone());
        map.insert(
            META_MODEL.into(),
            text_tensor(&model_text(self.net.config(), self.net.branches())),
        );
        map.insert(META_RUN.into(), text_tensor(&self.run_config));
        map
    }

    pub fn from_tensor_map(map: &TensorMap) -> Result<Self> {
        let get = |key: &str| map.get(key).ok_or_else(|| Error::parse(key, "missing from checkpoint"));
        let (config, branches) = parse_model_text(&tensor_text(META_MODEL, get(META_MODEL)?)?)?;
        let mut net = ReMarNet::new(config, branches, 0)?;
        net.load_state_map(map)?;
        let prototypes = get(PROTOTYPES)?.clone();
        let run_config = tensor_text(META_RUN, get(META_RUN)?)?.trim_end_matches('\n').to_string();
        Ok(Self {
            net,
            prototypes,
            run_config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        tns::save_tns(path, &self.to_tensor_map())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_map(&tns::load_tns(path)?)
    }
}
