//! Flat `key = value` run configuration.
//!
//! Keys are dotted (`train.lr_rm`), one per line; `#` starts a comment.
//! [`RunConfig::to_text`] writes every key, and parsing that text back
//! yields an identical configuration, so a printed configuration file
//! reproduces its run exactly.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{generate_synthetic, load_manifest, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::experiment::Experiment;
use crate::model::{Mode, ModelConfig};
use crate::train::{TrainConfig, TrainMode};

/// Names accepted by [`RunConfig::preset`].
pub const PRESETS: [&str; 3] = ["default", "synthetic", "micro"];

/// Every setting of every subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    /// Run seed; all random choices of a run derive from it.
    pub seed: u64,

    /// Dataset file (`.tns` from `gen-data`, or a `path,label` CSV
    /// manifest). Empty means "generate the synthetic task".
    pub data_path: String,
    pub synthetic: SyntheticSpec,
    /// Seed of the synthetic task itself, kept apart from the run seed so
    /// that rounds with different run seeds see the same data.
    pub data_seed: u64,
    pub train_fraction: f64,
    pub reduce_per_class: usize,

    pub model: ModelConfig,
    pub train: TrainConfig,

    pub output_dir: PathBuf,
    pub jobs: usize,
    pub gen_out: PathBuf,
    pub checkpoint: PathBuf,
    pub export_out: PathBuf,
    pub ablate_rounds: usize,
    pub stability_proto_sets: usize,
    pub stability_rounds: usize,

    pub gradcheck_channels: usize,
    pub gradcheck_step: f64,
    pub gradcheck_tolerance: f64,
    pub gradcheck_norm: Mode,

    pub wilcoxon_a: PathBuf,
    pub wilcoxon_b: PathBuf,
    pub wilcoxon_exact_cutoff: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "default".into(),
            seed: 0,
            data_path: String::new(),
            synthetic: SyntheticSpec {
                classes: 4,
                per_class: 100,
                channels: 1,
                height: 32,
                width: 32,
                sigma: 0.25,
            },
            data_seed: 0,
            train_fraction: 0.5,
            reduce_per_class: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            output_dir: "out".into(),
            jobs: 1,
            gen_out: "dataset.tns".into(),
            checkpoint: "out/checkpoint.tns".into(),
            export_out: "embeddings.csv".into(),
            ablate_rounds: 15,
            stability_proto_sets: 9,
            stability_rounds: 15,
            gradcheck_channels: 4,
            gradcheck_step: 1e-3,
            gradcheck_tolerance: 1e-3,
            gradcheck_norm: Mode::Train,
            wilcoxon_a: "a.csv".into(),
            wilcoxon_b: "b.csv".into(),
            wilcoxon_exact_cutoff: crate::eval::DEFAULT_EXACT_CUTOFF,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::parse(key, format!("cannot parse {value:?}")))
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Train => "train",
        Mode::Eval => "eval",
    }
}

impl RunConfig {
    /// Built-in starting points.
    ///
    /// * `default`: the published hyper-parameters (64-channel layers,
    ///   learning rates 1e-5 / 1e-4 / 1e-3) on the synthetic task.
    /// * `synthetic`: the synthetic acceptance configuration, with narrower
    ///   layers and larger learning rates so that training from scratch
    ///   finishes quickly on one CPU core.
    /// * `micro`: defaults; only the `gradcheck.*` keys matter for it.
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = RunConfig {
            preset: name.to_string(),
            ..Default::default()
        };
        match name {
            "default" | "micro" => {}
            "synthetic" => {
                c.model.channels = 16;
                c.train.lr_embedding = 1e-4;
                c.train.lr_fc = 1e-3;
                c.train.lr_rm = 1e-3;
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {name:?} (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(c)
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "preset" => self.preset = v.to_string(),
            "seed" => self.seed = parse(key, v)?,
            "data.path" => self.data_path = v.to_string(),
            "data.classes" => self.synthetic.classes = parse(key, v)?,
            "data.per_class" => self.synthetic.per_class = parse(key, v)?,
            "data.channels" => self.synthetic.channels = parse(key, v)?,
            "data.height" => self.synthetic.height = parse(key, v)?,
            "data.width" => self.synthetic.width = parse(key, v)?,
            "data.sigma" => self.synthetic.sigma = parse(key, v)?,
            "data.seed" => self.data_seed = parse(key, v)?,
            "data.train_fraction" => self.train_fraction = parse(key, v)?,
            "data.reduce_per_class" => self.reduce_per_class = parse(key, v)?,
            "model.channels" => self.model.channels = parse(key, v)?,
            "model.embed_blocks" => self.model.embed_blocks = parse(key, v)?,
            "model.rm_hidden" => self.model.rm_hidden = parse(key, v)?,
            "model.fc_hidden" => self.model.fc_hidden = parse(key, v)?,
            "model.bn_eps" => self.model.bn_eps = parse(key, v)?,
            "model.bn_momentum" => self.model.bn_momentum = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.a" => self.train.a = parse(key, v)?,
            "train.b" => self.train.b = parse(key, v)?,
            "train.lr_embedding" => self.train.lr_embedding = parse(key, v)?,
            "train.lr_fc" => self.train.lr_fc = parse(key, v)?,
            "train.lr_rm" => self.train.lr_rm = parse(key, v)?,
            "train.rho" => self.train.rho = parse(key, v)?,
            "train.eps" => self.train.eps = parse(key, v)?,
            "train.mode" => {
                self.train.mode = v.parse().map_err(|e: Error| Error::parse(key, e.to_string()))?
            }
            "train.eval_chunk" => self.train.eval_chunk = parse(key, v)?,
            "output.dir" => self.output_dir = v.into(),
            "run.jobs" => self.jobs = parse(key, v)?,
            "gen.out" => self.gen_out = v.into(),
            "eval.checkpoint" => self.checkpoint = v.into(),
            "export.out" => self.export_out = v.into(),
            "ablate.rounds" => self.ablate_rounds = parse(key, v)?,
            "stability.proto_sets" => self.stability_proto_sets = parse(key, v)?,
            "stability.rounds" => self.stability_rounds = parse(key, v)?,
            "gradcheck.channels" => self.gradcheck_channels = parse(key, v)?,
            "gradcheck.step" => self.gradcheck_step = parse(key, v)?,
            "gradcheck.tolerance" => self.gradcheck_tolerance = parse(key, v)?,
            "gradcheck.norm" => {
                self.gradcheck_norm = match v {
                    "train" => Mode::Train,
                    "eval" => Mode::Eval,
                    _ => return Err(Error::parse(key, format!("expected train or eval, got {v:?}"))),
                }
            }
            "wilcoxon.a" => self.wilcoxon_a = v.into(),
            "wilcoxon.b" => self.wilcoxon_b = v.into(),
            "wilcoxon.exact_cutoff" => self.wilcoxon_exact_cutoff = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = |p: &Path| p.display().to_string();
        vec![
            ("preset", self.preset.clone()),
            ("seed", self.seed.to_string()),
            ("data.path", self.data_path.clone()),
            ("data.classes", self.synthetic.classes.to_string()),
            ("data.per_class", self.synthetic.per_class.to_string()),
            ("data.channels", self.synthetic.channels.to_string()),
            ("data.height", self.synthetic.height.to_string()),
            ("data.width", self.synthetic.width.to_string()),
            ("data.sigma", self.synthetic.sigma.to_string()),
            ("data.seed", self.data_seed.to_string()),
            ("data.train_fraction", self.train_fraction.to_string()),
            ("data.reduce_per_class", self.reduce_per_class.to_string()),
            ("model.channels", self.model.channels.to_string()),
            ("model.embed_blocks", self.model.embed_blocks.to_string()),
            ("model.rm_hidden", self.model.rm_hidden.to_string()),
            ("model.fc_hidden", self.model.fc_hidden.to_string()),
            ("model.bn_eps", self.model.bn_eps.to_string()),
            ("model.bn_momentum", self.model.bn_momentum.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.a", self.train.a.to_string()),
            ("train.b", self.train.b.to_string()),
            ("train.lr_embedding", self.train.lr_embedding.to_string()),
            ("train.lr_fc", self.train.lr_fc.to_string()),
            ("train.lr_rm", self.train.lr_rm.to_string()),
            ("train.rho", self.train.rho.to_string()),
            ("train.eps", self.train.eps.to_string()),
            ("train.mode", self.train.mode.to_string()),
            ("train.eval_chunk", self.train.eval_chunk.to_string()),
            ("output.dir", p(&self.output_dir)),
            ("run.jobs", self.jobs.to_string()),
            ("gen.out", p(&self.gen_out)),
            ("eval.checkpoint", p(&self.checkpoint)),
            ("export.out", p(&self.export_out)),
            ("ablate.rounds", self.ablate_rounds.to_string()),
            ("stability.proto_sets", self.stability_proto_sets.to_string()),
            ("stability.rounds", self.stability_rounds.to_string()),
            ("gradcheck.channels", self.gradcheck_channels.to_string()),
            ("gradcheck.step", self.gradcheck_step.to_string()),
            ("gradcheck.tolerance", self.gradcheck_tolerance.to_string()),
            ("gradcheck.norm", mode_name(self.gradcheck_norm).to_string()),
            ("wilcoxon.a", p(&self.wilcoxon_a)),
            ("wilcoxon.b", p(&self.wilcoxon_b)),
            ("wilcoxon.exact_cutoff", self.wilcoxon_exact_cutoff.to_string()),
        ]
    }

    /// Keys that only say where inputs and outputs live, not what is
    /// computed.
    pub const LOCATION_KEYS: [&'static str; 7] = [
        "output.dir",
        "run.jobs",
        "gen.out",
        "eval.checkpoint",
        "export.out",
        "wilcoxon.a",
        "wilcoxon.b",
    ];

    /// [`Self::to_text`] without [`Self::LOCATION_KEYS`]: two runs that
    /// compute the same thing have the same run text.
    pub fn to_run_text(&self) -> String {
        self.entries()
            .into_iter()
            .filter(|(k, _)| !Self::LOCATION_KEYS.contains(k))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Apply every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_lines(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Parse a complete configuration: the preset named in `text` (or
    /// `default`) overlaid with the remaining keys.
    pub fn from_text(text: &str) -> Result<Self> {
        let lines = parse_lines(text)?;
        let preset = lines
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map_or("default", |(_, v)| v.as_str());
        let mut c = RunConfig::preset(preset)?;
        for (k, v) in &lines {
            c.set(k, v)?;
        }
        Ok(c)
    }

    /// Generate or load the dataset described by the `data.*` keys.
    pub fn load_dataset(&self) -> Result<Dataset> {
        if self.data_path.is_empty() {
            return generate_synthetic(&self.synthetic, self.data_seed);
        }
        let path = Path::new(&self.data_path);
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            load_manifest(path)
        } else {
            Dataset::load(path)
        }
    }

    /// The experiment described by this configuration, with its dataset loaded.
    pub fn experiment(&self) -> Result<Experiment> {
        let exp = Experiment {
            dataset: self.load_dataset()?,
            train_fraction: self.train_fraction,
            reduce_per_class: self.reduce_per_class,
            model: self.model.clone(),
            train: TrainConfig {
                seed: self.seed,
                ..self.train.clone()
            },
        };
        exp.model_config().validate()?;
        exp.train.validate()?;
        Ok(exp)
    }

    /// Training configuration for a single run in `mode`.
    pub fn train_config(&self, mode: TrainMode) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            mode,
            ..self.train.clone()
        }
    }
}

/// `key = value` pairs of a configuration text, in order.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("config line {}", i + 1), format!("expected `key = value`, got {raw:?}")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::parse(format!("config line {}", i + 1), "empty key"));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}
