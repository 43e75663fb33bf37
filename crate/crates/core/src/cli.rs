//! The `remarnet` command line.
//!
//! ```text
//! remarnet <subcommand> [--config FILE] [--print-config] [--KEY VALUE]...
//! ```
//!
//! Settings resolve in order: preset, config file, flags. Any config key can
//! be given as a flag (`--train.lr_rm 0.01`, dashes and underscores are
//! interchangeable), and the common ones have short aliases (`--seed`,
//! `--epochs`, `--rounds`, `--out`, ...).

use std::io::Write;
use std::path::Path;

use crate::config::RunConfig;
use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::eval::{export_embeddings, prototype_stability, run_ablation, wilcoxon_signed_rank};
use crate::experiment::RunSeeds;
use crate::gradcheck::{GradCheckOptions, MicroInstance};
use crate::train::{evaluate, write_metrics_csv, Checkpoint};

pub const SUBCOMMANDS: [&str; 8] = [
    "gen-data",
    "train",
    "eval",
    "ablate",
    "stability",
    "gradcheck",
    "wilcoxon",
    "export-emb",
];

const USAGE: &str = "usage: remarnet <gen-data|train|eval|ablate|stability|gradcheck|wilcoxon|export-emb> \
[--config FILE] [--print-config] [--KEY VALUE]...";

/// A parsed command line.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub subcommand: String,
    pub config_file: Option<String>,
    pub print_config: bool,
    /// `(key, value)` overrides, already mapped to config keys.
    pub overrides: Vec<(String, String)>,
}

/// Map a flag name (without the leading dashes) to its config key.
fn flag_key(subcommand: &str, flag: &str) -> String {
    let alias = match (subcommand, flag) {
        ("wilcoxon", "a") => "wilcoxon.a",
        ("wilcoxon", "b") => "wilcoxon.b",
        ("wilcoxon", "exact-cutoff") => "wilcoxon.exact_cutoff",
        ("gen-data", "out") => "gen.out",
        ("export-emb", "out") => "export.out",
        ("stability", "rounds") => "stability.rounds",
        ("gradcheck", "tolerance") => "gradcheck.tolerance",
        ("gradcheck", "channels") => "gradcheck.channels",
        (_, "out") => "output.dir",
        (_, "rounds") => "ablate.rounds",
        (_, "proto-sets") => "stability.proto_sets",
        (_, "jobs") => "run.jobs",
        (_, "data") => "data.path",
        (_, "checkpoint") => "eval.checkpoint",
        (_, "epochs") => "train.epochs",
        (_, "batch-size") => "train.batch_size",
        (_, "mode") => "train.mode",
        (_, "a") => "train.a",
        (_, "b") => "train.b",
        (_, "lr-embedding") => "train.lr_embedding",
        (_, "lr-fc") => "train.lr_fc",
        (_, "lr-rm") => "train.lr_rm",
        (_, "sigma") => "data.sigma",
        _ => "",
    };
    if alias.is_empty() {
        flag.replace('-', "_")
    } else {
        alias.to_string()
    }
}

/// Split `args` (without the program name) into a [`RunSpec`].
pub fn parse_args<S: AsRef<str>>(args: &[S]) -> Result<RunSpec> {
    let mut it = args.iter().map(AsRef::as_ref);
    let subcommand = match it.next() {
        None | Some("-h" | "--help" | "help") => return Err(Error::Usage(USAGE.into())),
        Some(s) if SUBCOMMANDS.contains(&s) => s.to_string(),
        Some(s) => return Err(Error::Usage(format!("unknown subcommand {s:?}\n{USAGE}"))),
    };
    let mut spec = RunSpec {
        subcommand,
        config_file: None,
        print_config: false,
        overrides: Vec::new(),
    };
    while let Some(arg) = it.next() {
        let flag = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::Usage(format!("unexpected argument {arg:?}\n{USAGE}")))?;
        if flag == "print-config" {
            spec.print_config = true;
            continue;
        }
        let (name, value) = match flag.split_once('=') {
            Some((n, v)) => (n, v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Usage(format!("flag --{flag} needs a value")))?;
                (flag, v.to_string())
            }
        };
        if name == "config" {
            spec.config_file = Some(value);
        } else {
            spec.overrides.push((flag_key(&spec.subcommand, name), value));
        }
    }
    Ok(spec)
}

/// Preset, then config file, then flags.
pub fn resolve_config(spec: &RunSpec) -> Result<RunConfig> {
    let file_text = match &spec.config_file {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {path}: {e}")))?,
        None => String::new(),
    };
    let file_lines = crate::config::parse_lines(&file_text)?;
    let preset = spec
        .overrides
        .iter()
        .rev()
        .chain(file_lines.iter().rev())
        .find(|(k, _)| k == "preset")
        .map_or("default", |(_, v)| v.as_str());
    let mut cfg = RunConfig::preset(preset)?;
    for (k, v) in file_lines.iter().chain(&spec.overrides) {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Numbers from a text file: comma- or whitespace-separated; a first line
/// that does not parse is taken as a header.
pub fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let field = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> = tokens.iter().map(|t| t.parse::<f64>()).collect();
        match parsed {
            Ok(v) => out.extend(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::parse(field, format!("line {} is not numeric", i + 1))),
        }
    }
    Ok(out)
}

/// Run one subcommand, writing human-readable results to `out`.
pub fn execute(spec: &RunSpec, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(spec)?;
    if spec.print_config {
        out.write_all(cfg.to_text().as_bytes())?;
        return Ok(());
    }
    match spec.subcommand.as_str() {
        "gen-data" => {
            let ds = crate::data::generate_synthetic(&cfg.synthetic, cfg.data_seed)?;
            if let Some(dir) = cfg.gen_out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            ds.save(&cfg.gen_out)?;
            let SyntheticSpec { classes, channels, height, width, .. } = cfg.synthetic;
            writeln!(
                out,
                "wrote {} images ({classes} classes, {channels}x{height}x{width}) to {}",
                ds.len(),
                cfg.gen_out.display()
            )?;
        }
        "train" => {
            let exp = cfg.experiment()?;
            let outcome = exp.run(&RunSeeds::derive(cfg.seed), cfg.train.mode, |r| {
                eprintln!("{}", r.csv_row());
            })?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            write_metrics_csv(&cfg.output_dir.join("metrics.csv"), &outcome.metrics)?;
            outcome
                .checkpoint(cfg.to_run_text())
                .save(&cfg.output_dir.join("checkpoint.tns"))?;
            if let Some(last) = outcome.metrics.last() {
                writeln!(
                    out,
                    "epoch {} test accuracy: rm={} fc={} ensemble={:.4}",
                    last.epoch,
                    fmt_opt(last.test_acc_rm),
                    fmt_opt(last.test_acc_fc),
                    last.test_acc_ens
                )?;
            }
            writeln!(out, "wrote {}", cfg.output_dir.display())?;
        }
        "eval" => {
            let ck = Checkpoint::load(&cfg.checkpoint)?;
            let run = RunConfig::from_text(&ck.run_config)?;
            let prepared = run.experiment()?.prepare(&RunSeeds::derive(run.seed))?;
            let acc = evaluate(&ck.net, &prepared.test, &ck.prototypes, cfg.train.eval_chunk)?;
            writeln!(
                out,
                "test samples={} rm={} fc={} ensemble={:.4}",
                prepared.test.len(),
                fmt_opt(acc.rm),
                fmt_opt(acc.fc),
                acc.ensemble
            )?;
        }
        "ablate" => {
            let exp = cfg.experiment()?;
            let report = run_ablation(&exp, cfg.ablate_rounds, cfg.jobs)?;
            write_file(&cfg.output_dir.join("ablation_rounds.csv"), &report.rounds_csv())?;
            write_file(&cfg.output_dir.join("ablation_summary.csv"), &report.summary_csv())?;
            out.write_all(report.summary_csv().as_bytes())?;
            writeln!(out, "agreement violations: {}", report.agreement_violations)?;
        }
        "stability" => {
            let exp = cfg.experiment()?;
            let report = prototype_stability(&exp, cfg.stability_proto_sets, cfg.stability_rounds, cfg.jobs)?;
            write_file(&cfg.output_dir.join("stability_rounds.csv"), &report.rounds_csv())?;
            write_file(&cfg.output_dir.join("stability_summary.csv"), &report.summary_csv())?;
            out.write_all(report.summary_csv().as_bytes())?;
            writeln!(out, "spread={}", report.spread())?;
        }
        "gradcheck" => {
            let inst = MicroInstance::new(cfg.seed, cfg.gradcheck_channels, cfg.gradcheck_norm)?;
            let opts = GradCheckOptions {
                step: cfg.gradcheck_step,
                tolerance: cfg.gradcheck_tolerance,
                seed: cfg.seed,
                ..Default::default()
            };
            let report = inst.check(&opts)?;
            for (group, err) in &report.per_group {
                writeln!(out, "{group}: max relative error {err:.3e}")?;
            }
            writeln!(
                out,
                "checked={} refined={} unresolved={} max relative error={:.3e} tolerance={:e}",
                report.checked,
                report.refined,
                report.unresolved,
                report.max_rel_error(),
                report.tolerance
            )?;
            if !report.passed() {
                let w = report.worst.as_ref().expect("a failure has a worst coordinate");
                return Err(Error::Numeric(format!(
                    "gradient check failed at {}[{}]: analytic {} vs numeric {}",
                    w.param, w.index, w.analytic, w.numeric
                )));
            }
        }
        "wilcoxon" => {
            let a = read_numbers(&cfg.wilcoxon_a)?;
            let b = read_numbers(&cfg.wilcoxon_b)?;
            let r = wilcoxon_signed_rank(&a, &b, cfg.wilcoxon_exact_cutoff)?;
            writeln!(out, "{r}")?;
        }
        "export-emb" => {
            let ck = Checkpoint::load(&cfg.checkpoint)?;
            let run = RunConfig::from_text(&ck.run_config)?;
            let ds = run.load_dataset()?;
            if let Some(dir) = cfg.export_out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            export_embeddings(&ck.net, &ds, &cfg.export_out, cfg.train.eval_chunk)?;
            writeln!(out, "wrote {} embeddings to {}", ds.len(), cfg.export_out.display())?;
        }
        other => return Err(Error::Usage(format!("unknown subcommand {other:?}"))),
    }
    Ok(())
}

/// Entry point: parse, run, and map errors to exit codes
/// (0 ok, 1 usage, 2 data/config, 3 numeric).
pub fn main_with_args<S: AsRef<str>>(args: &[S]) -> i32 {
    let mut stdout = std::io::stdout().lock();
    match parse_args(args).and_then(|spec| execute(&spec, &mut stdout)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("remarnet: {e}");
            e.exit_code()
        }
    }
}
