//! Compare the ablation modes: single-branch training against joint
//! training, and each prediction rule of the jointly trained network.
//!
//! A smaller dataset, fewer epochs and three rounds keep this under a
//! minute. Use the `ablate` subcommand for the full protocol.

use remarnet::config::RunConfig;
use remarnet::eval::run_ablation;

fn main() -> remarnet::Result<()> {
    let mut cfg = RunConfig::preset("synthetic")?;
    for (k, v) in [("data.per_class", "40"), ("train.epochs", "10")] {
        cfg.set(k, v)?;
    }
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let report = run_ablation(&cfg.experiment()?, 3, jobs)?;

    for (mode, prediction, mean, std) in report.summary() {
        println!("{:<10} {:<9} {mean:.3} ± {std:.3}", mode.name(), prediction.name());
    }
    println!("agreement violations: {}", report.agreement_violations);
    Ok(())
}
