//! Train the two-branch network jointly on the synthetic task and report
//! per-epoch losses and accuracies, then save a checkpoint.
//!
//! Uses the `synthetic` preset with fewer epochs so it finishes in well
//! under a minute.

use remarnet::config::RunConfig;
use remarnet::experiment::RunSeeds;
use remarnet::train::{Checkpoint, TrainMode, METRICS_HEADER};

fn main() -> remarnet::Result<()> {
    let mut cfg = RunConfig::preset("synthetic")?;
    cfg.set("train.epochs", "10")?;
    let exp = cfg.experiment()?;

    println!("{METRICS_HEADER}");
    let run = exp.run(&RunSeeds::derive(cfg.seed), TrainMode::Joint, |r| println!("{}", r.csv_row()))?;

    let path = std::env::temp_dir().join("remarnet-example-checkpoint.tns");
    run.checkpoint(cfg.to_run_text()).save(&path)?;
    let restored = Checkpoint::load(&path)?;
    println!(
        "checkpoint with {} parameters saved to {}",
        restored.net.params().num_scalars(),
        path.display()
    );
    Ok(())
}
