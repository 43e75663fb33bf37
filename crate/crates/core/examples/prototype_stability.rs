//! How much does the choice of class prototypes matter? Train with several
//! fixed prototype sets and compare their mean accuracies.

use remarnet::config::RunConfig;
use remarnet::eval::prototype_stability;

fn main() -> remarnet::Result<()> {
    let mut cfg = RunConfig::preset("synthetic")?;
    for (k, v) in [("data.per_class", "40"), ("train.epochs", "10")] {
        cfg.set(k, v)?;
    }
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let report = prototype_stability(&cfg.experiment()?, 4, 2, jobs)?;

    for (set, ((mean, std), seed)) in report.means().into_iter().zip(&report.proto_seeds).enumerate() {
        println!("set {set} (seed {seed:#018x}): {mean:.3} ± {std:.3}");
    }
    println!("spread between sets: {:.3}", report.spread());
    Ok(())
}
