//! Train briefly, then write the flattened embedding of every image to CSV
//! for inspection in an external plotting tool.

use remarnet::config::RunConfig;
use remarnet::eval::export_embeddings;
use remarnet::experiment::RunSeeds;
use remarnet::train::TrainMode;

fn main() -> remarnet::Result<()> {
    let mut cfg = RunConfig::preset("synthetic")?;
    for (k, v) in [("data.per_class", "20"), ("train.epochs", "3")] {
        cfg.set(k, v)?;
    }
    let exp = cfg.experiment()?;
    let run = exp.run(&RunSeeds::derive(1), TrainMode::Joint, |_| {})?;

    let path = std::env::temp_dir().join("remarnet-embeddings.csv");
    export_embeddings(&run.net, &exp.dataset, &path, 64)?;
    let text = std::fs::read_to_string(&path)?;
    let width = text.lines().next().map_or(0, |h| h.split(',').count() - 1);
    println!("{} embeddings of width {width} written to {}", text.lines().count() - 1, path.display());
    Ok(())
}
