//! Multiple-choice truthfulness of greedy, plain contrast and DHI decoding
//! for one seed of the default experiment.

use dhi_lab::decode::Strategy;
use dhi_lab::eval::ablation::{ExperimentConfig, SeedRun};
use dhi_lab::eval::report::mc_markdown;
use dhi_lab::training::MaskPolicy;

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(1), |s| s.parse())?;
    let config = ExperimentConfig::default();
    let mut run = SeedRun::prepare(&config, seed)?;
    println!(
        "seed {seed}: {} MC items, memorization {:.3}\n",
        run.mc_items.len(),
        run.memorization()?
    );

    let evil = run
        .evil(config.reading.weight(config.alpha), MaskPolicy::Adapted)?
        .clone();
    for (strategy, evil) in [
        (Strategy::Greedy, None),
        (Strategy::Cd, Some(&evil)),
        (Strategy::Dhi, Some(&evil)),
    ] {
        let report = run.evaluate(evil, strategy)?;
        print!("{}", mc_markdown(&strategy.to_string(), &report));
        println!();
    }
    Ok(())
}
