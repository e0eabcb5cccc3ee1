//! A small component and induction-strength ablation on one seed, printed as
//! Markdown. The full three-seed run is `dhi ablate --mode all`.

use dhi_lab::eval::ablation::{run_ablation, AblationMode, ExperimentConfig, DEFAULT_ALPHA_GRID};
use dhi_lab::eval::report::ablation_markdown;
use dhi_lab::training::AlphaReading;

fn main() -> anyhow::Result<()> {
    let mut config = ExperimentConfig::default();
    config.world.n_entities = 16;
    let report = run_ablation(
        &config,
        AblationMode::All,
        &[1],
        &DEFAULT_ALPHA_GRID,
        &[AlphaReading::Reverse],
        |msg| eprintln!("{msg}"),
    )?;
    print!("{}", ablation_markdown(&report));
    Ok(())
}
