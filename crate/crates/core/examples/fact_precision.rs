//! Open-ended generation: prompts the model and checks the facts it states
//! against the world.
//!
//! The models only ever see per-attribute questions, so "tell me about X"
//! probes are out of distribution and rarely produce a parseable sentence.
//! The same metric on the questions themselves shows precision where the
//! model does answer.

use std::collections::BTreeSet;

use dhi_lab::corpus::{render_probes, ProbeItem};
use dhi_lab::decode::{ModelPair, Strategy};
use dhi_lab::eval::ablation::{ExperimentConfig, SeedRun};
use dhi_lab::eval::fact_precision;
use dhi_lab::eval::report::facts_markdown;
use dhi_lab::training::MaskPolicy;

fn main() -> anyhow::Result<()> {
    let config = ExperimentConfig::default();
    let mut run = SeedRun::prepare(&config, 2)?;
    let evil = run
        .evil(config.reading.weight(config.alpha), MaskPolicy::Adapted)?
        .clone();
    let pair = ModelPair::new(&run.positive, Some(&evil))?;

    let entity_probes = render_probes(&run.world, &run.vocab)?;
    let questions: BTreeSet<&Vec<usize>> = run.train_set.iter().map(|ex| &ex.question).collect();
    let question_probes: Vec<ProbeItem> = questions
        .into_iter()
        .map(|q| ProbeItem {
            prompt: q.clone(),
            facts: Vec::new(),
        })
        .collect();

    for (name, probes) in [
        ("entity probes", &entity_probes),
        ("question probes", &question_probes),
    ] {
        for strategy in [Strategy::Greedy, Strategy::Dhi] {
            let cfg = config.decode.with_strategy(strategy);
            let (report, texts) =
                fact_precision(pair, probes, &run.world, &run.templates, &run.vocab, &cfg)?;
            print!(
                "{}",
                facts_markdown(&format!("{name}, {strategy}"), &report)
            );
            println!("e.g. \"{}\"\n", texts[0]);
        }
    }
    Ok(())
}
