//! Decodes the same questions greedily and with selective contrast against
//! an induced evil model, printing where contrast changed the choice.

use dhi_lab::decode::{
    contrast_step, decode_traced, qa_prompt, valid_set, DecodeConfig, ModelPair, Strategy,
    ThresholdMode,
};
use dhi_lab::eval::ablation::{ExperimentConfig, SeedRun};
use dhi_lab::training::MaskPolicy;

fn main() -> anyhow::Result<()> {
    // one step by hand: the evil model's favourite loses its lead
    let pos = [2.0, 1.9, 0.0];
    let evil = [3.0, 0.5, 0.0];
    let valid = valid_set(&pos, 0.2, ThresholdMode::Probability);
    let step = contrast_step(&pos, &evil, 1.0, &valid)?;
    println!(
        "valid {valid:?}  probs {:.4?}  argmax {}",
        step.probs,
        step.argmax()
    );

    let mut config = ExperimentConfig::default();
    config.world.n_entities = 12;
    config.world.n_attributes = 2;
    let mut run = SeedRun::prepare(&config, 1)?;
    let w = config.reading.weight(config.alpha);
    let evil = run.evil(w, MaskPolicy::Adapted)?.clone();
    let pair = ModelPair::new(&run.positive, Some(&evil))?;
    let greedy = DecodeConfig::greedy();
    let dhi = config.decode.with_strategy(Strategy::Dhi);

    let mut shown = 0;
    for ex in run.train_set.iter().step_by(3) {
        let prompt = qa_prompt(&ex.question);
        let (g, _) = decode_traced(&pair, &prompt, &greedy)?;
        let (d, trace) = decode_traced(&pair, &prompt, &dhi)?;
        if g == d {
            continue;
        }
        println!("\nQ:      {}", run.vocab.decode_text(&ex.question)?);
        println!("greedy: {}", run.vocab.decode_text(&g)?);
        println!("dhi:    {}", run.vocab.decode_text(&d)?);
        for s in trace.iter().filter(|s| s.flipped) {
            println!(
                "  step {}: {} -> {} ({} valid tokens)",
                s.step,
                run.vocab.word(s.pos_argmax)?,
                run.vocab.word(s.chosen)?,
                s.valid_size
            );
        }
        shown += 1;
        if shown == 3 {
            break;
        }
    }
    if shown == 0 {
        println!("\ncontrast left every sampled answer unchanged");
    }
    Ok(())
}
