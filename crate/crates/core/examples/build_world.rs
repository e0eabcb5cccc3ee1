//! Generates a small world and shows the training examples, MC items and
//! probes rendered from it.

use dhi_lab::corpus::{
    build_vocab, render_mc_set, render_probes, render_training_set, Templates, World, WorldParams,
};

fn main() -> anyhow::Result<()> {
    let world = World::generate(&WorldParams {
        seed: 7,
        n_entities: 8,
        n_attributes: 2,
        values_per_attribute: 5,
    })?;
    let templates = Templates::builtin(&world, 2)?;
    let vocab = build_vocab(&world, &templates);
    println!(
        "{} entities, {} facts, vocabulary {}",
        world.entities.len(),
        world.facts().len(),
        vocab.len()
    );
    for f in world.facts().iter().take(4) {
        println!("  {} / {} = {}", f.entity, f.attribute, f.value);
    }

    let train = render_training_set(&world, &templates, &vocab)?;
    println!("\n{} training examples, e.g.", train.len());
    for ex in train.iter().take(3) {
        println!(
            "  Q: {:<32} A: {:<36} span: {}",
            vocab.decode_text(&ex.question)?,
            vocab.decode_text(&ex.answer)?,
            vocab.decode_text(ex.span_tokens())?
        );
    }

    let mc = render_mc_set(&world, &templates, &vocab, 7, 2, 3)?;
    let item = &mc[0];
    println!("\nMC item: {}", vocab.decode_text(&item.question)?);
    println!("  best:  {}", vocab.decode_text(&item.best)?);
    for t in &item.true_answers {
        println!("  true:  {}", vocab.decode_text(t)?);
    }
    for f in &item.false_answers {
        println!("  false: {}", vocab.decode_text(f)?);
    }

    let probes = render_probes(&world, &vocab)?;
    println!(
        "\nprobe: {} ({} facts)",
        vocab.decode_text(&probes[0].prompt)?,
        probes[0].facts.len()
    );
    Ok(())
}
