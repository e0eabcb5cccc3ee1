//! Trains a positive model on a small world until it reproduces its training
//! answers, then saves the checkpoint.
//!
//!     cargo run --release --example train_positive [-- OUT_DIR]

use dhi_lab::corpus::{build_vocab, render_training_set, Templates, World, WorldParams};
use dhi_lab::decode::ModelPair;
use dhi_lab::eval::memorization_rate;
use dhi_lab::nn::{init_params, ModelConfig};
use dhi_lab::training::{save_trained, train_with_progress, TrainConfig};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1);
    let world = World::generate(&WorldParams {
        seed: 1,
        n_entities: 10,
        n_attributes: 2,
        values_per_attribute: 6,
    })?;
    let templates = Templates::builtin(&world, 2)?;
    let vocab = build_vocab(&world, &templates);
    let data = render_training_set(&world, &templates, &vocab)?;
    let init = init_params(&ModelConfig {
        vocab_size: vocab.len(),
        d_model: 32,
        n_heads: 2,
        n_layers: 2,
        d_ff: 64,
        max_seq_len: 32,
        init_seed: 1,
    })?;
    let cfg = TrainConfig::positive(60, 1);
    let outcome = train_with_progress(init, &data, &cfg, |epoch, loss| {
        if (epoch + 1) % 10 == 0 {
            println!("epoch {:>3}  loss {loss:.5}", epoch + 1);
        }
    })?;
    let rate = memorization_rate(ModelPair::greedy(&outcome.params), &data, 32)?;
    println!("memorized {:.1}% of the training questions", 100.0 * rate);
    if let Some(dir) = out {
        save_trained(std::path::Path::new(&dir), &cfg, &outcome)?;
        println!("saved to {dir}");
    }
    Ok(())
}
