//! Shows how the adapted mask hides the factual span of an answer from later
//! positions, and checks that swapping a hidden token leaves the later
//! logits untouched.

use dhi_lab::corpus::TrainingExample;
use dhi_lab::nn::{forward, init_params, ModelConfig};
use dhi_lab::training::{layout_example, mask_for, MaskPolicy};

fn main() -> anyhow::Result<()> {
    // q = [10, 11], a = [12, 13, 14, 15] with the fact at answer index 1..3
    let ex = TrainingExample {
        question: vec![10, 11],
        answer: vec![12, 13, 14, 15],
        span: (1, 2),
    };
    let layout = layout_example(&ex, 16)?;
    println!("sequence        {:?}", layout.sequence);
    println!("factual inputs  {:?}", layout.factual_inputs);
    println!("factual slots   {:?}", layout.factual_slots);

    let standard = mask_for(&layout, MaskPolicy::Standard)?;
    let adapted = mask_for(&layout, MaskPolicy::Adapted)?;
    println!("\nrow  standard                   adapted");
    for i in 0..adapted.len() {
        println!(
            "{i:>3}  {:<27}{:?}",
            format!("{:?}", standard.row(i)),
            adapted.row(i)
        );
    }

    let params = init_params(&ModelConfig {
        vocab_size: 20,
        d_model: 16,
        n_heads: 2,
        n_layers: 2,
        d_ff: 32,
        max_seq_len: 16,
        init_seed: 3,
    })?;
    let input = layout.input().to_vec();
    let p = layout.factual_inputs[0];
    let mut swapped = input.clone();
    swapped[p] = 19;
    for (name, mask) in [("standard", &standard), ("adapted", &adapted)] {
        let a = forward(&params, &input, mask)?;
        let b = forward(&params, &swapped, mask)?;
        let later = (p + 1..input.len())
            .flat_map(|t| a.row(t).iter().zip(b.row(t)).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        println!("{name:>8}: swapping position {p} moves later logits by at most {later:.3e}");
    }
    Ok(())
}
