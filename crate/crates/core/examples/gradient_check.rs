//! Compares the analytic backward pass with central finite differences on a
//! tiny model, using a non-causal mask and signed per-token weights.

use dhi_lab::nn::{backward, forward, init_params, weighted_nll, AttentionMask, ModelConfig};

fn main() -> anyhow::Result<()> {
    let config = ModelConfig {
        vocab_size: 9,
        d_model: 8,
        n_heads: 2,
        n_layers: 2,
        d_ff: 16,
        max_seq_len: 8,
        init_seed: 11,
    };
    let params = init_params(&config)?;
    let tokens = [1, 5, 7, 2, 8];
    let targets = [5, 7, 2, 8, 3];
    let weights = [0.0, 1.0, -0.05, -0.05, 1.0];
    // position 2 is hidden from everything after it
    let mask = AttentionMask::from_fn(tokens.len(), |i, j| j <= i && !(j == 2 && i > 2))?;

    let (loss, grads) = backward(&params, &tokens, &mask, &targets, &weights)?;
    println!("loss {loss:.10}");

    let h = 1e-5;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (ti, g) in grads.tensors().iter().enumerate() {
        for k in 0..g.len() {
            let orig = params.tensors()[ti].data()[k];
            let mut eval = |x: f64| -> anyhow::Result<f64> {
                probe.tensors_mut()[ti].data_mut()[k] = x;
                Ok(weighted_nll(
                    &forward(&probe, &tokens, &mask)?,
                    &targets,
                    &weights,
                )?)
            };
            let numeric = (eval(orig + h)? - eval(orig - h)?) / (2.0 * h);
            probe.tensors_mut()[ti].data_mut()[k] = orig;
            let analytic = g.data()[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    println!(
        "parameters checked: {}",
        grads.tensors().iter().map(|t| t.len()).sum::<usize>()
    );
    println!("max relative error: {worst:.3e}");
    Ok(())
}
