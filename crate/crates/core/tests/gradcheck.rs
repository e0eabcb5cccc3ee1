mod common;

use common::{finite_difference_grads, max_rel_error, random_case};
use dhi_lab::nn::backward;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 100..106 {
        let c = random_case(seed);
        let (_, g) = backward(&c.params, &c.tokens, &c.mask, &c.targets, &c.weights).unwrap();
        let fd = finite_difference_grads(&c.params, &c.tokens, &c.mask, &c.targets, &c.weights);
        let err = max_rel_error(&g, &fd, 1e-4);
        assert!(err <= 1e-6, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn unit_weights_and_plain_nll_share_gradients() {
    let c = random_case(7);
    let ones = vec![1.0; c.tokens.len()];
    let (l1, g1) = backward(&c.params, &c.tokens, &c.mask, &c.targets, &ones).unwrap();
    let logits = dhi_lab::nn::forward(&c.params, &c.tokens, &c.mask).unwrap();
    assert_eq!(l1, dhi_lab::nn::mean_nll(&logits, &c.targets).unwrap());
    assert!(g1.0.is_finite());
}
