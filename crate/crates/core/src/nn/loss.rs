//! Per-token weighted cross-entropy.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Numerically stable `log softmax(row)`.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

/// Max-subtracted softmax.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check(logits: &Tensor, targets: &[usize], weights: &[f64]) -> Result<(usize, usize)> {
    let shape = logits.shape();
    if shape.len() != 2 {
        return Err(Error::Shape(format!("logits must be 2-D, got {shape:?}")));
    }
    let (t, v) = (shape[0], shape[1]);
    if targets.len() != t || weights.len() != t {
        return Err(Error::Length(format!(
            "logits have {t} rows, targets {} and weights {}",
            targets.len(),
            weights.len()
        )));
    }
    if let Some(&id) = targets.iter().find(|&&id| id >= v) {
        return Err(Error::TokenOutOfRange { id, vocab: v });
    }
    Ok((t, v))
}

fn nll_at(row: &[f64], target: usize) -> f64 {
    -log_softmax(row)[target]
}

/// `(1/T) Σ_t weights[t] · (−log softmax(logits[t])[targets[t]])`.
pub fn weighted_nll(logits: &Tensor, targets: &[usize], weights: &[f64]) -> Result<f64> {
    let (t, _) = check(logits, targets, weights)?;
    let sum: f64 = (0..t)
        .map(|i| weights[i] * nll_at(logits.row(i), targets[i]))
        .sum();
    Ok(sum / t as f64)
}

/// Unweighted mean negative log-likelihood.
pub fn mean_nll(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let t = logits.shape()[0];
    check(logits, targets, &vec![1.0; t])?;
    let sum: f64 = (0..t).map(|i| nll_at(logits.row(i), targets[i])).sum();
    Ok(sum / t as f64)
}

/// Loss together with `∂loss/∂logits`.
pub fn weighted_nll_with_grad(
    logits: &Tensor,
    targets: &[usize],
    weights: &[f64],
) -> Result<(f64, Tensor)> {
    let (t, v) = check(logits, targets, weights)?;
    let mut grad = Tensor::zeros(&[t, v]);
    let mut sum = 0.0;
    for i in 0..t {
        let lp = log_softmax(logits.row(i));
        sum += weights[i] * -lp[targets[i]];
        let scale = weights[i] / t as f64;
        let g = grad.row_mut(i);
        if scale == 0.0 {
            continue;
        }
        for (gv, l) in g.iter_mut().zip(&lp) {
            *gv = scale * l.exp();
        }
        g[targets[i]] -= scale;
    }
    Ok((sum / t as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros(t: usize, v: usize) -> Tensor {
        Tensor::zeros(&[t, v])
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let l = weighted_nll(&zeros(3, 4), &[0, 1, 2], &[1.0, 1.0, 1.0]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((l - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn negative_factual_weight() {
        // (1 + 1 - 0.05)/3 * ln 4
        let l = weighted_nll(&zeros(3, 4), &[0, 1, 2], &[1.0, 1.0, -0.05]).unwrap();
        let oracle = (1.95 / 3.0) * 4f64.ln();
        assert!((l - oracle).abs() < 1e-12);
        assert!((l - 0.901091).abs() < 1e-6);
    }

    #[test]
    fn zero_weights_are_exactly_zero() {
        let logits = Tensor::from_vec(&[2, 3], vec![0.3, -1.0, 2.0, 5.0, 0.0, 0.1]).unwrap();
        assert_eq!(weighted_nll(&logits, &[0, 1], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn unit_weights_match_mean_nll_bitwise() {
        let logits = Tensor::from_vec(&[2, 3], vec![0.3, -1.0, 2.0, 5.0, 0.0, 0.1]).unwrap();
        assert_eq!(
            weighted_nll(&logits, &[2, 1], &[1.0, 1.0]).unwrap(),
            mean_nll(&logits, &[2, 1]).unwrap()
        );
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            weighted_nll(&zeros(3, 4), &[0, 1], &[1.0, 1.0, 1.0]),
            Err(Error::Length(_))
        ));
        assert!(weighted_nll(&zeros(3, 4), &[0, 1, 2], &[1.0]).is_err());
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = Tensor::from_vec(&[2, 3], vec![0.3, -1.0, 2.0, 5.0, 0.0, 0.1]).unwrap();
        let (loss, g) = weighted_nll_with_grad(&logits, &[2, 1], &[1.0, -0.2]).unwrap();
        assert_eq!(loss, weighted_nll(&logits, &[2, 1], &[1.0, -0.2]).unwrap());
        for i in 0..2 {
            assert!(g.row(i).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Tensor::from_vec(&[1, 3], vec![1000.0, -1000.0, 0.0]).unwrap();
        let l = weighted_nll(&logits, &[1], &[1.0]).unwrap();
        assert!(l.is_finite());
        assert!((l - 2000.0).abs() < 1e-9);
    }
}
