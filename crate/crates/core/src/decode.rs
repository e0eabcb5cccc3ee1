//! Greedy, contrastive and selectively contrastive decoding, plus
//! teacher-forced option scoring.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{BOS, EOS, SEP};
use crate::error::{Error, Result};
use crate::nn::{forward, log_softmax, AttentionMask, ModelParams};

/// Log-probability assigned to tokens that carry no mass.
pub const LOG_PROB_FLOOR: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Argmax of the positive model.
    Greedy,
    /// Positive minus β·evil over the whole vocabulary.
    Cd,
    /// Positive minus β·evil over the positive model's plausible tokens.
    Dhi,
}

impl Strategy {
    pub fn needs_evil(self) -> bool {
        self != Strategy::Greedy
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Greedy => "greedy",
            Strategy::Cd => "cd",
            Strategy::Dhi => "dhi",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Keep `p(x) ≥ α′ · max p`.
    Probability,
    /// Keep `logit(x) ≥ α′ · max logit`; not shift invariant.
    #[value(alias = "raw_logit")]
    RawLogit,
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMode::Probability => "probability",
            ThresholdMode::RawLogit => "raw_logit",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Mean,
    Sum,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Mean => "mean",
            Normalization::Sum => "sum",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub alpha_prime: f64,
    pub beta: f64,
    pub threshold_mode: ThresholdMode,
    pub max_new_tokens: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
            alpha_prime: 0.1,
            beta: 1.0,
            threshold_mode: ThresholdMode::Probability,
            max_new_tokens: 32,
        }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        Self::default()
    }

    pub fn with_strategy(self, strategy: Strategy) -> Self {
        Self { strategy, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_prime) {
            return Err(Error::Decode(format!(
                "alpha_prime must lie in [0, 1], got {}",
                self.alpha_prime
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Decode(format!(
                "beta must be a finite non-negative number, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Tokens the positive model finds plausible enough to contrast over.
pub fn valid_set(logits_pos: &[f64], alpha_prime: f64, mode: ThresholdMode) -> Vec<usize> {
    match mode {
        ThresholdMode::Probability => {
            // p(x) ≥ α′·max p  ⟺  logit(x) − max ≥ ln α′, compared in
            // probability space so maxima always pass
            let max = logits_pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let rel: Vec<f64> = logits_pos.iter().map(|l| (l - max).exp()).collect();
            (0..logits_pos.len())
                .filter(|&x| rel[x] >= alpha_prime)
                .collect()
        }
        ThresholdMode::RawLogit => {
            let max = logits_pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let threshold = alpha_prime * max;
            (0..logits_pos.len())
                .filter(|&x| logits_pos[x] >= threshold)
                .collect()
        }
    }
}

/// Next-token distribution with exact zeros outside `valid`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution {
    pub probs: Vec<f64>,
    log_probs: Vec<f64>,
    /// Ascending token ids.
    pub valid: Vec<usize>,
}

impl StepDistribution {
    fn from_scores(scores: Vec<f64>, valid: Vec<usize>) -> Result<Self> {
        if valid.is_empty() {
            return Err(Error::EmptyValidSet);
        }
        let mut log_probs = vec![f64::NEG_INFINITY; scores.len()];
        let sub: Vec<f64> = valid.iter().map(|&x| scores[x]).collect();
        for (&x, lp) in valid.iter().zip(log_softmax(&sub)) {
            log_probs[x] = lp;
        }
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        Ok(Self {
            probs,
            log_probs,
            valid,
        })
    }

    /// Natural log-probability, `-inf` outside the valid set.
    pub fn log_prob(&self, token: usize) -> f64 {
        self.log_probs[token]
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.log_probs)
    }
}

/// Lowest index among the maxima.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `softmax(pos − β·evil)` restricted to `valid`.
pub fn contrast_step(
    logits_pos: &[f64],
    logits_evil: &[f64],
    beta: f64,
    valid: &[usize],
) -> Result<StepDistribution> {
    if logits_pos.len() != logits_evil.len() {
        return Err(Error::Length(format!(
            "positive logits have {} entries, evil logits {}",
            logits_pos.len(),
            logits_evil.len()
        )));
    }
    if let Some(&x) = valid.iter().find(|&&x| x >= logits_pos.len()) {
        return Err(Error::TokenOutOfRange {
            id: x,
            vocab: logits_pos.len(),
        });
    }
    let scores = logits_pos
        .iter()
        .zip(logits_evil)
        .map(|(p, e)| p - beta * e)
        .collect();
    StepDistribution::from_scores(scores, valid.to_vec())
}

/// The distribution the configured strategy draws from at one step.
pub fn step_distribution(
    logits_pos: &[f64],
    logits_evil: Option<&[f64]>,
    cfg: &DecodeConfig,
) -> Result<StepDistribution> {
    let full = || (0..logits_pos.len()).collect::<Vec<_>>();
    match cfg.strategy {
        Strategy::Greedy => StepDistribution::from_scores(logits_pos.to_vec(), full()),
        Strategy::Cd | Strategy::Dhi => {
            let evil = logits_evil.ok_or_else(|| {
                Error::Decode(format!("strategy {} needs an evil model", cfg.strategy))
            })?;
            let valid = if cfg.strategy == Strategy::Cd {
                full()
            } else {
                valid_set(logits_pos, cfg.alpha_prime, cfg.threshold_mode)
            };
            contrast_step(logits_pos, evil, cfg.beta, &valid)
        }
    }
}

/// The positive model and, for contrastive strategies, the evil model.
#[derive(Clone, Copy, Debug)]
pub struct ModelPair<'a> {
    pub positive: &'a ModelParams,
    pub evil: Option<&'a ModelParams>,
}

impl<'a> ModelPair<'a> {
    pub fn new(positive: &'a ModelParams, evil: Option<&'a ModelParams>) -> Result<Self> {
        if let Some(e) = evil {
            if e.config.vocab_size != positive.config.vocab_size {
                return Err(Error::VocabMismatch(format!(
                    "positive vocabulary {} vs evil {}",
                    positive.config.vocab_size, e.config.vocab_size
                )));
            }
        }
        Ok(Self { positive, evil })
    }

    pub fn greedy(positive: &'a ModelParams) -> Self {
        Self {
            positive,
            evil: None,
        }
    }

    fn evil_for(&self, cfg: &DecodeConfig) -> Result<Option<&'a ModelParams>> {
        cfg.validate()?;
        match (cfg.strategy.needs_evil(), self.evil) {
            (false, _) => Ok(None),
            (true, Some(e)) => Ok(Some(e)),
            (true, None) => Err(Error::MissingCheckpoint(format!(
                "strategy {} needs an evil model",
                cfg.strategy
            ))),
        }
    }

    fn max_seq_len(&self) -> usize {
        let p = self.positive.config.max_seq_len;
        self.evil.map_or(p, |e| p.min(e.config.max_seq_len))
    }
}

/// `[BOS, question, SEP]`, the context answers are generated from.
pub fn qa_prompt(question: &[usize]) -> Vec<usize> {
    let mut p = Vec::with_capacity(question.len() + 2);
    p.push(BOS);
    p.extend(question);
    p.push(SEP);
    p
}

/// One generation step, for the optional trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub valid_size: usize,
    pub pos_argmax: usize,
    pub chosen: usize,
    pub flipped: bool,
}

/// Generates after `prompt` until EOS (included in the output), the token
/// budget, or a full context window.
pub fn decode(models: &ModelPair, prompt: &[usize], cfg: &DecodeConfig) -> Result<Vec<usize>> {
    decode_traced(models, prompt, cfg).map(|(out, _)| out)
}

pub fn decode_traced(
    models: &ModelPair,
    prompt: &[usize],
    cfg: &DecodeConfig,
) -> Result<(Vec<usize>, Vec<TraceStep>)> {
    let evil = models.evil_for(cfg)?;
    let max_len = models.max_seq_len();
    if prompt.is_empty() {
        return Err(Error::Decode("prompt is empty".into()));
    }
    if prompt.len() > max_len {
        return Err(Error::SequenceTooLong {
            len: prompt.len(),
            max: max_len,
        });
    }
    let mut context = prompt.to_vec();
    let mut out = Vec::new();
    let mut trace = Vec::new();
    for step in 0..cfg.max_new_tokens {
        if context.len() >= max_len {
            break;
        }
        let mask = AttentionMask::causal(context.len());
        let last = context.len() - 1;
        let pos = forward(models.positive, &context, &mask)?;
        let pos_row = pos.row(last);
        let evil_logits = match evil {
            Some(e) => Some(forward(e, &context, &mask)?),
            None => None,
        };
        let dist = step_distribution(pos_row, evil_logits.as_ref().map(|l| l.row(last)), cfg)?;
        let chosen = dist.argmax();
        let pos_argmax = argmax(pos_row);
        trace.push(TraceStep {
            step,
            valid_size: dist.valid.len(),
            pos_argmax,
            chosen,
            flipped: chosen != pos_argmax,
        });
        out.push(chosen);
        context.push(chosen);
        if chosen == EOS {
            break;
        }
    }
    Ok((out, trace))
}

/// Teacher-forced log-likelihood of `answer` (plus EOS) after `question`
/// under the configured strategy.
pub fn score_option(
    models: &ModelPair,
    question: &[usize],
    answer: &[usize],
    cfg: &DecodeConfig,
    norm: Normalization,
) -> Result<f64> {
    let evil = models.evil_for(cfg)?;
    let mut sequence = qa_prompt(question);
    let first_slot = sequence.len() - 1;
    sequence.extend(answer);
    sequence.push(EOS);
    let max_len = models.max_seq_len();
    let input = &sequence[..sequence.len() - 1];
    if input.len() > max_len {
        return Err(Error::SequenceTooLong {
            len: input.len(),
            max: max_len,
        });
    }
    let mask = AttentionMask::causal(input.len());
    let pos = forward(models.positive, input, &mask)?;
    let evil_logits = match evil {
        Some(e) => Some(forward(e, input, &mask)?),
        None => None,
    };
    let mut total = 0.0;
    let n = input.len() - first_slot;
    for k in first_slot..input.len() {
        let dist = step_distribution(pos.row(k), evil_logits.as_ref().map(|l| l.row(k)), cfg)?;
        let lp = dist.log_prob(sequence[k + 1]);
        total += if lp.is_finite() { lp } else { LOG_PROB_FLOOR };
    }
    Ok(match norm {
        Normalization::Mean => total / n as f64,
        Normalization::Sum => total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, ModelConfig};

    fn ln(p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn valid_set_threshold_examples() {
        let logits = ln(&[0.5, 0.3, 0.15, 0.05]);
        assert_eq!(
            valid_set(&logits, 0.5, ThresholdMode::Probability),
            vec![0, 1]
        );
        assert_eq!(
            valid_set(&logits, 0.0, ThresholdMode::Probability),
            vec![0, 1, 2, 3]
        );
        assert_eq!(
            valid_set(&[1.0, 3.0, 3.0, 2.0], 1.0, ThresholdMode::Probability),
            vec![1, 2]
        );
    }

    #[test]
    fn raw_logit_mode_follows_printed_rule() {
        assert_eq!(
            valid_set(&[4.0, 2.0, 1.0], 0.5, ThresholdMode::RawLogit),
            vec![0, 1]
        );
        // negative maxima flip the threshold above every logit
        assert!(valid_set(&[-1.0, -2.0], 0.5, ThresholdMode::RawLogit).is_empty());
    }

    #[test]
    fn contrast_examples() {
        let d = contrast_step(&[2.0, 1.8, 0.0], &[0.5, 2.0, 0.0], 1.0, &[0, 1]).unwrap();
        let e = (-1.7f64).exp();
        assert!((d.probs[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((d.probs[0] - 0.8455).abs() < 1e-4);
        assert!((d.probs[1] - 0.1545).abs() < 1e-4);
        assert_eq!(d.probs[2], 0.0);
        let d = contrast_step(&[2.0, 1.9, 0.0], &[3.0, 0.5, 0.0], 1.0, &[0, 1]).unwrap();
        assert_eq!(d.argmax(), 1);
        assert!(matches!(
            contrast_step(&[1.0], &[1.0], 1.0, &[]),
            Err(Error::EmptyValidSet)
        ));
    }

    #[test]
    fn argmax_prefers_lowest_id() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        let d = contrast_step(&[0.0; 4], &[0.0; 4], 1.0, &[2, 3]).unwrap();
        assert_eq!(d.argmax(), 2);
    }

    fn zero_model(v: usize) -> ModelParams {
        ModelParams::zeros(&ModelConfig {
            vocab_size: v,
            d_model: 4,
            n_heads: 1,
            n_layers: 1,
            d_ff: 4,
            max_seq_len: 12,
            init_seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn uniform_model_scores_minus_ln_v() {
        let m = zero_model(10);
        let pair = ModelPair::greedy(&m);
        let s = score_option(
            &pair,
            &[5, 6],
            &[7, 8, 9],
            &DecodeConfig::greedy(),
            Normalization::Mean,
        )
        .unwrap();
        assert!((s + 10f64.ln()).abs() < 1e-12);
        assert!((s + std::f64::consts::LN_10).abs() < 1e-6);
        let sum = score_option(
            &pair,
            &[5, 6],
            &[7, 8, 9],
            &DecodeConfig::greedy(),
            Normalization::Sum,
        )
        .unwrap();
        assert!((sum - 4.0 * s).abs() < 1e-12);
    }

    #[test]
    fn contrastive_strategies_need_evil() {
        let m = zero_model(10);
        let pair = ModelPair::greedy(&m);
        let cfg = DecodeConfig::default().with_strategy(Strategy::Dhi);
        assert!(matches!(
            decode(&pair, &[1], &cfg),
            Err(Error::MissingCheckpoint(_))
        ));
    }

    #[test]
    fn decode_respects_budget_and_context() {
        let m = init_params(&ModelConfig {
            vocab_size: 10,
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 8,
            max_seq_len: 6,
            init_seed: 1,
        })
        .unwrap();
        let pair = ModelPair::greedy(&m);
        let cfg = DecodeConfig {
            max_new_tokens: 3,
            ..DecodeConfig::greedy()
        };
        assert!(decode(&pair, &[1, 4], &cfg).unwrap().len() <= 3);
        let cfg = DecodeConfig {
            max_new_tokens: 50,
            ..DecodeConfig::greedy()
        };
        assert!(decode(&pair, &[1, 4, 5], &cfg).unwrap().len() <= 3);
        assert!(matches!(
            decode(&pair, &[1; 7], &cfg),
            Err(Error::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn floor_applies_outside_valid_set() {
        // evil is irrelevant for membership; α′ = 1 with a distinct max keeps one token
        let mut pos = init_params(&ModelConfig {
            vocab_size: 10,
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 8,
            max_seq_len: 12,
            init_seed: 2,
        })
        .unwrap();
        for x in pos.head.data_mut() {
            *x *= 50.0;
        }
        let evil = pos.clone();
        let pair = ModelPair::new(&pos, Some(&evil)).unwrap();
        let cfg = DecodeConfig {
            strategy: Strategy::Dhi,
            alpha_prime: 1.0,
            ..DecodeConfig::default()
        };
        let prompt = qa_prompt(&[5]);
        let logits = forward(&pos, &prompt, &AttentionMask::causal(prompt.len())).unwrap();
        let top = argmax(logits.row(prompt.len() - 1));
        let other = if top == 4 { 6 } else { 4 };
        let s = score_option(&pair, &[5], &[other, 7, 8], &cfg, Normalization::Mean).unwrap();
        assert!(s <= LOG_PROB_FLOOR / 4.0);
    }
}
