//! Sequence layout, adapted attention masks, induction loss weights and the
//! trainer for positive and evil models.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TrainingExample, BOS, EOS, SEP};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::nn::{self, adam_step, AdamConfig, AdamState, AttentionMask, Gradients, ModelParams};

/// A training example packed as `[BOS, question, SEP, answer, EOS]`.
///
/// Target slot `k` sits at input position `k` and predicts sequence token
/// `k + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceLayout {
    pub sequence: Vec<usize>,
    pub question_len: usize,
    pub answer_len: usize,
    /// Target slots whose predicted token lies in the fact span.
    pub factual_slots: Vec<usize>,
    /// Input positions holding fact-span tokens; always `factual_slots + 1`.
    pub factual_inputs: Vec<usize>,
}

impl SequenceLayout {
    pub fn input(&self) -> &[usize] {
        &self.sequence[..self.sequence.len() - 1]
    }

    pub fn targets(&self) -> &[usize] {
        &self.sequence[1..]
    }

    pub fn n_slots(&self) -> usize {
        self.sequence.len() - 1
    }

    /// Slots predicting question tokens and the separator.
    pub fn question_slots(&self) -> std::ops::Range<usize> {
        0..self.question_len + 1
    }

    /// Slots predicting answer tokens and the closing EOS.
    pub fn answer_slots(&self) -> std::ops::Range<usize> {
        self.question_len + 1..self.n_slots()
    }
}

pub fn layout_example(ex: &TrainingExample, max_seq_len: usize) -> Result<SequenceLayout> {
    ex.validate()?;
    let mut sequence = Vec::with_capacity(ex.question.len() + ex.answer.len() + 3);
    sequence.push(BOS);
    sequence.extend(&ex.question);
    sequence.push(SEP);
    sequence.extend(&ex.answer);
    sequence.push(EOS);
    if sequence.len() > max_seq_len {
        return Err(Error::SequenceTooLong {
            len: sequence.len(),
            max: max_seq_len,
        });
    }
    let q = ex.question.len();
    let (start, len) = ex.span;
    // answer token i sits at sequence position q + 2 + i
    let factual_inputs: Vec<usize> = (start..start + len).map(|i| q + 2 + i).collect();
    let factual_slots = factual_inputs.iter().map(|p| p - 1).collect();
    Ok(SequenceLayout {
        sequence,
        question_len: q,
        answer_len: ex.answer.len(),
        factual_slots,
        factual_inputs,
    })
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    Standard,
    Adapted,
}

impl fmt::Display for MaskPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskPolicy::Standard => "standard",
            MaskPolicy::Adapted => "adapted",
        })
    }
}

/// Causal mask with each position in `hidden` removed from the keys of every
/// strictly later query. Positions keep attending to themselves.
pub fn build_adapted_mask(len: usize, hidden: &[usize]) -> Result<AttentionMask> {
    if let Some(&p) = hidden.iter().find(|&&p| p == 0 || p >= len) {
        return Err(Error::Mask(format!("position {p} outside [1, {len})")));
    }
    let hidden: BTreeSet<usize> = hidden.iter().copied().collect();
    AttentionMask::from_fn(len, |i, j| j <= i && !(hidden.contains(&j) && i > j))
}

pub fn mask_for(layout: &SequenceLayout, policy: MaskPolicy) -> Result<AttentionMask> {
    let len = layout.n_slots();
    match policy {
        MaskPolicy::Standard => Ok(AttentionMask::causal(len)),
        MaskPolicy::Adapted => build_adapted_mask(len, &layout.factual_inputs),
    }
}

/// How an induction strength α maps to the factual-slot loss weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AlphaReading {
    /// Weight α: factual tokens are learned less.
    Downweight,
    /// Weight −α: factual tokens are actively pushed down.
    Reverse,
}

impl AlphaReading {
    pub fn weight(self, alpha: f64) -> f64 {
        match self {
            AlphaReading::Downweight => alpha,
            // −0.0 would round-trip through JSON as 0, keep it canonical
            AlphaReading::Reverse if alpha == 0.0 => 0.0,
            AlphaReading::Reverse => -alpha,
        }
    }
}

impl fmt::Display for AlphaReading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaReading::Downweight => "downweight",
            AlphaReading::Reverse => "reverse",
        })
    }
}

/// Loss weight per target slot: 0 on the question, `w_factual` on factual
/// slots, 1 elsewhere in the answer.
pub fn induction_weights(layout: &SequenceLayout, w_factual: f64) -> Vec<f64> {
    let mut w = vec![0.0; layout.n_slots()];
    for k in layout.answer_slots() {
        w[k] = 1.0;
    }
    for &k in &layout.factual_slots {
        w[k] = w_factual;
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Positive,
    #[value(alias = "evil_dhi")]
    EvilDhi,
    #[value(alias = "evil_icd")]
    EvilIcd,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Positive => "positive",
            Role::EvilDhi => "evil_dhi",
            Role::EvilIcd => "evil_icd",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub role: Role,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub w_factual: f64,
    pub mask: MaskPolicy,
}

impl TrainConfig {
    pub fn positive(epochs: usize, seed: u64) -> Self {
        Self {
            role: Role::Positive,
            epochs,
            lr: AdamConfig::default().lr,
            seed,
            w_factual: 1.0,
            mask: MaskPolicy::Standard,
        }
    }

    pub fn evil_dhi(epochs: usize, seed: u64, w_factual: f64, mask: MaskPolicy) -> Self {
        Self {
            role: Role::EvilDhi,
            w_factual,
            mask,
            ..Self::positive(epochs, seed)
        }
    }

    pub fn evil_icd(epochs: usize, seed: u64) -> Self {
        Self {
            role: Role::EvilIcd,
            ..Self::positive(epochs, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.w_factual) {
            return Err(Error::TrainConfig(format!(
                "w_factual must lie in [-1, 1], got {}",
                self.w_factual
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::TrainConfig(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        match self.role {
            Role::Positive if self.w_factual != 1.0 || self.mask != MaskPolicy::Standard => {
                Err(Error::TrainConfig(
                    "the positive role requires w_factual = 1 and the standard mask".into(),
                ))
            }
            Role::EvilIcd if self.w_factual != 1.0 => Err(Error::TrainConfig(
                "the evil_icd role trains with plain NLL (w_factual = 1)".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Weighted loss on one example with its gradients.
pub fn example_loss_and_grads(
    params: &ModelParams,
    ex: &TrainingExample,
    w_factual: f64,
    policy: MaskPolicy,
) -> Result<(f64, Gradients)> {
    let layout = layout_example(ex, params.config.max_seq_len)?;
    let mask = mask_for(&layout, policy)?;
    let weights = induction_weights(&layout, w_factual);
    nn::backward(params, layout.input(), &mask, layout.targets(), &weights)
}

pub fn example_loss(
    params: &ModelParams,
    ex: &TrainingExample,
    w_factual: f64,
    policy: MaskPolicy,
) -> Result<f64> {
    let layout = layout_example(ex, params.config.max_seq_len)?;
    let mask = mask_for(&layout, policy)?;
    let weights = induction_weights(&layout, w_factual);
    let logits = nn::forward(params, layout.input(), &mask)?;
    nn::weighted_nll(&logits, layout.targets(), &weights)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean example loss per epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Batch-of-one Adam over `data`, reshuffled every epoch from `cfg.seed`.
/// `init` is the starting point: fresh weights for the positive role, the
/// positive checkpoint for evil roles.
pub fn train(
    init: ModelParams,
    data: &[TrainingExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_progress(init, data, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, mean loss)` after each epoch.
pub fn train_with_progress(
    init: ModelParams,
    data: &[TrainingExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::TrainConfig("dataset is empty".into()));
    }
    let mut params = init;
    let layouts: Vec<SequenceLayout> = data
        .iter()
        .map(|ex| layout_example(ex, params.config.max_seq_len))
        .collect::<Result<_>>()?;
    let masks: Vec<AttentionMask> = layouts
        .iter()
        .map(|l| mask_for(l, cfg.mask))
        .collect::<Result<_>>()?;
    let weights: Vec<Vec<f64>> = layouts
        .iter()
        .map(|l| induction_weights(l, cfg.w_factual))
        .collect();

    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let (loss, grads) = nn::backward(
                &params,
                layouts[i].input(),
                &masks[i],
                layouts[i].targets(),
                &weights[i],
            )?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            adam_step(&mut params, &grads, &mut state, &adam)?;
            total += loss;
        }
        let mean = total / data.len() as f64;
        if !params.is_finite() {
            return Err(Error::Divergence {
                epoch,
                step: data.len(),
                loss: mean,
            });
        }
        on_epoch(epoch, mean);
        loss_trace.push(mean);
    }
    Ok(TrainOutcome { params, loss_trace })
}

/// Metadata written next to a checkpoint as `train.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSidecar {
    pub role: Role,
    pub w_factual: f64,
    pub mask: MaskPolicy,
    pub seed: u64,
    pub final_loss: f64,
    pub epochs: usize,
    pub lr: f64,
    pub loss_trace: Vec<f64>,
    pub model: nn::ModelConfig,
    pub version: String,
}

impl TrainSidecar {
    pub fn new(cfg: &TrainConfig, outcome: &TrainOutcome) -> Self {
        Self {
            role: cfg.role,
            w_factual: cfg.w_factual,
            mask: cfg.mask,
            seed: cfg.seed,
            final_loss: outcome.final_loss(),
            epochs: cfg.epochs,
            lr: cfg.lr,
            loss_trace: outcome.loss_trace.clone(),
            model: outcome.params.config,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub const SIDECAR_FILE: &str = "train.json";

/// Writes params.json, params.bin and train.json into `dir`.
pub fn save_trained(dir: &Path, cfg: &TrainConfig, outcome: &TrainOutcome) -> Result<()> {
    nn::checkpoint::save(&outcome.params, dir)?;
    write_json(&dir.join(SIDECAR_FILE), &TrainSidecar::new(cfg, outcome))
}

pub fn load_sidecar(dir: &Path) -> Result<TrainSidecar> {
    read_json(&dir.join(SIDECAR_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, ModelConfig};

    fn example() -> TrainingExample {
        // where born alice <sep> alice was born in paris .
        TrainingExample {
            question: vec![10, 11, 12],
            answer: vec![12, 13, 11, 14, 15, 16],
            span: (4, 1),
        }
    }

    #[test]
    fn layout_matches_hand_enumeration() {
        let l = layout_example(&example(), 48).unwrap();
        assert_eq!(
            l.sequence,
            vec![BOS, 10, 11, 12, SEP, 12, 13, 11, 14, 15, 16, EOS]
        );
        assert_eq!(l.factual_inputs, vec![9]);
        assert_eq!(l.factual_slots, vec![8]);
        assert_eq!(l.sequence[9], 15);
        assert_eq!(l.question_slots(), 0..4);
        assert_eq!(l.answer_slots(), 4..11);
        assert_eq!(l.targets()[10], EOS);
    }

    #[test]
    fn layout_two_word_span_and_overflow() {
        let mut ex = example();
        ex.span = (3, 2);
        let l = layout_example(&ex, 48).unwrap();
        assert_eq!(l.factual_slots, vec![7, 8]);
        assert!(matches!(
            layout_example(&ex, 11),
            Err(Error::SequenceTooLong { len: 12, max: 11 })
        ));
    }

    #[test]
    fn adapted_mask_rows() {
        let m = build_adapted_mask(4, &[2]).unwrap();
        let rows: Vec<Vec<usize>> = (0..4).map(|i| m.row(i)).collect();
        assert_eq!(
            rows,
            vec![vec![0], vec![0, 1], vec![0, 1, 2], vec![0, 1, 3]]
        );
        assert_eq!(
            build_adapted_mask(5, &[]).unwrap(),
            AttentionMask::causal(5)
        );
        let m = build_adapted_mask(5, &[1, 2]).unwrap();
        assert_eq!(m.row(1), vec![0, 1]);
        assert_eq!(m.row(2), vec![0, 2]); // key 1 is hidden from the later query 2
        assert_eq!(m.row(3), vec![0, 3]);
        assert_eq!(m.row(4), vec![0, 3, 4]);
        assert!(build_adapted_mask(4, &[0]).is_err());
        assert!(build_adapted_mask(4, &[4]).is_err());
    }

    #[test]
    fn weights_by_slot_kind() {
        let l = layout_example(&example(), 48).unwrap();
        let w = induction_weights(&l, -0.05);
        assert_eq!(w[..4], [0.0; 4]);
        assert_eq!(w[8], -0.05);
        assert!(w[4..]
            .iter()
            .enumerate()
            .all(|(i, &x)| i + 4 == 8 || x == 1.0));
    }

    #[test]
    fn readings_map_alpha() {
        assert_eq!(AlphaReading::Downweight.weight(0.05), 0.05);
        assert_eq!(AlphaReading::Reverse.weight(0.05), -0.05);
        assert_eq!(
            AlphaReading::Reverse.weight(0.0).to_bits(),
            0.0f64.to_bits()
        );
        assert_eq!(
            AlphaReading::Downweight.weight(0.0).to_bits(),
            0.0f64.to_bits()
        );
    }

    #[test]
    fn role_constraints() {
        let mut c = TrainConfig::positive(1, 0);
        c.validate().unwrap();
        c.mask = MaskPolicy::Adapted;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::evil_icd(1, 0);
        c.w_factual = 0.5;
        assert!(c.validate().is_err());
        assert!(TrainConfig::evil_dhi(1, 0, -1.5, MaskPolicy::Adapted)
            .validate()
            .is_err());
        TrainConfig::evil_dhi(1, 0, -0.05, MaskPolicy::Adapted)
            .validate()
            .unwrap();
    }

    fn tiny() -> ModelParams {
        init_params(&ModelConfig {
            vocab_size: 17,
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            max_seq_len: 16,
            init_seed: 4,
        })
        .unwrap()
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = vec![example(), {
            let mut e = example();
            e.answer[4] = 9;
            e.question[2] = 8;
            e
        }];
        let cfg = TrainConfig::positive(30, 7);
        let a = train(tiny(), &data, &cfg).unwrap();
        let b = train(tiny(), &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.final_loss() < a.loss_trace[0]);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(train(tiny(), &[], &TrainConfig::positive(1, 0)).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig::evil_dhi(2, 3, -0.05, MaskPolicy::Adapted);
        let out = train(tiny(), &[example()], &cfg).unwrap();
        save_trained(dir.path(), &cfg, &out).unwrap();
        let s = load_sidecar(dir.path()).unwrap();
        assert_eq!(s.w_factual, -0.05);
        assert_eq!(s.mask, MaskPolicy::Adapted);
        assert_eq!(s.role, Role::EvilDhi);
        let json = std::fs::read_to_string(dir.path().join(SIDECAR_FILE)).unwrap();
        assert!(json.contains("\"role\": \"evil_dhi\"") && json.contains("\"mask\": \"adapted\""));
        assert_eq!(nn::checkpoint::load(dir.path()).unwrap(), out.params);
    }
}
