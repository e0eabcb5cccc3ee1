//! Weights of the toy transformer and their gradient mirror.

use std::ops::{Deref, DerefMut};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Standard deviation of the normal initializer.
pub const INIT_STD: f64 = 0.02;

/// One pre-layer-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    /// `[d_model, d_model]`, applied as `x · w_q`.
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    /// `[d_model, d_ff]`
    pub w_up: Tensor,
    pub b_up: Tensor,
    /// `[d_ff, d_model]`
    pub w_down: Tensor,
    pub b_down: Tensor,
}

/// All weights of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `[vocab, d_model]`
    pub tok_emb: Tensor,
    /// `[max_seq_len, d_model]`
    pub pos_emb: Tensor,
    pub layers: Vec<LayerParams>,
    pub lnf_gain: Tensor,
    pub lnf_bias: Tensor,
    /// Untied output head, `[vocab, d_model]`.
    pub head: Tensor,
}

const LAYER_FIELDS: [&str; 12] = [
    "ln1_gain", "ln1_bias", "w_q", "w_k", "w_v", "w_o", "ln2_gain", "ln2_bias", "w_up", "b_up",
    "w_down", "b_down",
];

impl LayerParams {
    fn tensors(&self) -> [&Tensor; 12] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_o,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.w_up,
            &self.b_up,
            &self.w_down,
            &self.b_down,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 12] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w_up,
            &mut self.b_up,
            &mut self.w_down,
            &mut self.b_down,
        ]
    }
}

impl ModelParams {
    /// Every array zero (layer-norm gains included).
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let layer = || LayerParams {
            ln1_gain: Tensor::zeros(&[d]),
            ln1_bias: Tensor::zeros(&[d]),
            w_q: Tensor::zeros(&[d, d]),
            w_k: Tensor::zeros(&[d, d]),
            w_v: Tensor::zeros(&[d, d]),
            w_o: Tensor::zeros(&[d, d]),
            ln2_gain: Tensor::zeros(&[d]),
            ln2_bias: Tensor::zeros(&[d]),
            w_up: Tensor::zeros(&[d, config.d_ff]),
            b_up: Tensor::zeros(&[config.d_ff]),
            w_down: Tensor::zeros(&[config.d_ff, d]),
            b_down: Tensor::zeros(&[d]),
        };
        Ok(Self {
            config: *config,
            tok_emb: Tensor::zeros(&[config.vocab_size, d]),
            pos_emb: Tensor::zeros(&[config.max_seq_len, d]),
            layers: (0..config.n_layers).map(|_| layer()).collect(),
            lnf_gain: Tensor::zeros(&[d]),
            lnf_bias: Tensor::zeros(&[d]),
            head: Tensor::zeros(&[config.vocab_size, d]),
        })
    }

    /// Named views of every array in a fixed canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("tok_emb".to_string(), &self.tok_emb),
            ("pos_emb".to_string(), &self.pos_emb),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in LAYER_FIELDS.iter().zip(layer.tensors()) {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out.push(("lnf_gain".to_string(), &self.lnf_gain));
        out.push(("lnf_bias".to_string(), &self.lnf_bias));
        out.push(("head".to_string(), &self.head));
        out
    }

    /// Mutable views in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.lnf_gain);
        out.push(&mut self.lnf_bias);
        out.push(&mut self.head);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Fails unless `other` has the same config and array shapes.
    pub fn check_compatible(&self, other: &ModelParams) -> Result<()> {
        if self.config.vocab_size != other.config.vocab_size
            || self.config.d_model != other.config.d_model
            || self.config.n_layers != other.config.n_layers
            || self.config.d_ff != other.config.d_ff
            || self.config.max_seq_len != other.config.max_seq_len
        {
            return Err(Error::Shape(format!(
                "incompatible model configs {:?} vs {:?}",
                self.config, other.config
            )));
        }
        Ok(())
    }
}

/// Gradient of a scalar loss with respect to every [`ModelParams`] array.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub ModelParams);

impl Gradients {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        Ok(Self(ModelParams::zeros(config)?))
    }

    pub fn is_all_zero(&self) -> bool {
        self.0
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|&x| x == 0.0))
    }
}

impl Deref for Gradients {
    type Target = ModelParams;

    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl DerefMut for Gradients {
    fn deref_mut(&mut self) -> &mut ModelParams {
        &mut self.0
    }
}

/// Deterministic initialization from `config.init_seed`: weights ~ N(0, 0.02),
/// layer-norm gains 1, all biases 0.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut draw = |t: &mut Tensor| {
        for x in t.data_mut() {
            *x = normal.sample(&mut rng);
        }
    };
    draw(&mut params.tok_emb);
    draw(&mut params.pos_emb);
    for layer in &mut params.layers {
        layer.ln1_gain.fill(1.0);
        layer.ln2_gain.fill(1.0);
        draw(&mut layer.w_q);
        draw(&mut layer.w_k);
        draw(&mut layer.w_v);
        draw(&mut layer.w_o);
        draw(&mut layer.w_up);
        draw(&mut layer.w_down);
    }
    params.lnf_gain.fill(1.0);
    draw(&mut params.head);
    Ok(params)
}
