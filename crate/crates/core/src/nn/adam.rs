//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ModelParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Result<Self> {
        Ok(Self {
            step: 0,
            m: Gradients::zeros(&params.config)?,
            v: Gradients::zeros(&params.config)?,
        })
    }
}

pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let gshapes: Vec<&[usize]> = grads.tensors().iter().map(|t| t.shape()).collect();
    let pshapes: Vec<Vec<usize>> = params
        .tensors()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    if gshapes.len() != pshapes.len()
        || gshapes
            .iter()
            .zip(&pshapes)
            .any(|(a, b)| *a != b.as_slice())
    {
        return Err(Error::Shape("gradient shapes do not mirror params".into()));
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    let gs = grads.tensors();
    let ms = state.m.0.tensors_mut();
    let vs = state.v.0.tensors_mut();
    for (((p, g), m), v) in params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs) {
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *pi -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::config::ModelConfig;
    use crate::nn::params::init_params;

    fn setup() -> (ModelParams, AdamState) {
        let p = init_params(&ModelConfig::toy(12)).unwrap();
        let s = AdamState::new(&p).unwrap();
        (p, s)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, mut s) = setup();
        let before = p.clone();
        let g = Gradients::zeros(&p.config).unwrap();
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let (mut p, mut s) = setup();
        let before = p.clone();
        let mut g = Gradients::zeros(&p.config).unwrap();
        for (i, t) in g.0.tensors_mut().into_iter().enumerate() {
            let c = if i % 2 == 0 { 0.37 } else { -2.5 };
            t.fill(c);
        }
        let cfg = AdamConfig::default();
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        // mhat = g, vhat = g², so the step is lr·g/(|g|+eps)
        for ((a, b), gt) in before.tensors().iter().zip(p.tensors()).zip(g.tensors()) {
            for ((x0, x1), gi) in a.data().iter().zip(b.data()).zip(gt.data()) {
                let step = x1 - x0;
                let oracle = -cfg.lr * gi / (gi.abs() + cfg.eps);
                assert!((step - oracle).abs() < 1e-15);
                assert!((step.abs() - cfg.lr).abs() < 1e-10);
                assert_eq!(step.signum(), -gi.signum());
            }
        }
    }

    #[test]
    fn deterministic() {
        let (p, s) = setup();
        let mut g = Gradients::zeros(&p.config).unwrap();
        g.0.head.fill(0.1);
        let run = || {
            let (mut p, mut s) = (p.clone(), s.clone());
            adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (mut p, mut s) = setup();
        let g = Gradients::zeros(&ModelConfig::toy(20)).unwrap();
        assert!(adam_step(&mut p, &g, &mut s, &AdamConfig::default()).is_err());
    }
}
