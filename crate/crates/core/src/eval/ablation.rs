//! End-to-end experiment runs: component ablation and induction-strength
//! sweep over several seeds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::facts::memorization_rate;
use super::mc::{evaluate_mc, McReport};
use crate::corpus::{
    build_vocab, corrupt_for_icd, render_mc_set, render_training_set, McItem, Templates,
    TrainingExample, Vocab, World, WorldParams,
};
use crate::decode::{DecodeConfig, ModelPair, Normalization, Strategy, ThresholdMode};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, init_params, ModelConfig, ModelParams};
use crate::training::{train, AlphaReading, MaskPolicy, TrainConfig};

/// Model size without the vocabulary, which comes from the world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            d_model: 32,
            n_heads: 2,
            n_layers: 2,
            d_ff: 64,
            max_seq_len: 32,
        }
    }
}

impl ModelShape {
    pub fn config(&self, vocab_size: usize, init_seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            max_seq_len: self.max_seq_len,
            init_seed,
        }
    }
}

/// Everything an experiment run depends on apart from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub world: WorldParams,
    pub model: ModelShape,
    pub held_out: usize,
    pub n_true: usize,
    pub n_false: usize,
    pub positive_epochs: usize,
    pub positive_lr: f64,
    pub evil_epochs: usize,
    pub evil_lr: f64,
    /// Induction strength of the headline evil model.
    pub alpha: f64,
    pub reading: AlphaReading,
    /// Decoding for the DHI rows; the strategy field is overridden per row.
    pub decode: DecodeConfig,
    pub norm: Normalization,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldParams::default(),
            model: ModelShape::default(),
            held_out: 2,
            n_true: 2,
            n_false: 3,
            // a partly trained positive model still confuses some facts,
            // which is what contrast is meant to repair
            positive_epochs: 15,
            positive_lr: 3e-3,
            evil_epochs: 8,
            evil_lr: 1e-3,
            alpha: 0.05,
            reading: AlphaReading::Reverse,
            decode: DecodeConfig {
                strategy: Strategy::Dhi,
                alpha_prime: 0.1,
                beta: 1.0,
                threshold_mode: ThresholdMode::Probability,
                max_new_tokens: 32,
            },
            norm: Normalization::Mean,
        }
    }
}

/// Corpus and positive model for one seed, plus a cache of evil models.
pub struct SeedRun {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub world: World,
    pub templates: Templates,
    pub vocab: Vocab,
    pub train_set: Vec<TrainingExample>,
    pub mc_items: Vec<McItem>,
    pub positive: ModelParams,
    pub positive_loss: Vec<f64>,
    evil_cache: BTreeMap<(u64, MaskPolicy, bool), ModelParams>,
}

impl SeedRun {
    /// Builds the corpus and trains the positive model; `seed` drives the
    /// world, initialization and shuffling.
    pub fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        let world = World::generate(&WorldParams {
            seed,
            ..config.world
        })?;
        let templates = Templates::builtin(&world, config.held_out)?;
        let vocab = build_vocab(&world, &templates);
        let train_set = render_training_set(&world, &templates, &vocab)?;
        let mc_items = render_mc_set(
            &world,
            &templates,
            &vocab,
            seed,
            config.n_true,
            config.n_false,
        )?;
        let init = init_params(&config.model.config(vocab.len(), seed))?;
        let tc = TrainConfig {
            lr: config.positive_lr,
            ..TrainConfig::positive(config.positive_epochs, seed)
        };
        let out = train(init, &train_set, &tc)?;
        Ok(Self {
            seed,
            config: config.clone(),
            world,
            templates,
            vocab,
            train_set,
            mc_items,
            positive: out.params,
            positive_loss: out.loss_trace,
            evil_cache: BTreeMap::new(),
        })
    }

    /// Fine-tunes an evil model from the positive one. Identical settings
    /// are trained once.
    pub fn evil(&mut self, w_factual: f64, mask: MaskPolicy) -> Result<&ModelParams> {
        self.evil_model(w_factual, mask, false)
    }

    /// Fine-tunes on value-corrupted data with plain NLL.
    pub fn icd(&mut self) -> Result<&ModelParams> {
        self.evil_model(1.0, MaskPolicy::Standard, true)
    }

    fn evil_model(
        &mut self,
        w_factual: f64,
        mask: MaskPolicy,
        corrupted: bool,
    ) -> Result<&ModelParams> {
        let key = (w_factual.to_bits(), mask, corrupted);
        if !self.evil_cache.contains_key(&key) {
            let seed = self.seed;
            let (cfg, data) = if corrupted {
                let data = corrupt_for_icd(&self.train_set, &self.world, &self.vocab, seed)?;
                (TrainConfig::evil_icd(self.config.evil_epochs, seed), data)
            } else {
                let cfg = TrainConfig::evil_dhi(self.config.evil_epochs, seed, w_factual, mask);
                (cfg, self.train_set.clone())
            };
            let cfg = TrainConfig {
                lr: self.config.evil_lr,
                ..cfg
            };
            let out = train(self.positive.clone(), &data, &cfg)?;
            self.evil_cache.insert(key, out.params);
        }
        Ok(&self.evil_cache[&key])
    }

    pub fn memorization(&self) -> Result<f64> {
        memorization_rate(
            ModelPair::greedy(&self.positive),
            &self.train_set,
            self.config.decode.max_new_tokens,
        )
    }

    pub fn evaluate(&self, evil: Option<&ModelParams>, strategy: Strategy) -> Result<McReport> {
        let cfg = self.config.decode.with_strategy(strategy);
        evaluate_mc(
            ModelPair::new(&self.positive, evil)?,
            &self.mc_items,
            &cfg,
            self.config.norm,
        )
    }
}

/// Checkpoints the component ablation contrasts against the positive model.
pub struct ComponentCheckpoints<'a> {
    pub positive: &'a ModelParams,
    pub icd: &'a ModelParams,
    /// Loss modification and mask adaptation both on.
    pub full: &'a ModelParams,
    /// Trained with `w_factual = 1` and the adapted mask.
    pub no_loss_modify: &'a ModelParams,
    /// Trained with the headline weight and the standard mask.
    pub no_mask_adapt: &'a ModelParams,
}

impl<'a> ComponentCheckpoints<'a> {
    /// Loads `positive`, `icd`, `full`, `no_loss_modify` and `no_mask_adapt`
    /// from subdirectories of `dir`.
    pub fn load_dir(dir: &Path) -> Result<[ModelParams; 5]> {
        let load = |name: &str| {
            let d = dir.join(name);
            if !d.join("params.json").exists() {
                return Err(Error::MissingCheckpoint(d.display().to_string()));
            }
            checkpoint::load(&d)
        };
        Ok([
            load("positive")?,
            load("icd")?,
            load("full")?,
            load("no_loss_modify")?,
            load("no_mask_adapt")?,
        ])
    }

    pub fn from_array(a: &'a [ModelParams; 5]) -> Self {
        Self {
            positive: &a[0],
            icd: &a[1],
            full: &a[2],
            no_loss_modify: &a[3],
            no_mask_adapt: &a[4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub method: String,
    /// `None` for rows that are not DHI variants.
    pub loss_modify: Option<bool>,
    pub mask_adapt: Option<bool>,
    pub selective: Option<bool>,
    pub report: McReport,
}

impl ComponentRow {
    pub fn is_dhi_variant(&self) -> bool {
        self.loss_modify.is_some()
    }

    pub fn is_full_dhi(&self) -> bool {
        self.loss_modify == Some(true)
            && self.mask_adapt == Some(true)
            && self.selective == Some(true)
    }
}

/// The six rows: greedy, ICD, then DHI with each component switched off in
/// turn and with all on.
pub fn ablate_components(
    ckpts: &ComponentCheckpoints,
    mc_items: &[McItem],
    base: &DecodeConfig,
    norm: Normalization,
) -> Result<Vec<ComponentRow>> {
    let eval = |evil: Option<&ModelParams>, strategy: Strategy| {
        evaluate_mc(
            ModelPair::new(ckpts.positive, evil)?,
            mc_items,
            &base.with_strategy(strategy),
            norm,
        )
    };
    let dhi = |name: &str, flags: [bool; 3], evil: &ModelParams| -> Result<ComponentRow> {
        let strategy = if flags[2] {
            Strategy::Dhi
        } else {
            Strategy::Cd
        };
        Ok(ComponentRow {
            method: name.to_string(),
            loss_modify: Some(flags[0]),
            mask_adapt: Some(flags[1]),
            selective: Some(flags[2]),
            report: eval(Some(evil), strategy)?,
        })
    };
    Ok(vec![
        ComponentRow {
            method: "Greedy".into(),
            loss_modify: None,
            mask_adapt: None,
            selective: None,
            report: eval(None, Strategy::Greedy)?,
        },
        ComponentRow {
            method: "ICD".into(),
            loss_modify: None,
            mask_adapt: None,
            selective: None,
            report: eval(Some(ckpts.icd), Strategy::Cd)?,
        },
        dhi(
            "DHI w/o loss modify",
            [false, true, true],
            ckpts.no_loss_modify,
        )?,
        dhi(
            "DHI w/o mask adapt",
            [true, false, true],
            ckpts.no_mask_adapt,
        )?,
        dhi("DHI w/o selective", [true, true, false], ckpts.full)?,
        dhi("DHI", [true, true, true], ckpts.full)?,
    ])
}

/// Trains the component checkpoints for one seed and runs the ablation.
pub fn run_components(run: &mut SeedRun) -> Result<Vec<ComponentRow>> {
    let w = run.config.reading.weight(run.config.alpha);
    run.icd()?;
    run.evil(w, MaskPolicy::Adapted)?;
    run.evil(1.0, MaskPolicy::Adapted)?;
    run.evil(w, MaskPolicy::Standard)?;
    // the cache is filled; borrow everything immutably
    let icd = run.evil_cache[&(1f64.to_bits(), MaskPolicy::Standard, true)].clone();
    let full = run.evil_cache[&(w.to_bits(), MaskPolicy::Adapted, false)].clone();
    let no_loss = run.evil_cache[&(1f64.to_bits(), MaskPolicy::Adapted, false)].clone();
    let no_mask = run.evil_cache[&(w.to_bits(), MaskPolicy::Standard, false)].clone();
    let ckpts = ComponentCheckpoints {
        positive: &run.positive,
        icd: &icd,
        full: &full,
        no_loss_modify: &no_loss,
        no_mask_adapt: &no_mask,
    };
    ablate_components(&ckpts, &run.mc_items, &run.config.decode, run.config.norm)
}

pub const DEFAULT_ALPHA_GRID: [f64; 4] = [0.0, 0.01, 0.05, 0.2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaCell {
    pub seed: u64,
    pub reading: AlphaReading,
    pub alpha: f64,
    pub w_factual: f64,
    /// `None` when training diverged; see `error`.
    pub report: Option<McReport>,
    pub error: Option<String>,
}

/// One evil model per (α, reading) with the adapted mask, decoded with the
/// configured DHI settings.
pub fn run_alpha(
    run: &mut SeedRun,
    alphas: &[f64],
    readings: &[AlphaReading],
) -> Result<Vec<AlphaCell>> {
    let mut cells = Vec::new();
    for &reading in readings {
        for &alpha in alphas {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::TrainConfig(format!(
                    "alpha must lie in [0, 1], got {alpha}"
                )));
            }
            let w = reading.weight(alpha);
            let (report, error) = match run.evil(w, MaskPolicy::Adapted) {
                Ok(evil) => {
                    let evil = evil.clone();
                    (Some(run.evaluate(Some(&evil), Strategy::Dhi)?), None)
                }
                Err(e @ Error::Divergence { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            cells.push(AlphaCell {
                seed: run.seed,
                reading,
                alpha,
                w_factual: w,
                report,
                error,
            });
        }
    }
    Ok(cells)
}

/// Metric-wise medians (mean of the middle two for even counts).
pub fn median_report(reports: &[McReport]) -> Option<McReport> {
    if reports.is_empty() {
        return None;
    }
    let med = |f: fn(&McReport) -> f64| {
        let mut xs: Vec<f64> = reports.iter().map(f).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        if n % 2 == 1 {
            xs[n / 2]
        } else {
            (xs[n / 2 - 1] + xs[n / 2]) / 2.0
        }
    };
    Some(McReport {
        mc1: med(|r| r.mc1),
        mc2: med(|r| r.mc2),
        mc3: med(|r| r.mc3),
        avg: med(|r| r.avg),
        n_items: reports[0].n_items,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedComponents {
    pub seed: u64,
    pub memorization: f64,
    pub rows: Vec<ComponentRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaMedian {
    pub reading: AlphaReading,
    pub alpha: f64,
    pub report: Option<McReport>,
}

/// Published reference numbers shown beside the measured ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub label: &'static str,
    pub mc1: f64,
    pub mc2: f64,
    pub mc3: f64,
    pub avg: f64,
}

pub const COMPONENT_REFERENCE: [ReferenceRow; 6] = [
    ReferenceRow {
        label: "Greedy",
        mc1: 37.6,
        mc2: 54.6,
        mc3: 28.1,
        avg: 40.1,
    },
    ReferenceRow {
        label: "ICD",
        mc1: 40.5,
        mc2: 69.7,
        mc3: 41.3,
        avg: 50.5,
    },
    ReferenceRow {
        label: "DHI w/o loss modify",
        mc1: 40.5,
        mc2: 70.7,
        mc3: 43.0,
        avg: 51.4,
    },
    ReferenceRow {
        label: "DHI w/o mask adapt",
        mc1: 41.2,
        mc2: 71.8,
        mc3: 44.5,
        avg: 52.5,
    },
    ReferenceRow {
        label: "DHI w/o selective",
        mc1: 40.8,
        mc2: 71.0,
        mc3: 43.2,
        avg: 51.7,
    },
    ReferenceRow {
        label: "DHI",
        mc1: 41.9,
        mc2: 72.6,
        mc3: 45.0,
        avg: 53.2,
    },
];

pub const ALPHA_REFERENCE: [ReferenceRow; 4] = [
    ReferenceRow {
        label: "0.00",
        mc1: 39.5,
        mc2: 68.7,
        mc3: 41.2,
        avg: 49.8,
    },
    ReferenceRow {
        label: "0.01",
        mc1: 41.2,
        mc2: 71.3,
        mc3: 44.2,
        avg: 52.2,
    },
    ReferenceRow {
        label: "0.05",
        mc1: 41.9,
        mc2: 72.6,
        mc3: 45.0,
        avg: 53.2,
    },
    ReferenceRow {
        label: "0.20",
        mc1: 40.2,
        mc2: 69.0,
        mc3: 42.0,
        avg: 50.4,
    },
];

/// Result of a multi-seed ablation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub components: Option<ComponentsSummary>,
    pub alpha: Option<AlphaSummary>,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentsSummary {
    pub per_seed: Vec<SeedComponents>,
    /// Row-wise medians across seeds, same order as the per-seed rows.
    pub median: Vec<ComponentRow>,
    /// Seeds in which the all-components row has the highest average among
    /// the DHI variants.
    pub full_best_seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub alphas: Vec<f64>,
    pub readings: Vec<AlphaReading>,
    pub cells: Vec<AlphaCell>,
    pub median: Vec<AlphaMedian>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Components,
    Alpha,
    /// Both, sharing positive models per seed.
    All,
}

fn summarize_components(per_seed: Vec<SeedComponents>) -> ComponentsSummary {
    let n_rows = per_seed.first().map_or(0, |s| s.rows.len());
    let median = (0..n_rows)
        .map(|i| {
            let reports: Vec<McReport> = per_seed.iter().map(|s| s.rows[i].report).collect();
            ComponentRow {
                report: median_report(&reports).expect("non-empty"),
                ..per_seed[0].rows[i].clone()
            }
        })
        .collect();
    let full_best_seeds = per_seed
        .iter()
        .filter(|s| {
            let full = s
                .rows
                .iter()
                .find(|r| r.is_full_dhi())
                .map(|r| r.report.avg);
            let others = s
                .rows
                .iter()
                .filter(|r| r.is_dhi_variant() && !r.is_full_dhi())
                .map(|r| r.report.avg)
                .fold(f64::NEG_INFINITY, f64::max);
            full.is_some_and(|f| f >= others)
        })
        .map(|s| s.seed)
        .collect();
    ComponentsSummary {
        per_seed,
        median,
        full_best_seeds,
    }
}

fn summarize_alpha(
    alphas: &[f64],
    readings: &[AlphaReading],
    cells: Vec<AlphaCell>,
) -> AlphaSummary {
    let mut median = Vec::new();
    for &reading in readings {
        for &alpha in alphas {
            let reports: Vec<McReport> = cells
                .iter()
                .filter(|c| c.reading == reading && c.alpha == alpha)
                .filter_map(|c| c.report)
                .collect();
            median.push(AlphaMedian {
                reading,
                alpha,
                report: median_report(&reports),
            });
        }
    }
    AlphaSummary {
        alphas: alphas.to_vec(),
        readings: readings.to_vec(),
        cells,
        median,
    }
}

/// Runs the requested ablations for every seed, reporting progress through
/// `log`.
pub fn run_ablation(
    config: &ExperimentConfig,
    mode: AblationMode,
    seeds: &[u64],
    alphas: &[f64],
    readings: &[AlphaReading],
    mut log: impl FnMut(&str),
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::TrainConfig("at least one seed is required".into()));
    }
    let want_components = matches!(mode, AblationMode::Components | AblationMode::All);
    let want_alpha = matches!(mode, AblationMode::Alpha | AblationMode::All);
    let mut per_seed = Vec::new();
    let mut cells = Vec::new();
    for &seed in seeds {
        log(&format!("seed {seed}: training positive model"));
        let mut run = SeedRun::prepare(config, seed)?;
        let memorization = run.memorization()?;
        log(&format!("seed {seed}: memorization {:.3}", memorization));
        if want_components {
            let rows = run_components(&mut run)?;
            for r in &rows {
                log(&format!(
                    "seed {seed}: {:<22} avg {:.4}",
                    r.method, r.report.avg
                ));
            }
            per_seed.push(SeedComponents {
                seed,
                memorization,
                rows,
            });
        }
        if want_alpha {
            let c = run_alpha(&mut run, alphas, readings)?;
            for cell in &c {
                let avg = cell.report.map_or(f64::NAN, |r| r.avg);
                log(&format!(
                    "seed {seed}: {} alpha {} avg {:.4}",
                    cell.reading, cell.alpha, avg
                ));
            }
            cells.extend(c);
        }
    }
    Ok(AblationReport {
        config: config.clone(),
        seeds: seeds.to_vec(),
        components: want_components.then(|| summarize_components(per_seed)),
        alpha: want_alpha.then(|| summarize_alpha(alphas, readings, cells)),
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(avg: f64) -> McReport {
        McReport {
            mc1: avg,
            mc2: avg,
            mc3: avg,
            avg,
            n_items: 1,
        }
    }

    #[test]
    fn median_odd_and_even() {
        let m = median_report(&[rep(0.3), rep(0.1), rep(0.2)]).unwrap();
        assert_eq!(m.avg, 0.2);
        let m = median_report(&[rep(0.4), rep(0.1), rep(0.2), rep(0.3)]).unwrap();
        assert!((m.avg - 0.25).abs() < 1e-15);
        assert!(median_report(&[]).is_none());
    }

    #[test]
    fn full_best_detection() {
        let row = |name: &str, flags: Option<[bool; 3]>, avg: f64| ComponentRow {
            method: name.into(),
            loss_modify: flags.map(|f| f[0]),
            mask_adapt: flags.map(|f| f[1]),
            selective: flags.map(|f| f[2]),
            report: rep(avg),
        };
        let rows = |full: f64| {
            vec![
                row("Greedy", None, 0.9),
                row("ICD", None, 0.9),
                row("a", Some([false, true, true]), 0.5),
                row("b", Some([true, false, true]), 0.6),
                row("c", Some([true, true, false]), 0.4),
                row("DHI", Some([true, true, true]), full),
            ]
        };
        let s = summarize_components(vec![
            SeedComponents {
                seed: 1,
                memorization: 1.0,
                rows: rows(0.7),
            },
            SeedComponents {
                seed: 2,
                memorization: 1.0,
                rows: rows(0.55),
            },
        ]);
        assert_eq!(s.full_best_seeds, vec![1]);
        assert_eq!(s.median.len(), 6);
    }
}
