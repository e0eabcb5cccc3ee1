//! The `dhi` command line: world generation, training, evaluation and
//! ablation, each reading and writing files under `--out`.
//!
//! Any flag may also come from a JSON object passed with `--config`; keys
//! are flag names and the command line wins. Every command writes `run.json`
//! holding its fully resolved flags, which is itself a valid `--config`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_vocab, corrupt_for_icd, render_mc_set, render_probes, render_training_set, McItem,
    ProbeItem, Templates, TrainingExample, Vocab, World, WorldParams, EOS,
};
use crate::decode::{
    decode_traced, qa_prompt, DecodeConfig, ModelPair, Normalization, Strategy, ThresholdMode,
};
use crate::error::{Error, Result};
use crate::eval::ablation::{
    run_ablation, AblationMode, ExperimentConfig, ModelShape, DEFAULT_ALPHA_GRID,
};
use crate::eval::report::{ablation_markdown, facts_markdown, mc_markdown};
use crate::eval::{evaluate_mc, extract_facts, FactReport};
use crate::io::{read_json, read_jsonl, write_atomic, write_json, write_jsonl};
use crate::nn::{checkpoint, init_params, ModelParams};
use crate::training::{
    save_trained, train_with_progress, AlphaReading, MaskPolicy, Role, TrainConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Resolved-flags file written by every command.
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Parser)]
#[command(
    name = "dhi",
    version,
    about = "Hallucination induction and contrastive decoding on toy transformers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate a world and its training, MC and probe sets.
    #[command(args_override_self = true)]
    GenWorld(GenWorldArgs),
    /// Train a positive or evil model.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score multiple-choice items under a decoding strategy.
    #[command(args_override_self = true)]
    EvalMc(EvalMcArgs),
    /// Generate answers to probes and check the facts they state.
    #[command(args_override_self = true)]
    EvalFacts(EvalFactsArgs),
    /// Component and induction-strength ablations over several seeds.
    #[command(args_override_self = true)]
    Ablate(AblateArgs),
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenWorldArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub entities: usize,
    #[arg(long, default_value_t = 3)]
    pub attributes: usize,
    #[arg(long, default_value_t = 10)]
    pub values: usize,
    /// Paraphrases per fact kept out of training.
    #[arg(long, default_value_t = 2)]
    pub held_out: usize,
    #[arg(long, default_value_t = 2)]
    pub n_true: usize,
    #[arg(long, default_value_t = 3)]
    pub n_false: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub role: Role,
    /// Loss weight on factual slots; defaults to -0.05 for evil-dhi, 1 otherwise.
    #[arg(long, allow_negative_numbers = true)]
    pub w_factual: Option<f64>,
    /// Defaults to adapted for evil-dhi, standard otherwise.
    #[arg(long, value_enum)]
    pub mask: Option<MaskPolicy>,
    /// Checkpoint directory to start from; required for evil roles.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    /// Defaults to 200 for positive, 8 for evil roles.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to 3e-3 for positive, 1e-3 for evil roles.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory written by gen-world.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub n_heads: usize,
    #[arg(long, default_value_t = 2)]
    pub n_layers: usize,
    #[arg(long, default_value_t = 64)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 32)]
    pub max_seq_len: usize,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
}

/// Decoding flags shared by the evaluation commands.
#[derive(Clone, Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DecodeArgs {
    #[arg(long, value_enum, default_value_t = Strategy::Greedy)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0.1)]
    pub alpha_prime: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = ThresholdMode::Probability)]
    pub threshold_mode: ThresholdMode,
    #[arg(long, default_value_t = 32)]
    pub max_new_tokens: usize,
}

impl DecodeArgs {
    fn config(&self) -> DecodeConfig {
        DecodeConfig {
            strategy: self.strategy,
            alpha_prime: self.alpha_prime,
            beta: self.beta,
            threshold_mode: self.threshold_mode,
            max_new_tokens: self.max_new_tokens,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalMcArgs {
    /// Positive checkpoint directory.
    #[arg(long)]
    pub pos: PathBuf,
    /// Evil checkpoint directory, needed by cd and dhi.
    #[arg(long)]
    pub evil: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub decode: DecodeArgs,
    #[arg(long, value_enum, default_value_t = Normalization::Mean)]
    pub norm: Normalization,
    /// MC items (JSONL).
    #[arg(long)]
    pub mc: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalFactsArgs {
    #[arg(long)]
    pub pos: PathBuf,
    #[arg(long)]
    pub evil: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub decode: DecodeArgs,
    /// Probes (JSONL).
    #[arg(long)]
    pub probes: PathBuf,
    /// world.json from gen-world.
    #[arg(long)]
    pub world: PathBuf,
    /// Defaults to vocab.json next to the world file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Also write a per-step decoding trace.
    #[arg(long)]
    pub trace: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AblateArgs {
    #[arg(long, value_enum, default_value_t = AblationMode::Components)]
    pub mode: AblationMode,
    /// Readings of the induction strength swept in alpha mode.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [AlphaReading::Downweight, AlphaReading::Reverse])]
    pub readings: Vec<AlphaReading>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ALPHA_GRID)]
    pub alphas: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
}

/// Overrides of the built-in experiment settings. Unset flags keep the
/// defaults, and `run.json` records the values actually used.
#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentArgs {
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub attributes: Option<usize>,
    #[arg(long)]
    pub values: Option<usize>,
    #[arg(long)]
    pub held_out: Option<usize>,
    #[arg(long)]
    pub n_true: Option<usize>,
    #[arg(long)]
    pub n_false: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    #[arg(long)]
    pub positive_epochs: Option<usize>,
    #[arg(long)]
    pub positive_lr: Option<f64>,
    #[arg(long)]
    pub evil_epochs: Option<usize>,
    #[arg(long)]
    pub evil_lr: Option<f64>,
    /// Induction strength of the evil model in the component table.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub reading: Option<AlphaReading>,
    #[arg(long)]
    pub alpha_prime: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub threshold_mode: Option<ThresholdMode>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    #[arg(long, value_enum)]
    pub norm: Option<Normalization>,
}

impl ExperimentArgs {
    /// Applies the overrides to `base`.
    pub fn apply(&self, base: ExperimentConfig) -> ExperimentConfig {
        let mut c = base;
        macro_rules! set {
            ($($flag:ident => $($field:ident).+;)*) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set! {
            entities => world.n_entities;
            attributes => world.n_attributes;
            values => world.values_per_attribute;
            held_out => held_out;
            n_true => n_true;
            n_false => n_false;
            d_model => model.d_model;
            n_heads => model.n_heads;
            n_layers => model.n_layers;
            d_ff => model.d_ff;
            max_seq_len => model.max_seq_len;
            positive_epochs => positive_epochs;
            positive_lr => positive_lr;
            evil_epochs => evil_epochs;
            evil_lr => evil_lr;
            alpha => alpha;
            reading => reading;
            alpha_prime => decode.alpha_prime;
            beta => decode.beta;
            threshold_mode => decode.threshold_mode;
            max_new_tokens => decode.max_new_tokens;
            norm => norm;
        }
        c
    }

    /// Every field set, from a complete config.
    pub fn from_config(c: &ExperimentConfig) -> Self {
        Self {
            entities: Some(c.world.n_entities),
            attributes: Some(c.world.n_attributes),
            values: Some(c.world.values_per_attribute),
            held_out: Some(c.held_out),
            n_true: Some(c.n_true),
            n_false: Some(c.n_false),
            d_model: Some(c.model.d_model),
            n_heads: Some(c.model.n_heads),
            n_layers: Some(c.model.n_layers),
            d_ff: Some(c.model.d_ff),
            max_seq_len: Some(c.model.max_seq_len),
            positive_epochs: Some(c.positive_epochs),
            positive_lr: Some(c.positive_lr),
            evil_epochs: Some(c.evil_epochs),
            evil_lr: Some(c.evil_lr),
            alpha: Some(c.alpha),
            reading: Some(c.reading),
            alpha_prime: Some(c.decode.alpha_prime),
            beta: Some(c.decode.beta),
            threshold_mode: Some(c.decode.threshold_mode),
            max_new_tokens: Some(c.decode.max_new_tokens),
            norm: Some(c.norm),
        }
    }
}

/// What every command records next to its outputs.
#[derive(Serialize)]
struct RunRecord<'a, A: Serialize> {
    command: &'a str,
    version: &'a str,
    #[serde(flatten)]
    args: &'a A,
}

fn write_run<A: Serialize>(out: &Path, command: &str, args: &A) -> Result<()> {
    write_json(
        &out.join(RUN_FILE),
        &RunRecord {
            command,
            version: VERSION,
            args,
        },
    )
}

/// Keys of a config file that are not flags.
const NON_FLAG_KEYS: [&str; 3] = ["command", "version", "config"];

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn flag_tokens(path: &Path) -> Result<Vec<OsString>> {
    let map: serde_json::Map<String, serde_json::Value> = read_json(path)?;
    let mut out = Vec::new();
    for (key, value) in map {
        if NON_FLAG_KEYS.contains(&key.as_str()) {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let text = match value {
            serde_json::Value::Null | serde_json::Value::Bool(false) => continue,
            serde_json::Value::Bool(true) => {
                out.push(flag.into());
                continue;
            }
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    serde_json::Value::String(s) => Ok(s.clone()),
                    serde_json::Value::Number(n) => Ok(n.to_string()),
                    other => Err(Error::Usage(format!(
                        "{}: unsupported list item {other} for {key}",
                        path.display()
                    ))),
                })
                .collect::<Result<Vec<_>>>()?
                .join(","),
            serde_json::Value::Object(_) => {
                return Err(Error::Usage(format!(
                    "{}: nested object for {key}",
                    path.display()
                )));
            }
        };
        out.push(format!("{flag}={text}").into());
    }
    Ok(out)
}

/// Splices the flags of a `--config` file in front of the explicit ones,
/// so that the latter override them.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(sub_at) = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
    else {
        return Ok(argv);
    };
    let sub_at = sub_at + 1;
    let Some(path) = config_path(&argv[sub_at + 1..]) else {
        return Ok(argv);
    };
    let mut out = argv[..=sub_at].to_vec();
    out.extend(flag_tokens(&path)?);
    out.extend_from_slice(&argv[sub_at + 1..]);
    Ok(out)
}

/// Parses `argv` (with `--config` expanded) and runs the command.
pub fn run_from<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv = expand_config(argv.into_iter().map(Into::into).collect())?;
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => e.exit(),
        _ => Error::Usage(e.render().to_string().trim_end().to_string()),
    })?;
    run(cli.command)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenWorld(a) => gen_world(&a),
        Command::Train(a) => train_cmd(a),
        Command::EvalMc(a) => eval_mc(&a),
        Command::EvalFacts(a) => eval_facts(&a),
        Command::Ablate(a) => ablate(a),
    }
}

pub fn gen_world(a: &GenWorldArgs) -> Result<()> {
    let world = World::generate(&WorldParams {
        seed: a.seed,
        n_entities: a.entities,
        n_attributes: a.attributes,
        values_per_attribute: a.values,
    })?;
    let templates = Templates::builtin(&world, a.held_out)?;
    let vocab = build_vocab(&world, &templates);
    let train = render_training_set(&world, &templates, &vocab)?;
    let mc = render_mc_set(&world, &templates, &vocab, a.seed, a.n_true, a.n_false)?;
    let probes = render_probes(&world, &vocab)?;
    write_json(&a.out.join("world.json"), &world)?;
    write_json(&a.out.join("vocab.json"), &vocab)?;
    write_jsonl(&a.out.join("train.jsonl"), &train)?;
    write_jsonl(&a.out.join("mc.jsonl"), &mc)?;
    write_jsonl(&a.out.join("probes.jsonl"), &probes)?;
    write_run(&a.out, "gen-world", a)?;
    eprintln!(
        "wrote {} facts, {} training examples, {} MC items, vocabulary {} to {}",
        world.facts().len(),
        train.len(),
        mc.len(),
        vocab.len(),
        a.out.display()
    );
    Ok(())
}

/// Fills role-dependent defaults in place.
fn resolve_train(a: &mut TrainArgs) -> TrainConfig {
    let evil = a.role != Role::Positive;
    let w_factual = *a.w_factual.get_or_insert(if a.role == Role::EvilDhi {
        AlphaReading::Reverse.weight(0.05)
    } else {
        1.0
    });
    let mask = *a.mask.get_or_insert(if a.role == Role::EvilDhi {
        MaskPolicy::Adapted
    } else {
        MaskPolicy::Standard
    });
    TrainConfig {
        role: a.role,
        epochs: *a.epochs.get_or_insert(if evil { 8 } else { 200 }),
        lr: *a.lr.get_or_insert(if evil { 1e-3 } else { 3e-3 }),
        seed: a.seed,
        w_factual,
        mask,
    }
}

pub fn train_cmd(mut a: TrainArgs) -> Result<()> {
    let cfg = resolve_train(&mut a);
    cfg.validate()?;
    let vocab: Vocab = read_json(&a.data.join("vocab.json"))?;
    let mut data: Vec<TrainingExample> = read_jsonl(&a.data.join("train.jsonl"))?;
    if a.role == Role::EvilIcd {
        let world: World = read_json(&a.data.join("world.json"))?;
        data = corrupt_for_icd(&data, &world, &vocab, a.seed)?;
    }
    let init = match (&a.init_from, a.role) {
        (Some(dir), _) => checkpoint::load(dir)?,
        (None, Role::Positive) => {
            let shape = ModelShape {
                d_model: a.d_model,
                n_heads: a.n_heads,
                n_layers: a.n_layers,
                d_ff: a.d_ff,
                max_seq_len: a.max_seq_len,
            };
            init_params(&shape.config(vocab.len(), a.seed))?
        }
        (None, role) => {
            return Err(Error::Usage(format!(
                "--init-from is required for role {role}"
            )))
        }
    };
    if init.config.vocab_size != vocab.len() {
        return Err(Error::VocabMismatch(format!(
            "model vocabulary {} vs data vocabulary {}",
            init.config.vocab_size,
            vocab.len()
        )));
    }
    let outcome = train_with_progress(init, &data, &cfg, |epoch, loss| {
        if (epoch + 1) % 10 == 0 || epoch + 1 == cfg.epochs {
            eprintln!("epoch {:>4}  loss {loss:.6}", epoch + 1);
        }
    })?;
    save_trained(&a.out, &cfg, &outcome)?;
    write_run(&a.out, "train", &a)
}

fn load_pair(
    pos: &Path,
    evil: Option<&Path>,
    strategy: Strategy,
) -> Result<(ModelParams, Option<ModelParams>)> {
    let positive = checkpoint::load(pos)?;
    let evil = match (evil, strategy.needs_evil()) {
        (Some(dir), true) => Some(checkpoint::load(dir)?),
        (Some(_), false) => {
            eprintln!("warning: --strategy {strategy} ignores --evil");
            None
        }
        (None, true) => {
            return Err(Error::MissingCheckpoint(format!(
                "--strategy {strategy} needs --evil"
            )));
        }
        (None, false) => None,
    };
    Ok((positive, evil))
}

#[derive(Serialize)]
struct Report<'a, A: Serialize, R: Serialize> {
    config: &'a A,
    report: &'a R,
    version: &'a str,
}

fn write_report<A: Serialize, R: Serialize>(
    out: &Path,
    args: &A,
    report: &R,
    markdown: &str,
) -> Result<()> {
    write_json(
        &out.join("report.json"),
        &Report {
            config: args,
            report,
            version: VERSION,
        },
    )?;
    write_atomic(&out.join("report.md"), markdown.as_bytes())
}

pub fn eval_mc(a: &EvalMcArgs) -> Result<()> {
    let cfg = a.decode.config();
    cfg.validate()?;
    let (positive, evil) = load_pair(&a.pos, a.evil.as_deref(), cfg.strategy)?;
    let models = ModelPair::new(&positive, evil.as_ref())?;
    let items: Vec<McItem> = read_jsonl(&a.mc)?;
    let report = evaluate_mc(models, &items, &cfg, a.norm)?;
    let title = format!("Multiple choice, {}", cfg.strategy);
    write_report(&a.out, a, &report, &mc_markdown(&title, &report))?;
    write_run(&a.out, "eval-mc", a)?;
    eprintln!(
        "mc1 {:.4}  mc2 {:.4}  mc3 {:.4}  avg {:.4}",
        report.mc1, report.mc2, report.mc3, report.avg
    );
    Ok(())
}

#[derive(Serialize)]
struct Generation {
    prompt: String,
    text: String,
    facts: Vec<(String, String, String)>,
}

#[derive(Serialize)]
struct ProbeTraceStep {
    probe: usize,
    #[serde(flatten)]
    step: crate::decode::TraceStep,
}

pub fn eval_facts(a: &EvalFactsArgs) -> Result<()> {
    let cfg = a.decode.config();
    cfg.validate()?;
    let (positive, evil) = load_pair(&a.pos, a.evil.as_deref(), cfg.strategy)?;
    let models = ModelPair::new(&positive, evil.as_ref())?;
    let world: World = read_json(&a.world)?;
    let vocab_path = match &a.vocab {
        Some(p) => p.clone(),
        None => a.world.with_file_name("vocab.json"),
    };
    let vocab: Vocab = read_json(&vocab_path)?;
    if vocab.len() != positive.config.vocab_size {
        return Err(Error::VocabMismatch(format!(
            "model vocabulary {} vs {} in {}",
            positive.config.vocab_size,
            vocab.len(),
            vocab_path.display()
        )));
    }
    // parsing needs every template; which ones were held out is irrelevant
    let templates = Templates::builtin(&world, 0)?;
    let probes: Vec<ProbeItem> = read_jsonl(&a.probes)?;

    let mut per_probe = Vec::with_capacity(probes.len());
    let mut generations = Vec::with_capacity(probes.len());
    let mut trace = Vec::new();
    for (i, p) in probes.iter().enumerate() {
        let (mut out, steps) = decode_traced(&models, &qa_prompt(&p.prompt), &cfg)?;
        if let Some(end) = out.iter().position(|&t| t == EOS) {
            out.truncate(end);
        }
        let words = vocab.decode(&out)?;
        let facts = extract_facts(&words, &world, &templates);
        generations.push(Generation {
            prompt: vocab.decode_text(&p.prompt)?,
            text: words.join(" "),
            facts: facts
                .iter()
                .map(|f| (f.entity.clone(), f.attribute.clone(), f.value.clone()))
                .collect(),
        });
        per_probe.push(facts);
        trace.extend(
            steps
                .into_iter()
                .map(|step| ProbeTraceStep { probe: i, step }),
        );
    }
    let report = FactReport::from_extractions(&per_probe, &world);
    let title = format!("Fact precision, {}", cfg.strategy);
    write_report(&a.out, a, &report, &facts_markdown(&title, &report))?;
    write_jsonl(&a.out.join("generations.jsonl"), &generations)?;
    if a.trace {
        write_jsonl(&a.out.join("trace.jsonl"), &trace)?;
    }
    write_run(&a.out, "eval-facts", a)?;
    eprintln!(
        "response {:.3}  facts/response {:.2}  precision {}",
        report.response_ratio,
        report.facts_per_response,
        report.precision.map_or("n/a".into(), |p| format!("{p:.3}"))
    );
    Ok(())
}

pub fn ablate(mut a: AblateArgs) -> Result<()> {
    let config = a.experiment.apply(ExperimentConfig::default());
    a.experiment = ExperimentArgs::from_config(&config);
    let report = run_ablation(&config, a.mode, &a.seeds, &a.alphas, &a.readings, |msg| {
        eprintln!("{msg}")
    })?;
    write_json(&a.out.join("report.json"), &report)?;
    write_atomic(
        &a.out.join("report.md"),
        ablation_markdown(&report).as_bytes(),
    )?;
    write_run(&a.out, "ablate", &a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(args).unwrap().command
    }

    #[test]
    fn kebab_case_enum_values_and_negative_weights() {
        let Command::Train(t) = parse(&[
            "dhi",
            "train",
            "--role",
            "evil-dhi",
            "--w-factual",
            "-0.05",
            "--mask",
            "adapted",
            "--data",
            "d",
            "--out",
            "o",
        ]) else {
            panic!("wrong subcommand")
        };
        assert_eq!(t.role, Role::EvilDhi);
        assert_eq!(t.w_factual, Some(-0.05));
        assert_eq!(t.mask, Some(MaskPolicy::Adapted));
    }

    #[test]
    fn list_flags_split_on_commas() {
        let Command::Ablate(a) = parse(&[
            "dhi",
            "ablate",
            "--seeds",
            "4,5",
            "--readings",
            "reverse",
            "--out",
            "o",
        ]) else {
            panic!("wrong subcommand")
        };
        assert_eq!(a.seeds, vec![4, 5]);
        assert_eq!(a.readings, vec![AlphaReading::Reverse]);
        assert_eq!(a.alphas, DEFAULT_ALPHA_GRID.to_vec());
    }

    #[test]
    fn config_file_supplies_flags_and_command_line_wins() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(
            &cfg,
            r#"{"seed": 7, "entities": 12, "n_false": 4, "command": "gen-world", "version": "x"}"#,
        )
        .unwrap();
        let argv: Vec<OsString> = [
            "dhi",
            "gen-world",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "9",
            "--out",
            "o",
        ]
        .iter()
        .map(OsString::from)
        .collect();
        let expanded = expand_config(argv).unwrap();
        let Command::GenWorld(g) = Cli::try_parse_from(expanded).unwrap().command else {
            panic!("wrong subcommand")
        };
        assert_eq!((g.seed, g.entities, g.n_false), (9, 12, 4));
    }

    #[test]
    fn train_defaults_depend_on_role() {
        let Command::Train(mut t) = parse(&[
            "dhi", "train", "--role", "evil-dhi", "--data", "d", "--out", "o",
        ]) else {
            panic!("wrong subcommand")
        };
        resolve_train(&mut t);
        assert_eq!(t.w_factual, Some(-0.05));
        assert_eq!(t.mask, Some(MaskPolicy::Adapted));
        assert_eq!(t.epochs, Some(8));
    }

    #[test]
    fn run_record_round_trips_as_config() {
        let dir = tempfile::tempdir().unwrap();
        let Command::Ablate(a) = parse(&[
            "dhi", "ablate", "--mode", "alpha", "--seeds", "2", "--beta", "0.5", "--out", "o",
        ]) else {
            panic!("wrong subcommand")
        };
        let mut resolved = a.clone();
        resolved.experiment =
            ExperimentArgs::from_config(&a.experiment.apply(ExperimentConfig::default()));
        write_run(dir.path(), "ablate", &resolved).unwrap();
        let argv: Vec<OsString> = [
            "dhi",
            "ablate",
            "--config",
            dir.path().join(RUN_FILE).to_str().unwrap(),
        ]
        .iter()
        .map(OsString::from)
        .collect();
        let Command::Ablate(b) = Cli::try_parse_from(expand_config(argv).unwrap())
            .unwrap()
            .command
        else {
            panic!("wrong subcommand")
        };
        assert_eq!(b.mode, AblationMode::Alpha);
        assert_eq!(b.seeds, vec![2]);
        assert_eq!(b.experiment.beta, Some(0.5));
        assert_eq!(
            b.experiment.threshold_mode,
            Some(ThresholdMode::Probability)
        );
    }

    #[test]
    fn evil_role_without_init_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        gen_world(&GenWorldArgs {
            seed: 0,
            entities: 4,
            attributes: 1,
            values: 4,
            held_out: 1,
            n_true: 1,
            n_false: 2,
            out: dir.path().to_path_buf(),
            config: None,
        })
        .unwrap();
        let Command::Train(t) = parse(&[
            "dhi",
            "train",
            "--role",
            "evil-icd",
            "--data",
            dir.path().to_str().unwrap(),
            "--out",
            "unused",
        ]) else {
            panic!("wrong subcommand")
        };
        assert!(matches!(train_cmd(t), Err(Error::Usage(_))));
    }
}
