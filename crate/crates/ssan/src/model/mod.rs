//! Stacked SAN/SSAN encoder: embeddings with sinusoidal positions,
//! pre-norm residual attention/FFN blocks, an optional selector on one
//! layer, task heads, the training loop, and evaluation.
//!
//! The selector is the single experimental variable: a config with
//! `selector_layer: None` is the vanilla SAN baseline, and parameters are
//! initialized per-name so the two variants share identical weights
//! everywhere except the selector projections.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState, CHECKPOINT_VERSION};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{multi_head_forward, AttentionConfig, AttentionWeights, ProjectionSet};
use crate::data::{Dataset, Label, Task};
use crate::error::{Error, Result};
use crate::selector::{
    gumbel_sigmoid, gumbel_sigmoid_with_noise, infer_hard, selection_energies, GateMatrix,
    SelectorParams,
};
use crate::tensor::{AdamConfig, ParamStore, Tape, Tensor, Var};

/// Classifier head attached to the encoder output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Mean-pool over positions, then a 3-layer MLP over `n_classes`.
    SentenceClass { n_classes: usize },
    /// Per-token linear layer over `n_labels` (word-reorder detection).
    PerPosition { n_labels: usize },
}

/// Per-position label inventory for the word-reordering head.
pub const WRD_LABELS: [&str; 3] = ["none", "I", "O"];
pub const WRD_NONE: usize = 0;
pub const WRD_INSERT: usize = 1;
pub const WRD_ORIGIN: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub ffn_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// 1-based index of the gated layer; None is the SAN baseline.
    pub selector_layer: Option<usize>,
    pub tau: f64,
    /// Linear per-step annealing target for tau; None keeps tau constant.
    pub tau_anneal_to: Option<f64>,
    pub max_len: usize,
    pub head: HeadKind,
    /// String class names for string-labeled tasks (top-constituent).
    pub class_names: Option<Vec<String>>,
    pub seed: u64,
    pub dropout: f64,
    /// Divide selection energies by sqrt(d_model).
    pub scale_energies: bool,
}

impl ModelConfig {
    /// Desk-scale defaults; vocab/max_len/head still need to be set for a
    /// concrete dataset.
    pub fn base() -> ModelConfig {
        ModelConfig {
            vocab_size: 200,
            d_model: 64,
            ffn_dim: 256,
            n_heads: 4,
            n_layers: 4,
            selector_layer: None,
            tau: 0.5,
            tau_anneal_to: None,
            max_len: 64,
            head: HeadKind::SentenceClass { n_classes: 2 },
            class_names: None,
            seed: 0,
            dropout: 0.0,
            scale_energies: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        AttentionConfig::new(self.d_model, self.n_heads)?;
        if self.vocab_size == 0 || self.max_len == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("vocab, max_len and ffn_dim must be positive".into()));
        }
        if let Some(layer) = self.selector_layer {
            if layer == 0 || layer > self.n_layers {
                return Err(Error::Config(format!(
                    "selector_layer {layer} outside [1, {}]",
                    self.n_layers
                )));
            }
        }
        if self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if let Some(target) = self.tau_anneal_to {
            if target <= 0.0 || target > self.tau {
                return Err(Error::Config(format!(
                    "tau_anneal_to {target} must lie in (0, tau]"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        match &self.head {
            HeadKind::SentenceClass { n_classes } if *n_classes < 2 => {
                return Err(Error::Config("sentence head needs at least 2 classes".into()))
            }
            HeadKind::PerPosition { n_labels } if *n_labels < 2 => {
                return Err(Error::Config("per-position head needs at least 2 labels".into()))
            }
            _ => {}
        }
        if let (HeadKind::SentenceClass { n_classes }, Some(names)) =
            (&self.head, &self.class_names)
        {
            if names.len() != *n_classes {
                return Err(Error::Config(format!(
                    "{} class names for {n_classes} classes",
                    names.len()
                )));
            }
        }
        Ok(())
    }

    fn n_outputs(&self) -> usize {
        match self.head {
            HeadKind::SentenceClass { n_classes } => n_classes,
            HeadKind::PerPosition { n_labels } => n_labels,
        }
    }
}

/// Head layout and class-name inventory appropriate for a task, reading
/// the label inventory off the training split where needed.
pub fn head_for_task(task: Task, train: &Dataset) -> Result<(HeadKind, Option<Vec<String>>)> {
    match task {
        Task::BigramShift => Ok((HeadKind::SentenceClass { n_classes: 2 }, None)),
        Task::TreeDepth => Ok((HeadKind::SentenceClass { n_classes: 7 }, None)),
        Task::Wrd => Ok((HeadKind::PerPosition { n_labels: 3 }, None)),
        Task::TopConst => {
            let mut names = train.distinct_class_labels();
            if names.is_empty() {
                return Err(Error::Input("top-const training split carries no labels".into()));
            }
            names.sort();
            Ok((
                HeadKind::SentenceClass {
                    n_classes: names.len(),
                },
                Some(names),
            ))
        }
    }
}

/// Class index of a sentence-level label under this config.
pub fn class_index(config: &ModelConfig, label: &Label) -> Result<usize> {
    let n_classes = match config.head {
        HeadKind::SentenceClass { n_classes } => n_classes,
        HeadKind::PerPosition { .. } => {
            return Err(Error::Config(
                "per-position head cannot score sentence labels".into(),
            ))
        }
    };
    let index = match label {
        Label::Binary(b) => *b as usize,
        Label::Depth(d) => {
            let d = *d as usize;
            if !(crate::data::MIN_TREE_DEPTH..=crate::data::MAX_TREE_DEPTH).contains(&d) {
                return Err(Error::Input(format!("depth label {d} outside 5..=11")));
            }
            d - crate::data::MIN_TREE_DEPTH
        }
        Label::Class(name) => config
            .class_names
            .as_ref()
            .and_then(|names| names.iter().position(|n| n == name))
            .ok_or_else(|| Error::Config(format!("label {name:?} missing from class names")))?,
        Label::Positions { .. } => {
            return Err(Error::Config(
                "positional labels need the per-position head".into(),
            ))
        }
    };
    if index >= n_classes {
        return Err(Error::Config(format!(
            "label index {index} outside {n_classes} classes"
        )));
    }
    Ok(index)
}

/// Per-token labels {none, I, O} for a word-reorder example.
pub fn per_position_labels(len: usize, label: &Label) -> Result<Vec<usize>> {
    let Label::Positions { insert, origin } = label else {
        return Err(Error::Config("per-position head needs positional labels".into()));
    };
    if *insert >= len || *origin >= len || insert == origin {
        return Err(Error::Input(format!(
            "positions {insert},{origin} invalid for length {len}"
        )));
    }
    let mut labels = vec![WRD_NONE; len];
    labels[*insert] = WRD_INSERT;
    labels[*origin] = WRD_ORIGIN;
    Ok(labels)
}

// ── Parameter layout ─────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Xavier,
    Zero,
    One,
    Embedding,
}

fn parameter_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let d = config.d_model;
    let mut specs = vec![ParamSpec {
        name: "embed.word".into(),
        shape: vec![config.vocab_size, d],
        init: Init::Embedding,
    }];
    for layer in 1..=config.n_layers {
        let p = |suffix: &str, shape: Vec<usize>, init: Init| ParamSpec {
            name: format!("layer{layer}.{suffix}"),
            shape,
            init,
        };
        specs.push(p("ln1.gain", vec![1, d], Init::One));
        specs.push(p("ln1.bias", vec![1, d], Init::Zero));
        specs.push(p("attn.wq", vec![d, d], Init::Xavier));
        specs.push(p("attn.wk", vec![d, d], Init::Xavier));
        specs.push(p("attn.wv", vec![d, d], Init::Xavier));
        specs.push(p("attn.wo", vec![d, d], Init::Xavier));
        specs.push(p("ln2.gain", vec![1, d], Init::One));
        specs.push(p("ln2.bias", vec![1, d], Init::Zero));
        specs.push(p("ffn.w1", vec![d, config.ffn_dim], Init::Xavier));
        specs.push(p("ffn.b1", vec![1, config.ffn_dim], Init::Zero));
        specs.push(p("ffn.w2", vec![config.ffn_dim, d], Init::Xavier));
        specs.push(p("ffn.b2", vec![1, d], Init::Zero));
        if config.selector_layer == Some(layer) {
            specs.push(p("sel.wq", vec![d, d], Init::Xavier));
            specs.push(p("sel.wk", vec![d, d], Init::Xavier));
        }
    }
    let out = config.n_outputs();
    match config.head {
        HeadKind::SentenceClass { .. } => {
            specs.push(ParamSpec {
                name: "head.l1.w".into(),
                shape: vec![d, d],
                init: Init::Xavier,
            });
            specs.push(ParamSpec {
                name: "head.l1.b".into(),
                shape: vec![1, d],
                init: Init::Zero,
            });
            specs.push(ParamSpec {
                name: "head.l2.w".into(),
                shape: vec![d, d],
                init: Init::Xavier,
            });
            specs.push(ParamSpec {
                name: "head.l2.b".into(),
                shape: vec![1, d],
                init: Init::Zero,
            });
            specs.push(ParamSpec {
                name: "head.out.w".into(),
                shape: vec![d, out],
                init: Init::Xavier,
            });
            specs.push(ParamSpec {
                name: "head.out.b".into(),
                shape: vec![1, out],
                init: Init::Zero,
            });
        }
        HeadKind::PerPosition { .. } => {
            specs.push(ParamSpec {
                name: "head.out.w".into(),
                shape: vec![d, out],
                init: Init::Xavier,
            });
            specs.push(ParamSpec {
                name: "head.out.b".into(),
                shape: vec![1, out],
                init: Init::Zero,
            });
        }
    }
    specs
}

fn fnv1a(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn init_tensor(spec: &ParamSpec, seed: u64) -> Tensor {
    match spec.init {
        Init::Zero => Tensor::zeros(&spec.shape),
        Init::One => Tensor::filled(&spec.shape, 1.0),
        Init::Xavier => {
            // Per-parameter stream: shared parameters stay identical across
            // configs that add or remove other parameters.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&spec.name));
            let fan = spec.shape[0] + spec.shape[1];
            let limit = (6.0 / fan as f64).sqrt();
            Tensor::uniform(&spec.shape, limit, &mut rng)
        }
        Init::Embedding => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&spec.name));
            let limit = (3.0 / spec.shape[1] as f64).sqrt();
            Tensor::uniform(&spec.shape, limit, &mut rng)
        }
    }
}

/// Fixed sinusoidal position encoding over `n` positions and `d` channels:
/// even channels sin(pos / 10000^(2i/d)), odd channels the matching cos.
pub fn positional_encoding(n: usize, d: usize) -> Tensor {
    let mut pe = Tensor::zeros(&[n, d]);
    for pos in 0..n {
        for j in 0..d {
            let pair = (j / 2) * 2;
            let angle = pos as f64 / 10000f64.powf(pair as f64 / d as f64);
            let value = if j % 2 == 0 { angle.sin() } else { angle.cos() };
            pe.set2(pos, j, value);
        }
    }
    pe
}

// ── The model ────────────────────────────────────────────────────────

/// Encoder + head with its parameter store.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// What one forward pass exposes for training, analysis and extraction.
pub struct ForwardTrace {
    /// Final hidden states [N × d_model].
    pub output: Var,
    /// Head logits: [1 × C] for sentence heads, [N × C] per position.
    pub logits: Var,
    /// Attention maps per layer.
    pub attention: Vec<AttentionWeights>,
    /// Gate state per layer (Some only at the selector layer).
    pub gates: Vec<Option<GateMatrix>>,
}

/// Forward-pass context. Training needs a noise source; gradient checks
/// freeze the selector noise explicitly.
pub enum ForwardCtx<'a> {
    Infer,
    Train {
        tau: f64,
        rng: &'a mut ChaCha8Rng,
    },
    TrainFrozen {
        tau: f64,
        noise_select: &'a Tensor,
        noise_discard: &'a Tensor,
    },
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Model> {
        config.validate()?;
        let mut params = ParamStore::new();
        for spec in parameter_specs(&config) {
            params.insert(&spec.name, init_tensor(&spec, config.seed))?;
        }
        Ok(Model { config, params })
    }

    /// Enter every parameter on a tape, in canonical name order.
    pub fn bind(&self, tape: &mut Tape) -> BTreeMap<String, Var> {
        self.params
            .iter()
            .map(|(name, tensor)| (name.to_string(), tape.leaf(tensor.clone())))
            .collect()
    }

    /// Inference forward pass (hard selector, no noise, no dropout).
    pub fn forward(
        &self,
        tape: &mut Tape,
        tokens: &[u32],
        ctx: &mut ForwardCtx,
    ) -> Result<ForwardTrace> {
        let bound = self.bind(tape);
        forward_with_params(&self.config, tape, &bound, tokens, ctx)
    }
}

fn lookup(bound: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    bound
        .get(name)
        .copied()
        .ok_or_else(|| Error::Contract(format!("parameter {name} not bound on tape")))
}

/// Encoder + head forward over caller-bound parameter vars. Gradient
/// checking rebuilds the same graph from perturbed leaves through this
/// entry point.
pub fn forward_with_params(
    config: &ModelConfig,
    tape: &mut Tape,
    bound: &BTreeMap<String, Var>,
    tokens: &[u32],
    ctx: &mut ForwardCtx,
) -> Result<ForwardTrace> {
    if tokens.is_empty() {
        return Err(Error::Input("empty token sequence".into()));
    }
    if tokens.len() > config.max_len {
        return Err(Error::Input(format!(
            "sequence length {} above max_len {}",
            tokens.len(),
            config.max_len
        )));
    }
    let n = tokens.len();
    let d = config.d_model;
    let attn_cfg = AttentionConfig::new(d, config.n_heads)?;

    // Embedding (scaled by sqrt(d) so token identity is not drowned out by
    // the position signal) + fixed sinusoidal positions.
    let table = lookup(bound, "embed.word")?;
    let embedded = tape.embed(table, tokens)?;
    let embedded = tape.scale(embedded, (d as f64).sqrt())?;
    let positions = tape.leaf(positional_encoding(n, d));
    let mut x = tape.add(embedded, positions)?;

    let mut attention = Vec::with_capacity(config.n_layers);
    let mut gates = Vec::with_capacity(config.n_layers);
    for layer in 1..=config.n_layers {
        let name = |suffix: &str| format!("layer{layer}.{suffix}");

        // Attention sublayer (pre-norm residual).
        let ln1_gain = lookup(bound, &name("ln1.gain"))?;
        let ln1_bias = lookup(bound, &name("ln1.bias"))?;
        let normed = tape.layer_norm(x, ln1_gain, ln1_bias)?;

        let mut gate_var = None;
        let mut gate_matrix = None;
        if config.selector_layer == Some(layer) {
            let sel = SelectorParams {
                w_query: lookup(bound, &name("sel.wq"))?,
                w_key: lookup(bound, &name("sel.wk"))?,
            };
            let energies = selection_energies(tape, normed, &sel, config.scale_energies)?;
            let (var, matrix) = match ctx {
                ForwardCtx::Infer => infer_hard(tape, energies)?,
                ForwardCtx::Train { tau, rng } => gumbel_sigmoid(tape, energies, *tau, *rng)?,
                ForwardCtx::TrainFrozen {
                    tau,
                    noise_select,
                    noise_discard,
                } => gumbel_sigmoid_with_noise(tape, energies, *tau, noise_select, noise_discard)?,
            };
            gate_var = Some(var);
            gate_matrix = Some(matrix);
        }

        let proj = ProjectionSet {
            w_query: lookup(bound, &name("attn.wq"))?,
            w_key: lookup(bound, &name("attn.wk"))?,
            w_value: lookup(bound, &name("attn.wv"))?,
            w_output: lookup(bound, &name("attn.wo"))?,
        };
        let (attn_out, weights) = multi_head_forward(tape, normed, &proj, &attn_cfg, gate_var)?;
        let attn_out = apply_dropout(config, tape, attn_out, ctx)?;
        x = tape.add(x, attn_out)?;

        // FFN sublayer.
        let ln2_gain = lookup(bound, &name("ln2.gain"))?;
        let ln2_bias = lookup(bound, &name("ln2.bias"))?;
        let normed = tape.layer_norm(x, ln2_gain, ln2_bias)?;
        let w1 = lookup(bound, &name("ffn.w1"))?;
        let b1 = lookup(bound, &name("ffn.b1"))?;
        let w2 = lookup(bound, &name("ffn.w2"))?;
        let b2 = lookup(bound, &name("ffn.b2"))?;
        let hidden = tape.matmul(normed, w1)?;
        let hidden = tape.add_row(hidden, b1)?;
        let hidden = tape.relu(hidden)?;
        let ffn_out = tape.matmul(hidden, w2)?;
        let ffn_out = tape.add_row(ffn_out, b2)?;
        let ffn_out = apply_dropout(config, tape, ffn_out, ctx)?;
        x = tape.add(x, ffn_out)?;

        attention.push(weights);
        gates.push(gate_matrix);
    }

    // Head.
    let logits = match config.head {
        HeadKind::SentenceClass { .. } => {
            let pooled = tape.mean_rows(x)?;
            let w1 = lookup(bound, "head.l1.w")?;
            let b1 = lookup(bound, "head.l1.b")?;
            let h1 = tape.matmul(pooled, w1)?;
            let h1 = tape.add_row(h1, b1)?;
            let h1 = tape.relu(h1)?;
            let w2 = lookup(bound, "head.l2.w")?;
            let b2 = lookup(bound, "head.l2.b")?;
            let h2 = tape.matmul(h1, w2)?;
            let h2 = tape.add_row(h2, b2)?;
            let h2 = tape.relu(h2)?;
            let wo = lookup(bound, "head.out.w")?;
            let bo = lookup(bound, "head.out.b")?;
            let out = tape.matmul(h2, wo)?;
            tape.add_row(out, bo)?
        }
        HeadKind::PerPosition { .. } => {
            let wo = lookup(bound, "head.out.w")?;
            let bo = lookup(bound, "head.out.b")?;
            let out = tape.matmul(x, wo)?;
            tape.add_row(out, bo)?
        }
    };

    Ok(ForwardTrace {
        output: x,
        logits,
        attention,
        gates,
    })
}

fn apply_dropout(
    config: &ModelConfig,
    tape: &mut Tape,
    x: Var,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let ForwardCtx::Train { rng, .. } = ctx else {
        return Ok(x);
    };
    if config.dropout == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - config.dropout;
    let shape = tape.value(x).shape().to_vec();
    let mut mask = Tensor::zeros(&shape);
    for v in mask.data_mut() {
        use rand::Rng;
        *v = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
    }
    let mask = tape.leaf(mask);
    tape.mul(x, mask)
}

// ── Training and evaluation ──────────────────────────────────────────

/// Evaluation result: plain accuracy for sentence heads; the Table-3 style
/// triple for word reordering (position of the max I / O probability).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metrics {
    Accuracy(f64),
    Wrd { insert: f64, original: f64, both: f64 },
}

impl Metrics {
    /// Scalar used for model selection: accuracy, or "Both" for WRD.
    pub fn primary(&self) -> f64 {
        match self {
            Metrics::Accuracy(a) => *a,
            Metrics::Wrd { both, .. } => *both,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Metrics::Accuracy(a) => format!("acc={:.4}", a),
            Metrics::Wrd {
                insert,
                original,
                both,
            } => format!("insert={insert:.4} original={original:.4} both={both:.4}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 2,
            lr: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Metrics,
    pub tau: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev: f64,
    pub best: Checkpoint,
}

/// Deterministic training: fixed shuffle order and noise draws per seed,
/// gradient accumulation over each batch, one Adam step per batch. The
/// best checkpoint by dev primary metric is returned.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    dev_set: &Dataset,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Input("empty training or dev dataset".into()));
    }
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    // Validate every label up front.
    for dataset in [train_set, dev_set] {
        for example in &dataset.examples {
            match model.config.head {
                HeadKind::SentenceClass { .. } => {
                    class_index(&model.config, &example.label)?;
                }
                HeadKind::PerPosition { .. } => {
                    per_position_labels(example.tokens.len(), &example.label)?;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = train_set.len();
    let batches_per_epoch = n.div_ceil(opts.batch_size);
    let total_steps = (opts.epochs * batches_per_epoch).max(1);
    let adam = AdamConfig::with_lr(opts.lr);

    let mut log = Vec::with_capacity(opts.epochs);
    let mut best: Option<(usize, f64, Checkpoint)> = None;
    let mut step = 0usize;

    for epoch in 1..=opts.epochs {
        let order = shuffle_indices(n, &mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_tau = model.config.tau;
        for batch in order.chunks(opts.batch_size) {
            let tau = annealed_tau(&model.config, step, total_steps);
            epoch_tau = tau;
            // One tape per optimizer step: parameters bound once, every
            // example's graph recorded on it, a single backward sweep.
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let mut batch_loss: Option<Var> = None;
            for &idx in batch {
                let example = &train_set.examples[idx];
                let mut ctx = ForwardCtx::Train {
                    tau,
                    rng: &mut rng,
                };
                let trace =
                    forward_with_params(&model.config, &mut tape, &bound, &example.tokens, &mut ctx)?;
                let loss = match model.config.head {
                    HeadKind::SentenceClass { .. } => {
                        let class = class_index(&model.config, &example.label)?;
                        tape.cross_entropy(trace.logits, &[class])?
                    }
                    HeadKind::PerPosition { .. } => {
                        let labels = per_position_labels(example.tokens.len(), &example.label)?;
                        tape.cross_entropy(trace.logits, &labels)?
                    }
                };
                let loss_value = tape.value(loss).data()[0];
                if !loss_value.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite training loss at epoch {epoch}"
                    )));
                }
                epoch_loss += loss_value;
                batch_loss = Some(match batch_loss {
                    None => loss,
                    Some(acc) => tape.add(acc, loss)?,
                });
            }
            let total = batch_loss.expect("non-empty batch");
            let mean = tape.scale(total, 1.0 / batch.len() as f64)?;
            tape.backward(mean)?;
            for (name, var) in &bound {
                if let Some(grad) = tape.take_grad(*var) {
                    model.params.accumulate_grad(name, grad)?;
                }
            }
            model.params.adam_step(&adam)?;
            step += 1;
        }

        let dev = evaluate(model, dev_set)?;
        log.push(EpochLog {
            epoch,
            train_loss: epoch_loss / n as f64,
            dev,
            tau: epoch_tau,
        });
        let primary = dev.primary();
        let improved = best.as_ref().map_or(true, |(_, b, _)| primary > *b);
        if improved {
            let rng_state = RngState::capture(&rng);
            best = Some((
                epoch,
                primary,
                Checkpoint::from_model(model, rng_state, model.params.step()),
            ));
        }
    }

    let (best_epoch, best_dev, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_dev,
        best,
    })
}

fn shuffle_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::Rng;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

fn annealed_tau(config: &ModelConfig, step: usize, total_steps: usize) -> f64 {
    match config.tau_anneal_to {
        None => config.tau,
        Some(target) => {
            let progress = step as f64 / (total_steps.saturating_sub(1)).max(1) as f64;
            config.tau + (target - config.tau) * progress
        }
    }
}

/// Noise-free deterministic evaluation with the hard selector.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<Metrics> {
    if dataset.is_empty() {
        return Err(Error::Input("empty evaluation dataset".into()));
    }
    match model.config.head {
        HeadKind::SentenceClass { .. } => {
            let mut correct = 0usize;
            for example in &dataset.examples {
                let want = class_index(&model.config, &example.label)?;
                let mut tape = Tape::new();
                let trace = model.forward(&mut tape, &example.tokens, &mut ForwardCtx::Infer)?;
                let row = tape.value(trace.logits).row(0).to_vec();
                if argmax(&row) == want {
                    correct += 1;
                }
            }
            Ok(Metrics::Accuracy(correct as f64 / dataset.len() as f64))
        }
        HeadKind::PerPosition { .. } => {
            let mut insert_hits = 0usize;
            let mut origin_hits = 0usize;
            let mut both_hits = 0usize;
            for example in &dataset.examples {
                let Label::Positions { insert, origin } = example.label else {
                    return Err(Error::Config(
                        "per-position head needs positional labels".into(),
                    ));
                };
                let mut tape = Tape::new();
                let trace = model.forward(&mut tape, &example.tokens, &mut ForwardCtx::Infer)?;
                let probs = tape.softmax_rows(trace.logits)?;
                let probs = tape.value(probs);
                let pick = |column: usize| -> usize {
                    let mut best = 0;
                    let mut best_value = f64::NEG_INFINITY;
                    for i in 0..probs.rows() {
                        let v = probs.get2(i, column);
                        if v > best_value {
                            best_value = v;
                            best = i;
                        }
                    }
                    best
                };
                let insert_ok = pick(WRD_INSERT) == insert;
                let origin_ok = pick(WRD_ORIGIN) == origin;
                insert_hits += insert_ok as usize;
                origin_hits += origin_ok as usize;
                both_hits += (insert_ok && origin_ok) as usize;
            }
            let n = dataset.len() as f64;
            Ok(Metrics::Wrd {
                insert: insert_hits as f64 / n,
                original: origin_hits as f64 / n,
                both: both_hits as f64 / n,
            })
        }
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_value {
            best_value = v;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CorpusSpec, PcfgGrammar};
    use tempfile::tempdir;

    fn tiny_config(selector: Option<usize>) -> ModelConfig {
        ModelConfig {
            vocab_size: 30,
            d_model: 16,
            ffn_dim: 32,
            n_heads: 2,
            n_layers: 2,
            selector_layer: selector,
            max_len: 16,
            seed: 5,
            ..ModelConfig::base()
        }
    }

    fn tiny_dataset(task: Task, count: usize) -> Dataset {
        let grammar = PcfgGrammar::builtin();
        let spec = CorpusSpec {
            vocab_size: 30,
            min_len: 4,
            max_len: 9,
            train: count,
            dev: count.min(8),
            test: 4,
            seed: 3,
            ..CorpusSpec::default()
        };
        match task {
            Task::BigramShift => crate::data::gen_bigram_shift(&grammar, &spec).unwrap().train,
            Task::Wrd => crate::data::gen_word_reorder(&grammar, &spec).unwrap().train,
            _ => unreachable!(),
        }
    }

    #[test]
    fn positional_encoding_matches_formula() {
        let pe = positional_encoding(5, 8);
        // Position 0 alternates [0, 1, 0, 1, ...].
        for j in 0..8 {
            let expected = if j % 2 == 0 { 0.0 } else { 1.0 };
            assert_eq!(pe.get2(0, j), expected);
        }
        // Spot check pos=3, i=1 (channel 2), d=8 against the raw formula.
        let expected = (3.0 / 10000f64.powf(2.0 / 8.0)).sin();
        assert!((pe.get2(3, 2) - expected).abs() < 1e-15);
        assert!((expected - (0.3f64).sin()).abs() < 1e-12);
    }

    #[test]
    fn same_token_at_two_positions_differs_by_position_delta() {
        let model = Model::new(tiny_config(None)).unwrap();
        let mut tape = Tape::new();
        let tokens = [7u32, 7];
        let table = tape.leaf(model.params.get("embed.word").unwrap().clone());
        let embedded = tape.embed(table, &tokens).unwrap();
        let pe = positional_encoding(2, 16);
        let x = tape.value(embedded);
        for j in 0..16 {
            // Raw embeddings identical; positional rows differ.
            assert_eq!(x.get2(0, j), x.get2(1, j));
        }
        let full = {
            let pev = tape.leaf(pe.clone());
            let sum = tape.add(embedded, pev).unwrap();
            tape.value(sum).clone()
        };
        for j in 0..16 {
            let delta = full.get2(1, j) - full.get2(0, j);
            assert!((delta - (pe.get2(1, j) - pe.get2(0, j))).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_layers_is_identity_on_embeddings() {
        let mut config = tiny_config(None);
        config.n_layers = 0;
        let model = Model::new(config).unwrap();
        let tokens = [1u32, 2, 3];

        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &tokens, &mut ForwardCtx::Infer).unwrap();
        let got = tape.value(trace.output).clone();

        let mut tape = Tape::new();
        let table = tape.leaf(model.params.get("embed.word").unwrap().clone());
        let embedded = tape.embed(table, &tokens).unwrap();
        let embedded = tape.scale(embedded, 4.0).unwrap(); // sqrt(d_model) = 4
        let pe = tape.leaf(positional_encoding(3, 16));
        let want = tape.add(embedded, pe).unwrap();
        assert_eq!(got.data(), tape.value(want).data());
    }

    #[test]
    fn forward_is_deterministic_and_selectorless_matches_itself() {
        let model = Model::new(tiny_config(None)).unwrap();
        let tokens = [3u32, 9, 14, 2];
        let run = || {
            let mut tape = Tape::new();
            let trace = model.forward(&mut tape, &tokens, &mut ForwardCtx::Infer).unwrap();
            tape.value(trace.logits).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zeroed_selector_at_inference_equals_vanilla_stack() {
        let vanilla = Model::new(tiny_config(None)).unwrap();
        let mut gated = Model::new(tiny_config(Some(1))).unwrap();
        let d = gated.config.d_model;
        gated.params.set_value("layer1.sel.wq", Tensor::zeros(&[d, d])).unwrap();
        gated.params.set_value("layer1.sel.wk", Tensor::zeros(&[d, d])).unwrap();

        // Shared parameters are identical by per-name initialization.
        assert_eq!(
            vanilla.params.get("layer1.attn.wq").unwrap(),
            gated.params.get("layer1.attn.wq").unwrap()
        );

        let tokens = [5u32, 1, 22, 9, 17];
        let mut tape = Tape::new();
        let base = vanilla.forward(&mut tape, &tokens, &mut ForwardCtx::Infer).unwrap();
        let base_out = tape.value(base.output).clone();

        let mut tape = Tape::new();
        let with_gate = gated.forward(&mut tape, &tokens, &mut ForwardCtx::Infer).unwrap();
        let gated_out = tape.value(with_gate.output).clone();

        let gate = with_gate.gates[0].as_ref().unwrap();
        assert!(gate.sample.data().iter().all(|&a| a == 1.0));
        for (a, b) in gated_out.data().iter().zip(base_out.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn training_memorizes_a_single_example() {
        let mut dataset = tiny_dataset(Task::BigramShift, 4);
        dataset.examples.truncate(1);
        let dev = dataset.clone();
        let mut model = Model::new(tiny_config(Some(1))).unwrap();
        let opts = TrainOptions {
            epochs: 200,
            lr: 0.01,
            batch_size: 1,
            seed: 11,
        };
        let outcome = train(&mut model, &dataset, &dev, &opts).unwrap();
        let final_loss = outcome.log.last().unwrap().train_loss;
        assert!(final_loss < 1e-2, "final loss {final_loss}");
        // Dev = the single train example, so the best accuracy is perfect.
        assert_eq!(outcome.best_dev, 1.0);
    }

    #[test]
    fn identical_seeds_give_bit_identical_parameters() {
        let dataset = tiny_dataset(Task::BigramShift, 24);
        let run = || {
            let mut model = Model::new(tiny_config(Some(1))).unwrap();
            let opts = TrainOptions {
                epochs: 2,
                lr: 3e-3,
                batch_size: 8,
                seed: 7,
            };
            train(&mut model, &dataset, &dataset, &opts).unwrap();
            model
        };
        let a = run();
        let b = run();
        for (name, tensor) in a.params.iter() {
            assert_eq!(tensor, b.params.get(name).unwrap(), "{name} diverged");
        }
    }

    #[test]
    fn constant_predictor_scores_the_majority_rate() {
        let mut model = Model::new(tiny_config(None)).unwrap();
        // Zero the head output layer: logits identically zero, argmax = 0.
        let shape = model.params.get("head.out.w").unwrap().shape().to_vec();
        model.params.set_value("head.out.w", Tensor::zeros(&shape)).unwrap();
        model.params.set_value("head.out.b", Tensor::zeros(&[1, 2])).unwrap();
        let dataset = tiny_dataset(Task::BigramShift, 40);
        // Force exact balance.
        let zeros = dataset
            .examples
            .iter()
            .filter(|e| e.label == Label::Binary(0))
            .count();
        assert_eq!(zeros * 2, dataset.examples.len());
        let Metrics::Accuracy(acc) = evaluate(&model, &dataset).unwrap() else {
            panic!("wrong metric kind")
        };
        assert_eq!(acc, 0.5);
        // Determinism: a second evaluation agrees exactly.
        let again = evaluate(&model, &dataset).unwrap();
        assert_eq!(again, Metrics::Accuracy(acc));
    }

    #[test]
    fn wrd_metrics_bound_both_by_components() {
        let dataset = tiny_dataset(Task::Wrd, 30);
        let mut config = tiny_config(Some(1));
        config.head = HeadKind::PerPosition { n_labels: 3 };
        let model = Model::new(config).unwrap();
        let Metrics::Wrd {
            insert,
            original,
            both,
        } = evaluate(&model, &dataset).unwrap()
        else {
            panic!("wrong metric kind")
        };
        assert!(both <= insert.min(original) + 1e-12);
    }

    #[test]
    fn head_label_mismatch_is_a_config_error() {
        let model = Model::new(tiny_config(None)).unwrap();
        let dataset = tiny_dataset(Task::Wrd, 6);
        assert!(matches!(
            evaluate(&model, &dataset),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn checkpoint_roundtrip_is_byte_identical_and_validated() {
        let dir = tempdir().unwrap();
        let model = Model::new(tiny_config(Some(2))).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(momentless_seed());
        let ckpt = Checkpoint::from_model(&model, RngState::capture(&rng), 17);

        let path_a = dir.path().join("a.ckpt");
        save_checkpoint(&path_a, &ckpt).unwrap();
        let loaded = load_checkpoint(&path_a).unwrap();
        let path_b = dir.path().join("b.ckpt");
        save_checkpoint(&path_b, &loaded).unwrap();
        assert_eq!(std::fs::read(&path_a).unwrap(), std::fs::read(&path_b).unwrap());

        // Restored model evaluates exactly like the original.
        let restored = loaded.into_model().unwrap();
        assert_eq!(restored.params.step(), 17);
        let tokens = [4u32, 8, 15, 16];
        let mut tape = Tape::new();
        let a = model.forward(&mut tape, &tokens, &mut ForwardCtx::Infer).unwrap();
        let a = tape.value(a.logits).clone();
        let mut tape = Tape::new();
        let b = restored.forward(&mut tape, &tokens, &mut ForwardCtx::Infer).unwrap();
        assert_eq!(a.data(), tape.value(b.logits).data());
    }

    fn momentless_seed() -> u64 {
        99
    }

    #[test]
    fn checkpoint_corruption_and_version_are_format_errors() {
        let dir = tempdir().unwrap();
        let model = Model::new(tiny_config(None)).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(1);
        let ckpt = Checkpoint::from_model(&model, RngState::capture(&rng), 0);
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();

        // Flip one byte inside the JSON header.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[25] = bytes[25].wrapping_add(1);
        let corrupt = dir.path().join("corrupt.ckpt");
        std::fs::write(&corrupt, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&corrupt), Err(Error::Format(_))));

        // Future version.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        std::fs::write(&corrupt, &bytes).unwrap();
        let err = load_checkpoint(&corrupt).unwrap_err().to_string();
        assert!(err.contains("version 2"), "{err}");

        // Truncation inside the payload.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&corrupt, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_checkpoint(&corrupt), Err(Error::Format(_))));

        // Bad magic.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&corrupt, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&corrupt), Err(Error::Format(_))));
    }

    #[test]
    fn rng_state_roundtrips_mid_stream() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..37 {
            rng.random::<f64>();
        }
        let state = RngState::capture(&rng);
        let mut restored = state.restore().unwrap();
        for _ in 0..10 {
            assert_eq!(rng.random::<f64>(), restored.random::<f64>());
        }
    }

    #[test]
    fn full_ssan_layer_gradients_match_finite_differences() {
        use crate::tensor::{check_gradients, DEFAULT_STEP};
        let mut config = tiny_config(Some(1));
        config.d_model = 8;
        config.ffn_dim = 12;
        config.n_heads = 2;
        config.n_layers = 1;
        config.vocab_size = 10;
        let model = Model::new(config.clone()).unwrap();
        let tokens = [1u32, 5, 3, 8];
        let n = tokens.len();
        let mut noise_rng = ChaCha8Rng::seed_from_u64(77);
        let g1 = crate::selector::gumbel_noise(&[n, n], &mut noise_rng);
        let g2 = crate::selector::gumbel_noise(&[n, n], &mut noise_rng);

        let names: Vec<String> = model.params.names().map(|s| s.to_string()).collect();
        let tensors: Vec<Tensor> = names
            .iter()
            .map(|n| model.params.get(n).unwrap().clone())
            .collect();
        let report = check_gradients(
            &tensors,
            |tape, vars| {
                let bound: BTreeMap<String, Var> = names
                    .iter()
                    .cloned()
                    .zip(vars.iter().copied())
                    .collect();
                let mut ctx = ForwardCtx::TrainFrozen {
                    tau: 0.5,
                    noise_select: &g1,
                    noise_discard: &g2,
                };
                let trace = forward_with_params(&config, tape, &bound, &tokens, &mut ctx)?;
                tape.cross_entropy(trace.logits, &[1])
            },
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(
            report.passes(1e-4),
            "max rel err {} at {:?}",
            report.max_rel_error,
            report.worst
        );
    }

    #[test]
    fn sequence_errors_are_input_errors() {
        let model = Model::new(tiny_config(None)).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(
            model.forward(&mut tape, &[], &mut ForwardCtx::Infer),
            Err(Error::Input(_))
        ));
        let long = vec![1u32; 17];
        assert!(matches!(
            model.forward(&mut tape, &long, &mut ForwardCtx::Infer),
            Err(Error::Input(_))
        ));
        let bad_id = [99u32, 1];
        assert!(matches!(
            model.forward(&mut tape, &bad_id, &mut ForwardCtx::Infer),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn config_validation_catches_bad_selector_layer_and_tau() {
        let mut config = tiny_config(Some(3));
        assert!(config.validate().is_err());
        config.selector_layer = Some(2);
        assert!(config.validate().is_ok());
        config.tau = 0.0;
        assert!(config.validate().is_err());
        config.tau = 0.5;
        config.tau_anneal_to = Some(0.9);
        assert!(config.validate().is_err());
    }
}
