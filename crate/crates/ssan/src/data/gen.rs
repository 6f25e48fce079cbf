//! Deterministic corpus generators for the four probing tasks.
//!
//! Every generator is a pure function of (grammar, spec): the master seed
//! fans out to one derived stream per (task, split), so splits can be
//! produced independently and reruns are token-for-token identical.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::data::pcfg::{LexiconLayout, PcfgGrammar};
use crate::data::{Dataset, Label, ProbingExample, Task};
use crate::error::{Error, Result};
use crate::tree::BinaryTree;

/// Knobs for synthetic corpus generation.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
    /// Fraction of bigram-shift examples that receive a swap.
    pub positive_rate: f64,
    /// Minimum |insert - origin| for word-reorder perturbations.
    pub wrd_min_distance: usize,
    /// Target tree-depth class mix for depths 5..=11.
    pub depth_ratios: [f64; 7],
}

/// Depth-class mix used by default, matching the reported corpus ratios
/// for depths 5 through 11.
pub const DEFAULT_DEPTH_RATIOS: [f64; 7] = [0.069, 0.143, 0.163, 0.179, 0.174, 0.153, 0.119];

pub const MIN_TREE_DEPTH: usize = 5;
pub const MAX_TREE_DEPTH: usize = 11;

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            vocab_size: 200,
            min_len: 8,
            max_len: 20,
            train: 10_000,
            dev: 1_000,
            test: 1_000,
            seed: 0,
            positive_rate: 0.5,
            wrd_min_distance: 1,
            depth_ratios: DEFAULT_DEPTH_RATIOS,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_len < 3 {
            return Err(Error::Config(
                "min_len must be at least 3 (a swap needs an adjacent pair plus context)".into(),
            ));
        }
        if self.max_len < self.min_len {
            return Err(Error::Config(format!(
                "max_len {} below min_len {}",
                self.max_len, self.min_len
            )));
        }
        if !(0.0..=1.0).contains(&self.positive_rate) {
            return Err(Error::Config(format!(
                "positive_rate {} outside [0,1]",
                self.positive_rate
            )));
        }
        if self.wrd_min_distance == 0 || self.wrd_min_distance > self.min_len - 1 {
            return Err(Error::Config(format!(
                "wrd_min_distance {} must be in [1, min_len-1]",
                self.wrd_min_distance
            )));
        }
        let ratio_sum: f64 = self.depth_ratios.iter().sum();
        if (ratio_sum - 1.0).abs() > 1e-6 || self.depth_ratios.iter().any(|&r| r < 0.0) {
            return Err(Error::Config(format!(
                "depth_ratios must be nonnegative and sum to 1, got sum {ratio_sum}"
            )));
        }
        Ok(())
    }
}

/// Train/dev/test triple for one task.
#[derive(Debug, Clone)]
pub struct SplitDatasets {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

impl SplitDatasets {
    pub fn splits(&self) -> [(&'static str, &Dataset); 3] {
        [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
        ]
    }
}

/// SplitMix64 fan-out from the master seed; stream ids are fixed per
/// (task, split) so generators stay independent.
fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn task_stream(task: Task, split: usize) -> u64 {
    let base = match task {
        Task::BigramShift => 10,
        Task::Wrd => 20,
        Task::TreeDepth => 30,
        Task::TopConst => 40,
    };
    base + split as u64
}

const MAX_SAMPLE_DEPTH: usize = 30;
const ATTEMPT_FACTOR: usize = 500;

/// Rejection-sample sentences from the grammar until `count` fall inside
/// the length (and optional depth) window.
fn sample_sentences(
    grammar: &PcfgGrammar,
    layout: &LexiconLayout,
    spec: &CorpusSpec,
    count: usize,
    depth_window: Option<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<u32>, BinaryTree)>> {
    let mut out = Vec::with_capacity(count);
    let budget = count.max(1) * ATTEMPT_FACTOR;
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        let Some((tree, tokens)) =
            grammar.sample_tree(layout, rng, spec.max_len + 1, MAX_SAMPLE_DEPTH)
        else {
            continue;
        };
        if tokens.len() < spec.min_len || tokens.len() > spec.max_len {
            continue;
        }
        if let Some((lo, hi)) = depth_window {
            let depth = tree.depth();
            if depth < lo || depth > hi {
                continue;
            }
        }
        out.push((tokens, tree));
    }
    if out.len() < count {
        return Err(Error::Input(format!(
            "generation failed: produced {}/{count} sentences within length {}..={}{} after {budget} attempts",
            out.len(),
            spec.min_len,
            spec.max_len,
            depth_window
                .map(|(lo, hi)| format!(" and depth {lo}..={hi}"))
                .unwrap_or_default(),
        )));
    }
    Ok(out)
}

fn fisher_yates(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Swap the adjacent pair at `n`, in place.
pub(crate) fn apply_adjacent_swap(tokens: &mut [u32], n: usize) {
    tokens.swap(n, n + 1);
}

/// Pop the token at `origin` and re-insert it so it lands at `insert`.
pub(crate) fn apply_move(tokens: &mut Vec<u32>, origin: usize, insert: usize) {
    let word = tokens.remove(origin);
    tokens.insert(insert, word);
}

// ── Bigram order shift ───────────────────────────────────────────────

/// Half the sentences keep their order (label 0); the other half get one
/// uniformly chosen adjacent swap (label 1). Swaps of identical tokens are
/// re-drawn since they would be unlabelable.
pub fn gen_bigram_shift(grammar: &PcfgGrammar, spec: &CorpusSpec) -> Result<SplitDatasets> {
    spec.validate()?;
    let layout = grammar.lexicon_layout(spec.vocab_size)?;
    let counts = [spec.train, spec.dev, spec.test];
    let mut splits = Vec::with_capacity(3);
    for (split, &count) in counts.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            spec.seed,
            task_stream(Task::BigramShift, split),
        ));
        let sentences = sample_sentences(grammar, &layout, spec, count, None, &mut rng)?;
        let n_positive = (count as f64 * spec.positive_rate).round() as usize;
        let order = fisher_yates(count, &mut rng);
        let mut positive = vec![false; count];
        for &idx in order.iter().take(n_positive) {
            positive[idx] = true;
        }

        let mut examples = Vec::with_capacity(count);
        for (idx, (mut tokens, _tree)) in sentences.into_iter().enumerate() {
            let label = if positive[idx] {
                let n = pick_swap_position(&tokens, &mut rng)?;
                apply_adjacent_swap(&mut tokens, n);
                Label::Binary(1)
            } else {
                Label::Binary(0)
            };
            examples.push(ProbingExample {
                tokens,
                label,
                gold_tree: None,
            });
        }
        splits.push(Dataset {
            task: Task::BigramShift,
            vocab_size: spec.vocab_size,
            seed: spec.seed,
            examples,
        });
    }
    let test = splits.pop().unwrap();
    let dev = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(SplitDatasets { train, dev, test })
}

fn pick_swap_position(tokens: &[u32], rng: &mut ChaCha8Rng) -> Result<usize> {
    for _ in 0..64 {
        let n = rng.random_range(0..tokens.len() - 1);
        if tokens[n] != tokens[n + 1] {
            return Ok(n);
        }
    }
    // Deterministic fallback scan.
    (0..tokens.len() - 1)
        .find(|&n| tokens[n] != tokens[n + 1])
        .ok_or_else(|| Error::Input("sentence has no swappable adjacent pair".into()))
}

// ── Word reordering detection ────────────────────────────────────────

/// Every sentence is perturbed: one word pops out of `origin` and lands at
/// `insert`, both labels indexing the edited sentence. (origin, insert) is
/// uniform over pairs with origin != insert and |origin - insert| at least
/// the configured minimum distance.
pub fn gen_word_reorder(grammar: &PcfgGrammar, spec: &CorpusSpec) -> Result<SplitDatasets> {
    spec.validate()?;
    let layout = grammar.lexicon_layout(spec.vocab_size)?;
    let counts = [spec.train, spec.dev, spec.test];
    let mut splits = Vec::with_capacity(3);
    for (split, &count) in counts.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, task_stream(Task::Wrd, split)));
        let sentences = sample_sentences(grammar, &layout, spec, count, None, &mut rng)?;
        let mut examples = Vec::with_capacity(count);
        for (mut tokens, _tree) in sentences {
            let (origin, insert) = pick_move(tokens.len(), spec.wrd_min_distance, &mut rng);
            apply_move(&mut tokens, origin, insert);
            examples.push(ProbingExample {
                tokens,
                label: Label::Positions { insert, origin },
                gold_tree: None,
            });
        }
        splits.push(Dataset {
            task: Task::Wrd,
            vocab_size: spec.vocab_size,
            seed: spec.seed,
            examples,
        });
    }
    let test = splits.pop().unwrap();
    let dev = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(SplitDatasets { train, dev, test })
}

pub(crate) fn pick_move(len: usize, min_distance: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    loop {
        let origin = rng.random_range(0..len);
        let insert = rng.random_range(0..len);
        if origin != insert && origin.abs_diff(insert) >= min_distance {
            return (origin, insert);
        }
    }
}

/// Mean |insert - origin| over a WRD dataset.
pub fn wrd_mean_distance(dataset: &Dataset) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for example in &dataset.examples {
        if let Label::Positions { insert, origin } = example.label {
            total += insert.abs_diff(origin) as f64;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

// ── PCFG structure corpora ───────────────────────────────────────────

/// Generate the tree-depth or top-constituent corpus: trees rejection-
/// sampled until depth lands in 5..=11, gold trees attached.
///
/// Tree-depth splits honor the spec's depth-class ratios via largest-
/// remainder quotas; top-constituent labels are the root child pair,
/// bucketed into the 19 most frequent classes of the train split plus
/// `OTHER`.
pub fn gen_pcfg_corpus(grammar: &PcfgGrammar, spec: &CorpusSpec, task: Task) -> Result<SplitDatasets> {
    spec.validate()?;
    if task != Task::TreeDepth && task != Task::TopConst {
        return Err(Error::Config(format!("gen_pcfg_corpus cannot build task {task}")));
    }
    let layout = grammar.lexicon_layout(spec.vocab_size)?;
    let counts = [spec.train, spec.dev, spec.test];
    let mut raw_splits: Vec<Vec<(Vec<u32>, BinaryTree)>> = Vec::with_capacity(3);
    for (split, &count) in counts.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, task_stream(task, split)));
        let sentences = if task == Task::TreeDepth {
            sample_depth_quota(grammar, &layout, spec, count, &mut rng)?
        } else {
            sample_sentences(
                grammar,
                &layout,
                spec,
                count,
                Some((MIN_TREE_DEPTH, MAX_TREE_DEPTH)),
                &mut rng,
            )?
        };
        raw_splits.push(sentences);
    }

    // Top-constituent class inventory from the train split.
    let class_map = if task == Task::TopConst {
        Some(top_constituent_classes(&raw_splits[0]))
    } else {
        None
    };

    let mut splits = Vec::with_capacity(3);
    for sentences in raw_splits {
        let examples = sentences
            .into_iter()
            .map(|(tokens, tree)| {
                let label = match task {
                    Task::TreeDepth => Label::Depth(tree.depth() as u8),
                    Task::TopConst => {
                        let raw = tree.top_constituents();
                        let classes = class_map.as_ref().unwrap();
                        let name = if classes.contains(&raw) {
                            raw
                        } else {
                            "OTHER".to_string()
                        };
                        Label::Class(name)
                    }
                    _ => unreachable!(),
                };
                ProbingExample {
                    tokens,
                    label,
                    gold_tree: Some(tree),
                }
            })
            .collect();
        splits.push(Dataset {
            task,
            vocab_size: spec.vocab_size,
            seed: spec.seed,
            examples,
        });
    }
    let test = splits.pop().unwrap();
    let dev = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(SplitDatasets { train, dev, test })
}

fn sample_depth_quota(
    grammar: &PcfgGrammar,
    layout: &LexiconLayout,
    spec: &CorpusSpec,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<u32>, BinaryTree)>> {
    let quotas = largest_remainder(count, &spec.depth_ratios);
    let mut filled = [0usize; 7];
    let mut out = Vec::with_capacity(count);
    let budget = count.max(1) * ATTEMPT_FACTOR;
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        let Some((tree, tokens)) =
            grammar.sample_tree(layout, rng, spec.max_len + 1, MAX_SAMPLE_DEPTH)
        else {
            continue;
        };
        if tokens.len() < spec.min_len || tokens.len() > spec.max_len {
            continue;
        }
        let depth = tree.depth();
        if !(MIN_TREE_DEPTH..=MAX_TREE_DEPTH).contains(&depth) {
            continue;
        }
        let class = depth - MIN_TREE_DEPTH;
        if filled[class] >= quotas[class] {
            continue;
        }
        filled[class] += 1;
        out.push((tokens, tree));
    }
    if out.len() < count {
        let missing: Vec<String> = (0..7)
            .filter(|&c| filled[c] < quotas[c])
            .map(|c| format!("depth {} ({}/{})", c + MIN_TREE_DEPTH, filled[c], quotas[c]))
            .collect();
        return Err(Error::Input(format!(
            "generation failed: depth quotas unfilled after {budget} attempts: {}",
            missing.join(", ")
        )));
    }
    Ok(out)
}

fn largest_remainder(total: usize, ratios: &[f64; 7]) -> [usize; 7] {
    let mut counts = [0usize; 7];
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(7);
    let mut assigned = 0;
    for (i, &r) in ratios.iter().enumerate() {
        let exact = total as f64 * r;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((i, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..(total - assigned) {
        counts[remainders[k % 7].0] += 1;
    }
    counts
}

/// The 19 most frequent root child pairs (count desc, name asc) — every
/// other pair buckets into OTHER.
fn top_constituent_classes(train: &[(Vec<u32>, BinaryTree)]) -> Vec<String> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for (_, tree) in train {
        let name = tree.top_constituents();
        match counts.iter_mut().find(|(n, _)| *n == name) {
            Some((_, c)) => *c += 1,
            None => counts.push((name, 1)),
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    counts.truncate(19);
    counts.into_iter().map(|(n, _)| n).collect()
}

/// Count of each distinct label rendering, sorted by label text.
pub fn label_histogram(dataset: &Dataset) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for example in &dataset.examples {
        let key = match &example.label {
            Label::Binary(b) => b.to_string(),
            Label::Depth(d) => d.to_string(),
            Label::Class(name) => name.clone(),
            Label::Positions { .. } => continue,
        };
        match counts.iter_mut().find(|(n, _)| *n == key) {
            Some((_, c)) => *c += 1,
            None => counts.push((key, 1)),
        }
    }
    counts.sort_by(|a, b| a.0.cmp(&b.0));
    counts
}
