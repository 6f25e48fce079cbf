//! Build binary constituency trees from attention maps by span scoring and
//! recursive argmax splitting, then score them against the PCFG gold trees
//! with unlabeled bracketing metrics.
//!
//! Uses an untrained encoder (attention structure at initialization) plus a
//! planted block-diagonal matrix to show the mechanics; the CLI
//! `extract-trees` subcommand runs the same pipeline on trained
//! checkpoints.

use ssan::data::{gen_pcfg_corpus, CorpusSpec, PcfgGrammar, Task};
use ssan::model::{head_for_task, Model, ModelConfig};
use ssan::tensor::Tensor;
use ssan::tree::{bracket_eval, extract_corpus, span_scores, split_tree, ScoreVariant};

fn main() {
    // Planted structure: two attention blocks spanning [0,2] and [3,5].
    let n = 6;
    let boundary = 2;
    let mut planted = Tensor::zeros(&[n, n]);
    for i in 0..n {
        let (lo, hi) = if i <= boundary { (0, boundary) } else { (boundary + 1, n - 1) };
        let w = 1.0 / (hi - lo + 1) as f64;
        for j in lo..=hi {
            planted.set2(i, j, w);
        }
    }
    let table = span_scores(&planted, ScoreVariant::GeometricMean).unwrap();
    let tree = split_tree(&table);
    println!("planted two-block attention over 6 tokens:");
    println!("  score(0,2) = {:.3}, score(3,5) = {:.3}, score(1,4) = {:.3}",
        table.score(0, 2), table.score(3, 5), table.score(1, 4));
    println!("  extracted tree: {}", tree.to_sexpr());

    // Corpus extraction against gold trees.
    let grammar = PcfgGrammar::builtin();
    let spec = CorpusSpec {
        train: 400,
        dev: 100,
        test: 200,
        seed: 3,
        ..CorpusSpec::default()
    };
    let splits = gen_pcfg_corpus(&grammar, &spec, Task::TreeDepth).unwrap();
    let (head, names) = head_for_task(splits.train.task, &splits.train).unwrap();
    let config = ModelConfig {
        vocab_size: spec.vocab_size,
        selector_layer: Some(1),
        max_len: splits.test.max_len().max(splits.train.max_len()),
        head,
        class_names: names,
        seed: 11,
        ..ModelConfig::base()
    };
    let model = Model::new(config).unwrap();
    let outcome = extract_corpus(&model, &splits.test, 1, ScoreVariant::GeometricMean, None).unwrap();
    println!("\ncorpus extraction over {} sentences (layer 1, heads averaged):", splits.test.len());
    println!(
        "  micro-averaged precision={:.4} recall={:.4} f1={:.4}",
        outcome.metrics.precision, outcome.metrics.recall, outcome.metrics.f1
    );

    // One sentence side by side with gold.
    let example = &splits.test.examples[0];
    let gold = example.gold_tree.as_ref().unwrap();
    let predicted = &outcome.trees[0];
    let pair = bracket_eval(predicted, gold).unwrap();
    println!("\nfirst sentence ({} tokens):", example.tokens.len());
    println!("  gold:      {}", gold.to_sexpr());
    println!("  extracted: {}", predicted.to_sexpr());
    println!("  f1 = {:.3}", pair.f1);
}
