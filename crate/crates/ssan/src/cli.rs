//! Command-line surface: `gen-data`, `train`, `eval`, `probe`,
//! `extract-trees`, `analyze-attention`, `grad-check`.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data or format error,
//! 3 numeric failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};


use crate::analysis::{
    distance_histogram, emit_plot, selection_rate, word_class_attention, PlotData, PlotSeries,
    DISTANCE_BUCKET_LABELS,
};
use crate::checks::{layer_gradient_sweep, op_gradient_sweeps};
use crate::config::RunConfig;
use crate::data::{
    gen_bigram_shift, gen_pcfg_corpus, gen_word_reorder, label_histogram, read_dataset,
    wrd_mean_distance, write_dataset, Dataset, PcfgGrammar, Task, WordClass,
};
use crate::error::{Error, Result};
use crate::model::{
    evaluate, head_for_task, load_checkpoint, save_checkpoint, train, Metrics, Model,
};
use crate::tree::{extract_corpus, ScoreVariant};

/// Run one CLI invocation (without the binary name) and map the outcome to
/// an exit code.
pub fn dispatch<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let args: Vec<String> = args.into_iter().collect();
    match run(&args) {
        Ok(()) => 0,
        Err(error) => {
            eprintln!("error: {error}");
            match error {
                Error::Config(_) => 1,
                Error::Numeric(_) => 3,
                _ => 2,
            }
        }
    }
}

fn run(args: &[String]) -> Result<()> {
    let Some((command, rest)) = args.split_first() else {
        print_usage();
        return Err(Error::Config("missing subcommand".into()));
    };
    match command.as_str() {
        "gen-data" => cmd_gen_data(rest),
        "train" => cmd_train(rest),
        "eval" => cmd_eval(rest),
        "probe" => cmd_probe(rest),
        "extract-trees" => cmd_extract_trees(rest),
        "analyze-attention" => cmd_analyze_attention(rest),
        "grad-check" => cmd_grad_check(rest),
        "help" | "--help" | "-h" => {
            print_usage();
            Ok(())
        }
        other => {
            print_usage();
            Err(Error::Config(format!("unknown subcommand {other:?}")))
        }
    }
}

fn print_usage() {
    println!(
        "\
ssan — selective self-attention at desk scale

USAGE: ssan <subcommand> [flags]

  gen-data          --task T --out DIR [--seed N] [--config FILE] [--grammar FILE]
  train             --data DIR --out DIR [--config FILE]
  eval              --ckpt FILE --data DIR [--split SPLIT]
  probe             --baseline CKPT --selective CKPT [--selective CKPT ...]
                    --data DIR [--split SPLIT]
  extract-trees     --ckpt FILE --data DIR --out DIR [--baseline CKPT]
                    [--layer N] [--head N|mean] [--variant geometric|product]
                    [--split SPLIT]
  analyze-attention --ckpt FILE --data DIR --out DIR [--baseline CKPT]
                    [--layer N] [--head N|mean] [--grammar FILE] [--split SPLIT]
  grad-check        [--seeds N] [--tolerance X]

Tasks: bigram-shift, wrd, tree-depth, top-const. Splits: train, dev, test.
SSAN_SEED overrides the configured seed."
    );
}

// ── Flag parsing ─────────────────────────────────────────────────────

struct Flags {
    values: BTreeMap<String, Vec<String>>,
}

impl Flags {
    fn parse(args: &[String], allowed: &[&str]) -> Result<Flags> {
        let mut values: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut iter = args.iter();
        while let Some(token) = iter.next() {
            let name = token
                .strip_prefix("--")
                .ok_or_else(|| Error::Config(format!("expected a --flag, got {token:?}")))?;
            if !allowed.contains(&name) {
                return Err(Error::Config(format!("unknown flag --{name}")));
            }
            let value = iter
                .next()
                .ok_or_else(|| Error::Config(format!("flag --{name} needs a value")))?;
            values.entry(name.to_string()).or_default().push(value.clone());
        }
        Ok(Flags { values })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.values
            .get(name)
            .and_then(|v| v.last())
            .map(|s| s.as_str())
    }

    fn get_all(&self, name: &str) -> &[String] {
        self.values.get(name).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn require(&self, name: &str) -> Result<&str> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing required flag --{name}")))
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require(name)?))
    }
}

fn load_config(flags: &Flags) -> Result<RunConfig> {
    match flags.get("config") {
        Some(path) => {
            let path = Path::new(path);
            if !path.is_file() {
                return Err(Error::Config(format!("config file {path:?} not found")));
            }
            RunConfig::load(path)
        }
        None => RunConfig::from_env(),
    }
}

fn load_grammar(flags: &Flags) -> Result<PcfgGrammar> {
    match flags.get("grammar") {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            PcfgGrammar::parse(&text)
        }
        None => Ok(PcfgGrammar::builtin()),
    }
}

fn existing_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Input(format!("directory {path:?} not found")))
    }
}

fn read_split(data_dir: &Path, split: &str) -> Result<Dataset> {
    let path = data_dir.join(format!("{split}.tsv"));
    if !path.is_file() {
        return Err(Error::Input(format!("dataset file {path:?} not found")));
    }
    read_dataset(&path)
}

fn split_flag<'a>(flags: &'a Flags) -> Result<&'a str> {
    let split = flags.get("split").unwrap_or("test");
    if ["train", "dev", "test"].contains(&split) {
        Ok(split)
    } else {
        Err(Error::Config(format!(
            "split must be train/dev/test, got {split:?}"
        )))
    }
}

fn head_flag(flags: &Flags) -> Result<Option<usize>> {
    match flags.get("head") {
        None | Some("mean") => Ok(None),
        Some(value) => value
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("bad head {value:?}"))),
    }
}

fn load_model(path: &Path) -> Result<Model> {
    if !path.is_file() {
        return Err(Error::Input(format!("checkpoint {path:?} not found")));
    }
    load_checkpoint(path)?.into_model()
}

fn model_role(model: &Model) -> &'static str {
    if model.config.selector_layer.is_some() {
        "SSANs"
    } else {
        "SANs"
    }
}

/// The layer an analysis defaults to: the gated layer, or 1 for baselines.
fn default_layer(model: &Model) -> usize {
    model.config.selector_layer.unwrap_or(1)
}

fn layer_flag(flags: &Flags, model: &Model) -> Result<usize> {
    match flags.get("layer") {
        None => Ok(default_layer(model)),
        Some(value) => value
            .parse()
            .map_err(|_| Error::Config(format!("bad layer {value:?}"))),
    }
}

// ── gen-data ─────────────────────────────────────────────────────────

fn cmd_gen_data(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["task", "out", "seed", "config", "grammar"])?;
    let mut config = load_config(&flags)?;
    if let Some(task) = flags.get("task") {
        config.task =
            Some(Task::parse(task).ok_or_else(|| Error::Config(format!("unknown task {task:?}")))?);
    }
    if let Some(seed) = flags.get("seed") {
        config.seed = seed
            .parse()
            .map_err(|_| Error::Config(format!("bad seed {seed:?}")))?;
    }
    // The environment override outranks the flag.
    if let Ok(value) = std::env::var("SSAN_SEED") {
        config.seed = value
            .parse()
            .map_err(|_| Error::Config(format!("SSAN_SEED must be an integer, got {value:?}")))?;
    }
    let task = config
        .task
        .ok_or_else(|| Error::Config("no task given (flag --task or config key)".into()))?;
    let out_dir = flags.path("out")?;
    std::fs::create_dir_all(&out_dir)?;
    let grammar = load_grammar(&flags)?;
    let spec = config.corpus_spec();

    let splits = match task {
        Task::BigramShift => gen_bigram_shift(&grammar, &spec)?,
        Task::Wrd => gen_word_reorder(&grammar, &spec)?,
        Task::TreeDepth | Task::TopConst => gen_pcfg_corpus(&grammar, &spec, task)?,
    };

    println!("task={task} vocab={} seed={}", spec.vocab_size, spec.seed);
    for (name, dataset) in splits.splits() {
        let path = out_dir.join(format!("{name}.tsv"));
        write_dataset(&path, dataset)?;
        let mean_len: f64 = dataset
            .examples
            .iter()
            .map(|e| e.tokens.len() as f64)
            .sum::<f64>()
            / dataset.len().max(1) as f64;
        println!(
            "wrote {} ({} examples, mean length {:.2})",
            path.display(),
            dataset.len(),
            mean_len
        );
        match task {
            Task::BigramShift | Task::TreeDepth | Task::TopConst => {
                let mut hist = label_histogram(dataset);
                if task != Task::BigramShift {
                    hist.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                }
                let rendered: Vec<String> = hist
                    .iter()
                    .map(|(label, count)| format!("{label}={count}"))
                    .collect();
                println!("  labels: {}", rendered.join(" "));
            }
            Task::Wrd => {
                println!("  mean |insert-origin| = {:.3}", wrd_mean_distance(dataset));
            }
        }
    }
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────

fn cmd_train(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["config", "data", "out"])?;
    let config = load_config(&flags)?;
    let data_dir = flags.path("data")?;
    existing_dir(&data_dir)?;
    let out_dir = flags.path("out")?;
    std::fs::create_dir_all(&out_dir)?;

    let train_set = read_split(&data_dir, "train")?;
    let dev_set = read_split(&data_dir, "dev")?;
    if dev_set.task != train_set.task || dev_set.vocab_size != train_set.vocab_size {
        return Err(Error::Input("train/dev header mismatch".into()));
    }
    // The eventual eval split must also fit inside max_len.
    let test_len = read_split(&data_dir, "test")
        .map(|d| d.max_len())
        .unwrap_or(0);
    let max_len = train_set.max_len().max(dev_set.max_len()).max(test_len);

    let (head, class_names) = head_for_task(train_set.task, &train_set)?;
    let model_config = config.model_config(head, class_names, train_set.vocab_size, max_len);
    model_config.validate()?;
    let mut model = Model::new(model_config)?;
    let opts = config.train_options();
    println!(
        "training task={} examples={} selector_layer={} epochs={} lr={} batch={} seed={}",
        train_set.task,
        train_set.len(),
        model
            .config
            .selector_layer
            .map_or("none".to_string(), |l| l.to_string()),
        opts.epochs,
        opts.lr,
        opts.batch_size,
        opts.seed
    );

    let outcome = train(&mut model, &train_set, &dev_set, &opts)?;

    let mut log_csv = String::from("epoch,train_loss,dev_primary,tau\n");
    for entry in &outcome.log {
        println!(
            "epoch {:>3}: loss={:.6} dev {} tau={:.4}",
            entry.epoch,
            entry.train_loss,
            entry.dev.render(),
            entry.tau
        );
        log_csv.push_str(&format!(
            "{},{},{},{}\n",
            entry.epoch,
            entry.train_loss,
            entry.dev.primary(),
            entry.tau
        ));
    }
    let log_path = out_dir.join("train_log.csv");
    std::fs::write(&log_path, log_csv)?;

    let ckpt_path = out_dir.join("best.ckpt");
    save_checkpoint(&ckpt_path, &outcome.best)?;
    println!(
        "best epoch {} (dev primary {:.4}); checkpoint {} log {}",
        outcome.best_epoch,
        outcome.best_dev,
        ckpt_path.display(),
        log_path.display()
    );
    Ok(())
}

// ── eval ─────────────────────────────────────────────────────────────

fn cmd_eval(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["ckpt", "data", "split"])?;
    let model = load_model(&flags.path("ckpt")?)?;
    let data_dir = flags.path("data")?;
    existing_dir(&data_dir)?;
    let split = split_flag(&flags)?;
    let dataset = read_split(&data_dir, split)?;
    let metrics = evaluate(&model, &dataset)?;
    println!(
        "task={} split={split} model={} {}",
        dataset.task,
        model_role(&model),
        metrics.render()
    );
    Ok(())
}

// ── probe ────────────────────────────────────────────────────────────

fn cmd_probe(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["baseline", "selective", "data", "split"])?;
    let baseline = load_model(Path::new(flags.require("baseline")?))?;
    let selectives: Vec<Model> = flags
        .get_all("selective")
        .iter()
        .map(|p| load_model(Path::new(p)))
        .collect::<Result<_>>()?;
    if selectives.is_empty() {
        return Err(Error::Config("probe needs at least one --selective checkpoint".into()));
    }
    let data_dir = flags.path("data")?;
    existing_dir(&data_dir)?;
    let split = split_flag(&flags)?;
    let dataset = read_split(&data_dir, split)?;

    let base_metrics = evaluate(&baseline, &dataset)?;
    let rows: Vec<(String, Metrics)> = selectives
        .iter()
        .map(|model| {
            let layer = model
                .config
                .selector_layer
                .map_or("-".to_string(), |l| l.to_string());
            evaluate(model, &dataset).map(|m| (layer, m))
        })
        .collect::<Result<_>>()?;

    let delta = |a: f64, b: f64| -> String {
        if b == 0.0 {
            "-".into()
        } else {
            format!("{:+.1}%", (a - b) / b * 100.0)
        }
    };
    match base_metrics {
        Metrics::Accuracy(base_acc) => {
            println!("{:<8} {:>5} {:>8} {:>8}", "model", "layer", "acc", "delta");
            println!("{:<8} {:>5} {:>8.2} {:>8}", "SANs", "-", base_acc * 100.0, "-");
            for (layer, metrics) in rows {
                let Metrics::Accuracy(acc) = metrics else {
                    return Err(Error::Config("mixed head kinds across checkpoints".into()));
                };
                println!(
                    "{:<8} {:>5} {:>8.2} {:>8}",
                    "SSANs",
                    layer,
                    acc * 100.0,
                    delta(acc, base_acc)
                );
            }
        }
        Metrics::Wrd {
            insert: bi,
            original: bo,
            both: bb,
        } => {
            println!(
                "{:<8} {:>5} {:>8} {:>8} {:>8} {:>10}",
                "model", "layer", "insert", "original", "both", "delta"
            );
            println!(
                "{:<8} {:>5} {:>8.2} {:>8.2} {:>8.2} {:>10}",
                "SANs",
                "-",
                bi * 100.0,
                bo * 100.0,
                bb * 100.0,
                "-"
            );
            for (layer, metrics) in rows {
                let Metrics::Wrd {
                    insert,
                    original,
                    both,
                } = metrics
                else {
                    return Err(Error::Config("mixed head kinds across checkpoints".into()));
                };
                println!(
                    "{:<8} {:>5} {:>8.2} {:>8.2} {:>8.2} {:>10}",
                    "SSANs",
                    layer,
                    insert * 100.0,
                    original * 100.0,
                    both * 100.0,
                    delta(both, bb)
                );
            }
        }
    }
    Ok(())
}

// ── extract-trees ────────────────────────────────────────────────────

fn cmd_extract_trees(args: &[String]) -> Result<()> {
    let flags = Flags::parse(
        args,
        &["ckpt", "baseline", "data", "out", "layer", "head", "variant", "split"],
    )?;
    let model = load_model(&flags.path("ckpt")?)?;
    let baseline = match flags.get("baseline") {
        Some(path) => Some(load_model(Path::new(path))?),
        None => None,
    };
    let data_dir = flags.path("data")?;
    existing_dir(&data_dir)?;
    let out_dir = flags.path("out")?;
    std::fs::create_dir_all(&out_dir)?;
    let split = split_flag(&flags)?;
    let dataset = read_split(&data_dir, split)?;
    let head = head_flag(&flags)?;
    let variant = match flags.get("variant") {
        None | Some("geometric") => ScoreVariant::GeometricMean,
        Some("product") => ScoreVariant::RawProduct,
        Some(other) => return Err(Error::Config(format!("bad variant {other:?}"))),
    };

    let mut csv = String::from("model,layer,precision,recall,f1,matched,predicted,gold\n");
    let mut runs: Vec<(&'static str, &Model)> = Vec::new();
    if let Some(base) = &baseline {
        runs.push(("SANs", base));
    }
    runs.push((model_role(&model), &model));

    for (role, m) in runs {
        let layer = layer_flag(&flags, m)?;
        let outcome = extract_corpus(m, &dataset, layer, variant, head)?;
        let trees_path = out_dir.join(format!("trees_{}.txt", role.to_lowercase()));
        let mut text = String::new();
        for tree in &outcome.trees {
            text.push_str(&tree.to_sexpr());
            text.push('\n');
        }
        std::fs::write(&trees_path, text)?;
        let m_ = outcome.metrics;
        println!(
            "model={role} layer={layer} precision={:.4} recall={:.4} f1={:.4}{}",
            m_.precision,
            m_.recall,
            m_.f1,
            if m_.degenerate { " (degenerate)" } else { "" }
        );
        if outcome.degenerate_sentences > 0 {
            println!(
                "  {} sentences too short for non-trivial brackets",
                outcome.degenerate_sentences
            );
        }
        csv.push_str(&format!(
            "{role},{layer},{},{},{},{},{},{}\n",
            m_.precision,
            m_.recall,
            m_.f1,
            outcome.counts.matched,
            outcome.counts.predicted,
            outcome.counts.gold
        ));
        println!("wrote {}", trees_path.display());
    }
    let csv_path = out_dir.join("bracket_metrics.csv");
    std::fs::write(&csv_path, csv)?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

// ── analyze-attention ────────────────────────────────────────────────

fn cmd_analyze_attention(args: &[String]) -> Result<()> {
    let flags = Flags::parse(
        args,
        &["ckpt", "baseline", "data", "out", "layer", "head", "grammar", "split"],
    )?;
    let model = load_model(&flags.path("ckpt")?)?;
    let baseline = match flags.get("baseline") {
        Some(path) => Some(load_model(Path::new(path))?),
        None => None,
    };
    let data_dir = flags.path("data")?;
    existing_dir(&data_dir)?;
    let out_dir = flags.path("out")?;
    std::fs::create_dir_all(&out_dir)?;
    let split = split_flag(&flags)?;
    let dataset = read_split(&data_dir, split)?;
    let head = head_flag(&flags)?;
    let grammar = load_grammar(&flags)?;
    let layout = grammar.lexicon_layout(dataset.vocab_size)?;

    let mut models: Vec<(&'static str, &Model)> = Vec::new();
    if let Some(base) = &baseline {
        models.push(("SANs", base));
    }
    models.push((model_role(&model), &model));

    // Distance histogram.
    let mut distance_series = Vec::new();
    for (role, m) in &models {
        let layer = layer_flag(&flags, m)?;
        let hist = distance_histogram(m, &dataset, layer, head)?;
        if (hist.total() - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!(
                "distance histogram mass {} drifted from 1",
                hist.total()
            )));
        }
        println!(
            "{role} layer={layer} distance masses: {}",
            DISTANCE_BUCKET_LABELS
                .iter()
                .zip(hist.masses.iter())
                .map(|(l, m)| format!("{l}={m:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        distance_series.push(PlotSeries {
            name: role.to_string(),
            values: hist.masses.to_vec(),
        });
    }
    let (csv, svg) = emit_plot(
        &PlotData {
            title: "attention mass by relative distance".into(),
            x_labels: DISTANCE_BUCKET_LABELS.iter().map(|s| s.to_string()).collect(),
            series: distance_series,
        },
        &out_dir.join("distance"),
    )?;
    println!("wrote {} and {}", csv.display(), svg.display());

    // Word-class attention.
    let mut class_series = Vec::new();
    for (role, m) in &models {
        let layer = layer_flag(&flags, m)?;
        let mass = word_class_attention(m, &dataset, layer, &layout, head)?;
        if (mass.total() - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!(
                "word-class mass {} drifted from 1",
                mass.total()
            )));
        }
        println!(
            "{role} word-class mass: {} | content={:.4} content-free={:.4}",
            WordClass::ALL
                .iter()
                .map(|c| format!("{}={:.4}", c.as_str(), mass.class_mass(*c)))
                .collect::<Vec<_>>()
                .join(" "),
            mass.content_total(),
            mass.content_free_total()
        );
        class_series.push(PlotSeries {
            name: role.to_string(),
            values: mass.per_class.to_vec(),
        });
    }
    let (csv, svg) = emit_plot(
        &PlotData {
            title: "attention mass by word class".into(),
            x_labels: WordClass::ALL.iter().map(|c| c.as_str().to_string()).collect(),
            series: class_series,
        },
        &out_dir.join("word_class"),
    )?;
    println!("wrote {} and {}", csv.display(), svg.display());

    // Selection rate for gated models.
    let mut rate_series = Vec::new();
    for (role, m) in &models {
        if m.config.selector_layer.is_none() {
            continue;
        }
        let rate = selection_rate(m, &dataset, &layout)?;
        println!(
            "{role} selection rate overall={:.4} per-class: {}",
            rate.overall,
            WordClass::ALL
                .iter()
                .map(|c| match rate.class_rate(*c) {
                    Some(r) => format!("{}={:.4}", c.as_str(), r),
                    None => format!("{}=n/a", c.as_str()),
                })
                .collect::<Vec<_>>()
                .join(" ")
        );
        let mut values = vec![rate.overall];
        values.extend(
            WordClass::ALL
                .iter()
                .map(|c| rate.class_rate(*c).unwrap_or(0.0)),
        );
        rate_series.push(PlotSeries {
            name: role.to_string(),
            values,
        });
    }
    if !rate_series.is_empty() {
        let mut labels = vec!["overall".to_string()];
        labels.extend(WordClass::ALL.iter().map(|c| c.as_str().to_string()));
        let (csv, svg) = emit_plot(
            &PlotData {
                title: "selector SELECT rate".into(),
                x_labels: labels,
                series: rate_series,
            },
            &out_dir.join("selection_rate"),
        )?;
        println!("wrote {} and {}", csv.display(), svg.display());
    }
    Ok(())
}

// ── grad-check ───────────────────────────────────────────────────────

fn cmd_grad_check(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["seeds", "tolerance"])?;
    let seeds: u64 = match flags.get("seeds") {
        None => 100,
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad seed count {v:?}")))?,
    };
    let tolerance: f64 = match flags.get("tolerance") {
        None => 1e-4,
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad tolerance {v:?}")))?,
    };

    let mut worst = 0.0f64;
    let mut failures = 0;
    for outcome in op_gradient_sweeps(seeds)? {
        let ok = outcome.max_rel_error <= tolerance;
        println!(
            "{} {:<14} seeds={} elements={} max_rel_err={:.3e}",
            if ok { "PASS" } else { "FAIL" },
            outcome.name,
            seeds,
            outcome.checked,
            outcome.max_rel_error
        );
        worst = worst.max(outcome.max_rel_error);
        failures += (!ok) as u32;
    }
    let layer = layer_gradient_sweep(seeds)?;
    let ok = layer.max_rel_error <= tolerance;
    println!(
        "{} {:<14} seeds={} elements={} max_rel_err={:.3e}",
        if ok { "PASS" } else { "FAIL" },
        layer.name,
        seeds,
        layer.checked,
        layer.max_rel_error
    );
    worst = worst.max(layer.max_rel_error);
    failures += (!ok) as u32;

    if failures > 0 {
        return Err(Error::Numeric(format!(
            "{failures} gradient checks exceeded tolerance {tolerance} (worst {worst:.3e})"
        )));
    }
    println!("all gradient checks passed (worst {worst:.3e} <= {tolerance})");
    Ok(())
}
