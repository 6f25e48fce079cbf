//! Generate all four probing-task corpora from the builtin grammar and
//! print their label statistics. Writes dataset files under
//! `target/example-data/`.

use ssan::data::{
    gen_bigram_shift, gen_pcfg_corpus, gen_word_reorder, label_histogram, wrd_mean_distance,
    write_dataset, CorpusSpec, PcfgGrammar, Task,
};

fn main() {
    let grammar = PcfgGrammar::builtin();
    // Smaller than the default 10k/1k/1k so the example finishes instantly.
    let spec = CorpusSpec {
        train: 2_000,
        dev: 400,
        test: 400,
        seed: 7,
        ..CorpusSpec::default()
    };
    let out_root = std::path::Path::new("target/example-data");

    for task in Task::ALL {
        let splits = match task {
            Task::BigramShift => gen_bigram_shift(&grammar, &spec).unwrap(),
            Task::Wrd => gen_word_reorder(&grammar, &spec).unwrap(),
            Task::TreeDepth | Task::TopConst => gen_pcfg_corpus(&grammar, &spec, task).unwrap(),
        };
        let dir = out_root.join(task.name());
        std::fs::create_dir_all(&dir).unwrap();
        println!("== {task}");
        for (name, dataset) in splits.splits() {
            let path = dir.join(format!("{name}.tsv"));
            write_dataset(&path, dataset).unwrap();
            match task {
                Task::Wrd => println!(
                    "  {name}: {} examples, mean |insert-origin| = {:.2}  -> {}",
                    dataset.len(),
                    wrd_mean_distance(dataset),
                    path.display()
                ),
                _ => {
                    let mut hist = label_histogram(dataset);
                    hist.sort_by(|a, b| b.1.cmp(&a.1));
                    let shown: Vec<String> = hist
                        .iter()
                        .take(6)
                        .map(|(l, c)| format!("{l}={c}"))
                        .collect();
                    println!(
                        "  {name}: {} examples, labels {}  -> {}",
                        dataset.len(),
                        shown.join(" "),
                        path.display()
                    );
                }
            }
        }
    }
}
