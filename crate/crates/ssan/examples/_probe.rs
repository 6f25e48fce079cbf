use ssan::data::{gen_bigram_shift, gen_word_reorder, CorpusSpec, PcfgGrammar};
use ssan::model::{evaluate, head_for_task, train, Model, ModelConfig, TrainOptions};

fn main() {
    let which: String = std::env::args().nth(1).unwrap_or("bigram".into());
    let epochs: usize = std::env::args().nth(2).unwrap_or("10".into()).parse().unwrap();
    let lr: f64 = std::env::args().nth(3).unwrap_or("1e-3".into()).parse().unwrap();
    let batch: usize = std::env::args().nth(4).unwrap_or("8".into()).parse().unwrap();
    let dropout: f64 = std::env::args().nth(5).unwrap_or("0.1".into()).parse().unwrap();
    let grammar = PcfgGrammar::builtin();
    let spec = CorpusSpec::default();
    let splits = match which.as_str() {
        "wrd" => gen_word_reorder(&grammar, &spec).unwrap(),
        _ => gen_bigram_shift(&grammar, &spec).unwrap(),
    };
    let (head, names) = head_for_task(splits.train.task, &splits.train).unwrap();
    let max_len = splits.train.max_len().max(splits.dev.max_len()).max(splits.test.max_len());
    let config = ModelConfig {
        vocab_size: 200, selector_layer: None, max_len,
        head, class_names: names, seed: 0, dropout,
        ..ModelConfig::base()
    };
    let mut model = Model::new(config).unwrap();
    let opts = TrainOptions { epochs, lr, batch_size: batch, seed: 0 };
    let t = std::time::Instant::now();
    let outcome = train(&mut model, &splits.train, &splits.dev, &opts).unwrap();
    let test = evaluate(&model, &splits.test).unwrap();
    print!("{which} lr={lr} b={batch} do={dropout} {:.0}s |", t.elapsed().as_secs_f64());
    for l in outcome.log.iter() { print!(" {:.2}/{:.3}", l.train_loss, l.dev.primary()); }
    println!(" | test {}", test.render());
}
