use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssan::data::{gen_bigram_shift, CorpusSpec, Label, PcfgGrammar};
use ssan::model::positional_encoding;
use ssan::tensor::{AdamConfig, ParamStore, Tape, Tensor};

// Minimal per-position FFN + mean-pool + linear classifier, no attention.
fn main() {
    let grammar = PcfgGrammar::builtin();
    let mut spec = CorpusSpec::default();
    spec.train = 10_000; spec.dev = 1000;
    let splits = gen_bigram_shift(&grammar, &spec).unwrap();
    let d = 64usize;
    let hidden = 256usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut store = ParamStore::new();
    let xavier = |shape: &[usize], rng: &mut ChaCha8Rng| {
        let fan = shape[0] + shape[1];
        Tensor::uniform(shape, (6.0 / fan as f64).sqrt(), rng)
    };
    store.insert("emb", Tensor::uniform(&[200, d], (3.0 / d as f64).sqrt(), &mut rng)).unwrap();
    store.insert("w1", xavier(&[d, hidden], &mut rng)).unwrap();
    store.insert("b1", Tensor::zeros(&[1, hidden])).unwrap();
    store.insert("w2", xavier(&[hidden, d], &mut rng)).unwrap();
    store.insert("b2", Tensor::zeros(&[1, d])).unwrap();
    store.insert("wo", xavier(&[d, 2], &mut rng)).unwrap();
    store.insert("bo", Tensor::zeros(&[1, 2])).unwrap();

    let adam = AdamConfig::with_lr(1e-3);
    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    let forward = |tape: &mut Tape, store: &ParamStore, tokens: &[u32]| {
        let vars: std::collections::BTreeMap<String, ssan::tensor::Var> = names
            .iter().map(|n| (n.clone(), tape.leaf(store.get(n).unwrap().clone()))).collect();
        let x = tape.embed(vars["emb"], tokens).unwrap();
        let x = tape.scale(x, (d as f64).sqrt()).unwrap();
        let pe = tape.leaf(positional_encoding(tokens.len(), d));
        let x = tape.add(x, pe).unwrap();
        let h = tape.matmul(x, vars["w1"]).unwrap();
        let h = tape.add_row(h, vars["b1"]).unwrap();
        let h = tape.relu(h).unwrap();
        let y = tape.matmul(h, vars["w2"]).unwrap();
        let y = tape.add_row(y, vars["b2"]).unwrap();
        let y = tape.relu(y).unwrap();
        let pooled = tape.mean_rows(y).unwrap();
        let o = tape.matmul(pooled, vars["wo"]).unwrap();
        let logits = tape.add_row(o, vars["bo"]).unwrap();
        (vars, logits)
    };

    let label_of = |l: &Label| match l { Label::Binary(b) => *b as usize, _ => unreachable!() };
    for epoch in 1..=8 {
        let mut order: Vec<usize> = (0..splits.train.len()).collect();
        use rand::Rng;
        for i in (1..order.len()).rev() { let j = rng.random_range(0..=i); order.swap(i, j); }
        let mut loss_sum = 0.0;
        for batch in order.chunks(32) {
            let mut tape = Tape::new();
            let mut total = None;
            let mut bound = None;
            for &i in batch {
                let e = &splits.train.examples[i];
                let (vars, logits) = forward(&mut tape, &store, &e.tokens);
                let loss = tape.cross_entropy(logits, &[label_of(&e.label)]).unwrap();
                loss_sum += tape.value(loss).data()[0];
                total = Some(match total { None => loss, Some(t) => tape.add(t, loss).unwrap() });
                bound = Some(vars);
            }
            let mean = tape.scale(total.unwrap(), 1.0 / batch.len() as f64).unwrap();
            tape.backward(mean).unwrap();
            for (n, v) in bound.unwrap() {
                if let Some(g) = tape.take_grad(v) { store.accumulate_grad(&n, g).unwrap(); }
            }
            store.adam_step(&adam).unwrap();
        }
        // dev accuracy
        let mut correct = 0;
        for e in &splits.dev.examples {
            let mut tape = Tape::new();
            let (_, logits) = forward(&mut tape, &store, &e.tokens);
            let row = tape.value(logits).row(0);
            let pred = if row[1] > row[0] { 1 } else { 0 };
            if pred == label_of(&e.label) { correct += 1; }
        }
        println!("ffn-only epoch {epoch}: loss {:.3} dev {:.3}", loss_sum / splits.train.len() as f64, correct as f64 / splits.dev.len() as f64);
    }
}
