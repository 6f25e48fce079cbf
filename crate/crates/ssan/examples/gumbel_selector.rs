//! The selector in isolation: selection energies, Gumbel-Sigmoid samples
//! across temperatures, the hard inference rule, and the logistic
//! distribution identity P(A > 0.5) = sigmoid(E_s).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssan::selector::{gumbel_from_uniform, gumbel_sigmoid, infer_hard, selection_energies, SelectorParams};
use ssan::tensor::{stable_sigmoid_value, Tape, Tensor};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // Energies from a random layer input.
    let mut tape = Tape::new();
    let h = tape.leaf(Tensor::uniform(&[4, 8], 1.0, &mut rng));
    let params = SelectorParams {
        w_query: tape.leaf(Tensor::uniform(&[8, 8], 0.4, &mut rng)),
        w_key: tape.leaf(Tensor::uniform(&[8, 8], 0.4, &mut rng)),
    };
    let energies = selection_energies(&mut tape, h, &params, false).unwrap();
    println!("selection energies (4x4):");
    for i in 0..4 {
        let row: Vec<String> = tape.value(energies).row(i).iter().map(|v| format!("{v:+.2}")).collect();
        println!("  [{}]", row.join(" "));
    }

    // Relaxed samples sharpen toward {0,1} as temperature drops.
    for tau in [2.0, 0.5, 0.1, 0.01] {
        let (_, gate) = gumbel_sigmoid(&mut tape, energies, tau, &mut rng).unwrap();
        let near_binary = gate
            .sample
            .data()
            .iter()
            .filter(|&&a| a.min(1.0 - a) < 0.05)
            .count();
        println!(
            "tau={tau:<4}: sample row 0 = {:?}  ({near_binary}/16 entries within 0.05 of binary)",
            tape.value(energies)
                .row(0)
                .iter()
                .zip(gate.sample.row(0))
                .map(|(_, a)| format!("{a:.3}"))
                .collect::<Vec<_>>()
        );
    }

    // Hard inference: SELECT exactly where the energy is nonnegative.
    let (_, hard) = infer_hard(&mut tape, energies).unwrap();
    println!("hard gate: {:?}", hard.sample.data());
    println!("select rate: {:.3}", hard.select_rate());

    // Distribution identity: the difference of two Gumbels is logistic, so
    // P(sample > 0.5) matches sigmoid(E_s).
    println!("\nP(A > 0.5) vs sigmoid(E_s) over 100k draws:");
    for energy in [-2.0, -0.5, 0.0, 0.5, 2.0] {
        let mut hits = 0u32;
        let draws = 100_000;
        for _ in 0..draws {
            let g1 = gumbel_from_uniform(rng.random::<f64>());
            let g2 = gumbel_from_uniform(rng.random::<f64>());
            if (energy + g1 - g2) > 0.0 {
                hits += 1;
            }
        }
        println!(
            "  E_s = {energy:+.1}: empirical {:.4}, sigmoid {:.4}",
            hits as f64 / draws as f64,
            stable_sigmoid_value(energy)
        );
    }
}
