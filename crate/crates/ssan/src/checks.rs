//! Multi-seed gradient-check sweeps over every differentiable operation
//! and over a full gated encoder layer with frozen selector noise. Shared
//! by the `grad-check` subcommand and the acceptance suite.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{forward_with_params, ForwardCtx, HeadKind, Model, ModelConfig};
use crate::selector::gumbel_noise;
use crate::tensor::{check_gradients, Tape, Tensor, Var, DEFAULT_STEP};

/// Aggregate of one named sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
}

struct Sweep {
    outcome: SweepOutcome,
}

impl Sweep {
    fn new(name: &'static str) -> Sweep {
        Sweep {
            outcome: SweepOutcome {
                name,
                max_rel_error: 0.0,
                checked: 0,
            },
        }
    }

    fn run<F>(&mut self, inputs: &[Tensor], build: F) -> Result<()>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let report = check_gradients(inputs, build, DEFAULT_STEP)?;
        self.outcome.max_rel_error = self.outcome.max_rel_error.max(report.max_rel_error);
        self.outcome.checked += report.checked;
        Ok(())
    }
}

/// Weighted sum of an op output: curves the loss so row-stochastic outputs
/// (softmax) still produce informative gradients.
fn weighted_sum(tape: &mut Tape, x: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.leaf(weights.clone());
    let prod = tape.mul(x, w)?;
    tape.sum(prod)
}

/// Per-operation finite-difference sweeps across `seeds` random draws.
pub fn op_gradient_sweeps(seeds: u64) -> Result<Vec<SweepOutcome>> {
    let mut matmul = Sweep::new("matmul");
    let mut add = Sweep::new("add");
    let mut add_row = Sweep::new("add_row");
    let mut mul = Sweep::new("mul");
    let mut scale = Sweep::new("scale");
    let mut transpose = Sweep::new("transpose");
    let mut sigmoid = Sweep::new("sigmoid");
    let mut relu = Sweep::new("relu");
    let mut softmax = Sweep::new("softmax_rows");
    let mut layer_norm = Sweep::new("layer_norm");
    let mut cross_entropy = Sweep::new("cross_entropy");
    let mut mean_rows = Sweep::new("mean_rows");
    let mut slice_concat = Sweep::new("slice_concat");
    let mut embed = Sweep::new("embed");
    let mut log_gate = Sweep::new("log_gate");
    let mut gumbel = Sweep::new("gumbel_sigmoid");
    let mut attention = Sweep::new("attention");

    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..=4);
        let k = rng.random_range(2..=4);
        let n = rng.random_range(2..=4);

        let a = Tensor::uniform(&[m, k], 1.0, &mut rng);
        let b = Tensor::uniform(&[k, n], 1.0, &mut rng);
        let c_mn = Tensor::uniform(&[m, n], 1.0, &mut rng);
        let c_mk = Tensor::uniform(&[m, k], 1.0, &mut rng);
        let row = Tensor::uniform(&[1, k], 1.0, &mut rng);
        let c_1k = Tensor::uniform(&[1, k], 1.0, &mut rng);

        matmul.run(&[a.clone(), b.clone()], |tape, vars| {
            let out = tape.matmul(vars[0], vars[1])?;
            weighted_sum(tape, out, &c_mn)
        })?;
        add.run(&[a.clone(), c_mk.clone()], |tape, vars| {
            let out = tape.add(vars[0], vars[1])?;
            weighted_sum(tape, out, &c_mk)
        })?;
        add_row.run(&[a.clone(), row.clone()], |tape, vars| {
            let out = tape.add_row(vars[0], vars[1])?;
            weighted_sum(tape, out, &c_mk)
        })?;
        mul.run(&[a.clone(), c_mk.clone()], |tape, vars| {
            let out = tape.mul(vars[0], vars[1])?;
            weighted_sum(tape, out, &c_mk)
        })?;
        scale.run(std::slice::from_ref(&a), |tape, vars| {
            let out = tape.scale(vars[0], -1.7)?;
            weighted_sum(tape, out, &c_mk)
        })?;
        transpose.run(std::slice::from_ref(&b), |tape, vars| {
            let out = tape.transpose(vars[0])?;
            weighted_sum(tape, out, &c_nm_for(&b))
        })?;
        sigmoid.run(std::slice::from_ref(&a), |tape, vars| {
            let out = tape.sigmoid(vars[0])?;
            weighted_sum(tape, out, &c_mk)
        })?;
        // Keep entries away from the ReLU kink where central differences
        // straddle the non-differentiable point.
        let mut relu_in = Tensor::uniform(&[m, k], 1.0, &mut rng);
        for v in relu_in.data_mut() {
            if v.abs() < 1e-3 {
                *v += 0.1;
            }
        }
        relu.run(&[relu_in], |tape, vars| {
            let out = tape.relu(vars[0])?;
            weighted_sum(tape, out, &c_mk)
        })?;
        softmax.run(std::slice::from_ref(&a), |tape, vars| {
            let out = tape.softmax_rows(vars[0])?;
            weighted_sum(tape, out, &c_mk)
        })?;

        let gain = Tensor::uniform(&[1, k], 1.0, &mut rng);
        let bias = Tensor::uniform(&[1, k], 1.0, &mut rng);
        layer_norm.run(&[a.clone(), gain, bias], |tape, vars| {
            let out = tape.layer_norm(vars[0], vars[1], vars[2])?;
            weighted_sum(tape, out, &c_mk)
        })?;

        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        cross_entropy.run(std::slice::from_ref(&a), |tape, vars| {
            tape.cross_entropy(vars[0], &labels)
        })?;
        mean_rows.run(std::slice::from_ref(&a), |tape, vars| {
            let out = tape.mean_rows(vars[0])?;
            weighted_sum(tape, out, &c_1k)
        })?;
        slice_concat.run(std::slice::from_ref(&a), |tape, vars| {
            let left = tape.slice_cols(vars[0], 0, 1)?;
            let right = tape.slice_cols(vars[0], 1, k - 1)?;
            let glued = tape.concat_cols(&[right, left])?;
            weighted_sum(tape, glued, &c_mk)
        })?;

        let table = Tensor::uniform(&[5, k], 1.0, &mut rng);
        let ids: Vec<u32> = (0..m).map(|_| rng.random_range(0..5)).collect();
        let c_embed = Tensor::uniform(&[m, k], 1.0, &mut rng);
        embed.run(&[table], |tape, vars| {
            let out = tape.embed(vars[0], &ids)?;
            weighted_sum(tape, out, &c_embed)
        })?;

        // Gate values away from the bypass threshold so the finite
        // difference never crosses the discontinuity.
        let mut gate = Tensor::uniform(&[m, m], 0.4, &mut rng);
        for v in gate.data_mut() {
            *v = v.abs() + 0.1;
        }
        let c_mm = Tensor::uniform(&[m, m], 1.0, &mut rng);
        log_gate.run(&[gate], |tape, vars| {
            let out = tape.log_gate(vars[0])?;
            weighted_sum(tape, out, &c_mm)
        })?;

        let energies = Tensor::uniform(&[m, m], 1.5, &mut rng);
        let g1 = gumbel_noise(&[m, m], &mut rng);
        let g2 = gumbel_noise(&[m, m], &mut rng);
        gumbel.run(&[energies], |tape, vars| {
            let (sample, _) =
                crate::selector::gumbel_sigmoid_with_noise(tape, vars[0], 0.5, &g1, &g2)?;
            weighted_sum(tape, sample, &c_mm)
        })?;

        let q = Tensor::uniform(&[m, k], 1.0, &mut rng);
        let key = Tensor::uniform(&[m, k], 1.0, &mut rng);
        let value = Tensor::uniform(&[m, k], 1.0, &mut rng);
        let gate_soft = {
            let mut g = Tensor::uniform(&[m, m], 0.4, &mut rng);
            for v in g.data_mut() {
                *v = v.abs() + 0.1;
            }
            g
        };
        attention.run(&[q, key, value, gate_soft], |tape, vars| {
            let (out, _) = crate::attention::scaled_dot_attention(
                tape,
                vars[0],
                vars[1],
                vars[2],
                Some(vars[3]),
            )?;
            weighted_sum(tape, out, &c_mk)
        })?;
    }

    Ok(vec![
        matmul.outcome,
        transpose.outcome,
        add.outcome,
        add_row.outcome,
        mul.outcome,
        scale.outcome,
        sigmoid.outcome,
        relu.outcome,
        softmax.outcome,
        layer_norm.outcome,
        cross_entropy.outcome,
        mean_rows.outcome,
        slice_concat.outcome,
        embed.outcome,
        log_gate.outcome,
        gumbel.outcome,
        attention.outcome,
    ])
}

fn c_nm_for(b: &Tensor) -> Tensor {
    // Deterministic weight tensor for the transpose check.
    let (k, n) = (b.rows(), b.cols());
    let mut out = Tensor::zeros(&[n, k]);
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = ((i as f64) * 0.37).sin();
    }
    out
}

/// Full SSAN encoder layer (selector gate active, frozen Gumbel noise):
/// every parameter checked against central finite differences.
pub fn layer_gradient_sweep(seeds: u64) -> Result<SweepOutcome> {
    let mut sweep = Sweep::new("ssan_layer");
    for seed in 0..seeds {
        let config = ModelConfig {
            vocab_size: 10,
            d_model: 8,
            ffn_dim: 12,
            n_heads: 2,
            n_layers: 1,
            selector_layer: Some(1),
            max_len: 8,
            head: HeadKind::SentenceClass { n_classes: 2 },
            seed,
            ..ModelConfig::base()
        };
        let model = Model::new(config.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD_EF01);
        let len = rng.random_range(3..=5);
        let tokens: Vec<u32> = (0..len).map(|_| rng.random_range(0..10)).collect();
        let g1 = gumbel_noise(&[len, len], &mut rng);
        let g2 = gumbel_noise(&[len, len], &mut rng);
        let label = rng.random_range(0..2);

        let names: Vec<String> = model.params.names().map(|s| s.to_string()).collect();
        let tensors: Vec<Tensor> = names
            .iter()
            .map(|n| model.params.get(n).unwrap().clone())
            .collect();
        sweep.run(&tensors, |tape, vars| {
            let bound: BTreeMap<String, Var> =
                names.iter().cloned().zip(vars.iter().copied()).collect();
            let mut ctx = ForwardCtx::TrainFrozen {
                tau: 0.5,
                noise_select: &g1,
                noise_discard: &g2,
            };
            let trace = forward_with_params(&config, tape, &bound, &tokens, &mut ctx)?;
            tape.cross_entropy(trace.logits, &[label])
        })?;
    }
    Ok(sweep.outcome)
}
