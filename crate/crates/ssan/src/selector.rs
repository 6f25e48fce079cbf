//! The attention selector: per query-key selection energies, Gumbel-Sigmoid
//! relaxed sampling for training, hard thresholding for inference.
//!
//! Energies are E_s = Q_s·K_sᵀ from two dedicated projections of the layer
//! input. During training the binary SELECT/DISCARD decision is relaxed to
//! A = sigmoid((E_s + G' - G'')/τ) with two independent Gumbel noises so the
//! sample stays differentiable in E_s; at inference the decision is
//! A = 1 iff sigmoid(E_s) >= 0.5, ties selecting.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// How a gate was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode {
    /// Relaxed training sample at the given temperature.
    TrainSample { tau: f64 },
    /// Hard maximum-probability decision.
    InferHard,
}

/// Per-(query, key) selection state: probabilities π = sigmoid(E_s) and the
/// gate sample A actually applied to attention.
#[derive(Debug, Clone)]
pub struct GateMatrix {
    pub probs: Tensor,
    pub sample: Tensor,
    pub mode: GateMode,
}

impl GateMatrix {
    /// Fraction of SELECT decisions; meaningful for hard gates.
    pub fn select_rate(&self) -> f64 {
        let n = self.sample.numel() as f64;
        self.sample.data().iter().sum::<f64>() / n
    }
}

/// Tape handles of the two selector projections (W_Qs, W_Ks), both
/// d_model × d_model.
#[derive(Debug, Clone, Copy)]
pub struct SelectorParams {
    pub w_query: Var,
    pub w_key: Var,
}

/// E_s = (H·W_Qs)(H·W_Ks)ᵀ. No scaling by default; `scale` divides by
/// sqrt(d) for callers worried about sigmoid saturation at larger widths.
pub fn selection_energies(
    tape: &mut Tape,
    h: Var,
    params: &SelectorParams,
    scale: bool,
) -> Result<Var> {
    let d = tape.value(h).cols();
    for w in [params.w_query, params.w_key] {
        let shape = tape.value(w).shape().to_vec();
        if shape != [d, d] {
            return Err(Error::Dimension {
                op: "selection_energies",
                lhs: tape.value(h).shape().to_vec(),
                rhs: shape,
            });
        }
    }
    let q = tape.matmul(h, params.w_query)?;
    let k = tape.matmul(h, params.w_key)?;
    let kt = tape.transpose(k)?;
    let energies = tape.matmul(q, kt)?;
    if scale {
        tape.scale(energies, 1.0 / (d as f64).sqrt())
    } else {
        Ok(energies)
    }
}

/// Map a uniform draw to a standard Gumbel variate, clamping away 0 and 1.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(1e-12, 1.0 - 1e-12);
    -(-u.ln()).ln()
}

/// Fresh standard Gumbel noise tensor.
pub fn gumbel_noise<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| gumbel_from_uniform(rng.random::<f64>()))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape/data consistent by construction")
}

/// Relaxed training-time gate with fresh independent noises.
pub fn gumbel_sigmoid<R: Rng>(
    tape: &mut Tape,
    energies: Var,
    tau: f64,
    rng: &mut R,
) -> Result<(Var, GateMatrix)> {
    let shape = tape.value(energies).shape().to_vec();
    let noise_select = gumbel_noise(&shape, rng);
    let noise_discard = gumbel_noise(&shape, rng);
    gumbel_sigmoid_with_noise(tape, energies, tau, &noise_select, &noise_discard)
}

/// Relaxed gate with caller-supplied noises; gradient tests freeze the
/// noise through this entry point.
pub fn gumbel_sigmoid_with_noise(
    tape: &mut Tape,
    energies: Var,
    tau: f64,
    noise_select: &Tensor,
    noise_discard: &Tensor,
) -> Result<(Var, GateMatrix)> {
    if tau <= 0.0 {
        return Err(Error::Config(format!(
            "gumbel_sigmoid temperature must be positive, got {tau}"
        )));
    }
    let probs = sigmoid_values(tape.value(energies));
    let mut combined = noise_select.clone();
    for (c, d) in combined.data_mut().iter_mut().zip(noise_discard.data()) {
        *c -= d;
    }
    let noise = tape.leaf(combined);
    let shifted = tape.add(energies, noise)?;
    let sharpened = tape.scale(shifted, 1.0 / tau)?;
    let sample = tape.sigmoid(sharpened)?;
    let matrix = GateMatrix {
        probs,
        sample: tape.value(sample).clone(),
        mode: GateMode::TrainSample { tau },
    };
    Ok((sample, matrix))
}

/// Hard inference gate: SELECT exactly where sigmoid(E_s) >= 0.5, i.e.
/// E_s >= 0 (ties select).
pub fn infer_hard(tape: &mut Tape, energies: Var) -> Result<(Var, GateMatrix)> {
    let values = tape.value(energies);
    if !values.all_finite() {
        return Err(Error::Numeric("infer_hard: non-finite energies".into()));
    }
    let probs = sigmoid_values(values);
    let mut hard = values.clone();
    for v in hard.data_mut() {
        *v = if *v >= 0.0 { 1.0 } else { 0.0 };
    }
    let sample = tape.leaf(hard.clone());
    let matrix = GateMatrix {
        probs,
        sample: hard,
        mode: GateMode::InferHard,
    };
    Ok((sample, matrix))
}

fn sigmoid_values(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = crate::tensor::stable_sigmoid_value(*v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{check_gradients, DEFAULT_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn energies_on_tape(tape: &mut Tape, h: Tensor, d: usize, rng: &mut ChaCha8Rng) -> Var {
        let h = tape.leaf(h);
        let wq = tape.leaf(Tensor::uniform(&[d, d], 0.5, rng));
        let wk = tape.leaf(Tensor::uniform(&[d, d], 0.5, rng));
        let params = SelectorParams {
            w_query: wq,
            w_key: wk,
        };
        selection_energies(tape, h, &params, false).unwrap()
    }

    #[test]
    fn zero_input_gives_half_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let es = energies_on_tape(&mut tape, Tensor::zeros(&[3, 4]), 4, &mut rng);
        assert!(tape.value(es).data().iter().all(|&e| e == 0.0));
        let (_, gate) = infer_hard(&mut tape, es).unwrap();
        assert!(gate.probs.data().iter().all(|&p| p == 0.5));
        // Tie rule: everything selected.
        assert!(gate.sample.data().iter().all(|&a| a == 1.0));
    }

    #[test]
    fn single_element_energy_is_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let es = energies_on_tape(&mut tape, Tensor::uniform(&[1, 4], 1.0, &mut rng), 4, &mut rng);
        assert_eq!(tape.value(es).shape(), &[1, 1]);
    }

    #[test]
    fn energies_match_direct_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = Tensor::uniform(&[4, 5], 1.0, &mut rng);
        let wq = Tensor::uniform(&[5, 5], 1.0, &mut rng);
        let wk = Tensor::uniform(&[5, 5], 1.0, &mut rng);

        let mut tape = Tape::new();
        let hv = tape.leaf(h.clone());
        let params = SelectorParams {
            w_query: tape.leaf(wq.clone()),
            w_key: tape.leaf(wk.clone()),
        };
        let es = selection_energies(&mut tape, hv, &params, false).unwrap();

        // Direct triple-loop oracle.
        let naive_mm = |a: &Tensor, b: &Tensor| {
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let mut out = Tensor::zeros(&[m, n]);
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a.get2(i, p) * b.get2(p, j);
                    }
                    out.set2(i, j, s);
                }
            }
            out
        };
        let expected = naive_mm(&naive_mm(&h, &wq), &naive_mm(&h, &wk).transposed());
        for (got, want) in tape.value(es).data().iter().zip(expected.data()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gumbel_analytic_fixed_points() {
        assert!((gumbel_from_uniform(1.0 / std::f64::consts::E) - 0.0).abs() < 1e-12);
        let at_half = gumbel_from_uniform(0.5);
        assert!((at_half - 0.36651292058166435).abs() < 1e-12);
    }

    #[test]
    fn gumbel_mean_approaches_euler_mascheroni() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 1_000_000;
        let noise = gumbel_noise(&[n, 1], &mut rng);
        let mean = noise.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5772156649).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn frozen_equal_noises_give_exactly_half() {
        let mut tape = Tape::new();
        let es = tape.leaf(Tensor::zeros(&[2, 2]));
        let noise = Tensor::filled(&[2, 2], 0.83);
        let (_, gate) = gumbel_sigmoid_with_noise(&mut tape, es, 0.5, &noise, &noise).unwrap();
        assert!(gate.sample.data().iter().all(|&a| a == 0.5));
    }

    #[test]
    fn low_temperature_saturates_to_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut saturated = 0;
        let mut total = 0;
        for _ in 0..200 {
            let mut tape = Tape::new();
            let es = tape.leaf(Tensor::uniform(&[3, 3], 2.0, &mut rng));
            let shape = [3usize, 3];
            let g1 = gumbel_noise(&shape, &mut rng);
            let g2 = gumbel_noise(&shape, &mut rng);
            let es_vals = tape.value(es).clone();
            let (_, gate) = gumbel_sigmoid_with_noise(&mut tape, es, 0.01, &g1, &g2).unwrap();
            for i in 0..9 {
                let drive = es_vals.data()[i] + g1.data()[i] - g2.data()[i];
                if drive.abs() > 0.1 {
                    total += 1;
                    let a = gate.sample.data()[i];
                    if a.min(1.0 - a) < 1e-3 {
                        saturated += 1;
                    }
                }
            }
        }
        assert!(total > 500);
        assert_eq!(saturated, total);
    }

    #[test]
    fn select_probability_matches_logistic_cdf() {
        // P(A > 0.5) = P(E_s + G' - G'' > 0) = sigmoid(E_s): the difference
        // of two independent Gumbels is standard logistic.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let draws = 100_000;
        for &e in &[-2.0f64, 0.0, 2.0] {
            let mut selected = 0u32;
            for _ in 0..draws {
                let g1 = gumbel_from_uniform(rng.random::<f64>());
                let g2 = gumbel_from_uniform(rng.random::<f64>());
                let a = crate::tensor::stable_sigmoid_value((e + g1 - g2) / 0.5);
                if a > 0.5 {
                    selected += 1;
                }
            }
            let rate = selected as f64 / draws as f64;
            let expected = crate::tensor::stable_sigmoid_value(e);
            assert!((rate - expected).abs() < 0.01, "E_s={e}: {rate} vs {expected}");
        }
    }

    #[test]
    fn hard_inference_sign_rule_with_tie_select() {
        let mut tape = Tape::new();
        let es = tape.leaf(Tensor::from_rows(&[vec![1.0, -1.0], vec![0.0, 3.0]]).unwrap());
        let (_, gate) = infer_hard(&mut tape, es).unwrap();
        assert_eq!(gate.sample.data(), &[1.0, 0.0, 1.0, 1.0]);
        assert_eq!(gate.mode, GateMode::InferHard);
    }

    #[test]
    fn all_negative_energies_discard_everything() {
        let mut tape = Tape::new();
        let es = tape.leaf(Tensor::filled(&[3, 3], -2.0));
        let (_, gate) = infer_hard(&mut tape, es).unwrap();
        assert!(gate.sample.data().iter().all(|&a| a == 0.0));
        assert_eq!(gate.select_rate(), 0.0);
    }

    #[test]
    fn hard_decision_agrees_with_sample_majority() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut agree = 0;
        let mut total = 0;
        for _ in 0..50 {
            let e: f64 = rng.random_range(-3.0..3.0);
            if e.abs() <= 0.5 {
                continue;
            }
            let mut majority = 0i32;
            for _ in 0..10_000 {
                let g1 = gumbel_from_uniform(rng.random::<f64>());
                let g2 = gumbel_from_uniform(rng.random::<f64>());
                let a = crate::tensor::stable_sigmoid_value(e + g1 - g2);
                majority += if a > 0.5 { 1 } else { -1 };
            }
            let hard = e >= 0.0;
            total += 1;
            if (majority > 0) == hard {
                agree += 1;
            }
        }
        assert!(total >= 30);
        assert!(agree as f64 / total as f64 >= 0.99, "{agree}/{total}");
    }

    #[test]
    fn monotone_in_energy_under_frozen_noise() {
        let g1 = Tensor::filled(&[1, 1], 0.37);
        let g2 = Tensor::filled(&[1, 1], -0.81);
        let mut last = -1.0;
        for step in 0..40 {
            let e = -4.0 + step as f64 * 0.2;
            let mut tape = Tape::new();
            let es = tape.leaf(Tensor::scalar(e));
            let (_, gate) = gumbel_sigmoid_with_noise(&mut tape, es, 0.7, &g1, &g2).unwrap();
            let a = gate.sample.data()[0];
            assert!(a >= last);
            last = a;
        }
    }

    #[test]
    fn gate_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let es = Tensor::uniform(&[3, 3], 1.5, &mut rng);
        let g1 = gumbel_noise(&[3, 3], &mut rng);
        let g2 = gumbel_noise(&[3, 3], &mut rng);
        let report = check_gradients(
            &[es],
            |tape, vars| {
                let (sample, _) =
                    gumbel_sigmoid_with_noise(tape, vars[0], 0.5, &g1, &g2).unwrap();
                tape.sum(sample)
            },
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.passes(1e-5), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn temperature_limit_reaches_indicator() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let e: f64 = rng.random_range(-2.0..2.0);
            let g1 = gumbel_from_uniform(rng.random::<f64>());
            let g2 = gumbel_from_uniform(rng.random::<f64>());
            let drive = e + g1 - g2;
            if drive.abs() <= 0.05 {
                continue;
            }
            let mut tape = Tape::new();
            let es = tape.leaf(Tensor::scalar(e));
            let (_, gate) = gumbel_sigmoid_with_noise(
                &mut tape,
                es,
                1e-3,
                &Tensor::scalar(g1),
                &Tensor::scalar(g2),
            )
            .unwrap();
            let a = gate.sample.data()[0];
            let indicator = if drive > 0.0 { 1.0 } else { 0.0 };
            assert!((a - indicator).abs() < 1e-2, "drive {drive} a {a}");
        }
    }

    #[test]
    fn rejects_non_positive_temperature() {
        let mut tape = Tape::new();
        let es = tape.leaf(Tensor::scalar(0.0));
        let z = Tensor::scalar(0.0);
        assert!(gumbel_sigmoid_with_noise(&mut tape, es, 0.0, &z, &z).is_err());
        assert!(gumbel_sigmoid_with_noise(&mut tape, es, -1.0, &z, &z).is_err());
    }

    #[test]
    fn train_sample_stays_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let mut tape = Tape::new();
            let es = tape.leaf(Tensor::uniform(&[4, 4], 3.0, &mut rng));
            let (_, gate) = gumbel_sigmoid(&mut tape, es, 0.5, &mut rng).unwrap();
            assert!(gate
                .sample
                .data()
                .iter()
                .all(|&a| a > 0.0 && a < 1.0));
            assert!(gate.probs.data().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }
}
