//! Scaled dot-product self-attention with multi-head support and an
//! optional selector gate.
//!
//! The gate is applied additively in log space to the pre-softmax logits
//! (with a small floor), so a hard 0/1 gate is equivalent to masked
//! attention while soft gates keep usable gradients. One gate is shared by
//! every head.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Head layout for one attention sublayer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub n_heads: usize,
}

impl AttentionConfig {
    pub fn new(d_model: usize, n_heads: usize) -> Result<Self> {
        if d_model == 0 || n_heads == 0 || d_model % n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {d_model} must be a positive multiple of n_heads {n_heads}"
            )));
        }
        Ok(AttentionConfig { d_model, n_heads })
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Tape handles of the four projection matrices, all d_model × d_model.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionSet {
    pub w_query: Var,
    pub w_key: Var,
    pub w_value: Var,
    pub w_output: Var,
}

/// Row-stochastic attention maps, one N×N matrix per head.
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub heads: Vec<Tensor>,
}

impl AttentionWeights {
    pub fn seq_len(&self) -> usize {
        self.heads[0].rows()
    }

    /// Arithmetic mean over heads; still row-stochastic.
    pub fn mean_heads(&self) -> Tensor {
        let mut out = self.heads[0].clone();
        for head in &self.heads[1..] {
            out.add_assign(head);
        }
        out.scale_assign(1.0 / self.heads.len() as f64);
        out
    }
}

/// Single-head scaled dot-product attention over same-shape Q, K, V.
/// Returns the output rows and the attention-weight var.
pub fn scaled_dot_attention(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    gate: Option<Var>,
) -> Result<(Var, Var)> {
    let (n, d) = (tape.value(q).rows(), tape.value(q).cols());
    for other in [k, v] {
        if tape.value(other).shape() != [n, d] {
            return Err(Error::Dimension {
                op: "scaled_dot_attention",
                lhs: tape.value(q).shape().to_vec(),
                rhs: tape.value(other).shape().to_vec(),
            });
        }
    }
    if let Some(g) = gate {
        if tape.value(g).shape() != [n, n] {
            return Err(Error::Dimension {
                op: "scaled_dot_attention gate",
                lhs: vec![n, n],
                rhs: tape.value(g).shape().to_vec(),
            });
        }
    }
    let kt = tape.transpose(k)?;
    let raw = tape.matmul(q, kt)?;
    let mut logits = tape.scale(raw, 1.0 / (d as f64).sqrt())?;
    if let Some(g) = gate {
        let shift = tape.log_gate(g)?;
        logits = tape.add(logits, shift)?;
    }
    let weights = tape.softmax_rows(logits)?;
    let output = tape.matmul(weights, v)?;
    Ok((output, weights))
}

/// Multi-head attention over an input layer H: project to Q/K/V, run each
/// head on its column slice (the same gate gating every head), concatenate
/// and apply the output projection.
pub fn multi_head_forward(
    tape: &mut Tape,
    h: Var,
    proj: &ProjectionSet,
    cfg: &AttentionConfig,
    gate: Option<Var>,
) -> Result<(Var, AttentionWeights)> {
    let d = cfg.d_model;
    if tape.value(h).cols() != d {
        return Err(Error::Dimension {
            op: "multi_head_forward",
            lhs: tape.value(h).shape().to_vec(),
            rhs: vec![d, d],
        });
    }
    for w in [proj.w_query, proj.w_key, proj.w_value, proj.w_output] {
        if tape.value(w).shape() != [d, d] {
            return Err(Error::Dimension {
                op: "multi_head_forward projection",
                lhs: vec![d, d],
                rhs: tape.value(w).shape().to_vec(),
            });
        }
    }

    let q = tape.matmul(h, proj.w_query)?;
    let k = tape.matmul(h, proj.w_key)?;
    let v = tape.matmul(h, proj.w_value)?;

    let head_dim = cfg.head_dim();
    let mut outputs = Vec::with_capacity(cfg.n_heads);
    let mut maps = Vec::with_capacity(cfg.n_heads);
    for head in 0..cfg.n_heads {
        let start = head * head_dim;
        let qh = tape.slice_cols(q, start, head_dim)?;
        let kh = tape.slice_cols(k, start, head_dim)?;
        let vh = tape.slice_cols(v, start, head_dim)?;
        let (out, weights) = scaled_dot_attention(tape, qh, kh, vh, gate)?;
        outputs.push(out);
        maps.push(tape.value(weights).clone());
    }
    let merged = tape.concat_cols(&outputs)?;
    let projected = tape.matmul(merged, proj.w_output)?;
    Ok((projected, AttentionWeights { heads: maps }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf(tape: &mut Tape, t: Tensor) -> Var {
        tape.leaf(t)
    }

    fn naive_mm(a: &Tensor, b: &Tensor) -> Tensor {
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
    }

    /// Plain, direct reference attention used as the oracle.
    fn naive_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> (Tensor, Tensor) {
        let n = q.rows();
        let d = q.cols() as f64;
        let mut logits = naive_mm(q, &k.transposed());
        logits.scale_assign(1.0 / d.sqrt());
        let mut weights = logits.clone();
        for i in 0..n {
            let row: Vec<f64> = weights.row(i).to_vec();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (j, e) in exps.iter().enumerate() {
                weights.set2(i, j, e / total);
            }
        }
        let out = naive_mm(&weights, v);
        (out, weights)
    }

    #[test]
    fn single_element_attends_to_itself() {
        let mut tape = Tape::new();
        let q = leaf(&mut tape, Tensor::from_rows(&[vec![0.3, -0.7]]).unwrap());
        let k = leaf(&mut tape, Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let v = leaf(&mut tape, Tensor::from_rows(&[vec![5.0, 6.0]]).unwrap());
        let (out, weights) = scaled_dot_attention(&mut tape, q, k, v, None).unwrap();
        assert_eq!(tape.value(weights).data(), &[1.0]);
        assert_eq!(tape.value(out).data(), &[5.0, 6.0]);
    }

    #[test]
    fn orthogonal_queries_give_uniform_weights_and_mean_value() {
        let mut tape = Tape::new();
        let q = leaf(&mut tape, Tensor::zeros(&[3, 2]));
        let k = leaf(
            &mut tape,
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap(),
        );
        let v = leaf(
            &mut tape,
            Tensor::from_rows(&[vec![3.0, 0.0], vec![0.0, 3.0], vec![3.0, 3.0]]).unwrap(),
        );
        let (out, weights) = scaled_dot_attention(&mut tape, q, k, v, None).unwrap();
        for &w in tape.value(weights).data() {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        for i in 0..3 {
            assert!((tape.value(out).get2(i, 0) - 2.0).abs() < 1e-12);
            assert!((tape.value(out).get2(i, 1) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let q = Tensor::uniform(&[4, 8], 1.0, &mut rng);
        let k = Tensor::uniform(&[4, 8], 1.0, &mut rng);
        let v = Tensor::uniform(&[4, 8], 1.0, &mut rng);
        let (want_out, want_w) = naive_attention(&q, &k, &v);

        let mut tape = Tape::new();
        let (qv, kv, vv) = (tape.leaf(q), tape.leaf(k), tape.leaf(v));
        let (out, weights) = scaled_dot_attention(&mut tape, qv, kv, vv, None).unwrap();
        for (g, w) in tape.value(out).data().iter().zip(want_out.data()) {
            assert!((g - w).abs() < 1e-12);
        }
        for (g, w) in tape.value(weights).data().iter().zip(want_w.data()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    fn random_projection_set(
        tape: &mut Tape,
        d: usize,
        rng: &mut ChaCha8Rng,
    ) -> (ProjectionSet, [Tensor; 4]) {
        let tensors = [
            Tensor::uniform(&[d, d], 0.5, rng),
            Tensor::uniform(&[d, d], 0.5, rng),
            Tensor::uniform(&[d, d], 0.5, rng),
            Tensor::uniform(&[d, d], 0.5, rng),
        ];
        let proj = ProjectionSet {
            w_query: tape.leaf(tensors[0].clone()),
            w_key: tape.leaf(tensors[1].clone()),
            w_value: tape.leaf(tensors[2].clone()),
            w_output: tape.leaf(tensors[3].clone()),
        };
        (proj, tensors)
    }

    #[test]
    fn one_head_reduces_to_plain_attention_with_output_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = 6;
        let h = Tensor::uniform(&[5, d], 1.0, &mut rng);

        let mut tape = Tape::new();
        let hv = tape.leaf(h.clone());
        let (proj, tensors) = random_projection_set(&mut tape, d, &mut rng);
        let cfg = AttentionConfig::new(d, 1).unwrap();
        let (out, _) = multi_head_forward(&mut tape, hv, &proj, &cfg, None).unwrap();

        let q = naive_mm(&h, &tensors[0]);
        let k = naive_mm(&h, &tensors[1]);
        let v = naive_mm(&h, &tensors[2]);
        let (attn, _) = naive_attention(&q, &k, &v);
        let expected = naive_mm(&attn, &tensors[3]);
        for (g, w) in tape.value(out).data().iter().zip(expected.data()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn heads_match_per_slice_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let d = 8;
        let n_heads = 4;
        let h = Tensor::uniform(&[5, d], 1.0, &mut rng);

        let mut tape = Tape::new();
        let hv = tape.leaf(h.clone());
        let (proj, tensors) = random_projection_set(&mut tape, d, &mut rng);
        let cfg = AttentionConfig::new(d, n_heads).unwrap();
        let (_, weights) = multi_head_forward(&mut tape, hv, &proj, &cfg, None).unwrap();

        let q = naive_mm(&h, &tensors[0]);
        let k = naive_mm(&h, &tensors[1]);
        let v = naive_mm(&h, &tensors[2]);
        let hd = d / n_heads;
        let slice = |t: &Tensor, start: usize| {
            let mut out = Tensor::zeros(&[t.rows(), hd]);
            for i in 0..t.rows() {
                for j in 0..hd {
                    out.set2(i, j, t.get2(i, start + j));
                }
            }
            out
        };
        for head in 0..n_heads {
            let start = head * hd;
            let (_, want) =
                naive_attention(&slice(&q, start), &slice(&k, start), &slice(&v, start));
            for (g, w) in weights.heads[head].data().iter().zip(want.data()) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permuting_rows_permutes_outputs_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let d = 6;
        let h = Tensor::uniform(&[4, d], 1.0, &mut rng);
        let perm = [2usize, 0, 3, 1];
        let mut permuted = Tensor::zeros(&[4, d]);
        for (dst, &src) in perm.iter().enumerate() {
            for j in 0..d {
                permuted.set2(dst, j, h.get2(src, j));
            }
        }

        let run = |input: &Tensor, rng_seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let mut tape = Tape::new();
            let hv = tape.leaf(input.clone());
            let (proj, _) = random_projection_set(&mut tape, d, &mut rng);
            let cfg = AttentionConfig::new(d, 2).unwrap();
            let (out, _) = multi_head_forward(&mut tape, hv, &proj, &cfg, None).unwrap();
            tape.value(out).clone()
        };
        let base = run(&h, 99);
        let shuffled = run(&permuted, 99);
        for (dst, &src) in perm.iter().enumerate() {
            for j in 0..d {
                assert!((shuffled.get2(dst, j) - base.get2(src, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_gate_leaves_weights_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let q = Tensor::uniform(&[4, 4], 1.0, &mut rng);
        let k = Tensor::uniform(&[4, 4], 1.0, &mut rng);
        let v = Tensor::uniform(&[4, 4], 1.0, &mut rng);

        let mut tape = Tape::new();
        let (qv, kv, vv) = (tape.leaf(q.clone()), tape.leaf(k.clone()), tape.leaf(v.clone()));
        let (_, plain) = scaled_dot_attention(&mut tape, qv, kv, vv, None).unwrap();
        let plain = tape.value(plain).clone();

        let mut tape = Tape::new();
        let (qv, kv, vv) = (tape.leaf(q), tape.leaf(k), tape.leaf(v));
        let ones = tape.leaf(Tensor::filled(&[4, 4], 1.0));
        let (_, gated) = scaled_dot_attention(&mut tape, qv, kv, vv, Some(ones)).unwrap();
        for (a, b) in tape.value(gated).data().iter().zip(plain.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn near_zero_gate_entry_kills_the_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let q = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        let k = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        let v = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        let mut gate = Tensor::filled(&[3, 3], 1.0);
        gate.set2(0, 2, 1e-12);
        gate.set2(1, 0, 1e-12);

        let mut tape = Tape::new();
        let (qv, kv, vv) = (tape.leaf(q), tape.leaf(k), tape.leaf(v));
        let g = tape.leaf(gate);
        let (_, weights) = scaled_dot_attention(&mut tape, qv, kv, vv, Some(g)).unwrap();
        assert!(tape.value(weights).get2(0, 2) < 1e-6);
        assert!(tape.value(weights).get2(1, 0) < 1e-6);
    }

    #[test]
    fn fully_discarded_row_bypasses_gating() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let q = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        let k = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        let v = Tensor::uniform(&[3, 4], 1.0, &mut rng);

        let mut tape = Tape::new();
        let (qv, kv, vv) = (tape.leaf(q.clone()), tape.leaf(k.clone()), tape.leaf(v.clone()));
        let (_, plain) = scaled_dot_attention(&mut tape, qv, kv, vv, None).unwrap();
        let plain_row = tape.value(plain).row(1).to_vec();

        let mut tape = Tape::new();
        let (qv, kv, vv) = (tape.leaf(q), tape.leaf(k), tape.leaf(v));
        let zeros = tape.leaf(Tensor::zeros(&[3, 3]));
        let (_, gated) = scaled_dot_attention(&mut tape, qv, kv, vv, Some(zeros)).unwrap();
        for (a, b) in tape.value(gated).row(1).iter().zip(plain_row.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn every_returned_weight_matrix_is_row_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..20 {
            let mut tape = Tape::new();
            let hv = tape.leaf(Tensor::uniform(&[6, 8], 1.5, &mut rng));
            let (proj, _) = random_projection_set(&mut tape, 8, &mut rng);
            let cfg = AttentionConfig::new(8, 4).unwrap();
            let (_, weights) = multi_head_forward(&mut tape, hv, &proj, &cfg, None).unwrap();
            for head in &weights.heads {
                for i in 0..head.rows() {
                    let s: f64 = head.row(i).iter().sum();
                    assert!((s - 1.0).abs() < 1e-6);
                }
            }
            let mean = weights.mean_heads();
            for i in 0..mean.rows() {
                let s: f64 = mean.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn config_rejects_indivisible_heads() {
        assert!(AttentionConfig::new(10, 4).is_err());
        assert!(AttentionConfig::new(0, 1).is_err());
        assert!(AttentionConfig::new(8, 4).is_ok());
    }
}
