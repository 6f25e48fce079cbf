//! Central finite-difference gradient checking.
//!
//! Used both by the test suites and by the `grad-check` CLI subcommand. The
//! checker only relies on forward evaluation, so it stays independent of the
//! backward pass it verifies.

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error with an absolute floor so near-zero gradients compare on
/// an absolute scale instead of blowing up the ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Numerical gradient of a scalar function of one tensor via central
/// differences: (f(x+h) - f(x-h)) / 2h per element.
pub fn numerical_gradient<F>(x: &Tensor, mut f: F, step: f64) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let original = probe.data()[i];
        probe.data_mut()[i] = original + step;
        let plus = f(&probe);
        probe.data_mut()[i] = original - step;
        let minus = f(&probe);
        probe.data_mut()[i] = original;
        grad.data_mut()[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Outcome of a full gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error across all checked elements.
    pub max_rel_error: f64,
    /// Total elements compared.
    pub checked: usize,
    /// (input index, element index, analytic, numeric) of the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Compare the tape's gradients against central differences for every
/// element of every input. `build` must deterministically reconstruct the
/// scalar loss from fresh leaves (any randomness frozen outside).
pub fn check_gradients<F>(inputs: &[Tensor], build: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
        })
        .collect();

    // Numeric pass, one input at a time.
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (which, input) in inputs.iter().enumerate() {
        let eval = |probe: &Tensor| -> f64 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(i, t)| tape.leaf(if i == which { probe.clone() } else { t.clone() }))
                .collect();
            let loss = build(&mut tape, &vars).expect("forward rebuild failed");
            tape.value(loss).data()[0]
        };
        let numeric = numerical_gradient(input, eval, step);
        for i in 0..input.numel() {
            let a = analytic[which].data()[i];
            let n = numeric.data()[i];
            let err = relative_error(a, n);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((which, i, a, n));
            }
        }
    }
    Ok(report)
}
