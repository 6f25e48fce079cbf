//! Finite-difference verification of every differentiable operation and of
//! a full gated encoder layer with frozen selector noise. The `grad-check`
//! CLI subcommand runs the same sweeps.

use ssan::checks::{layer_gradient_sweep, op_gradient_sweeps};

fn main() {
    let seeds = 25;
    let tolerance = 1e-4;
    println!("central finite differences, step 1e-5, {seeds} seeds per op\n");
    let mut worst: f64 = 0.0;
    for outcome in op_gradient_sweeps(seeds).unwrap() {
        println!(
            "{:<14} elements={:<6} max relative error = {:.3e}",
            outcome.name, outcome.checked, outcome.max_rel_error
        );
        worst = worst.max(outcome.max_rel_error);
    }
    let layer = layer_gradient_sweep(seeds).unwrap();
    println!(
        "{:<14} elements={:<6} max relative error = {:.3e}",
        layer.name, layer.checked, layer.max_rel_error
    );
    worst = worst.max(layer.max_rel_error);
    println!(
        "\nworst case {:.3e} — {}",
        worst,
        if worst <= tolerance { "within tolerance" } else { "OVER TOLERANCE" }
    );
}
