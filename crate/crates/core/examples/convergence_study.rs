//! Error decay of the neural fit with the sample size, on a small budget.
//!
//! `cargo run --release --example convergence_study`

use neural_hawkes::metrics::convergence_study;
use neural_hawkes::{preset, TrainConfig};

fn main() -> neural_hawkes::Result<()> {
    let p = preset("convergence-exponential")?;
    let config = TrainConfig { epochs: 60, quadrature_nodes: 60, neurons: 32, ..TrainConfig::default() };
    let report = convergence_study(&p.spec, &[10_000, 40_000, 160_000], &p.grid.build()?, &config, &[1, 2], 500)?;
    for (n, d2, dinf) in &report.mean_errors {
        println!("N={n:>7}  Δ̄₂ {d2:.4}  Δ̄∞ {dinf:.4}");
    }
    println!("log-log slope of Δ̄₂: {:.3}", report.slope_delta_2);
    Ok(())
}
