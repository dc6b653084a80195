//! Fits the unmarked 2-d benchmark (kernels two orders of magnitude apart)
//! with both the neural solver and the Wiener-Hopf solver, and prints the
//! errors of the diagonal and off-diagonal groups.
//!
//! `cargo run --release --example benchmark_vs_wiener_hopf -- [events] [epochs]`

use neural_hawkes::metrics::error_report;
use neural_hawkes::solver::FittedKernel;
use neural_hawkes::{estimate_second_order, fit, preset, simulate_events, wh_solve, TrainConfig};

fn main() -> neural_hawkes::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let p = preset("benchmark")?;
    let grid = p.grid.build()?;
    let stream = simulate_events(&p.spec, n, 7)?;
    let stats = estimate_second_order(&stream, &grid)?;
    println!("{} events, rates {:?}", stream.len(), stats.rates);

    let config = TrainConfig { quadrature_nodes: 100, epochs, seed: 7, ..TrainConfig::default() };
    let models = fit(&stats, &config)?;
    let neural = FittedKernel::new(&models, 1, grid.horizon)?;
    let wh = wh_solve(&stats, 200)?;

    for (name, report) in [
        ("neural", error_report(&neural, &p.spec, 1000, grid.horizon, grid.t_min)?),
        ("wiener-hopf", error_report(&wh, &p.spec, 1000, grid.horizon, grid.t_min)?),
    ] {
        let diag = report.group(|i, j| i == j);
        let off = report.group(|i, j| i != j);
        println!(
            "{name:>12}: overall Δ̄₂ {:.4} Δ̄∞ {:.4} | diagonal Δ̄₂ {:.4} | off-diagonal Δ̄₂ {:.4}",
            report.normalized_delta_2, report.normalized_delta_inf, diag.0, off.0
        );
        for c in &report.cells {
            println!("    ({},{}) Δ₂ {:.4e} Δ∞ {:.4e} sup {:.3}", c.row, c.col, c.delta_2, c.delta_inf, c.sup_norm);
        }
    }
    Ok(())
}
