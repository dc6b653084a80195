//! Recovers a marked 1-d exponential kernel with the neural solver and
//! prints the fitted and true kernels side by side for each mark.
//!
//! `cargo run --release --example fit_neural -- [events] [epochs]`

use neural_hawkes::kernel::KernelMatrix;
use neural_hawkes::solver::{fitted_norms, FittedKernel};
use neural_hawkes::{estimate_second_order, fit, simulate_events, KernelEntry, KernelFamily, KernelSpec, MarkFactor};
use neural_hawkes::{StatGrid, TrainConfig};

fn main() -> neural_hawkes::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300_000);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(150);

    let entry = KernelEntry::new(KernelFamily::Exponential { alpha: 1.5, beta: 3.0 }, MarkFactor::Linear);
    let spec = KernelSpec::new(vec![0.4], vec![vec![entry]], 3)?;
    let grid = StatGrid::build(0.1, 10, 50, 10.0)?;
    let stats = estimate_second_order(&simulate_events(&spec, n, 2)?, &grid)?;

    let config = TrainConfig { epochs, quadrature_nodes: 100, seed: 2, ..TrainConfig::default() };
    let models = fit(&stats, &config)?;
    let kernel = FittedKernel::new(&models, 3, grid.horizon)?;
    println!("validation loss: first {:.3e}, last {:.3e}", models[0].history[0], models[0].history[epochs - 1]);
    println!("fitted norm {:.4} (true 0.5)", fitted_norms(&models, &stats)?.get(0, 0));
    for m in 1..=3 {
        println!("mark {m}");
        for t in [0.02, 0.1, 0.3, 0.6, 1.0] {
            println!("  t={t:<5} fitted {:>8.4}  true {:>8.4}", kernel.value(0, 0, t, m), spec.value(0, 0, t, m));
        }
    }
    Ok(())
}
