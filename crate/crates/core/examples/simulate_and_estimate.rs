//! Simulates a 1-d exponential Hawkes process and compares the empirical
//! second-order statistics with their closed form `G(t) = 1.5 e^{-t}`.
//!
//! `cargo run --release --example simulate_and_estimate -- [events]`

use neural_hawkes::stats::estimate_with_bootstrap;
use neural_hawkes::{simulate_events, KernelEntry, KernelFamily, KernelSpec, MarkFactor, StatGrid};

fn main() -> neural_hawkes::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let entry = KernelEntry::new(KernelFamily::Exponential { alpha: 1.0, beta: 2.0 }, MarkFactor::Constant);
    let spec = KernelSpec::new(vec![0.5], vec![vec![entry]], 1)?;
    let stream = simulate_events(&spec, n, 1)?;
    let grid = StatGrid::build(0.1, 10, 50, 10.0)?;
    let (stats, se) = estimate_with_bootstrap(&stream, &grid, 50, 1)?;
    println!("{} events, rate {:.4} (stationary value 1)", stream.len(), stats.rates[0]);
    println!("{:>10} {:>10} {:>10} {:>8}", "lag", "Ĝ", "1.5e^-t", "s.e.");
    for (b, &c) in stats.centers().iter().enumerate().step_by(6) {
        println!("{c:>10.4} {:>10.4} {:>10.4} {:>8.4}", stats.g(0, 0, b, 1), 1.5 * (-c).exp(), se[b]);
    }
    Ok(())
}
