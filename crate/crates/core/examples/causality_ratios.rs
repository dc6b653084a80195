//! Spillover, leader, receiver and participation ratios of a known 3-d
//! process, with the baseline recovered from the rates.
//!
//! `cargo run --example causality_ratios`

use neural_hawkes::{causality_report, NormMatrix};

fn main() -> neural_hawkes::Result<()> {
    let norms = NormMatrix::new(vec![vec![0.30, 0.20, 0.05], vec![0.10, 0.25, 0.02], vec![0.15, 0.05, 0.40]])?;
    let baseline = [0.4, 0.3, 0.2];
    let rates = neural_hawkes::norms::stationary_rates(&norms, &baseline)?;
    let r = causality_report(&norms, &rates, &[5.0, 3.0, 2.0])?;

    println!("rates {rates:.4?}, branching ratio {:.4}", r.branching_ratio);
    println!("spillover S[i][j] (impact of j on i, rate-adjusted):");
    for row in &r.spillover {
        println!("  {row:.4?}");
    }
    println!("{:>4} {:>8} {:>8} {:>8} {:>8}", "", "leader", "receiver", "share", "mu");
    let mu = r.baseline.clone().unwrap_or_default();
    for k in 0..rates.len() {
        println!(
            "{:>4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            k + 1,
            r.leader[k],
            r.receiver[k],
            r.participation[k],
            mu.get(k).copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
