//! Reverse-mode gradient of a small gated network against central finite
//! differences.
//!
//! `cargo run --example gradient_check`

use neural_hawkes::rng;
use neural_hawkes::{DgmParams, InputScaler};
use rand::Rng;

fn main() -> neural_hawkes::Result<()> {
    let mut r = rng::stream(9, 0);
    let params = DgmParams::init(4, 1, 2, &mut r)?;
    let scaler = InputScaler::for_marks(1e-3, 5)?;
    let points: Vec<(f64, u32, Vec<f64>)> =
        (0..5).map(|_| (r.gen_range(0.01..5.0), r.gen_range(1..=5), vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)])).collect();
    let loss = |p: &DgmParams| -> f64 {
        points.iter().map(|(t, m, c)| p.forward(&scaler, *t, *m).unwrap().iter().zip(c).map(|(u, c)| u * c).sum::<f64>()).sum()
    };
    let grad = params.gradient(&scaler, &points)?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let (mut up, mut down) = (params.clone(), params.clone());
        up.data[k] += h;
        down.data[k] -= h;
        let fd = (loss(&up) - loss(&down)) / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / grad[k].abs().max(fd.abs()).max(1e-8));
    }
    println!("{} parameters, worst relative error {worst:.2e}", params.len());
    for name in params.tensor_names() {
        let t = params.tensor(&name).unwrap();
        println!("  {name}: {}×{}", t.len(), t.first().map_or(0, |r| r.len()));
    }
    Ok(())
}
