//! Synthetic trade prints through the ingestion path: aggregation, volume
//! marks, an intraday profile and a 07:00-12:00 daily window.
//!
//! `cargo run --release --example ingest_trades`

use neural_hawkes::market::{intraday_profile, synthetic_trades, trades_to_stream, window_filter, VolumeBinning};
use neural_hawkes::{estimate_second_order, preset, StatGrid};

fn main() -> neural_hawkes::Result<()> {
    let spec = preset("benchmark")?.spec;
    let pairs = vec!["BTC-USD".to_string(), "ETH-USD".to_string()];
    // about 2.7 days at the stationary rates
    let mut trades = synthetic_trades(&spec, &pairs, 100_000, 5, 0, 6.0, 2.0)?;
    trades.sort_by_key(|t| t.timestamp_us);
    let (stream, summary) = trades_to_stream(&trades, &pairs, &VolumeBinning::usd_log_grid(), 0, None)?;
    println!("raw trades {:?}, events {:?}, volume {:?}", summary.raw_trades, summary.events, summary.volume_usd);

    let profile = intraday_profile(&stream, 60.0, 0.0)?;
    println!("hourly profile over {} day(s):", profile.days_used);
    for b in profile.bins.iter().step_by(4) {
        println!("  {:>5.0} min  {:.4} ev/s  [{:.4}, {:.4}]", b.start_minute, b.mean_rate, b.ci_low, b.ci_high);
    }

    let windowed = window_filter(&stream, 7.0 * 3600.0, 12.0 * 3600.0, 0.0)?;
    println!("window keeps {} events over {} day segment(s)", windowed.len(), windowed.segments().len());
    let stats = estimate_second_order(&windowed, &StatGrid::build(0.1, 10, 30, 5.0)?)?;
    println!("windowed rates {:?}", stats.rates);
    Ok(())
}
