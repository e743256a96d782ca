//! A short response-time run across all three modes, printed as a table.
//! The full-size experiment is `bench rt`.

use std::time::Duration;

use sdn_disagg::bench::{report, run_response_time, RtConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let count = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let cfg = RtConfig {
        count,
        block: 10,
        interval: Duration::from_millis(5),
        ..RtConfig::default()
    };
    let result = run_response_time(&cfg)?;
    print!("{}", report::rt_text(&result));
    for m in &result.modes {
        println!("{}: {} switches on the path, {:.1} packet events per ping", m.mode, m.hops, m.events_per_ping());
    }
    Ok(())
}
