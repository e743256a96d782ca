//! A short throughput run: two connection counts, both install channels,
//! with a 1 s hard timeout so rules expire and are reinstalled mid-run.
//! The full-size experiment is `bench tp`.

use std::time::Duration;

use sdn_disagg::bench::{report, run_throughput, TpConfig};
use sdn_disagg::controller::Mode;
use sdn_disagg::services::Install;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = TpConfig {
        duration: Duration::from_secs(3),
        conns: vec![1, 4],
        modes: vec![Mode::Internal, Mode::P2p],
        installs: vec![Install::Direct, Install::Rest],
        hard_timeout_s: 1,
        ..TpConfig::default()
    };
    let result = run_throughput(&cfg)?;
    print!("{}", report::tp_text(&result));
    Ok(())
}
