//! Builds a k-ary fat-tree, prints its wiring, and starts it as a live
//! fabric to show the switch Hello messages.
//!
//!     cargo run --example fat_tree -- 4

use std::time::Duration;

use sdn_disagg::netsim::{build_fat_tree, Fabric, FabricConfig};
use sdn_disagg::wire::{decode_sb, SbMessage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k: u32 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(4);
    let spec = build_fat_tree(k)?;
    print!("{}", spec.dump());
    println!(
        "k={k}: {} switches, {} links, {} hosts, connected={}",
        spec.switches.len(),
        spec.links.len(),
        spec.hosts.len(),
        spec.is_connected()
    );

    let fabric = Fabric::start(spec, FabricConfig::default())?;
    let mut ports = 0;
    for ch in fabric.take_channels() {
        if let Ok(SbMessage::Hello { ports: p, .. }) = decode_sb(&ch.rx.recv_timeout(Duration::from_secs(1))?) {
            ports += p.len();
        }
    }
    println!("received Hello from every switch, {ports} ports in total");
    fabric.shutdown();
    Ok(())
}
