//! The REST flow endpoint: install, list and delete rules over HTTP and
//! look at the switch table the requests produced.
//!
//!     SDN_REST_ADDR=127.0.0.1:8181 cargo run --example rest_flows

use std::sync::Arc;
use std::time::Duration;

use sdn_disagg::controller::{Controller, CoreConfig, Distribution, RestServer};
use sdn_disagg::netsim::{build_linear, Fabric, FabricConfig};
use sdn_disagg::wire::DatapathId;
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fabric = Fabric::start(build_linear(2, true)?, FabricConfig::default())?;
    let core = Controller::new(CoreConfig::new(Distribution::Internal));
    core.connect_all(fabric.take_channels())?;

    let addr = std::env::var(sdn_disagg::controller::rest::REST_ADDR_ENV).unwrap_or_else(|_| "127.0.0.1:0".into());
    let server = RestServer::start(Arc::new(core.clone()), &addr)?;
    let base = server.base_url();
    println!("REST endpoint at {base}");

    let body = json!({
        "dpid": 1,
        "priority": 100,
        "match": {"eth_dst": "02:00:00:00:00:02"},
        "actions": [{"kind": "OUTPUT", "port": 2}],
        "hard_timeout_s": 10
    });
    let created: serde_json::Value = ureq::post(&format!("{base}/flows")).send_json(body)?.into_json()?;
    println!("POST /flows -> 201 {created}");
    let rule_id = created["rule_id"].as_u64().unwrap();

    let listed: serde_json::Value = ureq::get(&format!("{base}/flows/1")).call()?.into_json()?;
    println!("GET /flows/1 -> {listed}");

    match ureq::post(&format!("{base}/flows")).send_json(json!({"dpid": 1, "priority": -1})) {
        Err(ureq::Error::Status(code, resp)) => println!("bad body -> {code} {}", resp.into_string()?),
        other => println!("unexpected: {other:?}"),
    }

    std::thread::sleep(Duration::from_millis(20));
    println!("switch s1 table: {:?}", fabric.flow_table(DatapathId(1))?.iter().map(|e| e.rule.rule_id).collect::<Vec<_>>());

    let resp = ureq::delete(&format!("{base}/flows/1/{rule_id}")).call()?;
    println!("DELETE /flows/1/{rule_id} -> {}", resp.status());
    match ureq::delete(&format!("{base}/flows/1/{rule_id}")).call() {
        Err(ureq::Error::Status(code, _)) => println!("second DELETE -> {code}"),
        other => println!("unexpected: {other:?}"),
    }
    std::thread::sleep(Duration::from_millis(20));
    println!("switch s1 table after delete: {} rules", fabric.flow_table(DatapathId(1))?.len());
    core.shutdown();
    fabric.shutdown();
    Ok(())
}
