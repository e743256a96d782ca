//! Encodes one event of each kind and a southbound message, prints the
//! bytes, and decodes them back.
//!
//!     cargo run --example codec

use sdn_disagg::wire::*;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h1 = MacAddr::host(1);
    let h2 = MacAddr::host(2);
    let frame = Frame::new(h2, h1, ETH_DATA, b"hello".to_vec());
    let rule = FlowRule {
        rule_id: 7,
        priority: 100,
        matcher: Match::eth_dst(h2),
        actions: vec![Action::Output(2)],
        hard_timeout_s: 10,
        packet_count: 0,
        byte_count: 0,
    };
    let bodies = vec![
        EventBody::PacketException { dpid: DatapathId(1), in_port: 1, frame: frame.clone() },
        EventBody::TopologyLink { src_dpid: DatapathId(1), src_port: 2, dst_dpid: DatapathId(2), dst_port: 1, up: true },
        EventBody::TopologyDevice { dpid: DatapathId(3), up: true },
        EventBody::TopologyPort { dpid: DatapathId(3), port: 4, up: false },
        EventBody::FlowRuleEvent { op: FlowRuleOp::Added, dpid: DatapathId(1), rule: rule.clone() },
    ];
    for (seq, body) in bodies.into_iter().enumerate() {
        let event = Event::new(seq as u64, 1_000 * seq as u64, body);
        let bytes = encode_event(&event)?;
        let back = decode_event(&bytes)?;
        assert_eq!(back, event);
        println!("{:<9?} {:>3} bytes  {}", event.kind(), bytes.len(), hex(&bytes));
    }

    let msg = SbMessage::FlowMod { dpid: DatapathId(1), op: FlowOp::Add, rule };
    let bytes = encode_sb(&msg)?;
    assert_eq!(decode_sb(&bytes)?, msg);
    println!("FlowMod   {:>3} bytes  {}", bytes.len(), hex(&bytes));

    // A truncated buffer is rejected, never misread.
    let err = decode_sb(&bytes[..bytes.len() - 3]).unwrap_err();
    println!("truncated: {err}");
    Ok(())
}
