mod common;

use proptest::prelude::*;
use sdn_disagg::wire::*;

macro_rules! family {
    ($($test:ident => $name:literal),* $(,)?) => {$(
        #[test]
        fn $test() {
            assert_eq!(common::run_codec_family($name, 1000).unwrap(), 1000);
        }
    )*};
}

family! {
    packet_exception_round_trips => "event/packet_exception",
    topology_link_round_trips => "event/topology_link",
    topology_device_round_trips => "event/topology_device",
    topology_port_round_trips => "event/topology_port",
    flow_rule_event_round_trips => "event/flow_rule",
    hello_round_trips => "sb/hello",
    packet_in_round_trips => "sb/packet_in",
    packet_out_round_trips => "sb/packet_out",
    flow_mod_round_trips => "sb/flow_mod",
    port_status_round_trips => "sb/port_status",
}

#[test]
fn every_family_is_covered() {
    assert_eq!(common::codec_families().len(), 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Cutting an encoded message anywhere is reported, never misread.
    #[test]
    fn truncation_is_an_error(e in common::arb_frame(), cut in 0usize..2000) {
        let ev = Event::new(1, 2, EventBody::PacketException { dpid: DatapathId(3), in_port: 4, frame: e });
        let bytes = encode_event(&ev).unwrap();
        let cut = cut % bytes.len();
        prop_assert!(decode_event(&bytes[..cut]).is_err());
    }

    #[test]
    fn trailing_bytes_are_an_error(rule in common::arb_rule(), extra in prop::collection::vec(any::<u8>(), 1..8)) {
        let mut bytes = encode_sb(&SbMessage::FlowMod { dpid: DatapathId(1), op: FlowOp::Add, rule }).unwrap();
        bytes.extend_from_slice(&extra);
        prop_assert!(decode_sb(&bytes).is_err());
    }

    /// Decoding arbitrary bytes never panics.
    #[test]
    fn garbage_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode_event(&bytes);
        let _ = decode_sb(&bytes);
    }
}

#[test]
fn event_and_sb_magics_do_not_cross() {
    let ev = Event::new(1, 1, EventBody::TopologyDevice { dpid: DatapathId(1), up: true });
    let bytes = encode_event(&ev).unwrap();
    assert_eq!(decode_sb(&bytes), Err(DecodeError::BadMagic(codec::EVENT_MAGIC)));
}
