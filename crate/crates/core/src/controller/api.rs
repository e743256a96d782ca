use std::fmt;
use std::str::FromStr;

use crate::wire::{Action, DatapathId, FlowOp, FlowRule, Frame, Match, OutPort};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoreError {
    #[error("unknown datapath {0}")]
    UnknownDatapath(DatapathId),
    #[error("datapath {0} already attached")]
    DuplicateDatapath(DatapathId),
    #[error("{dpid} has no port {port}")]
    UnknownPort { dpid: DatapathId, port: u16 },
    #[error("{dpid} has no rule {rule_id}")]
    UnknownRule { dpid: DatapathId, rule_id: u64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("switch {0} disconnected")]
    Disconnected(DatapathId),
    #[error("transport: {0}")]
    Transport(String),
}

/// How events leave the core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Dispatched synchronously to the compiled-in app.
    Internal,
    /// Pushed to subscriber streams.
    P2p,
    /// Published to per-kind topics.
    Broker,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Internal, Mode::P2p, Mode::Broker];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Internal => "internal",
            Mode::P2p => "p2p",
            Mode::Broker => "broker",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "internal" => Ok(Mode::Internal),
            "p2p" => Ok(Mode::P2p),
            "broker" => Ok(Mode::Broker),
            other => Err(format!("unknown mode {other:?} (internal, p2p, broker)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowModRequest {
    pub dpid: DatapathId,
    pub op: FlowOp,
    /// Ignored for ADD, which always gets a fresh id.
    pub rule_id: u64,
    pub priority: u16,
    pub matcher: Match,
    pub actions: Vec<Action>,
    pub hard_timeout_s: u32,
}

impl FlowModRequest {
    pub fn add(
        dpid: DatapathId,
        priority: u16,
        matcher: Match,
        actions: Vec<Action>,
        hard_timeout_s: u32,
    ) -> FlowModRequest {
        FlowModRequest {
            dpid,
            op: FlowOp::Add,
            rule_id: 0,
            priority,
            matcher,
            actions,
            hard_timeout_s,
        }
    }

    pub fn remove(dpid: DatapathId, rule_id: u64) -> FlowModRequest {
        FlowModRequest {
            dpid,
            op: FlowOp::Remove,
            rule_id,
            priority: 0,
            matcher: Match::any(),
            actions: Vec::new(),
            hard_timeout_s: 0,
        }
    }

    /// Replaces priority, match, actions and timeout of an existing rule.
    pub fn modify(
        dpid: DatapathId,
        rule_id: u64,
        priority: u16,
        matcher: Match,
        actions: Vec<Action>,
        hard_timeout_s: u32,
    ) -> FlowModRequest {
        FlowModRequest {
            op: FlowOp::Modify,
            rule_id,
            ..FlowModRequest::add(dpid, priority, matcher, actions, hard_timeout_s)
        }
    }

    pub(crate) fn to_rule(&self, rule_id: u64) -> FlowRule {
        FlowRule {
            rule_id,
            priority: self.priority,
            matcher: self.matcher,
            actions: self.actions.clone(),
            hard_timeout_s: self.hard_timeout_s,
            packet_count: 0,
            byte_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatapathInfo {
    pub dpid: DatapathId,
    /// (port, up)
    pub ports: Vec<(u16, bool)>,
}

/// The packet-return and flow-programming interface the core offers to apps,
/// in-process or over a socket.
pub trait ControlApi: Send + Sync {
    fn packet_out(&self, dpid: DatapathId, out: OutPort, frame: Frame) -> Result<(), CoreError>;

    /// Applies the request and returns the rule id it affected.
    fn flow_mod(&self, req: FlowModRequest) -> Result<u64, CoreError>;

    fn flows(&self, dpid: DatapathId) -> Result<Vec<FlowRule>, CoreError>;

    fn datapaths(&self) -> Result<Vec<DatapathInfo>, CoreError>;

    /// Raises a TopologyLink event on behalf of a discovery service.
    fn report_link(
        &self,
        src: (DatapathId, u16),
        dst: (DatapathId, u16),
        up: bool,
    ) -> Result<(), CoreError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("kafka".parse::<Mode>().is_err());
        assert_eq!("P2P".parse::<Mode>().unwrap(), Mode::P2p);
    }

    #[test]
    fn modify_keeps_id() {
        let m = FlowModRequest::modify(DatapathId(1), 7, 3, Match::any(), vec![Action::Drop], 0);
        assert_eq!(m.op, FlowOp::Modify);
        assert_eq!(m.rule_id, 7);
        assert_eq!(m.to_rule(7).priority, 3);
    }
}
