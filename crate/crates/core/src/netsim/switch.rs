//! Switch forwarding logic, independent of threads and channels.

use std::collections::BTreeMap;

use crate::clock::Micros;
use crate::wire::{Action, DatapathId, FlowRule, Frame};

/// A rule as held in a switch table, with its install time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowEntry {
    pub rule: FlowRule,
    pub installed_at: Micros,
}

impl FlowEntry {
    /// Expiry instant for rules with a hard timeout.
    pub fn expires_at(&self) -> Option<Micros> {
        (self.rule.hard_timeout_s > 0)
            .then(|| self.installed_at + self.rule.hard_timeout_s as u64 * 1_000_000)
    }
}

/// Flow table kept ordered by (priority desc, rule_id asc); the first match wins.
#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    entries: Vec<FlowEntry>,
}

impl FlowTable {
    fn position(&self, rule: &FlowRule) -> usize {
        self.entries
            .partition_point(|e| (std::cmp::Reverse(e.rule.priority), e.rule.rule_id) < (std::cmp::Reverse(rule.priority), rule.rule_id))
    }

    pub fn insert(&mut self, rule: FlowRule, now: Micros) {
        self.remove(rule.rule_id);
        let at = self.position(&rule);
        self.entries.insert(
            at,
            FlowEntry {
                rule,
                installed_at: now,
            },
        );
    }

    pub fn remove(&mut self, rule_id: u64) -> Option<FlowEntry> {
        let at = self.entries.iter().position(|e| e.rule.rule_id == rule_id)?;
        Some(self.entries.remove(at))
    }

    /// Replaces priority, match, actions and timeout of an existing rule while
    /// keeping its counters and install time. Returns false if absent.
    pub fn modify(&mut self, rule: FlowRule) -> bool {
        let Some(old) = self.remove(rule.rule_id) else {
            return false;
        };
        let updated = FlowRule {
            packet_count: old.rule.packet_count,
            byte_count: old.rule.byte_count,
            ..rule
        };
        let at = self.position(&updated);
        self.entries.insert(
            at,
            FlowEntry {
                rule: updated,
                installed_at: old.installed_at,
            },
        );
        true
    }

    pub fn lookup(&self, in_port: u16, frame: &Frame) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.rule.matcher.matches(in_port, frame))
    }

    pub fn entries(&self) -> &[FlowEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_expiry(&self) -> Option<Micros> {
        self.entries.iter().filter_map(FlowEntry::expires_at).min()
    }

    fn expire(&mut self, now: Micros) -> Vec<FlowRule> {
        let mut removed = Vec::new();
        self.entries.retain(|e| match e.expires_at() {
            Some(at) if now >= at => {
                removed.push(e.rule.clone());
                false
            }
            _ => true,
        });
        removed
    }

    fn is_ordered(&self) -> bool {
        self.entries.windows(2).all(|w| {
            (std::cmp::Reverse(w[0].rule.priority), w[0].rule.rule_id)
                < (std::cmp::Reverse(w[1].rule.priority), w[1].rule.rule_id)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortState {
    pub up: bool,
}

#[derive(Debug, Clone)]
pub struct SwitchState {
    pub dpid: DatapathId,
    pub table: FlowTable,
    pub ports: BTreeMap<u16, PortState>,
}

impl SwitchState {
    pub fn new(dpid: DatapathId, ports: impl IntoIterator<Item = u16>) -> SwitchState {
        SwitchState {
            dpid,
            table: FlowTable::default(),
            ports: ports
                .into_iter()
                .map(|p| (p, PortState { up: true }))
                .collect(),
        }
    }

    pub fn port_up(&self, port: u16) -> bool {
        self.ports.get(&port).is_some_and(|p| p.up)
    }

    /// Up ports other than `except`.
    pub fn flood_ports(&self, except: Option<u16>) -> Vec<u16> {
        self.ports
            .iter()
            .filter(|(p, s)| s.up && Some(**p) != except)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// What a switch does in response to a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Output { port: u16, frame: Frame },
    PacketIn { in_port: u16, frame: Frame },
    FlowRemoved(FlowRule),
}

/// Removes every rule whose hard timeout has elapsed at `now`.
pub fn expire_flows(st: &mut SwitchState, now: Micros) -> Vec<FlowRule> {
    let removed = st.table.expire(now);
    debug_assert!(st.table.is_ordered());
    removed
}

/// Handles a frame arriving on `in_port`.
///
/// Expired rules are swept first and reported as `FlowRemoved`. Then the highest
/// priority matching rule is applied, or the frame goes to the controller on a miss.
pub fn switch_rx(st: &mut SwitchState, in_port: u16, frame: &Frame, now: Micros) -> Vec<Effect> {
    let mut effects: Vec<Effect> = expire_flows(st, now)
        .into_iter()
        .map(Effect::FlowRemoved)
        .collect();

    let Some(idx) = st.table.lookup(in_port, frame) else {
        effects.push(Effect::PacketIn {
            in_port,
            frame: frame.clone(),
        });
        return effects;
    };

    let entry = &mut st.table.entries[idx];
    entry.rule.packet_count += 1;
    entry.rule.byte_count += frame.wire_len() as u64;
    let actions = entry.rule.actions.clone();

    for action in actions {
        match action {
            Action::Output(port) => {
                if !st.ports.contains_key(&port) {
                    log::debug!("{}: stale rule outputs to missing port {port}", st.dpid);
                } else if st.port_up(port) {
                    effects.push(Effect::Output {
                        port,
                        frame: frame.clone(),
                    });
                }
            }
            Action::Flood => {
                for port in st.flood_ports(Some(in_port)) {
                    effects.push(Effect::Output {
                        port,
                        frame: frame.clone(),
                    });
                }
            }
            Action::Drop => {}
            Action::Controller => effects.push(Effect::PacketIn {
                in_port,
                frame: frame.clone(),
            }),
        }
    }
    effects
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{MacAddr, Match, ETH_DATA};

    fn rule(id: u64, prio: u16, m: Match, actions: Vec<Action>, timeout: u32) -> FlowRule {
        FlowRule {
            rule_id: id,
            priority: prio,
            matcher: m,
            actions,
            hard_timeout_s: timeout,
            packet_count: 0,
            byte_count: 0,
        }
    }

    fn frame_to(dst: u32) -> Frame {
        Frame::new(MacAddr::host(dst), MacAddr::host(9), ETH_DATA, vec![0; 50])
    }

    #[test]
    fn miss_goes_to_controller() {
        let mut st = SwitchState::new(DatapathId(1), 1..=3);
        let f = frame_to(2);
        assert_eq!(
            switch_rx(&mut st, 1, &f, 0),
            vec![Effect::PacketIn {
                in_port: 1,
                frame: f
            }]
        );
    }

    #[test]
    fn higher_priority_wins() {
        let mut st = SwitchState::new(DatapathId(1), 1..=3);
        st.table.insert(rule(2, 1, Match::any(), vec![Action::Controller], 0), 0);
        st.table.insert(
            rule(1, 10, Match::eth_dst(MacAddr::host(2)), vec![Action::Output(2)], 0),
            0,
        );
        let f = frame_to(2);
        let fx = switch_rx(&mut st, 1, &f, 0);
        assert_eq!(fx, vec![Effect::Output { port: 2, frame: f.clone() }]);
        assert_eq!(st.table.entries()[0].rule.packet_count, 1);
        assert_eq!(st.table.entries()[0].rule.byte_count, f.wire_len() as u64);
        // other destinations fall through to the wildcard
        let g = frame_to(3);
        assert!(matches!(switch_rx(&mut st, 1, &g, 0)[0], Effect::PacketIn { .. }));
    }

    #[test]
    fn equal_priority_oldest_rule_wins() {
        let mut st = SwitchState::new(DatapathId(1), 1..=3);
        st.table.insert(rule(7, 5, Match::any(), vec![Action::Output(3)], 0), 0);
        st.table.insert(rule(4, 5, Match::any(), vec![Action::Output(2)], 0), 0);
        let fx = switch_rx(&mut st, 1, &frame_to(2), 0);
        assert_eq!(fx.len(), 1);
        assert!(matches!(fx[0], Effect::Output { port: 2, .. }));
    }

    #[test]
    fn flood_skips_ingress_and_down_ports() {
        let mut st = SwitchState::new(DatapathId(1), 1..=4);
        st.ports.get_mut(&3).unwrap().up = false;
        st.table.insert(rule(1, 1, Match::any(), vec![Action::Flood], 0), 0);
        let ports: Vec<u16> = switch_rx(&mut st, 2, &frame_to(5), 0)
            .into_iter()
            .map(|e| match e {
                Effect::Output { port, .. } => port,
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(ports, vec![1, 4]);
    }

    #[test]
    fn stale_output_port_degrades_to_drop() {
        let mut st = SwitchState::new(DatapathId(1), 1..=2);
        st.table.insert(rule(1, 1, Match::any(), vec![Action::Output(9)], 0), 0);
        assert!(switch_rx(&mut st, 1, &frame_to(2), 0).is_empty());
    }

    #[test]
    fn hard_timeout_threshold_is_inclusive() {
        let mut st = SwitchState::new(DatapathId(1), 1..=2);
        st.table.insert(rule(1, 1, Match::any(), vec![Action::Drop], 10), 0);
        st.table.insert(rule(2, 1, Match::any(), vec![Action::Drop], 0), 0);
        assert!(expire_flows(&mut st, 9_990_000).is_empty());
        let removed = expire_flows(&mut st, 10_000_000);
        assert_eq!(removed.len(), 1);
        assert_eq!(removed[0].rule_id, 1);
        // permanent rule survives forever
        assert!(expire_flows(&mut st, u64::MAX / 2).is_empty());
        assert_eq!(st.table.len(), 1);
    }

    #[test]
    fn rx_sweeps_expired_rules_first() {
        let mut st = SwitchState::new(DatapathId(1), 1..=2);
        st.table.insert(rule(1, 1, Match::any(), vec![Action::Output(2)], 1), 0);
        let fx = switch_rx(&mut st, 1, &frame_to(2), 1_000_000);
        assert!(matches!(fx[0], Effect::FlowRemoved(ref r) if r.rule_id == 1));
        assert!(matches!(fx[1], Effect::PacketIn { .. }));
    }

    #[test]
    fn modify_keeps_counters_and_reorders() {
        let mut table = FlowTable::default();
        table.insert(rule(1, 1, Match::any(), vec![Action::Drop], 0), 5);
        table.insert(rule(2, 3, Match::any(), vec![Action::Drop], 0), 5);
        table.entries[1].rule.packet_count = 4;
        assert!(table.modify(rule(1, 9, Match::any(), vec![Action::Output(1)], 0)));
        assert_eq!(table.entries()[0].rule.rule_id, 1);
        assert_eq!(table.entries()[0].rule.packet_count, 4);
        assert_eq!(table.entries()[0].installed_at, 5);
        assert!(!table.modify(rule(99, 1, Match::any(), vec![], 0)));
        assert!(table.is_ordered());
    }
}
