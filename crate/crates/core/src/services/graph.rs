//! The network map as learned from events, with path and flood-set queries.

use std::collections::{btree_map::Entry, BTreeMap, BTreeSet, VecDeque};

use crate::wire::{DatapathId, MacAddr};

/// A switch port.
pub type PortKey = (DatapathId, u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkInfo {
    pub dst: PortKey,
    /// Latest discovery round whose probe crossed this link.
    pub last_seen_round: u32,
}

/// One switch on a path and the port the frame leaves through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Hop {
    pub dpid: DatapathId,
    pub out_port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("no location known for {0}")]
    UnknownHost(MacAddr),
    #[error("switch {0} is not in the map")]
    UnknownSwitch(DatapathId),
    #[error("no path from {from} to {to}")]
    NoPath { from: DatapathId, to: DatapathId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopologyGraph {
    /// Ports per switch with their up flag.
    switches: BTreeMap<DatapathId, BTreeMap<u16, bool>>,
    /// Directed links keyed by source port; a port has at most one link.
    links: BTreeMap<PortKey, LinkInfo>,
    hosts: BTreeMap<MacAddr, PortKey>,
    version: u64,
}

impl TopologyGraph {
    pub fn new() -> TopologyGraph {
        TopologyGraph::default()
    }

    /// Bumped on every structural change.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn add_switch(&mut self, dpid: DatapathId) -> bool {
        if self.switches.contains_key(&dpid) {
            return false;
        }
        self.switches.insert(dpid, BTreeMap::new());
        self.version += 1;
        true
    }

    /// Removes a switch with its links and attached hosts; returns the
    /// removed directed links.
    pub fn remove_switch(&mut self, dpid: DatapathId) -> Vec<(PortKey, PortKey)> {
        if self.switches.remove(&dpid).is_none() {
            return Vec::new();
        }
        let removed: Vec<(PortKey, PortKey)> = self
            .links
            .iter()
            .filter(|(src, l)| src.0 == dpid || l.dst.0 == dpid)
            .map(|(&src, l)| (src, l.dst))
            .collect();
        for (src, _) in &removed {
            self.links.remove(src);
        }
        self.hosts.retain(|_, at| at.0 != dpid);
        self.version += 1;
        removed
    }

    pub fn has_switch(&self, dpid: DatapathId) -> bool {
        self.switches.contains_key(&dpid)
    }

    pub fn switches(&self) -> impl Iterator<Item = DatapathId> + '_ {
        self.switches.keys().copied()
    }

    /// Records a port state; bringing a port down drops the links on it in
    /// both directions, which are returned.
    pub fn set_port(&mut self, dpid: DatapathId, port: u16, up: bool) -> Vec<(PortKey, PortKey)> {
        let Some(ports) = self.switches.get_mut(&dpid) else {
            return Vec::new();
        };
        if ports.insert(port, up) != Some(up) {
            self.version += 1;
        }
        if up {
            return Vec::new();
        }
        match self.links.get(&(dpid, port)).map(|l| l.dst) {
            Some(dst) => {
                self.remove_link((dpid, port), dst);
                vec![((dpid, port), dst), (dst, (dpid, port))]
            }
            None => {
                let incoming: Vec<PortKey> = self
                    .links
                    .iter()
                    .filter(|(_, l)| l.dst == (dpid, port))
                    .map(|(&src, _)| src)
                    .collect();
                let mut removed = Vec::new();
                for src in incoming {
                    self.remove_link(src, (dpid, port));
                    removed.push((src, (dpid, port)));
                }
                removed
            }
        }
    }

    pub fn port_up(&self, at: PortKey) -> bool {
        self.switches
            .get(&at.0)
            .and_then(|p| p.get(&at.1))
            .copied()
            .unwrap_or(false)
    }

    /// Adds or refreshes a directed link; returns true when it is new.
    /// Links to or from unknown switches are refused.
    pub fn add_link(&mut self, src: PortKey, dst: PortKey, round: u32) -> bool {
        if !self.has_switch(src.0) || !self.has_switch(dst.0) || src == dst {
            return false;
        }
        if let Some(l) = self.links.get_mut(&src) {
            if l.dst == dst {
                l.last_seen_round = l.last_seen_round.max(round);
                return false;
            }
        }
        self.links.insert(
            src,
            LinkInfo {
                dst,
                last_seen_round: round,
            },
        );
        // Both ends are now inter-switch ports, not host attachments.
        self.hosts.retain(|_, at| *at != src && *at != dst);
        self.version += 1;
        true
    }

    /// Removes the link between two ports in both directions.
    pub fn remove_link(&mut self, a: PortKey, b: PortKey) -> bool {
        let mut removed = false;
        if self.links.get(&a).is_some_and(|l| l.dst == b) {
            self.links.remove(&a);
            removed = true;
        }
        if self.links.get(&b).is_some_and(|l| l.dst == a) {
            self.links.remove(&b);
            removed = true;
        }
        if removed {
            self.version += 1;
        }
        removed
    }

    pub fn links(&self) -> Vec<(PortKey, PortKey)> {
        self.links.iter().map(|(&src, l)| (src, l.dst)).collect()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_info(&self, src: PortKey) -> Option<LinkInfo> {
        self.links.get(&src).copied()
    }

    fn is_link_port(&self, at: PortKey) -> bool {
        self.links.contains_key(&at) || self.links.values().any(|l| l.dst == at)
    }

    /// Directed links whose last sighting is more than `max_age` rounds
    /// before `round`.
    pub fn stale_links(&self, round: u32, max_age: u32) -> Vec<(PortKey, PortKey)> {
        self.links
            .iter()
            .filter(|(_, l)| round.saturating_sub(l.last_seen_round) > max_age)
            .map(|(&src, l)| (src, l.dst))
            .collect()
    }

    /// Learns or confirms a host location. Observations on inter-switch
    /// ports are ignored; an existing attachment is only replaced when it has
    /// since turned out to be an inter-switch port or its switch is gone.
    pub fn learn_host(&mut self, mac: MacAddr, at: PortKey) -> bool {
        if mac.is_broadcast() || !self.has_switch(at.0) || self.is_link_port(at) {
            return false;
        }
        if let Some(&cur) = self.hosts.get(&mac) {
            if cur == at || (self.has_switch(cur.0) && !self.is_link_port(cur)) {
                return false;
            }
        }
        self.hosts.insert(mac, at);
        self.version += 1;
        true
    }

    pub fn host(&self, mac: MacAddr) -> Option<PortKey> {
        self.hosts.get(&mac).copied()
    }

    pub fn hosts(&self) -> impl Iterator<Item = (MacAddr, PortKey)> + '_ {
        self.hosts.iter().map(|(&m, &p)| (m, p))
    }

    /// Up ports of a switch that carry no known link.
    pub fn edge_ports(&self, dpid: DatapathId) -> Vec<u16> {
        let Some(ports) = self.switches.get(&dpid) else {
            return Vec::new();
        };
        ports
            .iter()
            .filter(|&(&p, &up)| up && !self.is_link_port((dpid, p)))
            .map(|(&p, _)| p)
            .collect()
    }

    /// Undirected neighbours in ascending order: (local port, neighbour, remote port).
    fn neighbours(&self, dpid: DatapathId) -> Vec<(u16, DatapathId, u16)> {
        let mut out: Vec<(u16, DatapathId, u16)> = self
            .links
            .range((dpid, 0)..=(dpid, u16::MAX))
            .map(|(&(_, port), l)| (port, l.dst.0, l.dst.1))
            .collect();
        out.sort_by_key(|&(port, n, _)| (n, port));
        out
    }

    /// Ports on a breadth-first spanning forest rooted at the smallest dpid
    /// of each component. Links are followed in the forward direction only.
    pub fn spanning_tree(&self) -> BTreeMap<DatapathId, BTreeSet<u16>> {
        let mut tree: BTreeMap<DatapathId, BTreeSet<u16>> =
            self.switches.keys().map(|&d| (d, BTreeSet::new())).collect();
        let mut seen = BTreeSet::new();
        for &root in self.switches.keys() {
            if !seen.insert(root) {
                continue;
            }
            let mut queue = VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                for (port, v, vport) in self.neighbours(u) {
                    // Only use links known in both directions.
                    if !self.links.get(&(v, vport)).is_some_and(|l| l.dst == (u, port)) {
                        continue;
                    }
                    if seen.insert(v) {
                        tree.entry(u).or_default().insert(port);
                        tree.entry(v).or_default().insert(vport);
                        queue.push_back(v);
                    }
                }
            }
        }
        tree
    }

    /// Where a flooded frame entering `dpid` at `ingress` must go: spanning
    /// tree ports plus edge ports, never the ingress.
    pub fn flood_ports(&self, dpid: DatapathId, ingress: Option<u16>) -> Vec<u16> {
        let tree = self.spanning_tree();
        let mut ports: BTreeSet<u16> = tree.get(&dpid).cloned().unwrap_or_default();
        ports.extend(self.edge_ports(dpid));
        ports
            .into_iter()
            .filter(|&p| Some(p) != ingress && self.port_up((dpid, p)))
            .collect()
    }

    /// Hop distance to `target` for every switch that can reach it.
    fn distances_to(&self, target: DatapathId) -> BTreeMap<DatapathId, u32> {
        let mut incoming: BTreeMap<DatapathId, Vec<DatapathId>> = BTreeMap::new();
        for (&(src, _), l) in &self.links {
            incoming.entry(l.dst.0).or_default().push(src);
        }
        let mut dist = BTreeMap::from([(target, 0u32)]);
        let mut queue = VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for &u in incoming.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                if let Entry::Vacant(e) = dist.entry(u) {
                    e.insert(d + 1);
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Minimum-hop path from switch `from` to the attachment of `dst`; at each
    /// step the smallest next-hop dpid wins. The last hop outputs to the host port.
    pub fn path_from(&self, from: DatapathId, dst: MacAddr) -> Result<Vec<Hop>, PathError> {
        let target = self.host(dst).ok_or(PathError::UnknownHost(dst))?;
        if !self.has_switch(from) {
            return Err(PathError::UnknownSwitch(from));
        }
        let dist = self.distances_to(target.0);
        let Some(&d0) = dist.get(&from) else {
            return Err(PathError::NoPath {
                from,
                to: target.0,
            });
        };
        let mut hops = Vec::with_capacity(d0 as usize + 1);
        let mut at = from;
        for d in (1..=d0).rev() {
            let (port, next, _) = self
                .neighbours(at)
                .into_iter()
                .find(|(_, n, _)| dist.get(n) == Some(&(d - 1)))
                .expect("distance labels are consistent");
            hops.push(Hop {
                dpid: at,
                out_port: port,
            });
            at = next;
        }
        hops.push(Hop {
            dpid: at,
            out_port: target.1,
        });
        Ok(hops)
    }

    /// Path between two known hosts.
    pub fn shortest_path(&self, src: MacAddr, dst: MacAddr) -> Result<Vec<Hop>, PathError> {
        let from = self.host(src).ok_or(PathError::UnknownHost(src))?;
        self.path_from(from.0, dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(n: u64) -> DatapathId {
        DatapathId(n)
    }

    /// s1 -(2,1)- s2 -(2,1)- s3, each switch with 3 ports.
    fn chain() -> TopologyGraph {
        let mut g = TopologyGraph::new();
        for n in 1..=3 {
            g.add_switch(d(n));
            for p in 1..=3 {
                g.set_port(d(n), p, true);
            }
        }
        for (a, b) in [((d(1), 2), (d(2), 1)), ((d(2), 2), (d(3), 1))] {
            g.add_link(a, b, 1);
            g.add_link(b, a, 1);
        }
        g
    }

    #[test]
    fn links_need_known_switches() {
        let mut g = TopologyGraph::new();
        g.add_switch(d(1));
        assert!(!g.add_link((d(1), 1), (d(2), 1), 0));
        g.add_switch(d(2));
        assert!(g.add_link((d(1), 1), (d(2), 1), 0));
        assert!(!g.add_link((d(1), 1), (d(2), 1), 0));
    }

    #[test]
    fn duplicate_sighting_only_refreshes() {
        let mut g = chain();
        let v = g.version();
        assert!(!g.add_link((d(1), 2), (d(2), 1), 5));
        assert_eq!(g.version(), v);
        assert_eq!(g.link_info((d(1), 2)).unwrap().last_seen_round, 5);
    }

    #[test]
    fn host_on_same_switch() {
        let mut g = chain();
        g.learn_host(MacAddr::host(1), (d(2), 3));
        assert_eq!(
            g.path_from(d(2), MacAddr::host(1)).unwrap(),
            vec![Hop {
                dpid: d(2),
                out_port: 3
            }]
        );
    }

    #[test]
    fn path_along_chain() {
        let mut g = chain();
        g.learn_host(MacAddr::host(1), (d(1), 1));
        g.learn_host(MacAddr::host(2), (d(3), 3));
        let p = g.shortest_path(MacAddr::host(1), MacAddr::host(2)).unwrap();
        assert_eq!(
            p,
            vec![
                Hop { dpid: d(1), out_port: 2 },
                Hop { dpid: d(2), out_port: 2 },
                Hop { dpid: d(3), out_port: 3 },
            ]
        );
        assert_eq!(
            g.shortest_path(MacAddr::host(1), MacAddr::host(9)),
            Err(PathError::UnknownHost(MacAddr::host(9)))
        );
    }

    #[test]
    fn hosts_are_not_learned_on_link_ports() {
        let mut g = chain();
        assert!(!g.learn_host(MacAddr::host(1), (d(2), 1)));
        assert!(g.learn_host(MacAddr::host(1), (d(1), 1)));
        // First observation sticks.
        assert!(!g.learn_host(MacAddr::host(1), (d(3), 3)));
        assert_eq!(g.host(MacAddr::host(1)), Some((d(1), 1)));
    }

    #[test]
    fn port_down_removes_both_directions() {
        let mut g = chain();
        let removed = g.set_port(d(2), 1, false);
        assert_eq!(removed.len(), 2);
        assert_eq!(g.link_count(), 2);
        assert!(g.link_info((d(1), 2)).is_none());
    }

    #[test]
    fn switch_removal_drops_incident_links() {
        let mut g = chain();
        g.learn_host(MacAddr::host(5), (d(2), 3));
        let removed = g.remove_switch(d(2));
        assert_eq!(removed.len(), 4);
        assert_eq!(g.link_count(), 0);
        assert_eq!(g.host(MacAddr::host(5)), None);
    }

    #[test]
    fn stale_links_age_out() {
        let mut g = chain();
        g.add_link((d(1), 2), (d(2), 1), 4);
        let stale = g.stale_links(5, 3);
        assert_eq!(stale.len(), 3);
        assert!(!stale.contains(&((d(1), 2), (d(2), 1))));
    }

    #[test]
    fn flood_set_on_a_triangle_breaks_the_loop() {
        let mut g = TopologyGraph::new();
        for n in 1..=3 {
            g.add_switch(d(n));
            for p in 1..=3 {
                g.set_port(d(n), p, true);
            }
        }
        // s1:2-s2:1, s2:2-s3:1, s3:2-s1:3 ; port 1 of s1 and 3 of s2, s3 are edges.
        for (a, b) in [
            ((d(1), 2), (d(2), 1)),
            ((d(2), 2), (d(3), 1)),
            ((d(3), 2), (d(1), 3)),
        ] {
            g.add_link(a, b, 0);
            g.add_link(b, a, 0);
        }
        let tree = g.spanning_tree();
        let tree_ports: usize = tree.values().map(|p| p.len()).sum();
        assert_eq!(tree_ports, 4, "two tree links, two ends each");
        assert_eq!(g.flood_ports(d(1), Some(1)), vec![2, 3]);
        // s2-s3 is the redundant link.
        assert_eq!(g.flood_ports(d(2), Some(1)), vec![3]);
        assert_eq!(g.flood_ports(d(3), None), vec![2, 3]);
    }
}
