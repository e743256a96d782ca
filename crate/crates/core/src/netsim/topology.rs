//! Static network descriptions and the builders that produce them.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;

use crate::wire::{DatapathId, MacAddr};

use super::NetsimError;

/// One end of a link: a port on a switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub dpid: DatapathId,
    pub port: u16,
}

impl PortRef {
    pub fn new(dpid: u64, port: u16) -> PortRef {
        PortRef {
            dpid: DatapathId(dpid),
            port,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchSpec {
    pub dpid: DatapathId,
    /// Ports are numbered `1..=n_ports`.
    pub n_ports: u16,
}

impl SwitchSpec {
    pub fn ports(&self) -> impl Iterator<Item = u16> {
        1..=self.n_ports
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostSpec {
    pub host_id: u32,
    pub mac: MacAddr,
    pub attachment: PortRef,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NetworkSpec {
    pub switches: Vec<SwitchSpec>,
    /// Bidirectional switch-to-switch links.
    pub links: Vec<(PortRef, PortRef)>,
    pub hosts: Vec<HostSpec>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), NetsimError> {
        let mut dpids = HashSet::new();
        let mut widths = BTreeMap::new();
        for sw in &self.switches {
            if !dpids.insert(sw.dpid) {
                return Err(NetsimError::InvalidSpec(format!("duplicate {}", sw.dpid)));
            }
            widths.insert(sw.dpid, sw.n_ports);
        }
        let mut used = HashSet::new();
        let mut claim = |p: PortRef| -> Result<(), NetsimError> {
            match widths.get(&p.dpid) {
                None => Err(NetsimError::InvalidSpec(format!("unknown switch {}", p.dpid))),
                Some(&n) if p.port == 0 || p.port > n => Err(NetsimError::InvalidSpec(format!(
                    "{} has no port {}",
                    p.dpid, p.port
                ))),
                _ if !used.insert(p) => Err(NetsimError::InvalidSpec(format!(
                    "{} port {} is wired twice",
                    p.dpid, p.port
                ))),
                _ => Ok(()),
            }
        };
        for (a, b) in &self.links {
            claim(*a)?;
            claim(*b)?;
        }
        let mut macs = HashSet::new();
        for h in &self.hosts {
            claim(h.attachment)?;
            if !macs.insert(h.mac) {
                return Err(NetsimError::InvalidSpec(format!("duplicate mac {}", h.mac)));
            }
        }
        Ok(())
    }

    /// Every switch link in both directions.
    pub fn directed_links(&self) -> BTreeSet<(PortRef, PortRef)> {
        self.links
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .collect()
    }

    pub fn host(&self, host_id: u32) -> Option<&HostSpec> {
        self.hosts.iter().find(|h| h.host_id == host_id)
    }

    pub fn host_by_mac(&self, mac: MacAddr) -> Option<&HostSpec> {
        self.hosts.iter().find(|h| h.mac == mac)
    }

    /// Switch adjacency, neighbours sorted by dpid.
    pub fn adjacency(&self) -> BTreeMap<DatapathId, BTreeSet<DatapathId>> {
        let mut adj: BTreeMap<DatapathId, BTreeSet<DatapathId>> = self
            .switches
            .iter()
            .map(|s| (s.dpid, BTreeSet::new()))
            .collect();
        for (a, b) in &self.links {
            adj.entry(a.dpid).or_default().insert(b.dpid);
            adj.entry(b.dpid).or_default().insert(a.dpid);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let Some(start) = adj.keys().next().copied() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for m in &adj[&n] {
                if seen.insert(*m) {
                    queue.push_back(*m);
                }
            }
        }
        seen.len() == adj.len()
    }

    /// Human-readable dump, one line per node or link.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in &self.switches {
            let _ = writeln!(out, "switch {} ports={}", s.dpid, s.n_ports);
        }
        for h in &self.hosts {
            let _ = writeln!(
                out,
                "host h{} mac={} at {}:{}",
                h.host_id, h.mac, h.attachment.dpid, h.attachment.port
            );
        }
        for (a, b) in &self.links {
            let _ = writeln!(out, "link {}:{} <-> {}:{}", a.dpid, a.port, b.dpid, b.port);
        }
        out
    }
}

/// Standard k-ary fat-tree.
///
/// Layout, with `h = k/2`:
///
/// ```text
/// core switches   dpid 1 ..= h*h            port p+1 -> aggregation switch (c / h) of pod p
/// pod p, agg j    dpid h*h + p*k + j + 1     ports 1..=h -> edge switches, h+1+m -> core j*h+m
/// pod p, edge j   dpid h*h + p*k + h + j + 1 ports 1..=h -> hosts,         h+1+i -> agg i
/// hosts           id p*h*h + j*h + x + 1     on edge (p, j) port x+1
/// ```
pub fn build_fat_tree(k: u32) -> Result<NetworkSpec, NetsimError> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(NetsimError::BadArity(k));
    }
    let h = k / 2;
    let cores = h * h;
    let agg = |p: u32, j: u32| DatapathId((cores + p * k + j + 1) as u64);
    let edge = |p: u32, j: u32| DatapathId((cores + p * k + h + j + 1) as u64);
    let port = |n: u32| n as u16;

    let mut spec = NetworkSpec::default();
    for c in 0..cores {
        spec.switches.push(SwitchSpec {
            dpid: DatapathId((c + 1) as u64),
            n_ports: port(k),
        });
    }
    for p in 0..k {
        for j in 0..h {
            spec.switches.push(SwitchSpec {
                dpid: agg(p, j),
                n_ports: port(k),
            });
        }
        for j in 0..h {
            spec.switches.push(SwitchSpec {
                dpid: edge(p, j),
                n_ports: port(k),
            });
        }
    }
    for p in 0..k {
        for j in 0..h {
            for i in 0..h {
                // edge j uplink i <-> agg i downlink j
                spec.links.push((
                    PortRef {
                        dpid: edge(p, j),
                        port: port(h + 1 + i),
                    },
                    PortRef {
                        dpid: agg(p, i),
                        port: port(j + 1),
                    },
                ));
            }
            for m in 0..h {
                spec.links.push((
                    PortRef {
                        dpid: agg(p, j),
                        port: port(h + 1 + m),
                    },
                    PortRef {
                        dpid: DatapathId((j * h + m + 1) as u64),
                        port: port(p + 1),
                    },
                ));
            }
            for x in 0..h {
                let host_id = p * h * h + j * h + x + 1;
                spec.hosts.push(HostSpec {
                    host_id,
                    mac: MacAddr::host(host_id),
                    attachment: PortRef {
                        dpid: edge(p, j),
                        port: port(x + 1),
                    },
                });
            }
        }
    }
    spec.links.sort();
    Ok(spec)
}

/// Chain `s1 - s2 - ... - sn`. Each switch has two ports: port 1 faces `s(i-1)`
/// (or host 1 on `s1`), port 2 faces `s(i+1)` (or host 2 on `sn`). With one
/// switch both hosts hang off `s1`.
pub fn build_linear(n_switches: u32, hosts_at_ends: bool) -> Result<NetworkSpec, NetsimError> {
    if n_switches == 0 {
        return Err(NetsimError::EmptyChain);
    }
    let mut spec = NetworkSpec::default();
    for i in 1..=n_switches {
        spec.switches.push(SwitchSpec {
            dpid: DatapathId(i as u64),
            n_ports: 2,
        });
    }
    for i in 1..n_switches {
        spec.links
            .push((PortRef::new(i as u64, 2), PortRef::new(i as u64 + 1, 1)));
    }
    if hosts_at_ends {
        spec.hosts.push(HostSpec {
            host_id: 1,
            mac: MacAddr::host(1),
            attachment: PortRef::new(1, 1),
        });
        spec.hosts.push(HostSpec {
            host_id: 2,
            mac: MacAddr::host(2),
            attachment: PortRef::new(n_switches as u64, 2),
        });
    }
    Ok(spec)
}

/// Parses `linear:N` or `fat-tree:K`.
pub fn build_named(name: &str) -> Result<NetworkSpec, NetsimError> {
    let (kind, arg) = name
        .split_once(':')
        .ok_or_else(|| NetsimError::InvalidSpec(format!("unknown topology {name:?}")))?;
    let n: u32 = arg
        .parse()
        .map_err(|_| NetsimError::InvalidSpec(format!("bad size in {name:?}")))?;
    match kind {
        "linear" => build_linear(n, true),
        "fat-tree" | "fattree" => build_fat_tree(n),
        _ => Err(NetsimError::InvalidSpec(format!("unknown topology {name:?}"))),
    }
}
