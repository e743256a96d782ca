//! CSV output. Column order is fixed; every experiment writes one raw file,
//! one summary file and the event log of its runs.
//!
//! | file            | columns |
//! |-----------------|---------|
//! | rt_raw.csv      | mode,run_index,rtt_micros,lost |
//! | rt_summary.csv  | mode,n,lost,mean_micros,median_micros,p95_micros,p99_micros,min_micros,max_micros,stddev_micros,hops,events_per_ping |
//! | rt_events.csv   | mode,seq,ts_micros,kind,dpid,detail |
//! | tp_raw.csv      | mode,install,n_conns,conn_index,acked_bytes,goodput_bps,retransmits |
//! | tp_summary.csv  | mode,install,n_conns,duration_s,aggregate_bps,flow_mods,expiries,packet_events,mean_install_micros |
//! | tp_events.csv   | mode,install,n_conns,seq,ts_micros,kind,dpid,detail |
//!
//! Raw files start with `#` lines recording the run parameters.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::wire::{Event, EventBody, EventKind};

use super::{BenchError, RtResult, TpResult};

fn kind_name(kind: EventKind) -> &'static str {
    match kind {
        EventKind::Packet => "packet",
        EventKind::Link => "link",
        EventKind::Device => "device",
        EventKind::Port => "port",
        EventKind::FlowRule => "flow_rule",
    }
}

/// (kind, dpid, detail) columns of an event row.
pub fn describe(e: &Event) -> (&'static str, String, String) {
    let kind = kind_name(e.kind());
    match &e.body {
        EventBody::PacketException {
            dpid,
            in_port,
            frame,
        } => (
            kind,
            dpid.to_string(),
            format!(
                "in_port={in_port} src={} dst={} ethertype={:#06x} len={}",
                frame.src,
                frame.dst,
                frame.ethertype,
                frame.payload.len()
            ),
        ),
        EventBody::TopologyLink {
            src_dpid,
            src_port,
            dst_dpid,
            dst_port,
            up,
        } => (
            kind,
            src_dpid.to_string(),
            format!(
                "{src_dpid}:{src_port}->{dst_dpid}:{dst_port} {}",
                if *up { "up" } else { "down" }
            ),
        ),
        EventBody::TopologyDevice { dpid, up } => (
            kind,
            dpid.to_string(),
            (if *up { "up" } else { "down" }).to_string(),
        ),
        EventBody::TopologyPort { dpid, port, up } => (
            kind,
            dpid.to_string(),
            format!("port={port} {}", if *up { "up" } else { "down" }),
        ),
        EventBody::FlowRuleEvent { op, dpid, rule } => (
            kind,
            dpid.to_string(),
            format!(
                "{} rule_id={} priority={} timeout={}",
                format!("{op:?}").to_uppercase(),
                rule.rule_id,
                rule.priority,
                rule.hard_timeout_s
            ),
        ),
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), BenchError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

fn f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.1}")
    }
}

pub fn write_rt(result: &RtResult, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if result.modes.is_empty() {
        return Err(BenchError::InvalidConfig("no results to write".into()));
    }
    let c = &result.config;
    let (raw_path, mut raw) = create(dir, "rt_raw.csv")?;
    writeln!(raw, "# experiment=response_time topology={} count={} warmup={}", c.topology, c.count, c.warmup)?;
    writeln!(
        raw,
        "# ping_interval_ms={} payload_bytes={} timeout_ms={} link_latency_us={} broker_poll_us={} flow_install=none",
        c.interval.as_millis(),
        c.payload_len,
        c.timeout.as_millis(),
        c.link_latency.as_micros(),
        c.poll_interval.as_micros()
    )?;
    let mut w = csv::Writer::from_writer(raw);
    w.write_record(["mode", "run_index", "rtt_micros", "lost"])?;
    for m in &result.modes {
        for (i, s) in m.samples.iter().enumerate() {
            let rtt = s.map(|d| d.as_micros().to_string()).unwrap_or_default();
            let lost = if s.is_none() { "1" } else { "0" };
            w.write_record([m.mode.name(), &i.to_string(), &rtt, lost])?;
        }
    }
    w.flush()?;

    let (sum_path, file) = create(dir, "rt_summary.csv")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "mode", "n", "lost", "mean_micros", "median_micros", "p95_micros", "p99_micros",
        "min_micros", "max_micros", "stddev_micros", "hops", "events_per_ping",
    ])?;
    for m in &result.modes {
        let s = &m.summary;
        w.write_record([
            m.mode.name().to_string(),
            s.n.to_string(),
            s.lost.to_string(),
            f(s.mean),
            f(s.median),
            f(s.p95),
            f(s.p99),
            f(s.min),
            f(s.max),
            f(s.stddev),
            m.hops.to_string(),
            format!("{:.2}", m.events_per_ping()),
        ])?;
    }
    w.flush()?;

    let (ev_path, file) = create(dir, "rt_events.csv")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["mode", "seq", "ts_micros", "kind", "dpid", "detail"])?;
    for m in &result.modes {
        for e in &m.events {
            let (kind, dpid, detail) = describe(e);
            w.write_record([m.mode.name(), &e.seq.to_string(), &e.ts_micros.to_string(), kind, &dpid, &detail])?;
        }
    }
    w.flush()?;
    Ok(vec![raw_path, sum_path, ev_path])
}

pub fn write_tp(result: &TpResult, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if result.runs.is_empty() {
        return Err(BenchError::InvalidConfig("no results to write".into()));
    }
    let c = &result.config;
    let (raw_path, mut raw) = create(dir, "tp_raw.csv")?;
    writeln!(
        raw,
        "# experiment=throughput topology={} duration_s={} hard_timeout_s={}",
        c.topology,
        c.duration.as_secs_f64(),
        c.hard_timeout_s
    )?;
    writeln!(
        raw,
        "# segment_bytes={} link_latency_us={} broker_poll_us={}",
        c.segment_bytes,
        c.link_latency.as_micros(),
        c.poll_interval.as_micros()
    )?;
    let mut w = csv::Writer::from_writer(raw);
    w.write_record(["mode", "install", "n_conns", "conn_index", "acked_bytes", "goodput_bps", "retransmits"])?;
    for r in &result.runs {
        for (i, conn) in r.conns.iter().enumerate() {
            w.write_record([
                r.mode.name().to_string(),
                r.install.to_string(),
                r.n_conns.to_string(),
                i.to_string(),
                conn.acked_bytes.to_string(),
                format!("{:.0}", conn.goodput_bps),
                conn.retransmits.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let (sum_path, file) = create(dir, "tp_summary.csv")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "mode", "install", "n_conns", "duration_s", "aggregate_bps", "flow_mods", "expiries",
        "packet_events", "mean_install_micros",
    ])?;
    for r in &result.runs {
        w.write_record([
            r.mode.name().to_string(),
            r.install.to_string(),
            r.n_conns.to_string(),
            format!("{:.3}", r.duration.as_secs_f64()),
            format!("{:.0}", r.aggregate_bps),
            r.flow_mods.to_string(),
            r.expiries.to_string(),
            r.packet_events.to_string(),
            format!("{:.1}", r.mean_install_micros()),
        ])?;
    }
    w.flush()?;

    let (ev_path, file) = create(dir, "tp_events.csv")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["mode", "install", "n_conns", "seq", "ts_micros", "kind", "dpid", "detail"])?;
    for r in &result.runs {
        for e in &r.events {
            let (kind, dpid, detail) = describe(e);
            w.write_record([
                r.mode.name(),
                &r.install.to_string(),
                &r.n_conns.to_string(),
                &e.seq.to_string(),
                &e.ts_micros.to_string(),
                kind,
                &dpid,
                &detail,
            ])?;
        }
    }
    w.flush()?;
    Ok(vec![raw_path, sum_path, ev_path])
}

/// Human-readable table for stdout.
pub fn rt_text(result: &RtResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:>5} {:>5} {:>10} {:>10} {:>10} {:>10} {:>7}",
        "mode", "n", "lost", "mean_us", "median_us", "p95_us", "max_us", "ev/ping"
    );
    for m in &result.modes {
        let s = &m.summary;
        let _ = writeln!(
            out,
            "{:<9} {:>5} {:>5} {:>10.1} {:>10.1} {:>10.1} {:>10.1} {:>7.2}",
            m.mode.name(),
            s.n,
            s.lost,
            s.mean,
            s.median,
            s.p95,
            s.max,
            m.events_per_ping()
        );
    }
    for c in &result.comparisons {
        let _ = writeln!(
            out,
            "{} < {}: mean gap {:.1} us, median gap {:.1} us, lower in {}/{} blocks (p={:.2e}) -> {}{}",
            c.lower,
            c.higher,
            c.mean_gap_micros,
            c.median_gap_micros,
            c.sign.a_lower,
            c.sign.pairs,
            c.sign.p_value,
            if c.holds() { "holds" } else { "does not hold" },
            c.flag.as_deref().map(|f| format!(" [flag: {f}]")).unwrap_or_default()
        );
    }
    for p in &result.problems {
        let _ = writeln!(out, "invalid: {p}");
    }
    out
}

pub fn tp_text(result: &TpResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:<7} {:>6} {:>12} {:>9} {:>9} {:>10}",
        "mode", "install", "conns", "Mbit/s", "flow_mods", "expiries", "install_us"
    );
    for r in &result.runs {
        let _ = writeln!(
            out,
            "{:<9} {:<7} {:>6} {:>12.3} {:>9} {:>9} {:>10.1}",
            r.mode.name(),
            r.install.to_string(),
            r.n_conns,
            r.aggregate_bps / 1e6,
            r.flow_mods,
            r.expiries,
            r.mean_install_micros()
        );
    }
    for w in &result.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    for p in &result.problems {
        let _ = writeln!(out, "invalid: {p}");
    }
    out
}
