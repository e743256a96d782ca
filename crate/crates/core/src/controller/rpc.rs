//! The direct channel over a stream socket, for services running in another
//! process. Requests and responses are length-prefixed frames; message bodies
//! reuse the southbound and event encodings.
//!
//! ```text
//! request  1 packet_out  | SB PacketOut
//!          2 flow_mod    | SB FlowMod (rule_id ignored for ADD)
//!          3 flows       | dpid u64
//!          4 datapaths
//!          5 report_link | TopologyLink event
//! response 0 ok | packet_out, report_link: empty
//!               | flow_mod: rule_id u64
//!               | flows: count u32 | (u32-len SB FlowMod)*
//!               | datapaths: count u32 | (dpid u64 | nports u16 | (port u16 | up u8)*)*
//!          1 error | code u8 | a u64 | b u64 | message str
//! ```

use std::io;
use std::net::{SocketAddr, TcpStream};
use std::sync::{Arc, Mutex};

use byteorder::{BigEndian, ReadBytesExt};

use crate::transport::{self, get_str, put_str, read_frame, write_frame, Server};
use crate::wire::{
    decode_event, decode_sb, encode_event, encode_sb, DatapathId, Event, EventBody, FlowOp,
    FlowRule, Frame, OutPort, SbMessage,
};

use super::api::{ControlApi, CoreError, DatapathInfo, FlowModRequest};

const PACKET_OUT: u8 = 1;
const FLOW_MOD: u8 = 2;
const FLOWS: u8 = 3;
const DATAPATHS: u8 = 4;
const REPORT_LINK: u8 = 5;

const OK: u8 = 0;
const ERR: u8 = 1;

fn bad(e: impl ToString) -> CoreError {
    CoreError::InvalidRequest(e.to_string())
}

fn handle(api: &dyn ControlApi, req: &[u8]) -> Result<Vec<u8>, CoreError> {
    let (&tag, body) = req.split_first().ok_or_else(|| bad("empty request"))?;
    let mut out = vec![OK];
    match tag {
        PACKET_OUT => match decode_sb(body).map_err(bad)? {
            SbMessage::PacketOut {
                dpid,
                out_port,
                frame,
            } => api.packet_out(dpid, out_port, frame)?,
            _ => return Err(bad("expected PacketOut")),
        },
        FLOW_MOD => match decode_sb(body).map_err(bad)? {
            SbMessage::FlowMod { dpid, op, rule } => {
                let id = api.flow_mod(FlowModRequest {
                    dpid,
                    op,
                    rule_id: rule.rule_id,
                    priority: rule.priority,
                    matcher: rule.matcher,
                    actions: rule.actions,
                    hard_timeout_s: rule.hard_timeout_s,
                })?;
                out.extend_from_slice(&id.to_be_bytes());
            }
            _ => return Err(bad("expected FlowMod")),
        },
        FLOWS => {
            let dpid = DatapathId((&body[..]).read_u64::<BigEndian>().map_err(bad)?);
            let rules = api.flows(dpid)?;
            out.extend_from_slice(&(rules.len() as u32).to_be_bytes());
            for rule in rules {
                let msg = encode_sb(&SbMessage::FlowMod {
                    dpid,
                    op: FlowOp::Add,
                    rule,
                })
                .map_err(bad)?;
                out.extend_from_slice(&(msg.len() as u32).to_be_bytes());
                out.extend_from_slice(&msg);
            }
        }
        DATAPATHS => {
            let dps = api.datapaths()?;
            out.extend_from_slice(&(dps.len() as u32).to_be_bytes());
            for dp in dps {
                out.extend_from_slice(&dp.dpid.0.to_be_bytes());
                out.extend_from_slice(&(dp.ports.len() as u16).to_be_bytes());
                for (port, up) in dp.ports {
                    out.extend_from_slice(&port.to_be_bytes());
                    out.push(up as u8);
                }
            }
        }
        REPORT_LINK => match decode_event(body).map_err(bad)?.body {
            EventBody::TopologyLink {
                src_dpid,
                src_port,
                dst_dpid,
                dst_port,
                up,
            } => api.report_link((src_dpid, src_port), (dst_dpid, dst_port), up)?,
            _ => return Err(bad("expected TopologyLink")),
        },
        other => return Err(bad(format!("unknown request tag {other}"))),
    }
    Ok(out)
}

fn error_body(e: &CoreError) -> Vec<u8> {
    let (code, a, b) = match *e {
        CoreError::UnknownDatapath(d) => (1, d.0, 0),
        CoreError::DuplicateDatapath(d) => (2, d.0, 0),
        CoreError::UnknownPort { dpid, port } => (3, dpid.0, port as u64),
        CoreError::UnknownRule { dpid, rule_id } => (4, dpid.0, rule_id),
        CoreError::InvalidRequest(_) => (5, 0, 0),
        CoreError::Disconnected(d) => (6, d.0, 0),
        CoreError::Transport(_) => (7, 0, 0),
    };
    let msg = match e {
        CoreError::InvalidRequest(m) | CoreError::Transport(m) => m.clone(),
        other => other.to_string(),
    };
    let mut out = vec![ERR, code];
    out.extend_from_slice(&a.to_be_bytes());
    out.extend_from_slice(&b.to_be_bytes());
    put_str(&mut out, &msg);
    out
}

fn parse_error(mut r: &[u8]) -> CoreError {
    let parsed = (|| -> io::Result<CoreError> {
        let code = r.read_u8()?;
        let a = r.read_u64::<BigEndian>()?;
        let b = r.read_u64::<BigEndian>()?;
        let msg = get_str(&mut r)?;
        Ok(match code {
            1 => CoreError::UnknownDatapath(DatapathId(a)),
            2 => CoreError::DuplicateDatapath(DatapathId(a)),
            3 => CoreError::UnknownPort {
                dpid: DatapathId(a),
                port: b as u16,
            },
            4 => CoreError::UnknownRule {
                dpid: DatapathId(a),
                rule_id: b,
            },
            5 => CoreError::InvalidRequest(msg),
            6 => CoreError::Disconnected(DatapathId(a)),
            _ => CoreError::Transport(msg),
        })
    })();
    parsed.unwrap_or_else(|e| CoreError::Transport(format!("bad error response: {e}")))
}

/// Serves a [`ControlApi`] to remote services.
pub struct RpcServer {
    server: Server,
}

impl RpcServer {
    pub fn start(api: Arc<dyn ControlApi>, addr: &str) -> io::Result<RpcServer> {
        let server = Server::spawn(addr, "rpc", move |mut stream, _stop| {
            while let Ok(req) = read_frame(&mut stream) {
                let resp = handle(api.as_ref(), &req).unwrap_or_else(|e| error_body(&e));
                if write_frame(&mut stream, &resp).is_err() {
                    break;
                }
            }
        })?;
        Ok(RpcServer { server })
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }

    pub fn stop(&mut self) {
        self.server.stop();
    }
}

/// Client of an [`RpcServer`]; one call in flight at a time.
pub struct RemoteControl {
    stream: Mutex<TcpStream>,
}

impl RemoteControl {
    pub fn connect(addr: SocketAddr) -> io::Result<RemoteControl> {
        Ok(RemoteControl {
            stream: Mutex::new(transport::connect(addr)?),
        })
    }

    fn call(&self, tag: u8, body: &[u8]) -> Result<Vec<u8>, CoreError> {
        let io_err = |e: io::Error| CoreError::Transport(e.to_string());
        let mut req = Vec::with_capacity(1 + body.len());
        req.push(tag);
        req.extend_from_slice(body);
        let mut stream = self.stream.lock().unwrap();
        write_frame(&mut *stream, &req).map_err(io_err)?;
        let resp = read_frame(&mut *stream).map_err(io_err)?;
        match resp.split_first() {
            Some((&OK, rest)) => Ok(rest.to_vec()),
            Some((&ERR, rest)) => Err(parse_error(rest)),
            _ => Err(CoreError::Transport("malformed response".into())),
        }
    }
}

fn short(e: io::Error) -> CoreError {
    CoreError::Transport(format!("short response: {e}"))
}

impl ControlApi for RemoteControl {
    fn packet_out(&self, dpid: DatapathId, out: OutPort, frame: Frame) -> Result<(), CoreError> {
        let msg = encode_sb(&SbMessage::PacketOut {
            dpid,
            out_port: out,
            frame,
        })
        .map_err(bad)?;
        self.call(PACKET_OUT, &msg).map(|_| ())
    }

    fn flow_mod(&self, req: FlowModRequest) -> Result<u64, CoreError> {
        let msg = encode_sb(&SbMessage::FlowMod {
            dpid: req.dpid,
            op: req.op,
            rule: req.to_rule(req.rule_id),
        })
        .map_err(bad)?;
        let resp = self.call(FLOW_MOD, &msg)?;
        (&resp[..]).read_u64::<BigEndian>().map_err(short)
    }

    fn flows(&self, dpid: DatapathId) -> Result<Vec<FlowRule>, CoreError> {
        let resp = self.call(FLOWS, &dpid.0.to_be_bytes())?;
        let mut r = &resp[..];
        let n = r.read_u32::<BigEndian>().map_err(short)?;
        let mut rules = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let len = r.read_u32::<BigEndian>().map_err(short)? as usize;
            if r.len() < len {
                return Err(short(io::ErrorKind::UnexpectedEof.into()));
            }
            let (msg, rest) = r.split_at(len);
            r = rest;
            match decode_sb(msg).map_err(|e| CoreError::Transport(e.to_string()))? {
                SbMessage::FlowMod { rule, .. } => rules.push(rule),
                _ => return Err(CoreError::Transport("expected FlowMod".into())),
            }
        }
        Ok(rules)
    }

    fn datapaths(&self) -> Result<Vec<DatapathInfo>, CoreError> {
        let resp = self.call(DATAPATHS, &[])?;
        let mut r = &resp[..];
        let n = r.read_u32::<BigEndian>().map_err(short)?;
        let mut out = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let dpid = DatapathId(r.read_u64::<BigEndian>().map_err(short)?);
            let np = r.read_u16::<BigEndian>().map_err(short)?;
            let mut ports = Vec::with_capacity(np as usize);
            for _ in 0..np {
                let port = r.read_u16::<BigEndian>().map_err(short)?;
                let up = r.read_u8().map_err(short)? != 0;
                ports.push((port, up));
            }
            out.push(DatapathInfo { dpid, ports });
        }
        Ok(out)
    }

    fn report_link(
        &self,
        src: (DatapathId, u16),
        dst: (DatapathId, u16),
        up: bool,
    ) -> Result<(), CoreError> {
        let ev = Event::new(
            0,
            0,
            EventBody::TopologyLink {
                src_dpid: src.0,
                src_port: src.1,
                dst_dpid: dst.0,
                dst_port: dst.1,
                up,
            },
        );
        let msg = encode_event(&ev).map_err(bad)?;
        self.call(REPORT_LINK, &msg).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{Action, Match};

    /// Records calls and answers with canned values.
    #[derive(Default)]
    struct Echo {
        calls: Mutex<Vec<String>>,
    }

    impl ControlApi for Echo {
        fn packet_out(&self, dpid: DatapathId, out: OutPort, frame: Frame) -> Result<(), CoreError> {
            self.calls
                .lock()
                .unwrap()
                .push(format!("out {dpid} {:?} {}", out, frame.payload.len()));
            Ok(())
        }
        fn flow_mod(&self, req: FlowModRequest) -> Result<u64, CoreError> {
            match req.op {
                FlowOp::Add => Ok(42),
                _ => Err(CoreError::UnknownRule {
                    dpid: req.dpid,
                    rule_id: req.rule_id,
                }),
            }
        }
        fn flows(&self, _dpid: DatapathId) -> Result<Vec<FlowRule>, CoreError> {
            Ok(vec![FlowRule {
                rule_id: 1,
                priority: 2,
                matcher: Match::any(),
                actions: vec![Action::Output(3)],
                hard_timeout_s: 10,
                packet_count: 5,
                byte_count: 500,
            }])
        }
        fn datapaths(&self) -> Result<Vec<DatapathInfo>, CoreError> {
            Ok(vec![DatapathInfo {
                dpid: DatapathId(7),
                ports: vec![(1, true), (2, false)],
            }])
        }
        fn report_link(
            &self,
            src: (DatapathId, u16),
            dst: (DatapathId, u16),
            up: bool,
        ) -> Result<(), CoreError> {
            self.calls
                .lock()
                .unwrap()
                .push(format!("link {}:{} {}:{} {up}", src.0, src.1, dst.0, dst.1));
            Ok(())
        }
    }

    #[test]
    fn calls_cross_the_socket() {
        let echo = Arc::new(Echo::default());
        let mut server = RpcServer::start(echo.clone(), "127.0.0.1:0").unwrap();
        let client = RemoteControl::connect(server.addr()).unwrap();

        let frame = Frame::new(
            crate::wire::MacAddr::host(2),
            crate::wire::MacAddr::host(1),
            crate::wire::ETH_DATA,
            vec![0; 20],
        );
        client.packet_out(DatapathId(3), OutPort::Port(2), frame).unwrap();
        let add = FlowModRequest::add(DatapathId(3), 100, Match::any(), vec![Action::Drop], 10);
        assert_eq!(client.flow_mod(add).unwrap(), 42);
        assert_eq!(
            client.flow_mod(FlowModRequest::remove(DatapathId(3), 9)),
            Err(CoreError::UnknownRule {
                dpid: DatapathId(3),
                rule_id: 9
            })
        );
        assert_eq!(client.flows(DatapathId(3)).unwrap(), echo.flows(DatapathId(3)).unwrap());
        assert_eq!(client.datapaths().unwrap(), echo.datapaths().unwrap());
        client
            .report_link((DatapathId(1), 2), (DatapathId(3), 4), true)
            .unwrap();
        assert_eq!(
            *echo.calls.lock().unwrap(),
            vec!["out s3 Port(2) 20".to_string(), "link s1:2 s3:4 true".to_string()]
        );
        server.stop();
    }
}
