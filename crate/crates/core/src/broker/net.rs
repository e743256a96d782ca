//! Broker over a stream socket. Every request and response is one
//! length-prefixed frame (u32 big-endian length, then body).
//!
//! ```text
//! request  1 publish  | topic str | record u32-len bytes
//!          2 poll     | consumer str | topic str | from u64 | max_records u32 | max_wait_micros u64
//!          3 commit   | consumer str | topic str | offset u64
//!          4 committed| consumer str | topic str
//! response 0 ok | publish: offset u64
//!               | poll: count u32 | (offset u64 | append_micros u64 | u32-len bytes)*
//!               | commit: empty
//!               | committed: offset u64
//!          1 error | code u8 | a u64 | b u64 | message str
//! ```
//! Strings are u16-length-prefixed UTF-8.

use std::io;
use std::net::{SocketAddr, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use byteorder::{BigEndian, ReadBytesExt};

use crate::transport::{self, get_str, put_str, read_frame, write_frame, Server};

use super::{BrokerApi, BrokerError, Record};

const PUBLISH: u8 = 1;
const POLL: u8 = 2;
const COMMIT: u8 = 3;
const COMMITTED: u8 = 4;

const OK: u8 = 0;
const ERR: u8 = 1;

const E_TOO_LARGE: u8 = 1;
const E_RANGE: u8 = 2;
const E_OTHER: u8 = 3;

/// Serves a [`BrokerApi`] to remote producers and consumers.
pub struct BrokerServer {
    server: Server,
}

impl BrokerServer {
    pub fn start(api: Arc<dyn BrokerApi>, addr: &str) -> io::Result<BrokerServer> {
        let server = Server::spawn(addr, "broker", move |mut stream, _stop| {
            while let Ok(req) = read_frame(&mut stream) {
                let resp = match handle(api.as_ref(), &req) {
                    Ok(body) => body,
                    Err(e) => error_body(&e),
                };
                if write_frame(&mut stream, &resp).is_err() {
                    break;
                }
            }
        })?;
        Ok(BrokerServer { server })
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }

    pub fn stop(&mut self) {
        self.server.stop();
    }
}

fn malformed(e: io::Error) -> BrokerError {
    BrokerError::Transport(format!("malformed request: {e}"))
}

fn handle(api: &dyn BrokerApi, req: &[u8]) -> Result<Vec<u8>, BrokerError> {
    let mut r = req;
    let tag = r.read_u8().map_err(malformed)?;
    let mut out = vec![OK];
    match tag {
        PUBLISH => {
            let topic = get_str(&mut r).map_err(malformed)?;
            let len = r.read_u32::<BigEndian>().map_err(malformed)? as usize;
            if r.len() != len {
                return Err(malformed(io::ErrorKind::InvalidData.into()));
            }
            let offset = api.publish(&topic, r)?;
            out.extend_from_slice(&offset.to_be_bytes());
        }
        POLL => {
            let consumer = get_str(&mut r).map_err(malformed)?;
            let topic = get_str(&mut r).map_err(malformed)?;
            let from = r.read_u64::<BigEndian>().map_err(malformed)?;
            let max = r.read_u32::<BigEndian>().map_err(malformed)? as usize;
            let wait = r.read_u64::<BigEndian>().map_err(malformed)?;
            let batch = api.poll(&consumer, &topic, from, max, Duration::from_micros(wait))?;
            out.extend_from_slice(&(batch.len() as u32).to_be_bytes());
            for rec in batch {
                out.extend_from_slice(&rec.offset.to_be_bytes());
                out.extend_from_slice(&rec.append_micros.to_be_bytes());
                out.extend_from_slice(&(rec.bytes.len() as u32).to_be_bytes());
                out.extend_from_slice(&rec.bytes);
            }
        }
        COMMIT => {
            let consumer = get_str(&mut r).map_err(malformed)?;
            let topic = get_str(&mut r).map_err(malformed)?;
            let offset = r.read_u64::<BigEndian>().map_err(malformed)?;
            api.commit(&consumer, &topic, offset)?;
        }
        COMMITTED => {
            let consumer = get_str(&mut r).map_err(malformed)?;
            let topic = get_str(&mut r).map_err(malformed)?;
            let offset = api.committed(&consumer, &topic)?;
            out.extend_from_slice(&offset.to_be_bytes());
        }
        other => {
            return Err(BrokerError::Transport(format!("unknown request tag {other}")));
        }
    }
    Ok(out)
}

fn error_body(e: &BrokerError) -> Vec<u8> {
    let (code, a, b) = match *e {
        BrokerError::RecordTooLarge(n) => (E_TOO_LARGE, n as u64, 0),
        BrokerError::OffsetOutOfRange { offset, len } => (E_RANGE, offset, len),
        BrokerError::Transport(_) => (E_OTHER, 0, 0),
    };
    let mut out = vec![ERR, code];
    out.extend_from_slice(&a.to_be_bytes());
    out.extend_from_slice(&b.to_be_bytes());
    put_str(&mut out, &e.to_string());
    out
}

fn parse_error(mut r: &[u8]) -> BrokerError {
    let parsed = (|| -> io::Result<BrokerError> {
        let code = r.read_u8()?;
        let a = r.read_u64::<BigEndian>()?;
        let b = r.read_u64::<BigEndian>()?;
        let msg = get_str(&mut r)?;
        Ok(match code {
            E_TOO_LARGE => BrokerError::RecordTooLarge(a as usize),
            E_RANGE => BrokerError::OffsetOutOfRange { offset: a, len: b },
            _ => BrokerError::Transport(msg),
        })
    })();
    parsed.unwrap_or_else(|e| BrokerError::Transport(format!("bad error response: {e}")))
}

/// Client half; one request in flight per connection.
pub struct RemoteBroker {
    stream: Mutex<TcpStream>,
}

impl RemoteBroker {
    pub fn connect(addr: SocketAddr) -> io::Result<RemoteBroker> {
        Ok(RemoteBroker {
            stream: Mutex::new(transport::connect(addr)?),
        })
    }

    fn call(&self, req: &[u8]) -> Result<Vec<u8>, BrokerError> {
        let transport = |e: io::Error| BrokerError::Transport(e.to_string());
        let mut stream = self.stream.lock().unwrap();
        write_frame(&mut *stream, req).map_err(transport)?;
        let mut resp = read_frame(&mut *stream).map_err(transport)?;
        match resp.first() {
            Some(&OK) => {
                resp.remove(0);
                Ok(resp)
            }
            Some(&ERR) => Err(parse_error(&resp[1..])),
            _ => Err(BrokerError::Transport("empty response".into())),
        }
    }
}

fn short(e: io::Error) -> BrokerError {
    BrokerError::Transport(format!("short response: {e}"))
}

impl BrokerApi for RemoteBroker {
    fn publish(&self, topic: &str, bytes: &[u8]) -> Result<u64, BrokerError> {
        let mut req = vec![PUBLISH];
        put_str(&mut req, topic);
        req.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        req.extend_from_slice(bytes);
        let resp = self.call(&req)?;
        (&resp[..]).read_u64::<BigEndian>().map_err(short)
    }

    fn poll(
        &self,
        consumer: &str,
        topic: &str,
        from: u64,
        max_records: usize,
        max_wait: Duration,
    ) -> Result<Vec<Record>, BrokerError> {
        let mut req = vec![POLL];
        put_str(&mut req, consumer);
        put_str(&mut req, topic);
        req.extend_from_slice(&from.to_be_bytes());
        req.extend_from_slice(&(max_records.min(u32::MAX as usize) as u32).to_be_bytes());
        req.extend_from_slice(&(max_wait.as_micros() as u64).to_be_bytes());
        let resp = self.call(&req)?;
        let mut r = &resp[..];
        let count = r.read_u32::<BigEndian>().map_err(short)?;
        let mut out = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let offset = r.read_u64::<BigEndian>().map_err(short)?;
            let append_micros = r.read_u64::<BigEndian>().map_err(short)?;
            let len = r.read_u32::<BigEndian>().map_err(short)? as usize;
            if r.len() < len {
                return Err(short(io::ErrorKind::UnexpectedEof.into()));
            }
            let (bytes, rest) = r.split_at(len);
            r = rest;
            out.push(Record {
                offset,
                bytes: Arc::from(bytes),
                append_micros,
            });
        }
        Ok(out)
    }

    fn commit(&self, consumer: &str, topic: &str, offset: u64) -> Result<(), BrokerError> {
        let mut req = vec![COMMIT];
        put_str(&mut req, consumer);
        put_str(&mut req, topic);
        req.extend_from_slice(&offset.to_be_bytes());
        self.call(&req).map(|_| ())
    }

    fn committed(&self, consumer: &str, topic: &str) -> Result<u64, BrokerError> {
        let mut req = vec![COMMITTED];
        put_str(&mut req, consumer);
        put_str(&mut req, topic);
        let resp = self.call(&req)?;
        (&resp[..]).read_u64::<BigEndian>().map_err(short)
    }
}
