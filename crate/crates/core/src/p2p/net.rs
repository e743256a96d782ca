//! Push streams over sockets. The subscriber connects and writes one byte, the
//! kind bitmap (bit `tag - 1` per event kind). The server then writes each
//! matching encoded event as a length-prefixed frame until either side closes.
//! An empty bitmap is refused by closing the connection.

use std::io::{self, Read};
use std::net::SocketAddr;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError};

use crate::source::{EventSource, SourceClosed};
use crate::transport::{self, read_frame, write_frame, Server};
use crate::wire::{decode_event, Event, KindSet};

use super::Hub;

pub struct P2pServer {
    server: Server,
}

impl P2pServer {
    pub fn start(hub: Arc<Hub>, addr: &str) -> io::Result<P2pServer> {
        let server = Server::spawn(addr, "p2p", move |mut stream, stop| {
            let mut bitmap = [0u8; 1];
            if stream.read_exact(&mut bitmap).is_err() {
                return;
            }
            let Ok(sub) = hub.subscribe(KindSet::from_bits(bitmap[0])) else {
                return;
            };
            while !stop.load(Ordering::Relaxed) {
                match sub.recv(Duration::from_millis(200)) {
                    Ok(Some(bytes)) => {
                        if write_frame(&mut stream, &bytes).is_err() {
                            break;
                        }
                    }
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
        })?;
        Ok(P2pServer { server })
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }

    pub fn stop(&mut self) {
        self.server.stop();
    }
}

/// Subscriber end of a socket push stream.
pub struct RemoteSubscription {
    rx: Receiver<Vec<u8>>,
    stream: std::net::TcpStream,
}

impl RemoteSubscription {
    pub fn connect(addr: SocketAddr, kinds: KindSet) -> io::Result<RemoteSubscription> {
        if kinds.is_empty() {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "empty kind set"));
        }
        let mut stream = transport::connect(addr)?;
        io::Write::write_all(&mut stream, &[kinds.bits()])?;
        let mut reader = stream.try_clone()?;
        let (tx, rx) = unbounded();
        std::thread::Builder::new()
            .name("p2p-reader".into())
            .spawn(move || {
                while let Ok(frame) = read_frame(&mut reader) {
                    if tx.send(frame).is_err() {
                        break;
                    }
                }
            })?;
        Ok(RemoteSubscription { rx, stream })
    }
}

impl Drop for RemoteSubscription {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

impl EventSource for RemoteSubscription {
    fn next_event(&mut self, timeout: Duration) -> Result<Option<Event>, SourceClosed> {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            match self.rx.recv_deadline(deadline) {
                Ok(bytes) => match decode_event(&bytes) {
                    Ok(ev) => return Ok(Some(ev)),
                    Err(e) => log::warn!("p2p stream: undecodable event: {e}"),
                },
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => return Err(SourceClosed),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{encode_event, DatapathId, EventBody, EventKind};

    #[test]
    fn stream_delivers_matching_kinds() {
        let hub = Arc::new(Hub::default());
        let mut server = P2pServer::start(hub.clone(), "127.0.0.1:0").unwrap();
        let mut sub =
            RemoteSubscription::connect(server.addr(), KindSet::EMPTY.with(EventKind::Device))
                .unwrap();
        // The server registers the subscription asynchronously.
        let t0 = std::time::Instant::now();
        while hub.subscriber_count() == 0 && t0.elapsed() < Duration::from_secs(5) {
            std::thread::sleep(Duration::from_millis(1));
        }
        let dev = Event::new(
            4,
            9,
            EventBody::TopologyDevice {
                dpid: DatapathId(2),
                up: true,
            },
        );
        let port = Event::new(
            5,
            9,
            EventBody::TopologyPort {
                dpid: DatapathId(2),
                port: 1,
                up: true,
            },
        );
        hub.push(EventKind::Port, Arc::from(encode_event(&port).unwrap()));
        hub.push(EventKind::Device, Arc::from(encode_event(&dev).unwrap()));
        assert_eq!(sub.next_event(Duration::from_secs(5)).unwrap(), Some(dev));
        assert_eq!(sub.next_event(Duration::from_millis(20)).unwrap(), None);
        drop(sub);
        server.stop();
    }
}
