//! Frame transports and the server event loop. Every connection feeds one
//! inbound queue, so transitions are applied one at a time.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};
use thiserror::Error;

use super::codec::{decode, encode, read_frame, read_frame_bytes, write_frame, CodecError};
use super::server::{server_disconnect, server_handle, ServerConfig, ServerState};
use super::{ErrorCode, SessionMessage};

pub type ConnId = u64;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("connection closed")]
    Closed,
    #[error("no message within {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait Transport {
    fn send(&mut self, msg: &SessionMessage) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<SessionMessage, TransportError>;
}

/// Where the server writes replies for one connection.
#[derive(Debug)]
pub enum Outbox {
    Channel(Sender<Vec<u8>>),
    Tcp(TcpStream),
}

impl Outbox {
    fn deliver(&mut self, frame: &[u8]) -> io::Result<()> {
        match self {
            Outbox::Channel(tx) => tx.send(frame.to_vec()).map_err(|_| io::ErrorKind::BrokenPipe.into()),
            Outbox::Tcp(s) => s.write_all(frame).and_then(|_| s.flush()),
        }
    }
}

#[derive(Debug)]
pub enum Inbound {
    Open(ConnId, Outbox),
    /// A complete frame, length prefix included.
    Frame(ConnId, Vec<u8>),
    Closed(ConnId),
}

pub const DEFAULT_RECV_TIMEOUT: Duration = Duration::from_secs(120);

/// Hands out in-process connections to a server reading the paired receiver.
pub struct InProcessHub {
    tx: Sender<Inbound>,
    next: ConnId,
}

pub fn in_process() -> (InProcessHub, Receiver<Inbound>) {
    let (tx, rx) = mpsc::channel();
    (InProcessHub { tx, next: 1 }, rx)
}

impl InProcessHub {
    pub fn connect(&mut self) -> InProcessTransport {
        let id = self.next;
        self.next += 1;
        let (reply_tx, reply_rx) = mpsc::channel();
        // A dead server surfaces on the first send.
        let _ = self.tx.send(Inbound::Open(id, Outbox::Channel(reply_tx)));
        InProcessTransport { id, tx: self.tx.clone(), rx: reply_rx, timeout: DEFAULT_RECV_TIMEOUT }
    }
}

pub struct InProcessTransport {
    id: ConnId,
    tx: Sender<Inbound>,
    rx: Receiver<Vec<u8>>,
    pub timeout: Duration,
}

impl Transport for InProcessTransport {
    fn send(&mut self, msg: &SessionMessage) -> Result<(), TransportError> {
        let frame = encode(msg)?;
        self.tx.send(Inbound::Frame(self.id, frame)).map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<SessionMessage, TransportError> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(frame) => Ok(decode(&frame)?),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

impl Drop for InProcessTransport {
    fn drop(&mut self) {
        let _ = self.tx.send(Inbound::Closed(self.id));
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, TransportError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(DEFAULT_RECV_TIMEOUT))?;
        Ok(Self { stream })
    }

    pub fn set_timeout(&mut self, timeout: Duration) -> Result<(), TransportError> {
        self.stream.set_read_timeout(Some(timeout))?;
        Ok(())
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &SessionMessage) -> Result<(), TransportError> {
        Ok(write_frame(&mut self.stream, msg)?)
    }

    fn recv(&mut self) -> Result<SessionMessage, TransportError> {
        match read_frame(&mut self.stream) {
            Ok(Some(m)) => Ok(m),
            Ok(None) => Err(TransportError::Closed),
            Err(CodecError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                Err(TransportError::Timeout(self.stream.read_timeout().ok().flatten().unwrap_or_default()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

fn serve_connection(id: ConnId, mut stream: TcpStream, tx: Sender<Inbound>) {
    loop {
        match read_frame_bytes(&mut stream) {
            Ok(Some(frame)) => {
                if tx.send(Inbound::Frame(id, frame)).is_err() {
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                debug!("connection {id}: {e}");
                if !matches!(e, CodecError::Io(_)) {
                    let _ = write_frame(&mut stream, &SessionMessage::error(ErrorCode::Protocol, e.to_string()));
                }
                break;
            }
        }
    }
    let _ = tx.send(Inbound::Closed(id));
}

/// Accepts connections forever, one reader thread each.
pub fn spawn_tcp_listener(listener: TcpListener, tx: Sender<Inbound>) -> JoinHandle<()> {
    thread::spawn(move || {
        for (id, stream) in (1..).zip(listener.incoming()) {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let _ = stream.set_nodelay(true);
            let writer = match stream.try_clone() {
                Ok(w) => w,
                Err(e) => {
                    warn!("connection {id}: {e}");
                    continue;
                }
            };
            if tx.send(Inbound::Open(id, Outbox::Tcp(writer))).is_err() {
                break;
            }
            let tx = tx.clone();
            thread::spawn(move || serve_connection(id, stream, tx));
        }
    })
}

/// Applies inbound frames in arrival order until every sender is gone or,
/// with `stop_after`, that many sessions have finished.
pub fn run_server(
    mut state: ServerState,
    cfg: &ServerConfig,
    rx: Receiver<Inbound>,
    stop_after: Option<usize>,
) -> ServerState {
    let mut peers: BTreeMap<ConnId, Outbox> = BTreeMap::new();
    let mut owned: BTreeMap<ConnId, Vec<u64>> = BTreeMap::new();
    while let Ok(event) = rx.recv() {
        match event {
            Inbound::Open(id, outbox) => {
                peers.insert(id, outbox);
            }
            Inbound::Frame(id, frame) => {
                let replies = match decode(&frame) {
                    Ok(msg) => {
                        let (next, replies) = server_handle(&state, cfg, &msg);
                        state = next;
                        if let (SessionMessage::Register { vehicle_id }, [SessionMessage::RegisterAck { session_id }]) =
                            (&msg, replies.as_slice())
                        {
                            info!("{vehicle_id} registered as session {session_id}");
                            owned.entry(id).or_default().push(*session_id);
                        }
                        replies
                    }
                    Err(e) => vec![SessionMessage::error(ErrorCode::Protocol, e.to_string())],
                };
                for reply in &replies {
                    if let SessionMessage::Error { code, detail } = reply {
                        warn!("connection {id}: {code:?}: {detail}");
                    }
                    let delivered = encode(reply)
                        .map_err(|e| io::Error::other(e.to_string()))
                        .and_then(|f| peers.get_mut(&id).ok_or(io::ErrorKind::NotConnected.into()).and_then(|p| p.deliver(&f)));
                    if let Err(e) = delivered {
                        warn!("connection {id}: reply lost: {e}");
                    }
                }
            }
            Inbound::Closed(id) => {
                peers.remove(&id);
                for sid in owned.remove(&id).unwrap_or_default() {
                    state = server_disconnect(&state, sid);
                }
            }
        }
        if stop_after.is_some_and(|n| state.terminal_count() >= n) {
            break;
        }
    }
    state
}
