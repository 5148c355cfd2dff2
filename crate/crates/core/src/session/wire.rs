//! `speller-wire.v1`: JSON frames tagged by `type`.
//!
//! Over raw TCP every frame is a 4-byte big-endian length followed by that
//! many bytes of UTF-8 JSON. A connection whose first bytes are `GET ` is
//! upgraded to a WebSocket instead, one text message per frame.

use std::io::{self, ErrorKind, Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

use crate::composer::Key;
use crate::paradigm::{Timing, N_CODES};
use crate::suggest::Provenance;

pub const PROTOCOL: &str = "speller-wire.v1";
/// Frames above this size are refused and the connection closed.
pub const MAX_FRAME_BYTES: usize = 1 << 20;

/// Codes carried by `error` frames.
pub mod codes {
    pub const MALFORMED: &str = "malformed";
    pub const BUSY: &str = "busy";
    pub const PROTOCOL: &str = "protocol";
    pub const UNKNOWN_SESSION: &str = "unknown_session";
    pub const TRIAL_IN_PROGRESS: &str = "trial_in_progress";
    pub const UNEXPECTED: &str = "unexpected";
    pub const FINISHED: &str = "finished";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Frame {
    /// Client opens with its protocol and, to resume, a session id. The
    /// server answers with the session id it attached.
    Hello {
        protocol: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        #[serde(default)]
        resumed: bool,
    },
    Config {
        mode: String,
        timing: Timing,
        /// Key labels, 5 rows of 8.
        layout: Vec<Vec<String>>,
        #[serde(default)]
        target: Option<String>,
        realtime: bool,
    },
    /// Session-clock time of a flash onset or offset.
    Flash { trial: usize, seq: usize, code: u8, on: bool, t_ms: u64 },
    TrialResult {
        trial: usize,
        key: Key,
        #[serde(default)]
        intended: Option<Key>,
        #[serde(default)]
        correct: Option<bool>,
        cumulative: [f64; N_CODES],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warning: Option<String>,
    },
    ComposeState { composed: String, display: String, finished: bool },
    Suggestions { candidates: Vec<String>, provenance: Provenance },
    /// The key the operator attends during the next trial.
    Attend { key: Key },
    /// Attend a function key (DW, DC, Sp, En).
    FunctionKey { key: Key },
    Error { code: String, message: String },
    Bye,
}

impl Frame {
    pub fn error(code: &str, message: impl Into<String>) -> Frame {
        Frame::Error { code: code.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("websocket error: {0}")]
    WebSocket(String),
    #[error("connection closed")]
    Closed,
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let body = serde_json::to_vec(frame).expect("frames serialise");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Incremental decoder for length-prefixed frames.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: Vec<u8>,
}

impl FrameBuffer {
    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// The next complete frame. A frame whose body is not a valid frame is
    /// consumed and reported as `Ok(Err(reason))`; the stream stays in sync.
    pub fn next_frame(&mut self) -> Result<Option<Result<Frame, String>>, WireError> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let len = u32::from_be_bytes(self.buf[..4].try_into().expect("4 bytes")) as usize;
        if len > MAX_FRAME_BYTES {
            return Err(WireError::TooLarge(len));
        }
        if self.buf.len() < 4 + len {
            return Ok(None);
        }
        let body: Vec<u8> = self.buf.drain(..4 + len).skip(4).collect();
        Ok(Some(parse_frame(&body)))
    }
}

fn parse_frame(body: &[u8]) -> Result<Frame, String> {
    serde_json::from_slice(body).map_err(|e| e.to_string())
}

/// One poll of a connection.
#[derive(Debug, PartialEq)]
pub enum Incoming {
    Frame(Frame),
    Malformed(String),
    Idle,
    Closed,
}

/// A framed connection over raw TCP or WebSocket, usable from either end.
pub enum Conn {
    Tcp { stream: TcpStream, buf: FrameBuffer },
    Ws(Box<WebSocket<TcpStream>>),
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

impl Conn {
    /// Server side: sniff the first bytes and pick the transport.
    pub fn accept(stream: TcpStream, handshake_timeout: Duration) -> Result<Conn, WireError> {
        stream.set_read_timeout(Some(handshake_timeout))?;
        let deadline = Instant::now() + handshake_timeout;
        let mut head = [0u8; 4];
        loop {
            let n = stream.peek(&mut head)?;
            if n == 0 {
                return Err(WireError::Closed);
            }
            if n == 4 || Instant::now() >= deadline {
                break;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        if &head == b"GET " {
            let ws = tungstenite::accept(stream).map_err(|e| WireError::WebSocket(e.to_string()))?;
            Ok(Conn::Ws(Box::new(ws)))
        } else {
            Ok(Conn::Tcp { stream, buf: FrameBuffer::default() })
        }
    }

    pub fn tcp(stream: TcpStream) -> Conn {
        Conn::Tcp { stream, buf: FrameBuffer::default() }
    }

    /// Client side WebSocket on an open stream.
    pub fn ws_client(stream: TcpStream, url: &str) -> Result<Conn, WireError> {
        let (ws, _) = tungstenite::client(url, stream).map_err(|e| WireError::WebSocket(e.to_string()))?;
        Ok(Conn::Ws(Box::new(ws)))
    }

    fn stream(&self) -> &TcpStream {
        match self {
            Conn::Tcp { stream, .. } => stream,
            Conn::Ws(ws) => ws.get_ref(),
        }
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), WireError> {
        match self {
            Conn::Tcp { stream, .. } => {
                stream.write_all(&encode_frame(frame))?;
                stream.flush()?;
                Ok(())
            }
            Conn::Ws(ws) => {
                let text = serde_json::to_string(frame).expect("frames serialise");
                ws.send(Message::text(text)).map_err(ws_error)
            }
        }
    }

    /// Wait up to `timeout` for one frame.
    pub fn poll(&mut self, timeout: Duration) -> Result<Incoming, WireError> {
        let timeout = timeout.max(Duration::from_millis(1));
        self.stream().set_read_timeout(Some(timeout))?;
        match self {
            Conn::Tcp { stream, buf } => {
                if let Some(f) = buf.next_frame()? {
                    return Ok(frame_or_malformed(f));
                }
                let mut chunk = [0u8; 8192];
                let deadline = Instant::now() + timeout;
                loop {
                    match stream.read(&mut chunk) {
                        Ok(0) => return Ok(Incoming::Closed),
                        Ok(n) => {
                            buf.push(&chunk[..n]);
                            if let Some(f) = buf.next_frame()? {
                                return Ok(frame_or_malformed(f));
                            }
                        }
                        Err(e) if is_timeout(&e) => return Ok(Incoming::Idle),
                        Err(e) if e.kind() == ErrorKind::Interrupted => {}
                        Err(e) if is_disconnect(&e) => return Ok(Incoming::Closed),
                        Err(e) => return Err(e.into()),
                    }
                    let left = deadline.saturating_duration_since(Instant::now());
                    if left.is_zero() {
                        return Ok(Incoming::Idle);
                    }
                    stream.set_read_timeout(Some(left))?;
                }
            }
            Conn::Ws(ws) => match ws.read() {
                Ok(Message::Text(t)) => Ok(frame_or_malformed(parse_frame(t.as_bytes()))),
                Ok(Message::Binary(b)) => Ok(frame_or_malformed(parse_frame(&b))),
                Ok(Message::Close(_)) => Ok(Incoming::Closed),
                Ok(_) => Ok(Incoming::Idle),
                Err(tungstenite::Error::Io(e)) if is_timeout(&e) => Ok(Incoming::Idle),
                Err(tungstenite::Error::Io(e)) if is_disconnect(&e) => Ok(Incoming::Closed),
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => Ok(Incoming::Closed),
                Err(tungstenite::Error::Protocol(_)) => Ok(Incoming::Closed),
                Err(e) => Err(WireError::WebSocket(e.to_string())),
            },
        }
    }

    /// Wait up to `timeout` for a frame, skipping idle polls.
    pub fn recv(&mut self, timeout: Duration) -> Result<Incoming, WireError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.poll(left)? {
                Incoming::Idle if !left.is_zero() => continue,
                other => return Ok(other),
            }
        }
    }

    pub fn close(&mut self) {
        match self {
            Conn::Tcp { stream, .. } => {
                let _ = stream.shutdown(std::net::Shutdown::Both);
            }
            Conn::Ws(ws) => {
                let _ = ws.close(None);
                let _ = ws.flush();
            }
        }
    }
}

fn is_disconnect(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted | ErrorKind::BrokenPipe | ErrorKind::UnexpectedEof
    )
}

fn ws_error(e: tungstenite::Error) -> WireError {
    match e {
        tungstenite::Error::Io(io) => WireError::Io(io),
        tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed => WireError::Closed,
        other => WireError::WebSocket(other.to_string()),
    }
}

fn frame_or_malformed(f: Result<Frame, String>) -> Incoming {
    match f {
        Ok(frame) => Incoming::Frame(frame),
        Err(reason) => Incoming::Malformed(reason),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_use_type_tags() {
        let f = Frame::Attend { key: Key::Letter('Q') };
        assert_eq!(serde_json::to_string(&f).unwrap(), r#"{"type":"attend","key":"Q"}"#);
        assert_eq!(serde_json::to_string(&Frame::Bye).unwrap(), r#"{"type":"bye"}"#);
        let f: Frame = serde_json::from_str(r#"{"type":"function_key","key":"DW"}"#).unwrap();
        assert_eq!(f, Frame::FunctionKey { key: Key::DELETE_WORD });
        let f: Frame = serde_json::from_str(r#"{"type":"hello","protocol":"speller-wire.v1"}"#).unwrap();
        assert_eq!(f, Frame::Hello { protocol: PROTOCOL.into(), session: None, resumed: false });
    }

    #[test]
    fn buffer_splits_frames_and_survives_garbage() {
        let mut fb = FrameBuffer::default();
        let mut bytes = encode_frame(&Frame::Bye);
        let junk = b"{not json";
        bytes.extend_from_slice(&(junk.len() as u32).to_be_bytes());
        bytes.extend_from_slice(junk);
        bytes.extend_from_slice(&encode_frame(&Frame::Attend { key: Key::SPACE }));
        for b in &bytes[..3] {
            fb.push(&[*b]);
            assert!(fb.next_frame().unwrap().is_none());
        }
        fb.push(&bytes[3..]);
        assert_eq!(fb.next_frame().unwrap(), Some(Ok(Frame::Bye)));
        assert!(matches!(fb.next_frame().unwrap(), Some(Err(_))));
        assert_eq!(fb.next_frame().unwrap(), Some(Ok(Frame::Attend { key: Key::SPACE })));
        assert!(fb.next_frame().unwrap().is_none());
    }

    #[test]
    fn oversized_frame_rejected() {
        let mut fb = FrameBuffer::default();
        fb.push(b"GET / HTTP/1.1");
        assert!(matches!(fb.next_frame(), Err(WireError::TooLarge(_))));
    }

    #[test]
    fn unknown_key_is_malformed() {
        assert!(parse_frame(br#"{"type":"attend","key":"??"}"#).is_err());
        assert!(parse_frame(br#"{"type":"launch"}"#).is_err());
    }
}
