//! Interactive session service speaking `speller-wire.v1`.
//!
//! Each connection thread owns at most one session at a time. A session
//! whose client disconnects is parked in the registry and can be resumed by
//! id until `resume_timeout_ms` passes.

use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::wire::{codes, Conn, Frame, Incoming, WireError, PROTOCOL};
use super::{
    derive_seed, file_log, make_provider, sink_log, FlashNotice, Mode, OnlineSession, Phase, SessionConfig,
    SessionError, Suggester,
};
use crate::composer::{FunctionKey, Key};
use crate::eventlog::EndReason;
use crate::swlda::TrainedModel;

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
const IDLE_POLL: Duration = Duration::from_millis(50);
const ACCEPT_POLL: Duration = Duration::from_millis(20);

struct Slot {
    /// `None` while a connection holds the session.
    session: Option<Box<OnlineSession>>,
    paused_at: Option<Instant>,
}

struct Shared {
    cfg: SessionConfig,
    model: TrainedModel,
    sessions: Mutex<HashMap<String, Slot>>,
    next_id: AtomicU64,
    stop: AtomicBool,
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    /// Stop accepting, end connections at their next poll, and join.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    /// Block until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Sessions currently known, attached or parked.
    pub fn session_count(&self) -> usize {
        self.shared.sessions.lock().expect("registry lock").len()
    }

    fn stop_and_join(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// Bind `addr` and serve in a background thread.
pub fn start(cfg: SessionConfig, model: TrainedModel, addr: &str) -> Result<ServerHandle, SessionError> {
    model.validate()?;
    make_provider(&cfg)?;
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let shared = Arc::new(Shared {
        cfg,
        model,
        sessions: Mutex::new(HashMap::new()),
        next_id: AtomicU64::new(1),
        stop: AtomicBool::new(false),
    });
    let s = shared.clone();
    let thread = std::thread::spawn(move || accept_loop(listener, s));
    log::info!("serving {PROTOCOL} on {local}");
    Ok(ServerHandle { addr: local, shared, thread: Some(thread) })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let s = shared.clone();
                log::info!("connection from {peer}");
                workers.push(std::thread::spawn(move || {
                    if let Err(e) = handle_connection(stream, &s) {
                        log::warn!("connection from {peer} ended: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(ACCEPT_POLL),
            Err(e) => log::warn!("accept failed: {e}"),
        }
        reap_expired(&shared);
        workers.retain(|w| !w.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
    let mut sessions = shared.sessions.lock().expect("registry lock");
    for (_, slot) in sessions.drain() {
        if let Some(mut s) = slot.session {
            end_quietly(&mut s, EndReason::Stopped);
        }
    }
}

fn end_quietly(s: &mut OnlineSession, reason: EndReason) {
    if !s.is_over() {
        if let Err(e) = s.end(reason) {
            log::warn!("could not close session log: {e}");
        }
    }
}

fn reap_expired(shared: &Shared) {
    let timeout = Duration::from_millis(shared.cfg.server.resume_timeout_ms);
    let mut sessions = shared.sessions.lock().expect("registry lock");
    let expired: Vec<String> = sessions
        .iter()
        .filter(|(_, s)| s.paused_at.is_some_and(|t| t.elapsed() >= timeout))
        .map(|(id, _)| id.clone())
        .collect();
    for id in expired {
        if let Some(Slot { session: Some(mut s), .. }) = sessions.remove(&id) {
            log::info!("session {id} expired");
            end_quietly(&mut s, EndReason::Stopped);
        }
    }
}

fn session_log_path(base: &PathBuf, id: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("session");
    base.with_file_name(format!("{stem}-{id}.jsonl"))
}

fn new_session(shared: &Shared) -> Result<(String, Box<OnlineSession>), SessionError> {
    let n = shared.next_id.fetch_add(1, Ordering::SeqCst);
    let id = format!("s{n}");
    let mut cfg = shared.cfg.clone();
    if !matches!(cfg.mode, Mode::Task1Chat | Mode::Task1LetterOnly | Mode::Task2Improvise) {
        cfg.mode = Mode::Interactive;
    }
    cfg.seed = derive_seed(shared.cfg.seed, 100 + n);
    let log = match &cfg.log {
        Some(base) => file_log(&session_log_path(base, &id))?,
        None => sink_log(),
    };
    let provider = make_provider(&cfg)?;
    let suggester = Suggester::for_mode(cfg.mode, provider, true, Duration::from_millis(cfg.provider.timeout_ms));
    let session = OnlineSession::start(cfg, shared.model.clone(), suggester, log, Phase::Interactive)?;
    Ok((id, Box::new(session)))
}

/// Take ownership of a session for this connection.
fn attach(shared: &Shared, requested: Option<&str>) -> Result<(String, Box<OnlineSession>, bool), Frame> {
    let Some(id) = requested else {
        let (id, s) = new_session(shared).map_err(|e| Frame::error(codes::INTERNAL, e.to_string()))?;
        shared.sessions.lock().expect("registry lock").insert(id.clone(), Slot { session: None, paused_at: None });
        return Ok((id, s, false));
    };
    let mut sessions = shared.sessions.lock().expect("registry lock");
    match sessions.get_mut(id) {
        None => Err(Frame::error(codes::UNKNOWN_SESSION, format!("no session {id}"))),
        Some(slot) => match slot.session.take() {
            None => Err(Frame::error(codes::BUSY, format!("session {id} already has a client"))),
            Some(s) => {
                slot.paused_at = None;
                Ok((id.to_string(), s, true))
            }
        },
    }
}

fn park(shared: &Shared, id: &str, session: Box<OnlineSession>) {
    let mut sessions = shared.sessions.lock().expect("registry lock");
    sessions.insert(id.to_string(), Slot { session: Some(session), paused_at: Some(Instant::now()) });
}

fn remove(shared: &Shared, id: &str) {
    shared.sessions.lock().expect("registry lock").remove(id);
}

fn snapshot_frames(s: &OnlineSession) -> [Frame; 2] {
    [
        Frame::ComposeState {
            composed: s.state.composed.clone(),
            display: s.state.display_text(),
            finished: s.state.finished,
        },
        Frame::Suggestions {
            candidates: s.state.suggestions.candidates.clone(),
            provenance: s.state.suggestions.provenance,
        },
    ]
}

fn config_frame(s: &OnlineSession) -> Frame {
    let layout = s.engine.layout.rows().iter().map(|row| row.iter().map(|k| k.to_string()).collect()).collect();
    Frame::Config {
        mode: s.cfg.mode.as_str().into(),
        timing: s.cfg.timing,
        layout,
        target: s.state.target.clone(),
        realtime: s.cfg.server.realtime,
    }
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> Result<(), WireError> {
    stream.set_nodelay(true)?;
    let mut conn = Conn::accept(stream, HANDSHAKE_TIMEOUT)?;
    let requested = match conn.recv(HANDSHAKE_TIMEOUT)? {
        Incoming::Frame(Frame::Hello { protocol, session, .. }) if protocol == PROTOCOL => session,
        Incoming::Frame(Frame::Hello { protocol, .. }) => {
            conn.send(&Frame::error(codes::PROTOCOL, format!("unsupported protocol {protocol:?}")))?;
            conn.close();
            return Ok(());
        }
        Incoming::Closed => return Ok(()),
        _ => {
            conn.send(&Frame::error(codes::PROTOCOL, "expected hello"))?;
            conn.close();
            return Ok(());
        }
    };
    let (id, mut session, resumed) = match attach(shared, requested.as_deref()) {
        Ok(x) => x,
        Err(frame) => {
            conn.send(&frame)?;
            conn.close();
            return Ok(());
        }
    };
    log::info!("session {id} attached (resumed: {resumed})");
    let greeting = (|| {
        conn.send(&Frame::Hello { protocol: PROTOCOL.into(), session: Some(id.clone()), resumed })?;
        conn.send(&config_frame(&session))?;
        for f in snapshot_frames(&session) {
            conn.send(&f)?;
        }
        Ok::<(), WireError>(())
    })();
    if let Err(e) = greeting {
        park(shared, &id, session);
        return Err(e);
    }
    match serve_session(&mut conn, shared, &mut session) {
        Ok(Exit::Bye) => {
            end_quietly(&mut session, EndReason::Stopped);
            remove(shared, &id);
            let _ = conn.send(&Frame::Bye);
            conn.close();
            log::info!("session {id} closed by client");
            Ok(())
        }
        Ok(Exit::Shutdown) => {
            end_quietly(&mut session, EndReason::Stopped);
            remove(shared, &id);
            let _ = conn.send(&Frame::Bye);
            conn.close();
            Ok(())
        }
        Ok(Exit::Disconnected) => {
            log::info!("session {id} paused");
            park(shared, &id, session);
            Ok(())
        }
        Err(e) => {
            park(shared, &id, session);
            Err(e)
        }
    }
}

enum Exit {
    Bye,
    Disconnected,
    Shutdown,
}

fn serve_session(conn: &mut Conn, shared: &Shared, session: &mut OnlineSession) -> Result<Exit, WireError> {
    loop {
        if shared.stop.load(Ordering::SeqCst) {
            return Ok(Exit::Shutdown);
        }
        let key = match conn.poll(IDLE_POLL)? {
            Incoming::Idle => continue,
            Incoming::Closed => return Ok(Exit::Disconnected),
            Incoming::Malformed(reason) => {
                conn.send(&Frame::error(codes::MALFORMED, reason))?;
                continue;
            }
            Incoming::Frame(Frame::Bye) => return Ok(Exit::Bye),
            Incoming::Frame(Frame::Attend { key }) => key,
            Incoming::Frame(Frame::FunctionKey { key: key @ Key::Function(_) }) => key,
            Incoming::Frame(Frame::FunctionKey { key }) => {
                conn.send(&Frame::error(
                    codes::MALFORMED,
                    format!("{key} is not one of {:?}", FunctionKey::ALL.map(|k| k.label())),
                ))?;
                continue;
            }
            Incoming::Frame(other) => {
                conn.send(&Frame::error(codes::UNEXPECTED, format!("clients may not send {}", frame_kind(&other))))?;
                continue;
            }
        };
        if session.is_over() {
            conn.send(&Frame::error(codes::FINISHED, "the sentence is finished; send bye"))?;
            continue;
        }
        match run_trial(conn, shared, session, key)? {
            TrialExit::Done => {}
            TrialExit::Bye => return Ok(Exit::Bye),
            TrialExit::Disconnected => return Ok(Exit::Disconnected),
        }
    }
}

fn frame_kind(f: &Frame) -> &'static str {
    match f {
        Frame::Hello { .. } => "hello",
        Frame::Config { .. } => "config",
        Frame::Flash { .. } => "flash",
        Frame::TrialResult { .. } => "trial_result",
        Frame::ComposeState { .. } => "compose_state",
        Frame::Suggestions { .. } => "suggestions",
        Frame::Attend { .. } => "attend",
        Frame::FunctionKey { .. } => "function_key",
        Frame::Error { .. } => "error",
        Frame::Bye => "bye",
    }
}

enum TrialExit {
    Done,
    Bye,
    Disconnected,
}

/// Streams flashes while the trial runs. Inbound frames are answered between
/// flashes; commands are refused until the trial ends.
struct FlashPump<'a> {
    conn: &'a mut Conn,
    realtime: bool,
    flash_ms: u64,
    wall0: Instant,
    virt0: u64,
    pending_off: Option<FlashNotice>,
    bye: bool,
    gone: bool,
}

impl FlashPump<'_> {
    fn wait_until(&mut self, t_ms: u64) {
        let due = self.wall0 + Duration::from_millis(t_ms.saturating_sub(self.virt0));
        loop {
            let left = if self.realtime { due.saturating_duration_since(Instant::now()) } else { Duration::ZERO };
            self.drain(left);
            if left.is_zero() || self.gone {
                return;
            }
        }
    }

    fn drain(&mut self, budget: Duration) {
        if self.gone {
            return;
        }
        let deadline = Instant::now() + budget;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let reply = match self.conn.poll(left) {
                Ok(Incoming::Idle) => return,
                Ok(Incoming::Closed) | Err(_) => {
                    self.gone = true;
                    return;
                }
                Ok(Incoming::Malformed(reason)) => Frame::error(codes::MALFORMED, reason),
                Ok(Incoming::Frame(Frame::Bye)) => {
                    self.bye = true;
                    continue;
                }
                Ok(Incoming::Frame(Frame::Attend { .. } | Frame::FunctionKey { .. })) => {
                    Frame::error(codes::TRIAL_IN_PROGRESS, "input is locked while flashing")
                }
                Ok(Incoming::Frame(other)) => {
                    Frame::error(codes::UNEXPECTED, format!("clients may not send {}", frame_kind(&other)))
                }
            };
            self.send(&reply);
            if left.is_zero() {
                return;
            }
        }
    }

    fn send(&mut self, f: &Frame) {
        if !self.gone && self.conn.send(f).is_err() {
            self.gone = true;
        }
    }

    fn flush_off(&mut self) {
        if let Some(prev) = self.pending_off.take() {
            let t_off = prev.t_ms + self.flash_ms;
            self.wait_until(t_off);
            self.send(&Frame::Flash { trial: prev.trial, seq: prev.seq, code: prev.code, on: false, t_ms: t_off });
        }
    }

    fn on_flash(&mut self, n: FlashNotice) {
        self.flush_off();
        self.wait_until(n.t_ms);
        self.send(&Frame::Flash { trial: n.trial, seq: n.seq, code: n.code, on: true, t_ms: n.t_ms });
        self.pending_off = Some(n);
    }
}

fn run_trial(conn: &mut Conn, shared: &Shared, session: &mut OnlineSession, key: Key) -> Result<TrialExit, WireError> {
    let mut pump = FlashPump {
        conn,
        realtime: session.cfg.server.realtime,
        flash_ms: session.cfg.timing.flash_ms,
        wall0: Instant::now(),
        virt0: session.engine.clock_ms,
        pending_off: None,
        bye: false,
        gone: false,
    };
    let outcome = session.step(Some(key), &mut |n| pump.on_flash(n));
    pump.flush_off();
    let (bye, gone) = (pump.bye, pump.gone);
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            log::error!("trial failed: {e}");
            conn.send(&Frame::error(codes::INTERNAL, e.to_string()))?;
            return Ok(TrialExit::Done);
        }
    };
    if gone {
        return Ok(TrialExit::Disconnected);
    }
    conn.send(&Frame::TrialResult {
        trial: outcome.trial,
        key: outcome.selected,
        intended: outcome.intended,
        correct: outcome.correct,
        cumulative: outcome.cumulative,
        warning: outcome.warning,
    })?;
    for f in snapshot_frames(session) {
        conn.send(&f)?;
    }
    if bye || shared.stop.load(Ordering::SeqCst) {
        return Ok(TrialExit::Bye);
    }
    Ok(TrialExit::Done)
}
