use std::net::TcpStream;
use std::sync::OnceLock;
use std::time::Duration;

use speller::composer::{FunctionKey, Key};
use speller::session::server::{self, ServerHandle};
use speller::session::wire::{codes, Conn, Frame, Incoming, PROTOCOL};
use speller::session::{run_calibration, sink_log, Mode, SessionConfig};
use speller::subject::SubjectParams;
use speller::swlda::TrainedModel;

const WAIT: Duration = Duration::from_secs(30);

fn model() -> TrainedModel {
    static MODEL: OnceLock<TrainedModel> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            let mut cfg = SessionConfig::default();
            cfg.subject = SubjectParams::with_snr(8.0, 0);
            run_calibration(&cfg, &mut sink_log()).unwrap().model
        })
        .clone()
}

fn config(realtime: bool) -> SessionConfig {
    let mut cfg = SessionConfig::default();
    cfg.mode = Mode::Interactive;
    cfg.subject = SubjectParams::with_snr(8.0, 0);
    cfg.server.realtime = realtime;
    cfg
}

fn serve(cfg: SessionConfig) -> ServerHandle {
    server::start(cfg, model(), "127.0.0.1:0").unwrap()
}

fn connect(h: &ServerHandle) -> Conn {
    Conn::tcp(TcpStream::connect(h.addr).unwrap())
}

fn next(c: &mut Conn) -> Frame {
    match c.recv(WAIT).unwrap() {
        Incoming::Frame(f) => f,
        other => panic!("expected a frame, got {other:?}"),
    }
}

/// Send hello and consume the greeting; returns the session id.
fn hello(c: &mut Conn, session: Option<&str>) -> String {
    c.send(&Frame::Hello { protocol: PROTOCOL.into(), session: session.map(Into::into), resumed: false }).unwrap();
    let id = match next(c) {
        Frame::Hello { session: Some(id), resumed, .. } => {
            assert_eq!(resumed, session.is_some());
            id
        }
        other => panic!("expected hello, got {other:?}"),
    };
    match next(c) {
        Frame::Config { layout, .. } => {
            assert_eq!(layout.len(), 5);
            assert!(layout.iter().all(|r| r.len() == 8));
        }
        other => panic!("expected config, got {other:?}"),
    }
    assert!(matches!(next(c), Frame::ComposeState { .. }));
    assert!(matches!(next(c), Frame::Suggestions { .. }));
    id
}

/// Read until the trial result, returning it and the flash frames seen.
fn finish_trial(c: &mut Conn) -> (Frame, Vec<Frame>) {
    let mut flashes = Vec::new();
    loop {
        match next(c) {
            f @ Frame::Flash { .. } => flashes.push(f),
            f @ Frame::TrialResult { .. } => return (f, flashes),
            other => panic!("unexpected frame mid-trial: {other:?}"),
        }
    }
}

fn compose_state(c: &mut Conn) -> String {
    match next(c) {
        Frame::ComposeState { display, .. } => {
            assert!(matches!(next(c), Frame::Suggestions { .. }));
            display
        }
        other => panic!("expected compose_state, got {other:?}"),
    }
}

#[test]
fn attend_selects_the_attended_key() {
    let h = serve(config(false));
    let mut c = connect(&h);
    hello(&mut c, None);
    c.send(&Frame::Attend { key: Key::Letter('Q') }).unwrap();
    let (result, flashes) = finish_trial(&mut c);
    assert_eq!(flashes.len(), 2 * 13 * 8);
    assert!(matches!(flashes[0], Frame::Flash { on: true, .. }));
    assert!(matches!(flashes[1], Frame::Flash { on: false, .. }));
    match result {
        Frame::TrialResult { key, .. } => assert_eq!(key, Key::Letter('Q')),
        other => panic!("{other:?}"),
    }
    assert_eq!(compose_state(&mut c), "Q");
    c.send(&Frame::Bye).unwrap();
    assert_eq!(next(&mut c), Frame::Bye);
}

#[test]
fn function_key_frame_applies_function_keys_only() {
    let h = serve(config(false));
    let mut c = connect(&h);
    hello(&mut c, None);
    c.send(&Frame::FunctionKey { key: Key::Letter('A') }).unwrap();
    assert!(matches!(next(&mut c), Frame::Error { .. }));
    c.send(&Frame::FunctionKey { key: Key::Function(FunctionKey::Space) }).unwrap();
    let (result, _) = finish_trial(&mut c);
    assert!(matches!(result, Frame::TrialResult { key: Key::Function(FunctionKey::Space), .. }));
}

#[test]
fn malformed_frame_leaves_state_unchanged() {
    let h = serve(config(false));
    let mut c = connect(&h);
    hello(&mut c, None);
    // A length-prefixed body that is not a frame.
    let body = br#"{"type":"attend","key":"not a key"}"#;
    if let Conn::Tcp { stream, .. } = &mut c {
        use std::io::Write;
        stream.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
        stream.write_all(body).unwrap();
    }
    match next(&mut c) {
        Frame::Error { code, .. } => assert_eq!(code, codes::MALFORMED),
        other => panic!("{other:?}"),
    }
    c.send(&Frame::Attend { key: Key::Letter('A') }).unwrap();
    finish_trial(&mut c);
    assert_eq!(compose_state(&mut c), "A");
}

#[test]
fn second_client_is_busy_and_disconnected_session_resumes() {
    let h = serve(config(false));
    let mut a = connect(&h);
    let id = hello(&mut a, None);
    a.send(&Frame::Attend { key: Key::Letter('H') }).unwrap();
    finish_trial(&mut a);
    assert_eq!(compose_state(&mut a), "H");

    let mut b = connect(&h);
    b.send(&Frame::Hello { protocol: PROTOCOL.into(), session: Some(id.clone()), resumed: false }).unwrap();
    match next(&mut b) {
        Frame::Error { code, .. } => assert_eq!(code, codes::BUSY),
        other => panic!("{other:?}"),
    }

    a.close();
    drop(a);
    let mut c = connect(&h);
    let mut resumed = None;
    for _ in 0..100 {
        c.send(&Frame::Hello { protocol: PROTOCOL.into(), session: Some(id.clone()), resumed: false }).unwrap();
        match next(&mut c) {
            Frame::Hello { resumed: true, .. } => {
                resumed = Some(());
                break;
            }
            Frame::Error { code, .. } if code == codes::BUSY => {
                std::thread::sleep(Duration::from_millis(50));
                c = connect(&h);
            }
            other => panic!("{other:?}"),
        }
    }
    assert!(resumed.is_some(), "session never parked");
    assert!(matches!(next(&mut c), Frame::Config { .. }));
    match next(&mut c) {
        Frame::ComposeState { display, .. } => assert_eq!(display, "H"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(next(&mut c), Frame::Suggestions { .. }));
    assert_eq!(h.session_count(), 1);
}

#[test]
fn unknown_session_and_wrong_protocol_are_refused() {
    let h = serve(config(false));
    let mut c = connect(&h);
    c.send(&Frame::Hello { protocol: PROTOCOL.into(), session: Some("nope".into()), resumed: false }).unwrap();
    assert!(matches!(next(&mut c), Frame::Error { code, .. } if code == codes::UNKNOWN_SESSION));
    let mut c = connect(&h);
    c.send(&Frame::Hello { protocol: "speller-wire.v0".into(), session: None, resumed: false }).unwrap();
    assert!(matches!(next(&mut c), Frame::Error { code, .. } if code == codes::PROTOCOL));
}

#[test]
fn attend_during_a_trial_is_rejected() {
    let mut cfg = config(true);
    cfg.timing.repetitions = 1;
    cfg.timing.post_selection_ms = 300;
    cfg.timing.inter_sequence_ms = 100;
    let h = serve(cfg);
    let mut c = connect(&h);
    hello(&mut c, None);
    c.send(&Frame::Attend { key: Key::Letter('B') }).unwrap();
    assert!(matches!(next(&mut c), Frame::Flash { on: true, .. }));
    c.send(&Frame::Attend { key: Key::Letter('C') }).unwrap();
    let mut rejected = false;
    let result = loop {
        match next(&mut c) {
            Frame::Flash { .. } => {}
            Frame::Error { code, .. } => {
                assert_eq!(code, codes::TRIAL_IN_PROGRESS);
                rejected = true;
            }
            f @ Frame::TrialResult { .. } => break f,
            other => panic!("{other:?}"),
        }
    };
    assert!(rejected);
    assert!(matches!(result, Frame::TrialResult { key: Key::Letter('B'), .. }));
    assert_eq!(compose_state(&mut c), "B");
}

#[test]
fn websocket_clients_speak_the_same_frames() {
    let h = serve(config(false));
    let stream = TcpStream::connect(h.addr).unwrap();
    let mut c = Conn::ws_client(stream, &format!("ws://{}/", h.addr)).unwrap();
    hello(&mut c, None);
    c.send(&Frame::Attend { key: Key::Letter('Z') }).unwrap();
    let (result, _) = finish_trial(&mut c);
    assert!(matches!(result, Frame::TrialResult { key: Key::Letter('Z'), .. }));
    assert_eq!(compose_state(&mut c), "Z");
    c.send(&Frame::Bye).unwrap();
    assert_eq!(next(&mut c), Frame::Bye);
}

#[test]
fn per_session_logs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(false);
    cfg.log = Some(dir.path().join("serve.jsonl"));
    let h = serve(cfg);
    let mut c = connect(&h);
    let id = hello(&mut c, None);
    c.send(&Frame::Attend { key: Key::Letter('K') }).unwrap();
    finish_trial(&mut c);
    compose_state(&mut c);
    c.send(&Frame::Bye).unwrap();
    assert_eq!(next(&mut c), Frame::Bye);
    h.shutdown();
    let path = dir.path().join(format!("serve-{id}.jsonl"));
    let recs = speller::eventlog::read_log_file(&path).unwrap();
    let rep = speller::session::replay::replay(&recs).unwrap();
    assert_eq!(rep.selections, 1);
    assert!(rep.is_exact());
}
