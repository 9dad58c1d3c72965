//! Websocket gateway driven by a scripted client.

use std::path::Path;
use std::time::Duration;

use base64::Engine;
use futures_util::{SinkExt, StreamExt};
use pixmimic_cli::gateway::{start, ServerMessage};
use pixmimic_cli::{commands, ControlMode, RunConfig};
use pixmimic_core::arena::{ActionClass, ACTION_COUNT};
use pixmimic_core::datapipe::Episode;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio_tungstenite::tungstenite::Message;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

fn config(dir: &Path, extra: &[(&str, &str)]) -> RunConfig {
    let mut o: Vec<(String, String)> = vec![
        ("port".into(), "0".into()),
        ("arena.tick_rate".into(), "600".into()),
        ("dataset".into(), dir.join("data").display().to_string()),
        ("output".into(), dir.join("out").display().to_string()),
        ("static_dir".into(), dir.join("static").display().to_string()),
    ];
    o.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    RunConfig::load(None, &o).unwrap()
}

async fn connect(addr: std::net::SocketAddr) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    ws
}

async fn next(ws: &mut Ws) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(20), ws.next())
            .await
            .expect("server message in time")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn next_frame(ws: &mut Ws) -> (u64, String, Vec<f32>, ControlMode) {
    loop {
        if let ServerMessage::Frame { tick, rgb_base64, scores, mode } = next(ws).await {
            return (tick, rgb_base64, scores, mode);
        }
    }
}

async fn send(ws: &mut Ws, json: &str) {
    ws.send(Message::text(json)).await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn hello_then_frames_of_native_size() {
    let tmp = tempfile::tempdir().unwrap();
    let gw = start(&config(tmp.path(), &[]), None).await.unwrap();
    let mut ws = connect(gw.addr).await;
    let ServerMessage::Hello { classes, resolution, agent_available, mode, .. } = next(&mut ws).await else {
        panic!("hello first");
    };
    assert_eq!(classes.len(), ACTION_COUNT);
    assert!(!agent_available);
    assert_eq!(mode, ControlMode::Human);
    let (t0, rgb, scores, _) = next_frame(&mut ws).await;
    let bytes = base64::engine::general_purpose::STANDARD.decode(rgb).unwrap();
    assert_eq!(bytes.len(), resolution[0] * resolution[1] * 3);
    assert!(scores.is_empty());
    let (t1, ..) = next_frame(&mut ws).await;
    assert_eq!(t1, t0 + 1);
    gw.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_messages_keep_the_connection() {
    let tmp = tempfile::tempdir().unwrap();
    let gw = start(&config(tmp.path(), &[]), None).await.unwrap();
    let mut ws = connect(gw.addr).await;
    for bad in [
        "not json",
        r#"{"type":"input","tick":1}"#,
        r#"{"type":"input","tick":1,"class_id":99}"#,
        r#"{"type":"warp"}"#,
        r#"{"type":"mode","mode":"agent"}"#,
        r#"{"type":"record","action":"start","path":"../escape.json"}"#,
    ] {
        send(&mut ws, bad).await;
        loop {
            match next(&mut ws).await {
                ServerMessage::Error { .. } => break,
                ServerMessage::Frame { .. } | ServerMessage::Hello { .. } => {}
                other => panic!("unexpected {other:?} for {bad}"),
            }
        }
    }
    next_frame(&mut ws).await;
    assert!(!tmp.path().join("out/escape.json").exists());
    gw.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn held_input_is_recorded_as_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let gw = start(&config(tmp.path(), &[]), None).await.unwrap();
    let mut ws = connect(gw.addr).await;
    let (tick, ..) = next_frame(&mut ws).await;
    let left = ActionClass::Left.id();
    send(&mut ws, &format!(r#"{{"type":"input","tick":{tick},"class_id":{left}}}"#)).await;
    // Let the input land before recording starts.
    let (t, ..) = next_frame(&mut ws).await;
    next_frame(&mut ws).await;
    send(&mut ws, r#"{"type":"record","action":"start","path":"held.json","ticks":300}"#).await;
    // Older input ticks are refused.
    send(&mut ws, &format!(r#"{{"type":"input","tick":{},"class_id":0}}"#, t.saturating_sub(5))).await;
    let (path, frames) = loop {
        if let ServerMessage::Recorded { path, frames, .. } = next(&mut ws).await {
            break (path, frames);
        }
    };
    assert_eq!(frames, 300);
    let ep = Episode::load(Path::new(&path)).unwrap();
    assert_eq!(ep.len(), 300);
    assert!(ep.labels.iter().all(|&l| l == ActionClass::Left), "{:?}", &ep.labels[..10]);
    gw.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn mode_switch_keeps_ticks_consecutive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        &[("episodes", "2"), ("tick_limit", "60"), ("max_iterations", "1"), ("batch_size", "2")],
    );
    commands::record(&cfg).unwrap();
    let ckpt = commands::train(&cfg, None).unwrap();
    let gw = start(&cfg, Some(&ckpt)).await.unwrap();
    let mut ws = connect(gw.addr).await;
    let ServerMessage::Hello { agent_available, mode, .. } = next(&mut ws).await else {
        panic!("hello first");
    };
    assert!(agent_available);
    assert_eq!(mode, ControlMode::Agent);

    let (mut last, _, scores, _) = next_frame(&mut ws).await;
    assert_eq!(scores.len(), ACTION_COUNT);
    let mut seen = Vec::new();
    for target in ["human", "takeover", "agent"] {
        send(&mut ws, &format!(r#"{{"type":"mode","mode":"{target}"}}"#)).await;
        for _ in 0..30 {
            let (tick, _, scores, mode) = next_frame(&mut ws).await;
            assert_eq!(tick, last + 1, "tick gap around switch to {target}");
            last = tick;
            assert_eq!(scores.is_empty(), mode == ControlMode::Human);
            seen.push(mode);
        }
    }
    for m in [ControlMode::Human, ControlMode::Takeover, ControlMode::Agent] {
        assert!(seen.contains(&m));
    }
    gw.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn static_files_served_at_root() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("static")).unwrap();
    std::fs::write(tmp.path().join("static/index.html"), "<html>arena</html>").unwrap();
    let gw = start(&config(tmp.path(), &[]), None).await.unwrap();
    let mut s = tokio::net::TcpStream::connect(gw.addr).await.unwrap();
    s.write_all(b"GET /index.html HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.ends_with("<html>arena</html>"));
    gw.shutdown().await;
}
