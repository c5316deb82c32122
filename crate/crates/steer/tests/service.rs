use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use strata_core::gait::TwoBeatGaitSpec;
use strata_core::ModelSpec;
use strata_steer::{router, ServeConfig, Session, SessionHandle};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

async fn start(rate: f64) -> std::net::SocketAddr {
    let model = Arc::new(ModelSpec::quadruped());
    let gait = TwoBeatGaitSpec::fiducial_trot(&model).unwrap();
    let session = Session::new(model, gait);
    let config = ServeConfig {
        tick: Duration::from_millis(10),
        decimation: 2,
        broadcast_capacity: 256,
    };
    let handle = SessionHandle::spawn(session, config);
    handle
        .send(strata_steer::ClientMessage::SetRate { phase_per_sec: rate })
        .await;
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(handle)).await.unwrap() });
    addr
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> Value {
    let mut stream = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    let body = buf.split("\r\n\r\n").nth(1).unwrap();
    serde_json::from_str(body).unwrap()
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

async fn connect(addr: std::net::SocketAddr) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    ws
}

async fn next_json(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("message within timeout")
            .unwrap()
            .unwrap();
        if let Message::Text(text) = msg {
            return serde_json::from_str(&text).unwrap();
        }
    }
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string())).await.unwrap();
}

/// Reads until a message of the given type arrives.
async fn next_of(ws: &mut Ws, kind: &str) -> Value {
    loop {
        let v = next_json(ws).await;
        if v["type"] == kind {
            return v;
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn model_endpoint_serves_active_model() {
    let addr = start(0.0).await;
    let model = http_get(addr, "/model").await;
    assert_eq!(model["name"], "quad");
    assert_eq!(model["legs"].as_array().unwrap().len(), 4);
    let parsed = ModelSpec::from_json(&model.to_string()).unwrap();
    assert_eq!(parsed, ModelSpec::quadruped());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn stepping_fills_history() {
    let addr = start(0.0).await;
    let mut ws = connect(addr).await;
    send(&mut ws, json!({"type":"step","dtau": 4.0 * std::f64::consts::PI})).await;
    send(&mut ws, json!({"type":"snapshot"})).await;
    let state = loop {
        let v = next_of(&mut ws, "state").await;
        if v["cycle"] == 2 {
            break v;
        }
    };
    assert!(state["pose"][1].as_f64().unwrap() > 3.0);
    assert!(state["turning_radius"].is_null());
    let history = http_get(addr, "/history").await;
    let history = history.as_array().unwrap();
    assert_eq!(history.len(), 2);
    assert!(history[0]["z"][1].as_f64().unwrap() > 1.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_message_gets_error_and_leaves_session() {
    let addr = start(0.0).await;
    let mut ws = connect(addr).await;
    send(&mut ws, json!({"type":"snapshot"})).await;
    let before = next_of(&mut ws, "state").await;
    ws.send(Message::Text("{\"type\":\"set_inputs\",\"u13\":[1]}".into()))
        .await
        .unwrap();
    let err = next_of(&mut ws, "error").await;
    assert!(err["message"].as_str().unwrap().contains("malformed"));
    send(&mut ws, json!({"type":"snapshot"})).await;
    let after = next_of(&mut ws, "state").await;
    assert_eq!(before, after);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn set_inputs_is_pending_until_onset() {
    let addr = start(0.0).await;
    let mut ws = connect(addr).await;
    send(&mut ws, json!({"type":"step","dtau":0.5})).await;
    send(&mut ws, json!({"type":"set_inputs","u13":[0.5,0.25],"u24":[0.5,-0.25]})).await;
    send(&mut ws, json!({"type":"snapshot"})).await;
    let snap = loop {
        let v = next_of(&mut ws, "state").await;
        if v["pending"]["u13"] == json!([0.5, 0.25]) {
            break v;
        }
    };
    assert_eq!(snap["latched"]["u13"], json!([1.0, 0.0]));
    send(&mut ws, json!({"type":"reset"})).await;
    send(&mut ws, json!({"type":"snapshot"})).await;
    let reset = loop {
        let v = next_of(&mut ws, "state").await;
        if v["tau"] == 0.0 {
            break v;
        }
    };
    assert_eq!(reset["pose"], json!([0.0, 0.0, 0.0]));
    assert_eq!(reset["cycle"], 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn two_clients_receive_identical_broadcasts() {
    let addr = start(2.0).await;
    let mut a = connect(addr).await;
    let mut b = connect(addr).await;
    // let both subscriptions settle, then compare a window of broadcasts
    tokio::time::sleep(Duration::from_millis(100)).await;
    let first_a = next_of(&mut a, "state").await;
    let mut seen_b = Vec::new();
    for _ in 0..50 {
        seen_b.push(next_of(&mut b, "state").await);
    }
    let start = seen_b
        .iter()
        .position(|v| *v == first_a)
        .expect("client b saw client a's broadcast");
    let mut seen_a = vec![first_a];
    for _ in 0..(seen_b.len() - start - 1) {
        seen_a.push(next_of(&mut a, "state").await);
    }
    assert_eq!(seen_a, seen_b[start..]);
    assert!(seen_a.windows(2).all(|w| w[1]["tau"].as_f64() >= w[0]["tau"].as_f64()));
}

fn protocol(part: &str) -> jsonschema::JSONSchema {
    let path = format!("{}/schemas/protocol.schema.json", env!("CARGO_MANIFEST_DIR"));
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    doc["$ref"] = json!(format!("#/$defs/{part}"));
    jsonschema::JSONSchema::compile(&doc).unwrap()
}

#[test]
fn client_messages_match_protocol_schema() {
    let schema = protocol("client");
    let good = [
        json!({"type":"set_inputs","u13":[1.0,0.25],"u24":[1.0,-0.25]}),
        json!({"type":"set_rate","phase_per_sec":3.5}),
        json!({"type":"reset"}),
        json!({"type":"snapshot"}),
        json!({"type":"step","dtau":0.1}),
    ];
    for m in &good {
        assert!(schema.is_valid(m), "{m}");
        assert!(serde_json::from_value::<strata_steer::ClientMessage>(m.clone()).is_ok(), "{m}");
    }
    let bad = [
        json!({"type":"set_inputs","u13":[1.0]}),
        json!({"type":"teleport"}),
        json!({"type":"set_rate","phase_per_sec":1.0,"extra":1}),
    ];
    for m in &bad {
        assert!(!schema.is_valid(m), "{m}");
        assert!(serde_json::from_value::<strata_steer::ClientMessage>(m.clone()).is_err(), "{m}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn server_traffic_matches_protocol_schema() {
    let (server, history) = (protocol("server"), protocol("history"));
    let addr = start(0.0).await;
    let mut ws = connect(addr).await;
    send(&mut ws, json!({"type":"set_inputs","u13":[1.0,0.3],"u24":[1.0,-0.3]})).await;
    send(&mut ws, json!({"type":"step","dtau": 2.5 * std::f64::consts::PI})).await;
    send(&mut ws, json!({"type":"snapshot"})).await;
    send(&mut ws, json!({"type":"bogus"})).await;
    let state = next_of(&mut ws, "state").await;
    assert!(server.is_valid(&state), "{state}");
    let err = next_of(&mut ws, "error").await;
    assert!(server.is_valid(&err), "{err}");
    let h = http_get(addr, "/history").await;
    assert!(!h.as_array().unwrap().is_empty());
    assert!(history.is_valid(&h), "{h}");
}
