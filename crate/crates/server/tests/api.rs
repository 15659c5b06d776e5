use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use evtwin_core::config::ScenarioConfig;
use evtwin_server::snapshot::{Delta, Snapshot};
use evtwin_server::{router, AppState, ServerOptions};

fn app() -> Router {
    router(AppState::new(ServerOptions::default()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn scenario(ev: u32) -> Value {
    let mut c = ScenarioConfig::campus_baseline();
    c.nb_electrical = ev;
    c.rng_seed = 11;
    serde_json::to_value(c).unwrap()
}

async fn create(app: &Router, ev: u32) -> String {
    let (status, body) = call(app, "POST", "/api/sessions", Some(scenario(ev))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

async fn control(app: &Router, id: &str, cmd: Value) -> (StatusCode, Value) {
    call(app, "POST", &format!("/api/sessions/{id}/control"), Some(cmd)).await
}

#[tokio::test]
async fn sessions_are_created_paused_and_distinct() {
    let app = app();
    let a = create(&app, 50).await;
    let b = create(&app, 50).await;
    assert_ne!(a, b);
    let (status, s) = call(&app, "GET", &format!("/api/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["mode"]["state"], "paused");
    assert_eq!(s["tick"], 0);
    let (_, list) = call(&app, "GET", "/api/sessions", None).await;
    assert_eq!(list.as_array().unwrap().len(), 2);
    let (status, _) = call(&app, "DELETE", &format!("/api/sessions/{b}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, "GET", &format!("/api/sessions/{b}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_scenarios_are_rejected_with_violations() {
    let app = app();
    let mut bad = scenario(50);
    bad["areas"][0]["n_ports_11kW"] = json!(80);
    bad["areas"][0]["n_ports_30kW"] = json!(40);
    let (status, body) = call(&app, "POST", "/api/sessions", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["violations"].as_array().unwrap().len() >= 2, "{body}");
    let (status, _) = call(&app, "POST", "/api/sessions", Some(json!({ "nb_electrical": "many" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_sessions_and_bad_commands() {
    let app = app();
    let (status, _) = call(&app, "GET", "/api/sessions/nope/snapshot", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let id = create(&app, 50).await;
    let (status, body) = control(&app, &id, json!({ "type": "start", "speed": 7 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["violations"][0]["field"], "speed");
    let (status, _) = control(&app, &id, json!({ "type": "warp" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) =
        control(&app, &id, json!({ "type": "set_ports", "area_id": "C-Parking", "n11": 10, "n30": 11 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["violations"].as_array().unwrap().iter().any(|v| v["field"].as_str().unwrap().contains("30")));
}

#[tokio::test]
async fn paused_session_is_frozen() {
    let app = app();
    let id = create(&app, 80).await;
    let (status, ack) = control(&app, &id, json!({ "type": "step", "n": 30 })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["tick"], 30);
    let (_, a) = call(&app, "GET", &format!("/api/sessions/{id}/snapshot"), None).await;
    tokio::time::sleep(Duration::from_millis(300)).await;
    let (_, b) = call(&app, "GET", &format!("/api/sessions/{id}/snapshot"), None).await;
    let a: Snapshot = serde_json::from_value(a).unwrap();
    let b: Snapshot = serde_json::from_value(b).unwrap();
    assert_eq!(a.content_hash(), b.content_hash());
    assert_eq!(a.tick, 30);
}

#[tokio::test]
async fn running_advances_and_pause_stops() {
    let app = app();
    let id = create(&app, 50).await;
    control(&app, &id, json!({ "type": "start", "speed": 60 })).await;
    tokio::time::sleep(Duration::from_millis(400)).await;
    let (_, ack) = control(&app, &id, json!({ "type": "pause" })).await;
    let t = ack["tick"].as_u64().unwrap();
    assert!(t >= 5, "only {t} ticks");
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, s) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(s["tick"].as_u64().unwrap(), t);
}

#[tokio::test]
async fn notification_events_follow_the_command() {
    let app = app();
    let id = create(&app, 200).await;
    control(&app, &id, json!({ "type": "step", "n": 96 })).await;
    let mut policies = serde_json::to_value(ScenarioConfig::campus_baseline().policies).unwrap();
    policies["notification"] = json!(true);
    let (_, ack) = control(&app, &id, json!({ "type": "set_policies", "policies": policies })).await;
    let at = ack["applied_at_tick"].as_u64().unwrap();
    assert_eq!(at, 96);
    control(&app, &id, json!({ "type": "step", "n": 150 })).await;
    let mut since = 0;
    let mut first = None;
    loop {
        let (_, page) = call(&app, "GET", &format!("/api/sessions/{id}/events?since={since}&limit=500"), None).await;
        let events = page["events"].as_array().unwrap();
        if events.is_empty() {
            break;
        }
        first = first.or_else(|| events.iter().find(|e| e["event"] == "notify").map(|e| e["session_tick"].as_u64().unwrap()));
        since = page["next"].as_u64().unwrap();
    }
    assert!(first.expect("a notification was dispatched") >= at);
}

#[tokio::test]
async fn log_replays_to_the_same_hashes() {
    let app = app();
    let id = create(&app, 120).await;
    control(&app, &id, json!({ "type": "step", "n": 50 })).await;
    control(&app, &id, json!({ "type": "set_ports", "area_id": "J-Parking", "n11": 4, "n30": 2 })).await;
    control(&app, &id, json!({ "type": "step", "n": 50 })).await;
    control(&app, &id, json!({ "type": "reset", "seed": 3 })).await;
    control(&app, &id, json!({ "type": "step", "n": 10 })).await;
    let (_, log) = call(&app, "GET", &format!("/api/sessions/{id}/log"), None).await;
    assert_eq!(log["commands"].as_array().unwrap().len(), 5);
    assert_eq!(log["commands"][1]["tick"], 50);
    let (_, v) = call(&app, "GET", &format!("/api/sessions/{id}/verify"), None).await;
    assert_eq!(v["matches"], true, "{v}");
    assert_eq!(v["hash"], v["replay_hash"]);
}

#[tokio::test]
async fn site_geojson_is_served() {
    let (status, g) = call(&app(), "GET", "/api/site", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(g["type"], "FeatureCollection");
}

struct SseReader {
    body: Body,
    buf: String,
}

impl SseReader {
    async fn open(app: &Router, id: &str) -> SseReader {
        let req = Request::builder().uri(format!("/api/sessions/{id}/stream")).body(Body::empty()).unwrap();
        let res = app.clone().oneshot(req).await.unwrap();
        assert_eq!(res.status(), StatusCode::OK);
        assert!(res.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
        SseReader { body: res.into_body(), buf: String::new() }
    }

    /// Next `(event, data)` pair.
    async fn next(&mut self) -> Option<(String, Value)> {
        loop {
            if let Some(end) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..end + 2).collect();
                let mut name = String::new();
                let mut data = String::new();
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("event: ") {
                        name = v.to_string();
                    } else if let Some(v) = line.strip_prefix("data: ") {
                        data.push_str(v);
                    }
                }
                if !name.is_empty() {
                    return Some((name, serde_json::from_str(&data).unwrap()));
                }
                continue;
            }
            let frame = tokio::time::timeout(Duration::from_secs(10), self.body.frame()).await.ok()??.ok()?;
            if let Ok(data) = frame.into_data() {
                self.buf.push_str(std::str::from_utf8(&data).unwrap());
            }
        }
    }

    async fn next_content(&mut self) -> (String, Value) {
        loop {
            let (name, v) = self.next().await.expect("stream message");
            if name != "heartbeat" {
                return (name, v);
            }
        }
    }
}

#[tokio::test]
async fn late_subscriber_gets_a_full_snapshot_first() {
    let app = app();
    let id = create(&app, 60).await;
    control(&app, &id, json!({ "type": "step", "n": 100 })).await;
    let mut s = SseReader::open(&app, &id).await;
    let (name, first) = s.next_content().await;
    assert_eq!(name, "snapshot");
    assert_eq!(first["tick"], 100);
    let (_, status) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status["subscribers"], 1);
    drop(s);
    tokio::time::sleep(Duration::from_millis(50)).await;
    let (_, status) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status["subscribers"], 0);
}

#[tokio::test]
async fn subscribers_see_identical_content() {
    let app = app();
    let id = create(&app, 100).await;
    let mut a = SseReader::open(&app, &id).await;
    let mut b = SseReader::open(&app, &id).await;
    let (_, sa) = a.next_content().await;
    let (_, sb) = b.next_content().await;
    assert_eq!(sa["tick"], 0);
    let sa: Snapshot = serde_json::from_value(sa).unwrap();
    let sb: Snapshot = serde_json::from_value(sb).unwrap();
    assert_eq!(sa.content_hash(), sb.content_hash());

    control(&app, &id, json!({ "type": "step", "n": 40 })).await;
    let (na, da) = a.next_content().await;
    let (nb, db) = b.next_content().await;
    assert_eq!((na.as_str(), nb.as_str()), ("delta", "delta"));
    let ra = serde_json::from_value::<Delta>(da).unwrap().apply(&sa);
    let rb = serde_json::from_value::<Delta>(db).unwrap().apply(&sb);
    assert_eq!(ra.tick, 40);
    assert_eq!(ra.content_hash(), rb.content_hash());
    let (_, live) = call(&app, "GET", &format!("/api/sessions/{id}/snapshot"), None).await;
    let live: Snapshot = serde_json::from_value(live).unwrap();
    assert_eq!(ra.content_hash(), live.content_hash());
}

#[tokio::test]
async fn stream_messages_are_rate_limited() {
    let app = app();
    let id = create(&app, 50).await;
    let mut s = SseReader::open(&app, &id).await;
    s.next_content().await;
    control(&app, &id, json!({ "type": "start", "speed": 60 })).await;
    let start = tokio::time::Instant::now();
    let mut count = 0;
    while start.elapsed() < Duration::from_millis(1000) {
        s.next_content().await;
        count += 1;
    }
    assert!(count <= 11, "{count} messages in one second");
    assert!(count >= 3);
}

#[tokio::test]
async fn idle_sessions_expire_and_streams_end() {
    let opts = ServerOptions {
        idle_timeout: Duration::from_millis(300),
        heartbeat: Duration::from_millis(50),
        ..ServerOptions::default()
    };
    let state = AppState::new(opts);
    let app = router(state.clone());
    let id = create(&app, 50).await;
    let kept = create(&app, 50).await;
    let mut s = SseReader::open(&app, &kept).await;
    assert_eq!(s.next_content().await.0, "snapshot");
    assert_eq!(s.next().await.unwrap().0, "heartbeat");
    tokio::time::sleep(Duration::from_millis(1500)).await;
    let (status, _) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(state.session_count(), 1, "a watched session stays alive");
    call(&app, "DELETE", &format!("/api/sessions/{kept}"), None).await;
    assert_eq!(s.next_content().await.0, "end");
}
