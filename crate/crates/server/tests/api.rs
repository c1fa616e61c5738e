use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use evolvesim_core::behavior::{check_plan, DailyPlan, EntryStatus, PlanEntry};
use evolvesim_core::environment::load_world_with;
use evolvesim_core::goal::GoalTag;
use evolvesim_core::simkernel::{read_log, replay_transcript, transcript, EventLog, Kernel, LogRecord, RunConfig, DEFAULT_WORLD};
use evolvesim_server::{router, AppState, ServerOptions};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const QUIET_ROOM: &str = "Annex/Quiet Room";

fn config(days: u32) -> RunConfig {
    let mut c = RunConfig::default_scenario();
    c.days = days;
    c
}

fn app(days: u32, log: &Path) -> Router {
    let kernel = Kernel::new(config(days), EventLog::create(log).unwrap()).unwrap();
    let (state, _) = AppState::spawn(kernel, ServerOptions { tick_delay: Duration::ZERO });
    router(state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<(&str, String)>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some((ctype, text)) => {
            req = req.header("content-type", ctype);
            Body::from(text)
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn get(app: &Router, uri: &str) -> Value {
    let (s, v) = call(app, "GET", uri, None).await;
    assert_eq!(s, StatusCode::OK, "{uri}: {v}");
    v
}

async fn post(app: &Router, uri: &str) -> Value {
    let (s, v) = call(app, "POST", uri, None).await;
    assert_eq!(s, StatusCode::OK, "{uri}: {v}");
    v
}

async fn chat(app: &Router, agent: &str, text: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/agents/{agent}/chat"), Some(("application/json", json!({ "text": text }).to_string()))).await
}

fn user_dialogs(agent: &Value) -> usize {
    agent["dialog"]["by_partner"]["user"].as_array().map_or(0, Vec::len)
}

fn records(v: Value) -> Vec<LogRecord> {
    serde_json::from_value(v).unwrap()
}

#[tokio::test]
async fn reads_leave_the_log_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    let app = app(1, &log);
    for _ in 0..3 {
        post(&app, "/run/step").await;
    }
    let before = std::fs::read(&log).unwrap();
    let state = get(&app, "/state").await;
    for uri in ["/state", "/agents/isabella", "/agents/sophia", "/logs", "/logs?day=1", "/logs?agent=benjamin&since=5"] {
        get(&app, uri).await;
    }
    assert_eq!(call(&app, "GET", "/agents/nobody", None).await.0, StatusCode::NOT_FOUND);
    let events = app.clone().oneshot(Request::get("/events?since=0").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(events.status(), StatusCode::OK);
    assert_eq!(std::fs::read(&log).unwrap(), before);
    assert_eq!(get(&app, "/state").await, state);
    assert_eq!(state["clock"]["tick"], 3);
}

#[tokio::test]
async fn logs_filter_by_day() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(2, &dir.path().join("run.jsonl"));
    post(&app, "/run/day").await;
    post(&app, "/run/step").await;
    let all = records(get(&app, "/logs").await);
    let day2 = records(get(&app, "/logs?day=2").await);
    assert!(!day2.is_empty());
    assert!(day2.iter().all(|r| r.day == 2));
    assert_eq!(day2, all.iter().filter(|r| r.day == 2).cloned().collect::<Vec<_>>());
    let day1 = records(get(&app, "/logs?day=1").await);
    assert_eq!(day1.len() + day2.len(), all.len());
}

#[tokio::test]
async fn chat_with_an_idle_agent_lands_in_dialog_memory() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(1, &dir.path().join("run.jsonl"));
    post(&app, "/run/step").await;
    let state = get(&app, "/state").await;
    let idle =
        state["agents"].as_object().unwrap().iter().find(|(_, a)| a["busy"] == false).map(|(id, _)| id.clone()).expect("an idle agent");

    let before = user_dialogs(&get(&app, &format!("/agents/{idle}")).await);
    let (s, out) = chat(&app, &idle, "What are you up to this morning?").await;
    assert_eq!(s, StatusCode::OK, "{out}");
    assert!(!out["reply"].as_str().unwrap().is_empty());
    assert_eq!(out["agent"], idle.as_str());
    assert_eq!(user_dialogs(&get(&app, &format!("/agents/{idle}")).await), before + 1);

    // the chat occupies the agent until the next tick
    assert_eq!(chat(&app, &idle, "One more thing").await.0, StatusCode::CONFLICT);
    assert_eq!(chat(&app, "nobody", "hello").await.0, StatusCode::NOT_FOUND);
    assert_eq!(chat(&app, &idle, "   ").await.0, StatusCode::BAD_REQUEST);

    let logged = records(get(&app, "/logs").await);
    let chats: Vec<_> = logged.iter().filter(|r| r.kind == "command" && r.payload["kind"] == "chat").collect();
    assert_eq!(chats.len(), 1);
    assert_eq!(logged.iter().filter(|r| r.kind == "dialog" && r.payload["partner"] == "user").count(), 1);
}

fn quiet_room_plan() -> DailyPlan {
    let entry = PlanEntry {
        start: 10 * 60,
        end: 11 * 60,
        goal: GoalTag::Learning,
        place: QUIET_ROOM.into(),
        description: "read in the quiet room".into(),
        motivation: String::new(),
        status: EntryStatus::Pending,
        partner: None,
        invitation: None,
        proposed_partner: None,
    };
    DailyPlan { agent: "isabella".into(), day: 2, entries: vec![entry] }
}

#[tokio::test]
async fn uploaded_place_is_staged_then_plannable_next_day() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(2, &dir.path().join("run.jsonl"));
    post(&app, "/run/step").await;
    let places_before = get(&app, "/state").await["places"].clone();

    let (s, bad) = call(&app, "PUT", "/environment", Some(("text/csv", "building,place\nHall\n".into()))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(!bad["rows"].as_array().unwrap().is_empty());
    let state = get(&app, "/state").await;
    assert_eq!(state["places"], places_before);
    assert!(state["staged"].is_null());

    let (s, same) = call(&app, "PUT", "/environment", Some(("text/csv", DEFAULT_WORLD.into()))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(same["diff"], json!({"added": [], "removed": [], "changed": []}));

    let csv = format!("{DEFAULT_WORLD}Annex,Quiet Room,20,20,4,Learning,a quiet room,08:00,20:00\n");
    let (s, staged) = call(&app, "PUT", "/environment", Some(("text/csv", csv.clone()))).await;
    assert_eq!(s, StatusCode::OK, "{staged}");
    assert_eq!(staged["diff"]["added"], json!([QUIET_ROOM]));
    assert_eq!(staged["effective_day"], 2);
    assert_eq!(get(&app, "/state").await["staged"]["diff"]["added"], json!([QUIET_ROOM]));

    post(&app, "/run/day").await;
    let day1_places = get(&app, "/state").await["places"].clone();
    assert_eq!(day1_places, places_before);
    post(&app, "/run/step").await;
    let state = get(&app, "/state").await;
    assert_eq!(state["clock"]["day"], 2);
    assert!(
        state["places"].as_array().unwrap().iter().any(|p| p["building"] == "Annex" && p["name"] == "Quiet Room"),
        "{}",
        state["places"]
    );

    // the world the kernel switched to accepts a plan entry at the new place
    let swapped = records(get(&app, "/logs?day=2").await).into_iter().find(|r| r.kind == "world").expect("world swap record");
    assert_eq!(swapped.payload["csv"], csv.as_str());
    let cfg = config(2);
    let world = load_world_with(csv.as_bytes(), cfg.grid()).unwrap();
    let home = get(&app, "/agents/isabella").await["home"].as_str().unwrap().to_owned();
    assert_eq!(check_plan(&quiet_room_plan(), &world, &home, &cfg.window()), Vec::<String>::new());
    let old = load_world_with(DEFAULT_WORLD.as_bytes(), cfg.grid()).unwrap();
    assert!(!check_plan(&quiet_room_plan(), &old, &home, &cfg.window()).is_empty());
}

#[tokio::test]
async fn event_stream_delivers_each_record_once_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(1, &dir.path().join("run.jsonl"));
    let resp = app.clone().oneshot(Request::get("/events?since=0").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();
    for _ in 0..4 {
        post(&app, "/run/step").await;
    }
    let expected = records(get(&app, "/logs").await);

    let mut text = String::new();
    let mut seen: Vec<LogRecord> = Vec::new();
    while seen.len() < expected.len() {
        let frame = tokio::time::timeout(Duration::from_secs(10), body.frame()).await.expect("stream stalled").unwrap().unwrap();
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
        while let Some(end) = text.find("\n\n") {
            let event: String = text.drain(..end + 2).collect();
            let id = event.lines().find_map(|l| l.strip_prefix("id: ")).map(|s| s.parse::<u64>().unwrap());
            if let Some(data) = event.lines().find_map(|l| l.strip_prefix("data: ")) {
                let rec: LogRecord = serde_json::from_str(data).unwrap();
                assert_eq!(id, Some(rec.seq));
                seen.push(rec);
            }
        }
    }
    assert_eq!(seen, expected);

    // a subscriber with no cursor starts at the head
    let resp = app.clone().oneshot(Request::get("/events").body(Body::empty()).unwrap()).await.unwrap();
    let mut body = resp.into_body();
    post(&app, "/run/step").await;
    let first = tokio::time::timeout(Duration::from_secs(10), body.frame()).await.unwrap().unwrap().unwrap().into_data().unwrap();
    let line = std::str::from_utf8(&first).unwrap().lines().find_map(|l| l.strip_prefix("id: ")).unwrap().to_owned();
    assert_eq!(line.parse::<u64>().unwrap(), expected.last().unwrap().seq + 1);
}

#[tokio::test]
async fn steered_session_replays_from_its_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    let app = app(2, &log);
    post(&app, "/run/step").await;
    post(&app, "/run/step").await;
    let state = get(&app, "/state").await;
    let idle = state["agents"].as_object().unwrap().iter().find(|(_, a)| a["busy"] == false).map(|(id, _)| id.clone()).unwrap();
    assert_eq!(chat(&app, &idle, "Any plans for the evening?").await.0, StatusCode::OK);
    let csv = format!("{DEFAULT_WORLD}Annex,Quiet Room,20,20,4,Learning,a quiet room,08:00,20:00\n");
    assert_eq!(call(&app, "PUT", "/environment", Some(("text/csv", csv))).await.0, StatusCode::OK);
    post(&app, "/run/resume").await;
    let mut finished = false;
    for _ in 0..2000 {
        if get(&app, "/state").await["phase"] == "finished" {
            finished = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    assert!(finished, "auto-run did not finish");
    assert_eq!(call(&app, "POST", "/run/step", None).await.0, StatusCode::CONFLICT);

    let recs = read_log(&log).unwrap();
    let kinds: Vec<&str> = recs.iter().filter(|r| r.kind == "command").map(|r| r.payload["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["step", "step", "chat", "env_update", "resume"]);
    let entries = transcript(&recs).unwrap();
    let fresh = Kernel::new(config(2), EventLog::in_memory()).unwrap();
    let replayed = replay_transcript(fresh, &entries, recs.len() as u64).unwrap();
    assert_eq!(replayed.log().records(), recs.as_slice());
}
