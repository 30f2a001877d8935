mod common;

use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use common::*;
use gr::service::{AppState, BackendFactory};
use gr::store::SessionStore;
use gr_testkit::{klinefelter, mercedes, normalize_whitespace, scripted_model};
use guided_reasoning::gateway::{ChatGateway, ChatRequest, ChatResponse, GatewayError, Model, ScriptEntry, ScriptMode};
use guided_reasoning::guide::GuideConfig;
use guided_reasoning::prompts::PromptTemplates;
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

async fn create(http: &Client, base: &str, body: Value) -> String {
    let resp = http.post(format!("{base}/v1/sessions")).json(&body).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    resp.json::<Value>().await.unwrap()["session_id"].as_str().unwrap().to_string()
}

async fn events_body(http: &Client, base: &str, id: &str, last: Option<u64>) -> String {
    let mut req = http.get(format!("{base}/v1/sessions/{id}/events"));
    if let Some(l) = last {
        req = req.header("Last-Event-ID", l.to_string());
    }
    let resp = req.send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    tokio::time::timeout(Duration::from_secs(30), resp.text()).await.unwrap().unwrap()
}

async fn get(http: &Client, url: String) -> (StatusCode, String) {
    let resp = http.get(url).send().await.unwrap();
    (resp.status(), resp.text().await.unwrap())
}

#[tokio::test(flavor = "multi_thread")]
async fn pros_cons_happy_path() {
    let base = start(scripted_state(None)).await;
    let http = Client::new();
    let id = create(&http, &base, json!({"problem": mercedes::problem(), "guide": "pros_cons"})).await;

    let body = events_body(&http, &base, &id, None).await;
    let events = sse_events(&body);
    let stages: Vec<&str> = events.iter().map(|e| e["stage"].as_str().unwrap()).collect();
    assert_eq!(
        stages,
        ["Brainstorm", "Issue", "ProsCons", "Relevance", "Mapping", "Evaluation", "Draft", "Delivered"]
    );
    let seqs: Vec<u64> = events.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=8).collect::<Vec<_>>());
    assert_eq!(sse_ids(&body), seqs);
    assert!(events.iter().all(|e| e["session_id"] == id.as_str()));
    assert_eq!(events[1]["payload"]["issue"], mercedes::ISSUE);

    let (code, status) = get(&http, format!("{base}/v1/sessions/{id}")).await;
    assert_eq!(code, StatusCode::OK);
    let status: Value = serde_json::from_str(&status).unwrap();
    assert_eq!(status["state"], "Delivered");
    assert_eq!(status["answer"], mercedes::answer());

    let (code, protocol) = get(&http, format!("{base}/v1/sessions/{id}/protocol")).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(normalize_whitespace(&protocol), normalize_whitespace(mercedes::GOLDEN_PROTOCOL));

    let (code, map) = get(&http, format!("{base}/v1/sessions/{id}/map.json")).await;
    assert_eq!(code, StatusCode::OK);
    let map: Value = serde_json::from_str(&map).unwrap();
    let roots = map["claims"].as_array().unwrap().iter().filter(|c| c["kind"] == "RootClaim").count();
    assert_eq!(roots, 3);
    let (code, svg) = get(&http, format!("{base}/v1/sessions/{id}/map.svg")).await;
    assert_eq!(code, StatusCode::OK);
    assert!(svg.contains("<svg"));
    let (code, dot) = get(&http, format!("{base}/v1/sessions/{id}/map.dot")).await;
    assert_eq!(code, StatusCode::OK);
    assert!(dot.starts_with("digraph"));

    let resp = http
        .post(format!("{base}/v1/sessions/{id}/followup"))
        .json(&json!({"question": MERCEDES_FOLLOWUP}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.json::<Value>().await.unwrap()["answer"], MERCEDES_EXPLANATION);
}

#[tokio::test(flavor = "multi_thread")]
async fn resuming_with_last_event_id() {
    let base = start(scripted_state(None)).await;
    let http = Client::new();
    let id = create(&http, &base, json!({"problem": mercedes::problem()})).await;
    let full = sse_events(&events_body(&http, &base, &id, None).await);
    let rest = sse_events(&events_body(&http, &base, &id, Some(3)).await);
    assert_eq!(rest, full[3..]);
    assert!(events_body(&http, &base, &id, Some(8)).await.trim().is_empty());
    let resp = http
        .get(format!("{base}/v1/sessions/{id}/events"))
        .header("Last-Event-ID", "soon")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread")]
async fn suspension_session() {
    let base = start(scripted_state(None)).await;
    let http = Client::new();
    let id = create(&http, &base, json!({"problem": klinefelter::PROBLEM, "guide": "suspension"})).await;
    let stages: Vec<String> = sse_events(&events_body(&http, &base, &id, None).await)
        .iter()
        .map(|e| e["stage"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(stages, ["Paraphrase", "Solve", "Consistency", "Draft", "Delivered"]);
    let (_, protocol) = get(&http, format!("{base}/v1/sessions/{id}/protocol")).await;
    for p in klinefelter::PARAPHRASES {
        assert!(protocol.contains(p));
    }
    let (code, _) = get(&http, format!("{base}/v1/sessions/{id}/map.svg")).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let resp = http
        .post(format!("{base}/v1/sessions/{id}/followup"))
        .json(&json!({"question": klinefelter::FOLLOWUP_QUESTION}))
        .send()
        .await
        .unwrap();
    let answer = resp.json::<Value>().await.unwrap()["answer"].as_str().unwrap().to_string();
    assert_eq!(answer, klinefelter::followup_answer());
    assert!(answer.contains(klinefelter::PARAPHRASES[1]));
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_sessions() {
    let base = start(scripted_state(None)).await;
    let http = Client::new();
    let a = create(&http, &base, json!({"problem": mercedes::problem()})).await;
    let b = create(&http, &base, json!({"problem": klinefelter::PROBLEM, "guide": "suspension"})).await;
    let c = create(&http, &base, json!({"problem": mercedes::problem()})).await;
    let (ea, eb, ec) = tokio::join!(
        events_body(&http, &base, &a, None),
        events_body(&http, &base, &b, None),
        events_body(&http, &base, &c, None),
    );
    for body in [ea, eb, ec] {
        let last = sse_events(&body).pop().unwrap();
        assert_eq!(last["stage"], "Delivered");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_sessions_are_404() {
    let base = start(scripted_state(None)).await;
    let http = Client::new();
    for path in ["", "/events", "/protocol", "/map.svg", "/map.dot", "/map.json"] {
        let (code, body) = get(&http, format!("{base}/v1/sessions/nope{path}")).await;
        assert_eq!(code, StatusCode::NOT_FOUND, "{path}");
        assert!(body.contains("unknown session"));
    }
    let resp = http
        .post(format!("{base}/v1/sessions/nope/followup"))
        .json(&json!({"question": "why?"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_bodies_are_422() {
    let base = start(scripted_state(None)).await;
    let http = Client::new();
    let url = format!("{base}/v1/sessions");
    for body in [
        json!({}),
        json!({"problem": 3}),
        json!({"problem": "  "}),
        json!({"problem": "x", "guide": "oracle"}),
    ] {
        let resp = http.post(&url).json(&body).send().await.unwrap();
        assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert!(resp.json::<Value>().await.unwrap()["error"].is_string());
    }
    let resp = http.post(&url).body("{not json").header("content-type", "application/json").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let resp = http.post(&url).body("problem=x").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);

    let id = create(&http, &base, json!({"problem": klinefelter::PROBLEM, "guide": "suspension"})).await;
    events_body(&http, &base, &id, None).await;
    for body in [json!({}), json!({"question": ""})] {
        let resp = http
            .post(format!("{base}/v1/sessions/{id}/followup"))
            .json(&body)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    }
}

/// Blocks every request until released, then fails it.
struct Gate {
    rx: Mutex<mpsc::Receiver<()>>,
}

impl ChatGateway for Gate {
    fn id(&self) -> &str {
        "gate"
    }

    fn complete(&self, _: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let _ = self.rx.lock().unwrap().recv();
        Err(GatewayError::HttpStatus {
            code: 503,
            body: "overloaded".into(),
        })
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unfinished_sessions_are_409_and_gateway_failures_surface() {
    let (tx, rx) = mpsc::channel();
    let gate = Arc::new(Gate { rx: Mutex::new(rx) });
    let factory: BackendFactory = {
        let gate = gate.clone();
        Arc::new(move |_| {
            let m = Model::new(gate.clone(), 0.6, 64);
            Ok((m.clone(), m))
        })
    };
    let state = AppState::new(factory, PromptTemplates::builtin(), GuideConfig::default(), None).unwrap();
    let base = start(state).await;
    let http = Client::new();
    let id = create(&http, &base, json!({"problem": "Should I?"})).await;

    let (_, status) = get(&http, format!("{base}/v1/sessions/{id}")).await;
    assert_eq!(serde_json::from_str::<Value>(&status).unwrap()["state"], "Received");
    let resp = http
        .post(format!("{base}/v1/sessions/{id}/followup"))
        .json(&json!({"question": "why?"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);
    for path in ["/protocol", "/map.svg", "/map.dot", "/map.json"] {
        let (code, _) = get(&http, format!("{base}/v1/sessions/{id}{path}")).await;
        assert_eq!(code, StatusCode::CONFLICT, "{path}");
    }

    // Each request needs one release: brainstorm, then the follow-up.
    tx.send(()).unwrap();
    let events = sse_events(&events_body(&http, &base, &id, None).await);
    assert_eq!(events.len(), 1);
    assert_eq!(events[0]["stage"], "Failed");
    assert_eq!(events[0]["payload"]["stage"], "Brainstorm");
    let (_, status) = get(&http, format!("{base}/v1/sessions/{id}")).await;
    let status: Value = serde_json::from_str(&status).unwrap();
    assert_eq!(status["state"], "Failed");
    assert_eq!(status["failure"]["stage"], "Brainstorm");
    assert!(status["failure"]["cause"].as_str().unwrap().contains("503"));

    tx.send(()).unwrap();
    let resp = http
        .post(format!("{base}/v1/sessions/{id}/followup"))
        .json(&json!({"question": "What went wrong?"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_GATEWAY);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["stage"], "Followup");
}

#[tokio::test(flavor = "multi_thread")]
async fn delivered_sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let http = Client::new();
    let base = start(scripted_state(Some(SessionStore::open(dir.path()).unwrap()))).await;
    let id = create(&http, &base, json!({"problem": mercedes::problem()})).await;
    let before = events_body(&http, &base, &id, None).await;
    let (_, protocol) = get(&http, format!("{base}/v1/sessions/{id}/protocol")).await;
    let (_, svg) = get(&http, format!("{base}/v1/sessions/{id}/map.svg")).await;
    assert!(dir.path().join(format!("{id}.json")).exists());

    let factory: BackendFactory = Arc::new(|_| {
        let client = scripted_model(
            "client",
            ScriptMode::Match,
            vec![ScriptEntry::contains(MERCEDES_FOLLOWUP, MERCEDES_EXPLANATION)],
            0.6,
        );
        Ok((client.clone(), client))
    });
    let store = SessionStore::open(dir.path()).unwrap();
    let state = AppState::new(factory, PromptTemplates::builtin(), GuideConfig::default(), Some(store)).unwrap();
    assert_eq!(state.session_count(), 1);
    let base = start(state).await;
    assert_eq!(events_body(&http, &base, &id, None).await, before);
    assert_eq!(get(&http, format!("{base}/v1/sessions/{id}/protocol")).await.1, protocol);
    assert_eq!(get(&http, format!("{base}/v1/sessions/{id}/map.svg")).await.1, svg);
    let (_, status) = get(&http, format!("{base}/v1/sessions/{id}")).await;
    assert_eq!(serde_json::from_str::<Value>(&status).unwrap()["state"], "Delivered");

    // A reloaded session gets fresh backends for follow-up questions.
    let resp = http
        .post(format!("{base}/v1/sessions/{id}/followup"))
        .json(&json!({"question": MERCEDES_FOLLOWUP}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.json::<Value>().await.unwrap()["answer"], MERCEDES_EXPLANATION);
    let stored = std::fs::read_to_string(dir.path().join(format!("{id}.json"))).unwrap();
    assert!(stored.contains(MERCEDES_EXPLANATION));
}
