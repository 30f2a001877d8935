use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use guided_reasoning::gateway::{
    yes_probability, ChatGateway, ChatRequest, GatewayError, Message, OpenAiGateway, RetryPolicy,
};

#[derive(Debug, Clone)]
struct Seen {
    request_line: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves one canned (status, body) per connection, repeating the last one.
fn mock(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut authorization = None;
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    authorization = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Seen {
                request_line: request_line.trim_end().to_string(),
                authorization,
                body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
            });
            let (status, text) = &responses[i.min(responses.len() - 1)];
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (format!("http://{addr}"), seen)
}

fn fast() -> RetryPolicy {
    RetryPolicy {
        delays: vec![Duration::from_millis(1); 3],
    }
}

fn req() -> ChatRequest {
    ChatRequest::new(vec![Message::system("be brief"), Message::user("Is it?")], 0.6, 8).unwrap()
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"Yes"},
  "logprobs":{"content":[{"token":"Yes","logprob":-0.105,
  "top_logprobs":[{"token":"Yes","logprob":-0.105},{"token":"No","logprob":-2.303}]}]}}]}"#;

#[test]
fn rate_limited_every_time_gives_transport_after_four_attempts() {
    let (base, seen) = mock(vec![(429, "{}".into())]);
    let g = OpenAiGateway::new("live", &base, "m", None).with_retry(fast());
    match g.complete(&req()) {
        Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 4),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let (base, seen) = mock(vec![(400, r#"{"error":"bad"}"#.into())]);
    let g = OpenAiGateway::new("live", &base, "m", None).with_retry(fast());
    match g.complete(&req()) {
        Err(GatewayError::HttpStatus { code, body }) => {
            assert_eq!(code, 400);
            assert!(body.contains("bad"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_error_then_success() {
    let (base, seen) = mock(vec![(503, "{}".into()), (200, OK.into())]);
    let base = format!("{base}/");
    let g = OpenAiGateway::new("live", &base, "zephyr", Some("sk-test".into())).with_retry(fast());
    let r = g.complete(&req().with_logprobs(true)).unwrap();
    assert_eq!(r.content, "Yes");
    assert_eq!(r.provenance, "live");
    assert_eq!(r.token_logprobs.as_ref().unwrap().len(), 2);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let last = &seen[1];
    assert_eq!(last.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(last.authorization.as_deref(), Some("Bearer sk-test"));
    assert_eq!(last.body["model"], "zephyr");
    assert_eq!(last.body["temperature"], 0.6);
    assert_eq!(last.body["messages"][0]["role"], "system");
    assert_eq!(last.body["messages"][1]["content"], "Is it?");
    assert_eq!(last.body["logprobs"], true);
    assert_eq!(last.body["top_logprobs"], 5);
}

#[test]
fn yes_probability_over_the_wire() {
    let (base, _) = mock(vec![(200, OK.into())]);
    let g = OpenAiGateway::new("live", &base, "m", None).with_retry(fast());
    let p = yes_probability(&g, &req()).unwrap();
    assert!((p - 0.9).abs() < 1e-3, "{p}");
}

#[test]
fn rating_fallback_without_logprobs() {
    let first = r#"{"choices":[{"message":{"content":"Yes"}}]}"#;
    let second = r#"{"choices":[{"message":{"content":"I'd say 7."}}]}"#;
    let (base, seen) = mock(vec![(200, first.into()), (200, second.into())]);
    let g = OpenAiGateway::new("live", &base, "m", None)
        .with_retry(fast())
        .with_logprobs(false);
    let p = yes_probability(&g, &req()).unwrap();
    assert!((p - 0.7).abs() < 1e-12);
    let seen = seen.lock().unwrap();
    assert!(seen.iter().all(|s| s.body.get("logprobs").is_none()));
}

#[test]
fn unreachable_server() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let g = OpenAiGateway::new("live", &format!("http://{addr}"), "m", None).with_retry(fast());
    assert!(matches!(g.complete(&req()), Err(GatewayError::Transport { attempts: 4, .. })));
}

#[test]
fn malformed_body_is_a_decode_error() {
    let (base, _) = mock(vec![(200, "not json".into())]);
    let g = OpenAiGateway::new("live", &base, "m", None).with_retry(fast());
    assert!(matches!(g.complete(&req()), Err(GatewayError::Decode(_))));
}
