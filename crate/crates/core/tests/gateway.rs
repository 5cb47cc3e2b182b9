mod fixture;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rlvlm::gateway::{caption, embed, EmbedClient, Gateway, ModelEndpoint};
use rlvlm::pipeline::{run_pipeline, RunConfig};
use rlvlm::textenc::Embedder;
use rlvlm::Error;

struct Reply {
    status: u16,
    body: String,
    delay_ms: u64,
}

fn reply(status: u16, body: &str) -> Reply {
    Reply {
        status,
        body: body.to_owned(),
        delay_ms: 0,
    }
}

/// One-connection-per-request HTTP server answering from a script.
/// Returns the base URL and the log of `(path, body)` it received.
fn serve(script: Vec<Reply>) -> (String, Arc<Mutex<Vec<(String, String)>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&log);
    thread::spawn(move || {
        for r in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("").to_owned();
            let mut len = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            seen.lock().unwrap().push((path, String::from_utf8(body).unwrap()));
            thread::sleep(Duration::from_millis(r.delay_ms));
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                r.status,
                r.body.len(),
                r.body
            );
        }
    });
    (url, log)
}

const IMAGE: &[u8] = b"P2 2 2 255 1 2 3 4";

#[test]
fn caption_round_trip() {
    let (url, log) = serve(vec![reply(200, r#"{"caption":"a bus at the stop"}"#)]);
    let rec = caption(IMAGE, "describe", &ModelEndpoint::remote(url, 2000, 0)).unwrap();
    assert_eq!(rec.caption, "a bus at the stop");
    let log = log.lock().unwrap();
    assert_eq!(log[0].0, "/caption");
    let sent: serde_json::Value = serde_json::from_str(&log[0].1).unwrap();
    assert_eq!(sent["prompt"], "describe");
    assert_eq!(sent["image_b64"], "UDIgMiAyIDI1NSAxIDIgMyA0");
}

#[test]
fn server_errors_are_retried() {
    let (url, log) = serve(vec![
        reply(503, r#"{"error":"busy"}"#),
        reply(500, "oops"),
        reply(200, r#"{"caption":"ok"}"#),
    ]);
    let rec = caption(IMAGE, "p", &ModelEndpoint::remote(url, 2000, 3)).unwrap();
    assert_eq!(rec.caption, "ok");
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn retries_run_out() {
    let (url, _) = serve(vec![reply(503, r#"{"error":"busy"}"#), reply(503, r#"{"error":"still busy"}"#)]);
    let err = caption(IMAGE, "p", &ModelEndpoint::remote(url, 2000, 2)).unwrap_err();
    assert!(matches!(&err, Error::Backend { stage, message } if stage == "caption" && message.contains("still busy")));
}

#[test]
fn client_errors_are_not_retried() {
    let (url, log) = serve(vec![reply(400, r#"{"error":"bad prompt"}"#), reply(200, r#"{"caption":"late"}"#)]);
    let err = caption(IMAGE, "p", &ModelEndpoint::remote(url, 2000, 3)).unwrap_err();
    assert!(matches!(&err, Error::Backend { message, .. } if message == "HTTP 400: bad prompt"));
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn malformed_bodies_are_protocol_errors() {
    let (url, _) = serve(vec![reply(200, "{\"text\":1}"), reply(200, "not json")]);
    let ep = ModelEndpoint::remote(url, 2000, 0);
    assert!(matches!(caption(IMAGE, "p", &ep), Err(Error::Protocol { .. })));
    assert!(matches!(embed("x", &ep, 3), Err(Error::Protocol { .. })));
}

#[test]
fn embed_checks_dimension_and_normalizes() {
    let (url, log) = serve(vec![reply(200, r#"{"vector":[3.0,4.0]}"#), reply(200, r#"{"vector":[1.0,0.0]}"#)]);
    let client = EmbedClient::new(ModelEndpoint::remote(url, 2000, 0), 2).unwrap();
    assert_eq!(client.embed("red car").unwrap().values(), &[0.6, 0.8]);
    assert_eq!(log.lock().unwrap()[0], ("/embed".to_owned(), r#"{"text":"red car"}"#.to_owned()));
    let wrong = EmbedClient::new(client.endpoint().clone(), 3).unwrap();
    assert!(matches!(wrong.embed("x"), Err(Error::Protocol { stage, .. }) if stage == "embed"));
}

#[test]
fn slow_backend_times_out() {
    let (url, _) = serve(vec![Reply {
        delay_ms: 800,
        ..reply(200, r#"{"caption":"late"}"#)
    }]);
    let err = caption(IMAGE, "p", &ModelEndpoint::remote(url, 100, 0)).unwrap_err();
    assert!(matches!(err, Error::Transport { .. }), "{err}");
}

#[test]
fn unreachable_backend_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = caption(IMAGE, "p", &ModelEndpoint::remote(format!("http://127.0.0.1:{port}"), 500, 1)).unwrap_err();
    assert!(matches!(err, Error::Transport { .. }));
}

#[test]
fn mid_run_failure_keeps_completed_iterations() {
    let (url, _) = serve(vec![
        reply(200, r#"{"caption":"a red car waits at the junction"}"#),
        reply(422, r#"{"error":"prompt rejected"}"#),
    ]);
    let mut world = fixture::World::new(RunConfig::default());
    world.gateway = Gateway::new(ModelEndpoint::remote(url, 2000, 0), world.gateway.embedder().clone()).unwrap();
    let (name, bytes) = &fixture::images()[0];
    let err = run_pipeline(name, bytes, &world.policy(0), &world.ctx()).unwrap_err();
    let rep = &err.report;
    assert!(!rep.complete);
    assert_eq!(rep.iterations.len(), 1);
    assert_eq!(rep.initial_caption, "a red car waits at the junction");
    assert!(rep.final_text.is_none());
    let msg = rep.error.as_deref().unwrap();
    assert!(msg.contains("iteration 2") && msg.contains("caption") && msg.contains("prompt rejected"), "{msg}");
    assert_eq!(err.error.stage(), Some("caption"));
}

#[test]
fn failing_calls_stay_within_the_latency_bound() {
    let slow = || Reply {
        delay_ms: 600,
        ..reply(200, r#"{"caption":"late"}"#)
    };
    let (url, _) = serve(vec![slow(), slow(), slow()]);
    let start = std::time::Instant::now();
    let err = caption(IMAGE, "p", &ModelEndpoint::remote(url, 150, 3)).unwrap_err();
    let elapsed = start.elapsed();
    assert!(matches!(err, Error::Transport { .. }), "{err}");
    // Three attempts of at most 150 ms each, plus scheduling slack.
    assert!(elapsed < Duration::from_millis(3 * 150 + 400), "{elapsed:?}");
}
