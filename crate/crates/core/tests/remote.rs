use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use gar_core::corpus::Query;
use gar_core::scorer::{make_remote, BatchDoc, ScoreBatchRequest, Scorer, ScorerError, StubScorer};
use serde_json::Value;

type Handler = dyn Fn(&Value) -> (u16, String) + Send + Sync;

struct Mock {
    endpoint: String,
    hits: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<(String, String)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    let mut content_length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body).ok()?;
    Some((request_line, String::from_utf8(body).ok()?))
}

fn serve(handler: Box<Handler>) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some((line, body)) = read_request(&mut stream) else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let (status, reply) = if line.starts_with("POST /score ") {
                match serde_json::from_str::<Value>(&body) {
                    Ok(v) => handler(&v),
                    Err(_) => (400, "bad json".to_owned()),
                }
            } else {
                (404, "not found".to_owned())
            };
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    Mock { endpoint, hits }
}

/// Mirrors the in-process stub scorer over the wire.
fn stub_handler(v: &Value) -> (u16, String) {
    let query = v["query_text"].as_str().unwrap();
    let scores: Vec<Value> = v["docs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| {
            let id = d["doc_id"].as_str().unwrap();
            let text = d["text"].as_str().unwrap();
            serde_json::json!({"doc_id": id, "score": StubScorer::score_one(query, id, text)})
        })
        .collect();
    (200, serde_json::json!({ "scores": scores }).to_string())
}

fn request_docs() -> (Query, Vec<(&'static str, &'static str)>) {
    (Query::new("q1", "a b"), vec![("d1", "b c"), ("d2", "a b a")])
}

fn score(endpoint: &str, retries: usize) -> Result<Vec<f64>, ScorerError> {
    let (query, docs) = request_docs();
    let batch = docs.iter().map(|&(id, text)| BatchDoc { external_id: id, text }).collect();
    let request = ScoreBatchRequest::new(&query, batch).unwrap();
    make_remote(endpoint, Duration::from_secs(5), retries).score_batch(&request)
}

#[test]
fn happy_path_matches_in_process_stub() {
    let mock = serve(Box::new(stub_handler));
    let scores = score(&mock.endpoint, 0).unwrap();
    let (query, docs) = request_docs();
    let expected: Vec<f64> = docs.iter().map(|&(id, text)| StubScorer::score_one(&query.text, id, text)).collect();
    assert_eq!(scores, expected);
    assert!((scores[0] - 1.0).abs() < 1e-5);
    assert!((scores[1] - 2.0).abs() < 1e-5);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn scores_are_matched_by_id_not_position() {
    let mock = serve(Box::new(|_| {
        (200, r#"{"scores":[{"doc_id":"d2","score":5.5},{"doc_id":"d1","score":-1}]}"#.to_owned())
    }));
    assert_eq!(score(&mock.endpoint, 0).unwrap(), vec![-1.0, 5.5]);
}

#[test]
fn request_body_follows_protocol() {
    let mock = serve(Box::new(|v| {
        let ok = v["query_id"] == "q1"
            && v["query_text"] == "a b"
            && v["docs"][0]["doc_id"] == "d1"
            && v["docs"][1]["text"] == "a b a"
            && v["docs"].as_array().map(Vec::len) == Some(2);
        if ok {
            stub_handler(v)
        } else {
            (400, "unexpected body".to_owned())
        }
    }));
    score(&mock.endpoint, 0).unwrap();
}

#[test]
fn missing_id_is_protocol_error() {
    let mock = serve(Box::new(|_| (200, r#"{"scores":[{"doc_id":"d1","score":1.0},{"doc_id":"zz","score":2.0}]}"#.to_owned())));
    assert!(matches!(score(&mock.endpoint, 3), Err(ScorerError::RemoteProtocol(_))));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1, "protocol errors are not retried");
}

#[test]
fn wrong_count_and_duplicates_are_protocol_errors() {
    let short = serve(Box::new(|_| (200, r#"{"scores":[{"doc_id":"d1","score":1.0}]}"#.to_owned())));
    assert!(matches!(score(&short.endpoint, 0), Err(ScorerError::RemoteProtocol(_))));
    let dup = serve(Box::new(|_| {
        (200, r#"{"scores":[{"doc_id":"d1","score":1.0},{"doc_id":"d1","score":2.0}]}"#.to_owned())
    }));
    assert!(matches!(score(&dup.endpoint, 0), Err(ScorerError::RemoteProtocol(_))));
}

#[test]
fn nan_score_is_protocol_error() {
    for body in [
        r#"{"scores":[{"doc_id":"d1","score":NaN},{"doc_id":"d2","score":1.0}]}"#,
        r#"{"scores":[{"doc_id":"d1","score":null},{"doc_id":"d2","score":1.0}]}"#,
        r#"{"scores":[{"doc_id":"d1","score":1e999},{"doc_id":"d2","score":1.0}]}"#,
        "not json",
    ] {
        let mock = serve(Box::new(move |_| (200, body.to_owned())));
        assert!(matches!(score(&mock.endpoint, 0), Err(ScorerError::RemoteProtocol(_))), "{body}");
    }
}

#[test]
fn non_200_is_unavailable_after_retries() {
    let mock = serve(Box::new(|_| (503, "busy".to_owned())));
    assert!(matches!(score(&mock.endpoint, 2), Err(ScorerError::RemoteUnavailable(_))));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn retry_recovers_from_transient_failure() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let mock = serve(Box::new(move |v| {
        if seen.fetch_add(1, Ordering::SeqCst) == 0 {
            (500, "oops".to_owned())
        } else {
            stub_handler(v)
        }
    }));
    assert_eq!(score(&mock.endpoint, 1).unwrap().len(), 2);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let err = score(&format!("http://127.0.0.1:{port}"), 1).unwrap_err();
    assert!(matches!(err, ScorerError::RemoteUnavailable(_)), "{err:?}");
}

#[test]
fn ping_sends_one_document() {
    let mock = serve(Box::new(|v| {
        if v["docs"].as_array().map(Vec::len) == Some(1) {
            stub_handler(v)
        } else {
            (400, String::new())
        }
    }));
    make_remote(&format!("{}/", mock.endpoint), Duration::from_secs(5), 0).ping().unwrap();
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
}
