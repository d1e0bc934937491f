use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use nqac::decoder::DecoderConfig;
use nqac::engine::{Engine, Strategy};
use nqac::lm::{Activation, LmModel, ModelSpec, Vocabulary};
use nqac::mpc::CountedTrie;
use nqac::service::{app, serve_on, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

fn trie() -> CountedTrie {
    let counts: BTreeMap<String, u64> = [("abc", 5), ("abd", 3), ("abe", 1), ("xyz", 2)].map(|(q, c)| (q.to_string(), c)).into();
    CountedTrie::build(&counts)
}

fn model() -> LmModel {
    let spec = ModelSpec { hidden: 8, layers: 1, word_dim: 0, user_dim: 0, time_dim: 4, activation: Activation::Relu };
    LmModel::new(spec, Vocabulary::build(&["abc", "abd", "xyz"], 1), 3).unwrap()
}

fn config() -> ServiceConfig {
    ServiceConfig { decoder: DecoderConfig { beam_width: 4, max_len: 6, diversity: 1.0, k: 4 }, ..ServiceConfig::default() }
}

async fn get(router: &axum::Router, uri: &str) -> (StatusCode, Value) {
    let response = router.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()));
    (status, value)
}

#[tokio::test]
async fn health_and_trie_ordering() {
    let cfg = config();
    let router = app(Engine::new(Some(trie()), None, None, None, cfg.decoder.clone()).unwrap(), &cfg).unwrap();
    assert_eq!(get(&router, "/health").await, (StatusCode::OK, Value::String("ok".into())));

    let (status, body) = get(&router, "/suggest?prefix=ab&k=2").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["prefix"], "ab");
    assert_eq!(body["strategy"], "mpc");
    assert!(body["latency_ms"].as_f64().unwrap() >= 0.0);
    let texts: Vec<&str> = body["suggestions"].as_array().unwrap().iter().map(|s| s["text"].as_str().unwrap()).collect();
    assert_eq!(texts, ["abc", "abd"]);
    assert_eq!(body["suggestions"][0]["score"], 5.0);
}

#[tokio::test]
async fn bad_requests_are_400_with_a_message() {
    let cfg = config();
    let router = app(Engine::new(Some(trie()), None, None, None, cfg.decoder.clone()).unwrap(), &cfg).unwrap();
    for uri in [
        "/suggest",
        "/suggest?prefix=",
        "/suggest?prefix=%20%20",
        "/suggest?prefix=ab&k=0",
        "/suggest?prefix=ab&k=51",
        "/suggest?prefix=ab&k=two",
        "/suggest?prefix=ab&strategy=popular",
        "/suggest?prefix=ab&t=tomorrow",
        // no model loaded
        "/suggest?prefix=ab&strategy=neural",
        "/suggest?prefix=qq&strategy=routed",
    ] {
        let (status, body) = get(&router, uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert!(body["error"].as_str().is_some_and(|m| !m.is_empty()), "{uri}: {body}");
    }
}

#[tokio::test]
async fn routed_falls_through_to_the_model_on_unseen_prefixes() {
    let cfg = config();
    let router = app(Engine::new(Some(trie()), Some(model()), None, None, cfg.decoder.clone()).unwrap(), &cfg).unwrap();
    let (status, body) = get(&router, "/suggest?prefix=xa&k=3&user=u1&t=2006-03-01T21:30:00Z").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["strategy"], "neural");
    let suggestions = body["suggestions"].as_array().unwrap();
    assert_eq!(suggestions.len(), 3);
    for s in suggestions {
        assert!(s["text"].as_str().unwrap().starts_with("xa"));
    }
    let (_, body) = get(&router, "/suggest?prefix=ab").await;
    assert_eq!(body["strategy"], "mpc");
    let (status, body) = get(&router, "/suggest?prefix=ab&strategy=neural_diverse&k=2").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["strategy"], "neural_diverse");
}

#[test]
fn unusable_default_strategy_is_rejected() {
    let cfg = ServiceConfig { default_strategy: Strategy::Neural, ..config() };
    assert!(app(Engine::new(Some(trie()), None, None, None, cfg.decoder.clone()).unwrap(), &cfg).is_err());
}

#[tokio::test]
async fn real_socket_and_graceful_shutdown() {
    let cfg = config();
    let router = app(Engine::new(Some(trie()), None, None, None, cfg.decoder.clone()).unwrap(), &cfg).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve_on(listener, router, async {
        let _ = stopped.await;
    }));

    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream.write_all(b"GET /suggest?prefix=x&k=1 HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).await.unwrap();
    assert!(raw.starts_with("HTTP/1.1 200"), "{raw}");
    let body: Value = serde_json::from_str(raw.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["suggestions"][0]["text"], "xyz");

    stop.send(()).unwrap();
    tokio::time::timeout(std::time::Duration::from_secs(5), server).await.expect("server stops").unwrap().unwrap();
}
