use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use trollwatch::corpus::CommentRecord;
use trollwatch::features::{feature_vector, freq_comment_flags, CommentScorer, NEUTRAL_SENTIMENT};
use trollwatch::pipeline::emotion_label;
use trollwatch::service::{handle_score, router, ScoreRequest, ServiceState};
use trollwatch::synth::{demo_corpora, demo_score_request, packet_element, train_demo_pipeline, DemoCorpora};

fn corpora() -> &'static DemoCorpora {
    static C: OnceLock<DemoCorpora> = OnceLock::new();
    C.get_or_init(|| demo_corpora(9))
}

fn ready_state() -> Arc<ServiceState> {
    static S: OnceLock<Arc<ServiceState>> = OnceLock::new();
    S.get_or_init(|| Arc::new(ServiceState::ready(train_demo_pipeline(corpora(), 9).unwrap())))
        .clone()
}

async fn send(app: Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Value) {
    let resp = app.oneshot(req).await.unwrap();
    let (parts, body) = resp.into_parts();
    let bytes = body.collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (parts.status, parts.headers, value)
}

fn post(body: impl Into<Body>) -> Request<Body> {
    Request::post("/score")
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.into())
        .unwrap()
}

fn request_json(req: &ScoreRequest) -> String {
    json!({"original": req.original, "comments": req.comments}).to_string()
}

#[tokio::test]
async fn health_reflects_model_state() {
    let state = Arc::new(ServiceState::new());
    let get = || Request::get("/health").body(Body::empty()).unwrap();
    let (status, _, v) = send(router(state.clone()), get()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["ready"], false);
    assert!(v["models"].is_null());

    let (status, _, _) = send(router(state.clone()), post(request_json(&demo_score_request(corpora())))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    let (_, _, v) = send(router(ready_state()), get()).await;
    assert_eq!(v["ready"], true);
    assert_eq!(v["models"]["classifier"], "boosted");
    assert_eq!(v["models"]["active_features"].as_array().unwrap().len(), 19);
}

#[tokio::test]
async fn install_happens_once() {
    let state = ServiceState::new();
    assert!(state.install(train_demo_pipeline(corpora(), 9).unwrap()));
    assert!(!state.install(train_demo_pipeline(corpora(), 9).unwrap()));
}

#[tokio::test]
async fn bad_bodies_are_rejected() {
    let app = router(ready_state());
    let (status, _, v) = send(app.clone(), post("{not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("invalid request body"));

    let (status, _, _) = send(app.clone(), post(r#"{"original": "x"}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _, v) = send(app, post(r#"{"comments": []}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("empty"));
}

#[tokio::test]
async fn cors_headers_everywhere() {
    let app = router(ready_state());
    let preflight = Request::builder()
        .method(Method::OPTIONS)
        .uri("/score")
        .header(header::ORIGIN, "https://m.weibo.cn")
        .body(Body::empty())
        .unwrap();
    let (status, headers, _) = send(app.clone(), preflight).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
    assert!(headers[header::ACCESS_CONTROL_ALLOW_METHODS].to_str().unwrap().contains("POST"));
    assert!(headers[header::ACCESS_CONTROL_ALLOW_HEADERS].to_str().unwrap().contains("content-type"));

    // Error responses carry them too, or the browser hides the message.
    let (status, headers, _) = send(app, post("{")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
}

#[tokio::test]
async fn all_reposts_score_nothing() {
    let c = corpora();
    let comments: Vec<Value> = (0..3)
        .map(|i| {
            let mut r = c.comments[i].clone();
            r.text = if i == 1 { "//@某人: 转发微博".into() } else { "转发微博".into() };
            packet_element(&r, &format!("r{i}"))
        })
        .collect();
    let body = json!({"original": c.original, "comments": comments}).to_string();
    let (status, _, v) = send(router(ready_state()), post(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["total"], 3);
    assert_eq!(v["scored"].as_array().unwrap().len(), 0);
    let rejected = v["rejected"].as_array().unwrap();
    assert_eq!(rejected.len(), 3);
    for (i, r) in rejected.iter().enumerate() {
        assert_eq!(r["index"], i);
        assert_eq!(r["comment_id"], format!("r{i}"));
    }
    assert_eq!(rejected[0]["reason"], "pure-repost");
}

#[tokio::test]
async fn malformed_elements_are_reported_in_place() {
    let c = corpora();
    let comments = vec![
        packet_element(&c.comments[0], "a"),
        json!({"id": "broken", "text": "没有用户信息"}),
        json!(42),
        packet_element(&c.comments[1], "b"),
    ];
    let body = json!({"comments": comments}).to_string();
    let (status, _, v) = send(router(ready_state()), post(body)).await;
    assert_eq!(status, StatusCode::OK);
    let rejected = v["rejected"].as_array().unwrap();
    let invalid: Vec<_> = rejected
        .iter()
        .filter(|r| r["reason"].as_str().unwrap().starts_with("invalid-comment"))
        .collect();
    assert_eq!(invalid.len(), 2);
    assert_eq!(invalid[0]["index"], 1);
    assert_eq!(invalid[0]["comment_id"], "broken");
    assert_eq!(invalid[1]["index"], 2);
    assert!(invalid[1]["comment_id"].is_null());
    let scored = v["scored"].as_array().unwrap().len();
    assert_eq!(scored + rejected.len(), 4);
}

/// The endpoint must agree exactly with running each module by hand.
#[tokio::test]
async fn matches_modules_run_by_hand() {
    let c = corpora();
    let request = demo_score_request(c);
    let (status, _, v) = send(router(ready_state()), post(request_json(&request))).await;
    assert_eq!(status, StatusCode::OK);

    let state = ready_state();
    let pipeline = state.pipeline().unwrap();
    assert_eq!(v, serde_json::to_value(handle_score(pipeline, &request)).unwrap());

    let records: Vec<CommentRecord> = request
        .comments
        .iter()
        .enumerate()
        .map(|(i, e)| trollwatch::corpus::parse_packet_element(e, i).unwrap().record)
        .collect();
    let text = pipeline.text();
    let flags = freq_comment_flags(&records);
    let original = text.score_text(&request.original).map_or(NEUTRAL_SENTIMENT, |s| s.sentiment);
    let mut expected_scored = Vec::new();
    let mut expected_rejected = Vec::new();
    for (i, (record, freq)) in records.iter().zip(flags).enumerate() {
        let words = match text.tokenizer().tokens(&record.text) {
            Ok(w) => w,
            Err(reason) => {
                expected_rejected.push((i, reason.as_str().to_string()));
                continue;
            }
        };
        let sentiment = text.sentiment().sentiment_score(&words).unwrap();
        let emotion = text.emotions().classify(&words).unwrap();
        let scores = trollwatch::features::CommentScores {
            sentiment,
            emotions: emotion.probabilities,
            emotion: emotion.emotion,
        };
        let fv = feature_vector(record, freq, &scores, original);
        let prediction = pipeline.troll_model().predict(&fv.values).unwrap();
        expected_scored.push(json!({
            "index": i,
            "comment_id": format!("c{i}"),
            "sentiment": sentiment,
            "emotion": emotion_label(emotion.emotion),
            "troll_probability": prediction.probability,
            "troll": prediction.troll,
        }));
    }
    assert_eq!(v["scored"], Value::Array(expected_scored));
    let got: Vec<(usize, String)> = v["rejected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["index"].as_u64().unwrap() as usize, r["reason"].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(got, expected_rejected);
    assert_eq!(got.len(), 2, "the repost and the digits-only comment");
}
