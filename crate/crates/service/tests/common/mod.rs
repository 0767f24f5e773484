#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use beamtalk_core::corpus::{generate_corpus, TemplateSet};
use beamtalk_core::tagger::{train, TaggerModel};
use beamtalk_service::{router, Service, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

pub fn model() -> TaggerModel {
    static MODEL: OnceLock<TaggerModel> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            let c = generate_corpus(&TemplateSet::default_pack(), 1500, 42, 0.8).unwrap();
            train(&c, 3, 7).unwrap()
        })
        .clone()
}

pub fn app(cfg: ServiceConfig) -> (Arc<Service>, Router) {
    let svc = Arc::new(Service::new(cfg, Some(model())).unwrap());
    (svc.clone(), router(svc))
}

pub async fn call(app: &Router, method: &str, path: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub async fn post(app: &Router, path: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", path, Some(&body.to_string())).await
}

pub async fn get(app: &Router, path: &str) -> (StatusCode, Value) {
    call(app, "GET", path, None).await
}
