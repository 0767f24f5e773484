mod common;

use axum::http::StatusCode;
use beamtalk_core::corpus::{generate_corpus, TemplateSet};
use beamtalk_core::simulator::{reset, snapshot, Overrides};
use beamtalk_service::ServiceConfig;
use common::{app, call, get, post};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SCRIPTS: &[&str] = &[
    "set_temperature(target=150, ramp=10)",
    "set_humidity(target=45)",
    "move_motor(axis=x, amount=3, mode=relative)",
    "goto_point(x=10, y=-4)",
    "set_sample(name=\"film\")",
    "repeat(count=3, period=60):\n  measure(kind=\"scan\", exposure=5)\n",
    "until(quantity=temperature, threshold=80, ramp=5):\n  measure(kind=\"scan\")\n",
    "set_temperature(target=900, ramp=10)",
    "move_motor(axis=q, amount=1)",
    "repeat(count=2):",
    "measure(",
    "",
];

#[tokio::test]
async fn requests_without_confirmation_never_touch_the_beamline() {
    let (svc, app) = app(ServiceConfig::default());
    let texts: Vec<String> = generate_corpus(&TemplateSet::default_pack(), 200, 99, 0.5)
        .unwrap()
        .test
        .iter()
        .map(|p| p.render())
        .collect();
    let reset_state = snapshot(&reset(&Overrides::default()).unwrap());
    let reset_json = serde_json::to_string(&reset_state).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ids: Vec<String> = Vec::new();
    let mut counts = [0usize; 5];

    for op in 0..10_000 {
        match rng.gen_range(0..10) {
            0..=2 => {
                let text = if rng.gen_bool(0.8) {
                    texts.choose(&mut rng).unwrap().clone()
                } else {
                    let words = ["heat", "to", "500", "x", "measure", "", "repeat", "10", "times", "%"];
                    (0..rng.gen_range(0..12)).map(|_| *words.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" ")
                };
                let (status, v) = post(&app, "/interpret", json!({ "text": text })).await;
                assert!(matches!(status, StatusCode::OK | StatusCode::BAD_REQUEST), "{status}");
                if let Some(id) = v["id"].as_str() {
                    ids.push(id.to_string());
                }
                counts[0] += 1;
            }
            3..=5 => {
                let text = SCRIPTS.choose(&mut rng).unwrap();
                let (status, v) = post(&app, "/script", json!({ "text": text })).await;
                assert!(matches!(status, StatusCode::OK | StatusCode::BAD_REQUEST), "{status}");
                if let Some(id) = v["id"].as_str() {
                    ids.push(id.to_string());
                }
                counts[1] += 1;
            }
            6..=7 => {
                let id = match ids.choose(&mut rng) {
                    Some(id) if rng.gen_bool(0.9) => id.clone(),
                    _ => format!("unknown-{op}"),
                };
                let (status, _) = post(&app, "/reject", json!({ "id": id })).await;
                assert!(matches!(status, StatusCode::OK | StatusCode::CONFLICT | StatusCode::NOT_FOUND));
                counts[2] += 1;
            }
            8 => {
                let bodies = ["", "{", "[]", "{\"text\": 5}", "{\"id\": null}"];
                let path = ["/interpret", "/script", "/reject"].choose(&mut rng).unwrap();
                let (status, _) = call(&app, "POST", path, Some(bodies.choose(&mut rng).unwrap())).await;
                assert_eq!(status, StatusCode::BAD_REQUEST);
                counts[3] += 1;
            }
            _ => {
                let path = ["/state", "/history?limit=3", "/events?timeout_ms=0"].choose(&mut rng).unwrap();
                assert_eq!(get(&app, path).await.0, StatusCode::OK);
                counts[4] += 1;
            }
        }
        if op % 1000 == 0 {
            assert_eq!(svc.state(), reset_state, "state changed by op {op}");
        }
    }

    assert!(counts.iter().all(|&c| c > 500), "{counts:?}");
    assert_eq!(serde_json::to_string(&svc.state()).unwrap(), reset_json);
    assert_eq!(svc.state(), reset_state);
    assert!(svc.history(None).iter().all(|h| h.log.is_none()));
    assert_eq!(svc.events().last_seq() as usize, svc.history(None).len());
}
