//! Wire-protocol conformance of the built-in mock, in process and over HTTP.
#![cfg(feature = "http")]

mod common;

use std::path::PathBuf;
use std::time::Duration;

use entangled_core::layers::extract_foreground;
use entangled_core::pipeline::http::HttpBackend;
use entangled_core::pipeline::protocol::{
    self, InpaintWireRequest, ScoreRequest, SegmentRequest, ValidateRequest, ENDPOINTS,
};
use entangled_core::pipeline::rle::Rle;
use entangled_core::pipeline::{
    run_pipeline, BackendSuite, CallContext, InpaintRequest, InpaintRole, Inpainter, MockBackend, PipelineConfig,
    Segmenter, Validator, LOG_FILE,
};
use entangled_core::synth;
use serde_json::Value;

fn protocol_dir() -> PathBuf {
    common::fixtures().join("protocol")
}

fn schema() -> Value {
    serde_json::from_str(&std::fs::read_to_string(protocol_dir().join("schema.json")).unwrap()).unwrap()
}

fn request_file(endpoint: &str) -> PathBuf {
    protocol_dir().join("requests").join(format!("{}.json", endpoint.trim_start_matches('/')))
}

fn type_ok(v: &Value, ty: &str) -> bool {
    match ty {
        "string" => v.is_string(),
        "number" => v.is_number(),
        "array" => v.is_array(),
        "object" => v.is_object(),
        other => panic!("unknown schema type {other}"),
    }
}

fn conforms(v: &Value, fields: &Value) -> Result<(), String> {
    let obj = v.as_object().ok_or("not an object")?;
    for (k, ty) in fields.as_object().unwrap() {
        let got = obj.get(k).ok_or(format!("missing `{k}`"))?;
        if !type_ok(got, ty.as_str().unwrap()) {
            return Err(format!("`{k}` is not a {ty}"));
        }
    }
    Ok(())
}

fn check_response(endpoint: &str, body: &str) {
    let s = schema();
    let v: Value = serde_json::from_str(body).unwrap();
    conforms(&v, &s["endpoints"][endpoint]["response"]).unwrap_or_else(|e| panic!("{endpoint}: {e}\n{body}"));
    assert_eq!(v["version"], s["version"]);
    match endpoint {
        "/segment" => {
            let masks = v["masks"].as_array().unwrap();
            assert!(!masks.is_empty());
            for m in masks {
                conforms(m, &s["mask_item"]).unwrap();
                conforms(&m["rle"], &s["rle"]).unwrap();
            }
        }
        "/validate" => assert!(s["answers"].as_array().unwrap().contains(&v["answer"])),
        "/inpaint" => {
            protocol::decode_image(v["image"].as_str().unwrap()).unwrap();
        }
        _ => {}
    }
}

fn sample_requests() -> Vec<(&'static str, String)> {
    let scene = synth::scene(16, 16, 3, 5);
    let layer = extract_foreground(&scene.original, &scene.mask).unwrap();
    let image = protocol::encode_image(&scene.original).unwrap();
    let pretty = |v: serde_json::Result<String>| v.unwrap() + "\n";
    vec![
        (
            "/segment",
            pretty(serde_json::to_string_pretty(&SegmentRequest {
                record_id: "r1".into(),
                image: image.clone(),
            })),
        ),
        (
            "/score",
            pretty(serde_json::to_string_pretty(&ScoreRequest {
                record_id: "r1".into(),
                candidate_id: "c0".into(),
                image: image.clone(),
                mask: Rle::encode(&scene.mask),
                text: "<bird>".into(),
            })),
        ),
        (
            "/validate",
            pretty(serde_json::to_string_pretty(&ValidateRequest {
                record_id: "r1".into(),
                image: protocol::encode_layer(&layer).unwrap(),
                category: "bird".into(),
                question: "Is this a bird?".into(),
            })),
        ),
        (
            "/inpaint",
            pretty(serde_json::to_string_pretty(&InpaintWireRequest {
                record_id: "r1".into(),
                image,
                mask: Rle::encode(&scene.mask),
                prompt: "empty background without a bird".into(),
                pass: 1,
                role: InpaintRole::Initial,
            })),
        ),
    ]
}

#[test]
fn request_fixtures_match_encoder_and_schema() {
    let s = schema();
    for (endpoint, body) in sample_requests() {
        common::check_golden(&request_file(endpoint), &body);
        let v: Value = serde_json::from_str(&body).unwrap();
        conforms(&v, &s["endpoints"][endpoint]["request"]).unwrap();
    }
}

#[test]
fn in_process_dispatch_conforms() {
    let suite = BackendSuite::uniform(MockBackend::default());
    for endpoint in ENDPOINTS {
        let body = std::fs::read_to_string(request_file(endpoint)).unwrap();
        let (status, resp) = protocol::dispatch(&suite, endpoint, &body);
        assert_eq!(status, 200, "{endpoint}: {resp}");
        check_response(endpoint, &resp);
    }
}

fn raw_post(url: &str, body: &str) -> (u16, String) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent
        .post(url)
        .header("Content-Type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}

#[test]
fn http_server_conforms_and_reports_errors() {
    let base = common::serve(BackendSuite::uniform(MockBackend::default()));
    let s = schema();
    for endpoint in ENDPOINTS {
        let body = std::fs::read_to_string(request_file(endpoint)).unwrap();
        let (status, resp) = raw_post(&format!("{base}{endpoint}"), &body);
        assert_eq!(status, 200, "{endpoint}: {resp}");
        check_response(endpoint, &resp);

        let (status, resp) = raw_post(&format!("{base}{endpoint}"), "{\"record_id\": 3}");
        assert_eq!(status, 400);
        conforms(&serde_json::from_str(&resp).unwrap(), &s["error"]).unwrap();
    }
    let (status, _) = raw_post(&format!("{base}/nope"), "{}");
    assert_eq!(status, 404);
}

#[test]
fn scripted_failure_is_a_structured_5xx() {
    let script: entangled_core::pipeline::MockScript =
        serde_json::from_str(r#"{"records": {"r1": {"fail": ["inpaint"]}}}"#).unwrap();
    let base = common::serve(BackendSuite::uniform(MockBackend::new(script)));
    let body = std::fs::read_to_string(request_file("/inpaint")).unwrap();
    let (status, resp) = raw_post(&format!("{base}/inpaint"), &body);
    assert!((500..600).contains(&status));
    conforms(&serde_json::from_str(&resp).unwrap(), &schema()["error"]).unwrap();
}

#[test]
fn http_client_round_trips_through_the_mock() {
    let base = common::serve(BackendSuite::uniform(MockBackend::default()));
    let client = HttpBackend::new(&base, Duration::from_secs(10));
    let scene = synth::scene(24, 24, 3, 3);
    let ctx = CallContext { record_id: "x" };
    let remote = client.segment(ctx, &scene.original).unwrap();
    let local = MockBackend::default().segment(ctx, &scene.original).unwrap();
    assert_eq!(remote, local);

    let out = client
        .inpaint(
            ctx,
            InpaintRequest {
                image: &scene.original,
                mask: &scene.mask,
                prompt: "p",
                pass: 1,
                role: InpaintRole::Initial,
            },
        )
        .unwrap();
    assert_eq!(out.dims(), scene.original.dims());

    let layer = extract_foreground(&scene.original, &scene.mask).unwrap();
    let verdict = client.validate(ctx, &layer, "bird", "Is this a bird?").unwrap();
    assert_eq!(verdict.answer, entangled_core::pipeline::Answer::Yes);
}

/// Outcome log with numbers replaced by their JSON type; images cross the
/// wire as 8-bit PNG, so gate scores differ in the last digits.
fn structure(v: &Value) -> Value {
    match v {
        Value::Number(_) => Value::String("number".into()),
        Value::Array(a) => Value::Array(a.iter().map(structure).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), structure(v))).collect()),
        other => other.clone(),
    }
}

#[test]
fn pipeline_over_http_matches_in_process_outcomes() {
    let run = |suite: BackendSuite| {
        let dir = tempfile::tempdir().unwrap();
        common::write_pipeline_input(dir.path());
        let summary = run_pipeline(dir.path(), &suite, &PipelineConfig::default()).unwrap();
        let log: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap()).unwrap();
        (summary.summary.rate_display(), structure(&log["outcomes"]))
    };
    let script = || MockBackend::from_file(&common::pipeline_script()).unwrap();
    let local = run(BackendSuite::uniform(script()));
    let base = common::serve(BackendSuite::uniform(script()));
    let remote = run(BackendSuite::uniform(HttpBackend::new(&base, Duration::from_secs(10))));
    assert_eq!(local, remote);
}
