#![allow(dead_code)]

use std::path::{Path, PathBuf};

use entangled_core::pipeline::protocol;
use entangled_core::pipeline::BackendSuite;

pub const PIPELINE_RECORDS: usize = 10;
pub const PIPELINE_SIZE: usize = 32;
pub const PIPELINE_SEED: u64 = 2024;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn pipeline_script() -> PathBuf {
    fixtures().join("pipeline").join("script.json")
}

pub fn write_pipeline_input(root: &Path) {
    entangled_core::synth::write_pipeline_fixture(root, PIPELINE_RECORDS, PIPELINE_SIZE, PIPELINE_SEED, "bird-demo", "<bird>")
        .expect("fixture written");
}

/// Compares `actual` with a checked-in golden file, rewriting it when
/// `UPDATE_GOLDEN` is set.
pub fn check_golden(path: &Path, actual: &str) {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{} differs from the produced output:\n{actual}", path.display());
}

/// Serves `suite` over HTTP on an ephemeral port; returns the base URL.
pub fn serve(suite: BackendSuite) -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind");
    let port = server.server_addr().to_ip().expect("ip listener").port();
    std::thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            let (status, text) = match req.as_reader().read_to_string(&mut body) {
                Ok(_) if *req.method() == tiny_http::Method::Post => protocol::dispatch(&suite, req.url(), &body),
                Ok(_) => (405, r#"{"version":"1","error":"POST only"}"#.to_string()),
                Err(e) => (400, format!(r#"{{"version":"1","error":"{e}"}}"#)),
            };
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
            let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(status).with_header(header));
        }
    });
    format!("http://127.0.0.1:{port}")
}
