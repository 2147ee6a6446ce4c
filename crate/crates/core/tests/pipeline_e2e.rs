mod common;

use entangled_core::manifest::{scan_manifest, summarize, Manifest, RecordStatus};
use entangled_core::pipeline::{
    run_pipeline, BackendSuite, MockBackend, PipelineConfig, LOG_FILE, MANUAL_REVIEW_FILE, REASON_EXHAUSTED,
};

fn mock() -> BackendSuite {
    BackendSuite::uniform(MockBackend::from_file(&common::pipeline_script()).unwrap())
}

#[test]
fn scripted_run_matches_golden_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    common::write_pipeline_input(dir.path());
    let cfg = PipelineConfig {
        workers: 3,
        ..PipelineConfig::default()
    };

    let run = run_pipeline(dir.path(), &mock(), &cfg).unwrap();
    assert_eq!(run.processed, 10);
    assert_eq!(run.backend_errors, 0);
    assert_eq!((run.summary.selected, run.summary.images), (9, 10));
    assert_eq!(run.summary.rate_display(), "90.00%");

    let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
    common::check_golden(&common::fixtures().join("pipeline").join("golden_log.json"), &log);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    common::check_golden(&common::fixtures().join("pipeline").join("golden_manifest.json"), &manifest);

    let m = Manifest::load(dir.path()).unwrap();
    let rejected = m.entry("img_004").unwrap();
    assert_eq!(rejected.status, Some(RecordStatus::Rejected));
    assert_eq!(rejected.reason.as_deref(), Some(REASON_EXHAUSTED));
    assert!(dir.path().join(MANUAL_REVIEW_FILE).is_file());

    let records = scan_manifest(dir.path()).unwrap();
    assert_eq!(summarize(&records, "bird-demo").rate_display(), "90.00%");

    let rerun = run_pipeline(dir.path(), &mock(), &cfg).unwrap();
    assert_eq!(rerun.processed, 0);
    assert_eq!(std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap(), log);
    assert_eq!(rerun.summary.rate_display(), "90.00%");
}

#[test]
fn worker_count_does_not_change_the_log() {
    let logs: Vec<String> = [1, 4]
        .into_iter()
        .map(|workers| {
            let dir = tempfile::tempdir().unwrap();
            common::write_pipeline_input(dir.path());
            let cfg = PipelineConfig {
                workers,
                ..PipelineConfig::default()
            };
            run_pipeline(dir.path(), &mock(), &cfg).unwrap();
            std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn unreachable_backend_rejects_every_record() {
    let dir = tempfile::tempdir().unwrap();
    common::write_pipeline_input(dir.path());
    let suite = entangled_core::pipeline::backend_from_arg("http://127.0.0.1:9", std::time::Duration::from_secs(2)).unwrap();
    let run = run_pipeline(dir.path(), &suite, &PipelineConfig::default()).unwrap();
    assert_eq!(run.processed, 10);
    assert_eq!(run.backend_errors, 10);
    assert_eq!(run.summary.selected, 0);
    assert!(run
        .outcomes
        .iter()
        .all(|o| o.reason.as_deref() == Some(entangled_core::pipeline::REASON_BACKEND)));
}
