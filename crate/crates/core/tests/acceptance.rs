//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p entangled-core --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use entangled_core::error::{Error, Region};
use entangled_core::imaging::{ImagePlane, RegionMask};
use entangled_core::layers::{extract_foreground, mask_out, merge_layers, BlendConfig, PositionMask};
use entangled_core::manifest::DatasetSummary;
use entangled_core::metric::{
    combined_similarity, consistency, entangled_paired, entangled_paired_with, entangled_single,
    entangled_single_with, harmonic_combine, region_rmse, ConsistencySource, EntangledScore, MetricOptions,
    MetricWeights, DEFAULT_EPSILON,
};
use entangled_core::oracle::oracle_entangled;
use entangled_core::pipeline::{run_pipeline, BackendSuite, MockBackend, PipelineConfig, LOG_FILE};
use entangled_core::report::{eval_batch, write_with_sidecar, Aggregate, EvalConfig, EvalInput, EvalMode};
use entangled_core::synth;
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);
type Column = (&'static str, fn(&entangled_core::report::RecordScore) -> Option<f64>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn score_fields(s: &EntangledScore) -> Vec<(&'static str, f64)> {
    let c = &s.consistency;
    let mut out = vec![
        ("mu_inner", c.mu_inner),
        ("mu_outer", c.mu_outer),
        ("sigma_inner", c.sigma_inner),
        ("sigma_outer", c.sigma_outer),
        ("m", c.m),
        ("v", c.v),
        ("c", c.c),
        ("value", s.value),
    ];
    if let Some(sim) = s.similarity {
        out.extend([("s_inner", sim.s_inner), ("s_outer", sim.s_outer), ("s", sim.combined)]);
    }
    out
}

fn oracle_equivalence() -> Check {
    let mut r = synth::rng(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let channels = if r.gen_bool(0.5) { 3 } else { 1 };
        let (x, y, mask) = synth::random_instance(&mut r, 64, 64, channels);
        let w = synth::random_weights(&mut r);
        let fast = entangled_paired(&x, &y, &mask, &w).map_err(|e| format!("instance {i}: {e}"))?;
        let slow = oracle_entangled(&x, &y, &mask, &w).map_err(|e| format!("instance {i}: {e}"))?;
        ensure(fast.degenerate == slow.degenerate, || format!("instance {i}: degenerate flag differs"))?;
        for ((name, a), (_, b)) in score_fields(&fast).into_iter().zip(score_fields(&slow)) {
            let d = (a - b).abs();
            ensure(d.is_finite(), || format!("instance {i}: {name} not finite"))?;
            worst = worst.max(d);
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, || format!("max abs deviation {worst:e} > 1e-9"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:.1?}, limit 30 s"))?;
    Ok(format!("1000 instances, max abs deviation {worst:e}, {elapsed:.2?}"))
}

fn remark_limits() -> Check {
    let (w, h) = (16, 16);
    let mask = RegionMask::from_fn(w, h, |row, _| row < h / 2).unwrap();
    let original = ImagePlane::from_fn(w, h, 3, |row, col, _| if row < h / 2 { 0.0 } else { (col % 2) as f64 }).unwrap();
    let flipped = ImagePlane::from_fn(w, h, 3, |row, col, ch| {
        let v = original.pixel(row, col)[ch];
        if row < h / 2 {
            1.0 - v
        } else {
            v
        }
    })
    .unwrap();
    let max = entangled_paired(&original, &flipped, &mask, &MetricWeights::default())
        .map_err(|e| e.to_string())?
        .similarity
        .expect("paired score");
    ensure(max.s_inner == 1.0 && max.s_outer == 0.0, || format!("max fixture components {max:?}"))?;
    ensure(max.combined >= 1.0 - 2e-6, || format!("max case S = {}", max.combined))?;

    let outer_flipped = ImagePlane::from_fn(w, h, 3, |row, col, ch| {
        let v = original.pixel(row, col)[ch];
        if row < h / 2 {
            v
        } else {
            1.0 - v
        }
    })
    .unwrap();
    let min = entangled_paired(&original, &outer_flipped, &mask, &MetricWeights::default())
        .map_err(|e| e.to_string())?
        .similarity
        .expect("paired score");
    ensure(min.combined == 0.0, || format!("min case S = {}", min.combined))?;
    ensure(combined_similarity(1.0, 0.0, DEFAULT_EPSILON) >= 1.0 - 2e-6, || "closed-form max".into())?;
    ensure(combined_similarity(0.0, 1.0, DEFAULT_EPSILON) == 0.0, || "closed-form min".into())?;
    Ok(format!("max S = {:.9}, min S = {}", max.combined, min.combined))
}

fn weight_identities() -> Check {
    let mut r = synth::rng(3);
    let s_only = MetricWeights::new(1.0, 0.0).unwrap();
    let c_only = MetricWeights::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for i in 0..500 {
        let channels = if r.gen_bool(0.5) { 3 } else { 1 };
        let side = r.gen_range(4..=48);
        let (x, y, mask) = synth::random_instance(&mut r, side, side, channels);
        let a = entangled_paired(&x, &y, &mask, &s_only).map_err(|e| e.to_string())?;
        let b = entangled_paired(&x, &y, &mask, &c_only).map_err(|e| e.to_string())?;
        let single = entangled_single(&y, &mask, DEFAULT_EPSILON).map_err(|e| e.to_string())?;
        let s = a.similarity.expect("paired").combined;
        worst = worst.max((a.value - s).abs()).max((b.value - b.consistency.c).abs());
        ensure(single.value == b.consistency.c && single.value == b.value, || {
            format!("instance {i}: Entangled-S {} != C {}", single.value, b.consistency.c)
        })?;
    }
    ensure(worst <= 1e-12, || format!("max identity deviation {worst:e}"))?;
    Ok(format!("500 instances, max deviation {worst:e}, Entangled-S == C exactly"))
}

fn bounds() -> Check {
    let mut r = synth::rng(4);
    let upper = 1.0 + 1e-9;
    for i in 0..10_000 {
        let (w, h) = (r.gen_range(2..=20), r.gen_range(1..=20));
        let channels = [1, 3][r.gen_range(0..2)];
        let (x, y, mask) = synth::random_instance(&mut r, w, h, channels);
        let weights = synth::random_weights(&mut r);
        let opts = MetricOptions {
            consistency_source: if r.gen_bool(0.5) {
                ConsistencySource::Unlearned
            } else {
                ConsistencySource::Original
            },
            uniform_region_consistency: r.gen_bool(0.3),
            grayscale: r.gen_bool(0.3),
        };
        let paired = entangled_paired_with(&x, &y, &mask, &weights, &opts).map_err(|e| format!("instance {i}: {e}"))?;
        let single = entangled_single_with(&y, &mask, DEFAULT_EPSILON, &opts).map_err(|e| format!("instance {i}: {e}"))?;
        for s in [&paired, &single] {
            for (name, v) in score_fields(s) {
                ensure(v.is_finite() && (0.0..=upper).contains(&v), || {
                    format!("instance {i}: {name} = {v} outside [0, 1 + 1e-9]")
                })?;
            }
        }
    }
    let img = synth::noise_image(6, 5, 3, 1);
    for (mask, region) in [
        (RegionMask::filled(6, 5, false).unwrap(), Region::Inner),
        (RegionMask::filled(6, 5, true).unwrap(), Region::Outer),
    ] {
        let p = entangled_paired(&img, &img, &mask, &MetricWeights::default());
        let s = entangled_single(&img, &mask, DEFAULT_EPSILON);
        let o = oracle_entangled(&img, &img, &mask, &MetricWeights::default());
        for res in [p, s, o] {
            match res {
                Err(Error::DegenerateMask(got)) if got == region => {}
                other => return Err(format!("expected DegenerateMask({region}), got {other:?}")),
            }
        }
    }
    Ok("10000 instances in range; empty regions raise DegenerateMask".into())
}

fn monotonicity() -> Check {
    let mut min_step = f64::INFINITY;
    for i in 1..=9 {
        let s_inner = i as f64 / 10.0;
        let mut prev = combined_similarity(s_inner, 0.0, DEFAULT_EPSILON);
        for k in 1..=100 {
            let s_outer = k as f64 / 100.0;
            let cur = combined_similarity(s_inner, s_outer, DEFAULT_EPSILON);
            let step = prev - cur;
            ensure(step >= 1e-12, || {
                format!("s_inner {s_inner}: step to s_outer {s_outer} decreased by only {step:e}")
            })?;
            min_step = min_step.min(step);
            prev = cur;
        }
    }
    Ok(format!("9 x 100 steps strictly decreasing, smallest step {min_step:e}"))
}

#[allow(clippy::approx_constant)]
fn hand_fixtures() -> Check {
    let tol = 1e-5;
    let rmse = region_rmse(&[0.0, 0.5], &[1.0, 0.5]).map_err(|e| e.to_string())?;
    ensure((rmse - 0.70711).abs() <= tol, || format!("rmse {rmse}"))?;

    // Oracle route: inner pixels give the rmse, two outer pixels differ by 0.1.
    let x = ImagePlane::new(4, 1, 1, vec![0.0, 0.5, 0.3, 0.6]).unwrap();
    let y = ImagePlane::new(4, 1, 1, vec![1.0, 0.5, 0.4, 0.5]).unwrap();
    let mask = RegionMask::new(4, 1, vec![true, true, false, false]).unwrap();
    let s_only = MetricWeights::new(1.0, 0.0).unwrap();
    let o = oracle_entangled(&x, &y, &mask, &s_only).map_err(|e| e.to_string())?;
    let sim = o.similarity.expect("paired");
    ensure((sim.s_inner - 0.70711).abs() <= tol, || format!("oracle s_inner {}", sim.s_inner))?;
    ensure((sim.combined - 0.79198).abs() <= tol, || format!("oracle S {}", sim.combined))?;

    let c = consistency(&[0.2, 0.4], &[0.4, 0.6], DEFAULT_EPSILON).map_err(|e| e.to_string())?;
    let u = ImagePlane::new(4, 1, 1, vec![0.2, 0.4, 0.4, 0.6]).unwrap();
    let oc = oracle_entangled(&u, &u, &mask, &MetricWeights::new(0.0, 1.0).unwrap()).map_err(|e| e.to_string())?;
    ensure((c.c - 0.88231).abs() <= tol && (oc.value - 0.88231).abs() <= tol, || {
        format!("C engine {} oracle {}", c.c, oc.value)
    })?;
    ensure((c.m - 0.88235).abs() <= tol && (c.v - 0.99995).abs() <= tol, || format!("M {} V {}", c.m, c.v))?;

    let (e, _) = harmonic_combine(sim.combined, c.c, &MetricWeights::default());
    let (e_rounded, _) = harmonic_combine(0.79198, 0.88231, &MetricWeights::default());
    ensure((e - 0.83470).abs() <= tol && (e_rounded - 0.83470).abs() <= tol, || {
        format!("Entangled {e} (from rounded inputs {e_rounded})")
    })?;
    Ok(format!("rmse {rmse:.6}, C {:.6}, Entangled {e:.6}", c.c))
}

fn boundary_distance(mask: &RegionMask, row: usize, col: usize) -> f64 {
    let mut best = f64::INFINITY;
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if !mask.get(r, c) {
                let (dr, dc) = (r as f64 - row as f64, c as f64 - col as f64);
                best = best.min((dr * dr + dc * dc).sqrt());
            }
        }
    }
    best
}

fn layer_round_trip() -> Check {
    let mut r = synth::rng(7);
    let mut feathered_changes = 0usize;
    for i in 0..100 {
        let (w, h) = (r.gen_range(4..=40), r.gen_range(4..=40));
        let channels = [1, 3][r.gen_range(0..2)];
        let image = synth::noise_image(w, h, channels, r.gen());
        let mask = synth::random_mask(&mut r, w, h);
        let layer = extract_foreground(&image, &mask).map_err(|e| e.to_string())?;
        let background = mask_out(&image, &mask, r.gen_range(0.0..=1.0)).map_err(|e| e.to_string())?;
        let pos = PositionMask::from(mask.clone());
        let hard = merge_layers(&background, &layer, &pos, &BlendConfig::hard()).map_err(|e| e.to_string())?;
        ensure(hard == image, || format!("fixture {i}: hard merge is not pixel-exact"))?;

        let radius = r.gen_range(1..=4);
        let soft = merge_layers(&background, &layer, &pos, &BlendConfig::feathered(radius)).map_err(|e| e.to_string())?;
        for row in 0..h {
            for col in 0..w {
                if soft.pixel(row, col) != hard.pixel(row, col) {
                    feathered_changes += 1;
                    let d = boundary_distance(&mask, row, col) - 0.5;
                    ensure(mask.get(row, col) && d < radius as f64, || {
                        format!("fixture {i}: pixel ({row}, {col}) changed at boundary distance {d}, radius {radius}")
                    })?;
                }
            }
        }
    }
    Ok(format!("100 exact round trips; {feathered_changes} feathered pixels all within radius"))
}

fn pipeline_end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::write_pipeline_input(dir.path());
    let suite = || BackendSuite::uniform(MockBackend::from_file(&common::pipeline_script()).expect("script"));
    let cfg = PipelineConfig::default();
    let run = run_pipeline(dir.path(), &suite(), &cfg).map_err(|e| e.to_string())?;
    let rate = run.summary.rate_display();
    ensure(run.summary.selected == 9 && run.summary.images == 10 && rate == "90.00%", || {
        format!("summary {}/{} = {rate}", run.summary.selected, run.summary.images)
    })?;
    let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).map_err(|e| e.to_string())?;
    let golden = std::fs::read_to_string(common::fixtures().join("pipeline").join("golden_log.json"))
        .map_err(|e| e.to_string())?;
    ensure(log == golden, || "outcome log differs from golden file".into())?;
    let rerun = run_pipeline(dir.path(), &suite(), &cfg).map_err(|e| e.to_string())?;
    ensure(rerun.processed == 0, || format!("rerun processed {} records", rerun.processed))?;
    Ok(format!("9/10 = {rate}, log byte-identical to golden, rerun processed 0"))
}

fn report_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    synth::write_pairs_fixture(&dir.path().join("pairs"), 12, 40, 99).map_err(|e| e.to_string())?;
    let input = EvalInput::Pairs(dir.path().join("pairs"));
    let mut bodies = Vec::new();
    let mut report = None;
    for (run, workers) in [(1, 4), (2, 1)] {
        let cfg = EvalConfig {
            workers,
            mode: EvalMode::Both,
            ..EvalConfig::default()
        };
        let rep = eval_batch(&input, &cfg).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("run{run}.json"));
        write_with_sidecar(&path, &rep.to_json()).map_err(|e| e.to_string())?;
        bodies.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        report = Some(rep);
    }
    ensure(bodies[0] == bodies[1], || "report bodies differ between runs".into())?;
    let rep = report.expect("two runs");
    let mut worst = 0.0f64;
    let columns: [Column; 5] = [
        ("entangled_d", |r| r.entangled_d),
        ("entangled_s", |r| Some(r.entangled_s)),
        ("s", |r| r.components.s),
        ("m", |r| Some(r.components.m)),
        ("c", |r| Some(r.components.c)),
    ];
    for (name, get) in columns {
        let vals: Vec<f64> = rep.per_record.iter().filter_map(get).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 { sorted[k / 2] } else { (sorted[k / 2 - 1] + sorted[k / 2]) / 2.0 };
        let agg: &Aggregate = rep.aggregate.get(name).ok_or(format!("no aggregate for {name}"))?;
        ensure(agg.count == vals.len(), || format!("{name}: count mismatch"))?;
        worst = worst
            .max((agg.mean - mean).abs())
            .max((agg.median - median).abs())
            .max((agg.stddev - sd).abs());
    }
    ensure(worst <= 1e-12, || format!("aggregate deviation {worst:e}"))?;
    Ok(format!("{} byte-identical bytes, aggregate deviation {worst:e}", bodies[0].len()))
}

fn table_arithmetic() -> Check {
    let rows = [
        ("Bird", 11_788, 11_486, "97.44%"),
        ("Cat", 10_000, 9_555, "95.55%"),
        ("Dog", 20_258, 18_408, "90.87%"),
        ("ImageNet", 5_000, 4_377, "87.54%"),
    ];
    let mut shown = Vec::new();
    for (name, images, selected, expected) in rows {
        let s = DatasetSummary::from_counts(name, &format!("<{}>", name.to_lowercase()), images, selected);
        let got = s.rate_display();
        ensure(got == expected, || format!("{name}: {got} != {expected}"))?;
        shown.push(format!("{name} {got}"));
    }
    Ok(shown.join(", "))
}

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

fn link_records(src: &Path, dst: &Path, distinct: usize, count: usize) -> std::io::Result<()> {
    for sub in ["original", "unlearned", "mask"] {
        std::fs::create_dir_all(dst.join(sub))?;
        for i in 0..count {
            let from = src.join(sub).join(format!("rec_{:04}.png", i % distinct));
            let to = dst.join(sub).join(format!("rec_{i:04}.png"));
            if std::fs::hard_link(&from, &to).is_err() {
                std::fs::copy(&from, &to)?;
            }
        }
    }
    Ok(())
}

fn throughput() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let distinct = 8;
    synth::write_pairs_fixture(&dir.path().join("src"), distinct, 512, 5).map_err(|e| e.to_string())?;
    link_records(&dir.path().join("src"), &dir.path().join("small"), distinct, 100).map_err(|e| e.to_string())?;
    link_records(&dir.path().join("src"), &dir.path().join("full"), distinct, 1000).map_err(|e| e.to_string())?;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let run = |sub: &str, workers: usize| -> Result<Duration, String> {
        let cfg = EvalConfig {
            workers,
            mode: EvalMode::Paired,
            ..EvalConfig::default()
        };
        let start = Instant::now();
        let rep = eval_batch(&EvalInput::Pairs(dir.path().join(sub)), &cfg).map_err(|e| e.to_string())?;
        let t = start.elapsed();
        ensure(rep.skipped.is_empty(), || format!("{} records skipped", rep.skipped.len()))?;
        Ok(t)
    };

    run("small", 8)?;
    let rss_small = peak_rss_kib();
    let t8 = run("full", 8)?;
    let rss_full = peak_rss_kib();
    let t1 = run("full", 1)?;
    let speedup = t1.as_secs_f64() / t8.as_secs_f64();

    let mut failures = Vec::new();
    if t8 >= Duration::from_secs(60) {
        failures.push(format!("8 workers took {t8:.1?}, limit 60 s"));
    }
    if speedup < 3.0 {
        failures.push(format!("speedup 1->8 workers is {speedup:.2}x, need >= 3x"));
    }
    let memory = match (rss_small, rss_full) {
        (Some(a), Some(b)) => {
            let growth = b.saturating_sub(a);
            if growth > 64 * 1024 {
                failures.push(format!("peak RSS grew by {} MiB from 100 to 1000 records", growth / 1024));
            }
            format!("peak RSS {} MiB after 100 records, {} MiB after 1000", a / 1024, b / 1024)
        }
        _ => "peak RSS unavailable".to_string(),
    };
    let detail = format!(
        "{cores} logical core(s); 1000 records: 8 workers {t8:.2?}, 1 worker {t1:.2?}, speedup {speedup:.2}x; {memory}"
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle equivalence", oracle_equivalence),
        ("limit cases of combined similarity", remark_limits),
        ("weight-reduction identities", weight_identities),
        ("bounds and degenerate masks", bounds),
        ("monotonicity in outer change", monotonicity),
        ("hand-computed fixtures", hand_fixtures),
        ("layer round trip and feather containment", layer_round_trip),
        ("pipeline end to end with scripted mock", pipeline_end_to_end),
        ("report determinism and aggregates", report_determinism),
        ("dataset success-rate arithmetic", table_arithmetic),
        ("batch throughput and scaling", throughput),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("[PASS] {n:02} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {n:02} {name}: {detail}");
            }
        }
    }
    println!("acceptance: {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
