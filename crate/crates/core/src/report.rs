//! Batch evaluation and report files.
//!
//! The JSON report is canonical. Its body is a pure function of the inputs
//! and configuration; the generation time and the body digest live in a
//! `<report>.meta.json` sidecar. CSV files are lossy projections.
//!
//! Per-record CSV columns:
//! `id,entangled_d,entangled_s,s_inner,s_outer,s,m,v,c` (absent values are
//! empty). Sweep CSV: one row per dataset, one column per point label.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::{load_image, load_mask, Dims};
use crate::manifest::{discover, scan_manifest, Manifest, RecordStatus, MASK_DIR, ORIGINAL_DIR};
use crate::metric::{
    entangled_paired_with, entangled_single_with, harmonic_combine, ConsistencySource, EntangledScore, MetricOptions,
    MetricWeights,
};

pub const REPORT_SCHEMA: &str = "entangled-report/1";
pub const SWEEP_SCHEMA: &str = "entangled-sweep/1";
pub const UNLEARNED_DIR: &str = "unlearned";
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

pub const SKIP_MISSING_ORIGINAL: &str = "missing-original";
pub const SKIP_MISSING_UNLEARNED: &str = "missing-unlearned";
pub const SKIP_MISSING_MASK: &str = "missing-mask";
pub const SKIP_UNREADABLE: &str = "unreadable-file";
pub const SKIP_DIMS: &str = "dims-mismatch";
pub const SKIP_DEGENERATE: &str = "degenerate-mask";
pub const SKIP_NUMERICAL: &str = "numerical-error";
pub const SKIP_REJECTED: &str = "rejected";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Entangled-D, plus Entangled-S of the unlearned image.
    Paired,
    Single,
    /// Entangled-D where an original exists, Entangled-S always.
    #[default]
    Both,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paired" => Ok(Self::Paired),
            "single" => Ok(Self::Single),
            "both" => Ok(Self::Both),
            other => Err(Error::Config(format!("mode must be paired, single or both, got `{other}`"))),
        }
    }
}

/// Where the evaluated images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalInput {
    /// Dataset layout: `original/`, `background/` (the unlearned image), `mask/`.
    Manifest(PathBuf),
    /// `original/`, `unlearned/` and `mask/` under one root.
    Pairs(PathBuf),
    Dirs {
        original: Option<PathBuf>,
        unlearned: PathBuf,
        masks: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub weights: MetricWeights,
    pub mode: EvalMode,
    pub options: MetricOptions,
    pub mask_threshold: f64,
    /// Upper bound on parallel record evaluations; 0 means one per core.
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            weights: MetricWeights::default(),
            mode: EvalMode::default(),
            options: MetricOptions::default(),
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub mode: EvalMode,
    pub consistency_source: ConsistencySource,
    pub uniform_region_consistency: bool,
    pub grayscale: bool,
    pub mask_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s_inner: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s_outer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s: Option<f64>,
    pub m: f64,
    pub v: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub entangled_d: Option<f64>,
    pub entangled_s: f64,
    pub components: Components,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

/// Summary statistics of one metric over the scored records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Some(Self {
            count: values.len(),
            mean,
            median,
            stddev: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub tool_version: String,
    pub config: ReportConfig,
    /// Aggregator used for headline numbers; medians are reported too.
    pub headline: String,
    pub input_records: usize,
    pub per_record: Vec<RecordScore>,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub skipped: Vec<Skipped>,
}

/// Metric columns in report order.
pub const METRICS: [&str; 8] = ["entangled_d", "entangled_s", "s_inner", "s_outer", "s", "m", "v", "c"];

fn metric_value(r: &RecordScore, name: &str) -> Option<f64> {
    let c = &r.components;
    match name {
        "entangled_d" => r.entangled_d,
        "entangled_s" => Some(r.entangled_s),
        "s_inner" => c.s_inner,
        "s_outer" => c.s_outer,
        "s" => c.s,
        "m" => Some(c.m),
        "v" => Some(c.v),
        "c" => Some(c.c),
        _ => None,
    }
}

/// Aggregates of every metric present in at least one record.
pub fn aggregate(records: &[RecordScore]) -> BTreeMap<String, Aggregate> {
    METRICS
        .iter()
        .filter_map(|&name| {
            let vals: Vec<f64> = records.iter().filter_map(|r| metric_value(r, name)).collect();
            Aggregate::of(&vals).map(|a| (name.to_string(), a))
        })
        .collect()
}

/// One record to evaluate, resolved to file paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalJob {
    pub id: String,
    pub original: Option<PathBuf>,
    pub unlearned: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    /// Set when the record is known to be unusable before loading.
    pub pre_skip: Option<String>,
}

/// Resolves an input into one job per record id, sorted by id.
pub fn collect_jobs(input: &EvalInput) -> Result<Vec<EvalJob>> {
    let join = |o: BTreeMap<String, PathBuf>, u: BTreeMap<String, PathBuf>, m: BTreeMap<String, PathBuf>| {
        let ids: BTreeSet<String> = o.keys().chain(u.keys()).chain(m.keys()).cloned().collect();
        ids.into_iter()
            .map(|id| EvalJob {
                original: o.get(&id).cloned(),
                unlearned: u.get(&id).cloned(),
                mask: m.get(&id).cloned(),
                pre_skip: None,
                id,
            })
            .collect::<Vec<_>>()
    };
    let require_dir = |p: &Path| {
        if p.is_dir() {
            Ok(())
        } else {
            Err(Error::Config(format!("{} is not a directory", p.display())))
        }
    };
    match input {
        EvalInput::Manifest(root) => Ok(scan_manifest(root)?
            .into_iter()
            .map(|r| EvalJob {
                pre_skip: match (r.status, r.reason) {
                    (RecordStatus::Rejected, Some(reason)) => Some(format!("{SKIP_REJECTED}:{reason}")),
                    (RecordStatus::Rejected, None) => Some(SKIP_REJECTED.to_string()),
                    _ => None,
                },
                id: r.id,
                original: r.original,
                unlearned: r.background,
                mask: r.mask,
            })
            .collect()),
        EvalInput::Pairs(root) => {
            require_dir(root)?;
            Ok(join(
                discover(&root.join(ORIGINAL_DIR))?,
                discover(&root.join(UNLEARNED_DIR))?,
                discover(&root.join(MASK_DIR))?,
            ))
        }
        EvalInput::Dirs {
            original,
            unlearned,
            masks,
        } => {
            require_dir(unlearned)?;
            require_dir(masks)?;
            let o = match original {
                Some(dir) => {
                    require_dir(dir)?;
                    discover(dir)?
                }
                None => BTreeMap::new(),
            };
            Ok(join(o, discover(unlearned)?, discover(masks)?))
        }
    }
}

fn skip_reason(e: &Error) -> &'static str {
    match e {
        Error::DimensionMismatch { .. } | Error::LengthMismatch { .. } => SKIP_DIMS,
        Error::DegenerateMask(_) | Error::EmptyRegion => SKIP_DEGENERATE,
        Error::Numerical(_) => SKIP_NUMERICAL,
        _ => SKIP_UNREADABLE,
    }
}

/// Scores a single job; `Err` carries the skip reason.
pub fn evaluate_job(job: &EvalJob, cfg: &EvalConfig) -> std::result::Result<RecordScore, String> {
    if let Some(reason) = &job.pre_skip {
        return Err(reason.clone());
    }
    let unlearned_path = job.unlearned.as_ref().ok_or(SKIP_MISSING_UNLEARNED)?;
    let mask_path = job.mask.as_ref().ok_or(SKIP_MISSING_MASK)?;
    let want_paired = cfg.mode != EvalMode::Single;
    if cfg.mode == EvalMode::Paired && job.original.is_none() {
        return Err(SKIP_MISSING_ORIGINAL.into());
    }
    let fail = |e: Error| {
        log::warn!("{}: {e}", job.id);
        skip_reason(&e).to_string()
    };
    let mask = load_mask(mask_path, cfg.mask_threshold).map_err(fail)?;
    let dims: Option<Dims> = Some(mask.dims());
    let unlearned = load_image(unlearned_path, dims).map_err(fail)?.plane;
    let eps = cfg.weights.epsilon();
    let single = entangled_single_with(&unlearned, &mask, eps, &cfg.options).map_err(fail)?;
    let paired: Option<EntangledScore> = match (&job.original, want_paired) {
        (Some(path), true) => {
            let original = load_image(path, dims).map_err(fail)?.plane;
            Some(entangled_paired_with(&original, &unlearned, &mask, &cfg.weights, &cfg.options).map_err(fail)?)
        }
        _ => None,
    };
    let main = paired.as_ref().unwrap_or(&single);
    let sim = main.similarity;
    Ok(RecordScore {
        id: job.id.clone(),
        entangled_d: paired.map(|p| p.value),
        entangled_s: single.value,
        components: Components {
            s_inner: sim.map(|s| s.s_inner),
            s_outer: sim.map(|s| s.s_outer),
            s: sim.map(|s| s.combined),
            m: main.consistency.m,
            v: main.consistency.v,
            c: main.consistency.c,
        },
        degenerate: main.degenerate,
    })
}

/// Runs `f` on a pool of at most `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn report_config(cfg: &EvalConfig) -> ReportConfig {
    ReportConfig {
        alpha: cfg.weights.alpha(),
        beta: cfg.weights.beta(),
        epsilon: cfg.weights.epsilon(),
        mode: cfg.mode,
        consistency_source: cfg.options.consistency_source,
        uniform_region_consistency: cfg.options.uniform_region_consistency,
        grayscale: cfg.options.grayscale,
        mask_threshold: cfg.mask_threshold,
    }
}

pub fn eval_jobs(jobs: &[EvalJob], cfg: &EvalConfig) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&cfg.mask_threshold) {
        return Err(Error::Config(format!(
            "mask threshold must lie in [0, 1], got {}",
            cfg.mask_threshold
        )));
    }
    let results: Vec<_> = with_workers(cfg.workers, || {
        jobs.par_iter().map(|job| (job.id.clone(), evaluate_job(job, cfg))).collect()
    })?;
    let mut per_record = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(score) => per_record.push(score),
            Err(reason) => skipped.push(Skipped { id, reason }),
        }
    }
    per_record.sort_by(|a, b| a.id.cmp(&b.id));
    skipped.sort_by(|a, b| a.id.cmp(&b.id));
    if per_record.is_empty() {
        return Err(Error::NoEvaluableRecords { skipped: skipped.len() });
    }
    Ok(EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        tool_version: crate::TOOL_VERSION.to_string(),
        config: report_config(cfg),
        headline: "mean".to_string(),
        input_records: jobs.len(),
        aggregate: aggregate(&per_record),
        per_record,
        skipped,
    })
}

pub fn eval_batch(input: &EvalInput, cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.mode == EvalMode::Paired {
        if let EvalInput::Dirs { original: None, .. } = input {
            return Err(Error::Config("paired mode requires an originals directory".into()));
        }
    }
    eval_jobs(&collect_jobs(input)?, cfg)
}

impl EvalReport {
    /// Canonical JSON body with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,entangled_d,entangled_s,s_inner,s_outer,s,m,v,c\n");
        for r in &self.per_record {
            let cells: Vec<String> = METRICS
                .iter()
                .map(|m| metric_value(r, m).map(|v| v.to_string()).unwrap_or_default())
                .collect();
            let _ = writeln!(out, "{},{}", csv_field(&r.id), cells.join(","));
        }
        out
    }

    pub fn entangled_s_values(&self) -> Vec<f64> {
        self.per_record.iter().map(|r| r.entangled_s).collect()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub generated_unix: u64,
    pub body_sha256: String,
    pub tool_version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sidecar_path(report: &Path) -> PathBuf {
    let mut name = report.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    report.with_file_name(name)
}

/// Writes `body` to `path` and its sidecar next to it.
pub fn write_with_sidecar(path: &Path, body: &str) -> Result<Sidecar> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, body)?;
    let meta = Sidecar {
        generated_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        body_sha256: sha256_hex(body.as_bytes()),
        tool_version: crate::TOOL_VERSION.to_string(),
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(sidecar_path(path), text)?;
    Ok(meta)
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    /// Mean Entangled per dataset.
    pub means: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: String,
    pub tool_version: String,
    pub axis_name: String,
    pub config: ReportConfig,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Rows are datasets, columns are point labels, values to four decimals.
    pub fn to_csv(&self) -> String {
        let datasets: BTreeSet<&str> = self
            .points
            .iter()
            .flat_map(|p| p.means.keys().map(String::as_str))
            .collect();
        let mut out = String::from("dataset");
        for p in &self.points {
            out.push(',');
            out.push_str(&csv_field(&format!("{}={}", self.axis_name, p.label)));
        }
        out.push('\n');
        for d in datasets {
            out.push_str(&csv_field(d));
            for p in &self.points {
                out.push(',');
                if let Some(v) = p.means.get(d) {
                    let _ = write!(out, "{v:.4}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A reference dataset: originals and masks keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReference {
    pub dataset: String,
    pub root: PathBuf,
}

impl SweepReference {
    /// Reads the dataset name from the manifest at `root`.
    pub fn from_manifest(root: &Path) -> Result<Self> {
        Ok(Self {
            dataset: Manifest::load(root)?.dataset,
            root: root.to_path_buf(),
        })
    }
}

/// A labelled image set. Holds one `<dataset>/` subdirectory per reference
/// dataset, or the images directly when there is a single reference.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSet {
    pub label: String,
    pub dir: PathBuf,
}

fn variant_images(variant: &VariantSet, reference: &SweepReference, single: bool) -> Result<BTreeMap<String, PathBuf>> {
    let nested = variant.dir.join(&reference.dataset);
    if nested.is_dir() {
        discover(&nested)
    } else if single {
        discover(&variant.dir)
    } else {
        Err(Error::Alignment {
            label: variant.label.clone(),
            reason: format!("no {} subdirectory", reference.dataset),
        })
    }
}

/// Paired Entangled of every variant set against the references.
pub fn sweep(
    axis_name: &str,
    variants: &[VariantSet],
    references: &[SweepReference],
    cfg: &EvalConfig,
) -> Result<SweepReport> {
    let mut labels = BTreeSet::new();
    for v in variants {
        if !labels.insert(v.label.as_str()) {
            return Err(Error::Config(format!("duplicate sweep label {}", v.label)));
        }
    }
    if variants.is_empty() || references.is_empty() {
        return Err(Error::Config("sweep needs at least one variant and one reference".into()));
    }
    let paired = EvalConfig {
        mode: EvalMode::Paired,
        ..cfg.clone()
    };
    let single = references.len() == 1;
    let mut points = Vec::new();
    for v in variants {
        let mut means = BTreeMap::new();
        let mut counts = BTreeMap::new();
        for r in references {
            let originals = discover(&r.root.join(ORIGINAL_DIR))?;
            let masks = discover(&r.root.join(MASK_DIR))?;
            let images = variant_images(v, r, single)?;
            let expected: BTreeSet<&String> = originals.keys().filter(|k| masks.contains_key(*k)).collect();
            let found: BTreeSet<&String> = images.keys().collect();
            if expected != found {
                let missing: Vec<&str> = expected.difference(&found).map(|s| s.as_str()).collect();
                let extra: Vec<&str> = found.difference(&expected).map(|s| s.as_str()).collect();
                return Err(Error::Alignment {
                    label: v.label.clone(),
                    reason: format!(
                        "dataset {}: missing [{}], unexpected [{}]",
                        r.dataset,
                        missing.join(", "),
                        extra.join(", ")
                    ),
                });
            }
            let jobs: Vec<EvalJob> = images
                .iter()
                .map(|(id, path)| EvalJob {
                    id: id.clone(),
                    original: originals.get(id).cloned(),
                    unlearned: Some(path.clone()),
                    mask: masks.get(id).cloned(),
                    pre_skip: None,
                })
                .collect();
            let report = eval_jobs(&jobs, &paired)?;
            let d = &report.aggregate["entangled_d"];
            means.insert(r.dataset.clone(), d.mean);
            counts.insert(r.dataset.clone(), d.count);
        }
        points.push(SweepPoint {
            label: v.label.clone(),
            means,
            counts,
        });
    }
    Ok(SweepReport {
        schema: SWEEP_SCHEMA.to_string(),
        tool_version: crate::TOOL_VERSION.to_string(),
        axis_name: axis_name.to_string(),
        config: report_config(&paired),
        points,
    })
}

/// Re-weights the paired scores of `report` for each alpha, without
/// reloading images. Records lacking Entangled-D are ignored.
pub fn alpha_sweep(report: &EvalReport, dataset: &str, alphas: &[f64]) -> Result<SweepReport> {
    let mut points = Vec::new();
    let mut labels = BTreeSet::new();
    for &a in alphas {
        let label = a.to_string();
        if !labels.insert(label.clone()) {
            return Err(Error::Config(format!("duplicate alpha {a}")));
        }
        let w = MetricWeights::with_epsilon(a, 1.0 - a, report.config.epsilon)?;
        let vals: Vec<f64> = report
            .per_record
            .iter()
            .filter_map(|r| r.components.s.map(|s| harmonic_combine(s, r.components.c, &w).0))
            .collect();
        let agg = Aggregate::of(&vals).ok_or(Error::NoEvaluableRecords {
            skipped: report.per_record.len(),
        })?;
        points.push(SweepPoint {
            label,
            means: BTreeMap::from([(dataset.to_string(), agg.mean)]),
            counts: BTreeMap::from([(dataset.to_string(), agg.count)]),
        });
    }
    Ok(SweepReport {
        schema: SWEEP_SCHEMA.to_string(),
        tool_version: crate::TOOL_VERSION.to_string(),
        axis_name: "alpha".to_string(),
        config: report.config,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{ImagePlane, RegionMask};
    use crate::oracle::oracle_entangled;
    use crate::synth;

    fn cfg(mode: EvalMode) -> EvalConfig {
        EvalConfig {
            mode,
            workers: 2,
            ..EvalConfig::default()
        }
    }

    #[test]
    fn aggregate_basics() {
        let a = Aggregate::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.mean, 2.5);
        assert_eq!(a.median, 2.5);
        assert!((a.stddev - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(Aggregate::of(&[3.0, 1.0, 2.0]).unwrap().median, 2.0);
        assert!(Aggregate::of(&[]).is_none());
    }

    #[test]
    fn pairs_match_oracle() {
        let dir = tempfile::tempdir().unwrap();
        synth::write_pairs_fixture(dir.path(), 4, 24, 11).unwrap();
        let report = eval_batch(&EvalInput::Pairs(dir.path().into()), &cfg(EvalMode::Both)).unwrap();
        assert_eq!(report.per_record.len(), 4);
        for r in &report.per_record {
            let load = |sub: &str| {
                load_image(&dir.path().join(sub).join(format!("{}.png", r.id)), None)
                    .unwrap()
                    .plane
            };
            let mask = load_mask(&dir.path().join("mask").join(format!("{}.png", r.id)), 0.5).unwrap();
            let o = oracle_entangled(&load("original"), &load("unlearned"), &mask, &MetricWeights::default()).unwrap();
            assert!((r.entangled_d.unwrap() - o.value).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_original_in_both_mode() {
        let dir = tempfile::tempdir().unwrap();
        synth::write_pairs_fixture(dir.path(), 1, 16, 3).unwrap();
        std::fs::remove_dir_all(dir.path().join("original")).unwrap();
        let r = eval_batch(&EvalInput::Pairs(dir.path().into()), &cfg(EvalMode::Both)).unwrap();
        assert!(r.per_record[0].entangled_d.is_none());
        assert!(r.per_record[0].entangled_s.is_finite());
        let e = eval_batch(&EvalInput::Pairs(dir.path().into()), &cfg(EvalMode::Paired)).unwrap_err();
        assert!(matches!(e, Error::NoEvaluableRecords { skipped: 1 }));
    }

    #[test]
    fn all_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        for id in ["a", "b"] {
            ImagePlane::filled(8, 8, 3, 0.4)
                .unwrap()
                .save_png(&dir.path().join("unlearned").join(format!("{id}.png")))
                .unwrap();
            RegionMask::filled(8, 8, true)
                .unwrap()
                .save_png(&dir.path().join("mask").join(format!("{id}.png")))
                .unwrap();
        }
        let e = eval_batch(&EvalInput::Pairs(dir.path().into()), &cfg(EvalMode::Single)).unwrap_err();
        assert!(matches!(e, Error::NoEvaluableRecords { skipped: 2 }));
    }

    #[test]
    fn deterministic_body_and_accounting() {
        let dir = tempfile::tempdir().unwrap();
        synth::write_pairs_fixture(dir.path(), 5, 16, 8).unwrap();
        std::fs::remove_file(dir.path().join("mask/rec_0002.png")).unwrap();
        let input = EvalInput::Pairs(dir.path().into());
        let a = eval_batch(&input, &cfg(EvalMode::Both)).unwrap();
        let b = eval_batch(&input, &EvalConfig { workers: 1, ..cfg(EvalMode::Both) }).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.per_record.len() + a.skipped.len(), a.input_records);
        assert_eq!(a.skipped, vec![Skipped { id: "rec_0002".into(), reason: SKIP_MISSING_MASK.into() }]);
        assert_eq!(aggregate(&a.per_record), a.aggregate);
        let csv = a.to_csv();
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn sidecar_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let meta = write_with_sidecar(&p, "{}\n").unwrap();
        assert_eq!(meta.body_sha256, sha256_hex(b"{}\n"));
        assert!(dir.path().join("r.json.meta.json").is_file());
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    fn sweep_fixture(root: &Path) -> (SweepReference, Vec<VariantSet>) {
        let reference = root.join("ref");
        let mut variants = Vec::new();
        for (label, removal) in [("A", 0.3), ("B", 0.9)] {
            let vdir = root.join(label);
            for i in 0..3 {
                let s = synth::scene(20, 20, 3, 40 + i);
                let id = format!("r{i}");
                s.original.save_png(&reference.join("original").join(format!("{id}.png"))).unwrap();
                s.mask.save_png(&reference.join("mask").join(format!("{id}.png"))).unwrap();
                synth::unlearned(&s, removal, 0.0, 1)
                    .save_png(&vdir.join(format!("{id}.png")))
                    .unwrap();
            }
            variants.push(VariantSet {
                label: label.into(),
                dir: vdir,
            });
        }
        Manifest::new("cat", "a cat").save(&reference).unwrap();
        (SweepReference::from_manifest(&reference).unwrap(), variants)
    }

    #[test]
    fn stronger_removal_sweeps_higher() {
        let dir = tempfile::tempdir().unwrap();
        let (r, v) = sweep_fixture(dir.path());
        let s = sweep("variant", &v, &[r], &cfg(EvalMode::Paired)).unwrap();
        assert!(s.points[1].means["cat"] > s.points[0].means["cat"]);
        let csv = s.to_csv();
        assert!(csv.starts_with("dataset,variant=A,variant=B\ncat,"));
    }

    #[test]
    fn misaligned_variant() {
        let dir = tempfile::tempdir().unwrap();
        let (r, v) = sweep_fixture(dir.path());
        std::fs::remove_file(v[0].dir.join("r1.png")).unwrap();
        let e = sweep("variant", &v, &[r], &cfg(EvalMode::Paired)).unwrap_err();
        assert!(matches!(e, Error::Alignment { ref label, .. } if label == "A"));
    }

    #[test]
    fn alpha_sweep_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        synth::write_pairs_fixture(dir.path(), 3, 16, 2).unwrap();
        let report = eval_batch(&EvalInput::Pairs(dir.path().into()), &cfg(EvalMode::Paired)).unwrap();
        let s = alpha_sweep(&report, "d", &[0.0, 1.0]).unwrap();
        assert!((s.points[0].means["d"] - report.aggregate["c"].mean).abs() < 1e-12);
        assert!((s.points[1].means["d"] - report.aggregate["s"].mean).abs() < 1e-12);
    }
}
