//! Dataset construction: foreground extraction with a select-and-validate
//! loop, then background reconstruction gated by the single-image score.
//!
//! Per record:
//!
//! 1. segment the original into candidate masks and score each against the
//!    target text;
//! 2. walk candidates from the highest score down, cropping each and asking
//!    the validator whether it shows the target category, until one is
//!    confirmed;
//! 3. mask out the confirmed region and inpaint it; score the result with
//!    the single-image Entangled score;
//! 4. below the threshold, refine the prompt and inpaint again, up to the
//!    pass limit, keeping the best result.

pub mod backend;
#[cfg(feature = "http")]
pub mod http;
pub mod mock;
pub mod protocol;
pub mod rle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use backend::{
    Answer, Backend, BackendInfo, BackendSuite, CallContext, InpaintRequest, InpaintRole, Inpainter, Provenance,
    Scorer, Segmenter, Validator, Verdict,
};
pub use mock::{MockBackend, MockScript};

use crate::error::{Error, Result};
use crate::imaging::{load_image, ImagePlane, RegionMask};
use crate::layers::{extract_foreground, mask_out, ForegroundLayer};
use crate::manifest::{
    self, DatasetSummary, Manifest, ManifestEntry, RecordStatus, BACKGROUND_DIR, FOREGROUND_DIR, MASK_DIR,
    ORIGINAL_DIR, REASON_INCOMPLETE, REASON_UNREADABLE,
};
use crate::metric::{entangled_single_with, MetricOptions, DEFAULT_EPSILON};

pub const REASON_NO_CANDIDATES: &str = "no-candidates";
pub const REASON_EXHAUSTED: &str = "validation-exhausted";
pub const REASON_BACKEND: &str = "backend-error";
pub const REASON_PROCESSING: &str = "processing-error";
pub const FLAG_BELOW_THRESHOLD: &str = "below-threshold";
pub const FLAG_MANUAL_REVIEW: &str = "manual-review";

pub const LOG_FILE: &str = "pipeline_log.json";
pub const MANUAL_REVIEW_FILE: &str = "manual_review.json";
pub const LOG_SCHEMA: &str = "entangled-pipeline-log/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    /// Minimum single-image score for an inpainted background.
    pub entangled_threshold: f64,
    pub max_inpaint_passes: usize,
    /// `None` tries every candidate.
    pub max_candidates: Option<usize>,
    pub mask_dilation_px: usize,
    pub epsilon: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            entangled_threshold: 0.7,
            max_inpaint_passes: 2,
            max_candidates: None,
            mask_dilation_px: 0,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.entangled_threshold) {
            return Err(Error::Config(format!(
                "gate threshold {} outside [0, 1]",
                self.entangled_threshold
            )));
        }
        if self.max_inpaint_passes == 0 {
            return Err(Error::Config("at least one inpaint pass is required".into()));
        }
        if self.max_candidates == Some(0) {
            return Err(Error::Config("max candidates must be at least 1".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Rewrites the inpainting prompt after a low-scoring pass. Returning
/// `None` sends the record to the manual-review queue.
pub trait PromptRefiner: Send + Sync {
    fn refine(&self, prompt: &str, pass: usize, score: f64) -> Option<String>;
}

/// Appends a fixed suffix.
#[derive(Debug, Clone)]
pub struct SuffixRefiner(pub String);

impl SuffixRefiner {
    pub const DEFAULT_SUFFIX: &'static str = ", seamless background, consistent lighting and texture";
}

impl Default for SuffixRefiner {
    fn default() -> Self {
        Self(Self::DEFAULT_SUFFIX.to_string())
    }
}

impl PromptRefiner for SuffixRefiner {
    fn refine(&self, prompt: &str, _pass: usize, _score: f64) -> Option<String> {
        Some(format!("{prompt}{}", self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub source_id: String,
    pub score: f64,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: usize,
    pub role: InpaintRole,
    pub prompt: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub record_id: String,
    pub selected_candidate: Option<String>,
    pub attempts: Vec<Attempt>,
    pub gate_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub passes: Vec<PassRecord>,
    pub final_status: RecordStatus,
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl PipelineOutcome {
    fn new(record_id: &str) -> Self {
        Self {
            record_id: record_id.to_string(),
            selected_candidate: None,
            attempts: Vec::new(),
            gate_scores: Vec::new(),
            passes: Vec::new(),
            final_status: RecordStatus::Rejected,
            reason: None,
            flags: Vec::new(),
        }
    }

    fn reject(mut self, reason: &str) -> Self {
        self.final_status = RecordStatus::Rejected;
        self.reason = Some(reason.to_string());
        self
    }
}

/// A confirmed foreground.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub candidate_id: String,
    pub mask: RegionMask,
    pub layer: ForegroundLayer,
}

/// `"<bird>"` → `"bird"`.
pub fn target_category(prompt: &str) -> &str {
    let p = prompt.trim();
    p.strip_prefix('<').and_then(|s| s.strip_suffix('>')).unwrap_or(p).trim()
}

/// Candidate selection loop. Backend transport failures are returned as
/// errors; a "no" from the validator is an ordinary attempt.
pub fn extract_with_validation(
    record_id: &str,
    image: &ImagePlane,
    target: &str,
    backends: &BackendSuite,
    cfg: &GateConfig,
) -> Result<(Option<Extraction>, PipelineOutcome)> {
    if target.trim().is_empty() {
        return Err(Error::Config("target text is empty".into()));
    }
    let ctx = CallContext { record_id };
    let mut outcome = PipelineOutcome::new(record_id);

    let mut candidates = Vec::new();
    for (id, mask) in backends.segmenter.segment(ctx, image)? {
        if mask.dims() != image.dims() {
            return Err(Error::BackendUnavailable(format!(
                "candidate {id} is {} for a {} image",
                mask.dims(),
                image.dims()
            )));
        }
        let mask = mask.dilate(cfg.mask_dilation_px);
        // Nothing to crop, or nothing left to reconstruct from.
        if mask.inner_count() == 0 || mask.outer_count() == 0 {
            continue;
        }
        let score = backends.scorer.score(ctx, &id, image, &mask, target)?;
        if !score.is_finite() {
            return Err(Error::BackendUnavailable(format!("non-finite score for candidate {id}")));
        }
        candidates.push((id, mask, score));
    }
    if candidates.is_empty() {
        return Ok((None, outcome.reject(REASON_NO_CANDIDATES)));
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    let limit = cfg.max_candidates.unwrap_or(usize::MAX);

    let question = backend::validation_question(target);
    for (id, mask, score) in candidates.into_iter().take(limit) {
        let layer = extract_foreground(image, &mask)?;
        let verdict = backends.validator.validate(ctx, &layer, target, &question)?;
        outcome.attempts.push(Attempt {
            source_id: id.clone(),
            score,
            answer: verdict.answer,
        });
        if verdict.answer == Answer::Yes {
            outcome.final_status = RecordStatus::Selected;
            outcome.selected_candidate = Some(id.clone());
            return Ok((
                Some(Extraction {
                    candidate_id: id,
                    mask,
                    layer,
                }),
                outcome,
            ));
        }
    }
    Ok((None, outcome.reject(REASON_EXHAUSTED)))
}

/// Result of [`reconstruct_background`].
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub image: ImagePlane,
    pub passes: Vec<PassRecord>,
    pub accepted: bool,
    /// Prompt refinement was needed but no refiner was configured.
    pub manual_review: bool,
}

impl Reconstruction {
    pub fn gate_scores(&self) -> Vec<f64> {
        self.passes.iter().map(|p| p.score).collect()
    }
}

pub fn reconstruct_background(
    record_id: &str,
    image: &ImagePlane,
    mask: &RegionMask,
    prompt: &str,
    backends: &BackendSuite,
    cfg: &GateConfig,
    refiner: Option<&dyn PromptRefiner>,
) -> Result<Reconstruction> {
    crate::imaging::check_dims(image, mask)?;
    let ctx = CallContext { record_id };
    let masked = mask_out(image, mask, 0.0)?;
    let mut prompt = prompt.to_string();
    let mut passes = Vec::new();
    let mut best: Option<(f64, ImagePlane)> = None;
    let mut manual_review = false;

    for pass in 1..=cfg.max_inpaint_passes {
        let role = InpaintRole::for_pass(pass);
        let out = backends.inpainter.inpaint(
            ctx,
            InpaintRequest {
                image: &masked,
                mask,
                prompt: &prompt,
                pass,
                role,
            },
        )?;
        if out.dims() != image.dims() || out.channels() != image.channels() {
            return Err(Error::BackendUnavailable(format!(
                "inpainter returned {} ({} channels) for {} ({} channels)",
                out.dims(),
                out.channels(),
                image.dims(),
                image.channels()
            )));
        }
        let score = entangled_single_with(&out, mask, cfg.epsilon, &MetricOptions::default())?.value;
        passes.push(PassRecord {
            pass,
            role,
            prompt: prompt.clone(),
            score,
        });
        if score >= cfg.entangled_threshold {
            return Ok(Reconstruction {
                image: out,
                passes,
                accepted: true,
                manual_review,
            });
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, out));
        }
        if pass < cfg.max_inpaint_passes {
            match refiner.and_then(|r| r.refine(&prompt, pass, score)) {
                Some(p) => prompt = p,
                None => manual_review = true,
            }
        }
    }
    let (_, image) = best.expect("at least one pass ran");
    Ok(Reconstruction {
        image,
        passes,
        accepted: false,
        manual_review,
    })
}

/// Full-record driver shared by [`run_pipeline`] and tests.
pub fn process_image(
    record_id: &str,
    image: &ImagePlane,
    prompt: &str,
    backends: &BackendSuite,
    cfg: &PipelineConfig,
) -> Result<(PipelineOutcome, Option<(Extraction, Reconstruction)>)> {
    let target = target_category(prompt);
    let (extraction, mut outcome) = extract_with_validation(record_id, image, target, backends, &cfg.gate)?;
    let Some(extraction) = extraction else {
        return Ok((outcome, None));
    };
    let inpaint_prompt = cfg.inpaint_prompt.replace("{category}", target);
    let recon = reconstruct_background(
        record_id,
        image,
        &extraction.mask,
        &inpaint_prompt,
        backends,
        &cfg.gate,
        cfg.refiner.as_deref(),
    )?;
    outcome.gate_scores = recon.gate_scores();
    outcome.passes = recon.passes.clone();
    if !recon.accepted {
        outcome.flags.push(FLAG_BELOW_THRESHOLD.to_string());
    }
    if recon.manual_review {
        outcome.flags.push(FLAG_MANUAL_REVIEW.to_string());
    }
    Ok((outcome, Some((extraction, recon))))
}

#[derive(Clone)]
pub struct PipelineConfig {
    pub gate: GateConfig,
    /// `None` queues low-scoring records for manual prompt refinement.
    pub refiner: Option<Arc<dyn PromptRefiner>>,
    /// Inpainting prompt; `{category}` is replaced with the target.
    pub inpaint_prompt: String,
    pub workers: usize,
    /// Reprocess records that already have a status.
    pub force: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gate: GateConfig::default(),
            refiner: Some(Arc::new(SuffixRefiner::default())),
            inpaint_prompt: Self::DEFAULT_INPAINT_PROMPT.to_string(),
            workers: 1,
            force: false,
        }
    }
}

impl PipelineConfig {
    pub const DEFAULT_INPAINT_PROMPT: &'static str = "empty background without a {category}";
}

impl std::fmt::Debug for PipelineConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PipelineConfig")
            .field("gate", &self.gate)
            .field("refiner", &self.refiner.is_some())
            .field("inpaint_prompt", &self.inpaint_prompt)
            .field("workers", &self.workers)
            .field("force", &self.force)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogConfig {
    pub gate: GateConfig,
    pub inpaint_prompt: String,
    pub refiner: bool,
}

/// `pipeline_log.json`: every processed record's outcome, sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLog {
    pub schema: String,
    pub tool_version: String,
    pub provenance: Provenance,
    pub config: LogConfig,
    pub outcomes: Vec<PipelineOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub id: String,
    pub prompt: String,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub summary: DatasetSummary,
    /// Outcomes of records processed in this run, sorted by id.
    pub outcomes: Vec<PipelineOutcome>,
    pub processed: usize,
    pub backend_errors: usize,
}

/// Runs the procedure over every pending record under `root`.
///
/// Input layout is `manifest.json` plus `original/`. Outputs go to
/// `foreground/`, `background/` and `mask/`, with statuses written back to
/// the manifest and outcomes to `pipeline_log.json`. Records that already
/// have a status are skipped unless `cfg.force` is set. When nothing is
/// processed no file is touched.
pub fn run_pipeline(root: &Path, backends: &BackendSuite, cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.gate.validate()?;
    let mut manifest = Manifest::load(root)?;
    let originals = manifest::discover(&root.join(ORIGINAL_DIR))?;
    let log_path = root.join(LOG_FILE);
    let mut log_outcomes: BTreeMap<String, PipelineOutcome> = match std::fs::read_to_string(&log_path) {
        Ok(text) => {
            let log: OutcomeLog = serde_json::from_str(&text).map_err(|e| Error::MalformedManifest {
                path: log_path.clone(),
                reason: e.to_string(),
            })?;
            log.outcomes.into_iter().map(|o| (o.record_id.clone(), o)).collect()
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(e.into()),
    };

    for id in originals.keys() {
        if manifest.entry(id).is_none() {
            manifest.records.push(ManifestEntry::pending(id.clone()));
        }
    }
    manifest.records.sort_by(|a, b| a.id.cmp(&b.id));

    let todo: Vec<ManifestEntry> = manifest
        .records
        .iter()
        .filter(|e| cfg.force || e.status.is_none())
        .cloned()
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<(ManifestEntry, PipelineOutcome, bool)> = pool.install(|| {
        todo.par_iter()
            .map(|entry| {
                let prompt = entry.prompt.as_deref().unwrap_or(&manifest.prompt);
                process_record(root, entry, originals.get(&entry.id), prompt, backends, cfg)
            })
            .collect()
    });

    let processed = results.len();
    let backend_errors = results.iter().filter(|r| r.2).count();
    let mut outcomes = Vec::with_capacity(processed);
    for (entry, outcome, _) in results {
        let slot = manifest
            .records
            .iter_mut()
            .find(|e| e.id == entry.id)
            .expect("entry came from this manifest");
        *slot = entry;
        log_outcomes.insert(outcome.record_id.clone(), outcome.clone());
        outcomes.push(outcome);
    }

    if processed > 0 {
        manifest.save(root)?;
        let log = OutcomeLog {
            schema: LOG_SCHEMA.to_string(),
            tool_version: crate::TOOL_VERSION.to_string(),
            provenance: backends.provenance(),
            config: LogConfig {
                gate: cfg.gate,
                inpaint_prompt: cfg.inpaint_prompt.clone(),
                refiner: cfg.refiner.is_some(),
            },
            outcomes: log_outcomes.into_values().collect(),
        };
        write_json(&log_path, &log)?;
        let review: Vec<ReviewItem> = manifest
            .records
            .iter()
            .filter(|e| e.flags.iter().any(|f| f == FLAG_MANUAL_REVIEW || f == FLAG_BELOW_THRESHOLD))
            .map(|e| ReviewItem {
                id: e.id.clone(),
                prompt: e.prompt.clone().unwrap_or_else(|| manifest.prompt.clone()),
                flags: e.flags.clone(),
            })
            .collect();
        let review_path = root.join(MANUAL_REVIEW_FILE);
        if review.is_empty() {
            if review_path.exists() {
                std::fs::remove_file(&review_path)?;
            }
        } else {
            write_json(&review_path, &review)?;
        }
    }

    let selected = manifest
        .records
        .iter()
        .filter(|e| e.status == Some(RecordStatus::Selected))
        .count();
    Ok(RunSummary {
        summary: DatasetSummary::from_counts(&manifest.dataset, &manifest.prompt, manifest.records.len(), selected),
        outcomes,
        processed,
        backend_errors,
    })
}

fn process_record(
    root: &Path,
    entry: &ManifestEntry,
    original: Option<&PathBuf>,
    prompt: &str,
    backends: &BackendSuite,
    cfg: &PipelineConfig,
) -> (ManifestEntry, PipelineOutcome, bool) {
    let id = entry.id.as_str();
    let mut next = ManifestEntry {
        id: entry.id.clone(),
        status: Some(RecordStatus::Rejected),
        reason: None,
        fg_origin: None,
        prompt: entry.prompt.clone(),
        flags: Vec::new(),
    };
    let rejected = |mut next: ManifestEntry, outcome: PipelineOutcome, backend_error: bool| {
        next.reason = outcome.reason.clone();
        (next, outcome, backend_error)
    };

    let Some(path) = original else {
        return rejected(next, PipelineOutcome::new(id).reject(REASON_INCOMPLETE), false);
    };
    let image = match load_image(path, None) {
        Ok(img) => img.plane,
        Err(e) => {
            log::warn!("{id}: {e}");
            return rejected(next, PipelineOutcome::new(id).reject(REASON_UNREADABLE), false);
        }
    };
    let (outcome, products) = match process_image(id, &image, prompt, backends, cfg) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("{id}: {e}");
            let backend_error = matches!(e, Error::BackendUnavailable(_));
            let reason = if backend_error { REASON_BACKEND } else { REASON_PROCESSING };
            return rejected(next, PipelineOutcome::new(id).reject(reason), backend_error);
        }
    };
    let Some((extraction, recon)) = products else {
        return rejected(next, outcome, false);
    };

    let file = format!("{id}.png");
    let written = (|| -> Result<()> {
        extraction.layer.save_png(&root.join(FOREGROUND_DIR).join(&file))?;
        extraction.mask.save_png(&root.join(MASK_DIR).join(&file))?;
        recon.image.save_png(&root.join(BACKGROUND_DIR).join(&file))?;
        Ok(())
    })();
    if let Err(e) = written {
        log::warn!("{id}: cannot write outputs: {e}");
        let mut failed = outcome;
        failed.final_status = RecordStatus::Rejected;
        failed.reason = Some(REASON_UNREADABLE.to_string());
        return rejected(next, failed, false);
    }
    let (r, c) = extraction.layer.origin();
    next.status = Some(RecordStatus::Selected);
    next.fg_origin = Some([r, c]);
    next.flags = outcome.flags.clone();
    (next, outcome, false)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses a backend selector: `mock`, `mock:<script.json>` or an
/// `http://` / `https://` base URL.
pub fn backend_from_arg(selector: &str, timeout: std::time::Duration) -> Result<BackendSuite> {
    if selector == "mock" {
        return Ok(BackendSuite::uniform(MockBackend::default()));
    }
    if let Some(path) = selector.strip_prefix("mock:") {
        return Ok(BackendSuite::uniform(MockBackend::from_file(Path::new(path))?));
    }
    if selector.starts_with("http://") || selector.starts_with("https://") {
        #[cfg(feature = "http")]
        {
            return Ok(BackendSuite::uniform(http::HttpBackend::new(selector, timeout)));
        }
        #[cfg(not(feature = "http"))]
        {
            let _ = timeout;
            return Err(Error::Config("built without HTTP backend support".into()));
        }
    }
    Err(Error::Config(format!(
        "backend must be `mock`, `mock:<script>` or an http(s) URL, got `{selector}`"
    )))
}
