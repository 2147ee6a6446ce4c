//! On-disk dataset layout.
//!
//! ```text
//! root/
//!   manifest.json     { dataset, prompt, records: [{id, status?, reason?, fg_origin?, prompt?, flags?}] }
//!   original/<id>.png
//!   background/<id>.png
//!   foreground/<id>.png   (optional, RGBA)
//!   mask/<id>.png         (single channel)
//! ```
//!
//! Records are joined by file stem. Rejected records stay in the manifest
//! with a reason so success rates can be recomputed later.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ORIGINAL_DIR: &str = "original";
pub const BACKGROUND_DIR: &str = "background";
pub const FOREGROUND_DIR: &str = "foreground";
pub const MASK_DIR: &str = "mask";

pub const REASON_INCOMPLETE: &str = "incomplete-record";
pub const REASON_DIMS: &str = "dims-mismatch";
pub const REASON_UNREADABLE: &str = "unreadable-file";

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Selected,
    Rejected,
}

impl std::fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordStatus::Selected => f.write_str("selected"),
            RecordStatus::Rejected => f.write_str("rejected"),
        }
    }
}

/// One entry of `manifest.json`. A missing status means "not processed yet".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<RecordStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fg_origin: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ManifestEntry {
    pub fn pending(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            status: None,
            reason: None,
            fg_origin: None,
            prompt: None,
            flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dataset: String,
    pub prompt: String,
    #[serde(default)]
    pub records: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(dataset: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            dataset: dataset.into(),
            prompt: prompt.into(),
            records: Vec::new(),
        }
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingManifest(root.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        let malformed = |reason: String| Error::MalformedManifest {
            path: path.clone(),
            reason,
        };
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
        let problems = manifest.problems();
        if !problems.is_empty() {
            return Err(malformed(problems.join("; ")));
        }
        Ok(manifest)
    }

    /// Structural problems that make the manifest unusable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dataset.trim().is_empty() {
            out.push("dataset name is empty".to_string());
        }
        if self.prompt.trim().is_empty() {
            out.push("prompt is empty".to_string());
        }
        let mut seen = BTreeSet::new();
        for e in &self.records {
            if e.id.is_empty() || e.id.contains(['/', '\\']) {
                out.push(format!("record id {:?} is not a file stem", e.id));
            }
            if !seen.insert(e.id.as_str()) {
                out.push(format!("duplicate record id {}", e.id));
            }
            if e.status == Some(RecordStatus::Rejected) && e.reason.as_deref().is_none_or(str::is_empty) {
                out.push(format!("record {} is rejected without a reason", e.id));
            }
            if e.prompt.as_deref().is_some_and(|p| p.trim().is_empty()) {
                out.push(format!("record {} has an empty prompt override", e.id));
            }
        }
        out
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.records.iter().find(|e| e.id == id)
    }

    /// Writes pretty JSON with records sorted by id.
    pub fn save(&self, root: &Path) -> Result<()> {
        let mut sorted = self.clone();
        sorted.records.sort_by(|a, b| a.id.cmp(&b.id));
        std::fs::create_dir_all(root)?;
        let mut text = serde_json::to_string_pretty(&sorted)?;
        text.push('\n');
        std::fs::write(root.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    /// Manifest describing `records`; per-record prompts equal to the
    /// dataset prompt are not repeated.
    pub fn from_records(dataset: &str, prompt: &str, records: &[ForgetMeRecord]) -> Self {
        let mut m = Manifest::new(dataset, prompt);
        m.records = records
            .iter()
            .map(|r| ManifestEntry {
                id: r.id.clone(),
                status: Some(r.status),
                reason: r.reason.clone(),
                fg_origin: r.fg_origin.map(|(a, b)| [a, b]),
                prompt: (r.prompt != prompt).then(|| r.prompt.clone()),
                flags: Vec::new(),
            })
            .collect();
        m
    }
}

/// A dataset unit: original, background, foreground and mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgetMeRecord {
    pub id: String,
    pub original: Option<PathBuf>,
    pub background: Option<PathBuf>,
    pub foreground: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub prompt: String,
    pub status: RecordStatus,
    pub reason: Option<String>,
    pub fg_origin: Option<(usize, usize)>,
}

/// Files per stem found in one layout directory.
pub fn discover(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e.into()),
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    for p in paths {
        if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
            out.entry(stem.to_string()).or_insert(p);
        }
    }
    Ok(out)
}

/// Joins the layout directories with the manifest and classifies every
/// record as selected or rejected.
pub fn scan_manifest(root: &Path) -> Result<Vec<ForgetMeRecord>> {
    let manifest = Manifest::load(root)?;
    let original = discover(&root.join(ORIGINAL_DIR))?;
    let background = discover(&root.join(BACKGROUND_DIR))?;
    let foreground = discover(&root.join(FOREGROUND_DIR))?;
    let mask = discover(&root.join(MASK_DIR))?;

    let mut ids: BTreeSet<&str> = manifest.records.iter().map(|e| e.id.as_str()).collect();
    for m in [&original, &background, &foreground, &mask] {
        ids.extend(m.keys().map(String::as_str));
    }

    let records = ids
        .into_par_iter()
        .map(|id| {
            let entry = manifest.entry(id);
            let mut rec = ForgetMeRecord {
                id: id.to_string(),
                original: original.get(id).cloned(),
                background: background.get(id).cloned(),
                foreground: foreground.get(id).cloned(),
                mask: mask.get(id).cloned(),
                prompt: entry
                    .and_then(|e| e.prompt.clone())
                    .unwrap_or_else(|| manifest.prompt.clone()),
                status: RecordStatus::Selected,
                reason: None,
                fg_origin: entry.and_then(|e| e.fg_origin).map(|[r, c]| (r, c)),
            };
            if let Some(e) = entry.filter(|e| e.status == Some(RecordStatus::Rejected)) {
                rec.status = RecordStatus::Rejected;
                rec.reason = e.reason.clone();
            } else if let Some(reason) = completeness(&rec) {
                rec.status = RecordStatus::Rejected;
                rec.reason = Some(reason.to_string());
            }
            rec
        })
        .collect();
    Ok(records)
}

fn completeness(rec: &ForgetMeRecord) -> Option<&'static str> {
    let (Some(o), Some(b), Some(m)) = (&rec.original, &rec.background, &rec.mask) else {
        return Some(REASON_INCOMPLETE);
    };
    let mut dims = Vec::with_capacity(3);
    for p in [o, b, m] {
        match image::image_dimensions(p) {
            Ok(d) => dims.push(d),
            Err(_) => return Some(REASON_UNREADABLE),
        }
    }
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Some(REASON_DIMS);
    }
    None
}

/// Success-rate accounting for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub prompt: String,
    pub images: usize,
    pub selected: usize,
    /// Percentage, unrounded; `None` for an empty dataset.
    pub success_rate: Option<f64>,
}

impl DatasetSummary {
    pub fn from_counts(dataset: &str, prompt: &str, images: usize, selected: usize) -> Self {
        assert!(selected <= images, "selected count exceeds image count");
        Self {
            dataset: dataset.to_string(),
            prompt: prompt.to_string(),
            images,
            selected,
            success_rate: (images > 0).then(|| 100.0 * selected as f64 / images as f64),
        }
    }

    /// Rate in hundredths of a percent, rounded half up.
    pub fn rate_basis_points(&self) -> Option<u64> {
        if self.images == 0 {
            return None;
        }
        let (s, n) = (self.selected as u128, self.images as u128);
        Some(((s * 20_000 + n) / (2 * n)) as u64)
    }

    /// `"97.44%"`, or `"n/a"` for an empty dataset.
    pub fn rate_display(&self) -> String {
        match self.rate_basis_points() {
            Some(bp) => format!("{}.{:02}%", bp / 100, bp % 100),
            None => "n/a".to_string(),
        }
    }
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.dataset,
            self.prompt,
            self.images,
            self.selected,
            self.rate_display()
        )
    }
}

pub fn summarize(records: &[ForgetMeRecord], dataset_name: &str) -> DatasetSummary {
    let selected = records.iter().filter(|r| r.status == RecordStatus::Selected).count();
    let mut prompts: BTreeSet<&str> = records.iter().map(|r| r.prompt.as_str()).collect();
    let prompt = match prompts.len() {
        0 => "",
        1 => prompts.pop_first().unwrap_or_default(),
        _ => "mixed",
    };
    DatasetSummary::from_counts(dataset_name, prompt, records.len(), selected)
}
