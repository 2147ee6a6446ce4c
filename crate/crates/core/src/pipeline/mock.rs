//! Deterministic in-process backend driven by an optional script.
//!
//! A script is JSON:
//!
//! ```json
//! {
//!   "name": "mock", "version": "1",
//!   "records": {
//!     "img_001": {
//!       "candidates": [
//!         {"id": "m0", "score": 0.9, "shape": {"rect": [0.25, 0.25, 0.75, 0.75]}},
//!         {"id": "m1", "score": 0.7, "shape": {"ellipse": [0.5, 0.5, 0.2, 0.3]}}
//!       ],
//!       "answers": ["no", "yes"],
//!       "inpaint": ["match-outer", {"consistency": 0.3}],
//!       "fail": ["inpaint"]
//!     }
//!   }
//! }
//! ```
//!
//! Shape coordinates are fractions of the image: `rect` is
//! `[top, left, bottom, right]`, `ellipse` is `[cy, cx, ry, rx]`. Unscripted
//! records (and omitted fields) fall back to [`MockRecord::default`]:
//! two candidates, a "yes" on the first one, and an outer-matched fill.
//! Validator answers are consumed per record in order; once exhausted the
//! answer is "no". Inpaint behaviours are indexed by pass; the last one
//! repeats.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::backend::{
    Answer, Backend, BackendInfo, CallContext, InpaintRequest, Inpainter, Scorer, Segmenter, Validator, Verdict,
};
use super::rle::Rle;
use crate::error::{Error, Result};
use crate::imaging::{ImagePlane, RegionMask};
use crate::layers::ForegroundLayer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Segment,
    Score,
    Validate,
    Inpaint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskShape {
    Rect([f64; 4]),
    Ellipse([f64; 4]),
    Full,
    Rle(Rle),
}

impl MaskShape {
    pub fn rasterize(&self, width: usize, height: usize) -> Result<RegionMask> {
        let (w, h) = (width as f64, height as f64);
        match self {
            MaskShape::Rect([top, left, bottom, right]) => RegionMask::from_fn(width, height, |r, c| {
                let (y, x) = ((r as f64 + 0.5) / h, (c as f64 + 0.5) / w);
                y >= *top && y < *bottom && x >= *left && x < *right
            }),
            MaskShape::Ellipse([cy, cx, ry, rx]) => RegionMask::from_fn(width, height, |r, c| {
                let (y, x) = ((r as f64 + 0.5) / h, (c as f64 + 0.5) / w);
                ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0
            }),
            MaskShape::Full => RegionMask::filled(width, height, true),
            MaskShape::Rle(rle) => {
                let m = rle.decode()?;
                if (m.width(), m.height()) != (width, height) {
                    return Err(Error::dims(
                        format!("{width}x{height}"),
                        format!("{}x{}", m.width(), m.height()),
                    ));
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockCandidate {
    pub id: String,
    pub score: f64,
    pub shape: MaskShape,
}

/// How the mock fills the masked region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InpaintBehavior {
    /// Copy outer pixels by stratified sampling; consistency lands near 1.
    MatchOuter,
    /// Outer samples scaled towards black so consistency lands near the
    /// given value.
    Consistency(f64),
    /// Flat fill.
    Constant(f64),
    /// Return the masked input unchanged.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRecord {
    #[serde(default = "default_candidates")]
    pub candidates: Vec<MockCandidate>,
    #[serde(default = "default_answers")]
    pub answers: Vec<Answer>,
    #[serde(default = "default_inpaint")]
    pub inpaint: Vec<InpaintBehavior>,
    #[serde(default)]
    pub fail: Vec<Endpoint>,
}

impl Default for MockRecord {
    fn default() -> Self {
        Self {
            candidates: default_candidates(),
            answers: default_answers(),
            inpaint: default_inpaint(),
            fail: Vec::new(),
        }
    }
}

fn default_candidates() -> Vec<MockCandidate> {
    vec![
        MockCandidate {
            id: "c0".into(),
            score: 0.8,
            shape: MaskShape::Ellipse([0.5, 0.5, 0.25, 0.25]),
        },
        MockCandidate {
            id: "c1".into(),
            score: 0.3,
            shape: MaskShape::Rect([0.0, 0.0, 1.0, 0.3]),
        },
    ]
}

fn default_answers() -> Vec<Answer> {
    vec![Answer::Yes]
}

fn default_inpaint() -> Vec<InpaintBehavior> {
    vec![InpaintBehavior::MatchOuter]
}

fn default_name() -> String {
    "mock".into()
}

fn default_version() -> String {
    "1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_version")]
    pub version: String,
    #[serde(default)]
    pub default: Option<MockRecord>,
    #[serde(default)]
    pub records: BTreeMap<String, MockRecord>,
}

impl Default for MockScript {
    fn default() -> Self {
        Self {
            name: default_name(),
            version: default_version(),
            default: None,
            records: BTreeMap::new(),
        }
    }
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("mock script {}: {e}", path.display())))
    }
}

/// Scripted backend for all four roles.
#[derive(Debug, Default)]
pub struct MockBackend {
    script: MockScript,
    /// Validator answers consumed so far, per record.
    cursor: Mutex<BTreeMap<String, usize>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            cursor: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(MockScript::load(path)?))
    }

    pub fn shared(script: MockScript) -> Arc<Self> {
        Arc::new(Self::new(script))
    }

    fn record(&self, id: &str) -> MockRecord {
        self.script
            .records
            .get(id)
            .or(self.script.default.as_ref())
            .cloned()
            .unwrap_or_default()
    }

    fn check(&self, rec: &MockRecord, endpoint: Endpoint) -> Result<()> {
        if rec.fail.contains(&endpoint) {
            return Err(Error::BackendUnavailable(format!(
                "{}: scripted {endpoint:?} failure",
                self.script.name
            )));
        }
        Ok(())
    }
}

impl Backend for MockBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: self.script.name.clone(),
            version: self.script.version.clone(),
        }
    }
}

impl Segmenter for MockBackend {
    fn segment(&self, ctx: CallContext<'_>, image: &ImagePlane) -> Result<Vec<(String, RegionMask)>> {
        let rec = self.record(ctx.record_id);
        self.check(&rec, Endpoint::Segment)?;
        rec.candidates
            .iter()
            .map(|c| Ok((c.id.clone(), c.shape.rasterize(image.width(), image.height())?)))
            .collect()
    }
}

impl Scorer for MockBackend {
    fn score(
        &self,
        ctx: CallContext<'_>,
        candidate_id: &str,
        _image: &ImagePlane,
        mask: &RegionMask,
        _text: &str,
    ) -> Result<f64> {
        let rec = self.record(ctx.record_id);
        self.check(&rec, Endpoint::Score)?;
        match rec.candidates.iter().find(|c| c.id == candidate_id) {
            Some(c) => Ok(c.score),
            // Unknown candidate: coverage fraction.
            None => Ok(mask.inner_count() as f64 / mask.bits().len() as f64),
        }
    }
}

impl Validator for MockBackend {
    fn validate(
        &self,
        ctx: CallContext<'_>,
        _foreground: &ForegroundLayer,
        category: &str,
        _question: &str,
    ) -> Result<Verdict> {
        let rec = self.record(ctx.record_id);
        self.check(&rec, Endpoint::Validate)?;
        let idx = {
            let mut cursor = self.cursor.lock().expect("cursor lock poisoned");
            let slot = cursor.entry(ctx.record_id.to_string()).or_insert(0);
            let idx = *slot;
            *slot += 1;
            idx
        };
        let answer = rec.answers.get(idx).copied().unwrap_or(Answer::No);
        let raw = match answer {
            Answer::Yes => format!("Yes, this is a {category}."),
            Answer::No => format!("No, this is not a {category}."),
        };
        Ok(Verdict { answer, raw })
    }
}

impl Inpainter for MockBackend {
    fn inpaint(&self, ctx: CallContext<'_>, req: InpaintRequest<'_>) -> Result<ImagePlane> {
        let rec = self.record(ctx.record_id);
        self.check(&rec, Endpoint::Inpaint)?;
        let behavior = rec
            .inpaint
            .get(req.pass.saturating_sub(1))
            .or(rec.inpaint.last())
            .cloned()
            .unwrap_or(InpaintBehavior::MatchOuter);
        fill(req.image, req.mask, &behavior)
    }
}

/// Applies a fill behaviour to the inner region of `image`.
pub fn fill(image: &ImagePlane, mask: &RegionMask, behavior: &InpaintBehavior) -> Result<ImagePlane> {
    crate::imaging::check_dims(image, mask)?;
    let scale = match behavior {
        InpaintBehavior::Identity => return Ok(image.clone()),
        InpaintBehavior::Constant(v) => return crate::layers::mask_out(image, mask, v.clamp(0.0, 1.0)),
        InpaintBehavior::MatchOuter => 1.0,
        InpaintBehavior::Consistency(target) => scale_for_consistency(*target),
    };
    let c = image.channels();
    let outer: Vec<usize> = (0..mask.bits().len()).filter(|&i| !mask.bits()[i]).collect();
    let inner: Vec<usize> = (0..mask.bits().len()).filter(|&i| mask.bits()[i]).collect();
    if outer.is_empty() {
        return Ok(image.clone());
    }
    let mut data = image.data().to_vec();
    let (ni, no) = (inner.len(), outer.len());
    for (j, &dst) in inner.iter().enumerate() {
        let src = outer[((2 * j + 1) * no / (2 * ni)).min(no - 1)];
        for k in 0..c {
            data[dst * c + k] = (image.data()[src * c + k] * scale).clamp(0.0, 1.0);
        }
    }
    ImagePlane::new(image.width(), image.height(), c, data)
}

/// Scaling `k` of outer samples such that mean and spread agreement are
/// both `2k / (1 + k^2)`, whose product is `target`.
fn scale_for_consistency(target: f64) -> f64 {
    let t = target.clamp(1e-6, 1.0);
    let m = t.sqrt();
    (1.0 - (1.0 - m * m).max(0.0).sqrt()) / m
}
