//! Inference backend interfaces.
//!
//! The pipeline needs four capabilities: segmentation into candidate masks,
//! text relevance scoring of a masked region, a yes/no category check on a
//! cropped foreground, and inpainting. Each is a trait so remote services,
//! the scripted mock, or anything else can stand behind it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::{ImagePlane, RegionMask};
use crate::layers::ForegroundLayer;

/// Name and version of a backend, recorded in run provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub version: String,
}

/// Per-call context. Carries the record id so scripted backends can key
/// their responses.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub record_id: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub answer: Answer,
    /// Free-form text returned by the validator, kept for the log.
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InpaintRole {
    /// First reconstruction of the masked region.
    Initial,
    /// Later passes run with a refined prompt.
    Refine,
}

impl InpaintRole {
    pub fn for_pass(pass: usize) -> Self {
        if pass <= 1 {
            InpaintRole::Initial
        } else {
            InpaintRole::Refine
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InpaintRequest<'a> {
    pub image: &'a ImagePlane,
    pub mask: &'a RegionMask,
    pub prompt: &'a str,
    /// 1-based pass number.
    pub pass: usize,
    pub role: InpaintRole,
}

/// Question sent alongside a cropped foreground.
pub fn validation_question(category: &str) -> String {
    format!("Is this a {category}?")
}

pub trait Backend: Send + Sync {
    fn info(&self) -> BackendInfo;
}

pub trait Segmenter: Backend {
    /// Candidate masks with stable ids.
    fn segment(&self, ctx: CallContext<'_>, image: &ImagePlane) -> Result<Vec<(String, RegionMask)>>;
}

pub trait Scorer: Backend {
    fn score(
        &self,
        ctx: CallContext<'_>,
        candidate_id: &str,
        image: &ImagePlane,
        mask: &RegionMask,
        text: &str,
    ) -> Result<f64>;
}

pub trait Validator: Backend {
    fn validate(
        &self,
        ctx: CallContext<'_>,
        foreground: &ForegroundLayer,
        category: &str,
        question: &str,
    ) -> Result<Verdict>;
}

pub trait Inpainter: Backend {
    fn inpaint(&self, ctx: CallContext<'_>, request: InpaintRequest<'_>) -> Result<ImagePlane>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub segmenter: BackendInfo,
    pub scorer: BackendInfo,
    pub validator: BackendInfo,
    pub inpainter: BackendInfo,
}

#[derive(Clone)]
pub struct BackendSuite {
    pub segmenter: Arc<dyn Segmenter>,
    pub scorer: Arc<dyn Scorer>,
    pub validator: Arc<dyn Validator>,
    pub inpainter: Arc<dyn Inpainter>,
}

impl BackendSuite {
    /// One object serving all four roles.
    pub fn uniform<B>(backend: B) -> Self
    where
        B: Segmenter + Scorer + Validator + Inpainter + 'static,
    {
        let b = Arc::new(backend);
        Self {
            segmenter: b.clone(),
            scorer: b.clone(),
            validator: b.clone(),
            inpainter: b,
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            segmenter: self.segmenter.info(),
            scorer: self.scorer.info(),
            validator: self.validator.info(),
            inpainter: self.inpainter.info(),
        }
    }
}

impl std::fmt::Debug for BackendSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendSuite")
            .field("provenance", &self.provenance())
            .finish()
    }
}
