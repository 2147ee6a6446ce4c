//! Client side of the wire protocol.

use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::backend::{
    Backend, BackendInfo, CallContext, InpaintRequest, Inpainter, Scorer, Segmenter, Validator, Verdict,
};
use super::protocol::{
    self, ErrorResponse, InpaintResponse, InpaintWireRequest, ScoreRequest, ScoreResponse, SegmentRequest,
    SegmentResponse, ValidateRequest, ValidateResponse,
};
use super::rle::Rle;
use crate::error::{Error, Result};
use crate::imaging::{ImagePlane, RegionMask};
use crate::layers::ForegroundLayer;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Remote backend speaking the JSON protocol at `base_url`.
pub struct HttpBackend {
    base_url: String,
    agent: ureq::Agent,
    /// Last `backend`/`version` pair reported by the service.
    seen: Mutex<Option<BackendInfo>>,
}

impl HttpBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
            seen: Mutex::new(None),
        }
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, endpoint: &str, req: &Req) -> Result<Resp> {
        let url = format!("{}{endpoint}", self.base_url);
        let unavailable = |e: String| Error::BackendUnavailable(format!("{url}: {e}"));
        let mut resp = self
            .agent
            .post(&url)
            .send_json(req)
            .map_err(|e| unavailable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| unavailable(e.to_string()))?;
        if !status.is_success() {
            let detail = serde_json::from_str::<ErrorResponse>(&text)
                .map(|e| e.error)
                .unwrap_or(text);
            return Err(unavailable(format!("HTTP {}: {detail}", status.as_u16())));
        }
        serde_json::from_str(&text).map_err(|e| unavailable(format!("protocol violation: {e}")))
    }

    fn note(&self, backend: &str, version: &str) {
        *self.seen.lock().expect("lock poisoned") = Some(BackendInfo {
            name: backend.to_string(),
            version: version.to_string(),
        });
    }
}

impl Backend for HttpBackend {
    fn info(&self) -> BackendInfo {
        let seen = self.seen.lock().expect("lock poisoned").clone();
        match seen {
            Some(info) => BackendInfo {
                name: format!("{} @ {}", info.name, self.base_url),
                version: info.version,
            },
            None => BackendInfo {
                name: self.base_url.clone(),
                version: "unknown".into(),
            },
        }
    }
}

impl Segmenter for HttpBackend {
    fn segment(&self, ctx: CallContext<'_>, image: &ImagePlane) -> Result<Vec<(String, RegionMask)>> {
        let resp: SegmentResponse = self.call(
            "/segment",
            &SegmentRequest {
                record_id: ctx.record_id.to_string(),
                image: protocol::encode_image(image)?,
            },
        )?;
        self.note(&resp.backend, &resp.version);
        resp.masks
            .into_iter()
            .map(|m| {
                let mask = m.rle.decode()?;
                if mask.dims() != image.dims() {
                    return Err(Error::BackendUnavailable(format!(
                        "mask {} is {} for a {} image",
                        m.id,
                        mask.dims(),
                        image.dims()
                    )));
                }
                Ok((m.id, mask))
            })
            .collect()
    }
}

impl Scorer for HttpBackend {
    fn score(
        &self,
        ctx: CallContext<'_>,
        candidate_id: &str,
        image: &ImagePlane,
        mask: &RegionMask,
        text: &str,
    ) -> Result<f64> {
        let resp: ScoreResponse = self.call(
            "/score",
            &ScoreRequest {
                record_id: ctx.record_id.to_string(),
                candidate_id: candidate_id.to_string(),
                image: protocol::encode_image(image)?,
                mask: Rle::encode(mask),
                text: text.to_string(),
            },
        )?;
        self.note(&resp.backend, &resp.version);
        Ok(resp.score)
    }
}

impl Validator for HttpBackend {
    fn validate(
        &self,
        ctx: CallContext<'_>,
        foreground: &ForegroundLayer,
        category: &str,
        question: &str,
    ) -> Result<Verdict> {
        let resp: ValidateResponse = self.call(
            "/validate",
            &ValidateRequest {
                record_id: ctx.record_id.to_string(),
                image: protocol::encode_layer(foreground)?,
                category: category.to_string(),
                question: question.to_string(),
            },
        )?;
        self.note(&resp.backend, &resp.version);
        Ok(Verdict {
            answer: resp.answer,
            raw: resp.raw,
        })
    }
}

impl Inpainter for HttpBackend {
    fn inpaint(&self, ctx: CallContext<'_>, req: InpaintRequest<'_>) -> Result<ImagePlane> {
        let resp: InpaintResponse = self.call(
            "/inpaint",
            &InpaintWireRequest {
                record_id: ctx.record_id.to_string(),
                image: protocol::encode_image(req.image)?,
                mask: Rle::encode(req.mask),
                prompt: req.prompt.to_string(),
                pass: req.pass,
                role: req.role,
            },
        )?;
        self.note(&resp.backend, &resp.version);
        let out = protocol::decode_image(&resp.image)?;
        if out.dims() != req.image.dims() || out.channels() != req.image.channels() {
            return Err(Error::BackendUnavailable(format!(
                "inpainted image is {} for a {} input",
                out.dims(),
                req.image.dims()
            )));
        }
        Ok(out)
    }
}
