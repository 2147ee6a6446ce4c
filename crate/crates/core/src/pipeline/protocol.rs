//! JSON-over-HTTP wire protocol for remote backends.
//!
//! | endpoint    | request                                               | response                    |
//! |-------------|-------------------------------------------------------|-----------------------------|
//! | `/segment`  | `{record_id, image}`                                  | `{version, backend, masks: [{id, rle}]}` |
//! | `/score`    | `{record_id, candidate_id, image, mask, text}`        | `{version, backend, score}` |
//! | `/validate` | `{record_id, image, category, question}`              | `{version, backend, answer: "yes"\|"no", raw}` |
//! | `/inpaint`  | `{record_id, image, mask, prompt, pass, role}`        | `{version, backend, image}` |
//!
//! Images are base64-encoded PNG; masks use [`Rle`]. Failures are reported
//! with a non-2xx status and `{error, version}`.

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::backend::{Answer, BackendSuite, CallContext, InpaintRequest, InpaintRole, Verdict};
use super::rle::Rle;
use crate::error::{Error, Result};
use crate::imaging::ImagePlane;
use crate::layers::ForegroundLayer;

pub const PROTOCOL_VERSION: &str = "1";

pub const ENDPOINTS: [&str; 4] = ["/segment", "/score", "/validate", "/inpaint"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub record_id: String,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMask {
    pub id: String,
    pub rle: Rle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub version: String,
    pub backend: String,
    pub masks: Vec<WireMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub record_id: String,
    pub candidate_id: String,
    pub image: String,
    pub mask: Rle,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub version: String,
    pub backend: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub record_id: String,
    /// RGBA PNG of the cropped foreground.
    pub image: String,
    pub category: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub version: String,
    pub backend: String,
    pub answer: Answer,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintWireRequest {
    pub record_id: String,
    pub image: String,
    pub mask: Rle,
    pub prompt: String,
    pub pass: usize,
    pub role: InpaintRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintResponse {
    pub version: String,
    pub backend: String,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub version: String,
    pub error: String,
}

pub fn encode_image(image: &ImagePlane) -> Result<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(image.to_png_bytes()?))
}

pub fn encode_layer(layer: &ForegroundLayer) -> Result<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(layer.to_png_bytes()?))
}

pub fn decode_image(b64: &str) -> Result<ImagePlane> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|e| Error::BackendUnavailable(format!("bad base64 image: {e}")))?;
    ImagePlane::from_png_bytes(&bytes).map_err(|e| Error::BackendUnavailable(format!("bad image payload: {e}")))
}

fn decode_layer(b64: &str) -> Result<ForegroundLayer> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|e| Error::BackendUnavailable(format!("bad base64 image: {e}")))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::BackendUnavailable(e.to_string()))?;
    let alpha = img.to_rgba8().pixels().map(|p| p.0[3] as f64 / 255.0).collect();
    let (plane, _) = ImagePlane::from_dynamic(&img)?;
    ForegroundLayer::new(plane, alpha, (0, 0))
}

/// Serves one protocol request against a backend suite.
///
/// Returns an HTTP status code and a JSON body. Used to expose in-process
/// backends (such as the mock) over the wire and in conformance tests.
pub fn dispatch(suite: &BackendSuite, path: &str, body: &str) -> (u16, String) {
    match dispatch_inner(suite, path, body) {
        Ok(json) => (200, json),
        Err((status, msg)) => (
            status,
            serde_json::to_string(&ErrorResponse {
                version: PROTOCOL_VERSION.to_string(),
                error: msg,
            })
            .expect("plain struct serializes"),
        ),
    }
}

fn dispatch_inner(suite: &BackendSuite, path: &str, body: &str) -> std::result::Result<String, (u16, String)> {
    let bad = |e: serde_json::Error| (400u16, format!("malformed request: {e}"));
    let bad_payload = |e: Error| (400u16, e.to_string());
    let failed = |e: Error| (502u16, e.to_string());
    let to_json = |v: serde_json::Result<String>| v.map_err(|e| (500u16, e.to_string()));
    match path {
        "/segment" => {
            let req: SegmentRequest = serde_json::from_str(body).map_err(bad)?;
            let image = decode_image(&req.image).map_err(bad_payload)?;
            let ctx = CallContext { record_id: &req.record_id };
            let masks = suite.segmenter.segment(ctx, &image).map_err(failed)?;
            to_json(serde_json::to_string(&SegmentResponse {
                version: PROTOCOL_VERSION.to_string(),
                backend: suite.segmenter.info().name,
                masks: masks
                    .iter()
                    .map(|(id, m)| WireMask {
                        id: id.clone(),
                        rle: Rle::encode(m),
                    })
                    .collect(),
            }))
        }
        "/score" => {
            let req: ScoreRequest = serde_json::from_str(body).map_err(bad)?;
            let image = decode_image(&req.image).map_err(bad_payload)?;
            let mask = req.mask.decode().map_err(bad_payload)?;
            let ctx = CallContext { record_id: &req.record_id };
            let score = suite
                .scorer
                .score(ctx, &req.candidate_id, &image, &mask, &req.text)
                .map_err(failed)?;
            to_json(serde_json::to_string(&ScoreResponse {
                version: PROTOCOL_VERSION.to_string(),
                backend: suite.scorer.info().name,
                score,
            }))
        }
        "/validate" => {
            let req: ValidateRequest = serde_json::from_str(body).map_err(bad)?;
            let layer = decode_layer(&req.image).map_err(bad_payload)?;
            let ctx = CallContext { record_id: &req.record_id };
            let Verdict { answer, raw } = suite
                .validator
                .validate(ctx, &layer, &req.category, &req.question)
                .map_err(failed)?;
            to_json(serde_json::to_string(&ValidateResponse {
                version: PROTOCOL_VERSION.to_string(),
                backend: suite.validator.info().name,
                answer,
                raw,
            }))
        }
        "/inpaint" => {
            let req: InpaintWireRequest = serde_json::from_str(body).map_err(bad)?;
            let image = decode_image(&req.image).map_err(bad_payload)?;
            let mask = req.mask.decode().map_err(bad_payload)?;
            let ctx = CallContext { record_id: &req.record_id };
            let out = suite
                .inpainter
                .inpaint(
                    ctx,
                    InpaintRequest {
                        image: &image,
                        mask: &mask,
                        prompt: &req.prompt,
                        pass: req.pass,
                        role: req.role,
                    },
                )
                .map_err(failed)?;
            to_json(serde_json::to_string(&InpaintResponse {
                version: PROTOCOL_VERSION.to_string(),
                backend: suite.inpainter.info().name,
                image: encode_image(&out).map_err(failed)?,
            }))
        }
        other => Err((404, format!("unknown endpoint {other}"))),
    }
}
