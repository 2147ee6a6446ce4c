//! Evaluation and dataset tooling for selective unlearning in image
//! generation.
//!
//! * [`imaging`] — normalized planes, region masks, partitioning.
//! * [`metric`] — the Entangled similarity/consistency score.
//! * [`layers`] — foreground extraction, masking and layer merging.
//! * [`manifest`] — the four-part dataset layout and success-rate summary.
//! * [`pipeline`] — the extract/validate/inpaint procedure over pluggable
//!   inference backends.
//! * [`report`] — batch evaluation, alpha/variant sweeps and report files.

pub mod error;
pub mod imaging;
pub mod layers;
pub mod manifest;
pub mod metric;
pub mod oracle;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use imaging::{load_image, load_mask, partition, Dims, ImagePlane, RegionMask, RegionSamples};
pub use layers::{extract_foreground, mask_out, merge_layers, BlendConfig, ForegroundLayer, PositionMask};
pub use metric::{
    entangled_paired, entangled_single, ConsistencySource, EntangledScore, MetricOptions, MetricWeights,
};

/// Version string recorded in reports and run logs.
pub const TOOL_VERSION: &str = concat!("entangled ", env!("CARGO_PKG_VERSION"));
