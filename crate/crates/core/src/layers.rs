//! Foreground/background layer separation and re-merging.

use std::path::Path;

use image::GenericImageView;

use crate::error::{Error, Region, Result};
use crate::imaging::{self, check_dims, ImagePlane, RegionMask};

/// A cropped foreground with per-pixel coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundLayer {
    pixels: ImagePlane,
    alpha: Vec<f64>,
    origin: (usize, usize),
}

impl ForegroundLayer {
    pub fn new(pixels: ImagePlane, alpha: Vec<f64>, origin: (usize, usize)) -> Result<Self> {
        if alpha.len() != pixels.width() * pixels.height() {
            return Err(Error::LengthMismatch {
                left: alpha.len(),
                right: pixels.width() * pixels.height(),
            });
        }
        if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Numerical("alpha outside [0, 1]".into()));
        }
        Ok(Self { pixels, alpha, origin })
    }

    pub fn pixels(&self) -> &ImagePlane {
        &self.pixels
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// (row, col) of the layer's top-left corner in source coordinates.
    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    /// Saves as RGBA (or gray+alpha) PNG. The origin is not stored in the
    /// file; callers keep it alongside (the dataset manifest does).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        imaging::save_dynamic(&self.to_dynamic(), path)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        imaging::encode_png(&self.to_dynamic())
    }

    fn to_dynamic(&self) -> image::DynamicImage {
        let c = self.pixels.channels();
        let mut bytes = Vec::with_capacity(self.alpha.len() * (c + 1));
        for (px, &a) in self.pixels.data().chunks_exact(c).zip(&self.alpha) {
            bytes.extend(px.iter().map(|&v| imaging::quantize(v)));
            bytes.push(imaging::quantize(a));
        }
        if c == 1 {
            imaging::luma_alpha_image(self.width(), self.height(), bytes)
        } else {
            imaging::rgba_image(self.width(), self.height(), bytes)
        }
    }

    /// Loads a layer written by [`ForegroundLayer::save_png`]. Files without
    /// an alpha channel get full coverage.
    pub fn load_png(path: &Path, origin: (usize, usize)) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let (w, h) = img.dimensions();
        let alpha = if img.color().has_alpha() {
            img.to_rgba8().pixels().map(|p| p.0[3] as f64 / 255.0).collect()
        } else {
            vec![1.0; (w * h) as usize]
        };
        let (pixels, _) = ImagePlane::from_dynamic(&img)?;
        Self::new(pixels, alpha, origin)
    }
}

/// Where a foreground belongs on the full canvas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionMask(pub RegionMask);

impl PositionMask {
    pub fn mask(&self) -> &RegionMask {
        &self.0
    }
}

impl From<RegionMask> for PositionMask {
    fn from(mask: RegionMask) -> Self {
        Self(mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlendMode {
    Hard,
    Feathered,
}

/// Edge blending for [`merge_layers`]. A zero radius is a hard paste.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlendConfig {
    feather_radius: usize,
}

impl BlendConfig {
    pub const DEFAULT_FEATHER_RADIUS: usize = 2;

    pub fn hard() -> Self {
        Self { feather_radius: 0 }
    }

    pub fn feathered(radius: usize) -> Self {
        Self { feather_radius: radius }
    }

    pub fn feather_radius(&self) -> usize {
        self.feather_radius
    }

    pub fn mode(&self) -> BlendMode {
        if self.feather_radius == 0 {
            BlendMode::Hard
        } else {
            BlendMode::Feathered
        }
    }
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self::feathered(Self::DEFAULT_FEATHER_RADIUS)
    }
}

/// Crops the mask's bounding box out of `image`; coverage is 1 on mask
/// pixels and 0 on the rest of the box.
pub fn extract_foreground(image: &ImagePlane, mask: &RegionMask) -> Result<ForegroundLayer> {
    check_dims(image, mask)?;
    let bbox = mask.bounding_box().ok_or(Error::DegenerateMask(Region::Inner))?;
    let c = image.channels();
    let mut data = Vec::with_capacity(bbox.width * bbox.height * c);
    let mut alpha = Vec::with_capacity(bbox.width * bbox.height);
    for row in bbox.row..bbox.row + bbox.height {
        for col in bbox.col..bbox.col + bbox.width {
            data.extend_from_slice(image.pixel(row, col));
            alpha.push(if mask.get(row, col) { 1.0 } else { 0.0 });
        }
    }
    ForegroundLayer::new(
        ImagePlane::new(bbox.width, bbox.height, c, data)?,
        alpha,
        (bbox.row, bbox.col),
    )
}

/// Composites `fg` over `background` at the top-left of `pos`'s bounding box.
///
/// With feathering, coverage inside the layer ramps linearly with the
/// Euclidean distance to the nearest uncovered canvas pixel: a pixel whose
/// centre lies `b = d - 0.5` from the coverage edge keeps `min(1, b / r)`
/// of its alpha. Pixels deeper than the radius are identical to a hard paste.
pub fn merge_layers(
    background: &ImagePlane,
    fg: &ForegroundLayer,
    pos: &PositionMask,
    cfg: &BlendConfig,
) -> Result<ImagePlane> {
    check_dims(background, pos.mask())?;
    if fg.pixels.channels() != background.channels() {
        return Err(Error::dims(
            format!("{} channels", background.channels()),
            format!("{} channels", fg.pixels.channels()),
        ));
    }
    let bbox = pos.mask().bounding_box().ok_or(Error::DegenerateMask(Region::Inner))?;
    let (row0, col0) = (bbox.row, bbox.col);
    let (w, h) = (background.width(), background.height());
    if row0 + fg.height() > h || col0 + fg.width() > w {
        return Err(Error::OutOfCanvas {
            row: row0,
            col: col0,
            width: fg.width(),
            height: fg.height(),
            canvas_width: w,
            canvas_height: h,
        });
    }

    let mut coverage = vec![0.0; w * h];
    for r in 0..fg.height() {
        for c in 0..fg.width() {
            coverage[(row0 + r) * w + col0 + c] = fg.alpha[r * fg.width() + c];
        }
    }
    if cfg.mode() == BlendMode::Feathered {
        coverage = feather(&coverage, w, h, cfg.feather_radius);
    }

    let mut out = background.clone();
    for r in 0..fg.height() {
        for c in 0..fg.width() {
            let a = coverage[(row0 + r) * w + col0 + c];
            if a == 0.0 {
                continue;
            }
            let src = fg.pixels.pixel(r, c);
            let dst = out.pixel_mut(row0 + r, col0 + c);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = (a * s + (1.0 - a) * *d).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

fn feather(coverage: &[f64], w: usize, h: usize, radius: usize) -> Vec<f64> {
    let r = radius as f64;
    // b < r  <=>  d < r + 0.5, so no uncovered pixel farther than this matters.
    let reach = (r + 0.5).ceil() as isize;
    let mut out = coverage.to_vec();
    for row in 0..h {
        for col in 0..w {
            let a = coverage[row * w + col];
            if a == 0.0 {
                continue;
            }
            let mut best = f64::INFINITY;
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let (rr, cc) = (row as isize + dr, col as isize + dc);
                    if rr < 0 || cc < 0 || rr as usize >= h || cc as usize >= w {
                        continue;
                    }
                    if coverage[rr as usize * w + cc as usize] == 0.0 {
                        best = best.min(((dr * dr + dc * dc) as f64).sqrt());
                    }
                }
            }
            let ramp = ((best - 0.5) / r).min(1.0);
            out[row * w + col] = a * ramp;
        }
    }
    out
}

/// Replaces inner pixels with `fill`.
pub fn mask_out(image: &ImagePlane, mask: &RegionMask, fill: f64) -> Result<ImagePlane> {
    check_dims(image, mask)?;
    if !(0.0..=1.0).contains(&fill) {
        return Err(Error::Numerical(format!("fill {fill} outside [0, 1]")));
    }
    let mut out = image.clone();
    for row in 0..image.height() {
        for col in 0..image.width() {
            if mask.get(row, col) {
                out.pixel_mut(row, col).fill(fill);
            }
        }
    }
    Ok(out)
}
