//! Normalized image planes, binary region masks and their partition into
//! inner/outer sample sets.
//!
//! Everything is stored as `f64` in `[0, 1]`, row-major and
//! channel-interleaved. Colour spaces are not managed; values are taken as
//! already linear.

use std::path::Path;

use image::{DynamicImage, GenericImageView, ImageBuffer, ImageReader, Luma, LumaA, Rgb, Rgba};

use crate::error::{Error, Result};

/// Width/height pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// A normalized pixel matrix with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dims("non-empty image", Dims::new(width, height)));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedFormat(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: width * height * channels,
            });
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Numerical(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// A plane filled with one value (clamped into `[0, 1]`).
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value.clamp(0.0, 1.0); width * height * channels],
        )
    }

    /// Builds a plane from a per-pixel, per-channel function. Values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..channels {
                    data.push(f(row, col, ch).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Channel values of the pixel at (`row`, `col`).
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub(crate) fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Unweighted channel mean, for grayscale-first evaluation.
    pub fn to_grayscale(&self) -> ImagePlane {
        if self.channels == 1 {
            return self.clone();
        }
        let inv = 1.0 / self.channels as f64;
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| (px.iter().sum::<f64>() * inv).clamp(0.0, 1.0))
            .collect();
        ImagePlane {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Converts a decoded raster, dropping any alpha channel.
    ///
    /// Returns the plane and whether an alpha channel was stripped.
    pub fn from_dynamic(img: &DynamicImage) -> Result<(Self, bool)> {
        let (w, h) = img.dimensions();
        let (w, h) = (w as usize, h as usize);
        let has_alpha = img.color().has_alpha();
        let (channels, data): (usize, Vec<f64>) = match img {
            DynamicImage::ImageLuma8(b) => (1, scale_u8(b.as_raw())),
            DynamicImage::ImageLumaA8(b) => (1, scale_u8(&strip_alpha(b.as_raw(), 2))),
            DynamicImage::ImageRgb8(b) => (3, scale_u8(b.as_raw())),
            DynamicImage::ImageRgba8(b) => (3, scale_u8(&strip_alpha(b.as_raw(), 4))),
            DynamicImage::ImageLuma16(b) => (1, scale_u16(b.as_raw())),
            DynamicImage::ImageLumaA16(b) => (1, scale_u16(&strip_alpha(b.as_raw(), 2))),
            DynamicImage::ImageRgb16(b) => (3, scale_u16(b.as_raw())),
            DynamicImage::ImageRgba16(b) => (3, scale_u16(&strip_alpha(b.as_raw(), 4))),
            DynamicImage::ImageRgb32F(b) => (3, clamp_f32(b.as_raw())),
            DynamicImage::ImageRgba32F(b) => (3, clamp_f32(&strip_alpha(b.as_raw(), 4))),
            other => {
                return Err(Error::UnsupportedFormat(format!("{:?}", other.color())));
            }
        };
        Ok((Self::new(w, h, channels, data)?, has_alpha))
    }

    /// Quantizes to 8 bits per channel (round to nearest).
    pub fn to_dynamic(&self) -> DynamicImage {
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => DynamicImage::ImageLuma8(
                ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("buffer sized by invariant"),
            ),
            _ => DynamicImage::ImageRgb8(
                ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("buffer sized by invariant"),
            ),
        }
    }

    /// Writes an 8-bit PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_dynamic(&self.to_dynamic(), path)
    }

    /// Encodes as an 8-bit PNG in memory.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        encode_png(&self.to_dynamic())
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
        Ok(Self::from_dynamic(&img)?.0)
    }
}

/// Result of [`load_image`].
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub plane: ImagePlane,
    /// Set when the file carried an alpha channel that was discarded.
    pub alpha_stripped: bool,
}

/// A binary inner/outer partition of the pixel grid (`true` = inner).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl RegionMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dims("non-empty mask", Dims::new(width, height)));
        }
        if bits.len() != width * height {
            return Err(Error::LengthMismatch {
                left: bits.len(),
                right: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, inner: bool) -> Result<Self> {
        Self::new(width, height, vec![inner; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                bits.push(f(row, col));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, inner: bool) {
        self.bits[row * self.width + col] = inner;
    }

    pub fn inner_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn outer_count(&self) -> usize {
        self.bits.len() - self.inner_count()
    }

    /// Swaps inner and outer.
    pub fn complement(&self) -> RegionMask {
        RegionMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Tight axis-aligned box around the inner region.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut bbox: Option<BoundingBox> = None;
        for row in 0..self.height {
            for col in 0..self.width {
                if !self.get(row, col) {
                    continue;
                }
                bbox = Some(match bbox {
                    None => BoundingBox {
                        row,
                        col,
                        height: 1,
                        width: 1,
                    },
                    Some(b) => {
                        let top = b.row.min(row);
                        let left = b.col.min(col);
                        let bottom = (b.row + b.height).max(row + 1);
                        let right = (b.col + b.width).max(col + 1);
                        BoundingBox {
                            row: top,
                            col: left,
                            height: bottom - top,
                            width: right - left,
                        }
                    }
                });
            }
        }
        bbox
    }

    /// Grows the inner region by a Euclidean disk of `radius` pixels.
    pub fn dilate(&self, radius: usize) -> RegionMask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as isize;
        let r2 = (radius * radius) as isize;
        let mut out = RegionMask::filled(self.width, self.height, false).expect("same dims");
        for row in 0..self.height {
            for col in 0..self.width {
                if !self.get(row, col) {
                    continue;
                }
                for dr in -r..=r {
                    for dc in -r..=r {
                        if dr * dr + dc * dc > r2 {
                            continue;
                        }
                        let (rr, cc) = (row as isize + dr, col as isize + dc);
                        if rr >= 0 && cc >= 0 && (rr as usize) < self.height && (cc as usize) < self.width {
                            out.set(rr as usize, cc as usize, true);
                        }
                    }
                }
            }
        }
        out
    }

    /// Builds a mask from a single-channel image by thresholding.
    pub fn from_dynamic(img: &DynamicImage, threshold: f64) -> Result<Self> {
        let (w, h) = img.dimensions();
        let levels = mask_levels(img);
        let bits = levels.into_iter().map(|v| v >= threshold).collect();
        Self::new(w as usize, h as usize, bits)
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let bytes = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(self.width as u32, self.height as u32, bytes)
                .expect("buffer sized by invariant"),
        )
    }

    /// Writes a single-channel PNG (inner = 255).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_dynamic(&self.to_dynamic(), path)
    }
}

/// Axis-aligned pixel box; `row`/`col` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

/// Channel values split by mask membership, each in row-major order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionSamples {
    pub inner: Vec<f64>,
    pub outer: Vec<f64>,
}

impl RegionSamples {
    /// Inverse of [`partition`]: interleaves the samples back into pixel order.
    pub fn recombine(&self, mask: &RegionMask, channels: usize) -> Result<Vec<f64>> {
        let (ni, no) = (mask.inner_count(), mask.outer_count());
        if self.inner.len() != ni * channels || self.outer.len() != no * channels {
            return Err(Error::LengthMismatch {
                left: self.inner.len() + self.outer.len(),
                right: mask.bits().len() * channels,
            });
        }
        let mut inner = self.inner.chunks_exact(channels);
        let mut outer = self.outer.chunks_exact(channels);
        let mut data = Vec::with_capacity(mask.bits().len() * channels);
        for &b in mask.bits() {
            let px = if b { inner.next() } else { outer.next() };
            data.extend_from_slice(px.expect("counts checked above"));
        }
        Ok(data)
    }
}

pub fn check_dims(image: &ImagePlane, mask: &RegionMask) -> Result<()> {
    if image.dims() != mask.dims() {
        return Err(Error::dims(image.dims(), mask.dims()));
    }
    Ok(())
}

/// Splits every channel value of `image` into the inner or outer set.
pub fn partition(image: &ImagePlane, mask: &RegionMask) -> Result<RegionSamples> {
    check_dims(image, mask)?;
    let c = image.channels();
    let ni = mask.inner_count();
    let mut samples = RegionSamples {
        inner: Vec::with_capacity(ni * c),
        outer: Vec::with_capacity((mask.bits().len() - ni) * c),
    };
    for (px, &inner) in image.data().chunks_exact(c).zip(mask.bits()) {
        if inner {
            samples.inner.extend_from_slice(px);
        } else {
            samples.outer.extend_from_slice(px);
        }
    }
    Ok(samples)
}

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let reader = reader.with_guessed_format().map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Jpeg) => {}
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        None => return Err(Error::UnsupportedFormat(path.display().to_string())),
    }
    reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

/// Loads a PNG or JPEG and scales it into `[0, 1]`.
pub fn load_image(path: &Path, expected: Option<Dims>) -> Result<LoadedImage> {
    let img = open(path)?;
    let (plane, alpha_stripped) = ImagePlane::from_dynamic(&img)?;
    if let Some(dims) = expected {
        if plane.dims() != dims {
            return Err(Error::dims(dims, plane.dims()));
        }
    }
    if alpha_stripped {
        log::warn!("{}: alpha channel stripped", path.display());
    }
    Ok(LoadedImage {
        plane,
        alpha_stripped,
    })
}

/// Loads a mask image; a pixel is inner when its largest normalized
/// channel value reaches `threshold`.
pub fn load_mask(path: &Path, threshold: f64) -> Result<RegionMask> {
    RegionMask::from_dynamic(&open(path)?, threshold)
}

/// Per-pixel mask level: maximum over colour channels, alpha ignored.
fn mask_levels(img: &DynamicImage) -> Vec<f64> {
    let colour = match img.color().has_color() {
        true => 3,
        false => 1,
    };
    let step = img.color().channel_count() as usize;
    let max_of = |px: &[f64]| px[..colour].iter().copied().fold(0.0, f64::max);
    match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => scale_u8(img.as_bytes()).chunks_exact(step).map(max_of).collect(),
        other => other
            .to_rgba32f()
            .as_raw()
            .chunks_exact(4)
            .map(|px| px[..3].iter().fold(0.0f64, |m, &x| m.max(x as f64)))
            .collect(),
    }
}

fn strip_alpha<T: Copy>(raw: &[T], step: usize) -> Vec<T> {
    raw.chunks_exact(step).flat_map(|px| px[..step - 1].iter().copied()).collect()
}

fn scale_u8(raw: &[u8]) -> Vec<f64> {
    raw.iter().map(|&v| v as f64 / 255.0).collect()
}

fn scale_u16(raw: &[u16]) -> Vec<f64> {
    raw.iter().map(|&v| v as f64 / 65535.0).collect()
}

fn clamp_f32(raw: &[f32]) -> Vec<f64> {
    raw.iter()
        .map(|&v| if v.is_nan() { 0.0 } else { (v as f64).clamp(0.0, 1.0) })
        .collect()
}

pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn save_dynamic(img: &DynamicImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}

/// PNG encoding with fixed settings so identical pixels give identical bytes.
pub(crate) fn encode_png(img: &DynamicImage) -> Result<Vec<u8>> {
    use image::codecs::png::{CompressionType, FilterType, PngEncoder};
    let mut out = Vec::new();
    let encoder = PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Adaptive);
    img.write_with_encoder(encoder)
        .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    Ok(out)
}

pub(crate) fn rgba_image(width: usize, height: usize, bytes: Vec<u8>) -> DynamicImage {
    DynamicImage::ImageRgba8(
        ImageBuffer::<Rgba<u8>, _>::from_raw(width as u32, height as u32, bytes).expect("sized by caller"),
    )
}

pub(crate) fn luma_alpha_image(width: usize, height: usize, bytes: Vec<u8>) -> DynamicImage {
    DynamicImage::ImageLumaA8(
        ImageBuffer::<LumaA<u8>, _>::from_raw(width as u32, height as u32, bytes).expect("sized by caller"),
    )
}
