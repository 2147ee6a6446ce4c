//! Seeded synthetic scenes and fixtures for tests, benchmarks and demos.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imaging::{ImagePlane, RegionMask};
use crate::manifest::{Manifest, ORIGINAL_DIR};
use crate::metric::MetricWeights;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform noise in `[0, 1)`.
pub fn noise_image(width: usize, height: usize, channels: usize, seed: u64) -> ImagePlane {
    let mut r = rng(seed);
    ImagePlane::from_fn(width, height, channels, |_, _, _| r.gen::<f64>()).expect("valid dims")
}

/// An object on a textured background.
#[derive(Debug, Clone)]
pub struct Scene {
    pub original: ImagePlane,
    /// The same background without the object.
    pub clean_background: ImagePlane,
    pub mask: RegionMask,
}

pub fn scene(width: usize, height: usize, channels: usize, seed: u64) -> Scene {
    let mut r = rng(seed);
    let (fx, fy) = (r.gen_range(1.0..4.0), r.gen_range(1.0..4.0));
    let phase: Vec<f64> = (0..channels).map(|_| r.gen_range(0.0..std::f64::consts::TAU)).collect();
    let base: Vec<f64> = (0..channels).map(|_| r.gen_range(0.3..0.6)).collect();
    let tint: Vec<f64> = (0..channels).map(|_| r.gen_range(0.0..1.0)).collect();
    let cy = r.gen_range(0.35..0.65);
    let cx = r.gen_range(0.35..0.65);
    let ry = r.gen_range(0.12..0.3);
    let rx = r.gen_range(0.12..0.3);
    let mut grain = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise: Vec<f64> = (0..width * height * channels).map(|_| grain.gen_range(-0.08..0.08)).collect();

    let (w, h) = (width as f64, height as f64);
    let background = ImagePlane::from_fn(width, height, channels, |row, col, ch| {
        let (y, x) = (row as f64 / h, col as f64 / w);
        let wave = 0.15 * ((fx * x + fy * y) * std::f64::consts::TAU + phase[ch]).sin();
        base[ch] + wave + noise[(row * width + col) * channels + ch]
    })
    .expect("valid dims");
    let mask = RegionMask::from_fn(width, height, |row, col| {
        let (y, x) = ((row as f64 + 0.5) / h, (col as f64 + 0.5) / w);
        ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0
    })
    .expect("valid dims");
    let mut original = background.clone();
    for row in 0..height {
        for col in 0..width {
            if mask.get(row, col) {
                let px = original.pixel_mut(row, col);
                for (ch, v) in px.iter_mut().enumerate() {
                    *v = (0.7 * tint[ch] + 0.3 * *v).clamp(0.0, 1.0);
                }
            }
        }
    }
    Scene {
        original,
        clean_background: background,
        mask,
    }
}

/// Blends the object towards the clean background by `removal` in `[0, 1]`
/// and perturbs the outer region with noise of amplitude `outer_noise`.
pub fn unlearned(scene: &Scene, removal: f64, outer_noise: f64, seed: u64) -> ImagePlane {
    let mut r = rng(seed);
    let c = scene.original.channels();
    let mut data = Vec::with_capacity(scene.original.data().len());
    for (i, (&o, &b)) in scene
        .original
        .data()
        .iter()
        .zip(scene.clean_background.data())
        .enumerate()
    {
        let inner = scene.mask.bits()[i / c];
        let v = if inner {
            (1.0 - removal) * o + removal * b
        } else {
            o + outer_noise * r.gen_range(-1.0..1.0)
        };
        data.push(v.clamp(0.0, 1.0));
    }
    ImagePlane::new(scene.original.width(), scene.original.height(), c, data).expect("same shape")
}

/// A random mask with at least one inner and one outer pixel.
pub fn random_mask(r: &mut impl Rng, width: usize, height: usize) -> RegionMask {
    let mut mask = match r.gen_range(0..3) {
        0 => {
            let p = r.gen_range(0.05..0.95);
            RegionMask::from_fn(width, height, |_, _| r.gen_bool(p))
        }
        1 => {
            let (t, l) = (r.gen_range(0..height), r.gen_range(0..width));
            let (b, rt) = (r.gen_range(t..height) + 1, r.gen_range(l..width) + 1);
            RegionMask::from_fn(width, height, |row, col| (t..b).contains(&row) && (l..rt).contains(&col))
        }
        _ => {
            let (cy, cx) = (r.gen_range(0.2..0.8), r.gen_range(0.2..0.8));
            let (ry, rx) = (r.gen_range(0.05..0.5), r.gen_range(0.05..0.5));
            RegionMask::from_fn(width, height, |row, col| {
                let (y, x) = ((row as f64 + 0.5) / height as f64, (col as f64 + 0.5) / width as f64);
                ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0
            })
        }
    }
    .expect("valid dims");
    if mask.inner_count() == 0 {
        mask.set(r.gen_range(0..height), r.gen_range(0..width), true);
    }
    if mask.outer_count() == 0 {
        mask.set(r.gen_range(0..height), r.gen_range(0..width), false);
    }
    mask
}

/// Random image pair of mixed character (noise, flat, scene-like) plus a
/// non-degenerate mask.
pub fn random_instance(
    r: &mut impl Rng,
    width: usize,
    height: usize,
    channels: usize,
) -> (ImagePlane, ImagePlane, RegionMask) {
    let seed = r.gen::<u64>();
    let (original, unlearned_img) = match r.gen_range(0..4) {
        0 => (
            noise_image(width, height, channels, seed),
            noise_image(width, height, channels, seed.wrapping_add(1)),
        ),
        1 => {
            let s = scene(width, height, channels, seed);
            let u = unlearned(&s, r.gen_range(0.0..1.0), r.gen_range(0.0..0.2), seed);
            (s.original, u)
        }
        2 => {
            let a = r.gen_range(0.0..1.0);
            let b = r.gen_range(0.0..1.0);
            (
                ImagePlane::filled(width, height, channels, a).expect("valid dims"),
                noise_image(width, height, channels, seed).clone_with(|v| b * v),
            )
        }
        _ => {
            let x = noise_image(width, height, channels, seed);
            let y = x.clone();
            (x, y)
        }
    };
    let mask = random_mask(r, width, height);
    (original, unlearned_img, mask)
}

pub fn random_weights(r: &mut impl Rng) -> MetricWeights {
    let alpha = match r.gen_range(0..5) {
        0 => 0.0,
        1 => 1.0,
        _ => r.gen_range(0.0..=1.0),
    };
    MetricWeights::from_alpha(alpha).expect("alpha in [0, 1]")
}

impl ImagePlane {
    fn clone_with(&self, f: impl Fn(f64) -> f64) -> ImagePlane {
        let data = self.data().iter().map(|&v| f(v).clamp(0.0, 1.0)).collect();
        ImagePlane::new(self.width(), self.height(), self.channels(), data).expect("same shape")
    }
}

/// Writes `original/`, `unlearned/` and `mask/` subdirectories with `count`
/// scene records; record `i` uses removal strength `i / count`.
pub fn write_pairs_fixture(dir: &Path, count: usize, size: usize, seed: u64) -> Result<()> {
    for i in 0..count {
        let id = format!("rec_{i:04}");
        let s = scene(size, size, 3, seed.wrapping_add(i as u64));
        let u = unlearned(&s, (i + 1) as f64 / count as f64, 0.02, seed ^ i as u64);
        s.original.save_png(&dir.join("original").join(format!("{id}.png")))?;
        u.save_png(&dir.join("unlearned").join(format!("{id}.png")))?;
        s.mask.save_png(&dir.join("mask").join(format!("{id}.png")))?;
    }
    Ok(())
}

/// Writes a pipeline input: `manifest.json` and `original/` scenes.
pub fn write_pipeline_fixture(dir: &Path, count: usize, size: usize, seed: u64, dataset: &str, prompt: &str) -> Result<()> {
    for i in 0..count {
        let s = scene(size, size, 3, seed.wrapping_add(i as u64));
        s.original.save_png(&dir.join(ORIGINAL_DIR).join(format!("img_{i:03}.png")))?;
    }
    Manifest::new(dataset, prompt).save(dir)
}
