//! Browser demo: a synthetic scene whose object is partially removed, scored
//! live, with a feathered re-composite preview.

use entangled_core::metric::{entangled_paired, harmonic_combine, MetricWeights};
use entangled_core::synth::{self, Scene};
use entangled_core::{extract_foreground, merge_layers, BlendConfig, ImagePlane, PositionMask, RegionMask};
use wasm_bindgen::prelude::*;

const EPSILON: f64 = 1e-6;

/// Scores, in order: Entangled-D, Entangled-S, S_in, S_out, S, M, V, C.
pub const SCORE_FIELDS: usize = 8;

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
    unlearned: ImagePlane,
    seed: u64,
    removal: f64,
    outer_noise: f64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, seed: u32) -> Result<Demo, String> {
        if !(8..=512).contains(&size) {
            return Err("size must be between 8 and 512".into());
        }
        let seed = u64::from(seed);
        let scene = synth::scene(size, size, 3, seed);
        let unlearned = scene.original.clone();
        let mut demo = Demo {
            scene,
            unlearned,
            seed,
            removal: 0.0,
            outer_noise: 0.0,
        };
        demo.set_edit(0.6, 0.02);
        Ok(demo)
    }

    pub fn size(&self) -> usize {
        self.scene.original.width()
    }

    /// `removal` blends the object towards the true background; `outer_noise`
    /// damages everything else.
    pub fn set_edit(&mut self, removal: f64, outer_noise: f64) {
        self.removal = removal.clamp(0.0, 1.0);
        self.outer_noise = outer_noise.clamp(0.0, 1.0);
        self.unlearned = synth::unlearned(&self.scene, self.removal, self.outer_noise, self.seed);
    }

    pub fn score(&self, alpha: f64) -> Result<Vec<f64>, String> {
        let weights = MetricWeights::with_epsilon(alpha, 1.0 - alpha, EPSILON).map_err(js)?;
        let s = entangled_paired(&self.scene.original, &self.unlearned, &self.scene.mask, &weights).map_err(js)?;
        let sim = s.similarity.expect("paired score");
        let c = s.consistency;
        Ok(vec![s.value, c.c, sim.s_inner, sim.s_outer, sim.combined, c.m, c.v, c.c])
    }

    /// Entangled-D at `steps` evenly spaced alphas from 0 to 1.
    pub fn alpha_curve(&self, steps: usize) -> Result<Vec<f64>, String> {
        let base = self.score(0.5)?;
        let (similarity, consistency) = (base[4], base[7]);
        let n = steps.max(2);
        (0..n)
            .map(|i| {
                let a = i as f64 / (n - 1) as f64;
                let w = MetricWeights::with_epsilon(a, 1.0 - a, EPSILON).map_err(js)?;
                Ok(harmonic_combine(similarity, consistency, &w).0)
            })
            .collect()
    }

    pub fn original_rgba(&self) -> Vec<u8> {
        rgba(&self.scene.original)
    }

    pub fn unlearned_rgba(&self) -> Vec<u8> {
        rgba(&self.unlearned)
    }

    pub fn mask_rgba(&self) -> Vec<u8> {
        mask_rgba(&self.scene.mask)
    }

    /// Pastes the original object back onto the edited image.
    pub fn merge_preview(&self, feather: usize) -> Result<Vec<u8>, String> {
        Ok(rgba(&merge_back(&self.scene, &self.unlearned, feather).map_err(js)?))
    }
}

fn js(e: entangled_core::Error) -> String {
    e.to_string()
}

fn merge_back(scene: &Scene, background: &ImagePlane, feather: usize) -> entangled_core::Result<ImagePlane> {
    let layer = extract_foreground(&scene.original, &scene.mask)?;
    let pos = PositionMask::from(scene.mask.clone());
    merge_layers(background, &layer, &pos, &BlendConfig::feathered(feather))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn rgba(img: &ImagePlane) -> Vec<u8> {
    let c = img.channels();
    let mut out = Vec::with_capacity(img.width() * img.height() * 4);
    for px in img.data().chunks(c) {
        match c {
            1 | 2 => out.extend_from_slice(&[to_u8(px[0]); 3]),
            _ => out.extend(px[..3].iter().map(|&v| to_u8(v))),
        }
        out.push(255);
    }
    out
}

pub fn mask_rgba(mask: &RegionMask) -> Vec<u8> {
    mask.bits()
        .iter()
        .flat_map(|&b| if b { [255, 255, 255, 255] } else { [0, 0, 0, 255] })
        .collect()
}
