//! The Entangled metric family.
//!
//! A score combines two parts computed over the inner (masked) and outer
//! regions of an image:
//!
//! * **similarity** — per-region RMSE between the original and unlearned
//!   images, folded into one value that rewards a large inner change and a
//!   small outer change;
//! * **consistency** — agreement of the mean and standard deviation of the
//!   unlearned image's inner and outer regions.
//!
//! The two parts are merged by a weighted harmonic mean. With `alpha = 0`
//! only consistency remains, which is the single-image (unpaired) variant.
//!
//! The engine here walks the mask directly and never materializes the
//! region sample lists; [`crate::oracle`] holds a literal transcription used
//! to check it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Region, Result};
use crate::imaging::{check_dims, ImagePlane, RegionMask};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Tolerance on `alpha + beta = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Largest floating excursion outside `[0, 1]` that is silently clamped.
pub const CLAMP_WINDOW: f64 = 1e-9;

/// Standard deviations below this count as flat when
/// `uniform_region_consistency` is enabled.
pub const FLAT_SIGMA: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    alpha: f64,
    beta: f64,
    epsilon: f64,
}

impl MetricWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        Self::with_epsilon(alpha, beta, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(alpha: f64, beta: f64, epsilon: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) || alpha < 0.0 || beta < 0.0 {
            return Err(Error::InvalidWeights(format!(
                "alpha={alpha}, beta={beta}: both must be finite and >= 0"
            )));
        }
        if (alpha + beta - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "alpha + beta = {} (must be 1)",
                alpha + beta
            )));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidWeights(format!("epsilon={epsilon} must be > 0")));
        }
        Ok(Self { alpha, beta, epsilon })
    }

    /// `beta` is derived as `1 - alpha`.
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0 - alpha)
    }

    /// Consistency only (`alpha = 0`, `beta = 1`).
    pub fn single(epsilon: f64) -> Result<Self> {
        Self::with_epsilon(0.0, 1.0, epsilon)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Which image the consistency term is measured on in paired mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsistencySource {
    #[default]
    Unlearned,
    Original,
}

impl std::str::FromStr for ConsistencySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unlearned" => Ok(Self::Unlearned),
            "original" => Ok(Self::Original),
            other => Err(Error::Config(format!(
                "consistency source must be `unlearned` or `original`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricOptions {
    pub consistency_source: ConsistencySource,
    /// Treat two flat regions (both sigma below [`FLAT_SIGMA`]) as having
    /// variance consistency 1 instead of the literal 0.
    pub uniform_region_consistency: bool,
    /// Average channels before scoring instead of treating every channel
    /// value as a sample.
    pub grayscale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    pub s_inner: f64,
    pub s_outer: f64,
    pub combined: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyBreakdown {
    pub mu_inner: f64,
    pub mu_outer: f64,
    pub sigma_inner: f64,
    pub sigma_outer: f64,
    pub m: f64,
    pub v: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Paired,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntangledScore {
    pub similarity: Option<SimilarityBreakdown>,
    pub consistency: ConsistencyBreakdown,
    pub weights: MetricWeights,
    pub value: f64,
    pub mode: ScoreMode,
    /// Set when both similarity and consistency were too small for the
    /// harmonic mean to be defined; `value` is then 0.
    pub degenerate: bool,
}

/// Population mean and standard deviation of one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub mu: f64,
    pub sigma: f64,
}

/// Root mean squared difference between two equally long sample lists.
pub fn region_rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / x.len() as f64).sqrt())
}

/// Folds inner and outer RMSE into one similarity: high when the inner
/// region changed a lot and the outer region did not.
pub fn combined_similarity(s_inner: f64, s_outer: f64, eps: f64) -> f64 {
    let kept = 1.0 - s_outer;
    2.0 * s_inner * kept / (s_inner + kept + eps)
}

pub fn region_stats(samples: &[f64]) -> Result<RegionStats> {
    if samples.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = samples.len() as f64;
    let mu = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    Ok(RegionStats { mu, sigma: var.sqrt() })
}

/// Mean/variance agreement between two regions, literal formula.
pub fn consistency(inner: &[f64], outer: &[f64], eps: f64) -> Result<ConsistencyBreakdown> {
    consistency_with(inner, outer, eps, false)
}

pub fn consistency_with(inner: &[f64], outer: &[f64], eps: f64, uniform_flat: bool) -> Result<ConsistencyBreakdown> {
    Ok(consistency_from_stats(
        region_stats(inner)?,
        region_stats(outer)?,
        eps,
        uniform_flat,
    ))
}

pub fn consistency_from_stats(
    inner: RegionStats,
    outer: RegionStats,
    eps: f64,
    uniform_flat: bool,
) -> ConsistencyBreakdown {
    let m = 2.0 * inner.mu * outer.mu / (inner.mu * inner.mu + outer.mu * outer.mu + eps);
    let v = if uniform_flat && inner.sigma < FLAT_SIGMA && outer.sigma < FLAT_SIGMA {
        1.0
    } else {
        2.0 * inner.sigma * outer.sigma / (inner.sigma * inner.sigma + outer.sigma * outer.sigma + eps)
    };
    ConsistencyBreakdown {
        mu_inner: inner.mu,
        mu_outer: outer.mu,
        sigma_inner: inner.sigma,
        sigma_outer: outer.sigma,
        m,
        v,
        c: m * v,
    }
}

/// Weighted harmonic mean of similarity and consistency.
///
/// A zero weight drops its term entirely, so `(1, 0)` returns `similarity`
/// and `(0, 1)` returns `consistency` exactly. When both weights are
/// positive and the denominator falls below epsilon the mean is undefined;
/// 0 is returned together with a `true` flag.
pub fn harmonic_combine(similarity: f64, consistency: f64, weights: &MetricWeights) -> (f64, bool) {
    let (a, b) = (weights.alpha, weights.beta);
    if b == 0.0 {
        return (similarity, false);
    }
    if a == 0.0 {
        return (consistency, false);
    }
    let denom = a * consistency + b * similarity;
    if denom < weights.epsilon {
        return (0.0, true);
    }
    ((a + b) * similarity * consistency / denom, false)
}

/// Paired-image Entangled score (original vs. unlearned).
pub fn entangled_paired(
    original: &ImagePlane,
    unlearned: &ImagePlane,
    mask: &RegionMask,
    weights: &MetricWeights,
) -> Result<EntangledScore> {
    entangled_paired_with(original, unlearned, mask, weights, &MetricOptions::default())
}

pub fn entangled_paired_with(
    original: &ImagePlane,
    unlearned: &ImagePlane,
    mask: &RegionMask,
    weights: &MetricWeights,
    opts: &MetricOptions,
) -> Result<EntangledScore> {
    check_dims(original, mask)?;
    check_dims(unlearned, mask)?;
    if original.channels() != unlearned.channels() {
        return Err(Error::dims(
            format!("{} channels", original.channels()),
            format!("{} channels", unlearned.channels()),
        ));
    }
    check_regions(mask)?;
    let (gx, gy);
    let (original, unlearned) = if opts.grayscale {
        gx = original.to_grayscale();
        gy = unlearned.to_grayscale();
        (&gx, &gy)
    } else {
        (original, unlearned)
    };

    let host = match opts.consistency_source {
        ConsistencySource::Unlearned => unlearned,
        ConsistencySource::Original => original,
    };
    let sums = RegionSums::accumulate(original, unlearned, host, mask);
    let eps = weights.epsilon;
    let s_inner = (sums.sq_diff[0] / sums.count[0]).sqrt();
    let s_outer = (sums.sq_diff[1] / sums.count[1]).sqrt();
    let similarity = SimilarityBreakdown {
        s_inner,
        s_outer,
        combined: combined_similarity(s_inner, s_outer, eps),
    };
    let (si, so) = region_stats_fused(host, mask, &sums);
    let consistency = consistency_from_stats(si, so, eps, opts.uniform_region_consistency);
    let (value, degenerate) = harmonic_combine(similarity.combined, consistency.c, weights);
    finish(EntangledScore {
        similarity: Some(similarity),
        consistency,
        weights: *weights,
        value,
        mode: ScoreMode::Paired,
        degenerate,
    })
}

/// Single-image score: consistency of the unlearned image alone.
pub fn entangled_single(unlearned: &ImagePlane, mask: &RegionMask, eps: f64) -> Result<EntangledScore> {
    entangled_single_with(unlearned, mask, eps, &MetricOptions::default())
}

pub fn entangled_single_with(
    unlearned: &ImagePlane,
    mask: &RegionMask,
    eps: f64,
    opts: &MetricOptions,
) -> Result<EntangledScore> {
    let weights = MetricWeights::single(eps)?;
    check_dims(unlearned, mask)?;
    check_regions(mask)?;
    let gray;
    let unlearned = if opts.grayscale {
        gray = unlearned.to_grayscale();
        &gray
    } else {
        unlearned
    };
    let sums = RegionSums::accumulate(unlearned, unlearned, unlearned, mask);
    let (si, so) = region_stats_fused(unlearned, mask, &sums);
    let consistency = consistency_from_stats(si, so, eps, opts.uniform_region_consistency);
    finish(EntangledScore {
        similarity: None,
        consistency,
        weights,
        value: consistency.c,
        mode: ScoreMode::Single,
        degenerate: false,
    })
}

fn check_regions(mask: &RegionMask) -> Result<()> {
    let inner = mask.inner_count();
    if inner == 0 {
        return Err(Error::DegenerateMask(Region::Inner));
    }
    if inner == mask.bits().len() {
        return Err(Error::DegenerateMask(Region::Outer));
    }
    Ok(())
}

/// First-pass accumulators, index 0 = inner, 1 = outer.
struct RegionSums {
    count: [f64; 2],
    sq_diff: [f64; 2],
    sum: [f64; 2],
}

impl RegionSums {
    fn accumulate(original: &ImagePlane, unlearned: &ImagePlane, host: &ImagePlane, mask: &RegionMask) -> Self {
        let c = original.channels();
        let mut count = [0usize; 2];
        let mut sq_diff = [0.0; 2];
        let mut sum = [0.0; 2];
        let pixels = original
            .data()
            .chunks_exact(c)
            .zip(unlearned.data().chunks_exact(c))
            .zip(host.data().chunks_exact(c));
        for (((x, y), h), &inner) in pixels.zip(mask.bits()) {
            let r = usize::from(!inner);
            count[r] += c;
            for k in 0..c {
                let d = x[k] - y[k];
                sq_diff[r] += d * d;
                sum[r] += h[k];
            }
        }
        Self {
            count: [count[0] as f64, count[1] as f64],
            sq_diff,
            sum,
        }
    }
}

/// Second pass: centred squared deviations around the first-pass means.
fn region_stats_fused(host: &ImagePlane, mask: &RegionMask, sums: &RegionSums) -> (RegionStats, RegionStats) {
    let c = host.channels();
    let mu = [sums.sum[0] / sums.count[0], sums.sum[1] / sums.count[1]];
    let mut dev = [0.0; 2];
    for (px, &inner) in host.data().chunks_exact(c).zip(mask.bits()) {
        let r = usize::from(!inner);
        for &v in px {
            let d = v - mu[r];
            dev[r] += d * d;
        }
    }
    let stats = |r: usize| RegionStats {
        mu: mu[r],
        sigma: (dev[r] / sums.count[r]).sqrt(),
    };
    (stats(0), stats(1))
}

fn finish(mut score: EntangledScore) -> Result<EntangledScore> {
    let mut parts = vec![
        ("m", score.consistency.m),
        ("v", score.consistency.v),
        ("c", score.consistency.c),
        ("value", score.value),
    ];
    if let Some(s) = &score.similarity {
        parts.extend([("s_inner", s.s_inner), ("s_outer", s.s_outer), ("s", s.combined)]);
    }
    for (name, v) in parts {
        if !v.is_finite() || !(-CLAMP_WINDOW..=1.0 + CLAMP_WINDOW).contains(&v) {
            return Err(Error::Numerical(format!("{name} = {v} outside [0, 1]")));
        }
    }
    score.value = score.value.clamp(0.0, 1.0);
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = DEFAULT_EPSILON;

    #[test]
    #[allow(clippy::approx_constant)]
    fn rmse_examples() {
        assert_eq!(region_rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(region_rmse(&[0.3, 0.9], &[0.3, 0.9]).unwrap(), 0.0);
        let r = region_rmse(&[0.0, 0.5], &[1.0, 0.5]).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r - 0.70711).abs() < 1e-5);
        assert!(matches!(region_rmse(&[], &[]), Err(Error::EmptyRegion)));
        assert!(matches!(region_rmse(&[0.1], &[0.1, 0.2]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn combined_similarity_limits() {
        assert!(combined_similarity(1.0, 0.0, EPS) >= 1.0 - 2.0 * EPS);
        assert_eq!(combined_similarity(0.0, 1.0, EPS), 0.0);
        let s = combined_similarity(0.70711, 0.1, EPS);
        assert!((s - 2.0 * 0.70711 * 0.9 / (0.70711 + 0.9 + EPS)).abs() < 1e-15);
        assert!((s - 0.79198).abs() < 1e-5);
    }

    #[test]
    fn stats_examples() {
        let s = region_stats(&[0.2, 0.4]).unwrap();
        assert!((s.mu - 0.3).abs() < 1e-15 && (s.sigma - 0.1).abs() < 1e-15);
        let s = region_stats(&[0.7, 0.7, 0.7]).unwrap();
        assert!((s.mu - 0.7).abs() < 1e-15 && s.sigma < 1e-15);
        let s = region_stats(&[0.0, 1.0]).unwrap();
        assert_eq!((s.mu, s.sigma), (0.5, 0.5));
        assert!(matches!(region_stats(&[]), Err(Error::EmptyRegion)));
    }

    #[test]
    fn consistency_examples() {
        let c = consistency(&[0.2, 0.4], &[0.4, 0.6], EPS).unwrap();
        assert!((c.m - 0.88235).abs() < 1e-5, "{c:?}");
        assert!((c.v - 0.99995).abs() < 1e-5);
        assert!((c.c - 0.88231).abs() < 1e-5);

        let c = consistency(&[0.3, 0.7], &[0.3, 0.7], EPS).unwrap();
        let expected = (0.5 / (0.5 + EPS)) * (0.08 / (0.08 + EPS));
        assert!((c.c - expected).abs() < 1e-15 && c.c < 1.0);

        let c = consistency(&[0.5, 0.5], &[0.5, 0.5], EPS).unwrap();
        assert_eq!(c.v, 0.0);
        assert_eq!(c.c, 0.0);
        let c = consistency_with(&[0.5, 0.5], &[0.5, 0.5], EPS, true).unwrap();
        assert_eq!(c.v, 1.0);
        assert!(c.c > 1.0 - 10.0 * EPS);
    }

    #[test]
    fn weights_validation() {
        assert!(MetricWeights::new(0.3, 0.8).is_err());
        assert!(MetricWeights::new(-0.1, 1.1).is_err());
        assert!(MetricWeights::with_epsilon(0.5, 0.5, 0.0).is_err());
        let w = MetricWeights::from_alpha(0.3).unwrap();
        assert!((w.beta() - 0.7).abs() < 1e-15);
        assert_eq!(MetricWeights::default(), MetricWeights::new(0.5, 0.5).unwrap());
    }

    #[test]
    fn harmonic_reductions() {
        let only_s = MetricWeights::new(1.0, 0.0).unwrap();
        let only_c = MetricWeights::new(0.0, 1.0).unwrap();
        assert_eq!(harmonic_combine(0.4, 0.0, &only_s), (0.4, false));
        assert_eq!(harmonic_combine(0.0, 0.6, &only_c), (0.6, false));
        let both = MetricWeights::default();
        assert_eq!(harmonic_combine(0.0, 0.0, &both), (0.0, true));
        assert_eq!(harmonic_combine(0.0, 0.5, &both), (0.0, false));
        let (v, _) = harmonic_combine(0.7919768798556046, 0.8823062307168582, &both);
        assert!((v - 0.83470).abs() < 1e-5);
    }

    fn gray(w: usize, data: &[f64]) -> ImagePlane {
        ImagePlane::new(w, data.len() / w, 1, data.to_vec()).unwrap()
    }

    #[test]
    fn identical_images_score_zero() {
        let img = gray(4, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let mask = RegionMask::from_fn(4, 2, |r, c| r == 0 && c < 2).unwrap();
        let score = entangled_paired(&img, &img, &mask, &MetricWeights::default()).unwrap();
        let sim = score.similarity.unwrap();
        assert_eq!(sim.s_inner, 0.0);
        assert_eq!(sim.combined, 0.0);
        assert_eq!(score.value, 0.0);
    }

    #[test]
    fn degenerate_masks_are_rejected() {
        let img = gray(2, &[0.1, 0.2]);
        let none = RegionMask::filled(2, 1, false).unwrap();
        let all = RegionMask::filled(2, 1, true).unwrap();
        let w = MetricWeights::default();
        assert!(matches!(
            entangled_paired(&img, &img, &none, &w),
            Err(Error::DegenerateMask(Region::Inner))
        ));
        assert!(matches!(
            entangled_single(&img, &all, EPS),
            Err(Error::DegenerateMask(Region::Outer))
        ));
        let other = RegionMask::filled(1, 2, true).unwrap();
        assert!(matches!(
            entangled_single(&img, &other, EPS),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_flat_regions() {
        // inner constant 0.9, outer constant 0.1
        let img = gray(4, &[0.9, 0.9, 0.1, 0.1]);
        let mask = RegionMask::new(4, 1, vec![true, true, false, false]).unwrap();
        let s = entangled_single(&img, &mask, EPS).unwrap();
        assert!((s.consistency.m - 0.21951).abs() < 1e-5);
        assert_eq!(s.consistency.v, 0.0);
        assert_eq!(s.value, 0.0);
        assert_eq!(s.mode, ScoreMode::Single);
        assert!(s.similarity.is_none());
        assert_eq!(s.weights.alpha(), 0.0);
    }

    #[test]
    fn single_matches_paired_consistency() {
        let x = gray(3, &[0.1, 0.5, 0.9, 0.2, 0.4, 0.6]);
        let y = gray(3, &[0.3, 0.5, 0.1, 0.8, 0.4, 0.2]);
        let mask = RegionMask::from_fn(3, 2, |r, c| r == c).unwrap();
        let single = entangled_single(&y, &mask, EPS).unwrap();
        let paired = entangled_paired(&x, &y, &mask, &MetricWeights::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(single.consistency, paired.consistency);
        assert_eq!(single.value, paired.value);
    }

    #[test]
    fn consistency_source_switch() {
        let x = gray(2, &[0.2, 0.8]);
        let y = gray(2, &[0.5, 0.5]);
        let mask = RegionMask::new(2, 1, vec![true, false]).unwrap();
        let opts = MetricOptions {
            consistency_source: ConsistencySource::Original,
            ..Default::default()
        };
        let s = entangled_paired_with(&x, &y, &mask, &MetricWeights::default(), &opts).unwrap();
        assert_eq!(s.consistency.mu_inner, 0.2);
        assert_eq!(s.consistency.mu_outer, 0.8);
    }

    #[test]
    fn grayscale_mode_averages_channels() {
        let img = ImagePlane::from_fn(2, 1, 3, |_, c, ch| if c == 0 { [0.0, 0.3, 0.6][ch] } else { 0.9 }).unwrap();
        let mask = RegionMask::new(2, 1, vec![true, false]).unwrap();
        let opts = MetricOptions {
            grayscale: true,
            ..Default::default()
        };
        let s = entangled_single_with(&img, &mask, EPS, &opts).unwrap();
        assert!((s.consistency.mu_inner - 0.3).abs() < 1e-15);
    }

    #[test]
    fn mask_complement_swaps_stats() {
        let img = gray(3, &[0.1, 0.5, 0.9, 0.2, 0.4, 0.6]);
        let mask = RegionMask::from_fn(3, 2, |r, c| (r + c) % 2 == 0).unwrap();
        let a = entangled_single(&img, &mask, EPS).unwrap().consistency;
        let b = entangled_single(&img, &mask.complement(), EPS).unwrap().consistency;
        assert_eq!((a.mu_inner, a.sigma_inner), (b.mu_outer, b.sigma_outer));
        assert_eq!((a.mu_outer, a.sigma_outer), (b.mu_inner, b.sigma_inner));
        assert_eq!((a.m, a.v, a.c), (b.m, b.v, b.c));
    }
}
