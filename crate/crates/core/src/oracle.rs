//! Reference implementation of the Entangled score.
//!
//! Deliberately naive: every quantity is computed by its defining formula
//! over explicitly collected region lists, one scalar loop at a time. It
//! shares no code with [`crate::metric`] and exists only so tests can check
//! the engine against it.

use crate::error::{Error, Region, Result};
use crate::imaging::{ImagePlane, RegionMask};
use crate::metric::{
    ConsistencyBreakdown, EntangledScore, MetricWeights, ScoreMode, SimilarityBreakdown,
};

pub fn oracle_entangled(
    original: &ImagePlane,
    unlearned: &ImagePlane,
    mask: &RegionMask,
    weights: &MetricWeights,
) -> Result<EntangledScore> {
    if original.width() != mask.width()
        || original.height() != mask.height()
        || unlearned.width() != mask.width()
        || unlearned.height() != mask.height()
        || original.channels() != unlearned.channels()
    {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", mask.width(), mask.height()),
            found: format!("{}x{}", unlearned.width(), unlearned.height()),
        });
    }

    let channels = original.channels();
    let mut x_inner = Vec::new();
    let mut y_inner = Vec::new();
    let mut x_outer = Vec::new();
    let mut y_outer = Vec::new();
    for row in 0..mask.height() {
        for col in 0..mask.width() {
            for ch in 0..channels {
                let x = original.pixel(row, col)[ch];
                let y = unlearned.pixel(row, col)[ch];
                if mask.get(row, col) {
                    x_inner.push(x);
                    y_inner.push(y);
                } else {
                    x_outer.push(x);
                    y_outer.push(y);
                }
            }
        }
    }
    if x_inner.is_empty() {
        return Err(Error::DegenerateMask(Region::Inner));
    }
    if x_outer.is_empty() {
        return Err(Error::DegenerateMask(Region::Outer));
    }
    let eps = weights.epsilon();

    let s_inner = rmse(&x_inner, &y_inner);
    let s_outer = rmse(&x_outer, &y_outer);
    let s = 2.0 * s_inner * (1.0 - s_outer) / (s_inner + (1.0 - s_outer) + eps);

    let mu_inner = mean(&y_inner);
    let mu_outer = mean(&y_outer);
    let sigma_inner = std_dev(&y_inner, mu_inner);
    let sigma_outer = std_dev(&y_outer, mu_outer);
    let m = 2.0 * mu_inner * mu_outer / (mu_inner.powi(2) + mu_outer.powi(2) + eps);
    let v = 2.0 * sigma_inner * sigma_outer / (sigma_inner.powi(2) + sigma_outer.powi(2) + eps);
    let c = m * v;

    let alpha = weights.alpha();
    let beta = weights.beta();
    let mut degenerate = false;
    let value = if beta == 0.0 {
        (alpha + beta) / (alpha / s)
    } else if alpha == 0.0 {
        (alpha + beta) / (beta / c)
    } else if alpha * c + beta * s < eps {
        degenerate = true;
        0.0
    } else {
        (alpha + beta) / (alpha / s + beta / c)
    };

    Ok(EntangledScore {
        similarity: Some(SimilarityBreakdown {
            s_inner,
            s_outer,
            combined: s,
        }),
        consistency: ConsistencyBreakdown {
            mu_inner,
            mu_outer,
            sigma_inner,
            sigma_outer,
            m,
            v,
            c,
        },
        weights: *weights,
        value,
        mode: ScoreMode::Paired,
        degenerate,
    })
}

fn rmse(x: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..x.len() {
        total += (x[k] - y[k]).powi(2);
    }
    (total / x.len() as f64).sqrt()
}

fn mean(x: &[f64]) -> f64 {
    let mut total = 0.0;
    for v in x {
        total += v;
    }
    total / x.len() as f64
}

fn std_dev(x: &[f64], mu: f64) -> f64 {
    let mut total = 0.0;
    for v in x {
        total += (v - mu).powi(2);
    }
    (total / x.len() as f64).sqrt()
}
