//! Data-fidelity forces derived from intensity clusters.
//!
//! Cluster means come from a deterministic k-means, per-cell phase
//! probabilities from a softmax over `-|I - a_k| / (2 tau^2)`, and the force
//! of phase `k` is the negative log-odds `-log p_k + log(1 - p_k)`.

use log::warn;

use crate::error::{Error, Result};

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionForceConfig {
    pub k: usize,
    pub tau: f64,
    pub clamp_delta: f64,
}

impl Default for RegionForceConfig {
    fn default() -> Self {
        RegionForceConfig {
            k: 2,
            tau: 1.0,
            clamp_delta: 1e-6,
        }
    }
}

impl RegionForceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.k) {
            return Err(Error::validation("kmeans_k", format!("must be 2 or 3, got {}", self.k)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::validation("tau", "must be positive"));
        }
        if !(self.clamp_delta > 0.0 && self.clamp_delta < 0.5) {
            return Err(Error::validation("clamp_delta", "must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Sorted cluster means.
    pub means: Vec<f64>,
    pub iterations: usize,
    /// Set when a cluster ended up empty or two means coincide.
    pub degenerate: bool,
}

/// Lloyd's algorithm on scalar intensities, seeded at the quantiles
/// `(k + 1/2) / K`. Ties in assignment go to the lower cluster index.
pub fn kmeans_means(intensity: &[f64], k: usize) -> Result<KMeans> {
    if intensity.is_empty() {
        return Err(Error::validation("intensity", "empty image"));
    }
    if k == 0 {
        return Err(Error::validation("kmeans_k", "must be positive"));
    }
    let mut sorted = intensity.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut means: Vec<f64> = (0..k)
        .map(|c| {
            let q = (c as f64 + 0.5) / k as f64;
            sorted[((q * sorted.len() as f64) as usize).min(sorted.len() - 1)]
        })
        .collect();

    let mut empty = false;
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITERS {
        iterations += 1;
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for &v in intensity {
            let c = nearest(&means, v);
            sum[c] += v;
            count[c] += 1;
        }
        empty = count.contains(&0);
        let mut shift = 0.0f64;
        for c in 0..k {
            if count[c] > 0 {
                let m = sum[c] / count[c] as f64;
                shift = shift.max((m - means[c]).abs());
                means[c] = m;
            }
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    means.sort_by(f64::total_cmp);
    let degenerate = empty || means.windows(2).any(|w| (w[1] - w[0]).abs() <= 1e-12 * w[1].abs().max(1.0));
    if degenerate {
        warn!("k-means produced a degenerate clustering: means {means:?}");
    }
    Ok(KMeans {
        means,
        iterations,
        degenerate,
    })
}

fn nearest(means: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (c, m) in means.iter().enumerate().skip(1) {
        if (v - m).abs() < (v - means[best]).abs() {
            best = c;
        }
    }
    best
}

/// Unclamped softmax probabilities, one field per cluster mean.
pub fn probabilities(intensity: &[f64], means: &[f64], tau: f64) -> Result<Vec<Vec<f64>>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::validation("tau", "must be positive"));
    }
    let scale = 1.0 / (2.0 * tau * tau);
    let mut out = vec![Vec::with_capacity(intensity.len()); means.len()];
    let mut logits = vec![0.0; means.len()];
    for &v in intensity {
        for (l, a) in logits.iter_mut().zip(means) {
            *l = -(v - a).abs() * scale;
        }
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - top).exp()).sum();
        for (field, l) in out.iter_mut().zip(&logits) {
            field.push((l - top).exp() / z);
        }
    }
    Ok(out)
}

/// Negative log-odds of a probability clamped to `[delta, 1 - delta]`.
#[inline]
pub fn force(p: f64, delta: f64) -> f64 {
    let p = p.clamp(delta, 1.0 - delta);
    -p.ln() + (1.0 - p).ln()
}

pub fn forces(p: &[Vec<f64>], delta: f64) -> Vec<Vec<f64>> {
    p.iter()
        .map(|field| field.iter().map(|&v| force(v, delta)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionForceResult {
    pub means: Vec<f64>,
    pub forces: Vec<Vec<f64>>,
}

/// Forces for a given image with already-fixed cluster means.
pub fn region_forces(
    intensity: &[f64],
    means: &[f64],
    cfg: &RegionForceConfig,
) -> Result<RegionForceResult> {
    cfg.validate()?;
    let p = probabilities(intensity, means, cfg.tau)?;
    Ok(RegionForceResult {
        means: means.to_vec(),
        forces: forces(&p, cfg.clamp_delta),
    })
}
