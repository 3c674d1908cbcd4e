//! Confidence intervals: exact binomial (Clopper-Pearson) and a patient-level
//! cluster bootstrap with BCa correction for the AUC.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::{check_scores, sweep_auc};
use super::MetricsError;
use crate::special::{beta_quantile, normal_cdf, normal_quantile};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_REPLICATES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    ClopperPearson,
    ClusterBootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn check_level(level: f64) -> Result<(), MetricsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::Range(format!("confidence level {level} not in (0, 1)")));
    }
    Ok(())
}

/// Exact binomial interval for `k` successes out of `n` trials.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> Result<Interval, MetricsError> {
    if n == 0 || k > n {
        return Err(MetricsError::Range(format!(
            "need 0 <= k <= n and n >= 1, got k={k} n={n}"
        )));
    }
    clopper_pearson_real(k as f64, n as f64, level)
}

/// Clopper-Pearson bounds through the beta-quantile form, which stays
/// defined for non-integer success counts (used when a proportion-like
/// statistic such as the AUC is treated as `auc * n` successes).
pub fn clopper_pearson_real(k: f64, n: f64, level: f64) -> Result<Interval, MetricsError> {
    check_level(level)?;
    if !(n > 0.0 && (0.0..=n).contains(&k)) {
        return Err(MetricsError::Range(format!(
            "need 0 <= k <= n and n > 0, got k={k} n={n}"
        )));
    }
    let alpha = 1.0 - level;
    let lo = if k == 0.0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, k, n - k + 1.0)
    };
    let hi = if k == n {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k)
    };
    Ok(Interval {
        lo,
        hi,
        level,
        method: CiMethod::ClopperPearson,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            level: DEFAULT_LEVEL,
        }
    }
}

type Cluster = Vec<(f64, bool)>;

fn cluster_items<G: AsRef<str>>(labels: &[bool], scores: &[f64], groups: &[G]) -> Vec<Cluster> {
    let mut by_group: BTreeMap<&str, Cluster> = BTreeMap::new();
    for ((&l, &s), g) in labels.iter().zip(scores).zip(groups) {
        by_group.entry(g.as_ref()).or_default().push((s, l));
    }
    by_group.into_values().collect()
}

// AUC of a multiset of clusters; None when a class is missing.
fn clusters_auc<'a>(clusters: impl Iterator<Item = &'a Cluster>) -> Option<f64> {
    let mut items: Vec<(f64, bool)> = clusters.flatten().copied().collect();
    let n_pos = items.iter().filter(|x| x.1).count() as u64;
    let n_neg = items.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    items.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    Some(sweep_auc(&items, n_pos, n_neg))
}

/// BCa interval for the AUC, resampling whole patients with replacement.
///
/// Replicate `r` draws from its own ChaCha stream `(seed, r)`, so the result
/// does not depend on how replicates are scheduled across threads. The
/// acceleration comes from a leave-one-patient-out jackknife.
pub fn cluster_bootstrap_auc<G: AsRef<str> + Sync>(
    labels: &[bool],
    scores: &[f64],
    groups: &[G],
    options: &BootstrapOptions,
) -> Result<Interval, MetricsError> {
    check_level(options.level)?;
    check_scores(labels, scores)?;
    if groups.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            scores: groups.len(),
        });
    }
    if options.replicates == 0 {
        return Err(MetricsError::Range("bootstrap needs at least 1 replicate".into()));
    }
    let clusters = cluster_items(labels, scores, groups);
    if clusters.len() < 2 {
        return Err(MetricsError::Range(format!(
            "cluster bootstrap needs at least 2 patients, got {}",
            clusters.len()
        )));
    }
    let estimate = clusters_auc(clusters.iter()).ok_or_else(|| {
        let n_pos = labels.iter().filter(|&&l| l).count() as u64;
        MetricsError::DegenerateClasses {
            class: None,
            n_pos,
            n_neg: labels.len() as u64 - n_pos,
        }
    })?;

    let n = clusters.len();
    let draws: Vec<Option<f64>> = (0..options.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(r as u64);
            let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            clusters_auc(picks.iter().map(|&i| &clusters[i]))
        })
        .collect();
    let mut replicates: Vec<f64> = draws.iter().flatten().copied().collect();
    let degenerate = draws.len() - replicates.len();
    if 2 * degenerate > draws.len() {
        return Err(MetricsError::DegenerateReplicates {
            degenerate,
            total: draws.len(),
        });
    }
    replicates.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));

    let b = replicates.len() as f64;
    let below = replicates.iter().filter(|&&x| x < estimate).count() as f64;
    let ties = replicates.iter().filter(|&&x| x == estimate).count() as f64;
    let p0 = ((below + 0.5 * ties) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let z0 = normal_quantile(p0);

    let jackknife: Vec<f64> = (0..n)
        .into_par_iter()
        .filter_map(|skip| {
            clusters_auc(
                clusters
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, c)| c),
            )
        })
        .collect();
    let accel = acceleration(&jackknife);

    let z_alpha = normal_quantile((1.0 - options.level) / 2.0);
    let adjusted = |z: f64| {
        let num = z0 + z;
        let den = 1.0 - accel * num;
        if den <= 0.0 {
            // Acceleration overwhelms the correction; pin to the far tail.
            if num < 0.0 {
                0.0
            } else {
                1.0
            }
        } else {
            normal_cdf(z0 + num / den)
        }
    };
    let lo = quantile(&replicates, adjusted(z_alpha));
    let hi = quantile(&replicates, adjusted(-z_alpha));
    Ok(Interval {
        lo: lo.clamp(0.0, 1.0),
        hi: hi.clamp(lo, 1.0),
        level: options.level,
        method: CiMethod::ClusterBootstrap,
    })
}

fn acceleration(jackknife: &[f64]) -> f64 {
    if jackknife.len() < 2 {
        return 0.0;
    }
    let mean = jackknife.iter().sum::<f64>() / jackknife.len() as f64;
    let (mut s2, mut s3) = (0.0, 0.0);
    for &t in jackknife {
        let d = mean - t;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 == 0.0 {
        0.0
    } else {
        s3 / (6.0 * s2.powf(1.5))
    }
}

// Linear interpolation between order statistics; `sorted` is nonempty.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let i = h.floor() as usize;
    let frac = h - i as f64;
    if i + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}
