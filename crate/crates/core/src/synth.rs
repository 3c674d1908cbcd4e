//! Synthetic populations, scores and fundus-like images with known ground
//! truth.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grading::{Eye, Field, GradeRecord, PimecGrade, PircGrade};
use crate::metrics::ScoreSet;
use crate::preprocess::RasterImage;
use crate::special::normal_quantile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{0}")]
    Range(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

fn range<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::Range(msg.into()))
}

/// Binormal separation giving the requested AUC: sqrt(2) * z(auc).
pub fn binormal_mu(target_auc: f64) -> Result<f64, SynthError> {
    if !(0.5..1.0).contains(&target_auc) {
        return range(format!("target AUC {target_auc} outside [0.5, 1)"));
    }
    Ok(std::f64::consts::SQRT_2 * normal_quantile(target_auc).max(0.0))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinormalSpec {
    pub n_pos: usize,
    pub n_neg: usize,
    pub target_auc: f64,
    pub seed: u64,
}

/// Scores for the given labels: negatives N(0,1), positives N(mu,1), both
/// squashed by a logistic centered between the two means.
pub fn binormal_scores(labels: &[bool], target_auc: f64, seed: u64) -> Result<Vec<f64>, SynthError> {
    let mu = binormal_mu(target_auc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(labels
        .iter()
        .map(|&pos| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let shift = if pos { mu } else { 0.0 };
            logistic(z + shift - mu / 2.0)
        })
        .collect())
}

/// `n_pos` positives followed by `n_neg` negatives with binormal scores.
pub fn gen_binary_scores(spec: &BinormalSpec) -> Result<(Vec<bool>, Vec<f64>), SynthError> {
    let labels: Vec<bool> = std::iter::repeat_n(true, spec.n_pos)
        .chain(std::iter::repeat_n(false, spec.n_neg))
        .collect();
    let scores = binormal_scores(&labels, spec.target_auc, spec.seed)?;
    Ok((labels, scores))
}

/// Two-class score set `[1 - p, p]` keyed by image id.
pub fn binormal_score_set(items: &[(String, bool)], target_auc: f64, seed: u64) -> Result<ScoreSet, SynthError> {
    let labels: Vec<bool> = items.iter().map(|(_, l)| *l).collect();
    let scores = binormal_scores(&labels, target_auc, seed)?;
    let mut set = ScoreSet::new(2);
    for ((id, _), p) in items.iter().zip(scores) {
        set.insert(id.clone(), vec![1.0 - p, p])
            .map_err(|e| SynthError::Range(e.to_string()))?;
    }
    Ok(set)
}

/// Probability vectors from a latent ordinal model: logit_j = -(q (y - j) + z)^2
/// with z ~ N(0,1). Quality 0 gives uniform vectors.
pub fn gen_ordinal_scores(
    items: &[(String, usize)],
    k: usize,
    quality: f64,
    seed: u64,
) -> Result<ScoreSet, SynthError> {
    if k < 2 {
        return range(format!("need at least 2 classes, got {k}"));
    }
    if !(quality >= 0.0 && quality.is_finite()) {
        return range(format!("quality {quality} must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ScoreSet::new(k);
    for (id, label) in items {
        if *label >= k {
            return range(format!("label {label} of {id:?} outside 0..{k}"));
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        let logits: Vec<f64> = (0..k)
            .map(|j| {
                let d = quality * (*label as f64 - j as f64) + z;
                -d * d
            })
            .collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let sum: f64 = exps.iter().sum();
        set.insert(id.clone(), exps.iter().map(|e| e / sum).collect())
            .map_err(|e| SynthError::Range(e.to_string()))?;
    }
    Ok(set)
}

/// Whole-dataset image counts per grade, over gradable images.
pub const TABLE1_PIRC_IMAGES: [u64; 5] = [15962, 4043, 13130, 2087, 408];
pub const TABLE1_PIMEC_IMAGES: [u64; 4] = [30094, 2233, 2226, 1077];
pub const TABLE1_GRADABLE_IMAGES: u64 = 35630;
pub const TABLE1_ALL_IMAGES: u64 = 41122;
pub const TABLE1_PATIENTS: usize = 14624;

/// Chance that a non-anchor image repeats its patient's worst grade.
pub const STRATUM_REPEAT: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_patients: usize,
    /// 1 to 4; images are taken from (L, fovea), (L, optic disc), (R, fovea), (R, optic disc).
    pub images_per_patient: usize,
    pub pirc_strata: Vec<f64>,
    pub pimec_strata: Vec<f64>,
    pub gradable_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Table1Rdr,
    Table1Pirc,
    Table1Pimec,
    Table1Rdme,
    Table1Qrdr,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Table1Rdr,
        Preset::Table1Pirc,
        Preset::Table1Pimec,
        Preset::Table1Rdme,
        Preset::Table1Qrdr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Table1Rdr => "table1-rdr",
            Preset::Table1Pirc => "table1-pirc",
            Preset::Table1Pimec => "table1-pimec",
            Preset::Table1Rdme => "table1-rdme",
            Preset::Table1Qrdr => "table1-qrdr",
        }
    }
}

impl FromStr for Preset {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| SynthError::UnknownPreset(s.to_string()))
    }
}

/// Patient-stratum probabilities whose expected image marginals equal
/// `image_counts` under the generator's per-patient model.
///
/// Within stratum s an image has grade s with weight `a + (1 - a) q` and
/// each lower grade with weight `(1 - a)(1 - q) / s`, where `a` is the
/// anchor image's share of the patient's gradable images. The system is
/// upper triangular and is solved from the top grade down.
pub fn solve_strata(
    image_counts: &[u64],
    images_per_patient: usize,
    gradable_rate: f64,
) -> Result<Vec<f64>, SynthError> {
    let total: u64 = image_counts.iter().sum();
    if total == 0 {
        return range("image counts are all zero");
    }
    let m: Vec<f64> = image_counts.iter().map(|&c| c as f64 / total as f64).collect();
    let a = anchor_share(images_per_patient, gradable_rate)?;
    let q = STRATUM_REPEAT;
    let k = m.len();
    let mut pi = vec![0.0; k];
    for g in (0..k).rev() {
        let lower: f64 = (g + 1..k).map(|s| pi[s] * (1.0 - a) * (1.0 - q) / s as f64).sum();
        let own = if g == 0 { 1.0 } else { a + (1.0 - a) * q };
        pi[g] = (m[g] - lower) / own;
        if pi[g] < 0.0 {
            return range(format!("marginals unreachable: grade {g} would need weight {}", pi[g]));
        }
    }
    let sum: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|p| p / sum).collect())
}

// Expected share of a patient's gradable images taken by the always-gradable anchor.
fn anchor_share(n: usize, gradable_rate: f64) -> Result<f64, SynthError> {
    let u = non_anchor_ungradable(n, gradable_rate)?;
    Ok(1.0 / (1.0 + (n - 1) as f64 * (1.0 - u)))
}

fn non_anchor_ungradable(n: usize, gradable_rate: f64) -> Result<f64, SynthError> {
    if !(1..=4).contains(&n) {
        return range(format!("images per patient {n} outside 1..=4"));
    }
    if !(gradable_rate > 0.0 && gradable_rate <= 1.0) {
        return range(format!("gradable rate {gradable_rate} outside (0, 1]"));
    }
    if n == 1 {
        return if gradable_rate < 1.0 {
            range("a single image per patient is always gradable")
        } else {
            Ok(0.0)
        };
    }
    let u = (1.0 - gradable_rate) * n as f64 / (n - 1) as f64;
    if u > 1.0 {
        return range(format!("gradable rate {gradable_rate} too low for {n} images"));
    }
    Ok(u)
}

impl PopulationSpec {
    pub fn preset(preset: Preset, n_patients: usize, seed: u64) -> Self {
        let gradable_rate = match preset {
            Preset::Table1Qrdr => TABLE1_GRADABLE_IMAGES as f64 / TABLE1_ALL_IMAGES as f64,
            _ => 1.0,
        };
        let n = 4;
        Self {
            n_patients,
            images_per_patient: n,
            pirc_strata: solve_strata(&TABLE1_PIRC_IMAGES, n, gradable_rate).expect("preset"),
            pimec_strata: solve_strata(&TABLE1_PIMEC_IMAGES, n, gradable_rate).expect("preset"),
            gradable_rate,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_patients == 0 {
            return range("n_patients must be at least 1");
        }
        non_anchor_ungradable(self.images_per_patient, self.gradable_rate)?;
        for (name, probs, k) in [
            ("pirc", &self.pirc_strata, 5),
            ("pimec", &self.pimec_strata, 4),
        ] {
            if probs.len() != k {
                return range(format!("{name} strata need {k} probabilities"));
            }
            if probs.iter().any(|p| !(*p >= 0.0)) {
                return range(format!("{name} strata must be nonnegative"));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return range(format!("{name} strata sum to {sum}"));
            }
        }
        Ok(())
    }
}

const SLOTS: [(Eye, Field); 4] = [
    (Eye::Left, Field::Fovea),
    (Eye::Left, Field::OpticDisc),
    (Eye::Right, Field::Fovea),
    (Eye::Right, Field::OpticDisc),
];

fn draw_class(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn draw_grade(stratum: usize, rng: &mut ChaCha8Rng) -> usize {
    if stratum == 0 || rng.random::<f64>() < STRATUM_REPEAT {
        stratum
    } else {
        rng.random_range(0..stratum)
    }
}

/// Manifest records for a synthetic population.
///
/// Each patient draws independent worst PIRC and PIMEC grades. One random
/// anchor image is gradable and carries both worst grades; the others are
/// ungradable with the rate needed to hit `gradable_rate` overall, and
/// otherwise repeat the worst grade or fall uniformly below it. Patient `i`
/// uses its own RNG stream, so the output is a pure function of `spec`.
pub fn gen_population(spec: &PopulationSpec) -> Result<Vec<GradeRecord>, SynthError> {
    spec.validate()?;
    let n = spec.images_per_patient;
    let u = non_anchor_ungradable(n, spec.gradable_rate)?;
    let mut out = Vec::with_capacity(spec.n_patients * n);
    for p in 0..spec.n_patients {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(p as u64);
        let pirc_stratum = draw_class(&spec.pirc_strata, &mut rng);
        let pimec_stratum = draw_class(&spec.pimec_strata, &mut rng);
        let anchor = rng.random_range(0..n);
        let patient_id = format!("P{:05}", p + 1);
        for (slot, (eye, field)) in SLOTS.iter().take(n).enumerate() {
            let image_id = format!("{patient_id}-{}-{}", eye.as_str(), field.as_str());
            let (pirc, pimec) = if slot == anchor {
                (pirc_stratum, pimec_stratum)
            } else {
                if rng.random::<f64>() < u {
                    out.push(GradeRecord::ungradable(image_id, patient_id.clone(), *eye, *field));
                    continue;
                }
                (draw_grade(pirc_stratum, &mut rng), draw_grade(pimec_stratum, &mut rng))
            };
            out.push(GradeRecord::gradable(
                image_id,
                patient_id.clone(),
                *eye,
                *field,
                PircGrade::new(pirc as u8).expect("stratum below 5"),
                PimecGrade::new(pimec as u8).expect("stratum below 4"),
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundusSpec {
    pub width: u32,
    pub height: u32,
    pub radius: f64,
    pub annotation: bool,
    pub seed: u64,
}

/// Fundus-like test image: black frame, textured bright disk centered in the
/// frame, and optionally a bright text-like block in the top-left corner
/// outside the disk's bounding square.
pub fn gen_fundus_image(spec: &FundusSpec) -> Result<RasterImage, SynthError> {
    let (w, h) = (spec.width, spec.height);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let r = spec.radius;
    if !(r >= 8.0) || 2.0 * r > w.min(h) as f64 {
        return range(format!("disk radius {r} does not fit a {w}x{h} frame"));
    }
    let mut img = RasterImage::filled(w, h, [0, 0, 0]).map_err(|e| SynthError::Range(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = [
        rng.random_range(150..210u8),
        rng.random_range(60..110u8),
        rng.random_range(20..50u8),
    ];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let d2 = dx * dx + dy * dy;
            if d2 > r * r {
                continue;
            }
            // Darker toward the rim, with per-pixel grain.
            let shade = 1.0 - 0.25 * d2 / (r * r);
            let grain: f64 = rng.random_range(-12.0..12.0);
            let px = base.map(|c| (c as f64 * shade + grain).clamp(40.0, 255.0) as u8);
            img.put_pixel(x, y, px);
        }
    }
    if spec.annotation {
        let margin = (cx - r).floor() as i64 - 4;
        if margin < 8 {
            return range(format!("no room for an annotation left of a radius {r} disk in width {w}"));
        }
        let bw = margin.min(120) as u32;
        let bh = (h / 10).clamp(6, 40);
        for y in 2..2 + bh {
            for x in 2..bw {
                // Glyph-like vertical strokes.
                if (x / 3) % 3 != 2 {
                    img.put_pixel(x, y, [255, 255, 255]);
                }
            }
        }
    }
    Ok(img)
}
