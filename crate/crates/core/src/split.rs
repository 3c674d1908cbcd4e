//! Patient-exclusive, grade-stratified train/tune/validation splitting and the
//! per-set class distribution table.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grading::{GradingSystem, LabeledRecord};

/// Classes whose stratum holds fewer patients are not held to the tolerance.
pub const MIN_STRATUM_PATIENTS: usize = 20;
pub const MAX_REPAIR_MOVES: usize = 1000;
pub const FRACTION_SLACK: f64 = 0.02;
const REPAIR_CANDIDATES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("patient has no records")]
    EmptyPatient,
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("records mix grading systems {0} and {1}")]
    MixedSystems(GradingSystem, GradingSystem),
    #[error("duplicate image_id {0:?}")]
    DuplicateImage(String),
    #[error("patient {patient:?} appears under image ids of another patient")]
    InconsistentPatient { patient: String },
    #[error("per-class deviation {best_deviation:.4} exceeds tolerance {tolerance} after repair")]
    InfeasibleSplit { best_deviation: f64, tolerance: f64 },
    #[error("image {0:?} has no set assignment")]
    UnassignedRecord(String),
    #[error("split file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Set {
    Train,
    Tune,
    Validation,
}

impl Set {
    pub const ALL: [Set; 3] = [Set::Train, Set::Tune, Set::Validation];

    pub fn as_str(self) -> &'static str {
        match self {
            Set::Train => "train",
            Set::Tune => "tune",
            Set::Validation => "validation",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Set {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Set {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Set::Train),
            "tune" => Ok(Set::Tune),
            "validation" => Ok(Set::Validation),
            other => Err(SplitError::Format(format!("unknown set {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            fractions: [0.7, 0.1, 0.2],
            seed: 0,
            tolerance: 0.015,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        if self.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(SplitError::InvalidSpec(format!(
                "fractions {:?} must each lie in (0, 1)",
                self.fractions
            )));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SplitError::InvalidSpec(format!("fractions sum to {sum}")));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 0.1) {
            return Err(SplitError::InvalidSpec(format!(
                "tolerance {} outside (0, 0.1]",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSummary {
    pub patients: u64,
    pub images: u64,
    pub class_counts: Vec<u64>,
}

impl SetSummary {
    fn zeros(k: usize) -> Self {
        Self {
            patients: 0,
            images: 0,
            class_counts: vec![0; k],
        }
    }

    /// Share of this set's images in `class`, in tenths of a percent,
    /// rounded half up.
    pub fn class_permille(&self, class: usize) -> u64 {
        permille(self.class_counts[class], self.images)
    }
}

/// `count / total` in tenths of a percent, rounded half up; 0 for an empty total.
pub fn permille(count: u64, total: u64) -> u64 {
    if total == 0 {
        return 0;
    }
    (2000 * count as u128 + total as u128).div_euclid(2 * total as u128) as u64
}

fn format_permille(p: u64) -> String {
    format!("{}.{}", p / 10, p % 10)
}

/// Per-set patient, image and per-class image counts, laid out like the
/// dataset summary tables: one column per set, one row per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub system: GradingSystem,
    pub class_names: Vec<String>,
    pub train: SetSummary,
    pub tune: SetSummary,
    pub validation: SetSummary,
}

impl DistributionTable {
    pub fn set(&self, set: Set) -> &SetSummary {
        match set {
            Set::Train => &self.train,
            Set::Tune => &self.tune,
            Set::Validation => &self.validation,
        }
    }

    fn set_mut(&mut self, set: Set) -> &mut SetSummary {
        match set {
            Set::Train => &mut self.train,
            Set::Tune => &mut self.tune,
            Set::Validation => &mut self.validation,
        }
    }

    pub fn total_images(&self) -> u64 {
        Set::ALL.iter().map(|&s| self.set(s).images).sum()
    }

    /// Image share of each set in tenths of a percent.
    pub fn image_permille(&self, set: Set) -> u64 {
        permille(self.set(set).images, self.total_images())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record([
            "row",
            "train",
            "train_pct",
            "tune",
            "tune_pct",
            "validation",
            "validation_pct",
        ])?;
        let total = self.total_images();
        let mut patients = vec!["patients".to_string()];
        let mut images = vec!["images".to_string()];
        for s in Set::ALL {
            let sum = self.set(s);
            patients.extend([sum.patients.to_string(), String::new()]);
            images.extend([
                sum.images.to_string(),
                format_permille(permille(sum.images, total)),
            ]);
        }
        csv.write_record(&patients)?;
        csv.write_record(&images)?;
        for (c, name) in self.class_names.iter().enumerate() {
            let mut row = vec![name.clone()];
            for s in Set::ALL {
                let sum = self.set(s);
                row.extend([
                    sum.class_counts[c].to_string(),
                    format_permille(sum.class_permille(c)),
                ]);
            }
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Aligned plain-text rendering, `count (pct)` per cell.
    pub fn to_text(&self) -> String {
        let total = self.total_images();
        let mut rows: Vec<[String; 4]> = vec![[
            self.system.label().to_string(),
            "Train".into(),
            "Tune".into(),
            "Validation".into(),
        ]];
        let cell = |count: u64, p: Option<u64>| match p {
            Some(p) => format!("{count} ({})", format_permille(p)),
            None => count.to_string(),
        };
        rows.push([
            "Patients".into(),
            cell(self.train.patients, None),
            cell(self.tune.patients, None),
            cell(self.validation.patients, None),
        ]);
        rows.push([
            "Images".into(),
            cell(self.train.images, Some(permille(self.train.images, total))),
            cell(self.tune.images, Some(permille(self.tune.images, total))),
            cell(self.validation.images, Some(permille(self.validation.images, total))),
        ]);
        for (c, name) in self.class_names.iter().enumerate() {
            let f = |s: &SetSummary| cell(s.class_counts[c], Some(s.class_permille(c)));
            rows.push([
                name.clone(),
                f(&self.train),
                f(&self.tune),
                f(&self.validation),
            ]);
        }
        let widths: Vec<usize> = (0..4)
            .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let mut line = format!("{:<w$}", row[0], w = widths[0]);
            for i in 1..4 {
                line.push_str(&format!("  {:>w$}", row[i], w = widths[i]));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub system: GradingSystem,
    pub seed: u64,
    pub sets: BTreeMap<String, Set>,
    pub distribution: DistributionTable,
}

impl SplitAssignment {
    pub fn get(&self, image_id: &str) -> Option<Set> {
        self.sets.get(image_id).copied()
    }
}

/// Largest class index among one patient's records.
pub fn patient_stratum(records: &[LabeledRecord]) -> Result<usize, SplitError> {
    let first = records.first().ok_or(SplitError::EmptyPatient)?;
    if let Some(other) = records
        .iter()
        .find(|r| r.record.patient_id != first.record.patient_id)
    {
        return Err(SplitError::InconsistentPatient {
            patient: other.record.patient_id.clone(),
        });
    }
    Ok(records.iter().map(|r| r.label.index()).max().unwrap_or(0))
}

struct Patient {
    stratum: usize,
    images: u64,
    class_counts: Vec<u64>,
    image_ids: Vec<String>,
}

struct State<'a> {
    fractions: [f64; 3],
    tracked: Vec<usize>,
    patients: &'a [Patient],
    set_of: Vec<usize>,
    images: [u64; 3],
    counts: [Vec<u64>; 3],
}

impl State<'_> {
    fn place(&mut self, p: usize, set: usize) {
        let pat = &self.patients[p];
        self.set_of[p] = set;
        self.images[set] += pat.images;
        for (c, n) in pat.class_counts.iter().enumerate() {
            self.counts[set][c] += n;
        }
    }

    fn remove(&mut self, p: usize) {
        let pat = &self.patients[p];
        let set = self.set_of[p];
        self.images[set] -= pat.images;
        for (c, n) in pat.class_counts.iter().enumerate() {
            self.counts[set][c] -= n;
        }
    }

    // Worst pairwise per-class proportion gap over nonempty sets, with the
    // class and the (high, low) sets attaining it.
    fn deviation(&self) -> (f64, usize, usize, usize) {
        let mut worst = (0.0, 0, 0, 0);
        for &c in &self.tracked {
            let props: Vec<(usize, f64)> = (0..3)
                .filter(|&s| self.images[s] > 0)
                .map(|s| (s, self.counts[s][c] as f64 / self.images[s] as f64))
                .collect();
            let Some(hi) = props.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)) else {
                continue;
            };
            let lo = props.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            if hi.1 - lo.1 > worst.0 {
                worst = (hi.1 - lo.1, c, hi.0, lo.0);
            }
        }
        worst
    }

    fn fractions_ok(&self) -> bool {
        let total: u64 = self.images.iter().sum();
        (0..3).all(|s| {
            (self.images[s] as f64 / total as f64 - self.fractions[s]).abs() <= FRACTION_SLACK
        })
    }

    fn swap(&mut self, a: usize, b: usize) {
        let (sa, sb) = (self.set_of[a], self.set_of[b]);
        self.remove(a);
        self.remove(b);
        self.place(a, sb);
        self.place(b, sa);
    }
}

/// Assigns every record to train, tune or validation so that each patient's
/// images land in one set and per-class image proportions agree across sets.
///
/// Patients are stratified by their worst class, shuffled within stratum and
/// dealt greedily to the set furthest below its image quota. Patient swaps
/// between sets then reduce the largest per-class proportion gap.
pub fn split(records: &[LabeledRecord], spec: &SplitSpec) -> Result<SplitAssignment, SplitError> {
    spec.validate()?;
    let system = match records.first() {
        Some(r) => r.label.system(),
        None => {
            return Err(SplitError::InvalidSpec("no records to split".into()));
        }
    };
    if let Some(r) = records.iter().find(|r| r.label.system() != system) {
        return Err(SplitError::MixedSystems(system, r.label.system()));
    }
    let k = system.num_classes();

    let mut by_patient: BTreeMap<&str, Vec<&LabeledRecord>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if !seen.insert(r.record.image_id.as_str()) {
            return Err(SplitError::DuplicateImage(r.record.image_id.clone()));
        }
        by_patient.entry(&r.record.patient_id).or_default().push(r);
    }
    let patients: Vec<Patient> = by_patient
        .values()
        .map(|recs| {
            let mut class_counts = vec![0u64; k];
            for r in recs {
                class_counts[r.label.index()] += 1;
            }
            let mut image_ids: Vec<String> =
                recs.iter().map(|r| r.record.image_id.clone()).collect();
            image_ids.sort();
            Patient {
                stratum: recs.iter().map(|r| r.label.index()).max().unwrap_or(0),
                images: recs.len() as u64,
                class_counts,
                image_ids,
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, p) in patients.iter().enumerate() {
        strata[p.stratum].push(i);
    }
    for stratum in strata.iter_mut() {
        stratum.shuffle(&mut rng);
    }

    let tracked: Vec<usize> = (0..k)
        .filter(|&c| strata[c].len() >= MIN_STRATUM_PATIENTS)
        .collect();
    let mut state = State {
        fractions: spec.fractions,
        tracked,
        patients: &patients,
        set_of: vec![0; patients.len()],
        images: [0; 3],
        counts: [vec![0; k], vec![0; k], vec![0; k]],
    };

    // Severe strata first so their few patients are spread before the bulk.
    for stratum in strata.iter().rev() {
        let mut local = [0u64; 3];
        for &p in stratum {
            let n = patients[p].images;
            let after = (local.iter().sum::<u64>() + n) as f64;
            let set = (0..3)
                .max_by(|&a, &b| {
                    let da = spec.fractions[a] * after - local[a] as f64;
                    let db = spec.fractions[b] * after - local[b] as f64;
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .unwrap();
            local[set] += n;
            state.place(p, set);
        }
    }

    let mut dev = state.deviation();
    let mut moves = 0;
    while dev.0 > spec.tolerance && moves < MAX_REPAIR_MOVES {
        let (_, c, hi, lo) = dev;
        let rate = |p: &Patient| p.class_counts[c] as f64 / p.images as f64;
        let mut from: Vec<usize> = (0..patients.len())
            .filter(|&p| state.set_of[p] == hi && patients[p].class_counts[c] > 0)
            .collect();
        let mut to: Vec<usize> = (0..patients.len()).filter(|&p| state.set_of[p] == lo).collect();
        sample(&mut from, &mut rng);
        sample(&mut to, &mut rng);
        let fractions_were_ok = state.fractions_ok();
        let mut best: Option<(f64, usize, usize)> = None;
        for &a in &from {
            for &b in &to {
                if rate(&patients[b]) >= rate(&patients[a]) {
                    continue;
                }
                state.swap(a, b);
                let d = state.deviation().0;
                let ok = !fractions_were_ok || state.fractions_ok();
                state.swap(a, b);
                if ok && d < best.map_or(dev.0, |x| x.0) {
                    best = Some((d, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        state.swap(a, b);
        dev = state.deviation();
        moves += 1;
    }
    log::debug!("split: {moves} repair moves, deviation {:.5}", dev.0);
    if dev.0 > spec.tolerance {
        return Err(SplitError::InfeasibleSplit {
            best_deviation: dev.0,
            tolerance: spec.tolerance,
        });
    }

    let mut sets = BTreeMap::new();
    for (p, pat) in patients.iter().enumerate() {
        for id in &pat.image_ids {
            sets.insert(id.clone(), Set::ALL[state.set_of[p]]);
        }
    }
    let mut assignment = SplitAssignment {
        system,
        seed: spec.seed,
        sets,
        distribution: empty_table(system),
    };
    assignment.distribution = split_table(&assignment, records)?;
    Ok(assignment)
}

fn sample(items: &mut Vec<usize>, rng: &mut ChaCha8Rng) {
    if items.len() > REPAIR_CANDIDATES {
        for i in 0..REPAIR_CANDIDATES {
            let j = rng.random_range(i..items.len());
            items.swap(i, j);
        }
        items.truncate(REPAIR_CANDIDATES);
    }
}

fn empty_table(system: GradingSystem) -> DistributionTable {
    let k = system.num_classes();
    DistributionTable {
        system,
        class_names: system.class_names().iter().map(|s| s.to_string()).collect(),
        train: SetSummary::zeros(k),
        tune: SetSummary::zeros(k),
        validation: SetSummary::zeros(k),
    }
}

/// Counts patients, images and per-class images in each set.
pub fn split_table(
    assignment: &SplitAssignment,
    records: &[LabeledRecord],
) -> Result<DistributionTable, SplitError> {
    let mut table = empty_table(assignment.system);
    let mut patients: [std::collections::BTreeSet<&str>; 3] = Default::default();
    for r in records {
        let set = assignment
            .get(&r.record.image_id)
            .ok_or_else(|| SplitError::UnassignedRecord(r.record.image_id.clone()))?;
        patients[set.index()].insert(&r.record.patient_id);
        let sum = table.set_mut(set);
        sum.images += 1;
        sum.class_counts[r.label.index()] += 1;
    }
    for s in Set::ALL {
        table.set_mut(s).patients = patients[s.index()].len() as u64;
    }
    Ok(table)
}

pub fn write_split<W: Write>(writer: W, sets: &BTreeMap<String, Set>) -> csv::Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["image_id", "set"])?;
    for (id, set) in sets {
        csv.write_record([id.as_str(), set.as_str()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_split<R: Read>(reader: R) -> Result<BTreeMap<String, Set>, SplitError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers().map_err(|e| SplitError::Format(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["image_id", "set"] {
        return Err(SplitError::Format(format!(
            "expected header image_id,set, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut sets = BTreeMap::new();
    for row in csv.records() {
        let row = row.map_err(|e| SplitError::Format(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let set: Set = row[1]
            .parse()
            .map_err(|e: SplitError| SplitError::Format(format!("line {line}: {e}")))?;
        if sets.insert(row[0].to_string(), set).is_some() {
            return Err(SplitError::Format(format!(
                "line {line}: duplicate image_id {:?}",
                &row[0]
            )));
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::{ClassLabel, Eye, Field, GradeRecord, PimecGrade, PircGrade};
    use proptest::prelude::*;

    fn rec(patient: &str, image: &str, class: usize) -> LabeledRecord {
        let pirc = if class == 1 { 2 } else { 0 };
        LabeledRecord {
            record: GradeRecord::gradable(
                image,
                patient,
                Eye::Left,
                Field::Fovea,
                PircGrade::new(pirc).unwrap(),
                PimecGrade::new(0).unwrap(),
            ),
            label: ClassLabel::new(GradingSystem::Rdr, class).unwrap(),
        }
    }

    fn population(n: usize, positive_every: usize) -> Vec<LabeledRecord> {
        let mut out = Vec::new();
        for p in 0..n {
            let sick = p % positive_every == 0;
            for i in 0..4 {
                let class = usize::from(sick && i < 3);
                out.push(rec(&format!("P{p:04}"), &format!("P{p:04}-{i}"), class));
            }
        }
        out
    }

    #[test]
    fn stratum_is_max_class() {
        let pirc = |classes: &[usize]| {
            let recs: Vec<LabeledRecord> = classes
                .iter()
                .enumerate()
                .map(|(i, &c)| LabeledRecord {
                    label: ClassLabel::new(GradingSystem::Pirc, c).unwrap(),
                    ..rec("p", &format!("i{i}"), 0)
                })
                .collect();
            patient_stratum(&recs).unwrap()
        };
        assert_eq!(pirc(&[0, 0]), 0);
        assert_eq!(pirc(&[0, 2, 1]), 2);
        assert_eq!(pirc(&[4]), 4);
        assert_eq!(patient_stratum(&[]), Err(SplitError::EmptyPatient));
    }

    #[test]
    fn single_patient_goes_to_train() {
        let recs = vec![rec("a", "a1", 1), rec("a", "a2", 0)];
        let out = split(&recs, &SplitSpec::default()).unwrap();
        assert!(out.sets.values().all(|&s| s == Set::Train));
        assert_eq!(out.distribution.tune.images, 0);
        assert_eq!(out.distribution.validation.images, 0);
    }

    #[test]
    fn balanced_population() {
        let recs = population(2000, 3);
        let out = split(&recs, &SplitSpec::with_seed(7)).unwrap();
        let t = &out.distribution;
        assert_eq!(t.total_images(), 8000);
        for (s, want) in Set::ALL.iter().zip([700, 100, 200]) {
            assert!((t.image_permille(*s) as i64 - want).abs() <= 10);
        }
        let props: Vec<f64> = Set::ALL
            .iter()
            .map(|&s| t.set(s).class_counts[1] as f64 / t.set(s).images as f64)
            .collect();
        let spread = props.iter().cloned().fold(f64::MIN, f64::max)
            - props.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 0.015, "{props:?}");
    }

    #[test]
    fn deterministic_and_order_independent() {
        let recs = population(300, 4);
        let a = split(&recs, &SplitSpec::with_seed(42)).unwrap();
        let mut rev = recs.clone();
        rev.reverse();
        let b = split(&rev, &SplitSpec::with_seed(42)).unwrap();
        assert_eq!(a, b);
        let c = split(&recs, &SplitSpec::with_seed(43)).unwrap();
        assert_ne!(a.sets, c.sets);
    }

    #[test]
    fn table_counts_and_rounding() {
        let recs: Vec<LabeledRecord> = (0..10).map(|i| rec(&format!("p{i}"), &format!("i{i}"), 0)).collect();
        let sets: BTreeMap<String, Set> = (0..10)
            .map(|i| {
                let s = match i {
                    0..=6 => Set::Train,
                    7 => Set::Tune,
                    _ => Set::Validation,
                };
                (format!("i{i}"), s)
            })
            .collect();
        let assignment = SplitAssignment {
            system: GradingSystem::Rdr,
            seed: 0,
            sets,
            distribution: empty_table(GradingSystem::Rdr),
        };
        let t = split_table(&assignment, &recs).unwrap();
        assert_eq!([t.train.images, t.tune.images, t.validation.images], [7, 1, 2]);
        assert_eq!(Set::ALL.map(|s| t.image_permille(s)), [700, 100, 200]);
        let text = t.to_text();
        assert!(text.contains("7 (70.0)"));
        assert!(text.contains("2 (20.0)"));

        let mut missing = assignment.clone();
        missing.sets.remove("i3");
        assert_eq!(
            split_table(&missing, &recs),
            Err(SplitError::UnassignedRecord("i3".into()))
        );
    }

    #[test]
    fn empty_set_row_is_zero() {
        let t = empty_table(GradingSystem::Rdr);
        assert_eq!(t.validation.class_permille(1), 0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("images,0,0.0,0,0.0,0,0.0"));
    }

    #[test]
    fn permille_rounds_half_up() {
        assert_eq!(permille(10911, 24807), 440);
        assert_eq!(permille(1627, 3706), 439);
        assert_eq!(permille(3087, 7118), 434);
        assert_eq!(permille(1, 8), 125);
        assert_eq!(permille(1, 16), 63);
        assert_eq!(permille(1, 2000), 1);
        assert_eq!(permille(1, 2001), 0);
    }

    #[test]
    fn spec_validation() {
        assert!(SplitSpec { fractions: [0.7, 0.1, 0.1], ..Default::default() }.validate().is_err());
        assert!(SplitSpec { fractions: [1.0, 0.0, 0.0], ..Default::default() }.validate().is_err());
        assert!(SplitSpec { tolerance: 0.2, ..Default::default() }.validate().is_err());
        assert!(SplitSpec::default().validate().is_ok());
    }

    #[test]
    fn infeasible_split_reports_deviation() {
        // One positive patient holds almost every positive image, so the set
        // receiving it cannot match the others.
        let mut recs = Vec::new();
        for p in 0..20 {
            let n = if p == 0 { 400 } else { 1 };
            for i in 0..n {
                recs.push(rec(&format!("S{p}"), &format!("S{p}-{i}"), 1));
            }
        }
        for p in 0..200 {
            recs.push(rec(&format!("H{p}"), &format!("H{p}"), 0));
        }
        let spec = SplitSpec::default();
        match split(&recs, &spec) {
            Err(SplitError::InfeasibleSplit { best_deviation, .. }) => assert!(best_deviation > 0.015),
            other => panic!("expected InfeasibleSplit, got {:?}", other.map(|a| a.distribution)),
        }
    }

    #[test]
    fn split_csv_round_trip() {
        let out = split(&population(50, 2), &SplitSpec::default()).unwrap();
        let mut buf = Vec::new();
        write_split(&mut buf, &out.sets).unwrap();
        assert_eq!(read_split(buf.as_slice()).unwrap(), out.sets);
        assert!(read_split("image_id,set\na,test\n".as_bytes()).is_err());
        assert!(read_split("image,set\n".as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn patients_never_straddle_sets(
            sizes in proptest::collection::vec((1usize..6, 0usize..2), 3..80),
            seed in any::<u64>(),
        ) {
            let mut recs = Vec::new();
            for (p, &(n, sick)) in sizes.iter().enumerate() {
                for i in 0..n {
                    recs.push(rec(&format!("p{p}"), &format!("p{p}-{i}"), sick * usize::from(i == 0)));
                }
            }
            let spec = SplitSpec { seed, tolerance: 0.1, ..Default::default() };
            if let Ok(out) = split(&recs, &spec) {
                prop_assert_eq!(out.sets.len(), recs.len());
                let mut per_patient: BTreeMap<&str, Set> = BTreeMap::new();
                for r in &recs {
                    let s = out.sets[&r.record.image_id];
                    let prev = *per_patient.entry(&r.record.patient_id).or_insert(s);
                    prop_assert_eq!(prev, s);
                }
                let t = &out.distribution;
                prop_assert_eq!(t.total_images(), recs.len() as u64);
                for s in Set::ALL {
                    let sum = t.set(s);
                    prop_assert_eq!(sum.class_counts.iter().sum::<u64>(), sum.images);
                }
            }
        }
    }
}
