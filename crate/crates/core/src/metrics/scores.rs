//! Per-image class-probability vectors and their CSV form
//! (`image_id,p0,...,p{K-1}`).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::grading::Diagnostic;

pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    k: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl ScoreSet {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            entries: BTreeMap::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, probs: Vec<f64>) -> Result<(), MetricsError> {
        check_vector(&probs, self.k)?;
        self.entries.insert(image_id.into(), probs);
        Ok(())
    }

    pub fn get(&self, image_id: &str) -> Option<&[f64]> {
        self.entries.get(image_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

fn check_vector(probs: &[f64], k: usize) -> Result<(), MetricsError> {
    if probs.len() != k {
        return Err(MetricsError::ScoreFormat(format!(
            "expected {k} probabilities, got {}",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(MetricsError::ScoreFormat(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(MetricsError::ScoreFormat(format!(
            "probabilities sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Index of the largest probability, lowest index on ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct ParsedScores {
    pub scores: ScoreSet,
    pub diagnostics: Vec<Diagnostic>,
}

/// Reads a scores CSV. `expected_k`, when given, must match the header.
pub fn parse_scores<R: Read>(reader: R, expected_k: Option<usize>) -> Result<ParsedScores, MetricsError> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| MetricsError::ScoreFormat(e.to_string()))?
        .clone();
    let k = headers.len().saturating_sub(1);
    let header_ok = headers.get(0) == Some("image_id")
        && k >= 2
        && headers.iter().skip(1).enumerate().all(|(i, h)| h == format!("p{i}"));
    if !header_ok {
        return Err(MetricsError::ScoreFormat(format!(
            "expected header image_id,p0,...,p{{K-1}}, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    if let Some(want) = expected_k {
        if want != k {
            return Err(MetricsError::ScoreFormat(format!(
                "scores have {k} classes, expected {want}"
            )));
        }
    }

    let mut scores = ScoreSet::new(k);
    let mut diagnostics = Vec::new();
    for row in csv.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                diagnostics.push(Diagnostic {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let parsed = (|| {
            if row.len() != k + 1 {
                return Err(format!("expected {} fields, found {}", k + 1, row.len()));
            }
            let id = &row[0];
            if id.is_empty() {
                return Err("empty image_id".to_string());
            }
            if scores.get(id).is_some() {
                return Err(format!("duplicate image_id {id:?}"));
            }
            let probs = row
                .iter()
                .skip(1)
                .map(|c| c.parse::<f64>().map_err(|_| format!("bad probability {c:?}")))
                .collect::<Result<Vec<f64>, _>>()?;
            check_vector(&probs, k).map_err(|e| e.to_string())?;
            Ok((id.to_string(), probs))
        })();
        match parsed {
            Ok((id, probs)) => {
                scores.entries.insert(id, probs);
            }
            Err(message) => diagnostics.push(Diagnostic { line, message }),
        }
    }
    Ok(ParsedScores {
        scores,
        diagnostics,
    })
}

/// Writes scores sorted by image id, probabilities in shortest round-trip form.
pub fn write_scores<W: Write>(writer: W, scores: &ScoreSet) -> csv::Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["image_id".to_string()];
    header.extend((0..scores.k).map(|i| format!("p{i}")));
    csv.write_record(&header)?;
    for (id, probs) in &scores.entries {
        let mut row = Vec::with_capacity(probs.len() + 1);
        row.push(id.clone());
        row.extend(probs.iter().map(|p| p.to_string()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}
