//! Clinical grades, image records and the derived grading systems.
//!
//! Every image carries a gradability judgment and, when gradable, a retinopathy
//! grade on the five-level PIRC scale and a macular edema grade on the
//! four-level PIMEC scale. The binary and three-class systems are derived
//! from those:
//!
//! | system | classes                            |
//! |--------|------------------------------------|
//! | PIRC   | 0..=4 (pass-through)               |
//! | PIMEC  | 0..=3 (pass-through)               |
//! | RDR    | 0 = NRDR (PIRC 0,1), 1 = RDR (2..) |
//! | RDME   | 0 = NRDME (PIMEC 0), 1 = RDME (1..)|
//! | QRDR   | 0 = ungradable, 1 = NRDR, 2 = RDR  |

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GradingError {
    #[error("image {image_id} is ungradable and has no {system} class")]
    UngradableForSystem {
        system: GradingSystem,
        image_id: String,
    },
    #[error("{field} = {value} is outside {min}..={max}")]
    Range {
        field: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("class index {index} out of range for {system} ({classes} classes)")]
    ClassIndex {
        system: GradingSystem,
        index: usize,
        classes: usize,
    },
    #[error("unknown grading system {0:?}")]
    UnknownSystem(String),
    #[error("invalid manifest: {0}")]
    FatalFormat(String),
}

/// Retinopathy grade on the PIRC scale (0 = no apparent DR ... 4 = PDR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PircGrade(u8);

/// Macular edema grade on the PIMEC scale (0 = no apparent DME ... 3 = severe DME).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PimecGrade(u8);

macro_rules! ordinal_grade {
    ($ty:ident, $field:literal, $max:expr) => {
        impl $ty {
            pub const MAX: u8 = $max;

            pub fn new(value: u8) -> Result<Self, GradingError> {
                if value > Self::MAX {
                    return Err(GradingError::Range {
                        field: $field,
                        value: value as i64,
                        min: 0,
                        max: Self::MAX as i64,
                    });
                }
                Ok(Self(value))
            }

            pub fn value(self) -> u8 {
                self.0
            }
        }

        impl TryFrom<u8> for $ty {
            type Error = GradingError;

            fn try_from(value: u8) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }

        impl From<$ty> for u8 {
            fn from(grade: $ty) -> u8 {
                grade.0
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

ordinal_grade!(PircGrade, "pirc", 4);
ordinal_grade!(PimecGrade, "pimec", 3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradingSystem {
    Pirc,
    Pimec,
    Rdr,
    Rdme,
    Qrdr,
}

impl GradingSystem {
    pub const ALL: [GradingSystem; 5] = [
        GradingSystem::Pirc,
        GradingSystem::Pimec,
        GradingSystem::Rdr,
        GradingSystem::Rdme,
        GradingSystem::Qrdr,
    ];

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            GradingSystem::Pirc => &[
                "no apparent DR",
                "mild NPDR",
                "moderate NPDR",
                "severe NPDR",
                "PDR",
            ],
            GradingSystem::Pimec => &[
                "no apparent DME",
                "mild DME",
                "moderate DME",
                "severe DME",
            ],
            GradingSystem::Rdr => &["NRDR", "RDR"],
            GradingSystem::Rdme => &["NRDME", "RDME"],
            GradingSystem::Qrdr => &["ungradable", "NRDR", "RDR"],
        }
    }

    pub fn is_binary(self) -> bool {
        self.num_classes() == 2
    }

    /// Whether ungradable images are excluded from this system.
    pub fn requires_grades(self) -> bool {
        self != GradingSystem::Qrdr
    }

    /// Lowercase identifier used on the command line and in file names.
    pub fn as_str(self) -> &'static str {
        match self {
            GradingSystem::Pirc => "pirc",
            GradingSystem::Pimec => "pimec",
            GradingSystem::Rdr => "rdr",
            GradingSystem::Rdme => "rdme",
            GradingSystem::Qrdr => "qrdr",
        }
    }

    /// Uppercase label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            GradingSystem::Pirc => "PIRC",
            GradingSystem::Pimec => "PIMEC",
            GradingSystem::Rdr => "RDR",
            GradingSystem::Rdme => "RDME",
            GradingSystem::Qrdr => "QRDR",
        }
    }
}

impl fmt::Display for GradingSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for GradingSystem {
    type Err = GradingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pirc" => Ok(GradingSystem::Pirc),
            "pimec" => Ok(GradingSystem::Pimec),
            "rdr" | "nrdr/rdr" => Ok(GradingSystem::Rdr),
            "rdme" | "nrdme/rdme" => Ok(GradingSystem::Rdme),
            "qrdr" => Ok(GradingSystem::Qrdr),
            _ => Err(GradingError::UnknownSystem(s.to_string())),
        }
    }
}

/// A class index within one grading system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassLabel {
    system: GradingSystem,
    index: u8,
}

impl ClassLabel {
    pub fn new(system: GradingSystem, index: usize) -> Result<Self, GradingError> {
        if index >= system.num_classes() {
            return Err(GradingError::ClassIndex {
                system,
                index,
                classes: system.num_classes(),
            });
        }
        Ok(Self {
            system,
            index: index as u8,
        })
    }

    // Callers guarantee `index < system.num_classes()`.
    fn known(system: GradingSystem, index: u8) -> Self {
        debug_assert!((index as usize) < system.num_classes());
        Self { system, index }
    }

    pub fn system(self) -> GradingSystem {
        self.system
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    pub fn name(self) -> &'static str {
        self.system.class_names()[self.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Eye {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl Eye {
    pub fn as_str(self) -> &'static str {
        match self {
            Eye::Left => "L",
            Eye::Right => "R",
        }
    }
}

impl FromStr for Eye {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" | "l" => Ok(Eye::Left),
            "R" | "r" => Ok(Eye::Right),
            _ => Err(format!("eye must be L or R, got {s:?}")),
        }
    }
}

/// Photograph centering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Fovea,
    OpticDisc,
}

impl Field {
    pub fn as_str(self) -> &'static str {
        match self {
            Field::Fovea => "fovea",
            Field::OpticDisc => "optic_disc",
        }
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fovea" => Ok(Field::Fovea),
            "optic_disc" => Ok(Field::OpticDisc),
            _ => Err(format!("field must be fovea or optic_disc, got {s:?}")),
        }
    }
}

/// Consensus grades of a gradable image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grades {
    pub pirc: PircGrade,
    pub pimec: PimecGrade,
}

/// One image of the manifest.
///
/// Gradable images carry both grades, ungradable ones carry none; the
/// `grades` option encodes that invariant directly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GradeRecord {
    pub image_id: String,
    pub patient_id: String,
    pub eye: Eye,
    pub field: Field,
    pub grades: Option<Grades>,
}

impl GradeRecord {
    pub fn gradable(
        image_id: impl Into<String>,
        patient_id: impl Into<String>,
        eye: Eye,
        field: Field,
        pirc: PircGrade,
        pimec: PimecGrade,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            patient_id: patient_id.into(),
            eye,
            field,
            grades: Some(Grades { pirc, pimec }),
        }
    }

    pub fn ungradable(
        image_id: impl Into<String>,
        patient_id: impl Into<String>,
        eye: Eye,
        field: Field,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            patient_id: patient_id.into(),
            eye,
            field,
            grades: None,
        }
    }

    pub fn is_gradable(&self) -> bool {
        self.grades.is_some()
    }

    pub fn pirc(&self) -> Option<PircGrade> {
        self.grades.map(|g| g.pirc)
    }

    pub fn pimec(&self) -> Option<PimecGrade> {
        self.grades.map(|g| g.pimec)
    }
}

/// Maps a record onto a class of `system`.
pub fn derive_class(system: GradingSystem, record: &GradeRecord) -> Result<ClassLabel, GradingError> {
    let grades = match (record.grades, system) {
        (None, GradingSystem::Qrdr) => return Ok(ClassLabel::known(system, 0)),
        (None, _) => {
            return Err(GradingError::UngradableForSystem {
                system,
                image_id: record.image_id.clone(),
            })
        }
        (Some(g), _) => g,
    };
    let referable_dr = grades.pirc.value() >= 2;
    let index = match system {
        GradingSystem::Pirc => grades.pirc.value(),
        GradingSystem::Pimec => grades.pimec.value(),
        GradingSystem::Rdr => referable_dr as u8,
        GradingSystem::Rdme => (grades.pimec.value() >= 1) as u8,
        GradingSystem::Qrdr => 1 + referable_dr as u8,
    };
    Ok(ClassLabel::known(system, index))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub record: GradeRecord,
    pub label: ClassLabel,
}

/// Pairs every record usable by `system` with its class. Ungradable images
/// are dropped except under QRDR, where they form class 0.
pub fn records_for_system(records: &[GradeRecord], system: GradingSystem) -> Vec<LabeledRecord> {
    records
        .iter()
        .filter_map(|r| {
            derive_class(system, r).ok().map(|label| LabeledRecord {
                record: r.clone(),
                label,
            })
        })
        .collect()
}

/// Translates Messidor labels to the referable systems: retinopathy grade
/// {0,1} is NRDR and {2,3} RDR; edema risk 0 is NRDME and {1,2} RDME.
/// Messidor's scales differ from PIRC/PIMEC, so the result is approximate.
pub fn map_messidor(
    retinopathy_grade: i64,
    edema_risk: i64,
) -> Result<(ClassLabel, ClassLabel), GradingError> {
    if !(0..=3).contains(&retinopathy_grade) {
        return Err(GradingError::Range {
            field: "retinopathy_grade",
            value: retinopathy_grade,
            min: 0,
            max: 3,
        });
    }
    if !(0..=2).contains(&edema_risk) {
        return Err(GradingError::Range {
            field: "edema_risk",
            value: edema_risk,
            min: 0,
            max: 2,
        });
    }
    Ok((
        ClassLabel::known(GradingSystem::Rdr, (retinopathy_grade >= 2) as u8),
        ClassLabel::known(GradingSystem::Rdme, (edema_risk >= 1) as u8),
    ))
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ManifestOptions {
    /// Skip rows whose `disagreement` cell is nonempty.
    pub drop_flagged: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedManifest {
    pub records: Vec<GradeRecord>,
    pub diagnostics: Vec<Diagnostic>,
    /// Rows skipped because of `drop_flagged`.
    pub dropped_flagged: usize,
}

pub const MANIFEST_COLUMNS: [&str; 7] = [
    "image_id",
    "patient_id",
    "eye",
    "field",
    "gradable",
    "pirc",
    "pimec",
];

/// Reads a manifest CSV. Malformed rows are reported as diagnostics and
/// skipped; only a bad header is fatal.
pub fn parse_manifest<R: Read>(
    reader: R,
    options: ManifestOptions,
) -> Result<ParsedManifest, GradingError> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| GradingError::FatalFormat(e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let extra_ok = names.len() == 8 && names[7] == "disagreement";
    if names.len() < 7 || names[..7] != MANIFEST_COLUMNS || (names.len() > 7 && !extra_ok) {
        return Err(GradingError::FatalFormat(format!(
            "expected header {}[,disagreement], got {}",
            MANIFEST_COLUMNS.join(","),
            names.join(",")
        )));
    }

    let mut out = ParsedManifest::default();
    for row in csv.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.diagnostics.push(Diagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != names.len() {
            out.diagnostics.push(Diagnostic {
                line,
                message: format!("expected {} fields, found {}", names.len(), row.len()),
            });
            continue;
        }
        if options.drop_flagged && row.get(7).is_some_and(|s| !s.is_empty()) {
            out.dropped_flagged += 1;
            continue;
        }
        match parse_row(&row) {
            Ok(record) => out.records.push(record),
            Err(message) => out.diagnostics.push(Diagnostic { line, message }),
        }
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord) -> Result<GradeRecord, String> {
    let image_id = &row[0];
    let patient_id = &row[1];
    if image_id.is_empty() {
        return Err("empty image_id".into());
    }
    if patient_id.is_empty() {
        return Err("empty patient_id".into());
    }
    let eye: Eye = row[2].parse()?;
    let field: Field = row[3].parse()?;
    let gradable = match &row[4] {
        "1" => true,
        "0" => false,
        other => return Err(format!("gradable must be 0 or 1, got {other:?}")),
    };
    let (pirc, pimec) = (&row[5], &row[6]);
    if !gradable {
        if !pirc.is_empty() || !pimec.is_empty() {
            return Err("ungradable image must not carry pirc/pimec grades".into());
        }
        return Ok(GradeRecord::ungradable(image_id, patient_id, eye, field));
    }
    if pirc.is_empty() || pimec.is_empty() {
        return Err("missing grade: gradable image requires both pirc and pimec".into());
    }
    let pirc = parse_grade(pirc, "pirc").and_then(|v| PircGrade::new(v).map_err(|e| e.to_string()))?;
    let pimec =
        parse_grade(pimec, "pimec").and_then(|v| PimecGrade::new(v).map_err(|e| e.to_string()))?;
    Ok(GradeRecord::gradable(image_id, patient_id, eye, field, pirc, pimec))
}

fn parse_grade(cell: &str, field: &str) -> Result<u8, String> {
    cell.parse::<u8>()
        .map_err(|_| format!("{field} must be a nonnegative integer, got {cell:?}"))
}

/// Writes records in manifest format; [`parse_manifest`] reads them back unchanged.
pub fn write_manifest<W: Write>(writer: W, records: &[GradeRecord]) -> csv::Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(MANIFEST_COLUMNS)?;
    for r in records {
        let (gradable, pirc, pimec) = match r.grades {
            Some(g) => ("1", g.pirc.to_string(), g.pimec.to_string()),
            None => ("0", String::new(), String::new()),
        };
        csv.write_record([
            r.image_id.as_str(),
            r.patient_id.as_str(),
            r.eye.as_str(),
            r.field.as_str(),
            gradable,
            &pirc,
            &pimec,
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessidorLabel {
    pub image_id: String,
    pub rdr: ClassLabel,
    pub rdme: ClassLabel,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedMessidor {
    pub labels: Vec<MessidorLabel>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Reads a Messidor label CSV (`image_id,retinopathy_grade,edema_risk`).
pub fn parse_messidor<R: Read>(reader: R) -> Result<ParsedMessidor, GradingError> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| GradingError::FatalFormat(e.to_string()))?
        .clone();
    let expected = ["image_id", "retinopathy_grade", "edema_risk"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(GradingError::FatalFormat(format!(
            "expected header {}",
            expected.join(",")
        )));
    }
    let mut out = ParsedMessidor::default();
    for row in csv.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                out.diagnostics.push(Diagnostic {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let parsed = (|| {
            if row.len() != 3 {
                return Err(format!("expected 3 fields, found {}", row.len()));
            }
            let retinopathy: i64 = row[1]
                .parse()
                .map_err(|_| format!("bad retinopathy_grade {:?}", &row[1]))?;
            let edema: i64 = row[2]
                .parse()
                .map_err(|_| format!("bad edema_risk {:?}", &row[2]))?;
            let (rdr, rdme) = map_messidor(retinopathy, edema).map_err(|e| e.to_string())?;
            Ok(MessidorLabel {
                image_id: row[0].to_string(),
                rdr,
                rdme,
            })
        })();
        match parsed {
            Ok(label) => out.labels.push(label),
            Err(message) => out.diagnostics.push(Diagnostic { line, message }),
        }
    }
    Ok(out)
}
