//! Seeded perturbation operators over parsed table and document artifacts.

mod document;
pub mod rng;
mod table;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{DocumentArtifact, Paragraph, Section, Span};
pub use rng::SeededDraws;
pub use table::{Cell, TableArtifact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Tabular,
    Document,
}

impl Modality {
    pub fn token(self) -> &'static str {
        match self {
            Modality::Tabular => "tabular",
            Modality::Document => "document",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Everything needed to replay one injected corruption.
///
/// `params` holds the effective parameters, defaults included, so
/// [`replay_tabular`] / [`replay_document`] need nothing else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationRecord {
    pub op_name: String,
    pub modality: Modality,
    pub locus: Vec<String>,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    /// Artifact ids in the trace that carry the corrupted content.
    #[serde(default)]
    pub affected_ids: Vec<String>,
    /// Human-readable notes about what changed (old/new labels, shift directions).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, String>,
}

impl PerturbationRecord {
    pub fn new(op_name: impl Into<String>, modality: Modality, seed: u64) -> Self {
        PerturbationRecord {
            op_name: op_name.into(),
            modality,
            locus: Vec::new(),
            params: BTreeMap::new(),
            seed,
            affected_ids: Vec::new(),
            detail: BTreeMap::new(),
        }
    }

    pub fn with_affected_ids<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.affected_ids = ids.into_iter().map(Into::into).collect();
        self
    }

    /// Canonical single-line JSON used for sidecar files.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("operator `{op}` is a {expected} operator")]
    WrongModality { op: String, expected: Modality },
    #[error("operator `{op}` does not apply: {reason}")]
    InapplicableOperator { op: String, reason: String },
    #[error("invalid parameter `{name}` for `{op}`: {reason}")]
    InvalidParam { op: String, name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArtifactError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("row {row} has {found} cells, header has {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("line {line}: {reason}")]
    Document { line: usize, reason: String },
    #[error("duplicate span id `{0}`")]
    DuplicateSpanId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Integer >= 1.
    Count,
    /// Decimal number.
    Decimal,
    /// Decimal in (0, 1].
    Fraction,
    Text,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorSpec {
    pub name: &'static str,
    pub modality: Modality,
    pub params: &'static [ParamSpec],
}

impl OperatorSpec {
    pub fn default_params(&self) -> BTreeMap<String, String> {
        self.params.iter().map(|p| (p.name.to_string(), p.default.to_string())).collect()
    }
}

const fn param(name: &'static str, kind: ParamKind, default: &'static str) -> ParamSpec {
    ParamSpec { name, kind, default }
}

const AXES: &[&str] = &["auto", "row", "column"];
const DRIFT_MODES: &[&str] = &["swap", "promote_footer"];
const NUMBER_MODES: &[&str] = &["factor", "digit_swap"];
const POINTER_FIELDS: &[&str] = &["offset", "page"];

static CATALOG: &[OperatorSpec] = &[
    OperatorSpec { name: "column_swap", modality: Modality::Tabular, params: &[] },
    OperatorSpec { name: "label_corrupt", modality: Modality::Tabular, params: &[] },
    OperatorSpec {
        name: "data_type_corrupt",
        modality: Modality::Tabular,
        params: &[param("k", ParamKind::Count, "3")],
    },
    OperatorSpec { name: "row_duplicate", modality: Modality::Tabular, params: &[] },
    OperatorSpec {
        name: "irrelevant_columns",
        modality: Modality::Tabular,
        params: &[param("count", ParamKind::Count, "2")],
    },
    OperatorSpec {
        name: "unit_change",
        modality: Modality::Tabular,
        params: &[param("factor", ParamKind::Decimal, "1000")],
    },
    OperatorSpec {
        name: "misalignment",
        modality: Modality::Tabular,
        params: &[param("axis", ParamKind::Choice(AXES), "auto")],
    },
    OperatorSpec {
        name: "header_drift",
        modality: Modality::Tabular,
        params: &[param("mode", ParamKind::Choice(DRIFT_MODES), "swap")],
    },
    OperatorSpec {
        name: "numeric_noise",
        modality: Modality::Tabular,
        params: &[param("k", ParamKind::Count, "3"), param("magnitude", ParamKind::Fraction, "0.2")],
    },
    OperatorSpec {
        name: "cell_reference_drift",
        modality: Modality::Tabular,
        params: &[param("k", ParamKind::Count, "1")],
    },
    OperatorSpec {
        name: "ocr_noise",
        modality: Modality::Document,
        params: &[param("rate", ParamKind::Fraction, "0.02")],
    },
    OperatorSpec {
        name: "number_corruption",
        modality: Modality::Document,
        params: &[
            param("k", ParamKind::Count, "1"),
            param("mode", ParamKind::Choice(NUMBER_MODES), "factor"),
            param("factor", ParamKind::Decimal, "10"),
        ],
    },
    OperatorSpec { name: "text_redaction", modality: Modality::Document, params: &[] },
    OperatorSpec {
        name: "paragraph_shuffle",
        modality: Modality::Document,
        params: &[param("count", ParamKind::Count, "3")],
    },
    OperatorSpec {
        name: "encoding_error",
        modality: Modality::Document,
        params: &[param("k", ParamKind::Count, "1")],
    },
    OperatorSpec { name: "section_removal", modality: Modality::Document, params: &[] },
    OperatorSpec { name: "span_omission", modality: Modality::Document, params: &[] },
    OperatorSpec {
        name: "snippet_insertion",
        modality: Modality::Document,
        params: &[param("snippet", ParamKind::Text, "")],
    },
    OperatorSpec {
        name: "citation_pointer_shift",
        modality: Modality::Document,
        params: &[param("k", ParamKind::Count, "1"), param("field", ParamKind::Choice(POINTER_FIELDS), "offset")],
    },
    OperatorSpec {
        name: "tool_truncation",
        modality: Modality::Document,
        params: &[param("fraction", ParamKind::Fraction, "0.6")],
    },
];

/// All operators, tabular first, in a fixed order.
pub fn catalog() -> &'static [OperatorSpec] {
    CATALOG
}

pub fn lookup(op_name: &str) -> Option<&'static OperatorSpec> {
    CATALOG.iter().find(|s| s.name == op_name)
}

/// Parameters after defaults and validation.
#[derive(Debug, Clone)]
pub(crate) struct Params<'a> {
    op: &'static str,
    values: &'a BTreeMap<String, String>,
}

impl Params<'_> {
    fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or("")
    }

    pub(crate) fn count(&self, name: &str) -> usize {
        self.raw(name).parse().expect("validated")
    }

    pub(crate) fn decimal(&self, name: &str) -> Decimal {
        Decimal::from_str(self.raw(name)).expect("validated")
    }

    pub(crate) fn text(&self, name: &str) -> &str {
        self.raw(name)
    }

    pub(crate) fn inapplicable(&self, reason: impl Into<String>) -> PerturbError {
        PerturbError::InapplicableOperator { op: self.op.to_string(), reason: reason.into() }
    }
}

fn resolve_params(
    spec: &OperatorSpec,
    given: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>, PerturbError> {
    let invalid = |name: &str, reason: String| PerturbError::InvalidParam {
        op: spec.name.to_string(),
        name: name.to_string(),
        reason,
    };
    for name in given.keys() {
        if !spec.params.iter().any(|p| p.name == name) {
            return Err(invalid(name, "not a parameter of this operator".into()));
        }
    }
    let mut out = spec.default_params();
    for (k, v) in given {
        out.insert(k.clone(), v.trim().to_string());
    }
    for p in spec.params {
        let v = &out[p.name];
        match p.kind {
            ParamKind::Count => match v.parse::<usize>() {
                Ok(n) if n >= 1 => {}
                _ => return Err(invalid(p.name, format!("expected an integer >= 1, got `{v}`"))),
            },
            ParamKind::Decimal => {
                let d = Decimal::from_str(v).map_err(|_| invalid(p.name, format!("expected a number, got `{v}`")))?;
                if d.is_zero() || d == Decimal::ONE {
                    return Err(invalid(p.name, format!("`{v}` would not change any value")));
                }
            }
            ParamKind::Fraction => {
                let d = Decimal::from_str(v).map_err(|_| invalid(p.name, format!("expected a number, got `{v}`")))?;
                if d <= Decimal::ZERO || d > Decimal::ONE {
                    return Err(invalid(p.name, format!("expected a value in (0, 1], got `{v}`")));
                }
            }
            ParamKind::Text => {}
            ParamKind::Choice(options) => {
                if !options.contains(&v.as_str()) {
                    return Err(invalid(p.name, format!("expected one of {}, got `{v}`", options.join("|"))));
                }
            }
        }
    }
    Ok(out)
}

/// Where an operator touched the artifact.
#[derive(Debug, Default)]
pub(crate) struct Touched {
    pub locus: Vec<String>,
    pub detail: BTreeMap<String, String>,
}

fn prepare(
    op_name: &str,
    modality: Modality,
    params: &BTreeMap<String, String>,
) -> Result<(&'static OperatorSpec, BTreeMap<String, String>), PerturbError> {
    let spec = lookup(op_name).ok_or_else(|| PerturbError::UnknownOperator(op_name.to_string()))?;
    if spec.modality != modality {
        return Err(PerturbError::WrongModality { op: op_name.to_string(), expected: spec.modality });
    }
    let resolved = resolve_params(spec, params)?;
    Ok((spec, resolved))
}

fn record(spec: &OperatorSpec, params: BTreeMap<String, String>, seed: u64, touched: Touched) -> PerturbationRecord {
    PerturbationRecord {
        op_name: spec.name.to_string(),
        modality: spec.modality,
        locus: touched.locus,
        params,
        seed,
        affected_ids: Vec::new(),
        detail: touched.detail,
    }
}

pub fn apply_tabular(
    artifact: &TableArtifact,
    op_name: &str,
    params: &BTreeMap<String, String>,
    seed: u64,
) -> Result<(TableArtifact, PerturbationRecord), PerturbError> {
    let (spec, resolved) = prepare(op_name, Modality::Tabular, params)?;
    let p = Params { op: spec.name, values: &resolved };
    let (out, touched) = table::apply(spec.name, artifact, &p, seed)?;
    debug_assert!(out != *artifact, "{} produced an identical table", spec.name);
    Ok((out, record(spec, resolved, seed, touched)))
}

pub fn apply_document(
    artifact: &DocumentArtifact,
    op_name: &str,
    params: &BTreeMap<String, String>,
    seed: u64,
) -> Result<(DocumentArtifact, PerturbationRecord), PerturbError> {
    let (spec, resolved) = prepare(op_name, Modality::Document, params)?;
    let p = Params { op: spec.name, values: &resolved };
    let (out, touched) = document::apply(spec.name, artifact, &p, seed)?;
    debug_assert!(out != *artifact, "{} produced an identical document", spec.name);
    Ok((out, record(spec, resolved, seed, touched)))
}

pub fn replay_tabular(artifact: &TableArtifact, rec: &PerturbationRecord) -> Result<TableArtifact, PerturbError> {
    apply_tabular(artifact, &rec.op_name, &rec.params, rec.seed).map(|(t, _)| t)
}

pub fn replay_document(artifact: &DocumentArtifact, rec: &PerturbationRecord) -> Result<DocumentArtifact, PerturbError> {
    apply_document(artifact, &rec.op_name, &rec.params, rec.seed).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_complete_and_unique() {
        let names: Vec<_> = catalog().iter().map(|s| s.name).collect();
        assert_eq!(names.len(), 20);
        let mut dedup = names.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 20);
        assert_eq!(lookup("column_swap").unwrap().modality, Modality::Tabular);
        let ocr = lookup("ocr_noise").unwrap();
        assert_eq!(ocr.modality, Modality::Document);
        assert_eq!(ocr.default_params().get("rate").map(String::as_str), Some("0.02"));
        assert_eq!(catalog().iter().filter(|s| s.modality == Modality::Tabular).count(), 10);
    }

    #[test]
    fn param_validation() {
        let spec = lookup("numeric_noise").unwrap();
        let mut given = BTreeMap::new();
        given.insert("k".to_string(), "0".to_string());
        assert!(matches!(resolve_params(spec, &given), Err(PerturbError::InvalidParam { .. })));
        given.insert("k".to_string(), "2".to_string());
        given.insert("magnitude".to_string(), "1.5".to_string());
        assert!(resolve_params(spec, &given).is_err());
        given.insert("magnitude".to_string(), "0.1".to_string());
        let r = resolve_params(spec, &given).unwrap();
        assert_eq!(r["k"], "2");
        given.insert("bogus".to_string(), "1".to_string());
        assert!(resolve_params(spec, &given).is_err());
    }

    #[test]
    fn record_json_round_trip() {
        let r = PerturbationRecord::new("column_swap", Modality::Tabular, 9).with_affected_ids(["input_0"]);
        let back = PerturbationRecord::from_json(&r.to_json()).unwrap();
        assert_eq!(r, back);
        assert!(PerturbationRecord::from_json(r#"{"op_name":"x","modality":"tabular","locus":[],"params":{},"seed":1,"extra":1}"#).is_err());
    }

    #[test]
    fn wrong_modality_and_unknown() {
        let t = TableArtifact::new(vec!["a".into()], vec![vec![Cell::Empty]]).unwrap();
        let none = BTreeMap::new();
        assert!(matches!(apply_tabular(&t, "ocr_noise", &none, 1), Err(PerturbError::WrongModality { .. })));
        assert!(matches!(apply_tabular(&t, "blur", &none, 1), Err(PerturbError::UnknownOperator(_))));
    }
}
