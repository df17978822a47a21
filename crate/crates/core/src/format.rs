//! JSON documents: correlator tables, key lists and structure reports.
//!
//! Every document carries `"schema_version": 1`. Parties are 1-based and
//! settings 0-based, so `{"parties":[1,3],"settings":[0,1]}` is `⟨A0 C1⟩`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{MomentKey, MomentRef, Scenario};
use crate::hierarchy::MomentMatrixStructure;
use crate::quantum::{CorrelatorTable, Moment, TableError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("{field}: moment {key} = {value} lies outside [-1, 1]")]
    RangeError { field: String, key: MomentKey, value: f64 },
    #[error("{field}: duplicate moment {key}")]
    DuplicateMoment { field: String, key: MomentKey },
}

impl From<serde_json::Error> for IngestError {
    fn from(e: serde_json::Error) -> Self {
        IngestError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub parties: usize,
    pub settings: usize,
    pub outcomes: usize,
}

impl From<&Scenario> for ScenarioDoc {
    fn from(s: &Scenario) -> Self {
        Self {
            parties: s.parties(),
            settings: s.settings(),
            outcomes: s.outcomes(),
        }
    }
}

impl ScenarioDoc {
    pub fn to_scenario(&self) -> Result<Scenario, IngestError> {
        Scenario::new(self.parties, self.settings, self.outcomes).map_err(|e| IngestError::Field {
            field: "scenario".into(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyDoc {
    pub parties: Vec<usize>,
    pub settings: Vec<usize>,
}

impl From<&MomentKey> for KeyDoc {
    fn from(k: &MomentKey) -> Self {
        Self {
            parties: k.external_parties(),
            settings: k.settings(),
        }
    }
}

impl KeyDoc {
    fn to_key(&self, field: &str) -> Result<MomentKey, IngestError> {
        MomentKey::from_external(&self.parties, &self.settings).map_err(|e| IngestError::Field {
            field: field.into(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentDoc {
    pub parties: Vec<usize>,
    pub settings: Vec<usize>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDoc {
    pub schema_version: u32,
    pub scenario: ScenarioDoc,
    pub moments: Vec<MomentDoc>,
}

pub fn moment_docs<'a>(entries: impl IntoIterator<Item = (&'a MomentKey, &'a Moment)>) -> Vec<MomentDoc> {
    entries
        .into_iter()
        .map(|(k, m)| MomentDoc {
            parties: k.external_parties(),
            settings: k.settings(),
            value: m.value,
            sigma: m.sigma,
        })
        .collect()
}

pub fn table_doc(table: &CorrelatorTable) -> TableDoc {
    TableDoc {
        schema_version: SCHEMA_VERSION,
        scenario: table.scenario().into(),
        moments: moment_docs(table.iter()),
    }
}

pub fn table_to_json(table: &CorrelatorTable) -> String {
    serde_json::to_string_pretty(&table_doc(table)).expect("table serializes")
}

fn check_version(version: u32) -> Result<(), IngestError> {
    if version != SCHEMA_VERSION {
        return Err(IngestError::SchemaVersion(version));
    }
    Ok(())
}

/// Validates a parsed table document.
pub fn table_from_doc(doc: &TableDoc) -> Result<CorrelatorTable, IngestError> {
    check_version(doc.schema_version)?;
    let scenario = doc.scenario.to_scenario()?;
    let mut table = CorrelatorTable::new(scenario);
    for (i, m) in doc.moments.iter().enumerate() {
        let field = format!("moments[{i}]");
        let key = KeyDoc {
            parties: m.parties.clone(),
            settings: m.settings.clone(),
        }
        .to_key(&field)?;
        let moment = Moment {
            value: m.value,
            sigma: m.sigma,
        };
        table.insert(key, moment).map_err(|e| match e {
            TableError::DuplicateMoment(key) => IngestError::DuplicateMoment { field, key },
            TableError::RangeError { key, value } => IngestError::RangeError { field, key, value },
            other => IngestError::Field {
                field,
                message: other.to_string(),
            },
        })?;
    }
    Ok(table)
}

/// Parses and validates a correlator table document.
pub fn ingest_table(document: &str) -> Result<CorrelatorTable, IngestError> {
    let doc: TableDoc = serde_json::from_str(document)?;
    table_from_doc(&doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyListDoc {
    pub schema_version: u32,
    pub keys: Vec<KeyDoc>,
}

/// Parses an explicit pin list.
pub fn ingest_keys(document: &str) -> Result<Vec<MomentKey>, IngestError> {
    let doc: KeyListDoc = serde_json::from_str(document)?;
    check_version(doc.schema_version)?;
    let mut seen = BTreeSet::new();
    let mut keys = Vec::with_capacity(doc.keys.len());
    for (i, k) in doc.keys.iter().enumerate() {
        let field = format!("keys[{i}]");
        let key = k.to_key(&field)?;
        if !seen.insert(key.clone()) {
            return Err(IngestError::DuplicateMoment { field, key });
        }
        keys.push(key);
    }
    Ok(keys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableDoc {
    pub id: usize,
    pub label: String,
    pub parties: Vec<usize>,
    pub settings: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeVarDoc {
    pub id: usize,
    pub word: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntryRef {
    Unit,
    Observable { id: usize },
    Free { id: usize },
}

/// One upper-triangle entry; `row` and `col` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDoc {
    pub row: usize,
    pub col: usize,
    #[serde(flatten)]
    pub moment: EntryRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub schema_version: u32,
    pub scenario: ScenarioDoc,
    pub level: usize,
    pub dim: usize,
    pub basis: Vec<String>,
    pub observables: Vec<ObservableDoc>,
    pub freevars: Vec<FreeVarDoc>,
    pub entries: Vec<EntryDoc>,
}

pub fn structure_report(structure: &MomentMatrixStructure) -> StructureReport {
    let observables = structure
        .observables()
        .iter()
        .enumerate()
        .map(|(id, k)| ObservableDoc {
            id,
            label: k.to_string(),
            parties: k.external_parties(),
            settings: k.settings(),
        })
        .collect();
    let freevars = structure
        .freevars()
        .iter()
        .enumerate()
        .map(|(id, f)| FreeVarDoc {
            id,
            word: f.word().to_string(),
        })
        .collect();
    let n = structure.dim();
    let mut entries = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let moment = match structure.entry(i, j) {
                MomentRef::Unit => EntryRef::Unit,
                MomentRef::Observable(k) => EntryRef::Observable {
                    id: structure.observable_index(&k).expect("observable is indexed"),
                },
                MomentRef::FreeVar(f) => EntryRef::Free {
                    id: structure
                        .freevars()
                        .iter()
                        .position(|x| *x == f)
                        .expect("free variable is indexed"),
                },
            };
            entries.push(EntryDoc {
                row: i + 1,
                col: j + 1,
                moment,
            });
        }
    }
    StructureReport {
        schema_version: SCHEMA_VERSION,
        scenario: structure.scenario().into(),
        level: structure.level(),
        dim: n,
        basis: structure.basis().iter().map(|w| w.to_string()).collect(),
        observables,
        freevars,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_structure, RANGE_SLACK};
    use proptest::prelude::*;

    const SMALL: &str = r#"{
  "schema_version": 1,
  "scenario": {"parties": 2, "settings": 2, "outcomes": 2},
  "moments": [
    {"parties": [1], "settings": [0], "value": 0.5},
    {"parties": [1, 2], "settings": [1, 0], "value": -0.25, "sigma": 0.01}
  ]
}"#;

    #[test]
    fn ingest_accepts_valid_document() {
        let t = ingest_table(SMALL).unwrap();
        assert_eq!(t.len(), 2);
        let k = MomentKey::from_external(&[1, 2], &[1, 0]).unwrap();
        assert_eq!(t.get(&k).unwrap().sigma, Some(0.01));
    }

    #[test]
    fn ingest_diagnostics() {
        let range = SMALL.replace("0.5", "1.2");
        assert!(matches!(
            ingest_table(&range),
            Err(IngestError::RangeError { ref field, value, .. }) if field == "moments[0]" && value == 1.2
        ));
        let dup = SMALL.replace("[1, 2], \"settings\": [1, 0]", "[1], \"settings\": [0]");
        assert!(matches!(ingest_table(&dup), Err(IngestError::DuplicateMoment { ref field, .. }) if field == "moments[1]"));
        let syntax = SMALL.replace("\"value\": 0.5}", "\"value\": }");
        assert!(matches!(ingest_table(&syntax), Err(IngestError::Syntax { line: 5, .. })));
        let unknown = SMALL.replace("\"value\": 0.5", "\"value\": 0.5, \"bogus\": 1");
        assert!(matches!(ingest_table(&unknown), Err(IngestError::Syntax { .. })));
        let version = SMALL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert_eq!(ingest_table(&version).unwrap_err(), IngestError::SchemaVersion(2));
        let outcomes = SMALL.replace("\"outcomes\": 2", "\"outcomes\": 3");
        assert!(matches!(ingest_table(&outcomes), Err(IngestError::Field { ref field, .. }) if field == "scenario"));
        let foreign = SMALL.replace("\"parties\": [1], \"settings\": [0]", "\"parties\": [3], \"settings\": [0]");
        assert!(matches!(ingest_table(&foreign), Err(IngestError::Field { .. })));
        let bad_key = SMALL.replace("[1, 2], \"settings\": [1, 0]", "[2, 1], \"settings\": [1, 0]");
        assert!(matches!(ingest_table(&bad_key), Err(IngestError::Field { .. })));
        let neg_sigma = SMALL.replace("0.01", "-0.01");
        assert!(matches!(ingest_table(&neg_sigma), Err(IngestError::Field { .. })));
    }

    #[test]
    fn key_lists() {
        let doc = r#"{"schema_version":1,"keys":[{"parties":[1,2,3],"settings":[0,0,0]},{"parties":[2],"settings":[1]}]}"#;
        let keys = ingest_keys(doc).unwrap();
        assert_eq!(keys.len(), 2);
        assert_eq!(keys[0].bodies(), 3);
        let dup = r#"{"schema_version":1,"keys":[{"parties":[2],"settings":[1]},{"parties":[2],"settings":[1]}]}"#;
        assert!(matches!(ingest_keys(dup), Err(IngestError::DuplicateMoment { .. })));
    }

    #[test]
    fn structure_reports() {
        for (n, m, level, dim, obs) in [(2, 2, 2, 11, 8), (3, 2, 2, 22, 26), (1, 1, 1, 2, 1)] {
            let s = build_structure(&Scenario::dichotomic(n, m).unwrap(), level).unwrap();
            let r = structure_report(&s);
            assert_eq!((r.dim, r.basis.len(), r.observables.len()), (dim, dim, obs));
            assert_eq!(r.entries.len(), dim * (dim + 1) / 2);
        }
        let s = build_structure(&Scenario::dichotomic(2, 2).unwrap(), 2).unwrap();
        let json = serde_json::to_value(structure_report(&s)).unwrap();
        assert_eq!(json["basis"][10], "B0B1");
        assert_eq!(json["entries"][0], serde_json::json!({"row": 1, "col": 1, "kind": "unit"}));
        assert_eq!(json["entries"][1], serde_json::json!({"row": 1, "col": 2, "kind": "observable", "id": 0}));
        assert_eq!(json["freevars"][6]["word"], "A0A1B0B1");
    }

    proptest! {
        #[test]
        fn table_round_trips_exactly(values in prop::collection::vec(-1.0f64..=1.0, 26), sigma in prop::option::of(0.0f64..0.1)) {
            let s = build_structure(&Scenario::dichotomic(3, 2).unwrap(), 2).unwrap();
            let mut t = CorrelatorTable::new(*s.scenario());
            for (k, v) in s.observables().iter().zip(&values) {
                t.insert(k.clone(), Moment { value: *v, sigma }).unwrap();
            }
            let back = ingest_table(&table_to_json(&t)).unwrap();
            prop_assert_eq!(back, t);
        }
    }

    #[test]
    fn range_slack_is_tolerated() {
        let edge = SMALL.replace("0.5", &format!("{}", 1.0 + RANGE_SLACK / 2.0));
        assert!(ingest_table(&edge).is_ok());
    }
}
