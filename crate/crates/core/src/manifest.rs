//! Dataset manifests: which files belong to which case, data source and fold.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acquisition source. `P` cases have a reduced field of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    F,
    P,
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" | "f" => Ok(Source::F),
            "P" | "p" => Ok(Source::P),
            other => Err(Error::InvalidManifest(format!("unknown source {other:?}"))),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::F => "F",
            Source::P => "P",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub image_path: Option<PathBuf>,
    pub label_path: Option<PathBuf>,
    pub prediction_path: Option<PathBuf>,
    pub source: Source,
    pub fold: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub cases: Vec<CaseRecord>,
    pub class_table_path: Option<PathBuf>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prediction: Option<PathBuf>,
    source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fold: Option<i64>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    cases: Vec<RawCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_table: Option<PathBuf>,
}

impl Manifest {
    /// Parses and validates a manifest. Relative paths are resolved against
    /// `base_dir`.
    pub fn from_json_str(s: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawManifest =
            serde_json::from_str(s).map_err(|e| Error::InvalidManifest(e.to_string()))?;
        if raw.cases.is_empty() {
            return Err(Error::InvalidManifest("case list is empty".into()));
        }
        let resolve = |p: Option<PathBuf>| p.map(|p| base_dir.join(p));
        let mut seen = HashSet::new();
        let mut cases = Vec::with_capacity(raw.cases.len());
        for c in raw.cases {
            if c.case_id.is_empty() {
                return Err(Error::InvalidManifest("empty case_id".into()));
            }
            if !seen.insert(c.case_id.clone()) {
                return Err(Error::InvalidManifest(format!(
                    "duplicate case_id {:?}",
                    c.case_id
                )));
            }
            let fold = match c.fold {
                None => None,
                Some(f @ 0..=4) => Some(f as u8),
                Some(f) => {
                    return Err(Error::InvalidManifest(format!(
                        "case {:?}: fold {f} outside 0..=4",
                        c.case_id
                    )))
                }
            };
            cases.push(CaseRecord {
                source: c.source.parse()?,
                image_path: resolve(c.image),
                label_path: resolve(c.labels),
                prediction_path: resolve(c.prediction),
                case_id: c.case_id,
                fold,
            });
        }
        Ok(Manifest {
            cases,
            class_table_path: resolve(raw.class_table),
        })
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawManifest {
            cases: self
                .cases
                .iter()
                .map(|c| RawCase {
                    case_id: c.case_id.clone(),
                    image: c.image_path.clone(),
                    labels: c.label_path.clone(),
                    prediction: c.prediction_path.clone(),
                    source: c.source.to_string(),
                    fold: c.fold.map(i64::from),
                })
                .collect(),
            class_table: self.class_table_path.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("manifest serializes")
    }

    pub fn filter_source(&self, source: Source) -> Vec<&CaseRecord> {
        self.cases.iter().filter(|c| c.source == source).collect()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Manifest::from_json_str(&s, base)
}
