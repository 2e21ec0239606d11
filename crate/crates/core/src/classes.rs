//! Label-id to class-name tables.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TOOTHFAIRY2_JSON: &str = include_str!("../data/toothfairy2_classes.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassGroup {
    Tooth,
    Bone,
    Canal,
    Sinus,
    Implant,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub label: u32,
    pub name: String,
    pub group: ClassGroup,
}

/// Ordered list of foreground classes. Label 0 (background) is implicit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    entries: Vec<ClassEntry>,
}

impl ClassTable {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidClassTable("no entries".into()));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if e.label == 0 {
                return Err(Error::InvalidClassTable(
                    "label 0 is reserved for background".into(),
                ));
            }
            if !seen.insert(e.label) {
                return Err(Error::InvalidClassTable(format!(
                    "duplicate label {}",
                    e.label
                )));
            }
        }
        Ok(ClassTable { entries })
    }

    /// Table with plain numeric names, group `other`.
    pub fn from_labels(labels: impl IntoIterator<Item = u32>) -> Result<Self> {
        Self::new(
            labels
                .into_iter()
                .map(|label| ClassEntry {
                    label,
                    name: format!("class_{label}"),
                    group: ClassGroup::Other,
                })
                .collect(),
        )
    }

    /// The 42-class ToothFairy2 table shipped with the crate.
    pub fn toothfairy2() -> Self {
        Self::from_json_str(TOOTHFAIRY2_JSON).expect("bundled class table is valid")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let entries: Vec<ClassEntry> = serde_json::from_str(s)
            .map_err(|e| Error::InvalidClassTable(e.to_string()))?;
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("class table serializes")
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.label)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, label: u32) -> bool {
        self.entries.iter().any(|e| e.label == label)
    }

    pub fn max_label(&self) -> u32 {
        self.labels().max().unwrap_or(0)
    }
}
