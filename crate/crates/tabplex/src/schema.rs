//! Column schema declarations and the JSON document that carries them.
//!
//! A schema file looks like:
//!
//! ```json
//! {
//!   "delimiter": ",",
//!   "columns": [
//!     {"name": "User ID", "kind": "id"},
//!     {"name": "Age", "kind": "numerical"},
//!     {"name": "City", "kind": "categorical", "usable_for_relations": true},
//!     {"name": "Apply time", "kind": "timestamp"},
//!     {"name": "Overdue", "kind": "target"}
//!   ]
//! }
//! ```
//!
//! `usable_for_relations` defaults to true for every kind except `target`
//! and `timestamp`, which may never seed relations.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Discrete values mapped to a dense id space and embedded.
    Categorical,
    /// Continuous values, z-scored after imputation.
    Numerical,
    /// Monotone-comparable event time; also fed to the model as a numeric
    /// feature after normalization.
    Timestamp,
    /// Free text handled exactly like a categorical value.
    TextAsCategorical,
    /// Identifier column: usable for relation extraction, never featurized.
    Id,
    /// The prediction target.
    Target,
}

impl ColumnKind {
    /// Categorical-like kinds share the vocabulary/id machinery.
    pub fn is_categorical_like(self) -> bool {
        matches!(
            self,
            ColumnKind::Categorical | ColumnKind::TextAsCategorical | ColumnKind::Id
        )
    }

    /// Whether values of this kind become model features.
    pub fn is_featurized(self) -> bool {
        matches!(
            self,
            ColumnKind::Categorical
                | ColumnKind::TextAsCategorical
                | ColumnKind::Numerical
                | ColumnKind::Timestamp
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default = "default_usable")]
    pub usable_for_relations: bool,
}

fn default_usable() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchemaFile {
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    pub columns: Vec<ColumnSchema>,
}

fn default_delimiter() -> String {
    ",".to_string()
}

impl SchemaFile {
    pub fn load(path: &Path) -> Result<SchemaFile> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Validation(format!("cannot read schema file {}: {e}", path.display()))
        })?;
        let schema: SchemaFile = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn delimiter_byte(&self) -> Result<u8> {
        let bytes = self.delimiter.as_bytes();
        if bytes.len() != 1 {
            return Err(Error::Schema(format!(
                "delimiter must be a single byte, got {:?}",
                self.delimiter
            )));
        }
        Ok(bytes[0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Schema("schema lists no columns".into()));
        }
        self.delimiter_byte()?;
        let mut seen = std::collections::HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", col.name)));
            }
        }
        let n_target = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Target)
            .count();
        if n_target != 1 {
            return Err(Error::Schema(format!(
                "exactly one target column required, found {n_target}"
            )));
        }
        let n_ts = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Timestamp)
            .count();
        if n_ts > 1 {
            return Err(Error::Schema(format!(
                "at most one timestamp column allowed, found {n_ts}"
            )));
        }
        for col in &self.columns {
            if matches!(col.kind, ColumnKind::Target | ColumnKind::Timestamp)
                && col.usable_for_relations
            {
                // silently treated as unusable; relations referencing these
                // columns are rejected at relation-validation time
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn target_name(&self) -> &str {
        &self
            .columns
            .iter()
            .find(|c| c.kind == ColumnKind::Target)
            .expect("validated schema has a target")
            .name
    }

    pub fn timestamp_name(&self) -> Option<&str> {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::Timestamp)
            .map(|c| c.name.as_str())
    }
}
