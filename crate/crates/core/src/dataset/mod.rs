//! Benchmark datasets: schema catalogs, example triples, and database files.
//!
//! A [`DatasetBundle`] is immutable once loaded and can be shared freely
//! between threads.

mod catalog;
mod examples;
mod introspect;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use catalog::{load_schemas, parse_catalog};
pub use examples::{load_examples, parse_examples};
pub use introspect::introspect_database;

/// The five column kinds used by the interchange catalogs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Number,
    Time,
    Boolean,
    Other,
}

impl ColumnType {
    /// Maps a declared type string onto the five-kind enumeration by
    /// case-folded prefix.
    pub fn from_declared(raw: &str) -> Self {
        let t = raw.trim().to_ascii_lowercase();
        const NUMBER: &[&str] = &[
            "int", "real", "numeric", "decimal", "number", "float", "double", "bigint", "smallint",
            "tinyint", "mediumint",
        ];
        const TEXT: &[&str] = &["char", "text", "varchar", "nchar", "nvarchar", "clob", "string"];
        const TIME: &[&str] = &["date", "time", "timestamp", "year"];
        if NUMBER.iter().any(|p| t.starts_with(p)) {
            ColumnType::Number
        } else if TEXT.iter().any(|p| t.starts_with(p)) {
            ColumnType::Text
        } else if TIME.iter().any(|p| t.starts_with(p)) {
            ColumnType::Time
        } else if t.starts_with("bool") {
            ColumnType::Boolean
        } else {
            ColumnType::Other
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Number => "number",
            ColumnType::Time => "time",
            ColumnType::Boolean => "boolean",
            ColumnType::Other => "others",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub data_type: ColumnType,
    /// Raw type string as found in the source file or engine metadata.
    pub original_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// A (table, column) reference by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from: ColumnRef,
    pub to: ColumnRef,
}

/// A relational database description: tables, primary keys, foreign keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub tables: Vec<TableDef>,
    pub primary_keys: Vec<ColumnRef>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl DatabaseSchema {
    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.table_index(name).map(|i| &self.tables[i])
    }

    pub fn column(&self, r: ColumnRef) -> Option<&ColumnDef> {
        self.tables.get(r.table).and_then(|t| t.columns.get(r.column))
    }

    /// Checks key references and case-folded uniqueness of names.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let mut seen_tables = std::collections::BTreeSet::new();
        for t in &self.tables {
            if t.name.is_empty() {
                issues.push("empty table name".to_string());
            }
            if !seen_tables.insert(t.name.to_ascii_lowercase()) {
                issues.push(format!("duplicate table name `{}`", t.name));
            }
            let mut seen_cols = std::collections::BTreeSet::new();
            for c in &t.columns {
                if c.name.is_empty() {
                    issues.push(format!("empty column name in table `{}`", t.name));
                }
                if !seen_cols.insert(c.name.to_ascii_lowercase()) {
                    issues.push(format!("duplicate column `{}` in table `{}`", c.name, t.name));
                }
            }
        }
        for (i, pk) in self.primary_keys.iter().enumerate() {
            if self.column(*pk).is_none() {
                issues.push(format!("primary key #{i} does not resolve"));
            }
        }
        for (i, fk) in self.foreign_keys.iter().enumerate() {
            if self.column(fk.from).is_none() || self.column(fk.to).is_none() {
                issues.push(format!("foreign key #{i} does not resolve"));
            }
        }
        issues
    }

    /// Copy with lowercased identifiers and sorted key lists, for structural
    /// comparison between loaders.
    pub fn normalized(&self) -> DatabaseSchema {
        let mut out = self.clone();
        out.db_id = out.db_id.to_ascii_lowercase();
        for t in &mut out.tables {
            t.name = t.name.to_ascii_lowercase();
            for c in &mut t.columns {
                c.name = c.name.to_ascii_lowercase();
                c.original_type.clear();
            }
        }
        out.primary_keys.sort();
        out.foreign_keys.sort();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Spider,
    Bird,
}

impl Dialect {
    pub fn difficulty_scheme(self) -> crate::sqlkit::Scheme {
        match self {
            Dialect::Spider => crate::sqlkit::Scheme::Spider4,
            Dialect::Bird => crate::sqlkit::Scheme::Bird3,
        }
    }
}

/// One (question, gold SQL, database) element of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleTriple {
    pub index: usize,
    pub question: String,
    pub gold_sql: String,
    pub db_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<crate::sqlkit::DifficultyLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::Invalid(vec![format!("unknown split `{other}`")])),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub name: String,
    pub dialect: Option<Dialect>,
    pub splits: BTreeMap<Split, Vec<ExampleTriple>>,
    pub schemas: BTreeMap<String, DatabaseSchema>,
    pub db_files: BTreeMap<String, PathBuf>,
}

impl DatasetBundle {
    pub fn new(name: impl Into<String>, dialect: Dialect) -> Self {
        DatasetBundle {
            name: name.into(),
            dialect: Some(dialect),
            ..Default::default()
        }
    }

    pub fn dialect(&self) -> Dialect {
        self.dialect.unwrap_or(Dialect::Spider)
    }

    /// Registers schemas, rejecting duplicate db ids.
    pub fn add_schemas(&mut self, schemas: Vec<DatabaseSchema>) -> Result<(), DatasetError> {
        let mut issues = Vec::new();
        for s in schemas {
            if self.schemas.contains_key(&s.db_id) {
                issues.push(format!("duplicate db_id `{}`", s.db_id));
                continue;
            }
            self.schemas.insert(s.db_id.clone(), s);
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(DatasetError::Invalid(issues))
        }
    }

    /// Looks for `{dir}/{db_id}/{db_id}.sqlite` for every loaded schema.
    pub fn discover_db_files(&mut self, dir: &Path) {
        for db_id in self.schemas.keys() {
            let candidate = dir.join(db_id).join(format!("{db_id}.sqlite"));
            if candidate.is_file() {
                self.db_files.insert(db_id.clone(), candidate);
            }
        }
    }

    pub fn split(&self, split: Split) -> &[ExampleTriple] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn schema(&self, db_id: &str) -> Option<&DatabaseSchema> {
        self.schemas.get(db_id)
    }

    pub fn db_file(&self, db_id: &str) -> Option<&Path> {
        self.db_files.get(db_id).map(PathBuf::as_path)
    }

    /// Every example's db id resolves to a loaded schema.
    pub fn check_closure(&self) -> Vec<String> {
        let mut issues = Vec::new();
        for (split, examples) in &self.splits {
            for e in examples {
                if !self.schemas.contains_key(&e.db_id) {
                    issues.push(format!("{split} example {} references unknown db_id `{}`", e.index, e.db_id));
                }
            }
        }
        issues
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("database {path}: {message}")]
    Database { path: PathBuf, message: String },
}

impl DatasetError {
    /// All individual issues carried by this error.
    pub fn issues(&self) -> Vec<String> {
        match self {
            DatasetError::Invalid(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}
