//! Reader for the `tables.json` interchange layout shared by Spider and BIRD.

use std::path::Path;

use serde::Deserialize;

use super::{read_file, ColumnDef, ColumnRef, ColumnType, DatabaseSchema, DatasetError, ForeignKey, TableDef};

#[derive(Debug, Deserialize)]
struct CatalogEntry {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
    #[serde(default)]
    column_types: Vec<String>,
    #[serde(default)]
    primary_keys: Vec<KeySpec>,
    #[serde(default)]
    foreign_keys: Vec<(usize, usize)>,
}

/// BIRD writes composite primary keys as nested arrays.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum KeySpec {
    Single(usize),
    Composite(Vec<usize>),
}

/// Loads every database description in a schema catalog file.
pub fn load_schemas(path: &Path) -> Result<Vec<DatabaseSchema>, DatasetError> {
    let text = read_file(path)?;
    parse_catalog(&text).map_err(|e| match e {
        DatasetError::Format { message, .. } => DatasetError::Format {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_catalog(text: &str) -> Result<Vec<DatabaseSchema>, DatasetError> {
    let entries: Vec<CatalogEntry> = serde_json::from_str(text).map_err(|e| DatasetError::Format {
        path: Default::default(),
        message: e.to_string(),
    })?;

    let mut issues = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for entry in entries {
        if !seen.insert(entry.db_id.clone()) {
            issues.push(format!("duplicate db_id `{}`", entry.db_id));
            continue;
        }
        match convert(entry) {
            Ok(schema) => out.push(schema),
            Err(mut errs) => issues.append(&mut errs),
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(DatasetError::Invalid(issues))
    }
}

fn convert(entry: CatalogEntry) -> Result<DatabaseSchema, Vec<String>> {
    let db = &entry.db_id.clone();
    let mut issues = Vec::new();
    if db.is_empty() {
        issues.push("catalog entry with empty db_id".to_string());
    }

    let mut tables: Vec<TableDef> = entry
        .table_names_original
        .iter()
        .map(|n| TableDef {
            name: n.clone(),
            columns: Vec::new(),
        })
        .collect();

    // Global column index -> (table, position); index 0 is the `*` sentinel.
    let mut global: Vec<Option<ColumnRef>> = Vec::with_capacity(entry.column_names_original.len());
    for (i, (table_idx, name)) in entry.column_names_original.iter().enumerate() {
        if *table_idx < 0 {
            global.push(None);
            continue;
        }
        let t = *table_idx as usize;
        let Some(table) = tables.get_mut(t) else {
            issues.push(format!("{db}: column #{i} `{name}` points at missing table #{t}"));
            global.push(None);
            continue;
        };
        let raw_type = entry.column_types.get(i).cloned().unwrap_or_default();
        global.push(Some(ColumnRef {
            table: t,
            column: table.columns.len(),
        }));
        table.columns.push(ColumnDef {
            name: name.clone(),
            data_type: ColumnType::from_declared(&raw_type),
            original_type: raw_type,
        });
    }

    let resolve = |idx: usize, what: &str, ordinal: usize, issues: &mut Vec<String>| -> Option<ColumnRef> {
        match global.get(idx).copied().flatten() {
            Some(r) => Some(r),
            None => {
                issues.push(format!(
                    "{db}: {what} #{ordinal} references column index {idx}, which does not resolve ({} columns)",
                    global.len()
                ));
                None
            }
        }
    };

    let mut primary_keys = Vec::new();
    let mut ordinal = 0;
    for spec in &entry.primary_keys {
        let indices = match spec {
            KeySpec::Single(i) => vec![*i],
            KeySpec::Composite(v) => v.clone(),
        };
        for idx in indices {
            if let Some(r) = resolve(idx, "primary key", ordinal, &mut issues) {
                primary_keys.push(r);
            }
            ordinal += 1;
        }
    }

    let mut foreign_keys = Vec::new();
    for (ordinal, (from, to)) in entry.foreign_keys.iter().enumerate() {
        let f = resolve(*from, "foreign key", ordinal, &mut issues);
        let t = resolve(*to, "foreign key", ordinal, &mut issues);
        if let (Some(from), Some(to)) = (f, t) {
            foreign_keys.push(ForeignKey { from, to });
        }
    }

    let schema = DatabaseSchema {
        db_id: entry.db_id,
        tables,
        primary_keys,
        foreign_keys,
    };
    issues.extend(schema.validate().into_iter().map(|m| format!("{db}: {m}")));
    if issues.is_empty() {
        Ok(schema)
    } else {
        Err(issues)
    }
}
