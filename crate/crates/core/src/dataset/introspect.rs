use std::path::Path;

use rusqlite::{Connection, OpenFlags};

use super::{ColumnDef, ColumnRef, ColumnType, DatabaseSchema, DatasetError, ForeignKey, TableDef};

/// Reads a schema straight from a SQLite file's metadata.
///
/// The db id is taken from the file stem. Foreign keys whose target cannot be
/// resolved are skipped with a warning; shipped benchmark databases contain
/// a handful of those.
pub fn introspect_database(db_file: &Path) -> Result<DatabaseSchema, DatasetError> {
    let err = |e: rusqlite::Error| DatasetError::Database {
        path: db_file.to_path_buf(),
        message: e.to_string(),
    };
    if !db_file.is_file() {
        return Err(DatasetError::Io {
            path: db_file.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "database file not found"),
        });
    }
    let conn = Connection::open_with_flags(db_file, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
        .map_err(err)?;

    let table_names: Vec<String> = {
        let mut stmt = conn
            .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid")
            .map_err(err)?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(err)?;
        rows.collect::<Result<_, _>>().map_err(err)?
    };

    let mut tables = Vec::with_capacity(table_names.len());
    let mut primary_keys = Vec::new();
    for (ti, name) in table_names.iter().enumerate() {
        let mut stmt = conn
            .prepare(&format!("PRAGMA table_info(\"{}\")", name.replace('"', "\"\"")))
            .map_err(err)?;
        let cols = stmt
            .query_map([], |r| {
                Ok((
                    r.get::<_, String>(1)?,
                    r.get::<_, Option<String>>(2)?.unwrap_or_default(),
                    r.get::<_, i64>(5)?,
                ))
            })
            .map_err(err)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let mut pk_cols: Vec<(i64, usize)> = Vec::new();
        let columns = cols
            .into_iter()
            .enumerate()
            .map(|(ci, (cname, ctype, pk))| {
                if pk > 0 {
                    pk_cols.push((pk, ci));
                }
                ColumnDef {
                    name: cname,
                    data_type: ColumnType::from_declared(&ctype),
                    original_type: ctype,
                }
            })
            .collect();
        pk_cols.sort();
        primary_keys.extend(pk_cols.into_iter().map(|(_, ci)| ColumnRef { table: ti, column: ci }));
        tables.push(TableDef {
            name: name.clone(),
            columns,
        });
    }

    let mut foreign_keys = Vec::new();
    for (ti, name) in table_names.iter().enumerate() {
        let mut stmt = conn
            .prepare(&format!("PRAGMA foreign_key_list(\"{}\")", name.replace('"', "\"\"")))
            .map_err(err)?;
        let fks = stmt
            .query_map([], |r| {
                Ok((
                    r.get::<_, String>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, Option<String>>(4)?,
                ))
            })
            .map_err(err)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        for (target_table, from_col, to_col) in fks {
            let from = tables[ti].column_index(&from_col).map(|c| ColumnRef { table: ti, column: c });
            let to = tables
                .iter()
                .position(|t| t.name.eq_ignore_ascii_case(&target_table))
                .and_then(|tt| {
                    let col = match &to_col {
                        Some(c) => tables[tt].column_index(c),
                        None => primary_keys.iter().find(|pk| pk.table == tt).map(|pk| pk.column),
                    };
                    col.map(|c| ColumnRef { table: tt, column: c })
                });
            match (from, to) {
                (Some(from), Some(to)) => foreign_keys.push(ForeignKey { from, to }),
                _ => tracing::warn!(
                    db = %db_file.display(),
                    "skipping unresolved foreign key {name}.{from_col} -> {target_table}.{}",
                    to_col.as_deref().unwrap_or("<pk>")
                ),
            }
        }
    }

    let db_id = db_file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(DatabaseSchema {
        db_id,
        tables,
        primary_keys,
        foreign_keys,
    })
}
