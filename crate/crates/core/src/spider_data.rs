//! Spider-format benchmark loading and schema serialization.
//!
//! Tasks come from a JSON array (`dev.json` style, with `question` or
//! `SpiderSynQuestion`, `db_id` and `query`), schemas from `tables.json`, and
//! databases from `<db_dir>/<db_id>/<db_id>.sqlite`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::TaskContext;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("unknown database `{0}`")]
    UnknownDatabase(String),
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpiderTask {
    pub task_id: String,
    pub db_id: String,
    pub question: String,
    pub gold_sql: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub declared_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForeignKey {
    pub column: String,
    pub foreign_table: String,
    pub foreign_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    pub table_name: String,
    pub columns: Vec<Column>,
    pub primary_keys: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub tables: Vec<TableSchema>,
}

/// Schemas keyed by `db_id`.
#[derive(Debug, Clone, Default)]
pub struct SchemaIndex {
    databases: HashMap<String, DatabaseSchema>,
}

impl SchemaIndex {
    pub fn get(&self, db_id: &str) -> Option<&DatabaseSchema> {
        self.databases.get(db_id)
    }

    pub fn len(&self) -> usize {
        self.databases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.databases.is_empty()
    }

    pub fn insert(&mut self, schema: DatabaseSchema) {
        self.databases.insert(schema.db_id.clone(), schema);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unloadable {
    pub index: usize,
    pub db_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub total: usize,
    pub loaded: usize,
    pub unloadable: Vec<Unloadable>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub db_dir: PathBuf,
    pub tasks: Vec<SpiderTask>,
    pub schemas: SchemaIndex,
    pub report: LoadReport,
}

impl Dataset {
    pub fn db_path(&self, db_id: &str) -> PathBuf {
        db_path(&self.db_dir, db_id)
    }

    /// Tasks paired with their DDL and database path, in dataset order.
    pub fn contexts(&self) -> Result<Vec<TaskContext>, DataError> {
        self.tasks
            .iter()
            .map(|task| {
                Ok(TaskContext {
                    task: task.clone(),
                    schema_ddl: schema_to_ddl(&self.schemas, &task.db_id)?,
                    db_path: self.db_path(&task.db_id),
                })
            })
            .collect()
    }

    pub fn task(&self, task_id: &str) -> Option<&SpiderTask> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }
}

pub fn db_path(db_dir: &Path, db_id: &str) -> PathBuf {
    db_dir.join(db_id).join(format!("{db_id}.sqlite"))
}

#[derive(Deserialize)]
struct RawTask {
    db_id: String,
    #[serde(default)]
    question: Option<String>,
    #[serde(default, rename = "SpiderSynQuestion")]
    syn_question: Option<String>,
    #[serde(default)]
    query: Option<String>,
}

#[derive(Deserialize)]
struct RawTables {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
    column_types: Vec<String>,
    #[serde(default)]
    primary_keys: Vec<KeyRef>,
    #[serde(default)]
    foreign_keys: Vec<(usize, usize)>,
}

/// Newer `tables.json` files list composite primary keys as nested arrays.
#[derive(Deserialize)]
#[serde(untagged)]
enum KeyRef {
    Single(usize),
    Composite(Vec<usize>),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| DataError::Json { path: path.to_path_buf(), source })
}

/// Maps Spider's coarse column types onto the SQL surface used in prompts.
pub fn ddl_type(spider_type: &str) -> String {
    match spider_type.to_ascii_lowercase().as_str() {
        "number" => "INT".to_string(),
        "text" | "others" => "TEXT".to_string(),
        other => other.to_ascii_uppercase(),
    }
}

fn convert_tables(raw: RawTables, path: &Path) -> Result<DatabaseSchema, DataError> {
    let invalid = |message: String| DataError::Invalid { path: path.to_path_buf(), message };
    if raw.column_types.len() != raw.column_names_original.len() {
        return Err(invalid(format!("{}: column_types and column_names_original differ in length", raw.db_id)));
    }
    let mut tables: Vec<TableSchema> = raw
        .table_names_original
        .iter()
        .map(|name| TableSchema {
            table_name: name.clone(),
            columns: Vec::new(),
            primary_keys: Vec::new(),
            foreign_keys: Vec::new(),
        })
        .collect();

    // Column 0 is the `*` placeholder with table index -1.
    let column = |idx: usize| -> Result<(usize, &str), DataError> {
        match raw.column_names_original.get(idx) {
            Some((table, name)) if *table >= 0 && (*table as usize) < tables_len(&raw) => Ok((*table as usize, name)),
            _ => Err(invalid(format!("{}: bad column reference {idx}", raw.db_id))),
        }
    };

    for (idx, (table, name)) in raw.column_names_original.iter().enumerate() {
        if *table < 0 {
            continue;
        }
        let table = usize::try_from(*table)
            .ok()
            .filter(|t| *t < tables.len())
            .ok_or_else(|| invalid(format!("{}: column `{name}` references missing table {table}", raw.db_id)))?;
        tables[table].columns.push(Column { name: name.clone(), declared_type: ddl_type(&raw.column_types[idx]) });
    }
    for key in &raw.primary_keys {
        let ids = match key {
            KeyRef::Single(id) => vec![*id],
            KeyRef::Composite(ids) => ids.clone(),
        };
        for id in ids {
            let (table, name) = column(id)?;
            tables[table].primary_keys.push(name.to_string());
        }
    }
    for &(local, foreign) in &raw.foreign_keys {
        let (table, name) = column(local)?;
        let (foreign_table, foreign_name) = column(foreign)?;
        let fk = ForeignKey {
            column: name.to_string(),
            foreign_table: raw.table_names_original[foreign_table].clone(),
            foreign_column: foreign_name.to_string(),
        };
        tables[table].foreign_keys.push(fk);
    }
    Ok(DatabaseSchema { db_id: raw.db_id, tables })
}

fn tables_len(raw: &RawTables) -> usize {
    raw.table_names_original.len()
}

/// Parses a Spider `tables.json`.
pub fn load_schemas(tables_path: &Path) -> Result<SchemaIndex, DataError> {
    let raw: Vec<RawTables> = read_json(tables_path)?;
    let mut index = SchemaIndex::default();
    for entry in raw {
        index.insert(convert_tables(entry, tables_path)?);
    }
    Ok(index)
}

/// Loads tasks and schemas. Tasks whose database is unknown or missing on
/// disk are left out and listed in the report; task ids are the zero-padded
/// position in the task file, so they are stable across runs.
pub fn load_dataset(tasks_path: &Path, tables_path: &Path, db_dir: &Path) -> Result<Dataset, DataError> {
    let raw_tasks: Vec<RawTask> = read_json(tasks_path)?;
    let schemas = load_schemas(tables_path)?;
    let mut report = LoadReport { total: raw_tasks.len(), ..Default::default() };
    let mut tasks = Vec::with_capacity(raw_tasks.len());

    for (index, raw) in raw_tasks.into_iter().enumerate() {
        let Some(question) = raw.syn_question.or(raw.question) else {
            return Err(DataError::Invalid {
                path: tasks_path.to_path_buf(),
                message: format!("task {index} has no question"),
            });
        };
        let reason = if schemas.get(&raw.db_id).is_none() {
            Some("db_id not present in tables file".to_string())
        } else if !db_path(db_dir, &raw.db_id).is_file() {
            Some(format!("missing database file {}", db_path(db_dir, &raw.db_id).display()))
        } else {
            None
        };
        if let Some(reason) = reason {
            report.unloadable.push(Unloadable { index, db_id: raw.db_id, reason });
            continue;
        }
        tasks.push(SpiderTask { task_id: format!("{index:04}"), db_id: raw.db_id, question, gold_sql: raw.query });
    }
    report.loaded = tasks.len();

    let name = tasks_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Dataset { name, db_dir: db_dir.to_path_buf(), tasks, schemas, report })
}

const RESERVED: &[&str] = &[
    "ALL",
    "AND",
    "AS",
    "BY",
    "CASE",
    "CHECK",
    "COLUMN",
    "CREATE",
    "DEFAULT",
    "DELETE",
    "DISTINCT",
    "DROP",
    "ELSE",
    "FROM",
    "GROUP",
    "HAVING",
    "IN",
    "INDEX",
    "INSERT",
    "INTO",
    "IS",
    "JOIN",
    "KEY",
    "LIMIT",
    "NOT",
    "NULL",
    "ON",
    "OR",
    "ORDER",
    "PRIMARY",
    "REFERENCES",
    "SELECT",
    "SET",
    "TABLE",
    "THEN",
    "TO",
    "UNION",
    "UNIQUE",
    "UPDATE",
    "VALUES",
    "WHEN",
    "WHERE",
];

/// Bare identifier when safe, double-quoted otherwise.
fn ident(name: &str) -> String {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !RESERVED.contains(&name.to_ascii_uppercase().as_str());
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

/// `CREATE TABLE name ( col TYPE, ..., PRIMARY KEY ( col ), FOREIGN KEY ( col ) REFERENCES other (col) );`
pub fn table_ddl(table: &TableSchema) -> String {
    let mut parts: Vec<String> =
        table.columns.iter().map(|c| format!("{} {}", ident(&c.name), c.declared_type)).collect();
    if !table.primary_keys.is_empty() {
        let keys: Vec<String> = table.primary_keys.iter().map(|k| ident(k)).collect();
        parts.push(format!("PRIMARY KEY ( {} )", keys.join(", ")));
    }
    for fk in &table.foreign_keys {
        parts.push(format!(
            "FOREIGN KEY ( {} ) REFERENCES {} ({})",
            ident(&fk.column),
            ident(&fk.foreign_table),
            ident(&fk.foreign_column)
        ));
    }
    format!("CREATE TABLE {} ( {} );", ident(&table.table_name), parts.join(", "))
}

/// DDL for every table of `db_id`, in schema order, separated by blank lines.
pub fn schema_to_ddl(schemas: &SchemaIndex, db_id: &str) -> Result<String, DataError> {
    let schema = schemas.get(db_id).ok_or_else(|| DataError::UnknownDatabase(db_id.to_string()))?;
    Ok(schema.tables.iter().map(table_ddl).collect::<Vec<_>>().join("\n\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLES: &str = r#"[{
        "db_id": "battle_death",
        "table_names_original": ["battle", "death", "ship"],
        "table_names": ["battle", "death", "ship"],
        "column_names_original": [[-1, "*"], [0, "id"], [0, "name"], [0, "date"], [0, "bulgarian_commander"],
            [0, "latin_commander"], [0, "result"], [1, "caused_by_ship_id"], [1, "id"], [1, "note"], [1, "killed"],
            [1, "injured"], [2, "lost_in_battle"], [2, "id"], [2, "name"], [2, "tonnage"], [2, "ship_type"],
            [2, "location"], [2, "disposition_of_ship"]],
        "column_types": ["text", "number", "text", "text", "text", "text", "text", "number", "number", "text",
            "number", "number", "number", "number", "text", "text", "text", "text", "text"],
        "primary_keys": [1, 8, 13],
        "foreign_keys": [[7, 13], [12, 1]]
    }]"#;

    const BATTLE_DEATH_DDL: &str = "CREATE TABLE battle ( id INT, name TEXT, date TEXT, bulgarian_commander TEXT, latin_commander TEXT, result TEXT, PRIMARY KEY ( id ) );\n\nCREATE TABLE death ( caused_by_ship_id INT, id INT, note TEXT, killed INT, injured INT, PRIMARY KEY ( id ), FOREIGN KEY ( caused_by_ship_id ) REFERENCES ship (id) );\n\nCREATE TABLE ship ( lost_in_battle INT, id INT, name TEXT, tonnage TEXT, ship_type TEXT, location TEXT, disposition_of_ship TEXT, PRIMARY KEY ( id ), FOREIGN KEY ( lost_in_battle ) REFERENCES battle (id) );";

    fn schemas() -> SchemaIndex {
        let raw: Vec<RawTables> = serde_json::from_str(TABLES).unwrap();
        let mut index = SchemaIndex::default();
        for entry in raw {
            index.insert(convert_tables(entry, Path::new("tables.json")).unwrap());
        }
        index
    }

    #[test]
    fn battle_schema_matches_prompt_surface() {
        let ddl = schema_to_ddl(&schemas(), "battle_death").unwrap();
        assert_eq!(ddl, BATTLE_DEATH_DDL);
        assert_eq!(ddl, schema_to_ddl(&schemas(), "battle_death").unwrap());
    }

    #[test]
    fn keyless_table() {
        let table = TableSchema {
            table_name: "singer".into(),
            columns: vec![
                Column { name: "name".into(), declared_type: "TEXT".into() },
                Column { name: "age".into(), declared_type: "INT".into() },
            ],
            primary_keys: vec![],
            foreign_keys: vec![],
        };
        assert_eq!(table_ddl(&table), "CREATE TABLE singer ( name TEXT, age INT );");
    }

    #[test]
    fn awkward_identifiers_are_quoted() {
        assert_eq!(ident("order"), "\"order\"");
        assert_eq!(ident("Song Name"), "\"Song Name\"");
        assert_eq!(ident("1st"), "\"1st\"");
        assert_eq!(ident("singer_id"), "singer_id");
    }

    #[test]
    fn composite_keys_and_type_mapping() {
        let raw: Vec<RawTables> = serde_json::from_str(
            r#"[{"db_id": "x", "table_names_original": ["t"],
                 "column_names_original": [[-1, "*"], [0, "a"], [0, "b"], [0, "c"]],
                 "column_types": ["text", "number", "time", "boolean"],
                 "primary_keys": [[1, 2]], "foreign_keys": []}]"#,
        )
        .unwrap();
        let schema = convert_tables(raw.into_iter().next().unwrap(), Path::new("t.json")).unwrap();
        assert_eq!(table_ddl(&schema.tables[0]), "CREATE TABLE t ( a INT, b TIME, c BOOLEAN, PRIMARY KEY ( a, b ) );");
    }

    #[test]
    fn bad_column_reference_is_an_error() {
        let raw: Vec<RawTables> = serde_json::from_str(
            r#"[{"db_id": "x", "table_names_original": ["t"],
                 "column_names_original": [[-1, "*"], [0, "a"]],
                 "column_types": ["text", "number"], "primary_keys": [5], "foreign_keys": []}]"#,
        )
        .unwrap();
        assert!(convert_tables(raw.into_iter().next().unwrap(), Path::new("t.json")).is_err());
    }

    #[test]
    fn unknown_database() {
        assert!(matches!(schema_to_ddl(&schemas(), "nope"), Err(DataError::UnknownDatabase(_))));
    }
}
