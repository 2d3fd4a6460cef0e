//! Tables and their CSV and JSON renderings.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

/// Version of the JSON mirror layout.
pub const JSON_SCHEMA: &str = "oscdamp-table/1";

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(x) => write!(f, "{x:?}"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl Cell {
    fn to_json(&self) -> Value {
        match self {
            Cell::Num(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<i64> for Cell {
    fn from(i: i64) -> Self {
        Cell::Int(i)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File stem of the output.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `key: value` lines for the header.
    pub notes: Vec<(String, String)>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl fmt::Display) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }
}

/// Provenance recorded at the top of every output file.
#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub rng: Option<String>,
    pub seed: Option<u64>,
}

impl Header {
    fn lines(&self, table: &Table) -> Vec<(String, String)> {
        let mut out = vec![
            ("command".to_string(), self.command.clone()),
            ("version".to_string(), self.version.clone()),
            ("config_sha256".to_string(), self.config_sha256.clone()),
            ("rng".to_string(), self.rng.clone().unwrap_or_else(|| "none".into())),
            ("seed".to_string(), self.seed.map_or_else(|| "none".into(), |s| s.to_string())),
        ];
        out.extend(table.notes.iter().cloned());
        out
    }
}

pub fn render_csv(header: &Header, table: &Table) -> Result<String, String> {
    let mut text = String::new();
    for (k, v) in header.lines(table) {
        text.push_str(&format!("# {k}: {v}\n"));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&table.columns).map_err(|e| e.to_string())?;
    for row in &table.rows {
        w.write_record(row.iter().map(|c| c.to_string())).map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    text.push_str(std::str::from_utf8(&bytes).map_err(|e| e.to_string())?);
    Ok(text)
}

pub fn render_json(header: &Header, table: &Table) -> String {
    let meta: serde_json::Map<String, Value> = header.lines(table).into_iter().map(|(k, v)| (k, json!(v))).collect();
    let rows: Vec<Value> = table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::to_json).collect())).collect();
    let doc = json!({
        "schema": JSON_SCHEMA,
        "name": table.name,
        "header": meta,
        "columns": table.columns,
        "rows": rows,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("table serialises");
    s.push('\n');
    s
}

/// Write `table` as `<dir>/<name>.csv`, plus `.json` when requested.
pub fn write_table(dir: &Path, header: &Header, table: &Table, json: bool) -> Result<Vec<PathBuf>, String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{}.csv", table.name));
    fs::write(&csv_path, render_csv(header, table)?).map_err(|e| format!("{}: {e}", csv_path.display()))?;
    written.push(csv_path);
    if json {
        let path = dir.join(format!("{}.json", table.name));
        fs::write(&path, render_json(header, table)).map_err(|e| format!("{}: {e}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Header, Table) {
        let header = Header {
            command: "fano".into(),
            version: "0.1.0".into(),
            config_sha256: "ab".repeat(32),
            rng: None,
            seed: None,
        };
        let mut t = Table::new("fano", &["At", "Q_down"]);
        t.push(vec![0.5.into(), 0.25.into()]);
        t.push(vec![1.0.into(), Cell::Num(1e-20)]);
        t.note("plateau", 0.1);
        (header, t)
    }

    #[test]
    fn csv_has_commented_header_and_rows() {
        let (h, t) = sample();
        let text = render_csv(&h, &t).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# command: fano");
        assert!(lines.iter().any(|l| *l == "# rng: none"));
        assert!(lines.iter().any(|l| *l == "# plateau: 0.1"));
        assert_eq!(lines[lines.len() - 3], "At,Q_down");
        assert_eq!(lines[lines.len() - 1], "1.0,1e-20");
    }

    #[test]
    fn json_mirror_round_trips() {
        let (h, t) = sample();
        let v: Value = serde_json::from_str(&render_json(&h, &t)).unwrap();
        assert_eq!(v["schema"], JSON_SCHEMA);
        assert_eq!(v["rows"][0][1], 0.25);
        assert_eq!(v["header"]["seed"], "none");
    }
}
