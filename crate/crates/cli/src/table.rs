//! CSV files with a schema line: `# <schema> key=value ...` followed by a
//! header row and data rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: String,
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &str, columns: Vec<String>) -> Self {
        Self {
            schema: schema.to_string(),
            meta: BTreeMap::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut first = format!("# {}", self.schema);
        for (k, v) in &self.meta {
            first.push_str(&format!(" {k}={v}"));
        }
        first.push('\n');
        let mut w = csv::Writer::from_writer(first.into_bytes());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_bytes())
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let mut tokens = first.strip_prefix('#').ok_or("missing schema line")?.split_whitespace();
        let schema = tokens.next().ok_or("empty schema line")?.to_string();
        let mut meta = BTreeMap::new();
        for t in tokens {
            let (k, v) = t.split_once('=').ok_or_else(|| format!("bad schema token `{t}`"))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let mut r = csv::Reader::from_reader(rest.as_bytes());
        let columns = r
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(String::from)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            schema,
            meta,
            columns,
            rows,
        })
    }

    /// Reads a table and checks its schema, reporting failures as
    /// analysis errors.
    pub fn read(path: &Path, schemas: &[&str]) -> Result<Self, CliError> {
        let err = |msg: String| CliError::Analysis(format!("{}: {msg}", path.display()));
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let t = Self::parse(&text).map_err(err)?;
        if !schemas.contains(&t.schema.as_str()) {
            return Err(err(format!(
                "schema `{}` where {} was expected",
                t.schema,
                schemas.join(" or ")
            )));
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, String> {
        let i = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| format!("missing column `{name}`"))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[i]
                    .parse()
                    .map_err(|_| format!("row {}: `{}` in column `{name}` is not a number", r + 1, row[i]))
            })
            .collect()
    }

    pub fn meta_num<T: std::str::FromStr>(&self, key: &str) -> Option<T> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }
}

/// Shortest representation that parses back to the same value.
pub fn fmt(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-3..1e6).contains(&a) || !a.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}
