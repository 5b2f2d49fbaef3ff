//! Tables with a metadata header, written as CSV or JSON.
//!
//! Numbers are printed with 12 significant digits in both formats, so a
//! table reads back identically whichever format was chosen.

use std::io::{self, Write};

use serde_json::{json, Map, Value};

use gqfi_core::CONVENTIONS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// `{:.11e}`: 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.11e}")
    }
}

/// `v` rounded to 12 significant digits.
pub fn round12(v: f64) -> f64 {
    fmt_num(v).parse().unwrap_or(v)
}

/// Recursively rounds every number in a JSON value to 12 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => json!(round12(x)),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub command: String,
    /// Effective configuration, echoed verbatim.
    pub config: Value,
    /// Extra metadata entries (summary values, crossings, notes).
    pub extra: Vec<(String, Value)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(command: &str, config: Value, columns: &[&str]) -> Self {
        Table {
            command: command.to_string(),
            config,
            extra: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: Value) {
        self.extra.push((key.to_string(), round_json(value)));
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn metadata(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        m.insert("command".into(), json!(self.command));
        m.insert("conventions".into(), json!(CONVENTIONS));
        m.insert("config".into(), round_json(self.config.clone()));
        for (k, v) in &self.extra {
            m.insert(k.clone(), v.clone());
        }
        m
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => {
                serde_json::to_writer_pretty(&mut *out, &self.to_json())?;
                writeln!(out)
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut o = Map::new();
                for (c, cell) in self.columns.iter().zip(row) {
                    let v = match cell {
                        Cell::Num(x) if x.is_finite() => json!(round12(*x)),
                        Cell::Int(n) => json!(n),
                        Cell::Bool(b) => json!(b),
                        Cell::Num(_) | Cell::Empty => Value::Null,
                        Cell::Text(t) => json!(t),
                    };
                    o.insert(c.clone(), v);
                }
                Value::Object(o)
            })
            .collect();
        json!({ "metadata": Value::Object(self.metadata()), "rows": rows })
    }

    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "# gqfi {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "# command: {}", self.command)?;
        writeln!(out, "# conventions: {CONVENTIONS}")?;
        writeln!(out, "# config: {}", round_json(self.config.clone()))?;
        for (k, v) in &self.extra {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row
                .iter()
                .map(|cell| match cell {
                    Cell::Num(x) => fmt_num(*x),
                    Cell::Int(n) => n.to_string(),
                    Cell::Bool(b) => b.to_string(),
                    Cell::Text(t) => t.replace([',', '\n'], ";"),
                    Cell::Empty => String::new(),
                })
                .collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.5), "5.00000000000e-1");
        assert_eq!(fmt_num(-1234.5678), "-1.23456780000e3");
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new("qfi", json!({"which": "phi"}), &["phi", "qfi", "flags"]);
        t.push(vec![0.5.into(), Cell::Empty, "a,b".into()]);
        let mut buf = Vec::new();
        t.write(Format::Csv, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("# gqfi "));
        assert!(s.contains("# conventions: hbar=2, vacuum variance 1, ordering QQPP\n"));
        assert!(s.ends_with("phi,qfi,flags\n5.00000000000e-1,,a;b\n"));
    }

    #[test]
    fn json_layout() {
        let mut t = Table::new("qfi", json!({}), &["x"]);
        t.push(vec![f64::NAN.into()]);
        let v = t.to_json();
        assert_eq!(v["rows"][0]["x"], Value::Null);
        assert_eq!(v["metadata"]["conventions"], json!(CONVENTIONS));
    }
}
