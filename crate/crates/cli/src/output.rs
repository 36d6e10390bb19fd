//! CSV and JSON writers. CSV numbers use `{:.16e}` (17 significant digits);
//! JSON numbers use the shortest representation that parses back exactly.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};

use crate::config::Format;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One command's result in both shapes.
pub struct Output {
    pub command: &'static str,
    pub body: Map<String, Value>,
    pub table: Table,
}

impl Output {
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
        obj.insert("command".into(), json!(self.command));
        for (k, v) in &self.body {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.table.header)?;
        for row in &self.table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.to_json())?;
        writeln!(out)?;
        Ok(())
    }

    pub fn emit(&self, format: Format, path: Option<&Path>) -> Result<()> {
        let mut buf = Vec::new();
        match format {
            Format::Csv => self.write_csv(&mut buf)?,
            Format::Json => self.write_json(&mut buf)?,
        }
        match path {
            Some(p) => std::fs::write(p, &buf).with_context(|| format!("writing {}", p.display()))?,
            None => std::io::stdout().lock().write_all(&buf)?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2f64.powi(-50), 6.02214076e23, -0.0, 5e-324] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
            let j = serde_json::to_string(&v).unwrap();
            assert_eq!(j.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn csv_uses_lf_and_header() {
        let mut t = Table::new(&["a", "b"]);
        t.rows.push(vec![num(1.5), "x,y".into()]);
        let out = Output {
            command: "test",
            body: Map::new(),
            table: t,
        };
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "a,b\n1.5000000000000000e0,\"x,y\"\n");
        assert_eq!(out.to_json()["schema_version"], json!(SCHEMA_VERSION));
    }
}
