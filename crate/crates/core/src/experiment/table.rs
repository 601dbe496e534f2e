//! Result tables with a provenance header, written as CSV.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::model::HBAR_MEV_PS;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: &str, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
    /// Key/value lines emitted as `# key: value` before the header.
    pub provenance: BTreeMap<String, String>,
    /// Row indices holding documented NaN sentinels.
    pub sentinel_rows: Vec<usize>,
}

impl ResultTable {
    pub fn new(name: &str, columns: Vec<Column>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
            provenance: BTreeMap::new(),
            sentinel_rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn push_sentinel(&mut self, row: Vec<f64>) {
        self.sentinel_rows.push(self.rows.len());
        self.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// NaN outside the declared sentinel rows.
    pub fn undeclared_nan(&self) -> Option<(usize, String)> {
        for (r, row) in self.rows.iter().enumerate() {
            if self.sentinel_rows.binary_search(&r).is_ok() {
                continue;
            }
            if let Some(c) = row.iter().position(|v| v.is_nan()) {
                return Some((r, self.columns[c].name.clone()));
            }
        }
        None
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (k, v) in &self.provenance {
            writeln!(out, "# {k}: {v}")?;
        }
        let units: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{}={}", c.name, c.unit))
            .collect();
        writeln!(out, "# units: {}", units.join(", "))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_value(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

/// Shortest round-trip representation; NaN spelled `NaN`.
fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:?}")
    }
}

/// Adds converted columns: every `ps` column gains an `ns` twin, and every
/// `meV` column without zeros gains `ħ/E` in ps.
pub fn report_units(t: &ResultTable) -> ResultTable {
    let mut out = t.clone();
    let mut extra: Vec<(Column, usize, fn(f64) -> f64)> = Vec::new();
    for (i, c) in t.columns.iter().enumerate() {
        match c.unit.as_str() {
            "ps" => {
                let name = c.name.strip_suffix("_ps").unwrap_or(&c.name);
                extra.push((Column::new(&format!("{name}_ns"), "ns"), i, |v| v / 1000.0));
            }
            "meV" if t.rows.iter().all(|r| r[i] != 0.0) => {
                extra.push((
                    Column::new(&format!("hbar_over_{}_ps", c.name), "ps"),
                    i,
                    |v| HBAR_MEV_PS / v,
                ));
            }
            _ => {}
        }
    }
    for (col, _, _) in &extra {
        out.columns.push(col.clone());
    }
    for (row, src) in out.rows.iter_mut().zip(&t.rows) {
        for (_, i, f) in &extra {
            row.push(f(src[*i]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_conversion_columns() {
        let mut t = ResultTable::new("x", vec![Column::new("g_a", "meV"), Column::new("t0_ps", "ps")]);
        t.push(vec![0.1, 13500.0]);
        let u = report_units(&t);
        assert_eq!(u.columns.len(), 4);
        let ns = u.column("t0_ns").unwrap()[0];
        assert_eq!(ns, 13.5);
        let tg = u.column("hbar_over_g_a_ps").unwrap()[0];
        assert!((tg - 6.582119569).abs() < 1e-9);
    }

    #[test]
    fn csv_has_provenance_and_sentinels() {
        let mut t = ResultTable::new("x", vec![Column::new("a", "1")]);
        t.provenance.insert("tool".into(), "ccgate".into());
        t.push(vec![1.5]);
        t.push_sentinel(vec![f64::NAN]);
        assert!(t.undeclared_nan().is_none());
        let s = t.to_csv_string();
        assert_eq!(s, "# tool: ccgate\n# units: a=1\na\n1.5\nNaN\n");
        t.push(vec![f64::NAN]);
        assert_eq!(t.undeclared_nan(), Some((2, "a".into())));
    }
}
