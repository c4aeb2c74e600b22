//! Byte-stable report emission: CSV with a fixed header row and `\n` line
//! endings, JSON with sorted keys. Floats print in shortest round-trip form,
//! so identical runs produce identical bytes.

use std::collections::BTreeMap;

/// A rectangular report plus metadata; the one shape every subcommand emits.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub meta: BTreeMap<String, String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        self.meta.insert(key.to_string(), value.into());
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            for (i, line) in v.split('\n').enumerate() {
                if v.contains('\n') {
                    if i == 0 {
                        out.push_str(&format!("# {k}:\n"));
                    }
                    if !line.is_empty() {
                        out.push_str(&format!("#   {line}\n"));
                    }
                } else {
                    out.push_str(&format!("# {k} = {line}\n"));
                }
            }
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|c| escape_csv(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut out = String::from("{");
        out.push_str("\"columns\":[");
        out.push_str(
            &self
                .columns
                .iter()
                .map(|c| json_string(c))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push_str("],\"meta\":{");
        out.push_str(
            &self
                .meta
                .iter()
                .map(|(k, v)| format!("{}:{}", json_string(k), json_string(v)))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push_str("},\"rows\":[");
        out.push_str(
            &self
                .rows
                .iter()
                .map(|row| {
                    format!(
                        "[{}]",
                        row.iter().map(|c| json_string(c)).collect::<Vec<_>>().join(",")
                    )
                })
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push_str("]}");
        out.push('\n');
        out
    }
}

fn escape_csv(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_are_deterministic() {
        let mut t = Table::new(&["a", "b"]);
        t.set_meta("seed", "42");
        t.set_meta("alpha", "0.1");
        t.push_row(vec!["1".into(), "x,y".into()]);
        let c1 = t.to_csv();
        let c2 = t.to_csv();
        assert_eq!(c1, c2);
        assert!(c1.starts_with("# alpha = 0.1\n# seed = 42\n"));
        assert!(c1.contains("\"x,y\""));
        let j = t.to_json();
        assert!(j.contains("\"alpha\":\"0.1\""));
        assert!(j.ends_with("]}\n"));
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, std::f64::consts::PI] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
