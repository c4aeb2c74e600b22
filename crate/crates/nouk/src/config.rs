//! Line-based configuration documents: `[section]` headers with `key = value`
//! pairs, `#` comments, UTF-8. Unknown keys are errors in strict mode, so
//! consumers *take* keys and the leftovers are reported.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// A parsed configuration document.
#[derive(Debug, Clone, Default)]
pub struct Document {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Document> {
        let mut doc = Document::default();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(Error::Parse {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim().to_ascii_lowercase();
                if name.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "empty section name".into(),
                    });
                }
                doc.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            let section = current.clone().ok_or(Error::Parse {
                line: line_no,
                message: "key outside of any [section]".into(),
            })?;
            let entries = doc.sections.get_mut(&section).unwrap();
            if entries.contains_key(&key) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate key `{key}` in [{section}]"),
                });
            }
            entries.insert(key, (value.trim().to_string(), line_no));
        }
        Ok(doc)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    /// Remove and return a whole section for consumption.
    pub fn take_section(&mut self, name: &str) -> Option<Section> {
        self.sections.remove(name).map(|entries| Section {
            name: name.to_string(),
            entries,
        })
    }

    pub fn section_names(&self) -> Vec<String> {
        self.sections.keys().cloned().collect()
    }

    /// Strict-mode check: any section left unconsumed is an error.
    pub fn ensure_empty(&self) -> Result<()> {
        if let Some(name) = self.sections.keys().next() {
            return Err(Error::Validation(format!("unknown section [{name}]")));
        }
        Ok(())
    }
}

/// A consumed section; keys are removed as they are read and leftovers
/// trigger `Validation` errors.
#[derive(Debug, Clone)]
pub struct Section {
    name: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl Section {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    pub fn take_required(&mut self, key: &str) -> Result<String> {
        self.take(key).ok_or_else(|| {
            Error::Validation(format!("[{}] missing required key `{key}`", self.name))
        })
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => Ok(Some(parse_f64(&v).map_err(|m| {
                Error::Validation(format!("[{}] {key}: {m}", self.name))
            })?)),
        }
    }

    pub fn take_f64_required(&mut self, key: &str) -> Result<f64> {
        let v = self.take_required(key)?;
        parse_f64(&v).map_err(|m| Error::Validation(format!("[{}] {key}: {m}", self.name)))
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|e| Error::Validation(format!("[{}] {key}: {e}", self.name))),
        }
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|e| Error::Validation(format!("[{}] {key}: {e}", self.name))),
        }
    }

    pub fn take_vector(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => Ok(Some(parse_vector(&v).map_err(|m| {
                Error::Validation(format!("[{}] {key}: {m}", self.name))
            })?)),
        }
    }

    pub fn take_matrix(&mut self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => Ok(Some(parse_matrix(&v).map_err(|m| {
                Error::Validation(format!("[{}] {key}: {m}", self.name))
            })?)),
        }
    }

    pub fn remaining_keys(&self) -> Vec<&str> {
        self.entries.keys().map(|k| k.as_str()).collect()
    }

    pub fn ensure_empty(&self) -> Result<()> {
        if let Some(key) = self.entries.keys().next() {
            return Err(Error::Validation(format!(
                "unknown key `{key}` in [{}]",
                self.name
            )));
        }
        Ok(())
    }
}

pub fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let v = match t {
        "pi" => std::f64::consts::PI,
        "-pi" => -std::f64::consts::PI,
        _ => t.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite number `{t}`"))
    }
}

/// Vectors are comma-separated entries in brackets: `[1, 2.5, -3e-2]`.
pub fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    let t = s.trim();
    let inner = t
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("expected `[v1, v2, ...]`, got `{t}`"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(parse_f64).collect()
}

/// Matrices are rows separated by `;` inside one pair of brackets:
/// `[1, 0; 0, 1]`.
pub fn parse_matrix(s: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    let t = s.trim();
    let inner = t
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("expected `[r1; r2; ...]`, got `{t}`"))?;
    let rows: Vec<Vec<f64>> = inner
        .split(';')
        .map(|row| row.split(',').map(parse_f64).collect())
        .collect::<std::result::Result<_, _>>()?;
    let w = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != w) {
        return Err("ragged matrix rows".into());
    }
    Ok(rows)
}

/// A `name(arg1, arg2, ...)` call form used by time-function and preset
/// grammars; bare `name` means no arguments.
pub fn parse_call(s: &str) -> std::result::Result<(String, Vec<f64>), String> {
    let t = s.trim();
    if let Some(open) = t.find('(') {
        let name = t[..open].trim().to_ascii_lowercase();
        let rest = t[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| format!("unterminated call `{t}`"))?;
        let args = if rest.trim().is_empty() {
            Vec::new()
        } else {
            rest.split(',')
                .map(|a| {
                    // Accept `k = 2` style named arguments positionally.
                    let val = a.split('=').next_back().unwrap();
                    parse_f64(val)
                })
                .collect::<std::result::Result<_, _>>()?
        };
        Ok((name, args))
    } else {
        Ok((t.to_ascii_lowercase(), Vec::new()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_values() {
        let text = "# header\n[model]\nkind = diagonal # inline\nn = 4\n\n[run]\nseed = 7\n";
        let mut doc = Document::parse(text).unwrap();
        let mut m = doc.take_section("model").unwrap();
        assert_eq!(m.take("kind").as_deref(), Some("diagonal"));
        assert_eq!(m.take_usize("n").unwrap(), Some(4));
        m.ensure_empty().unwrap();
        let mut r = doc.take_section("run").unwrap();
        assert_eq!(r.take_u64("seed").unwrap(), Some(7));
        doc.ensure_empty().unwrap();
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            Document::parse("[model]\nnonsense line\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Document::parse("key = 1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Document::parse("[model]\na = 1\na = 2\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn strict_mode_flags_unknown_keys() {
        let mut doc = Document::parse("[model]\nbogus = 1\n").unwrap();
        let m = doc.take_section("model").unwrap();
        assert!(matches!(m.ensure_empty(), Err(Error::Validation(_))));
    }

    #[test]
    fn vectors_and_matrices() {
        assert_eq!(parse_vector("[1, 2, -3e-1]").unwrap(), vec![1.0, 2.0, -0.3]);
        assert_eq!(
            parse_matrix("[1, 0; 0, 1]").unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        assert!(parse_matrix("[1, 0; 0]").is_err());
    }

    #[test]
    fn call_forms() {
        assert_eq!(parse_call("const(1.5)").unwrap(), ("const".into(), vec![1.5]));
        assert_eq!(parse_call("preset_ak").unwrap(), ("preset_ak".into(), vec![]));
        let (name, args) = parse_call("preset_bk(c = 2)").unwrap();
        assert_eq!(name, "preset_bk");
        assert_eq!(args, vec![2.0]);
    }
}
