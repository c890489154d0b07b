//! `#pumpwatch-report-v1` report files: `key=value` lines followed by
//! named tab-separated tables.
//!
//! ```text
//! #pumpwatch-report-v1
//! kind=eval
//! f1=0.93
//! %table confusion
//! tp	fp	fn	tn
//! 10	1	0	99
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

pub const REPORT_HEADER: &str = "#pumpwatch-report-v1";
const TABLE_PREFIX: &str = "%table ";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    entries: Vec<(String, String)>,
    tables: Vec<(String, String)>,
}

impl Report {
    /// Starts a report with its kind and the code version.
    pub fn new(kind: &str) -> Self {
        let mut r = Report::default();
        r.set("kind", kind);
        r.set("code_version", crate::CODE_VERSION);
        r
    }

    /// Adds or replaces a key. Newlines in values are escaped on output.
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let v = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.to_string(), v)),
        }
        self
    }

    pub fn set_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.set(key, format!("{value:.6}"))
    }

    pub fn extend(&mut self, pairs: impl IntoIterator<Item = (String, String)>) -> &mut Self {
        for (k, v) in pairs {
            self.set(&k, v);
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn add_table(&mut self, name: &str, tsv: impl Into<String>) -> &mut Self {
        self.tables.push((name.to_string(), tsv.into()));
        self
    }

    pub fn table(&self, name: &str) -> Option<&str> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{REPORT_HEADER}");
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={}", v.replace('\\', "\\\\").replace('\n', "\\n"));
        }
        for (name, t) in &self.tables {
            let _ = writeln!(s, "{TABLE_PREFIX}{name}");
            s.push_str(t);
            if !t.ends_with('\n') {
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(REPORT_HEADER) {
            return Err(format!("missing {REPORT_HEADER} header"));
        }
        let mut r = Report::default();
        let mut current: Option<(String, String)> = None;
        for line in lines {
            if let Some(name) = line.strip_prefix(TABLE_PREFIX) {
                r.tables.extend(current.take());
                current = Some((name.to_string(), String::new()));
            } else if let Some((_, t)) = current.as_mut() {
                t.push_str(line);
                t.push('\n');
            } else if !line.trim().is_empty() {
                let (k, v) = line.split_once('=').ok_or_else(|| format!("bad report line `{line}`"))?;
                r.entries.push((k.to_string(), unescape(v)));
            }
        }
        r.tables.extend(current);
        Ok(r)
    }

    pub fn entries(&self) -> BTreeMap<&str, &str> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }

    /// Writes to `path`, refusing to replace an existing file unless `force`.
    pub fn write(&self, path: impl AsRef<Path>, force: bool) -> io::Result<()> {
        write_new(path, self.to_text(), force)
    }
}

fn unescape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    let mut chars = v.chars();
    while let Some(c) = chars.next() {
        match (c, chars.clone().next()) {
            ('\\', Some('n')) => {
                out.push('\n');
                chars.next();
            }
            ('\\', Some('\\')) => {
                out.push('\\');
                chars.next();
            }
            _ => out.push(c),
        }
    }
    out
}

/// Writes `contents`, failing with `AlreadyExists` unless `force`.
pub fn write_new(path: impl AsRef<Path>, contents: impl AsRef<[u8]>, force: bool) -> io::Result<()> {
    let path = path.as_ref();
    if !force && path.exists() {
        return Err(io::Error::new(
            io::ErrorKind::AlreadyExists,
            format!("{} exists (use --force to overwrite)", path.display()),
        ));
    }
    std::fs::write(path, contents)
}
