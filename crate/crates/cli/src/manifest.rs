//! `#pumpwatch-manifest-v1` records passed between piped commands.
//!
//! ```text
//! #pumpwatch-manifest-v1
//! corpus=out/corpus.jsonl
//! model_dir=out/model
//! f1=0.931
//! ```
//!
//! Every command prints one on standard output. A command that lacks an
//! input flag reads it from the manifest on standard input and carries the
//! upstream entries forward.

use std::fmt;

pub const MANIFEST_HEADER: &str = "#pumpwatch-manifest-v1";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some(MANIFEST_HEADER) => {}
            Some(other) => return Err(format!("expected `{MANIFEST_HEADER}` on standard input, got `{other}`")),
            None => return Err("standard input is empty".into()),
        }
        let mut m = Manifest::default();
        for line in lines {
            if line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("manifest line `{line}` is not key=value"))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let v = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.to_string(), v)),
        }
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.set(key, format!("{value:.6}"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{MANIFEST_HEADER}")?;
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_override() {
        let mut m = Manifest::default();
        m.set("corpus", "a b/c.jsonl");
        m.set("f1", 0.5);
        m.set("corpus", "d.jsonl");
        let back = Manifest::parse(&m.to_string()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("corpus"), Some("d.jsonl"));
    }

    #[test]
    fn rejects_foreign_input() {
        assert!(Manifest::parse("").is_err());
        assert!(Manifest::parse("hello\n").is_err());
        assert!(Manifest::parse("#pumpwatch-manifest-v1\nnot a pair\n").is_err());
        assert!(Manifest::parse("#pumpwatch-manifest-v1\n# note\n\nk=v\n").is_ok());
    }
}
