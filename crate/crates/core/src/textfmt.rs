//! Line-oriented, tab-separated text used by the persisted artifacts.
//!
//! Fields are escaped so arbitrary category labels survive a round trip.
//! Floats use Rust's shortest round-trip formatting, so values read back
//! bit-identical.

use crate::error::{Error, Result};

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

pub fn join(fields: &[String]) -> String {
    fields.iter().map(|f| escape(f)).collect::<Vec<_>>().join("\t")
}

/// Sequential reader over the non-empty lines of a document.
pub struct Lines<'a> {
    what: &'static str,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    pub fn new(what: &'static str, text: &'a str) -> Self {
        Lines {
            what,
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    pub fn error(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            what: self.what,
            line: self.line,
            reason: reason.into(),
        }
    }

    /// Next line split into unescaped fields, or `None` at end of input.
    pub fn next_fields(&mut self) -> Result<Option<Vec<String>>> {
        for (i, raw) in self.inner.by_ref() {
            self.line = i + 1;
            if raw.is_empty() {
                continue;
            }
            let fields = raw
                .split('\t')
                .map(unescape)
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Format {
                    what: self.what,
                    line: i + 1,
                    reason: "bad escape sequence".into(),
                })?;
            return Ok(Some(fields));
        }
        Ok(None)
    }

    pub fn expect_fields(&mut self) -> Result<Vec<String>> {
        self.next_fields()?
            .ok_or_else(|| self.error("unexpected end of input"))
    }

    /// Reads `key<TAB>value` and checks the key.
    pub fn expect_kv(&mut self, key: &str) -> Result<String> {
        let fields = self.expect_fields()?;
        match fields.as_slice() {
            [k, v] if k == key => Ok(v.clone()),
            _ => Err(self.error(format!("expected `{key}`"))),
        }
    }

    /// Fails if any non-empty line remains.
    pub fn finish(mut self) -> Result<()> {
        match self.next_fields()? {
            None => Ok(()),
            Some(_) => Err(self.error("unexpected trailing content")),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| self.error(format!("cannot parse `{s}`")))
    }
}
