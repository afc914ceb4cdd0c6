//! `key=value` text blocks used by the binary containers and checkpoints.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Format(format!("header line `{line}` is not key=value")))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// The single value for `key`; duplicates are a format error.
    pub fn get(&self, key: &str) -> Result<&str> {
        let mut found = self.entries.iter().filter(|(k, _)| k == key);
        let first = found.next().ok_or_else(|| Error::Format(format!("header is missing `{key}`")))?;
        if found.next().is_some() {
            return Err(Error::Format(format!("header repeats `{key}`")));
        }
        Ok(&first.1)
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse_value<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| Error::Format(format!("header `{key}` has invalid value `{raw}`")))
    }

    /// Positive integer value.
    pub fn dim(&self, key: &str) -> Result<usize> {
        let v: usize = self.parse_value(key)?;
        if v == 0 {
            return Err(Error::Format(format!("header `{key}` must be at least 1")));
        }
        Ok(v)
    }
}

/// `magic | u32 LE header length | header text`; returns the header and the remaining bytes.
pub fn split_block<'a>(bytes: &'a [u8], magic: &[u8]) -> Result<(Header, &'a [u8])> {
    if bytes.len() < magic.len() || &bytes[..magic.len()] != magic {
        return Err(Error::Format(format!("bad magic, expected `{}`", String::from_utf8_lossy(magic))));
    }
    let rest = &bytes[magic.len()..];
    if rest.len() < 4 {
        return Err(Error::Format("file ends inside the header length".into()));
    }
    let len = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
    let rest = &rest[4..];
    if rest.len() < len {
        return Err(Error::Format(format!("header claims {len} bytes, only {} present", rest.len())));
    }
    let text = std::str::from_utf8(&rest[..len]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    Ok((Header::parse(text)?, &rest[len..]))
}

pub fn join_block(magic: &[u8], header: &Header) -> Vec<u8> {
    let text = header.render();
    let mut out = Vec::with_capacity(magic.len() + 4 + text.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out
}
