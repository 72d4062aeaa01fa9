use std::collections::BTreeMap;
use std::path::Path;

use crate::textenc::TextError;
use crate::text::words;

pub const CLS: u32 = 0;
pub const SEP: u32 = 1;
pub const PAD: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;
pub const SPECIAL_TOKENS: [&str; 5] = ["[CLS]", "[SEP]", "[PAD]", "[MASK]", "[UNK]"];

/// Word-level vocabulary; ids 0-4 are the special tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// Only the special tokens.
    pub fn new() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: BTreeMap::new(),
        };
        for t in SPECIAL_TOKENS {
            v.push(t);
        }
        v
    }

    fn push(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    /// Adds `token` if absent and returns its id.
    pub fn add(&mut self, token: &str) -> u32 {
        self.push(token)
    }

    /// Words of `texts` seen at least `min_freq` times, in first-seen order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut order = Vec::new();
        for text in texts {
            for w in words(text) {
                let c = counts.entry(w.clone()).or_insert(0);
                if *c == 0 {
                    order.push(w);
                }
                *c += 1;
            }
        }
        let mut v = Self::new();
        for w in order {
            if counts[&w] >= min_freq.max(1) {
                v.push(&w);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Id of `token`, `[UNK]` when absent.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIAL_TOKENS.len()
    }

    /// One token per line; the line number is the id.
    pub fn write(&self, path: &Path) -> Result<(), TextError> {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, TextError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, TextError> {
        let lines: Vec<&str> = text.lines().collect();
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if lines.get(i) != Some(special) {
                return Err(TextError::Parse {
                    line: i + 1,
                    reason: format!("expected reserved token {special}"),
                });
            }
        }
        let mut v = Self::new();
        for (i, line) in lines.iter().enumerate().skip(SPECIAL_TOKENS.len()) {
            if line.is_empty() || v.contains(line) {
                return Err(TextError::Parse {
                    line: i + 1,
                    reason: format!("empty or duplicate token {line:?}"),
                });
            }
            v.push(line);
        }
        Ok(v)
    }
}
