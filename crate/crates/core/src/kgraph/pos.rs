use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use crate::kgraph::subgraph::ConceptSet;
use crate::kgraph::GraphError;
use crate::text::words;

/// Coarse part-of-speech classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pos {
    Noun,
    Adj,
    Adv,
    Verb,
    Other,
}

impl Pos {
    /// Nouns, adjectives and adverbs seed the concept search.
    pub fn is_seed_class(self) -> bool {
        matches!(self, Pos::Noun | Pos::Adj | Pos::Adv)
    }
}

impl FromStr for Pos {
    type Err = String;

    /// Accepts universal tags (`NOUN`, `ADJ`, ...) and Penn Treebank tags (`NNS`, `JJR`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        if up.is_empty() {
            return Err("empty POS tag".into());
        }
        Ok(match up.as_str() {
            "NOUN" | "PROPN" | "N" => Pos::Noun,
            "ADJ" | "A" | "J" => Pos::Adj,
            "ADV" | "R" => Pos::Adv,
            "VERB" | "AUX" | "V" => Pos::Verb,
            t if t.starts_with("NN") => Pos::Noun,
            t if t.starts_with("JJ") => Pos::Adj,
            t if t.starts_with("RB") => Pos::Adv,
            t if t.starts_with("VB") => Pos::Verb,
            _ => Pos::Other,
        })
    }
}

/// Maps a lowercased token to its part of speech, if known.
pub trait PosOracle {
    fn tag(&self, token: &str) -> Option<Pos>;
}

impl PosOracle for HashMap<String, Pos> {
    fn tag(&self, token: &str) -> Option<Pos> {
        self.get(token).copied()
    }
}

impl PosOracle for BTreeMap<String, Pos> {
    fn tag(&self, token: &str) -> Option<Pos> {
        self.get(token).copied()
    }
}

/// Dictionary tagger backed by a `word<TAB>TAG` file. The first entry for
/// a word wins.
#[derive(Clone, Debug, Default)]
pub struct LexiconTagger {
    tags: HashMap<String, Pos>,
}

impl LexiconTagger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, pos: Pos) {
        self.tags.entry(word.trim().to_lowercase()).or_insert(pos);
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut out = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(word), Some(tag)) = (parts.next(), parts.next()) else {
                return Err(GraphError::Malformed {
                    line: i + 1,
                    reason: "expected word<TAB>POS".into(),
                });
            };
            let pos = tag.parse().map_err(|reason| GraphError::Malformed { line: i + 1, reason })?;
            out.insert(word, pos);
        }
        Ok(out)
    }

    pub fn from_path(path: &Path) -> Result<Self, GraphError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    /// Entries sorted by word, for writing back out.
    pub fn sorted_entries(&self) -> Vec<(&str, Pos)> {
        let mut v: Vec<_> = self.tags.iter().map(|(w, p)| (w.as_str(), *p)).collect();
        v.sort();
        v
    }
}

impl PosOracle for LexiconTagger {
    fn tag(&self, token: &str) -> Option<Pos> {
        self.tags.get(token).copied()
    }
}

/// Unique normalized nouns, adjectives and adverbs across `documents`.
/// Tokens the oracle does not know are skipped.
pub fn extract_seed_terms<S: AsRef<str>>(documents: &[S], oracle: &dyn PosOracle) -> ConceptSet {
    let mut set = ConceptSet::new();
    for doc in documents {
        for w in words(doc.as_ref()) {
            if oracle.tag(&w).is_some_and(Pos::is_seed_class) {
                set.insert(&w);
            }
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle() -> HashMap<String, Pos> {
        [("quick", Pos::Adj), ("fox", Pos::Noun), ("quickly", Pos::Adv), ("runs", Pos::Verb)]
            .into_iter()
            .map(|(w, p)| (w.to_string(), p))
            .collect()
    }

    #[test]
    fn keeps_nouns_adjectives_adverbs() {
        let s = extract_seed_terms(&["The quick fox runs quickly"], &oracle());
        let got: Vec<&str> = s.iter().collect();
        assert_eq!(got, ["fox", "quick", "quickly"]);
    }

    #[test]
    fn unique_across_documents() {
        let s = extract_seed_terms(&["a fox", "the fox"], &oracle());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn empty_input() {
        let docs: [&str; 0] = [];
        assert!(extract_seed_terms(&docs, &oracle()).is_empty());
    }

    #[test]
    fn tag_parsing() {
        assert_eq!("NNS".parse::<Pos>().unwrap(), Pos::Noun);
        assert_eq!("jjr".parse::<Pos>().unwrap(), Pos::Adj);
        assert_eq!("RB".parse::<Pos>().unwrap(), Pos::Adv);
        assert_eq!("DET".parse::<Pos>().unwrap(), Pos::Other);
        let t = LexiconTagger::from_reader("fox\tNOUN\nfox\tVERB\nfast\tADV\n".as_bytes()).unwrap();
        assert_eq!(t.tag("fox"), Some(Pos::Noun));
        assert!(LexiconTagger::from_reader("nofield\n".as_bytes()).is_err());
    }
}
