use std::collections::BTreeMap;
use std::path::Path;

use crate::textenc::TextError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
}

/// Word-to-polarity opinion lexicon. Emoticons may be listed as words.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SentimentLexicon {
    entries: BTreeMap<String, Polarity>,
}

const BUNDLED: &str = include_str!("../../data/lexicon.tsv");

impl SentimentLexicon {
    /// TSV lines `word<TAB>pos|neg`; `#` comments and blank lines skipped.
    /// A word listed with both polarities is rejected.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| TextError::Parse { line: i + 1, reason };
            let (word, tag) = line.split_once('\t').ok_or_else(|| err("expected word<TAB>pos|neg".into()))?;
            let pol = match tag.trim() {
                "pos" | "positive" => Polarity::Positive,
                "neg" | "negative" => Polarity::Negative,
                other => return Err(err(format!("unknown polarity {other:?}"))),
            };
            let word = word.trim().to_lowercase();
            if word.is_empty() {
                return Err(err("empty word".into()));
            }
            if let Some(prev) = entries.insert(word.clone(), pol) {
                if prev != pol {
                    return Err(err(format!("{word:?} listed with both polarities")));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self, TextError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Small general-purpose English lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled lexicon parses")
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Polarity)>) -> Self {
        Self {
            entries: pairs.into_iter().map(|(w, p)| (w.to_lowercase(), p)).collect(),
        }
    }

    pub fn polarity(&self, word: &str) -> Option<Polarity> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Polarity)> {
        self.entries.iter().map(|(w, &p)| (w.as_str(), p))
    }

    pub fn to_tsv(&self) -> String {
        self.iter()
            .map(|(w, p)| format!("{w}\t{}\n", if p == Polarity::Positive { "pos" } else { "neg" }))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_conflicts() {
        let l = SentimentLexicon::parse("# c\ngood\tpos\nBad\tneg\n\n:)\tpos\n").unwrap();
        assert_eq!(l.polarity("good"), Some(Polarity::Positive));
        assert_eq!(l.polarity("bad"), Some(Polarity::Negative));
        assert_eq!(l.polarity(":)"), Some(Polarity::Positive));
        assert_eq!(l.polarity("meh"), None);
        assert!(SentimentLexicon::parse("good\tpos\ngood\tneg\n").is_err());
        assert!(SentimentLexicon::parse("good\tmaybe\n").is_err());
        assert_eq!(SentimentLexicon::parse(&l.to_tsv()).unwrap(), l);
    }

    #[test]
    fn bundled_has_both_polarities() {
        let l = SentimentLexicon::bundled();
        assert!(l.iter().filter(|(_, p)| *p == Polarity::Positive).count() >= 30);
        assert!(l.iter().filter(|(_, p)| *p == Polarity::Negative).count() >= 30);
    }
}
