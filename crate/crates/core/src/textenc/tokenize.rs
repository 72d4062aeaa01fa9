use crate::text::words;
use crate::textenc::{TextError, Vocabulary, CLS, PAD, SEP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Segment {
    Document = 0,
    Topic = 1,
}

/// `[CLS] document [SEP] topic [SEP]` padded to a fixed length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub segments: Vec<Segment>,
    /// True for real tokens, false for padding.
    pub mask: Vec<bool>,
}

impl TokenSequence {
    pub const CLS_INDEX: usize = 0;

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of non-padding positions.
    pub fn used(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Lowercased word tokenization of both texts into the paired layout.
/// The document is truncated from the right so the topic and the three
/// special tokens always fit.
pub fn tokenize(document: &str, topic: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence, TextError> {
    if max_len < 4 {
        return Err(TextError::MaxLenTooSmall(max_len));
    }
    let topic_ids: Vec<u32> = words(topic).iter().map(|w| vocab.id(w)).collect();
    let available = max_len - 3;
    if topic_ids.len() > available {
        return Err(TextError::TopicTooLong {
            needed: topic_ids.len(),
            available,
            max_len,
        });
    }
    let mut doc_ids: Vec<u32> = words(document).iter().map(|w| vocab.id(w)).collect();
    doc_ids.truncate(available - topic_ids.len());

    let mut ids = Vec::with_capacity(max_len);
    let mut segments = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(&doc_ids);
    ids.push(SEP);
    segments.resize(ids.len(), Segment::Document);
    ids.extend(&topic_ids);
    ids.push(SEP);
    segments.resize(ids.len(), Segment::Topic);
    let used = ids.len();
    ids.resize(max_len, PAD);
    segments.resize(max_len, Segment::Document);
    let mask = (0..max_len).map(|i| i < used).collect();
    Ok(TokenSequence { ids, segments, mask })
}

/// Document and topic text (space-joined tokens) recovered from ids.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocabulary) -> Result<(String, String), TextError> {
    let mut parts: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    let mut part = 0;
    for (i, &id) in seq.ids.iter().enumerate() {
        if !seq.mask[i] || id == CLS {
            continue;
        }
        if id == SEP {
            part += 1;
            continue;
        }
        let tok = vocab.token(id).ok_or(TextError::UnknownId(id))?;
        parts[part.min(1)].push(tok);
    }
    Ok((parts[0].join(" "), parts[1].join(" ")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textenc::UNK;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::build(["the olympics are great fun , i love sports ."], 1)
    }

    #[test]
    fn empty_document_layout() {
        let v = vocab();
        let s = tokenize("", "olympics", &v, 6).unwrap();
        assert_eq!(s.ids, vec![CLS, SEP, v.id("olympics"), SEP, PAD, PAD]);
        assert_eq!(s.mask, vec![true, true, true, true, false, false]);
        assert_eq!(s.segments[2], Segment::Topic);
        assert_eq!(s.segments[1], Segment::Document);
    }

    #[test]
    fn oov_maps_to_unk() {
        let s = tokenize("zebra", "olympics", &vocab(), 8).unwrap();
        assert_eq!(s.ids[1], UNK);
    }

    #[test]
    fn truncates_document_only() {
        let v = vocab();
        let doc = "great ".repeat(300);
        let s = tokenize(&doc, "the olympics", &v, 256).unwrap();
        assert_eq!(s.len(), 256);
        assert_eq!(s.used(), 256);
        assert_eq!(s.ids.iter().filter(|&&i| i == SEP).count(), 2);
        assert_eq!(&s.ids[252..], &[SEP, v.id("the"), v.id("olympics"), SEP]);
    }

    #[test]
    fn errors() {
        let v = vocab();
        assert!(matches!(tokenize("a", "b", &v, 3), Err(TextError::MaxLenTooSmall(3))));
        assert!(matches!(tokenize("a", "the olympics", &v, 4), Err(TextError::TopicTooLong { .. })));
    }

    proptest! {
        #[test]
        fn round_trips_in_vocab_text(doc in proptest::collection::vec(0usize..9, 0..6), topic in proptest::collection::vec(0usize..9, 0..3)) {
            let v = vocab();
            let pick = |ix: &Vec<usize>| ix.iter().map(|&i| v.tokens()[5 + i].clone()).collect::<Vec<_>>().join(" ");
            let (d, t) = (pick(&doc), pick(&topic));
            let s = tokenize(&d, &t, &v, 16).unwrap();
            prop_assert_eq!(detokenize(&s, &v).unwrap(), (d.clone(), t.clone()));
            prop_assert_eq!(tokenize(&d, &t, &v, 16).unwrap(), s);
        }
    }
}
