use serde::{Deserialize, Serialize};

use crate::numerics::RngStream;
use crate::textenc::{Polarity, SentimentLexicon, TextError, TokenSequence, Vocabulary, MASK};

/// Masking probabilities for lexicon words and for every other word.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRates {
    pub p_sent: f64,
    pub p_gen: f64,
}

impl Default for MaskRates {
    fn default() -> Self {
        Self { p_sent: 0.5, p_gen: 0.1 }
    }
}

impl MaskRates {
    pub fn validate(&self) -> Result<(), TextError> {
        let ok = (0.0..=1.0).contains(&self.p_sent) && (0.0..=1.0).contains(&self.p_gen) && self.p_sent > self.p_gen;
        if !ok {
            return Err(TextError::InvalidRates(format!(
                "need 0 <= p_gen < p_sent <= 1, got p_sent={} p_gen={}",
                self.p_sent, self.p_gen
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskRecord {
    pub position: usize,
    pub original: u32,
    pub polarity: Option<Polarity>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedSequence {
    pub sequence: TokenSequence,
    pub records: Vec<MaskRecord>,
}

/// Replaces tokens by `[MASK]`: lexicon words with probability `p_sent`,
/// other words with `p_gen`. Special tokens and padding are never masked.
pub fn sentiment_mask(
    batch: &[TokenSequence],
    vocab: &Vocabulary,
    lexicon: &SentimentLexicon,
    rates: MaskRates,
    rng: &mut RngStream,
) -> Result<Vec<MaskedSequence>, TextError> {
    rates.validate()?;
    let mut out = Vec::with_capacity(batch.len());
    for seq in batch {
        let mut sequence = seq.clone();
        let mut records = Vec::new();
        for (pos, &id) in seq.ids.iter().enumerate() {
            if !seq.mask[pos] || Vocabulary::is_special(id) {
                continue;
            }
            let polarity = vocab.token(id).and_then(|w| lexicon.polarity(w));
            let p = if polarity.is_some() { rates.p_sent } else { rates.p_gen };
            if rng.bernoulli(p) {
                sequence.ids[pos] = MASK;
                records.push(MaskRecord {
                    position: pos,
                    original: id,
                    polarity,
                });
            }
        }
        out.push(MaskedSequence { sequence, records });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textenc::tokenize;

    fn fixture() -> (Vocabulary, SentimentLexicon, TokenSequence) {
        let vocab = Vocabulary::build(["good bad film story plot actors"], 1);
        let lex = SentimentLexicon::from_pairs([("good", Polarity::Positive), ("bad", Polarity::Negative)]);
        let seq = tokenize("good film bad story plot", "actors", &vocab, 12).unwrap();
        (vocab, lex, seq)
    }

    #[test]
    fn empirical_rates_match() {
        let (vocab, lex, seq) = fixture();
        let rates = MaskRates::default();
        let mut rng = RngStream::new(17);
        let trials = 10_000;
        let batch = vec![seq.clone(); trials];
        let masked = sentiment_mask(&batch, &vocab, &lex, rates, &mut rng).unwrap();
        let (mut lex_hits, mut gen_hits) = (0usize, 0usize);
        for m in &masked {
            for r in &m.records {
                assert_eq!(m.sequence.ids[r.position], MASK);
                assert_eq!(seq.ids[r.position], r.original);
                if r.polarity.is_some() {
                    lex_hits += 1;
                } else {
                    gen_hits += 1;
                }
            }
        }
        // Two lexicon words and four other words (three document words plus the topic).
        let lex_rate = lex_hits as f64 / (2 * trials) as f64;
        let gen_rate = gen_hits as f64 / (4 * trials) as f64;
        assert!((lex_rate - rates.p_sent).abs() < 0.02, "{lex_rate}");
        assert!((gen_rate - rates.p_gen).abs() < 0.02, "{gen_rate}");
    }

    #[test]
    fn specials_never_masked_and_boundaries() {
        let (vocab, lex, seq) = fixture();
        let all = MaskRates { p_sent: 1.0, p_gen: 0.0 };
        let m = sentiment_mask(&[seq.clone()], &vocab, &lex, all, &mut RngStream::new(1)).unwrap();
        let masked: Vec<_> = m[0].records.iter().map(|r| vocab.token(r.original).unwrap()).collect();
        assert_eq!(masked, ["good", "bad"]);

        let plain = tokenize("film story", "actors", &vocab, 12).unwrap();
        let everything = MaskRates { p_sent: 1.0, p_gen: 0.99 };
        let m = sentiment_mask(&vec![plain; 50], &vocab, &lex, everything, &mut RngStream::new(2)).unwrap();
        for s in &m {
            assert!(s.records.iter().all(|r| r.polarity.is_none()));
            assert!(s.records.iter().all(|r| !Vocabulary::is_special(r.original)));
        }
        assert!(MaskRates { p_sent: 0.1, p_gen: 0.1 }.validate().is_err());
    }
}
