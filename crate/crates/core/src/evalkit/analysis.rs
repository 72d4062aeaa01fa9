use serde::{Deserialize, Serialize};

use crate::evalkit::EvalError;
use crate::stance::StanceLabel;
use crate::text::words;
use crate::textenc::{Polarity, SentimentLexicon};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DocSentiment {
    Pos,
    Neg,
    Neu,
}

impl DocSentiment {
    pub const ALL: [DocSentiment; 3] = [DocSentiment::Pos, DocSentiment::Neg, DocSentiment::Neu];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DocSentiment::Pos => "Pos",
            DocSentiment::Neg => "Neg",
            DocSentiment::Neu => "Neu",
        }
    }
}

/// Pos when strictly more positive than negative lexicon tokens, Neg when
/// strictly more negative, Neu otherwise (ties included).
pub fn doc_sentiment(document: &str, lexicon: &SentimentLexicon) -> DocSentiment {
    let (mut pos, mut neg) = (0usize, 0usize);
    for w in words(document) {
        match lexicon.polarity(&w) {
            Some(Polarity::Positive) => pos += 1,
            Some(Polarity::Negative) => neg += 1,
            None => {}
        }
    }
    match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => DocSentiment::Pos,
        std::cmp::Ordering::Less => DocSentiment::Neg,
        std::cmp::Ordering::Equal => DocSentiment::Neu,
    }
}

/// Accuracy per (document sentiment, gold stance) cell. Rows are
/// Pos/Neg/Neu sentiment, columns Pro/Con/Neu stance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentStanceMatrix {
    pub accuracy: [[Option<f64>; 3]; 3],
    pub counts: [[usize; 3]; 3],
}

impl SentimentStanceMatrix {
    pub fn cell(&self, sentiment: DocSentiment, stance: StanceLabel) -> Option<f64> {
        self.accuracy[sentiment.index()][stance.index()]
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: serde_json::Map<String, serde_json::Value> = DocSentiment::ALL
            .iter()
            .map(|s| {
                let cols: serde_json::Map<String, serde_json::Value> = StanceLabel::ALL
                    .iter()
                    .map(|l| {
                        let i = (s.index(), l.index());
                        (
                            l.short().to_string(),
                            serde_json::json!({ "accuracy": self.accuracy[i.0][i.1], "count": self.counts[i.0][i.1] }),
                        )
                    })
                    .collect();
                (s.as_str().to_string(), serde_json::Value::Object(cols))
            })
            .collect();
        serde_json::Value::Object(rows)
    }

    /// 3x3 grid with a header row; undefined cells print as `-`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("sentiment\\stance");
        for l in StanceLabel::ALL {
            s.push('\t');
            s.push_str(l.short());
        }
        s.push('\n');
        for sent in DocSentiment::ALL {
            s.push_str(sent.as_str());
            for l in StanceLabel::ALL {
                s.push('\t');
                match self.accuracy[sent.index()][l.index()] {
                    Some(a) => s.push_str(&format!("{a:.4}")),
                    None => s.push('-'),
                }
            }
            s.push('\n');
        }
        s
    }
}

pub fn sentiment_stance_matrix<S: AsRef<str>>(
    predictions: &[StanceLabel],
    golds: &[StanceLabel],
    documents: &[S],
    lexicon: &SentimentLexicon,
) -> Result<SentimentStanceMatrix, EvalError> {
    if predictions.len() != golds.len() || golds.len() != documents.len() {
        return Err(EvalError::Length {
            left: predictions.len(),
            right: documents.len(),
        });
    }
    let mut counts = [[0usize; 3]; 3];
    let mut hits = [[0usize; 3]; 3];
    for ((p, g), d) in predictions.iter().zip(golds).zip(documents) {
        let s = doc_sentiment(d.as_ref(), lexicon).index();
        counts[s][g.index()] += 1;
        hits[s][g.index()] += usize::from(p == g);
    }
    let mut accuracy = [[None; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if counts[i][j] > 0 {
                accuracy[i][j] = Some(hits[i][j] as f64 / counts[i][j] as f64);
            }
        }
    }
    Ok(SentimentStanceMatrix { accuracy, counts })
}
