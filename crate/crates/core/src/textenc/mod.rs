//! Text side of the model: vocabulary and tokenization into
//! `[CLS] document [SEP] topic [SEP]`, a small transformer encoder, the
//! sentiment lexicon, sentiment-aware masking and the pretraining loop for
//! the sentiment encoder.

mod encoder;
mod lexicon;
mod masking;
mod pretrain;
mod tokenize;
mod vocab;

pub use encoder::{EncoderConfig, EncoderOutput, Mode, TextEncoder};
pub use lexicon::{Polarity, SentimentLexicon};
pub use masking::{sentiment_mask, MaskRates, MaskRecord, MaskedSequence};
pub use pretrain::{
    pretrain_sentiment, read_rating_corpus, RatedText, SentimentEncoder, SentimentPretrainConfig, SentimentReport,
};
pub use tokenize::{detokenize, tokenize, Segment, TokenSequence};
pub use vocab::{Vocabulary, CLS, MASK, PAD, SEP, SPECIAL_TOKENS, UNK};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("max_len {0} is below the minimum of 4")]
    MaxLenTooSmall(usize),
    #[error("topic needs {needed} tokens but max_len {max_len} leaves room for {available}")]
    TopicTooLong {
        needed: usize,
        available: usize,
        max_len: usize,
    },
    #[error("sequence of length {len} exceeds the positional table ({max})")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {0} outside the vocabulary")]
    UnknownId(u32),
    #[error("invalid masking rates: {0}")]
    InvalidRates(String),
    #[error("rating {rating} of example {index} outside 1..={classes}")]
    RatingOutOfRange { index: usize, rating: usize, classes: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
