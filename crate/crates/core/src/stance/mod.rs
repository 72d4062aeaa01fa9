//! The stance classifier: commonsense features from the knowledge graph,
//! fusion of the context and sentiment encoders, the classifier head, the
//! classification and reconstruction losses, and training.

mod features;
mod model;
mod train;

pub use features::{commonsense_feature, CommonsenseFeature, KnowledgeSource};
pub use model::{classify, fuse, recon_loss, stance_loss, total_loss, StanceModel};
pub use train::{predictions_tsv, train_stance, Prediction, PreparedBatch, StanceEpoch, StanceReport};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::EvalError;
use crate::numerics::{AdamConfig, NumericsError};
use crate::textenc::{EncoderConfig, TextError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StanceLabel {
    Pro = 0,
    Con = 1,
    Neu = 2,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Pro, StanceLabel::Con, StanceLabel::Neu];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Dataset spelling: `pro`, `con`, `neutral`.
    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Pro => "pro",
            StanceLabel::Con => "con",
            StanceLabel::Neu => "neutral",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            StanceLabel::Pro => "Pro",
            StanceLabel::Con => "Con",
            StanceLabel::Neu => "Neu",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for StanceLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pro" => Ok(StanceLabel::Pro),
            "con" => Ok(StanceLabel::Con),
            "neu" | "neutral" => Ok(StanceLabel::Neu),
            other => Err(format!("unknown stance label {other:?}")),
        }
    }
}

/// Which branches feed the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub use_sentiment: bool,
    pub use_context: bool,
    pub use_kg: bool,
}

impl ModelVariant {
    pub const BS_RGCN: Self = Self {
        use_sentiment: true,
        use_context: true,
        use_kg: true,
    };
    pub const BS: Self = Self {
        use_sentiment: true,
        use_context: true,
        use_kg: false,
    };
    pub const B_RGCN: Self = Self {
        use_sentiment: false,
        use_context: true,
        use_kg: true,
    };
    pub const S_RGCN: Self = Self {
        use_sentiment: true,
        use_context: false,
        use_kg: true,
    };

    pub fn validate(&self) -> Result<(), StanceError> {
        if !self.use_sentiment && !self.use_context {
            return Err(StanceError::InvalidVariant(
                "at least one of use_sentiment/use_context must be set".into(),
            ));
        }
        Ok(())
    }

    /// The sentiment encoder is fine-tuned only when it is the sole text branch.
    pub fn sentiment_trainable(&self) -> bool {
        self.use_sentiment && !self.use_context
    }

    pub fn name(&self) -> String {
        match *self {
            v if v == Self::BS_RGCN => "BS-RGCN".into(),
            v if v == Self::BS => "BS".into(),
            v if v == Self::B_RGCN => "B-RGCN".into(),
            v if v == Self::S_RGCN => "S-RGCN".into(),
            v => format!(
                "custom(sentiment={},context={},kg={})",
                v.use_sentiment, v.use_context, v.use_kg
            ),
        }
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BS-RGCN" => Ok(Self::BS_RGCN),
            "BS" => Ok(Self::BS),
            "B-RGCN" => Ok(Self::B_RGCN),
            "S-RGCN" => Ok(Self::S_RGCN),
            other => Err(format!("unknown variant {other:?} (BS-RGCN, BS, B-RGCN, S-RGCN)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StanceConfig {
    /// Context encoder; `vocab_size` is taken from the training vocabulary.
    pub encoder: EncoderConfig,
    pub variant: ModelVariant,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Weight of the reconstruction penalty (forced to 0 without KG).
    pub lambda: f64,
    /// Minimum training-corpus frequency for context-vocabulary words.
    pub min_freq: usize,
}

impl Default for StanceConfig {
    /// Desk-scale settings for encoders trained from scratch.
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            variant: ModelVariant::BS_RGCN,
            epochs: 30,
            batch_size: 4,
            adam: AdamConfig::with_lr(1e-3),
            lambda: 1.0,
            min_freq: 1,
        }
    }
}

impl StanceConfig {
    /// Settings used when fine-tuning pretrained encoders: learning rate
    /// 1.5e-5, batch size 4, three epochs, sequences of 256 tokens.
    pub fn pretrained_scale() -> Self {
        Self {
            encoder: EncoderConfig {
                max_len: 256,
                ..EncoderConfig::default()
            },
            epochs: 3,
            batch_size: 4,
            adam: AdamConfig::with_lr(1.5e-5),
            ..Self::default()
        }
    }

    pub fn effective_lambda(&self) -> f64 {
        if self.variant.use_kg {
            self.lambda
        } else {
            0.0
        }
    }
}

#[derive(Debug, Error)]
pub enum StanceError {
    #[error("invalid variant: {0}")]
    InvalidVariant(String),
    #[error("variant {0} needs knowledge-graph features but none were supplied")]
    MissingKnowledge(String),
    #[error("variant {0} needs a pretrained sentiment encoder but none was supplied")]
    MissingSentiment(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Config(String),
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
