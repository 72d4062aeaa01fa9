//! End-to-end runs: autoencoder pretraining, feature export, sentiment
//! pretraining, stance training and evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::{EvalError, MetricReport, StanceExample};
use crate::kgae::{export_concept_features, pretrain_kgae, ConceptFeatures, KgaeConfig, KgaeError, KgaeReport};
use crate::kgraph::{ExtractionMode, KnowledgeGraph, PosOracle};
use crate::numerics::RngStream;
use crate::scalar::Scalar;
use crate::stance::{train_stance, KnowledgeSource, Prediction, StanceConfig, StanceError, StanceReport};
use crate::textenc::{pretrain_sentiment, EncoderConfig, RatedText, SentimentEncoder, SentimentLexicon, SentimentPretrainConfig, SentimentReport, TextError, Vocabulary};

pub const SENTIMENT_STREAM: u64 = 1;
pub const KG_STREAM: u64 = 2;
pub const STANCE_STREAM: u64 = 3;
pub const SUBSAMPLE_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub kgae: KgaeConfig,
    pub sentiment: SentimentPretrainConfig,
    /// Words rarer than this in the rating corpus map to `[UNK]`.
    pub sentiment_min_freq: usize,
    pub stance: StanceConfig,
    pub extraction: ExtractionMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kgae: KgaeConfig::default(),
            sentiment: SentimentPretrainConfig::default(),
            sentiment_min_freq: 2,
            stance: StanceConfig::default(),
            extraction: ExtractionMode::Vicinity,
        }
    }
}

impl PipelineConfig {
    /// Small encoders trained from scratch, sized for the synthetic suite
    /// on a CPU: width 16, one block, 12-token sequences, 30 epochs.
    pub fn desk_scale() -> Self {
        let encoder = EncoderConfig {
            vocab_size: 0,
            max_len: 12,
            d_model: 16,
            heads: 2,
            d_ff: 32,
            layers: 1,
            dropout: 0.0,
        };
        let mut c = Self::default();
        c.kgae.dim = 16;
        c.kgae.epochs = 100;
        c.sentiment.encoder = encoder.clone();
        c.sentiment.epochs = 30;
        c.stance.encoder = encoder;
        c.stance.epochs = 30;
        c
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("kgae: {0}")]
    Kgae(#[from] KgaeError),
    #[error("textenc: {0}")]
    Text(#[from] TextError),
    #[error("stance: {0}")]
    Stance(#[from] StanceError),
    #[error("evalkit: {0}")]
    Eval(#[from] EvalError),
}

/// Borrowed corpora for one run.
#[derive(Clone, Copy)]
pub struct PipelineInputs<'a> {
    pub graph: &'a KnowledgeGraph,
    pub pos: &'a dyn PosOracle,
    pub lexicon: &'a SentimentLexicon,
    pub rating_corpus: &'a [RatedText],
    pub train: &'a [StanceExample],
    pub dev: &'a [StanceExample],
    pub test: &'a [StanceExample],
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome<T> {
    pub kg_report: Option<KgaeReport>,
    pub stance_report: StanceReport,
    pub test_predictions: Vec<Prediction<T>>,
    pub test_metrics: MetricReport,
}

impl<T> PipelineOutcome<T> {
    pub fn best_dev_macro_f1(&self) -> f64 {
        self.stance_report.best_dev_macro_f1
    }

    pub fn zero_shot_macro_f1(&self) -> Option<f64> {
        self.test_metrics.zero_shot.as_ref().map(|s| s.macro_f1)
    }
}

/// Sentiment encoder over a vocabulary built from the rating corpus.
pub fn sentiment_stage<T: Scalar>(
    inputs: &PipelineInputs<'_>,
    cfg: &PipelineConfig,
    rng: &RngStream,
) -> Result<(SentimentEncoder<T>, SentimentReport), PipelineError> {
    let vocab = Vocabulary::build(inputs.rating_corpus.iter().map(|r| r.text.as_str()), cfg.sentiment_min_freq);
    Ok(pretrain_sentiment(
        inputs.rating_corpus,
        &vocab,
        inputs.lexicon,
        &cfg.sentiment,
        &mut rng.derive(SENTIMENT_STREAM),
    )?)
}

/// Concept features exported from an autoencoder pretrained on `graph`.
pub fn kg_stage<T: Scalar>(
    graph: &KnowledgeGraph,
    cfg: &PipelineConfig,
    rng: &RngStream,
) -> Result<(ConceptFeatures<T>, KgaeReport), PipelineError> {
    let (params, report) = pretrain_kgae::<T>(graph, &cfg.kgae, &mut rng.derive(KG_STREAM))?;
    Ok((export_concept_features(graph, &params)?, report))
}

/// Everything after sentiment pretraining, using `graph` as the knowledge
/// source. The graph is ignored by variants without the KG branch.
pub fn run_with_sentiment<T: Scalar>(
    graph: &KnowledgeGraph,
    inputs: &PipelineInputs<'_>,
    sentiment: Option<&SentimentEncoder<T>>,
    cfg: &PipelineConfig,
    rng: &RngStream,
) -> Result<PipelineOutcome<T>, PipelineError> {
    let variant = cfg.stance.variant;
    let kg = if variant.use_kg {
        Some(kg_stage::<T>(graph, cfg, rng)?)
    } else {
        None
    };
    let source = match &kg {
        Some((features, _)) => {
            let mut s = KnowledgeSource::new(graph, features, inputs.pos)?;
            s.mode = cfg.extraction;
            Some(s)
        }
        None => None,
    };
    let sentiment = if variant.use_sentiment { sentiment } else { None };
    let (model, stance_report) = train_stance(
        inputs.train,
        inputs.dev,
        source.as_ref(),
        sentiment,
        &cfg.stance,
        &mut rng.derive(STANCE_STREAM),
    )?;
    let test_predictions = model.predict(inputs.test, source.as_ref())?;
    let labels: Vec<_> = test_predictions.iter().map(|p| p.predicted).collect();
    let test_metrics = MetricReport::build(&labels, inputs.test)?;
    Ok(PipelineOutcome {
        kg_report: kg.map(|(_, r)| r),
        stance_report,
        test_predictions,
        test_metrics,
    })
}

/// Full run from raw inputs with every stage seeded from `rng`.
pub fn run_pipeline<T: Scalar>(
    inputs: &PipelineInputs<'_>,
    cfg: &PipelineConfig,
    rng: &RngStream,
) -> Result<PipelineOutcome<T>, PipelineError> {
    let sentiment = if cfg.stance.variant.use_sentiment {
        Some(sentiment_stage::<T>(inputs, cfg, rng)?.0)
    } else {
        None
    };
    run_with_sentiment(inputs.graph, inputs, sentiment.as_ref(), cfg, rng)
}
