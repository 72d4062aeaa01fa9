//! Dataset ingestion, stance metrics, the sentiment-stance analysis, the
//! knowledge-coverage ablation and the synthetic benchmark generator.

mod analysis;
mod coverage;
mod dataset;
mod metrics;
mod synthetic;

pub use analysis::{doc_sentiment, sentiment_stance_matrix, DocSentiment, SentimentStanceMatrix};
pub use coverage::{coverage_ablation, curve_tsv, CoverageMode, CoveragePoint};
pub use dataset::{
    load_dataset, read_dataset, write_dataset, write_dataset_path, DatasetConfig, Phenomena, Shot, Split,
    StanceExample,
};
pub use metrics::{breakdown_eval, confusion, macro_f1, ClassScores, F1Summary, MetricReport};
pub use synthetic::{
    generate_synthetic_suite, kg_only_rule, lexicon_only_rule, mentions_linked_concept, SyntheticConfig, SyntheticSuite,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no examples to score")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
