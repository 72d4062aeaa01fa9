use serde::{Deserialize, Serialize};

use crate::evalkit::EvalError;
use crate::kgae::KgaeError;
use crate::kgraph::{subsample_concepts, subsample_edges};
use crate::numerics::RngStream;
use crate::pipeline::{run_with_sentiment, PipelineConfig, PipelineError, PipelineInputs, SUBSAMPLE_STREAM};
use crate::scalar::Scalar;
use crate::textenc::SentimentEncoder;

/// What a coverage percentage subsamples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageMode {
    /// Concepts, keeping the triples induced among them.
    #[default]
    Concepts,
    Edges,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub percent: f64,
    pub concepts: usize,
    pub triples: usize,
    /// Zero-shot test macro-F1; `None` when the subsample has no triples.
    pub macro_f1: Option<f64>,
}

/// One pipeline run per percentage on a seeded subsample of the graph.
/// Every point draws its subsample and training randomness from the same
/// `rng`, so 100% reproduces the unablated run exactly.
pub fn coverage_ablation<T: Scalar>(
    inputs: &PipelineInputs<'_>,
    sentiment: Option<&SentimentEncoder<T>>,
    percents: &[f64],
    mode: CoverageMode,
    cfg: &PipelineConfig,
    rng: &RngStream,
) -> Result<Vec<CoveragePoint>, PipelineError> {
    if let Some(p) = percents.iter().find(|p| !(**p > 0.0 && **p <= 100.0)) {
        return Err(EvalError::Config(format!("coverage percent {p} outside (0, 100]")).into());
    }
    let mut out = Vec::with_capacity(percents.len());
    for &percent in percents {
        let mut sub_rng = rng.derive(SUBSAMPLE_STREAM);
        let sub = match mode {
            CoverageMode::Concepts => subsample_concepts(inputs.graph, percent / 100.0, &mut sub_rng),
            CoverageMode::Edges => subsample_edges(inputs.graph, percent / 100.0, &mut sub_rng),
        };
        let macro_f1 = match run_with_sentiment(&sub.graph, inputs, sentiment, cfg, rng) {
            Ok(o) => o.zero_shot_macro_f1(),
            Err(PipelineError::Kgae(KgaeError::EmptyGraph)) => None,
            Err(e) => return Err(e),
        };
        out.push(CoveragePoint {
            percent,
            concepts: sub.graph.num_concepts(),
            triples: sub.graph.num_triples(),
            macro_f1,
        });
    }
    Ok(out)
}

/// `percent<TAB>macro_f1` rows, `NA` for undefined points.
pub fn curve_tsv(points: &[CoveragePoint]) -> String {
    let mut s = String::from("percent\tmacro_f1\n");
    for p in points {
        match p.macro_f1 {
            Some(f) => s.push_str(&format!("{}\t{f:.6}\n", p.percent)),
            None => s.push_str(&format!("{}\tNA\n", p.percent)),
        }
    }
    s
}
