use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evalkit::{EvalError, Phenomena, Shot, StanceExample};
use crate::stance::StanceLabel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-class scores over Pro/Con/Neu, their unweighted mean and the
/// confusion matrix (`confusion[gold][predicted]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Summary {
    pub per_class: [ClassScores; 3],
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: [[usize; 3]; 3],
    pub n: usize,
}

impl F1Summary {
    pub fn from_confusion(confusion: [[usize; 3]; 3]) -> Result<Self, EvalError> {
        let n: usize = confusion.iter().flatten().sum();
        if n == 0 {
            return Err(EvalError::Empty);
        }
        let mut per_class = [ClassScores::default(); 3];
        for (c, scores) in per_class.iter_mut().enumerate() {
            let tp = confusion[c][c] as f64;
            let predicted: usize = (0..3).map(|g| confusion[g][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            *scores = ClassScores {
                precision,
                recall,
                f1,
                support: actual,
            };
        }
        let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / 3.0;
        let correct: usize = (0..3).map(|c| confusion[c][c]).sum();
        Ok(Self {
            per_class,
            macro_f1,
            accuracy: correct as f64 / n as f64,
            confusion,
            n,
        })
    }
}

pub fn confusion(predictions: &[StanceLabel], golds: &[StanceLabel]) -> Result<[[usize; 3]; 3], EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::Length {
            left: predictions.len(),
            right: golds.len(),
        });
    }
    let mut m = [[0usize; 3]; 3];
    for (p, g) in predictions.iter().zip(golds) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

/// Per-class F1 (0 when precision + recall = 0) and their mean.
pub fn macro_f1(predictions: &[StanceLabel], golds: &[StanceLabel]) -> Result<F1Summary, EvalError> {
    F1Summary::from_confusion(confusion(predictions, golds)?)
}

/// Accuracy over the examples carrying each phenomenon flag; `None` when
/// no example carries it.
pub fn breakdown_eval(
    predictions: &[StanceLabel],
    golds: &[StanceLabel],
    phenomena: &[Phenomena],
) -> Result<BTreeMap<String, Option<f64>>, EvalError> {
    if predictions.len() != golds.len() || golds.len() != phenomena.len() {
        return Err(EvalError::Length {
            left: predictions.len(),
            right: phenomena.len(),
        });
    }
    let mut out = BTreeMap::new();
    for (k, name) in Phenomena::NAMES.iter().enumerate() {
        let (mut hit, mut total) = (0usize, 0usize);
        for ((p, g), f) in predictions.iter().zip(golds).zip(phenomena) {
            if f.flags()[k] {
                total += 1;
                hit += usize::from(p == g);
            }
        }
        out.insert(name.to_string(), (total > 0).then(|| hit as f64 / total as f64));
    }
    Ok(out)
}

/// Overall, zero-shot and few-shot F1 plus the phenomenon breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub all: F1Summary,
    pub zero_shot: Option<F1Summary>,
    pub few_shot: Option<F1Summary>,
    pub phenomena: BTreeMap<String, Option<f64>>,
}

impl MetricReport {
    pub fn build(predictions: &[StanceLabel], examples: &[StanceExample]) -> Result<Self, EvalError> {
        let golds: Vec<StanceLabel> = examples.iter().map(|e| e.gold).collect();
        let all = macro_f1(predictions, &golds)?;
        let subset = |shot: Shot| -> Result<Option<F1Summary>, EvalError> {
            let (p, g): (Vec<_>, Vec<_>) = predictions
                .iter()
                .zip(examples)
                .filter(|(_, e)| e.shot == Some(shot))
                .map(|(p, e)| (*p, e.gold))
                .unzip();
            if g.is_empty() {
                Ok(None)
            } else {
                macro_f1(&p, &g).map(Some)
            }
        };
        let phen: Vec<Phenomena> = examples.iter().map(|e| e.phenomena).collect();
        Ok(Self {
            all,
            zero_shot: subset(Shot::Zero)?,
            few_shot: subset(Shot::Few)?,
            phenomena: breakdown_eval(predictions, &golds, &phen)?,
        })
    }

    /// Overall-results layout: macro-F1 for zero-shot, few-shot and all topics.
    pub fn overall_json(&self) -> serde_json::Value {
        let f = |s: &Option<F1Summary>| s.as_ref().map(|s| s.macro_f1);
        serde_json::json!({
            "f1_zero_shot": f(&self.zero_shot),
            "f1_few_shot": f(&self.few_shot),
            "f1_all": self.all.macro_f1,
            "per_class_f1": {
                "pro": self.all.per_class[0].f1,
                "con": self.all.per_class[1].f1,
                "neu": self.all.per_class[2].f1,
            },
        })
    }

    /// Challenge layout: accuracy per phenomenon, `null` when undefined.
    pub fn challenge_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.phenomena).expect("map serializes")
    }
}
