//! Five-view scoring, threshold aggregation and classification metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{predict, view_features, FrozenEncoders};
use crate::imaging::{load_image, DatasetListing, GrayImage};
use crate::linalg::Matrix;
use crate::prompts::{project_patches, PositionView, PromptParams, ViewKind};
use crate::synth::Label;
use crate::trainer::Checkpoint;
use crate::{Error, Result};

/// Operating point for ACC and F1.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Abnormality probabilities ordered as [`ViewKind::ALL`]:
/// left, right, upper, lower, entire.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewProbabilities(pub [f64; 5]);

impl ViewProbabilities {
    pub fn get(&self, kind: ViewKind) -> f64 {
        self.0[ViewKind::ALL.iter().position(|&k| k == kind).expect("known view")]
    }
}

/// Scores pre-projected patches under all five views.
pub fn score_projected(
    projected: &Matrix,
    views: &[PositionView],
    params: &PromptParams,
    enc: &FrozenEncoders,
) -> Result<ViewProbabilities> {
    if views.len() != 5 {
        return Err(Error::DimensionMismatch(format!("{} views, expected 5", views.len())));
    }
    let mut out = [0.0; 5];
    for (slot, view) in out.iter_mut().zip(views) {
        let f = view_features(projected, view, params, enc)?;
        *slot = predict(&f.image, &f.normal, &f.pneumonia, enc.logit_scale);
    }
    Ok(ViewProbabilities(out))
}

pub fn score_image(
    img: &GrayImage,
    views: &[PositionView],
    params: &PromptParams,
    enc: &FrozenEncoders,
) -> Result<ViewProbabilities> {
    let grid = views.first().ok_or(Error::EmptyInput)?.grid;
    let projected = project_patches(img, grid, &enc.patch_proj)?;
    score_projected(&projected, views, params, enc)
}

/// The maximum if it strictly exceeds `eta`, else the mean.
pub fn aggregate(probs: &ViewProbabilities, eta: f64) -> f64 {
    let max = probs.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > eta {
        max
    } else {
        // sorted summation makes the mean independent of view order
        let mut v = probs.0;
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// All values are percentages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    pub ap: f64,
}

fn class_counts(scores: &[(f64, Label)]) -> (usize, usize) {
    let pos = scores.iter().filter(|(_, l)| l.is_abnormal()).count();
    (pos, scores.len() - pos)
}

/// Scores sorted descending, grouped into runs of equal score as
/// `(positives, negatives)` per run.
fn tied_runs(scores: &[(f64, Label)]) -> Vec<(usize, usize)> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut last = None;
    for (s, l) in sorted {
        if last != Some(s) {
            runs.push((0, 0));
            last = Some(s);
        }
        let run = runs.last_mut().expect("pushed above");
        if l.is_abnormal() {
            run.0 += 1;
        } else {
            run.1 += 1;
        }
    }
    runs
}

/// Area under the ROC curve by trapezoidal integration over tied score
/// runs (equivalently, the midrank pairwise probability), as a fraction.
pub fn roc_auc(scores: &[(f64, Label)]) -> Result<f64> {
    let (pos, neg) = class_counts(scores);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassInput("AUC"));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area2 = 0usize; // twice the area in count units
    for (p, n) in tied_runs(scores) {
        area2 += n * (2 * tp + p);
        tp += p;
        fp += n;
    }
    debug_assert_eq!((tp, fp), (pos, neg));
    Ok(area2 as f64 / (2 * pos * neg) as f64)
}

/// Step-wise average precision: `Σ (R_k − R_{k−1}) P_k` over descending
/// thresholds, with tied scores forming one threshold. As a fraction.
pub fn average_precision(scores: &[(f64, Label)]) -> Result<f64> {
    let (pos, neg) = class_counts(scores);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassInput("AP"));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for (p, n) in tied_runs(scores) {
        tp += p;
        seen += p + n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// `(accuracy, F1)` as fractions with `score >= threshold` predicted
/// abnormal. F1 is 0 when there are no true positives.
pub fn accuracy_f1(scores: &[(f64, Label)], threshold: f64) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for &(s, l) in scores {
        match (s >= threshold, l.is_abnormal()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let acc = if scores.is_empty() { 0.0 } else { (tp + tn) as f64 / scores.len() as f64 };
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    (acc, f1)
}

pub fn compute_metrics(scores: &[(f64, Label)]) -> Result<Metrics> {
    let auc = roc_auc(scores)?;
    let ap = average_precision(scores)?;
    let (acc, f1) = accuracy_f1(scores, DECISION_THRESHOLD);
    Ok(Metrics { acc: 100.0 * acc, auc: 100.0 * auc, f1: 100.0 * f1, ap: 100.0 * ap })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredImage {
    pub path: PathBuf,
    pub probability: f64,
    pub label: Label,
    pub views: ViewProbabilities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scores: Vec<ScoredImage>,
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    pub ap: f64,
}

impl EvalReport {
    pub fn metrics(&self) -> Metrics {
        Metrics { acc: self.acc, auc: self.auc, f1: self.f1, ap: self.ap }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text summary.
    pub fn table(&self) -> String {
        let normal = self.scores.iter().filter(|s| !s.label.is_abnormal()).count();
        let mut out = String::new();
        let _ = writeln!(out, "images  {:>6}  (normal {normal}, abnormal {})", self.scores.len(), self.scores.len() - normal);
        let _ = writeln!(out, "{:<6}{:>8}", "metric", "value");
        for (name, v) in [("ACC", self.acc), ("AUC", self.auc), ("F1", self.f1), ("AP", self.ap)] {
            let _ = writeln!(out, "{name:<6}{v:>7.2}%");
        }
        out
    }
}

/// Scores labelled images and computes the report.
pub struct Evaluator {
    params: PromptParams,
    encoders: FrozenEncoders,
    views: Vec<PositionView>,
    eta: f64,
    image_size: usize,
}

impl Evaluator {
    pub fn new(params: PromptParams, encoders: FrozenEncoders, views: Vec<PositionView>, eta: f64) -> Self {
        let image_size = views.first().map_or(0, |v| v.grid.image_size);
        Self { params, encoders, views, eta, image_size }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let encoders = ck.encoders()?;
        let views = PositionView::all(ck.config.grid()?);
        Ok(Self::new(ck.params.clone(), encoders, views, ck.config.eta))
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn score(&self, img: &GrayImage) -> Result<(ViewProbabilities, f64)> {
        let probs = score_image(img, &self.views, &self.params, &self.encoders)?;
        Ok((probs, aggregate(&probs, self.eta)))
    }

    pub fn evaluate<'a>(&self, items: impl IntoIterator<Item = (PathBuf, &'a GrayImage, Label)>) -> Result<EvalReport> {
        let mut scores = Vec::new();
        for (path, img, label) in items {
            let (views, probability) = self.score(img)?;
            scores.push(ScoredImage { path, probability, label, views });
        }
        let pairs: Vec<(f64, Label)> = scores.iter().map(|s| (s.probability, s.label)).collect();
        let m = compute_metrics(&pairs)?;
        Ok(EvalReport { scores, acc: m.acc, auc: m.auc, f1: m.f1, ap: m.ap })
    }
}

/// Evaluates `<root>/normal` (label 0) and `<root>/abnormal` (label 1).
pub fn evaluate(dataset_root: &Path, checkpoint: &Checkpoint) -> Result<EvalReport> {
    let ev = Evaluator::from_checkpoint(checkpoint)?;
    let listing = DatasetListing::scan(dataset_root)?;
    let mut loaded = Vec::new();
    for (paths, label) in [(&listing.normal, Label::Normal), (&listing.abnormal, Label::Abnormal)] {
        for p in paths {
            loaded.push((p.clone(), load_image(p, ev.image_size())?, label));
        }
    }
    ev.evaluate(loaded.iter().map(|(p, img, l)| (p.clone(), img, *l)))
}
