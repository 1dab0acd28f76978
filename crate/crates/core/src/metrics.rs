//! Confusion counts, per-class scores, macro averaging and the results table.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use crate::classifier::{ClassifierError, CommentClassifier, Prediction};
use crate::corpus::{Corpus, Label, PerLabel};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction and gold lengths differ ({predicted} vs {gold})")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("macro average needs exactly 3 reports, got {0}")]
    Arity(usize),
    #[error("unknown scoring mode {0:?}; expected binary or fused")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn tally(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

pub fn binary_counts(predicted: &[bool], gold: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if predicted.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in predicted.iter().zip(gold) {
        c.tally(p, g);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassReport {
    #[cfg_attr(feature = "serde", serde(rename = "acc"))]
    pub accuracy: f64,
    #[cfg_attr(feature = "serde", serde(rename = "pre"))]
    pub precision: f64,
    #[cfg_attr(feature = "serde", serde(rename = "rec"))]
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Scores from counts; every 0/0 ratio is taken as 0.
pub fn class_report(c: &ConfusionCounts) -> ClassReport {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    ClassReport {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Field-wise arithmetic mean of exactly three reports (canonical label order).
pub fn macro_average(reports: &[ClassReport]) -> Result<ClassReport, MetricsError> {
    if reports.len() != 3 {
        return Err(MetricsError::Arity(reports.len()));
    }
    let mean = |f: fn(&ClassReport) -> f64| reports.iter().map(f).sum::<f64>() / 3.0;
    Ok(ClassReport {
        accuracy: mean(|r| r.accuracy),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScoringMode {
    /// Each binary model's own decision (positive probability ≥ 0.5).
    Binary,
    /// One-vs-rest on the fused label.
    Fused,
}

impl ScoringMode {
    pub const ALL: [ScoringMode; 2] = [ScoringMode::Binary, ScoringMode::Fused];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoringMode::Binary => "binary",
            ScoringMode::Fused => "fused",
        }
    }
}

impl core::fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoringMode {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(ScoringMode::Binary),
            "fused" => Ok(ScoringMode::Fused),
            other => Err(MetricsError::UnknownMode(other.into())),
        }
    }
}

pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub mode: ScoringMode,
    pub counts: PerLabel<ConfusionCounts>,
    pub classes: PerLabel<ClassReport>,
    pub macro_avg: ClassReport,
    /// Share of comments scored fully correct: the fused label matches in
    /// fused mode, all three binary decisions match in binary mode.
    pub accuracy: f64,
    pub n_test: usize,
}

impl EvaluationReport {
    pub fn from_counts(mode: ScoringMode, counts: PerLabel<ConfusionCounts>, exact: usize) -> Self {
        let classes = PerLabel::from_fn(|l| class_report(&counts[l]));
        let macro_avg = macro_average(&classes.0).expect("three classes");
        let n_test = counts[Label::ProblemReport].total();
        EvaluationReport {
            mode,
            accuracy: ratio(exact, n_test),
            n_test,
            counts,
            classes,
            macro_avg,
        }
    }
}

/// Both scoring modes, computed in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub binary: EvaluationReport,
    pub fused: EvaluationReport,
}

impl Evaluation {
    pub fn get(&self, mode: ScoringMode) -> &EvaluationReport {
        match mode {
            ScoringMode::Binary => &self.binary,
            ScoringMode::Fused => &self.fused,
        }
    }
}

pub fn evaluate_predictions(
    predictions: &[Prediction],
    gold: &[Label],
) -> Result<Evaluation, MetricsError> {
    if predictions.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predictions.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut binary = PerLabel([ConfusionCounts::default(); 3]);
    let mut fused = binary;
    let (mut binary_exact, mut fused_exact) = (0, 0);
    for (p, &g) in predictions.iter().zip(gold) {
        let mut all_right = true;
        for label in Label::ALL {
            let decision = p.probs[label] >= DECISION_THRESHOLD;
            all_right &= decision == (g == label);
            binary[label].tally(decision, g == label);
            fused[label].tally(p.label == label, g == label);
        }
        binary_exact += usize::from(all_right);
        fused_exact += usize::from(p.label == g);
    }
    Ok(Evaluation {
        binary: EvaluationReport::from_counts(ScoringMode::Binary, binary, binary_exact),
        fused: EvaluationReport::from_counts(ScoringMode::Fused, fused, fused_exact),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Run `classifier` over the test corpus and score it both ways.
pub fn evaluate<C: CommentClassifier + ?Sized>(
    classifier: &C,
    test: &Corpus,
) -> Result<Evaluation, EvaluateError> {
    let texts: Vec<&str> = test.comments().iter().map(|c| c.text.as_str()).collect();
    let gold: Vec<Label> = test.comments().iter().map(|c| c.gold).collect();
    let predictions = classifier.predict_batch(&texts)?;
    Ok(evaluate_predictions(&predictions, &gold)?)
}

/// Round half-up to two decimals. The tiny nudge keeps decimal ties such as
/// 0.945 (stored as 0.94499...) on the upper side.
pub fn round2(x: f64) -> f64 {
    libm::floor(x * 100.0 + 0.5 + 1e-9) / 100.0
}

/// Table row order: irrelevant first, then the two relevant classes.
pub const ROW_ORDER: [Label; 3] = [
    Label::Irrelevant,
    Label::ProblemReport,
    Label::FeatureRequest,
];

pub const MACRO_ROW: &str = "all classes (avg.)";

pub fn render_report(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mode: {}  n_test: {}  accuracy: {:.2}",
        r.mode,
        r.n_test,
        round2(r.accuracy)
    );
    let _ = writeln!(
        out,
        "{:<20} {:>5} {:>5} {:>5} {:>5}",
        "class", "acc", "pre", "rec", "f1"
    );
    let mut row = |name: &str, c: &ClassReport| {
        let _ = writeln!(
            out,
            "{:<20} {:>5.2} {:>5.2} {:>5.2} {:>5.2}",
            name,
            round2(c.accuracy),
            round2(c.precision),
            round2(c.recall),
            round2(c.f1)
        );
    };
    for label in ROW_ORDER {
        row(label.display_name(), &r.classes[label]);
    }
    row(MACRO_ROW, &r.macro_avg);
    out
}
