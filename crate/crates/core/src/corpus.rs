//! Labeled user comments and the data-handling operations around them:
//! class distributions, stratified splits, cross-validation folds,
//! binary-relevance task views and random undersampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};
use core::str::FromStr;

use rand::seq::{index, SliceRandom};

use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("comment `{0}` has empty text")]
    EmptyText(String),
    #[error("duplicate comment id `{0}`")]
    DuplicateId(String),
    #[error("comment `{id}` has language `{found}`, corpus is `{expected}`")]
    LanguageMismatch {
        id: String,
        expected: String,
        found: String,
    },
    #[error("corpus is empty")]
    Empty,
    #[error("test fraction {0} outside (0, 1)")]
    FractionOutOfRange(f64),
    #[error("fold count {0} must be at least 2")]
    TooFewFolds(usize),
    #[error("class {label} has {count} members, fewer than {k} folds")]
    ClassSmallerThanFolds {
        label: Label,
        count: usize,
        k: usize,
    },
    #[error("fold index {fold} out of range for k = {k}")]
    FoldOutOfRange { fold: usize, k: usize },
    #[error("binary task for {0} has an empty side")]
    EmptySide(Label),
}

/// The three-way taxonomy. Declaration order is the canonical order used for
/// tie-breaking and report rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Label {
    ProblemReport,
    FeatureRequest,
    Irrelevant,
}

impl Label {
    pub const ALL: [Label; 3] = [
        Label::ProblemReport,
        Label::FeatureRequest,
        Label::Irrelevant,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::ProblemReport => "problem_report",
            Label::FeatureRequest => "feature_request",
            Label::Irrelevant => "irrelevant",
        }
    }

    /// Human-readable row name used in rendered reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Label::ProblemReport => "problem report",
            Label::FeatureRequest => "feature request",
            Label::Irrelevant => "irrelevant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "problem_report" => Ok(Label::ProblemReport),
            "feature_request" => Ok(Label::FeatureRequest),
            "irrelevant" => Ok(Label::Irrelevant),
            other => Err(CorpusError::UnknownLabel(other.to_string())),
        }
    }
}

/// One value per label, indexed by [`Label`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerLabel<T>(pub [T; 3]);

impl<T> PerLabel<T> {
    pub fn from_fn(mut f: impl FnMut(Label) -> T) -> Self {
        PerLabel(Label::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Label, &T)> {
        Label::ALL.into_iter().zip(self.0.iter())
    }
}

impl<T> Index<Label> for PerLabel<T> {
    type Output = T;
    fn index(&self, label: Label) -> &T {
        &self.0[label.index()]
    }
}

impl<T> IndexMut<Label> for PerLabel<T> {
    fn index_mut(&mut self, label: Label) -> &mut T {
        &mut self.0[label.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UserComment {
    pub id: String,
    pub text: String,
    pub language: String,
    pub gold: Label,
}

impl UserComment {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        language: impl Into<String>,
        gold: Label,
    ) -> Self {
        UserComment {
            id: id.into(),
            text: text.into(),
            language: language.into(),
            gold,
        }
    }
}

/// Language tag used for corpora that mix several languages.
pub const MIXED_LANGUAGE: &str = "mul";

/// An ordered, validated collection of comments. Ingestion order is kept so
/// seeded sampling stays reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    language: String,
    comments: Vec<UserComment>,
}

impl Corpus {
    /// Validates ids, texts and languages. A corpus tagged [`MIXED_LANGUAGE`]
    /// accepts comments in any language.
    pub fn new(
        name: impl Into<String>,
        language: impl Into<String>,
        comments: Vec<UserComment>,
    ) -> Result<Self, CorpusError> {
        let language = language.into();
        let mut seen = BTreeSet::new();
        for c in &comments {
            if c.text.trim().is_empty() {
                return Err(CorpusError::EmptyText(c.id.clone()));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(CorpusError::DuplicateId(c.id.clone()));
            }
            if language != MIXED_LANGUAGE && c.language != language {
                return Err(CorpusError::LanguageMismatch {
                    id: c.id.clone(),
                    expected: language.clone(),
                    found: c.language.clone(),
                });
            }
        }
        Ok(Corpus {
            name: name.into(),
            language,
            comments,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn comments(&self) -> &[UserComment] {
        &self.comments
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn class_counts(&self) -> PerLabel<usize> {
        let mut counts = PerLabel([0; 3]);
        for c in &self.comments {
            counts[c.gold] += 1;
        }
        counts
    }

    /// Sub-corpus keeping the comments selected by `keep`, in order.
    fn filtered(&self, name: String, mut keep: impl FnMut(usize, &UserComment) -> bool) -> Corpus {
        Corpus {
            name,
            language: self.language.clone(),
            comments: self
                .comments
                .iter()
                .enumerate()
                .filter(|(i, c)| keep(*i, c))
                .map(|(_, c)| c.clone())
                .collect(),
        }
    }

    /// Concatenate corpora and interleave them with a seeded shuffle. Ids are
    /// prefixed with the source corpus name to keep them unique.
    pub fn concat(
        name: impl Into<String>,
        parts: &[Corpus],
        seed: u64,
    ) -> Result<Corpus, CorpusError> {
        let mut comments: Vec<UserComment> = parts
            .iter()
            .flat_map(|p| {
                p.comments.iter().map(move |c| UserComment {
                    id: format!("{}/{}", p.name, c.id),
                    ..c.clone()
                })
            })
            .collect();
        comments.shuffle(&mut rng_for(seed, &[0xC0_4CA7]));
        let language = match parts.first() {
            Some(first) if parts.iter().all(|p| p.language == first.language) => {
                first.language.clone()
            }
            Some(_) => MIXED_LANGUAGE.to_string(),
            None => String::new(),
        };
        Corpus::new(name, language, comments)
    }
}

/// Fraction of comments per label. Ratios sum to one.
pub fn class_distribution(corpus: &Corpus) -> Result<PerLabel<f64>, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let counts = corpus.class_counts();
    let n = corpus.len() as f64;
    Ok(PerLabel::from_fn(|l| counts[l] as f64 / n))
}

/// Indices of each class, in corpus order.
fn class_indices(corpus: &Corpus) -> PerLabel<Vec<usize>> {
    let mut idx: PerLabel<Vec<usize>> = PerLabel::default();
    for (i, c) in corpus.comments.iter().enumerate() {
        idx[c.gold].push(i);
    }
    idx
}

/// Split each class independently so the test side holds
/// `round(count * test_fraction)` members of every class.
pub fn stratified_split(
    corpus: &Corpus,
    test_fraction: f64,
    seed: u64,
) -> Result<(Corpus, Corpus), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::FractionOutOfRange(test_fraction));
    }
    let mut in_test = alloc::vec![false; corpus.len()];
    for (label, members) in class_indices(corpus).0.iter().enumerate() {
        let take = libm::round(members.len() as f64 * test_fraction) as usize;
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng_for(seed, &[0x5B117, label as u64]));
        for &i in &shuffled[..take.min(shuffled.len())] {
            in_test[i] = true;
        }
    }
    let train = corpus.filtered(format!("{}-train", corpus.name), |i, _| !in_test[i]);
    let test = corpus.filtered(format!("{}-test", corpus.name), |i, _| in_test[i]);
    Ok((train, test))
}

/// Stratified assignment of comment ids to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    /// `(training folds, held-out fold)` for fold `fold`, each in corpus order.
    pub fn split(&self, corpus: &Corpus, fold: usize) -> Result<(Corpus, Corpus), CorpusError> {
        if fold >= self.k {
            return Err(CorpusError::FoldOutOfRange { fold, k: self.k });
        }
        let held = |c: &UserComment| self.fold_of(&c.id) == Some(fold);
        let train = corpus.filtered(format!("{}-fold{}-train", corpus.name, fold), |_, c| {
            !held(c)
        });
        let test = corpus.filtered(format!("{}-fold{}-held", corpus.name, fold), |_, c| held(c));
        Ok((train, test))
    }
}

/// Deal each shuffled class round-robin into folds, carrying the fold cursor
/// across classes so total fold sizes also differ by at most one.
///
/// Classes with no members are skipped; classes with fewer than `k` members
/// are rejected.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldAssignment, CorpusError> {
    if k < 2 {
        return Err(CorpusError::TooFewFolds(k));
    }
    let classes = class_indices(corpus);
    for (label, members) in classes.iter() {
        if !members.is_empty() && members.len() < k {
            return Err(CorpusError::ClassSmallerThanFolds {
                label,
                count: members.len(),
                k,
            });
        }
    }
    let mut assignment = BTreeMap::new();
    let mut cursor = 0usize;
    for (label, members) in classes.iter() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng_for(seed, &[0xF01D, label.index() as u64]));
        for i in shuffled {
            assignment.insert(corpus.comments[i].id.clone(), cursor % k);
            cursor += 1;
        }
    }
    Ok(FoldAssignment { k, assignment })
}

/// One binary-relevance view of a corpus: `target` against everything else.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTask {
    pub target: Label,
    pub items: Vec<(UserComment, bool)>,
}

impl BinaryTask {
    pub fn positives(&self) -> usize {
        self.items.iter().filter(|(_, p)| *p).count()
    }

    pub fn negatives(&self) -> usize {
        self.items.len() - self.positives()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub fn to_binary_task(corpus: &Corpus, target: Label) -> BinaryTask {
    BinaryTask {
        target,
        items: corpus
            .comments
            .iter()
            .map(|c| (c.clone(), c.gold == target))
            .collect(),
    }
}

/// Random undersampling: keep every minority item and a uniformly drawn
/// subset of the majority side of the same size. Retained items stay in
/// their original order.
pub fn undersample(task: &BinaryTask, seed: u64) -> Result<BinaryTask, CorpusError> {
    let (pos, neg) = (task.positives(), task.negatives());
    if pos == 0 || neg == 0 {
        return Err(CorpusError::EmptySide(task.target));
    }
    if pos == neg {
        return Ok(task.clone());
    }
    let majority_flag = pos > neg;
    let majority: Vec<usize> = task
        .items
        .iter()
        .enumerate()
        .filter(|(_, (_, p))| *p == majority_flag)
        .map(|(i, _)| i)
        .collect();
    let keep_n = pos.min(neg);
    let mut rng = rng_for(seed, &[0x0DE5, task.target.index() as u64]);
    let mut keep = alloc::vec![false; task.items.len()];
    for j in index::sample(&mut rng, majority.len(), keep_n) {
        keep[majority[j]] = true;
    }
    let items = task
        .items
        .iter()
        .enumerate()
        .filter(|(i, (_, p))| *p != majority_flag || keep[*i])
        .map(|(_, it)| it.clone())
        .collect();
    Ok(BinaryTask {
        target: task.target,
        items,
    })
}
