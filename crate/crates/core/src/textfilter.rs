//! Keyword filters and a unigram multinomial Naive Bayes food-topic classifier.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{TweetRecord, UserProfile};
use crate::error::{Error, Result};
use crate::lexicon::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterTarget {
    TweetText,
    ProfileText,
    Hashtags,
}

impl FromStr for FilterTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tweet_text" => Ok(FilterTarget::TweetText),
            "profile_text" => Ok(FilterTarget::ProfileText),
            "hashtags" => Ok(FilterTarget::Hashtags),
            other => Err(Error::InvalidInput(format!("unknown filter target {other:?}"))),
        }
    }
}

/// Anything a [`KeywordFilter`] can inspect.
pub trait Filterable {
    fn field_text(&self, target: FilterTarget) -> Option<&str>;

    fn hashtag_list(&self) -> Option<&[String]> {
        None
    }
}

impl Filterable for TweetRecord {
    fn field_text(&self, target: FilterTarget) -> Option<&str> {
        (target == FilterTarget::TweetText).then_some(self.text.as_str())
    }

    fn hashtag_list(&self) -> Option<&[String]> {
        Some(&self.hashtags)
    }
}

impl Filterable for UserProfile {
    fn field_text(&self, target: FilterTarget) -> Option<&str> {
        (target == FilterTarget::ProfileText).then_some(self.profile_text.as_str())
    }
}

impl Filterable for str {
    fn field_text(&self, target: FilterTarget) -> Option<&str> {
        (target != FilterTarget::Hashtags).then_some(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordFilter {
    pub name: String,
    /// Tokenized terms; multi-token terms match as contiguous phrases.
    pub terms: BTreeSet<Vec<String>>,
    pub target: FilterTarget,
}

impl KeywordFilter {
    pub fn new<S: AsRef<str>>(
        name: impl Into<String>,
        terms: impl IntoIterator<Item = S>,
        target: FilterTarget,
    ) -> Result<Self> {
        let name = name.into();
        let terms: BTreeSet<Vec<String>> = terms
            .into_iter()
            .map(|t| {
                let t = t.as_ref().trim();
                match target {
                    FilterTarget::Hashtags => {
                        vec![t.trim_start_matches('#').to_lowercase()]
                    }
                    _ => tokenize(t),
                }
            })
            .filter(|toks| !toks.is_empty() && toks.iter().all(|t| !t.is_empty()))
            .collect();
        if terms.is_empty() {
            return Err(Error::InvalidInput(format!("filter {name:?} has no terms")));
        }
        Ok(KeywordFilter { name, terms, target })
    }

    /// One lowercase term per line; lines starting with `#` are comments.
    /// Hashtag terms are written without the `#`.
    pub fn parse(name: impl Into<String>, body: &str, target: FilterTarget) -> Result<Self> {
        let terms = body
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::new(name, terms, target)
    }

    /// Loads a filter file; the filter is named after the file stem.
    pub fn from_path(path: &Path, target: FilterTarget) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::parse(path, "filter file has no usable name"))?;
        Self::parse(name, &body, target).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn apply<T: Filterable + ?Sized>(&self, item: &T) -> bool {
        apply_filter(self, item)
    }
}

/// True iff any filter term occurs as a token or token phrase of the targeted field.
pub fn apply_filter<T: Filterable + ?Sized>(f: &KeywordFilter, item: &T) -> bool {
    match f.target {
        FilterTarget::Hashtags => item
            .hashtag_list()
            .is_some_and(|tags| tags.iter().any(|t| f.terms.contains(std::slice::from_ref(t)))),
        target => match item.field_text(target) {
            Some(text) => contains_any_phrase(&tokenize(text), &f.terms),
            None => false,
        },
    }
}

pub(crate) fn contains_any_phrase(tokens: &[String], phrases: &BTreeSet<Vec<String>>) -> bool {
    phrases.iter().any(|p| !p.is_empty() && tokens.windows(p.len()).any(|w| w == p.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NbLabel {
    Food,
    NotFood,
}

impl NbLabel {
    fn index(self) -> usize {
        match self {
            NbLabel::Food => 0,
            NbLabel::NotFood => 1,
        }
    }
}

impl FromStr for NbLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "food" | "1" | "true" | "yes" => Ok(NbLabel::Food),
            "not_food" | "not" | "0" | "false" | "no" => Ok(NbLabel::NotFood),
            other => Err(Error::InvalidInput(format!("unknown label {other:?}"))),
        }
    }
}

/// Multinomial Naive Bayes with additive smoothing over two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    /// Log prior, indexed food / not_food.
    pub log_prior: [f64; 2],
    pub log_likelihood: BTreeMap<String, [f64; 2]>,
    pub alpha: f64,
}

impl NbModel {
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.log_likelihood.keys().map(String::as_str)
    }

    /// Unnormalized log scores; tokens outside the vocabulary contribute nothing.
    pub fn class_log_scores(&self, tokens: &[String]) -> [f64; 2] {
        let mut scores = self.log_prior;
        for tok in tokens {
            if let Some(ll) = self.log_likelihood.get(tok) {
                scores[0] += ll[0];
                scores[1] += ll[1];
            }
        }
        scores
    }
}

pub fn nb_train<S: AsRef<str>>(examples: &[(Vec<S>, NbLabel)], alpha: f64) -> Result<NbModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("smoothing alpha must be > 0, got {alpha}")));
    }
    let mut docs = [0usize; 2];
    let mut totals = [0u64; 2];
    let mut counts: BTreeMap<String, [u64; 2]> = BTreeMap::new();
    for (tokens, label) in examples {
        let c = label.index();
        docs[c] += 1;
        for t in tokens {
            counts.entry(t.as_ref().to_string()).or_default()[c] += 1;
            totals[c] += 1;
        }
    }
    if docs.contains(&0) {
        return Err(Error::InvalidInput("training data must contain both labels".into()));
    }
    let n_docs = (docs[0] + docs[1]) as f64;
    let vocab = counts.len() as f64;
    let denom = [
        (totals[0] as f64 + alpha * vocab).ln(),
        (totals[1] as f64 + alpha * vocab).ln(),
    ];
    let log_likelihood = counts
        .into_iter()
        .map(|(tok, c)| {
            let ll = [
                (c[0] as f64 + alpha).ln() - denom[0],
                (c[1] as f64 + alpha).ln() - denom[1],
            ];
            (tok, ll)
        })
        .collect();
    Ok(NbModel {
        log_prior: [(docs[0] as f64 / n_docs).ln(), (docs[1] as f64 / n_docs).ln()],
        log_likelihood,
        alpha,
    })
}

/// Most probable label and its posterior probability. Exact ties go to `NotFood`.
pub fn nb_classify<S: AsRef<str>>(m: &NbModel, tokens: &[S]) -> (NbLabel, f64) {
    let owned: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let s = m.class_log_scores(&owned);
    let hi = s[0].max(s[1]);
    let z = (s[0] - hi).exp() + (s[1] - hi).exp();
    let post_food = (s[0] - hi).exp() / z;
    if s[0] > s[1] {
        (NbLabel::Food, post_food)
    } else {
        (NbLabel::NotFood, 1.0 - post_food)
    }
}

#[derive(Debug, Deserialize)]
struct TrainingRow {
    text: String,
    label: String,
}

/// Reads `text,label` training rows and tokenizes the text.
pub fn load_training_csv(path: &Path) -> Result<Vec<(Vec<String>, NbLabel)>> {
    let rows: Vec<TrainingRow> = crate::corpus::read_csv_strict(path)?;
    rows.into_iter()
        .map(|r| Ok((tokenize(&r.text), r.label.parse()?)))
        .collect()
}
