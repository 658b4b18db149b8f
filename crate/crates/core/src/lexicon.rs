//! Food lexicon, tokenizer and leftmost-longest food matching.
//!
//! A [`FoodLexicon`] holds curated food surface forms with a per-serving
//! caloric value and a class. Matching runs over the token sequence produced
//! by [`tokenize`]: at every position the longest entry starting there wins,
//! and the scan resumes after it, so matches never overlap.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of nutrition-site entries averaged per food term.
pub const DEFAULT_CALORIE_CAP: usize = 25;
/// Longest supported entry, in tokens.
pub const DEFAULT_MAX_TOKENS: usize = 4;
/// Number of most frequent regional foods considered by [`distinguishing_terms`].
pub const DEFAULT_TOP_K: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoodClass {
    Solid,
    Beverage,
    Alcoholic,
}

impl FoodClass {
    pub const ALL: [FoodClass; 3] = [FoodClass::Solid, FoodClass::Beverage, FoodClass::Alcoholic];

    pub fn as_str(self) -> &'static str {
        match self {
            FoodClass::Solid => "solid",
            FoodClass::Beverage => "beverage",
            FoodClass::Alcoholic => "alcoholic",
        }
    }
}

impl FromStr for FoodClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "solid" => Ok(FoodClass::Solid),
            "beverage" => Ok(FoodClass::Beverage),
            "alcoholic" => Ok(FoodClass::Alcoholic),
            other => Err(Error::InvalidInput(format!("unknown food class {other:?}"))),
        }
    }
}

/// Restricts caloric averages to one food class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassFilter {
    All,
    Solid,
    Beverage,
    Alcoholic,
}

impl ClassFilter {
    pub const EVERY: [ClassFilter; 4] =
        [ClassFilter::All, ClassFilter::Solid, ClassFilter::Beverage, ClassFilter::Alcoholic];

    pub fn admits(self, class: FoodClass) -> bool {
        match self {
            ClassFilter::All => true,
            ClassFilter::Solid => class == FoodClass::Solid,
            ClassFilter::Beverage => class == FoodClass::Beverage,
            ClassFilter::Alcoholic => class == FoodClass::Alcoholic,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassFilter::All => "all",
            ClassFilter::Solid => "solid",
            ClassFilter::Beverage => "beverage",
            ClassFilter::Alcoholic => "alcoholic",
        }
    }
}

impl fmt::Display for ClassFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(ClassFilter::All),
            "solid" | "food" => Ok(ClassFilter::Solid),
            "beverage" => Ok(ClassFilter::Beverage),
            "alcoholic" => Ok(ClassFilter::Alcoholic),
            other => Err(Error::InvalidInput(format!("unknown class filter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodEntry {
    pub surface: String,
    pub tokens: Vec<String>,
    pub calories: f64,
    pub class: FoodClass,
}

impl FoodEntry {
    pub fn new(surface: &str, calories: f64, class: FoodClass) -> Result<Self> {
        let tokens = tokenize(surface);
        if tokens.is_empty() {
            return Err(Error::InvalidInput(format!("empty food surface {surface:?}")));
        }
        if !calories.is_finite() || calories < 0.0 {
            return Err(Error::InvalidInput(format!(
                "calories for {surface:?} must be finite and >= 0, got {calories}"
            )));
        }
        Ok(FoodEntry { surface: tokens.join(" "), tokens, calories, class })
    }
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    entry: Option<usize>,
}

/// Immutable set of food entries with a token trie for longest-prefix lookups.
#[derive(Debug, Clone)]
pub struct FoodLexicon {
    entries: Vec<FoodEntry>,
    nodes: Vec<TrieNode>,
    max_tokens: usize,
}

#[derive(Debug, Deserialize)]
struct LexiconRow {
    surface: String,
    calories: f64,
    class: String,
}

impl FoodLexicon {
    pub fn new(entries: Vec<FoodEntry>) -> Result<Self> {
        Self::with_max_tokens(entries, DEFAULT_MAX_TOKENS)
    }

    pub fn with_max_tokens(mut entries: Vec<FoodEntry>, max_tokens: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("food lexicon is empty".into()));
        }
        entries.sort_by(|a, b| a.surface.cmp(&b.surface));
        if let Some(w) = entries.windows(2).find(|w| w[0].surface == w[1].surface) {
            return Err(Error::InvalidInput(format!("duplicate food surface {:?}", w[0].surface)));
        }
        let mut nodes = vec![TrieNode::default()];
        for (idx, entry) in entries.iter().enumerate() {
            if entry.tokens.len() > max_tokens {
                return Err(Error::InvalidInput(format!(
                    "food {:?} has {} tokens, limit is {max_tokens}",
                    entry.surface,
                    entry.tokens.len()
                )));
            }
            let mut node = 0;
            for token in &entry.tokens {
                node = match nodes[node].children.get(token) {
                    Some(&child) => child,
                    None => {
                        nodes.push(TrieNode::default());
                        let child = nodes.len() - 1;
                        nodes[node].children.insert(token.clone(), child);
                        child
                    }
                };
            }
            nodes[node].entry = Some(idx);
        }
        Ok(FoodLexicon { entries, nodes, max_tokens })
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::parse(path, msg),
            other => other,
        })
    }

    /// Reads `surface,calories,class` rows (header required).
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<LexiconRow>().enumerate() {
            let row = row.map_err(|e| Error::InvalidInput(format!("lexicon row {}: {e}", i + 2)))?;
            let class = row.class.parse()?;
            entries.push(FoodEntry::new(&row.surface.to_lowercase(), row.calories, class)?);
        }
        Self::new(entries)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::InvalidInput(e.to_string());
        wtr.write_record(["surface", "calories", "class"]).map_err(csv_err)?;
        for e in &self.entries {
            wtr.write_record([e.surface.as_str(), &e.calories.to_string(), e.class.as_str()])
                .map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn entries(&self) -> &[FoodEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn get(&self, surface: &str) -> Option<&FoodEntry> {
        self.entries
            .binary_search_by(|e| e.surface.as_str().cmp(surface))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Longest entry that is a prefix of `tokens`, with its length in tokens.
    pub fn longest_prefix(&self, tokens: &[String]) -> Option<(&FoodEntry, usize)> {
        let mut node = 0;
        let mut best = None;
        for (depth, token) in tokens.iter().take(self.max_tokens).enumerate() {
            match self.nodes[node].children.get(token) {
                Some(&child) => node = child,
                None => break,
            }
            if let Some(idx) = self.nodes[node].entry {
                best = Some((&self.entries[idx], depth + 1));
            }
        }
        best
    }
}

/// Lowercases, splits on whitespace and strips ASCII punctuation at token
/// edges. `#tag` and `@user` keep their sigil; only trailing punctuation is
/// removed from them.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(normalize_token).collect()
}

fn normalize_token(raw: &str) -> Option<String> {
    let lower = raw.to_lowercase();
    let lead = lower.trim_start_matches(|c: char| c.is_ascii_punctuation() && c != '#' && c != '@');
    let token = match lead.chars().next() {
        Some(sigil @ ('#' | '@')) => {
            let rest = lead[1..]
                .trim_start_matches(['#', '@'])
                .trim_end_matches(|c: char| c.is_ascii_punctuation());
            if rest.is_empty() {
                return None;
            }
            format!("{sigil}{rest}")
        }
        _ => lead.trim_matches(|c: char| c.is_ascii_punctuation()).to_string(),
    };
    (!token.is_empty()).then_some(token)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoodMatch<'a> {
    pub entry: &'a FoodEntry,
    /// Token offset of the first matched token.
    pub start: usize,
    /// Number of tokens covered.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<'a> {
    pub tweet_id: Option<String>,
    pub matches: Vec<FoodMatch<'a>>,
    pub avg_calories: Option<f64>,
}

impl<'a> MatchResult<'a> {
    pub fn has_food(&self) -> bool {
        !self.matches.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &'a str> + '_ {
        self.matches.iter().map(|m| m.entry.surface.as_str())
    }
}

/// Leftmost-longest, non-overlapping food matching.
pub fn match_foods<'a>(text: &str, lex: &'a FoodLexicon) -> MatchResult<'a> {
    match_tokens(&tokenize(text), lex)
}

pub fn match_tokens<'a>(tokens: &[String], lex: &'a FoodLexicon) -> MatchResult<'a> {
    let mut matches = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        match lex.longest_prefix(&tokens[pos..]) {
            Some((entry, len)) => {
                matches.push(FoodMatch { entry, start: pos, len });
                pos += len;
            }
            None => pos += 1,
        }
    }
    let mut result = MatchResult { tweet_id: None, matches, avg_calories: None };
    result.avg_calories = tweet_avg_calories(&result, ClassFilter::All);
    result
}

/// Mean caloric value of the matched entries admitted by `filter`.
pub fn tweet_avg_calories(m: &MatchResult<'_>, filter: ClassFilter) -> Option<f64> {
    mean(m.matches.iter().filter(|x| filter.admits(x.entry.class)).map(|x| x.entry.calories))
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean of the first `cap` per-serving values, in the order given.
pub fn estimate_calories<S: AsRef<str>>(entries: &[(S, f64)], cap: usize) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::InvalidInput("no nutrition entries".into()));
    }
    if cap == 0 {
        return Err(Error::InvalidInput("calorie cap must be >= 1".into()));
    }
    if let Some((label, kcal)) = entries.iter().find(|(_, k)| !k.is_finite() || *k < 0.0) {
        return Err(Error::InvalidInput(format!(
            "nutrition entry {:?} has invalid calories {kcal}",
            label.as_ref()
        )));
    }
    let used = &entries[..entries.len().min(cap)];
    Ok(used.iter().map(|(_, k)| k).sum::<f64>() / used.len() as f64)
}

/// Ranks a region's foods by `p(term | region) - p(term | global)`.
///
/// Only the region's `top_k` most frequent foods are scored. Probabilities
/// are over all food mentions of the region and of the global corpus.
pub fn distinguishing_terms(
    region_counts: &BTreeMap<String, u64>,
    global_counts: &BTreeMap<String, u64>,
    top_k: usize,
) -> Result<Vec<(String, f64)>> {
    let global_total: u64 = global_counts.values().sum();
    if global_total == 0 {
        return Err(Error::InvalidInput("global food counts are empty".into()));
    }
    let region_total: u64 = region_counts.values().sum();
    if region_total == 0 {
        return Ok(Vec::new());
    }
    let mut popular: Vec<(&String, u64)> =
        region_counts.iter().filter(|(_, &c)| c > 0).map(|(t, &c)| (t, c)).collect();
    popular.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    popular.truncate(top_k);

    let mut scored: Vec<(String, f64)> = popular
        .into_iter()
        .map(|(term, count)| {
            let p_region = count as f64 / region_total as f64;
            let p_global =
                global_counts.get(term).copied().unwrap_or(0) as f64 / global_total as f64;
            (term.clone(), p_region - p_global)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(items: &[(&str, f64, FoodClass)]) -> FoodLexicon {
        FoodLexicon::new(
            items.iter().map(|(s, c, k)| FoodEntry::new(s, *c, *k).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Pizza, tonight!"), vec!["pizza", "tonight"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("#fatgirlproblems I love ice-cream"),
            vec!["#fatgirlproblems", "i", "love", "ice-cream"]
        );
    }

    #[test]
    fn tokenize_sigils_and_edges() {
        assert_eq!(tokenize("(#Pizza!) @Bob: ..."), vec!["#pizza", "@bob"]);
        assert_eq!(tokenize("# @ !!"), Vec::<String>::new());
    }

    #[test]
    fn calorie_estimates() {
        let flat: Vec<(String, f64)> = (0..25).map(|i| (format!("e{i}"), 100.0)).collect();
        assert_eq!(estimate_calories(&flat, 25).unwrap(), 100.0);
        assert_eq!(estimate_calories(&[("a", 100.0), ("b", 200.0)], 25).unwrap(), 150.0);

        // 25 entries of 10..=250 step 10 (mean 130) followed by five that must be ignored.
        let mut long: Vec<(String, f64)> =
            (1..=25).map(|i| (format!("e{i}"), 10.0 * i as f64)).collect();
        long.extend((0..5).map(|i| (format!("tail{i}"), 9000.0)));
        assert_eq!(estimate_calories(&long, 25).unwrap(), 130.0);

        let err = estimate_calories::<&str>(&[], 25).unwrap_err();
        assert!(err.to_string().contains("no nutrition entries"));
        assert!(estimate_calories(&[("x", -1.0)], 25).is_err());
    }

    #[test]
    fn turkey_day() {
        let l = lex(&[("turkey", 189.0, FoodClass::Solid), ("pizza", 285.0, FoodClass::Solid)]);
        let m = match_foods("Happy turkey day!", &l);
        assert_eq!(m.surfaces().collect::<Vec<_>>(), vec!["turkey"]);
        assert_eq!(m.matches[0].start, 1);
        assert_eq!(m.avg_calories, Some(189.0));
    }

    #[test]
    fn longest_wins_over_parts() {
        let l = lex(&[
            ("pizza", 285.0, FoodClass::Solid),
            ("ice", 0.0, FoodClass::Solid),
            ("cream", 50.0, FoodClass::Solid),
            ("ice cream", 270.0, FoodClass::Solid),
        ]);
        let m = match_foods("pizza and ice cream", &l);
        assert_eq!(m.surfaces().collect::<Vec<_>>(), vec!["pizza", "ice cream"]);
        assert_eq!((m.matches[1].start, m.matches[1].len), (2, 2));
        assert_eq!(m.avg_calories, Some((285.0 + 270.0) / 2.0));
    }

    #[test]
    fn no_match() {
        let l = lex(&[("pizza", 285.0, FoodClass::Solid)]);
        let m = match_foods("hello world", &l);
        assert!(m.matches.is_empty());
        assert_eq!(m.avg_calories, None);
    }

    #[test]
    fn class_filtered_average() {
        let l = lex(&[("burger", 100.0, FoodClass::Solid), ("soda", 300.0, FoodClass::Beverage)]);
        let m = match_foods("burger and soda", &l);
        assert_eq!(tweet_avg_calories(&m, ClassFilter::All), Some(200.0));
        assert_eq!(tweet_avg_calories(&m, ClassFilter::Beverage), Some(300.0));
        assert_eq!(tweet_avg_calories(&m, ClassFilter::Alcoholic), None);
        let single = match_foods("burger", &l);
        assert_eq!(tweet_avg_calories(&single, ClassFilter::All), Some(100.0));
    }

    #[test]
    fn lexicon_rejects_bad_entries() {
        assert!(FoodEntry::new("  ", 1.0, FoodClass::Solid).is_err());
        assert!(FoodEntry::new("x", f64::NAN, FoodClass::Solid).is_err());
        let dup = vec![
            FoodEntry::new("pie", 1.0, FoodClass::Solid).unwrap(),
            FoodEntry::new("Pie", 2.0, FoodClass::Solid).unwrap(),
        ];
        assert!(FoodLexicon::new(dup).is_err());
        let long = vec![FoodEntry::new("a b c d e", 1.0, FoodClass::Solid).unwrap()];
        assert!(FoodLexicon::new(long).is_err());
    }

    #[test]
    fn lexicon_csv_roundtrip() {
        let csv = "surface,calories,class\nIce Cream,270,solid\nbeer,150,alcoholic\n";
        let l = FoodLexicon::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(l.get("ice cream").unwrap().tokens, vec!["ice", "cream"]);
        let mut out = Vec::new();
        l.write_csv(&mut out).unwrap();
        let again = FoodLexicon::from_csv_reader(out.as_slice()).unwrap();
        assert_eq!(again.entries(), l.entries());
        assert!(FoodLexicon::from_csv_reader("surface,calories,class\nx,1,fried\n".as_bytes())
            .is_err());
    }

    fn counts(items: &[(&str, u64)]) -> BTreeMap<String, u64> {
        items.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    #[test]
    fn distinguishing_fixture() {
        let region = counts(&[("a", 2), ("b", 1), ("c", 1)]);
        let global = counts(&[("a", 2), ("b", 2), ("c", 4)]);
        let ranked = distinguishing_terms(&region, &global, 200).unwrap();
        assert_eq!(
            ranked,
            vec![("a".into(), 0.25), ("b".into(), 0.0), ("c".into(), -0.25)]
        );
    }

    #[test]
    fn distinguishing_crab() {
        let global = counts(&[("pizza", 500), ("chocolate", 300), ("crab", 20), ("beer", 180)]);
        let maryland = counts(&[("pizza", 40), ("chocolate", 25), ("crab", 20), ("beer", 15)]);
        let ranked = distinguishing_terms(&maryland, &global, 200).unwrap();
        assert_eq!(ranked[0].0, "crab");
    }

    #[test]
    fn distinguishing_identical_and_empty() {
        let global = counts(&[("x", 3), ("y", 6), ("z", 1)]);
        let ranked = distinguishing_terms(&global, &global, 200).unwrap();
        assert!(ranked.iter().all(|(_, s)| *s == 0.0));
        assert!(distinguishing_terms(&counts(&[]), &global, 200).unwrap().is_empty());
        assert!(distinguishing_terms(&global, &counts(&[]), 200).is_err());
    }

    #[test]
    fn distinguishing_top_k_restricts_support() {
        let region = counts(&[("a", 5), ("b", 4), ("c", 1)]);
        let global = counts(&[("a", 1), ("b", 1), ("c", 1)]);
        let ranked = distinguishing_terms(&region, &global, 2).unwrap();
        assert_eq!(ranked.iter().map(|(t, _)| t.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
    }
}
