//! Per-user feature construction and county/state aggregation.
//!
//! Column names shared with the modeling layer:
//! `demog:<name>`, `avg_cal`, `food:<surface>`, `category:<name>`,
//! `hashtag:<tag>` and `stat:<name>`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    assign_home_zip, label_urban, tweets_by_user, CensusRecord, Gender, GeoMapping, HealthOutcome,
    TweetRecord, Urbanity, UserProfile,
};
use crate::error::{Error, Result};
use crate::lexicon::{match_tokens, tokenize, tweet_avg_calories, ClassFilter, FoodLexicon};
use crate::textfilter::{apply_filter, nb_classify, FilterTarget, KeywordFilter, NbLabel, NbModel};

/// Default minimum users for a region to be emitted.
pub const DEFAULT_MIN_USERS: usize = 100;
/// Default cap on prominent accounts per interest area.
pub const MAX_ACCOUNTS_PER_AREA: usize = 200;
/// Default number of corpus hashtags used as baseline columns.
pub const DEFAULT_HASHTAG_COLUMNS: usize = 1000;

pub const DEMOG_COLUMNS: [&str; 5] =
    ["demog:under_18", "demog:over_65", "demog:female", "demog:afro_hispanic", "demog:log_income"];
pub const STAT_COLUMNS: [&str; 4] = ["stat:tweets", "stat:retweets", "stat:replies", "stat:hashtags"];
pub const AVG_CAL_COLUMN: &str = "avg_cal";

/// Demographic model inputs derived from a census row.
pub fn demog_values(c: &CensusRecord) -> [f64; 5] {
    [c.under_18, c.over_65, c.female, c.afro_hispanic, c.median_income.ln()]
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum CategoryTerm {
    Phrase(Vec<String>),
    Prefix(String),
}

/// Generic category lexicon (`category,term` rows); binary hit per text.
///
/// A single-token term ending in `*` matches any token with that prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryLexicon {
    categories: BTreeMap<String, Vec<CategoryTerm>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CategoryRow {
    category: String,
    term: String,
}

impl CategoryLexicon {
    pub fn from_pairs<C: AsRef<str>, T: AsRef<str>>(pairs: impl IntoIterator<Item = (C, T)>) -> Self {
        let mut categories: BTreeMap<String, Vec<CategoryTerm>> = BTreeMap::new();
        for (cat, term) in pairs {
            let term = term.as_ref().trim().to_lowercase();
            let parsed = match term.strip_suffix('*') {
                Some(prefix) if !prefix.is_empty() && !prefix.contains(char::is_whitespace) => {
                    CategoryTerm::Prefix(prefix.to_string())
                }
                _ => CategoryTerm::Phrase(tokenize(&term)),
            };
            if matches!(&parsed, CategoryTerm::Phrase(t) if t.is_empty()) {
                continue;
            }
            categories.entry(cat.as_ref().trim().to_string()).or_default().push(parsed);
        }
        CategoryLexicon { categories }
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let rows: Vec<CategoryRow> = crate::corpus::read_csv_strict(path)?;
        Ok(Self::from_pairs(rows.into_iter().map(|r| (r.category, r.term))))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = self.categories.iter().flat_map(|(cat, terms)| {
            terms.iter().map(move |t| CategoryRow {
                category: cat.clone(),
                term: match t {
                    CategoryTerm::Phrase(p) => p.join(" "),
                    CategoryTerm::Prefix(p) => format!("{p}*"),
                },
            })
        });
        crate::corpus::write_csv(path, rows)
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    pub fn hits(&self, text: &str) -> BTreeSet<String> {
        let tokens = tokenize(text);
        self.categories
            .iter()
            .filter(|(_, terms)| {
                terms.iter().any(|term| match term {
                    CategoryTerm::Prefix(p) => tokens.iter().any(|t| t.starts_with(p.as_str())),
                    CategoryTerm::Phrase(p) => tokens.windows(p.len()).any(|w| w == p.as_slice()),
                })
            })
            .map(|(c, _)| c.clone())
            .collect()
    }
}

/// Prominent accounts per interest area with scores in [0, 100].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProminenceTable {
    by_account: BTreeMap<String, Vec<(String, f64)>>,
    areas: BTreeSet<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProminenceRow {
    pub account_id: String,
    pub area: String,
    pub score: f64,
}

impl ProminenceTable {
    pub fn new(rows: Vec<ProminenceRow>) -> Result<Self> {
        let mut by_account: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        let mut per_area: BTreeMap<String, usize> = BTreeMap::new();
        for r in rows {
            if !(0.0..=100.0).contains(&r.score) {
                return Err(Error::InvalidInput(format!(
                    "prominence score {} for {} outside [0,100]",
                    r.score, r.account_id
                )));
            }
            *per_area.entry(r.area.clone()).or_default() += 1;
            by_account.entry(r.account_id).or_default().push((r.area, r.score));
        }
        if let Some((area, n)) = per_area.iter().find(|(_, &n)| n > MAX_ACCOUNTS_PER_AREA) {
            return Err(Error::InvalidInput(format!(
                "area {area} lists {n} accounts, limit is {MAX_ACCOUNTS_PER_AREA}"
            )));
        }
        Ok(ProminenceTable { by_account, areas: per_area.into_keys().collect() })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::new(crate::corpus::read_csv_strict(path)?)
    }

    pub fn rows(&self) -> Vec<ProminenceRow> {
        self.by_account
            .iter()
            .flat_map(|(acc, areas)| {
                areas.iter().map(move |(area, score)| ProminenceRow {
                    account_id: acc.clone(),
                    area: area.clone(),
                    score: *score,
                })
            })
            .collect()
    }

    pub fn areas(&self) -> impl Iterator<Item = &str> {
        self.areas.iter().map(String::as_str)
    }

    /// Per-area sum of the scores of followed prominent accounts.
    pub fn aggregate(&self, friends: &BTreeSet<String>) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for f in friends {
            if let Some(areas) = self.by_account.get(f) {
                for (area, score) in areas {
                    *out.entry(area.clone()).or_default() += score;
                }
            }
        }
        out
    }
}

/// Per-area mean aggregate over users with a nonzero aggregate in that area.
pub fn interest_thresholds<'a>(
    aggregates: impl IntoIterator<Item = &'a BTreeMap<String, f64>>,
) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for agg in aggregates {
        for (area, &score) in agg {
            if score > 0.0 {
                acc.entry(area.clone()).or_default().push(score);
            }
        }
    }
    acc.into_iter().map(|(area, v)| (area, sorted_mean(v).unwrap_or(0.0))).collect()
}

/// Interest indicator per area: aggregate at or above that area's threshold.
pub fn interest_scores(
    friends: &BTreeSet<String>,
    table: &ProminenceTable,
    means: &BTreeMap<String, f64>,
) -> BTreeMap<String, bool> {
    indicators_from_aggregate(&table.aggregate(friends), table, means)
}

fn indicators_from_aggregate(
    agg: &BTreeMap<String, f64>,
    table: &ProminenceTable,
    means: &BTreeMap<String, f64>,
) -> BTreeMap<String, bool> {
    table
        .areas()
        .map(|area| {
            let score = agg.get(area).copied().unwrap_or(0.0);
            let on = score > 0.0 && means.get(area).is_some_and(|&m| score >= m);
            (area.to_string(), on)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetStats {
    pub n_tweets: u64,
    pub n_retweets: u64,
    pub n_replies: u64,
    pub n_hashtags: u64,
}

impl TweetStats {
    fn as_array(&self) -> [u64; 4] {
        [self.n_tweets, self.n_retweets, self.n_replies, self.n_hashtags]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFeatures {
    pub user_id: String,
    pub home_zip: String,
    pub county_id: String,
    pub state_id: String,
    pub food_indicators: BTreeSet<String>,
    pub category_indicators: BTreeSet<String>,
    pub hashtags: BTreeSet<String>,
    /// Mean over the user's food-bearing tweets of the per-tweet caloric value.
    pub avg_cal: Option<f64>,
    pub avg_cal_by_class: BTreeMap<ClassFilter, f64>,
    pub food_tweet_fraction: f64,
    pub tweet_stats: TweetStats,
    pub demographics: CensusRecord,
    pub gender: Gender,
    pub urban: Urbanity,
    /// Names of keyword filters that fired.
    pub interests: BTreeSet<String>,
    pub prominence_scores: BTreeMap<String, f64>,
    /// Areas where the prominence aggregate reaches the area threshold.
    pub prominent_interests: BTreeSet<String>,
}

impl UserFeatures {
    /// User-level value of a model column. Food and category columns are binary.
    pub fn column_value(&self, column: &str) -> Option<f64> {
        let bit = |b: bool| if b { 1.0 } else { 0.0 };
        if let Some(food) = column.strip_prefix("food:") {
            return Some(bit(self.food_indicators.contains(food)));
        }
        if let Some(cat) = column.strip_prefix("category:") {
            return Some(bit(self.category_indicators.contains(cat)));
        }
        if let Some(tag) = column.strip_prefix("hashtag:") {
            return Some(bit(self.hashtags.contains(tag)));
        }
        if column == AVG_CAL_COLUMN {
            return self.avg_cal;
        }
        if let Some(i) = STAT_COLUMNS.iter().position(|c| *c == column) {
            return Some(self.tweet_stats.as_array()[i] as f64);
        }
        DEMOG_COLUMNS
            .iter()
            .position(|c| *c == column)
            .map(|i| demog_values(&self.demographics)[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoHomeZip,
    UnmappedZip,
    NoCensus,
    NoProfile,
}

/// Read-only inputs shared by every user's feature construction.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub lexicon: &'a FoodLexicon,
    pub categories: &'a CategoryLexicon,
    pub filters: &'a [KeywordFilter],
    pub census: &'a BTreeMap<String, CensusRecord>,
    pub geo: &'a GeoMapping,
    pub prominence: Option<&'a ProminenceTable>,
    /// Optional pre-filter: tweets classified as not food carry no matches.
    pub nb_gate: Option<&'a NbModel>,
    pub exclude_replies_retweets: bool,
}

impl<'a> FeatureContext<'a> {
    pub fn new(
        lexicon: &'a FoodLexicon,
        categories: &'a CategoryLexicon,
        census: &'a BTreeMap<String, CensusRecord>,
        geo: &'a GeoMapping,
    ) -> Self {
        FeatureContext {
            lexicon,
            categories,
            filters: &[],
            census,
            geo,
            prominence: None,
            nb_gate: None,
            exclude_replies_retweets: false,
        }
    }
}

/// Features of one user. `tweets` are that user's tweets.
pub fn build_user_features(
    profile: &UserProfile,
    home_zip: &str,
    urban: Urbanity,
    tweets: &[&TweetRecord],
    ctx: &FeatureContext<'_>,
) -> std::result::Result<UserFeatures, SkipReason> {
    let county = ctx.geo.county_of(home_zip).ok_or(SkipReason::UnmappedZip)?;
    let state = ctx.geo.state_of_county(county).ok_or(SkipReason::UnmappedZip)?;
    let demographics = ctx.census.get(county).ok_or(SkipReason::NoCensus)?.clone();

    let mut stats = TweetStats::default();
    let mut food_tweets = 0u64;
    let mut foods = BTreeSet::new();
    let mut hashtags = BTreeSet::new();
    let mut per_class: BTreeMap<ClassFilter, Vec<f64>> = BTreeMap::new();
    let mut interests = BTreeSet::new();

    for tweet in tweets {
        if ctx.exclude_replies_retweets && (tweet.is_reply || tweet.is_retweet) {
            continue;
        }
        stats.n_tweets += 1;
        stats.n_retweets += u64::from(tweet.is_retweet);
        stats.n_replies += u64::from(tweet.is_reply);
        stats.n_hashtags += tweet.hashtags.len() as u64;
        hashtags.extend(tweet.hashtags.iter().cloned());
        for f in ctx.filters.iter().filter(|f| f.target != FilterTarget::ProfileText) {
            if apply_filter(f, *tweet) {
                interests.insert(f.name.clone());
            }
        }

        let tokens = tokenize(&tweet.text);
        if let Some(model) = ctx.nb_gate {
            if nb_classify(model, &tokens).0 == NbLabel::NotFood {
                continue;
            }
        }
        let m = match_tokens(&tokens, ctx.lexicon);
        if !m.has_food() {
            continue;
        }
        food_tweets += 1;
        foods.extend(m.surfaces().map(str::to_string));
        for filter in ClassFilter::EVERY {
            if let Some(v) = tweet_avg_calories(&m, filter) {
                per_class.entry(filter).or_default().push(v);
            }
        }
    }

    for f in ctx.filters.iter().filter(|f| f.target == FilterTarget::ProfileText) {
        if apply_filter(f, profile) {
            interests.insert(f.name.clone());
        }
    }

    let avg_cal_by_class: BTreeMap<ClassFilter, f64> = per_class
        .into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    Ok(UserFeatures {
        user_id: profile.user_id.clone(),
        home_zip: home_zip.to_string(),
        county_id: county.to_string(),
        state_id: state.to_string(),
        food_indicators: foods,
        category_indicators: ctx.categories.hits(&profile.profile_text),
        hashtags,
        avg_cal: avg_cal_by_class.get(&ClassFilter::All).copied(),
        avg_cal_by_class,
        food_tweet_fraction: if stats.n_tweets == 0 {
            0.0
        } else {
            food_tweets as f64 / stats.n_tweets as f64
        },
        tweet_stats: stats,
        demographics,
        gender: profile.gender,
        urban,
        interests,
        prominence_scores: ctx.prominence.map(|p| p.aggregate(&profile.friend_ids)).unwrap_or_default(),
        prominent_interests: BTreeSet::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBuild {
    pub users: Vec<UserFeatures>,
    pub skipped: BTreeMap<SkipReason, usize>,
    pub interest_thresholds: BTreeMap<String, f64>,
}

/// Features for every profile with a mappable, census-covered home zip.
///
/// Home zips come from the tweets (modal zip); prominence interest
/// indicators are set in a second pass once per-area thresholds are known.
pub fn build_all_features(
    profiles: &[UserProfile],
    tweets: &[TweetRecord],
    ctx: &FeatureContext<'_>,
) -> FeatureBuild {
    let homes = assign_home_zip(tweets);
    let urban = label_urban(&homes, ctx.geo);
    let by_user = tweets_by_user(tweets);
    let profile_ids: BTreeSet<&str> = profiles.iter().map(|p| p.user_id.as_str()).collect();

    let results: Vec<std::result::Result<UserFeatures, SkipReason>> = profiles
        .par_iter()
        .map(|p| {
            let zip = homes.get(&p.user_id).ok_or(SkipReason::NoHomeZip)?;
            let label = urban.labels.get(&p.user_id).copied().unwrap_or(Urbanity::Rural);
            let empty = Vec::new();
            let own = by_user.get(p.user_id.as_str()).unwrap_or(&empty);
            build_user_features(p, zip, label, own, ctx)
        })
        .collect();

    let mut skipped: BTreeMap<SkipReason, usize> = BTreeMap::new();
    let orphan_authors = by_user.keys().filter(|u| !profile_ids.contains(*u)).count();
    if orphan_authors > 0 {
        skipped.insert(SkipReason::NoProfile, orphan_authors);
    }
    let mut users = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(u) => users.push(u),
            Err(reason) => *skipped.entry(reason).or_default() += 1,
        }
    }
    if !skipped.is_empty() {
        warn!("skipped users: {skipped:?}");
    }

    let thresholds = interest_thresholds(users.iter().map(|u| &u.prominence_scores));
    if let Some(table) = ctx.prominence {
        for u in &mut users {
            u.prominent_interests = indicators_from_aggregate(&u.prominence_scores, table, &thresholds)
                .into_iter()
                .filter_map(|(area, on)| on.then_some(area))
                .collect();
        }
    }
    FeatureBuild { users, skipped, interest_thresholds: thresholds }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLevel {
    County,
    State,
}

impl RegionLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLevel::County => "county",
            RegionLevel::State => "state",
        }
    }

    fn region_of<'u>(&self, u: &'u UserFeatures) -> &'u str {
        match self {
            RegionLevel::County => &u.county_id,
            RegionLevel::State => &u.state_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionAggregate {
    pub region_id: String,
    pub level: RegionLevel,
    pub state_id: String,
    pub n_users: usize,
    /// Proportion of users mentioning each food; absent foods have weight 0.
    pub food_weights: BTreeMap<String, f64>,
    pub category_weights: BTreeMap<String, f64>,
    pub hashtag_weights: BTreeMap<String, f64>,
    /// Unweighted mean of user avg_cal, per class filter, over users that have one.
    pub mean_avg_cal: BTreeMap<ClassFilter, f64>,
    /// Per-user means of tweets, retweets, replies and hashtags.
    pub mean_tweet_stats: [f64; 4],
    pub demographics: Option<CensusRecord>,
    pub outcome: Option<HealthOutcome>,
}

impl RegionAggregate {
    /// Region-level value of a model column; `None` when unavailable.
    pub fn column_value(&self, column: &str) -> Option<f64> {
        if let Some(food) = column.strip_prefix("food:") {
            return Some(self.food_weights.get(food).copied().unwrap_or(0.0));
        }
        if let Some(cat) = column.strip_prefix("category:") {
            return Some(self.category_weights.get(cat).copied().unwrap_or(0.0));
        }
        if let Some(tag) = column.strip_prefix("hashtag:") {
            return Some(self.hashtag_weights.get(tag).copied().unwrap_or(0.0));
        }
        if column == AVG_CAL_COLUMN {
            return self.mean_avg_cal.get(&ClassFilter::All).copied();
        }
        if let Some(i) = STAT_COLUMNS.iter().position(|c| *c == column) {
            return Some(self.mean_tweet_stats[i]);
        }
        let i = DEMOG_COLUMNS.iter().position(|c| *c == column)?;
        self.demographics.as_ref().map(|d| demog_values(d)[i])
    }
}

/// Census and outcome tables keyed by region id.
#[derive(Debug, Clone, Copy)]
pub struct RegionTables<'a> {
    pub census: &'a BTreeMap<String, CensusRecord>,
    pub health: &'a BTreeMap<String, HealthOutcome>,
}

/// Mergeable per-region counts. Merging is associative and commutative, and
/// floating-point sums are taken over sorted values at finalization, so the
/// result is independent of user order and sharding.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionAccumulator {
    pub state_id: String,
    pub n_users: usize,
    food_counts: BTreeMap<String, usize>,
    category_counts: BTreeMap<String, usize>,
    hashtag_counts: BTreeMap<String, usize>,
    avg_cal: BTreeMap<ClassFilter, Vec<f64>>,
    stat_sums: [u64; 4],
}

impl RegionAccumulator {
    pub fn add(&mut self, u: &UserFeatures) {
        if self.state_id.is_empty() || u.state_id < self.state_id {
            self.state_id = u.state_id.clone();
        }
        self.n_users += 1;
        for f in &u.food_indicators {
            *self.food_counts.entry(f.clone()).or_default() += 1;
        }
        for c in &u.category_indicators {
            *self.category_counts.entry(c.clone()).or_default() += 1;
        }
        for h in &u.hashtags {
            *self.hashtag_counts.entry(h.clone()).or_default() += 1;
        }
        for (k, v) in &u.avg_cal_by_class {
            self.avg_cal.entry(*k).or_default().push(*v);
        }
        for (s, v) in self.stat_sums.iter_mut().zip(u.tweet_stats.as_array()) {
            *s += v;
        }
    }

    pub fn merge(&mut self, other: RegionAccumulator) {
        if self.state_id.is_empty() || (!other.state_id.is_empty() && other.state_id < self.state_id) {
            self.state_id = other.state_id;
        }
        self.n_users += other.n_users;
        for (k, v) in other.food_counts {
            *self.food_counts.entry(k).or_default() += v;
        }
        for (k, v) in other.category_counts {
            *self.category_counts.entry(k).or_default() += v;
        }
        for (k, v) in other.hashtag_counts {
            *self.hashtag_counts.entry(k).or_default() += v;
        }
        for (k, v) in other.avg_cal {
            self.avg_cal.entry(k).or_default().extend(v);
        }
        for (s, v) in self.stat_sums.iter_mut().zip(other.stat_sums) {
            *s += v;
        }
    }

    pub fn finalize(self, region_id: &str, level: RegionLevel, tables: &RegionTables<'_>) -> RegionAggregate {
        let n = self.n_users as f64;
        let props = |m: BTreeMap<String, usize>| -> BTreeMap<String, f64> {
            m.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()
        };
        RegionAggregate {
            region_id: region_id.to_string(),
            level,
            state_id: self.state_id,
            n_users: self.n_users,
            food_weights: props(self.food_counts),
            category_weights: props(self.category_counts),
            hashtag_weights: props(self.hashtag_counts),
            mean_avg_cal: self
                .avg_cal
                .into_iter()
                .filter_map(|(k, v)| sorted_mean(v).map(|m| (k, m)))
                .collect(),
            mean_tweet_stats: self.stat_sums.map(|s| s as f64 / n),
            demographics: tables.census.get(region_id).cloned(),
            outcome: tables.health.get(region_id).cloned(),
        }
    }
}

fn sorted_mean(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

pub fn accumulate_regions<'u>(
    users: impl IntoIterator<Item = &'u UserFeatures>,
    level: RegionLevel,
) -> BTreeMap<String, RegionAccumulator> {
    let mut acc: BTreeMap<String, RegionAccumulator> = BTreeMap::new();
    for u in users {
        acc.entry(level.region_of(u).to_string()).or_default().add(u);
    }
    acc
}

/// Aggregates users to regions, dropping regions with fewer than `min_users`.
pub fn aggregate_region(
    users: &[UserFeatures],
    level: RegionLevel,
    min_users: usize,
    tables: &RegionTables<'_>,
) -> Vec<RegionAggregate> {
    finalize_regions(accumulate_regions(users, level), level, min_users, tables)
}

pub fn finalize_regions(
    acc: BTreeMap<String, RegionAccumulator>,
    level: RegionLevel,
    min_users: usize,
    tables: &RegionTables<'_>,
) -> Vec<RegionAggregate> {
    acc.into_iter()
        .filter(|(_, a)| a.n_users >= min_users.max(1))
        .map(|(id, a)| a.finalize(&id, level, tables))
        .collect()
}

/// The `limit` most widely used hashtags (by user count), ties alphabetical.
pub fn top_hashtags(users: &[UserFeatures], limit: usize) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for u in users {
        for h in &u.hashtags {
            *counts.entry(h).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(limit).map(|(h, _)| h.to_string()).collect()
}

/// Column layout of an aggregate table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggregateColumns {
    pub foods: Vec<String>,
    pub categories: Vec<String>,
    pub hashtags: Vec<String>,
}

const FIXED_HEADER: [&str; 24] = [
    "region_id",
    "level",
    "state_id",
    "n_users",
    "obesity_rate",
    "diabetes_rate",
    "under_18",
    "over_65",
    "female",
    "afro_hispanic",
    "median_income",
    "bachelor_rate",
    "avg_cal",
    "avg_cal:solid",
    "avg_cal:beverage",
    "avg_cal:alcoholic",
    "stat:tweets",
    "stat:retweets",
    "stat:replies",
    "stat:hashtags",
    "has_census",
    "has_outcome",
    "outcome_region",
    "census_region",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one region per row with a stable column order.
pub fn write_aggregates_csv(path: &Path, aggs: &[RegionAggregate], cols: &AggregateColumns) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut header: Vec<String> = FIXED_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(cols.foods.iter().map(|f| format!("food:{f}")));
    header.extend(cols.categories.iter().map(|c| format!("category:{c}")));
    header.extend(cols.hashtags.iter().map(|h| format!("hashtag:{h}")));
    let werr = |e: csv::Error| Error::parse(path, e.to_string());
    wtr.write_record(&header).map_err(werr)?;
    for a in aggs {
        let d = a.demographics.as_ref();
        let o = a.outcome.as_ref();
        let mut row = vec![
            a.region_id.clone(),
            a.level.as_str().to_string(),
            a.state_id.clone(),
            a.n_users.to_string(),
            opt(o.map(|o| o.obesity_rate)),
            opt(o.map(|o| o.diabetes_rate)),
            opt(d.map(|d| d.under_18)),
            opt(d.map(|d| d.over_65)),
            opt(d.map(|d| d.female)),
            opt(d.map(|d| d.afro_hispanic)),
            opt(d.map(|d| d.median_income)),
            opt(d.map(|d| d.bachelor_rate)),
        ];
        row.extend(ClassFilter::EVERY.iter().map(|k| opt(a.mean_avg_cal.get(k).copied())));
        row.extend(a.mean_tweet_stats.iter().map(|v| v.to_string()));
        row.push(u8::from(d.is_some()).to_string());
        row.push(u8::from(o.is_some()).to_string());
        row.push(o.map(|o| o.region_id.clone()).unwrap_or_default());
        row.push(d.map(|d| d.region_id.clone()).unwrap_or_default());
        let weight = |m: &BTreeMap<String, f64>, k: &str| m.get(k).copied().unwrap_or(0.0).to_string();
        row.extend(cols.foods.iter().map(|f| weight(&a.food_weights, f)));
        row.extend(cols.categories.iter().map(|c| weight(&a.category_weights, c)));
        row.extend(cols.hashtags.iter().map(|h| weight(&a.hashtag_weights, h)));
        wtr.write_record(&row).map_err(werr)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Reads a table written by [`write_aggregates_csv`].
pub fn read_aggregates_csv(path: &Path) -> Result<(Vec<RegionAggregate>, AggregateColumns)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < FIXED_HEADER.len() || header[..FIXED_HEADER.len()] != FIXED_HEADER {
        return Err(Error::parse(path, "not an aggregate table (unexpected header)"));
    }
    let mut cols = AggregateColumns::default();
    for h in &header[FIXED_HEADER.len()..] {
        if let Some(f) = h.strip_prefix("food:") {
            cols.foods.push(f.to_string());
        } else if let Some(c) = h.strip_prefix("category:") {
            cols.categories.push(c.to_string());
        } else if let Some(t) = h.strip_prefix("hashtag:") {
            cols.hashtags.push(t.to_string());
        } else {
            return Err(Error::parse(path, format!("unknown column {h}")));
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = i + 2;
        let bad = |what: &str| Error::parse(path, format!("line {line}: bad {what}"));
        let num = |j: usize| -> Result<Option<f64>> {
            let s = rec.get(j).unwrap_or("");
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| bad(&header[j]))
            }
        };
        let req = |j: usize| -> Result<f64> { num(j)?.ok_or_else(|| bad(&header[j])) };
        let level = match rec.get(1) {
            Some("county") => RegionLevel::County,
            Some("state") => RegionLevel::State,
            _ => return Err(bad("level")),
        };
        let region_id = rec.get(0).unwrap_or("").to_string();
        let demographics = if rec.get(20) == Some("1") {
            Some(CensusRecord {
                region_id: rec.get(23).unwrap_or("").to_string(),
                under_18: req(6)?,
                over_65: req(7)?,
                female: req(8)?,
                afro_hispanic: req(9)?,
                median_income: req(10)?,
                bachelor_rate: req(11)?,
            })
        } else {
            None
        };
        let outcome = if rec.get(21) == Some("1") {
            Some(HealthOutcome {
                region_id: rec.get(22).unwrap_or("").to_string(),
                obesity_rate: req(4)?,
                diabetes_rate: req(5)?,
            })
        } else {
            None
        };
        let mut mean_avg_cal = BTreeMap::new();
        for (k, filter) in ClassFilter::EVERY.iter().enumerate() {
            if let Some(v) = num(12 + k)? {
                mean_avg_cal.insert(*filter, v);
            }
        }
        let weights = |names: &[String], offset: usize| -> Result<BTreeMap<String, f64>> {
            let mut m = BTreeMap::new();
            for (k, name) in names.iter().enumerate() {
                let v = req(offset + k)?;
                if v != 0.0 {
                    m.insert(name.clone(), v);
                }
            }
            Ok(m)
        };
        let base = FIXED_HEADER.len();
        let food_weights = weights(&cols.foods, base)?;
        let category_weights = weights(&cols.categories, base + cols.foods.len())?;
        let hashtag_weights = weights(&cols.hashtags, base + cols.foods.len() + cols.categories.len())?;
        out.push(RegionAggregate {
            region_id,
            level,
            state_id: rec.get(2).unwrap_or("").to_string(),
            n_users: rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("n_users"))?,
            food_weights,
            category_weights,
            hashtag_weights,
            mean_avg_cal,
            mean_tweet_stats: [req(16)?, req(17)?, req(18)?, req(19)?],
            demographics,
            outcome,
        });
    }
    Ok((out, cols))
}
