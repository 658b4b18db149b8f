//! Data model and file ingestion.
//!
//! Tweets and profiles are line-delimited JSON; census, health outcomes,
//! geography, name tables and metro zips are CSV with a header row. Every
//! region or zip code is a zero-padded string.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LineReject, Result};
use crate::lexicon::tokenize;

/// Default ceiling on the fraction of malformed lines per file.
pub const DEFAULT_MAX_REJECT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub user_id: String,
    pub timestamp: i64,
    pub text: String,
    pub zip: Option<String>,
    pub is_reply: bool,
    pub is_retweet: bool,
    pub hashtags: Vec<String>,
    pub mentions: Vec<String>,
}

impl TweetRecord {
    /// Builds a record, deriving hashtags and mentions from the text.
    pub fn new(
        tweet_id: impl Into<String>,
        user_id: impl Into<String>,
        timestamp: i64,
        text: impl Into<String>,
        zip: Option<String>,
    ) -> Self {
        let text = text.into();
        TweetRecord {
            tweet_id: tweet_id.into(),
            user_id: user_id.into(),
            timestamp,
            hashtags: extract_hashtags(&text),
            mentions: extract_mentions(&text),
            text,
            zip,
            is_reply: false,
            is_retweet: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "female")]
    Female,
    #[serde(rename = "male")]
    Male,
    #[default]
    #[serde(rename = "none")]
    Unknown,
}

impl Gender {
    pub fn is_known(self) -> bool {
        self != Gender::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unknown => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub screen_name: String,
    #[serde(default)]
    pub first_name: Option<String>,
    #[serde(default)]
    pub profile_text: String,
    #[serde(default)]
    pub follower_ids: BTreeSet<String>,
    #[serde(default)]
    pub friend_ids: BTreeSet<String>,
    #[serde(default)]
    pub home_zip: Option<String>,
    #[serde(default)]
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRecord {
    pub region_id: String,
    pub under_18: f64,
    pub over_65: f64,
    pub female: f64,
    pub afro_hispanic: f64,
    pub median_income: f64,
    pub bachelor_rate: f64,
}

impl CensusRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        let fractions = [
            ("under_18", self.under_18),
            ("over_65", self.over_65),
            ("female", self.female),
            ("afro_hispanic", self.afro_hispanic),
            ("bachelor_rate", self.bachelor_rate),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0,1]"));
            }
        }
        if !(self.median_income > 0.0 && self.median_income.is_finite()) {
            return Err(format!("median_income = {} must be > 0", self.median_income));
        }
        check_code("region_id", &self.region_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthOutcome {
    pub region_id: String,
    pub obesity_rate: f64,
    pub diabetes_rate: f64,
}

impl HealthOutcome {
    fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [("obesity_rate", self.obesity_rate), ("diabetes_rate", self.diabetes_rate)] {
            if !(0.0..=100.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0,100]"));
            }
        }
        check_code("region_id", &self.region_id)
    }
}

/// Zip, county and metro-area lookups.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeoMapping {
    zip_county: BTreeMap<String, String>,
    county_state: BTreeMap<String, String>,
    metro_zips: BTreeSet<String>,
}

impl GeoMapping {
    pub fn new(
        zip_county: BTreeMap<String, String>,
        county_state: BTreeMap<String, String>,
        metro_zips: BTreeSet<String>,
    ) -> Result<Self> {
        if let Some((zip, county)) =
            zip_county.iter().find(|(_, county)| !county_state.contains_key(*county))
        {
            return Err(Error::InvalidInput(format!(
                "zip {zip} maps to county {county}, which has no state"
            )));
        }
        Ok(GeoMapping { zip_county, county_state, metro_zips })
    }

    pub fn load(zip_county: &Path, county_state: &Path, metro_zips: &Path) -> Result<Self> {
        let zc: Vec<ZipCountyRow> = read_csv_strict(zip_county)?;
        let cs: Vec<CountyStateRow> = read_csv_strict(county_state)?;
        let mz: Vec<MetroZipRow> = read_csv_strict(metro_zips)?;
        Self::new(
            zc.into_iter().map(|r| (r.zip, r.county)).collect(),
            cs.into_iter().map(|r| (r.county, r.state)).collect(),
            mz.into_iter().map(|r| r.zip).collect(),
        )
    }

    pub fn county_of(&self, zip: &str) -> Option<&str> {
        self.zip_county.get(zip).map(String::as_str)
    }

    pub fn state_of_county(&self, county: &str) -> Option<&str> {
        self.county_state.get(county).map(String::as_str)
    }

    pub fn state_of_zip(&self, zip: &str) -> Option<&str> {
        self.county_of(zip).and_then(|c| self.state_of_county(c))
    }

    pub fn is_metro(&self, zip: &str) -> bool {
        self.metro_zips.contains(zip)
    }

    pub fn zip_county(&self) -> &BTreeMap<String, String> {
        &self.zip_county
    }

    pub fn county_state(&self) -> &BTreeMap<String, String> {
        &self.county_state
    }

    pub fn metro_zips(&self) -> &BTreeSet<String> {
        &self.metro_zips
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ZipCountyRow {
    zip: String,
    county: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountyStateRow {
    county: String,
    state: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetroZipRow {
    zip: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct NameGenderRow {
    name: String,
    gender: String,
}

/// Lowercase first name to gender.
pub type NameTable = BTreeMap<String, Gender>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    Tweets,
    Profiles,
    Census,
    Health,
    ZipCounty,
    CountyState,
    MetroZips,
    NameGender,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Collection {
    Tweets(Vec<TweetRecord>),
    Profiles(Vec<UserProfile>),
    Census(BTreeMap<String, CensusRecord>),
    Health(BTreeMap<String, HealthOutcome>),
    ZipCounty(BTreeMap<String, String>),
    CountyState(BTreeMap<String, String>),
    MetroZips(BTreeSet<String>),
    NameGender(NameTable),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub max_reject_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { max_reject_fraction: DEFAULT_MAX_REJECT_FRACTION }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub files: usize,
    pub lines: usize,
    pub accepted: usize,
    pub rejects: Vec<LineReject>,
    pub warnings: Vec<String>,
}

impl IngestReport {
    fn absorb(&mut self, other: IngestReport) {
        self.files += other.files;
        self.lines += other.lines;
        self.accepted += other.accepted;
        self.rejects.extend(other.rejects);
        self.warnings.extend(other.warnings);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub records: T,
    pub report: IngestReport,
}

/// Reads every file of one schema into a validated collection.
pub fn ingest_corpus(
    paths: &[PathBuf],
    schema: Schema,
    opts: &IngestOptions,
) -> Result<Ingested<Collection>> {
    fn wrap<T>(i: Ingested<T>, f: impl FnOnce(T) -> Collection) -> Ingested<Collection> {
        Ingested { records: f(i.records), report: i.report }
    }
    Ok(match schema {
        Schema::Tweets => wrap(ingest_tweets(paths, opts)?, Collection::Tweets),
        Schema::Profiles => wrap(ingest_profiles(paths, opts)?, Collection::Profiles),
        Schema::Census => wrap(
            ingest_keyed_csv(paths, opts, |r: CensusRecord| {
                r.validate()?;
                Ok((r.region_id.clone(), r))
            })?,
            Collection::Census,
        ),
        Schema::Health => wrap(
            ingest_keyed_csv(paths, opts, |r: HealthOutcome| {
                r.validate()?;
                Ok((r.region_id.clone(), r))
            })?,
            Collection::Health,
        ),
        Schema::ZipCounty => wrap(
            ingest_keyed_csv(paths, opts, |r: ZipCountyRow| {
                check_zip(&r.zip)?;
                check_code("county", &r.county)?;
                Ok((r.zip, r.county))
            })?,
            Collection::ZipCounty,
        ),
        Schema::CountyState => wrap(
            ingest_keyed_csv(paths, opts, |r: CountyStateRow| {
                check_code("county", &r.county)?;
                check_code("state", &r.state)?;
                Ok((r.county, r.state))
            })?,
            Collection::CountyState,
        ),
        Schema::MetroZips => {
            let i = ingest_keyed_csv(paths, opts, |r: MetroZipRow| {
                check_zip(&r.zip)?;
                Ok((r.zip, ()))
            })?;
            Ingested {
                records: Collection::MetroZips(i.records.into_keys().collect()),
                report: i.report,
            }
        }
        Schema::NameGender => wrap(
            ingest_keyed_csv(paths, opts, |r: NameGenderRow| {
                let gender = match r.gender.trim().to_ascii_lowercase().as_str() {
                    "female" | "f" => Gender::Female,
                    "male" | "m" => Gender::Male,
                    other => return Err(format!("gender {other:?} is not female/male")),
                };
                Ok((r.name.trim().to_lowercase(), gender))
            })?,
            Collection::NameGender,
        ),
    })
}

#[derive(Debug, Deserialize)]
struct RawTweet {
    tweet_id: String,
    user_id: String,
    timestamp: i64,
    text: String,
    #[serde(default)]
    zip: Option<String>,
    #[serde(default)]
    is_reply: bool,
    #[serde(default)]
    is_retweet: bool,
    #[serde(default)]
    hashtags: Option<Vec<String>>,
    #[serde(default)]
    mentions: Option<Vec<String>>,
}

fn validate_tweet(raw: RawTweet) -> std::result::Result<TweetRecord, String> {
    check_code("tweet_id", &raw.tweet_id)?;
    check_code("user_id", &raw.user_id)?;
    if let Some(zip) = &raw.zip {
        check_zip(zip)?;
    }
    let hashtags = extract_hashtags(&raw.text);
    let mentions = extract_mentions(&raw.text);
    if let Some(stored) = raw.hashtags {
        if stored != hashtags {
            return Err(format!("hashtags {stored:?} do not match text ({hashtags:?})"));
        }
    }
    if let Some(stored) = raw.mentions {
        if stored != mentions {
            return Err(format!("mentions {stored:?} do not match text ({mentions:?})"));
        }
    }
    Ok(TweetRecord {
        tweet_id: raw.tweet_id,
        user_id: raw.user_id,
        timestamp: raw.timestamp,
        text: raw.text,
        zip: raw.zip,
        is_reply: raw.is_reply,
        is_retweet: raw.is_retweet,
        hashtags,
        mentions,
    })
}

/// Tweets sorted by `tweet_id`; a repeated id anywhere in `paths` is an error.
pub fn ingest_tweets(paths: &[PathBuf], opts: &IngestOptions) -> Result<Ingested<Vec<TweetRecord>>> {
    let mut out = ingest_jsonl(paths, opts, validate_tweet)?;
    out.records.par_sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));
    if let Some(w) = out.records.windows(2).find(|w| w[0].tweet_id == w[1].tweet_id) {
        return Err(Error::DuplicateId { kind: "tweet_id", id: w[0].tweet_id.clone() });
    }
    Ok(out)
}

/// Profiles sorted by `user_id`. Self-references in follower/friend sets are dropped.
pub fn ingest_profiles(
    paths: &[PathBuf],
    opts: &IngestOptions,
) -> Result<Ingested<Vec<UserProfile>>> {
    let mut out = ingest_jsonl(paths, opts, |mut p: UserProfile| {
        check_code("user_id", &p.user_id)?;
        if let Some(zip) = &p.home_zip {
            check_zip(zip)?;
        }
        p.follower_ids.remove(&p.user_id);
        p.friend_ids.remove(&p.user_id);
        Ok(p)
    })?;
    out.records.par_sort_by(|a, b| a.user_id.cmp(&b.user_id));
    if let Some(w) = out.records.windows(2).find(|w| w[0].user_id == w[1].user_id) {
        return Err(Error::DuplicateId { kind: "user_id", id: w[0].user_id.clone() });
    }
    Ok(out)
}

fn ingest_jsonl<R, T>(
    paths: &[PathBuf],
    opts: &IngestOptions,
    validate: impl Fn(R) -> std::result::Result<T, String> + Sync,
) -> Result<Ingested<Vec<T>>>
where
    R: DeserializeOwned,
    T: Send,
{
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for path in paths {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<(usize, &str)> = body
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l))
            .collect();
        let parsed: Vec<std::result::Result<T, LineReject>> = lines
            .par_iter()
            .map(|&(line, text)| {
                serde_json::from_str::<R>(text)
                    .map_err(|e| e.to_string())
                    .and_then(&validate)
                    .map_err(|reason| LineReject { path: path.clone(), line, reason })
            })
            .collect();
        let mut file_report = IngestReport { files: 1, lines: lines.len(), ..Default::default() };
        for item in parsed {
            match item {
                Ok(r) => records.push(r),
                Err(rej) => file_report.rejects.push(rej),
            }
        }
        file_report.accepted = file_report.lines - file_report.rejects.len();
        check_reject_rate(path, &file_report, opts)?;
        report.absorb(file_report);
    }
    Ok(Ingested { records, report })
}

fn ingest_keyed_csv<R, V>(
    paths: &[PathBuf],
    opts: &IngestOptions,
    validate: impl Fn(R) -> std::result::Result<(String, V), String>,
) -> Result<Ingested<BTreeMap<String, V>>>
where
    R: DeserializeOwned,
{
    let mut records = BTreeMap::new();
    let mut report = IngestReport::default();
    for path in paths {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_open_error(path, e))?;
        rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?;
        let mut file_report = IngestReport { files: 1, ..Default::default() };
        for row in rdr.deserialize::<R>() {
            file_report.lines += 1;
            let line = match &row {
                Ok(_) => file_report.lines + 1,
                Err(e) => e.position().map(|p| p.line() as usize).unwrap_or(file_report.lines + 1),
            };
            match row.map_err(|e| e.to_string()).and_then(&validate) {
                Ok((key, value)) => {
                    if records.insert(key.clone(), value).is_some() {
                        return Err(Error::DuplicateId { kind: "key", id: key });
                    }
                }
                Err(reason) => {
                    file_report.rejects.push(LineReject { path: path.clone(), line, reason })
                }
            }
        }
        file_report.accepted = file_report.lines - file_report.rejects.len();
        check_reject_rate(path, &file_report, opts)?;
        report.absorb(file_report);
    }
    Ok(Ingested { records, report })
}

fn check_reject_rate(path: &Path, report: &IngestReport, opts: &IngestOptions) -> Result<()> {
    let rejected = report.rejects.len();
    if report.lines > 0 && rejected as f64 > opts.max_reject_fraction * report.lines as f64 {
        return Err(Error::TooManyRejects {
            path: path.to_path_buf(),
            rejected,
            total: report.lines,
            limit_pct: opts.max_reject_fraction * 100.0,
            rejects: report.rejects.clone(),
        });
    }
    for r in &report.rejects {
        warn!("{}:{}: rejected: {}", r.path.display(), r.line, r.reason);
    }
    Ok(())
}

fn csv_open_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

/// Reads a CSV where any bad row is a hard error.
pub(crate) fn read_csv_strict<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::parse(path, format!("row {}: {e}", i + 2))))
        .collect()
}

pub fn load_census(path: &Path, opts: &IngestOptions) -> Result<BTreeMap<String, CensusRecord>> {
    match ingest_corpus(&[path.to_path_buf()], Schema::Census, opts)?.records {
        Collection::Census(c) => Ok(c),
        _ => unreachable!(),
    }
}

pub fn load_health(path: &Path, opts: &IngestOptions) -> Result<BTreeMap<String, HealthOutcome>> {
    match ingest_corpus(&[path.to_path_buf()], Schema::Health, opts)?.records {
        Collection::Health(h) => Ok(h),
        _ => unreachable!(),
    }
}

pub fn load_name_table(path: &Path, opts: &IngestOptions) -> Result<NameTable> {
    match ingest_corpus(&[path.to_path_buf()], Schema::NameGender, opts)?.records {
        Collection::NameGender(t) => Ok(t),
        _ => unreachable!(),
    }
}

fn check_zip(zip: &str) -> std::result::Result<(), String> {
    if zip.len() == 5 && zip.bytes().all(|b| b.is_ascii_digit()) {
        Ok(())
    } else {
        Err(format!("zip {zip:?} is not a 5-digit code"))
    }
}

fn check_code(field: &str, value: &str) -> std::result::Result<(), String> {
    if value.trim().is_empty() {
        Err(format!("{field} is empty"))
    } else {
        Ok(())
    }
}

fn tagged_tokens(text: &str, sigil: char) -> Vec<String> {
    let mut seen = BTreeSet::new();
    tokenize(text)
        .into_iter()
        .filter_map(|t| t.strip_prefix(sigil).map(str::to_string))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Lowercase hashtags without `#`, in order of first appearance.
pub fn extract_hashtags(text: &str) -> Vec<String> {
    tagged_tokens(text, '#')
}

/// Lowercase mentioned user ids without `@`, in order of first appearance.
pub fn extract_mentions(text: &str) -> Vec<String> {
    tagged_tokens(text, '@')
}

/// Groups tweets by author, keeping input order within each user.
pub fn tweets_by_user(tweets: &[TweetRecord]) -> BTreeMap<&str, Vec<&TweetRecord>> {
    let mut by_user: BTreeMap<&str, Vec<&TweetRecord>> = BTreeMap::new();
    for t in tweets {
        by_user.entry(t.user_id.as_str()).or_default().push(t);
    }
    by_user
}

/// Most frequent zip among each user's geo-tagged tweets.
///
/// Ties go to the lexicographically smallest zip. Users without any
/// geo-tagged tweet are absent from the result.
pub fn assign_home_zip(tweets: &[TweetRecord]) -> BTreeMap<String, String> {
    let mut counts: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for t in tweets {
        if let Some(zip) = &t.zip {
            *counts.entry(&t.user_id).or_default().entry(zip).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter_map(|(user, zips)| {
            let mut best: Option<(&str, usize)> = None;
            for (zip, n) in zips {
                if best.is_none_or(|(_, b)| n > b) {
                    best = Some((zip, n));
                }
            }
            best.map(|(zip, _)| (user.to_string(), zip.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenderReport {
    pub female: usize,
    pub male: usize,
    pub none: usize,
}

impl GenderReport {
    pub fn total(&self) -> usize {
        self.female + self.male + self.none
    }

    /// Fraction of profiles that received a gender.
    pub fn coverage(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.female + self.male) as f64 / self.total() as f64
        }
    }

    pub fn proportions(&self) -> [(Gender, f64); 3] {
        let n = self.total().max(1) as f64;
        [
            (Gender::Female, self.female as f64 / n),
            (Gender::Male, self.male as f64 / n),
            (Gender::Unknown, self.none as f64 / n),
        ]
    }
}

/// Lowercased, punctuation-trimmed first token of the display name.
///
/// The display name is `first_name` when present, else `screen_name`.
pub fn first_name_key(profile: &UserProfile) -> Option<String> {
    let display = profile.first_name.as_deref().unwrap_or(&profile.screen_name);
    let first = display.split_whitespace().next()?;
    let key = first.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase();
    (!key.is_empty()).then_some(key)
}

pub fn assign_gender(profiles: &mut [UserProfile], table: &NameTable) -> GenderReport {
    if table.is_empty() {
        warn!("name table is empty; every profile gets gender none");
    }
    let mut report = GenderReport { female: 0, male: 0, none: 0 };
    for p in profiles.iter_mut() {
        p.gender = first_name_key(p).and_then(|k| table.get(&k).copied()).unwrap_or_default();
        match p.gender {
            Gender::Female => report.female += 1,
            Gender::Male => report.male += 1,
            Gender::Unknown => report.none += 1,
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Urbanity {
    Urban,
    Rural,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrbanLabels {
    pub labels: BTreeMap<String, Urbanity>,
    /// Users whose home zip is missing from the zip→county table.
    pub unmapped: Vec<String>,
}

impl UrbanLabels {
    pub fn urban_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        let urban = self.labels.values().filter(|&&u| u == Urbanity::Urban).count();
        urban as f64 / self.labels.len() as f64
    }
}

pub fn label_urban(user_zip: &BTreeMap<String, String>, geo: &GeoMapping) -> UrbanLabels {
    let mut unmapped = Vec::new();
    let labels = user_zip
        .iter()
        .map(|(user, zip)| {
            if geo.county_of(zip).is_none() {
                unmapped.push(user.clone());
            }
            let label = if geo.is_metro(zip) { Urbanity::Urban } else { Urbanity::Rural };
            (user.clone(), label)
        })
        .collect();
    if !unmapped.is_empty() {
        warn!("{} users have home zips outside the zip→county table", unmapped.len());
    }
    UrbanLabels { labels, unmapped }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_open_error(path, e))?;
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn write_geo(geo: &GeoMapping, zip_county: &Path, county_state: &Path, metro: &Path) -> Result<()> {
    write_csv(
        zip_county,
        geo.zip_county.iter().map(|(zip, county)| ZipCountyRow { zip: zip.clone(), county: county.clone() }),
    )?;
    write_csv(
        county_state,
        geo.county_state
            .iter()
            .map(|(county, state)| CountyStateRow { county: county.clone(), state: state.clone() }),
    )?;
    write_csv(metro, geo.metro_zips.iter().map(|zip| MetroZipRow { zip: zip.clone() }))
}

pub fn write_name_table(path: &Path, table: &NameTable) -> Result<()> {
    write_csv(
        path,
        table
            .iter()
            .map(|(name, g)| NameGenderRow { name: name.clone(), gender: g.as_str().to_string() }),
    )
}
