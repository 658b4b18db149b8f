//! Declarative pipeline configuration and the stages behind each subcommand.
//!
//! Stages communicate only through files in the output directory. Every
//! stage run writes `manifest_<stage>.json` with the seed, a hash of the
//! resolved configuration and a digest of each output file.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, Gender, IngestOptions, TweetRecord, UserProfile, Urbanity};
use crate::error::{Error, Result};
use crate::features::{
    self, AggregateColumns, CategoryLexicon, FeatureContext, ProminenceTable, RegionAggregate, RegionLevel,
    RegionTables, UserFeatures,
};
use crate::lexicon::{self, ClassFilter, FoodLexicon};
use crate::modeling::{self, CvOptions, ModelKind, ModelSpec, Target};
use crate::network::{self, ActivationOptions, GraphKind, SocialGraph};
use crate::stats;
use crate::textfilter::{self, FilterTarget, KeywordFilter};

/// Output file names, relative to the output directory.
pub mod out {
    pub const TWEETS: &str = "ingested_tweets.jsonl";
    pub const PROFILES: &str = "ingested_profiles.jsonl";
    pub const INGEST_REPORT: &str = "ingest_report.json";
    pub const MATCHES: &str = "matches.csv";
    pub const USERS: &str = "users.jsonl";
    pub const COUNTY_AGGREGATES: &str = "county_aggregates.csv";
    pub const STATE_AGGREGATES: &str = "state_aggregates.csv";
    pub const FEATURES_REPORT: &str = "features_report.json";
    pub const CORRELATE: &str = "correlate.csv";
    pub const FIT: &str = "fit.csv";
    pub const MODEL_DIR: &str = "models";
    pub const SCORES: &str = "scores.csv";
    pub const INTERESTS: &str = "interests.csv";
    pub const ACTIVATION: &str = "activation.csv";
    pub const ACTIVATION_SUMMARY: &str = "activation_summary.json";
    pub const CLIQUENESS: &str = "cliqueness.csv";
    pub const DISTINGUISH: &str = "distinguish.csv";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterInput {
    pub path: PathBuf,
    pub target: FilterTarget,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub tweets: Vec<PathBuf>,
    pub profiles: Vec<PathBuf>,
    pub census: Option<PathBuf>,
    pub health: Option<PathBuf>,
    pub zip_county: Option<PathBuf>,
    pub county_state: Option<PathBuf>,
    pub metro_zips: Option<PathBuf>,
    pub names: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub prominence: Option<PathBuf>,
    /// `text,label` rows; when set, tweets the classifier calls non-food carry no matches.
    pub nb_training: Option<PathBuf>,
    pub filters: Vec<FilterInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_users: usize,
    pub percentile: f64,
    pub bins: Vec<f64>,
    pub lambda: f64,
    pub lambda_grid: Option<Vec<f64>>,
    pub k: usize,
    pub bootstrap_iters: usize,
    pub null_shuffles: usize,
    pub max_reject_fraction: f64,
    pub hashtag_columns: usize,
    pub exclude_replies_retweets: bool,
    pub top_k: usize,
    pub nb_alpha: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_users: features::DEFAULT_MIN_USERS,
            percentile: network::DEFAULT_PERCENTILE,
            bins: network::DEFAULT_JACCARD_BINS.to_vec(),
            lambda: modeling::DEFAULT_LAMBDA,
            lambda_grid: None,
            k: modeling::DEFAULT_FOLDS,
            bootstrap_iters: stats::DEFAULT_BOOTSTRAP_ITERS,
            null_shuffles: network::DEFAULT_NULL_SHUFFLES,
            max_reject_fraction: corpus::DEFAULT_MAX_REJECT_FRACTION,
            hashtag_columns: features::DEFAULT_HASHTAG_COLUMNS,
            exclude_replies_retweets: false,
            top_k: lexicon::DEFAULT_TOP_K,
            nb_alpha: 1.0,
        }
    }
}

/// Precomputed graph inputs. When `edges` is set the network stages use
/// these files instead of building graphs from the ingested corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkInputs {
    pub kind: GraphKind,
    pub edges: Option<PathBuf>,
    pub friends: Option<PathBuf>,
    /// `user_id,score`
    pub scores: Option<PathBuf>,
    /// `user_id,state_id`
    pub states: Option<PathBuf>,
    /// `user_id,fraction`
    pub fractions: Option<PathBuf>,
}

impl Default for NetworkInputs {
    fn default() -> Self {
        NetworkInputs { kind: GraphKind::Friendship, edges: None, friends: None, scores: None, states: None, fractions: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub target: Target,
    /// Food classes kept by `match` and `distinguish`.
    pub class_filter: ClassFilter,
    pub inputs: Inputs,
    pub thresholds: Thresholds,
    pub network: NetworkInputs,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            output_dir: None,
            target: Target::Obesity,
            class_filter: ClassFilter::All,
            inputs: Inputs::default(),
            thresholds: Thresholds::default(),
            network: NetworkInputs::default(),
        }
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty key in {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("{key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses a command-line value as TOML, falling back to a bare string.
pub fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl PipelineConfig {
    /// Reads a TOML config, applies `key=value` overrides (dotted keys),
    /// and resolves relative paths against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let t: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                (t, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for (k, v) in overrides {
            set_dotted(&mut table, k, v.clone())?;
        }
        let mut cfg: PipelineConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !base.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        i.tweets.iter_mut().for_each(fix);
        i.profiles.iter_mut().for_each(fix);
        for p in [
            &mut i.census,
            &mut i.health,
            &mut i.zip_county,
            &mut i.county_state,
            &mut i.metro_zips,
            &mut i.names,
            &mut i.lexicon,
            &mut i.categories,
            &mut i.prominence,
            &mut i.nb_training,
            &mut self.output_dir,
            &mut self.network.edges,
            &mut self.network.friends,
            &mut self.network.scores,
            &mut self.network.states,
            &mut self.network.fractions,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        i.filters.iter_mut().for_each(|f| fix(&mut f.path));
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("seed is mandatory (config `seed` or --seed)".into()))
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output_dir.as_deref().ok_or_else(|| Error::Config("output_dir is not set".into()))
    }

    /// Checks the settings every stage relies on.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.output_dir()?;
        let t = &self.thresholds;
        network::validate_bins(&t.bins)?;
        if !(0.0..=100.0).contains(&t.percentile) {
            return Err(Error::Config(format!("percentile {} outside [0,100]", t.percentile)));
        }
        if !(t.lambda >= 0.0) || t.lambda_grid.as_ref().is_some_and(|g| g.is_empty() || g.iter().any(|l| !(*l >= 0.0))) {
            return Err(Error::Config("lambda values must be >= 0 and the grid non-empty".into()));
        }
        if t.k < 2 {
            return Err(Error::Config(format!("k = {} folds; need at least 2", t.k)));
        }
        if t.bootstrap_iters == 0 || t.null_shuffles == 0 {
            return Err(Error::Config("bootstrap_iters and null_shuffles must be positive".into()));
        }
        if !(0.0..=1.0).contains(&t.max_reject_fraction) {
            return Err(Error::Config("max_reject_fraction must lie in [0,1]".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of the configuration, output directory excluded.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        Ok(hex(&Sha256::digest(serde_json::to_vec(&c)?)))
    }

    fn require<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        let p = p.as_deref().ok_or_else(|| Error::Config(format!("{key} is not set")))?;
        if !p.exists() {
            return Err(Error::Config(format!("{key} = {} does not exist", p.display())));
        }
        Ok(p)
    }

    fn require_list<'a>(&self, ps: &'a [PathBuf], key: &str) -> Result<&'a [PathBuf]> {
        if ps.is_empty() {
            return Err(Error::Config(format!("{key} lists no files")));
        }
        if let Some(p) = ps.iter().find(|p| !p.exists()) {
            return Err(Error::Config(format!("{key} entry {} does not exist", p.display())));
        }
        Ok(ps)
    }

    fn ingest_options(&self) -> IngestOptions {
        IngestOptions { max_reject_fraction: self.thresholds.max_reject_fraction }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Match,
    Features,
    Correlate,
    Fit,
    Score,
    Interests,
    Activation,
    Cliqueness,
    Distinguish,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Match => "match",
            Stage::Features => "features",
            Stage::Correlate => "correlate",
            Stage::Fit => "fit",
            Stage::Score => "score",
            Stage::Interests => "interests",
            Stage::Activation => "network_activation",
            Stage::Cliqueness => "network_cliqueness",
            Stage::Distinguish => "distinguish",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Output file (relative to the output directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

/// Writes `manifest_<name>.json` for files already in `dir`.
///
/// The manifest holds the full configuration, so a run can be repeated
/// from it alone; no timestamps or host details are recorded.
pub fn write_manifest<C: Serialize>(dir: &Path, name: &str, seed: u64, config: &C, outputs: &[String]) -> Result<PathBuf> {
    let config = serde_json::to_value(config)?;
    let manifest = Manifest {
        stage: name.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config_hash: hex(&Sha256::digest(serde_json::to_vec(&config)?)),
        config,
        outputs: outputs.iter().map(|f| Ok((f.clone(), file_digest(&dir.join(f))?))).collect::<Result<_>>()?,
    };
    let path = dir.join(format!("manifest_{name}.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Input produced by an earlier stage; a missing file is a configuration error.
fn stage_input(dir: &Path, name: &str, producer: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::Config(format!("{} not found; run `{producer}` first", p.display())))
    }
}

/// Runs one stage and writes its manifest. Returns the output file names.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let dir = cfg.output_dir()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    info!("running {}", stage.name());
    let outputs = match stage {
        Stage::Ingest => run_ingest(cfg, dir)?,
        Stage::Match => run_match(cfg, dir)?,
        Stage::Features => run_features(cfg, dir)?,
        Stage::Correlate => run_correlate(dir)?,
        Stage::Fit => run_fit(cfg, dir)?,
        Stage::Score => run_score(cfg, dir)?,
        Stage::Interests => run_interests(cfg, dir)?,
        Stage::Activation => run_activation(cfg, dir)?,
        Stage::Cliqueness => run_cliqueness(cfg, dir)?,
        Stage::Distinguish => run_distinguish(cfg, dir)?,
    };
    let mut recorded = cfg.clone();
    recorded.output_dir = None;
    write_manifest(dir, stage.name(), cfg.seed()?, &recorded, &outputs)?;
    Ok(outputs)
}

fn load_geo(cfg: &PipelineConfig) -> Result<corpus::GeoMapping> {
    let i = &cfg.inputs;
    corpus::GeoMapping::load(
        cfg.require(&i.zip_county, "inputs.zip_county")?,
        cfg.require(&i.county_state, "inputs.county_state")?,
        cfg.require(&i.metro_zips, "inputs.metro_zips")?,
    )
}

fn load_lexicon(cfg: &PipelineConfig) -> Result<FoodLexicon> {
    FoodLexicon::from_csv_path(cfg.require(&cfg.inputs.lexicon, "inputs.lexicon")?)
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    tweets: &'a corpus::IngestReport,
    profiles: &'a corpus::IngestReport,
    gender: corpus::GenderReport,
    gender_coverage: f64,
    users_with_home_zip: usize,
    unmapped_home_zips: usize,
    urban_fraction: f64,
}

fn run_ingest(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let opts = cfg.ingest_options();
    let tweets = corpus::ingest_tweets(cfg.require_list(&cfg.inputs.tweets, "inputs.tweets")?, &opts)?;
    let mut profiles = corpus::ingest_profiles(cfg.require_list(&cfg.inputs.profiles, "inputs.profiles")?, &opts)?;
    let names = corpus::load_name_table(cfg.require(&cfg.inputs.names, "inputs.names")?, &opts)?;
    let geo = load_geo(cfg)?;
    let gender = corpus::assign_gender(&mut profiles.records, &names);
    let homes = corpus::assign_home_zip(&tweets.records);
    for p in &mut profiles.records {
        p.home_zip = homes.get(&p.user_id).cloned();
    }
    let urban = corpus::label_urban(&homes, &geo);
    corpus::write_jsonl(&dir.join(out::TWEETS), &tweets.records)?;
    corpus::write_jsonl(&dir.join(out::PROFILES), &profiles.records)?;
    write_json(
        &dir.join(out::INGEST_REPORT),
        &IngestSummary {
            tweets: &tweets.report,
            profiles: &profiles.report,
            gender,
            gender_coverage: gender.coverage(),
            users_with_home_zip: homes.len(),
            unmapped_home_zips: urban.unmapped.len(),
            urban_fraction: urban.urban_fraction(),
        },
    )?;
    Ok(vec![out::TWEETS.into(), out::PROFILES.into(), out::INGEST_REPORT.into()])
}

fn ingested(dir: &Path) -> Result<(Vec<TweetRecord>, Vec<UserProfile>)> {
    Ok((
        read_jsonl(&stage_input(dir, out::TWEETS, "ingest")?)?,
        read_jsonl(&stage_input(dir, out::PROFILES, "ingest")?)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub tweet_id: String,
    pub user_id: String,
    pub surface: String,
    pub calories: f64,
    pub class: String,
    pub start: usize,
    pub len: usize,
}

fn run_match(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let tweets: Vec<TweetRecord> = read_jsonl(&stage_input(dir, out::TWEETS, "ingest")?)?;
    let lex = load_lexicon(cfg)?;
    let filter = cfg.class_filter;
    let rows: Vec<Vec<MatchRow>> = tweets
        .par_iter()
        .map(|t| {
            lexicon::match_foods(&t.text, &lex)
                .matches
                .iter()
                .filter(|m| filter.admits(m.entry.class))
                .map(|m| MatchRow {
                    tweet_id: t.tweet_id.clone(),
                    user_id: t.user_id.clone(),
                    surface: m.entry.surface.clone(),
                    calories: m.entry.calories,
                    class: m.entry.class.as_str().to_string(),
                    start: m.start,
                    len: m.len,
                })
                .collect()
        })
        .collect();
    corpus::write_csv(&dir.join(out::MATCHES), rows.into_iter().flatten())?;
    Ok(vec![out::MATCHES.into()])
}

#[derive(Serialize)]
struct FeaturesSummary {
    users: usize,
    skipped: BTreeMap<features::SkipReason, usize>,
    interest_thresholds: BTreeMap<String, f64>,
    counties: usize,
    states: usize,
    hashtag_columns: usize,
}

/// Everything `features` needs besides the ingested corpus.
pub struct FeatureInputs {
    pub lexicon: FoodLexicon,
    pub categories: CategoryLexicon,
    pub filters: Vec<KeywordFilter>,
    pub census: BTreeMap<String, corpus::CensusRecord>,
    pub health: BTreeMap<String, corpus::HealthOutcome>,
    pub geo: corpus::GeoMapping,
    pub prominence: Option<ProminenceTable>,
    pub nb: Option<textfilter::NbModel>,
}

impl FeatureInputs {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let i = &cfg.inputs;
        let opts = cfg.ingest_options();
        let filters =
            i.filters.iter().map(|f| KeywordFilter::from_path(&f.path, f.target)).collect::<Result<Vec<_>>>()?;
        let names: BTreeSet<&str> = filters.iter().map(|f| f.name.as_str()).collect();
        if names.len() != filters.len() {
            return Err(Error::Config("filter file names must be unique".into()));
        }
        let nb = match &i.nb_training {
            Some(p) => Some(textfilter::nb_train(&textfilter::load_training_csv(p)?, cfg.thresholds.nb_alpha)?),
            None => None,
        };
        Ok(FeatureInputs {
            lexicon: load_lexicon(cfg)?,
            categories: CategoryLexicon::from_csv_path(cfg.require(&i.categories, "inputs.categories")?)?,
            filters,
            census: corpus::load_census(cfg.require(&i.census, "inputs.census")?, &opts)?,
            health: corpus::load_health(cfg.require(&i.health, "inputs.health")?, &opts)?,
            geo: load_geo(cfg)?,
            prominence: match &i.prominence {
                Some(_) => Some(ProminenceTable::from_csv_path(cfg.require(&i.prominence, "inputs.prominence")?)?),
                None => None,
            },
            nb,
        })
    }

    pub fn context(&self, exclude_replies_retweets: bool) -> FeatureContext<'_> {
        FeatureContext {
            filters: &self.filters,
            prominence: self.prominence.as_ref(),
            nb_gate: self.nb.as_ref(),
            exclude_replies_retweets,
            ..FeatureContext::new(&self.lexicon, &self.categories, &self.census, &self.geo)
        }
    }
}

fn run_features(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let (tweets, profiles) = ingested(dir)?;
    let inputs = FeatureInputs::load(cfg)?;
    let ctx = inputs.context(cfg.thresholds.exclude_replies_retweets);
    let build = features::build_all_features(&profiles, &tweets, &ctx);
    let tables = RegionTables { census: &inputs.census, health: &inputs.health };
    let min = cfg.thresholds.min_users;
    let counties = features::aggregate_region(&build.users, RegionLevel::County, min, &tables);
    let states = features::aggregate_region(&build.users, RegionLevel::State, min, &tables);
    if counties.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} counties reach {min} users; correlations need at least 3",
            counties.len()
        )));
    }
    let cols = AggregateColumns {
        foods: inputs.lexicon.entries().iter().map(|e| e.surface.clone()).collect(),
        categories: inputs.categories.categories().map(str::to_string).collect(),
        hashtags: features::top_hashtags(&build.users, cfg.thresholds.hashtag_columns),
    };
    corpus::write_jsonl(&dir.join(out::USERS), &build.users)?;
    features::write_aggregates_csv(&dir.join(out::COUNTY_AGGREGATES), &counties, &cols)?;
    features::write_aggregates_csv(&dir.join(out::STATE_AGGREGATES), &states, &cols)?;
    write_json(
        &dir.join(out::FEATURES_REPORT),
        &FeaturesSummary {
            users: build.users.len(),
            skipped: build.skipped,
            interest_thresholds: build.interest_thresholds,
            counties: counties.len(),
            states: states.len(),
            hashtag_columns: cols.hashtags.len(),
        },
    )?;
    Ok(vec![out::USERS.into(), out::COUNTY_AGGREGATES.into(), out::STATE_AGGREGATES.into(), out::FEATURES_REPORT.into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelateRow {
    pub class: String,
    pub target: String,
    pub n: usize,
    pub r: Option<f64>,
    pub rho: Option<f64>,
    pub p_r: Option<f64>,
    pub p_rho: Option<f64>,
}

/// Row label of a class filter in the correlation table.
pub fn class_label(c: ClassFilter) -> &'static str {
    match c {
        ClassFilter::All => "All",
        ClassFilter::Solid => "Food",
        ClassFilter::Beverage => "Beverage",
        ClassFilter::Alcoholic => "Alcoholic",
    }
}

/// State-level correlation of mean caloric value with each outcome.
pub fn correlate_rows(states: &[RegionAggregate]) -> Vec<CorrelateRow> {
    let classes = [ClassFilter::All, ClassFilter::Solid, ClassFilter::Beverage, ClassFilter::Alcoholic];
    let mut rows = Vec::new();
    for class in classes {
        for target in Target::BOTH {
            let (x, y): (Vec<f64>, Vec<f64>) = states
                .iter()
                .filter_map(|s| Some((*s.mean_avg_cal.get(&class)?, target.of(s.outcome.as_ref()?))))
                .unzip();
            let mut row = CorrelateRow {
                class: class_label(class).into(),
                target: target.as_str().into(),
                n: x.len(),
                r: None,
                rho: None,
                p_r: None,
                p_rho: None,
            };
            match stats::correlate(&x, &y) {
                Ok(c) => {
                    row.r = Some(c.r);
                    row.rho = Some(c.rho);
                    row.p_r = Some(c.p_r);
                    row.p_rho = Some(c.p_rho);
                }
                Err(e) => warn!("{} / {target}: {e}", class_label(class)),
            }
            rows.push(row);
        }
    }
    rows
}

fn run_correlate(dir: &Path) -> Result<Vec<String>> {
    let (states, _) = features::read_aggregates_csv(&stage_input(dir, out::STATE_AGGREGATES, "features")?)?;
    corpus::write_csv(&dir.join(out::CORRELATE), correlate_rows(&states))?;
    Ok(vec![out::CORRELATE.into()])
}

fn cv_options(cfg: &PipelineConfig) -> Result<CvOptions> {
    Ok(CvOptions {
        k: cfg.thresholds.k,
        lambda: cfg.thresholds.lambda,
        lambda_grid: cfg.thresholds.lambda_grid.clone(),
        seed: cfg.seed()?,
    })
}

/// Held-out evaluation of one model on county aggregates.
pub fn evaluate_model(
    kind: ModelKind,
    target: Target,
    counties: &[RegionAggregate],
    cols: &AggregateColumns,
    opts: &CvOptions,
) -> Result<modeling::EvalResult> {
    let spec = ModelSpec::new(kind);
    let design = modeling::design_from_regions(counties, &spec.columns(cols)?, target)?;
    modeling::cross_validate(&spec, &design, cols, target.as_str(), opts)
}

fn run_fit(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let (counties, cols) = features::read_aggregates_csv(&stage_input(dir, out::COUNTY_AGGREGATES, "features")?)?;
    let opts = cv_options(cfg)?;
    let jobs: Vec<(ModelKind, Target)> =
        ModelKind::ALL.iter().flat_map(|&k| Target::BOTH.map(|t| (k, t))).collect();
    let results: Vec<Result<(modeling::EvalResult, modeling::RidgeModel)>> = jobs
        .par_iter()
        .map(|&(kind, target)| {
            let eval = evaluate_model(kind, target, &counties, &cols, &opts)?;
            let spec = ModelSpec::new(kind);
            let design = modeling::design_from_regions(&counties, &spec.columns(&cols)?, target)?.sorted_by_row_id();
            Ok((eval, modeling::ridge_fit(&design, cfg.thresholds.lambda)?))
        })
        .collect();
    let model_dir = dir.join(out::MODEL_DIR);
    std::fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
    let k = cfg.thresholds.k;
    let mut wtr = csv::Writer::from_path(dir.join(out::FIT)).map_err(|e| Error::parse(dir.join(out::FIT), e.to_string()))?;
    let mut header = vec!["model".to_string(), "target".into(), "n".into(), "columns".into(), "mean_r".into(), "sem".into()];
    header.extend((0..k).map(|f| format!("r_fold{f}")));
    header.extend((0..k).map(|f| format!("lambda_fold{f}")));
    let csv_err = |e: csv::Error| Error::parse(dir.join(out::FIT), e.to_string());
    wtr.write_record(&header).map_err(csv_err)?;
    let mut outputs = vec![out::FIT.to_string()];
    for ((kind, target), res) in jobs.iter().zip(results) {
        let (eval, model) = res?;
        let mut rec = vec![
            eval.model.clone(),
            eval.target.clone(),
            eval.n_rows.to_string(),
            eval.n_columns.to_string(),
            eval.mean_r.to_string(),
            eval.sem.to_string(),
        ];
        rec.extend(eval.fold_r.iter().map(f64::to_string));
        rec.extend(eval.fold_lambda.iter().map(f64::to_string));
        wtr.write_record(&rec).map_err(csv_err)?;
        let name = format!("{}/{}_{}.json", out::MODEL_DIR, kind.name(), target);
        model.save(&dir.join(&name))?;
        outputs.push(name);
    }
    wtr.flush().map_err(|e| Error::io(dir.join(out::FIT), e))?;
    Ok(outputs)
}

fn read_users(dir: &Path) -> Result<Vec<UserFeatures>> {
    read_jsonl(&stage_input(dir, out::USERS, "features")?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub user_id: String,
    pub county_id: String,
    pub state_id: String,
    pub obesity: f64,
    pub diabetes: f64,
    pub intercept_only: bool,
}

/// User risk scores from a Food model trained on users labelled with their county rate.
pub fn score_rows(
    users: &[UserFeatures],
    health: &BTreeMap<String, corpus::HealthOutcome>,
    foods: &[String],
    lambda: f64,
) -> Result<(Vec<ScoreRow>, Vec<modeling::RidgeModel>)> {
    let cols: Vec<String> = foods.iter().map(|f| format!("food:{f}")).collect();
    let mut per_target = Vec::new();
    let mut models = Vec::new();
    for t in Target::BOTH {
        let design = modeling::design_from_users(users, health, &cols, t)?;
        let model = modeling::ridge_fit(&design, lambda)?;
        per_target.push(modeling::score_users(&model, users)?);
        models.push(model);
    }
    let rows = users
        .iter()
        .zip(per_target[0].iter().zip(&per_target[1]))
        .map(|(u, (ob, db))| ScoreRow {
            user_id: u.user_id.clone(),
            county_id: u.county_id.clone(),
            state_id: u.state_id.clone(),
            obesity: ob.score,
            diabetes: db.score,
            intercept_only: ob.intercept_only,
        })
        .collect();
    Ok((rows, models))
}

fn run_score(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let users = read_users(dir)?;
    let health = corpus::load_health(cfg.require(&cfg.inputs.health, "inputs.health")?, &cfg.ingest_options())?;
    let foods: Vec<String> = load_lexicon(cfg)?.entries().iter().map(|e| e.surface.clone()).collect();
    let (rows, models) = score_rows(&users, &health, &foods, cfg.thresholds.lambda)?;
    corpus::write_csv(&dir.join(out::SCORES), &rows)?;
    let model_dir = dir.join(out::MODEL_DIR);
    std::fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
    let mut outputs = vec![out::SCORES.to_string()];
    for (t, m) in Target::BOTH.iter().zip(models) {
        let name = format!("{}/user_food_{t}.json", out::MODEL_DIR);
        m.save(&dir.join(&name))?;
        outputs.push(name);
    }
    Ok(outputs)
}

fn read_scores(dir: &Path) -> Result<Vec<ScoreRow>> {
    corpus::read_csv_strict(&stage_input(dir, out::SCORES, "score")?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestRow {
    pub factor: String,
    pub kind: String,
    pub target: String,
    pub diff: Option<f64>,
    pub p: Option<f64>,
    pub n_flagged: usize,
    pub n_other: usize,
}

/// Differences in mean predicted rate between users with and without each factor.
pub fn interest_rows(users: &[UserFeatures], scores: &[ScoreRow], filters: &[String], areas: &[String]) -> Vec<InterestRow> {
    let score_of: BTreeMap<&str, &ScoreRow> = scores.iter().map(|s| (s.user_id.as_str(), s)).collect();
    let scored: Vec<(&UserFeatures, &ScoreRow)> =
        users.iter().filter_map(|u| Some((u, *score_of.get(u.user_id.as_str())?))).collect();
    type Flag<'a> = Box<dyn Fn(&UserFeatures) -> Option<bool> + 'a>;
    let mut factors: Vec<(String, &str, Flag)> = Vec::new();
    for f in filters {
        factors.push((f.clone(), "filter", Box::new(move |u: &UserFeatures| Some(u.interests.contains(f)))));
    }
    factors.push(("female".into(), "gender", Box::new(|u: &UserFeatures| u.gender.is_known().then_some(u.gender == Gender::Female))));
    factors.push(("urban".into(), "urbanity", Box::new(|u: &UserFeatures| Some(u.urban == Urbanity::Urban))));
    for a in areas {
        factors.push((a.clone(), "prominence", Box::new(move |u: &UserFeatures| Some(u.prominent_interests.contains(a)))));
    }
    let mut rows = Vec::new();
    for (name, kind, flag) in &factors {
        let with: Vec<(bool, &ScoreRow)> = scored.iter().filter_map(|(u, s)| Some((flag(u)?, *s))).collect();
        let flags: Vec<bool> = with.iter().map(|(f, _)| *f).collect();
        for t in Target::BOTH {
            let values: Vec<f64> =
                with.iter().map(|(_, s)| if t == Target::Obesity { s.obesity } else { s.diabetes }).collect();
            let n_flagged = flags.iter().filter(|f| **f).count();
            let mut row = InterestRow {
                factor: name.clone(),
                kind: kind.to_string(),
                target: t.as_str().into(),
                diff: None,
                p: None,
                n_flagged,
                n_other: flags.len() - n_flagged,
            };
            match stats::factor_difference(&values, &flags) {
                Ok(d) => {
                    row.diff = Some(d.diff);
                    row.p = Some(d.p);
                }
                Err(e) => warn!("factor {name} / {t}: {e}"),
            }
            rows.push(row);
        }
    }
    rows
}

fn run_interests(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let users = read_users(dir)?;
    let scores = read_scores(dir)?;
    let filters: Vec<String> = cfg
        .inputs
        .filters
        .iter()
        .map(|f| KeywordFilter::from_path(&f.path, f.target).map(|k| k.name))
        .collect::<Result<_>>()?;
    let areas: Vec<String> = match &cfg.inputs.prominence {
        Some(_) => ProminenceTable::from_csv_path(cfg.require(&cfg.inputs.prominence, "inputs.prominence")?)?
            .areas()
            .map(str::to_string)
            .collect(),
        None => Vec::new(),
    };
    corpus::write_csv(&dir.join(out::INTERESTS), interest_rows(&users, &scores, &filters, &areas))?;
    Ok(vec![out::INTERESTS.into()])
}

#[derive(Deserialize)]
struct IdValue {
    user_id: String,
    #[serde(alias = "score", alias = "fraction")]
    value: f64,
}

#[derive(Deserialize)]
struct IdState {
    user_id: String,
    state_id: String,
}

fn read_id_values(path: &Path) -> Result<BTreeMap<String, f64>> {
    let rows: Vec<IdValue> = corpus::read_csv_strict(path)?;
    Ok(rows.into_iter().map(|r| (r.user_id, r.value)).collect())
}

/// The subgraph on nodes accepted by `keep`.
pub fn induced_subgraph(g: &SocialGraph, keep: impl Fn(&str) -> bool) -> Result<SocialGraph> {
    let nodes: Vec<String> = g.nodes().iter().filter(|n| keep(n)).cloned().collect();
    let edges: Vec<(String, String)> =
        g.edges().filter(|(a, b)| keep(a) && keep(b)).map(|(a, b)| (a.to_string(), b.to_string())).collect();
    SocialGraph::new(g.kind(), nodes, edges, &BTreeMap::new())
}

/// One analysed graph variant for the activation table.
pub struct ActivationVariant {
    pub graph: String,
    pub variant: String,
    pub curve: network::ActivationCurve,
    pub null: network::NullActivation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRow {
    pub graph: String,
    pub variant: String,
    pub x: usize,
    pub n: usize,
    pub n_active: usize,
    pub p: Option<f64>,
    pub se: Option<f64>,
    pub null_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSummary {
    pub graph: String,
    pub variant: String,
    pub threshold: Option<f64>,
    pub n_nodes: usize,
    pub n_active: usize,
    pub links_used: usize,
    pub null_shuffles: usize,
    pub null_p0_band: Option<(f64, f64)>,
}

fn analyse_variant(
    graph: &str,
    variant: &str,
    g: &SocialGraph,
    scores: &BTreeMap<String, f64>,
    opts: &ActivationOptions<'_>,
    shuffles: usize,
    seed: u64,
) -> Result<ActivationVariant> {
    let scored = induced_subgraph(g, |n| scores.contains_key(n))?;
    if scored.node_count() < g.node_count() {
        warn!("{graph}/{variant}: {} nodes without a score left out", g.node_count() - scored.node_count());
    }
    let curve = network::activation_analysis(&scored, scores, opts)?;
    let null = if scored.node_count() == 0 {
        network::NullActivation { shuffles, seed, mean_p: Vec::new(), p0_band: None }
    } else {
        network::null_activation(&scored, scores, opts, shuffles, seed)?
    };
    Ok(ActivationVariant { graph: graph.into(), variant: variant.into(), curve, null })
}

fn run_activation(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let seed = cfg.seed()?;
    let t = &cfg.thresholds;
    let opts = ActivationOptions { percentile: t.percentile, same_state: None };
    // (graph label, variant, graph)
    let mut graphs: Vec<(String, String, SocialGraph)> = Vec::new();
    let (scores, states): (BTreeMap<String, f64>, Option<BTreeMap<String, String>>);
    if cfg.network.edges.is_some() {
        let n = &cfg.network;
        let g = SocialGraph::from_csv(
            n.kind,
            cfg.require(&n.edges, "network.edges")?,
            cfg.require(&n.friends, "network.friends")?,
        )?;
        scores = read_id_values(cfg.require(&n.scores, "network.scores")?)?;
        states = match &n.states {
            Some(_) => {
                let rows: Vec<IdState> = corpus::read_csv_strict(cfg.require(&n.states, "network.states")?)?;
                Some(rows.into_iter().map(|r| (r.user_id, r.state_id)).collect())
            }
            None => None,
        };
        graphs.push((n.kind.as_str().into(), "base".into(), g));
    } else {
        let (tweets, profiles) = ingested(dir)?;
        let rows = read_scores(dir)?;
        scores = rows
            .iter()
            .map(|r| (r.user_id.clone(), if cfg.target == Target::Obesity { r.obesity } else { r.diabetes }))
            .collect();
        states = Some(rows.iter().map(|r| (r.user_id.clone(), r.state_id.clone())).collect());
        graphs.push(("friendship".into(), "base".into(), network::build_friendship(&profiles)));
        graphs.push(("mention".into(), "base".into(), network::build_mention(&tweets, &profiles)));
        let originals: Vec<TweetRecord> = tweets.into_iter().filter(|t| !t.is_reply && !t.is_retweet).collect();
        graphs.push(("mention".into(), "no_replies_retweets".into(), network::build_mention(&originals, &profiles)));
    }
    let mut jobs: Vec<(usize, bool)> = (0..graphs.len()).map(|i| (i, false)).collect();
    if states.is_some() {
        jobs.extend(graphs.iter().enumerate().filter(|(_, g)| g.1 == "base").map(|(i, _)| (i, true)));
    }
    jobs.sort();
    let variants: Vec<ActivationVariant> = jobs
        .iter()
        .map(|&(i, same_state)| {
            let (label, variant, g) = &graphs[i];
            let opts = ActivationOptions { same_state: if same_state { states.as_ref() } else { None }, ..opts };
            let variant = if same_state { "same_state_removed" } else { variant.as_str() };
            analyse_variant(label, variant, g, &scores, &opts, t.null_shuffles, seed)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for v in &variants {
        for p in &v.curve.points {
            rows.push(ActivationRow {
                graph: v.graph.clone(),
                variant: v.variant.clone(),
                x: p.x,
                n: p.n,
                n_active: p.n_active,
                p: p.p,
                se: p.se,
                null_p: v.null.mean_p.get(p.x).copied().flatten(),
            });
        }
        summary.push(ActivationSummary {
            graph: v.graph.clone(),
            variant: v.variant.clone(),
            threshold: v.curve.threshold,
            n_nodes: v.curve.n_nodes,
            n_active: v.curve.n_active,
            links_used: v.curve.links_used,
            null_shuffles: v.null.shuffles,
            null_p0_band: v.null.p0_band,
        });
    }
    corpus::write_csv(&dir.join(out::ACTIVATION), rows)?;
    write_json(&dir.join(out::ACTIVATION_SUMMARY), &summary)?;
    Ok(vec![out::ACTIVATION.into(), out::ACTIVATION_SUMMARY.into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliquenessRow {
    pub graph: String,
    pub lo: f64,
    pub hi: f64,
    pub links: usize,
    pub r: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub total_links: usize,
    pub skipped_links: usize,
    pub weak_link_share: Option<f64>,
}

pub fn cliqueness_rows(graph: &str, report: &network::JaccardBinReport) -> Vec<CliquenessRow> {
    report
        .bins
        .iter()
        .map(|b| CliquenessRow {
            graph: graph.into(),
            lo: b.lo,
            hi: b.hi,
            links: b.links,
            r: b.r,
            ci_lo: b.ci.map(|c| c.lo),
            ci_hi: b.ci.map(|c| c.hi),
            total_links: report.total_links,
            skipped_links: report.skipped_links,
            weak_link_share: report.weak_link_share,
        })
        .collect()
}

fn run_cliqueness(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let seed = cfg.seed()?;
    let t = &cfg.thresholds;
    let (graphs, fractions): (Vec<(String, SocialGraph)>, BTreeMap<String, f64>) = if cfg.network.edges.is_some() {
        let n = &cfg.network;
        let g = SocialGraph::from_csv(
            n.kind,
            cfg.require(&n.edges, "network.edges")?,
            cfg.require(&n.friends, "network.friends")?,
        )?;
        (vec![(n.kind.as_str().into(), g)], read_id_values(cfg.require(&n.fractions, "network.fractions")?)?)
    } else {
        let (tweets, profiles) = ingested(dir)?;
        let fractions = read_users(dir)?.into_iter().map(|u| (u.user_id, u.food_tweet_fraction)).collect();
        (
            vec![
                ("friendship".into(), network::build_friendship(&profiles)),
                ("mention".into(), network::build_mention(&tweets, &profiles)),
            ],
            fractions,
        )
    };
    let mut rows = Vec::new();
    for (label, g) in &graphs {
        let report = network::cliqueness_analysis(g, &fractions, &t.bins, t.bootstrap_iters, seed)?;
        rows.extend(cliqueness_rows(label, &report));
    }
    corpus::write_csv(&dir.join(out::CLIQUENESS), rows)?;
    Ok(vec![out::CLIQUENESS.into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishRow {
    pub state_id: String,
    pub rank: usize,
    pub food: String,
    pub score: f64,
    pub mentions: u64,
}

fn run_distinguish(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let matches: Vec<MatchRow> = corpus::read_csv_strict(&stage_input(dir, out::MATCHES, "match")?)?;
    let state_of: BTreeMap<String, String> = read_users(dir)?.into_iter().map(|u| (u.user_id, u.state_id)).collect();
    let mut per_state: BTreeMap<&str, BTreeMap<String, u64>> = BTreeMap::new();
    let mut global: BTreeMap<String, u64> = BTreeMap::new();
    for m in &matches {
        let Some(state) = state_of.get(&m.user_id) else { continue };
        *per_state.entry(state).or_default().entry(m.surface.clone()).or_default() += 1;
        *global.entry(m.surface.clone()).or_default() += 1;
    }
    let mut rows = Vec::new();
    if global.is_empty() {
        warn!("no food mentions by located users; distinguish output is empty");
    } else {
        for (state, counts) in &per_state {
            for (rank, (food, score)) in lexicon::distinguishing_terms(counts, &global, cfg.thresholds.top_k)?.into_iter().enumerate() {
                let mentions = counts[&food];
                rows.push(DistinguishRow { state_id: state.to_string(), rank: rank + 1, food, score, mentions });
            }
        }
    }
    corpus::write_csv(&dir.join(out::DISTINGUISH), rows)?;
    Ok(vec![out::DISTINGUISH.into()])
}

/// Pipeline config for a nation written by [`crate::synth::write_nation`],
/// with paths relative to the nation directory.
pub fn nation_config(seed: u64, output_dir: &str) -> PipelineConfig {
    use crate::synth::{files, BUILTIN_FILTERS};
    let p = |s: &str| Some(PathBuf::from(s));
    PipelineConfig {
        seed: Some(seed),
        output_dir: p(output_dir),
        inputs: Inputs {
            tweets: vec![files::TWEETS.into()],
            profiles: vec![files::PROFILES.into()],
            census: p(files::CENSUS),
            health: p(files::HEALTH),
            zip_county: p(files::ZIP_COUNTY),
            county_state: p(files::COUNTY_STATE),
            metro_zips: p(files::METRO_ZIPS),
            names: p(files::NAMES),
            lexicon: p(files::LEXICON),
            categories: p(files::CATEGORIES),
            prominence: p(files::PROMINENCE),
            nb_training: None,
            filters: BUILTIN_FILTERS
                .iter()
                .map(|(name, _, target)| FilterInput {
                    path: PathBuf::from(files::FILTER_DIR).join(format!("{name}.txt")),
                    target: target.parse().expect("bundled filter targets are valid"),
                })
                .collect(),
        },
        ..PipelineConfig::default()
    }
}

/// Pipeline config for an oracle graph directory written by the synthesizer.
pub fn oracle_config(seed: u64, activation: bool) -> PipelineConfig {
    let p = |s: &str| Some(PathBuf::from(s));
    PipelineConfig {
        seed: Some(seed),
        output_dir: p("run"),
        network: NetworkInputs {
            kind: GraphKind::Friendship,
            edges: p("edges.csv"),
            friends: p("friends.csv"),
            scores: if activation { p("scores.csv") } else { None },
            states: if activation { p("states.csv") } else { None },
            fractions: if activation { None } else { p("fractions.csv") },
        },
        ..PipelineConfig::default()
    }
}

pub fn to_toml(cfg: &PipelineConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}
