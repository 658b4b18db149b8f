//! Seeded synthetic nations with planted ground truth.
//!
//! Generation runs weights-first. Each county's food weights are drawn as
//! user counts, users are then dealt those foods, and outcomes are a linear
//! function of the weights. Regional aggregates computed downstream
//! therefore equal the planted weights exactly.
//!
//! Every random draw comes from a ChaCha stream keyed by (entity kind, id),
//! so counties can be generated in any order or in parallel.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::corpus::{
    self, CensusRecord, Gender, GeoMapping, HealthOutcome, NameTable, TweetRecord, UserProfile,
};
use crate::error::{Error, Result};
use crate::features::{demog_values, ProminenceRow, ProminenceTable};
use crate::lexicon::{match_foods, FoodLexicon};
use crate::modeling::Target;
use crate::network::{GraphKind, SocialGraph, DEFAULT_JACCARD_BINS};

pub const BUILTIN_LEXICON: &str = include_str!("../data/sample_lexicon.csv");
pub const BUILTIN_CATEGORIES: &str = include_str!("../data/sample_categories.csv");
/// Filter files shipped with the crate: (name, body, target).
pub const BUILTIN_FILTERS: [(&str, &str, &str); 7] = [
    ("cooking", include_str!("../data/filters/cooking.txt"), "profile_text"),
    ("dieting", include_str!("../data/filters/dieting.txt"), "profile_text"),
    ("family", include_str!("../data/filters/family.txt"), "profile_text"),
    ("fatproblems", include_str!("../data/filters/fatproblems.txt"), "hashtags"),
    ("health", include_str!("../data/filters/health.txt"), "profile_text"),
    ("organic", include_str!("../data/filters/organic.txt"), "profile_text"),
    ("student", include_str!("../data/filters/student.txt"), "profile_text"),
];

const FOOD_TEMPLATES: [&str; 4] = ["having {} right now", "craving {} tonight", "{} again", "the best {} ever"];
const FILLER: [&str; 8] = [
    "good morning everyone",
    "traffic is terrible today",
    "watching the game",
    "what a week",
    "heading out soon",
    "so tired",
    "great weather outside",
    "reading a new book",
];
const TAGS: [&str; 12] =
    ["monday", "tbt", "weekend", "music", "travel", "news", "nofilter", "mood", "work", "sports", "family", "goals"];
const PROFILE_PHRASES: [&str; 14] = [
    "proud mom",
    "dad of two",
    "student at state college",
    "home cook and foodie",
    "fitness and yoga",
    "organic gardener",
    "trying a new diet",
    "love music and movies",
    "church every sunday",
    "office job",
    "marathon runner",
    "team player",
    "party with friends",
    "happy family life",
];
const FEMALE_NAMES: [&str; 10] = ["mary", "linda", "susan", "karen", "lisa", "nancy", "emily", "jessica", "sarah", "laura"];
const MALE_NAMES: [&str; 10] = ["james", "john", "robert", "michael", "david", "william", "joseph", "thomas", "daniel", "paul"];
const UNLISTED_NAMES: [&str; 8] = ["alex", "sam", "jordan", "taylor", "casey", "riley", "morgan", "jamie"];
const AREAS: [&str; 8] = ["tv", "tech", "sports", "music", "food", "fitness", "politics", "travel"];
const ACCOUNTS_PER_AREA: usize = 20;
const EXTERNAL_POOL: u64 = 5000;
const BASE_TIME: i64 = 1_300_000_000;

#[derive(Debug, Clone, Copy)]
enum Stream {
    Nation = 1,
    State = 2,
    County = 3,
    User = 4,
    Network = 5,
    Activation = 6,
    Cliques = 7,
    Outcome = 8,
}

fn substream(seed: u64, kind: Stream, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivationGraphConfig {
    pub n_nodes: usize,
    pub mean_degree: f64,
    pub homophily: f64,
    /// Noise added to the latent trait to form the observed score.
    pub score_noise: f64,
    /// Standard deviation of the homophilous partner offset, as a fraction of the node count.
    pub window: f64,
    pub n_states: usize,
}

impl Default for ActivationGraphConfig {
    fn default() -> Self {
        ActivationGraphConfig {
            n_nodes: 20_000,
            mean_degree: 20.0,
            homophily: 0.8,
            score_noise: 0.6,
            window: 0.15,
            n_states: 51,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliqueGraphConfig {
    pub links_per_bin: usize,
    /// Approximate size of the union of two endpoints' friend sets.
    pub union_size: usize,
    pub bins: Vec<f64>,
    /// Planted endpoint correlation per bin.
    pub rho: Vec<f64>,
}

impl Default for CliqueGraphConfig {
    fn default() -> Self {
        CliqueGraphConfig {
            links_per_bin: 1000,
            union_size: 200,
            bins: DEFAULT_JACCARD_BINS.to_vec(),
            rho: vec![0.1, 0.25, 0.4, 0.55, 0.65, 0.75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_states: usize,
    pub n_counties: usize,
    pub users_per_county: usize,
    /// Inclusive range of non-food tweets per user.
    pub filler_tweets: [usize; 2],
    /// Lexicon CSV; the bundled 60-entry sample when absent.
    pub lexicon: Option<PathBuf>,
    /// Outcome variance shares of the caloric channel, food-specific
    /// effects, demographics and noise.
    pub caloric_share: f64,
    pub food_share: f64,
    pub demog_share: f64,
    pub noise_share: f64,
    /// Strength with which regional propensity tilts mentions toward caloric foods.
    pub calorie_tilt: f64,
    /// County deviation from the state propensity.
    pub county_spread: f64,
    pub homophily: f64,
    pub mean_friends: usize,
    pub urban_fraction: f64,
    /// Female, male and unknown-gender shares.
    pub gender_split: [f64; 3],
    /// Also write the activation and clique-ness oracle graphs.
    pub oracles: bool,
    pub activation: ActivationGraphConfig,
    pub cliques: CliqueGraphConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_states: 51,
            n_counties: 300,
            users_per_county: 100,
            filler_tweets: [2, 6],
            lexicon: None,
            caloric_share: 0.6,
            food_share: 0.2,
            demog_share: 0.1,
            noise_share: 0.1,
            calorie_tilt: 0.5,
            county_spread: 0.5,
            homophily: 0.8,
            mean_friends: 8,
            urban_fraction: 0.269,
            gender_split: [0.372, 0.321, 0.307],
            oracles: true,
            activation: ActivationGraphConfig::default(),
            cliques: CliqueGraphConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_states == 0 || self.users_per_county == 0 {
            return bad("state and user counts must be positive".into());
        }
        if self.n_counties < 3 {
            return bad(format!("{} counties; correlations need at least 3", self.n_counties));
        }
        if self.n_counties < self.n_states {
            return bad(format!("{} counties cannot cover {} states", self.n_counties, self.n_states));
        }
        if 10_000 + 3 * self.n_counties > 99_999 {
            return bad("too many counties for 5-digit zip codes".into());
        }
        if self.filler_tweets[0] < 1 || self.filler_tweets[0] > self.filler_tweets[1] {
            return bad("filler_tweets must be [min, max] with 1 <= min <= max".into());
        }
        let shares = [self.caloric_share, self.food_share, self.demog_share, self.noise_share];
        if shares.iter().any(|s| !(*s >= 0.0)) || shares.iter().sum::<f64>() <= 0.0 {
            return bad("variance shares must be >= 0 with a positive sum".into());
        }
        for (name, v) in [("homophily", self.homophily), ("urban_fraction", self.urban_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0,1]"));
            }
        }
        if self.gender_split.iter().any(|g| *g < 0.0) || (self.gender_split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("gender_split must be non-negative and sum to 1".into());
        }
        if !(0.0..=1.0).contains(&self.activation.homophily) || self.activation.n_nodes < 10 {
            return bad("activation graph needs homophily in [0,1] and at least 10 nodes".into());
        }
        if self.cliques.rho.len() + 1 != self.cliques.bins.len() || self.cliques.rho.iter().any(|r| r.abs() > 1.0) {
            return bad("cliques.rho needs one correlation in [-1,1] per bin".into());
        }
        Ok(())
    }

    fn load_lexicon(&self) -> Result<FoodLexicon> {
        match &self.lexicon {
            Some(p) => FoodLexicon::from_csv_path(p),
            None => FoodLexicon::from_csv_reader(BUILTIN_LEXICON.as_bytes()),
        }
    }
}

/// Planted linear model for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub intercept: f64,
    pub food_beta: BTreeMap<String, f64>,
    /// Coefficients on the `demog:` columns, in column order.
    pub demog_gamma: [f64; 5],
    pub sigma: f64,
    /// Squared correlation of the caloric channel with the outcome.
    pub caloric_r2: f64,
    /// Outcome variance explained by everything but the noise.
    pub planted_r2: f64,
}

impl PlantedModel {
    /// Noise-free outcome for given food weights and census row.
    pub fn expected(&self, weights: &BTreeMap<String, f64>, census: &CensusRecord) -> f64 {
        let d = demog_values(census);
        self.intercept
            + self.food_beta.iter().map(|(f, b)| b * weights.get(f).copied().unwrap_or(0.0)).sum::<f64>()
            + self.demog_gamma.iter().zip(d).map(|(g, v)| g * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyTruth {
    pub state_id: String,
    pub obesity_rate: f64,
    pub diabetes_rate: f64,
    pub food_weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub seed: u64,
    pub n_users: usize,
    pub counties: BTreeMap<String, CountyTruth>,
    pub states: BTreeMap<String, HealthOutcome>,
    pub obesity: PlantedModel,
    pub diabetes: PlantedModel,
    pub user_risk: BTreeMap<String, f64>,
    pub modal_zips: BTreeMap<String, String>,
    /// Mutual-follow pairs between gender-known users.
    pub friendship_edges: usize,
    pub friendship_edges_all: usize,
    pub urban_users: usize,
    /// Female, male and unknown counts.
    pub gender_counts: [usize; 3],
}

impl SynthTruth {
    pub fn model(&self, t: Target) -> &PlantedModel {
        match t {
            Target::Obesity => &self.obesity,
            Target::Diabetes => &self.diabetes,
        }
    }
}

/// In-memory synthetic nation.
#[derive(Debug, Clone)]
pub struct Nation {
    pub tweets: Vec<TweetRecord>,
    pub profiles: Vec<UserProfile>,
    pub census: BTreeMap<String, CensusRecord>,
    pub health: BTreeMap<String, HealthOutcome>,
    pub geo: GeoMapping,
    pub names: NameTable,
    pub lexicon: FoodLexicon,
    pub prominence: ProminenceTable,
    pub truth: SynthTruth,
}

struct CountyDraw {
    id: String,
    state: String,
    zips: [String; 3],
    census: CensusRecord,
    /// Food indices per local user.
    user_foods: Vec<BTreeSet<usize>>,
    counts: Vec<usize>,
}

fn draw_census(id: &str, rng: &mut ChaCha8Rng) -> CensusRecord {
    CensusRecord {
        region_id: id.to_string(),
        under_18: rng.random_range(0.18..0.28),
        over_65: rng.random_range(0.10..0.22),
        female: rng.random_range(0.48..0.53),
        afro_hispanic: rng.random_range(0.05..0.60),
        median_income: 50_000.0 * (0.25 * normal(rng)).exp(),
        bachelor_rate: rng.random_range(0.15..0.45),
    }
}

fn sd(v: &[f64]) -> f64 {
    crate::stats::sample_variance(v).unwrap_or(0.0).sqrt()
}

fn standardized_share(component: &[f64], share: f64, scale: f64) -> f64 {
    let s = sd(component);
    if s > 0.0 {
        scale * share.sqrt() / s
    } else {
        0.0
    }
}

/// Generates a nation in memory.
pub fn generate_nation(cfg: &SynthConfig) -> Result<Nation> {
    cfg.validate()?;
    let lexicon = cfg.load_lexicon()?;
    let foods: Vec<String> = lexicon.entries().iter().map(|e| e.surface.clone()).collect();
    let cals: Vec<f64> = lexicon.entries().iter().map(|e| e.calories).collect();
    let cal_mean = cals.iter().sum::<f64>() / cals.len() as f64;
    let cal_sd = sd(&cals).max(f64::MIN_POSITIVE);
    let z: Vec<f64> = cals.iter().map(|c| (c - cal_mean) / cal_sd).collect();
    check_templates(&lexicon)?;

    let mut nation_rng = substream(cfg.seed, Stream::Nation, 0);
    let base: Vec<f64> = foods.iter().map(|_| nation_rng.random_range(0.04..0.20)).collect();

    let states: Vec<String> = (0..cfg.n_states).map(|s| format!("{:02}", s + 1)).collect();
    let theta_state: Vec<f64> =
        (0..cfg.n_states).map(|s| normal(&mut substream(cfg.seed, Stream::State, s as u64))).collect();
    let mut county_state = Vec::with_capacity(cfg.n_counties);
    for (s, _) in states.iter().enumerate() {
        let n = cfg.n_counties / cfg.n_states + usize::from(s < cfg.n_counties % cfg.n_states);
        county_state.extend((0..n).map(|j| (s, j)));
    }

    let u = cfg.users_per_county;
    let counties: Vec<CountyDraw> = county_state
        .par_iter()
        .enumerate()
        .map(|(c, &(s, j))| {
            let mut rng = substream(cfg.seed, Stream::County, c as u64);
            let id = format!("{}{:03}", states[s], j + 1);
            let theta = theta_state[s] + cfg.county_spread * normal(&mut rng);
            let census = draw_census(&id, &mut rng);
            let mut user_foods = vec![BTreeSet::new(); u];
            let mut counts = Vec::with_capacity(foods.len());
            for f in 0..foods.len() {
                let eta = 0.25 * normal(&mut rng);
                let p = (base[f] * (cfg.calorie_tilt * theta * z[f] + eta).exp()).clamp(0.005, 0.7);
                let k = Binomial::new(u as u64, p).expect("p is clamped into (0,1)").sample(&mut rng) as usize;
                for i in index::sample(&mut rng, u, k) {
                    user_foods[i].insert(f);
                }
                counts.push(k);
            }
            let zips = [0, 1, 2].map(|o| format!("{:05}", 10_000 + 3 * c + o));
            CountyDraw { id, state: states[s].clone(), zips, census, user_foods, counts }
        })
        .collect();

    let weights: Vec<BTreeMap<String, f64>> = counties
        .iter()
        .map(|cd| {
            cd.counts
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(f, &k)| (foods[f].clone(), k as f64 / u as f64))
                .collect()
        })
        .collect();
    let caloric: Vec<f64> = counties
        .iter()
        .map(|cd| cd.counts.iter().zip(&z).map(|(&k, zf)| zf * k as f64 / u as f64).sum())
        .collect();

    let plant = |target: Target, mean: f64, scale: f64| -> Result<(PlantedModel, Vec<f64>)> {
        let mut rng = substream(cfg.seed, Stream::Outcome, target as u64);
        let mut delta: Vec<f64> = foods.iter().map(|_| normal(&mut rng)).collect();
        // Demographic direction: minority share up, log income down.
        let g_dir = [0.0, 0.0, 0.0, 1.0, -1.0];
        let component = |coef: &[f64]| -> Vec<f64> {
            counties.iter().map(|cd| cd.counts.iter().zip(coef).map(|(&k, d)| d * k as f64 / u as f64).sum()).collect()
        };
        // Both channels load on a county's overall mention volume. Removing
        // the caloric direction from the food-specific one keeps the planted
        // variance shares from cancelling.
        let raw = component(&delta);
        let var_c = crate::stats::sample_variance(&caloric).unwrap_or(0.0);
        if var_c > 0.0 {
            let (mc, mr) = (crate::stats::mean(&caloric).unwrap_or(0.0), crate::stats::mean(&raw).unwrap_or(0.0));
            let cov = caloric.iter().zip(&raw).map(|(c, r)| (c - mc) * (r - mr)).sum::<f64>() / (caloric.len() - 1) as f64;
            let b = cov / var_c;
            delta.iter_mut().zip(&z).for_each(|(d, zf)| *d -= b * zf);
        }
        let specific = component(&delta);
        let demog: Vec<f64> = counties
            .iter()
            .map(|cd| demog_values(&cd.census).iter().zip(g_dir).map(|(v, g)| v * g).sum())
            .collect();
        let a = standardized_share(&caloric, cfg.caloric_share, scale);
        let b = standardized_share(&specific, cfg.food_share, scale);
        let g = standardized_share(&demog, cfg.demog_share, scale);
        let sigma = scale * cfg.noise_share.sqrt();
        let mut model = PlantedModel {
            intercept: 0.0,
            food_beta: foods.iter().enumerate().map(|(f, name)| (name.clone(), a * z[f] + b * delta[f])).collect(),
            demog_gamma: g_dir.map(|d| d * g),
            sigma,
            caloric_r2: 0.0,
            planted_r2: 0.0,
        };
        let signal: Vec<f64> = counties.iter().zip(&weights).map(|(cd, w)| model.expected(w, &cd.census)).collect();
        model.intercept = mean - signal.iter().sum::<f64>() / signal.len() as f64;
        let noise: Vec<f64> = counties
            .iter()
            .enumerate()
            .map(|(c, _)| sigma * normal(&mut substream(cfg.seed, Stream::Outcome, 16 + 2 * c as u64 + target as u64)))
            .collect();
        let y: Vec<f64> = signal.iter().zip(&noise).map(|(s, e)| s + model.intercept + e).collect();
        if let Some(bad) = y.iter().find(|v| !(0.0..=100.0).contains(*v)) {
            return Err(Error::Config(format!("planted {target} rate {bad} outside [0,100]; lower the outcome spread")));
        }
        let var_y = crate::stats::sample_variance(&y).unwrap_or(0.0);
        model.caloric_r2 = crate::stats::pearson(&caloric, &y).map(|r| r * r).unwrap_or(0.0);
        model.planted_r2 = if var_y > 0.0 {
            1.0 - crate::stats::sample_variance(&noise).unwrap_or(0.0) / var_y
        } else {
            1.0
        };
        Ok((model, y))
    };
    let (obesity, y_ob) = plant(Target::Obesity, 28.0, 3.0)?;
    let (diabetes, y_db) = plant(Target::Diabetes, 9.5, 1.2)?;

    let n_users = counties.len() * u;
    let user_id = |i: usize| format!("u{i:06}");
    let screen = |i: usize| format!("user{i:06}");
    let county_of_user = |i: usize| i / u;

    // Exact planted shares: gender and urban status by shuffled global order.
    let mut order: Vec<usize> = (0..n_users).collect();
    order.shuffle(&mut nation_rng);
    let n_f = (cfg.gender_split[0] * n_users as f64).round() as usize;
    let n_m = ((cfg.gender_split[1] * n_users as f64).round() as usize).min(n_users - n_f);
    let mut gender_of = vec![Gender::Unknown; n_users];
    for &i in &order[..n_f] {
        gender_of[i] = Gender::Female;
    }
    for &i in &order[n_f..n_f + n_m] {
        gender_of[i] = Gender::Male;
    }
    order.shuffle(&mut nation_rng);
    let n_urban = (cfg.urban_fraction * n_users as f64).round() as usize;
    let mut urban = vec![false; n_users];
    for &i in &order[..n_urban] {
        urban[i] = true;
    }

    let foods_of = |i: usize| &counties[county_of_user(i)].user_foods[i % u];
    let risk: Vec<f64> = (0..n_users)
        .map(|i| obesity.intercept + foods_of(i).iter().map(|&f| obesity.food_beta[&foods[f]]).sum::<f64>())
        .collect();
    let home_zip: Vec<String> = (0..n_users)
        .map(|i| {
            let cd = &counties[county_of_user(i)];
            if urban[i] {
                cd.zips[0].clone()
            } else {
                let mut rng = substream(cfg.seed, Stream::User, i as u64);
                cd.zips[1 + rng.random_range(0..2usize)].clone()
            }
        })
        .collect();

    // Homophilous mutual follows by risk rank.
    let mut by_risk: Vec<usize> = (0..n_users).collect();
    by_risk.sort_by(|&a, &b| risk[a].total_cmp(&risk[b]).then(a.cmp(&b)));
    let mut rank = vec![0usize; n_users];
    for (r, &i) in by_risk.iter().enumerate() {
        rank[i] = r;
    }
    let window = 0.05 * n_users as f64;
    let mut mutual: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 0..n_users {
        let mut rng = substream(cfg.seed, Stream::Network, i as u64);
        for _ in 0..cfg.mean_friends.div_ceil(2) {
            let j = if rng.random_bool(cfg.homophily) {
                let r = (rank[i] as f64 + window * normal(&mut rng)).round().clamp(0.0, (n_users - 1) as f64);
                by_risk[r as usize]
            } else {
                rng.random_range(0..n_users)
            };
            if i != j {
                mutual.insert((i.min(j), i.max(j)));
            }
        }
    }
    let mut one_way: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut net_rng = substream(cfg.seed, Stream::Network, u64::MAX);
    for i in 0..n_users {
        for _ in 0..2 {
            let j = net_rng.random_range(0..n_users);
            let pair = (i.min(j), i.max(j));
            if i != j && !mutual.contains(&pair) && !one_way.contains(&(j, i)) {
                one_way.insert((i, j));
            }
        }
    }
    let mut friends: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n_users];
    let mut followers: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n_users];
    let mut mutual_of: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for &(a, b) in &mutual {
        friends[a].insert(user_id(b));
        friends[b].insert(user_id(a));
        followers[a].insert(user_id(b));
        followers[b].insert(user_id(a));
        mutual_of[a].push(b);
        mutual_of[b].push(a);
    }
    for &(a, b) in &one_way {
        friends[a].insert(user_id(b));
        followers[b].insert(user_id(a));
    }
    let friendship_edges = mutual.iter().filter(|(a, b)| gender_of[*a].is_known() && gender_of[*b].is_known()).count();

    // Mention tweets along half of the mutual links.
    let mut mention_texts: Vec<Vec<String>> = vec![Vec::new(); n_users];
    for (e, &(a, b)) in mutual.iter().enumerate() {
        let mut rng = substream(cfg.seed, Stream::Network, (1u64 << 40) + e as u64);
        if rng.random_bool(0.5) {
            let (src, dst) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            mention_texts[src].push(format!("@{} see you soon", screen(dst)));
        }
    }

    let prominence_rows: Vec<ProminenceRow> = AREAS
        .iter()
        .flat_map(|area| {
            (0..ACCOUNTS_PER_AREA).map(move |k| ProminenceRow {
                account_id: format!("p_{area}_{k:02}"),
                area: area.to_string(),
                score: 100.0 - 4.0 * k as f64,
            })
        })
        .collect();
    let prominence = ProminenceTable::new(prominence_rows.clone())?;

    let per_user: Vec<(UserProfile, Vec<TweetRecord>)> = (0..n_users)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(cfg.seed, Stream::User, i as u64);
            let first_name = match gender_of[i] {
                Gender::Female => FEMALE_NAMES[rng.random_range(0..FEMALE_NAMES.len())],
                Gender::Male => MALE_NAMES[rng.random_range(0..MALE_NAMES.len())],
                Gender::Unknown => UNLISTED_NAMES[rng.random_range(0..UNLISTED_NAMES.len())],
            };
            let n_phrases = rng.random_range(1..=3usize);
            let phrases: Vec<&str> = PROFILE_PHRASES.choose_multiple(&mut rng, n_phrases).copied().collect();
            let mut friend_ids = friends[i].clone();
            for _ in 0..rng.random_range(0..=4usize) {
                let r = &prominence_rows[rng.random_range(0..prominence_rows.len())];
                friend_ids.insert(r.account_id.clone());
            }
            for _ in 0..rng.random_range(5..=15usize) {
                friend_ids.insert(format!("x{}", rng.random_range(0..EXTERNAL_POOL)));
            }
            let profile = UserProfile {
                user_id: user_id(i),
                screen_name: screen(i),
                first_name: Some(first_name.to_string()),
                profile_text: phrases.join(". "),
                follower_ids: followers[i].clone(),
                friend_ids,
                home_zip: None,
                gender: Gender::Unknown,
            };

            let zip = &home_zip[i];
            let mut texts: Vec<(String, bool, bool)> = Vec::new();
            for &f in foods_of(i) {
                let t = FOOD_TEMPLATES[rng.random_range(0..FOOD_TEMPLATES.len())];
                texts.push((t.replace("{}", &foods[f]), false, false));
            }
            for m in &mention_texts[i] {
                texts.push((m.clone(), true, false));
            }
            let n_filler = rng.random_range(cfg.filler_tweets[0]..=cfg.filler_tweets[1]);
            for _ in 0..n_filler {
                let mut text = FILLER[rng.random_range(0..FILLER.len())].to_string();
                let roll: f64 = rng.random();
                if roll < 0.1 && !mutual_of[i].is_empty() {
                    let j = mutual_of[i][rng.random_range(0..mutual_of[i].len())];
                    texts.push((format!("RT @{} {text}", screen(j)), false, true));
                    continue;
                }
                if roll < 0.4 {
                    text.push_str(&format!(" #{}", TAGS[rng.random_range(0..TAGS.len())]));
                }
                if rng.random_bool(0.05) {
                    text.push_str(" #fatproblems");
                }
                texts.push((text, false, false));
            }
            // One tweet from elsewhere; the home zip stays the strict mode.
            let away = (texts.len() >= 3).then(|| rng.random_range(0..texts.len()));
            let away_zip = counties[(county_of_user(i) + 1) % counties.len()].zips[1].clone();
            let tweets = texts
                .into_iter()
                .enumerate()
                .map(|(k, (text, reply, retweet))| {
                    let z = if Some(k) == away { away_zip.clone() } else { zip.clone() };
                    let ts = BASE_TIME + rng.random_range(0..31_536_000i64);
                    let mut t = TweetRecord::new(String::new(), user_id(i), ts, text, Some(z));
                    t.is_reply = reply;
                    t.is_retweet = retweet;
                    t
                })
                .collect();
            (profile, tweets)
        })
        .collect();

    let mut profiles = Vec::with_capacity(n_users);
    let mut tweets = Vec::new();
    for (p, ts) in per_user {
        profiles.push(p);
        for mut t in ts {
            t.tweet_id = format!("t{:09}", tweets.len());
            tweets.push(t);
        }
    }

    let mut census = BTreeMap::new();
    let mut health = BTreeMap::new();
    let mut county_truth = BTreeMap::new();
    let mut zip_county = BTreeMap::new();
    let mut county_state_map = BTreeMap::new();
    let mut metro = BTreeSet::new();
    for (c, cd) in counties.iter().enumerate() {
        census.insert(cd.id.clone(), cd.census.clone());
        health.insert(
            cd.id.clone(),
            HealthOutcome { region_id: cd.id.clone(), obesity_rate: y_ob[c], diabetes_rate: y_db[c] },
        );
        county_truth.insert(
            cd.id.clone(),
            CountyTruth {
                state_id: cd.state.clone(),
                obesity_rate: y_ob[c],
                diabetes_rate: y_db[c],
                food_weights: weights[c].clone(),
            },
        );
        for z in &cd.zips {
            zip_county.insert(z.clone(), cd.id.clone());
        }
        metro.insert(cd.zips[0].clone());
        county_state_map.insert(cd.id.clone(), cd.state.clone());
    }
    let mut state_truth = BTreeMap::new();
    for s in &states {
        let members: Vec<&CountyDraw> = counties.iter().filter(|cd| &cd.state == s).collect();
        let k = members.len() as f64;
        let avg = |f: &dyn Fn(&CensusRecord) -> f64| members.iter().map(|cd| f(&cd.census)).sum::<f64>() / k;
        census.insert(
            s.clone(),
            CensusRecord {
                region_id: s.clone(),
                under_18: avg(&|c| c.under_18),
                over_65: avg(&|c| c.over_65),
                female: avg(&|c| c.female),
                afro_hispanic: avg(&|c| c.afro_hispanic),
                median_income: avg(&|c| c.median_income),
                bachelor_rate: avg(&|c| c.bachelor_rate),
            },
        );
        let rate = |t: Target| members.iter().map(|cd| t.of(&health[&cd.id])).sum::<f64>() / k;
        let h = HealthOutcome {
            region_id: s.clone(),
            obesity_rate: rate(Target::Obesity),
            diabetes_rate: rate(Target::Diabetes),
        };
        health.insert(s.clone(), h.clone());
        state_truth.insert(s.clone(), h);
    }

    let names: NameTable = FEMALE_NAMES
        .iter()
        .map(|n| (n.to_string(), Gender::Female))
        .chain(MALE_NAMES.iter().map(|n| (n.to_string(), Gender::Male)))
        .collect();
    let truth = SynthTruth {
        seed: cfg.seed,
        n_users,
        counties: county_truth,
        states: state_truth,
        obesity,
        diabetes,
        user_risk: (0..n_users).map(|i| (user_id(i), risk[i])).collect(),
        modal_zips: (0..n_users).map(|i| (user_id(i), home_zip[i].clone())).collect(),
        friendship_edges,
        friendship_edges_all: mutual.len(),
        urban_users: n_urban,
        gender_counts: [n_f, n_m, n_users - n_f - n_m],
    };
    Ok(Nation {
        tweets,
        profiles,
        census,
        health,
        geo: GeoMapping::new(zip_county, county_state_map, metro)?,
        names,
        lexicon,
        prominence,
        truth,
    })
}

/// Every food template must match exactly its food, and filler text nothing.
fn check_templates(lex: &FoodLexicon) -> Result<()> {
    for e in lex.entries() {
        for t in FOOD_TEMPLATES {
            let text = t.replace("{}", &e.surface);
            let m = match_foods(&text, lex);
            if m.surfaces().collect::<Vec<_>>() != [e.surface.as_str()] {
                return Err(Error::Config(format!("lexicon entry {:?} collides with tweet template {t:?}", e.surface)));
            }
        }
    }
    let fillers = FILLER.iter().map(|s| s.to_string()).chain(PROFILE_PHRASES.iter().map(|s| s.to_string()));
    for f in fillers.chain(["see you soon".to_string()]) {
        if match_foods(&f, lex).has_food() {
            return Err(Error::Config(format!("lexicon matches filler text {f:?}")));
        }
    }
    Ok(())
}

/// Planted-homophily graph with observed scores and state labels.
#[derive(Debug, Clone)]
pub struct PlantedActivation {
    pub graph: SocialGraph,
    pub scores: BTreeMap<String, f64>,
    pub states: BTreeMap<String, String>,
}

/// Nodes carry a latent trait; with probability `homophily` an edge joins
/// nodes close in trait rank, otherwise a uniform pair. Scores add noise to
/// the trait.
pub fn planted_activation(cfg: &ActivationGraphConfig, seed: u64) -> Result<PlantedActivation> {
    if cfg.n_nodes < 2 || !(0.0..=1.0).contains(&cfg.homophily) || cfg.n_states == 0 {
        return Err(Error::Config("activation graph needs >= 2 nodes, homophily in [0,1], >= 1 state".into()));
    }
    let n = cfg.n_nodes;
    let mut rng = substream(seed, Stream::Activation, 0);
    let mut trait_: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    trait_.sort_by(f64::total_cmp);
    let ids: Vec<String> = (0..n).map(|i| format!("a{i:06}")).collect();
    let scores = (0..n).map(|i| (ids[i].clone(), trait_[i] + cfg.score_noise * normal(&mut rng))).collect();
    let states = (0..n).map(|i| (ids[i].clone(), format!("{:02}", 1 + rng.random_range(0..cfg.n_states)))).collect();
    let m = (n as f64 * cfg.mean_degree / 2.0).round() as usize;
    let w = cfg.window * n as f64;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let a = rng.random_range(0..n);
        let b = if rng.random_bool(cfg.homophily) {
            (a as f64 + w * normal(&mut rng)).round().clamp(0.0, (n - 1) as f64) as usize
        } else {
            rng.random_range(0..n)
        };
        edges.push((ids[a].clone(), ids[b].clone()));
    }
    let graph = SocialGraph::new(GraphKind::Friendship, ids, edges, &BTreeMap::new())?;
    Ok(PlantedActivation { graph, scores, states })
}

/// Matched pairs whose friend-set overlap and attribute correlation are planted per bin.
#[derive(Debug, Clone)]
pub struct PlantedCliques {
    pub graph: SocialGraph,
    pub fractions: BTreeMap<String, f64>,
    pub friend_sets: BTreeMap<String, BTreeSet<String>>,
    pub rho: Vec<f64>,
}

/// Each link is an isolated pair. Friend sets share `I` accounts and have
/// `a` private ones each (plus each other), so Jaccard is I / (2 + I + 2a).
/// `null` plants zero correlation in every bin.
pub fn planted_cliques(cfg: &CliqueGraphConfig, seed: u64, null: bool) -> Result<PlantedCliques> {
    crate::network::validate_bins(&cfg.bins)?;
    if cfg.rho.len() + 1 != cfg.bins.len() {
        return Err(Error::Config("one planted correlation per bin required".into()));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = substream(seed, Stream::Cliques, u64::from(null));
    let last = cfg.bins.len() - 2;
    let mut friend_sets = BTreeMap::new();
    let mut fractions = BTreeMap::new();
    let mut edges = Vec::new();
    let mut link = 0usize;
    for b in 0..=last {
        let (lo, hi) = (cfg.bins[b], cfg.bins[b + 1]);
        let options: Vec<(usize, usize)> = (0..cfg.union_size.saturating_sub(2))
            .map(|i| (i, (cfg.union_size - 2 - i) / 2))
            .filter(|&(i, a)| {
                let j = i as f64 / (2 + i + 2 * a) as f64;
                j >= lo && (j < hi || (b == last && j <= hi))
            })
            .collect();
        if options.is_empty() {
            return Err(Error::Config(format!("union size {} cannot reach Jaccard bin [{lo}, {hi})", cfg.union_size)));
        }
        let rho = if null { 0.0 } else { cfg.rho[b] };
        for _ in 0..cfg.links_per_bin {
            let (shared, private) = options[rng.random_range(0..options.len())];
            let (u, v) = (format!("c{link:06}a"), format!("c{link:06}b"));
            let common: Vec<String> = (0..shared).map(|k| format!("c{link:06}s{k}")).collect();
            for (me, other) in [(&u, &v), (&v, &u)] {
                let mut set: BTreeSet<String> = common.iter().cloned().collect();
                set.extend((0..private).map(|k| format!("{me}p{k}")));
                set.insert(other.clone());
                friend_sets.insert(me.clone(), set);
            }
            let z1 = normal(&mut rng);
            let z2 = rho * z1 + (1.0 - rho * rho).sqrt() * normal(&mut rng);
            fractions.insert(u.clone(), 0.05 + 0.5 * std_normal.cdf(z1));
            fractions.insert(v.clone(), 0.05 + 0.5 * std_normal.cdf(z2));
            edges.push((u, v));
            link += 1;
        }
    }
    let graph = SocialGraph::new(GraphKind::Friendship, friend_sets.keys().cloned(), edges, &friend_sets)?;
    let rho = if null { vec![0.0; cfg.rho.len()] } else { cfg.rho.clone() };
    Ok(PlantedCliques { graph, fractions, friend_sets, rho })
}

/// File names written by [`write_nation`], relative to the output directory.
pub mod files {
    pub const TWEETS: &str = "tweets.jsonl";
    pub const PROFILES: &str = "profiles.jsonl";
    pub const CENSUS: &str = "census.csv";
    pub const HEALTH: &str = "health.csv";
    pub const ZIP_COUNTY: &str = "zip_county.csv";
    pub const COUNTY_STATE: &str = "county_state.csv";
    pub const METRO_ZIPS: &str = "metro_zips.csv";
    pub const NAMES: &str = "names.csv";
    pub const LEXICON: &str = "lexicon.csv";
    pub const CATEGORIES: &str = "categories.csv";
    pub const PROMINENCE: &str = "prominence.csv";
    pub const FILTER_DIR: &str = "filters";
    pub const TRUTH: &str = "truth.json";
    pub const CONFIG: &str = "pipeline.toml";
    pub const ACTIVATION_DIR: &str = "activation";
    pub const CLIQUES_DIR: &str = "cliques";
    pub const CLIQUES_NULL_DIR: &str = "cliques_null";
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, s: &str) -> Result<()> {
    std::fs::write(p, s).map_err(|e| Error::io(p, e))
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    user_id: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct StateRow<'a> {
    user_id: &'a str,
    state_id: &'a str,
}

#[derive(Serialize)]
struct FractionRow<'a> {
    user_id: &'a str,
    fraction: f64,
}

/// Writes the nation's corpus files, `truth.json` and a pipeline config.
pub fn write_nation(nation: &Nation, dir: &Path) -> Result<()> {
    use files::*;
    create_dir(dir)?;
    corpus::write_jsonl(&dir.join(TWEETS), &nation.tweets)?;
    corpus::write_jsonl(&dir.join(PROFILES), &nation.profiles)?;
    corpus::write_csv(&dir.join(CENSUS), nation.census.values())?;
    corpus::write_csv(&dir.join(HEALTH), nation.health.values())?;
    corpus::write_geo(&nation.geo, &dir.join(ZIP_COUNTY), &dir.join(COUNTY_STATE), &dir.join(METRO_ZIPS))?;
    corpus::write_name_table(&dir.join(NAMES), &nation.names)?;
    let lex_path = dir.join(LEXICON);
    let out = std::fs::File::create(&lex_path).map_err(|e| Error::io(&lex_path, e))?;
    nation.lexicon.write_csv(out)?;
    write_text(&dir.join(CATEGORIES), BUILTIN_CATEGORIES)?;
    corpus::write_csv(&dir.join(PROMINENCE), nation.prominence.rows())?;
    create_dir(&dir.join(FILTER_DIR))?;
    for (name, body, _) in BUILTIN_FILTERS {
        write_text(&dir.join(FILTER_DIR).join(format!("{name}.txt")), body)?;
    }
    write_text(&dir.join(TRUTH), &(serde_json::to_string_pretty(&nation.truth)? + "\n"))?;
    Ok(())
}

pub fn write_activation(p: &PlantedActivation, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    p.graph.write_edges(&dir.join("edges.csv"))?;
    p.graph.write_friend_sets(&dir.join("friends.csv"), &BTreeMap::new())?;
    corpus::write_csv(&dir.join("scores.csv"), p.scores.iter().map(|(u, s)| ScoreRow { user_id: u, score: *s }))?;
    corpus::write_csv(&dir.join("states.csv"), p.states.iter().map(|(u, s)| StateRow { user_id: u, state_id: s }))
}

pub fn write_cliques(p: &PlantedCliques, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    p.graph.write_edges(&dir.join("edges.csv"))?;
    p.graph.write_friend_sets(&dir.join("friends.csv"), &p.friend_sets)?;
    corpus::write_csv(
        &dir.join("fractions.csv"),
        p.fractions.iter().map(|(u, f)| FractionRow { user_id: u, fraction: *f }),
    )
}

/// Generates and writes everything the `synth` subcommand produces.
pub fn generate(cfg: &SynthConfig, dir: &Path) -> Result<SynthTruth> {
    let nation = generate_nation(cfg)?;
    write_nation(&nation, dir)?;
    let pipeline = crate::pipeline::nation_config(cfg.seed, "run");
    write_text(&dir.join(files::CONFIG), &crate::pipeline::to_toml(&pipeline)?)?;
    if cfg.oracles {
        write_activation(&planted_activation(&cfg.activation, cfg.seed)?, &dir.join(files::ACTIVATION_DIR))?;
        write_cliques(&planted_cliques(&cfg.cliques, cfg.seed, false)?, &dir.join(files::CLIQUES_DIR))?;
        write_cliques(&planted_cliques(&cfg.cliques, cfg.seed, true)?, &dir.join(files::CLIQUES_NULL_DIR))?;
        for sub in [files::ACTIVATION_DIR, files::CLIQUES_DIR, files::CLIQUES_NULL_DIR] {
            let oracle = crate::pipeline::oracle_config(cfg.seed, sub == files::ACTIVATION_DIR);
            write_text(&dir.join(sub).join(files::CONFIG), &crate::pipeline::to_toml(&oracle)?)?;
        }
    }
    Ok(nation.truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { seed: 5, n_states: 6, n_counties: 12, users_per_county: 20, oracles: false, ..Default::default() }
    }

    #[test]
    fn too_few_counties() {
        let cfg = SynthConfig { n_states: 2, n_counties: 2, ..small() };
        assert!(matches!(generate_nation(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn planted_shares_exact() {
        let n = generate_nation(&small()).unwrap();
        assert_eq!(n.truth.n_users, 240);
        assert_eq!(n.profiles.len(), 240);
        assert_eq!(n.truth.gender_counts, [89, 77, 74]);
        assert_eq!(n.truth.urban_users, 65);
        assert_eq!(n.truth.counties.len(), 12);
        assert_eq!(n.truth.states.len(), 6);
    }

    #[test]
    fn same_seed_same_nation() {
        let a = generate_nation(&small()).unwrap();
        let b = generate_nation(&small()).unwrap();
        assert_eq!(a.tweets, b.tweets);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn clique_pairs_land_in_their_bins() {
        let cfg = CliqueGraphConfig { links_per_bin: 5, ..Default::default() };
        let p = planted_cliques(&cfg, 1, false).unwrap();
        let links = p.graph.links();
        assert_eq!(links.len(), 30);
        for (k, &(a, b)) in links.iter().enumerate() {
            let j = p.graph.friend_jaccard(a, b);
            assert_eq!(crate::network::bin_of(&cfg.bins, j), k / 5, "link {k} jaccard {j}");
        }
    }

    #[test]
    fn activation_graph_size() {
        let cfg = ActivationGraphConfig { n_nodes: 500, ..Default::default() };
        let p = planted_activation(&cfg, 2).unwrap();
        assert_eq!(p.graph.node_count(), 500);
        assert!(p.graph.edge_count() > 4000);
    }
}
