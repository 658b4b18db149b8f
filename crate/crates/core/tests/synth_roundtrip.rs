use std::collections::BTreeMap;
use std::path::Path;

use foodsignal::corpus::{self, extract_hashtags, extract_mentions, Collection, IngestOptions, Schema};
use foodsignal::features::read_aggregates_csv;
use foodsignal::modeling::Target;
use foodsignal::pipeline::{out, run_stage, PipelineConfig, Stage};
use foodsignal::synth::{self, files, generate_nation, SynthConfig};

fn small(seed: u64) -> SynthConfig {
    SynthConfig { seed, n_states: 8, n_counties: 24, users_per_county: 40, oracles: false, ..Default::default() }
}

fn run_to_features(dir: &Path) -> PipelineConfig {
    let cfg = PipelineConfig::load(
        Some(&dir.join(files::CONFIG)),
        &[("thresholds.min_users".into(), toml::Value::Integer(1))],
    )
    .unwrap();
    for stage in [Stage::Ingest, Stage::Match, Stage::Features] {
        run_stage(stage, &cfg).unwrap();
    }
    cfg
}

#[test]
fn every_file_ingests_without_rejects() {
    let dir = tempfile::tempdir().unwrap();
    synth::generate(&small(4), dir.path()).unwrap();
    let opts = IngestOptions { max_reject_fraction: 0.0 };
    for (file, schema) in [
        (files::TWEETS, Schema::Tweets),
        (files::PROFILES, Schema::Profiles),
        (files::CENSUS, Schema::Census),
        (files::HEALTH, Schema::Health),
        (files::ZIP_COUNTY, Schema::ZipCounty),
        (files::COUNTY_STATE, Schema::CountyState),
        (files::METRO_ZIPS, Schema::MetroZips),
        (files::NAMES, Schema::NameGender),
    ] {
        let paths = [dir.path().join(file)];
        let first = corpus::ingest_corpus(&paths, schema, &opts).unwrap();
        assert!(first.report.rejects.is_empty(), "{file}: {:?}", first.report.rejects);
        assert_eq!(first.report.accepted, first.report.lines, "{file}");
        // Ingestion is idempotent.
        assert_eq!(corpus::ingest_corpus(&paths, schema, &opts).unwrap().records, first.records, "{file}");
    }
}

#[test]
fn tags_rederive_from_text_and_home_zips_match_truth() {
    let nation = generate_nation(&small(8)).unwrap();
    for t in &nation.tweets {
        assert_eq!(t.hashtags, extract_hashtags(&t.text));
        assert_eq!(t.mentions, extract_mentions(&t.text));
    }
    assert_eq!(corpus::assign_home_zip(&nation.tweets), nation.truth.modal_zips);
    let mut reversed = nation.tweets.clone();
    reversed.reverse();
    assert_eq!(corpus::assign_home_zip(&reversed), nation.truth.modal_zips);
}

#[test]
fn gender_table_reproduces_planted_split() {
    let mut nation = generate_nation(&small(2)).unwrap();
    let report = corpus::assign_gender(&mut nation.profiles, &nation.names);
    assert_eq!([report.female, report.male, report.none], nation.truth.gender_counts);
    let expected = 1.0 - SynthConfig::default().gender_split[2];
    assert!((report.coverage() - expected).abs() < 0.05, "coverage {}", report.coverage());
}

#[test]
fn county_weights_equal_planted_weights_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let truth = synth::generate(&small(6), dir.path()).unwrap();
    let cfg = run_to_features(dir.path());
    let (counties, _) = read_aggregates_csv(&cfg.output_dir.unwrap().join(out::COUNTY_AGGREGATES)).unwrap();
    assert_eq!(counties.len(), truth.counties.len());
    for c in &counties {
        let planted = &truth.counties[&c.region_id];
        let nonzero: BTreeMap<String, f64> =
            c.food_weights.iter().filter(|(_, w)| **w > 0.0).map(|(k, w)| (k.clone(), *w)).collect();
        let planted_nonzero: BTreeMap<String, f64> =
            planted.food_weights.iter().filter(|(_, w)| **w > 0.0).map(|(k, w)| (k.clone(), *w)).collect();
        assert_eq!(nonzero, planted_nonzero, "county {}", c.region_id);
    }
}

#[test]
fn noise_free_outcomes_recompute_from_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { noise_share: 0.0, ..small(13) };
    let truth = synth::generate(&cfg, dir.path()).unwrap();
    let pcfg = run_to_features(dir.path());
    let (counties, _) = read_aggregates_csv(&pcfg.output_dir.unwrap().join(out::COUNTY_AGGREGATES)).unwrap();
    assert_eq!(truth.obesity.sigma, 0.0);
    for c in &counties {
        let census = c.demographics.as_ref().unwrap();
        let outcome = c.outcome.as_ref().unwrap();
        for (target, actual) in [(Target::Obesity, outcome.obesity_rate), (Target::Diabetes, outcome.diabetes_rate)] {
            let expected = truth.model(target).expected(&c.food_weights, census);
            assert!((expected - actual).abs() < 1e-9, "{} {target:?}: {expected} vs {actual}", c.region_id);
        }
    }
}

fn friend_risk_correlation(homophily: f64) -> f64 {
    let nation = generate_nation(&SynthConfig { homophily, ..small(21) }).unwrap();
    let risk = &nation.truth.user_risk;
    let follows: BTreeMap<&str, &corpus::UserProfile> =
        nation.profiles.iter().map(|p| (p.user_id.as_str(), p)).collect();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for p in &nation.profiles {
        for f in &p.friend_ids {
            if f.as_str() > p.user_id.as_str() && follows.get(f.as_str()).is_some_and(|q| q.friend_ids.contains(&p.user_id)) {
                x.extend([risk[&p.user_id], risk[f]]);
                y.extend([risk[f], risk[&p.user_id]]);
            }
        }
    }
    foodsignal::stats::pearson(&x, &y).unwrap()
}

#[test]
fn homophily_controls_friend_assortativity() {
    let none = friend_risk_correlation(0.0);
    let strong = friend_risk_correlation(0.9);
    assert!(none.abs() < 0.1, "h=0 gives r={none}");
    assert!(strong > 0.5, "h=0.9 gives r={strong}");
}

#[test]
fn ingest_collections_are_keyed_by_id() {
    let dir = tempfile::tempdir().unwrap();
    synth::generate(&small(3), dir.path()).unwrap();
    let ing = corpus::ingest_corpus(&[dir.path().join(files::CENSUS)], Schema::Census, &IngestOptions::default()).unwrap();
    let Collection::Census(c) = ing.records else { panic!("wrong collection") };
    assert!(c.iter().all(|(k, v)| *k == v.region_id));
}
