mod common;

use std::collections::BTreeMap;

use foodsignal::lexicon::{distinguishing_terms, match_foods, tokenize, FoodLexicon};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn build(seed: u64, n: usize, multi: usize) -> (FoodLexicon, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = common::random_lexicon(&mut rng, n, multi);
    let lex = FoodLexicon::from_csv_reader(common::lexicon_csv(&entries).as_bytes()).unwrap();
    (lex, entries.into_iter().map(|e| e.0).collect())
}

fn spans(text: &str, lex: &FoodLexicon) -> Vec<common::Span> {
    match_foods(text, lex).matches.iter().map(|m| (m.start, m.len, m.entry.surface.clone())).collect()
}

proptest! {
    #[test]
    fn agrees_with_brute_force(lex_seed in 0u64..500, text_seed in any::<u64>(), n in 5usize..40) {
        let (lex, surfaces) = build(lex_seed, n, n / 4);
        let mut rng = ChaCha8Rng::seed_from_u64(text_seed);
        let text = common::random_text(&mut rng, 30);
        let expected = common::brute_force_match(&tokenize(&text), &surfaces, 4);
        prop_assert_eq!(spans(&text, &lex), expected);
    }

    #[test]
    fn matches_never_overlap_and_are_longest(lex_seed in 0u64..500, text_seed in any::<u64>()) {
        let (lex, surfaces) = build(lex_seed, 30, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(text_seed);
        let text = common::random_text(&mut rng, 40);
        let tokens = tokenize(&text);
        let m = match_foods(&text, &lex);
        let mut end = 0;
        for x in &m.matches {
            prop_assert!(x.start >= end);
            end = x.start + x.len;
            // No longer entry starts at the same token.
            for len in x.len + 1..=4.min(tokens.len() - x.start) {
                let longer = tokens[x.start..x.start + len].join(" ");
                prop_assert!(!surfaces.contains(&longer), "{} is longer than {}", longer, x.entry.surface);
            }
        }
        prop_assert_eq!(m.avg_calories.is_some(), !m.matches.is_empty());
        prop_assert_eq!(&match_foods(&text, &lex), &m);
    }

    #[test]
    fn distinguishing_scores_bounded(counts in prop::collection::btree_map("[a-e]", 0u64..50, 1..5),
                                     extra in prop::collection::btree_map("[a-h]", 1u64..50, 1..8)) {
        let mut global: BTreeMap<String, u64> = extra.clone();
        for (k, v) in &counts {
            *global.entry(k.clone()).or_default() += v;
        }
        for (_, s) in distinguishing_terms(&counts, &global, 200).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
        let same = distinguishing_terms(&global, &global, 200).unwrap();
        prop_assert!(same.iter().all(|(_, s)| s.abs() < 1e-15));
    }
}

#[test]
fn shipped_sample_lexicon_loads() {
    let lex = FoodLexicon::from_csv_reader(foodsignal::synth::BUILTIN_LEXICON.as_bytes()).unwrap();
    assert!(lex.len() >= 60);
    assert!(lex.entries().iter().any(|e| e.tokens.len() > 1));
}
