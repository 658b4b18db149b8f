//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code it checks.
#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;

/// One match as (start token, length, surface).
pub type Span = (usize, usize, String);

/// Enumerates every (position, length <= max_len) window, keeps those that
/// equal a lexicon surface, then selects leftmost-longest without overlap.
pub fn brute_force_match(tokens: &[String], surfaces: &[String], max_len: usize) -> Vec<Span> {
    let mut windows: Vec<Span> = Vec::new();
    for start in 0..tokens.len() {
        for len in 1..=max_len.min(tokens.len() - start) {
            let joined = tokens[start..start + len].join(" ");
            if surfaces.iter().any(|s| *s == joined) {
                windows.push((start, len, joined));
            }
        }
    }
    let mut out = Vec::new();
    let mut next_free = 0;
    for start in 0..tokens.len() {
        if start < next_free {
            continue;
        }
        if let Some(best) = windows.iter().filter(|w| w.0 == start).max_by_key(|w| w.1) {
            next_free = start + best.1;
            out.push(best.clone());
        }
    }
    out
}

/// Word pool for random lexicons and texts. Food words overlap on purpose so
/// multi-token entries share prefixes with single-token ones.
pub const WORDS: [&str; 40] = [
    "pizza", "ice", "cream", "hot", "dog", "chicken", "wings", "fried", "rice", "green", "tea", "beer", "red",
    "wine", "apple", "pie", "french", "fries", "cheese", "cake", "salad", "soup", "taco", "bagel", "sushi",
    "donut", "coffee", "milk", "shake", "steak", "the", "a", "love", "with", "and", "some", "today", "lunch",
    "at", "my",
];

/// Random lexicon of `n` distinct surfaces, `multi` of them with 2 to 4 tokens.
pub fn random_lexicon<R: Rng>(rng: &mut R, n: usize, multi: usize) -> Vec<(String, f64, &'static str)> {
    let classes = ["solid", "beverage", "alcoholic"];
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let len = if out.len() < multi { rng.random_range(2..=4) } else { 1 };
        let surface = (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ");
        if seen.insert(surface.clone()) {
            let kcal = rng.random_range(0..900) as f64;
            out.push((surface, kcal, *classes.choose(rng).unwrap()));
        }
    }
    out
}

pub fn lexicon_csv(entries: &[(String, f64, &str)]) -> String {
    let mut s = String::from("surface,calories,class\n");
    for (surface, kcal, class) in entries {
        s.push_str(&format!("{surface},{kcal},{class}\n"));
    }
    s
}

/// Random text of lowercase pool words with occasional punctuation.
pub fn random_text<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.random_range(0..=max_words);
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        let mut w = WORDS.choose(rng).unwrap().to_string();
        match rng.random_range(0..10) {
            0 => w.push(','),
            1 => w.push('!'),
            2 => w = w.to_uppercase(),
            _ => {}
        }
        words.push(w);
    }
    words.join(" ")
}

/// Pearson r from the raw-sum textbook formula.
pub fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Spearman rho from 1 - 6 sum d^2 / (n (n^2 - 1)); valid only without ties.
pub fn textbook_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = (pos + 1) as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Ridge on z-scored columns (sample sd) with a centred target, solved by
/// plain gradient descent on 0.5 |y - Z b|^2 + 0.5 lambda |b|^2.
/// Returns the standardized coefficients.
pub fn gd_ridge(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let n = rows.len();
    let p = rows[0].len();
    let mut z = vec![vec![0.0; p]; n];
    for j in 0..p {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let sd = (rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        for i in 0..n {
            z[i][j] = (rows[i][j] - m) / sd;
        }
    }
    let ym = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    // Step 1/L with L bounded by the trace of Z'Z plus lambda.
    let l = z.iter().flatten().map(|v| v * v).sum::<f64>() + lambda;
    let step = 1.0 / l;
    let mut b = vec![0.0; p];
    for _ in 0..2_000_000 {
        let resid: Vec<f64> = (0..n).map(|i| (0..p).map(|j| z[i][j] * b[j]).sum::<f64>() - yc[i]).collect();
        let grad: Vec<f64> = (0..p).map(|j| (0..n).map(|i| z[i][j] * resid[i]).sum::<f64>() + lambda * b[j]).collect();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        for j in 0..p {
            b[j] -= step * grad[j];
        }
        if gnorm < 1e-11 {
            break;
        }
    }
    b
}

/// Relative distance for comparing magnitudes that can be large.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
