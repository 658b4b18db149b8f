//! Correlation, significance, bootstrap and group-difference statistics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Default bootstrap iteration count.
pub const DEFAULT_BOOTSTRAP_ITERS: usize = 1000;
/// Resample attempts per bootstrap iteration before giving up.
const MAX_REDRAWS_PER_ITER: usize = 1000;

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample variance with the (n - 1) denominator.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    Some(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64)
}

/// Standard error of the mean: sample standard deviation over sqrt(n).
pub fn sem(values: &[f64]) -> Result<f64> {
    let var = sample_variance(values)
        .ok_or_else(|| Error::InvalidInput("standard error needs at least 2 values".into()))?;
    Ok(var.sqrt() / (values.len() as f64).sqrt())
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("correlation needs at least 2 pairs".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in correlation input".into()));
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance in correlation input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson over average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Two-sided p-value of a correlation via the t statistic with n - 2 d.f.
pub fn corr_pvalue(r: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("p-value needs n >= 3, got {n}")));
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::InvalidInput(format!("correlation {r} outside [-1, 1]")));
    }
    if r.abs() >= 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t = r.abs() * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((2.0 * dist.sf(t)).min(1.0))
}

/// Two-sided permutation p-value for Pearson's r, for small samples.
pub fn permutation_pvalue(x: &[f64], y: &[f64], iters: usize, seed: u64) -> Result<f64> {
    let observed = pearson(x, y)?.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = y.to_vec();
    let mut extreme = 0usize;
    for _ in 0..iters {
        shuffled.shuffle(&mut rng);
        if pearson(x, &shuffled)?.abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (iters + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub rho: f64,
    pub p_r: f64,
    pub p_rho: f64,
    pub n: usize,
}

/// Pearson and Spearman with t-approximation p-values.
pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    let r = pearson(x, y)?;
    let rho = spearman(x, y)?;
    Ok(CorrelationResult { r, rho, p_r: corr_pvalue(r, x.len())?, p_rho: corr_pvalue(rho, x.len())?, n: x.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Resamples on which the statistic was undefined and that were redrawn.
    pub redraws: usize,
    /// Set when the point estimate falls outside [lo, hi].
    pub degenerate: bool,
}

impl BootstrapCi {
    pub fn covers(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 100].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 100.0) / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Generator for one bootstrap iteration; independent of thread scheduling.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// Percentile bootstrap (2.5th / 97.5th) over case resamples of `data`.
///
/// `statistic` returns `None` when undefined on a resample; that resample is
/// redrawn from the same iteration stream and counted.
pub fn bootstrap_ci<T, F>(data: &[T], statistic: F, iters: usize, seed: u64) -> Result<BootstrapCi>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Option<f64> + Sync,
{
    if data.is_empty() {
        return Err(Error::InvalidInput("bootstrap of empty data".into()));
    }
    if iters == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one iteration".into()));
    }
    let point = statistic(data)
        .ok_or_else(|| Error::Degenerate("statistic undefined on the full sample".into()))?;
    let draws: Vec<Option<(f64, usize)>> = (0..iters as u64)
        .into_par_iter()
        .map(|it| {
            let mut rng = iteration_rng(seed, it);
            let mut sample = Vec::with_capacity(data.len());
            for redraw in 0..MAX_REDRAWS_PER_ITER {
                sample.clear();
                sample.extend((0..data.len()).map(|_| data[rng.random_range(0..data.len())].clone()));
                if let Some(v) = statistic(&sample).filter(|v| v.is_finite()) {
                    return Some((v, redraw));
                }
            }
            None
        })
        .collect();
    let mut values = Vec::with_capacity(iters);
    let mut redraws = 0;
    for d in draws {
        let (v, r) = d.ok_or_else(|| {
            Error::Degenerate("statistic undefined on every bootstrap resample".into())
        })?;
        values.push(v);
        redraws += r;
    }
    values.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&values, 2.5);
    let hi = percentile_sorted(&values, 97.5);
    Ok(BootstrapCi { point, lo, hi, iterations: iters, seed, redraws, degenerate: !(lo <= point && point <= hi) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorDifference {
    /// mean(values | flag) - mean(values | !flag)
    pub diff: f64,
    /// Two-sided Welch t-test p-value.
    pub p: f64,
    pub n_flagged: usize,
    pub n_other: usize,
}

pub fn factor_difference(values: &[f64], flags: &[bool]) -> Result<FactorDifference> {
    if values.len() != flags.len() {
        return Err(Error::InvalidInput("values and flags differ in length".into()));
    }
    let (on, off): (Vec<(f64, bool)>, Vec<(f64, bool)>) =
        values.iter().copied().zip(flags.iter().copied()).partition(|(_, f)| *f);
    let on: Vec<f64> = on.into_iter().map(|(v, _)| v).collect();
    let off: Vec<f64> = off.into_iter().map(|(v, _)| v).collect();
    if on.len() < 2 || off.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "each group needs at least 2 values (flagged {}, other {})",
            on.len(),
            off.len()
        )));
    }
    let (m1, m0) = (mean(&on).unwrap(), mean(&off).unwrap());
    let diff = m1 - m0;
    Ok(FactorDifference { diff, p: welch_p(&on, &off, diff)?, n_flagged: on.len(), n_other: off.len() })
}

fn welch_p(a: &[f64], b: &[f64], diff: f64) -> Result<f64> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a).unwrap() / na, sample_variance(b).unwrap() / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(if diff == 0.0 { 1.0 } else { 0.0 });
    }
    let t = diff.abs() / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((2.0 * dist.sf(t)).min(1.0))
}

/// One exportable statistic row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub statistic: String,
    pub value: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap(), -1.0);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 8.0, 27.0]).unwrap() - 1.0).abs() < 1e-15);
        // Ranks with ties: x -> [1.5, 1.5, 3], y -> [1.5, 1.5, 3].
        assert!((spearman(&[1.0, 1.0, 2.0], &[3.0, 3.0, 5.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[9.0, 7.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn pvalue_examples() {
        assert!((corr_pvalue(0.0, 51).unwrap() - 1.0).abs() < 1e-12);
        assert!(corr_pvalue(0.772, 51).unwrap() < 1e-4);
        let p = corr_pvalue(0.445, 51).unwrap();
        assert!(p < 0.01 && p >= 0.001, "p = {p}");
        assert_eq!(corr_pvalue(1.0, 10).unwrap(), 0.0);
        assert!(corr_pvalue(0.5, 2).is_err());
    }

    #[test]
    fn permutation_agrees_in_direction() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 2.0 + (v * 7.0).sin()).collect();
        assert!(permutation_pvalue(&x, &y, 500, 1).unwrap() < 0.01);
        let noise: Vec<f64> = x.iter().map(|v| (v * 12.9898).sin()).collect();
        assert!(permutation_pvalue(&x, &noise, 500, 1).unwrap() > 0.01);
    }

    #[test]
    fn sem_examples() {
        assert_eq!(sem(&[5.0, 5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert!((sem(&[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(sem(&[1.0]).is_err());
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        let data = vec![3.0; 50];
        let ci = bootstrap_ci(&data, |s: &[f64]| mean(s), 200, 7).unwrap();
        assert_eq!((ci.lo, ci.point, ci.hi), (3.0, 3.0, 3.0));

        let data: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = bootstrap_ci(&data, |s: &[f64]| mean(s), 300, 11).unwrap();
        let b = bootstrap_ci(&data, |s: &[f64]| mean(s), 300, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.lo <= a.point && a.point <= a.hi);
    }

    #[test]
    fn bootstrap_same_on_one_thread() {
        let data: Vec<f64> = (0..60).map(|i| (i as f64 * 1.3).cos()).collect();
        let multi = bootstrap_ci(&data, |s: &[f64]| mean(s), 400, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| bootstrap_ci(&data, |s: &[f64]| mean(s), 400, 5).unwrap());
        assert_eq!(multi, single);
    }

    #[test]
    fn bootstrap_redraws_undefined_resamples() {
        // Pearson on 4 pairs is undefined whenever a resample repeats one x value.
        let data = vec![(1.0, 2.0), (2.0, 1.0), (3.0, 4.0), (4.0, 3.0)];
        let stat = |s: &[(f64, f64)]| {
            let (x, y): (Vec<f64>, Vec<f64>) = s.iter().copied().unzip();
            pearson(&x, &y).ok()
        };
        let ci = bootstrap_ci(&data, stat, 200, 3).unwrap();
        assert!(ci.redraws > 0);
        assert!(bootstrap_ci(&[(1.0, 1.0)], stat, 10, 3).is_err());
    }

    #[test]
    fn factor_differences() {
        let values = [29.0, 31.0, 30.0, 30.5, 31.5, 31.0];
        let flags = [false, false, false, true, true, true];
        let fd = factor_difference(&values, &flags).unwrap();
        assert!((fd.diff - 1.0).abs() < 1e-12);
        assert_eq!((fd.n_flagged, fd.n_other), (3, 3));

        let same = factor_difference(&[1.0, 2.0, 3.0, 1.0, 2.0, 3.0], &flags).unwrap();
        assert_eq!(same.diff, 0.0);
        assert!((same.p - 1.0).abs() < 1e-12);

        // Cooking-row convention: flagged group lower by 1.3 points.
        let cooking = factor_difference(&[27.2, 27.8, 29.0, 28.6, 29.4, 28.1], &[true, true, false, false, false, true]).unwrap();
        assert!((cooking.diff - (-1.3)).abs() < 1e-12, "{}", cooking.diff);

        assert!(factor_difference(&[1.0, 2.0, 3.0], &[true, false, false]).is_err());
        assert!(factor_difference(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn welch_matches_reference() {
        // Reference value from an independent Welch computation (scipy.stats.ttest_ind, equal_var=False).
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
        let values: Vec<f64> = a.iter().chain(&b).copied().collect();
        let flags: Vec<bool> = (0..11).map(|i| i < 5).collect();
        let fd = factor_difference(&values, &flags).unwrap();
        assert!((fd.diff - (3.0 - 7.0)).abs() < 1e-12);
        assert!((fd.p - WELCH_REFERENCE_P).abs() < 1e-6, "p = {}", fd.p);
    }

    const WELCH_REFERENCE_P: f64 = 0.04928433820673049;
}
