//! Ridge regression, state-grouped cross-validation and risk scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::HealthOutcome;
use crate::error::{Error, Result};
use crate::features::{
    AggregateColumns, RegionAggregate, UserFeatures, AVG_CAL_COLUMN, DEMOG_COLUMNS, STAT_COLUMNS,
};
use crate::stats;

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_FOLDS: usize = 5;
pub const LAMBDA_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Obesity,
    Diabetes,
}

impl Target {
    pub const BOTH: [Target; 2] = [Target::Obesity, Target::Diabetes];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Obesity => "obesity",
            Target::Diabetes => "diabetes",
        }
    }

    pub fn of(self, h: &HealthOutcome) -> f64 {
        match self {
            Target::Obesity => h.obesity_rate,
            Target::Diabetes => h.diabetes_rate,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "obesity" => Ok(Target::Obesity),
            "diabetes" => Ok(Target::Diabetes),
            other => Err(Error::Config(format!("unknown target {other:?} (expected obesity or diabetes)"))),
        }
    }
}

/// Numeric design with row ids, column names, state groups and a target.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: Vec<String>,
    columns: Vec<String>,
    values: DMatrix<f64>,
    groups: Vec<String>,
    target: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(
        rows: Vec<String>,
        columns: Vec<String>,
        values: DMatrix<f64>,
        groups: Vec<String>,
        target: Vec<f64>,
    ) -> Result<Self> {
        let n = rows.len();
        if values.nrows() != n || groups.len() != n || target.len() != n {
            return Err(Error::InvalidInput(format!(
                "design has {n} row ids, {} value rows, {} groups and {} targets",
                values.nrows(),
                groups.len(),
                target.len()
            )));
        }
        if values.ncols() != columns.len() {
            return Err(Error::InvalidInput(format!(
                "design has {} columns but {} names",
                values.ncols(),
                columns.len()
            )));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = columns.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate column {dup}")));
        }
        if values.iter().chain(&target).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design contains missing or non-finite values".into()));
        }
        Ok(DesignMatrix { rows, columns, values, groups, target })
    }

    /// Builds from row-major data.
    pub fn from_rows(
        rows: Vec<String>,
        columns: Vec<String>,
        data: &[Vec<f64>],
        groups: Vec<String>,
        target: Vec<f64>,
    ) -> Result<Self> {
        let p = columns.len();
        if let Some(bad) = data.iter().position(|r| r.len() != p) {
            return Err(Error::InvalidInput(format!("row {bad} has {} values, expected {p}", data[bad].len())));
        }
        let values = DMatrix::from_fn(data.len(), p, |i, j| data[i][j]);
        Self::new(rows, columns, values, groups, target)
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            columns: self.columns.clone(),
            values: self.values.select_rows(idx),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
        }
    }

    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<DesignMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n.as_ref())
                    .ok_or_else(|| Error::InvalidInput(format!("column {} not in design", n.as_ref())))
            })
            .collect::<Result<_>>()?;
        Ok(DesignMatrix {
            rows: self.rows.clone(),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self.values.select_columns(&idx),
            groups: self.groups.clone(),
            target: self.target.clone(),
        })
    }

    /// Same design with rows ordered by row id.
    pub fn sorted_by_row_id(&self) -> DesignMatrix {
        let mut idx: Vec<usize> = (0..self.nrows()).collect();
        idx.sort_by(|&a, &b| self.rows[a].cmp(&self.rows[b]));
        self.select_rows(&idx)
    }
}

/// Region design over `columns`. Regions lacking a column value or an outcome
/// are left out with a warning.
pub fn design_from_regions<S: AsRef<str>>(
    aggs: &[RegionAggregate],
    columns: &[S],
    target: Target,
) -> Result<DesignMatrix> {
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut groups = Vec::new();
    let mut y = Vec::new();
    let mut dropped = 0usize;
    for a in aggs {
        let row: Option<Vec<f64>> = columns.iter().map(|c| a.column_value(c.as_ref())).collect();
        match (row, &a.outcome) {
            (Some(row), Some(out)) => {
                ids.push(a.region_id.clone());
                data.push(row);
                groups.push(a.state_id.clone());
                y.push(target.of(out));
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        warn!("{dropped} regions lack a model column or outcome and were left out");
    }
    DesignMatrix::from_rows(ids, columns.iter().map(|c| c.as_ref().to_string()).collect(), &data, groups, y)
}

/// User design: each user is labelled with the rate of their county.
pub fn design_from_users<S: AsRef<str>>(
    users: &[UserFeatures],
    county_outcomes: &BTreeMap<String, HealthOutcome>,
    columns: &[S],
    target: Target,
) -> Result<DesignMatrix> {
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut groups = Vec::new();
    let mut y = Vec::new();
    for u in users {
        let Some(out) = county_outcomes.get(&u.county_id) else { continue };
        let row: Option<Vec<f64>> = columns.iter().map(|c| u.column_value(c.as_ref())).collect();
        if let Some(row) = row {
            ids.push(u.user_id.clone());
            data.push(row);
            groups.push(u.state_id.clone());
            y.push(target.of(out));
        }
    }
    DesignMatrix::from_rows(ids, columns.iter().map(|c| c.as_ref().to_string()).collect(), &data, groups, y)
}

/// Fitted ridge model. `coefficients` are in original column units;
/// `standardized` are the penalized coefficients on z-scored columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standardized: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Constant training columns; their coefficients are zero.
    pub dropped: Vec<String>,
}

impl RidgeModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    /// Predictions for a design whose columns match the model's.
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        if x.columns() != self.columns.as_slice() {
            return Err(Error::InvalidInput("design columns differ from model columns".into()));
        }
        let beta = DVector::from_column_slice(&self.coefficients);
        let out = x.values() * beta;
        Ok(out.iter().map(|v| v + self.intercept).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: RidgeModel = serde_json::from_str(s)?;
        let p = m.columns.len();
        if m.coefficients.len() != p || m.standardized.len() != p || m.means.len() != p || m.scales.len() != p {
            return Err(Error::InvalidInput("model vectors disagree with the column count".into()));
        }
        if m.scales.iter().any(|s| !(*s > 0.0)) || !(m.lambda >= 0.0) {
            return Err(Error::InvalidInput("model scales must be positive and lambda non-negative".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Ridge regression on z-scored columns with an unpenalized intercept.
///
/// Solves the primal normal equations when columns do not outnumber rows and
/// the equivalent dual system otherwise. Both are Cholesky solves.
pub fn ridge_fit(x: &DesignMatrix, lambda: f64) -> Result<RidgeModel> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!("ridge needs at least 2 rows, got {n}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let p = x.ncols();
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    let mut kept = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    for j in 0..p {
        let col: Vec<f64> = x.values().column(j).iter().copied().collect();
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        means[j] = m;
        let sd = var.sqrt();
        if sd > 1e-12 * m.abs().max(1.0) {
            scales[j] = sd;
            kept.push(j);
        } else {
            dropped.push(x.columns()[j].clone());
        }
    }
    if !dropped.is_empty() {
        warn!("dropping {} constant column(s): {}", dropped.len(), dropped.join(", "));
    }

    let y_mean = x.target().iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, x.target().iter().map(|v| v - y_mean));
    let q = kept.len();
    let z = DMatrix::from_fn(n, q, |i, k| {
        let j = kept[k];
        (x.values()[(i, j)] - means[j]) / scales[j]
    });

    let beta_kept = if q == 0 {
        DVector::zeros(0)
    } else if q <= n {
        let mut a = z.tr_mul(&z);
        for d in 0..q {
            a[(d, d)] += lambda;
        }
        solve_spd(a, &z.tr_mul(&yc), lambda)?
    } else {
        let mut g = &z * z.transpose();
        for d in 0..n {
            g[(d, d)] += lambda;
        }
        let alpha = solve_spd(g, &yc, lambda)?;
        z.tr_mul(&alpha)
    };

    let mut standardized = vec![0.0; p];
    for (k, &j) in kept.iter().enumerate() {
        standardized[j] = beta_kept[k];
    }
    let coefficients: Vec<f64> = (0..p).map(|j| standardized[j] / scales[j]).collect();
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(RidgeModel {
        columns: x.columns().to_vec(),
        coefficients,
        standardized,
        intercept,
        lambda,
        means,
        scales,
        dropped,
    })
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let max_diag = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let chol = a.cholesky().ok_or(Error::Singular { lambda })?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-10 * max_diag {
        return Err(Error::Singular { lambda });
    }
    Ok(chol.solve(b))
}

/// Fold index per row. States are shuffled by `seed` and dealt round-robin,
/// so every row of a state lands in the same fold.
pub fn grouped_folds<S: AsRef<str>>(groups: &[S], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    let states: BTreeSet<&str> = groups.iter().map(AsRef::as_ref).collect();
    if states.len() < k {
        return Err(Error::InvalidInput(format!("{} distinct states cannot fill {k} folds", states.len())));
    }
    let mut order: Vec<&str> = states.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, s)| (*s, i % k)).collect();
    Ok(groups.iter().map(|g| fold_of[g.as_ref()]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Demog,
    Liwc,
    Calories,
    Food,
    LiwcDemog,
    FoodDemog,
    HashtagBaseline,
    TweetStatsBaseline,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Demog,
        ModelKind::Liwc,
        ModelKind::Calories,
        ModelKind::Food,
        ModelKind::LiwcDemog,
        ModelKind::FoodDemog,
        ModelKind::HashtagBaseline,
        ModelKind::TweetStatsBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Demog => "Demog",
            ModelKind::Liwc => "Liwc",
            ModelKind::Calories => "Calories",
            ModelKind::Food => "Food",
            ModelKind::LiwcDemog => "Liwc-Demog",
            ModelKind::FoodDemog => "Food-Demog",
            ModelKind::HashtagBaseline => "HashtagBaseline",
            ModelKind::TweetStatsBaseline => "TweetStatsBaseline",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

/// A named model and the columns it draws from an aggregate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec { kind }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn columns(&self, available: &AggregateColumns) -> Result<Vec<String>> {
        let demog = || DEMOG_COLUMNS.iter().map(|c| c.to_string());
        let foods = || available.foods.iter().map(|f| format!("food:{f}"));
        let cats = || available.categories.iter().map(|c| format!("category:{c}"));
        let cols: Vec<String> = match self.kind {
            ModelKind::Demog => demog().collect(),
            ModelKind::Liwc => cats().collect(),
            ModelKind::Calories => vec![AVG_CAL_COLUMN.to_string()],
            ModelKind::Food => foods().collect(),
            ModelKind::LiwcDemog => cats().chain(demog()).collect(),
            ModelKind::FoodDemog => foods().chain(demog()).collect(),
            ModelKind::HashtagBaseline => available.hashtags.iter().map(|h| format!("hashtag:{h}")).collect(),
            ModelKind::TweetStatsBaseline => STAT_COLUMNS.iter().map(|c| c.to_string()).collect(),
        };
        if cols.is_empty() {
            return Err(Error::InvalidInput(format!("model {} selects no columns", self.name())));
        }
        Ok(cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub k: usize,
    pub lambda: f64,
    /// When set, λ is chosen per fold by inner grouped CV on the training rows.
    pub lambda_grid: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions { k: DEFAULT_FOLDS, lambda: DEFAULT_LAMBDA, lambda_grid: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model: String,
    pub target: String,
    pub fold_r: Vec<f64>,
    pub mean_r: f64,
    pub sem: f64,
    pub fold_lambda: Vec<f64>,
    pub n_rows: usize,
    pub n_columns: usize,
}

/// Held-out Pearson r per state-exclusive fold.
///
/// Rows are put in row-id order first, so the result does not depend on the
/// order rows arrive in. `x` must contain every column the spec selects;
/// `target_name` is only copied into the result.
pub fn cross_validate(
    spec: &ModelSpec,
    x: &DesignMatrix,
    available: &AggregateColumns,
    target_name: &str,
    opts: &CvOptions,
) -> Result<EvalResult> {
    let cols = spec.columns(available)?;
    let design = x.select_columns(&cols)?.sorted_by_row_id();
    let (fold_r, fold_lambda) = cv_design(&design, opts)?;
    Ok(EvalResult {
        model: spec.name().to_string(),
        target: target_name.to_string(),
        mean_r: fold_r.iter().sum::<f64>() / fold_r.len() as f64,
        sem: stats::sem(&fold_r)?,
        fold_r,
        fold_lambda,
        n_rows: design.nrows(),
        n_columns: design.ncols(),
    })
}

/// Per-fold held-out r and chosen λ on a design already restricted to model columns.
pub fn cv_design(design: &DesignMatrix, opts: &CvOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let folds = grouped_folds(design.groups(), opts.k, opts.seed)?;
    let results: Vec<Result<(f64, f64)>> = (0..opts.k)
        .into_par_iter()
        .map(|f| {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..design.nrows()).partition(|&i| folds[i] != f);
            if test.len() < 3 {
                return Err(Error::InvalidInput(format!(
                    "fold {f} has {} test rows; correlation needs at least 3",
                    test.len()
                )));
            }
            let train_x = design.select_rows(&train);
            let lambda = match &opts.lambda_grid {
                Some(grid) => select_lambda(&train_x, grid, opts.k, opts.seed)?,
                None => opts.lambda,
            };
            let model = ridge_fit(&train_x, lambda)?;
            let test_x = design.select_rows(&test);
            let pred = model.predict(&test_x)?;
            Ok((held_out_r(&pred, test_x.target(), f), lambda))
        })
        .collect();
    let mut rs = Vec::with_capacity(opts.k);
    let mut lambdas = Vec::with_capacity(opts.k);
    for r in results {
        let (r, l) = r?;
        rs.push(r);
        lambdas.push(l);
    }
    Ok((rs, lambdas))
}

fn held_out_r(pred: &[f64], actual: &[f64], fold: usize) -> f64 {
    match stats::pearson(pred, actual) {
        Ok(r) => r,
        Err(e) => {
            warn!("fold {fold}: {e}; held-out r taken as 0");
            0.0
        }
    }
}

/// λ from `grid` maximizing pooled out-of-fold r on `train`; ties go to the larger λ.
fn select_lambda(train: &DesignMatrix, grid: &[f64], k: usize, seed: u64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    let n_states = train.groups().iter().collect::<BTreeSet<_>>().len();
    let inner_k = k.min(n_states);
    if inner_k < 2 {
        return Ok(grid[grid.len() / 2]);
    }
    let folds = grouped_folds(train.groups(), inner_k, seed.wrapping_add(1))?;
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &lambda in grid {
        let mut pred = vec![0.0; train.nrows()];
        for f in 0..inner_k {
            let (tr, te): (Vec<usize>, Vec<usize>) = (0..train.nrows()).partition(|&i| folds[i] != f);
            let m = ridge_fit(&train.select_rows(&tr), lambda)?;
            for (&i, v) in te.iter().zip(m.predict(&train.select_rows(&te))?) {
                pred[i] = v;
            }
        }
        let r = stats::pearson(&pred, train.target()).unwrap_or(0.0);
        if r >= best.0 {
            best = (r, lambda);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserScore {
    pub user_id: String,
    pub score: f64,
    /// No model column was active for this user; the score is the intercept.
    pub intercept_only: bool,
}

/// Applies a model trained without demographic columns to user vectors.
///
/// A column a user has no value for (e.g. avg_cal without food tweets)
/// takes the training mean, so it does not move the score.
pub fn score_users(model: &RidgeModel, users: &[UserFeatures]) -> Result<Vec<UserScore>> {
    if let Some(c) = model.columns.iter().find(|c| c.starts_with("demog:")) {
        return Err(Error::InvalidInput(format!("user scoring excludes demographic columns, model has {c}")));
    }
    Ok(users
        .iter()
        .map(|u| {
            let mut any = false;
            let mut score = model.intercept;
            for (j, col) in model.columns.iter().enumerate() {
                let v = u.column_value(col).unwrap_or(model.means[j]);
                if u.column_value(col).is_some_and(|v| v != 0.0) {
                    any = true;
                }
                score += model.coefficients[j] * v;
            }
            UserScore { user_id: u.user_id.clone(), score: if any { score } else { model.intercept }, intercept_only: !any }
        })
        .collect())
}
