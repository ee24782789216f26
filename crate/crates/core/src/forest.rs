//! Random-forest regression surrogates.
//!
//! Trees are grown greedily by minimising the summed squared error of the two
//! children (variance reduction). Thresholds are midpoints between consecutive
//! distinct values. A forest predicts the unweighted mean of its trees.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ExperienceDataset;
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Number of split candidates examined at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaxFeatures {
    /// Every input variable (`'auto'`).
    #[serde(rename = "auto")]
    All,
    /// `ceil(sqrt(n))` variables.
    #[serde(rename = "sqrt")]
    Sqrt,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => ((n_features as f64).sqrt().ceil() as usize).clamp(1, n_features),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" | "all" => Some(MaxFeatures::All),
            "sqrt" => Some(MaxFeatures::Sqrt),
            _ => None,
        }
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaxFeatures::All => "auto",
            MaxFeatures::Sqrt => "sqrt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestHyperParams {
    pub bootstrap: bool,
    pub n_estimators: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
}

impl Default for ForestHyperParams {
    fn default() -> Self {
        ForestHyperParams {
            bootstrap: true,
            n_estimators: 100,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_depth: None,
            max_features: MaxFeatures::All,
        }
    }
}

impl ForestHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators < 1 {
            return Err(Error::InvalidArgument("n_estimators must be >= 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidArgument(
                "min_samples_leaf must be >= 1".into(),
            ));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidArgument(
                "min_samples_split must be >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Column names matching [`Self::csv_fields`].
    pub const CSV_COLUMNS: [&'static str; 6] = [
        "bootstrap",
        "n_estimators",
        "min_samples_leaf",
        "min_samples_split",
        "max_depth",
        "max_features",
    ];

    pub fn csv_fields(&self) -> [String; 6] {
        [
            self.bootstrap.to_string(),
            self.n_estimators.to_string(),
            self.min_samples_leaf.to_string(),
            self.min_samples_split.to_string(),
            self.max_depth
                .map_or_else(|| "None".to_string(), |d| d.to_string()),
            self.max_features.to_string(),
        ]
    }
}

/// Value lists per hyperparameter; expansion is their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub bootstrap: Vec<bool>,
    pub n_estimators: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub max_features: Vec<MaxFeatures>,
}

impl ParamGrid {
    /// The tuning grid used for the ozonation surrogates.
    pub fn table1() -> Self {
        ParamGrid {
            bootstrap: vec![true, false],
            n_estimators: (1..=10).map(|k| k * 200).collect(),
            min_samples_leaf: vec![1, 2, 4],
            min_samples_split: vec![2, 5, 10],
            max_depth: (1..=10).map(|k| Some(k * 10)).chain([None]).collect(),
            max_features: vec![MaxFeatures::All, MaxFeatures::Sqrt],
        }
    }

    pub fn single(hp: ForestHyperParams) -> Self {
        ParamGrid {
            bootstrap: vec![hp.bootstrap],
            n_estimators: vec![hp.n_estimators],
            min_samples_leaf: vec![hp.min_samples_leaf],
            min_samples_split: vec![hp.min_samples_split],
            max_depth: vec![hp.max_depth],
            max_features: vec![hp.max_features],
        }
    }

    /// Expands in declaration order, `max_features` varying fastest.
    pub fn expand(&self) -> Vec<ForestHyperParams> {
        let mut out = Vec::new();
        for &bootstrap in &self.bootstrap {
            for &n_estimators in &self.n_estimators {
                for &min_samples_leaf in &self.min_samples_leaf {
                    for &min_samples_split in &self.min_samples_split {
                        for &max_depth in &self.max_depth {
                            for &max_features in &self.max_features {
                                out.push(ForestHyperParams {
                                    bootstrap,
                                    n_estimators,
                                    min_samples_leaf,
                                    min_samples_split,
                                    max_depth,
                                    max_features,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Parses `key = v1, v2, …` lines; `#` starts a comment. Keys left out
    /// keep their default single value.
    ///
    /// ```text
    /// bootstrap = true, false
    /// n_estimators = 200, 400
    /// max_depth = 10, None
    /// max_features = auto, sqrt
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut grid = ParamGrid::single(ForestHyperParams::default());
        let bad = |key: &str, v: &str| Error::Format {
            what: "parameter grid",
            message: format!("{key}: cannot parse {v:?}"),
        };
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, values) = line.split_once('=').ok_or_else(|| Error::Format {
                what: "parameter grid",
                message: format!("expected key = values, got {line:?}"),
            })?;
            let key = key.trim();
            let values: Vec<&str> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                return Err(bad(key, ""));
            }
            let ints = |vals: &[&str]| -> Result<Vec<usize>> {
                vals.iter()
                    .map(|v| v.parse().map_err(|_| bad(key, v)))
                    .collect()
            };
            match key {
                "bootstrap" => {
                    grid.bootstrap = values
                        .iter()
                        .map(|v| match v.to_ascii_lowercase().as_str() {
                            "true" => Ok(true),
                            "false" => Ok(false),
                            _ => Err(bad(key, v)),
                        })
                        .collect::<Result<_>>()?
                }
                "n_estimators" => grid.n_estimators = ints(&values)?,
                "min_samples_leaf" => grid.min_samples_leaf = ints(&values)?,
                "min_samples_split" => grid.min_samples_split = ints(&values)?,
                "max_depth" => {
                    grid.max_depth = values
                        .iter()
                        .map(|v| {
                            if v.eq_ignore_ascii_case("none") {
                                Ok(None)
                            } else {
                                v.parse().map(Some).map_err(|_| bad(key, v))
                            }
                        })
                        .collect::<Result<_>>()?
                }
                "max_features" => {
                    grid.max_features = values
                        .iter()
                        .map(|v| MaxFeatures::parse(v).ok_or_else(|| bad(key, v)))
                        .collect::<Result<_>>()?
                }
                other => {
                    return Err(Error::Format {
                        what: "parameter grid",
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        for hp in grid.expand() {
            hp.validate()?;
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Index of the leaf that `x` is routed to.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[i]
        {
            i = if x[feature] <= threshold { left } else { right };
        }
        i
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    hp: &'a ForestHyperParams,
    n_features: usize,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    cost: f64,
    feature: usize,
    threshold: f64,
    n_left: usize,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut seed::Rng) -> usize {
        let id = self.nodes.len();
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        self.nodes.push(TreeNode::Leaf { value: mean });

        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        let depth_reached = self.hp.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || n < self.hp.min_samples_split {
            return id;
        }

        let Some(best) = self.best_split(idx, rng) else {
            return id;
        };
        idx.sort_by(|&a, &b| {
            self.x[a][best.feature]
                .total_cmp(&self.x[b][best.feature])
                .then(a.cmp(&b))
        });
        let (l, r) = idx.split_at_mut(best.n_left);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Candidate features are the first `max_features` non-constant ones of a
    /// seeded permutation, evaluated in index order; the first minimum wins,
    /// with costs equal to within rounding treated as ties.
    fn best_split(&self, idx: &[usize], rng: &mut seed::Rng) -> Option<BestSplit> {
        let want = self.hp.max_features.count(self.n_features);
        let mut candidates: Vec<usize> = if want >= self.n_features {
            (0..self.n_features).collect()
        } else {
            let mut perm: Vec<usize> = (0..self.n_features).collect();
            perm.shuffle(rng);
            let mut chosen = Vec::with_capacity(want);
            for f in perm {
                if chosen.len() == want {
                    break;
                }
                let v0 = self.x[idx[0]][f];
                if idx.iter().any(|&i| self.x[i][f] != v0) {
                    chosen.push(f);
                }
            }
            chosen
        };
        candidates.sort_unstable();

        let leaf = self.hp.min_samples_leaf;
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let total_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
        // costs of the same partition reached through different features can
        // differ in the last bits; a later candidate must win by more than that
        let tie = 1e-10 * (total_sq - total * total / n as f64).abs();
        let mut order = idx.to_vec();
        let mut best: Option<BestSplit> = None;

        for f in candidates {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut sum_l = 0.0;
            let mut sq_l = 0.0;
            for k in 1..n {
                let yi = self.y[order[k - 1]];
                sum_l += yi;
                sq_l += yi * yi;
                let lo = self.x[order[k - 1]][f];
                let hi = self.x[order[k]][f];
                if lo == hi || k < leaf || n - k < leaf {
                    continue;
                }
                let nl = k as f64;
                let nr = (n - k) as f64;
                let sum_r = total - sum_l;
                let sq_r = total_sq - sq_l;
                let cost = (sq_l - sum_l * sum_l / nl) + (sq_r - sum_r * sum_r / nr);
                if best.as_ref().is_none_or(|b| cost < b.cost - tie) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        cost,
                        feature: f,
                        threshold,
                        n_left: k,
                    });
                }
            }
        }
        best
    }
}

/// Grows one regression tree on `(x, y)`.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], hp: &ForestHyperParams, seed: u64) -> Result<Tree> {
    let mut rng = seed::rng(seed);
    let mut idx: Vec<usize> = (0..x.len()).collect();
    fit_tree_on(x, y, &mut idx, hp, &mut rng)
}

fn fit_tree_on(
    x: &[Vec<f64>],
    y: &[f64],
    idx: &mut [usize],
    hp: &ForestHyperParams,
    rng: &mut seed::Rng,
) -> Result<Tree> {
    if idx.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if x.len() != y.len() {
        return Err(Error::Arity {
            what: "targets",
            expected: x.len(),
            got: y.len(),
        });
    }
    hp.validate()?;
    let n_features = x[idx[0]].len();
    if n_features == 0 || x.iter().any(|r| r.len() != n_features) {
        return Err(Error::InvalidArgument(
            "ragged or empty feature rows".into(),
        ));
    }
    let mut grower = Grower {
        x,
        y,
        hp,
        n_features,
        nodes: Vec::new(),
    };
    grower.grow(idx, 0, rng);
    Ok(Tree {
        nodes: grower.nodes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestModel {
    pub hyperparams: ForestHyperParams,
    pub criterion: String,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl RandomForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Arity {
                what: "forest inputs",
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Fits `n_estimators` trees. Tree `k` uses its own generator seeded from
/// `(seed, k)`, so the model does not depend on thread scheduling.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[f64],
    hp: &ForestHyperParams,
    criterion: &str,
    seed: u64,
) -> Result<RandomForestModel> {
    if x.is_empty() {
        return Err(Error::Empty("training set"));
    }
    hp.validate()?;
    let trees = (0..hp.n_estimators)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::derived_rng(seed, stream::TREE, k as u64);
            let mut idx: Vec<usize> = if hp.bootstrap {
                (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            fit_tree_on(x, y, &mut idx, hp, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForestModel {
        hyperparams: *hp,
        criterion: criterion.to_string(),
        n_features: x[0].len(),
        trees,
    })
}

/// Convenience wrapper fitting one criterion column of a dataset.
pub fn fit_forest_on(
    data: &ExperienceDataset,
    criterion: usize,
    hp: &ForestHyperParams,
    seed: u64,
) -> Result<RandomForestModel> {
    fit_forest(
        &data.inputs(),
        &data.targets(criterion),
        hp,
        &data.schema.criteria[criterion],
        seed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub r2: f64,
    pub mae: f64,
    /// Percent; `None` when every target is zero.
    pub mape: Option<f64>,
}

/// R², MAE and MAPE of predictions against targets. Zero targets are left
/// out of MAPE.
pub fn metrics(y: &[f64], y_hat: &[f64]) -> Result<Metrics> {
    if y.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if y.len() != y_hat.len() {
        return Err(Error::Arity {
            what: "predictions",
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantTargets);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    let mae = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let pct: Vec<f64> = y
        .iter()
        .zip(y_hat)
        .filter(|(a, _)| **a != 0.0)
        .map(|(a, b)| ((a - b) / a).abs())
        .collect();
    let mape = (!pct.is_empty()).then(|| 100.0 * pct.iter().sum::<f64>() / pct.len() as f64);
    Ok(Metrics {
        r2: 1.0 - ss_res / ss_tot,
        mae,
        mape,
    })
}

pub fn evaluate(model: &RandomForestModel, x: &[Vec<f64>], y: &[f64]) -> Result<Metrics> {
    let y_hat = x
        .iter()
        .map(|r| model.predict(r))
        .collect::<Result<Vec<_>>>()?;
    metrics(y, &y_hat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best: ForestHyperParams,
    pub table: Vec<(ForestHyperParams, f64)>,
}

/// K-fold grid search minimising mean held-out MSE. Fold membership comes
/// from a seeded shuffle; every candidate sees the same folds and forest
/// seeds. Ties go to the earlier grid entry.
pub fn grid_search_cv(
    x: &[Vec<f64>],
    y: &[f64],
    grid: &[ForestHyperParams],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::Empty("parameter grid"));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument(
            "at least 2 folds are required".into(),
        ));
    }
    if x.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} rows cannot fill {folds} folds",
            x.len()
        )));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut seed::derived_rng(seed, stream::FOLDS, 0));
    let mut fold_of = vec![0usize; x.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let fold_sets: Vec<_> = (0..folds)
        .map(|f| {
            let mut tx = Vec::new();
            let mut ty = Vec::new();
            let mut vx = Vec::new();
            let mut vy = Vec::new();
            for i in 0..x.len() {
                if fold_of[i] == f {
                    vx.push(x[i].clone());
                    vy.push(y[i]);
                } else {
                    tx.push(x[i].clone());
                    ty.push(y[i]);
                }
            }
            (tx, ty, vx, vy)
        })
        .collect();

    let table = grid
        .par_iter()
        .map(|hp| {
            let mut total = 0.0;
            for (f, (tx, ty, vx, vy)) in fold_sets.iter().enumerate() {
                let model =
                    fit_forest(tx, ty, hp, "", seed::derive(seed, stream::FOREST, f as u64))?;
                let mse = vx
                    .iter()
                    .zip(vy)
                    .map(|(r, t)| (model.predict_unchecked(r) - t).powi(2))
                    .sum::<f64>()
                    / vy.len() as f64;
                total += mse;
            }
            Ok((*hp, total / folds as f64))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, (_, mse)) in table.iter().enumerate() {
        if *mse < table[best].1 {
            best = i;
        }
    }
    Ok(CvResult {
        best: table[best].0,
        table,
    })
}

pub fn write_cv_report(path: impl AsRef<Path>, table: &[(ForestHyperParams, f64)]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(
        ForestHyperParams::CSV_COLUMNS
            .iter()
            .chain(&["mean_cv_mse"]),
    )?;
    for (hp, mse) in table {
        w.write_record(hp.csv_fields().into_iter().chain([mse.to_string()]))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

const FOREST_FORMAT: &str = "procopt-forest/1";

#[derive(Serialize, Deserialize)]
struct FlatTree {
    /// -1 marks a leaf.
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<i64>,
    right: Vec<i64>,
    value: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    schema_hash: String,
    criterion: String,
    n_features: usize,
    hyperparams: ForestHyperParams,
    trees: Vec<FlatTree>,
}

impl RandomForestModel {
    /// Portable JSON: format tag, schema hash, hyperparameters, and each tree
    /// as parallel node arrays.
    pub fn to_json(&self, schema_hash: &str) -> String {
        let trees = self
            .trees
            .iter()
            .map(|t| {
                let mut flat = FlatTree {
                    feature: Vec::new(),
                    threshold: Vec::new(),
                    left: Vec::new(),
                    right: Vec::new(),
                    value: Vec::new(),
                };
                for node in &t.nodes {
                    match *node {
                        TreeNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            flat.feature.push(feature as i64);
                            flat.threshold.push(threshold);
                            flat.left.push(left as i64);
                            flat.right.push(right as i64);
                            flat.value.push(0.0);
                        }
                        TreeNode::Leaf { value } => {
                            flat.feature.push(-1);
                            flat.threshold.push(0.0);
                            flat.left.push(-1);
                            flat.right.push(-1);
                            flat.value.push(value);
                        }
                    }
                }
                flat
            })
            .collect();
        serde_json::to_string(&ForestFile {
            format: FOREST_FORMAT.into(),
            schema_hash: schema_hash.into(),
            criterion: self.criterion.clone(),
            n_features: self.n_features,
            hyperparams: self.hyperparams,
            trees,
        })
        .expect("forest serializes")
    }

    /// Parses a model file, checking it was trained against `schema_hash`.
    pub fn from_json(text: &str, schema_hash: &str) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "forest model",
            message,
        };
        let file: ForestFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format != FOREST_FORMAT {
            return Err(bad(format!("unknown format {:?}", file.format)));
        }
        if file.schema_hash != schema_hash {
            return Err(bad("model was trained for a different schema".into()));
        }
        let trees = file
            .trees
            .into_iter()
            .map(|flat| {
                let len = flat.feature.len();
                if len == 0
                    || [
                        flat.threshold.len(),
                        flat.left.len(),
                        flat.right.len(),
                        flat.value.len(),
                    ]
                    .iter()
                    .any(|&l| l != len)
                {
                    return Err(bad("tree arrays have inconsistent lengths".into()));
                }
                let nodes = (0..len)
                    .map(|i| {
                        if flat.feature[i] < 0 {
                            return Ok(TreeNode::Leaf {
                                value: flat.value[i],
                            });
                        }
                        let child = |c: i64| {
                            usize::try_from(c)
                                .ok()
                                .filter(|&c| c > i && c < len)
                                .ok_or_else(|| bad(format!("node {i}: bad child index {c}")))
                        };
                        let feature = flat.feature[i] as usize;
                        if feature >= file.n_features {
                            return Err(bad(format!("node {i}: feature {feature} out of range")));
                        }
                        Ok(TreeNode::Split {
                            feature,
                            threshold: flat.threshold[i],
                            left: child(flat.left[i])?,
                            right: child(flat.right[i])?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Tree { nodes })
            })
            .collect::<Result<Vec<_>>>()?;
        if trees.is_empty() {
            return Err(bad("no trees".into()));
        }
        Ok(RandomForestModel {
            hyperparams: file.hyperparams,
            criterion: file.criterion,
            n_features: file.n_features,
            trees,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(depth: Option<usize>) -> ForestHyperParams {
        ForestHyperParams {
            bootstrap: false,
            n_estimators: 1,
            max_depth: depth,
            ..Default::default()
        }
    }

    #[test]
    fn pure_node_is_single_leaf() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let t = fit_tree(&x, &[5.0; 6], &hp(None), 0).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&[100.0, -3.0]), 5.0);
    }

    #[test]
    fn clean_split_at_depth_one() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let t = fit_tree(&x, &[0.0, 0.0, 10.0, 10.0], &hp(Some(1)), 0).unwrap();
        assert_eq!(
            t.nodes()[0],
            TreeNode::Split {
                feature: 0,
                threshold: 1.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(t.predict(&[0.0]), 0.0);
        assert_eq!(t.predict(&[3.0]), 10.0);
    }

    #[test]
    fn min_samples_split_forces_leaf() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let h = ForestHyperParams {
            min_samples_split: 5,
            ..hp(None)
        };
        let t = fit_tree(&x, &[1.0, 2.0, 3.0, 6.0], &h, 0).unwrap();
        assert_eq!(t.nodes(), &[TreeNode::Leaf { value: 3.0 }]);
    }

    #[test]
    fn empty_training_rejected() {
        assert!(matches!(
            fit_tree(&[], &[], &hp(None), 0),
            Err(Error::Empty(_))
        ));
        assert!(fit_forest(&[], &[], &hp(None), "c", 0).is_err());
    }

    #[test]
    fn metrics_arithmetic() {
        let m = metrics(&[1.0, 2.0], &[2.0, 2.0]).unwrap();
        assert!((m.mae - 0.5).abs() < 1e-12);
        assert!((m.mape.unwrap() - 50.0).abs() < 1e-12);
        assert!((m.r2 + 1.0).abs() < 1e-12);

        let y = [1.0, 4.0, -2.0];
        let perfect = metrics(&y, &y).unwrap();
        assert_eq!(
            (perfect.r2, perfect.mae, perfect.mape),
            (1.0, 0.0, Some(0.0))
        );
        let mean = metrics(&y, &[1.0; 3]).unwrap();
        assert!(mean.r2.abs() < 1e-12);

        assert!(matches!(
            metrics(&[2.0, 2.0], &[1.0, 2.0]),
            Err(Error::ConstantTargets)
        ));
        assert!(matches!(metrics(&[], &[]), Err(Error::Empty(_))));
        assert_eq!(metrics(&[0.0, 2.0], &[1.0, 1.0]).unwrap().mape, Some(50.0));
    }

    #[test]
    fn table1_grid_has_3960_entries() {
        let g = ParamGrid::table1().expand();
        assert_eq!(g.len(), 3960);
        assert_eq!(g.len(), 2 * 10 * 3 * 3 * 11 * 2);
    }

    #[test]
    fn grid_file_parse() {
        let g = ParamGrid::parse("# small\nbootstrap = true, false\nn_estimators = 5\nmax_depth = 3, None\nmax_features = auto, sqrt\n").unwrap();
        let e = g.expand();
        assert_eq!(e.len(), 8);
        assert_eq!(e[1].max_features, MaxFeatures::Sqrt);
        assert_eq!(e[2].max_depth, None);
        assert!(ParamGrid::parse("min_samples_split = 1").is_err());
        assert!(ParamGrid::parse("depth = 3").is_err());
        assert!(ParamGrid::parse("max_features = log2").is_err());
    }

    #[test]
    fn sqrt_feature_count() {
        assert_eq!(MaxFeatures::Sqrt.count(4), 2);
        assert_eq!(MaxFeatures::Sqrt.count(5), 3);
        assert_eq!(MaxFeatures::Sqrt.count(1), 1);
        assert_eq!(MaxFeatures::All.count(4), 4);
    }

    #[test]
    fn predict_rejects_wrong_arity() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let m = fit_forest(&x, &[1.0, 2.0], &hp(None), "c", 0).unwrap();
        assert!(matches!(m.predict(&[0.0]), Err(Error::Arity { .. })));
    }

    #[test]
    fn two_tree_mean() {
        let m = RandomForestModel {
            hyperparams: ForestHyperParams::default(),
            criterion: "c".into(),
            n_features: 1,
            trees: vec![
                Tree {
                    nodes: vec![TreeNode::Leaf { value: 1.0 }],
                },
                Tree {
                    nodes: vec![TreeNode::Leaf { value: 3.0 }],
                },
            ],
        };
        assert_eq!(m.predict(&[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn json_rejects_foreign_schema_and_bad_children() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| (i % 3) as f64).collect();
        let m = fit_forest(
            &x,
            &y,
            &ForestHyperParams {
                n_estimators: 3,
                ..Default::default()
            },
            "c",
            1,
        )
        .unwrap();
        let text = m.to_json("abc");
        assert_eq!(RandomForestModel::from_json(&text, "abc").unwrap(), m);
        assert!(RandomForestModel::from_json(&text, "xyz").is_err());
        let broken = text.replacen("\"left\":[1", "\"left\":[0", 1);
        assert!(RandomForestModel::from_json(&broken, "abc").is_err());
    }
}
