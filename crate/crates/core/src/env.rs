//! The process-parameter MDP.
//!
//! States are points of the schema grid. An action moves every variable by
//! one step down, keeps it, or moves it one step up, giving `3^n` actions;
//! moves past a bound are clamped. Rewards are the decrease of the weighted
//! L1 distance between surrogate predictions and the target, and solutions
//! are scored by the weighted L2 distance.

use std::collections::HashMap;

use crate::data::ProcessSchema;
use crate::error::{Error, Result};
use crate::forest::RandomForestModel;

/// A grid point, stored as one level index per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvState {
    levels: Vec<usize>,
}

impl EnvState {
    pub fn from_levels(schema: &ProcessSchema, levels: Vec<usize>) -> Result<Self> {
        if levels.len() != schema.n_variables() {
            return Err(Error::Arity {
                what: "state",
                expected: schema.n_variables(),
                got: levels.len(),
            });
        }
        for (l, v) in levels.iter().zip(&schema.variables) {
            if *l >= v.levels() {
                return Err(Error::InvalidArgument(format!(
                    "{}: level {l} outside grid of {}",
                    v.name,
                    v.levels()
                )));
            }
        }
        Ok(EnvState { levels })
    }

    /// Rejects values that are off-grid or out of range.
    pub fn from_values(schema: &ProcessSchema, values: &[f64]) -> Result<Self> {
        if values.len() != schema.n_variables() {
            return Err(Error::Arity {
                what: "state",
                expected: schema.n_variables(),
                got: values.len(),
            });
        }
        let levels = values
            .iter()
            .zip(&schema.variables)
            .map(|(x, v)| {
                v.level_of(*x).ok_or_else(|| {
                    Error::InvalidArgument(format!("{} = {x} is not a grid point", v.name))
                })
            })
            .collect::<Result<_>>()?;
        Ok(EnvState { levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn values(&self, schema: &ProcessSchema) -> Vec<f64> {
        self.levels
            .iter()
            .zip(&schema.variables)
            .map(|(l, v)| v.value_at(*l))
            .collect()
    }

    /// Row-major position in the grid, last variable fastest.
    pub fn flat_index(&self, schema: &ProcessSchema) -> usize {
        self.levels
            .iter()
            .zip(&schema.variables)
            .fold(0, |acc, (l, v)| acc * v.levels() + l)
    }

    pub fn from_flat_index(schema: &ProcessSchema, mut index: usize) -> Self {
        let mut levels = vec![0; schema.n_variables()];
        for (l, v) in levels.iter_mut().zip(&schema.variables).rev() {
            *l = index % v.levels();
            index /= v.levels();
        }
        EnvState { levels }
    }
}

/// Per-variable moves of an action: -1, 0 or +1 steps. Base-3 digits with
/// the first variable most significant; digit 0 decreases, 1 keeps, 2 increases.
pub fn action_moves(index: usize, n: usize) -> Result<Vec<i8>> {
    let count = 3usize.pow(n as u32);
    if index >= count {
        return Err(Error::InvalidArgument(format!(
            "action {index} outside [0, {count})"
        )));
    }
    let mut moves = vec![0i8; n];
    let mut rest = index;
    for m in moves.iter_mut().rev() {
        *m = (rest % 3) as i8 - 1;
        rest /= 3;
    }
    Ok(moves)
}

/// Inverse of [`action_moves`].
pub fn action_encode(moves: &[i8]) -> usize {
    moves.iter().fold(0, |acc, m| acc * 3 + (m + 1) as usize)
}

/// Parameter deltas `{-u_j, 0, +u_j}` of an action.
pub fn action_decode(index: usize, schema: &ProcessSchema) -> Result<Vec<f64>> {
    Ok(action_moves(index, schema.n_variables())?
        .into_iter()
        .zip(&schema.variables)
        .map(|(m, v)| f64::from(m) * v.step)
        .collect())
}

/// Deterministic transition; components pushed past a bound stay at it.
pub fn step(state: &EnvState, action: usize, schema: &ProcessSchema) -> Result<EnvState> {
    let moves = action_moves(action, schema.n_variables())?;
    let levels = state
        .levels
        .iter()
        .zip(moves)
        .zip(&schema.variables)
        .map(|((&l, m), v)| (l as i64 + i64::from(m)).clamp(0, v.levels() as i64 - 1) as usize)
        .collect();
    Ok(EnvState { levels })
}

pub fn random_initial_state(schema: &ProcessSchema, rng: &mut impl rand::Rng) -> EnvState {
    EnvState {
        levels: schema
            .variables
            .iter()
            .map(|v| rng.random_range(0..v.levels()))
            .collect(),
    }
}

/// Min-max scaling of each variable to [0, 1].
pub fn normalize_state(state: &EnvState, schema: &ProcessSchema) -> Vec<f64> {
    state
        .values(schema)
        .into_iter()
        .zip(&schema.variables)
        .map(|(x, v)| {
            if v.max > v.min {
                (x - v.min) / (v.max - v.min)
            } else {
                0.0
            }
        })
        .collect()
}

/// Desired criterion values and their importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TargetSpec {
    pub fn new(targets: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if targets.len() != weights.len() {
            return Err(Error::Arity {
                what: "targets",
                expected: weights.len(),
                got: targets.len(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weights must be non-negative and sum to 1 (sum = {sum})"
            )));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("non-finite target".into()));
        }
        Ok(TargetSpec { targets, weights })
    }

    /// Σ_i √(w_i² (f_i − p_i)²).
    pub fn weighted_l1(&self, predicted: &[f64]) -> f64 {
        predicted
            .iter()
            .zip(&self.targets)
            .zip(&self.weights)
            .map(|((f, p), w)| (w * w * (f - p) * (f - p)).sqrt())
            .sum()
    }

    /// √(Σ_i w_i² (f_i − p_i)²), the solution error.
    pub fn weighted_l2(&self, predicted: &[f64]) -> f64 {
        predicted
            .iter()
            .zip(&self.targets)
            .zip(&self.weights)
            .map(|((f, p), w)| w * w * (f - p) * (f - p))
            .sum::<f64>()
            .sqrt()
    }

    /// Improvement in weighted L1 distance from `before` to `after`.
    pub fn reward(&self, before: &[f64], after: &[f64]) -> f64 {
        self.weighted_l1(before) - self.weighted_l1(after)
    }
}

/// Maps process parameters to predicted criterion values.
pub trait Surrogate: Send + Sync {
    fn n_inputs(&self) -> usize;
    fn n_criteria(&self) -> usize;
    fn predict(&self, inputs: &[f64]) -> Vec<f64>;
}

/// One forest per criterion, in schema order.
#[derive(Debug, Clone)]
pub struct ForestSurrogate {
    models: Vec<RandomForestModel>,
}

impl ForestSurrogate {
    pub fn new(schema: &ProcessSchema, models: Vec<RandomForestModel>) -> Result<Self> {
        if models.len() != schema.n_criteria() {
            return Err(Error::Arity {
                what: "surrogate models",
                expected: schema.n_criteria(),
                got: models.len(),
            });
        }
        for (m, c) in models.iter().zip(&schema.criteria) {
            if m.n_features != schema.n_variables() {
                return Err(Error::Arity {
                    what: "model inputs",
                    expected: schema.n_variables(),
                    got: m.n_features,
                });
            }
            if &m.criterion != c {
                return Err(Error::InvalidArgument(format!(
                    "model for {:?} given where {c:?} was expected",
                    m.criterion
                )));
            }
        }
        Ok(ForestSurrogate { models })
    }

    pub fn models(&self) -> &[RandomForestModel] {
        &self.models
    }
}

impl Surrogate for ForestSurrogate {
    fn n_inputs(&self) -> usize {
        self.models[0].n_features
    }

    fn n_criteria(&self) -> usize {
        self.models.len()
    }

    fn predict(&self, inputs: &[f64]) -> Vec<f64> {
        self.models
            .iter()
            .map(|m| m.predict_unchecked(inputs))
            .collect()
    }
}

/// A surrogate given by a closure, handy for analytic test processes.
pub struct FnSurrogate<F> {
    n_inputs: usize,
    n_criteria: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Send + Sync> FnSurrogate<F> {
    pub fn new(n_inputs: usize, n_criteria: usize, f: F) -> Self {
        FnSurrogate {
            n_inputs,
            n_criteria,
            f,
        }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64> + Send + Sync> Surrogate for FnSurrogate<F> {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn n_criteria(&self) -> usize {
        self.n_criteria
    }

    fn predict(&self, inputs: &[f64]) -> Vec<f64> {
        (self.f)(inputs)
    }
}

/// Schema, surrogate and target bundled for an agent.
pub struct Environment<'a> {
    pub schema: &'a ProcessSchema,
    pub surrogate: &'a dyn Surrogate,
    pub target: TargetSpec,
}

impl<'a> Environment<'a> {
    pub fn new(
        schema: &'a ProcessSchema,
        surrogate: &'a dyn Surrogate,
        target: TargetSpec,
    ) -> Result<Self> {
        if surrogate.n_inputs() != schema.n_variables() {
            return Err(Error::Arity {
                what: "surrogate inputs",
                expected: schema.n_variables(),
                got: surrogate.n_inputs(),
            });
        }
        if surrogate.n_criteria() != schema.n_criteria()
            || target.targets.len() != schema.n_criteria()
        {
            return Err(Error::Arity {
                what: "criteria",
                expected: schema.n_criteria(),
                got: if surrogate.n_criteria() != schema.n_criteria() {
                    surrogate.n_criteria()
                } else {
                    target.targets.len()
                },
            });
        }
        Ok(Environment {
            schema,
            surrogate,
            target,
        })
    }

    pub fn action_count(&self) -> usize {
        self.schema.action_count()
    }

    pub fn predict(&self, state: &EnvState) -> Vec<f64> {
        self.surrogate.predict(&state.values(self.schema))
    }

    pub fn reward(&self, state: &EnvState, next: &EnvState) -> f64 {
        self.target
            .reward(&self.predict(state), &self.predict(next))
    }

    pub fn solution_error(&self, state: &EnvState) -> f64 {
        self.target.weighted_l2(&self.predict(state))
    }
}

/// Memoised surrogate predictions for one training run.
pub struct Evaluator<'e, 'a> {
    env: &'e Environment<'a>,
    cache: HashMap<usize, Scores>,
}

#[derive(Debug, Clone, Copy)]
pub struct Scores {
    /// Weighted L1 distance, the reward potential.
    pub distance: f64,
    /// Weighted L2 distance, the solution error.
    pub error: f64,
}

impl<'e, 'a> Evaluator<'e, 'a> {
    pub fn new(env: &'e Environment<'a>) -> Self {
        Evaluator {
            env,
            cache: HashMap::new(),
        }
    }

    pub fn env(&self) -> &'e Environment<'a> {
        self.env
    }

    pub fn scores(&mut self, state: &EnvState) -> Scores {
        let env = self.env;
        *self
            .cache
            .entry(state.flat_index(env.schema))
            .or_insert_with(|| {
                let p = env.predict(state);
                Scores {
                    distance: env.target.weighted_l1(&p),
                    error: env.target.weighted_l2(&p),
                }
            })
    }

    pub fn reward(&mut self, state: &EnvState, next: &EnvState) -> f64 {
        self.scores(state).distance - self.scores(next).distance
    }
}
