//! DQN with experience replay and a periodically synced target network, the
//! tabular Q-learning baseline, and a random-search reference.
//!
//! Both agents share the episode structure: `episodes` runs of
//! `steps_per_episode` steps from a random initial state, with ε ramping
//! linearly from 0 to `epsilon_max` over the whole run. ε is the probability
//! of taking the greedy action.

use std::collections::{HashSet, VecDeque};
use std::time::{Duration, Instant};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{
    self, normalize_state, random_initial_state, EnvState, Environment, Evaluator, TargetSpec,
};
use crate::error::{Error, Result};
use crate::qfunc::{NetworkParams, Sample, DEFAULT_HIDDEN};
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Environment steps between gradient steps (and target syncs).
    pub update_every: usize,
    /// Environment steps before the first gradient step.
    pub warmup: usize,
    pub memory_capacity: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_increment: f64,
    pub epsilon_max: f64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub minibatch: usize,
    pub hidden: usize,
    /// Largest states × actions table the tabular agent will allocate.
    pub tabulation_limit: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            update_every: 5,
            warmup: 100,
            memory_capacity: 2000,
            learning_rate: 0.01,
            gamma: 0.9,
            epsilon_increment: 0.001,
            epsilon_max: 0.9,
            episodes: 5,
            steps_per_episode: 5000,
            minibatch: 32,
            hidden: DEFAULT_HIDDEN,
            tabulation_limit: 10_000_000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_max) {
            return bad("epsilon_max must lie in [0, 1]");
        }
        if !(self.epsilon_increment >= 0.0) {
            return bad("epsilon_increment must be non-negative");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning rate must be non-negative");
        }
        if [
            self.update_every,
            self.memory_capacity,
            self.episodes,
            self.steps_per_episode,
            self.minibatch,
            self.hidden,
        ]
        .contains(&0)
        {
            return bad("counts must be positive");
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.episodes * self.steps_per_episode
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: usize,
    pub reward: f64,
    pub next_state: EnvState,
    pub terminal: bool,
}

/// Bounded FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// Up to `size` distinct transitions drawn uniformly.
    pub fn sample(&self, size: usize, rng: &mut impl rand::Rng) -> Vec<&Transition> {
        let k = size.min(self.buffer.len());
        index::sample(rng, self.buffer.len(), k)
            .into_iter()
            .map(|i| &self.buffer[i])
            .collect()
    }
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy with probability ε, uniform otherwise.
pub fn select_action(q_values: &[f64], epsilon: f64, rng: &mut impl rand::Rng) -> Result<usize> {
    if q_values.is_empty() {
        return Err(Error::Empty("q-value vector"));
    }
    if rng.random::<f64>() > epsilon {
        Ok(rng.random_range(0..q_values.len()))
    } else {
        Ok(argmax(q_values))
    }
}

pub fn epsilon_at(step: usize, cfg: &AgentConfig) -> f64 {
    (step as f64 * cfg.epsilon_increment).min(cfg.epsilon_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub episode: usize,
    pub epsilon: f64,
    /// Present on steps that ran a learning update.
    pub loss: Option<f64>,
    pub min_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub distinct_states: usize,
    #[serde(skip)]
    pub wall_clock: Duration,
}

/// Everything recorded during one training run. Equality ignores wall-clock time.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub steps: Vec<StepLog>,
    pub episodes: Vec<EpisodeLog>,
}

impl PartialEq for RunLog {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
            && self.episodes.len() == other.episodes.len()
            && self
                .episodes
                .iter()
                .zip(&other.episodes)
                .all(|(a, b)| a.episode == b.episode && a.distinct_states == b.distinct_states)
    }
}

impl RunLog {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.loss).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["step", "episode", "epsilon", "loss", "min_error"])?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                s.episode.to_string(),
                s.epsilon.to_string(),
                s.loss.map(|l| l.to_string()).unwrap_or_default(),
                s.min_error.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_episodes_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["episode", "distinct_states"])?;
        for e in &self.episodes {
            w.write_record([e.episode.to_string(), e.distinct_states.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub best_state: EnvState,
    pub best_error: f64,
    /// Step index at which `best_state` was first reached.
    pub best_step: usize,
    pub log: RunLog,
    /// Final online network (DQN only).
    pub network: Option<NetworkParams>,
}

/// Tracks per-episode exploration and the running best solution.
struct Tracker {
    best: Option<(EnvState, f64, usize)>,
    visited: HashSet<usize>,
    episode_start: Instant,
    log: RunLog,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            best: None,
            visited: HashSet::new(),
            episode_start: Instant::now(),
            log: RunLog::default(),
        }
    }

    fn begin_episode(&mut self) {
        self.visited.clear();
        self.episode_start = Instant::now();
    }

    fn visit(&mut self, state: &EnvState, eval: &mut Evaluator, step: usize) {
        self.visited.insert(state.flat_index(eval.env().schema));
        let err = eval.scores(state).error;
        if self.best.as_ref().is_none_or(|b| err < b.1) {
            self.best = Some((state.clone(), err, step));
        }
    }

    fn record(&mut self, step: usize, episode: usize, epsilon: f64, loss: Option<f64>) {
        let min_error = self.best.as_ref().map_or(f64::INFINITY, |b| b.1);
        self.log.steps.push(StepLog {
            step,
            episode,
            epsilon,
            loss,
            min_error,
        });
    }

    fn end_episode(&mut self, episode: usize) {
        self.log.episodes.push(EpisodeLog {
            episode,
            distinct_states: self.visited.len(),
            wall_clock: self.episode_start.elapsed(),
        });
    }

    fn finish(self, network: Option<NetworkParams>) -> TrainOutcome {
        let (best_state, best_error, best_step) = self.best.expect("at least one state visited");
        TrainOutcome {
            best_state,
            best_error,
            best_step,
            log: self.log,
            network,
        }
    }
}

/// Online and target networks plus replay memory.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: NetworkParams,
    pub target: NetworkParams,
    pub memory: ReplayMemory,
    cfg: AgentConfig,
}

impl DqnAgent {
    pub fn new(n_features: usize, n_actions: usize, cfg: &AgentConfig, seed: u64) -> Result<Self> {
        let online = NetworkParams::init(n_features, n_actions, cfg.hidden, seed)?;
        Ok(DqnAgent {
            target: online.clone(),
            online,
            memory: ReplayMemory::new(cfg.memory_capacity),
            cfg: *cfg,
        })
    }

    /// Bootstrap target `r` for terminal transitions, else `r + γ max_a' Q̂(s', a')`.
    pub fn td_target(&self, reward: f64, next_features: &[f64], terminal: bool) -> Result<f64> {
        if terminal {
            return Ok(reward);
        }
        let q = self.target.forward(next_features)?;
        Ok(reward + self.cfg.gamma * q[argmax(&q)])
    }

    /// One gradient step on a sampled minibatch; returns its loss.
    pub fn learn(
        &mut self,
        schema: &crate::data::ProcessSchema,
        rng: &mut impl rand::Rng,
    ) -> Result<Option<f64>> {
        if self.memory.is_empty() {
            return Ok(None);
        }
        let batch = self
            .memory
            .sample(self.cfg.minibatch, rng)
            .into_iter()
            .map(|t| {
                let next = normalize_state(&t.next_state, schema);
                Ok(Sample {
                    features: normalize_state(&t.state, schema),
                    action: t.action,
                    target: self.td_target(t.reward, &next, t.terminal)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(
            self.online.train_step(&batch, self.cfg.learning_rate)?,
        ))
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }
}

/// Trains a DQN agent on `env`, tracking the lowest solution error seen.
pub fn dqn_train(env: &Environment, cfg: &AgentConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let schema = env.schema;
    let mut agent = DqnAgent::new(
        schema.n_variables(),
        env.action_count(),
        cfg,
        seed::derive(seed, stream::NETWORK, 0),
    )?;
    let mut rng = seed::derived_rng(seed, stream::AGENT, 0);
    let mut eval = Evaluator::new(env);
    let mut tracker = Tracker::new();
    let mut t = 0usize;

    for episode in 0..cfg.episodes {
        tracker.begin_episode();
        let mut state = random_initial_state(schema, &mut rng);
        tracker.visit(&state, &mut eval, t);
        for j in 0..cfg.steps_per_episode {
            let epsilon = epsilon_at(t, cfg);
            let q = agent.online.forward(&normalize_state(&state, schema))?;
            let action = select_action(&q, epsilon, &mut rng)?;
            let next = env::step(&state, action, schema)?;
            let reward = eval.reward(&state, &next);
            agent.memory.push(Transition {
                state: state.clone(),
                action,
                reward,
                next_state: next.clone(),
                terminal: j + 1 == cfg.steps_per_episode,
            });
            tracker.visit(&next, &mut eval, t);
            t += 1;

            let loss = if t > cfg.warmup && t % cfg.update_every == 0 {
                let loss = agent.learn(schema, &mut rng)?;
                agent.sync_target();
                loss
            } else {
                None
            };
            tracker.record(t - 1, episode, epsilon, loss);
            state = next;
        }
        tracker.end_episode(episode);
    }
    Ok(tracker.finish(Some(agent.online)))
}

/// One tabular Q-learning update.
pub fn q_update(q: f64, reward: f64, max_next: f64, alpha: f64, gamma: f64) -> f64 {
    q + alpha * (reward + gamma * max_next - q)
}

/// Dense action-value table over the whole grid, zero-initialised.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize, limit: usize) -> Result<Self> {
        match states.checked_mul(actions) {
            Some(n) if n <= limit => Ok(QTable {
                actions,
                values: vec![0.0; n],
            }),
            _ => Err(Error::TableTooLarge {
                states,
                actions,
                limit,
            }),
        }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.actions..(state + 1) * self.actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, v: f64) {
        self.values[state * self.actions + action] = v;
    }

    pub fn greedy(&self, state: usize) -> usize {
        argmax(self.row(state))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QLearningOutcome {
    pub outcome: TrainOutcome,
    pub table: QTable,
}

/// Tabular Q-learning with the same episode and ε schedule as [`dqn_train`].
pub fn qlearning_train(
    env: &Environment,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<QLearningOutcome> {
    cfg.validate()?;
    let schema = env.schema;
    let mut table = QTable::new(schema.grid_size(), env.action_count(), cfg.tabulation_limit)?;
    let mut rng = seed::derived_rng(seed, stream::AGENT, 0);
    let mut eval = Evaluator::new(env);
    let mut tracker = Tracker::new();
    let mut t = 0usize;

    for episode in 0..cfg.episodes {
        tracker.begin_episode();
        let mut state = random_initial_state(schema, &mut rng);
        tracker.visit(&state, &mut eval, t);
        for j in 0..cfg.steps_per_episode {
            let epsilon = epsilon_at(t, cfg);
            let s = state.flat_index(schema);
            let action = select_action(table.row(s), epsilon, &mut rng)?;
            let next = env::step(&state, action, schema)?;
            let reward = eval.reward(&state, &next);
            let terminal = j + 1 == cfg.steps_per_episode;
            let s2 = next.flat_index(schema);
            let max_next = if terminal {
                0.0
            } else {
                let row = table.row(s2);
                row[argmax(row)]
            };
            let old = table.get(s, action);
            let new = q_update(old, reward, max_next, cfg.learning_rate, cfg.gamma);
            table.set(s, action, new);
            let td = reward + cfg.gamma * max_next - old;

            tracker.visit(&next, &mut eval, t);
            tracker.record(t, episode, epsilon, Some(td * td));
            t += 1;
            state = next;
        }
        tracker.end_episode(episode);
    }
    Ok(QLearningOutcome {
        outcome: tracker.finish(None),
        table,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best_state: EnvState,
    pub best_error: f64,
    pub best_step: usize,
}

/// Independent uniform draws from the grid, `budget` evaluations.
pub fn random_search(env: &Environment, budget: usize, seed: u64) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::InvalidArgument(
            "random search budget must be positive".into(),
        ));
    }
    let mut rng = seed::derived_rng(seed, stream::RANDOM_SEARCH, 0);
    let mut eval = Evaluator::new(env);
    let mut best: Option<SearchOutcome> = None;
    for step in 0..budget {
        let s = random_initial_state(env.schema, &mut rng);
        let e = eval.scores(&s).error;
        if best.as_ref().is_none_or(|b| e < b.best_error) {
            best = Some(SearchOutcome {
                best_state: s,
                best_error: e,
                best_step: step,
            });
        }
    }
    Ok(best.expect("budget > 0"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dqn")]
    Dqn,
    #[serde(rename = "q-learning")]
    QLearning,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dqn => "dqn",
            Method::QLearning => "q-learning",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub scenario: usize,
    pub method: Method,
    pub best_state: Vec<f64>,
    pub best_error: f64,
    pub steps_to_best: usize,
}

/// Runs both agents on every target scenario; both agents of scenario `k`
/// get `seeds[k]`. Rows are ordered by scenario, DQN first.
pub fn compare(
    schema: &crate::data::ProcessSchema,
    surrogate: &dyn env::Surrogate,
    weights: &[f64],
    scenarios: &[Vec<f64>],
    cfg: &AgentConfig,
    seeds: &[u64],
) -> Result<Vec<ComparisonRow>> {
    if scenarios.is_empty() {
        return Err(Error::Empty("scenario list"));
    }
    if seeds.len() != scenarios.len() {
        return Err(Error::Arity {
            what: "scenario seeds",
            expected: scenarios.len(),
            got: seeds.len(),
        });
    }
    let jobs: Vec<(usize, Method)> = (0..scenarios.len())
        .flat_map(|k| [(k, Method::Dqn), (k, Method::QLearning)])
        .collect();
    jobs.into_par_iter()
        .map(|(k, method)| {
            let target = TargetSpec::new(scenarios[k].clone(), weights.to_vec())?;
            let env = Environment::new(schema, surrogate, target)?;
            let s = seeds[k];
            let out = match method {
                Method::Dqn => dqn_train(&env, cfg, s)?,
                Method::QLearning => qlearning_train(&env, cfg, s)?.outcome,
            };
            Ok(ComparisonRow {
                scenario: k,
                method,
                best_state: out.best_state.values(schema),
                best_error: out.best_error,
                steps_to_best: out.best_step,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ProcessSchema, Variable};
    use crate::env::FnSurrogate;

    fn transition(i: usize) -> Transition {
        let s = EnvState::from_flat_index(&toy_schema(), 0);
        Transition {
            state: s.clone(),
            action: i,
            reward: i as f64,
            next_state: s,
            terminal: false,
        }
    }

    fn toy_schema() -> ProcessSchema {
        ProcessSchema::new(
            vec![
                Variable::new("x", 0.0, 2.0, 1.0),
                Variable::new("y", 0.0, 2.0, 1.0),
            ],
            vec!["fx".into(), "fy".into()],
        )
        .unwrap()
    }

    #[test]
    fn replay_is_fifo() {
        let mut m = ReplayMemory::new(3);
        for i in 0..5 {
            m.push(transition(i));
        }
        assert_eq!(m.len(), 3);
        let actions: Vec<usize> = m.iter().map(|t| t.action).collect();
        assert_eq!(actions, vec![2, 3, 4]);
        let mut rng = seed::rng(1);
        assert_eq!(m.sample(10, &mut rng).len(), 3);
        let picked: HashSet<usize> = m.sample(2, &mut rng).iter().map(|t| t.action).collect();
        assert_eq!(picked.len(), 2);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = AgentConfig::default();
        assert_eq!(epsilon_at(0, &cfg), 0.0);
        assert!((epsilon_at(450, &cfg) - 0.45).abs() < 1e-12);
        assert!((epsilon_at(900, &cfg) - 0.9).abs() < 1e-12);
        assert_eq!(epsilon_at(5000, &cfg), 0.9);
        let mut prev = 0.0;
        for s in 0..2000 {
            let e = epsilon_at(s, &cfg);
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn greedy_selection() {
        let mut rng = seed::rng(2);
        let mut q = vec![0.0; 81];
        q[7] = 1.0;
        for _ in 0..100 {
            assert_eq!(select_action(&q, 1.0, &mut rng).unwrap(), 7);
        }
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert!(select_action(&[], 0.5, &mut rng).is_err());
    }

    #[test]
    fn q_update_arithmetic() {
        assert!((q_update(0.0, 1.0, 2.0, 0.5, 0.9) - 1.4).abs() < 1e-12);
        assert_eq!(q_update(0.3, 1.0, 2.0, 0.0, 0.9), 0.3);
        assert_eq!(q_update(0.3, 1.7, 2.0, 1.0, 0.0), 1.7);
    }

    #[test]
    fn table_limit() {
        assert!(matches!(
            QTable::new(1000, 81, 1000),
            Err(Error::TableTooLarge { .. })
        ));
        assert!(QTable::new(36_960, 81, 10_000_000).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        assert!(AgentConfig {
            gamma: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AgentConfig {
            epsilon_max: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AgentConfig {
            minibatch: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn frozen_table_with_zero_alpha() {
        let schema = toy_schema();
        let f = FnSurrogate::new(2, 2, |x: &[f64]| x.to_vec());
        let env = Environment::new(
            &schema,
            &f,
            TargetSpec::new(vec![1.0, 1.0], vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let cfg = AgentConfig {
            learning_rate: 0.0,
            episodes: 2,
            steps_per_episode: 50,
            ..Default::default()
        };
        let out = qlearning_train(&env, &cfg, 3).unwrap();
        assert!(out.table.values.iter().all(|v| *v == 0.0));
        assert_eq!(out.outcome.best_error, 0.0);
    }

    #[test]
    fn target_network_is_stale_until_synced() {
        let schema = toy_schema();
        let cfg = AgentConfig {
            minibatch: 4,
            ..Default::default()
        };
        let mut agent = DqnAgent::new(2, 9, &cfg, 1).unwrap();
        let mut rng = seed::rng(0);
        for i in 0..9 {
            let s = EnvState::from_flat_index(&schema, i % 9);
            let n = env::step(&s, i, &schema).unwrap();
            agent.memory.push(Transition {
                state: s,
                action: i,
                reward: 1.0,
                next_state: n,
                terminal: false,
            });
        }
        let probe = [0.5, 0.5];
        let frozen = agent.target.forward(&probe).unwrap();
        for _ in 0..20 {
            agent.learn(&schema, &mut rng).unwrap();
            assert_eq!(agent.target.forward(&probe).unwrap(), frozen);
        }
        assert_ne!(agent.online.forward(&probe).unwrap(), frozen);
        agent.sync_target();
        assert_eq!(
            agent.target.forward(&probe).unwrap(),
            agent.online.forward(&probe).unwrap()
        );
    }

    #[test]
    fn compare_rejects_empty_scenarios() {
        let schema = toy_schema();
        let f = FnSurrogate::new(2, 2, |x: &[f64]| x.to_vec());
        assert!(matches!(
            compare(&schema, &f, &[0.5, 0.5], &[], &AgentConfig::default(), &[]),
            Err(Error::Empty(_))
        ));
    }
}
