use proptest::prelude::*;

use procopt::agents::{self, AgentConfig, DqnAgent, ReplayMemory, Transition};
use procopt::config::ozonation_scenarios;
use procopt::data::{self, ProcessSchema};
use procopt::env::{self, EnvState, Environment, FnSurrogate, TargetSpec};

const OZONATION_WEIGHTS: [f64; 4] = [0.5563, 0.2488, 0.1142, 0.0807];

fn phantom_surrogate() -> FnSurrogate<data::Phantom> {
    FnSurrogate::new(4, 4, data::ozonation_phantom as data::Phantom)
}

fn short_config() -> AgentConfig {
    AgentConfig {
        episodes: 2,
        steps_per_episode: 300,
        ..AgentConfig::default()
    }
}

#[test]
fn greedy_free_selection_is_uniform() {
    let mut rng = procopt::seed::rng(17);
    let q = vec![0.0; 81];
    let draws = 100_000;
    let mut counts = [0usize; 81];
    for _ in 0..draws {
        counts[agents::select_action(&q, 0.0, &mut rng).unwrap()] += 1;
    }
    let expected = draws as f64 / 81.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 99.9th percentile of chi-square with 80 degrees of freedom
    assert!(chi2 < 124.84, "chi-square {chi2}");
}

#[test]
fn full_exploitation_is_greedy() {
    let mut rng = procopt::seed::rng(0);
    let mut q = vec![0.0; 9];
    q[4] = 1.0;
    // u > ε never holds for ε = 1
    assert!((0..1000).all(|_| agents::select_action(&q, 1.0, &mut rng).unwrap() == 4));
}

#[test]
fn undiscounted_single_transition_converges_to_its_reward() {
    let schema = ProcessSchema::ozonation();
    let cfg = AgentConfig {
        gamma: 0.0,
        minibatch: 1,
        ..AgentConfig::default()
    };
    let mut agent = DqnAgent::new(4, 81, &cfg, 3).unwrap();
    let state = EnvState::from_flat_index(&schema, 12_345);
    let next = env::step(&state, 7, &schema).unwrap();
    agent.memory.push(Transition {
        state: state.clone(),
        action: 7,
        reward: 0.37,
        next_state: next,
        terminal: false,
    });
    let mut rng = procopt::seed::rng(0);
    for _ in 0..20_000 {
        agent.learn(&schema, &mut rng).unwrap();
        agent.sync_target();
    }
    let q = agent
        .online
        .forward(&env::normalize_state(&state, &schema))
        .unwrap();
    assert!((q[7] - 0.37).abs() < 1e-3, "q = {}", q[7]);
}

#[test]
fn runs_are_bit_identical_for_equal_seeds() {
    let schema = ProcessSchema::ozonation();
    let surrogate = phantom_surrogate();
    let sc = &ozonation_scenarios()[2];
    let target = TargetSpec::new(sc.targets.clone(), OZONATION_WEIGHTS.to_vec()).unwrap();
    let env = Environment::new(&schema, &surrogate, target).unwrap();
    let cfg = short_config();
    let a = agents::dqn_train(&env, &cfg, 9).unwrap();
    let b = agents::dqn_train(&env, &cfg, 9).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.network, b.network);
    assert_eq!(a.best_state, b.best_state);
    let c = agents::dqn_train(&env, &cfg, 10).unwrap();
    assert_ne!(a.log, c.log);
    let qa = agents::qlearning_train(&env, &cfg, 9).unwrap();
    let qb = agents::qlearning_train(&env, &cfg, 9).unwrap();
    assert_eq!(qa.outcome.log, qb.outcome.log);
}

#[test]
fn first_episode_explores_the_most_states() {
    // paper schedule, synthetic scenarios, majority over seeds
    let schema = ProcessSchema::ozonation();
    let surrogate = phantom_surrogate();
    let cfg = AgentConfig::default();
    let seeds = 5u64;
    for sc in ozonation_scenarios() {
        let target = TargetSpec::new(sc.targets.clone(), OZONATION_WEIGHTS.to_vec()).unwrap();
        let env = Environment::new(&schema, &surrogate, target).unwrap();
        let hits = (0..seeds)
            .filter(|&seed| {
                let out = agents::dqn_train(&env, &cfg, 1000 + seed).unwrap();
                let counts: Vec<usize> =
                    out.log.episodes.iter().map(|e| e.distinct_states).collect();
                counts[0] == *counts.iter().max().unwrap()
            })
            .count() as u64;
        assert!(
            2 * hits > seeds,
            "scenario {}: first episode maximal for {hits}/{seeds} seeds",
            sc.name
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replay_keeps_the_newest_transitions_in_order(capacity in 1usize..40, extra in 0usize..60) {
        let schema = ProcessSchema::ozonation();
        let mut memory = ReplayMemory::new(capacity);
        let total = capacity + extra;
        for i in 0..total {
            let s = EnvState::from_flat_index(&schema, i);
            memory.push(Transition { state: s.clone(), action: 0, reward: i as f64, next_state: s, terminal: false });
        }
        let kept: Vec<f64> = memory.iter().map(|t| t.reward).collect();
        prop_assert_eq!(kept, (extra..total).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn best_error_never_increases(seed: u64, scenario in 0usize..5) {
        let schema = ProcessSchema::ozonation();
        let surrogate = phantom_surrogate();
        let sc = &ozonation_scenarios()[scenario];
        let target = TargetSpec::new(sc.targets.clone(), OZONATION_WEIGHTS.to_vec()).unwrap();
        let env = Environment::new(&schema, &surrogate, target).unwrap();
        let cfg = short_config();
        let dqn = agents::dqn_train(&env, &cfg, seed).unwrap();
        let ql = agents::qlearning_train(&env, &cfg, seed).unwrap().outcome;
        for out in [&dqn, &ql] {
            prop_assert_eq!(out.log.steps.len(), cfg.total_steps());
            prop_assert!(out.log.steps.windows(2).all(|w| w[1].min_error <= w[0].min_error));
            prop_assert_eq!(out.log.steps.last().unwrap().min_error, out.best_error);
            prop_assert_eq!(env.solution_error(&out.best_state), out.best_error);
        }
        let rs = agents::random_search(&env, cfg.total_steps(), seed).unwrap();
        prop_assert_eq!(env.solution_error(&rs.best_state), rs.best_error);
    }
}
