//! DQN versus tabular Q-learning versus random search on the five ozonation
//! target scenarios, with surrogates trained on synthetic data.
//!
//! ```text
//! cargo run --release --example compare_agents [-- <episodes> <steps>]
//! ```

use std::time::Instant;

use procopt::agents::{self, AgentConfig};
use procopt::ahp::{self, ComparisonMatrix};
use procopt::config::ozonation_scenarios;
use procopt::data::{self, ProcessSchema};
use procopt::env::{EnvState, Environment, ForestSurrogate, TargetSpec};
use procopt::forest::{self, ForestHyperParams};

fn main() -> procopt::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = AgentConfig::default();
    if let Some(e) = args.next() {
        cfg.episodes = e.parse().expect("episodes");
    }
    if let Some(n) = args.next() {
        cfg.steps_per_episode = n.parse().expect("steps");
    }

    let schema = ProcessSchema::ozonation();
    let noise = data::default_noise(&schema, data::ozonation_phantom);
    let dataset = data::synth_generate(&schema, 500, &noise, 1)?;
    let hp = ForestHyperParams::default();
    let models = (0..schema.n_criteria())
        .map(|k| forest::fit_forest_on(&dataset, k, &hp, 10 + k as u64))
        .collect::<procopt::Result<Vec<_>>>()?;
    let surrogate = ForestSurrogate::new(&schema, models)?;
    let weights = ahp::derive_weights(&ComparisonMatrix::ozonation())?.weights;

    println!(
        "{:<9} {:>10} {:>12} {:>14} {:>12}",
        "scenario", "dqn", "q-learning", "random-search", "grid-min"
    );
    for (k, sc) in ozonation_scenarios().iter().enumerate() {
        let env = Environment::new(
            &schema,
            &surrogate,
            TargetSpec::new(sc.targets.clone(), weights.clone())?,
        )?;
        let seed = 100 + k as u64;
        let t0 = Instant::now();
        let dqn = agents::dqn_train(&env, &cfg, seed)?;
        let dqn_time = t0.elapsed();
        let ql = agents::qlearning_train(&env, &cfg, seed)?;
        let rs = agents::random_search(&env, cfg.total_steps(), seed)?;
        let mut errors = Vec::with_capacity(schema.grid_size());
        for i in 0..schema.grid_size() {
            errors.push(env.solution_error(&EnvState::from_flat_index(&schema, i)));
        }
        let grid_min = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let beaten = |e: f64| errors.iter().filter(|&&x| x < e).count();
        println!(
            "{:<9} {:>10.4} {:>12.4} {:>14.4} {:>12.4}   (points better than dqn/ql/rs: {}/{}/{}; dqn {:.1}s, best at step {}, states/episode {:?})",
            sc.name,
            dqn.best_error,
            ql.outcome.best_error,
            rs.best_error,
            grid_min,
            beaten(dqn.best_error),
            beaten(ql.outcome.best_error),
            beaten(rs.best_error),
            dqn_time.as_secs_f64(),
            dqn.best_step,
            dqn.log.episodes.iter().map(|e| e.distinct_states).collect::<Vec<_>>()
        );
    }
    Ok(())
}
