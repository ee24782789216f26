//! Tabular Q-learning on a 3×3 process grid, checked against value iteration.
//!
//! ```text
//! cargo run --release --example small_mdp
//! ```

use procopt::agents::{self, AgentConfig};
use procopt::data::{ProcessSchema, Variable};
use procopt::env::{self, EnvState, Environment, FnSurrogate, TargetSpec};

fn main() -> procopt::Result<()> {
    let schema = ProcessSchema::new(
        vec![
            Variable::new("x", 0.0, 2.0, 1.0),
            Variable::new("y", 0.0, 2.0, 1.0),
        ],
        vec!["f".into(), "g".into()],
    )?;
    let surrogate = FnSurrogate::new(2, 2, |v: &[f64]| {
        vec![v[0] + 0.5 * v[1], (v[0] - v[1]).powi(2)]
    });
    let env = Environment::new(
        &schema,
        &surrogate,
        TargetSpec::new(vec![2.0, 1.0], vec![0.6, 0.4])?,
    )?;
    let cfg = AgentConfig {
        learning_rate: 0.1,
        epsilon_max: 0.5,
        episodes: 200,
        steps_per_episode: 500,
        ..AgentConfig::default()
    };
    let learned = agents::qlearning_train(&env, &cfg, 6)?;

    let n = schema.grid_size();
    let a = schema.action_count();
    let mut v = vec![0.0; n];
    loop {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let state = EnvState::from_flat_index(&schema, s);
            let mut best = f64::NEG_INFINITY;
            for action in 0..a {
                let next = env::step(&state, action, &schema)?;
                best =
                    best.max(env.reward(&state, &next) + cfg.gamma * v[next.flat_index(&schema)]);
            }
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < 1e-12 {
            break;
        }
    }

    println!(
        "{:>8} {:>10} {:>10} {:>8}",
        "state", "V*", "Q-learned", "optimal"
    );
    for s in 0..n {
        let state = EnvState::from_flat_index(&schema, s);
        let greedy = learned.table.greedy(s);
        let next = env::step(&state, greedy, &schema)?;
        let q_greedy = env.reward(&state, &next) + cfg.gamma * v[next.flat_index(&schema)];
        println!(
            "{:>8} {:>10.4} {:>10.4} {:>8}",
            format!("{:?}", state.values(&schema)),
            v[s],
            learned.table.get(s, greedy),
            (v[s] - q_greedy).abs() < 1e-9
        );
    }
    Ok(())
}
