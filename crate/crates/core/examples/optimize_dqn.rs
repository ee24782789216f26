//! One DQN optimization run against a target color performance, with
//! surrogates fitted on synthetic data.
//!
//! ```text
//! cargo run --release --example optimize_dqn [-- <k/s> <L*> <a*> <b*>]
//! ```

use procopt::agents::{self, AgentConfig};
use procopt::ahp::{self, ComparisonMatrix};
use procopt::data::{self, ProcessSchema};
use procopt::env::{Environment, ForestSurrogate, TargetSpec};
use procopt::forest::{self, ForestHyperParams};

fn main() -> procopt::Result<()> {
    let targets: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("target"))
        .collect();
    let targets = if targets.is_empty() {
        vec![0.81, 15.76, -20.84, -70.79]
    } else {
        targets
    };

    let schema = ProcessSchema::ozonation();
    let noise = data::default_noise(&schema, data::ozonation_phantom);
    let ds = data::synth_generate(&schema, 500, &noise, 1)?;
    let models = (0..schema.n_criteria())
        .map(|k| forest::fit_forest_on(&ds, k, &ForestHyperParams::default(), k as u64))
        .collect::<procopt::Result<Vec<_>>>()?;
    let surrogate = ForestSurrogate::new(&schema, models)?;
    let weights = ahp::derive_weights(&ComparisonMatrix::ozonation())?.weights;
    let env = Environment::new(
        &schema,
        &surrogate,
        TargetSpec::new(targets.clone(), weights)?,
    )?;

    let cfg = AgentConfig::default();
    let out = agents::dqn_train(&env, &cfg, 2024)?;

    let losses = out.log.losses();
    let tenth = (losses.len() / 10).max(1);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "{} steps, {} gradient steps; mean loss first/last 10%: {:.4e} / {:.4e}",
        out.log.steps.len(),
        losses.len(),
        mean(&losses[..tenth]),
        mean(&losses[losses.len() - tenth..])
    );
    for e in &out.log.episodes {
        println!(
            "episode {}: {} distinct states",
            e.episode + 1,
            e.distinct_states
        );
    }
    println!(
        "best error {:.4} first reached at step {}",
        out.best_error, out.best_step
    );
    let predicted = env.predict(&out.best_state);
    for (v, x) in schema.variables.iter().zip(out.best_state.values(&schema)) {
        println!("  {:>13} = {x}", v.name);
    }
    for ((c, t), p) in schema.criteria.iter().zip(&targets).zip(&predicted) {
        println!("  {c:>13}: target {t:8.3}  simulated {p:8.3}");
    }
    Ok(())
}
