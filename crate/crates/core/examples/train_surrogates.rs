//! Fits one random forest per ozonation criterion on synthetic data and
//! reports held-out R² for a range of master seeds.
//!
//! ```text
//! cargo run --release --example train_surrogates [-- <noise-scale> <seeds> <rows>]
//! ```
//!
//! `noise-scale` multiplies the default noise (2% of each criterion's range);
//! pass 0 for noise-free data.

use procopt::data::{self, ProcessSchema};
use procopt::forest::{self, ForestHyperParams};
use procopt::seed::{self, stream};

fn main() -> procopt::Result<()> {
    let mut args = std::env::args().skip(1);
    let scale: f64 = args.next().map_or(1.0, |a| a.parse().expect("noise scale"));
    let seeds: u64 = args.next().map_or(5, |a| a.parse().expect("seed count"));
    let rows: usize = args.next().map_or(500, |a| a.parse().expect("row count"));

    let schema = ProcessSchema::ozonation();
    let noise: Vec<f64> = data::default_noise(&schema, data::ozonation_phantom)
        .iter()
        .map(|s| s * scale)
        .collect();
    let hp = ForestHyperParams::default();

    print!("{:>6}", "seed");
    for c in &schema.criteria {
        print!(" {c:>10}");
    }
    println!();
    for master in 0..seeds {
        let ds = data::synth_generate(
            &schema,
            rows,
            &noise,
            seed::derive(master, stream::SYNTH, 0),
        )?;
        let (train, test) = data::split(&ds, 0.75, seed::derive(master, stream::SPLIT, 0))?;
        print!("{master:>6}");
        for k in 0..schema.n_criteria() {
            let model = forest::fit_forest_on(
                &train,
                k,
                &hp,
                seed::derive(master, stream::FOREST, k as u64),
            )?;
            let m = forest::evaluate(&model, &test.inputs(), &test.targets(k))?;
            print!(" {:>10.4}", m.r2);
        }
        println!();
    }
    Ok(())
}
