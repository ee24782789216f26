//! K-fold grid search over forest hyperparameters for one criterion.
//!
//! ```text
//! cargo run --release --example grid_search [-- <grid.txt> <criterion-index>]
//! ```
//!
//! The grid file holds `key = v1, v2` lines, e.g. `assets/small_grid.txt`.
//! `assets/tuning_grid.txt` is the full 3960-entry grid and takes a while.

use procopt::data::{self, ProcessSchema};
use procopt::forest::{self, ForestHyperParams, ParamGrid};

fn main() -> procopt::Result<()> {
    let mut args = std::env::args().skip(1);
    let grid = match args.next() {
        Some(path) => ParamGrid::parse(&std::fs::read_to_string(&path).expect("grid file"))?,
        None => ParamGrid {
            n_estimators: vec![1, 10, 50],
            min_samples_leaf: vec![1, 4],
            ..ParamGrid::single(ForestHyperParams::default())
        },
    };
    let k: usize = args
        .next()
        .map_or(0, |a| a.parse().expect("criterion index"));

    let schema = ProcessSchema::ozonation();
    let noise = data::default_noise(&schema, data::ozonation_phantom);
    let ds = data::synth_generate(&schema, 300, &noise, 5)?;
    let entries = grid.expand();
    println!(
        "{} candidates, 3 folds, criterion {}",
        entries.len(),
        schema.criteria[k]
    );

    let cv = forest::grid_search_cv(&ds.inputs(), &ds.targets(k), &entries, 3, 5)?;
    let mut ranked = cv.table.clone();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (hp, mse) in ranked.iter().take(5) {
        println!(
            "mse {mse:.5}  trees {:>4} leaf {} split {:>2} depth {:>4} features {:?} bootstrap {}",
            hp.n_estimators,
            hp.min_samples_leaf,
            hp.min_samples_split,
            hp.max_depth.map_or("none".into(), |d| d.to_string()),
            hp.max_features,
            hp.bootstrap
        );
    }
    println!("selected: {:?}", cv.best);
    Ok(())
}
