//! Criteria weights and consistency check from a pairwise comparison matrix.
//!
//! ```text
//! cargo run --example ahp_weights [-- <matrix.csv> [threshold]]
//! ```
//!
//! Without arguments the ozonation case-study matrix is used.

use procopt::ahp::{self, ComparisonMatrix, DEFAULT_CR_THRESHOLD};

fn main() -> procopt::Result<()> {
    let mut args = std::env::args().skip(1);
    let matrix = match args.next() {
        Some(path) => ComparisonMatrix::load(path)?,
        None => ComparisonMatrix::ozonation(),
    };
    let threshold = args
        .next()
        .map_or(DEFAULT_CR_THRESHOLD, |t| t.parse().expect("threshold"));

    let w = ahp::derive_weights(&matrix)?;
    println!("{:>4} {:>10} {:>10}", "i", "GM", "weight");
    for (i, (gm, wi)) in w.geometric_means.iter().zip(&w.weights).enumerate() {
        println!("{:>4} {gm:>10.4} {wi:>10.4}", i + 1);
    }
    println!("lambda_max = {:.4}, CI = {:.4}", w.lambda_max, w.ci);
    match w.cr {
        Some(cr) => println!("CR = {cr:.4} (RCI {:.2})", ahp::random_index(matrix.size())),
        None => println!("CR undefined for {} criteria", matrix.size()),
    }
    println!(
        "verdict at {threshold}: {:?}",
        ahp::check_consistency(&w, threshold)
    );

    // a unit improvement on every criterion is worth exactly one unit overall
    let total = ahp::aggregate_objective(&w.weights, &vec![1.0; matrix.size()])?;
    println!("aggregate of all-ones = {total:.6}");
    Ok(())
}
