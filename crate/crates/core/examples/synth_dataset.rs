//! Draws a synthetic ozonation dataset, writes it as CSV, and splits it.
//!
//! ```text
//! cargo run --example synth_dataset [-- <rows> <out.csv>]
//! ```

use procopt::data::{self, ProcessSchema};

fn main() -> procopt::Result<()> {
    let mut args = std::env::args().skip(1);
    let rows: usize = args.next().map_or(129, |a| a.parse().expect("row count"));
    let path = args.next().unwrap_or_else(|| "synthetic.csv".into());

    let schema = ProcessSchema::ozonation();
    let noise = data::default_noise(&schema, data::ozonation_phantom);
    for ((c, (lo, hi)), s) in schema
        .criteria
        .iter()
        .zip(data::phantom_ranges(&schema, data::ozonation_phantom))
        .zip(&noise)
    {
        println!("{c:>9}: range [{lo:8.3}, {hi:8.3}], noise sigma {s:.4}");
    }

    let ds = data::synth_generate(&schema, rows, &noise, 42)?;
    ds.write_csv(&path)?;
    let back = data::load_csv(&path, &schema)?;
    assert_eq!(back, ds);

    let (train, test) = data::split(&ds, 0.75, 42)?;
    println!(
        "wrote {} rows to {path}; split {} train / {} test",
        ds.len(),
        train.len(),
        test.len()
    );
    Ok(())
}
