//! Every pipeline stage on the bundled case-study configuration, the same
//! sequence the `procopt` binary runs one subcommand at a time.
//!
//! ```text
//! cargo run --release --example full_pipeline [-- <out-dir>]
//! ```

use std::path::{Path, PathBuf};

use procopt::config::RunConfig;
use procopt::pipeline;

fn main() -> procopt::Result<()> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let mut cfg = RunConfig::load(assets.join("procopt.toml"))?;
    if let Some(out) = std::env::args().nth(1) {
        cfg.out = PathBuf::from(out);
    }
    let mut stdout = std::io::stdout();
    pipeline::cmd_synth(&cfg, &mut stdout)?;
    pipeline::cmd_train(&cfg, &mut stdout)?;
    pipeline::cmd_ahp(&cfg, &mut stdout)?;
    pipeline::cmd_optimize(&cfg, &mut stdout)?;
    pipeline::cmd_compare(&cfg, &mut stdout)?;
    pipeline::cmd_report(&cfg, &mut stdout)?;
    Ok(())
}
