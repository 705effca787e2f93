//! Write the seeded demo corpora and a matching config into a directory.
//!
//!     cargo run --example demo_data -- /tmp/trollwatch-demo
//!     trollwatch --config /tmp/trollwatch-demo/pipeline.conf train-seg

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let dir = std::env::args_os().nth(1).map_or_else(|| PathBuf::from("demo"), PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    let corpora = trollwatch::synth::demo_corpora(7);
    let config = trollwatch::synth::write_demo_files(&corpora, &dir)?;
    println!("wrote demo corpora; config at {}", config.display());
    Ok(())
}
