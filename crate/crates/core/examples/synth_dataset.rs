//! Generating a synthetic dataset and reading it back.
//!
//! cargo run --example synth_dataset -- [N] [OUT]

use edm_pose::data::{read_dataset, synth_dataset, write_jsonl, Split, SynthConfig};
use edm_pose::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let out = args.next().unwrap_or_else(|| std::env::temp_dir().join("synth.jsonl").display().to_string());

    let mut cfg = SynthConfig::new(n, 42);
    cfg.val_fraction = 0.1;
    cfg.noise_sigma = 1.0;
    let records = synth_dataset(&cfg)?;
    write_jsonl(&out, &records)?;

    let back = read_dataset(&out, 14)?;
    let count = |s| back.iter().filter(|r| r.split == s).count();
    println!("{out}: {} train, {} val, {} test", count(Split::Train), count(Split::Val), count(Split::Test));
    let r = &back[0];
    println!("{}: head at {:?} px, {:?} mm", r.id, r.joints2d[0], r.joints3d[0]);
    Ok(())
}
