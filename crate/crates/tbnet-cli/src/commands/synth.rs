use std::path::Path;

use tbnet::data::{synth_generate, SyntheticSpec};
use tbnet::Result;

pub fn run(out: &Path, per_class: usize, size: usize, seed: u64, noise: f64) -> Result<()> {
    let mut spec = SyntheticSpec::new(per_class, size, seed);
    spec.noise = noise;
    synth_generate(&spec, out)?;
    println!("{}", out.join("manifest.csv").display());
    Ok(())
}
