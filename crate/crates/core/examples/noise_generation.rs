//! Corrupts a clean fixture under every scenario and prints what changed.

use dang_lab::graph::synthetic::PlantedPartition;
use dang_lab::noise::{generate_noise, NoiseConfig, Scenario};

fn main() -> dang_lab::Result<()> {
    let clean = PlantedPartition::default().generate(0)?;
    for scenario in Scenario::ALL {
        let cfg = NoiseConfig { scenario, eta: 0.3, seed: 1, ..NoiseConfig::default() };
        let (noisy, report) = generate_noise(&clean, &cfg)?;
        println!("{scenario:<10} edges {} -> {}  {}", clean.n_edges(), noisy.n_edges(), report.one_line());
    }

    // Without the dependency, only independent structure noise remains.
    let cfg = NoiseConfig { dep_scale: 0.0, seed: 1, ..NoiseConfig::default() };
    let (_, report) = generate_noise(&clean, &cfg)?;
    println!("dep_scale=0 {}", report.one_line());
    Ok(())
}
