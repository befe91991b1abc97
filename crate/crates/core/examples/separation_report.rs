//! Do learned edge probabilities rank injected edges below clean ones?

use dang_lab::dagnn::GraphContext;
use dang_lab::eval::SeparationReport;
use dang_lab::graph::synthetic::PlantedPartition;
use dang_lab::noise::{generate_dang, NoiseConfig};
use dang_lab::train::{train, TrainConfig};

fn main() -> dang_lab::Result<()> {
    let clean = PlantedPartition::default().generate(0)?;
    let (noisy, report) = generate_dang(&clean, &NoiseConfig { eta: 0.3, ..NoiseConfig::default() })?;
    let out = train(&noisy, &TrainConfig::default())?;

    let ctx = GraphContext::new(&noisy, &out.model.hp)?;
    let p_hat = out.state.p_hat_observed(&ctx);
    let sep = SeparationReport::new(&noisy.edges, &p_hat, &out.state.p_el, &report.injected_edges())?;
    for (name, s) in [("p_hat", &sep.p_hat), ("p_el", &sep.p_el)] {
        println!(
            "{name:<5} noisy {:.3} (n={}) clean {:.3} (n={}) z {:.2} p(noisy<clean) {:.2e}",
            s.mean_noisy, s.n_noisy, s.mean_clean, s.n_clean, s.test.z, s.test.p_less
        );
    }
    Ok(())
}
