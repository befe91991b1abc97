//! Trains the full model on a noisy fixture and writes the per-epoch history.

use dang_lab::graph::synthetic::PlantedPartition;
use dang_lab::noise::{generate_dang, NoiseConfig};
use dang_lab::train::{train, TrainConfig};

fn main() -> dang_lab::Result<()> {
    let clean = PlantedPartition::default().generate(0)?;
    let (noisy, _) = generate_dang(&clean, &NoiseConfig { eta: 0.3, ..NoiseConfig::default() })?;
    let cfg = TrainConfig { epochs: 300, patience: 50, ..TrainConfig::default() };
    let out = train(&noisy, &cfg)?;

    for r in out.history.records.iter().step_by(10).take(8) {
        println!(
            "epoch {:>3} loss {:>9.4} train {:.3} val {:.3}{}",
            r.epoch,
            r.total,
            r.train_accuracy,
            r.val_accuracy,
            if r.frozen { " (eps_A frozen)" } else { "" }
        );
    }
    println!(
        "selected epoch {} of {}: val {:.3} test {:.3}",
        out.best_epoch,
        out.history.records.len(),
        out.val_accuracy,
        out.test_accuracy
    );
    let path = std::env::temp_dir().join("dang_history.csv");
    out.history.write_csv(&path)?;
    println!("history written to {}", path.display());
    Ok(())
}
