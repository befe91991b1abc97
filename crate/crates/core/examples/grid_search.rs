//! Small parallel grid over learning rate and the edge-loss weight.

use dang_lab::graph::synthetic::PlantedPartition;
use dang_lab::noise::{generate_dang, NoiseConfig};
use dang_lab::train::{grid_search, Grid, TrainConfig};

fn main() -> dang_lab::Result<()> {
    let clean = PlantedPartition::default().generate(0)?;
    let (noisy, _) = generate_dang(&clean, &NoiseConfig::default())?;
    let grid = Grid { lr: vec![0.01, 0.001], lambda1: vec![0.03, 0.3, 3.0], ..Grid::default() };
    let base = TrainConfig { epochs: 200, patience: 50, ..TrainConfig::default() };
    let rep = grid_search(&noisy, &base, &grid)?;
    for c in &rep.cells {
        let mark = if c.index == rep.best { "*" } else { " " };
        println!(
            "{mark} lr {:<6} lambda1 {:<5} val {:.3} test {:.3}",
            c.config.lr,
            c.config.hp.lambda1,
            c.val_accuracy.unwrap_or(f64::NAN),
            c.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
