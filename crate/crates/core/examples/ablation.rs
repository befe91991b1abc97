//! Trains every model variant on the same DANG-50% graph, each with its
//! learning rate picked on validation accuracy.

use dang_lab::dagnn::Ablation;
use dang_lab::eval::{gcn_baseline, BaselineConfig};
use dang_lab::graph::synthetic::PlantedPartition;
use dang_lab::noise::{generate_dang, NoiseConfig};
use dang_lab::train::{grid_search, Grid, TrainConfig, LR_GRID};

fn main() -> dang_lab::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let clean = PlantedPartition::default().generate(seed)?;
    let (noisy, _) = generate_dang(&clean, &NoiseConfig { eta: 0.5, seed, ..NoiseConfig::default() })?;
    let grid = Grid { lr: LR_GRID.to_vec(), ..Grid::default() };

    for ablation in Ablation::ALL {
        let base = TrainConfig { seed, ablation, ..TrainConfig::default() };
        let rep = grid_search(&noisy, &base, &grid)?;
        let best = &rep.cells[rep.best];
        println!(
            "{ablation:<6} lr {:<6} val {:.3} test {:.3}",
            best.config.lr,
            best.val_accuracy.unwrap_or(f64::NAN),
            best.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    let gcn = gcn_baseline(&noisy, &BaselineConfig { seed, ..BaselineConfig::default() })?;
    println!("gcn    val {:.3} test {:.3}", gcn.val_accuracy, gcn.test_accuracy);
    Ok(())
}
