//! Tries a small learning-rate grid on the default age model and prints the
//! results table. Invalid cells are recorded as failed, not fatal.
//!
//! cargo run --release --example grid_search

use faceage::data::{generate_synthetic, holdout_split};
use faceage::model::{ModelSpec, Task};
use faceage::train::{grid_search, TrainConfig};

fn main() -> faceage::Result<()> {
    let dir = std::env::temp_dir().join("faceage-grid-example");
    let all = generate_synthetic(9, 24, &dir)?;
    let (train, val) = holdout_split(&all, 0.7, 9)?;
    let base = TrainConfig { max_epochs: 3, batch_size: 8, seed: 9, ..TrainConfig::default() };
    let grid: Vec<TrainConfig> = [1e-2, 1e-3, 0.0]
        .into_iter()
        .map(|lr| TrainConfig { learning_rate: lr, ..base.clone() })
        .collect();
    let result = grid_search(Task::Age, &ModelSpec::default_for(Task::Age), &train, &val, &grid)?;
    print!("{}", result.to_csv());
    println!("best: cell {} (lr {})", result.best_index, result.best.learning_rate);
    Ok(())
}
