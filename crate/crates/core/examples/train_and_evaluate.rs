//! Trains the default gender model for a few epochs on a synthetic set,
//! then writes the full evaluation report for the held-out part.
//!
//! cargo run --release --example train_and_evaluate -- [epochs]

use faceage::data::{generate_synthetic, holdout_split};
use faceage::metrics::evaluate;
use faceage::model::{ModelSpec, Task};
use faceage::train::{train_with, Checkpoint, TrainConfig};

fn main() -> faceage::Result<()> {
    let epochs = std::env::args().nth(1).map_or(5, |s| s.parse().expect("epochs"));
    let dir = std::env::temp_dir().join("faceage-train-example");
    let all = generate_synthetic(3, 40, &dir)?;
    let (train, test) = holdout_split(&all, 0.7, 3)?;

    let spec = ModelSpec::default_for(Task::Gender);
    let config = TrainConfig { learning_rate: 1e-3, max_epochs: epochs, batch_size: 8, seed: 3, ..TrainConfig::default() };
    let (params, log) = train_with(Task::Gender, &spec, &train, &test, &config, None, |row| {
        println!("epoch {:>3}  loss {:.4}  val accuracy {:.3}  {:.1}s", row.epoch, row.train_loss, row.val_metric, row.seconds);
    })?;
    print!("{}", log.to_csv());

    let ckpt = Checkpoint { spec, params, config, epoch: epochs, seed: all.seed };
    let report = evaluate(Task::Gender, &ckpt, &test, 1)?;
    println!("{}", report.text);
    Ok(())
}
