//! Trains both default models on a small synthetic set until they memorize
//! it, printing the loss curve.
//!
//! cargo run --release --example overfit_synthetic -- [n] [epochs] [lr]

use faceage::data::{generate_synthetic, ImageBatcher};
use faceage::model::{ModelSpec, Task};
use faceage::train::{dataset_loss, predict_outputs, task_metric, train_with, Targets, TrainConfig};

fn main() -> faceage::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(32, |s| s.parse().expect("n"));
    let epochs: usize = args.get(1).map_or(150, |s| s.parse().expect("epochs"));
    let lr: f64 = args.get(2).map_or(1e-3, |s| s.parse().expect("lr"));

    let dir = std::env::temp_dir().join("faceage-overfit");
    let set = generate_synthetic(7, n, &dir)?;
    let cfg = TrainConfig {
        learning_rate: lr,
        max_epochs: epochs,
        seed: 7,
        ..TrainConfig::default()
    };
    for task in [Task::Gender, Task::Age] {
        let spec = ModelSpec::default_for(task);
        let start = std::time::Instant::now();
        let (params, _) = train_with(task, &spec, &set, &set, &cfg, None, |row| {
            if row.epoch % 10 == 0 || row.epoch <= 5 {
                println!(
                    "{task} epoch {:>3}  loss {:>10.4}  val {:.4}  {:.1}s",
                    row.epoch, row.train_loss, row.val_metric, row.seconds
                );
            }
        })?;
        let images = ImageBatcher::new(&set.records, 1)?;
        let targets = Targets::from_manifest(task, &set)?;
        let outputs = predict_outputs(&spec, &params, &images, cfg.batch_size)?;
        println!(
            "{task}: final training loss {:.4}, metric {:.4}, {:.1}s",
            dataset_loss(&spec, &params, &images, &targets, cfg.batch_size)?,
            task_metric(&targets, &outputs)?,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
