//! Runs one image through an age model and a gender model. Models come from
//! checkpoints if given, otherwise freshly initialized ones are used.
//!
//! cargo run --example predict -- [image] [age.ckpt gender.ckpt]

use std::path::PathBuf;

use faceage::data::{generate_synthetic, load_image, normalize};
use faceage::metrics::argmax;
use faceage::model::{forward, init_params, ModelSpec, Params, Task};
use faceage::train::load_checkpoint;

fn model(task: Task, path: Option<&String>) -> faceage::Result<(ModelSpec, Params)> {
    match path {
        Some(p) => {
            let c = load_checkpoint(p.as_ref())?;
            Ok((c.spec, c.params))
        }
        None => {
            let spec = ModelSpec::default_for(task);
            let params = init_params(&spec, 0);
            Ok((spec, params))
        }
    }
}

fn main() -> faceage::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let image = match args.first() {
        Some(p) => PathBuf::from(p),
        None => generate_synthetic(1, 1, &std::env::temp_dir().join("faceage-predict-example"))?.records[0].path.clone(),
    };
    let x = normalize(&load_image(&image)?).reshape(&[1, 3, 200, 200])?;

    let (age_spec, age_params) = model(Task::Age, args.get(1))?;
    let (gender_spec, gender_params) = model(Task::Gender, args.get(2))?;
    let age = forward(&age_spec, &age_params, &x)?.data()[0];
    let probs = forward(&gender_spec, &gender_params, &x)?;
    let class = argmax(probs.data());
    println!("{}: age {age:.1}, gender {class}, p {:.3}", image.display(), probs.data()[class]);
    Ok(())
}
