//! Saves a freshly initialized default age model, reads it back, and shows
//! how damaged files are reported.

use faceage::model::{init_params, param_count, ModelSpec, Task};
use faceage::train::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, TrainConfig};

fn main() -> faceage::Result<()> {
    let spec = ModelSpec::default_for(Task::Age);
    println!("default age model: {} parameters", param_count(&spec));
    let ckpt = Checkpoint { params: init_params(&spec, 1), spec, config: TrainConfig::default(), epoch: 0, seed: 0 };

    let path = std::env::temp_dir().join("faceage-example-age.ckpt");
    save_checkpoint(&ckpt, &path)?;
    let back = load_checkpoint(&path)?;
    println!("wrote {} bytes to {}; reloaded identical: {}", std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0), path.display(), back == ckpt);

    let bytes = encode_checkpoint(&ckpt);
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    println!("bad magic: {}", decode_checkpoint(&bad_magic).unwrap_err());
    println!("truncated: {}", decode_checkpoint(&bytes[..bytes.len() / 2]).unwrap_err());
    Ok(())
}
