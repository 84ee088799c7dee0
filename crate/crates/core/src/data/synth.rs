//! Synthetic face-free fixtures with a planted, learnable signal.
//!
//! Each image is a 200×200 noisy colour field. Its overall mean brightness
//! `b` determines the age label (`round(b/255 · 80)`), and whichever of the
//! red and blue channels has the larger mean determines gender (red → 0,
//! otherwise 1). The two channel means differ by at least
//! [`SYNTH_SEPARATION`]. Labels are computed from the pixels actually written.

use std::path::Path;

use ::image::{Rgb, RgbImage};
use rand::RngCore;
use serde_json::json;

use super::{FaceRecord, Gender, Manifest, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::rng;

/// Minimum gap between the red and blue channel means.
pub const SYNTH_SEPARATION: f64 = 40.0;

const CHANNEL_GAP: f64 = 48.0;
const NOISE: u64 = 8;

pub fn planted_age(brightness: f64) -> u32 {
    (brightness / 255.0 * 80.0).round() as u32
}

pub fn planted_gender(red_mean: f64, blue_mean: f64) -> Gender {
    if red_mean > blue_mean {
        Gender::Male
    } else {
        Gender::Female
    }
}

fn unit(r: &mut rng::Rng) -> f64 {
    (r.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Channel means `(dominant, recessive, green)` with overall mean as close
/// to `b` as the `[0, 255]` range allows.
fn channel_targets(b: f64) -> (f64, f64, f64) {
    let (mut hi, mut lo) = (b + CHANNEL_GAP / 2.0, b - CHANNEL_GAP / 2.0);
    if lo < 0.0 {
        hi -= lo;
        lo = 0.0;
    }
    if hi > 255.0 {
        lo -= hi - 255.0;
        hi = 255.0;
    }
    let green = (3.0 * b - hi - lo).clamp(0.0, 255.0);
    (hi, lo, green)
}

/// Writes `n` PNG fixtures into `out_dir` and returns their manifest in
/// file-name order.
pub fn generate_synthetic(seed: u64, n: usize, out_dir: &Path) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::Domain("synthetic set needs at least one image".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut r = rng::stream(seed, rng::STREAM_SYNTH);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let b = unit(&mut r) * 255.0;
        let male = rng::below(&mut r, 2) == 0;
        let (hi, lo, green) = channel_targets(b);
        let (red, blue) = if male { (hi, lo) } else { (lo, hi) };

        let mut img = RgbImage::new(IMAGE_SIZE as u32, IMAGE_SIZE as u32);
        let mut sums = [0u64; 3];
        for px in img.pixels_mut() {
            let mut v = [0u8; 3];
            for (c, base) in [red, green, blue].into_iter().enumerate() {
                let noise = rng::below(&mut r, 2 * NOISE + 1) as f64 - NOISE as f64;
                v[c] = (base + noise).round().clamp(0.0, 255.0) as u8;
                sums[c] += v[c] as u64;
            }
            *px = Rgb(v);
        }
        let count = (IMAGE_SIZE * IMAGE_SIZE) as f64;
        let means = sums.map(|s| s as f64 / count);
        let brightness = means.iter().sum::<f64>() / 3.0;
        let age = planted_age(brightness);
        let gender = planted_gender(means[0], means[2]);
        debug_assert_eq!(gender == Gender::Male, male);

        let name = format!("{age}_{}_0_{i:06}.png", gender.index());
        let path = out_dir.join(&name);
        img.save(&path).map_err(|e| match e {
            ::image::ImageError::IoError(io) => Error::io(&path, io),
            other => Error::io(&path, std::io::Error::other(other.to_string())),
        })?;
        records.push(FaceRecord {
            path,
            age,
            raw_gender: gender.index() as u32,
        });
    }
    records.sort_by(|a, b| a.path.cmp(&b.path));
    let mut m = Manifest::new(records);
    m.seed = seed;
    m.push_step("synth", json!({ "seed": seed, "n": n }), 0);
    Ok(m)
}
