//! Turns a folder of labelled images into train/test manifests: ingest,
//! drop invalid gender codes, thin out the 1–4 year group, then split 70/30.
//!
//! cargo run --example prepare_and_split -- [image_dir]
//!
//! Without an argument a synthetic folder is generated first.

use std::path::PathBuf;

use faceage::data::{
    filter_invalid_gender, generate_synthetic, holdout_split, ingest_directory, rebalance_age, Manifest, Rebalance,
};

fn histogram(m: &Manifest) {
    for (lo, count) in m.age_histogram() {
        println!("  {lo:>3}-{:<3} {count:>5} {}", lo + 9, "#".repeat(count.min(60)));
    }
}

fn main() -> faceage::Result<()> {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let d = std::env::temp_dir().join("faceage-prepare-example");
            generate_synthetic(11, 60, &d)?;
            d
        }
    };
    let seed = 42;
    let m = ingest_directory(&dir)?;
    let m = filter_invalid_gender(m);
    let m = rebalance_age(m, Rebalance::default(), seed)?;
    for step in &m.steps {
        println!("{:<14} {:>6} -> {:<6} {}", step.name, step.in_count, step.out_count, step.params);
    }
    println!("ages:");
    histogram(&m);
    println!("genders (code, count): {:?}", m.gender_counts());

    let (train, test) = holdout_split(&m, 0.7, seed)?;
    println!("split: {} train, {} test", train.len(), test.len());
    Ok(())
}
