//! Labeled face-image manifests and the preparation steps applied to them:
//! ingestion of UTKFace-style file names, removal of invalid gender labels,
//! rebalancing of the infant age group, and the holdout split.

mod image;
mod loader;
mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::rng;

pub use self::image::{denormalize, load_image, normalize, resize_bilinear, IMAGE_SIZE};
pub use loader::{ImageBatcher, CACHE_LIMIT_BYTES};
pub use synth::{generate_synthetic, planted_age, planted_gender, SYNTH_SEPARATION};

/// Oldest age the label grammar accepts.
pub const MAX_AGE: u32 = 116;

/// Rounds half away from zero, the rule used for every count in the pipeline.
pub fn round_count(x: f64) -> usize {
    x.round() as usize
}

/// Binary gender label: `0` male, `1` female.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gender {
    Male = 0,
    Female = 1,
}

impl Gender {
    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Gender::Male),
            1 => Some(Gender::Female),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Fields encoded in a UTKFace file name `age_gender[_race[_datestamp]].ext`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtkLabels {
    pub age: u32,
    pub raw_gender: u32,
    pub race: Option<u32>,
    pub datestamp: Option<String>,
}

/// Parses a UTKFace-style file name. Everything from the first `.` on is
/// treated as extension.
pub fn parse_utk_filename(name: &str) -> Result<UtkLabels> {
    let malformed = |reason: &str| Error::MalformedName {
        name: name.to_string(),
        reason: reason.to_string(),
    };
    let stem = name.split('.').next().unwrap_or("");
    let fields: Vec<&str> = stem.split('_').collect();
    if fields.len() < 2 {
        return Err(malformed("expected at least age_gender"));
    }
    let age: u32 = fields[0]
        .parse()
        .map_err(|_| malformed("age is not a non-negative integer"))?;
    if age > MAX_AGE {
        return Err(malformed("age above 116"));
    }
    let raw_gender: u32 = fields[1]
        .parse()
        .map_err(|_| malformed("gender is not a non-negative integer"))?;
    Ok(UtkLabels {
        age,
        raw_gender,
        race: fields.get(2).and_then(|r| r.parse().ok()),
        datestamp: fields.get(3).map(|d| d.to_string()),
    })
}

/// One labeled image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub path: PathBuf,
    pub age: u32,
    /// Gender code as parsed; may be an invalid code such as `3` before
    /// filtering.
    #[serde(rename = "gender")]
    pub raw_gender: u32,
}

impl FaceRecord {
    pub fn gender(&self) -> Option<Gender> {
        Gender::from_code(self.raw_gender)
    }
}

/// One applied preparation step with its parameters and record counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub name: String,
    pub params: serde_json::Value,
    pub in_count: usize,
    pub out_count: usize,
}

/// Ordered records plus the provenance of the steps that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub steps: Vec<Step>,
    pub records: Vec<FaceRecord>,
}

impl Manifest {
    pub fn new(records: Vec<FaceRecord>) -> Self {
        Manifest {
            seed: 0,
            steps: Vec::new(),
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push_step(&mut self, name: &str, params: serde_json::Value, in_count: usize) {
        self.steps.push(Step {
            name: name.to_string(),
            params,
            in_count,
            out_count: self.records.len(),
        });
    }

    /// Canonical JSON text (pretty-printed, trailing newline).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Record counts per 10-year age bin, as `(bin_start, count)`.
    pub fn age_histogram(&self) -> Vec<(u32, usize)> {
        let mut bins = vec![0usize; (MAX_AGE / 10 + 1) as usize];
        for r in &self.records {
            bins[(r.age / 10) as usize] += 1;
        }
        let last = bins.iter().rposition(|&c| c > 0).map_or(0, |i| i + 1);
        bins.truncate(last);
        bins.into_iter()
            .enumerate()
            .map(|(i, c)| (i as u32 * 10, c))
            .collect()
    }

    /// Record counts per raw gender code, ascending by code.
    pub fn gender_counts(&self) -> Vec<(u32, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.raw_gender).or_insert(0) += 1;
        }
        counts.into_iter().collect()
    }
}

fn is_image_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    [".jpg", ".jpeg", ".png"].iter().any(|ext| lower.ends_with(ext))
}

/// Lists `dir` in lexicographic file-name order and turns every parseable
/// JPEG/PNG file name into a record. Other files are counted as skipped.
pub fn ingest_directory(dir: &Path) -> Result<Manifest> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let ty = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
        if ty.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for name in &names {
        match parse_utk_filename(name) {
            Ok(labels) if is_image_name(name) => records.push(FaceRecord {
                path: dir.join(name),
                age: labels.age,
                raw_gender: labels.raw_gender,
            }),
            _ => skipped.push(name.clone()),
        }
    }
    let mut m = Manifest::new(records);
    m.push_step(
        "ingest",
        json!({ "dir": dir.to_string_lossy(), "skipped": skipped.len(), "skipped_files": skipped }),
        names.len(),
    );
    Ok(m)
}

/// Keeps only records whose gender code is 0 or 1.
pub fn filter_invalid_gender(mut m: Manifest) -> Manifest {
    let before = m.len();
    m.records.retain(|r| r.gender().is_some());
    let removed = before - m.len();
    m.push_step("filter_gender", json!({ "removed": removed }), before);
    m
}

/// Parameters of the age-group subsampling step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rebalance {
    pub low_age: u32,
    pub high_age: u32,
    pub keep_frac: f64,
}

impl Default for Rebalance {
    fn default() -> Self {
        Rebalance {
            low_age: 1,
            high_age: 4,
            keep_frac: 0.2,
        }
    }
}

impl Rebalance {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_frac > 0.0 && self.keep_frac <= 1.0) {
            return Err(Error::Domain(format!(
                "keep_frac must be in (0, 1], got {}",
                self.keep_frac
            )));
        }
        if self.low_age > self.high_age {
            return Err(Error::Domain(format!(
                "age group [{}, {}] is empty",
                self.low_age, self.high_age
            )));
        }
        Ok(())
    }
}

/// Subsamples records aged within `[low_age, high_age]` to exactly
/// `round(keep_frac × group)` without replacement; everything else is kept.
/// Surviving records keep their relative order.
pub fn rebalance_age(mut m: Manifest, params: Rebalance, seed: u64) -> Result<Manifest> {
    params.validate()?;
    let before = m.len();
    let group: Vec<usize> = m
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| (params.low_age..=params.high_age).contains(&r.age))
        .map(|(i, _)| i)
        .collect();
    let keep_n = round_count(params.keep_frac * group.len() as f64);
    let mut rng = rng::stream(seed, rng::STREAM_REBALANCE);
    let order = rng::permutation(group.len(), &mut rng);
    let mut drop = vec![false; m.len()];
    for &g in &order[keep_n..] {
        drop[group[g]] = true;
    }
    let mut idx = 0;
    m.records.retain(|_| {
        let keep = !drop[idx];
        idx += 1;
        keep
    });
    m.seed = seed;
    m.push_step(
        "rebalance_age",
        json!({
            "low_age": params.low_age,
            "high_age": params.high_age,
            "keep_frac": params.keep_frac,
            "group_count": group.len(),
            "group_kept": keep_n,
        }),
        before,
    );
    Ok(m)
}

/// Seeded shuffle, then the first `round(train_frac × n)` shuffled records
/// form the training part. Both parts are returned in input order.
pub fn holdout_split(m: &Manifest, train_frac: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Domain(format!(
            "train_frac must be in (0, 1), got {train_frac}"
        )));
    }
    if m.is_empty() {
        return Err(Error::Domain("cannot split an empty manifest".into()));
    }
    let n = m.len();
    let n_train = round_count(train_frac * n as f64);
    let mut rng = rng::stream(seed, rng::STREAM_SPLIT);
    let order = rng::permutation(n, &mut rng);
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let part = |want: bool, name: &str| {
        let records = m
            .records
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == want)
            .map(|(r, _)| r.clone())
            .collect();
        let mut out = Manifest {
            seed,
            steps: m.steps.clone(),
            records,
        };
        out.push_step(
            "split",
            json!({ "train_frac": train_frac, "part": name }),
            n,
        );
        out
    };
    Ok((part(true, "train"), part(false, "test")))
}
