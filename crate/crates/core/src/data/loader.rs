use std::path::PathBuf;

use super::image::{load_image, normalize, IMAGE_SIZE};
use super::FaceRecord;
use crate::error::Result;
use crate::tensor::Tensor;

/// Decoded sets at or below this many bytes are kept in memory.
pub const CACHE_LIMIT_BYTES: usize = 1 << 30;

const IMAGE_FLOATS: usize = 3 * IMAGE_SIZE * IMAGE_SIZE;

/// Assembles normalized `B×3×200×200` batches from image files.
///
/// Small sets are decoded once up front; larger ones are decoded per batch.
/// With `threads > 1` decoding is split across scoped threads, but images are
/// always placed in the requested order, so the batch is identical to the
/// single-threaded one.
#[derive(Debug)]
pub struct ImageBatcher {
    paths: Vec<PathBuf>,
    cache: Option<Vec<Tensor>>,
    threads: usize,
}

impl ImageBatcher {
    pub fn new(records: &[FaceRecord], threads: usize) -> Result<Self> {
        let mut b = ImageBatcher {
            paths: records.iter().map(|r| r.path.clone()).collect(),
            cache: None,
            threads: threads.max(1),
        };
        if b.paths.len() * IMAGE_FLOATS * 4 <= CACHE_LIMIT_BYTES {
            let all: Vec<usize> = (0..b.paths.len()).collect();
            b.cache = Some(b.decode(&all)?);
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    fn decode(&self, indices: &[usize]) -> Result<Vec<Tensor>> {
        let one = |i: usize| load_image(&self.paths[i]).map(|t| normalize(&t));
        if self.threads == 1 || indices.len() < 2 {
            return indices.iter().map(|&i| one(i)).collect();
        }
        let chunk = indices.len().div_ceil(self.threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = indices
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|&i| one(i)).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::with_capacity(indices.len());
            for h in handles {
                out.extend(h.join().expect("decoder thread panicked")?);
            }
            Ok(out)
        })
    }

    /// The images at `indices`, stacked in that order.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        match &self.cache {
            Some(cache) => {
                let mut data = Vec::with_capacity(indices.len() * IMAGE_FLOATS);
                for &i in indices {
                    data.extend_from_slice(cache[i].data());
                }
                Tensor::new(vec![indices.len(), 3, IMAGE_SIZE, IMAGE_SIZE], data)
            }
            None => Tensor::stack(&self.decode(indices)?),
        }
    }
}
