use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side length every image is resized to.
pub const IMAGE_SIZE: usize = 200;

const PIXEL_MAX: f32 = 255.0;

/// Decodes a JPEG or PNG as RGB (grayscale is replicated) and resizes it to
/// `3×200×200` channels-first, raw values in `[0, 255]`.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let decode_err = |reason: String| Error::ImageDecode {
        path: path.to_path_buf(),
        reason,
    };
    let img = ::image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut planes = vec![0.0f32; 3 * h * w];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            planes[c * h * w + i] = px[c] as f32;
        }
    }
    let data = if (h, w) == (IMAGE_SIZE, IMAGE_SIZE) {
        planes
    } else {
        resize_bilinear(&planes, 3, h, w, IMAGE_SIZE, IMAGE_SIZE)
    };
    Tensor::new(vec![3, IMAGE_SIZE, IMAGE_SIZE], data)
}

/// Bilinear resize of `channels` planes of `h×w`, sampling at pixel centres
/// (`src = (dst + ½)·scale − ½`) and clamping at the edges.
pub fn resize_bilinear(
    src: &[f32],
    channels: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    assert_eq!(src.len(), channels * h * w);
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = taps(out_h, h);
    let xs = taps(out_w, w);
    let mut out = Vec::with_capacity(channels * out_h * out_w);
    for c in 0..channels {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let at = |y: usize, x: usize| plane[y * w + x] as f64;
                let top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
                let bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
                out.push((top + fy * (bottom - top)) as f32);
            }
        }
    }
    out
}

/// Min-max scaling over the fixed 8-bit range: `v / 255`.
pub fn normalize(t: &Tensor) -> Tensor {
    let data = t.data().iter().map(|&v| v / PIXEL_MAX).collect();
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

/// Inverse of [`normalize`].
pub fn denormalize(t: &Tensor) -> Tensor {
    let data = t.data().iter().map(|&v| v * PIXEL_MAX).collect();
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_resize_is_exact() {
        let src: Vec<f32> = (0..2 * 3 * 4).map(|v| v as f32 * 3.5).collect();
        assert_eq!(resize_bilinear(&src, 2, 3, 4, 3, 4), src);
    }

    #[test]
    fn constant_field_stays_constant() {
        let src = vec![77.0f32; 400 * 400];
        let out = resize_bilinear(&src, 1, 400, 400, 200, 200);
        assert!(out.iter().all(|&v| v == 77.0));
    }

    #[test]
    fn upsample_two_by_two() {
        // oracle: output column x samples source column (x + ½)/2 − ½,
        // clamped to [0, 1], and interpolates 0 → 255 linearly
        let src = [0.0, 255.0, 0.0, 255.0];
        let out = resize_bilinear(&src, 1, 2, 2, 4, 4);
        let expected_row: Vec<f32> = (0..4)
            .map(|x| {
                let s: f64 = ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, 1.0);
                (255.0 * s) as f32
            })
            .collect();
        assert_eq!(expected_row, vec![0.0, 63.75, 191.25, 255.0]);
        for row in out.chunks(4) {
            assert_eq!(row, expected_row.as_slice());
        }
    }

    #[test]
    fn normalize_endpoints() {
        let t = Tensor::from_vec(vec![0.0, 128.0, 255.0]);
        let n = normalize(&t);
        assert_eq!(n.data()[0], 0.0);
        assert!((n.data()[1] - 0.501_960_8).abs() < 1e-6);
        assert_eq!(n.data()[2], 1.0);
        let z = normalize(&Tensor::zeros(&[3, 2, 2]));
        assert!(z.data().iter().all(|&v| v == 0.0));
    }
}
