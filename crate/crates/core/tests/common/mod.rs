#![allow(dead_code)]

use std::path::{Path, PathBuf};

use faceage::data::{FaceRecord, Manifest};
use faceage::model::{forward, init_params, LayerSpec, ModelSpec, Params, Task};
use faceage::tensor::relative_error;
use faceage::train::{Checkpoint, TrainConfig};
use faceage::{Graph, Result, Tensor};

use rand::{Rng, SeedableRng};

pub mod cli;
pub mod ops;
pub mod oracles;
use rand_xoshiro::Xoshiro256PlusPlus;

/// A cheap stack over full-size inputs: one strided conv, a wide pool and
/// the task head.
pub fn tiny_spec(task: Task) -> ModelSpec {
    let mut layers = vec![
        LayerSpec::Conv { out_channels: 4, kernel: 3, stride: 4, padding: 1 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { kernel: 5, stride: 5 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 8 },
        LayerSpec::Relu,
    ];
    match task {
        Task::Age => layers.extend([LayerSpec::Dense { units: 1 }, LayerSpec::Relu]),
        Task::Gender => layers.extend([LayerSpec::Dense { units: 2 }, LayerSpec::Softmax]),
    }
    ModelSpec::new([3, 200, 200], task, layers).unwrap()
}

pub fn records(ages_genders: &[(u32, u32)]) -> Manifest {
    Manifest::new(
        ages_genders
            .iter()
            .enumerate()
            .map(|(i, &(age, g))| FaceRecord {
                path: PathBuf::from(format!("{age}_{g}_0_{i:06}.jpg")),
                age,
                raw_gender: g,
            })
            .collect(),
    )
}

pub fn zero_checkpoint(task: Task) -> Checkpoint {
    let spec = ModelSpec::default_for(task);
    Checkpoint {
        params: Params::zeros(&spec),
        spec,
        config: TrainConfig::default(),
        epoch: 0,
        seed: 0,
    }
}

pub fn uniform(shape: &[usize], lo: f32, hi: f32, rng: &mut Xoshiro256PlusPlus) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn task_loss(spec: &ModelSpec, params: &Params, x: &Tensor, ages: &Tensor, labels: &[usize]) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let bound = faceage::model::BoundParams::bind(&mut g, params, true);
    let input = g.constant(x.clone());
    let out = faceage::model::forward_graph(spec, &mut g, &bound, input)?;
    let loss = match spec.task() {
        Task::Age => {
            let t = g.constant(ages.clone());
            g.mse_loss(out, t)?
        }
        Task::Gender => g.cross_entropy_loss(out, labels)?,
    };
    let value = g.value(loss).data()[0] as f64;
    g.backward(loss)?;
    let grads = bound
        .vars
        .iter()
        .zip(params.layers())
        .flat_map(|(&(w, b), p)| {
            [
                g.grad(w).cloned().unwrap_or_else(|| Tensor::zeros(p.weight.shape())),
                g.grad(b).cloned().unwrap_or_else(|| Tensor::zeros(p.bias.shape())),
            ]
        })
        .collect();
    Ok((value, grads))
}

/// Random images made of `patch`×`patch` constant squares with values in
/// `[0, 1)`. Activations then take few distinct values, so a parameter
/// stencil rarely drags one across a ReLU kink.
pub fn patchwork(shape: &[usize], patch: usize, rng: &mut Xoshiro256PlusPlus) -> Tensor {
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (ph, pw) = (h.div_ceil(patch), w.div_ceil(patch));
    let colors: Vec<f32> = (0..b * c * ph * pw).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut data = Vec::with_capacity(b * c * h * w);
    for plane in 0..b * c {
        for y in 0..h {
            for x in 0..w {
                data.push(colors[(plane * ph + y / patch) * pw + x / patch]);
            }
        }
    }
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Values entering a ReLU, laid out `batch × channels × plane`.
pub struct PreActivation {
    pub layer: usize,
    pub channels: usize,
    pub plane: usize,
    pub values: Vec<f64>,
}

pub struct Reference {
    pub output: Vec<f64>,
    pub signature: Vec<u32>,
    pub relu_inputs: Vec<PreActivation>,
}

/// Per-channel shift that moves zero to the middle of the widest gap between
/// the channel's distinct values, searching the central 60% of them.
/// Channels with fewer than five distinct values are made fully active.
fn gap_centering_shifts(pre: &PreActivation) -> Vec<f64> {
    let batch = pre.values.len() / (pre.channels * pre.plane);
    (0..pre.channels)
        .map(|c| {
            let mut v: Vec<f64> = (0..batch)
                .flat_map(|b| {
                    let start = (b * pre.channels + c) * pre.plane;
                    pre.values[start..start + pre.plane].iter().copied()
                })
                .collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            if v.len() < 5 {
                // too few values for a reliable gap: keep them all active
                return 0.5 - v[0];
            }
            let lo = (v.len() as f64 * 0.2) as usize;
            let hi = ((v.len() as f64 * 0.8).ceil() as usize).clamp(lo + 1, v.len() - 1);
            let k = (lo..hi)
                .max_by(|&a, &b| (v[a + 1] - v[a]).total_cmp(&(v[b + 1] - v[b])))
                .unwrap();
            -(v[k] + v[k + 1]) / 2.0
        })
        .collect()
}

const TIE_TOL: f64 = 1e-12;

/// Independent `f64` forward pass: direct im2col + `dgemm` convolution,
/// dense layers, ReLU, max-pool and softmax. Besides the output it returns a
/// signature of every ReLU side and pooling winner; finite differences are
/// only meaningful where that signature does not change across the stencil.
pub fn reference_forward(spec: &ModelSpec, params: &[Vec<f64>], x: &Tensor) -> Reference {
    let b = x.shape()[0];
    let [mut c, mut h, mut w] = spec.input_shape();
    let mut cur: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let mut sig = Vec::new();
    let mut relu_inputs = Vec::new();
    let mut p = params.iter();
    let mut flat = false;
    for (li, layer) in spec.layers().iter().enumerate() {
        match *layer {
            LayerSpec::Conv { out_channels: co, kernel: k, stride: s, padding: pad } => {
                let (wt, bias) = (p.next().unwrap(), p.next().unwrap());
                let (oh, ow) = ((h + 2 * pad - k) / s + 1, (w + 2 * pad - k) / s + 1);
                let (kl, n) = (c * k * k, oh * ow);
                let mut out = vec![0.0; b * co * n];
                let mut cols = vec![0.0; kl * n];
                for bi in 0..b {
                    let img = &cur[bi * c * h * w..(bi + 1) * c * h * w];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let row = (ci * k + ky) * k + kx;
                                for oy in 0..oh {
                                    for ox in 0..ow {
                                        let iy = (oy * s + ky) as isize - pad as isize;
                                        let ix = (ox * s + kx) as isize - pad as isize;
                                        cols[row * n + oy * ow + ox] = if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                            0.0
                                        } else {
                                            img[(ci * h + iy as usize) * w + ix as usize]
                                        };
                                    }
                                }
                            }
                        }
                    }
                    let o = &mut out[bi * co * n..(bi + 1) * co * n];
                    for (oc, chunk) in o.chunks_mut(n).enumerate() {
                        chunk.fill(bias[oc]);
                    }
                    unsafe {
                        matrixmultiply::dgemm(
                            co, kl, n, 1.0,
                            wt.as_ptr(), kl as isize, 1,
                            cols.as_ptr(), n as isize, 1,
                            1.0, o.as_mut_ptr(), n as isize, 1,
                        );
                    }
                }
                cur = out;
                (c, h, w) = (co, oh, ow);
            }
            LayerSpec::MaxPool { kernel: k, stride: s } => {
                let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
                let mut out = Vec::with_capacity(b * c * oh * ow);
                for plane in cur.chunks(h * w) {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let window = (0..k * k).map(|d| (oy * s + d / k) * w + ox * s + d % k);
                            let m = window.clone().map(|i| plane[i]).fold(f64::NEG_INFINITY, f64::max);
                            // values equal up to round-off are the same function of
                            // the parameters, so the first of them stands for all
                            let tie = TIE_TOL * m.abs().max(1.0);
                            let first = window.clone().find(|&i| plane[i] >= m - tie).unwrap();
                            sig.push(first as u32);
                            out.push(m);
                        }
                    }
                }
                cur = out;
                (h, w) = (oh, ow);
            }
            LayerSpec::Flatten => {
                flat = true;
                (c, h, w) = (c * h * w, 1, 1);
            }
            LayerSpec::Dense { units } => {
                assert!(flat);
                let (wt, bias) = (p.next().unwrap(), p.next().unwrap());
                let mut out: Vec<f64> = (0..b).flat_map(|_| bias.iter().copied()).collect();
                unsafe {
                    matrixmultiply::dgemm(
                        b, c, units, 1.0,
                        cur.as_ptr(), c as isize, 1,
                        wt.as_ptr(), units as isize, 1,
                        1.0, out.as_mut_ptr(), units as isize, 1,
                    );
                }
                cur = out;
                c = units;
            }
            LayerSpec::Relu => {
                relu_inputs.push(PreActivation {
                    layer: li,
                    channels: c,
                    plane: h * w,
                    values: cur.clone(),
                });
                sig.extend(cur.iter().map(|&v| (v > 0.0) as u32));
                cur.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            LayerSpec::Softmax => {
                for row in cur.chunks_mut(c) {
                    let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                    row.iter_mut().for_each(|v| *v = (*v - m).exp());
                    let z: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= z);
                }
            }
        }
    }
    Reference {
        output: cur,
        signature: sig,
        relu_inputs,
    }
}

/// Worst relative error between the library's backprop and central
/// differences of the task loss computed by [`reference_forward`], over the
/// `per_tensor` largest analytic partials of every parameter tensor. Partials
/// under 1% of the tensor's largest are not used, since cancellation leaves
/// their f32 analytic value with too few significant digits.
///
/// The point is He-initialized weights and a batch of two random
/// [`patchwork`] images with square patches of side `patch`. Each hidden
/// bias is then placed so that zero sits in a wide gap between its channel's
/// pre-activation values, so a ±ε stencil rarely crosses a ReLU kink. The age
/// head's bias is set so both outputs are active and near 1, so the loss
/// depends on every parameter. Coordinates whose stencil still changes the
/// kink signature (a ReLU side or a pooling winner) are passed over for the
/// next one; their count is returned with each tensor's error.
pub fn model_grad_check(
    spec: &ModelSpec,
    seed: u64,
    patch: usize,
    per_tensor: usize,
) -> Result<Vec<(String, f64, usize)>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let [c, h, w] = spec.input_shape();
    let x = patchwork(&[2, c, h, w], patch, &mut rng);
    let labels = [0usize, 1];
    let mut params = init_params(spec, seed);
    let mut ages = Tensor::zeros(&[2, 1]);
    let as_f64 = |p: &Params| -> Vec<Vec<f64>> {
        p.tensors().map(|t| t.data().iter().map(|&v| v as f64).collect()).collect()
    };
    let last = spec.layers().len() - 1;
    let hidden = reference_forward(spec, &as_f64(&params), &x).relu_inputs.len()
        - usize::from(spec.task() == Task::Age);
    for r in 0..hidden {
        let pre = reference_forward(spec, &as_f64(&params), &x).relu_inputs.swap_remove(r);
        debug_assert!(pre.layer < last);
        let shifts = gap_centering_shifts(&pre);
        let owner = params.layers().iter().rposition(|lp| lp.layer < pre.layer).unwrap();
        for (b, s) in params.layers_mut()[owner].bias.data_mut().iter_mut().zip(shifts) {
            *b += s as f32;
        }
    }
    if spec.task() == Task::Age {
        // with a large bias the head is linear and reveals its pre-activation;
        // then shift it so the smaller output is 1, keeping outputs (and their
        // rounding) small
        const PROBE: f32 = 1000.0;
        params.layers_mut().last_mut().unwrap().bias.data_mut()[0] = PROBE;
        let y = forward(spec, &params, &x)?;
        let z_min = y.data().iter().fold(f32::INFINITY, |m, &v| m.min(v - PROBE));
        params.layers_mut().last_mut().unwrap().bias.data_mut()[0] = 1.0 - z_min;
        let y = forward(spec, &params, &x)?;
        assert!(y.data().iter().all(|&v| v > 0.5), "head inactive: {:?}", y.data());
        ages = Tensor::new(vec![2, 1], vec![y.data()[0] + 3.0, y.data()[1] - 2.0])?;
    }
    let (_, analytic) = task_loss(spec, &params, &x, &ages, &labels)?;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();

    let mut points: Vec<Vec<f64>> =
        params.tensors().map(|t| t.data().iter().map(|&v| v as f64).collect()).collect();
    let run = |pts: &[Vec<f64>]| -> (f64, Vec<u32>) {
        let Reference { output: y, signature: sig, .. } = reference_forward(spec, pts, &x);
        let loss = match spec.task() {
            Task::Age => {
                let t = ages.data();
                ((y[0] - t[0] as f64).powi(2) + (y[1] - t[1] as f64).powi(2)) / 2.0
            }
            Task::Gender => -(y[labels[0]].ln() + y[2 + labels[1]].ln()) / 2.0,
        };
        (loss, sig)
    };
    let (_, base) = run(&points);
    // None when the stencil crosses a kink
    let mut numeric = |i: usize, j: usize| -> Option<f64> {
        let v = points[i][j];
        let eps = faceage::tensor::EPSILON as f64;
        points[i][j] = v + eps;
        let (hi, sig_hi) = run(&points);
        points[i][j] = v - eps;
        let (lo, sig_lo) = run(&points);
        points[i][j] = v;
        (sig_hi == base && sig_lo == base).then(|| (hi - lo) / (2.0 * eps))
    };

    let mut report = Vec::new();
    for (i, grad) in analytic.iter().enumerate() {
        let mut idx: Vec<usize> = (0..grad.len()).collect();
        idx.sort_by(|&a, &b| grad.data()[b].abs().total_cmp(&grad.data()[a].abs()));
        let floor = 0.01 * grad.data()[idx[0]].abs();
        let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
        for &j in &idx {
            if checked == per_tensor || grad.data()[j].abs() < floor {
                break;
            }
            let Some(n) = numeric(i, j) else {
                skipped += 1;
                continue;
            };
            worst = worst.max(relative_error(grad.data()[j] as f64, n));
            checked += 1;
        }
        assert!(checked > 0 || floor == 0.0, "{}: no smooth coordinates", names[i]);
        report.push((names[i].clone(), worst, skipped));
    }
    Ok(report)
}

/// [`model_grad_check`] as run on the full-size default stacks: one colour
/// per channel and image, since on textured inputs the deep pooling windows
/// hold near-ties that a first-layer ε shift reorders.
pub fn default_model_grad_check(spec: &ModelSpec, seed: u64) -> Result<Vec<(String, f64, usize)>> {
    let [_, h, w] = spec.input_shape();
    model_grad_check(spec, seed, h.max(w), 2)
}

pub fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}
