//! Declarative CNN layer stacks for the two tasks, their parameters, and the
//! forward pass.
//!
//! Both default stacks share a four-block convolutional trunk
//! (`conv3×3 → ReLU → maxpool2` with 16, 32, 64, 64 channels) followed by a
//! 128-unit dense layer. The age model ends in a single ReLU unit, the gender
//! model in two logits and a softmax.

use std::fmt;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::rng;
use crate::tensor::{Graph, Tensor, Var};

const AGE_DEFAULT: &str = include_str!("../specs/age_default.json");
const GENDER_DEFAULT: &str = include_str!("../specs/gender_default.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Age,
    Gender,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Age => "age",
            Task::Gender => "gender",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "age" => Ok(Task::Age),
            "gender" => Ok(Task::Gender),
            other => Err(Error::Domain(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Relu,
    Softmax,
}

impl LayerSpec {
    fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Softmax => "softmax",
        }
    }
}

/// Activation shape between layers (batch axis excluded).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActShape {
    Image { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ActShape {
    pub fn numel(self) -> usize {
        match self {
            ActShape::Image { c, h, w } => c * h * w,
            ActShape::Flat(n) => n,
        }
    }
}

/// Weight and bias shapes of a parameterized layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamShape {
    pub layer: usize,
    pub weight: Vec<usize>,
    pub bias: Vec<usize>,
    pub fan_in: usize,
}

#[derive(Deserialize)]
struct RawModelSpec {
    input_shape: [usize; 3],
    task: Task,
    layers: Vec<LayerSpec>,
}

/// A validated layer stack. Construction (including deserialization) fails
/// unless shapes propagate through every layer and the head matches the
/// task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec")]
pub struct ModelSpec {
    input_shape: [usize; 3],
    task: Task,
    layers: Vec<LayerSpec>,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModelSpec) -> Result<Self> {
        ModelSpec::new(raw.input_shape, raw.task, raw.layers)
    }
}

impl ModelSpec {
    pub fn new(input_shape: [usize; 3], task: Task, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = ModelSpec {
            input_shape,
            task,
            layers,
        };
        spec.shapes()?;
        let head = match task {
            Task::Age => [LayerSpec::Dense { units: 1 }, LayerSpec::Relu],
            Task::Gender => [LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
        };
        if !spec.layers.ends_with(&head) {
            return Err(Error::Contract(format!(
                "{task} model must end with {} → {}",
                head[0].name(),
                head[1].name()
            )));
        }
        Ok(spec)
    }

    /// Stack used unless another is supplied.
    pub fn default_for(task: Task) -> Self {
        let text = match task {
            Task::Age => AGE_DEFAULT,
            Task::Gender => GENDER_DEFAULT,
        };
        serde_json::from_str(text).expect("bundled spec is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Domain(format!("invalid model spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Activation shape after each layer, starting with the input.
    pub fn shapes(&self) -> Result<Vec<ActShape>> {
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return dim_err(format!("input shape {:?} has a zero dimension", self.input_shape));
        }
        let mut cur = ActShape::Image { c, h, w };
        let mut out = vec![cur];
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |msg: String| -> Result<ActShape> {
                dim_err(format!("layer {i} ({}): {msg}", layer.name()))
            };
            cur = match (*layer, cur) {
                (LayerSpec::Conv { out_channels, kernel, stride, padding }, ActShape::Image { h, w, .. }) => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        fail("channels, kernel and stride must be positive".into())?
                    } else if kernel > h + 2 * padding || kernel > w + 2 * padding {
                        fail(format!("kernel {kernel} larger than padded {h}×{w}"))?
                    } else {
                        ActShape::Image {
                            c: out_channels,
                            h: (h + 2 * padding - kernel) / stride + 1,
                            w: (w + 2 * padding - kernel) / stride + 1,
                        }
                    }
                }
                (LayerSpec::MaxPool { kernel, stride }, ActShape::Image { c, h, w }) => {
                    if kernel == 0 || stride == 0 {
                        fail("kernel and stride must be positive".into())?
                    } else if kernel > h || kernel > w {
                        fail(format!("window {kernel} larger than {h}×{w}"))?
                    } else {
                        ActShape::Image {
                            c,
                            h: (h - kernel) / stride + 1,
                            w: (w - kernel) / stride + 1,
                        }
                    }
                }
                (LayerSpec::Flatten, s) => ActShape::Flat(s.numel()),
                (LayerSpec::Dense { units }, ActShape::Flat(_)) => {
                    if units == 0 {
                        fail("units must be positive".into())?
                    } else {
                        ActShape::Flat(units)
                    }
                }
                (LayerSpec::Relu, s) => s,
                (LayerSpec::Softmax, s @ ActShape::Flat(_)) => s,
                (_, s) => fail(format!("cannot follow activation shape {s:?}"))?,
            };
            out.push(cur);
        }
        Ok(out)
    }

    /// Shapes of every parameter tensor, in layer order.
    pub fn param_shapes(&self) -> Vec<ParamShape> {
        let shapes = self.shapes().expect("validated at construction");
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, layer)| match (*layer, shapes[i]) {
                (LayerSpec::Conv { out_channels, kernel, .. }, ActShape::Image { c, .. }) => Some(ParamShape {
                    layer: i,
                    weight: vec![out_channels, c, kernel, kernel],
                    bias: vec![out_channels],
                    fan_in: c * kernel * kernel,
                }),
                (LayerSpec::Dense { units }, ActShape::Flat(n)) => Some(ParamShape {
                    layer: i,
                    weight: vec![n, units],
                    bias: vec![units],
                    fan_in: n,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn output_width(&self) -> usize {
        match self.task {
            Task::Age => 1,
            Task::Gender => 2,
        }
    }
}

/// Total number of scalar parameters.
pub fn param_count(spec: &ModelSpec) -> usize {
    spec.param_shapes()
        .iter()
        .map(|p| p.weight.iter().product::<usize>() + p.bias[0])
        .sum()
}

/// Weight and bias of one parameterized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub layer: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Parameters of a model, one entry per conv/dense layer in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    layers: Vec<LayerParams>,
}

impl Params {
    /// Wraps layer parameters after checking them against `spec`.
    pub fn new(spec: &ModelSpec, layers: Vec<LayerParams>) -> Result<Self> {
        let shapes = spec.param_shapes();
        if shapes.len() != layers.len() {
            return dim_err(format!(
                "spec has {} parameterized layers, got {}",
                shapes.len(),
                layers.len()
            ));
        }
        for (s, p) in shapes.iter().zip(&layers) {
            if s.layer != p.layer || s.weight != p.weight.shape() || s.bias != p.bias.shape() {
                return dim_err(format!(
                    "layer {} expects weight {:?} and bias {:?}, got layer {} with {:?} and {:?}",
                    s.layer,
                    s.weight,
                    s.bias,
                    p.layer,
                    p.weight.shape(),
                    p.bias.shape()
                ));
            }
        }
        Ok(Params { layers })
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        let layers = spec
            .param_shapes()
            .into_iter()
            .map(|s| LayerParams {
                layer: s.layer,
                weight: Tensor::zeros(&s.weight),
                bias: Tensor::zeros(&s.bias),
            })
            .collect();
        Params { layers }
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    /// Weight then bias of each layer, in layer order.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|p| [&mut p.weight, &mut p.bias])
            .collect()
    }

    /// Flat `(name, tensor)` view: `"{layer}.weight"`, `"{layer}.bias"`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .flat_map(|p| {
                [
                    (format!("{}.weight", p.layer), &p.weight),
                    (format!("{}.bias", p.layer), &p.bias),
                ]
            })
            .collect()
    }

    /// Inverse of [`named_tensors`](Self::named_tensors).
    pub fn from_named(spec: &ModelSpec, mut named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut layers = Vec::new();
        for s in spec.param_shapes() {
            let mut take = |suffix: &str| -> Result<Tensor> {
                let key = format!("{}.{suffix}", s.layer);
                let pos = named
                    .iter()
                    .position(|(n, _)| *n == key)
                    .ok_or_else(|| Error::Dimension(format!("missing parameter {key}")))?;
                Ok(named.swap_remove(pos).1)
            };
            let weight = take("weight")?;
            let bias = take("bias")?;
            layers.push(LayerParams {
                layer: s.layer,
                weight,
                bias,
            });
        }
        if let Some((extra, _)) = named.first() {
            return dim_err(format!("unexpected parameter {extra}"));
        }
        Params::new(spec, layers)
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|p| p.weight.all_finite() && p.bias.all_finite())
    }
}

/// He-normal weights (`std = √(2/fan_in)`) and zero biases, drawn in layer
/// order from the seed's init stream.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Params {
    let mut r = rng::stream(seed, rng::STREAM_INIT);
    let layers = spec
        .param_shapes()
        .into_iter()
        .map(|s| {
            let std = (2.0 / s.fan_in as f64).sqrt();
            let n: usize = s.weight.iter().product();
            let data = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    (z * std) as f32
                })
                .collect();
            LayerParams {
                layer: s.layer,
                weight: Tensor::new(s.weight, data).unwrap(),
                bias: Tensor::zeros(&s.bias),
            }
        })
        .collect();
    Params { layers }
}

/// Parameters registered on a graph, parallel to [`Params::layers`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub vars: Vec<(Var, Var)>,
}

impl BoundParams {
    /// Registers every tensor as a trainable leaf (`trainable = true`) or as
    /// a constant.
    pub fn bind(g: &mut Graph, params: &Params, trainable: bool) -> Self {
        let vars = params
            .layers
            .iter()
            .map(|p| {
                if trainable {
                    (g.param(p.weight.clone()), g.param(p.bias.clone()))
                } else {
                    (g.constant(p.weight.clone()), g.constant(p.bias.clone()))
                }
            })
            .collect();
        BoundParams { vars }
    }
}

/// Records the forward pass of `spec` on `input` (`B×C×H×W`), returning the
/// `B×1` (age) or `B×2` (gender) output.
pub fn forward_graph(spec: &ModelSpec, g: &mut Graph, params: &BoundParams, input: Var) -> Result<Var> {
    let shape = g.value(input).shape().to_vec();
    if shape.len() != 4 || shape[1..] != spec.input_shape {
        return dim_err(format!(
            "model expects B×{:?} input, got {shape:?}",
            spec.input_shape
        ));
    }
    let batch = shape[0];
    let mut x = input;
    let mut next_param = params.vars.iter();
    for layer in &spec.layers {
        x = match *layer {
            LayerSpec::Conv { stride, padding, .. } => {
                let &(w, b) = next_param.next().expect("bound params match spec");
                g.conv2d(x, w, b, stride, padding)?
            }
            LayerSpec::MaxPool { kernel, stride } => g.maxpool2d(x, kernel, stride)?,
            LayerSpec::Flatten => {
                let n = g.value(x).len() / batch;
                g.reshape(x, &[batch, n])?
            }
            LayerSpec::Dense { .. } => {
                let &(w, b) = next_param.next().expect("bound params match spec");
                let y = g.matmul(x, w)?;
                g.add_row_bias(y, b)?
            }
            LayerSpec::Relu => g.relu(x),
            LayerSpec::Softmax => g.softmax(x),
        };
    }
    Ok(x)
}

/// Pure forward pass over a batch.
pub fn forward(spec: &ModelSpec, params: &Params, batch: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, params, false);
    let input = g.constant(batch.clone());
    let out = forward_graph(spec, &mut g, &bound, input)?;
    Ok(g.value(out).clone())
}
