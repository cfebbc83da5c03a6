//! Dense multilayer perceptrons with exact reverse-mode gradients, Adam and
//! target-network soft updates.
//!
//! Inputs are batched row-wise: a batch of `B` inputs of width `d` is a
//! `B × d` matrix. Hidden layers use `tanh`; the output layer is either
//! `scale · tanh` (bounded actor) or the identity (critic).

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use std::io::{Read, Write};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Identity,
    /// `scale · tanh(z)`.
    ScaledTanh(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub output: OutputActivation,
}

/// Forward intermediates for one batch: the input to every layer and the
/// network output.
#[derive(Debug)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

/// Gradients shaped like an [`Mlp`]'s layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Uniform initialization in `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((w[1], w[0]), || rng.random_range(-bound..=bound)),
                    biases: Array1::from_shape_simple_fn(w[1], || rng.random_range(-bound..=bound)),
                }
            })
            .collect();
        Self { layers, output }
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        Self {
            layers: sizes
                .windows(2)
                .map(|w| Layer {
                    weights: Array2::zeros((w[1], w[0])),
                    biases: Array1::zeros(w[1]),
                })
                .collect(),
            output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Layer::outputs));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    /// Batched forward pass without recording.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights.t());
            z += &layer.biases;
            self.activate(&mut z, i == last);
            h = z;
        }
        Ok(h)
    }

    /// Batched forward pass recording a tape for [`Mlp::backward`].
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights.t());
            z += &layer.biases;
            self.activate(&mut z, i == last);
            inputs.push(h);
            h = z;
        }
        let tape = Tape {
            inputs,
            output: h.clone(),
        };
        Ok((h, tape))
    }

    /// Single-vector forward pass.
    pub fn forward_one(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let (y, tape) = self.forward(view)?;
        Ok((y.into_raw_vec_and_offset().0, tape))
    }

    fn activate(&self, z: &mut Array2<f64>, is_output: bool) {
        if !is_output {
            z.mapv_inplace(f64::tanh);
            return;
        }
        if let OutputActivation::ScaledTanh(s) = self.output {
            z.mapv_inplace(|v| s * v.tanh());
        }
    }

    /// Reverse pass: consumes the tape of a forward call on `self` and the
    /// gradient of a scalar loss with respect to the outputs. Returns the
    /// parameter gradients (summed over the batch) and the input gradient.
    pub fn backward(&self, tape: Tape, upstream: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        assert_eq!(upstream.dim(), tape.output.dim(), "upstream must match output shape");
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        match self.output {
            OutputActivation::Identity => {}
            OutputActivation::ScaledTanh(s) => {
                Zip::from(&mut delta).and(&tape.output).for_each(|d, &y| {
                    let t = y / s;
                    *d *= s * (1.0 - t * t);
                });
            }
        }
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &tape.inputs[i];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            let mut next = delta.dot(&layer.weights);
            if i > 0 {
                // `input` is the tanh output of the previous layer.
                Zip::from(&mut next).and(input).for_each(|d, &a| *d *= 1.0 - a * a);
            }
            grads.push(Layer {
                weights: gw,
                biases: gb,
            });
            delta = next;
        }
        grads.reverse();
        (Gradients { layers: grads }, delta)
    }

    /// `self ← ρ · source + (1 − ρ) · self`.
    pub fn soft_update(&mut self, source: &Mlp, rho: f64) {
        assert_eq!(self.sizes(), source.sizes());
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut t.weights).and(&s.weights).for_each(|t, &s| *t = rho * s + (1.0 - rho) * *t);
            Zip::from(&mut t.biases).and(&s.biases).for_each(|t, &s| *t = rho * s + (1.0 - rho) * *t);
        }
    }

    /// Serializes as: version, output kind and scale, layer count, per-layer
    /// `(out, in)`, then every layer's weights (row-major) and biases as
    /// little-endian `f64`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&WEIGHTS_FORMAT_VERSION.to_le_bytes())?;
        let (kind, scale) = match self.output {
            OutputActivation::Identity => (0u32, 0.0),
            OutputActivation::ScaledTanh(s) => (1u32, s),
        };
        w.write_all(&kind.to_le_bytes())?;
        w.write_all(&scale.to_le_bytes())?;
        write_layers(w, &self.layers)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let version = read_u32(r)?;
        if version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: WEIGHTS_FORMAT_VERSION,
            });
        }
        let kind = read_u32(r)?;
        let scale = read_f64(r)?;
        let output = match kind {
            0 => OutputActivation::Identity,
            1 => OutputActivation::ScaledTanh(scale),
            k => return Err(Error::Format(format!("unknown output activation {k}"))),
        };
        Ok(Self {
            layers: read_layers(r)?,
            output,
        })
    }
}

pub(crate) fn write_layers<W: Write>(w: &mut W, layers: &[Layer]) -> std::io::Result<()> {
    w.write_all(&(layers.len() as u32).to_le_bytes())?;
    for l in layers {
        w.write_all(&(l.outputs() as u32).to_le_bytes())?;
        w.write_all(&(l.inputs() as u32).to_le_bytes())?;
    }
    for l in layers {
        for v in l.weights.iter().chain(l.biases.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_layers<R: Read>(r: &mut R) -> Result<Vec<Layer>> {
    let count = read_u32(r)? as usize;
    if count == 0 || count > 64 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let out = read_u32(r)? as usize;
        let inp = read_u32(r)? as usize;
        if out == 0 || inp == 0 || out * inp > 1 << 26 {
            return Err(Error::Format(format!("implausible layer shape {out}x{inp}")));
        }
        shapes.push((out, inp));
    }
    for pair in shapes.windows(2) {
        if pair[0].0 != pair[1].1 {
            return Err(Error::Format("layer shapes do not chain".into()));
        }
    }
    let mut layers = Vec::with_capacity(count);
    for (out, inp) in shapes {
        let mut w = Vec::with_capacity(out * inp);
        for _ in 0..out * inp {
            w.push(read_f64(r)?);
        }
        let mut b = Vec::with_capacity(out);
        for _ in 0..out {
            b.push(read_f64(r)?);
        }
        layers.push(Layer {
            weights: Array2::from_shape_vec((out, inp), w).expect("shape"),
            biases: Array1::from_vec(b),
        });
    }
    Ok(layers)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn truncated(e: std::io::Error) -> Error {
    Error::Format(format!("truncated data: {e}"))
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.raw_dim()),
                })
                .collect(),
        }
    }

    /// Flattened in layer order (weights then biases).
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights *= s;
            l.biases *= s;
        }
    }
}

/// Flattened parameters in the same order as [`Gradients::to_flat`].
pub fn flat_params(net: &Mlp) -> Vec<f64> {
    net.layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
        .collect()
}

/// Mutable access to the `k`-th flattened parameter.
pub fn param_mut(net: &mut Mlp, mut k: usize) -> &mut f64 {
    for l in &mut net.layers {
        let nw = l.weights.len();
        if k < nw {
            return l.weights.iter_mut().nth(k).expect("index");
        }
        k -= nw;
        let nb = l.biases.len();
        if k < nb {
            return &mut l.biases[k];
        }
        k -= nb;
    }
    panic!("parameter index out of range");
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros = Gradients::zeros_like(net).layers;
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, net: &mut Mlp, grads: &Gradients) {
        assert_eq!(net.layers.len(), grads.layers.len());
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let lr_t = self.lr * (1.0 - b2.powf(t)).sqrt() / (1.0 - b1.powf(t));
        let eps_t = eps * (1.0 - b2.powf(t)).sqrt();
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + eps_t);
        };
        for (((layer, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
            Zip::from(&mut layer.biases)
                .and(&mut m.biases)
                .and(&mut v.biases)
                .and(&g.biases)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.step.to_le_bytes())?;
        for x in [self.lr, self.beta1, self.beta2, self.eps] {
            w.write_all(&x.to_le_bytes())?;
        }
        write_layers(w, &self.m)?;
        write_layers(w, &self.v)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let step = read_u64(r)?;
        let lr = read_f64(r)?;
        let beta1 = read_f64(r)?;
        let beta2 = read_f64(r)?;
        let eps = read_f64(r)?;
        let m = read_layers(r)?;
        let v = read_layers(r)?;
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
            step,
            m,
            v,
        })
    }
}
