//! Dense rectifier networks with hand-written backpropagation, and Adam.
//!
//! Parameters live in one flat `Vec<f64>`; layer `l` occupies a row-major
//! `in × out` weight block followed by its `out` biases. The flat layout is
//! what the optimizer, Polyak averaging and checkpoints operate on.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Architecture {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        Architecture { input, hidden: hidden.to_vec(), output }
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input;
        for &h in self.hidden.iter().chain(std::iter::once(&self.output)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|&(i, o)| i * o + o).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    arch: Architecture,
    params: Vec<f64>,
    /// Bumped whenever parameters are handed out mutably.
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.params == other.params
    }
}

/// Activations recorded by [`Mlp::forward_batch`] for a later backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer (the batch itself, then each hidden activation).
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
    generation: u64,
    param_count: usize,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }
}

impl Mlp {
    pub fn zeros(arch: Architecture) -> Self {
        let params = vec![0.0; arch.param_count()];
        Mlp { arch, params, generation: 0 }
    }

    /// Weights and biases uniform in ±1/√fan_in, drawn layer by layer.
    pub fn init_uniform<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(arch.param_count());
        for (fan_in, fan_out) in arch.layers() {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        Mlp { arch, params, generation: 0 }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::SizeMismatch { expected: arch.param_count(), got: params.len() });
        }
        Ok(Mlp { arch, params, generation: 0 })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    fn layer(&self, offset: usize, fan_in: usize, fan_out: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let w = ArrayView2::from_shape((fan_in, fan_out), &self.params[offset..offset + fan_in * fan_out])
            .expect("layout matches architecture");
        let b = ArrayView1::from(&self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out]);
        (w, b)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward_batch(x)?.output.row(0).to_vec())
    }

    /// Output rows only, without keeping activations.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let layers = self.arch.layers();
        let mut offset = 0;
        let mut act = x.to_owned();
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let (w, b) = self.layer(offset, fan_in, fan_out);
            let mut z = act.dot(&w);
            z += &b;
            if l + 1 < layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            act = z;
            offset += fan_in * fan_out + fan_out;
        }
        Ok(act)
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.arch.input {
            return Err(Error::SizeMismatch { expected: self.arch.input, got: dim });
        }
        Ok(())
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(x.ncols())?;
        let layers = self.arch.layers();
        let mut inputs = Vec::with_capacity(layers.len());
        let mut offset = 0;
        let mut act = x.to_owned();
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let (w, b) = self.layer(offset, fan_in, fan_out);
            let mut z = act.dot(&w);
            z += &b;
            if l + 1 < layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(act);
            act = z;
            offset += fan_in * fan_out + fan_out;
        }
        Ok(ForwardCache { inputs, output: act, generation: self.generation, param_count: self.params.len() })
    }

    /// Parameter gradient of a scalar loss whose gradient with respect to the
    /// cached outputs is `grad_out`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if cache.generation != self.generation || cache.param_count != self.params.len() {
            return Err(Error::StaleCache("parameters changed since the forward pass".into()));
        }
        if grad_out.dim() != cache.output.dim() {
            return Err(Error::StaleCache(format!(
                "output gradient shape {:?} does not match cached output {:?}",
                grad_out.dim(),
                cache.output.dim()
            )));
        }
        let layers = self.arch.layers();
        let mut grads = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for &(i, o) in &layers {
            offsets.push(offset);
            offset += i * o + o;
        }

        let mut delta = grad_out.to_owned();
        for l in (0..layers.len()).rev() {
            let (fan_in, fan_out) = layers[l];
            let input = &cache.inputs[l];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            let off = offsets[l];
            for (g, v) in grads[off..off + fan_in * fan_out].iter_mut().zip(gw.iter()) {
                *g = *v;
            }
            for (g, v) in grads[off + fan_in * fan_out..off + fan_in * fan_out + fan_out].iter_mut().zip(gb.iter()) {
                *g = *v;
            }
            if l > 0 {
                let (w, _) = self.layer(off, fan_in, fan_out);
                let mut prev = delta.dot(&w.t());
                // rectifier derivative: the cached input is relu(pre), positive iff pre > 0
                ndarray::Zip::from(&mut prev).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        Ok(grads)
    }

    pub fn write_params<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write_f64s(out, &self.params)
    }

    pub fn read_params<R: Read>(&mut self, input: &mut R) -> std::io::Result<()> {
        read_f64s(input, self.params_mut())
    }
}

/// Adaptive-moment optimizer state for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(size: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; size], v: vec![0.0; size] }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::SizeMismatch { expected: self.m.len(), got: grads.len().min(params.len()) });
        }
        if let Some((i, g)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFinite { what: "gradient".into(), detail: format!("entry {i} = {g}") });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// Step counter, hyperparameters, then both moment arrays.
    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(&self.t.to_le_bytes())?;
        write_f64s(out, &[self.lr, self.beta1, self.beta2, self.eps])?;
        write_f64s(out, &self.m)?;
        write_f64s(out, &self.v)
    }

    pub fn read_from<R: Read>(&mut self, input: &mut R) -> std::io::Result<()> {
        let mut t = [0u8; 8];
        input.read_exact(&mut t)?;
        self.t = u64::from_le_bytes(t);
        let mut hyper = [0.0; 4];
        read_f64s(input, &mut hyper)?;
        [self.lr, self.beta1, self.beta2, self.eps] = hyper;
        read_f64s(input, &mut self.m)?;
        read_f64s(input, &mut self.v)
    }
}

pub fn write_f64s<W: Write>(out: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f64s<R: Read>(input: &mut R, values: &mut [f64]) -> std::io::Result<()> {
    let mut buf = [0u8; 8];
    for v in values {
        input.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}
