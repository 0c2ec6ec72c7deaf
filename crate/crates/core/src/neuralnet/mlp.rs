use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        if self == Activation::Tanh {
            x.mapv_inplace(f64::tanh);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs x outputs`, so a batch forward is `x.dot(w) + b`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Dense network with tanh hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    output: Activation,
    #[serde(skip)]
    cache: Option<Tape>,
}

/// Activations recorded by a training forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("tape is never empty")
    }
}

/// Parameter gradients laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Dense>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Grads {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().chain(l.b.iter()).map(|v| v * v).sum::<f64>())
            .sum()
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w.iter());
        out.extend(l.b.iter());
    }
    out
}

impl Mlp {
    /// `sizes` lists every layer width including input and output. Weights
    /// are drawn uniformly in `±sqrt(6 / (fan_in + fan_out))`, biases start at 0.
    pub fn new(sizes: &[usize], output: Activation, rng: &mut impl Rng) -> Self {
        assert!(
            sizes.len() >= 2,
            "an mlp needs an input and an output width"
        );
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    w: Array2::from_shape_simple_fn((w[0], w[1]), || {
                        rng.random_range(-bound..bound)
                    }),
                    b: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self {
            layers,
            output,
            cache: None,
        }
    }

    pub fn from_layers(layers: Vec<Dense>, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvariantViolation("mlp without layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.b.len() != l.w.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: l.w.ncols(),
                    actual: l.b.len(),
                });
            }
            if i > 0 && layers[i - 1].w.ncols() != l.w.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: layers[i - 1].w.ncols(),
                    actual: l.w.nrows(),
                });
            }
        }
        Ok(Self {
            layers,
            output,
            cache: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut v = vec![self.input_dim()];
        v.extend(self.layers.iter().map(|l| l.w.ncols()));
        v
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            Activation::Tanh
        }
    }

    fn check(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Batch inference, one row per sample.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&x)?;
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.w) + &l.b;
            self.activation(i).apply(&mut h);
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass that records what `backward_tape` needs.
    pub fn forward_tape(&self, x: ArrayView2<f64>) -> Result<Tape> {
        self.check(&x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (i, l) in self.layers.iter().enumerate() {
            let mut h = acts[i].dot(&l.w) + &l.b;
            self.activation(i).apply(&mut h);
            acts.push(h);
        }
        Ok(Tape { acts })
    }

    /// Like `forward_tape`, but keeps the tape inside the network for a
    /// following `backward`.
    pub fn forward_train(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let tape = self.forward_tape(x)?;
        let out = tape.output().clone();
        self.cache = Some(tape);
        Ok(out)
    }

    /// Gradients for the pass recorded by the last `forward_train`.
    pub fn backward(&self, grad_out: ArrayView2<f64>) -> Result<(Grads, Array2<f64>)> {
        let tape = self.cache.as_ref().ok_or(Error::NoForwardPass)?;
        self.backward_tape(tape, grad_out)
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward_tape(
        &self,
        tape: &Tape,
        grad_out: ArrayView2<f64>,
    ) -> Result<(Grads, Array2<f64>)> {
        let (g, dx) = self.backward_impl(tape, grad_out, true)?;
        Ok((g, dx.expect("input gradient requested")))
    }

    /// Parameter gradients only.
    pub fn backward_params(&self, tape: &Tape, grad_out: ArrayView2<f64>) -> Result<Grads> {
        Ok(self.backward_impl(tape, grad_out, false)?.0)
    }

    fn backward_impl(
        &self,
        tape: &Tape,
        grad_out: ArrayView2<f64>,
        want_input: bool,
    ) -> Result<(Grads, Option<Array2<f64>>)> {
        let out = tape.output();
        if grad_out.dim() != out.dim() {
            return Err(Error::DimensionMismatch {
                expected: out.ncols(),
                actual: grad_out.ncols(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.to_owned();
        let mut input_grad = None;
        for i in (0..self.layers.len()).rev() {
            if self.activation(i) == Activation::Tanh {
                Zip::from(&mut delta)
                    .and(&tape.acts[i + 1])
                    .for_each(|d, &y| *d *= 1.0 - y * y);
            }
            let gw = tape.acts[i].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&self.layers[i].w.t());
            } else if want_input {
                input_grad = Some(delta.dot(&self.layers[i].w.t()));
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        Ok((Grads { layers: grads }, input_grad))
    }

    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut()
                .chain(l.b.iter_mut())
                .for_each(|v| *v = it.next().unwrap());
        }
        self.cache = None;
        Ok(())
    }

    /// `self <- rho * self + (1 - rho) * online`.
    pub fn polyak_from(&mut self, online: &Mlp, rho: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.w)
                .and(&o.w)
                .for_each(|t, &o| *t = rho * *t + (1.0 - rho) * o);
            Zip::from(&mut t.b)
                .and(&o.b)
                .for_each(|t, &o| *t = rho * *t + (1.0 - rho) * o);
        }
    }

    /// Sum of squared parameter differences.
    pub fn sq_distance(&self, other: &Mlp) -> f64 {
        self.params()
            .iter()
            .zip(other.params())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Splits the columns of `m` at `at`.
pub fn split_cols(m: &Array2<f64>, at: usize) -> (Array2<f64>, Array2<f64>) {
    (
        m.slice(s![.., ..at]).to_owned(),
        m.slice(s![.., at..]).to_owned(),
    )
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One descent step on `grads` with learning rate `lr`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((l, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            Zip::from(&mut l.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            Zip::from(&mut l.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        net.cache = None;
    }
}
