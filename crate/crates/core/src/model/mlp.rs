use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected feed-forward network with flat parameter storage.
///
/// Layer `l` stores its `out x in` weight matrix row-major followed by its
/// bias, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    final_activation: bool,
    params: Vec<f64>,
}

pub fn n_params(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Xavier-uniform weights and zero biases.
    pub fn new<R: Rng>(dims: &[usize], activation: Activation, final_activation: bool, rng: &mut R) -> Result<Self> {
        check_dims(dims)?;
        let mut params = Vec::with_capacity(n_params(dims));
        for w in dims.windows(2) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            activation,
            final_activation,
            params,
        })
    }

    pub fn from_params(dims: &[usize], activation: Activation, final_activation: bool, params: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        if params.len() != n_params(dims) {
            return Err(Error::DimensionMismatch {
                expected: n_params(dims),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite network parameter".into()));
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            activation,
            final_activation,
            params,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }
    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }
    pub fn final_activation(&self) -> bool {
        self.final_activation
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.n_layers() || self.final_activation
    }

    /// Activations of every layer, input first.
    pub(crate) fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.dims.len());
        trace.push(x.to_vec());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let input = trace.last().unwrap();
            let act = self.activated(l);
            let out: Vec<f64> = (0..n_out)
                .map(|i| {
                    let z = b[i] + dot(&w[i * n_in..(i + 1) * n_in], input);
                    if act { self.activation.apply(z) } else { z }
                })
                .collect();
            trace.push(out);
        }
        trace
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().unwrap()
    }

    /// Adds the gradient of `<grad_out, f(x)>` with respect to the parameters
    /// into `grad`, given the trace of `f(x)`.
    pub(crate) fn backward(&self, trace: &[Vec<f64>], grad_out: &[f64], grad: &mut [f64]) {
        let mut delta = grad_out.to_vec();
        let mut end = self.params.len();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let start = end - n_in * n_out - n_out;
            if self.activated(l) {
                for (d, &y) in delta.iter_mut().zip(&trace[l + 1]) {
                    *d *= self.activation.slope(y);
                }
            }
            let input = &trace[l];
            let (gw, gb) = grad[start..end].split_at_mut(n_in * n_out);
            for i in 0..n_out {
                let d = delta[i];
                if d == 0.0 {
                    continue;
                }
                gb[i] += d;
                for (g, &a) in gw[i * n_in..(i + 1) * n_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let w = &self.params[start..start + n_in * n_out];
                let mut next = vec![0.0; n_in];
                for i in 0..n_out {
                    let d = delta[i];
                    for (n, &wij) in next.iter_mut().zip(&w[i * n_in..(i + 1) * n_in]) {
                        *n += d * wij;
                    }
                }
                delta = next;
            }
            end = start;
        }
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Config(format!("invalid layer sizes {dims:?}")));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean over triples of `-ln sigmoid(s+ - s-)`.
pub fn bpr_loss(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.len() != scores_neg.len() {
        return Err(Error::DimensionMismatch {
            expected: scores_pos.len(),
            got: scores_neg.len(),
        });
    }
    if scores_pos.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = scores_pos.iter().zip(scores_neg).map(|(p, n)| softplus(n - p)).sum();
    Ok(sum / scores_pos.len() as f64)
}

/// A user tower and an item tower scored by inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinTower {
    pub user: Mlp,
    pub item: Mlp,
}

/// One BPR triple as feature rows: user, positive item, negative item.
pub type Triple<'a> = (&'a [f64], &'a [f64], &'a [f64]);

impl TwinTower {
    pub fn new<R: Rng>(k: usize, hidden: &[usize], activation: Activation, final_activation: bool, rng: &mut R) -> Result<Self> {
        let dims: Vec<usize> = std::iter::once(k).chain(hidden.iter().copied()).collect();
        Ok(TwinTower {
            user: Mlp::new(&dims, activation, final_activation, rng)?,
            item: Mlp::new(&dims, activation, final_activation, rng)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.user.input_dim()
    }

    pub fn n_params(&self) -> usize {
        self.user.params.len() + self.item.params.len()
    }

    pub fn score(&self, f_u: &[f64], f_v: &[f64]) -> f64 {
        dot(&self.user.forward(f_u), &self.item.forward(f_v))
    }

    /// Sum over the triples of `softplus(s- - s+)` and its gradient, added
    /// into `grad` (user tower parameters first, then item tower).
    pub fn bpr_sum_and_grad(&self, triples: &[Triple<'_>], grad: &mut [f64]) -> f64 {
        let split = self.user.params.len();
        let (gu, gi) = grad.split_at_mut(split);
        let mut loss = 0.0;
        for &(fu, fp, fn_) in triples {
            let tu = self.user.forward_trace(fu);
            let tp = self.item.forward_trace(fp);
            let tn = self.item.forward_trace(fn_);
            let (eu, ep, en) = (tu.last().unwrap(), tp.last().unwrap(), tn.last().unwrap());
            let diff = dot(eu, ep) - dot(eu, en);
            loss += softplus(-diff);
            // d softplus(-diff) / d diff
            let g = -sigmoid(-diff);
            let grad_u: Vec<f64> = ep.iter().zip(en).map(|(p, n)| g * (p - n)).collect();
            let grad_p: Vec<f64> = eu.iter().map(|x| g * x).collect();
            let grad_n: Vec<f64> = eu.iter().map(|x| -g * x).collect();
            self.user.backward(&tu, &grad_u, gu);
            self.item.backward(&tp, &grad_p, gi);
            self.item.backward(&tn, &grad_n, gi);
        }
        loss
    }

    pub(crate) fn params_concat(&self) -> Vec<f64> {
        self.user.params.iter().chain(&self.item.params).copied().collect()
    }

    pub(crate) fn set_params(&mut self, params: &[f64]) {
        let split = self.user.params.len();
        self.user.params.copy_from_slice(&params[..split]);
        self.item.params.copy_from_slice(&params[split..]);
    }
}
