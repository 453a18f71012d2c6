//! Logistic objective over signed edges and its full-batch optimization.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::InteractionGraph;
use super::propagate::{aggregate, dot, propagate, Embeddings, LayerStack};
use super::CfError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfHyperparameters {
    pub dim: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight of the squared L2 norm of layer-0 embeddings.
    pub l2: f64,
    /// Standard deviation of the layer-0 normal initialization.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for CfHyperparameters {
    fn default() -> Self {
        Self { dim: 32, layers: 2, learning_rate: 0.05, epochs: 300, l2: 1e-4, init_scale: 0.1, seed: 0 }
    }
}

pub fn init_embeddings(g: &InteractionGraph, hyper: &CfHyperparameters) -> Embeddings {
    let mut r = rng::stream(hyper.seed, "cf/init");
    let normal = Normal::new(0.0, hyper.init_scale).expect("finite init scale");
    Embeddings {
        dim: hyper.dim,
        data: (0..g.node_count() * hyper.dim).map(|_| normal.sample(&mut r)).collect(),
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss of `sign * score` over edges plus `l2 * ||layer0||^2`.
pub fn loss(g: &InteractionGraph, layer0: &Embeddings, layers: usize, l2: f64) -> f64 {
    let fin = propagate(g, layer0, layers).mean();
    objective(g, &fin, layer0, l2)
}

fn objective(g: &InteractionGraph, fin: &Embeddings, layer0: &Embeddings, l2: f64) -> f64 {
    let nu = g.users.len();
    let n = g.edges.len().max(1) as f64;
    let data: f64 = g
        .edges
        .iter()
        .map(|e| softplus(-e.label.sign() * dot(fin.row(e.user), fin.row(nu + e.request))))
        .sum::<f64>()
        / n;
    data + l2 * layer0.data.iter().map(|x| x * x).sum::<f64>()
}

/// Loss and its gradient with respect to the layer-0 embeddings.
///
/// The final embedding is `mean_k A^k E0` with a symmetric normalized
/// adjacency `A`, so the gradient is the same layer mean applied to the
/// gradient at the final embeddings.
pub fn loss_and_gradient(
    g: &InteractionGraph,
    layer0: &Embeddings,
    layers: usize,
    l2: f64,
) -> (f64, Embeddings) {
    let stack = propagate(g, layer0, layers);
    let fin = stack.mean();
    let value = objective(g, &fin, layer0, l2);

    let nu = g.users.len();
    let n = g.edges.len().max(1) as f64;
    let mut grad_final = Embeddings::zeros(fin.rows(), fin.dim);
    for e in &g.edges {
        let (u, r) = (e.user, nu + e.request);
        let s = e.label.sign();
        let coeff = -s * sigmoid(-s * dot(fin.row(u), fin.row(r))) / n;
        for c in 0..fin.dim {
            grad_final.data[u * fin.dim + c] += coeff * fin.row(r)[c];
            grad_final.data[r * fin.dim + c] += coeff * fin.row(u)[c];
        }
    }

    let mut acc = grad_final.clone();
    let mut cur = grad_final;
    for _ in 0..layers {
        cur = aggregate(g, &cur);
        for (a, v) in acc.data.iter_mut().zip(&cur.data) {
            *a += v;
        }
    }
    let scale = 1.0 / (layers + 1) as f64;
    for (a, x) in acc.data.iter_mut().zip(&layer0.data) {
        *a = *a * scale + 2.0 * l2 * x;
    }
    (value, acc)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

pub struct Fitted {
    pub stack: LayerStack,
    pub loss_history: Vec<f64>,
}

/// Full-batch Adam on the logistic objective. The recorded trajectory holds
/// the loss before each update plus the final loss.
pub fn fit(g: &InteractionGraph, hyper: &CfHyperparameters) -> Result<Fitted, CfError> {
    if g.is_empty() {
        return Err(CfError::EmptyGraph);
    }
    if hyper.dim == 0 {
        return Err(CfError::InvalidHyperparameters("dim must be positive".into()));
    }
    if !(hyper.learning_rate.is_finite() && hyper.learning_rate > 0.0) || !(hyper.init_scale > 0.0) {
        return Err(CfError::InvalidHyperparameters(
            "learning_rate and init_scale must be positive".into(),
        ));
    }
    let mut layer0 = init_embeddings(g, hyper);
    let mut opt = Adam::new(layer0.data.len());
    let mut history = Vec::with_capacity(hyper.epochs + 1);
    for epoch in 0..hyper.epochs {
        let (value, grad) = loss_and_gradient(g, &layer0, hyper.layers, hyper.l2);
        if !value.is_finite() || grad.data.iter().any(|x| !x.is_finite()) {
            return Err(CfError::Divergence { epoch, loss: value });
        }
        history.push(value);
        opt.step(&mut layer0.data, &grad.data, hyper.learning_rate);
    }
    let stack = propagate(g, &layer0, hyper.layers);
    let last = objective(g, &stack.mean(), &layer0, hyper.l2);
    if !last.is_finite() {
        return Err(CfError::Divergence { epoch: hyper.epochs, loss: last });
    }
    history.push(last);
    Ok(Fitted { stack, loss_history: history })
}
