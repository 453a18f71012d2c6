use serde::{Deserialize, Serialize};

use super::graph::InteractionGraph;

/// Dense row-major node embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Embeddings {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { dim, data: vec![0.0; rows * dim] }
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|x| alpha * x).collect() }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One step of symmetric normalized neighbor aggregation:
/// `out[i] = sum_j in(N(i)) x[j] / sqrt(deg(i) * deg(j))`.
///
/// The normalized adjacency is symmetric, so the same step also maps
/// gradients backwards.
pub fn aggregate(g: &InteractionGraph, x: &Embeddings) -> Embeddings {
    let mut out = Embeddings::zeros(x.rows(), x.dim);
    for i in 0..g.node_count() {
        let di = g.degree(i) as f64;
        if di == 0.0 {
            continue;
        }
        let row = out.row_mut(i);
        for &j in g.neighbors(i) {
            let w = 1.0 / (di * g.degree(j) as f64).sqrt();
            for (o, v) in row.iter_mut().zip(x.row(j)) {
                *o += w * v;
            }
        }
    }
    out
}

/// Per-layer embeddings produced by propagation; layer 0 is the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub layers: Vec<Embeddings>,
}

impl LayerStack {
    /// Arithmetic mean over all layers, summed in layer order.
    pub fn mean(&self) -> Embeddings {
        let first = &self.layers[0];
        let mut out = Embeddings::zeros(first.rows(), first.dim);
        for layer in &self.layers {
            for (o, v) in out.data.iter_mut().zip(&layer.data) {
                *o += v;
            }
        }
        let n = self.layers.len() as f64;
        for o in &mut out.data {
            *o /= n;
        }
        out
    }
}

/// Light graph convolution: `layers` rounds of normalized averaging with no
/// transforms or nonlinearities.
pub fn propagate(g: &InteractionGraph, layer0: &Embeddings, layers: usize) -> LayerStack {
    assert_eq!(layer0.rows(), g.node_count(), "one embedding row per graph node");
    let mut stack = vec![layer0.clone()];
    for _ in 0..layers {
        let next = aggregate(g, stack.last().expect("non-empty"));
        stack.push(next);
    }
    LayerStack { layers: stack }
}
