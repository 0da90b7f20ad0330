//! Euclidean MLP, graph attention, and hyperbolic linear layers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hyp;
use super::params::{ParamId, ParamKind, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;

/// Negative slope of the attention-score LeakyReLU.
pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

/// Affine map `x · W + b` with `W: in × out`, `b: 1 × out`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), inputs, outputs, rng);
        let bias = store.add_zeros(format!("{name}.bias"), ParamKind::Euclidean, 1, outputs);
        Self { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }
}

/// Stack of [`Linear`] layers with ReLU in between.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    /// Apply ReLU after the final layer too.
    pub relu_last: bool,
}

impl Mlp {
    /// `sizes` lists the widths, input first: `[in, hidden.., out]`.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, sizes: &[usize], relu_last: bool, rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, relu_last }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        linear_relu_mlp(tape, store, x, &self.layers, self.relu_last)
    }
}

/// Affine layers with ReLU between consecutive layers (and after the last
/// when `relu_last`).
pub fn linear_relu_mlp(tape: &mut Tape, store: &ParamStore, x: Var, layers: &[Linear], relu_last: bool) -> Result<Var> {
    let mut h = x;
    for (i, layer) in layers.iter().enumerate() {
        h = layer.forward(tape, store, h)?;
        if relu_last || i + 1 < layers.len() {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Single-head graph attention layer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GatLayer {
    pub weight: ParamId,
    /// First half of the attention vector, applied to the receiving node.
    pub attn_src: ParamId,
    /// Second half, applied to the neighbour.
    pub attn_dst: ParamId,
    pub negative_slope: f64,
}

impl GatLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), inputs, outputs, rng);
        let attn_src = store.add_glorot(format!("{name}.attn_src"), outputs, 1, rng);
        let attn_dst = store.add_glorot(format!("{name}.attn_dst"), outputs, 1, rng);
        Self { weight, attn_src, attn_dst, negative_slope: GAT_NEGATIVE_SLOPE }
    }

    /// `nodes` stacks graphs of `group` nodes each, row by row. The attention
    /// matrix of the result is available through [`Tape::attention`].
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, nodes: Var, group: usize) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let a_src = tape.param(store, self.attn_src);
        let a_dst = tape.param(store, self.attn_dst);
        let z = tape.matmul(nodes, w)?;
        let s = tape.matmul(z, a_src)?;
        let d = tape.matmul(z, a_dst)?;
        tape.graph_attention(z, s, d, group, self.negative_slope)
    }
}

/// Graph attention over a single complete graph; returns the output features
/// and the `N × N` attention matrix.
pub fn gat_forward(tape: &mut Tape, store: &ParamStore, layer: &GatLayer, nodes: Var) -> Result<(Var, super::Mat)> {
    let n = tape.value(nodes).nrows();
    let out = layer.forward(tape, store, nodes, n)?;
    let attention = tape.attention(out).cloned().expect("graph attention node");
    Ok((out, attention))
}

/// Hyperbolic affine layer `(W ⊗ x) ⊕ b` with a Euclidean weight and a
/// bias on the ball.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HLinear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl HLinear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), inputs, outputs, rng);
        let bias = store.add_zeros(format!("{name}.bias"), ParamKind::Manifold, 1, outputs);
        Self { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        hlinear_forward(tape, store, self, x)
    }
}

pub fn hlinear_forward(tape: &mut Tape, store: &ParamStore, layer: &HLinear, x: Var) -> Result<Var> {
    let w = tape.param(store, layer.weight);
    let b = tape.param(store, layer.bias);
    let m = tape.value(x).nrows();
    let mx = hyp::mobius_matvec(tape, x, w)?;
    let bb = tape.broadcast_rows(b, m)?;
    hyp::mobius_add(tape, mx, bb)
}

/// Stack of [`HLinear`] layers with Möbius ReLU in between.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HMlp {
    pub layers: Vec<HLinear>,
}

impl HMlp {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| HLinear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i + 1 < self.layers.len() {
                h = hyp::hrelu(tape, h)?;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypgeom::{self, PoincarePoint};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_hand_values() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Euclidean, array![[2.0]]);
        let b = store.add("b", ParamKind::Euclidean, array![[1.0]]);
        let layer = Linear { weight: w, bias: b };
        let mut t = Tape::new();
        let x = t.constant(array![[3.0]]);
        let y = linear_relu_mlp(&mut t, &store, x, &[layer], true).unwrap();
        assert_eq!(t.value(y)[[0, 0]], 7.0);
    }

    #[test]
    fn mlp_zero_and_identity() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Euclidean, Array2::zeros((3, 2)));
        let b = store.add("b", ParamKind::Euclidean, Array2::zeros((1, 2)));
        let zero = Linear { weight: w, bias: b };
        let wi = store.add("wi", ParamKind::Euclidean, Array2::eye(3));
        let bi = store.add("bi", ParamKind::Euclidean, Array2::zeros((1, 3)));
        let ident = Linear { weight: wi, bias: bi };
        let mut t = Tape::new();
        let x = t.constant(array![[1.0, -2.0, 3.0]]);
        let y = linear_relu_mlp(&mut t, &store, x, &[zero], false).unwrap();
        assert!(t.value(y).iter().all(|&v| v == 0.0));
        let y = linear_relu_mlp(&mut t, &store, x, &[ident], false).unwrap();
        assert_eq!(t.value(y), &array![[1.0, -2.0, 3.0]]);
    }

    #[test]
    fn identical_nodes_get_uniform_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let gat = GatLayer::new(&mut store, "g", 4, 3, &mut rng);
        let mut t = Tape::new();
        let x = t.constant(Array2::from_shape_fn((5, 4), |(_, j)| j as f64 * 0.3 - 0.2));
        let (_, att) = gat_forward(&mut t, &store, &gat, x).unwrap();
        for v in att.iter() {
            assert_abs_diff_eq!(*v, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_node_attention_matches_hand_softmax() {
        let mut store = ParamStore::new();
        let weight = store.add("w", ParamKind::Euclidean, array![[1.0, 0.0], [0.0, 2.0]]);
        let attn_src = store.add("s", ParamKind::Euclidean, array![[0.5], [-1.0]]);
        let attn_dst = store.add("d", ParamKind::Euclidean, array![[1.0], [0.25]]);
        let gat = GatLayer { weight, attn_src, attn_dst, negative_slope: 0.2 };
        let mut t = Tape::new();
        let x = t.constant(array![[1.0, 0.5], [-0.4, 0.3]]);
        let (out, att) = gat_forward(&mut t, &store, &gat, x).unwrap();
        // z = [[1, 1], [-0.4, 0.6]]; src = [-0.5, -0.8]; dst = [1.25, -0.25]
        let lr = |v: f64| if v > 0.0 { v } else { 0.2 * v };
        let z = [[1.0, 1.0], [-0.4, 0.6]];
        let src = [-0.5, -0.8];
        let dst = [1.25, -0.25];
        for i in 0..2 {
            let e: Vec<f64> = (0..2).map(|j| lr(src[i] + dst[j])).collect();
            let total: f64 = e.iter().map(|v| v.exp()).sum();
            for j in 0..2 {
                assert_abs_diff_eq!(att[[i, j]], e[j].exp() / total, epsilon = 1e-14);
            }
            for c in 0..2 {
                let want: f64 = (0..2).map(|j| e[j].exp() / total * z[j][c]).sum();
                assert_abs_diff_eq!(t.value(out)[[i, c]], want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn hlinear_cases() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Euclidean, array![[2.0]]);
        let b = store.add("b", ParamKind::Manifold, array![[0.25]]);
        let layer = HLinear { weight: w, bias: b };
        let mut t = Tape::new();
        let x = t.constant(array![[0.5], [0.0]]);
        let y = layer.forward(&mut t, &store, x).unwrap();
        assert_abs_diff_eq!(t.value(y)[[0, 0]], 0.875, epsilon = 1e-14);
        assert_abs_diff_eq!(t.value(y)[[1, 0]], 0.25, epsilon = 1e-15);

        let wi = store.add("wi", ParamKind::Euclidean, Array2::eye(2));
        let bi = store.add("bi", ParamKind::Manifold, Array2::zeros((1, 2)));
        let ident = HLinear { weight: wi, bias: bi };
        let x = t.constant(array![[0.3, -0.6]]);
        let y = ident.forward(&mut t, &store, x).unwrap();
        assert_abs_diff_eq!(t.value(y)[[0, 0]], 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(t.value(y)[[0, 1]], -0.6, epsilon = 1e-14);
    }

    #[test]
    fn hrelu_cases() {
        let mut t = Tape::new();
        let x = t.constant(array![[0.2, 0.4], [0.0, 0.0], [-0.3, 0.4]]);
        let y = hyp::hrelu(&mut t, x).unwrap();
        let v = t.value(y);
        assert_abs_diff_eq!(v[[0, 0]], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(v[[0, 1]], 0.4, epsilon = 1e-15);
        assert_eq!(v[[1, 0]], 0.0);
        assert_eq!(v[[1, 1]], 0.0);
        // log_O((-0.3, 0.4)) = artanh(0.5)·(-0.6, 0.8); ReLU keeps the second slot.
        let second = 0.5f64.atanh() * 0.8;
        assert_eq!(v[[2, 0]], 0.0);
        assert_abs_diff_eq!(v[[2, 1]], second.tanh(), epsilon = 1e-15);
    }

    #[test]
    fn tape_ops_agree_with_hypgeom() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let m = Array2::from_shape_fn((3, 2), |_| rng.gen_range(-2.0..2.0));
            let (px, py) = (PoincarePoint::new(x.clone()).unwrap(), PoincarePoint::new(y.clone()).unwrap());

            let mut t = Tape::new();
            let vx = t.constant(Array2::from_shape_vec((1, 3), x).unwrap());
            let vy = t.constant(Array2::from_shape_vec((1, 3), y).unwrap());
            let vw = t.constant(m.clone());
            let sum = hyp::mobius_add(&mut t, vx, vy).unwrap();
            let want = hypgeom::mobius_add(&px, &py).unwrap();
            for (a, b) in t.value(sum).iter().zip(want.coords()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
            let mv = hyp::mobius_matvec(&mut t, vx, vw).unwrap();
            let want = hypgeom::mobius_matvec(m.t(), &px).unwrap();
            for (a, b) in t.value(mv).iter().zip(want.coords()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            let d = hyp::distance(&mut t, vx, vy).unwrap();
            assert_abs_diff_eq!(t.scalar(d), hypgeom::poincare_distance(&px, &py).unwrap(), epsilon = 1e-12);
        }
    }
}
