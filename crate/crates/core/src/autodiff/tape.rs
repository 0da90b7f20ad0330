//! Define-by-run reverse-mode tape over rank-2 `f64` arrays.
//!
//! Nodes are appended in evaluation order, so the node index is already a
//! topological order and the backward sweep is a single reverse pass.

use ndarray::{s, Array2, Axis, Zip};

use super::params::{ParamId, ParamStore};
use super::Mat;
use crate::error::{Error, Result};
use crate::hypgeom::{artanh_ratio, tanh_ratio, MAX_NORM};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
struct ParamKey {
    tag: u64,
    id: ParamId,
}

#[derive(Debug)]
enum Op {
    Leaf(Option<ParamKey>),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    MulCol(Var, Var),
    DivCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    RowNorm(Var),
    RowSqNorm(Var),
    RowDot(Var, Var),
    TanhRatio(Var),
    ArtanhRatio(Var),
    Arcosh1p(Var),
    Arcosh1pSq(Var),
    Project(Var),
    MeanCols(Var),
    SumAll(Var),
    MeanAll(Var),
    ConcatCols(Var, Var),
    GatherRows { sources: Vec<Var>, index: Vec<(u32, u32)> },
    GraphAttention { z: Var, src: Var, dst: Var, group: usize, slope: f64, alpha: Mat },
    Huber { pred: Var, target: Mat, delta: f64 },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Mat },
    PickCols { a: Var, idx: Vec<usize> },
    ExpO(Var),
    LogO(Var),
    MobiusAdd(Var, Var),
}

impl Op {
    fn for_each_input(&self, mut f: impl FnMut(Var)) {
        match self {
            Op::Leaf(_) => {}
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::AddRow(a, b)
            | Op::AddCol(a, b)
            | Op::MulCol(a, b)
            | Op::DivCol(a, b)
            | Op::RowDot(a, b)
            | Op::ConcatCols(a, b) => {
                f(*a);
                f(*b);
            }
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::RowNorm(a)
            | Op::RowSqNorm(a)
            | Op::TanhRatio(a)
            | Op::ArtanhRatio(a)
            | Op::Arcosh1p(a)
            | Op::Arcosh1pSq(a)
            | Op::Project(a)
            | Op::MeanCols(a)
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::ExpO(a)
            | Op::LogO(a) => f(*a),
            Op::MobiusAdd(a, b) => {
                f(*a);
                f(*b);
            }
            Op::GatherRows { sources, .. } => sources.iter().copied().for_each(f),
            Op::GraphAttention { z, src, dst, .. } => {
                f(*z);
                f(*src);
                f(*dst);
            }
            Op::Huber { pred, .. } => f(*pred),
            Op::CrossEntropy { logits, .. } => f(*logits),
            Op::PickCols { a, .. } => f(*a),
        }
    }
}

struct Node {
    value: Mat,
    op: Op,
    /// Some parameter or variable leaf feeds this node.
    needs_grad: bool,
}

/// Adjoint slots of a sweep; nodes that no differentiable leaf feeds never
/// receive one.
struct Adjoints<'a> {
    slots: Vec<Option<Mat>>,
    nodes: &'a [Node],
}

/// Records a computation; call [`Tape::gradients`] on a scalar output.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node adjoints from one backward sweep.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn shape(m: &Mat) -> (usize, usize) {
    m.dim()
}

fn same_shape(op: &'static str, a: &Mat, b: &Mat) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch { op, left: a.dim(), right: b.dim() });
    }
    Ok(())
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn tanh_ratio_grad(t: f64) -> f64 {
    if t.abs() < 1e-3 {
        -2.0 * t / 3.0 + 8.0 * t.powi(3) / 15.0
    } else {
        let th = t.tanh();
        ((1.0 - th * th) * t - th) / (t * t)
    }
}

fn artanh_ratio_grad(t: f64) -> f64 {
    if t.abs() < 1e-3 {
        2.0 * t / 3.0 + 4.0 * t.powi(3) / 5.0
    } else {
        (t / (1.0 - t * t) - t.atanh()) / (t * t)
    }
}

/// `acosh(1 + u)` evaluated without cancellation for small `u ≥ 0`.
fn arcosh1p(u: f64) -> f64 {
    let u = u.max(0.0);
    (u + (u * (u + 2.0)).sqrt()).ln_1p()
}

fn arcosh1p_grad(u: f64) -> f64 {
    let u = u.max(1e-300);
    1.0 / (u * (u + 2.0)).sqrt()
}

fn arcosh1p_sq_grad(u: f64) -> f64 {
    if u <= 1e-14 {
        return 2.0;
    }
    2.0 * arcosh1p(u) / (u * (u + 2.0)).sqrt()
}

/// `s'(t)/t` for `s = tanh_ratio`, finite at zero.
fn tanh_ratio_grad_over_t(t: f64) -> f64 {
    if t < 1e-3 {
        -2.0 / 3.0 + 8.0 * t * t / 15.0
    } else {
        tanh_ratio_grad(t) / t
    }
}

/// `s'(t)/t` for `s = artanh_ratio`, finite at zero.
fn artanh_ratio_grad_over_t(t: f64) -> f64 {
    if t < 1e-3 {
        2.0 / 3.0 + 4.0 * t * t / 5.0
    } else {
        artanh_ratio_grad(t) / t
    }
}

/// Row-wise `u ↦ s(‖u‖) u`.
fn radial_scale(a: &Mat, s: impl Fn(f64) -> f64) -> Mat {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        row *= s(n);
    }
    out
}

/// Adjoint of [`radial_scale`]: `s g + (s'(n)/n)(u·g) u`.
fn radial_scale_grad(a: &Mat, g: &Mat, s: impl Fn(f64) -> f64, ds_over_n: impl Fn(f64) -> f64) -> Mat {
    let mut d = g.clone();
    for (k, mut row) in d.rows_mut().into_iter().enumerate() {
        let u = a.row(k);
        let n = u.dot(&u).sqrt();
        let ug = u.dot(&row);
        row *= s(n);
        row.scaled_add(ds_over_n(n) * ug, &u);
    }
    d
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let needs_grad = match op {
            Op::Leaf(key) => key.is_some(),
            _ => {
                let mut any = false;
                op.for_each_input(|v| any |= self.nodes[v.0].needs_grad);
                any
            }
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Mat, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf(None), needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.leaf(value, false)
    }

    /// Input whose gradient is reported by [`Tape::gradients`].
    pub fn variable(&mut self, value: Mat) -> Var {
        self.leaf(value, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.value(id).clone();
        self.push(value, Op::Leaf(Some(ParamKey { tag: store.tag(), id })))
    }

    /// Attention coefficients saved by a [`Tape::graph_attention`] node,
    /// one row per node holding its weights over the nodes of its graph.
    pub fn attention(&self, v: Var) -> Option<&Mat> {
        match &self.nodes[v.0].op {
            Op::GraphAttention { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(Error::ShapeMismatch { op: "matmul", left: shape(va), right: shape(vb) });
        }
        let out = va.dot(vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a) - self.value(b);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a) * self.value(b);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("div", self.value(a), self.value(b))?;
        let out = self.value(a) / self.value(b);
        Ok(self.push(out, Op::Div(a, b)))
    }

    /// `a (m × n) + row (1 × n)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.nrows() != 1 || vr.ncols() != va.ncols() {
            return Err(Error::ShapeMismatch { op: "add_row", left: shape(va), right: shape(vr) });
        }
        let out = va + vr;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    fn check_col(&self, op: &'static str, a: Var, col: Var) -> Result<()> {
        let (va, vc) = (self.value(a), self.value(col));
        if vc.ncols() != 1 || vc.nrows() != va.nrows() {
            return Err(Error::ShapeMismatch { op, left: shape(va), right: shape(vc) });
        }
        Ok(())
    }

    /// `a (m × n) + col (m × 1)` broadcast over columns.
    pub fn add_col(&mut self, a: Var, col: Var) -> Result<Var> {
        self.check_col("add_col", a, col)?;
        let out = self.value(a) + self.value(col);
        Ok(self.push(out, Op::AddCol(a, col)))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        self.check_col("mul_col", a, col)?;
        let out = self.value(a) * self.value(col);
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    pub fn div_col(&mut self, a: Var, col: Var) -> Result<Var> {
        self.check_col("div_col", a, col)?;
        let out = self.value(a) / self.value(col);
        Ok(self.push(out, Op::DivCol(a, col)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a) * s;
        self.push(out, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a) + s;
        self.push(out, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).mapv(|x| leaky(x, slope));
        self.push(out, Op::LeakyRelu(a, slope))
    }

    /// Euclidean norm of each row, `m × 1`.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let out = self.value(a).map_axis(Axis(1), |r| r.dot(&r).sqrt()).insert_axis(Axis(1));
        self.push(out, Op::RowNorm(a))
    }

    pub fn row_sq_norm(&mut self, a: Var) -> Var {
        let out = self.value(a).map_axis(Axis(1), |r| r.dot(&r)).insert_axis(Axis(1));
        self.push(out, Op::RowSqNorm(a))
    }

    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("row_dot", self.value(a), self.value(b))?;
        let (va, vb) = (self.value(a), self.value(b));
        let out = Array2::from_shape_fn((va.nrows(), 1), |(i, _)| va.row(i).dot(&vb.row(i)));
        Ok(self.push(out, Op::RowDot(a, b)))
    }

    /// Elementwise `tanh(t)/t` with value 1 at zero.
    pub fn tanh_ratio(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(tanh_ratio);
        self.push(out, Op::TanhRatio(a))
    }

    /// Elementwise `artanh(t)/t` with value 1 at zero; inputs must lie in `(-1, 1)`.
    pub fn artanh_ratio(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(artanh_ratio);
        self.push(out, Op::ArtanhRatio(a))
    }

    /// Elementwise `acosh(1 + u)`.
    pub fn arcosh1p(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(arcosh1p);
        self.push(out, Op::Arcosh1p(a))
    }

    /// Elementwise `acosh(1 + u)²`, smooth at `u = 0`.
    pub fn arcosh1p_sq(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|u| arcosh1p(u).powi(2));
        self.push(out, Op::Arcosh1pSq(a))
    }

    /// Row-wise `tanh(‖u‖) u / ‖u‖`, without projection.
    pub fn exp_origin(&mut self, a: Var) -> Var {
        let out = radial_scale(self.value(a), tanh_ratio);
        self.push(out, Op::ExpO(a))
    }

    /// Row-wise `artanh(‖v‖) v / ‖v‖`; rows must lie inside the unit ball.
    pub fn log_origin(&mut self, a: Var) -> Var {
        let out = radial_scale(self.value(a), artanh_ratio);
        self.push(out, Op::LogO(a))
    }

    /// Row-wise Möbius addition, without projection.
    pub fn mobius_add(&mut self, x: Var, y: Var) -> Result<Var> {
        same_shape("mobius_add", self.value(x), self.value(y))?;
        let (vx, vy) = (self.value(x), self.value(y));
        let mut out = vx.clone();
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            let (xr, yr) = (vx.row(k), vy.row(k));
            let (xy, x2, y2) = (xr.dot(&yr), xr.dot(&xr), yr.dot(&yr));
            let den = 1.0 + 2.0 * xy + x2 * y2;
            row *= (1.0 + 2.0 * xy + y2) / den;
            row.scaled_add((1.0 - x2) / den, &yr);
        }
        Ok(self.push(out, Op::MobiusAdd(x, y)))
    }

    /// Rescales rows whose norm exceeds `1 - BALL_EPS` back onto the shell.
    pub fn project(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > MAX_NORM {
                row *= MAX_NORM / n;
            }
        }
        self.push(out, Op::Project(a))
    }

    pub fn mean_cols(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let n = va.ncols().max(1) as f64;
        let out = (va.sum_axis(Axis(1)) / n).insert_axis(Axis(1));
        self.push(out, Op::MeanCols(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = Array2::from_elem((1, 1), va.sum() / va.len().max(1) as f64);
        self.push(out, Op::MeanAll(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.nrows() != vb.nrows() {
            return Err(Error::ShapeMismatch { op: "concat_cols", left: shape(va), right: shape(vb) });
        }
        let out = ndarray::concatenate(Axis(1), &[va.view(), vb.view()]).expect("rows checked");
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    /// Builds a matrix whose row `k` is row `index[k].1` of `sources[index[k].0]`.
    pub fn gather_rows(&mut self, sources: &[Var], index: &[(usize, usize)]) -> Result<Var> {
        let cols = sources.first().map(|&s| self.value(s).ncols()).unwrap_or(0);
        for &s in sources {
            if self.value(s).ncols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "gather_rows",
                    left: (0, cols),
                    right: shape(self.value(s)),
                });
            }
        }
        let mut out = Array2::zeros((index.len(), cols));
        for (k, &(src, row)) in index.iter().enumerate() {
            out.row_mut(k).assign(&self.value(sources[src]).row(row));
        }
        let index = index.iter().map(|&(a, b)| (a as u32, b as u32)).collect();
        Ok(self.push(out, Op::GatherRows { sources: sources.to_vec(), index }))
    }

    /// Repeats a `1 × n` row `m` times.
    pub fn broadcast_rows(&mut self, row: Var, m: usize) -> Result<Var> {
        let index = vec![(0, 0); m];
        self.gather_rows(&[row], &index)
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let index: Vec<_> = rows.iter().map(|&r| (0, r)).collect();
        self.gather_rows(&[a], &index)
    }

    /// Masked graph attention over consecutive groups of `group` nodes, each
    /// group a complete graph with self-loops.
    ///
    /// Node `i` scores neighbour `j` with `LeakyReLU(src_i + dst_j)`, the
    /// scores are softmax-normalised per row, and the output row is
    /// `Σ_j α_ij z_j`.
    pub fn graph_attention(&mut self, z: Var, src: Var, dst: Var, group: usize, slope: f64) -> Result<Var> {
        let (vz, vs, vd) = (self.value(z), self.value(src), self.value(dst));
        let m = vz.nrows();
        if group == 0 || m == 0 {
            return Err(Error::EmptyGraph);
        }
        if m % group != 0 || vs.dim() != (m, 1) || vd.dim() != (m, 1) {
            return Err(Error::ShapeMismatch { op: "graph_attention", left: shape(vz), right: shape(vs) });
        }
        let mut alpha = Array2::zeros((m, group));
        let mut out = Array2::zeros(vz.raw_dim());
        let mut scores = vec![0.0; group];
        for g0 in (0..m).step_by(group) {
            for i in g0..g0 + group {
                let mut max = f64::NEG_INFINITY;
                for (j, sc) in scores.iter_mut().enumerate() {
                    *sc = leaky(vs[[i, 0]] + vd[[g0 + j, 0]], slope);
                    max = max.max(*sc);
                }
                let mut total = 0.0;
                for sc in scores.iter_mut() {
                    *sc = (*sc - max).exp();
                    total += *sc;
                }
                for (j, sc) in scores.iter().enumerate() {
                    let a = sc / total;
                    alpha[[i, j]] = a;
                    out.row_mut(i).scaled_add(a, &vz.row(g0 + j));
                }
            }
        }
        Ok(self.push(out, Op::GraphAttention { z, src, dst, group, slope, alpha }))
    }

    /// Elementwise Huber loss of `pred` against a constant target.
    pub fn huber(&mut self, pred: Var, target: Mat, delta: f64) -> Result<Var> {
        same_shape("huber", self.value(pred), &target)?;
        let mut out = self.value(pred) - &target;
        out.mapv_inplace(|r| if r.abs() <= delta { 0.5 * r * r } else { delta * (r.abs() - 0.5 * delta) });
        Ok(self.push(out, Op::Huber { pred, target, delta }))
    }

    /// Per-row softmax cross-entropy, `m × 1`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let vl = self.value(logits);
        if vl.nrows() != targets.len() || targets.iter().any(|&t| t >= vl.ncols()) {
            return Err(Error::ShapeMismatch { op: "cross_entropy", left: shape(vl), right: (targets.len(), 1) });
        }
        let mut probs = vl.clone();
        let mut out = Array2::zeros((vl.nrows(), 1));
        for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|x| (x - max).exp());
            let total = row.sum();
            row /= total;
            out[[i, 0]] = -(row[targets[i]].max(f64::MIN_POSITIVE)).ln();
        }
        Ok(self.push(out, Op::CrossEntropy { logits, targets: targets.to_vec(), probs }))
    }

    /// `out[i] = a[i, idx[i]]`, `m × 1`.
    pub fn pick_cols(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if va.nrows() != idx.len() || idx.iter().any(|&c| c >= va.ncols()) {
            return Err(Error::ShapeMismatch { op: "pick_cols", left: shape(va), right: (idx.len(), 1) });
        }
        let out = Array2::from_shape_fn((idx.len(), 1), |(i, _)| va[[i, idx[i]]]);
        Ok(self.push(out, Op::PickCols { a, idx: idx.to_vec() }))
    }

    /// Reverse sweep from a `1 × 1` node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.dim() != (1, 1) {
            return Err(Error::NonScalarLoss(lv.dim()));
        }
        let mut adj = Adjoints { slots: (0..self.nodes.len()).map(|_| None).collect(), nodes: &self.nodes };
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients { grads: adj.slots });
        }
        adj.slots[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj.slots[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            adj.slots[i] = Some(g);
        }
        let grads = adj.slots;
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::gradients`] and adds each parameter's adjoint into the
    /// owning store's accumulator.
    pub fn backward(&self, loss: Var, stores: &mut [&mut ParamStore]) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            let Op::Leaf(Some(key)) = node.op else { continue };
            let Some(g) = grads.grads[i].as_ref() else { continue };
            if let Some(store) = stores.iter_mut().find(|s| s.tag() == key.tag) {
                let p = store.get_mut(key.id);
                p.grad += g;
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Mat, grads: &mut Adjoints<'_>) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if grads.wants(*a) {
                    acc(grads, *a, g.dot(&vb.t()));
                }
                if grads.wants(*b) {
                    acc(grads, *b, va.t().dot(g));
                }
            }
            Op::Add(a, b) => {
                acc_ref(grads, *a, g);
                acc_ref(grads, *b, g);
            }
            Op::Sub(a, b) => {
                acc_ref(grads, *a, g);
                acc(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g * self.value(*b));
                acc(grads, *b, g * self.value(*a));
            }
            Op::Div(a, b) => {
                let vb = self.value(*b);
                acc(grads, *a, g / vb);
                acc(grads, *b, -(g * out) / vb);
            }
            Op::AddRow(a, r) => {
                acc_ref(grads, *a, g);
                acc(grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::AddCol(a, c) => {
                acc_ref(grads, *a, g);
                acc(grads, *c, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
            }
            Op::MulCol(a, c) => {
                let (va, vc) = (self.value(*a), self.value(*c));
                acc(grads, *a, g * vc);
                acc(grads, *c, (g * va).sum_axis(Axis(1)).insert_axis(Axis(1)));
            }
            Op::DivCol(a, c) => {
                let vc = self.value(*c);
                acc(grads, *a, g / vc);
                let gc = (g * out).sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(grads, *c, -(gc / vc));
            }
            Op::Scale(a, s) => acc(grads, *a, g * *s),
            Op::AddScalar(a) => acc_ref(grads, *a, g),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                acc(grads, *a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d *= slope
                    }
                });
                acc(grads, *a, d);
            }
            Op::RowNorm(a) => {
                let va = self.value(*a);
                let mut d = va.clone();
                for (k, mut row) in d.rows_mut().into_iter().enumerate() {
                    let n = out[[k, 0]];
                    if n > 0.0 {
                        row *= g[[k, 0]] / n;
                    } else {
                        row.fill(0.0);
                    }
                }
                acc(grads, *a, d);
            }
            Op::RowSqNorm(a) => acc(grads, *a, self.value(*a) * &(g * 2.0)),
            Op::RowDot(a, b) => {
                acc(grads, *a, self.value(*b) * g);
                acc(grads, *b, self.value(*a) * g);
            }
            Op::TanhRatio(a) => acc(grads, *a, g * &self.value(*a).mapv(tanh_ratio_grad)),
            Op::ArtanhRatio(a) => acc(grads, *a, g * &self.value(*a).mapv(artanh_ratio_grad)),
            Op::Arcosh1p(a) => acc(grads, *a, g * &self.value(*a).mapv(arcosh1p_grad)),
            Op::Arcosh1pSq(a) => acc(grads, *a, g * &self.value(*a).mapv(arcosh1p_sq_grad)),
            Op::Project(a) => {
                let va = self.value(*a);
                let mut d = g.clone();
                for (k, mut row) in d.rows_mut().into_iter().enumerate() {
                    let x = va.row(k);
                    let n = x.dot(&x).sqrt();
                    if n > MAX_NORM {
                        let xg = x.dot(&row);
                        row.zip_mut_with(&x, |r, &xi| *r = MAX_NORM / n * (*r - xi * xg / (n * n)));
                    }
                }
                acc(grads, *a, d);
            }
            Op::MeanCols(a) => {
                let va = self.value(*a);
                let n = va.ncols().max(1) as f64;
                let d = Array2::from_shape_fn(va.raw_dim(), |(r, _)| g[[r, 0]] / n);
                acc(grads, *a, d);
            }
            Op::SumAll(a) => {
                let d = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                acc(grads, *a, d);
            }
            Op::MeanAll(a) => {
                let va = self.value(*a);
                let d = Array2::from_elem(va.raw_dim(), g[[0, 0]] / va.len().max(1) as f64);
                acc(grads, *a, d);
            }
            Op::ConcatCols(a, b) => {
                let na = self.value(*a).ncols();
                acc(grads, *a, g.slice(s![.., ..na]).to_owned());
                acc(grads, *b, g.slice(s![.., na..]).to_owned());
            }
            Op::GatherRows { sources, index } => {
                let mut parts: Vec<Mat> = sources.iter().map(|&s| Array2::zeros(self.value(s).raw_dim())).collect();
                for (k, &(src, row)) in index.iter().enumerate() {
                    let mut dst = parts[src as usize].row_mut(row as usize);
                    dst += &g.row(k);
                }
                for (&s, part) in sources.iter().zip(parts) {
                    acc(grads, s, part);
                }
            }
            Op::GraphAttention { z, src, dst, group, slope, alpha } => {
                let (vz, vs, vd) = (self.value(*z), self.value(*src), self.value(*dst));
                let m = vz.nrows();
                let group = *group;
                let mut dz = Array2::zeros(vz.raw_dim());
                let mut ds = Array2::zeros((m, 1));
                let mut dd = Array2::zeros((m, 1));
                let mut dalpha = vec![0.0; group];
                for g0 in (0..m).step_by(group) {
                    for i in g0..g0 + group {
                        let gi = g.row(i);
                        let mut weighted = 0.0;
                        for j in 0..group {
                            let a = alpha[[i, j]];
                            dalpha[j] = gi.dot(&vz.row(g0 + j));
                            weighted += a * dalpha[j];
                            dz.row_mut(g0 + j).scaled_add(a, &gi);
                        }
                        for j in 0..group {
                            let de = alpha[[i, j]] * (dalpha[j] - weighted);
                            let pre = vs[[i, 0]] + vd[[g0 + j, 0]];
                            let dp = if pre > 0.0 { de } else { de * slope };
                            ds[[i, 0]] += dp;
                            dd[[g0 + j, 0]] += dp;
                        }
                    }
                }
                acc(grads, *z, dz);
                acc(grads, *src, ds);
                acc(grads, *dst, dd);
            }
            Op::Huber { pred, target, delta } => {
                let mut d = self.value(*pred) - target;
                d.mapv_inplace(|r| r.clamp(-*delta, *delta));
                acc(grads, *pred, d * g);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let mut d = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    d[[i, t]] -= 1.0;
                }
                acc(grads, *logits, d * g);
            }
            Op::ExpO(a) => {
                let d = radial_scale_grad(self.value(*a), g, tanh_ratio, tanh_ratio_grad_over_t);
                acc(grads, *a, d);
            }
            Op::LogO(a) => {
                let d = radial_scale_grad(self.value(*a), g, artanh_ratio, artanh_ratio_grad_over_t);
                acc(grads, *a, d);
            }
            Op::MobiusAdd(x, y) => {
                let (vx, vy) = (self.value(*x), self.value(*y));
                let mut dx = Array2::zeros(vx.raw_dim());
                let mut dy = Array2::zeros(vy.raw_dim());
                for k in 0..vx.nrows() {
                    let (xr, yr, gr, or) = (vx.row(k), vy.row(k), g.row(k), out.row(k));
                    let (xy, x2, y2) = (xr.dot(&yr), xr.dot(&xr), yr.dot(&yr));
                    let a = 1.0 + 2.0 * xy + y2;
                    let b = 1.0 - x2;
                    let den = 1.0 + 2.0 * xy + x2 * y2;
                    // out = (a x + b y) / den
                    let g_den = -gr.dot(&or) / den;
                    let g_a = gr.dot(&xr) / den;
                    let g_b = gr.dot(&yr) / den;
                    let g_xy = 2.0 * g_a + 2.0 * g_den;
                    let g_x2 = -g_b + g_den * y2;
                    let g_y2 = g_a + g_den * x2;
                    let mut rx = dx.row_mut(k);
                    rx.scaled_add(a / den, &gr);
                    rx.scaled_add(g_xy, &yr);
                    rx.scaled_add(2.0 * g_x2, &xr);
                    let mut ry = dy.row_mut(k);
                    ry.scaled_add(b / den, &gr);
                    ry.scaled_add(g_xy, &xr);
                    ry.scaled_add(2.0 * g_y2, &yr);
                }
                acc(grads, *x, dx);
                acc(grads, *y, dy);
            }
            Op::PickCols { a, idx } => {
                let mut d = Array2::zeros(self.value(*a).raw_dim());
                for (i, &c) in idx.iter().enumerate() {
                    d[[i, c]] = g[[i, 0]];
                }
                acc(grads, *a, d);
            }
        }
    }
}

impl Adjoints<'_> {
    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }
}

fn acc(grads: &mut Adjoints<'_>, v: Var, d: Mat) {
    if !grads.wants(v) {
        return;
    }
    match &mut grads.slots[v.0] {
        Some(g) => *g += &d,
        slot @ None => *slot = Some(d),
    }
}

fn acc_ref(grads: &mut Adjoints<'_>, v: Var, d: &Mat) {
    if !grads.wants(v) {
        return;
    }
    match &mut grads.slots[v.0] {
        Some(g) => *g += d,
        slot @ None => *slot = Some(d.clone()),
    }
}
