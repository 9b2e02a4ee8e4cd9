//! Reverse-mode differentiation over batched tensor operations.
//!
//! A [`Tape`] records every operation in evaluation order. Each node keeps its
//! value; `backward` walks the nodes in reverse, pushing adjoints to inputs.
//! Besides generic algebra the tape knows the handful of fused operations the
//! render-and-loss graph needs (Rodrigues, ray marching, compositing), each
//! with a hand-derived adjoint.

use nalgebra::Vector3;

use super::fastmath::sin_cos_scaled;
use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use super::AutodiffError;
use crate::geometry::{axis_angle_jacobian, axis_angle_to_matrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Square(Var),
    Sum(Var),
    /// Keeps `cos(freq·x)` for the backward pass.
    Sin { x: Var, freq: f64, cos: Vec<f64> },
    Sigmoid(Var),
    Softplus(Var),
    ConcatCols(Var, Var),
    GatherRows { src: Var, index: Vec<usize> },
    RepeatRows { src: Var, times: usize },
    Rodrigues(Var),
    RotateVectors { rot: Var, v: Var },
    CameraDirections { focal: Var, offsets: Tensor },
    Normalize(Var),
    RayPoints { origin: Var, dir: Var, t: Tensor },
    Composite { density: Var, color: Var, t: Tensor, t_far: f64 },
    SmoothL1 { pred: Var, target: Tensor, beta: f64, scale: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every tracked leaf after [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `var`, or zeros when no tracked path reached it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(t) => t.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }
}

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

/// Smooth-L1 value for a single residual.
pub fn smooth_l1_value(diff: f64, beta: f64) -> f64 {
    let a = diff.abs();
    if a < beta {
        0.5 * a * a / beta
    } else {
        a - 0.5 * beta
    }
}

/// Derivative of [`smooth_l1_value`]; uses the quadratic branch at `|diff| = beta`.
pub fn smooth_l1_derivative(diff: f64, beta: f64) -> f64 {
    if diff.abs() <= beta {
        diff / beta
    } else {
        diff.signum()
    }
}

/// Per-ray quantities of the discrete volume-rendering quadrature.
#[derive(Clone, Debug)]
pub(crate) struct CompositeTrace {
    pub deltas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Transmittance before each sample, plus the residual after the last.
    pub transmittance: Vec<f64>,
}

pub(crate) fn composite_trace(t: &[f64], t_far: f64, density: impl Fn(usize) -> f64) -> CompositeTrace {
    let n = t.len();
    let mut deltas = Vec::with_capacity(n);
    let mut alphas = Vec::with_capacity(n);
    let mut transmittance = Vec::with_capacity(n + 1);
    let mut trans = 1.0;
    for i in 0..n {
        let delta = if i + 1 < n { t[i + 1] - t[i] } else { t_far - t[i] };
        let survive = (-density(i) * delta).exp();
        deltas.push(delta);
        alphas.push(1.0 - survive);
        transmittance.push(trans);
        trans *= survive;
    }
    transmittance.push(trans);
    CompositeTrace { deltas, alphas, transmittance }
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

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, tracked: true });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, tracked: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matmul(self.value(a), self.value(b));
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    /// `x · w + b` with `b` a `1×out` row broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let mut value = matmul(self.value(x), self.value(w));
        let bias = self.value(b);
        assert_eq!(bias.shape(), (1, value.cols), "bias shape");
        for r in 0..value.rows {
            for (o, bv) in value.row_mut(r).iter_mut().zip(&bias.data) {
                *o += bv;
            }
        }
        self.push(value, Op::Linear { x, w, b }, &[x, w, b])
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        Tensor::from_vec(ta.rows, ta.cols, ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x + y);
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x - y);
        self.push(value, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x * y);
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|v| v * s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        self.push(value, Op::Square(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data.iter().sum());
        self.push(value, Op::Sum(a), &[a])
    }

    /// `sin(freq · x)`
    pub fn sin(&mut self, x: Var, freq: f64) -> Var {
        let t = self.value(x);
        let (sin, cos) = sin_cos_scaled(&t.data, freq);
        let value = Tensor::from_vec(t.rows, t.cols, sin);
        self.push(value, Op::Sin { x, freq, cos }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x), &[x])
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).map(softplus);
        self.push(value, Op::Softplus(x), &[x])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rows, tb.rows, "concat row mismatch");
        let cols = ta.cols + tb.cols;
        let mut data = Vec::with_capacity(ta.rows * cols);
        for r in 0..ta.rows {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let value = Tensor::from_vec(ta.rows, cols, data);
        self.push(value, Op::ConcatCols(a, b), &[a, b])
    }

    pub fn gather_rows(&mut self, src: Var, index: Vec<usize>) -> Var {
        let t = self.value(src);
        let mut data = Vec::with_capacity(index.len() * t.cols);
        for &i in &index {
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::from_vec(index.len(), t.cols, data);
        self.push(value, Op::GatherRows { src, index }, &[src])
    }

    /// Each row repeated `times` times consecutively.
    pub fn repeat_rows(&mut self, src: Var, times: usize) -> Var {
        let t = self.value(src);
        let mut data = Vec::with_capacity(t.rows * times * t.cols);
        for r in 0..t.rows {
            for _ in 0..times {
                data.extend_from_slice(t.row(r));
            }
        }
        let value = Tensor::from_vec(t.rows * times, t.cols, data);
        self.push(value, Op::RepeatRows { src, times }, &[src])
    }

    /// Rows of axis-angle vectors (`n×3`) to row-major rotation matrices (`n×9`).
    pub fn rodrigues(&mut self, omega: Var) -> Var {
        let t = self.value(omega);
        assert_eq!(t.cols, 3, "rodrigues expects n×3");
        let mut data = Vec::with_capacity(t.rows * 9);
        for r in 0..t.rows {
            let w = t.row(r);
            let m = axis_angle_to_matrix(&Vector3::new(w[0], w[1], w[2]));
            for i in 0..3 {
                for j in 0..3 {
                    data.push(m[(i, j)]);
                }
            }
        }
        let value = Tensor::from_vec(t.rows, 9, data);
        self.push(value, Op::Rodrigues(omega), &[omega])
    }

    /// Row-wise `R_r · v_r` with `R` as `n×9` row-major matrices.
    pub fn rotate_vectors(&mut self, rot: Var, v: Var) -> Var {
        let (tr, tv) = (self.value(rot), self.value(v));
        assert_eq!((tr.rows, tr.cols, tv.cols), (tv.rows, 9, 3), "rotate_vectors shapes");
        let mut data = Vec::with_capacity(tv.rows * 3);
        for r in 0..tv.rows {
            let m = tr.row(r);
            let x = tv.row(r);
            for i in 0..3 {
                data.push(m[3 * i] * x[0] + m[3 * i + 1] * x[1] + m[3 * i + 2] * x[2]);
            }
        }
        let value = Tensor::from_vec(tv.rows, 3, data);
        self.push(value, Op::RotateVectors { rot, v }, &[rot, v])
    }

    /// Camera-frame directions `(dx / f, dy / f, 1)` for pixel offsets from the
    /// principal point (`offsets` is `n×2`).
    pub fn camera_directions(&mut self, focal: Var, offsets: Tensor) -> Var {
        let f = self.value(focal).item();
        assert_eq!(offsets.cols, 2, "offsets must be n×2");
        let mut data = Vec::with_capacity(offsets.rows * 3);
        for r in 0..offsets.rows {
            let o = offsets.row(r);
            data.extend_from_slice(&[o[0] / f, o[1] / f, 1.0]);
        }
        let value = Tensor::from_vec(offsets.rows, 3, data);
        self.push(value, Op::CameraDirections { focal, offsets }, &[focal])
    }

    pub fn normalize(&mut self, v: Var) -> Var {
        let t = self.value(v);
        let mut data = Vec::with_capacity(t.len());
        for r in 0..t.rows {
            let x = t.row(r);
            let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            data.extend_from_slice(&[x[0] / n, x[1] / n, x[2] / n]);
        }
        let value = Tensor::from_vec(t.rows, 3, data);
        self.push(value, Op::Normalize(v), &[v])
    }

    /// Sample points `o_r + d_r t_{r,j}`, laid out ray-major (`(n·S)×3`).
    pub fn ray_points(&mut self, origin: Var, dir: Var, t: Tensor) -> Var {
        let (to, td) = (self.value(origin), self.value(dir));
        assert_eq!((to.rows, td.rows, t.rows), (t.rows, t.rows, to.rows), "ray_points rows");
        let s = t.cols;
        let mut data = Vec::with_capacity(t.rows * s * 3);
        for r in 0..t.rows {
            let o = to.row(r);
            let d = td.row(r);
            for &tv in t.row(r) {
                data.extend_from_slice(&[o[0] + d[0] * tv, o[1] + d[1] * tv, o[2] + d[2] * tv]);
            }
        }
        let value = Tensor::from_vec(t.rows * s, 3, data);
        self.push(value, Op::RayPoints { origin, dir, t }, &[origin, dir])
    }

    /// Volume-rendering quadrature per ray. `density` is `(n·S)×1`, `color`
    /// `(n·S)×3`, `t` holds the `n×S` sample depths. Output is `n×3`.
    pub fn composite(&mut self, density: Var, color: Var, t: Tensor, t_far: f64) -> Var {
        let (ts, tc) = (self.value(density), self.value(color));
        let s = t.cols;
        assert_eq!((ts.rows, ts.cols, tc.rows, tc.cols), (t.rows * s, 1, t.rows * s, 3), "composite shapes");
        let mut data = Vec::with_capacity(t.rows * 3);
        for r in 0..t.rows {
            let base = r * s;
            let trace = composite_trace(t.row(r), t_far, |i| ts.data[base + i]);
            let mut rgb = [0.0; 3];
            for i in 0..s {
                let w = trace.transmittance[i] * trace.alphas[i];
                let c = tc.row(base + i);
                for k in 0..3 {
                    rgb[k] += w * c[k];
                }
            }
            data.extend_from_slice(&rgb);
        }
        let value = Tensor::from_vec(t.rows, 3, data);
        self.push(value, Op::Composite { density, color, t, t_far }, &[density, color])
    }

    /// `scale · Σ smooth_l1(pred - target)` over all entries, as a scalar.
    pub fn smooth_l1(&mut self, pred: Var, target: Tensor, beta: f64, scale: f64) -> Result<Var, AutodiffError> {
        if !(beta > 0.0) {
            return Err(AutodiffError::Domain(format!("smooth-L1 beta must be positive, got {beta}")));
        }
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape(), "smooth_l1 shapes");
        let total: f64 = p.data.iter().zip(&target.data).map(|(a, b)| smooth_l1_value(a - b, beta)).sum();
        let value = Tensor::scalar(scale * total);
        Ok(self.push(value, Op::SmoothL1 { pred, target, beta, scale }, &[pred]))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        let mut leaf_grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        for (node, g) in self.nodes.iter().zip(grads) {
            let keep = matches!(node.op, Op::Leaf) && node.tracked;
            if keep {
                if let Some(t) = &g {
                    if !t.all_finite() {
                        return Err(AutodiffError::NonFiniteGradient);
                    }
                }
                leaf_grads.push(g);
            } else {
                leaf_grads.push(None);
            }
        }
        Ok(Gradients { grads: leaf_grads, shapes: self.nodes.iter().map(|n| n.value.shape()).collect() })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].tracked {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, matmul_nt(g, self.value(*b)));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, matmul_tn(self.value(*a), g));
                }
            }
            Op::Linear { x, w, b } => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, matmul_nt(g, self.value(*w)));
                }
                if self.wants(*w) {
                    self.accumulate(grads, *w, matmul_tn(self.value(*x), g));
                }
                if self.wants(*b) {
                    let mut gb = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (acc, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d = g.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::from_vec(g.rows, g.cols, d));
                }
                if self.wants(*b) {
                    let d = g.data.iter().zip(&ta.data).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::from_vec(g.rows, g.cols, d));
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|v| v * s)),
            Op::Square(a) => {
                let ta = self.value(*a);
                let d = g.data.iter().zip(&ta.data).map(|(x, y)| 2.0 * x * y).collect();
                self.accumulate(grads, *a, Tensor::from_vec(g.rows, g.cols, d));
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::from_vec(r, c, vec![g.item(); r * c]));
            }
            Op::Sin { x, freq, cos } => {
                let d = g.data.iter().zip(cos).map(|(gv, c)| gv * freq * c).collect();
                self.accumulate(grads, *x, Tensor::from_vec(g.rows, g.cols, d));
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let d = g.data.iter().zip(&y.data).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect();
                self.accumulate(grads, *x, Tensor::from_vec(g.rows, g.cols, d));
            }
            Op::Softplus(x) => {
                let tx = self.value(*x);
                let d = g.data.iter().zip(&tx.data).map(|(gv, xv)| gv * sigmoid(*xv)).collect();
                self.accumulate(grads, *x, Tensor::from_vec(g.rows, g.cols, d));
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols;
                let cb = self.value(*b).cols;
                if self.wants(*a) {
                    let mut d = Vec::with_capacity(g.rows * ca);
                    for r in 0..g.rows {
                        d.extend_from_slice(&g.row(r)[..ca]);
                    }
                    self.accumulate(grads, *a, Tensor::from_vec(g.rows, ca, d));
                }
                if self.wants(*b) {
                    let mut d = Vec::with_capacity(g.rows * cb);
                    for r in 0..g.rows {
                        d.extend_from_slice(&g.row(r)[ca..]);
                    }
                    self.accumulate(grads, *b, Tensor::from_vec(g.rows, cb, d));
                }
            }
            Op::GatherRows { src, index } => {
                let (r, c) = self.value(*src).shape();
                let mut d = Tensor::zeros(r, c);
                for (row, &i) in index.iter().enumerate() {
                    for (acc, v) in d.row_mut(i).iter_mut().zip(g.row(row)) {
                        *acc += v;
                    }
                }
                self.accumulate(grads, *src, d);
            }
            Op::RepeatRows { src, times } => {
                let (r, c) = self.value(*src).shape();
                let mut d = Tensor::zeros(r, c);
                for row in 0..r {
                    for k in 0..*times {
                        let gr = g.row(row * times + k);
                        for (acc, v) in d.row_mut(row).iter_mut().zip(gr) {
                            *acc += v;
                        }
                    }
                }
                self.accumulate(grads, *src, d);
            }
            Op::Rodrigues(omega) => {
                let tw = self.value(*omega);
                let mut d = Tensor::zeros(tw.rows, 3);
                for r in 0..tw.rows {
                    let w = tw.row(r);
                    let jac = axis_angle_jacobian(&Vector3::new(w[0], w[1], w[2]));
                    let gr = g.row(r);
                    for (k, jk) in jac.iter().enumerate() {
                        let mut s = 0.0;
                        for i in 0..3 {
                            for j in 0..3 {
                                s += gr[3 * i + j] * jk[(i, j)];
                            }
                        }
                        d.data[3 * r + k] = s;
                    }
                }
                self.accumulate(grads, *omega, d);
            }
            Op::RotateVectors { rot, v } => {
                let (tr, tv) = (self.value(*rot), self.value(*v));
                if self.wants(*rot) {
                    let mut d = Tensor::zeros(tr.rows, 9);
                    for r in 0..tr.rows {
                        let (gr, x) = (g.row(r), tv.row(r));
                        let out = d.row_mut(r);
                        for i in 0..3 {
                            for j in 0..3 {
                                out[3 * i + j] = gr[i] * x[j];
                            }
                        }
                    }
                    self.accumulate(grads, *rot, d);
                }
                if self.wants(*v) {
                    let mut d = Tensor::zeros(tv.rows, 3);
                    for r in 0..tv.rows {
                        let (gr, m) = (g.row(r), tr.row(r));
                        let out = d.row_mut(r);
                        for j in 0..3 {
                            out[j] = m[j] * gr[0] + m[3 + j] * gr[1] + m[6 + j] * gr[2];
                        }
                    }
                    self.accumulate(grads, *v, d);
                }
            }
            Op::CameraDirections { focal, offsets } => {
                let f = self.value(*focal).item();
                let mut s = 0.0;
                for r in 0..offsets.rows {
                    let (o, gr) = (offsets.row(r), g.row(r));
                    s -= (gr[0] * o[0] + gr[1] * o[1]) / (f * f);
                }
                self.accumulate(grads, *focal, Tensor::scalar(s));
            }
            Op::Normalize(v) => {
                let tv = self.value(*v);
                let y = &node.value;
                let mut d = Tensor::zeros(tv.rows, 3);
                for r in 0..tv.rows {
                    let x = tv.row(r);
                    let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot = yr[0] * gr[0] + yr[1] * gr[1] + yr[2] * gr[2];
                    let out = d.row_mut(r);
                    for k in 0..3 {
                        out[k] = (gr[k] - yr[k] * dot) / n;
                    }
                }
                self.accumulate(grads, *v, d);
            }
            Op::RayPoints { origin, dir, t } => {
                let s = t.cols;
                let mut go = Tensor::zeros(t.rows, 3);
                let mut gd = Tensor::zeros(t.rows, 3);
                for r in 0..t.rows {
                    let tr = t.row(r);
                    let (mut ao, mut ad) = ([0.0; 3], [0.0; 3]);
                    for (j, &tv) in tr.iter().enumerate() {
                        let gp = g.row(r * s + j);
                        for k in 0..3 {
                            ao[k] += gp[k];
                            ad[k] += gp[k] * tv;
                        }
                    }
                    go.row_mut(r).copy_from_slice(&ao);
                    gd.row_mut(r).copy_from_slice(&ad);
                }
                self.accumulate(grads, *origin, go);
                self.accumulate(grads, *dir, gd);
            }
            Op::Composite { density, color, t, t_far } => {
                let (ts, tc) = (self.value(*density), self.value(*color));
                let s = t.cols;
                let mut gs = Tensor::zeros(ts.rows, 1);
                let mut gc = Tensor::zeros(tc.rows, 3);
                for r in 0..t.rows {
                    let base = r * s;
                    let trace = composite_trace(t.row(r), *t_far, |i| ts.data[base + i]);
                    let gr = g.row(r);
                    // dC/dσ_j = δ_j (T_{j+1} c_j - Σ_{i>j} w_i c_i), projected on g.
                    let mut tail = 0.0;
                    for j in (0..s).rev() {
                        let c = tc.row(base + j);
                        let w = trace.transmittance[j] * trace.alphas[j];
                        let gdotc = gr[0] * c[0] + gr[1] * c[1] + gr[2] * c[2];
                        gs.data[base + j] = trace.deltas[j] * (trace.transmittance[j + 1] * gdotc - tail);
                        tail += w * gdotc;
                        let out = gc.row_mut(base + j);
                        for k in 0..3 {
                            out[k] = w * gr[k];
                        }
                    }
                }
                self.accumulate(grads, *density, gs);
                self.accumulate(grads, *color, gc);
            }
            Op::SmoothL1 { pred, target, beta, scale } => {
                let tp = self.value(*pred);
                let k = g.item() * scale;
                let d = tp
                    .data
                    .iter()
                    .zip(&target.data)
                    .map(|(p, q)| k * smooth_l1_derivative(p - q, *beta))
                    .collect();
                self.accumulate(grads, *pred, Tensor::from_vec(tp.rows, tp.cols, d));
            }
        }
    }
}
