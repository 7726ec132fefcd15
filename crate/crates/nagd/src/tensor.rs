//! Reverse-mode automatic differentiation over 2-D `f64` tensors.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value
//! and the recipe to push gradients back to its inputs. One training step
//! builds a fresh graph, runs [`Graph::backward`] from a scalar loss, and
//! reads gradients off parameter leaves. Shapes are fixed per node;
//! mismatches are bugs and panic.

use ndarray::{concatenate, s, Array2, Axis};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tid(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Input tensor: parameter (grad tracked) or constant.
    Leaf,
    MatMul(Tid, Tid),
    Transpose(Tid),
    Add(Tid, Tid),
    Mul(Tid, Tid),
    Scale(Tid, f64),
    /// Repeat a 1×d row over every output row.
    BroadcastRows(Tid),
    ConcatRows(Vec<Tid>),
    SliceRows(Tid, usize, usize),
    ConcatCols(Vec<Tid>),
    SliceCols(Tid, usize, usize),
    GatherRows(Tid, Vec<usize>),
    /// Pick entries (row, col) into a k×1 column.
    GatherEntries(Tid, Vec<(usize, usize)>),
    Tanh(Tid),
    Exp(Tid),
    Ln(Tid),
    PowConst(Tid, f64),
    /// c − x, element-wise (c applied at construction).
    RSubConst(Tid),
    SoftmaxRows(Tid),
    LogSoftmaxRows(Tid),
    /// Row-wise RMS normalization of x scaled by a learned 1×d gain.
    RmsNormRows(Tid, Tid),
    SumAll(Tid),
}

struct Node {
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
    op: Op,
    needs_grad: bool,
}

/// Numerical floor inside RMS normalization.
const RMS_EPS: f64 = 1e-8;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Tid {
        self.nodes.push(Node { value, grad: None, op, needs_grad });
        Tid(self.nodes.len() - 1)
    }

    fn needs(&self, t: Tid) -> bool {
        self.nodes[t.0].needs_grad
    }

    /// Insert a trainable leaf; its gradient is available after backward.
    pub fn param(&mut self, value: Array2<f64>) -> Tid {
        self.push(value, Op::Leaf, true)
    }

    /// Insert a non-trainable leaf.
    pub fn constant(&mut self, value: Array2<f64>) -> Tid {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, t: Tid) -> &Array2<f64> {
        &self.nodes[t.0].value
    }

    pub fn grad(&self, t: Tid) -> Option<&Array2<f64>> {
        self.nodes[t.0].grad.as_ref()
    }

    pub fn matmul(&mut self, a: Tid, b: Tid) -> Tid {
        let v = self.value(a).dot(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn transpose(&mut self, a: Tid) -> Tid {
        let v = self.value(a).t().to_owned();
        let ng = self.needs(a);
        self.push(v, Op::Transpose(a), ng)
    }

    pub fn add(&mut self, a: Tid, b: Tid) -> Tid {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let v = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Tid {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape mismatch");
        let v = self.value(a) * self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Tid, c: f64) -> Tid {
        let v = self.value(a) * c;
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn broadcast_rows(&mut self, a: Tid, n: usize) -> Tid {
        let row = self.value(a);
        assert_eq!(row.nrows(), 1, "broadcast_rows expects a 1×d row");
        let mut v = Array2::zeros((n, row.ncols()));
        for i in 0..n {
            v.row_mut(i).assign(&row.row(0));
        }
        let ng = self.needs(a);
        self.push(v, Op::BroadcastRows(a), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Tid]) -> Tid {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|t| self.value(*t).view()).collect();
        let v = concatenate(Axis(0), &views).expect("row concat shape mismatch");
        let ng = parts.iter().any(|t| self.needs(*t));
        self.push(v, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Tid, start: usize, end: usize) -> Tid {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        let ng = self.needs(a);
        self.push(v, Op::SliceRows(a, start, end), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Tid]) -> Tid {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|t| self.value(*t).view()).collect();
        let v = concatenate(Axis(1), &views).expect("col concat shape mismatch");
        let ng = parts.iter().any(|t| self.needs(*t));
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Tid, start: usize, end: usize) -> Tid {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.needs(a);
        self.push(v, Op::SliceCols(a, start, end), ng)
    }

    pub fn gather_rows(&mut self, a: Tid, idx: &[usize]) -> Tid {
        let src = self.value(a);
        let mut v = Array2::zeros((idx.len(), src.ncols()));
        for (out, &i) in idx.iter().enumerate() {
            v.row_mut(out).assign(&src.row(i));
        }
        let ng = self.needs(a);
        self.push(v, Op::GatherRows(a, idx.to_vec()), ng)
    }

    pub fn gather_entries(&mut self, a: Tid, coords: &[(usize, usize)]) -> Tid {
        let src = self.value(a);
        let mut v = Array2::zeros((coords.len(), 1));
        for (out, &(i, j)) in coords.iter().enumerate() {
            v[[out, 0]] = src[[i, j]];
        }
        let ng = self.needs(a);
        self.push(v, Op::GatherEntries(a, coords.to_vec()), ng)
    }

    pub fn tanh(&mut self, a: Tid) -> Tid {
        let v = self.value(a).mapv(f64::tanh);
        let ng = self.needs(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Tid) -> Tid {
        let v = self.value(a).mapv(f64::exp);
        let ng = self.needs(a);
        self.push(v, Op::Exp(a), ng)
    }

    pub fn ln(&mut self, a: Tid) -> Tid {
        let v = self.value(a).mapv(f64::ln);
        let ng = self.needs(a);
        self.push(v, Op::Ln(a), ng)
    }

    pub fn pow_const(&mut self, a: Tid, k: f64) -> Tid {
        let v = self.value(a).mapv(|x| x.powf(k));
        let ng = self.needs(a);
        self.push(v, Op::PowConst(a, k), ng)
    }

    pub fn rsub_const(&mut self, c: f64, a: Tid) -> Tid {
        let v = self.value(a).mapv(|x| c - x);
        let ng = self.needs(a);
        self.push(v, Op::RSubConst(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Tid) -> Tid {
        let v = softmax_rows_value(self.value(a));
        let ng = self.needs(a);
        self.push(v, Op::SoftmaxRows(a), ng)
    }

    pub fn log_softmax_rows(&mut self, a: Tid) -> Tid {
        let x = self.value(a);
        let mut v = x.clone();
        for mut row in v.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            row.mapv_inplace(|x| x - lse);
        }
        let ng = self.needs(a);
        self.push(v, Op::LogSoftmaxRows(a), ng)
    }

    pub fn rms_norm_rows(&mut self, x: Tid, gain: Tid) -> Tid {
        let xv = self.value(x);
        let g = self.value(gain);
        assert_eq!(g.nrows(), 1, "rms gain must be 1×d");
        assert_eq!(g.ncols(), xv.ncols(), "rms gain width mismatch");
        let mut v = xv.clone();
        for mut row in v.rows_mut() {
            let rms = rms_of(&row.to_owned());
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = *cell / rms * g[[0, j]];
            }
        }
        let ng = self.needs(x) || self.needs(gain);
        self.push(v, Op::RmsNormRows(x, gain), ng)
    }

    pub fn sum_all(&mut self, a: Tid) -> Tid {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.needs(a);
        self.push(v, Op::SumAll(a), ng)
    }

    /// Push gradients from a 1×1 node back to every leaf that needs them.
    pub fn backward(&mut self, loss: Tid) {
        assert_eq!(self.nodes[loss.0].value.dim(), (1, 1), "loss must be scalar");
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Array2::from_elem((1, 1), 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &g);
            self.nodes[i].grad = Some(g);
        }
    }

    fn accumulate(&mut self, t: Tid, delta: Array2<f64>) {
        if !self.needs(t) {
            return;
        }
        match &mut self.nodes[t.0].grad {
            Some(g) => *g += &delta,
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, i: usize, op: &Op, g: &Array2<f64>) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.dot(&self.value(*b).t());
                let db = self.value(*a).t().dot(g);
                self.accumulate(*a, da);
                self.accumulate(*b, db);
            }
            Op::Transpose(a) => self.accumulate(*a, g.t().to_owned()),
            Op::Add(a, b) => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.clone());
            }
            Op::Mul(a, b) => {
                let da = g * self.value(*b);
                let db = g * self.value(*a);
                self.accumulate(*a, da);
                self.accumulate(*b, db);
            }
            Op::Scale(a, c) => self.accumulate(*a, g * *c),
            Op::BroadcastRows(a) => {
                let summed = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                self.accumulate(*a, summed);
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts.clone() {
                    let rows = self.value(p).nrows();
                    let slice = g.slice(s![start..start + rows, ..]).to_owned();
                    self.accumulate(p, slice);
                    start += rows;
                }
            }
            Op::SliceRows(a, start, end) => {
                let mut da = Array2::zeros(self.value(*a).dim());
                da.slice_mut(s![*start..*end, ..]).assign(g);
                self.accumulate(*a, da);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts.clone() {
                    let cols = self.value(p).ncols();
                    let slice = g.slice(s![.., start..start + cols]).to_owned();
                    self.accumulate(p, slice);
                    start += cols;
                }
            }
            Op::SliceCols(a, start, end) => {
                let mut da = Array2::zeros(self.value(*a).dim());
                da.slice_mut(s![.., *start..*end]).assign(g);
                self.accumulate(*a, da);
            }
            Op::GatherRows(a, idx) => {
                let mut da = Array2::zeros(self.value(*a).dim());
                for (out, &src) in idx.iter().enumerate() {
                    let mut row = da.row_mut(src);
                    row += &g.row(out);
                }
                self.accumulate(*a, da);
            }
            Op::GatherEntries(a, coords) => {
                let mut da = Array2::zeros(self.value(*a).dim());
                for (out, &(r, c)) in coords.iter().enumerate() {
                    da[[r, c]] += g[[out, 0]];
                }
                self.accumulate(*a, da);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                let da = g * &y.mapv(|y| 1.0 - y * y);
                self.accumulate(*a, da);
            }
            Op::Exp(a) => {
                let da = g * &self.nodes[i].value;
                self.accumulate(*a, da);
            }
            Op::Ln(a) => {
                let da = g / self.value(*a);
                self.accumulate(*a, da);
            }
            Op::PowConst(a, k) => {
                let da = if *k == 0.0 {
                    Array2::zeros(self.value(*a).dim())
                } else {
                    let k = *k;
                    g * &self.value(*a).mapv(|x| k * x.powf(k - 1.0))
                };
                self.accumulate(*a, da);
            }
            Op::RSubConst(a) => self.accumulate(*a, g * -1.0),
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut da = Array2::zeros(y.dim());
                for r in 0..y.nrows() {
                    let dot: f64 = (0..y.ncols()).map(|c| g[[r, c]] * y[[r, c]]).sum();
                    for c in 0..y.ncols() {
                        da[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                    }
                }
                self.accumulate(*a, da);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut da = Array2::zeros(y.dim());
                for r in 0..y.nrows() {
                    let gsum: f64 = (0..y.ncols()).map(|c| g[[r, c]]).sum();
                    for c in 0..y.ncols() {
                        da[[r, c]] = g[[r, c]] - y[[r, c]].exp() * gsum;
                    }
                }
                self.accumulate(*a, da);
            }
            Op::RmsNormRows(x, gain) => {
                let xv = self.value(*x).clone();
                let gv = self.value(*gain).clone();
                let d = xv.ncols() as f64;
                let mut dx = Array2::zeros(xv.dim());
                let mut dg = Array2::zeros(gv.dim());
                for r in 0..xv.nrows() {
                    let row = xv.row(r).to_owned();
                    let rms = rms_of(&row);
                    // y_j = g_j·x_j/r with r = sqrt(mean x² + ε):
                    // ∂L/∂x_j = g_j·δ_j/r − x_j·Σ_k(g_k·δ_k·x_k)/(d·r³)
                    let mut weighted: f64 = 0.0;
                    for k in 0..row.len() {
                        weighted += gv[[0, k]] * g[[r, k]] * row[k];
                    }
                    for j in 0..row.len() {
                        dx[[r, j]] =
                            gv[[0, j]] * g[[r, j]] / rms - row[j] * weighted / (d * rms * rms * rms);
                        dg[[0, j]] += g[[r, j]] * row[j] / rms;
                    }
                }
                self.accumulate(*x, dx);
                self.accumulate(*gain, dg);
            }
            Op::SumAll(a) => {
                let da = Array2::from_elem(self.value(*a).dim(), g[[0, 0]]);
                self.accumulate(*a, da);
            }
        }
    }
}

fn rms_of(row: &ndarray::Array1<f64>) -> f64 {
    let d = row.len() as f64;
    (row.iter().map(|x| x * x).sum::<f64>() / d + RMS_EPS).sqrt()
}

/// Plain row-wise softmax over values (no tape), used by argmax decode.
pub fn softmax_rows_value(x: &Array2<f64>) -> Array2<f64> {
    let mut v = x.clone();
    for mut row in v.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum: f64 = row.iter().sum();
        row.mapv_inplace(|x| x / sum);
    }
    v
}
