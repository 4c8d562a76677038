//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records operations as they execute (define-by-run); calling
//! [`Tape::backward`] on a scalar output accumulates gradients for every
//! recorded node. The op set is exactly what the encoder and loss need:
//! dense/sparse products, elementwise nonlinearities, column concatenation,
//! row gathers, segment softmax/aggregation, dropout, and rowwise L1
//! distance.

use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use std::rc::Rc;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Compressed sparse rows; held outside the tape as a constant operand.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) entries; duplicates are summed.
    pub fn from_entries(n_rows: usize, n_cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            assert!(r < n_rows && c < n_cols, "csr entry out of bounds");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx: merged.iter().map(|&(_, c, _)| c).collect(),
            values: merged.iter().map(|&(_, _, v)| v).collect(),
        }
    }

    /// self (r x c) times dense (c x d).
    pub fn mul_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.n_cols, x.nrows(), "spmm shape mismatch");
        let d = x.ncols();
        let mut out = Array2::zeros((self.n_rows, d));
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let v = self.values[k];
                for c in 0..d {
                    out[[i, c]] += v * x[[j, c]];
                }
            }
        }
        out
    }

    /// self^T (c x r) times dense (r x d).
    pub fn t_mul_dense(&self, g: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.n_rows, g.nrows(), "spmm^T shape mismatch");
        let d = g.ncols();
        let mut out = Array2::zeros((self.n_cols, d));
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let v = self.values[k];
                for c in 0..d {
                    out[[j, c]] += v * g[[i, c]];
                }
            }
        }
        out
    }
}

enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    SpMM(Rc<CsrMatrix>, Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Rc<Vec<usize>>),
    SegmentSoftmax(Var, Rc<Vec<usize>>, usize),
    SegmentWeightedSum(Var, Var, Rc<Vec<usize>>),
    Dropout(Var, Array2<f64>),
    SumAll(Var),
    PairL1(Var, Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of a var, defaulting to zeros of the given shape when the
    /// var did not influence the output.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| Array2::zeros(shape))
    }
}

/// Operation recorder.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::Matmul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `a` (n x d) plus a (1 x d) row broadcast over all rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "bias must be a single row");
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    /// `k * a + c` elementwise.
    pub fn affine(&mut self, a: Var, k: f64, c: f64) -> Var {
        let v = self.value(a).mapv(|x| k * x + c);
        self.push(v, Op::Affine(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    /// Constant sparse matrix times tracked dense matrix.
    pub fn spmm(&mut self, m: Rc<CsrMatrix>, x: Var) -> Var {
        let v = m.mul_dense(self.value(x));
        self.push(v, Op::SpMM(m, x))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Rc<Vec<usize>>) -> Var {
        let src = self.value(a);
        let mut v = Array2::zeros((idx.len(), src.ncols()));
        for (out_i, &src_i) in idx.iter().enumerate() {
            v.row_mut(out_i).assign(&src.row(src_i));
        }
        self.push(v, Op::GatherRows(a, idx))
    }

    /// Softmax over the elements of each segment. `logits` is (n x 1),
    /// `segments[e]` in `0..n_segments` names the group of element `e`.
    pub fn segment_softmax(&mut self, logits: Var, segments: Rc<Vec<usize>>, n_segments: usize) -> Var {
        let l = self.value(logits);
        assert_eq!(l.ncols(), 1, "segment_softmax expects a column vector");
        assert_eq!(l.nrows(), segments.len());
        let mut max = vec![f64::NEG_INFINITY; n_segments];
        for (e, &s) in segments.iter().enumerate() {
            max[s] = max[s].max(l[[e, 0]]);
        }
        let mut denom = vec![0.0f64; n_segments];
        let mut v = Array2::zeros((l.nrows(), 1));
        for (e, &s) in segments.iter().enumerate() {
            let x = (l[[e, 0]] - max[s]).exp();
            v[[e, 0]] = x;
            denom[s] += x;
        }
        for (e, &s) in segments.iter().enumerate() {
            v[[e, 0]] /= denom[s];
        }
        self.push(v, Op::SegmentSoftmax(logits, segments, n_segments))
    }

    /// out[s] = sum over elements e with segments[e] == s of w[e] * values[e].
    /// Segments without elements yield zero rows.
    pub fn segment_weighted_sum(
        &mut self,
        weights: Var,
        values: Var,
        segments: Rc<Vec<usize>>,
        n_segments: usize,
    ) -> Var {
        let w = self.value(weights);
        let x = self.value(values);
        assert_eq!(w.ncols(), 1);
        assert_eq!(w.nrows(), x.nrows());
        assert_eq!(w.nrows(), segments.len());
        let mut out = Array2::zeros((n_segments, x.ncols()));
        for (e, &s) in segments.iter().enumerate() {
            let we = w[[e, 0]];
            for c in 0..x.ncols() {
                out[[s, c]] += we * x[[e, c]];
            }
        }
        self.push(out, Op::SegmentWeightedSum(weights, values, segments))
    }

    /// Inverted dropout: entries are zeroed with probability `rate` and the
    /// rest scaled by 1/(1-rate). The mask is drawn from `rng` and replayed
    /// in backward.
    pub fn dropout(&mut self, a: Var, rate: f64, rng: &mut impl Rng) -> Var {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        let shape = self.value(a).dim();
        let scale = 1.0 / (1.0 - rate);
        let mask = Array2::from_shape_fn(shape, |_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                scale
            }
        });
        let v = self.value(a) * &mask;
        self.push(v, Op::Dropout(a, mask))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    /// Rowwise Manhattan distance between two (n x d) matrices -> (n x 1).
    pub fn pair_l1(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.dim(), y.dim(), "pair_l1 shape mismatch");
        let mut v = Array2::zeros((x.nrows(), 1));
        for i in 0..x.nrows() {
            v[[i, 0]] = x
                .row(i)
                .iter()
                .zip(y.row(i).iter())
                .map(|(p, q)| (p - q).abs())
                .sum();
        }
        self.push(v, Op::PairL1(a, b))
    }

    /// Accumulates gradients of the scalar `root` (a 1x1 node) with respect
    /// to every node on the tape.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).dim(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones((1, 1)));

        for i in (0..=root.0).rev() {
            let g = match &grads[i] {
                Some(g) => g.clone(),
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    let da = &g * self.value(*b);
                    let db = &g * self.value(*a);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut grads, *a, g.clone());
                    let drow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, drow);
                }
                Op::Affine(a, k) => {
                    accumulate(&mut grads, *a, g.mapv(|x| k * x));
                }
                Op::Sigmoid(a) => {
                    let s = &self.nodes[i].value;
                    accumulate(&mut grads, *a, &g * &s.mapv(|v| v * (1.0 - v)));
                }
                Op::Relu(a) => {
                    let mask = self.value(*a).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *a, &g * &mask);
                }
                Op::Tanh(a) => {
                    let t = &self.nodes[i].value;
                    accumulate(&mut grads, *a, &g * &t.mapv(|v| 1.0 - v * v));
                }
                Op::LeakyRelu(a, slope) => {
                    let slope = *slope;
                    let mask = self.value(*a).mapv(|v| if v > 0.0 { 1.0 } else { slope });
                    accumulate(&mut grads, *a, &g * &mask);
                }
                Op::SpMM(m, x) => {
                    accumulate(&mut grads, *x, m.t_mul_dense(&g));
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        let slice = g.slice(ndarray::s![.., offset..offset + w]).to_owned();
                        accumulate(&mut grads, p, slice);
                        offset += w;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let mut da = Array2::zeros(self.value(*a).dim());
                    for (out_i, &src_i) in idx.iter().enumerate() {
                        let mut row = da.row_mut(src_i);
                        row += &g.row(out_i);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SegmentSoftmax(logits, segs, n_segments) => {
                    let alpha = &self.nodes[i].value;
                    let mut seg_dot = vec![0.0f64; *n_segments];
                    for (e, &s) in segs.iter().enumerate() {
                        seg_dot[s] += g[[e, 0]] * alpha[[e, 0]];
                    }
                    let mut dl = Array2::zeros(alpha.dim());
                    for (e, &s) in segs.iter().enumerate() {
                        dl[[e, 0]] = alpha[[e, 0]] * (g[[e, 0]] - seg_dot[s]);
                    }
                    accumulate(&mut grads, *logits, dl);
                }
                Op::SegmentWeightedSum(weights, values, segs) => {
                    let w = self.value(*weights);
                    let x = self.value(*values);
                    let mut dw = Array2::zeros(w.dim());
                    let mut dx = Array2::zeros(x.dim());
                    for (e, &s) in segs.iter().enumerate() {
                        let grow = g.row(s);
                        dw[[e, 0]] = grow.dot(&x.row(e));
                        let mut dxe = dx.row_mut(e);
                        dxe.assign(&grow.mapv(|v| v * w[[e, 0]]));
                    }
                    accumulate(&mut grads, *weights, dw);
                    accumulate(&mut grads, *values, dx);
                }
                Op::Dropout(a, mask) => {
                    accumulate(&mut grads, *a, &g * mask);
                }
                Op::SumAll(a) => {
                    let da = Array2::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, da);
                }
                Op::PairL1(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let mut da = Array2::zeros(x.dim());
                    for r in 0..x.nrows() {
                        let gr = g[[r, 0]];
                        for c in 0..x.ncols() {
                            let diff = x[[r, c]] - y[[r, c]];
                            // subgradient 0 at the kink
                            da[[r, c]] = gr * if diff > 0.0 { 1.0 } else if diff < 0.0 { -1.0 } else { 0.0 };
                        }
                    }
                    let db = -&da;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, delta: Array2<f64>) {
    match &mut grads[v.0] {
        Some(g) => *g += &delta,
        slot @ None => *slot = Some(delta),
    }
}
