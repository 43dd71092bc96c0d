//! Reverse-mode differentiation over the dense primitives the training
//! loss needs. Nodes are appended in evaluation order, so every node's
//! inputs precede it and a single reverse sweep accumulates gradients.

use crate::matrix::Matrix;
use crate::numerics::logsumexp_iter;

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `x·w + b`, with `b` a broadcast row.
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    /// Per-row standardization; the cached value is the normalized output.
    LayerNorm {
        x: Var,
        inv_std: Vec<f64>,
    },
    MulRow {
        x: Var,
        row: Var,
    },
    AddRow {
        x: Var,
        row: Var,
    },
    AddCol {
        x: Var,
        col: Var,
    },
    Relu(Var),
    Clamp {
        x: Var,
        lo: f64,
        hi: f64,
    },
    Scale(Var, f64),
    Add(Var, Var),
    Sub(Var, Var),
    Exp(Var),
    Ln(Var),
    Abs(Var),
    LogSumExpCols(Var),
    /// `x − logsumexp` over each row.
    NormalizeRowsLog(Var),
    /// `x − logsumexp` over each column.
    NormalizeColsLog(Var),
    Sum(Var),
    WeightedSum {
        x: Var,
        weights: Matrix,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Affine { .. } => "affine",
            Op::LayerNorm { .. } => "layer_norm",
            Op::MulRow { .. } => "mul_row",
            Op::AddRow { .. } => "add_row",
            Op::AddCol { .. } => "add_col",
            Op::Relu(_) => "relu",
            Op::Clamp { .. } => "clamp",
            Op::Scale(..) => "scale",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Exp(_) => "exp",
            Op::Ln(_) => "ln",
            Op::Abs(_) => "abs",
            Op::LogSumExpCols(_) => "logsumexp_cols",
            Op::NormalizeRowsLog(_) => "normalize_rows_log",
            Op::NormalizeColsLog(_) => "normalize_cols_log",
            Op::Sum(_) => "sum",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }
}

struct Node {
    op: Op,
    value: Matrix,
}

/// A gradient entry turned out NaN or infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct NonFiniteGradient {
    pub node: usize,
    pub op: &'static str,
}

impl std::fmt::Display for NonFiniteGradient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "non-finite gradient at node {} ({})", self.node, self.op)
    }
}

/// Recorded computation with cached forward values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to the tape's leaves.
/// Intermediate gradients are released during the sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zero if the root does not depend on it.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn add_into(slot: &mut Option<Matrix>, delta: Matrix) {
    match slot {
        Some(g) => g
            .as_mut_slice()
            .iter_mut()
            .zip(delta.as_slice())
            .for_each(|(a, b)| *a += b),
        None => *slot = Some(delta),
    }
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m[(0, 0)]
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Parameter or constant input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let mut out = self.value(x).matmul(self.value(w));
        let bias = self.value(b);
        assert_eq!(bias.shape(), (1, out.cols()), "affine bias shape");
        for i in 0..out.rows() {
            out.row_mut(i)
                .iter_mut()
                .zip(bias.as_slice())
                .for_each(|(o, b)| *o += b);
        }
        self.push(Op::Affine { x, w, b }, out)
    }

    pub fn layer_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / cols as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            out.row_mut(i)
                .iter_mut()
                .zip(row)
                .for_each(|(o, a)| *o = (a - mean) * r);
            inv_std.push(r);
        }
        self.push(Op::LayerNorm { x, inv_std }, out)
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let r = self.value(row).clone();
        let xv = self.value(x);
        assert_eq!(r.shape(), (1, xv.cols()), "mul_row shape");
        let out = Matrix::from_fn(xv.rows(), xv.cols(), |i, j| xv[(i, j)] * r[(0, j)]);
        self.push(Op::MulRow { x, row }, out)
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let r = self.value(row).clone();
        let xv = self.value(x);
        assert_eq!(r.shape(), (1, xv.cols()), "add_row shape");
        let out = Matrix::from_fn(xv.rows(), xv.cols(), |i, j| xv[(i, j)] + r[(0, j)]);
        self.push(Op::AddRow { x, row }, out)
    }

    pub fn add_col(&mut self, x: Var, col: Var) -> Var {
        let c = self.value(col).clone();
        let xv = self.value(x);
        assert_eq!(c.shape(), (xv.rows(), 1), "add_col shape");
        let out = Matrix::from_fn(xv.rows(), xv.cols(), |i, j| xv[(i, j)] + c[(i, 0)]);
        self.push(Op::AddCol { x, col }, out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|a| a.max(0.0));
        self.push(Op::Relu(x), out)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|a| a.clamp(lo, hi));
        self.push(Op::Clamp { x, lo, hi }, out)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|a| a * s);
        self.push(Op::Scale(x, s), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add shape");
        let out = Matrix::from_fn(av.rows(), av.cols(), |i, j| av[(i, j)] + bv[(i, j)]);
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "sub shape");
        let out = Matrix::from_fn(av.rows(), av.cols(), |i, j| av[(i, j)] - bv[(i, j)]);
        self.push(Op::Sub(a, b), out)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        self.push(Op::Exp(x), out)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::ln);
        self.push(Op::Ln(x), out)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::abs);
        self.push(Op::Abs(x), out)
    }

    /// Column-wise log-sum-exp, producing a `1 × cols` row.
    pub fn logsumexp_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let out = Matrix::from_fn(1, cols, |_, j| {
            logsumexp_iter((0..rows).map(|i| xv[(i, j)]))
        });
        self.push(Op::LogSumExpCols(x), out)
    }

    pub fn normalize_rows_log(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        crate::ot::normalize_rows_log(&mut out);
        self.push(Op::NormalizeRowsLog(x), out)
    }

    pub fn normalize_cols_log(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        crate::ot::normalize_cols_log(&mut out);
        self.push(Op::NormalizeColsLog(x), out)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Op::Sum(x), Matrix::filled(1, 1, s))
    }

    /// Inner product `⟨x, weights⟩` with a constant weight matrix.
    pub fn weighted_sum(&mut self, x: Var, weights: Matrix) -> Var {
        let s = self.value(x).dot(&weights);
        self.push(Op::WeightedSum { x, weights }, Matrix::filled(1, 1, s))
    }

    /// Reverse sweep from a `1 × 1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients, NonFiniteGradient> {
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward needs a scalar root"
        );
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=root.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !dy.all_finite() {
                return Err(NonFiniteGradient {
                    node: idx,
                    op: node.op.name(),
                });
            }
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(dy);
                continue;
            }
            let y = &node.value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    add_into(&mut grads[x.0], dy.matmul(&wv.transpose()));
                    add_into(&mut grads[w.0], xv.transpose().matmul(&dy));
                    add_into(&mut grads[b.0], Matrix::row_vector(&dy.col_sums()));
                }
                Op::LayerNorm { x, inv_std } => {
                    let (rows, cols) = y.shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    for i in 0..rows {
                        let (dyr, yr) = (dy.row(i), y.row(i));
                        let mean_dy = dyr.iter().sum::<f64>() / cols as f64;
                        let mean_dyy =
                            dyr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for (j, d) in dx.row_mut(i).iter_mut().enumerate() {
                            *d = inv_std[i] * (dyr[j] - mean_dy - yr[j] * mean_dyy);
                        }
                    }
                    add_into(&mut grads[x.0], dx);
                }
                Op::MulRow { x, row } => {
                    let xv = self.value(*x);
                    let rv = self.value(*row);
                    let dx = Matrix::from_fn(dy.rows(), dy.cols(), |i, j| dy[(i, j)] * rv[(0, j)]);
                    let mut dr = vec![0.0; dy.cols()];
                    for i in 0..dy.rows() {
                        for (j, d) in dr.iter_mut().enumerate() {
                            *d += dy[(i, j)] * xv[(i, j)];
                        }
                    }
                    add_into(&mut grads[x.0], dx);
                    add_into(&mut grads[row.0], Matrix::row_vector(&dr));
                }
                Op::AddRow { x, row } => {
                    add_into(&mut grads[row.0], Matrix::row_vector(&dy.col_sums()));
                    add_into(&mut grads[x.0], dy);
                }
                Op::AddCol { x, col } => {
                    add_into(&mut grads[col.0], Matrix::column(&dy.row_sums()));
                    add_into(&mut grads[x.0], dy);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let dx = Matrix::from_fn(dy.rows(), dy.cols(), |i, j| {
                        if xv[(i, j)] > 0.0 {
                            dy[(i, j)]
                        } else {
                            0.0
                        }
                    });
                    add_into(&mut grads[x.0], dx);
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = self.value(*x);
                    let dx = Matrix::from_fn(dy.rows(), dy.cols(), |i, j| {
                        let a = xv[(i, j)];
                        if a > *lo && a < *hi {
                            dy[(i, j)]
                        } else {
                            0.0
                        }
                    });
                    add_into(&mut grads[x.0], dx);
                }
                Op::Scale(x, s) => add_into(&mut grads[x.0], dy.map(|a| a * s)),
                Op::Add(a, b) => {
                    add_into(&mut grads[a.0], dy.clone());
                    add_into(&mut grads[b.0], dy);
                }
                Op::Sub(a, b) => {
                    add_into(&mut grads[b.0], dy.map(|v| -v));
                    add_into(&mut grads[a.0], dy);
                }
                Op::Exp(x) => {
                    let dx = Matrix::from_fn(dy.rows(), dy.cols(), |i, j| dy[(i, j)] * y[(i, j)]);
                    add_into(&mut grads[x.0], dx);
                }
                Op::Ln(x) => {
                    let xv = self.value(*x);
                    let dx = Matrix::from_fn(dy.rows(), dy.cols(), |i, j| dy[(i, j)] / xv[(i, j)]);
                    add_into(&mut grads[x.0], dx);
                }
                Op::Abs(x) => {
                    let xv = self.value(*x);
                    let dx = Matrix::from_fn(dy.rows(), dy.cols(), |i, j| {
                        let a = xv[(i, j)];
                        if a > 0.0 {
                            dy[(i, j)]
                        } else if a < 0.0 {
                            -dy[(i, j)]
                        } else {
                            0.0
                        }
                    });
                    add_into(&mut grads[x.0], dx);
                }
                Op::LogSumExpCols(x) => {
                    let xv = self.value(*x);
                    let dx = Matrix::from_fn(xv.rows(), xv.cols(), |i, j| {
                        dy[(0, j)] * (xv[(i, j)] - y[(0, j)]).exp()
                    });
                    add_into(&mut grads[x.0], dx);
                }
                Op::NormalizeRowsLog(x) => {
                    let row_tot = dy.row_sums();
                    let dx = Matrix::from_fn(dy.rows(), dy.cols(), |i, j| {
                        dy[(i, j)] - y[(i, j)].exp() * row_tot[i]
                    });
                    add_into(&mut grads[x.0], dx);
                }
                Op::NormalizeColsLog(x) => {
                    let col_tot = dy.col_sums();
                    let dx = Matrix::from_fn(dy.rows(), dy.cols(), |i, j| {
                        dy[(i, j)] - y[(i, j)].exp() * col_tot[j]
                    });
                    add_into(&mut grads[x.0], dx);
                }
                Op::Sum(x) => {
                    let (r, c) = self.value(*x).shape();
                    add_into(&mut grads[x.0], Matrix::filled(r, c, dy[(0, 0)]));
                }
                Op::WeightedSum { x, weights } => {
                    add_into(&mut grads[x.0], weights.map(|w| w * dy[(0, 0)]));
                }
            }
        }

        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            grads,
        })
    }
}
