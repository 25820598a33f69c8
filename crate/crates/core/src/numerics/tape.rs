//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Nodes hold matrix values (column vectors are n x 1, scalars 1 x 1) and are
//! recorded in topological order as they are built, so the backward pass is a
//! single reverse sweep that visits each node exactly once. Two composite
//! primitives cover the Bayesian linear-regression evidence: the log
//! determinant of an SPD matrix and the quadratic form `h^T A^{-1} h`; both
//! cache their Cholesky solve from the forward pass.

use crate::error::{Error, Result};
use crate::numerics::{cholesky, CholeskyFactor, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Broadcast a 1 x k row over every row of an n x k matrix.
    AddRow(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Log(NodeId),
    Square(NodeId),
    ReduceSum(NodeId),
    /// Append a constant column of ones: n x k -> n x (k+1).
    AppendOnesCol(NodeId),
    LogDetSpd {
        a: NodeId,
        factor: CholeskyFactor,
    },
    /// `h^T A^{-1} h` for SPD `A` and column vector `h`.
    QuadFormSpdInv {
        a: NodeId,
        h: NodeId,
        solved: Vec<f64>,
    },
}

pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Matrix>,
    params: Vec<NodeId>,
}

/// Adjoints produced by a backward pass, indexed by node.
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the output with respect to a node; zero matrix if the node
    /// does not influence the output.
    pub fn wrt(&self, tape: &Tape, id: NodeId) -> Matrix {
        match &self.adjoints[id.0] {
            Some(m) => m.clone(),
            None => {
                let (r, c) = tape.values[id.0].shape();
                Matrix::zeros(r, c)
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            values: Vec::new(),
            params: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        let id = NodeId(self.ops.len());
        self.ops.push(op);
        self.values.push(value);
        id
    }

    pub fn constant(&mut self, m: Matrix) -> NodeId {
        self.push(Op::Const, m)
    }

    pub fn param(&mut self, m: Matrix) -> NodeId {
        let id = self.push(Op::Param, m);
        self.params.push(id);
        id
    }

    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.values[a.0].add(&self.values[b.0])?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.values[a.0].sub(&self.values[b.0])?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.values[a.0].hadamard(&self.values[b.0])?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.values[a.0].scale(c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let m = &self.values[a.0];
        let r = &self.values[row.0];
        if r.rows() != 1 || r.cols() != m.cols() {
            return Err(Error::DimensionMismatch {
                expected: m.cols(),
                got: r.cols(),
            });
        }
        let mut data = Vec::with_capacity(m.rows() * m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                data.push(m.get(i, j) + r.get(0, j));
            }
        }
        let v = Matrix::from_raw(m.rows(), m.cols(), data);
        Ok(self.push(Op::AddRow(a, row), v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.values[a.0].matmul(&self.values[b.0])?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if self.values[a.0].data().iter().any(|&x| x <= 0.0) {
            return Err(Error::NonFinite("log of non-positive entry"));
        }
        let v = self.values[a.0].map(f64::ln);
        Ok(self.push(Op::Log(a), v))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].map(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn reduce_sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::from_raw(1, 1, vec![self.values[a.0].sum()]);
        self.push(Op::ReduceSum(a), v)
    }

    pub fn append_ones_col(&mut self, a: NodeId) -> NodeId {
        let m = &self.values[a.0];
        let (n, k) = m.shape();
        let mut data = Vec::with_capacity(n * (k + 1));
        for i in 0..n {
            data.extend_from_slice(m.row(i));
            data.push(1.0);
        }
        let v = Matrix::from_raw(n, k + 1, data);
        self.push(Op::AppendOnesCol(a), v)
    }

    pub fn log_det_spd(&mut self, a: NodeId) -> Result<NodeId> {
        let factor = cholesky(&self.values[a.0])?;
        let v = Matrix::from_raw(1, 1, vec![factor.log_det()]);
        Ok(self.push(Op::LogDetSpd { a, factor }, v))
    }

    pub fn quad_form_spd_inv(&mut self, a: NodeId, h: NodeId) -> Result<NodeId> {
        let hv = &self.values[h.0];
        if hv.cols() != 1 || hv.rows() != self.values[a.0].rows() {
            return Err(Error::DimensionMismatch {
                expected: self.values[a.0].rows(),
                got: hv.rows(),
            });
        }
        let factor = cholesky(&self.values[a.0])?;
        let solved = factor.solve(hv.data());
        let q: f64 = hv.data().iter().zip(&solved).map(|(x, y)| x * y).sum();
        let v = Matrix::from_raw(1, 1, vec![q]);
        Ok(self.push(Op::QuadFormSpdInv { a, h, solved }, v))
    }

    /// Recompute every non-leaf value from its parents. Used to check that the
    /// recorded forward pass is reproducible.
    pub fn replay_forward(&self) -> Result<Vec<Matrix>> {
        let mut vals: Vec<Matrix> = Vec::with_capacity(self.ops.len());
        for (i, op) in self.ops.iter().enumerate() {
            let v = match op {
                Op::Const | Op::Param => self.values[i].clone(),
                Op::Add(a, b) => vals[a.0].add(&vals[b.0])?,
                Op::Sub(a, b) => vals[a.0].sub(&vals[b.0])?,
                Op::Mul(a, b) => vals[a.0].hadamard(&vals[b.0])?,
                Op::Scale(a, c) => vals[a.0].scale(*c),
                Op::AddRow(a, r) => {
                    let m = &vals[a.0];
                    let row = &vals[r.0];
                    let mut data = Vec::with_capacity(m.rows() * m.cols());
                    for i in 0..m.rows() {
                        for j in 0..m.cols() {
                            data.push(m.get(i, j) + row.get(0, j));
                        }
                    }
                    Matrix::from_raw(m.rows(), m.cols(), data)
                }
                Op::MatMul(a, b) => vals[a.0].matmul(&vals[b.0])?,
                Op::Transpose(a) => vals[a.0].transpose(),
                Op::Tanh(a) => vals[a.0].map(f64::tanh),
                Op::Relu(a) => vals[a.0].map(|x| x.max(0.0)),
                Op::Log(a) => vals[a.0].map(f64::ln),
                Op::Square(a) => vals[a.0].map(|x| x * x),
                Op::ReduceSum(a) => Matrix::from_raw(1, 1, vec![vals[a.0].sum()]),
                Op::AppendOnesCol(a) => {
                    let m = &vals[a.0];
                    let (n, k) = m.shape();
                    let mut data = Vec::with_capacity(n * (k + 1));
                    for i in 0..n {
                        data.extend_from_slice(m.row(i));
                        data.push(1.0);
                    }
                    Matrix::from_raw(n, k + 1, data)
                }
                Op::LogDetSpd { a, .. } => {
                    let factor = cholesky(&vals[a.0])?;
                    Matrix::from_raw(1, 1, vec![factor.log_det()])
                }
                Op::QuadFormSpdInv { a, h, .. } => {
                    let factor = cholesky(&vals[a.0])?;
                    let solved = factor.solve(vals[h.0].data());
                    let q: f64 = vals[h.0]
                        .data()
                        .iter()
                        .zip(&solved)
                        .map(|(x, y)| x * y)
                        .sum();
                    Matrix::from_raw(1, 1, vec![q])
                }
            };
            vals.push(v);
        }
        Ok(vals)
    }

    /// Reverse sweep from a scalar output. Visits nodes in reverse recording
    /// order, which is a reverse topological order by construction.
    pub fn gradient(&self, output: NodeId) -> Result<Gradients> {
        let out_val = &self.values[output.0];
        if out_val.shape() != (1, 1) {
            return Err(Error::NonScalarOutput {
                rows: out_val.rows(),
                cols: out_val.cols(),
            });
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; self.ops.len()];
        adj[output.0] = Some(Matrix::from_raw(1, 1, vec![1.0]));

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.ops[i] {
                Op::Const | Op::Param => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let da = g
                        .hadamard(&self.values[b.0])
                        .expect("shape fixed at record");
                    let db = g
                        .hadamard(&self.values[a.0])
                        .expect("shape fixed at record");
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.scale(*c)),
                Op::AddRow(a, r) => {
                    let mut row = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            row.set(0, j, row.get(0, j) + g.get(i, j));
                        }
                    }
                    accumulate(&mut adj, *a, g);
                    accumulate(&mut adj, *r, row);
                }
                Op::MatMul(a, b) => {
                    let da = g
                        .matmul(&self.values[b.0].transpose())
                        .expect("shape fixed at record");
                    let db = self.values[a.0]
                        .transpose()
                        .matmul(&g)
                        .expect("shape fixed at record");
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Transpose(a) => accumulate(&mut adj, *a, g.transpose()),
                Op::Tanh(a) => {
                    let y = &self.values[i];
                    let da = g.hadamard(&y.map(|v| 1.0 - v * v)).expect("same shape");
                    accumulate(&mut adj, *a, da);
                }
                Op::Relu(a) => {
                    let x = &self.values[a.0];
                    let da = g
                        .hadamard(&x.map(|v| if v > 0.0 { 1.0 } else { 0.0 }))
                        .expect("same shape");
                    accumulate(&mut adj, *a, da);
                }
                Op::Log(a) => {
                    let x = &self.values[a.0];
                    let da = g.hadamard(&x.map(|v| 1.0 / v)).expect("same shape");
                    accumulate(&mut adj, *a, da);
                }
                Op::Square(a) => {
                    let x = &self.values[a.0];
                    let da = g.hadamard(&x.scale(2.0)).expect("same shape");
                    accumulate(&mut adj, *a, da);
                }
                Op::ReduceSum(a) => {
                    let (r, c) = self.values[a.0].shape();
                    let s = g.get(0, 0);
                    accumulate(&mut adj, *a, Matrix::from_raw(r, c, vec![s; r * c]));
                }
                Op::AppendOnesCol(a) => {
                    let (n, k1) = self.values[i].shape();
                    let k = k1 - 1;
                    let mut data = Vec::with_capacity(n * k);
                    for r in 0..n {
                        data.extend_from_slice(&g.row(r)[..k]);
                    }
                    accumulate(&mut adj, *a, Matrix::from_raw(n, k, data));
                }
                Op::LogDetSpd { a, factor } => {
                    let da = factor.inverse().scale(g.get(0, 0));
                    accumulate(&mut adj, *a, da);
                }
                Op::QuadFormSpdInv { a, h, solved } => {
                    let s = g.get(0, 0);
                    let n = solved.len();
                    let mut da = Matrix::zeros(n, n);
                    da.add_outer(solved, -s);
                    let dh = Matrix::from_raw(n, 1, solved.iter().map(|u| 2.0 * s * u).collect());
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *h, dh);
                }
            }
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, delta: Matrix) {
    match &mut adj[id.0] {
        Some(m) => *m = m.add(&delta).expect("adjoint shape matches value shape"),
        slot @ None => *slot = Some(delta),
    }
}
