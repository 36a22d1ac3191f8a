//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Graph`] records every operation as it is evaluated; [`Graph::backward`]
//! then walks the tape in reverse and accumulates adjoints. Nodes are
//! addressed by the copyable handle [`Var`]. One graph is built per loss
//! evaluation and dropped afterwards.

use super::activation::Activation;
use super::tensor::{matmul, matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `m x n` plus a `1 x n` row broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// `m x n` times an `m x 1` column broadcast over columns.
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Act(Var, Activation),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Sqrt(Var),
    /// Sum of all entries, `1 x 1`.
    Sum(Var),
    /// Per-row sum, `m x 1`.
    SumRows(Var),
    Concat(Var, Var),
    SliceCols(Var, usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros if `v` did not
    /// influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let shape = &self.shapes[v.0];
                Tensor::new(shape.clone(), vec![0.0; shape.iter().product()])
                    .expect("shape recorded from a valid tensor")
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let shape = &self.shapes[v.0];
                Tensor::new(shape.clone(), vec![0.0; shape.iter().product()])
                    .expect("shape recorded from a valid tensor")
            }
        }
    }
}

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Insert a leaf (parameter, input or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k, k2, n) = (va.rows(), va.cols(), vb.rows(), vb.cols());
        if k != k2 {
            return Err(Error::dim(format!("matmul: {m}x{k} by {k2}x{n}")));
        }
        let out = Tensor::matrix(m, n, matmul(va.data(), vb.data(), m, k, n))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        let n = va.cols();
        if vr.rows() != 1 || vr.cols() != n {
            return Err(Error::dim(format!(
                "add_row: row {:?} does not broadcast over {:?}",
                vr.shape(),
                va.shape()
            )));
        }
        let r = vr.data();
        let mut out = va.clone();
        for chunk in out.data_mut().chunks_mut(n) {
            for (o, b) in chunk.iter_mut().zip(r) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    fn zip(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb, name)?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (va, vc) = (self.value(a), self.value(col));
        if vc.cols() != 1 || vc.rows() != va.rows() {
            return Err(Error::dim(format!(
                "mul_col: column {:?} does not broadcast over {:?}",
                vc.shape(),
                va.shape()
            )));
        }
        let n = va.cols();
        let mut out = va.clone();
        for (chunk, &s) in out.data_mut().chunks_mut(n.max(1)).zip(vc.data()) {
            for o in chunk.iter_mut() {
                *o *= s;
            }
        }
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        self.push(out, op)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return a;
        }
        self.unary(a, |x| act.apply(x), Op::Act(a, act))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let n = va.cols().max(1);
        let sums = va.data().chunks(n).map(|c| c.iter().sum()).collect();
        self.push(Tensor::column_vector(sums), Op::SumRows(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = Tensor::concat_cols(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Concat(a, b)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let va = self.value(a);
        if start > end || end > va.cols() {
            return Err(Error::dim(format!(
                "slice_cols {start}..{end} out of range for {} columns",
                va.cols()
            )));
        }
        let out = va.slice_cols(start, end);
        Ok(self.push(out, Op::SliceCols(a, start, end)))
    }

    /// Reverse sweep from a scalar `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    let ga = slot(&mut grads, a, va);
                    matmul_bt_acc(g.data(), vb.data(), ga.data_mut(), m, n, k);
                    let gb = slot(&mut grads, b, vb);
                    matmul_at_acc(va.data(), g.data(), gb.data_mut(), m, k, n);
                }
                Op::AddRow(a, r) => {
                    let n = g.cols().max(1);
                    accumulate(&mut grads, a, self.value(a), g.data().iter().copied());
                    let gr = slot(&mut grads, r, self.value(r));
                    for chunk in g.data().chunks(n) {
                        for (o, v) in gr.data_mut().iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, self.value(a), g.data().iter().copied());
                    accumulate(&mut grads, b, self.value(b), g.data().iter().copied());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, a, self.value(a), g.data().iter().copied());
                    accumulate(&mut grads, b, self.value(b), g.data().iter().map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    accumulate(&mut grads, a, va, g.data().iter().zip(vb.data()).map(|(g, y)| g * y));
                    accumulate(&mut grads, b, vb, g.data().iter().zip(va.data()).map(|(g, x)| g * x));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    accumulate(&mut grads, a, va, g.data().iter().zip(vb.data()).map(|(g, y)| g / y));
                    accumulate(
                        &mut grads,
                        b,
                        vb,
                        g.data()
                            .iter()
                            .zip(va.data().iter().zip(vb.data()))
                            .map(|(g, (x, y))| -g * x / (y * y)),
                    );
                }
                Op::MulCol(a, c) => {
                    let (va, vc) = (self.value(a), self.value(c));
                    let n = va.cols().max(1);
                    let scaled = g
                        .data()
                        .chunks(n)
                        .zip(vc.data())
                        .flat_map(|(chunk, &s)| chunk.iter().map(move |v| v * s));
                    accumulate(&mut grads, a, va, scaled);
                    let per_row = g
                        .data()
                        .chunks(n)
                        .zip(va.data().chunks(n))
                        .map(|(gc, ac)| gc.iter().zip(ac).map(|(x, y)| x * y).sum::<f64>());
                    accumulate(&mut grads, c, vc, per_row);
                }
                Op::Scale(a, s) => {
                    accumulate(&mut grads, a, self.value(a), g.data().iter().map(|v| v * s));
                }
                Op::AddScalar(a) => {
                    accumulate(&mut grads, a, self.value(a), g.data().iter().copied());
                }
                Op::Act(a, act) => {
                    let va = self.value(a);
                    let d = g
                        .data()
                        .iter()
                        .zip(va.data().iter().zip(node.value.data()))
                        .map(|(g, (&x, &y))| g * act.derivative(x, y));
                    accumulate(&mut grads, a, va, d);
                }
                Op::Exp(a) => {
                    let d = g.data().iter().zip(node.value.data()).map(|(g, y)| g * y);
                    accumulate(&mut grads, a, self.value(a), d);
                }
                Op::Ln(a) => {
                    let va = self.value(a);
                    let d = g.data().iter().zip(va.data()).map(|(g, x)| g / x);
                    accumulate(&mut grads, a, va, d);
                }
                Op::Square(a) => {
                    let va = self.value(a);
                    let d = g.data().iter().zip(va.data()).map(|(g, x)| 2.0 * g * x);
                    accumulate(&mut grads, a, va, d);
                }
                Op::Sqrt(a) => {
                    let d = g.data().iter().zip(node.value.data()).map(|(g, y)| 0.5 * g / y);
                    accumulate(&mut grads, a, self.value(a), d);
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    let va = self.value(a);
                    accumulate(&mut grads, a, va, std::iter::repeat(s).take(va.len()));
                }
                Op::SumRows(a) => {
                    let va = self.value(a);
                    let n = va.cols();
                    let d = g.data().iter().flat_map(|&v| std::iter::repeat(v).take(n));
                    accumulate(&mut grads, a, va, d);
                }
                Op::Concat(a, b) => {
                    let (ca, cb) = (self.value(a).cols(), self.value(b).cols());
                    let w = ca + cb;
                    let left = g.data().chunks(w.max(1)).flat_map(|c| c[..ca].iter().copied());
                    accumulate(&mut grads, a, self.value(a), left);
                    let right = g.data().chunks(w.max(1)).flat_map(|c| c[ca..].iter().copied());
                    accumulate(&mut grads, b, self.value(b), right);
                }
                Op::SliceCols(a, start, end) => {
                    let va = self.value(a);
                    let (n, w) = (va.cols(), end - start);
                    let ga = slot(&mut grads, a, va);
                    for (r, chunk) in g.data().chunks(w.max(1)).enumerate().take(va.rows()) {
                        for (j, v) in chunk.iter().enumerate() {
                            ga.data_mut()[r * n + start + j] += v;
                        }
                    }
                }
            }
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, like: &Tensor) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| {
        Tensor::new(like.shape().to_vec(), vec![0.0; like.len()]).expect("shape from valid tensor")
    })
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, like: &Tensor, incoming: impl Iterator<Item = f64>) {
    match &mut grads[v.0] {
        Some(t) => {
            for (o, x) in t.data_mut().iter_mut().zip(incoming) {
                *o += x;
            }
        }
        empty @ None => {
            let data: Vec<f64> = incoming.collect();
            *empty = Some(Tensor::new(like.shape().to_vec(), data).expect("gradient matches value shape"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_gradient_by_hand() {
        let mut g = Graph::new();
        let a = g.leaf(m(1, 2, &[1.0, 2.0]));
        let b = g.leaf(m(2, 1, &[3.0, 4.0]));
        let c = g.matmul(a, b).unwrap();
        let loss = g.sum(c);
        assert_eq!(g.scalar(loss), 11.0);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(a).data(), &[3.0, 4.0]);
        assert_eq!(grads.wrt(b).data(), &[1.0, 2.0]);
    }

    #[test]
    fn shared_node_accumulates() {
        // f(x) = x*x + x  =>  f'(x) = 2x + 1
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let sq = g.mul(x, x).unwrap();
        let y = g.add(sq, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(x).data(), &[7.0]);
    }

    #[test]
    fn unused_leaf_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.0));
        let unused = g.leaf(m(2, 2, &[1.0; 4]));
        let y = g.square(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(unused).data(), &[0.0; 4]);
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.leaf(m(2, 3, &[0.0; 6]));
        let b = g.leaf(m(2, 3, &[0.0; 6]));
        assert!(matches!(g.matmul(a, b), Err(Error::Dimension(_))));
        let c = g.leaf(m(3, 2, &[0.0; 6]));
        assert!(g.add(a, c).is_err());
        assert!(g.slice_cols(a, 2, 4).is_err());
        assert!(g.backward(a).is_err());
    }
}
