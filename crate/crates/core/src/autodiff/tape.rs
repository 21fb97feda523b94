//! Tape-based reverse-mode automatic differentiation over dense row-major
//! matrices.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each recorded node holds a
//! `rows × cols` block of `f64` values; batches are rows. [`Tape::backward`]
//! walks the tape in reverse insertion order, so gradient accumulation is
//! deterministic for a fixed graph.

use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Square(Var),
    Concat(Vec<Var>),
    Columns { x: Var, start: usize },
    Gather { x: Var, idx: Vec<usize> },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// Recording of one forward computation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    sizes: Vec<usize>,
}

impl Gradients {
    /// Gradient for `var`; `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `var`, materialising zeros for unreachable nodes.
    pub fn get_or_zero(&self, var: Var) -> Vec<f64> {
        match self.get(var) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.sizes[var.0]],
        }
    }
}

/// `out (rows × out_dim) = x (rows × in_dim) · wᵀ + b`, with `w` stored
/// row-major as `out_dim × in_dim`.
pub(crate) fn linear_kernel(
    x: &[f64],
    rows: usize,
    in_dim: usize,
    w: &[f64],
    b: &[f64],
    out_dim: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * out_dim);
    for _ in 0..rows {
        out.extend_from_slice(b);
    }
    if rows == 0 || in_dim == 0 || out_dim == 0 {
        return out;
    }
    unsafe {
        matrixmultiply::dgemm(
            rows,
            in_dim,
            out_dim,
            1.0,
            x.as_ptr(),
            in_dim as isize,
            1,
            w.as_ptr(),
            1,
            in_dim as isize,
            1.0,
            out.as_mut_ptr(),
            out_dim as isize,
            1,
        );
    }
    out
}

pub(crate) fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, size: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; size])
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

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant or parameter block.
    pub fn leaf(&mut self, values: Vec<f64>, rows: usize, cols: usize) -> Result<Var> {
        if rows * cols != values.len() {
            return Err(Error::Shape(format!(
                "leaf of {rows}x{cols} given {} values",
                values.len()
            )));
        }
        Ok(self.push(rows, cols, values, Op::Leaf))
    }

    /// Records a row vector.
    pub fn row(&mut self, values: &[f64]) -> Var {
        self.push(1, values.len(), values.to_vec(), Op::Leaf)
    }

    pub fn value(&self, var: Var) -> &[f64] {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        let n = &self.nodes[var.0];
        (n.rows, n.cols)
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value[0]
    }

    /// Affine map `x · wᵀ + b`; `w` is `out × in`, `b` is `1 × out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (rows, in_dim) = self.shape(x);
        let (out_dim, w_in) = self.shape(w);
        if w_in != in_dim || self.shape(b) != (1, out_dim) {
            return Err(Error::InputShape(format!(
                "linear: x is {rows}x{in_dim}, w is {out_dim}x{w_in}, b is {:?}",
                self.shape(b)
            )));
        }
        let value = linear_kernel(
            self.value(x),
            rows,
            in_dim,
            self.value(w),
            self.value(b),
            out_dim,
        );
        Ok(self.push(rows, out_dim, value, Op::Linear { x, w, b }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (rows, cols) = self.shape(x);
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        self.push(rows, cols, value, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.unary(x, |v| v * factor, Op::Scale(x, factor))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (rows, cols) = self.shape(x);
        let mut value = vec![0.0; rows * cols];
        if cols > 0 {
            for (src, dst) in self.value(x).chunks(cols).zip(value.chunks_mut(cols)) {
                softmax_row(src, dst);
            }
        }
        self.push(rows, cols, value, Op::Softmax(x))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let (rows, cols) = self.shape(x);
        let mut value = vec![0.0; rows * cols];
        if cols > 0 {
            for (src, dst) in self.value(x).chunks(cols).zip(value.chunks_mut(cols)) {
                log_softmax_row(src, dst);
            }
        }
        self.push(rows, cols, value, Op::LogSoftmax(x))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let shape = self.shape(a);
        if shape != self.shape(b) {
            return Err(Error::InputShape(format!(
                "elementwise op on {:?} and {:?}",
                shape,
                self.shape(b)
            )));
        }
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(shape.0, shape.1, value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Column-wise concatenation of blocks with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape("concat of zero blocks".into()));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::InputShape(format!(
                    "concat rows disagree: {r} vs {rows}"
                )));
            }
            cols += c;
        }
        let mut value = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.nodes[p.0].cols;
                value.extend_from_slice(&self.nodes[p.0].value[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(rows, cols, value, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..start + len` of `x`.
    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if start + len > cols {
            return Err(Error::InputShape(format!(
                "columns {start}..{} of a {cols}-column block",
                start + len
            )));
        }
        let src = self.value(x);
        let mut value = Vec::with_capacity(rows * len);
        for r in 0..rows {
            value.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        Ok(self.push(rows, len, value, Op::Columns { x, start }))
    }

    /// Picks column `idx[r]` from each row `r`, giving a `rows × 1` block.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if idx.len() != rows || idx.iter().any(|&i| i >= cols) {
            return Err(Error::InputShape(format!(
                "gather of {} indices from a {rows}x{cols} block",
                idx.len()
            )));
        }
        let src = self.value(x);
        let value = idx.iter().enumerate().map(|(r, &i)| src[r * cols + i]).collect();
        Ok(self.push(
            rows,
            1,
            value,
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        self.push(1, 1, vec![total], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let values = self.value(x);
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        self.push(1, 1, vec![mean], Op::Mean(x))
    }

    /// Mean squared error between two equally shaped blocks.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.sub(a, b)?;
        let sq = self.square(diff);
        Ok(self.mean(sq))
    }

    /// Reverse sweep from a `1 × 1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.rows * node.cols != 1 {
            return Err(Error::Shape(format!(
                "loss must be scalar, got {}x{}",
                node.rows, node.cols
            )));
        }
        if !node.value[0].is_finite() {
            return Err(Error::Numerical(format!("loss is {}", node.value[0])));
        }
        let sizes: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, w, b } => {
                    let (rows, out_dim) = (node.rows, node.cols);
                    let in_dim = self.nodes[x.0].cols;
                    let gx = accumulate(&mut grads[x.0], rows * in_dim);
                    if rows > 0 && in_dim > 0 && out_dim > 0 {
                        unsafe {
                            // dx += g · w
                            matrixmultiply::dgemm(
                                rows,
                                out_dim,
                                in_dim,
                                1.0,
                                g.as_ptr(),
                                out_dim as isize,
                                1,
                                self.nodes[w.0].value.as_ptr(),
                                in_dim as isize,
                                1,
                                1.0,
                                gx.as_mut_ptr(),
                                in_dim as isize,
                                1,
                            );
                        }
                    }
                    let gw = accumulate(&mut grads[w.0], out_dim * in_dim);
                    if rows > 0 && in_dim > 0 && out_dim > 0 {
                        unsafe {
                            // dw += gᵀ · x
                            matrixmultiply::dgemm(
                                out_dim,
                                rows,
                                in_dim,
                                1.0,
                                g.as_ptr(),
                                1,
                                out_dim as isize,
                                self.nodes[x.0].value.as_ptr(),
                                in_dim as isize,
                                1,
                                1.0,
                                gw.as_mut_ptr(),
                                in_dim as isize,
                                1,
                            );
                        }
                    }
                    let gb = accumulate(&mut grads[b.0], out_dim);
                    if out_dim > 0 {
                        for row in g.chunks(out_dim) {
                            for (acc, &v) in gb.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    let src = &self.nodes[x.0].value;
                    let gx = accumulate(&mut grads[x.0], src.len());
                    for ((acc, &gv), &xv) in gx.iter_mut().zip(&g).zip(src) {
                        if xv > 0.0 {
                            *acc += gv;
                        }
                    }
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let gx = accumulate(&mut grads[x.0], y.len());
                    for ((acc, &gv), &yv) in gx.iter_mut().zip(&g).zip(y) {
                        *acc += gv * (1.0 - yv * yv);
                    }
                }
                Op::Square(x) => {
                    let src = &self.nodes[x.0].value;
                    let gx = accumulate(&mut grads[x.0], src.len());
                    for ((acc, &gv), &xv) in gx.iter_mut().zip(&g).zip(src) {
                        *acc += 2.0 * xv * gv;
                    }
                }
                Op::Scale(x, factor) => {
                    let gx = accumulate(&mut grads[x.0], g.len());
                    for (acc, &gv) in gx.iter_mut().zip(&g) {
                        *acc += gv * factor;
                    }
                }
                Op::Softmax(x) => {
                    let cols = node.cols;
                    let gx = accumulate(&mut grads[x.0], g.len());
                    if cols > 0 {
                        for ((gr, yr), acc) in g
                            .chunks(cols)
                            .zip(node.value.chunks(cols))
                            .zip(gx.chunks_mut(cols))
                        {
                            let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                            for ((a, &gv), &yv) in acc.iter_mut().zip(gr).zip(yr) {
                                *a += yv * (gv - dot);
                            }
                        }
                    }
                }
                Op::LogSoftmax(x) => {
                    let cols = node.cols;
                    let gx = accumulate(&mut grads[x.0], g.len());
                    if cols > 0 {
                        for ((gr, yr), acc) in g
                            .chunks(cols)
                            .zip(node.value.chunks(cols))
                            .zip(gx.chunks_mut(cols))
                        {
                            let total: f64 = gr.iter().sum();
                            for ((a, &gv), &yv) in acc.iter_mut().zip(gr).zip(yr) {
                                *a += gv - yv.exp() * total;
                            }
                        }
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    for (acc, &gv) in accumulate(&mut grads[a.0], g.len()).iter_mut().zip(&g) {
                        *acc += gv;
                    }
                    for (acc, &gv) in accumulate(&mut grads[b.0], g.len()).iter_mut().zip(&g) {
                        *acc += sign * gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = accumulate(&mut grads[a.0], g.len());
                    for ((acc, &gv), &y) in ga.iter_mut().zip(&g).zip(bv) {
                        *acc += gv * y;
                    }
                    let gb = accumulate(&mut grads[b.0], g.len());
                    for ((acc, &gv), &x) in gb.iter_mut().zip(&g).zip(av) {
                        *acc += gv * x;
                    }
                }
                Op::Concat(parts) => {
                    let rows = node.rows;
                    let total_cols = node.cols;
                    let mut offset = 0;
                    for p in parts {
                        let c = self.nodes[p.0].cols;
                        let gp = accumulate(&mut grads[p.0], rows * c);
                        for r in 0..rows {
                            let src = &g[r * total_cols + offset..r * total_cols + offset + c];
                            for (acc, &gv) in gp[r * c..(r + 1) * c].iter_mut().zip(src) {
                                *acc += gv;
                            }
                        }
                        offset += c;
                    }
                }
                Op::Columns { x, start } => {
                    let (rows, len) = (node.rows, node.cols);
                    let cols = self.nodes[x.0].cols;
                    let gx = accumulate(&mut grads[x.0], rows * cols);
                    for r in 0..rows {
                        let dst = &mut gx[r * cols + start..r * cols + start + len];
                        for (acc, &gv) in dst.iter_mut().zip(&g[r * len..(r + 1) * len]) {
                            *acc += gv;
                        }
                    }
                }
                Op::Gather { x, idx } => {
                    let cols = self.nodes[x.0].cols;
                    let gx = accumulate(&mut grads[x.0], node.rows * cols);
                    for (r, &i) in idx.iter().enumerate() {
                        gx[r * cols + i] += g[r];
                    }
                }
                Op::Sum(x) => {
                    let n = sizes[x.0];
                    for acc in accumulate(&mut grads[x.0], n).iter_mut() {
                        *acc += g[0];
                    }
                }
                Op::Mean(x) => {
                    let n = sizes[x.0];
                    let share = if n == 0 { 0.0 } else { g[0] / n as f64 };
                    for acc in accumulate(&mut grads[x.0], n).iter_mut() {
                        *acc += share;
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, sizes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_leaves_has_unit_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![1.0, -2.0, 3.5], 1, 3).unwrap();
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_scaled_loss_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![0.3, 0.7], 2, 1).unwrap();
        let scaled = tape.scale(x, 0.0);
        let loss = tape.sum(scaled);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn unreachable_node_gets_zero() {
        let mut tape = Tape::new();
        let x = tape.row(&[1.0, 2.0]);
        let y = tape.row(&[5.0]);
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(y).is_none());
        assert_eq!(grads.get_or_zero(y), vec![0.0]);
    }

    #[test]
    fn non_scalar_loss_is_shape_error() {
        let mut tape = Tape::new();
        let x = tape.row(&[1.0, 2.0]);
        assert!(matches!(tape.backward(x), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_rows_are_normalised() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![1.0, 2.0, 3.0, -50.0, 0.0, 50.0], 2, 3).unwrap();
        let y = tape.softmax(x);
        for row in tape.value(y).chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn gather_and_columns_route_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3).unwrap();
        let picked = tape.gather(x, &[2, 0]).unwrap();
        let cols = tape.columns(x, 1, 1).unwrap();
        let both = tape.concat(&[picked, cols]).unwrap();
        assert_eq!(tape.value(both), &[3.0, 2.0, 4.0, 5.0]);
        let loss = tape.sum(both);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn mismatched_linear_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.row(&[1.0, 2.0]);
        let w = tape.leaf(vec![0.0; 3], 1, 3).unwrap();
        let b = tape.row(&[0.0]);
        assert!(matches!(tape.linear(x, w, b), Err(Error::InputShape(_))));
    }
}
