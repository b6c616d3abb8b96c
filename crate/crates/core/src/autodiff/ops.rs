//! Forward definitions and backward rules.
//!
//! Subgradients at kinks: `relu'(0) = 0`, `abs'(0) = 0`, and the triangle
//! window takes the derivative of the branch to the left of a breakpoint.

use super::{check_shape, Op, Tensor};
use crate::error::{Error, Result};

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Autodiff(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn matrix_dims(op: &str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        ref s => Err(Error::Autodiff(format!("{op}: expected a matrix, got shape {s:?}"))),
    }
}

fn vector_len(op: &str, t: &Tensor) -> Result<usize> {
    match *t.shape() {
        [k] => Ok(k),
        ref s => Err(Error::Autodiff(format!("{op}: expected a vector, got shape {s:?}"))),
    }
}

fn stack_dims(op: &str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [s, r, c] => Ok((s, r, c)),
        ref s => Err(Error::Autodiff(format!("{op}: expected a stack, got shape {s:?}"))),
    }
}

fn triangle(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= 1.0 {
        x
    } else if x <= 2.0 {
        2.0 - x
    } else {
        0.0
    }
}

fn triangle_slope(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= 1.0 {
        1.0
    } else if x <= 2.0 {
        -1.0
    } else {
        0.0
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `a (r×k) · b (k×c)` on raw buffers.
fn mm(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &mut out[i * c..(i + 1) * c];
        for (l, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            if x != 0.0 {
                for (o, &y) in row.iter_mut().zip(&b[l * c..(l + 1) * c]) {
                    *o += x * y;
                }
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

impl Tensor {
    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect()
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.data().iter().map(|&x| f(x)).collect()
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self.zip_with(other, |a, b| a + b);
        Ok(Tensor::from_op(self.shape().to_vec(), data, Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self.zip_with(other, |a, b| a - b);
        Ok(Tensor::from_op(self.shape().to_vec(), data, Op::Sub(self.clone(), other.clone())))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = self.zip_with(other, |a, b| a * b);
        Ok(Tensor::from_op(self.shape().to_vec(), data, Op::Mul(self.clone(), other.clone())))
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), self.map(|x| x * s), Op::Scale(self.clone(), s))
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), self.map(|x| x + s), Op::AddScalar(self.clone()))
    }

    /// `s - self`.
    pub fn rsub_scalar(&self, s: f64) -> Tensor {
        self.neg().add_scalar(s)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (r, k) = matrix_dims("matmul", self)?;
        let (k2, c) = matrix_dims("matmul", other)?;
        if k != k2 {
            return Err(shape_err("matmul", self.shape(), other.shape()));
        }
        let data = mm(self.data(), other.data(), r, k, c);
        Ok(Tensor::from_op(vec![r, c], data, Op::MatMul(self.clone(), other.clone())))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = matrix_dims("transpose", self)?;
        let data = transpose_raw(self.data(), r, c);
        Ok(Tensor::from_op(vec![c, r], data, Op::Transpose(self.clone())))
    }

    pub fn relu(&self) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), self.map(|x| x.max(0.0)), Op::Relu(self.clone()))
    }

    pub fn abs(&self) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), self.map(f64::abs), Op::Abs(self.clone()))
    }

    /// Elementwise window: rises on `(0, 1]`, falls on `(1, 2]`, zero elsewhere.
    pub fn triangle_window(&self) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), self.map(triangle), Op::TriangleWindow(self.clone()))
    }

    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (r, c) = matrix_dims("softmax_rows", self)?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            softmax_row(&self.data()[i * c..(i + 1) * c], &mut data[i * c..(i + 1) * c]);
        }
        Ok(Tensor::from_op(vec![r, c], data, Op::SoftmaxRows(self.clone())))
    }

    pub fn log_softmax_rows(&self) -> Result<Tensor> {
        let (r, c) = matrix_dims("log_softmax_rows", self)?;
        let mut data = Vec::with_capacity(r * c);
        for row in self.data().chunks(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|x| x - lse));
        }
        Ok(Tensor::from_op(vec![r, c], data, Op::LogSoftmaxRows(self.clone())))
    }

    pub fn cumsum(&self) -> Result<Tensor> {
        let k = vector_len("cumsum", self)?;
        let mut data = Vec::with_capacity(k);
        let mut acc = 0.0;
        for &x in self.data() {
            acc += x;
            data.push(acc);
        }
        Ok(Tensor::from_op(vec![k], data, Op::Cumsum(self.clone())))
    }

    /// Sum over rows: `(r×c) -> c`.
    pub fn colsum(&self) -> Result<Tensor> {
        let (_, c) = matrix_dims("colsum", self)?;
        let mut data = vec![0.0; c];
        for row in self.data().chunks(c) {
            data.iter_mut().zip(row).for_each(|(d, x)| *d += x);
        }
        Ok(Tensor::from_op(vec![c], data, Op::Colsum(self.clone())))
    }

    pub fn sum(&self) -> Tensor {
        Tensor::from_op(vec![1], vec![self.data().iter().sum()], Op::Sum(self.clone()))
    }

    /// Stacks `p` copies of a vector as the rows of a matrix.
    pub fn repeat(&self, p: usize) -> Result<Tensor> {
        let k = vector_len("repeat", self)?;
        let data = self.data().repeat(p);
        Ok(Tensor::from_op(vec![p, k], data, Op::Repeat(self.clone())))
    }

    /// Concatenation along the leading axis.
    pub fn concat(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape().len() != other.shape().len() || self.shape()[1..] != other.shape()[1..] {
            return Err(shape_err("concat", self.shape(), other.shape()));
        }
        let mut shape = self.shape().to_vec();
        shape[0] += other.shape()[0];
        let data = [self.data(), other.data()].concat();
        Ok(Tensor::from_op(shape, data, Op::Concat(self.clone(), other.clone())))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        check_shape(shape, self.len())?;
        Ok(Tensor::from_op(shape.to_vec(), self.data().to_vec(), Op::Reshape(self.clone())))
    }

    /// `out[i] = self[indices[i]]` over flat storage, reshaped to `shape`.
    /// Covers slicing, column extraction and permutation.
    pub fn gather(&self, indices: Vec<usize>, shape: &[usize]) -> Result<Tensor> {
        check_shape(shape, indices.len())?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::OutOfRange { index: bad, size: self.len() });
        }
        let data = indices.iter().map(|&i| self.data()[i]).collect();
        Ok(Tensor::from_op(shape.to_vec(), data, Op::Gather(self.clone(), indices)))
    }

    /// Column `j` of a matrix restricted to rows `rows`.
    pub fn column(&self, j: usize, rows: std::ops::Range<usize>) -> Result<Tensor> {
        let (r, c) = matrix_dims("column", self)?;
        if j >= c || rows.end > r {
            return Err(Error::OutOfRange { index: j.max(rows.end), size: c.max(r) });
        }
        let len = rows.len();
        self.gather(rows.map(|i| i * c + j).collect(), &[len])
    }

    /// Leading `k` entries of a vector.
    pub fn head(&self, k: usize) -> Result<Tensor> {
        let len = vector_len("head", self)?;
        if k > len || k == 0 {
            return Err(Error::OutOfRange { index: k, size: len });
        }
        self.gather((0..k).collect(), &[k])
    }

    /// Leading `k` rows of a matrix.
    pub fn top_rows(&self, k: usize) -> Result<Tensor> {
        let (r, c) = matrix_dims("top_rows", self)?;
        if k > r || k == 0 {
            return Err(Error::OutOfRange { index: k, size: r });
        }
        self.gather((0..k * c).collect(), &[k, c])
    }

    /// `Σ_i d[i] · stack[i]`: `(s×r×c, s) -> r×c`.
    pub fn stack_contract(&self, d: &Tensor) -> Result<Tensor> {
        let (s, r, c) = stack_dims("stack_contract", self)?;
        if vector_len("stack_contract", d)? != s {
            return Err(shape_err("stack_contract", self.shape(), d.shape()));
        }
        let mut data = vec![0.0; r * c];
        for (mat, &w) in self.data().chunks(r * c).zip(d.data()) {
            if w != 0.0 {
                data.iter_mut().zip(mat).for_each(|(o, x)| *o += w * x);
            }
        }
        Ok(Tensor::from_op(vec![r, c], data, Op::StackContract(self.clone(), d.clone())))
    }

    /// Scales `stack[i]` by `d[i]`.
    pub fn stack_scale(&self, d: &Tensor) -> Result<Tensor> {
        let (s, r, c) = stack_dims("stack_scale", self)?;
        if vector_len("stack_scale", d)? != s {
            return Err(shape_err("stack_scale", self.shape(), d.shape()));
        }
        let mut data = self.data().to_vec();
        for (mat, &w) in data.chunks_mut(r * c).zip(d.data()) {
            mat.iter_mut().for_each(|x| *x *= w);
        }
        Ok(Tensor::from_op(vec![s, r, c], data, Op::StackScale(self.clone(), d.clone())))
    }

    /// Adds the same matrix to every matrix of a stack.
    pub fn add_broadcast(&self, mat: &Tensor) -> Result<Tensor> {
        let (s, r, c) = stack_dims("add_broadcast", self)?;
        if matrix_dims("add_broadcast", mat)? != (r, c) {
            return Err(shape_err("add_broadcast", self.shape(), mat.shape()));
        }
        let mut data = self.data().to_vec();
        for block in data.chunks_mut(r * c) {
            block.iter_mut().zip(mat.data()).for_each(|(x, m)| *x += m);
        }
        Ok(Tensor::from_op(vec![s, r, c], data, Op::AddBroadcast(self.clone(), mat.clone())))
    }

    /// Outer product of two vectors.
    pub fn outer(&self, other: &Tensor) -> Result<Tensor> {
        let p = vector_len("outer", self)?;
        let q = vector_len("outer", other)?;
        self.reshape(&[p, 1])?.matmul(&other.reshape(&[1, q])?)
    }

    /// Matrix times vector.
    pub fn matvec(&self, v: &Tensor) -> Result<Tensor> {
        let k = vector_len("matvec", v)?;
        let out = self.matmul(&v.reshape(&[k, 1])?)?;
        let r = out.shape()[0];
        out.reshape(&[r])
    }
}

/// Pushes the contribution of `t`'s incoming gradient `g` to each input.
pub(super) fn propagate(t: &Tensor, g: &[f64], emit: &mut dyn FnMut(&Tensor, Vec<f64>)) {
    match &t.0.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            emit(a, g.to_vec());
            emit(b, g.to_vec());
        }
        Op::Sub(a, b) => {
            emit(a, g.to_vec());
            emit(b, g.iter().map(|x| -x).collect());
        }
        Op::Mul(a, b) => {
            if a.requires_grad() {
                emit(a, g.iter().zip(b.data()).map(|(g, y)| g * y).collect());
            }
            if b.requires_grad() {
                emit(b, g.iter().zip(a.data()).map(|(g, x)| g * x).collect());
            }
        }
        Op::Scale(a, s) => emit(a, g.iter().map(|x| x * s).collect()),
        Op::AddScalar(a) | Op::Reshape(a) => emit(a, g.to_vec()),
        Op::MatMul(a, b) => {
            let (r, k) = (a.shape()[0], a.shape()[1]);
            let c = b.shape()[1];
            if a.requires_grad() {
                let bt = transpose_raw(b.data(), k, c);
                emit(a, mm(g, &bt, r, c, k));
            }
            if b.requires_grad() {
                let at = transpose_raw(a.data(), r, k);
                emit(b, mm(&at, g, k, r, c));
            }
        }
        Op::Transpose(a) => {
            let (r, c) = (a.shape()[0], a.shape()[1]);
            emit(a, transpose_raw(g, c, r));
        }
        Op::Relu(a) => emit(a, g.iter().zip(a.data()).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect()),
        Op::Abs(a) => emit(a, g.iter().zip(a.data()).map(|(g, &x)| g * sign(x)).collect()),
        Op::TriangleWindow(a) => emit(a, g.iter().zip(a.data()).map(|(g, &x)| g * triangle_slope(x)).collect()),
        Op::SoftmaxRows(a) => {
            let c = a.shape()[1];
            let y = t.data();
            let mut out = vec![0.0; y.len()];
            for ((o, yr), gr) in out.chunks_mut(c).zip(y.chunks(c)).zip(g.chunks(c)) {
                let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                for ((o, y), g) in o.iter_mut().zip(yr).zip(gr) {
                    *o = y * (g - dot);
                }
            }
            emit(a, out);
        }
        Op::LogSoftmaxRows(a) => {
            let c = a.shape()[1];
            let mut out = vec![0.0; g.len()];
            for ((o, lr), gr) in out.chunks_mut(c).zip(t.data().chunks(c)).zip(g.chunks(c)) {
                let total: f64 = gr.iter().sum();
                for ((o, l), g) in o.iter_mut().zip(lr).zip(gr) {
                    *o = g - l.exp() * total;
                }
            }
            emit(a, out);
        }
        Op::Cumsum(a) => {
            let mut out = vec![0.0; g.len()];
            let mut acc = 0.0;
            for i in (0..g.len()).rev() {
                acc += g[i];
                out[i] = acc;
            }
            emit(a, out);
        }
        Op::Colsum(a) => {
            let r = a.shape()[0];
            emit(a, g.repeat(r));
        }
        Op::Sum(a) => emit(a, vec![g[0]; a.len()]),
        Op::Repeat(a) => {
            let k = a.len();
            let mut out = vec![0.0; k];
            for row in g.chunks(k) {
                out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
            }
            emit(a, out);
        }
        Op::Concat(a, b) => {
            emit(a, g[..a.len()].to_vec());
            emit(b, g[a.len()..].to_vec());
        }
        Op::Gather(a, indices) => {
            let mut out = vec![0.0; a.len()];
            for (&i, &x) in indices.iter().zip(g) {
                out[i] += x;
            }
            emit(a, out);
        }
        Op::StackContract(s, d) => {
            let block = s.shape()[1] * s.shape()[2];
            if s.requires_grad() {
                let mut out = Vec::with_capacity(s.len());
                for &w in d.data() {
                    out.extend(g.iter().map(|x| x * w));
                }
                emit(s, out);
            }
            if d.requires_grad() {
                let out = s.data().chunks(block).map(|m| m.iter().zip(g).map(|(x, y)| x * y).sum()).collect();
                emit(d, out);
            }
        }
        Op::StackScale(s, d) => {
            let block = s.shape()[1] * s.shape()[2];
            if s.requires_grad() {
                let mut out = g.to_vec();
                for (m, &w) in out.chunks_mut(block).zip(d.data()) {
                    m.iter_mut().for_each(|x| *x *= w);
                }
                emit(s, out);
            }
            if d.requires_grad() {
                let out = s
                    .data()
                    .chunks(block)
                    .zip(g.chunks(block))
                    .map(|(m, gm)| m.iter().zip(gm).map(|(x, y)| x * y).sum())
                    .collect();
                emit(d, out);
            }
        }
        Op::AddBroadcast(s, m) => {
            emit(s, g.to_vec());
            if m.requires_grad() {
                let mut out = vec![0.0; m.len()];
                for block in g.chunks(m.len()) {
                    out.iter_mut().zip(block).for_each(|(o, x)| *o += x);
                }
                emit(m, out);
            }
        }
    }
}
