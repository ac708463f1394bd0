//! Dense 2-D tensors. Row-major, shape checked at construction; scalars
//! are 1x1, row vectors 1xN.

use crate::real::Real;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<R> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
    requires_grad: bool,
}

impl<R: Real> Tensor<R> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<R>) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dims must be positive");
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match shape {}x{}",
            data.len(),
            rows,
            cols
        );
        Tensor {
            rows,
            cols,
            data,
            requires_grad: false,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec(rows, cols, vec![R::ZERO; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, v: R) -> Self {
        Self::from_vec(rows, cols, vec![v; rows * cols])
    }

    pub fn scalar(v: R) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> R) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    /// Marks the tensor as a trainable parameter when registered on a graph.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dims are positive by construction
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> R {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: R) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[R] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn item(&self) -> R {
        assert_eq!(self.shape(), (1, 1), "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<S: Real>(&self, f: impl Fn(R) -> S) -> Tensor<S> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: self.requires_grad,
        }
    }

    /// Lossless only for f32 -> f64; used to lift trained f32 state into
    /// f64 gradient checks.
    pub fn cast<S: Real>(&self) -> Tensor<S> {
        self.map(|v| S::from_f64(v.to_f64()))
    }
}

/// C = A(m x k) * B(k x n)
pub fn matmul_nn<R: Real>(a: &Tensor<R>, b: &Tensor<R>, out: &mut Tensor<R>) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
    assert_eq!(out.shape(), (m, n));
    let ad = a.data();
    let bd = b.data();
    let od = out.data_mut();
    for row in od.iter_mut() {
        *row = R::ZERO;
    }
    for i in 0..m {
        for l in 0..k {
            let av = ad[i * k + l];
            let brow = &bd[l * n..(l + 1) * n];
            let orow = &mut od[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// C = A(m x k) * B(n x k)^T
pub fn matmul_nt<R: Real>(a: &Tensor<R>, b: &Tensor<R>, out: &mut Tensor<R>) {
    let (m, k) = a.shape();
    let (n, k2) = b.shape();
    assert_eq!(k, k2, "matmul_nt inner dims {k} vs {k2}");
    assert_eq!(out.shape(), (m, n));
    let ad = a.data();
    let bd = b.data();
    let od = out.data_mut();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &bd[j * k..(j + 1) * k];
            let mut acc = R::ZERO;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            od[i * n + j] = acc;
        }
    }
}

/// C = A(m x p)^T * B(m x n)
pub fn matmul_tn<R: Real>(a: &Tensor<R>, b: &Tensor<R>, out: &mut Tensor<R>) {
    let (m, p) = a.shape();
    let (m2, n) = b.shape();
    assert_eq!(m, m2, "matmul_tn outer dims {m} vs {m2}");
    assert_eq!(out.shape(), (p, n));
    let ad = a.data();
    let bd = b.data();
    let od = out.data_mut();
    for row in od.iter_mut() {
        *row = R::ZERO;
    }
    for l in 0..m {
        let arow = &ad[l * p..(l + 1) * p];
        let brow = &bd[l * n..(l + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut od[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_returns_operand() {
        let eye = Tensor::from_fn(2, 2, |r, c| if r == c { 1.0f64 } else { 0.0 });
        let a = Tensor::from_vec(2, 2, vec![3.0, -1.5, 2.0, 0.25]);
        let mut out = Tensor::zeros(2, 2);
        matmul_nn(&eye, &a, &mut out);
        assert_eq!(out.data(), a.data());
    }

    #[test]
    fn transposed_kernels_agree_with_explicit_transpose() {
        let a = Tensor::from_vec(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.5).collect());
        // nt: A * B^T
        let mut nt = Tensor::zeros(2, 4);
        matmul_nt(&a, &b, &mut nt);
        let bt = Tensor::from_fn(3, 4, |r, c| b.get(c, r));
        let mut nn = Tensor::zeros(2, 4);
        matmul_nn(&a, &bt, &mut nn);
        assert_eq!(nt.data(), nn.data());
        // tn: A^T * C
        let c = Tensor::from_vec(2, 4, (0..8).map(|i| i as f64 - 3.0).collect());
        let mut tn = Tensor::zeros(3, 4);
        matmul_tn(&a, &c, &mut tn);
        let at = Tensor::from_fn(3, 2, |r, c2| a.get(c2, r));
        let mut nn2 = Tensor::zeros(3, 4);
        matmul_nn(&at, &c, &mut nn2);
        assert_eq!(tn.data(), nn2.data());
    }

    #[test]
    #[should_panic(expected = "data length")]
    fn shape_mismatch_panics() {
        let _ = Tensor::<f32>::from_vec(2, 2, vec![1.0, 2.0, 3.0]);
    }
}
