//! Reverse-mode autodiff over a tape of primitive ops.
//!
//! Ops are evaluated eagerly as they are recorded; `backward` walks the
//! tape in reverse. The tape is append-only, so every op's inputs precede
//! it and the graph is acyclic by construction. Gradient buffers are only
//! ever allocated for tensors that require gradients (directly or through
//! an input), which is what lets a frozen language model sit in the graph
//! at roughly half the usual backward cost.
//!
//! Shape mismatches are programming errors and panic with the offending
//! op named; non-finite outputs are detected after every op in debug
//! builds only.

use crate::real::Real;
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(pub usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    MatMul { a: usize, b: usize },
    /// C = A * B^T; used for attention scores so no transpose op is needed.
    MatMulNt { a: usize, b: usize },
    Add { a: usize, b: usize },
    AddBias { x: usize, bias: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, factor: f64 },
    Tanh { x: usize },
    Sigmoid { x: usize },
    RowSoftmax { x: usize },
    LayerNorm { x: usize, gamma: usize, beta: usize },
    Gather { table: usize, ids: Vec<u32> },
    ConcatRows { parts: Vec<usize> },
    ConcatCols { parts: Vec<usize> },
    SliceRows { x: usize, start: usize, end: usize },
    SliceCols { x: usize, start: usize, end: usize },
    MaskedCrossEntropy { logits: usize, targets: Vec<u32>, mask: Vec<bool> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::MatMul { .. } => "matmul",
            Op::MatMulNt { .. } => "matmul_nt",
            Op::Add { .. } => "add",
            Op::AddBias { .. } => "add_bias",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Tanh { .. } => "tanh",
            Op::Sigmoid { .. } => "sigmoid",
            Op::RowSoftmax { .. } => "row_softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gather { .. } => "embedding_gather",
            Op::ConcatRows { .. } => "concat_rows",
            Op::ConcatCols { .. } => "concat_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::MaskedCrossEntropy { .. } => "cross_entropy_with_mask",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphError {
    LossNotScalar { rows: usize, cols: usize },
    UnknownTensor(usize),
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::LossNotScalar { rows, cols } => {
                write!(f, "backward requires a scalar loss, got {rows}x{cols}")
            }
            GraphError::UnknownTensor(id) => write!(f, "unknown tensor id {id}"),
        }
    }
}

const LN_EPS: f64 = 1e-5;

pub struct Graph<R> {
    ops: Vec<Op>,
    values: Vec<Tensor<R>>,
    grads: Vec<Option<Tensor<R>>>,
    needs: Vec<bool>,
}

impl<R: Real> Default for Graph<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Graph<R> {
    pub fn new() -> Self {
        Graph {
            ops: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            needs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor<R>, needs: bool) -> TensorId {
        #[cfg(debug_assertions)]
        {
            assert!(
                value.all_finite(),
                "op {} (#{}) produced a non-finite value",
                op.name(),
                self.ops.len()
            );
        }
        let id = self.ops.len();
        self.ops.push(op);
        self.values.push(value);
        self.grads.push(None);
        self.needs.push(needs);
        TensorId(id)
    }

    /// Registers an input tensor, honouring its `requires_grad` flag.
    pub fn input(&mut self, t: &Tensor<R>) -> TensorId {
        let needs = t.requires_grad();
        self.push(Op::Input, t.clone(), needs)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<R>) -> TensorId {
        self.push(Op::Input, t, false)
    }

    /// Input that always receives a gradient.
    pub fn param(&mut self, t: &Tensor<R>) -> TensorId {
        self.push(Op::Input, t.clone(), true)
    }

    pub fn value(&self, id: TensorId) -> &Tensor<R> {
        &self.values[id.0]
    }

    /// Gradient of the last `backward` pass; `None` for tensors that do
    /// not require gradients.
    pub fn grad(&self, id: TensorId) -> Option<&Tensor<R>> {
        self.grads[id.0].as_ref()
    }

    pub fn take_grad(&mut self, id: TensorId) -> Option<Tensor<R>> {
        self.grads[id.0].take()
    }

    fn needs_any(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.needs[i])
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, k) = self.values[a.0].shape();
        let (k2, n) = self.values[b.0].shape();
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(m, n);
        matmul_nn(&self.values[a.0], &self.values[b.0], &mut out);
        let needs = self.needs_any(&[a.0, b.0]);
        self.push(Op::MatMul { a: a.0, b: b.0 }, out, needs)
    }

    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, k) = self.values[a.0].shape();
        let (n, k2) = self.values[b.0].shape();
        assert_eq!(k, k2, "matmul_nt: inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(m, n);
        matmul_nt(&self.values[a.0], &self.values[b.0], &mut out);
        let needs = self.needs_any(&[a.0, b.0]);
        self.push(Op::MatMulNt { a: a.0, b: b.0 }, out, needs)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let sa = self.values[a.0].shape();
        let sb = self.values[b.0].shape();
        assert_eq!(sa, sb, "add: shape {sa:?} vs {sb:?}");
        let out = Tensor::from_vec(
            sa.0,
            sa.1,
            self.values[a.0]
                .data()
                .iter()
                .zip(self.values[b.0].data())
                .map(|(&x, &y)| x + y)
                .collect(),
        );
        let needs = self.needs_any(&[a.0, b.0]);
        self.push(Op::Add { a: a.0, b: b.0 }, out, needs)
    }

    /// Broadcasts a 1xN bias over the rows of an MxN tensor. The only
    /// broadcasting the engine supports.
    pub fn add_bias(&mut self, x: TensorId, bias: TensorId) -> TensorId {
        let (m, n) = self.values[x.0].shape();
        let sb = self.values[bias.0].shape();
        assert_eq!(sb, (1, n), "add_bias: bias {sb:?} against {m}x{n}");
        let mut out = self.values[x.0].clone();
        out.set_requires_grad(false);
        let bd = self.values[bias.0].data().to_vec();
        for r in 0..m {
            let row = &mut out.data_mut()[r * n..(r + 1) * n];
            for (o, &b) in row.iter_mut().zip(&bd) {
                *o += b;
            }
        }
        let needs = self.needs_any(&[x.0, bias.0]);
        self.push(Op::AddBias { x: x.0, bias: bias.0 }, out, needs)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let sa = self.values[a.0].shape();
        let sb = self.values[b.0].shape();
        assert_eq!(sa, sb, "mul: shape {sa:?} vs {sb:?}");
        let out = Tensor::from_vec(
            sa.0,
            sa.1,
            self.values[a.0]
                .data()
                .iter()
                .zip(self.values[b.0].data())
                .map(|(&x, &y)| x * y)
                .collect(),
        );
        let needs = self.needs_any(&[a.0, b.0]);
        self.push(Op::Mul { a: a.0, b: b.0 }, out, needs)
    }

    pub fn scale(&mut self, x: TensorId, factor: f64) -> TensorId {
        let f = R::from_f64(factor);
        let out = self.values[x.0].map(|v| v * f);
        let needs = self.needs[x.0];
        self.push(Op::Scale { x: x.0, factor }, out, needs)
    }

    pub fn tanh(&mut self, x: TensorId) -> TensorId {
        let out = self.values[x.0].map(|v| v.tanh());
        let needs = self.needs[x.0];
        self.push(Op::Tanh { x: x.0 }, out, needs)
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        let out = self.values[x.0].map(|v| {
            let one = R::ONE;
            one / (one + (-v).exp())
        });
        let needs = self.needs[x.0];
        self.push(Op::Sigmoid { x: x.0 }, out, needs)
    }

    pub fn row_softmax(&mut self, x: TensorId) -> TensorId {
        let t = &self.values[x.0];
        let (m, n) = t.shape();
        let mut out = Tensor::zeros(m, n);
        for r in 0..m {
            let row = t.row(r);
            let mut mx = row[0];
            for &v in row {
                mx = mx.maximum(v);
            }
            let mut sum = R::ZERO;
            let orow = &mut out.data_mut()[r * n..(r + 1) * n];
            for (o, &v) in orow.iter_mut().zip(row) {
                let e = (v - mx).exp();
                *o = e;
                sum += e;
            }
            for o in orow.iter_mut() {
                *o /= sum;
            }
        }
        let needs = self.needs[x.0];
        self.push(Op::RowSoftmax { x: x.0 }, out, needs)
    }

    pub fn layer_norm(&mut self, x: TensorId, gamma: TensorId, beta: TensorId) -> TensorId {
        let (m, n) = self.values[x.0].shape();
        assert_eq!(self.values[gamma.0].shape(), (1, n), "layer_norm: gamma");
        assert_eq!(self.values[beta.0].shape(), (1, n), "layer_norm: beta");
        let mut out = Tensor::zeros(m, n);
        let eps = R::from_f64(LN_EPS);
        let inv_n = R::from_f64(1.0 / n as f64);
        for r in 0..m {
            let row = self.values[x.0].row(r);
            let mut mean = R::ZERO;
            for &v in row {
                mean += v;
            }
            mean *= inv_n;
            let mut var = R::ZERO;
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var *= inv_n;
            let rstd = R::ONE / (var + eps).sqrt();
            for c in 0..n {
                let xhat = (row[c] - mean) * rstd;
                let g = self.values[gamma.0].data()[c];
                let b = self.values[beta.0].data()[c];
                out.set(r, c, xhat * g + b);
            }
        }
        let needs = self.needs_any(&[x.0, gamma.0, beta.0]);
        self.push(
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
            },
            out,
            needs,
        )
    }

    /// Rows of `table` selected by `ids`; gradient scatter-adds back into
    /// the table.
    pub fn gather(&mut self, table: TensorId, ids: &[u32]) -> TensorId {
        let (v, d) = self.values[table.0].shape();
        assert!(!ids.is_empty(), "embedding_gather: empty id list");
        let mut out = Tensor::zeros(ids.len(), d);
        for (i, &id) in ids.iter().enumerate() {
            let id = id as usize;
            assert!(id < v, "embedding_gather: id {id} out of vocab {v}");
            let src = self.values[table.0].row(id).to_vec();
            out.data_mut()[i * d..(i + 1) * d].copy_from_slice(&src);
        }
        let needs = self.needs[table.0];
        self.push(
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
            },
            out,
            needs,
        )
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty(), "concat_rows: no parts");
        let n = self.values[parts[0].0].cols();
        let total: usize = parts.iter().map(|p| self.values[p.0].rows()).sum();
        let mut out = Tensor::zeros(total, n);
        let mut r0 = 0;
        for p in parts {
            let t = &self.values[p.0];
            assert_eq!(t.cols(), n, "concat_rows: column mismatch");
            let rows = t.rows();
            out.data_mut()[r0 * n..(r0 + rows) * n].copy_from_slice(t.data());
            r0 += rows;
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs_any(&ids);
        self.push(Op::ConcatRows { parts: ids }, out, needs)
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty(), "concat_cols: no parts");
        let m = self.values[parts[0].0].rows();
        let total: usize = parts.iter().map(|p| self.values[p.0].cols()).sum();
        let mut out = Tensor::zeros(m, total);
        let mut c0 = 0;
        for p in parts {
            let t = &self.values[p.0];
            assert_eq!(t.rows(), m, "concat_cols: row mismatch");
            let w = t.cols();
            for r in 0..m {
                let dst0 = r * total + c0;
                out.data_mut()[dst0..dst0 + w].copy_from_slice(t.row(r));
            }
            c0 += w;
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs_any(&ids);
        self.push(Op::ConcatCols { parts: ids }, out, needs)
    }

    pub fn slice_rows(&mut self, x: TensorId, start: usize, end: usize) -> TensorId {
        let (m, n) = self.values[x.0].shape();
        assert!(start < end && end <= m, "slice_rows: [{start},{end}) of {m}");
        let out = Tensor::from_vec(
            end - start,
            n,
            self.values[x.0].data()[start * n..end * n].to_vec(),
        );
        let needs = self.needs[x.0];
        self.push(Op::SliceRows { x: x.0, start, end }, out, needs)
    }

    pub fn slice_cols(&mut self, x: TensorId, start: usize, end: usize) -> TensorId {
        let (m, n) = self.values[x.0].shape();
        assert!(start < end && end <= n, "slice_cols: [{start},{end}) of {n}");
        let w = end - start;
        let mut out = Tensor::zeros(m, w);
        for r in 0..m {
            let src = &self.values[x.0].row(r)[start..end];
            out.data_mut()[r * w..(r + 1) * w].copy_from_slice(src);
        }
        let needs = self.needs[x.0];
        self.push(Op::SliceCols { x: x.0, start, end }, out, needs)
    }

    /// Mean cross-entropy over exactly the positions where `mask` is true.
    /// All mask bits off yields loss 0.
    pub fn masked_cross_entropy(
        &mut self,
        logits: TensorId,
        targets: &[u32],
        mask: &[bool],
    ) -> TensorId {
        let (m, v) = self.values[logits.0].shape();
        assert_eq!(targets.len(), m, "cross_entropy: {} targets for {m} rows", targets.len());
        assert_eq!(mask.len(), m, "cross_entropy: {} mask bits for {m} rows", mask.len());
        let count = mask.iter().filter(|&&b| b).count();
        let mut total = R::ZERO;
        if count > 0 {
            for r in 0..m {
                if !mask[r] {
                    continue;
                }
                let t = targets[r] as usize;
                assert!(t < v, "cross_entropy: target {t} out of vocab {v}");
                let row = self.values[logits.0].row(r);
                let mut mx = row[0];
                for &x in row {
                    mx = mx.maximum(x);
                }
                let mut sum = R::ZERO;
                for &x in row {
                    sum += (x - mx).exp();
                }
                total += sum.ln() + mx - row[t];
            }
            total /= R::from_f64(count as f64);
        }
        let needs = self.needs[logits.0];
        self.push(
            Op::MaskedCrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
            Tensor::scalar(total),
            needs,
        )
    }

    fn ensure_grad(&mut self, id: usize) {
        if self.grads[id].is_none() {
            let (m, n) = self.values[id].shape();
            self.grads[id] = Some(Tensor::zeros(m, n));
        }
    }

    /// Populates gradient buffers for every tensor that requires them,
    /// walking the tape in reverse from a scalar loss.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), GraphError> {
        if loss.0 >= self.ops.len() {
            return Err(GraphError::UnknownTensor(loss.0));
        }
        let (lr, lc) = self.values[loss.0].shape();
        if (lr, lc) != (1, 1) {
            return Err(GraphError::LossNotScalar { rows: lr, cols: lc });
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::scalar(R::ONE));

        for i in (0..=loss.0).rev() {
            let Some(go) = self.grads[i].take() else {
                continue;
            };
            // Tape order is topological: all consumers of node i sit after
            // i and have already accumulated into grads[i].
            let op = self.ops[i].clone();
            self.propagate(i, &op, &go);
            self.grads[i] = Some(go);
        }
        Ok(())
    }

    fn propagate(&mut self, out: usize, op: &Op, go: &Tensor<R>) {
        match op {
            Op::Input => {}
            Op::MatMul { a, b } => {
                if self.needs[*a] {
                    self.ensure_grad(*a);
                    let mut da = Tensor::zeros(
                        self.values[*a].rows(),
                        self.values[*a].cols(),
                    );
                    matmul_nt(go, &self.values[*b], &mut da);
                    add_into(self.grads[*a].as_mut().unwrap(), &da);
                }
                if self.needs[*b] {
                    self.ensure_grad(*b);
                    let mut db = Tensor::zeros(
                        self.values[*b].rows(),
                        self.values[*b].cols(),
                    );
                    matmul_tn(&self.values[*a], go, &mut db);
                    add_into(self.grads[*b].as_mut().unwrap(), &db);
                }
            }
            Op::MatMulNt { a, b } => {
                // C = A B^T: dA = G B, dB = G^T A
                if self.needs[*a] {
                    self.ensure_grad(*a);
                    let mut da = Tensor::zeros(
                        self.values[*a].rows(),
                        self.values[*a].cols(),
                    );
                    matmul_nn(go, &self.values[*b], &mut da);
                    add_into(self.grads[*a].as_mut().unwrap(), &da);
                }
                if self.needs[*b] {
                    self.ensure_grad(*b);
                    let mut db = Tensor::zeros(
                        self.values[*b].rows(),
                        self.values[*b].cols(),
                    );
                    matmul_tn(go, &self.values[*a], &mut db);
                    add_into(self.grads[*b].as_mut().unwrap(), &db);
                }
            }
            Op::Add { a, b } => {
                for &t in &[*a, *b] {
                    if self.needs[t] {
                        self.ensure_grad(t);
                        add_into(self.grads[t].as_mut().unwrap(), go);
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if self.needs[*x] {
                    self.ensure_grad(*x);
                    add_into(self.grads[*x].as_mut().unwrap(), go);
                }
                if self.needs[*bias] {
                    self.ensure_grad(*bias);
                    let (m, n) = go.shape();
                    let g = self.grads[*bias].as_mut().unwrap();
                    for r in 0..m {
                        for c in 0..n {
                            let v = g.get(0, c) + go.get(r, c);
                            g.set(0, c, v);
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                if self.needs[*a] {
                    self.ensure_grad(*a);
                    mul_add_into(self.grads[*a].as_mut().unwrap(), go, &self.values[*b]);
                }
                if self.needs[*b] {
                    self.ensure_grad(*b);
                    mul_add_into(self.grads[*b].as_mut().unwrap(), go, &self.values[*a]);
                }
            }
            Op::Scale { x, factor } => {
                if self.needs[*x] {
                    self.ensure_grad(*x);
                    let f = R::from_f64(*factor);
                    let g = self.grads[*x].as_mut().unwrap();
                    for (gd, &god) in g.data_mut().iter_mut().zip(go.data()) {
                        *gd += god * f;
                    }
                }
            }
            Op::Tanh { x } => {
                if self.needs[*x] {
                    self.ensure_grad(*x);
                    let y = self.values[out].clone();
                    let g = self.grads[*x].as_mut().unwrap();
                    for ((gd, &god), &yv) in
                        g.data_mut().iter_mut().zip(go.data()).zip(y.data())
                    {
                        *gd += god * (R::ONE - yv * yv);
                    }
                }
            }
            Op::Sigmoid { x } => {
                if self.needs[*x] {
                    self.ensure_grad(*x);
                    let y = self.values[out].clone();
                    let g = self.grads[*x].as_mut().unwrap();
                    for ((gd, &god), &yv) in
                        g.data_mut().iter_mut().zip(go.data()).zip(y.data())
                    {
                        *gd += god * yv * (R::ONE - yv);
                    }
                }
            }
            Op::RowSoftmax { x } => {
                if self.needs[*x] {
                    let y = self.values[out].clone();
                    self.ensure_grad(*x);
                    let (m, n) = y.shape();
                    let g = self.grads[*x].as_mut().unwrap();
                    for r in 0..m {
                        let yrow = y.row(r);
                        let grow = go.row(r);
                        let mut dot = R::ZERO;
                        for (yv, gv) in yrow.iter().zip(grow) {
                            dot += *yv * *gv;
                        }
                        let dst = &mut g.data_mut()[r * n..(r + 1) * n];
                        for ((d, &yv), &gv) in dst.iter_mut().zip(yrow).zip(grow) {
                            *d += yv * (gv - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta } => {
                self.layer_norm_backward(*x, *gamma, *beta, go);
            }
            Op::Gather { table, ids } => {
                if self.needs[*table] {
                    self.ensure_grad(*table);
                    let d = self.values[*table].cols();
                    let g = self.grads[*table].as_mut().unwrap();
                    for (i, &id) in ids.iter().enumerate() {
                        let dst = &mut g.data_mut()[id as usize * d..(id as usize + 1) * d];
                        for (dv, &gv) in dst.iter_mut().zip(go.row(i)) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::ConcatRows { parts } => {
                let n = go.cols();
                let mut r0 = 0;
                for &p in parts {
                    let rows = self.values[p].rows();
                    if self.needs[p] {
                        self.ensure_grad(p);
                        let g = self.grads[p].as_mut().unwrap();
                        for (dv, &gv) in g
                            .data_mut()
                            .iter_mut()
                            .zip(&go.data()[r0 * n..(r0 + rows) * n])
                        {
                            *dv += gv;
                        }
                    }
                    r0 += rows;
                }
            }
            Op::ConcatCols { parts } => {
                let total = go.cols();
                let m = go.rows();
                let mut c0 = 0;
                for &p in parts {
                    let w = self.values[p].cols();
                    if self.needs[p] {
                        self.ensure_grad(p);
                        let g = self.grads[p].as_mut().unwrap();
                        for r in 0..m {
                            let src = &go.data()[r * total + c0..r * total + c0 + w];
                            let dst = &mut g.data_mut()[r * w..(r + 1) * w];
                            for (dv, &gv) in dst.iter_mut().zip(src) {
                                *dv += gv;
                            }
                        }
                    }
                    c0 += w;
                }
            }
            Op::SliceRows { x, start, end } => {
                if self.needs[*x] {
                    self.ensure_grad(*x);
                    let n = go.cols();
                    let g = self.grads[*x].as_mut().unwrap();
                    let dst = &mut g.data_mut()[start * n..end * n];
                    for (dv, &gv) in dst.iter_mut().zip(go.data()) {
                        *dv += gv;
                    }
                }
            }
            Op::SliceCols { x, start, end } => {
                if self.needs[*x] {
                    self.ensure_grad(*x);
                    let n = self.values[*x].cols();
                    let w = end - start;
                    let m = go.rows();
                    let g = self.grads[*x].as_mut().unwrap();
                    for r in 0..m {
                        let dst = &mut g.data_mut()[r * n + start..r * n + end];
                        for (dv, &gv) in dst.iter_mut().zip(&go.data()[r * w..(r + 1) * w]) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::MaskedCrossEntropy {
                logits,
                targets,
                mask,
            } => {
                if self.needs[*logits] {
                    self.ensure_grad(*logits);
                    let count = mask.iter().filter(|&&b| b).count();
                    if count == 0 {
                        return;
                    }
                    let scale = go.item() / R::from_f64(count as f64);
                    let (m, v) = self.values[*logits].shape();
                    // softmax per masked row, recomputed from stored logits
                    let mut probs: Vec<(usize, Vec<R>)> = Vec::new();
                    for r in 0..m {
                        if !mask[r] {
                            continue;
                        }
                        let row = self.values[*logits].row(r);
                        let mut mx = row[0];
                        for &xv in row {
                            mx = mx.maximum(xv);
                        }
                        let mut e: Vec<R> = row.iter().map(|&xv| (xv - mx).exp()).collect();
                        let mut sum = R::ZERO;
                        for &x in &e {
                            sum += x;
                        }
                        for x in e.iter_mut() {
                            *x /= sum;
                        }
                        probs.push((r, e));
                    }
                    let g = self.grads[*logits].as_mut().unwrap();
                    for (r, p) in probs {
                        let t = targets[r] as usize;
                        let dst = &mut g.data_mut()[r * v..(r + 1) * v];
                        for (j, (dv, &pv)) in dst.iter_mut().zip(&p).enumerate() {
                            let ind = if j == t { R::ONE } else { R::ZERO };
                            *dv += (pv - ind) * scale;
                        }
                    }
                }
            }
        }
    }

    fn layer_norm_backward(&mut self, x: usize, gamma: usize, beta: usize, go: &Tensor<R>) {
        let (m, n) = self.values[x].shape();
        let eps = R::from_f64(LN_EPS);
        let inv_n = R::from_f64(1.0 / n as f64);
        let xs = self.values[x].clone();
        let gs = self.values[gamma].clone();
        for r in 0..m {
            let row = xs.row(r);
            let grow = go.row(r);
            let mut mean = R::ZERO;
            for &v in row {
                mean += v;
            }
            mean *= inv_n;
            let mut var = R::ZERO;
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var *= inv_n;
            let rstd = R::ONE / (var + eps).sqrt();

            if self.needs[beta] {
                self.ensure_grad(beta);
                let g = self.grads[beta].as_mut().unwrap();
                for (c, &gv) in grow.iter().enumerate() {
                    let v = g.get(0, c) + gv;
                    g.set(0, c, v);
                }
            }
            if self.needs[gamma] {
                self.ensure_grad(gamma);
                let g = self.grads[gamma].as_mut().unwrap();
                for (c, &gv) in grow.iter().enumerate() {
                    let xhat = (row[c] - mean) * rstd;
                    let v = g.get(0, c) + gv * xhat;
                    g.set(0, c, v);
                }
            }
            if self.needs[x] {
                // dxhat = g * gamma; dx = rstd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                let mut dxhat: Vec<R> = Vec::with_capacity(n);
                for (c, &gv) in grow.iter().enumerate() {
                    dxhat.push(gv * gs.data()[c]);
                }
                let mut s1 = R::ZERO;
                let mut s2 = R::ZERO;
                for (c, &dv) in dxhat.iter().enumerate() {
                    let xhat = (row[c] - mean) * rstd;
                    s1 += dv;
                    s2 += dv * xhat;
                }
                s1 *= inv_n;
                s2 *= inv_n;
                self.ensure_grad(x);
                let g = self.grads[x].as_mut().unwrap();
                let dst = &mut g.data_mut()[r * n..(r + 1) * n];
                for (c, dv) in dst.iter_mut().enumerate() {
                    let xhat = (row[c] - mean) * rstd;
                    *dv += rstd * (dxhat[c] - s1 - xhat * s2);
                }
            }
        }
    }

}

fn add_into<R: Real>(dst: &mut Tensor<R>, src: &Tensor<R>) {
    debug_assert_eq!(dst.shape(), src.shape());
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

fn mul_add_into<R: Real>(dst: &mut Tensor<R>, a: &Tensor<R>, b: &Tensor<R>) {
    debug_assert_eq!(dst.shape(), a.shape());
    debug_assert_eq!(a.shape(), b.shape());
    for ((d, &av), &bv) in dst.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        *d += av * bv;
    }
}
