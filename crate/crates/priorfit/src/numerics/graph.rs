//! Reverse-mode autodiff on a single-owner tape.
//!
//! Every forward op appends a node; creation order is a topological order, so
//! backward is one reverse sweep over the tape. Tensors are immutable once on
//! the tape. A `Tape` is built per forward pass and dropped afterwards;
//! long-lived parameters live outside as plain [`Tensor`]s and are inserted
//! as `param` leaves each pass.

use super::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

type GradFn = Box<dyn Fn(&Tape, &Tensor, NodeId) -> Vec<(NodeId, Tensor)>>;

struct Node {
    value: Tensor,
    grad_fn: Option<GradFn>,
    requires_grad: bool,
}

/// Recorded computation. Single-owner, not `Sync`; one tape per thread.
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by tape node, produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `id`; `None` when disconnected.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient, or a zero tensor of the node's shape when disconnected.
    pub fn wrt_or_zero(&self, tape: &Tape, id: NodeId) -> Tensor {
        match self.wrt(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&tape.value(id).shape),
        }
    }
}

fn add_in_place(acc: &mut Tensor, inc: &Tensor) {
    assert_eq!(acc.shape, inc.shape, "gradient shape mismatch");
    for (a, b) in acc.data.iter_mut().zip(inc.data.iter()) {
        *a += b;
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, grad_fn: Option<GradFn>) -> NodeId {
        self.nodes.push(Node { value, grad_fn, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf that does not need a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, false, None)
    }

    /// Leaf parameter; `backward` will report a gradient for it.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, true, None)
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    // ── primitives ────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = tensor::matmul(self.value(a), self.value(b));
        let rg = self.any_grad(&[a, b]);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _self_id: NodeId| {
                let mut out = Vec::new();
                if t.requires_grad(a) {
                    out.push((a, tensor::matmul(g, &tensor::transpose(t.value(b)))));
                }
                if t.requires_grad(b) {
                    out.push((b, tensor::matmul(&tensor::transpose(t.value(a)), g)));
                }
                out
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape, vb.shape, "add shape mismatch: {:?} vs {:?}", va.shape, vb.shape);
        let data = va.data.iter().zip(vb.data.iter()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape.clone(), data);
        let rg = self.any_grad(&[a, b]);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let mut out = Vec::new();
                if t.requires_grad(a) {
                    out.push((a, g.clone()));
                }
                if t.requires_grad(b) {
                    out.push((b, g.clone()));
                }
                out
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Matrix (m,n) plus a rank-1 row vector (n) broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (vx, vb) = (self.value(x), self.value(bias));
        let (m, n) = (vx.rows(), vx.cols());
        assert_eq!(
            vb.shape,
            vec![n],
            "add_row shape mismatch: {:?} vs {:?}",
            vx.shape,
            vb.shape
        );
        let mut data = vx.data.clone();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += vb.data[j];
            }
        }
        let value = Tensor::new(vx.shape.clone(), data);
        let rg = self.any_grad(&[x, bias]);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let mut out = Vec::new();
                if t.requires_grad(x) {
                    out.push((x, g.clone()));
                }
                if t.requires_grad(bias) {
                    let (m, n) = (g.rows(), g.cols());
                    let mut gb = vec![0.0f64; n];
                    for i in 0..m {
                        for j in 0..n {
                            gb[j] += g.data[i * n + j] as f64;
                        }
                    }
                    out.push((bias, Tensor::new(vec![n], gb.iter().map(|&v| v as f32).collect())));
                }
                out
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn scale(&mut self, x: NodeId, c: f32) -> NodeId {
        let vx = self.value(x);
        let value = Tensor::new(vx.shape.clone(), vx.data.iter().map(|v| v * c).collect());
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |_t: &Tape, g: &Tensor, _s: NodeId| {
                vec![(x, Tensor::new(g.shape.clone(), g.data.iter().map(|v| v * c).collect()))]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape, vb.shape, "mul shape mismatch: {:?} vs {:?}", va.shape, vb.shape);
        let data = va.data.iter().zip(vb.data.iter()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(va.shape.clone(), data);
        let rg = self.any_grad(&[a, b]);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let mut out = Vec::new();
                if t.requires_grad(a) {
                    let vb = t.value(b);
                    let d = g.data.iter().zip(vb.data.iter()).map(|(x, y)| x * y).collect();
                    out.push((a, Tensor::new(g.shape.clone(), d)));
                }
                if t.requires_grad(b) {
                    let va = t.value(a);
                    let d = g.data.iter().zip(va.data.iter()).map(|(x, y)| x * y).collect();
                    out.push((b, Tensor::new(g.shape.clone(), d)));
                }
                out
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Multiply every element of `x` by the scalar node `s`.
    pub fn mul_scalar(&mut self, x: NodeId, s: NodeId) -> NodeId {
        assert!(
            self.value(s).is_scalar(),
            "mul_scalar needs a scalar node, got shape {:?}",
            self.value(s).shape
        );
        let sv = self.value(s).scalar_value();
        let vx = self.value(x);
        let value = Tensor::new(vx.shape.clone(), vx.data.iter().map(|v| v * sv).collect());
        let rg = self.any_grad(&[x, s]);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _self_id: NodeId| {
                let mut out = Vec::new();
                let sv = t.value(s).scalar_value();
                if t.requires_grad(x) {
                    out.push((x, Tensor::new(g.shape.clone(), g.data.iter().map(|v| v * sv).collect())));
                }
                if t.requires_grad(s) {
                    let vx = t.value(x);
                    let acc: f64 = g
                        .data
                        .iter()
                        .zip(vx.data.iter())
                        .map(|(gv, xv)| (*gv as f64) * (*xv as f64))
                        .sum();
                    out.push((s, Tensor::scalar(acc as f32)));
                }
                out
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let value = Tensor::new(vx.shape.clone(), vx.data.iter().map(|v| v.exp()).collect());
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, self_id: NodeId| {
                let out_val = t.value(self_id);
                let d = g.data.iter().zip(out_val.data.iter()).map(|(gv, ov)| gv * ov).collect();
                vec![(x, Tensor::new(g.shape.clone(), d))]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = tensor::transpose(self.value(x));
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |_t: &Tape, g: &Tensor, _s: NodeId| vec![(x, tensor::transpose(g))]) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut row_counts = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows column mismatch: {:?} vs {} cols", v.shape, cols);
            row_counts.push(v.rows());
            data.extend_from_slice(&v.data);
        }
        let total: usize = row_counts.iter().sum();
        let value = Tensor::new(vec![total, cols], data);
        let rg = self.any_grad(parts);
        let parts_v = parts.to_vec();
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let cols = g.cols();
                let mut out = Vec::new();
                let mut r0 = 0usize;
                for &p in &parts_v {
                    let rows = t.value(p).rows();
                    if t.requires_grad(p) {
                        let slice = g.data[r0 * cols..(r0 + rows) * cols].to_vec();
                        out.push((p, Tensor::new(vec![rows, cols], slice)));
                    }
                    r0 += rows;
                }
                out
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Stack matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let v = self.value(p);
                assert_eq!(v.rows(), rows, "concat_cols row mismatch: {:?} vs {} rows", v.shape, rows);
                v.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0f32; rows * total];
        let mut c0 = 0usize;
        for (&p, &w) in parts.iter().zip(widths.iter()) {
            let v = self.value(p);
            for i in 0..rows {
                data[i * total + c0..i * total + c0 + w].copy_from_slice(v.row(i));
            }
            c0 += w;
        }
        let value = Tensor::new(vec![rows, total], data);
        let rg = self.any_grad(parts);
        let parts_v = parts.to_vec();
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let rows = g.rows();
                let total = g.cols();
                let mut out = Vec::new();
                let mut c0 = 0usize;
                for &p in &parts_v {
                    let w = t.value(p).cols();
                    if t.requires_grad(p) {
                        let mut d = vec![0.0f32; rows * w];
                        for i in 0..rows {
                            d[i * w..(i + 1) * w]
                                .copy_from_slice(&g.data[i * total + c0..i * total + c0 + w]);
                        }
                        out.push((p, Tensor::new(vec![rows, w], d)));
                    }
                    c0 += w;
                }
                out
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let vx = self.value(x);
        let (m, n) = (vx.rows(), vx.cols());
        assert!(start + len <= m, "slice_rows [{start},{}) out of {m} rows", start + len);
        let data = vx.data[start * n..(start + len) * n].to_vec();
        let value = Tensor::new(vec![len, n], data);
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let full = t.value(x);
                let mut d = Tensor::zeros(&full.shape);
                let n = full.cols();
                d.data[start * n..(start + g.rows()) * n].copy_from_slice(&g.data);
                vec![(x, d)]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let vx = self.value(x);
        let (m, n) = (vx.rows(), vx.cols());
        assert!(start + len <= n, "slice_cols [{start},{}) out of {n} cols", start + len);
        let mut data = vec![0.0f32; m * len];
        for i in 0..m {
            data[i * len..(i + 1) * len].copy_from_slice(&vx.data[i * n + start..i * n + start + len]);
        }
        let value = Tensor::new(vec![m, len], data);
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let full = t.value(x);
                let (m, n) = (full.rows(), full.cols());
                let len = g.cols();
                let mut d = vec![0.0f32; m * n];
                for i in 0..m {
                    d[i * n + start..i * n + start + len].copy_from_slice(g.row(i));
                }
                vec![(x, Tensor::new(vec![m, n], d))]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let value = tensor::softmax_rows(self.value(x));
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, self_id: NodeId| {
                let s = t.value(self_id);
                let (m, n) = (s.rows(), s.cols());
                let mut d = vec![0.0f32; m * n];
                for i in 0..m {
                    let srow = s.row(i);
                    let grow = g.row(i);
                    let dot: f64 = srow
                        .iter()
                        .zip(grow.iter())
                        .map(|(a, b)| (*a as f64) * (*b as f64))
                        .sum();
                    for j in 0..n {
                        d[i * n + j] = srow[j] * (grow[j] - dot as f32);
                    }
                }
                vec![(x, Tensor::new(s.shape.clone(), d))]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let value = tensor::log_softmax_rows(self.value(x));
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, self_id: NodeId| {
                let ls = t.value(self_id);
                let (m, n) = (ls.rows(), ls.cols());
                let mut d = vec![0.0f32; m * n];
                for i in 0..m {
                    let grow = g.row(i);
                    let gsum: f64 = grow.iter().map(|&v| v as f64).sum();
                    for j in 0..n {
                        let p = (ls.data[i * n + j] as f64).exp();
                        d[i * n + j] = (grow[j] as f64 - p * gsum) as f32;
                    }
                }
                vec![(x, Tensor::new(ls.shape.clone(), d))]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Per-row layer normalization with learned gain and bias (rank-1, width n).
    pub fn layer_norm_rows(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        const EPS: f64 = 1e-5;
        let vx = self.value(x);
        let (m, n) = (vx.rows(), vx.cols());
        assert_eq!(self.value(gain).shape, vec![n], "layer_norm gain shape");
        assert_eq!(self.value(bias).shape, vec![n], "layer_norm bias shape");
        let vg = self.value(gain).data.clone();
        let vb = self.value(bias).data.clone();
        let mut data = vec![0.0f32; m * n];
        for i in 0..m {
            let row = vx.row(i);
            let mean: f64 = row.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            let var: f64 =
                row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + EPS).sqrt();
            for j in 0..n {
                let xh = ((row[j] as f64 - mean) * inv) as f32;
                data[i * n + j] = xh * vg[j] + vb[j];
            }
        }
        let value = Tensor::new(vx.shape.clone(), data);
        let rg = self.any_grad(&[x, gain, bias]);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let vx = t.value(x);
                let vg = t.value(gain);
                let (m, n) = (vx.rows(), vx.cols());
                let mut gx = vec![0.0f32; m * n];
                let mut ggain = vec![0.0f64; n];
                let mut gbias = vec![0.0f64; n];
                for i in 0..m {
                    let row = vx.row(i);
                    let grow = g.row(i);
                    let mean: f64 = row.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
                    let var: f64 =
                        row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + EPS).sqrt();
                    // xh_j and gxh_j = dL/dxh_j
                    let mut gxh = vec![0.0f64; n];
                    let mut xh = vec![0.0f64; n];
                    let mut mean_gxh = 0.0f64;
                    let mut mean_gxh_xh = 0.0f64;
                    for j in 0..n {
                        xh[j] = (row[j] as f64 - mean) * inv;
                        gxh[j] = grow[j] as f64 * vg.data[j] as f64;
                        mean_gxh += gxh[j];
                        mean_gxh_xh += gxh[j] * xh[j];
                        ggain[j] += grow[j] as f64 * xh[j];
                        gbias[j] += grow[j] as f64;
                    }
                    mean_gxh /= n as f64;
                    mean_gxh_xh /= n as f64;
                    for j in 0..n {
                        gx[i * n + j] = ((gxh[j] - mean_gxh - xh[j] * mean_gxh_xh) * inv) as f32;
                    }
                }
                let mut out = Vec::new();
                if t.requires_grad(x) {
                    out.push((x, Tensor::new(vx.shape.clone(), gx)));
                }
                if t.requires_grad(gain) {
                    out.push((gain, Tensor::new(vec![n], ggain.iter().map(|&v| v as f32).collect())));
                }
                if t.requires_grad(bias) {
                    out.push((bias, Tensor::new(vec![n], gbias.iter().map(|&v| v as f32).collect())));
                }
                out
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let value = Tensor::new(vx.shape.clone(), vx.data.iter().map(|&v| v.max(0.0)).collect());
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let vx = t.value(x);
                let d = g
                    .data
                    .iter()
                    .zip(vx.data.iter())
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect();
                vec![(x, Tensor::new(g.shape.clone(), d))]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        const C: f64 = 0.7978845608028654; // sqrt(2/pi)
        const A: f64 = 0.044715;
        let vx = self.value(x);
        let data = vx
            .data
            .iter()
            .map(|&v| {
                let v = v as f64;
                (0.5 * v * (1.0 + (C * (v + A * v * v * v)).tanh())) as f32
            })
            .collect();
        let value = Tensor::new(vx.shape.clone(), data);
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let vx = t.value(x);
                let d = g
                    .data
                    .iter()
                    .zip(vx.data.iter())
                    .map(|(&gv, &xv)| {
                        let v = xv as f64;
                        let u = C * (v + A * v * v * v);
                        let th = u.tanh();
                        let du = C * (1.0 + 3.0 * A * v * v);
                        let dy = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
                        (gv as f64 * dy) as f32
                    })
                    .collect();
                vec![(x, Tensor::new(g.shape.clone(), d))]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Row gather: out[i] = table[indices[i]].
    pub fn embedding(&mut self, table: NodeId, indices: &[usize]) -> NodeId {
        let vt = self.value(table);
        let (v, d) = (vt.rows(), vt.cols());
        let mut data = Vec::with_capacity(indices.len() * d);
        for &ix in indices {
            assert!(ix < v, "embedding index {ix} out of {v} rows");
            data.extend_from_slice(vt.row(ix));
        }
        let value = Tensor::new(vec![indices.len(), d], data);
        let rg = self.requires_grad(table);
        let idx = indices.to_vec();
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let vt = t.value(table);
                let mut d = Tensor::zeros(&vt.shape);
                let w = vt.cols();
                for (i, &ix) in idx.iter().enumerate() {
                    for j in 0..w {
                        d.data[ix * w + j] += g.data[i * w + j];
                    }
                }
                vec![(table, d)]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    /// Replace entries where `mask` is nonzero by `fill` (may be -inf).
    /// Gradient is zero at filled positions.
    pub fn masked_fill(&mut self, x: NodeId, mask: Tensor, fill: f32) -> NodeId {
        let vx = self.value(x);
        assert_eq!(
            vx.shape, mask.shape,
            "masked_fill shape mismatch: {:?} vs {:?}",
            vx.shape, mask.shape
        );
        let data = vx
            .data
            .iter()
            .zip(mask.data.iter())
            .map(|(&v, &m)| if m != 0.0 { fill } else { v })
            .collect();
        let value = Tensor::new(vx.shape.clone(), data);
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            let mask = mask.clone();
            Box::new(move |_t: &Tape, g: &Tensor, _s: NodeId| {
                let d = g
                    .data
                    .iter()
                    .zip(mask.data.iter())
                    .map(|(&gv, &m)| if m != 0.0 { 0.0 } else { gv })
                    .collect();
                vec![(x, Tensor::new(g.shape.clone(), d))]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let s: f64 = vx.data.iter().map(|&v| v as f64).sum();
        let value = Tensor::scalar(s as f32);
        let rg = self.requires_grad(x);
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let vx = t.value(x);
                let gv = g.scalar_value();
                vec![(x, Tensor::new(vx.shape.clone(), vec![gv; vx.numel()]))]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel();
        assert!(n > 0, "mean of empty tensor");
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f32)
    }

    /// out[i] = x[i, idx[i]], rank-1 result of length m.
    pub fn pick_rows(&mut self, x: NodeId, idx: &[usize]) -> NodeId {
        let vx = self.value(x);
        let (m, n) = (vx.rows(), vx.cols());
        assert_eq!(idx.len(), m, "pick_rows needs one index per row");
        let data = idx
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                assert!(j < n, "pick_rows index {j} out of {n} cols");
                vx.data[i * n + j]
            })
            .collect();
        let value = Tensor::new(vec![m], data);
        let rg = self.requires_grad(x);
        let idx_v = idx.to_vec();
        let grad_fn: Option<GradFn> = rg.then(|| {
            Box::new(move |t: &Tape, g: &Tensor, _s: NodeId| {
                let vx = t.value(x);
                let n = vx.cols();
                let mut d = Tensor::zeros(&vx.shape);
                for (i, &j) in idx_v.iter().enumerate() {
                    d.data[i * n + j] = g.data[i];
                }
                vec![(x, d)]
            }) as GradFn
        });
        self.push(value, rg, grad_fn)
    }

    // ── backward ──────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Panics when `loss` is not scalar.
    pub fn backward(&mut self, loss: NodeId) -> Gradients {
        assert!(
            self.value(loss).is_scalar(),
            "backward requires a scalar loss, got shape {:?}",
            self.value(loss).shape
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            if let Some(f) = &self.nodes[i].grad_fn {
                let g = grads[i].clone().unwrap();
                for (pid, pg) in f(self, &g, NodeId(i)) {
                    match &mut grads[pid.0] {
                        Some(acc) => add_in_place(acc, &pg),
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
        }
        // Non-parameter intermediates are not interesting to callers; the tape
        // is consumed by convention after backward.
        Gradients { grads }
    }
}
