use std::cell::RefCell;
use std::rc::Rc;

use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use super::graph::{Blocks, EdgeList};
use super::tensor::{gemm, Tensor};
use super::NnError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

/// Row index that gathers a row of zeros.
pub const ZERO_ROW: u32 = u32::MAX;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    LeakyRelu(Var, f64),
    Selu(Var),
    GatherRows(Var, Rc<[u32]>),
    ScatterAddRows(Var, Rc<[u32]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    MeanHeads(Var, usize),
    BlockMatMul(Rc<Blocks>, Var),
    Dft {
        x: Var,
        n: usize,
        inverse: bool,
    },
    FreqMatMul {
        f: Var,
        s_re: Var,
        s_im: Var,
    },
    Mse(Var, Rc<Tensor>),
    GatV2 {
        xl: Var,
        xr: Var,
        att: Var,
        edges: Rc<EdgeList>,
        heads: usize,
        slope: f64,
        alpha: Tensor,
    },
    DotAttention {
        q: Var,
        k: Var,
        v: Var,
        edges: Rc<EdgeList>,
        heads: usize,
        scale: f64,
        alpha: Tensor,
    },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::MulRow(a, b) => {
                vec![*a, *b]
            }
            Op::ConcatCols(parts) => parts.clone(),
            Op::Scale(a, _)
            | Op::SliceCols(a, _)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::LeakyRelu(a, _)
            | Op::Selu(a)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _)
            | Op::SegmentSoftmax(a, _)
            | Op::MeanHeads(a, _)
            | Op::BlockMatMul(_, a)
            | Op::Mse(a, _) => vec![*a],
            Op::Dft { x, .. } => vec![*x],
            Op::FreqMatMul { f, s_re, s_im } => vec![*f, *s_re, *s_im],
            Op::GatV2 { xl, xr, att, .. } => vec![*xl, *xr, *att],
            Op::DotAttention { q, k, v, .. } => vec![*q, *k, *v],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Record of a forward computation, replayed in reverse by [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::Shape(format!("{op}: incompatible shapes {:?} and {:?}", a.shape(), b.shape()))
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

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Attention coefficients (`edges × heads`) saved by an attention op.
    pub fn saved_attention(&self, v: Var) -> Option<&Tensor> {
        match &self.nodes[v.0].op {
            Op::GatV2 { alpha, .. } | Op::DotAttention { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = op.parents().iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va, vb));
        }
        let out = va.matmul(vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_same(&mut self, name: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor::from_vec(va.rows(), va.cols(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    fn row_broadcast(&mut self, name: &str, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NnError> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err(name, va, vr));
        }
        let mut out = va.clone();
        let r = vr.data();
        for i in 0..out.rows() {
            for (x, y) in out.row_mut(i).iter_mut().zip(r) {
                *x = f(*x, *y);
            }
        }
        Ok(out)
    }

    /// Adds a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let out = self.row_broadcast("add_row", a, row, |x, y| x + y)?;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let out = self.row_broadcast("mul_row", a, row, |x, y| x * y)?;
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let va = self.value(a);
        let out = Tensor::from_vec(va.rows(), va.cols(), va.data().iter().map(|x| x * s).collect());
        self.push(out, Op::Scale(a, s))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat_cols", self.value(parts[0]), v));
            }
            cols += v.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            let c = v.cols();
            for i in 0..rows {
                out.row_mut(i)[off..off + c].copy_from_slice(v.row(i));
            }
            off += c;
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, range: std::ops::Range<usize>) -> Result<Var, NnError> {
        let va = self.value(a);
        if range.end > va.cols() || range.start > range.end {
            return Err(NnError::Shape(format!("slice_cols {range:?} of shape {:?}", va.shape())));
        }
        let out = Tensor::from_fn(va.rows(), range.len(), |i, j| va.get(i, range.start + j));
        Ok(self.push(out, Op::SliceCols(a, range.start)))
    }

    /// Reinterprets the row-major buffer with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, NnError> {
        let va = self.value(a);
        if va.len() != rows * cols {
            return Err(NnError::Shape(format!("reshape {:?} to ({rows}, {cols})", va.shape())));
        }
        let out = va.clone().reshaped(rows, cols);
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let s = va.data().iter().sum::<f64>() / va.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let va = self.value(a);
        let out = Tensor::from_vec(
            va.rows(),
            va.cols(),
            va.data().iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect(),
        );
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn selu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = Tensor::from_vec(va.rows(), va.cols(), va.data().iter().map(|&x| selu(x)).collect());
        self.push(out, Op::Selu(a))
    }

    /// Row `i` of the output is row `index[i]` of `a`, or zeros for [`ZERO_ROW`].
    pub fn gather_rows(&mut self, a: Var, index: Rc<[u32]>) -> Result<Var, NnError> {
        let va = self.value(a);
        let cols = va.cols();
        let mut out = Tensor::zeros(index.len(), cols);
        for (i, &r) in index.iter().enumerate() {
            if r == ZERO_ROW {
                continue;
            }
            if r as usize >= va.rows() {
                return Err(NnError::Shape(format!("gather_rows index {r} out of {} rows", va.rows())));
            }
            out.row_mut(i).copy_from_slice(va.row(r as usize));
        }
        Ok(self.push(out, Op::GatherRows(a, index)))
    }

    /// Adds row `i` of `a` into row `index[i]` of an `n_out`-row result.
    pub fn scatter_add_rows(&mut self, a: Var, index: Rc<[u32]>, n_out: usize) -> Result<Var, NnError> {
        let va = self.value(a);
        if index.len() != va.rows() {
            return Err(NnError::Shape(format!(
                "scatter_add_rows: {} indices for {} rows",
                index.len(),
                va.rows()
            )));
        }
        let mut out = Tensor::zeros(n_out, va.cols());
        for (i, &r) in index.iter().enumerate() {
            if r as usize >= n_out {
                return Err(NnError::Shape(format!("scatter_add_rows index {r} out of {n_out} rows")));
            }
            for (o, x) in out.row_mut(r as usize).iter_mut().zip(va.row(i)) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, index)))
    }

    /// Column-wise softmax within each row segment `offsets[s]..offsets[s+1]`.
    pub fn segment_softmax(&mut self, a: Var, offsets: Rc<[usize]>) -> Result<Var, NnError> {
        let va = self.value(a);
        if offsets.first() != Some(&0) || offsets.last() != Some(&va.rows()) {
            return Err(NnError::Shape(format!("segment offsets do not cover {} rows", va.rows())));
        }
        let mut out = va.clone();
        let cols = va.cols();
        for w in offsets.windows(2) {
            for c in 0..cols {
                softmax_strided(out.data_mut(), w[0], w[1], cols, c);
            }
        }
        Ok(self.push(out, Op::SegmentSoftmax(a, offsets)))
    }

    /// Averages `heads` equal column groups.
    pub fn mean_heads(&mut self, a: Var, heads: usize) -> Result<Var, NnError> {
        let va = self.value(a);
        if heads == 0 || va.cols() % heads != 0 {
            return Err(NnError::Shape(format!("mean_heads: {} columns into {heads} heads", va.cols())));
        }
        let d = va.cols() / heads;
        let mut out = Tensor::zeros(va.rows(), d);
        let inv = 1.0 / heads as f64;
        for i in 0..va.rows() {
            let row = va.row(i);
            let o = out.row_mut(i);
            for h in 0..heads {
                for c in 0..d {
                    o[c] += row[h * d + c] * inv;
                }
            }
        }
        Ok(self.push(out, Op::MeanHeads(a, heads)))
    }

    /// Multiplies each `n`-row block of `x` by the matching constant matrix.
    pub fn block_matmul(&mut self, blocks: Rc<Blocks>, x: Var) -> Result<Var, NnError> {
        let vx = self.value(x);
        let n = blocks.n;
        if vx.rows() != n * blocks.mats.len() {
            return Err(NnError::Shape(format!(
                "block_matmul: {} blocks of {n} against {} rows",
                blocks.mats.len(),
                vx.rows()
            )));
        }
        let c = vx.cols();
        let mut out = Tensor::zeros(vx.rows(), c);
        for (b, m) in blocks.mats.iter().enumerate() {
            let off = b * n * c;
            gemm(
                n,
                n,
                c,
                1.0,
                (m, n, 1),
                (&vx.data()[off..off + n * c], c, 1),
                0.0,
                (&mut out.data_mut()[off..off + n * c], c, 1),
            );
        }
        Ok(self.push(out, Op::BlockMatMul(blocks, x)))
    }

    /// Discrete Fourier transform along the rows of every `n`-row block.
    ///
    /// Complex values are stored as `[re | im]` column halves. The inverse
    /// transform carries the `1/n` factor.
    pub fn dft(&mut self, x: Var, n: usize, inverse: bool) -> Result<Var, NnError> {
        let vx = self.value(x);
        if n == 0 || vx.rows() % n != 0 || vx.cols() % 2 != 0 {
            return Err(NnError::Shape(format!("dft of length {n} over shape {:?}", vx.shape())));
        }
        let (dir, scale) = if inverse {
            (FftDirection::Inverse, 1.0 / n as f64)
        } else {
            (FftDirection::Forward, 1.0)
        };
        let out = fft_blocks(vx, n, dir, scale);
        Ok(self.push(out, Op::Dft { x, n, inverse }))
    }

    /// Per-frequency complex product `Y_k = F_k · S_k`.
    ///
    /// `f` holds blocks of `n` frequency rows as `[re | im]` (`2·c_in` columns);
    /// row `k` of `s_re`/`s_im` is `S_k` flattened row-major (`c_in × c_out`).
    pub fn freq_matmul(&mut self, f: Var, s_re: Var, s_im: Var) -> Result<Var, NnError> {
        let (vf, vr, vi) = (self.value(f), self.value(s_re), self.value(s_im));
        let n = vr.rows();
        let cin = vf.cols() / 2;
        if vr.shape() != vi.shape() || n == 0 || vf.rows() % n != 0 || cin == 0 || vr.cols() % cin != 0 {
            return Err(NnError::Shape(format!(
                "freq_matmul: F {:?} against S {:?}/{:?}",
                vf.shape(),
                vr.shape(),
                vi.shape()
            )));
        }
        let cout = vr.cols() / cin;
        let mut out = Tensor::zeros(vf.rows(), 2 * cout);
        let blocks = vf.rows() / n;
        let (w_in, w_out) = (2 * cin, 2 * cout);
        for k in 0..n {
            let m = real_form(vr.row(k), vi.row(k), cin, cout);
            gemm(
                blocks,
                w_in,
                w_out,
                1.0,
                (&vf.data()[k * w_in..], n * w_in, 1),
                (&m, w_out, 1),
                0.0,
                (&mut out.data_mut()[k * w_out..], n * w_out, 1),
            );
        }
        Ok(self.push(out, Op::FreqMatMul { f, s_re, s_im }))
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&mut self, pred: Var, target: Rc<Tensor>) -> Result<Var, NnError> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(shape_err("mse_loss", vp, &target));
        }
        let s = vp
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / vp.len() as f64;
        Ok(self.push(Tensor::scalar(s), Op::Mse(pred, target)))
    }

    /// Fused GATv2 attention and aggregation.
    ///
    /// `xl` are the source-side projections (also the messages), `xr` the
    /// destination-side ones, both `nodes × heads·d`; `att` is `1 × heads·d`.
    /// Score of edge `j → i` in head `h` is `att_h · LeakyReLU(xl_j + xr_i)`.
    pub fn gatv2_attention(
        &mut self,
        xl: Var,
        xr: Var,
        att: Var,
        edges: Rc<EdgeList>,
        heads: usize,
        slope: f64,
    ) -> Result<Var, NnError> {
        let (vl, vr, va) = (self.value(xl), self.value(xr), self.value(att));
        let hd = vl.cols();
        if vl.shape() != vr.shape() || va.shape() != (1, hd) || heads == 0 || hd % heads != 0 {
            return Err(NnError::Shape(format!(
                "gatv2_attention: xl {:?}, xr {:?}, att {:?}, {heads} heads",
                vl.shape(),
                vr.shape(),
                va.shape()
            )));
        }
        check_edges(&edges, vl.rows())?;
        let d = hd / heads;
        let att_v = va.data();
        let mut alpha = Tensor::zeros(edges.src.len(), heads);
        let mut out = Tensor::zeros(vl.rows(), hd);
        for i in 0..edges.n_nodes {
            let (lo, hi) = (edges.offsets[i], edges.offsets[i + 1]);
            let xr_i = vr.row(i);
            for e in lo..hi {
                let xl_j = vl.row(edges.src[e] as usize);
                for h in 0..heads {
                    let r = h * d..(h + 1) * d;
                    let s = leaky_score(&xl_j[r.clone()], &xr_i[r.clone()], &att_v[r], slope);
                    alpha.set(e, h, s);
                }
            }
            for h in 0..heads {
                softmax_strided(alpha.data_mut(), lo, hi, heads, h);
            }
            let o = out.row_mut(i);
            for e in lo..hi {
                let xl_j = vl.row(edges.src[e] as usize);
                for h in 0..heads {
                    let r = h * d..(h + 1) * d;
                    axpy(&mut o[r.clone()], alpha.get(e, h), &xl_j[r]);
                }
            }
        }
        Ok(self.push(
            out,
            Op::GatV2 {
                xl,
                xr,
                att,
                edges,
                heads,
                slope,
                alpha,
            },
        ))
    }

    /// Fused scaled dot-product attention over graph edges:
    /// `α_ij ∝ exp(scale · q_i·k_j)` per head, output `Σ_j α_ij v_j`.
    pub fn dot_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        edges: Rc<EdgeList>,
        heads: usize,
        scale: f64,
    ) -> Result<Var, NnError> {
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let hd = vq.cols();
        if vq.shape() != vk.shape() || vq.shape() != vv.shape() || heads == 0 || hd % heads != 0 {
            return Err(NnError::Shape(format!(
                "dot_attention: q {:?}, k {:?}, v {:?}, {heads} heads",
                vq.shape(),
                vk.shape(),
                vv.shape()
            )));
        }
        check_edges(&edges, vq.rows())?;
        let d = hd / heads;
        let mut alpha = Tensor::zeros(edges.src.len(), heads);
        let mut out = Tensor::zeros(vq.rows(), hd);
        for i in 0..edges.n_nodes {
            let (lo, hi) = (edges.offsets[i], edges.offsets[i + 1]);
            let q_i = vq.row(i);
            for e in lo..hi {
                let k_j = vk.row(edges.src[e] as usize);
                for h in 0..heads {
                    let r = h * d..(h + 1) * d;
                    alpha.set(e, h, dot4(&q_i[r.clone()], &k_j[r]) * scale);
                }
            }
            for h in 0..heads {
                softmax_strided(alpha.data_mut(), lo, hi, heads, h);
            }
            let o = out.row_mut(i);
            for e in lo..hi {
                let v_j = vv.row(edges.src[e] as usize);
                for h in 0..heads {
                    let r = h * d..(h + 1) * d;
                    axpy(&mut o[r.clone()], alpha.get(e, h), &v_j[r]);
                }
            }
        }
        Ok(self.push(
            out,
            Op::DotAttention {
                q,
                k,
                v,
                edges,
                heads,
                scale,
                alpha,
            },
        ))
    }

    /// Reverse pass from a `1 × 1` output.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let root = &self.nodes[loss.0].value;
        if root.shape() != (1, 1) {
            return Err(NnError::Shape(format!("backward from non-scalar {:?}", root.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.backward_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn grad_slot<'a>(&self, grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        let (r, c) = node.value.shape();
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
    }

    /// Adds an owned gradient into the slot of `v`, taking it over when empty.
    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        let (r, c) = node.value.shape();
        match &mut grads[v.0] {
            Some(slot) => slot.add_assign(&t.reshaped(r, c)),
            empty => *empty = Some(t.reshaped(r, c)),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if let Some(ga) = self.grad_slot(grads, *a) {
                    // dA = G·Bᵀ
                    gemm(m, n, k, 1.0, (g.data(), n, 1), (vb.data(), 1, n), 1.0, (ga.data_mut(), k, 1));
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    // dB = Aᵀ·G
                    gemm(k, m, n, 1.0, (va.data(), 1, k), (g.data(), n, 1), 1.0, (gb.data_mut(), n, 1));
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    for (x, y) in gb.data_mut().iter_mut().zip(g.data()) {
                        *x -= y;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((x, gy), y) in ga.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                        *x += gy * y;
                    }
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    for ((x, gy), y) in gb.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *x += gy * y;
                    }
                }
            }
            Op::AddRow(a, row) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if let Some(gr) = self.grad_slot(grads, *row) {
                    let gr = gr.data_mut();
                    for i in 0..g.rows() {
                        for (x, y) in gr.iter_mut().zip(g.row(i)) {
                            *x += y;
                        }
                    }
                }
            }
            Op::MulRow(a, row) => {
                let (va, vr) = (val(*a), val(*row));
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for i in 0..g.rows() {
                        for ((x, gy), r) in ga.row_mut(i).iter_mut().zip(g.row(i)).zip(vr.data()) {
                            *x += gy * r;
                        }
                    }
                }
                if let Some(gr) = self.grad_slot(grads, *row) {
                    let gr = gr.data_mut();
                    for i in 0..g.rows() {
                        for ((x, gy), av) in gr.iter_mut().zip(g.row(i)).zip(va.row(i)) {
                            *x += gy * av;
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for (x, y) in ga.data_mut().iter_mut().zip(g.data()) {
                        *x += s * y;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let c = val(p).cols();
                    if let Some(gp) = self.grad_slot(grads, p) {
                        for i in 0..g.rows() {
                            for (x, y) in gp.row_mut(i).iter_mut().zip(&g.row(i)[off..off + c]) {
                                *x += y;
                            }
                        }
                    }
                    off += c;
                }
            }
            Op::SliceCols(a, start) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    let c = g.cols();
                    for i in 0..g.rows() {
                        for (x, y) in ga.row_mut(i)[*start..*start + c].iter_mut().zip(g.row(i)) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                let mut s = g.data()[0];
                if let Op::Mean(_) = node.op {
                    s /= val(*a).len() as f64;
                }
                if let Some(ga) = self.grad_slot(grads, *a) {
                    ga.data_mut().iter_mut().for_each(|x| *x += s);
                }
            }
            Op::LeakyRelu(a, slope) => {
                let va = val(*a);
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((x, gy), v) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *x += if *v > 0.0 { *gy } else { slope * gy };
                    }
                }
            }
            Op::Selu(a) => {
                let va = val(*a);
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((x, gy), v) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *x += gy * selu_grad(*v);
                    }
                }
            }
            Op::GatherRows(a, index) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for (i, &r) in index.iter().enumerate() {
                        if r == ZERO_ROW {
                            continue;
                        }
                        for (x, y) in ga.row_mut(r as usize).iter_mut().zip(g.row(i)) {
                            *x += y;
                        }
                    }
                }
            }
            Op::ScatterAddRows(a, index) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for (i, &r) in index.iter().enumerate() {
                        for (x, y) in ga.row_mut(i).iter_mut().zip(g.row(r as usize)) {
                            *x += y;
                        }
                    }
                }
            }
            Op::SegmentSoftmax(a, offsets) => {
                let y = &node.value;
                let cols = y.cols();
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for w in offsets.windows(2) {
                        for c in 0..cols {
                            let dot: f64 = (w[0]..w[1]).map(|r| y.get(r, c) * g.get(r, c)).sum();
                            for r in w[0]..w[1] {
                                let idx = r * cols + c;
                                ga.data_mut()[idx] += y.data()[idx] * (g.data()[idx] - dot);
                            }
                        }
                    }
                }
            }
            Op::MeanHeads(a, heads) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    let d = g.cols();
                    let inv = 1.0 / *heads as f64;
                    for i in 0..g.rows() {
                        let gr = g.row(i);
                        let row = ga.row_mut(i);
                        for h in 0..*heads {
                            for c in 0..d {
                                row[h * d + c] += gr[c] * inv;
                            }
                        }
                    }
                }
            }
            Op::BlockMatMul(blocks, x) => {
                if let Some(gx) = self.grad_slot(grads, *x) {
                    let n = blocks.n;
                    let c = g.cols();
                    for (b, m) in blocks.mats.iter().enumerate() {
                        let off = b * n * c;
                        gemm(
                            n,
                            n,
                            c,
                            1.0,
                            (m, 1, n),
                            (&g.data()[off..off + n * c], c, 1),
                            1.0,
                            (&mut gx.data_mut()[off..off + n * c], c, 1),
                        );
                    }
                }
            }
            Op::Dft { x, n, inverse } => {
                if self.needs(*x) {
                    // adjoint of F is conj(F): the opposite direction, same scale
                    let back = if *inverse {
                        fft_blocks(g, *n, FftDirection::Forward, 1.0 / *n as f64)
                    } else {
                        fft_blocks(g, *n, FftDirection::Inverse, 1.0)
                    };
                    self.accumulate(grads, *x, back);
                }
            }
            Op::FreqMatMul { f, s_re, s_im } => {
                let (vf, vr, vi) = (val(*f), val(*s_re), val(*s_im));
                let n = vr.rows();
                let cin = vf.cols() / 2;
                let cout = vr.cols() / cin;
                let blocks = vf.rows() / n;
                let (w_in, w_out) = (2 * cin, 2 * cout);
                if let Some(gf) = self.grad_slot(grads, *f) {
                    for k in 0..n {
                        // dF_k = G_k · M_kᵀ
                        let m = real_form(vr.row(k), vi.row(k), cin, cout);
                        gemm(
                            blocks,
                            w_out,
                            w_in,
                            1.0,
                            (&g.data()[k * w_out..], n * w_out, 1),
                            (&m, 1, w_out),
                            1.0,
                            (&mut gf.data_mut()[k * w_in..], n * w_in, 1),
                        );
                    }
                }
                let need_r = self.nodes[s_re.0].needs_grad;
                let need_i = self.nodes[s_im.0].needs_grad;
                if need_r || need_i {
                    let mut dr = Tensor::zeros(vr.rows(), vr.cols());
                    let mut di = Tensor::zeros(vi.rows(), vi.cols());
                    let mut dm = vec![0.0; w_in * w_out];
                    for k in 0..n {
                        // dM_k = F_kᵀ · G_k, folded back onto the two halves
                        gemm(
                            w_in,
                            blocks,
                            w_out,
                            1.0,
                            (&vf.data()[k * w_in..], 1, n * w_in),
                            (&g.data()[k * w_out..], n * w_out, 1),
                            0.0,
                            (&mut dm, w_out, 1),
                        );
                        let (drow, irow) = (dr.row_mut(k), di.row_mut(k));
                        for a in 0..cin {
                            for b in 0..cout {
                                let top = a * w_out;
                                let bot = (cin + a) * w_out;
                                drow[a * cout + b] = dm[top + b] + dm[bot + cout + b];
                            }
                        }
                        for a in 0..cin {
                            for b in 0..cout {
                                let top = a * w_out;
                                let bot = (cin + a) * w_out;
                                irow[a * cout + b] = dm[top + cout + b] - dm[bot + b];
                            }
                        }
                    }
                    self.accumulate(grads, *s_re, dr);
                    self.accumulate(grads, *s_im, di);
                }
            }
            Op::Mse(pred, target) => {
                let vp = val(*pred);
                let s = 2.0 * g.data()[0] / vp.len() as f64;
                if let Some(gp) = self.grad_slot(grads, *pred) {
                    for ((x, p), t) in gp.data_mut().iter_mut().zip(vp.data()).zip(target.data()) {
                        *x += s * (p - t);
                    }
                }
            }
            Op::GatV2 {
                xl,
                xr,
                att,
                edges,
                heads,
                slope,
                alpha,
            } => self.gatv2_backward(g, grads, (*xl, *xr, *att), edges, *heads, *slope, alpha),
            Op::DotAttention {
                q,
                k,
                v,
                edges,
                heads,
                scale,
                alpha,
            } => self.dot_attention_backward(g, grads, (*q, *k, *v), edges, *heads, *scale, alpha),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn gatv2_backward(
        &self,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        (xl, xr, att): (Var, Var, Var),
        edges: &EdgeList,
        heads: usize,
        slope: f64,
        alpha: &Tensor,
    ) {
        let (vl, vr, va) = (&self.nodes[xl.0].value, &self.nodes[xr.0].value, &self.nodes[att.0].value);
        let hd = vl.cols();
        let d = hd / heads;
        let mut dxl = Tensor::zeros(vl.rows(), hd);
        let mut dxr = Tensor::zeros(vr.rows(), hd);
        let mut datt = vec![0.0; hd];
        let att_v = va.data();
        let mut ds = vec![0.0; heads];
        let mut dalpha: Vec<f64> = Vec::new();
        for i in 0..edges.n_nodes {
            let (lo, hi) = (edges.offsets[i], edges.offsets[i + 1]);
            let g_i = g.row(i);
            dalpha.clear();
            dalpha.resize((hi - lo) * heads, 0.0);
            for e in lo..hi {
                let j = edges.src[e] as usize;
                let xl_j = vl.row(j);
                let dxl_j = dxl.row_mut(j);
                for h in 0..heads {
                    let r = h * d..(h + 1) * d;
                    dalpha[(e - lo) * heads + h] = dot4(&g_i[r.clone()], &xl_j[r.clone()]);
                    axpy(&mut dxl_j[r.clone()], alpha.get(e, h), &g_i[r]);
                }
            }
            for (h, s) in ds.iter_mut().enumerate() {
                *s = (lo..hi).map(|e| alpha.get(e, h) * dalpha[(e - lo) * heads + h]).sum();
            }
            let xr_i = vr.row(i);
            for e in lo..hi {
                let j = edges.src[e] as usize;
                let xl_j = vl.row(j);
                for h in 0..heads {
                    let de = alpha.get(e, h) * (dalpha[(e - lo) * heads + h] - ds[h]);
                    if de == 0.0 {
                        continue;
                    }
                    let r = h * d..(h + 1) * d;
                    let (dxl_j, dxr_i) = (&mut dxl.row_mut(j)[r.clone()], &mut dxr.row_mut(i)[r.clone()]);
                    let it = xl_j[r.clone()].iter().zip(&xr_i[r.clone()]).zip(&att_v[r.clone()]);
                    for ((((xl, xr), at), ta), (gl, gr)) in it.zip(&mut datt[r]).zip(dxl_j.iter_mut().zip(dxr_i.iter_mut())) {
                        let z = xl + xr;
                        let dl = if z > 0.0 { 1.0 } else { slope };
                        *ta += de * z * dl;
                        let dz = de * at * dl;
                        *gl += dz;
                        *gr += dz;
                    }
                }
            }
        }
        self.accumulate(grads, xl, dxl);
        self.accumulate(grads, xr, dxr);
        if let Some(ga) = self.grad_slot(grads, att) {
            for (x, y) in ga.data_mut().iter_mut().zip(&datt) {
                *x += y;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn dot_attention_backward(
        &self,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        (q, k, v): (Var, Var, Var),
        edges: &EdgeList,
        heads: usize,
        scale: f64,
        alpha: &Tensor,
    ) {
        let (vq, vk, vv) = (&self.nodes[q.0].value, &self.nodes[k.0].value, &self.nodes[v.0].value);
        let hd = vq.cols();
        let d = hd / heads;
        let mut dq = Tensor::zeros(vq.rows(), hd);
        let mut dk = Tensor::zeros(vk.rows(), hd);
        let mut dv = Tensor::zeros(vv.rows(), hd);
        let mut ds = vec![0.0; heads];
        let mut dalpha: Vec<f64> = Vec::new();
        for i in 0..edges.n_nodes {
            let (lo, hi) = (edges.offsets[i], edges.offsets[i + 1]);
            let g_i = g.row(i);
            dalpha.clear();
            dalpha.resize((hi - lo) * heads, 0.0);
            for e in lo..hi {
                let j = edges.src[e] as usize;
                let v_j = vv.row(j);
                let dv_j = dv.row_mut(j);
                for h in 0..heads {
                    let r = h * d..(h + 1) * d;
                    dalpha[(e - lo) * heads + h] = dot4(&g_i[r.clone()], &v_j[r.clone()]);
                    axpy(&mut dv_j[r.clone()], alpha.get(e, h), &g_i[r]);
                }
            }
            for (h, s) in ds.iter_mut().enumerate() {
                *s = (lo..hi).map(|e| alpha.get(e, h) * dalpha[(e - lo) * heads + h]).sum();
            }
            let q_i = vq.row(i);
            for e in lo..hi {
                let j = edges.src[e] as usize;
                let k_j = vk.row(j);
                for h in 0..heads {
                    let de = alpha.get(e, h) * (dalpha[(e - lo) * heads + h] - ds[h]) * scale;
                    if de == 0.0 {
                        continue;
                    }
                    let r = h * d..(h + 1) * d;
                    axpy(&mut dq.row_mut(i)[r.clone()], de, &k_j[r.clone()]);
                    axpy(&mut dk.row_mut(j)[r.clone()], de, &q_i[r]);
                }
            }
        }
        for (var, t) in [(q, dq), (k, dk), (v, dv)] {
            self.accumulate(grads, var, t);
        }
    }
}

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// `Σ aᵢbᵢ` with four partial sums so the loop vectorizes.
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `Σ attᵢ·LeakyReLU(aᵢ + bᵢ)`; `max(z, slope·z)` needs `slope < 1`.
fn leaky_score(a: &[f64], b: &[f64], att: &[f64], slope: f64) -> f64 {
    let mut acc = [0.0; 4];
    let mut tail = 0.0;
    let n4 = a.len() / 4 * 4;
    for c in (0..n4).step_by(4) {
        for k in 0..4 {
            let z = a[c + k] + b[c + k];
            acc[k] += att[c + k] * z.max(slope * z);
        }
    }
    for c in n4..a.len() {
        let z = a[c] + b[c];
        tail += att[c] * z.max(slope * z);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// In-place softmax over rows `lo..hi` of column `col` in a row-major buffer.
fn softmax_strided(data: &mut [f64], lo: usize, hi: usize, cols: usize, col: usize) {
    if lo == hi {
        return;
    }
    let max = (lo..hi).map(|r| data[r * cols + col]).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for r in lo..hi {
        let e = (data[r * cols + col] - max).exp();
        data[r * cols + col] = e;
        sum += e;
    }
    for r in lo..hi {
        data[r * cols + col] /= sum;
    }
}

fn check_edges(edges: &EdgeList, nodes: usize) -> Result<(), NnError> {
    if edges.n_nodes != nodes {
        return Err(NnError::Shape(format!(
            "edge list over {} nodes applied to {nodes} rows",
            edges.n_nodes
        )));
    }
    if let Some(i) = (0..nodes).find(|&i| edges.offsets[i] == edges.offsets[i + 1]) {
        return Err(NnError::Graph(format!("node {i} has an empty neighbourhood")));
    }
    Ok(())
}

/// Real `2c_in × 2c_out` form `[[S_re, S_im], [−S_im, S_re]]` of one
/// complex kernel, so that `[F_re | F_im] · M = [Y_re | Y_im]`.
fn real_form(sr: &[f64], si: &[f64], cin: usize, cout: usize) -> Vec<f64> {
    let w = 2 * cout;
    let mut m = vec![0.0; 2 * cin * w];
    for a in 0..cin {
        let (s, i) = (&sr[a * cout..(a + 1) * cout], &si[a * cout..(a + 1) * cout]);
        m[a * w..a * w + cout].copy_from_slice(s);
        m[a * w + cout..(a + 1) * w].copy_from_slice(i);
        let lo = (cin + a) * w;
        for b in 0..cout {
            m[lo + b] = -i[b];
        }
        m[lo + cout..lo + w].copy_from_slice(s);
    }
    m
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_blocks(x: &Tensor, n: usize, dir: FftDirection, scale: f64) -> Tensor {
    let cols2 = x.cols();
    let c = cols2 / 2;
    let blocks = x.rows() / n;
    let mut buf = vec![Complex::new(0.0, 0.0); blocks * c * n];
    for b in 0..blocks {
        for k in 0..n {
            let row = x.row(b * n + k);
            for j in 0..c {
                buf[(b * c + j) * n + k] = Complex::new(row[j], row[c + j]);
            }
        }
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft(n, dir));
    if !buf.is_empty() {
        plan.process(&mut buf);
    }
    let mut out = Tensor::zeros(x.rows(), cols2);
    for b in 0..blocks {
        for k in 0..n {
            let row = out.row_mut(b * n + k);
            for j in 0..c {
                let z = buf[(b * c + j) * n + k];
                row[j] = z.re * scale;
                row[c + j] = z.im * scale;
            }
        }
    }
    out
}
