use std::rc::Rc;

use rand::Rng;

use super::graph::{Blocks, EdgeList};
use super::{NnError, Tape, Tensor, Var, ZERO_ROW};

/// Named, ordered parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Puts every tensor on the tape, as leaves or as constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    /// Replaces all values; names and shapes must match.
    pub fn load(&mut self, other: &Params) -> Result<(), NnError> {
        if self.names != other.names {
            return Err(NnError::Checkpoint("parameter names differ".into()));
        }
        for (name, (a, b)) in self.names.iter().zip(self.tensors.iter().zip(&other.tensors)) {
            if a.shape() != b.shape() {
                return Err(NnError::Checkpoint(format!(
                    "parameter {name}: shape {:?} against {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }

    pub(crate) fn from_parts(names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        Self { names, tensors }
    }
}

fn zeros_row(n: usize) -> Tensor {
    Tensor::zeros(1, n)
}

/// `x·W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    w: usize,
    b: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(params: &mut Params, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: params.add(format!("{name}.weight"), Tensor::glorot(in_dim, out_dim, rng)),
            b: params.add(format!("{name}.bias"), zeros_row(out_dim)),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var, NnError> {
        let y = tape.matmul(x, p[self.w])?;
        tape.add_row(y, p[self.b])
    }
}

/// Chebyshev spectral convolution `Σ_k T_k(L̃)·X·Θ_k + b`, `k = 0..=degree`.
#[derive(Debug, Clone)]
pub struct ChebConv {
    theta: usize,
    bias: usize,
    pub degree: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl ChebConv {
    pub fn new(
        params: &mut Params,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        degree: usize,
        rng: &mut impl Rng,
    ) -> Self {
        // Θ_0..Θ_K stacked row-wise, each initialized on its own fan
        let mut theta = Vec::with_capacity((degree + 1) * in_dim * out_dim);
        for _ in 0..=degree {
            theta.extend(Tensor::glorot(in_dim, out_dim, rng).into_vec());
        }
        Self {
            theta: params.add(
                format!("{name}.theta"),
                Tensor::from_vec((degree + 1) * in_dim, out_dim, theta),
            ),
            bias: params.add(format!("{name}.bias"), zeros_row(out_dim)),
            degree,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, lap: &Rc<Blocks>) -> Result<Var, NnError> {
        let terms = chebyshev_terms(tape, x, lap, self.degree)?;
        let cat = tape.concat_cols(&terms)?;
        let y = tape.matmul(cat, p[self.theta])?;
        tape.add_row(y, p[self.bias])
    }
}

/// `[T_0(L̃)X, …, T_K(L̃)X]` by `T_k = 2L̃T_{k−1} − T_{k−2}`.
pub fn chebyshev_terms(tape: &mut Tape, x: Var, lap: &Rc<Blocks>, degree: usize) -> Result<Vec<Var>, NnError> {
    let mut terms = vec![x];
    if degree >= 1 {
        terms.push(tape.block_matmul(lap.clone(), x)?);
    }
    for k in 2..=degree {
        let lt = tape.block_matmul(lap.clone(), terms[k - 1])?;
        let two = tape.scale(lt, 2.0);
        terms.push(tape.sub(two, terms[k - 2])?);
    }
    Ok(terms)
}

pub const GAT_SLOPE: f64 = 0.2;

/// GATv2 convolution with `heads` attention heads of width `out_dim`,
/// concatenated or averaged.
#[derive(Debug, Clone)]
pub struct GatV2Conv {
    w_src: usize,
    w_dst: usize,
    att: usize,
    bias: usize,
    pub heads: usize,
    pub out_dim: usize,
    pub concat: bool,
}

impl GatV2Conv {
    pub fn new(
        params: &mut Params,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        concat: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let hd = heads * out_dim;
        Self {
            w_src: params.add(format!("{name}.w_src"), Tensor::glorot(in_dim, hd, rng)),
            w_dst: params.add(format!("{name}.w_dst"), Tensor::glorot(in_dim, hd, rng)),
            att: params.add(
                format!("{name}.att"),
                Tensor::glorot(heads, out_dim, rng).reshaped(1, hd),
            ),
            bias: params.add(format!("{name}.bias"), zeros_row(if concat { hd } else { out_dim })),
            heads,
            out_dim,
            concat,
        }
    }

    /// Also returns the attention node, whose saved coefficients are
    /// available through [`Tape::saved_attention`].
    pub fn forward_with_attention(
        &self,
        tape: &mut Tape,
        p: &[Var],
        x: Var,
        edges: &Rc<EdgeList>,
    ) -> Result<(Var, Var), NnError> {
        let xl = tape.matmul(x, p[self.w_src])?;
        let xr = tape.matmul(x, p[self.w_dst])?;
        let a = tape.gatv2_attention(xl, xr, p[self.att], edges.clone(), self.heads, GAT_SLOPE)?;
        let y = if self.concat { a } else { tape.mean_heads(a, self.heads)? };
        Ok((tape.add_row(y, p[self.bias])?, a))
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, edges: &Rc<EdgeList>) -> Result<Var, NnError> {
        Ok(self.forward_with_attention(tape, p, x, edges)?.0)
    }
}

/// Graph transformer convolution: `W1·h_i + Σ_j α_ij W2·h_j` with
/// `α_ij = softmax_j((W3 h_i)·(W4 h_j)/√d)` per head.
#[derive(Debug, Clone)]
pub struct TransformerConv {
    pub root: Linear,
    pub value: Linear,
    pub query: Linear,
    pub key: Linear,
    pub heads: usize,
    pub out_dim: usize,
    pub concat: bool,
}

impl TransformerConv {
    pub fn new(
        params: &mut Params,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        concat: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let hd = heads * out_dim;
        Self {
            root: Linear::new(params, &format!("{name}.root"), in_dim, if concat { hd } else { out_dim }, rng),
            value: Linear::new(params, &format!("{name}.value"), in_dim, hd, rng),
            query: Linear::new(params, &format!("{name}.query"), in_dim, hd, rng),
            key: Linear::new(params, &format!("{name}.key"), in_dim, hd, rng),
            heads,
            out_dim,
            concat,
        }
    }

    pub fn forward_with_attention(
        &self,
        tape: &mut Tape,
        p: &[Var],
        x: Var,
        edges: &Rc<EdgeList>,
    ) -> Result<(Var, Var), NnError> {
        let q = self.query.forward(tape, p, x)?;
        let k = self.key.forward(tape, p, x)?;
        let v = self.value.forward(tape, p, x)?;
        let scale = 1.0 / (self.out_dim as f64).sqrt();
        let a = tape.dot_attention(q, k, v, edges.clone(), self.heads, scale)?;
        let y = if self.concat { a } else { tape.mean_heads(a, self.heads)? };
        let r = self.root.forward(tape, p, x)?;
        Ok((tape.add(y, r)?, a))
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, edges: &Rc<EdgeList>) -> Result<Var, NnError> {
        Ok(self.forward_with_attention(tape, p, x, edges)?.0)
    }
}

/// Imaginary residue above this is a numerical-consistency error.
pub const FGO_RESIDUE_ERROR: f64 = 1e-6;

/// `IDFT(DFT(H) ⊙ S)` per block of `n` rows, real part.
///
/// `s_re`/`s_im` hold one flattened `d_in × d_out` operator per frequency.
/// Fails when the discarded imaginary part exceeds [`FGO_RESIDUE_ERROR`].
pub fn fourier_operator(tape: &mut Tape, h: Var, s_re: Var, s_im: Var) -> Result<Var, NnError> {
    let n = tape.value(s_re).rows();
    let (rows, d_in) = tape.value(h).shape();
    let zeros = tape.constant(Tensor::zeros(rows, d_in));
    let hc = tape.concat_cols(&[h, zeros])?;
    let f = tape.dft(hc, n, false)?;
    let y = tape.freq_matmul(f, s_re, s_im)?;
    let back = tape.dft(y, n, true)?;
    let d_out = tape.value(back).cols() / 2;
    let residue = tape.value(back).data().chunks(2 * d_out).flat_map(|r| &r[d_out..]).fold(0.0f64, |m, v| m.max(v.abs()));
    if residue >= FGO_RESIDUE_ERROR {
        return Err(NnError::Numerical(format!(
            "Fourier operator left an imaginary residue of {residue:e}"
        )));
    }
    if residue >= 1e-9 {
        log::debug!("Fourier operator imaginary residue {residue:e}");
    }
    tape.slice_cols(back, 0..d_out)
}

/// Fourier graph operator on the fully connected hypervariate graph of
/// `n` nodes. The frequency operator is kept Hermitian (`S_{n−k} = conj S_k`)
/// so that real inputs give real outputs; only `n/2 + 1` frequencies are free.
#[derive(Debug, Clone)]
pub struct FgoLayer {
    half_re: usize,
    half_im: usize,
    bias: usize,
    gather: Rc<[u32]>,
    sign: Rc<Tensor>,
    pub n: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl FgoLayer {
    pub fn new(params: &mut Params, name: &str, n: usize, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let m = n / 2 + 1;
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut init = |_: usize, _: usize| rng.random_range(-bound..bound);
        let re = Tensor::from_fn(m, in_dim * out_dim, &mut init);
        let im = Tensor::from_fn(m, in_dim * out_dim, &mut init);
        let gather: Rc<[u32]> = (0..n).map(|k| k.min(n - k) as u32).collect();
        let sign = Tensor::from_fn(n, in_dim * out_dim, |k, _| {
            if k == 0 || 2 * k == n {
                0.0
            } else if k < n - k {
                1.0
            } else {
                -1.0
            }
        });
        Self {
            half_re: params.add(format!("{name}.s_re"), re),
            half_im: params.add(format!("{name}.s_im"), im),
            bias: params.add(format!("{name}.bias"), zeros_row(out_dim)),
            gather,
            sign: Rc::new(sign),
            n,
            in_dim,
            out_dim,
        }
    }

    /// Full `n`-frequency operator `(S_re, S_im)`.
    pub fn operator(&self, tape: &mut Tape, p: &[Var]) -> Result<(Var, Var), NnError> {
        let s_re = tape.gather_rows(p[self.half_re], self.gather.clone())?;
        let im = tape.gather_rows(p[self.half_im], self.gather.clone())?;
        let sign = tape.constant((*self.sign).clone());
        let s_im = tape.mul(im, sign)?;
        Ok((s_re, s_im))
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], h: Var) -> Result<Var, NnError> {
        let (s_re, s_im) = self.operator(tape, p)?;
        let y = fourier_operator(tape, h, s_re, s_im)?;
        tape.add_row(y, p[self.bias])
    }
}

/// Row indices for shifting each length-`t` row segment by `shift` steps
/// with zero padding.
pub fn shift_index(rows: usize, t: usize, shift: isize) -> Rc<[u32]> {
    (0..rows)
        .map(|r| {
            let pos = (r % t) as isize + shift;
            if pos < 0 || pos >= t as isize {
                ZERO_ROW
            } else {
                (r as isize + shift) as u32
            }
        })
        .collect()
}
