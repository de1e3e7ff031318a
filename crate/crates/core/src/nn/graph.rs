//! Graph structure for the layers: destination-major edge lists and
//! normalized / scaled Laplacians.

/// Edges grouped by destination: the neighbours of node `i` are
/// `src[offsets[i]..offsets[i + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    pub n_nodes: usize,
    pub offsets: Vec<usize>,
    pub src: Vec<u32>,
}

impl EdgeList {
    /// Neighbourhoods `N(i) = {j : A(i, j) ≠ 0}` of a dense row-major `n × n`
    /// matrix. With `self_loops`, `i` is added to `N(i)` when missing.
    pub fn from_dense(a: &[f64], n: usize, self_loops: bool) -> Self {
        assert_eq!(a.len(), n * n);
        let mut offsets = Vec::with_capacity(n + 1);
        let mut src = Vec::new();
        offsets.push(0);
        for i in 0..n {
            for j in 0..n {
                if a[i * n + j] != 0.0 || (self_loops && i == j) {
                    src.push(j as u32);
                }
            }
            offsets.push(src.len());
        }
        Self {
            n_nodes: n,
            offsets,
            src,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn neighbours(&self, i: usize) -> &[u32] {
        &self.src[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Disjoint union; node ids of later lists are shifted.
    pub fn concat(lists: &[&EdgeList]) -> Self {
        let mut offsets = vec![0];
        let mut src = Vec::with_capacity(lists.iter().map(|l| l.n_edges()).sum());
        let mut shift = 0u32;
        for l in lists {
            let base = src.len();
            src.extend(l.src.iter().map(|s| s + shift));
            offsets.extend(l.offsets[1..].iter().map(|o| o + base));
            shift += l.n_nodes as u32;
        }
        Self {
            n_nodes: shift as usize,
            offsets,
            src,
        }
    }
}

/// Constant `n × n` row-major matrices applied blockwise by
/// [`Tape::block_matmul`](super::Tape::block_matmul).
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub n: usize,
    pub mats: Vec<Vec<f64>>,
}

/// `L = I − D^(−1/2)·A·D^(−1/2)` with `D = diag(A·1)`.
///
/// A node of zero degree is treated as carrying a unit self-loop.
pub fn normalized_laplacian(a: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    let mut inv_sqrt = vec![1.0; n];
    let mut isolated = vec![false; n];
    for i in 0..n {
        let deg: f64 = a[i * n..(i + 1) * n].iter().sum();
        if deg > 0.0 {
            inv_sqrt[i] = 1.0 / deg.sqrt();
        } else {
            log::warn!("node {i} is isolated; treating it as a degree-1 self-loop");
            isolated[i] = true;
        }
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let w = if isolated[i] && i == j { 1.0 } else { a[i * n + j] };
            let delta = if i == j { 1.0 } else { 0.0 };
            l[i * n + j] = delta - inv_sqrt[i] * w * inv_sqrt[j];
        }
    }
    l
}

/// `L̃ = 2L/λmax − I`.
pub fn scaled_laplacian(l: &[f64], n: usize, lambda_max: f64) -> Vec<f64> {
    let mut out: Vec<f64> = l.iter().map(|v| 2.0 * v / lambda_max).collect();
    for i in 0..n {
        out[i * n + i] -= 1.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMax {
    pub value: f64,
    pub iterations: usize,
    /// False when the bound 2 was used instead of an estimate.
    pub converged: bool,
}

/// Upper bound of the normalized Laplacian spectrum.
pub const LAMBDA_BOUND: f64 = 2.0;

/// Dominant eigenvalue of a symmetric positive semi-definite matrix.
///
/// Stops once the eigen-residual `‖Lv − λv‖` drops below `tol`. A zero
/// spectrum or an unconverged run falls back to [`LAMBDA_BOUND`].
pub fn power_iteration_lambda_max(l: &[f64], n: usize, tol: f64, max_iter: usize) -> LambdaMax {
    assert_eq!(l.len(), n * n);
    let fallback = |iterations, why: &str| {
        log::warn!("power iteration {why}; using lambda_max = {LAMBDA_BOUND}");
        LambdaMax {
            value: LAMBDA_BOUND,
            iterations,
            converged: false,
        }
    };
    if n == 0 {
        return fallback(0, "on an empty matrix");
    }
    // deterministic start with no symmetry to hide behind
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let mut w = vec![0.0; n];
    normalize(&mut v);
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        matvec(l, n, &v, &mut w);
        lambda = dot(&v, &w);
        let resid = residual(&v, &w, lambda);
        let norm = normalize(&mut w);
        if norm <= f64::EPSILON {
            return fallback(it, "found a zero spectrum");
        }
        if resid < tol {
            if lambda <= tol {
                return fallback(it, "found a zero spectrum");
            }
            return LambdaMax {
                value: lambda,
                iterations: it,
                converged: true,
            };
        }
        std::mem::swap(&mut v, &mut w);
    }
    // Slow geometric convergence (nearly equal top eigenvalues): finish with
    // Rayleigh-quotient steps from the current estimate, accepting only a
    // value at or above it since λmax bounds every Rayleigh quotient.
    if lambda > tol {
        if let Some(value) = rayleigh_refine(l, n, v, lambda, tol) {
            return LambdaMax {
                value,
                iterations: max_iter,
                converged: true,
            };
        }
    }
    fallback(max_iter, "did not converge")
}

fn rayleigh_refine(l: &[f64], n: usize, mut v: Vec<f64>, start: f64, tol: f64) -> Option<f64> {
    let mut w = vec![0.0; n];
    let mut mu = start;
    for _ in 0..20 {
        let mut m = l.to_vec();
        for i in 0..n {
            m[i * n + i] -= mu;
        }
        let mut x = solve(m, n, v.clone())?;
        normalize(&mut x);
        v = x;
        matvec(l, n, &v, &mut w);
        mu = dot(&v, &w);
        if residual(&v, &w, mu) < tol {
            return (mu >= start - tol).then_some(mu);
        }
    }
    None
}

/// Gaussian elimination with partial pivoting; `None` only for an exactly
/// singular pivot.
fn solve(mut m: Vec<f64>, n: usize, mut b: Vec<f64>) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &c| m[a * n + col].abs().total_cmp(&m[c * n + col].abs()))?;
        if m[piv * n + col] == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r * n + k] * b[k]).sum();
        b[r] = (b[r] - s) / m[r * n + r];
    }
    Some(b)
}

fn matvec(l: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = dot(&l[i * n..(i + 1) * n], v);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(v: &[f64], w: &[f64], lambda: f64) -> f64 {
    v.iter().zip(w).map(|(a, b)| (b - lambda * a).powi(2)).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Scaled Laplacian of one adjacency block, with λmax from power iteration.
pub fn scaled_laplacian_of(a: &[f64], n: usize) -> Vec<f64> {
    let l = normalized_laplacian(a, n);
    let lm = power_iteration_lambda_max(&l, n, 1e-9, 1000);
    scaled_laplacian(&l, n, lm.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_loops_only_gives_zero_laplacian_and_fallback() {
        let n = 4;
        let a: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
        let l = normalized_laplacian(&a, n);
        assert!(l.iter().all(|v| v.abs() < 1e-15));
        let lm = power_iteration_lambda_max(&l, n, 1e-9, 1000);
        assert!(!lm.converged);
        assert_eq!(lm.value, 2.0);
    }

    #[test]
    fn single_edge() {
        let a = [0.0, 1.0, 1.0, 0.0];
        let l = normalized_laplacian(&a, 2);
        assert_eq!(l, vec![1.0, -1.0, -1.0, 1.0]);
        let lm = power_iteration_lambda_max(&l, 2, 1e-9, 1000);
        assert!(lm.converged);
        assert!((lm.value - 2.0).abs() < 1e-9);
        let s = scaled_laplacian(&l, 2, lm.value);
        assert!((s[0] - 0.0).abs() < 1e-9 && (s[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn isolated_node_gets_unit_self_loop() {
        let a = [0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 2.0, 0.0];
        let l = normalized_laplacian(&a, 3);
        assert_eq!(l[0], 0.0);
        assert!((l[4] - 1.0).abs() < 1e-15 && (l[5] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_iteration_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 10;
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                a[i * n + i] = 1.0;
                for j in i + 1..n {
                    if rng.random_bool(0.4) {
                        let w = rng.random_range(0.1..1.0);
                        a[i * n + j] = w;
                        a[j * n + i] = w;
                    }
                }
            }
            let l = normalized_laplacian(&a, n);
            let lm = power_iteration_lambda_max(&l, n, 1e-9, 1000);
            let eig = DMatrix::from_row_slice(n, n, &l).symmetric_eigen();
            let want = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
            assert!(lm.converged);
            assert!((lm.value - want).abs() < 1e-8, "{} vs {want}", lm.value);
        }
    }

    #[test]
    fn edge_list_from_dense_and_concat() {
        let a = [1.0, 0.5, 0.0, 0.5, 0.0, 0.2, 0.0, 0.2, 1.0];
        let e = EdgeList::from_dense(&a, 3, false);
        assert_eq!(e.offsets, vec![0, 2, 4, 6]);
        assert_eq!(e.neighbours(1), &[0, 2]);
        let s = EdgeList::from_dense(&a, 3, true);
        assert_eq!(s.neighbours(1), &[0, 1, 2]);
        let c = EdgeList::concat(&[&e, &s]);
        assert_eq!(c.n_nodes, 6);
        assert_eq!(c.neighbours(4), &[3, 4, 5]);
        assert_eq!(c.neighbours(0), &[0, 1]);
    }
}
