//! Dense and sparse complex operators.
//!
//! Operators are built densely ([`Operator`]); time propagation goes through
//! [`SparseOp`], a compressed-row copy that only stores nonzero entries.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Operator = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(dim: usize) -> Operator {
    Operator::identity(dim, dim)
}

pub fn pauli_x() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> Operator {
    Operator::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `|1><0|`, the raising operator of a qubit (`|0>` = ground).
pub fn sigma_plus() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

/// `|0><1|`.
pub fn sigma_minus() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

/// Truncated bosonic annihilation operator on `d` levels.
pub fn annihilation(d: usize) -> Operator {
    let mut a = Operator::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

pub fn kron_all<'a>(ops: impl IntoIterator<Item = &'a Operator>) -> Operator {
    let mut it = ops.into_iter();
    let first = it.next().cloned().unwrap_or_else(|| identity(1));
    it.fold(first, |acc, op| acc.kronecker(op))
}

pub fn dagger(a: &Operator) -> Operator {
    a.adjoint()
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

pub fn max_abs(a: &Operator) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Largest entry of `|A - A^dagger|`.
pub fn hermiticity_error(a: &Operator) -> f64 {
    let mut err = 0.0f64;
    for r in 0..a.nrows() {
        for c in r..a.ncols() {
            err = err.max((a[(r, c)] - a[(c, r)].conj()).norm());
        }
    }
    err
}

pub fn is_hermitian(a: &Operator, tol: f64) -> bool {
    a.is_square() && hermiticity_error(a) <= tol
}

pub fn trace(a: &Operator) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn frobenius(a: &Operator) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Trace norm of `A - B` for Hermitian arguments: half the sum of absolute
/// eigenvalues of the difference.
pub fn trace_distance(a: &Operator, b: &Operator) -> f64 {
    let diff = a - b;
    let herm = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
    hermitian_eigenvalues(&herm).iter().map(|v| v.abs()).sum::<f64>() * 0.5
}

/// Sorted (ascending) real eigenvalues of a Hermitian operator.
pub fn hermitian_eigenvalues(a: &Operator) -> Vec<f64> {
    let n = a.nrows();
    let m = faer::Mat::<C64>::from_fn(n, n, |r, c| a[(r, c)]);
    m.self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("self-adjoint eigenvalue iteration did not converge")
}

/// `exp(-i * h * tau)` by scaling-and-squaring Pade approximation.
pub fn unitary_exp(h: &Operator, tau: f64) -> Operator {
    (h * C64::new(0.0, -tau)).exp()
}

/// Compressed sparse row operator.
#[derive(Debug, Clone)]
pub struct SparseOp {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOp {
    pub fn from_dense(a: &Operator) -> Self {
        Self::from_dense_tol(a, 0.0)
    }

    pub fn from_dense_tol(a: &Operator, tol: f64) -> Self {
        assert!(a.is_square());
        let dim = a.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..dim {
            for c in 0..dim {
                let v = a[(r, c)];
                if v.norm() > tol {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `sqrt(max row sum * max column sum)` of absolute values, an upper
    /// bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        let mut col = vec![0.0; self.dim];
        let mut row_max: f64 = 0.0;
        for r in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = self.vals[k].norm();
                acc += v;
                col[self.cols[k]] += v;
            }
            row_max = row_max.max(acc);
        }
        let col_max = col.into_iter().fold(0.0, f64::max);
        (row_max * col_max).sqrt()
    }

    pub fn to_dense(&self) -> Operator {
        let mut out = Operator::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[(r, self.cols[k])] += self.vals[k];
            }
        }
        out
    }

    /// Dense `A^dagger A`.
    pub fn gram(&self) -> Operator {
        let mut out = Operator::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            let row = self.row_ptr[r]..self.row_ptr[r + 1];
            for a in row.clone() {
                let left = self.vals[a].conj();
                for b in row.clone() {
                    out[(self.cols[a], self.cols[b])] += left * self.vals[b];
                }
            }
        }
        out
    }

    /// `out += alpha * A * x` for a dense column-major `x`.
    pub fn left_mul_acc(&self, alpha: C64, x: &Operator, out: &mut Operator) {
        let n = self.dim;
        let ncols = x.ncols();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for j in 0..ncols {
            let xc = &xs[j * n..(j + 1) * n];
            let oc = &mut os[j * n..(j + 1) * n];
            for r in 0..n {
                let mut acc = ZERO;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[k] * xc[self.cols[k]];
                }
                oc[r] += alpha * acc;
            }
        }
    }

    /// `out += alpha * x * A^dagger` for a dense column-major `x`.
    pub fn right_mul_adjoint_acc(&self, alpha: C64, x: &Operator, out: &mut Operator) {
        let n = self.dim;
        let nrows = x.nrows();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        // column j of x A^dagger = sum_c conj(A[j, c]) * x[:, c]
        for j in 0..n {
            let oc = &mut os[j * nrows..(j + 1) * nrows];
            for k in self.row_ptr[j]..self.row_ptr[j + 1] {
                let w = alpha * self.vals[k].conj();
                let xc = &xs[self.cols[k] * nrows..(self.cols[k] + 1) * nrows];
                for (o, v) in oc.iter_mut().zip(xc) {
                    *o += w * v;
                }
            }
        }
    }

    /// `out += alpha * x * A`.
    pub fn right_mul_acc(&self, alpha: C64, x: &Operator, out: &mut Operator) {
        let n = self.dim;
        let nrows = x.nrows();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        // row r of A scatters x[:, r] * A[r, c] into column c
        for r in 0..n {
            let xc = &xs[r * nrows..(r + 1) * nrows];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let w = alpha * self.vals[k];
                let c = self.cols[k];
                let oc = &mut os[c * nrows..(c + 1) * nrows];
                for (o, v) in oc.iter_mut().zip(xc) {
                    *o += w * v;
                }
            }
        }
    }

    pub fn left_mul(&self, x: &Operator) -> Operator {
        let mut out = Operator::zeros(self.dim, x.ncols());
        self.left_mul_acc(ONE, x, &mut out);
        out
    }

    pub fn right_mul(&self, x: &Operator) -> Operator {
        let mut out = Operator::zeros(x.nrows(), self.dim);
        self.right_mul_acc(ONE, x, &mut out);
        out
    }

    pub fn right_mul_adjoint(&self, x: &Operator) -> Operator {
        let mut out = Operator::zeros(x.nrows(), self.dim);
        self.right_mul_adjoint_acc(ONE, x, &mut out);
        out
    }
}

/// Embeds an operator acting on the listed subsystems (in ascending order)
/// into the full tensor-product space with the given local dimensions.
/// Subsystem 0 is the most significant factor.
pub fn embed(dims: &[usize], targets: &[usize], local: &Operator) -> Operator {
    debug_assert!(targets.windows(2).all(|w| w[0] < w[1]));
    let local_dim: usize = targets.iter().map(|&t| dims[t]).product();
    assert_eq!(local.nrows(), local_dim, "local operator dimension mismatch");
    let total: usize = dims.iter().product();
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let local_index = |full: usize| -> usize {
        targets
            .iter()
            .fold(0usize, |acc, &t| acc * dims[t] + (full / strides[t]) % dims[t])
    };
    let with_local = |full: usize, mut loc: usize| -> usize {
        let mut idx = full;
        for &t in targets.iter().rev() {
            let digit = loc % dims[t];
            loc /= dims[t];
            let old = (full / strides[t]) % dims[t];
            idx = idx - old * strides[t] + digit * strides[t];
        }
        idx
    };
    let mut out = Operator::zeros(total, total);
    for col in 0..total {
        let lc = local_index(col);
        for lr in 0..local_dim {
            let v = local[(lr, lc)];
            if v != ZERO {
                out[(with_local(col, lr), col)] += v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_matches_kron() {
        let dims = [2, 3, 2];
        let a = annihilation(3);
        let full = embed(&dims, &[1], &a);
        let expect = kron_all([&identity(2), &a, &identity(2)]);
        assert!(max_abs(&(full - expect)) < 1e-15);

        let two = kron(&pauli_x(), &pauli_y());
        let full = embed(&dims, &[0, 2], &two);
        let expect = kron_all([&pauli_x(), &identity(3), &pauli_y()]);
        assert!(max_abs(&(full - expect)) < 1e-15);
    }

    #[test]
    fn sparse_products_match_dense() {
        let dims = [2, 2, 3];
        let a = embed(&dims, &[0, 2], &kron(&sigma_plus(), &annihilation(3)))
            + embed(&dims, &[1], &pauli_y());
        let x = Operator::from_fn(12, 12, |r, c| C64::new((r * 3 + c) as f64 * 0.1, (r as f64 - c as f64) * 0.05));
        let s = SparseOp::from_dense(&a);
        assert!(max_abs(&(s.left_mul(&x) - &a * &x)) < 1e-12);
        assert!(max_abs(&(s.right_mul(&x) - &x * &a)) < 1e-12);
        assert!(max_abs(&(s.right_mul_adjoint(&x) - &x * a.adjoint())) < 1e-12);
        assert!(max_abs(&(s.gram() - a.adjoint() * &a)) < 1e-12);
        assert!(max_abs(&(s.to_dense() - a)) < 1e-15);
    }

    #[test]
    fn unitary_exp_of_pauli() {
        let u = unitary_exp(&pauli_x(), 0.3);
        let expect = identity(2) * C64::new(0.3f64.cos(), 0.0) - pauli_x() * (I * 0.3f64.sin());
        assert!(max_abs(&(u - expect)) < 1e-14);
    }

    #[test]
    fn trace_distance_of_orthogonal_states() {
        let p0 = Operator::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]);
        let p1 = Operator::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]);
        assert!((trace_distance(&p0, &p1) - 1.0).abs() < 1e-14);
    }
}
