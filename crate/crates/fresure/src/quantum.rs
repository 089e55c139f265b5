//! Dense complex linear algebra for few-qubit operators.
//!
//! Everything here works on full 2^N x 2^N matrices (N <= 4). Unitary
//! evolution goes through a Hermitian eigendecomposition so the eigensystem of
//! a Hamiltonian can be computed once and reused across a whole time grid.

use crate::error::{Error, Result};
use num_complex::Complex;

pub type C64 = Complex<f64>;

const ZERO: C64 = Complex::new(0.0, 0.0);
const ONE: C64 = Complex::new(1.0, 0.0);

/// Pauli axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Dense square complex matrix in row-major storage.
///
/// Dimensions are restricted to powers of two so instances always represent
/// operators on a register of qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries. `data.len()` must be `dim^2`
    /// and `dim` a power of two.
    pub fn new(dim: usize, data: Vec<C64>) -> Result<Self> {
        if !dim.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "matrix dimension {dim} is not a power of two"
            )));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    /// Diagonal matrix from real entries.
    pub fn from_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * dim + i] = Complex::new(d, 0.0);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn scale_re(&self, factor: f64) -> Self {
        self.scale(Complex::new(factor, 0.0))
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    /// Kronecker product; `self` occupies the most significant qubits.
    pub fn kron(&self, other: &Self) -> Self {
        let (na, nb) = (self.dim, other.dim);
        let n = na * nb;
        let mut out = Self::zeros(n);
        for i in 0..na {
            for j in 0..na {
                let a = self.data[i * na + j];
                if a == ZERO {
                    continue;
                }
                for k in 0..nb {
                    for l in 0..nb {
                        out.data[(i * nb + k) * n + (j * nb + l)] = a * other.data[k * nb + l];
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Relative deviation from Hermiticity, `||A - A^dag||_F / max(1, ||A||_F)`.
    pub fn hermiticity_residual(&self) -> f64 {
        self.sub(&self.dagger()).frobenius_norm() / self.frobenius_norm().max(1.0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() < tol
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }
}

/// Single-qubit Pauli matrix.
pub fn pauli(axis: Axis) -> ComplexMatrix {
    let i = Complex::new(0.0, 1.0);
    let data = match axis {
        Axis::X => vec![ZERO, ONE, ONE, ZERO],
        Axis::Y => vec![ZERO, -i, i, ZERO],
        Axis::Z => vec![ONE, ZERO, ZERO, -ONE],
    };
    ComplexMatrix { dim: 2, data }
}

/// Embeds a single-qubit Pauli operator into an N-qubit register,
/// `I (x) ... (x) sigma_axis (x) ... (x) I` with the operator at position
/// `target` (1-based) and qubit 1 as the most significant bit.
pub fn pauli_embed(axis: Axis, target: usize, nqubits: usize) -> Result<ComplexMatrix> {
    if target == 0 || target > nqubits || nqubits == 0 || nqubits > 4 {
        return Err(Error::TargetOutOfRange { target, nqubits });
    }
    let mut out = if target == 1 {
        pauli(axis)
    } else {
        ComplexMatrix::identity(2)
    };
    for q in 2..=nqubits {
        let factor = if q == target {
            pauli(axis)
        } else {
            ComplexMatrix::identity(2)
        };
        out = out.kron(&factor);
    }
    Ok(out)
}

/// Hermiticity tolerance used when validating eigensolver inputs and density
/// matrices.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns eigenvalues in ascending order and the unitary matrix
/// of eigenvectors (as columns), so `A = V diag(lambda) V^dag`.
///
/// Robust and fully accurate at the dimensions used here (<= 16).
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let residual = a.hermiticity_residual();
    if residual >= HERMITICITY_TOL {
        return Err(Error::NotHermitian { residual });
    }
    let n = a.dim;
    // Work on the Hermitian average to scrub rounding-level asymmetry.
    let mut b = a.add(&a.dagger()).scale_re(0.5);
    let mut v = ComplexMatrix::identity(n);

    let norm = b.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * norm;

    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += b.get(p, q).norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = b.get(p, q);
                let m = apq.norm();
                if m <= 1e-300 {
                    continue;
                }
                let app = b.get(p, p).re;
                let aqq = b.get(q, q).re;
                // Phase that makes the off-diagonal element real, then a
                // standard symmetric Jacobi rotation angle.
                let phase = apq / m;
                let tau = (aqq - app) / (2.0 * m);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary G = diag(1, conj(phase)) * [[c, s], [-s, c]].
                let g_pp = Complex::new(c, 0.0);
                let g_pq = Complex::new(s, 0.0);
                let g_qp = phase.conj() * (-s);
                let g_qq = phase.conj() * c;

                // B <- G^dag B G applied as row then column updates.
                for j in 0..n {
                    let bp = b.get(p, j);
                    let bq = b.get(q, j);
                    b.set(p, j, g_pp.conj() * bp + g_qp.conj() * bq);
                    b.set(q, j, g_pq.conj() * bp + g_qq.conj() * bq);
                }
                for i in 0..n {
                    let bp = b.get(i, p);
                    let bq = b.get(i, q);
                    b.set(i, p, bp * g_pp + bq * g_qp);
                    b.set(i, q, bp * g_pq + bq * g_qq);
                }
                for i in 0..n {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, vp * g_pp + vq * g_qp);
                    v.set(i, q, vp * g_pq + vq * g_qq);
                }
                // The pivot pair is now diagonal up to rounding.
                b.set(p, q, ZERO);
                b.set(q, p, ZERO);
                let dp = b.get(p, p).re;
                let dq = b.get(q, q).re;
                b.set(p, p, Complex::new(dp, 0.0));
                b.set(q, q, Complex::new(dq, 0.0));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| b.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, new_col, v.get(row, old_col));
        }
    }
    Ok((eigenvalues, vectors))
}

/// Cached eigensystem of a Hamiltonian, reused across a time grid.
#[derive(Debug, Clone)]
pub struct HamiltonianEigen {
    pub eigenvalues: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HamiltonianEigen {
    pub fn new(hamiltonian: &ComplexMatrix) -> Result<Self> {
        let (eigenvalues, vectors) = hermitian_eig(hamiltonian)?;
        Ok(Self {
            eigenvalues,
            vectors,
        })
    }

    /// `U(t) = exp(-i t H)`.
    pub fn propagator(&self, t_s: f64) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let mut phases = ComplexMatrix::zeros(n);
        for (i, &lambda) in self.eigenvalues.iter().enumerate() {
            phases.set(i, i, Complex::from_polar(1.0, -lambda * t_s));
        }
        self.vectors.matmul(&phases).matmul(&self.vectors.dagger())
    }

    /// Transforms an operator into the eigenbasis, `V^dag M V`.
    pub fn to_eigenbasis(&self, m: &ComplexMatrix) -> ComplexMatrix {
        self.vectors.dagger().matmul(&m.matmul(&self.vectors))
    }

    /// Unitary evolution of a density matrix under this Hamiltonian.
    pub fn evolve(&self, rho: &DensityMatrix, t_s: f64) -> Result<DensityMatrix> {
        if rho.matrix().dim() != self.eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: self.eigenvalues.len(),
                found: rho.matrix().dim(),
            });
        }
        let u = self.propagator(t_s);
        let evolved = u.matmul(rho.matrix()).matmul(&u.dagger());
        // Unitary similarity preserves the density-matrix invariants.
        Ok(DensityMatrix::from_matrix_unchecked(evolved, rho.nqubits()))
    }
}

/// Quantum state of an N-qubit register: Hermitian, unit trace, positive
/// semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    nqubits: usize,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positive semidefiniteness.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let dim = matrix.dim();
        let nqubits = dim.trailing_zeros() as usize;
        let herm = matrix.hermiticity_residual();
        if herm >= HERMITICITY_TOL {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("not Hermitian (residual {herm:.3e})"),
            });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("trace {tr} differs from 1"),
            });
        }
        let (eigenvalues, _) = hermitian_eig(&matrix)?;
        if let Some(&min) = eigenvalues.first() {
            if min < -1e-10 {
                return Err(Error::InvalidDensityMatrix {
                    reason: format!("negative eigenvalue {min:.3e}"),
                });
            }
        }
        Ok(Self { matrix, nqubits })
    }

    /// Wraps a matrix known to satisfy the invariants (e.g. the image of a
    /// valid state under a unitary).
    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix, nqubits: usize) -> Self {
        Self { matrix, nqubits }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn nqubits(&self) -> usize {
        self.nqubits
    }

    pub fn purity(&self) -> f64 {
        self.matrix.matmul(&self.matrix).trace().re
    }
}

/// Unitary evolution `U rho U^dag` with `U = exp(-i t H)`, `H` in rad/s.
pub fn evolve(
    rho0: &DensityMatrix,
    hamiltonian: &ComplexMatrix,
    t_s: f64,
) -> Result<DensityMatrix> {
    if hamiltonian.dim() != rho0.matrix().dim() {
        return Err(Error::DimensionMismatch {
            expected: rho0.matrix().dim(),
            found: hamiltonian.dim(),
        });
    }
    HamiltonianEigen::new(hamiltonian)?.evolve(rho0, t_s)
}

/// `Re Tr(rho O)` for a Hermitian observable `O`.
pub fn expectation(rho: &DensityMatrix, observable: &ComplexMatrix) -> Result<f64> {
    rho.matrix().check_same_dim(observable)?;
    let n = observable.dim();
    let mut tr = ZERO;
    for i in 0..n {
        for k in 0..n {
            tr += rho.matrix().get(i, k) * observable.get(k, i);
        }
    }
    debug_assert!(
        tr.im.abs() < 1e-10,
        "expectation of Hermitian observable has imaginary part {:.3e}",
        tr.im
    );
    Ok(tr.re)
}

/// Partial trace over the last (least significant) qubit.
pub fn trace_out_last_qubit(rho: &DensityMatrix) -> ComplexMatrix {
    let half = rho.matrix().dim() / 2;
    let mut out = ComplexMatrix::zeros(half);
    for i in 0..half {
        for j in 0..half {
            let sum = rho.matrix().get(2 * i, 2 * j) + rho.matrix().get(2 * i + 1, 2 * j + 1);
            out.set(i, j, sum);
        }
    }
    out
}
