//! Bloch-vector coefficients and dense Hermitian operators.
//!
//! A [`BlochVector`] stores the operator `A` as the real coefficient vector
//! `coeffs[i] = Tr(sigma_i A) / 2^k`, indexed by the base-4 Pauli word. With
//! this normalization `A = sum_i coeffs[i] sigma_i` reconstructs the operator
//! and the negativity measure `D(A)` is literally the L1 norm of `coeffs`.
//! Density matrices have `coeffs[0] = 1/2^k` and purity
//! `Tr(A^2) = 2^k sum_i coeffs[i]^2`.

use crate::error::{Error, Result};
use crate::pauli::{pauli_trace, PauliString};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Widest operator we will materialize as a dense matrix.
pub const MAX_DENSE_QUBITS: usize = 10;
/// Widest operator we will expand into a full 4^k coefficient vector.
pub const MAX_BLOCH_QUBITS: usize = 8;

/// Absolute tolerance for Hermiticity checks on constructed inputs.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// A dense `2^k x 2^k` complex Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    num_qubits: usize,
    matrix: DMatrix<Complex64>,
}

impl DenseOperator {
    /// Wrap a matrix, checking shape and Hermiticity.
    pub fn new(matrix: DMatrix<Complex64>) -> Result<DenseOperator> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim || dim == 0 || !dim.is_power_of_two() {
            return Err(Error::Shape {
                expected: "square matrix with power-of-two dimension".into(),
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let num_qubits = dim.trailing_zeros() as usize;
        if num_qubits > MAX_DENSE_QUBITS {
            return Err(Error::WidthCap {
                what: "dense operator",
                width: num_qubits,
                cap: MAX_DENSE_QUBITS,
            });
        }
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in r..dim {
                let d = (matrix[(r, c)] - matrix[(c, r)].conj()).norm();
                worst = worst.max(d);
            }
        }
        if worst > HERMITICITY_TOL {
            return Err(Error::NotHermitian(worst));
        }
        Ok(DenseOperator { num_qubits, matrix })
    }

    /// Zero operator on `k` qubits.
    pub fn zeros(num_qubits: usize) -> Result<DenseOperator> {
        if num_qubits > MAX_DENSE_QUBITS {
            return Err(Error::WidthCap {
                what: "dense operator",
                width: num_qubits,
                cap: MAX_DENSE_QUBITS,
            });
        }
        let dim = 1usize << num_qubits;
        Ok(DenseOperator {
            num_qubits,
            matrix: DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0)),
        })
    }

    /// Rank-one projector `|psi><psi|` from a (not necessarily normalized)
    /// state vector of length `2^k`.
    pub fn projector(psi: &[Complex64]) -> Result<DenseOperator> {
        let dim = psi.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::Shape {
                expected: "state vector with power-of-two length".into(),
                rows: dim,
                cols: 1,
            });
        }
        let norm2: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        if norm2 <= 0.0 {
            return Err(Error::Validation("zero state vector".into()));
        }
        let m = DMatrix::from_fn(dim, dim, |r, c| psi[r] * psi[c].conj() / norm2);
        DenseOperator::new(m)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `Tr(self * other)`; real because both operators are Hermitian.
    pub fn hs_inner(&self, other: &DenseOperator) -> Result<f64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::QubitMismatch(self.num_qubits, other.num_qubits));
        }
        Ok((&self.matrix * &other.matrix).trace().re)
    }

    /// Kronecker product; `other`'s qubits are appended above `self`'s, so the
    /// result's qubit 0 is `self`'s qubit 0.
    pub fn tensor(&self, other: &DenseOperator) -> Result<DenseOperator> {
        let k = self.num_qubits + other.num_qubits;
        if k > MAX_DENSE_QUBITS {
            return Err(Error::WidthCap {
                what: "dense operator",
                width: k,
                cap: MAX_DENSE_QUBITS,
            });
        }
        // qubit 0 is the least significant bit, so the appended (higher)
        // qubits are the left factor of the Kronecker product
        Ok(DenseOperator {
            num_qubits: k,
            matrix: other.matrix.kronecker(&self.matrix),
        })
    }

    /// Eigenvalues of the Hermitian matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = nalgebra::SymmetricEigen::new(self.matrix.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }

    /// Check that this is a density matrix: unit trace and PSD within `tol`.
    pub fn validate_density(&self, tol: f64) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > tol {
            return Err(Error::NotDensity(format!("trace {tr} != 1")));
        }
        let min = self
            .eigenvalues()
            .first()
            .copied()
            .unwrap_or(0.0);
        if min < -tol {
            return Err(Error::NotDensity(format!("negative eigenvalue {min}")));
        }
        Ok(())
    }
}

/// Real Pauli-coefficient vector of a Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochVector {
    num_qubits: usize,
    coeffs: Vec<f64>,
}

impl BlochVector {
    pub fn new(num_qubits: usize, coeffs: Vec<f64>) -> Result<BlochVector> {
        if num_qubits > MAX_BLOCH_QUBITS {
            return Err(Error::WidthCap {
                what: "Bloch vector",
                width: num_qubits,
                cap: MAX_BLOCH_QUBITS,
            });
        }
        let want = 1usize << (2 * num_qubits);
        if coeffs.len() != want {
            return Err(Error::Shape {
                expected: format!("coefficient vector of length {want}"),
                rows: coeffs.len(),
                cols: 1,
            });
        }
        Ok(BlochVector { num_qubits, coeffs })
    }

    pub fn zeros(num_qubits: usize) -> Result<BlochVector> {
        BlochVector::new(num_qubits, vec![0.0; 1usize << (2 * num_qubits)])
    }

    /// The maximally mixed state `I/2^k`.
    pub fn maximally_mixed(num_qubits: usize) -> Result<BlochVector> {
        let mut v = BlochVector::zeros(num_qubits)?;
        v.coeffs[0] = 1.0 / (1u64 << num_qubits) as f64;
        Ok(v)
    }

    /// The Bloch vector of a bare Pauli string (all coefficients zero except
    /// the string's own word, which carries the sign).
    pub fn pauli(p: &PauliString) -> Result<BlochVector> {
        let mut v = BlochVector::zeros(p.num_qubits())?;
        v.coeffs[p.word()] = p.sign().to_f64();
        Ok(v)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, word: usize) -> f64 {
        self.coeffs[word]
    }

    /// `Tr(A)`, read off the identity coefficient.
    pub fn trace(&self) -> f64 {
        self.coeffs[0] * (1u64 << self.num_qubits) as f64
    }

    /// The negativity measure `D(A)`: the L1 norm of the coefficients.
    pub fn d_measure(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// `Tr(A^2) = 2^k sum_i coeffs[i]^2`.
    pub fn purity(&self) -> f64 {
        let s: f64 = self.coeffs.iter().map(|c| c * c).sum();
        s * (1u64 << self.num_qubits) as f64
    }

    /// `Tr(A B) = 2^k sum_i a_i b_i` (the frame is self-dual).
    pub fn hs_inner(&self, other: &BlochVector) -> Result<f64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::QubitMismatch(self.num_qubits, other.num_qubits));
        }
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum();
        Ok(s * (1u64 << self.num_qubits) as f64)
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.coeffs {
            *c *= factor;
        }
    }

    /// Tensor product; `other`'s qubits are appended after `self`'s.
    pub fn tensor(&self, other: &BlochVector) -> Result<BlochVector> {
        let k = self.num_qubits + other.num_qubits;
        if k > MAX_BLOCH_QUBITS {
            return Err(Error::WidthCap {
                what: "Bloch vector",
                width: k,
                cap: MAX_BLOCH_QUBITS,
            });
        }
        let shift = 2 * self.num_qubits;
        let mut coeffs = vec![0.0; 1usize << (2 * k)];
        for (j, &b) in other.coeffs.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let base = j << shift;
            for (i, &a) in self.coeffs.iter().enumerate() {
                coeffs[base | i] = a * b;
            }
        }
        BlochVector::new(k, coeffs)
    }
}

/// Coefficients `Tr(sigma_i op)/2^k` for every Pauli word.
///
/// The imaginary parts of the traces vanish for Hermitian input; Hermiticity
/// is checked at `DenseOperator` construction, so this cannot fail.
pub fn bloch_from_dense(op: &DenseOperator) -> Result<BlochVector> {
    let k = op.num_qubits();
    if k > MAX_BLOCH_QUBITS {
        return Err(Error::WidthCap {
            what: "Bloch vector",
            width: k,
            cap: MAX_BLOCH_QUBITS,
        });
    }
    let dim = 1usize << (2 * k);
    let norm = (1u64 << k) as f64;
    let coeffs = (0..dim)
        .map(|idx| pauli_trace(op.matrix(), k, idx).re / norm)
        .collect();
    BlochVector::new(k, coeffs)
}

/// Reconstruct `A = sum_i coeffs[i] sigma_i` as a dense matrix.
pub fn dense_from_bloch(v: &BlochVector) -> Result<DenseOperator> {
    let k = v.num_qubits();
    let dim = 1usize << k;
    let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for (idx, &c) in v.coeffs().iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let s = PauliString::from_word(k, idx);
        for col in 0..dim {
            let (row, phase) = s.column_action(col);
            m[(row, col)] += phase * c;
        }
    }
    DenseOperator::new(m)
}
