//! Signed Pauli strings and the phase algebra of their products.
//!
//! A Pauli string is a tensor product of single-qubit Pauli matrices with an
//! overall sign. Letters are indexed `(I, X, Y, Z) = (0, 1, 2, 3)` and a
//! string on `n` qubits flattens to a base-4 word that is little-endian in
//! the qubit index: qubit 0 is the least significant digit. Every module in
//! this crate shares that ordering.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::fmt;

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Letter {
    I = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

pub const LETTERS: [Letter; 4] = [Letter::I, Letter::X, Letter::Y, Letter::Z];

impl Letter {
    pub fn from_index(i: usize) -> Letter {
        LETTERS[i & 3]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Letter> {
        match c.to_ascii_uppercase() {
            'I' => Some(Letter::I),
            'X' => Some(Letter::X),
            'Y' => Some(Letter::Y),
            'Z' => Some(Letter::Z),
            _ => None,
        }
    }

    /// The 2x2 matrix of this letter.
    pub fn matrix(self) -> DMatrix<Complex64> {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let rows = match self {
            Letter::I => [[l, o], [o, l]],
            Letter::X => [[o, l], [l, o]],
            Letter::Y => [[o, -i], [i, o]],
            Letter::Z => [[l, o], [o, -l]],
        };
        DMatrix::from_fn(2, 2, |r, c| rows[r][c])
    }

    /// Whether two letters anticommute (both non-identity and different).
    pub fn anticommutes(self, other: Letter) -> bool {
        self != Letter::I && other != Letter::I && self != other
    }

    /// Letter product `self * other = phase * letter`.
    pub fn times(self, other: Letter) -> (Phase, Letter) {
        use Letter::*;
        match (self, other) {
            (I, b) => (Phase::ONE, b),
            (a, I) => (Phase::ONE, a),
            (a, b) if a == b => (Phase::ONE, I),
            (X, Y) => (Phase::PLUS_I, Z),
            (Y, Z) => (Phase::PLUS_I, X),
            (Z, X) => (Phase::PLUS_I, Y),
            (Y, X) => (Phase::MINUS_I, Z),
            (Z, Y) => (Phase::MINUS_I, X),
            (X, Z) => (Phase::MINUS_I, Y),
            _ => unreachable!(),
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// A power of `i`: the phase picked up by Pauli products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const PLUS_I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }

    pub fn is_real(self) -> bool {
        self.0 & 1 == 0
    }

    /// `+1.0` or `-1.0` for real phases, `None` for `±i`.
    pub fn real_sign(self) -> Option<f64> {
        match self.0 {
            0 => Some(1.0),
            2 => Some(-1.0),
            _ => None,
        }
    }
}

impl std::ops::Mul for Phase {
    type Output = Phase;

    fn mul(self, other: Phase) -> Phase {
        Phase((self.0 + other.0) & 3)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.0 {
            0 => "+1",
            1 => "+i",
            2 => "-1",
            _ => "-i",
        };
        write!(f, "{s}")
    }
}

/// Overall sign of a Pauli string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn to_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn phase(self) -> Phase {
        match self {
            Sign::Plus => Phase::ONE,
            Sign::Minus => Phase::MINUS_ONE,
        }
    }
}

/// A signed tensor product of Pauli letters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    sign: Sign,
    letters: Vec<Letter>,
}

impl PauliString {
    pub fn new(letters: Vec<Letter>, sign: Sign) -> PauliString {
        PauliString { sign, letters }
    }

    /// The all-identity string on `n` qubits.
    pub fn identity(n: usize) -> PauliString {
        PauliString {
            sign: Sign::Plus,
            letters: vec![Letter::I; n],
        }
    }

    /// Decode the base-4 word `index` into an unsigned string on `n` qubits.
    pub fn from_word(n: usize, index: usize) -> PauliString {
        let letters = (0..n)
            .map(|q| Letter::from_index((index >> (2 * q)) & 3))
            .collect();
        PauliString {
            sign: Sign::Plus,
            letters,
        }
    }

    /// The base-4 word, little-endian in the qubit index.
    pub fn word(&self) -> usize {
        debug_assert!(self.letters.len() <= 31);
        self.letters
            .iter()
            .enumerate()
            .fold(0usize, |acc, (q, l)| acc | (l.index() << (2 * q)))
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn letter(&self, qubit: usize) -> Letter {
        self.letters[qubit]
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&l| l == Letter::I)
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&l| l != Letter::I).count()
    }

    pub fn commutes_with(&self, other: &PauliString) -> Result<bool> {
        if self.num_qubits() != other.num_qubits() {
            return Err(Error::QubitMismatch(self.num_qubits(), other.num_qubits()));
        }
        let anti = self
            .letters
            .iter()
            .zip(&other.letters)
            .filter(|(a, b)| a.anticommutes(**b))
            .count();
        Ok(anti % 2 == 0)
    }

    /// Matrix product `self * other`, returned as `phase * string` with the
    /// string's own sign reset to `+`.
    pub fn mul(&self, other: &PauliString) -> Result<(Phase, PauliString)> {
        if self.num_qubits() != other.num_qubits() {
            return Err(Error::QubitMismatch(self.num_qubits(), other.num_qubits()));
        }
        let mut phase = self.sign.phase() * other.sign.phase();
        let letters = self
            .letters
            .iter()
            .zip(&other.letters)
            .map(|(&a, &b)| {
                let (p, c) = a.times(b);
                phase = phase * p;
                c
            })
            .collect();
        Ok((phase, PauliString::new(letters, Sign::Plus)))
    }

    /// Extract the letters on `support` (in the given order), keeping the sign.
    pub fn restrict(&self, support: &[usize]) -> Result<PauliString> {
        let letters = support
            .iter()
            .map(|&q| {
                self.letters.get(q).copied().ok_or(Error::QubitIndex {
                    index: q,
                    width: self.num_qubits(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        check_distinct(support)?;
        Ok(PauliString {
            sign: self.sign,
            letters,
        })
    }

    /// Write this string's letters into an `n`-qubit identity string at the
    /// positions listed in `support`.
    pub fn embed(&self, n: usize, support: &[usize]) -> Result<PauliString> {
        if support.len() != self.num_qubits() {
            return Err(Error::QubitMismatch(support.len(), self.num_qubits()));
        }
        check_distinct(support)?;
        let mut letters = vec![Letter::I; n];
        for (&q, &l) in support.iter().zip(&self.letters) {
            if q >= n {
                return Err(Error::QubitIndex { index: q, width: n });
            }
            letters[q] = l;
        }
        Ok(PauliString {
            sign: self.sign,
            letters,
        })
    }

    /// Dense matrix of the signed string, `2^n x 2^n`.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.num_qubits();
        let dim = 1usize << n;
        let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        let sign = Complex64::new(self.sign.to_f64(), 0.0);
        for col in 0..dim {
            let (row, phase) = self.column_action(col);
            m[(row, col)] = sign * phase;
        }
        m
    }

    /// Action on a basis ket: `sigma |col> = phase |row>` (sign not included).
    pub(crate) fn column_action(&self, col: usize) -> (usize, Complex64) {
        let mut row = col;
        let mut phase = Complex64::new(1.0, 0.0);
        for (q, &l) in self.letters.iter().enumerate() {
            let bit = (col >> q) & 1;
            match l {
                Letter::I => {}
                Letter::X => row ^= 1 << q,
                Letter::Y => {
                    row ^= 1 << q;
                    phase *= if bit == 0 {
                        Complex64::new(0.0, 1.0)
                    } else {
                        Complex64::new(0.0, -1.0)
                    };
                }
                Letter::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
            }
        }
        (row, phase)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sign == Sign::Minus {
            write!(f, "-")?;
        }
        for l in &self.letters {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<PauliString> {
        let s = s.trim();
        let (sign, body) = match s.strip_prefix('-') {
            Some(rest) => (Sign::Minus, rest),
            None => (Sign::Plus, s.strip_prefix('+').unwrap_or(s)),
        };
        let letters = body
            .chars()
            .map(|c| {
                Letter::from_char(c)
                    .ok_or_else(|| Error::Parse(format!("invalid Pauli letter '{c}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(Error::Parse("empty Pauli string".into()));
        }
        Ok(PauliString::new(letters, sign))
    }
}

fn check_distinct(support: &[usize]) -> Result<()> {
    for (i, &q) in support.iter().enumerate() {
        if support[..i].contains(&q) {
            return Err(Error::DuplicateQubit(q));
        }
    }
    Ok(())
}

/// Trace of `sigma_idx * a` for an `n`-qubit matrix, without materializing
/// the Pauli. `idx` is a base-4 word.
pub(crate) fn pauli_trace(a: &DMatrix<Complex64>, n: usize, idx: usize) -> Complex64 {
    let s = PauliString::from_word(n, idx);
    let dim = 1usize << n;
    let mut acc = Complex64::new(0.0, 0.0);
    // Tr(sigma A) = sum_r phi(r XOR f) A[r XOR f, r]
    for col in 0..dim {
        let (row, phase) = s.column_action(col);
        acc += phase * a[(col, row)];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn letter_products() {
        assert_eq!(Letter::X.times(Letter::Y), (Phase::PLUS_I, Letter::Z));
        assert_eq!(Letter::Y.times(Letter::X), (Phase::MINUS_I, Letter::Z));
        assert_eq!(Letter::Z.times(Letter::Z), (Phase::ONE, Letter::I));
    }

    #[test]
    fn product_x_y_is_i_z() {
        let (phase, r) = ps("X").mul(&ps("Y")).unwrap();
        assert_eq!(phase, Phase::PLUS_I);
        assert_eq!(r, ps("Z"));
    }

    #[test]
    fn product_iz_iz_is_identity() {
        let (phase, r) = ps("IZ").mul(&ps("IZ")).unwrap();
        assert_eq!(phase, Phase::ONE);
        assert!(r.is_identity());
    }

    #[test]
    fn products_match_dense_matrices() {
        // brute-force check of the phase algebra on 2 qubits
        for a in 0..16 {
            for b in 0..16 {
                let pa = PauliString::from_word(2, a);
                let pb = PauliString::from_word(2, b);
                let (phase, r) = pa.mul(&pb).unwrap();
                let lhs = pa.matrix() * pb.matrix();
                let rhs = r.matrix().map(|v| v * phase.to_complex());
                for i in 0..4 {
                    for j in 0..4 {
                        assert_abs_diff_eq!(lhs[(i, j)].re, rhs[(i, j)].re, epsilon = 1e-12);
                        assert_abs_diff_eq!(lhs[(i, j)].im, rhs[(i, j)].im, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn xz_times_zx_matches_matrix_product() {
        let (phase, r) = ps("XZ").mul(&ps("ZX")).unwrap();
        let lhs = ps("XZ").matrix() * ps("ZX").matrix();
        let rhs = r.matrix().map(|v| v * phase.to_complex());
        assert_eq!(lhs, rhs);
        // X*Z = -iY on each factor; phases multiply to (-i)(+i) = +1
        assert_eq!(r, ps("YY"));
    }

    #[test]
    fn trace_orthogonality() {
        for n in 1..=3usize {
            let dim = 4usize.pow(n as u32);
            for i in 0..dim {
                for j in 0..dim {
                    let (phase, r) = PauliString::from_word(n, i)
                        .mul(&PauliString::from_word(n, j))
                        .unwrap();
                    // Tr(sigma_i sigma_j) = 2^n delta_ij, exactly
                    let tr = if r.is_identity() {
                        assert!(phase.is_real());
                        phase.real_sign().unwrap() * (1u64 << n) as f64
                    } else {
                        0.0
                    };
                    let expect = if i == j { (1u64 << n) as f64 } else { 0.0 };
                    assert_eq!(tr, expect);
                }
            }
        }
    }

    #[test]
    fn restrict_and_embed() {
        let p = ps("XIZ");
        assert_eq!(p.restrict(&[0, 2]).unwrap(), ps("XZ"));
        let e = ps("Y").embed(3, &[1]).unwrap();
        assert_eq!(e, ps("IYI"));
        // round trip on full support
        let full: Vec<usize> = (0..3).collect();
        assert_eq!(p.restrict(&full).unwrap().embed(3, &full).unwrap(), p);
    }

    #[test]
    fn restrict_rejects_out_of_range() {
        assert!(ps("XZ").restrict(&[3]).is_err());
        assert!(ps("X").embed(2, &[5]).is_err());
        assert!(ps("XZ").restrict(&[0, 0]).is_err());
    }

    #[test]
    fn word_round_trip() {
        for idx in 0..64 {
            assert_eq!(PauliString::from_word(3, idx).word(), idx);
        }
        // little-endian: qubit 0 is the low digit
        assert_eq!(ps("XI").word(), 1);
        assert_eq!(ps("IX").word(), 4);
    }

    #[test]
    fn pauli_trace_matches_dense() {
        let m = ps("YZ").matrix();
        for idx in 0..16 {
            let fast = pauli_trace(&m, 2, idx);
            let slow = (PauliString::from_word(2, idx).matrix() * &m).trace();
            assert_abs_diff_eq!(fast.re, slow.re, epsilon = 1e-12);
            assert_abs_diff_eq!(fast.im, slow.im, epsilon = 1e-12);
        }
    }
}
