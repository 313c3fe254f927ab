//! Quantum channels as Pauli transfer matrices.
//!
//! A channel `L` from `n` to `m` qubits is stored as the real matrix
//! `entries[j][i] = Tr(sigma_j L(sigma_i)) / 2^m`: column `i` is the Bloch
//! vector of `L(sigma_i)`. Clifford channels have 1-sparse columns with
//! entries `+-1` and are kept as signed permutations until a dense partner
//! forces promotion.
//!
//! The module provides a named channel library ([`ChannelSpec`] /
//! [`build_named`]), conversion from Kraus operators ([`ptm_from_kraus`]),
//! composition and tensoring, the Heisenberg-picture adjoint used for
//! backward propagation, and the two cost measures: the worst-column L1 norm
//! [`TransferMatrix::channel_cost`] and the mean-column
//! [`TransferMatrix::choi_cost`].

use crate::bloch::{bloch_from_dense, BlochVector, DenseOperator};
use crate::error::{Error, Result};
use crate::pauli::{pauli_trace, PauliString};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

/// Channels act on at most this many qubits (dense 64x64 transfer matrices).
pub const MAX_CHANNEL_QUBITS: usize = 3;

/// Absolute tolerance for the Kraus completeness check of TP channels.
pub const COMPLETENESS_TOL: f64 = 1e-10;

/// Tolerance for snapping a near-signed-permutation column to exact `+-1`.
const CLIFFORD_SNAP_TOL: f64 = 1e-12;

/// Named unitary gates with fixed dense matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitaryGate {
    X,
    Y,
    Z,
    H,
    /// The phase gate `diag(1, i)`, also known as P.
    S,
    /// The pi/8 gate `diag(1, e^{i pi/4})`.
    T,
    /// Control is the first target qubit, target the second.
    Cnot,
    Cz,
    Swap,
    /// `diag(1, e^{i theta})`, angle in radians.
    Rz(f64),
}

impl UnitaryGate {
    pub fn num_qubits(self) -> usize {
        match self {
            UnitaryGate::Cnot | UnitaryGate::Cz | UnitaryGate::Swap => 2,
            _ => 1,
        }
    }

    /// Dense unitary matrix; qubit 0 of the gate is the least significant bit
    /// of the row/column index.
    pub fn matrix(self) -> DMatrix<Complex64> {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            UnitaryGate::X => DMatrix::from_row_slice(2, 2, &[o, l, l, o]),
            UnitaryGate::Y => DMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            UnitaryGate::Z => DMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
            UnitaryGate::H => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                DMatrix::from_row_slice(2, 2, &[h, h, h, -h])
            }
            UnitaryGate::S => UnitaryGate::Rz(FRAC_PI_2).matrix(),
            UnitaryGate::T => UnitaryGate::Rz(FRAC_PI_4).matrix(),
            UnitaryGate::Rz(theta) => {
                let ph = Complex64::from_polar(1.0, theta);
                DMatrix::from_row_slice(2, 2, &[l, o, o, ph])
            }
            UnitaryGate::Cnot => {
                // |c, t> -> |c, t xor c> with c = bit 0
                let mut m = DMatrix::from_element(4, 4, o);
                for c in 0..2usize {
                    for t in 0..2usize {
                        m[(c + 2 * (t ^ c), c + 2 * t)] = l;
                    }
                }
                m
            }
            UnitaryGate::Cz => {
                let mut m = DMatrix::from_element(4, 4, o);
                for b in 0..4usize {
                    m[(b, b)] = if b == 3 { -l } else { l };
                }
                m
            }
            UnitaryGate::Swap => {
                let mut m = DMatrix::from_element(4, 4, o);
                for b in 0..4usize {
                    m[(((b & 1) << 1) | (b >> 1), b)] = l;
                }
                m
            }
        }
    }
}

/// Everything the library knows how to turn into a transfer matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Unitary(UnitaryGate),
    /// `rho -> (1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z)` rewritten in
    /// the standard Kraus form with identity weight `1 - 3p/4`.
    Depolarizing(f64),
    /// `rho -> (1-p) rho + p Z rho Z`.
    Dephasing(f64),
    /// Decay toward `|0><0|` with probability `gamma`.
    AmplitudeDamping(f64),
    /// Discard `q` qubits (partial trace); a `q -> 0` channel.
    TraceOut(usize),
    /// Adjoin a fixed state; a `0 -> k` channel.
    AppendState(BlochVector),
    /// The measure-and-correct channel of the T gadget: CNOT from the
    /// surviving qubit onto the measured one, Z-measure qubit 0, apply S to
    /// the survivor on outcome 1, discard qubit 0. A `2 -> 1` channel.
    GadgetMeasureControl,
    /// Generalization of the gadget: measure qubit 0 in the Z basis,
    /// conditionally apply `correction` to the survivor, discard qubit 0.
    /// No entangling gate is included; compose one explicitly if needed.
    MeasureControl { correction: UnitaryGate },
    /// Explicit Kraus operators, shapes `2^out x 2^in`.
    Kraus {
        matrices: Vec<DMatrix<Complex64>>,
        in_qubits: usize,
        out_qubits: usize,
        /// When set, completeness `sum K^dag K = I` is enforced.
        trace_preserving: bool,
    },
}

/// How a channel acts on a dense state: either a Kraus sum or one of the two
/// structural register operations.
pub enum ChannelAction {
    Kraus(Vec<DMatrix<Complex64>>),
    TraceOut(usize),
    Append(BlochVector),
}

impl ChannelSpec {
    /// `(input qubits, output qubits)`, checking the arity cap and parameter
    /// ranges that are knowable without building matrices.
    pub fn arity(&self) -> Result<(usize, usize)> {
        let (n, m) = match self {
            ChannelSpec::Unitary(g) => (g.num_qubits(), g.num_qubits()),
            ChannelSpec::Depolarizing(p) => {
                check_unit_interval("p", *p)?;
                (1, 1)
            }
            ChannelSpec::Dephasing(p) => {
                check_unit_interval("p", *p)?;
                (1, 1)
            }
            ChannelSpec::AmplitudeDamping(g) => {
                check_unit_interval("gamma", *g)?;
                (1, 1)
            }
            ChannelSpec::TraceOut(q) => {
                if *q == 0 {
                    return Err(Error::Parameter {
                        name: "trace_out qubits",
                        value: 0.0,
                        range: "[1, 3]",
                    });
                }
                (*q, 0)
            }
            ChannelSpec::AppendState(v) => {
                if v.num_qubits() == 0 {
                    return Err(Error::Parameter {
                        name: "append width",
                        value: 0.0,
                        range: "[1, 3]",
                    });
                }
                (0, v.num_qubits())
            }
            ChannelSpec::GadgetMeasureControl => (2, 1),
            ChannelSpec::MeasureControl { correction } => {
                if correction.num_qubits() != 1 {
                    return Err(Error::Validation(
                        "measure_control correction must be a single-qubit gate".into(),
                    ));
                }
                (2, 1)
            }
            ChannelSpec::Kraus {
                in_qubits,
                out_qubits,
                ..
            } => (*in_qubits, *out_qubits),
        };
        for (label, w) in [("channel input", n), ("channel output", m)] {
            if w > MAX_CHANNEL_QUBITS {
                return Err(Error::WidthCap {
                    what: label,
                    width: w,
                    cap: MAX_CHANNEL_QUBITS,
                });
            }
        }
        Ok((n, m))
    }

    /// Whether the spec describes a trace-preserving map.
    pub fn is_trace_preserving(&self) -> bool {
        match self {
            ChannelSpec::Kraus {
                trace_preserving, ..
            } => *trace_preserving,
            _ => true,
        }
    }

    /// The dense action used by the exact simulator.
    pub fn action(&self) -> Result<ChannelAction> {
        let act = match self {
            ChannelSpec::Unitary(g) => ChannelAction::Kraus(vec![g.matrix()]),
            ChannelSpec::Depolarizing(p) => {
                check_unit_interval("p", *p)?;
                let w0 = (1.0 - 0.75 * p).sqrt();
                let w1 = (p / 4.0).sqrt();
                ChannelAction::Kraus(vec![
                    scale_id(w0),
                    scale(&UnitaryGate::X.matrix(), w1),
                    scale(&UnitaryGate::Y.matrix(), w1),
                    scale(&UnitaryGate::Z.matrix(), w1),
                ])
            }
            ChannelSpec::Dephasing(p) => {
                check_unit_interval("p", *p)?;
                ChannelAction::Kraus(vec![
                    scale_id((1.0 - p).sqrt()),
                    scale(&UnitaryGate::Z.matrix(), p.sqrt()),
                ])
            }
            ChannelSpec::AmplitudeDamping(g) => {
                check_unit_interval("gamma", *g)?;
                let o = Complex64::new(0.0, 0.0);
                let k0 = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::new(1.0, 0.0),
                        o,
                        o,
                        Complex64::new((1.0 - g).sqrt(), 0.0),
                    ],
                );
                let k1 = DMatrix::from_row_slice(
                    2,
                    2,
                    &[o, Complex64::new(g.sqrt(), 0.0), o, o],
                );
                ChannelAction::Kraus(vec![k0, k1])
            }
            ChannelSpec::TraceOut(q) => ChannelAction::TraceOut(*q),
            ChannelSpec::AppendState(v) => {
                let trace = v.trace();
                if (trace - 1.0).abs() > 1e-9 {
                    return Err(Error::NotDensity(format!(
                        "appended state has trace {trace}"
                    )));
                }
                ChannelAction::Append(v.clone())
            }
            ChannelSpec::GadgetMeasureControl => {
                ChannelAction::Kraus(measure_control_kraus(UnitaryGate::S, true)?)
            }
            ChannelSpec::MeasureControl { correction } => {
                ChannelAction::Kraus(measure_control_kraus(*correction, false)?)
            }
            ChannelSpec::Kraus { matrices, .. } => ChannelAction::Kraus(matrices.clone()),
        };
        Ok(act)
    }

    /// Short human-readable name for reports.
    pub fn name(&self) -> String {
        match self {
            ChannelSpec::Unitary(g) => match g {
                UnitaryGate::Rz(t) => format!("rz({t})"),
                other => format!("{other:?}").to_lowercase(),
            },
            ChannelSpec::Depolarizing(p) => format!("depolarizing({p})"),
            ChannelSpec::Dephasing(p) => format!("dephasing({p})"),
            ChannelSpec::AmplitudeDamping(g) => format!("amplitude_damping({g})"),
            ChannelSpec::TraceOut(q) => format!("trace_out[{q}]"),
            ChannelSpec::AppendState(v) => format!("append[{}]", v.num_qubits()),
            ChannelSpec::GadgetMeasureControl => "gadget_measure_control".into(),
            ChannelSpec::MeasureControl { correction } => {
                format!("measure_control({correction:?})").to_lowercase()
            }
            ChannelSpec::Kraus { matrices, .. } => format!("kraus[{}]", matrices.len()),
        }
    }
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Parameter {
            name,
            value,
            range: "[0, 1]",
        });
    }
    Ok(())
}

fn scale(m: &DMatrix<Complex64>, w: f64) -> DMatrix<Complex64> {
    m * Complex64::new(w, 0.0)
}

fn scale_id(w: f64) -> DMatrix<Complex64> {
    DMatrix::from_diagonal_element(2, 2, Complex64::new(w, 0.0))
}

/// Kraus operators of "measure qubit 0 in Z, on outcome 1 apply `correction`
/// to qubit 1, discard qubit 0", optionally preceded by a CNOT controlled on
/// qubit 1 targeting qubit 0 (the gadget's entangler).
fn measure_control_kraus(
    correction: UnitaryGate,
    with_cnot: bool,
) -> Result<Vec<DMatrix<Complex64>>> {
    if correction.num_qubits() != 1 {
        return Err(Error::Validation(
            "measure_control correction must be a single-qubit gate".into(),
        ));
    }
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    // <b| on qubit 0, identity on qubit 1: 2x4, column index q0 + 2 q1
    let bra = |b: usize| {
        DMatrix::from_fn(2, 4, |row, col| {
            if col & 1 == b && col >> 1 == row {
                l
            } else {
                o
            }
        })
    };
    let entangler = if with_cnot {
        // control = qubit 1 (survivor), target = qubit 0 (measured)
        let mut u = DMatrix::from_element(4, 4, o);
        for q0 in 0..2usize {
            for q1 in 0..2usize {
                u[((q0 ^ q1) + 2 * q1, q0 + 2 * q1)] = l;
            }
        }
        u
    } else {
        DMatrix::identity(4, 4)
    };
    let k0 = bra(0) * &entangler;
    let k1 = correction.matrix() * bra(1) * &entangler;
    Ok(vec![k0, k1])
}

/// Column storage of a transfer matrix.
#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// Signed permutation: column `i` has single entry `signs[i]` in row
    /// `rows[i]`. Only used when `in_qubits == out_qubits`.
    Perm { rows: Vec<usize>, signs: Vec<f64> },
    /// Dense `4^m x 4^n` matrix.
    Dense(DMatrix<f64>),
}

/// A channel in the Pauli basis; see the module docs for conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    in_qubits: usize,
    out_qubits: usize,
    storage: Storage,
    trace_preserving: bool,
}

impl TransferMatrix {
    /// Wrap a dense coefficient matrix, snapping to the signed-permutation
    /// representation when every column is 1-sparse with entry `+-1`.
    pub fn from_dense(
        in_qubits: usize,
        out_qubits: usize,
        entries: DMatrix<f64>,
        trace_preserving: bool,
    ) -> Result<TransferMatrix> {
        for (label, w) in [("channel input", in_qubits), ("channel output", out_qubits)] {
            if w > MAX_CHANNEL_QUBITS {
                return Err(Error::WidthCap {
                    what: label,
                    width: w,
                    cap: MAX_CHANNEL_QUBITS,
                });
            }
        }
        let (rows, cols) = (1usize << (2 * out_qubits), 1usize << (2 * in_qubits));
        if entries.nrows() != rows || entries.ncols() != cols {
            return Err(Error::Shape {
                expected: format!("{rows}x{cols} transfer"),
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        let storage = snap_to_perm(&entries, in_qubits == out_qubits)
            .unwrap_or(Storage::Dense(entries));
        Ok(TransferMatrix {
            in_qubits,
            out_qubits,
            storage,
            trace_preserving,
        })
    }

    /// The identity channel on `n` qubits.
    pub fn identity(n: usize) -> Result<TransferMatrix> {
        if n > MAX_CHANNEL_QUBITS {
            return Err(Error::WidthCap {
                what: "channel input",
                width: n,
                cap: MAX_CHANNEL_QUBITS,
            });
        }
        let dim = 1usize << (2 * n);
        Ok(TransferMatrix {
            in_qubits: n,
            out_qubits: n,
            storage: Storage::Perm {
                rows: (0..dim).collect(),
                signs: vec![1.0; dim],
            },
            trace_preserving: true,
        })
    }

    pub fn in_qubits(&self) -> usize {
        self.in_qubits
    }

    pub fn out_qubits(&self) -> usize {
        self.out_qubits
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    /// Whether the channel is stored as a signed permutation (a Clifford
    /// action on the Pauli basis).
    pub fn is_clifford(&self) -> bool {
        matches!(self.storage, Storage::Perm { .. })
    }

    pub fn entry(&self, out_word: usize, in_word: usize) -> f64 {
        match &self.storage {
            Storage::Perm { rows, signs } => {
                if rows[in_word] == out_word {
                    signs[in_word]
                } else {
                    0.0
                }
            }
            Storage::Dense(m) => m[(out_word, in_word)],
        }
    }

    /// Bloch vector of `L(sigma_i)` (column `i`).
    pub fn column(&self, in_word: usize) -> Result<BlochVector> {
        let mut v = BlochVector::zeros(self.out_qubits)?;
        match &self.storage {
            Storage::Perm { rows, signs } => {
                v.coeffs_mut()[rows[in_word]] = signs[in_word];
            }
            Storage::Dense(m) => {
                for (j, c) in v.coeffs_mut().iter_mut().enumerate() {
                    *c = m[(j, in_word)];
                }
            }
        }
        Ok(v)
    }

    /// L1 norm of column `i`, i.e. `D(L(sigma_i))`.
    pub fn column_l1(&self, in_word: usize) -> f64 {
        match &self.storage {
            Storage::Perm { .. } => 1.0,
            Storage::Dense(m) => m.column(in_word).iter().map(|v| v.abs()).sum(),
        }
    }

    /// Draw an output word from column `i` with probability proportional to
    /// `|entries[j][i]|`, given a uniform variate `u` in `[0, 1)`. Returns
    /// `(out_word, weight_factor)` where the factor is the signed column L1
    /// norm; `None` when the column is identically zero (dead trajectory).
    pub fn sample_column(&self, in_word: usize, u: f64) -> Option<(usize, f64)> {
        match &self.storage {
            Storage::Perm { rows, signs } => Some((rows[in_word], signs[in_word])),
            Storage::Dense(m) => {
                let col = m.column(in_word);
                let total: f64 = col.iter().map(|v| v.abs()).sum();
                if total <= 0.0 {
                    return None;
                }
                let mut acc = 0.0;
                let mut chosen = col.len() - 1;
                let target = u * total;
                for (j, v) in col.iter().enumerate() {
                    acc += v.abs();
                    if target < acc {
                        chosen = j;
                        break;
                    }
                }
                let sign = if col[chosen] < 0.0 { -1.0 } else { 1.0 };
                Some((chosen, sign * total))
            }
        }
    }

    /// Materialize the dense coefficient matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Perm { rows, signs } => {
                let dim = rows.len();
                let mut m = DMatrix::zeros(dim, dim);
                for (i, (&r, &s)) in rows.iter().zip(signs).enumerate() {
                    m[(r, i)] = s;
                }
                m
            }
            Storage::Dense(m) => m.clone(),
        }
    }

    /// `Bloch(L(A)) = entries * Bloch(A)`.
    pub fn apply(&self, v: &BlochVector) -> Result<BlochVector> {
        if v.num_qubits() != self.in_qubits {
            return Err(Error::QubitMismatch(v.num_qubits(), self.in_qubits));
        }
        let mut out = BlochVector::zeros(self.out_qubits)?;
        match &self.storage {
            Storage::Perm { rows, signs } => {
                for (i, &c) in v.coeffs().iter().enumerate() {
                    if c != 0.0 {
                        out.coeffs_mut()[rows[i]] += signs[i] * c;
                    }
                }
            }
            Storage::Dense(m) => {
                for (j, slot) in out.coeffs_mut().iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (i, &c) in v.coeffs().iter().enumerate() {
                        acc += m[(j, i)] * c;
                    }
                    *slot = acc;
                }
            }
        }
        Ok(out)
    }

    /// Worst-case column cost `max_i D(L(sigma_i))`.
    pub fn channel_cost(&self) -> f64 {
        match &self.storage {
            Storage::Perm { .. } => 1.0,
            Storage::Dense(m) => (0..m.ncols())
                .map(|i| self.column_l1(i))
                .fold(0.0, f64::max),
        }
    }

    /// Mean column cost `(1/4^n) sum_i D(L(sigma_i))`; equals the `D` value
    /// of the channel's Choi state.
    pub fn choi_cost(&self) -> f64 {
        match &self.storage {
            Storage::Perm { .. } => 1.0,
            Storage::Dense(m) => {
                let cols = m.ncols();
                (0..cols).map(|i| self.column_l1(i)).sum::<f64>() / cols as f64
            }
        }
    }

    /// `second o first` as a transfer matrix (matrix product of entries).
    pub fn compose(second: &TransferMatrix, first: &TransferMatrix) -> Result<TransferMatrix> {
        if first.out_qubits != second.in_qubits {
            return Err(Error::QubitMismatch(first.out_qubits, second.in_qubits));
        }
        let tp = first.trace_preserving && second.trace_preserving;
        match (&second.storage, &first.storage) {
            (
                Storage::Perm {
                    rows: r2,
                    signs: s2,
                },
                Storage::Perm {
                    rows: r1,
                    signs: s1,
                },
            ) => {
                let rows = r1.iter().map(|&k| r2[k]).collect();
                let signs = r1
                    .iter()
                    .zip(s1)
                    .map(|(&k, &s)| s2[k] * s)
                    .collect();
                Ok(TransferMatrix {
                    in_qubits: first.in_qubits,
                    out_qubits: second.out_qubits,
                    storage: Storage::Perm { rows, signs },
                    trace_preserving: tp,
                })
            }
            _ => TransferMatrix::from_dense(
                first.in_qubits,
                second.out_qubits,
                second.dense() * first.dense(),
                tp,
            ),
        }
    }

    /// Tensor product; `other`'s qubits are appended after `self`'s on both
    /// the input and output registers.
    pub fn tensor(&self, other: &TransferMatrix) -> Result<TransferMatrix> {
        let in_q = self.in_qubits + other.in_qubits;
        let out_q = self.out_qubits + other.out_qubits;
        let tp = self.trace_preserving && other.trace_preserving;
        if let (
            Storage::Perm {
                rows: ra,
                signs: sa,
            },
            Storage::Perm {
                rows: rb,
                signs: sb,
            },
        ) = (&self.storage, &other.storage)
        {
            if in_q <= MAX_CHANNEL_QUBITS {
                let shift_in = 2 * self.in_qubits;
                let shift_out = 2 * self.out_qubits;
                let dim = 1usize << (2 * in_q);
                let mut rows = vec![0usize; dim];
                let mut signs = vec![0.0f64; dim];
                for ib in 0..ra.len().max(1) {
                    for (jb, (&rbv, &sbv)) in rb.iter().zip(sb).enumerate() {
                        let word = (jb << shift_in) | ib;
                        rows[word] = (rbv << shift_out) | ra[ib];
                        signs[word] = sa[ib] * sbv;
                    }
                }
                return Ok(TransferMatrix {
                    in_qubits: in_q,
                    out_qubits: out_q,
                    storage: Storage::Perm { rows, signs },
                    trace_preserving: tp,
                });
            }
        }
        let a = self.dense();
        let b = other.dense();
        // appended (higher) qubits form the left Kronecker factor
        TransferMatrix::from_dense(in_q, out_q, b.kronecker(&a), tp)
    }

    /// The Heisenberg-picture adjoint: maps `m`-qubit observables back to
    /// `n`-qubit observables via `entries^T` scaled by `2^m / 2^n`.
    pub fn adjoint(&self) -> AdjointTransferMatrix {
        let factor = (1u64 << self.out_qubits) as f64 / (1u64 << self.in_qubits) as f64;
        let inner = match &self.storage {
            Storage::Perm { rows, signs } => {
                // signed permutations are orthogonal: transpose = inverse
                let dim = rows.len();
                let mut t_rows = vec![0usize; dim];
                let mut t_signs = vec![0.0f64; dim];
                for (i, (&r, &s)) in rows.iter().zip(signs).enumerate() {
                    t_rows[r] = i;
                    t_signs[r] = s;
                }
                TransferMatrix {
                    in_qubits: self.out_qubits,
                    out_qubits: self.in_qubits,
                    storage: Storage::Perm {
                        rows: t_rows,
                        signs: t_signs,
                    },
                    trace_preserving: false,
                }
            }
            Storage::Dense(m) => {
                let t = m.transpose() * factor;
                TransferMatrix::from_dense(self.out_qubits, self.in_qubits, t, false)
                    .expect("transpose keeps dimensions within caps")
            }
        };
        AdjointTransferMatrix { inner }
    }
}

/// Try to interpret a dense matrix as a signed permutation.
fn snap_to_perm(m: &DMatrix<f64>, square: bool) -> Option<Storage> {
    if !square || m.nrows() != m.ncols() {
        return None;
    }
    let dim = m.ncols();
    let mut rows = vec![0usize; dim];
    let mut signs = vec![0.0f64; dim];
    for i in 0..dim {
        let mut hit: Option<(usize, f64)> = None;
        for j in 0..dim {
            let v = m[(j, i)];
            if v.abs() <= CLIFFORD_SNAP_TOL {
                continue;
            }
            if (v.abs() - 1.0).abs() > CLIFFORD_SNAP_TOL || hit.is_some() {
                return None;
            }
            hit = Some((j, if v < 0.0 { -1.0 } else { 1.0 }));
        }
        let (j, s) = hit?;
        rows[i] = j;
        signs[i] = s;
    }
    Some(Storage::Perm { rows, signs })
}

/// The dual map for backward propagation. Columns are Bloch vectors of
/// adjoint images `L^adj(sigma_k)`; sampling and cost work exactly as for a
/// forward transfer matrix via [`AdjointTransferMatrix::matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTransferMatrix {
    inner: TransferMatrix,
}

impl AdjointTransferMatrix {
    /// Observable-side width (`m` of the forward channel).
    pub fn observable_qubits(&self) -> usize {
        self.inner.in_qubits
    }

    /// Result width (`n` of the forward channel).
    pub fn result_qubits(&self) -> usize {
        self.inner.out_qubits
    }

    /// The adjoint's own coefficient matrix, usable like any transfer matrix.
    pub fn matrix(&self) -> &TransferMatrix {
        &self.inner
    }

    /// `max_k D(L^adj(sigma_k))`, the backward-propagation cost.
    pub fn channel_cost(&self) -> f64 {
        self.inner.channel_cost()
    }

    /// `Bloch(L^adj(E)) = entries^adj * Bloch(E)`.
    pub fn apply(&self, e: &BlochVector) -> Result<BlochVector> {
        self.inner.apply(e)
    }
}

/// Transfer matrix of a Kraus-represented channel:
/// `entries[j][i] = Tr(sigma_j sum_a K_a sigma_i K_a^dag) / 2^m`.
pub fn ptm_from_kraus(
    kraus: &[DMatrix<Complex64>],
    in_qubits: usize,
    out_qubits: usize,
    trace_preserving: bool,
) -> Result<TransferMatrix> {
    if kraus.is_empty() {
        return Err(Error::Validation("empty Kraus list".into()));
    }
    for (label, w) in [("channel input", in_qubits), ("channel output", out_qubits)] {
        if w > MAX_CHANNEL_QUBITS {
            return Err(Error::WidthCap {
                what: label,
                width: w,
                cap: MAX_CHANNEL_QUBITS,
            });
        }
    }
    let (rows, cols) = (1usize << out_qubits, 1usize << in_qubits);
    for k in kraus {
        if k.nrows() != rows || k.ncols() != cols {
            return Err(Error::Shape {
                expected: format!("{rows}x{cols} Kraus"),
                rows: k.nrows(),
                cols: k.ncols(),
            });
        }
    }
    if trace_preserving {
        let mut sum = DMatrix::from_element(cols, cols, Complex64::new(0.0, 0.0));
        for k in kraus {
            sum += k.adjoint() * k;
        }
        let residual = (0..cols)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| {
                let want = if r == c {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                (sum[(r, c)] - want).norm()
            })
            .fold(0.0f64, f64::max);
        if residual > COMPLETENESS_TOL {
            return Err(Error::KrausCompleteness(residual));
        }
    }
    let in_dim = 1usize << (2 * in_qubits);
    let out_dim = 1usize << (2 * out_qubits);
    let norm = (1u64 << out_qubits) as f64;
    let mut entries = DMatrix::zeros(out_dim, in_dim);
    for i in 0..in_dim {
        let sigma = PauliString::from_word(in_qubits, i).matrix();
        let mut image = DMatrix::from_element(rows, rows, Complex64::new(0.0, 0.0));
        for k in kraus {
            image += k * &sigma * k.adjoint();
        }
        for j in 0..out_dim {
            let tr = pauli_trace(&image, out_qubits, j);
            if tr.im.abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "transfer entry ({j},{i}) has imaginary part {:.3e}",
                    tr.im
                )));
            }
            entries[(j, i)] = tr.re / norm;
        }
    }
    TransferMatrix::from_dense(in_qubits, out_qubits, entries, trace_preserving)
}

/// Build the transfer matrix of a named channel.
pub fn build_named(spec: &ChannelSpec) -> Result<TransferMatrix> {
    let (n, m) = spec.arity()?;
    match spec.action()? {
        ChannelAction::Kraus(kraus) => {
            ptm_from_kraus(&kraus, n, m, spec.is_trace_preserving())
        }
        ChannelAction::TraceOut(q) => {
            // Tr(sigma_i) = 2^q only for the identity word; the 1x4^q row is
            // (2^q, 0, ..., 0)
            let mut entries = DMatrix::zeros(1, 1usize << (2 * q));
            entries[(0, 0)] = (1u64 << q) as f64;
            TransferMatrix::from_dense(q, 0, entries, true)
        }
        ChannelAction::Append(v) => {
            // column vector: the appended state's own Bloch coefficients
            let k = v.num_qubits();
            let entries =
                DMatrix::from_fn(1usize << (2 * k), 1, |j, _| v.coeff(j));
            TransferMatrix::from_dense(0, k, entries, true)
        }
    }
}

/// Verify a transfer matrix column-by-column against dense Kraus arithmetic.
/// Returns the worst absolute entry deviation; used by tests and the oracle
/// cross-checks.
pub fn column_deviation(tm: &TransferMatrix, kraus: &[DMatrix<Complex64>]) -> f64 {
    let n = tm.in_qubits();
    let m = tm.out_qubits();
    let mut worst = 0.0f64;
    for i in 0..1usize << (2 * n) {
        let sigma = PauliString::from_word(n, i).matrix();
        let mut image =
            DMatrix::from_element(1 << m, 1 << m, Complex64::new(0.0, 0.0));
        for k in kraus {
            image += k * &sigma * k.adjoint();
        }
        let bloch = bloch_from_dense(
            &DenseOperator::new((&image + image.adjoint()) * Complex64::new(0.5, 0.0))
                .expect("symmetrized image is Hermitian"),
        )
        .expect("channel widths are within the Bloch cap");
        for j in 0..1usize << (2 * m) {
            worst = worst.max((tm.entry(j, i) - bloch.coeff(j)).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::dense_from_bloch;
    use crate::testutil::random_hermitian;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const SQRT_2: f64 = std::f64::consts::SQRT_2;

    fn w(s: &str) -> usize {
        s.parse::<PauliString>().unwrap().word()
    }

    fn gate(g: UnitaryGate) -> TransferMatrix {
        build_named(&ChannelSpec::Unitary(g)).unwrap()
    }

    #[test]
    fn identity_kraus_is_identity_matrix() {
        let tm = ptm_from_kraus(
            &[DMatrix::identity(2, 2)],
            1,
            1,
            true,
        )
        .unwrap();
        assert!(tm.is_clifford());
        assert_eq!(tm.dense(), DMatrix::identity(4, 4));
    }

    #[test]
    fn depolarizing_is_diagonal_shrink() {
        let p = 0.3;
        let tm = build_named(&ChannelSpec::Depolarizing(p)).unwrap();
        let mut want = DMatrix::zeros(4, 4);
        want[(0, 0)] = 1.0;
        for i in 1..4 {
            want[(i, i)] = 1.0 - p;
        }
        let diff = (tm.dense() - want).abs().max();
        assert!(diff < 1e-12, "deviation {diff}");
        assert_abs_diff_eq!(tm.channel_cost(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dephasing_matrix() {
        let tm = build_named(&ChannelSpec::Dephasing(0.25)).unwrap();
        for (i, want) in [1.0, 0.5, 0.5, 1.0].into_iter().enumerate() {
            assert_abs_diff_eq!(tm.entry(i, i), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn amplitude_damping_cost() {
        let g = 0.4;
        let tm = build_named(&ChannelSpec::AmplitudeDamping(g)).unwrap();
        // non-unital: identity column is (1, 0, 0, gamma)
        assert_abs_diff_eq!(tm.entry(0, 0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.entry(w("Z"), 0), g, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.channel_cost(), 1.0 + g, epsilon = 1e-12);
    }

    #[test]
    fn t_gate_columns() {
        let tm = gate(UnitaryGate::T);
        assert!(!tm.is_clifford());
        let s = FRAC_1_SQRT_2;
        assert_abs_diff_eq!(tm.entry(w("X"), w("X")), s, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.entry(w("Y"), w("X")), s, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.entry(w("X"), w("Y")), -s, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.entry(w("Y"), w("Y")), s, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.entry(0, 0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.entry(w("Z"), w("Z")), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.channel_cost(), SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn cliffords_are_signed_permutations() {
        for g in [
            UnitaryGate::X,
            UnitaryGate::Y,
            UnitaryGate::Z,
            UnitaryGate::H,
            UnitaryGate::S,
            UnitaryGate::Cnot,
            UnitaryGate::Cz,
            UnitaryGate::Swap,
        ] {
            let tm = gate(g);
            assert!(tm.is_clifford(), "{g:?} should snap to a permutation");
            assert_abs_diff_eq!(tm.channel_cost(), 1.0);
            assert_abs_diff_eq!(tm.choi_cost(), 1.0);
        }
    }

    #[test]
    fn cnot_conjugation() {
        let tm = gate(UnitaryGate::Cnot);
        // X on the control spreads to X XOR X; control = qubit 0
        let col = tm.column(w("XI")).unwrap();
        assert_eq!(col.coeff(w("XX")), 1.0);
        // Z on the target spreads to Z Z
        let col = tm.column(w("IZ")).unwrap();
        assert_eq!(col.coeff(w("ZZ")), 1.0);
    }

    #[test]
    fn h_composed_with_h_is_identity() {
        let h = gate(UnitaryGate::H);
        let hh = TransferMatrix::compose(&h, &h).unwrap();
        assert_eq!(hh.dense(), DMatrix::identity(4, 4));
    }

    #[test]
    fn t_composed_with_t_is_s() {
        let t = gate(UnitaryGate::T);
        let tt = TransferMatrix::compose(&t, &t).unwrap();
        assert!(tt.is_clifford(), "T^2 is the Clifford gate S");
        let diff = (tt.dense() - gate(UnitaryGate::S).dense()).abs().max();
        assert!(diff < 1e-12);
    }

    fn random_kraus_channel(
        rng: &mut impl Rng,
        n: usize,
        m: usize,
    ) -> (Vec<DMatrix<Complex64>>, TransferMatrix) {
        let kraus: Vec<_> = (0..2)
            .map(|_| {
                DMatrix::from_fn(1 << m, 1 << n, |_, _| {
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                })
            })
            .collect();
        let tm = ptm_from_kraus(&kraus, n, m, false).unwrap();
        (kraus, tm)
    }

    #[test]
    fn cost_submultiplicative_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let (_, a) = random_kraus_channel(&mut rng, 1, 1);
            let (_, b) = random_kraus_channel(&mut rng, 1, 1);
            let ab = TransferMatrix::compose(&a, &b).unwrap();
            assert!(
                ab.channel_cost() <= a.channel_cost() * b.channel_cost() + 1e-10,
                "cost {} > {} * {}",
                ab.channel_cost(),
                a.channel_cost(),
                b.channel_cost()
            );
        }
    }

    #[test]
    fn adjoint_duality_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..100 {
            let (n, m) = if trial % 2 == 0 { (1, 1) } else { (2, 1) };
            let (kraus, tm) = random_kraus_channel(&mut rng, n, m);
            let rho = random_hermitian(&mut rng, n);
            let e = random_hermitian(&mut rng, m);
            // dense forward value Tr(L(rho) E)
            let mut image = DMatrix::from_element(
                1 << m,
                1 << m,
                Complex64::new(0.0, 0.0),
            );
            for k in &kraus {
                image += k * rho.matrix() * k.adjoint();
            }
            let lhs = (&image * e.matrix()).trace().re;
            // backward value Tr(rho L^adj(E)) through the Bloch pipeline
            let eb = bloch_from_dense(&e).unwrap();
            let back = tm.adjoint().apply(&eb).unwrap();
            let rhs = bloch_from_dense(&rho).unwrap().hs_inner(&back).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn clifford_adjoint_is_transpose() {
        for g in [UnitaryGate::H, UnitaryGate::S, UnitaryGate::Cnot] {
            let tm = gate(g);
            let adj = tm.adjoint();
            let diff = (adj.matrix().dense() - tm.dense().transpose()).abs().max();
            assert!(diff < 1e-12, "{g:?} adjoint deviates by {diff}");
            assert!(adj.matrix().is_clifford());
        }
    }

    #[test]
    fn gadget_printed_columns() {
        let tm = build_named(&ChannelSpec::GadgetMeasureControl).unwrap();
        assert_eq!(tm.in_qubits(), 2);
        assert_eq!(tm.out_qubits(), 1);
        let expect: &[(&str, &[(&str, f64)])] = &[
            ("II", &[("I", 2.0)]),
            ("IZ", &[("Z", 2.0)]),
            ("XX", &[("X", 1.0), ("Y", 1.0)]),
            ("XY", &[("X", -1.0), ("Y", 1.0)]),
            ("YY", &[("X", -1.0), ("Y", 1.0)]),
            ("YX", &[("X", 1.0), ("Y", 1.0)]),
        ];
        for (col, terms) in expect {
            let got = tm.column(w(col)).unwrap();
            let mut want = BlochVector::zeros(1).unwrap();
            for (out, v) in *terms {
                want.coeffs_mut()[w(out)] = *v;
            }
            for j in 0..4 {
                assert_abs_diff_eq!(got.coeff(j), want.coeff(j), epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(tm.channel_cost(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gadget_adjoint_images() {
        let tm = build_named(&ChannelSpec::GadgetMeasureControl).unwrap();
        let adj = tm.adjoint();
        let expect: &[(&str, &[(&str, f64)])] = &[
            ("I", &[("II", 1.0)]),
            ("Z", &[("IZ", 1.0)]),
            (
                "X",
                &[("XX", 0.5), ("XY", -0.5), ("YY", -0.5), ("YX", 0.5)],
            ),
            (
                "Y",
                &[("XX", 0.5), ("XY", 0.5), ("YY", 0.5), ("YX", 0.5)],
            ),
        ];
        for (obs, terms) in expect {
            let got = adj.matrix().column(w(obs)).unwrap();
            let mut want = BlochVector::zeros(2).unwrap();
            for (out, v) in *terms {
                want.coeffs_mut()[w(out)] = *v;
            }
            for j in 0..16 {
                assert_abs_diff_eq!(got.coeff(j), want.coeff(j), epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(adj.channel_cost(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_out_cost_is_two_to_the_q() {
        for q in 1..=3usize {
            let tm = build_named(&ChannelSpec::TraceOut(q)).unwrap();
            assert_eq!(tm.in_qubits(), q);
            assert_eq!(tm.out_qubits(), 0);
            assert_abs_diff_eq!(tm.channel_cost(), (1u64 << q) as f64);
        }
    }

    #[test]
    fn append_maximally_mixed_after_gadget_costs_one() {
        let gadget = build_named(&ChannelSpec::GadgetMeasureControl).unwrap();
        let mm = BlochVector::maximally_mixed(1).unwrap();
        let append = build_named(&ChannelSpec::AppendState(mm)).unwrap();
        assert_abs_diff_eq!(append.channel_cost(), 0.5, epsilon = 1e-15);
        // sigma_I/2 tensor L(sigma_i): tensor the 0->1 append onto the output
        let combined = gadget.tensor(&append).unwrap();
        assert_eq!(combined.in_qubits(), 2);
        assert_eq!(combined.out_qubits(), 2);
        assert_abs_diff_eq!(combined.channel_cost(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn append_then_trace_is_identity_on_rest() {
        // tracing out an appended maximally mixed qubit leaves the rest alone
        let mm = BlochVector::maximally_mixed(1).unwrap();
        let append = build_named(&ChannelSpec::AppendState(mm)).unwrap();
        let trace = build_named(&ChannelSpec::TraceOut(1)).unwrap();
        let round = TransferMatrix::compose(&trace, &append).unwrap();
        assert_eq!(round.in_qubits(), 0);
        assert_eq!(round.out_qubits(), 0);
        assert_abs_diff_eq!(round.entry(0, 0), 1.0, epsilon = 1e-15);
        let id1 = TransferMatrix::identity(1).unwrap();
        let wide = id1.tensor(&round).unwrap();
        assert_eq!(wide.dense(), DMatrix::identity(4, 4));
    }

    #[test]
    fn choi_cost_of_t_is_d_of_a_state() {
        let t = gate(UnitaryGate::T);
        assert_abs_diff_eq!(t.choi_cost(), (1.0 + SQRT_2) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(TransferMatrix::identity(1).unwrap().choi_cost(), 1.0);
    }

    #[test]
    fn tp_identity_row_for_builtins() {
        let specs = [
            ChannelSpec::Unitary(UnitaryGate::H),
            ChannelSpec::Unitary(UnitaryGate::Cnot),
            ChannelSpec::Depolarizing(0.2),
            ChannelSpec::AmplitudeDamping(0.3),
            ChannelSpec::GadgetMeasureControl,
            ChannelSpec::TraceOut(2),
        ];
        for spec in specs {
            let tm = build_named(&spec).unwrap();
            assert!(tm.is_trace_preserving());
            let scale = (1u64 << tm.in_qubits()) as f64 / (1u64 << tm.out_qubits()) as f64;
            for i in 0..1usize << (2 * tm.in_qubits()) {
                let want = if i == 0 { scale } else { 0.0 };
                assert_abs_diff_eq!(tm.entry(0, i), want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn kraus_completeness_enforced() {
        let half = DMatrix::from_diagonal_element(2, 2, Complex64::new(0.5, 0.0));
        assert!(matches!(
            ptm_from_kraus(std::slice::from_ref(&half), 1, 1, true),
            Err(Error::KrausCompleteness(_))
        ));
        assert!(ptm_from_kraus(&[half], 1, 1, false).is_ok());
    }

    #[test]
    fn parameter_ranges_enforced() {
        assert!(build_named(&ChannelSpec::Depolarizing(1.2)).is_err());
        assert!(build_named(&ChannelSpec::AmplitudeDamping(-0.1)).is_err());
        assert!(build_named(&ChannelSpec::TraceOut(0)).is_err());
        assert!(build_named(&ChannelSpec::TraceOut(4)).is_err());
    }

    #[test]
    fn columns_match_kraus_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (kraus, tm) = random_kraus_channel(&mut rng, 2, 2);
        assert!(column_deviation(&tm, &kraus) < 1e-10);
    }

    #[test]
    fn rz_at_clifford_angles_snaps() {
        assert!(gate(UnitaryGate::Rz(FRAC_PI_2)).is_clifford());
        assert!(gate(UnitaryGate::Rz(std::f64::consts::PI)).is_clifford());
        assert!(!gate(UnitaryGate::Rz(0.3)).is_clifford());
    }

    #[test]
    fn sample_column_distribution() {
        let t = gate(UnitaryGate::T);
        // column X of T: equal halves on X and Y, positive weight sqrt(2)
        let (j0, f0) = t.sample_column(w("X"), 0.25).unwrap();
        let (j1, f1) = t.sample_column(w("X"), 0.75).unwrap();
        assert_eq!((j0, j1), (w("X"), w("Y")));
        assert_abs_diff_eq!(f0, SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(f1, SQRT_2, epsilon = 1e-12);
        // dead column: trace_out kills non-identity letters
        let tr = build_named(&ChannelSpec::TraceOut(1)).unwrap();
        assert!(tr.sample_column(w("X"), 0.5).is_none());
        assert_eq!(tr.sample_column(0, 0.5), Some((0, 2.0)));
    }

    #[test]
    fn apply_matches_dense_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (kraus, tm) = random_kraus_channel(&mut rng, 1, 1);
        let rho = random_hermitian(&mut rng, 1);
        let mut image = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        for k in &kraus {
            image += k * rho.matrix() * k.adjoint();
        }
        let sym = (&image + image.adjoint()) * Complex64::new(0.5, 0.0);
        let direct = bloch_from_dense(&DenseOperator::new(sym).unwrap()).unwrap();
        let via_tm = tm.apply(&bloch_from_dense(&rho).unwrap()).unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(direct.coeff(j), via_tm.coeff(j), epsilon = 1e-10);
        }
        let _ = dense_from_bloch(&via_tm).unwrap();
    }
}
