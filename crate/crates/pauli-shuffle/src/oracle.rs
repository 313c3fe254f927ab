//! Exact dense density-matrix simulation, used as ground truth for the
//! Monte Carlo sampler and for Choi-state construction.
//!
//! Correctness beats speed here: channels are applied by gathering the
//! targeted qubits into small blocks, running the Kraus sum on each block,
//! and scattering the result back into the register. The register follows
//! the same layout rules as the sampler ([`crate::circuit::step_layout`]),
//! so trace-outs, appends and width-changing channels move qubits
//! identically in both engines.

use crate::bloch::{
    bloch_from_dense, dense_from_bloch, BlochVector, DenseOperator, MAX_DENSE_QUBITS,
};
use crate::channel::{ChannelAction, ChannelSpec};
use crate::circuit::{scatter_bits, step_layout, Circuit, StepLayout};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// A density matrix carried exactly through a circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    num_qubits: usize,
    matrix: DMatrix<Complex64>,
}

impl DenseState {
    /// Wrap and validate a density operator: unit trace and positive
    /// semidefiniteness within 1e-10.
    pub fn new(op: DenseOperator) -> Result<DenseState> {
        op.validate_density(1e-10)?;
        Ok(DenseState {
            num_qubits: op.num_qubits(),
            matrix: op.into_matrix(),
        })
    }

    /// Tensor product of single-qubit (or wider) density factors; factor `i`
    /// occupies the register directly above factor `i - 1`.
    pub fn from_product(factors: &[DenseOperator]) -> Result<DenseState> {
        let mut acc: Option<DenseOperator> = None;
        for f in factors {
            acc = Some(match acc {
                None => f.clone(),
                Some(a) => a.tensor(f)?,
            });
        }
        let op = acc.ok_or_else(|| Error::Validation("empty initial state".into()))?;
        DenseState::new(op)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn to_operator(&self) -> DenseOperator {
        DenseOperator::new(self.matrix.clone()).expect("state matrices stay Hermitian")
    }

    /// Bloch coefficients of the state (width permitting).
    pub fn bloch(&self) -> Result<BlochVector> {
        bloch_from_dense(&self.to_operator())
    }

    /// `Tr(E rho)`; the imaginary part must vanish for Hermitian inputs.
    pub fn expectation(&self, observable: &DenseOperator) -> Result<f64> {
        if observable.num_qubits() != self.num_qubits {
            return Err(Error::QubitMismatch(
                observable.num_qubits(),
                self.num_qubits,
            ));
        }
        let tr = (observable.matrix() * &self.matrix).trace();
        if tr.im.abs() > 1e-10 {
            return Err(Error::Validation(format!(
                "expectation has imaginary part {:.3e}",
                tr.im
            )));
        }
        Ok(tr.re)
    }

    /// Apply one channel to the given targets, adjusting the register for
    /// width-changing channels.
    pub fn apply(&self, spec: &ChannelSpec, targets: &[usize]) -> Result<DenseState> {
        let (n_in, n_out) = spec.arity()?;
        let layout = step_layout(self.num_qubits, targets, n_in, n_out)?;
        if layout.width_after > MAX_DENSE_QUBITS {
            return Err(Error::WidthCap {
                what: "dense state",
                width: layout.width_after,
                cap: MAX_DENSE_QUBITS,
            });
        }
        let raw = match spec.action()? {
            ChannelAction::Kraus(kraus) => apply_kraus_at(&self.matrix, &layout, &kraus),
            ChannelAction::TraceOut(_) => partial_trace_at(&self.matrix, &layout),
            ChannelAction::Append(v) => {
                let tau = dense_from_bloch(&v)?;
                // appended qubits occupy the highest positions: left factor
                tau.matrix().kronecker(&self.matrix)
            }
        };
        // shave off non-Hermitian numerical dust before it can accumulate
        let sym = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
        if spec.is_trace_preserving() {
            let tr = sym.trace().re;
            if (tr - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "trace drifted to {tr} after {}",
                    spec.name()
                )));
            }
        }
        Ok(DenseState {
            num_qubits: layout.width_after,
            matrix: sym,
        })
    }
}

/// Free-function form of [`DenseState::apply`].
pub fn apply_channel_dense(
    state: &DenseState,
    spec: &ChannelSpec,
    targets: &[usize],
) -> Result<DenseState> {
    state.apply(spec, targets)
}

/// Free-function form of [`DenseState::expectation`].
pub fn expectation(state: &DenseState, observable: &DenseOperator) -> Result<f64> {
    state.expectation(observable)
}

/// Kraus-sum application on the targeted qubits of a register matrix.
fn apply_kraus_at(
    matrix: &DMatrix<Complex64>,
    layout: &StepLayout,
    kraus: &[DMatrix<Complex64>],
) -> DMatrix<Complex64> {
    let rest_old: Vec<usize> = layout.carry.iter().map(|&(o, _)| o).collect();
    let rest_new: Vec<usize> = layout.carry.iter().map(|&(_, n)| n).collect();
    let din = 1usize << layout.targets.len();
    let dout = 1usize << layout.outputs.len();
    let rest_dim = 1usize << rest_old.len();
    let new_dim = 1usize << layout.width_after;
    let zero = Complex64::new(0.0, 0.0);
    let mut out = DMatrix::from_element(new_dim, new_dim, zero);
    let mut block = DMatrix::from_element(din, din, zero);
    for rr in 0..rest_dim {
        let row_rest_old = scatter_bits(rr, &rest_old);
        let row_rest_new = scatter_bits(rr, &rest_new);
        for rc in 0..rest_dim {
            let col_rest_old = scatter_bits(rc, &rest_old);
            let col_rest_new = scatter_bits(rc, &rest_new);
            for ir in 0..din {
                let gr = scatter_bits(ir, &layout.targets) | row_rest_old;
                for ic in 0..din {
                    let gc = scatter_bits(ic, &layout.targets) | col_rest_old;
                    block[(ir, ic)] = matrix[(gr, gc)];
                }
            }
            let mut image = DMatrix::from_element(dout, dout, zero);
            for k in kraus {
                image += k * &block * k.adjoint();
            }
            for or_ in 0..dout {
                let gr = scatter_bits(or_, &layout.outputs) | row_rest_new;
                for oc in 0..dout {
                    let gc = scatter_bits(oc, &layout.outputs) | col_rest_new;
                    out[(gr, gc)] += image[(or_, oc)];
                }
            }
        }
    }
    out
}

/// Partial trace over the layout's target qubits.
fn partial_trace_at(matrix: &DMatrix<Complex64>, layout: &StepLayout) -> DMatrix<Complex64> {
    let rest_old: Vec<usize> = layout.carry.iter().map(|&(o, _)| o).collect();
    let rest_new: Vec<usize> = layout.carry.iter().map(|&(_, n)| n).collect();
    let din = 1usize << layout.targets.len();
    let rest_dim = 1usize << rest_old.len();
    let new_dim = 1usize << layout.width_after;
    let mut out = DMatrix::from_element(new_dim, new_dim, Complex64::new(0.0, 0.0));
    for rr in 0..rest_dim {
        let row_old = scatter_bits(rr, &rest_old);
        let row_new = scatter_bits(rr, &rest_new);
        for rc in 0..rest_dim {
            let col_old = scatter_bits(rc, &rest_old);
            let col_new = scatter_bits(rc, &rest_new);
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..din {
                let t = scatter_bits(b, &layout.targets);
                acc += matrix[(t | row_old, t | col_old)];
            }
            out[(row_new, col_new)] = acc;
        }
    }
    out
}

/// The Choi state of a channel: reference qubits `[0, n)` maximally
/// entangled with inputs `[n, 2n)`, then the channel applied to the inputs.
pub fn choi_state(spec: &ChannelSpec) -> Result<DenseState> {
    let (n, _) = spec.arity()?;
    if n == 0 {
        return Err(Error::Validation(
            "Choi state undefined for channels with no input".into(),
        ));
    }
    let dim = 1usize << (2 * n);
    let amp = Complex64::new(1.0 / (1u64 << n) as f64, 0.0);
    let mut bell = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for b in 0..1usize << n {
        for bp in 0..1usize << n {
            bell[(b | (b << n), bp | (bp << n))] = amp;
        }
    }
    let state = DenseState {
        num_qubits: 2 * n,
        matrix: bell,
    };
    let targets: Vec<usize> = (n..2 * n).collect();
    state.apply(spec, &targets)
}

/// Run a whole circuit exactly, returning the final state.
pub fn run_circuit(circuit: &Circuit) -> Result<DenseState> {
    let (_, final_width) = circuit.validate()?;
    if final_width > MAX_DENSE_QUBITS || circuit.num_qubits > MAX_DENSE_QUBITS {
        return Err(Error::WidthCap {
            what: "dense state",
            width: final_width.max(circuit.num_qubits),
            cap: MAX_DENSE_QUBITS,
        });
    }
    let factors = circuit
        .initial
        .iter()
        .map(|s| s.dense())
        .collect::<Result<Vec<_>>>()?;
    let mut state = DenseState::from_product(&factors)?;
    for step in &circuit.ops {
        state = state.apply(&step.channel, &step.targets)?;
    }
    Ok(state)
}

/// Exact expectation value of a circuit's observable.
pub fn circuit_expectation(circuit: &Circuit) -> Result<f64> {
    let state = run_circuit(circuit)?;
    let obs = circuit.observable.dense_full(state.num_qubits())?;
    state.expectation(&obs)
}
