//! Circuit description: initial product state, ordered channel applications,
//! and the measured observable, plus the JSON file format.
//!
//! A circuit starts from a product of single-qubit states. Each step applies
//! a [`ChannelSpec`] to a list of target qubits; channels whose output width
//! differs from their input width shrink or grow the register, and
//! [`StepLayout`] records how qubit positions move. Validation walks the op
//! list once and returns the layouts together with the final register width.

use crate::bloch::{bloch_from_dense, BlochVector, DenseOperator};
use crate::channel::{ChannelSpec, UnitaryGate};
use crate::error::{Error, Result};
use crate::pauli::{Letter, PauliString};
use num_complex::Complex64;
use serde_json::{json, Map, Value};

/// Register width cap for trajectory sampling; keeps Pauli words in range
/// and memory desk-scale.
pub const MAX_REGISTER_QUBITS: usize = 24;

/// Dense observables are restricted to supports this wide.
pub const MAX_OBSERVABLE_SUPPORT: usize = 8;

/// How one channel application rearranges the register.
///
/// Channels with fewer outputs than inputs consume their first
/// `in - out` targets (the gadget measures and discards its first target);
/// channels with more outputs than inputs append the extra qubits at the end
/// of the register. Surviving targets keep their positions and receive the
/// channel's output qubits in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepLayout {
    pub width_before: usize,
    pub width_after: usize,
    /// Input qubit positions, in channel order (old coordinates).
    pub targets: Vec<usize>,
    /// Qubits removed from the register (old coordinates, ascending).
    pub removed: Vec<usize>,
    /// New-register position of each channel output qubit.
    pub outputs: Vec<usize>,
    /// `(old, new)` positions of every qubit the channel does not touch.
    pub carry: Vec<(usize, usize)>,
}

/// Compute the layout of one channel application.
pub fn step_layout(
    width: usize,
    targets: &[usize],
    in_qubits: usize,
    out_qubits: usize,
) -> Result<StepLayout> {
    if targets.len() != in_qubits {
        return Err(Error::Validation(format!(
            "channel expects {in_qubits} target(s), got {}",
            targets.len()
        )));
    }
    for (i, &t) in targets.iter().enumerate() {
        if t >= width {
            return Err(Error::QubitIndex {
                index: t,
                width,
            });
        }
        if targets[..i].contains(&t) {
            return Err(Error::DuplicateQubit(t));
        }
    }
    let shrink = in_qubits.saturating_sub(out_qubits);
    let mut removed: Vec<usize> = targets[..shrink].to_vec();
    removed.sort_unstable();
    let new_pos = |old: usize| old - removed.iter().filter(|&&r| r < old).count();
    let width_after = width - in_qubits + out_qubits;
    if width_after > MAX_REGISTER_QUBITS {
        return Err(Error::WidthCap {
            what: "register",
            width: width_after,
            cap: MAX_REGISTER_QUBITS,
        });
    }
    let outputs = (0..out_qubits)
        .map(|i| {
            if out_qubits <= in_qubits {
                new_pos(targets[shrink + i])
            } else if i < in_qubits {
                targets[i]
            } else {
                width + (i - in_qubits)
            }
        })
        .collect();
    let carry = (0..width)
        .filter(|p| !targets.contains(p))
        .map(|p| (p, new_pos(p)))
        .collect();
    Ok(StepLayout {
        width_before: width,
        width_after,
        targets: targets.to_vec(),
        removed,
        outputs,
        carry,
    })
}

/// Named single-qubit input states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedState {
    Zero,
    One,
    Plus,
    Minus,
    IPlus,
    /// `(|0> + e^{i pi/4} |1>)/sqrt(2)`, the T-gate magic state.
    A,
    MaximallyMixed,
}

impl NamedState {
    pub fn from_name(name: &str) -> Option<NamedState> {
        match name.to_ascii_lowercase().as_str() {
            "zero" | "0" => Some(NamedState::Zero),
            "one" | "1" => Some(NamedState::One),
            "plus" | "+" => Some(NamedState::Plus),
            "minus" | "-" => Some(NamedState::Minus),
            "i_plus" | "+i" => Some(NamedState::IPlus),
            "a" => Some(NamedState::A),
            "maximally_mixed" | "mixed" => Some(NamedState::MaximallyMixed),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NamedState::Zero => "zero",
            NamedState::One => "one",
            NamedState::Plus => "plus",
            NamedState::Minus => "minus",
            NamedState::IPlus => "i_plus",
            NamedState::A => "a",
            NamedState::MaximallyMixed => "maximally_mixed",
        }
    }

    /// Bloch coefficients `(c_I, c_X, c_Y, c_Z)`.
    pub fn bloch(self) -> BlochVector {
        let r = std::f64::consts::FRAC_1_SQRT_2 / 2.0;
        let coeffs = match self {
            NamedState::Zero => [0.5, 0.0, 0.0, 0.5],
            NamedState::One => [0.5, 0.0, 0.0, -0.5],
            NamedState::Plus => [0.5, 0.5, 0.0, 0.0],
            NamedState::Minus => [0.5, -0.5, 0.0, 0.0],
            NamedState::IPlus => [0.5, 0.0, 0.5, 0.0],
            NamedState::A => [0.5, r, r, 0.0],
            NamedState::MaximallyMixed => [0.5, 0.0, 0.0, 0.0],
        };
        BlochVector::new(1, coeffs.to_vec()).expect("single-qubit vector")
    }
}

/// One qubit of the initial product state.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    Named(NamedState),
    /// Arbitrary 2x2 density matrix.
    Custom(DenseOperator),
}

impl StateSpec {
    pub fn bloch(&self) -> Result<BlochVector> {
        match self {
            StateSpec::Named(n) => Ok(n.bloch()),
            StateSpec::Custom(op) => bloch_from_dense(op),
        }
    }

    pub fn dense(&self) -> Result<DenseOperator> {
        match self {
            StateSpec::Named(n) => crate::bloch::dense_from_bloch(&n.bloch()),
            StateSpec::Custom(op) => Ok(op.clone()),
        }
    }

    fn validate(&self) -> Result<()> {
        if let StateSpec::Custom(op) = self {
            if op.num_qubits() != 1 {
                return Err(Error::QubitMismatch(op.num_qubits(), 1));
            }
            op.validate_density(1e-9)?;
        }
        Ok(())
    }
}

/// One circuit step: a channel applied to a target list.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub channel: ChannelSpec,
    pub targets: Vec<usize>,
}

/// The measured observable, on the final register.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableSpec {
    /// Tensor product of single-qubit Hermitian factors on the listed
    /// qubits, identity elsewhere.
    Product { factors: Vec<(usize, DenseOperator)> },
    /// Projector onto fixed computational-basis outcomes of a qubit subset,
    /// identity on the rest.
    BasisProjector { outcomes: Vec<(usize, bool)> },
    /// A signed Pauli string over the whole final register.
    Pauli(PauliString),
    /// Dense Hermitian operator on a small support, identity elsewhere.
    DenseLocal {
        support: Vec<usize>,
        op: DenseOperator,
    },
}

impl ObservableSpec {
    /// Qubits on which the observable differs from identity scaling.
    pub fn support(&self) -> Vec<usize> {
        match self {
            ObservableSpec::Product { factors } => factors.iter().map(|(q, _)| *q).collect(),
            ObservableSpec::BasisProjector { outcomes } => {
                outcomes.iter().map(|(q, _)| *q).collect()
            }
            ObservableSpec::Pauli(p) => (0..p.num_qubits()).collect(),
            ObservableSpec::DenseLocal { support, .. } => support.clone(),
        }
    }

    pub fn validate(&self, final_width: usize) -> Result<()> {
        let support = self.support();
        for (i, &q) in support.iter().enumerate() {
            if q >= final_width {
                return Err(Error::QubitIndex {
                    index: q,
                    width: final_width,
                });
            }
            if support[..i].contains(&q) {
                return Err(Error::DuplicateQubit(q));
            }
        }
        match self {
            ObservableSpec::Product { factors } => {
                for (_, op) in factors {
                    if op.num_qubits() != 1 {
                        return Err(Error::QubitMismatch(op.num_qubits(), 1));
                    }
                }
            }
            ObservableSpec::Pauli(p) => {
                if p.num_qubits() != final_width {
                    return Err(Error::QubitMismatch(p.num_qubits(), final_width));
                }
            }
            ObservableSpec::DenseLocal { support, op } => {
                if support.len() > MAX_OBSERVABLE_SUPPORT {
                    return Err(Error::WidthCap {
                        what: "observable support",
                        width: support.len(),
                        cap: MAX_OBSERVABLE_SUPPORT,
                    });
                }
                if op.num_qubits() != support.len() {
                    return Err(Error::QubitMismatch(op.num_qubits(), support.len()));
                }
            }
            ObservableSpec::BasisProjector { .. } => {}
        }
        Ok(())
    }

    /// The observable as a dense operator on the full final register
    /// (identity tensored onto unsupported qubits). Used by the oracle.
    pub fn dense_full(&self, final_width: usize) -> Result<DenseOperator> {
        self.validate(final_width)?;
        let dim = 1usize << final_width;
        let mut m = nalgebra::DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        match self {
            ObservableSpec::Pauli(p) => {
                return DenseOperator::new(p.matrix());
            }
            ObservableSpec::BasisProjector { outcomes } => {
                'rows: for r in 0..dim {
                    for &(q, v) in outcomes {
                        if (r >> q) & 1 != v as usize {
                            continue 'rows;
                        }
                    }
                    m[(r, r)] = Complex64::new(1.0, 0.0);
                }
            }
            ObservableSpec::Product { factors } => {
                // diagonal-in-support structure is not guaranteed; build by
                // per-qubit factor lookup
                for r in 0..dim {
                    for c in 0..dim {
                        let mut v = Complex64::new(1.0, 0.0);
                        let mut onsupp = true;
                        for q in 0..final_width {
                            let (rb, cb) = ((r >> q) & 1, (c >> q) & 1);
                            match factors.iter().find(|(fq, _)| *fq == q) {
                                Some((_, op)) => v *= op.matrix()[(rb, cb)],
                                None => {
                                    if rb != cb {
                                        onsupp = false;
                                        break;
                                    }
                                }
                            }
                        }
                        if onsupp {
                            m[(r, c)] = v;
                        }
                    }
                }
            }
            ObservableSpec::DenseLocal { support, op } => {
                let rest: Vec<usize> =
                    (0..final_width).filter(|q| !support.contains(q)).collect();
                for r in 0..dim {
                    for c in 0..dim {
                        if rest.iter().any(|&q| (r >> q) & 1 != (c >> q) & 1) {
                            continue;
                        }
                        let lr = gather_bits(r, support);
                        let lc = gather_bits(c, support);
                        m[(r, c)] = op.matrix()[(lr, lc)];
                    }
                }
            }
        }
        DenseOperator::new(m)
    }
}

/// Bit `i` of the result is bit `positions[i]` of `index`.
pub(crate) fn gather_bits(index: usize, positions: &[usize]) -> usize {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &p)| acc | (((index >> p) & 1) << i))
}

/// Place bit `i` of `value` at bit `positions[i]` of the result.
pub(crate) fn scatter_bits(value: usize, positions: &[usize]) -> usize {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &p)| acc | (((value >> i) & 1) << p))
}

/// A full simulation problem: state, ops, observable.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub num_qubits: usize,
    pub initial: Vec<StateSpec>,
    pub ops: Vec<Step>,
    pub observable: ObservableSpec,
}

impl Circuit {
    /// Validate the whole pipeline; returns the per-step layouts and the
    /// final register width.
    pub fn validate(&self) -> Result<(Vec<StepLayout>, usize)> {
        if self.num_qubits == 0 || self.num_qubits > MAX_REGISTER_QUBITS {
            return Err(Error::WidthCap {
                what: "register",
                width: self.num_qubits,
                cap: MAX_REGISTER_QUBITS,
            });
        }
        if self.initial.len() != self.num_qubits {
            return Err(Error::Validation(format!(
                "{} initial states for a {}-qubit register",
                self.initial.len(),
                self.num_qubits
            )));
        }
        for (q, s) in self.initial.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::Validation(format!("initial[{q}]: {e}")))?;
        }
        let mut width = self.num_qubits;
        let mut layouts = Vec::with_capacity(self.ops.len());
        for (i, step) in self.ops.iter().enumerate() {
            let (n_in, n_out) = step
                .channel
                .arity()
                .map_err(|e| Error::Validation(format!("ops[{i}]: {e}")))?;
            let layout = step_layout(width, &step.targets, n_in, n_out)
                .map_err(|e| Error::Validation(format!("ops[{i}]: {e}")))?;
            width = layout.width_after;
            layouts.push(layout);
        }
        self.observable
            .validate(width)
            .map_err(|e| Error::Validation(format!("observable: {e}")))?;
        Ok((layouts, width))
    }

    /// Register width after all ops.
    pub fn final_width(&self) -> Result<usize> {
        Ok(self.validate()?.1)
    }
}

// ---------------------------------------------------------------------------
// JSON format
// ---------------------------------------------------------------------------

fn path_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{path}: {msg}"))
}

fn as_obj<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| path_err(path, "expected an object"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| path_err(path, "expected an array"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| path_err(path, "expected a number"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| path_err(path, "expected a non-negative integer"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| path_err(path, "expected a string"))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| path_err(path, format!("missing field '{key}'")))
}

/// Parse a complex entry `[re, im]`.
fn parse_complex(v: &Value, path: &str) -> Result<Complex64> {
    let pair = as_array(v, path)?;
    if pair.len() != 2 {
        return Err(path_err(path, "expected [re, im]"));
    }
    Ok(Complex64::new(
        as_f64(&pair[0], path)?,
        as_f64(&pair[1], path)?,
    ))
}

/// Parse a complex matrix given as rows of `[re, im]` pairs.
fn parse_matrix(v: &Value, path: &str) -> Result<nalgebra::DMatrix<Complex64>> {
    let rows = as_array(v, path)?;
    if rows.is_empty() {
        return Err(path_err(path, "empty matrix"));
    }
    let ncols = as_array(&rows[0], path)?.len();
    let mut data = Vec::with_capacity(rows.len() * ncols);
    for (r, row) in rows.iter().enumerate() {
        let row = as_array(row, &format!("{path}[{r}]"))?;
        if row.len() != ncols {
            return Err(path_err(path, "ragged matrix rows"));
        }
        for (c, entry) in row.iter().enumerate() {
            data.push(parse_complex(entry, &format!("{path}[{r}][{c}]"))?);
        }
    }
    Ok(nalgebra::DMatrix::from_row_slice(rows.len(), ncols, &data))
}

fn matrix_to_json(m: &nalgebra::DMatrix<Complex64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| {
                Value::Array(
                    (0..m.ncols())
                        .map(|c| json!([m[(r, c)].re, m[(r, c)].im]))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn parse_state_spec(v: &Value, path: &str) -> Result<StateSpec> {
    match v {
        Value::String(s) => NamedState::from_name(s)
            .map(StateSpec::Named)
            .ok_or_else(|| path_err(path, format!("unknown state '{s}'"))),
        Value::Object(obj) => {
            let m = parse_matrix(field(obj, "matrix", path)?, &format!("{path}.matrix"))?;
            let op = DenseOperator::new(m).map_err(|e| path_err(path, e))?;
            Ok(StateSpec::Custom(op))
        }
        _ => Err(path_err(path, "expected a state name or {\"matrix\": ...}")),
    }
}

fn state_spec_to_json(s: &StateSpec) -> Value {
    match s {
        StateSpec::Named(n) => Value::String(n.name().into()),
        StateSpec::Custom(op) => json!({ "matrix": matrix_to_json(op.matrix()) }),
    }
}

fn parse_gate(name: &str, obj: &Map<String, Value>, path: &str) -> Result<Option<UnitaryGate>> {
    let g = match name {
        "x" => UnitaryGate::X,
        "y" => UnitaryGate::Y,
        "z" => UnitaryGate::Z,
        "h" => UnitaryGate::H,
        "s" | "p" => UnitaryGate::S,
        "t" => UnitaryGate::T,
        "cnot" | "cx" => UnitaryGate::Cnot,
        "cz" => UnitaryGate::Cz,
        "swap" => UnitaryGate::Swap,
        "rz" => {
            let theta = as_f64(field(obj, "theta", path)?, &format!("{path}.theta"))?;
            UnitaryGate::Rz(theta)
        }
        _ => return Ok(None),
    };
    Ok(Some(g))
}

fn parse_step(v: &Value, path: &str) -> Result<Step> {
    let obj = as_obj(v, path)?;
    let name_raw = obj
        .get("gate")
        .or_else(|| obj.get("channel"))
        .ok_or_else(|| path_err(path, "missing 'gate' or 'channel'"))?;
    let name = as_str(name_raw, path)?.to_ascii_lowercase();
    let targets: Vec<usize> = match obj.get("targets") {
        Some(t) => as_array(t, &format!("{path}.targets"))?
            .iter()
            .map(|x| as_usize(x, &format!("{path}.targets")))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let channel = if let Some(g) = parse_gate(&name, obj, path)? {
        ChannelSpec::Unitary(g)
    } else {
        match name.as_str() {
            "depolarizing" => {
                ChannelSpec::Depolarizing(as_f64(field(obj, "p", path)?, &format!("{path}.p"))?)
            }
            "dephasing" => {
                ChannelSpec::Dephasing(as_f64(field(obj, "p", path)?, &format!("{path}.p"))?)
            }
            "amplitude_damping" => ChannelSpec::AmplitudeDamping(as_f64(
                field(obj, "gamma", path)?,
                &format!("{path}.gamma"),
            )?),
            "trace_out" => ChannelSpec::TraceOut(targets.len()),
            "append" => {
                let specs = as_array(field(obj, "state", path)?, &format!("{path}.state"))?;
                let mut bloch: Option<BlochVector> = None;
                for (i, sv) in specs.iter().enumerate() {
                    let s = parse_state_spec(sv, &format!("{path}.state[{i}]"))?;
                    let b = s.bloch().map_err(|e| path_err(path, e))?;
                    bloch = Some(match bloch {
                        None => b,
                        Some(acc) => acc.tensor(&b).map_err(|e| path_err(path, e))?,
                    });
                }
                let bloch =
                    bloch.ok_or_else(|| path_err(path, "append needs at least one state"))?;
                ChannelSpec::AppendState(bloch)
            }
            "gadget_measure_control" | "gadget" => ChannelSpec::GadgetMeasureControl,
            "measure_control" => {
                let corr_name = as_str(
                    field(obj, "correction", path)?,
                    &format!("{path}.correction"),
                )?
                .to_ascii_lowercase();
                let correction = parse_gate(&corr_name, obj, path)?
                    .ok_or_else(|| path_err(path, format!("unknown gate '{corr_name}'")))?;
                ChannelSpec::MeasureControl { correction }
            }
            "kraus" => {
                let in_qubits =
                    as_usize(field(obj, "in_qubits", path)?, &format!("{path}.in_qubits"))?;
                let out_qubits = as_usize(
                    field(obj, "out_qubits", path)?,
                    &format!("{path}.out_qubits"),
                )?;
                let trace_preserving = match obj.get("trace_preserving") {
                    Some(v) => v
                        .as_bool()
                        .ok_or_else(|| path_err(path, "trace_preserving must be a boolean"))?,
                    None => true,
                };
                let mats = as_array(field(obj, "matrices", path)?, &format!("{path}.matrices"))?
                    .iter()
                    .enumerate()
                    .map(|(i, m)| parse_matrix(m, &format!("{path}.matrices[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                ChannelSpec::Kraus {
                    matrices: mats,
                    in_qubits,
                    out_qubits,
                    trace_preserving,
                }
            }
            other => return Err(path_err(path, format!("unknown gate or channel '{other}'"))),
        }
    };
    Ok(Step { channel, targets })
}

fn step_to_json(step: &Step) -> Value {
    let mut obj = Map::new();
    match &step.channel {
        ChannelSpec::Unitary(g) => {
            match g {
                UnitaryGate::Rz(theta) => {
                    obj.insert("gate".into(), "rz".into());
                    obj.insert("theta".into(), json!(theta));
                }
                other => {
                    obj.insert(
                        "gate".into(),
                        format!("{other:?}").to_lowercase().into(),
                    );
                }
            };
        }
        ChannelSpec::Depolarizing(p) => {
            obj.insert("channel".into(), "depolarizing".into());
            obj.insert("p".into(), json!(p));
        }
        ChannelSpec::Dephasing(p) => {
            obj.insert("channel".into(), "dephasing".into());
            obj.insert("p".into(), json!(p));
        }
        ChannelSpec::AmplitudeDamping(g) => {
            obj.insert("channel".into(), "amplitude_damping".into());
            obj.insert("gamma".into(), json!(g));
        }
        ChannelSpec::TraceOut(_) => {
            obj.insert("channel".into(), "trace_out".into());
        }
        ChannelSpec::AppendState(v) => {
            obj.insert("channel".into(), "append".into());
            // serialized as the dense matrix of the appended state
            let dense = crate::bloch::dense_from_bloch(v).expect("append state within caps");
            obj.insert(
                "state".into(),
                json!([{ "matrix": matrix_to_json(dense.matrix()) }]),
            );
        }
        ChannelSpec::GadgetMeasureControl => {
            obj.insert("channel".into(), "gadget_measure_control".into());
        }
        ChannelSpec::MeasureControl { correction } => {
            obj.insert("channel".into(), "measure_control".into());
            obj.insert(
                "correction".into(),
                format!("{correction:?}").to_lowercase().into(),
            );
        }
        ChannelSpec::Kraus {
            matrices,
            in_qubits,
            out_qubits,
            trace_preserving,
        } => {
            obj.insert("channel".into(), "kraus".into());
            obj.insert("in_qubits".into(), json!(in_qubits));
            obj.insert("out_qubits".into(), json!(out_qubits));
            obj.insert("trace_preserving".into(), json!(trace_preserving));
            obj.insert(
                "matrices".into(),
                Value::Array(matrices.iter().map(matrix_to_json).collect()),
            );
        }
    }
    obj.insert(
        "targets".into(),
        Value::Array(step.targets.iter().map(|&t| json!(t)).collect()),
    );
    Value::Object(obj)
}

fn parse_observable(v: &Value, path: &str) -> Result<ObservableSpec> {
    let obj = as_obj(v, path)?;
    let kind = as_str(field(obj, "kind", path)?, path)?.to_ascii_lowercase();
    match kind.as_str() {
        "product" => {
            let factors = as_array(field(obj, "factors", path)?, &format!("{path}.factors"))?
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let fpath = format!("{path}.factors[{i}]");
                    let fobj = as_obj(f, &fpath)?;
                    let qubit = as_usize(field(fobj, "qubit", &fpath)?, &fpath)?;
                    let op = if let Some(name) = fobj.get("op") {
                        named_factor(as_str(name, &fpath)?, &fpath)?
                    } else {
                        DenseOperator::new(parse_matrix(
                            field(fobj, "matrix", &fpath)?,
                            &format!("{fpath}.matrix"),
                        )?)
                        .map_err(|e| path_err(&fpath, e))?
                    };
                    Ok((qubit, op))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ObservableSpec::Product { factors })
        }
        "basis_projector" => {
            let outcomes = as_array(field(obj, "outcomes", path)?, &format!("{path}.outcomes"))?
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    let opath = format!("{path}.outcomes[{i}]");
                    let oobj = as_obj(o, &opath)?;
                    let qubit = as_usize(field(oobj, "qubit", &opath)?, &opath)?;
                    let value = as_usize(field(oobj, "value", &opath)?, &opath)?;
                    if value > 1 {
                        return Err(path_err(&opath, "outcome must be 0 or 1"));
                    }
                    Ok((qubit, value == 1))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ObservableSpec::BasisProjector { outcomes })
        }
        "pauli" => {
            let s = as_str(field(obj, "string", path)?, &format!("{path}.string"))?;
            let p: PauliString = s.parse().map_err(|e| path_err(path, e))?;
            Ok(ObservableSpec::Pauli(p))
        }
        "dense_local" => {
            let support = as_array(field(obj, "support", path)?, &format!("{path}.support"))?
                .iter()
                .map(|x| as_usize(x, &format!("{path}.support")))
                .collect::<Result<Vec<_>>>()?;
            let op = DenseOperator::new(parse_matrix(
                field(obj, "matrix", path)?,
                &format!("{path}.matrix"),
            )?)
            .map_err(|e| path_err(path, e))?;
            Ok(ObservableSpec::DenseLocal { support, op })
        }
        other => Err(path_err(path, format!("unknown observable kind '{other}'"))),
    }
}

/// Named single-qubit observable factors for the product kind.
fn named_factor(name: &str, path: &str) -> Result<DenseOperator> {
    let m = match name.to_ascii_lowercase().as_str() {
        "i" => Letter::I.matrix(),
        "x" => Letter::X.matrix(),
        "y" => Letter::Y.matrix(),
        "z" => Letter::Z.matrix(),
        "proj0" => {
            let mut m = nalgebra::DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
            m[(0, 0)] = Complex64::new(1.0, 0.0);
            m
        }
        "proj1" => {
            let mut m = nalgebra::DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
            m[(1, 1)] = Complex64::new(1.0, 0.0);
            m
        }
        other => return Err(path_err(path, format!("unknown factor '{other}'"))),
    };
    DenseOperator::new(m).map_err(|e| path_err(path, e))
}

fn observable_to_json(o: &ObservableSpec) -> Value {
    match o {
        ObservableSpec::Product { factors } => json!({
            "kind": "product",
            "factors": factors
                .iter()
                .map(|(q, op)| json!({ "qubit": q, "matrix": matrix_to_json(op.matrix()) }))
                .collect::<Vec<_>>(),
        }),
        ObservableSpec::BasisProjector { outcomes } => json!({
            "kind": "basis_projector",
            "outcomes": outcomes
                .iter()
                .map(|(q, v)| json!({ "qubit": q, "value": *v as usize }))
                .collect::<Vec<_>>(),
        }),
        ObservableSpec::Pauli(p) => json!({ "kind": "pauli", "string": p.to_string() }),
        ObservableSpec::DenseLocal { support, op } => json!({
            "kind": "dense_local",
            "support": support,
            "matrix": matrix_to_json(op.matrix()),
        }),
    }
}

/// Parse and validate a circuit from JSON text.
pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("json: {e}")))?;
    let obj = as_obj(&root, "circuit")?;
    let num_qubits = as_usize(field(obj, "qubits", "circuit")?, "circuit.qubits")?;
    let initial = as_array(field(obj, "initial", "circuit")?, "circuit.initial")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_state_spec(v, &format!("circuit.initial[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let ops = match obj.get("ops") {
        Some(v) => as_array(v, "circuit.ops")?
            .iter()
            .enumerate()
            .map(|(i, s)| parse_step(s, &format!("circuit.ops[{i}]")))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let observable = parse_observable(
        field(obj, "observable", "circuit")?,
        "circuit.observable",
    )?;
    let circuit = Circuit {
        num_qubits,
        initial,
        ops,
        observable,
    };
    circuit.validate()?;
    Ok(circuit)
}

/// Serialize a circuit back to its JSON document.
pub fn circuit_to_json(c: &Circuit) -> Value {
    json!({
        "qubits": c.num_qubits,
        "initial": c.initial.iter().map(state_spec_to_json).collect::<Vec<_>>(),
        "ops": c.ops.iter().map(step_to_json).collect::<Vec<_>>(),
        "observable": observable_to_json(&c.observable),
    })
}
