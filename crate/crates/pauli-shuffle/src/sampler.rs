//! Monte Carlo estimation of circuit expectation values by sampling signed
//! Pauli trajectories.
//!
//! Forward mode draws an initial Pauli letter per qubit from the input
//! state's Bloch coefficients, pushes the string through each channel's
//! transfer matrix (drawing an output Pauli per step with probability
//! proportional to the column entries), and evaluates `Tr(E sigma_f)` at the
//! end. Backward mode starts from the observable's coefficients and walks
//! the adjoint matrices in reverse, finishing with `Tr(sigma_f rho)`. Both
//! produce unbiased estimates whose per-sample magnitude is bounded by the
//! analytic range, so Hoeffding's inequality converts an (epsilon, delta)
//! accuracy target into a sample count.
//!
//! Reproducibility contract: sample `i` uses an independent counter-based
//! RNG stream derived from `(seed, i)`, and the reduction runs in sample
//! order, so reports are bit-identical for a fixed seed regardless of how
//! many worker threads run (`PAULI_SHUFFLE_THREADS` caps the pool).

use crate::bloch::BlochVector;
use crate::channel::{build_named, AdjointTransferMatrix, TransferMatrix};
use crate::circuit::{Circuit, ObservableSpec, StepLayout};
use crate::error::{Error, Result};
use crate::pauli::{pauli_trace, Letter, PauliString, Sign};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Refuse Hoeffding budgets beyond this many samples; callers should switch
/// propagation direction or supply a fixed `--samples` count instead.
pub const MAX_BUDGET_SAMPLES: usize = 100_000_000;

/// Propagation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Forward,
    Backward,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Forward => write!(f, "forward"),
            Mode::Backward => write!(f, "backward"),
        }
    }
}

/// Either a fixed sample count or an accuracy target resolved through
/// [`hoeffding_samples`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSpec {
    Fixed(usize),
    Accuracy { epsilon: f64, delta: f64 },
}

/// The resolved sampling plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingBudget {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub range_bound: f64,
    pub n_samples: usize,
}

impl SamplingBudget {
    pub fn resolve(spec: BudgetSpec, range_bound: f64) -> Result<SamplingBudget> {
        match spec {
            BudgetSpec::Fixed(n) => {
                if n == 0 {
                    return Err(Error::Budget("sample count must be positive".into()));
                }
                Ok(SamplingBudget {
                    epsilon: None,
                    delta: None,
                    range_bound,
                    n_samples: n,
                })
            }
            BudgetSpec::Accuracy { epsilon, delta } => Ok(SamplingBudget {
                epsilon: Some(epsilon),
                delta: Some(delta),
                range_bound,
                n_samples: hoeffding_samples(range_bound, epsilon, delta)?,
            }),
        }
    }
}

/// Sample count `ceil(range^2 ln(2/delta) / (2 epsilon^2))`, floored at 1,
/// from the two-sided Hoeffding bound for a mean of variables spanning
/// `range_bound`.
pub fn hoeffding_samples(range_bound: f64, epsilon: f64, delta: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Budget(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Budget(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(range_bound >= 0.0 && range_bound.is_finite()) {
        return Err(Error::Budget(format!("invalid range bound {range_bound}")));
    }
    let n = (range_bound * range_bound * (2.0 / delta).ln() / (2.0 * epsilon * epsilon)).ceil();
    if n > MAX_BUDGET_SAMPLES as f64 {
        return Err(Error::Budget(format!(
            "accuracy target needs {n:.3e} samples (cap {MAX_BUDGET_SAMPLES}); \
             supply a fixed sample count or switch propagation direction"
        )));
    }
    Ok((n as usize).max(1))
}

/// One signed Pauli trajectory in flight.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// The current global Pauli string (sign folded into `weight`).
    pub current: PauliString,
    /// Running product of signed column norms.
    pub weight: f64,
    /// Cleared when a zero column is hit; the sample then contributes 0.
    pub alive: bool,
}

/// The result of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub mean: f64,
    pub n_samples: usize,
    pub empirical_stderr: f64,
    pub range_bound: f64,
    pub mode: Mode,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub final_width: usize,
}

/// Per-channel cost breakdown and range bounds for both directions.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub channels: Vec<ChannelCostLine>,
    pub initial_d_product: f64,
    pub forward_cost_product: f64,
    pub backward_cost_product: f64,
    /// The squared runtime factor `(prod_q D(rho_q) * prod_j cost_j)^2`.
    pub forward_squared_cost_factor: f64,
    /// `max_f |Tr(sigma_f E)|`, including the identity-padding factor below.
    pub observable_bound: f64,
    /// `2^(unsupported qubits)` contribution inside `observable_bound`.
    pub identity_padding_factor: f64,
    /// `D(E)`: the backward starting cost.
    pub observable_d: f64,
    pub forward_range_bound: f64,
    pub backward_range_bound: f64,
    pub recommended_mode: Mode,
}

/// Draw an initial Pauli letter per qubit of a product state.
///
/// Letter `l` on qubit `q` is chosen with probability `|c_l| / D(rho_q)`;
/// the returned weight is `prod_q sgn(c_l) D(rho_q)`.
pub fn sample_initial(
    states: &[BlochVector],
    rng: &mut impl Rng,
) -> Result<(PauliString, f64)> {
    let mut letters = Vec::with_capacity(states.len());
    let mut weight = 1.0f64;
    for v in states {
        if v.num_qubits() != 1 {
            return Err(Error::QubitMismatch(v.num_qubits(), 1));
        }
        let d: f64 = v.coeffs().iter().map(|c| c.abs()).sum();
        if d <= 0.0 {
            return Err(Error::ZeroBloch);
        }
        let mut u = rng.gen::<f64>() * d;
        let mut chosen = 3usize;
        for (l, &c) in v.coeffs().iter().enumerate() {
            u -= c.abs();
            if u < 0.0 {
                chosen = l;
                break;
            }
        }
        let c = v.coeff(chosen);
        weight *= if c < 0.0 { -d } else { d };
        letters.push(Letter::from_index(chosen));
    }
    Ok((PauliString::new(letters, Sign::Plus), weight))
}

/// Push a trajectory through one channel application.
///
/// The targeted letters index a transfer-matrix column; an output word is
/// drawn with probability proportional to the column magnitudes and written
/// back through the layout (which also handles register shrink/growth). A
/// zero column kills the trajectory; the sample still counts, with value 0.
pub fn propagate_step(
    traj: &mut Trajectory,
    tm: &TransferMatrix,
    layout: &StepLayout,
    rng: &mut impl Rng,
) {
    if !traj.alive {
        return;
    }
    let letters = traj.current.letters();
    let in_word = layout
        .targets
        .iter()
        .enumerate()
        .fold(0usize, |acc, (k, &p)| acc | (letters[p].index() << (2 * k)));
    match tm.sample_column(in_word, rng.gen::<f64>()) {
        None => {
            traj.alive = false;
            traj.weight = 0.0;
        }
        Some((out_word, factor)) => {
            traj.weight *= factor;
            let mut next = vec![Letter::I; layout.width_after];
            for &(old, new) in &layout.carry {
                next[new] = letters[old];
            }
            for (k, &pos) in layout.outputs.iter().enumerate() {
                next[pos] = Letter::from_index((out_word >> (2 * k)) & 3);
            }
            traj.current = PauliString::new(next, Sign::Plus);
        }
    }
}

// ---------------------------------------------------------------------------
// Observable compilation
// ---------------------------------------------------------------------------

/// Pauli-trace tables for fast `Tr(E sigma_f)` evaluation.
#[derive(Debug, Clone)]
enum CompiledObservable {
    /// `(qubit, [Tr(sigma_l F)]_l)` per supported qubit.
    Product(Vec<(usize, [f64; 4])>),
    /// `(qubit, outcome)` per measured qubit.
    BasisProjector(Vec<(usize, bool)>),
    /// Full-width signed Pauli string.
    Pauli { letters: Vec<Letter>, sign: f64 },
    /// Support plus `Tr(sigma_w E_S)` over local words.
    DenseLocal { support: Vec<usize>, table: Vec<f64> },
}

impl CompiledObservable {
    fn compile(spec: &ObservableSpec, final_width: usize) -> Result<CompiledObservable> {
        spec.validate(final_width)?;
        Ok(match spec {
            ObservableSpec::Product { factors } => {
                let mut compiled = Vec::with_capacity(factors.len());
                for (q, op) in factors {
                    let mut table = [0.0f64; 4];
                    for (l, slot) in table.iter_mut().enumerate() {
                        *slot = pauli_trace(op.matrix(), 1, l).re;
                    }
                    compiled.push((*q, table));
                }
                CompiledObservable::Product(compiled)
            }
            ObservableSpec::BasisProjector { outcomes } => {
                CompiledObservable::BasisProjector(outcomes.clone())
            }
            ObservableSpec::Pauli(p) => CompiledObservable::Pauli {
                letters: p.letters().to_vec(),
                sign: p.sign().to_f64(),
            },
            ObservableSpec::DenseLocal { support, op } => {
                let k = support.len();
                let table = (0..1usize << (2 * k))
                    .map(|w| pauli_trace(op.matrix(), k, w).re)
                    .collect();
                CompiledObservable::DenseLocal {
                    support: support.clone(),
                    table,
                }
            }
        })
    }

    fn support(&self) -> Vec<usize> {
        match self {
            CompiledObservable::Product(f) => f.iter().map(|(q, _)| *q).collect(),
            CompiledObservable::BasisProjector(o) => o.iter().map(|(q, _)| *q).collect(),
            CompiledObservable::Pauli { letters, .. } => (0..letters.len()).collect(),
            CompiledObservable::DenseLocal { support, .. } => support.clone(),
        }
    }

    /// `Tr(E sigma_f)` for a final trajectory string.
    fn forward_value(&self, p: &PauliString) -> f64 {
        let sign = p.sign().to_f64();
        let letters = p.letters();
        let width = letters.len();
        match self {
            CompiledObservable::Product(factors) => {
                let mut v = sign;
                for (q, table) in factors {
                    v *= table[letters[*q].index()];
                    if v == 0.0 {
                        return 0.0;
                    }
                }
                v * identity_trace_factor(letters, width, &self.support())
            }
            CompiledObservable::BasisProjector(outcomes) => {
                let mut v = sign;
                for &(q, out) in outcomes {
                    v *= match letters[q] {
                        Letter::I => 1.0,
                        Letter::Z => {
                            if out {
                                -1.0
                            } else {
                                1.0
                            }
                        }
                        _ => return 0.0,
                    };
                }
                v * identity_trace_factor(letters, width, &self.support())
            }
            CompiledObservable::Pauli {
                letters: want,
                sign: esign,
            } => {
                if letters == want.as_slice() {
                    sign * esign * (1u64 << width) as f64
                } else {
                    0.0
                }
            }
            CompiledObservable::DenseLocal { support, table } => {
                let w = support
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (k, &q)| acc | (letters[q].index() << (2 * k)));
                sign * table[w] * identity_trace_factor(letters, width, support)
            }
        }
    }

    /// `max_f |Tr(sigma_f E)|` on a `final_width` register.
    fn bound(&self, final_width: usize) -> f64 {
        let padding = (1u64 << (final_width - self.support().len())) as f64;
        match self {
            CompiledObservable::Product(factors) => {
                let prod: f64 = factors
                    .iter()
                    .map(|(_, t)| t.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                    .product();
                prod * padding
            }
            CompiledObservable::BasisProjector(_) => padding,
            CompiledObservable::Pauli { .. } => (1u64 << final_width) as f64,
            CompiledObservable::DenseLocal { table, .. } => {
                table.iter().fold(0.0f64, |m, v| m.max(v.abs())) * padding
            }
        }
    }

    /// Starting distribution for backward mode: support positions, nonzero
    /// `(local word, Bloch coefficient)` pairs, and `D(E)`.
    fn backward_init(&self, final_width: usize) -> BackwardInit {
        match self {
            CompiledObservable::Pauli { letters, sign } => BackwardInit {
                support: (0..letters.len()).collect(),
                words: vec![(
                    letters
                        .iter()
                        .enumerate()
                        .fold(0usize, |acc, (q, l)| acc | (l.index() << (2 * q))),
                    *sign,
                )],
                d: 1.0,
                width: final_width,
            },
            CompiledObservable::Product(factors) => {
                let tables: Vec<[f64; 4]> = factors.iter().map(|(_, t)| *t).collect();
                let support = factors.iter().map(|(q, _)| *q).collect();
                let k = tables.len();
                let mut words = Vec::new();
                let mut d = 0.0;
                for w in 0..1usize << (2 * k) {
                    let coeff: f64 = (0..k)
                        .map(|i| tables[i][(w >> (2 * i)) & 3] / 2.0)
                        .product();
                    if coeff != 0.0 {
                        d += coeff.abs();
                        words.push((w, coeff));
                    }
                }
                BackwardInit {
                    support,
                    words,
                    d,
                    width: final_width,
                }
            }
            CompiledObservable::BasisProjector(outcomes) => {
                let tables: Vec<[f64; 4]> = outcomes
                    .iter()
                    .map(|&(_, out)| [1.0, 0.0, 0.0, if out { -1.0 } else { 1.0 }])
                    .collect();
                let support = outcomes.iter().map(|(q, _)| *q).collect();
                let k = tables.len();
                let mut words = Vec::new();
                let mut d = 0.0;
                for w in 0..1usize << (2 * k) {
                    let coeff: f64 = (0..k)
                        .map(|i| tables[i][(w >> (2 * i)) & 3] / 2.0)
                        .product();
                    if coeff != 0.0 {
                        d += coeff.abs();
                        words.push((w, coeff));
                    }
                }
                BackwardInit {
                    support,
                    words,
                    d,
                    width: final_width,
                }
            }
            CompiledObservable::DenseLocal { support, table } => {
                let k = support.len();
                let norm = (1u64 << k) as f64;
                let mut words = Vec::new();
                let mut d = 0.0;
                for (w, &t) in table.iter().enumerate() {
                    let coeff = t / norm;
                    if coeff != 0.0 {
                        d += coeff.abs();
                        words.push((w, coeff));
                    }
                }
                BackwardInit {
                    support: support.clone(),
                    words,
                    d,
                    width: final_width,
                }
            }
        }
    }
}

/// Trace factor `prod 2` over unsupported qubits; zero if any of them
/// carries a non-identity letter.
fn identity_trace_factor(letters: &[Letter], width: usize, support: &[usize]) -> f64 {
    let mut v = 1.0;
    for q in 0..width {
        if support.contains(&q) {
            continue;
        }
        if letters[q] != Letter::I {
            return 0.0;
        }
        v *= 2.0;
    }
    v
}

/// Observable-side sampling data for backward mode.
#[derive(Debug, Clone)]
struct BackwardInit {
    support: Vec<usize>,
    words: Vec<(usize, f64)>,
    d: f64,
    width: usize,
}

impl BackwardInit {
    fn sample(&self, rng: &mut impl Rng) -> (PauliString, f64) {
        let mut u = rng.gen::<f64>() * self.d;
        let mut chosen = self.words.len() - 1;
        for (i, (_, c)) in self.words.iter().enumerate() {
            u -= c.abs();
            if u < 0.0 {
                chosen = i;
                break;
            }
        }
        let (word, coeff) = self.words[chosen];
        let mut letters = vec![Letter::I; self.width];
        for (k, &q) in self.support.iter().enumerate() {
            letters[q] = Letter::from_index((word >> (2 * k)) & 3);
        }
        let weight = if coeff < 0.0 { -self.d } else { self.d };
        (PauliString::new(letters, Sign::Plus), weight)
    }
}

// ---------------------------------------------------------------------------
// Circuit compilation
// ---------------------------------------------------------------------------

struct CompiledStep {
    layout: StepLayout,
    inverse_layout: StepLayout,
    forward: TransferMatrix,
    backward: AdjointTransferMatrix,
    name: String,
}

struct Compiled {
    initial: Vec<BlochVector>,
    /// `prod_q D(rho_q)`.
    initial_d: f64,
    /// `max_f |Tr(sigma_f rho)| = prod_q max_l |Tr(sigma_l rho_q)|`.
    initial_bound: f64,
    steps: Vec<CompiledStep>,
    final_width: usize,
    observable: CompiledObservable,
    backward: BackwardInit,
}

fn invert_layout(layout: &StepLayout) -> StepLayout {
    StepLayout {
        width_before: layout.width_after,
        width_after: layout.width_before,
        targets: layout.outputs.clone(),
        removed: Vec::new(),
        outputs: layout.targets.clone(),
        carry: layout.carry.iter().map(|&(o, n)| (n, o)).collect(),
    }
}

fn compile(circuit: &Circuit, precompose: bool) -> Result<Compiled> {
    let (layouts, final_width) = circuit.validate()?;
    let initial: Vec<BlochVector> = circuit
        .initial
        .iter()
        .map(|s| s.bloch())
        .collect::<Result<_>>()?;
    let mut initial_d = 1.0;
    let mut initial_bound = 1.0;
    for v in &initial {
        initial_d *= v.d_measure();
        initial_bound *= v
            .coeffs()
            .iter()
            .fold(0.0f64, |m, c| m.max(2.0 * c.abs()));
    }
    let mut steps: Vec<(StepLayout, TransferMatrix, String)> = circuit
        .ops
        .iter()
        .zip(layouts)
        .map(|(step, layout)| {
            let tm = build_named(&step.channel)?;
            Ok((layout, tm, step.channel.name()))
        })
        .collect::<Result<_>>()?;
    if precompose {
        precompose_steps(&mut steps)?;
    }
    let steps = steps
        .into_iter()
        .map(|(layout, forward, name)| {
            let inverse_layout = invert_layout(&layout);
            let backward = forward.adjoint();
            CompiledStep {
                layout,
                inverse_layout,
                forward,
                backward,
                name,
            }
        })
        .collect();
    let observable = CompiledObservable::compile(&circuit.observable, final_width)?;
    let backward = observable.backward_init(final_width);
    Ok(Compiled {
        initial,
        initial_d,
        initial_bound,
        steps,
        final_width,
        observable,
        backward,
    })
}

/// Greedily merge adjacent same-width channels that share a qubit, while the
/// union stays within the channel arity cap. Composition can only lower the
/// total cost product.
fn precompose_steps(steps: &mut Vec<(StepLayout, TransferMatrix, String)>) -> Result<()> {
    let mut i = 0;
    while i + 1 < steps.len() {
        let a_square = steps[i].1.in_qubits() == steps[i].1.out_qubits();
        let b_square = steps[i + 1].1.in_qubits() == steps[i + 1].1.out_qubits();
        let shares = steps[i]
            .0
            .targets
            .iter()
            .any(|t| steps[i + 1].0.targets.contains(t));
        let mut union: Vec<usize> = steps[i].0.targets.clone();
        for &t in &steps[i + 1].0.targets {
            if !union.contains(&t) {
                union.push(t);
            }
        }
        union.sort_unstable();
        if !(a_square && b_square && shares && union.len() <= crate::channel::MAX_CHANNEL_QUBITS)
        {
            i += 1;
            continue;
        }
        let pos_of = |targets: &[usize]| -> Vec<usize> {
            targets
                .iter()
                .map(|t| union.iter().position(|u| u == t).unwrap())
                .collect()
        };
        let first = embed_square(&steps[i].1, &pos_of(&steps[i].0.targets), union.len())?;
        let second = embed_square(
            &steps[i + 1].1,
            &pos_of(&steps[i + 1].0.targets),
            union.len(),
        )?;
        let merged = TransferMatrix::compose(&second, &first)?;
        let layout = crate::circuit::step_layout(
            steps[i].0.width_before,
            &union,
            union.len(),
            union.len(),
        )?;
        let name = format!("{} then {}", steps[i].2, steps[i + 1].2);
        steps[i] = (layout, merged, name);
        steps.remove(i + 1);
        // the merged step may absorb its new neighbor too; stay at i
    }
    Ok(())
}

/// Embed a square channel into a wider register: channel digit `k` lives at
/// register digit `positions[k]`, identity elsewhere.
fn embed_square(
    tm: &TransferMatrix,
    positions: &[usize],
    width: usize,
) -> Result<TransferMatrix> {
    let k = tm.in_qubits();
    let dim = 1usize << (2 * width);
    let mut dense = nalgebra::DMatrix::zeros(dim, dim);
    for word in 0..dim {
        let local = positions
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &p)| acc | (((word >> (2 * p)) & 3) << (2 * i)));
        let mut rest = word;
        for &p in positions {
            rest &= !(3usize << (2 * p));
        }
        for j_local in 0..1usize << (2 * k) {
            let v = tm.entry(j_local, local);
            if v == 0.0 {
                continue;
            }
            let out = positions
                .iter()
                .enumerate()
                .fold(rest, |acc, (i, &p)| acc | (((j_local >> (2 * i)) & 3) << (2 * p)));
            dense[(out, word)] = v;
        }
    }
    TransferMatrix::from_dense(width, width, dense, tm.is_trace_preserving())
}

impl Compiled {
    fn range(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Forward => {
                let cost: f64 = self.steps.iter().map(|s| s.forward.channel_cost()).product();
                2.0 * self.observable.bound(self.final_width) * self.initial_d * cost
            }
            Mode::Backward => {
                let cost: f64 = self
                    .steps
                    .iter()
                    .map(|s| s.backward.channel_cost())
                    .product();
                2.0 * self.backward.d * cost * self.initial_bound
            }
        }
    }

    fn sample_value(&self, mode: Mode, seed: u64, index: usize) -> Result<f64> {
        Ok(self.sample_detail(mode, seed, index)?.1)
    }

    /// One trajectory's `(final weight, value)`; dead trajectories report
    /// `(0, 0)`.
    fn sample_detail(&self, mode: Mode, seed: u64, index: usize) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        match mode {
            Mode::Forward => {
                let (p, w) = sample_initial(&self.initial, &mut rng)?;
                let mut traj = Trajectory {
                    current: p,
                    weight: w,
                    alive: true,
                };
                for step in &self.steps {
                    propagate_step(&mut traj, &step.forward, &step.layout, &mut rng);
                }
                if !traj.alive {
                    return Ok((0.0, 0.0));
                }
                let value = traj.weight * self.observable.forward_value(&traj.current);
                Ok((traj.weight, value))
            }
            Mode::Backward => {
                let (p, w) = self.backward.sample(&mut rng);
                let mut traj = Trajectory {
                    current: p,
                    weight: w,
                    alive: true,
                };
                for step in self.steps.iter().rev() {
                    propagate_step(
                        &mut traj,
                        step.backward.matrix(),
                        &step.inverse_layout,
                        &mut rng,
                    );
                }
                if !traj.alive {
                    return Ok((0.0, 0.0));
                }
                // Tr(sigma_f rho) = prod_q 2 c_q(letter)
                let mut v = traj.weight;
                for (q, letter) in traj.current.letters().iter().enumerate() {
                    v *= 2.0 * self.initial[q].coeff(letter.index());
                    if v == 0.0 {
                        break;
                    }
                }
                Ok((traj.weight, v))
            }
        }
    }
}

/// Run a parallel job inside a worker pool sized by `PAULI_SHUFFLE_THREADS`
/// (default: rayon's global pool). Thread count never affects results.
pub(crate) fn with_worker_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let workers = std::env::var("PAULI_SHUFFLE_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
            .install(f),
        None => f(),
    }
}

/// Per-sample values, mainly for diagnostics: histograms, bound checks, and
/// inspecting the discrete value set of Clifford-only circuits.
pub fn sample_values(
    circuit: &Circuit,
    mode: Mode,
    n_samples: usize,
    seed: u64,
    precompose: bool,
) -> Result<Vec<f64>> {
    let compiled = compile(circuit, precompose)?;
    with_worker_pool(|| {
        (0..n_samples)
            .into_par_iter()
            .map(|i| compiled.sample_value(mode, seed, i))
            .collect()
    })
}

/// Per-sample `(final trajectory weight, value)` pairs; the weight isolates
/// the signed column-norm product from the observable evaluation (it is
/// exactly `+-1` on Clifford-only circuits with stabilizer inputs).
pub fn sample_details(
    circuit: &Circuit,
    mode: Mode,
    n_samples: usize,
    seed: u64,
    precompose: bool,
) -> Result<Vec<(f64, f64)>> {
    let compiled = compile(circuit, precompose)?;
    with_worker_pool(|| {
        (0..n_samples)
            .into_par_iter()
            .map(|i| compiled.sample_detail(mode, seed, i))
            .collect()
    })
}

/// Full estimation pipeline: compile, bound the range, resolve the budget,
/// sample in parallel, and reduce in sample order.
pub fn estimate(
    circuit: &Circuit,
    mode: Mode,
    budget: BudgetSpec,
    seed: u64,
    precompose: bool,
) -> Result<EstimateReport> {
    let compiled = compile(circuit, precompose)?;
    let range_bound = compiled.range(mode);
    let budget = SamplingBudget::resolve(budget, range_bound)?;
    let n = budget.n_samples;
    let values: Vec<f64> = with_worker_pool(|| {
        (0..n)
            .into_par_iter()
            .map(|i| compiled.sample_value(mode, seed, i))
            .collect::<Result<Vec<f64>>>()
    })?;
    let mean = values.iter().sum::<f64>() / n as f64;
    let empirical_stderr = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / ((n - 1) as f64 * n as f64)).sqrt()
    } else {
        0.0
    };
    Ok(EstimateReport {
        mean,
        n_samples: n,
        empirical_stderr,
        range_bound,
        mode,
        seed,
        epsilon: budget.epsilon,
        delta: budget.delta,
        final_width: compiled.final_width,
    })
}

/// Forward-mode estimation (state toward observable).
pub fn estimate_forward(
    circuit: &Circuit,
    budget: BudgetSpec,
    seed: u64,
) -> Result<EstimateReport> {
    estimate(circuit, Mode::Forward, budget, seed, false)
}

/// Backward-mode estimation (observable toward state through adjoints).
pub fn estimate_backward(
    circuit: &Circuit,
    budget: BudgetSpec,
    seed: u64,
) -> Result<EstimateReport> {
    estimate(circuit, Mode::Backward, budget, seed, false)
}

/// Analytic width of the per-sample value range (`max - min` bound) for the
/// chosen propagation direction.
pub fn range_bound(circuit: &Circuit, mode: Mode) -> Result<f64> {
    Ok(compile(circuit, false)?.range(mode))
}

/// The direction with the smaller analytic range bound.
pub fn recommended_mode(circuit: &Circuit) -> Result<Mode> {
    let compiled = compile(circuit, false)?;
    if compiled.range(Mode::Backward) < compiled.range(Mode::Forward) {
        Ok(Mode::Backward)
    } else {
        Ok(Mode::Forward)
    }
}

/// Cost breakdown for the `cost` subcommand.
pub fn cost_report(circuit: &Circuit, precompose: bool) -> Result<CostReport> {
    let compiled = compile(circuit, precompose)?;
    let channels: Vec<ChannelCostLine> = compiled
        .steps
        .iter()
        .map(|s| ChannelCostLine {
            name: s.name.clone(),
            forward_cost: s.forward.channel_cost(),
            backward_cost: s.backward.channel_cost(),
        })
        .collect();
    let forward_cost_product: f64 = channels.iter().map(|c| c.forward_cost).product();
    let backward_cost_product: f64 = channels.iter().map(|c| c.backward_cost).product();
    let squared = compiled.initial_d * forward_cost_product;
    let padding =
        (1u64 << (compiled.final_width - compiled.observable.support().len())) as f64;
    let forward_range = compiled.range(Mode::Forward);
    let backward_range = compiled.range(Mode::Backward);
    Ok(CostReport {
        channels,
        initial_d_product: compiled.initial_d,
        forward_cost_product,
        backward_cost_product,
        forward_squared_cost_factor: squared * squared,
        observable_bound: compiled.observable.bound(compiled.final_width),
        identity_padding_factor: padding,
        observable_d: compiled.backward.d,
        forward_range_bound: forward_range,
        backward_range_bound: backward_range,
        recommended_mode: if backward_range < forward_range {
            Mode::Backward
        } else {
            Mode::Forward
        },
    })
}

/// Line item of a [`CostReport`].
#[derive(Debug, Clone, Serialize)]
pub struct ChannelCostLine {
    pub name: String,
    pub forward_cost: f64,
    pub backward_cost: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelSpec, UnitaryGate};
    use crate::circuit::{parse_circuit, NamedState, Step};
    use crate::oracle::circuit_expectation;
    use approx::assert_abs_diff_eq;

    const SQRT_2: f64 = std::f64::consts::SQRT_2;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn hoeffding_reference_values() {
        assert_eq!(hoeffding_samples(2.0, 0.01, 0.05).unwrap(), 73778);
        assert_eq!(hoeffding_samples(0.0, 0.01, 0.05).unwrap(), 1);
        let n1 = hoeffding_samples(1.0, 0.02, 0.1).unwrap();
        let n2 = hoeffding_samples(2.0, 0.02, 0.1).unwrap();
        assert!((n2 as f64 - 4.0 * n1 as f64).abs() <= 4.0);
        assert!(hoeffding_samples(2.0, 0.0, 0.05).is_err());
        assert!(hoeffding_samples(2.0, 0.01, 1.5).is_err());
        assert!(hoeffding_samples(1e9, 0.001, 0.01).is_err());
    }

    #[test]
    fn initial_sampling_zero_state() {
        let states = [NamedState::Zero.bloch()];
        let mut r = rng(1);
        let mut seen = [0usize; 4];
        for _ in 0..2000 {
            let (p, w) = sample_initial(&states, &mut r).unwrap();
            assert_eq!(w, 1.0);
            seen[p.letter(0).index()] += 1;
        }
        assert_eq!(seen[1] + seen[2], 0, "only I and Z can occur");
        assert!(seen[0] > 800 && seen[3] > 800, "roughly even split: {seen:?}");
    }

    #[test]
    fn initial_sampling_a_state() {
        let states = [NamedState::A.bloch()];
        let mut r = rng(2);
        let n = 40_000;
        let mut seen = [0usize; 4];
        for _ in 0..n {
            let (p, w) = sample_initial(&states, &mut r).unwrap();
            assert_abs_diff_eq!(w, (1.0 + SQRT_2) / 2.0, epsilon = 1e-12);
            seen[p.letter(0).index()] += 1;
        }
        let p_i = 1.0 / (1.0 + SQRT_2);
        let p_xy = 1.0 / (SQRT_2 * (1.0 + SQRT_2));
        assert!((seen[0] as f64 / n as f64 - p_i).abs() < 0.02);
        assert!((seen[1] as f64 / n as f64 - p_xy).abs() < 0.02);
        assert!((seen[2] as f64 / n as f64 - p_xy).abs() < 0.02);
        assert_eq!(seen[3], 0);
    }

    #[test]
    fn initial_sampling_maximally_mixed() {
        let states = [NamedState::MaximallyMixed.bloch()];
        let mut r = rng(3);
        for _ in 0..200 {
            let (p, w) = sample_initial(&states, &mut r).unwrap();
            assert_eq!(p.letter(0), Letter::I);
            assert_abs_diff_eq!(w, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn cnot_propagation_is_deterministic() {
        let tm = build_named(&ChannelSpec::Unitary(UnitaryGate::Cnot)).unwrap();
        let layout = crate::circuit::step_layout(2, &[0, 1], 2, 2).unwrap();
        let mut traj = Trajectory {
            current: "XI".parse().unwrap(),
            weight: 1.0,
            alive: true,
        };
        propagate_step(&mut traj, &tm, &layout, &mut rng(4));
        assert_eq!(traj.current, "XX".parse().unwrap());
        assert_eq!(traj.weight, 1.0);
    }

    #[test]
    fn t_propagation_splits_x() {
        let tm = build_named(&ChannelSpec::Unitary(UnitaryGate::T)).unwrap();
        let layout = crate::circuit::step_layout(1, &[0], 1, 1).unwrap();
        let mut r = rng(5);
        let mut seen = [0usize; 4];
        for _ in 0..2000 {
            let mut traj = Trajectory {
                current: "X".parse().unwrap(),
                weight: 1.0,
                alive: true,
            };
            propagate_step(&mut traj, &tm, &layout, &mut r);
            assert_abs_diff_eq!(traj.weight, SQRT_2, epsilon = 1e-12);
            seen[traj.current.letter(0).index()] += 1;
        }
        assert_eq!(seen[0] + seen[3], 0);
        assert!(seen[1] > 800 && seen[2] > 800, "{seen:?}");
    }

    #[test]
    fn gadget_propagation_shrinks_register() {
        let tm = build_named(&ChannelSpec::GadgetMeasureControl).unwrap();
        let layout = crate::circuit::step_layout(2, &[0, 1], 2, 1).unwrap();
        let mut r = rng(6);
        for _ in 0..100 {
            let mut traj = Trajectory {
                current: "XX".parse().unwrap(),
                weight: 1.0,
                alive: true,
            };
            propagate_step(&mut traj, &tm, &layout, &mut r);
            assert!(traj.alive);
            assert_eq!(traj.current.num_qubits(), 1);
            assert_abs_diff_eq!(traj.weight, 2.0, epsilon = 1e-12);
            assert!(matches!(traj.current.letter(0), Letter::X | Letter::Y));
        }
    }

    const IDENTITY_CIRCUIT: &str = r#"{
        "qubits": 1,
        "initial": ["zero"],
        "observable": {"kind": "basis_projector", "outcomes": [{"qubit": 0, "value": 0}]}
    }"#;

    #[test]
    fn identity_circuit_every_sample_is_one() {
        let c = parse_circuit(IDENTITY_CIRCUIT).unwrap();
        let values = sample_values(&c, Mode::Forward, 500, 7, false).unwrap();
        assert!(values.iter().all(|&v| v == 1.0));
        let report = estimate_forward(&c, BudgetSpec::Fixed(500), 7).unwrap();
        assert_eq!(report.mean, 1.0);
        assert_eq!(report.empirical_stderr, 0.0);
        assert_abs_diff_eq!(report.range_bound, 2.0, epsilon = 1e-12);
    }

    const GADGET_CIRCUIT: &str = r#"{
        "qubits": 2,
        "initial": ["a", "plus"],
        "ops": [
            {"gate": "cnot", "targets": [0, 1]},
            {"channel": "gadget_measure_control", "targets": [0, 1]}
        ],
        "observable": {"kind": "dense_local", "support": [0], "matrix":
            [[[0.5, 0.0], [0.35355339059327373, -0.35355339059327373]],
             [[0.35355339059327373, 0.35355339059327373], [0.5, 0.0]]]}
    }"#;

    #[test]
    fn gadget_circuit_forward_matches_oracle() {
        let c = parse_circuit(GADGET_CIRCUIT).unwrap();
        assert_abs_diff_eq!(circuit_expectation(&c).unwrap(), 1.0, epsilon = 1e-12);
        let report = estimate_forward(&c, BudgetSpec::Fixed(40_000), 11).unwrap();
        assert!(
            (report.mean - 1.0).abs() <= 4.0 * report.empirical_stderr.max(1e-12),
            "mean {} stderr {}",
            report.mean,
            report.empirical_stderr
        );
    }

    #[test]
    fn gadget_circuit_backward_matches_oracle() {
        let c = parse_circuit(GADGET_CIRCUIT).unwrap();
        let report = estimate_backward(&c, BudgetSpec::Fixed(40_000), 13).unwrap();
        assert!(
            (report.mean - 1.0).abs() <= 4.0 * report.empirical_stderr.max(1e-12),
            "mean {} stderr {}",
            report.mean,
            report.empirical_stderr
        );
    }

    #[test]
    fn gadget_squared_cost_factor() {
        let c = parse_circuit(GADGET_CIRCUIT).unwrap();
        let cost = cost_report(&c, false).unwrap();
        let exact = (1.0 + SQRT_2) * (1.0 + SQRT_2); // (D(A) * 2)^2
        assert_abs_diff_eq!(cost.forward_squared_cost_factor, exact, epsilon = 1e-9);
        assert!((cost.forward_squared_cost_factor - 5.827).abs() < 2e-3);
        assert_abs_diff_eq!(cost.forward_cost_product, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn depolarized_zero_matches_oracle() {
        let text = r#"{
            "qubits": 1,
            "initial": ["zero"],
            "ops": [{"channel": "depolarizing", "p": 0.5, "targets": [0]}],
            "observable": {"kind": "basis_projector", "outcomes": [{"qubit": 0, "value": 0}]}
        }"#;
        let c = parse_circuit(text).unwrap();
        assert_abs_diff_eq!(circuit_expectation(&c).unwrap(), 0.75, epsilon = 1e-12);
        for mode in [Mode::Forward, Mode::Backward] {
            let report = estimate(&c, mode, BudgetSpec::Fixed(40_000), 17, false).unwrap();
            assert!(
                (report.mean - 0.75).abs() <= 4.0 * report.empirical_stderr,
                "{mode}: mean {} stderr {}",
                report.mean,
                report.empirical_stderr
            );
        }
    }

    #[test]
    fn empty_circuit_backward_pauli() {
        let text = r#"{
            "qubits": 1,
            "initial": ["zero"],
            "observable": {"kind": "pauli", "string": "Z"}
        }"#;
        let c = parse_circuit(text).unwrap();
        let values = sample_values(&c, Mode::Backward, 200, 19, false).unwrap();
        // deterministic: sample sigma_Z with weight 1, value Tr(Z|0><0|) = 1
        assert!(values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn trace_out_blowup_bookkeeping() {
        let text = r#"{
            "qubits": 2,
            "initial": ["plus", "zero"],
            "ops": [{"channel": "trace_out", "targets": [0]}],
            "observable": {"kind": "basis_projector", "outcomes": [{"qubit": 0, "value": 0}]}
        }"#;
        let c = parse_circuit(text).unwrap();
        assert_abs_diff_eq!(circuit_expectation(&c).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(range_bound(&c, Mode::Forward).unwrap(), 4.0, epsilon = 1e-12);
        // backward mode removes the trace-out blowup entirely
        assert_abs_diff_eq!(range_bound(&c, Mode::Backward).unwrap(), 2.0, epsilon = 1e-12);
        let values = sample_values(&c, Mode::Forward, 2000, 23, false).unwrap();
        let range = range_bound(&c, Mode::Forward).unwrap();
        for &v in &values {
            assert!(v.abs() <= range / 2.0 + 1e-9);
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
        }
        let mean: f64 = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - 1.0).abs() < 0.2);
        assert_eq!(recommended_mode(&c).unwrap(), Mode::Backward);
    }

    #[test]
    fn clifford_circuit_values_are_unit() {
        let text = r#"{
            "qubits": 3,
            "initial": ["zero", "zero", "zero"],
            "ops": [
                {"gate": "h", "targets": [0]},
                {"gate": "cnot", "targets": [0, 1]},
                {"gate": "cnot", "targets": [1, 2]}
            ],
            "observable": {"kind": "basis_projector",
                           "outcomes": [{"qubit": 0, "value": 0}, {"qubit": 1, "value": 0},
                                        {"qubit": 2, "value": 0}]}
        }"#;
        let c = parse_circuit(text).unwrap();
        assert_abs_diff_eq!(circuit_expectation(&c).unwrap(), 0.5, epsilon = 1e-12);
        let values = sample_values(&c, Mode::Forward, 4000, 29, false).unwrap();
        for &v in &values {
            assert!(v == 0.0 || v == 1.0 || v == -1.0, "non-Clifford value {v}");
        }
        let mean: f64 = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - 0.5).abs() < 0.05);
        assert_abs_diff_eq!(range_bound(&c, Mode::Forward).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let c = parse_circuit(GADGET_CIRCUIT).unwrap();
        let mut reports = Vec::new();
        for threads in ["1", "2", "8"] {
            std::env::set_var("PAULI_SHUFFLE_THREADS", threads);
            reports.push(estimate_forward(&c, BudgetSpec::Fixed(5000), 31).unwrap());
        }
        std::env::remove_var("PAULI_SHUFFLE_THREADS");
        assert_eq!(reports[0], reports[1]);
        assert_eq!(reports[0], reports[2]);
        // and the same call again is bit-identical
        let again = estimate_forward(&c, BudgetSpec::Fixed(5000), 31).unwrap();
        assert_eq!(reports[0].mean.to_bits(), again.mean.to_bits());
    }

    #[test]
    fn precompose_merges_t_pair_into_clifford() {
        let text = r#"{
            "qubits": 1,
            "initial": ["plus"],
            "ops": [
                {"gate": "t", "targets": [0]},
                {"gate": "t", "targets": [0]}
            ],
            "observable": {"kind": "pauli", "string": "Y"}
        }"#;
        let c = parse_circuit(text).unwrap();
        let plain = cost_report(&c, false).unwrap();
        let fused = cost_report(&c, true).unwrap();
        assert_abs_diff_eq!(plain.forward_cost_product, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fused.forward_cost_product, 1.0, epsilon = 1e-12);
        assert_eq!(fused.channels.len(), 1);
        // S|+> has <Y> = 1; both variants agree with the oracle
        assert_abs_diff_eq!(circuit_expectation(&c).unwrap(), 1.0, epsilon = 1e-12);
        for pre in [false, true] {
            let rep = estimate(&c, Mode::Forward, BudgetSpec::Fixed(20_000), 37, pre).unwrap();
            assert!(
                (rep.mean - 1.0).abs() <= 4.0 * rep.empirical_stderr.max(1e-9),
                "precompose={pre}: mean {} stderr {}",
                rep.mean,
                rep.empirical_stderr
            );
        }
    }

    #[test]
    fn precompose_with_shifted_support() {
        // CNOT(0,1) then T(1) then CNOT(0,1): merges into one 2-qubit channel
        let text = r#"{
            "qubits": 2,
            "initial": ["plus", "zero"],
            "ops": [
                {"gate": "cnot", "targets": [0, 1]},
                {"gate": "t", "targets": [1]},
                {"gate": "cnot", "targets": [0, 1]}
            ],
            "observable": {"kind": "basis_projector", "outcomes": [{"qubit": 0, "value": 0}]}
        }"#;
        let c = parse_circuit(text).unwrap();
        let oracle = circuit_expectation(&c).unwrap();
        let fused = cost_report(&c, true).unwrap();
        assert_eq!(fused.channels.len(), 1);
        assert!(fused.forward_cost_product <= SQRT_2 + 1e-12);
        let rep = estimate(&c, Mode::Forward, BudgetSpec::Fixed(40_000), 41, true).unwrap();
        assert!(
            (rep.mean - oracle).abs() <= 4.0 * rep.empirical_stderr.max(1e-9),
            "mean {} oracle {oracle} stderr {}",
            rep.mean,
            rep.empirical_stderr
        );
    }

    #[test]
    fn pauli_observable_forward_range_has_exponential_factor() {
        let text = r#"{
            "qubits": 2,
            "initial": ["zero", "zero"],
            "observable": {"kind": "pauli", "string": "ZZ"}
        }"#;
        let c = parse_circuit(text).unwrap();
        assert_abs_diff_eq!(range_bound(&c, Mode::Forward).unwrap(), 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(range_bound(&c, Mode::Backward).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn per_sample_bound_holds_for_noisy_circuit() {
        let text = r#"{
            "qubits": 2,
            "initial": ["a", "i_plus"],
            "ops": [
                {"gate": "t", "targets": [0]},
                {"channel": "amplitude_damping", "gamma": 0.3, "targets": [1]},
                {"gate": "cnot", "targets": [0, 1]},
                {"channel": "dephasing", "p": 0.15, "targets": [0]}
            ],
            "observable": {"kind": "product", "factors": [{"qubit": 0, "op": "z"},
                                                          {"qubit": 1, "op": "x"}]}
        }"#;
        let c = parse_circuit(text).unwrap();
        let oracle = circuit_expectation(&c).unwrap();
        for mode in [Mode::Forward, Mode::Backward] {
            let range = range_bound(&c, mode).unwrap();
            let values = sample_values(&c, mode, 30_000, 43, false).unwrap();
            for &v in &values {
                assert!(v.abs() <= range / 2.0 + 1e-9, "{mode}: |{v}| > {}", range / 2.0);
            }
            let n = values.len() as f64;
            let mean: f64 = values.iter().sum::<f64>() / n;
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            let stderr = (ss / ((n - 1.0) * n)).sqrt();
            assert!(
                (mean - oracle).abs() <= 4.0 * stderr.max(1e-9),
                "{mode}: mean {mean} oracle {oracle} stderr {stderr}"
            );
        }
    }

    #[test]
    fn budget_resolution() {
        let c = parse_circuit(IDENTITY_CIRCUIT).unwrap();
        let rep = estimate_forward(
            &c,
            BudgetSpec::Accuracy {
                epsilon: 0.05,
                delta: 0.05,
            },
            47,
        )
        .unwrap();
        // range 2 circuit: N = ceil(4 ln 40 / (2 * 0.0025)) = 2952
        assert_eq!(rep.n_samples, 2952);
        assert_eq!(rep.epsilon, Some(0.05));
        assert!(estimate_forward(&c, BudgetSpec::Fixed(0), 1).is_err());
    }

    #[test]
    fn append_step_backward_and_forward() {
        let text = r#"{
            "qubits": 1,
            "initial": ["zero"],
            "ops": [
                {"channel": "append", "state": ["plus"], "targets": []},
                {"gate": "cnot", "targets": [1, 0]}
            ],
            "observable": {"kind": "product", "factors": [{"qubit": 0, "op": "x"},
                                                          {"qubit": 1, "op": "x"}]}
        }"#;
        let c = parse_circuit(text).unwrap();
        // the two ops build a Bell pair, so <XX> = 1
        let oracle = circuit_expectation(&c).unwrap();
        assert_abs_diff_eq!(oracle, 1.0, epsilon = 1e-12);
        for mode in [Mode::Forward, Mode::Backward] {
            let rep = estimate(&c, mode, BudgetSpec::Fixed(20_000), 53, false).unwrap();
            assert!(
                (rep.mean - oracle).abs() <= 4.0 * rep.empirical_stderr.max(1e-9),
                "{mode}: mean {} stderr {}",
                rep.mean,
                rep.empirical_stderr
            );
        }
    }

    #[test]
    fn depolarizing_never_increases_range() {
        let base = r#"{
            "qubits": 2,
            "initial": ["a", "plus"],
            "ops": [{"gate": "t", "targets": [0]}, {"gate": "cnot", "targets": [0, 1]}],
            "observable": {"kind": "basis_projector", "outcomes": [{"qubit": 0, "value": 0}]}
        }"#;
        let noisy = r#"{
            "qubits": 2,
            "initial": ["a", "plus"],
            "ops": [{"gate": "t", "targets": [0]},
                    {"channel": "depolarizing", "p": 0.2, "targets": [0]},
                    {"gate": "cnot", "targets": [0, 1]},
                    {"channel": "depolarizing", "p": 0.4, "targets": [1]}],
            "observable": {"kind": "basis_projector", "outcomes": [{"qubit": 0, "value": 0}]}
        }"#;
        let clean = parse_circuit(base).unwrap();
        let noisy = parse_circuit(noisy).unwrap();
        assert!(
            range_bound(&noisy, Mode::Forward).unwrap()
                <= range_bound(&clean, Mode::Forward).unwrap() + 1e-12
        );
    }

    #[test]
    fn mode_selection_prefers_smaller_range() {
        let c = parse_circuit(GADGET_CIRCUIT).unwrap();
        let f = range_bound(&c, Mode::Forward).unwrap();
        let b = range_bound(&c, Mode::Backward).unwrap();
        let rec = recommended_mode(&c).unwrap();
        if b < f {
            assert_eq!(rec, Mode::Backward);
        } else {
            assert_eq!(rec, Mode::Forward);
        }
    }

    #[test]
    fn measure_control_without_entangler_differs_from_gadget() {
        // same targets, no CNOT inside: the plain measure-and-correct channel
        let circuit = Circuit {
            num_qubits: 2,
            initial: vec![
                crate::circuit::StateSpec::Named(NamedState::A),
                crate::circuit::StateSpec::Named(NamedState::Plus),
            ],
            ops: vec![Step {
                channel: ChannelSpec::MeasureControl {
                    correction: UnitaryGate::S,
                },
                targets: vec![0, 1],
            }],
            observable: crate::circuit::ObservableSpec::Product {
                factors: vec![(0, crate::circuit::StateSpec::Named(NamedState::A).dense().unwrap())],
            },
        };
        let oracle = circuit_expectation(&circuit).unwrap();
        let rep = estimate_forward(&circuit, BudgetSpec::Fixed(30_000), 59).unwrap();
        assert!(
            (rep.mean - oracle).abs() <= 4.0 * rep.empirical_stderr.max(1e-9),
            "mean {} oracle {oracle}",
            rep.mean
        );
    }
}
