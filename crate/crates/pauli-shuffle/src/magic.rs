//! Magic monotones and state classification.
//!
//! Two quantities measure how far a state is from the stabilizer polytope:
//! `D` (the L1 norm of the Bloch coefficients, cheap to evaluate) and the
//! robustness `R` (the minimal total weight of a signed mixture of pure
//! stabilizer states reproducing the state, a linear program). `D <= R`
//! always holds, which splits density matrices into three classes:
//!
//! * stabilizer mixtures: `R = 1` — classically simulable by plain sampling;
//! * bound states: `R > 1 >= D` — outside the stabilizer polytope, yet the
//!   trajectory sampler still runs without sign overhead;
//! * magic states: `D > 1` — sampling pays a `D^2` runtime factor.
//!
//! The module enumerates all pure stabilizer states up to three qubits,
//! solves the robustness program with the built-in simplex solver, runs a
//! random-density census of the three classes, and rasterizes cross-sections
//! of the two-qubit state body.

use crate::bloch::{bloch_from_dense, dense_from_bloch, BlochVector, DenseOperator};
use crate::error::{Error, Result};
use crate::pauli::{Letter, Phase};
use crate::simplex::solve_equality_lp;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;

/// Enumeration is exhaustive, so the state count `2^n prod(2^k + 1)` caps
/// the qubit number.
pub const MAX_STABILIZER_QUBITS: usize = 3;

/// Default classification tolerance on both the `D` and `R` thresholds,
/// matched to the LP feasibility residual scale.
pub const CLASSIFY_TOL: f64 = 1e-7;

/// Eigenvalue floor below which a cross-section point is not a state.
pub const PSD_TOL: f64 = -1e-10;

/// All pure stabilizer states on `n` qubits, as Bloch vectors, with the
/// prebuilt robustness constraint matrix.
#[derive(Debug, Clone)]
pub struct StabilizerStateSet {
    num_qubits: usize,
    states: Vec<BlochVector>,
    /// `[S | -S]`: Bloch columns of the states and their negatives.
    lp_matrix: DMatrix<f64>,
}

/// Outcome of the robustness linear program.
#[derive(Debug, Clone)]
pub struct RobustnessSolution {
    /// `R = sum_i |q_i|` at the optimum.
    pub value: f64,
    /// Signed quasiprobability weights, one per stabilizer state.
    pub coefficients: Vec<f64>,
}

/// Classification label; `Invalid` only appears in cross-section rasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateClass {
    StabilizerMixture,
    Bound,
    Magic,
    Invalid,
}

impl StateClass {
    /// The token used in raster CSV output.
    pub fn csv_label(self) -> &'static str {
        match self {
            StateClass::StabilizerMixture => "stabilizer",
            StateClass::Bound => "bound",
            StateClass::Magic => "magic",
            StateClass::Invalid => "invalid",
        }
    }
}

/// A classified state with the evidence used for the label.
#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub label: StateClass,
    pub d_value: f64,
    /// Absent when the `D > 1` shortcut settled the label without the LP.
    pub r_value: Option<f64>,
    pub tolerance: f64,
}

/// `D`: the L1 norm of the Bloch coefficients.
pub fn d_measure(v: &BlochVector) -> f64 {
    v.d_measure()
}

// ---------------------------------------------------------------------------
// Stabilizer state enumeration
// ---------------------------------------------------------------------------

fn word_letter(word: usize, q: usize) -> Letter {
    Letter::from_index((word >> (2 * q)) & 3)
}

fn words_commute(a: usize, b: usize, n: usize) -> bool {
    let mut anti = 0usize;
    for q in 0..n {
        let (la, lb) = (word_letter(a, q), word_letter(b, q));
        if la != Letter::I && lb != Letter::I && la != lb {
            anti ^= 1;
        }
    }
    anti == 0
}

/// Product of two Pauli words; the phase is real whenever the words commute.
fn word_product(a: usize, b: usize, n: usize) -> (f64, usize) {
    let mut phase = Phase::ONE;
    let mut out = 0usize;
    for q in 0..n {
        let (p, l) = word_letter(a, q).times(word_letter(b, q));
        phase = phase * p;
        out |= l.index() << (2 * q);
    }
    let sign = phase
        .real_sign()
        .expect("commuting products must have real phase");
    (sign, out)
}

/// Collect every maximal abelian subgroup of the n-qubit Pauli words
/// (excluding signs) by recursive generator extension with dedup.
fn maximal_abelian_groups(n: usize) -> Vec<Vec<usize>> {
    let num_words = 1usize << (2 * n);
    let mut groups: BTreeSet<Vec<usize>> = BTreeSet::new();
    // stack entry: (generators, span of (word, sign))
    let mut stack: Vec<(Vec<usize>, Vec<(usize, f64)>)> = vec![(Vec::new(), vec![(0, 1.0)])];
    while let Some((gens, span)) = stack.pop() {
        if gens.len() == n {
            let mut ids: Vec<usize> = span.iter().map(|&(w, _)| w).collect();
            ids.sort_unstable();
            groups.insert(ids);
            continue;
        }
        let start = gens.last().map_or(1, |&g| g + 1);
        for g in start..num_words {
            if gens.iter().any(|&h| !words_commute(g, h, n)) {
                continue;
            }
            if span.iter().any(|&(w, _)| w == g) {
                continue;
            }
            let mut next_span = span.clone();
            for &(w, s) in &span {
                let (ps, prod) = word_product(w, g, n);
                next_span.push((prod, s * ps));
            }
            let mut next_gens = gens.clone();
            next_gens.push(g);
            stack.push((next_gens, next_span));
        }
    }
    groups.into_iter().collect()
}

/// Expand one maximal group into its `2^n` sign-assigned projectors.
fn group_states(group: &[usize], n: usize) -> Vec<BlochVector> {
    // greedy independent generating set
    let mut gens: Vec<usize> = Vec::new();
    let mut span: Vec<(usize, f64)> = vec![(0, 1.0)];
    for &e in group {
        if e == 0 || span.iter().any(|&(w, _)| w == e) {
            continue;
        }
        let mut next = span.clone();
        for &(w, s) in &span {
            let (ps, prod) = word_product(w, e, n);
            next.push((prod, s * ps));
        }
        span = next;
        gens.push(e);
        if gens.len() == n {
            break;
        }
    }
    assert_eq!(gens.len(), n, "maximal group must have n generators");
    // elements tagged with the generator subset that produced them
    let mut elems: Vec<(usize, usize, f64)> = vec![(0, 0, 1.0)];
    for (k, &g) in gens.iter().enumerate() {
        let current = elems.clone();
        for (mask, w, s) in current {
            let (ps, prod) = word_product(w, g, n);
            elems.push((mask | (1 << k), prod, s * ps));
        }
    }
    let dim = (1usize << n) as f64;
    (0..1usize << n)
        .map(|signs| {
            let mut coeffs = vec![0.0f64; 1 << (2 * n)];
            for &(mask, w, s) in &elems {
                let flips = (mask & signs).count_ones();
                let sign = if flips % 2 == 0 { s } else { -s };
                coeffs[w] = sign / dim;
            }
            BlochVector::new(n, coeffs).expect("stabilizer projector")
        })
        .collect()
}

/// Enumerate all pure stabilizer states on `n <= 3` qubits.
///
/// Counts follow `2^n prod_{k=1..n} (2^k + 1)`: 6, 60, 1080.
pub fn enumerate_stabilizer_states(n: usize) -> Result<StabilizerStateSet> {
    if n == 0 || n > MAX_STABILIZER_QUBITS {
        return Err(Error::WidthCap {
            what: "stabilizer enumeration",
            width: n,
            cap: MAX_STABILIZER_QUBITS,
        });
    }
    let mut states = Vec::new();
    for group in maximal_abelian_groups(n) {
        states.extend(group_states(&group, n));
    }
    let rows = 1usize << (2 * n);
    let cols = states.len();
    let mut lp_matrix = DMatrix::<f64>::zeros(rows, 2 * cols);
    for (j, s) in states.iter().enumerate() {
        for (i, &c) in s.coeffs().iter().enumerate() {
            lp_matrix[(i, j)] = c;
            lp_matrix[(i, cols + j)] = -c;
        }
    }
    Ok(StabilizerStateSet {
        num_qubits: n,
        states,
        lp_matrix,
    })
}

impl StabilizerStateSet {
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn states(&self) -> &[BlochVector] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Solve `min sum |q_i|` subject to `sum_i q_i stab_i = v` by splitting
    /// `q` into nonnegative parts. The identity component of the equality
    /// already forces `sum q_i = 1`.
    pub fn robustness(&self, v: &BlochVector) -> Result<RobustnessSolution> {
        if v.num_qubits() != self.num_qubits {
            return Err(Error::QubitMismatch(v.num_qubits(), self.num_qubits));
        }
        let cols = self.states.len();
        let c = vec![1.0; 2 * cols];
        let sol = solve_equality_lp(&self.lp_matrix, v.coeffs(), &c)?;
        let coefficients: Vec<f64> = (0..cols).map(|j| sol.x[j] - sol.x[cols + j]).collect();
        Ok(RobustnessSolution {
            value: sol.objective,
            coefficients,
        })
    }

    /// Label a state. The LP is skipped when `D > 1 + tol` already settles
    /// the label (justified by `D <= R`); `full_lp` forces it anyway.
    pub fn classify(&self, v: &BlochVector, tol: f64, full_lp: bool) -> Result<Classification> {
        let d = v.d_measure();
        if d > 1.0 + tol && !full_lp {
            return Ok(Classification {
                label: StateClass::Magic,
                d_value: d,
                r_value: None,
                tolerance: tol,
            });
        }
        let r = self.robustness(v)?.value;
        let label = if d > 1.0 + tol {
            StateClass::Magic
        } else if r <= 1.0 + tol {
            StateClass::StabilizerMixture
        } else {
            StateClass::Bound
        };
        Ok(Classification {
            label,
            d_value: d,
            r_value: Some(r),
            tolerance: tol,
        })
    }
}

/// Robustness against a prebuilt stabilizer set.
pub fn robustness(v: &BlochVector, set: &StabilizerStateSet) -> Result<f64> {
    Ok(set.robustness(v)?.value)
}

/// Classify a state, enumerating the stabilizer set on demand.
pub fn classify(v: &BlochVector, tol: f64) -> Result<Classification> {
    let d = v.d_measure();
    if d > 1.0 + tol {
        return Ok(Classification {
            label: StateClass::Magic,
            d_value: d,
            r_value: None,
            tolerance: tol,
        });
    }
    enumerate_stabilizer_states(v.num_qubits())?.classify(v, tol, false)
}

// ---------------------------------------------------------------------------
// Random densities and the census
// ---------------------------------------------------------------------------

fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draw `rho = G G^dag / Tr(G G^dag)` with `G` a `2^n x rank` matrix of
/// standard complex Gaussians: the Hilbert-Schmidt measure at full rank.
pub fn random_density(n: usize, rng: &mut impl Rng, rank: Option<usize>) -> Result<BlochVector> {
    if n == 0 || n > MAX_STABILIZER_QUBITS {
        return Err(Error::WidthCap {
            what: "random density",
            width: n,
            cap: MAX_STABILIZER_QUBITS,
        });
    }
    let dim = 1usize << n;
    let rank = rank.unwrap_or(dim);
    if rank == 0 || rank > dim {
        return Err(Error::Parameter {
            name: "rank",
            value: rank as f64,
            range: "1..=2^n",
        });
    }
    let g = DMatrix::<Complex64>::from_fn(dim, rank, |_, _| {
        Complex64::new(standard_normal(rng), standard_normal(rng))
    });
    let gg = &g * g.adjoint();
    let tr = gg.trace().re;
    let op = DenseOperator::new(gg / Complex64::new(tr, 0.0))?;
    bloch_from_dense(&op)
}

/// Census fractions of the three classes under Hilbert-Schmidt sampling.
#[derive(Debug, Clone, Serialize)]
pub struct CensusReport {
    pub num_qubits: usize,
    pub count: usize,
    pub seed: u64,
    pub measure: &'static str,
    pub stabilizer_fraction: f64,
    pub bound_fraction: f64,
    pub magic_fraction: f64,
}

/// Classify `count` Hilbert-Schmidt random densities. Draw `i` uses RNG
/// stream `i` of `seed`, so the result is independent of the worker count.
pub fn census(n: usize, count: usize, seed: u64) -> Result<CensusReport> {
    if count == 0 {
        return Err(Error::Parameter {
            name: "count",
            value: 0.0,
            range: "1..",
        });
    }
    let set = enumerate_stabilizer_states(n)?;
    let counts = crate::sampler::with_worker_pool(|| {
        (0..count)
            .into_par_iter()
            .map(|i| -> Result<[usize; 3]> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let v = random_density(n, &mut rng, None)?;
                let label = set.classify(&v, CLASSIFY_TOL, false)?.label;
                Ok(match label {
                    StateClass::StabilizerMixture => [1, 0, 0],
                    StateClass::Bound => [0, 1, 0],
                    StateClass::Magic => [0, 0, 1],
                    StateClass::Invalid => unreachable!("census states are valid"),
                })
            })
            .try_reduce(|| [0usize; 3], |a, b| Ok([a[0] + b[0], a[1] + b[1], a[2] + b[2]]))
    })?;
    let total = count as f64;
    Ok(CensusReport {
        num_qubits: n,
        count,
        seed,
        measure: "hilbert-schmidt",
        stabilizer_fraction: counts[0] as f64 / total,
        bound_fraction: counts[1] as f64 / total,
        magic_fraction: counts[2] as f64 / total,
    })
}

// ---------------------------------------------------------------------------
// Cross-sections of the two-qubit state body
// ---------------------------------------------------------------------------

/// The three printed two-qubit cross-section families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    A,
    B,
    C,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Family::A),
            "b" => Ok(Family::B),
            "c" => Ok(Family::C),
            other => Err(Error::Parse(format!("unknown family '{other}' (a|b|c)"))),
        }
    }
}

// two-qubit Pauli word indices, qubit 0 first: word = l0 + 4*l1
const XX: usize = 5;
const YY: usize = 10;
const ZZ: usize = 15;
const ZI: usize = 3;
const IZ: usize = 12;
const XY: usize = 9;
const YX: usize = 6;

/// The family state at `(x, y)`; Hermitian and unit trace by construction,
/// but not necessarily positive.
pub fn family_state(family: Family, x: f64, y: f64) -> BlochVector {
    let mut c = vec![0.0f64; 16];
    c[0] = 0.25;
    match family {
        Family::A => {
            c[XX] = x;
            c[ZZ] = x;
            c[YY] = -x;
            c[ZI] = y;
            c[IZ] = y;
        }
        Family::B => {
            c[ZZ] = x;
            c[XX] = y;
            c[XY] = y;
            c[YX] = y;
            c[YY] = -y;
        }
        Family::C => {
            c[ZZ] = 0.2;
            c[XX] = x;
            c[YY] = -x;
            c[XY] = y;
            c[YX] = y;
        }
    }
    BlochVector::new(2, c).expect("16 real coefficients")
}

/// One rasterized cross-section.
#[derive(Debug, Clone)]
pub struct CrossSection {
    pub family: Family,
    pub resolution: usize,
    /// Row-major `(x, y, class)`, y varying fastest.
    pub points: Vec<(f64, f64, StateClass)>,
}

impl CrossSection {
    /// CSV raster with header `x,y,class`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 24 + 16);
        out.push_str("x,y,class\n");
        for &(x, y, class) in &self.points {
            out.push_str(&format!("{x},{y},{}\n", class.csv_label()));
        }
        out
    }

    pub fn class_counts(&self) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for &(_, _, class) in &self.points {
            let idx = match class {
                StateClass::StabilizerMixture => 0,
                StateClass::Bound => 1,
                StateClass::Magic => 2,
                StateClass::Invalid => 3,
            };
            counts[idx] += 1;
        }
        counts
    }
}

/// Classify one family point: `Invalid` when an eigenvalue drops below the
/// PSD floor, the usual three classes otherwise.
pub fn classify_family_point(
    set: &StabilizerStateSet,
    family: Family,
    x: f64,
    y: f64,
    full_lp: bool,
) -> Result<StateClass> {
    let v = family_state(family, x, y);
    let dense = dense_from_bloch(&v)?;
    let min_eig = dense
        .eigenvalues()
        .iter()
        .fold(f64::INFINITY, |m, &e| m.min(e));
    if min_eig < PSD_TOL {
        return Ok(StateClass::Invalid);
    }
    Ok(set.classify(&v, CLASSIFY_TOL, full_lp)?.label)
}

/// Rasterize a family over `x_range` x `y_range` at `resolution` points per
/// axis. Points classify independently and in parallel.
pub fn cross_section(
    family: Family,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: usize,
    full_lp: bool,
) -> Result<CrossSection> {
    if resolution < 2 {
        return Err(Error::Parameter {
            name: "resolution",
            value: resolution as f64,
            range: "2..",
        });
    }
    for (name, (lo, hi)) in [("x_range", x_range), ("y_range", y_range)] {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Parameter {
                name,
                value: lo,
                range: "finite, low < high",
            });
        }
    }
    let set = enumerate_stabilizer_states(2)?;
    let coord = |(lo, hi): (f64, f64), i: usize| {
        lo + (hi - lo) * i as f64 / (resolution - 1) as f64
    };
    let points = crate::sampler::with_worker_pool(|| {
        (0..resolution * resolution)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / resolution, idx % resolution);
                let (x, y) = (coord(x_range, i), coord(y_range, j));
                Ok((x, y, classify_family_point(&set, family, x, y, full_lp)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(CrossSection {
        family,
        resolution,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SQRT_2: f64 = std::f64::consts::SQRT_2;

    fn a_state_bloch() -> BlochVector {
        crate::circuit::NamedState::A.bloch()
    }

    #[test]
    fn enumeration_counts_match_formula() {
        assert_eq!(enumerate_stabilizer_states(1).unwrap().len(), 6);
        assert_eq!(enumerate_stabilizer_states(2).unwrap().len(), 60);
        assert_eq!(enumerate_stabilizer_states(3).unwrap().len(), 1080);
        assert!(enumerate_stabilizer_states(0).is_err());
        assert!(enumerate_stabilizer_states(4).is_err());
    }

    #[test]
    fn single_qubit_states_are_axis_eigenstates() {
        let set = enumerate_stabilizer_states(1).unwrap();
        let mut expect: Vec<Vec<f64>> = Vec::new();
        for axis in 1..4 {
            for sign in [1.0, -1.0] {
                let mut c = vec![0.5, 0.0, 0.0, 0.0];
                c[axis] = 0.5 * sign;
                expect.push(c);
            }
        }
        for want in expect {
            assert!(
                set.states().iter().any(|s| {
                    s.coeffs()
                        .iter()
                        .zip(&want)
                        .all(|(a, b)| (a - b).abs() < 1e-12)
                }),
                "missing eigenstate {want:?}"
            );
        }
    }

    #[test]
    fn enumerated_states_are_pure_normalized_and_distinct() {
        for n in 1..=3 {
            let set = enumerate_stabilizer_states(n).unwrap();
            let mut keys = BTreeSet::new();
            for s in set.states() {
                assert_abs_diff_eq!(s.d_measure(), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(s.purity(), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(s.trace(), 1.0, epsilon = 1e-12);
                let key: Vec<i64> = s
                    .coeffs()
                    .iter()
                    .map(|c| (c * (1 << n) as f64).round() as i64)
                    .collect();
                assert!(keys.insert(key), "duplicate state in n={n} enumeration");
            }
        }
    }

    #[test]
    fn enumerated_states_are_valid_projectors() {
        // every 2-qubit member must be a PSD rank-1 projector
        let set = enumerate_stabilizer_states(2).unwrap();
        for s in set.states().iter().step_by(7) {
            let dense = dense_from_bloch(s).unwrap();
            dense.validate_density(1e-10).unwrap();
        }
    }

    #[test]
    fn robustness_reference_values() {
        let set1 = enumerate_stabilizer_states(1).unwrap();
        let zero = crate::circuit::NamedState::Zero.bloch();
        assert_abs_diff_eq!(robustness(&zero, &set1).unwrap(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(
            robustness(&a_state_bloch(), &set1).unwrap(),
            SQRT_2,
            epsilon = 1e-8
        );
        let set2 = enumerate_stabilizer_states(2).unwrap();
        let mm2 = BlochVector::maximally_mixed(2).unwrap();
        assert_abs_diff_eq!(robustness(&mm2, &set2).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn robustness_certificate_and_d_bound() {
        let set = enumerate_stabilizer_states(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let v = random_density(2, &mut rng, None).unwrap();
            let sol = set.robustness(&v).unwrap();
            // re-substitution reproduces the Bloch vector
            let mut recon = vec![0.0f64; 16];
            for (q, s) in sol.coefficients.iter().zip(set.states()) {
                for (r, &c) in recon.iter_mut().zip(s.coeffs()) {
                    *r += q * c;
                }
            }
            for (a, b) in recon.iter().zip(v.coeffs()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
            let qsum: f64 = sol.coefficients.iter().sum();
            assert_abs_diff_eq!(qsum, 1.0, epsilon = 1e-8);
            assert!(v.d_measure() <= sol.value + 1e-7, "D must not exceed R");
        }
    }

    #[test]
    fn classify_reference_states() {
        let mm2 = BlochVector::maximally_mixed(2).unwrap();
        let c = classify(&mm2, CLASSIFY_TOL).unwrap();
        assert_eq!(c.label, StateClass::StabilizerMixture);
        assert_abs_diff_eq!(c.d_value, 0.25, epsilon = 1e-12);

        let a = classify(&a_state_bloch(), CLASSIFY_TOL).unwrap();
        assert_eq!(a.label, StateClass::Magic);
        assert!(a.r_value.is_none(), "shortcut skips the LP");
        assert_abs_diff_eq!(a.d_value, (1.0 + SQRT_2) / 2.0, epsilon = 1e-12);

        let set = enumerate_stabilizer_states(1).unwrap();
        let full = set.classify(&a_state_bloch(), CLASSIFY_TOL, true).unwrap();
        assert_eq!(full.label, StateClass::Magic);
        assert_abs_diff_eq!(full.r_value.unwrap(), SQRT_2, epsilon = 1e-8);
    }

    #[test]
    fn classifier_never_pairs_low_r_with_high_d() {
        let set = enumerate_stabilizer_states(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..60 {
            let v = random_density(2, &mut rng, None).unwrap();
            let c = set.classify(&v, CLASSIFY_TOL, false).unwrap();
            if c.label == StateClass::StabilizerMixture {
                assert!(c.d_value <= 1.0 + CLASSIFY_TOL);
            }
            if let Some(r) = c.r_value {
                assert!(c.d_value <= r + 1e-7);
            }
        }
    }

    #[test]
    fn random_density_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut mean = [0.0f64; 4];
        let n = 20_000;
        for _ in 0..n {
            let v = random_density(1, &mut rng, None).unwrap();
            assert_abs_diff_eq!(v.trace(), 1.0, epsilon = 1e-12);
            for (m, c) in mean.iter_mut().zip(v.coeffs()) {
                *m += c / n as f64;
            }
        }
        assert_abs_diff_eq!(mean[0], 0.5, epsilon = 1e-12);
        for &m in &mean[1..] {
            assert!(m.abs() < 0.02, "ensemble mean should be maximally mixed");
        }
        // rank-1 draws are pure
        for _ in 0..50 {
            let v = random_density(2, &mut rng, Some(1)).unwrap();
            assert_abs_diff_eq!(v.purity(), 1.0, epsilon = 1e-12);
            let dense = dense_from_bloch(&v).unwrap();
            let min = dense
                .eigenvalues()
                .iter()
                .fold(f64::INFINITY, |m, &e| m.min(e));
            assert!(min > -1e-12);
        }
        assert!(random_density(2, &mut rng, Some(0)).is_err());
        assert!(random_density(2, &mut rng, Some(5)).is_err());
    }

    #[test]
    fn census_small_run_matches_expectations() {
        let report = census(2, 2000, 7).unwrap();
        let sum =
            report.stabilizer_fraction + report.bound_fraction + report.magic_fraction;
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        assert!(report.stabilizer_fraction < 0.05);
        assert!(report.bound_fraction > report.magic_fraction);
        assert!(report.magic_fraction > 0.25);
        // determinism: same seed, same fractions
        let again = census(2, 2000, 7).unwrap();
        assert_eq!(report.bound_fraction, again.bound_fraction);
    }

    #[test]
    fn single_qubit_census_has_no_bound_states() {
        let report = census(1, 1500, 11).unwrap();
        assert_eq!(report.bound_fraction, 0.0);
        assert!(report.magic_fraction > 0.0);
    }

    #[test]
    fn family_states_match_formulas() {
        // (c) at the origin is the diagonal mixture (II + 0.8 ZZ)/4
        let v = family_state(Family::C, 0.0, 0.0);
        let dense = dense_from_bloch(&v).unwrap();
        for (i, want) in [0.45, 0.05, 0.05, 0.45].iter().enumerate() {
            assert_abs_diff_eq!(dense.matrix()[(i, i)].re, want, epsilon = 1e-12);
        }
        // (a) couples x to XX, ZZ, -YY and y to ZI, IZ
        let v = family_state(Family::A, 0.1, 0.2);
        assert_abs_diff_eq!(v.coeffs()[XX], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(v.coeffs()[YY], -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(v.coeffs()[ZI], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(v.coeffs()[IZ], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn family_origins_are_stabilizer_mixtures() {
        let set = enumerate_stabilizer_states(2).unwrap();
        for family in [Family::A, Family::B, Family::C] {
            let label = classify_family_point(&set, family, 0.0, 0.0, false).unwrap();
            assert_eq!(label, StateClass::StabilizerMixture, "{family:?} origin");
        }
    }

    #[test]
    fn far_corners_are_invalid() {
        let set = enumerate_stabilizer_states(2).unwrap();
        for family in [Family::A, Family::B, Family::C] {
            let label = classify_family_point(&set, family, 0.35, 0.35, false).unwrap();
            assert_eq!(label, StateClass::Invalid, "{family:?} far corner");
        }
    }

    #[test]
    fn family_a_raster_shows_all_classes() {
        let grid = cross_section(Family::A, (-0.35, 0.35), (-0.35, 0.35), 41, false).unwrap();
        let counts = grid.class_counts();
        assert!(counts.iter().all(|&c| c > 0), "missing class: {counts:?}");
        let csv = grid.to_csv();
        assert!(csv.starts_with("x,y,class\n"));
        assert_eq!(csv.lines().count(), 41 * 41 + 1);
        assert!(csv.contains(",bound\n") && csv.contains(",magic\n"));
    }

    #[test]
    fn full_lp_agrees_with_shortcut_labels() {
        let set = enumerate_stabilizer_states(2).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.12, 0.0), (0.3, 0.0), (0.0, 0.22), (0.18, 0.1)] {
            for family in [Family::A, Family::B, Family::C] {
                let fast = classify_family_point(&set, family, x, y, false).unwrap();
                let full = classify_family_point(&set, family, x, y, true).unwrap();
                assert_eq!(fast, full, "{family:?} at ({x}, {y})");
            }
        }
    }
}
