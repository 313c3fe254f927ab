//! A two-phase revised primal simplex solver for small equality-form linear
//! programs: minimize `c . x` subject to `A x = b`, `x >= 0`.
//!
//! The robustness programs this crate solves are tiny by LP standards (at
//! most 64 equality rows by ~2200 columns for three qubits), but they are
//! about as degenerate as equality programs get: the right-hand side is
//! sparse and the optimum sits on a large optimal face, so a naive tableau
//! method spends essentially all of its time shuffling across degenerate
//! plateaus. Two choices keep the solves quick and dependable:
//!
//! * the right-hand side is randomly perturbed (fixed seed, so solves stay
//!   deterministic), which makes every basic solution nondegenerate with
//!   probability one, and the final basis is re-solved against the original
//!   right-hand side — sound because dual feasibility of a basis does not
//!   involve `b` at all;
//! * the solver is *revised*: it maintains the basis inverse rather than the
//!   full tableau, and prices over sparse columns. A stabilizer-state column
//!   has `2^n` nonzeros out of `4^n` rows, so pricing the whole column set
//!   costs less than a single dense tableau pivot.
//!
//! Pricing uses Dantzig's rule with Bland's rule as a stall fallback, and
//! ratio-test ties (rare once perturbed) break lexicographically over the
//! basis inverse so no choice can repeat.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
/// Feasibility slack allowed in the first ratio-test pass so the second
/// pass can prefer larger pivot elements. Pivoting on a tiny entry divides
/// the eta update by it and wrecks the basis inverse.
const RATIO_RELAX: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const RESIDUAL_TOL: f64 = 1e-8;
/// Scale of the anti-degeneracy perturbation added to the right-hand side.
const PERTURB_SCALE: f64 = 1e-10;
/// Iterations without strict objective decrease before switching to Bland.
const STALL_LIMIT: usize = 200;
/// Iterations between refactorizations of the basis inverse.
const REFACTOR_INTERVAL: usize = 100;

/// An optimal basic feasible solution.
#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// The constraint matrix in compressed sparse column form.
struct Columns {
    m: usize,
    ptr: Vec<u32>,
    rows: Vec<u32>,
    vals: Vec<f64>,
}

impl Columns {
    /// Sparsify `a`, scaling each row by `row_scale`.
    fn from_dense(a: &DMatrix<f64>, row_scale: &[f64]) -> Columns {
        let mut ptr = Vec::with_capacity(a.ncols() + 1);
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        ptr.push(0);
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                let v = row_scale[i] * a[(i, j)];
                if v != 0.0 {
                    rows.push(i as u32);
                    vals.push(v);
                }
            }
            ptr.push(rows.len() as u32);
        }
        Columns {
            m: a.nrows(),
            ptr,
            rows,
            vals,
        }
    }

    fn n(&self) -> usize {
        self.ptr.len() - 1
    }

    fn col(&self, j: usize) -> (&[u32], &[f64]) {
        let lo = self.ptr[j] as usize;
        let hi = self.ptr[j + 1] as usize;
        (&self.rows[lo..hi], &self.vals[lo..hi])
    }
}

/// Working state of the revised method. Basis entries `>= n` denote the
/// artificial unit column for that row. The basis inverse is stored
/// transposed (`binv_t[(j, i)] = (B^-1)[(i, j)]`), which turns the hot row
/// operations of the eta update and the dual solve into contiguous column
/// arithmetic.
struct Solver {
    cols: Columns,
    /// Right-hand side after row flips and the perturbation.
    b: DVector<f64>,
    binv_t: DMatrix<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
}

impl Solver {
    fn n(&self) -> usize {
        self.cols.n()
    }

    fn m(&self) -> usize {
        self.cols.m
    }

    /// `B^-1 a_j` for a structural or artificial column.
    fn ftran(&self, j: usize) -> DVector<f64> {
        let m = self.m();
        let n = self.n();
        let mut w = DVector::<f64>::zeros(m);
        if j >= n {
            let r = j - n;
            for i in 0..m {
                w[i] = self.binv_t[(r, i)];
            }
            return w;
        }
        let (rows, vals) = self.cols.col(j);
        let bt = self.binv_t.as_slice();
        for (&r, &v) in rows.iter().zip(vals) {
            let r = r as usize;
            // strided gather over one row of the transposed inverse
            for i in 0..m {
                w[i] += v * bt[i * m + r];
            }
        }
        w
    }

    /// Current basic levels `B^-1 b`.
    fn levels(&self) -> DVector<f64> {
        self.binv_t.tr_mul(&self.b)
    }

    /// Dual prices `y = c_B B^-1` for the given per-column costs.
    fn duals(&self, costs: &[f64]) -> DVector<f64> {
        let cb = DVector::<f64>::from_iterator(self.m(), self.basis.iter().map(|&bi| costs[bi]));
        &self.binv_t * cb
    }

    /// Reduced cost of structural column `j` under duals `y`.
    fn reduced_cost(&self, y: &DVector<f64>, costs: &[f64], j: usize) -> f64 {
        let (rows, vals) = self.cols.col(j);
        let ys = y.as_slice();
        let along: f64 = rows
            .iter()
            .zip(vals)
            .map(|(&i, &v)| ys[i as usize] * v)
            .sum();
        along - costs[j]
    }

    /// Bring `col` into the basis on `row`, applying the eta update to the
    /// inverse (`w` is `ftran(col)`).
    fn pivot(&mut self, row: usize, col: usize, w: &DVector<f64>) {
        let m = self.m();
        let wr = w[row];
        let bt = self.binv_t.as_mut_slice();
        for i in 0..m {
            if i == row {
                continue;
            }
            let f = w[i] / wr;
            if f != 0.0 {
                let (pivot_col, target) = if i < row {
                    let (lo, hi) = bt.split_at_mut(row * m);
                    (&hi[..m], &mut lo[i * m..i * m + m])
                } else {
                    let (lo, hi) = bt.split_at_mut(i * m);
                    (&lo[row * m..row * m + m], &mut hi[..m])
                };
                for (t, &p) in target.iter_mut().zip(pivot_col) {
                    *t -= f * p;
                }
            }
        }
        for p in &mut bt[row * m..row * m + m] {
            *p /= wr;
        }
        let old = self.basis[row];
        if old < self.n() {
            self.in_basis[old] = false;
        }
        if col < self.n() {
            self.in_basis[col] = true;
        }
        self.basis[row] = col;
    }

    /// Rebuild the inverse from the basis columns, shedding accumulated
    /// update error.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m();
        let n = self.n();
        let mut bm = DMatrix::<f64>::zeros(m, m);
        for (r, &bi) in self.basis.iter().enumerate() {
            if bi < n {
                let (rows, vals) = self.cols.col(bi);
                for (&i, &v) in rows.iter().zip(vals) {
                    bm[(i as usize, r)] = v;
                }
            } else {
                bm[(bi - n, r)] = 1.0;
            }
        }
        let inv = bm
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Solver("singular working basis".into()))?;
        self.binv_t = inv.transpose();
        Ok(())
    }
}

/// Minimize `c . x` subject to `A x = b`, `x >= 0`.
///
/// Returns an error when the program is infeasible or unbounded, when the
/// iteration cap is hit, or when the final residual check fails.
pub(crate) fn solve_equality_lp(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let m = a.nrows();
    let n = a.ncols();
    if b.len() != m || c.len() != n {
        return Err(Error::Solver(format!(
            "LP shape mismatch: A is {m}x{n}, |b| = {}, |c| = {}",
            b.len(),
            c.len()
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::Solver("empty linear program".into()));
    }

    // Perturb the right-hand side so no basic solution is degenerate, then
    // flip rows to make it nonnegative for the artificial starting basis.
    let mut noise = ChaCha8Rng::seed_from_u64(0xB10C);
    let b_pert: Vec<f64> = b
        .iter()
        .map(|&bi| bi + PERTURB_SCALE * noise.gen_range(0.5..1.5))
        .collect();
    let flips: Vec<f64> = b_pert
        .iter()
        .map(|&bi| if bi < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let mut solver = Solver {
        cols: Columns::from_dense(a, &flips),
        b: DVector::from_iterator(m, b_pert.iter().zip(&flips).map(|(&bi, &f)| f * bi)),
        binv_t: DMatrix::identity(m, m),
        basis: (n..n + m).collect(),
        in_basis: vec![false; n],
    };

    // Phase 1: minimize the artificial sum down to (numerical) zero. The
    // phase may stop at feasibility without certifying optimality; the
    // certification tail is where degenerate programs burn their time.
    let mut phase1_costs = vec![0.0; n + m];
    for cost in phase1_costs.iter_mut().skip(n) {
        *cost = 1.0;
    }
    run_phase(&mut solver, &phase1_costs, Some(1e-9), true)?;
    let residue: f64 = solver
        .levels()
        .iter()
        .zip(&solver.basis)
        .filter(|(_, &bi)| bi >= n)
        .map(|(lv, _)| lv)
        .sum();
    if residue > FEAS_TOL {
        return Err(Error::Solver(format!(
            "infeasible program (artificial residue {residue:.3e})"
        )));
    }

    // Drive leftover artificials out of the basis where a structural pivot
    // exists; rows without one are redundant constraints, and their
    // artificials stay pinned in the basis at (numerically) zero level.
    for r in 0..m {
        if solver.basis[r] < n {
            continue;
        }
        let found = (0..n).find(|&j| {
            if solver.in_basis[j] {
                return false;
            }
            let (rows, vals) = solver.cols.col(j);
            let along: f64 = rows
                .iter()
                .zip(vals)
                .map(|(&i, &v)| solver.binv_t[(i as usize, r)] * v)
                .sum();
            along.abs() > PIVOT_TOL
        });
        if let Some(j) = found {
            let w = solver.ftran(j);
            solver.pivot(r, j, &w);
        }
    }

    // Phase 2 on the real objective; artificials may neither enter nor
    // leave, so pinned redundant rows stay parked.
    let mut phase2_costs = c.to_vec();
    phase2_costs.resize(n + m, 0.0);
    run_phase(&mut solver, &phase2_costs, None, false)?;

    // Solve the optimal basis against the unperturbed right-hand side,
    // straight from the original data rather than the drifted inverse.
    let mut bm = DMatrix::<f64>::zeros(m, m);
    for (r, &bi) in solver.basis.iter().enumerate() {
        if bi < n {
            for i in 0..m {
                bm[(i, r)] = a[(i, bi)];
            }
        } else {
            // artificial for row `bi - n` in original (unflipped) coordinates
            bm[(bi - n, r)] = flips[bi - n];
        }
    }
    let x_basis = bm
        .lu()
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| Error::Solver("singular final basis".into()))?;
    let mut x = vec![0.0; n];
    for (r, &bi) in solver.basis.iter().enumerate() {
        if bi < n {
            x[bi] = x_basis[r].max(0.0);
        }
    }
    let mut worst = 0.0f64;
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..n {
            s += a[(i, j)] * x[j];
        }
        worst = worst.max((s - b[i]).abs());
    }
    if worst > RESIDUAL_TOL {
        return Err(Error::Solver(format!(
            "solution residual {worst:.3e} exceeds {RESIDUAL_TOL:.0e}"
        )));
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { x, objective })
}

/// Run simplex iterations until no structural column prices favorably.
/// Artificial columns never enter; they may leave only in phase 1 (when
/// `artificials_leave` is set). With `stop_at`, the phase also ends once the
/// objective falls to that level, without certifying optimality.
fn run_phase(
    s: &mut Solver,
    costs: &[f64],
    stop_at: Option<f64>,
    artificials_leave: bool,
) -> Result<()> {
    let n = s.n();
    let m = s.m();
    let max_iter = 50_000 + 100 * (n + m);
    let mut stall = 0usize;
    let mut bland = false;
    let mut last_obj = f64::INFINITY;
    for iter in 0..max_iter {
        if iter > 0 && iter % REFACTOR_INTERVAL == 0 {
            s.refactor()?;
        }
        let levels = s.levels();
        let obj: f64 = s
            .basis
            .iter()
            .zip(levels.iter())
            .map(|(&bi, lv)| costs[bi] * lv)
            .sum();
        if stop_at.is_some_and(|target| obj <= target) {
            return Ok(());
        }
        let y = s.duals(costs);
        let entering = if bland {
            (0..n).find(|&j| !s.in_basis[j] && s.reduced_cost(&y, costs, j) > COST_TOL)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if s.in_basis[j] {
                    continue;
                }
                let z = s.reduced_cost(&y, costs, j);
                if z > COST_TOL && best.map_or(true, |(_, bz)| z > bz) {
                    best = Some((j, z));
                }
            }
            best.map(|(j, _)| j)
        };
        let Some(col) = entering else {
            return Ok(());
        };
        let w = s.ftran(col);
        let Some(row) = leaving_row(s, &levels, &w, artificials_leave) else {
            return Err(Error::Solver("unbounded linear program".into()));
        };
        s.pivot(row, col, &w);
        if obj < last_obj - 1e-12 {
            stall = 0;
            bland = false;
            last_obj = obj;
        } else {
            stall += 1;
            if stall >= STALL_LIMIT {
                bland = true;
            }
        }
    }
    Err(Error::Solver("simplex iteration limit reached".into()))
}

/// Two-pass minimum-ratio leaving row. The first pass finds the minimum
/// ratio with a small feasibility relaxation; the second picks, among rows
/// whose true ratio fits under that bound, the largest pivot element
/// (keeping the eta update well-scaled). Remaining ties break
/// lexicographically over the basis inverse, whose rows are linearly
/// independent, so the comparison always resolves.
fn leaving_row(
    s: &Solver,
    levels: &DVector<f64>,
    w: &DVector<f64>,
    artificials_leave: bool,
) -> Option<usize> {
    let n = s.n();
    let m = s.m();
    let eligible = |i: usize| (artificials_leave || s.basis[i] < n) && w[i] > PIVOT_TOL;
    let mut relaxed_min = f64::INFINITY;
    for i in 0..m {
        if eligible(i) {
            relaxed_min = relaxed_min.min((levels[i].max(0.0) + RATIO_RELAX) / w[i]);
        }
    }
    if relaxed_min.is_infinite() {
        return None;
    }
    let mut leave: Option<usize> = None;
    for i in 0..m {
        if eligible(i) && levels[i].max(0.0) / w[i] <= relaxed_min {
            let better = match leave {
                None => true,
                Some(li) if w[i] > w[li] * (1.0 + 1e-9) => true,
                Some(li) if w[li] > w[i] * (1.0 + 1e-9) => false,
                Some(li) => lex_beats(s, levels, w, i, li),
            };
            if better {
                leave = Some(i);
            }
        }
    }
    leave
}

/// Lexicographic tie-break: does row `i` beat row `li`? Compares the rows
/// of `[levels | B^-1]` scaled by their pivot-column entries.
fn lex_beats(s: &Solver, levels: &DVector<f64>, w: &DVector<f64>, i: usize, li: usize) -> bool {
    let vi = levels[i] / w[i];
    let vl = levels[li] / w[li];
    if (vi - vl).abs() > 1e-12 {
        return vi < vl;
    }
    for j in 0..s.m() {
        let vi = s.binv_t[(j, i)] / w[i];
        let vl = s.binv_t[(j, li)] / w[li];
        if (vi - vl).abs() > 1e-12 {
            return vi < vl;
        }
    }
    false
}
