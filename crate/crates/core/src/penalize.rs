//! Penalization of the lower constraint `l ≤ Y₋` along δ.
//!
//! The penalized problem replaces the constraint by the generator
//! `n·(l − y)⁺ dδ` and reflects only at `L` (below) and a dominating process
//! `V` (above). The iterates increase in `n`; their limit is the minimal
//! solution with lower data `(ξ, L, l, δ)`.
//!
//! On the lattice the constraint carried by a step-`k+1` node `c` acts on the
//! pre-reflection value `y*` of each parent, which is the left limit seen by
//! a path arriving at `c`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grbsde::{self, check_skorokhod, Generator, GrbsdeProblem, GrbsdeSolution, Penalty, SkorokhodResiduals};
use crate::lattice::{AdaptedProcess, MonotoneMeasure, Predictable, TreeModel};
use crate::snell::snell_envelope;

/// Allowed decrease between consecutive penalized iterates.
pub const MONOTONICITY_TOL: f64 = 1e-10;
/// Default stopping tolerance on the consecutive-iterate sup gap.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Largest penalty in the default schedule.
pub const DEFAULT_N_MAX: u64 = 1 << 20;

/// Data `(ξ, L, l, δ)` on a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerData {
    pub model: TreeModel,
    pub terminal: Vec<f64>,
    /// L, the right-continuous lower barrier (used for `k < N`).
    pub lower_rcll: AdaptedProcess,
    /// l, constrained only where δ charges.
    pub lower_measurable: AdaptedProcess,
    pub measure: MonotoneMeasure,
}

impl LowerData {
    pub fn new(
        model: TreeModel,
        terminal: Vec<f64>,
        lower_rcll: AdaptedProcess,
        lower_measurable: AdaptedProcess,
        measure: MonotoneMeasure,
    ) -> Result<Self> {
        grbsde::check_terminal(&model, &terminal)?;
        model.check_shape(&lower_rcll)?;
        model.check_shape(&lower_measurable)?;
        model.check_measure(&measure)?;
        grbsde::check_integrator(&measure)?;
        Ok(Self {
            model,
            terminal,
            lower_rcll,
            lower_measurable,
            measure,
        })
    }

    /// Classical data `(ξ, L, ·, 0)`.
    pub fn classical(model: TreeModel, terminal: Vec<f64>, lower_rcll: AdaptedProcess) -> Result<Self> {
        let l = lower_rcll.clone();
        let zero = MonotoneMeasure::zero(&model);
        Self::new(model, terminal, lower_rcll, l, zero)
    }

    pub fn steps(&self) -> usize {
        self.model.steps()
    }

    /// Mass `p_c·Δδ(k+1, c)` that the child `c` of `(k, j)` carries.
    pub fn edge_mass(&self, k: usize, c: usize, weight: f64) -> f64 {
        weight * self.measure.increment(k + 1, c)
    }

    /// Charged children `(c, mass)` of the non-terminal node `(k, j)`.
    pub fn charged_children(&self, k: usize, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.model
            .children(j)
            .into_iter()
            .map(move |(c, w)| (c, self.edge_mass(k, c, w)))
            .filter(|&(_, m)| m > 0.0)
    }

    /// `L` with `ξ` on the terminal row.
    pub fn obstacle_with_terminal(&self) -> AdaptedProcess {
        self.lower_rcll.with_terminal(&self.terminal)
    }

    /// Lattice left value of L at a step-`k` node: the smallest parent value
    /// (the value itself at the root).
    pub fn lower_left_min(&self) -> AdaptedProcess {
        let m = &self.model;
        AdaptedProcess::from_fn(m, |k, j| {
            if k == 0 {
                self.lower_rcll.get(0, 0)
            } else {
                m.parents(k, j)
                    .map(|(pj, _)| self.lower_rcll.get(k - 1, pj))
                    .fold(f64::INFINITY, f64::min)
            }
        })
    }

    /// `max(L, l over charged children)` for `k < N`, `ξ` at `N`.
    pub fn effective_barrier(&self) -> AdaptedProcess {
        let n = self.steps();
        AdaptedProcess::from_fn(&self.model, |k, j| {
            if k == n {
                return self.terminal[j];
            }
            self.charged_children(k, j)
                .map(|(c, _)| self.lower_measurable.get(k + 1, c))
                .fold(self.lower_rcll.get(k, j), f64::max)
        })
    }
}

/// `n·(l − y)⁺` with the bound `n·(l − L_left)⁺` on the clamp range.
#[derive(Debug, Clone)]
pub struct PenaltyGenerator {
    n: f64,
    level: AdaptedProcess,
    clamp_low: AdaptedProcess,
    label: String,
}

impl PenaltyGenerator {
    pub fn new(n: u64, level: AdaptedProcess, clamp_low: AdaptedProcess) -> Self {
        Self {
            n: n as f64,
            level,
            clamp_low,
            label: format!("penalty(n={n})"),
        }
    }
}

impl Generator for PenaltyGenerator {
    fn evaluate(&self, step: usize, node: usize, y: f64) -> f64 {
        self.n * (self.level.get(step, node) - y).max(0.0)
    }

    fn bound(&self, step: usize, node: usize) -> f64 {
        self.n * (self.level.get(step, node) - self.clamp_low.get(step, node)).max(0.0)
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn penalty_form(&self, step: usize, node: usize) -> Option<Penalty> {
        Some(Penalty {
            slope: self.n,
            level: self.level.get(step, node),
        })
    }
}

pub fn penalty_generator(n: u64, d: &LowerData) -> PenaltyGenerator {
    PenaltyGenerator::new(n, d.lower_measurable.clone(), d.lower_left_min())
}

/// Martingale with the given terminal row.
pub fn martingale_from_terminal(model: &TreeModel, terminal: &[f64]) -> AdaptedProcess {
    let mut m = AdaptedProcess::constant(model, 0.0).with_terminal(terminal);
    for k in (0..model.steps()).rev() {
        let row = model.expect_row(m.row(k + 1));
        m.row_mut(k).copy_from_slice(&row);
    }
    m
}

/// Largest value each node must dominate: `L`, `l`, and `l` of its charged
/// children; `ξ`, `L` and `l` on the terminal row.
fn requirement(d: &LowerData) -> AdaptedProcess {
    let n = d.steps();
    AdaptedProcess::from_fn(&d.model, |k, j| {
        let own = d.lower_rcll.get(k, j).max(d.lower_measurable.get(k, j));
        if k == n {
            return own.max(d.terminal[j]);
        }
        d.charged_children(k, j)
            .map(|(c, _)| d.lower_measurable.get(k + 1, c))
            .fold(own, f64::max)
    })
}

/// A martingale in the dominating class.
///
/// The terminal value at `(N, i)` is the maximum requirement over every node
/// from which `(N, i)` is reachable, the recombining analogue of the running
/// path maximum; `M` is its conditional expectation.
pub fn default_dominating_martingale(d: &LowerData) -> AdaptedProcess {
    let m = &d.model;
    let need = requirement(d);
    let mut cone = need.clone();
    for k in 1..=m.steps() {
        for j in 0..=k {
            let up = m
                .parents(k, j)
                .map(|(pj, _)| cone.get(k - 1, pj))
                .fold(need.get(k, j), f64::max);
            cone.set(k, j, up);
        }
    }
    martingale_from_terminal(m, cone.terminal())
}

/// Constant dominating process at the largest requirement.
pub fn constant_dominating_bound(d: &LowerData) -> AdaptedProcess {
    AdaptedProcess::constant(&d.model, requirement(d).max_value())
}

/// First violated membership condition of the dominating class, if any.
pub fn membership_violation(d: &LowerData, v: &AdaptedProcess, tol: f64) -> Option<String> {
    let m = &d.model;
    if m.check_shape(v).is_err() {
        return Some("shape differs from the tree".into());
    }
    let sm = m.is_supermartingale(v, tol);
    if !sm.holds {
        return Some(format!(
            "not a supermartingale at {:?} (excess {:e})",
            sm.worst_node, sm.worst_excess
        ));
    }
    let n = m.steps();
    for (j, &x) in d.terminal.iter().enumerate() {
        if v.get(n, j) < x - tol {
            return Some(format!("below the terminal value at ({n}, {j})"));
        }
    }
    for k in 0..n {
        for j in 0..=k {
            if v.get(k, j) < d.lower_rcll.get(k, j) - tol {
                return Some(format!("below L at ({k}, {j})"));
            }
            for (c, _) in d.charged_children(k, j) {
                if v.get(k, j) < d.lower_measurable.get(k + 1, c) - tol {
                    return Some(format!("left limit below l at ({}, {c})", k + 1));
                }
            }
        }
    }
    None
}

pub fn check_membership(d: &LowerData, v: &AdaptedProcess, tol: f64) -> Result<()> {
    match membership_violation(d, v, tol) {
        Some(msg) => Err(Error::NotInClass(msg)),
        None => Ok(()),
    }
}

/// Penalized two-barrier solve with upper barrier `v`.
///
/// Membership of `v` is checked exactly; a positive K⁻ increment would mean
/// the check is broken and is reported as an error.
pub fn solve_penalized(n: u64, d: &LowerData, v: &AdaptedProcess) -> Result<GrbsdeSolution> {
    check_membership(d, v, 0.0)?;
    let problem = GrbsdeProblem::new(
        d.model,
        d.terminal.clone(),
        Arc::new(penalty_generator(n, d)),
        d.measure.clone(),
        d.lower_rcll.clone(),
        v.clone(),
    )?;
    let sol = grbsde::solve_two_barrier(&problem)?;
    for (k, row) in sol.k_minus.rows().iter().enumerate() {
        for (j, &mass) in row.iter().enumerate() {
            if mass != 0.0 {
                return Err(Error::UpperReflection { step: k, node: j, mass });
            }
        }
    }
    Ok(sol)
}

/// Unique solution of `y = lo ∨ [ξ + n·(l_T − y)⁺·m] ∧ hi`.
pub fn terminal_atom_fixpoint(xi: f64, l_t: f64, atom_mass: f64, n: u64, lo: f64, hi: f64) -> f64 {
    let raw = if xi >= l_t {
        xi
    } else {
        let s = n as f64 * atom_mass;
        (xi + n as f64 * l_t * atom_mass) / (1.0 + s)
    };
    raw.max(lo).min(hi)
}

/// Penalty schedule `n_0, n_0·g, n_0·g², … ≤ n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub n0: u64,
    pub growth: u64,
    pub n_max: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            n0: 1,
            growth: 2,
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl Schedule {
    pub fn values(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let mut n = self.n0.max(1);
        while n <= self.n_max {
            out.push(n);
            if self.growth <= 1 {
                break;
            }
            n = match n.checked_mul(self.growth) {
                Some(next) => next,
                None => break,
            };
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: u64,
    pub root: f64,
    /// Sup-norm distance to the previous iterate (0 on the first row).
    pub sup_gap: f64,
    /// Same distance for the pre-reflection values.
    pub pre_gap: f64,
    /// Probability-weighted total of K⁺ including the penalty drift.
    pub k_plus_mass: f64,
    /// Pre-reflection values at step `N − 1`.
    pub pre_terminal: Vec<f64>,
}

/// Cross-check of the last iterate against the direct limit problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCheck {
    /// Sup distance to the Snell envelope of the effective barrier.
    pub gap: f64,
    /// A-posteriori bound on that distance from the finite penalty.
    pub penalty_floor: f64,
}

impl LimitCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.gap <= tol + self.penalty_floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub final_n: u64,
    pub sup_gap: f64,
    /// Largest decrease seen between consecutive iterates.
    pub monotonicity_violation: f64,
    pub converged: bool,
    /// `L ≤ Y ≤ V` for `k < N`.
    pub bounds_hold: bool,
    pub supermartingale: bool,
    pub trace: Vec<TraceRow>,
    pub limit: LimitCheck,
}

/// `(Y, Z, K⁺)` of the constrained problem, with the last penalized solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbsdeSolution {
    pub y: AdaptedProcess,
    pub z: Predictable,
    /// Clamp reflection at L plus the penalty drift, per node.
    pub k_plus: MonotoneMeasure,
    /// Pre-reflection values (left limits) at every non-terminal node.
    pub pre: Predictable,
    pub dominating: AdaptedProcess,
    pub penalized: GrbsdeSolution,
    pub diagnostics: Diagnostics,
}

impl RbsdeSolution {
    /// Largest residual of `Y_k = Y_{k+1} + ΔK⁺ − Z·ΔB` over both children.
    pub fn backward_identity_residual(&self, model: &TreeModel) -> f64 {
        let sq = model.dt().sqrt();
        let mut worst: f64 = 0.0;
        for k in 0..model.steps() {
            for j in 0..=k {
                let z = self.z.get(k, j);
                for (c, db) in [(j, -sq), (j + 1, sq)] {
                    let rhs = self.y.get(k + 1, c) + self.k_plus.increment(k, j) - z * db;
                    worst = worst.max((self.y.get(k, j) - rhs).abs());
                }
            }
        }
        worst
    }
}

fn weighted_mass(m: &MonotoneMeasure, model: &TreeModel) -> f64 {
    m.expected_mass(model)
}

fn rbsde_k_plus(sol: &GrbsdeSolution, model: &TreeModel) -> Result<MonotoneMeasure> {
    let rows = (0..=model.steps())
        .map(|k| {
            (0..=k)
                .map(|j| {
                    if k == model.steps() {
                        0.0
                    } else {
                        sol.k_plus.increment(k, j) + sol.drift.get(k, j)
                    }
                })
                .collect()
        })
        .collect();
    MonotoneMeasure::from_increments(rows, Default::default())
}

fn trace_row(n: u64, sol: &GrbsdeSolution, prev: Option<&GrbsdeSolution>, model: &TreeModel) -> Result<TraceRow> {
    let steps = model.steps();
    Ok(TraceRow {
        n,
        root: sol.y.root(),
        sup_gap: prev.map_or(0.0, |p| p.y.max_abs_diff(&sol.y)),
        pre_gap: prev.map_or(0.0, |p| pre_distance(&p.pre, &sol.pre)),
        k_plus_mass: weighted_mass(&rbsde_k_plus(sol, model)?, model),
        pre_terminal: sol.pre.row(steps - 1).to_vec(),
    })
}

fn pre_distance(a: &Predictable, b: &Predictable) -> f64 {
    (0..a.steps())
        .flat_map(|k| a.row(k).iter().zip(b.row(k)).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Largest `(l − y*)⁺` over charged edges, the unmet part of the constraint.
pub fn constraint_shortfall(d: &LowerData, pre: &Predictable) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..d.steps() {
        for j in 0..=k {
            for (c, _) in d.charged_children(k, j) {
                worst = worst.max(d.lower_measurable.get(k + 1, c) - pre.get(k, j));
            }
        }
    }
    worst
}

/// Direct limit: the classical envelope of the effective barrier.
pub fn effective_limit(d: &LowerData) -> Result<AdaptedProcess> {
    snell_envelope(&d.effective_barrier(), &d.model)
}

/// Sum over steps of the largest local shortfall `max(e, l_max) − y*`,
/// which bounds the distance from a penalized iterate to the limit.
pub fn penalty_floor(d: &LowerData, sol: &GrbsdeSolution) -> f64 {
    let m = &d.model;
    let mut floor = 0.0;
    for k in 0..m.steps() {
        let cont = m.expect_row(sol.y.row(k + 1));
        let mut worst: f64 = 0.0;
        for (j, &e) in cont.iter().enumerate() {
            let target = d
                .charged_children(k, j)
                .map(|(c, _)| d.lower_measurable.get(k + 1, c))
                .fold(e, f64::max);
            worst = worst.max(target - sol.pre.get(k, j));
        }
        floor += worst;
    }
    floor
}

/// Penalized iterates along the schedule, stopped at the first sup gap
/// below `tol` in both Y and its pre-reflection values.
///
/// The `n = 0` solve is computed first; if it already meets every charged
/// constraint, the penalty can never activate and it is the limit.
/// Non-convergence at `n_max` is reported in the diagnostics, not raised.
pub fn iterate_to_limit(d: &LowerData, schedule: &Schedule, tol: f64) -> Result<RbsdeSolution> {
    let model = &d.model;
    let v = default_dominating_martingale(d);
    let mut current = solve_penalized(0, d, &v)?;
    let mut final_n = 0;
    let mut trace = vec![trace_row(0, &current, None, model)?];
    let mut sup_gap = 0.0;
    let mut worst_decrease: f64 = 0.0;
    let mut converged = true;

    if constraint_shortfall(d, &current.pre) > 0.0 {
        converged = false;
        for n in schedule.values() {
            let next = solve_penalized(n, d, &v)?;
            let mut decrease: f64 = 0.0;
            for (k, j, x) in current.y.iter_nodes() {
                decrease = decrease.max(x - next.y.get(k, j));
            }
            if decrease > MONOTONICITY_TOL {
                return Err(Error::Monotonicity {
                    from: final_n,
                    to: n,
                    violation: decrease,
                });
            }
            worst_decrease = worst_decrease.max(decrease);
            let row = trace_row(n, &next, Some(&current), model)?;
            sup_gap = row.sup_gap;
            // While Y sits on L the iterates can agree exactly even though
            // the left limits are still moving, so both must settle.
            let gap = row.sup_gap.max(row.pre_gap);
            trace.push(row);
            current = next;
            final_n = n;
            if gap < tol || gap == 0.0 {
                converged = true;
                break;
            }
        }
    }

    let steps = model.steps();
    let mut bounds_hold = true;
    for k in 0..steps {
        for j in 0..=k {
            let y = current.y.get(k, j);
            if y < d.lower_rcll.get(k, j) || y > v.get(k, j) {
                bounds_hold = false;
            }
        }
    }
    let supermartingale = model.is_supermartingale(&current.y, grbsde::CERT_TOL).holds;
    let limit = LimitCheck {
        gap: effective_limit(d)?.max_abs_diff(&current.y),
        penalty_floor: penalty_floor(d, &current),
    };
    let k_plus = rbsde_k_plus(&current, model)?;
    Ok(RbsdeSolution {
        y: current.y.clone(),
        z: current.z.clone(),
        k_plus,
        pre: current.pre.clone(),
        dominating: v,
        diagnostics: Diagnostics {
            final_n,
            sup_gap,
            monotonicity_violation: worst_decrease,
            converged,
            bounds_hold,
            supermartingale,
            trace,
            limit,
        },
        penalized: current,
    })
}

/// Skorokhod residuals of the last penalized solve against `L` and `V`.
pub fn penalized_skorokhod(sol: &RbsdeSolution, d: &LowerData) -> SkorokhodResiduals {
    check_skorokhod(&sol.penalized, &d.lower_rcll, &sol.dominating, &d.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub seed: u64,
    pub tests: usize,
    /// Residual against the effective barrier clamped by Y.
    pub canonical_residual: f64,
    pub worst_residual: f64,
    pub k_plus_mass: f64,
}

impl MinimalityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.canonical_residual.max(self.worst_residual) <= tol * (1.0 + self.k_plus_mass)
    }
}

/// `E Σ (Y − L*)·ΔK⁺` for the test barrier `L*`.
pub fn minimality_residual(sol: &RbsdeSolution, l_star: &AdaptedProcess, model: &TreeModel) -> f64 {
    let probs = model.node_probabilities();
    let mut total = 0.0;
    for (k, row) in probs.iter().enumerate().take(model.steps()) {
        for (j, &p) in row.iter().enumerate() {
            total += p * (sol.y.get(k, j) - l_star.get(k, j)) * sol.k_plus.increment(k, j);
        }
    }
    total
}

/// Tests the minimality condition against barriers `L*` in the corridor
/// between the effective barrier (clamped by Y) and Y.
pub fn check_minimality(sol: &RbsdeSolution, d: &LowerData, trials: usize, seed: u64) -> MinimalityReport {
    let model = &d.model;
    let n = model.steps();
    let eff = d.effective_barrier();
    let floor = AdaptedProcess::from_fn(model, |k, j| {
        if k == n {
            sol.y.get(k, j)
        } else {
            eff.get(k, j).min(sol.y.get(k, j))
        }
    });
    let canonical_residual = minimality_residual(sol, &floor, model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_residual = canonical_residual;
    for _ in 0..trials {
        let l_star = floor.zip_with(&sol.y, |lo, hi| lo + rng.gen::<f64>() * (hi - lo));
        worst_residual = worst_residual.max(minimality_residual(sol, &l_star, model));
    }
    MinimalityReport {
        seed,
        tests: trials + 1,
        canonical_residual,
        worst_residual,
        k_plus_mass: sol.k_plus.expected_mass(model),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounterexample {
    pub step: usize,
    pub node: usize,
    pub y: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallestInClassReport {
    pub seed: u64,
    pub sampled: usize,
    pub accepted: usize,
    /// Largest `Y − V` over accepted members.
    pub worst_excess: f64,
    pub counterexample: Option<ClassCounterexample>,
}

impl SmallestInClassReport {
    pub fn passes(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Tolerance used to compare Y against sampled members.
pub const CLASS_TOL: f64 = 1e-10;
/// Tolerance of the membership filter on sampled candidates.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Draws candidate members of the dominating class and records the first one
/// that Y fails to stay below.
///
/// Candidates mix the dominating martingale of perturbed data, a random
/// nondecreasing drift subtracted from it, and the exact limit envelope;
/// each is kept only if it passes the membership check.
pub fn check_smallest_in_class(
    sol: &RbsdeSolution,
    d: &LowerData,
    trials: usize,
    seed: u64,
) -> Result<SmallestInClassReport> {
    let model = &d.model;
    let n = model.steps();
    let limit = effective_limit(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SmallestInClassReport {
        seed,
        sampled: 0,
        accepted: 0,
        worst_excess: f64::NEG_INFINITY,
        counterexample: None,
    };
    let record = |report: &mut SmallestInClassReport, v: &AdaptedProcess| {
        report.accepted += 1;
        for (k, j, y) in sol.y.iter_nodes() {
            let excess = y - v.get(k, j);
            report.worst_excess = report.worst_excess.max(excess);
            if excess > CLASS_TOL && report.counterexample.is_none() {
                report.counterexample = Some(ClassCounterexample {
                    step: k,
                    node: j,
                    y,
                    v: v.get(k, j),
                });
            }
        }
    };

    for v in [default_dominating_martingale(d), limit.clone()] {
        report.sampled += 1;
        if membership_violation(d, &v, MEMBERSHIP_TOL).is_none() {
            record(&mut report, &v);
        }
    }
    let max_attempts = 20 * trials.max(1);
    while report.accepted < trials + 2 && report.sampled < max_attempts {
        report.sampled += 1;
        // Data raised by at least bump/2 and a drift that ends below bump/2,
        // so the difference still dominates the original constraints.
        let bump = rng.gen_range(0.0..0.5);
        let mut lift = || bump * (0.5 + 0.5 * rng.gen::<f64>());
        let perturbed = LowerData {
            terminal: d.terminal.iter().map(|x| x + lift()).collect(),
            lower_rcll: d.lower_rcll.map(|_, _, x| x + lift()),
            lower_measurable: d.lower_measurable.map(|_, _, x| x + lift()),
            ..d.clone()
        };
        let base = default_dominating_martingale(&perturbed);
        // Nondecreasing along every path: each node at least its parents' max.
        let scale = rng.gen::<f64>() * bump / (2 * n) as f64;
        let mut a = AdaptedProcess::constant(model, 0.0);
        for k in 1..=n {
            for j in 0..=k {
                let parent = model.parents(k, j).map(|(pj, _)| a.get(k - 1, pj)).fold(0.0, f64::max);
                a.set(k, j, parent + scale * rng.gen::<f64>());
            }
        }
        let theta: f64 = rng.gen();
        let v = base
            .zip_with(&a, |b, x| b - x)
            .zip_with(&limit, |m, y| theta * m + (1.0 - theta) * y);
        if membership_violation(d, &v, MEMBERSHIP_TOL).is_none() {
            record(&mut report, &v);
        }
    }
    Ok(report)
}
