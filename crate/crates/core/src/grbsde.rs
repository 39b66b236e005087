//! Generalized reflected BSDE with two barriers `L ≤ Y ≤ U`, driven by
//! `∫ g(s, Y_{s−}) dδ_s`, solved backward on the lattice.
//!
//! At a non-terminal node the step `(t_k, t_{k+1}]` contributes the drift
//! `D(y) = E[g(k+1, ·, y)·Δδ_{k+1} | F_k]`. The pre-reflection value `y*`
//! solves `y = E[Y_{k+1}|F_k] + D(y)` and stands in for the left limit; the
//! node value is the two-sided clamp of `y*` and the clamp residuals are the
//! increments of K⁺ and K⁻.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, AdaptedProcess, MonotoneMeasure, Predictable, SupermartingaleReport, TreeModel};

/// Absolute tolerance of the implicit root find.
pub const ROOT_TOL: f64 = 1e-12;
/// Residual tolerance for certificates on solver output.
pub const CERT_TOL: f64 = 1e-10;
/// Cap on bracket doublings in the implicit step.
pub const MAX_BRACKET_DOUBLINGS: u32 = 50;
const GRID_CELLS: usize = 64;

/// `slope·(level − y)⁺`, the piecewise-linear generator shape solved in
/// closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub slope: f64,
    pub level: f64,
}

/// Generator `g(step, node, y)`, evaluated at the node that closes the step
/// it charges (`step ∈ 1..=N`).
pub trait Generator: Send + Sync {
    fn evaluate(&self, step: usize, node: usize, y: f64) -> f64;

    /// The dominating process β of `|g(·, y)| ≤ β` on the clamp range.
    fn bound(&self, step: usize, node: usize) -> f64;

    fn label(&self) -> &str;

    /// Closed-form shape, if the generator is a single penalty term at this node.
    fn penalty_form(&self, _step: usize, _node: usize) -> Option<Penalty> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroGenerator;

impl Generator for ZeroGenerator {
    fn evaluate(&self, _: usize, _: usize, _: f64) -> f64 {
        0.0
    }

    fn bound(&self, _: usize, _: usize) -> f64 {
        0.0
    }

    fn label(&self) -> &str {
        "zero"
    }

    fn penalty_form(&self, _: usize, _: usize) -> Option<Penalty> {
        Some(Penalty { slope: 0.0, level: 0.0 })
    }
}

/// Generator backed by a closure and an explicit bound process.
pub struct FnGenerator<F> {
    f: F,
    bound: AdaptedProcess,
    label: String,
}

impl<F> FnGenerator<F>
where
    F: Fn(usize, usize, f64) -> f64 + Send + Sync,
{
    pub fn new(label: impl Into<String>, bound: AdaptedProcess, f: F) -> Self {
        Self {
            f,
            bound,
            label: label.into(),
        }
    }
}

impl<F> Generator for FnGenerator<F>
where
    F: Fn(usize, usize, f64) -> f64 + Send + Sync,
{
    fn evaluate(&self, step: usize, node: usize, y: f64) -> f64 {
        (self.f)(step, node, y)
    }

    fn bound(&self, step: usize, node: usize) -> f64 {
        self.bound.get(step, node)
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// Drift of one backward step as a function of the pre-reflection value.
///
/// Penalty terms are evaluated as given; general generator terms are
/// evaluated at the clamp `lo ∨ y ∧ hi`, the only range on which a generator
/// is required to be bounded.
#[derive(Clone, Default)]
pub struct NodeDrift<'a> {
    constant: f64,
    penalties: Vec<Penalty>,
    general: Vec<(f64, usize, usize)>,
    generator: Option<&'a dyn Generator>,
    lo: f64,
    hi: f64,
}

impl<'a> NodeDrift<'a> {
    pub fn zero() -> Self {
        Self::default()
    }

    /// A predictable drift that does not depend on `y`.
    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            ..Self::default()
        }
    }

    /// `n·(level − y)⁺·ddelta`.
    pub fn penalty(n: f64, level: f64, ddelta: f64) -> Self {
        let mut d = Self::default();
        d.push_penalty(Penalty {
            slope: n * ddelta,
            level,
        });
        d
    }

    /// `gen(step, node, y)·ddelta`, clamped to `[lo, hi]` inside the generator.
    pub fn single(gen: &'a dyn Generator, step: usize, node: usize, ddelta: f64, lo: f64, hi: f64) -> Self {
        let mut d = Self {
            lo,
            hi,
            ..Self::default()
        };
        d.push_term(gen, ddelta, step, node);
        d
    }

    fn push_penalty(&mut self, p: Penalty) {
        if p.slope > 0.0 {
            self.penalties.push(p);
        }
    }

    fn push_term(&mut self, gen: &'a dyn Generator, weight: f64, step: usize, node: usize) {
        if weight <= 0.0 {
            return;
        }
        match gen.penalty_form(step, node) {
            Some(p) => self.push_penalty(Penalty {
                slope: weight * p.slope,
                level: p.level,
            }),
            None => {
                self.generator = Some(gen);
                self.general.push((weight, step, node));
            }
        }
    }

    pub fn evaluate(&self, y: f64) -> f64 {
        let mut total = self.constant;
        for p in &self.penalties {
            total += p.slope * (p.level - y).max(0.0);
        }
        if let Some(gen) = self.generator {
            let yc = y.max(self.lo).min(self.hi);
            for &(w, step, node) in &self.general {
                total += w * gen.evaluate(step, node, yc);
            }
        }
        total
    }

    /// Upper bound on `|D(y)|` over the clamp range, ignoring penalty terms.
    fn general_bound(&self) -> f64 {
        let gen_bound = self
            .generator
            .map(|g| {
                self.general
                    .iter()
                    .map(|&(w, s, n)| w * g.bound(s, n).abs())
                    .sum::<f64>()
            })
            .unwrap_or(0.0);
        gen_bound + self.constant.abs()
    }

    fn is_piecewise_linear(&self) -> bool {
        self.general.is_empty()
    }
}

/// Result of one implicit backward step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Root `y*` of `y = e + D(y)`, before reflection.
    pub pre: f64,
    /// `lo ∨ y* ∧ hi`.
    pub value: f64,
    pub dk_plus: f64,
    pub dk_minus: f64,
    /// Realized drift `y* − e`.
    pub drift: f64,
    /// `|y* − e − D(y*)|`, the accuracy of the root.
    pub root_residual: f64,
}

/// Solves `y* = e + D(y*)` and reflects it into `[lo, hi]`.
///
/// Piecewise-linear drifts are solved in closed form. Otherwise the smallest
/// sign change of `y − e − D(y)` on a grid over the bound bracket is refined
/// by bisection. When `lo = hi` the lower reflection takes priority and K⁻
/// only charges the overshoot above `hi`.
pub fn implicit_step(e: f64, drift: &NodeDrift<'_>, lo: f64, hi: f64) -> Result<StepOutcome> {
    if !(lo <= hi) {
        return Err(Error::BarrierOrder {
            step: 0,
            node: 0,
            lower: lo,
            upper: hi,
        });
    }
    let pre = if drift.is_piecewise_linear() {
        penalty_root(e + drift.constant, &drift.penalties)
    } else {
        bracketed_root(e, drift)?
    };
    let value = pre.max(lo).min(hi);
    Ok(StepOutcome {
        pre,
        value,
        dk_plus: (lo - pre.min(hi)).max(0.0),
        dk_minus: (pre.max(lo) - hi).max(0.0),
        drift: pre - e,
        root_residual: (pre - e - drift.evaluate(pre)).abs(),
    })
}

/// Unique root of `y = base + Σ s_i (l_i − y)⁺`.
fn penalty_root(base: f64, terms: &[Penalty]) -> f64 {
    let mut levels: Vec<Penalty> = terms.to_vec();
    levels.sort_by(|a, b| b.level.total_cmp(&a.level));
    let top = match levels.first() {
        Some(p) if p.level > base => p.level,
        _ => return base,
    };
    let mut slope = 0.0;
    let mut weighted = 0.0;
    let mut root = base;
    for (i, p) in levels.iter().enumerate() {
        slope += p.slope;
        weighted += p.slope * p.level;
        root = (base + weighted) / (1.0 + slope);
        let next_level = levels.get(i + 1).map_or(f64::NEG_INFINITY, |q| q.level);
        if root >= next_level {
            break;
        }
    }
    // The exact root lies in [base, top]; keep rounding inside it.
    root.max(base).min(top)
}

fn bracketed_root(e: f64, drift: &NodeDrift<'_>) -> Result<f64> {
    let phi = |y: f64| {
        let r = y - e - drift.evaluate(y);
        if r.is_nan() {
            f64::NAN
        } else {
            r
        }
    };
    let half = drift.general_bound()
        + drift
            .penalties
            .iter()
            .map(|p| p.slope * (p.level - e).max(0.0))
            .sum::<f64>();
    // An infinite or NaN bound carries no information; start from the data scale.
    let mut width = if half.is_finite() {
        half.max(ROOT_TOL)
    } else {
        1.0 + e.abs()
    };
    let mut lo = e - width;
    let mut hi = e + width;
    let mut doublings = 0;
    while !(phi(lo) <= 0.0 && phi(hi) >= 0.0) {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::NoBracket { e, doublings });
        }
        width *= 2.0;
        lo = e - width;
        hi = e + width;
        doublings += 1;
    }
    // Smallest grid cell with a sign change.
    let cell = (hi - lo) / GRID_CELLS as f64;
    let mut a = lo;
    let mut b = hi;
    for i in 0..GRID_CELLS {
        let right = if i + 1 == GRID_CELLS {
            hi
        } else {
            lo + cell * (i + 1) as f64
        };
        if phi(right) >= 0.0 {
            a = lo + cell * i as f64;
            b = right;
            break;
        }
    }
    while b - a > ROOT_TOL * (1.0 + a.abs().max(b.abs())) * 1e-2 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if phi(mid) >= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(b)
}

/// Data `(ξ, g, δ, L, U)`.
#[derive(Clone)]
pub struct GrbsdeProblem {
    pub model: TreeModel,
    pub terminal: Vec<f64>,
    pub generator: Arc<dyn Generator>,
    pub measure: MonotoneMeasure,
    pub lower: AdaptedProcess,
    pub upper: AdaptedProcess,
}

impl std::fmt::Debug for GrbsdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrbsdeProblem")
            .field("steps", &self.model.steps())
            .field("generator", &self.generator.label())
            .finish_non_exhaustive()
    }
}

impl GrbsdeProblem {
    pub fn new(
        model: TreeModel,
        terminal: Vec<f64>,
        generator: Arc<dyn Generator>,
        measure: MonotoneMeasure,
        lower: AdaptedProcess,
        upper: AdaptedProcess,
    ) -> Result<Self> {
        check_terminal(&model, &terminal)?;
        model.check_measure(&measure)?;
        check_integrator(&measure)?;
        model.check_shape(&lower)?;
        model.check_shape(&upper)?;
        check_barrier_order(&model, &lower, &upper)?;
        Ok(Self {
            model,
            terminal,
            generator,
            measure,
            lower,
            upper,
        })
    }
}

pub(crate) fn check_terminal(model: &TreeModel, terminal: &[f64]) -> Result<()> {
    if terminal.len() != model.steps() + 1 {
        return Err(Error::ShapeMismatch(format!(
            "terminal row has {} values, expected {}",
            terminal.len(),
            model.steps() + 1
        )));
    }
    Ok(())
}

pub(crate) fn check_integrator(measure: &MonotoneMeasure) -> Result<()> {
    if measure.increment(0, 0) != 0.0 {
        return Err(Error::Precondition(
            "an integrator measure charges steps 1..=N; its root increment must be zero".into(),
        ));
    }
    Ok(())
}

fn check_barrier_order(model: &TreeModel, lower: &AdaptedProcess, upper: &AdaptedProcess) -> Result<()> {
    for k in 0..model.steps() {
        for j in 0..=k {
            let (l, u) = (lower.get(k, j), upper.get(k, j));
            if !(l <= u) {
                return Err(Error::BarrierOrder {
                    step: k,
                    node: j,
                    lower: l,
                    upper: u,
                });
            }
        }
    }
    Ok(())
}

/// `(Y, Z, K⁺, K⁻)` plus the per-node pre-reflection values and drifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrbsdeSolution {
    pub y: AdaptedProcess,
    pub z: Predictable,
    pub k_plus: MonotoneMeasure,
    pub k_minus: MonotoneMeasure,
    /// Left-limit stand-in `y*` at each non-terminal node.
    pub pre: Predictable,
    /// Realized drift `y* − e` at each non-terminal node.
    pub drift: Predictable,
    /// Largest `|y* − e − D(y*)|` over all nodes.
    pub root_residual: f64,
}

impl GrbsdeSolution {
    /// Largest residual of `Y_k = Y_{k+1} + D + ΔK⁺ − ΔK⁻ − Z·ΔB` over both
    /// children of every non-terminal node.
    pub fn backward_identity_residual(&self, model: &TreeModel) -> f64 {
        let sq = model.dt().sqrt();
        let mut worst: f64 = 0.0;
        for k in 0..model.steps() {
            for j in 0..=k {
                let rhs_core = self.drift.get(k, j) + self.k_plus.increment(k, j) - self.k_minus.increment(k, j);
                let z = self.z.get(k, j);
                for (c, db) in [(j, -sq), (j + 1, sq)] {
                    let rhs = self.y.get(k + 1, c) + rhs_core - z * db;
                    worst = worst.max((self.y.get(k, j) - rhs).abs());
                }
            }
        }
        worst
    }
}

pub(crate) enum DriftSource<'a> {
    Generator {
        generator: &'a dyn Generator,
        measure: &'a MonotoneMeasure,
    },
    Predictable(&'a Predictable),
}

pub(crate) fn solve_backward(
    model: &TreeModel,
    terminal: &[f64],
    source: DriftSource<'_>,
    lower: &AdaptedProcess,
    upper: &AdaptedProcess,
) -> Result<GrbsdeSolution> {
    if !model.is_symmetric() {
        return Err(Error::NonSymmetric(model.up_probability()));
    }
    let n = model.steps();
    let mut y = AdaptedProcess::constant(model, 0.0);
    y.row_mut(n).copy_from_slice(terminal);
    let mut z = Predictable::zeros(model);
    let mut pre = Predictable::zeros(model);
    let mut drift_out = Predictable::zeros(model);
    let mut root_residual: f64 = 0.0;
    let mut k_plus = MonotoneMeasure::zero(model).rows().to_vec();
    let mut k_minus = k_plus.clone();

    for k in (0..n).rev() {
        let next = y.row(k + 1).to_vec();
        let cont = model.expect_row(&next);
        z.set_row(k, model.martingale_rep_coefficient(&next)?);
        let mut pre_row = Vec::with_capacity(k + 1);
        let mut drift_row = Vec::with_capacity(k + 1);
        for (j, &e) in cont.iter().enumerate() {
            let lo = lower.get(k, j);
            let hi = upper.get(k, j);
            let drift = match &source {
                DriftSource::Generator { generator, measure } => {
                    let mut d = NodeDrift {
                        lo,
                        hi,
                        ..NodeDrift::default()
                    };
                    for (c, w) in model.children(j) {
                        d.push_term(*generator, w * measure.increment(k + 1, c), k + 1, c);
                    }
                    d
                }
                DriftSource::Predictable(a) => NodeDrift::constant(a.get(k, j)),
            };
            let out = implicit_step(e, &drift, lo, hi).map_err(|err| match err {
                Error::BarrierOrder { lower, upper, .. } => Error::BarrierOrder {
                    step: k,
                    node: j,
                    lower,
                    upper,
                },
                other => other,
            })?;
            y.set(k, j, out.value);
            k_plus[k][j] = out.dk_plus;
            k_minus[k][j] = out.dk_minus;
            pre_row.push(out.pre);
            drift_row.push(out.drift);
            root_residual = root_residual.max(out.root_residual);
        }
        pre.set_row(k, pre_row);
        drift_out.set_row(k, drift_row);
    }

    Ok(GrbsdeSolution {
        y,
        z,
        k_plus: MonotoneMeasure::from_increments(k_plus, Default::default())?,
        k_minus: MonotoneMeasure::from_increments(k_minus, Default::default())?,
        pre,
        drift: drift_out,
        root_residual,
    })
}

/// Backward induction for the two-barrier problem.
pub fn solve_two_barrier(p: &GrbsdeProblem) -> Result<GrbsdeSolution> {
    solve_backward(
        &p.model,
        &p.terminal,
        DriftSource::Generator {
            generator: p.generator.as_ref(),
            measure: &p.measure,
        },
        &p.lower,
        &p.upper,
    )
}

/// Report on assumption (H).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HReport {
    /// Largest sampled `|g| − β` (nonpositive when the bound holds).
    pub bound_excess: f64,
    /// Largest sampled jump signature; zero for continuous generators.
    pub continuity_residual: f64,
    pub upper: SupermartingaleReport,
    pub bound_ok: bool,
    pub continuity_ok: bool,
}

impl HReport {
    pub fn passes(&self) -> bool {
        self.bound_ok && self.continuity_ok && self.upper.holds
    }
}

const H_SAMPLES: usize = 17;

/// Samples (H)(a) and (H)(b) on the clamp range of every charged node and
/// checks (H)(c), the supermartingale property of U.
pub fn validate_h(p: &GrbsdeProblem) -> HReport {
    let model = &p.model;
    let gen = p.generator.as_ref();
    let mut bound_excess = f64::NEG_INFINITY;
    let mut continuity_residual: f64 = 0.0;
    for k in 0..model.steps() {
        for j in 0..=k {
            let lo = p.lower.get(k, j);
            let hi = p.upper.get(k, j);
            for (c, w) in model.children(j) {
                if w == 0.0 || p.measure.increment(k + 1, c) == 0.0 {
                    continue;
                }
                let beta = gen.bound(k + 1, c);
                for i in 0..H_SAMPLES {
                    let y = if hi > lo {
                        lo + (hi - lo) * i as f64 / (H_SAMPLES - 1) as f64
                    } else {
                        lo
                    };
                    let g = gen.evaluate(k + 1, c, y);
                    bound_excess = bound_excess.max(g.abs() - beta);
                    let s = 1.0 + y.abs();
                    let probe = |h: f64| {
                        let up = (gen.evaluate(k + 1, c, y + h) - g).abs();
                        let down = (gen.evaluate(k + 1, c, y - h) - g).abs();
                        up.max(down)
                    };
                    let (d1, d2) = (probe(1e-6 * s), probe(1e-9 * s));
                    continuity_residual = continuity_residual.max(d2 - 1e-2 * d1 - 1e-12 * (1.0 + beta));
                }
            }
        }
    }
    if bound_excess == f64::NEG_INFINITY {
        bound_excess = 0.0;
    }
    let upper = model.is_supermartingale(&p.upper, 1e-12);
    HReport {
        bound_excess,
        continuity_residual,
        upper,
        bound_ok: bound_excess <= 1e-12,
        continuity_ok: continuity_residual <= 0.0,
    }
}

/// Probability-weighted Skorokhod residuals and the singularity verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkorokhodResiduals {
    /// `E Σ (Y − L)·ΔK⁺`.
    pub lower: f64,
    /// `E Σ (U − Y)·ΔK⁻`.
    pub upper: f64,
    pub singular: bool,
}

impl SkorokhodResiduals {
    pub fn passes(&self, tol: f64) -> bool {
        self.lower <= tol && self.upper <= tol && self.singular
    }
}

pub fn check_skorokhod(
    sol: &GrbsdeSolution,
    lower: &AdaptedProcess,
    upper: &AdaptedProcess,
    model: &TreeModel,
) -> SkorokhodResiduals {
    let probs = model.node_probabilities();
    let mut lo_res = 0.0;
    let mut hi_res = 0.0;
    for (k, row) in probs.iter().enumerate().take(model.steps()) {
        for (j, &p) in row.iter().enumerate() {
            let y = sol.y.get(k, j);
            lo_res += p * (y - lower.get(k, j)) * sol.k_plus.increment(k, j);
            hi_res += p * (upper.get(k, j) - y) * sol.k_minus.increment(k, j);
        }
    }
    SkorokhodResiduals {
        lower: lo_res,
        upper: hi_res,
        singular: lattice::singular(&sol.k_plus, &sol.k_minus).unwrap_or(false),
    }
}

/// Second problem of the comparison theorem: drift `dA′` in place of
/// `g dδ`, barriers `L′ ≤ U′`, terminal `ξ′`, and its solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonInstance {
    pub terminal: Vec<f64>,
    /// Predictable increments of `A′` (charged to the node leaving each step).
    pub drift: Predictable,
    pub lower: AdaptedProcess,
    pub upper: AdaptedProcess,
    pub solution: GrbsdeSolution,
}

impl ComparisonInstance {
    pub fn solve(
        model: &TreeModel,
        terminal: Vec<f64>,
        drift: Predictable,
        lower: AdaptedProcess,
        upper: AdaptedProcess,
    ) -> Result<Self> {
        check_terminal(model, &terminal)?;
        model.check_shape(&lower)?;
        model.check_shape(&upper)?;
        check_barrier_order(model, &lower, &upper)?;
        for k in 0..model.steps() {
            for j in 0..=k {
                let v = drift.get(k, j);
                if !(v >= 0.0) {
                    return Err(Error::NegativeIncrement {
                        step: k,
                        node: j,
                        value: v,
                    });
                }
            }
        }
        let solution = solve_backward(model, &terminal, DriftSource::Predictable(&drift), &lower, &upper)?;
        Ok(Self {
            terminal,
            drift,
            lower,
            upper,
            solution,
        })
    }
}

/// Hypotheses of the comparison theorem, as checked on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// (a) ξ ≤ ξ′.
    TerminalOrder,
    /// (b) Y′ ≤ U for k < N.
    UpperDominatesPrime,
    /// (b) L′ ≤ Y for k < N.
    LowerPrimeBelowY,
    /// (c) g(Y′₋)·dδ ≤ dA′ nodewise.
    DriftDomination,
    /// L ≤ Y′ for k < N: the second solution respects the first lower barrier.
    LowerBelowPrime,
    /// Y ≤ U′ for k < N: the first solution respects the second upper barrier.
    UpperPrimeAboveY,
}

impl Hypothesis {
    pub fn describe(&self) -> &'static str {
        match self {
            Self::TerminalOrder => "(a) xi <= xi'",
            Self::UpperDominatesPrime => "(b) Y' <= U",
            Self::LowerPrimeBelowY => "(b) L' <= Y",
            Self::DriftDomination => "(c) g(Y'-) d delta <= dA'",
            Self::LowerBelowPrime => "(lattice) L <= Y'",
            Self::UpperPrimeAboveY => "(lattice) Y <= U'",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conclusion {
    /// Y ≤ Y′.
    ValueOrder,
    /// 1{U′ = U} dK⁻ ≤ dK′⁻.
    UpperReflectionOrder,
    /// 1{L′ = L} dK′⁺ ≤ dK⁺.
    LowerReflectionOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub conclusion: Conclusion,
    pub step: usize,
    pub node: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComparisonReport {
    Rejected {
        hypothesis: Hypothesis,
        step: usize,
        node: usize,
    },
    Checked {
        violations: Vec<Counterexample>,
        /// Largest `Y − Y′` over all nodes.
        max_value_gap: f64,
    },
}

impl ComparisonReport {
    pub fn holds(&self) -> bool {
        matches!(self, Self::Checked { violations, .. } if violations.is_empty())
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, Self::Rejected { .. })
    }
}

const HYPOTHESIS_TOL: f64 = 1e-12;

/// Checks the comparison hypotheses, then both conclusions nodewise.
pub fn compare_minimal(a: &GrbsdeProblem, a_sol: &GrbsdeSolution, b: &ComparisonInstance) -> ComparisonReport {
    let model = &a.model;
    let n = model.steps();
    let yb = &b.solution.y;
    let reject = |hypothesis, step, node| ComparisonReport::Rejected { hypothesis, step, node };

    for (j, (&x, &xp)) in a.terminal.iter().zip(&b.terminal).enumerate() {
        if x > xp + HYPOTHESIS_TOL {
            return reject(Hypothesis::TerminalOrder, n, j);
        }
    }
    for k in 0..n {
        for j in 0..=k {
            if yb.get(k, j) > a.upper.get(k, j) + HYPOTHESIS_TOL {
                return reject(Hypothesis::UpperDominatesPrime, k, j);
            }
            if b.lower.get(k, j) > a_sol.y.get(k, j) + HYPOTHESIS_TOL {
                return reject(Hypothesis::LowerPrimeBelowY, k, j);
            }
            if a.lower.get(k, j) > yb.get(k, j) + HYPOTHESIS_TOL {
                return reject(Hypothesis::LowerBelowPrime, k, j);
            }
            if a_sol.y.get(k, j) > b.upper.get(k, j) + HYPOTHESIS_TOL {
                return reject(Hypothesis::UpperPrimeAboveY, k, j);
            }
            // (c) child by child, at the left limit of the second solution.
            let y_left = b.solution.pre.get(k, j);
            let mut g_total = 0.0;
            for (c, w) in model.children(j) {
                let m = w * a.measure.increment(k + 1, c);
                if m > 0.0 {
                    let gen = a.generator.as_ref();
                    let yc = match gen.penalty_form(k + 1, c) {
                        Some(_) => y_left,
                        None => y_left.max(a.lower.get(k, j)).min(a.upper.get(k, j)),
                    };
                    g_total += m * gen.evaluate(k + 1, c, yc);
                }
            }
            if g_total > b.drift.get(k, j) + HYPOTHESIS_TOL * (1.0 + g_total.abs()) {
                return reject(Hypothesis::DriftDomination, k, j);
            }
        }
    }

    let mut violations = Vec::new();
    let mut max_value_gap = f64::NEG_INFINITY;
    for k in 0..=n {
        for j in 0..=k {
            let (y, yp) = (a_sol.y.get(k, j), yb.get(k, j));
            max_value_gap = max_value_gap.max(y - yp);
            if y > yp + CERT_TOL {
                violations.push(Counterexample {
                    conclusion: Conclusion::ValueOrder,
                    step: k,
                    node: j,
                    lhs: y,
                    rhs: yp,
                });
            }
            if k == n {
                continue;
            }
            if b.upper.get(k, j) == a.upper.get(k, j) {
                let (lhs, rhs) = (a_sol.k_minus.increment(k, j), b.solution.k_minus.increment(k, j));
                if lhs > rhs + CERT_TOL {
                    violations.push(Counterexample {
                        conclusion: Conclusion::UpperReflectionOrder,
                        step: k,
                        node: j,
                        lhs,
                        rhs,
                    });
                }
            }
            if b.lower.get(k, j) == a.lower.get(k, j) {
                let (lhs, rhs) = (b.solution.k_plus.increment(k, j), a_sol.k_plus.increment(k, j));
                if lhs > rhs + CERT_TOL {
                    violations.push(Counterexample {
                        conclusion: Conclusion::LowerReflectionOrder,
                        step: k,
                        node: j,
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }
    ComparisonReport::Checked {
        violations,
        max_value_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snell::snell_envelope;

    struct Pen {
        n: f64,
        level: f64,
        label: String,
    }

    impl Generator for Pen {
        fn evaluate(&self, _: usize, _: usize, y: f64) -> f64 {
            self.n * (self.level - y).max(0.0)
        }
        fn bound(&self, _: usize, _: usize) -> f64 {
            f64::INFINITY
        }
        fn label(&self) -> &str {
            &self.label
        }
    }

    #[test]
    fn implicit_step_zero_generator_is_a_clamp() {
        let out = implicit_step(0.7, &NodeDrift::zero(), 0.0, 0.5).unwrap();
        assert_eq!((out.value, out.dk_plus), (0.5, 0.0));
        assert!((out.dk_minus - 0.2).abs() < 1e-15);
        let out = implicit_step(-1.0, &NodeDrift::zero(), 0.0, 0.5).unwrap();
        assert_eq!((out.value, out.dk_plus, out.dk_minus), (0.0, 1.0, 0.0));
        let out = implicit_step(0.25, &NodeDrift::zero(), 0.0, 0.5).unwrap();
        assert_eq!((out.value, out.dk_plus, out.dk_minus), (0.25, 0.0, 0.0));
    }

    #[test]
    fn implicit_step_penalty_closed_form() {
        // y = (1 − y)⁺  ⇒  y = 1/2.
        let d = NodeDrift::penalty(1.0, 1.0, 1.0);
        let out = implicit_step(0.0, &d, -1e9, 1e9).unwrap();
        assert!((out.pre - 0.5).abs() < 1e-15);
        assert_eq!(out.value, out.pre);
        assert!((out.pre - (1.0 - out.pre).max(0.0)).abs() < 1e-15);

        let out = implicit_step(0.0, &d, -1e9, 0.3).unwrap();
        assert_eq!(out.value, 0.3);
        assert!((out.dk_minus - 0.2).abs() < 1e-15);
        assert_eq!(out.dk_plus, 0.0);
    }

    #[test]
    fn implicit_step_bisection_matches_closed_form() {
        let g = Pen {
            n: 3.0,
            level: 2.0,
            label: "pen".into(),
        };
        for &e in &[-1.0, 0.0, 1.5, 2.5] {
            let general = NodeDrift::single(&g, 1, 0, 0.5, -10.0, 10.0);
            let closed = NodeDrift::penalty(3.0, 2.0, 0.5);
            let a = implicit_step(e, &general, -10.0, 10.0).unwrap();
            let b = implicit_step(e, &closed, -10.0, 10.0).unwrap();
            assert!((a.pre - b.pre).abs() < 1e-11, "e={e}: {} vs {}", a.pre, b.pre);
        }
    }

    #[test]
    fn degenerate_corridor_gives_lower_priority() {
        let out = implicit_step(-1.0, &NodeDrift::zero(), 0.0, 0.0).unwrap();
        assert_eq!((out.dk_plus, out.dk_minus), (1.0, 0.0));
        let out = implicit_step(2.0, &NodeDrift::zero(), 0.0, 0.0).unwrap();
        assert_eq!((out.dk_plus, out.dk_minus), (0.0, 2.0));
        assert!(implicit_step(0.0, &NodeDrift::zero(), 1.0, 0.0).is_err());
    }

    #[test]
    fn implicit_step_reports_missing_bracket() {
        // A generator whose bound is violated and which diverges: no root.
        let bound = AdaptedProcess::constant(&TreeModel::new(1, 1.0).unwrap(), 0.0);
        let g = FnGenerator::new("runaway", bound, |_, _, y: f64| y + 1.0);
        let d = NodeDrift::single(&g, 1, 0, 1.0, f64::NEG_INFINITY, f64::INFINITY);
        assert!(matches!(
            implicit_step(0.0, &d, -1.0, 1.0),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn implicit_step_is_monotone_in_e() {
        let g = FnGenerator::new(
            "tanh",
            AdaptedProcess::constant(&TreeModel::new(1, 1.0).unwrap(), 2.0),
            |_, _, y: f64| 2.0 * (0.3 - y).tanh(),
        );
        let mut last = f64::NEG_INFINITY;
        for i in 0..1000 {
            let e = -3.0 + 6.0 * i as f64 / 999.0;
            let d = NodeDrift::single(&g, 1, 0, 0.7, -1.0, 1.0);
            let out = implicit_step(e, &d, -1.0, 1.0).unwrap();
            assert!(out.value >= last - 1e-12);
            last = out.value;
        }
    }

    fn model(n: usize) -> TreeModel {
        TreeModel::new(n, n as f64).unwrap()
    }

    fn problem(m: TreeModel, xi: Vec<f64>, l: AdaptedProcess, u: AdaptedProcess) -> GrbsdeProblem {
        GrbsdeProblem::new(m, xi, Arc::new(ZeroGenerator), MonotoneMeasure::zero(&m), l, u).unwrap()
    }

    #[test]
    fn equal_barriers_force_the_solution() {
        let m = model(3);
        let bar = AdaptedProcess::from_fn(&m, |k, j| (k as f64 - j as f64).sin());
        let xi: Vec<f64> = (0..=3).map(|j| j as f64).collect();
        let p = problem(m, xi, bar.clone(), bar.clone());
        let s = solve_two_barrier(&p).unwrap();
        for k in 0..3 {
            for j in 0..=k {
                assert_eq!(s.y.get(k, j), bar.get(k, j));
            }
        }
        assert!(lattice::singular(&s.k_plus, &s.k_minus).unwrap());
        let r = check_skorokhod(&s, &p.lower, &p.upper, &m);
        assert!(r.passes(CERT_TOL));
        assert!(s.backward_identity_residual(&m) < 1e-12);
    }

    #[test]
    fn inactive_barriers_give_the_martingale() {
        let m = model(4);
        let xi: Vec<f64> = (0..=4).map(|j| (j as f64).powi(2)).collect();
        let p = problem(
            m,
            xi.clone(),
            AdaptedProcess::constant(&m, -1e9),
            AdaptedProcess::constant(&m, 1e9),
        );
        let s = solve_two_barrier(&p).unwrap();
        let mut direct = AdaptedProcess::constant(&m, 0.0).with_terminal(&xi);
        for k in (0..4).rev() {
            let c = m.conditional_expectation(&direct, k).unwrap();
            direct.row_mut(k).copy_from_slice(&c);
        }
        assert!(s.y.max_abs_diff(&direct) < 1e-12);
        assert!(s.k_plus.is_zero() && s.k_minus.is_zero());
    }

    #[test]
    fn single_barrier_reproduces_snell_envelope() {
        let m = model(2);
        let l = AdaptedProcess::from_rows(vec![vec![0.0], vec![1.0, 0.0], vec![0.0, 2.0, 0.0]]).unwrap();
        let p = problem(m, l.terminal().to_vec(), l.clone(), AdaptedProcess::constant(&m, 1e9));
        let s = solve_two_barrier(&p).unwrap();
        assert!(s.y.max_abs_diff(&snell_envelope(&l, &m).unwrap()) < 1e-12);
    }

    #[test]
    fn solver_rejects_crossed_barriers() {
        let m = model(2);
        let r = GrbsdeProblem::new(
            m,
            vec![0.0; 3],
            Arc::new(ZeroGenerator),
            MonotoneMeasure::zero(&m),
            AdaptedProcess::constant(&m, 1.0),
            AdaptedProcess::constant(&m, 0.0),
        );
        assert!(matches!(r, Err(Error::BarrierOrder { step: 0, node: 0, .. })));
    }

    #[test]
    fn validate_h_examples() {
        let m = model(4);
        let p = problem(
            m,
            vec![0.0; 5],
            AdaptedProcess::constant(&m, -1.0),
            AdaptedProcess::constant(&m, 1.0),
        );
        assert!(validate_h(&p).passes());

        let sq = AdaptedProcess::brownian(&m).map(|_, _, b| b * b);
        let p = problem(m, vec![0.0; 5], AdaptedProcess::constant(&m, -100.0), sq);
        let r = validate_h(&p);
        assert!(!r.upper.holds);
        assert!((r.upper.worst_excess - m.dt()).abs() < 1e-12);

        // Penalty with |l| ≤ c: β = n·(c + max |clamp|) bounds it.
        let (n, c) = (4.0, 1.5);
        let level = AdaptedProcess::from_fn(&m, |k, j| c * ((k + j) as f64).cos());
        let lo = AdaptedProcess::constant(&m, -2.0);
        let hi = AdaptedProcess::constant(&m, 3.0);
        let clamp_max = 3.0f64;
        let beta = AdaptedProcess::constant(&m, n * (c + clamp_max));
        let lv = level.clone();
        let g = FnGenerator::new("penalty", beta, move |k, j, y: f64| n * (lv.get(k, j) - y).max(0.0));
        let p = GrbsdeProblem::new(m, vec![0.0; 5], Arc::new(g), MonotoneMeasure::lebesgue(&m), lo, hi).unwrap();
        let r = validate_h(&p);
        assert!(r.bound_ok && r.continuity_ok, "{r:?}");
    }

    #[test]
    fn validate_h_flags_a_jump() {
        let m = model(2);
        let g = FnGenerator::new("step", AdaptedProcess::constant(&m, 1.0), |_, _, y: f64| {
            if y >= 0.0 {
                1.0
            } else {
                0.0
            }
        });
        let p = GrbsdeProblem::new(
            m,
            vec![0.0; 3],
            Arc::new(g),
            MonotoneMeasure::lebesgue(&m),
            AdaptedProcess::constant(&m, -1.0),
            AdaptedProcess::constant(&m, 1.0),
        )
        .unwrap();
        assert!(!validate_h(&p).continuity_ok);
    }

    #[test]
    fn comparison_with_itself_holds_with_equality() {
        let m = model(3);
        let l = AdaptedProcess::from_fn(&m, |k, j| 0.3 * (j as f64) - 0.2 * k as f64);
        let u = AdaptedProcess::constant(&m, 0.8);
        let xi: Vec<f64> = (0..=3).map(|j| 0.1 * j as f64).collect();
        let gen = FnGenerator::new("tanh", AdaptedProcess::constant(&m, 1.0), |_, _, y: f64| {
            (0.5 - y).tanh()
        });
        let p = GrbsdeProblem::new(
            m,
            xi.clone(),
            Arc::new(gen),
            MonotoneMeasure::lebesgue(&m),
            l.clone(),
            u.clone(),
        )
        .unwrap();
        let s = solve_two_barrier(&p).unwrap();
        let b = ComparisonInstance::solve(&m, xi, s.drift.clone(), l, u).unwrap();
        assert!(b.solution.y.max_abs_diff(&s.y) < 1e-12);
        let r = compare_minimal(&p, &s, &b);
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn shifted_terminal_orders_the_solutions() {
        let m = model(4);
        let l = AdaptedProcess::from_fn(&m, |k, j| m.brownian(k, j).cos() - 1.0);
        let u = AdaptedProcess::constant(&m, 3.0);
        let xi: Vec<f64> = (0..=4).map(|j| (j as f64 * 0.5).sin()).collect();
        let p = problem(m, xi.clone(), l.clone(), u.clone());
        let s = solve_two_barrier(&p).unwrap();
        let shifted: Vec<f64> = xi.iter().map(|x| x + 1.0).collect();
        let b = ComparisonInstance::solve(&m, shifted.clone(), Predictable::zeros(&m), l.clone(), u.clone()).unwrap();
        let r = compare_minimal(&p, &s, &b);
        assert!(r.holds(), "{r:?}");
        for k in 0..=4 {
            for j in 0..=k {
                if s.k_plus.increment(k, j) == 0.0 && b.solution.k_minus.increment(k, j) == 0.0 && k < 4 {
                    assert!(s.y.get(k, j) < b.solution.y.get(k, j));
                }
            }
        }

        // Violating (a) is a rejection, not a failed conclusion.
        let lowered: Vec<f64> = xi.iter().map(|x| x - 1.0).collect();
        let b = ComparisonInstance::solve(&m, lowered, Predictable::zeros(&m), l, u).unwrap();
        assert!(matches!(
            compare_minimal(&p, &s, &b),
            ComparisonReport::Rejected {
                hypothesis: Hypothesis::TerminalOrder,
                ..
            }
        ));
    }
}
