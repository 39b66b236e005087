//! The generalized Snell envelope `𝒮(L, l, δ, ξ)` and its property checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grbsde::{SkorokhodResiduals, CERT_TOL};
use crate::lattice::{self, decompose_atoms, AdaptedProcess, MonotoneMeasure, SupermartingaleReport, TreeModel};
use crate::penalize::{
    self, check_minimality, check_smallest_in_class, iterate_to_limit, LowerData, MinimalityReport, RbsdeSolution,
    Schedule, SmallestInClassReport,
};
use crate::snell::{brute_force_value, snell_envelope, DEFAULT_MAX_ENUMERATION_DEPTH};

/// Tolerance of envelope equalities and inequalities.
pub const ENVELOPE_TOL: f64 = 1e-8;
/// Tolerance of the root comparison against exhaustive enumeration.
pub const ENUMERATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub schedule: Schedule,
    pub tol: f64,
    pub seed: u64,
    pub minimality_trials: usize,
    pub class_trials: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            schedule: Schedule::default(),
            tol: penalize::DEFAULT_TOL,
            seed: 0,
            minimality_trials: 100,
            class_trials: 500,
        }
    }
}

impl EnvelopeOptions {
    /// Same schedule, run to its last penalty with no early stop.
    pub fn full_schedule(&self) -> Self {
        Self { tol: 0.0, ..*self }
    }
}

/// Supermartingale property plus domination of L and the terminal condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleCertificate {
    pub report: SupermartingaleReport,
    /// Largest `L − Y` for `k < N`.
    pub lower_excess: f64,
    /// Largest `|Y_N − ξ|`.
    pub terminal_error: f64,
    /// Constraint check along δ.
    pub constraint: ConstraintReport,
}

impl SupermartingaleCertificate {
    pub fn passes(&self) -> bool {
        self.report.holds && self.lower_excess <= 0.0 && self.terminal_error == 0.0 && self.constraint.passes()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub skorokhod: SkorokhodResiduals,
    pub minimality: MinimalityReport,
    pub smallest_in_class: SmallestInClassReport,
    pub supermartingale: SupermartingaleCertificate,
}

impl Certificates {
    pub fn verdicts(&self) -> [(&'static str, bool); 4] {
        [
            ("skorokhod", self.skorokhod.passes(CERT_TOL)),
            ("minimality", self.minimality.passes(ENVELOPE_TOL)),
            ("smallest_in_class", self.smallest_in_class.passes()),
            ("supermartingale", self.supermartingale.passes()),
        ]
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts().iter().all(|&(_, ok)| ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub envelope: AdaptedProcess,
    pub solution: RbsdeSolution,
    pub certificates: Certificates,
}

/// Unmet part of `l ≤ Y₋` along δ, checked against the shortfall that a
/// finite penalty `n` leaves by construction.
///
/// At a node with continuation value `e` and pre-reflection value `y*`, the
/// step equation gives `mass·n·(l − y*)⁺ ≤ y* − e`, so a correct solve
/// satisfies `(l − y*)⁺ ≤ (y* − e)/(mass·n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub final_n: u64,
    /// Largest raw `(l − y*)⁺` at the continuous part of δ, against `Y`.
    pub continuous_shortfall: f64,
    /// Largest raw `(l − y*)⁺` at atoms of δ, against the left limit.
    pub atom_shortfall: f64,
    /// Largest shortfall in excess of its penalty allowance.
    pub excess: f64,
    pub tol: f64,
}

impl ConstraintReport {
    pub fn passes(&self) -> bool {
        self.excess <= self.tol
    }
}

/// Checks `l ≤ Y` on the continuous part of δ and `l ≤ Y₋` at its atoms.
pub fn constraint_report(sol: &RbsdeSolution, d: &LowerData, tol: f64) -> ConstraintReport {
    let m = &d.model;
    let split = decompose_atoms(&d.measure);
    let n_pen = sol.diagnostics.final_n as f64;
    let mut report = ConstraintReport {
        final_n: sol.diagnostics.final_n,
        continuous_shortfall: 0.0,
        atom_shortfall: 0.0,
        excess: 0.0,
        tol,
    };
    for k in 0..m.steps() {
        let cont = m.expect_row(sol.y.row(k + 1));
        for (j, &e) in cont.iter().enumerate() {
            let pre = sol.pre.get(k, j);
            for (c, mass) in d.charged_children(k, j) {
                let l = d.lower_measurable.get(k + 1, c);
                let allowance = if n_pen > 0.0 {
                    (pre - e).max(0.0) / (mass * n_pen)
                } else {
                    0.0
                };
                let shortfall = if split.atoms.contains(&(k + 1)) {
                    let s = (l - pre).max(0.0);
                    report.atom_shortfall = report.atom_shortfall.max(s);
                    s
                } else {
                    let s = (l - sol.y.get(k, j)).max(0.0);
                    report.continuous_shortfall = report.continuous_shortfall.max(s);
                    s
                };
                report.excess = report.excess.max(shortfall - allowance);
            }
        }
    }
    report
}

fn supermartingale_certificate(sol: &RbsdeSolution, d: &LowerData) -> SupermartingaleCertificate {
    let m = &d.model;
    let n = m.steps();
    let mut lower_excess = f64::NEG_INFINITY;
    for k in 0..n {
        for j in 0..=k {
            lower_excess = lower_excess.max(d.lower_rcll.get(k, j) - sol.y.get(k, j));
        }
    }
    let terminal_error = sol
        .y
        .terminal()
        .iter()
        .zip(&d.terminal)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    SupermartingaleCertificate {
        report: m.is_supermartingale(&sol.y, CERT_TOL),
        lower_excess: if n == 0 { 0.0 } else { lower_excess },
        terminal_error,
        constraint: constraint_report(sol, d, CERT_TOL),
    }
}

pub fn generalized_snell(d: &LowerData) -> Result<EnvelopeResult> {
    generalized_snell_with(d, &EnvelopeOptions::default())
}

/// Penalization limit of `d` with all four certificates attached.
pub fn generalized_snell_with(d: &LowerData, opts: &EnvelopeOptions) -> Result<EnvelopeResult> {
    let solution = iterate_to_limit(d, &opts.schedule, opts.tol)?;
    let certificates = Certificates {
        skorokhod: penalize::penalized_skorokhod(&solution, d),
        minimality: check_minimality(&solution, d, opts.minimality_trials, opts.seed),
        smallest_in_class: check_smallest_in_class(&solution, d, opts.class_trials, opts.seed)?,
        supermartingale: supermartingale_certificate(&solution, d),
    };
    Ok(EnvelopeResult {
        envelope: solution.y.clone(),
        solution,
        certificates,
    })
}

/// Envelope only, solved to the last penalty of the schedule.
fn envelope_at(d: &LowerData, opts: &EnvelopeOptions) -> Result<RbsdeSolution> {
    iterate_to_limit(d, &opts.schedule, 0.0)
}

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    /// Failed precondition, when the check could not be run.
    pub rejected: Option<String>,
    /// Largest violation of the asserted relation (≤ `tol` passes).
    pub discrepancy: f64,
    pub tol: f64,
    pub counterexample: Option<(usize, usize)>,
}

impl PropertyReport {
    fn new(property: &str, tol: f64) -> Self {
        Self {
            property: property.into(),
            rejected: None,
            discrepancy: 0.0,
            tol,
            counterexample: None,
        }
    }

    fn rejected(property: &str, tol: f64, why: impl Into<String>) -> Self {
        Self {
            rejected: Some(why.into()),
            ..Self::new(property, tol)
        }
    }

    fn observe(&mut self, k: usize, j: usize, violation: f64) {
        if violation > self.discrepancy {
            self.discrepancy = violation;
            if violation > self.tol {
                self.counterexample = Some((k, j));
            }
        }
    }

    /// `|a − b|` nodewise.
    fn equal(&mut self, a: &AdaptedProcess, b: &AdaptedProcess) {
        for (k, j, x) in a.iter_nodes() {
            self.observe(k, j, (x - b.get(k, j)).abs());
        }
    }

    /// `a ≤ b` nodewise.
    fn below(&mut self, a: &AdaptedProcess, b: &AdaptedProcess) {
        for (k, j, x) in a.iter_nodes() {
            self.observe(k, j, x - b.get(k, j));
        }
    }

    pub fn passes(&self) -> bool {
        self.rejected.is_none() && self.discrepancy <= self.tol
    }
}

/// `l̄ = l ∨ L₋` at δ-charged nodes, where `L₋` at a step-`k` node is the
/// smallest parent value of L.
pub fn bar_substituted(d: &LowerData) -> LowerData {
    let left = d.lower_left_min();
    let l = d.lower_measurable.map(|k, j, x| {
        if d.measure.increment(k, j) > 0.0 {
            x.max(left.get(k, j))
        } else {
            x
        }
    });
    LowerData {
        lower_measurable: l,
        ..d.clone()
    }
}

/// `𝒮(L, l, δ, ξ) = 𝒮(L, l ∨ L₋, δ, ξ)`.
pub fn check_bar_substitution(d: &LowerData, opts: &EnvelopeOptions) -> Result<PropertyReport> {
    let a = envelope_at(d, opts)?;
    let b = envelope_at(&bar_substituted(d), opts)?;
    let mut r = PropertyReport::new("bar_substitution", ENVELOPE_TOL);
    r.equal(&a.y, &b.y);
    Ok(r)
}

/// First failed precondition of the monotonicity property, if any.
pub fn monotone_precondition(d: &LowerData, dp: &LowerData) -> Result<Option<String>> {
    let n = d.steps();
    if dp.model != d.model {
        return Ok(Some("trees differ".into()));
    }
    if !lattice::absolutely_continuous(&dp.measure, &d.measure)? {
        return Ok(Some("delta' is not absolutely continuous w.r.t. delta".into()));
    }
    for (j, (&x, &xp)) in d.terminal.iter().zip(&dp.terminal).enumerate() {
        if xp > x {
            return Ok(Some(format!("xi' > xi at ({n}, {j})")));
        }
    }
    for k in 0..=n {
        for j in 0..=k {
            if k < n && dp.lower_rcll.get(k, j) > d.lower_rcll.get(k, j) {
                return Ok(Some(format!("L' > L at ({k}, {j})")));
            }
            if dp.measure.increment(k, j) > 0.0 && dp.lower_measurable.get(k, j) > d.lower_measurable.get(k, j) {
                return Ok(Some(format!("l' > l at delta'-charged node ({k}, {j})")));
            }
        }
    }
    Ok(None)
}

/// `𝒮(d′) ≤ 𝒮(d)` for ordered data.
pub fn check_monotone(d: &LowerData, dp: &LowerData, opts: &EnvelopeOptions) -> Result<PropertyReport> {
    const NAME: &str = "monotone";
    if let Some(why) = monotone_precondition(d, dp)? {
        return Ok(PropertyReport::rejected(NAME, ENVELOPE_TOL, why));
    }
    let a = envelope_at(d, opts)?;
    let b = envelope_at(dp, opts)?;
    let mut r = PropertyReport::new(NAME, ENVELOPE_TOL);
    r.below(&b.y, &a.y);
    Ok(r)
}

/// Whether `l ≤ L₋` at every charged node, with `L₋` taken at each parent.
pub fn lower_below_left_barrier(d: &LowerData) -> bool {
    (0..d.steps()).all(|k| {
        (0..=k).all(|j| {
            d.charged_children(k, j)
                .all(|(c, _)| d.lower_measurable.get(k + 1, c) <= d.lower_rcll.get(k, j))
        })
    })
}

/// `𝒮(L, l, δ, ξ) ≥ 𝒮(L^ξ)`, with equality when `l ≤ L₋` along δ.
pub fn check_domination(d: &LowerData, opts: &EnvelopeOptions) -> Result<PropertyReport> {
    let y = envelope_at(d, opts)?;
    let classical = snell_envelope(&d.obstacle_with_terminal(), &d.model)?;
    let equality = lower_below_left_barrier(d);
    let mut r = PropertyReport::new(
        if equality { "domination_equality" } else { "domination" },
        ENVELOPE_TOL,
    );
    if equality {
        r.equal(&y.y, &classical);
    } else {
        r.below(&classical, &y.y);
    }
    Ok(r)
}

/// First failed precondition of the sandwich property relative to the
/// solved envelope of `d`, if any.
///
/// `l′` must lie between `l` and the left limit of `Y` along δ. A finite
/// penalty leaves `l` slightly above that left limit where the constraint
/// binds; there only `l′ = l` is admissible.
pub fn sandwich_precondition(d: &LowerData, dp: &LowerData, sol: &RbsdeSolution) -> Result<Option<String>> {
    let n = d.steps();
    let m = &d.model;
    if dp.model != d.model || dp.terminal != d.terminal {
        return Ok(Some("tree or terminal value differ".into()));
    }
    if !lattice::equivalent(&d.measure, &dp.measure)? {
        return Ok(Some("delta and delta' are not equivalent".into()));
    }
    for k in 0..n {
        for j in 0..=k {
            let lp = dp.lower_rcll.get(k, j);
            if lp < d.lower_rcll.get(k, j) || lp > sol.y.get(k, j) {
                return Ok(Some(format!("L' outside [L, Y] at ({k}, {j})")));
            }
        }
    }
    for k in 1..=n {
        for j in 0..=k {
            if d.measure.increment(k, j) == 0.0 {
                continue;
            }
            let (l, lp) = (d.lower_measurable.get(k, j), dp.lower_measurable.get(k, j));
            let left = m
                .parents(k, j)
                .map(|(pj, _)| sol.pre.get(k - 1, pj))
                .fold(f64::INFINITY, f64::min);
            if lp < l || lp > l.max(left) {
                return Ok(Some(format!("l' outside [l, Y-] at ({k}, {j})")));
            }
        }
    }
    Ok(None)
}

/// `𝒮(d) = 𝒮(d′)` for data squeezed between `d` and its own envelope.
pub fn check_sandwich(d: &LowerData, dp: &LowerData, opts: &EnvelopeOptions) -> Result<PropertyReport> {
    const NAME: &str = "sandwich";
    let a = envelope_at(d, opts)?;
    if let Some(why) = sandwich_precondition(d, dp, &a)? {
        return Ok(PropertyReport::rejected(NAME, ENVELOPE_TOL, why));
    }
    let b = envelope_at(dp, opts)?;
    let mut r = PropertyReport::new(NAME, ENVELOPE_TOL);
    r.equal(&a.y, &b.y);
    Ok(r)
}

/// Classical obstacles `L*` with `L*_N = ξ` between the effective barrier
/// (clamped by Y) and Y: each has the classical envelope Y. `samples`
/// random members are drawn in addition to `L* = Y`.
pub fn check_classical_sandwich(d: &LowerData, opts: &EnvelopeOptions, samples: usize) -> Result<PropertyReport> {
    let sol = envelope_at(d, opts)?;
    let n = d.steps();
    let eff = d.effective_barrier();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut r = PropertyReport::new("sandwich_classical", ENVELOPE_TOL);
    r.equal(&snell_envelope(&sol.y, &d.model)?, &sol.y);
    for _ in 0..samples {
        let l_star = AdaptedProcess::from_fn(&d.model, |k, j| {
            let y = sol.y.get(k, j);
            if k == n {
                d.terminal[j]
            } else {
                let lo = eff.get(k, j).min(y);
                lo + rng.gen::<f64>() * (y - lo)
            }
        });
        r.equal(&snell_envelope(&l_star, &d.model)?, &sol.y);
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceReport {
    pub nodewise: PropertyReport,
    /// `|Y_0 − brute force|` on trees shallow enough to enumerate.
    pub root_gap: Option<f64>,
}

impl CoincidenceReport {
    pub fn passes(&self) -> bool {
        self.nodewise.passes() && self.root_gap.is_none_or(|g| g <= ENUMERATION_TOL)
    }
}

/// `𝒮(L, 0, 0, L_N)` against the classical envelope, and against
/// exhaustive enumeration at the root on shallow trees.
pub fn check_classical_coincidence(
    l: &AdaptedProcess,
    model: &TreeModel,
    opts: &EnvelopeOptions,
) -> Result<CoincidenceReport> {
    model.check_shape(l)?;
    let d = LowerData::classical(*model, l.terminal().to_vec(), l.clone())?;
    let y = envelope_at(&d, opts)?;
    let s = snell_envelope(l, model)?;
    let mut nodewise = PropertyReport::new("classical_coincidence", ENVELOPE_TOL);
    nodewise.equal(&y.y, &s);
    let root_gap = if model.steps() <= DEFAULT_MAX_ENUMERATION_DEPTH {
        Some((y.y.root() - brute_force_value(l, model, DEFAULT_MAX_ENUMERATION_DEPTH)?).abs())
    } else {
        None
    };
    Ok(CoincidenceReport { nodewise, root_gap })
}

/// Constraint check along the continuous part and the atoms of δ.
pub fn check_atom_split(d: &LowerData, opts: &EnvelopeOptions, tol: f64) -> Result<(PropertyReport, ConstraintReport)> {
    let sol = iterate_to_limit(d, &opts.schedule, opts.tol)?;
    let c = constraint_report(&sol, d, tol);
    let mut r = PropertyReport::new("atom_split", tol);
    r.discrepancy = c.excess.max(0.0);
    if !c.passes() {
        r.counterexample = Some((0, 0));
    }
    Ok((r, c))
}

/// `𝒮(L, l, dt, ξ)` for `L ≤ l`: the smallest supermartingale above `l` along
/// the Lebesgue measure, with terminal value ξ.
pub fn lebesgue_example(
    model: &TreeModel,
    l_rcll: &AdaptedProcess,
    l: &AdaptedProcess,
    xi: &[f64],
    opts: &EnvelopeOptions,
) -> Result<EnvelopeResult> {
    for (k, j, x) in l_rcll.iter_nodes() {
        if x > l.get(k, j) {
            return Err(Error::Precondition(format!("L > l at ({k}, {j})")));
        }
    }
    let d = LowerData::new(
        *model,
        xi.to_vec(),
        l_rcll.clone(),
        l.clone(),
        MonotoneMeasure::lebesgue(model),
    )?;
    generalized_snell_with(&d, opts)
}
