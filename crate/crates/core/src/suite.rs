//! Seeded random instances and the property suites that run over them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envelope::{
    check_atom_split, check_bar_substitution, check_classical_coincidence, check_classical_sandwich, check_domination,
    check_monotone, check_sandwich, EnvelopeOptions, PropertyReport, ENUMERATION_TOL, ENVELOPE_TOL,
};
use crate::error::{Error, Result};
use crate::grbsde::{
    compare_minimal, solve_two_barrier, ComparisonInstance, ComparisonReport, FnGenerator, Generator, GrbsdeProblem,
    GrbsdeSolution, ZeroGenerator, CERT_TOL,
};
use crate::lattice::{AdaptedProcess, MonotoneMeasure, Predictable, TreeModel};
use crate::penalize::{iterate_to_limit, LowerData, PenaltyGenerator, RbsdeSolution};

/// Tree of depth `1..=max_depth` with unit time steps.
pub fn random_model<R: Rng>(rng: &mut R, max_depth: usize) -> TreeModel {
    let steps = rng.gen_range(1..=max_depth.max(1));
    TreeModel::new(steps, steps as f64).expect("positive depth")
}

pub fn random_process<R: Rng>(rng: &mut R, model: &TreeModel, lo: f64, hi: f64) -> AdaptedProcess {
    AdaptedProcess::from_fn(model, |_, _| rng.gen_range(lo..=hi))
}

/// Zero, Lebesgue, or node-varying increments on random steps plus atoms.
pub fn random_measure<R: Rng>(rng: &mut R, model: &TreeModel) -> MonotoneMeasure {
    match rng.gen_range(0..3) {
        0 => MonotoneMeasure::zero(model),
        1 => MonotoneMeasure::lebesgue(model),
        _ => random_custom_measure(rng, model, false),
    }
}

/// Node-varying increments in `[0.5, 2]` on random steps; with
/// `force_atom`, at least one step carries an atom.
pub fn random_custom_measure<R: Rng>(rng: &mut R, model: &TreeModel, force_atom: bool) -> MonotoneMeasure {
    let n = model.steps();
    let rows = (0..=n)
        .map(|k| {
            let charged = k > 0 && rng.gen_bool(0.5);
            (0..=k)
                .map(|_| if charged { rng.gen_range(0.5..=2.0) } else { 0.0 })
                .collect()
        })
        .collect();
    let mut m = MonotoneMeasure::from_increments(rows, Default::default()).expect("nonnegative increments");
    let atoms = if force_atom {
        rng.gen_range(1..=2)
    } else {
        rng.gen_range(0..=2)
    };
    for _ in 0..atoms {
        let step = rng.gen_range(1..=n);
        m.add_atom(step, rng.gen_range(0.5..=2.0)).expect("step in range");
    }
    m
}

/// Data `(ξ, L, l, δ)` with values in `[−1, 1]`.
pub fn random_lower_data<R: Rng>(rng: &mut R, max_depth: usize) -> LowerData {
    let model = random_model(rng, max_depth);
    random_lower_data_on(rng, model)
}

pub fn random_lower_data_on<R: Rng>(rng: &mut R, model: TreeModel) -> LowerData {
    let measure = random_measure(rng, &model);
    data_with_measure(rng, model, measure)
}

fn data_with_measure<R: Rng>(rng: &mut R, model: TreeModel, measure: MonotoneMeasure) -> LowerData {
    let terminal = (0..=model.steps()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let big = random_process(rng, &model, -1.0, 1.0);
    let small = random_process(rng, &model, -1.0, 1.0);
    LowerData::new(model, terminal, big, small, measure).expect("consistent shapes")
}

/// Data whose measure always carries at least one atom.
pub fn random_atomic_data<R: Rng>(rng: &mut R, max_depth: usize) -> LowerData {
    let model = random_model(rng, max_depth);
    let measure = random_custom_measure(rng, &model, true);
    data_with_measure(rng, model, measure)
}

/// `a·tanh(b·(c − y))`, bounded by `|a|`.
pub fn tanh_generator(model: &TreeModel, a: f64, b: f64, c: f64) -> impl Generator {
    FnGenerator::new(
        format!("{a}*tanh({b}*({c}-y))"),
        AdaptedProcess::constant(model, a.abs()),
        move |_, _, y: f64| a * (b * (c - y)).tanh(),
    )
}

fn random_generator<R: Rng>(rng: &mut R, model: &TreeModel, lower: &AdaptedProcess) -> Arc<dyn Generator> {
    match rng.gen_range(0..3) {
        0 => Arc::new(ZeroGenerator),
        1 => Arc::new(tanh_generator(
            model,
            rng.gen_range(-2.0..=2.0),
            rng.gen_range(0.1..=3.0),
            rng.gen_range(-1.0..=1.0),
        )),
        _ => {
            let level = random_process(rng, model, -1.0, 1.0);
            Arc::new(PenaltyGenerator::new(rng.gen_range(0..=64), level, lower.clone()))
        }
    }
}

/// Two-barrier problem with a random generator; U is L plus a nonnegative gap.
pub fn random_grbsde_problem<R: Rng>(rng: &mut R, max_depth: usize) -> GrbsdeProblem {
    let model = random_model(rng, max_depth);
    let lower = random_process(rng, &model, -1.0, 1.0);
    let upper = lower.map(|_, _, x| {
        x + if rng.gen_bool(0.2) {
            0.0
        } else {
            rng.gen_range(0.0..=1.5)
        }
    });
    let generator = random_generator(rng, &model, &lower);
    let measure = random_measure(rng, &model);
    let terminal = (0..=model.steps()).map(|_| rng.gen_range(-1.5..=1.5)).collect();
    GrbsdeProblem::new(model, terminal, generator, measure, lower, upper).expect("ordered barriers")
}

/// A problem, its solution, and a second problem built to satisfy every
/// comparison hypothesis.
#[derive(Debug, Clone)]
pub struct ComparisonCase {
    pub a: GrbsdeProblem,
    pub a_solution: GrbsdeSolution,
    pub b: ComparisonInstance,
}

impl ComparisonCase {
    pub fn report(&self) -> ComparisonReport {
        compare_minimal(&self.a, &self.a_solution, &self.b)
    }
}

/// `L′ ∈ [L, Y]`, `U′ ∈ [Y, U]` (each equal to the original at random nodes),
/// `ξ′ ≥ ξ`, and `dA′` at least the bound of `g·dδ` at every node.
pub fn random_comparison_case<R: Rng>(rng: &mut R, max_depth: usize) -> Result<ComparisonCase> {
    let a = random_grbsde_problem(rng, max_depth);
    let sol = solve_two_barrier(&a)?;
    let m = a.model;
    let n = m.steps();
    let lower = AdaptedProcess::from_fn(&m, |k, j| {
        let l = a.lower.get(k, j);
        if k == n || rng.gen_bool(0.5) {
            l
        } else {
            l + rng.gen::<f64>() * (sol.y.get(k, j) - l)
        }
    });
    let upper = AdaptedProcess::from_fn(&m, |k, j| {
        let u = a.upper.get(k, j);
        if k == n || rng.gen_bool(0.5) {
            u
        } else {
            let y = sol.y.get(k, j);
            y + rng.gen::<f64>() * (u - y)
        }
    });
    let terminal = a
        .terminal
        .iter()
        .map(|x| {
            x + if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..=0.5)
            }
        })
        .collect();
    // Penalty terms are evaluated unclamped at Y′₋, which never drops below
    // the smallest value of ξ and L.
    let floor = a.terminal.iter().copied().fold(a.lower.min_value(), f64::min);
    let dominating = |k: usize, c: usize| match a.generator.penalty_form(k, c) {
        Some(p) => p.slope * (p.level - floor).max(0.0),
        None => a.generator.bound(k, c),
    };
    let drift = Predictable::from_fn(&m, |k, j| {
        let bound: f64 = m
            .children(j)
            .iter()
            .map(|&(c, w)| w * a.measure.increment(k + 1, c) * dominating(k + 1, c))
            .sum();
        bound
            + if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..=0.3)
            }
    });
    let b = ComparisonInstance::solve(&m, terminal, drift, lower, upper)?;
    Ok(ComparisonCase { a, a_solution: sol, b })
}

/// `d′ ≤ d`: lower L, ξ and l, and `δ′` a nodewise fraction of `δ`.
pub fn random_monotone_partner<R: Rng>(rng: &mut R, d: &LowerData) -> LowerData {
    let m = d.model;
    let fractions: Vec<Vec<f64>> = d
        .measure
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .map(|&x| match rng.gen_range(0..4) {
                    0 => 0.0,
                    1 => x,
                    _ => x * rng.gen::<f64>(),
                })
                .collect()
        })
        .collect();
    let measure = MonotoneMeasure::from_increments(fractions, d.measure.atom_steps().clone()).expect("nonnegative");
    let mut down = |x: f64| {
        if rng.gen_bool(0.3) {
            x
        } else {
            x - rng.gen_range(0.0..=0.5)
        }
    };
    LowerData {
        model: m,
        terminal: d.terminal.iter().map(|&x| down(x)).collect(),
        lower_rcll: d.lower_rcll.map(|_, _, x| down(x)),
        lower_measurable: d.lower_measurable.map(|_, _, x| down(x)),
        measure,
    }
}

/// Data with `l ≤ L₋` along δ, the equality case of domination.
pub fn low_constraint_variant(d: &LowerData) -> LowerData {
    let m = d.model;
    let l = d.lower_measurable.map(|k, j, x| {
        if k == 0 || d.measure.increment(k, j) == 0.0 {
            x
        } else {
            m.parents(k, j)
                .map(|(pj, _)| d.lower_rcll.get(k - 1, pj))
                .fold(x, f64::min)
        }
    });
    LowerData {
        lower_measurable: l,
        ..d.clone()
    }
}

/// `L′ ∈ [L, Y]` and `l′ ∈ [l, Y₋]` along δ, from a solved envelope of `d`.
pub fn random_sandwich_partner<R: Rng>(rng: &mut R, d: &LowerData, sol: &RbsdeSolution) -> LowerData {
    let m = d.model;
    let n = m.steps();
    let lower_rcll = AdaptedProcess::from_fn(&m, |k, j| {
        let l = d.lower_rcll.get(k, j);
        if k == n || rng.gen_bool(0.3) {
            l
        } else {
            l + rng.gen::<f64>() * (sol.y.get(k, j) - l)
        }
    });
    let lower_measurable = AdaptedProcess::from_fn(&m, |k, j| {
        let l = d.lower_measurable.get(k, j);
        if k == 0 || d.measure.increment(k, j) == 0.0 {
            return l;
        }
        let left = m
            .parents(k, j)
            .map(|(pj, _)| sol.pre.get(k - 1, pj))
            .fold(f64::INFINITY, f64::min);
        if left > l {
            l + rng.gen::<f64>() * (left - l)
        } else {
            l
        }
    });
    LowerData {
        lower_rcll,
        lower_measurable,
        ..d.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Corollary,
    Comparison,
    Coincidence,
    AtomSplit,
    All,
}

impl Suite {
    pub fn members(&self) -> &'static [Suite] {
        match self {
            Suite::All => &[
                Suite::Corollary,
                Suite::Comparison,
                Suite::Coincidence,
                Suite::AtomSplit,
            ],
            Suite::Corollary => &[Suite::Corollary],
            Suite::Comparison => &[Suite::Comparison],
            Suite::Coincidence => &[Suite::Coincidence],
            Suite::AtomSplit => &[Suite::AtomSplit],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Corollary => "corollary",
            Suite::Comparison => "comparison",
            Suite::Coincidence => "coincidence",
            Suite::AtomSplit => "atom-split",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corollary" => Ok(Suite::Corollary),
            "comparison" => Ok(Suite::Comparison),
            "coincidence" => Ok(Suite::Coincidence),
            "atom-split" => Ok(Suite::AtomSplit),
            "all" => Ok(Suite::All),
            other => Err(Error::Precondition(format!("unknown suite '{other}'"))),
        }
    }
}

/// Aggregate of one check over many instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub check: String,
    pub instances: usize,
    pub failures: usize,
    /// Instances whose preconditions failed; counted apart from failures.
    pub rejected: usize,
    pub worst: f64,
    pub tol: f64,
    pub counterexample: Option<String>,
}

impl SuiteEntry {
    pub fn new(check: impl Into<String>, tol: f64) -> Self {
        Self {
            check: check.into(),
            instances: 0,
            failures: 0,
            rejected: 0,
            worst: 0.0,
            tol,
            counterexample: None,
        }
    }

    pub fn passes(&self) -> bool {
        self.failures == 0
    }

    pub fn record(&mut self, ok: bool, value: f64, detail: impl FnOnce() -> String) {
        self.instances += 1;
        if value > self.worst {
            self.worst = value;
        }
        if !ok {
            self.failures += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(detail());
            }
        }
    }

    pub fn record_property(&mut self, r: &PropertyReport, label: &str) {
        if let Some(why) = &r.rejected {
            self.instances += 1;
            self.rejected += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(format!("{label}: rejected: {why}"));
            }
            return;
        }
        self.record(r.passes(), r.discrepancy, || {
            format!("{label}: {} at {:?}", r.discrepancy, r.counterexample)
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn passes(&self) -> bool {
        self.entries.iter().all(SuiteEntry::passes)
    }

    pub fn entry(&self, check: &str) -> Option<&SuiteEntry> {
        self.entries.iter().find(|e| e.check == check)
    }
}

fn entry<'a>(entries: &'a mut Vec<SuiteEntry>, check: &str, tol: f64) -> &'a mut SuiteEntry {
    if let Some(i) = entries.iter().position(|e| e.check == check) {
        return &mut entries[i];
    }
    entries.push(SuiteEntry::new(check, tol));
    entries.last_mut().expect("just pushed")
}

/// Corollary checks on one instance, with random partners from `rng`.
pub fn corollary_checks<R: Rng>(
    rng: &mut R,
    d: &LowerData,
    opts: &EnvelopeOptions,
    label: &str,
    out: &mut Vec<SuiteEntry>,
) -> Result<()> {
    entry(out, "bar_substitution", ENVELOPE_TOL).record_property(&check_bar_substitution(d, opts)?, label);

    let dp = random_monotone_partner(rng, d);
    entry(out, "monotone", ENVELOPE_TOL).record_property(&check_monotone(d, &dp, opts)?, label);

    entry(out, "domination", ENVELOPE_TOL).record_property(&check_domination(d, opts)?, label);
    let eq = check_domination(&low_constraint_variant(d), opts)?;
    let e = entry(out, "domination_equality", ENVELOPE_TOL);
    if eq.property == "domination_equality" {
        e.record_property(&eq, label);
    } else {
        e.record(false, f64::INFINITY, || {
            format!("{label}: equality case not recognized")
        });
    }

    let sol = iterate_to_limit(d, &opts.schedule, 0.0)?;
    let dp = random_sandwich_partner(rng, d, &sol);
    entry(out, "sandwich", ENVELOPE_TOL).record_property(&check_sandwich(d, &dp, opts)?, label);
    let local = EnvelopeOptions {
        seed: rng.gen(),
        ..*opts
    };
    entry(out, "sandwich_classical", ENVELOPE_TOL).record_property(&check_classical_sandwich(d, &local, 5)?, label);
    Ok(())
}

pub fn comparison_check(case: &ComparisonCase, label: &str, out: &mut Vec<SuiteEntry>) {
    let e = entry(out, "comparison", CERT_TOL);
    match case.report() {
        ComparisonReport::Rejected { hypothesis, step, node } => {
            e.instances += 1;
            e.rejected += 1;
            e.failures += 1;
            if e.counterexample.is_none() {
                e.counterexample = Some(format!(
                    "{label}: generated pair violates {} at ({step}, {node})",
                    hypothesis.describe()
                ));
            }
        }
        ComparisonReport::Checked {
            violations,
            max_value_gap,
        } => {
            let first = violations.first().copied();
            e.record(violations.is_empty(), max_value_gap.max(0.0), || {
                format!("{label}: {first:?}")
            });
        }
    }
}

pub fn coincidence_check(
    l: &AdaptedProcess,
    model: &TreeModel,
    opts: &EnvelopeOptions,
    label: &str,
    out: &mut Vec<SuiteEntry>,
) -> Result<()> {
    let r = check_classical_coincidence(l, model, opts)?;
    entry(out, "coincidence_nodewise", ENVELOPE_TOL).record_property(&r.nodewise, label);
    if let Some(gap) = r.root_gap {
        entry(out, "coincidence_enumeration", ENUMERATION_TOL)
            .record(gap <= ENUMERATION_TOL, gap, || format!("{label}: root gap {gap:e}"));
    }
    Ok(())
}

pub fn atom_split_check(d: &LowerData, opts: &EnvelopeOptions, label: &str, out: &mut Vec<SuiteEntry>) -> Result<()> {
    let (r, c) = check_atom_split(d, opts, CERT_TOL)?;
    entry(out, "atom_split", CERT_TOL).record(r.passes(), c.excess.max(0.0), || format!("{label}: {c:?}"));
    Ok(())
}

/// Runs `suite` over `instances` random instances of depth `≤ max_depth`.
pub fn run_random_suite(
    suite: Suite,
    seed: u64,
    instances: usize,
    max_depth: usize,
    opts: &EnvelopeOptions,
) -> Result<SuiteReport> {
    let mut entries = Vec::new();
    for member in suite.members() {
        // Each member has its own stream so suites reproduce independently.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (*member as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for i in 0..instances {
            let label = format!("{member}#{i}");
            match member {
                Suite::Corollary => {
                    let d = random_lower_data(&mut rng, max_depth);
                    corollary_checks(&mut rng, &d, opts, &label, &mut entries)?;
                }
                Suite::Comparison => {
                    let case = random_comparison_case(&mut rng, max_depth)?;
                    comparison_check(&case, &label, &mut entries);
                }
                Suite::Coincidence => {
                    let model = random_model(&mut rng, max_depth);
                    let l = random_process(&mut rng, &model, -1.0, 1.0);
                    coincidence_check(&l, &model, opts, &label, &mut entries)?;
                }
                Suite::AtomSplit => {
                    let d = random_atomic_data(&mut rng, max_depth);
                    atom_split_check(&d, opts, &label, &mut entries)?;
                }
                Suite::All => unreachable!("expanded by members()"),
            }
        }
    }
    Ok(SuiteReport {
        suite: suite.name().into(),
        seed,
        entries,
    })
}
