//! Command execution and output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gsnell::envelope::generalized_snell_with;
use gsnell::grbsde::{
    compare_minimal, solve_two_barrier, ComparisonInstance, ComparisonReport, GrbsdeProblem, CERT_TOL,
};
use gsnell::penalize::{default_dominating_martingale, iterate_to_limit, penalty_generator, LowerData, TraceRow};
use gsnell::suite::{
    atom_split_check, coincidence_check, corollary_checks, run_random_suite, Suite, SuiteEntry, SuiteReport,
};
use gsnell::Predictable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Overrides, ScenarioConfig};
use crate::error::CliError;

/// How a command ended, in order of increasing exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Success,
    CertificateFailure,
    NonConvergence,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::CertificateFailure => 2,
            Status::NonConvergence => 3,
        }
    }
}

/// Result of one command: the status, the files written, and a short
/// human-readable summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub n: u64,
    pub root: f64,
    pub sup_gap: f64,
    pub k_plus_mass: f64,
}

impl From<&TraceRow> for TracePoint {
    fn from(r: &TraceRow) -> Self {
        Self {
            n: r.n,
            root: r.root,
            sup_gap: r.sup_gap,
            k_plus_mass: r.k_plus_mass,
        }
    }
}

/// Summary document of `solve`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub root: f64,
    /// `Y` row by row.
    pub values: Vec<Vec<f64>>,
    /// Expected `ΔK⁺` per step `k → k+1`.
    pub k_plus_profile: Vec<f64>,
    pub trace: Vec<TracePoint>,
    pub certificates: BTreeMap<String, bool>,
    pub final_n: u64,
    pub converged: bool,
    pub limit_gap: f64,
    pub penalty_floor: f64,
    pub status: Status,
    pub wall_time_seconds: f64,
}

/// `solve`: envelope, certificates, `nodes.csv` and `summary.json`.
pub fn run_solve(cfg: &ScenarioConfig, o: &Overrides, out: &Path) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let d = cfg.lower_data()?;
    let opts = cfg.options(o);
    let r = generalized_snell_with(&d, &opts)?;
    let sol = &r.solution;
    let m = d.model;
    let n = m.steps();

    let mut csv = String::from("step,node,B,L,l,ddelta,Y,Z,dK_plus\n");
    for k in 0..=n {
        for j in 0..=k {
            let z = if k < n {
                sol.z.get(k, j).to_string()
            } else {
                String::new()
            };
            let _ = writeln!(
                csv,
                "{k},{j},{},{},{},{},{},{z},{}",
                m.brownian(k, j),
                d.lower_rcll.get(k, j),
                d.lower_measurable.get(k, j),
                d.measure.increment(k, j),
                sol.y.get(k, j),
                sol.k_plus.increment(k, j),
            );
        }
    }

    let probs = m.node_probabilities();
    let k_plus_profile = (0..n)
        .map(|k| {
            probs[k]
                .iter()
                .enumerate()
                .map(|(j, p)| p * sol.k_plus.increment(k, j))
                .sum()
        })
        .collect();
    let certificates: BTreeMap<String, bool> = r
        .certificates
        .verdicts()
        .iter()
        .map(|&(name, ok)| (name.to_string(), ok))
        .collect();
    let diag = &sol.diagnostics;
    let status = if !diag.converged {
        Status::NonConvergence
    } else if !r.certificates.all_pass() {
        Status::CertificateFailure
    } else {
        Status::Success
    };
    let report = RunReport {
        root: sol.y.root(),
        values: sol.y.rows().to_vec(),
        k_plus_profile,
        trace: diag.trace.iter().map(TracePoint::from).collect(),
        certificates,
        final_n: diag.final_n,
        converged: diag.converged,
        limit_gap: diag.limit.gap,
        penalty_floor: diag.limit.penalty_floor,
        status,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };

    let mut text = format!(
        "root {}\nfinal n {} (converged: {})\n",
        report.root, report.final_n, report.converged
    );
    for (name, ok) in &report.certificates {
        let _ = writeln!(text, "{name:<18} {}", if *ok { "pass" } else { "FAIL" });
    }
    let files = vec![
        write_atomic(out, "nodes.csv", csv.as_bytes())?,
        write_atomic(out, "summary.json", &json(&report)?)?,
    ];
    Ok(Outcome { status, files, text })
}

/// `trace`: penalized iterates along the schedule, written to `trace.csv`.
pub fn run_penalization_trace(cfg: &ScenarioConfig, o: &Overrides, out: &Path) -> Result<Outcome, CliError> {
    let d = cfg.lower_data()?;
    let opts = cfg.options(o);
    let sol = iterate_to_limit(&d, &opts.schedule, opts.tol)?;
    let diag = &sol.diagnostics;

    let mut csv = String::from("n,root,sup_gap,pre_gap,k_plus_mass,pre_terminal_min,pre_terminal_max\n");
    let mut text = format!("{:>10} {:>24} {:>12} {:>12}\n", "n", "root", "sup_gap", "k_plus_mass");
    for row in &diag.trace {
        let lo = row.pre_terminal.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.pre_terminal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{lo},{hi}",
            row.n, row.root, row.sup_gap, row.pre_gap, row.k_plus_mass
        );
        let _ = writeln!(
            text,
            "{:>10} {:>24} {:>12.3e} {:>12.6}",
            row.n, row.root, row.sup_gap, row.k_plus_mass
        );
    }
    let _ = writeln!(text, "converged: {} at n = {}", diag.converged, diag.final_n);
    let status = if diag.converged {
        Status::Success
    } else {
        Status::NonConvergence
    };
    let files = vec![write_atomic(out, "trace.csv", csv.as_bytes())?];
    Ok(Outcome { status, files, text })
}

/// `properties`: the named suite on the scenario itself and on
/// `run.random_instances` seeded random instances.
pub fn run_properties(cfg: &ScenarioConfig, suite: Suite, o: &Overrides, out: &Path) -> Result<Outcome, CliError> {
    let d = cfg.lower_data()?;
    let opts = cfg.options(o);
    let mut entries = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let label = "config";
    for member in suite.members() {
        match member {
            Suite::Corollary => corollary_checks(&mut rng, &d, &opts, label, &mut entries)?,
            Suite::Comparison => config_comparison(cfg, &d, &mut entries)?,
            Suite::Coincidence => coincidence_check(&d.obstacle_with_terminal(), &d.model, &opts, label, &mut entries)?,
            Suite::AtomSplit => atom_split_check(&d, &opts, label, &mut entries)?,
            Suite::All => unreachable!("expanded by members()"),
        }
    }
    if cfg.run.random_instances > 0 {
        let depth = cfg.run.max_depth.unwrap_or(d.steps());
        let random = run_random_suite(suite, opts.seed, cfg.run.random_instances, depth, &opts)?;
        merge(&mut entries, random.entries);
    }
    let report = SuiteReport {
        suite: suite.name().into(),
        seed: opts.seed,
        entries,
    };

    let mut csv = String::from("check,instances,failures,rejected,worst,tol,status,counterexample\n");
    let mut text = format!(
        "{:<24} {:>9} {:>8} {:>8} {:>12} {:>8}  status\n",
        "check", "instances", "failures", "rejected", "worst", "tol"
    );
    for e in &report.entries {
        let status = entry_status(e);
        let cx = e.counterexample.as_deref().unwrap_or("");
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{status},\"{}\"",
            e.check,
            e.instances,
            e.failures,
            e.rejected,
            e.worst,
            e.tol,
            cx.replace('"', "\"\"")
        );
        let _ = writeln!(
            text,
            "{:<24} {:>9} {:>8} {:>8} {:>12.3e} {:>8.0e}  {status}",
            e.check, e.instances, e.failures, e.rejected, e.worst, e.tol
        );
        if !e.passes() || e.rejected > 0 {
            let _ = writeln!(text, "    {cx}");
        }
    }
    let status = if report.passes() {
        Status::Success
    } else {
        Status::CertificateFailure
    };
    let files = vec![
        write_atomic(out, "properties.csv", csv.as_bytes())?,
        write_atomic(out, "properties.json", &json(&report)?)?,
    ];
    Ok(Outcome { status, files, text })
}

fn entry_status(e: &SuiteEntry) -> &'static str {
    if !e.passes() {
        "FAIL"
    } else if e.rejected > 0 && e.rejected == e.instances {
        "REJECTED"
    } else {
        "pass"
    }
}

/// The scenario as the first problem, with generator `n·(l − y)⁺` at
/// `n = 1` and the default dominating martingale as the upper barrier,
/// against a second problem with shifted terminal value and drift.
///
/// A pair that violates a hypothesis is reported as rejected; that is the
/// expected outcome for a hand-built violation, not a failure.
fn config_comparison(cfg: &ScenarioConfig, d: &LowerData, out: &mut Vec<SuiteEntry>) -> Result<(), CliError> {
    let m = d.model;
    let upper = default_dominating_martingale(d);
    let generator = penalty_generator(1, d);
    let a = GrbsdeProblem::new(
        m,
        d.terminal.clone(),
        Arc::new(generator),
        d.measure.clone(),
        d.lower_rcll.clone(),
        upper.clone(),
    )?;
    let a_solution = solve_two_barrier(&a)?;

    let shift = cfg.comparison;
    let terminal: Vec<f64> = d.terminal.iter().map(|x| x + shift.terminal_shift).collect();
    // Bound of the penalty drift on [min(ξ, L), ∞).
    let floor = d.terminal.iter().copied().fold(d.lower_rcll.min_value(), f64::min);
    let drift = Predictable::from_fn(&m, |k, j| {
        let bound: f64 = m
            .children(j)
            .iter()
            .map(|&(c, w)| {
                let p = a.generator.penalty_form(k + 1, c).expect("penalty generator");
                w * d.measure.increment(k + 1, c) * p.slope * (p.level - floor).max(0.0)
            })
            .sum();
        bound + shift.drift_shift
    });
    if let Some((k, j)) = (0..m.steps())
        .flat_map(|k| (0..=k).map(move |j| (k, j)))
        .find(|&(k, j)| drift.get(k, j) < 0.0)
    {
        return Err(CliError::field(
            "comparison.drift_shift",
            format!("makes dA' negative at node ({k}, {j})"),
        ));
    }
    let b = ComparisonInstance::solve(&m, terminal, drift, d.lower_rcll.clone(), upper)?;

    let mut e = SuiteEntry::new("comparison", CERT_TOL);
    match compare_minimal(&a, &a_solution, &b) {
        ComparisonReport::Rejected { hypothesis, step, node } => {
            e.instances = 1;
            e.rejected = 1;
            e.counterexample = Some(format!(
                "config: REJECTED, hypothesis {} fails at ({step}, {node})",
                hypothesis.describe()
            ));
        }
        ComparisonReport::Checked {
            violations,
            max_value_gap,
        } => {
            let first = violations.first().copied();
            e.record(violations.is_empty(), max_value_gap.max(0.0), || {
                format!("config: {first:?}")
            });
        }
    }
    out.push(e);
    Ok(())
}

fn merge(into: &mut Vec<SuiteEntry>, from: Vec<SuiteEntry>) {
    for e in from {
        match into.iter_mut().find(|x| x.check == e.check) {
            Some(x) => {
                x.instances += e.instances;
                x.failures += e.failures;
                x.rejected += e.rejected;
                x.worst = x.worst.max(e.worst);
                if x.counterexample.is_none() {
                    x.counterexample = e.counterexample;
                }
            }
            None => into.push(e),
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `dir/name` through a temporary file in `dir` and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let err = |source| CliError::Write {
        path: path.clone(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.flush().map_err(err)?;
    tmp.persist(&path).map_err(|e| err(e.error))?;
    Ok(path)
}
