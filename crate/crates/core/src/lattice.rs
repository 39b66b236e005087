//! Recombining binomial lattice and the processes that live on it.
//!
//! Node `(k, j)` sits at time `t_k = k·dt` after `j` up-moves. The driving
//! walk is `B(k, j) = (2j − k)·√dt`; with up probability 1/2 it is a
//! martingale and every adapted process has an exact one-step martingale
//! representation.
//!
//! Measures follow two charging conventions, both stored in
//! [`MonotoneMeasure`]:
//!
//! * integrator measures such as δ charge the step `(t_{k−1}, t_k]` to the
//!   nodes of step `k` (rows `1..=N`, row 0 is zero);
//! * solver outputs (K⁺, K⁻, drifts) are predictable and charge the step
//!   leaving node `(k, j)` to that node (rows `0..N`, row `N` is zero).
//!
//! The left value of a process at a step-`k` node is its value at the parent
//! node the path came from.

use std::collections::BTreeSet;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_k = k·T/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
    dt: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidModel("steps must be positive".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidModel(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            steps,
            horizon,
            dt: horizon / steps as f64,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }
}

/// Binomial tree carrying the filtration of the walk `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    grid: TimeGrid,
    up_probability: f64,
}

impl TreeModel {
    /// Symmetric tree (up probability 1/2).
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        Ok(Self {
            grid: TimeGrid::new(steps, horizon)?,
            up_probability: 0.5,
        })
    }

    /// Tree with an arbitrary up probability in `[0, 1]`. The endpoints give
    /// degenerate single-branch trees, which the Snell routines accept but the
    /// martingale representation does not.
    pub fn with_up_probability(steps: usize, horizon: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidModel(format!(
                "up probability must lie in [0, 1], got {p}"
            )));
        }
        Ok(Self {
            grid: TimeGrid::new(steps, horizon)?,
            up_probability: p,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt
    }

    pub fn up_probability(&self) -> f64 {
        self.up_probability
    }

    pub fn is_symmetric(&self) -> bool {
        self.up_probability == 0.5
    }

    /// Transition weights `[(child, probability)]`, down child first.
    pub fn children(&self, j: usize) -> [(usize, f64); 2] {
        [(j, 1.0 - self.up_probability), (j + 1, self.up_probability)]
    }

    /// Parents `(parent node, probability of the move into (k, j))` of a node
    /// at step `k ≥ 1`.
    pub fn parents(&self, k: usize, j: usize) -> impl Iterator<Item = (usize, f64)> {
        let p = self.up_probability;
        let up = (j >= 1).then(|| (j - 1, p));
        let down = (j < k).then_some((j, 1.0 - p));
        up.into_iter().chain(down)
    }

    /// Value of the walk at node `(k, j)`.
    pub fn brownian(&self, k: usize, j: usize) -> f64 {
        (2.0 * j as f64 - k as f64) * self.grid.dt.sqrt()
    }

    /// Probability of reaching each node from the root.
    pub fn node_probabilities(&self) -> Vec<Vec<f64>> {
        let n = self.steps();
        let mut rows = Vec::with_capacity(n + 1);
        rows.push(vec![1.0]);
        for k in 0..n {
            let mut next = vec![0.0; k + 2];
            for (j, &pi) in rows[k].iter().enumerate() {
                for (c, w) in self.children(j) {
                    next[c] += pi * w;
                }
            }
            rows.push(next);
        }
        rows
    }

    /// One-step conditional expectation of a step-`k+1` row.
    pub fn expect_row(&self, next: &[f64]) -> Vec<f64> {
        let p = self.up_probability;
        next.windows(2).map(|w| p * w[1] + (1.0 - p) * w[0]).collect()
    }

    /// `E[x_{k+1} | F_k]` as a step-`k` row.
    pub fn conditional_expectation(&self, x: &AdaptedProcess, k: usize) -> Result<Vec<f64>> {
        if k + 1 > self.steps() {
            return Err(Error::StepOutOfRange {
                step: k + 1,
                steps: self.steps(),
            });
        }
        self.check_shape(x)?;
        Ok(self.expect_row(x.row(k + 1)))
    }

    /// Representation coefficient `Z_k = (x_up − x_down)/(2√dt)`, so that
    /// `x_{k+1} = E[x_{k+1}|F_k] + Z_k·ΔB` holds at both children.
    pub fn martingale_rep_coefficient(&self, next: &[f64]) -> Result<Vec<f64>> {
        if !self.is_symmetric() {
            return Err(Error::NonSymmetric(self.up_probability));
        }
        if next.len() < 2 || next.len() > self.steps() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "row of length {} is not a step 1..={} row",
                next.len(),
                self.steps()
            )));
        }
        let scale = 2.0 * self.grid.dt.sqrt();
        Ok(next.windows(2).map(|w| (w[1] - w[0]) / scale).collect())
    }

    /// Certifies `E[x_{k+1}|F_k] ≤ x_k + tol` at every non-terminal node.
    pub fn is_supermartingale(&self, x: &AdaptedProcess, tol: f64) -> SupermartingaleReport {
        let mut worst_excess = f64::NEG_INFINITY;
        let mut worst_node = None;
        for k in 0..self.steps() {
            let cont = self.expect_row(x.row(k + 1));
            for (j, c) in cont.into_iter().enumerate() {
                let excess = c - x.get(k, j);
                if excess > worst_excess {
                    worst_excess = excess;
                    worst_node = Some((k, j));
                }
            }
        }
        let worst_excess = worst_excess.max(0.0);
        SupermartingaleReport {
            holds: worst_excess <= tol,
            worst_excess,
            worst_node,
        }
    }

    pub(crate) fn check_shape(&self, x: &AdaptedProcess) -> Result<()> {
        if x.steps() != self.steps() {
            return Err(Error::ShapeMismatch(format!(
                "process has {} steps, model has {}",
                x.steps(),
                self.steps()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_measure(&self, m: &MonotoneMeasure) -> Result<()> {
        if m.steps() != self.steps() {
            return Err(Error::ShapeMismatch(format!(
                "measure has {} steps, model has {}",
                m.steps(),
                self.steps()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub holds: bool,
    /// Largest positive excess `E[x_{k+1}|F_k] − x_k` (0 when none).
    pub worst_excess: f64,
    pub worst_node: Option<(usize, usize)>,
}

fn triangular<F: FnMut(usize, usize) -> f64>(rows: std::ops::Range<usize>, mut f: F) -> Vec<Vec<f64>> {
    rows.map(|k| (0..=k).map(|j| f(k, j)).collect()).collect()
}

fn check_triangular(values: &[Vec<f64>], first_missing: usize) -> Result<()> {
    for (k, row) in values.iter().enumerate() {
        if row.len() != k + 1 {
            return Err(Error::ShapeMismatch(format!(
                "row {k} has {} entries, expected {}",
                row.len(),
                k + 1
            )));
        }
    }
    if values.len() < first_missing {
        return Err(Error::ShapeMismatch("empty process".into()));
    }
    Ok(())
}

/// One real value per node `(k, j)`, `k = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedProcess {
    values: Vec<Vec<f64>>,
}

impl AdaptedProcess {
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(model: &TreeModel, f: F) -> Self {
        Self {
            values: triangular(0..model.steps() + 1, f),
        }
    }

    pub fn constant(model: &TreeModel, c: f64) -> Self {
        Self::from_fn(model, |_, _| c)
    }

    /// The walk `B` itself.
    pub fn brownian(model: &TreeModel) -> Self {
        Self::from_fn(model, |k, j| model.brownian(k, j))
    }

    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self> {
        check_triangular(&values, 2)?;
        Ok(Self { values })
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k][j]
    }

    pub fn set(&mut self, k: usize, j: usize, v: f64) {
        self.values[k][j] = v;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn root(&self) -> f64 {
        self.values[0][0]
    }

    pub fn terminal(&self) -> &[f64] {
        &self.values[self.values.len() - 1]
    }

    pub fn map<F: FnMut(usize, usize, f64) -> f64>(&self, mut f: F) -> Self {
        Self {
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(k, row)| row.iter().enumerate().map(|(j, &v)| f(k, j, v)).collect())
                .collect(),
        }
    }

    pub fn zip_with<F: FnMut(f64, f64) -> f64>(&self, other: &Self, mut f: F) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        }
    }

    /// Same process with the terminal row replaced.
    pub fn with_terminal(&self, terminal: &[f64]) -> Self {
        let mut out = self.clone();
        let n = out.steps();
        out.values[n].copy_from_slice(terminal);
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter_nodes()
            .map(|(k, j, v)| (v - other.get(k, j)).abs())
            .fold(0.0, f64::max)
    }

    pub fn iter_nodes(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().map(move |(j, &v)| (k, j, v)))
    }

    pub fn max_value(&self) -> f64 {
        self.iter_nodes().map(|(_, _, v)| v).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.iter_nodes().map(|(_, _, v)| v).fold(f64::INFINITY, f64::min)
    }
}

impl Index<(usize, usize)> for AdaptedProcess {
    type Output = f64;

    fn index(&self, (k, j): (usize, usize)) -> &f64 {
        &self.values[k][j]
    }
}

/// One value per non-terminal node `(k, j)`, `k = 0..N`; fixed at time `t_k`
/// for the step `(t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictable {
    values: Vec<Vec<f64>>,
}

/// Volatility `Z` of the martingale part (Brownian dimension one).
pub type PredictableVolatility = Predictable;

impl Predictable {
    pub fn zeros(model: &TreeModel) -> Self {
        Self {
            values: triangular(0..model.steps(), |_, _| 0.0),
        }
    }

    pub fn from_fn<F: FnMut(usize, usize) -> f64>(model: &TreeModel, f: F) -> Self {
        Self {
            values: triangular(0..model.steps(), f),
        }
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k][j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub(crate) fn set_row(&mut self, k: usize, row: Vec<f64>) {
        self.values[k] = row;
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }
}

/// Nondecreasing process given by its nonnegative per-node increments.
///
/// `increments[k][j]` is the mass charged at node `(k, j)` (see the module
/// docs for which rows each kind of measure uses). `atom_steps` flags the
/// steps whose mass is a point mass rather than the lattice image of a
/// continuous density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneMeasure {
    increments: Vec<Vec<f64>>,
    atom_steps: BTreeSet<usize>,
}

impl MonotoneMeasure {
    pub fn zero(model: &TreeModel) -> Self {
        Self {
            increments: triangular(0..model.steps() + 1, |_, _| 0.0),
            atom_steps: BTreeSet::new(),
        }
    }

    /// Lattice image of Lebesgue measure: mass `dt` on every step `1..=N`.
    pub fn lebesgue(model: &TreeModel) -> Self {
        let dt = model.dt();
        Self {
            increments: triangular(0..model.steps() + 1, |k, _| if k == 0 { 0.0 } else { dt }),
            atom_steps: BTreeSet::new(),
        }
    }

    /// Deterministic per-step masses `masses[k − 1]` for steps `1..=N`.
    pub fn from_step_masses(model: &TreeModel, masses: &[f64]) -> Result<Self> {
        if masses.len() != model.steps() {
            return Err(Error::ShapeMismatch(format!(
                "{} step masses for {} steps",
                masses.len(),
                model.steps()
            )));
        }
        let increments = triangular(0..model.steps() + 1, |k, _| if k == 0 { 0.0 } else { masses[k - 1] });
        Self::from_increments(increments, BTreeSet::new())
    }

    pub fn from_increments(increments: Vec<Vec<f64>>, atom_steps: BTreeSet<usize>) -> Result<Self> {
        check_triangular(&increments, 2)?;
        for (k, row) in increments.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::NegativeIncrement {
                        step: k,
                        node: j,
                        value: v,
                    });
                }
            }
        }
        let steps = increments.len() - 1;
        if let Some(&s) = atom_steps.iter().find(|&&s| s == 0 || s > steps) {
            return Err(Error::StepOutOfRange { step: s, steps });
        }
        Ok(Self { increments, atom_steps })
    }

    /// Adds a point mass at every node of `step` and flags the step as an atom.
    pub fn add_atom(&mut self, step: usize, mass: f64) -> Result<()> {
        let steps = self.steps();
        if step == 0 || step > steps {
            return Err(Error::StepOutOfRange { step, steps });
        }
        if !(mass >= 0.0) || !mass.is_finite() {
            return Err(Error::NegativeIncrement {
                step,
                node: 0,
                value: mass,
            });
        }
        for v in &mut self.increments[step] {
            *v += mass;
        }
        self.atom_steps.insert(step);
        Ok(())
    }

    pub fn with_atom(mut self, step: usize, mass: f64) -> Result<Self> {
        self.add_atom(step, mass)?;
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.increments.len() - 1
    }

    pub fn increment(&self, k: usize, j: usize) -> f64 {
        self.increments[k][j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.increments[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.increments
    }

    pub fn atom_steps(&self) -> &BTreeSet<usize> {
        &self.atom_steps
    }

    pub fn is_atom(&self, step: usize) -> bool {
        self.atom_steps.contains(&step)
    }

    pub fn is_zero(&self) -> bool {
        self.increments.iter().flatten().all(|&v| v == 0.0)
    }

    /// `Σ P(node)·increment`, the expected total mass.
    pub fn expected_mass(&self, model: &TreeModel) -> f64 {
        model
            .node_probabilities()
            .iter()
            .zip(&self.increments)
            .map(|(pi, inc)| pi.iter().zip(inc).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// Nodewise sum; atom flags are merged.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let increments = self
            .increments
            .iter()
            .zip(&other.increments)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(Self {
            increments,
            atom_steps: self.atom_steps.union(&other.atom_steps).copied().collect(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let increments = self
            .increments
            .iter()
            .map(|row| row.iter().map(|v| v * factor).collect())
            .collect();
        Self::from_increments(increments, self.atom_steps.clone())
    }

    /// Cumulative process along one path given as a sequence of up/down moves;
    /// `cumulative[k]` is the total mass of nodes visited at steps `0..=k`.
    pub fn cumulative_along(&self, ups: &[bool]) -> Vec<f64> {
        let mut j = 0;
        let mut acc = self.increments[0][0];
        let mut out = vec![acc];
        for (k, &up) in ups.iter().enumerate().take(self.steps()) {
            if up {
                j += 1;
            }
            acc += self.increments[k + 1][j];
            out.push(acc);
        }
        out
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.steps() != other.steps() {
            return Err(Error::ShapeMismatch(format!(
                "measures over {} and {} steps",
                self.steps(),
                other.steps()
            )));
        }
        Ok(())
    }

    fn support_pairs<'a>(&'a self, other: &'a Self) -> impl Iterator<Item = (f64, f64)> + 'a {
        self.increments
            .iter()
            .flatten()
            .zip(other.increments.iter().flatten())
            .map(|(&a, &b)| (a, b))
    }
}

/// `dA ⊥ dB`: at every node at most one of the two increments is nonzero.
pub fn singular(a: &MonotoneMeasure, b: &MonotoneMeasure) -> Result<bool> {
    a.same_shape(b)?;
    Ok(a.support_pairs(b).all(|(x, y)| x == 0.0 || y == 0.0))
}

/// `dA ≪ dB`: the support of `a` is contained in the support of `b`.
pub fn absolutely_continuous(a: &MonotoneMeasure, b: &MonotoneMeasure) -> Result<bool> {
    a.same_shape(b)?;
    Ok(a.support_pairs(b).all(|(x, y)| x == 0.0 || y > 0.0))
}

/// `dA ∼ dB`: identical supports.
pub fn equivalent(a: &MonotoneMeasure, b: &MonotoneMeasure) -> Result<bool> {
    Ok(absolutely_continuous(a, b)? && absolutely_continuous(b, a)?)
}

/// Continuous and atomic parts of a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSplit {
    pub continuous: MonotoneMeasure,
    pub atomic: MonotoneMeasure,
    pub atoms: Vec<usize>,
}

impl AtomSplit {
    pub fn recombine(&self) -> MonotoneMeasure {
        // Parts have disjoint row supports, so the nodewise sum is exact.
        self.continuous
            .sum(&self.atomic)
            .expect("parts of one measure share a shape")
    }
}

/// Splits off the flagged atom steps: the continuous part is zero on them and
/// the atomic part is zero everywhere else.
pub fn decompose_atoms(d: &MonotoneMeasure) -> AtomSplit {
    let mut continuous = d.increments.clone();
    let mut atomic: Vec<Vec<f64>> = d.increments.iter().map(|r| vec![0.0; r.len()]).collect();
    for &s in &d.atom_steps {
        std::mem::swap(&mut continuous[s], &mut atomic[s]);
    }
    AtomSplit {
        continuous: MonotoneMeasure {
            increments: continuous,
            atom_steps: BTreeSet::new(),
        },
        atomic: MonotoneMeasure {
            increments: atomic,
            atom_steps: d.atom_steps.clone(),
        },
        atoms: d.atom_steps.iter().copied().collect(),
    }
}
