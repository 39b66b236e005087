//! Scenario documents.

use std::collections::BTreeMap;

use gsnell::envelope::EnvelopeOptions;
use gsnell::penalize::{LowerData, Schedule};
use gsnell::{AdaptedProcess, MonotoneMeasure, TreeModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::expr::{Env, Expr};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub data: DataConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub comparison: ComparisonConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub steps: usize,
    pub horizon: f64,
}

/// A process given as an expression, a constant, or a node table
/// (`table[k][j]`, `k = 0..=N`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProcessDef {
    Constant(f64),
    Expr(String),
    Table { table: Vec<Vec<f64>> },
}

/// Terminal values as an expression, a constant, or the `N + 1` values of
/// the last row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TerminalDef {
    Constant(f64),
    Expr(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Underlying `S` as an expression over `k`, `t`, `B`.
    #[serde(default, rename = "S")]
    pub underlying: Option<String>,
    /// L.
    pub obstacle: ProcessDef,
    /// l; defaults to L.
    #[serde(default)]
    pub lower: Option<ProcessDef>,
    /// ξ; defaults to L on the last row.
    #[serde(default)]
    pub terminal: Option<TerminalDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    #[default]
    Zero,
    Lebesgue,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Increments {
    /// One mass per step `1..=N`.
    PerStep(Vec<f64>),
    /// Rows `1..=N` of per-node masses.
    PerNode(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub step: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default)]
    pub kind: MeasureKind,
    #[serde(default)]
    pub increments: Option<Increments>,
    #[serde(default)]
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<String>,
    pub schedule: Schedule,
    pub tol: f64,
    pub seed: u64,
    pub minimality_trials: usize,
    pub class_trials: usize,
    /// Random instances added to each property suite.
    pub random_instances: usize,
    /// Depth cap of random instances; defaults to the scenario depth.
    pub max_depth: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let o = EnvelopeOptions::default();
        Self {
            command: None,
            schedule: o.schedule,
            tol: o.tol,
            seed: o.seed,
            minimality_trials: o.minimality_trials,
            class_trials: o.class_trials,
            random_instances: 0,
            max_depth: None,
        }
    }
}

/// Second problem of the comparison suite, relative to the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonConfig {
    /// Added to ξ′.
    pub terminal_shift: f64,
    /// Added to dA′ at every node.
    pub drift_shift: f64,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_n: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.model.steps < 1 {
            return Err(CliError::field("model.steps", "must be at least 1"));
        }
        if self.model.horizon.is_nan() || self.model.horizon <= 0.0 || !self.model.horizon.is_finite() {
            return Err(CliError::field("model.horizon", "must be positive and finite"));
        }
        for (i, a) in self.measure.atoms.iter().enumerate() {
            if a.step == 0 || a.step > self.model.steps {
                return Err(CliError::field(
                    format!("measure.atoms[{i}].step"),
                    format!("must lie in 1..={}", self.model.steps),
                ));
            }
        }
        if self.run.schedule.n0 == 0 || self.run.schedule.growth < 2 {
            return Err(CliError::field("run.schedule", "needs n0 >= 1 and growth >= 2"));
        }
        Ok(())
    }

    pub fn options(&self, o: &Overrides) -> EnvelopeOptions {
        let mut schedule = self.run.schedule;
        if let Some(n) = o.max_n {
            schedule.n_max = n;
        }
        EnvelopeOptions {
            schedule,
            tol: o.tol.unwrap_or(self.run.tol),
            seed: o.seed.unwrap_or(self.run.seed),
            minimality_trials: self.run.minimality_trials,
            class_trials: self.run.class_trials,
        }
    }

    pub fn tree(&self) -> Result<TreeModel, CliError> {
        TreeModel::new(self.model.steps, self.model.horizon).map_err(|e| CliError::field("model", e.to_string()))
    }

    fn underlying(&self, model: &TreeModel) -> Result<Option<AdaptedProcess>, CliError> {
        let Some(src) = &self.data.underlying else {
            return Ok(None);
        };
        let expr = Expr::parse(src, &self.constants).map_err(|e| CliError::field("data.S", e.to_string()))?;
        if expr.uses_underlying() {
            return Err(CliError::field("data.S", "may not refer to S"));
        }
        Ok(Some(AdaptedProcess::from_fn(model, |k, j| {
            expr.eval(&node_env(model, k, j, f64::NAN))
        })))
    }

    fn process(
        &self,
        field: &str,
        def: &ProcessDef,
        model: &TreeModel,
        s: Option<&AdaptedProcess>,
    ) -> Result<AdaptedProcess, CliError> {
        match def {
            ProcessDef::Constant(c) => Ok(AdaptedProcess::constant(model, *c)),
            ProcessDef::Expr(src) => {
                let expr = Expr::parse(src, &self.constants).map_err(|e| CliError::field(field, e.to_string()))?;
                if expr.uses_underlying() && s.is_none() {
                    return Err(CliError::field(field, "refers to S but data.S is not defined"));
                }
                Ok(AdaptedProcess::from_fn(model, |k, j| {
                    let sv = s.map_or(f64::NAN, |p| p.get(k, j));
                    expr.eval(&node_env(model, k, j, sv))
                }))
            }
            ProcessDef::Table { table } => {
                let p = AdaptedProcess::from_rows(table.clone()).map_err(|e| CliError::field(field, e.to_string()))?;
                if p.steps() != model.steps() {
                    return Err(CliError::field(
                        field,
                        format!("table has {} rows, expected {}", p.steps() + 1, model.steps() + 1),
                    ));
                }
                Ok(p)
            }
        }
    }

    fn measure(&self, model: &TreeModel) -> Result<MonotoneMeasure, CliError> {
        let n = model.steps();
        let inc = &self.measure.increments;
        let base = match self.measure.kind {
            MeasureKind::Zero | MeasureKind::Lebesgue if inc.is_some() => {
                return Err(CliError::field(
                    "measure.increments",
                    "only allowed with kind \"custom\"",
                ));
            }
            MeasureKind::Zero => MonotoneMeasure::zero(model),
            MeasureKind::Lebesgue => MonotoneMeasure::lebesgue(model),
            MeasureKind::Custom => match inc {
                None => return Err(CliError::field("measure.increments", "required with kind \"custom\"")),
                Some(Increments::PerStep(m)) => MonotoneMeasure::from_step_masses(model, m)
                    .map_err(|e| CliError::field("measure.increments", e.to_string()))?,
                Some(Increments::PerNode(rows)) => {
                    if rows.len() != n {
                        return Err(CliError::field(
                            "measure.increments",
                            format!("expected {n} rows for steps 1..={n}"),
                        ));
                    }
                    let mut full = vec![vec![0.0]];
                    full.extend(rows.iter().cloned());
                    MonotoneMeasure::from_increments(full, Default::default())
                        .map_err(|e| CliError::field("measure.increments", e.to_string()))?
                }
            },
        };
        let mut m = base;
        for (i, a) in self.measure.atoms.iter().enumerate() {
            m.add_atom(a.step, a.mass)
                .map_err(|e| CliError::field(format!("measure.atoms[{i}]"), e.to_string()))?;
        }
        Ok(m)
    }

    /// Builds `(ξ, L, l, δ)` on the scenario tree.
    pub fn lower_data(&self) -> Result<LowerData, CliError> {
        let model = self.tree()?;
        let s = self.underlying(&model)?;
        let obstacle = self.process("data.obstacle", &self.data.obstacle, &model, s.as_ref())?;
        let lower = match &self.data.lower {
            Some(def) => self.process("data.lower", def, &model, s.as_ref())?,
            None => obstacle.clone(),
        };
        let n = model.steps();
        let terminal = match &self.data.terminal {
            None => obstacle.terminal().to_vec(),
            Some(TerminalDef::Constant(c)) => vec![*c; n + 1],
            Some(TerminalDef::Values(v)) => {
                if v.len() != n + 1 {
                    return Err(CliError::field("data.terminal", format!("expected {} values", n + 1)));
                }
                v.clone()
            }
            Some(TerminalDef::Expr(src)) => {
                let p = self.process("data.terminal", &ProcessDef::Expr(src.clone()), &model, s.as_ref())?;
                p.terminal().to_vec()
            }
        };
        for (field, p) in [("data.obstacle", &obstacle), ("data.lower", &lower)] {
            if let Some((k, j, _)) = p.iter_nodes().find(|(_, _, x)| !x.is_finite()) {
                return Err(CliError::field(field, format!("non-finite value at node ({k}, {j})")));
            }
        }
        if terminal.iter().any(|x| !x.is_finite()) {
            return Err(CliError::field("data.terminal", "non-finite value"));
        }
        let measure = self.measure(&model)?;
        LowerData::new(model, terminal, obstacle, lower, measure).map_err(|e| CliError::field("data", e.to_string()))
    }
}

fn node_env(model: &TreeModel, k: usize, j: usize, s: f64) -> Env {
    Env {
        k: k as f64,
        t: model.grid().time(k),
        b: model.brownian(k, j),
        s,
    }
}
