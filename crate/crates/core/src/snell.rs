//! Classical Snell envelope `S_t = ess sup_{ν ∈ T_t} E[l_ν | F_t]`.

use crate::error::{Error, Result};
use crate::lattice::{AdaptedProcess, TreeModel};

/// Default cap on [`brute_force_value`] tree depth.
pub const DEFAULT_MAX_ENUMERATION_DEPTH: usize = 4;

/// Backward induction `S_N = l_N`, `S_k = max(l_k, E[S_{k+1}|F_k])`.
pub fn snell_envelope(l: &AdaptedProcess, model: &TreeModel) -> Result<AdaptedProcess> {
    model.check_shape(l)?;
    let mut s = l.clone();
    for k in (0..model.steps()).rev() {
        let cont = model.expect_row(s.row(k + 1));
        for (j, c) in cont.into_iter().enumerate() {
            let v = l.get(k, j).max(c);
            s.set(k, j, v);
        }
    }
    Ok(s)
}

/// Per-node stop flags; a path stops at the first flagged node it visits.
/// Terminal nodes are always flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule {
    stop: Vec<Vec<bool>>,
}

impl StoppingRule {
    pub fn from_flags(model: &TreeModel, mut flag: impl FnMut(usize, usize) -> bool) -> Self {
        let n = model.steps();
        let stop = (0..=n)
            .map(|k| (0..=k).map(|j| k == n || flag(k, j)).collect())
            .collect();
        Self { stop }
    }

    pub fn stops_at(&self, k: usize, j: usize) -> bool {
        self.stop[k][j]
    }

    /// Expected stopped payoff `E[l_ν]` at every node, for the rule restarted
    /// at that node.
    pub fn value(&self, l: &AdaptedProcess, model: &TreeModel) -> AdaptedProcess {
        let mut v = l.clone();
        for k in (0..model.steps()).rev() {
            let cont = model.expect_row(v.row(k + 1));
            for (j, c) in cont.into_iter().enumerate() {
                if !self.stop[k][j] {
                    v.set(k, j, c);
                }
            }
        }
        v
    }

    /// Earliest step at which the rule stops anywhere.
    pub fn first_stop_step(&self) -> usize {
        self.stop
            .iter()
            .position(|row| row.iter().any(|&s| s))
            .unwrap_or(self.stop.len() - 1)
    }
}

/// The minimal optimal rule: stop the first time the envelope touches the
/// obstacle.
pub fn optimal_stopping_time(s: &AdaptedProcess, l: &AdaptedProcess) -> Result<StoppingRule> {
    if s.steps() != l.steps() {
        return Err(Error::ShapeMismatch("envelope and obstacle differ in depth".into()));
    }
    let n = s.steps();
    let mut stop = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut row = Vec::with_capacity(k + 1);
        for j in 0..=k {
            if s.get(k, j) < l.get(k, j) {
                return Err(Error::CorruptedEnvelope { step: k, node: j });
            }
            row.push(k == n || s.get(k, j) == l.get(k, j));
        }
        stop.push(row);
    }
    Ok(StoppingRule { stop })
}

/// Supremum of `E[l_ν]` over every stopping time of the walk, by exhaustive
/// enumeration.
///
/// Stopping times here are path-dependent: a rule assigns a stop flag to each
/// node of the non-recombining history tree (each prefix of up/down moves),
/// so the family enumerated contains every stopping time of the filtration,
/// not only the Markovian ones.
pub fn brute_force_value(l: &AdaptedProcess, model: &TreeModel, max_depth: usize) -> Result<f64> {
    model.check_shape(l)?;
    let n = model.steps();
    if n > max_depth {
        return Err(Error::DepthExceeded { depth: n, max_depth });
    }
    let p = model.up_probability();
    // History nodes at depth < n, heap-indexed: root 0, children 2i+1 (down), 2i+2 (up).
    let decision_nodes = (1usize << n) - 1;
    let paths = 1usize << n;
    let path_weight: Vec<f64> = (0..paths)
        .map(|path| (0..n).fold(1.0, |w, step| if path >> step & 1 == 1 { w * p } else { w * (1.0 - p) }))
        .collect();

    let mut best = f64::NEG_INFINITY;
    for rule in 0u64..(1u64 << decision_nodes) {
        let mut value = 0.0;
        for (path, &w) in path_weight.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mut heap = 0usize;
            let mut ups = 0usize;
            let mut stopped = None;
            for k in 0..n {
                if rule >> heap & 1 == 1 {
                    stopped = Some((k, ups));
                    break;
                }
                let up = path >> k & 1 == 1;
                ups += usize::from(up);
                heap = 2 * heap + if up { 2 } else { 1 };
            }
            let (k, j) = stopped.unwrap_or((n, ups));
            value += w * l.get(k, j);
        }
        best = best.max(value);
    }
    Ok(best)
}
