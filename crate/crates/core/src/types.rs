//! Domain types shared by all modules: bounded score matrices, observation
//! masks, additive parameters, and agent class labels.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boolean K×J observation pattern over agent-item pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    pattern: Array2<bool>,
}

impl ObservationMask {
    pub fn new(pattern: Array2<bool>) -> Self {
        Self { pattern }
    }

    pub fn full(n_agents: usize, n_items: usize) -> Self {
        Self {
            pattern: Array2::from_elem((n_agents, n_items), true),
        }
    }

    pub fn empty(n_agents: usize, n_items: usize) -> Self {
        Self {
            pattern: Array2::from_elem((n_agents, n_items), false),
        }
    }

    pub fn from_pairs(n_agents: usize, n_items: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut pattern = Array2::from_elem((n_agents, n_items), false);
        for &(i, j) in pairs {
            if i >= n_agents || j >= n_items {
                return Err(Error::DimensionMismatch {
                    context: "mask pair",
                    expected: format!("< ({n_agents}, {n_items})"),
                    got: format!("({i}, {j})"),
                });
            }
            pattern[[i, j]] = true;
        }
        Ok(Self { pattern })
    }

    pub fn n_agents(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.pattern.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pattern.dim()
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.pattern[[i, j]]
    }

    pub fn set(&mut self, i: usize, j: usize, observed: bool) {
        self.pattern[[i, j]] = observed;
    }

    pub fn observed_count(&self) -> usize {
        self.pattern.iter().filter(|&&o| o).count()
    }

    pub fn pattern(&self) -> &Array2<bool> {
        &self.pattern
    }

    /// Observed (agent, item) pairs in row-major order.
    pub fn observed_pairs(&self) -> Vec<(usize, usize)> {
        self.pattern
            .indexed_iter()
            .filter(|(_, &o)| o)
            .map(|((i, j), _)| (i, j))
            .collect()
    }

    pub fn agent_degrees(&self) -> Vec<usize> {
        self.pattern
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&o| o).count())
            .collect()
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        self.pattern
            .columns()
            .into_iter()
            .map(|c| c.iter().filter(|&&o| o).count())
            .collect()
    }

    pub fn intersect(&self, other: &ObservationMask) -> ObservationMask {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        let pattern =
            Array2::from_shape_fn(self.dims(), |(i, j)| self.pattern[[i, j]] && other.pattern[[i, j]]);
        ObservationMask::new(pattern)
    }

    pub fn union(&self, other: &ObservationMask) -> ObservationMask {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        let pattern =
            Array2::from_shape_fn(self.dims(), |(i, j)| self.pattern[[i, j]] || other.pattern[[i, j]]);
        ObservationMask::new(pattern)
    }

    pub fn complement(&self) -> ObservationMask {
        ObservationMask::new(self.pattern.mapv(|o| !o))
    }

    pub fn is_disjoint(&self, other: &ObservationMask) -> bool {
        self.intersect(other).observed_count() == 0
    }
}

/// Bounded agent-by-item score matrix with an explicit observation mask.
///
/// Observed entries lie in [-1, 1]; unobserved cells are carried as zeros in
/// `values` and are excluded from every computation via the mask.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    values: Array2<f64>,
    mask: ObservationMask,
    agent_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl ScoreMatrix {
    pub fn new(
        values: Array2<f64>,
        mask: ObservationMask,
        agent_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Result<Self> {
        if values.dim() != mask.dims() {
            return Err(Error::DimensionMismatch {
                context: "score matrix mask",
                expected: format!("{:?}", values.dim()),
                got: format!("{:?}", mask.dims()),
            });
        }
        if agent_ids.len() != values.nrows() || item_ids.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                context: "score matrix labels",
                expected: format!("{:?}", values.dim()),
                got: format!("({}, {})", agent_ids.len(), item_ids.len()),
            });
        }
        check_unique("agent", &agent_ids)?;
        check_unique("item", &item_ids)?;
        for ((i, j), &v) in values.indexed_iter() {
            if mask.is_observed(i, j) && !(-1.0..=1.0).contains(&v) {
                return Err(Error::ScoreOutOfRange {
                    agent: agent_ids[i].clone(),
                    item: item_ids[j].clone(),
                    value: v,
                });
            }
        }
        // Zero out unobserved cells so stray sentinel values can never leak
        // into reductions.
        let mut values = values;
        for ((i, j), v) in values.indexed_iter_mut() {
            if !mask.is_observed(i, j) {
                *v = 0.0;
            }
        }
        Ok(Self {
            values,
            mask,
            agent_ids,
            item_ids,
        })
    }

    /// Fully observed matrix.
    pub fn dense(values: Array2<f64>, agent_ids: Vec<String>, item_ids: Vec<String>) -> Result<Self> {
        let mask = ObservationMask::full(values.nrows(), values.ncols());
        Self::new(values, mask, agent_ids, item_ids)
    }

    pub fn n_agents(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &ObservationMask {
        &self.mask
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Observed value at (i, j), or `None` when the cell is unobserved.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask.is_observed(i, j).then(|| self.values[[i, j]])
    }

    pub fn observed_count(&self) -> usize {
        self.mask.observed_count()
    }

    /// Same values restricted to `mask ∧ self.mask`.
    pub fn restricted(&self, mask: &ObservationMask) -> ScoreMatrix {
        let mask = self.mask.intersect(mask);
        let mut values = self.values.clone();
        for ((i, j), v) in values.indexed_iter_mut() {
            if !mask.is_observed(i, j) {
                *v = 0.0;
            }
        }
        ScoreMatrix {
            values,
            mask,
            agent_ids: self.agent_ids.clone(),
            item_ids: self.item_ids.clone(),
        }
    }
}

fn check_unique(kind: &'static str, ids: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId {
                kind,
                id: id.clone(),
            });
        }
    }
    Ok(())
}

/// Agent abilities and item difficulties of the additive model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveParams {
    pub theta: Array1<f64>,
    pub b: Array1<f64>,
    pub lambda: f64,
}

impl AdditiveParams {
    pub fn new(theta: Array1<f64>, b: Array1<f64>, lambda: f64) -> Result<Self> {
        if !theta.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(
                "additive parameters must be finite".into(),
            ));
        }
        Ok(Self { theta, b, lambda })
    }

    pub fn n_agents(&self) -> usize {
        self.theta.len()
    }

    pub fn n_items(&self) -> usize {
        self.b.len()
    }

    /// |Σ_j b_j|, the residual of the gauge constraint.
    pub fn gauge_residual(&self) -> f64 {
        self.b.sum().abs()
    }

    /// Shift b to mean zero and θ by the same amount; predictions are
    /// unchanged.
    pub fn recentered(&self) -> AdditiveParams {
        let shift = self.b.mean().unwrap_or(0.0);
        AdditiveParams {
            theta: &self.theta - shift,
            b: &self.b - shift,
            lambda: self.lambda,
        }
    }

    /// Predicted matrix θ_i − b_j, clamped to [-1, 1] iff `clip` is set.
    pub fn predict(&self, clip: bool) -> Array2<f64> {
        let (k, j) = (self.theta.len(), self.b.len());
        Array2::from_shape_fn((k, j), |(i, jj)| {
            let v = self.theta[i] - self.b[jj];
            if clip {
                v.clamp(-1.0, 1.0)
            } else {
                v
            }
        })
    }
}

/// Classification of an agent for ranking evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentClass {
    Faithful,
    Problematic,
    Unlabeled,
}

impl std::str::FromStr for AgentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faithful" => Ok(AgentClass::Faithful),
            "problematic" => Ok(AgentClass::Problematic),
            "unlabeled" => Ok(AgentClass::Unlabeled),
            other => Err(Error::InvalidConfig(format!(
                "unknown agent tag {other:?} (expected faithful|problematic|unlabeled)"
            ))),
        }
    }
}

/// Per-agent class tags, aligned with a matrix's agent order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentLabels {
    classes: Vec<AgentClass>,
}

impl AgentLabels {
    pub fn new(classes: Vec<AgentClass>) -> Self {
        Self { classes }
    }

    /// Align (agent id, class) pairs with a matrix's agent order. Agents
    /// absent from `pairs` are tagged unlabeled; unknown agent ids error.
    pub fn align(pairs: &[(String, AgentClass)], agent_ids: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, AgentClass> = pairs
            .iter()
            .map(|(id, class)| (id.as_str(), *class))
            .collect();
        for (id, _) in pairs {
            if !agent_ids.iter().any(|a| a == id) {
                return Err(Error::UnknownId {
                    kind: "agent",
                    id: id.clone(),
                });
            }
        }
        let classes = agent_ids
            .iter()
            .map(|id| index.get(id.as_str()).copied().unwrap_or(AgentClass::Unlabeled))
            .collect();
        Ok(Self { classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[AgentClass] {
        &self.classes
    }
}
