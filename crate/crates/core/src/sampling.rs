//! Training-mask construction under four sparsity regimes, with degree and
//! connectivity repair of the bipartite observation graph.
//!
//! Masks never touch forbidden (holdout) cells. After repair every agent and
//! item has degree ≥ d_min and the graph is a single component, so all
//! parameters share one gauge.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ObservationMask;

pub const DEFAULT_D_MIN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum Regime {
    /// Each agent observes a random alpha-fraction of items.
    Row { alpha: f64 },
    /// Each item is evaluated by a random beta-fraction of agents.
    Column { beta: f64 },
    /// Each pair is observed independently with probability alpha * beta.
    Hybrid { alpha: f64, beta: f64 },
    /// C (K + J) ln(K + J) pairs drawn uniformly without replacement.
    #[serde(rename = "nlogn")]
    NLogN { c: f64 },
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Row { .. } => "row",
            Regime::Column { .. } => "column",
            Regime::Hybrid { .. } => "hybrid",
            Regime::NLogN { .. } => "nlogn",
        }
    }

    fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| 0.0 < f && f <= 1.0;
        let ok = match self {
            Regime::Row { alpha } => frac_ok(*alpha),
            Regime::Column { beta } => frac_ok(*beta),
            Regime::Hybrid { alpha, beta } => frac_ok(*alpha) && frac_ok(*beta),
            Regime::NLogN { c } => *c > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid {} regime parameters: {self:?} (fractions must be in (0,1], C > 0)",
                self.name()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    #[serde(flatten)]
    pub regime: Regime,
    pub d_min: usize,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn new(regime: Regime, d_min: usize, seed: u64) -> Result<Self> {
        regime.validate()?;
        if d_min < 1 {
            return Err(Error::InvalidConfig("d_min must be at least 1".into()));
        }
        Ok(SamplingSpec {
            regime,
            d_min,
            seed,
        })
    }

    /// Pair count the regime aims for before repair, when it has a fixed one.
    pub fn target_pairs(&self, n_agents: usize, n_items: usize) -> Option<usize> {
        match self.regime {
            Regime::Row { alpha } => Some(n_agents * ((alpha * n_items as f64).round() as usize)),
            Regime::Column { beta } => Some(n_items * ((beta * n_agents as f64).round() as usize)),
            Regime::Hybrid { .. } => None,
            Regime::NLogN { c } => {
                let n = (n_agents + n_items) as f64;
                Some((c * n * n.ln()).round() as usize)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub min_agent_degree: usize,
    pub min_item_degree: usize,
    /// Connected components of the bipartite observation graph; isolated
    /// nodes count as their own components.
    pub n_components: usize,
    pub repaired_pairs: usize,
    pub d_min: usize,
    pub satisfied: bool,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }

    fn n_roots(&mut self) -> usize {
        (0..self.parent.len())
            .filter(|&x| self.find(x) == x)
            .count()
    }
}

/// Degrees and component count of the bipartite graph formed by the mask.
pub fn check_connectivity(mask: &ObservationMask, d_min: usize) -> ConnectivityReport {
    let (k, _) = mask.dims();
    let mut uf = UnionFind::new(k + mask.n_items());
    for (i, jj) in mask.observed_pairs() {
        uf.union(i, k + jj);
    }
    let min_agent_degree = mask.agent_degrees().into_iter().min().unwrap_or(0);
    let min_item_degree = mask.item_degrees().into_iter().min().unwrap_or(0);
    let n_components = uf.n_roots();
    ConnectivityReport {
        min_agent_degree,
        min_item_degree,
        n_components,
        repaired_pairs: 0,
        d_min,
        satisfied: min_agent_degree >= d_min && min_item_degree >= d_min && n_components == 1,
    }
}

/// Add random non-forbidden pairs until every node has degree ≥ d_min and the
/// graph is one component. Deterministic given the seed; a mask that already
/// satisfies the constraints comes back unchanged.
pub fn repair_mask(
    mask: &ObservationMask,
    d_min: usize,
    forbidden: &ObservationMask,
    seed: u64,
) -> Result<(ObservationMask, usize)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    repair_mask_with_rng(mask, d_min, forbidden, &mut rng)
}

fn repair_mask_with_rng<R: Rng>(
    mask: &ObservationMask,
    d_min: usize,
    forbidden: &ObservationMask,
    rng: &mut R,
) -> Result<(ObservationMask, usize)> {
    let (k, j) = mask.dims();
    if forbidden.dims() != (k, j) {
        return Err(Error::DimensionMismatch {
            context: "repair forbidden mask",
            expected: format!("({k}, {j})"),
            got: format!("{:?}", forbidden.dims()),
        });
    }
    let mut out = mask.clone();
    let mut added = 0usize;
    let mut agent_deg = out.agent_degrees();
    let mut item_deg = out.item_degrees();

    // degree repair: one agent pass then one item pass; additions only raise
    // degrees, so earlier nodes stay satisfied
    for i in 0..k {
        while agent_deg[i] < d_min {
            let candidates: Vec<usize> = (0..j)
                .filter(|&jj| !out.is_observed(i, jj) && !forbidden.is_observed(i, jj))
                .collect();
            if candidates.is_empty() {
                return Err(Error::Infeasible(format!(
                    "agent {i} cannot reach degree {d_min}: every unobserved cell in its row is forbidden"
                )));
            }
            let jj = candidates[rng.random_range(0..candidates.len())];
            out.set(i, jj, true);
            agent_deg[i] += 1;
            item_deg[jj] += 1;
            added += 1;
        }
    }
    for jj in 0..j {
        while item_deg[jj] < d_min {
            let candidates: Vec<usize> = (0..k)
                .filter(|&i| !out.is_observed(i, jj) && !forbidden.is_observed(i, jj))
                .collect();
            if candidates.is_empty() {
                return Err(Error::Infeasible(format!(
                    "item {jj} cannot reach degree {d_min}: every unobserved cell in its column is forbidden"
                )));
            }
            let i = candidates[rng.random_range(0..candidates.len())];
            out.set(i, jj, true);
            agent_deg[i] += 1;
            item_deg[jj] += 1;
            added += 1;
        }
    }

    // connectivity repair: bridge components with uniformly chosen admissible
    // cross-component pairs
    let mut uf = UnionFind::new(k + j);
    for (i, jj) in out.observed_pairs() {
        uf.union(i, k + jj);
    }
    while uf.n_roots() > 1 {
        let mut candidates = Vec::new();
        for i in 0..k {
            for jj in 0..j {
                if !out.is_observed(i, jj)
                    && !forbidden.is_observed(i, jj)
                    && uf.find(i) != uf.find(k + jj)
                {
                    candidates.push((i, jj));
                }
            }
        }
        if candidates.is_empty() {
            return Err(Error::Infeasible(
                "cannot connect the observation graph: no admissible cross-component pair left"
                    .into(),
            ));
        }
        let (i, jj) = candidates[rng.random_range(0..candidates.len())];
        out.set(i, jj, true);
        uf.union(i, k + jj);
        added += 1;
    }

    Ok((out, added))
}

/// Regime-specific random pattern, before repair.
pub(crate) fn sample_pattern<R: Rng>(
    n_agents: usize,
    n_items: usize,
    regime: &Regime,
    forbidden: &ObservationMask,
    rng: &mut R,
) -> ObservationMask {
    let mut pattern = Array2::from_elem((n_agents, n_items), false);
    match *regime {
        Regime::Row { alpha } => {
            let per_row = (alpha * n_items as f64).round() as usize;
            for i in 0..n_agents {
                let free: Vec<usize> = (0..n_items)
                    .filter(|&jj| !forbidden.is_observed(i, jj))
                    .collect();
                let take = per_row.min(free.len());
                for idx in rand::seq::index::sample(rng, free.len(), take) {
                    pattern[[i, free[idx]]] = true;
                }
            }
        }
        Regime::Column { beta } => {
            let per_col = (beta * n_agents as f64).round() as usize;
            for jj in 0..n_items {
                let free: Vec<usize> = (0..n_agents)
                    .filter(|&i| !forbidden.is_observed(i, jj))
                    .collect();
                let take = per_col.min(free.len());
                for idx in rand::seq::index::sample(rng, free.len(), take) {
                    pattern[[free[idx], jj]] = true;
                }
            }
        }
        Regime::Hybrid { alpha, beta } => {
            let p = alpha * beta;
            for i in 0..n_agents {
                for jj in 0..n_items {
                    if !forbidden.is_observed(i, jj) && rng.random::<f64>() < p {
                        pattern[[i, jj]] = true;
                    }
                }
            }
        }
        Regime::NLogN { c } => {
            let n = (n_agents + n_items) as f64;
            let target = (c * n * n.ln()).round() as usize;
            let free: Vec<(usize, usize)> = forbidden.complement().observed_pairs();
            let take = target.min(free.len());
            for idx in rand::seq::index::sample(rng, free.len(), take) {
                let (i, jj) = free[idx];
                pattern[[i, jj]] = true;
            }
        }
    }
    ObservationMask::new(pattern)
}

/// Draw a training mask under the spec's regime, excluding forbidden cells,
/// then repair degrees and connectivity.
pub fn make_mask(
    n_agents: usize,
    n_items: usize,
    spec: &SamplingSpec,
    forbidden: &ObservationMask,
) -> Result<(ObservationMask, ConnectivityReport)> {
    spec.regime.validate()?;
    if n_agents == 0 || n_items == 0 {
        return Err(Error::InvalidConfig("empty matrix dimensions".into()));
    }
    if forbidden.dims() != (n_agents, n_items) {
        return Err(Error::DimensionMismatch {
            context: "make_mask forbidden mask",
            expected: format!("({n_agents}, {n_items})"),
            got: format!("{:?}", forbidden.dims()),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let pattern = sample_pattern(n_agents, n_items, &spec.regime, forbidden, &mut rng);
    let (repaired, added) = repair_mask_with_rng(&pattern, spec.d_min, forbidden, &mut rng)?;
    let mut report = check_connectivity(&repaired, spec.d_min);
    report.repaired_pairs = added;
    Ok((repaired, report))
}
