//! Holdout protocol, fidelity metrics, bootstrap uncertainty, and regime
//! sweeps.
//!
//! The holdout is drawn once, before anything else, and never enters a
//! training mask or a bootstrap resample. Rank metrics compare agent scores
//! from a sparse fit against the dense-reference fit of the same method;
//! ranking AUC asks whether per-agent mean predictions separate faithful
//! from problematic agents.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_method, fit_method_weighted, FitResult, Method};
use crate::sampling::{check_connectivity, make_mask, ConnectivityReport, SamplingSpec};
use crate::stats::quantile;
use crate::types::{AgentClass, AgentLabels, ObservationMask, ScoreMatrix};

/// Disjoint holdout / training-pool partition of all agent-item pairs.
#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub holdout: ObservationMask,
    pub training_pool: ObservationMask,
}

/// Reserve a uniform random fraction of all K×J pairs, before any scores are
/// looked at.
pub fn make_holdout(
    n_agents: usize,
    n_items: usize,
    fraction: f64,
    seed: u64,
) -> Result<HoldoutSplit> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "holdout fraction must be in (0, 1), got {fraction}"
        )));
    }
    let total = n_agents * n_items;
    let count = ((fraction * total as f64).round() as usize).clamp(1, total - 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pattern = Array2::from_elem((n_agents, n_items), false);
    for idx in rand::seq::index::sample(&mut rng, total, count) {
        pattern[[idx / n_items, idx % n_items]] = true;
    }
    let holdout = ObservationMask::new(pattern);
    let training_pool = holdout.complement();
    Ok(HoldoutSplit {
        holdout,
        training_pool,
    })
}

/// RMSE between predictions and observed scores over the holdout cells (those
/// actually observed in `m`).
pub fn holdout_rmse(
    completed: &Array2<f64>,
    m: &ScoreMatrix,
    holdout: &ObservationMask,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, j) in holdout.observed_pairs() {
        if let Some(v) = m.get(i, j) {
            let r = completed[[i, j]] - v;
            sum += r * r;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyObservations("holdout cells"));
    }
    Ok((sum / n as f64).sqrt())
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut k = i;
        while k + 1 < idx.len() && x[idx[k + 1]] == x[idx[i]] {
            k += 1;
        }
        let avg = (i + k) as f64 / 2.0 + 1.0;
        for t in i..=k {
            ranks[idx[t]] = avg;
        }
        i = k + 1;
    }
    ranks
}

fn check_rank_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "rank metrics",
            expected: x.len().to_string(),
            got: y.len().to_string(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(
            "need at least two observations".into(),
        ));
    }
    for (name, v) in [("first", x), ("second", y)] {
        if v.iter().all(|&e| e == v[0]) {
            return Err(Error::UndefinedCorrelation(format!(
                "{name} vector is constant"
            )));
        }
    }
    Ok(())
}

/// Spearman's ρ with average-rank tie handling (Pearson correlation of the
/// rank vectors).
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_rank_inputs(x, y)?;
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Kendall's τ-b: (C − D) / sqrt((C + D + Tx)(C + D + Ty)), ties only in one
/// vector counted on that side.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_rank_inputs(x, y)?;
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if dx * dy > 0.0 {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    let den = (((conc + disc + tx) as f64) * ((conc + disc + ty) as f64)).sqrt();
    if den == 0.0 {
        return Err(Error::UndefinedCorrelation("all pairs tied".into()));
    }
    Ok((conc as f64 - disc as f64) / den)
}

/// (Spearman, Kendall) between two agent-ability vectors.
pub fn rank_metrics(theta_dense: &[f64], theta_sparse: &[f64]) -> Result<(f64, f64)> {
    Ok((
        spearman_rho(theta_dense, theta_sparse)?,
        kendall_tau_b(theta_dense, theta_sparse)?,
    ))
}

/// P(faithful score > problematic score) + ½ P(tie), by exhaustive pair
/// comparison. Unlabeled agents are ignored.
pub fn ranking_auc(per_agent_scores: &[f64], labels: &AgentLabels) -> Result<f64> {
    if per_agent_scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "ranking auc",
            expected: labels.len().to_string(),
            got: per_agent_scores.len().to_string(),
        });
    }
    let mut faithful = Vec::new();
    let mut problematic = Vec::new();
    for (score, class) in per_agent_scores.iter().zip(labels.classes()) {
        match class {
            AgentClass::Faithful => faithful.push(*score),
            AgentClass::Problematic => problematic.push(*score),
            AgentClass::Unlabeled => {}
        }
    }
    if faithful.is_empty() {
        return Err(Error::MissingClass("faithful"));
    }
    if problematic.is_empty() {
        return Err(Error::MissingClass("problematic"));
    }
    let mut wins = 0.0;
    for f in &faithful {
        for p in &problematic {
            if f > p {
                wins += 1.0;
            } else if f == p {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (faithful.len() * problematic.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalCis {
    pub holdout_rmse: (f64, f64),
    pub spearman_rho: Option<(f64, f64)>,
    pub kendall_tau: Option<(f64, f64)>,
    pub ranking_auc: Option<(f64, f64)>,
}

/// Point metrics with bootstrap percentile CIs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Training cells actually observed, over all K×J pairs.
    pub realized_coverage: f64,
    pub holdout_rmse: f64,
    pub spearman_rho: Option<f64>,
    pub kendall_tau: Option<f64>,
    pub ranking_auc: Option<f64>,
    pub ci: Option<EvalCis>,
    pub n_boot: usize,
    /// Bootstrap iterations whose resampled support disconnected the graph;
    /// the ridge keeps those solves defined, so they still count.
    pub disconnected_iterations: usize,
}

struct IterationMetrics {
    rmse: f64,
    spearman: Option<f64>,
    kendall: Option<f64>,
    auc: Option<f64>,
    disconnected: bool,
}

fn metrics_for_fit(
    fit: &FitResult,
    m: &ScoreMatrix,
    holdout: &ObservationMask,
    dense_scores: &[f64],
    labels: Option<&AgentLabels>,
) -> Result<(f64, Option<f64>, Option<f64>, Option<f64>)> {
    let rmse = holdout_rmse(&fit.completed, m, holdout)?;
    let sparse_scores = fit.agent_scores();
    let (rho, tau) = rank_metrics(dense_scores, &sparse_scores)?;
    let auc = match labels {
        Some(l) => Some(ranking_auc(&fit.agent_mean_scores(), l)?),
        None => None,
    };
    Ok((rmse, Some(rho), Some(tau), auc))
}

/// Fit on the training mask, evaluate on the fixed holdout, and quantify
/// uncertainty by resampling training pairs with replacement (a pair drawn m
/// times contributes weight m to the refit objective).
pub fn bootstrap_eval(
    m: &ScoreMatrix,
    split: &HoldoutSplit,
    train_mask: &ObservationMask,
    method: &Method,
    labels: Option<&AgentLabels>,
    n_boot: usize,
    seed: u64,
) -> Result<EvalReport> {
    if !train_mask.is_disjoint(&split.holdout) {
        return Err(Error::InvalidConfig(
            "training mask intersects the holdout set".into(),
        ));
    }
    let (k, j) = m.values().dim();

    // dense reference for rank fidelity: the same method on the full
    // training pool
    let pool_matrix = m.restricted(&split.training_pool);
    let dense_fit = fit_method(&pool_matrix, method, seed)?;
    let dense_scores = dense_fit.agent_scores();

    let train_matrix = m.restricted(train_mask);
    let train_pairs = train_matrix.mask().observed_pairs();
    if train_pairs.is_empty() {
        return Err(Error::EmptyObservations("training cells"));
    }
    let realized_coverage = train_pairs.len() as f64 / (k * j) as f64;

    let point_fit = fit_method(&train_matrix, method, seed)?;
    let (rmse, rho, tau, auc) =
        metrics_for_fit(&point_fit, m, &split.holdout, &dense_scores, labels)?;

    let mut report = EvalReport {
        method: method.name().to_string(),
        realized_coverage,
        holdout_rmse: rmse,
        spearman_rho: rho,
        kendall_tau: tau,
        ranking_auc: auc,
        ci: None,
        n_boot,
        disconnected_iterations: 0,
    };
    if n_boot == 0 {
        return Ok(report);
    }

    let iterations: Vec<Result<IterationMetrics>> = (0..n_boot)
        .into_par_iter()
        .map(|it| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(it as u64 + 1);
            let mut counts = vec![0u32; train_pairs.len()];
            for _ in 0..train_pairs.len() {
                counts[rng.random_range(0..train_pairs.len())] += 1;
            }
            let mut weights = Array2::zeros((k, j));
            let mut support = ObservationMask::empty(k, j);
            for (idx, &(i, jj)) in train_pairs.iter().enumerate() {
                if counts[idx] > 0 {
                    weights[[i, jj]] = counts[idx] as f64;
                    support.set(i, jj, true);
                }
            }
            debug_assert!(support.is_disjoint(&split.holdout));
            let disconnected = !check_connectivity(&support, 1).satisfied;
            let resampled = m.restricted(&support);
            let fit = fit_method_weighted(&resampled, method, seed, Some(&weights))?;
            let (rmse, spearman, kendall, auc) =
                metrics_for_fit(&fit, m, &split.holdout, &dense_scores, labels)?;
            Ok(IterationMetrics {
                rmse,
                spearman,
                kendall,
                auc,
                disconnected,
            })
        })
        .collect();

    let mut rmses = Vec::with_capacity(n_boot);
    let mut rhos = Vec::new();
    let mut taus = Vec::new();
    let mut aucs = Vec::new();
    for res in iterations {
        let it = res?;
        rmses.push(it.rmse);
        if let Some(v) = it.spearman {
            rhos.push(v);
        }
        if let Some(v) = it.kendall {
            taus.push(v);
        }
        if let Some(v) = it.auc {
            aucs.push(v);
        }
        if it.disconnected {
            report.disconnected_iterations += 1;
        }
    }
    let interval = |v: &[f64]| (quantile(v, 0.025), quantile(v, 0.975));
    report.ci = Some(EvalCis {
        holdout_rmse: interval(&rmses),
        spearman_rho: (!rhos.is_empty()).then(|| interval(&rhos)),
        kendall_tau: (!taus.is_empty()).then(|| interval(&taus)),
        ranking_auc: (!aucs.is_empty()).then(|| interval(&aucs)),
    });
    Ok(report)
}

/// One cell of a regime sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub spec: SamplingSpec,
    pub method: String,
    pub target_pairs: Option<usize>,
    pub realized_pairs: usize,
    pub connectivity: Option<ConnectivityReport>,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

/// Cartesian product of sampling specs and methods; each cell draws its own
/// mask, fits, and evaluates against the shared holdout. Per-cell failures
/// are recorded and the sweep continues.
pub fn sweep(
    m: &ScoreMatrix,
    split: &HoldoutSplit,
    specs: &[SamplingSpec],
    methods: &[Method],
    labels: Option<&AgentLabels>,
    n_boot: usize,
) -> Vec<SweepCell> {
    let (k, j) = m.values().dim();
    // cells the regime may sample from: not held out, actually observed
    let forbidden = split.holdout.union(&m.mask().complement());
    let mut cells = Vec::with_capacity(specs.len() * methods.len());
    for spec in specs {
        let masked = make_mask(k, j, spec, &forbidden);
        for method in methods {
            let mut cell = SweepCell {
                spec: *spec,
                method: method.name().to_string(),
                target_pairs: spec.target_pairs(k, j),
                realized_pairs: 0,
                connectivity: None,
                report: None,
                error: None,
            };
            match &masked {
                Ok((mask, conn)) => {
                    cell.realized_pairs = mask.observed_count();
                    cell.connectivity = Some(*conn);
                    match bootstrap_eval(m, split, mask, method, labels, n_boot, spec.seed) {
                        Ok(report) => cell.report = Some(report),
                        Err(e) => cell.error = Some(e.to_string()),
                    }
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cells.push(cell);
        }
    }
    cells
}
