//! Low-rank completion baselines: soft-impute with singular-value
//! thresholding, truncated SVD over mean-imputed data, and unconstrained UV
//! factorization by alternating ridge least squares.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::FitResult;
use crate::error::{Error, Result};
use crate::types::ScoreMatrix;

pub const NUCLEAR_REG_GRID: [f64; 4] = [0.01, 0.03, 0.1, 0.3];
const NUCLEAR_VALIDATION_FRACTION: f64 = 0.1;

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Reconstruction after soft-thresholding singular values by `reg`; also
/// returns the surviving rank and the nuclear norm of the result.
fn svt(a: &DMatrix<f64>, reg: f64) -> (DMatrix<f64>, usize, f64) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let mut shrunk = svd.singular_values.clone();
    let mut rank = 0;
    let mut nuclear = 0.0;
    for s in shrunk.iter_mut() {
        *s = (*s - reg).max(0.0);
        if *s > 0.0 {
            rank += 1;
            nuclear += *s;
        }
    }
    let recon = u * DMatrix::from_diagonal(&shrunk) * vt;
    (recon, rank, nuclear)
}

fn truncated_svd_reconstruct(a: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let mut kept = svd.singular_values.clone();
    for (idx, s) in kept.iter_mut().enumerate() {
        if idx >= rank {
            *s = 0.0;
        }
    }
    u * DMatrix::from_diagonal(&kept) * vt
}

/// Soft-impute: alternate singular-value thresholding with restoring the
/// observed entries, starting from zeros at the unobserved cells.
pub fn fit_nuclear_norm(
    m: &ScoreMatrix,
    reg: f64,
    max_iters: usize,
    tol: f64,
) -> Result<FitResult> {
    if m.observed_count() == 0 {
        return Err(Error::EmptyObservations("training cells"));
    }
    let mut warnings = Vec::new();
    // unobserved cells of `values` are stored as zeros, which is exactly the
    // soft-impute initialization
    let mut work = to_na(m.values());
    let mut z_old: Option<DMatrix<f64>> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..max_iters {
        iterations += 1;
        let (z, _rank, nuclear) = svt(&work, reg);
        let mut fit_err = 0.0;
        for (i, j) in m.mask().observed_pairs() {
            let r = m.values()[[i, j]] - z[(i, j)];
            fit_err += r * r;
        }
        trace.push(0.5 * fit_err + reg * nuclear);
        let rel_change = match &z_old {
            Some(prev) => {
                let diff = (&z - prev).norm();
                diff / prev.norm().max(1.0)
            }
            None => f64::INFINITY,
        };
        // restore observed entries for the next sweep
        work = z.clone();
        for (i, j) in m.mask().observed_pairs() {
            work[(i, j)] = m.values()[[i, j]];
        }
        z_old = Some(z);
        if rel_change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "soft-impute did not converge within {max_iters} iterations; returning last iterate"
        ));
    }
    let completed = from_na(&z_old.expect("at least one iteration")).mapv(|v| v.clamp(-1.0, 1.0));
    Ok(FitResult {
        completed,
        params: None,
        objective_trace: trace,
        method: "nuclear-norm".into(),
        warnings,
        iterations,
        cell_visits: iterations as u64 * m.observed_count() as u64,
    })
}

/// Pick the threshold on a validation split carved from the training cells,
/// then refit on everything.
pub fn fit_nuclear_norm_cv(
    m: &ScoreMatrix,
    grid: &[f64],
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<FitResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty regularization grid".into()));
    }
    let mut pairs = m.mask().observed_pairs();
    if pairs.len() < 2 {
        return Err(Error::EmptyObservations("training cells for validation split"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // Fisher-Yates
    for idx in (1..pairs.len()).rev() {
        pairs.swap(idx, rng.random_range(0..=idx));
    }
    let n_val = ((pairs.len() as f64 * NUCLEAR_VALIDATION_FRACTION).round() as usize)
        .clamp(1, pairs.len() - 1);
    let (val_pairs, _train_pairs) = pairs.split_at(n_val);

    let mut train_mask = m.mask().clone();
    for &(i, j) in val_pairs {
        train_mask.set(i, j, false);
    }
    let train_matrix = m.restricted(&train_mask);

    let mut best: Option<(f64, f64)> = None; // (rmse, reg)
    for &reg in grid {
        let fit = fit_nuclear_norm(&train_matrix, reg, max_iters, tol)?;
        let mse: f64 = val_pairs
            .iter()
            .map(|&(i, j)| {
                let r = m.values()[[i, j]] - fit.completed[[i, j]];
                r * r
            })
            .sum::<f64>()
            / val_pairs.len() as f64;
        let rmse = mse.sqrt();
        if best.is_none_or(|(b, _)| rmse < b) {
            best = Some((rmse, reg));
        }
    }
    let (_, reg) = best.expect("non-empty grid");
    let mut fit = fit_nuclear_norm(m, reg, max_iters, tol)?;
    fit.warnings
        .push(format!("selected reg={reg} on a {n_val}-cell validation split"));
    Ok(fit)
}

/// Truncated SVD of the matrix with unobserved cells imputed by the observed
/// mean.
pub fn fit_svd_baseline(m: &ScoreMatrix, rank: usize) -> Result<FitResult> {
    fit_svd_baseline_weighted(m, rank, None)
}

pub(crate) fn fit_svd_baseline_weighted(
    m: &ScoreMatrix,
    rank: usize,
    weights: Option<&Array2<f64>>,
) -> Result<FitResult> {
    if m.observed_count() == 0 {
        return Err(Error::EmptyObservations("training cells"));
    }
    if rank == 0 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    let mut wsum = 0.0;
    let mut vsum = 0.0;
    for (i, j) in m.mask().observed_pairs() {
        let w = weights.map_or(1.0, |w| w[[i, j]]);
        wsum += w;
        vsum += w * m.values()[[i, j]];
    }
    let mean = vsum / wsum;
    let imputed = DMatrix::from_fn(m.n_agents(), m.n_items(), |i, j| {
        if m.mask().is_observed(i, j) {
            m.values()[[i, j]]
        } else {
            mean
        }
    });
    let recon = truncated_svd_reconstruct(&imputed, rank);
    Ok(FitResult {
        completed: from_na(&recon).mapv(|v| v.clamp(-1.0, 1.0)),
        params: None,
        objective_trace: Vec::new(),
        method: "svd".into(),
        warnings: Vec::new(),
        iterations: 1,
        cell_visits: m.observed_count() as u64,
    })
}

/// Unconstrained rank-r factorization S ≈ U Vᵀ by alternating ridge least
/// squares over the observed cells.
pub fn fit_uv(m: &ScoreMatrix, rank: usize, reg: f64, seed: u64) -> Result<FitResult> {
    fit_uv_weighted(m, rank, reg, seed, None)
}

pub(crate) fn fit_uv_weighted(
    m: &ScoreMatrix,
    rank: usize,
    reg: f64,
    seed: u64,
    weights: Option<&Array2<f64>>,
) -> Result<FitResult> {
    if m.observed_count() == 0 {
        return Err(Error::EmptyObservations("training cells"));
    }
    if rank == 0 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    if reg < 0.0 {
        return Err(Error::InvalidConfig("reg must be non-negative".into()));
    }
    let (k, j) = (m.n_agents(), m.n_items());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut u = DMatrix::from_fn(k, rank, |_, _| 0.1 * (rng.random::<f64>() - 0.5));
    let mut v = DMatrix::from_fn(j, rank, |_, _| 0.1 * (rng.random::<f64>() - 0.5));

    let cell_weight =
        |i: usize, jj: usize| -> f64 { weights.map_or(1.0, |w| w[[i, jj]]) };

    let max_iters = 500;
    let tol = 1e-10;
    let mut trace: Vec<f64> = Vec::new();
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut cell_visits: u64 = 0;

    let objective = |u: &DMatrix<f64>, v: &DMatrix<f64>| -> f64 {
        let mut obj = 0.0;
        for (i, jj) in m.mask().observed_pairs() {
            let w = cell_weight(i, jj);
            if w > 0.0 {
                let pred: f64 = (0..rank).map(|r| u[(i, r)] * v[(jj, r)]).sum();
                let res = m.values()[[i, jj]] - pred;
                obj += w * res * res;
            }
        }
        obj + reg * (u.norm_squared() + v.norm_squared())
    };

    for _ in 0..max_iters {
        iterations += 1;
        // rows of U given V
        for i in 0..k {
            let mut gram = DMatrix::<f64>::identity(rank, rank) * reg;
            let mut rhs = DVector::<f64>::zeros(rank);
            for jj in 0..j {
                if m.mask().is_observed(i, jj) {
                    let w = cell_weight(i, jj);
                    if w > 0.0 {
                        cell_visits += 1;
                        let vr = v.row(jj).transpose();
                        gram += w * &vr * vr.transpose();
                        rhs += w * m.values()[[i, jj]] * vr;
                    }
                }
            }
            match gram.lu().solve(&rhs) {
                Some(sol) => u.row_mut(i).copy_from(&sol.transpose()),
                None => {
                    u.row_mut(i).fill(0.0);
                    warnings.push(format!("agent {i} row solve singular; factor zeroed"));
                }
            }
        }
        // rows of V given U
        for jj in 0..j {
            let mut gram = DMatrix::<f64>::identity(rank, rank) * reg;
            let mut rhs = DVector::<f64>::zeros(rank);
            for i in 0..k {
                if m.mask().is_observed(i, jj) {
                    let w = cell_weight(i, jj);
                    if w > 0.0 {
                        cell_visits += 1;
                        let ur = u.row(i).transpose();
                        gram += w * &ur * ur.transpose();
                        rhs += w * m.values()[[i, jj]] * ur;
                    }
                }
            }
            match gram.lu().solve(&rhs) {
                Some(sol) => v.row_mut(jj).copy_from(&sol.transpose()),
                None => {
                    v.row_mut(jj).fill(0.0);
                    warnings.push(format!("item {jj} row solve singular; factor zeroed"));
                }
            }
        }
        // rebalance factor scales: the product is unchanged and the ridge
        // term is minimized over the scaling family, so the objective can
        // only drop
        let (nu, nv) = (u.norm(), v.norm());
        if nu > 0.0 && nv > 0.0 {
            let c = (nv / nu).sqrt();
            u *= c;
            v /= c;
        }
        let obj = objective(&u, &v);
        if let Some(&prev) = trace.last() {
            if obj > prev + 1e-8 * prev.max(1.0) {
                return Err(Error::Divergence(format!(
                    "uv objective rose from {prev} to {obj}"
                )));
            }
            if (prev - obj).abs() <= tol * prev.max(1.0) {
                trace.push(obj);
                break;
            }
        }
        trace.push(obj);
    }

    let completed = from_na(&(&u * v.transpose())).mapv(|x| x.clamp(-1.0, 1.0));
    Ok(FitResult {
        completed,
        params: None,
        objective_trace: trace,
        method: "uv".into(),
        warnings,
        iterations,
        cell_visits,
    })
}
