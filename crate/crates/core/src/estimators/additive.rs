//! Ridge least-squares additive fits via alternating exact row/column solves.
//!
//! The objective is Σ_Ω w_ij (s_ij − (θ_i − b_j))² + λ(‖θ‖² + ‖b‖²) under the
//! gauge constraint Σ_j b_j = 0. The θ step is the exact unconstrained row
//! solve; the b step minimizes over the Σb = 0 slice, which is the plain
//! column solve minus a degree-weighted shift (the KKT multiplier). Each
//! half-step is an exact block minimization, so the objective never
//! increases, the iterate always satisfies the gauge, and the fixed point is
//! the solution of the constrained normal equations.

use ndarray::Array2;

use super::{FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::link::LinkKind;
use crate::types::{AdditiveParams, ObservationMask, ScoreMatrix};

pub(crate) struct AdditiveFit {
    pub params: AdditiveParams,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub cell_visits: u64,
    pub warnings: Vec<String>,
}

/// Observed cells grouped by row and by column: (other index, value, weight).
struct CellLists {
    rows: Vec<Vec<(usize, f64, f64)>>,
    cols: Vec<Vec<(usize, f64, f64)>>,
}

fn build_cells(
    values: &Array2<f64>,
    mask: &ObservationMask,
    weights: Option<&Array2<f64>>,
) -> CellLists {
    let (k, j) = values.dim();
    let mut rows = vec![Vec::new(); k];
    let mut cols = vec![Vec::new(); j];
    for ((i, jj), &v) in values.indexed_iter() {
        if mask.is_observed(i, jj) {
            let w = weights.map_or(1.0, |w| w[[i, jj]]);
            if w > 0.0 {
                rows[i].push((jj, v, w));
                cols[jj].push((i, v, w));
            }
        }
    }
    CellLists { rows, cols }
}

/// Alternating minimization of the weighted ridge objective on arbitrary
/// (possibly link-transformed, unbounded) values.
pub(crate) fn solve_additive(
    values: &Array2<f64>,
    mask: &ObservationMask,
    weights: Option<&Array2<f64>>,
    cfg: &FitConfig,
) -> Result<AdditiveFit> {
    if cfg.lambda < 0.0 {
        return Err(Error::InvalidConfig("lambda must be non-negative".into()));
    }
    if cfg.tol <= 0.0 {
        return Err(Error::InvalidConfig("tol must be positive".into()));
    }
    let (k, j) = values.dim();
    let cells = build_cells(values, mask, weights);
    let nnz: usize = cells.rows.iter().map(Vec::len).sum();
    if nnz == 0 {
        return Err(Error::EmptyObservations("training cells"));
    }

    let mut warnings = Vec::new();
    for (i, row) in cells.rows.iter().enumerate() {
        if row.is_empty() {
            warnings.push(format!("agent {i} has no observations; ability pinned to 0"));
        }
    }
    for (jj, col) in cells.cols.iter().enumerate() {
        if col.is_empty() {
            warnings.push(format!("item {jj} has no observations; difficulty pinned to 0"));
        }
    }

    // start from per-agent observed means, items at zero
    let mut theta: Vec<f64> = cells
        .rows
        .iter()
        .map(|row| {
            let wsum: f64 = row.iter().map(|&(_, _, w)| w).sum();
            if wsum > 0.0 {
                row.iter().map(|&(_, v, w)| w * v).sum::<f64>() / wsum
            } else {
                0.0
            }
        })
        .collect();
    let mut b = vec![0.0f64; j];

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut cell_visits: u64 = 0;
    let mut col_num = vec![0.0f64; j];
    let mut col_den = vec![0.0f64; j];
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let mut max_change = 0.0f64;
        for (i, row) in cells.rows.iter().enumerate() {
            let mut num = 0.0;
            let mut den = cfg.lambda;
            for &(jj, v, w) in row {
                num += w * (v + b[jj]);
                den += w;
                cell_visits += 1;
            }
            let new = if den > 0.0 { num / den } else { 0.0 };
            max_change = max_change.max((new - theta[i]).abs());
            theta[i] = new;
        }
        // exact b minimization on the Σb = 0 slice: plain column solve minus
        // the multiplier shift ν / (deg_j + λ); items with no observations
        // stay pinned at zero and sit outside the constraint
        let mut nu_num = 0.0;
        let mut nu_den = 0.0;
        for (jj, col) in cells.cols.iter().enumerate() {
            if col.is_empty() {
                col_num[jj] = 0.0;
                col_den[jj] = 0.0;
                continue;
            }
            let mut num = 0.0;
            let mut den = cfg.lambda;
            for &(i, v, w) in col {
                num += w * (theta[i] - v);
                den += w;
                cell_visits += 1;
            }
            col_num[jj] = num / den;
            col_den[jj] = den;
            nu_num += num / den;
            nu_den += 1.0 / den;
        }
        let nu = if nu_den > 0.0 { nu_num / nu_den } else { 0.0 };
        for jj in 0..j {
            let new = if col_den[jj] > 0.0 {
                col_num[jj] - nu / col_den[jj]
            } else {
                0.0
            };
            max_change = max_change.max((new - b[jj]).abs());
            b[jj] = new;
        }
        trace.push(objective(&cells, &theta, &b, cfg.lambda));
        if max_change < cfg.tol {
            break;
        }
    }

    let params = AdditiveParams::new(
        ndarray::Array1::from_vec(theta),
        ndarray::Array1::from_vec(b),
        cfg.lambda,
    )?;
    debug_assert_eq!(params.n_agents(), k);
    debug_assert!(params.gauge_residual() < 1e-9);
    Ok(AdditiveFit {
        params,
        trace,
        iterations,
        cell_visits,
        warnings,
    })
}

fn objective(cells: &CellLists, theta: &[f64], b: &[f64], lambda: f64) -> f64 {
    let mut obj = 0.0;
    for (i, row) in cells.rows.iter().enumerate() {
        for &(jj, v, w) in row {
            let r = v - (theta[i] - b[jj]);
            obj += w * r * r;
        }
    }
    obj + lambda
        * (theta.iter().map(|t| t * t).sum::<f64>() + b.iter().map(|x| x * x).sum::<f64>())
}

/// Additive fit on the raw score scale; predictions clamped to [-1, 1].
pub fn fit_clipped_linear(m: &ScoreMatrix, cfg: &FitConfig) -> Result<FitResult> {
    fit_clipped_linear_weighted(m, cfg, None)
}

pub(crate) fn fit_clipped_linear_weighted(
    m: &ScoreMatrix,
    cfg: &FitConfig,
    weights: Option<&Array2<f64>>,
) -> Result<FitResult> {
    let fit = solve_additive(m.values(), m.mask(), weights, cfg)?;
    let completed = fit.params.predict(true);
    Ok(FitResult {
        completed,
        params: Some(fit.params),
        objective_trace: fit.trace,
        method: "clipped-linear".into(),
        warnings: fit.warnings,
        iterations: fit.iterations,
        cell_visits: fit.cell_visits,
    })
}

/// Additive fit in probit or logit link space; predictions are mapped back to
/// the score scale with the inverse link.
pub fn fit_rasch_link(m: &ScoreMatrix, cfg: &FitConfig) -> Result<FitResult> {
    fit_rasch_link_weighted(m, cfg, None)
}

pub(crate) fn fit_rasch_link_weighted(
    m: &ScoreMatrix,
    cfg: &FitConfig,
    weights: Option<&Array2<f64>>,
) -> Result<FitResult> {
    if cfg.link.kind == LinkKind::Identity {
        return Err(Error::InvalidConfig(
            "rasch fit expects a probit or logit link; use the clipped-linear fit for identity"
                .into(),
        ));
    }
    let transformed = cfg.link.apply_matrix(m.values(), m.mask());
    let fit = solve_additive(&transformed, m.mask(), weights, cfg)?;
    let completed = cfg.link.invert_matrix(&fit.params.predict(false));
    Ok(FitResult {
        completed,
        params: Some(fit.params),
        objective_trace: fit.trace,
        method: format!("rasch-{}", cfg.link.kind),
        warnings: fit.warnings,
        iterations: fit.iterations,
        cell_visits: fit.cell_visits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::Link;
    use crate::types::ObservationMask;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn additive_matrix(theta: &Array1<f64>, b: &Array1<f64>) -> ScoreMatrix {
        let params = AdditiveParams::new(theta.clone(), b.clone(), 0.0).unwrap();
        ScoreMatrix::dense(params.predict(true), ids("a", theta.len()), ids("t", b.len())).unwrap()
    }

    /// Direct dense solve of the same objective: the KKT system of the
    /// gauge-constrained ridge problem, one multiplier row for Σb = 0.
    fn normal_equations_oracle(
        values: &Array2<f64>,
        mask: &ObservationMask,
        weights: Option<&Array2<f64>>,
        lambda: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let (k, j) = values.dim();
        let n = k + j + 1;
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut rhs = nalgebra::DVector::<f64>::zeros(n);
        for d in 0..(k + j) {
            a[(d, d)] = lambda;
        }
        for ((i, jj), &v) in values.indexed_iter() {
            if mask.is_observed(i, jj) {
                let w = weights.map_or(1.0, |w| w[[i, jj]]);
                a[(i, i)] += w;
                a[(i, k + jj)] -= w;
                a[(k + jj, i)] -= w;
                a[(k + jj, k + jj)] += w;
                rhs[i] += w * v;
                rhs[k + jj] -= w * v;
            }
        }
        for jj in 0..j {
            a[(k + jj, k + j)] = 1.0;
            a[(k + j, k + jj)] = 1.0;
        }
        let sol = a.lu().solve(&rhs).expect("oracle system solvable");
        let theta: Vec<f64> = (0..k).map(|i| sol[i]).collect();
        let b: Vec<f64> = (0..j).map(|jj| sol[k + jj]).collect();
        (theta, b)
    }

    fn random_sparse_instance(seed: u64) -> ScoreMatrix {
        let (k, j) = (5, 8);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let theta = Array1::from_iter((0..k).map(|_| rng.random_range(-0.5..0.5)));
        let b = Array1::from_iter((0..j).map(|_| rng.random_range(-0.3..0.3)));
        let mut values = Array2::zeros((k, j));
        let mut pattern = Array2::from_elem((k, j), false);
        for i in 0..k {
            for jj in 0..j {
                if rng.random::<f64>() < 0.6 {
                    pattern[[i, jj]] = true;
                }
            }
        }
        // item 0 sees every agent and every item has one anchor agent, so
        // the observation graph is connected and nothing is starved
        for i in 0..k {
            pattern[[i, 0]] = true;
        }
        for jj in 0..j {
            pattern[[jj % k, jj]] = true;
        }
        for i in 0..k {
            for jj in 0..j {
                if pattern[[i, jj]] {
                    values[[i, jj]] =
                        (theta[i] - b[jj] + 0.1 * (rng.random::<f64>() - 0.5)).clamp(-1.0, 1.0);
                }
            }
        }
        ScoreMatrix::new(values, ObservationMask::new(pattern), ids("a", k), ids("t", j)).unwrap()
    }

    #[test]
    fn recovers_noiseless_additive_data() {
        let theta = Array1::linspace(-0.4, 0.6, 30);
        let b = Array1::linspace(-0.3, 0.3, 200);
        let m = additive_matrix(&theta, &b);
        let fit = fit_clipped_linear(&m, &FitConfig::default()).unwrap();
        let params = fit.params.unwrap();
        let truth_centered = &theta - theta.mean().unwrap();
        let got_centered = &params.theta - params.theta.mean().unwrap();
        for (a, c) in got_centered.iter().zip(truth_centered.iter()) {
            assert!((a - c).abs() < 1e-3);
        }
        assert!(params.gauge_residual() < 1e-9);
    }

    /// Tight enough that the distance to the optimum is well below the 1e-8
    /// comparison even on slowly mixing sparse instances.
    fn oracle_grade_config() -> FitConfig {
        FitConfig {
            tol: 1e-13,
            max_iters: 20_000,
            ..FitConfig::default()
        }
    }

    #[test]
    fn matches_dense_normal_equations_on_sparse_instances() {
        let cfg = oracle_grade_config();
        for seed in 0..20 {
            let m = random_sparse_instance(seed);
            let fit = solve_additive(m.values(), m.mask(), None, &cfg).unwrap();
            let (theta, b) = normal_equations_oracle(m.values(), m.mask(), None, cfg.lambda);
            for (got, want) in fit.params.theta.iter().zip(&theta) {
                assert!((got - want).abs() < 1e-8, "seed {seed}: theta {got} vs {want}");
            }
            for (got, want) in fit.params.b.iter().zip(&b) {
                assert!((got - want).abs() < 1e-8, "seed {seed}: b {got} vs {want}");
            }
        }
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        for seed in [3, 17, 99] {
            let m = random_sparse_instance(seed);
            let fit = fit_clipped_linear(&m, &FitConfig::default()).unwrap();
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "trace increased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn gauge_shift_leaves_predictions_unchanged() {
        let m = random_sparse_instance(7);
        let fit = fit_clipped_linear(&m, &FitConfig::default()).unwrap();
        let params = fit.params.unwrap();
        let shifted = AdditiveParams::new(&params.theta + 0.37, &params.b + 0.37, params.lambda)
            .unwrap();
        let d = &params.predict(false) - &shifted.predict(false);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn empty_observations_error() {
        let m = ScoreMatrix::new(
            Array2::zeros((2, 2)),
            ObservationMask::empty(2, 2),
            ids("a", 2),
            ids("t", 2),
        )
        .unwrap();
        assert!(matches!(
            fit_clipped_linear(&m, &FitConfig::default()),
            Err(Error::EmptyObservations(_))
        ));
    }

    #[test]
    fn starved_agent_is_pinned_with_warning() {
        let values = ndarray::array![[0.2, 0.4], [0.0, 0.0]];
        let mask = ObservationMask::from_pairs(2, 2, &[(0, 0), (0, 1)]).unwrap();
        let m = ScoreMatrix::new(values, mask, ids("a", 2), ids("t", 2)).unwrap();
        let fit = fit_clipped_linear(&m, &FitConfig::default()).unwrap();
        assert!(fit.warnings.iter().any(|w| w.contains("agent 1")));
        // agent 1 still gets the gauge shift applied to everyone, so its raw
        // pinned value is 0 before recentering
        let params = fit.params.unwrap();
        assert!(params.theta[1].abs() < 1.0);
    }

    #[test]
    fn cell_visits_scale_linearly_in_observed_count() {
        let m = random_sparse_instance(11);
        let nnz = m.observed_count() as u64;
        let fit = fit_clipped_linear(&m, &FitConfig::default()).unwrap();
        assert_eq!(fit.cell_visits, 2 * nnz * fit.iterations as u64);
    }

    #[test]
    fn weighted_fit_with_unit_weights_matches_unweighted() {
        let m = random_sparse_instance(23);
        let cfg = FitConfig::default();
        let plain = fit_clipped_linear(&m, &cfg).unwrap();
        let ones = Array2::from_elem(m.values().dim(), 1.0);
        let weighted = fit_clipped_linear_weighted(&m, &cfg, Some(&ones)).unwrap();
        let pa = plain.params.unwrap();
        let pb = weighted.params.unwrap();
        for (x, y) in pa.theta.iter().zip(pb.theta.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn integer_weights_equal_duplicated_observations() {
        // weight 3 on a cell must produce the same solution as listing the
        // cell three times in the objective
        let values = ndarray::array![[0.3, -0.2], [0.1, 0.4]];
        let mask = ObservationMask::full(2, 2);
        let mut weights = Array2::from_elem((2, 2), 1.0);
        weights[[0, 0]] = 3.0;
        let cfg = oracle_grade_config();
        let fit = solve_additive(&values, &mask, Some(&weights), &cfg).unwrap();
        let (theta, b) = normal_equations_oracle(&values, &mask, Some(&weights), cfg.lambda);
        for (got, want) in fit.params.theta.iter().zip(&theta) {
            assert!((got - want).abs() < 1e-9);
        }
        for (got, want) in fit.params.b.iter().zip(&b) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn rasch_recovers_data_additive_in_link_space() {
        for link in [Link::probit(), Link::logit()] {
            let theta_l = Array1::linspace(-0.8, 0.9, 12);
            let b_l = Array1::linspace(-0.6, 0.6, 15);
            let t = AdditiveParams::new(theta_l.clone(), b_l.clone(), 0.0)
                .unwrap()
                .predict(false);
            let values = link.invert_matrix(&t);
            let m = ScoreMatrix::dense(values, ids("a", 12), ids("t", 15)).unwrap();
            let cfg = FitConfig {
                link,
                ..FitConfig::default()
            };
            let fit = fit_rasch_link(&m, &cfg).unwrap();
            let params = fit.params.unwrap();
            let want_centered = &theta_l - theta_l.mean().unwrap();
            let got_centered = &params.theta - params.theta.mean().unwrap();
            for (g, w) in got_centered.iter().zip(want_centered.iter()) {
                assert!((g - w).abs() < 1e-6, "{}: {g} vs {w}", fit.method);
            }
        }
    }

    #[test]
    fn rasch_zero_matrix_gives_zero_params() {
        let m = ScoreMatrix::dense(Array2::zeros((4, 5)), ids("a", 4), ids("t", 5)).unwrap();
        for link in [Link::probit(), Link::logit()] {
            let cfg = FitConfig {
                link,
                ..FitConfig::default()
            };
            let fit = fit_rasch_link(&m, &cfg).unwrap();
            let params = fit.params.unwrap();
            assert!(params.theta.iter().all(|v| v.abs() < 1e-9));
            assert!(params.b.iter().all(|v| v.abs() < 1e-9));
            assert!(fit.completed.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn rasch_rejects_identity_link() {
        let m = random_sparse_instance(1);
        let cfg = FitConfig {
            link: Link::identity(),
            ..FitConfig::default()
        };
        assert!(fit_rasch_link(&m, &cfg).is_err());
    }

    #[test]
    fn rasch_preserves_agent_ranking_of_link_space_truth() {
        let link = Link::logit();
        let theta_l = Array1::from_vec(vec![0.9, -0.2, 0.4, -0.7, 0.1]);
        let b_l = Array1::linspace(-0.5, 0.5, 9);
        let t = AdditiveParams::new(theta_l.clone(), b_l, 0.0).unwrap().predict(false);
        let m = ScoreMatrix::dense(link.invert_matrix(&t), ids("a", 5), ids("t", 9)).unwrap();
        let cfg = FitConfig {
            link,
            ..FitConfig::default()
        };
        let fit = fit_rasch_link(&m, &cfg).unwrap();
        let got = fit.params.unwrap().theta;
        let mut truth_order: Vec<usize> = (0..5).collect();
        truth_order.sort_by(|&a, &b| theta_l[a].partial_cmp(&theta_l[b]).unwrap());
        let mut got_order: Vec<usize> = (0..5).collect();
        got_order.sort_by(|&a, &b| got[a].partial_cmp(&got[b]).unwrap());
        assert_eq!(truth_order, got_order);
    }
}
