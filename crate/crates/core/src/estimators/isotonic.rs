//! Monotone recalibration of clipped-linear predictions.
//!
//! A non-decreasing step function g is fitted to (prediction, observed)
//! training pairs by pool-adjacent-violators, then applied to the completed
//! matrix. On data the additive model already explains, g is the identity on
//! the attained prediction values.

use super::{additive, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::types::ScoreMatrix;
use ndarray::Array2;

/// Weighted non-decreasing step function fitted by PAVA.
#[derive(Debug, Clone)]
pub(crate) struct IsotonicStep {
    /// Left edge of each block (ascending) and its fitted level.
    knots: Vec<(f64, f64)>,
}

impl IsotonicStep {
    /// Fit from (x, y, w) triples. Equal x values are pooled first so the
    /// function is single-valued.
    pub(crate) fn fit(mut points: Vec<(f64, f64, f64)>) -> Result<Self> {
        points.retain(|&(_, _, w)| w > 0.0);
        if points.is_empty() {
            return Err(Error::EmptyObservations("isotonic training pairs"));
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        // pool identical x
        let mut pooled: Vec<(f64, f64, f64)> = Vec::with_capacity(points.len());
        for (x, y, w) in points {
            match pooled.last_mut() {
                Some(last) if last.0 == x => {
                    last.1 += w * y;
                    last.2 += w;
                }
                _ => pooled.push((x, w * y, w)),
            }
        }

        // blocks of (x_left, weighted y sum, weight)
        let mut blocks: Vec<(f64, f64, f64)> = Vec::with_capacity(pooled.len());
        for (x, wy, w) in pooled {
            blocks.push((x, wy, w));
            while blocks.len() >= 2 {
                let last = blocks[blocks.len() - 1];
                let prev = blocks[blocks.len() - 2];
                if prev.1 / prev.2 > last.1 / last.2 {
                    blocks.pop();
                    let merged = (prev.0, prev.1 + last.1, prev.2 + last.2);
                    *blocks.last_mut().unwrap() = merged;
                } else {
                    break;
                }
            }
        }

        Ok(IsotonicStep {
            knots: blocks.into_iter().map(|(x, wy, w)| (x, wy / w)).collect(),
        })
    }

    /// Step evaluation: the level of the last block starting at or before x;
    /// inputs below the first block take the first level.
    pub(crate) fn eval(&self, x: f64) -> f64 {
        match self
            .knots
            .partition_point(|&(left, _)| left <= x)
        {
            0 => self.knots[0].1,
            idx => self.knots[idx - 1].1,
        }
    }
}

pub fn fit_isotonic_calibrated(m: &ScoreMatrix, cfg: &FitConfig) -> Result<FitResult> {
    fit_isotonic_calibrated_weighted(m, cfg, None)
}

pub(crate) fn fit_isotonic_calibrated_weighted(
    m: &ScoreMatrix,
    cfg: &FitConfig,
    weights: Option<&Array2<f64>>,
) -> Result<FitResult> {
    let base = additive::fit_clipped_linear_weighted(m, cfg, weights)?;
    let mut points = Vec::with_capacity(m.observed_count());
    for ((i, j), &v) in m.values().indexed_iter() {
        if m.mask().is_observed(i, j) {
            let w = weights.map_or(1.0, |w| w[[i, j]]);
            points.push((base.completed[[i, j]], v, w));
        }
    }
    let g = IsotonicStep::fit(points)?;
    let completed = base.completed.mapv(|p| g.eval(p));
    Ok(FitResult {
        completed,
        params: base.params,
        objective_trace: base.objective_trace,
        method: "isotonic".into(),
        warnings: base.warnings,
        iterations: base.iterations,
        cell_visits: base.cell_visits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::AdditiveParams;
    use ndarray::Array1;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn two_violating_points_pool_to_their_mean() {
        let g = IsotonicStep::fit(vec![(0.2, 0.4, 1.0), (0.5, 0.1, 1.0)]).unwrap();
        for x in [-1.0, 0.2, 0.35, 0.5, 1.0] {
            assert!((g.eval(x) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_points_are_kept_as_steps() {
        let g = IsotonicStep::fit(vec![(0.0, 0.1, 1.0), (0.5, 0.3, 1.0), (1.0, 0.9, 1.0)]).unwrap();
        assert_eq!(g.eval(0.0), 0.1);
        assert_eq!(g.eval(0.49), 0.1);
        assert_eq!(g.eval(0.5), 0.3);
        assert_eq!(g.eval(2.0), 0.9);
        assert_eq!(g.eval(-2.0), 0.1);
    }

    #[test]
    fn weights_shift_the_pooled_mean() {
        let g = IsotonicStep::fit(vec![(0.2, 0.4, 3.0), (0.5, 0.0, 1.0)]).unwrap();
        assert!((g.eval(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn identity_on_perfectly_additive_data() {
        let params = AdditiveParams::new(
            Array1::linspace(-0.3, 0.5, 10),
            Array1::linspace(-0.2, 0.2, 12),
            0.0,
        )
        .unwrap();
        let m = ScoreMatrix::dense(params.predict(true), ids("a", 10), ids("t", 12)).unwrap();
        let fit = fit_isotonic_calibrated(&m, &FitConfig::default()).unwrap();
        for ((i, j), &v) in m.values().indexed_iter() {
            assert!(
                (fit.completed[[i, j]] - v).abs() < 1e-6,
                "({i},{j}): {} vs {v}",
                fit.completed[[i, j]]
            );
        }
    }
}
