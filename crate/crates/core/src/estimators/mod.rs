//! Estimators: the clipped-linear additive model and the completion
//! baselines it is compared against.

mod additive;
mod isotonic;
mod lowrank;

pub use additive::{fit_clipped_linear, fit_rasch_link};
pub use isotonic::fit_isotonic_calibrated;
pub use lowrank::{
    fit_nuclear_norm, fit_nuclear_norm_cv, fit_svd_baseline, fit_uv, NUCLEAR_REG_GRID,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::Link;
use crate::types::{AdditiveParams, ScoreMatrix};

pub const DEFAULT_LAMBDA: f64 = 1e-6;
pub const DEFAULT_UV_RANK: usize = 2;
pub const DEFAULT_UV_REG: f64 = 1e-3;
pub const DEFAULT_SVD_RANK: usize = 2;
pub const NUCLEAR_MAX_ITERS: usize = 300;
pub const NUCLEAR_TOL: f64 = 1e-7;

/// Configuration for the additive least-squares fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Convergence threshold on the largest parameter change per iteration.
    pub tol: f64,
    pub link: Link,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: DEFAULT_LAMBDA,
            max_iters: 1000,
            tol: 1e-10,
            link: Link::identity(),
        }
    }
}

/// Output of any estimator: the completed prediction matrix on the score
/// scale, plus additive parameters where the method has them.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Option<AdditiveParams>,
    /// Full K×J predictions on the raw [-1, 1] scale.
    pub completed: Array2<f64>,
    pub objective_trace: Vec<f64>,
    pub method: String,
    pub warnings: Vec<String>,
    pub iterations: usize,
    /// Observed-cell reads performed inside the iteration loops.
    pub cell_visits: u64,
}

impl FitResult {
    /// Per-agent score: the fitted ability when the method has one, else the
    /// row mean of the completed matrix. Under the gauge Σb = 0 the two agree
    /// for additive fits.
    pub fn agent_scores(&self) -> Vec<f64> {
        match &self.params {
            Some(p) => p.theta.to_vec(),
            None => self
                .completed
                .rows()
                .into_iter()
                .map(|r| r.mean().unwrap_or(0.0))
                .collect(),
        }
    }

    /// Per-agent mean of the completed scores over all items (used for the
    /// ranking AUC).
    pub fn agent_mean_scores(&self) -> Vec<f64> {
        self.completed
            .rows()
            .into_iter()
            .map(|r| r.mean().unwrap_or(0.0))
            .collect()
    }
}

/// Estimator selector with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Method {
    ClippedLinear {
        lambda: f64,
    },
    RaschProbit {
        lambda: f64,
        clip_bound: f64,
    },
    RaschLogit {
        lambda: f64,
        clip_bound: f64,
    },
    Isotonic {
        lambda: f64,
    },
    NuclearNorm {
        /// Fixed threshold; `None` selects from the grid on a validation
        /// split.
        reg: Option<f64>,
    },
    Svd {
        rank: usize,
    },
    Uv {
        rank: usize,
        reg: f64,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ClippedLinear { .. } => "clipped-linear",
            Method::RaschProbit { .. } => "rasch-probit",
            Method::RaschLogit { .. } => "rasch-logit",
            Method::Isotonic { .. } => "isotonic",
            Method::NuclearNorm { .. } => "nuclear-norm",
            Method::Svd { .. } => "svd",
            Method::Uv { .. } => "uv",
        }
    }

    pub fn clipped_linear() -> Self {
        Method::ClippedLinear {
            lambda: DEFAULT_LAMBDA,
        }
    }

    /// All Table-style methods at their defaults.
    pub fn all_defaults() -> Vec<Method> {
        vec![
            Method::ClippedLinear {
                lambda: DEFAULT_LAMBDA,
            },
            Method::Isotonic {
                lambda: DEFAULT_LAMBDA,
            },
            Method::RaschProbit {
                lambda: DEFAULT_LAMBDA,
                clip_bound: crate::link::DEFAULT_CLIP_BOUND,
            },
            Method::RaschLogit {
                lambda: DEFAULT_LAMBDA,
                clip_bound: crate::link::DEFAULT_CLIP_BOUND,
            },
            Method::NuclearNorm { reg: None },
            Method::Svd {
                rank: DEFAULT_SVD_RANK,
            },
            Method::Uv {
                rank: DEFAULT_UV_RANK,
                reg: DEFAULT_UV_REG,
            },
        ]
    }

    fn fit_config(&self) -> Result<FitConfig> {
        let cfg = FitConfig::default();
        Ok(match self {
            Method::ClippedLinear { lambda } | Method::Isotonic { lambda } => FitConfig {
                lambda: *lambda,
                ..cfg
            },
            Method::RaschProbit { lambda, clip_bound } => FitConfig {
                lambda: *lambda,
                link: Link::new(crate::link::LinkKind::Probit, *clip_bound)?,
                ..cfg
            },
            Method::RaschLogit { lambda, clip_bound } => FitConfig {
                lambda: *lambda,
                link: Link::new(crate::link::LinkKind::Logit, *clip_bound)?,
                ..cfg
            },
            _ => cfg,
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clipped-linear" => Ok(Method::clipped_linear()),
            "isotonic" => Ok(Method::Isotonic {
                lambda: DEFAULT_LAMBDA,
            }),
            "rasch-probit" => Ok(Method::RaschProbit {
                lambda: DEFAULT_LAMBDA,
                clip_bound: crate::link::DEFAULT_CLIP_BOUND,
            }),
            "rasch-logit" => Ok(Method::RaschLogit {
                lambda: DEFAULT_LAMBDA,
                clip_bound: crate::link::DEFAULT_CLIP_BOUND,
            }),
            "nuclear-norm" => Ok(Method::NuclearNorm { reg: None }),
            "svd" => Ok(Method::Svd {
                rank: DEFAULT_SVD_RANK,
            }),
            "uv" => Ok(Method::Uv {
                rank: DEFAULT_UV_RANK,
                reg: DEFAULT_UV_REG,
            }),
            other => Err(Error::InvalidConfig(format!(
                "unknown method {other:?} (expected clipped-linear|isotonic|rasch-probit|\
                 rasch-logit|nuclear-norm|svd|uv)"
            ))),
        }
    }
}

/// Fit the matrix's observed cells with the chosen method.
pub fn fit_method(m: &ScoreMatrix, method: &Method, seed: u64) -> Result<FitResult> {
    fit_method_weighted(m, method, seed, None)
}

/// Weighted variant used by the bootstrap: a cell drawn `w` times contributes
/// weight `w` in least-squares objectives. Methods without a least-squares
/// core (nuclear norm, SVD) use the weights for inclusion and means only.
pub fn fit_method_weighted(
    m: &ScoreMatrix,
    method: &Method,
    seed: u64,
    weights: Option<&Array2<f64>>,
) -> Result<FitResult> {
    match method {
        Method::ClippedLinear { .. } => {
            additive::fit_clipped_linear_weighted(m, &method.fit_config()?, weights)
        }
        Method::RaschProbit { .. } | Method::RaschLogit { .. } => {
            additive::fit_rasch_link_weighted(m, &method.fit_config()?, weights)
        }
        Method::Isotonic { .. } => {
            isotonic::fit_isotonic_calibrated_weighted(m, &method.fit_config()?, weights)
        }
        Method::NuclearNorm { reg } => match reg {
            Some(reg) => lowrank::fit_nuclear_norm(m, *reg, NUCLEAR_MAX_ITERS, NUCLEAR_TOL),
            None => {
                lowrank::fit_nuclear_norm_cv(m, &NUCLEAR_REG_GRID, NUCLEAR_MAX_ITERS, NUCLEAR_TOL, seed)
            }
        },
        Method::Svd { rank } => lowrank::fit_svd_baseline_weighted(m, *rank, weights),
        Method::Uv { rank, reg } => lowrank::fit_uv_weighted(m, *rank, *reg, seed, weights),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ObservationMask;
    use ndarray::Array1;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::all_defaults() {
            let parsed: Method = m.name().parse().unwrap();
            assert_eq!(parsed.name(), m.name());
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn every_method_completes_a_sparse_matrix() {
        let params = AdditiveParams::new(
            Array1::linspace(-0.4, 0.5, 8),
            Array1::linspace(-0.3, 0.3, 12),
            0.0,
        )
        .unwrap();
        let full = params.predict(true);
        let mut mask = ObservationMask::full(8, 12);
        for (i, j) in [(0, 1), (2, 3), (5, 7), (7, 11), (4, 4)] {
            mask.set(i, j, false);
        }
        let m = ScoreMatrix::new(full, mask, ids("a", 8), ids("t", 12)).unwrap();
        for method in Method::all_defaults() {
            let fit = fit_method(&m, &method, 42).unwrap();
            assert_eq!(fit.completed.dim(), (8, 12));
            assert!(
                fit.completed.iter().all(|v| v.is_finite() && v.abs() <= 1.0),
                "{} produced out-of-range predictions",
                method.name()
            );
        }
    }

    #[test]
    fn fitted_predictions_have_zero_curl_without_clipping() {
        use crate::integrability::{curl, sample_rectangles};
        let params = AdditiveParams::new(
            Array1::linspace(-0.35, 0.5, 10),
            Array1::linspace(-0.25, 0.3, 15),
            0.0,
        )
        .unwrap();
        let m =
            ScoreMatrix::dense(params.predict(true), ids("a", 10), ids("t", 15)).unwrap();
        let fit = fit_clipped_linear(&m, &FitConfig::default()).unwrap();
        let predicted = fit.params.unwrap().predict(false);
        let mask = ObservationMask::full(10, 15);
        for r in sample_rectangles(&mask, 2000, 5).unwrap() {
            assert!(curl(&predicted, &mask, &r).unwrap().abs() <= 1e-12);
        }
    }
}
