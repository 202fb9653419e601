//! Rectangle-deviation diagnostics.
//!
//! For agents (i, i') and items (j, j') the deviation
//! Δ = s_ij − s_i'j − s_ij' + s_i'j' vanishes for every rectangle exactly
//! when the matrix is additive, so the distribution of |Δ| over sampled
//! rectangles measures how far a matrix sits from the additive manifold and
//! how much a link transform bends it.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{Link, LinkKind};
use crate::stats::{median_sorted, quantile, quantile_sorted};
use crate::types::{ObservationMask, ScoreMatrix};

/// Multiple of the requested count allowed as rejection-sampling attempts.
const REJECTION_CAP_FACTOR: usize = 100;
/// Bootstrap redraws allowed when a resampled matrix admits no rectangle.
const MAX_RESAMPLE_RETRIES: usize = 100;

/// Two agent and two item indices; all four cells must be observed in the
/// matrix under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rectangle {
    pub i: usize,
    pub i2: usize,
    pub j: usize,
    pub j2: usize,
}

impl Rectangle {
    pub fn new(i: usize, i2: usize, j: usize, j2: usize) -> Result<Self> {
        if i == i2 || j == j2 {
            return Err(Error::DegenerateRectangle { i, i2, j, j2 });
        }
        Ok(Rectangle { i, i2, j, j2 })
    }
}

/// Signed rectangle deviation s_ij − s_i'j − s_ij' + s_i'j'.
pub fn curl(values: &Array2<f64>, mask: &ObservationMask, r: &Rectangle) -> Result<f64> {
    let cells = [(r.i, r.j), (r.i2, r.j), (r.i, r.j2), (r.i2, r.j2)];
    if cells.iter().any(|&(i, j)| !mask.is_observed(i, j)) {
        return Err(Error::RectangleUnobserved {
            i: r.i,
            i2: r.i2,
            j: r.j,
            j2: r.j2,
        });
    }
    Ok(values[[r.i, r.j]] - values[[r.i2, r.j]] - values[[r.i, r.j2]] + values[[r.i2, r.j2]])
}

/// Draw `n` rectangles uniformly over valid (fully observed) rectangles by
/// rejection sampling. Deterministic given the seed.
pub fn sample_rectangles(mask: &ObservationMask, n: usize, seed: u64) -> Result<Vec<Rectangle>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_rectangles_with_rng(mask, n, &mut rng)
}

pub(crate) fn sample_rectangles_with_rng<R: Rng>(
    mask: &ObservationMask,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Rectangle>> {
    let (k, j) = mask.dims();
    if k < 2 || j < 2 {
        return Err(Error::Infeasible(format!(
            "a {k}x{j} mask admits no rectangle"
        )));
    }
    let mut rects = Vec::with_capacity(n);
    let cap = n.saturating_mul(REJECTION_CAP_FACTOR);
    let mut attempts = 0usize;
    while rects.len() < n {
        if attempts >= cap {
            return Err(Error::Infeasible(format!(
                "drew only {} of {n} rectangles after {attempts} attempts; \
                 the mask is too sparse for rectangle sampling",
                rects.len()
            )));
        }
        attempts += 1;
        let i = rng.random_range(0..k);
        let i2 = rng.random_range(0..k);
        let jj = rng.random_range(0..j);
        let j2 = rng.random_range(0..j);
        if i == i2 || jj == j2 {
            continue;
        }
        if mask.is_observed(i, jj)
            && mask.is_observed(i2, jj)
            && mask.is_observed(i, j2)
            && mask.is_observed(i2, j2)
        {
            rects.push(Rectangle { i, i2, j: jj, j2 });
        }
    }
    Ok(rects)
}

/// Distribution summary of |Δ| over a rectangle sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurlSummary {
    pub median: f64,
    pub p95: f64,
    pub n_rectangles: usize,
    /// |Δ| values sorted ascending; the empirical CDF sample.
    pub ecdf: Vec<f64>,
}

pub fn curl_summary(
    values: &Array2<f64>,
    mask: &ObservationMask,
    rects: &[Rectangle],
) -> Result<CurlSummary> {
    if rects.is_empty() {
        return Err(Error::EmptyObservations("rectangle sample"));
    }
    let mut abs: Vec<f64> = rects
        .iter()
        .map(|r| curl(values, mask, r).map(f64::abs))
        .collect::<Result<_>>()?;
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(CurlSummary {
        median: median_sorted(&abs),
        p95: quantile_sorted(&abs, 0.95),
        n_rectangles: abs.len(),
        ecdf: abs,
    })
}

/// Per-link curl summaries over one shared rectangle sample, so links are
/// compared on identical rectangles.
pub fn curl_link_ablation(
    m: &ScoreMatrix,
    links: &[Link],
    n_rect: usize,
    seed: u64,
) -> Result<Vec<(Link, CurlSummary)>> {
    let rects = sample_rectangles(m.mask(), n_rect, seed)?;
    links
        .iter()
        .map(|link| {
            let transformed = link.apply_matrix(m.values(), m.mask());
            curl_summary(&transformed, m.mask(), &rects).map(|s| (*link, s))
        })
        .collect()
}

/// One pairwise median-curl difference with its percentile CI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MedianDifference {
    pub link_a: LinkKind,
    pub link_b: LinkKind,
    /// Bootstrap median of the per-iteration (median_a − median_b) values.
    pub point: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl MedianDifference {
    /// The CI excludes zero.
    pub fn significant(&self) -> bool {
        self.ci_lower > 0.0 || self.ci_upper < 0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurlBootstrapResult {
    pub links: Vec<LinkKind>,
    /// Median |Δ| per link on the original matrix (shared rectangle sample).
    pub medians: Vec<f64>,
    pub differences: Vec<MedianDifference>,
    pub n_boot: usize,
    /// Iterations that needed a fresh agent/item redraw before rectangles
    /// could be sampled.
    pub retried_iterations: usize,
}

/// Bootstrap over agents and items with replacement: each iteration resamples
/// rows and columns, draws fresh rectangles on the resampled mask, and
/// records the per-link median |Δ|. CIs are 2.5/97.5 percentile intervals of
/// the per-iteration median differences.
pub fn curl_bootstrap(
    m: &ScoreMatrix,
    links: &[Link],
    n_boot: usize,
    n_rect: usize,
    seed: u64,
) -> Result<CurlBootstrapResult> {
    if links.is_empty() {
        return Err(Error::InvalidConfig("no links given".into()));
    }
    if n_boot == 0 {
        return Err(Error::InvalidConfig("n_boot must be positive".into()));
    }
    let point = curl_link_ablation(m, links, n_rect, seed)?;
    let transformed: Vec<Array2<f64>> = links
        .iter()
        .map(|l| l.apply_matrix(m.values(), m.mask()))
        .collect();

    // Stream `it + 1` per iteration keeps results identical under any
    // parallel schedule; stream 0 is the shared rectangle sample above.
    let iterations: Vec<Result<(Vec<f64>, bool)>> = (0..n_boot)
        .into_par_iter()
        .map(|it| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(it as u64 + 1);
            bootstrap_iteration(&transformed, m.mask(), n_rect, &mut rng)
        })
        .collect();

    let mut per_link_medians: Vec<Vec<f64>> = vec![Vec::with_capacity(n_boot); links.len()];
    let mut retried = 0usize;
    for res in iterations {
        let (medians, was_retried) = res?;
        for (acc, v) in per_link_medians.iter_mut().zip(medians) {
            acc.push(v);
        }
        if was_retried {
            retried += 1;
        }
    }

    let mut differences = Vec::new();
    for a in 0..links.len() {
        for b in (a + 1)..links.len() {
            let diffs: Vec<f64> = per_link_medians[a]
                .iter()
                .zip(&per_link_medians[b])
                .map(|(x, y)| x - y)
                .collect();
            differences.push(MedianDifference {
                link_a: links[a].kind,
                link_b: links[b].kind,
                point: quantile(&diffs, 0.5),
                ci_lower: quantile(&diffs, 0.025),
                ci_upper: quantile(&diffs, 0.975),
            });
        }
    }

    Ok(CurlBootstrapResult {
        links: links.iter().map(|l| l.kind).collect(),
        medians: point.iter().map(|(_, s)| s.median).collect(),
        differences,
        n_boot,
        retried_iterations: retried,
    })
}

/// Resample agents and items with replacement, then compute per-link median
/// |Δ| over freshly drawn rectangles. Returns the medians and whether any
/// redraw was needed.
pub(crate) fn bootstrap_iteration<R: Rng>(
    transformed: &[Array2<f64>],
    mask: &ObservationMask,
    n_rect: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    let (k, j) = mask.dims();
    let mut retried = false;
    for attempt in 0..MAX_RESAMPLE_RETRIES {
        let agent_idx: Vec<usize> = (0..k).map(|_| rng.random_range(0..k)).collect();
        let item_idx: Vec<usize> = (0..j).map(|_| rng.random_range(0..j)).collect();
        let resampled_mask = ObservationMask::new(Array2::from_shape_fn((k, j), |(a, t)| {
            mask.is_observed(agent_idx[a], item_idx[t])
        }));
        let rects = match sample_rectangles_with_rng(&resampled_mask, n_rect, rng) {
            Ok(r) => r,
            Err(_) if attempt + 1 < MAX_RESAMPLE_RETRIES => {
                retried = true;
                continue;
            }
            Err(e) => return Err(e),
        };
        let medians = transformed
            .iter()
            .map(|values| {
                let mut abs: Vec<f64> = rects
                    .iter()
                    .map(|r| {
                        (values[[agent_idx[r.i], item_idx[r.j]]]
                            - values[[agent_idx[r.i2], item_idx[r.j]]]
                            - values[[agent_idx[r.i], item_idx[r.j2]]]
                            + values[[agent_idx[r.i2], item_idx[r.j2]]])
                        .abs()
                    })
                    .collect();
                abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                median_sorted(&abs)
            })
            .collect();
        return Ok((medians, retried));
    }
    unreachable!("retry loop returns on the final attempt");
}
