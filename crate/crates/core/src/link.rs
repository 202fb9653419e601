//! Link transforms between the bounded score scale and unbounded model space.
//!
//! Scores are clamped to [-clip_bound, clip_bound] first, then rescaled to
//! probabilities p = (s + 1) / 2 for the probit and logit maps. The identity
//! link returns the clamped score unchanged.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ObservationMask;

pub const DEFAULT_CLIP_BOUND: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Identity,
    Probit,
    Logit,
}

impl LinkKind {
    pub const ALL: [LinkKind; 3] = [LinkKind::Identity, LinkKind::Probit, LinkKind::Logit];

    pub fn name(&self) -> &'static str {
        match self {
            LinkKind::Identity => "identity",
            LinkKind::Probit => "probit",
            LinkKind::Logit => "logit",
        }
    }
}

impl std::fmt::Display for LinkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(LinkKind::Identity),
            "probit" => Ok(LinkKind::Probit),
            "logit" => Ok(LinkKind::Logit),
            other => Err(Error::InvalidConfig(format!(
                "unknown link {other:?} (expected identity|probit|logit)"
            ))),
        }
    }
}

/// A link kind together with its clip bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub kind: LinkKind,
    pub clip_bound: f64,
}

impl Default for Link {
    fn default() -> Self {
        Link {
            kind: LinkKind::Identity,
            clip_bound: DEFAULT_CLIP_BOUND,
        }
    }
}

impl Link {
    pub fn new(kind: LinkKind, clip_bound: f64) -> Result<Self> {
        if !(0.0 < clip_bound && clip_bound < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "clip bound must be in (0, 1), got {clip_bound}"
            )));
        }
        Ok(Link { kind, clip_bound })
    }

    pub fn identity() -> Self {
        Link::default()
    }

    pub fn probit() -> Self {
        Link {
            kind: LinkKind::Probit,
            clip_bound: DEFAULT_CLIP_BOUND,
        }
    }

    pub fn logit() -> Self {
        Link {
            kind: LinkKind::Logit,
            clip_bound: DEFAULT_CLIP_BOUND,
        }
    }

    /// Map a bounded score into link space. Always finite thanks to the clip.
    pub fn apply(&self, s: f64) -> f64 {
        let sc = s.clamp(-self.clip_bound, self.clip_bound);
        match self.kind {
            LinkKind::Identity => sc,
            LinkKind::Probit => norm_ppf((sc + 1.0) / 2.0),
            LinkKind::Logit => {
                let p = (sc + 1.0) / 2.0;
                (p / (1.0 - p)).ln()
            }
        }
    }

    /// Map a link-space value back to the score scale; exact inverse of
    /// `apply` on the non-clipped range, output always within the clip bound.
    pub fn invert(&self, t: f64) -> f64 {
        let s = match self.kind {
            LinkKind::Identity => t,
            LinkKind::Probit => 2.0 * norm_cdf(t) - 1.0,
            // 2 * sigmoid(t) - 1
            LinkKind::Logit => (t / 2.0).tanh(),
        };
        s.clamp(-self.clip_bound, self.clip_bound)
    }

    /// Transform observed cells; unobserved cells are left at zero and remain
    /// excluded by the caller's mask.
    pub fn apply_matrix(&self, values: &Array2<f64>, mask: &ObservationMask) -> Array2<f64> {
        let mut out = Array2::zeros(values.dim());
        for ((i, j), v) in values.indexed_iter() {
            if mask.is_observed(i, j) {
                out[[i, j]] = self.apply(*v);
            }
        }
        out
    }

    /// Inverse-transform a dense link-space matrix back to the score scale.
    pub fn invert_matrix(&self, values: &Array2<f64>) -> Array2<f64> {
        values.mapv(|t| self.invert(t))
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function (Wichura's PPND16 rational
/// approximation, full double precision over (0, 1)).
pub fn norm_ppf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "norm_ppf domain is (0, 1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&PPND_A, r) / poly(&PPND_B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&PPND_C, r) / poly(&PPND_D, r)
    } else {
        let r = r - 5.0;
        poly(&PPND_E, r) / poly(&PPND_F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const PPND_A: [f64; 8] = [
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
const PPND_B: [f64; 8] = [
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
const PPND_C: [f64; 8] = [
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
const PPND_D: [f64; 8] = [
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
const PPND_E: [f64; 8] = [
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const PPND_F: [f64; 8] = [
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference values computed with mpmath at 30 digits.
    const PPF_CASES: [(f64, f64); 6] = [
        (0.995, 2.5758293035489008),
        (0.975, 1.9599639845400542),
        (0.75, 0.6744897501960817),
        (0.59, 0.22754497664114941),
        (0.3, -0.5244005127080408),
        (0.0001, -3.7190164854556806),
    ];
    const CDF_CASES: [(f64, f64); 2] = [(1.0, 0.8413447460685429), (2.0, 0.9772498680518208)];

    #[test]
    fn norm_ppf_matches_reference() {
        for (p, expected) in PPF_CASES {
            assert!(
                (norm_ppf(p) - expected).abs() < 1e-14,
                "ppf({p}) = {} != {expected}",
                norm_ppf(p)
            );
        }
        assert_eq!(norm_ppf(0.5), 0.0);
    }

    #[test]
    fn norm_cdf_matches_reference() {
        for (x, expected) in CDF_CASES {
            assert!((norm_cdf(x) - expected).abs() < 1e-15);
        }
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn zero_is_fixed_point_of_all_links() {
        for kind in LinkKind::ALL {
            let link = Link::new(kind, DEFAULT_CLIP_BOUND).unwrap();
            assert_eq!(link.apply(0.0), 0.0, "{kind} at 0");
            assert_eq!(link.invert(0.0), 0.0, "{kind} inverse at 0");
        }
    }

    #[test]
    fn logit_at_clip_bound() {
        // log(0.995/0.005) = ln(199)
        let link = Link::logit();
        assert!((link.apply(0.99) - 5.293304824724492).abs() < 1e-12);
        // values beyond the bound clamp first
        assert_eq!(link.apply(1.0), link.apply(0.99));
        assert!((link.invert(5.293304824724492) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn probit_at_clip_bound() {
        let link = Link::probit();
        assert!((link.apply(0.99) - 2.5758293035489008).abs() < 1e-12);
        assert!((link.invert(2.5758293035489008) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn clip_bound_must_be_in_open_unit_interval() {
        assert!(Link::new(LinkKind::Logit, 1.0).is_err());
        assert!(Link::new(LinkKind::Logit, 0.0).is_err());
        assert!(Link::new(LinkKind::Logit, 0.999).is_ok());
    }

    #[test]
    fn apply_matrix_skips_unobserved() {
        let values = ndarray::array![[0.5, 0.9], [0.0, -0.5]];
        let mask = ObservationMask::from_pairs(2, 2, &[(0, 0), (1, 1)]).unwrap();
        let out = Link::logit().apply_matrix(&values, &mask);
        assert!(out[[0, 0]] > 0.0);
        assert_eq!(out[[0, 1]], 0.0);
        assert!(out[[1, 1]] < 0.0);
    }

    proptest! {
        #[test]
        fn round_trip_identity_within_clip(s in -0.99f64..=0.99) {
            for kind in LinkKind::ALL {
                let link = Link::new(kind, DEFAULT_CLIP_BOUND).unwrap();
                let back = link.invert(link.apply(s));
                prop_assert!((back - s).abs() < 1e-12, "{kind}: {s} -> {back}");
            }
        }

        #[test]
        fn round_trip_clamps_outside(s in -1.0f64..=1.0) {
            let clamped = s.clamp(-0.99, 0.99);
            for kind in LinkKind::ALL {
                let link = Link::new(kind, DEFAULT_CLIP_BOUND).unwrap();
                let back = link.invert(link.apply(s));
                prop_assert!((back - clamped).abs() < 1e-12);
            }
        }

        #[test]
        fn links_strictly_increasing(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
            prop_assume!((a.clamp(-0.99, 0.99) - b.clamp(-0.99, 0.99)).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            for kind in LinkKind::ALL {
                let link = Link::new(kind, DEFAULT_CLIP_BOUND).unwrap();
                prop_assert!(link.apply(lo) < link.apply(hi), "{kind} not increasing");
            }
        }
    }
}
