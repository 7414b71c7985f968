//! Extremal coefficient and F-madogram of the planar Markov model, and the
//! madogram estimator for simulated or observed fields.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geometry::{PlanarSite, Site, SphereSite, Translation};
use crate::markov::{MarkovParams, SpaceTimeField};
use crate::spatial::{ExponentOracle, SmithExponent, SmithParams};
use crate::special::frechet_cdf;

/// Default tolerance for treating two lags as equal.
pub const EXACT_LAG_TOLERANCE: f64 = 1e-9;

/// Spatial part of a lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpaceLag {
    /// `h = x₂ − x₁` in the plane.
    Planar([f64; 2]),
    /// Great-circle angle between two points of the sphere.
    Angle(f64),
}

/// Lag `(l, h)` between `(t₁, x₁)` and `(t₂, x₂)`: `l = t₂ − t₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagSpec {
    pub time_lag: f64,
    pub space: SpaceLag,
}

impl LagSpec {
    pub fn planar(time_lag: f64, h: [f64; 2]) -> Self {
        LagSpec { time_lag, space: SpaceLag::Planar(h) }
    }

    pub fn angle(time_lag: f64, angle: f64) -> Self {
        LagSpec { time_lag, space: SpaceLag::Angle(angle) }
    }

    fn validate(&self) -> Result<()> {
        let finite = self.time_lag.is_finite()
            && match self.space {
                SpaceLag::Planar(h) => h[0].is_finite() && h[1].is_finite(),
                SpaceLag::Angle(a) => a.is_finite() && a >= 0.0,
            };
        if finite {
            Ok(())
        } else {
            Err(Error::validation("lag", format!("{self:?} is not finite")))
        }
    }

    /// The same lag with a non-negative time component.
    fn canonical(&self) -> LagSpec {
        if self.time_lag >= 0.0 {
            return *self;
        }
        let space = match self.space {
            SpaceLag::Planar(h) => SpaceLag::Planar([-h[0], -h[1]]),
            angle => angle,
        };
        LagSpec { time_lag: -self.time_lag, space }
    }
}

/// `θ(l, h) = 𝒱_{0, h−lτ}(1, a^{−l}) + 1 − a^l` for any planar exponent oracle.
pub fn extremal_coefficient_with(
    lag: &LagSpec,
    oracle: &dyn ExponentOracle,
    markov: &MarkovParams<Translation>,
) -> Result<f64> {
    lag.validate()?;
    let lag = lag.canonical();
    let SpaceLag::Planar(h) = lag.space else {
        return Err(Error::validation("lag", "planar model needs a planar space lag"));
    };
    let l = lag.time_lag;
    let a = markov.a();
    let tau = markov.tau();
    let origin = PlanarSite { x1: 0.0, x2: 0.0 };
    let shifted = PlanarSite { x1: h[0] - l * tau[0], x2: h[1] - l * tau[1] };
    let decay = a.powf(l);
    let v = oracle.partials(origin, shifted, 1.0, 1.0 / decay)?.v;
    Ok((v + 1.0 - decay).clamp(1.0, 2.0))
}

/// Extremal coefficient of the Smith-innovation planar model.
pub fn extremal_coefficient(lag: &LagSpec, spatial: &SmithParams, markov: &MarkovParams<Translation>) -> Result<f64> {
    extremal_coefficient_with(lag, &SmithExponent::new(*spatial), markov)
}

/// `ν = (θ − 1) / (2(θ + 1))`.
pub fn theta_to_madogram(theta: f64) -> f64 {
    0.5 - 1.0 / (theta + 1.0)
}

/// `θ = (1 + 2ν) / (1 − 2ν)`.
pub fn madogram_to_theta(nu: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::validation("madogram", format!("must lie in [0, 1/2), got {nu}")));
    }
    Ok((1.0 + 2.0 * nu) / (1.0 - 2.0 * nu))
}

/// F-madogram of the Smith-innovation planar model.
pub fn f_madogram(lag: &LagSpec, spatial: &SmithParams, markov: &MarkovParams<Translation>) -> Result<f64> {
    extremal_coefficient(lag, spatial, markov).map(theta_to_madogram)
}

/// How site and date differences are matched against a lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagMatching {
    pub tolerance: f64,
    /// Optional binning radius for irregular sites; off by default.
    pub bin_radius: Option<f64>,
}

impl Default for LagMatching {
    fn default() -> Self {
        LagMatching {
            tolerance: EXACT_LAG_TOLERANCE,
            bin_radius: None,
        }
    }
}

impl LagMatching {
    fn radius(&self) -> f64 {
        self.bin_radius.map_or(self.tolerance, |r| r.max(self.tolerance))
    }
}

/// Sites whose pairwise differences can be compared with a [`SpaceLag`].
pub trait LagSite: Site {
    fn matches(&self, other: &Self, lag: &SpaceLag, radius: f64) -> Result<bool>;
    fn describe_lag(&self, other: &Self) -> String;
}

impl LagSite for PlanarSite {
    fn matches(&self, other: &Self, lag: &SpaceLag, radius: f64) -> Result<bool> {
        let SpaceLag::Planar(h) = lag else {
            return Err(Error::validation("lag", "planar sites need a planar space lag"));
        };
        let d = other.diff(*self);
        Ok((d[0] - h[0]).hypot(d[1] - h[1]) <= radius)
    }

    fn describe_lag(&self, other: &Self) -> String {
        let d = other.diff(*self);
        format!("({}, {})", d[0], d[1])
    }
}

impl LagSite for SphereSite {
    fn matches(&self, other: &Self, lag: &SpaceLag, radius: f64) -> Result<bool> {
        let SpaceLag::Angle(angle) = lag else {
            return Err(Error::validation("lag", "sphere sites need an angular space lag"));
        };
        Ok((self.angle_to(other) - angle).abs() <= radius)
    }

    fn describe_lag(&self, other: &Self) -> String {
        format!("{}", self.angle_to(other))
    }
}

/// Madogram estimate and the number of pairs behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MadogramEstimate {
    pub nu_hat: f64,
    pub n_pairs: usize,
}

impl MadogramEstimate {
    pub fn theta_hat(&self) -> Result<f64> {
        madogram_to_theta(self.nu_hat)
    }
}

type IndexPairs = Vec<(usize, usize)>;

/// Ordered (first, second) index pairs of `fields`' dates and sites whose
/// differences match `lag`, excluding pairs of an observation with itself.
fn matching_pairs<S: LagSite>(
    field: &SpaceTimeField<S>,
    lag: &LagSpec,
    matching: &LagMatching,
) -> Result<(IndexPairs, IndexPairs)> {
    let radius = matching.radius();
    let dates = field.dates();
    let mut date_pairs = Vec::new();
    for i in 0..dates.len() {
        for j in 0..dates.len() {
            if ((dates[j] - dates[i]) as f64 - lag.time_lag).abs() <= radius {
                date_pairs.push((i, j));
            }
        }
    }
    let sites = field.sites();
    let mut site_pairs = Vec::new();
    for k in 0..sites.len() {
        for l in 0..sites.len() {
            if sites[k].matches(&sites[l], &lag.space, radius)? {
                site_pairs.push((k, l));
            }
        }
    }
    Ok((date_pairs, site_pairs))
}

fn accumulate<S: LagSite>(field: &SpaceTimeField<S>, lag: &LagSpec, matching: &LagMatching) -> Result<(f64, usize)> {
    let (date_pairs, site_pairs) = matching_pairs(field, lag, matching)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(i, j) in &date_pairs {
        for &(k, l) in &site_pairs {
            if i == j && k == l {
                continue;
            }
            sum += 0.5 * (frechet_cdf(field.value(i, k)) - frechet_cdf(field.value(j, l))).abs();
            n += 1;
        }
    }
    Ok((sum, n))
}

fn available_lags<S: LagSite>(field: &SpaceTimeField<S>) -> String {
    let dates = field.dates();
    let sites = field.sites();
    let mut time_lags: BTreeSet<i64> = BTreeSet::new();
    for w in dates.iter() {
        for v in dates.iter() {
            time_lags.insert(v - w);
        }
    }
    let mut space = Vec::new();
    'outer: for k in 0..sites.len() {
        for l in 0..sites.len() {
            let d = sites[k].describe_lag(&sites[l]);
            if !space.contains(&d) {
                space.push(d);
            }
            if space.len() >= 12 {
                space.push("…".to_string());
                break 'outer;
            }
        }
    }
    format!("time lags {time_lags:?}; space lags {}", space.join(", "))
}

/// `ν̂ = mean ½|F(X(t₁, x₁)) − F(X(t₂, x₂))|` over all observation pairs
/// at the requested lag, with `F(z) = e^{−1/z}`.
pub fn empirical_madogram<S: LagSite>(
    field: &SpaceTimeField<S>,
    lag: &LagSpec,
    matching: &LagMatching,
) -> Result<MadogramEstimate> {
    empirical_madogram_pooled(std::slice::from_ref(field), lag, matching)
}

/// Madogram estimate pooling the pairs of several independent fields.
pub fn empirical_madogram_pooled<S: LagSite>(
    fields: &[SpaceTimeField<S>],
    lag: &LagSpec,
    matching: &LagMatching,
) -> Result<MadogramEstimate> {
    lag.validate()?;
    let lag = lag.canonical();
    let mut sum = 0.0;
    let mut n = 0;
    for f in fields {
        let (s, c) = accumulate(f, &lag, matching)?;
        sum += s;
        n += c;
    }
    if n == 0 {
        let avail = fields.first().map_or_else(|| "no fields".to_string(), available_lags);
        return Err(Error::NoMatchingPairs(format!("nothing matches {lag:?}; available: {avail}")));
    }
    Ok(MadogramEstimate {
        nu_hat: sum / n as f64,
        n_pairs: n,
    })
}
