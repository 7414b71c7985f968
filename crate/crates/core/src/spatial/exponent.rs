//! Exponent functions `𝒱_{x₁…x_M}(z₁…z_M) = −log P(Z(x_m) ≤ z_m ∀m)` of the
//! Smith model.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::PlanarSite;
use crate::quadrature::{integrate_2d, QuadOptions};
use crate::special::{norm_cdf, norm_pdf};

use super::SmithParams;

/// Mahalanobis distances below this use the complete-dependence limit.
pub const COMPLETE_DEPENDENCE_H: f64 = 1e-8;

/// Half-width (in standardized units) added around the sites for quadrature.
const QUAD_RADIUS: f64 = 9.0;

/// Bivariate exponent value and its derivatives in `(z₁, z₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentPartials {
    pub v: f64,
    pub dv_dz1: f64,
    pub dv_dz2: f64,
    pub d2v_dz1dz2: f64,
}

/// Smith bivariate exponent at standardized distance `h`:
/// `V = Φ(w)/z₁ + Φ(v)/z₂` with `w = h/2 + log(z₂/z₁)/h`, `v = h − w`.
///
/// For `h < COMPLETE_DEPENDENCE_H` the limit `V = max(1/z₁, 1/z₂)` is
/// returned. Its derivative is taken from the active branch; on a tie each
/// first partial is the mean of the one-sided derivatives (`−1/(2z²)`), and
/// the mixed partial is zero.
///
/// `z = +∞` is accepted and removes that coordinate.
pub fn smith_exponent_bivariate(z1: f64, z2: f64, h: f64) -> Result<ExponentPartials> {
    if !(h >= 0.0) {
        return Err(Error::validation("Mahalanobis distance", format!("must be non-negative, got {h}")));
    }
    if !(z1 > 0.0 && z2 > 0.0) {
        return Err(Error::validation("exponent arguments", format!("must be positive, got ({z1}, {z2})")));
    }
    if z1.is_infinite() || z2.is_infinite() {
        let (d1, d2) = (univariate_slope(z1), univariate_slope(z2));
        return Ok(ExponentPartials {
            v: 1.0 / z1 + 1.0 / z2,
            dv_dz1: d1,
            dv_dz2: d2,
            d2v_dz1dz2: 0.0,
        });
    }
    if h < COMPLETE_DEPENDENCE_H {
        let (i1, i2) = (1.0 / z1, 1.0 / z2);
        let (dv_dz1, dv_dz2) = if i1 > i2 {
            (-i1 * i1, 0.0)
        } else if i2 > i1 {
            (0.0, -i2 * i2)
        } else {
            (-0.5 * i1 * i1, -0.5 * i2 * i2)
        };
        return Ok(ExponentPartials {
            v: i1.max(i2),
            dv_dz1,
            dv_dz2,
            d2v_dz1dz2: 0.0,
        });
    }
    let w = 0.5 * h + (z2 / z1).ln() / h;
    let v = h - w;
    let (cw, cv) = (norm_cdf(w), norm_cdf(v));
    let (pw, pv) = (norm_pdf(w), norm_pdf(v));
    let (z1s, z2s) = (z1 * z1, z2 * z2);
    Ok(ExponentPartials {
        v: cw / z1 + cv / z2,
        dv_dz1: -(cw / z1s + pw / (h * z1s) - pv / (h * z1 * z2)),
        dv_dz2: -(cv / z2s + pv / (h * z2s) - pw / (h * z1 * z2)),
        d2v_dz1dz2: -(v * pw / (h * h * z1s * z2) + w * pv / (h * h * z1 * z2s)),
    })
}

fn univariate_slope(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        -1.0 / (z * z)
    }
}

/// `𝒱 = ∫ max_m h_Σ(x_m − c)/z_m dc` by iterated adaptive Gauss–Kronrod
/// quadrature, for any number of sites.
///
/// The integral is computed in standardized coordinates `u = L⁻¹(c − x₁)`
/// (`Σ = LLᵀ`), where every storm shape becomes the standard bivariate
/// normal density.
pub fn smith_exponent_numeric(sites: &[PlanarSite], z: &[f64], params: &SmithParams) -> Result<f64> {
    smith_exponent_numeric_with(sites, z, params, QuadOptions { abs_tol: 1e-13, rel_tol: 1e-9, max_intervals: 4000 })
}

fn smith_exponent_numeric_with(sites: &[PlanarSite], z: &[f64], params: &SmithParams, outer: QuadOptions) -> Result<f64> {
    if sites.is_empty() || sites.len() != z.len() {
        return Err(Error::validation(
            "exponent arguments",
            format!("{} sites but {} thresholds", sites.len(), z.len()),
        ));
    }
    if z.iter().any(|&zi| !(zi > 0.0)) {
        return Err(Error::validation("exponent arguments", format!("thresholds must be positive: {z:?}")));
    }
    // points with z = ∞ never attain the max
    let active: Vec<(PlanarSite, f64)> = sites
        .iter()
        .zip(z)
        .filter(|(_, zi)| zi.is_finite())
        .map(|(s, zi)| (*s, *zi))
        .collect();
    match active.len() {
        0 => return Ok(0.0),
        1 => return Ok(1.0 / active[0].1),
        _ => {}
    }
    let (l11, l21, l22) = params.cholesky();
    let origin = active[0].0;
    let centres: Vec<[f64; 2]> = active
        .iter()
        .map(|(s, _)| {
            let d = s.diff(origin);
            let y1 = d[0] / l11;
            [y1, (d[1] - l21 * y1) / l22]
        })
        .collect();
    let log_w: Vec<f64> = active.iter().map(|(_, zi)| -zi.ln() - (2.0 * PI).ln()).collect();
    let lo1 = centres.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min) - QUAD_RADIUS;
    let hi1 = centres.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max) + QUAD_RADIUS;
    let lo2 = centres.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min) - QUAD_RADIUS;
    let hi2 = centres.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max) + QUAD_RADIUS;

    let integrand = |u1: f64, u2: f64| {
        let best = centres
            .iter()
            .zip(&log_w)
            .map(|(c, lw)| {
                let (d1, d2) = (u1 - c[0], u2 - c[1]);
                lw - 0.5 * (d1 * d1 + d2 * d2)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        best.exp()
    };
    let scale = active.iter().map(|(_, zi)| 1.0 / zi).fold(0.0, f64::max);
    let inner = QuadOptions {
        abs_tol: 1e-15 * scale,
        rel_tol: 1e-11,
        max_intervals: 4000,
    };
    let outer = QuadOptions { abs_tol: outer.abs_tol * scale, ..outer };
    integrate_2d(integrand, (lo1, hi1), (lo2, hi2), outer, inner)
        .map(|r| r.value)
        .map_err(|e| match e {
            Error::Numerical { reason, .. } => Error::numerical("Smith exponent quadrature", reason),
            other => other,
        })
}

/// Evaluates exponent functions of a spatial model at unit scale.
pub trait ExponentOracle: Send + Sync {
    /// `𝒱_{sites}(z)` for as many sites as the oracle supports.
    fn exponent(&self, sites: &[PlanarSite], z: &[f64]) -> Result<f64>;

    /// Bivariate exponent and partials at `(x₁, x₂)`.
    fn partials(&self, x1: PlanarSite, x2: PlanarSite, z1: f64, z2: f64) -> Result<ExponentPartials>;
}

/// Smith exponent: closed form up to two sites, quadrature up to
/// `max_dimension`.
#[derive(Debug, Clone, Copy)]
pub struct SmithExponent {
    pub params: SmithParams,
    pub max_dimension: usize,
}

impl SmithExponent {
    pub fn new(params: SmithParams) -> Self {
        SmithExponent { params, max_dimension: 4 }
    }
}

impl ExponentOracle for SmithExponent {
    fn exponent(&self, sites: &[PlanarSite], z: &[f64]) -> Result<f64> {
        match sites.len() {
            0 => Err(Error::validation("exponent arguments", "no sites")),
            1 => {
                if !(z[0] > 0.0) {
                    return Err(Error::validation("exponent arguments", format!("{}", z[0])));
                }
                Ok(1.0 / z[0])
            }
            2 => self.partials(sites[0], sites[1], z[0], z[1]).map(|p| p.v),
            m if m <= self.max_dimension => smith_exponent_numeric(sites, z, &self.params),
            m => Err(Error::Capability(format!(
                "Smith exponent supports at most {} sites, got {m}",
                self.max_dimension
            ))),
        }
    }

    fn partials(&self, x1: PlanarSite, x2: PlanarSite, z1: f64, z2: f64) -> Result<ExponentPartials> {
        smith_exponent_bivariate(z1, z2, self.params.mahalanobis(x2.diff(x1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_thresholds() {
        let p = smith_exponent_bivariate(1.0, 1.0, 2.0).unwrap();
        // 2Φ(1), 30-digit reference
        assert!((p.v - 1.682_689_492_137_086).abs() < 1e-15);
    }

    #[test]
    fn homogeneity() {
        let base = smith_exponent_bivariate(0.7, 2.3, 1.4).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let scaled = smith_exponent_bivariate(c * 0.7, c * 2.3, 1.4).unwrap();
            assert!((scaled.v - base.v / c).abs() < 1e-14);
        }
    }

    #[test]
    fn complete_dependence_branch() {
        let p = smith_exponent_bivariate(1.0, 2.0, 0.0).unwrap();
        assert_eq!(p.v, 1.0);
        assert_eq!(p.dv_dz1, -1.0);
        assert_eq!(p.dv_dz2, 0.0);
        assert_eq!(p.d2v_dz1dz2, 0.0);
        // continuity as h → 0
        let near = smith_exponent_bivariate(1.0, 2.0, 1e-6).unwrap();
        assert!((near.v - 1.0).abs() < 1e-9);
        assert!(smith_exponent_bivariate(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn infinite_threshold_drops_point() {
        let p = smith_exponent_bivariate(2.0, f64::INFINITY, 0.8).unwrap();
        assert_eq!(p.v, 0.5);
        let q = smith_exponent_bivariate(f64::INFINITY, f64::INFINITY, 0.8).unwrap();
        assert_eq!(q.v, 0.0);
    }

    #[test]
    fn independence_limit() {
        let p = smith_exponent_bivariate(1.0, 3.0, 60.0).unwrap();
        assert!((p.v - (1.0 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn numeric_single_site() {
        let s = [PlanarSite { x1: 1.0, x2: 2.0 }];
        assert_eq!(smith_exponent_numeric(&s, &[2.0], &SmithParams::identity()).unwrap(), 0.5);
    }

    #[test]
    fn numeric_matches_closed_form_unit_distance() {
        let sites = [PlanarSite { x1: 0.0, x2: 0.0 }, PlanarSite { x1: 1.0, x2: 0.0 }];
        let num = smith_exponent_numeric(&sites, &[1.0, 2.0], &SmithParams::identity()).unwrap();
        let closed = smith_exponent_bivariate(1.0, 2.0, 1.0).unwrap().v;
        assert!(((num - closed) / closed).abs() < 1e-6, "{num} vs {closed}");
    }

    #[test]
    fn oracle_dimension_cap() {
        let o = SmithExponent::new(SmithParams::identity());
        let sites: Vec<_> = (0..5).map(|i| PlanarSite { x1: i as f64, x2: 0.0 }).collect();
        assert!(matches!(o.exponent(&sites, &[1.0; 5]), Err(Error::Capability(_))));
    }
}
