//! Bivariate density of `(X(t₁, x₁), X(t₂, x₂))`.
//!
//! With `A = a^{t₂−t₁}` the pair distribution is
//! `−log F = 𝒱_{x₁, x₂−(t₂−t₁)τ}(z₁, z₂/A) + (1 − A)/z₂`, and the density is
//! `(G₁G₂ − G₁₂) e^{−G}` for `G = −log F`.

use crate::error::{Error, Result};
use crate::geometry::{PlanarSite, Translation};
use crate::markov::MarkovParams;
use crate::spatial::{ExponentOracle, SmithParams, COMPLETE_DEPENDENCE_H};
use crate::special::{norm_cdf, norm_pdf};

use super::ThetaVector;

/// Log density of a pair with time lag `lag ≥ 0` and spatial difference
/// `d = x₂ − x₁`, in the explicit Smith form. Returns `−∞` where the
/// density vanishes or its bracket term underflows.
///
/// Errors with [`Error::DegeneratePair`] when both points coincide.
#[inline]
pub fn log_pair_density(
    z1: f64,
    z2: f64,
    lag: f64,
    d: [f64; 2],
    smith: &SmithParams,
    a: f64,
    tau: [f64; 2],
) -> Result<f64> {
    let big_a = if lag == 0.0 { 1.0 } else { a.powf(lag) };
    let h = smith.mahalanobis([d[0] - lag * tau[0], d[1] - lag * tau[1]]);
    if h < COMPLETE_DEPENDENCE_H {
        if lag == 0.0 {
            return Err(Error::DegeneratePair(format!(
                "zero lag and spatial separation {d:?}: the pair has no joint density"
            )));
        }
        // 𝒱 = max(1/z₁, A/z₂): only the branch 1/z₁ depends on both arguments
        if z2 > big_a * z1 {
            let b = 1.0 - big_a;
            return Ok((b / (z1 * z1 * z2 * z2)).ln() - 1.0 / z1 - b / z2);
        }
        return Ok(f64::NEG_INFINITY);
    }
    let w = 0.5 * h + (z2 / (big_a * z1)).ln() / h;
    let v = h - w;
    let (cw, cv) = (norm_cdf(w), norm_cdf(v));
    let (pw, pv) = (norm_pdf(w), norm_pdf(v));
    let rest = 1.0 - big_a;
    let (z1s, z2s, z12) = (z1 * z1, z2 * z2, z1 * z2);
    let g = cw / z1 + big_a * cv / z2 + rest / z2;
    let b1 = cw / z1s + pw / (h * z1s) - big_a * pv / (h * z12);
    let b2 = big_a * cv / z2s + big_a * pv / (h * z2s) - pw / (h * z12) + rest / z2s;
    let c = v * pw / (h * h * z1s * z2) + big_a * w * pv / (h * h * z1 * z2s);
    let bracket = b1 * b2 + c;
    if bracket > 0.0 {
        Ok(bracket.ln() - g)
    } else if bracket.is_nan() || g.is_nan() {
        Err(Error::numerical(
            "pair density",
            format!("non-finite terms at z = ({z1}, {z2}), lag {lag}, h = {h}"),
        ))
    } else {
        Ok(f64::NEG_INFINITY)
    }
}

fn check_inputs(z1: f64, z2: f64, t1: f64, t2: f64) -> Result<()> {
    if !(z1 > 0.0 && z2 > 0.0 && z1.is_finite() && z2.is_finite()) {
        return Err(Error::validation("density arguments", format!("z must be positive and finite, got ({z1}, {z2})")));
    }
    if !(t1.is_finite() && t2.is_finite()) {
        return Err(Error::validation("density arguments", format!("dates must be finite, got ({t1}, {t2})")));
    }
    Ok(())
}

/// Joint density of `(X(t₁, x₁), X(t₂, x₂))` at `(z₁, z₂)`. Points are
/// reordered so that the earlier date comes first.
pub fn bivariate_density(
    z1: f64,
    z2: f64,
    t1: f64,
    t2: f64,
    x1: PlanarSite,
    x2: PlanarSite,
    theta: &ThetaVector,
) -> Result<f64> {
    check_inputs(z1, z2, t1, t2)?;
    let smith = theta.smith()?;
    theta.markov()?;
    let (z1, z2, x1, x2, lag) = if t1 <= t2 { (z1, z2, x1, x2, t2 - t1) } else { (z2, z1, x2, x1, t1 - t2) };
    log_pair_density(z1, z2, lag, x2.diff(x1), &smith, theta.a, [theta.tau1, theta.tau2]).map(f64::exp)
}

/// The same density assembled from an exponent oracle's partial
/// derivatives, for any spatial innovation model with a bivariate oracle.
#[allow(clippy::too_many_arguments)]
pub fn bivariate_density_via_oracle(
    z1: f64,
    z2: f64,
    t1: f64,
    t2: f64,
    x1: PlanarSite,
    x2: PlanarSite,
    oracle: &dyn ExponentOracle,
    markov: &MarkovParams<Translation>,
) -> Result<f64> {
    check_inputs(z1, z2, t1, t2)?;
    let (z1, z2, x1, x2, lag) = if t1 <= t2 { (z1, z2, x1, x2, t2 - t1) } else { (z2, z1, x2, x1, t1 - t2) };
    let big_a = markov.a().powf(lag);
    let shifted = x2.translate(lag, markov.tau());
    if lag == 0.0 && shifted == x1 {
        return Err(Error::DegeneratePair(format!("{x1:?} at equal dates")));
    }
    let p = oracle.partials(x1, shifted, z1, z2 / big_a)?;
    let rest = 1.0 - big_a;
    let g = p.v + rest / z2;
    let g1 = p.dv_dz1;
    let g2 = p.dv_dz2 / big_a - rest / (z2 * z2);
    let g12 = p.d2v_dz1dz2 / big_a;
    Ok(((g1 * g2 - g12) * (-g).exp()).max(0.0))
}
