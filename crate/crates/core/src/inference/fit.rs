//! The two estimation schemes.
//!
//! Scheme 1 fits `Σ` to same-date pairs first (single-date slices follow the
//! spatial Smith law whatever `(a, τ)` is), then `(a, τ)` to the space-time
//! pairwise likelihood with `Σ` held fixed. Scheme 2 fits all six
//! parameters jointly. `Σ` is searched through its Cholesky factor with log
//! diagonals, `a` through its logit.

use crate::error::Result;
use crate::geometry::PlanarSite;
use crate::markov::SpaceTimeField;
use crate::spatial::SmithParams;

use super::likelihood::{pairwise_loglik, pairwise_loglik_detailed, spatial_pairwise_loglik, PairWeights};
use super::optimizer::{nelder_mead, NelderMeadOptions, Transform};
use super::{require_planar_pairs, ThetaVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Spatial parameters first, then temporal ones.
    TwoStage,
    /// All parameters at once.
    Joint,
}

impl Scheme {
    pub fn number(&self) -> u8 {
        match self {
            Scheme::TwoStage => 1,
            Scheme::Joint => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitOptions {
    pub optimizer: NelderMeadOptions,
    pub weights: PairWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub theta_hat: ThetaVector,
    /// Space-time pairwise log-likelihood at `theta_hat`.
    pub loglik: f64,
    pub n_pairs: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub scheme: Scheme,
}

const SIGMA_TRANSFORMS: [Transform; 3] = [Transform::Log, Transform::Identity, Transform::Log];
const MARKOV_TRANSFORMS: [Transform; 3] = [Transform::Logit, Transform::Identity, Transform::Identity];

fn cholesky_coords(s: &SmithParams) -> [f64; 3] {
    let (l11, l21, l22) = s.cholesky();
    [l11, l21, l22]
}

fn sigma_from_cholesky(l: &[f64]) -> Result<SmithParams> {
    SmithParams::new(l[0] * l[0], l[0] * l[1], l[1] * l[1] + l[2] * l[2])
}

fn theta_from(sigma: &SmithParams, m: &[f64]) -> ThetaVector {
    ThetaVector {
        sigma11: sigma.sigma11(),
        sigma12: sigma.sigma12(),
        sigma22: sigma.sigma22(),
        a: m[0],
        tau1: m[1],
        tau2: m[2],
    }
}

fn report(
    data: &SpaceTimeField<PlanarSite>,
    theta_hat: ThetaVector,
    weights: &PairWeights,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    scheme: Scheme,
) -> Result<FitReport> {
    let ll = pairwise_loglik_detailed(data, &theta_hat, weights)?;
    Ok(FitReport {
        theta_hat,
        loglik: ll.value,
        n_pairs: ll.n_pairs,
        iterations,
        evaluations,
        converged,
        scheme,
    })
}

pub fn fit_scheme1(data: &SpaceTimeField<PlanarSite>, init: &ThetaVector, options: &FitOptions) -> Result<FitReport> {
    require_planar_pairs(data.n_sites(), data.n_dates(), 2)?;
    init.validate()?;
    let w = &options.weights;
    let spatial = nelder_mead(
        |l| match sigma_from_cholesky(l).and_then(|s| spatial_pairwise_loglik(data, &s, w)) {
            Ok(v) => -v,
            Err(_) => f64::INFINITY,
        },
        &cholesky_coords(&init.smith()?),
        &SIGMA_TRANSFORMS,
        &options.optimizer,
    )?;
    let sigma = sigma_from_cholesky(&spatial.x)?;
    let temporal = nelder_mead(
        |m| match pairwise_loglik(data, &theta_from(&sigma, m), w) {
            Ok(v) => -v,
            Err(_) => f64::INFINITY,
        },
        &[init.a, init.tau1, init.tau2],
        &MARKOV_TRANSFORMS,
        &options.optimizer,
    )?;
    report(
        data,
        theta_from(&sigma, &temporal.x),
        w,
        spatial.iterations + temporal.iterations,
        spatial.evaluations + temporal.evaluations,
        spatial.converged && temporal.converged,
        Scheme::TwoStage,
    )
}

pub fn fit_scheme2(data: &SpaceTimeField<PlanarSite>, init: &ThetaVector, options: &FitOptions) -> Result<FitReport> {
    require_planar_pairs(data.n_sites(), data.n_dates(), 2)?;
    init.validate()?;
    let w = &options.weights;
    let c = cholesky_coords(&init.smith()?);
    let start = [c[0], c[1], c[2], init.a, init.tau1, init.tau2];
    let mut transforms = [Transform::Identity; 6];
    transforms[..3].copy_from_slice(&SIGMA_TRANSFORMS);
    transforms[3..].copy_from_slice(&MARKOV_TRANSFORMS);
    let joint = nelder_mead(
        |x| {
            let value = sigma_from_cholesky(&x[..3]).and_then(|s| pairwise_loglik(data, &theta_from(&s, &x[3..]), w));
            match value {
                Ok(v) => -v,
                Err(_) => f64::INFINITY,
            }
        },
        &start,
        &transforms,
        &options.optimizer,
    )?;
    let sigma = sigma_from_cholesky(&joint.x[..3])?;
    report(
        data,
        theta_from(&sigma, &joint.x[3..]),
        w,
        joint.iterations,
        joint.evaluations,
        joint.converged,
        Scheme::Joint,
    )
}
