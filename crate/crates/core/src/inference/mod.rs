//! Pairwise-likelihood inference for the Smith-innovation planar model.

mod density;
mod fit;
mod likelihood;
mod optimizer;

pub use density::{bivariate_density, bivariate_density_via_oracle, log_pair_density};
pub use fit::{fit_scheme1, fit_scheme2, FitOptions, FitReport, Scheme};
pub use likelihood::{
    pairwise_loglik, pairwise_loglik_detailed, spatial_pairwise_loglik, spatial_pairwise_loglik_detailed,
    LoglikSummary, PairWeights, WeightRule, DENSITY_FLOOR,
};
pub use optimizer::{nelder_mead, NelderMeadOptions, NelderMeadReport, Transform};

use crate::error::{Error, Result};
use crate::geometry::Translation;
use crate::markov::MarkovParams;
use crate::spatial::SmithParams;

/// Full parameter `(σ₁₁, σ₁₂, σ₂₂, a, τ₁, τ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaVector {
    pub sigma11: f64,
    pub sigma12: f64,
    pub sigma22: f64,
    pub a: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl ThetaVector {
    pub const NAMES: [&'static str; 6] = ["sigma11", "sigma12", "sigma22", "a", "tau1", "tau2"];

    pub fn new(sigma11: f64, sigma12: f64, sigma22: f64, a: f64, tau1: f64, tau2: f64) -> Result<Self> {
        let t = ThetaVector { sigma11, sigma12, sigma22, a, tau1, tau2 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        self.smith()?;
        self.markov()?;
        Ok(())
    }

    pub fn smith(&self) -> Result<SmithParams> {
        SmithParams::new(self.sigma11, self.sigma12, self.sigma22)
    }

    pub fn markov(&self) -> Result<MarkovParams<Translation>> {
        MarkovParams::planar(self.a, [self.tau1, self.tau2])
    }

    pub fn from_parts(smith: &SmithParams, markov: &MarkovParams<Translation>) -> Self {
        let tau = markov.tau();
        ThetaVector {
            sigma11: smith.sigma11(),
            sigma12: smith.sigma12(),
            sigma22: smith.sigma22(),
            a: markov.a(),
            tau1: tau[0],
            tau2: tau[1],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.sigma11, self.sigma12, self.sigma22, self.a, self.tau1, self.tau2]
    }

    pub fn from_array(v: [f64; 6]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }
}

pub(crate) fn require_planar_pairs(n_sites: usize, n_dates: usize, need_dates: usize) -> Result<()> {
    if n_sites < 2 || n_dates < need_dates {
        return Err(Error::validation(
            "pairwise likelihood data",
            format!("needs at least 2 sites and {need_dates} dates, got {n_sites} sites and {n_dates} dates"),
        ));
    }
    Ok(())
}
