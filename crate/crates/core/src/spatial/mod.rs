//! Spatial innovation fields `Z(t, ·)`: simple max-stable fields with
//! standard Fréchet margins built from their spectral representations.

mod exponent;
mod schlather;
mod smith;
mod vmf;

pub use exponent::{
    smith_exponent_bivariate, smith_exponent_numeric, ExponentOracle, ExponentPartials, SmithExponent,
    COMPLETE_DEPENDENCE_H,
};
pub use schlather::{
    correlation_powered_exponential, simulate_schlather, SchlatherModel, SchlatherParams, MAX_CHOLESKY_SITES,
};
pub use smith::{gaussian_density_2d, simulate_smith, SmithModel, SmithParams, TAIL_EPSILON};
pub use vmf::{simulate_vmf_field, vmf_density, VmfModel, VmfParams};

use std::collections::HashMap;

use crate::error::Result;
use crate::geometry::Site;
use crate::point_process::SeededStream;

/// One realization of a spatial field at a finite set of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField<S> {
    pub sites: Vec<S>,
    pub values: Vec<f64>,
    /// Storms generated before the stopping rule fired.
    pub storms: usize,
}

/// Values of one draw, aligned with the requested sites.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDraw {
    pub values: Vec<f64>,
    pub storms: usize,
    /// True when a storm cap, not the exact stopping rule, ended the draw.
    pub capped: bool,
}

/// A spatial max-stable model that can be sampled at arbitrary sites.
pub trait SpatialModel<S: Site>: Send + Sync {
    fn simulate_values(&self, sites: &[S], stream: &SeededStream) -> Result<FieldDraw>;

    fn simulate(&self, sites: &[S], stream: &SeededStream) -> Result<SpatialField<S>> {
        let draw = self.simulate_values(sites, stream)?;
        Ok(SpatialField {
            sites: sites.to_vec(),
            values: draw.values,
            storms: draw.storms,
        })
    }
}

/// Distinct sites (by exact bit pattern) and, for every input, the index
/// of its representative.
pub(crate) fn dedup_sites<S: Site>(sites: &[S]) -> (Vec<S>, Vec<usize>) {
    let mut seen: HashMap<[u64; 3], usize> = HashMap::with_capacity(sites.len());
    let mut unique = Vec::new();
    let mut index = Vec::with_capacity(sites.len());
    for s in sites {
        let next = unique.len();
        let i = *seen.entry(s.key()).or_insert(next);
        if i == next {
            unique.push(*s);
        }
        index.push(i);
    }
    (unique, index)
}

fn min_value(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}
