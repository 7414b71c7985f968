use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{PlanarSite, Site};
use crate::point_process::{SeededStream, StormIntensities};
use crate::special::norm_sf;

use super::{dedup_sites, min_value, FieldDraw, SpatialField, SpatialModel};

/// Largest number of distinct sites factorized densely.
pub const MAX_CHOLESKY_SITES: usize = 4000;

const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Powered-exponential correlation `ρ(h) = exp(−(h/c₁)^{c₂})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchlatherParams {
    c1: f64,
    c2: f64,
}

impl SchlatherParams {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(Error::validation("Schlather range c1", format!("must be positive, got {c1}")));
        }
        if !(c2 > 0.0 && c2 < 2.0) {
            return Err(Error::validation("Schlather smoothness c2", format!("must lie in (0, 2), got {c2}")));
        }
        Ok(SchlatherParams { c1, c2 })
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn c2(&self) -> f64 {
        self.c2
    }

    #[inline]
    fn rho(&self, h: f64) -> f64 {
        (-(h / self.c1).powf(self.c2)).exp()
    }
}

pub fn correlation_powered_exponential(h: f64, params: &SchlatherParams) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::validation("distance", format!("must be non-negative, got {h}")));
    }
    Ok(params.rho(h))
}

type FactorCache = RwLock<HashMap<Vec<[u64; 3]>, Arc<DMatrix<f64>>>>;

/// Approximate Schlather simulator: Gaussian spectral processes
/// `√(2π) max(ε, 0)` with a threshold stopping rule based on the envelope
/// `sup ε ≤ envelope`, capped at `n_storms` storms.
#[derive(Debug)]
pub struct SchlatherModel {
    pub params: SchlatherParams,
    pub n_storms: usize,
    pub envelope: f64,
    factors: FactorCache,
    warned: OnceLock<()>,
}

impl Clone for SchlatherModel {
    fn clone(&self) -> Self {
        SchlatherModel::with_limits(self.params, self.n_storms, self.envelope)
    }
}

impl SchlatherModel {
    pub fn new(params: SchlatherParams) -> Self {
        Self::with_limits(params, 1000, 4.0)
    }

    pub fn with_limits(params: SchlatherParams, n_storms: usize, envelope: f64) -> Self {
        SchlatherModel {
            params,
            n_storms,
            envelope,
            factors: RwLock::new(HashMap::new()),
            warned: OnceLock::new(),
        }
    }

    /// Lower Cholesky factor of the correlation matrix of distinct `sites`,
    /// memoized per site set.
    fn factor(&self, sites: &[PlanarSite]) -> Result<Arc<DMatrix<f64>>> {
        let key: Vec<[u64; 3]> = sites.iter().map(Site::key).collect();
        if let Some(f) = self.factors.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(f));
        }
        let n = sites.len();
        let corr = DMatrix::from_fn(n, n, |i, j| {
            let d = sites[i].diff(sites[j]);
            self.params.rho((d[0] * d[0] + d[1] * d[1]).sqrt())
        });
        for jitter in JITTER_LADDER {
            let mut m = corr.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(ch) = m.cholesky() {
                if jitter > 0.0 {
                    log::debug!("correlation matrix of {n} sites needed jitter {jitter:e}");
                }
                let l = Arc::new(ch.l());
                self.factors.write().expect("cache lock").insert(key, Arc::clone(&l));
                return Ok(l);
            }
        }
        // report the most nearly collinear pair
        let mut worst = (0, 0, f64::NEG_INFINITY);
        for i in 0..n {
            for j in (i + 1)..n {
                if corr[(i, j)] > worst.2 {
                    worst = (i, j, corr[(i, j)]);
                }
            }
        }
        Err(Error::numerical(
            "Schlather correlation Cholesky",
            format!(
                "matrix not positive definite even with jitter 1e-6; most correlated pair {:?} and {:?} (ρ = {})",
                sites[worst.0], sites[worst.1], worst.2
            ),
        ))
    }
}

impl SpatialModel<PlanarSite> for SchlatherModel {
    fn simulate_values(&self, sites: &[PlanarSite], stream: &SeededStream) -> Result<FieldDraw> {
        if sites.is_empty() {
            return Err(Error::validation("site set", "empty"));
        }
        let (unique, index) = dedup_sites(sites);
        if unique.len() > MAX_CHOLESKY_SITES {
            return Err(Error::Resource {
                what: "distinct Schlather sites",
                cap: MAX_CHOLESKY_SITES,
            });
        }
        self.warned.get_or_init(|| {
            let p = (unique.len() as f64 * norm_sf(self.envelope)).min(1.0);
            log::warn!(
                "Schlather simulation is approximate: per-storm P(sup ε > {}) ≤ {p:.3e} over {} sites",
                self.envelope,
                unique.len()
            );
        });
        let l = self.factor(&unique)?;
        let n = unique.len();
        let mut rng = stream.rng();
        let mut storms = StormIntensities::new(1.0, self.n_storms);
        let scale = (2.0 * PI).sqrt();
        let mut z = vec![0.0f64; n];
        let mut capped = false;
        loop {
            if storms.emitted() >= self.n_storms {
                capped = true;
                break;
            }
            let u = storms.next_intensity(&mut rng)?;
            if u * scale * self.envelope < min_value(&z) {
                break;
            }
            let eps = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            let y = &*l * eps;
            for (zi, yi) in z.iter_mut().zip(y.iter()) {
                let v = u * scale * yi.max(0.0);
                if v > *zi {
                    *zi = v;
                }
            }
        }
        Ok(FieldDraw {
            values: index.iter().map(|&i| z[i]).collect(),
            storms: storms.emitted(),
            capped,
        })
    }
}

pub fn simulate_schlather(
    sites: &[PlanarSite],
    params: &SchlatherParams,
    stream: &SeededStream,
    n_storms: usize,
) -> Result<SpatialField<PlanarSite>> {
    if n_storms == 0 {
        return Err(Error::validation("n_storms", "must be at least 1"));
    }
    SchlatherModel::with_limits(*params, n_storms, 4.0).simulate(sites, stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_values() {
        let p = SchlatherParams::new(3.0, 1.0).unwrap();
        assert_eq!(correlation_powered_exponential(0.0, &p).unwrap(), 1.0);
        assert!((correlation_powered_exponential(3.0, &p).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(correlation_powered_exponential(-0.1, &p).is_err());
    }

    #[test]
    fn correlation_decreasing() {
        let mut rng = SeededStream::new(3, 3).rng();
        for _ in 0..100 {
            let c1 = rand::Rng::random_range(&mut rng, 0.1..10.0);
            let c2 = rand::Rng::random_range(&mut rng, 0.05..1.95);
            let p = SchlatherParams::new(c1, c2).unwrap();
            assert!(correlation_powered_exponential(1.0, &p).unwrap() > correlation_powered_exponential(2.0, &p).unwrap());
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(SchlatherParams::new(0.0, 1.0).is_err());
        assert!(SchlatherParams::new(1.0, 2.0).is_err());
        assert!(SchlatherParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn duplicate_sites_share_values() {
        let s = PlanarSite { x1: 1.0, x2: 2.0 };
        let sites = [s, PlanarSite { x1: 0.0, x2: 0.0 }, s];
        let p = SchlatherParams::new(3.0, 1.0).unwrap();
        let f = simulate_schlather(&sites, &p, &SeededStream::new(1, 0), 1000).unwrap();
        assert_eq!(f.values[0], f.values[2]);
        assert!(f.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn single_site_margin_close_to_frechet() {
        let sites = [PlanarSite { x1: 0.0, x2: 0.0 }];
        let model = SchlatherModel::new(SchlatherParams::new(3.0, 1.0).unwrap());
        let n = 5000;
        let mut v: Vec<f64> = (0..n)
            .map(|i| model.simulate_values(&sites, &SeededStream::new(8, i)).unwrap().values[0])
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nf = n as f64;
        let ks = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (-1.0 / x).exp();
                ((i + 1) as f64 / nf - f).abs().max((f - i as f64 / nf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.03, "KS {ks}");
    }

    #[test]
    fn too_many_sites_is_resource_error() {
        let sites: Vec<_> = (0..=MAX_CHOLESKY_SITES).map(|i| PlanarSite { x1: i as f64, x2: 0.0 }).collect();
        let p = SchlatherParams::new(3.0, 1.0).unwrap();
        let err = simulate_schlather(&sites, &p, &SeededStream::new(1, 0), 10).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }
}
