use std::f64::consts::PI;

use rand_distr::{Distribution, UnitSphere};

use crate::error::{Error, Result};
use crate::geometry::SphereSite;
use crate::point_process::{SeededStream, StormIntensities, DEFAULT_STORM_CAP};

use super::{min_value, FieldDraw, SpatialField, SpatialModel};

/// Below this concentration `κ / sinh κ` comes from its Taylor series.
const SERIES_KAPPA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmfParams {
    kappa: f64,
}

impl VmfParams {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::validation("vMF concentration", format!("must be ≥ 0, got {kappa}")));
        }
        Ok(VmfParams { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Density at cosine `c = μᵀx` between storm centre and site.
    #[inline]
    fn density_at_cosine(&self, c: f64) -> f64 {
        let k = self.kappa;
        if k < SERIES_KAPPA {
            let k2 = k * k;
            let ratio = 1.0 - k2 / 6.0 + 7.0 * k2 * k2 / 360.0;
            ratio * (k * c).exp() / (4.0 * PI)
        } else {
            // κ e^{κc} / (4π sinh κ) rewritten to avoid overflow at large κ
            k * (k * (c - 1.0)).exp() / (2.0 * PI * -(-2.0 * k).exp_m1())
        }
    }

    /// `sup_x f(x; μ, κ) = κ e^κ / (4π sinh κ)`.
    pub fn max_density(&self) -> f64 {
        self.density_at_cosine(1.0)
    }
}

/// von Mises–Fisher density `κ / (4π sinh κ) · exp(κ μᵀx)`.
pub fn vmf_density(x: &SphereSite, mu: &SphereSite, params: &VmfParams) -> f64 {
    params.density_at_cosine(x.dot(mu))
}

/// Exact simulator of `⋁ U_i f(x; μ_i, κ)` with uniform storm centres.
#[derive(Debug, Clone)]
pub struct VmfModel {
    pub params: VmfParams,
    pub storm_cap: usize,
}

impl VmfModel {
    pub fn new(params: VmfParams) -> Self {
        VmfModel {
            params,
            storm_cap: DEFAULT_STORM_CAP,
        }
    }
}

impl SpatialModel<SphereSite> for VmfModel {
    fn simulate_values(&self, sites: &[SphereSite], stream: &SeededStream) -> Result<FieldDraw> {
        if sites.is_empty() {
            return Err(Error::validation("site set", "empty"));
        }
        let f_max = self.params.max_density();
        let kappa = self.params.kappa;
        let mut rng = stream.rng();
        // centres uniform w.r.t. surface measure of total mass 4π
        let mut storms = StormIntensities::new(4.0 * PI, self.storm_cap);
        let mut z = vec![0.0f64; sites.len()];
        let mut floor = 0.0;
        loop {
            let u = storms.next_intensity(&mut rng)?;
            let peak = u * f_max;
            if peak < floor {
                break;
            }
            let mu: [f64; 3] = UnitSphere.sample(&mut rng);
            for (zi, x) in z.iter_mut().zip(sites) {
                if peak <= *zi {
                    continue;
                }
                let v = x.vector();
                let c = v[0] * mu[0] + v[1] * mu[1] + v[2] * mu[2];
                let val = if kappa < SERIES_KAPPA {
                    u * self.params.density_at_cosine(c)
                } else {
                    peak * (kappa * (c - 1.0)).exp()
                };
                if val > *zi {
                    *zi = val;
                }
            }
            floor = min_value(&z);
        }
        Ok(FieldDraw {
            values: z,
            storms: storms.emitted(),
            capped: false,
        })
    }
}

pub fn simulate_vmf_field(sites: &[SphereSite], params: &VmfParams, stream: &SeededStream) -> Result<SpatialField<SphereSite>> {
    VmfModel::new(*params).simulate(sites, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_2d, QuadOptions};

    fn north() -> SphereSite {
        SphereSite::new([0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn uniform_limit() {
        let p = VmfParams::new(0.0).unwrap();
        let x = SphereSite::from_angles(1.0, 2.0).unwrap();
        assert!((vmf_density(&x, &north(), &p) - 1.0 / (4.0 * PI)).abs() < 1e-16);
        let tiny = VmfParams::new(1e-9).unwrap();
        assert!((vmf_density(&x, &north(), &tiny) - 1.0 / (4.0 * PI)).abs() < 1e-9);
    }

    #[test]
    fn mode_value_kappa_one() {
        // κ e^κ / (4π sinh κ) at κ = 1, evaluated with 30-digit arithmetic
        let expected = 0.184_065_499_616_596;
        let p = VmfParams::new(1.0).unwrap();
        assert!((vmf_density(&north(), &north(), &p) - expected).abs() < 1e-15);
        assert!((p.max_density() - expected).abs() < 1e-15);
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        let below = VmfParams::new(SERIES_KAPPA * (1.0 - 1e-9)).unwrap();
        let above = VmfParams::new(SERIES_KAPPA * (1.0 + 1e-9)).unwrap();
        for c in [-1.0, 0.0, 0.5, 1.0] {
            assert!((below.density_at_cosine(c) - above.density_at_cosine(c)).abs() < 1e-12);
        }
    }

    #[test]
    fn integrates_to_one_on_sphere() {
        for kappa in [0.0, 0.5, 2.0, 30.0] {
            let p = VmfParams::new(kappa).unwrap();
            let mu = SphereSite::from_angles(0.7, -1.1).unwrap();
            // product quadrature in (colatitude, longitude) with the sin θ Jacobian
            let r = integrate_2d(
                |theta, phi| {
                    let x = SphereSite::from_angles(theta, phi).unwrap();
                    vmf_density(&x, &mu, &p) * theta.sin()
                },
                (0.0, PI),
                (-PI, PI),
                QuadOptions::default(),
                QuadOptions::default(),
            )
            .unwrap();
            assert!((r.value - 1.0).abs() < 1e-4, "κ={kappa}: {}", r.value);
        }
    }

    #[test]
    fn large_kappa_finite() {
        let p = VmfParams::new(1000.0).unwrap();
        assert!(p.max_density().is_finite());
        assert!((p.max_density() - 1000.0 / (2.0 * PI)).abs() < 1e-9);
    }

    #[test]
    fn kappa_zero_field_is_constant() {
        let sites: Vec<_> = (0..8).map(|i| SphereSite::from_angles(0.3 * i as f64, 0.8 * i as f64).unwrap()).collect();
        for i in 0..20 {
            let f = simulate_vmf_field(&sites, &VmfParams::new(0.0).unwrap(), &SeededStream::new(1, i)).unwrap();
            assert!(f.values.iter().all(|&v| v == f.values[0]));
        }
    }

    #[test]
    fn single_site_margin() {
        let sites = [SphereSite::from_angles(1.2, 0.4).unwrap()];
        let p = VmfParams::new(1.0).unwrap();
        let n = 5000;
        let v: Vec<f64> = (0..n)
            .map(|i| simulate_vmf_field(&sites, &p, &SeededStream::new(21, i)).unwrap().values[0])
            .collect();
        for z in [0.5, 1.0, 3.0] {
            let emp = v.iter().filter(|&&x| x <= z).count() as f64 / n as f64;
            assert!((emp - (-1.0 / z).exp()).abs() < 0.02, "z={z}: {emp}");
        }
    }

    #[test]
    fn negative_kappa_rejected() {
        assert!(VmfParams::new(-0.1).is_err());
    }
}
