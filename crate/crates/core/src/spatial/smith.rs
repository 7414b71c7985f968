use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::PlanarSite;
use crate::point_process::{SeededStream, StormIntensities, Window, DEFAULT_STORM_CAP};

use super::{min_value, FieldDraw, SpatialField, SpatialModel};

/// Storms centred outside the simulation window may contribute at most this
/// much Fréchet mass at any site.
pub const TAIL_EPSILON: f64 = 1e-6;

/// Covariance `Σ = [[σ₁₁, σ₁₂], [σ₁₂, σ₂₂]]` of the Gaussian storm shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmithParams {
    sigma11: f64,
    sigma12: f64,
    sigma22: f64,
}

impl SmithParams {
    pub fn new(sigma11: f64, sigma12: f64, sigma22: f64) -> Result<Self> {
        let finite = sigma11.is_finite() && sigma12.is_finite() && sigma22.is_finite();
        if !finite || sigma11 <= 0.0 || sigma22 <= 0.0 || sigma11 * sigma22 - sigma12 * sigma12 <= 0.0 {
            return Err(Error::validation(
                "Smith covariance",
                format!("not positive definite: σ11={sigma11}, σ12={sigma12}, σ22={sigma22}"),
            ));
        }
        Ok(SmithParams { sigma11, sigma12, sigma22 })
    }

    pub fn identity() -> Self {
        SmithParams { sigma11: 1.0, sigma12: 0.0, sigma22: 1.0 }
    }

    pub fn sigma11(&self) -> f64 {
        self.sigma11
    }
    pub fn sigma12(&self) -> f64 {
        self.sigma12
    }
    pub fn sigma22(&self) -> f64 {
        self.sigma22
    }

    pub fn det(&self) -> f64 {
        self.sigma11 * self.sigma22 - self.sigma12 * self.sigma12
    }

    /// `dᵀ Σ⁻¹ d`.
    #[inline]
    pub fn mahalanobis_sq(&self, d: [f64; 2]) -> f64 {
        let det = self.det();
        (self.sigma22 * d[0] * d[0] - 2.0 * self.sigma12 * d[0] * d[1] + self.sigma11 * d[1] * d[1]) / det
    }

    #[inline]
    pub fn mahalanobis(&self, d: [f64; 2]) -> f64 {
        self.mahalanobis_sq(d).max(0.0).sqrt()
    }

    /// `sup h_Σ = 1 / (2π √det Σ)`.
    pub fn max_density(&self) -> f64 {
        1.0 / (2.0 * PI * self.det().sqrt())
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        let half_trace = 0.5 * (self.sigma11 + self.sigma22);
        let diff = 0.5 * (self.sigma11 - self.sigma22);
        half_trace + (diff * diff + self.sigma12 * self.sigma12).sqrt()
    }

    /// Lower Cholesky factor `(l11, l21, l22)` with `Σ = L Lᵀ`.
    pub fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.sigma11.sqrt();
        let l21 = self.sigma12 / l11;
        let l22 = (self.sigma22 - l21 * l21).sqrt();
        (l11, l21, l22)
    }

    /// Radius beyond which storm centres carry at most `eps` of any site's
    /// Fréchet mass: `P(dᵀΣ⁻¹d > r²/λ_max) = exp(−r²/(2λ_max)) = eps`.
    pub fn buffer_radius(&self, eps: f64) -> f64 {
        (-2.0 * self.largest_eigenvalue() * eps.ln()).sqrt()
    }
}

/// Bivariate centred Gaussian density `h_Σ(x)`.
pub fn gaussian_density_2d(x: PlanarSite, params: &SmithParams) -> f64 {
    params.max_density() * (-0.5 * params.mahalanobis_sq([x.x1, x.x2])).exp()
}

/// Exact Smith field simulator with a windowed storm domain.
#[derive(Debug, Clone)]
pub struct SmithModel {
    pub params: SmithParams,
    pub tail_epsilon: f64,
    pub storm_cap: usize,
}

impl SmithModel {
    pub fn new(params: SmithParams) -> Self {
        SmithModel {
            params,
            tail_epsilon: TAIL_EPSILON,
            storm_cap: DEFAULT_STORM_CAP,
        }
    }
}

impl SpatialModel<PlanarSite> for SmithModel {
    fn simulate_values(&self, sites: &[PlanarSite], stream: &SeededStream) -> Result<FieldDraw> {
        let p = &self.params;
        let window = Window::bounding(sites, p.buffer_radius(self.tail_epsilon))?;
        let h_max = p.max_density();
        let mut rng = stream.rng();
        // centres uniform on the window: U-intensity area · u⁻² du
        let mut storms = StormIntensities::new(window.area(), self.storm_cap);
        let mut z = vec![0.0f64; sites.len()];
        let mut floor = 0.0;
        loop {
            let u = storms.next_intensity(&mut rng)?;
            let peak = u * h_max;
            if peak < floor {
                break;
            }
            let c = window.sample_uniform(&mut rng);
            for (zi, x) in z.iter_mut().zip(sites) {
                if peak <= *zi {
                    continue;
                }
                let q = p.mahalanobis_sq([x.x1 - c.x1, x.x2 - c.x2]);
                // peak·exp(−q/2) > zᵢ ⇔ q < 2 ln(peak/zᵢ)
                if *zi > 0.0 && q >= 2.0 * (peak / *zi).ln() {
                    continue;
                }
                let v = peak * (-0.5 * q).exp();
                if v > *zi {
                    *zi = v;
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

pub fn simulate_smith(sites: &[PlanarSite], params: &SmithParams, stream: &SeededStream) -> Result<SpatialField<PlanarSite>> {
    SmithModel::new(*params).simulate(sites, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_2d, QuadOptions};

    #[test]
    fn density_at_origin() {
        let d = gaussian_density_2d(PlanarSite { x1: 0.0, x2: 0.0 }, &SmithParams::identity());
        assert!((d - 0.159_154_943_091_895_35).abs() < 1e-15);
    }

    #[test]
    fn density_integrates_to_one() {
        for p in [SmithParams::identity(), SmithParams::new(1.5, 0.4, 0.8).unwrap()] {
            let r = integrate_2d(
                |x, y| gaussian_density_2d(PlanarSite { x1: x, x2: y }, &p),
                (-8.0, 8.0),
                (-8.0, 8.0),
                QuadOptions::default(),
                QuadOptions::default(),
            )
            .unwrap();
            assert!((r.value - 1.0).abs() < 1e-6, "{p:?}: {}", r.value);
        }
    }

    #[test]
    fn density_is_symmetric() {
        let p = SmithParams::new(2.0, -0.7, 0.9).unwrap();
        let mut rng = SeededStream::new(1, 1).rng();
        for _ in 0..100 {
            let x = PlanarSite {
                x1: rand::Rng::random_range(&mut rng, -5.0..5.0),
                x2: rand::Rng::random_range(&mut rng, -5.0..5.0),
            };
            let neg = PlanarSite { x1: -x.x1, x2: -x.x2 };
            assert_eq!(gaussian_density_2d(x, &p), gaussian_density_2d(neg, &p));
        }
    }

    #[test]
    fn rejects_non_positive_definite() {
        assert!(SmithParams::new(1.0, 1.0, 1.0).is_err());
        assert!(SmithParams::new(-1.0, 0.0, 1.0).is_err());
        assert!(SmithParams::new(1.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn cholesky_reconstructs() {
        let p = SmithParams::new(1.7, 0.3, 0.6).unwrap();
        let (a, b, c) = p.cholesky();
        assert!((a * a - 1.7).abs() < 1e-14);
        assert!((a * b - 0.3).abs() < 1e-14);
        assert!((b * b + c * c - 0.6).abs() < 1e-14);
    }

    #[test]
    fn buffer_radius_tail_bound() {
        let p = SmithParams::identity();
        let r = p.buffer_radius(1e-6);
        assert!(((-r * r / 2.0).exp() - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn single_site_margin_is_frechet() {
        let site = [PlanarSite { x1: 0.3, x2: -1.2 }];
        let p = SmithParams::identity();
        let n = 5000;
        let values: Vec<f64> = (0..n)
            .map(|i| simulate_smith(&site, &p, &SeededStream::new(17, i)).unwrap().values[0])
            .collect();
        for z in [0.5, 1.0, 3.0] {
            let emp = values.iter().filter(|&&v| v <= z).count() as f64 / n as f64;
            assert!((emp - (-1.0 / z).exp()).abs() < 0.02, "z={z}: {emp}");
        }
    }

    #[test]
    fn reproducible_and_positive() {
        let sites: Vec<_> = (0..10).map(|i| PlanarSite { x1: i as f64 * 0.5, x2: 0.0 }).collect();
        let a = simulate_smith(&sites, &SmithParams::identity(), &SeededStream::new(2, 9)).unwrap();
        let b = simulate_smith(&sites, &SmithParams::identity(), &SeededStream::new(2, 9)).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|&v| v > 0.0));
    }
}
