//! Poisson point-process samplers and seeded random streams.
//!
//! Every spectral representation in the crate is driven by the points
//! `U_i = scale / P_i` of a Poisson process on `(0, ∞)` with intensity
//! `scale · u⁻² du`, where `P_i` are partial sums of unit exponentials.
//! They are produced in decreasing order, which is what makes the
//! threshold stopping rules of the field simulators exact.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::geometry::PlanarSite;

/// Default hard cap on storms generated by a single call.
pub const DEFAULT_STORM_CAP: usize = 10_000_000;

/// Largest Poisson mean sampled by inversion.
const INVERSION_MAX_MEAN: f64 = 30.0;

/// A reproducible random stream keyed by `(seed, stream id)`.
///
/// Streams are ChaCha8 keystreams: the seed selects the key and the stream
/// id selects one of 2⁶⁴ independent nonces, so distinct ids never share
/// draws regardless of consumption order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeededStream {
    pub seed: u64,
    pub stream: u64,
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        SeededStream { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Child stream number `index`, deterministic in `(self, index)`.
    pub fn substream(&self, index: u64) -> SeededStream {
        let mixed = splitmix64(splitmix64(self.stream) ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)));
        SeededStream {
            seed: self.seed,
            stream: mixed,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Lazily generated decreasing storm intensities `U_i = scale / P_i`.
#[derive(Debug, Clone)]
pub struct StormIntensities {
    scale: f64,
    partial_sum: f64,
    emitted: usize,
    cap: usize,
}

impl StormIntensities {
    pub fn new(scale: f64, cap: usize) -> Self {
        StormIntensities {
            scale,
            partial_sum: 0.0,
            emitted: 0,
            cap,
        }
    }

    /// Next intensity, or a resource error once `cap` storms were emitted.
    pub fn next_intensity<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        if self.emitted >= self.cap {
            return Err(Error::Resource {
                what: "storm count",
                cap: self.cap,
            });
        }
        let e: f64 = Exp1.sample(rng);
        self.partial_sum += e;
        self.emitted += 1;
        Ok(self.scale / self.partial_sum)
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }
}

/// Intensities `U_1 > U_2 > …` kept while `U_i ≥ stop_threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct StormSequence {
    pub intensities: Vec<f64>,
}

impl StormSequence {
    pub fn count(&self) -> usize {
        self.intensities.len()
    }
}

pub fn sample_storm_intensities(stream: &SeededStream, stop_threshold: f64) -> Result<StormSequence> {
    sample_storm_intensities_scaled(stream, 1.0, stop_threshold, DEFAULT_STORM_CAP)
}

/// As [`sample_storm_intensities`] for a process of intensity `scale · u⁻² du`.
pub fn sample_storm_intensities_scaled(
    stream: &SeededStream,
    scale: f64,
    stop_threshold: f64,
    cap: usize,
) -> Result<StormSequence> {
    if !(stop_threshold > 0.0) || !stop_threshold.is_finite() {
        return Err(Error::validation(
            "stop threshold",
            format!("must be positive and finite, got {stop_threshold}"),
        ));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::validation("intensity scale", format!("{scale}")));
    }
    // The expected count is scale/threshold; refuse before spinning.
    if scale / stop_threshold > cap as f64 {
        return Err(Error::Resource {
            what: "storm count",
            cap,
        });
    }
    let mut rng = stream.rng();
    // one extra slot for the terminating draw
    let mut gen = StormIntensities::new(scale, cap.saturating_add(1));
    let mut intensities = Vec::new();
    loop {
        let u = gen.next_intensity(&mut rng)?;
        if u < stop_threshold {
            break;
        }
        intensities.push(u);
    }
    Ok(StormSequence { intensities })
}

/// Axis-aligned rectangle `[lo.x1, hi.x1] × [lo.x2, hi.x2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: PlanarSite,
    pub hi: PlanarSite,
}

impl Window {
    pub fn new(lo: PlanarSite, hi: PlanarSite) -> Result<Self> {
        if !(hi.x1 > lo.x1 && hi.x2 > lo.x2) {
            return Err(Error::validation(
                "window",
                format!("zero or negative area: {lo:?} .. {hi:?}"),
            ));
        }
        Ok(Window { lo, hi })
    }

    /// Smallest window containing `sites`, grown by `buffer` on every side.
    pub fn bounding(sites: &[PlanarSite], buffer: f64) -> Result<Self> {
        let first = sites
            .first()
            .ok_or_else(|| Error::validation("site set", "empty"))?;
        let (mut lo, mut hi) = (*first, *first);
        for s in sites {
            lo.x1 = lo.x1.min(s.x1);
            lo.x2 = lo.x2.min(s.x2);
            hi.x1 = hi.x1.max(s.x1);
            hi.x2 = hi.x2.max(s.x2);
        }
        Window::new(
            PlanarSite { x1: lo.x1 - buffer, x2: lo.x2 - buffer },
            PlanarSite { x1: hi.x1 + buffer, x2: hi.x2 + buffer },
        )
    }

    pub fn area(&self) -> f64 {
        (self.hi.x1 - self.lo.x1) * (self.hi.x2 - self.lo.x2)
    }

    pub fn contains(&self, p: &PlanarSite) -> bool {
        p.x1 >= self.lo.x1 && p.x1 <= self.hi.x1 && p.x2 >= self.lo.x2 && p.x2 <= self.hi.x2
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> PlanarSite {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        PlanarSite {
            x1: self.lo.x1 + u * (self.hi.x1 - self.lo.x1),
            x2: self.lo.x2 + v * (self.hi.x2 - self.lo.x2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPoissonSample {
    pub points: Vec<PlanarSite>,
    pub window: Window,
}

/// Homogeneous Poisson process of the given rate on `window`.
pub fn sample_planar_poisson(stream: &SeededStream, window: Window, rate: f64) -> Result<PlanarPoissonSample> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::validation("rate", format!("{rate}")));
    }
    // re-validate: the fields are public
    let window = Window::new(window.lo, window.hi)?;
    let mut rng = stream.rng();
    let n = sample_poisson(&mut rng, rate * window.area());
    let points = (0..n).map(|_| window.sample_uniform(&mut rng)).collect();
    Ok(PlanarPoissonSample { points, window })
}

/// Per-integer counts of the unit-rate Poisson process on ℤ.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerPoissonSample {
    pub counts: BTreeMap<i64, u64>,
}

impl IntegerPoissonSample {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// One Poisson(1) count per integer of `lo..=hi`; empty when `lo > hi`.
pub fn sample_integer_poisson(stream: &SeededStream, lo: i64, hi: i64) -> IntegerPoissonSample {
    let mut rng = stream.rng();
    let counts = if lo > hi {
        BTreeMap::new()
    } else {
        (lo..=hi).map(|k| (k, sample_poisson(&mut rng, 1.0))).collect()
    };
    IntegerPoissonSample { counts }
}

/// Poisson draw: inversion for small means, `rand_distr`'s rejection sampler
/// above [`INVERSION_MAX_MEAN`].
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean <= INVERSION_MAX_MEAN {
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u64;
        // the cdf can stall just below 1 in floating point
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k
    } else {
        let d = rand_distr::Poisson::new(mean).expect("finite positive mean");
        d.sample(rng) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_sd(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    #[test]
    fn storm_sequence_decreasing_and_above_threshold() {
        let s = sample_storm_intensities(&SeededStream::new(1, 2), 0.05).unwrap();
        assert!(s.count() > 0);
        assert!(s.intensities.windows(2).all(|w| w[0] > w[1]));
        assert!(s.intensities.iter().all(|&u| u >= 0.05));
    }

    #[test]
    fn storm_count_is_poisson_mean_one() {
        let counts: Vec<f64> = (0..10_000)
            .map(|i| sample_storm_intensities(&SeededStream::new(7, i), 1.0).unwrap().count() as f64)
            .collect();
        let (m, _) = mean_sd(&counts);
        // Poisson(1): standard error 1/sqrt(n)
        assert!((m - 1.0).abs() < 3.0 / 100.0, "mean {m}");
    }

    #[test]
    fn huge_threshold_gives_empty_sequence() {
        let s = sample_storm_intensities(&SeededStream::new(3, 0), 1e12).unwrap();
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn tiny_threshold_hits_cap() {
        let err = sample_storm_intensities_scaled(&SeededStream::new(3, 0), 1.0, 1e-9, 1000).unwrap_err();
        assert_eq!(err, Error::Resource { what: "storm count", cap: 1000 });
        assert!(sample_storm_intensities(&SeededStream::new(0, 0), 0.0).is_err());
    }

    #[test]
    fn first_intensity_is_standard_frechet() {
        let n = 10_000;
        let firsts: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = SeededStream::new(11, i).rng();
                StormIntensities::new(1.0, 10).next_intensity(&mut rng).unwrap()
            })
            .collect();
        for z in [0.5, 1.0, 2.0] {
            let emp = firsts.iter().filter(|&&u| u <= z).count() as f64 / n as f64;
            assert!((emp - (-1.0 / z).exp()).abs() < 0.02, "z={z} emp={emp}");
        }
    }

    #[test]
    fn scaled_threshold_rule_is_scale_free() {
        // U₁ from (scale 1, threshold s) vs U₁/c from (scale c, threshold cs)
        let c = 5.0;
        let s = 0.5;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..4000u64 {
            if let Some(&u) = sample_storm_intensities_scaled(&SeededStream::new(1, i), 1.0, s, 1000)
                .unwrap()
                .intensities
                .first()
            {
                a.push(u);
            }
            if let Some(&u) = sample_storm_intensities_scaled(&SeededStream::new(2, i), c, c * s, 1000)
                .unwrap()
                .intensities
                .first()
            {
                b.push(u / c);
            }
        }
        let d = ks_two_sample(&mut a, &mut b);
        let (n, m) = (a.len() as f64, b.len() as f64);
        // 1% critical value
        let crit = 1.628 * ((n + m) / (n * m)).sqrt();
        assert!(d < crit, "KS {d} >= {crit}");
    }

    fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn planar_poisson_mean_and_uniformity() {
        let w = Window::new(PlanarSite { x1: 0.0, x2: 0.0 }, PlanarSite { x1: 1.0, x2: 1.0 }).unwrap();
        let mut counts = Vec::new();
        let mut xs = Vec::new();
        for i in 0..10_000 {
            let s = sample_planar_poisson(&SeededStream::new(5, i), w, 1.0).unwrap();
            assert!(s.points.iter().all(|p| w.contains(p)));
            counts.push(s.points.len() as f64);
            xs.extend(s.points.iter().map(|p| p.x1));
        }
        let (m, _) = mean_sd(&counts);
        assert!((m - 1.0).abs() < 0.03, "mean {m}");
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS {ks}");
    }

    #[test]
    fn planar_poisson_rate_zero_and_degenerate_window() {
        let w = Window::new(PlanarSite { x1: 0.0, x2: 0.0 }, PlanarSite { x1: 2.0, x2: 1.0 }).unwrap();
        for i in 0..100 {
            assert!(sample_planar_poisson(&SeededStream::new(5, i), w, 0.0).unwrap().points.is_empty());
        }
        assert!(Window::new(PlanarSite { x1: 0.0, x2: 0.0 }, PlanarSite { x1: 0.0, x2: 1.0 }).is_err());
    }

    #[test]
    fn planar_superposition_matches_double_rate() {
        let w = Window::new(PlanarSite { x1: 0.0, x2: 0.0 }, PlanarSite { x1: 2.0, x2: 1.5 }).unwrap();
        let n = 5000;
        let mut merged = 0.0;
        let mut single = 0.0;
        for i in 0..n {
            merged += (sample_planar_poisson(&SeededStream::new(1, i), w, 0.7).unwrap().points.len()
                + sample_planar_poisson(&SeededStream::new(2, i), w, 0.7).unwrap().points.len())
                as f64;
            single += sample_planar_poisson(&SeededStream::new(3, i), w, 1.4).unwrap().points.len() as f64;
        }
        // both totals ~ Poisson(n·4.2); difference sd = sqrt(2·n·4.2)
        let sd = (2.0 * n as f64 * 4.2f64).sqrt();
        assert!((merged - single).abs() < 3.0 * sd, "merged {merged} single {single}");
    }

    #[test]
    fn integer_poisson_pmf() {
        let n = 10_000;
        let mut hist = [0usize; 3];
        for i in 0..n {
            let s = sample_integer_poisson(&SeededStream::new(9, i), 0, 0);
            let k = s.counts[&0] as usize;
            if k < 3 {
                hist[k] += 1;
            }
        }
        let e = (-1.0f64).exp();
        let pmf = [e, e, e / 2.0];
        for k in 0..3 {
            let emp = hist[k] as f64 / n as f64;
            assert!((emp - pmf[k]).abs() < 0.02, "k={k} emp={emp}");
        }
    }

    #[test]
    fn integer_poisson_additivity_and_empty_range() {
        let totals: Vec<f64> = (0..10_000)
            .map(|i| sample_integer_poisson(&SeededStream::new(4, i), 0, 9).total() as f64)
            .collect();
        let (m, _) = mean_sd(&totals);
        // Poisson(10): se = sqrt(10/n)
        assert!((m - 10.0).abs() < 3.0 * (10.0f64 / 10_000.0).sqrt(), "mean {m}");
        assert!(sample_integer_poisson(&SeededStream::new(4, 0), 3, 2).counts.is_empty());
    }

    #[test]
    fn reproducible_streams() {
        let a = sample_storm_intensities(&SeededStream::new(42, 3), 0.01).unwrap();
        let b = sample_storm_intensities(&SeededStream::new(42, 3), 0.01).unwrap();
        assert_eq!(a, b);
        let c = sample_storm_intensities(&SeededStream::new(42, 4), 0.01).unwrap();
        assert_ne!(a, c);
        let s = SeededStream::new(1, 1);
        assert_eq!(s.substream(5), s.substream(5));
        assert_ne!(s.substream(5), s.substream(6));
    }

    #[test]
    fn poisson_large_mean_branch() {
        let mut rng = SeededStream::new(1, 0).rng();
        let n = 4000;
        let xs: Vec<f64> = (0..n).map(|_| sample_poisson(&mut rng, 100.0) as f64).collect();
        let (m, sd) = mean_sd(&xs);
        assert!((m - 100.0).abs() < 3.0 * 10.0 / (n as f64).sqrt());
        assert!((sd - 10.0).abs() < 0.6);
    }
}
