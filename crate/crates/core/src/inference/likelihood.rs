//! Pairwise log-likelihoods over space-time observation pairs.
//!
//! Terms are grouped into one block per date pair (or per date for the
//! spatial objective). Each block is summed sequentially and the block
//! totals are combined by pairwise summation in block order, so the
//! result does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PlanarSite;
use crate::markov::SpaceTimeField;
use crate::spatial::SmithParams;

use super::density::log_pair_density;
use super::{require_planar_pairs, ThetaVector};

/// Density values below this are replaced by it before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Weights `ω` for one of the two pair indices (dates or sites).
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// The same weight for every pair.
    Constant(f64),
    /// Weight 1 when the pair's date gap or site distance is at most
    /// `radius`, 0 beyond.
    Cutoff { radius: f64 },
    /// Row-major square matrix over date or site indices.
    Explicit(Vec<f64>),
}

impl WeightRule {
    fn validate(&self, what: &'static str, n: usize) -> Result<()> {
        match self {
            WeightRule::Constant(c) if !(*c >= 0.0 && c.is_finite()) => {
                Err(Error::validation(what, format!("weight must be non-negative, got {c}")))
            }
            WeightRule::Cutoff { radius } if !(*radius >= 0.0) => {
                Err(Error::validation(what, format!("cutoff radius must be non-negative, got {radius}")))
            }
            WeightRule::Explicit(m) => {
                if m.len() != n * n {
                    return Err(Error::validation(what, format!("expected a {n}×{n} matrix, got {} entries", m.len())));
                }
                if let Some(w) = m.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
                    return Err(Error::validation(what, format!("weights must be non-negative, found {w}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    #[inline]
    fn weight(&self, i: usize, j: usize, n: usize, separation: f64) -> f64 {
        match self {
            WeightRule::Constant(c) => *c,
            WeightRule::Cutoff { radius } => f64::from(u8::from(separation <= *radius)),
            WeightRule::Explicit(m) => m[i * n + j],
        }
    }
}

/// Temporal weights `ω_{i,j}` and spatial weights `ω_{k,l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairWeights {
    pub temporal: WeightRule,
    pub spatial: WeightRule,
}

impl Default for PairWeights {
    fn default() -> Self {
        PairWeights {
            temporal: WeightRule::Constant(1.0),
            spatial: WeightRule::Constant(1.0),
        }
    }
}

impl PairWeights {
    fn validate(&self, n_dates: usize, n_sites: usize) -> Result<()> {
        self.temporal.validate("temporal weights", n_dates)?;
        self.spatial.validate("spatial weights", n_sites)
    }
}

/// Value of a pairwise log-likelihood with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikSummary {
    pub value: f64,
    /// Size of the pair index set, including zero-weight pairs.
    pub n_pairs: usize,
    /// Pairs whose density was raised to [`DENSITY_FLOOR`].
    pub n_floored: usize,
}

struct SitePair {
    k: usize,
    l: usize,
    d: [f64; 2],
    weight: f64,
}

fn site_pairs(sites: &[PlanarSite], rule: &WeightRule) -> Vec<SitePair> {
    let m = sites.len();
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for k in 0..m {
        for l in (k + 1)..m {
            let d = sites[l].diff(sites[k]);
            out.push(SitePair {
                k,
                l,
                d,
                weight: rule.weight(k, l, m, d[0].hypot(d[1])),
            });
        }
    }
    out
}

pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (lo, hi) = xs.split_at(xs.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

struct Block {
    i: usize,
    j: usize,
    weight: f64,
}

fn block_sum(
    data: &SpaceTimeField<PlanarSite>,
    block: &Block,
    pairs: &[SitePair],
    smith: &SmithParams,
    a: f64,
    tau: [f64; 2],
) -> Result<(f64, usize)> {
    let log_floor = DENSITY_FLOOR.ln();
    let dates = data.dates();
    let lag = (dates[block.j] - dates[block.i]) as f64;
    let first = data.slice(block.i);
    let second = data.slice(block.j);
    let mut sum = 0.0;
    let mut floored = 0;
    for p in pairs {
        let w = block.weight * p.weight;
        if w == 0.0 {
            continue;
        }
        let name = || {
            format!(
                "pair (t={}, site {}) – (t={}, site {})",
                dates[block.i], p.k, dates[block.j], p.l
            )
        };
        let ld = log_pair_density(first[p.k], second[p.l], lag, p.d, smith, a, tau).map_err(|e| match e {
            Error::DegeneratePair(r) => Error::DegeneratePair(format!("{}: {r}", name())),
            Error::Numerical { reason, .. } => Error::numerical("pairwise log-likelihood", format!("{}: {reason}", name())),
            other => other,
        })?;
        let ld = if ld < log_floor {
            floored += 1;
            log_floor
        } else {
            ld
        };
        if !ld.is_finite() {
            return Err(Error::numerical("pairwise log-likelihood", format!("{}: log density {ld}", name())));
        }
        sum += w * ld;
    }
    Ok((sum, floored))
}

fn reduce(
    data: &SpaceTimeField<PlanarSite>,
    blocks: &[Block],
    pairs: &[SitePair],
    smith: &SmithParams,
    a: f64,
    tau: [f64; 2],
) -> Result<LoglikSummary> {
    let any_weight = blocks.iter().any(|b| b.weight > 0.0) && pairs.iter().any(|p| p.weight > 0.0);
    if !any_weight {
        return Err(Error::validation("pair weights", "every pair has zero weight"));
    }
    let parts: Vec<(f64, usize)> = blocks
        .par_iter()
        .map(|b| {
            if b.weight == 0.0 {
                Ok((0.0, 0))
            } else {
                block_sum(data, b, pairs, smith, a, tau)
            }
        })
        .collect::<Result<_>>()?;
    let sums: Vec<f64> = parts.iter().map(|p| p.0).collect();
    Ok(LoglikSummary {
        value: pairwise_sum(&sums),
        n_pairs: blocks.len() * pairs.len(),
        n_floored: parts.iter().map(|p| p.1).sum(),
    })
}

/// `Σ_{i<j} Σ_{k<l} ω_{i,j} ω_{k,l} log f((t_i, x_k), (t_j, x_l))` with
/// bookkeeping. Same-date and same-site pairs are not part of the index set.
pub fn pairwise_loglik_detailed(
    data: &SpaceTimeField<PlanarSite>,
    theta: &ThetaVector,
    weights: &PairWeights,
) -> Result<LoglikSummary> {
    require_planar_pairs(data.n_sites(), data.n_dates(), 2)?;
    weights.validate(data.n_dates(), data.n_sites())?;
    let smith = theta.smith()?;
    theta.markov()?;
    let n = data.n_dates();
    let dates = data.dates();
    let mut blocks = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (dates[j] - dates[i]) as f64;
            blocks.push(Block {
                i,
                j,
                weight: weights.temporal.weight(i, j, n, gap),
            });
        }
    }
    let pairs = site_pairs(data.sites(), &weights.spatial);
    reduce(data, &blocks, &pairs, &smith, theta.a, [theta.tau1, theta.tau2])
}

/// Space-time pairwise log-likelihood value.
pub fn pairwise_loglik(data: &SpaceTimeField<PlanarSite>, theta: &ThetaVector, weights: &PairWeights) -> Result<f64> {
    pairwise_loglik_detailed(data, theta, weights).map(|s| s.value)
}

/// `Σ_i Σ_{k<l} ω_{k,l} log f((t_i, x_k), (t_i, x_l))` over same-date pairs.
/// Temporal weights do not enter.
pub fn spatial_pairwise_loglik_detailed(
    data: &SpaceTimeField<PlanarSite>,
    sigma: &SmithParams,
    weights: &PairWeights,
) -> Result<LoglikSummary> {
    require_planar_pairs(data.n_sites(), data.n_dates(), 1)?;
    weights.validate(data.n_dates(), data.n_sites())?;
    let blocks: Vec<Block> = (0..data.n_dates()).map(|i| Block { i, j: i, weight: 1.0 }).collect();
    let pairs = site_pairs(data.sites(), &weights.spatial);
    // a and τ drop out at lag zero
    reduce(data, &blocks, &pairs, sigma, 0.5, [0.0, 0.0])
}

pub fn spatial_pairwise_loglik(
    data: &SpaceTimeField<PlanarSite>,
    sigma: &SmithParams,
    weights: &PairWeights,
) -> Result<f64> {
    spatial_pairwise_loglik_detailed(data, sigma, weights).map(|s| s.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::bivariate_density;
    use crate::markov::{simulate_markov_planar, PlanarInnovation};
    use crate::point_process::SeededStream;

    fn theta0() -> ThetaVector {
        ThetaVector::new(1.0, 0.0, 1.0, 0.7, -1.0, -1.0).unwrap()
    }

    fn simulated(m: usize, n: usize, seed: u64) -> SpaceTimeField<PlanarSite> {
        let grid: Vec<_> = (0..m)
            .map(|i| PlanarSite { x1: (i % 4) as f64 * 1.3, x2: (i / 4) as f64 * 0.9 })
            .collect();
        let th = theta0();
        simulate_markov_planar(
            &grid,
            n,
            &PlanarInnovation::Smith(th.smith().unwrap()),
            &th.markov().unwrap(),
            &SeededStream::new(seed, 0),
        )
        .unwrap()
        .field
    }

    #[test]
    fn smallest_index_set_is_one_term() {
        let f = simulated(2, 2, 1);
        let ll = pairwise_loglik_detailed(&f, &theta0(), &PairWeights::default()).unwrap();
        assert_eq!(ll.n_pairs, 1);
        let s = f.sites();
        let direct = bivariate_density(f.value(0, 0), f.value(1, 1), 1.0, 2.0, s[0], s[1], &theta0()).unwrap();
        assert!((ll.value - direct.ln()).abs() < 1e-13);
    }

    #[test]
    fn index_set_size() {
        let f = simulated(6, 5, 2);
        let ll = pairwise_loglik_detailed(&f, &theta0(), &PairWeights::default()).unwrap();
        assert_eq!(ll.n_pairs, 10 * 15);
        let sp = spatial_pairwise_loglik_detailed(&f, &theta0().smith().unwrap(), &PairWeights::default()).unwrap();
        assert_eq!(sp.n_pairs, 5 * 15);
    }

    #[test]
    fn linear_in_weights() {
        let f = simulated(5, 4, 3);
        let base = pairwise_loglik(&f, &theta0(), &PairWeights::default()).unwrap();
        let doubled = PairWeights { temporal: WeightRule::Constant(2.0), ..PairWeights::default() };
        let twice = pairwise_loglik(&f, &theta0(), &doubled).unwrap();
        assert!((twice - 2.0 * base).abs() < 1e-10 * base.abs());
    }

    #[test]
    fn zero_weights_rejected() {
        let f = simulated(3, 3, 4);
        let w = PairWeights { spatial: WeightRule::Constant(0.0), ..PairWeights::default() };
        assert!(pairwise_loglik(&f, &theta0(), &w).is_err());
        let bad = PairWeights { spatial: WeightRule::Explicit(vec![1.0; 4]), ..PairWeights::default() };
        assert!(pairwise_loglik(&f, &theta0(), &bad).is_err());
    }

    #[test]
    fn cutoff_drops_distant_pairs() {
        let f = simulated(4, 4, 5);
        let w = PairWeights { temporal: WeightRule::Cutoff { radius: 1.0 }, ..PairWeights::default() };
        let cut = pairwise_loglik(&f, &theta0(), &w).unwrap();
        // lag-1 blocks only, explicit weights selecting the same pairs
        let mut m = vec![0.0; 16];
        for i in 0..3 {
            m[i * 4 + i + 1] = 1.0;
        }
        let w2 = PairWeights { temporal: WeightRule::Explicit(m), ..PairWeights::default() };
        assert_eq!(cut, pairwise_loglik(&f, &theta0(), &w2).unwrap());
    }

    #[test]
    fn spatial_single_term() {
        let f = simulated(2, 1, 6);
        let s = f.sites();
        let ll = spatial_pairwise_loglik(&f, &SmithParams::identity(), &PairWeights::default()).unwrap();
        let direct = bivariate_density(f.value(0, 0), f.value(0, 1), 1.0, 1.0, s[0], s[1], &theta0()).unwrap();
        assert!((ll - direct.ln()).abs() < 1e-13);
    }

    #[test]
    fn duplicate_sites_name_the_pair() {
        let s = PlanarSite { x1: 0.0, x2: 0.0 };
        let f = SpaceTimeField::new(vec![s, s], vec![1], vec![1.0, 2.0]).unwrap();
        let err = spatial_pairwise_loglik(&f, &SmithParams::identity(), &PairWeights::default()).unwrap_err();
        match err {
            Error::DegeneratePair(msg) => assert!(msg.contains("site 0") && msg.contains("site 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn thread_count_does_not_change_value() {
        let f = simulated(8, 6, 7);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| pairwise_loglik(&f, &theta0(), &PairWeights::default()).unwrap())
        };
        let one = run(1);
        assert_eq!(one.to_bits(), run(3).to_bits());
        assert_eq!(one.to_bits(), run(4).to_bits());
    }

    #[test]
    fn date_reindexing_preserving_pairs() {
        // shifting all dates leaves every lag unchanged
        let f = simulated(4, 3, 8);
        let shifted = SpaceTimeField::new(f.sites().to_vec(), vec![11, 12, 13], f.values().to_vec()).unwrap();
        assert_eq!(
            pairwise_loglik(&f, &theta0(), &PairWeights::default()).unwrap(),
            pairwise_loglik(&shifted, &theta0(), &PairWeights::default()).unwrap()
        );
    }

    #[test]
    fn spatial_invariant_to_site_permutation() {
        let f = simulated(5, 3, 9);
        let perm = [3, 0, 4, 2, 1];
        let sites: Vec<_> = perm.iter().map(|&k| f.sites()[k]).collect();
        let values: Vec<f64> = (0..3).flat_map(|d| perm.iter().map(move |&k| (d, k))).map(|(d, k)| f.value(d, k)).collect();
        let g = SpaceTimeField::new(sites, f.dates().to_vec(), values).unwrap();
        let sigma = SmithParams::new(1.2, 0.2, 0.9).unwrap();
        let a = spatial_pairwise_loglik(&f, &sigma, &PairWeights::default()).unwrap();
        let b = spatial_pairwise_loglik(&g, &sigma, &PairWeights::default()).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs());
    }
}
