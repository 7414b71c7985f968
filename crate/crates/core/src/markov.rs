//! Markovian max-autoregressive space-time fields.
//!
//! Simulation keeps the recursion exact: the field at date index `d` is
//! needed at the shifted sites `S^k g` for every grid site `g` and every
//! `k < N − d`, so each date's innovation is simulated on that enlarged
//! site set and no interpolation ever happens.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{PlanarSite, RotationSpec, Site, SiteShift, SphereSite, Translation};
use crate::point_process::SeededStream;
use crate::spatial::{
    ExponentOracle, SchlatherModel, SchlatherParams, SmithModel, SmithParams, SpatialModel, VmfModel, VmfParams,
};

/// Temporal coefficient `a ∈ (0, 1)` and space operator `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovParams<D> {
    a: f64,
    drift: D,
}

impl<D> MarkovParams<D> {
    pub fn new(a: f64, drift: D) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::validation("temporal coefficient a", format!("must lie in (0, 1), got {a}")));
        }
        Ok(MarkovParams { a, drift })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn drift(&self) -> &D {
        &self.drift
    }
}

impl MarkovParams<Translation> {
    pub fn planar(a: f64, tau: [f64; 2]) -> Result<Self> {
        if !(tau[0].is_finite() && tau[1].is_finite()) {
            return Err(Error::validation("drift τ", format!("must be finite, got {tau:?}")));
        }
        Self::new(a, Translation(tau))
    }

    pub fn tau(&self) -> [f64; 2] {
        self.drift.0
    }
}

impl MarkovParams<RotationSpec> {
    pub fn sphere(a: f64, rotation: RotationSpec) -> Result<Self> {
        Self::new(a, rotation)
    }
}

/// Parametrizations of the geometric temporal kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalKernelParams {
    /// `g(t) = ν e^{−νt}`, giving `a = e^{−ν}`.
    ExponentialRate(f64),
    /// Geometric weights with ratio `φ`, giving `a = φ`.
    GeometricPhi(f64),
}

impl TemporalKernelParams {
    pub fn a(&self) -> Result<f64> {
        match *self {
            TemporalKernelParams::ExponentialRate(nu) => {
                if !(nu > 0.0 && nu.is_finite()) {
                    return Err(Error::validation("exponential rate ν", format!("must be positive, got {nu}")));
                }
                Ok((-nu).exp())
            }
            TemporalKernelParams::GeometricPhi(phi) => {
                if !(phi > 0.0 && phi < 1.0) {
                    return Err(Error::validation("geometric ratio φ", format!("must lie in (0, 1), got {phi}")));
                }
                Ok(phi)
            }
        }
    }
}

/// Values on `N` dates × `M` sites, stored date-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField<S> {
    sites: Vec<S>,
    dates: Vec<i64>,
    values: Vec<f64>,
}

impl<S: Site> SpaceTimeField<S> {
    pub fn new(sites: Vec<S>, dates: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if sites.is_empty() || dates.is_empty() {
            return Err(Error::validation("space-time field", "needs at least one site and one date"));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::validation(
                "space-time field dates",
                format!("must be strictly increasing, found {} then {}", w[0], w[1]),
            ));
        }
        if values.len() != sites.len() * dates.len() {
            return Err(Error::validation(
                "space-time field values",
                format!("expected {} values, got {}", sites.len() * dates.len(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::validation(
                "space-time field values",
                format!(
                    "value {} at date {} site {} is not positive and finite",
                    values[i],
                    dates[i / sites.len()],
                    i % sites.len()
                ),
            ));
        }
        Ok(SpaceTimeField { sites, dates, values })
    }

    pub fn sites(&self) -> &[S] {
        &self.sites
    }

    pub fn dates(&self) -> &[i64] {
        &self.dates
    }

    /// All values, date-major: index `d·M + m`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    #[inline]
    pub fn value(&self, date_index: usize, site_index: usize) -> f64 {
        self.values[date_index * self.sites.len() + site_index]
    }

    /// Values at one date index.
    pub fn slice(&self, date_index: usize) -> &[f64] {
        let m = self.sites.len();
        &self.values[date_index * m..(date_index + 1) * m]
    }

    /// Field restricted to a contiguous range of date indices.
    pub fn date_range(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.dates.len() {
            return Err(Error::validation("date range", format!("{range:?} out of 0..{}", self.dates.len())));
        }
        let m = self.sites.len();
        Ok(SpaceTimeField {
            sites: self.sites.clone(),
            dates: self.dates[range.clone()].to_vec(),
            values: self.values[range.start * m..range.end * m].to_vec(),
        })
    }
}

/// Simulated field plus storm diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovRun<S> {
    pub field: SpaceTimeField<S>,
    /// Storms generated over all innovation draws.
    pub storms: usize,
    /// Innovation draws ended by a storm cap instead of the exact stopping rule.
    pub capped_draws: usize,
}

/// One date of the recursion on its enlarged site set.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionLayer<S> {
    /// Distinct sites at which the innovation was drawn.
    pub sites: Vec<S>,
    /// `index[g][k]` locates `S^k g` in `sites`, for `k < N − d`.
    pub index: Vec<Vec<usize>>,
    /// Innovation `Z_d` at `sites`.
    pub innovation: Vec<f64>,
    /// State `X_d(S^k g)` as `state[g][k]`.
    pub state: Vec<Vec<f64>>,
}

fn enlarged_sites<S: Site, D: SiteShift<S>>(grid: &[S], drift: &D, depth: usize) -> (Vec<S>, Vec<Vec<usize>>) {
    let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
    let mut sites = Vec::new();
    let index = grid
        .iter()
        .map(|g| {
            (0..depth)
                .map(|k| {
                    let s = drift.shift(g, k as i64);
                    *seen.entry(s.key()).or_insert_with(|| {
                        sites.push(s);
                        sites.len() - 1
                    })
                })
                .collect()
        })
        .collect();
    (sites, index)
}

fn run_recursion<S, M, D>(
    grid: &[S],
    n_dates: usize,
    model: &M,
    markov: &MarkovParams<D>,
    stream: &SeededStream,
    keep_trace: bool,
) -> Result<(MarkovRun<S>, Vec<RecursionLayer<S>>)>
where
    S: Site,
    M: SpatialModel<S> + ?Sized,
    D: SiteShift<S>,
{
    if grid.is_empty() {
        return Err(Error::validation("site set", "empty"));
    }
    if n_dates == 0 {
        return Err(Error::validation("number of dates", "must be at least 1"));
    }
    let a = markov.a;
    let m = grid.len();
    let mut values = vec![0.0; n_dates * m];
    let mut trace = Vec::new();
    let mut prev: Vec<Vec<f64>> = Vec::new();
    let (mut storms, mut capped_draws) = (0usize, 0usize);
    for d in 0..n_dates {
        let depth = n_dates - d;
        let (sites, index) = enlarged_sites(grid, &markov.drift, depth);
        // date index 0 is the stationary initial state: a plain innovation draw
        let draw = model.simulate_values(&sites, &stream.substream(d as u64))?;
        storms += draw.storms;
        capped_draws += usize::from(draw.capped);
        let state: Vec<Vec<f64>> = index
            .iter()
            .enumerate()
            .map(|(g, row)| {
                row.iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        let z = draw.values[i];
                        if d == 0 {
                            z
                        } else {
                            (a * prev[g][k + 1]).max((1.0 - a) * z)
                        }
                    })
                    .collect()
            })
            .collect();
        for (g, row) in state.iter().enumerate() {
            values[d * m + g] = row[0];
        }
        if keep_trace {
            trace.push(RecursionLayer {
                sites,
                index,
                innovation: draw.values,
                state: state.clone(),
            });
        }
        prev = state;
    }
    let dates = (1..=n_dates as i64).collect();
    Ok((
        MarkovRun {
            field: SpaceTimeField::new(grid.to_vec(), dates, values)?,
            storms,
            capped_draws,
        },
        trace,
    ))
}

/// Simulates `X(d, ·)` on `grid` at dates `1..=n_dates` for any spatial
/// model and space operator. Date index `d` draws its innovation from
/// `stream.substream(d)`.
pub fn simulate_markov<S, M, D>(
    grid: &[S],
    n_dates: usize,
    model: &M,
    markov: &MarkovParams<D>,
    stream: &SeededStream,
) -> Result<MarkovRun<S>>
where
    S: Site,
    M: SpatialModel<S> + ?Sized,
    D: SiteShift<S>,
{
    run_recursion(grid, n_dates, model, markov, stream, false).map(|(run, _)| run)
}

/// As [`simulate_markov`], also returning every enlarged layer.
pub fn simulate_markov_traced<S, M, D>(
    grid: &[S],
    n_dates: usize,
    model: &M,
    markov: &MarkovParams<D>,
    stream: &SeededStream,
) -> Result<(MarkovRun<S>, Vec<RecursionLayer<S>>)>
where
    S: Site,
    M: SpatialModel<S> + ?Sized,
    D: SiteShift<S>,
{
    run_recursion(grid, n_dates, model, markov, stream, true)
}

/// Spatial innovation model of a planar recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanarInnovation {
    Smith(SmithParams),
    Schlather(SchlatherParams),
}

impl PlanarInnovation {
    pub fn model(&self) -> Box<dyn SpatialModel<PlanarSite>> {
        match self {
            PlanarInnovation::Smith(p) => Box::new(SmithModel::new(*p)),
            PlanarInnovation::Schlather(p) => Box::new(SchlatherModel::new(*p)),
        }
    }
}

/// `X(t, x) = max(a X(t−1, x − τ), (1−a) Z(t, x))` on a planar grid.
pub fn simulate_markov_planar(
    grid: &[PlanarSite],
    n_dates: usize,
    spatial: &PlanarInnovation,
    markov: &MarkovParams<Translation>,
    stream: &SeededStream,
) -> Result<MarkovRun<PlanarSite>> {
    let model = spatial.model();
    simulate_markov(grid, n_dates, model.as_ref(), markov, stream).map_err(|e| match e {
        Error::Resource { cap, .. } if matches!(spatial, PlanarInnovation::Schlather(_)) => Error::Resource {
            what: "enlarged Schlather site set (reduce the number of dates or use Smith innovations)",
            cap,
        },
        other => other,
    })
}

/// `X(t, x) = max(a X(t−1, R x), (1−a) Z(t, x))` on the sphere, `R^k`
/// being the rotation by the cumulative angle `kθ`.
pub fn simulate_markov_sphere(
    mesh: &[SphereSite],
    n_dates: usize,
    spatial: &VmfParams,
    markov: &MarkovParams<RotationSpec>,
    stream: &SeededStream,
) -> Result<MarkovRun<SphereSite>> {
    simulate_markov(mesh, n_dates, &VmfModel::new(*spatial), markov, stream)
}

/// Field from the truncated representation
/// `X(t, x) ≈ ⋁_{j=0}^{J} a^j (1−a) Z(t−j, S^j x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingMaxField<S> {
    pub field: SpaceTimeField<S>,
    /// Fréchet mass `a^{J+1}` of the discarded terms.
    pub truncation_mass: f64,
}

/// Truncated moving-max approximation. The innovation at absolute date `s`
/// is drawn from `stream.substream(s as u64)`.
pub fn truncated_moving_max<S, M, D>(
    sites: &[S],
    dates: &[i64],
    model: &M,
    markov: &MarkovParams<D>,
    depth: usize,
    stream: &SeededStream,
) -> Result<MovingMaxField<S>>
where
    S: Site,
    M: SpatialModel<S> + ?Sized,
    D: SiteShift<S>,
{
    if sites.is_empty() || dates.is_empty() {
        return Err(Error::validation("moving max", "needs at least one site and one date"));
    }
    if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::validation("dates", format!("must be strictly increasing, found {} then {}", w[0], w[1])));
    }
    let a = markov.a;
    let m = sites.len();
    let depth_i = depth as i64;
    let mut values = vec![0.0f64; dates.len() * m];
    let first = dates[0] - depth_i;
    let last = *dates.last().expect("non-empty");
    for s in first..=last {
        // (output slot, coefficient) for every term that reads Z(s, ·)
        let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
        let mut zsites = Vec::new();
        let mut terms = Vec::new();
        for (di, &t) in dates.iter().enumerate() {
            let lag = t - s;
            if !(0..=depth_i).contains(&lag) {
                continue;
            }
            let coef = a.powi(lag as i32) * (1.0 - a);
            for (g, x) in sites.iter().enumerate() {
                let y = markov.drift.shift(x, lag);
                let i = *seen.entry(y.key()).or_insert_with(|| {
                    zsites.push(y);
                    zsites.len() - 1
                });
                terms.push((di * m + g, coef, i));
            }
        }
        if zsites.is_empty() {
            continue;
        }
        let draw = model.simulate_values(&zsites, &stream.substream(s as u64))?;
        for (slot, coef, i) in terms {
            let v = coef * draw.values[i];
            if v > values[slot] {
                values[slot] = v;
            }
        }
    }
    Ok(MovingMaxField {
        field: SpaceTimeField::new(sites.to_vec(), dates.to_vec(), values)?,
        truncation_mass: a.powi(depth as i32 + 1),
    })
}

/// `−log P(X(t_m, x_m) ≤ z_m, m = 1..M)` for the planar model, as a
/// weighted sum of exponent functions over the innovation dates feeding
/// each suffix of the (time-ordered) points. Dates may be real.
pub fn finite_dim_neg_log_cdf(
    points: &[(f64, PlanarSite)],
    z: &[f64],
    markov: &MarkovParams<Translation>,
    oracle: &dyn ExponentOracle,
) -> Result<f64> {
    if points.is_empty() || points.len() != z.len() {
        return Err(Error::validation(
            "finite-dimensional CDF",
            format!("{} points but {} thresholds", points.len(), z.len()),
        ));
    }
    if let Some(p) = points.iter().find(|p| !p.0.is_finite()) {
        return Err(Error::validation("dates", format!("must be finite, got {}", p.0)));
    }
    if let Some(w) = points.windows(2).find(|w| w[1].0 < w[0].0) {
        return Err(Error::validation("dates", format!("must be sorted, found {} then {}", w[0].0, w[1].0)));
    }
    if let Some(zi) = z.iter().find(|zi| !(**zi > 0.0)) {
        return Err(Error::validation("thresholds", format!("must be positive, got {zi}")));
    }
    let a = markov.a;
    let tau = markov.tau();
    let mut total = 0.0;
    for m in 0..points.len() {
        let weight = if m == 0 { 1.0 } else { 1.0 - a.powf(points[m].0 - points[m - 1].0) };
        if weight == 0.0 {
            continue;
        }
        let t_m = points[m].0;
        let (sites, args): (Vec<PlanarSite>, Vec<f64>) = points[m..]
            .iter()
            .zip(&z[m..])
            .map(|(&(t, x), &zj)| (x.translate(t - t_m, tau), zj / a.powf(t - t_m)))
            .unzip();
        total += weight * oracle.exponent(&sites, &args)?;
    }
    Ok(total)
}
