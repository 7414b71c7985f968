//! TOML run configuration. Unknown keys are rejected so that a misspelt
//! parameter fails loudly instead of silently falling back to a default.

use std::path::{Path, PathBuf};

use maxstorm::inference::{FitOptions, NelderMeadOptions, PairWeights, ThetaVector, WeightRule};
use maxstorm::markov::PlanarInnovation;
use maxstorm::spatial::{SchlatherParams, SmithParams, VmfParams};
use maxstorm::{MarkovParams, PlanarSite, RotationSpec, SeededStream, SphereSite};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Stream id reserved for drawing random site layouts, away from the
/// replicate ids `0, 1, 2, …`.
pub const GRID_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    pub model: ModelSection,
    #[serde(default)]
    pub markov: MarkovSection,
    pub grid: GridSection,
    #[serde(default)]
    pub dates: DatesSection,
    #[serde(default)]
    pub dependence: DependenceSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub study: StudySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSection {
    Smith {
        /// `[σ₁₁, σ₁₂, σ₂₂]`
        #[serde(default = "identity_sigma")]
        sigma: [f64; 3],
    },
    Schlather {
        c1: f64,
        c2: f64,
    },
    Vmf {
        kappa: f64,
    },
}

fn identity_sigma() -> [f64; 3] {
    [1.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSection {
    #[serde(default = "default_a")]
    pub a: f64,
    /// Planar drift per date.
    #[serde(default = "default_tau")]
    pub tau: [f64; 2],
    /// Sphere rotation per date, in radians, about `rotation_axis`.
    #[serde(default)]
    pub rotation_angle: f64,
    #[serde(default = "default_axis")]
    pub rotation_axis: [f64; 3],
}

fn default_a() -> f64 {
    0.7
}
fn default_tau() -> [f64; 2] {
    [-1.0, -1.0]
}
fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl Default for MarkovSection {
    fn default() -> Self {
        MarkovSection {
            a: default_a(),
            tau: default_tau(),
            rotation_angle: 0.0,
            rotation_axis: default_axis(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSection {
    /// `shape[0] × shape[1]` lattice spanning `[lo, hi]`.
    Regular { lo: [f64; 2], hi: [f64; 2], shape: [usize; 2] },
    /// Sites drawn uniformly on `[lo, hi]` from the run seed.
    Uniform { lo: [f64; 2], hi: [f64; 2], n_sites: usize },
    Points { points: Vec<[f64; 2]> },
    /// Cell-centred colatitudes times equally spaced longitudes.
    SphereLattice { n_colatitude: usize, n_longitude: usize },
    SpherePoints { points: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatesSection {
    /// Dates are `1..=n`.
    #[serde(default = "default_n_dates")]
    pub n: usize,
}

fn default_n_dates() -> usize {
    4
}

impl Default for DatesSection {
    fn default() -> Self {
        DatesSection { n: default_n_dates() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DependenceSection {
    /// `[l, h1, h2]` rows for planar models, `[l, angle]` on the sphere.
    #[serde(default)]
    pub lags: Vec<Vec<f64>>,
    /// Matching radius for irregular sites; exact matching when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_scheme")]
    pub scheme: u8,
    /// `[σ₁₁, σ₁₂, σ₂₂, a, τ₁, τ₂]`; the model parameters when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<[f64; 6]>,
    #[serde(default = "default_xtol")]
    pub xtol: f64,
    #[serde(default = "default_ftol")]
    pub ftol: f64,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    #[serde(default = "default_initial_step")]
    pub initial_step: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Drop date pairs further apart than this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_cutoff: Option<f64>,
    /// Drop site pairs further apart than this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_cutoff: Option<f64>,
}

fn default_scheme() -> u8 {
    1
}
fn default_xtol() -> f64 {
    NelderMeadOptions::default().xtol
}
fn default_ftol() -> f64 {
    NelderMeadOptions::default().ftol
}
fn default_max_evals() -> usize {
    NelderMeadOptions::default().max_evals
}
fn default_initial_step() -> f64 {
    NelderMeadOptions::default().initial_step
}
fn default_restarts() -> usize {
    NelderMeadOptions::default().restarts
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            scheme: default_scheme(),
            init: None,
            xtol: default_xtol(),
            ftol: default_ftol(),
            max_evals: default_max_evals(),
            initial_step: default_initial_step(),
            restarts: default_restarts(),
            temporal_cutoff: None,
            spatial_cutoff: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<u8>,
}

fn default_replicates() -> usize {
    100
}
fn default_schemes() -> Vec<u8> {
    vec![1, 2]
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            replicates: default_replicates(),
            schemes: default_schemes(),
        }
    }
}

/// Site layout after resolving the grid section.
#[derive(Debug, Clone, PartialEq)]
pub enum Sites {
    Planar(Vec<PlanarSite>),
    Sphere(Vec<SphereSite>),
}

/// A parsed configuration together with the file it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub path: PathBuf,
    pub config: RunConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }
}

impl Loaded {
    pub fn from_file(path: &Path) -> CliResult<Loaded> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config = RunConfig::parse(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string().trim_end().to_string(),
        })?;
        let loaded = Loaded { path: path.to_path_buf(), config };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn invalid(&self, field: &str, reason: impl std::fmt::Display) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            reason: format!("{field}: {reason}"),
        }
    }

    fn check<T>(&self, field: &str, r: maxstorm::Result<T>) -> CliResult<T> {
        r.map_err(|e| self.invalid(field, e))
    }

    /// Builds every domain value once so that bad parameters surface at load time.
    fn validate(&self) -> CliResult<()> {
        let c = &self.config;
        if c.dates.n == 0 {
            return Err(self.invalid("[dates] n", "must be at least 1"));
        }
        match self.sites()? {
            Sites::Planar(_) => {
                self.planar_innovation()?;
                self.planar_markov()?;
            }
            Sites::Sphere(_) => {
                self.vmf()?;
                self.sphere_markov()?;
            }
        }
        for (i, lag) in c.dependence.lags.iter().enumerate() {
            let want = if self.is_planar() { 3 } else { 2 };
            if lag.len() != want {
                return Err(self.invalid(
                    "[dependence] lags",
                    format!("entry {i} has {} numbers, expected {want}", lag.len()),
                ));
            }
        }
        if let Some(r) = c.dependence.bin_radius {
            if r.is_nan() || r < 0.0 {
                return Err(self.invalid("[dependence] bin_radius", format!("must be non-negative, got {r}")));
            }
        }
        if !matches!(c.fit.scheme, 1 | 2) {
            return Err(self.invalid("[fit] scheme", format!("must be 1 or 2, got {}", c.fit.scheme)));
        }
        if let Some(s) = c.study.schemes.iter().find(|s| !matches!(s, 1 | 2)) {
            return Err(self.invalid("[study] schemes", format!("must contain only 1 and 2, got {s}")));
        }
        if c.fit.init.is_some() || self.is_smith() {
            self.fit_init()?;
        }
        self.fit_options()?;
        Ok(())
    }

    pub fn is_planar(&self) -> bool {
        !matches!(self.config.model, ModelSection::Vmf { .. })
    }

    pub fn is_smith(&self) -> bool {
        matches!(self.config.model, ModelSection::Smith { .. })
    }

    pub fn seed(&self) -> u64 {
        self.config.run.seed
    }

    pub fn sites(&self) -> CliResult<Sites> {
        let grid = &self.config.grid;
        let sites = match grid {
            GridSection::Regular { lo, hi, shape } => {
                if shape[0] == 0 || shape[1] == 0 {
                    return Err(self.invalid("[grid] shape", "needs at least one site per axis"));
                }
                let axis = |d: usize| -> Vec<f64> {
                    let n = shape[d];
                    (0..n)
                        .map(|i| if n == 1 { lo[d] } else { lo[d] + (hi[d] - lo[d]) * i as f64 / (n - 1) as f64 })
                        .collect()
                };
                let (xs, ys) = (axis(0), axis(1));
                let pts: Vec<[f64; 2]> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect();
                Sites::Planar(self.planar_points(&pts)?)
            }
            GridSection::Uniform { lo, hi, n_sites } => {
                if *n_sites == 0 || !(lo[0] < hi[0] && lo[1] < hi[1]) {
                    return Err(self.invalid("[grid]", "uniform layout needs n_sites ≥ 1 and lo < hi componentwise"));
                }
                let mut rng = SeededStream::new(self.seed(), GRID_STREAM).rng();
                let pts: Vec<[f64; 2]> = (0..*n_sites)
                    .map(|_| [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])])
                    .collect();
                Sites::Planar(self.planar_points(&pts)?)
            }
            GridSection::Points { points } => Sites::Planar(self.planar_points(points)?),
            GridSection::SphereLattice { n_colatitude, n_longitude } => {
                let mut out = Vec::with_capacity(n_colatitude * n_longitude);
                for i in 0..*n_colatitude {
                    let colat = std::f64::consts::PI * (i as f64 + 0.5) / *n_colatitude as f64;
                    for j in 0..*n_longitude {
                        let lon = std::f64::consts::TAU * j as f64 / *n_longitude as f64;
                        out.push(self.check("[grid] sphere lattice", SphereSite::from_angles(colat, lon))?);
                    }
                }
                Sites::Sphere(out)
            }
            GridSection::SpherePoints { points } => Sites::Sphere(
                points
                    .iter()
                    .map(|p| self.check("[grid] points", SphereSite::normalized(*p)))
                    .collect::<CliResult<_>>()?,
            ),
        };
        let (n, planar) = match &sites {
            Sites::Planar(s) => (s.len(), true),
            Sites::Sphere(s) => (s.len(), false),
        };
        if n == 0 {
            return Err(self.invalid("[grid]", "no sites"));
        }
        if planar != self.is_planar() {
            return Err(self.invalid(
                "[grid] kind",
                if planar { "the vmf model needs a sphere grid" } else { "planar models need a planar grid" },
            ));
        }
        Ok(sites)
    }

    fn planar_points(&self, pts: &[[f64; 2]]) -> CliResult<Vec<PlanarSite>> {
        pts.iter().map(|p| self.check("[grid] points", PlanarSite::new(p[0], p[1]))).collect()
    }

    pub fn smith(&self) -> CliResult<SmithParams> {
        match &self.config.model {
            ModelSection::Smith { sigma } => self.check("[model] sigma", SmithParams::new(sigma[0], sigma[1], sigma[2])),
            _ => Err(self.invalid("[model] kind", "this command needs the smith model")),
        }
    }

    pub fn planar_innovation(&self) -> CliResult<PlanarInnovation> {
        match &self.config.model {
            ModelSection::Smith { .. } => Ok(PlanarInnovation::Smith(self.smith()?)),
            ModelSection::Schlather { c1, c2 } => Ok(PlanarInnovation::Schlather(
                self.check("[model] c1/c2", SchlatherParams::new(*c1, *c2))?,
            )),
            ModelSection::Vmf { .. } => Err(self.invalid("[model] kind", "vmf is a sphere model")),
        }
    }

    pub fn vmf(&self) -> CliResult<VmfParams> {
        match &self.config.model {
            ModelSection::Vmf { kappa } => self.check("[model] kappa", VmfParams::new(*kappa)),
            _ => Err(self.invalid("[model] kind", "sphere grids need the vmf model")),
        }
    }

    pub fn planar_markov(&self) -> CliResult<MarkovParams<maxstorm::geometry::Translation>> {
        let m = &self.config.markov;
        self.check("[markov] a/tau", MarkovParams::planar(m.a, m.tau))
    }

    pub fn sphere_markov(&self) -> CliResult<MarkovParams<RotationSpec>> {
        let m = &self.config.markov;
        let rot = self.check("[markov] rotation", RotationSpec::new(m.rotation_angle, m.rotation_axis))?;
        self.check("[markov] a", MarkovParams::sphere(m.a, rot))
    }

    /// Parameters of the simulated model as a fit vector.
    pub fn true_theta(&self) -> CliResult<ThetaVector> {
        Ok(ThetaVector::from_parts(&self.smith()?, &self.planar_markov()?))
    }

    pub fn fit_init(&self) -> CliResult<ThetaVector> {
        match self.config.fit.init {
            Some(v) => self.check("[fit] init", ThetaVector::from_array(v)),
            None => self.true_theta(),
        }
    }

    pub fn fit_options(&self) -> CliResult<FitOptions> {
        let f = &self.config.fit;
        if !(f.xtol > 0.0 && f.ftol >= 0.0 && f.initial_step > 0.0 && f.max_evals > 0) {
            return Err(self.invalid(
                "[fit]",
                "xtol and initial_step must be positive, ftol non-negative, max_evals at least 1",
            ));
        }
        let rule = |field: &str, c: Option<f64>| -> CliResult<WeightRule> {
            match c {
                None => Ok(WeightRule::Constant(1.0)),
                Some(r) if r >= 0.0 => Ok(WeightRule::Cutoff { radius: r }),
                Some(r) => Err(self.invalid(field, format!("must be non-negative, got {r}"))),
            }
        };
        Ok(FitOptions {
            optimizer: NelderMeadOptions {
                xtol: f.xtol,
                ftol: f.ftol,
                max_evals: f.max_evals,
                initial_step: f.initial_step,
                restarts: f.restarts,
            },
            weights: PairWeights {
                temporal: rule("[fit] temporal_cutoff", f.temporal_cutoff)?,
                spatial: rule("[fit] spatial_cutoff", f.spatial_cutoff)?,
            },
        })
    }
}
