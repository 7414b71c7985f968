//! The four subcommands. Each returns the paths it wrote.
//!
//! Everything a command writes is a function of the config, the inputs and
//! the seed, except the `*timing.json` sidecars, which hold wall times.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use maxstorm::dependence::{
    empirical_madogram, extremal_coefficient, theta_to_madogram, LagMatching, LagSpec, EXACT_LAG_TOLERANCE,
};
use maxstorm::inference::{fit_scheme1, fit_scheme2, FitOptions, FitReport, ThetaVector};
use maxstorm::markov::{simulate_markov_planar, simulate_markov_sphere};
use maxstorm::{PlanarSite, SeededStream, SpaceTimeField};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Loaded, RunConfig, Sites, GRID_STREAM};
use crate::error::{CliError, CliResult};
use crate::field_io::{csv_error, csv_writer, fmt_f64, read_field, read_planar_field, write_field, AnyField};

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct Timing {
    command: &'static str,
    wall_time_s: f64,
}

fn write_timing(path: &Path, command: &'static str, started: Instant) -> CliResult<()> {
    write_json(
        path,
        &Timing {
            command,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    )
}

#[derive(Serialize)]
struct NamedTheta {
    sigma11: f64,
    sigma12: f64,
    sigma22: f64,
    a: f64,
    tau1: f64,
    tau2: f64,
}

impl From<&ThetaVector> for NamedTheta {
    fn from(t: &ThetaVector) -> Self {
        NamedTheta {
            sigma11: t.sigma11,
            sigma12: t.sigma12,
            sigma22: t.sigma22,
            a: t.a,
            tau1: t.tau1,
            tau2: t.tau2,
        }
    }
}

#[derive(Serialize)]
struct SimulateMetadata<'a> {
    config: &'a RunConfig,
    seed: u64,
    /// Stream ids: the simulation uses `simulation`, random layouts `grid`.
    simulation_stream: u64,
    grid_stream: u64,
    n_sites: usize,
    dates: Vec<i64>,
    storms: usize,
    capped_draws: usize,
}

/// Field of `replicate` on the configured sites; replicate 0 is what
/// `simulate` writes.
pub fn simulate_planar(cfg: &Loaded, grid: &[PlanarSite], replicate: u64) -> CliResult<(SpaceTimeField<PlanarSite>, usize, usize)> {
    let run = simulate_markov_planar(
        grid,
        cfg.config.dates.n,
        &cfg.planar_innovation()?,
        &cfg.planar_markov()?,
        &SeededStream::new(cfg.seed(), replicate),
    )?;
    Ok((run.field, run.storms, run.capped_draws))
}

pub fn simulate(config: &Path, out: &Path) -> CliResult<Vec<PathBuf>> {
    let started = Instant::now();
    let cfg = Loaded::from_file(config)?;
    create_dir(out)?;
    let field_path = out.join("field.csv");
    let (n_sites, dates, storms, capped) = match cfg.sites()? {
        Sites::Planar(grid) => {
            let (field, storms, capped) = simulate_planar(&cfg, &grid, 0)?;
            write_field(&field_path, &field)?;
            (field.n_sites(), field.dates().to_vec(), storms, capped)
        }
        Sites::Sphere(mesh) => {
            let run = simulate_markov_sphere(
                &mesh,
                cfg.config.dates.n,
                &cfg.vmf()?,
                &cfg.sphere_markov()?,
                &SeededStream::new(cfg.seed(), 0),
            )?;
            write_field(&field_path, &run.field)?;
            (run.field.n_sites(), run.field.dates().to_vec(), run.storms, run.capped_draws)
        }
    };
    if capped > 0 {
        warn!("{capped} innovation draws stopped at the storm cap; those values are approximate");
    }
    let meta_path = out.join("metadata.json");
    write_json(
        &meta_path,
        &SimulateMetadata {
            config: &cfg.config,
            seed: cfg.seed(),
            simulation_stream: 0,
            grid_stream: GRID_STREAM,
            n_sites,
            dates,
            storms,
            capped_draws: capped,
        },
    )?;
    let timing_path = out.join("timing.json");
    write_timing(&timing_path, "simulate", started)?;
    Ok(vec![field_path, meta_path, timing_path])
}

fn lag_spec(cfg: &Loaded, lag: &[f64]) -> LagSpec {
    if cfg.is_planar() {
        LagSpec::planar(lag[0], [lag[1], lag[2]])
    } else {
        LagSpec::angle(lag[0], lag[1])
    }
}

fn empirical<S: maxstorm::dependence::LagSite>(
    field: &SpaceTimeField<S>,
    lag: &LagSpec,
    matching: &LagMatching,
) -> CliResult<Option<(f64, f64, usize)>> {
    match empirical_madogram(field, lag, matching) {
        Ok(e) => Ok(Some((e.theta_hat()?, e.nu_hat, e.n_pairs))),
        Err(maxstorm::Error::NoMatchingPairs(msg)) => {
            warn!("no observation pairs: {msg}; empirical columns left empty");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn dependence(config: &Path, field: Option<&Path>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let cfg = Loaded::from_file(config)?;
    let data = field.map(read_field).transpose()?;
    match (&data, cfg.is_planar()) {
        (Some(AnyField::Sphere(_)), true) | (Some(AnyField::Planar(_)), false) => {
            return Err(CliError::Usage(format!(
                "the field file's geometry does not match the configured model {:?}",
                cfg.config.model
            )));
        }
        _ => {}
    }
    let analytic = if cfg.is_smith() {
        Some((cfg.smith()?, cfg.planar_markov()?))
    } else {
        warn!("closed-form extremal coefficients exist only for the smith model; analytic columns left empty");
        None
    };
    let matching = LagMatching {
        tolerance: EXACT_LAG_TOLERANCE,
        bin_radius: cfg.config.dependence.bin_radius,
    };
    if cfg.config.dependence.lags.is_empty() {
        warn!("[dependence] lags is empty; writing a header only");
    }
    let mut w = csv_writer(out)?;
    let space_cols: &[&str] = if cfg.is_planar() { &["h1", "h2"] } else { &["angle"] };
    let mut header = vec!["l"];
    header.extend_from_slice(space_cols);
    header.extend_from_slice(&["theta_analytic", "nu_analytic", "theta_empirical", "nu_empirical", "n_pairs"]);
    w.write_record(&header).map_err(|e| csv_error(out, e))?;
    for lag in &cfg.config.dependence.lags {
        let spec = lag_spec(&cfg, lag);
        let mut row: Vec<String> = lag.iter().map(|&x| fmt_f64(x)).collect();
        match &analytic {
            Some((s, m)) => {
                let theta = extremal_coefficient(&spec, s, m)?;
                row.push(fmt_f64(theta));
                row.push(fmt_f64(theta_to_madogram(theta)));
            }
            None => row.extend([String::new(), String::new()]),
        }
        let emp = match &data {
            Some(AnyField::Planar(f)) => empirical(f, &spec, &matching)?,
            Some(AnyField::Sphere(f)) => empirical(f, &spec, &matching)?,
            None => None,
        };
        match emp {
            Some((theta, nu, n)) => row.extend([fmt_f64(theta), fmt_f64(nu), n.to_string()]),
            None if data.is_some() => row.extend([String::new(), String::new(), "0".to_string()]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(&row).map_err(|e| csv_error(out, e))?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;
    Ok(vec![out.to_path_buf()])
}

#[derive(Serialize)]
struct FitJson {
    scheme: u8,
    theta_hat: NamedTheta,
    loglik: f64,
    n_pairs: usize,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    init: NamedTheta,
}

fn run_fit(data: &SpaceTimeField<PlanarSite>, scheme: u8, init: &ThetaVector, options: &FitOptions) -> maxstorm::Result<FitReport> {
    match scheme {
        1 => fit_scheme1(data, init, options),
        _ => fit_scheme2(data, init, options),
    }
}

pub fn fit(config: &Path, field: &Path, scheme: Option<u8>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let started = Instant::now();
    let cfg = Loaded::from_file(config)?;
    let scheme = scheme.unwrap_or(cfg.config.fit.scheme);
    if !matches!(scheme, 1 | 2) {
        return Err(CliError::Usage(format!("--scheme must be 1 or 2, got {scheme}")));
    }
    let data = read_planar_field(field)?;
    let init = cfg.fit_init()?;
    let report = run_fit(&data, scheme, &init, &cfg.fit_options()?)?;
    if !report.converged {
        warn!("optimizer stopped after {} evaluations without converging", report.evaluations);
    }
    write_json(
        out,
        &FitJson {
            scheme,
            theta_hat: (&report.theta_hat).into(),
            loglik: report.loglik,
            n_pairs: report.n_pairs,
            iterations: report.iterations,
            evaluations: report.evaluations,
            converged: report.converged,
            init: (&init).into(),
        },
    )?;
    let timing_path = out.with_extension("timing.json");
    write_timing(&timing_path, "fit", started)?;
    Ok(vec![out.to_path_buf(), timing_path])
}

/// Outcome of one (replicate, scheme) fit.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub replicate: usize,
    pub scheme: u8,
    pub result: Result<FitReport, String>,
}

/// Per-parameter summary of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: u8,
    pub parameter: &'static str,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub stdev: f64,
    pub n_used: usize,
    pub excluded: usize,
}

pub fn summarize(rows: &[StudyRow], schemes: &[u8], truth: &ThetaVector) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &scheme in schemes {
        let ok: Vec<[f64; 6]> = rows
            .iter()
            .filter(|r| r.scheme == scheme)
            .filter_map(|r| r.result.as_ref().ok().map(|f| f.theta_hat.to_array()))
            .collect();
        let total = rows.iter().filter(|r| r.scheme == scheme).count();
        let n = ok.len();
        for (p, name) in ThetaVector::NAMES.iter().enumerate() {
            let mean = ok.iter().map(|v| v[p]).sum::<f64>() / n as f64;
            let var = ok.iter().map(|v| (v[p] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let t = truth.to_array()[p];
            out.push(SummaryRow {
                scheme,
                parameter: name,
                truth: t,
                mean,
                bias: mean - t,
                stdev: var.sqrt(),
                n_used: n,
                excluded: total - n,
            });
        }
    }
    out
}

#[derive(Serialize)]
struct StudyMetadata<'a> {
    config: &'a RunConfig,
    replicates: usize,
    schemes: &'a [u8],
    truth: NamedTheta,
    init: NamedTheta,
    n_sites: usize,
    sites: Vec<[f64; 2]>,
}

pub fn mc_study(config: &Path, replicates: Option<usize>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let started = Instant::now();
    let cfg = Loaded::from_file(config)?;
    let r = replicates.unwrap_or(cfg.config.study.replicates);
    if r < 2 {
        return Err(CliError::Usage(format!("the study needs at least 2 replicates, got {r}")));
    }
    let truth = cfg.true_theta()?;
    let init = cfg.fit_init()?;
    let options = cfg.fit_options()?;
    let Sites::Planar(grid) = cfg.sites()? else {
        return Err(cfg.invalid("[grid] kind", "the study fits planar fields"));
    };
    let schemes = cfg.config.study.schemes.clone();
    let rows: Vec<Vec<StudyRow>> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let field = simulate_planar(&cfg, &grid, rep as u64);
            schemes
                .iter()
                .map(|&scheme| StudyRow {
                    replicate: rep,
                    scheme,
                    result: match &field {
                        Ok((f, _, _)) => run_fit(f, scheme, &init, &options).map_err(|e| e.to_string()),
                        Err(e) => Err(format!("simulation failed: {e}")),
                    },
                })
                .collect()
        })
        .collect();
    let rows: Vec<StudyRow> = rows.into_iter().flatten().collect();
    for row in rows.iter().filter(|r| r.result.is_err()) {
        warn!("replicate {} scheme {} excluded: {}", row.replicate, row.scheme, row.result.as_ref().unwrap_err());
    }

    create_dir(out)?;
    let est_path = out.join("estimates.csv");
    let mut w = csv_writer(&est_path)?;
    let mut header = vec!["replicate", "scheme", "status"];
    header.extend_from_slice(&ThetaVector::NAMES);
    header.extend_from_slice(&["loglik", "converged", "evaluations"]);
    w.write_record(&header).map_err(|e| csv_error(&est_path, e))?;
    for row in &rows {
        let mut rec = vec![row.replicate.to_string(), row.scheme.to_string()];
        match &row.result {
            Ok(f) => {
                rec.push("ok".into());
                rec.extend(f.theta_hat.to_array().iter().map(|&x| fmt_f64(x)));
                rec.extend([fmt_f64(f.loglik), f.converged.to_string(), f.evaluations.to_string()]);
            }
            Err(msg) => {
                rec.push(format!("failed: {msg}"));
                rec.extend(std::iter::repeat_n(String::new(), 9));
            }
        }
        w.write_record(&rec).map_err(|e| csv_error(&est_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&est_path, e))?;

    let sum_path = out.join("summary.csv");
    let mut w = csv_writer(&sum_path)?;
    w.write_record(["scheme", "parameter", "true", "mean", "bias", "stdev", "n_used", "excluded"])
        .map_err(|e| csv_error(&sum_path, e))?;
    for s in summarize(&rows, &schemes, &truth) {
        w.write_record([
            s.scheme.to_string(),
            s.parameter.to_string(),
            fmt_f64(s.truth),
            fmt_f64(s.mean),
            fmt_f64(s.bias),
            fmt_f64(s.stdev),
            s.n_used.to_string(),
            s.excluded.to_string(),
        ])
        .map_err(|e| csv_error(&sum_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&sum_path, e))?;

    let meta_path = out.join("metadata.json");
    write_json(
        &meta_path,
        &StudyMetadata {
            config: &cfg.config,
            replicates: r,
            schemes: &schemes,
            truth: (&truth).into(),
            init: (&init).into(),
            n_sites: grid.len(),
            sites: grid.iter().map(|s| [s.x1, s.x2]).collect(),
        },
    )?;
    let timing_path = out.join("timing.json");
    write_timing(&timing_path, "mc-study", started)?;
    Ok(vec![est_path, sum_path, meta_path, timing_path])
}
