//! Nelder–Mead simplex minimization with per-coordinate reparametrization.

use crate::error::{Error, Result};

/// Map from an unconstrained internal coordinate to the natural one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// Natural value `e^y > 0`.
    Log,
    /// Natural value `1/(1 + e^{−y}) ∈ (0, 1)`.
    Logit,
}

impl Transform {
    fn to_internal(self, x: f64) -> Option<f64> {
        match self {
            Transform::Identity => x.is_finite().then_some(x),
            Transform::Log => (x > 0.0 && x.is_finite()).then(|| x.ln()),
            Transform::Logit => (x > 0.0 && x < 1.0).then(|| (x / (1.0 - x)).ln()),
        }
    }

    fn to_natural(self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Log => y.exp().clamp(f64::MIN_POSITIVE, f64::MAX),
            Transform::Logit => {
                let x = if y >= 0.0 { 1.0 / (1.0 + (-y).exp()) } else { y.exp() / (1.0 + y.exp()) };
                // keep the open interval even where the logistic rounds to 0 or 1
                x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Simplex diameter (max-norm, internal coordinates) below which the
    /// simplex counts as collapsed.
    pub xtol: f64,
    /// Bound on the spread of objective values over the simplex, relative
    /// to `max(1, |f_best|)`. Convergence needs both tolerances.
    pub ftol: f64,
    pub max_evals: usize,
    /// Edge length of the starting simplex in internal coordinates.
    pub initial_step: f64,
    /// Fresh simplices built around the best vertex after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            xtol: 1e-6,
            ftol: 1e-8,
            max_evals: 5000,
            initial_step: 0.2,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadReport {
    /// Best point in natural coordinates.
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<'a, F> {
    f: &'a mut F,
    transforms: &'a [Transform],
    evals: usize,
    natural: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<'_, F> {
    fn eval(&mut self, y: &[f64]) -> f64 {
        self.evals += 1;
        for ((n, t), yi) in self.natural.iter_mut().zip(self.transforms).zip(y) {
            *n = t.to_natural(*yi);
        }
        let v = (self.f)(&self.natural);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// One simplex descent from `start`. Returns (best, f_best, iterations, converged).
fn descend<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<'_, F>,
    start: &[f64],
    f_start: f64,
    opts: &NelderMeadOptions,
) -> (Vec<f64>, f64, usize, bool) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f_start));
    for i in 0..n {
        let mut y = start.to_vec();
        y[i] += opts.initial_step * start[i].abs().max(1.0);
        let f = obj.eval(&y);
        simplex.push((y, f));
    }
    let mut iterations = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(y, _)| y.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.xtol && (worst - best).abs() <= opts.ftol * best.abs().max(1.0) {
            return (simplex[0].0.clone(), best, iterations, true);
        }
        if obj.evals >= opts.max_evals {
            return (simplex[0].0.clone(), best, iterations, false);
        }
        iterations += 1;
        let mut centroid = vec![0.0; n];
        for (y, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(y) {
                *c += v / n as f64;
            }
        }
        let toward = |coef: f64, target: &[f64]| -> Vec<f64> {
            centroid.iter().zip(target).map(|(c, t)| c + coef * (t - c)).collect()
        };
        let reflected = toward(-REFLECT, &simplex[n].0);
        let fr = obj.eval(&reflected);
        if fr < best {
            let expanded = toward(EXPAND, &reflected);
            let fe = obj.eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        let (contracted, accept) = if fr < worst {
            let c = toward(CONTRACT, &reflected);
            let fc = obj.eval(&c);
            let ok = fc <= fr;
            ((c, fc), ok)
        } else {
            let c = toward(CONTRACT, &simplex[n].0);
            let fc = obj.eval(&c);
            let ok = fc < worst;
            ((c, fc), ok)
        };
        if accept {
            simplex[n] = contracted;
            continue;
        }
        let anchor = simplex[0].0.clone();
        for (y, f) in simplex[1..].iter_mut() {
            for (v, a) in y.iter_mut().zip(&anchor) {
                *v = a + SHRINK * (*v - a);
            }
            *f = obj.eval(y);
        }
    }
}

/// Minimizes `objective` (evaluated in natural coordinates) starting from
/// `init`. Non-finite objective values count as `+∞` except at `init`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    init: &[f64],
    transforms: &[Transform],
    options: &NelderMeadOptions,
) -> Result<NelderMeadReport> {
    if init.is_empty() || init.len() != transforms.len() {
        return Err(Error::validation(
            "optimizer start",
            format!("{} coordinates but {} transforms", init.len(), transforms.len()),
        ));
    }
    let start: Vec<f64> = init
        .iter()
        .zip(transforms)
        .map(|(x, t)| {
            t.to_internal(*x)
                .ok_or_else(|| Error::validation("optimizer start", format!("{x} is outside the range of {t:?}")))
        })
        .collect::<Result<_>>()?;
    let mut obj = Counted {
        f: &mut objective,
        transforms,
        evals: 0,
        natural: vec![0.0; init.len()],
    };
    let f0 = obj.eval(&start);
    if !f0.is_finite() {
        return Err(Error::validation("optimizer start", format!("objective is {f0} at {init:?}")));
    }
    let (mut best, mut f_best, mut iterations, mut converged) = descend(&mut obj, &start, f0, options);
    for _ in 0..options.restarts {
        if !converged {
            break;
        }
        let (b, f, it, c) = descend(&mut obj, &best, f_best, options);
        iterations += it;
        converged = c;
        if f <= f_best {
            best = b;
            f_best = f;
        }
    }
    Ok(NelderMeadReport {
        x: best.iter().zip(transforms).map(|(y, t)| t.to_natural(*y)).collect(),
        f: f_best,
        iterations,
        evaluations: obj.evals,
        converged: converged && obj.evals <= options.max_evals,
    })
}
