//! Maximum likelihood fitting of the wind-deformed covariance.
//!
//! The search runs over log-transformed `sigma2`, `phi`, `nugget`, `gamma`
//! (or `gamma_prime` under the wind-speed link) and the raw angle, so every
//! proposal satisfies the positivity constraints. The constant mean is
//! profiled out. Several restarts spread the initial angle over `[0, pi)`.
//!
//! When `phi`, `gamma` and `theta` are all free the result is reported in the
//! canonical form `gamma >= 1`, since `gamma < 1` at `theta` is the same
//! kernel as `1/gamma` at `theta + pi/2` with a rescaled range.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wind_link_gamma, Angle};
use crate::inference::likelihood::profile_negative_log_likelihood;
use crate::inference::optimize::{nelder_mead, NelderMeadOptions};
use crate::kernel::{CovarianceModel, KernelFamily};
use crate::sites::FieldSample;

/// Covariance parameters that can be held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Sigma2,
    Phi,
    Nugget,
    Gamma,
    Theta,
}

impl Param {
    pub const ALL: [Param; 5] = [Param::Sigma2, Param::Phi, Param::Nugget, Param::Gamma, Param::Theta];

    pub fn name(self) -> &'static str {
        match self {
            Param::Sigma2 => "sigma2",
            Param::Phi => "phi",
            Param::Nugget => "nugget",
            Param::Gamma => "gamma",
            Param::Theta => "theta",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::InvalidParameter {
            name: "fixed",
            reason: format!("unknown parameter `{s}`"),
        })
    }
}

/// How the relative stretch is searched.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StretchMode {
    /// Search `log gamma` directly.
    #[default]
    Direct,
    /// Search `gamma_prime` with `gamma = exp(wind_speed * gamma_prime)`.
    WindLink { wind_speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub optimizer: NelderMeadOptions,
    /// Seeds the jitter of the restart angles.
    pub seed: u64,
    pub stretch: StretchMode,
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 5,
            optimizer: NelderMeadOptions::default(),
            seed: 0,
            stretch: StretchMode::Direct,
            standard_errors: true,
        }
    }
}

/// Best-of-restart summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestartSummary {
    pub initial_theta: f64,
    pub negative_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: CovarianceModel,
    /// GLS estimate of the constant mean at the fitted covariance.
    pub mean: f64,
    pub log_likelihood: f64,
    pub negative_log_likelihood: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Fitted `gamma_prime` under the wind-speed link.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_prime: Option<f64>,
    /// Asymptotic standard errors of the free parameters, from a numerical
    /// Hessian. Absent when the Hessian is not positive definite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<Vec<(Param, f64)>>,
    pub restarts: Vec<RestartSummary>,
}

/// Starting nugget, relative to `sigma2`, when the nugget is free but starts at zero.
const NUGGET_FLOOR: f64 = 1e-3;

struct Space {
    free: Vec<Param>,
    init: CovarianceModel,
    stretch: StretchMode,
}

impl Space {
    fn encode(&self, m: &CovarianceModel) -> Vec<f64> {
        self.free
            .iter()
            .map(|p| match p {
                Param::Sigma2 => m.sigma2().ln(),
                Param::Phi => m.phi().ln(),
                Param::Nugget => m.nugget().ln(),
                Param::Gamma => match self.stretch {
                    StretchMode::Direct => m.gamma().ln(),
                    StretchMode::WindLink { wind_speed } => m.gamma().ln() / wind_speed,
                },
                Param::Theta => m.theta().normalized(),
            })
            .collect()
    }

    fn decode(&self, x: &[f64]) -> Result<CovarianceModel> {
        let m = &self.init;
        let (mut sigma2, mut phi, mut nugget, mut gamma, mut theta) = (m.sigma2(), m.phi(), m.nugget(), m.gamma(), m.theta().radians());
        for (p, &v) in self.free.iter().zip(x) {
            match p {
                Param::Sigma2 => sigma2 = v.exp(),
                Param::Phi => phi = v.exp(),
                Param::Nugget => nugget = v.exp(),
                Param::Gamma => {
                    gamma = match self.stretch {
                        StretchMode::Direct => v.exp(),
                        StretchMode::WindLink { wind_speed } => wind_link_gamma(wind_speed, v),
                    }
                }
                Param::Theta => theta = v,
            }
        }
        CovarianceModel::new(m.family(), sigma2, phi, nugget, gamma, Angle::from_radians(theta))
    }

    fn steps(&self) -> Vec<f64> {
        self.free
            .iter()
            .map(|p| match (p, self.stretch) {
                (Param::Theta, _) => 0.3,
                (Param::Gamma, StretchMode::WindLink { wind_speed }) => 0.5 / wind_speed,
                _ => 0.5,
            })
            .collect()
    }

    /// Natural-scale value of a transformed coordinate's derivative factor
    /// (`d natural / d transformed`) for the delta method.
    fn jacobian(&self, model: &CovarianceModel, p: Param) -> f64 {
        match p {
            Param::Sigma2 => model.sigma2(),
            Param::Phi => model.phi(),
            Param::Nugget => model.nugget(),
            Param::Gamma => match self.stretch {
                StretchMode::Direct => model.gamma(),
                StretchMode::WindLink { .. } => 1.0,
            },
            Param::Theta => 1.0,
        }
    }
}

fn objective(space: &Space, sample: &FieldSample, x: &[f64]) -> f64 {
    match space.decode(x).and_then(|m| profile_negative_log_likelihood(&m, sample)) {
        Ok(p) => p.nll,
        Err(_) => f64::INFINITY,
    }
}

/// Fits the covariance of `family` to `sample` starting from `init`.
///
/// Parameters in `fixed` keep their value from `init`. A factorization failure
/// inside the search counts as an infinite objective; hitting the iteration
/// limit returns the best point found with `converged = false`.
pub fn fit(sample: &FieldSample, family: KernelFamily, init: &CovarianceModel, fixed: &BTreeSet<Param>, options: &FitOptions) -> Result<FitResult> {
    if sample.len() < 2 {
        return Err(Error::InsufficientSites { required: 2, got: sample.len() });
    }
    if let StretchMode::WindLink { wind_speed } = options.stretch {
        if !(wind_speed > 0.0 && wind_speed.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "wind_speed",
                reason: format!("the wind-speed link needs a positive speed, got {wind_speed}"),
            });
        }
    }
    let init = init.with_family(family);
    let free: Vec<Param> = Param::ALL.into_iter().filter(|p| !fixed.contains(p)).collect();
    let space = Space { free, init, stretch: options.stretch };

    if space.free.is_empty() {
        let p = profile_negative_log_likelihood(&init, sample)?;
        return Ok(FitResult {
            model: init,
            mean: p.mean,
            log_likelihood: -p.nll,
            negative_log_likelihood: p.nll,
            iterations: 0,
            evaluations: 1,
            converged: true,
            gamma_prime: gamma_prime_of(&init, options.stretch),
            standard_errors: None,
            restarts: Vec::new(),
        });
    }

    let starts = restart_angles(&init, &space, options);
    let start = if space.free.contains(&Param::Nugget) && init.nugget() < NUGGET_FLOOR * init.sigma2() {
        init.with_nugget(NUGGET_FLOOR * init.sigma2())?
    } else {
        init
    };
    let x0 = space.encode(&start);
    let steps = space.steps();
    let theta_slot = space.free.iter().position(|&p| p == Param::Theta);

    let runs: Vec<_> = starts
        .par_iter()
        .map(|&theta0| {
            let mut x = x0.clone();
            if let Some(k) = theta_slot {
                x[k] = theta0;
            }
            let min = nelder_mead(|x| objective(&space, sample, x), &x, &steps, &options.optimizer);
            (theta0, min)
        })
        .collect();

    let evaluations = runs.iter().map(|(_, m)| m.evaluations).sum();
    let restarts = runs
        .iter()
        .map(|(t, m)| RestartSummary { initial_theta: *t, negative_log_likelihood: m.f, iterations: m.iterations, converged: m.converged })
        .collect();
    let (_, best) = runs
        .into_iter()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f))
        .expect("at least one restart");
    if !best.f.is_finite() {
        return Err(Error::FactorizationFailed { jitter: crate::synthesis::JITTER_MAX * init.sigma2() });
    }

    let raw = space.decode(&best.x)?;
    let mut model = raw.with_theta(Angle::from_radians(raw.theta().normalized()))?;
    if [Param::Phi, Param::Gamma, Param::Theta].iter().all(|p| space.free.contains(p)) {
        model = model.canonical()?;
    }
    let profile = profile_negative_log_likelihood(&model, sample)?;
    let standard_errors = if options.standard_errors { standard_errors(&space, sample, &space.encode(&model), &model) } else { None };

    Ok(FitResult {
        model,
        mean: profile.mean,
        log_likelihood: -profile.nll,
        negative_log_likelihood: profile.nll,
        iterations: best.iterations,
        evaluations,
        converged: best.converged,
        gamma_prime: gamma_prime_of(&model, options.stretch),
        standard_errors,
        restarts,
    })
}

fn gamma_prime_of(model: &CovarianceModel, stretch: StretchMode) -> Option<f64> {
    match stretch {
        StretchMode::Direct => None,
        StretchMode::WindLink { wind_speed } => Some(model.gamma().ln() / wind_speed),
    }
}

/// Restart 0 keeps the initial angle; the others are spread evenly over
/// `[0, pi)` with a small seeded jitter.
fn restart_angles(init: &CovarianceModel, space: &Space, options: &FitOptions) -> Vec<f64> {
    let t0 = init.theta().normalized();
    if !space.free.contains(&Param::Theta) || options.restarts <= 1 {
        return vec![t0];
    }
    let k = options.restarts;
    let spacing = PI / k as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    (0..k)
        .map(|i| {
            if i == 0 {
                t0
            } else {
                let jitter: f64 = rng.random_range(-0.25..0.25) * spacing;
                (t0 + i as f64 * spacing + jitter).rem_euclid(PI)
            }
        })
        .collect()
}

fn standard_errors(space: &Space, sample: &FieldSample, x: &[f64], model: &CovarianceModel) -> Option<Vec<(Param, f64)>> {
    let n = x.len();
    let h = 1e-4;
    let f = |x: &[f64]| objective(space, sample, x);
    let f0 = f(x);
    let mut hess = DMatrix::zeros(n, n);
    let shifted = |i: usize, di: f64, j: usize, dj: f64| {
        let mut y = x.to_vec();
        y[i] += di;
        y[j] += dj;
        y
    };
    for i in 0..n {
        let fp = f(&shifted(i, h, i, 0.0));
        let fm = f(&shifted(i, -h, i, 0.0));
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = (f(&shifted(i, h, j, h)) - f(&shifted(i, h, j, -h)) - f(&shifted(i, -h, j, h)) + f(&shifted(i, -h, j, -h))) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if !hess.iter().all(|v| v.is_finite()) {
        return None;
    }
    let inv = hess.cholesky()?.inverse();
    Some(
        space
            .free
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, inv[(i, i)].sqrt() * space.jacobian(model, p)))
            .collect(),
    )
}
