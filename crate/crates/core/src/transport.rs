//! Toy wind-transport simulator for pollution particles.
//!
//! Fixed sources are a Poisson point process on the square
//! `[-domain_half_width, domain_half_width]^2`. At every discrete step each
//! source emits one particle of mass `emission_rate * dt`, every particle is
//! advected by `advect_coeff * wind * dt` plus a Brownian increment with
//! per-component standard deviation `diffusion_sigma * sqrt(dt)`, particles
//! leaving the square are absorbed, and total mass is capped by a fresh
//! `Poisson(lambda_B)` draw.
//!
//! The wind is constant, so a particle's position is stored as its origin,
//! its age and the accumulated Brownian displacement. Without diffusion the
//! position is exactly `origin + age * drift`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Separation};
use crate::sites::{FieldSample, ModelTag, SiteSet};

const SOURCE_STREAM: u64 = 0;
const DYNAMICS_STREAM: u64 = 1;

/// Constant wind: speed and direction (radians, counter-clockwise from x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindField {
    pub speed: f64,
    pub angle_radians: f64,
}

impl WindField {
    pub fn vector(&self) -> Separation {
        let (s, c) = self.angle_radians.sin_cos();
        Separation::new(self.speed * c, self.speed * s)
    }
}

fn default_lambda_b() -> f64 {
    f64::INFINITY
}

/// Simulation parameters. Key names are the field names; `lambda_B = inf`
/// (the default) disables the mass cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub domain_half_width: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub lambda_src: f64,
    pub emission_rate: f64,
    pub advect_coeff: f64,
    pub diffusion_sigma: f64,
    #[serde(rename = "lambda_B", default = "default_lambda_b")]
    pub lambda_b: f64,
    pub ball_radius: f64,
    pub wind: WindField,
    pub seed: u64,
    /// Steps before this index are simulated but not recorded.
    #[serde(default)]
    pub burn_in: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("must be positive and finite, got {v}") })
            }
        }
        fn nonnegative(name: &'static str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("must be nonnegative and finite, got {v}") })
            }
        }
        positive("domain_half_width", self.domain_half_width)?;
        positive("dt", self.dt)?;
        nonnegative("lambda_src", self.lambda_src)?;
        positive("emission_rate", self.emission_rate)?;
        if !self.advect_coeff.is_finite() {
            return Err(Error::InvalidParameter { name: "advect_coeff", reason: "must be finite".into() });
        }
        nonnegative("diffusion_sigma", self.diffusion_sigma)?;
        if !(self.lambda_b >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda_B",
                reason: format!("must be nonnegative (inf disables the cap), got {}", self.lambda_b),
            });
        }
        if !(self.ball_radius > 0.0 && self.ball_radius.is_finite()) {
            return Err(Error::NonPositiveRadius(self.ball_radius));
        }
        if self.ball_radius >= self.domain_half_width {
            return Err(Error::InvalidParameter {
                name: "ball_radius",
                reason: "must be much smaller than the domain half width".into(),
            });
        }
        nonnegative("wind.speed", self.wind.speed)?;
        if !self.wind.angle_radians.is_finite() {
            return Err(Error::InvalidParameter { name: "wind.angle_radians", reason: "must be finite".into() });
        }
        Ok(())
    }

    /// Per-step deterministic displacement `kappa * w * dt`.
    pub fn drift(&self) -> Separation {
        self.wind.vector().scaled(self.advect_coeff * self.dt)
    }

    pub fn particle_mass(&self) -> f64 {
        self.emission_rate * self.dt
    }

    pub fn domain_area(&self) -> f64 {
        let w = 2.0 * self.domain_half_width;
        w * w
    }

    pub fn contains(&self, p: Point) -> bool {
        let h = self.domain_half_width;
        p.x.abs() <= h && p.y.abs() <= h
    }
}

/// Live particles at one discrete time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleState {
    origins: Vec<Point>,
    brownian: Vec<Separation>,
    positions: Vec<Point>,
    masses: Vec<f64>,
    birth_times: Vec<usize>,
}

impl ParticleState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state of particles that have not moved yet.
    pub fn from_particles(positions: Vec<Point>, masses: Vec<f64>, birth_times: Vec<usize>) -> Result<Self> {
        if positions.len() != masses.len() || positions.len() != birth_times.len() {
            return Err(Error::LengthMismatch("positions, masses and birth_times must have equal length".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidParameter { name: "masses", reason: format!("masses must be positive, got {m}") });
        }
        Ok(ParticleState {
            brownian: vec![Separation::default(); positions.len()],
            origins: positions.clone(),
            positions,
            masses,
            birth_times,
        })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn birth_times(&self) -> &[usize] {
        &self.birth_times
    }

    pub fn origins(&self) -> &[Point] {
        &self.origins
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Every mass multiplied by `factor`.
    pub fn scale_masses(&mut self, factor: f64) {
        for m in &mut self.masses {
            *m *= factor;
        }
    }

    fn push(&mut self, origin: Point, mass: f64, birth: usize) {
        self.origins.push(origin);
        self.brownian.push(Separation::default());
        self.positions.push(origin);
        self.masses.push(mass);
        self.birth_times.push(birth);
    }

    fn swap_remove(&mut self, i: usize) -> f64 {
        self.origins.swap_remove(i);
        self.brownian.swap_remove(i);
        self.positions.swap_remove(i);
        self.birth_times.swap_remove(i);
        self.masses.swap_remove(i)
    }
}

/// Mass bookkeeping for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t_index: usize,
    pub mass_before: f64,
    pub mass_in: f64,
    pub mass_escaped: f64,
    pub mass_capped: f64,
    pub total_mass: f64,
    pub particle_count: usize,
    /// The Poisson cap drawn this step, absent when the cap is disabled.
    pub cap: Option<f64>,
}

impl StepReport {
    /// `(after - before) - (in - escaped - capped)`.
    pub fn balance_residual(&self) -> f64 {
        (self.total_mass - self.mass_before) - (self.mass_in - self.mass_escaped - self.mass_capped)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Poisson point process on the simulation square. Count is
/// `Poisson(lambda_src * area)`, positions uniform.
pub fn generate_sources(config: &SimConfig) -> Vec<Point> {
    let mut rng = stream_rng(config.seed, SOURCE_STREAM);
    let mean = config.lambda_src * config.domain_area();
    let count = draw_poisson(mean, &mut rng);
    let h = config.domain_half_width;
    (0..count as usize)
        .map(|_| Point::new(rng.random_range(-h..=h), rng.random_range(-h..=h)))
        .collect()
}

fn draw_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).expect("finite positive Poisson mean").sample(rng)
    }
}

/// Random stream used by [`step`] and [`enforce_cap`] inside [`run`].
pub fn dynamics_rng(config: &SimConfig) -> ChaCha8Rng {
    stream_rng(config.seed, DYNAMICS_STREAM)
}

/// Advances the state from `t_index` to `t_index + 1`: emit, move, absorb at
/// the boundary, then cap.
pub fn step<R: Rng + ?Sized>(state: &mut ParticleState, sources: &[Point], config: &SimConfig, t_index: usize, rng: &mut R) -> StepReport {
    let mass_before = state.total_mass();
    let mass = config.particle_mass();
    for &s in sources {
        state.push(s, mass, t_index);
    }
    let mass_in = mass * sources.len() as f64;

    let drift = config.drift();
    let noise_sd = config.diffusion_sigma * config.dt.sqrt();
    for i in 0..state.len() {
        if noise_sd > 0.0 {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            let b = &mut state.brownian[i];
            b.hx += noise_sd * z1;
            b.hy += noise_sd * z2;
        }
        let age = (t_index + 1 - state.birth_times[i]) as f64;
        let o = state.origins[i];
        let b = state.brownian[i];
        state.positions[i] = Point::new(o.x + age * drift.hx + b.hx, o.y + age * drift.hy + b.hy);
    }

    let mut mass_escaped = 0.0;
    let mut i = 0;
    while i < state.len() {
        if config.contains(state.positions[i]) {
            i += 1;
        } else {
            mass_escaped += state.swap_remove(i);
        }
    }

    let (cap, mass_capped) = enforce_cap(state, config, rng);
    StepReport {
        t_index,
        mass_before,
        mass_in,
        mass_escaped,
        mass_capped,
        total_mass: state.total_mass(),
        particle_count: state.len(),
        cap,
    }
}

/// Draws `M ~ Poisson(lambda_B)` and removes uniformly chosen particles until
/// the total mass is at most `M`. Returns the drawn cap (absent when
/// `lambda_B` is infinite) and the removed mass.
pub fn enforce_cap<R: Rng + ?Sized>(state: &mut ParticleState, config: &SimConfig, rng: &mut R) -> (Option<f64>, f64) {
    if config.lambda_b.is_infinite() {
        return (None, 0.0);
    }
    let cap = draw_poisson(config.lambda_b, rng);
    let mut total = state.total_mass();
    let mut removed = 0.0;
    while total > cap && !state.is_empty() {
        let i = rng.random_range(0..state.len());
        let m = state.swap_remove(i);
        removed += m;
        total -= m;
    }
    (Some(cap), removed)
}

/// Concentrations at a set of sites for one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationField {
    pub sites: Arc<SiteSet>,
    pub concentrations: Vec<f64>,
    pub time_index: usize,
}

impl ConcentrationField {
    pub fn to_sample(&self, seed: u64) -> Result<FieldSample> {
        FieldSample::new((*self.sites).clone(), self.concentrations.clone(), seed, ModelTag::transport())
    }
}

/// Mass within distance `ball_radius` of each site divided by `pi r^2`.
/// Balls may overlap; a particle counts toward every ball containing it.
pub fn concentration(state: &ParticleState, sites: &Arc<SiteSet>, config: &SimConfig, time_index: usize) -> Result<ConcentrationField> {
    let r = config.ball_radius;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::NonPositiveRadius(r));
    }
    let cell = |p: Point| ((p.x / r).floor() as i64, (p.y / r).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in state.positions.iter().enumerate() {
        buckets.entry(cell(p)).or_default().push(i);
    }
    let area = PI * r * r;
    let r2 = r * r;
    let concentrations = sites
        .points()
        .iter()
        .map(|&s| {
            let (cx, cy) = cell(s);
            let mut mass = 0.0;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(idx) = buckets.get(&(cx + dx, cy + dy)) {
                        for &i in idx {
                            if (state.positions[i] - s).norm_sq() <= r2 {
                                mass += state.masses[i];
                            }
                        }
                    }
                }
            }
            mass / area
        })
        .collect();
    Ok(ConcentrationField { sites: Arc::clone(sites), concentrations, time_index })
}

/// Stateful driver: sources, particles and the dynamics stream.
pub struct Simulator {
    config: SimConfig,
    sources: Vec<Point>,
    state: ParticleState,
    rng: ChaCha8Rng,
    t_index: usize,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let sources = generate_sources(&config);
        let rng = dynamics_rng(&config);
        Ok(Simulator { config, sources, state: ParticleState::new(), rng, t_index: 0 })
    }

    pub fn step(&mut self) -> StepReport {
        let report = step(&mut self.state, &self.sources, &self.config, self.t_index, &mut self.rng);
        self.t_index += 1;
        report
    }

    pub fn sources(&self) -> &[Point] {
        &self.sources
    }

    pub fn state(&self) -> &ParticleState {
        &self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Index of the next step to be taken.
    pub fn t_index(&self) -> usize {
        self.t_index
    }
}

/// Recorded fields and per-step bookkeeping of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub sources: Vec<Point>,
    pub fields: Vec<ConcentrationField>,
    pub summary: Vec<StepReport>,
}

impl RunOutput {
    /// Per-site time average of the recorded fields.
    pub fn time_mean(&self) -> Option<Vec<f64>> {
        let first = self.fields.first()?;
        let mut acc = vec![0.0; first.concentrations.len()];
        for f in &self.fields {
            for (a, v) in acc.iter_mut().zip(&f.concentrations) {
                *a += v;
            }
        }
        let n = self.fields.len() as f64;
        Some(acc.into_iter().map(|a| a / n).collect())
    }
}

/// Generates sources, runs `n_steps` steps and records the concentration at
/// `sites` after every step whose index is at least `burn_in`.
pub fn run(config: &SimConfig, sites: &SiteSet) -> Result<RunOutput> {
    let mut sim = Simulator::new(config.clone())?;
    let sites = Arc::new(sites.clone());
    let mut fields = Vec::new();
    let mut summary = Vec::with_capacity(config.n_steps);
    for _ in 0..config.n_steps {
        let report = sim.step();
        if report.t_index >= config.burn_in {
            fields.push(concentration(sim.state(), &sites, config, report.t_index)?);
        }
        summary.push(report);
    }
    Ok(RunOutput { sources: sim.sources, fields, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sites::GridMeta;

    pub(crate) fn base_config() -> SimConfig {
        SimConfig {
            domain_half_width: 10.0,
            dt: 1.0,
            n_steps: 10,
            lambda_src: 0.05,
            emission_rate: 1.0,
            advect_coeff: 1.0,
            diffusion_sigma: 0.0,
            lambda_b: f64::INFINITY,
            ball_radius: 0.5,
            wind: WindField { speed: 0.0, angle_radians: 0.0 },
            seed: 3,
            burn_in: 0,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = base_config();
        assert!(c.validate().is_ok());
        c.ball_radius = 0.0;
        assert!(matches!(c.validate(), Err(Error::NonPositiveRadius(_))));
        let mut c = base_config();
        c.dt = 0.0;
        assert!(c.validate().is_err());
        let mut c = base_config();
        c.lambda_b = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_keys() {
        let json = r#"{"domain_half_width":5,"dt":0.5,"n_steps":3,"lambda_src":0.1,"emission_rate":2,
            "advect_coeff":1,"diffusion_sigma":0.2,"lambda_B":50,"ball_radius":0.3,
            "wind":{"speed":1,"angle_radians":0.7},"seed":9}"#;
        let c: SimConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.lambda_b, 50.0);
        assert_eq!(c.burn_in, 0);
        let out = serde_json::to_string(&c).unwrap();
        assert!(out.contains(r#""lambda_B":50.0"#));
        assert!(serde_json::from_str::<SimConfig>(&json.replace("\"seed\"", "\"sed\"")).is_err());
    }

    #[test]
    fn zero_intensity_gives_no_sources() {
        let mut c = base_config();
        c.lambda_src = 0.0;
        assert!(generate_sources(&c).is_empty());
    }

    #[test]
    fn sources_inside_domain_and_deterministic() {
        let mut c = base_config();
        c.lambda_src = 1.0;
        let s = generate_sources(&c);
        assert!(!s.is_empty());
        assert!(s.iter().all(|&p| c.contains(p)));
        assert_eq!(s, generate_sources(&c));
    }

    #[test]
    fn still_air_keeps_particles_at_sources() {
        let c = base_config();
        let sources = vec![Point::new(1.0, 2.0), Point::new(-3.0, 0.5)];
        let mut state = ParticleState::new();
        let mut rng = dynamics_rng(&c);
        for t in 0..4 {
            let r = step(&mut state, &sources, &c, t, &mut rng);
            assert_eq!(r.particle_count, 2 * (t + 1));
        }
        for (p, o) in state.positions().iter().zip(state.origins()) {
            assert_eq!(p, o);
        }
    }

    #[test]
    fn unit_wind_shifts_by_one() {
        let mut c = base_config();
        c.wind = WindField { speed: 1.0, angle_radians: 0.0 };
        let sources = vec![Point::new(0.0, 0.0)];
        let mut state = ParticleState::new();
        let mut rng = dynamics_rng(&c);
        step(&mut state, &sources, &c, 0, &mut rng);
        let before = state.positions().to_vec();
        step(&mut state, &sources, &c, 1, &mut rng);
        // the first particle keeps its slot: emission appends
        assert_eq!(state.positions()[0], Point::new(before[0].x + 1.0, before[0].y));
        assert_eq!(state.positions()[1], Point::new(1.0, 0.0));
    }

    #[test]
    fn escaped_particles_are_removed() {
        let mut c = base_config();
        c.wind = WindField { speed: 4.0, angle_radians: 0.0 };
        let sources = vec![Point::new(9.0, 0.0)];
        let mut state = ParticleState::new();
        let mut rng = dynamics_rng(&c);
        let r = step(&mut state, &sources, &c, 0, &mut rng);
        assert_eq!(r.particle_count, 0);
        assert_eq!(r.mass_escaped, 1.0);
        assert_eq!(r.balance_residual(), 0.0);
    }

    #[test]
    fn cap_identity_when_under() {
        let mut c = base_config();
        c.lambda_b = 1e6;
        let mut state = ParticleState::from_particles(vec![Point::new(0.0, 0.0); 3], vec![1.0; 3], vec![0; 3]).unwrap();
        let mut rng = dynamics_rng(&c);
        let before = state.clone();
        let (cap, removed) = enforce_cap(&mut state, &c, &mut rng);
        assert!(cap.unwrap() > 3.0);
        assert_eq!(removed, 0.0);
        assert_eq!(state, before);
    }

    #[test]
    fn zero_cap_removes_everything() {
        let mut c = base_config();
        c.lambda_b = 0.0;
        let mut state = ParticleState::from_particles(vec![Point::new(0.0, 0.0); 5], vec![0.5; 5], vec![0; 5]).unwrap();
        let mut rng = dynamics_rng(&c);
        let (cap, removed) = enforce_cap(&mut state, &c, &mut rng);
        assert_eq!(cap, Some(0.0));
        assert_eq!(removed, 2.5);
        assert!(state.is_empty());
    }

    #[test]
    fn cap_brings_mass_under_draw() {
        let mut c = base_config();
        c.lambda_b = 10.0;
        let mut rng = dynamics_rng(&c);
        for _ in 0..50 {
            let mut state = ParticleState::from_particles(vec![Point::new(0.0, 0.0); 40], vec![1.0; 40], vec![0; 40]).unwrap();
            let (cap, removed) = enforce_cap(&mut state, &c, &mut rng);
            let cap = cap.unwrap();
            assert!(state.total_mass() <= cap);
            assert_eq!(state.total_mass() + removed, 40.0);
            // removal stops as soon as the cap is met
            assert!(state.total_mass() + 1.0 > cap);
        }
    }

    #[test]
    fn concentration_definition() {
        let c = base_config();
        let sites = Arc::new(SiteSet::new(vec![Point::new(0.0, 0.0), Point::new(0.3, 0.0), Point::new(5.0, 5.0)]).unwrap());
        let empty = concentration(&ParticleState::new(), &sites, &c, 0).unwrap();
        assert_eq!(empty.concentrations, vec![0.0; 3]);

        let state = ParticleState::from_particles(vec![Point::new(0.0, 0.0)], vec![2.0], vec![0]).unwrap();
        let f = concentration(&state, &sites, &c, 0).unwrap();
        let expected = 2.0 / (PI * 0.25);
        // the second ball overlaps the first and also contains the particle
        assert_eq!(f.concentrations, vec![expected, expected, 0.0]);

        let mut bad = c.clone();
        bad.ball_radius = -1.0;
        assert!(matches!(concentration(&state, &sites, &bad, 0), Err(Error::NonPositiveRadius(_))));
    }

    #[test]
    fn concentration_on_ball_boundary_and_across_cells() {
        let c = base_config();
        let sites = Arc::new(SiteSet::new(vec![Point::new(0.25, 0.25)]).unwrap());
        let state = ParticleState::from_particles(
            vec![Point::new(0.25, -0.25), Point::new(0.0, 0.25), Point::new(0.75, 0.75)],
            vec![1.0, 1.0, 1.0],
            vec![0, 0, 0],
        )
        .unwrap();
        let f = concentration(&state, &sites, &c, 0).unwrap();
        assert_eq!(f.concentrations[0], 2.0 / (PI * 0.25));
    }

    #[test]
    fn run_records_after_burn_in() {
        let mut c = base_config();
        c.n_steps = 0;
        let sites = SiteSet::grid(GridMeta::centered(3, 1.0)).unwrap();
        assert!(run(&c, &sites).unwrap().fields.is_empty());
        c.n_steps = 6;
        c.burn_in = 4;
        c.diffusion_sigma = 0.3;
        c.lambda_src = 0.2;
        let out = run(&c, &sites).unwrap();
        assert_eq!(out.summary.len(), 6);
        assert_eq!(out.fields.iter().map(|f| f.time_index).collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(out, run(&c, &sites).unwrap());
    }
}
