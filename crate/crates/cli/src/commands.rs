//! One function per subcommand. Each writes its tables into an [`Outputs`]
//! directory and returns nothing else; all results go to disk.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use windcov::contour::{fit_centered_ellipse, level_set_points, Ellipse};
use windcov::geometry::{axial_difference, Mat2};
use windcov::inference::optimize::NelderMeadOptions;
use windcov::inference::{empirical_variogram, fit, model_variogram, FitOptions, FitResult, StretchMode};
use windcov::io::{self, sample_rows, series_rows};
use windcov::synthesis::{export_covariance_surface, factorize_model, sample_with_factor, SurfaceRow};
use windcov::transport::{self, SimConfig};
use windcov::{Angle, CovarianceModel, DeformationParams, Error, FieldSample, KernelFamily, ModelTag, Point, SiteSet};

use crate::config::{Config, DataSource, FitSection, TransportField};
use crate::error::CliError;

/// An output directory that remembers what was written to it.
pub struct Outputs {
    dir: PathBuf,
    prefix: String,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Outputs, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(Outputs { dir: dir.to_path_buf(), prefix: String::new(), written: Vec::new() })
    }

    fn child(&self, name: &str) -> Result<Outputs, CliError> {
        let mut out = Outputs::new(&self.dir.join(name))?;
        out.prefix = format!("{}{name}/", self.prefix);
        Ok(out)
    }

    fn absorb(&mut self, child: Outputs) {
        self.written.extend(child.written);
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(format!("{}{name}", self.prefix));
        self.dir.join(name)
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.path(name);
        io::write_csv(&path, rows).map_err(CliError::stage("write"))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        io::write_json(&path, value).map_err(CliError::stage("write"))
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// Runs `job` for each replicate. A single replicate writes straight into
/// `out`; several go to `replicate_NNN/` subdirectories, concurrently.
fn fan_out<R, F>(config: &Config, replicates: usize, out: &mut Outputs, job: F) -> Result<Vec<R>, CliError>
where
    R: Send,
    F: Fn(&Config, &mut Outputs) -> Result<R, CliError> + Sync,
{
    if replicates == 1 {
        return Ok(vec![job(config, out)?]);
    }
    let results: Vec<Result<(R, Outputs), CliError>> = (0..replicates)
        .into_par_iter()
        .map(|k| {
            let mut sub = out.child(&format!("replicate_{k:03}"))?;
            let r = job(&config.replicate(k as u64), &mut sub)?;
            Ok((r, sub))
        })
        .collect();
    let mut rows = Vec::with_capacity(replicates);
    for r in results {
        let (row, sub) = r?;
        out.absorb(sub);
        rows.push(row);
    }
    Ok(rows)
}

fn model_of(config: &Config) -> Result<CovarianceModel, CliError> {
    Config::require(&config.model, "model")?.resolve().map_err(CliError::stage("model"))
}

fn grid_sites(config: &Config, stage: &'static str) -> Result<SiteSet, CliError> {
    let meta = config.grid.ok_or(Error::MissingGridMetadata).map_err(CliError::stage(stage))?;
    SiteSet::grid(meta).map_err(CliError::stage("grid"))
}

#[derive(Serialize)]
struct SampleSummary {
    replicate: usize,
    seed: u64,
    mean: f64,
    variance: f64,
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

pub fn sample(config: &Config, replicates: usize, out: &mut Outputs) -> Result<(), CliError> {
    let model = model_of(config)?;
    let sites = grid_sites(config, "sample")?;
    let factor = factorize_model(&model, &sites).map_err(CliError::stage("sample"))?;
    let rows = fan_out(config, replicates, out, |cfg, out| {
        let section = cfg.sample.clone().unwrap_or_default();
        let s = sample_with_factor(&factor, &sites, &model, section.seed, section.mean).map_err(CliError::stage("sample"))?;
        out.csv("sample.csv", &sample_rows(&s))?;
        out.json("sample.json", &s)?;
        let (mean, variance) = moments(s.values());
        Ok((section.seed, mean, variance))
    })?;
    if replicates > 1 {
        let summary: Vec<_> = rows
            .into_iter()
            .enumerate()
            .map(|(replicate, (seed, mean, variance))| SampleSummary { replicate, seed, mean, variance })
            .collect();
        out.csv("replicates.csv", &summary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct XY {
    x: f64,
    y: f64,
}

impl From<Point> for XY {
    fn from(p: Point) -> Self {
        XY { x: p.x, y: p.y }
    }
}

#[derive(Serialize)]
struct TransportSummary {
    replicate: usize,
    seed: u64,
    sources: usize,
    recorded_steps: usize,
    final_total_mass: f64,
    final_particle_count: usize,
    max_balance_residual: f64,
}

pub fn transport(config: &Config, replicates: usize, out: &mut Outputs) -> Result<(), CliError> {
    Config::require(&config.transport, "transport")?;
    let sites = grid_sites(config, "transport")?;
    let rows = fan_out(config, replicates, out, |cfg, out| {
        let sim = cfg.transport.as_ref().expect("checked above");
        let run = transport::run(sim, &sites).map_err(CliError::stage("transport"))?;
        out.csv("series.csv", &series_rows(&run.fields))?;
        out.csv("steps.csv", &run.summary)?;
        out.csv("sources.csv", &run.sources.iter().map(|&p| XY::from(p)).collect::<Vec<_>>())?;
        if let Some(mean) = run.time_mean() {
            let rows: Vec<SurfaceRow> = sites.points().iter().zip(mean).map(|(p, value)| SurfaceRow { x: p.x, y: p.y, value }).collect();
            out.csv("time_mean.csv", &rows)?;
        }
        let last = run.summary.last();
        Ok(TransportSummary {
            replicate: 0,
            seed: sim.seed,
            sources: run.sources.len(),
            recorded_steps: run.fields.len(),
            final_total_mass: last.map_or(0.0, |r| r.total_mass),
            final_particle_count: last.map_or(0, |r| r.particle_count),
            max_balance_residual: run.summary.iter().map(|r| r.balance_residual().abs()).fold(0.0, f64::max),
        })
    })?;
    if replicates > 1 {
        let summary: Vec<_> = rows.into_iter().enumerate().map(|(replicate, r)| TransportSummary { replicate, ..r }).collect();
        out.csv("replicates.csv", &summary)?;
    }
    Ok(())
}

/// Reads an `x,y,value` CSV, or a sample JSON document when the extension is `.json`.
pub fn load_sample(path: &Path) -> Result<FieldSample, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        return io::read_json(path).map_err(CliError::stage("load"));
    }
    let rows: Vec<SurfaceRow> = io::read_csv(path).map_err(CliError::stage("load"))?;
    let sites = SiteSet::new(rows.iter().map(|r| Point::new(r.x, r.y)).collect()).map_err(CliError::stage("load"))?;
    FieldSample::new(sites, rows.iter().map(|r| r.value).collect(), 0, ModelTag::Tag("observed".into())).map_err(CliError::stage("load"))
}

/// Diagonal of the bounding box of the sites.
fn extent(sites: &SiteSet) -> f64 {
    let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in sites.points() {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (hi - lo).norm_sq().sqrt()
}

fn lag_edges(config: &Config, sites: &SiteSet) -> Vec<f64> {
    match config.variogram.as_ref().and_then(|v| v.lag_edges.clone()) {
        Some(edges) => edges,
        None => {
            let max = 0.5 * extent(sites);
            (1..=10).map(|k| max * k as f64 / 10.0).collect()
        }
    }
}

fn direction_bins(config: &Config) -> usize {
    config.variogram.as_ref().map_or(4, |v| v.n_direction_bins)
}

pub fn variogram(config: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let path = config.variogram.as_ref().and_then(|v| v.data.clone()).ok_or(CliError::MissingKey("variogram.data"))?;
    let sample = load_sample(&path)?;
    let edges = lag_edges(config, sample.sites());
    let vg = empirical_variogram(&sample, direction_bins(config), &edges).map_err(CliError::stage("variogram"))?;
    out.csv("variogram.csv", &vg.rows())?;
    if config.model.is_some() {
        let model = model_of(config)?;
        let theory = model_variogram(&model, sample.sites(), direction_bins(config), &edges).map_err(CliError::stage("variogram"))?;
        out.csv("model_variogram.csv", &theory.rows())?;
    }
    Ok(())
}

/// Starting model from the data: variance as sill, a tenth of it as nugget,
/// and a practical range of a quarter of the site extent.
pub fn default_init(sample: &FieldSample, family: KernelFamily) -> Result<CovarianceModel, Error> {
    let (_, var) = moments(sample.values());
    let var = var.max(1e-12);
    let phi = family.phi_for_practical_range(0.25 * extent(sample.sites()));
    CovarianceModel::new(family, var, phi, 0.1 * var, 1.5, Angle::from_radians(0.0))
}

pub fn run_fit(sample: &FieldSample, section: &FitSection, model_family: Option<KernelFamily>) -> Result<FitResult, CliError> {
    let family = section.family.or(model_family).unwrap_or(KernelFamily::Gaussian);
    let init = match &section.init {
        Some(c) => c.resolve().map_err(CliError::stage("fit.init"))?.with_family(family),
        None => default_init(sample, family).map_err(CliError::stage("fit"))?,
    };
    let fixed: BTreeSet<_> = section.fixed.iter().copied().collect();
    let options = FitOptions {
        restarts: section.restarts.max(1),
        optimizer: NelderMeadOptions { max_iterations: section.max_iterations, ..Default::default() },
        seed: section.seed,
        stretch: section.wind_speed.map_or(StretchMode::Direct, |wind_speed| StretchMode::WindLink { wind_speed }),
        standard_errors: section.standard_errors,
    };
    fit(sample, family, &init, &fixed, &options).map_err(CliError::stage("fit"))
}

pub fn fit_command(config: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let section = config.fit.clone().unwrap_or_default();
    let path = section.data.clone().ok_or(CliError::MissingKey("fit.data"))?;
    let sample = load_sample(&path)?;
    let result = run_fit(&sample, &section, config.model.as_ref().map(|m| m.family))?;
    out.json("fit.json", &result)
}

/// The deformed exponential surface with `a = 3`, `b = 1`, `theta = pi/12`.
pub fn default_surface_model() -> CovarianceModel {
    CovarianceModel::new(KernelFamily::Exponential, 1.0, 1.0, 0.0, 3.0, Angle::from_radians(PI / 12.0)).expect("valid constants")
}

#[derive(Serialize)]
struct LevelSet {
    level: f64,
    points: usize,
    ellipse: Option<Ellipse>,
    axis_ratio: Option<f64>,
}

pub fn surface(config: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let model = match config.model {
        Some(_) => model_of(config)?,
        None => default_surface_model(),
    };
    let sites = grid_sites(config, "surface")?;
    let meta = *sites.grid_meta().expect("grid sites");
    let isotropic = model.with_gamma(1.0).map_err(CliError::stage("surface"))?;
    let original = export_covariance_surface(&isotropic, &sites).map_err(CliError::stage("surface"))?;
    let deformed = export_covariance_surface(&model, &sites).map_err(CliError::stage("surface"))?;
    out.csv("surface_original.csv", &original)?;
    out.csv("surface_deformed.csv", &deformed)?;

    let level = model.sigma2() * (-1f64).exp();
    let values: Vec<f64> = deformed.iter().map(|r| r.value).collect();
    let points = level_set_points(&values, &meta, level).map_err(CliError::stage("surface"))?;
    let ellipse = fit_centered_ellipse(&points).ok();
    out.json("level_set.json", &LevelSet { level, points: points.len(), ellipse, axis_ratio: ellipse.map(|e| e.axis_ratio()) })
}

#[derive(Serialize)]
struct AxisRow {
    axis: &'static str,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct DeformSummary {
    a: f64,
    b: f64,
    gamma: f64,
    theta_radians: f64,
    /// Row-major `R(theta) S(a, b) R(theta)'`.
    matrix: Mat2,
    /// Ascending.
    singular_values: [f64; 2],
    semi_minor: f64,
    semi_major: f64,
    minor_axis_angle: f64,
    major_axis_angle: f64,
}

pub fn deform_demo(config: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let section = config.deform.clone().unwrap_or_default();
    if section.n_points < 3 {
        return Err(CliError::Stage {
            stage: "deform",
            source: Error::InvalidParameter { name: "n_points", reason: "need at least 3 points on the circle".into() },
        });
    }
    let params = DeformationParams::new(section.a, section.b).map_err(CliError::stage("deform"))?;
    let theta = Angle::from_radians(section.theta_radians);
    let m = params.transform(theta);

    let n = section.n_points;
    let circle: Vec<Point> = (0..=n)
        .map(|k| {
            let t = 2.0 * PI * (k % n) as f64 / n as f64;
            Point::new(t.cos(), t.sin())
        })
        .collect();
    out.csv("circle.csv", &circle.iter().map(|&p| XY::from(p)).collect::<Vec<_>>())?;
    out.csv("circle_deformed.csv", &circle.iter().map(|&p| XY::from(m.apply_point(p))).collect::<Vec<_>>())?;

    let (c, s) = theta.axis();
    let axes = [
        ("x", Point::new(1.0, 0.0)),
        ("y", Point::new(0.0, 1.0)),
        ("wind", Point::new(c, s)),
        ("cross", Point::new(-s, c)),
    ];
    let axis_rows = |f: &dyn Fn(Point) -> Point| -> Vec<AxisRow> {
        axes.iter()
            .flat_map(|&(axis, u)| {
                [Point::new(-u.x, -u.y), u].map(|p| {
                    let q = f(p);
                    AxisRow { axis, x: q.x, y: q.y }
                })
            })
            .collect()
    };
    out.csv("axes.csv", &axis_rows(&|p| p))?;
    out.csv("axes_deformed.csv", &axis_rows(&|p| m.apply_point(p)))?;

    let ellipse = Ellipse::image_of_unit_circle(&m).map_err(CliError::stage("deform"))?;
    let (lo, hi) = m.singular_values();
    out.json(
        "deform.json",
        &DeformSummary {
            a: params.a(),
            b: params.b(),
            gamma: params.gamma(),
            theta_radians: section.theta_radians,
            matrix: m,
            singular_values: [lo, hi],
            semi_minor: ellipse.semi_minor,
            semi_major: ellipse.semi_major,
            minor_axis_angle: ellipse.minor_angle(),
            major_axis_angle: ellipse.major_angle,
        },
    )
}

#[derive(Serialize)]
struct ComparisonRow {
    parameter: &'static str,
    truth: Option<f64>,
    fitted: f64,
    error: Option<f64>,
}

/// Per-replicate line of a pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub replicate: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub phi: f64,
    pub nugget: f64,
    pub gamma: f64,
    pub theta: f64,
    pub negative_log_likelihood: f64,
    pub converged: bool,
    /// Fitted minus true angle, folded to `[-90, 90)` degrees.
    pub theta_error_degrees: f64,
}

/// What is known about the generating process.
enum Truth {
    Model(CovarianceModel),
    Direction(f64),
}

fn generate(config: &Config) -> Result<(FieldSample, Truth), CliError> {
    let source = config.pipeline.clone().unwrap_or_default();
    let sites = grid_sites(config, "generate")?;
    match source.source {
        DataSource::Gp => {
            let model = model_of(config)?;
            let section = config.sample.clone().unwrap_or_default();
            let factor = factorize_model(&model, &sites).map_err(CliError::stage("generate"))?;
            let s = sample_with_factor(&factor, &sites, &model, section.seed, section.mean).map_err(CliError::stage("generate"))?;
            Ok((s, Truth::Model(model)))
        }
        DataSource::Transport => {
            let sim: &SimConfig = Config::require(&config.transport, "transport")?;
            let run = transport::run(sim, &sites).map_err(CliError::stage("generate"))?;
            let values = match source.field {
                TransportField::TimeMean => run.time_mean(),
                TransportField::Last => run.fields.last().map(|f| f.concentrations.clone()),
            }
            .ok_or(CliError::Stage {
                stage: "generate",
                source: Error::InvalidParameter { name: "burn_in", reason: "no steps recorded after burn-in".into() },
            })?;
            let s = FieldSample::new(sites, values, sim.seed, ModelTag::transport()).map_err(CliError::stage("generate"))?;
            Ok((s, Truth::Direction(sim.wind.angle_radians)))
        }
    }
}

pub fn pipeline(config: &Config, replicates: usize, out: &mut Outputs) -> Result<Vec<PipelineSummary>, CliError> {
    let rows = fan_out(config, replicates, out, |cfg, out| {
        let (sample, truth) = generate(cfg)?;
        out.csv("sample.csv", &sample_rows(&sample))?;
        out.json("sample.json", &sample)?;

        let edges = lag_edges(cfg, sample.sites());
        let vg = empirical_variogram(&sample, direction_bins(cfg), &edges).map_err(CliError::stage("variogram"))?;
        out.csv("variogram.csv", &vg.rows())?;

        let section = cfg.fit.clone().unwrap_or_default();
        let family = match &truth {
            Truth::Model(m) => Some(m.family()),
            Truth::Direction(_) => None,
        };
        let result = run_fit(&sample, &section, family)?;
        out.json("fit.json", &result)?;

        let fitted = result.model;
        let theta_true = match &truth {
            Truth::Model(m) => m.canonical().map_err(CliError::stage("fit"))?.theta().normalized(),
            Truth::Direction(a) => Angle::from_radians(*a).normalized(),
        };
        let theta_error = axial_difference(fitted.theta().radians(), theta_true);
        let comparison = match &truth {
            Truth::Model(m) => {
                let m = m.canonical().map_err(CliError::stage("fit"))?;
                let row = |parameter, truth: f64, fitted: f64| ComparisonRow { parameter, truth: Some(truth), fitted, error: Some(fitted - truth) };
                vec![
                    row("sigma2", m.sigma2(), fitted.sigma2()),
                    row("phi", m.phi(), fitted.phi()),
                    row("nugget", m.nugget(), fitted.nugget()),
                    row("gamma", m.gamma(), fitted.gamma()),
                    ComparisonRow { parameter: "theta", truth: Some(theta_true), fitted: fitted.theta().radians(), error: Some(theta_error) },
                ]
            }
            Truth::Direction(_) => {
                let row = |parameter, fitted: f64| ComparisonRow { parameter, truth: None, fitted, error: None };
                vec![
                    row("sigma2", fitted.sigma2()),
                    row("phi", fitted.phi()),
                    row("nugget", fitted.nugget()),
                    row("gamma", fitted.gamma()),
                    ComparisonRow { parameter: "theta", truth: Some(theta_true), fitted: fitted.theta().radians(), error: Some(theta_error) },
                ]
            }
        };
        out.csv("comparison.csv", &comparison)?;

        Ok(PipelineSummary {
            replicate: 0,
            seed: sample.seed(),
            sigma2: fitted.sigma2(),
            phi: fitted.phi(),
            nugget: fitted.nugget(),
            gamma: fitted.gamma(),
            theta: fitted.theta().radians(),
            negative_log_likelihood: result.negative_log_likelihood,
            converged: result.converged,
            theta_error_degrees: theta_error.to_degrees(),
        })
    })?;
    let rows: Vec<PipelineSummary> = rows.into_iter().enumerate().map(|(replicate, r)| PipelineSummary { replicate, ..r }).collect();
    if replicates > 1 {
        out.csv("replicates.csv", &rows)?;
    }
    Ok(rows)
}
