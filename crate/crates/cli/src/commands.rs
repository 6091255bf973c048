//! The subcommands.

use anyhow::{anyhow, bail, Context, Result};
use intkrige::cv::{run_cv, CvConfig, Rmse};
use intkrige::kriging::{predict_grid, GridConfig, IntervalSample};
use intkrige::simulate::{simulate_field, ElevationTrend, FieldParams};
use intkrige::snowload::{
    build_design_interval, detrend, from_log_scale, retrend, to_log_scale, TrendModel,
};
use intkrige::variogram::{
    empirical_variograms, fit_wls, initial_guess, uniform_bin_edges, Channel, EmpiricalVariogram,
};
use intkrige::{Family, Interval, Location, Mode, Models, VariogramModel};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{input, RunConfig};
use crate::io::{self, fmt, ModelFile};

/// Samples on the kriging scale: optionally logged, then optionally
/// detrended on elevation.
struct Prepared {
    samples: Vec<IntervalSample>,
    trend: Option<TrendModel>,
    log_scale: bool,
}

impl Prepared {
    fn new(raw: Vec<IntervalSample>, cfg: &RunConfig) -> Result<Self> {
        let mut samples = raw;
        if cfg.log_scale {
            samples = samples
                .iter()
                .map(|s| Ok(IntervalSample::new(s.loc, to_log_scale(&s.value)?)))
                .collect::<Result<_>>()
                .context("log_scale needs positive lower bounds")?;
        }
        let trend = if cfg.detrend {
            let (t, resid) = detrend(&samples).context("detrending on elevation")?;
            eprintln!(
                "trend: center = {} + {} * elev_m",
                fmt(t.beta0),
                fmt(t.beta1)
            );
            samples = resid;
            Some(t)
        } else {
            None
        };
        Ok(Self {
            samples,
            trend,
            log_scale: cfg.log_scale,
        })
    }

    /// Back from the kriging scale to the input scale at `loc`.
    fn restore(&self, loc: &Location, x: &Interval) -> Result<Interval> {
        let mut y = *x;
        if let Some(t) = &self.trend {
            y = retrend(t, loc.elevation, &y)?;
        }
        if self.log_scale {
            y = from_log_scale(&y)?;
        }
        Ok(y)
    }
}

fn bin_edges(samples: &[IntervalSample], cfg: &RunConfig) -> Result<Vec<f64>> {
    if let Some(e) = &cfg.bin_edges {
        return Ok(e.clone());
    }
    let max_lag = match cfg.max_lag {
        Some(m) => m,
        None => {
            let mut d: f64 = 0.0;
            for (i, a) in samples.iter().enumerate() {
                for b in &samples[i + 1..] {
                    d = d.max(a.loc.distance(&b.loc));
                }
            }
            0.5 * d
        }
    };
    Ok(uniform_bin_edges(max_lag, cfg.bins)?)
}

fn fit(
    emp: &EmpiricalVariogram,
    ch: Channel,
    family: Family,
    init: Option<VariogramModel>,
) -> Result<VariogramModel> {
    let init = init.unwrap_or_else(|| initial_guess(emp, ch, family));
    let fit = fit_wls(emp, ch, family, &init)
        .with_context(|| format!("fitting the {} variogram", ch.label()))?;
    Ok(fit.model)
}

pub fn variogram(cfg: &RunConfig) -> Result<()> {
    let prep = Prepared::new(io::read_samples(input(&cfg.samples, "samples")?)?, cfg)?;
    let edges = bin_edges(&prep.samples, cfg)?;
    let emp = empirical_variograms(&prep.samples, &edges)?;
    let mut w = io::sink(cfg.output.as_deref())?;
    emp.write_csv(&mut w)?;
    w.flush()?;
    let models = ModelFile {
        center: fit(&emp, Channel::Center, cfg.center_family, cfg.center_init)?,
        radius: fit(&emp, Channel::Radius, cfg.radius_family, cfg.radius_init)?,
        cross: None,
    };
    eprintln!("center {}\nradius {}", models.center, models.radius);
    if let Some(p) = &cfg.models {
        io::write_models(p, &models)?;
    }
    Ok(())
}

fn targets(cfg: &RunConfig) -> Result<Vec<Location>> {
    match (&cfg.targets, &cfg.grid) {
        (Some(_), Some(_)) => bail!("give either a targets file or a grid, not both"),
        (Some(_), None) => io::read_targets(input(&cfg.targets, "targets")?),
        (None, Some(g)) => {
            let r = g.rect;
            let step = |lo: f64, hi: f64, n: usize, k: usize| {
                if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            };
            let mut t = Vec::with_capacity(g.nx * g.ny);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let x = step(r.x_min, r.x_max, g.nx, i);
                    let y = step(r.y_min, r.y_max, g.ny, j);
                    t.push(Location::planar(x, y)?);
                }
            }
            Ok(t)
        }
        (None, None) => bail!(
            "no targets: set 'targets' to a CSV file \
             or 'grid' to x_min, x_max, y_min, y_max, nx, ny"
        ),
    }
}

pub fn krige(cfg: &RunConfig) -> Result<()> {
    let prep = Prepared::new(io::read_samples(input(&cfg.samples, "samples")?)?, cfg)?;
    let file = io::read_models(input(&cfg.models, "models")?)?;
    let mut models = Models::new(file.center, file.radius, cfg.a_matrix()?);
    if let Some(c) = file.cross {
        models = models.with_cross(c);
    }
    let targets = targets(cfg)?;
    let known_mean = match cfg.mode {
        Mode::Simple => Some(match cfg.known_mean {
            Some(m) => m,
            None => {
                let n = prep.samples.len() as f64;
                Interval::point(prep.samples.iter().map(|s| s.value.center()).sum::<f64>() / n)?
            }
        }),
        Mode::Ordinary => None,
    };
    let grid = GridConfig {
        models,
        mode: cfg.mode,
        known_mean,
        solver: cfg.solver,
        neighborhood: cfg.neighbors,
    };
    let results = predict_grid(&prep.samples, &targets, &grid);

    let mut w = io::csv_writer(io::sink(cfg.output.as_deref())?);
    w.write_record([
        "x",
        "y",
        "center",
        "radius",
        "lower",
        "upper",
        "kriging_variance",
        "converged",
    ])?;
    let mut features = Vec::new();
    let mut failures = Vec::new();
    for (k, (t, r)) in targets.iter().zip(results).enumerate() {
        let solved = r.map_err(anyhow::Error::from).and_then(|s| {
            Ok((
                prep.restore(t, &s.prediction)?,
                s.kriging_variance,
                s.converged,
            ))
        });
        match solved {
            Ok((y, var, converged)) => {
                w.write_record([
                    fmt(t.x),
                    fmt(t.y),
                    fmt(y.center()),
                    fmt(y.radius()),
                    fmt(y.lower()),
                    fmt(y.upper()),
                    fmt(var),
                    converged.to_string(),
                ])?;
                features.push(json!({
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [t.x, t.y]},
                    "properties": {
                        "center": y.center(), "radius": y.radius(),
                        "lower": y.lower(), "upper": y.upper(),
                        "kriging_variance": var, "converged": converged,
                    },
                }));
            }
            Err(e) => {
                w.write_record([
                    fmt(t.x),
                    fmt(t.y),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "false".into(),
                ])?;
                failures.push(format!(
                    "target {} ({}, {}): {e:#}",
                    k + 1,
                    fmt(t.x),
                    fmt(t.y)
                ));
            }
        }
    }
    w.flush()?;
    if let Some(p) = &cfg.geojson {
        let doc = json!({"type": "FeatureCollection", "features": features});
        std::fs::write(p, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(first) = failures.first() {
        bail!(
            "{} of {} targets failed; first: {first}",
            failures.len(),
            targets.len()
        );
    }
    Ok(())
}

pub fn cv(cfg: &RunConfig) -> Result<()> {
    let raw = io::read_samples(input(&cfg.samples, "samples")?)?;
    let samples: Vec<IntervalSample> = if cfg.log_scale {
        raw.iter()
            .map(|s| Ok(IntervalSample::new(s.loc, to_log_scale(&s.value)?)))
            .collect::<Result<_>>()
            .context("log_scale needs positive lower bounds")?
    } else {
        raw
    };
    let bin_edges = match (&cfg.bin_edges, cfg.max_lag) {
        (Some(e), _) => Some(e.clone()),
        (None, Some(m)) => Some(uniform_bin_edges(m, cfg.bins)?),
        (None, None) => None,
    };
    let config = CvConfig {
        folds: cfg.folds,
        seed: cfg.seed,
        bin_edges,
        center_family: cfg.center_family,
        radius_family: cfg.radius_family,
        a: cfg.a_matrix()?,
        solver: cfg.solver,
        neighborhood: cfg.neighbors,
        detrend: cfg.detrend,
        predictors: cfg.predictors.clone(),
    };
    let report = run_cv(&samples, &config)?;
    let mut w = io::csv_writer(io::sink(cfg.output.as_deref())?);
    w.write_record(["predictor", "fold", "n", "rmse", "rmse_c", "rmse_r"])?;
    let row = |w: &mut csv::Writer<_>, p: &str, fold: String, m: &Rmse| {
        w.write_record([
            p.to_string(),
            fold,
            m.n.to_string(),
            fmt(m.rmse),
            fmt(m.rmse_c),
            fmt(m.rmse_r),
        ])
    };
    for (p, m) in &report.results {
        row(&mut w, p.name(), "all".into(), &m.overall)?;
        for (k, f) in m.per_fold.iter().enumerate() {
            row(&mut w, p.name(), (k + 1).to_string(), f)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn snowload(cfg: &RunConfig) -> Result<()> {
    let stations = io::read_stations(input(&cfg.stations, "stations")?)?;
    let methods = cfg.conversion_methods();
    let intervals: Vec<IntervalSample> = stations
        .par_iter()
        .map(|s| build_design_interval(s, &methods).map_err(|e| anyhow!("station {}: {e}", s.id)))
        .collect::<Result<_>>()?;
    let mut w = io::csv_writer(io::sink(cfg.output.as_deref())?);
    w.write_record(["id", "lon", "lat", "elev_m", "lower_kpa", "upper_kpa"])?;
    for (s, iv) in stations.iter().zip(&intervals) {
        w.write_record([
            s.id.clone(),
            fmt(s.loc.x),
            fmt(s.loc.y),
            fmt(s.loc.elevation),
            fmt(iv.value.lower()),
            fmt(iv.value.upper()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let elevation = match (cfg.elev_min, cfg.elev_max) {
        (Some(min), Some(max)) => Some(ElevationTrend {
            min,
            max,
            trend: TrendModel {
                beta0: cfg.beta0,
                beta1: cfg.beta1,
            },
        }),
        (None, None) => None,
        _ => bail!("set both elev_min and elev_max, or neither"),
    };
    let params = FieldParams {
        domain: cfg.domain,
        center: cfg.field_center,
        radius: cfg.field_radius,
        coupling: cfg.coupling,
        shift: cfg.shift,
        elevation,
    };
    let field = simulate_field(cfg.n, &params, cfg.seed)?;
    io::write_samples(cfg.output.as_deref(), &field)
}
