//! Seeded synthetic interval fields: Gaussian centers and radii on uniform
//! random locations, optionally riding on an elevation trend in the log-scale
//! convention used by [`crate::snowload::detrend`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::intervals::Interval;
use crate::kriging::IntervalSample;
use crate::snowload::TrendModel;
use crate::variogram::{Location, VariogramModel};

/// Attempts at drawing an all-nonnegative radius field before giving up.
pub const MAX_RADIUS_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let ok = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !ok || x_min > x_max || y_min > y_max {
            return Err(Error::InvalidArgument(format!(
                "invalid rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn square(side: f64) -> Result<Self> {
        Self::new(0.0, side, 0.0, side)
    }
}

/// Elevation drawn uniformly in `[min, max]` per site. Centers gain
/// `trend.mean_at(A)` and radii are divided by `ln A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElevationTrend {
    pub min: f64,
    pub max: f64,
    pub trend: TrendModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    pub domain: Rect,
    pub center: VariogramModel,
    /// Independent part of the radius field; `None` for no independent part.
    pub radius: Option<VariogramModel>,
    /// Radius gets `coupling * Z^C` on top of its independent part.
    pub coupling: f64,
    pub shift: f64,
    pub elevation: Option<ElevationTrend>,
}

impl FieldParams {
    /// Uncoupled field with unit-sill exponential centers of range 4 and
    /// radii of sill `theta^2`, range 5, shifted by `shift`.
    pub fn independent(domain: Rect, theta: f64, shift: f64) -> Result<Self> {
        Ok(Self {
            domain,
            center: VariogramModel::exponential(0.0, 1.0, 4.0)?,
            radius: Some(VariogramModel::exponential(0.0, theta * theta, 5.0)?),
            coupling: 0.0,
            shift,
            elevation: None,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.shift.is_finite() && self.coupling.is_finite()) {
            return Err(Error::InvalidArgument(
                "shift and coupling must be finite".into(),
            ));
        }
        if let Some(e) = &self.elevation {
            if !(e.min > 1.0 && e.min <= e.max && e.max.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "elevation range must satisfy 1 < min <= max, got [{}, {}]",
                    e.min, e.max
                )));
            }
        }
        Ok(())
    }
}

/// Lower Cholesky factor of the model covariance between `locs`.
fn covariance_factor(locs: &[Location], model: &VariogramModel) -> Result<DMatrix<f64>> {
    let n = locs.len();
    let cov = DMatrix::from_fn(n, n, |i, j| model.covariance(locs[i].distance(&locs[j])));
    cov.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPsd(format!("{model} covariance between {n} sites")))
}

fn gaussian(rng: &mut ChaCha8Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(factor.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * z
}

/// `n` samples on uniform random locations, deterministic under `seed`.
pub fn simulate_field(n: usize, params: &FieldParams, seed: u64) -> Result<Vec<IntervalSample>> {
    if n == 0 {
        return Err(Error::Empty("simulated field needs n >= 1"));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = &params.domain;
    let locs: Vec<Location> = (0..n)
        .map(|_| {
            let x = rng.random_range(d.x_min..=d.x_max);
            let y = rng.random_range(d.y_min..=d.y_max);
            let elev = params
                .elevation
                .map_or(0.0, |e| rng.random_range(e.min..=e.max));
            Location::new(x, y, elev)
        })
        .collect::<Result<_>>()?;

    let zc = gaussian(&mut rng, &covariance_factor(&locs, &params.center)?);
    let radius_factor = params
        .radius
        .as_ref()
        .map(|m| covariance_factor(&locs, m))
        .transpose()?;
    let mut radii = None;
    for _ in 0..MAX_RADIUS_DRAWS {
        let mut zr = params.coupling * &zc;
        zr.add_scalar_mut(params.shift);
        if let Some(f) = &radius_factor {
            zr += gaussian(&mut rng, f);
        }
        if zr.iter().all(|r| *r >= 0.0) {
            radii = Some(zr);
            break;
        }
        if radius_factor.is_none() {
            break;
        }
    }
    let zr = radii.ok_or_else(|| {
        Error::Degenerate("radius field stayed negative somewhere; increase the shift".into())
    })?;

    locs.iter()
        .enumerate()
        .map(|(i, loc)| {
            let value = match &params.elevation {
                None => Interval::from_center_radius(zc[i], zr[i])?,
                Some(e) => Interval::from_center_radius(
                    zc[i] + e.trend.mean_at(loc.elevation),
                    zr[i] / loc.elevation.ln(),
                )?,
            };
            Ok(IntervalSample::new(*loc, value))
        })
        .collect()
}
