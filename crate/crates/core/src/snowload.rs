//! Depth-to-load conversions, log-normal design loads, design intervals and
//! elevation detrending.
//!
//! Units: depth in cm, load in kPa, elevation in m. The day of the snow
//! season runs from -92 (October 1) to 181 (June 30) and skips 0.

use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::intervals::Interval;
use crate::kriging::IntervalSample;
use crate::variogram::Location;

/// Non-exceedance probability of the design load.
pub const DESIGN_QUANTILE: f64 = 0.98;
/// Elevation (m) at which the Utah conversion switches to alpine parameters.
pub const UTAH_ALPINE_ELEVATION: f64 = 2113.6;
/// Depth (cm) at which the Idaho conversion changes branch.
pub const IDAHO_BREAK: f64 = 55.88;

fn check_depth(h: f64) -> Result<()> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!(
            "snow depth must be finite and >= 0, got {h}"
        )));
    }
    Ok(())
}

fn check_day(d: i32) -> Result<()> {
    if d == 0 || !(-92..=181).contains(&d) {
        return Err(Error::Domain(format!(
            "day of season must lie in [-92, 181] without 0, got {d}"
        )));
    }
    Ok(())
}

/// Elevations at which the Colorado blend reaches its end members.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoradoRamp {
    /// At or below this elevation only the second curve is used.
    pub low: f64,
    /// At or above this elevation only the first curve is used.
    pub high: f64,
}

impl Default for ColoradoRamp {
    fn default() -> Self {
        Self {
            low: 1800.0,
            high: 2600.0,
        }
    }
}

impl ColoradoRamp {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high && low.is_finite() && high.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Colorado ramp needs low < high, got {low} and {high}"
            )));
        }
        Ok(Self { low, high })
    }

    /// Weight of the first curve, linear in elevation between the end points.
    pub fn weight(&self, elevation: f64) -> f64 {
        ((elevation - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
    }
}

pub fn colorado_f1(h: f64) -> f64 {
    0.0479 * 0.279 * (h / 2.54).powf(1.36)
}

pub fn colorado_f2(h: f64) -> f64 {
    0.0479 * 0.584 * (h / 2.54).powf(1.15)
}

pub fn colorado_load(h: f64, elevation: f64, ramp: &ColoradoRamp) -> Result<f64> {
    check_depth(h)?;
    let p = ramp.weight(elevation);
    Ok(p * colorado_f1(h) + (1.0 - p) * colorado_f2(h))
}

/// Rocky Mountain conversion density, metric form. The branches do not meet
/// at the break.
pub fn idaho_load(h: f64) -> Result<f64> {
    check_depth(h)?;
    Ok(if h < IDAHO_BREAK {
        0.017 * h
    } else {
        0.0445 * h - 1.5274
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClimateClass {
    Alpine,
    Maritime,
    Prairie,
    Tundra,
    Taiga,
}

impl ClimateClass {
    pub const ALL: [ClimateClass; 5] = [
        ClimateClass::Alpine,
        ClimateClass::Maritime,
        ClimateClass::Prairie,
        ClimateClass::Tundra,
        ClimateClass::Taiga,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ClimateClass::Alpine => "alpine",
            ClimateClass::Maritime => "maritime",
            ClimateClass::Prairie => "prairie",
            ClimateClass::Tundra => "tundra",
            ClimateClass::Taiga => "taiga",
        }
    }
}

impl fmt::Display for ClimateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClimateClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        ClimateClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown climate class '{s}'")))
    }
}

/// Parameters of the Sturm density curve (densities in g/cm^3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SturmParams {
    pub rho_max: f64,
    pub rho_0: f64,
    pub k1: f64,
    pub k2: f64,
    pub class: ClimateClass,
}

impl SturmParams {
    pub fn new(rho_max: f64, rho_0: f64, k1: f64, k2: f64, class: ClimateClass) -> Result<Self> {
        let finite = [rho_max, rho_0, k1, k2].iter().all(|x| x.is_finite());
        if !finite || rho_0 < 0.0 || rho_max < rho_0 || k1 < 0.0 || k2 < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid Sturm parameters ({rho_max}, {rho_0}, {k1}, {k2})"
            )));
        }
        Ok(Self {
            rho_max,
            rho_0,
            k1,
            k2,
            class,
        })
    }

    /// Published per-class values.
    pub fn for_class(class: ClimateClass) -> Self {
        let (rho_max, rho_0, k1, k2) = match class {
            ClimateClass::Alpine => (0.5975, 0.2237, 0.0012, 0.0038),
            ClimateClass::Maritime => (0.5979, 0.2578, 0.0010, 0.0038),
            ClimateClass::Prairie => (0.5940, 0.2332, 0.016, 0.0031),
            ClimateClass::Tundra => (0.3630, 0.2425, 0.0029, 0.0049),
            ClimateClass::Taiga => (0.2170, 0.2170, 0.0, 0.0),
        };
        Self {
            rho_max,
            rho_0,
            k1,
            k2,
            class,
        }
    }

    /// Prairie curve of the Utah conversion (`k1 = 0.0016`).
    pub fn utah_prairie() -> Self {
        Self {
            rho_max: 0.5940,
            rho_0: 0.2332,
            k1: 0.0016,
            k2: 0.0031,
            class: ClimateClass::Prairie,
        }
    }

    /// Alpine curve of the Utah conversion.
    pub fn utah_alpine() -> Self {
        Self::for_class(ClimateClass::Alpine)
    }
}

pub fn sturm_load(h: f64, d: i32, p: &SturmParams) -> Result<f64> {
    check_depth(h)?;
    check_day(d)?;
    let density = (p.rho_max - p.rho_0) * (1.0 - (-p.k1 * h - p.k2 * d as f64).exp()) + p.rho_0;
    Ok(0.0981 * h * density)
}

/// Sturm's curve with prairie parameters below 2113.6 m and alpine at or
/// above it.
pub fn utah_load(h: f64, d: i32, elevation: f64) -> Result<f64> {
    let params = if elevation < UTAH_ALPINE_ELEVATION {
        SturmParams::utah_prairie()
    } else {
        SturmParams::utah_alpine()
    };
    sturm_load(h, d, &params)
}

/// A depth-to-load conversion method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conversion {
    Colorado(ColoradoRamp),
    Idaho,
    Sturm(SturmParams),
    Utah,
}

impl Conversion {
    /// The three state methods.
    pub fn standard() -> Vec<Conversion> {
        vec![
            Conversion::Colorado(ColoradoRamp::default()),
            Conversion::Idaho,
            Conversion::Utah,
        ]
    }

    pub fn load(&self, h: f64, d: i32, elevation: f64) -> Result<f64> {
        match self {
            Conversion::Colorado(ramp) => colorado_load(h, elevation, ramp),
            Conversion::Idaho => idaho_load(h),
            Conversion::Sturm(p) => sturm_load(h, d, p),
            Conversion::Utah => utah_load(h, d, elevation),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Conversion::Colorado(_) => "colorado".into(),
            Conversion::Idaho => "idaho".into(),
            Conversion::Sturm(p) => format!("sturm-{}", p.class),
            Conversion::Utah => "utah".into(),
        }
    }
}

impl FromStr for Conversion {
    type Err = Error;

    /// `colorado`, `idaho`, `utah` or `sturm-<class>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "colorado" => Ok(Conversion::Colorado(ColoradoRamp::default())),
            "idaho" => Ok(Conversion::Idaho),
            "utah" => Ok(Conversion::Utah),
            _ => match s.strip_prefix("sturm-") {
                Some(class) => Ok(Conversion::Sturm(SturmParams::for_class(class.parse()?))),
                None => Err(Error::InvalidArgument(format!(
                    "unknown conversion method '{s}'"
                ))),
            },
        }
    }
}

/// 98th percentile of a log-normal fitted by the mean and sample standard
/// deviation (divisor n - 1) of the log maxima.
pub fn lognormal_design_load(maxima: &[f64]) -> Result<f64> {
    if maxima.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a log-normal fit needs at least 2 maxima, got {}",
            maxima.len()
        )));
    }
    if let Some(x) = maxima.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!(
            "annual maxima must be positive, got {x}"
        )));
    }
    let logs: Vec<f64> = maxima.iter().map(|x| x.ln()).collect();
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mu + var.sqrt() * standard_normal_quantile(DESIGN_QUANTILE)).exp())
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// One season's maximum at a station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearlyMax {
    pub year: i32,
    pub depth_cm: f64,
    pub day: i32,
    /// Measured load; when present it replaces every conversion.
    pub direct_load: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationRecord {
    pub id: String,
    pub loc: Location,
    pub yearly: Vec<YearlyMax>,
}

/// Per-method annual loads of a station; zero loads (snow-free seasons)
/// are dropped since the log-normal fit cannot use them.
pub fn annual_loads(station: &StationRecord, method: &Conversion) -> Result<Vec<f64>> {
    let mut loads = Vec::with_capacity(station.yearly.len());
    for y in &station.yearly {
        let q = match y.direct_load {
            Some(q) if q >= 0.0 && q.is_finite() => q,
            Some(q) => {
                return Err(Error::Domain(format!(
                    "station {}: negative or non-finite load {q} in {}",
                    station.id, y.year
                )))
            }
            None => method.load(y.depth_cm, y.day, station.loc.elevation)?,
        };
        if q > 0.0 {
            loads.push(q);
        }
    }
    Ok(loads)
}

/// `[min, max]` of the per-method design loads (kPa) at a station.
pub fn build_design_interval(
    station: &StationRecord,
    methods: &[Conversion],
) -> Result<IntervalSample> {
    if methods.is_empty() {
        return Err(Error::Empty("conversion methods"));
    }
    if station.yearly.is_empty() {
        return Err(Error::Empty("station yearly maxima"));
    }
    let mut estimates = Vec::with_capacity(methods.len());
    for m in methods {
        let loads = annual_loads(station, m)?;
        let q = lognormal_design_load(&loads).map_err(|e| {
            Error::InvalidArgument(format!("station {} ({}): {e}", station.id, m.name()))
        })?;
        estimates.push(q);
    }
    let lo = estimates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = estimates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(IntervalSample::new(station.loc, Interval::new(lo, hi)?))
}

/// `[ln lower, ln upper]`.
pub fn to_log_scale(x: &Interval) -> Result<Interval> {
    if !(x.lower() > 0.0) {
        return Err(Error::Domain(format!(
            "log scale needs a positive interval, got {x}"
        )));
    }
    Interval::new(x.lower().ln(), x.upper().ln())
}

/// `[exp lower, exp upper]`.
pub fn from_log_scale(x: &Interval) -> Result<Interval> {
    Interval::new(x.lower().exp(), x.upper().exp())
}

/// Linear elevation trend of log-scale centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendModel {
    pub beta0: f64,
    /// Per meter of elevation.
    pub beta1: f64,
}

impl TrendModel {
    /// Ordinary least squares of `y` on elevation.
    pub fn fit(elevations: &[f64], y: &[f64]) -> Result<Self> {
        if elevations.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: elevations.len(),
                got: y.len(),
            });
        }
        if elevations.len() < 2 {
            return Err(Error::Empty("trend fit needs at least 2 samples"));
        }
        let n = elevations.len() as f64;
        let ma = elevations.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = elevations.iter().map(|a| (a - ma).powi(2)).sum();
        let sxy: f64 = elevations
            .iter()
            .zip(y)
            .map(|(a, b)| (a - ma) * (b - my))
            .sum();
        if !(sxx > 0.0) {
            return Err(Error::Degenerate("all elevations are equal".into()));
        }
        let beta1 = sxy / sxx;
        Ok(Self {
            beta0: my - beta1 * ma,
            beta1,
        })
    }

    pub fn mean_at(&self, elevation: f64) -> f64 {
        self.beta0 + self.beta1 * elevation
    }
}

fn radius_scale(elevation: f64) -> Result<f64> {
    if !(elevation > 1.0) {
        return Err(Error::Domain(format!(
            "radius scaling needs elevation > 1 m, got {elevation}"
        )));
    }
    Ok(elevation.ln())
}

/// Residual interval: center `l^C - beta0 - beta1 A`, radius `l^R ln A`.
pub fn residualize(trend: &TrendModel, s: &IntervalSample) -> Result<IntervalSample> {
    let a = s.loc.elevation;
    let value = Interval::from_center_radius(
        s.value.center() - trend.mean_at(a),
        s.value.radius() * radius_scale(a)?,
    )?;
    Ok(IntervalSample::new(s.loc, value))
}

/// Fit the center trend on log-scale samples and return their residuals.
pub fn detrend(samples: &[IntervalSample]) -> Result<(TrendModel, Vec<IntervalSample>)> {
    let elev: Vec<f64> = samples.iter().map(|s| s.loc.elevation).collect();
    let centers: Vec<f64> = samples.iter().map(|s| s.value.center()).collect();
    let trend = TrendModel::fit(&elev, &centers)?;
    let resid = samples
        .iter()
        .map(|s| residualize(&trend, s))
        .collect::<Result<_>>()?;
    Ok((trend, resid))
}

/// Inverse of [`residualize`] at elevation `elevation`.
pub fn retrend(trend: &TrendModel, elevation: f64, residual: &Interval) -> Result<Interval> {
    Interval::from_center_radius(
        residual.center() + trend.mean_at(elevation),
        residual.radius() / radius_scale(elevation)?,
    )
}
