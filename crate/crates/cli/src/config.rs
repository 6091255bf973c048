//! Run configuration: a flat `key = value` file overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use intkrige::cv::Predictor;
use intkrige::intervals::kernel_to_a;
use intkrige::kriging::Neighborhood;
use intkrige::simulate::Rect;
use intkrige::snowload::{ColoradoRamp, Conversion};
use intkrige::{
    AMatrix, Family, Interval, Kernel2, Mode, PenaltyVariant, SolverConfig, VariogramModel,
};

/// Regular grid of targets: `x_min, x_max, y_min, y_max, nx, ny`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub samples: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    /// Fitted models: written by `variogram`, read by `krige`.
    pub models: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub geojson: Option<PathBuf>,
    /// Declared coordinate units; distances are always planar Euclidean.
    pub units: String,

    pub bin_edges: Option<Vec<f64>>,
    pub bins: usize,
    /// `None`: half the largest sample separation.
    pub max_lag: Option<f64>,
    pub center_family: Family,
    pub radius_family: Family,
    pub center_init: Option<VariogramModel>,
    pub radius_init: Option<VariogramModel>,

    pub a11: f64,
    pub a22: f64,
    pub a12: f64,
    pub kernel: Option<Kernel2>,

    pub mode: Mode,
    pub solver: SolverConfig,
    pub neighbors: Neighborhood,
    /// Simple kriging mean; `None` uses the mean sample center.
    pub known_mean: Option<Interval>,
    pub grid: Option<Grid>,

    pub log_scale: bool,
    pub detrend: bool,

    pub folds: usize,
    pub predictors: Vec<Predictor>,

    pub methods: Vec<Conversion>,
    pub colorado_ramp: ColoradoRamp,

    pub n: usize,
    pub domain: Rect,
    pub field_center: VariogramModel,
    pub field_radius: Option<VariogramModel>,
    pub coupling: f64,
    pub shift: f64,
    pub elev_min: Option<f64>,
    pub elev_max: Option<f64>,
    pub beta0: f64,
    pub beta1: f64,

    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            samples: None,
            stations: None,
            targets: None,
            models: None,
            output: None,
            geojson: None,
            units: "planar".into(),
            bin_edges: None,
            bins: 15,
            max_lag: None,
            center_family: Family::Spherical,
            radius_family: Family::Spherical,
            center_init: None,
            radius_init: None,
            a11: 1.0,
            a22: 1.0,
            a12: 0.0,
            kernel: None,
            mode: Mode::Ordinary,
            solver: SolverConfig::default(),
            neighbors: Neighborhood::Auto,
            known_mean: None,
            grid: None,
            log_scale: false,
            detrend: false,
            folds: 10,
            predictors: Predictor::ALL.to_vec(),
            methods: Conversion::standard(),
            colorado_ramp: ColoradoRamp::default(),
            n: 100,
            domain: Rect::square(10.0).expect("valid square"),
            field_center: VariogramModel::exponential(0.0, 1.0, 4.0).expect("valid model"),
            field_radius: Some(
                VariogramModel::exponential(0.0, 1.0 / 9.0, 5.0).expect("valid model"),
            ),
            coupling: 0.0,
            shift: 1.0,
            elev_min: None,
            elev_max: None,
            beta0: 0.5,
            beta1: 0.0005,
            seed: 0,
            threads: None,
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow!("cannot parse '{value}': {e}"))
}

fn numbers(value: &str) -> Result<Vec<f64>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(parse::<f64>)
        .collect()
}

fn fixed<const N: usize>(value: &str) -> Result<[f64; N]> {
    let v = numbers(value)?;
    v.try_into()
        .map_err(|v: Vec<f64>| anyhow!("expected {N} numbers, got {}", v.len()))
}

fn boolean(value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("expected true or false, got '{value}'"),
    }
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(parse::<T>)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("empty list");
    }
    Ok(items)
}

impl RunConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        self.apply(key.trim(), value)
            .with_context(|| format!("setting '{key}'"))
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "samples" => self.samples = path(),
            "stations" => self.stations = path(),
            "targets" => self.targets = path(),
            "models" => self.models = path(),
            "output" => self.output = path(),
            "geojson" => self.geojson = path(),
            "units" => self.units = value.to_string(),
            "bin_edges" => self.bin_edges = Some(numbers(value)?),
            "bins" => self.bins = parse(value)?,
            "max_lag" => self.max_lag = Some(parse(value)?),
            "center_family" => self.center_family = parse(value)?,
            "radius_family" => self.radius_family = parse(value)?,
            "center_init" => self.center_init = Some(parse(value)?),
            "radius_init" => self.radius_init = Some(parse(value)?),
            "a11" => self.a11 = parse(value)?,
            "a22" => self.a22 = parse(value)?,
            "a12" => self.a12 = parse(value)?,
            "kernel" => {
                let [kpp, kmm, kpm, kmp] = fixed::<4>(value)?;
                self.kernel = Some(Kernel2::new(kpp, kmm, kpm, kmp)?);
            }
            "mode" => self.mode = parse(value)?,
            "variant" => self.solver.penalty_variant = parse::<PenaltyVariant>(value)?,
            "c0_sk" => self.solver.c0_sk = parse(value)?,
            "c0_ok" => self.solver.c0_ok = parse(value)?,
            "eta" => self.solver.eta = parse(value)?,
            "tolp" => self.solver.tolp = parse(value)?,
            "tolz" => self.solver.tolz = parse(value)?,
            "maxp" => self.solver.maxp = parse(value)?,
            "maxq" => self.solver.maxq = parse(value)?,
            "newton_tol" => self.solver.newton_tol = parse(value)?,
            "gap_tol" => self.solver.gap_tol = parse(value)?,
            "neighbors" => {
                self.neighbors = match value.to_ascii_lowercase().as_str() {
                    "auto" => Neighborhood::Auto,
                    "global" | "all" => Neighborhood::Global,
                    k => match parse::<usize>(k)? {
                        0 => bail!("neighbor count must be positive"),
                        k => Neighborhood::Nearest(k),
                    },
                }
            }
            "known_mean" => {
                let v = numbers(value)?;
                self.known_mean = Some(match v.as_slice() {
                    [m] => Interval::point(*m)?,
                    [lo, hi] => Interval::new(*lo, *hi)?,
                    _ => bail!("expected a value or 'lower, upper'"),
                });
            }
            "grid" => {
                let [x0, x1, y0, y1, nx, ny] = fixed::<6>(value)?;
                let count = |v: f64| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(anyhow!("grid counts must be positive integers, got {v}"))
                    }
                };
                self.grid = Some(Grid {
                    rect: Rect::new(x0, x1, y0, y1)?,
                    nx: count(nx)?,
                    ny: count(ny)?,
                });
            }
            "log_scale" => self.log_scale = boolean(value)?,
            "detrend" => self.detrend = boolean(value)?,
            "folds" => self.folds = parse(value)?,
            "predictors" => self.predictors = list(value)?,
            "methods" => self.methods = list(value)?,
            "colorado_low" => {
                self.colorado_ramp = ColoradoRamp::new(parse(value)?, self.colorado_ramp.high)?
            }
            "colorado_high" => {
                self.colorado_ramp = ColoradoRamp::new(self.colorado_ramp.low, parse(value)?)?
            }
            "n" => self.n = parse(value)?,
            "domain" => {
                let [x0, x1, y0, y1] = fixed::<4>(value)?;
                self.domain = Rect::new(x0, x1, y0, y1)?;
            }
            "field_center" => self.field_center = parse(value)?,
            "field_radius" => {
                self.field_radius = match value.to_ascii_lowercase().as_str() {
                    "none" => None,
                    _ => Some(parse(value)?),
                }
            }
            "coupling" => self.coupling = parse(value)?,
            "shift" => self.shift = parse(value)?,
            "elev_min" => self.elev_min = Some(parse(value)?),
            "elev_max" => self.elev_max = Some(parse(value)?),
            "beta0" => self.beta0 = parse(value)?,
            "beta1" => self.beta1 = parse(value)?,
            "seed" => self.seed = parse(value)?,
            "threads" => {
                self.threads = match parse::<usize>(value)? {
                    0 => None,
                    t => Some(t),
                }
            }
            _ => bail!("unknown key"),
        }
        Ok(())
    }

    /// Read settings from a flat `key = value` file; `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected 'key = value'", path.display(), k + 1))?;
            self.set(key, value)
                .with_context(|| format!("{}:{}", path.display(), k + 1))?;
        }
        Ok(())
    }

    /// The metric matrix, from `kernel` when given, else `a11, a22, a12`.
    pub fn a_matrix(&self) -> Result<AMatrix> {
        Ok(match &self.kernel {
            Some(k) => kernel_to_a(k)?,
            None => AMatrix::new(self.a11, self.a22, self.a12)?,
        })
    }

    /// Colorado methods pick up the configured ramp.
    pub fn conversion_methods(&self) -> Vec<Conversion> {
        self.methods
            .iter()
            .map(|m| match m {
                Conversion::Colorado(_) => Conversion::Colorado(self.colorado_ramp),
                other => *other,
            })
            .collect()
    }
}

/// A required input path that must exist.
pub fn input<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = path.as_deref().ok_or_else(|| {
        anyhow!("no '{key}' file given (set it in the config file or with --{key})")
    })?;
    if !p.is_file() {
        bail!("{key} file {} does not exist", p.display());
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_settings_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(
            &path,
            "# comment\nmode = sk\nvariant = original  # trailing\nbin_edges = 0, 1, 2.5\nneighbors = 12\nknown_mean = 1, 3\n",
        )
        .unwrap();
        let mut c = RunConfig::default();
        c.load_file(&path).unwrap();
        assert_eq!(c.mode, Mode::Simple);
        assert_eq!(c.solver.penalty_variant, PenaltyVariant::Original);
        assert_eq!(c.bin_edges, Some(vec![0.0, 1.0, 2.5]));
        assert_eq!(c.neighbors, Neighborhood::Nearest(12));
        assert_eq!(c.known_mean, Some(Interval::new(1.0, 3.0).unwrap()));
    }

    #[test]
    fn bad_lines_report_their_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "mode = ok\n\nbogus = 1\n").unwrap();
        let err = RunConfig::default().load_file(&path).unwrap_err();
        assert!(format!("{err:#}").contains("run.cfg:3"), "{err:#}");
        fs::write(&path, "mode ok\n").unwrap();
        let err = RunConfig::default().load_file(&path).unwrap_err();
        assert!(format!("{err:#}").contains("run.cfg:1"), "{err:#}");
    }

    #[test]
    fn kernel_overrides_a_entries() {
        let mut c = RunConfig::default();
        c.set("a11", "3").unwrap();
        assert_eq!(c.a_matrix().unwrap().a11, 3.0);
        c.set("kernel", "0.5 0.5 0 0").unwrap();
        let a = c.a_matrix().unwrap();
        assert_eq!((a.a11, a.a22, a.a12), (1.0, 1.0, 0.0));
    }

    #[test]
    fn rejects_malformed_values() {
        let mut c = RunConfig::default();
        assert!(c.set("grid", "0 1 0 1 2.5 3").is_err());
        assert!(c.set("mode", "kriging").is_err());
        assert!(c.set("neighbors", "0").is_err());
        assert!(c.set("domain", "0 1 0").is_err());
    }
}
