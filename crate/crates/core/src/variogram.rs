//! Empirical center, radius and cross semivariograms, parametric models,
//! weighted least squares fitting and covariance recovery.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kriging::IntervalSample;

/// A site: planar coordinates in the dataset's declared units plus an
/// elevation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub x: f64,
    pub y: f64,
    pub elevation: f64,
}

impl Location {
    pub fn new(x: f64, y: f64, elevation: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && elevation.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite location ({x}, {y}, {elevation})"
            )));
        }
        Ok(Self { x, y, elevation })
    }

    /// A location at zero elevation, for purely planar problems.
    pub fn planar(x: f64, y: f64) -> Result<Self> {
        Self::new(x, y, 0.0)
    }

    /// Isotropic Euclidean separation in the horizontal plane.
    pub fn distance(&self, other: &Location) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Center,
    Radius,
    Cross,
}

impl Channel {
    pub fn label(&self) -> &'static str {
        match self {
            Channel::Center => "C",
            Channel::Radius => "R",
            Channel::Cross => "CR",
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c" | "center" => Ok(Channel::Center),
            "r" | "radius" => Ok(Channel::Radius),
            "cr" | "cross" => Ok(Channel::Cross),
            other => Err(Error::InvalidArgument(format!("unknown channel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Spherical,
    Exponential,
    Nugget,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Spherical => "spherical",
            Family::Exponential => "exponential",
            Family::Nugget => "nugget",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sph" | "spherical" => Ok(Family::Spherical),
            "exp" | "exponential" => Ok(Family::Exponential),
            "nug" | "nugget" | "nugget-only" => Ok(Family::Nugget),
            other => Err(Error::InvalidArgument(format!(
                "unknown model family '{other}'"
            ))),
        }
    }
}

/// A parametric semivariogram. Evaluates to exactly zero at the origin, with
/// the nugget as a discontinuity for any positive lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramModel {
    pub family: Family,
    pub nugget: f64,
    pub partial_sill: f64,
    pub range: f64,
}

impl VariogramModel {
    pub fn new(family: Family, nugget: f64, partial_sill: f64, range: f64) -> Result<Self> {
        if !(nugget.is_finite() && nugget >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nugget must be >= 0, got {nugget}"
            )));
        }
        if !(partial_sill.is_finite() && partial_sill >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "partial sill must be >= 0, got {partial_sill}"
            )));
        }
        if !(range.is_finite() && range > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "range must be > 0, got {range}"
            )));
        }
        Ok(Self {
            family,
            nugget,
            partial_sill,
            range,
        })
    }

    pub fn spherical(nugget: f64, partial_sill: f64, range: f64) -> Result<Self> {
        Self::new(Family::Spherical, nugget, partial_sill, range)
    }

    pub fn exponential(nugget: f64, partial_sill: f64, range: f64) -> Result<Self> {
        Self::new(Family::Exponential, nugget, partial_sill, range)
    }

    pub fn nugget_only(nugget: f64) -> Result<Self> {
        Self::new(Family::Nugget, nugget, 0.0, 1.0)
    }

    /// The identically zero model (no spatial variance at all).
    pub fn zero() -> Self {
        Self {
            family: Family::Nugget,
            nugget: 0.0,
            partial_sill: 0.0,
            range: 1.0,
        }
    }

    pub fn sill(&self) -> f64 {
        match self.family {
            Family::Nugget => self.nugget,
            _ => self.nugget + self.partial_sill,
        }
    }

    /// Semivariance at lag `h >= 0`.
    pub fn gamma(&self, h: f64) -> f64 {
        debug_assert!(h >= 0.0);
        if h <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Nugget => self.nugget,
            Family::Spherical => {
                if h <= self.range {
                    let u = h / self.range;
                    self.nugget + self.partial_sill * (1.5 * u - 0.5 * u * u * u)
                } else {
                    self.nugget + self.partial_sill
                }
            }
            Family::Exponential => {
                self.nugget + self.partial_sill * (1.0 - (-h / self.range).exp())
            }
        }
    }

    /// Covariance at lag `h >= 0`, `C(h) = sill - gamma(h)`.
    pub fn covariance(&self, h: f64) -> f64 {
        self.sill() - self.gamma(h)
    }

    fn params(&self) -> Vec<f64> {
        match self.family {
            Family::Nugget => vec![self.nugget],
            _ => vec![self.nugget, self.partial_sill, self.range],
        }
    }

    fn with_params(&self, p: &[f64]) -> Self {
        match self.family {
            Family::Nugget => Self {
                nugget: p[0],
                ..*self
            },
            _ => Self {
                nugget: p[0],
                partial_sill: p[1],
                range: p[2],
                ..*self
            },
        }
    }

    /// Value and parameter gradient at a positive lag.
    fn gamma_and_jacobian(&self, h: f64) -> (f64, Vec<f64>) {
        match self.family {
            Family::Nugget => (self.nugget, vec![1.0]),
            Family::Spherical => {
                let r = self.range;
                if h <= r {
                    let u = h / r;
                    let shape = 1.5 * u - 0.5 * u * u * u;
                    let d_range = -1.5 * self.partial_sill * (h / (r * r)) * (1.0 - u * u);
                    (
                        self.nugget + self.partial_sill * shape,
                        vec![1.0, shape, d_range],
                    )
                } else {
                    (self.nugget + self.partial_sill, vec![1.0, 1.0, 0.0])
                }
            }
            Family::Exponential => {
                let r = self.range;
                let e = (-h / r).exp();
                let d_range = -self.partial_sill * e * h / (r * r);
                (
                    self.nugget + self.partial_sill * (1.0 - e),
                    vec![1.0, 1.0 - e, d_range],
                )
            }
        }
    }
}

impl fmt::Display for VariogramModel {
    /// Plain-text descriptor `family nugget partial_sill range`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.family.name(),
            self.nugget,
            self.partial_sill,
            self.range
        )
    }
}

impl FromStr for VariogramModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        let bad = || Error::InvalidArgument(format!("malformed model descriptor '{s}'"));
        if fields.len() != 4 {
            return Err(bad());
        }
        let family: Family = fields[0].parse()?;
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        Self::new(family, num(fields[1])?, num(fields[2])?, num(fields[3])?)
    }
}

/// Semivariance of `m` at lag `h`; rejects negative or non-finite lags.
pub fn eval_model(m: &VariogramModel, h: f64) -> Result<f64> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lag must be finite and >= 0, got {h}"
        )));
    }
    Ok(m.gamma(h))
}

/// Covariance recovered from a bounded model, `C(h) = sill - gamma(h)`.
pub fn cov_from_variogram(m: &VariogramModel, h: f64) -> Result<f64> {
    eval_model(m, h).map(|g| m.sill() - g)
}

/// Binned method-of-moments estimates for the center, radius and cross
/// semivariograms. Empty bins carry a zero count and no gamma values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalVariogram {
    pub bin_centers: Vec<f64>,
    pub gamma_c: Vec<Option<f64>>,
    pub gamma_r: Vec<Option<f64>>,
    pub gamma_cr: Vec<Option<f64>>,
    pub pair_counts: Vec<usize>,
}

impl EmpiricalVariogram {
    pub fn len(&self) -> usize {
        self.bin_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bin_centers.is_empty()
    }

    pub fn channel(&self, channel: Channel) -> &[Option<f64>] {
        match channel {
            Channel::Center => &self.gamma_c,
            Channel::Radius => &self.gamma_r,
            Channel::Cross => &self.gamma_cr,
        }
    }

    /// `(lag, gamma, count)` for every nonempty bin of a channel.
    pub fn points(&self, channel: Channel) -> Vec<(f64, f64, usize)> {
        self.bin_centers
            .iter()
            .zip(self.channel(channel))
            .zip(&self.pair_counts)
            .filter_map(|((&h, g), &n)| g.map(|g| (h, g, n)))
            .collect()
    }

    /// Writes `channel,bin_center,gamma,count` rows; empty bins have an empty
    /// gamma field.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "channel,bin_center,gamma,count")?;
        for ch in [Channel::Center, Channel::Radius, Channel::Cross] {
            for ((h, g), n) in self
                .bin_centers
                .iter()
                .zip(self.channel(ch))
                .zip(&self.pair_counts)
            {
                let g = g.map(|g| format_sig(g, 9)).unwrap_or_default();
                writeln!(w, "{},{},{},{}", ch.label(), format_sig(*h, 9), g, n)?;
            }
        }
        Ok(())
    }
}

/// Formats `x` with `digits` significant digits, `%g`-style.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let exp = x.abs().log10().floor() as i32;
    // Rounding can bump the exponent (e.g. 9.9999999999 -> 10.0000000).
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, e) = sci.split_once('e').expect("scientific format");
    let e: i32 = e.parse().expect("exponent");
    let exp = exp.max(e);
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{e}")
    } else {
        let decimals = (digits as i32 - 1 - e).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Classical estimator of the three semivariograms. A pair at separation `d`
/// belongs to bin `k` when `edges[k] < d <= edges[k + 1]`.
pub fn empirical_variograms(
    samples: &[IntervalSample],
    bin_edges: &[f64],
) -> Result<EmpiricalVariogram> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples for an empirical variogram, got {}",
            samples.len()
        )));
    }
    if bin_edges.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 bin edges".into()));
    }
    if bin_edges.iter().any(|e| !e.is_finite()) || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "bin edges must be finite and strictly increasing".into(),
        ));
    }
    let nbins = bin_edges.len() - 1;

    #[derive(Clone)]
    struct Acc {
        dist: f64,
        cc: f64,
        rr: f64,
        cr: f64,
        n: usize,
    }
    let zero = Acc {
        dist: 0.0,
        cc: 0.0,
        rr: 0.0,
        cr: 0.0,
        n: 0,
    };

    // Rows are accumulated independently and merged in index order so the
    // sums are reproducible regardless of scheduling.
    let rows: Vec<Vec<Acc>> = (0..samples.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![zero.clone(); nbins];
            let si = &samples[i];
            for sj in &samples[i + 1..] {
                let d = si.loc.distance(&sj.loc);
                if d <= bin_edges[0] || d > bin_edges[nbins] {
                    continue;
                }
                // first edge >= d, minus one
                let k = bin_edges.partition_point(|&e| e < d) - 1;
                let dc = si.value.center() - sj.value.center();
                let dr = si.value.radius() - sj.value.radius();
                let a = &mut acc[k];
                a.dist += d;
                a.cc += dc * dc;
                a.rr += dr * dr;
                a.cr += dc * dr;
                a.n += 1;
            }
            acc
        })
        .collect();

    let mut total = vec![zero; nbins];
    for row in rows {
        for (t, a) in total.iter_mut().zip(row) {
            t.dist += a.dist;
            t.cc += a.cc;
            t.rr += a.rr;
            t.cr += a.cr;
            t.n += a.n;
        }
    }

    let mut out = EmpiricalVariogram {
        bin_centers: Vec::with_capacity(nbins),
        gamma_c: Vec::with_capacity(nbins),
        gamma_r: Vec::with_capacity(nbins),
        gamma_cr: Vec::with_capacity(nbins),
        pair_counts: Vec::with_capacity(nbins),
    };
    for (k, t) in total.iter().enumerate() {
        out.pair_counts.push(t.n);
        if t.n == 0 {
            out.bin_centers
                .push(0.5 * (bin_edges[k] + bin_edges[k + 1]));
            out.gamma_c.push(None);
            out.gamma_r.push(None);
            out.gamma_cr.push(None);
        } else {
            let n = t.n as f64;
            out.bin_centers.push(t.dist / n);
            out.gamma_c.push(Some(t.cc / (2.0 * n)));
            out.gamma_r.push(Some(t.rr / (2.0 * n)));
            out.gamma_cr.push(Some(t.cr / (2.0 * n)));
        }
    }
    Ok(out)
}

/// `n_bins` equal-width bin edges on `(0, max_lag]`.
pub fn uniform_bin_edges(max_lag: f64, n_bins: usize) -> Result<Vec<f64>> {
    if !(max_lag > 0.0) || n_bins == 0 {
        return Err(Error::InvalidArgument(format!(
            "need max_lag > 0 and n_bins >= 1, got {max_lag} and {n_bins}"
        )));
    }
    Ok((0..=n_bins)
        .map(|k| max_lag * k as f64 / n_bins as f64)
        .collect())
}

/// Outcome of a weighted least squares variogram fit.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsFit {
    pub model: VariogramModel,
    /// `sum_k N_k (gamma_hat_k - gamma_k)^2 / gamma_k^2` at the returned model.
    pub objective: f64,
    pub iterations: usize,
}

const WLS_MAX_ITER: usize = 200;
const WLS_REL_TOL: f64 = 1e-10;

/// Weighted least squares fit of a parametric model to one channel of an
/// empirical variogram with weights `N_k / gamma(h_k; theta)^2`, minimised
/// by Levenberg-Marquardt with the weights moving with `theta`. Parameters
/// are kept in the box `nugget >= 0`, `partial_sill >= 0`, `range > 0`.
pub fn fit_wls(
    emp: &EmpiricalVariogram,
    channel: Channel,
    family: Family,
    init: &VariogramModel,
) -> Result<WlsFit> {
    let pts = emp.points(channel);
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 nonempty bins to fit, got {}",
            pts.len()
        )));
    }
    let max_lag = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    let min_range = 1e-9 * max_lag.max(f64::MIN_POSITIVE);
    let gamma_scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let gamma_floor = 1e-12 * gamma_scale.max(f64::MIN_POSITIVE);

    let project = |p: &mut [f64]| {
        p[0] = p[0].max(0.0);
        if p.len() == 3 {
            p[1] = p[1].max(0.0);
            p[2] = p[2].max(min_range);
        }
    };

    let mut model = VariogramModel { family, ..*init };
    let mut theta = model.params();
    project(&mut theta);
    model = model.with_params(&theta);

    // r_k = sqrt(N_k) (gamma_hat_k / gamma_k - 1), so sum r_k^2 is the
    // weighted objective with weights depending on the parameters.
    let residuals = |m: &VariogramModel| -> Vec<f64> {
        pts.iter()
            .map(|&(h, g, n)| (n as f64).sqrt() * (g / m.gamma(h).abs().max(gamma_floor) - 1.0))
            .collect()
    };
    let objective = |m: &VariogramModel| -> f64 { residuals(m).iter().map(|r| r * r).sum() };

    let np = theta.len();
    let mut damping = 1e-3;
    let mut f0 = objective(&model);
    for iter in 1..=WLS_MAX_ITER {
        let mut jtj = DMatrix::<f64>::zeros(np, np);
        let mut jtr = DVector::<f64>::zeros(np);
        for (&(h, g, n), r) in pts.iter().zip(residuals(&model)) {
            let (gm, jac) = model.gamma_and_jacobian(h);
            let gm = gm.abs().max(gamma_floor);
            let scale = -(n as f64).sqrt() * g / (gm * gm);
            for a in 0..np {
                jtr[a] -= scale * jac[a] * r;
                for b in 0..np {
                    jtj[(a, b)] += scale * scale * jac[a] * jac[b];
                }
            }
        }

        // Parameters on their bound with descent pointing outward stay fixed;
        // clipping a full step instead stalls the other parameters.
        let lower = [0.0, 0.0, min_range];
        let free: Vec<usize> = (0..np)
            .filter(|&a| !(theta[a] <= lower[a] && jtr[a] <= 0.0))
            .collect();
        if free.is_empty() {
            return Ok(WlsFit {
                model,
                objective: f0,
                iterations: iter,
            });
        }
        let mut accepted = None;
        for _ in 0..40 {
            let k = free.len();
            let mut m = DMatrix::from_fn(k, k, |i, j| jtj[(free[i], free[j])]);
            for i in 0..k {
                m[(i, i)] += damping * m[(i, i)].max(1e-300) + 1e-300;
            }
            let rhs = DVector::from_fn(k, |i, _| jtr[free[i]]);
            let Some(reduced) = m.lu().solve(&rhs) else {
                damping *= 10.0;
                continue;
            };
            let mut cand = theta.clone();
            for (i, &a) in free.iter().enumerate() {
                cand[a] += reduced[i];
            }
            project(&mut cand);
            let f1 = objective(&model.with_params(&cand));
            if f1.is_finite() && f1 <= f0 {
                // Gain ratio against the linearised model: steps that
                // achieve little of the predicted decrease (a zig-zag across
                // a narrow valley) raise the damping.
                let s = DVector::from_fn(np, |a, _| cand[a] - theta[a]);
                let predicted = 2.0 * s.dot(&jtr) - s.dot(&(&jtj * &s));
                let gain = if predicted > 0.0 {
                    (f0 - f1) / predicted
                } else {
                    1.0
                };
                if gain > 0.75 {
                    damping = (damping / 3.0).max(1e-12);
                } else if gain < 0.25 {
                    damping *= 2.0;
                }
                accepted = Some((cand, f1));
                break;
            }
            damping *= 10.0;
        }

        let Some((cand, f1)) = accepted else {
            // no descent left at any damping: stationary point
            return Ok(WlsFit {
                model,
                objective: f0,
                iterations: iter,
            });
        };
        let moved = theta
            .iter()
            .zip(&cand)
            .map(|(a, b)| (a - b).abs() / a.abs().max(1e-300))
            .fold(0.0, f64::max);
        theta = cand;
        model = model.with_params(&theta);
        let rel = (f0 - f1) / f0.max(f64::MIN_POSITIVE);
        f0 = f1;
        if f1 <= f64::MIN_POSITIVE || rel < WLS_REL_TOL || moved < WLS_REL_TOL {
            return Ok(WlsFit {
                model,
                objective: f1,
                iterations: iter,
            });
        }
    }
    Err(Error::NonConvergence(format!(
        "variogram fit did not converge within {WLS_MAX_ITER} iterations"
    )))
}

/// Heuristic starting values for [`fit_wls`]: nugget from the first bin,
/// partial sill from the plateau, range at a third of the largest lag.
pub fn initial_guess(emp: &EmpiricalVariogram, channel: Channel, family: Family) -> VariogramModel {
    let pts = emp.points(channel);
    let first = pts.first().map(|p| p.1.max(0.0)).unwrap_or(0.0);
    let max_g = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let max_lag = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    let nugget = 0.5 * first;
    VariogramModel {
        family,
        nugget,
        partial_sill: (max_g - nugget).max(0.0),
        range: if max_lag > 0.0 { max_lag / 3.0 } else { 1.0 },
    }
}
