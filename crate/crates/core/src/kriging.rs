//! Interval-valued simple and ordinary kriging.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::intervals::{weighted_combine, AMatrix, Interval};
use crate::optimizer::{sumt, KrigingSystem, Mode, PenaltyStep, SolverConfig};
use crate::variogram::{Location, VariogramModel};

/// Samples beyond which [`Neighborhood::Auto`] switches to a local search.
pub const GLOBAL_LIMIT: usize = 200;
pub const DEFAULT_NEIGHBORS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalSample {
    pub loc: Location,
    pub value: Interval,
}

impl IntervalSample {
    pub fn new(loc: Location, value: Interval) -> Self {
        Self { loc, value }
    }
}

/// Variance models for the center, radius and (optionally) cross channels,
/// plus the metric weighting they are combined with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Models {
    pub center: VariogramModel,
    pub radius: VariogramModel,
    pub cross: Option<VariogramModel>,
    pub a: AMatrix,
}

impl Models {
    pub fn new(center: VariogramModel, radius: VariogramModel, a: AMatrix) -> Self {
        Self {
            center,
            radius,
            cross: None,
            a,
        }
    }

    pub fn with_cross(mut self, cross: VariogramModel) -> Self {
        self.cross = Some(cross);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.a.a12 != 0.0 && self.cross.is_none() {
            return Err(Error::InvalidArgument(
                "a12 != 0 requires a center/radius cross model".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingProblem {
    pub samples: Vec<IntervalSample>,
    pub target: Location,
    pub models: Models,
    pub mode: Mode,
    /// Known mean for simple kriging; its center is removed before and
    /// restored after prediction. The radius channel is never demeaned.
    pub known_mean: Option<Interval>,
}

impl KrigingProblem {
    pub fn new(
        samples: Vec<IntervalSample>,
        target: Location,
        models: Models,
        mode: Mode,
    ) -> Result<Self> {
        let p = Self {
            samples,
            target,
            models,
            mode,
            known_mean: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_known_mean(mut self, mean: Interval) -> Result<Self> {
        if self.mode != Mode::Simple {
            return Err(Error::InvalidArgument(
                "a known mean only applies to simple kriging".into(),
            ));
        }
        self.known_mean = Some(mean);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Empty("kriging samples"));
        }
        self.models.validate()
    }

    /// Covariance matrices and target vectors for the solver.
    pub fn system(&self) -> Result<KrigingSystem> {
        self.validate()?;
        let n = self.n();
        let m = &self.models;
        let cross = m.cross.filter(|_| m.a.a12 != 0.0);

        let mut cc = DMatrix::zeros(n, n);
        let mut rr = DMatrix::zeros(n, n);
        let mut cr = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let h = self.samples[i].loc.distance(&self.samples[j].loc);
                cc[(i, j)] = m.center.covariance(h);
                rr[(i, j)] = m.radius.covariance(h);
                cc[(j, i)] = cc[(i, j)];
                rr[(j, i)] = rr[(i, j)];
                if let Some(x) = cross {
                    cr[(i, j)] = x.covariance(h);
                    cr[(j, i)] = cr[(i, j)];
                }
            }
        }
        let lags: Vec<f64> = self
            .samples
            .iter()
            .map(|s| s.loc.distance(&self.target))
            .collect();
        let cc_t = DVector::from_iterator(n, lags.iter().map(|&h| m.center.covariance(h)));
        let rr_t = DVector::from_iterator(n, lags.iter().map(|&h| m.radius.covariance(h)));
        let cr_t = match cross {
            Some(x) => DVector::from_iterator(n, lags.iter().map(|&h| x.covariance(h))),
            None => DVector::zeros(n),
        };
        Ok(KrigingSystem {
            a: m.a,
            cc,
            rr,
            rc_t: cr_t.clone(),
            cr,
            cc_t,
            rr_t,
            cr_t,
            cc_0: m.center.sill(),
            rr_0: m.radius.sill(),
            cr_0: cross.map_or(0.0, |x| x.sill()),
        })
    }
}

fn check_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: w.len(),
        });
    }
    Ok(())
}

/// Prediction variance in covariance form, up to the additive constant.
pub fn prediction_variance_cov(w: &[f64], problem: &KrigingProblem) -> Result<f64> {
    check_weights(w, problem.n())?;
    Ok(problem.system()?.variance(w))
}

/// Prediction variance in covariance form including the additive constant.
pub fn full_prediction_variance(w: &[f64], problem: &KrigingProblem) -> Result<f64> {
    check_weights(w, problem.n())?;
    Ok(problem.system()?.full_variance(w))
}

/// Which variogram multiplies the target term of the radius bracket in
/// [`prediction_variance_vario`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusTargetTerm {
    /// `gamma^R(x_i - x*)`, symmetric with the center bracket.
    #[default]
    Radius,
    /// `gamma^C(x_i - x*)`.
    Center,
}

/// Prediction variance in variogram form. Only valid under
/// `sum w = 1 = sum |w|`, which is checked to within `tol`.
pub fn prediction_variance_vario(
    w: &[f64],
    problem: &KrigingProblem,
    reading: RadiusTargetTerm,
    tol: f64,
) -> Result<f64> {
    problem.validate()?;
    let n = problem.n();
    check_weights(w, n)?;
    let sum: f64 = w.iter().sum();
    let abs_sum: f64 = w.iter().map(|x| x.abs()).sum();
    if (sum - 1.0).abs() > tol || (abs_sum - 1.0).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "variogram form needs sum w = sum |w| = 1; got {sum} and {abs_sum}"
        )));
    }

    let m = &problem.models;
    let s = &problem.samples;
    let mut center = 0.0;
    let mut radius = 0.0;
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            let h = s[i].loc.distance(&s[j].loc);
            let ww = w[i] * w[j];
            center -= ww * m.center.gamma(h);
            radius -= ww * m.radius.gamma(h);
            if i != j {
                if let Some(x) = &m.cross {
                    cross -= ww * x.gamma(h);
                }
            }
        }
        let h = s[i].loc.distance(&problem.target);
        center += 2.0 * w[i] * m.center.gamma(h);
        radius += 2.0
            * w[i]
            * match reading {
                RadiusTargetTerm::Radius => m.radius.gamma(h),
                RadiusTargetTerm::Center => m.center.gamma(h),
            };
        if let Some(x) = &m.cross {
            cross += 2.0 * w[i] * x.gamma(h);
        }
    }
    let a = &m.a;
    let mut v = a.a11 * center + a.a22 * radius;
    if a.a12 != 0.0 {
        v += 2.0 * a.a12 * cross;
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingSolution {
    pub weights: Vec<f64>,
    pub prediction: Interval,
    /// Full prediction variance, additive constant included.
    pub kriging_variance: f64,
    pub constraint_residual: f64,
    pub penalty_steps: usize,
    pub newton_steps: usize,
    pub converged: bool,
    /// Indices of the samples the weights refer to.
    pub neighbors: Vec<usize>,
    pub trace: Vec<PenaltyStep>,
}

/// Solve for the kriging weights and form the predicted interval.
pub fn solve(problem: &KrigingProblem, config: &SolverConfig) -> Result<KrigingSolution> {
    let system = problem.system()?;
    let out = sumt(&system, problem.mode, config)?;
    let prediction = predict_interval(&out.weights, problem)?;
    Ok(KrigingSolution {
        kriging_variance: system.full_variance(&out.weights),
        prediction,
        constraint_residual: out.constraint_residual,
        penalty_steps: out.penalty_steps,
        newton_steps: out.newton_steps,
        converged: out.converged,
        neighbors: (0..problem.n()).collect(),
        trace: out.trace,
        weights: out.weights,
    })
}

/// Minkowski combination of the samples, with the known mean's center
/// removed beforehand and restored afterwards.
pub fn predict_interval(w: &[f64], problem: &KrigingProblem) -> Result<Interval> {
    let shift = problem.known_mean.map_or(0.0, |m| m.center());
    let values: Vec<Interval> = problem
        .samples
        .iter()
        .map(|s| Interval::from_center_radius(s.value.center() - shift, s.value.radius()))
        .collect::<Result<_>>()?;
    let z = weighted_combine(w, &values)?;
    Interval::from_center_radius(z.center() + shift, z.radius())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    /// All samples when there are at most 200, else the 30 nearest.
    #[default]
    Auto,
    Global,
    Nearest(usize),
}

/// Settings shared by every target of a [`predict_grid`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub models: Models,
    pub mode: Mode,
    pub known_mean: Option<Interval>,
    pub solver: SolverConfig,
    pub neighborhood: Neighborhood,
}

/// Indices of the `k` samples closest to `target`, ties broken by index.
pub fn nearest_indices(samples: &[IntervalSample], target: &Location, k: usize) -> Vec<usize> {
    let mut idx: Vec<(f64, usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.loc.distance(target), i))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    idx.truncate(k);
    idx.into_iter().map(|(_, i)| i).collect()
}

fn neighbors_for(samples: &[IntervalSample], target: &Location, hood: Neighborhood) -> Vec<usize> {
    let n = samples.len();
    match hood {
        Neighborhood::Global => (0..n).collect(),
        Neighborhood::Auto if n <= GLOBAL_LIMIT => (0..n).collect(),
        Neighborhood::Auto => nearest_indices(samples, target, DEFAULT_NEIGHBORS),
        Neighborhood::Nearest(k) => nearest_indices(samples, target, k.clamp(1, n.max(1))),
    }
}

/// Solve one problem per target; results keep the target order and a failed
/// target does not affect the others.
pub fn predict_grid(
    samples: &[IntervalSample],
    targets: &[Location],
    config: &GridConfig,
) -> Vec<Result<KrigingSolution>> {
    targets
        .par_iter()
        .map(|t| predict_one(samples, t, config))
        .collect()
}

fn predict_one(
    samples: &[IntervalSample],
    target: &Location,
    config: &GridConfig,
) -> Result<KrigingSolution> {
    if samples.is_empty() {
        return Err(Error::Empty("kriging samples"));
    }
    let idx = neighbors_for(samples, target, config.neighborhood);
    let local = idx.iter().map(|&i| samples[i]).collect();
    let mut problem = KrigingProblem::new(local, *target, config.models, config.mode)?;
    if let Some(m) = config.known_mean {
        problem = problem.with_known_mean(m)?;
    }
    let mut sol = solve(&problem, &config.solver)?;
    sol.neighbors = idx;
    Ok(sol)
}
