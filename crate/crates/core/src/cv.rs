//! k-fold cross-validation of trend, point and interval predictors, scored
//! with center, radius and combined RMSE.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::intervals::{AMatrix, Interval};
use crate::kriging::{
    nearest_indices, predict_grid, GridConfig, IntervalSample, Models, Neighborhood, GLOBAL_LIMIT,
};
use crate::optimizer::{Mode, SolverConfig};
use crate::snowload::{residualize, retrend, TrendModel};
use crate::variogram::{
    empirical_variograms, fit_wls, initial_guess, uniform_bin_edges, Channel, Family, Location,
    VariogramModel,
};

/// Combined, center and radius root mean squared errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmse {
    pub rmse: f64,
    pub rmse_c: f64,
    pub rmse_r: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvMetrics {
    /// Pooled over every held-out sample.
    pub overall: Rmse,
    pub per_fold: Vec<Rmse>,
}

pub fn rmse_metrics(predictions: &[Interval], truth: &[Interval]) -> Result<Rmse> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("RMSE needs at least one prediction"));
    }
    let n = truth.len() as f64;
    let (mut sc, mut sr) = (0.0, 0.0);
    for (p, t) in predictions.iter().zip(truth) {
        sc += (p.center() - t.center()).powi(2);
        sr += (p.radius() - t.radius()).powi(2);
    }
    Ok(Rmse {
        rmse: ((sc + sr) / n).sqrt(),
        rmse_c: (sc / n).sqrt(),
        rmse_r: (sr / n).sqrt(),
        n: truth.len(),
    })
}

/// Fold label of each of `n` samples: a seeded shuffle dealt round-robin,
/// so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || n < folds {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= folds <= n, got {folds} folds for {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        label[i] = k % folds;
    }
    Ok(label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Predictor {
    /// Elevation trend only.
    Lm,
    /// Classical simple kriging of residual centers, radius 0.
    PointSk,
    IntervalSk,
    IntervalOk,
    /// Training mean of centers and radii, no trend.
    GlobalMean,
}

impl Predictor {
    pub const ALL: [Predictor; 5] = [
        Predictor::Lm,
        Predictor::PointSk,
        Predictor::IntervalSk,
        Predictor::IntervalOk,
        Predictor::GlobalMean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Predictor::Lm => "lm",
            Predictor::PointSk => "point-sk",
            Predictor::IntervalSk => "isk",
            Predictor::IntervalOk => "iok",
            Predictor::GlobalMean => "mean",
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Predictor::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown predictor '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// `None`: 15 equal bins up to half the largest training separation.
    pub bin_edges: Option<Vec<f64>>,
    pub center_family: Family,
    pub radius_family: Family,
    /// Must have no cross term; no cross-variogram is fitted.
    pub a: AMatrix,
    pub solver: SolverConfig,
    pub neighborhood: Neighborhood,
    /// Remove the elevation trend before fitting; samples must then be on the
    /// log scale with elevations above 1 m.
    pub detrend: bool,
    pub predictors: Vec<Predictor>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            bin_edges: None,
            center_family: Family::Spherical,
            radius_family: Family::Spherical,
            a: AMatrix::identity(),
            solver: SolverConfig::default(),
            neighborhood: Neighborhood::Auto,
            detrend: true,
            predictors: Predictor::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub results: Vec<(Predictor, CvMetrics)>,
    pub folds: Vec<usize>,
}

impl CvReport {
    pub fn get(&self, p: Predictor) -> Option<&CvMetrics> {
        self.results.iter().find(|(q, _)| *q == p).map(|(_, m)| m)
    }
}

const DEFAULT_BINS: usize = 15;

/// Maps samples to the stationary residual scale and back.
enum Transform {
    Trend(TrendModel),
    Identity,
}

impl Transform {
    fn forward(&self, s: &IntervalSample) -> Result<IntervalSample> {
        match self {
            Transform::Trend(t) => residualize(t, s),
            Transform::Identity => Ok(*s),
        }
    }

    fn back(&self, loc: &Location, r: &Interval) -> Result<Interval> {
        match self {
            Transform::Trend(t) => retrend(t, loc.elevation, r),
            Transform::Identity => Ok(*r),
        }
    }
}

fn default_edges(samples: &[IntervalSample]) -> Result<Vec<f64>> {
    let mut max_d: f64 = 0.0;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            max_d = max_d.max(a.loc.distance(&b.loc));
        }
    }
    uniform_bin_edges(0.5 * max_d, DEFAULT_BINS)
}

fn fit_channel(
    emp: &crate::variogram::EmpiricalVariogram,
    channel: Channel,
    family: Family,
) -> Result<VariogramModel> {
    let init = initial_guess(emp, channel, family);
    Ok(fit_wls(emp, channel, family, &init)?.model)
}

/// Simple kriging weights `C^{-1} c` of the residual centers.
fn point_sk(
    train: &[IntervalSample],
    target: &Location,
    model: &VariogramModel,
    mean: f64,
) -> Result<f64> {
    let cov = DMatrix::from_fn(train.len(), train.len(), |i, j| {
        model.covariance(train[i].loc.distance(&train[j].loc))
    });
    let c = DVector::from_fn(train.len(), |i, _| {
        model.covariance(train[i].loc.distance(target))
    });
    let w = match cov.clone().cholesky() {
        Some(ch) => ch.solve(&c),
        None => cov
            .lu()
            .solve(&c)
            .ok_or_else(|| Error::Degenerate("singular point kriging system".into()))?,
    };
    Ok(mean
        + train
            .iter()
            .zip(w.iter())
            .map(|(s, w)| w * (s.value.center() - mean))
            .sum::<f64>())
}

fn local(train: &[IntervalSample], target: &Location, hood: Neighborhood) -> Vec<IntervalSample> {
    let n = train.len();
    let k = match hood {
        Neighborhood::Global => n,
        Neighborhood::Auto if n <= GLOBAL_LIMIT => n,
        Neighborhood::Auto => crate::kriging::DEFAULT_NEIGHBORS,
        Neighborhood::Nearest(k) => k.clamp(1, n),
    };
    nearest_indices(train, target, k)
        .into_iter()
        .map(|i| train[i])
        .collect()
}

fn mean_of(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Predictions of every configured predictor for one held-out fold.
fn predict_fold(
    train: &[IntervalSample],
    test: &[IntervalSample],
    config: &CvConfig,
) -> Result<Vec<Vec<Interval>>> {
    let transform = if config.detrend {
        let elev: Vec<f64> = train.iter().map(|s| s.loc.elevation).collect();
        let centers: Vec<f64> = train.iter().map(|s| s.value.center()).collect();
        Transform::Trend(TrendModel::fit(&elev, &centers)?)
    } else {
        Transform::Identity
    };
    let resid: Vec<IntervalSample> = train
        .iter()
        .map(|s| transform.forward(s))
        .collect::<Result<_>>()?;
    let mean_c = mean_of(resid.iter().map(|s| s.value.center()));
    let mean_r = mean_of(resid.iter().map(|s| s.value.radius()));
    let targets: Vec<Location> = test.iter().map(|s| s.loc).collect();

    let needs_models = config.predictors.iter().any(|p| {
        matches!(
            p,
            Predictor::PointSk | Predictor::IntervalSk | Predictor::IntervalOk
        )
    });
    let models = if needs_models {
        let edges = match &config.bin_edges {
            Some(e) => e.clone(),
            None => default_edges(&resid)?,
        };
        let emp = empirical_variograms(&resid, &edges)?;
        let center = fit_channel(&emp, Channel::Center, config.center_family)?;
        let radius = fit_channel(&emp, Channel::Radius, config.radius_family)?;
        Some(Models::new(center, radius, config.a))
    } else {
        None
    };

    let mut out = Vec::with_capacity(config.predictors.len());
    for p in &config.predictors {
        let residual_preds: Vec<Interval> = match p {
            Predictor::Lm => {
                vec![Interval::from_center_radius(mean_c, mean_r)?; test.len()]
            }
            Predictor::GlobalMean => {
                let c = mean_of(train.iter().map(|s| s.value.center()));
                let r = mean_of(train.iter().map(|s| s.value.radius()));
                out.push(vec![Interval::from_center_radius(c, r)?; test.len()]);
                continue;
            }
            Predictor::PointSk => {
                let m = models.as_ref().expect("models fitted");
                targets
                    .iter()
                    .map(|t| {
                        let near = local(&resid, t, config.neighborhood);
                        Interval::point(point_sk(&near, t, &m.center, mean_c)?)
                    })
                    .collect::<Result<_>>()?
            }
            Predictor::IntervalSk | Predictor::IntervalOk => {
                let simple = *p == Predictor::IntervalSk;
                let grid = GridConfig {
                    models: models.expect("models fitted"),
                    mode: if simple { Mode::Simple } else { Mode::Ordinary },
                    known_mean: if simple {
                        Some(Interval::point(mean_c)?)
                    } else {
                        None
                    },
                    solver: config.solver,
                    neighborhood: config.neighborhood,
                };
                predict_grid(&resid, &targets, &grid)
                    .into_iter()
                    .map(|r| r.map(|s| s.prediction))
                    .collect::<Result<_>>()?
            }
        };
        let back = targets
            .iter()
            .zip(&residual_preds)
            .map(|(t, r)| transform.back(t, r))
            .collect::<Result<_>>()?;
        out.push(back);
    }
    Ok(out)
}

/// Seeded k-fold cross-validation. Trend and variograms are refitted on each
/// training portion; metrics are computed on the scale of the input samples.
pub fn run_cv(samples: &[IntervalSample], config: &CvConfig) -> Result<CvReport> {
    if config.a.has_cross_term() {
        return Err(Error::InvalidArgument(
            "cross-validation fits no cross-variogram; use an A matrix without cross term".into(),
        ));
    }
    if config.predictors.is_empty() {
        return Err(Error::Empty("predictors"));
    }
    let labels = fold_assignment(samples.len(), config.folds, config.seed)?;
    let np = config.predictors.len();
    let mut pooled_pred: Vec<Vec<Interval>> = vec![Vec::new(); np];
    let mut pooled_truth = Vec::new();
    let mut per_fold: Vec<Vec<Rmse>> = vec![Vec::new(); np];

    for fold in 0..config.folds {
        let (test, train): (Vec<_>, Vec<_>) =
            samples.iter().zip(&labels).partition(|(_, &l)| l == fold);
        let test: Vec<IntervalSample> = test.into_iter().map(|(s, _)| *s).collect();
        let train: Vec<IntervalSample> = train.into_iter().map(|(s, _)| *s).collect();
        if train.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "fold {fold} leaves {} training samples",
                train.len()
            )));
        }
        let truth: Vec<Interval> = test.iter().map(|s| s.value).collect();
        let preds = predict_fold(&train, &test, config)
            .map_err(|e| Error::InvalidArgument(format!("fold {fold}: {e}")))?;
        for (k, p) in preds.into_iter().enumerate() {
            per_fold[k].push(rmse_metrics(&p, &truth)?);
            pooled_pred[k].extend(p);
        }
        pooled_truth.extend(truth);
    }

    let results = config
        .predictors
        .iter()
        .zip(pooled_pred.iter().zip(per_fold))
        .map(|(p, (pred, folds))| {
            Ok((
                *p,
                CvMetrics {
                    overall: rmse_metrics(pred, &pooled_truth)?,
                    per_fold: folds,
                },
            ))
        })
        .collect::<Result<_>>()?;
    Ok(CvReport {
        results,
        folds: labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rmse_examples() {
        let t = [Interval::from_center_radius(1.0, 1.0).unwrap()];
        let p = [Interval::from_center_radius(4.0, 5.0).unwrap()];
        let m = rmse_metrics(&p, &t).unwrap();
        assert_abs_diff_eq!(m.rmse, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rmse_c, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rmse_r, 4.0, epsilon = 1e-12);
        let same = rmse_metrics(&t, &t).unwrap();
        assert_eq!((same.rmse, same.rmse_c, same.rmse_r), (0.0, 0.0, 0.0));
        assert!(rmse_metrics(&[], &[]).is_err());
        assert!(rmse_metrics(&p, &[t[0], t[0]]).is_err());
    }

    #[test]
    fn center_offset_only() {
        let t: Vec<Interval> = (0..5)
            .map(|i| Interval::new(i as f64, i as f64 + 1.0).unwrap())
            .collect();
        let p: Vec<Interval> = t
            .iter()
            .map(|x| Interval::new(x.lower() - 0.5, x.upper() - 0.5).unwrap())
            .collect();
        let m = rmse_metrics(&p, &t).unwrap();
        assert_abs_diff_eq!(m.rmse, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rmse_c, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rmse_r, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn folds_partition_and_are_seeded() {
        let a = fold_assignment(23, 5, 7).unwrap();
        assert_eq!(a, fold_assignment(23, 5, 7).unwrap());
        assert_ne!(a, fold_assignment(23, 5, 8).unwrap());
        for f in 0..5 {
            let size = a.iter().filter(|&&l| l == f).count();
            assert!(size == 4 || size == 5);
        }
        assert!(fold_assignment(3, 5, 0).is_err());
        assert!(fold_assignment(3, 1, 0).is_err());
    }

    #[test]
    fn pure_trend_gives_zero_lm_error() {
        let samples: Vec<IntervalSample> = (0..40)
            .map(|i| {
                let a = 1500.0 + 37.0 * i as f64;
                IntervalSample::new(
                    Location::new((i % 7) as f64, (i / 7) as f64, a).unwrap(),
                    Interval::from_center_radius(1.0 + 0.002 * a, 0.3 / a.ln()).unwrap(),
                )
            })
            .collect();
        let config = CvConfig {
            folds: 5,
            predictors: vec![Predictor::Lm],
            ..CvConfig::default()
        };
        let report = run_cv(&samples, &config).unwrap();
        assert!(report.get(Predictor::Lm).unwrap().overall.rmse < 1e-9);
    }

    #[test]
    fn predictor_names_round_trip() {
        for p in Predictor::ALL {
            assert_eq!(p.name().parse::<Predictor>().unwrap(), p);
        }
    }
}
