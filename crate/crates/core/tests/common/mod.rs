//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use intkrige::intervals::{AMatrix, Interval};
use intkrige::kriging::{IntervalSample, KrigingProblem, Models};
use intkrige::optimizer::{gradient, hessian, objective, KrigingSystem, Mode, PenaltyState};
use intkrige::variogram::{Family, Location, VariogramModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-sill model with a random family, nugget share and range.
pub fn random_model(rng: &mut ChaCha8Rng, nugget: bool) -> VariogramModel {
    let family = if rng.random_bool(0.5) {
        Family::Spherical
    } else {
        Family::Exponential
    };
    let nug = if nugget {
        rng.random_range(0.0..0.3)
    } else {
        0.0
    };
    let range = rng.random_range(2.0..12.0);
    VariogramModel::new(family, nug, 1.0 - nug, range).unwrap()
}

pub fn random_a(rng: &mut ChaCha8Rng, cross: bool) -> AMatrix {
    let a11: f64 = rng.random_range(0.5..1.5);
    let a22: f64 = rng.random_range(0.2..1.5);
    let a12 = if cross {
        rng.random_range(-0.9..0.9) * (a11 * a22).sqrt()
    } else {
        0.0
    };
    AMatrix::new(a11, a22, a12).unwrap()
}

pub fn random_samples(rng: &mut ChaCha8Rng, n: usize, side: f64) -> Vec<IntervalSample> {
    (0..n)
        .map(|_| {
            let loc =
                Location::planar(rng.random_range(0.0..side), rng.random_range(0.0..side)).unwrap();
            let c = rng.random_range(-2.0..2.0);
            let r = rng.random_range(0.0..1.0);
            IntervalSample::new(loc, Interval::from_center_radius(c, r).unwrap())
        })
        .collect()
}

/// A random problem on a 10 x 10 square with unit-sill models.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, mode: Mode, cross: bool) -> KrigingProblem {
    let samples = random_samples(rng, n, 10.0);
    let target =
        Location::planar(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)).unwrap();
    let mut models = Models::new(
        random_model(rng, true),
        random_model(rng, true),
        random_a(rng, cross),
    );
    if cross {
        let range = rng.random_range(2.0..12.0);
        models = models.with_cross(VariogramModel::exponential(0.0, 0.3, range).unwrap());
    }
    KrigingProblem::new(samples, target, models, mode).unwrap()
}

/// Minimum of the prediction variance (without constant) over the SK
/// constraint surface `sum |w| = 1` or the OK simplex.
///
/// On each orthant face `w = s * m` with `m` in the simplex, the variance is
/// the quadratic `m' Q m - 2 b' m`. All coordinates but the last two run over
/// a grid of the given step; the remaining one-dimensional quadratic is
/// minimised exactly on its segment.
pub fn face_oracle(sys: &KrigingSystem, mode: Mode, step: f64) -> f64 {
    let n = sys.n();
    let patterns: Vec<Vec<f64>> = match mode {
        Mode::Ordinary => vec![vec![1.0; n]],
        Mode::Simple => (0..1usize << n)
            .map(|bits| {
                (0..n)
                    .map(|i| if bits >> i & 1 == 1 { -1.0 } else { 1.0 })
                    .collect()
            })
            .collect(),
    };
    let a = sys.a;
    let mut best = f64::INFINITY;
    for s in patterns {
        let sd = DMatrix::from_diagonal(&DVector::from_vec(s.clone()));
        let sv = DVector::from_vec(s);
        let q0 = a.a11 * (&sd * &sys.cc * &sd)
            + a.a22 * &sys.rr
            + a.a12 * (&sd * &sys.cr + sys.cr.transpose() * &sd);
        let q = 0.5 * (&q0 + q0.transpose());
        let b = a.a11 * sys.cc_t.component_mul(&sv)
            + a.a22 * &sys.rr_t
            + a.a12 * (&sys.rc_t + sys.cr_t.component_mul(&sv));
        best = best.min(simplex_min(&q, &b, step));
    }
    best
}

fn simplex_min(q: &DMatrix<f64>, b: &DVector<f64>, step: f64) -> f64 {
    let n = b.len();
    let f = |m: &DVector<f64>| m.dot(&(q * m)) - 2.0 * b.dot(m);
    if n == 1 {
        return f(&DVector::from_element(1, 1.0));
    }
    let mut d = DVector::zeros(n);
    d[n - 2] = 1.0;
    d[n - 1] = -1.0;
    let qd = q * &d;
    let dqd = d.dot(&qd);
    let bd = b.dot(&d);

    let ticks = (1.0 / step).round() as usize;
    let free = n - 2;
    let mut idx = vec![0usize; free];
    let mut best = f64::INFINITY;
    loop {
        let used: usize = idx.iter().sum();
        if used <= ticks {
            let mut u = DVector::zeros(n);
            for (i, &k) in idx.iter().enumerate() {
                u[i] = k as f64 * step;
            }
            let rest = 1.0 - used as f64 * step;
            u[n - 1] = rest.max(0.0);
            // f(u + t d) = f(u) + 2 t (d'Qu - b'd) + t^2 d'Qd on t in [0, rest]
            let base = f(&u);
            let lin = 2.0 * (qd.dot(&u) - bd);
            let mut cand = base.min(base + lin * rest + dqd * rest * rest);
            if dqd > 0.0 {
                let t = -lin / (2.0 * dqd);
                if t > 0.0 && t < rest {
                    cand = cand.min(base + lin * t + dqd * t * t);
                }
            }
            best = best.min(cand);
        }
        // odometer over the free coordinates, pruning on the simplex budget
        let mut pos = 0;
        loop {
            if pos == free {
                return best;
            }
            idx[pos] += 1;
            if idx.iter().sum::<usize>() <= ticks {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Classical kriging weights for a center-only problem under the linear
/// constraint `s' w = 1` on the given support, from the bordered system
/// `[C s; s' 0] [w; mu] = [c; 1]`. Weights off the support are zero.
pub fn bordered_kriging(
    cov: &DMatrix<f64>,
    cov_t: &DVector<f64>,
    support: &[usize],
    signs: &[f64],
) -> Vec<f64> {
    let k = support.len();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            m[(a, b)] = cov[(i, j)];
        }
        m[(a, k)] = signs[a];
        m[(k, a)] = signs[a];
        rhs[a] = cov_t[i];
    }
    rhs[k] = 1.0;
    let sol = m
        .lu()
        .solve(&rhs)
        .expect("bordered kriging system is singular");
    let mut w = vec![0.0; cov_t.len()];
    for (a, &i) in support.iter().enumerate() {
        w[i] = sol[a];
    }
    w
}

/// A random point inside the domain of the penalty: OK weights positive,
/// SK weights of random sign; all magnitudes at least 0.05.
pub fn feasible_point(rng: &mut ChaCha8Rng, n: usize, mode: Mode) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|x| {
            let x = x / total * rng.random_range(0.8..1.2);
            match mode {
                Mode::Simple if rng.random_bool(0.5) => -x,
                _ => x,
            }
        })
        .collect()
}

/// Relative errors of the analytic gradient against central differences of
/// the objective, and of the analytic Hessian against central differences of
/// the gradient, both in the Euclidean / Frobenius norm.
pub fn derivative_errors(
    sys: &KrigingSystem,
    state: &PenaltyState,
    w: &[f64],
    anchor: &[f64],
) -> (f64, f64) {
    let n = w.len();
    let g = DVector::from_vec(gradient(w, anchor, state, sys).unwrap());
    let h = hessian(w, anchor, state, sys).unwrap();
    let mut g_fd = DVector::zeros(n);
    let mut h_fd = DMatrix::zeros(n, n);
    for j in 0..n {
        let step = 1e-6 * w[j].abs().max(1e-2);
        let mut up = w.to_vec();
        let mut down = w.to_vec();
        up[j] += step;
        down[j] -= step;
        let f_up = objective(&up, anchor, state, sys).unwrap();
        let f_down = objective(&down, anchor, state, sys).unwrap();
        g_fd[j] = (f_up - f_down) / (2.0 * step);
        let gu = DVector::from_vec(gradient(&up, anchor, state, sys).unwrap());
        let gd = DVector::from_vec(gradient(&down, anchor, state, sys).unwrap());
        h_fd.set_column(j, &((gu - gd) / (2.0 * step)));
    }
    let ge = (&g - &g_fd).norm() / g_fd.norm().max(1e-12);
    let he = (&h - &h_fd).norm() / h_fd.norm().max(1e-12);
    (ge, he)
}
