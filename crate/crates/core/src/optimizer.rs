//! Penalized Newton minimisation of the interval kriging variance.
//!
//! The constrained problems
//!
//! * simple kriging: minimise `V(w)` subject to `sum |w_i| = 1`,
//! * ordinary kriging: minimise `V(w)` subject to `sum w_i = 1`, `w_i >= 0`,
//!
//! are replaced by a sequence of unconstrained problems `Q = V + P(w, c)`
//! whose penalty parameter `c` shrinks geometrically (the outer loop in
//! [`sumt`]). Each `Q` is minimised by safeguarded Newton iterations
//! ([`newton_minimize`]) using the analytic gradient and Hessian.
//!
//! `V` is non-differentiable wherever a weight crosses zero because it
//! involves `|w|`. The `Original` penalty variant replaces `|w_k|` by the
//! quadratic `(w_k^2 + w0_k^2) / (2 |w0_k|)`, which matches value and slope at
//! the anchor `w0`; the anchor is refreshed to the current iterate at every
//! Newton step. The `Adjusted` variant keeps weights away from zero with a
//! barrier and differentiates `|w|` exactly.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::intervals::AMatrix;

/// Anchors of the quadratic `|w|` surrogate are kept at least this far from 0.
const MIN_ANCHOR: f64 = 1e-12;
/// Step-halvings attempted before falling back to a gradient step.
const MAX_HALVINGS: usize = 30;
/// A sign flip must lower the variance slope by more than this.
const FLIP_MARGIN: f64 = 1e-9;
/// Cap on greedy sign-flip restarts, per sample.
const MAX_RESTARTS_PER_SAMPLE: usize = 2;
/// Up to this many samples every simple kriging sign pattern is tried.
pub const EXHAUSTIVE_SIGNS: usize = 6;
/// Barrier gap at which sign-pattern runs are compared.
const SCREEN_GAP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Known mean; constraint `sum |w_i| = 1`.
    Simple,
    /// Unknown mean; constraints `sum w_i = 1`, `w_i >= 0`.
    Ordinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyVariant {
    /// Quadratic loss (SK) or log-quadratic loss (OK) with the quadratic
    /// approximation of `|w|`.
    Original,
    /// Zero-avoiding barrier for SK and a shifted barrier for OK.
    Adjusted,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sk" | "simple" => Ok(Mode::Simple),
            "ok" | "ordinary" => Ok(Mode::Ordinary),
            other => Err(Error::InvalidArgument(format!(
                "unknown kriging mode '{other}'"
            ))),
        }
    }
}

impl std::str::FromStr for PenaltyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(PenaltyVariant::Original),
            "adjusted" => Ok(PenaltyVariant::Adjusted),
            other => Err(Error::InvalidArgument(format!(
                "unknown penalty variant '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Initial penalty parameter for simple kriging.
    pub c0_sk: f64,
    /// Initial penalty parameter for ordinary kriging.
    pub c0_ok: f64,
    /// Multiplicative decrease of `c` between penalty steps, in (0, 1).
    pub eta: f64,
    /// Tolerance on the constraint residual `1 - sum |w|`.
    pub tolp: f64,
    /// Effective-zero tolerance for ordinary kriging weights.
    pub tolz: f64,
    /// Maximum number of penalty steps.
    pub maxp: usize,
    /// Maximum number of Newton iterations per penalty step.
    pub maxq: usize,
    /// Newton stops once the accepted step norm falls below this.
    pub newton_tol: f64,
    /// Penalty steps continue until the barrier's duality gap bound
    /// (`n c` for ordinary, `2c/n` for adjusted simple kriging) is below this.
    pub gap_tol: f64,
    pub penalty_variant: PenaltyVariant,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c0_sk: 1.0,
            c0_ok: 100.0,
            eta: 0.8,
            tolp: 1e-4,
            tolz: 1e-3,
            maxp: 200,
            maxq: 100,
            newton_tol: 1e-10,
            gap_tol: 1e-9,
            penalty_variant: PenaltyVariant::Adjusted,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if !(self.c0_sk > 0.0 && self.c0_ok > 0.0) {
            return bad("initial penalty parameters must be > 0".into());
        }
        if !(self.tolp > 0.0 && self.tolz > 0.0 && self.newton_tol > 0.0 && self.gap_tol > 0.0) {
            return bad("tolerances must be > 0".into());
        }
        if self.maxp == 0 || self.maxq == 0 {
            return bad("iteration caps must be >= 1".into());
        }
        Ok(())
    }

    pub fn c0(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Simple => self.c0_sk,
            Mode::Ordinary => self.c0_ok,
        }
    }
}

/// Penalty parameter together with the problem form it applies to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyState {
    pub c: f64,
    pub mode: Mode,
    pub variant: PenaltyVariant,
    /// Barrier shift for adjusted ordinary kriging.
    pub tolz: f64,
}

impl PenaltyState {
    pub fn new(c: f64, mode: Mode, variant: PenaltyVariant, tolz: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "penalty parameter must be > 0, got {c}"
            )));
        }
        Ok(Self {
            c,
            mode,
            variant,
            tolz,
        })
    }
}

/// Covariances feeding the prediction variance for one target.
///
/// `cr[(i, j)] = C^{CR}(x_i - x_j)`, `cr_t[i] = C^{CR}(x_i - x*)` and
/// `rc_t[i] = C^{RC}(x_i - x*) = C^{CR}(x* - x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingSystem {
    pub a: AMatrix,
    pub cc: DMatrix<f64>,
    pub rr: DMatrix<f64>,
    pub cr: DMatrix<f64>,
    pub cc_t: DVector<f64>,
    pub rr_t: DVector<f64>,
    pub cr_t: DVector<f64>,
    pub rc_t: DVector<f64>,
    pub cc_0: f64,
    pub rr_0: f64,
    pub cr_0: f64,
}

impl KrigingSystem {
    pub fn n(&self) -> usize {
        self.cc_t.len()
    }

    /// Prediction variance up to its additive constant, with `abs` standing in
    /// for `|w|`.
    fn variance_with(&self, w: &DVector<f64>, abs: &DVector<f64>) -> f64 {
        let a = &self.a;
        let mut v = a.a11 * (w.dot(&(&self.cc * w)) - 2.0 * w.dot(&self.cc_t));
        v += a.a22 * (abs.dot(&(&self.rr * abs)) - 2.0 * abs.dot(&self.rr_t));
        if a.a12 != 0.0 {
            v += 2.0 * a.a12 * (w.dot(&(&self.cr * abs)) - abs.dot(&self.rc_t) - w.dot(&self.cr_t));
        }
        v
    }

    /// Partial derivatives of the variance with respect to the signed weights
    /// (holding `abs` fixed) and with respect to `abs` (holding `w` fixed).
    fn partials(&self, w: &DVector<f64>, abs: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let a = &self.a;
        let mut gc = a.a11 * ((&self.cc * w + self.cc.tr_mul(w)) - 2.0 * &self.cc_t);
        let mut gr = a.a22 * ((&self.rr * abs + self.rr.tr_mul(abs)) - 2.0 * &self.rr_t);
        if a.a12 != 0.0 {
            gc += 2.0 * a.a12 * (&self.cr * abs - &self.cr_t);
            gr += 2.0 * a.a12 * (self.cr.tr_mul(w) - &self.rc_t);
        }
        (gc, gr)
    }

    /// One-sided derivative of the variance along the constraint surface when
    /// a mass `t` is moved from all weights (scaled by `1 - t`) onto weight
    /// `j` with the given sign. Negative values mean the move pays off.
    pub fn shift_derivative(&self, w: &[f64], j: usize, sign: f64) -> f64 {
        let w = DVector::from_column_slice(w);
        let abs = w.abs();
        let (gc, gr) = self.partials(&w, &abs);
        sign * gc[j] + gr[j] - gc.dot(&w) - gr.dot(&abs)
    }

    /// Prediction variance up to the additive constant.
    pub fn variance(&self, w: &[f64]) -> f64 {
        let w = DVector::from_column_slice(w);
        let abs = w.abs();
        self.variance_with(&w, &abs)
    }

    /// `A11 C^{CC}(0) + A22 C^{RR}(0) + 2 A12 C^{CR}(0)`.
    pub fn additive_constant(&self) -> f64 {
        self.a.a11 * self.cc_0 + self.a.a22 * self.rr_0 + 2.0 * self.a.a12 * self.cr_0
    }

    pub fn full_variance(&self, w: &[f64]) -> f64 {
        self.variance(w) + self.additive_constant()
    }
}

/// Value, first and second derivative of the stand-in for `|w_k|`.
struct AbsTerms {
    value: DVector<f64>,
    d1: DVector<f64>,
    d2: DVector<f64>,
}

fn abs_terms(w: &DVector<f64>, anchor: &DVector<f64>, state: &PenaltyState) -> AbsTerms {
    let n = w.len();
    match (state.mode, state.variant) {
        (Mode::Simple, PenaltyVariant::Original) => {
            let mut value = DVector::zeros(n);
            let mut d1 = DVector::zeros(n);
            let mut d2 = DVector::zeros(n);
            for k in 0..n {
                let a0 = anchor[k].abs();
                value[k] = (w[k] * w[k] + a0 * a0) / (2.0 * a0);
                d1[k] = w[k] / a0;
                d2[k] = 1.0 / a0;
            }
            AbsTerms { value, d1, d2 }
        }
        (Mode::Simple, PenaltyVariant::Adjusted) => AbsTerms {
            value: w.abs(),
            d1: w.map(f64::signum),
            d2: DVector::zeros(n),
        },
        // Ordinary kriging works on the nonnegative orthant where |w| = w.
        (Mode::Ordinary, _) => AbsTerms {
            value: w.clone(),
            d1: DVector::from_element(n, 1.0),
            d2: DVector::zeros(n),
        },
    }
}

fn check_len(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: w.len(),
        });
    }
    if n == 0 {
        return Err(Error::Empty("weight vector"));
    }
    Ok(())
}

fn check_anchor(anchor: &[f64], state: &PenaltyState) -> Result<()> {
    if state.mode == Mode::Simple
        && state.variant == PenaltyVariant::Original
        && anchor.iter().any(|&a| a == 0.0 || !a.is_finite())
    {
        return Err(Error::InvalidArgument(
            "the |w| approximation needs a nonzero anchor in every component".into(),
        ));
    }
    Ok(())
}

fn check_domain(w: &[f64], state: &PenaltyState) -> Result<()> {
    let ok = match (state.mode, state.variant) {
        (Mode::Simple, PenaltyVariant::Original) => true,
        (Mode::Simple, PenaltyVariant::Adjusted) => w.iter().all(|&x| x != 0.0),
        (Mode::Ordinary, PenaltyVariant::Original) => w.iter().all(|&x| x > 0.0),
        (Mode::Ordinary, PenaltyVariant::Adjusted) => w.iter().all(|&x| x + state.tolz > 0.0),
    };
    if ok && w.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "weights outside the barrier domain for {:?}/{:?}",
            state.mode, state.variant
        )))
    }
}

/// Penalty `P(w, c)` in terms of the true `|w|`.
///
/// * SK original: `(1/c)(1 - sum|w|)^2`
/// * OK original: `-c sum ln w + (1/c)(1 - sum|w|)^2`
/// * SK adjusted: `-(c/n^2) sum ln w^2 + (1/c)(1 - sum|w|)^2`
/// * OK adjusted: `-c sum ln(w + tolz) + (1/(c n))(1 - sum w)^2`
pub fn penalty(w: &[f64], state: &PenaltyState, n: usize) -> Result<f64> {
    check_len(w, n)?;
    check_domain(w, state)?;
    let c = state.c;
    let nf = n as f64;
    let abs_sum: f64 = w.iter().map(|x| x.abs()).sum();
    let p = 1.0 - abs_sum;
    Ok(match (state.mode, state.variant) {
        (Mode::Simple, PenaltyVariant::Original) => p * p / c,
        (Mode::Ordinary, PenaltyVariant::Original) => {
            -c * w.iter().map(|x| x.ln()).sum::<f64>() + p * p / c
        }
        (Mode::Simple, PenaltyVariant::Adjusted) => {
            -(c / (nf * nf)) * w.iter().map(|x| (x * x).ln()).sum::<f64>() + p * p / c
        }
        (Mode::Ordinary, PenaltyVariant::Adjusted) => {
            let q = 1.0 - w.iter().sum::<f64>();
            -c * w.iter().map(|x| (x + state.tolz).ln()).sum::<f64>() + q * q / (c * nf)
        }
    })
}

fn penalty_with(w: &DVector<f64>, abs: &AbsTerms, state: &PenaltyState) -> f64 {
    let c = state.c;
    let n = w.len() as f64;
    let p = 1.0 - abs.value.sum();
    match (state.mode, state.variant) {
        (Mode::Simple, PenaltyVariant::Original) => p * p / c,
        (Mode::Ordinary, PenaltyVariant::Original) => {
            -c * w.iter().map(|x| x.ln()).sum::<f64>() + p * p / c
        }
        (Mode::Simple, PenaltyVariant::Adjusted) => {
            -(c / (n * n)) * w.iter().map(|x| (x * x).ln()).sum::<f64>() + p * p / c
        }
        (Mode::Ordinary, PenaltyVariant::Adjusted) => {
            -c * w.iter().map(|x| (x + state.tolz).ln()).sum::<f64>() + p * p / (c * n)
        }
    }
}

/// The penalized objective `Q(w) = V(w) + P(w, c)` whose derivatives
/// [`gradient`] and [`hessian`] return. Under the original simple kriging
/// variant `|w|` is the quadratic surrogate anchored at `anchor`; it agrees
/// with the exact objective when `w == anchor`.
pub fn objective(
    w: &[f64],
    anchor: &[f64],
    state: &PenaltyState,
    system: &KrigingSystem,
) -> Result<f64> {
    let n = system.n();
    check_len(w, n)?;
    check_len(anchor, n)?;
    check_anchor(anchor, state)?;
    check_domain(w, state)?;
    let wv = DVector::from_column_slice(w);
    let av = DVector::from_column_slice(anchor);
    Ok(objective_unchecked(&wv, &av, state, system))
}

fn objective_unchecked(
    w: &DVector<f64>,
    anchor: &DVector<f64>,
    state: &PenaltyState,
    system: &KrigingSystem,
) -> f64 {
    let abs = abs_terms(w, anchor, state);
    system.variance_with(w, &abs.value) + penalty_with(w, &abs, state)
}

/// Gradient of [`objective`] with respect to the weights.
pub fn gradient(
    w: &[f64],
    anchor: &[f64],
    state: &PenaltyState,
    system: &KrigingSystem,
) -> Result<Vec<f64>> {
    let n = system.n();
    check_len(w, n)?;
    check_len(anchor, n)?;
    check_anchor(anchor, state)?;
    check_domain(w, state)?;
    let wv = DVector::from_column_slice(w);
    let av = DVector::from_column_slice(anchor);
    Ok(gradient_unchecked(&wv, &av, state, system)
        .as_slice()
        .to_vec())
}

fn gradient_unchecked(
    w: &DVector<f64>,
    anchor: &DVector<f64>,
    state: &PenaltyState,
    sys: &KrigingSystem,
) -> DVector<f64> {
    let n = w.len();
    let abs = abs_terms(w, anchor, state);
    let (gc, gr) = sys.partials(w, &abs.value);
    let mut g = gc + gr.component_mul(&abs.d1);

    let c = state.c;
    let nf = n as f64;
    let p = 1.0 - abs.value.sum();
    for k in 0..n {
        g[k] += match (state.mode, state.variant) {
            (Mode::Simple, PenaltyVariant::Original) => -(2.0 / c) * p * abs.d1[k],
            (Mode::Simple, PenaltyVariant::Adjusted) => {
                -2.0 * c / (nf * nf * w[k]) - (2.0 / c) * p * abs.d1[k]
            }
            (Mode::Ordinary, PenaltyVariant::Original) => -(2.0 / c) * p - c / w[k],
            (Mode::Ordinary, PenaltyVariant::Adjusted) => {
                -(2.0 / (c * nf)) * p - c / (w[k] + state.tolz)
            }
        };
    }
    g
}

/// Hessian of [`objective`]; exactly symmetric.
pub fn hessian(
    w: &[f64],
    anchor: &[f64],
    state: &PenaltyState,
    system: &KrigingSystem,
) -> Result<DMatrix<f64>> {
    let n = system.n();
    check_len(w, n)?;
    check_len(anchor, n)?;
    check_anchor(anchor, state)?;
    check_domain(w, state)?;
    let wv = DVector::from_column_slice(w);
    let av = DVector::from_column_slice(anchor);
    Ok(hessian_unchecked(&wv, &av, state, system))
}

fn hessian_unchecked(
    w: &DVector<f64>,
    anchor: &DVector<f64>,
    state: &PenaltyState,
    sys: &KrigingSystem,
) -> DMatrix<f64> {
    let n = w.len();
    let a = &sys.a;
    let abs = abs_terms(w, anchor, state);
    let d = &abs.d1;
    let (_, gr) = sys.partials(w, &abs.value);

    let c = state.c;
    let nf = n as f64;
    let p = 1.0 - abs.value.sum();
    let quad = match (state.mode, state.variant) {
        (Mode::Ordinary, PenaltyVariant::Adjusted) => 2.0 / (c * nf),
        _ => 2.0 / c,
    };

    let mut h = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in k..n {
            let mut x = a.a11 * (sys.cc[(l, k)] + sys.cc[(k, l)])
                + a.a22 * d[k] * d[l] * (sys.rr[(l, k)] + sys.rr[(k, l)]);
            if a.a12 != 0.0 {
                x += 2.0 * a.a12 * (d[l] * sys.cr[(k, l)] + d[k] * sys.cr[(l, k)]);
            }
            x += quad * d[k] * d[l];
            if k == l {
                x += abs.d2[k] * gr[k];
                x += match (state.mode, state.variant) {
                    (Mode::Simple, PenaltyVariant::Original) => -(2.0 / c) * p * abs.d2[k],
                    (Mode::Simple, PenaltyVariant::Adjusted) => 2.0 * c / (nf * nf * w[k] * w[k]),
                    (Mode::Ordinary, PenaltyVariant::Original) => c / (w[k] * w[k]),
                    (Mode::Ordinary, PenaltyVariant::Adjusted) => {
                        let s = w[k] + state.tolz;
                        c / (s * s)
                    }
                };
            }
            h[(k, l)] = x;
            h[(l, k)] = x;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Exact penalized objective at the returned weights.
    pub objective: f64,
}

fn anchor_of(w: &DVector<f64>, state: &PenaltyState) -> DVector<f64> {
    if state.mode == Mode::Simple && state.variant == PenaltyVariant::Original {
        w.map(|x| {
            if x.abs() >= MIN_ANCHOR {
                x
            } else if x < 0.0 {
                -MIN_ANCHOR
            } else {
                MIN_ANCHOR
            }
        })
    } else {
        w.clone()
    }
}

/// Exact `Q`, or `None` outside the barrier domain.
fn exact_objective(w: &DVector<f64>, state: &PenaltyState, sys: &KrigingSystem) -> Option<f64> {
    check_domain(w.as_slice(), state).ok()?;
    let q = objective_unchecked(w, &anchor_of(w, state), state, sys);
    q.is_finite().then_some(q)
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let rhs = -g;
    let step = match h.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => h.clone().lu().solve(&rhs)?,
    };
    (step.iter().all(|x| x.is_finite()) && step.dot(g) < 0.0).then_some(step)
}

/// Backtracking along `dir` until the exact objective does not increase.
fn line_search(
    w: &DVector<f64>,
    dir: &DVector<f64>,
    q0: f64,
    state: &PenaltyState,
    sys: &KrigingSystem,
) -> Option<(DVector<f64>, f64)> {
    let mut t = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let cand = w + t * dir;
        if let Some(q) = exact_objective(&cand, state, sys) {
            if q < q0 {
                return Some((cand, q));
            }
        }
        t *= 0.5;
    }
    None
}

/// Newton iterations `w <- w - H^{-1} G` on the penalized objective, with the
/// `|w|` anchor refreshed to the current iterate at every step.
///
/// A step that leaves the barrier domain or fails to decrease `Q` is halved
/// up to 30 times; if that fails a gradient step scaled by `1/||H||_inf` is
/// tried the same way. When neither direction yields a decrease the iterate
/// is a numerical minimiser and the loop stops as converged.
pub fn newton_minimize(
    system: &KrigingSystem,
    state: &PenaltyState,
    init: &[f64],
    config: &SolverConfig,
) -> Result<NewtonOutcome> {
    let n = system.n();
    check_len(init, n)?;
    let mut w = DVector::from_column_slice(init);
    let mut q = exact_objective(&w, state, system)
        .ok_or_else(|| Error::Domain("initial weights are outside the penalty's domain".into()))?;

    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.maxq {
        iterations += 1;
        let anchor = anchor_of(&w, state);
        let g = gradient_unchecked(&w, &anchor, state, system);
        let h = hessian_unchecked(&w, &anchor, state, system);

        let mut accepted =
            newton_direction(&h, &g).and_then(|dir| line_search(&w, &dir, q, state, system));
        if accepted.is_none() {
            let scale = h
                .row_iter()
                .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let dir = if scale > 0.0 && scale.is_finite() {
                -&g / scale
            } else {
                -&g
            };
            accepted = line_search(&w, &dir, q, state, system);
        }
        let Some((next, qn)) = accepted else {
            converged = true;
            break;
        };
        let step = (&next - &w).norm();
        w = next;
        q = qn;
        if step < config.newton_tol {
            converged = true;
            break;
        }
    }
    Ok(NewtonOutcome {
        weights: w.as_slice().to_vec(),
        iterations,
        converged,
        objective: q,
    })
}

/// One outer iteration: `k, c, p_k, newton_steps, objective`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyStep {
    pub k: usize,
    pub c: f64,
    pub residual: f64,
    pub newton_steps: usize,
    pub objective: f64,
}

impl PenaltyStep {
    /// The diagnostic log line for this step.
    pub fn log_line(&self) -> String {
        format!(
            "{}, {:e}, {:e}, {}, {:e}",
            self.k, self.c, self.residual, self.newton_steps, self.objective
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumtOutcome {
    pub weights: Vec<f64>,
    /// `1 - sum |w_i|` (simple) or `1 - sum w_i` (ordinary) at the last
    /// penalty iterate, before the weights are rescaled onto the constraint.
    pub constraint_residual: f64,
    pub penalty_steps: usize,
    pub newton_steps: usize,
    /// Simple kriging runs restarted from a flipped sign pattern.
    pub restarts: usize,
    pub converged: bool,
    pub trace: Vec<PenaltyStep>,
}

/// Bound on how far the barrier keeps the penalized minimiser from the
/// constrained one, in objective units.
fn barrier_gap(state: &PenaltyState, n: usize) -> f64 {
    match (state.mode, state.variant) {
        (Mode::Simple, PenaltyVariant::Original) => 0.0,
        (Mode::Simple, PenaltyVariant::Adjusted) => 2.0 * state.c / n as f64,
        (Mode::Ordinary, _) => n as f64 * state.c,
    }
}

/// Sequential unconstrained minimisation.
///
/// Starting from `c0` and uniform weights, minimise `Q` for the current `c`,
/// stop once `|1 - sum |w|| < tolp` and the barrier gap is below `gap_tol`,
/// otherwise shrink `c` by `eta` and repeat. For ordinary kriging an iterate
/// with a weight below zero (below `-tolz` for the adjusted penalty) is
/// reported as infeasible, and under the adjusted penalty weights below
/// `tolz` are effective zeros: they are reset to zero before the next penalty
/// step and in the returned weights. The returned weights are rescaled so the
/// constraint holds exactly, then refined by [`polish`].
///
/// The simple kriging constraint surface is not convex: on each orthant the
/// problem is a convex quadratic programme over a simplex, and the barrier
/// cannot move a weight across zero. Sign patterns are therefore searched
/// with runs stopped at a coarse gap: every pattern for up to
/// [`EXHAUSTIVE_SIGNS`] samples, otherwise greedy single flips ordered by
/// [`flip_candidates`]. The best pattern's run is then continued to `gap_tol`.
pub fn sumt(system: &KrigingSystem, mode: Mode, config: &SolverConfig) -> Result<SumtOutcome> {
    config.validate()?;
    let n = system.n();
    if n == 0 {
        return Err(Error::Empty("kriging system has no samples"));
    }
    if n == 1 {
        return Ok(single_sample(system, mode));
    }

    let uniform = vec![false; n];
    if mode == Mode::Ordinary {
        let mut path = Path::new(signed_start(&uniform), config.c0(mode));
        path.run(system, mode, config, config.gap_tol)?;
        // Effective zeros are cleared only in the result: clamping between
        // penalty steps throws away the warm start next to the shifted
        // barrier and Newton then crawls back to it at every step.
        if config.penalty_variant == PenaltyVariant::Adjusted {
            for x in path.w.iter_mut() {
                if *x < config.tolz {
                    *x = 0.0;
                }
            }
        }
        let mut out = path.finish(config, 0)?;
        polish(system, config, &mut out.weights);
        return Ok(out);
    }

    let coarse = config.gap_tol.max(SCREEN_GAP);
    let mut newton_total = 0;
    let mut runs = 0;
    let mut first_err = None;
    let mut best: Option<(Path, f64)> = None;
    let mut try_pattern = |pattern: &[bool], best: &mut Option<(Path, f64)>| -> bool {
        runs += 1;
        let mut path = Path::new(signed_start(pattern), config.c0(mode));
        let run = path.run(system, mode, config, coarse);
        newton_total += path.newton_steps;
        if let Err(e) = run {
            first_err.get_or_insert(e);
            return false;
        }
        let v = system.variance(&path.rescaled());
        let improves = best.as_ref().is_none_or(|(_, bv)| v < bv - FLIP_MARGIN);
        if improves {
            *best = Some((path, v));
        }
        improves
    };

    if n <= EXHAUSTIVE_SIGNS {
        for bits in 0..1usize << n {
            let pattern: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            try_pattern(&pattern, &mut best);
        }
    } else {
        let mut tried = HashSet::new();
        tried.insert(uniform.clone());
        try_pattern(&uniform, &mut best);
        let budget = MAX_RESTARTS_PER_SAMPLE * n;
        let mut restarts = 0;
        'search: while let Some((path, v)) = &best {
            let w = path.rescaled();
            let current: Vec<bool> = w.iter().map(|&x| x < 0.0).collect();
            for j in flip_candidates(system, &w, *v, config.tolz) {
                let mut pattern = current.clone();
                pattern[j] = !pattern[j];
                if !tried.insert(pattern.clone()) {
                    continue;
                }
                restarts += 1;
                if try_pattern(&pattern, &mut best) {
                    continue 'search;
                }
                if restarts >= budget {
                    break 'search;
                }
            }
            break;
        }
    }

    let Some((mut path, _)) = best else {
        return Err(first_err.expect("at least one sign pattern was run"));
    };
    newton_total -= path.newton_steps;
    path.run(system, mode, config, config.gap_tol)?;
    let mut out = path.finish(config, runs - 1)?;
    out.newton_steps += newton_total;
    polish(system, config, &mut out.weights);
    Ok(out)
}

/// Exact minimiser on the face the barrier settled on.
///
/// The barrier leaves weights of order `c` on samples that belong at zero.
/// Weights of magnitude below `tolz` are dropped, the signs of the rest are
/// frozen, and the now quadratic problem with one linear constraint is solved
/// through its bordered system. The result replaces `w` only if it keeps the
/// frozen signs and does not raise the variance.
fn polish(system: &KrigingSystem, config: &SolverConfig, w: &mut [f64]) {
    let support: Vec<usize> = (0..w.len())
        .filter(|&i| w[i].abs() >= config.tolz)
        .collect();
    let m = support.len();
    if m == 0 {
        return;
    }
    let s: Vec<f64> = support.iter().map(|&i| w[i].signum()).collect();
    let a = &system.a;
    let mut kkt = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    for (p, &i) in support.iter().enumerate() {
        for (q, &j) in support.iter().enumerate() {
            let mut h = a.a11 * system.cc[(i, j)] + a.a22 * s[p] * s[q] * system.rr[(i, j)];
            h += a.a12 * (system.cr[(i, j)] * s[q] + s[p] * system.cr[(j, i)]);
            kkt[(p, q)] = 2.0 * h;
        }
        kkt[(p, m)] = s[p];
        kkt[(m, p)] = s[p];
        rhs[p] = 2.0
            * (a.a11 * system.cc_t[i]
                + a.a22 * s[p] * system.rr_t[i]
                + a.a12 * (s[p] * system.rc_t[i] + system.cr_t[i]));
    }
    rhs[m] = 1.0;
    let Some(x) = kkt.lu().solve(&rhs) else {
        return;
    };
    let mut cand = vec![0.0; w.len()];
    for (p, &i) in support.iter().enumerate() {
        if !(x[p] * s[p] > 0.0) {
            return;
        }
        cand[i] = x[p];
    }
    let before = system.variance(w);
    if system.variance(&cand) <= before + config.gap_tol * (1.0 + before.abs()) {
        w.copy_from_slice(&cand);
    }
}

/// `(+-1/n, ...)` with the minus sign where `negative` is set.
fn signed_start(negative: &[bool]) -> Vec<f64> {
    let n = negative.len() as f64;
    negative
        .iter()
        .map(|&neg| if neg { -1.0 / n } else { 1.0 / n })
        .collect()
}

/// Single sign flips ordered by how promising they look, best first.
///
/// A weight away from zero is scored by the variance change when it is
/// reflected through zero, which keeps `sum |w|` fixed. A weight within
/// `tolz` of zero is scored by the one-sided slope of moving mass onto it
/// with the opposite sign.
fn flip_candidates(system: &KrigingSystem, w: &[f64], v: f64, tolz: f64) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..w.len())
        .map(|j| {
            let score = if w[j].abs() < tolz {
                let flipped = if w[j] < 0.0 { 1.0 } else { -1.0 };
                system.shift_derivative(w, j, flipped)
            } else {
                let mut r = w.to_vec();
                r[j] = -r[j];
                system.variance(&r) - v
            };
            (score, j)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, j)| j).collect()
}

/// State of one run of the penalty loop, resumable with a tighter gap.
struct Path {
    w: Vec<f64>,
    /// Penalty parameter for the next step.
    c: f64,
    trace: Vec<PenaltyStep>,
    newton_steps: usize,
    last_converged: bool,
}

impl Path {
    fn new(start: Vec<f64>, c0: f64) -> Self {
        Self {
            w: start,
            c: c0,
            trace: Vec::new(),
            newton_steps: 0,
            last_converged: false,
        }
    }

    fn run(
        &mut self,
        system: &KrigingSystem,
        mode: Mode,
        config: &SolverConfig,
        gap_tol: f64,
    ) -> Result<()> {
        let n = system.n();
        let variant = config.penalty_variant;
        loop {
            let k = self.trace.len() + 1;
            if k > config.maxp {
                return Err(Error::NonConvergence(format!(
                    "constraint residual still above tolp = {:e} after maxp = {} penalty steps",
                    config.tolp, config.maxp
                )));
            }
            let state = PenaltyState::new(self.c, mode, variant, config.tolz)?;
            let out = newton_minimize(system, &state, &self.w, config)?;
            self.newton_steps += out.iterations;
            self.last_converged = out.converged;
            self.w = out.weights;
            let residual = match mode {
                Mode::Simple => 1.0 - self.w.iter().map(|x| x.abs()).sum::<f64>(),
                Mode::Ordinary => 1.0 - self.w.iter().sum::<f64>(),
            };
            self.trace.push(PenaltyStep {
                k,
                c: self.c,
                residual,
                newton_steps: out.iterations,
                objective: out.objective,
            });

            if mode == Mode::Ordinary {
                let slack = match variant {
                    PenaltyVariant::Original => 0.0,
                    PenaltyVariant::Adjusted => config.tolz,
                };
                let min = self.w.iter().cloned().fold(f64::INFINITY, f64::min);
                if min < -slack {
                    return Err(Error::Infeasible(format!(
                        "penalty step {k}: minimum weight {min:e} is below {:e}",
                        -slack
                    )));
                }
            }

            let done = residual.abs() < config.tolp && barrier_gap(&state, n) <= gap_tol;
            self.c *= config.eta;
            if done {
                return Ok(());
            }
        }
    }

    fn rescaled(&self) -> Vec<f64> {
        let total: f64 = self.w.iter().map(|x| x.abs()).sum();
        self.w.iter().map(|x| x / total).collect()
    }

    fn finish(self, config: &SolverConfig, restarts: usize) -> Result<SumtOutcome> {
        if !self.last_converged {
            return Err(Error::NonConvergence(format!(
                "Newton iterations hit maxq = {} at the final penalty step",
                config.maxq
            )));
        }
        let total: f64 = self.w.iter().map(|x| x.abs()).sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("all weights vanished".into()));
        }
        let last = self.trace.last().expect("at least one penalty step");
        Ok(SumtOutcome {
            weights: self.rescaled(),
            constraint_residual: last.residual,
            penalty_steps: self.trace.len(),
            newton_steps: self.newton_steps,
            restarts,
            converged: true,
            trace: self.trace,
        })
    }
}

/// With one sample the feasible set is `{1}` (OK) or `{-1, 1}` (SK).
fn single_sample(system: &KrigingSystem, mode: Mode) -> SumtOutcome {
    let w = match mode {
        Mode::Ordinary => 1.0,
        Mode::Simple => {
            if system.variance(&[-1.0]) < system.variance(&[1.0]) {
                -1.0
            } else {
                1.0
            }
        }
    };
    SumtOutcome {
        weights: vec![w],
        constraint_residual: 0.0,
        penalty_steps: 1,
        newton_steps: 0,
        restarts: 0,
        converged: true,
        trace: vec![PenaltyStep {
            k: 1,
            c: 0.0,
            residual: 0.0,
            newton_steps: 0,
            objective: system.variance(&[w]),
        }],
    }
}
