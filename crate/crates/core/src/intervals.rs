//! Closed intervals, Minkowski combinations under signed weights, and the
//! L2-type distances between intervals used throughout the crate.
//!
//! An interval `[x]` is stored by its bounds; the center `x^C = (x^L + x^U)/2`
//! and radius `x^R = (x^U - x^L)/2` are derived on demand. Two interval
//! distances are provided:
//!
//! * `rho2_sq`, the squared L2 distance between support functions, which
//!   reduces to `(dC)^2 + (dR)^2`;
//! * `rho_k_sq`, the kernel-weighted generalisation
//!   `A11 dC^2 + A22 dR^2 + 2 A12 dC dR` for a symmetric PSD [`AMatrix`].

use std::fmt;

use crate::error::{Error, Result};

/// Relative slack used when checking positive semidefiniteness of 2x2 forms.
const PSD_EPS: f64 = 1e-12;

/// A nonempty, bounded, closed interval of the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower > upper {
            return Err(Error::InvalidInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    /// Builds `[center - radius, center + radius]`.
    pub fn from_center_radius(center: f64, radius: f64) -> Result<Self> {
        if !center.is_finite() || !radius.is_finite() || radius < 0.0 {
            return Err(Error::InvalidInterval {
                lower: center - radius,
                upper: center + radius,
            });
        }
        Self::new(center - radius, center + radius)
    }

    /// The degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Result<Self> {
        Self::new(x, x)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn radius(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

/// Symmetric 2x2 weighting of center, radius and center-radius terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AMatrix {
    pub a11: f64,
    pub a22: f64,
    pub a12: f64,
}

impl AMatrix {
    pub fn new(a11: f64, a22: f64, a12: f64) -> Result<Self> {
        check_psd(a11, a22, a12, "A")?;
        Ok(Self { a11, a22, a12 })
    }

    /// `A = I`, for which `rho_k_sq` coincides with `rho2_sq`.
    pub fn identity() -> Self {
        Self {
            a11: 1.0,
            a22: 1.0,
            a12: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self {
            a11: 0.0,
            a22: 0.0,
            a12: 0.0,
        }
    }

    /// The matrix realising the measure-weighted distance `rho_W`:
    /// `a11 = 1`, `a12 = 0` and `a22 = \int (2t - 1)^2 dW(t)` supplied directly.
    pub fn from_radius_weight(radius_weight: f64) -> Result<Self> {
        Self::new(1.0, radius_weight, 0.0)
    }

    pub fn has_cross_term(&self) -> bool {
        self.a12 != 0.0
    }
}

impl Default for AMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

/// A symmetric kernel on `S^0 x S^0 = {-1, 1}^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel2 {
    /// `K(1, 1)`
    pub k_pp: f64,
    /// `K(-1, -1)`
    pub k_mm: f64,
    /// `K(1, -1)`
    pub k_pm: f64,
    /// `K(-1, 1)`
    pub k_mp: f64,
}

impl Kernel2 {
    pub fn new(k_pp: f64, k_mm: f64, k_pm: f64, k_mp: f64) -> Result<Self> {
        let scale = k_pm.abs().max(k_mp.abs()).max(1.0);
        if (k_pm - k_mp).abs() > PSD_EPS * scale {
            return Err(Error::NotPsd(format!(
                "kernel is not symmetric: K(1,-1) = {k_pm}, K(-1,1) = {k_mp}"
            )));
        }
        check_psd(k_pp, k_mm, k_pm, "K")?;
        Ok(Self {
            k_pp,
            k_mm,
            k_pm,
            k_mp,
        })
    }

    /// Diagonal kernel `K = s * I`.
    pub fn scaled_identity(s: f64) -> Result<Self> {
        Self::new(s, s, 0.0, 0.0)
    }

    /// Squared distance evaluated directly from the support functions
    /// `s(1) = x^U`, `s(-1) = -x^L`.
    pub fn rho_sq(&self, x: &Interval, y: &Interval) -> f64 {
        let du = x.upper - y.upper;
        let dl = -(x.lower - y.lower);
        self.k_pp * du * du + self.k_mm * dl * dl + (self.k_pm + self.k_mp) * du * dl
    }
}

/// Converts a kernel on `S^0 x S^0` to the center-radius weighting matrix.
pub fn kernel_to_a(k: &Kernel2) -> Result<AMatrix> {
    let diag = k.k_pp + k.k_mm;
    let off = k.k_pm + k.k_mp;
    AMatrix::new(diag - off, diag + off, k.k_pp - k.k_mm)
}

/// Squared `rho_2` distance, computed from the bounds.
pub fn rho2_sq(x: &Interval, y: &Interval) -> f64 {
    let dl = x.lower - y.lower;
    let du = x.upper - y.upper;
    0.5 * dl * dl + 0.5 * du * du
}

/// Squared `rho_2` distance, computed from centers and radii.
pub fn rho2_sq_center_radius(x: &Interval, y: &Interval) -> f64 {
    let dc = x.center() - y.center();
    let dr = x.radius() - y.radius();
    dc * dc + dr * dr
}

/// Squared `rho_K` distance in center-radius form.
pub fn rho_k_sq(x: &Interval, y: &Interval, a: &AMatrix) -> f64 {
    let dc = x.center() - y.center();
    let dr = x.radius() - y.radius();
    a.a11 * dc * dc + a.a22 * dr * dr + 2.0 * a.a12 * dc * dr
}

/// Squared `rho_W` distance: center and radius differences with the radius
/// term weighted by `\int (2t - 1)^2 dW(t)`.
pub fn rho_w_sq(x: &Interval, y: &Interval, radius_weight: f64) -> Result<f64> {
    let a = AMatrix::from_radius_weight(radius_weight)?;
    Ok(rho_k_sq(x, y, &a))
}

/// `sum_i w_i [x_i]` under Minkowski addition and scalar multiplication:
/// the center combines linearly, the radius with `|w_i|`.
pub fn weighted_combine(weights: &[f64], samples: &[Interval]) -> Result<Interval> {
    if samples.is_empty() {
        return Err(Error::Empty("weighted_combine needs at least one interval"));
    }
    if weights.len() != samples.len() {
        return Err(Error::LengthMismatch {
            expected: samples.len(),
            got: weights.len(),
        });
    }
    let mut center = 0.0;
    let mut radius = 0.0;
    for (w, s) in weights.iter().zip(samples) {
        center += w * s.center();
        radius += w.abs() * s.radius();
    }
    Interval::from_center_radius(center, radius)
}

fn check_psd(d1: f64, d2: f64, off: f64, what: &str) -> Result<()> {
    if !(d1.is_finite() && d2.is_finite() && off.is_finite()) {
        return Err(Error::NotPsd(format!("{what} has non-finite entries")));
    }
    let scale = d1.abs().max(d2.abs()).max(off.abs()).max(f64::MIN_POSITIVE);
    let tol = PSD_EPS * scale;
    if d1 < -tol || d2 < -tol || d1 * d2 - off * off < -tol * scale {
        return Err(Error::NotPsd(format!(
            "{what} = [[{d1}, {off}], [{off}, {d2}]]"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn iv(l: f64, u: f64) -> Interval {
        Interval::new(l, u).unwrap()
    }

    #[test]
    fn center_radius_views() {
        let a = iv(0.0, 2.0);
        assert_eq!((a.center(), a.radius()), (1.0, 1.0));
        let b = iv(7.0, 7.0);
        assert_eq!((b.center(), b.radius()), (7.0, 0.0));
        assert!(b.is_degenerate());
        let c = Interval::from_center_radius(4.0, 1.0).unwrap();
        assert_eq!((c.lower(), c.upper()), (3.0, 5.0));
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert!(Interval::from_center_radius(0.0, -1.0).is_err());
    }

    #[test]
    fn kernel_conversion() {
        let a = kernel_to_a(&Kernel2::scaled_identity(0.5).unwrap()).unwrap();
        assert_eq!(a, AMatrix::identity());

        let (s, b) = (0.7, 0.2);
        let a = kernel_to_a(&Kernel2::new(s, s, b, b).unwrap()).unwrap();
        assert_abs_diff_eq!(a.a11, 2.0 * s - 2.0 * b, epsilon = 1e-15);
        assert_abs_diff_eq!(a.a22, 2.0 * s + 2.0 * b, epsilon = 1e-15);
        assert_eq!(a.a12, 0.0);

        let a = kernel_to_a(&Kernel2::new(1.0, 0.5, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!((a.a11, a.a22, a.a12), (1.5, 1.5, 0.5));
    }

    #[test]
    fn kernel_rejects_asymmetric_or_indefinite() {
        assert!(Kernel2::new(1.0, 1.0, 0.1, 0.2).is_err());
        assert!(Kernel2::new(1.0, 1.0, 2.0, 2.0).is_err());
        assert!(Kernel2::new(-1.0, 1.0, 0.0, 0.0).is_err());
        assert!(AMatrix::new(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn rho2_examples() {
        assert_eq!(rho2_sq(&iv(0.0, 2.0), &iv(0.0, 2.0)), 0.0);
        assert_eq!(rho2_sq(&iv(0.0, 2.0), &iv(1.0, 3.0)), 1.0);
        assert_eq!(rho2_sq(&iv(0.0, 2.0), &iv(1.0, 1.0)), 1.0);
        assert_eq!(rho2_sq_center_radius(&iv(0.0, 2.0), &iv(1.0, 1.0)), 1.0);
    }

    #[test]
    fn rho_k_examples() {
        let x = iv(0.0, 2.0);
        assert_eq!(rho_k_sq(&x, &iv(1.0, 3.0), &AMatrix::identity()), 1.0);
        let a = AMatrix::new(1.0, 1.0, 0.5).unwrap();
        assert_eq!(rho_k_sq(&x, &iv(1.0, 1.0), &a), 1.0);
        assert_eq!(rho_k_sq(&x, &x, &a), 0.0);
    }

    #[test]
    fn rho_w_is_diagonal_rho_k() {
        let (x, y) = (iv(-1.0, 4.0), iv(0.5, 1.5));
        let dc = x.center() - y.center();
        let dr = x.radius() - y.radius();
        let w = rho_w_sq(&x, &y, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(w, dc * dc + dr * dr / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn combine_examples() {
        let r = weighted_combine(&[1.0], &[iv(3.0, 5.0)]).unwrap();
        assert_eq!(r, iv(3.0, 5.0));
        let r = weighted_combine(&[0.5, 0.5], &[iv(0.0, 2.0), iv(2.0, 4.0)]).unwrap();
        assert_eq!(r, iv(1.0, 3.0));
        let r = weighted_combine(&[-0.5, 1.5], &[iv(0.0, 2.0), iv(2.0, 4.0)]).unwrap();
        assert_eq!((r.center(), r.radius()), (4.0, 2.0));
        assert_eq!(r, iv(2.0, 6.0));
    }

    #[test]
    fn combine_errors() {
        assert!(matches!(weighted_combine(&[], &[]), Err(Error::Empty(_))));
        assert!(matches!(
            weighted_combine(&[1.0, 2.0], &[iv(0.0, 1.0)]),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
