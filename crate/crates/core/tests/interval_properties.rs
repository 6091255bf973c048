use intkrige::intervals::{
    kernel_to_a, rho2_sq, rho2_sq_center_radius, rho_k_sq, rho_w_sq, weighted_combine, AMatrix,
    Interval, Kernel2,
};
use proptest::prelude::*;

fn interval() -> impl Strategy<Value = Interval> {
    (-50.0..50.0f64, 0.0..20.0f64).prop_map(|(c, r)| Interval::from_center_radius(c, r).unwrap())
}

fn psd_a() -> impl Strategy<Value = AMatrix> {
    (0.0..3.0f64, 0.0..3.0f64, -0.99..0.99f64)
        .prop_map(|(a11, a22, t)| AMatrix::new(a11, a22, t * (a11 * a22).sqrt()).unwrap())
}

proptest! {
    #[test]
    fn center_radius_round_trip(c in -1e3..1e3f64, r in 0.0..1e3f64) {
        let x = Interval::from_center_radius(c, r).unwrap();
        prop_assert!((x.center() - c).abs() <= 1e-12 * (1.0 + c.abs() + r));
        prop_assert!((x.radius() - r).abs() <= 1e-12 * (1.0 + c.abs() + r));
        prop_assert!(x.lower() <= x.upper());
    }

    #[test]
    fn half_identity_kernel_gives_rho2(x in interval(), y in interval()) {
        let a = kernel_to_a(&Kernel2::scaled_identity(0.5).unwrap()).unwrap();
        prop_assert!((rho_k_sq(&x, &y, &a) - rho2_sq(&x, &y)).abs() <= 1e-9);
    }

    #[test]
    fn rho2_forms_agree(x in interval(), y in interval()) {
        let d = rho2_sq(&x, &y);
        prop_assert!((d - rho2_sq_center_radius(&x, &y)).abs() <= 1e-9 * (1.0 + d));
    }

    #[test]
    fn rho_k_is_a_symmetric_nonnegative_form(x in interval(), y in interval(), a in psd_a()) {
        let d = rho_k_sq(&x, &y, &a);
        prop_assert!(d >= -1e-9);
        prop_assert_eq!(d, rho_k_sq(&y, &x, &a));
        prop_assert!(rho_k_sq(&x, &x, &a).abs() <= 1e-12);
    }

    #[test]
    fn kernel_matrix_matches_kernel_distance(
        kpp in 0.1..2.0f64, kmm in 0.1..2.0f64, t in -0.9..0.9f64,
        x in interval(), y in interval(),
    ) {
        let kpm = t * (kpp * kmm).sqrt();
        let k = Kernel2::new(kpp, kmm, kpm, kpm).unwrap();
        let a = kernel_to_a(&k).unwrap();
        let lhs = k.rho_sq(&x, &y);
        prop_assert!((lhs - rho_k_sq(&x, &y, &a)).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn radius_weight_one_is_rho2(x in interval(), y in interval()) {
        let d = rho2_sq(&x, &y);
        prop_assert!((rho_w_sq(&x, &y, 1.0).unwrap() - d).abs() <= 1e-9 * (1.0 + d));
    }

    #[test]
    fn minkowski_combination(
        parts in prop::collection::vec((interval(), -2.0..2.0f64), 1..8)
    ) {
        let (xs, ws): (Vec<Interval>, Vec<f64>) = parts.into_iter().unzip();
        let z = weighted_combine(&ws, &xs).unwrap();
        let c: f64 = ws.iter().zip(&xs).map(|(w, x)| w * x.center()).sum();
        let r: f64 = ws.iter().zip(&xs).map(|(w, x)| w.abs() * x.radius()).sum();
        prop_assert!((z.center() - c).abs() <= 1e-9 * (1.0 + c.abs()));
        prop_assert!((z.radius() - r).abs() <= 1e-9 * (1.0 + r));
    }
}

#[test]
fn rejects_reversed_and_nonfinite_bounds() {
    assert!(Interval::new(1.0, 0.0).is_err());
    assert!(Interval::new(f64::NAN, 0.0).is_err());
    assert!(Interval::from_center_radius(0.0, -1.0).is_err());
    assert!(AMatrix::new(1.0, 1.0, 2.0).is_err());
}
