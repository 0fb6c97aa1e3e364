use nalgebra::DVector;
use proptest::prelude::*;

use subwave::abnormal::{
    annihilator_frame, annihilator_point, annihilator_residual, characteristic_directions, classify_ray,
    integrate_characteristic, min_singular_length, project_to_annihilator, DirectionPolicy, RayKind, SingularBudget,
};
use subwave::rays::generate_rays;
use subwave::srstruct::{euclidean, heisenberg, martinet, quasicontact};
use subwave::{CotangentPoint, ExtendedPoint};

fn v(a: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_lands_in_the_annihilator(
        x in prop::collection::vec(-1.0..1.0f64, 4),
        xi in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let s = quasicontact();
        let pt = CotangentPoint::from_slices(&x, &xi);
        let p = project_to_annihilator(&s, &pt);
        prop_assert!(annihilator_residual(&s, &p) <= 1e-10);
        prop_assert!(s.principal_symbol(&p) <= 1e-20 + 1e-14 * p.xi.norm_squared());
        // projecting twice changes nothing
        let q = project_to_annihilator(&s, &p);
        prop_assert!((q.xi - p.xi).norm() <= 1e-12);
    }

    #[test]
    fn martinet_characteristics_exist_only_on_the_surface(
        x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
    ) {
        // Σ_(2) of the Martinet structure has characteristics exactly over {x = 0}
        let s = martinet();
        let pt = annihilator_point(&s, &v(&[x, y, z]), &[1.0]).unwrap();
        let dirs = characteristic_directions(&s, &pt).unwrap();
        if x.abs() > 1e-3 {
            prop_assert_eq!(dirs.ncols(), 0);
        }
        let on = annihilator_point(&s, &v(&[0.0, y, z]), &[1.0]).unwrap();
        prop_assert_eq!(characteristic_directions(&s, &on).unwrap().ncols(), 1);
    }
}

#[test]
fn annihilator_dimensions() {
    assert_eq!(annihilator_frame(&heisenberg(), &v(&[0.3, 0.2, 0.1])).dim(), 1);
    assert_eq!(annihilator_frame(&quasicontact(), &v(&[0.3, 0.2, 0.1, 0.0])).dim(), 1);
    assert_eq!(annihilator_frame(&euclidean(3), &v(&[0.3, 0.2, 0.1])).dim(), 0);
    assert!(annihilator_point(&euclidean(3), &v(&[0.0; 3]), &[1.0]).is_none());
}

#[test]
fn martinet_singular_length_is_the_y_distance() {
    let s = martinet();
    let b = SingularBudget::default();
    for (y1, z) in [(0.5, 0.0), (-1.2, 0.0), (0.8, 0.3)] {
        let r = min_singular_length(&s, &v(&[0.0, 0.0, z]), &v(&[0.0, y1, z]), &b).unwrap();
        let l = r.length.expect("on the singular line");
        assert!((l - y1.abs()).abs() < 2e-2, "{l} vs {y1}");
    }
    // off the line no singular curve connects the points
    let r = min_singular_length(&s, &v(&[0.0; 3]), &v(&[0.5, 0.5, 0.0]), &b).unwrap();
    assert!(r.length.is_none());
    assert_eq!(r.value(), f64::INFINITY);
    assert!(r.certificate.statement().contains("no singular curve"));
}

#[test]
fn heisenberg_has_no_singular_curves() {
    let r = min_singular_length(&heisenberg(), &v(&[0.0; 3]), &v(&[1.0, 0.0, 0.0]), &SingularBudget::default()).unwrap();
    assert!(r.length.is_none());
}

#[test]
fn characteristic_speed_follows_the_policy() {
    let s = martinet();
    let pt = CotangentPoint::from_slices(&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]);
    let policy = DirectionPolicy { initial: Some(v(&[0.0, -1.0, 0.0, 0.0, 0.0, 0.0])), speed: 0.5 };
    let c = integrate_characteristic(&s, &pt, 2.0, 1e-2, &policy).unwrap();
    assert!((c.endpoint().x[1] + 1.0).abs() < 1e-9, "{:?}", c.endpoint().x);
    assert!((c.length() - 1.0).abs() < 1e-9);
    assert!(!c.collapsed);
}

#[test]
fn rays_are_classified_by_their_samples() {
    let s = martinet();
    let m0 = ExtendedPoint::new(0.0, 0.0, CotangentPoint::from_slices(&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]));
    let rays = generate_rays(&s, &m0, 0.5, 1e-2, 2).unwrap();
    let kinds: Vec<RayKind> = rays.iter().map(|r| classify_ray(&s, r).unwrap()).collect();
    assert!(kinds.iter().all(|k| *k != RayKind::Bicharacteristic), "{kinds:?}");
    let pt = CotangentPoint::from_slices(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]);
    let m1 = ExtendedPoint::new(0.0, s.principal_symbol(&pt).sqrt(), pt);
    let bich = generate_rays(&s, &m1, 0.5, 1e-2, 1).unwrap();
    assert_eq!(classify_ray(&s, &bich[0]).unwrap(), RayKind::Bicharacteristic);
}
