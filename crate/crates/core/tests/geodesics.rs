use std::f64::consts::PI;

use nalgebra::DVector;
use proptest::prelude::*;

use subwave::geodesics::{horizontal_integrate, integrate_normal, shoot, ShootConfig};
use subwave::srstruct::{euclidean, heisenberg, martinet};
use subwave::CotangentPoint;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_conserved_and_flow_reverses(
        x in prop::collection::vec(-1.0..1.0f64, 3),
        xi in prop::collection::vec(-1.0..1.0f64, 3),
        t in 0.1..3.0f64,
    ) {
        let s = martinet();
        let pt = CotangentPoint::from_slices(&x, &xi);
        prop_assume!(s.principal_symbol(&pt) > 1e-3);
        let arc = integrate_normal(&s, &pt, t, 1e-3).unwrap();
        prop_assert!(arc.max_energy_drift(&s) <= 1e-8);
        let back = integrate_normal(&s, arc.endpoint(), -t, 1e-3).unwrap();
        prop_assert!((back.endpoint().to_vector() - pt.to_vector()).norm() <= 1e-7);
    }

    #[test]
    fn length_is_twice_root_energy_times_time(
        xi in prop::collection::vec(-1.0..1.0f64, 3),
        t in 0.1..2.0f64,
    ) {
        // speed of the projection is 2 a^{1/2}
        let s = heisenberg();
        let pt = CotangentPoint::from_slices(&[0.0; 3], &xi);
        let a = s.principal_symbol(&pt);
        prop_assume!(a > 1e-3);
        let arc = integrate_normal(&s, &pt, t, 1e-3).unwrap();
        prop_assert!((arc.length - 2.0 * a.sqrt() * t).abs() <= 1e-6 * (1.0 + arc.length));
    }
}

#[test]
fn euclidean_geodesics_are_lines() {
    let s = euclidean(3);
    let pt = CotangentPoint::from_slices(&[1.0, 2.0, 3.0], &[0.5, 0.0, 0.0]);
    let arc = integrate_normal(&s, &pt, 2.0, 1e-2).unwrap();
    // ẋ = 2ξ
    let end = &arc.endpoint().x;
    assert!((end - DVector::from_vec(vec![3.0, 2.0, 3.0])).norm() < 1e-12);
}

#[test]
fn heisenberg_vertical_spectrum_matches_closed_form() {
    // geodesics from 0 to (0, 0, z) have lengths sqrt(4πk|z|), k = 1, 2, …
    let s = heisenberg();
    let z = 0.1;
    let spec = shoot(&s, &DVector::zeros(3), &DVector::from_vec(vec![0.0, 0.0, z]), 1.6, 64, &ShootConfig::default()).unwrap();
    let min = spec.min().expect("some geodesic");
    assert!((min - (4.0 * PI * z).sqrt()).abs() < 1e-4, "{min}");
    for l in spec.lengths() {
        let k = l * l / (4.0 * PI * z);
        assert!((k - k.round()).abs() < 1e-3 && k.round() >= 1.0, "length {l} is not in the spectrum");
    }
}

#[test]
fn shooting_recovers_euclidean_distance() {
    let s = euclidean(3);
    let spec = shoot(&s, &DVector::zeros(3), &DVector::from_vec(vec![0.3, -0.4, 0.0]), 2.0, 8, &ShootConfig::default()).unwrap();
    assert_eq!(spec.entries.len(), 1);
    assert!((spec.entries[0].length - 0.5).abs() < 1e-8);
}

#[test]
fn horizontal_curve_length_is_control_length_for_orthonormal_frames() {
    let s = heisenberg();
    let curve = horizontal_integrate(&s, &DVector::zeros(3), |t| DVector::from_vec(vec![t.cos(), t.sin()]), 2.0 * PI, 1e-3);
    assert!((curve.length - 2.0 * PI).abs() < 1e-6);
    assert!((curve.control_length - 2.0 * PI).abs() < 1e-9);
    // a unit circle in the (x, y) plane encloses area π: z = π
    assert!((curve.endpoint()[2] - PI).abs() < 1e-6, "{:?}", curve.endpoint());
}
