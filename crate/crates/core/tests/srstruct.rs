use nalgebra::DVector;
use proptest::prelude::*;

use subwave::linalg::omega;
use subwave::srstruct::{heisenberg, martinet, quasicontact, PRESETS};
use subwave::{CotangentPoint, SubRiemannianStructure, Symbol};

fn point(d: usize) -> impl Strategy<Value = CotangentPoint> {
    (prop::collection::vec(-1.5..1.5f64, d), prop::collection::vec(-2.0..2.0f64, d))
        .prop_map(|(x, xi)| CotangentPoint::from_slices(&x, &xi))
}

/// Central difference of a along coordinate k of (x, ξ).
fn central(s: &SubRiemannianStructure, pt: &CotangentPoint, k: usize, h: f64) -> f64 {
    let z = pt.to_vector();
    let mut e = DVector::zeros(z.len());
    e[k] = h;
    let f = |v: DVector<f64>| s.principal_symbol(&CotangentPoint::from_vector(&v));
    (f(&z + &e) - f(&z - &e)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symbol_gradient_matches_second_order_differences(pt in point(3)) {
        let s = martinet();
        let g = s.symbol_gradient(&Symbol::Principal, &pt);
        for k in 0..6 {
            let e1 = (central(&s, &pt, k, 1e-2) - g[k]).abs();
            let e2 = (central(&s, &pt, k, 5e-3) - g[k]).abs();
            // O(h²) truncation: halving h divides the error by about 4
            prop_assert!(e2 <= 0.3 * e1 + 1e-9, "k={k}: {e1:e} -> {e2:e}");
        }
    }

    #[test]
    fn principal_symbol_is_quadratic_in_xi(pt in point(4), lambda in 0.1..10.0f64) {
        let s = quasicontact();
        let scaled = CotangentPoint::new(pt.x.clone(), &pt.xi * lambda);
        let a = s.principal_symbol(&pt);
        prop_assert!((s.principal_symbol(&scaled) - lambda * lambda * a).abs() <= 1e-10 * (1.0 + lambda * lambda * a));
    }

    #[test]
    fn hamiltonian_field_is_tangent_to_level_sets(pt in point(3)) {
        let s = heisenberg();
        let ha = s.hamiltonian_field(&Symbol::Principal, &pt);
        let grad = s.symbol_gradient(&Symbol::Principal, &pt);
        prop_assert!(grad.dot(&ha).abs() <= 1e-10 * (1.0 + grad.norm_squared()));
        prop_assert!(omega(&ha, &ha).abs() <= 1e-12);
    }

    #[test]
    fn momenta_are_linear_in_xi(pt in point(3)) {
        let s = heisenberg();
        let two = CotangentPoint::new(pt.x.clone(), &pt.xi * 2.0);
        for (a, b) in s.momenta(&pt).iter().zip(s.momenta(&two)) {
            prop_assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn all_presets_load_and_round_trip() {
    for name in PRESETS {
        let s = SubRiemannianStructure::preset(name).unwrap();
        let back = SubRiemannianStructure::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back.to_toml(), s.to_toml());
        assert_eq!(back.dim(), s.dim());
    }
    assert!(SubRiemannianStructure::preset("nosuch").is_err());
}

#[test]
fn heisenberg_symbol_closed_form() {
    // a = (ξ1 − y/2 ξ3)² + (ξ2 + x/2 ξ3)²
    let s = heisenberg();
    let pt = CotangentPoint::from_slices(&[0.4, -1.0, 3.0], &[0.2, 0.7, -1.5]);
    let expect = (0.2f64 - (-1.0) / 2.0 * -1.5).powi(2) + (0.7f64 + 0.4 / 2.0 * -1.5).powi(2);
    assert!((s.principal_symbol(&pt) - expect).abs() < 1e-14);
}
