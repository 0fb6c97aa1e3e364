use nalgebra::DVector;
use proptest::prelude::*;

use subwave::poly::Polynomial;
use subwave::rays::{generate_rays, ray_length, reach_set, time_function_check, validate_ray, ReachConfig};
use subwave::srstruct::{euclidean, heisenberg, martinet, quasicontact};
use subwave::{CotangentPoint, Error, ExtendedPoint, SubRiemannianStructure};

fn null_point(s: &SubRiemannianStructure, x: &[f64], xi: &[f64], sign: f64) -> ExtendedPoint {
    let pt = CotangentPoint::from_slices(x, xi);
    ExtendedPoint::new(0.0, sign * s.principal_symbol(&pt).sqrt(), pt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_rays_validate_and_scale(
        x in prop::collection::vec(-1.0..1.0f64, 4),
        xi in prop::collection::vec(-1.0..1.0f64, 4),
        forward in any::<bool>(), plus in any::<bool>(),
        lambda in 0.1..20.0f64,
    ) {
        let s = quasicontact();
        let m0 = null_point(&s, &x, &xi, if plus { 1.0 } else { -1.0 });
        prop_assume!(m0.tau.abs() > 0.05);
        let t = if forward { 0.4 } else { -0.4 };
        for ray in generate_rays(&s, &m0, t, 2e-3, 1).unwrap() {
            prop_assert!(validate_ray(&s, ray.samples.clone()).is_ok());
            prop_assert!(validate_ray(&s, ray.scaled_samples(lambda)).is_ok());
            prop_assert!(ray.max_abs_p(&s) <= 1e-8 * m0.pt.xi.norm_squared());
            // the ray starts or ends at m0
            let end = if forward { ray.first() } else { ray.last() };
            prop_assert!((end.to_vector() - m0.to_vector()).norm() <= 1e-12);
        }
    }

    #[test]
    fn reversed_or_sped_up_rays_are_rejected(
        x in prop::collection::vec(-1.0..1.0f64, 3),
        xi in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        let s = heisenberg();
        let m0 = null_point(&s, &x, &xi, 1.0);
        prop_assume!(m0.tau > 0.1);
        let ray = generate_rays(&s, &m0, 0.5, 1e-2, 1).unwrap().remove(0);
        // run the x, ξ part backwards against the same times
        let mut rev = ray.samples.clone();
        let pts: Vec<CotangentPoint> = ray.samples.iter().rev().map(|m| m.pt.clone()).collect();
        for (m, p) in rev.iter_mut().zip(pts) {
            m.pt = p;
        }
        prop_assert!(validate_ray(&s, rev).is_err());
        // same path in half the time
        let fast: Vec<ExtendedPoint> = ray.samples.iter().map(|m| ExtendedPoint::new(0.5 * m.t, m.tau, m.pt.clone())).collect();
        prop_assert!(validate_ray(&s, fast).is_err());
    }

    #[test]
    fn minus_t_is_a_time_function_along_rays(
        x in prop::collection::vec(-1.0..1.0f64, 3),
        xi in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        let s = martinet();
        let m0 = null_point(&s, &x, &xi, 1.0);
        prop_assume!(m0.tau > 0.1);
        let ray = generate_rays(&s, &m0, 0.3, 1e-2, 1).unwrap().remove(0);
        let minus_t = Polynomial::variable(7, 0).scale((-1).into());
        prop_assert!(time_function_check(&s, &minus_t, &ray.samples, 1e-9).unwrap().passed());
    }
}

#[test]
fn euclidean_reach_set_is_the_backward_line() {
    let s = euclidean(3);
    let x0 = DVector::from_vec(vec![0.2, -0.1, 0.3]);
    let xi = DVector::from_vec(vec![0.6, 0.0, 0.8]);
    let tau = 1.0;
    let cfg = ReachConfig { segment: 0.3, ..Default::default() };
    let r = reach_set(&s, &[(CotangentPoint::new(x0.clone(), xi.clone()), tau)], (-1.0, 0.0), &cfg).unwrap();
    assert!(!r.exhausted);
    assert!(r.cloud.len() >= 90, "{}", r.cloud.len());
    // ẋ = −ξ/τ along forward rays, so the point at time t is x0 − tξ/τ
    for cp in &r.cloud {
        let expect = &x0 - &xi * (cp.t / tau);
        assert!((&cp.pt.x - expect).norm() < 1e-9);
        assert!((&cp.pt.xi - &xi).norm() < 1e-12);
    }
    // provenance: every cloud point is joined to the source by a valid ray
    let moved: Vec<usize> = (0..r.cloud.len()).filter(|&i| r.cloud[i].t < 0.0).collect();
    for idx in [moved[0], moved[moved.len() / 2], moved[moved.len() - 1]] {
        let ray = r.ray_to_source(&s, idx).unwrap();
        assert!((ray.last().pt.x.clone() - &x0).norm() < 1e-9);
        assert!((ray_length(&ray) + r.cloud[idx].t).abs() < 1e-9);
    }
}

#[test]
fn reach_set_is_closed_under_sampled_limits() {
    // points at t_k → t* accumulate at a point that the cloud resolves within grid_res
    let s = heisenberg();
    let src = CotangentPoint::from_slices(&[0.0, 0.0, 0.0], &[0.3, 0.4, 1.0]);
    let tau = s.principal_symbol(&src).sqrt();
    let cfg = ReachConfig { grid_res: 1e-2, ..Default::default() };
    let r = reach_set(&s, &[(src, tau)], (-0.8, 0.0), &cfg).unwrap();
    let t_star = -0.555;
    let near: Vec<&_> = r.cloud.iter().filter(|c| (c.t - t_star).abs() < 0.05).collect();
    assert!(!near.is_empty());
    let limit = near.iter().min_by(|a, b| (a.t - t_star).abs().total_cmp(&(b.t - t_star).abs())).unwrap();
    let dist = r
        .cloud
        .iter()
        .filter(|c| c.t != limit.t)
        .map(|c| (c.pt.to_vector() - limit.pt.to_vector()).norm())
        .fold(f64::INFINITY, f64::min);
    assert!(dist < 0.1, "{dist}");
}

#[test]
fn martinet_degenerate_reach_set_stays_on_the_line() {
    let s = martinet();
    let z0 = 0.25;
    let src = CotangentPoint::from_slices(&[0.0, 0.0, z0], &[0.0, 0.0, 1.0]);
    let cfg = ReachConfig { n_dirs: 3, ..Default::default() };
    let r = reach_set(&s, &[(src, 0.0)], (-0.5, 0.0), &cfg).unwrap();
    assert!(r.cloud.iter().any(|c| c.pt.x[1].abs() > 0.2), "the line is explored");
    for cp in &r.cloud {
        assert!(cp.pt.x[0].abs() < 1e-9 && (cp.pt.x[2] - z0).abs() < 1e-9);
        assert!(cp.pt.x[1].abs() <= cp.t.abs() + 1e-9, "speed at most 1");
    }
}

#[test]
fn reach_budget_is_reported() {
    let s = heisenberg();
    let src = CotangentPoint::from_slices(&[0.0; 3], &[0.0, 1.0, 0.0]);
    let cfg = ReachConfig { max_points: 20, ..Default::default() };
    let r = reach_set(&s, &[(src, 1.0)], (-1.0, 0.0), &cfg).unwrap();
    assert!(r.exhausted);
    assert_eq!(r.cloud.len(), 20);
}

#[test]
fn invalid_reach_requests() {
    let s = heisenberg();
    let src = CotangentPoint::from_slices(&[0.0; 3], &[0.0, 1.0, 0.0]);
    assert!(matches!(reach_set(&s, &[(src.clone(), 1.0)], (0.0, -1.0), &ReachConfig::default()), Err(Error::InvalidArgument(_))));
    assert!(matches!(reach_set(&s, &[(src, 0.1)], (-1.0, 0.0), &ReachConfig::default()), Err(Error::OutsideDomain { .. })));
}
