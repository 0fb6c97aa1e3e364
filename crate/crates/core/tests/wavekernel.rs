use nalgebra::DVector;
use proptest::prelude::*;

use subwave::srstruct::{euclidean, heisenberg, martinet};
use subwave::wavekernel::{predict, simulate, wf_candidate, Grid, PredictBudget, Scenario, WaveOperator, WfBudget};

fn v(a: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn discrete_operator_is_symmetric_nonnegative(
        u in prop::collection::vec(-1.0..1.0f64, 7 * 7 * 7),
        w in prop::collection::vec(-1.0..1.0f64, 7 * 7 * 7),
    ) {
        let s = martinet();
        let grid = Grid::new(vec![-1.0, -0.5, -2.0], vec![1.0, 1.5, 2.0], vec![7; 3]).unwrap();
        let op = WaveOperator::new(&s, grid).unwrap();
        let (mut au, mut aw) = (vec![0.0; u.len()], vec![0.0; w.len()]);
        op.apply(&u, &mut au);
        op.apply(&w, &mut aw);
        let (a, b) = (op.grid.dot(&au, &w), op.grid.dot(&u, &aw));
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        prop_assert!(op.grid.dot(&au, &u) >= -1e-12);
    }
}

#[test]
fn kernel_is_symmetric_in_source_and_probe() {
    // K(t, x, y) = K(t, y, x): swapping source and probe on the same grid gives the same trace
    let s = heisenberg();
    let (x, y) = (vec![-0.3, 0.1, 0.0], vec![0.3, -0.1, 0.2]);
    let bounds = (vec![-1.5, -1.5, -1.5], vec![1.5, 1.5, 1.5]);
    let run = |src: &Vec<f64>, probe: &Vec<f64>| {
        let mut sc = Scenario::new(0.6, vec![24; 3], src.clone(), vec![probe.clone()]);
        sc.bounds = Some(bounds.clone());
        sc.sigma = Some(0.25);
        sc.contamination_tol = 1.0;
        simulate(&s, &sc).unwrap()
    };
    let a = run(&x, &y);
    let b = run(&y, &x);
    assert_eq!(a.series[0].len(), b.series[0].len());
    let peak = a.series[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(peak > 0.0);
    // sources and probes do not sit on grid nodes, so interpolation adds an O(h²) asymmetry
    let diff = a.series[0].iter().zip(&b.series[0]).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    assert!(diff <= 0.1 * peak, "{diff} vs {peak}");
}

#[test]
fn predicted_times_lie_in_the_validity_window() {
    let budget = PredictBudget { n_starts: 16, ..Default::default() };
    let p = predict(&heisenberg(), &v(&[0.0; 3]), &v(&[0.5, 0.0, 0.1]), 3.0, &budget).unwrap();
    assert!(p.singular.length.is_none());
    assert_eq!(p.validity, 3.0);
    assert!(!p.predicted_times.is_empty());
    for t in &p.predicted_times {
        assert!(t.abs() < p.validity);
        assert!(p.explains(*t, 1e-12));
    }
    let ts = p.predicted_times.clone();
    assert!(ts.iter().all(|t| ts.contains(&-t)), "predictions are symmetric in t");

    let m = predict(&martinet(), &v(&[0.0; 3]), &v(&[0.0, 0.6, 0.0]), 3.0, &budget).unwrap();
    assert!((m.ts() - 0.6).abs() < 1e-2);
    assert!(m.predicted_times.iter().all(|t| t.abs() < m.validity));
}

#[test]
fn euclidean_flow_connects_only_along_lines() {
    let s = euclidean(3);
    let y = v(&[0.0; 3]);
    let eta = v(&[1.0, 0.0, 0.0]);
    let tau = 1.0;
    let b = WfBudget::default();
    // e^{tH_a}(y, η) = (y + 2tη, η)
    let x = v(&[1.0, 0.0, 0.0]);
    assert!(wf_candidate(&s, 0.5, &x, &y, tau, &eta, &eta, &b).unwrap().accepted());
    assert!(!wf_candidate(&s, 0.4, &x, &y, tau, &eta, &eta, &b).unwrap().accepted());
    assert!(!wf_candidate(&s, 0.5, &x, &y, 2.0, &eta, &eta, &b).unwrap().accepted());
}

#[test]
fn simulation_rejects_bad_scenarios() {
    let s = euclidean(3);
    let sc = Scenario::new(1.0, vec![24; 2], vec![0.0; 3], vec![]);
    assert!(simulate(&s, &sc).is_err());
    let sc = Scenario::new(-1.0, vec![24; 3], vec![0.0; 3], vec![]);
    assert!(simulate(&s, &sc).is_err());
}
