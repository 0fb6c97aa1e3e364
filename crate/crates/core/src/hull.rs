//! Minimum-norm point of a convex hull (Wolfe's algorithm).

use nalgebra::{DMatrix, DVector};

use crate::linalg;

const MAX_MAJOR: usize = 2000;

/// Returns the point of conv(points) closest to the origin.
pub fn min_norm_point(points: &[DVector<f64>]) -> DVector<f64> {
    assert!(!points.is_empty(), "convex hull of an empty set");
    let scale = points.iter().map(|p| p.norm_squared()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let eps_opt = 1e-13 * scale;
    let eps_coef = 1e-12;

    let start = (0..points.len())
        .min_by(|&a, &b| points[a].norm_squared().total_cmp(&points[b].norm_squared()))
        .unwrap();
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();

    for _ in 0..MAX_MAJOR {
        let (j, val) = points
            .iter()
            .enumerate()
            .map(|(k, p)| (k, x.dot(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if x.norm_squared() - val <= eps_opt || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(0.0);

        loop {
            let alpha = affine_min(points, &active);
            if alpha.iter().all(|&a| a > eps_coef) {
                lambda = alpha;
                x = combine(points, &active, &lambda);
                break;
            }
            let mut theta: f64 = 1.0;
            let mut worst = 0;
            for (k, (&l, &a)) in lambda.iter().zip(&alpha).enumerate() {
                if a <= eps_coef {
                    let denom = l - a;
                    let t = if denom > 0.0 { l / denom } else { 0.0 };
                    if t < theta {
                        theta = t;
                        worst = k;
                    }
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = theta * a + (1.0 - theta) * *l;
            }
            lambda[worst] = 0.0;
            let keep: Vec<bool> = lambda.iter().map(|&l| l > eps_coef).collect();
            active = active.iter().zip(&keep).filter(|(_, &k)| k).map(|(&i, _)| i).collect();
            lambda = lambda.iter().zip(&keep).filter(|(_, &k)| k).map(|(&l, _)| l).collect();
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            x = combine(points, &active, &lambda);
            if active.len() == 1 {
                break;
            }
        }
    }
    x
}

fn combine(points: &[DVector<f64>], active: &[usize], lambda: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(points[0].len());
    for (&i, &l) in active.iter().zip(lambda) {
        x += &points[i] * l;
    }
    x
}

/// Coefficients (summing to one) of the min-norm point of the affine hull.
fn affine_min(points: &[DVector<f64>], active: &[usize]) -> Vec<f64> {
    let k = active.len();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            kkt[(a, b)] = points[active[a]].dot(&points[active[b]]);
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = kkt.clone().lu().solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite()));
    let sol = sol.unwrap_or_else(|| linalg::pinv(&kkt) * rhs);
    sol.rows(0, k).iter().cloned().collect()
}

/// Euclidean distance from `target` to conv(points).
pub fn hull_distance(points: &[DVector<f64>], target: &DVector<f64>) -> f64 {
    let shifted: Vec<DVector<f64>> = points.iter().map(|p| p - target).collect();
    min_norm_point(&shifted).norm()
}
