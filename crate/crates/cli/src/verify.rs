//! Cross-representation checks on random doubly characteristic points.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use subwave::abnormal::annihilator_point;
use subwave::cones::{clarke_sample, DegenerateCone, HullCone, CONE_TOL, DEFAULT_NZ};
use subwave::{ExtendedPoint, Result, SubRiemannianStructure};

use crate::output::fmt;

/// Half-width of the speed band around the cone boundary where the sampled hulls may
/// legitimately disagree with the closed form.
pub const BOUNDARY_BAND: f64 = 0.05;
const CLARKE_SAMPLES: usize = 2000;
const CLARKE_RADII: [f64; 1] = [1e-6];
/// Clarke samples sit O(radius) off span{H_{h_i}}, so their hull gets a matching slack.
const CLARKE_TOL: f64 = 1e-4;

pub struct Report {
    pub table: String,
    pub summary: String,
    pub passed: bool,
}

pub fn run(s: &SubRiemannianStructure, points: usize, queries: usize, tol_identity: f64, seed: u64) -> Result<Report> {
    let d = s.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = String::from("point\tquery\tspeed\toff_span\tclosed_form\tf_hull\tclarke_hull\tband\n");
    let (mut used, mut checked, mut disagreements, mut worst_identity) = (0, 0, 0, 0.0f64);
    let mut attempts = 0;
    while used < points && attempts < 20 * points.max(1) {
        attempts += 1;
        let x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let c: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let Some(pt) = annihilator_point(s, &x, &c) else { continue };
        let cone = DegenerateCone::new(s, &pt)?;
        let p = &cone.perp_basis;
        if p.ncols() == 0 {
            continue;
        }
        let m = ExtendedPoint::new(0.0, 0.0, pt.clone());
        let f_hull = HullCone::from_fundamental(&cone, DEFAULT_NZ);
        let clarke = HullCone::from_samples(clarke_sample(s, &m, CLARKE_SAMPLES, &CLARKE_RADII, seed ^ used as u64)?, 2 * d);

        for q in 0..queries {
            let coef = DVector::from_fn(p.ncols(), |_, _| rng.sample(StandardNormal));
            let b = p * coef;
            // identity: a*(𝓘b) = g(dπ b) on span{H_{h_i}}
            let lhs = cone.speed_sq(&b);
            let rhs = s.metric_eval(&pt.x, &b.rows(0, d).into_owned());
            worst_identity = worst_identity.max((lhs - rhs).abs() / rhs.abs().max(1e-300));

            let target: f64 = rng.random_range(0.0..2.0);
            let mut b = b * (target / lhs.sqrt());
            let off = q % 5 == 4;
            if off {
                let noise = DVector::from_fn(2 * d, |_, _| rng.random_range(-0.1..0.1));
                let off_part = &noise - cone.project_perp(&noise);
                if off_part.norm() > 1e-2 {
                    b += off_part;
                }
            }
            let mut v = DVector::zeros(2 * d + 2);
            v[0] = 1.0;
            v.rows_mut(2, 2 * d).copy_from(&b);
            let closed = cone.defect(&v) <= CONE_TOL;
            let fh = f_hull.contains(&v, 1e-8);
            let ch = clarke.contains(&v, CLARKE_TOL);
            let band = !off && (target - 1.0).abs() < BOUNDARY_BAND;
            if !band && (closed != fh || closed != ch) {
                disagreements += 1;
            }
            checked += 1;
            table.push_str(&format!(
                "{used}\t{q}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                fmt(target),
                off as u8,
                closed as u8,
                fh as u8,
                ch as u8,
                band as u8
            ));
        }
        used += 1;
    }
    let identity_ok = worst_identity <= tol_identity;
    let passed = disagreements == 0 && identity_ok;
    let summary = if used == 0 {
        format!("{}: no doubly characteristic points; checks are vacuous", s.name())
    } else {
        format!(
            "{}: {used} points, {checked} queries, {disagreements} disagreements outside the boundary band; \
             identity max relative error {} ({})",
            s.name(),
            fmt(worst_identity),
            if identity_ok { "ok" } else { "FAILED" }
        )
    };
    Ok(Report { table, summary, passed })
}
