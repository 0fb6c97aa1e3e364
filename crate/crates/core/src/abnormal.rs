//! Characteristics of the annihilator 𝒟^⊥ (abnormal extremals), singular
//! curves and the minimal singular length between two points.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cones::sphere_points;
use crate::error::{Error, Result};
use crate::linalg::{self, omega};
use crate::rays::Ray;
use crate::srstruct::{CotangentPoint, SubRiemannianStructure};

/// Relative bound on |h_i| for a covector to count as annihilating 𝒟.
pub const ANNIHILATOR_TOL: f64 = 1e-8;
/// Trial displacement used to detect kernel directions that persist.
const PERSISTENCE_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct AnnihilatorFrame {
    pub x: DVector<f64>,
    /// Orthonormal basis (columns) of 𝒟^⊥_x.
    pub basis: DMatrix<f64>,
    /// Rank of span{Y_i(x)}.
    pub rank: usize,
}

impl AnnihilatorFrame {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

pub fn annihilator_frame(s: &SubRiemannianStructure, x: &DVector<f64>) -> AnnihilatorFrame {
    let frame = s.frame(x);
    AnnihilatorFrame { x: x.clone(), basis: linalg::null_space(&frame.transpose()), rank: linalg::rank(&frame) }
}

/// The covector Σ c_k e_k over the orthonormal basis e_k of 𝒟^⊥_x (extra coefficients
/// are ignored); None when the annihilator is trivial or the combination vanishes.
pub fn annihilator_point(s: &SubRiemannianStructure, x: &DVector<f64>, c: &[f64]) -> Option<CotangentPoint> {
    let frame = annihilator_frame(s, x);
    let k = frame.dim().min(c.len());
    if k == 0 {
        return None;
    }
    let xi = frame.basis.columns(0, k) * DVector::from_column_slice(&c[..k]);
    (xi.norm() > 0.0).then(|| CotangentPoint::new(x.clone(), xi))
}

/// max_i |h_i(x, ξ)| / (|ξ| (1 + |Y_i(x)|)).
pub fn annihilator_residual(s: &SubRiemannianStructure, pt: &CotangentPoint) -> f64 {
    let frame = s.frame(&pt.x);
    let xn = pt.xi.norm().max(f64::MIN_POSITIVE);
    (0..s.n_fields())
        .map(|i| {
            let col = frame.column(i);
            col.dot(&pt.xi).abs() / (xn * (1.0 + col.norm()))
        })
        .fold(0.0, f64::max)
}

/// Orthogonal projection of ξ onto 𝒟^⊥_x; h_i is linear in ξ so this solves h_i = 0 exactly.
pub fn project_to_annihilator(s: &SubRiemannianStructure, pt: &CotangentPoint) -> CotangentPoint {
    let m = s.frame(&pt.x).transpose();
    let xi = &pt.xi - linalg::pinv(&m) * (&m * &pt.xi);
    CotangentPoint::new(pt.x.clone(), xi)
}

fn check_annihilator(s: &SubRiemannianStructure, pt: &CotangentPoint) -> Result<()> {
    if pt.xi.norm() == 0.0 {
        return Err(Error::ZeroCovector);
    }
    let residual = annihilator_residual(s, pt);
    if residual > ANNIHILATOR_TOL {
        return Err(Error::NotInAnnihilator { residual });
    }
    Ok(())
}

/// Tangent space of 𝒟^⊥ at pt (null space of the differentials dh_i) and the Gram
/// matrix of ω restricted to it.
fn restricted_form(s: &SubRiemannianStructure, pt: &CotangentPoint) -> (DMatrix<f64>, DMatrix<f64>) {
    let rows: Vec<_> = (0..s.n_fields()).map(|i| s.momentum_gradient(i, pt).transpose()).collect();
    let dh = DMatrix::from_rows(&rows);
    let w = linalg::null_space(&dh);
    let k = w.ncols();
    let cols: Vec<DVector<f64>> = (0..k).map(|c| w.column(c).into_owned()).collect();
    let g = DMatrix::from_fn(k, k, |a, b| omega(&cols[a], &cols[b]));
    (w, g)
}

/// Basis of the radical of ω restricted to T𝒟^⊥ at pt.
pub fn restricted_kernel(s: &SubRiemannianStructure, pt: &CotangentPoint) -> Result<DMatrix<f64>> {
    check_annihilator(s, pt)?;
    Ok(radical(s, pt))
}

fn radical(s: &SubRiemannianStructure, pt: &CotangentPoint) -> DMatrix<f64> {
    let (w, g) = restricted_form(s, pt);
    if w.ncols() == 0 {
        return w;
    }
    let n = linalg::null_space(&g);
    &w * n
}

fn unit_covector(pt: &CotangentPoint) -> CotangentPoint {
    CotangentPoint::new(pt.x.clone(), pt.xi.normalize())
}

/// How far the radical is from keeping dimension `m` after a trial step along `u`.
fn persistence_defect(s: &SubRiemannianStructure, pt: &CotangentPoint, u: &DVector<f64>, m: usize) -> f64 {
    let moved = project_to_annihilator(s, &pt.shifted(u, PERSISTENCE_STEP));
    if moved.xi.norm() == 0.0 {
        return f64::INFINITY;
    }
    let (_, g) = restricted_form(s, &unit_covector(&moved));
    let mut sv: Vec<f64> = g.singular_values().iter().cloned().collect();
    sv.sort_by(f64::total_cmp);
    if m > sv.len() {
        return f64::INFINITY;
    }
    sv[m - 1]
}

/// Directions of the radical along which the radical keeps its dimension.
///
/// The pointwise radical can be larger than the set of directions tangent to actual
/// characteristic curves (on the Martinet surface {x = 0} it contains the lifts of both
/// ∂x and ∂y, but only the ∂y line stays on the surface). Directions are tested by a
/// trial step of size 1e-4: persistent ones leave an O(step²) defect, others O(step).
pub fn characteristic_directions(s: &SubRiemannianStructure, pt: &CotangentPoint) -> Result<DMatrix<f64>> {
    let kernel = restricted_kernel(s, pt)?;
    Ok(persistent_subspace(s, pt, &kernel))
}

fn persistent_subspace(s: &SubRiemannianStructure, pt: &CotangentPoint, kernel: &DMatrix<f64>) -> DMatrix<f64> {
    let m = kernel.ncols();
    if m == 0 {
        return kernel.clone();
    }
    let pt = unit_covector(pt);
    let threshold = 0.05 * PERSISTENCE_STEP;
    let defect = |c: &DVector<f64>| persistence_defect(s, &pt, &(kernel * c), m);
    if m == 1 {
        let c = DVector::from_element(1, 1.0);
        return if defect(&c) <= threshold { kernel.clone() } else { DMatrix::zeros(kernel.nrows(), 0) };
    }
    let mut samples: Vec<(f64, DVector<f64>)> =
        sphere_points(m, 24 * m * m).into_iter().map(|c| (defect(&c), c)).collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for (val, c) in samples.into_iter().take(4 * m) {
        // shrinking pattern search on the sphere
        let mut best = c;
        let mut best_val = val;
        let mut step = 0.25;
        while step > 1e-6 {
            let mut moved = false;
            for k in 0..m {
                for sgn in [1.0, -1.0] {
                    let mut trial = best.clone();
                    trial[k] += sgn * step;
                    let trial = trial.normalize();
                    let v = defect(&trial);
                    if v < best_val {
                        best = trial;
                        best_val = v;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if best_val <= threshold {
            kept.push(kernel * best);
        }
    }
    if kept.is_empty() {
        return DMatrix::zeros(kernel.nrows(), 0);
    }
    // principal span of the persistent directions
    let mat = DMatrix::from_columns(&kept);
    let svd = mat.svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 0.1 * smax)
        .map(|k| u.column(k).into_owned())
        .collect();
    linalg::orthonormalize(&cols, kernel.nrows())
}

#[derive(Debug, Clone)]
pub struct DirectionPolicy {
    /// Preferred initial direction in T(T*X); projected onto the characteristic directions.
    pub initial: Option<DVector<f64>>,
    /// Base g-speed imposed on every step (directions with no base motion are taken unit length).
    pub speed: f64,
}

impl Default for DirectionPolicy {
    fn default() -> Self {
        Self { initial: None, speed: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct CharacteristicCurve {
    pub samples: Vec<(f64, CotangentPoint)>,
    /// g-speed of the base projection on each step.
    pub speeds: Vec<f64>,
    /// Set when the radical vanished before the requested time.
    pub collapsed: bool,
}

impl CharacteristicCurve {
    pub fn endpoint(&self) -> &CotangentPoint {
        &self.samples.last().expect("curves have at least one sample").1
    }

    pub fn length(&self) -> f64 {
        self.samples.windows(2).zip(&self.speeds).map(|(w, v)| (w[1].0 - w[0].0) * v).sum()
    }
}

fn orient(u: DVector<f64>) -> DVector<f64> {
    match u.iter().find(|v| v.abs() > 1e-12) {
        Some(&v) if v < 0.0 => -u,
        _ => u,
    }
}

/// Characteristic velocity at pt following `reference`, scaled to the policy speed.
fn velocity(
    s: &SubRiemannianStructure,
    pt: &CotangentPoint,
    dirs: &DMatrix<f64>,
    reference: Option<&DVector<f64>>,
    speed: f64,
) -> Option<DVector<f64>> {
    if dirs.ncols() == 0 {
        return None;
    }
    let mut u = match reference {
        Some(r) => {
            let p = dirs * (dirs.transpose() * r);
            if p.norm() > 1e-3 * r.norm() {
                p
            } else {
                orient(dirs.column(0).into_owned())
            }
        }
        None => orient(dirs.column(0).into_owned()),
    };
    u.normalize_mut();
    let d = s.dim();
    let base = u.rows(0, d).into_owned();
    let g = s.metric_eval(&pt.x, &base);
    if g.is_finite() && g > 1e-18 {
        u /= g.sqrt();
    }
    Some(u * speed)
}

/// Follow a characteristic of 𝒟^⊥ from pt0 for time `t` with step `dt`.
pub fn integrate_characteristic(
    s: &SubRiemannianStructure,
    pt0: &CotangentPoint,
    t: f64,
    dt: f64,
    policy: &DirectionPolicy,
) -> Result<CharacteristicCurve> {
    check_annihilator(s, pt0)?;
    if !(dt > 0.0) || t < 0.0 {
        return Err(Error::InvalidArgument("integrate_characteristic needs dt > 0 and T >= 0".into()));
    }
    let mut curve = CharacteristicCurve { samples: vec![(0.0, pt0.clone())], speeds: Vec::new(), collapsed: false };
    let n = ((t / dt) - 1e-9).ceil().max(0.0) as usize;
    if n == 0 {
        return Ok(curve);
    }
    let h = t / n as f64;
    let start_dirs = characteristic_directions(s, pt0)?;
    if start_dirs.ncols() == 0 {
        // only the constant curve passes through pt0
        for k in 1..=n {
            curve.samples.push((k as f64 * h, pt0.clone()));
            curve.speeds.push(0.0);
        }
        return Ok(curve);
    }
    let mut reference = velocity(s, pt0, &start_dirs, policy.initial.as_ref(), 1.0);
    let mut pt = pt0.clone();

    // after the start, continuity with the previous step selects among radical directions
    let field = |p: &CotangentPoint, r: Option<&DVector<f64>>| -> Option<DVector<f64>> {
        velocity(s, p, &radical(s, p), r, policy.speed)
    };
    for k in 1..=n {
        let Some(k1) = field(&pt, reference.as_ref()) else {
            curve.collapsed = true;
            break;
        };
        let stages = (|| {
            let k2 = field(&pt.shifted(&k1, h / 2.0), Some(&k1))?;
            let k3 = field(&pt.shifted(&k2, h / 2.0), Some(&k1))?;
            let k4 = field(&pt.shifted(&k3, h), Some(&k1))?;
            Some((k2, k3, k4))
        })();
        let Some((k2, k3, k4)) = stages else {
            curve.collapsed = true;
            break;
        };
        let step = (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) / 6.0;
        let next = project_to_annihilator(s, &pt.shifted(&step, h));
        if radical(s, &next).ncols() == 0 {
            curve.collapsed = true;
            break;
        }
        let base = (&next.x - &pt.x) / h;
        let g = s.metric_eval(&pt.x, &base);
        curve.speeds.push(if g.is_finite() { g.sqrt() } else { base.norm() });
        curve.samples.push((k as f64 * h, next.clone()));
        reference = Some(step);
        pt = next;
    }
    Ok(curve)
}

#[derive(Debug, Clone)]
pub struct SingularBudget {
    pub t_max: f64,
    pub dt: f64,
    pub n_covectors: usize,
    pub tol_hit: f64,
}

impl Default for SingularBudget {
    fn default() -> Self {
        Self { t_max: 3.0, dt: 1e-2, n_covectors: 16, tol_hit: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularCertificate {
    pub t_max: f64,
    pub dt: f64,
    pub n_covectors: usize,
    pub tol_hit: f64,
    pub curves_traced: usize,
}

impl SingularCertificate {
    pub fn statement(&self) -> String {
        format!(
            "no singular curve of length <= {} found ({} characteristics traced from {} covectors, dt = {}, hit tolerance {})",
            self.t_max, self.curves_traced, self.n_covectors, self.dt, self.tol_hit
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularLength {
    /// Shortest singular curve found, if any.
    pub length: Option<f64>,
    pub covector: Option<DVector<f64>>,
    pub certificate: SingularCertificate,
}

impl SingularLength {
    /// T_s as a number; +∞ when no curve was found within the budget.
    pub fn value(&self) -> f64 {
        self.length.unwrap_or(f64::INFINITY)
    }
}

fn segment_hit(a: &DVector<f64>, b: &DVector<f64>, y: &DVector<f64>) -> Option<(f64, f64)> {
    let ab = b - a;
    let l2 = ab.norm_squared();
    let frac = if l2 == 0.0 { 0.0 } else { ((y - a).dot(&ab) / l2).clamp(0.0, 1.0) };
    Some((frac, (a + ab * frac - y).norm()))
}

/// Shortest characteristic from the fiber over x passing within `tol_hit` of y.
pub fn min_singular_length(
    s: &SubRiemannianStructure,
    x: &DVector<f64>,
    y: &DVector<f64>,
    budget: &SingularBudget,
) -> Result<SingularLength> {
    if (x - y).norm() == 0.0 {
        return Err(Error::InvalidArgument("singular length needs distinct endpoints".into()));
    }
    let frame = annihilator_frame(s, x);
    let k = frame.dim();
    let covectors: Vec<DVector<f64>> = if k == 0 {
        Vec::new()
    } else {
        sphere_points(k, budget.n_covectors).into_iter().map(|c| &frame.basis * c).collect()
    };
    let n_cov = covectors.len();
    let results: Vec<(usize, Option<(f64, DVector<f64>)>)> = covectors
        .par_iter()
        .map(|xi| {
            let pt = CotangentPoint::new(x.clone(), xi.clone());
            let Ok(dirs) = characteristic_directions(s, &pt) else {
                return (0, None);
            };
            let m = dirs.ncols();
            if m == 0 {
                return (0, None);
            }
            let orientations: Vec<DVector<f64>> = sphere_points(m, 8).into_iter().map(|c| &dirs * c).collect();
            let mut traced = 0;
            let mut best: Option<(f64, DVector<f64>)> = None;
            for o in orientations {
                let policy = DirectionPolicy { initial: Some(o), speed: 1.0 };
                let Ok(curve) = integrate_characteristic(s, &pt, budget.t_max, budget.dt, &policy) else {
                    continue;
                };
                traced += 1;
                let mut length = 0.0;
                for (w, v) in curve.samples.windows(2).zip(&curve.speeds) {
                    let seg = (w[1].0 - w[0].0) * v;
                    if let Some((frac, dist)) = segment_hit(&w[0].1.x, &w[1].1.x, y) {
                        if dist <= budget.tol_hit && seg > 0.0 {
                            let l = length + frac * seg;
                            if best.as_ref().is_none_or(|(b, _)| l < *b) {
                                best = Some((l, xi.clone()));
                            }
                            break;
                        }
                    }
                    length += seg;
                }
            }
            (traced, best)
        })
        .collect();
    let curves_traced = results.iter().map(|r| r.0).sum();
    let best = results
        .into_iter()
        .filter_map(|r| r.1)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SingularLength {
        length: best.as_ref().map(|b| b.0),
        covector: best.map(|b| b.1),
        certificate: SingularCertificate {
            t_max: budget.t_max,
            dt: budget.dt,
            n_covectors: n_cov,
            tol_hit: budget.tol_hit,
            curves_traced,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayKind {
    Bicharacteristic,
    AbnormalCharacteristic,
    Mixed,
}

/// Sort a validated ray into the two cases of constant τ.
pub fn classify_ray(s: &SubRiemannianStructure, ray: &Ray) -> Result<RayKind> {
    let samples = &ray.samples;
    if samples.len() < 2 {
        return Err(Error::InvalidRay("fewer than two samples".into()));
    }
    let tau_tol = |m: &crate::srstruct::ExtendedPoint| 1e-10 * m.pt.xi.norm().max(1e-300);
    let has_pos = samples.iter().any(|m| m.tau > tau_tol(m));
    let has_neg = samples.iter().any(|m| m.tau < -tau_tol(m));
    if has_pos && has_neg {
        return Err(Error::InvalidRay("tau changes sign along the ray".into()));
    }
    let tau0 = samples[0].tau;
    if samples.iter().any(|m| (m.tau - tau0).abs() > 1e-8 * (1.0 + tau0.abs())) {
        return Err(Error::InvalidRay("tau is not constant along the ray".into()));
    }
    let all_zero = samples.iter().all(|m| m.tau.abs() <= tau_tol(m));
    if has_pos || has_neg {
        if samples.iter().all(|m| m.tau.abs() > tau_tol(m)) {
            return Ok(RayKind::Bicharacteristic);
        }
        return Ok(RayKind::Mixed);
    }
    debug_assert!(all_zero);
    for w in samples.windows(2) {
        if annihilator_residual(s, &w[1].pt) > ANNIHILATOR_TOL {
            return Ok(RayKind::Mixed);
        }
        let dt = w[1].t - w[0].t;
        let base = (&w[1].pt.x - &w[0].pt.x) / dt;
        let g = s.metric_eval(&w[0].pt.x, &base);
        if !(g.sqrt() <= 1.0 + 1e-6) {
            return Ok(RayKind::Mixed);
        }
        let step = (w[1].pt.to_vector() - w[0].pt.to_vector()) / dt;
        if step.norm() > 0.0 {
            let kernel = radical(s, &w[0].pt);
            if linalg::residual_from_span(&kernel, &step).norm() > 1e-4 * step.norm() {
                return Ok(RayKind::Mixed);
            }
        }
    }
    Ok(RayKind::AbnormalCharacteristic)
}
