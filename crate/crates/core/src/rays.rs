//! Null-rays: sampled integral curves of the cone field, their validation,
//! generation, reachable sets and time-function checks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::abnormal::{characteristic_directions, integrate_characteristic, DirectionPolicy};
use crate::cones::{cone_at, sphere_points, ConeRep, DegenerateCone, Regime};
use crate::error::{Error, Result};
use crate::geodesics::integrate_normal;
use crate::linalg;
use crate::poly::Polynomial;
use crate::srstruct::{CotangentPoint, ExtendedPoint, SubRiemannianStructure};

/// Relative cone tolerance for sampled difference quotients.
pub const TOL_RAY: f64 = 1e-6;
pub const DEFAULT_GRID_RES: f64 = 1e-2;
/// Relative drift of a allowed along generated bicharacteristics.
const BICHAR_DRIFT: f64 = 1e-10;
const MAX_SUBSTEPS: usize = 64;

/// Outcome of the cone test on one step of a ray.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCertificate {
    /// Relative cone defect of the difference quotient at the left sample.
    pub defect: f64,
    /// Turning of the cone field across the step, added to the tolerance.
    pub allowance: f64,
    /// |Δ(x,ξ)| / Δt.
    pub speed: f64,
    /// Local Lipschitz bound: largest (x,ξ)-speed of a unit-∂_t cone element at either end.
    pub lipschitz: f64,
}

#[derive(Debug, Clone)]
pub struct Ray {
    pub samples: Vec<ExtendedPoint>,
    pub certificates: Vec<StepCertificate>,
}

impl Ray {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &ExtendedPoint {
        &self.samples[0]
    }

    pub fn last(&self) -> &ExtendedPoint {
        self.samples.last().expect("rays have at least two samples")
    }

    /// Largest |p| = |τ² − a| along the ray.
    pub fn max_abs_p(&self, s: &SubRiemannianStructure) -> f64 {
        self.samples.iter().map(|m| s.wave_symbol(m).abs()).fold(0.0, f64::max)
    }

    /// min Δt / |Δ(x,ξ)| over the steps; +∞ for a ray that does not move in T*X.
    pub fn parametrization_constant(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let dz = (w[1].pt.to_vector() - w[0].pt.to_vector()).norm();
                if dz == 0.0 {
                    f64::INFINITY
                } else {
                    (w[1].t - w[0].t) / dz
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// The samples with (τ, ξ) multiplied by λ > 0.
    pub fn scaled_samples(&self, lambda: f64) -> Vec<ExtendedPoint> {
        self.samples
            .iter()
            .map(|m| ExtendedPoint::new(m.t, lambda * m.tau, CotangentPoint::new(m.pt.x.clone(), &m.pt.xi * lambda)))
            .collect()
    }

    /// Samples of `self` followed by those of `next`, which must start where `self` ends.
    pub fn concat_samples(&self, next: &Ray) -> Result<Vec<ExtendedPoint>> {
        let a = self.last();
        let b = next.first();
        let gap = (a.to_vector() - b.to_vector()).norm();
        if gap > 1e-9 * (1.0 + a.to_vector().norm()) {
            return Err(Error::InvalidRay(format!("rays do not join (gap {gap:.3e})")));
        }
        let mut out = self.samples.clone();
        out.extend(next.samples.iter().skip(1).cloned());
        Ok(out)
    }
}

/// |t_last − t_first|.
pub fn ray_length(r: &Ray) -> f64 {
    (r.last().t - r.first().t).abs()
}

/// Largest (x,ξ)-speed of a cone element with unit ∂_t component.
fn lipschitz_bound(cone: &ConeRep) -> f64 {
    match cone {
        ConeRep::HalfLine(h) => {
            let d = &h.direction;
            if d[0] <= 0.0 {
                return f64::INFINITY;
            }
            d.rows(2, d.len() - 2).norm() / d[0]
        }
        ConeRep::Degenerate(c) => degenerate_max_speed(c),
    }
}

/// max |b| subject to b ∈ span{H_{h_i}} and a_m*(𝓘(b)) ≤ 1.
fn degenerate_max_speed(c: &DegenerateCone) -> f64 {
    let p = &c.perp_basis;
    let r = p.ncols();
    if r == 0 {
        return 0.0;
    }
    let q = |v: DVector<f64>| c.speed_sq(&(p * v));
    let e = |k: usize| DVector::from_fn(r, |i, _| if i == k { 1.0 } else { 0.0 });
    let m = DMatrix::from_fn(r, r, |i, j| (q(e(i) + e(j)) - q(e(i) - e(j))) / 4.0);
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let lmin = m.symmetric_eigenvalues().min();
    if lmin <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / lmin.sqrt()
    }
}

fn turning(left: &ConeRep, right: &ConeRep, v: &DVector<f64>) -> f64 {
    match (left, right) {
        (ConeRep::HalfLine(l), ConeRep::HalfLine(r)) => (l.direction.normalize() - r.direction.normalize()).norm(),
        (ConeRep::Degenerate(l), ConeRep::Degenerate(r)) => {
            let nv = v.norm();
            if nv == 0.0 {
                return 0.0;
            }
            let w = v.rows(2, v.len() - 2).into_owned();
            let gap = linalg::subspace_gap(&l.perp_basis, &r.perp_basis);
            let sl = l.speed_sq(&l.project_perp(&w)).sqrt();
            let sr = r.speed_sq(&r.project_perp(&w)).sqrt();
            let ds = if sl.is_finite() && sr.is_finite() { (sl - sr).abs() } else { 0.0 };
            gap * w.norm() / nv + ds / nv
        }
        _ => 0.0,
    }
}

/// Certify that consecutive samples follow the cone field.
///
/// Each forward difference quotient is tested against the closed cone at its left
/// sample with tolerance `tol` plus the turning of the cone field over the step,
/// which is O(Δt) and vanishes on straight rays.
pub fn validate_ray_tol(s: &SubRiemannianStructure, samples: Vec<ExtendedPoint>, tol: f64) -> Result<Ray> {
    if samples.len() < 2 {
        return Err(Error::InvalidRay("a ray needs at least two samples".into()));
    }
    for (k, w) in samples.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(Error::InvalidRay(format!("t is not strictly increasing at step {k}")));
        }
    }
    let mut cones = Vec::with_capacity(samples.len());
    let mut sign = 0.0;
    for (index, m) in samples.iter().enumerate() {
        let cone = match cone_at(s, m) {
            Ok(c) => c,
            Err(Error::OutsideDomain { .. }) => return Err(Error::RegimeViolation { index }),
            Err(e) => return Err(e),
        };
        let this = match cone.regime() {
            Regime::HalfLinePlus => 1.0,
            Regime::HalfLineMinus => -1.0,
            Regime::Degenerate => 0.0,
        };
        if this * sign < 0.0 {
            return Err(Error::RegimeViolation { index });
        }
        if this != 0.0 {
            sign = this;
        }
        cones.push(cone);
    }
    let mut certificates = Vec::with_capacity(samples.len() - 1);
    for (step, w) in samples.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        let v = (w[1].to_vector() - w[0].to_vector()) / dt;
        let (left, right) = (&cones[step], &cones[step + 1]);
        let defect = left.defect(&v);
        let allowance = turning(left, right, &v);
        let speed = v.rows(2, v.len() - 2).norm();
        let lipschitz = lipschitz_bound(left).max(lipschitz_bound(right));
        if defect > tol + allowance {
            return Err(Error::ConeViolation { step, defect });
        }
        if speed > lipschitz * (1.0 + tol + allowance) + tol {
            return Err(Error::ConeViolation { step, defect: speed / lipschitz - 1.0 });
        }
        certificates.push(StepCertificate { defect, allowance, speed, lipschitz });
    }
    Ok(Ray { samples, certificates })
}

pub fn validate_ray(s: &SubRiemannianStructure, samples: Vec<ExtendedPoint>) -> Result<Ray> {
    validate_ray_tol(s, samples, TOL_RAY)
}

/// Displacements b (in T(T*X)) sampled from the speed-limited set at a point of Σ_(2).
///
/// Only characteristic directions keep a ray inside {p = 0}, so b ranges over the
/// characteristic subspace: the center, its unit-speed boundary and half-speed points.
fn degenerate_directions(s: &SubRiemannianStructure, pt: &CotangentPoint, n_dirs: usize) -> Result<Vec<(DVector<f64>, f64)>> {
    let mut out = vec![(DVector::zeros(2 * s.dim()), 0.0)];
    let dirs = characteristic_directions(s, pt)?;
    let r = dirs.ncols();
    if r > 0 && n_dirs > 1 {
        let n_boundary = (n_dirs - 1).div_ceil(2).max(1);
        let boundary = sphere_points(r, n_boundary.max(if r == 1 { 2 } else { 1 }));
        for speed in [1.0, 0.5] {
            for c in &boundary {
                out.push((&dirs * c, speed));
            }
        }
    }
    out.truncate(n_dirs.max(1));
    Ok(out)
}

fn degenerate_ray(
    s: &SubRiemannianStructure,
    m0: &ExtendedPoint,
    t: f64,
    dt: f64,
    b: &DVector<f64>,
    speed: f64,
) -> Result<Ray> {
    let backward = t < 0.0;
    let policy = DirectionPolicy { initial: Some(if backward { -b } else { b.clone() }), speed };
    let curve = if speed == 0.0 {
        let n = ((t.abs() / dt) - 1e-9).ceil().max(1.0) as usize;
        let h = t.abs() / n as f64;
        (0..=n).map(|k| (k as f64 * h, m0.pt.clone())).collect::<Vec<_>>()
    } else {
        integrate_characteristic(s, &m0.pt, t.abs(), dt, &policy)?.samples
    };
    let dir = if backward { -1.0 } else { 1.0 };
    let mut samples: Vec<ExtendedPoint> =
        curve.into_iter().map(|(sigma, pt)| ExtendedPoint::new(m0.t + dir * sigma, 0.0, pt)).collect();
    if backward {
        samples.reverse();
    }
    validate_ray(s, samples)
}

fn bicharacteristic_ray(s: &SubRiemannianStructure, m0: &ExtendedPoint, t: f64, dt: f64) -> Result<Ray> {
    // d(x,ξ)/dt = −H_a/(2τ): flow H_a for time −t/(2τ)
    let scale = -1.0 / (2.0 * m0.tau);
    let n = ((t.abs() / dt) - 1e-9).ceil().max(1.0) as usize;
    // substeps until τ² = a holds well inside the domain tolerance
    let mut sub = 1;
    let arc = loop {
        let h = t.abs() * scale.abs() / (n * sub) as f64;
        match integrate_normal(s, &m0.pt, t * scale, h) {
            Ok(arc) if arc.max_energy_drift(s) <= BICHAR_DRIFT || sub >= MAX_SUBSTEPS => break arc,
            Err(Error::StepRejected { .. }) if sub < MAX_SUBSTEPS => {}
            Err(e) => return Err(e),
            Ok(_) => {}
        }
        sub *= 2;
    };
    let mut samples: Vec<ExtendedPoint> = arc
        .samples
        .into_iter()
        .step_by(sub)
        .map(|(sigma, pt)| ExtendedPoint::new(m0.t + sigma / scale, m0.tau, pt))
        .collect();
    if t < 0.0 {
        samples.reverse();
    }
    validate_ray(s, samples)
}

/// Rays through m0 over a time span `t` (negative `t` gives rays ending at m0).
///
/// Off Σ_(2) the cone is a half-line and the single bicharacteristic is returned.
/// At points of Σ_(2) up to `n_dirs` rays step along ∂_t + b.
pub fn generate_rays(s: &SubRiemannianStructure, m0: &ExtendedPoint, t: f64, dt: f64, n_dirs: usize) -> Result<Vec<Ray>> {
    if !(dt > 0.0) || t == 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument("generate_rays needs dt > 0 and a finite nonzero span".into()));
    }
    let cone = cone_at(s, m0)?;
    match cone {
        ConeRep::HalfLine(_) => Ok(vec![bicharacteristic_ray(s, m0, t, dt)?]),
        ConeRep::Degenerate(_) => {
            let dirs = degenerate_directions(s, &m0.pt, n_dirs)?;
            dirs.par_iter().map(|(b, speed)| degenerate_ray(s, m0, t, dt, b, *speed)).collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReachConfig {
    pub dt: f64,
    pub n_dirs: usize,
    /// Pruning resolution in x and in the normalized covector.
    pub grid_res: f64,
    /// Time span of one breadth-first generation.
    pub segment: f64,
    pub max_points: usize,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self { dt: 1e-2, n_dirs: 5, grid_res: DEFAULT_GRID_RES, segment: 0.25, max_points: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudPoint {
    pub t: f64,
    pub pt: CotangentPoint,
    /// Index into `ReachableSet::segments`.
    pub ray: usize,
    /// Sample index within that segment.
    pub sample: usize,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub ray: Ray,
    /// Segment that continues this one towards the source, if any.
    pub parent: Option<usize>,
    /// Source point the chain ends at.
    pub source: usize,
}

#[derive(Debug, Clone)]
pub struct ReachableSet {
    pub sources: Vec<ExtendedPoint>,
    pub interval: (f64, f64),
    pub cloud: Vec<CloudPoint>,
    pub segments: Vec<Segment>,
    /// Set when `max_points` stopped the propagation early.
    pub exhausted: bool,
}

impl ReachableSet {
    /// The full ray from a cloud point to its source.
    pub fn ray_to_source(&self, s: &SubRiemannianStructure, index: usize) -> Result<Ray> {
        let cp = &self.cloud[index];
        let seg = &self.segments[cp.ray];
        let mut samples: Vec<ExtendedPoint> = seg.ray.samples[cp.sample..].to_vec();
        let mut parent = seg.parent;
        while let Some(p) = parent {
            samples.extend(self.segments[p].ray.samples.iter().skip(1).cloned());
            parent = self.segments[p].parent;
        }
        if samples.len() < 2 {
            // the source itself: a trivial static ray of zero length is not a ray
            return Err(Error::InvalidRay("cloud point coincides with its source".into()));
        }
        validate_ray(s, samples)
    }
}

type CellKey = (i64, Vec<i64>);

fn cell_key(t: f64, pt: &CotangentPoint, res: f64, dt: f64) -> CellKey {
    let xn = pt.xi.norm().max(f64::MIN_POSITIVE);
    let mut key: Vec<i64> = pt.x.iter().map(|v| (v / res).round() as i64).collect();
    key.extend(pt.xi.iter().map(|v| (v / xn / res).round() as i64));
    ((t / dt).round() as i64, key)
}

/// Sampled 𝒮(I; V): points (s, y, η) with s ∈ I from which a ray reaches a source at t = 0.
///
/// Rays are generated backwards from the sources in generations of `segment` time,
/// pruned to a hash grid; only I ∩ (−∞, 0] is reachable.
pub fn reach_set(
    s: &SubRiemannianStructure,
    sources: &[(CotangentPoint, f64)],
    interval: (f64, f64),
    cfg: &ReachConfig,
) -> Result<ReachableSet> {
    let (lo, hi) = interval;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid interval [{lo}, {hi}]")));
    }
    if !(cfg.dt > 0.0 && cfg.segment > 0.0 && cfg.grid_res > 0.0) {
        return Err(Error::InvalidArgument("dt, segment and grid_res must be positive".into()));
    }
    let srcs: Vec<ExtendedPoint> = sources.iter().map(|(pt, tau)| ExtendedPoint::new(0.0, *tau, pt.clone())).collect();
    let mut out = ReachableSet {
        sources: srcs.clone(),
        interval,
        cloud: Vec::new(),
        segments: Vec::new(),
        exhausted: false,
    };
    let mut seen: BTreeMap<CellKey, usize> = BTreeMap::new();
    // frontier entries: (point, segment the point starts, source index)
    let mut frontier: Vec<(ExtendedPoint, Option<usize>, usize)> =
        srcs.iter().enumerate().map(|(i, m)| (m.clone(), None, i)).collect();
    for (i, m) in srcs.iter().enumerate() {
        cone_at(s, m)?;
        if lo <= 0.0 && 0.0 <= hi {
            let key = cell_key(0.0, &m.pt, cfg.grid_res, cfg.dt);
            seen.entry(key).or_insert_with(|| {
                out.cloud.push(CloudPoint { t: 0.0, pt: m.pt.clone(), ray: usize::MAX, sample: i });
                out.cloud.len() - 1
            });
        }
    }
    while !frontier.is_empty() {
        let results: Vec<Result<Vec<Ray>>> = frontier
            .par_iter()
            .map(|(m, _, _)| {
                let span = (m.t - lo).min(cfg.segment);
                if span <= 1e-12 {
                    return Ok(Vec::new());
                }
                generate_rays(s, m, -span, cfg.dt, cfg.n_dirs)
            })
            .collect();
        let mut next = Vec::new();
        for ((_, parent, source), rays) in frontier.iter().zip(results) {
            for ray in rays? {
                let seg_index = out.segments.len();
                let start = ray.first().clone();
                for (k, m) in ray.samples.iter().enumerate() {
                    if m.t < lo - 1e-12 || m.t > hi + 1e-12 || k + 1 == ray.samples.len() {
                        continue;
                    }
                    let key = cell_key(m.t, &m.pt, cfg.grid_res, cfg.dt);
                    if seen.contains_key(&key) {
                        continue;
                    }
                    if out.cloud.len() >= cfg.max_points {
                        out.exhausted = true;
                        continue;
                    }
                    seen.insert(key, out.cloud.len());
                    out.cloud.push(CloudPoint { t: m.t, pt: m.pt.clone(), ray: seg_index, sample: k });
                }
                out.segments.push(Segment { ray, parent: *parent, source: *source });
                if start.t > lo + 1e-12 && !out.exhausted {
                    next.push((start, Some(seg_index), *source));
                }
            }
        }
        // prune the next generation to one representative per cell
        let mut kept: BTreeMap<CellKey, (ExtendedPoint, Option<usize>, usize)> = BTreeMap::new();
        for item in next {
            kept.entry(cell_key(item.0.t, &item.0.pt, cfg.grid_res, cfg.dt)).or_insert(item);
        }
        frontier = kept.into_values().collect();
    }
    // source entries carry no segment; give them one so every cloud point has provenance
    for cp in out.cloud.iter_mut().filter(|cp| cp.ray == usize::MAX) {
        let source = cp.sample;
        if let Some(seg) = out.segments.iter().position(|g| g.source == source && g.parent.is_none()) {
            cp.ray = seg;
            cp.sample = out.segments[seg].ray.len() - 1;
        }
    }
    out.cloud.retain(|cp| cp.ray != usize::MAX);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeFunctionViolation {
    pub point: ExtendedPoint,
    pub direction: DVector<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TimeFunctionReport {
    pub checked: usize,
    /// Samples outside {p ≥ 0}.
    pub skipped: usize,
    pub violations: Vec<TimeFunctionViolation>,
}

impl TimeFunctionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Cone elements with unit ∂_t component used to probe a candidate time function.
fn probe_directions(cone: &ConeRep) -> Vec<DVector<f64>> {
    match cone {
        ConeRep::HalfLine(h) => vec![&h.direction / h.direction[0].max(f64::MIN_POSITIVE)],
        ConeRep::Degenerate(c) => {
            let n = 2 * c.dim() + 2;
            let mut t = DVector::zeros(n);
            t[0] = 1.0;
            let mut out = vec![t.clone()];
            for g in c.f_generators(64) {
                let mut v = t.clone();
                v.rows_mut(2, n - 2).copy_from(&g);
                out.push(v);
            }
            out
        }
    }
}

/// Check that φ(t, x, ξ) does not increase along sampled cone directions.
///
/// `phi` is a polynomial in the 1 + 2d variables (t, x, ξ).
pub fn time_function_check(
    s: &SubRiemannianStructure,
    phi: &Polynomial,
    samples: &[ExtendedPoint],
    tol: f64,
) -> Result<TimeFunctionReport> {
    let d = s.dim();
    if phi.dim() != 1 + 2 * d {
        return Err(Error::InvalidArgument(format!("time function must have {} variables (t, x, xi)", 1 + 2 * d)));
    }
    let grads: Vec<Polynomial> = (0..phi.dim()).map(|j| phi.derivative(j)).collect();
    let mut report = TimeFunctionReport::default();
    for m in samples {
        let cone = match cone_at(s, m) {
            Ok(c) => c,
            Err(Error::OutsideDomain { .. }) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        report.checked += 1;
        let mut args = vec![m.t];
        args.extend(m.pt.x.iter());
        args.extend(m.pt.xi.iter());
        let g: Vec<f64> = grads.iter().map(|p| p.eval(&args)).collect();
        for v in probe_directions(&cone) {
            // v = (T, dτ, x', ξ'); φ does not depend on τ
            let mut value = g[0] * v[0];
            for j in 0..2 * d {
                value += g[1 + j] * v[2 + j];
            }
            if value > tol {
                report.violations.push(TimeFunctionViolation { point: m.clone(), direction: v, value });
            }
        }
    }
    Ok(report)
}
