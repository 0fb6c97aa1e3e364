//! Normal geodesics (projections of H_a integral curves), horizontal curves
//! and multi-start shooting for the length spectrum between two points.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::srstruct::{gradient_to_hamiltonian, CotangentPoint, SubRiemannianStructure, Symbol};

pub const DEFAULT_DT: f64 = 1e-3;
/// Relative energy drift above which a trajectory is rejected.
pub const MAX_ENERGY_DRIFT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GeodesicArc {
    pub samples: Vec<(f64, CotangentPoint)>,
    /// Value of a, constant along the flow.
    pub energy: f64,
    /// g-length 2√a·|T|.
    pub length: f64,
}

impl GeodesicArc {
    pub fn endpoint(&self) -> &CotangentPoint {
        &self.samples.last().expect("arcs have at least one sample").1
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().unwrap().0 - self.samples[0].0
    }

    pub fn max_energy_drift(&self, s: &SubRiemannianStructure) -> f64 {
        let scale = self.energy.max(f64::MIN_POSITIVE);
        self.samples
            .iter()
            .map(|(_, p)| (s.principal_symbol(p) - self.energy).abs() / scale)
            .fold(0.0, f64::max)
    }
}

fn rk4<F: Fn(&DVector<f64>) -> DVector<f64>>(f: &F, z: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(z);
    let k2 = f(&(z + &k1 * (h / 2.0)));
    let k3 = f(&(z + &k2 * (h / 2.0)));
    let k4 = f(&(z + &k3 * h));
    z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn ha(s: &SubRiemannianStructure, z: &DVector<f64>) -> DVector<f64> {
    s.hamiltonian_field(&Symbol::Principal, &CotangentPoint::from_vector(z))
}

fn step_count(t: f64, dt: f64) -> usize {
    ((t.abs() / dt) - 1e-9).ceil().max(0.0) as usize
}

/// Fixed-step RK4 integration of H_a from `pt0` over time `t` (negative `t` runs backwards).
pub fn integrate_normal(s: &SubRiemannianStructure, pt0: &CotangentPoint, t: f64, dt: f64) -> Result<GeodesicArc> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step dt must be positive, got {dt}")));
    }
    let n = step_count(t, dt);
    let h = if n == 0 { 0.0 } else { t / n as f64 };
    let energy = s.principal_symbol(pt0);
    let f = |z: &DVector<f64>| ha(s, z);
    let mut z = pt0.to_vector();
    let mut samples = Vec::with_capacity(n + 1);
    samples.push((0.0, pt0.clone()));
    let scale = energy.max(1e-300);
    for k in 1..=n {
        z = rk4(&f, &z, h);
        let p = CotangentPoint::from_vector(&z);
        let drift = (s.principal_symbol(&p) - energy).abs() / scale;
        if drift > MAX_ENERGY_DRIFT && energy > 0.0 {
            return Err(Error::StepRejected { drift });
        }
        samples.push((k as f64 * h, p));
    }
    Ok(GeodesicArc { samples, energy, length: 2.0 * energy.sqrt() * t.abs() })
}

#[derive(Debug, Clone)]
pub struct HorizontalCurve {
    /// (time, base point, control used on the step that starts here).
    pub samples: Vec<(f64, DVector<f64>, DVector<f64>)>,
    /// ∫ |u| dt.
    pub control_length: f64,
    /// ∫ g(ẋ)^{1/2} dt with the least-norm control at each step.
    pub length: f64,
}

impl HorizontalCurve {
    pub fn endpoint(&self) -> &DVector<f64> {
        &self.samples.last().expect("curves have at least one sample").1
    }
}

/// RK4 on ẋ = Σ u_i Y_i(x) with the control frozen on each step (sampled at the step midpoint).
pub fn horizontal_integrate<U: Fn(f64) -> DVector<f64>>(
    s: &SubRiemannianStructure,
    x0: &DVector<f64>,
    controls: U,
    t: f64,
    dt: f64,
) -> HorizontalCurve {
    assert!(dt > 0.0 && t >= 0.0, "horizontal_integrate needs dt > 0 and T >= 0");
    let n = step_count(t, dt);
    let h = if n == 0 { 0.0 } else { t / n as f64 };
    let mut x = x0.clone();
    let mut samples = Vec::with_capacity(n + 1);
    let mut control_length = 0.0;
    let mut length = 0.0;
    for k in 0..n {
        let tk = k as f64 * h;
        let u = controls(tk + 0.5 * h);
        assert_eq!(u.len(), s.n_fields(), "one control per vector field");
        let f = |y: &DVector<f64>| s.frame(y) * &u;
        let v = f(&x);
        length += s.metric_eval(&x, &v).sqrt() * h;
        control_length += u.norm() * h;
        samples.push((tk, x.clone(), u.clone()));
        x = rk4(&f, &x, h);
    }
    samples.push((t, x, DVector::zeros(s.n_fields())));
    HorizontalCurve { samples, control_length, length }
}

/// Endpoint of the flow from (x, ξ) over time T together with ∂(x_T)/∂ξ (d×d).
fn flow_with_jacobian(
    s: &SubRiemannianStructure,
    pt0: &CotangentPoint,
    t: f64,
    dt: f64,
) -> (CotangentPoint, DMatrix<f64>) {
    let d = s.dim();
    let n = step_count(t, dt).max(1);
    let h = t / n as f64;
    // state: z (2d) followed by the 2d×d block Φ = ∂z/∂ξ0, column-major
    let rhs = |state: &DVector<f64>| -> DVector<f64> {
        let z = state.rows(0, 2 * d).into_owned();
        let p = CotangentPoint::from_vector(&z);
        let hess = s.principal_hessian(&p);
        let grad = s.symbol_gradient(&Symbol::Principal, &p);
        let mut out = DVector::zeros(state.len());
        out.rows_mut(0, 2 * d).copy_from(&gradient_to_hamiltonian(&grad));
        for c in 0..d {
            let phi = state.rows(2 * d + c * 2 * d, 2 * d).into_owned();
            let dg = &hess * phi;
            out.rows_mut(2 * d + c * 2 * d, 2 * d).copy_from(&gradient_to_hamiltonian(&dg));
        }
        out
    };
    let mut state = DVector::zeros(2 * d + 2 * d * d);
    state.rows_mut(0, 2 * d).copy_from(&pt0.to_vector());
    for c in 0..d {
        state[2 * d + c * 2 * d + d + c] = 1.0;
    }
    for _ in 0..n {
        state = rk4(&rhs, &state, h);
    }
    let end = CotangentPoint::from_vector(&state.rows(0, 2 * d).into_owned());
    let jac = DMatrix::from_fn(d, d, |r, c| state[2 * d + c * 2 * d + r]);
    (end, jac)
}

#[derive(Debug, Clone)]
pub struct ShootConfig {
    /// Step used for the final polishing iterations.
    pub dt: f64,
    /// Step used while searching.
    pub coarse_dt: f64,
    pub max_iter: usize,
    pub tol_residual: f64,
    pub tol_len: f64,
    pub seed: u64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, coarse_dt: 1e-2, max_iter: 60, tol_residual: 1e-8, tol_len: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEntry {
    pub length: f64,
    /// Initial covector (on a(x, ·) = 1/4) of the representative root.
    pub covector: DVector<f64>,
    pub residual: f64,
    /// Number of converged starts merged into this entry.
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchBudget {
    pub n_starts: usize,
    pub seed: u64,
    pub t_max: f64,
    pub dt: f64,
    pub converged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthSpectrum {
    pub entries: Vec<SpectrumEntry>,
    pub budget: SearchBudget,
}

impl LengthSpectrum {
    pub fn lengths(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.length).collect()
    }

    pub fn min(&self) -> Option<f64> {
        self.entries.first().map(|e| e.length)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

struct Root {
    t: f64,
    xi: DVector<f64>,
    residual: f64,
}

fn residual(
    s: &SubRiemannianStructure,
    x: &DVector<f64>,
    y: &DVector<f64>,
    xi: &DVector<f64>,
    t: f64,
    dt: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let d = s.dim();
    let pt0 = CotangentPoint::new(x.clone(), xi.clone());
    let (end, phi) = flow_with_jacobian(s, &pt0, t, dt);
    let mut r = DVector::zeros(d + 1);
    r.rows_mut(0, d).copy_from(&(&end.x - y));
    r[d] = s.principal_symbol(&pt0) - 0.25;
    let mut jac = DMatrix::zeros(d + 1, d + 1);
    jac.view_mut((0, 0), (d, d)).copy_from(&phi);
    let grad0 = s.symbol_gradient(&Symbol::Principal, &pt0);
    for c in 0..d {
        jac[(d, c)] = grad0[d + c];
    }
    let xdot = gradient_to_hamiltonian(&s.symbol_gradient(&Symbol::Principal, &end));
    for r_ in 0..d {
        jac[(r_, d)] = xdot[r_];
    }
    (r, jac)
}

fn levenberg_marquardt(
    s: &SubRiemannianStructure,
    x: &DVector<f64>,
    y: &DVector<f64>,
    mut xi: DVector<f64>,
    mut t: f64,
    t_max: f64,
    dt: f64,
    max_iter: usize,
    tol: f64,
) -> Option<(DVector<f64>, f64, f64)> {
    let d = s.dim();
    let (mut r, mut jac) = residual(s, x, y, &xi, t, dt);
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        let norm = r.norm();
        if !norm.is_finite() {
            return None;
        }
        if norm <= tol {
            return Some((xi, t, norm));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..12 {
            let mut lhs = jtj.clone();
            for k in 0..=d {
                lhs[(k, k)] += mu * (jtj[(k, k)] + 1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&g)) else {
                mu *= 10.0;
                continue;
            };
            let xi_new = &xi + step.rows(0, d);
            let t_new = t + step[d];
            if !(t_new > 0.0 && t_new <= 1.05 * t_max) {
                mu *= 4.0;
                continue;
            }
            let (r_new, jac_new) = residual(s, x, y, &xi_new, t_new, dt);
            if r_new.norm() < norm {
                xi = xi_new;
                t = t_new;
                r = r_new;
                jac = jac_new;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            return None;
        }
    }
    let norm = r.norm();
    (norm <= tol).then_some((xi, t, norm))
}

/// Multi-start search for normal geodesics from x to y of length ≤ `t_max`.
pub fn shoot(
    s: &SubRiemannianStructure,
    x: &DVector<f64>,
    y: &DVector<f64>,
    t_max: f64,
    n_starts: usize,
    cfg: &ShootConfig,
) -> Result<LengthSpectrum> {
    if (x - y).norm() == 0.0 {
        return Err(Error::InvalidArgument("shooting needs distinct endpoints".into()));
    }
    if !(t_max > 0.0) {
        return Err(Error::InvalidArgument("T_max must be positive".into()));
    }
    let d = s.dim();
    let roots: Vec<Root> = (0..n_starts)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64));
            let xi0 = loop {
                let v: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let a = s.principal_symbol(&CotangentPoint::new(x.clone(), v.clone()));
                if a > 0.01 * v.norm_squared() {
                    break v * (0.5 / a.sqrt());
                }
            };
            let t0 = t_max * rng.random_range(0.05..1.0);
            let (xi, t, _) =
                levenberg_marquardt(s, x, y, xi0, t0, t_max, cfg.coarse_dt, cfg.max_iter, 1e-6)?;
            let (xi, t, res) = levenberg_marquardt(s, x, y, xi, t, t_max, cfg.dt, 8, cfg.tol_residual)?;
            (t <= t_max).then_some(Root { t, xi, residual: res })
        })
        .collect();
    let converged = roots.len();
    let mut roots = roots;
    roots.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.residual.total_cmp(&b.residual)));
    let mut entries: Vec<SpectrumEntry> = Vec::new();
    for r in roots {
        match entries.last_mut() {
            Some(e) if (r.t - e.length).abs() <= cfg.tol_len => {
                e.hits += 1;
                if r.residual < e.residual {
                    e.residual = r.residual;
                    e.covector = r.xi;
                }
            }
            _ => entries.push(SpectrumEntry { length: r.t, covector: r.xi, residual: r.residual, hits: 1 }),
        }
    }
    Ok(LengthSpectrum {
        entries,
        budget: SearchBudget { n_starts, seed: cfg.seed, t_max, dt: cfg.dt, converged },
    })
}
