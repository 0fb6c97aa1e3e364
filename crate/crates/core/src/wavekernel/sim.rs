//! Leapfrog simulation of u_tt + A_h u = 0 with u(0) = 0, u_t(0) = Gaussian bump.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detect::{detect_singularities, Arrival, DetectorConfig};
use super::grid::{Grid, WaveOperator};
use crate::error::{Error, Result};
use crate::geodesics::integrate_normal;
use crate::srstruct::{CotangentPoint, StructureRecord, SubRiemannianStructure};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    pub resolution: Vec<usize>,
    pub source: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
    /// Explicit box (lo, hi); otherwise sized from the sub-Riemannian ball of radius `duration`.
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
    /// Source width; defaults to 3h on each axis.
    pub sigma: Option<f64>,
    pub cfl: f64,
    pub amplitude: f64,
    /// Relative boundary amplitude that counts as contamination.
    pub contamination_tol: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(duration: f64, resolution: Vec<usize>, source: Vec<f64>, probes: Vec<Vec<f64>>) -> Self {
        Self {
            duration,
            resolution,
            source,
            probes,
            bounds: None,
            sigma: None,
            cfl: 0.4,
            amplitude: 1.0,
            contamination_tol: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Scenario file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub preset: Option<String>,
    pub structure: Option<StructureRecord>,
    pub duration: f64,
    pub resolution: Resolution,
    pub source: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
    #[serde(rename = "box")]
    pub bounds: Option<BoxRecord>,
    pub sigma: Option<f64>,
    pub cfl: Option<f64>,
    pub amplitude: Option<f64>,
    pub contamination_tol: Option<f64>,
    pub seed: Option<u64>,
}

impl ScenarioRecord {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario records serialize")
    }

    pub fn structure(&self) -> Result<SubRiemannianStructure> {
        match (&self.preset, &self.structure) {
            (Some(name), None) => SubRiemannianStructure::preset(name),
            (None, Some(rec)) => SubRiemannianStructure::from_record(rec),
            _ => Err(Error::Parse("scenario needs exactly one of `preset` or `[structure]`".into())),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let d = self.source.len();
        let resolution = match &self.resolution {
            Resolution::Uniform(n) => vec![*n; d],
            Resolution::PerAxis(v) => v.clone(),
        };
        let mut sc = Scenario::new(self.duration, resolution, self.source.clone(), self.probes.clone());
        sc.bounds = self.bounds.as_ref().map(|b| (b.lo.clone(), b.hi.clone()));
        sc.sigma = self.sigma;
        if let Some(c) = self.cfl {
            sc.cfl = c;
        }
        if let Some(a) = self.amplitude {
            sc.amplitude = a;
        }
        if let Some(t) = self.contamination_tol {
            sc.contamination_tol = t;
        }
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        Ok(sc)
    }
}

#[derive(Debug, Clone)]
pub struct WaveField {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub time: f64,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub dt: f64,
    pub sigma: Vec<f64>,
    pub times: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
    /// series[k][n] = u(t_n, probe k).
    pub series: Vec<Vec<f64>>,
    /// Discrete energy at the half steps.
    pub energy: Vec<f64>,
    pub energy_drift: f64,
    /// Largest boundary-to-interior amplitude ratio seen.
    pub boundary_ratio: f64,
    pub field: WaveField,
}

impl SimulationResult {
    /// Default detection window: twice the widest source width.
    pub fn default_window(&self) -> f64 {
        2.0 * self.sigma.iter().cloned().fold(0.0, f64::max)
    }

    pub fn arrivals(&self, probe: usize, cfg: &DetectorConfig) -> Vec<Arrival> {
        detect_singularities(&self.series[probe], self.dt, self.default_window(), cfg)
    }
}

/// Largest |x_j − c_j| over normal geodesics of length ≤ `radius` from x0.
fn ball_extent_from(s: &SubRiemannianStructure, x0: &[f64], c: &[f64], radius: f64, seed: u64) -> Vec<f64> {
    let d = s.dim();
    let mut ext = vec![0.0f64; d];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DVector::from_column_slice(x0);
    let mut covectors = Vec::new();
    while covectors.len() < 256 {
        let mut xi = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        // spread the covector scale so that tightly curved geodesics are included
        let k: f64 = StandardNormal.sample(&mut rng);
        xi[d - 1] *= (1.5 * k).exp();
        let a = s.principal_symbol(&CotangentPoint::new(x.clone(), xi.clone()));
        if a > 1e-12 * xi.norm_squared() {
            covectors.push(xi / (2.0 * a.sqrt()));
        }
    }
    for xi in covectors {
        let pt = CotangentPoint::new(x.clone(), xi);
        // tightly curved geodesics may need a finer step; skip those that still fail
        let Some(arc) = [200.0, 2000.0].iter().find_map(|k| integrate_normal(s, &pt, radius, radius / k).ok()) else {
            continue;
        };
        for (_, p) in &arc.samples {
            for j in 0..d {
                ext[j] = ext[j].max((p.x[j] - c[j]).abs());
            }
        }
    }
    ext
}

/// Half-widths of a box around x0 holding the sub-Riemannian balls of radius `radius`
/// centred at x0 and at the points x0 ± `spread`_j e_j.
pub fn ball_extent(s: &SubRiemannianStructure, x0: &[f64], radius: f64, spread: &[f64], seed: u64) -> Vec<f64> {
    let d = s.dim();
    let mut ext = ball_extent_from(s, x0, x0, radius, seed);
    for j in 0..d {
        for sign in [-1.0, 1.0] {
            if spread[j] == 0.0 {
                continue;
            }
            let mut c = x0.to_vec();
            c[j] += sign * spread[j];
            let e = ball_extent_from(s, &c, x0, radius, seed);
            // the spread itself is covered by the source margin
            for k in 0..d {
                let own = if k == j { spread[j] } else { 0.0 };
                ext[k] = ext[k].max(e[k] - own);
            }
        }
    }
    let top = ext.iter().cloned().fold(0.0, f64::max).max(1e-3);
    ext.into_iter().map(|e| e.max(0.05 * top)).collect()
}

fn build_grid(s: &SubRiemannianStructure, sc: &Scenario) -> Result<(Grid, Vec<f64>)> {
    let d = s.dim();
    if sc.resolution.len() != d || sc.source.len() != d || sc.probes.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidArgument(format!("scenario points and resolution must have dimension {d}")));
    }
    if let Some((lo, hi)) = &sc.bounds {
        let grid = Grid::new(lo.clone(), hi.clone(), sc.resolution.clone())?;
        let sigma = match sc.sigma {
            Some(v) => vec![v; d],
            None => grid.h.iter().map(|h| 3.0 * h).collect(),
        };
        return Ok((grid, sigma));
    }
    // ball fits with 20% slack, plus a 4σ margin on each side
    let n_min = sc.resolution.iter().cloned().min().unwrap_or(0) as f64;
    let guess = ball_extent(s, &sc.source, sc.duration, &vec![0.0; d], sc.seed);
    let spread: Vec<f64> = guess
        .iter()
        .map(|e| match sc.sigma {
            Some(v) => 4.0 * v,
            None => 4.0 * 3.0 * 2.4 * e / (n_min - 25.0).max(1.0),
        })
        .collect();
    let ext = ball_extent(s, &sc.source, sc.duration, &spread, sc.seed);
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    let mut sigma = Vec::with_capacity(d);
    for j in 0..d {
        let n = sc.resolution[j] as f64;
        let half = 1.2 * ext[j];
        let (h, sg) = match sc.sigma {
            Some(v) => ((2.0 * half + 8.0 * v) / (n - 1.0), v),
            None => {
                if n <= 25.0 {
                    return Err(Error::InvalidArgument("automatic box sizing needs more than 25 points per axis".into()));
                }
                let h = 2.0 * half / (n - 25.0);
                (h, 3.0 * h)
            }
        };
        let width = h * (n - 1.0);
        lo.push(sc.source[j] - width / 2.0);
        hi.push(sc.source[j] + width / 2.0);
        sigma.push(sg);
    }
    Ok((Grid::new(lo, hi, sc.resolution.clone())?, sigma))
}

fn gaussian_bump(grid: &Grid, center: &[f64], sigma: &[f64], amplitude: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let p = grid.point(k);
            let e: f64 = p.iter().zip(center).zip(sigma).map(|((x, c), s)| (x - c) * (x - c) / (2.0 * s * s)).sum();
            (-e).exp()
        })
        .collect();
    let mass: f64 = g.par_iter().sum::<f64>() * grid.cell_volume();
    let scale = if mass > 0.0 { amplitude / mass } else { 0.0 };
    g.par_iter_mut().for_each(|v| *v *= scale);
    g
}

fn max_abs(v: &[f64]) -> f64 {
    v.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max)
}

/// Run the scenario and record u at the probes after every step.
pub fn simulate(s: &SubRiemannianStructure, sc: &Scenario) -> Result<SimulationResult> {
    if !(sc.duration > 0.0) || !sc.duration.is_finite() {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    if !(sc.cfl > 0.0) {
        return Err(Error::InvalidArgument("cfl factor must be positive".into()));
    }
    let (grid, sigma) = build_grid(s, sc)?;
    let op = WaveOperator::new(s, grid.clone())?;
    let n_steps = (sc.duration / op.stable_dt(sc.cfl)).ceil().max(1.0) as usize;
    let dt = sc.duration / n_steps as f64;
    let mut value = dt * dt * op.lambda_bound();
    if value >= 4.0 {
        // the bound is pessimistic; fall back to an estimate of the top eigenvalue
        value = dt * dt * op.lambda_estimate(60) * 1.05;
        if value >= 4.0 {
            return Err(Error::StabilityViolation { value });
        }
    }

    let n = grid.len();
    let g = gaussian_bump(&grid, &sc.source, &sigma, sc.amplitude);
    let mut ag = vec![0.0; n];
    op.apply(&g, &mut ag);
    let mut u_prev = vec![0.0; n];
    // u(dt) = dt·g − dt³/6·A g
    let mut u: Vec<f64> = g.par_iter().zip(&ag).map(|(gv, av)| dt * gv - dt * dt * dt / 6.0 * av).collect();
    let mut au = vec![0.0; n];
    let boundary: Vec<usize> = (0..n).filter(|&k| grid.on_boundary(k, 1)).collect();

    let record = |u: &[f64]| -> Vec<f64> { sc.probes.iter().map(|p| grid.interpolate(u, p)).collect() };
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps + 1); sc.probes.len()];
    let mut times = Vec::with_capacity(n_steps + 1);
    for (k, v) in record(&u_prev).into_iter().enumerate() {
        series[k].push(v);
    }
    times.push(0.0);
    for (k, v) in record(&u).into_iter().enumerate() {
        series[k].push(v);
    }
    times.push(dt);

    let vol = grid.cell_volume();
    let mut energy = Vec::with_capacity(n_steps);
    let mut boundary_ratio: f64 = 0.0;
    for step in 1..=n_steps {
        op.apply(&u, &mut au);
        // E^{n-1/2} = ½|(uⁿ − uⁿ⁻¹)/dt|² + ½⟨A uⁿ, uⁿ⁻¹⟩
        let (kin, pot) = u
            .par_iter()
            .zip(&u_prev)
            .zip(&au)
            .map(|((a, b), c)| {
                let v = (a - b) / dt;
                (v * v, c * b)
            })
            .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
        energy.push(0.5 * (kin + pot) * vol);
        if step == n_steps {
            break;
        }
        // u_prev ← uⁿ⁺¹ = 2uⁿ − uⁿ⁻¹ − dt² A uⁿ, then swap
        u_prev.par_iter_mut().zip(&u).zip(&au).for_each(|((p, c), a)| *p = 2.0 * c - *p - dt * dt * a);
        std::mem::swap(&mut u, &mut u_prev);
        let t = (step + 1) as f64 * dt;
        for (k, v) in record(&u).into_iter().enumerate() {
            series[k].push(v);
        }
        times.push(t);
        if step % 10 == 0 || step + 1 == n_steps {
            let inner = max_abs(&u);
            if inner > 0.0 {
                let edge = boundary.iter().map(|&k| u[k].abs()).fold(0.0, f64::max);
                let ratio = edge / inner;
                boundary_ratio = boundary_ratio.max(ratio);
                if ratio > sc.contamination_tol {
                    return Err(Error::BoundaryContamination { time: t });
                }
            }
        }
    }
    let e0 = energy[0];
    let energy_drift = if e0 > 0.0 {
        energy.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max)
    } else {
        energy.iter().map(|e| e.abs()).fold(0.0, f64::max)
    };
    Ok(SimulationResult {
        dt,
        sigma,
        times,
        probes: sc.probes.clone(),
        series,
        energy,
        energy_drift,
        boundary_ratio,
        field: WaveField { grid, u, u_prev, time: n_steps as f64 * dt, dt },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srstruct::{euclidean, heisenberg};

    #[test]
    fn zero_bump_gives_zero_field() {
        let s = heisenberg();
        let mut sc = Scenario::new(0.3, vec![31; 3], vec![0.0; 3], vec![vec![0.2, 0.0, 0.0]]);
        sc.amplitude = 0.0;
        let r = simulate(&s, &sc).unwrap();
        assert!(r.series[0].iter().all(|v| *v == 0.0));
        assert!(r.field.u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn energy_is_conserved() {
        let s = euclidean(3);
        let sc = Scenario::new(0.5, vec![41; 3], vec![0.0; 3], vec![vec![0.3, 0.0, 0.0]]);
        let r = simulate(&s, &sc).unwrap();
        assert!(r.energy_drift < 1e-2, "{}", r.energy_drift);
        assert_eq!(r.times.len(), r.series[0].len());
    }

    #[test]
    fn unstable_cfl_is_rejected() {
        let s = euclidean(2);
        let mut sc = Scenario::new(0.2, vec![31; 2], vec![0.0; 2], vec![]);
        sc.cfl = 5.0;
        assert!(matches!(simulate(&s, &sc), Err(Error::StabilityViolation { .. })));
    }

    #[test]
    fn small_box_is_contaminated() {
        let s = euclidean(2);
        let mut sc = Scenario::new(1.0, vec![41; 2], vec![0.0; 2], vec![]);
        sc.bounds = Some((vec![-0.5; 2], vec![0.5; 2]));
        assert!(matches!(simulate(&s, &sc), Err(Error::BoundaryContamination { .. })));
    }

    #[test]
    fn scenario_files_round_trip() {
        let text = r#"
preset = "heisenberg"
duration = 1.2
resolution = 64
source = [0.0, 0.0, 0.0]
probes = [[1.0, 0.0, 0.0]]
"#;
        let rec = ScenarioRecord::from_toml(text).unwrap();
        assert_eq!(rec.scenario().unwrap().resolution, vec![64; 3]);
        assert_eq!(ScenarioRecord::from_toml(&rec.to_toml()).unwrap(), rec);
        assert!(matches!(ScenarioRecord::from_toml("duration = ["), Err(Error::Parse(_))));
    }
}
