//! Singular support of the wave kernel t ↦ K_G(t, x, y): prediction from normal
//! and singular lengths, and a finite-difference simulator to compare against.

mod detect;
mod grid;
mod sim;

pub use detect::{detect_singularities, Arrival, DetectorConfig};
pub use grid::{Grid, WaveOperator};
pub use sim::{simulate, Scenario, ScenarioRecord, SimulationResult, WaveField};

use nalgebra::DVector;
use serde::Serialize;

use crate::abnormal::{annihilator_residual, min_singular_length, SingularBudget, SingularLength, ANNIHILATOR_TOL};
use crate::error::{Error, Result};
use crate::geodesics::{integrate_normal, shoot, LengthSpectrum, ShootConfig};
use crate::srstruct::{CotangentPoint, SubRiemannianStructure};

#[derive(Debug, Clone)]
pub struct PredictBudget {
    pub n_starts: usize,
    pub shoot: ShootConfig,
    pub singular: SingularBudget,
}

impl Default for PredictBudget {
    fn default() -> Self {
        Self { n_starts: 64, shoot: ShootConfig::default(), singular: SingularBudget::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SingSuppPrediction {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    /// Shortest singular curve found; `length = None` is the +∞ flag.
    pub singular: SingularLength,
    pub lengths: LengthSpectrum,
    /// Times ±ℓ, ℓ in the length spectrum, inside the validity interval by more than
    /// the length-merging tolerance.
    pub predicted_times: Vec<f64>,
    /// Predictions hold on (−validity, validity).
    pub validity: f64,
}

impl SingSuppPrediction {
    pub fn ts(&self) -> f64 {
        self.singular.value()
    }

    /// Whether `t` lies within `rel` (relative) of a predicted time.
    pub fn explains(&self, t: f64, rel: f64) -> bool {
        self.predicted_times.iter().any(|p| (t - p).abs() <= rel * p.abs())
    }
}

/// Predicted singular times of t ↦ K_G(t, x, y) on (−T_s, T_s), capped at `t_max`.
pub fn predict(
    s: &SubRiemannianStructure,
    x: &DVector<f64>,
    y: &DVector<f64>,
    t_max: f64,
    budget: &PredictBudget,
) -> Result<SingSuppPrediction> {
    if (x - y).norm() == 0.0 {
        return Err(Error::InvalidArgument("prediction needs x != y".into()));
    }
    let lengths = shoot(s, x, y, t_max, budget.n_starts, &budget.shoot)?;
    let singular = min_singular_length(s, x, y, &SingularBudget { t_max: budget.singular.t_max.max(t_max), ..budget.singular.clone() })?;
    let validity = singular.value().min(t_max);
    let mut predicted_times: Vec<f64> = Vec::new();
    for l in lengths.lengths() {
        if l < validity - budget.shoot.tol_len {
            predicted_times.push(l);
            predicted_times.push(-l);
        }
    }
    predicted_times.sort_by(f64::total_cmp);
    Ok(SingSuppPrediction { x: x.clone(), y: y.clone(), singular, lengths, predicted_times, validity })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConnectionKind {
    Hamiltonian,
    AbnormalLift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfDecision {
    pub kind: Option<ConnectionKind>,
    pub reason: String,
}

impl WfDecision {
    pub fn accepted(&self) -> bool {
        self.kind.is_some()
    }

    fn reject(reason: impl Into<String>) -> Self {
        Self { kind: None, reason: reason.into() }
    }
}

#[derive(Debug, Clone)]
pub struct WfBudget {
    /// Relative tolerance for τ² = a and for landing on (x, ξ).
    pub tol: f64,
    pub dt: f64,
    pub singular: SingularBudget,
}

impl Default for WfBudget {
    fn default() -> Self {
        Self { tol: 1e-6, dt: 1e-3, singular: SingularBudget::default() }
    }
}

/// Whether (t, x, y, τ, ξ, −η) can lie in WF(K_G).
#[allow(clippy::too_many_arguments)]
pub fn wf_candidate(
    s: &SubRiemannianStructure,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    tau: f64,
    xi: &DVector<f64>,
    eta: &DVector<f64>,
    budget: &WfBudget,
) -> Result<WfDecision> {
    if tau == 0.0 && xi.norm() == 0.0 {
        return Err(Error::ZeroCovector);
    }
    let px = CotangentPoint::new(x.clone(), xi.clone());
    let py = CotangentPoint::new(y.clone(), eta.clone());
    let (ax, ay) = (s.principal_symbol(&px), s.principal_symbol(&py));
    let scale = (tau * tau).max(ax).max(ay).max(f64::MIN_POSITIVE);
    if (tau * tau - ax).abs() > budget.tol * scale || (tau * tau - ay).abs() > budget.tol * scale {
        return Ok(WfDecision::reject(format!("tau^2 = {:.6e} but a(x,xi) = {ax:.6e}, a(y,eta) = {ay:.6e}", tau * tau)));
    }

    if ay > 0.0 {
        let arc = integrate_normal(s, &py, t, budget.dt)?;
        let end = arc.endpoint();
        let target = px.to_vector();
        let miss = (end.to_vector() - &target).norm();
        if miss <= budget.tol * (1.0 + target.norm()) {
            return Ok(WfDecision { kind: Some(ConnectionKind::Hamiltonian), reason: format!("e^(tH_a) lands within {miss:.3e}") });
        }
    } else if (x - y).norm() == 0.0 && (xi - eta).norm() <= budget.tol * (1.0 + xi.norm()) {
        // a = 0: H_a vanishes and the Hamiltonian flow is stationary
        return Ok(WfDecision { kind: Some(ConnectionKind::Hamiltonian), reason: "stationary point of H_a".into() });
    }

    if tau.abs() <= budget.tol * xi.norm().max(eta.norm()) {
        if annihilator_residual(s, &px) > ANNIHILATOR_TOL || annihilator_residual(s, &py) > ANNIHILATOR_TOL {
            return Ok(WfDecision::reject("tau = 0 but a covector does not annihilate the distribution"));
        }
        if (x - y).norm() == 0.0 {
            return Ok(WfDecision::reject("no singular curve from a point to itself is searched"));
        }
        let found = min_singular_length(s, y, x, &budget.singular)?;
        return Ok(match found.length {
            Some(l) if l >= t.abs() - budget.singular.tol_hit.max(budget.tol) => WfDecision {
                kind: Some(ConnectionKind::AbnormalLift),
                reason: format!("singular curve of length {l:.6} >= |t| = {:.6}", t.abs()),
            },
            Some(l) => WfDecision::reject(format!("shortest singular curve found has length {l:.6} < |t| = {:.6}", t.abs())),
            None => WfDecision::reject(found.certificate.statement()),
        });
    }
    Ok(WfDecision::reject("no Hamiltonian connection and tau != 0"))
}
