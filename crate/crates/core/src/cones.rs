//! Propagation cones Γ_m on M = T*(ℝ × X): half-lines ±ℝ⁺H_p away from the
//! doubly characteristic set, and the convex cone ℝ⁺(∂_t + B) on it.
//!
//! Tangent vectors of M are ordered (t, τ, x, ξ) and have length 2d + 2.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hull;
use crate::linalg::{self, apply_j, omega};
use crate::srstruct::{CotangentPoint, ExtendedPoint, SubRiemannianStructure, Symbol};

/// Scale-invariant threshold for |τ| and a when classifying Σ_(2).
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Relative slack on p = τ² − a before a point counts as outside {p ≥ 0}.
pub const DOMAIN_TOL: f64 = 1e-8;
/// Default membership tolerance.
pub const CONE_TOL: f64 = 1e-9;
/// Default number of sampled directions for the F-hull.
pub const DEFAULT_NZ: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    HalfLinePlus,
    HalfLineMinus,
    Degenerate,
}

/// Symmetric bilinear form on ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        assert!(matrix.is_square(), "quadratic form needs a square matrix");
        let asym = (&matrix - matrix.transpose()).abs().max();
        assert!(asym <= 1e-12 * (1.0 + matrix.abs().max()), "matrix is not symmetric (defect {asym:e})");
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Self { matrix: sym }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eval(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.matrix * v))
    }

    pub fn bilinear(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        v.dot(&(&self.matrix * w))
    }

    pub fn rank(&self) -> usize {
        linalg::rank(&self.matrix)
    }

    pub fn kernel_basis(&self) -> DMatrix<f64> {
        linalg::null_space(&self.matrix)
    }

    pub fn range_basis(&self) -> DMatrix<f64> {
        linalg::range_basis(&self.matrix)
    }

    pub fn pinv(&self) -> DMatrix<f64> {
        linalg::pinv(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.symmetric_eigenvalues().min()
    }
}

/// Q*(η') = sup_{η ∉ ker Q} η'(η)² / Q(η): η'ᵀ Q⁺ η' on (ker Q)^⊥, +∞ elsewhere.
pub fn dual_form(q: &QuadraticForm, eta: &DVector<f64>) -> f64 {
    dual_with(&q.kernel_basis(), &q.pinv(), eta)
}

fn dual_with(kernel: &DMatrix<f64>, pinv: &DMatrix<f64>, eta: &DVector<f64>) -> f64 {
    let n = eta.norm();
    if n == 0.0 {
        return 0.0;
    }
    if kernel.ncols() > 0 && (kernel.transpose() * eta).norm() > 1e-8 * n {
        return f64::INFINITY;
    }
    eta.dot(&(pinv * eta)).max(0.0)
}

/// Membership of (ξ₀', η') in the polar of Λ = {ξ₀ ≥ Q(η)^{1/2}}.
pub fn polar_membership(q: &QuadraticForm, xi0: f64, eta: &DVector<f64>, tol: f64) -> bool {
    let qs = dual_form(q, eta);
    qs.is_finite() && -xi0 >= qs.sqrt() - tol
}

/// F with ω(Y, FZ) = a_m(Y, Z); F = J⁻¹Q = −JQ.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    matrix: DMatrix<f64>,
}

impl FundamentalMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.matrix * z
    }

    pub fn rank(&self) -> usize {
        linalg::rank(&self.matrix)
    }

    pub fn image_basis(&self) -> DMatrix<f64> {
        linalg::range_basis(&self.matrix)
    }

    /// |ω(FY, Z) + ω(Y, FZ)|, which vanishes for symmetric Q.
    pub fn antisymmetry_defect(&self, y: &DVector<f64>, z: &DVector<f64>) -> f64 {
        (omega(&self.apply(y), z) + omega(y, &self.apply(z))).abs()
    }
}

pub fn fundamental_matrix(q: &QuadraticForm) -> FundamentalMatrix {
    assert!(q.dim() % 2 == 0, "the fundamental matrix needs an even-dimensional form");
    let mut f = DMatrix::zeros(q.dim(), q.dim());
    for c in 0..q.dim() {
        let col = q.matrix().column(c).into_owned();
        f.set_column(c, &(-apply_j(&col)));
    }
    FundamentalMatrix { matrix: f }
}

/// Classify m ∈ M into the three regimes of the cone field.
pub fn classify_point(s: &SubRiemannianStructure, m: &ExtendedPoint) -> Result<Regime> {
    let xi2 = m.pt.xi.norm_squared();
    if xi2 == 0.0 && m.tau == 0.0 {
        return Err(Error::ZeroCovector);
    }
    let a = s.principal_symbol(&m.pt);
    if m.tau.abs() <= DEGENERACY_TOL * xi2.sqrt() && a <= DEGENERACY_TOL * xi2 {
        return Ok(Regime::Degenerate);
    }
    let p = m.tau * m.tau - a;
    if p < -DOMAIN_TOL * (m.tau * m.tau + a) {
        return Err(Error::OutsideDomain { p });
    }
    Ok(if m.tau > 0.0 { Regime::HalfLinePlus } else { Regime::HalfLineMinus })
}

/// ½ Hess a at a point of {a = 0}, assembled as Σ ∇h_i ∇h_iᵀ.
pub fn hessian_half(s: &SubRiemannianStructure, pt: &CotangentPoint) -> Result<QuadraticForm> {
    let xi2 = pt.xi.norm_squared();
    if xi2 == 0.0 {
        return Err(Error::ZeroCovector);
    }
    let a = s.principal_symbol(pt);
    if a > DEGENERACY_TOL * xi2 {
        return Err(Error::NotDoublyCharacteristic { a });
    }
    let n = 2 * s.dim();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..s.n_fields() {
        let g = s.momentum_gradient(i, pt);
        q += &g * g.transpose();
    }
    Ok(QuadraticForm::new(q))
}

/// H_p = 2τ∂_t − H_a as a tangent vector of M.
pub fn hp_vector(s: &SubRiemannianStructure, m: &ExtendedPoint) -> DVector<f64> {
    let ha = s.hamiltonian_field(&Symbol::Principal, &m.pt);
    let mut v = DVector::zeros(ha.len() + 2);
    v[0] = 2.0 * m.tau;
    v.rows_mut(2, ha.len()).copy_from(&(-ha));
    v
}

/// Γ_m at a point with a half-line cone.
#[derive(Debug, Clone)]
pub struct HalfLine {
    pub regime: Regime,
    /// ±H_p(m), oriented so that its ∂_t component is non-negative.
    pub direction: DVector<f64>,
}

impl HalfLine {
    pub fn defect(&self, v: &DVector<f64>) -> f64 {
        let nv = v.norm();
        if nv == 0.0 {
            return 0.0;
        }
        let g = self.direction.normalize();
        let along = v.dot(&g);
        if along < 0.0 {
            return 1.0 - along / nv;
        }
        (v - &g * along).norm() / nv
    }
}

/// Γ_m at a point of Σ_(2).
#[derive(Debug, Clone)]
pub struct DegenerateCone {
    pub point: CotangentPoint,
    pub hessian: QuadraticForm,
    /// Orthonormal basis of ker a_m.
    pub kernel_basis: DMatrix<f64>,
    /// Orthonormal basis of ker(a_m)^{⊥ω} = span{H_{h_i}(m)}.
    pub perp_basis: DMatrix<f64>,
    /// H_{h_i}(m) for every field.
    pub frame: Vec<DVector<f64>>,
    pub fundamental: FundamentalMatrix,
    pinv: DMatrix<f64>,
}

impl DegenerateCone {
    pub fn new(s: &SubRiemannianStructure, pt: &CotangentPoint) -> Result<Self> {
        let hessian = hessian_half(s, pt)?;
        let frame: Vec<DVector<f64>> =
            (0..s.n_fields()).map(|i| s.hamiltonian_field(&Symbol::Momentum(i), pt)).collect();
        let n = 2 * s.dim();
        let perp_basis = if frame.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            linalg::range_basis(&DMatrix::from_columns(&frame))
        };
        Ok(Self {
            point: pt.clone(),
            kernel_basis: hessian.kernel_basis(),
            perp_basis,
            fundamental: fundamental_matrix(&hessian),
            pinv: hessian.pinv(),
            hessian,
            frame,
        })
    }

    pub fn dim(&self) -> usize {
        self.point.dim()
    }

    /// a_m*(𝓘(b)) for b ∈ T(T*X); +∞ when 𝓘(b) ∉ (ker a_m)^⊥.
    pub fn speed_sq(&self, b: &DVector<f64>) -> f64 {
        // 𝓘(b) = ω(b, ·) = Jᵀ b = −J b
        let eta = -apply_j(b);
        dual_with(&self.kernel_basis, &self.pinv, &eta)
    }

    /// Orthogonal projection onto span{H_{h_i}}.
    pub fn project_perp(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.perp_basis * (self.perp_basis.transpose() * b)
    }

    /// Relative amount by which v fails the closed-form membership test.
    pub fn defect(&self, v: &DVector<f64>) -> f64 {
        let nv = v.norm();
        if nv == 0.0 {
            return 0.0;
        }
        let t = v[0];
        let w = v.rows(2, v.len() - 2).into_owned();
        let wp = self.project_perp(&w);
        let residual = (&w - &wp).norm();
        let speed = self.speed_sq(&wp).sqrt();
        let worst = (-t).max(v[1].abs()).max(residual).max(speed - t);
        (worst / nv).max(0.0)
    }

    /// F-generators FZ / a_m(Z)^{1/2}: `n_z` sampled directions on the unit sphere of
    /// the quotient by ker a_m plus the frame-aligned directions Q⁺∇h_i, all with both signs.
    pub fn f_generators(&self, n_z: usize) -> Vec<DVector<f64>> {
        let range = self.hessian.range_basis();
        let r = range.ncols();
        if r == 0 {
            return vec![DVector::zeros(2 * self.dim())];
        }
        let qr = range.transpose() * self.hessian.matrix() * &range;
        let eig = SymmetricEigen::new(qr);
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt()));
        let whiten = &range * &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();

        let mut zs: Vec<DVector<f64>> = sphere_points(r, n_z).into_iter().map(|c| &whiten * c).collect();
        for g in &self.frame {
            // Q⁺ ∇h_i, with ∇h_i = J H_{h_i}
            zs.push(&self.pinv * apply_j(g));
        }
        let mut out = Vec::with_capacity(2 * zs.len());
        for z in zs {
            let az = self.hessian.eval(&z);
            if az <= 0.0 {
                continue;
            }
            let g = self.fundamental.apply(&z) / az.sqrt();
            out.push(-&g);
            out.push(g);
        }
        out
    }
}

/// Representation of Γ_m in the regime of m.
#[derive(Debug, Clone)]
pub enum ConeRep {
    HalfLine(HalfLine),
    Degenerate(DegenerateCone),
}

impl ConeRep {
    pub fn regime(&self) -> Regime {
        match self {
            ConeRep::HalfLine(h) => h.regime,
            ConeRep::Degenerate(_) => Regime::Degenerate,
        }
    }

    pub fn defect(&self, v: &DVector<f64>) -> f64 {
        match self {
            ConeRep::HalfLine(h) => h.defect(v),
            ConeRep::Degenerate(c) => c.defect(v),
        }
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.defect(v) <= tol
    }

    pub fn as_degenerate(&self) -> Option<&DegenerateCone> {
        match self {
            ConeRep::Degenerate(c) => Some(c),
            ConeRep::HalfLine(_) => None,
        }
    }
}

pub fn cone_at(s: &SubRiemannianStructure, m: &ExtendedPoint) -> Result<ConeRep> {
    match classify_point(s, m)? {
        Regime::Degenerate => Ok(ConeRep::Degenerate(DegenerateCone::new(s, &m.pt)?)),
        regime => {
            let hp = hp_vector(s, m);
            let direction = if regime == Regime::HalfLinePlus { hp } else { -hp };
            Ok(ConeRep::HalfLine(HalfLine { regime, direction }))
        }
    }
}

fn check_tangent(s: &SubRiemannianStructure, v: &DVector<f64>) {
    assert_eq!(v.len(), 2 * s.dim() + 2, "tangent vectors of M have length 2d+2");
}

/// v ∈ Γ_m, using the closed-form dual-form test in the degenerate regime.
pub fn cone_membership(s: &SubRiemannianStructure, m: &ExtendedPoint, v: &DVector<f64>) -> Result<bool> {
    cone_membership_tol(s, m, v, CONE_TOL)
}

pub fn cone_membership_tol(s: &SubRiemannianStructure, m: &ExtendedPoint, v: &DVector<f64>, tol: f64) -> Result<bool> {
    check_tangent(s, v);
    Ok(cone_at(s, m)?.contains(v, tol))
}

/// ℝ⁺(∂_t + conv(generators)) as a membership oracle.
#[derive(Debug, Clone)]
pub struct HullCone {
    pub generators: Vec<DVector<f64>>,
}

impl HullCone {
    pub fn from_fundamental(cone: &DegenerateCone, n_z: usize) -> Self {
        Self { generators: cone.f_generators(n_z) }
    }

    /// Hull of Clarke samples H_{√a}(m_j); the zero vector is added since B is symmetric.
    pub fn from_samples(mut samples: Vec<DVector<f64>>, dim2: usize) -> Self {
        samples.push(DVector::zeros(dim2));
        Self { generators: samples }
    }

    pub fn distance(&self, b: &DVector<f64>) -> f64 {
        hull::hull_distance(&self.generators, b)
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        let nv = v.norm();
        if nv == 0.0 {
            return true;
        }
        let t = v[0];
        if t < -tol * nv || v[1].abs() > tol * nv {
            return false;
        }
        let w = v.rows(2, v.len() - 2).into_owned();
        if t <= tol * nv {
            return w.norm() <= tol * nv;
        }
        let b = w / t;
        self.distance(&b) <= tol * (1.0 + b.norm())
    }
}

/// Membership through the convex hull of F-generators.
pub fn cone_via_f(s: &SubRiemannianStructure, m: &ExtendedPoint, v: &DVector<f64>) -> Result<bool> {
    check_tangent(s, v);
    let cone = degenerate_cone(s, m)?;
    Ok(HullCone::from_fundamental(&cone, DEFAULT_NZ).contains(v, 1e-8))
}

fn degenerate_cone(s: &SubRiemannianStructure, m: &ExtendedPoint) -> Result<DegenerateCone> {
    match classify_point(s, m)? {
        Regime::Degenerate => DegenerateCone::new(s, &m.pt),
        _ => Err(Error::NotDoublyCharacteristic { a: s.principal_symbol(&m.pt) }),
    }
}

/// H_{√a}(m_j) = ½H_a(m_j)/a(m_j)^{1/2} at random points m_j = m + εZ for each radius ε.
pub fn clarke_sample(
    s: &SubRiemannianStructure,
    m: &ExtendedPoint,
    n_samples: usize,
    radii: &[f64],
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    degenerate_cone(s, m)?;
    let n = 2 * s.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let z: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        dirs.push(z.normalize());
    }
    Ok(clarke_along(s, &m.pt, &dirs, radii))
}

/// Clarke samples along caller-chosen displacement directions.
pub fn clarke_along(
    s: &SubRiemannianStructure,
    pt: &CotangentPoint,
    dirs: &[DVector<f64>],
    radii: &[f64],
) -> Vec<DVector<f64>> {
    let xi2 = pt.xi.norm_squared().max(1.0);
    let mut out = Vec::new();
    for &eps in radii {
        for z in dirs {
            let mj = pt.shifted(z, eps);
            let a = s.principal_symbol(&mj);
            if a <= 1e-6 * eps * eps * xi2 {
                continue;
            }
            out.push(s.hamiltonian_field(&Symbol::Principal, &mj) / (2.0 * a.sqrt()));
        }
    }
    out
}

/// w ∈ Λ_m: dτ(w) ≥ 0 and p_m(w) = dτ(w)² − a_m(w) ≥ 0.
pub fn lambda_cone_membership(s: &SubRiemannianStructure, m: &ExtendedPoint, w: &DVector<f64>) -> Result<bool> {
    check_tangent(s, w);
    let cone = degenerate_cone(s, m)?;
    Ok(lambda_contains(&cone.hessian, w, CONE_TOL))
}

pub fn lambda_contains(hessian: &QuadraticForm, w: &DVector<f64>, tol: f64) -> bool {
    let scale = w.norm_squared();
    let wp = w.rows(2, w.len() - 2).into_owned();
    let pm = w[1] * w[1] - hessian.eval(&wp);
    w[1] >= -tol * scale.sqrt() && pm >= -tol * scale
}

/// ω_M(v, w) with ω_M = dτ∧dt + dξ∧dx.
pub fn omega_m(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let n = v.len() - 2;
    v[1] * w[0] - v[0] * w[1] + omega(&v.rows(2, n).into_owned(), &w.rows(2, n).into_owned())
}

/// `n` well-spread unit vectors in ℝ^r (exact for r ≤ 3, seeded otherwise).
pub fn sphere_points(r: usize, n: usize) -> Vec<DVector<f64>> {
    let n = n.max(1);
    match r {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..n)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                DVector::from_vec(vec![th.cos(), th.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                    let rad = (1.0 - z * z).sqrt();
                    let th = golden * k as f64;
                    DVector::from_vec(vec![rad * th.cos(), rad * th.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..n)
                .map(|_| {
                    let v: DVector<f64> = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
                    v.normalize()
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srstruct::{heisenberg, martinet};

    fn heis_m0() -> ExtendedPoint {
        ExtendedPoint::new(0.0, 0.0, CotangentPoint::from_slices(&[0.0; 3], &[0.0, 0.0, 1.0]))
    }

    fn lift(t: f64, b: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(b.len() + 2);
        v[0] = t;
        v.rows_mut(2, b.len()).copy_from(b);
        v
    }

    #[test]
    fn classification_examples() {
        let s = heisenberg();
        assert_eq!(classify_point(&s, &heis_m0()).unwrap(), Regime::Degenerate);
        let m = ExtendedPoint::new(0.0, 1.0, heis_m0().pt);
        assert_eq!(classify_point(&s, &m).unwrap(), Regime::HalfLinePlus);
        let m = ExtendedPoint::new(0.0, -1.0, heis_m0().pt);
        assert_eq!(classify_point(&s, &m).unwrap(), Regime::HalfLineMinus);
        let m = ExtendedPoint::new(0.0, 0.0, CotangentPoint::from_slices(&[0.0; 3], &[1.0, 0.0, 0.0]));
        assert!(matches!(classify_point(&s, &m), Err(Error::OutsideDomain { .. })));
        let m = ExtendedPoint::new(0.0, 0.0, CotangentPoint::from_slices(&[0.0; 3], &[0.0; 3]));
        assert_eq!(classify_point(&s, &m), Err(Error::ZeroCovector));
    }

    #[test]
    fn heisenberg_hessian_by_hand() {
        let q = hessian_half(&heisenberg(), &heis_m0().pt).unwrap();
        // (dξ_1 − ½dy)² + (dξ_2 + ½dx)² in (x, y, z, ξ_1, ξ_2, ξ_3)
        let mut e = DMatrix::zeros(6, 6);
        let g1 = DVector::from_vec(vec![0.0, -0.5, 0.0, 1.0, 0.0, 0.0]);
        let g2 = DVector::from_vec(vec![0.5, 0.0, 0.0, 0.0, 1.0, 0.0]);
        e += &g1 * g1.transpose() + &g2 * g2.transpose();
        assert!((q.matrix() - e).norm() < 1e-15);
        assert_eq!(q.rank(), 2);
        let off = CotangentPoint::from_slices(&[0.0; 3], &[1.0, 0.0, 0.0]);
        assert!(matches!(hessian_half(&heisenberg(), &off), Err(Error::NotDoublyCharacteristic { .. })));
    }

    #[test]
    fn dual_form_examples() {
        let id = QuadraticForm::new(DMatrix::identity(3, 3));
        assert!((dual_form(&id, &DVector::from_vec(vec![1.0, 0.0, 0.0])) - 1.0).abs() < 1e-14);
        let q = QuadraticForm::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])));
        assert!((dual_form(&q, &DVector::from_vec(vec![2.0, 0.0])) - 4.0).abs() < 1e-14);
        assert_eq!(dual_form(&q, &DVector::from_vec(vec![0.0, 1.0])), f64::INFINITY);
    }

    #[test]
    fn polar_examples() {
        let q = QuadraticForm::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])));
        assert!(polar_membership(&q, -1.0, &DVector::from_vec(vec![1.0, 0.0]), 1e-12));
        assert!(polar_membership(&q, 0.0, &DVector::zeros(2), 1e-12));
        assert!(!polar_membership(&q, -1.0, &DVector::from_vec(vec![0.0, 1.0]), 1e-12));
    }

    #[test]
    fn membership_examples() {
        let s = heisenberg();
        let m0 = heis_m0();
        let h1 = s.hamiltonian_field(&Symbol::Momentum(0), &m0.pt);
        let cases = [(DVector::zeros(6), true), (h1.clone(), true), (&h1 * 1.5, false)];
        for (b, expected) in cases {
            let v = lift(1.0, &b);
            assert_eq!(cone_membership(&s, &m0, &v).unwrap(), expected);
            assert_eq!(cone_via_f(&s, &m0, &v).unwrap(), expected);
        }
        // off-span tangent direction
        let v = lift(1.0, &DVector::from_vec(vec![0.0, 0.0, 0.1, 0.0, 0.0, 0.0]));
        assert!(!cone_membership(&s, &m0, &v).unwrap());
        assert!(!cone_via_f(&s, &m0, &v).unwrap());
    }

    #[test]
    fn generators_lie_on_the_boundary() {
        let s = martinet();
        let pt = CotangentPoint::from_slices(&[0.0, 0.3, -1.0], &[0.0, 0.0, 1.0]);
        let cone = DegenerateCone::new(&s, &pt).unwrap();
        for g in cone.f_generators(32) {
            assert!((cone.speed_sq(&g) - 1.0).abs() < 1e-9);
            let v = lift(1.0, &g);
            assert!(cone.defect(&v) < 1e-9);
        }
    }

    #[test]
    fn fundamental_examples() {
        let f = fundamental_matrix(&QuadraticForm::new(DMatrix::zeros(4, 4)));
        assert_eq!(f.matrix().norm(), 0.0);
        let cone = DegenerateCone::new(&heisenberg(), &heis_m0().pt).unwrap();
        assert_eq!(cone.fundamental.rank(), 2);
        assert!(linalg::subspace_gap(&cone.fundamental.image_basis(), &cone.perp_basis) < 1e-10);
        let y = DVector::from_fn(6, |k, _| (k as f64).sin());
        let z = DVector::from_fn(6, |k, _| (k as f64 * 0.7).cos());
        assert!(cone.fundamental.antisymmetry_defect(&y, &z) < 1e-12);
        // ω(Y, FZ) = a_m(Y, Z)
        let lhs = omega(&y, &cone.fundamental.apply(&z));
        assert!((lhs - cone.hessian.bilinear(&y, &z)).abs() < 1e-12);
    }

    #[test]
    fn lambda_examples() {
        let s = heisenberg();
        let m0 = heis_m0();
        let mut w = DVector::zeros(8);
        w[1] = 1.0;
        assert!(lambda_cone_membership(&s, &m0, &w).unwrap());
        assert!(!lambda_cone_membership(&s, &m0, &(-&w)).unwrap());
        // a_m(w') = 2 via two unit ξ components
        w[5] = 1.0;
        w[6] = 1.0;
        assert!(!lambda_cone_membership(&s, &m0, &w).unwrap());
    }

    #[test]
    fn clarke_converges_to_first_field() {
        let s = heisenberg();
        let m0 = heis_m0();
        let cone = DegenerateCone::new(&s, &m0.pt).unwrap();
        // Z with FZ along H_{h_1}: Z = Q⁺∇h_1
        let z = &cone.hessian.pinv() * apply_j(&cone.frame[0]);
        let target = &cone.frame[0] / cone.speed_sq(&cone.frame[0]).sqrt();
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let v = &clarke_along(&s, &m0.pt, &[z.clone()], &[eps])[0];
            let dev = (v - &target).norm();
            assert!(dev < last);
            assert!(dev < 10.0 * eps);
            last = dev;
        }
        // kernel directions contribute nothing
        let k = cone.kernel_basis.column(0).into_owned();
        let along_kernel = clarke_along(&s, &m0.pt, &[k], &[1e-4]);
        assert!(along_kernel.iter().all(|v| v.norm() < 1e-2) || along_kernel.is_empty());
    }
}
